//! Tunable parameters and shared identifiers.
//!
//! Both config structs validate their invariants explicitly; `segment` and the
//! pipeline refuse to run on invalid values. A flat `key=value` text file can
//! override any field (see [`ConfigFile`]), and CLI flags override the file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::gray::GrayImage;
use crate::scalar::Real;

/// Zero-based ordinal of a frame within a sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameId(pub u32);

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Parameters of the superpixel-grid segmentation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SegmentationConfig<T> {
    /// Segmentation scale: side length of the seed grid cells, in pixels.
    pub sp: usize,
    /// Normalizer for the spatial term of the fuse distance.
    pub spatial_norm: T,
    /// Normalizer for the intensity term of the fuse distance.
    pub intensity_norm: T,
    /// Upper bound on clustering iterations.
    pub max_iters: usize,
    /// Convergence threshold on the max center displacement, in pixels.
    pub center_shift_eps: T,
}

impl<T: Real> SegmentationConfig<T> {
    /// Defaults for a given scale; `spatial_norm` tracks `sp`.
    pub fn with_sp(sp: usize) -> Self {
        Self {
            sp,
            spatial_norm: T::from_usize(sp).unwrap(),
            intensity_norm: T::from_f64(10.0).unwrap(),
            max_iters: 10,
            center_shift_eps: T::from_f64(0.5).unwrap(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        // NaN fails every comparison below, so it is rejected too.
        let positive = |v: T| v > T::zero();
        if self.sp < 2 {
            return Err(Error::Config(format!("sp must be >= 2, got {}", self.sp)));
        }
        if !positive(self.spatial_norm) || !positive(self.intensity_norm) {
            return Err(Error::Config(
                "spatial_norm and intensity_norm must be positive".into(),
            ));
        }
        if self.max_iters == 0 {
            return Err(Error::Config("max_iters must be >= 1".into()));
        }
        if !(self.center_shift_eps.is_finite() && self.center_shift_eps >= T::zero()) {
            return Err(Error::Config("center_shift_eps must be non-negative".into()));
        }
        Ok(())
    }

    /// Full validation against the image the config will segment.
    pub fn validate_for(&self, image: &GrayImage) -> Result<()> {
        self.validate()?;
        let min_dim = image.width().min(image.height()) as usize;
        if self.sp > min_dim {
            return Err(Error::Config(format!(
                "sp exceeds image dimensions: sp={} but image is {}x{}",
                self.sp,
                image.width(),
                image.height()
            )));
        }
        Ok(())
    }
}

impl<T: Real> Default for SegmentationConfig<T> {
    fn default() -> Self {
        Self::with_sp(40)
    }
}

/// Retrieval strategy for prior frames.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Score the query against every eligible prior frame.
    Exhaustive,
    /// Route the query through the dynamic-node database.
    DynamicNodes,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mode::Exhaustive => write!(f, "exhaustive"),
            Mode::DynamicNodes => write!(f, "nodes"),
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exhaustive" => Ok(Mode::Exhaustive),
            "nodes" => Ok(Mode::DynamicNodes),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected 'exhaustive' or 'nodes')"
            ))),
        }
    }
}

/// Parameters of the per-frame detection pipeline.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig<T> {
    /// First-image gate: a node qualifies only if the similarity between the
    /// query and the node's founding frame exceeds this.
    pub alpha: T,
    /// Average gate: the mean similarity over all node members must exceed this.
    pub beta: T,
    /// Number of most recent frames excluded from loop candidacy.
    pub temporal_gap: usize,
    /// Length of the ranked candidate list kept for verification.
    pub top_n: usize,
    /// Final loop decision: the best candidate must score at least this.
    pub accept_threshold: T,
    pub mode: Mode,
}

impl<T: Real> PipelineConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = T::zero()..=T::one();
        if !unit.contains(&self.alpha) {
            return Err(Error::Config("alpha must be in [0, 1]".into()));
        }
        if !unit.contains(&self.accept_threshold) {
            return Err(Error::Config("accept_threshold must be in [0, 1]".into()));
        }
        if !(self.beta.is_finite() && self.beta >= T::zero()) {
            return Err(Error::Config("beta must be non-negative".into()));
        }
        if self.top_n == 0 {
            return Err(Error::Config("top_n must be >= 1".into()));
        }
        Ok(())
    }
}

impl<T: Real> Default for PipelineConfig<T> {
    fn default() -> Self {
        Self {
            alpha: T::from_f64(0.6).unwrap(),
            beta: T::from_f64(0.65).unwrap(),
            temporal_gap: 50,
            top_n: 10,
            accept_threshold: T::zero(),
            mode: Mode::DynamicNodes,
        }
    }
}

/// Flat `key=value` config file contents, one key per line.
///
/// Keys are exactly the field names of [`SegmentationConfig`] and
/// [`PipelineConfig`]. Blank lines and lines starting with `#` are ignored.
#[derive(Clone, Debug, Default)]
pub struct ConfigFile {
    values: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "sp",
    "spatial_norm",
    "intensity_norm",
    "max_iters",
    "center_shift_eps",
    "alpha",
    "beta",
    "temporal_gap",
    "top_n",
    "accept_threshold",
    "mode",
];

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason: format!("expected key=value, got '{line}'"),
            })?;
            let key = key.trim();
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: i + 1,
                    reason: format!("unknown config key '{key}'"),
                });
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    fn parsed<V: FromStr>(&self, key: &str) -> Result<Option<V>>
    where
        V::Err: fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<V>().map(Some).map_err(|e| {
                Error::Config(format!("invalid value '{raw}' for config key '{key}': {e}"))
            }),
        }
    }

    /// Applies the file's values on top of the given configs. The file may
    /// set `sp` without `spatial_norm`; in that case `spatial_norm` follows
    /// the new `sp`.
    pub fn apply<T: Real>(
        &self,
        seg: &mut SegmentationConfig<T>,
        pipe: &mut PipelineConfig<T>,
    ) -> Result<()> {
        if let Some(sp) = self.parsed::<usize>("sp")? {
            *seg = SegmentationConfig {
                sp,
                spatial_norm: T::from_usize(sp).unwrap(),
                ..*seg
            };
        }
        if let Some(v) = self.parsed::<f64>("spatial_norm")? {
            seg.spatial_norm = T::from_f64(v).unwrap();
        }
        if let Some(v) = self.parsed::<f64>("intensity_norm")? {
            seg.intensity_norm = T::from_f64(v).unwrap();
        }
        if let Some(v) = self.parsed::<usize>("max_iters")? {
            seg.max_iters = v;
        }
        if let Some(v) = self.parsed::<f64>("center_shift_eps")? {
            seg.center_shift_eps = T::from_f64(v).unwrap();
        }
        if let Some(v) = self.parsed::<f64>("alpha")? {
            pipe.alpha = T::from_f64(v).unwrap();
        }
        if let Some(v) = self.parsed::<f64>("beta")? {
            pipe.beta = T::from_f64(v).unwrap();
        }
        if let Some(v) = self.parsed::<usize>("temporal_gap")? {
            pipe.temporal_gap = v;
        }
        if let Some(v) = self.parsed::<usize>("top_n")? {
            pipe.top_n = v;
        }
        if let Some(v) = self.parsed::<f64>("accept_threshold")? {
            pipe.accept_threshold = T::from_f64(v).unwrap();
        }
        if let Some(v) = self.parsed::<Mode>("mode")? {
            pipe.mode = v;
        }
        Ok(())
    }
}
