//! Config resolution: built-in defaults, then the config file, then CLI flags.

use std::path::PathBuf;

use gridloop_core::{ConfigFile, Mode, PipelineConfig, Scalar, SegmentationConfig};
use serde::Serialize;

use crate::GlobalOpts;

#[derive(Clone, Debug)]
pub struct Settings {
    pub seg: SegmentationConfig<Scalar>,
    pub pipe: PipelineConfig<Scalar>,
    pub omega: f64,
    pub out: PathBuf,
    pub seed: u64,
}

pub fn resolve(opts: &GlobalOpts) -> anyhow::Result<Settings> {
    let mut seg = SegmentationConfig::<Scalar>::default();
    let mut pipe = PipelineConfig::<Scalar>::default();
    let mut spatial_norm_pinned = false;

    if let Some(path) = &opts.config {
        let file = ConfigFile::load(path)?;
        spatial_norm_pinned = file.get("spatial_norm").is_some();
        file.apply(&mut seg, &mut pipe)?;
    }

    if let Some(sp) = opts.sp {
        seg.sp = sp;
        if !spatial_norm_pinned {
            seg.spatial_norm = sp as Scalar;
        }
    }
    if let Some(alpha) = opts.alpha {
        pipe.alpha = alpha;
    }
    if let Some(beta) = opts.beta {
        pipe.beta = beta;
    }
    if let Some(mode) = &opts.mode {
        pipe.mode = mode.parse()?;
    }
    if let Some(gap) = opts.temporal_gap {
        pipe.temporal_gap = gap;
    }
    if let Some(top_n) = opts.top_n {
        pipe.top_n = top_n;
    }
    if let Some(accept) = opts.accept_threshold {
        pipe.accept_threshold = accept;
    }

    seg.validate()?;
    pipe.validate()?;

    Ok(Settings {
        seg,
        pipe,
        omega: opts.omega.unwrap_or(10.0),
        out: opts.out.clone(),
        seed: opts.seed.unwrap_or(1),
    })
}

/// Flat snapshot of every tunable, embedded in the run manifest.
#[derive(Clone, Debug, Serialize)]
pub struct ConfigSnapshot {
    pub sp: usize,
    pub spatial_norm: f64,
    pub intensity_norm: f64,
    pub max_iters: usize,
    pub center_shift_eps: f64,
    pub alpha: f64,
    pub beta: f64,
    pub temporal_gap: usize,
    pub top_n: usize,
    pub accept_threshold: f64,
    pub mode: String,
}

impl ConfigSnapshot {
    pub fn new(settings: &Settings, mode: Mode) -> Self {
        Self {
            sp: settings.seg.sp,
            spatial_norm: settings.seg.spatial_norm,
            intensity_norm: settings.seg.intensity_norm,
            max_iters: settings.seg.max_iters,
            center_shift_eps: settings.seg.center_shift_eps,
            alpha: settings.pipe.alpha,
            beta: settings.pipe.beta,
            temporal_gap: settings.pipe.temporal_gap,
            top_n: settings.pipe.top_n,
            accept_threshold: settings.pipe.accept_threshold,
            mode: mode.to_string(),
        }
    }
}

/// Run manifest written atomically at the end of `detect`; re-running with
/// the recorded config reproduces the detection log bit for bit (timing
/// columns aside).
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub dataset_root: PathBuf,
    pub out_dir: PathBuf,
    pub config: ConfigSnapshot,
    pub frames: usize,
    pub width: u32,
    pub height: u32,
    pub nodes: Option<usize>,
    pub wall_seconds: f64,
    pub mean_frame_ms: f64,
    pub mean_retrieval_ms: f64,
}
