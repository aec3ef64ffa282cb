//! Sequence and ground-truth loading.
//!
//! A sequence is a directory of PNG/JPEG files with numeric stems
//! (`000000.png`, `000001.png`, ...). Ground truth is either a CSV of
//! positive pairs (`a,b` per line) or a square 0/1 matrix text file.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::config::FrameId;
use crate::error::{Error, Result};
use crate::gray::{to_grayscale, GrayImage};

/// Ordered listing of one image sequence.
#[derive(Clone, Debug)]
pub struct SequenceManifest {
    pub root: PathBuf,
    /// Frames in ascending numeric-stem order, re-indexed from 0.
    pub frames: Vec<(FrameId, PathBuf)>,
    pub width: u32,
    pub height: u32,
}

impl SequenceManifest {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Decodes one frame, enforcing the manifest geometry.
    pub fn load_frame(&self, index: usize) -> Result<GrayImage> {
        let (_, path) = self.frames.get(index).ok_or_else(|| {
            Error::Input(format!("frame index {index} out of range 0..{}", self.len()))
        })?;
        let img = decode_gray(path)?;
        if (img.width(), img.height()) != (self.width, self.height) {
            return Err(Error::Load {
                path: path.clone(),
                reason: format!(
                    "image is {}x{} but the sequence is {}x{}",
                    img.width(),
                    img.height(),
                    self.width,
                    self.height
                ),
            });
        }
        Ok(img)
    }
}

fn is_image_ext(ext: &str) -> bool {
    matches!(ext.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg")
}

/// Scans `root` for image files, sorts by numeric stem, and validates a
/// sampled subset of dimensions. Full dimension enforcement happens lazily in
/// [`SequenceManifest::load_frame`].
pub fn load_sequence(root: &Path) -> Result<SequenceManifest> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::Load {
        path: root.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut frames: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Error::Load {
                path: root.to_path_buf(),
                reason: e.to_string(),
            })?
            .path();
        if !path.is_file() {
            continue;
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if is_image_ext(e) => {}
            _ => continue,
        }
        let stem = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default();
        let number: u64 = stem.parse().map_err(|_| Error::Load {
            path: path.clone(),
            reason: format!("non-numeric filename stem '{stem}'"),
        })?;
        frames.push((number, path));
    }
    if frames.is_empty() {
        return Err(Error::Load {
            path: root.to_path_buf(),
            reason: "directory contains no decodable image files".into(),
        });
    }
    frames.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    for pair in frames.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::Load {
                path: pair[1].1.clone(),
                reason: format!("duplicate frame stem {}", pair[1].0),
            });
        }
    }

    // Dimension spot-check on up to 8 evenly spaced frames.
    let (width, height) = image::image_dimensions(&frames[0].1).map_err(|e| Error::Load {
        path: frames[0].1.clone(),
        reason: e.to_string(),
    })?;
    let step = (frames.len() / 8).max(1);
    let mut sample: Vec<usize> = (0..frames.len()).step_by(step).collect();
    sample.push(frames.len() - 1);
    for &i in &sample {
        let path = &frames[i].1;
        let (w, h) = image::image_dimensions(path).map_err(|e| Error::Load {
            path: path.clone(),
            reason: e.to_string(),
        })?;
        if (w, h) != (width, height) {
            return Err(Error::Load {
                path: path.clone(),
                reason: format!("mixed dimensions: {w}x{h} vs {width}x{height}"),
            });
        }
    }

    Ok(SequenceManifest {
        root: root.to_path_buf(),
        frames: frames
            .into_iter()
            .enumerate()
            .map(|(i, (_, path))| (FrameId(i as u32), path))
            .collect(),
        width,
        height,
    })
}

/// Decodes an 8-bit image file to grayscale. RGB inputs go through the BT.601
/// conversion; 16-bit and float inputs are rejected.
pub fn decode_gray(path: &Path) -> Result<GrayImage> {
    let dynimg = image::open(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let (w, h) = (dynimg.width(), dynimg.height());
    match dynimg {
        image::DynamicImage::ImageLuma8(img) => GrayImage::new(w, h, img.into_raw()),
        image::DynamicImage::ImageLumaA8(img) => {
            let pixels = img.pixels().map(|p| p.0[0]).collect();
            GrayImage::new(w, h, pixels)
        }
        image::DynamicImage::ImageRgb8(img) => {
            let triples: Vec<[u8; 3]> = img.pixels().map(|p| p.0).collect();
            to_grayscale(&triples, w, h)
        }
        image::DynamicImage::ImageRgba8(img) => {
            let triples: Vec<[u8; 3]> = img.pixels().map(|p| [p.0[0], p.0[1], p.0[2]]).collect();
            to_grayscale(&triples, w, h)
        }
        other => Err(Error::Load {
            path: path.to_path_buf(),
            reason: format!(
                "unsupported pixel format {:?}: only 8-bit grayscale/RGB images are accepted",
                other.color()
            ),
        }),
    }
}

/// Set of true loop-closure pairs plus the frame-distance tolerance used when
/// judging retrievals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GroundTruth {
    /// Unordered positive pairs, stored as `(min, max)`.
    pub positives: BTreeSet<(u32, u32)>,
    /// A retrieved frame `r` is correct for query `q` iff some partner `p`
    /// of `q` satisfies `|r - p| <= tolerance`.
    pub tolerance: u32,
}

pub const DEFAULT_TOLERANCE: u32 = 10;

impl GroundTruth {
    pub fn new(pairs: impl IntoIterator<Item = (u32, u32)>, tolerance: u32) -> Self {
        let positives = pairs
            .into_iter()
            .map(|(a, b)| (a.min(b), a.max(b)))
            .collect();
        Self {
            positives,
            tolerance,
        }
    }

    pub fn partners(&self, q: u32) -> Vec<u32> {
        self.positives
            .iter()
            .filter_map(|&(a, b)| {
                if a == q {
                    Some(b)
                } else if b == q {
                    Some(a)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Whether retrieving `r` for query `q` counts as a true positive.
    pub fn is_correct(&self, q: u32, r: u32) -> bool {
        self.partners(q)
            .iter()
            .any(|&p| (r as i64 - p as i64).unsigned_abs() <= self.tolerance as u64)
    }

    /// CSV form: one `a,b` line per pair, `a < b`, sorted.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (a, b) in &self.positives {
            out.push_str(&format!("{a},{b}\n"));
        }
        out
    }
}

/// Loads ground truth from a `.csv` pair list or a `.txt` 0/1 matrix,
/// dispatching on the file extension. The matrix form is symmetrized and its
/// diagonal ignored.
pub fn load_ground_truth(path: &Path) -> Result<GroundTruth> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    match ext.as_str() {
        "csv" => parse_pair_csv(&text, path),
        "txt" => parse_matrix(&text, path),
        other => Err(Error::Load {
            path: path.to_path_buf(),
            reason: format!("unknown ground-truth extension '{other}' (expected .csv or .txt)"),
        }),
    }
}

fn parse_pair_csv(text: &str, path: &Path) -> Result<GroundTruth> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| err(format!("expected 'a,b', got '{line}'")))?;
        let a: u32 = a
            .trim()
            .parse()
            .map_err(|e| err(format!("bad frame id '{a}': {e}")))?;
        let b: u32 = b
            .trim()
            .parse()
            .map_err(|e| err(format!("bad frame id '{b}': {e}")))?;
        if a == b {
            return Err(err(format!("self-pair ({a},{b}) is not a loop closure")));
        }
        pairs.push((a, b));
    }
    Ok(GroundTruth::new(pairs, DEFAULT_TOLERANCE))
}

fn parse_matrix(text: &str, path: &Path) -> Result<GroundTruth> {
    let rows: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let size = rows.len();
    let mut pairs = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        let err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            reason,
        };
        let entries: Vec<&str> = row.split_whitespace().collect();
        if entries.len() != size {
            return Err(err(format!(
                "ragged matrix: row has {} entries, expected {size}",
                entries.len()
            )));
        }
        for (j, entry) in entries.iter().enumerate() {
            match *entry {
                "0" => {}
                "1" => {
                    if i != j {
                        pairs.push((i as u32, j as u32));
                    }
                }
                other => {
                    return Err(err(format!("matrix entries must be 0 or 1, got '{other}'")))
                }
            }
        }
    }
    Ok(GroundTruth::new(pairs, DEFAULT_TOLERANCE))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn write_png(path: &Path, w: u32, h: u32, v: u8) {
        let img = image::GrayImage::from_pixel(w, h, image::Luma([v]));
        img.save(path).unwrap();
    }

    #[test]
    fn frames_sort_by_numeric_stem() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["000002.png", "000000.png", "000001.png"] {
            write_png(&dir.path().join(name), 8, 8, 3);
        }
        let manifest = load_sequence(dir.path()).unwrap();
        assert_eq!(manifest.len(), 3);
        let stems: Vec<String> = manifest
            .frames
            .iter()
            .map(|(_, p)| p.file_stem().unwrap().to_string_lossy().into_owned())
            .collect();
        assert_eq!(stems, vec!["000000", "000001", "000002"]);
        assert_eq!(manifest.frames[0].0, FrameId(0));
        assert_eq!(manifest.frames[2].0, FrameId(2));
    }

    #[test]
    fn single_image_manifest() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("000000.png"), 16, 8, 0);
        let manifest = load_sequence(dir.path()).unwrap();
        assert_eq!(manifest.len(), 1);
        assert_eq!((manifest.width, manifest.height), (16, 8));
    }

    #[test]
    fn empty_directory_is_a_load_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_sequence(dir.path()),
            Err(Error::Load { .. })
        ));
    }

    #[test]
    fn non_numeric_stem_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("frame_a.png"), 8, 8, 0);
        assert!(load_sequence(dir.path()).is_err());
    }

    #[test]
    fn mixed_dimensions_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        write_png(&dir.path().join("000000.png"), 8, 8, 0);
        write_png(&dir.path().join("000001.png"), 9, 8, 0);
        assert!(load_sequence(dir.path()).is_err());
    }

    #[test]
    fn sixteen_bit_images_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("000000.png");
        let img: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
            image::ImageBuffer::from_pixel(4, 4, image::Luma([1000u16]));
        img.save(&path).unwrap();
        assert!(decode_gray(&path).is_err());
    }

    #[test]
    fn pair_csv_examples() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.csv");
        std::fs::write(&path, "10,2\n30,5\n").unwrap();
        let gt = load_ground_truth(&path).unwrap();
        let expected: BTreeSet<(u32, u32)> = [(2, 10), (5, 30)].into_iter().collect();
        assert_eq!(gt.positives, expected);
    }

    #[test]
    fn self_pairs_are_parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.csv");
        std::fs::write(&path, "4,4\n").unwrap();
        assert!(matches!(
            load_ground_truth(&path),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn identity_matrix_has_no_positives() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.txt");
        std::fs::write(&path, "1 0 0\n0 1 0\n0 0 1\n").unwrap();
        let gt = load_ground_truth(&path).unwrap();
        assert!(gt.positives.is_empty());
    }

    #[test]
    fn one_sided_matrix_entry_symmetrizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.txt");
        std::fs::write(&path, "0 0 0 1\n0 0 0 0\n0 0 0 0\n0 0 0 0\n").unwrap();
        let gt = load_ground_truth(&path).unwrap();
        let expected: BTreeSet<(u32, u32)> = [(0, 3)].into_iter().collect();
        assert_eq!(gt.positives, expected);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.txt");
        std::fs::write(&path, "0 1\n1\n").unwrap();
        assert!(matches!(
            load_ground_truth(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn tolerance_drives_correctness() {
        let gt = GroundTruth::new([(10, 90)], 10);
        assert!(gt.is_correct(90, 10));
        assert!(gt.is_correct(90, 15));
        assert!(gt.is_correct(90, 0));
        assert!(!gt.is_correct(90, 21));
        assert!(!gt.is_correct(50, 10));
    }

    proptest! {
        #[test]
        fn csv_round_trip(pairs in prop::collection::vec((0u32..500, 0u32..500), 1..40)) {
            let pairs: Vec<(u32, u32)> = pairs.into_iter().filter(|(a, b)| a != b).collect();
            prop_assume!(!pairs.is_empty());
            let gt = GroundTruth::new(pairs, DEFAULT_TOLERANCE);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("gt.csv");
            std::fs::write(&path, gt.to_csv()).unwrap();
            let back = load_ground_truth(&path).unwrap();
            prop_assert_eq!(back.positives, gt.positives);
        }
    }
}
