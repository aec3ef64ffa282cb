//! Per-cell intensity histograms and the similarity score built on them.
//!
//! A segmented image is summarized as an `M x N` grid of 256-bin intensity
//! histograms over raw pixel counts. Two descriptors are compared by summing
//! the per-cell L1 histogram distances; the result is mapped onto `[0, 1]` as
//! `1 - D / (2 * total_pixels)` so that identical images score 1 and images
//! with fully disjoint intensity mass score 0. The mapping is monotone, so
//! rankings are unchanged from the raw distance.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gray::GrayImage;
use crate::scalar::Real;
use crate::segmentation::Segmentation;

pub const BINS: usize = 256;

/// Intensity histogram of one grid cell; bin `b` counts member pixels with
/// intensity `b`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellHistogram {
    pub bins: [u32; BINS],
}

impl CellHistogram {
    pub fn empty() -> Self {
        Self { bins: [0; BINS] }
    }

    /// Total pixel count in the cell.
    pub fn mass(&self) -> u64 {
        self.bins.iter().map(|&b| b as u64).sum()
    }
}

impl Default for CellHistogram {
    fn default() -> Self {
        Self::empty()
    }
}

/// Grid-of-histograms descriptor of one image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Lsgd {
    /// Row-major by (cell_row, cell_col), length `m_rows * n_cols`.
    pub cells: Vec<CellHistogram>,
    pub m_rows: usize,
    pub n_cols: usize,
    pub total_pixels: u32,
}

impl Lsgd {
    /// Sum of all histogram masses; equals `total_pixels` for any descriptor
    /// produced by [`extract_lsgd`].
    pub fn mass(&self) -> u64 {
        self.cells.iter().map(CellHistogram::mass).sum()
    }

    pub fn same_geometry(&self, other: &Lsgd) -> bool {
        self.m_rows == other.m_rows
            && self.n_cols == other.n_cols
            && self.total_pixels == other.total_pixels
    }
}

/// Bounded similarity between two descriptors; 1 means identical.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct SimScore<T> {
    pub value: T,
}

impl<T: Real> SimScore<T> {
    pub fn zero() -> Self {
        Self { value: T::zero() }
    }
}

/// Builds the descriptor by counting each pixel's intensity into the
/// histogram of its assigned cell.
pub fn extract_lsgd<T>(image: &GrayImage, seg: &Segmentation<T>) -> Result<Lsgd> {
    let total = image.total_pixels() as usize;
    if seg.labels.len() != total {
        return Err(Error::Input(format!(
            "segmentation covers {} pixels but image has {total}",
            seg.labels.len()
        )));
    }
    let cell_count = seg.cell_count();
    let mut cells = vec![CellHistogram::empty(); cell_count];
    for (idx, &label) in seg.labels.iter().enumerate() {
        let cell = cells.get_mut(label as usize).ok_or_else(|| {
            Error::Input(format!("label {label} exceeds cell count {cell_count}"))
        })?;
        cell.bins[image.pixels()[idx] as usize] += 1;
    }
    Ok(Lsgd {
        cells,
        m_rows: seg.m_rows,
        n_cols: seg.n_cols,
        total_pixels: image.total_pixels(),
    })
}

/// L1 distance between two cell histograms.
pub fn l1_cell_distance(a: &CellHistogram, b: &CellHistogram) -> u64 {
    a.bins
        .iter()
        .zip(b.bins.iter())
        .map(|(&x, &y)| (x as i64 - y as i64).unsigned_abs())
        .sum()
}

/// Summed per-cell L1 distance mapped to a `[0, 1]` similarity.
pub fn sim_score<T: Real>(q: &Lsgd, d: &Lsgd) -> Result<SimScore<T>> {
    if !q.same_geometry(d) {
        return Err(Error::Input(format!(
            "descriptor geometry mismatch: {}x{}/{} vs {}x{}/{}",
            q.m_rows, q.n_cols, q.total_pixels, d.m_rows, d.n_cols, d.total_pixels
        )));
    }
    let dist: u64 = q
        .cells
        .iter()
        .zip(d.cells.iter())
        .map(|(a, b)| l1_cell_distance(a, b))
        .sum();
    let denom = 2 * q.total_pixels as u64;
    let value = T::one() - T::from_u64(dist).unwrap() / T::from_u64(denom).unwrap();
    Ok(SimScore { value })
}

const HEADER_LEN: usize = 12;

impl Lsgd {
    /// Flat binary layout: `M`, `N`, `total_pixels` as little-endian `u32`,
    /// followed by `M * N * 256` little-endian `u32` counts, row-major by
    /// (cell_row, cell_col, bin).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.cells.len() * BINS * 4);
        out.extend_from_slice(&(self.m_rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_cols as u32).to_le_bytes());
        out.extend_from_slice(&self.total_pixels.to_le_bytes());
        for cell in &self.cells {
            for &bin in &cell.bins {
                out.extend_from_slice(&bin.to_le_bytes());
            }
        }
        out
    }

    pub fn byte_len(&self) -> usize {
        HEADER_LEN + self.cells.len() * BINS * 4
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let read_u32 = |off: usize| -> u32 {
            u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap())
        };
        if bytes.len() < HEADER_LEN {
            return Err(Error::Input("descriptor blob shorter than header".into()));
        }
        let m_rows = read_u32(0) as usize;
        let n_cols = read_u32(4) as usize;
        let total_pixels = read_u32(8);
        let expected = HEADER_LEN + m_rows * n_cols * BINS * 4;
        if bytes.len() != expected {
            return Err(Error::Input(format!(
                "descriptor blob of {} bytes, expected {expected} for {m_rows}x{n_cols}",
                bytes.len()
            )));
        }
        let mut cells = Vec::with_capacity(m_rows * n_cols);
        let mut off = HEADER_LEN;
        for _ in 0..m_rows * n_cols {
            let mut hist = CellHistogram::empty();
            for bin in hist.bins.iter_mut() {
                *bin = read_u32(off);
                off += 4;
            }
            cells.push(hist);
        }
        let lsgd = Lsgd {
            cells,
            m_rows,
            n_cols,
            total_pixels,
        };
        if lsgd.mass() != total_pixels as u64 {
            return Err(Error::Input(format!(
                "descriptor mass {} does not match declared pixel count {total_pixels}",
                lsgd.mass()
            )));
        }
        Ok(lsgd)
    }
}

/// Shared descriptor handle; frames are referenced from both the pipeline
/// history and the node database without copying.
pub type SharedLsgd = Arc<Lsgd>;
