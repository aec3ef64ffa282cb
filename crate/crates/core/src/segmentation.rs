//! Superpixel-grid segmentation.
//!
//! An image is seeded with one cluster center per fixed grid cell of side
//! `sp`, then pixels are reassigned to the center minimizing the fuse
//! distance (spatial + intensity, each scaled by its normalizer) and centers
//! move to the mean of their members, k-means style, until the centers stop
//! moving or `max_iters` is reached.
//!
//! Pixels are treated as unit squares sampled at their centers, so pixel
//! `(x, y)` sits at the point `(x + 0.5, y + 0.5)`. With that convention a
//! constant image keeps the exact seed-grid blocks: block boundaries never
//! tie between neighboring centers.
//!
//! New assignments are discovered inside each center's `+-sp` search window,
//! and a pixel's current center always stays in its candidate set even when
//! drift carries the window off the pixel. Keeping the incumbent is what
//! makes the post-assignment energy non-increasing from one iteration to the
//! next: reassignment never picks something worse than the status quo, and
//! moving a center to the mean of its members never raises their summed
//! squared fuse distance.

use crate::config::SegmentationConfig;
use crate::error::{Error, Result};
use crate::gray::GrayImage;
use crate::scalar::Real;

/// One cluster center. `(cell_row, cell_col)` names the seed grid cell the
/// center was born in and never changes; the descriptor grid is indexed by it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCenter<T> {
    pub x: T,
    pub y: T,
    pub intensity: T,
    pub cell_row: usize,
    pub cell_col: usize,
}

/// Converged segmentation of one image.
#[derive(Clone, Debug, PartialEq)]
pub struct Segmentation<T> {
    /// Per-pixel cell id, row-major. Cell id = `cell_row * n_cols + cell_col`.
    pub labels: Vec<u32>,
    pub centers: Vec<GridCenter<T>>,
    pub m_rows: usize,
    pub n_cols: usize,
    /// Sum of squared fuse distances under the final assignment.
    pub energy: T,
    /// Post-assignment energy of every iteration, in order.
    pub energy_history: Vec<T>,
    /// Number of assignment/update iterations actually run.
    pub iterations: usize,
}

impl<T> Segmentation<T> {
    pub fn cell_count(&self) -> usize {
        self.m_rows * self.n_cols
    }
}

/// Grid shape for an image at scale `sp`: `(rows, cols)` with
/// `rows = ceil(height / sp)` and `cols = ceil(width / sp)`.
pub fn grid_dims(width: u32, height: u32, sp: usize) -> (usize, usize) {
    let m = (height as usize).div_ceil(sp);
    let n = (width as usize).div_ceil(sp);
    (m, n)
}

/// Fuse distance between a center and a point `(x, y, intensity)`:
/// `sqrt((d_e / spatial_norm)^2 + (d_i / intensity_norm)^2)` where `d_e` is
/// the Euclidean pixel distance and `d_i` the absolute intensity difference.
pub fn fuse_distance<T: Real>(
    center: &GridCenter<T>,
    px: (T, T, T),
    config: &SegmentationConfig<T>,
) -> T {
    let dx = center.x - px.0;
    let dy = center.y - px.1;
    let de = (dx * dx + dy * dy).sqrt();
    let di = (center.intensity - px.2).abs();
    let s = de / config.spatial_norm;
    let i = di / config.intensity_norm;
    (s * s + i * i).sqrt()
}

/// Seeds one center per grid cell at the cell's geometric midpoint, with the
/// intensity of the pixel containing that midpoint.
pub fn init_centers<T: Real>(
    image: &GrayImage,
    config: &SegmentationConfig<T>,
) -> Result<Vec<GridCenter<T>>> {
    config.validate_for(image)?;
    let (m, n) = grid_dims(image.width(), image.height(), config.sp);
    let sp = config.sp;
    let w = image.width() as usize;
    let h = image.height() as usize;
    let mut centers = Vec::with_capacity(m * n);
    for row in 0..m {
        let y_lo = row * sp;
        let y_hi = ((row + 1) * sp).min(h);
        let mid_y = (y_lo + y_hi) as f64 * 0.5;
        for col in 0..n {
            let x_lo = col * sp;
            let x_hi = ((col + 1) * sp).min(w);
            let mid_x = (x_lo + x_hi) as f64 * 0.5;
            let px = (mid_x.round() as usize).min(w - 1) as u32;
            let py = (mid_y.round() as usize).min(h - 1) as u32;
            centers.push(GridCenter {
                x: T::from_f64(mid_x).unwrap(),
                y: T::from_f64(mid_y).unwrap(),
                intensity: T::from_u8(image.get(px, py)).unwrap(),
                cell_row: row,
                cell_col: col,
            });
        }
    }
    Ok(centers)
}

/// Integer pixel range `[lo, hi]` (inclusive) whose sample points `i + 0.5`
/// satisfy `|i + 0.5 - c| < sp`, clamped to `[0, dim)`. Empty when `lo > hi`.
fn window_range(c: f64, sp: usize, dim: usize) -> (usize, usize) {
    let sp = sp as f64;
    let lo = (c - sp - 0.5).floor() as i64 + 1;
    let hi = (c + sp - 0.5).ceil() as i64 - 1;
    let lo = lo.max(0) as usize;
    let hi = hi.min(dim as i64 - 1);
    if hi < 0 {
        (1, 0) // empty
    } else {
        (lo, hi as usize)
    }
}

/// Runs the full segmentation loop.
pub fn segment<T: Real>(image: &GrayImage, config: &SegmentationConfig<T>) -> Result<Segmentation<T>> {
    let mut centers = init_centers(image, config)?;
    let (m_rows, n_cols) = grid_dims(image.width(), image.height(), config.sp);
    let w = image.width() as usize;
    let h = image.height() as usize;
    let total = w * h;

    let mut labels = vec![u32::MAX; total];
    let mut best = vec![T::infinity(); total];
    let mut energy_history = Vec::new();
    let mut iterations = 0;

    for _ in 0..config.max_iters {
        iterations += 1;

        // Assignment. Each pixel starts from its incumbent center (when it
        // has one) re-scored against the moved centers, then the window scan
        // may replace it. Scanning centers in cell-id order and breaking
        // exact ties toward the lower cell id makes the result equal to an
        // argmin over candidates-plus-incumbent with the lowest-id tie rule.
        if iterations == 1 {
            labels.fill(u32::MAX);
            best.fill(T::infinity());
        } else {
            for (idx, (&label, slot)) in labels.iter().zip(best.iter_mut()).enumerate() {
                let center = &centers[label as usize];
                let px = T::from_f64((idx % w) as f64 + 0.5).unwrap();
                let py = T::from_f64((idx / w) as f64 + 0.5).unwrap();
                let pi = T::from_u8(image.pixels()[idx]).unwrap();
                *slot = fuse_distance(center, (px, py, pi), config);
            }
        }
        for (cid, center) in centers.iter().enumerate() {
            let cx = center.x.to_f64().unwrap();
            let cy = center.y.to_f64().unwrap();
            let (x_lo, x_hi) = window_range(cx, config.sp, w);
            let (y_lo, y_hi) = window_range(cy, config.sp, h);
            if x_lo > x_hi || y_lo > y_hi {
                continue;
            }
            for y in y_lo..=y_hi {
                let py = T::from_f64(y as f64 + 0.5).unwrap();
                let row_base = y * w;
                for x in x_lo..=x_hi {
                    let idx = row_base + x;
                    let px = T::from_f64(x as f64 + 0.5).unwrap();
                    let pi = T::from_u8(image.pixels()[idx]).unwrap();
                    let fd = fuse_distance(center, (px, py, pi), config);
                    if fd < best[idx] || (fd == best[idx] && (cid as u32) < labels[idx]) {
                        best[idx] = fd;
                        labels[idx] = cid as u32;
                    }
                }
            }
        }

        // Fallback for a pixel with no candidate at all; only reachable on
        // the first pass, and seed coverage makes it dead even there. Kept as
        // a guard: such a pixel goes to the spatially nearest center.
        for idx in 0..total {
            if labels[idx] != u32::MAX {
                continue;
            }
            let x = (idx % w) as f64 + 0.5;
            let y = (idx / w) as f64 + 0.5;
            let mut nearest = 0u32;
            let mut nearest_d2 = f64::INFINITY;
            for (cid, center) in centers.iter().enumerate() {
                let dx = center.x.to_f64().unwrap() - x;
                let dy = center.y.to_f64().unwrap() - y;
                let d2 = dx * dx + dy * dy;
                if d2 < nearest_d2 {
                    nearest_d2 = d2;
                    nearest = cid as u32;
                }
            }
            labels[idx] = nearest;
            let center = &centers[nearest as usize];
            let pi = T::from_u8(image.pixels()[idx]).unwrap();
            best[idx] = fuse_distance(
                center,
                (T::from_f64(x).unwrap(), T::from_f64(y).unwrap(), pi),
                config,
            );
        }

        let energy = best.iter().fold(T::zero(), |acc, &fd| acc + fd * fd);
        energy_history.push(energy);

        // Update: centers move to the mean of their members; empty centers
        // keep their previous state so the cell grid stays addressable.
        let k = centers.len();
        let mut sum_x = vec![T::zero(); k];
        let mut sum_y = vec![T::zero(); k];
        let mut sum_i = vec![T::zero(); k];
        let mut count = vec![0usize; k];
        for (idx, &label) in labels.iter().enumerate() {
            let cid = label as usize;
            let x = T::from_f64((idx % w) as f64 + 0.5).unwrap();
            let y = T::from_f64((idx / w) as f64 + 0.5).unwrap();
            sum_x[cid] = sum_x[cid] + x;
            sum_y[cid] = sum_y[cid] + y;
            sum_i[cid] = sum_i[cid] + T::from_u8(image.pixels()[idx]).unwrap();
            count[cid] += 1;
        }
        let mut max_shift = T::zero();
        for cid in 0..k {
            if count[cid] == 0 {
                continue;
            }
            let n = T::from_usize(count[cid]).unwrap();
            let nx = sum_x[cid] / n;
            let ny = sum_y[cid] / n;
            let ni = sum_i[cid] / n;
            let dx = nx - centers[cid].x;
            let dy = ny - centers[cid].y;
            let shift = (dx * dx + dy * dy).sqrt();
            if shift > max_shift {
                max_shift = shift;
            }
            centers[cid].x = nx;
            centers[cid].y = ny;
            centers[cid].intensity = ni;
        }

        if max_shift < config.center_shift_eps {
            break;
        }
    }

    let energy = *energy_history.last().expect("max_iters >= 1");
    Ok(Segmentation {
        labels,
        centers,
        m_rows,
        n_cols,
        energy,
        energy_history,
        iterations,
    })
}

/// Label map rendered as a grayscale image (cell id modulo 256), for visual
/// inspection of the segmentation.
pub fn label_image<T>(seg: &Segmentation<T>, width: u32, height: u32) -> Result<GrayImage> {
    if seg.labels.len() != (width as usize) * (height as usize) {
        return Err(Error::Input(format!(
            "label map of {} entries does not match {width}x{height}",
            seg.labels.len()
        )));
    }
    let pixels = seg.labels.iter().map(|&l| (l % 256) as u8).collect();
    GrayImage::new(width, height, pixels)
}

/// Converged centers as CSV text: `cell_row,cell_col,x,y,intensity`.
pub fn centers_csv<T: Real>(seg: &Segmentation<T>) -> String {
    let mut out = String::from("cell_row,cell_col,x,y,intensity\n");
    for c in &seg.centers {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.cell_row, c.cell_col, c.x, c.y, c.intensity
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_image(w: u32, h: u32, v: u8) -> GrayImage {
        GrayImage::new(w, h, vec![v; (w * h) as usize]).unwrap()
    }

    /// Independent assignment oracle: for every pixel, evaluate the fuse
    /// distance against every center inside the search window and take the
    /// argmin, lowest cell id winning ties; orphans go to the spatially
    /// nearest center.
    fn brute_force_assignment(
        image: &GrayImage,
        centers: &[GridCenter<f64>],
        config: &SegmentationConfig<f64>,
    ) -> Vec<u32> {
        let w = image.width() as usize;
        let h = image.height() as usize;
        let sp = config.sp as f64;
        let mut labels = vec![u32::MAX; w * h];
        for y in 0..h {
            for x in 0..w {
                let px = x as f64 + 0.5;
                let py = y as f64 + 0.5;
                let pi = image.get(x as u32, y as u32) as f64;
                let mut best_fd = f64::INFINITY;
                let mut best_cid = u32::MAX;
                for (cid, c) in centers.iter().enumerate() {
                    if (px - c.x).abs() < sp && (py - c.y).abs() < sp {
                        let fd = fuse_distance(c, (px, py, pi), config);
                        if fd < best_fd {
                            best_fd = fd;
                            best_cid = cid as u32;
                        }
                    }
                }
                if best_cid == u32::MAX {
                    let mut nearest_d2 = f64::INFINITY;
                    for (cid, c) in centers.iter().enumerate() {
                        let d2 = (px - c.x).powi(2) + (py - c.y).powi(2);
                        if d2 < nearest_d2 {
                            nearest_d2 = d2;
                            best_cid = cid as u32;
                        }
                    }
                }
                labels[y * w + x] = best_cid;
            }
        }
        labels
    }

    #[test]
    fn init_places_centers_at_cell_midpoints() {
        let img = constant_image(80, 80, 10);
        let cfg = SegmentationConfig::<f64>::with_sp(40);
        let centers = init_centers(&img, &cfg).unwrap();
        let coords: Vec<(f64, f64)> = centers.iter().map(|c| (c.x, c.y)).collect();
        assert_eq!(
            coords,
            vec![(20.0, 20.0), (60.0, 20.0), (20.0, 60.0), (60.0, 60.0)]
        );
    }

    #[test]
    fn init_handles_remainder_cells() {
        let img = constant_image(100, 80, 10);
        let cfg = SegmentationConfig::<f64>::with_sp(40);
        let centers = init_centers(&img, &cfg).unwrap();
        assert_eq!(centers.len(), 6); // M=2, N=3
        let xs: Vec<f64> = centers.iter().take(3).map(|c| c.x).collect();
        assert_eq!(xs, vec![20.0, 60.0, 90.0]);
    }

    #[test]
    fn init_single_cell() {
        let img = constant_image(40, 40, 10);
        let cfg = SegmentationConfig::<f64>::with_sp(40);
        let centers = init_centers(&img, &cfg).unwrap();
        assert_eq!(centers.len(), 1);
        assert_eq!((centers[0].x, centers[0].y), (20.0, 20.0));
    }

    #[test]
    fn init_rejects_oversized_sp() {
        let img = constant_image(30, 30, 0);
        let cfg = SegmentationConfig::<f64>::with_sp(40);
        assert!(init_centers(&img, &cfg).is_err());
    }

    #[test]
    fn fuse_distance_examples() {
        let cfg = SegmentationConfig::<f64> {
            sp: 40,
            spatial_norm: 40.0,
            intensity_norm: 10.0,
            max_iters: 10,
            center_shift_eps: 0.5,
        };
        let c = GridCenter {
            x: 10.0,
            y: 10.0,
            intensity: 100.0,
            cell_row: 0,
            cell_col: 0,
        };
        assert_eq!(fuse_distance(&c, (10.0, 10.0, 100.0), &cfg), 0.0);
        let fd = fuse_distance(&c, (13.0, 14.0, 130.0), &cfg);
        assert!((fd - 9.015625f64.sqrt()).abs() < 1e-12);

        let unit = SegmentationConfig::<f64> {
            sp: 40,
            spatial_norm: 1.0,
            intensity_norm: 1.0,
            max_iters: 10,
            center_shift_eps: 0.5,
        };
        let o = GridCenter {
            x: 0.0,
            y: 0.0,
            intensity: 0.0,
            cell_row: 0,
            cell_col: 0,
        };
        assert_eq!(fuse_distance(&o, (3.0, 4.0, 0.0), &unit), 5.0);
    }

    #[test]
    fn constant_image_keeps_seed_blocks() {
        let img = constant_image(80, 80, 128);
        let cfg = SegmentationConfig::<f64>::with_sp(40);
        let seg = segment(&img, &cfg).unwrap();
        for y in 0..80u32 {
            for x in 0..80u32 {
                let expected = (y / 40) * 2 + (x / 40);
                assert_eq!(seg.labels[(y * 80 + x) as usize], expected);
            }
        }
        // Block means coincide with the seed midpoints, so one iteration converges.
        assert_eq!(seg.iterations, 1);
    }

    #[test]
    fn intensity_split_dominates_spatial_term() {
        // Left half 0, right half 255, sp = width/2: crossing the divide
        // costs d_i = 255 against a spatial gain of at most ~sqrt(2) * sp.
        let w = 80u32;
        let h = 80u32;
        let pixels: Vec<u8> = (0..w * h)
            .map(|i| if i % w < w / 2 { 0 } else { 255 })
            .collect();
        let img = GrayImage::new(w, h, pixels).unwrap();
        let cfg = SegmentationConfig::<f64>::with_sp(40);
        let seg = segment(&img, &cfg).unwrap();
        for y in 0..h {
            for x in 0..w {
                let label = seg.labels[(y * w + x) as usize];
                let col = (label % 2) as u32;
                assert_eq!(col, x / 40, "pixel ({x},{y}) crossed the intensity divide");
            }
        }
    }

    #[test]
    fn single_iteration_matches_brute_force_oracle() {
        let mut state = 0x8BADF00D_u64;
        let mut next = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 56) as u8
        };
        let pixels: Vec<u8> = (0..64 * 64).map(|_| next()).collect();
        let img = GrayImage::new(64, 64, pixels).unwrap();
        let mut cfg = SegmentationConfig::<f64>::with_sp(20);
        cfg.max_iters = 1;
        let seg = segment(&img, &cfg).unwrap();
        let centers = init_centers(&img, &cfg).unwrap();
        let oracle = brute_force_assignment(&img, &centers, &cfg);
        assert_eq!(seg.labels, oracle);
    }

    #[test]
    fn partition_and_determinism() {
        let pixels: Vec<u8> = (0..64 * 64).map(|i| (i * 7 % 251) as u8).collect();
        let img = GrayImage::new(64, 64, pixels).unwrap();
        let cfg = SegmentationConfig::<f64>::with_sp(10);
        let a = segment(&img, &cfg).unwrap();
        let b = segment(&img, &cfg).unwrap();
        assert_eq!(a, b);

        let (m, n) = grid_dims(64, 64, 10);
        assert_eq!(a.centers.len(), m * n);
        let mut counts = vec![0usize; m * n];
        for &l in &a.labels {
            counts[l as usize] += 1;
        }
        assert_eq!(counts.iter().sum::<usize>(), 64 * 64);
    }

    #[test]
    fn energy_is_non_increasing_across_iterations() {
        let pixels: Vec<u8> = (0..64 * 64)
            .map(|i| ((i * 31 + i / 64 * 17) % 256) as u8)
            .collect();
        let img = GrayImage::new(64, 64, pixels).unwrap();
        let cfg = SegmentationConfig::<f64>::with_sp(16);
        let seg = segment(&img, &cfg).unwrap();
        for pair in seg.energy_history.windows(2) {
            assert!(
                pair[1] <= pair[0] * (1.0 + 1e-9),
                "energy increased: {} -> {}",
                pair[0],
                pair[1]
            );
        }
    }

    #[test]
    fn cell_count_is_non_increasing_in_sp() {
        let mut prev = usize::MAX;
        for sp in (10..=100).step_by(10) {
            let (m, n) = grid_dims(128, 128, sp);
            assert!(m * n <= prev);
            prev = m * n;
        }
    }

    #[test]
    fn f32_lane_produces_a_valid_partition() {
        let pixels: Vec<u8> = (0..48 * 48).map(|i| (i % 256) as u8).collect();
        let img = GrayImage::new(48, 48, pixels).unwrap();
        let cfg = SegmentationConfig::<f32>::with_sp(12);
        let seg = segment(&img, &cfg).unwrap();
        assert_eq!(seg.labels.len(), 48 * 48);
        assert!(seg.labels.iter().all(|&l| (l as usize) < seg.cell_count()));
    }

    #[test]
    fn label_image_wraps_cell_ids() {
        let img = constant_image(80, 80, 1);
        let cfg = SegmentationConfig::<f64>::with_sp(40);
        let seg = segment(&img, &cfg).unwrap();
        let vis = label_image(&seg, 80, 80).unwrap();
        assert_eq!(vis.get(0, 0), 0);
        assert_eq!(vis.get(79, 79), 3);
    }
}
