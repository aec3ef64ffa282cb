//! Deterministic synthetic sequences for tests and benchmarks.
//!
//! Frames are smoothed random intensity fields: a small grid of random
//! control values, bilinearly upsampled to the image size. Revisit frames
//! (appended after the base frames) copy an earlier frame, optionally with
//! bounded per-pixel noise, and each revisit contributes one ground-truth
//! pair. With `group_size > 1` consecutive base frames share one scene and
//! differ only by the same bounded noise, which gives the sequence the
//! clustered structure the dynamic-node database exploits.
//!
//! All randomness comes from a 64-bit linear congruential generator with
//! Knuth's MMIX constants (multiplier 6364136223846793005, increment
//! 1442695040888963407), so fixtures are bit-identical across platforms and
//! implementations.

use std::path::Path;

use crate::dataset::GroundTruth;
use crate::error::{Error, Result};
use crate::gray::GrayImage;

pub const LCG_MULTIPLIER: u64 = 6364136223846793005;
pub const LCG_INCREMENT: u64 = 1442695040888963407;

/// Stream-splitting constant (odd, golden-ratio based) used to derive
/// per-scene and per-frame seeds from the run seed.
const SEED_SPLIT: u64 = 0x9E37_79B9_7F4A_7C15;
const NOISE_SALT: u64 = 0x4E_4F49_5345;
const REVISIT_SALT: u64 = 0x52_4556_4953_4954;

/// Minimal 64-bit LCG; high bits are the usable output.
#[derive(Clone, Debug)]
pub struct Lcg {
    state: u64,
}

impl Lcg {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(LCG_MULTIPLIER)
            .wrapping_add(LCG_INCREMENT);
        self.state
    }

    pub fn next_byte(&mut self) -> u8 {
        (self.next_u64() >> 56) as u8
    }

    /// Uniform-ish value in `[0, n)`; the modulo bias is irrelevant here.
    pub fn below(&mut self, n: u64) -> u64 {
        (self.next_u64() >> 16) % n
    }
}

/// Parameters of a synthetic sequence.
#[derive(Clone, Copy, Debug)]
pub struct FixtureSpec {
    /// Base frames before any revisits.
    pub frames: usize,
    /// Revisit frames appended after the base frames.
    pub revisits: usize,
    /// Max absolute per-pixel perturbation for revisits and group members.
    pub noise: u8,
    pub width: u32,
    pub height: u32,
    /// Consecutive base frames sharing a scene; 1 means every frame is its
    /// own scene.
    pub group_size: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            frames: 20,
            revisits: 0,
            noise: 0,
            width: 64,
            height: 64,
            group_size: 1,
            seed: 1,
        }
    }
}

/// Generated sequence plus its ground truth.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub images: Vec<GrayImage>,
    /// (source, revisit) pairs, one per revisit frame.
    pub positives: Vec<(u32, u32)>,
}

/// Control-grid resolution of the smoothed random fields.
const CONTROL_POINTS: usize = 4;

fn scene_field(seed: u64, scene: u64, width: u32, height: u32) -> GrayImage {
    let mut rng = Lcg::new(seed ^ (scene + 1).wrapping_mul(SEED_SPLIT));
    let g = CONTROL_POINTS;
    let control: Vec<f64> = (0..g * g).map(|_| rng.next_byte() as f64).collect();
    let w = width as usize;
    let h = height as usize;
    let mut pixels = Vec::with_capacity(w * h);
    for y in 0..h {
        let v = if h > 1 {
            y as f64 / (h - 1) as f64 * (g - 1) as f64
        } else {
            0.0
        };
        let gy = (v.floor() as usize).min(g - 2);
        let fy = v - gy as f64;
        for x in 0..w {
            let u = if w > 1 {
                x as f64 / (w - 1) as f64 * (g - 1) as f64
            } else {
                0.0
            };
            let gx = (u.floor() as usize).min(g - 2);
            let fx = u - gx as f64;
            let c00 = control[gy * g + gx];
            let c10 = control[gy * g + gx + 1];
            let c01 = control[(gy + 1) * g + gx];
            let c11 = control[(gy + 1) * g + gx + 1];
            let top = c00 * (1.0 - fx) + c10 * fx;
            let bottom = c01 * (1.0 - fx) + c11 * fx;
            let value = top * (1.0 - fy) + bottom * fy;
            pixels.push(value.round().clamp(0.0, 255.0) as u8);
        }
    }
    GrayImage::new(width, height, pixels).expect("generated buffer matches dimensions")
}

fn perturb(image: &GrayImage, seed: u64, frame: u64, noise: u8) -> GrayImage {
    if noise == 0 {
        return image.clone();
    }
    let mut rng = Lcg::new(seed ^ (frame + 1).wrapping_mul(SEED_SPLIT) ^ NOISE_SALT);
    let span = 2 * noise as i64 + 1;
    let pixels = image
        .pixels()
        .iter()
        .map(|&p| {
            let delta = rng.below(span as u64) as i64 - noise as i64;
            (p as i64 + delta).clamp(0, 255) as u8
        })
        .collect();
    GrayImage::new(image.width(), image.height(), pixels).expect("same dimensions")
}

/// Generates the sequence in memory.
pub fn generate(spec: &FixtureSpec) -> Result<Fixture> {
    if spec.frames == 0 {
        return Err(Error::Config("fixture needs at least one base frame".into()));
    }
    if spec.group_size == 0 {
        return Err(Error::Config("group_size must be at least 1".into()));
    }
    let mut images = Vec::with_capacity(spec.frames + spec.revisits);
    for f in 0..spec.frames {
        let scene = (f / spec.group_size) as u64;
        let base = scene_field(spec.seed, scene, spec.width, spec.height);
        // The first frame of a group is the scene itself; the rest jitter.
        if f % spec.group_size == 0 {
            images.push(base);
        } else {
            images.push(perturb(&base, spec.seed, f as u64, spec.noise));
        }
    }

    let mut positives = Vec::with_capacity(spec.revisits);
    let mut src_rng = Lcg::new(spec.seed ^ REVISIT_SALT);
    // Sources come from the first half of the base frames so they stay
    // eligible under typical temporal gaps, snapped to group starts so the
    // revisit targets a scene's founding frame.
    let source_span = (spec.frames / 2).max(1) as u64;
    for i in 0..spec.revisits {
        let raw = src_rng.below(source_span) as usize;
        let source = raw / spec.group_size * spec.group_size;
        let frame_id = (spec.frames + i) as u32;
        images.push(perturb(
            &images[source],
            spec.seed,
            frame_id as u64,
            spec.noise,
        ));
        positives.push((source as u32, frame_id));
    }

    Ok(Fixture { images, positives })
}

/// Writes the fixture in the sequence layout: zero-padded PNG stems plus a
/// `gt.csv` pair file (written even when empty).
pub fn write_fixture(fixture: &Fixture, root: &Path) -> Result<()> {
    std::fs::create_dir_all(root)?;
    for (i, img) in fixture.images.iter().enumerate() {
        let path = root.join(format!("{i:06}.png"));
        let buffer: image::GrayImage =
            image::ImageBuffer::from_raw(img.width(), img.height(), img.pixels().to_vec())
                .expect("buffer matches dimensions");
        buffer.save(&path).map_err(|e| Error::Load {
            path,
            reason: e.to_string(),
        })?;
    }
    let gt = GroundTruth::new(fixture.positives.iter().copied(), 0);
    std::fs::write(root.join("gt.csv"), gt.to_csv())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seed_deterministic() {
        let spec = FixtureSpec {
            frames: 12,
            revisits: 3,
            noise: 5,
            ..Default::default()
        };
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.positives, b.positives);
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x, y);
        }
        let other = generate(&FixtureSpec { seed: 2, ..spec }).unwrap();
        assert_ne!(a.images[0], other.images[0]);
    }

    #[test]
    fn zero_noise_revisits_are_byte_identical() {
        let spec = FixtureSpec {
            frames: 20,
            revisits: 5,
            noise: 0,
            ..Default::default()
        };
        let fixture = generate(&spec).unwrap();
        assert_eq!(fixture.positives.len(), 5);
        for &(src, rev) in &fixture.positives {
            assert_eq!(fixture.images[src as usize], fixture.images[rev as usize]);
            assert!(src < 10, "sources come from the first half");
        }
    }

    #[test]
    fn noise_is_bounded_per_pixel() {
        let spec = FixtureSpec {
            frames: 20,
            revisits: 5,
            noise: 8,
            ..Default::default()
        };
        let fixture = generate(&spec).unwrap();
        for &(src, rev) in &fixture.positives {
            let a = &fixture.images[src as usize];
            let b = &fixture.images[rev as usize];
            let mut changed = 0usize;
            for (&pa, &pb) in a.pixels().iter().zip(b.pixels()) {
                assert!((pa as i16 - pb as i16).unsigned_abs() <= 8);
                if pa != pb {
                    changed += 1;
                }
            }
            assert!(changed > 0, "noise 8 should actually perturb pixels");
        }
    }

    #[test]
    fn groups_share_scenes() {
        let spec = FixtureSpec {
            frames: 12,
            group_size: 4,
            noise: 0,
            ..Default::default()
        };
        let fixture = generate(&spec).unwrap();
        // Zero noise makes group members identical; across groups they differ.
        assert_eq!(fixture.images[0], fixture.images[3]);
        assert_ne!(fixture.images[0], fixture.images[4]);
    }

    #[test]
    fn no_revisits_means_empty_ground_truth() {
        let fixture = generate(&FixtureSpec {
            frames: 10,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(fixture.images.len(), 10);
        assert!(fixture.positives.is_empty());
    }

    #[test]
    fn written_fixture_loads_back() {
        let spec = FixtureSpec {
            frames: 8,
            revisits: 2,
            noise: 3,
            ..Default::default()
        };
        let fixture = generate(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_fixture(&fixture, dir.path()).unwrap();
        let manifest = crate::dataset::load_sequence(dir.path()).unwrap();
        assert_eq!(manifest.len(), 10);
        let img = manifest.load_frame(0).unwrap();
        assert_eq!(img, fixture.images[0]);
        let gt = crate::dataset::load_ground_truth(&dir.path().join("gt.csv")).unwrap();
        assert_eq!(gt.positives.len(), 2);
    }
}
