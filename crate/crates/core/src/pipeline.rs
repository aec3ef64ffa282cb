//! End-to-end per-frame processing.
//!
//! Each frame is segmented, described, and matched against previously seen
//! frames, either by an exhaustive scan over the history or through the
//! dynamic-node database. Frames closer to the query than `temporal_gap` are
//! never loop-closure candidates, though they still take part in node
//! membership bookkeeping.

use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Instant;

use crate::config::{FrameId, Mode, PipelineConfig, SegmentationConfig};
use crate::descriptor::{extract_lsgd, sim_score, SharedLsgd, SimScore};
use crate::error::{Error, Result};
use crate::gray::GrayImage;
use crate::nodedb::NodeDatabase;
use crate::scalar::Real;
use crate::segmentation::segment;

/// Per-frame detection outcome.
#[derive(Clone, Debug)]
pub struct DetectionResult<T> {
    pub query: FrameId,
    /// Best candidate when its score clears `accept_threshold`.
    pub matched: Option<FrameId>,
    /// Score of the best candidate; zero when there were no candidates.
    pub score: SimScore<T>,
    /// Up to `top_n` candidates, descending score, ties to the smaller id.
    pub ranked: Vec<(FrameId, SimScore<T>)>,
    /// Total wall-clock time for the frame (segmentation + descriptor + retrieval).
    pub elapsed_ms: f64,
    /// Retrieval-only wall-clock time.
    pub retrieval_ms: f64,
    /// Node the frame landed in (dynamic-nodes mode only).
    pub node_id: Option<u32>,
    /// Whether the frame founded a new node.
    pub created_new: bool,
}

/// Full linear scan over the given history: every entry is scored against the
/// query, sorted by descending score (ties to the smaller frame id), and the
/// list truncated to `top_n`.
pub fn exhaustive_query<T: Real>(
    history: &[(FrameId, SharedLsgd)],
    query: &SharedLsgd,
    top_n: usize,
) -> Result<Vec<(FrameId, SimScore<T>)>> {
    let mut scored = Vec::with_capacity(history.len());
    for (fid, descriptor) in history {
        scored.push((*fid, sim_score::<T>(query, descriptor)?));
    }
    rank(&mut scored, top_n);
    Ok(scored)
}

/// Sorts candidates in place by descending score, ties to the smaller frame
/// id, and truncates to `top_n`.
fn rank<T: Real>(scored: &mut Vec<(FrameId, SimScore<T>)>, top_n: usize) {
    scored.sort_by(|a, b| {
        b.1.value
            .partial_cmp(&a.1.value)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    scored.truncate(top_n);
}

/// Sequential detection state for one run.
pub struct Pipeline<T: Real> {
    seg_cfg: SegmentationConfig<T>,
    cfg: PipelineConfig<T>,
    db: NodeDatabase,
    history: Vec<(FrameId, SharedLsgd)>,
    next_id: u32,
    dims: Option<(u32, u32)>,
}

impl<T: Real> Pipeline<T> {
    pub fn new(seg_cfg: SegmentationConfig<T>, cfg: PipelineConfig<T>) -> Result<Self> {
        seg_cfg.validate()?;
        cfg.validate()?;
        Ok(Self {
            seg_cfg,
            cfg,
            db: NodeDatabase::new(),
            history: Vec::new(),
            next_id: 0,
            dims: None,
        })
    }

    pub fn db(&self) -> &NodeDatabase {
        &self.db
    }

    pub fn config(&self) -> &PipelineConfig<T> {
        &self.cfg
    }

    pub fn segmentation_config(&self) -> &SegmentationConfig<T> {
        &self.seg_cfg
    }

    /// Frames strictly older than the temporal gap are candidates.
    fn eligible(&self, candidate: FrameId, query: FrameId) -> bool {
        (query.0 as i64 - candidate.0 as i64) > self.cfg.temporal_gap as i64
    }

    /// Segments and describes `image`, then retrieves loop candidates.
    /// Frames must share one geometry across the whole run.
    pub fn process_frame(&mut self, image: &GrayImage) -> Result<DetectionResult<T>> {
        let start = Instant::now();
        match self.dims {
            None => self.dims = Some((image.width(), image.height())),
            Some((w, h)) => {
                if (image.width(), image.height()) != (w, h) {
                    return Err(Error::Input(format!(
                        "frame {} is {}x{} but the run started at {w}x{h}",
                        self.next_id,
                        image.width(),
                        image.height()
                    )));
                }
            }
        }
        let seg = segment(image, &self.seg_cfg)?;
        let lsgd = SharedLsgd::new(extract_lsgd(image, &seg)?);
        let mut result = self.process_descriptor(lsgd)?;
        result.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(result)
    }

    /// Retrieval step on a precomputed descriptor. `elapsed_ms` covers only
    /// the retrieval work here; `process_frame` widens it to the whole frame.
    pub fn process_descriptor(&mut self, lsgd: SharedLsgd) -> Result<DetectionResult<T>> {
        let id = FrameId(self.next_id);
        self.next_id += 1;

        let start = Instant::now();
        let (mut ranked, node_id, created_new) = match self.cfg.mode {
            Mode::Exhaustive => {
                let eligible: Vec<(FrameId, SharedLsgd)> = self
                    .history
                    .iter()
                    .filter(|(fid, _)| self.eligible(*fid, id))
                    .cloned()
                    .collect();
                let ranked = exhaustive_query::<T>(&eligible, &lsgd, self.cfg.top_n)?;
                self.history.push((id, lsgd));
                (ranked, None, false)
            }
            Mode::DynamicNodes => {
                let selection = self.db.select_or_create(&lsgd, id, &self.cfg)?;
                let candidates: Vec<(FrameId, SimScore<T>)> = selection
                    .candidates
                    .into_iter()
                    .filter(|(fid, _)| self.eligible(*fid, id))
                    .collect();
                (candidates, Some(selection.node_id), selection.created_new)
            }
        };
        rank(&mut ranked, self.cfg.top_n);
        let retrieval_ms = start.elapsed().as_secs_f64() * 1e3;
        let score = ranked
            .first()
            .map(|(_, s)| *s)
            .unwrap_or_else(SimScore::zero);
        let matched = match ranked.first() {
            Some((fid, s)) if s.value >= self.cfg.accept_threshold => Some(*fid),
            _ => None,
        };

        Ok(DetectionResult {
            query: id,
            matched,
            score,
            ranked,
            elapsed_ms: retrieval_ms,
            retrieval_ms,
            node_id,
            created_new,
        })
    }
}

/// One detection-log row, the serialized form of a [`DetectionResult`].
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow<T> {
    pub query: u32,
    pub matched: Option<u32>,
    pub score: T,
    pub elapsed_ms: f64,
    pub node_id: Option<u32>,
    pub created_new: bool,
    pub retrieval_ms: f64,
    pub ranked: Vec<(u32, T)>,
}

impl<T: Real> LogRow<T> {
    pub fn from_result(r: &DetectionResult<T>) -> Self {
        Self {
            query: r.query.0,
            matched: r.matched.map(|f| f.0),
            score: r.score.value,
            elapsed_ms: r.elapsed_ms,
            node_id: r.node_id,
            created_new: r.created_new,
            retrieval_ms: r.retrieval_ms,
            ranked: r.ranked.iter().map(|(f, s)| (f.0, s.value)).collect(),
        }
    }

    /// Copy with the timing columns zeroed, for determinism comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            elapsed_ms: 0.0,
            retrieval_ms: 0.0,
            ..self.clone()
        }
    }
}

pub const LOG_HEADER: &str =
    "query_id,match_id,score,elapsed_ms,node_id,created_new,retrieval_ms,ranked";

/// Writes the detection log CSV. The `ranked` column packs the candidate list
/// as `id:score` pairs joined by `;`.
pub fn write_detection_log<T: Real, W: Write>(rows: &[LogRow<T>], out: &mut W) -> Result<()> {
    writeln!(out, "{LOG_HEADER}")?;
    for row in rows {
        let matched = row.matched.map(|m| m.to_string()).unwrap_or_default();
        let node = row.node_id.map(|n| n.to_string()).unwrap_or_default();
        let ranked = row
            .ranked
            .iter()
            .map(|(fid, s)| format!("{fid}:{s}"))
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            out,
            "{},{},{},{:.6},{},{},{:.6},{}",
            row.query, matched, row.score, row.elapsed_ms, node, row.created_new, row.retrieval_ms, ranked
        )?;
    }
    Ok(())
}

/// Parses a detection log written by [`write_detection_log`].
pub fn read_detection_log<T: Real>(path: &Path) -> Result<Vec<LogRow<T>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::Load {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let reader = std::io::BufReader::new(file);
    let mut rows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        if i == 0 {
            if line.trim() != LOG_HEADER {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: lineno,
                    reason: format!("unexpected header '{line}'"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: lineno,
                reason: format!("expected 8 columns, got {}", fields.len()),
            });
        }
        let parse_err = |reason: String| Error::Parse {
            path: path.to_path_buf(),
            line: lineno,
            reason,
        };
        let query: u32 = fields[0]
            .parse()
            .map_err(|e| parse_err(format!("bad query_id: {e}")))?;
        let matched = if fields[1].is_empty() {
            None
        } else {
            Some(
                fields[1]
                    .parse::<u32>()
                    .map_err(|e| parse_err(format!("bad match_id: {e}")))?,
            )
        };
        let score_f: f64 = fields[2]
            .parse()
            .map_err(|e| parse_err(format!("bad score: {e}")))?;
        let elapsed_ms: f64 = fields[3]
            .parse()
            .map_err(|e| parse_err(format!("bad elapsed_ms: {e}")))?;
        let node_id = if fields[4].is_empty() {
            None
        } else {
            Some(
                fields[4]
                    .parse::<u32>()
                    .map_err(|e| parse_err(format!("bad node_id: {e}")))?,
            )
        };
        let created_new: bool = fields[5]
            .parse()
            .map_err(|e| parse_err(format!("bad created_new: {e}")))?;
        let retrieval_ms: f64 = fields[6]
            .parse()
            .map_err(|e| parse_err(format!("bad retrieval_ms: {e}")))?;
        let mut ranked = Vec::new();
        if !fields[7].is_empty() {
            for pair in fields[7].split(';') {
                let (fid, s) = pair
                    .split_once(':')
                    .ok_or_else(|| parse_err(format!("bad ranked entry '{pair}'")))?;
                let fid: u32 = fid
                    .parse()
                    .map_err(|e| parse_err(format!("bad ranked id: {e}")))?;
                let s: f64 = s
                    .parse()
                    .map_err(|e| parse_err(format!("bad ranked score: {e}")))?;
                ranked.push((fid, T::from_f64(s).unwrap()));
            }
        }
        rows.push(LogRow {
            query,
            matched,
            score: T::from_f64(score_f).unwrap(),
            elapsed_ms,
            node_id,
            created_new,
            retrieval_ms,
            ranked,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_image(seed: u64, w: u32, h: u32) -> GrayImage {
        let mut state = seed;
        let pixels: Vec<u8> = (0..w * h)
            .map(|_| {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                (state >> 56) as u8
            })
            .collect();
        GrayImage::new(w, h, pixels).unwrap()
    }

    fn pipeline(mode: Mode, gap: usize) -> Pipeline<f64> {
        let seg = SegmentationConfig::with_sp(16);
        let cfg = PipelineConfig {
            alpha: 0.3,
            beta: 0.3,
            temporal_gap: gap,
            top_n: 10,
            accept_threshold: 0.0,
            mode,
        };
        Pipeline::new(seg, cfg).unwrap()
    }

    #[test]
    fn first_frame_has_no_candidates() {
        let mut p = pipeline(Mode::DynamicNodes, 0);
        let r = p.process_frame(&random_image(1, 64, 64)).unwrap();
        assert_eq!(r.query, FrameId(0));
        assert!(r.matched.is_none());
        assert!(r.ranked.is_empty());
        assert_eq!(r.score.value, 0.0);
        assert!(r.created_new);
        assert_eq!(p.db().node_count(), 1);
    }

    #[test]
    fn identical_frames_match_at_unit_score() {
        let mut p = pipeline(Mode::Exhaustive, 0);
        let img = random_image(7, 64, 64);
        for i in 0..5u32 {
            let r = p.process_frame(&img).unwrap();
            if i == 0 {
                assert!(r.matched.is_none());
            } else {
                assert_eq!(r.score.value, 1.0);
                assert!(r.matched.is_some());
            }
        }
    }

    #[test]
    fn repeat_of_early_frame_is_retrieved_at_rank_one() {
        let mut p = pipeline(Mode::Exhaustive, 5);
        let frames: Vec<GrayImage> = (0..20).map(|i| random_image(100 + i, 64, 64)).collect();
        for f in &frames {
            p.process_frame(f).unwrap();
        }
        let r = p.process_frame(&frames[3].clone()).unwrap();
        assert_eq!(r.query, FrameId(20));
        assert_eq!(r.matched, Some(FrameId(3)));
        assert_eq!(r.score.value, 1.0);
        assert_eq!(r.ranked[0].0, FrameId(3));
    }

    #[test]
    fn temporal_gap_excludes_recent_frames() {
        let mut p = pipeline(Mode::Exhaustive, 5);
        let img = random_image(42, 64, 64);
        let mut results = Vec::new();
        for _ in 0..10 {
            results.push(p.process_frame(&img).unwrap());
        }
        for r in &results {
            for (fid, _) in &r.ranked {
                assert!(
                    r.query.0 as i64 - fid.0 as i64 > 5,
                    "frame {fid} ranked for query {} inside the gap",
                    r.query
                );
                assert_ne!(*fid, r.query);
            }
        }
        // Queries 0..=5 see nothing; query 6 first sees frame 0.
        assert!(results[5].ranked.is_empty());
        assert_eq!(results[6].ranked.len(), 1);
    }

    #[test]
    fn exhaustive_query_examples() {
        let img = random_image(3, 64, 64);
        let seg = segment(&img, &SegmentationConfig::<f64>::with_sp(16)).unwrap();
        let d = SharedLsgd::new(extract_lsgd(&img, &seg).unwrap());

        let empty: Vec<(FrameId, SharedLsgd)> = Vec::new();
        assert!(exhaustive_query::<f64>(&empty, &d, 10).unwrap().is_empty());

        let history = vec![(FrameId(0), d.clone())];
        let ranked = exhaustive_query::<f64>(&history, &d, 10).unwrap();
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].0, FrameId(0));
        assert_eq!(ranked[0].1.value, 1.0);
    }

    #[test]
    fn exhaustive_ranking_matches_double_loop_oracle() {
        let images: Vec<GrayImage> = (0..10).map(|i| random_image(900 + i, 64, 64)).collect();
        let seg_cfg = SegmentationConfig::<f64>::with_sp(16);
        let descriptors: Vec<SharedLsgd> = images
            .iter()
            .map(|img| {
                let seg = segment(img, &seg_cfg).unwrap();
                SharedLsgd::new(extract_lsgd(img, &seg).unwrap())
            })
            .collect();
        let history: Vec<(FrameId, SharedLsgd)> = descriptors
            .iter()
            .enumerate()
            .map(|(i, d)| (FrameId(i as u32), d.clone()))
            .collect();
        let query = &descriptors[9];

        let ranked = exhaustive_query::<f64>(&history[..9], query, 5).unwrap();

        // Independent oracle: recompute every pairwise score with raw loops
        // over cells and bins, then selection-sort by (score desc, id asc).
        let mut oracle: Vec<(u32, f64)> = (0..9)
            .map(|i| {
                let a = &descriptors[9];
                let b = &descriptors[i];
                let mut dist = 0u64;
                for (ca, cb) in a.cells.iter().zip(b.cells.iter()) {
                    for bin in 0..256 {
                        dist += (ca.bins[bin] as i64 - cb.bins[bin] as i64).unsigned_abs();
                    }
                }
                let sim = 1.0 - dist as f64 / (2.0 * a.total_pixels as f64);
                (i as u32, sim)
            })
            .collect();
        for i in 0..oracle.len() {
            let mut best = i;
            for j in i + 1..oracle.len() {
                if oracle[j].1 > oracle[best].1
                    || (oracle[j].1 == oracle[best].1 && oracle[j].0 < oracle[best].0)
                {
                    best = j;
                }
            }
            oracle.swap(i, best);
        }
        oracle.truncate(5);

        let got: Vec<(u32, f64)> = ranked.iter().map(|(f, s)| (f.0, s.value)).collect();
        assert_eq!(got, oracle);
    }

    #[test]
    fn accept_threshold_gates_the_match_field() {
        let seg = SegmentationConfig::with_sp(16);
        let cfg = PipelineConfig {
            alpha: 0.0,
            beta: 0.0,
            temporal_gap: 0,
            top_n: 10,
            accept_threshold: 0.9,
            mode: Mode::Exhaustive,
        };
        let mut p = Pipeline::<f64>::new(seg, cfg).unwrap();
        p.process_frame(&random_image(5, 64, 64)).unwrap();
        // A different random frame scores far below 0.9: candidates exist
        // but no match fires.
        let r = p.process_frame(&random_image(6, 64, 64)).unwrap();
        assert!(!r.ranked.is_empty());
        assert!(r.score.value < 0.9);
        assert!(r.matched.is_none());
        // An exact repeat scores 1.0 and clears the threshold.
        let r = p.process_frame(&random_image(5, 64, 64)).unwrap();
        assert_eq!(r.score.value, 1.0);
        assert_eq!(r.matched, Some(FrameId(0)));
    }

    #[test]
    fn f32_lane_runs_the_pipeline() {
        let seg = SegmentationConfig::<f32>::with_sp(16);
        let cfg = PipelineConfig {
            alpha: 0.3f32,
            beta: 0.3,
            temporal_gap: 0,
            top_n: 5,
            accept_threshold: 0.0,
            mode: Mode::DynamicNodes,
        };
        let mut p = Pipeline::new(seg, cfg).unwrap();
        let img = random_image(11, 64, 64);
        p.process_frame(&img).unwrap();
        let r = p.process_frame(&img).unwrap();
        assert_eq!(r.score.value, 1.0f32);
    }

    #[test]
    fn size_mismatch_mid_run_is_an_error() {
        let mut p = pipeline(Mode::Exhaustive, 0);
        p.process_frame(&random_image(1, 64, 64)).unwrap();
        assert!(p.process_frame(&random_image(2, 32, 32)).is_err());
    }

    #[test]
    fn timing_is_positive_and_finite() {
        let mut p = pipeline(Mode::DynamicNodes, 0);
        for i in 0..3 {
            let r = p.process_frame(&random_image(50 + i, 64, 64)).unwrap();
            assert!(r.elapsed_ms > 0.0 && r.elapsed_ms.is_finite());
            assert!(r.retrieval_ms > 0.0 && r.retrieval_ms.is_finite());
            assert!(r.retrieval_ms <= r.elapsed_ms);
        }
    }

    #[test]
    fn log_rows_round_trip_through_csv() {
        let rows: Vec<LogRow<f64>> = vec![
            LogRow {
                query: 0,
                matched: None,
                score: 0.0,
                elapsed_ms: 1.25,
                node_id: Some(0),
                created_new: true,
                retrieval_ms: 0.5,
                ranked: vec![],
            },
            LogRow {
                query: 7,
                matched: Some(3),
                score: 0.875,
                elapsed_ms: 2.0,
                node_id: None,
                created_new: false,
                retrieval_ms: 1.0,
                ranked: vec![(3, 0.875), (1, 0.25)],
            },
        ];
        let mut buf = Vec::new();
        write_detection_log(&rows, &mut buf).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("detections.csv");
        std::fs::write(&path, &buf).unwrap();
        let back = read_detection_log::<f64>(&path).unwrap();
        assert_eq!(back, rows);
    }
}
