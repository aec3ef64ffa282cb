use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context};
use gridloop_core::dataset::{load_ground_truth, load_sequence, SequenceManifest};
use gridloop_core::eval::{evaluate, pr_curve_csv, summary_csv};
use gridloop_core::fixture::{generate, write_fixture, FixtureSpec};
use gridloop_core::pipeline::{write_detection_log, LogRow, Pipeline};
use gridloop_core::segmentation::{centers_csv, grid_dims, label_image};
use gridloop_core::{segment, Mode, Scalar};

use crate::settings::{ConfigSnapshot, RunManifest, Settings};

fn ensure_out(out: &Path) -> anyhow::Result<()> {
    std::fs::create_dir_all(out)
        .with_context(|| format!("cannot create output directory {}", out.display()))
}

/// Writes through a temp file and renames, so partial files never land under
/// the final name.
fn write_atomic(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn segment_image(settings: &Settings, image_path: &Path) -> anyhow::Result<()> {
    let img = gridloop_core::dataset::decode_gray(image_path)?;
    settings.seg.validate_for(&img)?;
    let seg = segment(&img, &settings.seg)?;

    ensure_out(&settings.out)?;
    let labels = label_image(&seg, img.width(), img.height())?;
    let buffer: image::GrayImage =
        image::ImageBuffer::from_raw(img.width(), img.height(), labels.pixels().to_vec())
            .expect("label raster matches image dimensions");
    buffer.save(settings.out.join("labels.png"))?;
    std::fs::write(settings.out.join("centers.csv"), centers_csv(&seg))?;

    println!(
        "M={} N={} iterations={} energy={:.6}",
        seg.m_rows, seg.n_cols, seg.iterations, seg.energy
    );
    Ok(())
}

pub struct RunOutput {
    pub rows: Vec<LogRow<Scalar>>,
    pub nodes: Option<usize>,
    pub cells: usize,
    pub mean_frame_ms: f64,
    pub mean_retrieval_ms: f64,
}

/// Processes a whole sequence and writes the detect artifacts into `out`.
fn run_detect(
    settings: &Settings,
    manifest: &SequenceManifest,
    out: &Path,
) -> anyhow::Result<RunOutput> {
    ensure_out(out)?;
    let start = Instant::now();
    let mut pipeline = Pipeline::new(settings.seg, settings.pipe)?;
    let total = manifest.len();
    let mut rows: Vec<LogRow<Scalar>> = Vec::with_capacity(total);
    for i in 0..total {
        let img = manifest.load_frame(i)?;
        let result = pipeline.process_frame(&img)?;
        rows.push(LogRow::from_result(&result));
        if (i + 1) % 100 == 0 || i + 1 == total {
            eprintln!("processed {}/{} frames", i + 1, total);
        }
    }
    let wall_seconds = start.elapsed().as_secs_f64();

    let mut log = Vec::new();
    write_detection_log(&rows, &mut log)?;
    std::fs::write(out.join("detections.csv"), &log)?;

    // Descriptor cache; in dynamic-nodes mode it doubles as the snapshot blob.
    std::fs::write(out.join("descriptors.bin"), pipeline.db().descriptor_blob())?;
    let nodes = match settings.pipe.mode {
        Mode::DynamicNodes => {
            let snapshot = pipeline.db().snapshot_manifest();
            std::fs::write(
                out.join("nodes.json"),
                serde_json::to_vec_pretty(&snapshot)?,
            )?;
            Some(pipeline.db().node_count())
        }
        Mode::Exhaustive => None,
    };

    let mean_frame_ms = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.elapsed_ms).sum::<f64>() / rows.len() as f64
    };
    let mean_retrieval_ms = if rows.is_empty() {
        0.0
    } else {
        rows.iter().map(|r| r.retrieval_ms).sum::<f64>() / rows.len() as f64
    };

    let run_manifest = RunManifest {
        dataset_root: manifest.root.clone(),
        out_dir: out.to_path_buf(),
        config: ConfigSnapshot::new(settings, settings.pipe.mode),
        frames: total,
        width: manifest.width,
        height: manifest.height,
        nodes,
        wall_seconds,
        mean_frame_ms,
        mean_retrieval_ms,
    };
    write_atomic(
        &out.join("manifest.json"),
        &serde_json::to_vec_pretty(&run_manifest)?,
    )?;

    let (m, n) = grid_dims(manifest.width, manifest.height, settings.seg.sp);
    Ok(RunOutput {
        rows,
        nodes,
        cells: m * n,
        mean_frame_ms,
        mean_retrieval_ms,
    })
}

pub fn detect(settings: &Settings, root: &Path) -> anyhow::Result<RunOutput> {
    let manifest = load_sequence(root)?;
    // Surface config/geometry mismatches before decoding the whole sequence.
    let first = manifest.load_frame(0)?;
    settings.seg.validate_for(&first)?;

    let output = run_detect(settings, &manifest, &settings.out)?;
    match output.nodes {
        Some(nodes) => println!(
            "detected over {} frames (mode=nodes): {} nodes, mean {:.3} ms/frame ({:.3} ms retrieval)",
            output.rows.len(),
            nodes,
            output.mean_frame_ms,
            output.mean_retrieval_ms
        ),
        None => println!(
            "detected over {} frames (mode=exhaustive): mean {:.3} ms/frame ({:.3} ms retrieval)",
            output.rows.len(),
            output.mean_frame_ms,
            output.mean_retrieval_ms
        ),
    }
    Ok(output)
}

pub fn eval(
    settings: &Settings,
    log_path: &Path,
    gt_path: &Path,
    tolerance: Option<u32>,
) -> anyhow::Result<()> {
    let rows = gridloop_core::pipeline::read_detection_log::<Scalar>(log_path)?;
    let mut gt = load_ground_truth(gt_path)?;
    if let Some(t) = tolerance {
        gt.tolerance = t;
    }
    let report = evaluate(&rows, &gt, settings.pipe.temporal_gap, settings.omega)?;

    ensure_out(&settings.out)?;
    std::fs::write(
        settings.out.join("report.json"),
        serde_json::to_vec_pretty(&report)?,
    )?;
    std::fs::write(
        settings.out.join("pr_curve.csv"),
        pr_curve_csv(&report.curve),
    )?;
    std::fs::write(settings.out.join("summary.csv"), summary_csv(&report))?;

    println!(
        "auc={:.4} r@1={:.4} r@5={:.4} r@10={:.4} mean_time_ms={:.3} prt={:.4} (positives={})",
        report.auc,
        report.recall_at[&1],
        report.recall_at[&5],
        report.recall_at[&10],
        report.mean_time_ms,
        report.prt,
        report.positive_queries
    );
    Ok(())
}

pub fn sweep(
    settings: &Settings,
    root: &Path,
    gt_path: &Path,
    param: &str,
    values: &[f64],
    tolerance: Option<u32>,
) -> anyhow::Result<()> {
    if values.is_empty() {
        bail!("sweep needs at least one value");
    }
    let manifest = load_sequence(root)?;
    let mut gt = load_ground_truth(gt_path)?;
    if let Some(t) = tolerance {
        gt.tolerance = t;
    }
    ensure_out(&settings.out)?;

    let mut csv = String::from(
        "param,value,cells,nodes,mean_time_ms,mean_retrieval_ms,auc,r_at_1,r_at_5,r_at_10\n",
    );
    for &value in values {
        let mut run_settings = settings.clone();
        let label: String;
        match param {
            "sp" => {
                if value.fract() != 0.0 || value < 2.0 {
                    bail!("sp values must be integers >= 2, got {value}");
                }
                run_settings.seg.sp = value as usize;
                run_settings.seg.spatial_norm = value;
                label = format!("sp-{}", value as usize);
            }
            "beta" => {
                run_settings.pipe.beta = value;
                // Beta only matters to the node selector.
                run_settings.pipe.mode = Mode::DynamicNodes;
                label = format!("beta-{value}");
            }
            other => bail!("unknown sweep parameter '{other}' (expected 'sp' or 'beta')"),
        }
        let sub_out = settings.out.join("sweep").join(&label);
        let output = run_detect(&run_settings, &manifest, &sub_out)?;
        let report = evaluate(
            &output.rows,
            &gt,
            run_settings.pipe.temporal_gap,
            settings.omega,
        )?;
        let nodes = output
            .nodes
            .map(|n| n.to_string())
            .unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{},{},{},{}\n",
            param,
            value,
            output.cells,
            nodes,
            output.mean_frame_ms,
            output.mean_retrieval_ms,
            report.auc,
            report.recall_at[&1],
            report.recall_at[&5],
            report.recall_at[&10],
        ));
        println!(
            "{param}={value}: cells={} nodes={} auc={:.4} r@1={:.4} mean_time_ms={:.3}",
            output.cells,
            output.nodes.map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
            report.auc,
            report.recall_at[&1],
            output.mean_frame_ms
        );
    }
    std::fs::write(settings.out.join("sweep.csv"), csv)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn fixture(
    settings: &Settings,
    frames: usize,
    revisits: usize,
    noise: u8,
    width: u32,
    height: u32,
    group_size: usize,
) -> anyhow::Result<()> {
    let spec = FixtureSpec {
        frames,
        revisits,
        noise,
        width,
        height,
        group_size,
        seed: settings.seed,
    };
    let fixture = generate(&spec)?;
    write_fixture(&fixture, &settings.out)?;
    println!(
        "wrote {} images ({} revisits) and gt.csv to {}",
        fixture.images.len(),
        revisits,
        settings.out.display()
    );
    Ok(())
}
