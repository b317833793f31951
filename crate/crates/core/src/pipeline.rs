//! End-to-end pipeline stages driven by a [`RunConfig`].
//!
//! Each stage is a pure function of (config, corpus on disk); the CLI
//! wraps these with argument parsing, and the acceptance suite drives
//! them directly.

use crate::config::RunConfig;
use crate::corpus::{self, CorpusManifest};
use crate::dataset::{self, AugmentSpec, AugmentedCorpus, NormStats};
use crate::error::{Error, Result};
use crate::eval::{rois_for_phantom, EvaluationReport, MethodComparison};
use crate::fit::FitLog;
use crate::maps::ParameterMaps;
use crate::nn::{
    build_unet, infer, load_checkpoint, save_checkpoint, train, write_history_csv, EpochStats,
    UNetModel,
};
use crate::protocol::AcquisitionProtocol;
use ndarray::{Array2, Array3};
use std::path::{Path, PathBuf};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn stats_path(model_dir: &Path) -> PathBuf {
    model_dir.join("norm_stats.json")
}

pub fn checkpoint_path(model_dir: &Path) -> PathBuf {
    model_dir.join("checkpoint.ckpt")
}

pub fn save_stats(path: &Path, stats: &NormStats) -> Result<()> {
    let json = serde_json::to_string_pretty(stats).expect("stats serialize");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_stats(path: &Path) -> Result<NormStats> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        reason: e.to_string(),
    })
}

/// Generate the phantom corpus under the run's corpus directory.
pub fn run_phantom(config: &RunConfig) -> Result<CorpusManifest> {
    let root = config.corpus_dir();
    ensure_dir(&root)?;
    let protocol = AcquisitionProtocol::default_cardiac();
    corpus::generate_corpus(
        &root,
        config.corpus.size,
        config.seed,
        &protocol,
        &config.phantom,
        &config.corpus.corruption,
    )
}

/// Conventional fit over every corpus sample (bipolar-flagged series are
/// routed to even/odd processing).
pub fn run_fit(config: &RunConfig) -> Result<Vec<FitLog>> {
    let root = config.corpus_dir();
    let mut manifest = CorpusManifest::load(&root)?;
    corpus::fit_corpus(&root, &mut manifest, &config.fit)
}

/// Train the configured input mode; writes the checkpoint, history CSV
/// and normalization stats into the run's model directory.
pub fn run_train(config: &RunConfig) -> Result<(UNetModel, Vec<EpochStats>)> {
    let root = config.corpus_dir();
    let manifest = CorpusManifest::load(&root)?;
    let model_dir = config.model_dir();
    ensure_dir(&model_dir)?;

    let train_samples = corpus::load_samples(
        &root,
        &manifest,
        manifest.train_entries(),
        config.mode,
        config.eval.teacher_targets,
    )?;
    let val_samples = corpus::load_samples(
        &root,
        &manifest,
        manifest.val_entries(),
        config.mode,
        config.eval.teacher_targets,
    )?;

    let stats = dataset::compute_norm_stats(&train_samples, config.eval.norm_samples)?;
    save_stats(&stats_path(&model_dir), &stats)?;

    let train_set = AugmentedCorpus::new(&train_samples, &stats, config.augment, config.mode);
    let val_set = AugmentedCorpus::new(&val_samples, &stats, AugmentSpec::none(), config.mode);

    let mut model = build_unet(&config.unet_for_mode(), config.seed)?;
    let history = train(&mut model, &train_set, &val_set, &config.train)?;
    save_checkpoint(&model, checkpoint_path(&model_dir))?;
    write_history_csv(&history, model_dir.join("history.csv"))?;
    Ok((model, history))
}

/// Normalize an assembled input, run the network, denormalize back to
/// physical units. The returned maps carry an all-true mask.
pub fn predict_maps(
    model: &UNetModel,
    stats: &NormStats,
    input_raw: &Array3<f64>,
) -> Result<ParameterMaps> {
    let mut input = input_raw.clone();
    dataset::normalize_input(&mut input, stats)?;
    let mut pred = infer(model, &input)?;
    dataset::denormalize_prediction(&mut pred, stats)?;
    let (_, h, w) = pred.dim();
    dataset::prediction_to_maps(&pred, Array2::from_elem((h, w), true))
}

pub struct EvalArtifacts {
    pub vs_conventional: EvaluationReport,
    pub vs_truth: EvaluationReport,
}

/// Predict on the test split and compare against the conventional fits
/// and the simulator ground truth. Writes predictions, reports and
/// scatter CSVs into the run's eval directory.
pub fn run_eval(config: &RunConfig) -> Result<EvalArtifacts> {
    let root = config.corpus_dir();
    let manifest = CorpusManifest::load(&root)?;
    let model_dir = config.model_dir();
    let model = load_checkpoint(checkpoint_path(&model_dir))?;
    let stats = load_stats(&stats_path(&model_dir))?;
    let eval_dir = config.eval_dir();
    ensure_dir(&eval_dir.join("pred"))?;

    let mut vs_conventional = MethodComparison::new(config.mode.name());
    let mut vs_truth = MethodComparison::new(config.mode.name());
    for entry in manifest.test_entries() {
        let series = corpus::load_series(&root, entry, &manifest.protocol)?;
        let input = dataset::assemble_input(&series, config.mode)?;
        let pred = predict_maps(&model, &stats, &input)?;
        corpus::write_maps(eval_dir.join(format!("pred/{:06}.wft", entry.index)), &pred)?;

        let conventional = corpus::load_fit(&root, entry)?;
        let truth = corpus::load_truth(&root, entry)?;
        let rois = rois_for_phantom(&entry.phantom, config.eval.background_frame_px);
        vs_conventional.add_case(&pred, &conventional, &rois)?;
        vs_truth.add_case(&pred, &truth, &rois)?;
    }

    write_scatter_csv(&eval_dir.join("scatter_vs_conventional.csv"), &vs_conventional)?;
    write_scatter_csv(&eval_dir.join("scatter_vs_truth.csv"), &vs_truth)?;
    let artifacts = EvalArtifacts {
        vs_conventional: vs_conventional.finish(),
        vs_truth: vs_truth.finish(),
    };
    write_report_json(
        &eval_dir.join("report_vs_conventional.json"),
        &artifacts.vs_conventional,
    )?;
    write_report_json(&eval_dir.join("report_vs_truth.json"), &artifacts.vs_truth)?;
    Ok(artifacts)
}

pub fn write_report_json(path: &Path, report: &EvaluationReport) -> Result<()> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_report_json(path: &Path) -> Result<EvaluationReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        reason: e.to_string(),
    })
}

fn write_scatter_csv(path: &Path, cmp: &MethodComparison) -> Result<()> {
    let mut out = String::from("quantity,roi_label,predicted,reference\n");
    for (quantity, label, pred, reference) in cmp.scatter_rows() {
        out.push_str(&format!("{quantity},{label},{pred:.10e},{reference:.10e}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Per-quantity display windows for PGM panel export.
pub fn window_for(quantity: &str) -> (f64, f64) {
    match quantity {
        "water" | "fat" => (0.0, 1.2),
        "r2star" => (0.0, 300.0),
        "offres" => (-200.0, 200.0),
        _ => (0.0, 1.0),
    }
}

/// Build the human-readable summary and PGM panels from a finished eval.
/// Returns the summary text.
pub fn run_report(config: &RunConfig) -> Result<String> {
    let root = config.corpus_dir();
    let manifest = CorpusManifest::load(&root)?;
    let eval_dir = config.eval_dir();
    let panels_dir = eval_dir.join("panels");
    ensure_dir(&panels_dir)?;

    let report = load_report_json(&eval_dir.join("report_vs_conventional.json"))?;
    let report_truth = load_report_json(&eval_dir.join("report_vs_truth.json"))?;

    let mut summary = String::new();
    summary.push_str(&format!(
        "mode {} over {} test cases\n\nROI correlation (r^2, p) of DL against each reference:\n",
        report.mode, report.cases
    ));
    for q in &report.quantities {
        let conv = q
            .pooled
            .map(|c| format!("r2 {:.4} (p {:.2e}, n {})", c.r_squared, c.p_value, c.n))
            .unwrap_or_else(|| "skipped".into());
        let truth = report_truth
            .quantity(&q.quantity)
            .and_then(|t| t.pooled)
            .map(|c| format!("r2 {:.4}", c.r_squared))
            .unwrap_or_else(|| "skipped".into());
        summary.push_str(&format!(
            "  {:>7}: vs conventional {conv}; vs truth {truth}\n",
            q.quantity
        ));
    }
    if let Some(snr) = &report.snr {
        let p = snr
            .paired_test
            .map(|t| format!("{:.2e}", t.p_value))
            .unwrap_or_else(|| "n/a".into());
        summary.push_str(&format!(
            "\nSNR (septum / background frame on water maps):\n  dl {:.3} vs conventional {:.3}; (dl-conv)/dl = {:.1}% (paired p {p})\n",
            snr.pred_mean,
            snr.ref_mean,
            100.0 * snr.percent_higher
        ));
    }
    for w in &report.warnings {
        summary.push_str(&format!("warning: {w}\n"));
    }
    std::fs::write(eval_dir.join("summary.txt"), &summary)
        .map_err(|e| Error::io(eval_dir.join("summary.txt"), e))?;

    let panels = config.eval.report_panels.min(manifest.test_entries().len());
    for entry in &manifest.test_entries()[..panels] {
        let truth = corpus::load_truth(&root, entry)?;
        let conventional = corpus::load_fit(&root, entry)?;
        let pred = corpus::read_maps(eval_dir.join(format!("pred/{:06}.wft", entry.index)))?;
        for (method, maps) in [("truth", &truth), ("conv", &conventional), ("dl", &pred)] {
            for quantity in ["water", "fat", "r2star", "offres"] {
                let image = match quantity {
                    "water" => &maps.water,
                    "fat" => &maps.fat,
                    "r2star" => &maps.r2star,
                    _ => &maps.offres,
                };
                crate::raster::write_pgm(
                    panels_dir.join(format!("{:06}_{method}_{quantity}.pgm", entry.index)),
                    image,
                    window_for(quantity),
                )?;
            }
        }
    }
    Ok(summary)
}
