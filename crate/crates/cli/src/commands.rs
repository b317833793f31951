//! Subcommand implementations: thin wrappers over the library pipeline.

use std::path::Path;
use wfsep_core::config::RunConfig;
use wfsep_core::corpus::{self, CorpusManifest};
use wfsep_core::dataset;
use wfsep_core::error::Result;
use wfsep_core::nn::load_checkpoint;
use wfsep_core::pipeline;
use wfsep_core::raster;

pub fn cmd_phantom(config: &RunConfig) -> Result<()> {
    let manifest = pipeline::run_phantom(config)?;
    let bipolar = manifest.samples.iter().filter(|s| s.bipolar.is_some()).count();
    println!(
        "corpus: {} samples at {} ({} bipolar), split {:?}",
        manifest.samples.len(),
        config.corpus_dir().display(),
        bipolar,
        manifest.split
    );
    Ok(())
}

pub fn cmd_fit(config: &RunConfig) -> Result<()> {
    let logs = pipeline::run_fit(config)?;
    let even_odd = logs.iter().filter(|l| l.route == "even_odd").count();
    let residual_mean =
        logs.iter().map(|l| l.residual_mean).sum::<f64>() / logs.len().max(1) as f64;
    println!(
        "fit: {} samples ({} routed even/odd), mean residual {residual_mean:.4}",
        logs.len(),
        even_odd
    );
    Ok(())
}

pub fn cmd_train(config: &RunConfig) -> Result<()> {
    let (_, history) = pipeline::run_train(config)?;
    let first = history.first().expect("epochs >= 1");
    let last = history.last().expect("epochs >= 1");
    println!(
        "train[{}]: {} epochs, loss {:.5} -> {:.5} (val {:.5})",
        config.mode.name(),
        history.len(),
        first.train_loss,
        last.train_loss,
        last.val_loss
    );
    Ok(())
}

pub fn cmd_predict(
    config: &RunConfig,
    series_path: &Path,
    output: &Path,
    checkpoint: Option<&Path>,
    stats: Option<&Path>,
) -> Result<()> {
    let model_dir = config.model_dir();
    let checkpoint = checkpoint
        .map(Path::to_path_buf)
        .unwrap_or_else(|| pipeline::checkpoint_path(&model_dir));
    let stats = stats
        .map(Path::to_path_buf)
        .unwrap_or_else(|| pipeline::stats_path(&model_dir));
    let model = load_checkpoint(&checkpoint)?;
    let stats = pipeline::load_stats(&stats)?;

    let protocol = match CorpusManifest::load(&config.corpus_dir()) {
        Ok(m) => m.protocol,
        Err(_) => wfsep_core::protocol::AcquisitionProtocol::default_cardiac(),
    };
    let series = raster::read_series(series_path, protocol)?;
    let input = dataset::assemble_input(&series, config.mode)?;
    let maps = pipeline::predict_maps(&model, &stats, &input)?;
    corpus::write_maps(output, &maps)?;
    println!("predict: {} -> {}", series_path.display(), output.display());
    Ok(())
}

pub fn cmd_eval(config: &RunConfig) -> Result<()> {
    let artifacts = pipeline::run_eval(config)?;
    println!("eval[{}]: r^2 vs conventional / truth", config.mode.name());
    for q in &artifacts.vs_conventional.quantities {
        let conv = q.pooled.map(|c| c.r_squared).unwrap_or(f64::NAN);
        let truth = artifacts
            .vs_truth
            .r_squared(&q.quantity)
            .unwrap_or(f64::NAN);
        println!("  {:>7}: {conv:.4} / {truth:.4}", q.quantity);
    }
    if let Some(snr) = &artifacts.vs_conventional.snr {
        println!(
            "  SNR: dl {:.2} vs conventional {:.2} ({:+.1}%)",
            snr.pred_mean,
            snr.ref_mean,
            100.0 * snr.percent_higher
        );
    }
    Ok(())
}

pub fn cmd_report(config: &RunConfig) -> Result<()> {
    let summary = pipeline::run_report(config)?;
    print!("{summary}");
    println!(
        "panels under {}",
        config.eval_dir().join("panels").display()
    );
    Ok(())
}
