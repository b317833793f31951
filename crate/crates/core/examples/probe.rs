// scratch: teacher test-retest ceiling across independent noise draws
use wfsep_core::corpus::*;
use wfsep_core::eval::*;
use wfsep_core::fit::*;
use wfsep_core::signal::*;
use std::path::Path;

fn main() {
    let root = Path::new("/tmp/smoke/run_c4/corpus");
    let manifest = CorpusManifest::load(root).unwrap();
    let options = FitOptions::default();
    let mut cmp = MethodComparison::new("retest");
    for entry in manifest.test_entries().iter().take(15) {
        let truth = load_truth(root, entry).unwrap();
        let clean = simulate_series(&truth, &manifest.protocol).unwrap();
        let noisy2 = add_noise(&clean, &NoiseSpec { sigma: entry.noise_sigma, seed: entry.noise_seed ^ 0xDEAD }).unwrap();
        let fit2 = separate(&noisy2, &options).unwrap();
        let fit1 = load_fit(root, entry).unwrap();
        let rois = rois_for_phantom(&entry.phantom, 8);
        cmp.add_case(&fit2, &fit1, &rois).unwrap();
    }
    let report = cmp.finish();
    println!("teacher test-retest r^2 over 15 test phantoms:");
    for q in &report.quantities {
        if let Some(p) = q.pooled {
            println!("  {:>7}: r2 {:.4}", q.quantity, p.r_squared);
            for (label, c) in &q.by_label {
                println!("           {label}: r2 {:.3} (n {})", c.r_squared, c.n);
            }
        }
    }
}
