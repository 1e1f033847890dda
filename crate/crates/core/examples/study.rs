//! Runs the method comparison on synthetic cohorts.
//!
//! `cargo run --release --example study -- [replicates] [chains] [iterations] [key=value ...]`
//! where the trailing assignments override the synthetic truth.

use std::time::Instant;

use stepdown::eval::{run_comparison, ComparisonConfig, OUTCOMES};
use stepdown::kv::KvMap;
use stepdown::sampler::FitConfig;
use stepdown::synth::TruthConfig;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let reps: usize = args.get(1).map_or(10, |s| s.parse().unwrap());
    let chains: usize = args.get(2).map_or(3, |s| s.parse().unwrap());
    let iters: usize = args.get(3).map_or(4000, |s| s.parse().unwrap());
    let mut kv = KvMap::new();
    kv.insert("n_patients", 200);
    for a in args.iter().skip(4) {
        kv.set_override(a).unwrap();
    }
    let mut cfg = ComparisonConfig::desk_scale(1);
    cfg.truth = TruthConfig::from_kv(&kv).unwrap();
    cfg.replicates = reps;
    cfg.fit = FitConfig {
        chains,
        seed: cfg.seed,
        ..FitConfig::with_iterations(iters)
    };
    if let Ok(v) = std::env::var("PATHS") {
        cfg.truth_paths = v.parse().unwrap();
    }
    let start = Instant::now();
    let rep = run_comparison(&cfg).unwrap();
    println!(
        "{} replicates in {:.0}s",
        reps,
        start.elapsed().as_secs_f64()
    );
    for m in &rep.methods {
        let r2: Vec<String> = OUTCOMES
            .iter()
            .zip(&m.r2)
            .map(|((n, _), (a, s))| format!("{n} {a:.3}({s:.3})"))
            .collect();
        let (h, o) = m.calibration.identity_hits();
        let low = m.calibration.lowest().unwrap();
        println!(
            "{:15} R2 {}; gamma1 {:.3} (atten {:.2}); calib {h}/{o}; low bin pred {:.3} true {:.3}; auc {:.3}",
            m.variant.label(),
            r2.join(" "),
            m.gamma[0].0,
            rep.attenuation(m.variant, 0).unwrap(),
            low.mean_pred,
            low.observed,
            m.roc.as_ref().map_or(f64::NAN, |r| r.auc)
        );
    }
    for r in &rep.replicates {
        let line: Vec<String> = r
            .methods
            .iter()
            .map(|m| format!("{} {:.3}/{:.3}", m.variant.name(), m.r2[0], m.r2[3]))
            .collect();
        println!(
            "rep {} n_stepdown {}: {}",
            r.replicate,
            r.stepdown_patients.len(),
            line.join("  ")
        );
    }
}
