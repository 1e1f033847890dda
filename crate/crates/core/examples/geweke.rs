//! Geweke joint-distribution check on the micro design.
//!
//! `cargo run --release --example geweke -- [marginal draws] [chain length] [seed] [variant]`

use std::time::Instant;

use stepdown::sampler::forward::{geweke_test, micro_prior, Design};
use stepdown::sampler::Variant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let m: usize = args.get(1).and_then(|v| v.parse().ok()).unwrap_or(20000);
    let s: usize = args.get(2).and_then(|v| v.parse().ok()).unwrap_or(100000);
    let seed: u64 = args.get(3).and_then(|v| v.parse().ok()).unwrap_or(1);
    let variant: Variant = args.get(4).map_or(Variant::Full, |v| v.parse().unwrap());
    let t = Instant::now();
    let stats = geweke_test(&Design::micro(), &micro_prior(), variant, m, s, seed).unwrap();
    println!("{:.1}s", t.elapsed().as_secs_f64());
    for st in stats {
        println!(
            "{:>14} {:>10.5} {:>10.5} z={:>7.2}",
            st.name, st.marginal, st.successive, st.z
        );
    }
}
