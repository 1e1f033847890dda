//! Convergence diagnostics over several chains of one scalar.

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

fn var(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)
}

fn split(chains: &[Vec<f64>]) -> Vec<&[f64]> {
    let mut out = Vec::with_capacity(2 * chains.len());
    for c in chains {
        let h = c.len() / 2;
        out.push(&c[..h]);
        out.push(&c[c.len() - h..]);
    }
    out
}

/// Potential scale reduction computed on split chains. Constant input gives 1.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    let n = parts.first().map_or(0, |p| p.len());
    if n < 2 || parts.len() < 2 {
        return f64::NAN;
    }
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = mean(&parts.iter().map(|p| var(p)).collect::<Vec<_>>());
    let b = n as f64 * var(&means);
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    let nf = n as f64;
    (((nf - 1.0) / nf * w + b / nf) / w).sqrt()
}

fn autocov(x: &[f64], lag: usize) -> f64 {
    let m = mean(x);
    let n = x.len();
    (0..n - lag)
        .map(|i| (x[i] - m) * (x[i + lag] - m))
        .sum::<f64>()
        / n as f64
}

/// Effective sample size from the multi-chain autocorrelation, truncated by
/// Geyer's initial monotone sequence.
pub fn ess(chains: &[Vec<f64>]) -> f64 {
    let parts = split(chains);
    let n = parts.first().map_or(0, |p| p.len());
    let m = parts.len();
    if n < 4 {
        return f64::NAN;
    }
    let nf = n as f64;
    let means: Vec<f64> = parts.iter().map(|p| mean(p)).collect();
    let w = mean(&parts.iter().map(|p| var(p)).collect::<Vec<_>>());
    let b_over_n = if m > 1 { var(&means) } else { 0.0 };
    let var_plus = (nf - 1.0) / nf * w + b_over_n;
    if !(var_plus > 0.0) {
        return (m * n) as f64;
    }
    let rho = |t: usize| {
        let ac = parts.iter().map(|p| autocov(p, t)).sum::<f64>() / m as f64;
        1.0 - (w - ac) / var_plus
    };
    let mut tau = -1.0;
    let mut prev = f64::INFINITY;
    let mut k = 0;
    while 2 * k + 1 < n {
        let mut pair = rho(2 * k) + rho(2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        pair = pair.min(prev);
        prev = pair;
        tau += 2.0 * pair;
        k += 1;
    }
    let total = (m * n) as f64;
    total / tau.max(1.0 / total.log10().max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn ar1(a: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, 0, 0, 0);
        let mut x = 0.0;
        (0..n)
            .map(|_| {
                let e: f64 = rng.sample(StandardNormal);
                x = a * x + e;
                x
            })
            .collect()
    }

    #[test]
    fn iid_chains() {
        let chains: Vec<Vec<f64>> = (0..4).map(|c| ar1(0.0, 2000, c)).collect();
        let r = split_rhat(&chains);
        assert!(r < 1.01, "{r}");
        let e = ess(&chains);
        assert!(e > 6000.0 && e < 10000.0, "{e}");
    }

    #[test]
    fn ar1_ess_matches_theory() {
        // tau = (1 + a) / (1 - a) = 3 for a = 0.5
        let chains: Vec<Vec<f64>> = (0..4).map(|c| ar1(0.5, 5000, 10 + c)).collect();
        let e = ess(&chains);
        let expect = 20000.0 / 3.0;
        assert!((e - expect).abs() < 0.15 * expect, "{e}");
    }

    #[test]
    fn shifted_chains_flagged() {
        let mut chains: Vec<Vec<f64>> = (0..3).map(|c| ar1(0.0, 1000, 20 + c)).collect();
        for v in &mut chains[0] {
            *v += 3.0;
        }
        assert!(split_rhat(&chains) > 1.2);
    }

    #[test]
    fn constant_chains() {
        let chains = vec![vec![1.5; 10], vec![1.5; 10]];
        assert_eq!(split_rhat(&chains), 1.0);
    }
}
