//! Outcome intensities, the Poisson likelihood and the time-varying effects.
//!
//! Outcome `l` of patient `i` has weekly rate
//! `exp(alpha[l] + x.beta[l] + gamma[l] z(n) + delta[n][l])`. ED/IP visits are
//! observed weekly; rescue and OCS fills only as round totals, whose law is
//! Poisson with the summed weekly rate.

use nalgebra::{DMatrix, Matrix3};
use rand::Rng;

use crate::cohort::{Patient, TimeGrid};
use crate::dens::ln_poisson;
use crate::error::{Error, Result};
use crate::latent::{consistent_with_obs, OuParams};
use crate::process::sample_bridge3;

pub const N_OUTCOMES: usize = 3;
pub const ED_IP: usize = 0;
pub const RESCUE: usize = 1;
pub const OCS: usize = 2;
pub const OUTCOME_NAMES: [&str; 3] = ["ed_ip", "rescue", "ocs"];

/// Population-level parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalParams {
    /// `beta[j][l]`: effect of covariate `j` on outcome `l`.
    pub beta: Vec<[f64; 3]>,
    pub gamma: [f64; 3],
    pub nu: [f64; 3],
    pub sigma: Matrix3<f64>,
    /// Decay of the time effects per week.
    pub theta: f64,
    /// Cross-outcome covariance of the time effects.
    pub phi: Matrix3<f64>,
    /// Stationary variance of the medication deviations.
    pub ou_var: f64,
    /// Decay of the medication deviations per week.
    pub ou_decay: f64,
    /// Poisson jump rate per week.
    pub rho: f64,
    /// Probability that a provider visit triggers a jump.
    pub varpi: f64,
}

impl GlobalParams {
    pub fn n_covariates(&self) -> usize {
        self.beta.len()
    }

    pub fn delta_lag(&self) -> f64 {
        (-self.theta).exp()
    }

    pub fn ou(&self) -> OuParams {
        OuParams {
            var: self.ou_var,
            decay: self.ou_decay,
        }
    }

    /// `x . beta[., l]` for each outcome.
    pub fn linear_predictor(&self, x: &[f64]) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (xj, b) in x.iter().zip(&self.beta) {
            for l in 0..3 {
                out[l] += xj * b[l];
            }
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        if self.gamma.iter().any(|&g| !(g < 0.0)) {
            return Err(Error::Param(format!(
                "gamma {:?} must be negative",
                self.gamma
            )));
        }
        if !(0.0..=1.0).contains(&self.varpi) {
            return Err(Error::Param(format!("varpi {} outside [0,1]", self.varpi)));
        }
        if !(self.rho >= 0.0) || !(self.theta > 0.0) {
            return Err(Error::Param(
                "rho must be nonnegative and theta positive".into(),
            ));
        }
        self.ou().check()?;
        for (name, m) in [("Sigma", &self.sigma), ("Phi", &self.phi)] {
            if (m - m.transpose()).abs().max() > 1e-12 * m.abs().max().max(1.0)
                || m.cholesky().is_none()
            {
                return Err(Error::Param(format!(
                    "{name} is not symmetric positive definite"
                )));
            }
        }
        Ok(())
    }
}

/// Patient random intercepts and weekly time effects.
#[derive(Debug, Clone, PartialEq)]
pub struct IndividualEffects {
    pub alpha: [f64; 3],
    /// `delta[n][l]`.
    pub delta: Vec<[f64; 3]>,
}

impl IndividualEffects {
    pub fn zero(n_weeks: usize) -> Self {
        IndividualEffects {
            alpha: [0.0; 3],
            delta: vec![[0.0; 3]; n_weeks],
        }
    }
}

/// Log intensity of outcome `l` at week `n`.
pub fn log_intensity(
    g: &GlobalParams,
    e: &IndividualEffects,
    x: &[f64],
    z: &[f64],
    l: usize,
    n: usize,
) -> f64 {
    e.alpha[l] + g.linear_predictor(x)[l] + g.gamma[l] * z[n] + e.delta[n][l]
}

/// Expected count over a period of `dt` weeks at constant log intensity.
#[inline]
pub fn week_rate(log_eta: f64, dt: f64) -> f64 {
    log_eta.exp() * dt
}

/// Log-likelihood of a patient's observed outcomes given the medication path.
///
/// Returns negative infinity when `z` contradicts an observed round level.
pub fn loglik_patient(p: &Patient, e: &IndividualEffects, z: &[f64], g: &GlobalParams) -> f64 {
    if z.len() < p.n_weeks() || !consistent_with_obs(z, &p.rounds) {
        return f64::NEG_INFINITY;
    }
    let xb = g.linear_predictor(&p.covariates);
    let rate =
        |l: usize, n: usize| week_rate(e.alpha[l] + xb[l] + g.gamma[l] * z[n] + e.delta[n][l], 1.0);
    let mut ll = 0.0;
    for (n, &y) in p.outcomes.ed_ip.iter().enumerate() {
        ll += ln_poisson(y as u64, rate(ED_IP, n));
    }
    for r in &p.rounds {
        for (l, obs) in [(RESCUE, r.obs_rescue), (OCS, r.obs_ocs)] {
            let total: f64 = r.weeks().map(|n| rate(l, n)).sum();
            ll += ln_poisson(obs as u64, total);
        }
    }
    ll
}

/// Lower Cholesky factor of a covariance, or a parameter error.
pub fn cholesky3(m: &Matrix3<f64>, name: &str) -> Result<Matrix3<f64>> {
    m.cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Param(format!("{name} is not positive definite")))
}

/// One draw of the separable time-effect process on a grid.
pub fn sample_delta<R: Rng + ?Sized>(
    g: &GlobalParams,
    grid: &TimeGrid,
    rng: &mut R,
) -> Result<Vec<[f64; 3]>> {
    let chol = cholesky3(&g.phi, "Phi")?;
    let mut out = vec![[0.0; 3]; grid.len()];
    if out.is_empty() {
        return Ok(out);
    }
    sample_bridge3(g.delta_lag(), &chol, None, None, &mut out[..1], rng);
    for n in 1..grid.len() {
        let a = (-g.theta * (grid.points[n] - grid.points[n - 1])).exp();
        let prev = out[n - 1];
        sample_bridge3(a, &chol, Some(prev), None, &mut out[n..n + 1], rng);
    }
    Ok(out)
}

/// Covariance of the stacked time effects, index `3 n + l`, assembled entry
/// by entry from the kernel `Phi[l][l'] exp(-theta |s - t|)`.
pub fn delta_covariance(phi: &Matrix3<f64>, theta: f64, grid: &TimeGrid) -> DMatrix<f64> {
    let n = grid.len();
    DMatrix::from_fn(3 * n, 3 * n, |r, c| {
        let (s, l) = (r / 3, r % 3);
        let (t, m) = (c / 3, c % 3);
        phi[(l, m)] * (-theta * (grid.points[s] - grid.points[t]).abs()).exp()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{Round, WeeklyOutcomes};
    use crate::dens::ln_factorial;
    use crate::rng::substream;
    use std::collections::BTreeSet;

    pub(crate) fn params(j: usize) -> GlobalParams {
        GlobalParams {
            beta: vec![[0.0; 3]; j],
            gamma: [-0.264, -0.017, -0.189],
            nu: [0.0; 3],
            sigma: Matrix3::identity(),
            theta: 0.1,
            phi: Matrix3::identity(),
            ou_var: 0.0125,
            ou_decay: 0.4,
            rho: 0.01,
            varpi: 1.0 / 3.0,
        }
    }

    #[test]
    fn intensity_examples() {
        let mut g = params(0);
        let mut e = IndividualEffects::zero(4);
        let z = [0.0, 3.0, 0.0, 0.0];
        g.gamma = [-1.0; 3];
        assert_eq!(log_intensity(&g, &e, &[], &z, 0, 0), 0.0);
        g.gamma[0] = -0.264;
        assert!((log_intensity(&g, &e, &[], &z, 0, 1) + 0.792).abs() < 1e-15);
        let before: Vec<f64> = (0..4)
            .map(|n| log_intensity(&g, &e, &[], &z, 2, n))
            .collect();
        e.alpha[2] += 0.37;
        for n in 0..4 {
            assert!((log_intensity(&g, &e, &[], &z, 2, n) - before[n] - 0.37).abs() < 1e-15);
        }
    }

    #[test]
    fn week_rate_examples() {
        assert_eq!(week_rate(0.0, 1.0), 1.0);
        assert!((week_rate(2f64.ln(), 1.0) - 2.0).abs() < 1e-15);
        // Step intensity over 20 weeks: 0.5/week for 8 weeks, 1.5/week for 12.
        let total: f64 = (0..20)
            .map(|n| week_rate(if n < 8 { 0.5f64.ln() } else { 1.5f64.ln() }, 1.0))
            .sum();
        assert!((total - (0.5 * 8.0 + 1.5 * 12.0)).abs() < 1e-12);
    }

    fn one_round_patient(weeks: usize, ed: Vec<i64>, rescue: i64, ocs: i64) -> Patient {
        Patient {
            id: "a".into(),
            raw_covariates: vec![],
            covariates: vec![],
            rounds: vec![Round {
                index: 1,
                week_start: 0,
                week_end: weeks,
                obs_med: 0,
                obs_rescue: rescue,
                obs_ocs: ocs,
            }],
            visit_weeks: BTreeSet::new(),
            outcomes: WeeklyOutcomes {
                ed_ip: ed,
                rescue: None,
                ocs: None,
            },
        }
    }

    #[test]
    fn zero_counts_give_minus_total_rate() {
        let g = params(0);
        let mut e = IndividualEffects::zero(16);
        e.alpha = [-1.0, 0.2, -0.5];
        for (n, d) in e.delta.iter_mut().enumerate() {
            *d = [0.01 * n as f64, -0.02 * n as f64, 0.03];
        }
        let p = one_round_patient(16, vec![0; 16], 0, 0);
        let z = vec![0.2; 16];
        let total: f64 = (0..3)
            .flat_map(|l| (0..16).map(move |n| (l, n)))
            .map(|(l, n)| log_intensity(&g, &e, &[], &z, l, n).exp())
            .sum();
        assert!((loglik_patient(&p, &e, &z, &g) + total).abs() < 1e-12);
    }

    #[test]
    fn round_count_pmf() {
        let g = params(0);
        let e = IndividualEffects::zero(16);
        let z = vec![0.0; 16];
        let p = one_round_patient(16, vec![0; 16], 3, 0);
        // ED and OCS contribute -16 each; rescue has rate 16 and count 3.
        let lam = 16.0f64;
        let expect = -16.0 - 16.0 + 3.0 * lam.ln() - lam - ln_factorial(3);
        assert!((loglik_patient(&p, &e, &z, &g) - expect).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_path_is_impossible() {
        let g = params(0);
        let e = IndividualEffects::zero(16);
        let p = one_round_patient(16, vec![0; 16], 0, 0);
        assert_eq!(loglik_patient(&p, &e, &[0.6; 16], &g), f64::NEG_INFINITY);
    }

    /// The round-total pmf equals the weekly model summed over every
    /// allocation of the total to weeks.
    #[test]
    fn superposition_by_enumeration() {
        fn alloc(total: u64, weeks: usize, prefix: &mut Vec<u64>, out: &mut Vec<Vec<u64>>) {
            if prefix.len() == weeks - 1 {
                let used: u64 = prefix.iter().sum();
                let mut v = prefix.clone();
                v.push(total - used);
                out.push(v);
                return;
            }
            let used: u64 = prefix.iter().sum();
            for k in 0..=(total - used) {
                prefix.push(k);
                alloc(total, weeks, prefix, out);
                prefix.pop();
            }
        }
        let rates_all = [0.3, 1.1, 0.05];
        for weeks in 1..=3 {
            let rates = &rates_all[..weeks];
            for total in 0..=4u64 {
                let mut allocs = Vec::new();
                alloc(total, weeks, &mut Vec::new(), &mut allocs);
                let marg: f64 = allocs
                    .iter()
                    .map(|a| {
                        a.iter()
                            .zip(rates)
                            .map(|(&k, &r)| ln_poisson(k, r))
                            .sum::<f64>()
                            .exp()
                    })
                    .sum();
                let lam: f64 = rates.iter().sum();
                assert!((marg.ln() - ln_poisson(total, lam)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kronecker_identity() {
        let mut rng = substream(10, 0, 0, 0);
        for trial in 0..20 {
            let n = 1 + trial % 6;
            let mut pts = vec![0.0];
            for _ in 1..n {
                pts.push(pts.last().unwrap() + rng.random_range(0.2..3.0));
            }
            let grid = TimeGrid::new(pts).unwrap();
            let a = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let phi = a * a.transpose() + Matrix3::identity() * 0.1;
            let theta = rng.random_range(0.01..2.0);
            let time = DMatrix::from_fn(n, n, |s, t| {
                (-theta * (grid.points[s] - grid.points[t]).abs()).exp()
            });
            let phi_d = DMatrix::from_fn(3, 3, |r, c| phi[(r, c)]);
            let kron = time.kronecker(&phi_d);
            let built = delta_covariance(&phi, theta, &grid);
            assert!((built - kron).abs().max() < 1e-12);
        }
    }

    #[test]
    fn delta_single_point_and_limits() {
        let mut g = params(0);
        g.phi = Matrix3::new(2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 0.5);
        let mut rng = substream(11, 0, 0, 0);
        let n = 40_000;
        let mut s = Matrix3::zeros();
        for _ in 0..n {
            let d = sample_delta(&g, &TimeGrid::weekly(1), &mut rng).unwrap()[0];
            let v = nalgebra::Vector3::from(d);
            s += v * v.transpose();
        }
        s /= n as f64;
        for r in 0..3 {
            for c in 0..3 {
                let se =
                    ((g.phi[(r, c)].powi(2) + g.phi[(r, r)] * g.phi[(c, c)]) / n as f64).sqrt();
                assert!((s[(r, c)] - g.phi[(r, c)]).abs() < 4.0 * se);
            }
        }
        g.theta = 1e-12;
        let path = sample_delta(&g, &TimeGrid::weekly(30), &mut rng).unwrap();
        for d in &path {
            for l in 0..3 {
                assert!((d[l] - path[0][l]).abs() < 1e-4);
            }
        }
        g.phi[(0, 0)] = -1.0;
        assert!(sample_delta(&g, &TimeGrid::weekly(3), &mut rng).is_err());
    }
}
