//! The latent controller-medication path.
//!
//! `z(n) = max(0, mu[B(n)] + seg[B(n)](n))`, where `B` counts Poisson jumps and
//! visit-triggered jumps and each segment is a stationary OU deviation. Only
//! the censored round averages of `z` are ever observed.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::cohort::{Round, TimeGrid};
use crate::error::{Error, Result};

pub const MAX_LEVEL: u8 = 5;
/// Number of segments; a path carries at most `MAX_SEGMENTS - 1` jumps.
pub const MAX_SEGMENTS: usize = 10;

const MAX_JUMP_ATTEMPTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuParams {
    /// Stationary variance.
    pub var: f64,
    /// Decay per week.
    pub decay: f64,
}

impl OuParams {
    pub fn new(var: f64, decay: f64) -> Result<Self> {
        let p = OuParams { var, decay };
        p.check()?;
        Ok(p)
    }

    pub fn from_lag1(var: f64, lag1: f64) -> Result<Self> {
        if !(lag1 > 0.0 && lag1 < 1.0) {
            return Err(Error::Param(format!(
                "OU lag-one correlation {lag1} outside (0,1)"
            )));
        }
        Self::new(var, -lag1.ln())
    }

    pub fn check(&self) -> Result<()> {
        if !(self.var > 0.0 && self.var.is_finite()) {
            return Err(Error::Param(format!(
                "OU variance {} must be positive",
                self.var
            )));
        }
        if !(self.decay > 0.0 && self.decay.is_finite()) {
            return Err(Error::Param(format!(
                "OU decay {} must be positive",
                self.decay
            )));
        }
        Ok(())
    }

    pub fn lag1(&self) -> f64 {
        (-self.decay).exp()
    }
}

/// One draw of the stationary mean-zero OU process at the grid points.
pub fn sample_ou_path<R: Rng + ?Sized>(
    grid: &TimeGrid,
    p: &OuParams,
    rng: &mut R,
) -> Result<Vec<f64>> {
    p.check()?;
    if grid.is_empty() {
        return Err(Error::Param("empty time grid".into()));
    }
    let sd = p.var.sqrt();
    let mut out = Vec::with_capacity(grid.len());
    let z: f64 = rng.sample(StandardNormal);
    out.push(sd * z);
    for w in grid.points.windows(2) {
        let a = (-p.decay * (w[1] - w[0])).exp();
        let prev = *out.last().unwrap();
        let z: f64 = rng.sample(StandardNormal);
        out.push(a * prev + sd * (1.0 - a * a).sqrt() * z);
    }
    Ok(out)
}

/// Jump times of the counting process `B = C + D`.
///
/// A Poisson jump recorded at week `w` raises `B` from week `w` on. A visit
/// jump is recorded at the visit week `v` and raises `B` from week `v + 1`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct JumpPath {
    /// Weeks of Poisson jumps, sorted, repeated for multiple jumps.
    pub poisson: Vec<usize>,
    /// Visit weeks that triggered a jump, sorted.
    pub visit: Vec<usize>,
}

impl JumpPath {
    pub fn total(&self) -> usize {
        self.poisson.len() + self.visit.len()
    }

    /// `B(n)` for every week of an `n_weeks` grid.
    pub fn counts(&self, n_weeks: usize) -> Vec<usize> {
        let mut inc = vec![0usize; n_weeks + 1];
        for &w in &self.poisson {
            inc[w.min(n_weeks)] += 1;
        }
        for &v in &self.visit {
            inc[(v + 1).min(n_weeks)] += 1;
        }
        let mut b = 0;
        (0..n_weeks)
            .map(|n| {
                b += inc[n];
                b
            })
            .collect()
    }
}

/// Visit weeks whose jump would land inside an `n_weeks` grid.
pub fn eligible_visits(visit_weeks: impl IntoIterator<Item = usize>, n_weeks: usize) -> Vec<usize> {
    visit_weeks
        .into_iter()
        .filter(|&v| v + 1 < n_weeks)
        .collect()
}

/// Draws a jump path from the prior truncated to at most `MAX_SEGMENTS - 1`
/// jumps, by rejecting whole paths.
pub fn sample_jump_path<R: Rng + ?Sized>(
    visit_weeks: &std::collections::BTreeSet<usize>,
    grid: &TimeGrid,
    rho: f64,
    varpi: f64,
    rng: &mut R,
) -> Result<JumpPath> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::Param(format!("jump rate {rho} must be nonnegative")));
    }
    if !(0.0..=1.0).contains(&varpi) {
        return Err(Error::Param(format!(
            "visit jump probability {varpi} outside [0,1]"
        )));
    }
    let n = grid.len();
    let visits = eligible_visits(visit_weeks.iter().copied(), n);
    let limit = MAX_SEGMENTS - 1;
    let mut last_total = 0;
    for _ in 0..MAX_JUMP_ATTEMPTS {
        let mut path = JumpPath::default();
        for w in 1..n {
            let mean = rho * (grid.points[w] - grid.points[w - 1]);
            if mean > 0.0 {
                let k = Poisson::new(mean)
                    .map_err(|e| Error::Param(e.to_string()))?
                    .sample(rng) as usize;
                path.poisson.extend(std::iter::repeat_n(w, k));
            }
        }
        for &v in &visits {
            if rng.random::<f64>() < varpi {
                path.visit.push(v);
            }
        }
        last_total = path.total();
        if last_total <= limit {
            return Ok(path);
        }
    }
    Err(Error::JumpLimit {
        total: last_total,
        limit,
    })
}

/// An assembled medication path with the pieces it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct MedPath {
    pub mu: Vec<f64>,
    /// `segments[h][n]` is the OU deviation of segment `h` at week `n`.
    pub segments: Vec<Vec<f64>>,
    pub b: Vec<usize>,
    pub z: Vec<f64>,
}

#[inline]
pub fn truncate_level(v: f64) -> f64 {
    v.max(0.0)
}

pub fn assemble_med_path(
    mu: &[f64],
    segments: &[Vec<f64>],
    jumps: &JumpPath,
    n_weeks: usize,
) -> Result<MedPath> {
    let b = jumps.counts(n_weeks);
    let need = b.last().map_or(1, |&m| m + 1);
    if mu.len() < need || segments.len() < need {
        return Err(Error::Param(format!(
            "path needs {need} segments, got {} means and {} deviations",
            mu.len(),
            segments.len()
        )));
    }
    if let Some(s) = segments[..need].iter().find(|s| s.len() < n_weeks) {
        return Err(Error::Param(format!(
            "segment of length {} shorter than {n_weeks} weeks",
            s.len()
        )));
    }
    let z = b
        .iter()
        .enumerate()
        .map(|(n, &h)| truncate_level(mu[h] + segments[h][n]))
        .collect();
    Ok(MedPath {
        mu: mu.to_vec(),
        segments: segments.to_vec(),
        b,
        z,
    })
}

/// Observed level for a round whose weekly values sum to `sum` over `len` weeks.
#[inline]
pub fn censor_sum(sum: f64, len: usize) -> u8 {
    let v = (sum / len as f64 + 0.5).floor();
    if v >= MAX_LEVEL as f64 {
        MAX_LEVEL
    } else if v <= 0.0 {
        0
    } else {
        v as u8
    }
}

/// Observed level implied by a round average.
#[inline]
pub fn censor_mean(mean: f64) -> u8 {
    censor_sum(mean, 1)
}

pub fn censor_round_average(z: &[f64], r: &Round) -> u8 {
    censor_sum(z[r.weeks()].iter().sum(), r.len())
}

pub fn consistent_with_obs(z: &[f64], rounds: &[Round]) -> bool {
    rounds
        .iter()
        .all(|r| r.week_end <= z.len() && censor_round_average(z, r) as i64 == r.obs_med)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn round(start: usize, end: usize, med: i64) -> Round {
        Round {
            index: 1,
            week_start: start,
            week_end: end,
            obs_med: med,
            obs_rescue: 0,
            obs_ocs: 0,
        }
    }

    #[test]
    fn censor_worked_values() {
        assert_eq!(censor_mean(2.3), 2);
        assert_eq!(censor_mean(6.2), 5);
        assert_eq!(censor_mean(0.0), 0);
        assert_eq!(censor_mean(2.5), 3);
        assert_eq!(censor_mean(2.4999), 2);
    }

    #[test]
    fn consistency_of_constant_paths() {
        let r = [round(0, 20, 2)];
        assert!(consistent_with_obs(&[2.0; 20], &r));
        assert!(consistent_with_obs(&[2.49; 20], &r));
        assert!(!consistent_with_obs(&[2.51; 20], &r));
    }

    #[test]
    fn assemble_examples() {
        let flat = vec![vec![0.0; 20]; 2];
        let p = assemble_med_path(&[3.0], &flat, &JumpPath::default(), 20).unwrap();
        assert!(p.z.iter().all(|&v| v == 3.0));
        let p = assemble_med_path(&[-1.0], &flat, &JumpPath::default(), 20).unwrap();
        assert!(p.z.iter().all(|&v| v == 0.0));
        let jumps = JumpPath {
            poisson: vec![10],
            visit: vec![],
        };
        let p = assemble_med_path(&[1.0, 4.0], &flat, &jumps, 20).unwrap();
        assert!(p.z[..10].iter().all(|&v| v == 1.0));
        assert!(p.z[10..].iter().all(|&v| v == 4.0));
        assert!(assemble_med_path(&[1.0], &flat, &jumps, 20).is_err());
    }

    #[test]
    fn jump_counts_visit_semantics() {
        let j = JumpPath {
            poisson: vec![3, 3],
            visit: vec![5],
        };
        assert_eq!(j.counts(8), vec![0, 0, 0, 2, 2, 2, 3, 3]);
    }

    #[test]
    fn jump_path_degenerate_cases() {
        let grid = TimeGrid::weekly(30);
        let visits: BTreeSet<usize> = [4, 11, 20].into_iter().collect();
        let mut rng = substream(1, 0, 0, 0);
        let j = sample_jump_path(&visits, &grid, 0.0, 0.0, &mut rng).unwrap();
        assert_eq!(j.total(), 0);
        let j = sample_jump_path(&visits, &grid, 0.0, 1.0, &mut rng).unwrap();
        assert_eq!(j.visit, vec![4, 11, 20]);
        assert!(j.poisson.is_empty());
        assert!(sample_jump_path(&visits, &grid, -1.0, 0.5, &mut rng).is_err());
        assert!(sample_jump_path(&visits, &grid, 0.1, 1.5, &mut rng).is_err());
    }

    #[test]
    fn poisson_jump_mean() {
        // 101 grid points give a 100-week span.
        let grid = TimeGrid::weekly(101);
        let rho = 0.003 * 7.0;
        let mut rng = substream(2, 0, 0, 0);
        let reps = 10_000;
        let mut sum = 0.0;
        for _ in 0..reps {
            sum += sample_jump_path(&BTreeSet::new(), &grid, rho, 0.0, &mut rng)
                .unwrap()
                .poisson
                .len() as f64;
        }
        let mean = sum / reps as f64;
        // The truncation at nine jumps is immaterial at a mean of 2.1.
        let se = (2.1f64 / reps as f64).sqrt();
        assert!((mean - 2.1).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn ou_single_point_marginal() {
        let grid = TimeGrid::weekly(1);
        let p = OuParams::new(2.0, 0.5).unwrap();
        let mut rng = substream(3, 0, 0, 0);
        let n = 50_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_ou_path(&grid, &p, &mut rng).unwrap()[0])
            .collect();
        let var = xs.iter().map(|x| x * x).sum::<f64>() / n as f64;
        let se = 2.0 * (2.0 / n as f64).sqrt();
        assert!((var - 2.0).abs() < 4.0 * se, "var {var}");
    }

    fn lag1_corr(p: &OuParams, n: usize, seed: u64) -> (f64, f64) {
        let grid = TimeGrid::weekly(2);
        let mut rng = substream(seed, 0, 0, 0);
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let x = sample_ou_path(&grid, p, &mut rng).unwrap();
            sxy += x[0] * x[1];
            sxx += x[0] * x[0];
            syy += x[1] * x[1];
        }
        let r = sxy / (sxx * syy).sqrt();
        (r, (1.0 - r * r) / (n as f64).sqrt())
    }

    #[test]
    fn ou_prior_mean_lag_correlation() {
        let p = OuParams::new(0.0125, -(6.0f64 / 9.0).ln()).unwrap();
        let (r, se) = lag1_corr(&p, 100_000, 4);
        assert!((r - 2.0 / 3.0).abs() < 3.0 * se, "r {r}");
    }

    #[test]
    fn ou_decorrelation_limit() {
        let p = OuParams::from_lag1(1.0, 1e-8).unwrap();
        let (r, _) = lag1_corr(&p, 100_000, 5);
        assert!(r.abs() < 3.0 / (100_000f64).sqrt(), "r {r}");
    }

    #[test]
    fn ou_rejects_bad_params() {
        assert!(OuParams::new(0.0, 1.0).is_err());
        assert!(OuParams::new(1.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn censor_is_monotone(z in prop::collection::vec(0.0f64..7.0, 16..24), bump in prop::collection::vec(0.0f64..2.0, 24)) {
            let r = round(0, z.len(), 0);
            let raised: Vec<f64> = z.iter().zip(&bump).map(|(a, b)| a + b).collect();
            prop_assert!(censor_round_average(&raised, &r) >= censor_round_average(&z, &r));
        }

        #[test]
        fn jumps_only_at_visits(seed in any::<u64>()) {
            let grid = TimeGrid::weekly(40);
            let visits: BTreeSet<usize> = [0, 7, 8, 30, 39].into_iter().collect();
            let mut rng = substream(seed, 0, 0, 0);
            let j = sample_jump_path(&visits, &grid, 0.0, 0.6, &mut rng).unwrap();
            let b = j.counts(40);
            for n in 1..40 {
                if b[n] != b[n - 1] {
                    prop_assert!(visits.contains(&(n - 1)));
                }
            }
        }
    }
}
