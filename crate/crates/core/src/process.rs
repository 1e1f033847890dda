//! Stationary AR(1) machinery shared by the latent medication deviations and
//! the time-varying random effects.
//!
//! Both processes are sampled on a weekly grid with lag-one coefficient
//! `a = exp(-decay)`; the three-outcome effect process is separable, so every
//! conditional law is the scalar one with the noise coloured by `chol(Phi)`.

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::StandardNormal;

/// Conditional law of one AR(1) value given optional neighbours at the given
/// lags: mean `left * x_left + right * x_right`, variance `var` times the
/// stationary variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BridgeWeights {
    pub left: f64,
    pub right: f64,
    pub var: f64,
}

pub fn bridge_weights(a: f64, lag_left: Option<usize>, lag_right: Option<usize>) -> BridgeWeights {
    match (lag_left, lag_right) {
        (None, None) => BridgeWeights {
            left: 0.0,
            right: 0.0,
            var: 1.0,
        },
        (Some(l), None) => {
            let al = a.powi(l as i32);
            BridgeWeights {
                left: al,
                right: 0.0,
                var: 1.0 - al * al,
            }
        }
        (None, Some(r)) => {
            let ar = a.powi(r as i32);
            BridgeWeights {
                left: 0.0,
                right: ar,
                var: 1.0 - ar * ar,
            }
        }
        (Some(l), Some(r)) => {
            let al = a.powi(l as i32);
            let ar = a.powi(r as i32);
            let den = 1.0 - al * al * ar * ar;
            BridgeWeights {
                left: al * (1.0 - ar * ar) / den,
                right: ar * (1.0 - al * al) / den,
                var: (1.0 - al * al) * (1.0 - ar * ar) / den,
            }
        }
    }
}

/// Draws `out.len()` consecutive values of a scalar AR(1) with stationary
/// variance `var`, conditioned on the value just before the block (`left`)
/// and just after it (`right`), when those exist.
pub fn sample_bridge<R: Rng + ?Sized>(
    a: f64,
    var: f64,
    left: Option<f64>,
    right: Option<f64>,
    out: &mut [f64],
    rng: &mut R,
) {
    let len = out.len();
    let mut prev = left;
    for k in 0..len {
        let lag_right = right.map(|_| len - k);
        let w = bridge_weights(a, prev.map(|_| 1), lag_right);
        let mean = w.left * prev.unwrap_or(0.0) + w.right * right.unwrap_or(0.0);
        let z: f64 = rng.sample(StandardNormal);
        let v = mean + (w.var.max(0.0) * var).sqrt() * z;
        out[k] = v;
        prev = Some(v);
    }
}

/// Conditional mean of every value of a scalar block given its neighbours.
pub fn bridge_mean(a: f64, left: Option<f64>, right: Option<f64>, out: &mut [f64]) {
    let len = out.len();
    for (k, slot) in out.iter_mut().enumerate() {
        let w = bridge_weights(a, left.map(|_| k + 1), right.map(|_| len - k));
        *slot = w.left * left.unwrap_or(0.0) + w.right * right.unwrap_or(0.0);
    }
}

#[inline]
fn colour(chol: &Matrix3<f64>, z: [f64; 3]) -> [f64; 3] {
    [
        chol[(0, 0)] * z[0],
        chol[(1, 0)] * z[0] + chol[(1, 1)] * z[1],
        chol[(2, 0)] * z[0] + chol[(2, 1)] * z[1] + chol[(2, 2)] * z[2],
    ]
}

/// Three-outcome version of [`sample_bridge`]; `chol` is the lower Cholesky
/// factor of the cross-outcome covariance.
pub fn sample_bridge3<R: Rng + ?Sized>(
    a: f64,
    chol: &Matrix3<f64>,
    left: Option<[f64; 3]>,
    right: Option<[f64; 3]>,
    out: &mut [[f64; 3]],
    rng: &mut R,
) {
    let len = out.len();
    let mut prev = left;
    for k in 0..len {
        let w = bridge_weights(a, prev.map(|_| 1), right.map(|_| len - k));
        let p = prev.unwrap_or([0.0; 3]);
        let r = right.unwrap_or([0.0; 3]);
        let z = [
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        ];
        let e = colour(chol, z);
        let sd = w.var.max(0.0).sqrt();
        let v = [
            w.left * p[0] + w.right * r[0] + sd * e[0],
            w.left * p[1] + w.right * r[1] + sd * e[1],
            w.left * p[2] + w.right * r[2] + sd * e[2],
        ];
        out[k] = v;
        prev = Some(v);
    }
}

pub fn bridge_mean3(a: f64, left: Option<[f64; 3]>, right: Option<[f64; 3]>, out: &mut [[f64; 3]]) {
    let len = out.len();
    let p = left.unwrap_or([0.0; 3]);
    let r = right.unwrap_or([0.0; 3]);
    for (k, slot) in out.iter_mut().enumerate() {
        let w = bridge_weights(a, left.map(|_| k + 1), right.map(|_| len - k));
        for l in 0..3 {
            slot[l] = w.left * p[l] + w.right * r[l];
        }
    }
}

/// Sufficient statistics of a stationary scalar AR(1) path.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Ar1Stats {
    pub points: usize,
    pub paths: usize,
    pub first_sq: f64,
    pub s00: f64,
    pub s01: f64,
    pub s11: f64,
}

impl Ar1Stats {
    pub fn add_path(&mut self, x: &[f64]) {
        if x.is_empty() {
            return;
        }
        self.paths += 1;
        self.points += x.len();
        self.first_sq += x[0] * x[0];
        for w in x.windows(2) {
            self.s00 += w[1] * w[1];
            self.s01 += w[1] * w[0];
            self.s11 += w[0] * w[0];
        }
    }

    pub fn merge(&mut self, other: &Ar1Stats) {
        self.points += other.points;
        self.paths += other.paths;
        self.first_sq += other.first_sq;
        self.s00 += other.s00;
        self.s01 += other.s01;
        self.s11 += other.s11;
    }

    /// Quadratic form `x0^2 + sum (x_n - a x_{n-1})^2 / (1 - a^2)` (unit variance).
    pub fn quad(&self, a: f64) -> f64 {
        self.first_sq + (self.s00 - 2.0 * a * self.s01 + a * a * self.s11) / (1.0 - a * a)
    }

    pub fn log_density(&self, a: f64, var: f64) -> f64 {
        let n = self.points as f64;
        let transitions = (self.points - self.paths) as f64;
        -0.5 * n * (2.0 * std::f64::consts::PI * var).ln()
            - 0.5 * transitions * (1.0 - a * a).ln()
            - 0.5 * self.quad(a) / var
    }
}

/// Log-density of a stationary scalar AR(1) path.
pub fn ar1_log_density(x: &[f64], a: f64, var: f64) -> f64 {
    let mut s = Ar1Stats::default();
    s.add_path(x);
    if s.points == 0 {
        0.0
    } else {
        s.log_density(a, var)
    }
}

/// Matrix sufficient statistics of a separable three-outcome AR(1) path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Var1Stats {
    pub points: usize,
    pub paths: usize,
    pub first: Matrix3<f64>,
    pub m00: Matrix3<f64>,
    pub m01: Matrix3<f64>,
    pub m11: Matrix3<f64>,
}

impl Default for Var1Stats {
    fn default() -> Self {
        Self {
            points: 0,
            paths: 0,
            first: Matrix3::zeros(),
            m00: Matrix3::zeros(),
            m01: Matrix3::zeros(),
            m11: Matrix3::zeros(),
        }
    }
}

#[inline]
fn outer(u: &[f64; 3], v: &[f64; 3]) -> Matrix3<f64> {
    Matrix3::from_fn(|r, c| u[r] * v[c])
}

impl Var1Stats {
    pub fn add_path(&mut self, x: &[[f64; 3]]) {
        if x.is_empty() {
            return;
        }
        self.paths += 1;
        self.points += x.len();
        self.first += outer(&x[0], &x[0]);
        for w in x.windows(2) {
            self.m00 += outer(&w[1], &w[1]);
            self.m01 += outer(&w[1], &w[0]);
            self.m11 += outer(&w[0], &w[0]);
        }
    }

    pub fn merge(&mut self, other: &Var1Stats) {
        self.points += other.points;
        self.paths += other.paths;
        self.first += other.first;
        self.m00 += other.m00;
        self.m01 += other.m01;
        self.m11 += other.m11;
    }

    /// Scatter matrix of the standardised innovations.
    pub fn scatter(&self, a: f64) -> Matrix3<f64> {
        let cross = self.m01 + self.m01.transpose();
        self.first + (self.m00 - cross * a + self.m11 * (a * a)) / (1.0 - a * a)
    }

    /// Log-density under cross-outcome precision `prec` (log-determinant `ln_det_prec`).
    pub fn log_density(&self, a: f64, prec: &Matrix3<f64>, ln_det_prec: f64) -> f64 {
        let n = self.points as f64;
        let transitions = (self.points - self.paths) as f64;
        -0.5 * n * 3.0 * (2.0 * std::f64::consts::PI).ln() + 0.5 * n * ln_det_prec
            - 1.5 * transitions * (1.0 - a * a).ln()
            - 0.5 * (prec * self.scatter(a)).trace()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn bridge_weights_limits() {
        let w = bridge_weights(0.7, Some(1), None);
        assert!((w.left - 0.7).abs() < 1e-15 && (w.var - 0.51).abs() < 1e-15);
        let w = bridge_weights(0.7, None, None);
        assert_eq!(w.var, 1.0);
        // Symmetric bridge midpoint.
        let w = bridge_weights(0.5, Some(1), Some(1));
        assert!((w.left - w.right).abs() < 1e-15);
        assert!((w.left - 0.5 * 0.75 / (1.0 - 0.0625)).abs() < 1e-15);
    }

    #[test]
    fn path_density_matches_gaussian_chain_rule() {
        let x = [0.3, -0.1, 0.4, 0.2];
        let (a, v) = (0.6, 0.8);
        let mut expect = crate::dens::ln_normal(x[0], 0.0, v);
        for w in x.windows(2) {
            expect += crate::dens::ln_normal(w[1], a * w[0], v * (1.0 - a * a));
        }
        assert!((ar1_log_density(&x, a, v) - expect).abs() < 1e-12);
    }

    #[test]
    fn bridge_mean_is_sample_average() {
        let a = 0.8;
        let mut rng = substream(1, 0, 0, 0);
        let mut mean = [0.0; 4];
        bridge_mean(a, Some(1.0), Some(-0.5), &mut mean);
        let mut acc = [0.0; 4];
        let n = 40_000;
        let mut buf = [0.0; 4];
        for _ in 0..n {
            sample_bridge(a, 1.0, Some(1.0), Some(-0.5), &mut buf, &mut rng);
            for k in 0..4 {
                acc[k] += buf[k];
            }
        }
        for k in 0..4 {
            assert!((acc[k] / n as f64 - mean[k]).abs() < 0.02, "{k}");
        }
    }
}
