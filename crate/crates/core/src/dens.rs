//! Log-densities used by the priors and likelihood.
//!
//! All functions return `f64::NEG_INFINITY` outside the support instead of
//! erroring; the samplers rely on that to reject.

use nalgebra::Matrix3;
use statrs::function::gamma::ln_gamma;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn ln_factorial(k: u64) -> f64 {
    if k < 2 {
        0.0
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

pub fn ln_poisson(k: u64, rate: f64) -> f64 {
    if rate < 0.0 || rate.is_nan() {
        return f64::NEG_INFINITY;
    }
    if rate == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    k as f64 * rate.ln() - rate - ln_factorial(k)
}

pub fn ln_normal(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (LN_2PI + var.ln() + d * d / var)
}

pub fn ln_lognormal(x: f64, log_mean: f64, log_var: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_normal(x.ln(), log_mean, log_var) - x.ln()
}

fn ln_beta_fn(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// Beta log-density; at the endpoints returns the limit of the density.
pub fn ln_beta(x: f64, a: f64, b: f64) -> f64 {
    if !(0.0..=1.0).contains(&x) || x.is_nan() {
        return f64::NEG_INFINITY;
    }
    let norm = -ln_beta_fn(a, b);
    let edge = |shape: f64| {
        if shape < 1.0 {
            f64::INFINITY
        } else if shape == 1.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    };
    if x == 0.0 {
        let e = edge(a);
        return if e == 0.0 { norm } else { e };
    }
    if x == 1.0 {
        let e = edge(b);
        return if e == 0.0 { norm } else { e };
    }
    norm + (a - 1.0) * x.ln() + (b - 1.0) * (1.0 - x).ln()
}

/// Gamma log-density with shape/rate parameterisation.
pub fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Inverse-gamma log-density with shape/scale parameterisation.
pub fn ln_inv_gamma(x: f64, shape: f64, scale: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    shape * scale.ln() - ln_gamma(shape) - (shape + 1.0) * x.ln() - scale / x
}

pub fn ln_multigamma(x: f64, p: usize) -> f64 {
    let pf = p as f64;
    let mut acc = pf * (pf - 1.0) / 4.0 * std::f64::consts::PI.ln();
    for j in 1..=p {
        acc += ln_gamma(x + (1.0 - j as f64) / 2.0);
    }
    acc
}

/// Wishart log-density of a 3x3 precision matrix `omega` with `df` degrees of
/// freedom and inverse scale `r` (so that `E[omega] = df * r^-1`).
pub fn ln_wishart3(omega: &Matrix3<f64>, r: &Matrix3<f64>, df: f64) -> f64 {
    let p = 3.0;
    let Some(chol) = omega.cholesky() else {
        return f64::NEG_INFINITY;
    };
    let ln_det_omega = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let ln_det_r = match r.cholesky() {
        Some(c) => 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        None => return f64::NEG_INFINITY,
    };
    let tr = (r * omega).trace();
    0.5 * (df - p - 1.0) * ln_det_omega - 0.5 * tr + 0.5 * df * ln_det_r
        - 0.5 * df * p * std::f64::consts::LN_2
        - ln_multigamma(0.5 * df, 3)
}

/// Log-density of a 3-vector under N(mean, cov) given the precision and its log-determinant.
pub fn ln_mvn3_prec(x: &[f64; 3], mean: &[f64; 3], prec: &Matrix3<f64>, ln_det_prec: f64) -> f64 {
    let d = nalgebra::Vector3::new(x[0] - mean[0], x[1] - mean[1], x[2] - mean[2]);
    -0.5 * (3.0 * LN_2PI - ln_det_prec + d.dot(&(prec * d)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_zero_rate() {
        assert_eq!(ln_poisson(0, 0.0), 0.0);
        assert_eq!(ln_poisson(2, 0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn beta_endpoints() {
        assert_eq!(ln_beta(0.0, 3.0, 6.0), f64::NEG_INFINITY);
        assert_eq!(ln_beta(1.0, 3.0, 6.0), f64::NEG_INFINITY);
        // Beta(1, 1) is uniform on the closed interval.
        assert!((ln_beta(0.0, 1.0, 1.0)).abs() < 1e-12);
        assert!((ln_beta(1.0, 1.0, 1.0)).abs() < 1e-12);
        // Beta(1, 3) has density 3 at zero.
        assert!((ln_beta(0.0, 1.0, 3.0) - 3f64.ln()).abs() < 1e-12);
        assert_eq!(ln_beta(1.0, 2.0, 0.5), f64::INFINITY);
    }

    #[test]
    fn wishart_identity_df4() {
        // Reference from scipy.stats.wishart(df=4, scale=I).logpdf(I)
        let v = ln_wishart3(&Matrix3::identity(), &Matrix3::identity(), 4.0);
        assert!((v - (-7.255_195_674_498_527)).abs() < 1e-8, "{v}");
    }

    fn close(a: f64, b: f64) {
        assert!((a - b).abs() < 1e-10 * b.abs().max(1.0), "{a} vs {b}");
    }

    // Reference values from scipy.stats.
    #[test]
    fn scalar_densities_match_reference() {
        close(ln_poisson(5, 3.7), -1.945_827_644_531_151_5);
        close(ln_poisson(0, 0.02), -0.02);
        close(ln_normal(-0.3, 1.5, 2.0), -2.075_512_123_484_645_4);
        close(ln_lognormal(0.264, -1.0, 10.0), -0.743_929_670_782_014_7);
        close(ln_beta((-0.4f64).exp(), 6.0, 3.0), 0.904_698_116_225_402_4);
        close(ln_beta(1.0 / 3.0, 3.0, 6.0), 0.899_413_861_526_216_6);
        close(ln_beta(0.1, 0.5, 2.0), 0.758_249_958_387_415_6);
        close(ln_gamma_pdf(0.02, 0.25, 10.0), 2.021_641_002_621_543_7);
        close(ln_inv_gamma(0.0125, 5.0, 0.05), 4.135_444_609_925_388);
        close(ln_multigamma(2.0, 3), 1.596_312_591_138_855_2);
        close(ln_multigamma(3.7, 3), 4.465_392_536_249_502);
    }

    #[test]
    fn matrix_densities_match_reference() {
        let r = Matrix3::new(2.0, 0.3, 0.1, 0.3, 1.0, 0.2, 0.1, 0.2, 0.5);
        let om = Matrix3::new(1.2, 0.1, -0.2, 0.1, 0.8, 0.05, -0.2, 0.05, 2.0);
        // scipy.stats.wishart(df=5.5, scale=inv(r)).logpdf(om)
        close(ln_wishart3(&om, &r, 5.5), -9.965_536_048_643_283);
        // multivariate_normal(mean, inv(om)).logpdf(x)
        let ln_det = om.determinant().ln();
        close(
            ln_mvn3_prec(&[0.3, -0.1, 0.7], &[0.1, 0.2, 0.3], &om, ln_det),
            -2.637_721_553_804_292,
        );
        assert_eq!(
            ln_wishart3(&-Matrix3::identity(), &r, 5.5),
            f64::NEG_INFINITY
        );
    }
}
