//! Updates of the population parameters given every patient's latent state.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Beta, ChiSquared, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use super::config::Variant;
use super::state::{PatientData, PatientState};
use crate::dens::{ln_beta, ln_inv_gamma, ln_normal, ln_wishart3};
use crate::outcome::GlobalParams;
use crate::prior::PriorConfig;
use crate::process::{Ar1Stats, Var1Stats};

pub const N_GLOBAL_SCALES: usize = 9;
pub const GLOBAL_SCALE_NAMES: [&str; N_GLOBAL_SCALES] = [
    "gamma_1",
    "gamma_2",
    "gamma_3",
    "theta",
    "ou_decay",
    "theta_path",
    "Phi_scale_1",
    "Phi_scale_2",
    "Phi_scale_3",
];
const THETA: usize = 3;
const DECAY: usize = 4;
const THETA_PATH: usize = 5;
const PHI_SCALE: usize = 6;

/// Random-walk scales and acceptance counts of the non-conjugate globals.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalTuning {
    pub log_scale: [f64; N_GLOBAL_SCALES],
    pub proposed: [u64; N_GLOBAL_SCALES],
    pub accepted: [u64; N_GLOBAL_SCALES],
}

impl Default for GlobalTuning {
    fn default() -> Self {
        GlobalTuning {
            log_scale: [
                (0.05f64).ln(),
                (0.05f64).ln(),
                (0.05f64).ln(),
                (0.2f64).ln(),
                (0.2f64).ln(),
                (0.1f64).ln(),
                (0.05f64).ln(),
                (0.05f64).ln(),
                (0.05f64).ln(),
            ],
            proposed: [0; N_GLOBAL_SCALES],
            accepted: [0; N_GLOBAL_SCALES],
        }
    }
}

impl GlobalTuning {
    fn scale(&self, k: usize) -> f64 {
        self.log_scale[k].exp()
    }

    fn record(&mut self, k: usize, acc: bool, step: Option<f64>) {
        self.proposed[k] += 1;
        self.accepted[k] += u64::from(acc);
        if let Some(step) = step {
            let a = if acc { 1.0 } else { 0.0 };
            self.log_scale[k] = (self.log_scale[k] + step * (a - 0.44)).clamp(-12.0, 4.0);
        }
    }
}

/// Settings shared by one global sweep.
#[derive(Debug, Clone, Copy)]
pub struct GlobalCtx<'a> {
    pub prior: &'a PriorConfig,
    pub variant: Variant,
    pub adapt_step: Option<f64>,
    pub likelihood: bool,
}

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn accept<R: Rng + ?Sized>(rng: &mut R, lr: f64) -> bool {
    !lr.is_nan() && (lr >= 0.0 || rng.random::<f64>().ln() < lr)
}

fn logistic(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Wishart draw with `df` degrees of freedom and scale matrix `scale`
/// (mean `df * scale`), by the Bartlett decomposition.
pub fn sample_wishart3<R: Rng + ?Sized>(
    scale: &Matrix3<f64>,
    df: f64,
    rng: &mut R,
) -> Matrix3<f64> {
    let l = scale
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(|| Matrix3::from_diagonal(&scale.diagonal().map(|v| v.max(1e-300).sqrt())));
    let mut a = Matrix3::zeros();
    for i in 0..3 {
        let chi = ChiSquared::new(df - i as f64).expect("Wishart degrees of freedom");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = normal(rng);
        }
    }
    let la = l * a;
    let w = la * la.transpose();
    0.5 * (w + w.transpose())
}

fn inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let g = Gamma::new(shape, 1.0 / scale).expect("inverse gamma parameters");
    1.0 / g.sample(rng)
}

fn sym_inverse(m: &Matrix3<f64>) -> Matrix3<f64> {
    let inv = m
        .cholesky()
        .map(|c| c.inverse())
        .unwrap_or_else(|| m.try_inverse().expect("singular covariance"));
    0.5 * (inv + inv.transpose())
}

/// Draws a covariance given the scatter `s` of `n` mean-zero vectors, under
/// a Wishart prior on the precision or, when `diagonal`, independent inverse
/// gamma priors on the variances.
fn draw_covariance<R: Rng + ?Sized>(
    p: &Matrix3<f64>,
    df: f64,
    s: &Matrix3<f64>,
    n: f64,
    diagonal: bool,
    rng: &mut R,
) -> Matrix3<f64> {
    if diagonal {
        let mut out = Matrix3::zeros();
        for l in 0..3 {
            let (a, b) = PriorConfig::diag_inv_gamma(p, df, l);
            out[(l, l)] = inv_gamma(a + 0.5 * n, b + 0.5 * s[(l, l)], rng);
        }
        out
    } else {
        let post = sym_inverse(&(p + s));
        sym_inverse(&sample_wishart3(&post, df + n, rng))
    }
}

fn update_nu<R: Rng + ?Sized>(
    g: &mut GlobalParams,
    states: &[PatientState],
    prior: &PriorConfig,
    rng: &mut R,
) {
    let omega = sym_inverse(&g.sigma);
    let mut sum = Vector3::zeros();
    for s in states {
        sum += Vector3::from(s.alpha);
    }
    let mut prec = omega * states.len() as f64;
    let mut lin = omega * sum;
    for l in 0..3 {
        prec[(l, l)] += 1.0 / prior.s2_nu[l];
        lin[l] += prior.m_nu[l] / prior.s2_nu[l];
    }
    let chol = prec.cholesky().expect("nu precision");
    let mean = chol.solve(&lin);
    let z = Vector3::new(normal(rng), normal(rng), normal(rng));
    let draw = mean
        + chol
            .l()
            .tr_solve_lower_triangular(&z)
            .expect("triangular solve");
    g.nu = [draw[0], draw[1], draw[2]];
}

fn update_sigma<R: Rng + ?Sized>(
    g: &mut GlobalParams,
    states: &[PatientState],
    ctx: &GlobalCtx,
    rng: &mut R,
) {
    let mut s = Matrix3::zeros();
    for st in states {
        let r = Vector3::new(
            st.alpha[0] - g.nu[0],
            st.alpha[1] - g.nu[1],
            st.alpha[2] - g.nu[2],
        );
        s += r * r.transpose();
    }
    let p = &ctx.prior;
    g.sigma = draw_covariance(
        &p.p_sigma,
        p.n_sigma,
        &s,
        states.len() as f64,
        ctx.variant.diagonal(),
        rng,
    );
}

/// Gibbs draw of the regression coefficients holding `alpha + x beta` fixed
/// for every patient, followed by the matching shift of each `alpha`.
fn update_beta<R: Rng + ?Sized>(
    g: &mut GlobalParams,
    data: &[PatientData],
    states: &mut [PatientState],
    prior: &PriorConfig,
    rng: &mut R,
) {
    let j = g.n_covariates();
    if j == 0 {
        return;
    }
    let dim = 3 * j;
    let omega = sym_inverse(&g.sigma);
    let mut xtx = DMatrix::<f64>::zeros(j, j);
    let mut h = DVector::<f64>::zeros(dim);
    for (d, s) in data.iter().zip(states.iter()) {
        let r = Vector3::new(
            s.alpha[0] + s.xb[0] - g.nu[0],
            s.alpha[1] + s.xb[1] - g.nu[1],
            s.alpha[2] + s.xb[2] - g.nu[2],
        );
        let or = omega * r;
        for a in 0..j {
            for b in 0..j {
                xtx[(a, b)] += d.x[a] * d.x[b];
            }
            for l in 0..3 {
                h[3 * a + l] += d.x[a] * or[l];
            }
        }
    }
    let mut prec = DMatrix::<f64>::zeros(dim, dim);
    for a in 0..j {
        for b in 0..j {
            for l in 0..3 {
                for m in 0..3 {
                    prec[(3 * a + l, 3 * b + m)] = xtx[(a, b)] * omega[(l, m)];
                }
            }
        }
        for l in 0..3 {
            prec[(3 * a + l, 3 * a + l)] += 1.0 / prior.t2_beta[l];
            h[3 * a + l] += prior.b_beta[l] / prior.t2_beta[l];
        }
    }
    let chol = prec.cholesky().expect("beta precision");
    let mean = chol.solve(&h);
    let z = DVector::from_fn(dim, |_, _| normal(rng));
    let draw = mean
        + chol
            .l()
            .tr_solve_lower_triangular(&z)
            .expect("triangular solve");
    for a in 0..j {
        for l in 0..3 {
            g.beta[a][l] = draw[3 * a + l];
        }
    }
    states
        .par_iter_mut()
        .zip(data.par_iter())
        .for_each(|(s, d)| {
            let xb = g.linear_predictor(&d.x);
            for l in 0..3 {
                s.alpha[l] += s.xb[l] - xb[l];
            }
            s.xb = xb;
        });
}

/// Log-likelihood change for one patient when `gamma[l]` moves from `old`
/// to `new`; the candidate caches are left in scratch.
fn gamma_candidate(s: &mut PatientState, d: &PatientData, l: usize, new: f64) -> f64 {
    s.ensure_scratch(d);
    let eoff = (s.alpha[l] + s.xb[l]).exp();
    let mut dl = 0.0;
    for (m, r) in d.rounds.iter().enumerate() {
        let mut sum = 0.0;
        let mut lin = 0.0;
        for n in r.start..r.end {
            let e = (new * s.z[n] + s.delta[n][l]).exp();
            s.scratch.buf[n] = e;
            sum += e;
            if l == 0 {
                lin += d.y1[n] * (new * s.z[n] + s.delta[n][0]);
            }
        }
        let old = s.rsum[m][l];
        s.scratch.rsum[m][l] = sum;
        if l == 0 {
            s.scratch.rlin1[m] = lin;
            dl += lin - s.rlin1[m] - eoff * (sum - old);
        } else {
            dl += r.y[l - 1] * (sum.ln() - old.ln()) - eoff * (sum - old);
        }
    }
    dl
}

fn gamma_commit(s: &mut PatientState, d: &PatientData, l: usize) {
    for n in 0..d.n {
        s.elin[n][l] = s.scratch.buf[n];
    }
    for m in 0..d.rounds.len() {
        s.rsum[m][l] = s.scratch.rsum[m][l];
        if l == 0 {
            s.rlin1[m] = s.scratch.rlin1[m];
        }
    }
}

fn update_gamma<R: Rng + ?Sized>(
    g: &mut GlobalParams,
    data: &[PatientData],
    states: &mut [PatientState],
    ctx: &GlobalCtx,
    tune: &mut GlobalTuning,
    rng: &mut R,
) {
    for l in 0..3 {
        let u = (-g.gamma[l]).ln();
        let u_new = u + tune.scale(l) * normal(rng);
        let new = -u_new.exp();
        let (c, v) = (ctx.prior.c_gamma[l], ctx.prior.u2_gamma[l]);
        let mut lr = ln_normal(u_new, c, v) - ln_normal(u, c, v);
        let deltas: Vec<f64> = states
            .par_iter_mut()
            .zip(data.par_iter())
            .map(|(s, d)| gamma_candidate(s, d, l, new))
            .collect();
        if ctx.likelihood {
            lr += deltas.iter().sum::<f64>();
        }
        let acc = accept(rng, lr);
        if acc {
            g.gamma[l] = new;
            states
                .par_iter_mut()
                .zip(data.par_iter())
                .for_each(|(s, d)| gamma_commit(s, d, l));
        }
        tune.record(l, acc, ctx.adapt_step);
    }
}

fn update_theta<R: Rng + ?Sized>(
    g: &mut GlobalParams,
    stats: &Var1Stats,
    ctx: &GlobalCtx,
    tune: &mut GlobalTuning,
    rng: &mut R,
) {
    let prec = sym_inverse(&g.phi);
    let ln_det = prec.determinant().ln();
    let target = |a: f64| {
        stats.log_density(a, &prec, ln_det)
            + ln_beta(a, ctx.prior.a_theta, ctx.prior.b_theta)
            + (a * (1.0 - a)).ln()
    };
    let a = g.delta_lag();
    let t = (a / (1.0 - a)).ln();
    let a_new = logistic(t + tune.scale(THETA) * normal(rng));
    let acc = a_new > 0.0 && a_new < 1.0 && accept(rng, target(a_new) - target(a));
    if acc {
        g.theta = -a_new.ln();
    }
    tune.record(THETA, acc, ctx.adapt_step);
}

/// Sums a per-patient log-likelihood change over the cohort in a fixed order.
fn cohort_change(
    data: &[PatientData],
    states: &mut [PatientState],
    f: impl Fn(&mut PatientState, &PatientData) -> f64 + Sync,
) -> f64 {
    let per: Vec<f64> = states
        .par_iter_mut()
        .zip(data.par_iter())
        .map(|(s, d)| f(s, d))
        .collect();
    per.iter().sum()
}

fn commit_paths(data: &[PatientData], states: &mut [PatientState]) {
    states
        .par_iter_mut()
        .zip(data.par_iter())
        .for_each(|(s, d)| s.commit_delta_path(d));
}

/// Moves `theta` with the innovations of every time-effect path held fixed,
/// so that only the likelihood weighs the new decay.
fn update_theta_path<R: Rng + ?Sized>(
    g: &mut GlobalParams,
    data: &[PatientData],
    states: &mut [PatientState],
    ctx: &GlobalCtx,
    tune: &mut GlobalTuning,
    rng: &mut R,
) {
    let p = ctx.prior;
    let a = g.delta_lag();
    let t = (a / (1.0 - a)).ln();
    let b = logistic(t + tune.scale(THETA_PATH) * normal(rng));
    if !(b > 0.0 && b < 1.0) {
        tune.record(THETA_PATH, false, ctx.adapt_step);
        return;
    }
    let prior = |a: f64| ln_beta(a, p.a_theta, p.b_theta) + (a * (1.0 - a)).ln();
    let mut lr = prior(b) - prior(a);
    let (ra, rb) = ((1.0 - a * a).sqrt(), (1.0 - b * b).sqrt());
    let gamma = g.gamma;
    let dl = cohort_change(data, states, |s, d| {
        s.delta_path_candidate(d, &gamma, |old, new| {
            new[0] = old[0];
            for n in 1..old.len() {
                for l in 0..3 {
                    let e = (old[n][l] - a * old[n - 1][l]) / ra;
                    new[n][l] = b * new[n - 1][l] + rb * e;
                }
            }
        })
    });
    if ctx.likelihood {
        lr += dl;
    }
    let acc = accept(rng, lr);
    if acc {
        g.theta = -b.ln();
        commit_paths(data, states);
    }
    tune.record(THETA_PATH, acc, ctx.adapt_step);
}

/// Log prior of the time-effect covariance in its stated parameterisation.
fn phi_log_prior(phi: &Matrix3<f64>, prior: &PriorConfig, diagonal: bool) -> f64 {
    if diagonal {
        (0..3)
            .map(|l| {
                let (a, b) = PriorConfig::diag_inv_gamma(&prior.p_phi, prior.n_phi, l);
                ln_inv_gamma(phi[(l, l)], a, b)
            })
            .sum()
    } else {
        ln_wishart3(&sym_inverse(phi), &prior.p_phi, prior.n_phi)
    }
}

/// Rescales outcome `l` of `Phi` and of every time-effect path together by
/// `exp(u)`, keeping the whitened innovations fixed.
fn update_phi_scales<R: Rng + ?Sized>(
    g: &mut GlobalParams,
    data: &[PatientData],
    states: &mut [PatientState],
    ctx: &GlobalCtx,
    tune: &mut GlobalTuning,
    rng: &mut R,
) {
    let diagonal = ctx.variant.diagonal();
    for l in 0..3 {
        let k = PHI_SCALE + l;
        let u = tune.scale(k) * normal(rng);
        let f = u.exp();
        let mut phi = g.phi;
        for j in 0..3 {
            phi[(l, j)] *= f;
            phi[(j, l)] *= f;
        }
        // Jacobian of the map on the free covariance entries; the Wishart
        // case adds |Phi|^-4 from the change of variables out of the precision.
        let jac = if diagonal { 2.0 * u } else { -4.0 * u };
        let mut lr = phi_log_prior(&phi, ctx.prior, diagonal)
            - phi_log_prior(&g.phi, ctx.prior, diagonal)
            + jac;
        let gamma = g.gamma;
        let dl = cohort_change(data, states, |s, d| {
            s.delta_path_candidate(d, &gamma, |old, new| {
                for (o, n) in old.iter().zip(new.iter_mut()) {
                    *n = *o;
                    n[l] *= f;
                }
            })
        });
        if ctx.likelihood {
            lr += dl;
        }
        let acc = accept(rng, lr);
        if acc {
            g.phi = phi;
            commit_paths(data, states);
        }
        tune.record(k, acc, ctx.adapt_step);
    }
}

fn update_ou<R: Rng + ?Sized>(
    g: &mut GlobalParams,
    stats: &Ar1Stats,
    ctx: &GlobalCtx,
    tune: &mut GlobalTuning,
    rng: &mut R,
) {
    let p = ctx.prior;
    let a = (-g.ou_decay).exp();
    let q = if stats.points > 0 { stats.quad(a) } else { 0.0 };
    g.ou_var = inv_gamma(
        p.a_sigma + 0.5 * stats.points as f64,
        p.b_sigma + 0.5 * q,
        rng,
    );
    let target = |a: f64| {
        let ll = if stats.points > 0 {
            stats.log_density(a, g.ou_var)
        } else {
            0.0
        };
        ll + ln_beta(a, p.a_phi, p.b_phi) + (a * (1.0 - a)).ln()
    };
    let t = (a / (1.0 - a)).ln();
    let a_new = logistic(t + tune.scale(DECAY) * normal(rng));
    let acc = a_new > 0.0 && a_new < 1.0 && accept(rng, target(a_new) - target(a));
    if acc {
        g.ou_decay = -a_new.ln();
    }
    tune.record(DECAY, acc, ctx.adapt_step);
}

fn update_jump_rates<R: Rng + ?Sized>(
    g: &mut GlobalParams,
    data: &[PatientData],
    states: &[PatientState],
    prior: &PriorConfig,
    rng: &mut R,
) {
    let (mut kc, mut exposure, mut kd, mut visits) = (0.0, 0.0, 0.0, 0.0);
    for (d, s) in data.iter().zip(states) {
        kc += s.kc as f64;
        exposure += d.n.saturating_sub(1) as f64;
        kd += s.kd as f64;
        visits += d.visits.len() as f64;
    }
    g.rho = Gamma::new(prior.a_rho + kc, 1.0 / (prior.b_rho + exposure))
        .expect("rho posterior")
        .sample(rng);
    g.varpi = Beta::new(prior.a_varpi + kd, prior.b_varpi + visits - kd)
        .expect("varpi posterior")
        .sample(rng);
}

/// One pass over every population parameter, in a fixed order.
pub fn update_globals<R: Rng + ?Sized>(
    g: &mut GlobalParams,
    data: &[PatientData],
    states: &mut [PatientState],
    ctx: &GlobalCtx,
    tune: &mut GlobalTuning,
    rng: &mut R,
) {
    let prior = ctx.prior;
    update_nu(g, states, prior, rng);
    update_sigma(g, states, ctx, rng);
    update_beta(g, data, states, prior, rng);
    update_gamma(g, data, states, ctx, tune, rng);
    if ctx.variant == Variant::Glmer {
        return;
    }
    let per: Vec<Var1Stats> = states.par_iter().map(|s| s.delta_stats()).collect();
    let mut stats = Var1Stats::default();
    for s in &per {
        stats.merge(s);
    }
    let a = g.delta_lag();
    g.phi = draw_covariance(
        &prior.p_phi,
        prior.n_phi,
        &stats.scatter(a),
        stats.points as f64,
        ctx.variant.diagonal(),
        rng,
    );
    update_theta(g, &stats, ctx, tune, rng);
    update_theta_path(g, data, states, ctx, tune, rng);
    update_phi_scales(g, data, states, ctx, tune, rng);
    let per: Vec<Ar1Stats> = states.par_iter().map(|s| s.dev_stats()).collect();
    let mut dev = Ar1Stats::default();
    for s in &per {
        dev.merge(s);
    }
    update_ou(g, &dev, ctx, tune, rng);
    update_jump_rates(g, data, states, prior, rng);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::default_prior_config;
    use crate::rng::substream;

    #[test]
    fn wishart_mean() {
        let mut rng = substream(3, 0, 0, 0);
        let scale = Matrix3::new(1.0, 0.3, 0.0, 0.3, 2.0, -0.4, 0.0, -0.4, 0.5);
        let n = 20_000;
        let mut acc = Matrix3::zeros();
        for _ in 0..n {
            acc += sample_wishart3(&scale, 7.0, &mut rng);
        }
        let mean = acc / n as f64;
        let target = scale * 7.0;
        for i in 0..3 {
            for j in 0..3 {
                // Var(W_ij) = df (s_ij^2 + s_ii s_jj)
                let sd = (7.0 * (scale[(i, j)].powi(2) + scale[(i, i)] * scale[(j, j)]) / n as f64)
                    .sqrt();
                assert!((mean[(i, j)] - target[(i, j)]).abs() < 4.0 * sd, "{i}{j}");
            }
        }
    }

    #[test]
    fn varpi_conjugate_beta() {
        // 60 eligible visits, 30 of which triggered a jump, Beta(3, 6) prior.
        let prior = default_prior_config();
        let d = PatientData {
            n: 121,
            x: vec![],
            rounds: vec![],
            round_of: vec![0; 121],
            y1: vec![0.0; 121],
            ytot: [0.0; 3],
            visits: (0..60).map(|v| 2 * v).collect(),
            is_visit: vec![false; 121],
        };
        let g0 = GlobalParams {
            beta: vec![],
            gamma: [-0.2; 3],
            nu: [0.0; 3],
            sigma: Matrix3::identity(),
            theta: 0.1,
            phi: Matrix3::identity(),
            ou_var: 0.1,
            ou_decay: 0.5,
            rho: 0.01,
            varpi: 0.3,
        };
        let mut s = PatientState::at_observed(&d, &g0, true);
        s.kd = 30;
        let mut rng = substream(5, 0, 0, 0);
        let mut g = g0.clone();
        let n = 10_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| {
                update_jump_rates(
                    &mut g,
                    std::slice::from_ref(&d),
                    std::slice::from_ref(&s),
                    &prior,
                    &mut rng,
                );
                g.varpi
            })
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let (a, b): (f64, f64) = (33.0, 36.0);
        let sd = (a * b / ((a + b) * (a + b) * (a + b + 1.0))).sqrt();
        assert!((mean - a / (a + b)).abs() < 3.0 * sd / (n as f64).sqrt());
    }

    #[test]
    fn sigma_recovers_generating_covariance() {
        let mut prior = default_prior_config();
        prior.n_sigma = 4.0;
        let sigma0 = Matrix3::new(0.5, 0.2, -0.1, 0.2, 0.8, 0.15, -0.1, 0.15, 0.3);
        let nu = [-1.0, 0.5, 0.2];
        let chol = sigma0.cholesky().unwrap().l();
        let mut rng = substream(11, 0, 0, 0);
        let d0 = PatientData {
            n: 0,
            x: vec![],
            rounds: vec![],
            round_of: vec![],
            y1: vec![],
            ytot: [0.0; 3],
            visits: vec![],
            is_visit: vec![],
        };
        let mut g = GlobalParams {
            beta: vec![],
            gamma: [-0.2; 3],
            nu,
            sigma: Matrix3::identity(),
            theta: 0.1,
            phi: Matrix3::identity(),
            ou_var: 0.1,
            ou_decay: 0.5,
            rho: 0.01,
            varpi: 0.3,
        };
        let states: Vec<PatientState> = (0..1000)
            .map(|_| {
                let z = Vector3::new(normal(&mut rng), normal(&mut rng), normal(&mut rng));
                let a = Vector3::from(nu) + chol * z;
                let mut s = PatientState::at_observed(&d0, &g, false);
                s.alpha = [a[0], a[1], a[2]];
                s
            })
            .collect();
        let ctx = GlobalCtx {
            prior: &prior,
            variant: Variant::Full,
            adapt_step: None,
            likelihood: true,
        };
        let mut acc = Matrix3::zeros();
        let n = 400;
        for _ in 0..n {
            update_nu(&mut g, &states, &prior, &mut rng);
            update_sigma(&mut g, &states, &ctx, &mut rng);
            acc += g.sigma;
        }
        let mean = acc / n as f64;
        for i in 0..3 {
            for j in 0..3 {
                let rel = (mean[(i, j)] - sigma0[(i, j)]).abs() / sigma0[(i, j)].abs();
                assert!(
                    rel < 0.15,
                    "entry {i}{j}: {} vs {}",
                    mean[(i, j)],
                    sigma0[(i, j)]
                );
            }
        }
    }

    #[test]
    fn diagonal_variant_has_zero_off_diagonals() {
        let mut rng = substream(2, 0, 0, 0);
        let s = Matrix3::new(2.0, 0.5, 0.1, 0.5, 1.0, 0.2, 0.1, 0.2, 3.0);
        let m = draw_covariance(&Matrix3::identity(), 4.0, &s, 10.0, true, &mut rng);
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
    }
}
