//! Posterior-predictive probability of an adverse event over a future
//! horizon at a fixed medication step level.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};
use crate::latent::MAX_LEVEL;
use crate::outcome::GlobalParams;
use crate::rng::{domain, substream};
use crate::sampler::PosteriorSample;

/// What counts as an adverse event: at least `*_threshold` events of an
/// outcome within `horizon` weeks. `u64::MAX` disables an outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AdverseEventDef {
    pub horizon: usize,
    pub ed_ip_threshold: u64,
    pub rescue_threshold: u64,
    pub ocs_threshold: u64,
}

impl Default for AdverseEventDef {
    fn default() -> Self {
        AdverseEventDef {
            horizon: 26,
            ed_ip_threshold: 1,
            rescue_threshold: 4,
            ocs_threshold: 1,
        }
    }
}

impl AdverseEventDef {
    pub fn validate(&self) -> Result<()> {
        if self.ed_ip_threshold == 0 || self.rescue_threshold == 0 || self.ocs_threshold == 0 {
            return Err(Error::Config("event thresholds must be positive".into()));
        }
        Ok(())
    }

    fn thresholds(&self) -> [u64; 3] {
        [
            self.ed_ip_threshold,
            self.rescue_threshold,
            self.ocs_threshold,
        ]
    }
}

/// `P(Poisson(lambda) < threshold)`.
pub fn poisson_below(threshold: u64, lambda: f64) -> f64 {
    if threshold == u64::MAX || lambda <= 0.0 {
        1.0
    } else if threshold == 1 {
        (-lambda).exp()
    } else {
        gamma_ur(threshold as f64, lambda)
    }
}

/// Per-outcome event probabilities and the probability of any event, in the
/// order ED/IP, rescue, OCS, any.
pub fn event_probs(lambda: [f64; 3], def: &AdverseEventDef) -> [f64; 4] {
    let t = def.thresholds();
    let below = [
        poisson_below(t[0], lambda[0]),
        poisson_below(t[1], lambda[1]),
        poisson_below(t[2], lambda[2]),
    ];
    [
        1.0 - below[0],
        1.0 - below[1],
        1.0 - below[2],
        1.0 - below[0] * below[1] * below[2],
    ]
}

/// Probability of an adverse event given horizon-total rates, using the
/// conditional independence of the three counts.
pub fn event_prob_given_draw(lambda: [f64; 3], def: &AdverseEventDef) -> f64 {
    event_probs(lambda, def)[3]
}

/// Forward path of the time effects for `horizon` weeks after `last`.
pub fn forward_delta<R: Rng + ?Sized>(
    last: [f64; 3],
    a: f64,
    chol: &Matrix3<f64>,
    horizon: usize,
    rng: &mut R,
    out: &mut Vec<[f64; 3]>,
) {
    out.clear();
    let s = (1.0 - a * a).max(0.0).sqrt();
    let mut prev = Vector3::from(last);
    for _ in 0..horizon {
        let e = Vector3::new(
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
            rng.sample(StandardNormal),
        );
        prev = prev * a + chol * e * s;
        out.push([prev[0], prev[1], prev[2]]);
    }
}

/// Horizon-total rates at each level 0..=5 for fixed `alpha + x beta` and a
/// future time-effect path.
pub fn level_rates(g: &GlobalParams, base: [f64; 3], future: &[[f64; 3]]) -> [[f64; 3]; 6] {
    let mut out = [[0.0; 3]; 6];
    for (k, slot) in out.iter_mut().enumerate() {
        for l in 0..3 {
            let shift = base[l] + g.gamma[l] * k as f64;
            slot[l] = future.iter().map(|d| (shift + d[l]).exp()).sum();
        }
    }
    out
}

/// Whose probability is requested.
#[derive(Debug, Clone, PartialEq)]
pub enum Subject {
    /// Index of a fitted patient in the posterior.
    Fitted(usize),
    /// A new patient given raw covariates; `alpha` and the current time
    /// effect are drawn from their population distributions at every draw.
    New(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PredictOptions {
    /// Hold the time effect at its last value instead of sampling a path.
    pub freeze_delta: bool,
    pub seed: u64,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            freeze_delta: false,
            seed: 1,
        }
    }
}

/// Per-draw event probabilities at each level, `[draw][level][outcome]`.
pub fn draw_level_probs(
    post: &PosteriorSample,
    subject: &Subject,
    def: &AdverseEventDef,
    opts: &PredictOptions,
) -> Result<Vec<[[f64; 4]; 6]>> {
    def.validate()?;
    let (x, key) = match subject {
        Subject::Fitted(i) => {
            let x = post
                .patient_x
                .get(*i)
                .ok_or_else(|| Error::UnknownPatient(format!("index {i}")))?;
            (x.clone(), *i as u64)
        }
        Subject::New(raw) => {
            if raw.len() != post.covariate_names.len() {
                return Err(Error::Config(format!(
                    "new patient has {} covariates, the fit has {}",
                    raw.len(),
                    post.covariate_names.len()
                )));
            }
            let x = raw
                .iter()
                .zip(&post.scaling)
                .map(|(v, s)| (v - s.mean) / s.sd)
                .collect();
            (x, u64::MAX)
        }
    };
    let time_effects = post.variant.has_latent();
    let out = (0..post.n_draws())
        .into_par_iter()
        .map(|d| {
            let g = &post.draws[d];
            let mut rng = substream(opts.seed, domain::PREDICT, key, d as u64);
            let xb = g.linear_predictor(&x);
            let (alpha, last) = match subject {
                Subject::Fitted(i) => {
                    let p = post.patients[d][*i];
                    ([p[0], p[1], p[2]], [p[3], p[4], p[5]])
                }
                Subject::New(_) => {
                    let l = g
                        .sigma
                        .cholesky()
                        .map(|c| c.l())
                        .unwrap_or_else(Matrix3::zeros);
                    let e = Vector3::new(
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                        rng.sample(StandardNormal),
                    );
                    let a = Vector3::from(g.nu) + l * e;
                    let last = if time_effects {
                        let lp = g
                            .phi
                            .cholesky()
                            .map(|c| c.l())
                            .unwrap_or_else(Matrix3::zeros);
                        let e = Vector3::new(
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                            rng.sample(StandardNormal),
                        );
                        let v = lp * e;
                        [v[0], v[1], v[2]]
                    } else {
                        [0.0; 3]
                    };
                    ([a[0], a[1], a[2]], last)
                }
            };
            let base = [alpha[0] + xb[0], alpha[1] + xb[1], alpha[2] + xb[2]];
            let future = if !time_effects {
                vec![[0.0; 3]; def.horizon]
            } else if opts.freeze_delta {
                vec![last; def.horizon]
            } else {
                let chol = g
                    .phi
                    .cholesky()
                    .map(|c| c.l())
                    .unwrap_or_else(Matrix3::zeros);
                let mut path = Vec::with_capacity(def.horizon);
                forward_delta(last, g.delta_lag(), &chol, def.horizon, &mut rng, &mut path);
                path
            };
            let rates = level_rates(g, base, &future);
            let mut probs = [[0.0; 4]; 6];
            for k in 0..6 {
                probs[k] = event_probs(rates[k], def);
            }
            probs
        })
        .collect();
    Ok(out)
}

/// Posterior-mean probabilities `[level][outcome]` (outcomes ED/IP, rescue,
/// OCS, any).
pub fn predict_all_levels(
    post: &PosteriorSample,
    subject: &Subject,
    def: &AdverseEventDef,
    opts: &PredictOptions,
) -> Result<[[f64; 4]; 6]> {
    let per = draw_level_probs(post, subject, def, opts)?;
    let mut acc = [[0.0; 4]; 6];
    for p in &per {
        for k in 0..6 {
            for o in 0..4 {
                acc[k][o] += p[k][o];
            }
        }
    }
    let n = per.len().max(1) as f64;
    for row in &mut acc {
        for v in row.iter_mut() {
            *v /= n;
        }
    }
    Ok(acc)
}

/// Posterior predictive probability of any adverse event at `level`.
pub fn predict_patient(
    post: &PosteriorSample,
    subject: &Subject,
    level: u8,
    def: &AdverseEventDef,
    opts: &PredictOptions,
) -> Result<f64> {
    if level > MAX_LEVEL {
        return Err(Error::Config(format!("step level {level} outside 0..=5")));
    }
    Ok(predict_all_levels(post, subject, def, opts)?[level as usize][3])
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepdownTable {
    pub probs: [f64; 6],
    pub current: u8,
}

impl StepdownTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("level,probability,is_current\n");
        for (k, p) in self.probs.iter().enumerate() {
            s.push_str(&format!(
                "{k},{p},{}\n",
                u8::from(k == self.current as usize)
            ));
        }
        s
    }
}

pub fn stepdown_table(
    post: &PosteriorSample,
    subject: &Subject,
    current: u8,
    def: &AdverseEventDef,
    opts: &PredictOptions,
) -> Result<StepdownTable> {
    let all = predict_all_levels(post, subject, def, opts)?;
    let mut probs = [0.0; 6];
    for k in 0..6 {
        probs[k] = all[k][3];
    }
    Ok(StepdownTable {
        probs,
        current: current.min(MAX_LEVEL),
    })
}
