//! Chain driver: initialisation, sweeps, retained draws and diagnostics.

use nalgebra::Matrix3;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;

use super::config::{FitConfig, Variant};
use super::diag::{ess, split_rhat};
use super::globals::{
    sample_wishart3, update_globals, GlobalCtx, GlobalTuning, GLOBAL_SCALE_NAMES, N_GLOBAL_SCALES,
};
use super::patient::SweepConsts;
use super::state::{mv, PatientData, PatientState, N_SCALES};
use super::store::{scalar_names, scalars};
use crate::cohort::{Cohort, Scaling};
use crate::error::{Error, Result};
use crate::outcome::GlobalParams;
use crate::prior::PriorConfig;
use crate::rng::{domain, pack, substream};

/// Retained per-patient summary: `alpha` then the time effect at the last
/// observed week.
pub type PatientDraw = [f64; 6];

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub globals: GlobalParams,
    pub patients: Vec<PatientState>,
    pub iteration: usize,
    pub tune: GlobalTuning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub name: String,
    pub rhat: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSample {
    pub variant: Variant,
    pub chains: usize,
    pub covariate_names: Vec<String>,
    pub scaling: Vec<Scaling>,
    pub patient_ids: Vec<String>,
    /// Standardised covariates of each fitted patient.
    pub patient_x: Vec<Vec<f64>>,
    /// Retained globals, chain-major.
    pub draws: Vec<GlobalParams>,
    pub chain_of: Vec<usize>,
    /// `patients[draw][patient]`.
    pub patients: Vec<Vec<PatientDraw>>,
    /// `latent[patient][draw]` medication paths; empty unless requested.
    pub latent: Vec<Vec<Vec<f64>>>,
    pub acceptance: Vec<(String, f64)>,
    pub diagnostics: Vec<Diagnostic>,
}

impl PosteriorSample {
    pub fn n_draws(&self) -> usize {
        self.draws.len()
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.patient_ids.iter().position(|p| p == id)
    }

    /// Posterior mean of every scalar, in [`scalar_names`] order.
    pub fn scalar_means(&self) -> Vec<f64> {
        let mut acc = vec![0.0; scalar_names(self.variant, self.covariate_names.len()).len()];
        for g in &self.draws {
            for (a, v) in acc.iter_mut().zip(scalars(g, self.variant)) {
                *a += v;
            }
        }
        acc.iter()
            .map(|v| v / self.draws.len().max(1) as f64)
            .collect()
    }

    pub fn diagnostic(&self, name: &str) -> Option<&Diagnostic> {
        self.diagnostics.iter().find(|d| d.name == name)
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Rescales a covariance so that its variances lie in `[lo, hi]`, keeping
/// its correlations.
fn clamp_variances(m: &Matrix3<f64>, lo: f64, hi: f64) -> Matrix3<f64> {
    let d = m.diagonal().map(|v| v.sqrt());
    let c = d.map(|s| s.powi(2).clamp(lo, hi).sqrt());
    Matrix3::from_fn(|i, j| m[(i, j)] / (d[i] * d[j]) * c[i] * c[j])
}

fn draw_cov<R: Rng + ?Sized>(
    p: &Matrix3<f64>,
    df: f64,
    diagonal: bool,
    rng: &mut R,
) -> Matrix3<f64> {
    if diagonal {
        return Matrix3::from_fn(|i, j| {
            if i != j {
                return 0.0;
            }
            let (a, b) = PriorConfig::diag_inv_gamma(p, df, i);
            1.0 / Gamma::new(a, 1.0 / b).unwrap().sample(rng)
        });
    }
    let scale = p.try_inverse().unwrap_or_else(Matrix3::identity);
    let prec = sample_wishart3(&scale, df, rng);
    let cov = prec.try_inverse().unwrap_or_else(Matrix3::identity);
    0.5 * (cov + cov.transpose())
}

/// Globals drawn from the prior.
pub fn prior_globals<R: Rng + ?Sized>(
    prior: &PriorConfig,
    variant: Variant,
    n_cov: usize,
    rng: &mut R,
) -> GlobalParams {
    let mut g = GlobalParams {
        beta: (0..n_cov)
            .map(|_| {
                let mut b = [0.0; 3];
                for l in 0..3 {
                    b[l] = prior.b_beta[l] + prior.t2_beta[l].sqrt() * normal(rng);
                }
                b
            })
            .collect(),
        gamma: [0.0; 3],
        nu: [0.0; 3],
        sigma: draw_cov(&prior.p_sigma, prior.n_sigma, variant.diagonal(), rng),
        theta: 0.0,
        phi: draw_cov(&prior.p_phi, prior.n_phi, variant.diagonal(), rng),
        ou_var: 0.0,
        ou_decay: 0.0,
        rho: Gamma::new(prior.a_rho, 1.0 / prior.b_rho)
            .unwrap()
            .sample(rng),
        varpi: Beta::new(prior.a_varpi, prior.b_varpi).unwrap().sample(rng),
    };
    for l in 0..3 {
        g.gamma[l] = -(prior.c_gamma[l] + prior.u2_gamma[l].sqrt() * normal(rng)).exp();
        g.nu[l] = prior.m_nu[l] + prior.s2_nu[l].sqrt() * normal(rng);
    }
    let a: f64 = Beta::new(prior.a_theta, prior.b_theta).unwrap().sample(rng);
    g.theta = -a.ln();
    let a: f64 = Beta::new(prior.a_phi, prior.b_phi).unwrap().sample(rng);
    g.ou_decay = -a.ln();
    let shape = prior.a_sigma;
    g.ou_var = 1.0 / Gamma::new(shape, 1.0 / prior.b_sigma).unwrap().sample(rng);
    g
}

/// Globals drawn from the prior and, when there are data, pulled into a box
/// around values the data make plausible.
pub fn init_globals<R: Rng + ?Sized>(
    data: &[PatientData],
    prior: &PriorConfig,
    variant: Variant,
    n_cov: usize,
    rng: &mut R,
) -> GlobalParams {
    let mut g = prior_globals(prior, variant, n_cov, rng);
    let weeks: f64 = data.iter().map(|d| d.n as f64).sum();
    if weeks > 0.0 {
        let zbar = data
            .iter()
            .flat_map(|d| d.rounds.iter().map(|r| r.obs_med as f64 * r.len() as f64))
            .sum::<f64>()
            / weeks;
        for l in 0..3 {
            g.gamma[l] = g.gamma[l].clamp(-1.0, -0.01);
            let y: f64 = data.iter().map(|d| d.ytot[l]).sum();
            let centre = ((y + 0.5) / weeks).ln() - g.gamma[l] * zbar;
            g.nu[l] = g.nu[l].clamp(centre - 0.5, centre + 0.5);
            for b in &mut g.beta {
                b[l] = b[l].clamp(-0.5, 0.5);
            }
        }
        g.sigma = clamp_variances(&g.sigma, 0.1, 2.0);
        g.phi = clamp_variances(&g.phi, 0.05, 1.0);
        g.theta = g.theta.clamp(0.01, 0.7);
        g.ou_decay = g.ou_decay.clamp(0.01, 1.2);
        g.ou_var = g.ou_var.clamp(1e-3, 0.1);
        g.rho = g.rho.clamp(1e-4, 0.05);
        g.varpi = g.varpi.clamp(0.05, 0.95);
    }
    g
}

/// Starting state of one chain: globals from [`init_globals`], each patient
/// held at its observed round levels with `alpha` at `nu` and no time effects.
pub fn init_state(
    data: &[PatientData],
    cfg: &FitConfig,
    prior: &PriorConfig,
    n_cov: usize,
    chain: usize,
) -> ChainState {
    let mut rng = substream(cfg.seed, domain::INIT, chain as u64, 0);
    let globals = init_globals(data, prior, cfg.variant, n_cov, &mut rng);
    let latent = cfg.variant.has_latent();
    let patients = data
        .iter()
        .map(|d| PatientState::at_observed(d, &globals, latent))
        .collect();
    ChainState {
        globals,
        patients,
        iteration: 0,
        tune: GlobalTuning::default(),
    }
}

/// Robbins-Monro step for iteration `it`, or `None` once adaptation stops.
fn adapt_step(cfg: &FitConfig, it: usize) -> Option<f64> {
    (cfg.adapt && it < cfg.burn_in).then(|| ((it + 1) as f64).powf(-0.6))
}

/// One Gibbs sweep: every patient block in parallel, then the globals.
pub fn sweep(
    state: &mut ChainState,
    data: &[PatientData],
    cfg: &FitConfig,
    prior: &PriorConfig,
    chain: usize,
) -> Result<()> {
    let it = state.iteration;
    let variant = cfg.variant;
    let mut consts = SweepConsts::new(
        &state.globals,
        prior,
        variant.has_latent(),
        variant.has_latent(),
    );
    consts.delta_block = cfg.delta_block;
    consts.jump_moves = cfg.jump_moves;
    consts.adapt_step = adapt_step(cfg, it);
    state
        .patients
        .par_iter_mut()
        .zip(data.par_iter())
        .enumerate()
        .for_each(|(i, (s, d))| {
            let mut rng = substream(cfg.seed, domain::PATIENT, chain as u64, pack(i, it));
            s.update(d, &consts, &mut rng);
        });
    let mut rng = substream(cfg.seed, domain::GLOBAL, chain as u64, it as u64);
    let ctx = GlobalCtx {
        prior,
        variant,
        adapt_step: consts.adapt_step,
        likelihood: true,
    };
    update_globals(
        &mut state.globals,
        data,
        &mut state.patients,
        &ctx,
        &mut state.tune,
        &mut rng,
    );
    state.iteration += 1;
    let ll: f64 = state
        .patients
        .iter()
        .zip(data)
        .map(|(s, d)| s.loglik(d))
        .sum();
    let finite = ll.is_finite()
        && scalars(&state.globals, variant)
            .iter()
            .all(|v| v.is_finite());
    if !finite || state.globals.check().is_err() {
        return Err(Error::Numerical(format!(
            "chain {chain} iteration {it}: non-finite log posterior (log-likelihood {ll}); globals {:?}",
            state.globals
        )));
    }
    Ok(())
}

struct ChainOutput {
    draws: Vec<GlobalParams>,
    patients: Vec<Vec<PatientDraw>>,
    latent: Vec<Vec<Vec<f64>>>,
    proposed: [u64; N_SCALES],
    accepted: [u64; N_SCALES],
    tune: GlobalTuning,
}

fn patient_draw(s: &PatientState) -> PatientDraw {
    let last = s.delta.last().copied().unwrap_or([0.0; 3]);
    [
        s.alpha[0], s.alpha[1], s.alpha[2], last[0], last[1], last[2],
    ]
}

fn run_chain(
    data: &[PatientData],
    cfg: &FitConfig,
    prior: &PriorConfig,
    n_cov: usize,
    chain: usize,
) -> Result<ChainOutput> {
    let mut state = init_state(data, cfg, prior, n_cov, chain);
    let keep = cfg.retained();
    let mut out = ChainOutput {
        draws: Vec::with_capacity(keep),
        patients: Vec::with_capacity(keep),
        latent: vec![Vec::new(); if cfg.save_latent { data.len() } else { 0 }],
        proposed: [0; N_SCALES],
        accepted: [0; N_SCALES],
        tune: GlobalTuning::default(),
    };
    for it in 0..cfg.iterations {
        sweep(&mut state, data, cfg, prior, chain)?;
        if cfg.keeps(it) {
            out.draws.push(state.globals.clone());
            out.patients
                .push(state.patients.iter().map(patient_draw).collect());
            if cfg.save_latent {
                for (slot, s) in out.latent.iter_mut().zip(&state.patients) {
                    slot.push(s.z.clone());
                }
            }
        }
    }
    for s in &state.patients {
        for k in 0..N_SCALES {
            out.proposed[k] += s.tune.proposed[k];
            out.accepted[k] += s.tune.accepted[k];
        }
    }
    out.tune = state.tune;
    Ok(out)
}

/// Convergence diagnostics of every scalar of the globals.
pub fn diagnose(
    draws: &[GlobalParams],
    chain_of: &[usize],
    chains: usize,
    variant: Variant,
    n_cov: usize,
) -> Vec<Diagnostic> {
    let names = scalar_names(variant, n_cov);
    let mut series = vec![vec![Vec::new(); chains]; names.len()];
    for (g, &c) in draws.iter().zip(chain_of) {
        for (k, v) in scalars(g, variant).into_iter().enumerate() {
            series[k][c].push(v);
        }
    }
    names
        .into_iter()
        .zip(series)
        .map(|(name, s)| Diagnostic {
            name,
            rhat: split_rhat(&s),
            ess: ess(&s),
        })
        .collect()
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker threads: {e}")))
}

/// Runs `cfg.chains` independent chains on a cohort and collects the
/// retained draws. Results depend only on the cohort, `cfg` (apart from
/// `jobs`) and `prior`.
pub fn run_chains(
    cohort: &Cohort,
    cfg: &FitConfig,
    prior: &PriorConfig,
) -> Result<PosteriorSample> {
    cfg.validate()?;
    prior.validate()?;
    let data: Vec<PatientData> = cohort.patients.iter().map(PatientData::new).collect();
    let n_cov = cohort.n_covariates();
    let pool = thread_pool(cfg.jobs)?;
    let outputs: Vec<ChainOutput> = pool.install(|| {
        (0..cfg.chains)
            .into_par_iter()
            .map(|c| run_chain(&data, cfg, prior, n_cov, c))
            .collect::<Result<Vec<_>>>()
    })?;

    let mut sample = PosteriorSample {
        variant: cfg.variant,
        chains: cfg.chains,
        covariate_names: cohort.covariate_names.clone(),
        scaling: cohort.scaling.clone(),
        patient_ids: cohort.patients.iter().map(|p| p.id.clone()).collect(),
        patient_x: cohort
            .patients
            .iter()
            .map(|p| p.covariates.clone())
            .collect(),
        draws: Vec::new(),
        chain_of: Vec::new(),
        patients: Vec::new(),
        latent: vec![Vec::new(); if cfg.save_latent { data.len() } else { 0 }],
        acceptance: Vec::new(),
        diagnostics: Vec::new(),
    };
    let mut proposed = [0u64; N_SCALES];
    let mut accepted = [0u64; N_SCALES];
    let mut gprop = [0u64; N_GLOBAL_SCALES];
    let mut gacc = [0u64; N_GLOBAL_SCALES];
    for (c, out) in outputs.into_iter().enumerate() {
        sample
            .chain_of
            .extend(std::iter::repeat_n(c, out.draws.len()));
        sample.draws.extend(out.draws);
        sample.patients.extend(out.patients);
        for (slot, paths) in sample.latent.iter_mut().zip(out.latent) {
            slot.extend(paths);
        }
        for k in 0..N_SCALES {
            proposed[k] += out.proposed[k];
            accepted[k] += out.accepted[k];
        }
        for k in 0..N_GLOBAL_SCALES {
            gprop[k] += out.tune.proposed[k];
            gacc[k] += out.tune.accepted[k];
        }
    }
    let rate = |a: u64, p: u64| {
        if p == 0 {
            f64::NAN
        } else {
            a as f64 / p as f64
        }
    };
    for k in 0..N_SCALES {
        if proposed[k] > 0 {
            sample
                .acceptance
                .push((mv::NAMES[k].to_string(), rate(accepted[k], proposed[k])));
        }
    }
    for k in 0..N_GLOBAL_SCALES {
        if gprop[k] > 0 {
            sample
                .acceptance
                .push((GLOBAL_SCALE_NAMES[k].to_string(), rate(gacc[k], gprop[k])));
        }
    }
    sample.diagnostics = diagnose(
        &sample.draws,
        &sample.chain_of,
        cfg.chains,
        cfg.variant,
        n_cov,
    );
    Ok(sample)
}

/// Fits the model variant named in `cfg`.
pub fn fit_variant(
    cohort: &Cohort,
    cfg: &FitConfig,
    prior: &PriorConfig,
) -> Result<PosteriorSample> {
    run_chains(cohort, cfg, prior)
}
