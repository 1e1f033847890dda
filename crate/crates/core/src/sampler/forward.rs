//! Forward simulation of the full joint model and the Geweke joint
//! distribution test of the transition operator.
//!
//! Marginal-conditional draws come straight from the prior and the
//! likelihood. Successive-conditional draws alternate one sweep of the
//! sampler with a fresh draw of the data given the current parameters. Both
//! sequences target the same joint law, so every test statistic must agree in
//! mean.

use std::collections::BTreeSet;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use super::config::{FitConfig, Variant};
use super::globals::GlobalTuning;
use super::patient::SweepConsts;
use super::run::{prior_globals, sweep, ChainState};
use super::state::{PatientData, PatientState};
use crate::cohort::{Patient, Round, WeeklyOutcomes};
use crate::error::Result;
use crate::latent::{censor_sum, truncate_level, MAX_SEGMENTS};
use crate::outcome::GlobalParams;
use crate::prior::PriorConfig;
use crate::rng::{domain, substream};

/// Fixed design of a small cohort: covariates, round layout and visits.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub x: Vec<Vec<f64>>,
    pub round_weeks: Vec<usize>,
    pub visits: Vec<BTreeSet<usize>>,
}

impl Design {
    /// Three patients, two 16-week rounds, one covariate and a few visits.
    pub fn micro() -> Self {
        Design {
            x: vec![vec![-1.0], vec![0.0], vec![1.0]],
            round_weeks: vec![16, 16],
            visits: vec![
                [5, 20].into_iter().collect(),
                [12].into_iter().collect(),
                [3, 15, 27].into_iter().collect(),
            ],
        }
    }

    pub fn n_patients(&self) -> usize {
        self.x.len()
    }

    pub fn n_weeks(&self) -> usize {
        self.round_weeks.iter().sum()
    }
}

/// Tight prior that keeps the micro-model's forward draws in a range where
/// the data are informative and the chain mixes.
pub fn micro_prior() -> PriorConfig {
    PriorConfig {
        m_nu: [-2.0; 3],
        s2_nu: [0.25; 3],
        p_sigma: nalgebra::Matrix3::identity() * 2.0,
        n_sigma: 20.0,
        b_beta: [0.0; 3],
        t2_beta: [0.1; 3],
        c_gamma: [(0.2f64).ln(); 3],
        u2_gamma: [0.1; 3],
        a_theta: 8.0,
        b_theta: 2.0,
        p_phi: nalgebra::Matrix3::identity() * 2.0,
        n_phi: 20.0,
        m_mu: 2.0,
        s2_mu: 1.0,
        a_sigma: 5.0,
        b_sigma: 0.2,
        a_phi: 6.0,
        b_phi: 3.0,
        a_rho: 2.0,
        b_rho: 100.0,
        a_varpi: 3.0,
        b_varpi: 6.0,
    }
}

/// Jump pattern of one patient: Poisson counts per week and visit triggers.
struct Jumps {
    pcount: Vec<u8>,
    vjump: Vec<bool>,
}

fn draw_jumps<R: Rng + ?Sized>(n: usize, visits: &[usize], g: &GlobalParams, rng: &mut R) -> Jumps {
    let mut pcount = vec![0u8; n];
    if g.rho > 0.0 {
        let pois = Poisson::new(g.rho).unwrap();
        for c in pcount.iter_mut().skip(1) {
            *c = (pois.sample(rng) as u64).min(u8::MAX as u64) as u8;
        }
    }
    let mut vjump = vec![false; n];
    for &v in visits {
        vjump[v] = rng.random::<f64>() < g.varpi;
    }
    Jumps { pcount, vjump }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

fn stationary_ar1<R: Rng + ?Sized>(out: &mut [f64], a: f64, var: f64, rng: &mut R) {
    let innov = (var * (1.0 - a * a)).sqrt();
    for k in 0..out.len() {
        out[k] = if k == 0 {
            var.sqrt() * normal(rng)
        } else {
            a * out[k - 1] + innov * normal(rng)
        };
    }
}

/// Draws `(globals, patient states)` from the prior. The jump rates and
/// jump patterns are redrawn together until every patient respects the
/// segment cap.
pub fn forward_parameters<R: Rng + ?Sized>(
    design: &Design,
    prior: &PriorConfig,
    variant: Variant,
    rng: &mut R,
) -> (GlobalParams, Vec<PatientState>, Vec<PatientData>) {
    let n_cov = design.x.first().map_or(0, Vec::len);
    let mut g = prior_globals(prior, variant, n_cov, rng);
    loop {
        if let Some((states, data)) = forward_patients(design, &g, prior, rng) {
            return (g, states, data);
        }
        let fresh = prior_globals(prior, variant, n_cov, rng);
        g.rho = fresh.rho;
        g.varpi = fresh.varpi;
    }
}

/// Patient-level quantities and data drawn given the globals, or `None`
/// when some patient's jump pattern exceeds the segment cap.
pub fn forward_patients<R: Rng + ?Sized>(
    design: &Design,
    g: &GlobalParams,
    prior: &PriorConfig,
    rng: &mut R,
) -> Option<(Vec<PatientState>, Vec<PatientData>)> {
    forward_cohort(design, g, prior, rng).map(|(s, d, _)| (s, d))
}

/// As [`forward_patients`], also returning the patients in cohort form.
#[allow(clippy::type_complexity)]
pub fn forward_cohort<R: Rng + ?Sized>(
    design: &Design,
    g: &GlobalParams,
    prior: &PriorConfig,
    rng: &mut R,
) -> Option<(Vec<PatientState>, Vec<PatientData>, Vec<Patient>)> {
    let n = design.n_weeks();
    let visits: Vec<Vec<usize>> = design
        .visits
        .iter()
        .map(|v| v.iter().copied().filter(|&w| w + 1 < n).collect())
        .collect();
    let jumps: Vec<Jumps> = visits.iter().map(|v| draw_jumps(n, v, g, rng)).collect();
    let ok = jumps.iter().all(|j| {
        let k: usize = j.pcount.iter().map(|&c| c as usize).sum::<usize>()
            + j.vjump.iter().filter(|&&v| v).count();
        k < MAX_SEGMENTS
    });
    if !ok {
        return None;
    }

    let chol = g.sigma.cholesky().expect("prior covariance").l();
    let phi_l = g.phi.cholesky().expect("prior covariance").l();
    let da = g.delta_lag();
    let oa = (-g.ou_decay).exp();
    let mut states = Vec::with_capacity(design.n_patients());
    let mut data = Vec::with_capacity(design.n_patients());
    let mut patients = Vec::with_capacity(design.n_patients());
    for (i, j) in jumps.into_iter().enumerate() {
        let mut b = vec![0u8; n];
        let mut h = 0u8;
        for w in 0..n {
            h += j.pcount[w];
            if w >= 1 && j.vjump[w - 1] {
                h += 1;
            }
            b[w] = h;
        }
        let k = h as usize;
        let mu: Vec<f64> = (0..=k)
            .map(|_| prior.m_mu + prior.s2_mu.sqrt() * normal(rng))
            .collect();
        let mut dev = vec![0.0; n];
        let mut s = 0;
        while s < n {
            let e = s + b[s..].iter().take_while(|&&x| x == b[s]).count();
            stationary_ar1(&mut dev[s..e], oa, g.ou_var, rng);
            s = e;
        }
        let e = Vector3::from_fn(|_, _| normal(rng));
        let alpha = Vector3::from(g.nu) + chol * e;
        let mut delta = vec![[0.0; 3]; n];
        let innov = (1.0 - da * da).sqrt();
        for w in 0..n {
            let e = phi_l * Vector3::from_fn(|_, _| normal(rng));
            for l in 0..3 {
                delta[w][l] = if w == 0 {
                    e[l]
                } else {
                    da * delta[w - 1][l] + innov * e[l]
                };
            }
        }
        let z: Vec<f64> = (0..n)
            .map(|w| truncate_level(mu[b[w] as usize] + dev[w]))
            .collect();
        let patient = simulate_patient(design, i, &z, &alpha.into(), &delta, g, rng);
        let d = PatientData::new(&patient);
        let mut st = PatientState::at_observed(&d, g, true);
        st.alpha = alpha.into();
        st.delta = delta;
        st.mu = mu;
        st.dev = dev;
        st.b = b;
        st.kc = j.pcount.iter().map(|&c| c as usize).sum();
        st.kd = j.vjump.iter().filter(|&&v| v).count();
        st.pcount = j.pcount;
        st.vjump = j.vjump;
        st.refresh(&d, g, true);
        debug_assert!(st.consistent(&d));
        states.push(st);
        data.push(d);
        patients.push(patient);
    }
    Some((states, data, patients))
}

/// Outcomes and observed levels of patient `i` given its path and effects.
fn simulate_patient<R: Rng + ?Sized>(
    design: &Design,
    i: usize,
    z: &[f64],
    alpha: &[f64; 3],
    delta: &[[f64; 3]],
    g: &GlobalParams,
    rng: &mut R,
) -> Patient {
    let x = &design.x[i];
    let xb = g.linear_predictor(x);
    let n = z.len();
    let rate = |w: usize, l: usize| (alpha[l] + xb[l] + g.gamma[l] * z[w] + delta[w][l]).exp();
    let pois = |lam: f64, rng: &mut R| {
        if lam > 0.0 {
            Poisson::new(lam).unwrap().sample(rng) as i64
        } else {
            0
        }
    };
    let ed_ip: Vec<i64> = (0..n).map(|w| pois(rate(w, 0), rng)).collect();
    let mut rounds = Vec::with_capacity(design.round_weeks.len());
    let mut start = 0;
    for (m, &len) in design.round_weeks.iter().enumerate() {
        let end = start + len;
        let s1: f64 = (start..end).map(|w| rate(w, 1)).sum();
        let s2: f64 = (start..end).map(|w| rate(w, 2)).sum();
        rounds.push(Round {
            index: m as u32 + 1,
            week_start: start,
            week_end: end,
            obs_med: censor_sum(z[start..end].iter().sum(), len) as i64,
            obs_rescue: pois(s1, rng),
            obs_ocs: pois(s2, rng),
        });
        start = end;
    }
    Patient {
        id: format!("p{i}"),
        raw_covariates: x.clone(),
        covariates: x.clone(),
        rounds,
        visit_weeks: design.visits[i].clone(),
        outcomes: WeeklyOutcomes {
            ed_ip,
            rescue: None,
            ocs: None,
        },
    }
}

/// Fresh data given the current parameters; states are refreshed in place.
pub fn resimulate<R: Rng + ?Sized>(
    design: &Design,
    g: &GlobalParams,
    states: &mut [PatientState],
    rng: &mut R,
) -> Vec<PatientData> {
    states
        .iter_mut()
        .enumerate()
        .map(|(i, s)| {
            let p = simulate_patient(design, i, &s.z, &s.alpha, &s.delta, g, rng);
            let d = PatientData::new(&p);
            s.refresh(&d, g, true);
            d
        })
        .collect()
}

/// Patient updates with the observed levels ignored. The observed level of
/// a round is a function of the path, so constrained moves alone can never
/// change it; this kernel lets the joint chain move between levels.
pub fn free_path_update<R: Rng + ?Sized>(
    g: &GlobalParams,
    prior: &PriorConfig,
    states: &mut [PatientState],
    data: &[PatientData],
    rng: &mut R,
) {
    let mut c = SweepConsts::new(g, prior, true, true);
    c.constrained = false;
    for (s, d) in states.iter_mut().zip(data) {
        s.update(d, &c, rng);
    }
}

pub const GEWEKE_STAT_NAMES: [&str; 20] = [
    "nu_1",
    "nu_2",
    "nu_3",
    "Sigma_1_1",
    "Sigma_3_3",
    "Sigma_1_2",
    "gamma_1",
    "gamma_2",
    "gamma_3",
    "beta_1_1",
    "theta",
    "Phi_1_1",
    "Phi_1_3",
    "ou_var",
    "ou_decay",
    "rho",
    "varpi",
    "mean_jumps",
    "mean_z",
    "mean_alpha_1",
];

/// Statistics of the medication process, which the GLMER variant does not
/// sample.
const LATENT_STATS: std::ops::RangeInclusive<usize> = 10..=17;

pub fn geweke_stats(g: &GlobalParams, states: &[PatientState]) -> [f64; 20] {
    let np = states.len() as f64;
    let jumps = states.iter().map(|s| s.n_jumps() as f64).sum::<f64>() / np;
    let zs: f64 = states
        .iter()
        .map(|s| s.z.iter().sum::<f64>() / s.z.len() as f64)
        .sum::<f64>()
        / np;
    let a1 = states.iter().map(|s| s.alpha[0]).sum::<f64>() / np;
    [
        g.nu[0],
        g.nu[1],
        g.nu[2],
        g.sigma[(0, 0)],
        g.sigma[(2, 2)],
        g.sigma[(0, 1)],
        g.gamma[0],
        g.gamma[1],
        g.gamma[2],
        g.beta[0][0],
        g.theta,
        g.phi[(0, 0)],
        g.phi[(0, 2)],
        g.ou_var,
        g.ou_decay,
        g.rho,
        g.varpi,
        jumps,
        zs,
        a1,
    ]
}

/// Mean and batch-means standard error of a sequence.
pub fn batch_mean_se(x: &[f64], batches: usize) -> (f64, f64) {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (mean, (var / batches as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GewekeStat {
    pub name: &'static str,
    pub marginal: f64,
    pub successive: f64,
    pub z: f64,
}

/// Runs both simulators and returns one z-score per statistic.
pub fn geweke_test(
    design: &Design,
    prior: &PriorConfig,
    variant: Variant,
    marginal: usize,
    successive: usize,
    seed: u64,
) -> Result<Vec<GewekeStat>> {
    let mut mc: Vec<Vec<f64>> = vec![Vec::with_capacity(marginal); 20];
    for k in 0..marginal {
        let mut rng = substream(seed, domain::TRUTH, 0, k as u64);
        let (g, states, _) = forward_parameters(design, prior, variant, &mut rng);
        for (c, v) in mc.iter_mut().zip(geweke_stats(&g, &states)) {
            c.push(v);
        }
    }

    let cfg = FitConfig {
        variant,
        chains: 1,
        iterations: successive,
        burn_in: 0,
        thin: 1,
        seed,
        adapt: false,
        jobs: 1,
        ..FitConfig::default()
    };
    let mut rng = substream(seed, domain::TRUTH, 1, u64::MAX);
    let (globals, patients, mut data) = forward_parameters(design, prior, variant, &mut rng);
    let mut state = ChainState {
        globals,
        patients,
        iteration: 0,
        tune: GlobalTuning::default(),
    };
    let mut sc: Vec<Vec<f64>> = vec![Vec::with_capacity(successive); 20];
    for it in 0..successive {
        sweep(&mut state, &data, &cfg, prior, 0)?;
        let mut rng = substream(seed, domain::TRUTH, 2, it as u64);
        free_path_update(&state.globals, prior, &mut state.patients, &data, &mut rng);
        data = resimulate(design, &state.globals, &mut state.patients, &mut rng);
        for (c, v) in sc
            .iter_mut()
            .zip(geweke_stats(&state.globals, &state.patients))
        {
            c.push(v);
        }
    }

    Ok((0..20)
        .filter(|k| variant.has_latent() || !LATENT_STATS.contains(k))
        .map(|k| {
            let (m1, s1) = batch_mean_se(&mc[k], 50);
            let (m2, s2) = batch_mean_se(&sc[k], 50);
            let se = (s1 * s1 + s2 * s2).sqrt();
            GewekeStat {
                name: GEWEKE_STAT_NAMES[k],
                marginal: m1,
                successive: m2,
                z: if se > 0.0 { (m1 - m2) / se } else { 0.0 },
            }
        })
        .collect())
}
