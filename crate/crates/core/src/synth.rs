//! Synthetic cohorts with known truth: medication escalates after adverse
//! events and changes at random otherwise, outcomes follow the log-linear
//! intensity model, and the observed view is censored to round summaries.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use crate::cohort::{
    check_header, field, read_records, write_text, Cohort, Patient, Round, WeeklyOutcomes,
    ROUNDS_PER_PATIENT,
};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::latent::{censor_mean, MAX_LEVEL};
use crate::outcome::{cholesky3, GlobalParams};
use crate::predict::{event_probs, AdverseEventDef};
use crate::prior::{parse_list, parse_matrix, render_matrix};
use crate::rng::{domain, substream};

/// Distribution of one generated covariate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateKind {
    Binary(f64),
    Uniform(f64, f64),
    Count(f64),
}

impl CovariateKind {
    pub fn mean(self) -> f64 {
        match self {
            CovariateKind::Binary(p) => p,
            CovariateKind::Uniform(a, b) => 0.5 * (a + b),
            CovariateKind::Count(m) => m,
        }
    }

    fn sample<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            CovariateKind::Binary(p) => f64::from(u8::from(rng.random::<f64>() < p)),
            CovariateKind::Uniform(a, b) => rng.random_range(a..b).round(),
            CovariateKind::Count(m) => Poisson::new(m).map_or(0.0, |d| d.sample(rng)),
        }
    }
}

/// Covariates with their effects on ED/IP, rescue and OCS rates per unit.
#[allow(clippy::approx_constant)]
pub const DEFAULT_COVARIATES: [(&str, CovariateKind, [f64; 3]); 10] = [
    ("sex", CovariateKind::Binary(0.6), [0.270, 0.137, 0.082]),
    (
        "age",
        CovariateKind::Uniform(18.0, 85.0),
        [-0.028, -0.009, 0.033],
    ),
    ("msa", CovariateKind::Binary(0.8), [-0.294, -0.325, 0.318]),
    (
        "smoke1",
        CovariateKind::Binary(0.15),
        [-0.244, 0.353, -0.029],
    ),
    (
        "smoke2",
        CovariateKind::Binary(0.2),
        [-0.033, 0.033, -0.106],
    ),
    (
        "ch_count",
        CovariateKind::Count(1.0),
        [-0.412, 0.116, 0.008],
    ),
    (
        "dep_flag",
        CovariateKind::Binary(0.2),
        [0.400, 0.108, -0.615],
    ),
    (
        "copd_flag",
        CovariateKind::Binary(0.1),
        [0.298, 0.467, -0.295],
    ),
    (
        "gerd_flag",
        CovariateKind::Binary(0.15),
        [-0.204, 0.017, 0.226],
    ),
    (
        "resp_flag",
        CovariateKind::Binary(0.25),
        [-0.069, 0.051, -0.337],
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct TruthConfig {
    /// Generating parameters; `beta` applies to covariates centred at their
    /// population means. Only `nu`, `sigma`, `beta`, `gamma`, `theta` and
    /// `phi` are used.
    pub globals: GlobalParams,
    pub covariate_names: Vec<String>,
    pub covariate_kinds: Vec<CovariateKind>,
    pub n_patients: usize,
    /// Chance of escalating to a higher level in a week with an ED/IP visit
    /// or OCS fill.
    pub escalation_prob: f64,
    pub daily_change_prob: f64,
    /// Distribution of randomly chosen new and initial levels.
    pub level_freq: [f64; 6],
    /// Starting level per patient; drawn from `level_freq` when empty.
    pub initial_levels: Vec<u8>,
    /// Weekly chance of a routine provider contact.
    pub visit_prob: f64,
    pub round_weeks: (usize, usize),
    pub n_replicates: usize,
    pub seed: u64,
}

impl Default for TruthConfig {
    fn default() -> Self {
        let corr = |v: [f64; 3], r: f64| {
            Matrix3::from_fn(|i, j| {
                if i == j {
                    v[i]
                } else {
                    r * (v[i] * v[j]).sqrt()
                }
            })
        };
        TruthConfig {
            globals: GlobalParams {
                beta: DEFAULT_COVARIATES.iter().map(|c| c.2).collect(),
                gamma: [-0.264, -0.017, -0.189],
                nu: [-5.2, -3.8, -5.8],
                sigma: corr([0.6, 0.4, 0.6], 0.6),
                theta: 0.05,
                phi: corr([0.3, 0.15, 0.3], 0.6),
                ou_var: 0.0125,
                ou_decay: 0.4,
                rho: 0.01,
                varpi: 0.3,
            },
            covariate_names: DEFAULT_COVARIATES.iter().map(|c| c.0.to_string()).collect(),
            covariate_kinds: DEFAULT_COVARIATES.iter().map(|c| c.1).collect(),
            n_patients: 500,
            escalation_prob: 0.5,
            daily_change_prob: 0.003,
            level_freq: [0.50, 0.25, 0.12, 0.08, 0.04, 0.01],
            initial_levels: Vec::new(),
            visit_prob: 0.05,
            round_weeks: (16, 24),
            n_replicates: 100,
            seed: 1,
        }
    }
}

impl TruthConfig {
    pub const KEYS: [&'static str; 17] = [
        "n_patients",
        "n_replicates",
        "seed",
        "escalation_prob",
        "daily_change_prob",
        "level_freq",
        "initial_levels",
        "visit_prob",
        "round_weeks_min",
        "round_weeks_max",
        "n_covariates",
        "nu",
        "gamma",
        "Sigma",
        "theta",
        "Phi",
        "beta_scale",
    ];

    /// Keeps only the first `j` default covariates.
    pub fn with_covariates(mut self, j: usize) -> Self {
        let j = j.min(DEFAULT_COVARIATES.len());
        self.globals.beta.truncate(j);
        self.covariate_names.truncate(j);
        self.covariate_kinds.truncate(j);
        self
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let mut t = TruthConfig::default();
        let mut j = t.covariate_names.len();
        kv.take("n_covariates", &mut j)?;
        t = t.with_covariates(j);
        kv.take("n_patients", &mut t.n_patients)?;
        kv.take("n_replicates", &mut t.n_replicates)?;
        kv.take("seed", &mut t.seed)?;
        kv.take("escalation_prob", &mut t.escalation_prob)?;
        kv.take("daily_change_prob", &mut t.daily_change_prob)?;
        kv.take("visit_prob", &mut t.visit_prob)?;
        kv.take("round_weeks_min", &mut t.round_weeks.0)?;
        kv.take("round_weeks_max", &mut t.round_weeks.1)?;
        kv.take("theta", &mut t.globals.theta)?;
        if let Some(v) = kv.get("level_freq") {
            let xs = parse_list("level_freq", v)?;
            if xs.len() != 6 {
                return Err(Error::Config("level_freq needs six values".into()));
            }
            t.level_freq.copy_from_slice(&xs);
        }
        if let Some(v) = kv.get("initial_levels") {
            t.initial_levels = parse_list("initial_levels", v)?
                .into_iter()
                .map(|x| x as u8)
                .collect();
        }
        for (key, slot) in [("nu", &mut t.globals.nu), ("gamma", &mut t.globals.gamma)] {
            if let Some(v) = kv.get(key) {
                let xs = parse_list(key, v)?;
                match xs.len() {
                    1 => *slot = [xs[0]; 3],
                    3 => slot.copy_from_slice(&xs),
                    _ => return Err(Error::Config(format!("{key} needs 1 or 3 values"))),
                }
            }
        }
        if let Some(v) = kv.get("Sigma") {
            t.globals.sigma = parse_matrix("Sigma", v)?;
        }
        if let Some(v) = kv.get("Phi") {
            t.globals.phi = parse_matrix("Phi", v)?;
        }
        let mut scale = 1.0;
        kv.take("beta_scale", &mut scale)?;
        for b in &mut t.globals.beta {
            for v in b.iter_mut() {
                *v *= scale;
            }
        }
        t.validate()?;
        Ok(t)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        let list = |v: &[f64]| {
            v.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        kv.insert("n_patients", self.n_patients);
        kv.insert("n_replicates", self.n_replicates);
        kv.insert("seed", self.seed);
        kv.insert("escalation_prob", self.escalation_prob);
        kv.insert("daily_change_prob", self.daily_change_prob);
        kv.insert("level_freq", list(&self.level_freq));
        if !self.initial_levels.is_empty() {
            let v: Vec<f64> = self.initial_levels.iter().map(|&l| l as f64).collect();
            kv.insert("initial_levels", list(&v));
        }
        kv.insert("visit_prob", self.visit_prob);
        kv.insert("round_weeks_min", self.round_weeks.0);
        kv.insert("round_weeks_max", self.round_weeks.1);
        kv.insert("n_covariates", self.covariate_names.len());
        kv.insert("nu", list(&self.globals.nu));
        kv.insert("gamma", list(&self.globals.gamma));
        kv.insert("Sigma", render_matrix(&self.globals.sigma));
        kv.insert("theta", self.globals.theta);
        kv.insert("Phi", render_matrix(&self.globals.phi));
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, p) in [
            ("escalation_prob", self.escalation_prob),
            ("daily_change_prob", self.daily_change_prob),
            ("visit_prob", self.visit_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} {p} outside [0,1]"));
            }
        }
        if self.level_freq.iter().any(|&p| !(p >= 0.0))
            || (self.level_freq.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return bad("level_freq must be nonnegative and sum to 1".into());
        }
        if !self.initial_levels.is_empty() && self.initial_levels.len() != self.n_patients {
            return bad(format!(
                "{} initial levels for {} patients",
                self.initial_levels.len(),
                self.n_patients
            ));
        }
        if self.initial_levels.iter().any(|&l| l > MAX_LEVEL) {
            return bad("initial levels must lie in 0..=5".into());
        }
        let (lo, hi) = self.round_weeks;
        if lo == 0 || lo > hi {
            return bad(format!("round length range {lo}..={hi} is empty"));
        }
        if !(self.globals.theta > 0.0) {
            return bad("theta must be positive".into());
        }
        cholesky3(&self.globals.sigma, "Sigma")?;
        cholesky3(&self.globals.phi, "Phi")?;
        if self.globals.beta.len() != self.covariate_names.len() {
            return bad("one beta row per covariate required".into());
        }
        Ok(())
    }

    pub fn covariate_means(&self) -> Vec<f64> {
        self.covariate_kinds.iter().map(|k| k.mean()).collect()
    }

    /// Weekly probability of a random level change.
    pub fn weekly_change_prob(&self) -> f64 {
        1.0 - (1.0 - self.daily_change_prob).powi(7)
    }
}

/// Ground truth of one generated patient.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthPatient {
    pub id: String,
    pub alpha: [f64; 3],
    /// `alpha + (x - mean) beta`.
    pub base: [f64; 3],
    pub delta: Vec<[f64; 3]>,
    pub z: Vec<u8>,
    /// Weekly counts of every outcome.
    pub y: Vec<[i64; 3]>,
    /// Weeks at which an event triggered an escalation (effective next week).
    pub escalations: Vec<usize>,
}

impl TruthPatient {
    pub fn final_level(&self) -> u8 {
        self.z.last().copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCohort {
    pub replicate: usize,
    pub cohort: Cohort,
    pub truth: Vec<TruthPatient>,
}

fn draw_level<R: Rng + ?Sized>(freq: &[f64; 6], rng: &mut R) -> u8 {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, &p) in freq.iter().enumerate() {
        acc += p;
        if u < acc {
            return k as u8;
        }
    }
    freq.iter().rposition(|&p| p > 0.0).unwrap_or(0) as u8
}

fn gauss3<R: Rng + ?Sized>(rng: &mut R) -> Vector3<f64> {
    Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    )
}

fn generate_patient(t: &TruthConfig, replicate: usize, i: usize) -> (Patient, TruthPatient) {
    let g = &t.globals;
    let mut rng = substream(t.seed, domain::SYNTH, replicate as u64, i as u64);
    let raw: Vec<f64> = t
        .covariate_kinds
        .iter()
        .map(|k| k.sample(&mut rng))
        .collect();
    let centred: Vec<f64> = raw
        .iter()
        .zip(t.covariate_means())
        .map(|(x, m)| x - m)
        .collect();
    let ls = g.sigma.cholesky().expect("validated").l();
    let a = Vector3::from(g.nu) + ls * gauss3(&mut rng);
    let alpha = [a[0], a[1], a[2]];
    let xb = g.linear_predictor(&centred);
    let base = [alpha[0] + xb[0], alpha[1] + xb[1], alpha[2] + xb[2]];

    let lens: Vec<usize> = (0..ROUNDS_PER_PATIENT)
        .map(|_| rng.random_range(t.round_weeks.0..=t.round_weeks.1))
        .collect();
    let n: usize = lens.iter().sum();

    let lp = g.phi.cholesky().expect("validated").l();
    let ar = g.delta_lag();
    let innov = (1.0 - ar * ar).sqrt();
    let mut delta = Vec::with_capacity(n);
    let mut prev = lp * gauss3(&mut rng);
    for w in 0..n {
        if w > 0 {
            prev = prev * ar + lp * gauss3(&mut rng) * innov;
        }
        delta.push([prev[0], prev[1], prev[2]]);
    }

    let change = t.weekly_change_prob();
    let mut level = if t.initial_levels.is_empty() {
        draw_level(&t.level_freq, &mut rng)
    } else {
        t.initial_levels[i]
    };
    let mut z = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut visits = BTreeSet::new();
    let mut escalations = Vec::new();
    for w in 0..n {
        z.push(level);
        let mut counts = [0i64; 3];
        for l in 0..3 {
            let rate = (base[l] + g.gamma[l] * level as f64 + delta[w][l]).exp();
            counts[l] = Poisson::new(rate).map_or(0, |d| d.sample(&mut rng) as i64);
        }
        y.push(counts);
        let acute = counts[0] > 0 || counts[2] > 0;
        if acute || rng.random::<f64>() < t.visit_prob {
            visits.insert(w);
        }
        if acute && level < MAX_LEVEL && rng.random::<f64>() < t.escalation_prob {
            level = rng.random_range(level + 1..=MAX_LEVEL);
            escalations.push(w);
        }
        if rng.random::<f64>() < change {
            level = draw_level(&t.level_freq, &mut rng);
        }
    }

    let mut rounds = Vec::with_capacity(ROUNDS_PER_PATIENT);
    let mut start = 0;
    for (k, &len) in lens.iter().enumerate() {
        let end = start + len;
        let mean = z[start..end].iter().map(|&v| v as f64).sum::<f64>() / len as f64;
        rounds.push(Round {
            index: k as u32 + 1,
            week_start: start,
            week_end: end,
            obs_med: censor_mean(mean) as i64,
            obs_rescue: y[start..end].iter().map(|c| c[1]).sum(),
            obs_ocs: y[start..end].iter().map(|c| c[2]).sum(),
        });
        start = end;
    }
    let id = format!("P{:04}", i + 1);
    let patient = Patient {
        id: id.clone(),
        raw_covariates: raw,
        covariates: Vec::new(),
        rounds,
        visit_weeks: visits,
        outcomes: WeeklyOutcomes {
            ed_ip: y.iter().map(|c| c[0]).collect(),
            rescue: Some(y.iter().map(|c| c[1]).collect()),
            ocs: Some(y.iter().map(|c| c[2]).collect()),
        },
    };
    let truth = TruthPatient {
        id,
        alpha,
        base,
        delta,
        z,
        y,
        escalations,
    };
    (patient, truth)
}

/// Generates replicate `replicate`; the result depends only on `t` and
/// `replicate`.
///
/// A covariate that happens to be constant across the cohort has its value
/// for the last patient switched to the other level so that the column can
/// be standardised.
pub fn generate_cohort(t: &TruthConfig, replicate: usize) -> Result<SyntheticCohort> {
    t.validate()?;
    let (mut patients, truth): (Vec<Patient>, Vec<TruthPatient>) = (0..t.n_patients)
        .into_par_iter()
        .map(|i| generate_patient(t, replicate, i))
        .unzip();
    if patients.len() >= 2 {
        for j in 0..t.covariate_names.len() {
            let first = patients[0].raw_covariates[j];
            if patients.iter().all(|p| p.raw_covariates[j] == first) {
                let last = patients.last_mut().unwrap();
                last.raw_covariates[j] = if first == 0.0 { 1.0 } else { first - 1.0 };
            }
        }
    }
    let mut cohort = Cohort {
        covariate_names: t.covariate_names.clone(),
        scaling: Vec::new(),
        patients,
    };
    cohort.standardize()?;
    Ok(SyntheticCohort {
        replicate,
        cohort,
        truth,
    })
}

/// Rebuilds the round summaries of a patient from its truth.
pub fn observed_rounds(truth: &TruthPatient, bounds: &[(usize, usize)]) -> Vec<Round> {
    bounds
        .iter()
        .enumerate()
        .map(|(k, &(s, e))| {
            let mean = truth.z[s..e].iter().map(|&v| v as f64).sum::<f64>() / (e - s) as f64;
            Round {
                index: k as u32 + 1,
                week_start: s,
                week_end: e,
                obs_med: censor_mean(mean) as i64,
                obs_rescue: truth.y[s..e].iter().map(|c| c[1]).sum(),
                obs_ocs: truth.y[s..e].iter().map(|c| c[2]).sum(),
            }
        })
        .collect()
}

/// Monte-Carlo estimate of the generator's event probabilities at every
/// level: `(mean, standard error)` per level and outcome (ED/IP, rescue,
/// OCS, any), averaging over `n_paths` future time-effect paths.
pub fn true_event_probs<R: Rng + ?Sized>(
    g: &GlobalParams,
    tp: &TruthPatient,
    def: &AdverseEventDef,
    n_paths: usize,
    rng: &mut R,
) -> ([[f64; 4]; 6], [[f64; 4]; 6]) {
    let lp = g
        .phi
        .cholesky()
        .map(|c| c.l())
        .unwrap_or_else(Matrix3::zeros);
    let a = g.delta_lag();
    let innov = (1.0 - a * a).sqrt();
    let last = tp
        .delta
        .last()
        .map_or(Vector3::zeros(), |d| Vector3::from(*d));
    let mut sum = [[0.0; 4]; 6];
    let mut sq = [[0.0; 4]; 6];
    let scale: Vec<[f64; 3]> = (0..6)
        .map(|k| [0, 1, 2].map(|l| (g.gamma[l] * k as f64).exp()))
        .collect();
    for _ in 0..n_paths {
        let mut d = last;
        let mut tot = [0.0; 3];
        for _ in 0..def.horizon {
            d = d * a + lp * gauss3(rng) * innov;
            for l in 0..3 {
                tot[l] += (tp.base[l] + d[l]).exp();
            }
        }
        for k in 0..6 {
            let lam = [
                tot[0] * scale[k][0],
                tot[1] * scale[k][1],
                tot[2] * scale[k][2],
            ];
            let p = event_probs(lam, def);
            for o in 0..4 {
                sum[k][o] += p[o];
                sq[k][o] += p[o] * p[o];
            }
        }
    }
    let n = n_paths.max(1) as f64;
    let mut mean = [[0.0; 4]; 6];
    let mut se = [[0.0; 4]; 6];
    for k in 0..6 {
        for o in 0..4 {
            mean[k][o] = sum[k][o] / n;
            let var = (sq[k][o] / n - mean[k][o] * mean[k][o]).max(0.0);
            se[k][o] = (var / (n - 1.0).max(1.0)).sqrt();
        }
    }
    (mean, se)
}

/// Probability of any event from the truth, with its standard error.
pub fn true_event_prob<R: Rng + ?Sized>(
    g: &GlobalParams,
    tp: &TruthPatient,
    level: u8,
    def: &AdverseEventDef,
    n_paths: usize,
    rng: &mut R,
) -> (f64, f64) {
    let (m, s) = true_event_probs(g, tp, def, n_paths, rng);
    (m[level as usize][3], s[level as usize][3])
}

/// Draws a Bernoulli outcome for every probability.
pub fn draw_outcomes<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Vec<bool> {
    probs
        .iter()
        .map(|&p| Bernoulli::new(p.clamp(0.0, 1.0)).map_or(false, |b| b.sample(rng)))
        .collect()
}

/// Subdirectory of a replicate holding the generator's truth.
pub const TRUTH_DIR: &str = "truth";

const PROB_HEADER: [&str; 6] = ["id", "level", "p_ed_ip", "p_rescue", "p_ocs", "p_any"];

/// Writes `truth/z.csv` (true weekly levels), `truth/effects.csv` (true
/// random intercepts and linear predictors) and `truth/probabilities.csv`
/// (`[patient][level][outcome]` in `event_probs` order).
pub fn write_truth(dir: &Path, sc: &SyntheticCohort, probs: &[[[f64; 4]; 6]]) -> Result<()> {
    let dir = dir.join(TRUTH_DIR);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut z = String::from("id,week,level,escalated\n");
    let mut eff = String::from("id,alpha_1,alpha_2,alpha_3,base_1,base_2,base_3\n");
    for tp in &sc.truth {
        let esc: BTreeSet<usize> = tp.escalations.iter().copied().collect();
        for (w, v) in tp.z.iter().enumerate() {
            let _ = writeln!(z, "{},{w},{v},{}", tp.id, u8::from(esc.contains(&w)));
        }
        let (a, b) = (tp.alpha, tp.base);
        let _ = writeln!(
            eff,
            "{},{},{},{},{},{},{}",
            tp.id, a[0], a[1], a[2], b[0], b[1], b[2]
        );
    }
    write_text(dir.join("z.csv"), &z)?;
    write_text(dir.join("effects.csv"), &eff)?;
    let mut text = PROB_HEADER.join(",");
    text.push('\n');
    for (tp, p) in sc.truth.iter().zip(probs) {
        for (k, row) in p.iter().enumerate() {
            let _ = writeln!(
                text,
                "{},{k},{},{},{},{}",
                tp.id, row[0], row[1], row[2], row[3]
            );
        }
    }
    write_text(dir.join("probabilities.csv"), &text)
}

/// Reads `truth/probabilities.csv` in the patient order of `cohort`.
pub fn read_true_probabilities(dir: &Path, cohort: &Cohort) -> Result<Vec<[[f64; 4]; 6]>> {
    let path = dir.join(TRUTH_DIR).join("probabilities.csv");
    let (header, recs) = read_records(&path)?;
    check_header(&path, &header, &PROB_HEADER)?;
    let mut by_id: BTreeMap<String, [[f64; 4]; 6]> = BTreeMap::new();
    let mut seen: BTreeMap<String, [bool; 6]> = BTreeMap::new();
    for rec in &recs {
        let id: String = field(rec, 0, "id", &path)?;
        let level: usize = field(rec, 1, "level", &path)?;
        if level > MAX_LEVEL as usize {
            return Err(Error::Parse {
                path: path.clone(),
                line: rec.position().map_or(0, |p| p.line()),
                msg: format!("level {level} outside 0..=5"),
            });
        }
        let row = by_id.entry(id.clone()).or_insert([[f64::NAN; 4]; 6]);
        for o in 0..4 {
            row[level][o] = field(rec, 2 + o, PROB_HEADER[2 + o], &path)?;
        }
        seen.entry(id).or_insert([false; 6])[level] = true;
    }
    cohort
        .patients
        .iter()
        .map(|p| match (by_id.get(&p.id), seen.get(&p.id)) {
            (Some(row), Some(s)) if s.iter().all(|&b| b) => Ok(*row),
            _ => Err(Error::Parse {
                path: path.clone(),
                line: 0,
                msg: format!("patient {} lacks probabilities for every level", p.id),
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::validate_cohort;

    fn small(n: usize) -> TruthConfig {
        TruthConfig {
            n_patients: n,
            ..TruthConfig::default()
        }
    }

    #[test]
    fn observed_view_is_valid_and_reproducible() {
        let t = small(30);
        let a = generate_cohort(&t, 2).unwrap();
        let b = generate_cohort(&t, 2).unwrap();
        assert_eq!(a, b);
        assert!(validate_cohort(&a.cohort).is_valid());
        for (p, tp) in a.cohort.patients.iter().zip(&a.truth) {
            let bounds: Vec<(usize, usize)> = p
                .rounds
                .iter()
                .map(|r| (r.week_start, r.week_end))
                .collect();
            assert_eq!(observed_rounds(tp, &bounds), p.rounds);
            for &w in &tp.escalations {
                assert!(w + 1 >= tp.z.len() || tp.z[w + 1] > tp.z[w] || t.daily_change_prob > 0.0);
            }
        }
        assert_ne!(generate_cohort(&t, 3).unwrap().truth, a.truth);
    }

    #[test]
    fn frozen_medication() {
        let t = TruthConfig {
            escalation_prob: 0.0,
            daily_change_prob: 0.0,
            ..small(20)
        };
        let c = generate_cohort(&t, 0).unwrap();
        for tp in &c.truth {
            assert!(tp.z.iter().all(|&v| v == tp.z[0]));
        }
    }

    #[test]
    fn escalations_only_go_up() {
        let t = TruthConfig {
            daily_change_prob: 0.0,
            escalation_prob: 1.0,
            ..small(100)
        };
        let c = generate_cohort(&t, 1).unwrap();
        let mut saw = 0;
        for tp in &c.truth {
            for w in 1..tp.z.len() {
                assert!(tp.z[w] >= tp.z[w - 1]);
                if tp.z[w - 1] == MAX_LEVEL {
                    assert_eq!(tp.z[w], MAX_LEVEL);
                }
            }
            saw += tp.escalations.len();
        }
        assert!(saw > 0);
    }

    #[test]
    fn truth_probability_without_medication_effect() {
        let t = small(1);
        let mut g = t.globals.clone();
        g.gamma = [0.0; 3];
        let c = generate_cohort(&t, 0).unwrap();
        let mut rng = substream(4, 0, 0, 0);
        let (m, _) = true_event_probs(&g, &c.truth[0], &AdverseEventDef::default(), 2000, &mut rng);
        for k in 1..6 {
            assert!((m[k][3] - m[0][3]).abs() < 1e-12);
        }
    }
}
