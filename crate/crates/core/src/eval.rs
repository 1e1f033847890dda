//! Scoring predictions: calibration with bootstrap regions, ROC curves, R²
//! against known probabilities, the three-way simulation comparison and the
//! holdout protocol for observed data.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;

use crate::cohort::{write_text, Cohort, HoldoutSet};
use crate::error::{Error, Result};
use crate::latent::MAX_LEVEL;
use crate::outcome::GlobalParams;
use crate::predict::{predict_all_levels, AdverseEventDef, PredictOptions, Subject};
use crate::prior::PriorConfig;
use crate::rng::{domain, pack, substream};
use crate::sampler::{fit_variant, FitConfig, PosteriorSample, Variant};
use crate::synth::{generate_cohort, true_event_probs, SyntheticCohort, TruthConfig};

/// Report order of the outcomes and their column in `event_probs` output.
pub const OUTCOMES: [(&str, usize); 4] = [("ED/IP", 0), ("OCS", 2), (">=4 rescue", 1), ("Any", 3)];

pub fn default_edges() -> Vec<f64> {
    (0..=10).map(|k| k as f64 / 10.0).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean_pred: f64,
    /// Mean target: an event rate for 0/1 targets, a mean true probability
    /// otherwise.
    pub observed: f64,
    /// Bootstrap 95% intervals of `mean_pred` and `observed`; `None` for an
    /// empty bin.
    pub pred_interval: Option<(f64, f64)>,
    pub obs_interval: Option<(f64, f64)>,
}

impl CalibrationBin {
    /// Whether the line y = x passes through the bootstrap region.
    pub fn covers_identity(&self) -> Option<bool> {
        let (p, o) = (self.pred_interval?, self.obs_interval?);
        Some(p.0 <= o.1 && o.0 <= p.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationResult {
    pub bins: Vec<CalibrationBin>,
}

impl CalibrationResult {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    /// `(bins whose region touches y = x, occupied bins)`.
    pub fn identity_hits(&self) -> (usize, usize) {
        let occupied: Vec<bool> = self
            .bins
            .iter()
            .filter_map(|b| b.covers_identity())
            .collect();
        (occupied.iter().filter(|&&h| h).count(), occupied.len())
    }

    /// Lowest occupied bin.
    pub fn lowest(&self) -> Option<&CalibrationBin> {
        self.bins.iter().find(|b| b.count > 0)
    }

    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("bin_lo,bin_hi,count,mean_pred,observed,pred_lo,pred_hi,obs_lo,obs_hi\n");
        for b in &self.bins {
            let iv = |v: Option<(f64, f64)>| v.map_or(",".to_string(), |(a, c)| format!("{a},{c}"));
            let (mp, ob) = if b.count == 0 {
                (String::new(), String::new())
            } else {
                (b.mean_pred.to_string(), b.observed.to_string())
            };
            let _ = writeln!(
                s,
                "{},{},{},{mp},{ob},{},{}",
                b.lo,
                b.hi,
                b.count,
                iv(b.pred_interval),
                iv(b.obs_interval)
            );
        }
        s
    }
}

fn bin_of(p: f64, edges: &[f64]) -> Option<usize> {
    let last = edges.len() - 1;
    if p < edges[0] || p > edges[last] {
        return None;
    }
    let k = edges.partition_point(|&e| e <= p);
    Some(k.saturating_sub(1).min(last - 1))
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Bins predictions by `edges` and compares each bin's mean prediction with
/// its mean target. Targets are 0/1 outcomes or true probabilities. Regions
/// come from `n_boot` resamples of the (prediction, target) pairs within
/// each bin.
pub fn calibration(
    preds: &[f64],
    targets: &[f64],
    edges: &[f64],
    n_boot: usize,
    seed: u64,
) -> Result<CalibrationResult> {
    if preds.len() != targets.len() {
        return Err(Error::Param(format!(
            "{} predictions but {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::Param("bin edges must be increasing".into()));
    }
    let mut members: Vec<Vec<(f64, f64)>> = vec![Vec::new(); edges.len() - 1];
    for (&p, &t) in preds.iter().zip(targets) {
        let k = bin_of(p, edges)
            .ok_or_else(|| Error::Param(format!("prediction {p} outside the bin edges")))?;
        members[k].push((p, t));
    }
    // Bins are sorted by content so the result does not depend on input order.
    for m in &mut members {
        m.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    }
    let bins = members
        .par_iter()
        .enumerate()
        .map(|(k, m)| {
            let n = m.len();
            let mut bin = CalibrationBin {
                lo: edges[k],
                hi: edges[k + 1],
                count: n,
                mean_pred: f64::NAN,
                observed: f64::NAN,
                pred_interval: None,
                obs_interval: None,
            };
            if n == 0 {
                return bin;
            }
            bin.mean_pred = m.iter().map(|v| v.0).sum::<f64>() / n as f64;
            bin.observed = m.iter().map(|v| v.1).sum::<f64>() / n as f64;
            if n_boot > 0 {
                let mut rng = substream(seed, domain::BOOTSTRAP, k as u64, 0);
                let mut bp = Vec::with_capacity(n_boot);
                let mut bo = Vec::with_capacity(n_boot);
                for _ in 0..n_boot {
                    let (mut sp, mut so) = (0.0, 0.0);
                    for _ in 0..n {
                        let (p, t) = m[rng.random_range(0..n)];
                        sp += p;
                        so += t;
                    }
                    bp.push(sp / n as f64);
                    bo.push(so / n as f64);
                }
                bp.sort_by(f64::total_cmp);
                bo.sort_by(f64::total_cmp);
                bin.pred_interval = Some((percentile(&bp, 0.025), percentile(&bp, 0.975)));
                bin.obs_interval = Some((percentile(&bo, 0.025), percentile(&bo, 0.975)));
            }
            bin
        })
        .collect();
    Ok(CalibrationResult { bins })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Roc {
    /// `(false positive rate, true positive rate)` from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl Roc {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("fpr,tpr\n");
        for (f, t) in &self.points {
            let _ = writeln!(s, "{f},{t}");
        }
        s
    }
}

/// Threshold sweep over the distinct prediction values, highest first. Tied
/// predictions move the curve diagonally, so the trapezoid area equals the
/// Mann-Whitney statistic with ties counted one half.
pub fn roc(preds: &[f64], labels: &[bool]) -> Result<Roc> {
    if preds.len() != labels.len() {
        return Err(Error::Param(format!(
            "{} predictions but {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let n1 = labels.iter().filter(|&&l| l).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::Param("ROC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].total_cmp(&preds[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut k = 0;
    while k < order.len() {
        let v = preds[order[k]];
        let (tp0, fp0) = (tp, fp);
        while k < order.len() && preds[order[k]] == v {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        auc += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push((fp as f64 / n0 as f64, tp as f64 / n1 as f64));
    }
    Ok(Roc {
        points,
        auc: auc / (n1 as f64 * n0 as f64),
    })
}

/// `1 - SS_res / SS_tot`, with `SS_tot` about the mean of the truth.
pub fn r2_vs_truth(preds: &[f64], truth: &[f64]) -> Result<f64> {
    if preds.len() != truth.len() || truth.is_empty() {
        return Err(Error::Param(format!(
            "{} predictions but {} true values",
            preds.len(),
            truth.len()
        )));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot <= 1e-20 * truth.iter().map(|t| t * t).sum::<f64>() {
        return Err(Error::Param("true probabilities have zero variance".into()));
    }
    let ss_res: f64 = preds.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonConfig {
    pub truth: TruthConfig,
    pub replicates: usize,
    /// Shared sampler settings; the variant is replaced per method.
    pub fit: FitConfig,
    pub prior: PriorConfig,
    pub def: AdverseEventDef,
    pub methods: Vec<Variant>,
    /// Future time-effect paths per patient for the true probabilities.
    pub truth_paths: usize,
    pub n_boot: usize,
    pub edges: Vec<f64>,
    pub seed: u64,
}

impl ComparisonConfig {
    /// Ten replicates of 200 patients, three chains of 4000 iterations.
    pub fn desk_scale(seed: u64) -> Self {
        ComparisonConfig {
            truth: TruthConfig {
                n_patients: 200,
                n_replicates: 10,
                seed,
                ..TruthConfig::default()
            },
            replicates: 10,
            fit: FitConfig {
                chains: 3,
                seed,
                ..FitConfig::with_iterations(4000)
            },
            prior: crate::prior::default_prior_config(),
            def: AdverseEventDef::default(),
            methods: Variant::ALL.to_vec(),
            truth_paths: 10_000,
            n_boot: 2000,
            edges: default_edges(),
            seed,
        }
    }
}

/// Everything one method produced on one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub variant: Variant,
    /// Posterior mean of `gamma`.
    pub gamma: [f64; 3],
    /// Step-down predictions `[patient][outcome]`, outcomes in `OUTCOMES` order.
    pub stepdown: Vec<[f64; 4]>,
    /// Prediction of any event at the random level.
    pub random_level: Vec<f64>,
    pub r2: [f64; 4],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub replicate: usize,
    /// Patients eligible for a step down, with the level they are moved to.
    pub stepdown_patients: Vec<(usize, u8)>,
    pub stepdown_truth: Vec<[f64; 4]>,
    pub random_levels: Vec<u8>,
    pub random_truth: Vec<f64>,
    pub random_events: Vec<bool>,
    pub methods: Vec<MethodResult>,
    pub failures: Vec<(Variant, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSummary {
    pub variant: Variant,
    /// `(mean, standard error)` of R² across replicates, in `OUTCOMES` order.
    pub r2: [(f64, f64); 4],
    pub gamma: [(f64, f64); 3],
    pub roc: Option<Roc>,
    pub calibration: CalibrationResult,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    pub true_gamma: [f64; 3],
    pub replicates: Vec<ReplicateResult>,
    pub methods: Vec<MethodSummary>,
}

impl ComparisonReport {
    pub fn method(&self, v: Variant) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.variant == v)
    }

    /// Relative shrinkage of the mean `gamma_l` toward zero.
    pub fn attenuation(&self, v: Variant, l: usize) -> Option<f64> {
        let m = self.method(v)?;
        Some(1.0 - m.gamma[l].0 / self.true_gamma[l])
    }

    pub fn report_csv(&self) -> String {
        let mut s = String::from("method,outcome,R2_mean,R2_se\n");
        for m in &self.methods {
            for (k, (name, _)) in OUTCOMES.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{name},{},{}",
                    m.variant.label(),
                    m.r2[k].0,
                    m.r2[k].1
                );
            }
        }
        s
    }

    pub fn gamma_csv(&self) -> String {
        let mut s = String::from("replicate,method,gamma_1,gamma_2,gamma_3\n");
        let t = self.true_gamma;
        let _ = writeln!(s, "truth,truth,{},{},{}", t[0], t[1], t[2]);
        for r in &self.replicates {
            for m in &r.methods {
                let g = m.gamma;
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    r.replicate,
                    m.variant.label(),
                    g[0],
                    g[1],
                    g[2]
                );
            }
        }
        s
    }

    /// Writes `comparison_report.csv`, `gamma_estimates.csv` and per-method
    /// `roc_<method>.csv` and `calibration_<method>.csv`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_text(dir.join("comparison_report.csv"), &self.report_csv())?;
        write_text(dir.join("gamma_estimates.csv"), &self.gamma_csv())?;
        for m in &self.methods {
            if let Some(r) = &m.roc {
                write_text(
                    dir.join(format!("roc_{}.csv", m.variant.name())),
                    &r.to_csv(),
                )?;
            }
            write_text(
                dir.join(format!("calibration_{}.csv", m.variant.name())),
                &m.calibration.to_csv(),
            )?;
        }
        let mut fails = String::from("replicate,method,error\n");
        for r in &self.replicates {
            for (v, e) in &r.failures {
                let _ = writeln!(
                    fails,
                    "{},{},\"{}\"",
                    r.replicate,
                    v.label(),
                    e.replace('"', "'")
                );
            }
        }
        write_text(dir.join("failures.csv"), &fails)
    }
}

fn reorder(p: [f64; 4]) -> [f64; 4] {
    OUTCOMES.map(|(_, k)| p[k])
}

/// Chooses, for every patient, a step-down level (patients at level 0 are
/// skipped) and a uniformly random level.
pub fn choose_levels(cohort: &Cohort, replicate: usize, seed: u64) -> (Vec<(usize, u8)>, Vec<u8>) {
    let mut down = Vec::new();
    let mut random = Vec::with_capacity(cohort.patients.len());
    for (i, p) in cohort.patients.iter().enumerate() {
        let mut rng = substream(seed, domain::COMPARE, pack(replicate, i), 0);
        let last = p.last_level().unwrap_or(0);
        if last > 0 {
            down.push((i, rng.random_range(0..last)));
        }
        random.push(rng.random_range(0..=MAX_LEVEL));
    }
    (down, random)
}

/// Generator probabilities `[patient][level][outcome]` (outcomes in
/// `event_probs` order) from `paths` future time-effect paths each.
pub fn true_probabilities(
    sc: &SyntheticCohort,
    g: &GlobalParams,
    def: &AdverseEventDef,
    paths: usize,
    seed: u64,
) -> Vec<[[f64; 4]; 6]> {
    sc.truth
        .par_iter()
        .enumerate()
        .map(|(i, tp)| {
            let mut rng = substream(seed, domain::TRUTH, pack(sc.replicate, i), 0);
            true_event_probs(g, tp, def, paths, &mut rng).0
        })
        .collect()
}

/// Fixes the levels, true probabilities and simulated events that every
/// method of one replicate is scored against.
pub fn prepare_replicate(
    cohort: &Cohort,
    replicate: usize,
    truth: &[[[f64; 4]; 6]],
    seed: u64,
) -> Result<ReplicateResult> {
    if truth.len() != cohort.patients.len() {
        return Err(Error::Param(format!(
            "{} true probability rows for {} patients",
            truth.len(),
            cohort.patients.len()
        )));
    }
    let (down, random) = choose_levels(cohort, replicate, seed);
    let stepdown_truth = down
        .iter()
        .map(|&(i, k)| reorder(truth[i][k as usize]))
        .collect();
    let random_truth: Vec<f64> = random
        .iter()
        .enumerate()
        .map(|(i, &k)| truth[i][k as usize][3])
        .collect();
    let random_events = random_truth
        .iter()
        .enumerate()
        .map(|(i, &p)| substream(seed, domain::COMPARE, pack(replicate, i), 1).random::<f64>() < p)
        .collect();
    Ok(ReplicateResult {
        replicate,
        stepdown_patients: down,
        stepdown_truth,
        random_levels: random,
        random_truth,
        random_events,
        methods: Vec::new(),
        failures: Vec::new(),
    })
}

/// Scores one fitted posterior against a prepared replicate.
pub fn score_posterior(
    post: &PosteriorSample,
    rep: &ReplicateResult,
    def: &AdverseEventDef,
    seed: u64,
) -> Result<MethodResult> {
    if post.patient_ids.len() != rep.random_levels.len() {
        return Err(Error::Param(format!(
            "posterior has {} patients, replicate {} has {}",
            post.patient_ids.len(),
            rep.replicate,
            rep.random_levels.len()
        )));
    }
    let n = post.n_draws().max(1) as f64;
    let mut gamma = [0.0; 3];
    for g in &post.draws {
        for l in 0..3 {
            gamma[l] += g.gamma[l] / n;
        }
    }
    let opts = PredictOptions {
        seed,
        ..PredictOptions::default()
    };
    let mut all = Vec::with_capacity(post.patient_ids.len());
    for i in 0..post.patient_ids.len() {
        all.push(predict_all_levels(post, &Subject::Fitted(i), def, &opts)?);
    }
    let stepdown: Vec<[f64; 4]> = rep
        .stepdown_patients
        .iter()
        .map(|&(i, k)| reorder(all[i][k as usize]))
        .collect();
    let random_level = rep
        .random_levels
        .iter()
        .enumerate()
        .map(|(i, &k)| all[i][k as usize][3])
        .collect();
    let mut r2 = [f64::NAN; 4];
    for (o, slot) in r2.iter_mut().enumerate() {
        let p: Vec<f64> = stepdown.iter().map(|v| v[o]).collect();
        let t: Vec<f64> = rep.stepdown_truth.iter().map(|v| v[o]).collect();
        *slot = r2_vs_truth(&p, &t).unwrap_or(f64::NAN);
    }
    Ok(MethodResult {
        variant: post.variant,
        gamma,
        stepdown,
        random_level,
        r2,
    })
}

/// Sampler settings for `variant` on replicate `replicate`.
pub fn replicate_fit_config(
    cfg: &ComparisonConfig,
    variant: Variant,
    replicate: usize,
) -> FitConfig {
    FitConfig {
        variant,
        seed: substream(cfg.fit.seed, domain::COMPARE, replicate as u64, 1).random(),
        ..cfg.fit.clone()
    }
}

/// Fits every method to `cohort` and scores it; failed fits are recorded.
pub fn fit_and_score(cohort: &Cohort, cfg: &ComparisonConfig, rep: &mut ReplicateResult) {
    for &v in &cfg.methods {
        let fit = replicate_fit_config(cfg, v, rep.replicate);
        match fit_variant(cohort, &fit, &cfg.prior)
            .and_then(|post| score_posterior(&post, rep, &cfg.def, cfg.seed))
        {
            Ok(m) => rep.methods.push(m),
            Err(e) => rep.failures.push((v, e.to_string())),
        }
    }
}

/// Generates replicate `r`, fits every method and scores the predictions
/// against the generator's probabilities.
pub fn run_replicate(cfg: &ComparisonConfig, r: usize) -> Result<ReplicateResult> {
    let sc = generate_cohort(&cfg.truth, r)?;
    let truth = true_probabilities(&sc, &cfg.truth.globals, &cfg.def, cfg.truth_paths, cfg.seed);
    let mut rep = prepare_replicate(&sc.cohort, r, &truth, cfg.seed)?;
    fit_and_score(&sc.cohort, cfg, &mut rep);
    Ok(rep)
}

/// Pools replicate results into per-method summaries.
pub fn summarize(
    cfg: &ComparisonConfig,
    replicates: Vec<ReplicateResult>,
) -> Result<ComparisonReport> {
    let mut methods = Vec::new();
    for &v in &cfg.methods {
        let runs: Vec<(&ReplicateResult, &MethodResult)> = replicates
            .iter()
            .filter_map(|r| r.methods.iter().find(|m| m.variant == v).map(|m| (r, m)))
            .collect();
        let mut r2 = [(f64::NAN, f64::NAN); 4];
        for (o, slot) in r2.iter_mut().enumerate() {
            let xs: Vec<f64> = runs
                .iter()
                .map(|(_, m)| m.r2[o])
                .filter(|x| x.is_finite())
                .collect();
            *slot = mean_se(&xs);
        }
        let mut gamma = [(f64::NAN, f64::NAN); 3];
        for (l, slot) in gamma.iter_mut().enumerate() {
            let xs: Vec<f64> = runs.iter().map(|(_, m)| m.gamma[l]).collect();
            *slot = mean_se(&xs);
        }
        let (mut preds, mut labels, mut cp, mut ct) =
            (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (r, m) in &runs {
            preds.extend_from_slice(&m.random_level);
            labels.extend_from_slice(&r.random_events);
            cp.extend(m.stepdown.iter().map(|v| v[3]));
            ct.extend(r.stepdown_truth.iter().map(|v| v[3]));
        }
        let roc = roc(&preds, &labels).ok();
        let calibration = calibration(&cp, &ct, &cfg.edges, cfg.n_boot, cfg.seed)?;
        methods.push(MethodSummary {
            variant: v,
            r2,
            gamma,
            roc,
            calibration,
        });
    }
    Ok(ComparisonReport {
        true_gamma: cfg.truth.globals.gamma,
        replicates,
        methods,
    })
}

/// The simulation study: every replicate is generated, fitted by every
/// method and scored, replicates in parallel.
pub fn run_comparison(cfg: &ComparisonConfig) -> Result<ComparisonReport> {
    cfg.truth.validate()?;
    cfg.def.validate()?;
    let reps = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| run_replicate(cfg, r))
        .collect::<Result<Vec<_>>>()?;
    summarize(cfg, reps)
}

/// Predictions and outcomes for held-out final rounds: each masked patient
/// is predicted over the length of the withheld round at the level recorded
/// for it, and the outcome is whether any adverse event occurred.
pub fn score_holdout(
    post: &PosteriorSample,
    holdout: &HoldoutSet,
    def: &AdverseEventDef,
    seed: u64,
) -> Result<(Vec<f64>, Vec<bool>)> {
    let opts = PredictOptions {
        seed,
        ..PredictOptions::default()
    };
    let mut preds = Vec::with_capacity(holdout.records.len());
    let mut events = Vec::with_capacity(holdout.records.len());
    for rec in &holdout.records {
        let i = post
            .find(&rec.id)
            .ok_or_else(|| Error::UnknownPatient(rec.id.clone()))?;
        let d = AdverseEventDef {
            horizon: rec.horizon_weeks(),
            ..*def
        };
        let p = predict_all_levels(post, &Subject::Fitted(i), &d, &opts)?;
        preds.push(p[rec.level as usize][3]);
        let hit = |count: i64, t: u64| t != u64::MAX && count >= 0 && count as u64 >= t;
        events.push(
            hit(rec.ed_ip_total, def.ed_ip_threshold)
                || hit(rec.round.obs_rescue, def.rescue_threshold)
                || hit(rec.round.obs_ocs, def.ocs_threshold),
        );
    }
    Ok((preds, events))
}
