//! Patients, rounds and weekly outcomes, plus CSV ingestion and validation.
//!
//! Weeks are indexed per patient from 0 at the start of the first round.
//! Rounds are half-open week ranges and must tile the observed span.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;

use crate::error::{Error, Result};
use crate::latent::MAX_LEVEL;
use crate::rng::{domain, substream};

pub const MIN_ROUND_WEEKS: usize = 16;
pub const MAX_ROUND_WEEKS: usize = 24;
pub const ROUNDS_PER_PATIENT: usize = 5;
/// Largest count the likelihood accepts.
pub const MAX_COUNT: i64 = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Round {
    /// 1-based round number.
    pub index: u32,
    pub week_start: usize,
    pub week_end: usize,
    pub obs_med: i64,
    pub obs_rescue: i64,
    pub obs_ocs: i64,
}

impl Round {
    pub fn weeks(&self) -> Range<usize> {
        self.week_start..self.week_end
    }

    pub fn len(&self) -> usize {
        self.week_end.saturating_sub(self.week_start)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weekly counts. Rescue and OCS fills are only known per round in real
/// data; synthetic cohorts carry the weekly values as well.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeeklyOutcomes {
    pub ed_ip: Vec<i64>,
    pub rescue: Option<Vec<i64>>,
    pub ocs: Option<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Patient {
    pub id: String,
    /// Covariates as read from disk.
    pub raw_covariates: Vec<f64>,
    /// Standardised covariates used by the model.
    pub covariates: Vec<f64>,
    pub rounds: Vec<Round>,
    pub visit_weeks: BTreeSet<usize>,
    pub outcomes: WeeklyOutcomes,
}

impl Patient {
    pub fn n_weeks(&self) -> usize {
        self.rounds.last().map_or(0, |r| r.week_end)
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid::weekly(self.n_weeks())
    }

    pub fn last_level(&self) -> Option<u8> {
        self.rounds
            .last()
            .map(|r| r.obs_med.clamp(0, MAX_LEVEL as i64) as u8)
    }
}

/// Representative time points (left week endpoints), in weeks.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub points: Vec<f64>,
}

impl TimeGrid {
    pub fn weekly(n: usize) -> Self {
        TimeGrid {
            points: (0..n).map(|k| k as f64).collect(),
        }
    }

    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Param("time grid must be strictly increasing".into()));
        }
        Ok(TimeGrid { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaling {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cohort {
    pub covariate_names: Vec<String>,
    pub scaling: Vec<Scaling>,
    pub patients: Vec<Patient>,
}

impl Cohort {
    pub fn n_covariates(&self) -> usize {
        self.covariate_names.len()
    }

    pub fn find(&self, id: &str) -> Option<usize> {
        self.patients.iter().position(|p| p.id == id)
    }

    /// Recomputes standardised covariates from the raw values.
    ///
    /// Cohorts with fewer than two patients are left on the raw scale.
    pub fn standardize(&mut self) -> Result<()> {
        let j = self.n_covariates();
        let n = self.patients.len();
        self.scaling = Vec::with_capacity(j);
        for col in 0..j {
            let scale = if n < 2 {
                Scaling { mean: 0.0, sd: 1.0 }
            } else {
                let mean = self
                    .patients
                    .iter()
                    .map(|p| p.raw_covariates[col])
                    .sum::<f64>()
                    / n as f64;
                let ss = self
                    .patients
                    .iter()
                    .map(|p| (p.raw_covariates[col] - mean).powi(2))
                    .sum::<f64>();
                let sd = (ss / (n - 1) as f64).sqrt();
                if !(sd > 0.0) || !sd.is_finite() {
                    return Err(Error::Validation {
                        patient: "*".into(),
                        rule: "constant covariate".into(),
                        detail: format!("column {} has zero variance", self.covariate_names[col]),
                    });
                }
                Scaling { mean, sd }
            };
            self.scaling.push(scale);
        }
        for p in &mut self.patients {
            p.covariates = p
                .raw_covariates
                .iter()
                .zip(&self.scaling)
                .map(|(x, s)| (x - s.mean) / s.sd)
                .collect();
        }
        Ok(())
    }
}

/// File names of the three cohort tables inside a cohort directory.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSchema {
    pub patients: String,
    pub rounds: String,
    pub events: String,
}

impl Default for CohortSchema {
    fn default() -> Self {
        CohortSchema {
            patients: "patients.csv".into(),
            rounds: "rounds.csv".into(),
            events: "events.csv".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub patient: String,
    pub rule: &'static str,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn count(&self, rule: &str) -> usize {
        self.violations.iter().filter(|v| v.rule == rule).count()
    }

    fn push(&mut self, patient: &str, rule: &'static str, detail: String) {
        self.violations.push(Violation {
            patient: patient.to_string(),
            rule,
            detail,
        });
    }
}

pub fn validate_cohort(c: &Cohort) -> ValidationReport {
    let mut rep = ValidationReport::default();
    let j = c.n_covariates();
    let mut seen = BTreeSet::new();
    for p in &c.patients {
        let id = p.id.as_str();
        if !seen.insert(id) {
            rep.push(
                id,
                "duplicate id",
                "patient id appears more than once".into(),
            );
        }
        if p.raw_covariates.len() != j {
            rep.push(
                id,
                "covariate length",
                format!("{} covariates, cohort has {j}", p.raw_covariates.len()),
            );
        }
        if p.rounds.is_empty() {
            rep.push(id, "no rounds", "patient has no rounds".into());
        }
        for (k, r) in p.rounds.iter().enumerate() {
            if r.index as usize != k + 1 || r.index as usize > ROUNDS_PER_PATIENT {
                rep.push(
                    id,
                    "round index",
                    format!("round {} in position {}", r.index, k + 1),
                );
            }
            if !(0..=MAX_LEVEL as i64).contains(&r.obs_med) {
                rep.push(
                    id,
                    "obs_med range",
                    format!("round {}: obs_med {}", r.index, r.obs_med),
                );
            }
            if r.obs_rescue < 0 || r.obs_ocs < 0 {
                rep.push(
                    id,
                    "negative count",
                    format!(
                        "round {}: rescue {} ocs {}",
                        r.index, r.obs_rescue, r.obs_ocs
                    ),
                );
            }
            if r.obs_rescue > MAX_COUNT || r.obs_ocs > MAX_COUNT {
                rep.push(
                    id,
                    "count range",
                    format!("round {}: count above {MAX_COUNT}", r.index),
                );
            }
            if r.week_end <= r.week_start || !(MIN_ROUND_WEEKS..=MAX_ROUND_WEEKS).contains(&r.len())
            {
                rep.push(
                    id,
                    "round length",
                    format!("round {} spans {}..{}", r.index, r.week_start, r.week_end),
                );
            }
            if k == 0 && r.week_start != 0 {
                rep.push(
                    id,
                    "first week",
                    format!("first round starts at week {}", r.week_start),
                );
            }
            if k > 0 {
                let prev = &p.rounds[k - 1];
                if r.week_start < prev.week_end {
                    rep.push(
                        id,
                        "rounds overlap",
                        format!(
                            "round {} starts at {} before round {} ends at {}",
                            r.index, r.week_start, prev.index, prev.week_end
                        ),
                    );
                } else if r.week_start > prev.week_end {
                    rep.push(
                        id,
                        "rounds not contiguous",
                        format!("gap between week {} and {}", prev.week_end, r.week_start),
                    );
                }
            }
        }
        let n = p.n_weeks();
        if p.outcomes.ed_ip.len() != n {
            rep.push(
                id,
                "event weeks",
                format!(
                    "{} weekly ED/IP values for {n} weeks",
                    p.outcomes.ed_ip.len()
                ),
            );
        }
        if p.outcomes.ed_ip.iter().any(|&y| y < 0) {
            rep.push(id, "negative count", "negative ED/IP count".into());
        }
        if p.outcomes.ed_ip.iter().any(|&y| y > MAX_COUNT) {
            rep.push(id, "count range", format!("ED/IP count above {MAX_COUNT}"));
        }
        if let Some(&w) = p.visit_weeks.iter().find(|&&w| w >= n) {
            rep.push(id, "visit range", format!("visit week {w} outside 0..{n}"));
        }
        for (name, weekly, pick) in [
            ("rescue", &p.outcomes.rescue, 0usize),
            ("ocs", &p.outcomes.ocs, 1usize),
        ] {
            let Some(weekly) = weekly else { continue };
            if weekly.len() != n {
                rep.push(
                    id,
                    "event weeks",
                    format!("{} weekly {name} values for {n} weeks", weekly.len()),
                );
                continue;
            }
            for r in &p.rounds {
                if r.week_end > n {
                    continue;
                }
                let sum: i64 = weekly[r.weeks()].iter().sum();
                let obs = if pick == 0 { r.obs_rescue } else { r.obs_ocs };
                if sum != obs {
                    rep.push(
                        id,
                        "round sum",
                        format!(
                            "round {}: weekly {name} sums to {sum}, observed {obs}",
                            r.index
                        ),
                    );
                }
            }
        }
    }
    rep
}

fn parse_err(path: &Path, line: u64, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub(crate) fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    i: usize,
    name: &str,
    path: &Path,
) -> Result<T> {
    let line = rec.position().map_or(0, |p| p.line());
    let raw = rec
        .get(i)
        .ok_or_else(|| parse_err(path, line, format!("missing column {name}")))?;
    raw.trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("bad {name} value {raw:?}")))
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(f))
}

pub(crate) fn read_records(path: &Path) -> Result<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut rdr = open_csv(path)?;
    let header = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if header.is_empty() || header.get(0).map(str::trim) != Some("id") {
        return Err(parse_err(path, 1, "header row must start with id"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        out.push(rec);
    }
    Ok((header, out))
}

pub(crate) fn check_header(path: &Path, header: &csv::StringRecord, expect: &[&str]) -> Result<()> {
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expect {
        return Err(parse_err(
            path,
            1,
            format!("expected header {expect:?}, got {got:?}"),
        ));
    }
    Ok(())
}

/// Reads a cohort directory, validates it, and standardises covariates.
pub fn load_cohort(dir: &Path, schema: &CohortSchema) -> Result<Cohort> {
    let mut c = read_cohort_unchecked(dir, schema)?;
    let rep = validate_cohort(&c);
    if let Some(v) = rep.violations.first() {
        return Err(Error::Validation {
            patient: v.patient.clone(),
            rule: v.rule.to_string(),
            detail: v.detail.clone(),
        });
    }
    c.standardize()?;
    Ok(c)
}

/// Parses the three tables without validating invariants.
pub fn read_cohort_unchecked(dir: &Path, schema: &CohortSchema) -> Result<Cohort> {
    let ppath = dir.join(&schema.patients);
    let (header, rows) = read_records(&ppath)?;
    let names: Vec<String> = header
        .iter()
        .skip(1)
        .map(|s| s.trim().to_string())
        .collect();
    let mut patients = Vec::with_capacity(rows.len());
    let mut index = HashMap::new();
    for rec in &rows {
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() + 1 {
            return Err(parse_err(
                &ppath,
                line,
                format!("expected {} fields, got {}", names.len() + 1, rec.len()),
            ));
        }
        let id = rec.get(0).unwrap_or_default().trim().to_string();
        if id.is_empty() {
            return Err(parse_err(&ppath, line, "empty id"));
        }
        let mut raw = Vec::with_capacity(names.len());
        for (k, name) in names.iter().enumerate() {
            let v: f64 = field(rec, k + 1, name, &ppath)?;
            if !v.is_finite() {
                return Err(parse_err(&ppath, line, format!("non-finite {name}")));
            }
            raw.push(v);
        }
        index.entry(id.clone()).or_insert(patients.len());
        patients.push(Patient {
            id,
            covariates: raw.clone(),
            raw_covariates: raw,
            rounds: Vec::new(),
            visit_weeks: BTreeSet::new(),
            outcomes: WeeklyOutcomes::default(),
        });
    }

    let rpath = dir.join(&schema.rounds);
    let (header, rows) = read_records(&rpath)?;
    check_header(
        &rpath,
        &header,
        &[
            "id",
            "round",
            "week_start",
            "week_end",
            "obs_med",
            "obs_rescue",
            "obs_ocs",
        ],
    )?;
    for rec in &rows {
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(0).unwrap_or_default().trim();
        let &pi = index
            .get(id)
            .ok_or_else(|| parse_err(&rpath, line, format!("unknown patient {id}")))?;
        let round = Round {
            index: field(rec, 1, "round", &rpath)?,
            week_start: field(rec, 2, "week_start", &rpath)?,
            week_end: field(rec, 3, "week_end", &rpath)?,
            obs_med: field(rec, 4, "obs_med", &rpath)?,
            obs_rescue: field(rec, 5, "obs_rescue", &rpath)?,
            obs_ocs: field(rec, 6, "obs_ocs", &rpath)?,
        };
        patients[pi].rounds.push(round);
    }
    for p in &mut patients {
        p.rounds.sort_by_key(|r| r.index);
        p.outcomes.ed_ip = vec![0; p.n_weeks()];
    }

    let epath = dir.join(&schema.events);
    let (header, rows) = read_records(&epath)?;
    check_header(&epath, &header, &["id", "week", "ed_ip", "visit_flag"])?;
    for rec in &rows {
        let line = rec.position().map_or(0, |p| p.line());
        let id = rec.get(0).unwrap_or_default().trim();
        let &pi = index
            .get(id)
            .ok_or_else(|| parse_err(&epath, line, format!("unknown patient {id}")))?;
        let week: usize = field(rec, 1, "week", &epath)?;
        let ed: i64 = field(rec, 2, "ed_ip", &epath)?;
        let flag: u8 = field(rec, 3, "visit_flag", &epath)?;
        if flag > 1 {
            return Err(parse_err(&epath, line, "visit_flag must be 0 or 1"));
        }
        let p = &mut patients[pi];
        if week >= p.outcomes.ed_ip.len() {
            return Err(parse_err(
                &epath,
                line,
                format!("week {week} outside the rounds of patient {id}"),
            ));
        }
        p.outcomes.ed_ip[week] = ed;
        if flag == 1 {
            p.visit_weeks.insert(week);
        }
    }

    Ok(Cohort {
        scaling: vec![Scaling { mean: 0.0, sd: 1.0 }; names.len()],
        covariate_names: names,
        patients,
    })
}

pub(crate) fn write_text(path: PathBuf, text: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))
}

/// Writes the canonical form of a cohort: raw covariates and one events row
/// per patient-week.
pub fn write_cohort(c: &Cohort, dir: &Path, schema: &CohortSchema) -> Result<()> {
    use std::fmt::Write as _;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let mut text = String::from("id");
    for n in &c.covariate_names {
        text.push(',');
        text.push_str(n);
    }
    text.push('\n');
    for p in &c.patients {
        text.push_str(&p.id);
        for v in &p.raw_covariates {
            let _ = write!(text, ",{v}");
        }
        text.push('\n');
    }
    write_text(dir.join(&schema.patients), &text)?;

    let mut text = String::from("id,round,week_start,week_end,obs_med,obs_rescue,obs_ocs\n");
    for p in &c.patients {
        for r in &p.rounds {
            let _ = writeln!(
                text,
                "{},{},{},{},{},{},{}",
                p.id, r.index, r.week_start, r.week_end, r.obs_med, r.obs_rescue, r.obs_ocs
            );
        }
    }
    write_text(dir.join(&schema.rounds), &text)?;

    let mut text = String::from("id,week,ed_ip,visit_flag\n");
    for p in &c.patients {
        for (week, ed) in p.outcomes.ed_ip.iter().enumerate() {
            let flag = u8::from(p.visit_weeks.contains(&week));
            let _ = writeln!(text, "{},{week},{ed},{flag}", p.id);
        }
    }
    write_text(dir.join(&schema.events), &text)
}

/// Round-5 observations withheld from fitting for one patient.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldoutRecord {
    pub id: String,
    pub round: Round,
    pub ed_ip_total: i64,
    /// Medication level assumed constant over the held-out round.
    pub level: u8,
}

impl HoldoutRecord {
    pub fn horizon_weeks(&self) -> usize {
        self.round.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HoldoutSet {
    pub records: Vec<HoldoutRecord>,
}

/// Masks the final round of `n_holdout` randomly chosen five-round patients.
pub fn holdout_split(c: &Cohort, n_holdout: usize, seed: u64) -> Result<(Cohort, HoldoutSet)> {
    let eligible: Vec<usize> = c
        .patients
        .iter()
        .enumerate()
        .filter(|(_, p)| p.rounds.len() == ROUNDS_PER_PATIENT)
        .map(|(i, _)| i)
        .collect();
    if n_holdout > eligible.len() {
        return Err(Error::Holdout {
            requested: n_holdout,
            eligible: eligible.len(),
        });
    }
    let mut train = c.clone();
    if n_holdout == 0 {
        return Ok((train, HoldoutSet::default()));
    }
    let mut rng = substream(seed, domain::HOLDOUT, 0, 0);
    let mut chosen: Vec<usize> = sample(&mut rng, eligible.len(), n_holdout)
        .into_iter()
        .map(|k| eligible[k])
        .collect();
    chosen.sort_unstable();
    let mut records = Vec::with_capacity(n_holdout);
    for &pi in &chosen {
        let p = &mut train.patients[pi];
        let last = p.rounds.pop().expect("eligible patients have five rounds");
        let cut = last.week_start;
        let ed_total: i64 = p.outcomes.ed_ip[last.weeks()].iter().sum();
        p.outcomes.ed_ip.truncate(cut);
        if let Some(v) = &mut p.outcomes.rescue {
            v.truncate(cut);
        }
        if let Some(v) = &mut p.outcomes.ocs {
            v.truncate(cut);
        }
        p.visit_weeks.retain(|&w| w < cut);
        records.push(HoldoutRecord {
            id: p.id.clone(),
            level: last.obs_med.clamp(0, MAX_LEVEL as i64) as u8,
            ed_ip_total: ed_total,
            round: last,
        });
    }
    Ok((train, HoldoutSet { records }))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn toy_patient(id: &str, levels: &[i64], weeks: usize) -> Patient {
        let rounds: Vec<Round> = levels
            .iter()
            .enumerate()
            .map(|(k, &lvl)| Round {
                index: k as u32 + 1,
                week_start: k * weeks,
                week_end: (k + 1) * weeks,
                obs_med: lvl,
                obs_rescue: 1,
                obs_ocs: 0,
            })
            .collect();
        let n = levels.len() * weeks;
        Patient {
            id: id.into(),
            raw_covariates: vec![],
            covariates: vec![],
            rounds,
            visit_weeks: BTreeSet::new(),
            outcomes: WeeklyOutcomes {
                ed_ip: vec![0; n],
                rescue: None,
                ocs: None,
            },
        }
    }

    fn toy_cohort(n: usize) -> Cohort {
        let mut c = Cohort {
            covariate_names: vec!["age".into()],
            scaling: vec![],
            patients: (0..n)
                .map(|i| {
                    let mut p = toy_patient(&format!("p{i}"), &[1, 2, 3, 2, 1], 18);
                    p.raw_covariates = vec![20.0 + i as f64];
                    p
                })
                .collect(),
        };
        c.standardize().unwrap();
        c
    }

    #[test]
    fn valid_cohort_has_empty_report() {
        assert!(validate_cohort(&toy_cohort(4)).is_valid());
    }

    #[test]
    fn overlapping_rounds_reported_once() {
        let mut c = toy_cohort(2);
        c.patients[0].rounds[2].week_start -= 1;
        let rep = validate_cohort(&c);
        assert_eq!(rep.violations.len(), 1, "{rep:?}");
        assert_eq!(rep.violations[0].rule, "rounds overlap");
    }

    #[test]
    fn negative_refills_reported_per_round() {
        let mut c = toy_cohort(2);
        c.patients[1].rounds[0].obs_rescue = -1;
        c.patients[1].rounds[3].obs_ocs = -2;
        c.patients[1].rounds[3].obs_rescue = -2;
        let rep = validate_cohort(&c);
        assert_eq!(rep.count("negative count"), 2);
        assert_eq!(rep.violations.len(), 2);
    }

    #[test]
    fn obs_med_out_of_range() {
        let mut c = toy_cohort(2);
        c.patients[0].rounds[4].obs_med = 6;
        let rep = validate_cohort(&c);
        assert_eq!(rep.count("obs_med range"), 1);
    }

    #[test]
    fn standardisation_moments() {
        let c = toy_cohort(7);
        let xs: Vec<f64> = c.patients.iter().map(|p| p.covariates[0]).collect();
        let mean = xs.iter().sum::<f64>() / 7.0;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 6.0).sqrt();
        assert!(mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
    }

    #[test]
    fn constant_column_rejected() {
        let mut c = toy_cohort(3);
        for p in &mut c.patients {
            p.raw_covariates[0] = 1.0;
        }
        assert!(c.standardize().is_err());
    }

    #[test]
    fn holdout_zero_is_identity() {
        let c = toy_cohort(5);
        let (train, test) = holdout_split(&c, 0, 1).unwrap();
        assert_eq!(train, c);
        assert!(test.records.is_empty());
    }

    #[test]
    fn holdout_masks_round_five() {
        let c = toy_cohort(10);
        let (train, test) = holdout_split(&c, 4, 99).unwrap();
        assert_eq!(test.records.len(), 4);
        for r in &test.records {
            let p = &train.patients[train.find(&r.id).unwrap()];
            assert_eq!(p.rounds.len(), 4);
            assert_eq!(p.outcomes.ed_ip.len(), 72);
            assert_eq!(r.round.index, 5);
            assert_eq!(r.level, 1);
        }
        assert!(validate_cohort(&train).is_valid());
        assert!(holdout_split(&c, 11, 1).is_err());
        assert_eq!(holdout_split(&c, 4, 99).unwrap().1, test);
    }
}
