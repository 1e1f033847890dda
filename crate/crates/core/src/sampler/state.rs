//! Per-patient sampler state and its likelihood caches.
//!
//! The medication path is stored only where it is active: one deviation per
//! week plus the mean of every segment. `b[n]` is the segment index at week
//! `n`; `pcount[w]` counts Poisson jumps taking effect at week `w` and
//! `vjump[v]` marks a jump triggered by the visit in week `v` (effective at
//! `v + 1`).

use crate::cohort::Patient;
use crate::latent::{censor_sum, truncate_level, MAX_SEGMENTS};
use crate::outcome::GlobalParams;

#[derive(Debug, Clone, PartialEq)]
pub struct RoundData {
    pub start: usize,
    pub end: usize,
    pub obs_med: u8,
    /// Round totals of rescue and OCS fills.
    pub y: [f64; 2],
    /// Round total of ED/IP visits.
    pub y1: f64,
}

impl RoundData {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

/// Immutable view of one patient's data in the form the sampler uses.
#[derive(Debug, Clone, PartialEq)]
pub struct PatientData {
    pub n: usize,
    pub x: Vec<f64>,
    pub rounds: Vec<RoundData>,
    pub round_of: Vec<u8>,
    pub y1: Vec<f64>,
    /// Outcome totals over the whole observed span.
    pub ytot: [f64; 3],
    /// Visit weeks whose jump would take effect inside the grid.
    pub visits: Vec<usize>,
    pub is_visit: Vec<bool>,
}

impl PatientData {
    pub fn new(p: &Patient) -> Self {
        let n = p.n_weeks();
        let mut round_of = vec![0u8; n];
        let mut rounds = Vec::with_capacity(p.rounds.len());
        let y1: Vec<f64> = p.outcomes.ed_ip.iter().map(|&v| v as f64).collect();
        let mut ytot = [0.0; 3];
        for (m, r) in p.rounds.iter().enumerate() {
            for slot in &mut round_of[r.weeks()] {
                *slot = m as u8;
            }
            let r1: f64 = y1[r.weeks()].iter().sum();
            let rd = RoundData {
                start: r.week_start,
                end: r.week_end,
                obs_med: r.obs_med as u8,
                y: [r.obs_rescue as f64, r.obs_ocs as f64],
                y1: r1,
            };
            ytot[0] += r1;
            ytot[1] += rd.y[0];
            ytot[2] += rd.y[1];
            rounds.push(rd);
        }
        let visits: Vec<usize> = p
            .visit_weeks
            .iter()
            .copied()
            .filter(|&v| v + 1 < n)
            .collect();
        let mut is_visit = vec![false; n];
        for &v in &visits {
            is_visit[v] = true;
        }
        PatientData {
            n,
            x: p.covariates.clone(),
            rounds,
            round_of,
            y1,
            ytot,
            visits,
            is_visit,
        }
    }

    /// Rounds touched by the half-open week range `[lo, hi)`.
    #[inline]
    pub fn rounds_of(&self, lo: usize, hi: usize) -> (usize, usize) {
        (self.round_of[lo] as usize, self.round_of[hi - 1] as usize)
    }

    /// Constant path at each round's observed level.
    pub fn observed_path(&self) -> Vec<f64> {
        let mut z = vec![0.0; self.n];
        for r in &self.rounds {
            for v in &mut z[r.start..r.end] {
                *v = r.obs_med as f64;
            }
        }
        z
    }
}

pub const N_SCALES: usize = 10;

/// Indices into the per-patient adaptive scale and acceptance tables.
pub mod mv {
    pub const ALPHA: usize = 0; // three entries, one per outcome
    pub const MU: usize = 3;
    pub const PAIR: usize = 4;
    pub const MU_DEV: usize = 5;
    pub const ALPHA_DELTA: usize = 6;
    pub const DELTA_PCN: usize = 7;
    pub const DEV_PCN: usize = 8;
    pub const JUMP: usize = 9;
    pub const NAMES: [&str; 10] = [
        "alpha_1",
        "alpha_2",
        "alpha_3",
        "mu",
        "mu_pair",
        "mu_dev_shift",
        "alpha_delta_shift",
        "delta_block",
        "dev_block",
        "jump",
    ];
}

/// Adaptive proposal scales (log scale; pCN entries are logit of the
/// innovation weight) and acceptance counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub log_scale: [f64; N_SCALES],
    pub proposed: [u64; N_SCALES],
    pub accepted: [u64; N_SCALES],
}

impl Default for Tuning {
    fn default() -> Self {
        let mut log_scale = [0.0; N_SCALES];
        for l in 0..3 {
            log_scale[mv::ALPHA + l] = (0.3f64).ln();
        }
        log_scale[mv::MU] = (0.1f64).ln();
        log_scale[mv::PAIR] = (0.2f64).ln();
        log_scale[mv::MU_DEV] = (0.1f64).ln();
        log_scale[mv::ALPHA_DELTA] = (0.2f64).ln();
        log_scale[mv::DELTA_PCN] = 0.0;
        log_scale[mv::DEV_PCN] = 0.0;
        Tuning {
            log_scale,
            proposed: [0; N_SCALES],
            accepted: [0; N_SCALES],
        }
    }
}

impl Tuning {
    pub fn scale(&self, k: usize) -> f64 {
        self.log_scale[k].exp()
    }

    /// Innovation weight `sqrt(1 - r^2)` of a pCN move.
    pub fn pcn_weight(&self, k: usize) -> f64 {
        1.0 / (1.0 + (-self.log_scale[k]).exp())
    }

    pub fn record(&mut self, k: usize, accepted: bool) {
        self.proposed[k] += 1;
        self.accepted[k] += u64::from(accepted);
    }

    /// Robbins-Monro step towards the target acceptance rate.
    pub fn adapt(&mut self, k: usize, accepted: bool, step: f64) {
        let target = match k {
            mv::DELTA_PCN | mv::DEV_PCN => 0.3,
            _ => 0.44,
        };
        let a = if accepted { 1.0 } else { 0.0 };
        self.log_scale[k] = (self.log_scale[k] + step * (a - target)).clamp(-12.0, 6.0);
    }
}

/// Candidate copies of the path pieces used while a proposal is evaluated.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scratch {
    pub mu: Vec<f64>,
    pub b: Vec<u8>,
    pub dev: Vec<f64>,
    pub z: Vec<f64>,
    pub elin: Vec<[f64; 3]>,
    pub delta: Vec<[f64; 3]>,
    pub rsum: Vec<[f64; 3]>,
    pub rlin1: Vec<f64>,
    pub rz: Vec<f64>,
    pub buf: Vec<f64>,
    pub buf3: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatientState {
    pub alpha: [f64; 3],
    pub xb: [f64; 3],
    pub delta: Vec<[f64; 3]>,
    pub mu: Vec<f64>,
    pub dev: Vec<f64>,
    pub b: Vec<u8>,
    pub pcount: Vec<u8>,
    pub vjump: Vec<bool>,
    pub kc: usize,
    pub kd: usize,
    pub z: Vec<f64>,
    /// `exp(gamma[l] z[n] + delta[n][l])`.
    pub elin: Vec<[f64; 3]>,
    /// Per-round sums of `elin`.
    pub rsum: Vec<[f64; 3]>,
    /// Per-round `sum y1[n] (gamma[0] z[n] + delta[n][0])`.
    pub rlin1: Vec<f64>,
    /// Per-round sums of `z`.
    pub rz: Vec<f64>,
    pub tune: Tuning,
    pub scratch: Scratch,
}

impl PatientState {
    /// Path held at each round's observed level: one Poisson jump wherever
    /// the level changes between rounds, zero deviations.
    pub fn at_observed(d: &PatientData, g: &GlobalParams, latent: bool) -> Self {
        let n = d.n;
        let mut mu = Vec::new();
        let mut b = vec![0u8; n];
        let mut pcount = vec![0u8; n];
        let mut kc = 0;
        if latent {
            for (m, r) in d.rounds.iter().enumerate() {
                let level = r.obs_med as f64;
                if m == 0 {
                    mu.push(level);
                } else if level != *mu.last().unwrap() && mu.len() < MAX_SEGMENTS {
                    mu.push(level);
                    pcount[r.start] += 1;
                    kc += 1;
                }
                let h = (mu.len() - 1) as u8;
                for v in &mut b[r.start..r.end] {
                    *v = h;
                }
            }
            if mu.is_empty() {
                mu.push(0.0);
            }
        }
        let mut s = PatientState {
            alpha: g.nu,
            xb: g.linear_predictor(&d.x),
            delta: vec![[0.0; 3]; n],
            mu,
            dev: vec![0.0; n],
            b,
            pcount,
            vjump: vec![false; n],
            kc,
            kd: 0,
            z: if latent {
                vec![0.0; n]
            } else {
                d.observed_path()
            },
            elin: vec![[0.0; 3]; n],
            rsum: vec![[0.0; 3]; d.rounds.len()],
            rlin1: vec![0.0; d.rounds.len()],
            rz: vec![0.0; d.rounds.len()],
            tune: Tuning::default(),
            scratch: Scratch::default(),
        };
        s.refresh(d, g, latent);
        s
    }

    /// Recomputes the path and every cache from the primary state.
    pub fn refresh(&mut self, d: &PatientData, g: &GlobalParams, latent: bool) {
        if latent {
            for n in 0..d.n {
                self.z[n] = truncate_level(self.mu[self.b[n] as usize] + self.dev[n]);
            }
        }
        for n in 0..d.n {
            for l in 0..3 {
                self.elin[n][l] = (g.gamma[l] * self.z[n] + self.delta[n][l]).exp();
            }
        }
        for m in 0..d.rounds.len() {
            self.refresh_round(d, g, m);
        }
        self.xb = g.linear_predictor(&d.x);
    }

    fn refresh_round(&mut self, d: &PatientData, g: &GlobalParams, m: usize) {
        let r = &d.rounds[m];
        let mut s = [0.0; 3];
        let mut lin = 0.0;
        let mut zs = 0.0;
        for n in r.start..r.end {
            for l in 0..3 {
                s[l] += self.elin[n][l];
            }
            lin += d.y1[n] * (g.gamma[0] * self.z[n] + self.delta[n][0]);
            zs += self.z[n];
        }
        self.rsum[m] = s;
        self.rlin1[m] = lin;
        self.rz[m] = zs;
    }

    /// `exp(alpha + x beta)` per outcome.
    #[inline]
    pub fn eoff(&self) -> [f64; 3] {
        [
            (self.alpha[0] + self.xb[0]).exp(),
            (self.alpha[1] + self.xb[1]).exp(),
            (self.alpha[2] + self.xb[2]).exp(),
        ]
    }

    pub fn total_rate_sums(&self) -> [f64; 3] {
        let mut t = [0.0; 3];
        for s in &self.rsum {
            for l in 0..3 {
                t[l] += s[l];
            }
        }
        t
    }

    /// Log-likelihood up to terms that depend only on the data.
    pub fn loglik(&self, d: &PatientData) -> f64 {
        let off = [
            self.alpha[0] + self.xb[0],
            self.alpha[1] + self.xb[1],
            self.alpha[2] + self.xb[2],
        ];
        let mut ll = d.ytot[0] * off[0];
        for (m, r) in d.rounds.iter().enumerate() {
            ll += self.rlin1[m] - off[0].exp() * self.rsum[m][0];
            for l in 1..3 {
                let s = self.rsum[m][l];
                ll += r.y[l - 1] * (off[l] + s.ln()) - off[l].exp() * s;
            }
        }
        ll
    }

    pub fn consistent(&self, d: &PatientData) -> bool {
        d.rounds
            .iter()
            .enumerate()
            .all(|(m, r)| censor_sum(self.rz[m], r.len()) == r.obs_med)
    }

    pub fn n_jumps(&self) -> usize {
        self.kc + self.kd
    }

    /// Jump increments taking effect at week `w`.
    #[inline]
    pub fn increments(&self, w: usize) -> usize {
        let mut k = self.pcount[w] as usize;
        if w >= 1 && self.vjump[w - 1] {
            k += 1;
        }
        k
    }
}

/// Weeks `[s, e)` where segment `h` is active; empty when `s == e`.
#[inline]
pub fn span(b: &[u8], h: usize) -> (usize, usize) {
    let s = b.partition_point(|&x| (x as usize) < h);
    let e = b.partition_point(|&x| (x as usize) <= h);
    (s, e)
}
