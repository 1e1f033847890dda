//! Metropolis-Hastings updates of one patient's latent quantities given the
//! population parameters.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use super::state::{mv, span, PatientData, PatientState};
use crate::dens::ln_normal;
use crate::latent::{censor_sum, truncate_level, MAX_SEGMENTS};
use crate::outcome::GlobalParams;
use crate::prior::PriorConfig;
use crate::process::{
    bridge_mean, bridge_mean3, sample_bridge, sample_bridge3, Ar1Stats, Var1Stats,
};

/// Largest displacement, in weeks, of a jump move.
const MAX_SHIFT: usize = 4;
/// Mixture of scales for the mean of a newborn segment.
const BIRTH_SCALES: [f64; 2] = [0.3, 1.2];

/// Quantities derived from the globals that every patient update reads.
#[derive(Debug, Clone)]
pub struct SweepConsts {
    pub gamma: [f64; 3],
    pub nu: [f64; 3],
    pub sigma_prec: Matrix3<f64>,
    pub phi_chol: Matrix3<f64>,
    pub phi_prec: Matrix3<f64>,
    pub delta_a: f64,
    pub ou_a: f64,
    pub ou_var: f64,
    ou_cvar: f64,
    ou_c0: f64,
    ou_c1: f64,
    pub ln_rho: f64,
    pub ln_varpi_odds: f64,
    pub m_mu: f64,
    pub s2_mu: f64,
    pub delta_block: usize,
    pub jump_moves: usize,
    pub latent: bool,
    pub time_effects: bool,
    /// Robbins-Monro step size while adapting.
    pub adapt_step: Option<f64>,
    /// When false every update targets the prior.
    pub likelihood: bool,
    /// When false path proposals ignore the observed round levels.
    pub constrained: bool,
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

impl SweepConsts {
    pub fn new(g: &GlobalParams, prior: &PriorConfig, latent: bool, time_effects: bool) -> Self {
        let inv = |m: &Matrix3<f64>| {
            m.cholesky()
                .map(|c| c.inverse())
                .unwrap_or_else(|| m.try_inverse().unwrap_or_else(Matrix3::identity))
        };
        let phi_chol = g
            .phi
            .cholesky()
            .map(|c| c.l())
            .unwrap_or_else(Matrix3::zeros);
        let ou_a = (-g.ou_decay).exp();
        let ou_cvar = g.ou_var * (1.0 - ou_a * ou_a);
        SweepConsts {
            gamma: g.gamma,
            nu: g.nu,
            sigma_prec: inv(&g.sigma),
            phi_chol,
            phi_prec: inv(&g.phi),
            delta_a: g.delta_lag(),
            ou_a,
            ou_var: g.ou_var,
            ou_cvar,
            ou_c0: -0.5 * (LN_2PI + g.ou_var.ln()),
            ou_c1: -0.5 * (LN_2PI + ou_cvar.ln()),
            ln_rho: g.rho.ln(),
            ln_varpi_odds: g.varpi.ln() - (1.0 - g.varpi).ln(),
            m_mu: prior.m_mu,
            s2_mu: prior.s2_mu,
            delta_block: 8,
            jump_moves: 3,
            latent,
            time_effects,
            adapt_step: None,
            likelihood: true,
            constrained: true,
        }
    }

    #[inline]
    fn ln_mu(&self, x: f64) -> f64 {
        ln_normal(x, self.m_mu, self.s2_mu)
    }

    /// Log-density of deviation `w` given its predecessor, or the stationary
    /// density when `w` opens a segment.
    #[inline]
    fn ou_term(&self, dev: &[f64], b: &[u8], w: usize) -> f64 {
        if w == 0 || b[w] != b[w - 1] {
            self.ou_c0 - 0.5 * dev[w] * dev[w] / self.ou_var
        } else {
            let r = dev[w] - self.ou_a * dev[w - 1];
            self.ou_c1 - 0.5 * r * r / self.ou_cvar
        }
    }

    fn ou_range(&self, dev: &[f64], b: &[u8], lo: usize, hi_incl: usize) -> f64 {
        let hi = hi_incl.min(dev.len() - 1);
        (lo..=hi).map(|w| self.ou_term(dev, b, w)).sum()
    }
}

#[inline]
fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
fn accept<R: Rng + ?Sized>(rng: &mut R, ln_ratio: f64) -> bool {
    if ln_ratio.is_nan() {
        return false;
    }
    ln_ratio >= 0.0 || rng.random::<f64>().ln() < ln_ratio
}

fn birth_q_draw<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let s = if rng.random::<bool>() {
        BIRTH_SCALES[0]
    } else {
        BIRTH_SCALES[1]
    };
    s * normal(rng)
}

fn birth_q_ln(x: f64) -> f64 {
    let a = ln_normal(x, 0.0, BIRTH_SCALES[0] * BIRTH_SCALES[0]);
    let b = ln_normal(x, 0.0, BIRTH_SCALES[1] * BIRTH_SCALES[1]);
    let m = a.max(b);
    m + (0.5 * ((a - m).exp() + (b - m).exp())).ln()
}

fn quad(prec: &Matrix3<f64>, v: &[f64; 3]) -> f64 {
    let v = Vector3::from(*v);
    v.dot(&(prec * v))
}

/// Block boundaries covering `[s, e)` with blocks of `len` weeks and a
/// random phase.
fn blocks<R: Rng + ?Sized>(s: usize, e: usize, len: usize, rng: &mut R, out: &mut Vec<usize>) {
    out.clear();
    out.push(s);
    let mut cut = s + rng.random_range(0..len) + 1;
    while cut < e {
        out.push(cut);
        cut += len;
    }
    out.push(e);
}

impl PatientState {
    fn adapt(&mut self, c: &SweepConsts, k: usize, acc: bool) {
        self.tune.record(k, acc);
        if let Some(step) = c.adapt_step {
            self.tune.adapt(k, acc, step);
        }
    }

    /// One full sweep of every update for this patient.
    pub fn update<R: Rng + ?Sized>(&mut self, d: &PatientData, c: &SweepConsts, rng: &mut R) {
        self.update_alpha(d, c, rng);
        if c.time_effects {
            self.update_delta(d, c, rng);
            self.shift_alpha_delta(d, c, rng);
        }
        if c.latent && d.n > 0 {
            for _ in 0..c.jump_moves {
                self.poisson_birth_death(d, c, rng);
                self.visit_toggle(d, c, rng);
                self.poisson_move(d, c, rng);
                self.visit_move(d, c, rng);
            }
            self.update_mu(d, c, rng);
            self.pair_shift(d, c, rng);
            self.update_dev(d, c, rng);
            self.shift_mu_dev(d, c, rng);
        }
        debug_assert!(!c.constrained || self.consistent(d));
    }

    fn alpha_prior(&self, c: &SweepConsts, alpha: &[f64; 3]) -> f64 {
        let v = [alpha[0] - c.nu[0], alpha[1] - c.nu[1], alpha[2] - c.nu[2]];
        -0.5 * quad(&c.sigma_prec, &v)
    }

    pub fn update_alpha<R: Rng + ?Sized>(&mut self, d: &PatientData, c: &SweepConsts, rng: &mut R) {
        let tot = self.total_rate_sums();
        for l in 0..3 {
            let k = mv::ALPHA + l;
            let step = self.tune.scale(k) * normal(rng);
            let mut prop = self.alpha;
            prop[l] += step;
            let mut lr = self.alpha_prior(c, &prop) - self.alpha_prior(c, &self.alpha);
            if c.likelihood {
                let off = self.alpha[l] + self.xb[l];
                lr += d.ytot[l] * step - ((off + step).exp() - off.exp()) * tot[l];
            }
            let acc = accept(rng, lr);
            if acc {
                self.alpha = prop;
            }
            self.adapt(c, k, acc);
        }
    }

    /// Evaluates the candidate time effects held in scratch over `[p, q)`.
    fn eval_delta(&mut self, d: &PatientData, c: &SweepConsts, p: usize, q: usize) -> f64 {
        let dl = self.delta_change(d, &c.gamma, p, q);
        if c.likelihood {
            dl
        } else {
            0.0
        }
    }

    /// Log-likelihood change of replacing the whole time-effect path by
    /// `map(delta)`. The candidate stays in scratch for [`Self::commit_delta_path`].
    pub(crate) fn delta_path_candidate(
        &mut self,
        d: &PatientData,
        gamma: &[f64; 3],
        map: impl Fn(&[[f64; 3]], &mut [[f64; 3]]),
    ) -> f64 {
        if d.n == 0 {
            return 0.0;
        }
        self.ensure_scratch(d);
        map(&self.delta, &mut self.scratch.delta);
        self.delta_change(d, gamma, 0, d.n)
    }

    pub(crate) fn commit_delta_path(&mut self, d: &PatientData) {
        if d.n > 0 {
            self.commit_delta(d, 0, d.n);
        }
    }

    fn delta_change(&mut self, d: &PatientData, gamma: &[f64; 3], p: usize, q: usize) -> f64 {
        let (r0, r1) = d.rounds_of(p, q);
        let sc = &mut self.scratch;
        for n in p..q {
            for l in 0..3 {
                sc.elin[n][l] = (gamma[l] * self.z[n] + sc.delta[n][l]).exp();
            }
        }
        let eoff = [
            (self.alpha[0] + self.xb[0]).exp(),
            (self.alpha[1] + self.xb[1]).exp(),
            (self.alpha[2] + self.xb[2]).exp(),
        ];
        let mut dl = 0.0;
        for m in r0..=r1 {
            let r = &d.rounds[m];
            let mut s = [0.0; 3];
            let mut lin = 0.0;
            for n in r.start..r.end {
                let (e, dn) = if (p..q).contains(&n) {
                    (sc.elin[n], sc.delta[n])
                } else {
                    (self.elin[n], self.delta[n])
                };
                for l in 0..3 {
                    s[l] += e[l];
                }
                lin += d.y1[n] * (gamma[0] * self.z[n] + dn[0]);
            }
            sc.rsum[m] = s;
            sc.rlin1[m] = lin;
            dl += (lin - self.rlin1[m]) - eoff[0] * (s[0] - self.rsum[m][0]);
            for l in 1..3 {
                dl += r.y[l - 1] * (s[l].ln() - self.rsum[m][l].ln())
                    - eoff[l] * (s[l] - self.rsum[m][l]);
            }
        }
        dl
    }

    fn commit_delta(&mut self, d: &PatientData, p: usize, q: usize) {
        let (r0, r1) = d.rounds_of(p, q);
        let sc = &self.scratch;
        self.delta[p..q].copy_from_slice(&sc.delta[p..q]);
        self.elin[p..q].copy_from_slice(&sc.elin[p..q]);
        self.rsum[r0..=r1].copy_from_slice(&sc.rsum[r0..=r1]);
        self.rlin1[r0..=r1].copy_from_slice(&sc.rlin1[r0..=r1]);
    }

    pub(crate) fn ensure_scratch(&mut self, d: &PatientData) {
        let sc = &mut self.scratch;
        if sc.z.len() != d.n {
            sc.z = vec![0.0; d.n];
            sc.elin = vec![[0.0; 3]; d.n];
            sc.delta = vec![[0.0; 3]; d.n];
            sc.dev = vec![0.0; d.n];
            sc.b = vec![0; d.n];
            sc.buf = vec![0.0; d.n];
            sc.buf3 = vec![[0.0; 3]; d.n];
        }
        let m = d.rounds.len();
        if sc.rsum.len() != m {
            sc.rsum = vec![[0.0; 3]; m];
            sc.rlin1 = vec![0.0; m];
            sc.rz = vec![0.0; m];
        }
    }

    /// Preconditioned Crank-Nicolson updates of the time effects in blocks,
    /// each proposal preserving the block's conditional prior.
    pub fn update_delta<R: Rng + ?Sized>(&mut self, d: &PatientData, c: &SweepConsts, rng: &mut R) {
        if d.n == 0 {
            return;
        }
        self.ensure_scratch(d);
        let mut cuts = Vec::new();
        let mut xi = vec![[0.0; 3]; c.delta_block.max(1)];
        blocks(0, d.n, c.delta_block, rng, &mut cuts);
        for win in cuts.windows(2) {
            let (p, q) = (win[0], win[1]);
            let left = (p > 0).then(|| self.delta[p - 1]);
            let right = (q < d.n).then(|| self.delta[q]);
            let w = self.tune.pcn_weight(mv::DELTA_PCN);
            let r = (1.0 - w * w).sqrt();
            let sc = &mut self.scratch;
            bridge_mean3(c.delta_a, left, right, &mut sc.buf3[p..q]);
            let len = q - p;
            if xi.len() < len {
                xi.resize(len, [0.0; 3]);
            }
            sample_bridge3(
                c.delta_a,
                &c.phi_chol,
                left.map(|_| [0.0; 3]),
                right.map(|_| [0.0; 3]),
                &mut xi[..len],
                rng,
            );
            for k in 0..len {
                let n = p + k;
                for l in 0..3 {
                    let m = sc.buf3[n][l];
                    sc.delta[n][l] = m + r * (self.delta[n][l] - m) + w * xi[k][l];
                }
            }
            let dl = self.eval_delta(d, c, p, q);
            let acc = accept(rng, dl);
            if acc {
                self.commit_delta(d, p, q);
            }
            self.adapt(c, mv::DELTA_PCN, acc);
        }
    }

    /// Moves `alpha` and the whole time-effect path in opposite directions,
    /// which leaves every intensity unchanged.
    pub fn shift_alpha_delta<R: Rng + ?Sized>(
        &mut self,
        d: &PatientData,
        c: &SweepConsts,
        rng: &mut R,
    ) {
        if d.n == 0 {
            return;
        }
        let s = self.tune.scale(mv::ALPHA_DELTA);
        let eps = [s * normal(rng), s * normal(rng), s * normal(rng)];
        let a = c.delta_a;
        let root = (1.0 - a * a).sqrt();
        let kappa = (1.0 - a) / root;
        let mut esum = Vector3::zeros();
        for w in self.delta.windows(2) {
            for l in 0..3 {
                esum[l] += (w[1][l] - a * w[0][l]) / root;
            }
        }
        let e0 = Vector3::from(self.delta[0]);
        let shift = -Vector3::from(eps);
        let lin = e0 + esum * kappa;
        let dq = 2.0 * shift.dot(&(c.phi_prec * lin))
            + shift.dot(&(c.phi_prec * shift)) * (1.0 + (d.n as f64 - 1.0) * kappa * kappa);
        let prop = [
            self.alpha[0] + eps[0],
            self.alpha[1] + eps[1],
            self.alpha[2] + eps[2],
        ];
        let lr = -0.5 * dq + self.alpha_prior(c, &prop) - self.alpha_prior(c, &self.alpha);
        let acc = accept(rng, lr);
        if acc {
            self.alpha = prop;
            for dn in &mut self.delta {
                for l in 0..3 {
                    dn[l] -= eps[l];
                }
            }
            for n in 0..d.n {
                for l in 0..3 {
                    self.elin[n][l] = (c.gamma[l] * self.z[n] + self.delta[n][l]).exp();
                }
            }
            for m in 0..d.rounds.len() {
                self.recompute_round_caches(d, c, m);
            }
        }
        self.adapt(c, mv::ALPHA_DELTA, acc);
    }

    fn recompute_round_caches(&mut self, d: &PatientData, c: &SweepConsts, m: usize) {
        let r = &d.rounds[m];
        let mut s = [0.0; 3];
        let mut lin = 0.0;
        for n in r.start..r.end {
            for l in 0..3 {
                s[l] += self.elin[n][l];
            }
            lin += d.y1[n] * (c.gamma[0] * self.z[n] + self.delta[n][0]);
        }
        self.rsum[m] = s;
        self.rlin1[m] = lin;
    }

    fn begin(&mut self, d: &PatientData) {
        self.ensure_scratch(d);
        let sc = &mut self.scratch;
        sc.mu.clone_from(&self.mu);
        sc.b.copy_from_slice(&self.b);
        sc.dev.copy_from_slice(&self.dev);
    }

    /// Rebuilds the candidate path on rounds `r0..=r1` and returns the
    /// log-likelihood change, or `None` when an observed level is violated.
    fn eval_path(&mut self, d: &PatientData, c: &SweepConsts, r0: usize, r1: usize) -> Option<f64> {
        let sc = &mut self.scratch;
        for m in r0..=r1 {
            let r = &d.rounds[m];
            let mut zs = 0.0;
            for n in r.start..r.end {
                let v = truncate_level(sc.mu[sc.b[n] as usize] + sc.dev[n]);
                sc.z[n] = v;
                zs += v;
            }
            if c.constrained && censor_sum(zs, r.len()) != r.obs_med {
                return None;
            }
            sc.rz[m] = zs;
        }
        let eoff = [
            (self.alpha[0] + self.xb[0]).exp(),
            (self.alpha[1] + self.xb[1]).exp(),
            (self.alpha[2] + self.xb[2]).exp(),
        ];
        let mut dl = 0.0;
        for m in r0..=r1 {
            let r = &d.rounds[m];
            let mut s = [0.0; 3];
            let mut lin = 0.0;
            for n in r.start..r.end {
                let z = sc.z[n];
                let dn = self.delta[n];
                for l in 0..3 {
                    let e = (c.gamma[l] * z + dn[l]).exp();
                    sc.elin[n][l] = e;
                    s[l] += e;
                }
                lin += d.y1[n] * (c.gamma[0] * z + dn[0]);
            }
            sc.rsum[m] = s;
            sc.rlin1[m] = lin;
            dl += (lin - self.rlin1[m]) - eoff[0] * (s[0] - self.rsum[m][0]);
            for l in 1..3 {
                dl += r.y[l - 1] * (s[l].ln() - self.rsum[m][l].ln())
                    - eoff[l] * (s[l] - self.rsum[m][l]);
            }
        }
        Some(if c.likelihood { dl } else { 0.0 })
    }

    fn commit_path(&mut self, d: &PatientData, r0: usize, r1: usize) {
        let sc = &mut self.scratch;
        std::mem::swap(&mut self.mu, &mut sc.mu);
        std::mem::swap(&mut self.b, &mut sc.b);
        std::mem::swap(&mut self.dev, &mut sc.dev);
        let (lo, hi) = (d.rounds[r0].start, d.rounds[r1].end);
        self.z[lo..hi].copy_from_slice(&sc.z[lo..hi]);
        self.elin[lo..hi].copy_from_slice(&sc.elin[lo..hi]);
        self.rsum[r0..=r1].copy_from_slice(&sc.rsum[r0..=r1]);
        self.rlin1[r0..=r1].copy_from_slice(&sc.rlin1[r0..=r1]);
        self.rz[r0..=r1].copy_from_slice(&sc.rz[r0..=r1]);
    }

    /// Evaluates the candidate built in scratch on the weeks `[lo, hi)` and
    /// commits it with probability `min(1, exp(ln_ratio + dL))`.
    fn finish<R: Rng + ?Sized>(
        &mut self,
        d: &PatientData,
        c: &SweepConsts,
        lo: usize,
        hi: usize,
        ln_ratio: f64,
        rng: &mut R,
    ) -> bool {
        if ln_ratio == f64::NEG_INFINITY || lo >= hi {
            return false;
        }
        let (r0, r1) = d.rounds_of(lo, hi);
        let Some(dl) = self.eval_path(d, c, r0, r1) else {
            return false;
        };
        let acc = accept(rng, ln_ratio + dl);
        if acc {
            self.commit_path(d, r0, r1);
        }
        acc
    }

    /// Weeks `[n1 weeks before w, n2 weeks from w]` of the segment span
    /// `[s, e)` that fall in the round containing `w`.
    fn round_weights(d: &PatientData, s: usize, e: usize, w: usize) -> (usize, usize) {
        let r = &d.rounds[d.round_of[w] as usize];
        (w.saturating_sub(s.max(r.start)), e.min(r.end) - w)
    }

    /// Adds a jump taking effect at week `w`. `jump_ln` is the log prior and
    /// proposal ratio of the jump itself. The compensated kernel moves the
    /// old segment's mean so that the round containing `w` keeps its sum.
    fn birth<R: Rng + ?Sized>(
        &mut self,
        d: &PatientData,
        c: &SweepConsts,
        w: usize,
        jump_ln: f64,
        compensated: bool,
        rng: &mut R,
    ) -> bool {
        if self.n_jumps() >= MAX_SEGMENTS - 1 || w == 0 || w >= d.n {
            return false;
        }
        let h = self.b[w] as usize;
        let (s, e) = span(&self.b, h);
        self.begin(d);
        let old = self.mu[h];
        let eps = birth_q_draw(rng);
        let (lo, mut lr);
        if compensated {
            let (n1, n2) = Self::round_weights(d, s, e, w);
            if n1 == 0 {
                return false;
            }
            let (n1, n2) = (n1 as f64, n2 as f64);
            let a = old - eps * n2 / n1;
            let bn = old + eps;
            self.scratch.mu[h] = a;
            self.scratch.mu.insert(h + 1, bn);
            lr = c.ln_mu(a) + c.ln_mu(bn) - c.ln_mu(old) + ((n1 + n2) / n1).ln() - birth_q_ln(eps);
            lo = s;
        } else {
            let bn = old + eps;
            self.scratch.mu.insert(h + 1, bn);
            lr = c.ln_mu(bn) - birth_q_ln(eps);
            lo = w;
        }
        for v in &mut self.scratch.b[w..] {
            *v += 1;
        }
        lr += c.ou_term(&self.scratch.dev, &self.scratch.b, w) - c.ou_term(&self.dev, &self.b, w);
        self.finish(d, c, lo, e, lr + jump_ln, rng)
    }

    /// Removes one jump taking effect at week `w`; the exact reverse of
    /// [`Self::birth`] with the same kernel. `jump_ln` is the birth's jump
    /// ratio from the reduced state.
    fn death<R: Rng + ?Sized>(
        &mut self,
        d: &PatientData,
        c: &SweepConsts,
        w: usize,
        jump_ln: f64,
        compensated: bool,
        rng: &mut R,
    ) -> bool {
        let k = self.b[w] as usize;
        debug_assert!(k >= 1 && w >= 1);
        let (_, e) = span(&self.b, k);
        self.begin(d);
        let (lo, mut lr);
        let (ma, mb) = (self.mu[k - 1], self.mu[k]);
        if compensated {
            let s_prev = if self.b[w - 1] as usize == k - 1 {
                span(&self.b, k - 1).0
            } else {
                w
            };
            let (n1, n2) = Self::round_weights(d, s_prev, e, w);
            if n1 == 0 {
                return false;
            }
            let (n1, n2) = (n1 as f64, n2 as f64);
            let merged = (n1 * ma + n2 * mb) / (n1 + n2);
            let eps = mb - merged;
            self.scratch.mu[k - 1] = merged;
            self.scratch.mu.remove(k);
            lr = c.ln_mu(merged) - c.ln_mu(ma) - c.ln_mu(mb) - ((n1 + n2) / n1).ln()
                + birth_q_ln(eps);
            lo = s_prev;
        } else {
            self.scratch.mu.remove(k);
            lr = -c.ln_mu(mb) + birth_q_ln(mb - ma);
            lo = w;
        }
        for v in &mut self.scratch.b[w..] {
            *v -= 1;
        }
        lr += c.ou_term(&self.scratch.dev, &self.scratch.b, w) - c.ou_term(&self.dev, &self.b, w);
        self.finish(d, c, lo, e, lr - jump_ln, rng)
    }

    fn nth_poisson_week(&self, mut i: usize) -> usize {
        for (w, &k) in self.pcount.iter().enumerate() {
            if i < k as usize {
                return w;
            }
            i -= k as usize;
        }
        unreachable!("jump index out of range")
    }

    fn nth_visit_jump(&self, d: &PatientData, mut i: usize) -> usize {
        for &v in &d.visits {
            if self.vjump[v] {
                if i == 0 {
                    return v;
                }
                i -= 1;
            }
        }
        unreachable!("visit jump index out of range")
    }

    pub fn poisson_birth_death<R: Rng + ?Sized>(
        &mut self,
        d: &PatientData,
        c: &SweepConsts,
        rng: &mut R,
    ) {
        if d.n < 2 {
            return;
        }
        let exposure = ((d.n - 1) as f64).ln();
        let compensated = rng.random::<bool>();
        let acc = if rng.random::<bool>() {
            let w = rng.random_range(1..d.n);
            let jump_ln = c.ln_rho + exposure - ((self.kc + 1) as f64).ln();
            let acc = self.birth(d, c, w, jump_ln, compensated, rng);
            if acc {
                self.pcount[w] += 1;
                self.kc += 1;
            }
            acc
        } else {
            if self.kc == 0 {
                return;
            }
            let w = self.nth_poisson_week(rng.random_range(0..self.kc));
            let jump_ln = c.ln_rho + exposure - (self.kc as f64).ln();
            let acc = self.death(d, c, w, jump_ln, compensated, rng);
            if acc {
                self.pcount[w] -= 1;
                self.kc -= 1;
            }
            acc
        };
        self.tune.record(mv::JUMP, acc);
    }

    pub fn visit_toggle<R: Rng + ?Sized>(&mut self, d: &PatientData, c: &SweepConsts, rng: &mut R) {
        if d.visits.is_empty() {
            return;
        }
        let compensated = rng.random::<bool>();
        let v = d.visits[rng.random_range(0..d.visits.len())];
        let acc = if self.vjump[v] {
            let acc = self.death(d, c, v + 1, c.ln_varpi_odds, compensated, rng);
            if acc {
                self.vjump[v] = false;
                self.kd -= 1;
            }
            acc
        } else {
            let acc = self.birth(d, c, v + 1, c.ln_varpi_odds, compensated, rng);
            if acc {
                self.vjump[v] = true;
                self.kd += 1;
            }
            acc
        };
        self.tune.record(mv::JUMP, acc);
    }

    /// Nearest weeks before and after `w` at which other jumps take effect
    /// (0 and `n` when there are none).
    fn neighbour_jumps(&self, w: usize, n: usize) -> (usize, usize) {
        let prev = (1..w).rev().find(|&u| self.increments(u) > 0).unwrap_or(0);
        let next = (w + 1..n).find(|&u| self.increments(u) > 0).unwrap_or(n);
        (prev, next)
    }

    /// Moves a lone jump from week `w` to week `to`; segment means stay with
    /// their segments.
    fn relocate<R: Rng + ?Sized>(
        &mut self,
        d: &PatientData,
        c: &SweepConsts,
        w: usize,
        to: usize,
        rng: &mut R,
    ) -> bool {
        self.begin(d);
        let (lo, hi) = (w.min(to), w.max(to));
        for v in &mut self.scratch.b[lo..hi] {
            if to < w {
                *v += 1;
            } else {
                *v -= 1;
            }
        }
        let lr = c.ou_term(&self.scratch.dev, &self.scratch.b, w)
            + c.ou_term(&self.scratch.dev, &self.scratch.b, to)
            - c.ou_term(&self.dev, &self.b, w)
            - c.ou_term(&self.dev, &self.b, to);
        self.finish(d, c, lo, hi, lr, rng)
    }

    pub fn poisson_move<R: Rng + ?Sized>(&mut self, d: &PatientData, c: &SweepConsts, rng: &mut R) {
        if self.kc == 0 {
            return;
        }
        let w = self.nth_poisson_week(rng.random_range(0..self.kc));
        let step = rng.random_range(1..=MAX_SHIFT);
        let up = rng.random::<bool>();
        if self.increments(w) != 1 {
            return;
        }
        let (prev, next) = self.neighbour_jumps(w, d.n);
        let to = if up { w + step } else { w.wrapping_sub(step) };
        if !up && step >= w || to <= prev || to >= next {
            self.tune.record(mv::JUMP, false);
            return;
        }
        let acc = self.relocate(d, c, w, to, rng);
        if acc {
            self.pcount[w] -= 1;
            self.pcount[to] += 1;
        }
        self.tune.record(mv::JUMP, acc);
    }

    pub fn visit_move<R: Rng + ?Sized>(&mut self, d: &PatientData, c: &SweepConsts, rng: &mut R) {
        if self.kd == 0 {
            return;
        }
        let v = self.nth_visit_jump(d, rng.random_range(0..self.kd));
        let w = v + 1;
        if self.increments(w) != 1 {
            return;
        }
        let (prev, next) = self.neighbour_jumps(w, d.n);
        let lo = d.visits.partition_point(|&u| u + 1 <= prev);
        let hi = d.visits.partition_point(|&u| u + 1 < next);
        let n_cand = hi - lo - 1;
        if n_cand == 0 {
            return;
        }
        let mut pick = rng.random_range(0..n_cand);
        let mut target = v;
        for &u in &d.visits[lo..hi] {
            if u == v {
                continue;
            }
            if pick == 0 {
                target = u;
                break;
            }
            pick -= 1;
        }
        let acc = self.relocate(d, c, w, target + 1, rng);
        if acc {
            self.vjump[v] = false;
            self.vjump[target] = true;
        }
        self.tune.record(mv::JUMP, acc);
    }

    /// Random-walk updates of the active segment means; means of segments
    /// without active weeks are drawn from their prior.
    pub fn update_mu<R: Rng + ?Sized>(&mut self, d: &PatientData, c: &SweepConsts, rng: &mut R) {
        for h in 0..self.mu.len() {
            let (s, e) = span(&self.b, h);
            if s == e {
                self.mu[h] = c.m_mu + c.s2_mu.sqrt() * normal(rng);
                continue;
            }
            self.begin(d);
            let old = self.mu[h];
            let new = old + self.tune.scale(mv::MU) * normal(rng);
            self.scratch.mu[h] = new;
            let lr = c.ln_mu(new) - c.ln_mu(old);
            let acc = self.finish(d, c, s, e, lr, rng);
            self.adapt(c, mv::MU, acc);
        }
    }

    /// Shifts the means on either side of a lone jump in opposite directions,
    /// weighted so that the round holding the jump keeps its sum.
    pub fn pair_shift<R: Rng + ?Sized>(&mut self, d: &PatientData, c: &SweepConsts, rng: &mut R) {
        for h in 1..self.mu.len() {
            let (s, e) = span(&self.b, h);
            if s == e || s == 0 || self.b[s - 1] as usize != h - 1 {
                continue;
            }
            let (s0, _) = span(&self.b, h - 1);
            let (n1, n2) = Self::round_weights(d, s0, e, s);
            let total = (n1 + n2) as f64;
            let eps = self.tune.scale(mv::PAIR) * normal(rng);
            self.begin(d);
            let (a, b) = (self.mu[h - 1], self.mu[h]);
            let na = a + eps * n2 as f64 / total;
            let nb = b - eps * n1 as f64 / total;
            self.scratch.mu[h - 1] = na;
            self.scratch.mu[h] = nb;
            let lr = c.ln_mu(na) + c.ln_mu(nb) - c.ln_mu(a) - c.ln_mu(b);
            let acc = self.finish(d, c, s0, e, lr, rng);
            self.adapt(c, mv::PAIR, acc);
        }
    }

    /// Blocked pCN updates of the deviations inside each active segment.
    pub fn update_dev<R: Rng + ?Sized>(&mut self, d: &PatientData, c: &SweepConsts, rng: &mut R) {
        let mut cuts = Vec::new();
        let mut xi = vec![0.0; c.delta_block.max(1)];
        for h in 0..self.mu.len() {
            let (s, e) = span(&self.b, h);
            if s == e {
                continue;
            }
            blocks(s, e, c.delta_block, rng, &mut cuts);
            for win in cuts.windows(2) {
                let (p, q) = (win[0], win[1]);
                let len = q - p;
                if xi.len() < len {
                    xi.resize(len, 0.0);
                }
                let left = (p > s).then(|| self.dev[p - 1]);
                let right = (q < e).then(|| self.dev[q]);
                let w = self.tune.pcn_weight(mv::DEV_PCN);
                let r = (1.0 - w * w).sqrt();
                self.begin(d);
                let sc = &mut self.scratch;
                bridge_mean(c.ou_a, left, right, &mut sc.buf[p..q]);
                sample_bridge(
                    c.ou_a,
                    c.ou_var,
                    left.map(|_| 0.0),
                    right.map(|_| 0.0),
                    &mut xi[..len],
                    rng,
                );
                for k in 0..len {
                    let n = p + k;
                    let m = sc.buf[n];
                    sc.dev[n] = m + r * (self.dev[n] - m) + w * xi[k];
                }
                let acc = self.finish(d, c, p, q, 0.0, rng);
                self.adapt(c, mv::DEV_PCN, acc);
            }
        }
    }

    /// Moves a segment mean and its deviations in opposite directions,
    /// leaving the path unchanged.
    pub fn shift_mu_dev<R: Rng + ?Sized>(&mut self, d: &PatientData, c: &SweepConsts, rng: &mut R) {
        for h in 0..self.mu.len() {
            let (s, e) = span(&self.b, h);
            if s == e {
                continue;
            }
            let eps = self.tune.scale(mv::MU_DEV) * normal(rng);
            self.begin(d);
            let old = self.mu[h];
            self.scratch.mu[h] = old + eps;
            for v in &mut self.scratch.dev[s..e] {
                *v -= eps;
            }
            let lr = c.ln_mu(old + eps) - c.ln_mu(old)
                + c.ou_range(&self.scratch.dev, &self.scratch.b, s, e - 1)
                - c.ou_range(&self.dev, &self.b, s, e - 1);
            let acc = self.finish(d, c, s, e, lr, rng);
            self.adapt(c, mv::MU_DEV, acc);
        }
    }

    /// Sufficient statistics of the active deviation paths.
    pub fn dev_stats(&self) -> Ar1Stats {
        let mut st = Ar1Stats::default();
        for h in 0..self.mu.len() {
            let (s, e) = span(&self.b, h);
            st.add_path(&self.dev[s..e]);
        }
        st
    }

    pub fn delta_stats(&self) -> Var1Stats {
        let mut st = Var1Stats::default();
        st.add_path(&self.delta);
        st
    }

    /// Full log-density of the deviations under the current OU parameters.
    pub fn dev_log_density(&self, c: &SweepConsts) -> f64 {
        if self.dev.is_empty() {
            0.0
        } else {
            c.ou_range(&self.dev, &self.b, 0, self.dev.len() - 1)
        }
    }
}
