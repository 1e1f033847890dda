//! Prior hyperparameters and the joint prior density.
//!
//! Wishart priors are placed on the precision matrices `Sigma^-1` and
//! `Phi^-1` in the `(R, k)` form with `E[Omega] = k R^-1`. The inverse gamma
//! on the OU variance uses a scale parameter, the gamma on `rho` a rate.

use nalgebra::Matrix3;

use crate::dens::{ln_beta, ln_gamma_pdf, ln_inv_gamma, ln_lognormal, ln_normal, ln_wishart3};
use crate::error::{Error, Result};
use crate::kv::KvMap;
use crate::outcome::GlobalParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PriorConfig {
    pub m_nu: [f64; 3],
    pub s2_nu: [f64; 3],
    pub p_sigma: Matrix3<f64>,
    pub n_sigma: f64,
    /// Prior mean and variance of every `beta[j][l]`, per outcome.
    pub b_beta: [f64; 3],
    pub t2_beta: [f64; 3],
    /// `-gamma[l] ~ logN(c_gamma[l], u2_gamma[l])`.
    pub c_gamma: [f64; 3],
    pub u2_gamma: [f64; 3],
    pub a_theta: f64,
    pub b_theta: f64,
    pub p_phi: Matrix3<f64>,
    pub n_phi: f64,
    pub m_mu: f64,
    pub s2_mu: f64,
    pub a_sigma: f64,
    pub b_sigma: f64,
    pub a_phi: f64,
    pub b_phi: f64,
    pub a_rho: f64,
    pub b_rho: f64,
    pub a_varpi: f64,
    pub b_varpi: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        default_prior_config()
    }
}

pub fn default_prior_config() -> PriorConfig {
    PriorConfig {
        m_nu: [0.0; 3],
        s2_nu: [100.0; 3],
        p_sigma: Matrix3::identity(),
        n_sigma: 4.0,
        b_beta: [0.0; 3],
        t2_beta: [100.0; 3],
        c_gamma: [-1.0; 3],
        u2_gamma: [10.0; 3],
        a_theta: 1.0,
        b_theta: 1.0,
        p_phi: Matrix3::identity(),
        n_phi: 4.0,
        m_mu: 0.0,
        s2_mu: 50.0,
        a_sigma: 5.0,
        b_sigma: 0.05,
        a_phi: 6.0,
        b_phi: 3.0,
        a_rho: 0.25,
        b_rho: 10.0,
        a_varpi: 3.0,
        b_varpi: 6.0,
    }
}

/// The two weaker medication-process priors used for sensitivity analysis.
pub fn alt_prior_configs() -> [PriorConfig; 2] {
    let weak = PriorConfig {
        a_sigma: 2.0,
        b_sigma: 0.02,
        a_phi: 2.0,
        b_phi: 1.0,
        a_rho: 0.1,
        b_rho: 4.0,
        a_varpi: 3.0,
        b_varpi: 6.0,
        ..default_prior_config()
    };
    let diffuse = PriorConfig {
        a_sigma: 0.1,
        b_sigma: 0.02,
        a_phi: 1.0,
        b_phi: 1.0,
        a_rho: 0.1,
        b_rho: 1.0,
        a_varpi: 1.0,
        b_varpi: 1.0,
        ..default_prior_config()
    };
    [weak, diffuse]
}

const VEC_KEYS: [&str; 6] = ["M_nu", "S2_nu", "B_beta", "T2_beta", "C_gamma", "U2_gamma"];
const MAT_KEYS: [&str; 2] = ["P_Sigma", "P_Phi"];
const SCALAR_KEYS: [&str; 14] = [
    "N_Sigma", "A_theta", "B_theta", "N_Phi", "M_mu", "S2_mu", "A_sigma", "B_sigma", "A_phi",
    "B_phi", "A_rho", "B_rho", "A_varpi", "B_varpi",
];

pub(crate) fn parse_list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad value for {key}: {v:?}")))
        })
        .collect()
}

pub(crate) fn parse_matrix(key: &str, v: &str) -> Result<Matrix3<f64>> {
    let xs = parse_list(key, v)?;
    match xs.len() {
        1 => Ok(Matrix3::identity() * xs[0]),
        3 => Ok(Matrix3::from_diagonal(&nalgebra::Vector3::new(
            xs[0], xs[1], xs[2],
        ))),
        9 => Ok(Matrix3::from_row_slice(&xs)),
        n => Err(Error::Config(format!(
            "{key} needs 1, 3 or 9 values, got {n}"
        ))),
    }
}

pub(crate) fn render_matrix(m: &Matrix3<f64>) -> String {
    let mut parts = Vec::with_capacity(9);
    for r in 0..3 {
        for c in 0..3 {
            parts.push(m[(r, c)].to_string());
        }
    }
    parts.join(",")
}

impl PriorConfig {
    /// Every key the prior understands.
    pub fn keys() -> Vec<String> {
        let mut out: Vec<String> = SCALAR_KEYS.iter().map(|s| s.to_string()).collect();
        out.extend(MAT_KEYS.iter().map(|s| s.to_string()));
        for k in VEC_KEYS {
            out.push(k.to_string());
            for l in 1..=3 {
                out.push(format!("{k}_{l}"));
            }
        }
        out
    }

    fn vec_slot(&mut self, key: &str) -> &mut [f64; 3] {
        match key {
            "M_nu" => &mut self.m_nu,
            "S2_nu" => &mut self.s2_nu,
            "B_beta" => &mut self.b_beta,
            "T2_beta" => &mut self.t2_beta,
            "C_gamma" => &mut self.c_gamma,
            _ => &mut self.u2_gamma,
        }
    }

    fn scalar_slot(&mut self, key: &str) -> &mut f64 {
        match key {
            "N_Sigma" => &mut self.n_sigma,
            "A_theta" => &mut self.a_theta,
            "B_theta" => &mut self.b_theta,
            "N_Phi" => &mut self.n_phi,
            "M_mu" => &mut self.m_mu,
            "S2_mu" => &mut self.s2_mu,
            "A_sigma" => &mut self.a_sigma,
            "B_sigma" => &mut self.b_sigma,
            "A_phi" => &mut self.a_phi,
            "B_phi" => &mut self.b_phi,
            "A_rho" => &mut self.a_rho,
            "B_rho" => &mut self.b_rho,
            "A_varpi" => &mut self.a_varpi,
            _ => &mut self.b_varpi,
        }
    }

    /// Applies every recognised key of `kv`; a bare per-outcome key sets all
    /// three outcomes and `_1`..`_3` suffixes set one.
    pub fn apply(&mut self, kv: &KvMap) -> Result<()> {
        for k in SCALAR_KEYS {
            kv.take(k, self.scalar_slot(k))?;
        }
        if let Some(v) = kv.get("P_Sigma") {
            self.p_sigma = parse_matrix("P_Sigma", v)?;
        }
        if let Some(v) = kv.get("P_Phi") {
            self.p_phi = parse_matrix("P_Phi", v)?;
        }
        for k in VEC_KEYS {
            if let Some(v) = kv.get(k) {
                let xs = parse_list(k, v)?;
                let slot = self.vec_slot(k);
                match xs.len() {
                    1 => *slot = [xs[0]; 3],
                    3 => slot.copy_from_slice(&xs),
                    n => return Err(Error::Config(format!("{k} needs 1 or 3 values, got {n}"))),
                }
            }
            for l in 0..3 {
                let key = format!("{k}_{}", l + 1);
                let mut v = self.vec_slot(k)[l];
                kv.take(&key, &mut v)?;
                self.vec_slot(k)[l] = v;
            }
        }
        self.validate()
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let mut p = default_prior_config();
        p.apply(kv)?;
        Ok(p)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        let mut me = self.clone();
        for k in SCALAR_KEYS {
            kv.insert(k, *me.scalar_slot(k));
        }
        kv.insert("P_Sigma", render_matrix(&self.p_sigma));
        kv.insert("P_Phi", render_matrix(&self.p_phi));
        for k in VEC_KEYS {
            let v = *me.vec_slot(k);
            for l in 0..3 {
                kv.insert(&format!("{k}_{}", l + 1), v[l]);
            }
        }
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("prior {what}")));
        if !(self.n_sigma >= 4.0) || !(self.n_phi >= 4.0) {
            return bad("Wishart degrees of freedom must be at least 4");
        }
        for (name, m) in [("P_Sigma", &self.p_sigma), ("P_Phi", &self.p_phi)] {
            if (m - m.transpose()).abs().max() > 0.0 || m.cholesky().is_none() {
                return bad(&format!("{name} must be symmetric positive definite"));
            }
        }
        let positive = [
            self.s2_mu,
            self.a_theta,
            self.b_theta,
            self.a_sigma,
            self.b_sigma,
            self.a_phi,
            self.b_phi,
            self.a_rho,
            self.b_rho,
            self.a_varpi,
            self.b_varpi,
        ];
        let per_outcome = self.s2_nu.iter().chain(&self.t2_beta).chain(&self.u2_gamma);
        if positive
            .iter()
            .chain(per_outcome)
            .any(|&v| !(v > 0.0 && v.is_finite()))
        {
            return bad("scale and shape parameters must be positive and finite");
        }
        let means = self.m_nu.iter().chain(&self.b_beta).chain(&self.c_gamma);
        if means.chain([&self.m_mu]).any(|v| !v.is_finite()) {
            return bad("location parameters must be finite");
        }
        Ok(())
    }

    /// Shape and scale of the inverse gamma on each diagonal of a covariance
    /// restricted to be diagonal: the one-dimensional Wishart with the same
    /// degrees of freedom placed on its reciprocal.
    pub fn diag_inv_gamma(p: &Matrix3<f64>, df: f64, l: usize) -> (f64, f64) {
        (0.5 * df, 0.5 * p[(l, l)])
    }
}

/// Joint log prior density of the globals and the segment means `mu`.
///
/// Each factor is a density in the parameterisation its prior is stated in:
/// precision matrices, `-gamma`, `exp(-theta)` and `exp(-phi)`.
pub fn log_prior(g: &GlobalParams, mu: &[f64], cfg: &PriorConfig) -> f64 {
    if g.gamma.iter().any(|&v| !(v < 0.0)) {
        return f64::NEG_INFINITY;
    }
    let mut lp = 0.0;
    for l in 0..3 {
        lp += ln_normal(g.nu[l], cfg.m_nu[l], cfg.s2_nu[l]);
        lp += ln_lognormal(-g.gamma[l], cfg.c_gamma[l], cfg.u2_gamma[l]);
        for b in &g.beta {
            lp += ln_normal(b[l], cfg.b_beta[l], cfg.t2_beta[l]);
        }
    }
    for (m, r, df) in [
        (&g.sigma, &cfg.p_sigma, cfg.n_sigma),
        (&g.phi, &cfg.p_phi, cfg.n_phi),
    ] {
        match m.try_inverse() {
            Some(prec) => lp += ln_wishart3(&(0.5 * (prec + prec.transpose())), r, df),
            None => return f64::NEG_INFINITY,
        }
    }
    lp += ln_beta((-g.theta).exp(), cfg.a_theta, cfg.b_theta);
    lp += ln_beta((-g.ou_decay).exp(), cfg.a_phi, cfg.b_phi);
    lp += ln_inv_gamma(g.ou_var, cfg.a_sigma, cfg.b_sigma);
    lp += ln_gamma_pdf(g.rho, cfg.a_rho, cfg.b_rho);
    lp += ln_beta(g.varpi, cfg.a_varpi, cfg.b_varpi);
    for &m in mu {
        lp += ln_normal(m, cfg.m_mu, cfg.s2_mu);
    }
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn globals() -> GlobalParams {
        GlobalParams {
            beta: vec![[0.1, -0.2, 0.3]],
            gamma: [-0.264, -0.017, -0.189],
            nu: [-4.0, -2.5, -4.2],
            sigma: Matrix3::identity() * 0.5,
            theta: 0.1,
            phi: Matrix3::identity() * 0.25,
            ou_var: 0.0125,
            ou_decay: 0.4,
            rho: 0.02,
            varpi: 1.0 / 3.0,
        }
    }

    #[test]
    fn log_prior_matches_reference() {
        // Sum of the scipy.stats factors at these globals and mu = (1, 3.5).
        let v = log_prior(&globals(), &[1.0, 3.5], &default_prior_config());
        assert!((v - (-37.599_545_974_926_855)).abs() < 1e-9, "{v}");
        let mut g = globals();
        g.gamma[1] = 0.01;
        assert_eq!(
            log_prior(&g, &[], &default_prior_config()),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn default_values() {
        let p = default_prior_config();
        assert_eq!(p.s2_nu, [100.0; 3]);
        assert_eq!((p.n_sigma, p.n_phi), (4.0, 4.0));
        assert_eq!((p.c_gamma[0], p.u2_gamma[2]), (-1.0, 10.0));
        assert_eq!(
            (p.a_theta, p.b_theta, p.m_mu, p.s2_mu),
            (1.0, 1.0, 0.0, 50.0)
        );
        assert_eq!(
            (p.a_sigma, p.b_sigma, p.a_phi, p.b_phi),
            (5.0, 0.05, 6.0, 3.0)
        );
        assert_eq!(
            (p.a_rho, p.b_rho, p.a_varpi, p.b_varpi),
            (0.25, 10.0, 3.0, 6.0)
        );
        assert!((p.a_varpi / (p.a_varpi + p.b_varpi) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn alternates() {
        let [a, b] = alt_prior_configs();
        assert_eq!(
            (a.a_sigma, a.b_sigma, a.a_phi, a.b_phi, a.a_rho, a.b_rho),
            (2.0, 0.02, 2.0, 1.0, 0.1, 4.0)
        );
        assert_eq!(
            (b.a_phi, b.b_phi, b.a_varpi, b.b_varpi),
            (1.0, 1.0, 1.0, 1.0)
        );
        assert_eq!(
            (b.a_sigma, b.b_sigma, b.a_rho, b.b_rho),
            (0.1, 0.02, 0.1, 1.0)
        );
    }

    #[test]
    fn kv_round_trip_and_overrides() {
        let mut kv =
            KvMap::parse("A_sigma = 2\nC_gamma_2 = -3\nS2_nu = 4\nP_Phi = 1,2,3\n").unwrap();
        let p = PriorConfig::from_kv(&kv).unwrap();
        assert_eq!(p.a_sigma, 2.0);
        assert_eq!(p.c_gamma, [-1.0, -3.0, -1.0]);
        assert_eq!(p.s2_nu, [4.0; 3]);
        assert_eq!(p.p_phi[(2, 2)], 3.0);
        assert_eq!(PriorConfig::from_kv(&p.to_kv()).unwrap(), p);
        kv.set_override("N_Sigma=2").unwrap();
        assert!(PriorConfig::from_kv(&kv).is_err());
        let keys = PriorConfig::keys();
        assert!(p
            .to_kv()
            .unknown_keys(&keys.iter().map(String::as_str).collect::<Vec<_>>())
            .is_empty());
    }

    #[test]
    fn support() {
        let cfg = default_prior_config();
        let mut g = globals();
        assert!(log_prior(&g, &[1.0, 2.0], &cfg).is_finite());
        g.gamma[1] = 0.1;
        assert_eq!(log_prior(&g, &[], &cfg), f64::NEG_INFINITY);
        g.gamma[1] = 0.0;
        assert_eq!(log_prior(&g, &[], &cfg), f64::NEG_INFINITY);
        let mut g = globals();
        g.varpi = 0.0;
        assert_eq!(log_prior(&g, &[], &cfg), f64::NEG_INFINITY);
        g.varpi = 1.0;
        assert_eq!(log_prior(&g, &[], &cfg), f64::NEG_INFINITY);
        // Beta(1,1) is finite at the endpoint.
        let mut flat = cfg.clone();
        flat.a_varpi = 1.0;
        flat.b_varpi = 1.0;
        assert!(log_prior(&g, &[], &flat).is_finite());
        let mut g = globals();
        g.sigma[(0, 0)] = -1.0;
        assert_eq!(log_prior(&g, &[], &cfg), f64::NEG_INFINITY);
    }
}
