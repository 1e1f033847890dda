use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kv::KvMap;

/// Which model is fitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    /// Latent medication process with full cross-outcome covariances.
    Full,
    /// Latent process with diagonal `Sigma` and `Phi`.
    LatentIndep,
    /// Random-intercept Poisson model with medication fixed at the round level.
    Glmer,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Full, Variant::LatentIndep, Variant::Glmer];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "latent",
            Variant::LatentIndep => "indep",
            Variant::Glmer => "glmer",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Variant::Full => "Latent Process",
            Variant::LatentIndep => "Latent Indep",
            Variant::Glmer => "GLMER",
        }
    }

    pub fn has_latent(self) -> bool {
        self != Variant::Glmer
    }

    pub fn diagonal(self) -> bool {
        self != Variant::Full
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" | "latent" | "latent-process" => Ok(Variant::Full),
            "indep" | "latent-indep" => Ok(Variant::LatentIndep),
            "glmer" | "baseline-glmm" | "glmm" => Ok(Variant::Glmer),
            other => Err(Error::Config(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub variant: Variant,
    pub chains: usize,
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    /// Adapt proposal scales during burn-in.
    pub adapt: bool,
    /// Worker threads; 0 uses every core.
    pub jobs: usize,
    /// Weeks per time-effect block update.
    pub delta_block: usize,
    /// Proposals of each jump move type per sweep.
    pub jump_moves: usize,
    pub save_latent: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            variant: Variant::Full,
            chains: 3,
            iterations: 4000,
            burn_in: 2000,
            thin: 1,
            seed: 1,
            adapt: true,
            jobs: 0,
            delta_block: 8,
            jump_moves: 3,
            save_latent: false,
        }
    }
}

pub const MAX_RETAINED_PER_CHAIN: usize = 2000;

impl FitConfig {
    pub const KEYS: [&'static str; 11] = [
        "variant",
        "chains",
        "iterations",
        "burn_in",
        "thin",
        "seed",
        "adapt",
        "jobs",
        "delta_block",
        "jump_moves",
        "save_latent",
    ];

    /// Half the run as burn-in and thinning to at most 2000 kept draws per chain.
    pub fn with_iterations(iterations: usize) -> Self {
        let burn_in = iterations / 2;
        FitConfig {
            iterations,
            burn_in,
            thin: default_thin(iterations - burn_in),
            ..FitConfig::default()
        }
    }

    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let mut c = FitConfig::default();
        if let Some(v) = kv.get("variant") {
            c.variant = v.parse()?;
        }
        kv.take("chains", &mut c.chains)?;
        kv.take("iterations", &mut c.iterations)?;
        c.burn_in = c.iterations / 2;
        kv.take("burn_in", &mut c.burn_in)?;
        c.thin = default_thin(c.iterations.saturating_sub(c.burn_in));
        kv.take("thin", &mut c.thin)?;
        kv.take("seed", &mut c.seed)?;
        kv.take("adapt", &mut c.adapt)?;
        kv.take("jobs", &mut c.jobs)?;
        kv.take("delta_block", &mut c.delta_block)?;
        kv.take("jump_moves", &mut c.jump_moves)?;
        kv.take("save_latent", &mut c.save_latent)?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new();
        kv.insert("variant", self.variant);
        kv.insert("chains", self.chains);
        kv.insert("iterations", self.iterations);
        kv.insert("burn_in", self.burn_in);
        kv.insert("thin", self.thin);
        kv.insert("seed", self.seed);
        kv.insert("adapt", self.adapt);
        kv.insert("jobs", self.jobs);
        kv.insert("delta_block", self.delta_block);
        kv.insert("jump_moves", self.jump_moves);
        kv.insert("save_latent", self.save_latent);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        if self.chains == 0 {
            return Err(Error::Config("chains must be at least 1".into()));
        }
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in {} must be smaller than iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 || self.delta_block == 0 {
            return Err(Error::Config(
                "thin and delta_block must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Retained draws per chain.
    pub fn retained(&self) -> usize {
        (self.iterations - self.burn_in).div_ceil(self.thin)
    }

    /// True when iteration `it` (0-based) is kept.
    pub fn keeps(&self, it: usize) -> bool {
        it >= self.burn_in && (it - self.burn_in) % self.thin == 0
    }
}

fn default_thin(post: usize) -> usize {
    post.div_ceil(MAX_RETAINED_PER_CHAIN).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_retained_count() {
        let c = FitConfig::with_iterations(4000);
        assert_eq!((c.burn_in, c.thin, c.retained()), (2000, 1, 2000));
        let c = FitConfig::with_iterations(20_000);
        assert_eq!((c.thin, c.retained()), (5, 2000));
        let c = FitConfig {
            iterations: 11,
            burn_in: 10,
            thin: 1,
            ..FitConfig::default()
        };
        assert_eq!(c.retained(), 1);
        assert_eq!((0..11).filter(|&i| c.keeps(i)).count(), 1);
    }

    #[test]
    fn kv_round_trip() {
        let mut kv = KvMap::new();
        kv.insert("variant", "glmer");
        kv.insert("iterations", 100);
        let c = FitConfig::from_kv(&kv).unwrap();
        assert_eq!((c.variant, c.burn_in), (Variant::Glmer, 50));
        assert_eq!(FitConfig::from_kv(&c.to_kv()).unwrap(), c);
        kv.insert("burn_in", 100);
        assert!(FitConfig::from_kv(&kv).is_err());
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!(
            "latent-indep".parse::<Variant>().unwrap(),
            Variant::LatentIndep
        );
        assert!("probit".parse::<Variant>().is_err());
    }
}
