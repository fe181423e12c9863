//! Run configuration as TOML. Every section is optional and falls back to
//! the shipped defaults; unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datagen::{MaskConfig, SmoothingConfig, TrenchConfig};
use crate::design::{DEFAULT_BOUND, DEFAULT_RESTARTS, DIFFUSION_ALPHA, DIFFUSION_BETA};
use crate::error::{Error, Result};
use crate::litho::{LithoParams, DEFAULT_SIGMA_FRACTION};
use crate::nn::{AdamConfig, TrainConfig};
use crate::optim::LbfgsbConfig;
use crate::phase::{PhaseParams, DEFAULT_DT_SCALE, DEFAULT_PIXEL_SIZE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FieldsConfig {
    /// Pixels strictly above this become 1.
    pub binarize_threshold: f64,
}

impl Default for FieldsConfig {
    fn default() -> Self {
        Self { binarize_threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Length units per pixel.
    pub pixel_size: f64,
    /// Interface parameter in pixels (ε = epsilon_cells · pixel_size).
    pub epsilon_cells: f64,
    /// Multiple of the explicit-limit step.
    pub dt_scale: f64,
    pub steady_tol: f64,
    pub max_steps: usize,
    pub check_interval: usize,
    pub max_escalations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let p = PhaseParams::for_grid(8, 8);
        Self {
            pixel_size: DEFAULT_PIXEL_SIZE,
            epsilon_cells: 4.0,
            dt_scale: DEFAULT_DT_SCALE,
            steady_tol: p.steady_tol,
            max_steps: p.max_steps,
            check_interval: p.check_interval,
            max_escalations: p.max_escalations,
        }
    }
}

impl SolverConfig {
    pub fn params(&self, nx: usize, ny: usize) -> Result<PhaseParams> {
        let mut p = PhaseParams::with_pixel_size(nx, ny, self.pixel_size);
        let h = p.cell_size();
        p.epsilon = self.epsilon_cells * h;
        let coef = p.flux_coefficient();
        p.b = coef * p.epsilon;
        p.s = 2.0 * coef;
        p.dt = self.dt_scale * p.explicit_dt();
        p.steady_tol = self.steady_tol;
        p.max_steps = self.max_steps;
        p.check_interval = self.check_interval;
        p.max_escalations = self.max_escalations;
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LithoConfig {
    /// Gaussian σ as a fraction of the mask width.
    pub sigma_fraction: f64,
    pub threshold: f64,
}

impl Default for LithoConfig {
    fn default() -> Self {
        Self {
            sigma_fraction: DEFAULT_SIGMA_FRACTION,
            threshold: 0.5,
        }
    }
}

impl LithoConfig {
    pub fn params(&self, width: usize) -> Result<LithoParams> {
        let p = LithoParams::new(self.sigma_fraction * width as f64, self.threshold);
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatagenConfig {
    pub seed: u64,
    pub diffusion_count: usize,
    pub diffusion_test_count: usize,
    pub litho_count: usize,
    pub litho_test_count: usize,
    pub trench: TrenchConfig,
    pub mask: MaskConfig,
}

impl Default for DatagenConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            diffusion_count: 10_800,
            diffusion_test_count: 800,
            litho_count: 10_000,
            litho_test_count: 0,
            trench: TrenchConfig::full_scale(),
            mask: MaskConfig::for_size(64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    pub hidden: Vec<usize>,
    pub diffusion_latent_dim: usize,
    pub litho_latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub patience: usize,
    pub min_rel_improvement: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        let train = TrainConfig::default();
        Self {
            hidden: vec![512; 4],
            diffusion_latent_dim: 100,
            litho_latent_dim: 10,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            patience: train.patience,
            min_rel_improvement: train.min_rel_improvement,
            seed: 0,
        }
    }
}

impl VaeConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
        }
    }

    pub fn train(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            patience: self.patience,
            min_rel_improvement: self.min_rel_improvement,
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignConfig {
    pub diffusion_alpha: f64,
    pub diffusion_beta: f64,
    pub litho_alpha: f64,
    pub litho_beta: f64,
    /// Latent box is `[−bound, bound]` per coordinate.
    pub bound: f64,
    pub restarts: usize,
    pub seed: u64,
    pub memory: usize,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        let o = LbfgsbConfig::default();
        Self {
            diffusion_alpha: DIFFUSION_ALPHA,
            diffusion_beta: DIFFUSION_BETA,
            litho_alpha: 0.0,
            litho_beta: 0.0,
            bound: DEFAULT_BOUND,
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            memory: o.memory,
            max_iter: o.max_iter,
            tol: o.tol,
        }
    }
}

impl DesignConfig {
    pub fn optimizer(&self) -> LbfgsbConfig {
        LbfgsbConfig {
            memory: self.memory,
            max_iter: self.max_iter,
            tol: self.tol,
            ..LbfgsbConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub smoothing: SmoothingConfig,
    /// Test targets used by the round trip; 0 means all.
    pub max_targets: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            smoothing: SmoothingConfig::default(),
            max_targets: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub fields: FieldsConfig,
    pub solver: SolverConfig,
    pub litho: LithoConfig,
    pub datagen: DatagenConfig,
    pub vae: VaeConfig,
    pub design: DesignConfig,
    pub eval: EvalConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.fields.binarize_threshold;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::param("fields.binarize_threshold", "must lie in (0, 1)"));
        }
        let d = &self.datagen;
        d.trench.validate()?;
        d.mask.validate()?;
        self.solver.params(d.trench.width, d.trench.height)?;
        self.litho.params(d.mask.size)?;
        if d.diffusion_test_count > d.diffusion_count || d.litho_test_count > d.litho_count {
            return Err(Error::param("datagen", "test count exceeds sample count"));
        }
        let v = &self.vae;
        if v.batch_size == 0 || v.diffusion_latent_dim == 0 || v.litho_latent_dim == 0 {
            return Err(Error::param("vae", "batch size and latent dims must be positive"));
        }
        if !(v.learning_rate > 0.0) {
            return Err(Error::param("vae.learning_rate", "must be positive"));
        }
        let g = &self.design;
        if !(g.bound.is_finite() && g.bound > 0.0) {
            return Err(Error::param("design.bound", "must be finite and positive"));
        }
        if g.restarts == 0 || g.memory == 0 {
            return Err(Error::param("design", "restarts and memory must be positive"));
        }
        for (n, v) in [
            ("design.diffusion_alpha", g.diffusion_alpha),
            ("design.diffusion_beta", g.diffusion_beta),
            ("design.litho_alpha", g.litho_alpha),
            ("design.litho_beta", g.litho_beta),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::param(n, "must be finite and >= 0"));
            }
        }
        Ok(())
    }

    /// Deterministic digest input: the canonical TOML rendering.
    pub fn canonical(&self) -> String {
        self.to_toml()
    }
}
