//! Latent-space inverse design through a frozen decoder.
//!
//! The decoder emits a combined image, initial layout on the left and final
//! shape on the right. Design searches for `z` whose right half matches the
//! target, then reads the layout off the left half.

use ndarray::{Array1, ArrayView1};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{binarize, half_mask, BinaryImage, Field2D, Half};
use crate::nn::VaeModel;
use crate::optim::{lbfgsb_minimize, LbfgsbConfig, Status};

pub const DIFFUSION_ALPHA: f64 = 0.1;
pub const DIFFUSION_BETA: f64 = 0.2;
pub const DEFAULT_BOUND: f64 = 3.0;
pub const DEFAULT_RESTARTS: usize = 8;
pub const DESIGN_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone)]
pub struct DesignProblem {
    /// Desired final shape, one half wide.
    pub target: Field2D,
    /// 1 on the right (final-shape) half of the combined image.
    pub mask: BinaryImage,
    pub alpha: f64,
    pub beta: f64,
    /// Per-coordinate box `[lower[i], upper[i]]`.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub restarts: usize,
    pub seed: u64,
    pub optimizer: LbfgsbConfig,
}

impl DesignProblem {
    /// Symmetric box `[−bound, bound]` on every latent coordinate.
    pub fn new(target: Field2D, latent_dim: usize, alpha: f64, beta: f64, bound: f64) -> Result<Self> {
        let mask = half_mask(2 * target.width(), target.height(), Half::Right)?;
        let p = Self {
            target,
            mask,
            alpha,
            beta,
            lower: vec![-bound; latent_dim],
            upper: vec![bound; latent_dim],
            restarts: DEFAULT_RESTARTS,
            seed: 0,
            optimizer: LbfgsbConfig::default(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("{} must be finite and >= 0", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("{} must be finite and >= 0", self.beta)));
        }
        if self.lower.len() != self.upper.len() {
            return Err(Error::dims(format!("{} upper bounds", self.lower.len()), self.upper.len()));
        }
        for (&l, &u) in self.lower.iter().zip(&self.upper) {
            if !(l.is_finite() && u.is_finite() && l < u && (l + u).abs() <= 1e-12 * u.abs()) {
                return Err(Error::param("bounds", format!("[{l}, {u}] must be finite, non-empty and symmetric")));
            }
        }
        if self.restarts == 0 {
            return Err(Error::param("restarts", "need at least one restart"));
        }
        if self.mask.width() != 2 * self.target.width() || self.mask.height() != self.target.height() {
            return Err(Error::dims(
                format!("mask {}x{}", self.target.height(), 2 * self.target.width()),
                self.mask.shape_str(),
            ));
        }
        Ok(())
    }

    pub fn combined_width(&self) -> usize {
        self.mask.width()
    }

    fn check_model(&self, model: &VaeModel<f64>) -> Result<()> {
        if model.input_dim() != self.mask.len() {
            return Err(Error::dims(format!("decoder output of {} pixels", self.mask.len()), model.input_dim()));
        }
        if model.latent_dim() != self.lower.len() {
            return Err(Error::dims(format!("latent dim {}", self.lower.len()), model.latent_dim()));
        }
        Ok(())
    }

    fn project(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&v, (&l, &u))| v.clamp(l, u))
            .collect()
    }
}

/// Objective value split into its unweighted parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveTerms {
    pub total: f64,
    /// `‖M⊙G − y‖²`
    pub mismatch: f64,
    /// `(vol((1−M)⊙G) − vol(y))²`
    pub volume: f64,
    pub tv: f64,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Terms and `∂value/∂G` for a decoded image laid out row-major.
fn objective_on_image(g: &[f64], problem: &DesignProblem) -> (ObjectiveTerms, Vec<f64>) {
    let w2 = problem.combined_width();
    let w = w2 / 2;
    let h = problem.mask.height();
    let y = problem.target.data();
    let mask = problem.mask.data();
    let mut grad = vec![0.0; g.len()];
    let mut mismatch = 0.0;
    let mut vol_layout = 0.0;
    for r in 0..h {
        for c in 0..w2 {
            let i = r * w2 + c;
            if mask[i] == 1 {
                let d = g[i] - y[r * w + (c - w)];
                mismatch += d * d;
                grad[i] += 2.0 * d;
            } else {
                vol_layout += g[i];
            }
        }
    }
    let vol_target: f64 = y.iter().sum();
    let dv = vol_layout - vol_target;
    let volume = dv * dv;
    if problem.alpha != 0.0 {
        for (gi, &m) in grad.iter_mut().zip(mask) {
            if m == 0 {
                *gi += problem.alpha * 2.0 * dv;
            }
        }
    }
    let mut tv = 0.0;
    for r in 0..h {
        for c in 0..w2 {
            let i = r * w2 + c;
            if c + 1 < w2 {
                let d = g[i + 1] - g[i];
                tv += d.abs();
                let s = problem.beta * sign(d);
                grad[i + 1] += s;
                grad[i] -= s;
            }
            if r + 1 < h {
                let d = g[i + w2] - g[i];
                tv += d.abs();
                let s = problem.beta * sign(d);
                grad[i + w2] += s;
                grad[i] -= s;
            }
        }
    }
    let total = mismatch + problem.alpha * volume + problem.beta * tv;
    (
        ObjectiveTerms {
            total,
            mismatch,
            volume,
            tv,
        },
        grad,
    )
}

/// Value and gradient of the design objective at `z` (projected onto the box).
pub fn design_objective(z: &[f64], problem: &DesignProblem, model: &VaeModel<f64>) -> Result<(ObjectiveTerms, Vec<f64>)> {
    problem.check_model(model)?;
    if z.len() != problem.lower.len() {
        return Err(Error::dims(format!("latent vector of {}", problem.lower.len()), z.len()));
    }
    let z = Array1::from_vec(problem.project(z));
    let mut terms = None;
    let (_, dz) = model.decode_vjp(z.view(), |g: &Array1<f64>| {
        let (t, grad) = objective_on_image(g.as_slice().expect("contiguous"), problem);
        terms = Some(t);
        Array1::from_vec(grad)
    })?;
    Ok((terms.expect("vjp callback ran"), dz.to_vec()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestartLog {
    pub index: usize,
    pub z0: Vec<f64>,
    pub z: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Status,
}

#[derive(Debug, Clone)]
pub struct DesignResult {
    pub z_hat: Vec<f64>,
    pub objective: ObjectiveTerms,
    /// Left half of `G(ẑ)`, grayscale.
    pub design: Field2D,
    /// Right half of `G(ẑ)`, grayscale.
    pub generated_final: Field2D,
    /// Index into `restarts` of the winner.
    pub best: usize,
    pub restarts: Vec<RestartLog>,
}

impl DesignResult {
    /// Design binarized for the smoothing and simulation pipeline.
    pub fn binary_design(&self) -> BinaryImage {
        binarize(&self.design, DESIGN_THRESHOLD)
    }

    pub fn binary_final(&self) -> BinaryImage {
        binarize(&self.generated_final, DESIGN_THRESHOLD)
    }
}

/// Starting point of restart `index`; independent of the restart count.
pub fn restart_start(problem: &DesignProblem, index: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    rng.set_stream(index as u64);
    let z: Vec<f64> = (0..problem.lower.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
    problem.project(&z)
}

fn split_halves(g: &[f64], w2: usize, h: usize) -> (Field2D, Field2D) {
    let w = w2 / 2;
    let left = Field2D::from_fn(w, h, |r, c| g[r * w2 + c]);
    let right = Field2D::from_fn(w, h, |r, c| g[r * w2 + w + c]);
    (left, right)
}

pub fn run_restart(problem: &DesignProblem, model: &VaeModel<f64>, index: usize) -> RestartLog {
    let z0 = restart_start(problem, index);
    let f = |z: &[f64], grad: &mut [f64]| match design_objective(z, problem, model) {
        Ok((t, g)) => {
            grad.copy_from_slice(&g);
            t.total
        }
        Err(_) => f64::NAN,
    };
    let r = lbfgsb_minimize(f, &z0, &problem.lower, &problem.upper, &problem.optimizer);
    RestartLog {
        index,
        z0,
        z: r.x,
        value: r.value,
        iterations: r.iterations,
        evaluations: r.evaluations,
        status: r.status,
    }
}

/// Multi-restart design. Restarts run in parallel; the winner is the lowest
/// finite objective, ties going to the lower index.
pub fn design(problem: &DesignProblem, model: &VaeModel<f64>) -> Result<DesignResult> {
    problem.validate()?;
    problem.check_model(model)?;
    let logs: Vec<RestartLog> = (0..problem.restarts)
        .into_par_iter()
        .map(|i| run_restart(problem, model, i))
        .collect();
    let best = logs
        .iter()
        .filter(|l| l.value.is_finite())
        .min_by(|a, b| a.value.total_cmp(&b.value).then(a.index.cmp(&b.index)))
        .map(|l| l.index)
        .ok_or(Error::AllRestartsFailed {
            restarts: problem.restarts,
        })?;
    let z_hat = logs[best].z.clone();
    let (objective, _) = design_objective(&z_hat, problem, model)?;
    let g = model.decode_one(ArrayView1::from(&z_hat[..]))?;
    let (design, generated_final) = split_halves(g.as_slice().unwrap(), problem.combined_width(), problem.mask.height());
    Ok(DesignResult {
        z_hat,
        objective,
        design,
        generated_final,
        best,
        restarts: logs,
    })
}
