//! Small-slope relaxation of a perturbed flat surface. Linear sharp-interface
//! theory predicts the amplitude of a sinusoidal perturbation decays as
//! `exp(-λ t)` with `λ ∝ k⁴`; the fit here measures λ from the phase field.

use std::f64::consts::PI;

use super::solver::{Mobility, Solver};
use super::{PhaseField, PhaseParams};
use crate::error::{Error, Result};
use crate::field::Field2D;

#[derive(Debug, Clone)]
pub struct MullinsSetup {
    /// Number of full sine periods across the domain width.
    pub mode: usize,
    /// Initial perturbation amplitude in length units.
    pub amplitude: f64,
    /// Simulated time span over which the decay is sampled.
    pub duration: f64,
    /// Number of amplitude samples (after the initial one).
    pub samples: usize,
    /// Leading fraction of samples skipped while the profile relaxes.
    pub skip_fraction: f64,
}

impl MullinsSetup {
    pub fn new(mode: usize, amplitude: f64, duration: f64) -> Self {
        Self {
            mode,
            amplitude,
            duration,
            samples: 20,
            skip_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecayFit {
    pub wavenumber: f64,
    /// Fitted λ in `A(t) = A₀ exp(−λ t)`.
    pub rate: f64,
    /// (time, amplitude) samples.
    pub amplitudes: Vec<(f64, f64)>,
}

/// Slab occupying the middle half of the domain; its upper surface carries
/// `a0 sin(kx)`. Values follow the equilibrium tanh profile of width √(2ε).
pub fn perturbed_slab(params: &PhaseParams, mode: usize, a0: f64) -> PhaseField {
    let (nx, ny) = (params.nx, params.ny);
    let (hx, hy) = (params.lx / nx as f64, params.ly / ny as f64);
    let k = 2.0 * PI * mode as f64 / params.lx;
    let width = (2.0 * params.epsilon).sqrt();
    let top = 0.25 * params.ly;
    let bottom = 0.75 * params.ly;
    PhaseField::new(Field2D::from_fn(nx, ny, |r, c| {
        let x = c as f64 * hx;
        let y = r as f64 * hy;
        let surface = top + a0 * (k * x).sin();
        let d = (y - surface).min(bottom - y);
        (d / width).tanh()
    }))
}

/// Height of the upper φ = 0 crossing in each column (length units).
pub fn interface_heights(phi: &PhaseField, params: &PhaseParams) -> Result<Vec<f64>> {
    let g = phi.grid();
    let hy = params.ly / params.ny as f64;
    let mut out = Vec::with_capacity(g.width());
    for c in 0..g.width() {
        let mut found = None;
        for r in 0..g.height() / 2 {
            let (a, b) = (g.get(r, c), g.get(r + 1, c));
            if a < 0.0 && b >= 0.0 {
                found = Some((r as f64 + a / (a - b)) * hy);
                break;
            }
        }
        out.push(found.ok_or_else(|| {
            Error::FitFailure(format!("no upper interface found in column {c}"))
        })?);
    }
    Ok(out)
}

fn mode_amplitude(heights: &[f64], params: &PhaseParams, k: f64) -> f64 {
    let hx = params.lx / params.nx as f64;
    let (mut re, mut im) = (0.0, 0.0);
    for (c, &h) in heights.iter().enumerate() {
        let ang = k * c as f64 * hx;
        re += h * ang.cos();
        im -= h * ang.sin();
    }
    2.0 * (re * re + im * im).sqrt() / heights.len() as f64
}

/// Evolves the perturbed slab with degenerate mobility and fits the
/// exponential decay rate of the surface mode.
pub fn mullins_decay_fit(params: &PhaseParams, setup: &MullinsSetup) -> Result<DecayFit> {
    if setup.amplitude == 0.0 {
        return Err(Error::FitFailure(
            "zero amplitude: a flat surface is stationary and has no decay rate".into(),
        ));
    }
    if setup.mode == 0 || setup.samples < 3 {
        return Err(Error::param("mode/samples", "need mode >= 1 and at least 3 samples"));
    }
    let k = 2.0 * PI * setup.mode as f64 / params.lx;
    let mut solver = Solver::new(params.clone(), Mobility::Degenerate)?;
    let total_steps = (setup.duration / params.dt).ceil() as usize;
    let stride = (total_steps / setup.samples).max(1);

    let mut phi = perturbed_slab(params, setup.mode, setup.amplitude);
    let mut amplitudes = vec![(0.0, mode_amplitude(&interface_heights(&phi, params)?, params, k))];
    let mut step = 0;
    while step < stride * setup.samples {
        phi = solver.step(&phi, step)?;
        step += 1;
        if step % stride == 0 {
            let a = mode_amplitude(&interface_heights(&phi, params)?, params, k);
            amplitudes.push((step as f64 * params.dt, a));
        }
    }
    if let Some(w) = amplitudes.windows(2).find(|w| w[1].1 >= w[0].1) {
        return Err(Error::FitFailure(format!(
            "amplitude not decreasing: {:.6e} at t={} then {:.6e} at t={}",
            w[0].1, w[0].0, w[1].1, w[1].0
        )));
    }
    let skip = ((amplitudes.len() as f64) * setup.skip_fraction) as usize;
    let pts: Vec<(f64, f64)> = amplitudes[skip..]
        .iter()
        .map(|&(t, a)| (t, a.ln()))
        .collect();
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let ml = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - ml)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Ok(DecayFit {
        wavenumber: k,
        rate: -sxy / sxx,
        amplitudes,
    })
}
