use num_complex::Complex64;

use super::spectral::SpectralWorkspace;
use super::{bulk_energy, bulk_energy_derivative, clamped_mobility, PhaseField, PhaseParams};
use crate::error::{Error, Result};
use crate::field::Field2D;

/// Mobility law used in the flux term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mobility {
    /// (1 − φ²)², surface diffusion.
    Degenerate,
    /// M ≡ 1, used for the smoothing pass.
    Constant,
}

/// A solver instance: parameters plus the spectral workspace for one grid.
pub struct Solver {
    params: PhaseParams,
    mobility: Mobility,
    ws: SpectralWorkspace,
    mu: Vec<f64>,
}

impl Solver {
    pub fn new(params: PhaseParams, mobility: Mobility) -> Result<Self> {
        params.validate()?;
        let ws = SpectralWorkspace::new(params.nx, params.ny, params.lx, params.ly);
        let n = params.nx * params.ny;
        Ok(Self {
            params,
            mobility,
            ws,
            mu: vec![0.0; n],
        })
    }

    pub fn params(&self) -> &PhaseParams {
        &self.params
    }

    pub fn workspace(&self) -> &SpectralWorkspace {
        &self.ws
    }

    /// Multiplies both stabilizers by `factor`.
    pub fn scale_stabilizers(&mut self, factor: f64) {
        self.params.b *= factor;
        self.params.s *= factor;
    }

    /// Multiplies the time step by `factor`.
    pub fn scale_dt(&mut self, factor: f64) {
        self.params.dt *= factor;
    }

    pub fn chemical_potential(&mut self, phi: &PhaseField) -> Result<Field2D> {
        self.params.expect_grid(phi.grid())?;
        load_real(&mut self.ws.buf_a, phi.grid().data());
        self.ws.fft.forward(&mut self.ws.buf_a);
        self.fill_mu(phi.grid().data());
        Ok(Field2D::from_raw(self.params.nx, self.params.ny, self.mu.clone()))
    }

    /// μ from φ (real space) and φ̂ (in `buf_a`), written into `self.mu`.
    fn fill_mu(&mut self, phi: &[f64]) {
        let eps = self.params.epsilon;
        let ws = &mut self.ws;
        for ((b, a), k2) in ws.buf_b.iter_mut().zip(&ws.buf_a).zip(&ws.k2) {
            *b = a * (eps * k2);
        }
        ws.fft.inverse(&mut ws.buf_b);
        for ((m, b), &p) in self.mu.iter_mut().zip(&ws.buf_b).zip(phi) {
            *m = b.re + bulk_energy_derivative(p);
        }
    }

    /// One semi-implicit step; `index` is reported if the result is not finite.
    pub fn step(&mut self, phi: &PhaseField, index: usize) -> Result<PhaseField> {
        self.params.expect_grid(phi.grid())?;
        let (nx, ny) = (self.params.nx, self.params.ny);
        let data = phi.grid().data();
        let coef = self.params.flux_coefficient();
        let (dt, b, s) = (self.params.dt, self.params.b, self.params.s);

        load_real(&mut self.ws.buf_a, data);
        self.ws.fft.forward(&mut self.ws.buf_a);
        self.fill_mu(data);

        let ws = &mut self.ws;
        // μ̂, then ∂xμ + i ∂yμ in one inverse transform (both are real).
        load_real(&mut ws.buf_b, &self.mu);
        ws.fft.forward(&mut ws.buf_b);
        let i = Complex64::i();
        for r in 0..ny {
            let ky = ws.ky[r];
            for c in 0..nx {
                let idx = r * nx + c;
                let m = ws.buf_b[idx];
                let dx = i * ws.kx[c] * m;
                let dy = i * ky * m;
                ws.buf_c[idx] = dx + i * dy;
            }
        }
        ws.fft.inverse(&mut ws.buf_c);
        // Flux J = coef M(φ) ∇μ packed as Jx + i Jy.
        for (v, &p) in ws.buf_c.iter_mut().zip(data) {
            let m = coef
                * match self.mobility {
                    Mobility::Degenerate => clamped_mobility(p),
                    Mobility::Constant => 1.0,
                };
            *v = Complex64::new(m * v.re, m * v.im);
        }
        ws.fft.forward(&mut ws.buf_c);
        // Unpack Ĵx, Ĵy using Hermitian symmetry, form the divergence and update.
        for r in 0..ny {
            let rr = (ny - r) % ny;
            let ky = ws.ky[r];
            for c in 0..nx {
                let cc = (nx - c) % nx;
                let idx = r * nx + c;
                let z = ws.buf_c[idx];
                let zc = ws.buf_c[rr * nx + cc].conj();
                let jx = (z + zc) * 0.5;
                let jy = (z - zc) * Complex64::new(0.0, -0.5);
                let div = i * (ws.kx[c] * jx + ky * jy);
                let denom = 1.0 + dt * (s * ws.k2[idx] + b * ws.k4[idx]);
                ws.buf_b[idx] = ws.buf_a[idx] + div * (dt / denom);
            }
        }
        ws.fft.inverse(&mut ws.buf_b);
        let mut out = Vec::with_capacity(nx * ny);
        for v in &ws.buf_b {
            if !v.re.is_finite() {
                return Err(Error::NonFinite { step: index });
            }
            out.push(v.re);
        }
        Ok(PhaseField::new(Field2D::from_raw(nx, ny, out)))
    }

    /// Ginzburg–Landau energy Σ (ε/2 |∇φ|² + f(φ)) ΔA with the spectral gradient.
    pub fn energy(&mut self, phi: &PhaseField) -> Result<f64> {
        self.params.expect_grid(phi.grid())?;
        let data = phi.grid().data();
        load_real(&mut self.ws.buf_a, data);
        self.ws.fft.forward(&mut self.ws.buf_a);
        let n = data.len() as f64;
        let gradient: f64 = self
            .ws
            .buf_a
            .iter()
            .zip(&self.ws.k2)
            .map(|(a, k2)| k2 * a.norm_sqr())
            .sum::<f64>()
            / n;
        let bulk: f64 = data.iter().map(|&p| bulk_energy(p)).sum();
        Ok((0.5 * self.params.epsilon * gradient + bulk) * self.params.cell_area())
    }
}

fn load_real(buf: &mut [Complex64], data: &[f64]) {
    for (b, &v) in buf.iter_mut().zip(data) {
        *b = Complex64::new(v, 0.0);
    }
}

pub fn chemical_potential(phi: &PhaseField, params: &PhaseParams) -> Result<Field2D> {
    Solver::new(params.clone(), Mobility::Degenerate)?.chemical_potential(phi)
}

/// One degenerate-mobility step.
pub fn step(phi: &PhaseField, params: &PhaseParams) -> Result<PhaseField> {
    Solver::new(params.clone(), Mobility::Degenerate)?.step(phi, 0)
}

pub fn gl_energy(phi: &PhaseField, params: &PhaseParams) -> Result<f64> {
    Solver::new(params.clone(), Mobility::Degenerate)?.energy(phi)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistorySample {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub phi: PhaseField,
    pub steps: usize,
    pub converged: bool,
    /// Number of times the time step was halved.
    pub escalations: usize,
    /// False if the energy still rose at some check after all escalations.
    pub energy_monotone: bool,
    /// Parameters in effect at the end, including any reduced time step.
    pub params: PhaseParams,
    pub history: Vec<HistorySample>,
}

/// Steps with degenerate mobility until the per-time change drops below
/// `steady_tol` or `max_steps` is reached.
///
/// Energy is checked every `check_interval` steps. If it rose, Δt is halved
/// and the block is re-run from the previous check, at most
/// `max_escalations` times. Larger stabilizers were tried first and made the
/// rises worse on trench cells; a smaller step removes them.
pub fn evolve_to_steady(phi0: &PhaseField, params: &PhaseParams) -> Result<Evolution> {
    let mut solver = Solver::new(params.clone(), Mobility::Degenerate)?;
    evolve_with(&mut solver, phi0)
}

pub(crate) fn evolve_with(solver: &mut Solver, phi0: &PhaseField) -> Result<Evolution> {
    let p = solver.params().clone();
    let mut phi = phi0.clone();
    let mut step_count = 0usize;
    let mut e_prev = solver.energy(&phi)?;
    let mut history = vec![HistorySample {
        step: 0,
        time: 0.0,
        mass: phi.mean(),
        energy: e_prev,
    }];
    let mut time = 0.0;
    let mut checkpoint = (phi.clone(), step_count, time);
    let mut escalations = 0;
    let mut monotone = true;
    let mut converged = false;

    while step_count < p.max_steps {
        let block = p.check_interval.min(p.max_steps - step_count);
        let mut rate = f64::INFINITY;
        for k in 0..block {
            let next = solver.step(&phi, step_count)?;
            step_count += 1;
            time += solver.params().dt;
            if k + 1 == block {
                rate = next.grid().max_abs_diff(phi.grid())? / solver.params().dt;
            }
            phi = next;
        }
        let energy = solver.energy(&phi)?;
        let rose = energy > e_prev + 1e-12 * e_prev.abs() + 1e-14;
        if rose {
            if escalations < p.max_escalations {
                escalations += 1;
                solver.scale_dt(0.5);
                phi = checkpoint.0.clone();
                step_count = checkpoint.1;
                time = checkpoint.2;
                continue;
            }
            monotone = false;
        }
        history.push(HistorySample {
            step: step_count,
            time,
            mass: phi.mean(),
            energy,
        });
        e_prev = energy;
        checkpoint = (phi.clone(), step_count, time);
        if rate < p.steady_tol {
            converged = true;
            break;
        }
    }
    Ok(Evolution {
        phi,
        steps: step_count,
        converged,
        escalations,
        energy_monotone: monotone,
        params: solver.params().clone(),
        history,
    })
}

/// Runs `iters` constant-mobility steps of size `dt_small` on φ = 2·img − 1.
pub fn smooth_constant_mobility(
    img: &Field2D,
    iters: usize,
    dt_small: f64,
    params: &PhaseParams,
) -> Result<PhaseField> {
    params.expect_grid(img)?;
    if img.data().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::param("img", "smoothing input must lie in [0, 1]"));
    }
    let mut p = params.clone();
    p.dt = dt_small;
    let mut solver = Solver::new(p, Mobility::Constant)?;
    let mut phi = PhaseField::from_density(img);
    for k in 0..iters {
        phi = solver.step(&phi, k)?;
    }
    Ok(phi)
}

/// Binary layout to a resolved phase field ready for degenerate evolution.
pub fn prepare_initial(
    img: &crate::field::BinaryImage,
    params: &PhaseParams,
    smoothing_iters: usize,
    smoothing_dt: f64,
) -> Result<PhaseField> {
    smooth_constant_mobility(&img.to_field(), smoothing_iters, smoothing_dt, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_phase(nx: usize, ny: usize, seed: u64) -> PhaseField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PhaseField::new(Field2D::from_fn(nx, ny, |_, _| rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn uniform_fields_are_fixed_points() {
        for v in [-1.0, 0.0, 1.0] {
            let params = PhaseParams::for_grid(16, 8);
            let phi = PhaseField::uniform(16, 8, v);
            let next = step(&phi, &params).unwrap();
            assert!(next.grid().max_abs_diff(phi.grid()).unwrap() < 1e-14);
        }
    }

    #[test]
    fn chemical_potential_of_constant() {
        let params = PhaseParams::for_grid(8, 8);
        let mu = chemical_potential(&PhaseField::uniform(8, 8, 0.3), &params).unwrap();
        let expect = 0.3f64.powi(3) - 0.3;
        assert!(mu.data().iter().all(|v| (v - expect).abs() < 1e-14));
    }

    #[test]
    fn chemical_potential_linearized_sine() {
        let (nx, ny) = (64, 8);
        let params = PhaseParams::for_grid(nx, ny);
        let a = 1e-4;
        let k = 2.0 * PI / params.lx;
        let h = params.cell_size();
        let phi = PhaseField::new(Field2D::from_fn(nx, ny, |_, c| a * (k * c as f64 * h).sin()));
        let mu = chemical_potential(&phi, &params).unwrap();
        for c in 0..nx {
            let lin = (params.epsilon * k * k - 1.0) * phi.grid().get(0, c);
            assert!((mu.get(0, c) - lin).abs() < 1e-6, "col {c}");
        }
    }

    #[test]
    fn chemical_potential_matches_finite_differences() {
        // Smooth field on a 128² grid: spectral vs 5-point Laplacian.
        let n = 128;
        let params = PhaseParams::for_grid(n, n);
        let w = 2.0 * PI / n as f64;
        let phi = PhaseField::new(Field2D::from_fn(n, n, |r, c| {
            0.6 * (w * c as f64).sin() * (2.0 * w * r as f64).cos() + 0.2 * (3.0 * w * (r + c) as f64).sin()
        }));
        let mu = chemical_potential(&phi, &params).unwrap();
        let g = phi.grid();
        let h = params.cell_size();
        let mut err = 0.0f64;
        let mut scale = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                let lap = g.get((r + 1) % n, c) + g.get((r + n - 1) % n, c) + g.get(r, (c + 1) % n)
                    + g.get(r, (c + n - 1) % n)
                    - 4.0 * g.get(r, c);
                let lap = lap / (h * h);
                let fd = -params.epsilon * lap + bulk_energy_derivative(g.get(r, c));
                err = err.max((fd - mu.get(r, c)).abs());
                scale = scale.max(mu.get(r, c).abs());
            }
        }
        assert!(err / scale < 1e-2, "relative error {}", err / scale);
    }

    #[test]
    fn step_conserves_zero_mode() {
        let params = PhaseParams::for_grid(32, 16);
        let phi = random_phase(32, 16, 3);
        let next = step(&phi, &params).unwrap();
        assert!((next.mean() - phi.mean()).abs() < 1e-14);
    }

    #[test]
    fn step_reports_non_finite() {
        let mut params = PhaseParams::for_grid(8, 8);
        params.dt = 1e300;
        params.b = 0.0;
        params.s = 1e-300;
        let phi = PhaseField::new(random_phase(8, 8, 1).grid().map(|v| 30.0 * v));
        let mut solver = Solver::new(params, Mobility::Constant).unwrap();
        let mut cur = phi;
        let mut failed = false;
        for k in 0..10 {
            match solver.step(&cur, k) {
                Ok(n) => cur = n,
                Err(Error::NonFinite { step }) => {
                    assert_eq!(step, k);
                    failed = true;
                    break;
                }
                Err(e) => panic!("{e}"),
            }
        }
        assert!(failed);
    }

    #[test]
    fn energy_closed_forms() {
        let params = PhaseParams::for_grid(16, 8);
        assert_eq!(gl_energy(&PhaseField::uniform(16, 8, 1.0), &params).unwrap(), 0.0);
        let e0 = gl_energy(&PhaseField::uniform(16, 8, 0.0), &params).unwrap();
        assert!((e0 - 0.25 * params.lx * params.ly).abs() < 1e-12);
    }

    #[test]
    fn uniform_converges_in_one_check() {
        let params = PhaseParams::for_grid(16, 16);
        let evo = evolve_to_steady(&PhaseField::uniform(16, 16, 0.2), &params).unwrap();
        assert!(evo.converged);
        assert_eq!(evo.steps, params.check_interval);
        assert_eq!(evo.history.len(), 2);
    }

    #[test]
    fn smoothing_rejects_out_of_range() {
        let params = PhaseParams::for_grid(8, 8);
        let img = Field2D::filled(8, 8, 1.5);
        assert!(smooth_constant_mobility(&img, 1, 1e-3, &params).is_err());
    }
}
