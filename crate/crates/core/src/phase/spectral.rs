use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Row-major 2-D complex FFT built from 1-D passes over rows and columns.
pub struct Fft2 {
    nx: usize,
    ny: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    transposed: Vec<Complex64>,
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        let row_fwd = planner.plan_fft_forward(nx);
        let row_inv = planner.plan_fft_inverse(nx);
        let col_fwd = planner.plan_fft_forward(ny);
        let col_inv = planner.plan_fft_inverse(ny);
        let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            nx,
            ny,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            scratch: vec![Complex64::default(); scratch_len],
            transposed: vec![Complex64::default(); nx * ny],
        }
    }

    pub fn forward(&mut self, data: &mut [Complex64]) {
        self.run(data, true);
    }

    /// Inverse transform including the `1 / (nx ny)` normalization.
    pub fn inverse(&mut self, data: &mut [Complex64]) {
        self.run(data, false);
        let scale = 1.0 / (self.nx * self.ny) as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }

    fn run(&mut self, data: &mut [Complex64], forward: bool) {
        let (nx, ny) = (self.nx, self.ny);
        assert_eq!(data.len(), nx * ny);
        let (rows, cols) = if forward {
            (&self.row_fwd, &self.col_fwd)
        } else {
            (&self.row_inv, &self.col_inv)
        };
        rows.process_with_scratch(data, &mut self.scratch);
        for r in 0..ny {
            for c in 0..nx {
                self.transposed[c * ny + r] = data[r * nx + c];
            }
        }
        cols.process_with_scratch(&mut self.transposed, &mut self.scratch);
        for c in 0..nx {
            for r in 0..ny {
                data[r * nx + c] = self.transposed[c * ny + r];
            }
        }
    }
}

/// Signed integer frequency of FFT bin `j` for an `n`-point transform.
pub fn frequency_index(j: usize, n: usize) -> i64 {
    if j < n.div_ceil(2) {
        j as i64
    } else {
        j as i64 - n as i64
    }
}

/// Wavenumber used for first derivatives; the Nyquist bin of an even grid is
/// zeroed so derivatives of real fields stay real.
pub fn derivative_wavenumber(j: usize, n: usize, length: f64) -> f64 {
    if n % 2 == 0 && j == n / 2 {
        0.0
    } else {
        2.0 * PI * frequency_index(j, n) as f64 / length
    }
}

/// Full wavenumber (Nyquist kept) used for the Laplacian.
pub fn laplacian_wavenumber(j: usize, n: usize, length: f64) -> f64 {
    2.0 * PI * frequency_index(j, n) as f64 / length
}

/// FFT plans, wavevector grids, and scratch buffers for one grid geometry.
pub struct SpectralWorkspace {
    pub(crate) nx: usize,
    pub(crate) ny: usize,
    pub(crate) fft: Fft2,
    /// Derivative wavenumbers along x, length nx.
    pub(crate) kx: Vec<f64>,
    /// Derivative wavenumbers along y, length ny.
    pub(crate) ky: Vec<f64>,
    /// |k|^2 on the full grid (row-major), exactly 0 at k = 0.
    pub(crate) k2: Vec<f64>,
    /// |k|^4 on the full grid.
    pub(crate) k4: Vec<f64>,
    pub(crate) buf_a: Vec<Complex64>,
    pub(crate) buf_b: Vec<Complex64>,
    pub(crate) buf_c: Vec<Complex64>,
}

impl SpectralWorkspace {
    pub fn new(nx: usize, ny: usize, lx: f64, ly: f64) -> Self {
        let kx = (0..nx).map(|j| derivative_wavenumber(j, nx, lx)).collect();
        let ky = (0..ny).map(|j| derivative_wavenumber(j, ny, ly)).collect();
        let mut k2 = Vec::with_capacity(nx * ny);
        for r in 0..ny {
            let ly2 = laplacian_wavenumber(r, ny, ly).powi(2);
            for c in 0..nx {
                k2.push(ly2 + laplacian_wavenumber(c, nx, lx).powi(2));
            }
        }
        let k4 = k2.iter().map(|v| v * v).collect();
        let zero = vec![Complex64::default(); nx * ny];
        Self {
            nx,
            ny,
            fft: Fft2::new(nx, ny),
            kx,
            ky,
            k2,
            k4,
            buf_a: zero.clone(),
            buf_b: zero.clone(),
            buf_c: zero,
        }
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn k_squared(&self) -> &[f64] {
        &self.k2
    }

    pub fn k_fourth(&self) -> &[f64] {
        &self.k4
    }

    pub fn kx(&self) -> &[f64] {
        &self.kx
    }

    pub fn ky(&self) -> &[f64] {
        &self.ky
    }
}
