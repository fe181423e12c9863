//! Optical pattern transfer: Gaussian aerial image followed by a hard resist
//! threshold. Masks sit on a dark field, so convolution is zero-padded.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{binarize, BinaryImage, Field2D};
use crate::phase::spectral::Fft2;

/// Default blur as a fraction of the mask width.
pub const DEFAULT_SIGMA_FRACTION: f64 = 0.06;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LithoParams {
    /// Gaussian standard deviation in pixels.
    pub sigma: f64,
    /// Kernel half-width; the kernel is `(2r+1)²`.
    pub kernel_radius: usize,
    pub threshold: f64,
}

impl LithoParams {
    pub fn new(sigma: f64, threshold: f64) -> Self {
        Self {
            sigma,
            kernel_radius: min_radius(sigma),
            threshold,
        }
    }

    /// Defaults for masks `width` pixels wide.
    pub fn for_width(width: usize) -> Self {
        Self::new(DEFAULT_SIGMA_FRACTION * width as f64, 0.5)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::param("sigma", format!("must be positive, got {}", self.sigma)));
        }
        if self.kernel_radius < min_radius(self.sigma) {
            return Err(Error::param(
                "kernel_radius",
                format!("{} is below ceil(3 sigma) = {}", self.kernel_radius, min_radius(self.sigma)),
            ));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::param("threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

fn min_radius(sigma: f64) -> usize {
    ((3.0 * sigma).ceil() as usize).max(1)
}

/// Normalized `(2r+1) x (2r+1)` Gaussian.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Result<Field2D> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
    }
    if radius == 0 {
        return Err(Error::param("radius", "must be at least 1"));
    }
    let n = 2 * radius + 1;
    let r = radius as f64;
    let k = Field2D::from_fn(n, n, |i, j| {
        let (y, x) = (i as f64 - r, j as f64 - r);
        (-(x * x + y * y) / (2.0 * sigma * sigma)).exp()
    });
    let total: f64 = k.data().iter().sum();
    Ok(k.map(|v| v / total))
}

/// Zero-padded convolution by direct summation.
pub fn convolve_direct(img: &Field2D, kernel: &Field2D) -> Field2D {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let rad = (kernel.width() / 2) as isize;
    Field2D::from_fn(img.width(), img.height(), |r, c| {
        let mut acc = 0.0;
        for i in -rad..=rad {
            let rr = r as isize - i;
            if rr < 0 || rr >= h {
                continue;
            }
            for j in -rad..=rad {
                let cc = c as isize - j;
                if cc < 0 || cc >= w {
                    continue;
                }
                acc += kernel.get((i + rad) as usize, (j + rad) as usize)
                    * img.get(rr as usize, cc as usize);
            }
        }
        acc
    })
}

/// Zero-padded convolution through FFTs on a grid large enough to avoid wrap-around.
pub fn convolve_fft(img: &Field2D, kernel: &Field2D) -> Field2D {
    let (w, h) = (img.width(), img.height());
    let rad = kernel.width() / 2;
    let (pw, ph) = (w + 2 * rad, h + 2 * rad);
    let mut fft = Fft2::new(pw, ph);
    let mut a = vec![Complex64::default(); pw * ph];
    let mut b = vec![Complex64::default(); pw * ph];
    for r in 0..h {
        for c in 0..w {
            a[r * pw + c].re = img.get(r, c);
        }
    }
    // Kernel centred at the origin with negative offsets wrapped.
    for i in 0..kernel.height() {
        for j in 0..kernel.width() {
            let rr = (i + ph - rad) % ph;
            let cc = (j + pw - rad) % pw;
            b[rr * pw + cc].re = kernel.get(i, j);
        }
    }
    fft.forward(&mut a);
    fft.forward(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    fft.inverse(&mut a);
    Field2D::from_fn(w, h, |r, c| a[r * pw + c].re)
}

/// Aerial image of `mask` (direct path).
pub fn aerial_image(mask: &Field2D, params: &LithoParams) -> Result<Field2D> {
    let kernel = gaussian_kernel(params.sigma, params.kernel_radius)?;
    Ok(convolve_direct(mask, &kernel))
}

/// Same as [`aerial_image`] via the FFT path.
pub fn aerial_image_fft(mask: &Field2D, params: &LithoParams) -> Result<Field2D> {
    let kernel = gaussian_kernel(params.sigma, params.kernel_radius)?;
    Ok(convolve_fft(mask, &kernel))
}

/// Pixel is printed iff its intensity exceeds `t`.
pub fn resist_threshold(aerial: &Field2D, t: f64) -> BinaryImage {
    binarize(aerial, t)
}

pub fn litho_forward(mask: &Field2D, params: &LithoParams) -> Result<BinaryImage> {
    Ok(resist_threshold(&aerial_image(mask, params)?, params.threshold))
}

/// Two equal squares side by side, centred in a `size x size` field.
/// Returns the mask and the `(row, col)` top-left corner of each square.
pub fn two_squares(size: usize) -> (BinaryImage, [(usize, usize); 2], usize) {
    let side = (size / 4).max(1);
    let gap = (size / 8).max(1);
    let top = (size - side) / 2;
    let left = (size - 2 * side - gap) / 2;
    let corners = [(top, left), (top, left + side + gap)];
    let img = BinaryImage::from_fn(size, size, |r, c| {
        corners
            .iter()
            .any(|&(r0, c0)| r >= r0 && r < r0 + side && c >= c0 && c < c0 + side)
    });
    (img, corners, side)
}
