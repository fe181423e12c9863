//! Pixel grids and the handful of functionals the design objective is built from.
//!
//! Every grid is row-major: `data[row * width + col]`. Solid material is 1 and
//! void is 0. A paired sample places the initial layout in columns `[0, W)` and
//! the final shape in columns `[W, 2W)` of a single `H x 2W` image.

use std::fmt;

use crate::error::{Error, Result};

/// Default binarization threshold (strict `>`).
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Real-valued pixel grid.
#[derive(Clone, PartialEq)]
pub struct Field2D {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Field2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field2D")
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Field2D {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::dims(
                format!("{} values for {width}x{height}", width * height),
                format!("{} values", data.len()),
            ));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::param("data", format!("non-finite value at index {i}")));
        }
        Ok(Self { width, height, data })
    }

    /// Builds a field without the finiteness scan; callers guarantee the invariant.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), width * height);
        Self { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        assert!(width >= 1 && height >= 1, "field dimensions must be positive");
        assert!(value.is_finite());
        Self::from_raw(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    /// `f(row, col)` for every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        assert!(width >= 1 && height >= 1, "field dimensions must be positive");
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                let v = f(r, c);
                assert!(v.is_finite(), "non-finite value at ({r}, {c})");
                data.push(v);
            }
        }
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(value.is_finite());
        self.data[row * self.width + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    pub fn same_shape(&self, other: &Field2D) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{} (h x w)", self.height, self.width)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field2D {
        let data: Vec<f64> = self.data.iter().map(|&v| f(v)).collect();
        assert!(data.iter().all(|v| v.is_finite()));
        Self::from_raw(self.width, self.height, data)
    }

    pub fn zip_map(&self, other: &Field2D, f: impl Fn(f64, f64) -> f64) -> Result<Field2D> {
        self.expect_shape(other)?;
        let data: Vec<f64> = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Field2D::new(self.width, self.height, data)
    }

    pub fn max_abs_diff(&self, other: &Field2D) -> Result<f64> {
        self.expect_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Mirror across the vertical centre line (column `c` maps to `width-1-c`).
    pub fn mirror_horizontal(&self) -> Field2D {
        Field2D::from_fn(self.width, self.height, |r, c| self.get(r, self.width - 1 - c))
    }

    /// Mirror across the horizontal centre line.
    pub fn mirror_vertical(&self) -> Field2D {
        Field2D::from_fn(self.width, self.height, |r, c| self.get(self.height - 1 - r, c))
    }

    pub fn mean(&self) -> f64 {
        volume(self) / self.len() as f64
    }

    pub(crate) fn expect_shape(&self, other: &Field2D) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::dims(self.shape_str(), other.shape_str()))
        }
    }
}

fn check_dims(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::param("dimensions", format!("{width}x{height} has an empty axis")));
    }
    width
        .checked_mul(height)
        .ok_or_else(|| Error::DimensionOverflow(format!("{width}x{height}")))?;
    Ok(())
}

/// Grid whose every value is exactly 0 or 1.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl fmt::Debug for BinaryImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BinaryImage")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("ones", &self.count_ones())
            .finish()
    }
}

impl BinaryImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if data.len() != width * height {
            return Err(Error::dims(width * height, data.len()));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::param("data", "binary image values must be 0 or 1"));
        }
        Ok(Self { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1);
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        assert!(width >= 1 && height >= 1);
        Self {
            width,
            height,
            data: vec![1; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut img = Self::zeros(width, height);
        for r in 0..height {
            for c in 0..width {
                img.data[r * width + c] = f(r, c) as u8;
            }
        }
        img
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] == 1
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.data[row * self.width + col] = value as u8;
    }

    pub fn count_ones(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn complement(&self) -> BinaryImage {
        BinaryImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    pub fn to_field(&self) -> Field2D {
        Field2D::from_raw(
            self.width,
            self.height,
            self.data.iter().map(|&v| v as f64).collect(),
        )
    }

    pub fn mirror_horizontal(&self) -> BinaryImage {
        BinaryImage::from_fn(self.width, self.height, |r, c| self.get(r, self.width - 1 - c))
    }

    pub fn mirror_vertical(&self) -> BinaryImage {
        BinaryImage::from_fn(self.width, self.height, |r, c| self.get(self.height - 1 - r, c))
    }

    pub fn same_shape(&self, other: &BinaryImage) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn shape_str(&self) -> String {
        format!("{}x{} (h x w)", self.height, self.width)
    }
}

/// Which half of a paired image a mask selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Half {
    Left,
    Right,
}

/// Initial layout and final shape stored side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    combined: Field2D,
}

impl PairedSample {
    pub fn from_combined(combined: Field2D) -> Result<Self> {
        if combined.width() % 2 != 0 {
            return Err(Error::param(
                "width",
                format!("paired image width {} is odd", combined.width()),
            ));
        }
        Ok(Self { combined })
    }

    pub fn combined(&self) -> &Field2D {
        &self.combined
    }

    pub fn into_combined(self) -> Field2D {
        self.combined
    }

    pub fn half_width(&self) -> usize {
        self.combined.width() / 2
    }

    pub fn height(&self) -> usize {
        self.combined.height()
    }

    pub fn initial(&self) -> Field2D {
        self.half(Half::Left)
    }

    pub fn final_shape(&self) -> Field2D {
        self.half(Half::Right)
    }

    pub fn half(&self, which: Half) -> Field2D {
        let w = self.half_width();
        let offset = match which {
            Half::Left => 0,
            Half::Right => w,
        };
        Field2D::from_fn(w, self.height(), |r, c| self.combined.get(r, c + offset))
    }

    pub fn split(&self) -> (Field2D, Field2D) {
        (self.initial(), self.final_shape())
    }
}

/// Places `initial` in the left half and `final_shape` in the right half.
pub fn concat_pair(initial: &Field2D, final_shape: &Field2D) -> Result<PairedSample> {
    initial.expect_shape(final_shape)?;
    let (w, h) = (initial.width(), initial.height());
    let mut data = Vec::with_capacity(2 * w * h);
    for r in 0..h {
        data.extend_from_slice(initial.row(r));
        data.extend_from_slice(final_shape.row(r));
    }
    Ok(PairedSample {
        combined: Field2D::from_raw(2 * w, h, data),
    })
}

/// Indicator of one half of a `height x width` paired image.
pub fn half_mask(width: usize, height: usize, which: Half) -> Result<BinaryImage> {
    check_dims(width, height)?;
    if width % 2 != 0 {
        return Err(Error::param("width", format!("combined width {width} is odd")));
    }
    let half = width / 2;
    Ok(BinaryImage::from_fn(width, height, |_, c| match which {
        Half::Left => c < half,
        Half::Right => c >= half,
    }))
}

pub fn apply_mask(img: &Field2D, mask: &BinaryImage) -> Result<Field2D> {
    if img.width() != mask.width() || img.height() != mask.height() {
        return Err(Error::dims(img.shape_str(), mask.shape_str()));
    }
    let data = img
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| if m == 1 { v } else { 0.0 })
        .collect();
    Ok(Field2D::from_raw(img.width(), img.height(), data))
}

pub fn volume(img: &Field2D) -> f64 {
    img.data().iter().sum()
}

/// Anisotropic total variation over right and down neighbours, no wrap-around.
pub fn total_variation(img: &Field2D) -> f64 {
    let (w, h) = (img.width(), img.height());
    let d = img.data();
    let mut tv = 0.0;
    for r in 0..h {
        let row = &d[r * w..(r + 1) * w];
        for c in 0..w.saturating_sub(1) {
            tv += (row[c + 1] - row[c]).abs();
        }
        if r + 1 < h {
            let next = &d[(r + 1) * w..(r + 2) * w];
            tv += row.iter().zip(next).map(|(a, b)| (b - a).abs()).sum::<f64>();
        }
    }
    tv
}

/// Pixel becomes 1 iff its value is strictly greater than `threshold`.
pub fn binarize(img: &Field2D, threshold: f64) -> BinaryImage {
    BinaryImage {
        width: img.width(),
        height: img.height(),
        data: img.data().iter().map(|&v| (v > threshold) as u8).collect(),
    }
}
