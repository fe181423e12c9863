//! Procedural training data: random trench cells evolved by the diffusion
//! solver, and symmetric control-point edits of a two-squares mask pushed
//! through the litho model.
//!
//! Sample `i` is drawn from a ChaCha stream seeded with `base_seed + i`, so
//! samples are independent of each other and of the worker count.

use std::collections::HashSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{concat_pair, BinaryImage, Field2D, PairedSample};
use crate::io::{read_key_values, read_raw, write_key_values, write_raw};
use crate::litho::{litho_forward, two_squares, LithoParams};
use crate::phase::{evolve_to_steady, prepare_initial, PhaseParams};

pub const RETRY_BUDGET: usize = 20;

fn sample_rng(base_seed: u64, index: usize, attempt: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed.wrapping_add(index as u64));
    rng.set_stream(attempt as u64);
    rng
}

// ---------------------------------------------------------------------------
// Trenches

/// Inclusive `[lo, hi]` pixel ranges for random trench cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrenchConfig {
    pub width: usize,
    pub height: usize,
    /// Row of the flat solid surface; rows above it are void.
    pub surface_row: usize,
    pub trench_width: [usize; 2],
    pub trench_depth: [usize; 2],
    /// Probability that a cell gets two trenches instead of one.
    pub two_trench_probability: f64,
    /// Minimum solid columns between two trenches.
    pub min_gap: usize,
}

impl TrenchConfig {
    /// 64 x 256 cell with the surface at row 64.
    pub fn full_scale() -> Self {
        Self {
            width: 64,
            height: 256,
            surface_row: 64,
            trench_width: [4, 20],
            trench_depth: [8, 120],
            two_trench_probability: 0.5,
            min_gap: 2,
        }
    }

    /// 32 x 64 cell with the surface at row 16.
    pub fn desk_scale() -> Self {
        Self {
            width: 32,
            height: 64,
            surface_row: 16,
            trench_width: [3, 8],
            trench_depth: [4, 30],
            two_trench_probability: 0.5,
            min_gap: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [w0, w1] = self.trench_width;
        let [d0, d1] = self.trench_depth;
        if w0 < 3 || d0 < 3 || w0 > w1 || d0 > d1 {
            return Err(Error::param("trench_width/trench_depth", "ranges need 3 <= lo <= hi"));
        }
        if w1 > self.width {
            return Err(Error::param("trench_width", "wider than the cell"));
        }
        if self.surface_row + d1 >= self.height {
            return Err(Error::param("trench_depth", "trench reaches the bottom of the cell"));
        }
        if !(0.0..=1.0).contains(&self.two_trench_probability) {
            return Err(Error::param("two_trench_probability", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trench {
    pub x: usize,
    pub width: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrenchSpec {
    pub surface_row: usize,
    pub trenches: Vec<Trench>,
}

impl TrenchSpec {
    pub fn render(&self, width: usize, height: usize) -> BinaryImage {
        BinaryImage::from_fn(width, height, |r, c| {
            r >= self.surface_row
                && !self.trenches.iter().any(|t| {
                    c >= t.x && c < t.x + t.width && r < self.surface_row + t.depth
                })
        })
    }
}

/// Trenches keep `gap` solid columns between them, measured around the
/// periodic x axis.
fn separated(a: &Trench, b: &Trench, gap: usize, width: usize) -> bool {
    let (l, r) = if a.x <= b.x { (a, b) } else { (b, a) };
    l.x + l.width + gap <= r.x && r.x + r.width + gap <= l.x + width
}

fn draw_trench_spec(rng: &mut impl Rng, cfg: &TrenchConfig) -> Result<TrenchSpec> {
    let count = if rng.random_bool(cfg.two_trench_probability) { 2 } else { 1 };
    let mut trenches: Vec<Trench> = Vec::with_capacity(count);
    'place: for _ in 0..count {
        for _ in 0..RETRY_BUDGET {
            let width = rng.random_range(cfg.trench_width[0]..=cfg.trench_width[1]);
            let depth = rng.random_range(cfg.trench_depth[0]..=cfg.trench_depth[1]);
            let x = rng.random_range(0..=cfg.width - width);
            let t = Trench { x, width, depth };
            if trenches.iter().all(|o| separated(o, &t, cfg.min_gap, cfg.width)) {
                trenches.push(t);
                continue 'place;
            }
        }
        return Err(Error::GenerationFailed {
            retries: RETRY_BUDGET,
            reason: "could not place non-overlapping trenches".into(),
        });
    }
    trenches.sort_by_key(|t| t.x);
    Ok(TrenchSpec {
        surface_row: cfg.surface_row,
        trenches,
    })
}

pub fn sample_trench_spec(seed: u64, cfg: &TrenchConfig) -> Result<TrenchSpec> {
    cfg.validate()?;
    draw_trench_spec(&mut ChaCha8Rng::seed_from_u64(seed), cfg)
}

pub fn sample_trench_cell(seed: u64, cfg: &TrenchConfig) -> Result<BinaryImage> {
    Ok(sample_trench_spec(seed, cfg)?.render(cfg.width, cfg.height))
}

/// Constant-mobility smoothing applied to binary inputs before evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    pub iterations: usize,
    /// Smoothing step as a multiple of the solver step.
    pub dt_factor: f64,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            iterations: 20,
            dt_factor: 0.01,
        }
    }
}

/// Result of evolving one binary initial layout.
#[derive(Debug, Clone)]
pub struct Simulated {
    pub final_shape: BinaryImage,
    pub steps: usize,
    pub converged: bool,
    pub escalations: usize,
}

/// Smooth, evolve, binarize.
pub fn simulate_binary(
    initial: &BinaryImage,
    params: &PhaseParams,
    smoothing: &SmoothingConfig,
) -> Result<Simulated> {
    let phi0 = prepare_initial(initial, params, smoothing.iterations, smoothing.dt_factor * params.dt)?;
    let ev = evolve_to_steady(&phi0, params)?;
    Ok(Simulated {
        final_shape: ev.phi.binarize(),
        steps: ev.steps,
        converged: ev.converged,
        escalations: ev.escalations,
    })
}

/// Per-sample generation record.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleStats {
    pub retries: usize,
    pub steps: usize,
    pub converged: bool,
    pub escalations: usize,
}

// ---------------------------------------------------------------------------
// Datasets

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<PairedSample>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

impl Dataset {
    /// The last `test_count` samples form the test split.
    pub fn new(samples: Vec<PairedSample>, test_count: usize, seed: u64) -> Result<Self> {
        if test_count > samples.len() {
            return Err(Error::param(
                "test_count",
                format!("{test_count} exceeds the {} samples", samples.len()),
            ));
        }
        let n_train = samples.len() - test_count;
        Ok(Self {
            train: (0..n_train).collect(),
            test: (n_train..samples.len()).collect(),
            samples,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn train_samples(&self) -> impl Iterator<Item = &PairedSample> {
        self.train.iter().map(|&i| &self.samples[i])
    }

    pub fn test_samples(&self) -> impl Iterator<Item = &PairedSample> {
        self.test.iter().map(|&i| &self.samples[i])
    }

    /// Writes the raw records and a `<path>.manifest` sidecar holding the
    /// split, the seed and any `extra` entries.
    pub fn save(&self, path: &Path, extra: &[(String, String)]) -> Result<()> {
        let records: Vec<Field2D> = self.samples.iter().map(|s| s.combined().clone()).collect();
        write_raw(path, &records)?;
        let mut kv = vec![
            ("seed".to_string(), self.seed.to_string()),
            ("count".into(), self.len().to_string()),
            ("train_count".into(), self.train.len().to_string()),
            ("test_count".into(), self.test.len().to_string()),
        ];
        kv.extend_from_slice(extra);
        write_key_values(manifest_path(path), &kv)
    }

    /// Reads a dataset; without a manifest every sample is a training sample.
    pub fn load(path: &Path) -> Result<Self> {
        let samples = read_raw(path)?
            .into_iter()
            .map(PairedSample::from_combined)
            .collect::<Result<Vec<_>>>()?;
        let manifest = manifest_path(path);
        let (test_count, seed) = if manifest.exists() {
            let kv = read_key_values(&manifest)?;
            let get = |k: &str| {
                kv.iter()
                    .find(|(key, _)| key == k)
                    .and_then(|(_, v)| v.parse::<u64>().ok())
            };
            (get("test_count").unwrap_or(0) as usize, get("seed").unwrap_or(0))
        } else {
            (0, 0)
        };
        Self::new(samples, test_count, seed)
    }
}

pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    s.into()
}

/// Trench pairs `(initial | binarized steady state)`. A sample whose
/// simulation fails is redrawn from a fresh stream, up to the retry budget.
pub fn generate_diffusion_dataset(
    n: usize,
    seed: u64,
    params: &PhaseParams,
    cfg: &TrenchConfig,
    smoothing: &SmoothingConfig,
    test_count: usize,
) -> Result<(Dataset, Vec<SampleStats>)> {
    cfg.validate()?;
    params.validate()?;
    if params.nx != cfg.width || params.ny != cfg.height {
        return Err(Error::dims(
            format!("{}x{} (h x w)", cfg.height, cfg.width),
            format!("{}x{} (h x w)", params.ny, params.nx),
        ));
    }
    let results: Vec<Result<(PairedSample, SampleStats)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut last_err = None;
            for attempt in 0..=RETRY_BUDGET {
                let mut rng = sample_rng(seed, i, attempt);
                let outcome = draw_trench_spec(&mut rng, cfg).and_then(|spec| {
                    let initial = spec.render(cfg.width, cfg.height);
                    let sim = simulate_binary(&initial, params, smoothing)?;
                    Ok((initial, sim))
                });
                match outcome {
                    Ok((initial, sim)) => {
                        let pair = concat_pair(&initial.to_field(), &sim.final_shape.to_field())?;
                        let stats = SampleStats {
                            retries: attempt,
                            steps: sim.steps,
                            converged: sim.converged,
                            escalations: sim.escalations,
                        };
                        return Ok((pair, stats));
                    }
                    Err(e) => last_err = Some(e),
                }
            }
            Err(Error::GenerationFailed {
                retries: RETRY_BUDGET,
                reason: format!("sample {i}: {}", last_err.map(|e| e.to_string()).unwrap_or_default()),
            })
        })
        .collect();
    let (samples, stats): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok((Dataset::new(samples, test_count, seed)?, stats))
}

// ---------------------------------------------------------------------------
// Masks

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaskConfig {
    pub size: usize,
    pub min_edits: usize,
    pub max_edits: usize,
    /// Inclusive range of edit rectangle sides in pixels.
    pub edit_size: [usize; 2],
    /// Distance of the outer control points from the square edges.
    pub outer_offset: usize,
}

impl MaskConfig {
    pub fn for_size(size: usize) -> Self {
        Self {
            size,
            min_edits: 2,
            max_edits: 6,
            edit_size: [2, (size / 4).max(2)],
            outer_offset: (size / 16).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_edits > self.max_edits {
            return Err(Error::param("min_edits", "exceeds max_edits"));
        }
        if self.edit_size[0] == 0 || self.edit_size[0] > self.edit_size[1] {
            return Err(Error::param("edit_size", "need 1 <= lo <= hi"));
        }
        if self.size < 8 {
            return Err(Error::param("size", "masks need at least 8 pixels"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditKind {
    Add,
    Remove,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskEdit {
    pub point: usize,
    pub kind: EditKind,
    pub width: usize,
    pub height: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSpec {
    pub size: usize,
    pub edits: Vec<MaskEdit>,
}

/// Index of the first outer control point in [`control_points`].
pub const OUTER_POINTS_START: usize = 8;

/// Control points of the left square as `(row, col)` in doubled coordinates
/// (so midpoints stay integral): 4 corners, 4 edge midpoints, 4 points
/// `outer_offset` outside each edge midpoint. The right square's points are
/// their mirror images and are reached through symmetry.
pub fn control_points(cfg: &MaskConfig) -> Vec<(i64, i64)> {
    let (_, corners, side) = two_squares(cfg.size);
    let (r0, c0) = (2 * corners[0].0 as i64, 2 * corners[0].1 as i64);
    let s = 2 * side as i64;
    let o = 2 * cfg.outer_offset as i64;
    let (rm, cm) = (r0 + s / 2, c0 + s / 2);
    vec![
        (r0, c0),
        (r0, c0 + s),
        (r0 + s, c0),
        (r0 + s, c0 + s),
        (r0, cm),
        (r0 + s, cm),
        (rm, c0),
        (rm, c0 + s),
        (r0 - o, cm),
        (r0 + s + o, cm),
        (rm, c0 - o),
        (rm, c0 + s + o),
    ]
}

impl MaskSpec {
    /// Base squares with every edit applied at its control point and at the
    /// point's images under both mirror axes. An edit covers exactly
    /// `width x height` pixels whose centres lie in `[p − w, p + w)` (doubled
    /// coordinates); mirroring is done per pixel so the mask stays exact.
    pub fn render(&self, cfg: &MaskConfig) -> BinaryImage {
        let n = self.size;
        let (mut img, _, _) = two_squares(n);
        let points = control_points(cfg);
        let span = |p: i64, half: i64| -> Vec<usize> {
            (0..n).filter(|&i| (p - half..p + half).contains(&(2 * i as i64 + 1))).collect()
        };
        for e in &self.edits {
            let (pr, pc) = points[e.point];
            let rows = span(pr, e.height as i64);
            let cols = span(pc, e.width as i64);
            let value = e.kind == EditKind::Add;
            for &r in &rows {
                for &c in &cols {
                    for (rr, cc) in [(r, c), (n - 1 - r, c), (r, n - 1 - c), (n - 1 - r, n - 1 - c)] {
                        img.set(rr, cc, value);
                    }
                }
            }
        }
        img
    }
}

/// Random edit list: count uniform in `[min_edits, max_edits]`; each
/// rectangle keeps its aspect ratio within [0.5, 2].
pub fn sample_mask_spec(seed: u64, cfg: &MaskConfig) -> Result<MaskSpec> {
    cfg.validate()?;
    Ok(draw_mask_spec(&mut ChaCha8Rng::seed_from_u64(seed), cfg))
}

fn draw_mask_spec(rng: &mut impl Rng, cfg: &MaskConfig) -> MaskSpec {
    let n_points = control_points(cfg).len();
    let count = rng.random_range(cfg.min_edits..=cfg.max_edits);
    let [lo, hi] = cfg.edit_size;
    let edits = (0..count)
        .map(|_| {
            let width = rng.random_range(lo..=hi);
            let h_lo = lo.max(width.div_ceil(2));
            let h_hi = hi.min(2 * width);
            let height = rng.random_range(h_lo..=h_hi);
            let point = rng.random_range(0..n_points);
            // Outer points sit in void where removal would be a no-op.
            let remove = point < OUTER_POINTS_START && rng.random_bool(0.5);
            MaskEdit {
                point,
                kind: if remove { EditKind::Remove } else { EditKind::Add },
                width,
                height,
            }
        })
        .collect();
    MaskSpec {
        size: cfg.size,
        edits,
    }
}

pub fn sample_mask(seed: u64, cfg: &MaskConfig) -> Result<BinaryImage> {
    Ok(sample_mask_spec(seed, cfg)?.render(cfg))
}

/// Mask pairs `(mask | litho_forward(mask))`.
pub fn generate_litho_dataset(
    n: usize,
    seed: u64,
    litho: &LithoParams,
    cfg: &MaskConfig,
    test_count: usize,
) -> Result<(Dataset, Vec<MaskSpec>)> {
    cfg.validate()?;
    litho.validate()?;
    let results: Vec<Result<(PairedSample, MaskSpec)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let spec = draw_mask_spec(&mut sample_rng(seed, i, 0), cfg);
            let mask = spec.render(cfg).to_field();
            let printed = litho_forward(&mask, litho)?.to_field();
            Ok((concat_pair(&mask, &printed)?, spec))
        })
        .collect();
    let (samples, specs): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok((Dataset::new(samples, test_count, seed)?, specs))
}

/// Fraction of samples whose initial half repeats an earlier one.
pub fn duplicate_fraction(ds: &Dataset) -> f64 {
    let mut seen = HashSet::new();
    let mut dups = 0;
    for s in &ds.samples {
        let key: Vec<u8> = s.initial().data().iter().map(|&v| (v > 0.5) as u8).collect();
        if !seen.insert(key) {
            dups += 1;
        }
    }
    dups as f64 / ds.len().max(1) as f64
}
