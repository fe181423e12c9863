//! Binary pixel accuracy and the design → smooth → simulate → compare round trip.

use ndarray::Array2;
use rayon::prelude::*;

use crate::datagen::{simulate_binary, SmoothingConfig};
use crate::error::{Error, Result};
use crate::field::{binarize, BinaryImage, Field2D, PairedSample};
use crate::nn::{Real, VaeModel};
use crate::phase::PhaseParams;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleAccuracy {
    pub id: usize,
    pub matched: usize,
    pub total: usize,
}

impl SampleAccuracy {
    pub fn accuracy(&self) -> f64 {
        self.matched as f64 / self.total as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyReport {
    /// Pooled over every pixel of every sample: `matched / total`.
    pub accuracy: f64,
    pub matched: usize,
    pub total: usize,
    pub per_sample: Vec<SampleAccuracy>,
}

impl AccuracyReport {
    pub fn from_samples(per_sample: Vec<SampleAccuracy>) -> Self {
        let matched = per_sample.iter().map(|s| s.matched).sum();
        let total: usize = per_sample.iter().map(|s| s.total).sum();
        Self {
            accuracy: if total == 0 { 0.0 } else { matched as f64 / total as f64 },
            matched,
            total,
            per_sample,
        }
    }

    /// Unweighted mean of per-sample accuracies.
    pub fn mean_accuracy(&self) -> f64 {
        if self.per_sample.is_empty() {
            return 0.0;
        }
        self.per_sample.iter().map(|s| s.accuracy()).sum::<f64>() / self.per_sample.len() as f64
    }
}

fn count_matches(pred: &BinaryImage, target: &BinaryImage) -> Result<usize> {
    if !pred.same_shape(target) {
        return Err(Error::dims(target.shape_str(), pred.shape_str()));
    }
    Ok(pred.data().iter().zip(target.data()).filter(|(a, b)| a == b).count())
}

pub fn binary_accuracy(pred: &BinaryImage, target: &BinaryImage) -> Result<AccuracyReport> {
    let matched = count_matches(pred, target)?;
    Ok(AccuracyReport::from_samples(vec![SampleAccuracy {
        id: 0,
        matched,
        total: target.len(),
    }]))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrip {
    pub report: AccuracyReport,
    pub simulated: BinaryImage,
    pub steps: usize,
    pub converged: bool,
}

/// Smooth the design, evolve it to steady state, binarize and compare.
pub fn roundtrip_evaluate(
    design: &BinaryImage,
    target: &BinaryImage,
    params: &PhaseParams,
    smoothing: &SmoothingConfig,
) -> Result<RoundTrip> {
    if !design.same_shape(target) {
        return Err(Error::dims(target.shape_str(), design.shape_str()));
    }
    let sim = simulate_binary(design, params, smoothing)?;
    let report = binary_accuracy(&sim.final_shape, target)?;
    Ok(RoundTrip {
        report,
        simulated: sim.final_shape,
        steps: sim.steps,
        converged: sim.converged,
    })
}

/// Round trips over many (design, target) pairs in parallel. Per-sample ids
/// are the slice positions; a solver failure is reported with its id.
pub fn batch_roundtrip(
    cases: &[(BinaryImage, BinaryImage)],
    params: &PhaseParams,
    smoothing: &SmoothingConfig,
) -> Result<(AccuracyReport, Vec<RoundTrip>)> {
    let trips: Vec<RoundTrip> = cases
        .par_iter()
        .enumerate()
        .map(|(id, (d, t))| {
            roundtrip_evaluate(d, t, params, smoothing).map_err(|e| Error::Sample {
                id,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;
    let per_sample = trips
        .iter()
        .enumerate()
        .map(|(id, t)| SampleAccuracy {
            id,
            matched: t.report.matched,
            total: t.report.total,
        })
        .collect();
    Ok((AccuracyReport::from_samples(per_sample), trips))
}

/// Binary accuracy of `z = μ(x)` reconstructions over whole combined images.
pub fn reconstruction_accuracy<'a, T: Real>(
    model: &VaeModel<T>,
    samples: impl IntoIterator<Item = &'a PairedSample>,
    threshold: f64,
) -> Result<AccuracyReport> {
    let samples: Vec<&PairedSample> = samples.into_iter().collect();
    let Some(first) = samples.first() else {
        return Ok(AccuracyReport::from_samples(Vec::new()));
    };
    let (w, h) = (first.combined().width(), first.combined().height());
    let n = w * h;
    let mut per_sample = Vec::with_capacity(samples.len());
    for (chunk_idx, chunk) in samples.chunks(256).enumerate() {
        let mut x = Array2::<T>::zeros((chunk.len(), n));
        for (r, s) in chunk.iter().enumerate() {
            let c = s.combined();
            if c.width() != w || c.height() != h {
                return Err(Error::dims(format!("{h}x{w}"), c.shape_str()));
            }
            for (dst, &v) in x.row_mut(r).iter_mut().zip(c.data()) {
                *dst = T::from_f64(v).unwrap();
            }
        }
        let out = model.reconstruct(x.view())?;
        for (r, s) in chunk.iter().enumerate() {
            let pred = Field2D::new(w, h, out.row(r).iter().map(|v| v.to_f64().unwrap()).collect())?;
            let matched = count_matches(&binarize(&pred, threshold), &binarize(s.combined(), threshold))?;
            per_sample.push(SampleAccuracy {
                id: chunk_idx * 256 + r,
                matched,
                total: n,
            });
        }
    }
    Ok(AccuracyReport::from_samples(per_sample))
}
