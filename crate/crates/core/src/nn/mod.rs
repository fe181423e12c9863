//! Dense variational autoencoder with hand-written backpropagation.
//!
//! Everything is generic over [`Real`] so the same code paths run at 32-bit
//! for training and at 64-bit for gradient checks. Batches are row-major
//! `batch x features` matrices.

mod adam;
mod checkpoint;
mod train;
mod vae;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use train::{train, TrainConfig, TrainReport};
pub use vae::{
    kl_divergence, reparameterize, vae_loss, LossGrads, LossReport, TrainPass, VaeArch, VaeGrads, VaeModel,
    BCE_CLIP,
};

use ndarray::{Array1, Array2, ArrayView2, Axis, NdFloat};
use num_traits::FromPrimitive;
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

pub trait Real: NdFloat + FromPrimitive {}
impl Real for f32 {}
impl Real for f64 {}

/// Stacks equally shaped fields as rows of a `batch x pixels` matrix.
pub fn field_matrix<'a, T: Real>(fields: impl IntoIterator<Item = &'a crate::field::Field2D>) -> Result<Array2<T>> {
    let fields: Vec<&crate::field::Field2D> = fields.into_iter().collect();
    let n = fields.first().map(|f| f.len()).unwrap_or(0);
    let mut m = Array2::<T>::zeros((fields.len(), n));
    for (mut row, f) in m.rows_mut().into_iter().zip(&fields) {
        if f.len() != n {
            return Err(Error::dims(format!("{n} pixels"), f.len()));
        }
        for (dst, &v) in row.iter_mut().zip(f.data()) {
            *dst = lit(v);
        }
    }
    Ok(m)
}

#[inline]
pub(crate) fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).unwrap()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Elu,
    Sigmoid,
}

impl Activation {
    pub fn tag(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Elu => 1,
            Activation::Sigmoid => 2,
        }
    }

    pub fn from_tag(tag: u32) -> Option<Self> {
        match tag {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Elu),
            2 => Some(Activation::Sigmoid),
            _ => None,
        }
    }

    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Elu => elu(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative from the pre-activation `x` and the output `y`.
    #[inline]
    pub fn derivative<T: Real>(self, x: T, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Elu => {
                if x >= T::zero() {
                    T::one()
                } else {
                    y + T::one()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
        }
    }
}

/// `x` for x ≥ 0, `eˣ − 1` otherwise.
#[inline]
pub fn elu<T: Real>(x: T) -> T {
    if x >= T::zero() {
        x
    } else {
        x.exp_m1()
    }
}

#[inline]
pub fn elu_derivative<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one()
    } else {
        x.exp()
    }
}

/// Logistic function. Very negative inputs are floored where `eˣ` would
/// underflow, so the result stays strictly positive.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let x = x.max(T::min_positive_value().ln());
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Fully connected layer `y = act(W x + b)` with `W` stored `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer<T: Real> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
    pub activation: Activation,
}

/// Forward intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct LayerCache<T: Real> {
    pub pre: Array2<T>,
    pub out: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad<T: Real> {
    pub weights: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> LayerGrad<T> {
    pub fn zeros_like(layer: &DenseLayer<T>) -> Self {
        Self {
            weights: Array2::zeros(layer.weights.raw_dim()),
            bias: Array1::zeros(layer.bias.raw_dim()),
        }
    }
}

impl<T: Real> DenseLayer<T> {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
        let weights = Array2::from_shape_fn((outputs, inputs), |_| lit::<T>(dist.sample(rng)));
        Self {
            weights,
            bias: Array1::zeros(outputs),
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }

    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn check_input(&self, x: &ArrayView2<T>) -> Result<()> {
        if x.ncols() != self.inputs() {
            return Err(Error::dims(
                format!("{} input features", self.inputs()),
                format!("{}", x.ncols()),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, x: ArrayView2<T>) -> Result<LayerCache<T>> {
        self.check_input(&x)?;
        let pre = x.dot(&self.weights.t()) + &self.bias;
        let act = self.activation;
        let out = pre.mapv(|v| act.apply(v));
        Ok(LayerCache { pre, out })
    }

    /// Gradients of the weights and bias, and optionally of the input, given
    /// the gradient with respect to the layer output.
    pub fn backward(
        &self,
        x: ArrayView2<T>,
        cache: &LayerCache<T>,
        grad_out: ArrayView2<T>,
        need_input_grad: bool,
    ) -> (LayerGrad<T>, Option<Array2<T>>) {
        let act = self.activation;
        let mut grad_pre = grad_out.to_owned();
        ndarray::Zip::from(&mut grad_pre)
            .and(&cache.pre)
            .and(&cache.out)
            .for_each(|g, &p, &o| *g = *g * act.derivative(p, o));
        self.backward_from_pre(x, grad_pre.view(), need_input_grad)
    }

    /// As [`DenseLayer::backward`] with the gradient already taken through
    /// the activation.
    pub fn backward_from_pre(
        &self,
        x: ArrayView2<T>,
        grad_pre: ArrayView2<T>,
        need_input_grad: bool,
    ) -> (LayerGrad<T>, Option<Array2<T>>) {
        let grad = LayerGrad {
            weights: grad_pre.t().dot(&x),
            bias: grad_pre.sum_axis(Axis(0)),
        };
        let grad_in = need_input_grad.then(|| grad_pre.dot(&self.weights));
        (grad, grad_in)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(self.bias.iter()).all(|v| v.is_finite())
    }
}
