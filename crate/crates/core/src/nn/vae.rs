use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use super::{lit, Activation, DenseLayer, LayerCache, LayerGrad, Real};
use crate::error::{Error, Result};

/// Probabilities are clipped to `[BCE_CLIP, 1 − BCE_CLIP]` inside the log.
pub const BCE_CLIP: f64 = 1e-7;

/// Layer widths. The decoder mirrors the encoder's hidden widths.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VaeArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl VaeArch {
    /// Four hidden layers of 512 on each side.
    pub fn standard(input_dim: usize, latent_dim: usize) -> Self {
        Self {
            input_dim,
            hidden: vec![512; 4],
            latent_dim,
        }
    }

    fn dense_shapes(&self) -> Vec<(usize, usize, Activation)> {
        let mut shapes = Vec::new();
        let mut prev = self.input_dim;
        for &h in &self.hidden {
            shapes.push((prev, h, Activation::Elu));
            prev = h;
        }
        shapes.push((prev, self.latent_dim, Activation::Identity));
        shapes.push((prev, self.latent_dim, Activation::Identity));
        prev = self.latent_dim;
        for &h in self.hidden.iter().rev() {
            shapes.push((prev, h, Activation::Elu));
            prev = h;
        }
        shapes.push((prev, self.input_dim, Activation::Sigmoid));
        shapes
    }

    /// Parameters in the encoder (hidden layers plus both heads) and decoder.
    pub fn parameter_counts(&self) -> (usize, usize) {
        let shapes = self.dense_shapes();
        let n_enc = self.hidden.len() + 2;
        let count = |s: &[(usize, usize, Activation)]| s.iter().map(|(i, o, _)| (i + 1) * o).sum();
        (count(&shapes[..n_enc]), count(&shapes[n_enc..]))
    }
}

/// Layers in checkpoint order: encoder hidden, μ head, log-variance head,
/// decoder hidden, output.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel<T: Real> {
    arch: VaeArch,
    layers: Vec<DenseLayer<T>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub reconstruction: f64,
    pub kl: f64,
}

/// Gradients of the batch loss with respect to the three heads.
#[derive(Debug, Clone)]
pub struct LossGrads<T: Real> {
    /// With respect to the output pre-activation (logits).
    pub logits: Array2<T>,
    pub mu: Array2<T>,
    pub logvar: Array2<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeGrads<T: Real> {
    pub layers: Vec<LayerGrad<T>>,
}

impl<T: Real> VaeGrads<T> {
    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|g| g.weights.iter().chain(g.bias.iter()).all(|v| v.is_finite()))
    }
}

/// Everything a training step needs from the forward pass.
#[derive(Debug, Clone)]
pub struct TrainPass<T: Real> {
    pub encoder: Vec<LayerCache<T>>,
    pub mu: Array2<T>,
    pub logvar: Array2<T>,
    pub noise: Array2<T>,
    pub z: Array2<T>,
    pub decoder: Vec<LayerCache<T>>,
    pub output: Array2<T>,
}

/// `z = μ + exp(logvar / 2) ⊙ noise`.
pub fn reparameterize<T: Real>(mu: ArrayView2<T>, logvar: ArrayView2<T>, noise: ArrayView2<T>) -> Array2<T> {
    let half: T = lit(0.5);
    let mut z = mu.to_owned();
    ndarray::Zip::from(&mut z)
        .and(logvar)
        .and(noise)
        .for_each(|z, &lv, &e| *z += (lv * half).exp() * e);
    z
}

/// Batch-averaged KL divergence of `N(μ, exp(logvar))` from `N(0, I)`.
pub fn kl_divergence<T: Real>(mu: ArrayView2<T>, logvar: ArrayView2<T>) -> f64 {
    let batch = mu.nrows().max(1) as f64;
    let mut acc = 0.0;
    for (&m, &lv) in mu.iter().zip(logvar.iter()) {
        let (m, lv) = (m.to_f64().unwrap(), lv.to_f64().unwrap());
        acc += -0.5 * (1.0 + lv - m * m - lv.exp());
    }
    acc / batch
}

/// Binary cross-entropy summed over pixels plus KL, both averaged over the
/// batch. Accumulation is in f64 regardless of `T`.
pub fn vae_loss<T: Real>(
    output: ArrayView2<T>,
    target: ArrayView2<T>,
    mu: ArrayView2<T>,
    logvar: ArrayView2<T>,
) -> LossReport {
    let batch = output.nrows().max(1) as f64;
    let mut bce = 0.0;
    for (&p, &x) in output.iter().zip(target.iter()) {
        let p = p.to_f64().unwrap().clamp(BCE_CLIP, 1.0 - BCE_CLIP);
        let x = x.to_f64().unwrap();
        bce -= x * p.ln() + (1.0 - x) * (1.0 - p).ln();
    }
    let reconstruction = bce / batch;
    let kl = kl_divergence(mu, logvar);
    LossReport {
        total: reconstruction + kl,
        reconstruction,
        kl,
    }
}

impl<T: Real> VaeModel<T> {
    pub fn new(arch: VaeArch, rng: &mut impl Rng) -> Self {
        let layers = arch
            .dense_shapes()
            .into_iter()
            .map(|(i, o, a)| DenseLayer::glorot(i, o, a, rng))
            .collect();
        Self { arch, layers }
    }

    /// Glorot initialization from a ChaCha stream seeded with `seed`.
    pub fn from_seed(arch: VaeArch, seed: u64) -> Self {
        use rand::SeedableRng;
        Self::new(arch, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn zeros(arch: VaeArch) -> Self {
        let layers = arch
            .dense_shapes()
            .into_iter()
            .map(|(i, o, a)| DenseLayer::zeros(i, o, a))
            .collect();
        Self { arch, layers }
    }

    /// Rebuilds a model from layers in checkpoint order, checking that they
    /// chain into a valid architecture.
    pub fn from_layers(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        let bad = |why: &str| Error::MalformedHeader(format!("layer plan: {why}"));
        if layers.len() < 3 || (layers.len() - 3) % 2 != 0 {
            return Err(bad("layer count must be 2h + 3"));
        }
        let h = (layers.len() - 3) / 2;
        let input_dim = layers[0].inputs();
        let hidden: Vec<usize> = layers[..h].iter().map(|l| l.outputs()).collect();
        let latent_dim = layers[h].outputs();
        let arch = VaeArch {
            input_dim,
            hidden,
            latent_dim,
        };
        let expect = arch.dense_shapes();
        for (l, (i, o, a)) in layers.iter().zip(&expect) {
            if l.inputs() != *i || l.outputs() != *o || l.activation != *a || l.bias.len() != *o {
                return Err(bad("shapes do not chain"));
            }
        }
        Ok(Self { arch, layers })
    }

    pub fn arch(&self) -> &VaeArch {
        &self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.arch.latent_dim
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.parameter_count()).sum()
    }

    fn depth(&self) -> usize {
        self.arch.hidden.len()
    }

    fn mu_index(&self) -> usize {
        self.depth()
    }

    fn logvar_index(&self) -> usize {
        self.depth() + 1
    }

    fn decoder_range(&self) -> std::ops::Range<usize> {
        self.depth() + 2..self.layers.len()
    }

    fn check_cols(&self, x: &ArrayView2<T>, expected: usize, what: &str) -> Result<()> {
        if x.ncols() != expected {
            return Err(Error::dims(format!("{expected} {what}"), x.ncols()));
        }
        Ok(())
    }

    fn run_encoder(&self, x: ArrayView2<T>) -> Result<(Vec<LayerCache<T>>, Array2<T>, Array2<T>)> {
        self.check_cols(&x, self.input_dim(), "input features")?;
        let mut caches: Vec<LayerCache<T>> = Vec::with_capacity(self.depth());
        for layer in &self.layers[..self.depth()] {
            let input = caches.last().map(|c| c.out.view()).unwrap_or(x);
            let c = layer.forward(input)?;
            caches.push(c);
        }
        let h = caches.last().map(|c| c.out.view()).unwrap_or(x);
        let mu = self.layers[self.mu_index()].forward(h)?.out;
        let logvar = self.layers[self.logvar_index()].forward(h)?.out;
        Ok((caches, mu, logvar))
    }

    fn run_decoder(&self, z: ArrayView2<T>) -> Result<Vec<LayerCache<T>>> {
        self.check_cols(&z, self.latent_dim(), "latent features")?;
        let mut caches: Vec<LayerCache<T>> = Vec::with_capacity(self.depth() + 1);
        for layer in &self.layers[self.decoder_range()] {
            let input = caches.last().map(|c| c.out.view()).unwrap_or(z);
            let c = layer.forward(input)?;
            caches.push(c);
        }
        Ok(caches)
    }

    /// Posterior mean and log-variance for each row of `x`.
    pub fn encode(&self, x: ArrayView2<T>) -> Result<(Array2<T>, Array2<T>)> {
        let (_, mu, logvar) = self.run_encoder(x)?;
        Ok((mu, logvar))
    }

    /// `G(z)` for each row of `z`.
    pub fn decode(&self, z: ArrayView2<T>) -> Result<Array2<T>> {
        Ok(self.run_decoder(z)?.pop().expect("decoder has an output layer").out)
    }

    /// Decode `z = μ(x)`, no sampling noise.
    pub fn reconstruct(&self, x: ArrayView2<T>) -> Result<Array2<T>> {
        let (mu, _) = self.encode(x)?;
        self.decode(mu.view())
    }

    pub fn decode_one(&self, z: ArrayView1<T>) -> Result<Array1<T>> {
        let z2 = z.insert_axis(Axis(0));
        Ok(self.decode(z2)?.index_axis_move(Axis(0), 0))
    }

    /// `G(z)` and the vector-Jacobian product `(∂G/∂z)ᵀ v`.
    pub fn decode_vjp(&self, z: ArrayView1<T>, mut v: impl FnMut(&Array1<T>) -> Array1<T>) -> Result<(Array1<T>, Array1<T>)> {
        let z2 = z.insert_axis(Axis(0));
        let caches = self.run_decoder(z2)?;
        let out = caches.last().unwrap().out.row(0).to_owned();
        let g_out = v(&out).insert_axis(Axis(0));
        let mut grad = g_out;
        let dec = self.decoder_range();
        for (k, idx) in dec.clone().enumerate().rev() {
            let input = if k == 0 { z2 } else { caches[k - 1].out.view() };
            let (_, gin) = self.layers[idx].backward(input, &caches[k], grad.view(), true);
            grad = gin.unwrap();
        }
        Ok((out, grad.index_axis_move(Axis(0), 0)))
    }

    pub fn forward_train(&self, x: ArrayView2<T>, noise: ArrayView2<T>) -> Result<TrainPass<T>> {
        let (encoder, mu, logvar) = self.run_encoder(x)?;
        if noise.dim() != mu.dim() {
            return Err(Error::dims(format!("{:?} noise", mu.dim()), format!("{:?}", noise.dim())));
        }
        let z = reparameterize(mu.view(), logvar.view(), noise);
        let decoder = self.run_decoder(z.view())?;
        let output = decoder.last().unwrap().out.clone();
        Ok(TrainPass {
            encoder,
            mu,
            logvar,
            noise: noise.to_owned(),
            z,
            decoder,
            output,
        })
    }

    /// Loss value and head gradients for a training pass. The output
    /// gradient is taken through the sigmoid directly, `(p − x) / batch`.
    pub fn loss_and_grads(&self, pass: &TrainPass<T>, x: ArrayView2<T>) -> (LossReport, LossGrads<T>) {
        let report = vae_loss(pass.output.view(), x, pass.mu.view(), pass.logvar.view());
        let inv_b = T::one() / lit::<T>(x.nrows().max(1) as f64);
        let half: T = lit(0.5);
        let logits = (&pass.output - &x).mapv(|v| v * inv_b);
        let mu = pass.mu.mapv(|m| m * inv_b);
        let logvar = pass.logvar.mapv(|lv| -half * (T::one() - lv.exp()) * inv_b);
        (report, LossGrads { logits, mu, logvar })
    }

    pub fn backward(&self, x: ArrayView2<T>, pass: &TrainPass<T>, heads: &LossGrads<T>) -> VaeGrads<T> {
        let n = self.layers.len();
        let mut grads: Vec<Option<LayerGrad<T>>> = vec![None; n];
        let dec = self.decoder_range();
        let n_dec = dec.len();

        // Output layer: gradient supplied at the logits.
        let out_input = if n_dec >= 2 { pass.decoder[n_dec - 2].out.view() } else { pass.z.view() };
        let (g, gin) = self.layers[n - 1].backward_from_pre(out_input, heads.logits.view(), true);
        grads[n - 1] = Some(g);
        let mut grad = gin.unwrap();
        for k in (0..n_dec - 1).rev() {
            let idx = dec.start + k;
            let input = if k == 0 { pass.z.view() } else { pass.decoder[k - 1].out.view() };
            let (g, gin) = self.layers[idx].backward(input, &pass.decoder[k], grad.view(), true);
            grads[idx] = Some(g);
            grad = gin.unwrap();
        }

        // Through the reparameterization.
        let half: T = lit(0.5);
        let mut g_mu = heads.mu.clone();
        g_mu += &grad;
        let mut g_lv = heads.logvar.clone();
        ndarray::Zip::from(&mut g_lv)
            .and(&grad)
            .and(&pass.logvar)
            .and(&pass.noise)
            .for_each(|g, &dz, &lv, &e| *g += dz * half * (lv * half).exp() * e);

        let depth = self.depth();
        let h = pass.encoder.last().map(|c| c.out.view()).unwrap_or(x);
        let (gm, gin_m) = self.layers[self.mu_index()].backward_from_pre(h, g_mu.view(), depth > 0);
        let (gl, gin_l) = self.layers[self.logvar_index()].backward_from_pre(h, g_lv.view(), depth > 0);
        grads[self.mu_index()] = Some(gm);
        grads[self.logvar_index()] = Some(gl);
        if depth > 0 {
            let mut grad = gin_m.unwrap() + gin_l.unwrap();
            for k in (0..depth).rev() {
                let input = if k == 0 { x } else { pass.encoder[k - 1].out.view() };
                let (g, gin) = self.layers[k].backward(input, &pass.encoder[k], grad.view(), k > 0);
                grads[k] = Some(g);
                if let Some(gin) = gin {
                    grad = gin;
                }
            }
        }
        VaeGrads {
            layers: grads.into_iter().map(|g| g.expect("every layer visited")).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.is_finite())
    }

    /// Same network at another precision.
    pub fn cast<U: Real>(&self) -> VaeModel<U> {
        let conv = |v: &T| U::from_f64(v.to_f64().unwrap()).unwrap();
        VaeModel {
            arch: self.arch.clone(),
            layers: self
                .layers
                .iter()
                .map(|l| DenseLayer {
                    weights: l.weights.map(conv),
                    bias: l.bias.map(conv),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}
