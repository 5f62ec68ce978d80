//! Feed-forward encoders, classifier heads and the mean-encoder update.
//!
//! Rows are samples. Every hidden layer is `act(x W^T + b)`; the last layer is
//! linear and its output is L2-normalized per row, so features live on the
//! unit sphere.

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::rng::substream;

/// Smallest row norm the normalization layer divides by.
const NORM_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// One affine layer; `weight` is `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros_like(&self) -> Self {
        Self { weight: Array2::zeros(self.weight.raw_dim()), bias: Array1::zeros(self.bias.raw_dim()) }
    }

    fn same_shape(&self, other: &Layer) -> bool {
        self.weight.dim() == other.weight.dim() && self.bias.dim() == other.bias.dim()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub layers: Vec<Layer>,
    pub activation: Activation,
}

/// Per-layer inputs and pre-activations of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layer_inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
    norms: Array1<f64>,
    features: Array2<f64>,
}

impl ForwardCache {
    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    /// Output of the last linear layer, before normalization.
    pub fn raw_output(&self) -> &Array2<f64> {
        self.pre_activations.last().expect("encoder has at least one layer")
    }
}

/// Gradient of a scalar loss with respect to every encoder parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrads {
    pub layers: Vec<Layer>,
}

impl EncoderGrads {
    pub fn add_assign(&mut self, other: &EncoderGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.layers.iter().all(|l| l.weight.iter().chain(l.bias.iter()).all(|v| *v == 0.0))
    }
}

impl EncoderParams {
    /// He-style Gaussian init; the last layer uses unit-gain scaling.
    pub fn random(sizes: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config("architecture needs an input size and at least one layer".into()));
        }
        if sizes.contains(&0) {
            return Err(Error::Config("architecture layer sizes must be positive".into()));
        }
        let last = sizes.len() - 2;
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let gain = if i == last { 1.0 } else { 2.0 };
                let std = (gain / fan_in as f64).sqrt();
                let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || {
                    std * rng.sample::<f64, _>(StandardNormal)
                });
                Layer { weight, bias: Array1::zeros(fan_out) }
            })
            .collect();
        Ok(Self { layers, activation })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weight.nrows()).unwrap_or(0)
    }

    pub fn same_shape(&self, other: &EncoderParams) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| a.same_shape(b))
    }

    pub fn num_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Forward pass returning unit-norm rows plus everything backprop needs.
    pub fn encode(&self, batch: ArrayView2<f64>) -> Result<(Array2<f64>, ForwardCache)> {
        if batch.ncols() != self.input_dim() {
            return Err(shape_err("encoder input columns", self.input_dim(), batch.ncols()));
        }
        let last = self.layers.len() - 1;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut current = batch.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = current.dot(&layer.weight.t()) + &layer.bias;
            let next = if i == last { z.clone() } else { z.mapv(|v| self.activation.apply(v)) };
            layer_inputs.push(current);
            pre_activations.push(z);
            current = next;
        }
        let norms: Array1<f64> =
            current.rows().into_iter().map(|r| r.dot(&r).sqrt().max(NORM_FLOOR)).collect();
        let mut features = current;
        for (mut row, n) in features.rows_mut().into_iter().zip(norms.iter()) {
            row.mapv_inplace(|v| v / n);
        }
        let cache = ForwardCache { layer_inputs, pre_activations, norms, features: features.clone() };
        Ok((features, cache))
    }

    /// Forward pass without keeping the cache.
    pub fn features(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.encode(batch).map(|(f, _)| f)
    }

    /// Exact gradient of the composition, normalization layer included.
    pub fn backward(&self, cache: &ForwardCache, grad_features: ArrayView2<f64>) -> Result<EncoderGrads> {
        if grad_features.dim() != cache.features.dim() {
            return Err(shape_err("feature gradient", cache.features.dim(), grad_features.dim()));
        }
        if cache.pre_activations.len() != self.layers.len() {
            return Err(shape_err("cache depth", self.layers.len(), cache.pre_activations.len()));
        }
        // d(z/|z|) = (g - y (y.g)) / |z|
        let mut grad_z = grad_features.to_owned();
        for ((mut g, y), n) in grad_z.rows_mut().into_iter().zip(cache.features.rows()).zip(cache.norms.iter()) {
            let proj = g.dot(&y);
            Zip::from(&mut g).and(&y).for_each(|gv, &yv| *gv = (*gv - yv * proj) / n);
        }

        let mut layers: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for i in (0..self.layers.len()).rev() {
            layers[i].weight = grad_z.t().dot(&cache.layer_inputs[i]);
            layers[i].bias = grad_z.sum_axis(Axis(0));
            if i > 0 {
                let mut grad_a = grad_z.dot(&self.layers[i].weight);
                Zip::from(&mut grad_a)
                    .and(&cache.pre_activations[i - 1])
                    .for_each(|g, &z| *g *= self.activation.derivative(z));
                grad_z = grad_a;
            }
        }
        Ok(EncoderGrads { layers })
    }

    /// Plain gradient-descent step.
    pub fn descend(&mut self, grads: &EncoderGrads, lr: f64) {
        for (p, g) in self.layers.iter_mut().zip(&grads.layers) {
            p.weight.scaled_add(-lr, &g.weight);
            p.bias.scaled_add(-lr, &g.bias);
        }
    }

    pub fn flat_parameters(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied()).collect()
    }
}

/// Exponential-moving-average copy of an encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanEncoderParams(pub EncoderParams);

impl MeanEncoderParams {
    pub fn copy_of(encoder: &EncoderParams) -> Self {
        Self(encoder.clone())
    }

    pub fn params(&self) -> &EncoderParams {
        &self.0
    }

    pub fn features(&self, batch: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.0.features(batch)
    }
}

/// `mean <- alpha * mean + (1 - alpha) * current`, elementwise.
pub fn ema_update(mean: &MeanEncoderParams, current: &EncoderParams, alpha: f64) -> Result<MeanEncoderParams> {
    let mut out = mean.clone();
    ema_update_in_place(&mut out, current, alpha)?;
    Ok(out)
}

pub fn ema_update_in_place(mean: &mut MeanEncoderParams, current: &EncoderParams, alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("EMA momentum must lie in [0, 1], got {alpha}")));
    }
    if !mean.0.same_shape(current) {
        return Err(Error::Shape("mean encoder and encoder shapes differ".into()));
    }
    let keep = 1.0 - alpha;
    for (m, c) in mean.0.layers.iter_mut().zip(&current.layers) {
        Zip::from(&mut m.weight).and(&c.weight).for_each(|m, &c| *m = alpha * *m + keep * c);
        Zip::from(&mut m.bias).and(&c.bias).for_each(|m, &c| *m = alpha * *m + keep * c);
    }
    Ok(())
}

/// Linear softmax head: `weight` is `classes x feature_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGrads {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Head {
    pub fn num_classes(&self) -> usize {
        self.weight.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn logits(&self, features: ArrayView2<f64>) -> Result<Array2<f64>> {
        if features.ncols() != self.feature_dim() {
            return Err(shape_err("classifier feature columns", self.feature_dim(), features.ncols()));
        }
        Ok(features.dot(&self.weight.t()) + &self.bias)
    }

    /// Returns parameter gradients and the gradient flowing back into the features.
    pub fn backward(&self, features: ArrayView2<f64>, grad_logits: ArrayView2<f64>) -> Result<(HeadGrads, Array2<f64>)> {
        if grad_logits.dim() != (features.nrows(), self.num_classes()) {
            return Err(shape_err("logit gradient", (features.nrows(), self.num_classes()), grad_logits.dim()));
        }
        let grads = HeadGrads { weight: grad_logits.t().dot(&features), bias: grad_logits.sum_axis(Axis(0)) };
        Ok((grads, grad_logits.dot(&self.weight)))
    }

    pub fn descend(&mut self, grads: &HeadGrads, lr: f64) {
        self.weight.scaled_add(-lr, &grads.weight);
        self.bias.scaled_add(-lr, &grads.bias);
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: ArrayView2<f64>) -> Array2<f64> {
    let mut out = logits.to_owned();
    for mut row in out.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn classify(head: &Head, features: ArrayView2<f64>) -> Result<Array2<f64>> {
    Ok(softmax_rows(head.logits(features)?.view()))
}

/// A fixed head over source identities plus a head over the current epoch's
/// pseudo classes, rebuilt whenever the clustering changes.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub source: Head,
    pub target: Option<Head>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualBranchModel {
    pub f1: EncoderParams,
    pub f2: EncoderParams,
    pub mean_f1: MeanEncoderParams,
    pub mean_f2: MeanEncoderParams,
    pub c1: Classifier,
    pub c2: Classifier,
}

/// Independent random encoders per branch, mean encoders copied from them.
pub fn init_model(arch: &[usize], activation: Activation, num_source_classes: usize, seed: u64) -> Result<DualBranchModel> {
    if num_source_classes == 0 {
        return Err(Error::Config("need at least one source class".into()));
    }
    let f1 = EncoderParams::random(arch, activation, &mut substream(seed, "init/f1", 0))?;
    let f2 = EncoderParams::random(arch, activation, &mut substream(seed, "init/f2", 0))?;
    let dim = f1.output_dim();
    let head = |stream: &str| {
        let mut rng = substream(seed, stream, 0);
        let std = (1.0 / dim as f64).sqrt();
        Head {
            weight: Array2::from_shape_simple_fn((num_source_classes, dim), || std * rng.sample::<f64, _>(StandardNormal)),
            bias: Array1::zeros(num_source_classes),
        }
    };
    Ok(DualBranchModel {
        mean_f1: MeanEncoderParams::copy_of(&f1),
        mean_f2: MeanEncoderParams::copy_of(&f2),
        f1,
        f2,
        c1: Classifier { source: head("init/c1"), target: None },
        c2: Classifier { source: head("init/c2"), target: None },
    })
}

impl DualBranchModel {
    pub fn feature_dim(&self) -> usize {
        self.f1.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.f1.input_dim()
    }

    /// Re-seeds both target heads from per-branch cluster centroids
    /// (one row per cluster); source heads are untouched.
    pub fn rebuild_target_classifier(&mut self, centroids_f1: &Array2<f64>, centroids_f2: &Array2<f64>) -> Result<()> {
        if centroids_f1.nrows() == 0 || centroids_f2.nrows() == 0 {
            return Err(Error::EmptyClustering("cannot build a target head from zero centroids".into()));
        }
        if centroids_f1.nrows() != centroids_f2.nrows() {
            return Err(shape_err("centroid count per branch", centroids_f1.nrows(), centroids_f2.nrows()));
        }
        let dim = self.feature_dim();
        for c in [centroids_f1, centroids_f2] {
            if c.ncols() != dim {
                return Err(shape_err("centroid dimension", dim, c.ncols()));
            }
        }
        let k = centroids_f1.nrows();
        self.c1.target = Some(Head { weight: centroids_f1.clone(), bias: Array1::zeros(k) });
        self.c2.target = Some(Head { weight: centroids_f2.clone(), bias: Array1::zeros(k) });
        Ok(())
    }
}
