//! Minimal dense/conv network kernel with exact manual gradients.
//!
//! The adversary's function approximators are small enough that a
//! hand-written forward/backward pass in 64-bit floats beats pulling in an
//! autodiff framework: gradients are exact, checkable against finite
//! differences, and bit-reproducible.
//!
//! Layout conventions:
//! - Linear weights are row-major `(out_dim, in_dim)`: `w[i * in_dim + j]`.
//! - Grid activations are channel-major `[c][h][w]`, flattened.
//! - Conv kernels are `[out_c][in_c][k][k]`, flattened; valid padding,
//!   cross-correlation (no kernel flip).

pub mod adam;
pub mod dist;
pub mod snapshot;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Activation shape flowing between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Flat { dim: usize },
    Grid { c: usize, h: usize, w: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat { dim } => dim,
            Shape::Grid { c, h, w } => c * h * w,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            Shape::Flat { dim } => write!(f, "flat({dim})"),
            Shape::Grid { c, h, w } => write!(f, "grid({c}x{h}x{w})"),
        }
    }
}

/// Parameter-free layer description; weights live in [`Layer`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear { in_dim: usize, out_dim: usize },
    Relu,
    Conv2d { out_c: usize, kernel: usize, stride: usize },
    Flatten,
}

impl LayerSpec {
    /// Output shape of this layer for a given input shape.
    pub fn out_shape(&self, input: Shape) -> Result<Shape> {
        match *self {
            LayerSpec::Linear { in_dim, out_dim } => {
                if input.len() != in_dim {
                    return Err(Error::Dimension(format!(
                        "linear expects input dim {in_dim}, got {input}"
                    )));
                }
                Ok(Shape::Flat { dim: out_dim })
            }
            LayerSpec::Relu => Ok(input),
            LayerSpec::Conv2d {
                out_c,
                kernel,
                stride,
            } => {
                let Shape::Grid { h, w, .. } = input else {
                    return Err(Error::Dimension(format!(
                        "conv2d expects a grid input, got {input}"
                    )));
                };
                if kernel > h || kernel > w {
                    return Err(Error::Dimension(format!(
                        "conv2d kernel {kernel} larger than input {h}x{w}"
                    )));
                }
                let oh = (h - kernel) / stride + 1;
                let ow = (w - kernel) / stride + 1;
                if oh == 0 || ow == 0 {
                    return Err(Error::Dimension(format!(
                        "conv2d yields non-positive spatial size for input {h}x{w}"
                    )));
                }
                Ok(Shape::Grid {
                    c: out_c,
                    h: oh,
                    w: ow,
                })
            }
            LayerSpec::Flatten => Ok(Shape::Flat { dim: input.len() }),
        }
    }

    fn param_counts(&self, input: Shape) -> (usize, usize) {
        match *self {
            LayerSpec::Linear { in_dim, out_dim } => (out_dim * in_dim, out_dim),
            LayerSpec::Conv2d { out_c, kernel, .. } => {
                let in_c = match input {
                    Shape::Grid { c, .. } => c,
                    Shape::Flat { .. } => 0,
                };
                (out_c * in_c * kernel * kernel, out_c)
            }
            LayerSpec::Relu | LayerSpec::Flatten => (0, 0),
        }
    }
}

/// One layer: descriptor plus its weights (empty for relu/flatten).
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub spec: LayerSpec,
    pub in_shape: Shape,
    pub out_shape: Shape,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_shape.len() {
            return Err(Error::Dimension(format!(
                "layer {:?} expects {} inputs, got {}",
                self.spec,
                self.in_shape.len(),
                x.len()
            )));
        }
        match self.spec {
            LayerSpec::Linear { in_dim, out_dim } => {
                let mut y = vec![0.0; out_dim];
                for i in 0..out_dim {
                    let row = &self.w[i * in_dim..(i + 1) * in_dim];
                    let mut acc = self.b[i];
                    for j in 0..in_dim {
                        acc += row[j] * x[j];
                    }
                    y[i] = acc;
                }
                Ok(y)
            }
            LayerSpec::Relu => Ok(x.iter().map(|&v| v.max(0.0)).collect()),
            LayerSpec::Conv2d { kernel, stride, .. } => {
                conv2d_forward(x, self.in_shape, &self.w, &self.b, self.out_shape, kernel, stride)
            }
            LayerSpec::Flatten => Ok(x.to_vec()),
        }
    }

    /// Returns `(d_input, d_w, d_b)` for upstream gradient `d_out`.
    fn backward(&self, x: &[f64], d_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        if x.len() != self.in_shape.len() || d_out.len() != self.out_shape.len() {
            return Err(Error::Contract(format!(
                "stale or mismatched cache for layer {:?}",
                self.spec
            )));
        }
        match self.spec {
            LayerSpec::Linear { in_dim, out_dim } => {
                let mut dw = vec![0.0; out_dim * in_dim];
                let mut db = vec![0.0; out_dim];
                let mut dx = vec![0.0; in_dim];
                for i in 0..out_dim {
                    let g = d_out[i];
                    db[i] = g;
                    let row = &self.w[i * in_dim..(i + 1) * in_dim];
                    let drow = &mut dw[i * in_dim..(i + 1) * in_dim];
                    for j in 0..in_dim {
                        drow[j] = g * x[j];
                        dx[j] += g * row[j];
                    }
                }
                Ok((dx, dw, db))
            }
            LayerSpec::Relu => {
                let dx = x
                    .iter()
                    .zip(d_out)
                    .map(|(&xi, &g)| if xi > 0.0 { g } else { 0.0 })
                    .collect();
                Ok((dx, Vec::new(), Vec::new()))
            }
            LayerSpec::Conv2d { kernel, stride, .. } => conv2d_backward(
                x,
                self.in_shape,
                &self.w,
                self.out_shape,
                d_out,
                kernel,
                stride,
            ),
            LayerSpec::Flatten => Ok((d_out.to_vec(), Vec::new(), Vec::new())),
        }
    }
}

/// Valid-padding cross-correlation over channel-major grids.
pub fn conv2d_forward(
    x: &[f64],
    in_shape: Shape,
    w: &[f64],
    b: &[f64],
    out_shape: Shape,
    kernel: usize,
    stride: usize,
) -> Result<Vec<f64>> {
    let Shape::Grid {
        c: in_c,
        h: in_h,
        w: in_w,
    } = in_shape
    else {
        return Err(Error::Dimension("conv2d input must be a grid".into()));
    };
    let Shape::Grid {
        c: out_c,
        h: oh,
        w: ow,
    } = out_shape
    else {
        return Err(Error::Dimension("conv2d output must be a grid".into()));
    };
    let mut out = vec![0.0; out_c * oh * ow];
    for f in 0..out_c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = b[f];
                for c in 0..in_c {
                    for ky in 0..kernel {
                        let iy = oy * stride + ky;
                        for kx in 0..kernel {
                            let ix = ox * stride + kx;
                            acc += x[(c * in_h + iy) * in_w + ix]
                                * w[((f * in_c + c) * kernel + ky) * kernel + kx];
                        }
                    }
                }
                out[(f * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Ok(out)
}

fn conv2d_backward(
    x: &[f64],
    in_shape: Shape,
    w: &[f64],
    out_shape: Shape,
    d_out: &[f64],
    kernel: usize,
    stride: usize,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let Shape::Grid {
        c: in_c,
        h: in_h,
        w: in_w,
    } = in_shape
    else {
        return Err(Error::Dimension("conv2d input must be a grid".into()));
    };
    let Shape::Grid {
        c: out_c,
        h: oh,
        w: ow,
    } = out_shape
    else {
        return Err(Error::Dimension("conv2d output must be a grid".into()));
    };
    let mut dx = vec![0.0; x.len()];
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; out_c];
    for f in 0..out_c {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = d_out[(f * oh + oy) * ow + ox];
                db[f] += g;
                for c in 0..in_c {
                    for ky in 0..kernel {
                        let iy = oy * stride + ky;
                        for kx in 0..kernel {
                            let ix = ox * stride + kx;
                            let xi = (c * in_h + iy) * in_w + ix;
                            let wi = ((f * in_c + c) * kernel + ky) * kernel + kx;
                            dw[wi] += g * x[xi];
                            dx[xi] += g * w[wi];
                        }
                    }
                }
            }
        }
    }
    Ok((dx, dw, db))
}

/// A feed-forward stack of layers with a fixed input shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input: Shape,
    pub layers: Vec<Layer>,
}

impl Network {
    pub fn new(input: Shape, specs: &[LayerSpec]) -> Result<Self> {
        let mut layers = Vec::with_capacity(specs.len());
        let mut shape = input;
        for spec in specs {
            let out = spec.out_shape(shape)?;
            let (nw, nb) = spec.param_counts(shape);
            layers.push(Layer {
                spec: *spec,
                in_shape: shape,
                out_shape: out,
                w: vec![0.0; nw],
                b: vec![0.0; nb],
            });
            shape = out;
        }
        Ok(Network { input, layers })
    }

    pub fn output_shape(&self) -> Shape {
        self.layers.last().map(|l| l.out_shape).unwrap_or(self.input)
    }

    /// Forward pass; the cache holds each layer's input for backprop.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if x.len() != self.input.len() {
            return Err(Error::Dimension(format!(
                "network expects input {}, got {} values",
                self.input,
                x.len()
            )));
        }
        let mut cache = Vec::with_capacity(self.layers.len());
        let mut act = x.to_vec();
        for (idx, layer) in self.layers.iter().enumerate() {
            let next = layer.forward(&act)?;
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "non-finite activation after layer {idx} ({:?})",
                    layer.spec
                )));
            }
            cache.push(act);
            act = next;
        }
        Ok((act, cache))
    }

    /// Backprop `d_out` through the stack. Returns per-layer `(dw, db)` and
    /// the gradient wrt the network input.
    pub fn backward(
        &self,
        cache: &[Vec<f64>],
        d_out: &[f64],
    ) -> Result<(Vec<(Vec<f64>, Vec<f64>)>, Vec<f64>)> {
        if cache.len() != self.layers.len() {
            return Err(Error::Contract(
                "cache does not match network depth".into(),
            ));
        }
        let mut grads = vec![(Vec::new(), Vec::new()); self.layers.len()];
        let mut d = d_out.to_vec();
        for (idx, layer) in self.layers.iter().enumerate().rev() {
            let (dx, dw, db) = layer.backward(&cache[idx], &d)?;
            grads[idx] = (dw, db);
            d = dx;
        }
        Ok((grads, d))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }

    /// Parameters in layer order, weights then bias, into `out`.
    pub fn append_flat(&self, out: &mut Vec<f64>) {
        for l in &self.layers {
            out.extend_from_slice(&l.w);
            out.extend_from_slice(&l.b);
        }
    }

    pub fn load_flat(&mut self, flat: &[f64]) -> Result<usize> {
        let mut pos = 0;
        for l in &mut self.layers {
            let n = l.w.len() + l.b.len();
            if pos + n > flat.len() {
                return Err(Error::Format("parameter array too short".into()));
            }
            let wn = l.w.len();
            l.w.copy_from_slice(&flat[pos..pos + wn]);
            l.b.copy_from_slice(&flat[pos + wn..pos + n]);
            pos += n;
        }
        Ok(pos)
    }
}

/// Gradients congruent to an [`ActorCriticNet`].
#[derive(Debug, Clone)]
pub struct ActorCriticGrads {
    pub extractor: Vec<(Vec<f64>, Vec<f64>)>,
    pub actor_w: Vec<f64>,
    pub actor_b: Vec<f64>,
    pub critic_w: Vec<f64>,
    pub critic_b: Vec<f64>,
    /// Empty when the critic shares the actor's extractor.
    pub critic_extractor: Vec<(Vec<f64>, Vec<f64>)>,
}

fn zeros_like_network(net: &Network) -> Vec<(Vec<f64>, Vec<f64>)> {
    net.layers
        .iter()
        .map(|l| (vec![0.0; l.w.len()], vec![0.0; l.b.len()]))
        .collect()
}

fn accumulate_layers(acc: &mut [(Vec<f64>, Vec<f64>)], other: &[(Vec<f64>, Vec<f64>)]) {
    for ((w, b), (ow, ob)) in acc.iter_mut().zip(other) {
        for (a, x) in w.iter_mut().zip(ow) {
            *a += x;
        }
        for (a, x) in b.iter_mut().zip(ob) {
            *a += x;
        }
    }
}

impl ActorCriticGrads {
    pub fn zeros_like(net: &ActorCriticNet) -> Self {
        ActorCriticGrads {
            extractor: zeros_like_network(&net.extractor),
            actor_w: vec![0.0; net.actor.w.len()],
            actor_b: vec![0.0; net.actor.b.len()],
            critic_w: vec![0.0; net.critic.w.len()],
            critic_b: vec![0.0; net.critic.b.len()],
            critic_extractor: net
                .critic_extractor
                .as_ref()
                .map(zeros_like_network)
                .unwrap_or_default(),
        }
    }

    pub fn accumulate(&mut self, other: &ActorCriticGrads) {
        accumulate_layers(&mut self.extractor, &other.extractor);
        for (a, x) in self.actor_w.iter_mut().zip(&other.actor_w) {
            *a += x;
        }
        for (a, x) in self.actor_b.iter_mut().zip(&other.actor_b) {
            *a += x;
        }
        for (a, x) in self.critic_w.iter_mut().zip(&other.critic_w) {
            *a += x;
        }
        for (a, x) in self.critic_b.iter_mut().zip(&other.critic_b) {
            *a += x;
        }
        accumulate_layers(&mut self.critic_extractor, &other.critic_extractor);
    }

    pub fn scale(&mut self, s: f64) {
        self.for_each_mut(|v| *v *= s);
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in &self.extractor {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out.extend_from_slice(&self.actor_w);
        out.extend_from_slice(&self.actor_b);
        out.extend_from_slice(&self.critic_w);
        out.extend_from_slice(&self.critic_b);
        for (w, b) in &self.critic_extractor {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    fn for_each_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for (w, b) in &mut self.extractor {
            w.iter_mut().for_each(&mut f);
            b.iter_mut().for_each(&mut f);
        }
        self.actor_w.iter_mut().for_each(&mut f);
        self.actor_b.iter_mut().for_each(&mut f);
        self.critic_w.iter_mut().for_each(&mut f);
        self.critic_b.iter_mut().for_each(&mut f);
        for (w, b) in &mut self.critic_extractor {
            w.iter_mut().for_each(&mut f);
            b.iter_mut().for_each(&mut f);
        }
    }
}

/// Activation record from [`ActorCriticNet::forward`]; consumed by backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    extractor: Vec<Vec<f64>>,
    features: Vec<f64>,
    /// Cache and features of the separate critic tower, when present.
    critic: Option<(Vec<Vec<f64>>, Vec<f64>)>,
}

/// Actor and critic over feature extractors. MLP policies use separate
/// towers so huge value-regression gradients cannot distort the actor's
/// features; conv policies share one extractor, where feature reuse
/// matters more than isolation.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorCriticNet {
    pub extractor: Network,
    pub actor: Layer,
    pub critic: Layer,
    pub critic_extractor: Option<Network>,
}

impl ActorCriticNet {
    /// Shared-extractor construction.
    pub fn from_parts(extractor: Network, n_actions: usize) -> Result<Self> {
        Self::from_towers(extractor, None, n_actions)
    }

    pub fn from_towers(
        extractor: Network,
        critic_extractor: Option<Network>,
        n_actions: usize,
    ) -> Result<Self> {
        let feat = extractor.output_shape().len();
        let critic_feat = critic_extractor
            .as_ref()
            .map(|n| n.output_shape().len())
            .unwrap_or(feat);
        let actor = make_linear(feat, n_actions);
        let critic = make_linear(critic_feat, 1);
        Ok(ActorCriticNet {
            extractor,
            actor,
            critic,
            critic_extractor,
        })
    }

    /// Default policy: separate `obs_dim -> 64 -> 64` ReLU towers for the
    /// actor and the critic.
    pub fn new_mlp(obs_dim: usize, n_actions: usize, rng: &mut SeedStream) -> Result<Self> {
        let specs = [
            LayerSpec::Linear {
                in_dim: obs_dim,
                out_dim: 64,
            },
            LayerSpec::Relu,
            LayerSpec::Linear {
                in_dim: 64,
                out_dim: 64,
            },
            LayerSpec::Relu,
        ];
        let extractor = Network::new(Shape::Flat { dim: obs_dim }, &specs)?;
        let critic_extractor = Network::new(Shape::Flat { dim: obs_dim }, &specs)?;
        let mut net = Self::from_towers(extractor, Some(critic_extractor), n_actions)?;
        net.init_weights(rng);
        Ok(net)
    }

    /// Full-scale conv extractor: 32x8x8/4, 64x4x4/2, 64x3x3/1, FC 512.
    pub fn new_nature_cnn(
        c: usize,
        h: usize,
        w: usize,
        n_actions: usize,
        rng: &mut SeedStream,
    ) -> Result<Self> {
        Self::new_cnn(c, h, w, n_actions, &NATURE_CONV_CHAIN, rng)
    }

    /// Desk-scale conv extractor for the 32x32 raster: 4x4/2, 3x3/2, 3x3/1.
    pub fn new_desk_cnn(
        c: usize,
        h: usize,
        w: usize,
        n_actions: usize,
        rng: &mut SeedStream,
    ) -> Result<Self> {
        Self::new_cnn(c, h, w, n_actions, &DESK_CONV_CHAIN, rng)
    }

    fn new_cnn(
        c: usize,
        h: usize,
        w: usize,
        n_actions: usize,
        chain: &[(usize, usize, usize)],
        rng: &mut SeedStream,
    ) -> Result<Self> {
        let input = Shape::Grid { c, h, w };
        let mut specs = Vec::new();
        let mut shape = input;
        for &(out_c, kernel, stride) in chain {
            let spec = LayerSpec::Conv2d {
                out_c,
                kernel,
                stride,
            };
            shape = spec.out_shape(shape)?;
            specs.push(spec);
            specs.push(LayerSpec::Relu);
        }
        specs.push(LayerSpec::Flatten);
        specs.push(LayerSpec::Linear {
            in_dim: shape.len(),
            out_dim: CNN_FEATURE_DIM,
        });
        specs.push(LayerSpec::Relu);
        let extractor = Network::new(input, &specs)?;
        let mut net = Self::from_parts(extractor, n_actions)?;
        net.init_weights(rng);
        Ok(net)
    }

    /// Orthogonal-style init: gain sqrt(2) for hidden layers, 0.01 for the
    /// actor head (near-uniform initial policy), 1.0 for the critic head.
    pub fn init_weights(&mut self, rng: &mut SeedStream) {
        for layer in &mut self.extractor.layers {
            init_layer(layer, std::f64::consts::SQRT_2, rng);
        }
        if let Some(tower) = &mut self.critic_extractor {
            for layer in &mut tower.layers {
                init_layer(layer, std::f64::consts::SQRT_2, rng);
            }
        }
        init_layer(&mut self.actor, 0.01, rng);
        init_layer(&mut self.critic, 1.0, rng);
    }

    pub fn n_actions(&self) -> usize {
        self.actor.out_shape.len()
    }

    pub fn input_shape(&self) -> Shape {
        self.extractor.input
    }

    pub fn feature_dim(&self) -> usize {
        self.extractor.output_shape().len()
    }

    /// Forward pass: logits, state value, and the activation record.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, f64, ForwardCache)> {
        let (features, extractor_cache) = self.extractor.forward(obs)?;
        let logits = self.actor.forward(&features)?;
        let (value, critic_cache) = match &self.critic_extractor {
            Some(tower) => {
                let (critic_features, cache) = tower.forward(obs)?;
                let value = self.critic.forward(&critic_features)?[0];
                (value, Some((cache, critic_features)))
            }
            None => (self.critic.forward(&features)?[0], None),
        };
        if logits.iter().any(|v| !v.is_finite()) || !value.is_finite() {
            return Err(Error::Numeric("non-finite head output".into()));
        }
        Ok((
            logits,
            value,
            ForwardCache {
                extractor: extractor_cache,
                features,
                critic: critic_cache,
            },
        ))
    }

    /// Exact gradients of `<d_logits, logits> + d_value * value` wrt all
    /// parameters, given the cache of the matching forward call.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        d_logits: &[f64],
        d_value: f64,
    ) -> Result<ActorCriticGrads> {
        if d_logits.len() != self.n_actions() || cache.features.len() != self.feature_dim() {
            return Err(Error::Contract(
                "cache or gradient shape does not match the network".into(),
            ));
        }
        let (dx_actor, actor_w, actor_b) = self.actor.backward(&cache.features, d_logits)?;
        match (&self.critic_extractor, &cache.critic) {
            (Some(tower), Some((critic_cache, critic_features))) => {
                let (d_critic_features, critic_w, critic_b) =
                    self.critic.backward(critic_features, &[d_value])?;
                let (extractor, _) = self.extractor.backward(&cache.extractor, &dx_actor)?;
                let (critic_extractor, _) = tower.backward(critic_cache, &d_critic_features)?;
                Ok(ActorCriticGrads {
                    extractor,
                    actor_w,
                    actor_b,
                    critic_w,
                    critic_b,
                    critic_extractor,
                })
            }
            (None, None) => {
                let (dx_critic, critic_w, critic_b) =
                    self.critic.backward(&cache.features, &[d_value])?;
                let d_features: Vec<f64> = dx_actor
                    .iter()
                    .zip(&dx_critic)
                    .map(|(a, c)| a + c)
                    .collect();
                let (extractor, _) = self.extractor.backward(&cache.extractor, &d_features)?;
                Ok(ActorCriticGrads {
                    extractor,
                    actor_w,
                    actor_b,
                    critic_w,
                    critic_b,
                    critic_extractor: Vec::new(),
                })
            }
            _ => Err(Error::Contract(
                "cache tower layout does not match the network".into(),
            )),
        }
    }

    pub fn param_count(&self) -> usize {
        self.extractor.param_count()
            + self.actor.w.len()
            + self.actor.b.len()
            + self.critic.w.len()
            + self.critic.b.len()
            + self
                .critic_extractor
                .as_ref()
                .map(|n| n.param_count())
                .unwrap_or(0)
    }

    /// All parameters as one flat vector (extractor, actor head, critic
    /// head, then the critic tower when separate).
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        self.extractor.append_flat(&mut out);
        out.extend_from_slice(&self.actor.w);
        out.extend_from_slice(&self.actor.b);
        out.extend_from_slice(&self.critic.w);
        out.extend_from_slice(&self.critic.b);
        if let Some(tower) = &self.critic_extractor {
            tower.append_flat(&mut out);
        }
        out
    }

    pub fn apply_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Contract(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                flat.len()
            )));
        }
        let mut pos = self.extractor.load_flat(flat)?;
        for part in [
            &mut self.actor.w,
            &mut self.actor.b,
            &mut self.critic.w,
            &mut self.critic.b,
        ] {
            let n = part.len();
            part.copy_from_slice(&flat[pos..pos + n]);
            pos += n;
        }
        if let Some(tower) = &mut self.critic_extractor {
            pos += tower.load_flat(&flat[pos..])?;
        }
        debug_assert_eq!(pos, flat.len());
        Ok(())
    }
}

fn make_linear(in_dim: usize, out_dim: usize) -> Layer {
    Layer {
        spec: LayerSpec::Linear { in_dim, out_dim },
        in_shape: Shape::Flat { dim: in_dim },
        out_shape: Shape::Flat { dim: out_dim },
        w: vec![0.0; out_dim * in_dim],
        b: vec![0.0; out_dim],
    }
}

fn init_layer(layer: &mut Layer, gain: f64, rng: &mut SeedStream) {
    let (rows, cols) = match layer.spec {
        LayerSpec::Linear { in_dim, out_dim } => (out_dim, in_dim),
        LayerSpec::Conv2d { out_c, .. } => {
            let fan_in = layer.w.len() / out_c;
            (out_c, fan_in)
        }
        _ => return,
    };
    let w = orthogonal_matrix(rows, cols, gain, rng);
    layer.w.copy_from_slice(&w);
    layer.b.iter_mut().for_each(|b| *b = 0.0);
}

/// Row-major `rows x cols` matrix with orthonormal rows (or columns when
/// `rows > cols`), scaled by `gain`. Gram-Schmidt on gaussian draws.
fn orthogonal_matrix(rows: usize, cols: usize, gain: f64, rng: &mut SeedStream) -> Vec<f64> {
    let transpose = rows > cols;
    let (r, c) = if transpose { (cols, rows) } else { (rows, cols) };
    let mut m: Vec<Vec<f64>> = (0..r)
        .map(|_| (0..c).map(|_| rng.next_normal()).collect())
        .collect();
    for i in 0..r {
        for j in 0..i {
            let prev = m[j].clone();
            let dot: f64 = m[i].iter().zip(&prev).map(|(a, b)| a * b).sum();
            for (v, p) in m[i].iter_mut().zip(&prev) {
                *v -= dot * p;
            }
        }
        let norm = m[i].iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        for v in m[i].iter_mut() {
            *v *= gain / norm;
        }
    }
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[i * cols + j] = if transpose { m[j][i] } else { m[i][j] };
        }
    }
    out
}

pub const CNN_FEATURE_DIM: usize = 512;

/// `(filters, kernel, stride)` per conv layer.
pub const NATURE_CONV_CHAIN: [(usize, usize, usize); 3] = [(32, 8, 4), (64, 4, 2), (64, 3, 1)];
pub const DESK_CONV_CHAIN: [(usize, usize, usize); 3] = [(32, 4, 2), (64, 3, 2), (64, 3, 1)];

/// Per-layer dimensions of a conv-extractor actor-critic build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CnnShapeReport {
    /// `(c, h, w)` after each conv layer.
    pub conv: Vec<(usize, usize, usize)>,
    pub flatten: usize,
    pub fc: usize,
    pub actor: usize,
    pub critic: usize,
}

/// Shape arithmetic for the full-scale conv chain (8x8/4, 4x4/2, 3x3/1).
pub fn nature_cnn_shapes(c: usize, h: usize, w: usize, n_actions: usize) -> Result<CnnShapeReport> {
    cnn_shapes(c, h, w, n_actions, &NATURE_CONV_CHAIN)
}

/// Shape arithmetic for the desk-scale conv chain (4x4/2, 3x3/2, 3x3/1).
pub fn desk_cnn_shapes(c: usize, h: usize, w: usize, n_actions: usize) -> Result<CnnShapeReport> {
    cnn_shapes(c, h, w, n_actions, &DESK_CONV_CHAIN)
}

pub fn cnn_shapes(
    c: usize,
    h: usize,
    w: usize,
    n_actions: usize,
    chain: &[(usize, usize, usize)],
) -> Result<CnnShapeReport> {
    if c == 0 || h == 0 || w == 0 {
        return Err(Error::Dimension("input dims must be positive".into()));
    }
    let mut shape = Shape::Grid { c, h, w };
    let mut conv = Vec::new();
    for (idx, &(out_c, kernel, stride)) in chain.iter().enumerate() {
        let spec = LayerSpec::Conv2d {
            out_c,
            kernel,
            stride,
        };
        shape = spec.out_shape(shape).map_err(|e| {
            Error::Dimension(format!("conv layer {} infeasible: {e}", idx + 1))
        })?;
        if let Shape::Grid { c, h, w } = shape {
            conv.push((c, h, w));
        }
    }
    Ok(CnnShapeReport {
        conv,
        flatten: shape.len(),
        fc: CNN_FEATURE_DIM,
        actor: n_actions,
        critic: 1,
    })
}
