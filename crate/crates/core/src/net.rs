//! Feed-forward prior network mapping a covariate vector to Beta
//! pseudo-parameters `(a', b')`.
//!
//! Hidden layers use ReLU; the two linear outputs pass through soft-plus and
//! a small positive floor so both parameters are strictly positive.
//! Gradients are computed by hand-written reverse mode over a mini-batch and
//! averaged over the batch.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layout tag written into every serialized parameter set.
pub const NETWORK_FORMAT: &str = "fdrkit-net/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub input_dim: usize,
    pub hidden_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub output_floor: f64,
    pub init_seed: u64,
}

impl NetworkConfig {
    pub fn new(input_dim: usize, hidden_sizes: Vec<usize>) -> Self {
        NetworkConfig {
            input_dim,
            hidden_sizes,
            activation: Activation::Relu,
            output_floor: 1e-3,
            init_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::Validation("network input_dim must be >= 1".into()));
        }
        if self.hidden_sizes.is_empty() || self.hidden_sizes.contains(&0) {
            return Err(Error::Validation(
                "hidden_sizes must be nonempty with positive widths".into(),
            ));
        }
        if !(self.output_floor > 0.0) {
            return Err(Error::Validation("output_floor must be positive".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every layer, output layer last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = vec![self.input_dim];
        dims.extend(&self.hidden_sizes);
        dims.push(2);
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn num_params(&self) -> usize {
        self.layer_shapes().iter().map(|(i, o)| i * o + o).sum()
    }
}

/// One affine layer; `weights` is `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Weights and biases of every layer. Also used to hold gradients and
/// momentum buffers, which share the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub layers: Vec<Layer>,
}

impl NetworkParams {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        NetworkParams {
            layers: cfg
                .layer_shapes()
                .into_iter()
                .map(|(i, o)| Layer {
                    weights: Array2::zeros((i, o)),
                    bias: Array1::zeros(o),
                })
                .collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        NetworkParams {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Layer-major flat view: each layer's weights (row-major) then its bias.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            out.extend(l.weights.iter());
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "flat vector has {} entries, network has {}",
                flat.len(),
                self.num_params()
            )));
        }
        let mut it = flat.iter();
        for l in &mut self.layers {
            for (dst, src) in l.weights.iter_mut().chain(l.bias.iter_mut()).zip(&mut it) {
                *dst = *src;
            }
        }
        Ok(())
    }

    /// Sum of squared weights; biases excluded.
    pub fn weight_norm_sq(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().map(|w| w * w).sum::<f64>())
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()))
    }

    fn check_shapes(&self, cfg: &NetworkConfig) -> Result<()> {
        let shapes = cfg.layer_shapes();
        let ok = shapes.len() == self.layers.len()
            && shapes
                .iter()
                .zip(&self.layers)
                .all(|(&(i, o), l)| l.weights.dim() == (i, o) && l.bias.len() == o);
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("network parameters do not match config".into()))
        }
    }
}

/// Uniform(−1/√fan_in, 1/√fan_in) weights, zero biases.
pub fn init_network(cfg: &NetworkConfig, seed: u64) -> Result<NetworkParams> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = NetworkParams::zeros(cfg);
    for l in &mut params.layers {
        let bound = 1.0 / (l.weights.nrows() as f64).sqrt();
        l.weights
            .iter_mut()
            .for_each(|w| *w = rng.random_range(-bound..bound));
    }
    Ok(params)
}

/// `ln(1 + e^u)` without overflow.
#[inline]
pub fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

/// Intermediate values kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    /// Input followed by every hidden activation.
    activations: Vec<Array2<f64>>,
    /// Pre-activations of every layer (the last is the 2-column output logit).
    pre: Vec<Array2<f64>>,
    /// `(a', b')` per row.
    pub outputs: Array2<f64>,
}

impl ForwardPass {
    pub fn a(&self) -> ArrayView1<'_, f64> {
        self.outputs.column(0)
    }

    pub fn b(&self) -> ArrayView1<'_, f64> {
        self.outputs.column(1)
    }
}

/// Batched forward pass over the rows of `x`.
pub fn forward_batch(
    params: &NetworkParams,
    cfg: &NetworkConfig,
    x: ArrayView2<'_, f64>,
) -> Result<ForwardPass> {
    params.check_shapes(cfg)?;
    if x.ncols() != cfg.input_dim {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            x.ncols(),
            cfg.input_dim
        )));
    }
    let last = params.layers.len() - 1;
    let mut activations = Vec::with_capacity(params.layers.len());
    let mut pre = Vec::with_capacity(params.layers.len());
    let mut current = x.to_owned();
    for (idx, layer) in params.layers.iter().enumerate() {
        let z = current.dot(&layer.weights) + &layer.bias;
        activations.push(current);
        if idx == last {
            pre.push(z);
            break;
        }
        current = z.mapv(|v| v.max(0.0));
        pre.push(z);
    }
    let floor = cfg.output_floor;
    let outputs = pre[last].mapv(|u| softplus(u) + floor);
    Ok(ForwardPass {
        activations,
        pre,
        outputs,
    })
}

/// `(a', b')` for a single covariate vector.
pub fn forward(params: &NetworkParams, cfg: &NetworkConfig, x: &[f64]) -> Result<(f64, f64)> {
    let row = ArrayView2::from_shape((1, x.len()), x).expect("1×len view of a slice");
    let pass = forward_batch(params, cfg, row)?;
    Ok((pass.outputs[[0, 0]], pass.outputs[[0, 1]]))
}

/// Reverse-mode gradient of `mean_i L_i` given `dL_i/da'_i`, `dL_i/db'_i`.
pub fn backward(
    params: &NetworkParams,
    cfg: &NetworkConfig,
    x: ArrayView2<'_, f64>,
    grad_a: &[f64],
    grad_b: &[f64],
) -> Result<NetworkParams> {
    let pass = forward_batch(params, cfg, x)?;
    backward_from(params, &pass, grad_a, grad_b)
}

/// As [`backward`], reusing a forward pass computed on the same batch.
pub fn backward_from(
    params: &NetworkParams,
    pass: &ForwardPass,
    grad_a: &[f64],
    grad_b: &[f64],
) -> Result<NetworkParams> {
    let n = pass.outputs.nrows();
    if grad_a.len() != n || grad_b.len() != n {
        return Err(Error::Shape(format!(
            "upstream gradients have lengths {}/{}, batch has {n} rows",
            grad_a.len(),
            grad_b.len()
        )));
    }
    if let Some(i) = grad_a.iter().chain(grad_b).position(|g| !g.is_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite upstream gradient at position {}",
            i % n.max(1)
        )));
    }

    let last = params.layers.len() - 1;
    let scale = 1.0 / n as f64;
    let logits = &pass.pre[last];
    let mut delta = Array2::from_shape_fn((n, 2), |(i, j)| {
        let g = if j == 0 { grad_a[i] } else { grad_b[i] };
        g * sigmoid(logits[[i, j]]) * scale
    });

    let mut grads = params.zeros_like();
    for idx in (0..=last).rev() {
        let input = &pass.activations[idx];
        grads.layers[idx].weights = input.t().dot(&delta);
        grads.layers[idx].bias = delta.sum_axis(Axis(0));
        if idx == 0 {
            break;
        }
        let mut upstream = delta.dot(&params.layers[idx].weights.t());
        ndarray::Zip::from(&mut upstream)
            .and(&pass.pre[idx - 1])
            .for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        delta = upstream;
    }
    Ok(grads)
}

/// Above this many parameters only a seeded random subset is checked.
const GRAD_CHECK_FULL_LIMIT: usize = 10_000;
const GRAD_CHECK_SUBSET: usize = 1_000;

/// Compares analytic gradients with central differences of step `h` and
/// returns the largest relative error, using the denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
///
/// `loss_and_grad` must be deterministic; it is called once with a gradient
/// request at `theta` and twice per checked coordinate.
pub fn grad_check<F>(theta: &[f64], mut loss_and_grad: F, h: f64, seed: u64) -> Result<f64>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Domain(format!("finite-difference step must be positive, got {h}")));
    }
    let (_, analytic) = loss_and_grad(theta)?;
    if analytic.len() != theta.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {} parameters",
            analytic.len(),
            theta.len()
        )));
    }
    let coords: Vec<usize> = if theta.len() > GRAD_CHECK_FULL_LIMIT {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, theta.len(), GRAD_CHECK_SUBSET).into_vec();
        picked.sort_unstable();
        picked
    } else {
        (0..theta.len()).collect()
    };

    let mut probe = theta.to_vec();
    let mut worst: f64 = 0.0;
    for i in coords {
        probe[i] = theta[i] + h;
        let (plus, _) = loss_and_grad(&probe)?;
        probe[i] = theta[i] - h;
        let (minus, _) = loss_and_grad(&probe)?;
        probe[i] = theta[i];
        let numeric = (plus - minus) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[derive(Serialize, Deserialize)]
struct LayerRepr {
    fan_in: usize,
    fan_out: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

/// Serialized network: config plus layer-major arrays (weights row-major,
/// `fan_in × fan_out`), tagged with [`NETWORK_FORMAT`].
#[derive(Serialize, Deserialize)]
struct NetworkRepr {
    format: String,
    config: NetworkConfig,
    layers: Vec<LayerRepr>,
}

/// A network together with its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkRepr", into = "NetworkRepr")]
pub struct Network {
    pub config: NetworkConfig,
    pub params: NetworkParams,
}

impl Network {
    pub fn new(config: NetworkConfig, params: NetworkParams) -> Result<Self> {
        config.validate()?;
        params.check_shapes(&config)?;
        if !params.is_finite() {
            return Err(Error::Numeric("network parameters must be finite".into()));
        }
        Ok(Network { config, params })
    }
}

impl From<Network> for NetworkRepr {
    fn from(net: Network) -> Self {
        NetworkRepr {
            format: NETWORK_FORMAT.to_owned(),
            config: net.config,
            layers: net
                .params
                .layers
                .into_iter()
                .map(|l| LayerRepr {
                    fan_in: l.weights.nrows(),
                    fan_out: l.weights.ncols(),
                    weights: l.weights.iter().copied().collect(),
                    bias: l.bias.to_vec(),
                })
                .collect(),
        }
    }
}

impl TryFrom<NetworkRepr> for Network {
    type Error = Error;

    fn try_from(r: NetworkRepr) -> Result<Self> {
        if r.format != NETWORK_FORMAT {
            return Err(Error::Format {
                found: r.format,
                expected: NETWORK_FORMAT.to_owned(),
            });
        }
        let layers = r
            .layers
            .into_iter()
            .map(|l| {
                Ok(Layer {
                    weights: Array2::from_shape_vec((l.fan_in, l.fan_out), l.weights)
                        .map_err(|e| Error::Shape(e.to_string()))?,
                    bias: Array1::from(l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Network::new(r.config, NetworkParams { layers })
    }
}
