//! Fully-connected and ResNet-type 1D convolutional networks over a flat
//! parameter vector, with reverse-mode gradients, Adam and checkpoints.

mod adam;
mod checkpoint;
mod cnn;
mod fnn;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adam::Adam;
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use cnn::{conv1d_forward, CnnSpec};
pub use fnn::FnnSpec;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    Fnn(FnnSpec),
    Cnn(CnnSpec),
}

impl Architecture {
    pub fn validate(&self) -> Result<()> {
        match self {
            Architecture::Fnn(s) => s.validate(),
            Architecture::Cnn(s) => s.validate(),
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Fnn(s) => s.input_dim(),
            Architecture::Cnn(s) => s.input_len,
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Architecture::Fnn(s) => s.output_dim(),
            Architecture::Cnn(s) => s.outputs,
        }
    }

    /// The same architecture with its final layer resized to `d` outputs.
    pub fn with_outputs(&self, d: usize) -> Self {
        match self {
            Architecture::Fnn(s) => {
                let mut widths = s.widths.clone();
                *widths.last_mut().expect("validated") = d;
                Architecture::Fnn(FnnSpec { widths })
            }
            Architecture::Cnn(s) => Architecture::Cnn(CnnSpec { outputs: d, ..s.clone() }),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Architecture::Fnn(s) => s.param_count(),
            Architecture::Cnn(s) => s.param_count(),
        }
    }

    /// `(name, shape, offset)` of every parameter block in the flat vector.
    pub fn layout(&self) -> Vec<(String, Vec<usize>, usize)> {
        match self {
            Architecture::Fnn(s) => s.layout(),
            Architecture::Cnn(s) => s.layout(),
        }
    }

    /// Compact one-line description, e.g. `fnn[10-16-32-16-1]`.
    pub fn describe(&self) -> String {
        match self {
            Architecture::Fnn(s) => format!(
                "fnn[{}]",
                s.widths.iter().map(|w| w.to_string()).collect::<Vec<_>>().join("-")
            ),
            Architecture::Cnn(s) => format!(
                "cnn[p={} M={} D={} H={} K={} d={}]",
                s.input_len, s.blocks, s.layers_per_block, s.channels, s.filter, s.outputs
            ),
        }
    }
}

/// Parameter initialisation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// Normal weights with variance `2/fan_in` (`1/fan_in` on the output
    /// layer) and zero biases.
    He,
    /// Weights and biases uniform on `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    #[default]
    Uniform,
}

/// A network's architecture, flat parameter vector and initialisation seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub arch: Architecture,
    pub seed: u64,
    pub values: Vec<f64>,
}

pub(crate) enum Tape {
    Fnn(fnn::FnnTape),
    Cnn(cnn::CnnTape),
}

impl Tape {
    pub(crate) fn output(&self) -> &Array2<f64> {
        match self {
            Tape::Fnn(t) => t.output(),
            Tape::Cnn(t) => t.output(),
        }
    }
}

impl NetworkParams {
    /// Initialisation with the default [`InitScheme`].
    pub fn init(arch: Architecture, seed: u64) -> Result<Self> {
        Self::init_with(arch, seed, InitScheme::default())
    }

    pub fn init_with(arch: Architecture, seed: u64, scheme: InitScheme) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = vec![0.0; arch.param_count()];
        let layout = arch.layout();
        let last_weight = layout.len() - 2;
        let mut fan_in = 1;
        for (b, (name, shape, off)) in layout.iter().enumerate() {
            let len: usize = shape.iter().product();
            let block = &mut values[*off..off + len];
            if name.ends_with("weight") {
                fan_in = match shape[..] {
                    [k, _, h] => k * h,
                    _ => shape[1],
                };
            }
            match scheme {
                InitScheme::He if name.ends_with("weight") => {
                    let gain = if b == last_weight { 1.0 } else { 2.0 };
                    let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive scale");
                    block.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
                }
                InitScheme::He => {}
                InitScheme::Uniform => {
                    let bound = 1.0 / (fan_in as f64).sqrt();
                    block.iter_mut().for_each(|v| *v = rng.random_range(-bound..bound));
                }
            }
        }
        Ok(Self { arch, seed, values })
    }

    pub fn zeros(arch: Architecture) -> Result<Self> {
        arch.validate()?;
        let values = vec![0.0; arch.param_count()];
        Ok(Self { arch, seed: 0, values })
    }

    pub fn from_values(arch: Architecture, values: Vec<f64>, seed: u64) -> Result<Self> {
        arch.validate()?;
        if values.len() != arch.param_count() {
            return Err(Error::LayoutMismatch {
                checkpoint: format!("{} values", values.len()),
                expected: format!("{} values for {}", arch.param_count(), arch.describe()),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("parameter {i} is not finite")));
        }
        Ok(Self { arch, seed, values })
    }

    pub(crate) fn tape(&self, x: ArrayView2<f64>) -> Result<Tape> {
        Ok(match &self.arch {
            Architecture::Fnn(s) => Tape::Fnn(fnn::forward(s, &self.values, x)?),
            Architecture::Cnn(s) => Tape::Cnn(cnn::forward(s, &self.values, x)?),
        })
    }

    pub(crate) fn backward_tape(&self, tape: &Tape, out_grad: ArrayView2<f64>) -> Result<Vec<f64>> {
        match (&self.arch, tape) {
            (Architecture::Fnn(s), Tape::Fnn(t)) => fnn::backward(s, &self.values, t, out_grad),
            (Architecture::Cnn(s), Tape::Cnn(t)) => cnn::backward(s, &self.values, t, out_grad),
            _ => Err(Error::Shape("tape recorded by a different architecture".into())),
        }
    }

    /// Outputs (`B x d`) for a batch of inputs (`B x p`).
    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        match self.tape(x)? {
            Tape::Fnn(t) => Ok(t.acts.into_iter().last().expect("non-empty tape")),
            Tape::Cnn(t) => Ok(t.output().clone()),
        }
    }

    /// Gradient of `sum(out_grad * forward(x))` with respect to the flat
    /// parameter vector.
    pub fn backward(&self, x: ArrayView2<f64>, out_grad: ArrayView2<f64>) -> Result<Vec<f64>> {
        let tape = self.tape(x)?;
        self.backward_tape(&tape, out_grad)
    }
}

/// Whether the `d` output coordinates share one trunk or come from `d`
/// independent scalar networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OutputMode {
    #[default]
    Shared,
    Separate,
}

/// The fitted map `f: R^p -> R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub mode: OutputMode,
    pub nets: Vec<NetworkParams>,
}

pub(crate) struct ModelTape {
    tapes: Vec<Tape>,
    output: Array2<f64>,
}

impl ModelTape {
    pub(crate) fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

impl Model {
    /// Initialises a model with `d` outputs. In separate mode network `t`
    /// is seeded with `seed + t`.
    pub fn init(arch: &Architecture, d: usize, mode: OutputMode, seed: u64) -> Result<Self> {
        Self::init_with(arch, d, mode, seed, InitScheme::default())
    }

    pub fn init_with(arch: &Architecture, d: usize, mode: OutputMode, seed: u64, scheme: InitScheme) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("output dimension must be at least 1".into()));
        }
        let nets = match mode {
            OutputMode::Shared => vec![NetworkParams::init_with(arch.with_outputs(d), seed, scheme)?],
            OutputMode::Separate => (0..d)
                .map(|t| NetworkParams::init_with(arch.with_outputs(1), seed.wrapping_add(t as u64), scheme))
                .collect::<Result<_>>()?,
        };
        Ok(Self { mode, nets })
    }

    pub fn input_dim(&self) -> usize {
        self.nets[0].arch.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.nets.iter().map(|n| n.arch.output_dim()).sum()
    }

    pub fn param_count(&self) -> usize {
        self.nets.iter().map(|n| n.values.len()).sum()
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let outs = self.nets.iter().map(|n| n.forward(x)).collect::<Result<Vec<_>>>()?;
        stack(outs)
    }

    pub(crate) fn tape(&self, x: ArrayView2<f64>) -> Result<ModelTape> {
        let tapes = self.nets.iter().map(|n| n.tape(x)).collect::<Result<Vec<_>>>()?;
        let output = stack(tapes.iter().map(|t| t.output().clone()).collect())?;
        Ok(ModelTape { tapes, output })
    }

    /// Per-network parameter gradients of `sum(out_grad * forward(x))`.
    pub(crate) fn backward_tape(&self, tape: &ModelTape, out_grad: ArrayView2<f64>) -> Result<Vec<Vec<f64>>> {
        if out_grad.dim() != tape.output.dim() {
            return Err(Error::Shape(format!(
                "output gradient is {:?}, outputs are {:?}",
                out_grad.dim(),
                tape.output.dim()
            )));
        }
        let mut col = 0;
        self.nets
            .iter()
            .zip(&tape.tapes)
            .map(|(net, t)| {
                let w = net.arch.output_dim();
                let g = net.backward_tape(t, out_grad.slice(ndarray::s![.., col..col + w]));
                col += w;
                g
            })
            .collect()
    }

    pub fn backward(&self, x: ArrayView2<f64>, out_grad: ArrayView2<f64>) -> Result<Vec<Vec<f64>>> {
        let tape = self.tape(x)?;
        self.backward_tape(&tape, out_grad)
    }
}

fn stack(outs: Vec<Array2<f64>>) -> Result<Array2<f64>> {
    if outs.len() == 1 {
        return Ok(outs.into_iter().next().expect("one output"));
    }
    let views: Vec<_> = outs.iter().map(|o| o.view()).collect();
    concatenate(Axis(1), &views).map_err(|e| Error::Shape(e.to_string()))
}

/// Width and depth prescribed by the approximation theory for a
/// fully-connected class: width `3^{p+3} max(p floor(N^{1/p}), N + 1)` and
/// depth `12 n^{p / (2(p + 2 beta))} + 14 + 2p`. These are theory-scale
/// sizes, far larger than anything trained in practice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoryFnnSize {
    pub width: f64,
    pub depth: f64,
}

pub fn theory_fnn_size(n: usize, p: usize, beta: f64, big_n: usize) -> TheoryFnnSize {
    let pf = p as f64;
    let root = (big_n as f64).powf(1.0 / pf).floor();
    let width = 3f64.powi(p as i32 + 3) * (pf * root).max(big_n as f64 + 1.0);
    let depth = 12.0 * (n as f64).powf(pf / (2.0 * (pf + 2.0 * beta))) + 14.0 + 2.0 * pf;
    TheoryFnnSize { width, depth }
}

/// Convolutional preset following the theory: `n^{p/(2 beta + p)}` residual
/// blocks (rounded up), `ceil(log2 M)` layers per block (at least one) and
/// the given constant channel count and filter size.
pub fn theory_cnn_spec(n: usize, p: usize, beta: f64, channels: usize, filter: usize, outputs: usize) -> Result<CnnSpec> {
    let pf = p as f64;
    let blocks = ((n as f64).powf(pf / (2.0 * beta + pf)).ceil() as usize).max(1);
    let layers_per_block = ((blocks as f64).log2().ceil() as usize).max(1);
    let spec = CnnSpec {
        input_len: p,
        blocks,
        layers_per_block,
        channels,
        filter,
        outputs,
    };
    spec.validate()?;
    Ok(spec)
}
