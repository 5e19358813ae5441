use ndarray::{Array2, Array3, ArrayView2, ArrayView3, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ResNet-type 1D convolutional network: channel padding, `blocks`
/// residual blocks of `layers_per_block` ReLU convolutions each, then a
/// fully-connected identity head from the flattened `p x channels`
/// activation to `outputs` values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnSpec {
    pub input_len: usize,
    pub blocks: usize,
    pub layers_per_block: usize,
    pub channels: usize,
    pub filter: usize,
    pub outputs: usize,
}

impl CnnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.filter < 2 || self.filter > self.input_len {
            return Err(Error::Config(format!(
                "filter size {} must lie in 2..={}",
                self.filter, self.input_len
            )));
        }
        if self.channels == 0 || self.blocks == 0 || self.layers_per_block == 0 || self.outputs == 0 {
            return Err(Error::Config(
                "channels, blocks, layers per block and outputs must be positive".into(),
            ));
        }
        Ok(())
    }

    fn conv_size(&self) -> usize {
        self.filter * self.channels * self.channels + self.channels
    }

    fn head_offset(&self) -> usize {
        self.blocks * self.layers_per_block * self.conv_size()
    }

    pub fn param_count(&self) -> usize {
        self.head_offset() + self.outputs * (self.input_len * self.channels + 1)
    }

    pub fn layout(&self) -> Vec<(String, Vec<usize>, usize)> {
        let (k, h) = (self.filter, self.channels);
        let mut out = Vec::new();
        let mut off = 0;
        for m in 0..self.blocks {
            for l in 0..self.layers_per_block {
                out.push((format!("block{m}.conv{l}.weight"), vec![k, h, h], off));
                off += k * h * h;
                out.push((format!("block{m}.conv{l}.bias"), vec![h], off));
                off += h;
            }
        }
        out.push(("head.weight".into(), vec![self.outputs, self.input_len * h], off));
        off += self.outputs * self.input_len * h;
        out.push(("head.bias".into(), vec![self.outputs], off));
        out
    }

    fn conv<'a>(&self, values: &'a [f64], m: usize, l: usize) -> (&'a [f64], &'a [f64]) {
        let off = (m * self.layers_per_block + l) * self.conv_size();
        let wlen = self.filter * self.channels * self.channels;
        (&values[off..off + wlen], &values[off + wlen..off + wlen + self.channels])
    }
}

/// One-sided padded, stride-one convolution of `x` (`p x H`) with filter
/// `w` (`K x H' x H`): `y[b, j] = sum_{k, i} w[k, j, i] x[b + k, i]`, with
/// rows past the end of `x` treated as zero.
pub fn conv1d_forward(w: ArrayView3<f64>, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    let (k, h_out, h_in) = w.dim();
    let (p, h) = x.dim();
    if h != h_in {
        return Err(Error::Shape(format!("filter expects {h_in} channels, input has {h}")));
    }
    if k > p {
        return Err(Error::Shape(format!("filter of length {k} exceeds input length {p}")));
    }
    let mut y = Array2::zeros((p, h_out));
    for b in 0..p {
        for j in 0..h_out {
            let mut acc = 0.0;
            for t in 0..k.min(p - b) {
                for i in 0..h_in {
                    acc += w[[t, j, i]] * x[[b + t, i]];
                }
            }
            y[[b, j]] = acc;
        }
    }
    Ok(y)
}

/// `relu(L^w x - b)` over a batch of `p x H` activations.
fn conv_relu(w: &[f64], bias: &[f64], k: usize, x: &Array3<f64>) -> Array3<f64> {
    let (n, p, h) = x.dim();
    let mut y = Array3::zeros((n, p, h));
    let xs = x.as_slice().expect("standard layout");
    let ys = y.as_slice_mut().expect("standard layout");
    for s in 0..n {
        let xs = &xs[s * p * h..(s + 1) * p * h];
        let ys = &mut ys[s * p * h..(s + 1) * p * h];
        for b in 0..p {
            for j in 0..h {
                let mut acc = -bias[j];
                for t in 0..k.min(p - b) {
                    let wr = &w[(t * h + j) * h..(t * h + j + 1) * h];
                    let xr = &xs[(b + t) * h..(b + t + 1) * h];
                    acc += wr.iter().zip(xr).map(|(a, c)| a * c).sum::<f64>();
                }
                ys[b * h + j] = acc.max(0.0);
            }
        }
    }
    y
}

/// Backward through `conv_relu`. `dy` is overwritten with the
/// pre-activation gradient; returns the gradient with respect to `x`.
fn conv_relu_backward(
    w: &[f64],
    k: usize,
    x: &Array3<f64>,
    y: &Array3<f64>,
    dy: &mut Array3<f64>,
    gw: &mut [f64],
    gb: &mut [f64],
) -> Array3<f64> {
    let (n, p, h) = x.dim();
    dy.zip_mut_with(y, |g, &a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
    let mut dx = Array3::zeros((n, p, h));
    let xs = x.as_slice().expect("standard layout");
    let dzs = dy.as_slice().expect("standard layout");
    let dxs = dx.as_slice_mut().expect("standard layout");
    for s in 0..n {
        let xs = &xs[s * p * h..(s + 1) * p * h];
        let dz = &dzs[s * p * h..(s + 1) * p * h];
        let dxs = &mut dxs[s * p * h..(s + 1) * p * h];
        for b in 0..p {
            for j in 0..h {
                let g = dz[b * h + j];
                if g == 0.0 {
                    continue;
                }
                gb[j] -= g;
                for t in 0..k.min(p - b) {
                    let base = (t * h + j) * h;
                    for i in 0..h {
                        gw[base + i] += g * xs[(b + t) * h + i];
                        dxs[(b + t) * h + i] += g * w[base + i];
                    }
                }
            }
        }
    }
    dx
}

pub(crate) struct CnnTape {
    /// `acts[m][0]` is the input of block `m`; `acts[m][l]` the output of
    /// its `l`-th convolution.
    acts: Vec<Vec<Array3<f64>>>,
    features: Array2<f64>,
    output: Array2<f64>,
}

impl CnnTape {
    pub(crate) fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

pub(crate) fn forward(spec: &CnnSpec, values: &[f64], x: ArrayView2<f64>) -> Result<CnnTape> {
    let (n, p) = x.dim();
    if p != spec.input_len {
        return Err(Error::Shape(format!(
            "input has {p} columns, network expects {}",
            spec.input_len
        )));
    }
    let h = spec.channels;
    let mut cur = Array3::zeros((n, p, h));
    for s in 0..n {
        for a in 0..p {
            cur[[s, a, 0]] = x[[s, a]];
        }
    }
    let mut acts = Vec::with_capacity(spec.blocks);
    for m in 0..spec.blocks {
        let mut layers = Vec::with_capacity(spec.layers_per_block + 1);
        layers.push(cur);
        for l in 0..spec.layers_per_block {
            let (w, b) = spec.conv(values, m, l);
            let next = conv_relu(w, b, spec.filter, &layers[l]);
            layers.push(next);
        }
        cur = &layers[0] + layers.last().expect("non-empty block");
        acts.push(layers);
    }
    let features = cur.into_shape_with_order((n, p * h)).expect("contiguous");
    let off = spec.head_offset();
    let w = ArrayView2::from_shape((spec.outputs, p * h), &values[off..off + spec.outputs * p * h])
        .expect("layout");
    let b = &values[off + spec.outputs * p * h..off + spec.outputs * (p * h + 1)];
    let mut output = features.dot(&w.t());
    for mut row in output.outer_iter_mut() {
        for (o, bj) in row.iter_mut().zip(b) {
            *o -= bj;
        }
    }
    Ok(CnnTape { acts, features, output })
}

pub(crate) fn backward(
    spec: &CnnSpec,
    values: &[f64],
    tape: &CnnTape,
    out_grad: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    if out_grad.dim() != tape.output.dim() {
        return Err(Error::Shape(format!(
            "output gradient is {:?}, outputs are {:?}",
            out_grad.dim(),
            tape.output.dim()
        )));
    }
    let (n, ph) = tape.features.dim();
    let (p, h) = (spec.input_len, spec.channels);
    let mut grad = vec![0.0; spec.param_count()];
    let off = spec.head_offset();
    let wlen = spec.outputs * ph;
    let w = ArrayView2::from_shape((spec.outputs, ph), &values[off..off + wlen]).expect("layout");
    let gw = out_grad.t().dot(&tape.features);
    grad[off..off + wlen].copy_from_slice(gw.as_slice().expect("standard layout"));
    for (g, s) in grad[off + wlen..].iter_mut().zip(out_grad.sum_axis(Axis(0))) {
        *g = -s;
    }
    let mut g = out_grad
        .dot(&w)
        .into_shape_with_order((n, p, h))
        .expect("contiguous");
    let conv_size = spec.conv_size();
    let wsize = spec.filter * h * h;
    for m in (0..spec.blocks).rev() {
        let layers = &tape.acts[m];
        let mut dh = g.clone();
        for l in (0..spec.layers_per_block).rev() {
            let (w, _) = spec.conv(values, m, l);
            let start = (m * spec.layers_per_block + l) * conv_size;
            let (gw, gb) = grad[start..start + conv_size].split_at_mut(wsize);
            dh = conv_relu_backward(w, spec.filter, &layers[l], &layers[l + 1], &mut dh, gw, gb);
        }
        g += &dh;
    }
    Ok(grad)
}
