use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Layer widths `k_0 = p, k_1, ..., k_L, k_{L+1} = d`. Hidden layers use
/// `relu(W a - b)`, the last layer `W a - b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FnnSpec {
    pub widths: Vec<usize>,
}

impl FnnSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        let spec = Self { widths };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::Config("a network needs input and output widths".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::Config(format!("zero width in {:?}", self.widths)));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    /// Number of affine layers.
    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn max_width(&self) -> usize {
        self.widths[1..self.widths.len() - 1].iter().copied().max().unwrap_or(0)
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
    }

    /// `(name, shape, offset)` for every parameter block.
    pub fn layout(&self) -> Vec<(String, Vec<usize>, usize)> {
        let mut out = Vec::new();
        let mut off = 0;
        for (l, w) in self.widths.windows(2).enumerate() {
            out.push((format!("layer{l}.weight"), vec![w[1], w[0]], off));
            off += w[1] * w[0];
            out.push((format!("layer{l}.bias"), vec![w[1]], off));
            off += w[1];
        }
        out
    }

    fn layer<'a>(&self, values: &'a [f64], offset: usize, l: usize) -> (ArrayView2<'a, f64>, ArrayView1<'a, f64>) {
        let (k_in, k_out) = (self.widths[l], self.widths[l + 1]);
        let w = ArrayView2::from_shape((k_out, k_in), &values[offset..offset + k_in * k_out]).expect("layout");
        let b = ArrayView1::from(&values[offset + k_in * k_out..offset + k_out * (k_in + 1)]);
        (w, b)
    }
}

/// Post-activation values of every layer; `acts[0]` is the input.
pub(crate) struct FnnTape {
    pub(crate) acts: Vec<Array2<f64>>,
}

impl FnnTape {
    pub(crate) fn output(&self) -> &Array2<f64> {
        self.acts.last().expect("non-empty tape")
    }
}

pub(crate) fn forward(spec: &FnnSpec, values: &[f64], x: ArrayView2<f64>) -> Result<FnnTape> {
    if x.ncols() != spec.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} columns, network expects {}",
            x.ncols(),
            spec.input_dim()
        )));
    }
    let mut acts = Vec::with_capacity(spec.widths.len());
    acts.push(x.to_owned());
    let mut off = 0;
    for l in 0..spec.layers() {
        let (w, b) = spec.layer(values, off, l);
        off += w.len() + b.len();
        let mut z = acts[l].dot(&w.t());
        z -= &b;
        if l + 1 < spec.layers() {
            z.mapv_inplace(|v| v.max(0.0));
        }
        acts.push(z);
    }
    Ok(FnnTape { acts })
}

pub(crate) fn backward(
    spec: &FnnSpec,
    values: &[f64],
    tape: &FnnTape,
    out_grad: ArrayView2<f64>,
) -> Result<Vec<f64>> {
    if out_grad.dim() != tape.output().dim() {
        return Err(Error::Shape(format!(
            "output gradient is {:?}, outputs are {:?}",
            out_grad.dim(),
            tape.output().dim()
        )));
    }
    let layout = spec.layout();
    let mut grad = vec![0.0; spec.param_count()];
    let mut delta = out_grad.to_owned();
    for l in (0..spec.layers()).rev() {
        let w_off = layout[2 * l].2;
        let b_off = layout[2 * l + 1].2;
        let (w, _) = spec.layer(values, w_off, l);
        let a = &tape.acts[l];
        let gw = delta.t().dot(a);
        grad[w_off..b_off].copy_from_slice(gw.as_slice().expect("standard layout"));
        for (g, s) in grad[b_off..b_off + w.nrows()].iter_mut().zip(delta.sum_axis(Axis(0))) {
            *g = -s;
        }
        if l > 0 {
            let mut next = delta.dot(&w);
            next.zip_mut_with(a, |g, &act| {
                if act <= 0.0 {
                    *g = 0.0;
                }
            });
            delta = next;
        }
    }
    Ok(grad)
}
