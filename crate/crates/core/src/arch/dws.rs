//! Restricted equivariant DWS primitives and programs built from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::MlpSpec;
use crate::space::{Activation, WeightElement};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DwsPrimitive {
    /// Every feature vector `x` (a row) becomes `x A + u`; `a` is `c x c'`.
    PointwiseAffine { a: Vec<Vec<f64>>, u: Vec<f64> },
    /// Every entry becomes the sum of all weight and bias features.
    GlobalSum,
    /// Biases of `layer` (1-based) become their sum; everything else is zeroed.
    BiasSum { layer: usize },
    /// `W_l[i][j] <- b_{l-1}[j]` (zero for the first layer); biases kept.
    LowerW2b,
    /// `W_l[i][j] <- b_l[i]`; biases kept.
    UpperW2b,
    /// Keeps the first-layer weights leaving input neuron `index`; zeroes the rest.
    FirstLayerNeuron { index: usize },
    /// Keeps the last-layer bias of output neuron `index`; zeroes the rest.
    LastLayerNeuron { index: usize },
    PointwiseMlp { mlp: MlpSpec },
    PointwiseNonlinearity { activation: Activation },
    /// Runs every branch on the same input and stacks their channels.
    Concat { branches: Vec<DwsProgram> },
    /// `b_l[i] <- sum_j W_l[i][j]`; weights zeroed.
    ColPool,
    /// `b_l[j] <- sum_k W_{l+1}[k][j]` for `l < L`, `b_L <- 0`; weights zeroed.
    RowPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DwsProgram {
    pub in_channels: usize,
    pub steps: Vec<DwsPrimitive>,
}

impl DwsPrimitive {
    pub fn out_channels(&self, c: usize) -> Result<usize> {
        match self {
            DwsPrimitive::PointwiseAffine { a, u } => {
                if a.len() != c {
                    return Err(Error::ChannelMismatch {
                        expected: a.len(),
                        got: c,
                    });
                }
                if let Some(r) = a.iter().find(|r| r.len() != u.len()) {
                    return Err(Error::ChannelMismatch {
                        expected: u.len(),
                        got: r.len(),
                    });
                }
                Ok(u.len())
            }
            DwsPrimitive::PointwiseMlp { mlp } => {
                if mlp.in_dim() != c {
                    return Err(Error::ChannelMismatch {
                        expected: mlp.in_dim(),
                        got: c,
                    });
                }
                Ok(mlp.out_dim())
            }
            DwsPrimitive::Concat { branches } => {
                let mut total = 0;
                for b in branches {
                    if b.in_channels != c {
                        return Err(Error::ChannelMismatch {
                            expected: b.in_channels,
                            got: c,
                        });
                    }
                    total += b.out_channels()?;
                }
                Ok(total)
            }
            _ => Ok(c),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DwsPrimitive::PointwiseAffine { .. } => "pointwise_affine",
            DwsPrimitive::GlobalSum => "global_sum",
            DwsPrimitive::BiasSum { .. } => "bias_sum",
            DwsPrimitive::LowerW2b => "lower_w2b",
            DwsPrimitive::UpperW2b => "upper_w2b",
            DwsPrimitive::FirstLayerNeuron { .. } => "first_layer_neuron",
            DwsPrimitive::LastLayerNeuron { .. } => "last_layer_neuron",
            DwsPrimitive::PointwiseMlp { .. } => "pointwise_mlp",
            DwsPrimitive::PointwiseNonlinearity { .. } => "pointwise_nonlinearity",
            DwsPrimitive::Concat { .. } => "concat",
            DwsPrimitive::ColPool => "col_pool",
            DwsPrimitive::RowPool => "row_pool",
        }
    }
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

pub fn dws_apply(p: &DwsPrimitive, v: &WeightElement) -> Result<WeightElement> {
    let c = v.channels();
    let c_out = p.out_channels(c)?;
    let arch = v.arch();
    let big_l = arch.num_layers();
    match p {
        DwsPrimitive::PointwiseAffine { a, u } => Ok(v.map_entries(c_out, |x, y| {
            y.copy_from_slice(u);
            for (xm, row) in x.iter().zip(a) {
                for (yk, am) in y.iter_mut().zip(row) {
                    *yk += xm * am;
                }
            }
        })),
        DwsPrimitive::GlobalSum => {
            let mut s = vec![0.0; c];
            for e in v.entries() {
                add_into(&mut s, e);
            }
            Ok(v.map_entries(c, |_, y| y.copy_from_slice(&s)))
        }
        DwsPrimitive::BiasSum { layer } => {
            if *layer == 0 || *layer > big_l {
                return Err(Error::IndexOutOfRange {
                    index: *layer,
                    size: big_l,
                });
            }
            let l = layer - 1;
            let mut s = vec![0.0; c];
            for i in 0..arch.dims()[l + 1] {
                add_into(&mut s, v.b(l, i));
            }
            let mut out = WeightElement::zeros(arch, c);
            for i in 0..arch.dims()[l + 1] {
                out.b_mut(l, i).copy_from_slice(&s);
            }
            Ok(out)
        }
        DwsPrimitive::LowerW2b | DwsPrimitive::UpperW2b => {
            let upper = matches!(p, DwsPrimitive::UpperW2b);
            let mut out = v.clone();
            for l in 0..big_l {
                let (d_out, d_in) = arch.layer_shape(l);
                for i in 0..d_out {
                    for j in 0..d_in {
                        if upper {
                            let src = v.b(l, i).to_vec();
                            out.w_mut(l, i, j).copy_from_slice(&src);
                        } else if l == 0 {
                            out.w_mut(l, i, j).fill(0.0);
                        } else {
                            let src = v.b(l - 1, j).to_vec();
                            out.w_mut(l, i, j).copy_from_slice(&src);
                        }
                    }
                }
            }
            Ok(out)
        }
        DwsPrimitive::FirstLayerNeuron { index } => {
            let d0 = arch.input_dim();
            if *index >= d0 {
                return Err(Error::IndexOutOfRange {
                    index: *index,
                    size: d0,
                });
            }
            let mut out = WeightElement::zeros(arch, c);
            for i in 0..arch.dims()[1] {
                out.w_mut(0, i, *index).copy_from_slice(v.w(0, i, *index));
            }
            Ok(out)
        }
        DwsPrimitive::LastLayerNeuron { index } => {
            let dl = arch.output_dim();
            if *index >= dl {
                return Err(Error::IndexOutOfRange {
                    index: *index,
                    size: dl,
                });
            }
            let mut out = WeightElement::zeros(arch, c);
            out.b_mut(big_l - 1, *index)
                .copy_from_slice(v.b(big_l - 1, *index));
            Ok(out)
        }
        DwsPrimitive::PointwiseMlp { mlp } => Ok(v.map_entries(c_out, |x, y| mlp.eval_into(x, y))),
        DwsPrimitive::PointwiseNonlinearity { activation } => Ok(v.map_entries(c, |x, y| {
            for (yk, xk) in y.iter_mut().zip(x) {
                *yk = activation.apply(*xk);
            }
        })),
        DwsPrimitive::Concat { branches } => {
            let outs = branches
                .iter()
                .map(|b| dws_run(b, v))
                .collect::<Result<Vec<_>>>()?;
            let mut out = WeightElement::zeros(arch, c_out);
            let mut off = 0;
            for o in &outs {
                let k = o.channels();
                for (dst, src) in out.layers_mut().iter_mut().zip(o.layers()) {
                    for (d, s) in dst.w.chunks_mut(c_out).zip(src.w.chunks(k)) {
                        d[off..off + k].copy_from_slice(s);
                    }
                    for (d, s) in dst.b.chunks_mut(c_out).zip(src.b.chunks(k)) {
                        d[off..off + k].copy_from_slice(s);
                    }
                }
                off += k;
            }
            Ok(out)
        }
        DwsPrimitive::ColPool => {
            let mut out = WeightElement::zeros(arch, c);
            for l in 0..big_l {
                let (d_out, d_in) = arch.layer_shape(l);
                for i in 0..d_out {
                    let mut s = vec![0.0; c];
                    for j in 0..d_in {
                        add_into(&mut s, v.w(l, i, j));
                    }
                    out.b_mut(l, i).copy_from_slice(&s);
                }
            }
            Ok(out)
        }
        DwsPrimitive::RowPool => {
            let mut out = WeightElement::zeros(arch, c);
            for l in 0..big_l.saturating_sub(1) {
                let (d_up, d_mid) = arch.layer_shape(l + 1);
                for j in 0..d_mid {
                    let mut s = vec![0.0; c];
                    for k in 0..d_up {
                        add_into(&mut s, v.w(l + 1, k, j));
                    }
                    out.b_mut(l, j).copy_from_slice(&s);
                }
            }
            Ok(out)
        }
    }
}

impl DwsProgram {
    pub fn new(in_channels: usize) -> Self {
        Self {
            in_channels,
            steps: Vec::new(),
        }
    }

    pub fn then(mut self, p: DwsPrimitive) -> Self {
        self.steps.push(p);
        self
    }

    /// Output channel count; fails if adjacent channel counts disagree.
    pub fn out_channels(&self) -> Result<usize> {
        self.steps
            .iter()
            .try_fold(self.in_channels, |c, p| p.out_channels(c))
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("program serializes")
    }

    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        serde_json::from_value(v.clone()).map_err(|e| Error::Parse(e.to_string()))
    }
}

pub fn dws_run(prog: &DwsProgram, v: &WeightElement) -> Result<WeightElement> {
    if v.channels() != prog.in_channels {
        return Err(Error::ChannelMismatch {
            expected: prog.in_channels,
            got: v.channels(),
        });
    }
    prog.out_channels()?;
    let mut cur = v.clone();
    for p in &prog.steps {
        cur = dws_apply(p, &cur)?;
    }
    Ok(cur)
}

/// Affine map with identity matrix and zero offset on `c` channels.
pub fn identity_affine(c: usize) -> DwsPrimitive {
    let a = (0..c)
        .map(|m| (0..c).map(|k| if m == k { 1.0 } else { 0.0 }).collect())
        .collect();
    DwsPrimitive::PointwiseAffine { a, u: vec![0.0; c] }
}

/// Affine map selecting channel `src[k]` into output channel `k`.
pub fn select_channels(c: usize, src: &[usize]) -> DwsPrimitive {
    let a = (0..c)
        .map(|m| src.iter().map(|&s| if s == m { 1.0 } else { 0.0 }).collect())
        .collect();
    DwsPrimitive::PointwiseAffine {
        a,
        u: vec![0.0; src.len()],
    }
}
