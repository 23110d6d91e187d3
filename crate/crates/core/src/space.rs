//! MLP weight spaces, the hidden-neuron permutation group and its action.
//!
//! Storage convention: layer `l` (0-based) holds `W_{l+1}` and `b_{l+1}`.
//! `W` is row-major with rows indexed by the target neuron (layer `l+1`) and
//! columns by the source neuron (layer `l`), channels innermost. Every
//! operation that moves entries around (group action, flattening) is a pure
//! index gather so results are bit-exact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation '{other}'"))),
        }
    }
}

/// Layer widths `d_0..d_L` plus the hidden activation.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Architecture {
    dims: Vec<usize>,
    activation: Activation,
}

impl Architecture {
    pub fn new(dims: Vec<usize>, activation: Activation) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::InvalidArchitecture(format!(
                "need at least two widths (L >= 1), got {}",
                dims.len()
            )));
        }
        if let Some(pos) = dims.iter().position(|&d| d == 0) {
            return Err(Error::InvalidArchitecture(format!("width d_{pos} is zero")));
        }
        Ok(Self { dims, activation })
    }

    pub fn relu(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), Activation::Relu)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// Number of affine layers `L`.
    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        self.dims[self.dims.len() - 1]
    }

    /// Widths of the hidden layers `d_1..d_{L-1}`.
    pub fn hidden_dims(&self) -> &[usize] {
        &self.dims[1..self.dims.len() - 1]
    }

    /// `M = sum_l d_l (1 + d_{l-1})`, the number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.dims.windows(2).map(|w| w[1] * (1 + w[0])).sum()
    }

    /// `(d_out, d_in)` of layer `l` (0-based).
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.dims[l + 1], self.dims[l])
    }

    /// Order of the hidden-neuron permutation group, saturating at `u128::MAX`.
    pub fn group_order(&self) -> u128 {
        let mut order: u128 = 1;
        for &d in self.hidden_dims() {
            for k in 2..=d as u128 {
                order = order.saturating_mul(k);
            }
        }
        order
    }
}

/// Parameters of one layer with a trailing channel axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerParams {
    /// `d_out * d_in * c` values, row-major, channels innermost.
    pub w: Vec<f64>,
    /// `d_out * c` values.
    pub b: Vec<f64>,
}

/// An element of the weight space `W^c` of an architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightElement {
    arch: Architecture,
    channels: usize,
    layers: Vec<LayerParams>,
}

impl WeightElement {
    /// Builds an element after checking shapes and finiteness.
    pub fn new(arch: Architecture, channels: usize, layers: Vec<LayerParams>) -> Result<Self> {
        let v = Self {
            arch,
            channels,
            layers,
        };
        validate(&v.arch, &v)?;
        Ok(v)
    }

    /// Builds a single-channel element from nested matrices, `weights[l][i][j]`.
    pub fn from_matrices(
        arch: Architecture,
        weights: &[Vec<Vec<f64>>],
        biases: &[Vec<f64>],
    ) -> Result<Self> {
        if weights.len() != arch.num_layers() || biases.len() != arch.num_layers() {
            return Err(Error::ShapeMismatch {
                layer: weights.len().min(biases.len()) + 1,
                expected: format!("{} layers", arch.num_layers()),
                got: format!("{} weight / {} bias tensors", weights.len(), biases.len()),
            });
        }
        let mut layers = Vec::with_capacity(weights.len());
        for (l, (wm, bv)) in weights.iter().zip(biases).enumerate() {
            let (d_out, d_in) = arch.layer_shape(l);
            if wm.len() != d_out || wm.iter().any(|row| row.len() != d_in) {
                let cols = wm.first().map_or(0, Vec::len);
                return Err(Error::ShapeMismatch {
                    layer: l + 1,
                    expected: format!("{d_out}x{d_in}"),
                    got: format!("{}x{}", wm.len(), cols),
                });
            }
            layers.push(LayerParams {
                w: wm.iter().flatten().copied().collect(),
                b: bv.clone(),
            });
        }
        Self::new(arch, 1, layers)
    }

    pub fn zeros(arch: &Architecture, channels: usize) -> Self {
        let layers = (0..arch.num_layers())
            .map(|l| {
                let (d_out, d_in) = arch.layer_shape(l);
                LayerParams {
                    w: vec![0.0; d_out * d_in * channels],
                    b: vec![0.0; d_out * channels],
                }
            })
            .collect();
        Self {
            arch: arch.clone(),
            channels,
            layers,
        }
    }

    /// Constructs without validation; callers guarantee consistent shapes.
    pub(crate) fn from_parts_unchecked(
        arch: Architecture,
        channels: usize,
        layers: Vec<LayerParams>,
    ) -> Self {
        Self {
            arch,
            channels,
            layers,
        }
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Feature vector of `W_{l+1}[i][j]`.
    #[inline]
    pub fn w(&self, l: usize, i: usize, j: usize) -> &[f64] {
        let d_in = self.arch.dims[l];
        let c = self.channels;
        let off = (i * d_in + j) * c;
        &self.layers[l].w[off..off + c]
    }

    #[inline]
    pub fn w_mut(&mut self, l: usize, i: usize, j: usize) -> &mut [f64] {
        let d_in = self.arch.dims[l];
        let c = self.channels;
        let off = (i * d_in + j) * c;
        &mut self.layers[l].w[off..off + c]
    }

    /// Feature vector of `b_{l+1}[i]`.
    #[inline]
    pub fn b(&self, l: usize, i: usize) -> &[f64] {
        let c = self.channels;
        &self.layers[l].b[i * c..(i + 1) * c]
    }

    #[inline]
    pub fn b_mut(&mut self, l: usize, i: usize) -> &mut [f64] {
        let c = self.channels;
        &mut self.layers[l].b[i * c..(i + 1) * c]
    }

    /// Scalar weight for single-channel elements.
    pub fn w_scalar(&self, l: usize, i: usize, j: usize) -> f64 {
        self.w(l, i, j)[0]
    }

    pub fn b_scalar(&self, l: usize, i: usize) -> f64 {
        self.b(l, i)[0]
    }

    /// Weight matrix of layer `l` as nested rows (channel 0).
    pub fn weight_matrix(&self, l: usize) -> Vec<Vec<f64>> {
        let (d_out, d_in) = self.arch.layer_shape(l);
        (0..d_out)
            .map(|i| (0..d_in).map(|j| self.w(l, i, j)[0]).collect())
            .collect()
    }

    /// Iterates over every entry's feature vector in canonical flat order.
    pub fn entries(&self) -> impl Iterator<Item = &[f64]> + '_ {
        let c = self.channels;
        self.layers
            .iter()
            .flat_map(move |p| p.w.chunks(c).chain(p.b.chunks(c)))
    }

    /// Keeps only channels `range`, returning a new element.
    pub fn select_channels(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.channels || range.start >= range.end {
            return Err(Error::ChannelMismatch {
                expected: self.channels,
                got: range.end,
            });
        }
        let c = self.channels;
        let pick = |xs: &[f64]| -> Vec<f64> {
            xs.chunks(c)
                .flat_map(|e| e[range.clone()].iter().copied())
                .collect()
        };
        let layers = self
            .layers
            .iter()
            .map(|p| LayerParams {
                w: pick(&p.w),
                b: pick(&p.b),
            })
            .collect();
        Ok(Self::from_parts_unchecked(
            self.arch.clone(),
            range.end - range.start,
            layers,
        ))
    }

    /// Applies `f` to every entry feature vector (weights and biases alike).
    pub fn map_entries(&self, out_channels: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Self {
        let c = self.channels;
        let mut go = |xs: &[f64]| -> Vec<f64> {
            let n = xs.len() / c;
            let mut out = vec![0.0; n * out_channels];
            for (src, dst) in xs.chunks(c).zip(out.chunks_mut(out_channels)) {
                f(src, dst);
            }
            out
        };
        let layers = self
            .layers
            .iter()
            .map(|p| LayerParams {
                w: go(&p.w),
                b: go(&p.b),
            })
            .collect();
        Self::from_parts_unchecked(self.arch.clone(), out_channels, layers)
    }

    /// Largest absolute entrywise difference; `None` if shapes differ.
    pub fn max_abs_diff(&self, other: &Self) -> Option<f64> {
        if self.arch != other.arch || self.channels != other.channels {
            return None;
        }
        let a = self.layers.iter().flat_map(|p| p.w.iter().chain(&p.b));
        let b = other.layers.iter().flat_map(|p| p.w.iter().chain(&p.b));
        Some(a.zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
    }

    /// Bitwise equality of all entries (distinguishes `0.0` from `-0.0`).
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self.channels == other.channels
            && self.layers.iter().zip(&other.layers).all(|(p, q)| {
                p.w.len() == q.w.len()
                    && p.b.len() == q.b.len()
                    && p.w.iter().zip(&q.w).all(|(x, y)| x.to_bits() == y.to_bits())
                    && p.b.iter().zip(&q.b).all(|(x, y)| x.to_bits() == y.to_bits())
            })
    }
}

/// Checks that `v` has the tensor shapes of `arch` and only finite entries.
pub fn validate(arch: &Architecture, v: &WeightElement) -> Result<()> {
    if v.channels == 0 {
        return Err(Error::ShapeMismatch {
            layer: 0,
            expected: "channels >= 1".into(),
            got: "0 channels".into(),
        });
    }
    if v.layers.len() != arch.num_layers() {
        return Err(Error::ShapeMismatch {
            layer: v.layers.len().min(arch.num_layers()) + 1,
            expected: format!("{} layers", arch.num_layers()),
            got: format!("{} layers", v.layers.len()),
        });
    }
    if v.arch.dims != arch.dims {
        return Err(Error::ArchMismatch(format!(
            "element dims {:?} vs {:?}",
            v.arch.dims, arch.dims
        )));
    }
    let c = v.channels;
    for (l, p) in v.layers.iter().enumerate() {
        let (d_out, d_in) = arch.layer_shape(l);
        if p.w.len() != d_out * d_in * c {
            return Err(Error::ShapeMismatch {
                layer: l + 1,
                expected: format!("W {d_out}x{d_in}x{c}"),
                got: format!("{} weight values", p.w.len()),
            });
        }
        if p.b.len() != d_out * c {
            return Err(Error::ShapeMismatch {
                layer: l + 1,
                expected: format!("b {d_out}x{c}"),
                got: format!("{} bias values", p.b.len()),
            });
        }
        if let Some(k) = p.w.iter().position(|x| !x.is_finite()) {
            let e = k / c;
            return Err(Error::NonFiniteEntry(format!(
                "W_{}[{}][{}] channel {}",
                l + 1,
                e / d_in,
                e % d_in,
                k % c
            )));
        }
        if let Some(k) = p.b.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFiniteEntry(format!(
                "b_{}[{}] channel {}",
                l + 1,
                k / c,
                k % c
            )));
        }
    }
    Ok(())
}

/// A tuple of hidden-layer permutations stored as image arrays:
/// `perms[k][i]` is the destination of neuron `i` in hidden layer `k + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupElement {
    perms: Vec<Vec<usize>>,
}

fn check_perm(layer: usize, p: &[usize], n: usize) -> Result<()> {
    if p.len() != n {
        return Err(Error::InvalidPermutation {
            layer,
            reason: format!("length {} != width {}", p.len(), n),
        });
    }
    let mut seen = vec![false; n];
    for &x in p {
        if x >= n || seen[x] {
            return Err(Error::InvalidPermutation {
                layer,
                reason: format!("image {x} repeated or out of range"),
            });
        }
        seen[x] = true;
    }
    Ok(())
}

impl GroupElement {
    pub fn new(arch: &Architecture, perms: Vec<Vec<usize>>) -> Result<Self> {
        let hidden = arch.hidden_dims();
        if perms.len() != hidden.len() {
            return Err(Error::ArchMismatch(format!(
                "{} permutations for {} hidden layers",
                perms.len(),
                hidden.len()
            )));
        }
        for (k, (p, &d)) in perms.iter().zip(hidden).enumerate() {
            check_perm(k + 1, p, d)?;
        }
        Ok(Self { perms })
    }

    pub fn identity(arch: &Architecture) -> Self {
        Self {
            perms: arch.hidden_dims().iter().map(|&d| (0..d).collect()).collect(),
        }
    }

    /// Uniformly random element (Fisher-Yates per hidden layer).
    pub fn random(arch: &Architecture, rng: &mut impl Rng) -> Self {
        let perms = arch
            .hidden_dims()
            .iter()
            .map(|&d| {
                let mut p: Vec<usize> = (0..d).collect();
                for i in (1..d).rev() {
                    let j = rng.gen_range(0..=i);
                    p.swap(i, j);
                }
                p
            })
            .collect();
        Self { perms }
    }

    pub fn perms(&self) -> &[Vec<usize>] {
        &self.perms
    }

    pub fn is_identity(&self) -> bool {
        self.perms
            .iter()
            .all(|p| p.iter().enumerate().all(|(i, &x)| i == x))
    }

    fn widths(&self) -> Vec<usize> {
        self.perms.iter().map(Vec::len).collect()
    }

    /// `compose(self, other)` acts as "first `other`, then `self`".
    pub fn compose(&self, other: &Self) -> Result<Self> {
        if self.widths() != other.widths() {
            return Err(Error::ArchMismatch("group elements of different shape".into()));
        }
        let perms = self
            .perms
            .iter()
            .zip(&other.perms)
            .map(|(p2, p1)| p1.iter().map(|&x| p2[x]).collect())
            .collect();
        Ok(Self { perms })
    }

    pub fn inverse(&self) -> Self {
        let perms = self
            .perms
            .iter()
            .map(|p| {
                let mut inv = vec![0; p.len()];
                for (i, &x) in p.iter().enumerate() {
                    inv[x] = i;
                }
                inv
            })
            .collect();
        Self { perms }
    }

    /// Image array of layer `l` (0-based over all layers `0..=L`); input and
    /// output layers are fixed.
    pub fn layer_perm(&self, l: usize, width: usize) -> std::borrow::Cow<'_, [usize]> {
        if l == 0 || l > self.perms.len() {
            std::borrow::Cow::Owned((0..width).collect())
        } else {
            std::borrow::Cow::Borrowed(&self.perms[l - 1])
        }
    }

    pub(crate) fn check_arch(&self, arch: &Architecture) -> Result<()> {
        if self.widths() != arch.hidden_dims() {
            return Err(Error::ArchMismatch(format!(
                "group element widths {:?} vs hidden dims {:?}",
                self.widths(),
                arch.hidden_dims()
            )));
        }
        Ok(())
    }
}

/// The permutation action on weight space, applied independently per channel.
///
/// Entry `W_l[i][j]` moves to `W_l[tau_l(i)][tau_{l-1}(j)]` and `b_l[i]` to
/// `b_l[tau_l(i)]`; input and output neurons stay fixed.
pub fn act(g: &GroupElement, v: &WeightElement) -> Result<WeightElement> {
    g.check_arch(v.arch())?;
    let arch = v.arch();
    let c = v.channels();
    let mut out = WeightElement::zeros(arch, c);
    for l in 0..arch.num_layers() {
        let (d_out, d_in) = arch.layer_shape(l);
        let rows = g.layer_perm(l + 1, d_out);
        let cols = g.layer_perm(l, d_in);
        for i in 0..d_out {
            for j in 0..d_in {
                out.w_mut(l, rows[i], cols[j]).copy_from_slice(v.w(l, i, j));
            }
            out.b_mut(l, rows[i]).copy_from_slice(v.b(l, i));
        }
    }
    Ok(out)
}

/// True iff every hidden layer has pairwise distinct biases (gap `> tol`).
pub fn is_general_position(v: &WeightElement, tol: f64) -> Result<bool> {
    if v.channels() != 1 {
        return Err(Error::UnsupportedChannels(v.channels()));
    }
    Ok(first_tie(v, tol).is_none())
}

/// First pair of hidden neurons whose biases are within `tol`, as
/// `(layer 1-based, i, j)`.
pub(crate) fn first_tie(v: &WeightElement, tol: f64) -> Option<(usize, usize, usize)> {
    let arch = v.arch();
    for l in 0..arch.num_layers().saturating_sub(1) {
        let d = arch.dims()[l + 1];
        for i in 0..d {
            for j in (i + 1)..d {
                let gap = (v.b_scalar(l, i) - v.b_scalar(l, j)).abs();
                if gap <= tol {
                    return Some((l + 1, i, j));
                }
            }
        }
    }
    None
}

/// Evaluates the network `f_v` at `x` in double precision.
///
/// Each neuron accumulates `sum_j W[i][j] * h[j]` in ascending `j`, then adds
/// its bias, so repeated runs are bit-identical.
pub fn realize(v: &WeightElement, x: &[f64]) -> Result<Vec<f64>> {
    if v.channels() != 1 {
        return Err(Error::UnsupportedChannels(v.channels()));
    }
    let arch = v.arch();
    if x.len() != arch.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: arch.input_dim(),
            got: x.len(),
        });
    }
    let act = arch.activation();
    let last = arch.num_layers() - 1;
    let mut h = x.to_vec();
    for (l, p) in v.layers().iter().enumerate() {
        let (d_out, d_in) = arch.layer_shape(l);
        let mut next = Vec::with_capacity(d_out);
        for i in 0..d_out {
            let row = &p.w[i * d_in..(i + 1) * d_in];
            let mut acc = 0.0;
            for (w, hj) in row.iter().zip(&h) {
                acc += w * hj;
            }
            let z = acc + p.b[i];
            next.push(if l == last { z } else { act.apply(z) });
        }
        h = next;
    }
    Ok(h)
}

/// Flattened weight-space element: layer-major, each layer's weights
/// (row-major) before its biases, channels innermost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatVector {
    pub values: Vec<f64>,
    pub channels: usize,
}

impl FlatVector {
    /// Number of parameter entries (`M`).
    pub fn entries(&self) -> usize {
        self.values.len() / self.channels.max(1)
    }

    /// Feature vector of the `k`-th entry.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * self.channels..(k + 1) * self.channels]
    }
}

pub fn flatten(v: &WeightElement) -> FlatVector {
    let mut values = Vec::with_capacity(v.arch().param_count() * v.channels());
    for p in v.layers() {
        values.extend_from_slice(&p.w);
        values.extend_from_slice(&p.b);
    }
    FlatVector {
        values,
        channels: v.channels(),
    }
}

pub fn unflatten(f: &FlatVector, arch: &Architecture, channels: usize) -> Result<WeightElement> {
    let expected = arch.param_count() * channels;
    if f.values.len() != expected || channels == 0 {
        return Err(Error::LengthMismatch {
            expected,
            got: f.values.len(),
        });
    }
    let mut layers = Vec::with_capacity(arch.num_layers());
    let mut off = 0;
    for l in 0..arch.num_layers() {
        let (d_out, d_in) = arch.layer_shape(l);
        let nw = d_out * d_in * channels;
        let nb = d_out * channels;
        layers.push(LayerParams {
            w: f.values[off..off + nw].to_vec(),
            b: f.values[off + nw..off + nw + nb].to_vec(),
        });
        off += nw + nb;
    }
    WeightElement::new(arch.clone(), channels, layers)
}

/// Distribution used by [`random_weights`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightDist {
    Uniform { low: f64, high: f64 },
    Normal { mean: f64, std: f64 },
}

impl Default for WeightDist {
    fn default() -> Self {
        WeightDist::Uniform {
            low: -1.0,
            high: 1.0,
        }
    }
}

/// Draws a random element from a ChaCha8 stream seeded with `seed`.
///
/// Entries are drawn in canonical flat order. For single-channel elements the
/// draw is repeated from the same stream until the hidden biases are pairwise
/// distinct, which fails only on a measure-zero event.
pub fn random_weights(
    arch: &Architecture,
    channels: usize,
    seed: u64,
    dist: WeightDist,
) -> WeightElement {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_weights_with(arch, channels, &mut rng, dist)
}

pub fn random_weights_with(
    arch: &Architecture,
    channels: usize,
    rng: &mut impl Rng,
    dist: WeightDist,
) -> WeightElement {
    use rand_distr::{Distribution, Normal, Uniform};
    let n = arch.param_count() * channels;
    loop {
        let values: Vec<f64> = match dist {
            WeightDist::Uniform { low, high } => {
                let u = Uniform::new(low, high);
                (0..n).map(|_| u.sample(rng)).collect()
            }
            WeightDist::Normal { mean, std } => {
                let d = Normal::new(mean, std).expect("std must be finite and non-negative");
                (0..n).map(|_| d.sample(rng)).collect()
            }
        };
        let v = unflatten(&FlatVector { values, channels }, arch, channels)
            .expect("length matches by construction");
        if channels != 1 || first_tie(&v, 0.0).is_none() {
            return v;
        }
    }
}
