//! Neural functional transformer components: structured dot-product
//! attention over weight-space entries, transformer-style blocks and
//! cross-attention pooling.
//!
//! Row attention (KV1) for `W_l[i][j]` queries with row `i` of `Q_l` against
//! the rows of `K_l` (plus, with adjacent terms, the columns of `K_{l-1}` and
//! `b_{l-1}`), and reads element `j` of the attended value array. Column
//! attention (KV2) does the same with column `j` against the columns of `K_l`,
//! the rows of `K_{l+1}` (adjacent) and `b_l`, reading element `i`. A bias
//! vector `b_l` queries the KV2 set as a whole and entry `i` reads element `i`.
//! KV3 lets every entry's own token attend over all tokens.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};
use crate::mlp::MlpSpec;
use crate::space::WeightElement;

/// Query/key/value matrices, each `c x c` and applied as `theta x`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projections {
    pub q: Vec<Vec<f64>>,
    pub k: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

fn eye(c: usize) -> Vec<Vec<f64>> {
    (0..c)
        .map(|i| (0..c).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

impl Projections {
    pub fn identity(c: usize) -> Self {
        Self {
            q: eye(c),
            k: eye(c),
            v: eye(c),
        }
    }

    pub fn random(c: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let u = Uniform::new(-scale, scale);
        let mut m = || -> Vec<Vec<f64>> {
            (0..c).map(|_| (0..c).map(|_| u.sample(rng)).collect()).collect()
        };
        Self {
            q: m(),
            k: m(),
            v: m(),
        }
    }

    fn check(&self, c: usize) -> Result<()> {
        for m in [&self.q, &self.k, &self.v] {
            if m.len() != c || m.iter().any(|r| r.len() != c) {
                return Err(Error::ChannelMismatch {
                    expected: c,
                    got: m.len(),
                });
            }
        }
        Ok(())
    }
}

fn mat_vec(m: &[Vec<f64>], x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(m) {
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o = acc;
    }
}

fn project(v: &WeightElement, m: &[Vec<f64>]) -> WeightElement {
    v.map_entries(m.len(), |x, y| mat_vec(m, x, y))
}

/// Softmax weights of `q` against `keys`, computed with max subtraction.
pub fn attention_weights(q: &[f64], keys: &[&[f64]]) -> Result<Vec<f64>> {
    if keys.is_empty() {
        return Err(Error::EmptyKv);
    }
    let scores = keys
        .iter()
        .map(|k| {
            if k.len() != q.len() {
                return Err(Error::DimensionMismatch {
                    expected: q.len(),
                    got: k.len(),
                });
            }
            Ok(q.iter().zip(k.iter()).map(|(a, b)| a * b).sum::<f64>())
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// Dot-product attention of `q` over `(key, value)` pairs.
pub fn nft_attention(q: &[f64], kvs: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<f64>> {
    let keys: Vec<&[f64]> = kvs.iter().map(|(k, _)| k.as_slice()).collect();
    let alpha = attention_weights(q, &keys)?;
    let dv = kvs[0].1.len();
    let mut out = vec![0.0; dv];
    for (a, (_, val)) in alpha.iter().zip(kvs) {
        if val.len() != dv {
            return Err(Error::DimensionMismatch {
                expected: dv,
                got: val.len(),
            });
        }
        for (o, x) in out.iter_mut().zip(val) {
            *o += a * x;
        }
    }
    Ok(out)
}

/// Row `i` of layer `l` as a flat `d_in * c` array.
fn row(v: &WeightElement, l: usize, i: usize) -> Vec<f64> {
    let d_in = v.arch().dims()[l];
    let c = v.channels();
    v.layers()[l].w[i * d_in * c..(i + 1) * d_in * c].to_vec()
}

/// Column `j` of layer `l` as a flat `d_out * c` array.
fn col(v: &WeightElement, l: usize, j: usize) -> Vec<f64> {
    let d_out = v.arch().dims()[l + 1];
    (0..d_out).flat_map(|i| v.w(l, i, j).iter().copied()).collect()
}

fn bias_vec(v: &WeightElement, l: usize) -> Vec<f64> {
    v.layers()[l].b.clone()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfAttentionParams {
    /// Heads for row attention; empty disables the summand.
    pub kv1: Vec<Projections>,
    /// Heads for column attention.
    pub kv2: Vec<Projections>,
    /// Heads for global attention.
    pub kv3: Vec<Projections>,
    /// Include the neighbouring-layer keys in KV1/KV2.
    pub adjacent_layers: bool,
    /// 1-based layers whose entries receive the update; `None` means all.
    pub target_layers: Option<Vec<usize>>,
    pub update_biases: bool,
}

impl SelfAttentionParams {
    pub fn all(c: usize, heads: Projections) -> Self {
        let _ = c;
        Self {
            kv1: vec![heads.clone()],
            kv2: vec![heads.clone()],
            kv3: vec![heads],
            adjacent_layers: true,
            target_layers: None,
            update_biases: true,
        }
    }

    /// True iff the entry kind in `layer` (1-based) receives the update.
    pub fn targets(&self, layer: usize, bias: bool) -> bool {
        let in_set = self
            .target_layers
            .as_ref()
            .map_or(true, |t| t.contains(&layer));
        in_set && (!bias || self.update_biases)
    }

    fn check(&self, c: usize) -> Result<()> {
        for p in self.kv1.iter().chain(&self.kv2).chain(&self.kv3) {
            p.check(c)?;
        }
        Ok(())
    }
}

fn kv1_layer(
    out: &mut WeightElement,
    q: &WeightElement,
    k: &WeightElement,
    v: &WeightElement,
    l: usize,
    adjacent: bool,
) -> Result<()> {
    let arch = q.arch();
    let c = q.channels();
    let (d_out, d_in) = arch.layer_shape(l);
    let mut kvs: Vec<(Vec<f64>, Vec<f64>)> = (0..d_out).map(|p| (row(k, l, p), row(v, l, p))).collect();
    if adjacent && l >= 1 {
        for qn in 0..arch.dims()[l - 1] {
            kvs.push((col(k, l - 1, qn), col(v, l - 1, qn)));
        }
        kvs.push((bias_vec(k, l - 1), bias_vec(v, l - 1)));
    }
    for i in 0..d_out {
        let att = nft_attention(&row(q, l, i), &kvs)?;
        for j in 0..d_in {
            let dst = out.w_mut(l, i, j);
            for (d, a) in dst.iter_mut().zip(&att[j * c..(j + 1) * c]) {
                *d += a;
            }
        }
    }
    Ok(())
}

fn kv2_layer(
    out: &mut WeightElement,
    q: &WeightElement,
    k: &WeightElement,
    v: &WeightElement,
    l: usize,
    adjacent: bool,
    weights: bool,
    biases: bool,
) -> Result<()> {
    let arch = q.arch();
    let c = q.channels();
    let (d_out, d_in) = arch.layer_shape(l);
    let mut kvs: Vec<(Vec<f64>, Vec<f64>)> = (0..d_in).map(|qn| (col(k, l, qn), col(v, l, qn))).collect();
    if adjacent && l + 1 < arch.num_layers() {
        for p in 0..arch.dims()[l + 2] {
            kvs.push((row(k, l + 1, p), row(v, l + 1, p)));
        }
    }
    kvs.push((bias_vec(k, l), bias_vec(v, l)));
    if weights {
        for j in 0..d_in {
            let att = nft_attention(&col(q, l, j), &kvs)?;
            for i in 0..d_out {
                let dst = out.w_mut(l, i, j);
                for (d, a) in dst.iter_mut().zip(&att[i * c..(i + 1) * c]) {
                    *d += a;
                }
            }
        }
    }
    if biases {
        let att = nft_attention(&bias_vec(q, l), &kvs)?;
        for i in 0..d_out {
            let dst = out.b_mut(l, i);
            for (d, a) in dst.iter_mut().zip(&att[i * c..(i + 1) * c]) {
                *d += a;
            }
        }
    }
    Ok(())
}

/// Sum of the enabled attention summands; untargeted entries are zero.
pub fn nft_self_attention(x: &WeightElement, p: &SelfAttentionParams) -> Result<WeightElement> {
    let c = x.channels();
    p.check(c)?;
    let arch = x.arch();
    let big_l = arch.num_layers();
    let mut out = WeightElement::zeros(arch, c);
    for h in &p.kv1 {
        let (q, k, v) = (project(x, &h.q), project(x, &h.k), project(x, &h.v));
        for l in 0..big_l {
            if p.targets(l + 1, false) {
                kv1_layer(&mut out, &q, &k, &v, l, p.adjacent_layers)?;
            }
        }
    }
    for h in &p.kv2 {
        let (q, k, v) = (project(x, &h.q), project(x, &h.k), project(x, &h.v));
        for l in 0..big_l {
            let (tw, tb) = (p.targets(l + 1, false), p.targets(l + 1, true));
            if tw || tb {
                kv2_layer(&mut out, &q, &k, &v, l, p.adjacent_layers, tw, tb)?;
            }
        }
    }
    for h in &p.kv3 {
        let (q, k, v) = (project(x, &h.q), project(x, &h.k), project(x, &h.v));
        let kvs: Vec<(Vec<f64>, Vec<f64>)> = k.entries().zip(v.entries()).map(|(a, b)| (a.to_vec(), b.to_vec())).collect();
        for l in 0..big_l {
            let (d_out, d_in) = arch.layer_shape(l);
            for i in 0..d_out {
                if p.targets(l + 1, false) {
                    for j in 0..d_in {
                        let att = nft_attention(q.w(l, i, j), &kvs)?;
                        for (d, a) in out.w_mut(l, i, j).iter_mut().zip(&att) {
                            *d += a;
                        }
                    }
                }
                if p.targets(l + 1, true) {
                    let att = nft_attention(q.b(l, i), &kvs)?;
                    for (d, a) in out.b_mut(l, i).iter_mut().zip(&att) {
                        *d += a;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Per-entry layer normalization over channels (no affine parameters).
pub fn layer_norm(v: &WeightElement, eps: f64) -> WeightElement {
    v.map_entries(v.channels(), |x, y| {
        let n = x.len() as f64;
        let mean = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let s = (var + eps).sqrt();
        for (o, a) in y.iter_mut().zip(x) {
            *o = (a - mean) / s;
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub sa: SelfAttentionParams,
    /// Pointwise `c -> c` map; `None` skips the second stage.
    pub mlp: Option<MlpSpec>,
    pub use_layernorm: bool,
    pub ln_eps: f64,
    /// `z = x + SA(LN x)` when set; otherwise targeted entries are replaced
    /// by the attention output and the rest pass through.
    pub sa_residual: bool,
    /// `out = z + MLP(LN z)` when set; otherwise `out = MLP(LN z)`.
    pub mlp_residual: bool,
}

impl BlockParams {
    pub fn new(sa: SelfAttentionParams, mlp: Option<MlpSpec>) -> Self {
        Self {
            sa,
            mlp,
            use_layernorm: true,
            ln_eps: 1e-5,
            sa_residual: true,
            mlp_residual: true,
        }
    }
}

pub fn nft_block(x: &WeightElement, p: &BlockParams) -> Result<WeightElement> {
    let c = x.channels();
    let norm = |v: &WeightElement| {
        if p.use_layernorm {
            layer_norm(v, p.ln_eps)
        } else {
            v.clone()
        }
    };
    let s = nft_self_attention(&norm(x), &p.sa)?;
    let mut z = x.clone();
    for l in 0..x.num_layers() {
        let (tw, tb) = (p.sa.targets(l + 1, false), p.sa.targets(l + 1, true));
        let (dst, src) = (&mut z.layers_mut()[l], &s.layers()[l]);
        for (flag, d, a) in [(tw, &mut dst.w, &src.w), (tb, &mut dst.b, &src.b)] {
            if p.sa_residual {
                for (di, ai) in d.iter_mut().zip(a) {
                    *di += ai;
                }
            } else if flag {
                d.copy_from_slice(a);
            }
        }
    }
    let Some(mlp) = &p.mlp else {
        return Ok(z);
    };
    if mlp.in_dim() != c || mlp.out_dim() != c {
        return Err(Error::ChannelMismatch {
            expected: c,
            got: mlp.in_dim(),
        });
    }
    let m = norm(&z).map_entries(c, |a, b| mlp.eval_into(a, b));
    if !p.mlp_residual {
        return Ok(m);
    }
    let mut out = z;
    for (o, y) in out.layers_mut().iter_mut().zip(m.layers()) {
        for (oi, yi) in o.w.iter_mut().zip(&y.w).chain(o.b.iter_mut().zip(&y.b)) {
            *oi += yi;
        }
    }
    Ok(out)
}

/// Learned per-layer offsets added to weights (`phi_w`) and biases (`phi_b`).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEncoding {
    pub phi_w: Vec<Vec<f64>>,
    pub phi_b: Vec<Vec<f64>>,
}

pub fn layer_encoding(v: &WeightElement, le: &LayerEncoding) -> Result<WeightElement> {
    let c = v.channels();
    if le.phi_w.len() != v.num_layers() || le.phi_b.len() != v.num_layers() {
        return Err(Error::DimensionMismatch {
            expected: v.num_layers(),
            got: le.phi_w.len().min(le.phi_b.len()),
        });
    }
    let mut out = v.clone();
    for (l, p) in out.layers_mut().iter_mut().enumerate() {
        for (xs, phi) in [(&mut p.w, &le.phi_w[l]), (&mut p.b, &le.phi_b[l])] {
            if phi.len() != c {
                return Err(Error::ChannelMismatch {
                    expected: c,
                    got: phi.len(),
                });
            }
            for e in xs.chunks_mut(c) {
                for (a, b) in e.iter_mut().zip(phi) {
                    *a += b;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoolParams {
    pub token: Vec<f64>,
    pub proj: Projections,
    pub mlp: Option<MlpSpec>,
}

impl PoolParams {
    /// Zero query/key and identity value: the uniform mean of all entries.
    pub fn mean(c: usize) -> Self {
        Self {
            token: vec![0.0; c],
            proj: Projections {
                q: vec![vec![0.0; c]; c],
                k: vec![vec![0.0; c]; c],
                v: eye(c),
            },
            mlp: None,
        }
    }
}

/// Cross-attention of the learned token over every entry, then the optional MLP.
pub fn nft_pool(x: &WeightElement, p: &PoolParams) -> Result<Vec<f64>> {
    let c = x.channels();
    p.proj.check(c)?;
    if p.token.len() != c {
        return Err(Error::ChannelMismatch {
            expected: c,
            got: p.token.len(),
        });
    }
    let mut q = vec![0.0; c];
    mat_vec(&p.proj.q, &p.token, &mut q);
    let k = project(x, &p.proj.k);
    let v = project(x, &p.proj.v);
    let kvs: Vec<(Vec<f64>, Vec<f64>)> = k.entries().zip(v.entries()).map(|(a, b)| (a.to_vec(), b.to_vec())).collect();
    let pooled = nft_attention(&q, &kvs)?;
    match &p.mlp {
        Some(m) => m.eval(&pooled),
        None => Ok(pooled),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{act, random_weights, Activation, Architecture, GroupElement, WeightDist};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c8_first() -> WeightElement {
        let w2 = vec![
            vec![1.0, 1.0, 0.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0, 1.0],
            vec![1.0, 0.0, 0.0, 1.0],
        ];
        WeightElement::from_matrices(
            Architecture::relu(&[1, 4, 4, 1]).unwrap(),
            &[vec![vec![1.0]; 4], w2, vec![vec![1.0; 4]]],
            &[vec![0.0; 4], vec![0.0; 4], vec![0.0]],
        )
        .unwrap()
    }

    #[test]
    fn attention_basics() {
        let single = nft_attention(&[1.0, 2.0], &[(vec![3.0, 4.0], vec![5.0, 6.0])]).unwrap();
        assert_eq!(single, vec![5.0, 6.0]);
        let kvs = vec![(vec![0.0, 1.0], vec![1.0]), (vec![0.0, -2.0], vec![3.0])];
        let out = nft_attention(&[1.0, 0.0], &kvs).unwrap();
        assert!((out[0] - 2.0).abs() < 1e-15);
        assert_eq!(nft_attention(&[1.0], &[]), Err(Error::EmptyKv));
    }

    #[test]
    fn row_attention_on_circulant_rows() {
        let v = c8_first();
        let rows: Vec<Vec<f64>> = (0..4).map(|p| row(&v, 1, p)).collect();
        let kvs: Vec<(Vec<f64>, Vec<f64>)> = rows.iter().map(|r| (r.clone(), r.clone())).collect();
        let out = nft_attention(&rows[0], &kvs).unwrap();
        let hi = std::f64::consts::E / (1.0 + std::f64::consts::E);
        for (o, e) in out.iter().zip([hi, hi, 1.0 - hi, 1.0 - hi]) {
            assert!((o - e).abs() < 1e-12);
        }
        assert!((hi - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn zero_values_give_zero_update() {
        let a = Architecture::relu(&[2, 3, 2]).unwrap();
        let v = random_weights(&a, 2, 1, WeightDist::default());
        let mut pr = Projections::identity(2);
        pr.v = vec![vec![0.0; 2]; 2];
        let sa = nft_self_attention(&v, &SelfAttentionParams::all(2, pr)).unwrap();
        assert!(sa.entries().all(|e| e.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn kv3_with_zero_scores_is_uniform_mean() {
        let a = Architecture::relu(&[1, 3, 1]).unwrap();
        let v = random_weights(&a, 2, 2, WeightDist::default());
        let pr = Projections {
            q: vec![vec![0.0; 2]; 2],
            k: vec![vec![0.0; 2]; 2],
            v: eye(2),
        };
        let p = SelfAttentionParams {
            kv1: vec![],
            kv2: vec![],
            kv3: vec![pr],
            adjacent_layers: true,
            target_layers: None,
            update_biases: true,
        };
        let sa = nft_self_attention(&v, &p).unwrap();
        let m = a.param_count() as f64;
        let mut mean = [0.0; 2];
        for e in v.entries() {
            mean[0] += e[0] / m;
            mean[1] += e[1] / m;
        }
        for e in sa.entries() {
            assert!((e[0] - mean[0]).abs() < 1e-12 && (e[1] - mean[1]).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_block_is_identity() {
        let a = Architecture::relu(&[2, 3, 2]).unwrap();
        let v = random_weights(&a, 2, 3, WeightDist::default());
        let sa = SelfAttentionParams {
            kv1: vec![],
            kv2: vec![],
            kv3: vec![],
            adjacent_layers: false,
            target_layers: None,
            update_biases: true,
        };
        let out = nft_block(&v, &BlockParams::new(sa, None)).unwrap();
        assert!(out.bit_eq(&v));
    }

    #[test]
    fn pool_mean_and_constant_tokens() {
        let v = c8_first();
        let m = nft_pool(&v, &PoolParams::mean(1)).unwrap();
        assert!((m[0] - 16.0 / 33.0).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = Architecture::relu(&[1, 2, 1]).unwrap();
        let mut same = WeightElement::zeros(&a, 2);
        for p in same.layers_mut() {
            for e in p.w.chunks_mut(2).chain(p.b.chunks_mut(2)) {
                e.copy_from_slice(&[0.25, -1.5]);
            }
        }
        let pp = PoolParams {
            token: vec![0.3, 0.7],
            proj: Projections {
                v: eye(2),
                ..Projections::random(2, 1.0, &mut rng)
            },
            mlp: None,
        };
        let out = nft_pool(&same, &pp).unwrap();
        assert!((out[0] - 0.25).abs() < 1e-15 && (out[1] + 1.5).abs() < 1e-15);
    }

    #[test]
    fn layer_encoding_adds_offsets() {
        let a = Architecture::relu(&[1, 2, 1]).unwrap();
        let v = WeightElement::zeros(&a, 1);
        let le = LayerEncoding {
            phi_w: vec![vec![1.0], vec![2.0]],
            phi_b: vec![vec![3.0], vec![4.0]],
        };
        let out = layer_encoding(&v, &le).unwrap();
        assert_eq!(out.layers()[0].w, vec![1.0, 1.0]);
        assert_eq!(out.layers()[1].b, vec![4.0]);
    }

    #[test]
    fn block_is_equivariant() {
        let a = Architecture::relu(&[2, 4, 3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v = random_weights(&a, 3, 5, WeightDist::default());
        let sa = SelfAttentionParams {
            kv1: vec![Projections::random(3, 1.0, &mut rng)],
            kv2: vec![Projections::random(3, 1.0, &mut rng)],
            kv3: vec![Projections::random(3, 1.0, &mut rng)],
            adjacent_layers: true,
            target_layers: None,
            update_biases: true,
        };
        let mlp = MlpSpec::random(&[3, 6, 3], Activation::Relu, &mut rng).unwrap();
        let bp = BlockParams::new(sa, Some(mlp));
        let out = nft_block(&v, &bp).unwrap();
        for _ in 0..5 {
            let g = GroupElement::random(&a, &mut rng);
            let lhs = nft_block(&act(&g, &v).unwrap(), &bp).unwrap();
            let rhs = act(&g, &out).unwrap();
            assert!(lhs.max_abs_diff(&rhs).unwrap() < 1e-12);
        }
    }
}
