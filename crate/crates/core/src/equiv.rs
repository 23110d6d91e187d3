//! Witnesses for the relations between permutation equivalence, functional
//! equivalence and what the weight-space architectures can tell apart.

use serde::Serialize;

use crate::arch::nft::{
    layer_encoding, nft_block, nft_pool, BlockParams, LayerEncoding, PoolParams, Projections,
    SelfAttentionParams,
};
use crate::error::{Error, Result};
use crate::graph::{build_graph, wl_distinguishable, Variant};
use crate::mlp::MlpSpec;
use crate::regions::{pl_equal, regions_1d};
use crate::space::{act, realize, Activation, Architecture, GroupElement, WeightElement};

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut n: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let (mut out, mut f) = (0.0, inv);
    while n > 0 {
        out += (n % base) as f64 * f;
        n /= base;
        f *= inv;
    }
    out
}

/// `n` points of the Halton sequence in the box, skipping index 0.
pub fn halton_points(domain: &[(f64, f64)], n: usize) -> Vec<Vec<f64>> {
    (1..=n as u64)
        .map(|k| {
            domain
                .iter()
                .enumerate()
                .map(|(d, &(lo, hi))| {
                    let base = PRIMES[d % PRIMES.len()] as u64 + (d / PRIMES.len()) as u64 * 2;
                    lo + (hi - lo) * radical_inverse(k, base)
                })
                .collect()
        })
        .collect()
}

fn same_arch(v: &WeightElement, w: &WeightElement) -> Result<()> {
    if v.arch() != w.arch() {
        return Err(Error::ArchMismatch(format!(
            "{:?} vs {:?}",
            v.arch().dims(),
            w.arch().dims()
        )));
    }
    Ok(())
}

/// Largest output gap over a Halton sample of the box is at most `tol`.
pub fn functionally_equal(
    v: &WeightElement,
    w: &WeightElement,
    domain: &[(f64, f64)],
    n_samples: usize,
    tol: f64,
) -> Result<bool> {
    same_arch(v, w)?;
    for x in [v, w] {
        if x.channels() != 1 {
            return Err(Error::UnsupportedChannels(x.channels()));
        }
    }
    if domain.len() != v.arch().input_dim() {
        return Err(Error::DimensionMismatch {
            expected: v.arch().input_dim(),
            got: domain.len(),
        });
    }
    for x in halton_points(domain, n_samples) {
        let (a, b) = (realize(v, &x)?, realize(w, &x)?);
        if a.iter().zip(&b).any(|(p, q)| (p - q).abs() > tol) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Exact comparison of the piecewise-affine descriptions on `interval`.
pub fn functionally_equal_exact(
    v: &WeightElement,
    w: &WeightElement,
    interval: (f64, f64),
    tol: f64,
) -> Result<bool> {
    same_arch(v, w)?;
    pl_equal(&regions_1d(v, interval)?, &regions_1d(w, interval)?, tol)
}

pub const G_BUDGET: u128 = 10_000_000;

/// Rearranges `p` into the next permutation in lexicographic order.
fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn matches(a: &WeightElement, b: &WeightElement, tol: f64) -> bool {
    if tol == 0.0 {
        a.bit_eq(b)
    } else {
        a.max_abs_diff(b).is_some_and(|d| d <= tol)
    }
}

/// All elements of the permutation group of `arch`, in lexicographic order
/// of their image arrays with the first hidden layer most significant.
#[derive(Debug, Clone)]
pub struct GroupElements {
    arch: Architecture,
    next: Option<Vec<Vec<usize>>>,
}

impl GroupElements {
    pub fn new(arch: &Architecture) -> Self {
        Self {
            arch: arch.clone(),
            next: Some(arch.hidden_dims().iter().map(|&d| (0..d).collect()).collect()),
        }
    }
}

impl Iterator for GroupElements {
    type Item = GroupElement;

    fn next(&mut self) -> Option<GroupElement> {
        let perms = self.next.take()?;
        let g = GroupElement::new(&self.arch, perms.clone()).expect("valid permutations");
        let mut succ = perms;
        let mut k = succ.len();
        while k > 0 {
            k -= 1;
            if next_permutation(&mut succ[k]) {
                self.next = Some(succ);
                break;
            }
            succ[k].sort_unstable();
        }
        Some(g)
    }
}

/// Exhaustive search for `g` with `act(g, v) == w`; the witness returned is
/// the first in [`GroupElements`] order.
pub fn g_equivalent(
    v: &WeightElement,
    w: &WeightElement,
    tol: f64,
) -> Result<(bool, Option<GroupElement>)> {
    same_arch(v, w)?;
    let order = v.arch().group_order();
    if order > G_BUDGET {
        return Err(Error::BudgetExceeded {
            order,
            budget: G_BUDGET,
        });
    }
    for g in GroupElements::new(v.arch()) {
        if matches(&act(&g, v)?, w, tol) {
            return Ok((true, Some(g)));
        }
    }
    Ok((false, None))
}

/// The scaling pair on `(1, 2, 1)`: first layer scaled by `lambda`, second by `1/lambda`.
pub fn counterexample_scaling(lambda: f64) -> Result<(WeightElement, WeightElement)> {
    if !lambda.is_finite() || lambda <= 0.0 || lambda == 1.0 {
        return Err(Error::BadLambda(lambda));
    }
    let arch = Architecture::relu(&[1, 2, 1])?;
    let zeros = [vec![0.0, 0.0], vec![0.0]];
    let v = WeightElement::from_matrices(
        arch.clone(),
        &[vec![vec![1.0], vec![0.0]], vec![vec![1.0, 0.0]]],
        &zeros,
    )?;
    let w = WeightElement::from_matrices(
        arch,
        &[vec![vec![lambda], vec![0.0]], vec![vec![1.0 / lambda, 0.0]]],
        &zeros,
    )?;
    Ok((v, w))
}

/// The binary `(1, 4, 4, 1)` pair with a rank-3 circulant and a rank-2 block middle layer.
pub fn counterexample_wl() -> (WeightElement, WeightElement) {
    let arch = Architecture::relu(&[1, 4, 4, 1]).expect("valid dims");
    let circ = vec![
        vec![1.0, 1.0, 0.0, 0.0],
        vec![0.0, 1.0, 1.0, 0.0],
        vec![0.0, 0.0, 1.0, 1.0],
        vec![1.0, 0.0, 0.0, 1.0],
    ];
    let block = vec![
        vec![1.0, 1.0, 0.0, 0.0],
        vec![1.0, 1.0, 0.0, 0.0],
        vec![0.0, 0.0, 1.0, 1.0],
        vec![0.0, 0.0, 1.0, 1.0],
    ];
    let biases = [vec![0.0; 4], vec![0.0; 4], vec![0.0]];
    let make = |w2: Vec<Vec<f64>>| {
        WeightElement::from_matrices(
            arch.clone(),
            &[vec![vec![1.0]; 4], w2, vec![vec![1.0; 4]]],
            &biases,
        )
        .expect("shapes match")
    };
    (make(circ), make(block))
}

/// Sum of all first-layer weights (channel 0).
pub fn w1_sum_invariant(v: &WeightElement) -> f64 {
    v.layers()[0].w.chunks(v.channels()).map(|e| e[0]).sum()
}

/// Rank of an integer matrix by fraction-free (Bareiss) elimination.
pub fn integer_rank(m: &[Vec<i64>]) -> usize {
    let mut a: Vec<Vec<i128>> = m.iter().map(|r| r.iter().map(|&x| x as i128).collect()).collect();
    let rows = a.len();
    let cols = a.first().map_or(0, Vec::len);
    let mut rank = 0;
    let mut prev: i128 = 1;
    for col in 0..cols {
        let Some(p) = (rank..rows).find(|&r| a[r][col] != 0) else {
            continue;
        };
        a.swap(rank, p);
        for r in rank + 1..rows {
            for c in col + 1..cols {
                a[r][c] = (a[rank][col] * a[r][c] - a[r][col] * a[rank][c]) / prev;
            }
            a[r][col] = 0;
        }
        prev = a[rank][col];
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

/// Integer matrix of layer `l` (channel 0); `None` if some entry is not integral.
pub fn integer_matrix(v: &WeightElement, l: usize) -> Option<Vec<Vec<i64>>> {
    v.weight_matrix(l)
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|x| (x.fract() == 0.0 && x.abs() < 9e15).then_some(x as i64))
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NftSeparation {
    pub outputs: (f64, f64),
    /// Middle weight matrix after the attention block, per input.
    pub after_attention: (Vec<Vec<f64>>, Vec<Vec<f64>>),
    /// Middle weight matrix after the thresholding block, per input.
    pub after_threshold: (Vec<Vec<f64>>, Vec<Vec<f64>>),
}

/// Ramp MLP: 0 up to 13/16, 1 from 27/32, linear in between.
/// Both knots are dyadic so the plateaus are reproduced exactly.
pub fn threshold_mlp() -> MlpSpec {
    let arch = Architecture::new(vec![1, 2, 1], Activation::Relu).expect("valid dims");
    let net = WeightElement::from_matrices(
        arch,
        &[vec![vec![1.0], vec![1.0]], vec![vec![32.0, -32.0]]],
        &[vec![-0.8125, -0.84375], vec![0.0]],
    )
    .expect("shapes match");
    MlpSpec::new(net).expect("single channel")
}

/// Blocks used by the separation pipeline: row attention on the middle layer
/// as a replacement update, then a residual-only attention stage followed by
/// a non-residual threshold MLP. Layer norm is off in both.
pub fn nft_separation_blocks() -> (BlockParams, BlockParams) {
    let none = SelfAttentionParams {
        kv1: vec![],
        kv2: vec![],
        kv3: vec![],
        adjacent_layers: false,
        target_layers: None,
        update_biases: true,
    };
    let block1 = BlockParams {
        sa: SelfAttentionParams {
            kv1: vec![Projections::identity(1)],
            target_layers: Some(vec![2]),
            update_biases: false,
            ..none.clone()
        },
        mlp: None,
        use_layernorm: false,
        ln_eps: 1e-5,
        sa_residual: false,
        mlp_residual: true,
    };
    let silent = Projections {
        v: vec![vec![0.0]],
        ..Projections::identity(1)
    };
    let block2 = BlockParams {
        sa: SelfAttentionParams {
            kv1: vec![silent.clone()],
            kv2: vec![silent.clone()],
            kv3: vec![silent],
            adjacent_layers: true,
            ..none
        },
        mlp: Some(threshold_mlp()),
        use_layernorm: false,
        ln_eps: 1e-5,
        sa_residual: true,
        mlp_residual: false,
    };
    (block1, block2)
}

/// Runs the pipeline on one input; returns the pooled scalar and both
/// intermediate middle-layer matrices.
pub fn nft_separation_pipeline(
    v: &WeightElement,
) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let (b1, b2) = nft_separation_blocks();
    let le = LayerEncoding {
        phi_w: vec![vec![0.0]; v.num_layers()],
        phi_b: vec![vec![0.0]; v.num_layers()],
    };
    let x = layer_encoding(v, &le)?;
    let x1 = nft_block(&x, &b1)?;
    let x2 = nft_block(&x1, &b2)?;
    let pooled = nft_pool(&x2, &PoolParams::mean(1))?;
    Ok((pooled[0], x1.weight_matrix(1), x2.weight_matrix(1)))
}

pub fn nft_separation_demo() -> Result<NftSeparation> {
    let (v1, v2) = counterexample_wl();
    let (o1, a1, t1) = nft_separation_pipeline(&v1)?;
    let (o2, a2, t2) = nft_separation_pipeline(&v2)?;
    Ok(NftSeparation {
        outputs: (o1, o2),
        after_attention: (a1, a2),
        after_threshold: (t1, t2),
    })
}

/// True iff the symmetric Hausdorff distance between the realized functions
/// of `a` and the sampled targets `b`, under the sup-norm on `grid`, is below `eps`.
///
/// `b[k][n]` is the output vector of target `k` at `grid[n]`.
pub fn eps_approx_check(
    a: &[WeightElement],
    b: &[Vec<Vec<f64>>],
    grid: &[Vec<f64>],
    eps: f64,
) -> Result<bool> {
    if a.is_empty() || b.is_empty() || grid.is_empty() {
        return Err(Error::EmptySet);
    }
    let fa = a
        .iter()
        .map(|v| grid.iter().map(|x| realize(v, x)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    for t in b {
        if t.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                got: t.len(),
            });
        }
    }
    let dist = |f: &[Vec<f64>], g: &[Vec<f64>]| -> f64 {
        f.iter()
            .zip(g)
            .flat_map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    };
    let directed = |xs: &[Vec<Vec<f64>>], ys: &[Vec<Vec<f64>>]| -> f64 {
        xs.iter()
            .map(|x| ys.iter().map(|y| dist(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    let h = directed(&fa, b).max(directed(b, &fa));
    Ok(h < eps)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessReport {
    pub name: String,
    pub g_equivalent: Option<bool>,
    pub functionally_equal: Option<bool>,
    pub wl_distinguishable: Option<bool>,
    pub rank_left: Option<usize>,
    pub rank_right: Option<usize>,
    pub invariant_left: Option<f64>,
    pub invariant_right: Option<f64>,
    pub notes: Vec<String>,
}

impl WitnessReport {
    fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            g_equivalent: None,
            functionally_equal: None,
            wl_distinguishable: None,
            rank_left: None,
            rank_right: None,
            invariant_left: None,
            invariant_right: None,
            notes: Vec::new(),
        }
    }
}

pub fn wl_witness() -> Result<WitnessReport> {
    let (v, w) = counterexample_wl();
    let mut r = WitnessReport::new("wl");
    let rank = |x: &WeightElement| integer_matrix(x, 1).map(|m| integer_rank(&m));
    r.rank_left = rank(&v);
    r.rank_right = rank(&w);
    let mut any = false;
    for variant in [Variant::Gmn, Variant::Ng] {
        let d = wl_distinguishable(&build_graph(&v, variant), &build_graph(&w, variant))?;
        r.notes.push(format!("{variant:?} graphs distinguishable: {d}"));
        any |= d;
    }
    r.wl_distinguishable = Some(any);
    r.g_equivalent = Some(g_equivalent(&v, &w, 0.0)?.0);
    r.notes.push(format!("searched {} group elements", v.arch().group_order()));
    r.functionally_equal = Some(functionally_equal_exact(&v, &w, (-10.0, 10.0), 0.0)?);
    Ok(r)
}

pub fn scaling_witness(lambda: f64) -> Result<WitnessReport> {
    let (v, w) = counterexample_scaling(lambda)?;
    let mut r = WitnessReport::new("scaling");
    r.functionally_equal = Some(functionally_equal_exact(&v, &w, (-10.0, 10.0), 1e-12)?);
    r.g_equivalent = Some(g_equivalent(&v, &w, 0.0)?.0);
    r.invariant_left = Some(w1_sum_invariant(&v));
    r.invariant_right = Some(w1_sum_invariant(&w));
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{random_weights, WeightDist};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn halton_is_in_box_and_deterministic() {
        let pts = halton_points(&[(0.0, 1.0), (-2.0, 2.0)], 50);
        assert_eq!(pts, halton_points(&[(0.0, 1.0), (-2.0, 2.0)], 50));
        assert!(pts.iter().all(|p| p[0] > 0.0 && p[0] < 1.0 && p[1] > -2.0 && p[1] < 2.0));
        assert_eq!(pts[0], vec![0.5, -2.0 + 4.0 / 3.0]);
    }

    #[test]
    fn permuted_nets_are_functionally_equal() {
        let a = Architecture::relu(&[2, 4, 3, 1]).unwrap();
        let v = random_weights(&a, 1, 1, WeightDist::default());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = GroupElement::random(&a, &mut rng);
        let gv = act(&g, &v).unwrap();
        assert!(functionally_equal(&v, &gv, &[(-1.0, 1.0); 2], 256, 1e-9).unwrap());
    }

    #[test]
    fn scaling_pair() {
        let (v, w) = counterexample_scaling(2.0).unwrap();
        assert!(functionally_equal_exact(&v, &w, (-10.0, 10.0), 0.0).unwrap());
        assert_eq!((w1_sum_invariant(&v), w1_sum_invariant(&w)), (1.0, 2.0));
        assert_eq!(g_equivalent(&v, &w, 0.0).unwrap(), (false, None));
        let mut shifted = v.clone();
        shifted.layers_mut()[1].b[0] = 1.0;
        assert!(!functionally_equal_exact(&v, &shifted, (-10.0, 10.0), 1e-9).unwrap());
        assert!(!functionally_equal(&v, &shifted, &[(-1.0, 1.0)], 16, 1e-9).unwrap());
        for bad in [0.0, 1.0, -2.0, f64::NAN] {
            assert!(counterexample_scaling(bad).is_err());
        }
    }

    #[test]
    fn wl_pair_ranks_and_search() {
        let (v, w) = counterexample_wl();
        assert_eq!(integer_rank(&integer_matrix(&v, 1).unwrap()), 3);
        assert_eq!(integer_rank(&integer_matrix(&w, 1).unwrap()), 2);
        assert_eq!(g_equivalent(&v, &w, 0.0).unwrap(), (false, None));
        assert_eq!(realize(&v, &[1.0]).unwrap(), vec![8.0]);
        assert_eq!(realize(&w, &[-1.0]).unwrap(), vec![0.0]);
    }

    #[test]
    fn group_elements_enumerates_each_once() {
        let a = Architecture::relu(&[1, 3, 2, 1]).unwrap();
        let all: Vec<GroupElement> = GroupElements::new(&a).collect();
        assert_eq!(all.len(), 12);
        assert!(all[0].is_identity());
        assert_eq!(all[1].perms(), &[vec![0, 1, 2], vec![1, 0]]);
        let mut seen: Vec<_> = all.iter().map(|g| g.perms().to_vec()).collect();
        seen.dedup();
        assert_eq!(seen.len(), 12);
        assert_eq!(GroupElements::new(&Architecture::relu(&[2, 3]).unwrap()).count(), 1);
    }

    #[test]
    fn integer_rank_cases() {
        assert_eq!(integer_rank(&[vec![0, 0], vec![0, 0]]), 0);
        assert_eq!(integer_rank(&[vec![2, 4], vec![1, 2]]), 1);
        assert_eq!(integer_rank(&[vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 10]]), 3);
        assert_eq!(integer_rank(&[vec![0, 1], vec![1, 0], vec![1, 1]]), 2);
    }

    #[test]
    fn g_equivalence_witnesses() {
        let a = Architecture::relu(&[1, 2, 1]).unwrap();
        let v = random_weights(&a, 1, 3, WeightDist::default());
        let swap = GroupElement::new(&a, vec![vec![1, 0]]).unwrap();
        assert_eq!(
            g_equivalent(&v, &act(&swap, &v).unwrap(), 0.0).unwrap(),
            (true, Some(swap))
        );
        let (ok, g) = g_equivalent(&v, &v, 0.0).unwrap();
        assert!(ok && g.unwrap().is_identity());
        let big = random_weights(&Architecture::relu(&[1, 11, 1]).unwrap(), 1, 0, WeightDist::default());
        assert!(matches!(g_equivalent(&big, &big, 0.0), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn g_equivalence_is_an_equivalence_relation() {
        let a = Architecture::relu(&[1, 3, 2, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let v = random_weights(&a, 1, 9, WeightDist::default());
        let u = random_weights(&a, 1, 10, WeightDist::default());
        let g = GroupElement::random(&a, &mut rng);
        let h = GroupElement::random(&a, &mut rng);
        let gv = act(&g, &v).unwrap();
        let hgv = act(&h, &gv).unwrap();
        let (_, w1) = g_equivalent(&v, &gv, 0.0).unwrap();
        let (_, back) = g_equivalent(&gv, &v, 0.0).unwrap();
        assert_eq!(back.unwrap(), w1.unwrap().inverse());
        assert!(g_equivalent(&v, &hgv, 0.0).unwrap().0);
        assert!(!g_equivalent(&v, &u, 0.0).unwrap().0);
    }

    #[test]
    fn threshold_plateaus_are_exact() {
        let m = threshold_mlp();
        for (x, y) in [(0.0, 0.0), (0.7310585786300049, 0.0), (0.8807970779778823, 1.0), (1.0, 1.0), (-3.0, 0.0)] {
            assert_eq!(m.eval(&[x]).unwrap(), vec![y]);
        }
        let mid = m.eval(&[0.83]).unwrap()[0];
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn nft_separation_values() {
        let d = nft_separation_demo().unwrap();
        assert!((d.outputs.0 - 8.0 / 33.0).abs() <= 1e-12);
        assert!((d.outputs.1 - 16.0 / 33.0).abs() <= 1e-12);
        let e = std::f64::consts::E;
        let (hi1, hi2) = (e / (e + 1.0), e * e / (e * e + 1.0));
        let printed1 = [[0.73, 0.73, 0.27, 0.27], [0.27, 0.73, 0.73, 0.27], [0.27, 0.27, 0.73, 0.73], [0.73, 0.27, 0.27, 0.73]];
        for (r, pr) in d.after_attention.0.iter().zip(printed1) {
            for (x, p) in r.iter().zip(pr) {
                assert!((x - p).abs() < 1e-2);
                let exact = if p > 0.5 { hi1 } else { 1.0 - hi1 };
                assert!((x - exact).abs() < 1e-12);
            }
        }
        for (i, r) in d.after_attention.1.iter().enumerate() {
            for (j, x) in r.iter().enumerate() {
                let exact = if (i < 2) == (j < 2) { hi2 } else { 1.0 - hi2 };
                assert!((x - exact).abs() < 1e-12);
            }
        }
        assert!(d.after_threshold.0.iter().flatten().all(|&x| x == 0.0));
        assert_eq!(d.after_threshold.1, counterexample_wl().1.weight_matrix(1));
    }

    #[test]
    fn nft_outputs_are_permutation_invariant() {
        let (v1, v2) = counterexample_wl();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..20 {
            let g = GroupElement::random(v1.arch(), &mut rng);
            for (v, want) in [(&v1, 8.0 / 33.0), (&v2, 16.0 / 33.0)] {
                let (out, _, _) = nft_separation_pipeline(&act(&g, v).unwrap()).unwrap();
                assert!((out - want).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn w1_sum_cases() {
        let a = Architecture::relu(&[3, 4, 2]).unwrap();
        assert_eq!(w1_sum_invariant(&WeightElement::zeros(&a, 1)), 0.0);
        let v = WeightElement::from_matrices(
            a.clone(),
            &[vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0], vec![10.0, 11.0, 12.0]], vec![vec![0.0; 4]; 2]],
            &[vec![0.1, 0.2, 0.3, 0.4], vec![0.0; 2]],
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..10 {
            let g = GroupElement::random(&a, &mut rng);
            assert_eq!(w1_sum_invariant(&act(&g, &v).unwrap()), 78.0);
        }
    }

    #[test]
    fn functional_check_needs_one_channel() {
        let a = Architecture::relu(&[1, 2, 1]).unwrap();
        let v = random_weights(&a, 2, 0, WeightDist::default());
        assert_eq!(
            functionally_equal(&v, &v, &[(-1.0, 1.0)], 4, 0.0),
            Err(Error::UnsupportedChannels(2))
        );
    }

    #[test]
    fn eps_approx_under_small_noise() {
        let a = Architecture::relu(&[1, 3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let grid: Vec<Vec<f64>> = (0..21).map(|k| vec![-1.0 + 0.1 * k as f64]).collect();
        let eps = 0.05;
        let nets: Vec<WeightElement> = (0..4).map(|s| random_weights(&a, 1, s, WeightDist::default())).collect();
        let noisy: Vec<Vec<Vec<f64>>> = nets
            .iter()
            .map(|v| {
                grid.iter()
                    .map(|x| realize(v, x).unwrap().into_iter().map(|y| y + rng.gen_range(-eps / 2.0..eps / 2.0)).collect())
                    .collect()
            })
            .collect();
        assert!(eps_approx_check(&nets, &noisy, &grid, eps).unwrap());
    }

    #[test]
    fn eps_approx_cases() {
        let a = Architecture::relu(&[1, 2, 1]).unwrap();
        let v = random_weights(&a, 1, 0, WeightDist::default());
        let grid: Vec<Vec<f64>> = (0..11).map(|k| vec![-1.0 + 0.2 * k as f64]).collect();
        let exact: Vec<Vec<f64>> = grid.iter().map(|x| realize(&v, x).unwrap()).collect();
        assert!(eps_approx_check(&[v.clone()], &[exact.clone()], &grid, 1e-9).unwrap());
        let eps = 0.1;
        let off: Vec<Vec<f64>> = exact.iter().map(|y| vec![y[0] + 2.0 * eps]).collect();
        assert!(!eps_approx_check(&[v.clone()], &[off], &grid, eps).unwrap());
        assert_eq!(eps_approx_check(&[], &[exact], &grid, eps), Err(Error::EmptySet));
    }
}
