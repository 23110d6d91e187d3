//! Compiles one NG message-passing layer into an equivalent DWS program.
//!
//! Channel layout after feature preparation (`c1` channels per entry):
//! `[e_fwd, e_bwd, h_src, h_tgt]`. On a weight entry `W_l[i][j]` the two
//! edge slots hold the features of the edges `(l-1, j) -> (l, i)` and back,
//! and the node slots hold both endpoint features. Bias entry `b_l[i]` holds
//! the features of node `(l, i)` in the `h_tgt` slot; its other slots carry
//! values that are never read.
//!
//! Input-layer neurons have no bias entry, so their updated features are not
//! part of the compiled output.

use serde::Serialize;

use crate::arch::dws::{dws_run, select_channels, DwsPrimitive, DwsProgram};
use crate::arch::mpnn::{ng_layer, NgParams};
use crate::error::{Error, Result};
use crate::graph::{build_graph, EdgeKind, NodeKind, Variant};
use crate::mlp::MlpSpec;
use crate::space::{Activation, Architecture, WeightElement};

/// `(d_h, d_e)` of the NG encoding for `arch` with `c` channels.
pub fn ng_feature_dims(arch: &Architecture, c: usize) -> (usize, usize) {
    let big_l = arch.num_layers();
    let d_h = (big_l + 1) + (arch.input_dim() + arch.output_dim() + 1) + c;
    (d_h, c + big_l + 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StageChannels {
    pub c_in: usize,
    pub c1: usize,
    pub c2: usize,
    pub c3: usize,
    pub c4: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationReport {
    pub arch: Vec<usize>,
    pub channels: StageChannels,
    pub max_deviation: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompiledNg {
    pub program: DwsProgram,
    pub channels: StageChannels,
    d_e_out: usize,
    d_h_out: usize,
}

/// Affine map from `c_in` channels given as `(src, dst, coef)` triples.
fn sparse_affine(c_in: usize, c_out: usize, terms: &[(usize, usize, f64)], u: Vec<f64>) -> DwsPrimitive {
    let mut a = vec![vec![0.0; c_out]; c_in];
    for &(s, d, k) in terms {
        a[s][d] += k;
    }
    DwsPrimitive::PointwiseAffine { a, u }
}

fn constant_one(c: usize) -> DwsPrimitive {
    DwsPrimitive::PointwiseAffine {
        a: vec![vec![0.0]; c],
        u: vec![1.0],
    }
}

/// `relu(x) - relu(x - 1)`: 0 at 0, 1 at every integer >= 1.
fn clamp_unit() -> MlpSpec {
    let arch = Architecture::new(vec![1, 2, 1], Activation::Relu).expect("valid dims");
    let net = WeightElement::from_matrices(
        arch,
        &[vec![vec![1.0], vec![1.0]], vec![vec![1.0, -1.0]]],
        &[vec![0.0, -1.0], vec![0.0]],
    )
    .expect("shapes match");
    MlpSpec::new(net).expect("single channel")
}

fn expect_in(m: &MlpSpec, d: usize) -> Result<()> {
    if m.in_dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: m.in_dim(),
        });
    }
    Ok(())
}

/// Channel offsets inside the basis produced by the first concat.
struct Basis {
    c: usize,
    one: usize,
    ib: usize,
    wb: usize,
    inp: usize,
    out: usize,
    width: usize,
}

fn basis(arch: &Architecture, c: usize) -> (DwsPrimitive, Basis) {
    let big_l = arch.num_layers();
    let (d0, dl) = (arch.input_dim(), arch.output_dim());
    let mut branches = vec![DwsProgram::new(c).then(select_channels(c, &(0..c).collect::<Vec<_>>()))];
    branches.push(DwsProgram::new(c).then(constant_one(c)));
    let indicator = |l: usize| {
        DwsProgram::new(c)
            .then(constant_one(c))
            .then(DwsPrimitive::BiasSum { layer: l })
            .then(DwsPrimitive::PointwiseMlp { mlp: clamp_unit() })
    };
    for l in 1..=big_l {
        branches.push(indicator(l));
    }
    for l in 1..=big_l {
        branches.push(indicator(l).then(DwsPrimitive::UpperW2b));
    }
    for j in 0..d0 {
        branches.push(
            DwsProgram::new(c)
                .then(constant_one(c))
                .then(DwsPrimitive::FirstLayerNeuron { index: j }),
        );
    }
    for i in 0..dl {
        branches.push(
            DwsProgram::new(c)
                .then(constant_one(c))
                .then(DwsPrimitive::LastLayerNeuron { index: i }),
        );
    }
    let b = Basis {
        c,
        one: c,
        ib: c + 1,
        wb: c + 1 + big_l,
        inp: c + 1 + 2 * big_l,
        out: c + 1 + 2 * big_l + d0,
        width: c + 1 + 2 * big_l + d0 + dl,
    };
    (DwsPrimitive::Concat { branches }, b)
}

/// Builds the program for `params` acting on `arch` with `c` input channels.
pub fn compile_ng_to_dws(params: &NgParams, arch: &Architecture, c: usize) -> Result<CompiledNg> {
    let big_l = arch.num_layers();
    let (d0, dl) = (arch.input_dim(), arch.output_dim());
    let (d_h, d_e) = ng_feature_dims(arch, c);
    expect_in(&params.phi_m, 2 * d_h + d_e)?;
    expect_in(&params.phi_e, 2 * d_h + d_e)?;
    let d_msg = params.phi_m.out_dim();
    expect_in(&params.phi_h, d_h + d_msg)?;
    let d_e_out = params.phi_e.out_dim();
    let d_h_out = params.phi_h.out_dim();

    let (basis_step, bs) = basis(arch, c);
    let k = bs.width;

    // Node features as laid out in build_graph: [layer(L+1), type(d0+dL+1), bias(c)].
    let (t0, hidden_t, p0) = (big_l + 1, big_l + 1 + d0 + dl, big_l + 1 + d0 + dl + 1);
    let mut node_terms = Vec::new();
    for l in 1..=big_l {
        node_terms.push((bs.ib + l - 1, l, 1.0));
        if l < big_l {
            node_terms.push((bs.ib + l - 1, hidden_t, 1.0));
        }
    }
    for i in 0..dl {
        node_terms.push((bs.out + i, t0 + d0 + i, 1.0));
    }
    for m in 0..bs.c {
        node_terms.push((m, p0 + m, 1.0));
    }
    let node_on_bias = sparse_affine(k, d_h, &node_terms, vec![0.0; d_h]);

    let mut in_terms = vec![(bs.wb, 0, 1.0), (bs.ib, 0, -1.0)];
    for j in 0..d0 {
        in_terms.push((bs.inp + j, t0 + j, 1.0));
    }
    let input_nodes = sparse_affine(k, d_h, &in_terms, vec![0.0; d_h]);

    let edge = |forward: bool| {
        let mut t: Vec<(usize, usize, f64)> = (0..c).map(|m| (m, m, 1.0)).collect();
        for l in 1..=big_l {
            t.push((bs.wb + l - 1, c + l - 1, 1.0));
            t.push((bs.ib + l - 1, c + l - 1, -1.0));
        }
        t.push((bs.one, c + big_l + usize::from(!forward), 1.0));
        DwsProgram::new(k).then(sparse_affine(k, d_e, &t, vec![0.0; d_e]))
    };
    let sum_halves: Vec<(usize, usize, f64)> =
        (0..d_h).flat_map(|m| [(m, m, 1.0), (d_h + m, m, 1.0)]).collect();
    let h_src = DwsProgram::new(k)
        .then(DwsPrimitive::Concat {
            branches: vec![
                DwsProgram::new(k).then(node_on_bias.clone()).then(DwsPrimitive::LowerW2b),
                DwsProgram::new(k).then(input_nodes),
            ],
        })
        .then(sparse_affine(2 * d_h, d_h, &sum_halves, vec![0.0; d_h]));
    let h_tgt = DwsProgram::new(k).then(node_on_bias).then(DwsPrimitive::UpperW2b);
    let l1 = DwsPrimitive::Concat {
        branches: vec![edge(true), edge(false), h_src, h_tgt],
    };
    let c1 = 2 * d_e + 2 * d_h;

    // M2: [e'_f, e'_b, m_f, m_b, h].
    let (ef, eb, hs, ht) = (0, d_e, 2 * d_e, 2 * d_e + d_h);
    let range = |a: usize, n: usize| (a..a + n).collect::<Vec<_>>();
    let fwd_in: Vec<usize> = [range(ht, d_h), range(hs, d_h), range(ef, d_e)].concat();
    let bwd_in: Vec<usize> = [range(hs, d_h), range(ht, d_h), range(eb, d_e)].concat();
    let apply = |idx: &[usize], m: &MlpSpec| {
        DwsProgram::new(c1)
            .then(select_channels(c1, idx))
            .then(DwsPrimitive::PointwiseMlp { mlp: m.clone() })
    };
    let m2 = DwsPrimitive::Concat {
        branches: vec![
            apply(&fwd_in, &params.phi_e),
            apply(&bwd_in, &params.phi_e),
            apply(&fwd_in, &params.phi_m),
            apply(&bwd_in, &params.phi_m),
            DwsProgram::new(c1).then(select_channels(c1, &range(ht, d_h))),
        ],
    };
    let c2 = 2 * (d_e_out + d_msg) + d_h;

    // L3: [e'_f, e'_b, h, sum of messages].
    let (mf, mb, h2) = (2 * d_e_out, 2 * d_e_out + d_msg, 2 * d_e_out + 2 * d_msg);
    let keep: Vec<usize> = [range(0, 2 * d_e_out), range(h2, d_h)].concat();
    let l3_cat = DwsPrimitive::Concat {
        branches: vec![
            DwsProgram::new(c2).then(select_channels(c2, &keep)),
            DwsProgram::new(c2)
                .then(select_channels(c2, &range(mf, d_msg)))
                .then(DwsPrimitive::ColPool),
            DwsProgram::new(c2)
                .then(select_channels(c2, &range(mb, d_msg)))
                .then(DwsPrimitive::RowPool),
        ],
    };
    let c3 = 2 * d_e_out + d_h + d_msg;
    let mut sum_terms: Vec<(usize, usize, f64)> = (0..c3).map(|m| (m, m, 1.0)).collect();
    sum_terms.extend((0..d_msg).map(|m| (c3 + m, c3 - d_msg + m, 1.0)));
    let l3_sum = sparse_affine(c3 + d_msg, c3, &sum_terms, vec![0.0; c3]);

    // M4: [e'_f, e'_b, phi_h(h, s)].
    let m4 = DwsPrimitive::Concat {
        branches: vec![
            DwsProgram::new(c3).then(select_channels(c3, &range(0, 2 * d_e_out))),
            DwsProgram::new(c3)
                .then(select_channels(c3, &range(2 * d_e_out, d_h + d_msg)))
                .then(DwsPrimitive::PointwiseMlp {
                    mlp: params.phi_h.clone(),
                }),
        ],
    };
    let c4 = 2 * d_e_out + d_h_out;

    let program = DwsProgram::new(c)
        .then(basis_step)
        .then(l1)
        .then(m2)
        .then(l3_cat)
        .then(l3_sum)
        .then(m4);
    debug_assert_eq!(program.out_channels()?, c4);
    Ok(CompiledNg {
        program,
        channels: StageChannels { c_in: c, c1, c2, c3, c4 },
        d_e_out,
        d_h_out,
    })
}

impl CompiledNg {
    /// Largest gap between the program output on `v` and `ng_layer` on the
    /// NG graph of `v`, over all weight edges and non-input nodes.
    pub fn max_deviation(&self, params: &NgParams, v: &WeightElement) -> Result<f64> {
        let out = dws_run(&self.program, v)?;
        let reference = ng_layer(&build_graph(v, Variant::Ng), params)?;
        let de = self.d_e_out;
        let gap = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let mut worst: f64 = 0.0;
        for e in &reference.edges {
            if let EdgeKind::Weight { layer, i, j, forward } = e.kind {
                let w = out.w(layer - 1, i, j);
                let slot = if forward { &w[..de] } else { &w[de..2 * de] };
                worst = worst.max(gap(slot, &e.features));
                if !slot.iter().chain(&e.features).all(|x| x.is_finite()) {
                    worst = f64::INFINITY;
                }
            }
        }
        for (h, kind) in reference.nodes.iter().zip(&reference.node_kinds) {
            if let NodeKind::Neuron { layer, index } = *kind {
                if layer == 0 {
                    continue;
                }
                let b = &out.b(layer - 1, index)[2 * de..2 * de + self.d_h_out];
                worst = worst.max(gap(b, h));
            }
        }
        Ok(worst)
    }
}

pub fn verify_compiled(
    compiled: &CompiledNg,
    params: &NgParams,
    v: &WeightElement,
    tol: f64,
) -> Result<SimulationReport> {
    let dev = compiled.max_deviation(params, v)?;
    Ok(SimulationReport {
        arch: v.arch().dims().to_vec(),
        channels: compiled.channels,
        max_deviation: dev,
        pass: dev <= tol,
    })
}

pub fn verify_simulation(params: &NgParams, v: &WeightElement, tol: f64) -> Result<SimulationReport> {
    let compiled = compile_ng_to_dws(params, v.arch(), v.channels())?;
    verify_compiled(&compiled, params, v, tol)
}

fn random_update<R: rand::Rng>(d_in: usize, hidden: usize, d_out: usize, rng: &mut R) -> Result<MlpSpec> {
    if hidden == 0 {
        MlpSpec::random(&[d_in, d_out], Activation::Relu, rng)
    } else {
        MlpSpec::random(&[d_in, hidden, d_out], Activation::Relu, rng)
    }
}

/// Random update MLPs matching the NG dims of `arch` with `c` channels.
/// `hidden = 0` gives affine maps.
pub fn random_ng_params<R: rand::Rng>(
    arch: &Architecture,
    c: usize,
    hidden: usize,
    d_msg: usize,
    rng: &mut R,
) -> Result<NgParams> {
    let (d_h, d_e) = ng_feature_dims(arch, c);
    Ok(NgParams {
        phi_m: random_update(2 * d_h + d_e, hidden, d_msg, rng)?,
        phi_h: random_update(d_h + d_msg, hidden, d_h, rng)?,
        phi_e: random_update(2 * d_h + d_e, hidden, d_e, rng)?,
    })
}

/// Projection params: zero messages, node and edge features passed through.
pub fn passthrough_params(arch: &Architecture, c: usize) -> Result<NgParams> {
    let (d_h, d_e) = ng_feature_dims(arch, c);
    Ok(NgParams {
        phi_m: MlpSpec::zero(2 * d_h + d_e, 1)?,
        phi_h: MlpSpec::select(d_h + 1, &(0..d_h).collect::<Vec<_>>())?,
        phi_e: MlpSpec::select(2 * d_h + d_e, &(2 * d_h..2 * d_h + d_e).collect::<Vec<_>>())?,
    })
}
