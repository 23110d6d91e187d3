//! The acceptance checks, shared by the integration test and `wskit suite`.
//!
//! Each check returns an [`Outcome`] whose `details` are deterministic for a
//! fixed seed; wall time is kept apart from them.

use std::collections::{HashMap, HashSet};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::arch::dws::{dws_apply, DwsPrimitive};
use crate::arch::mpnn::{gmn_layer, ng_layer, GmnParams, NgParams};
use crate::arch::nfn::nfn_positional_encoding;
use crate::arch::nft::{nft_block, nft_self_attention, BlockParams, Projections, SelfAttentionParams};
use crate::canonize::{canon, neuron_id_map};
use crate::equiv::{
    counterexample_scaling, counterexample_wl, g_equivalent, integer_matrix, integer_rank,
    nft_separation_demo, w1_sum_invariant, GroupElements,
};
use crate::error::{Error, Result};
use crate::graph::{build_graph, node_relabeling, wl_distinguishable, NeuralGraph, Variant};
use crate::mlp::MlpSpec;
use crate::regions::{pl_equal, region_bound, regions_1d};
use crate::simulate::{compile_ng_to_dws, random_ng_params, verify_compiled};
use crate::space::{
    act, flatten, random_weights, random_weights_with, realize, unflatten, Activation,
    Architecture, GroupElement, WeightDist, WeightElement,
};

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub pass: bool,
    pub details: Value,
    #[serde(skip)]
    pub elapsed: Duration,
}

fn timed(id: u8, name: &'static str, limit: Option<Duration>, f: impl FnOnce() -> Result<(bool, Value)>) -> Outcome {
    let start = Instant::now();
    let res = f();
    let elapsed = start.elapsed();
    let (ok, details) = match res {
        Ok(r) => r,
        Err(e) => (false, json!({ "error": e.to_string() })),
    };
    let in_time = limit.map_or(true, |l| elapsed <= l);
    Outcome {
        id,
        name,
        pass: ok && in_time,
        details,
        elapsed,
    }
}

fn arch(dims: &[usize]) -> Architecture {
    Architecture::relu(dims).expect("valid dims")
}

fn rng_for(seed: u64, id: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ id)
}

pub fn nft_separation() -> Outcome {
    timed(1, "nft separation", Some(Duration::from_millis(100)), || {
        let d = nft_separation_demo()?;
        let outputs_ok = (d.outputs.0 - 8.0 / 33.0).abs() <= 1e-12 && (d.outputs.1 - 16.0 / 33.0).abs() <= 1e-12;
        let pattern = |m: &[Vec<f64>], same: &dyn Fn(usize, usize) -> bool, hi: f64, printed: f64| {
            m.iter().enumerate().all(|(i, r)| {
                r.iter().enumerate().all(|(j, &x)| {
                    let (want, shown) = if same(i, j) { (hi, printed) } else { (1.0 - hi, 1.0 - printed) };
                    (x - shown).abs() <= 1e-2 && (x - want).abs() <= 1e-4
                })
            })
        };
        let circ = |i: usize, j: usize| j == i || j == (i + 1) % 4;
        let block = |i: usize, j: usize| (i < 2) == (j < 2);
        let m1 = pattern(&d.after_attention.0, &circ, 0.73105, 0.73);
        let m2 = pattern(&d.after_attention.1, &block, 0.88080, 0.88);
        Ok((
            outputs_ok && m1 && m2,
            json!({
                "outputs": [d.outputs.0, d.outputs.1],
                "expected": [8.0 / 33.0, 16.0 / 33.0],
                "attention_first": d.after_attention.0,
                "attention_second": d.after_attention.1,
                "patterns_match": [m1, m2],
            }),
        ))
    })
}

pub fn wl_counterexample() -> Outcome {
    timed(2, "wl counterexample", Some(Duration::from_secs(1)), || {
        let (v, w) = counterexample_wl();
        let rank = |x: &WeightElement| integer_matrix(x, 1).map(|m| integer_rank(&m));
        let ranks = (rank(&v), rank(&w));
        let mut wl = Vec::new();
        for variant in [Variant::Gmn, Variant::Ng] {
            wl.push(wl_distinguishable(&build_graph(&v, variant), &build_graph(&w, variant))?);
        }
        let searched = GroupElements::new(v.arch()).count();
        let (geq, _) = g_equivalent(&v, &w, 0.0)?;
        let eight_relu = WeightElement::from_matrices(arch(&[1, 1, 1]), &[vec![vec![1.0]], vec![vec![8.0]]], &[vec![0.0], vec![0.0]])?;
        let interval = (-10.0, 10.0);
        let target = regions_1d(&eight_relu, interval)?;
        let (pv, pw) = (regions_1d(&v, interval)?, regions_1d(&w, interval)?);
        let func = pl_equal(&pv, &target, 0.0)? && pl_equal(&pw, &target, 0.0)?;
        let pass = ranks == (Some(3), Some(2)) && wl == [false, false] && searched == 576 && !geq && func;
        Ok((
            pass,
            json!({
                "ranks": [ranks.0, ranks.1],
                "wl_distinguishable": { "gmn": wl[0], "ng": wl[1] },
                "group_elements_searched": searched,
                "g_equivalent": geq,
                "both_equal_8relu": func,
            }),
        ))
    })
}

pub fn scaling_counterexample() -> Outcome {
    timed(3, "scaling counterexample", Some(Duration::from_millis(100)), || {
        let (v, w) = counterexample_scaling(2.0)?;
        let interval = (-10.0, 10.0);
        let func = pl_equal(&regions_1d(&v, interval)?, &regions_1d(&w, interval)?, 0.0)?;
        let inv = (w1_sum_invariant(&v), w1_sum_invariant(&w));
        let (geq, _) = g_equivalent(&v, &w, 0.0)?;
        Ok((
            func && inv == (1.0, 2.0) && !geq,
            json!({ "functionally_equal": func, "w1_sum": [inv.0, inv.1], "g_equivalent": geq }),
        ))
    })
}

/// Max entry gap scaled by `1 + max |rhs|`.
fn relative_gap(lhs: &WeightElement, rhs: &WeightElement) -> f64 {
    let scale = 1.0 + rhs.entries().flatten().fold(0.0_f64, |m, x| m.max(x.abs()));
    lhs.max_abs_diff(rhs).unwrap_or(f64::INFINITY) / scale
}

/// Gap between `layer(graph(g v))` and the relabeled `layer(graph(v))`.
fn graph_gap(base: &NeuralGraph, moved: &NeuralGraph, map: &[usize], u: (&[f64], &[f64])) -> f64 {
    let mut num: f64 = 0.0;
    let mut scale: f64 = 1.0;
    let mut gap = |x: &[f64], y: &[f64]| {
        for (a, b) in x.iter().zip(y) {
            num = num.max((a - b).abs());
            scale = scale.max(1.0 + a.abs());
        }
        if x.len() != y.len() {
            num = f64::INFINITY;
        }
    };
    for (id, h) in base.nodes.iter().enumerate() {
        gap(h, &moved.nodes[map[id]]);
    }
    let index: HashMap<(usize, usize), usize> =
        moved.edges.iter().enumerate().map(|(k, e)| ((e.src, e.dst), k)).collect();
    for e in &base.edges {
        match index.get(&(map[e.src], map[e.dst])) {
            Some(&k) => gap(&e.features, &moved.edges[k].features),
            None => return f64::INFINITY,
        }
    }
    gap(u.0, u.1);
    num / scale
}

const EQUIV_ARCHS: [&[usize]; 3] = [&[1, 3, 1], &[2, 4, 3, 2], &[1, 4, 4, 1]];

pub fn equivariance_suite(seed: u64, cases: usize) -> Outcome {
    timed(4, "equivariance suite", Some(Duration::from_secs(30)), || {
        let mut rng = rng_for(seed, 4);
        let names = [
            "pointwise_affine", "global_sum", "bias_sum", "lower_w2b", "upper_w2b",
            "first_layer_neuron", "last_layer_neuron", "col_pool", "row_pool",
            "nfn_positional_encoding", "gmn_layer", "ng_layer", "nft_self_attention", "nft_block",
        ];
        // Ops that only copy or act entry-wise must commute bit for bit.
        let exact = [true, false, false, true, true, true, true, false, false, true, false, false, false, false];
        let mut worst = vec![0.0_f64; names.len()];
        let mut bit_ok = vec![true; names.len()];
        for _ in 0..cases {
            let a = arch(EQUIV_ARCHS.choose(&mut rng).expect("nonempty"));
            let c = rng.gen_range(1..=2);
            let v = random_weights_with(&a, c, &mut rng, WeightDist::default());
            let g = GroupElement::random(&a, &mut rng);
            let gv = act(&g, &v)?;
            let c_out = rng.gen_range(1..=3);
            let prims = [
                DwsPrimitive::PointwiseAffine {
                    a: (0..c).map(|_| (0..c_out).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect(),
                    u: (0..c_out).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                },
                DwsPrimitive::GlobalSum,
                DwsPrimitive::BiasSum { layer: rng.gen_range(1..=a.num_layers()) },
                DwsPrimitive::LowerW2b,
                DwsPrimitive::UpperW2b,
                DwsPrimitive::FirstLayerNeuron { index: rng.gen_range(0..a.input_dim()) },
                DwsPrimitive::LastLayerNeuron { index: rng.gen_range(0..a.output_dim()) },
                DwsPrimitive::ColPool,
                DwsPrimitive::RowPool,
            ];
            let mut record = |k: usize, lhs: &WeightElement, rhs: &WeightElement| {
                worst[k] = worst[k].max(relative_gap(lhs, rhs));
                if exact[k] && !lhs.bit_eq(rhs) {
                    bit_ok[k] = false;
                }
            };
            let mut graph_worst = [0.0_f64; 2];
            for (k, p) in prims.iter().enumerate() {
                record(k, &dws_apply(p, &gv)?, &act(&g, &dws_apply(p, &v)?)?);
            }
            record(9, &nfn_positional_encoding(&gv), &act(&g, &nfn_positional_encoding(&v))?);

            let mlp = |d_in: usize, d_out: usize, rng: &mut ChaCha8Rng| MlpSpec::random(&[d_in, 8, d_out], Activation::Relu, rng);
            let (g0, g1) = (build_graph(&v, Variant::Gmn), build_graph(&gv, Variant::Gmn));
            let (dh, de) = (g0.node_dim, g0.edge_dim);
            let gp = GmnParams {
                phi_m: mlp(2 * dh + de + 2, 4, &mut rng)?,
                phi_h: mlp(dh + 4 + 2, 3, &mut rng)?,
                phi_e: mlp(2 * dh + de + 2, 3, &mut rng)?,
                phi_u: mlp(dh + de + 2, 2, &mut rng)?,
            };
            let u = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let (o0, u0) = gmn_layer(&g0, &gp, &u)?;
            let (o1, u1) = gmn_layer(&g1, &gp, &u)?;
            graph_worst[0] = graph_worst[0].max(graph_gap(&o0, &o1, &node_relabeling(&a, &g, Variant::Gmn), (&u0, &u1)));

            let (n0, n1) = (build_graph(&v, Variant::Ng), build_graph(&gv, Variant::Ng));
            let (dh, de) = (n0.node_dim, n0.edge_dim);
            let np = NgParams {
                phi_m: mlp(2 * dh + de, 4, &mut rng)?,
                phi_h: mlp(dh + 4, 3, &mut rng)?,
                phi_e: mlp(2 * dh + de, 3, &mut rng)?,
            };
            let (o0, o1) = (ng_layer(&n0, &np)?, ng_layer(&n1, &np)?);
            graph_worst[1] = graph_worst[1].max(graph_gap(&o0, &o1, &node_relabeling(&a, &g, Variant::Ng), (&[], &[])));

            let heads = |rng: &mut ChaCha8Rng| vec![Projections::random(c, 1.0, rng)];
            let sa = SelfAttentionParams {
                kv1: heads(&mut rng),
                kv2: heads(&mut rng),
                kv3: heads(&mut rng),
                adjacent_layers: rng.gen(),
                target_layers: None,
                update_biases: true,
            };
            record(12, &nft_self_attention(&gv, &sa)?, &act(&g, &nft_self_attention(&v, &sa)?)?);
            let bp = BlockParams::new(sa, Some(mlp(c, c, &mut rng)?));
            record(13, &nft_block(&gv, &bp)?, &act(&g, &nft_block(&v, &bp)?)?);
            worst[10] = worst[10].max(graph_worst[0]);
            worst[11] = worst[11].max(graph_worst[1]);
        }
        let pass = worst.iter().all(|&w| w <= 1e-9) && bit_ok.iter().all(|&b| b);
        let per_op: serde_json::Map<String, Value> = names
            .iter()
            .zip(worst.iter().zip(&bit_ok))
            .map(|(n, (w, b))| (n.to_string(), json!({ "max_relative_violation": w, "bit_exact_ok": b })))
            .collect();
        Ok((pass, json!({ "cases": cases, "ops": per_op })))
    })
}

pub fn realization_invariance(seed: u64, trials: usize) -> Outcome {
    timed(5, "realization invariance", None, || {
        let mut rng = rng_for(seed, 5);
        let archs: [&[usize]; 5] = [&[1, 3, 1], &[2, 4, 3, 2], &[1, 4, 4, 1], &[3, 5, 4, 2], &[2, 8, 1]];
        let mut worst: f64 = 0.0;
        let mut pass = true;
        for _ in 0..trials {
            let mut a = arch(archs.choose(&mut rng).expect("nonempty"));
            if rng.gen_bool(0.25) {
                a = Architecture::new(a.dims().to_vec(), Activation::Tanh)?;
            }
            let v = random_weights_with(&a, 1, &mut rng, WeightDist::default());
            let g = GroupElement::random(&a, &mut rng);
            let x: Vec<f64> = (0..a.input_dim()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let (fv, fgv) = (realize(&v, &x)?, realize(&act(&g, &v)?, &x)?);
            for (p, q) in fv.iter().zip(&fgv) {
                let gap = (p - q).abs() / (1.0 + p.abs());
                worst = worst.max(gap);
                pass &= gap <= 1e-9;
            }
        }
        Ok((pass, json!({ "trials": trials, "max_relative_gap": worst })))
    })
}

pub fn canonization(seed: u64, elements: usize) -> Outcome {
    timed(6, "canonization", None, || {
        let mut rng = rng_for(seed, 6);
        let a = arch(&[2, 3, 3, 2]);
        let group: Vec<GroupElement> = GroupElements::new(&a).collect();
        let (mut invariant, mut orbit, mut cocycle) = (true, true, true);
        for _ in 0..elements {
            let v = random_weights_with(&a, 1, &mut rng, WeightDist::default());
            let base = canon(&v)?;
            orbit &= base.representative.bit_eq(&act(&base.g_v, &v)?);
            for h in &group {
                let hv = act(h, &v)?;
                let moved = canon(&hv)?;
                invariant &= moved.canon5.bit_eq(&base.canon5);
                orbit &= moved.representative.bit_eq(&act(&moved.g_v, &hv)?);
                cocycle &= moved.g_v == base.g_v.compose(&h.inverse())?;
            }
        }
        let mut tied = random_weights(&a, 1, seed, WeightDist::default());
        let b0 = tied.b_scalar(1, 0);
        tied.b_mut(1, 2)[0] = b0;
        let tie_rejected = matches!(canon(&tied), Err(Error::TiedBiases { .. }));
        Ok((
            invariant && orbit && cocycle && tie_rejected,
            json!({
                "elements": elements,
                "group_order": group.len(),
                "canon_invariant": invariant,
                "orbit_membership": orbit,
                "cocycle": cocycle,
                "tied_biases_rejected": tie_rejected,
            }),
        ))
    })
}

pub fn ng_via_dws(seed: u64, configs: usize) -> Outcome {
    timed(7, "ng via dws", Some(Duration::from_secs(10)), || {
        let mut rng = rng_for(seed, 7);
        let archs: [&[usize]; 5] = [&[2, 3, 2], &[1, 3, 1], &[1, 4, 4, 1], &[2, 4, 3, 2], &[3, 5, 4, 2]];
        let mut worst: f64 = 0.0;
        let mut all_pass = true;
        let mut detected = 0;
        let swap_forward_pool = |comp: &mut crate::simulate::CompiledNg| {
            if let DwsPrimitive::Concat { branches } = &mut comp.program.steps[3] {
                branches[1].steps[1] = DwsPrimitive::RowPool;
            }
        };
        for k in 0..configs {
            let a = arch(archs[k % archs.len()]);
            let c = rng.gen_range(1..=2);
            let hidden = rng.gen_range(0..=8);
            let d_msg = rng.gen_range(1..=6);
            let p = random_ng_params(&a, c, hidden, d_msg, &mut rng)?;
            let v = random_weights_with(&a, c, &mut rng, WeightDist::default());
            let mut comp = compile_ng_to_dws(&p, &a, c)?;
            let r = verify_compiled(&comp, &p, &v, 1e-9)?;
            worst = worst.max(r.max_deviation);
            all_pass &= r.pass;
            swap_forward_pool(&mut comp);
            detected += usize::from(!verify_compiled(&comp, &p, &v, 1e-9)?.pass);
        }
        // Affine updates cannot hide the corrupted aggregation behind dead units.
        let a = arch(&[2, 4, 3, 2]);
        let p = random_ng_params(&a, 1, 0, 3, &mut rng)?;
        let v = random_weights_with(&a, 1, &mut rng, WeightDist::default());
        let mut comp = compile_ng_to_dws(&p, &a, 1)?;
        swap_forward_pool(&mut comp);
        let mutation_caught = !verify_compiled(&comp, &p, &v, 1e-9)?.pass;
        Ok((
            all_pass && mutation_caught,
            json!({
                "configs": configs,
                "max_deviation": worst,
                "mutation_detected": mutation_caught,
                "mutations_detected_in_random_configs": detected,
            }),
        ))
    })
}

pub fn graph_encodings() -> Outcome {
    timed(8, "graph encodings", None, || {
        let a = arch(&[1, 4, 4, 1]);
        let v = random_weights(&a, 1, 0, WeightDist::default());
        let summary = |g: &NeuralGraph| [g.num_nodes(), g.num_edges(), g.edge_dim, g.node_dim];
        let gmn = build_graph(&v, Variant::Gmn);
        let ng = build_graph(&v, Variant::Ng);
        let pass = summary(&gmn) == [13, 66, 8, 10]
            && summary(&ng) == [10, 48, 6, 8]
            && gmn.is_symmetric()
            && ng.is_symmetric();
        Ok((
            pass,
            json!({
                "gmn": { "nodes": gmn.num_nodes(), "edges": gmn.num_edges(), "d_e": gmn.edge_dim, "d_h": gmn.node_dim, "symmetric": gmn.is_symmetric() },
                "ng": { "nodes": ng.num_nodes(), "edges": ng.num_edges(), "d_e": ng.edge_dim, "d_h": ng.node_dim, "symmetric": ng.is_symmetric() },
            }),
        ))
    })
}

pub fn pl_regions(seed: u64, nets: usize) -> Outcome {
    timed(9, "pl regions", None, || {
        let mut rng = rng_for(seed, 9);
        let interval = (-5.0, 5.0);
        let (mut counts_ok, mut eval_ok) = (true, true);
        let mut worst: f64 = 0.0;
        for _ in 0..nets {
            let k = rng.gen_range(1..=16);
            let a = arch(&[1, k, 1]);
            let v = random_weights_with(&a, 1, &mut rng, WeightDist::default());
            let pl = regions_1d(&v, interval)?;
            let bound = region_bound(&a);
            counts_ok &= pl.num_regions() <= k + 1 && (k as u64 + 1) <= bound.value;
            for n in 0..1000 {
                let x = interval.0 + (interval.1 - interval.0) * (n as f64 + 0.5) / 1000.0;
                let gap = (pl.eval(x)[0] - realize(&v, &[x])?[0]).abs();
                worst = worst.max(gap);
                eval_ok &= gap <= 1e-9;
            }
        }
        let (v1, v2) = counterexample_wl();
        let mut witness_ok = true;
        for v in [&v1, &v2] {
            let pl = regions_1d(v, (-10.0, 10.0))?;
            witness_ok &= pl.num_regions() == 2 && pl.breakpoints.len() == 1 && pl.breakpoints[0].abs() <= 1e-12;
        }
        Ok((
            counts_ok && eval_ok && witness_ok,
            json!({ "nets": nets, "counts_within_bound": counts_ok, "max_eval_gap": worst, "witness_two_regions": witness_ok }),
        ))
    })
}

pub fn tags_and_flatten(seed: u64, elements: usize) -> Outcome {
    timed(10, "tags and flatten", None, || {
        let mut rng = rng_for(seed, 10);
        let archs: [&[usize]; 5] = [&[1, 3, 1], &[2, 4, 3, 2], &[1, 4, 4, 1], &[3, 5, 4, 2], &[4, 2, 6, 3, 1]];
        let (mut unique, mut roundtrip) = (true, true);
        for _ in 0..elements {
            let a = arch(archs.choose(&mut rng).expect("nonempty"));
            let v = random_weights_with(&a, 1, &mut rng, WeightDist::default());
            let tags = neuron_id_map(&v)?;
            let mut seen = HashSet::new();
            for e in tags.entries() {
                unique &= seen.insert([e[1], e[2], e[3], e[4]].map(f64::to_bits));
            }
            let c = rng.gen_range(1..=3);
            let w = random_weights_with(&a, c, &mut rng, WeightDist::default());
            roundtrip &= unflatten(&flatten(&w), &a, c)?.bit_eq(&w);
        }
        let m = arch(&[1, 4, 4, 1]).param_count();
        let flat_len = flatten(&WeightElement::zeros(&arch(&[1, 4, 4, 1]), 1)).values.len();
        Ok((
            unique && roundtrip && m == 33 && flat_len == 33,
            json!({ "elements": elements, "tags_unique": unique, "flatten_roundtrip": roundtrip, "param_count_1441": m }),
        ))
    })
}

/// Every criterion at full size.
pub fn run_all(seed: u64) -> Vec<Outcome> {
    vec![
        nft_separation(),
        wl_counterexample(),
        scaling_counterexample(),
        equivariance_suite(seed, 100),
        realization_invariance(seed, 1000),
        canonization(seed, 50),
        ng_via_dws(seed, 20),
        graph_encodings(),
        pl_regions(seed, 100),
        tags_and_flatten(seed, 100),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_runs_pass() {
        for o in [
            equivariance_suite(1, 5),
            realization_invariance(1, 50),
            canonization(1, 2),
            ng_via_dws(1, 3),
            pl_regions(1, 5),
            tags_and_flatten(1, 10),
            graph_encodings(),
            scaling_counterexample(),
        ] {
            assert!(o.pass, "{} failed: {}", o.name, o.details);
        }
    }
}
