//! GMN and NG message-passing layers on neural graphs.
//!
//! For a directed edge `src -> dst` with feature `e`, the message and the
//! edge update both read `[h_dst, h_src, e]` (GMN appends the global `u`).
//! Messages are summed at `dst` in ascending edge order; nodes without
//! incoming edges receive a zero message.

use crate::error::{Error, Result};
use crate::graph::{NeuralGraph, Variant};
use crate::mlp::MlpSpec;

#[derive(Debug, Clone, PartialEq)]
pub struct NgParams {
    pub phi_m: MlpSpec,
    pub phi_h: MlpSpec,
    pub phi_e: MlpSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmnParams {
    pub phi_m: MlpSpec,
    pub phi_h: MlpSpec,
    pub phi_e: MlpSpec,
    pub phi_u: MlpSpec,
}

fn expect_in(m: &MlpSpec, d: usize) -> Result<()> {
    if m.in_dim() != d {
        return Err(Error::DimensionMismatch {
            expected: m.in_dim(),
            got: d,
        });
    }
    Ok(())
}

fn check_graph(g: &NeuralGraph) -> Result<()> {
    if let Some(h) = g.nodes.iter().find(|h| h.len() != g.node_dim) {
        return Err(Error::DimensionMismatch {
            expected: g.node_dim,
            got: h.len(),
        });
    }
    if let Some(e) = g.edges.iter().find(|e| e.features.len() != g.edge_dim) {
        return Err(Error::DimensionMismatch {
            expected: g.edge_dim,
            got: e.features.len(),
        });
    }
    Ok(())
}

/// Shared body of both layers; `u` is empty for NG.
fn mp_step(
    g: &NeuralGraph,
    phi_m: &MlpSpec,
    phi_h: &MlpSpec,
    phi_e: &MlpSpec,
    u: &[f64],
) -> Result<NeuralGraph> {
    check_graph(g)?;
    let (dh, de, du) = (g.node_dim, g.edge_dim, u.len());
    expect_in(phi_m, 2 * dh + de + du)?;
    expect_in(phi_e, 2 * dh + de + du)?;
    let d_msg = phi_m.out_dim();
    expect_in(phi_h, dh + d_msg + du)?;

    let mut agg = vec![vec![0.0; d_msg]; g.num_nodes()];
    let mut edges = g.edges.clone();
    let mut input = Vec::with_capacity(2 * dh + de + du);
    let mut msg = vec![0.0; d_msg];
    for (k, e) in g.edges.iter().enumerate() {
        input.clear();
        input.extend_from_slice(&g.nodes[e.dst]);
        input.extend_from_slice(&g.nodes[e.src]);
        input.extend_from_slice(&e.features);
        input.extend_from_slice(u);
        phi_m.eval_into(&input, &mut msg);
        for (a, m) in agg[e.dst].iter_mut().zip(&msg) {
            *a += m;
        }
        let mut ef = vec![0.0; phi_e.out_dim()];
        phi_e.eval_into(&input, &mut ef);
        edges[k].features = ef;
    }
    let nodes = g
        .nodes
        .iter()
        .zip(&agg)
        .map(|(h, m)| {
            let mut x = h.clone();
            x.extend_from_slice(m);
            x.extend_from_slice(u);
            let mut out = vec![0.0; phi_h.out_dim()];
            phi_h.eval_into(&x, &mut out);
            out
        })
        .collect();
    Ok(NeuralGraph {
        variant: g.variant,
        nodes,
        node_kinds: g.node_kinds.clone(),
        edges,
        node_dim: phi_h.out_dim(),
        edge_dim: phi_e.out_dim(),
    })
}

pub fn ng_layer(g: &NeuralGraph, p: &NgParams) -> Result<NeuralGraph> {
    if g.variant != Variant::Ng {
        return Err(Error::VariantMismatch);
    }
    mp_step(g, &p.phi_m, &p.phi_h, &p.phi_e, &[])
}

/// One GMN layer; returns the updated graph and global feature.
pub fn gmn_layer(g: &NeuralGraph, p: &GmnParams, u: &[f64]) -> Result<(NeuralGraph, Vec<f64>)> {
    if g.variant != Variant::Gmn {
        return Err(Error::VariantMismatch);
    }
    let out = mp_step(g, &p.phi_m, &p.phi_h, &p.phi_e, u)?;
    let mut sum_h = vec![0.0; g.node_dim];
    for h in &g.nodes {
        for (a, x) in sum_h.iter_mut().zip(h) {
            *a += x;
        }
    }
    let mut sum_e = vec![0.0; g.edge_dim];
    for e in &g.edges {
        for (a, x) in sum_e.iter_mut().zip(&e.features) {
            *a += x;
        }
    }
    let mut x = sum_h;
    x.extend_from_slice(&sum_e);
    x.extend_from_slice(u);
    expect_in(&p.phi_u, x.len())?;
    let mut u_new = vec![0.0; p.phi_u.out_dim()];
    p.phi_u.eval_into(&x, &mut u_new);
    Ok((out, u_new))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, node_relabeling};
    use crate::space::{act, random_weights, Activation, Architecture, GroupElement, WeightDist};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rand_mlp(rng: &mut ChaCha8Rng, d_in: usize, d_out: usize) -> MlpSpec {
        MlpSpec::random(&[d_in, 8, d_out], Activation::Relu, rng).unwrap()
    }

    #[test]
    fn projection_update_keeps_nodes() {
        let v = random_weights(&Architecture::relu(&[1, 3, 2]).unwrap(), 1, 0, WeightDist::default());
        let g = build_graph(&v, Variant::Ng);
        let (dh, de) = (g.node_dim, g.edge_dim);
        let idx: Vec<usize> = (0..dh).collect();
        let p = NgParams {
            phi_m: MlpSpec::zero(2 * dh + de, 3).unwrap(),
            phi_h: MlpSpec::select(dh + 3, &idx).unwrap(),
            phi_e: MlpSpec::select(2 * dh + de, &(2 * dh..2 * dh + de).collect::<Vec<_>>()).unwrap(),
        };
        let out = ng_layer(&g, &p).unwrap();
        assert_eq!(out, g);
    }

    #[test]
    fn two_node_ng_by_hand() {
        // h = [1], [2]; edges 0->1 with e = [3], 1->0 with e = [4]
        let g = NeuralGraph::from_parts(
            Variant::Ng,
            vec![vec![1.0], vec![2.0]],
            vec![(0, 1, vec![3.0]), (1, 0, vec![4.0])],
        )
        .unwrap();
        let p = NgParams {
            // m = h_dst + 10 h_src + 100 e
            phi_m: MlpSpec::affine(vec![vec![1.0, 10.0, 100.0]], vec![0.0]).unwrap(),
            // h' = h + m
            phi_h: MlpSpec::affine(vec![vec![1.0, 1.0]], vec![0.0]).unwrap(),
            // e' = e - h_src
            phi_e: MlpSpec::affine(vec![vec![0.0, -1.0, 1.0]], vec![0.0]).unwrap(),
        };
        let out = ng_layer(&g, &p).unwrap();
        // node 1: m = 2 + 10 + 300 = 312 ; node 0: m = 1 + 20 + 400 = 421
        assert_eq!(out.nodes, vec![vec![422.0], vec![314.0]]);
        assert_eq!(out.edges[0].features, vec![2.0]);
        assert_eq!(out.edges[1].features, vec![2.0]);
    }

    #[test]
    fn single_edge_gmn_by_hand() {
        let g = NeuralGraph::from_parts(
            Variant::Gmn,
            vec![vec![1.0], vec![2.0]],
            vec![(0, 1, vec![5.0])],
        )
        .unwrap();
        let p = GmnParams {
            // m = h_dst + h_src + e + u
            phi_m: MlpSpec::affine(vec![vec![1.0; 4]], vec![0.0]).unwrap(),
            // h' = 2 h + m + u
            phi_h: MlpSpec::affine(vec![vec![2.0, 1.0, 1.0]], vec![0.0]).unwrap(),
            phi_e: MlpSpec::affine(vec![vec![0.0, 0.0, 1.0, 1.0]], vec![0.0]).unwrap(),
            // u' = sum h + sum e + u
            phi_u: MlpSpec::affine(vec![vec![1.0, 1.0, 1.0]], vec![0.0]).unwrap(),
        };
        let (out, u) = gmn_layer(&g, &p, &[0.5]).unwrap();
        assert_eq!(out.nodes, vec![vec![2.5], vec![13.0]]);
        assert_eq!(out.edges[0].features, vec![5.5]);
        assert_eq!(u, vec![8.5]);
    }

    #[test]
    fn dimension_and_variant_checks() {
        let v = random_weights(&Architecture::relu(&[1, 2, 1]).unwrap(), 1, 0, WeightDist::default());
        let g = build_graph(&v, Variant::Ng);
        let p = NgParams {
            phi_m: MlpSpec::zero(3, 1).unwrap(),
            phi_h: MlpSpec::zero(3, 1).unwrap(),
            phi_e: MlpSpec::zero(3, 1).unwrap(),
        };
        assert!(matches!(ng_layer(&g, &p), Err(Error::DimensionMismatch { .. })));
        let gm = build_graph(&v, Variant::Gmn);
        assert_eq!(ng_layer(&gm, &p), Err(Error::VariantMismatch));
    }

    #[test]
    fn layers_commute_with_relabeling() {
        let a = Architecture::relu(&[2, 3, 3, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = random_weights(&a, 1, 6, WeightDist::default());
        let g = GroupElement::random(&a, &mut rng);
        let gv = act(&g, &v).unwrap();
        for variant in [Variant::Ng, Variant::Gmn] {
            let base = build_graph(&v, variant);
            let moved = build_graph(&gv, variant);
            let (dh, de, du) = (base.node_dim, base.edge_dim, 2);
            let extra = if variant == Variant::Gmn { du } else { 0 };
            let phi_m = rand_mlp(&mut rng, 2 * dh + de + extra, 4);
            let phi_h = rand_mlp(&mut rng, dh + 4 + extra, 3);
            let phi_e = rand_mlp(&mut rng, 2 * dh + de + extra, 2);
            let (o1, o2, u1, u2) = if variant == Variant::Ng {
                let p = NgParams { phi_m, phi_h, phi_e };
                (ng_layer(&base, &p).unwrap(), ng_layer(&moved, &p).unwrap(), vec![], vec![])
            } else {
                let p = GmnParams {
                    phi_m,
                    phi_h,
                    phi_e,
                    phi_u: rand_mlp(&mut rng, dh + de + du, 2),
                };
                let (a1, b1) = gmn_layer(&base, &p, &[0.1, -0.2]).unwrap();
                let (a2, b2) = gmn_layer(&moved, &p, &[0.1, -0.2]).unwrap();
                (a1, a2, b1, b2)
            };
            let map = node_relabeling(&a, &g, variant);
            for (id, h) in o1.nodes.iter().enumerate() {
                for (x, y) in h.iter().zip(&o2.nodes[map[id]]) {
                    assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
                }
            }
            for e in &o1.edges {
                let f = o2
                    .edges
                    .iter()
                    .find(|x| x.src == map[e.src] && x.dst == map[e.dst])
                    .unwrap();
                assert_eq!(f.features, e.features);
            }
            for (x, y) in u1.iter().zip(&u2) {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()));
            }
        }
    }
}
