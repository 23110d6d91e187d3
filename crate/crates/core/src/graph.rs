//! Graph encodings of MLP weights and edge-featured 1-WL refinement.
//!
//! Node ids: neuron nodes layer by layer (`nu^(0)_0, nu^(0)_1, ..`), then for
//! the GMN variant one bias node per layer `beta^(1) .. beta^(L)`.
//! Edge order: for each layer, for each (target `i`, source `j`) the forward
//! edge followed by its reverse; GMN bias edges come after all weight edges,
//! `beta -> nu` followed by `nu -> beta`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::space::{Architecture, GroupElement, WeightElement};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Gmn,
    Ng,
}

impl Variant {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gmn" => Ok(Variant::Gmn),
            "ng" => Ok(Variant::Ng),
            other => Err(Error::Parse(format!("unknown graph variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    /// Neuron `index` of layer `layer` (0..=L).
    Neuron { layer: usize, index: usize },
    /// Bias node of layer `layer` (1..=L).
    Bias { layer: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Weight `W_layer[i][j]`, layer 1-based.
    Weight {
        layer: usize,
        i: usize,
        j: usize,
        forward: bool,
    },
    /// Bias `b_layer[i]`.
    Bias { layer: usize, i: usize, forward: bool },
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub features: Vec<f64>,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeuralGraph {
    pub variant: Variant,
    pub nodes: Vec<Vec<f64>>,
    pub node_kinds: Vec<NodeKind>,
    pub edges: Vec<Edge>,
    pub node_dim: usize,
    pub edge_dim: usize,
}

fn one_hot(n: usize, k: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |t| if t == k { 1.0 } else { 0.0 })
}

/// Id of neuron `i` in layer `l` (0-based over `0..=L`).
pub fn neuron_id(arch: &Architecture, l: usize, i: usize) -> usize {
    arch.dims()[..l].iter().sum::<usize>() + i
}

pub fn build_graph(v: &WeightElement, variant: Variant) -> NeuralGraph {
    let arch = v.arch();
    let dims = arch.dims();
    let big_l = arch.num_layers();
    let (d0, dl) = (arch.input_dim(), arch.output_dim());
    let c = v.channels();
    let n_neurons: usize = dims.iter().sum();
    let gmn = variant == Variant::Gmn;

    // Type slots: in_*, out_*, [bias_* for GMN], hidden.
    let n_types = d0 + dl + 1 + if gmn { big_l } else { 0 };
    let hidden_t = n_types - 1;
    let neuron_type = |l: usize, i: usize| {
        if l == 0 {
            i
        } else if l == big_l {
            d0 + i
        } else {
            hidden_t
        }
    };

    let mut nodes = Vec::new();
    let mut node_kinds = Vec::new();
    for (l, &d) in dims.iter().enumerate() {
        for i in 0..d {
            let mut h: Vec<f64> = one_hot(big_l + 1, l).chain(one_hot(n_types, neuron_type(l, i))).collect();
            if !gmn {
                if l == 0 {
                    h.extend(std::iter::repeat_n(0.0, c));
                } else {
                    h.extend_from_slice(v.b(l - 1, i));
                }
            }
            nodes.push(h);
            node_kinds.push(NodeKind::Neuron { layer: l, index: i });
        }
    }
    if gmn {
        for l in 1..=big_l {
            nodes.push(one_hot(big_l + 1, l).chain(one_hot(n_types, d0 + dl + l - 1)).collect());
            node_kinds.push(NodeKind::Bias { layer: l });
        }
    }

    let edge_feat = |p: &[f64], l: usize, forward: bool, bias: bool| -> Vec<f64> {
        let mut e = p.to_vec();
        e.extend(one_hot(big_l, l - 1));
        e.extend(one_hot(2, if forward { 0 } else { 1 }));
        if gmn {
            e.extend(one_hot(2, if bias { 1 } else { 0 }));
        }
        e
    };

    let mut edges = Vec::new();
    for l in 1..=big_l {
        for i in 0..dims[l] {
            for j in 0..dims[l - 1] {
                let p = v.w(l - 1, i, j);
                let s = neuron_id(arch, l - 1, j);
                let t = neuron_id(arch, l, i);
                for (src, dst, forward) in [(s, t, true), (t, s, false)] {
                    edges.push(Edge {
                        src,
                        dst,
                        features: edge_feat(p, l, forward, false),
                        kind: EdgeKind::Weight { layer: l, i, j, forward },
                    });
                }
            }
        }
    }
    if gmn {
        for l in 1..=big_l {
            let beta = n_neurons + l - 1;
            for i in 0..dims[l] {
                let p = v.b(l - 1, i);
                let t = neuron_id(arch, l, i);
                for (src, dst, forward) in [(beta, t, true), (t, beta, false)] {
                    edges.push(Edge {
                        src,
                        dst,
                        features: edge_feat(p, l, forward, true),
                        kind: EdgeKind::Bias { layer: l, i, forward },
                    });
                }
            }
        }
    }

    let node_dim = (big_l + 1) + n_types + if gmn { 0 } else { c };
    let edge_dim = c + big_l + 2 + if gmn { 2 } else { 0 };
    NeuralGraph {
        variant,
        nodes,
        node_kinds,
        edges,
        node_dim,
        edge_dim,
    }
}

impl NeuralGraph {
    /// Graph with arbitrary features; used for hand-built test instances.
    pub fn from_parts(
        variant: Variant,
        nodes: Vec<Vec<f64>>,
        edges: Vec<(usize, usize, Vec<f64>)>,
    ) -> Result<Self> {
        let node_dim = nodes.first().map_or(0, Vec::len);
        let edge_dim = edges.first().map_or(0, |e| e.2.len());
        if let Some(h) = nodes.iter().find(|h| h.len() != node_dim) {
            return Err(Error::DimensionMismatch {
                expected: node_dim,
                got: h.len(),
            });
        }
        let n = nodes.len();
        let mut out = Vec::with_capacity(edges.len());
        for (src, dst, features) in edges {
            if src >= n || dst >= n {
                return Err(Error::IndexOutOfRange {
                    index: src.max(dst),
                    size: n,
                });
            }
            if features.len() != edge_dim {
                return Err(Error::DimensionMismatch {
                    expected: edge_dim,
                    got: features.len(),
                });
            }
            out.push(Edge {
                src,
                dst,
                features,
                kind: EdgeKind::Other,
            });
        }
        Ok(Self {
            variant,
            node_kinds: vec![NodeKind::Neuron { layer: 0, index: 0 }; n],
            nodes,
            edges: out,
            node_dim,
            edge_dim,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// True iff every directed edge `(s, t)` has a counterpart `(t, s)`.
    pub fn is_symmetric(&self) -> bool {
        let mut count: BTreeMap<(usize, usize), i64> = BTreeMap::new();
        for e in &self.edges {
            *count.entry((e.src, e.dst)).or_default() += 1;
            *count.entry((e.dst, e.src)).or_default() -= 1;
        }
        count.values().all(|&x| x == 0)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "variant": self.variant,
            "node_dim": self.node_dim,
            "edge_dim": self.edge_dim,
            "nodes": self.nodes.iter().enumerate()
                .map(|(id, h)| json!({"id": id, "features": h}))
                .collect::<Vec<_>>(),
            "edges": self.edges.iter()
                .map(|e| json!({"src": e.src, "dst": e.dst, "features": e.features}))
                .collect::<Vec<_>>(),
        })
    }

    /// DOT edge list; edge labels carry the first feature entry.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph wskit {\n");
        for (id, kind) in self.node_kinds.iter().enumerate() {
            let label = match kind {
                NodeKind::Neuron { layer, index } => format!("n{layer}_{index}"),
                NodeKind::Bias { layer } => format!("b{layer}"),
            };
            let _ = writeln!(s, "  {id} [label=\"{label}\"];");
        }
        for e in &self.edges {
            let p = e.features.first().copied().unwrap_or(0.0);
            let _ = writeln!(s, "  {} -> {} [label=\"{}\"];", e.src, e.dst, p);
        }
        s.push_str("}\n");
        s
    }
}

/// New node id of every old node id under the relabeling induced by `g`.
pub fn node_relabeling(arch: &Architecture, g: &GroupElement, variant: Variant) -> Vec<usize> {
    let dims = arch.dims();
    let mut out = Vec::new();
    for (l, &d) in dims.iter().enumerate() {
        let p = g.layer_perm(l, d);
        for i in 0..d {
            out.push(neuron_id(arch, l, p[i]));
        }
    }
    if variant == Variant::Gmn {
        let n: usize = dims.iter().sum();
        out.extend(n..n + arch.num_layers());
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct WlColoring {
    pub colors: Vec<usize>,
    pub rounds_to_stabilize: usize,
    /// Sorted `(color, count)` pairs.
    pub histogram: Vec<(usize, usize)>,
}

/// Exact key of a float: bit pattern with `-0.0` folded into `0.0`.
fn key(x: f64) -> u64 {
    if x == 0.0 {
        0
    } else {
        x.to_bits()
    }
}

fn keys(xs: &[f64]) -> Vec<u64> {
    xs.iter().map(|&x| key(x)).collect()
}

/// Assigns each item the rank of its signature among all distinct ones.
fn rank_signatures<T: Ord + Clone>(sigs: &[Vec<T>]) -> Vec<Vec<usize>> {
    let mut dict: BTreeMap<T, usize> = BTreeMap::new();
    for s in sigs.iter().flatten() {
        dict.entry(s.clone()).or_insert(0);
    }
    for (rank, v) in dict.values_mut().enumerate() {
        *v = rank;
    }
    sigs.iter()
        .map(|s| s.iter().map(|x| dict[x]).collect())
        .collect()
}

fn histogram(colors: &[usize]) -> Vec<(usize, usize)> {
    let mut h: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in colors {
        *h.entry(c).or_default() += 1;
    }
    h.into_iter().collect()
}

fn num_classes(colors: &[Vec<usize>]) -> usize {
    let mut all: Vec<usize> = colors.iter().flatten().copied().collect();
    all.sort_unstable();
    all.dedup();
    all.len()
}

/// Refines several graphs with one shared color namespace.
///
/// Colors at every round are ranks of sorted signatures over the union of all
/// graphs, so they are canonical: isomorphic inputs receive identical colors.
fn refine_jointly(graphs: &[&NeuralGraph], max_rounds: usize) -> (Vec<Vec<usize>>, usize) {
    let node_sigs: Vec<Vec<Vec<u64>>> = graphs
        .iter()
        .map(|g| g.nodes.iter().map(|h| keys(h)).collect())
        .collect();
    let mut colors = rank_signatures(&node_sigs);
    let edge_sigs: Vec<Vec<Vec<u64>>> = graphs
        .iter()
        .map(|g| g.edges.iter().map(|e| keys(&e.features)).collect())
        .collect();
    let edge_ids = rank_signatures(&edge_sigs);

    let incoming: Vec<Vec<Vec<usize>>> = graphs
        .iter()
        .map(|g| {
            let mut inc = vec![Vec::new(); g.num_nodes()];
            for (k, e) in g.edges.iter().enumerate() {
                inc[e.dst].push(k);
            }
            inc
        })
        .collect();

    let mut classes = num_classes(&colors);
    let mut rounds = 0;
    while rounds < max_rounds {
        let sigs: Vec<Vec<(usize, Vec<(usize, usize)>)>> = graphs
            .iter()
            .enumerate()
            .map(|(gi, g)| {
                (0..g.num_nodes())
                    .map(|n| {
                        let mut nb: Vec<(usize, usize)> = incoming[gi][n]
                            .iter()
                            .map(|&k| (colors[gi][g.edges[k].src], edge_ids[gi][k]))
                            .collect();
                        nb.sort_unstable();
                        (colors[gi][n], nb)
                    })
                    .collect()
            })
            .collect();
        let next = rank_signatures(&sigs);
        rounds += 1;
        let next_classes = num_classes(&next);
        colors = next;
        if next_classes == classes {
            break;
        }
        classes = next_classes;
    }
    (colors, rounds)
}

/// Edge-featured 1-WL over incoming edges, stopping once the partition is stable.
pub fn wl_refine(g: &NeuralGraph, max_rounds: usize) -> WlColoring {
    let (mut colors, rounds) = refine_jointly(&[g], max_rounds);
    let colors = colors.pop().unwrap_or_default();
    WlColoring {
        histogram: histogram(&colors),
        colors,
        rounds_to_stabilize: rounds,
    }
}

/// Joint refinement of both graphs; true iff the stable histograms differ.
pub fn wl_distinguishable(g1: &NeuralGraph, g2: &NeuralGraph) -> Result<bool> {
    if g1.variant != g2.variant {
        return Err(Error::VariantMismatch);
    }
    let bound = g1.num_nodes() + g2.num_nodes() + 1;
    let (colors, _) = refine_jointly(&[g1, g2], bound);
    Ok(histogram(&colors[0]) != histogram(&colors[1]))
}
