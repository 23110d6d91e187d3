//! Exact linear regions of ReLU networks with a scalar input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::space::{Activation, Architecture, WeightElement};

/// Breakpoints closer than this are treated as one.
pub const BREAK_TOL: f64 = 1e-12;
/// Relative tolerance used when merging pieces with equal coefficients.
const MERGE_TOL: f64 = 1e-9;

/// A continuous piecewise-affine map `[a, b] -> R^{d_L}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pl1d {
    pub interval: (f64, f64),
    /// Strictly increasing points inside `(a, b)`.
    pub breakpoints: Vec<f64>,
    /// One slope vector per segment (`breakpoints.len() + 1` of them).
    pub slopes: Vec<Vec<f64>>,
    pub intercepts: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
struct Piece {
    lo: f64,
    hi: f64,
    s: Vec<f64>,
    t: Vec<f64>,
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.iter()
        .zip(b)
        .all(|(x, y)| (x - y).abs() <= tol * (1.0 + x.abs().max(y.abs())))
}

pub fn regions_1d(v: &WeightElement, interval: (f64, f64)) -> Result<Pl1d> {
    let arch = v.arch();
    if arch.input_dim() != 1 || arch.activation() != Activation::Relu || v.channels() != 1 {
        return Err(Error::UnsupportedArch(format!(
            "need d_0 = 1, relu and one channel; got dims {:?}, {}, c = {}",
            arch.dims(),
            arch.activation().name(),
            v.channels()
        )));
    }
    let (a, b) = interval;
    if !(a < b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::IntervalMismatch { a0: a, a1: b, b0: a, b1: b });
    }
    let big_l = arch.num_layers();
    let mut pieces = vec![Piece {
        lo: a,
        hi: b,
        s: vec![1.0],
        t: vec![0.0],
    }];
    for l in 0..big_l {
        let (d_out, d_in) = arch.layer_shape(l);
        let p = &v.layers()[l];
        let mut next = Vec::with_capacity(pieces.len());
        for pc in pieces {
            let mut s = vec![0.0; d_out];
            let mut t = vec![0.0; d_out];
            for i in 0..d_out {
                let row = &p.w[i * d_in..(i + 1) * d_in];
                for (w, (sj, tj)) in row.iter().zip(pc.s.iter().zip(&pc.t)) {
                    s[i] += w * sj;
                    t[i] += w * tj;
                }
                t[i] += p.b[i];
            }
            if l + 1 == big_l {
                next.push(Piece { s, t, ..pc });
                continue;
            }
            let mut cuts: Vec<f64> = s
                .iter()
                .zip(&t)
                .filter(|(si, _)| **si != 0.0)
                .map(|(si, ti)| -ti / si)
                .filter(|&x| x > pc.lo + BREAK_TOL && x < pc.hi - BREAK_TOL)
                .collect();
            cuts.sort_by(f64::total_cmp);
            cuts.dedup_by(|x, y| (*x - *y).abs() <= BREAK_TOL);
            let mut edges = vec![pc.lo];
            edges.extend(cuts);
            edges.push(pc.hi);
            for w in edges.windows(2) {
                let mid = 0.5 * (w[0] + w[1]);
                let (mut s2, mut t2) = (s.clone(), t.clone());
                for i in 0..d_out {
                    if s[i] * mid + t[i] <= 0.0 {
                        s2[i] = 0.0;
                        t2[i] = 0.0;
                    }
                }
                next.push(Piece {
                    lo: w[0],
                    hi: w[1],
                    s: s2,
                    t: t2,
                });
            }
        }
        pieces = next;
    }
    let mut merged: Vec<Piece> = Vec::with_capacity(pieces.len());
    for pc in pieces {
        match merged.last_mut() {
            Some(last) if close(&last.s, &pc.s, MERGE_TOL) && close(&last.t, &pc.t, MERGE_TOL) => {
                last.hi = pc.hi;
            }
            _ => merged.push(pc),
        }
    }
    Ok(Pl1d {
        interval,
        breakpoints: merged[1..].iter().map(|p| p.lo).collect(),
        slopes: merged.iter().map(|p| p.s.clone()).collect(),
        intercepts: merged.iter().map(|p| p.t.clone()).collect(),
    })
}

impl Pl1d {
    pub fn num_regions(&self) -> usize {
        self.slopes.len()
    }

    fn segment_of(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&t| t <= x)
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let k = self.segment_of(x);
        self.slopes[k]
            .iter()
            .zip(&self.intercepts[k])
            .map(|(s, t)| s * x + t)
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let (a, b) = self.interval;
        let mut edges = vec![a];
        edges.extend(&self.breakpoints);
        edges.push(b);
        let segments: Vec<serde_json::Value> = edges
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                serde_json::json!({
                    "lo": w[0], "hi": w[1],
                    "slope": self.slopes[k], "intercept": self.intercepts[k],
                })
            })
            .collect();
        serde_json::json!({
            "interval": [a, b],
            "breakpoints": self.breakpoints,
            "segments": segments,
        })
    }
}

/// Compares two descriptions piece by piece on the common refinement.
pub fn pl_equal(p: &Pl1d, q: &Pl1d, tol: f64) -> Result<bool> {
    if p.interval != q.interval {
        return Err(Error::IntervalMismatch {
            a0: p.interval.0,
            a1: p.interval.1,
            b0: q.interval.0,
            b1: q.interval.1,
        });
    }
    let mut cuts: Vec<f64> = p.breakpoints.iter().chain(&q.breakpoints).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|x, y| (*x - *y).abs() <= BREAK_TOL);
    let mut edges = vec![p.interval.0];
    edges.extend(cuts);
    edges.push(p.interval.1);
    Ok(edges.windows(2).all(|w| {
        let mid = 0.5 * (w[0] + w[1]);
        let (i, j) = (p.segment_of(mid), q.segment_of(mid));
        let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(a, b)| (a - b).abs() <= tol);
        diff(&p.slopes[i], &q.slopes[j]) && diff(&p.intercepts[i], &q.intercepts[j])
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RegionBound {
    pub value: u64,
    pub saturated: bool,
}

pub const BOUND_CAP: u64 = 1 << 62;

/// Inductive upper bound on the number of linear regions:
/// `M_0 = 1`, `M_l = M_{l-1}^{d_{l-1}} * 2^{d_l}` over the hidden layers.
pub fn region_bound(arch: &Architecture) -> RegionBound {
    let dims = arch.dims();
    let cap = BOUND_CAP as u128;
    let mut m: u128 = 1;
    let mut saturated = false;
    for l in 1..arch.num_layers() {
        let mut next: u128 = 1;
        for _ in 0..dims[l - 1] {
            next = next.saturating_mul(m).min(cap + 1);
        }
        for _ in 0..dims[l] {
            next = next.saturating_mul(2).min(cap + 1);
        }
        if next > cap {
            saturated = true;
            next = cap;
        }
        m = next;
    }
    RegionBound {
        value: m as u64,
        saturated,
    }
}
