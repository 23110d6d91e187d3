//! Neuron identification tags, bias ranks and the canonization map.
//!
//! Hidden neurons are identified by the rank of their bias within their
//! layer; input and output neurons keep their raw index. Sorting the tagged
//! entries yields a representative of the permutation orbit that depends only
//! on the orbit.

use crate::error::{Error, Result};
use crate::space::{
    first_tie, flatten, unflatten, FlatVector, GroupElement, LayerParams, WeightElement,
};

/// Per-layer neuron identifiers for layers `1..=L`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasRanks {
    pub ranks: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonResult {
    /// Sorted tagged element, 5 channels.
    pub canon5: WeightElement,
    /// Channel 0 of `canon5`.
    pub representative: WeightElement,
    /// `representative == act(g_v, input)`.
    pub g_v: GroupElement,
}

fn require_single(v: &WeightElement) -> Result<()> {
    if v.channels() != 1 {
        return Err(Error::UnsupportedChannels(v.channels()));
    }
    Ok(())
}

pub fn bias_ranks(v: &WeightElement) -> Result<BiasRanks> {
    require_single(v)?;
    if let Some((layer, i, j)) = first_tie(v, 0.0) {
        return Err(Error::TiedBiases { layer, i, j });
    }
    let last = v.num_layers() - 1;
    let ranks = (0..v.num_layers())
        .map(|l| {
            let b = &v.layers()[l].b;
            if l == last {
                (0..b.len()).collect()
            } else {
                b.iter()
                    .map(|&bi| b.iter().filter(|&&bj| bj < bi).count())
                    .collect()
            }
        })
        .collect();
    Ok(BiasRanks { ranks })
}

/// Tags every entry with `(value, layer, type, src_id, tgt_id)`.
///
/// Layers are 1-based; type is 0 for weights and 1 for biases; bias entries
/// use `src_id = 0` and `tgt_id` = the neuron's identifier.
pub fn neuron_id_map(v: &WeightElement) -> Result<WeightElement> {
    let ranks = bias_ranks(v)?;
    Ok(tag_with(v, &ranks))
}

fn tag_with(v: &WeightElement, r: &BiasRanks) -> WeightElement {
    let arch = v.arch();
    let mut out = WeightElement::zeros(arch, 5);
    for l in 0..arch.num_layers() {
        let (d_out, d_in) = arch.layer_shape(l);
        let layer = (l + 1) as f64;
        for i in 0..d_out {
            let tgt = r.ranks[l][i] as f64;
            for j in 0..d_in {
                let src = if l == 0 { j } else { r.ranks[l - 1][j] } as f64;
                out.w_mut(l, i, j)
                    .copy_from_slice(&[v.w_scalar(l, i, j), layer, 0.0, src, tgt]);
            }
            out.b_mut(l, i)
                .copy_from_slice(&[v.b_scalar(l, i), layer, 1.0, 0.0, tgt]);
        }
    }
    out
}

/// Sort key of a tagged entry: (layer, type, tgt, src).
///
/// Ordering targets before sources makes the sorted list unflatten into the
/// row-major layout of the representative.
fn sort_key(row: &[f64]) -> [u64; 4] {
    [row[1] as u64, row[2] as u64, row[4] as u64, row[3] as u64]
}

pub fn canon(v: &WeightElement) -> Result<CanonResult> {
    let ranks = bias_ranks(v)?;
    let tagged = flatten(&tag_with(v, &ranks));
    let mut rows: Vec<&[f64]> = tagged.values.chunks(5).collect();
    rows.sort_by_key(|r| sort_key(r));
    let sorted = FlatVector {
        values: rows.concat(),
        channels: 5,
    };
    let canon5 = unflatten(&sorted, v.arch(), 5)?;
    let representative = canon5.select_channels(0..1)?;
    let hidden = v.num_layers() - 1;
    let g_v = GroupElement::new(v.arch(), ranks.ranks[..hidden].to_vec())?;
    Ok(CanonResult {
        canon5,
        representative,
        g_v,
    })
}

/// Entry value in channel 0 followed by `flatten(canon5)` at every entry.
pub fn canon_features(v: &WeightElement) -> Result<WeightElement> {
    let block = flatten(&canon(v)?.canon5).values;
    let c = 1 + block.len();
    let spread = |xs: &[f64]| -> Vec<f64> {
        let mut out = Vec::with_capacity(xs.len() * c);
        for &x in xs {
            out.push(x);
            out.extend_from_slice(&block);
        }
        out
    };
    let layers = v
        .layers()
        .iter()
        .map(|p| LayerParams {
            w: spread(&p.w),
            b: spread(&p.b),
        })
        .collect();
    WeightElement::new(v.arch().clone(), c, layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{act, random_weights, Architecture, WeightDist};

    fn arch(d: &[usize]) -> Architecture {
        Architecture::relu(d).unwrap()
    }

    fn small() -> WeightElement {
        WeightElement::from_matrices(
            arch(&[1, 2, 1]),
            &[vec![vec![1.0], vec![2.0]], vec![vec![3.0, 4.0]]],
            &[vec![0.5, -0.3], vec![0.9]],
        )
        .unwrap()
    }

    fn all_s2xs2(a: &Architecture) -> Vec<GroupElement> {
        let p = [vec![0, 1], vec![1, 0]];
        let mut out = vec![];
        for x in &p {
            for y in &p {
                out.push(GroupElement::new(a, vec![x.clone(), y.clone()]).unwrap());
            }
        }
        out
    }

    #[test]
    fn ranks_follow_bias_order() {
        assert_eq!(bias_ranks(&small()).unwrap().ranks, vec![vec![1, 0], vec![0]]);
        let v = WeightElement::from_matrices(
            arch(&[1, 3, 2]),
            &[vec![vec![0.0]; 3], vec![vec![0.0; 3]; 2]],
            &[vec![-1.0, 0.0, 3.0], vec![5.0, -5.0]],
        )
        .unwrap();
        assert_eq!(bias_ranks(&v).unwrap().ranks, vec![vec![0, 1, 2], vec![0, 1]]);
    }

    #[test]
    fn ties_are_rejected() {
        let mut v = small();
        v.layers_mut()[0].b = vec![0.2, 0.2];
        assert_eq!(
            bias_ranks(&v),
            Err(Error::TiedBiases { layer: 1, i: 0, j: 1 })
        );
        assert!(canon(&v).is_err());
    }

    #[test]
    fn bias_tags_of_small_example() {
        let pe = neuron_id_map(&small()).unwrap();
        assert_eq!(pe.b(0, 0), &[0.5, 1.0, 1.0, 0.0, 1.0]);
        assert_eq!(pe.b(0, 1), &[-0.3, 1.0, 1.0, 0.0, 0.0]);
        assert_eq!(pe.b(1, 0), &[0.9, 2.0, 1.0, 0.0, 0.0]);
        assert_eq!(pe.w(1, 0, 0), &[3.0, 2.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn tags_are_unique() {
        let v = random_weights(&arch(&[2, 3, 4, 2]), 1, 8, WeightDist::default());
        let pe = flatten(&neuron_id_map(&v).unwrap());
        let mut keys: Vec<[u64; 4]> = pe.values.chunks(5).map(sort_key).collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), v.arch().param_count());
    }

    #[test]
    fn tags_move_with_the_action() {
        let a = arch(&[1, 2, 2, 1]);
        let v = random_weights(&a, 1, 3, WeightDist::default());
        let pe = neuron_id_map(&v).unwrap();
        for g in all_s2xs2(&a) {
            let moved = neuron_id_map(&act(&g, &v).unwrap()).unwrap();
            let expected = act(&g, &pe).unwrap();
            assert!(moved.bit_eq(&expected));
        }
    }

    #[test]
    fn canon_of_small_example() {
        let r = canon(&small()).unwrap();
        assert_eq!(r.representative.layers()[0].b, vec![-0.3, 0.5]);
        assert_eq!(r.representative.weight_matrix(0), vec![vec![2.0], vec![1.0]]);
        assert_eq!(r.representative.weight_matrix(1), vec![vec![4.0, 3.0]]);
        assert_eq!(r.g_v.perms(), &[vec![1, 0]]);
    }

    #[test]
    fn sorted_input_is_a_fixed_point() {
        let mut v = small();
        v.layers_mut()[0].b = vec![-0.3, 0.5];
        let r = canon(&v).unwrap();
        assert!(r.representative.bit_eq(&v));
        assert!(r.g_v.is_identity());
    }

    #[test]
    fn canon_is_orbit_invariant_on_s3xs3() {
        let a = arch(&[1, 3, 3, 1]);
        let v = random_weights(&a, 1, 21, WeightDist::default());
        let base = canon(&v).unwrap();
        let perms: Vec<Vec<usize>> = vec![
            vec![0, 1, 2],
            vec![0, 2, 1],
            vec![1, 0, 2],
            vec![1, 2, 0],
            vec![2, 0, 1],
            vec![2, 1, 0],
        ];
        let mut n = 0;
        for p in &perms {
            for q in &perms {
                let h = GroupElement::new(&a, vec![p.clone(), q.clone()]).unwrap();
                let w = act(&h, &v).unwrap();
                let r = canon(&w).unwrap();
                assert!(r.canon5.bit_eq(&base.canon5));
                assert!(act(&r.g_v.inverse(), &r.representative).unwrap().bit_eq(&w));
                assert_eq!(r.g_v, base.g_v.compose(&h.inverse()).unwrap());
                n += 1;
            }
        }
        assert_eq!(n, 36);
        let again = canon(&base.representative).unwrap();
        assert!(again.representative.bit_eq(&base.representative));
    }

    #[test]
    fn representative_biases_ascend() {
        let v = random_weights(&arch(&[2, 5, 4, 3]), 1, 2, WeightDist::default());
        let r = canon(&v).unwrap().representative;
        for l in 0..2 {
            let b = &r.layers()[l].b;
            assert!(b.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn features_broadcast_and_commute() {
        let a = arch(&[1, 2, 2, 1]);
        let v = random_weights(&a, 1, 5, WeightDist::default());
        let f = canon_features(&v).unwrap();
        let m = a.param_count();
        assert_eq!(f.channels(), 5 * m + 1);
        let rows: Vec<&[f64]> = f.entries().collect();
        let flat = flatten(&v).values;
        for (k, row) in rows.iter().enumerate() {
            assert_eq!(row[0].to_bits(), flat[k].to_bits());
            assert_eq!(&row[1..], &rows[0][1..]);
        }
        for g in all_s2xs2(&a) {
            let lhs = canon_features(&act(&g, &v).unwrap()).unwrap();
            assert!(lhs.bit_eq(&act(&g, &f).unwrap()));
        }
    }
}
