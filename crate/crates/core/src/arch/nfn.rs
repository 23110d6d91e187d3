//! Neuron-type positional encoding for NP-NFN style networks.
//!
//! Type slots are ordered `in_0 .. in_{d0-1}, out_0 .. out_{dL-1}, hidden`.
//! Weight entries receive `[source type, target type]`; bias entries receive
//! `[zeros, own type]`.

use crate::space::WeightElement;

pub fn type_count(v: &WeightElement) -> usize {
    v.arch().input_dim() + v.arch().output_dim() + 1
}

pub fn nfn_positional_encoding(v: &WeightElement) -> WeightElement {
    let arch = v.arch();
    let c = v.channels();
    let t = type_count(v);
    let d0 = arch.input_dim();
    let hidden = t - 1;
    let big_l = arch.num_layers();
    let mut out = WeightElement::zeros(arch, c + 2 * t);
    for l in 0..big_l {
        let (d_out, d_in) = arch.layer_shape(l);
        let is_last = l + 1 == big_l;
        let tgt_type = |i: usize| if is_last { d0 + i } else { hidden };
        for i in 0..d_out {
            for j in 0..d_in {
                let src_type = if l == 0 { j } else { hidden };
                let e = out.w_mut(l, i, j);
                e[..c].copy_from_slice(v.w(l, i, j));
                e[c + src_type] = 1.0;
                e[c + t + tgt_type(i)] = 1.0;
            }
            let e = out.b_mut(l, i);
            e[..c].copy_from_slice(v.b(l, i));
            e[c + t + tgt_type(i)] = 1.0;
        }
    }
    out
}
