//! Plain vector MLPs used as update functions and pointwise feature maps.
//!
//! An `MlpSpec` is a single-channel weight-space element, so it shares the
//! weight-file format and the forward pass of [`crate::space::realize`].

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::space::{random_weights_with, Activation, Architecture, WeightDist, WeightElement};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpSpec {
    net: WeightElement,
}

impl MlpSpec {
    pub fn new(net: WeightElement) -> Result<Self> {
        if net.channels() != 1 {
            return Err(Error::UnsupportedChannels(net.channels()));
        }
        Ok(Self { net })
    }

    /// Single affine map `x -> A x + b`, `a` given as rows.
    pub fn affine(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let d_out = a.len();
        let d_in = a.first().map_or(0, Vec::len);
        let arch = Architecture::new(vec![d_in, d_out], Activation::Identity)?;
        Self::new(WeightElement::from_matrices(arch, &[a], &[b])?)
    }

    /// Linear map selecting coordinates: output `k` is input `idx[k]`.
    pub fn select(d_in: usize, idx: &[usize]) -> Result<Self> {
        let rows = idx
            .iter()
            .map(|&s| {
                if s >= d_in {
                    return Err(Error::IndexOutOfRange { index: s, size: d_in });
                }
                let mut r = vec![0.0; d_in];
                r[s] = 1.0;
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::affine(rows, vec![0.0; idx.len()])
    }

    pub fn zero(d_in: usize, d_out: usize) -> Result<Self> {
        Self::affine(vec![vec![0.0; d_in]; d_out], vec![0.0; d_out])
    }

    /// Random MLP with the given widths; hidden layers use `activation`.
    pub fn random(dims: &[usize], activation: Activation, rng: &mut impl Rng) -> Result<Self> {
        let arch = Architecture::new(dims.to_vec(), activation)?;
        Self::new(random_weights_with(&arch, 1, rng, WeightDist::default()))
    }

    pub fn net(&self) -> &WeightElement {
        &self.net
    }

    pub fn in_dim(&self) -> usize {
        self.net.arch().input_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.net.arch().output_dim()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        crate::space::realize(&self.net, x)
    }

    /// Forward pass writing into `out`; dimensions are the caller's contract.
    pub(crate) fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        let arch = self.net.arch();
        let act = arch.activation();
        let last = arch.num_layers() - 1;
        let mut h = x.to_vec();
        for (l, p) in self.net.layers().iter().enumerate() {
            let (d_out, d_in) = arch.layer_shape(l);
            let mut next = vec![0.0; d_out];
            for (i, z) in next.iter_mut().enumerate() {
                let mut acc = 0.0;
                for (w, hj) in p.w[i * d_in..(i + 1) * d_in].iter().zip(&h) {
                    acc += w * hj;
                }
                acc += p.b[i];
                *z = if l == last { acc } else { act.apply(acc) };
            }
            h = next;
        }
        out.copy_from_slice(&h);
    }

    pub fn to_json(&self) -> Value {
        crate::io::to_json(&self.net)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        Self::new(crate::io::from_json(v)?)
    }
}

impl Serialize for MlpSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(s)
    }
}

impl<'de> Deserialize<'de> for MlpSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        Self::from_json(&v).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_and_select() {
        let m = MlpSpec::affine(vec![vec![1.0, 2.0], vec![0.0, -1.0]], vec![0.5, 0.0]).unwrap();
        assert_eq!(m.eval(&[1.0, 1.0]).unwrap(), vec![3.5, -1.0]);
        let s = MlpSpec::select(3, &[2, 0]).unwrap();
        assert_eq!(s.eval(&[1.0, 2.0, 3.0]).unwrap(), vec![3.0, 1.0]);
        assert!(MlpSpec::select(2, &[2]).is_err());
    }

    #[test]
    fn eval_into_matches_eval() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = MlpSpec::random(&[3, 8, 2], Activation::Relu, &mut rng).unwrap();
        let x = [0.3, -0.2, 1.5];
        let mut out = [0.0; 2];
        m.eval_into(&x, &mut out);
        assert_eq!(out.to_vec(), m.eval(&x).unwrap());
    }

    #[test]
    fn json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = MlpSpec::random(&[2, 4, 1], Activation::Tanh, &mut rng).unwrap();
        assert_eq!(MlpSpec::from_json(&m.to_json()).unwrap(), m);
    }
}
