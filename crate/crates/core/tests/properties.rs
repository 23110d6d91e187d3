use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use wskit::canonize::canon;
use wskit::graph::{build_graph, wl_refine, Variant};
use wskit::io::{from_json, to_json};
use wskit::regions::regions_1d;
use wskit::{act, random_weights, realize, Architecture, GroupElement, WeightDist};

const ARCHS: [&[usize]; 4] = [&[1, 3, 1], &[2, 4, 3, 2], &[1, 4, 4, 1], &[3, 2, 5, 2, 1]];

fn setup(a: usize, seed: u64) -> (Architecture, ChaCha8Rng) {
    (Architecture::relu(ARCHS[a]).unwrap(), ChaCha8Rng::seed_from_u64(seed))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn action_is_a_homomorphism(a in 0..ARCHS.len(), seed in any::<u64>(), c in 1usize..3) {
        let (arch, mut rng) = setup(a, seed);
        let v = random_weights(&arch, c, seed, WeightDist::default());
        let g = GroupElement::random(&arch, &mut rng);
        let h = GroupElement::random(&arch, &mut rng);
        let lhs = act(&h.compose(&g).unwrap(), &v).unwrap();
        let rhs = act(&h, &act(&g, &v).unwrap()).unwrap();
        prop_assert!(lhs.bit_eq(&rhs));
        let back = act(&g.inverse(), &act(&g, &v).unwrap()).unwrap();
        prop_assert!(back.bit_eq(&v));
    }

    #[test]
    fn canon_is_constant_on_orbits(a in 0..ARCHS.len(), seed in any::<u64>()) {
        let (arch, mut rng) = setup(a, seed);
        let v = random_weights(&arch, 1, seed, WeightDist::default());
        let g = GroupElement::random(&arch, &mut rng);
        let base = canon(&v).unwrap();
        let moved = canon(&act(&g, &v).unwrap()).unwrap();
        prop_assert!(base.canon5.bit_eq(&moved.canon5));
        prop_assert!(canon(&base.representative).unwrap().representative.bit_eq(&base.representative));
    }

    #[test]
    fn json_roundtrip_is_bit_exact(a in 0..ARCHS.len(), seed in any::<u64>(), c in 1usize..4) {
        let (arch, _) = setup(a, seed);
        let v = random_weights(&arch, c, seed, WeightDist::Normal { mean: 0.0, std: 3.0 });
        prop_assert!(from_json(&to_json(&v)).unwrap().bit_eq(&v));
    }

    #[test]
    fn wl_histogram_is_permutation_invariant(a in 0..ARCHS.len(), seed in any::<u64>()) {
        let (arch, mut rng) = setup(a, seed);
        let v = random_weights(&arch, 1, seed, WeightDist::default());
        let gv = act(&GroupElement::random(&arch, &mut rng), &v).unwrap();
        for variant in [Variant::Gmn, Variant::Ng] {
            let h1 = wl_refine(&build_graph(&v, variant), 64).histogram;
            let h2 = wl_refine(&build_graph(&gv, variant), 64).histogram;
            prop_assert_eq!(h1, h2);
        }
    }

    #[test]
    fn regions_match_forward_pass(k in 1usize..12, depth in 0usize..2, seed in any::<u64>(), x in -4.0f64..4.0) {
        let dims: Vec<usize> = std::iter::once(1).chain(std::iter::repeat(k).take(depth + 1)).chain([2]).collect();
        let arch = Architecture::relu(&dims).unwrap();
        let v = random_weights(&arch, 1, seed, WeightDist::default());
        let pl = regions_1d(&v, (-4.0, 4.0)).unwrap();
        let y = realize(&v, &[x]).unwrap();
        for (p, q) in pl.eval(x).iter().zip(&y) {
            prop_assert!((p - q).abs() <= 1e-9 * (1.0 + q.abs()));
        }
    }
}
