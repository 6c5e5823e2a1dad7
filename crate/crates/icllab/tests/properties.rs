//! Property tests for the structural invariants of the bound machinery.

use icllab::approx::{
    bernstein_error_bound, bernstein_eval, bernstein_fit, remez_factor, BernsteinSurrogate,
    IntervalSubset, PiecewiseLinear, UnitIntervalFunction,
};
use icllab::cot::{final_bound_gen, CoTChainSpec};
use icllab::format6::cheb_amp;
use icllab::padding::{attention_out, padding_bounds, AttentionScene};
use icllab::path_bound::theorem1_bound;
use proptest::prelude::*;

proptest! {
    /// Affine functions reproduce exactly and endpoints interpolate.
    #[test]
    fn bernstein_affine_reproduction(
        a in -5.0..5.0f64,
        b in -5.0..5.0f64,
        n in 1usize..120,
        t in 0.0..=1.0f64,
    ) {
        let f = UnitIntervalFunction::new(a.abs(), move |x| a * x + b).unwrap();
        let s = bernstein_fit(&f, n).unwrap();
        prop_assert!((bernstein_eval(&s, t).unwrap() - (a * t + b)).abs() <= 1e-12);
        prop_assert_eq!(bernstein_eval(&s, 0.0).unwrap(), b);
        prop_assert_eq!(bernstein_eval(&s, 1.0).unwrap(), a + b);
    }

    /// Evaluation stays inside the node-value range (convex weights).
    #[test]
    fn bernstein_range_preservation(
        nodes in prop::collection::vec(-10.0..10.0f64, 2..40),
        t in 0.0..=1.0f64,
    ) {
        let lo = nodes.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = nodes.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let s = BernsteinSurrogate::from_node_values(nodes).unwrap();
        let v = bernstein_eval(&s, t).unwrap();
        prop_assert!(v >= lo - 1e-10 && v <= hi + 1e-10);
    }

    /// The Lipschitz error law holds for exact-constant piecewise-linear
    /// functions at every degree.
    #[test]
    fn bernstein_error_law(seed in 0u64..500, n in 1usize..80, l in 0.0..6.0f64) {
        let mut rng = icllab::rng::stream(seed, "prop-bern", 0);
        let pl = PiecewiseLinear::random(&mut rng, 5, -1.0, 1.0, l);
        let f = pl.as_function();
        let s = bernstein_fit(&f, n).unwrap();
        let bound = bernstein_error_bound(f.lipschitz(), n);
        for i in 0..=64 {
            let t = i as f64 / 64.0;
            prop_assert!((bernstein_eval(&s, t).unwrap() - f.value(t)).abs() <= bound + 1e-12);
        }
    }

    /// The amplification factor is monotone in the degree and shrinks as
    /// the covered measure grows.
    #[test]
    fn remez_factor_monotonicity(lo in 0.0..0.5f64, len in 0.1..0.5f64, n in 1usize..6) {
        let small = IntervalSubset::new((0.0, 1.0), vec![(lo, lo + len)]).unwrap();
        let large = IntervalSubset::new((0.0, 1.0), vec![(lo, (lo + len + 0.2).min(1.0))]).unwrap();
        prop_assert!(remez_factor(&small, n + 1) >= remez_factor(&small, n));
        prop_assert!(remez_factor(&large, n) <= remez_factor(&small, n));
    }

    /// theorem1_bound is nondecreasing in sup_pre and l_gamma.
    #[test]
    fn theorem1_bound_monotone(
        l in 0.0..4.0f64,
        dl in 0.0..2.0f64,
        a in 1.1..16.0f64,
        sup in 0.0..2.0f64,
        dsup in 0.0..1.0f64,
        n in 1usize..12,
    ) {
        let base = theorem1_bound(l, a, sup, n);
        prop_assert!(theorem1_bound(l, a, sup + dsup, n) >= base);
        prop_assert!(theorem1_bound(l + dl, a, sup, n) >= base);
    }

    /// Attention outputs are convex combinations: norm capped by the scene
    /// cap, and the padding bound chain holds on arbitrary scenes.
    #[test]
    fn padding_bound_chain(
        info_logits in prop::collection::vec(-8.0..8.0f64, 1..6),
        pad_logits in prop::collection::vec(-8.0..8.0f64, 0..6),
        seed in 0u64..1000,
    ) {
        let mut rng = icllab::rng::stream(seed, "prop-pad", 0);
        use rand::Rng;
        let d = 1 + (seed as usize) % 3;
        let vals = |k: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Vec<f64>> {
            (0..k).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect()
        };
        let iv = vals(info_logits.len(), &mut rng);
        let pv = vals(pad_logits.len(), &mut rng);
        let scene = AttentionScene::new(info_logits.clone(), iv.clone(), pad_logits, pv).unwrap();
        let r = padding_bounds(&scene).unwrap();
        prop_assert!(r.gap_norm <= r.bound_exact + 1e-9);
        prop_assert!(r.bound_exact <= r.bound_loose + 1e-12);
        let y = attention_out(&info_logits, &iv).unwrap();
        let norm = y.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!(norm <= scene.value_cap() + 1e-12);
    }

    /// The loose Chebyshev relaxation dominates the exact extremal value.
    #[test]
    fn cheb_loose_dominates(n in 1usize..8, k in 1usize..5, r in 0.2..2.0f64, ratio in 1.0..4.0f64) {
        let (loose, exact) = cheb_amp(n, k, r * ratio, r).unwrap();
        prop_assert!(loose >= exact || (loose.is_infinite() && exact.is_infinite()));
    }

    /// The composed generalization bound never shrinks when any constant
    /// grows.
    #[test]
    fn cot_gen_bound_monotone(
        alpha in prop::collection::vec(0.0..2.0f64, 2),
        beta in prop::collection::vec(0.0..2.0f64, 2),
        lip in prop::collection::vec(0.0..2.0f64, 2),
        c_extra in 0.0..1.0f64,
        l_extra in 0.0..1.0f64,
        idx in 0usize..2,
    ) {
        let base = CoTChainSpec::new(alpha, beta, lip).unwrap()
            .with_generalization(vec![1.2, 1.5], vec![0.4, 0.8], vec![0.3, 0.2]).unwrap();
        let b0 = final_bound_gen(&base, 0.05).unwrap();
        let mut bumped = base.clone();
        bumped.per_step_c[idx] += c_extra;
        prop_assert!(final_bound_gen(&bumped, 0.05).unwrap() >= b0 - 1e-12);
        let mut bumped = base.clone();
        bumped.per_step_l[idx] += l_extra;
        prop_assert!(final_bound_gen(&bumped, 0.05).unwrap() >= b0 - 1e-12);
    }
}
