//! Property-based checks of the library's structural invariants, driven by
//! seeded random instances.

mod common;

use proptest::prelude::*;
use rand::Rng;

use common::{random_feasible_lp, random_net, random_tiny_instance, rng};
use relucheck::deeppoly::{analyze, relu_transformer, ForcedFacts, ReluMode, ReluState};
use relucheck::lp::{tighten, LpOutcome, TightenOutcome};
use relucheck::network::InputBox;
use relucheck::quant::{box_volume_fraction, quantify, split_box, QuantOptions};
use relucheck::refine::{verify, SpuriousRegion, VerifyOptions};
use relucheck::Network;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// The ReLU relaxation brackets `max(x, 0)` on its whole input interval,
    /// classifies the interval's sign correctly, and picks the smaller-area
    /// lower slope.
    #[test]
    fn relu_relaxation_is_sound(
        l in -50.0f64..50.0,
        width in 0.0f64..100.0,
        t in 0.0f64..=1.0,
    ) {
        let u = l + width;
        let r = relu_transformer(l, u);
        let x = l + t * (u - l);
        let y = x.max(0.0);
        prop_assert!(r.lower.0 * x + r.lower.1 <= y + 1e-9);
        prop_assert!(y <= r.upper.0 * x + r.upper.1 + 1e-9);
        match r.state {
            ReluState::Deactivated => prop_assert!(u <= 0.0),
            ReluState::Activated => prop_assert!(l >= 0.0),
            ReluState::Uncertain => {
                prop_assert!(l < 0.0 && u > 0.0);
                prop_assert_eq!(r.mode == ReluMode::LambdaOne, u > -l);
                prop_assert_eq!(r.lower.0, if u > -l { 1.0 } else { 0.0 });
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Concrete execution traces from the analyzed box satisfy every
    /// neuron's symbolic and concrete bounds.
    #[test]
    fn sampled_traces_lie_in_gamma(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let input_dim = rng.gen_range(2..=4);
        let hidden: Vec<usize> =
            (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(2..=6)).collect();
        let output_dim = rng.gen_range(2..=4);
        let net = random_net(&mut rng, input_dim, &hidden, output_dim);
        let center: Vec<f64> = (0..input_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let box_ = InputBox::linf_ball(&center, rng.gen_range(0.1..=1.5)).unwrap();
        let elem = analyze(&net, &box_, &ForcedFacts::default()).unwrap();
        for _ in 0..50 {
            let x = box_.sample_uniform(&mut rng);
            let trace = elem.graph().eval_trace(&x).unwrap();
            prop_assert!(elem.gamma_restricted_contains(&trace, 1e-7));
        }
    }

    /// Restricting the inputs with forced facts keeps the analysis sound for
    /// points of the restricted box.
    #[test]
    fn restricted_analysis_contains_restricted_traces(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let input_dim = rng.gen_range(2..=4);
        let hidden: Vec<usize> =
            (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(2..=6)).collect();
        let output_dim = rng.gen_range(2..=4);
        let net = random_net(&mut rng, input_dim, &hidden, output_dim);
        let center: Vec<f64> = (0..input_dim).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let box_ = InputBox::linf_ball(&center, rng.gen_range(0.5..=1.5)).unwrap();

        // A strict sub-box of the inputs, forced as facts.
        let mut facts = ForcedFacts::default();
        let mut sub_lo = Vec::with_capacity(input_dim);
        let mut sub_hi = Vec::with_capacity(input_dim);
        for d in 0..input_dim {
            let (l, u) = (box_.lower[d], box_.upper[d]);
            let a = rng.gen_range(0.0..=0.4);
            let b = rng.gen_range(0.6..=1.0);
            sub_lo.push(l + a * (u - l));
            sub_hi.push(l + b * (u - l));
            facts.force_bound(d, sub_lo[d], sub_hi[d]);
        }
        let sub_box = InputBox::new(sub_lo, sub_hi).unwrap();

        let elem = analyze(&net, &box_, &facts).unwrap();
        prop_assert!(!elem.is_empty());
        for _ in 0..30 {
            let x = sub_box.sample_uniform(&mut rng);
            let trace = elem.graph().eval_trace(&x).unwrap();
            prop_assert!(elem.gamma_restricted_contains(&trace, 1e-7));
        }
    }

    /// Splitting partitions the box: right count, inside the whole, volume
    /// fractions summing to one, and any point covered by some part.
    #[test]
    fn split_box_partitions_volume(seed in any::<u64>(), pow in 0u32..=5) {
        let mut rng = rng(seed);
        let dim = rng.gen_range(1..=4);
        let mut lo = Vec::with_capacity(dim);
        let mut hi = Vec::with_capacity(dim);
        for _ in 0..dim {
            let a: f64 = rng.gen_range(-2.0..=2.0);
            lo.push(a);
            hi.push(a + rng.gen_range(0.1..=3.0));
        }
        let whole = InputBox::new(lo, hi).unwrap();
        let k = 1usize << pow;
        let parts = split_box(&whole, k).unwrap();
        prop_assert_eq!(parts.len(), k);
        let total: f64 =
            parts.iter().map(|p| box_volume_fraction(p, &whole).unwrap()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9, "fractions sum to {}", total);
        for p in &parts {
            for d in 0..dim {
                prop_assert!(p.lower[d] >= whole.lower[d] - 1e-12);
                prop_assert!(p.upper[d] <= whole.upper[d] + 1e-12);
            }
        }
        let x = whole.sample_uniform(&mut rng);
        prop_assert!(parts.iter().any(|p| p.contains(&x, 1e-12)));
    }

    /// Region structure validation: equal labels are rejected, as are
    /// ruled-out lists that repeat a label or name the region's own labels.
    #[test]
    fn region_validation_rejects_bad_structures(
        anchor in 0usize..6,
        target in 0usize..6,
        extra in 0usize..6,
    ) {
        let base = SpuriousRegion::new(anchor, target, true, vec![]);
        prop_assert_eq!(base.is_ok(), anchor != target);
        if anchor != target {
            prop_assert!(SpuriousRegion::new(anchor, target, true, vec![extra, extra]).is_err());
            prop_assert!(SpuriousRegion::new(anchor, target, true, vec![target]).is_err());
            prop_assert!(SpuriousRegion::new(anchor, target, true, vec![anchor]).is_err());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Bound tightening never leaves the prior interval, never reports a
    /// feasible program infeasible, and the shrunk program stays feasible.
    #[test]
    fn tighten_preserves_feasibility(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let dense = random_feasible_lp(&mut rng);
        let lp = dense.to_lp();
        let var = rng.gen_range(0..dense.num_vars());
        match tighten(&lp, var) {
            TightenOutcome::Bounds { lower, upper } => {
                prop_assert!(lower >= dense.lo[var] - 1e-9);
                prop_assert!(upper <= dense.hi[var] + 1e-9);
                prop_assert!(lower <= upper + 1e-9);
                let mut shrunk = lp.clone();
                shrunk.set_bounds(var, lower, upper);
                let still_feasible = matches!(shrunk.feasibility(), LpOutcome::Optimal { .. });
                prop_assert!(still_feasible, "tightened program became infeasible");
            }
            TightenOutcome::Infeasible => {
                prop_assert!(false, "feasible-by-construction program reported infeasible");
            }
            TightenOutcome::Failed => {} // no information is an acceptable outcome
        }
    }

    /// Networks survive a JSON round trip bit-exactly.
    #[test]
    fn network_json_round_trip(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let input_dim = rng.gen_range(1..=5);
        let hidden: Vec<usize> =
            (0..rng.gen_range(0..=2)).map(|_| rng.gen_range(1..=6)).collect();
        let output_dim = rng.gen_range(1..=5);
        let net = random_net(&mut rng, input_dim, &hidden, output_dim);
        let back = Network::from_json_str(&net.to_json_string()).unwrap();
        prop_assert_eq!(&net, &back);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// Quantitative reports keep their bounds ordered and complementary.
    #[test]
    fn quant_bounds_are_ordered_and_clamped(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let inst = random_tiny_instance(&mut rng);
        let opts = QuantOptions { splits: 4, max_iterations: 2, ..QuantOptions::default() };
        let report = quantify(&inst.net, &inst.center, inst.radius, &opts).unwrap();
        prop_assert!((0.0..=1.0).contains(&report.eta_lower_bound));
        prop_assert!((0.0..=1.0).contains(&report.violation_upper_bound));
        prop_assert!(
            (report.eta_lower_bound + report.violation_upper_bound - 1.0).abs() <= 1e-9
        );
        prop_assert!(report.eta_lower_bound >= report.deeppoly_eta_lower_bound - 1e-12);
        prop_assert!(report.splits_verified >= report.splits_verified_without_refinement);
        prop_assert_eq!(report.splits_total, 4);
        prop_assert_eq!(report.splits.len(), 4);
    }

    /// Verification is a pure function of its inputs: two runs serialize to
    /// identical reports.
    #[test]
    fn verify_reports_are_deterministic(seed in any::<u64>()) {
        let mut rng = rng(seed);
        let inst = random_tiny_instance(&mut rng);
        let opts = VerifyOptions::default();
        let a = verify(&inst.net, &inst.center, inst.radius, &opts).unwrap();
        let b = verify(&inst.net, &inst.center, inst.radius, &opts).unwrap();
        prop_assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }
}
