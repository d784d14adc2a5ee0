#![allow(clippy::neg_cmp_op_on_partial_ord)]

use proptest::prelude::*;

use switchsup::meanfield::{field, FieldKind, MeanFieldPoint, MeanFieldScenario};
use switchsup::partition::{enumerate_subsets, locate, PartitionPattern, PartitionProfile};
use switchsup::plant::Interval;
use switchsup::rng::RngStream;
use switchsup::scenario::RewardTable;
use switchsup::simplex::{
    perturbed_sample, quadratic_form, replicator_update, StrategyVector, UnitVector,
};
use switchsup::supervisor::{performance_from_errors, Performance};

fn simplex_point(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, 2..=max_len).prop_map(|raw| {
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|x| x / s).collect()
    })
}

fn sorted_breakpoints() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::btree_set(1u32..1000, 0..4)
        .prop_map(|set| set.into_iter().map(|k| f64::from(k) / 1000.0).collect())
}

proptest! {
    #[test]
    fn updates_stay_on_the_simplex(v in simplex_point(8), pick in any::<prop::sample::Index>(), gain in 0.0f64..3.0) {
        let v = StrategyVector::new(v).unwrap();
        let chosen = pick.index(v.len());
        let out = replicator_update(&v, UnitVector::new(v.len(), chosen).unwrap(), gain).unwrap();
        prop_assert!(out.vector.is_valid(1e-12));
        prop_assert_eq!(out.clamped, gain > 1.0);
        // the reinforced coordinate never shrinks, the others never grow
        for i in 0..v.len() {
            if i == chosen {
                prop_assert!(out.vector.get(i) >= v.get(i) - 1e-15);
            } else {
                prop_assert!(out.vector.get(i) <= v.get(i) + 1e-15);
            }
        }
    }

    #[test]
    fn unit_gain_lands_on_the_vertex(v in simplex_point(6), pick in any::<prop::sample::Index>()) {
        let v = StrategyVector::new(v).unwrap();
        let chosen = pick.index(v.len());
        let out = replicator_update(&v, UnitVector::new(v.len(), chosen).unwrap(), 1.0).unwrap();
        prop_assert_eq!(out.vector, StrategyVector::vertex(v.len(), chosen));
    }

    #[test]
    fn samples_avoid_zero_probability(mut raw in prop::collection::vec(0.0f64..1.0, 2..7), zero in any::<prop::sample::Index>(), seed in any::<u64>()) {
        let z = zero.index(raw.len());
        raw[z] = 0.0;
        prop_assume!(raw.iter().sum::<f64>() > 1e-3);
        let v = StrategyVector::from_unnormalized(&raw);
        let mut rng = RngStream::new(seed);
        for _ in 0..50 {
            let m = perturbed_sample(&v, 0.0, &mut rng).unwrap();
            prop_assert!(m < v.len() && m != z);
        }
        let m = perturbed_sample(&v, 0.5, &mut rng).unwrap();
        prop_assert!(m < v.len());
    }

    #[test]
    fn quadratic_form_is_the_pairwise_sum(v in simplex_point(7), seed in any::<u64>()) {
        let mut rng = RngStream::new(seed);
        let r: Vec<f64> = (0..v.len()).map(|_| rng.uniform_in(-3.0, 3.0)).collect();
        let mut pairwise = 0.0;
        for i in 0..v.len() {
            for j in (i + 1)..v.len() {
                pairwise += v[i] * v[j] * (r[i] - r[j]).powi(2);
            }
        }
        let q = quadratic_form(&StrategyVector::new(v).unwrap(), &r);
        prop_assert!(q >= -1e-15);
        prop_assert!((q - pairwise).abs() <= 1e-12 * pairwise.max(1.0));
    }

    #[test]
    fn partition_cells_tile_the_box(b0 in sorted_breakpoints(), b1 in sorted_breakpoints(), u0 in 0.0f64..=1.0, u1 in 0.0f64..=1.0) {
        let unit = Interval { lo: 0.0, hi: 1.0 };
        let profile = PartitionProfile::from_breakpoints(3, vec![unit, unit], vec![b0.clone(), b1.clone()]).unwrap();
        let subsets = enumerate_subsets(&profile);
        prop_assert_eq!(subsets.len(), (b0.len() + 1) * (b1.len() + 1));
        prop_assert!(subsets.windows(2).all(|w| w[0] < w[1]));
        let id = locate(&profile, &[u0, u1]).unwrap();
        let bounds = profile.subset_bounds(&id);
        for (x, cell) in [u0, u1].iter().zip(&bounds) {
            let top = (cell.hi - 1.0).abs() < 1e-15;
            prop_assert!(*x >= cell.lo && (*x < cell.hi || (top && *x <= cell.hi)));
        }
        prop_assert_eq!(profile.locate_index(&[u0, u1]).unwrap(), profile.flat_index(&id));
        prop_assert_eq!(profile.subset_at(profile.flat_index(&id)), id);
    }

    #[test]
    fn breakpoints_belong_to_the_upper_cell(b in sorted_breakpoints()) {
        let unit = Interval { lo: 0.0, hi: 1.0 };
        let pattern = PartitionPattern::new(0, b.clone(), unit).unwrap();
        for (k, x) in b.iter().enumerate() {
            prop_assert_eq!(pattern.cell_of(*x), k + 1);
        }
        prop_assert_eq!(pattern.cell_of(1.0), b.len());
    }

    #[test]
    fn performance_is_the_capped_inverse_error(sum in 0.0f64..100.0, eta in 1usize..500) {
        let p = performance_from_errors(sum, eta, 1e6);
        let Performance::Value { r, eta: e, capped } = p else { panic!("{p:?}") };
        prop_assert_eq!(e, eta);
        prop_assert_eq!(r, (eta as f64 / sum).min(1e6));
        prop_assert_eq!(capped, !(eta as f64 / sum < 1e6));
        prop_assert_eq!(performance_from_errors(sum, 0, 1e6), Performance::NoData);
    }

    #[test]
    fn fields_are_tangent_to_the_simplex(seed in any::<u64>(), lambda in 0.0f64..=1.0) {
        let mut rng = RngStream::new(seed);
        let rewards: Vec<Vec<Vec<f64>>> = [1usize, 3]
            .iter()
            .map(|n| (0..*n).map(|_| (0..3).map(|_| rng.uniform_in(0.1, 5.0)).collect()).collect())
            .collect();
        let scenario = MeanFieldScenario::new(RewardTable::new(rewards).unwrap(), lambda).unwrap();
        let point = MeanFieldPoint::random_interior(&scenario, &mut rng);
        for kind in [FieldKind::Literal, FieldKind::SelectionWeighted] {
            let f = field(&scenario, &point, kind);
            prop_assert!(f.w.iter().sum::<f64>().abs() < 1e-12);
            for block in f.v.iter().flatten() {
                prop_assert!(block.iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }
}
