use proptest::prelude::*;

use profilelab::fixedpoint::fixpoint_iterate;
use profilelab::martingale::{c_n, LambdaPoint};
use profilelab::oracle::exact_mean_profile;
use profilelab::rng::{stream, Purpose};
use profilelab::tree_sim::grow_profile;
use profilelab::weight_model::PRESETS;
use profilelab::{preset_default, Execution};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// The expected profile polynomial is C_n at every real point, and at
    /// theta = 0 both equal the leaf count.
    #[test]
    fn mean_profile_polynomial_is_c_n(idx in 0usize..PRESETS.len(), n in 0u64..120, t in prop::collection::vec(-0.7f64..0.7, 2)) {
        let m = preset_default(PRESETS[idx]).unwrap();
        let n = if m.d == 1 { n } else { n / 3 };
        let theta = t[..m.d].to_vec();
        let mp = exact_mean_profile(&m, n).unwrap();
        let sum: f64 = mp.means.iter().map(|(l, u)| {
            let dot: f64 = (0..m.d).map(|k| theta[k] * (l[k] - m.root_shift[k]) as f64).sum();
            u * (-dot).exp()
        }).sum();
        let c = c_n(&m, &LambdaPoint::real(theta), n).unwrap().to_complex().re;
        prop_assert!((sum / c - 1.0).abs() < 1e-9, "sum {sum} vs C_n {c}");
        let leaves = ((m.b - 1) as u64 * n + 1) as f64;
        prop_assert!((mp.total() / leaves - 1.0).abs() < 1e-12);
        let c0 = c_n(&m, &LambdaPoint::real(vec![0.0; m.d]), n).unwrap().to_complex().re;
        prop_assert!((c0 / leaves - 1.0).abs() < 1e-12);
    }

    /// Simulated levels are always among the levels the exact recursion reaches.
    #[test]
    fn simulated_levels_have_positive_mean(idx in 0usize..PRESETS.len(), n in 0u64..40, seed in any::<u64>()) {
        let m = preset_default(PRESETS[idx]).unwrap();
        let p = grow_profile(&m, n, &mut stream(seed, Purpose::Replication, 0)).unwrap();
        let mp = exact_mean_profile(&m, n).unwrap();
        for l in p.counts.keys() {
            prop_assert!(mp.get(l) > 0.0, "level {l:?} has exact mean 0");
        }
    }

    #[test]
    fn degenerate_pool_stays_at_one(idx in 0usize..PRESETS.len(), size in 2usize..300, iters in 1u64..4, seed in any::<u64>()) {
        let m = preset_default(PRESETS[idx]).unwrap();
        let pool = fixpoint_iterate(&m, &vec![0.0; m.d], size, iters, seed, Execution::Sequential).unwrap();
        prop_assert!(pool.samples.iter().all(|w| (w - 1.0).abs() <= 64.0 * f64::EPSILON));
    }
}
