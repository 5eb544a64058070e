//! Property-based checks of the procedure algebra and the engine
//! identities that must hold for every input, not just the bundled data.

use mtp_power::dp::{dp_prsig, sample_dp_batch, DpBaseline, DpRule};
use mtp_power::mtp::{run_mtp, Method, PValueFamily, Procedure};
use mtp_power::mv::{pvalue_from_stat, stat_from_pvalue, TailType};
use mtp_power::power::{pvalue_weights, run_power_analysis, PowerStudyConfig, TestSpec};
use mtp_power::rng::stream_rng;
use mtp_power::special::Dof;
use mtp_power::Error;
use proptest::prelude::*;
use rand::Rng;

fn arb_dof() -> impl Strategy<Value = Dof> {
    prop_oneof![
        Just(Dof::Infinite),
        (1.0..300.0f64).prop_map(Dof::Finite),
    ]
}

fn arb_tail() -> impl Strategy<Value = TailType> {
    prop_oneof![
        Just(TailType::Lower),
        Just(TailType::Upper),
        Just(TailType::TwoSided),
    ]
}

fn arb_pvalues() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-7..0.999f64, 1..10)
}

fn distinct(ps: &[f64]) -> bool {
    let mut sorted = ps.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    sorted.windows(2).all(|w| w[1] - w[0] > 1e-9)
}

const ALL_METHODS: [&str; 8] = [
    "b",
    "h",
    "by",
    "dp",
    "b:weighted",
    "h:weighted",
    "by:weighted",
    "dp:weighted",
];

fn classical(weighted: bool) -> Vec<Method> {
    [Procedure::Bonferroni, Procedure::Holm, Procedure::BenjaminiYekutieli]
        .into_iter()
        .map(|p| Method::new(p, weighted))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn pvalue_stat_conversions_round_trip(
        p in 1e-6..0.999_999f64,
        dof in arb_dof(),
        tail in arb_tail(),
    ) {
        let stat = stat_from_pvalue(p, dof, tail).unwrap();
        prop_assert!(stat.is_finite());
        let back = pvalue_from_stat(stat, dof, tail);
        prop_assert!(
            (back - p).abs() <= 1e-9 + 1e-7 * p,
            "p {p} -> stat {stat} -> {back} (dof {dof}, {tail})"
        );
    }

    #[test]
    fn step_rules_reject_prefixes_of_the_sorted_order(
        ps in arb_pvalues(),
        alpha in 0.005..0.5f64,
    ) {
        let family = PValueFamily::unweighted(ps).unwrap();
        for method in classical(false) {
            let d = run_mtp(&family, alpha, method).unwrap();
            let first_keep = d
                .rejected_ranks
                .iter()
                .position(|&r| !r)
                .unwrap_or(d.rejected_ranks.len());
            prop_assert!(
                d.rejected_ranks[first_keep..].iter().all(|&r| !r),
                "{method}: rejected ranks not a prefix: {:?}",
                d.rejected_ranks
            );
            prop_assert_eq!(d.rejection_count, first_keep);
        }
    }

    #[test]
    fn rejection_counts_grow_with_alpha(
        ps in arb_pvalues(),
        weights_seed in 1u64..1000,
        lo in 0.01..0.2f64,
        scale in 1.1..8.0f64,
    ) {
        let m = ps.len();
        let hi = (lo * scale).min(0.9);
        let mut wrng = stream_rng(weights_seed, 0);
        let raw: Vec<f64> = (0..m).map(|_| wrng.random_range(0.05..5.0)).collect();
        for name in ALL_METHODS {
            let method: Method = name.parse().unwrap();
            if method.procedure == Procedure::DirichletProcess {
                continue; // stochastic thresholds; centering covered elsewhere
            }
            let family = if method.weighted {
                PValueFamily::weighted(ps.clone(), &raw).unwrap()
            } else {
                PValueFamily::unweighted(ps.clone()).unwrap()
            };
            let at_lo = run_mtp(&family, lo, method).unwrap().rejection_count;
            let at_hi = run_mtp(&family, hi, method).unwrap().rejection_count;
            prop_assert!(
                at_lo <= at_hi,
                "{method}: {at_lo} rejections at alpha {lo} but {at_hi} at {hi}"
            );
        }
    }

    #[test]
    fn decisions_are_permutation_invariant(
        ps in arb_pvalues(),
        perm_seed in 1u64..1000,
        alpha in 0.01..0.5f64,
    ) {
        prop_assume!(distinct(&ps));
        let m = ps.len();
        let mut perm: Vec<usize> = (0..m).collect();
        let mut rng = stream_rng(perm_seed, 0);
        // Fisher-Yates.
        for i in (1..m).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        let mut wrng = stream_rng(perm_seed, 1);
        let raw: Vec<f64> = (0..m).map(|_| wrng.random_range(0.05..5.0)).collect();
        let shuffled_p: Vec<f64> = perm.iter().map(|&k| ps[k]).collect();
        let shuffled_w: Vec<f64> = perm.iter().map(|&k| raw[k]).collect();
        for name in ["b", "h", "by", "b:weighted", "h:weighted", "by:weighted"] {
            let method: Method = name.parse().unwrap();
            let (orig, shuf) = if method.weighted {
                (
                    PValueFamily::weighted(ps.clone(), &raw).unwrap(),
                    PValueFamily::weighted(shuffled_p.clone(), &shuffled_w).unwrap(),
                )
            } else {
                (
                    PValueFamily::unweighted(ps.clone()).unwrap(),
                    PValueFamily::unweighted(shuffled_p.clone()).unwrap(),
                )
            };
            let d_orig = run_mtp(&orig, alpha, method).unwrap();
            let d_shuf = run_mtp(&shuf, alpha, method).unwrap();
            // Map the shuffled positions back to original identities.
            let mut back: Vec<usize> =
                d_shuf.rejected_ids.iter().map(|&k| perm[k]).collect();
            back.sort_unstable();
            prop_assert_eq!(
                &back,
                &d_orig.rejected_ids,
                "{} disagrees across a reshuffle",
                method
            );
        }
    }

    #[test]
    fn equal_weights_collapse_to_the_unweighted_rule(
        ps in arb_pvalues(),
        alpha in 0.01..0.5f64,
        w in 0.1..10.0f64,
    ) {
        let m = ps.len();
        let flat = PValueFamily::weighted(ps.clone(), &vec![w; m]).unwrap();
        let plain = PValueFamily::unweighted(ps).unwrap();
        for proc in [
            Procedure::Bonferroni,
            Procedure::Holm,
            Procedure::BenjaminiYekutieli,
        ] {
            let dw = run_mtp(&flat, alpha, Method::new(proc, true)).unwrap();
            let du = run_mtp(&plain, alpha, Method::new(proc, false)).unwrap();
            prop_assert_eq!(&dw.rejected_ids, &du.rejected_ids);
            for (a, b) in dw.thresholds.deltas().iter().zip(du.thresholds.deltas()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn dirichlet_draws_live_on_the_simplex(
        m in 1usize..25,
        rate in 0.2..5.0f64,
        seed in 1u64..500,
    ) {
        let baseline = DpBaseline::new(m).unwrap();
        let mut rng = stream_rng(seed, 2);
        let draws = sample_dp_batch(&baseline, rate, 40, &mut rng).unwrap();
        prop_assert_eq!(draws.len(), 40);
        for draw in &draws {
            prop_assert!(draw.mass().is_finite() && draw.mass() >= 0.0);
            prop_assert_eq!(draw.masses().len(), m);
            let mut sum = 0.0;
            for &v in draw.masses() {
                prop_assert!((0.0..=1.0 + 1e-12).contains(&v), "mass {v}");
                sum += v;
            }
            prop_assert!((sum - 1.0).abs() < 1e-9, "mass sum {sum}");
        }
    }

    #[test]
    fn prsig_is_nonincreasing_in_rank_under_step_up(
        ps in arb_pvalues(),
        seed in 1u64..500,
    ) {
        let family = PValueFamily::unweighted(ps).unwrap();
        let mut rng = stream_rng(seed, 3);
        let v = dp_prsig(&family, 0.05, 150, 1.0, false, DpRule::StepUp, &mut rng).unwrap();
        let probs = v.probabilities();
        for pair in probs.windows(2) {
            prop_assert!(
                pair[0] >= pair[1],
                "rank probabilities increased: {probs:?}"
            );
        }
    }

    #[test]
    fn pvalue_weights_are_normalized_marginal_powers(
        pmp in prop::collection::vec(1e-6..1.0f64, 1..12),
        scale in 0.1..1.0f64,
    ) {
        let w = pvalue_weights(&pmp).unwrap();
        let total: f64 = pmp.iter().sum();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (wi, hi) in w.iter().zip(&pmp) {
            prop_assert!((wi - hi / total).abs() < 1e-12);
        }
        // Shrinking every power by a common factor leaves the weights alone.
        // (Powers live in [0, 1], so only a shrinking rescale stays legal.)
        let scaled: Vec<f64> = pmp.iter().map(|h| h * scale).collect();
        let ws = pvalue_weights(&scaled).unwrap();
        for (a, b) in w.iter().zip(&ws) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

proptest! {
    // Each case runs the full engine, so keep the count low.
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn engine_identities_hold_on_random_studies(
        ratios in prop::collection::vec(-0.5..3.5f64, 1..4),
        seed in 1u64..10_000,
        method_ix in 0usize..4,
    ) {
        let m = ratios.len();
        let tests: Vec<TestSpec> = ratios
            .iter()
            .enumerate()
            .map(|(j, &r)| TestSpec {
                id: j as u32 + 1,
                label: format!("t{j}"),
                tail: TailType::TwoSided,
                dof: if j % 2 == 0 { Dof::Infinite } else { Dof::Finite(40.0) },
                effect_ratio: r,
                weight: 1.0 + j as f64,
                observed_p: None,
            })
            .collect();
        let mut config = PowerStudyConfig::new(tests, seed);
        config.alpha = 0.2;
        config.s_iters = 40;
        config.n_draws = 25;
        config.methods = vec![ALL_METHODS[method_ix * 2 + 1].parse().unwrap()];
        match run_power_analysis(&config) {
            Err(Error::AllZeroPower) => {} // legal outcome for weak studies
            Err(other) => return Err(TestCaseError::fail(other.to_string())),
            Ok(report) => {
                let mr = &report.methods[0];
                let mean = mr.pmp.iter().sum::<f64>() / m as f64;
                prop_assert_eq!(mr.pap, mean, "pap must be the exact mean");
                prop_assert!(mr.pcp <= mr.pdp + 1e-15);
                // A fractional DP count can put pap above pdp; the binary
                // rules cannot.
                if mr.method.procedure != Procedure::DirichletProcess {
                    prop_assert!(mr.pap <= mr.pdp + 1e-12);
                }
                for v in mr.pmp_variance.iter() {
                    prop_assert!(v.estimate <= v.bound + 1e-15);
                }
            }
        }
    }
}

// Empirical error-rate sanity under the calibrated null: with uniform
// p-values, Bonferroni's familywise error and BY's false discovery rate
// stay at or below alpha (up to Monte Carlo noise).
#[test]
fn error_rates_are_controlled_under_the_uniform_null() {
    let alpha = 0.2;
    let m = 10;
    let trials = 4000;
    let mut rng = stream_rng(99, 4);
    let (mut fwer_hits, mut fdp_sum) = (0u32, 0.0f64);
    for _ in 0..trials {
        let ps: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
        let family = PValueFamily::unweighted(ps).unwrap();
        let b = run_mtp(&family, alpha, "b".parse().unwrap()).unwrap();
        if b.rejection_count > 0 {
            fwer_hits += 1;
        }
        let by = run_mtp(&family, alpha, "by".parse().unwrap()).unwrap();
        // Every rejection is false here, so FDP is 1 whenever it rejects.
        if by.rejection_count > 0 {
            fdp_sum += 1.0;
        }
    }
    let se = (alpha * (1.0 - alpha) / trials as f64).sqrt();
    let fwer = fwer_hits as f64 / trials as f64;
    let fdr = fdp_sum / trials as f64;
    assert!(fwer <= alpha + 4.0 * se, "Bonferroni FWER {fwer}");
    assert!(fdr <= alpha + 4.0 * se, "BY FDR {fdr}");
}
