use mednnt_core::effects::controlled_direct_effect;
use mednnt_core::link::{expit, normal_pdf};
use mednnt_core::simulate::{
    combine_oracle, coverage_study, factorization_check, generate, mc_oracle, oracle_batch,
    oracle_batches, run_replication, summarize, ReplicationOutcome, SimulationConfig,
};
use mednnt_core::{ExtendedIndex, LinkFamily, Scope};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[test]
fn exposure_share_matches_quadrature() {
    let cfg = SimulationConfig {
        n: 1_000_000,
        seed: 99,
        ..SimulationConfig::default()
    };
    let data = generate(&cfg, 0);
    let share = data.n1() as f64 / data.len() as f64;
    // Trapezoid rule for E[expit(δ0 + δL·L)] over L ~ N(μ, σ²).
    let steps = 4000;
    let (lo, hi) = (-10.0, 10.0);
    let h = (hi - lo) / steps as f64;
    let mut expected = 0.0;
    for k in 0..=steps {
        let z = lo + h * k as f64;
        let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
        expected +=
            w * h * normal_pdf(z) * expit(cfg.delta[0] + cfg.delta[1] * (cfg.mu + cfg.sigma * z));
    }
    let se = (expected * (1.0 - expected) / data.len() as f64).sqrt();
    assert!(
        (share - expected).abs() < 3.0 * se,
        "{share} vs {expected} (se {se})"
    );
}

#[test]
fn oracle_runs_with_different_seeds_agree() {
    for family in [LinkFamily::Logit, LinkFamily::Probit] {
        let a = mc_oracle(
            &SimulationConfig {
                family,
                seed: 1,
                ..SimulationConfig::default()
            },
            2_000_000,
        )
        .unwrap();
        let b = mc_oracle(
            &SimulationConfig {
                family,
                seed: 2,
                ..SimulationConfig::default()
            },
            2_000_000,
        )
        .unwrap();
        let pa = [a.effects.p_indirect, a.effects.p_direct].concat();
        let pb = [b.effects.p_indirect, b.effects.p_direct].concat();
        for k in 0..6 {
            let se = (a.standard_errors[k].powi(2) + b.standard_errors[k].powi(2)).sqrt();
            assert!(
                (pa[k] - pb[k]).abs() < 3.0 * se,
                "{family} effect {k}: {} vs {} (se {se})",
                pa[k],
                pb[k]
            );
        }
    }
}

#[test]
fn oracle_is_independent_of_batch_scheduling() {
    let cfg = SimulationConfig::default();
    let draws = 300_000;
    let forward: Vec<_> = (0..oracle_batches(draws))
        .map(|b| oracle_batch(&cfg, draws, b))
        .collect();
    let mut backward: Vec<_> = (0..oracle_batches(draws))
        .rev()
        .map(|b| (b, oracle_batch(&cfg, draws, b)))
        .collect();
    backward.sort_by_key(|(b, _)| *b);
    let backward: Vec<_> = backward.into_iter().map(|(_, o)| o).collect();
    assert_eq!(
        combine_oracle(&forward, draws),
        combine_oracle(&backward, draws)
    );
    assert_eq!(
        combine_oracle(&forward, draws),
        mc_oracle(&cfg, draws).unwrap()
    );
}

#[test]
fn no_covariate_nested_effects_factorize() {
    let check = factorization_check([0.3, 0.7], [[0.2, 0.5], [0.45, 0.8]], 2_000_000, 17);
    assert!(
        (check.nested_indirect - check.factorized_indirect).abs() < 3.0 * check.nested_indirect_se,
        "{check:?}"
    );
    assert!(
        (check.nested_direct - check.factorized_direct).abs() < 3.0 * check.nested_direct_se,
        "{check:?}"
    );
    // Population values: 0.4·0.3 and 0.25·0.3 + 0.3·0.7.
    assert!((check.factorized_indirect - 0.12).abs() < 0.01);
    assert!((check.factorized_direct - 0.285).abs() < 0.01);
}

#[test]
fn controlled_direct_effect_matches_potential_outcome_draws() {
    let cfg = SimulationConfig {
        n: 400_000,
        seed: 8,
        ..SimulationConfig::default()
    };
    let data = generate(&cfg, 0);
    let b = cfg.beta;
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    for m in [false, true] {
        let mf = if m { 1.0 } else { 0.0 };
        let cde = controlled_direct_effect(m, Scope::Marginal, &b, cfg.family, &data).unwrap();
        let (mut s, mut s2) = (0.0, 0.0);
        for r in data.records() {
            let u: f64 = rng.random();
            let p = |a: f64| expit(b[0] + b[1] * a + b[2] * mf + b[3] * r.confounder);
            let d = f64::from(u < p(1.0)) - f64::from(u < p(0.0));
            s += d;
            s2 += d * d;
        }
        let n = data.len() as f64;
        let mean = s / n;
        let se = ((s2 / n - mean * mean) / n).sqrt();
        assert!(
            (cde - mean).abs() < 3.0 * se,
            "m={m}: {cde} vs {mean} (se {se})"
        );
    }
}

#[test]
fn coverage_study_is_reproducible_and_order_free() {
    let cfg = SimulationConfig {
        n: 400,
        reps: 24,
        seed: 12,
        ..SimulationConfig::default()
    };
    let truth = mc_oracle(&cfg, 500_000).unwrap().effects.indices;
    let a = coverage_study(&cfg, &truth).unwrap();
    let b = coverage_study(&cfg, &truth).unwrap();
    assert_eq!(a, b);

    let mut outcomes: Vec<ReplicationOutcome> = (0..cfg.reps as u64)
        .rev()
        .map(|rep| run_replication(&cfg, &truth, rep))
        .collect();
    outcomes.sort_by_key(|o| o.rep);
    assert_eq!(summarize(&outcomes, &truth), a);
    assert!(a.coverage.iter().all(|c| (0.0..=1.0).contains(c)));
    assert_eq!(a.retained + a.excluded(), a.reps);
}

#[test]
fn estimation_error_shrinks_with_sample_size() {
    let truth = mc_oracle(&SimulationConfig::default(), 1_000_000)
        .unwrap()
        .effects
        .indices;
    let run = |n| {
        let cfg = SimulationConfig {
            n,
            reps: 60,
            seed: 21,
            ..SimulationConfig::default()
        };
        coverage_study(&cfg, &truth).unwrap().median_abs_error
    };
    let (small, large) = (run(200), run(1600));
    for k in 0..9 {
        assert!(
            large[k] < small[k],
            "index {k}: {} !< {}",
            large[k],
            small[k]
        );
    }
}

#[test]
fn null_structure_gives_infinite_truth() {
    let cfg = SimulationConfig {
        beta: [-1.0, 0.0, 1.5, -2.0],
        gamma: [-1.0, 0.0, -2.0],
        ..SimulationConfig::default()
    };
    let o = mc_oracle(&cfg, 100_000).unwrap();
    assert!(o
        .effects
        .indices
        .iter()
        .all(|i| *i == ExtendedIndex::Infinite));
}
