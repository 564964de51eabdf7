use mednnt_core::inference::{confidence_intervals, sandwich};
use mednnt_core::linalg::symmetric_eigenvalues;
use mednnt_core::simulate::{generate, SimulationConfig};
use mednnt_core::stack::{active_slots, mean_jacobian, numerical_jacobian, solve};
use mednnt_core::{Dataset, IndexKind, LinkFamily, Pathway, StackLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn config(seed: u64, family: LinkFamily, n: usize) -> SimulationConfig {
    SimulationConfig {
        seed,
        family,
        n,
        ..SimulationConfig::default()
    }
}

#[test]
fn analytic_bread_matches_finite_differences() {
    let mut checked = 0;
    for seed in 0..20u64 {
        let family = if seed % 2 == 0 {
            LinkFamily::Logit
        } else {
            LinkFamily::Probit
        };
        let data = generate(&config(100 + seed, family, 400), 0).canonical();
        let Ok(sol) = solve(&data, family) else {
            continue;
        };
        let theta = sol.theta.pack();
        let slots = active_slots(&theta);
        let analytic = mean_jacobian(&data, &theta, family).select(&slots);
        let numeric = numerical_jacobian(&data, &theta, family, &slots);
        for r in 0..slots.len() {
            for c in 0..slots.len() {
                let (x, y) = (analytic[(r, c)], numeric[(r, c)]);
                if x.abs().max(y.abs()) > 1e-6 {
                    let rel = (x - y).abs() / x.abs().max(y.abs());
                    assert!(
                        rel < 1e-4,
                        "seed {seed} entry ({}, {}): {x} vs {y}",
                        slots[r],
                        slots[c]
                    );
                }
            }
        }
        checked += 1;
    }
    assert_eq!(checked, 20);
}

#[test]
fn covariance_is_positive_semidefinite() {
    for seed in 0..20u64 {
        for family in [LinkFamily::Logit, LinkFamily::Probit] {
            let data = generate(&config(seed, family, 800), 0);
            let Ok(sol) = solve(&data, family) else {
                continue;
            };
            let result = sandwich(&data, &sol.theta, family);
            if result.singular {
                continue;
            }
            assert!(result.asymmetry < 1e-8);
            let cov = result.covariance.select(&result.slots);
            let ev = symmetric_eigenvalues(&cov);
            let (lo, hi) = (ev[0], ev[ev.len() - 1]);
            assert!(
                lo > -1e-8 * hi,
                "seed {seed} {family}: eigenvalues {lo} .. {hi}"
            );
            assert!(result
                .standard_errors
                .iter()
                .all(|s| s.is_nan() || *s >= 0.0));
        }
    }
}

#[test]
fn index_errors_follow_the_delta_method() {
    for seed in 0..10u64 {
        let data = generate(&config(seed, LinkFamily::Logit, 1600), 0);
        let sol = solve(&data, LinkFamily::Logit).unwrap();
        let result = sandwich(&data, &sol.theta, LinkFamily::Logit);
        assert!(!result.singular);
        for kind in IndexKind::ALL {
            let scope = kind.scope();
            let weights: Vec<(usize, f64)> = match kind.pathway() {
                Pathway::Total => vec![
                    (StackLayout::effect(Pathway::Indirect, scope).unwrap(), 1.0),
                    (StackLayout::effect(Pathway::Direct, scope).unwrap(), 1.0),
                ],
                p => vec![(StackLayout::effect(p, scope).unwrap(), 1.0)],
            };
            let p = sol.theta.effect_for(kind);
            let delta = result.linear_combination_se(&weights) / (p * p);
            let direct = result.standard_errors[kind.slot()];
            assert!(
                (direct - delta).abs() < 0.1 * delta,
                "seed {seed} {kind}: {direct} vs {delta}"
            );
        }
    }
}

#[test]
fn index_errors_agree_with_bootstrap() {
    let family = LinkFamily::Logit;
    let data = generate(&config(77, family, 400), 0);
    let sol = solve(&data, family).unwrap();
    let result = sandwich(&data, &sol.theta, family);

    let mut rng = ChaCha20Rng::seed_from_u64(4242);
    let records = data.records();
    let mut draws: Vec<[f64; 9]> = Vec::new();
    for _ in 0..2000 {
        let resample: Vec<_> = (0..records.len())
            .map(|_| records[rng.random_range(0..records.len())])
            .collect();
        let Ok(boot) = solve(&Dataset::new(resample).unwrap(), family) else {
            continue;
        };
        draws.push(IndexKind::ALL.map(|k| boot.theta.index(k).to_f64()));
    }
    assert!(draws.len() > 1900);
    for kind in IndexKind::ALL {
        let k = kind.position();
        // Robust spread: the bootstrap distribution of a reciprocal is
        // heavy-tailed, so use the interquartile range of a normal.
        let mut v: Vec<f64> = draws.iter().map(|d| d[k]).collect();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
        let boot_se = (q(0.75) - q(0.25)) / 1.348_979_5;
        let se = result.standard_errors[kind.slot()];
        assert!(
            (se - boot_se).abs() < 0.15 * boot_se,
            "{kind}: sandwich {se} vs bootstrap {boot_se}"
        );
    }
}

#[test]
fn intervals_have_nominal_width() {
    let data = generate(&config(3, LinkFamily::Probit, 1600), 0);
    let sol = solve(&data, LinkFamily::Probit).unwrap();
    let result = sandwich(&data, &sol.theta, LinkFamily::Probit);
    let ci = confidence_intervals(&result, &sol.theta, 0.9).unwrap();
    for (c, se) in ci
        .iter()
        .zip(&result.standard_errors)
        .take(StackLayout::INDICES.start)
    {
        let half = 0.5 * (c.upper - c.lower);
        assert!((half - 1.644_853_626_951_472 * se).abs() < 1e-9 * (1.0 + half));
    }
}
