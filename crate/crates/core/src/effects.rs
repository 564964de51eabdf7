//! Effect functionals standardized over the empirical confounder
//! distribution of each exposure group.
//!
//! With `ξ(a, m, L)` the outcome model and `η(a, L)` the mediator model, the
//! group-`a` effects are
//!
//! ```text
//! p_i(a) = mean[η(1,L) - η(0,L)] · mean[ξ(0,1,L) - ξ(0,0,L)]
//! p_d(a) = mean[ξ(1,0,L) - ξ(0,0,L)] · (1 - mean η(1,L)) + mean[ξ(1,1,L) - ξ(0,1,L)] · mean η(1,L)
//! p_t(a) = p_d(a) + p_i(a)
//! ```
//!
//! where every mean runs over the records with `A = a`. The indirect effect
//! is a product of two group means, not the mean of a product. Marginal
//! effects weight the groups by their observed shares.

use alloc::vec::Vec;

use crate::error::DataError;
use crate::link::LinkFamily;
use crate::sum::pairwise_sum_by;
use crate::types::{g_transform, Dataset, ExtendedIndex, Group, IndexKind, Pathway, Scope};

/// `ξ(a, m, L; β)`.
#[inline]
pub fn outcome_prob(beta: &[f64; 4], family: LinkFamily, a: f64, m: f64, l: f64) -> f64 {
    family.inv_link(beta[0] + beta[1] * a + beta[2] * m + beta[3] * l)
}

/// `η(a, L; γ)`.
#[inline]
pub fn mediator_prob(gamma: &[f64; 3], family: LinkFamily, a: f64, l: f64) -> f64 {
    family.inv_link(gamma[0] + gamma[1] * a + gamma[2] * l)
}

/// Group-`a` averages of the fitted contrasts and mediator probabilities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupMeans {
    /// mean of `ξ(1,0,L) - ξ(0,0,L)`
    pub exposure_at_m0: f64,
    /// mean of `ξ(0,1,L) - ξ(0,0,L)`
    pub mediator_at_a0: f64,
    /// mean of `ξ(1,1,L) - ξ(0,1,L)`
    pub exposure_at_m1: f64,
    /// mean of `η(1,L)`, i.e. `E[M_1 | A = a]`
    pub m1: f64,
    /// mean of `η(0,L)`, i.e. `E[M_0 | A = a]`
    pub m0: f64,
}

impl GroupMeans {
    pub fn compute(
        beta: &[f64; 4],
        gamma: &[f64; 3],
        family: LinkFamily,
        data: &Dataset,
        group: Group,
    ) -> Result<Self, DataError> {
        let members = group_members(data, group)?;
        let recs = data.records();
        let n = members.len() as f64;
        let mean =
            |f: &dyn Fn(f64) -> f64| pairwise_sum_by(&members, |j| f(recs[j].confounder)) / n;
        Ok(Self {
            exposure_at_m0: mean(&|l| {
                outcome_prob(beta, family, 1.0, 0.0, l) - outcome_prob(beta, family, 0.0, 0.0, l)
            }),
            mediator_at_a0: mean(&|l| {
                outcome_prob(beta, family, 0.0, 1.0, l) - outcome_prob(beta, family, 0.0, 0.0, l)
            }),
            exposure_at_m1: mean(&|l| {
                outcome_prob(beta, family, 1.0, 1.0, l) - outcome_prob(beta, family, 0.0, 1.0, l)
            }),
            m1: mean(&|l| mediator_prob(gamma, family, 1.0, l)),
            m0: mean(&|l| mediator_prob(gamma, family, 0.0, l)),
        })
    }

    pub fn indirect(&self) -> f64 {
        indirect_from_means(self.m1, self.m0, self.mediator_at_a0)
    }

    pub fn direct(&self) -> f64 {
        direct_from_means(self.exposure_at_m0, self.exposure_at_m1, self.m1)
    }
}

/// `(E[M_1] - E[M_0]) · E[I_{0,1} - I_{0,0}]`.
#[inline]
pub fn indirect_from_means(m1: f64, m0: f64, mediator_contrast: f64) -> f64 {
    (m1 - m0) * mediator_contrast
}

/// `E[I_{1,0} - I_{0,0}] (1 - E[M_1]) + E[I_{1,1} - I_{0,1}] E[M_1]`.
#[inline]
pub fn direct_from_means(exposure_at_m0: f64, exposure_at_m1: f64, m1: f64) -> f64 {
    exposure_at_m0 * (1.0 - m1) + exposure_at_m1 * m1
}

fn group_members(data: &Dataset, group: Group) -> Result<Vec<usize>, DataError> {
    let members: Vec<usize> = data
        .records()
        .iter()
        .enumerate()
        .filter(|(_, r)| r.group() == group)
        .map(|(j, _)| j)
        .collect();
    if members.is_empty() {
        return Err(DataError::EmptyGroup(group));
    }
    Ok(members)
}

pub fn indirect_effect(
    group: Group,
    beta: &[f64; 4],
    gamma: &[f64; 3],
    family: LinkFamily,
    data: &Dataset,
) -> Result<f64, DataError> {
    Ok(GroupMeans::compute(beta, gamma, family, data, group)?.indirect())
}

pub fn direct_effect(
    group: Group,
    beta: &[f64; 4],
    gamma: &[f64; 3],
    family: LinkFamily,
    data: &Dataset,
) -> Result<f64, DataError> {
    Ok(GroupMeans::compute(beta, gamma, family, data, group)?.direct())
}

pub fn total_effect(
    group: Group,
    beta: &[f64; 4],
    gamma: &[f64; 3],
    family: LinkFamily,
    data: &Dataset,
) -> Result<f64, DataError> {
    let means = GroupMeans::compute(beta, gamma, family, data, group)?;
    Ok(means.direct() + means.indirect())
}

/// `(1 - w1)·e0 + w1·e1`, written so that equal inputs come back unchanged.
#[inline]
fn weighted(per_group: [f64; 2], w1: f64) -> f64 {
    per_group[0] + w1 * (per_group[1] - per_group[0])
}

/// Observed-share weighted mean `(n0·e0 + n1·e1) / n`.
pub fn marginalize(per_group: [f64; 2], n0: usize, n1: usize) -> Result<f64, DataError> {
    if n0 == 0 {
        return Err(DataError::EmptyGroup(Group::Unexposed));
    }
    if n1 == 0 {
        return Err(DataError::EmptyGroup(Group::Exposed));
    }
    Ok(weighted(per_group, n1 as f64 / (n0 + n1) as f64))
}

/// Controlled direct effect with the mediator fixed at `m`: the mean of
/// `ξ(1,m,L) - ξ(0,m,L)` over one group or the pooled sample. Its index is
/// the adjusted NNT at `M = m`.
pub fn controlled_direct_effect(
    mediator: bool,
    scope: Scope,
    beta: &[f64; 4],
    family: LinkFamily,
    data: &Dataset,
) -> Result<f64, DataError> {
    let m = if mediator { 1.0 } else { 0.0 };
    let members = match scope {
        Scope::Group(g) => group_members(data, g)?,
        Scope::Marginal => (0..data.len()).collect(),
    };
    let recs = data.records();
    let total = pairwise_sum_by(&members, |j| {
        let l = recs[j].confounder;
        outcome_prob(beta, family, 1.0, m, l) - outcome_prob(beta, family, 0.0, m, l)
    });
    Ok(total / members.len() as f64)
}

/// Indirect, direct and total effects for both groups and the population,
/// with their nine indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectSet {
    /// p_i(0), p_i(1), p_i
    pub p_indirect: [f64; 3],
    /// p_d(0), p_d(1), p_d
    pub p_direct: [f64; 3],
    /// p_t(0), p_t(1), p_t; always direct + indirect.
    pub p_total: [f64; 3],
    pub indices: [ExtendedIndex; 9],
}

impl EffectSet {
    /// Builds the set from group effects and the exposed share `n1/n`.
    pub fn from_groups(indirect: [f64; 2], direct: [f64; 2], exposed_share: f64) -> Self {
        let pi = [indirect[0], indirect[1], weighted(indirect, exposed_share)];
        let pd = [direct[0], direct[1], weighted(direct, exposed_share)];
        Self::from_effects(pi, pd)
    }

    /// Builds the set from complete indirect and direct triples.
    pub fn from_effects(p_indirect: [f64; 3], p_direct: [f64; 3]) -> Self {
        let p_total = [0, 1, 2].map(|k| p_indirect[k] + p_direct[k]);
        let mut indices = [ExtendedIndex::Infinite; 9];
        for (k, p) in p_indirect
            .iter()
            .chain(&p_direct)
            .chain(&p_total)
            .enumerate()
        {
            indices[k] = g_transform(*p);
        }
        Self {
            p_indirect,
            p_direct,
            p_total,
            indices,
        }
    }

    pub fn effect(&self, pathway: Pathway, scope: Scope) -> f64 {
        let k = match scope {
            Scope::Group(g) => g.index(),
            Scope::Marginal => 2,
        };
        match pathway {
            Pathway::Indirect => self.p_indirect[k],
            Pathway::Direct => self.p_direct[k],
            Pathway::Total => self.p_total[k],
        }
    }

    pub fn effect_for(&self, kind: IndexKind) -> f64 {
        self.effect(kind.pathway(), kind.scope())
    }

    pub fn index(&self, kind: IndexKind) -> ExtendedIndex {
        self.indices[kind.position()]
    }
}

/// Plug-in effects for both groups from fitted coefficients.
pub fn estimate_effects(
    beta: &[f64; 4],
    gamma: &[f64; 3],
    family: LinkFamily,
    data: &Dataset,
) -> Result<EffectSet, DataError> {
    data.require_both_groups()?;
    let g0 = GroupMeans::compute(beta, gamma, family, data, Group::Unexposed)?;
    let g1 = GroupMeans::compute(beta, gamma, family, data, Group::Exposed)?;
    let pi = [g0.indirect(), g1.indirect()];
    let pd = [g0.direct(), g1.direct()];
    let (n0, n1) = (data.n0(), data.n1());
    Ok(EffectSet::from_effects(
        [pi[0], pi[1], marginalize(pi, n0, n1)?],
        [pd[0], pd[1], marginalize(pd, n0, n1)?],
    ))
}

/// The no-covariate special case: group direct effects, the two factors of
/// each group's indirect effect, and the exposed share are given directly.
pub fn closed_form_example(
    direct: [f64; 2],
    mediator_contrast: [f64; 2],
    outcome_contrast: [f64; 2],
    exposed_share: f64,
) -> EffectSet {
    let indirect = [0, 1].map(|a| mediator_contrast[a] * outcome_contrast[a]);
    EffectSet::from_groups(indirect, direct, exposed_share)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ObservationRecord;
    use alloc::vec;

    const BETA: [f64; 4] = [-1.0, 1.5, 1.5, -2.0];
    const GAMMA: [f64; 3] = [-1.0, 3.0, -2.0];

    fn hand_dataset() -> Dataset {
        let rows: [(u8, u8, u8, f64); 10] = [
            (1, 1, 1, 0.2),
            (0, 1, 0, 0.9),
            (1, 1, 1, -0.4),
            (0, 1, 1, 1.3),
            (1, 1, 0, 0.0),
            (0, 0, 0, 0.5),
            (1, 0, 1, -1.1),
            (0, 0, 0, 0.7),
            (0, 0, 1, 0.1),
            (1, 0, 0, -0.3),
        ];
        Dataset::new(
            rows.iter()
                .map(|&(i, a, m, l)| ObservationRecord::from_codes(i, a, m, l).unwrap())
                .collect(),
        )
        .unwrap()
    }

    fn expit(x: f64) -> f64 {
        1.0 / (1.0 + libm::exp(-x))
    }

    #[test]
    fn indirect_matches_hand_computation() {
        let data = hand_dataset();
        // Spreadsheet-style: list L per group, average the two contrasts, multiply.
        for (group, ls) in [
            (Group::Exposed, vec![0.2, 0.9, -0.4, 1.3, 0.0]),
            (Group::Unexposed, vec![0.5, -1.1, 0.7, 0.1, -0.3]),
        ] {
            let n = ls.len() as f64;
            let med: f64 = ls
                .iter()
                .map(|l| expit(-1.0 + 3.0 - 2.0 * l) - expit(-1.0 - 2.0 * l))
                .sum::<f64>()
                / n;
            let out: f64 = ls
                .iter()
                .map(|l| expit(-1.0 + 1.5 - 2.0 * l) - expit(-1.0 - 2.0 * l))
                .sum::<f64>()
                / n;
            let q: f64 = ls.iter().map(|l| expit(-1.0 + 3.0 - 2.0 * l)).sum::<f64>() / n;
            let c10: f64 = ls
                .iter()
                .map(|l| expit(-1.0 + 1.5 - 2.0 * l) - expit(-1.0 - 2.0 * l))
                .sum::<f64>()
                / n;
            let c11: f64 = ls
                .iter()
                .map(|l| expit(-1.0 + 3.0 - 2.0 * l) - expit(-1.0 + 1.5 - 2.0 * l))
                .sum::<f64>()
                / n;
            let pi = indirect_effect(group, &BETA, &GAMMA, LinkFamily::Logit, &data).unwrap();
            let pd = direct_effect(group, &BETA, &GAMMA, LinkFamily::Logit, &data).unwrap();
            assert!(
                (pi - med * out).abs() < 1e-14,
                "{group}: {pi} vs {}",
                med * out
            );
            assert!((pd - (c10 * (1.0 - q) + c11 * q)).abs() < 1e-14);
            let pt = total_effect(group, &BETA, &GAMMA, LinkFamily::Logit, &data).unwrap();
            assert_eq!(pt, pd + pi);
        }
    }

    #[test]
    fn product_of_means_not_mean_of_products() {
        let data = hand_dataset();
        let ls = [0.2, 0.9, -0.4, 1.3, 0.0];
        let mean_of_products: f64 = ls
            .iter()
            .map(|l| {
                (expit(2.0 - 2.0 * l) - expit(-1.0 - 2.0 * l))
                    * (expit(0.5 - 2.0 * l) - expit(-1.0 - 2.0 * l))
            })
            .sum::<f64>()
            / 5.0;
        let pi = indirect_effect(Group::Exposed, &BETA, &GAMMA, LinkFamily::Logit, &data).unwrap();
        assert!((pi - mean_of_products).abs() > 1e-6);
    }

    #[test]
    fn zero_paths_give_zero_effects() {
        let data = hand_dataset();
        let no_exposure_mediator = [-1.0, 0.0, -2.0];
        let no_mediator_outcome = [-1.0, 1.5, 0.0, -2.0];
        let no_direct = [-1.0, 0.0, 1.5, -2.0];
        for fam in [LinkFamily::Logit, LinkFamily::Probit] {
            for g in Group::BOTH {
                assert_eq!(
                    indirect_effect(g, &BETA, &no_exposure_mediator, fam, &data).unwrap(),
                    0.0
                );
                assert_eq!(
                    indirect_effect(g, &no_mediator_outcome, &GAMMA, fam, &data).unwrap(),
                    0.0
                );
                assert_eq!(
                    direct_effect(g, &no_direct, &GAMMA, fam, &data).unwrap(),
                    0.0
                );
                assert_eq!(
                    direct_effect(g, &[-1.0, 0.0, 0.0, -2.0], &GAMMA, fam, &data).unwrap(),
                    0.0
                );
                for m in [false, true] {
                    assert_eq!(
                        controlled_direct_effect(m, Scope::Group(g), &no_direct, fam, &data)
                            .unwrap(),
                        0.0
                    );
                }
            }
            let set = estimate_effects(&BETA, &no_exposure_mediator, fam, &data).unwrap();
            for k in [IndexKind::Inne, IndexKind::Iein, IndexKind::Innt] {
                assert!(set.index(k).is_infinite());
            }
        }
    }

    #[test]
    fn marginal_weighting() {
        assert_eq!(marginalize([0.4, 0.4], 3, 9).unwrap(), 0.4);
        assert!((marginalize([0.7, 0.5], 7, 3).unwrap() - 0.64).abs() < 1e-15);
        assert_eq!(
            marginalize([0.1, 0.2], 0, 3),
            Err(DataError::EmptyGroup(Group::Unexposed))
        );
    }

    #[test]
    fn worked_example_indices() {
        let set = closed_form_example([0.3, 0.2], [0.8, 0.5], [0.5, 0.6], 0.3);
        assert_eq!(set.p_total[1], 0.5);
        let want = [
            (IndexKind::Ein, 2.0),
            (IndexKind::Dein, 5.0),
            (IndexKind::Iein, 10.0 / 3.0),
            (IndexKind::Nne, 1.0 / 0.7),
            (IndexKind::Dnne, 10.0 / 3.0),
            (IndexKind::Inne, 2.5),
            (IndexKind::Nnt, 1.0 / 0.64),
            (IndexKind::Dnnt, 1.0 / 0.27),
            (IndexKind::Innt, 1.0 / 0.37),
        ];
        for (kind, v) in want {
            let got = set.index(kind).finite().unwrap();
            assert!((got - v).abs() < 1e-12, "{kind}: {got} vs {v}");
        }
    }

    #[test]
    fn worked_example_degenerate_inputs() {
        let set = closed_form_example([0.0, 0.0], [0.0, 0.0], [0.0, 0.0], 0.3);
        assert!(set.indices.iter().all(|i| i.is_infinite()));
        let set = closed_form_example([0.3, 0.2], [0.8, 0.5], [0.5, 0.6], 0.0);
        assert_eq!(set.index(IndexKind::Nnt), set.index(IndexKind::Nne));
        assert_eq!(set.index(IndexKind::Dnnt), set.index(IndexKind::Dnne));
        assert_eq!(set.index(IndexKind::Innt), set.index(IndexKind::Inne));
    }

    #[test]
    fn pooled_cde_at_m0_matches_direct_term() {
        let data = hand_dataset();
        let all: Vec<f64> = data.records().iter().map(|r| r.confounder).collect();
        let m0 = all
            .iter()
            .map(|l| {
                outcome_prob(&BETA, LinkFamily::Probit, 1.0, 0.0, *l)
                    - outcome_prob(&BETA, LinkFamily::Probit, 0.0, 0.0, *l)
            })
            .sum::<f64>()
            / all.len() as f64;
        let cde =
            controlled_direct_effect(false, Scope::Marginal, &BETA, LinkFamily::Probit, &data)
                .unwrap();
        assert!((cde - m0).abs() < 1e-15);
    }

    #[test]
    fn effects_stay_in_unit_interval() {
        let data = hand_dataset();
        for fam in [LinkFamily::Logit, LinkFamily::Probit] {
            for scale in [-5.0, -1.0, 0.5, 3.0, 10.0] {
                let beta = BETA.map(|b| b * scale);
                let gamma = GAMMA.map(|g| g * scale);
                let set = estimate_effects(&beta, &gamma, fam, &data).unwrap();
                for p in set
                    .p_indirect
                    .iter()
                    .chain(&set.p_direct)
                    .chain(&set.p_total)
                {
                    assert!((-1.0..=1.0).contains(p), "{p}");
                }
            }
        }
    }
}
