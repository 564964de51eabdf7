//! The stacked estimating function and its root.
//!
//! Each record contributes a 32-vector `Q(record; θ)` laid out as in
//! [`StackLayout`]:
//!
//! * GLM scores for β (outcome) and γ (mediator);
//! * six controlled-contrast residuals and four mediator-mean residuals,
//!   each gated by `(1 - A)` or `A`;
//! * three indirect-effect rows: the gated residual of
//!   `p_i(a) = (E[M1|a] - E[M0|a]) · E[I01 - I00|a]` for each group and
//!   `p_i(0)(1 - A) + p_i(1)A - p_i` for the marginal;
//! * three analogous direct-effect rows;
//! * nine index rows `g(p) - index`, where the total-effect rows use
//!   `g(p_i + p_d)` so the total effects never appear as free parameters.
//!
//! The system is block-triangular, so [`solve`] finds the root by fitting
//! the two GLMs and plugging in. [`newton_root`] solves the same summed
//! system by damped Newton and serves as a cross-check.

use alloc::vec::Vec;

use crate::effects::{direct_from_means, indirect_from_means, marginalize, GroupMeans};
use crate::error::SolveError;
use crate::glm::{fit_default, score_weight, score_weight_deriv, GlmFit, GlmSpec};
use crate::linalg::{Lu, Matrix};
use crate::link::LinkFamily;
use crate::sum::pairwise_accumulate;
use crate::types::{
    g_transform, Contrast, Dataset, ExtendedIndex, Group, IndexKind, MediatorLevel,
    ObservationRecord, ParameterVector, Pathway, Scope, StackLayout,
};

const DIM: usize = StackLayout::DIM;

/// Flat parameter vector in stack layout.
pub type Flat = [f64; DIM];

#[inline]
fn beta_of(theta: &Flat) -> [f64; 4] {
    [theta[0], theta[1], theta[2], theta[3]]
}

#[inline]
fn gamma_of(theta: &Flat) -> [f64; 3] {
    [theta[4], theta[5], theta[6]]
}

/// The slots of effect probabilities feeding an index.
fn effect_slots(kind: IndexKind) -> ([usize; 2], usize) {
    let scope = kind.scope();
    match kind.pathway() {
        Pathway::Total => (
            [
                StackLayout::effect(Pathway::Indirect, scope).unwrap(),
                StackLayout::effect(Pathway::Direct, scope).unwrap(),
            ],
            2,
        ),
        p => ([StackLayout::effect(p, scope).unwrap(), 0], 1),
    }
}

/// The effect probability an index row transforms, read from a flat θ.
#[inline]
fn index_argument(theta: &Flat, kind: IndexKind) -> f64 {
    let (slots, k) = effect_slots(kind);
    slots[..k].iter().map(|&s| theta[s]).sum()
}

/// `g(p) - index` in extended arithmetic; matching infinities give zero.
#[inline]
fn index_residual(p: f64, index: f64) -> f64 {
    match (g_transform(p), index == f64::INFINITY) {
        (ExtendedIndex::Infinite, true) => 0.0,
        (ExtendedIndex::Infinite, false) => f64::INFINITY,
        (ExtendedIndex::Finite(_), true) => f64::NEG_INFINITY,
        (ExtendedIndex::Finite(v), false) => v - index,
    }
}

/// Model probabilities at one record's confounder value.
struct Fitted {
    xi00: f64,
    xi10: f64,
    xi01: f64,
    xi11: f64,
    eta0: f64,
    eta1: f64,
}

impl Fitted {
    fn at(theta: &Flat, family: LinkFamily, l: f64) -> Self {
        let b = beta_of(theta);
        let g = gamma_of(theta);
        let xi = |a: f64, m: f64| family.inv_link(b[0] + b[1] * a + b[2] * m + b[3] * l);
        let eta = |a: f64| family.inv_link(g[0] + g[1] * a + g[2] * l);
        Self {
            xi00: xi(0.0, 0.0),
            xi10: xi(1.0, 0.0),
            xi01: xi(0.0, 1.0),
            xi11: xi(1.0, 1.0),
            eta0: eta(0.0),
            eta1: eta(1.0),
        }
    }

    fn contrast(&self, kind: Contrast) -> f64 {
        match kind {
            Contrast::ExposureAtM0 => self.xi10 - self.xi00,
            Contrast::MediatorAtA0 => self.xi01 - self.xi00,
            Contrast::ExposureAtM1 => self.xi11 - self.xi01,
        }
    }

    fn mediator(&self, level: MediatorLevel) -> f64 {
        match level {
            MediatorLevel::Exposed => self.eta1,
            MediatorLevel::Unexposed => self.eta0,
        }
    }
}

const CONTRASTS: [Contrast; 3] = [
    Contrast::ExposureAtM0,
    Contrast::MediatorAtA0,
    Contrast::ExposureAtM1,
];
const LEVELS: [MediatorLevel; 2] = [MediatorLevel::Exposed, MediatorLevel::Unexposed];

/// Per-record estimating function on a flat parameter vector.
pub fn q_flat(record: &ObservationRecord, theta: &Flat, family: LinkFamily) -> Flat {
    let mut q = [0.0; DIM];
    let b = beta_of(theta);
    let g = gamma_of(theta);
    let (a, m, i, l) = (record.a(), record.m(), record.i(), record.confounder);

    let s = score_weight(family, i, b[0] + b[1] * a + b[2] * m + b[3] * l);
    for (k, x) in [1.0, a, m, l].into_iter().enumerate() {
        q[StackLayout::BETA.start + k] = s * x;
    }
    let s = score_weight(family, m, g[0] + g[1] * a + g[2] * l);
    for (k, x) in [1.0, a, l].into_iter().enumerate() {
        q[StackLayout::GAMMA.start + k] = s * x;
    }

    let fitted = Fitted::at(theta, family, l);
    for group in Group::BOTH {
        let gate = group.gate(record);
        for kind in CONTRASTS {
            let slot = StackLayout::contrast(kind, group);
            q[slot] = (fitted.contrast(kind) - theta[slot]) * gate;
        }
        for level in LEVELS {
            let slot = StackLayout::mediator_mean(level, group);
            q[slot] = (fitted.mediator(level) - theta[slot]) * gate;
        }
        let c = |kind| theta[StackLayout::contrast(kind, group)];
        let mm = |level| theta[StackLayout::mediator_mean(level, group)];
        let scope = Scope::Group(group);

        let slot = StackLayout::effect(Pathway::Indirect, scope).unwrap();
        let implied = indirect_from_means(
            mm(MediatorLevel::Exposed),
            mm(MediatorLevel::Unexposed),
            c(Contrast::MediatorAtA0),
        );
        q[slot] = (implied - theta[slot]) * gate;

        let slot = StackLayout::effect(Pathway::Direct, scope).unwrap();
        let implied = direct_from_means(
            c(Contrast::ExposureAtM0),
            c(Contrast::ExposureAtM1),
            mm(MediatorLevel::Exposed),
        );
        q[slot] = (implied - theta[slot]) * gate;
    }
    for pathway in [Pathway::Indirect, Pathway::Direct] {
        let slot = |scope| StackLayout::effect(pathway, scope).unwrap();
        q[slot(Scope::Marginal)] = theta[slot(Scope::Group(Group::Unexposed))] * (1.0 - a)
            + theta[slot(Scope::Group(Group::Exposed))] * a
            - theta[slot(Scope::Marginal)];
    }

    for kind in IndexKind::ALL {
        q[kind.slot()] = index_residual(index_argument(theta, kind), theta[kind.slot()]);
    }
    q
}

/// Per-record estimating function.
pub fn q_function(record: &ObservationRecord, theta: &ParameterVector, family: LinkFamily) -> Flat {
    q_flat(record, &theta.pack(), family)
}

/// Adds the per-record Jacobian `∂Q/∂θ` (row-major, 32×32) into `acc`.
/// Rows of index equations with an infinite index or a non-positive
/// argument are left at zero.
pub fn add_q_jacobian(
    record: &ObservationRecord,
    theta: &Flat,
    family: LinkFamily,
    acc: &mut [f64],
) {
    debug_assert_eq!(acc.len(), DIM * DIM);
    let mut put = |row: usize, col: usize, v: f64| acc[row * DIM + col] += v;
    let b = beta_of(theta);
    let g = gamma_of(theta);
    let (a, m, i, l) = (record.a(), record.m(), record.i(), record.confounder);

    // Score blocks.
    let xb = [1.0, a, m, l];
    let ds = score_weight_deriv(family, i, b[0] + b[1] * a + b[2] * m + b[3] * l);
    for r in 0..4 {
        for c in 0..4 {
            put(
                StackLayout::BETA.start + r,
                StackLayout::BETA.start + c,
                ds * xb[r] * xb[c],
            );
        }
    }
    let xg = [1.0, a, l];
    let ds = score_weight_deriv(family, m, g[0] + g[1] * a + g[2] * l);
    for r in 0..3 {
        for c in 0..3 {
            put(
                StackLayout::GAMMA.start + r,
                StackLayout::GAMMA.start + c,
                ds * xg[r] * xg[c],
            );
        }
    }

    // ∂ξ(a', m', L)/∂β and ∂η(a', L)/∂γ.
    let dxi = |ap: f64, mp: f64| {
        let d = family.inv_link_deriv(b[0] + b[1] * ap + b[2] * mp + b[3] * l);
        [d, d * ap, d * mp, d * l]
    };
    let deta = |ap: f64| {
        let d = family.inv_link_deriv(g[0] + g[1] * ap + g[2] * l);
        [d, d * ap, d * l]
    };
    let d00 = dxi(0.0, 0.0);
    let d10 = dxi(1.0, 0.0);
    let d01 = dxi(0.0, 1.0);
    let d11 = dxi(1.0, 1.0);
    let contrast_grad = |kind: Contrast| -> [f64; 4] {
        let (hi, lo) = match kind {
            Contrast::ExposureAtM0 => (d10, d00),
            Contrast::MediatorAtA0 => (d01, d00),
            Contrast::ExposureAtM1 => (d11, d01),
        };
        [hi[0] - lo[0], hi[1] - lo[1], hi[2] - lo[2], hi[3] - lo[3]]
    };
    let e1 = deta(1.0);
    let e0 = deta(0.0);

    for group in Group::BOTH {
        let gate = group.gate(record);
        if gate == 0.0 {
            continue;
        }
        for kind in CONTRASTS {
            let row = StackLayout::contrast(kind, group);
            for (k, v) in contrast_grad(kind).into_iter().enumerate() {
                put(row, StackLayout::BETA.start + k, v * gate);
            }
            put(row, row, -gate);
        }
        for (level, grad) in [(MediatorLevel::Exposed, e1), (MediatorLevel::Unexposed, e0)] {
            let row = StackLayout::mediator_mean(level, group);
            for (k, v) in grad.into_iter().enumerate() {
                put(row, StackLayout::GAMMA.start + k, v * gate);
            }
            put(row, row, -gate);
        }

        let c10 = StackLayout::contrast(Contrast::ExposureAtM0, group);
        let c01 = StackLayout::contrast(Contrast::MediatorAtA0, group);
        let c11 = StackLayout::contrast(Contrast::ExposureAtM1, group);
        let m1 = StackLayout::mediator_mean(MediatorLevel::Exposed, group);
        let m0 = StackLayout::mediator_mean(MediatorLevel::Unexposed, group);
        let scope = Scope::Group(group);

        let row = StackLayout::effect(Pathway::Indirect, scope).unwrap();
        put(row, m1, theta[c01] * gate);
        put(row, m0, -theta[c01] * gate);
        put(row, c01, (theta[m1] - theta[m0]) * gate);
        put(row, row, -gate);

        let row = StackLayout::effect(Pathway::Direct, scope).unwrap();
        put(row, c10, (1.0 - theta[m1]) * gate);
        put(row, c11, theta[m1] * gate);
        put(row, m1, (theta[c11] - theta[c10]) * gate);
        put(row, row, -gate);
    }
    for pathway in [Pathway::Indirect, Pathway::Direct] {
        let slot = |scope| StackLayout::effect(pathway, scope).unwrap();
        let row = slot(Scope::Marginal);
        put(row, slot(Scope::Group(Group::Unexposed)), 1.0 - a);
        put(row, slot(Scope::Group(Group::Exposed)), a);
        put(row, row, -1.0);
    }

    for kind in IndexKind::ALL {
        let row = kind.slot();
        let p = index_argument(theta, kind);
        if !(p > 0.0) || theta[row] == f64::INFINITY {
            continue;
        }
        let (slots, k) = effect_slots(kind);
        for &s in &slots[..k] {
            put(row, s, -1.0 / (p * p));
        }
        put(row, row, -1.0);
    }
}

/// Coordinates whose equations take part in the system: everything except
/// index rows whose index is infinite.
pub fn active_slots(theta: &Flat) -> Vec<usize> {
    StackLayout::BASE
        .chain(
            IndexKind::ALL
                .iter()
                .map(|k| k.slot())
                .filter(|&s| theta[s].is_finite()),
        )
        .collect()
}

/// `Σ_j Q(record_j; θ)` over the dataset in its given order.
pub fn stacked_sum(data: &Dataset, theta: &Flat, family: LinkFamily) -> Flat {
    let recs = data.records();
    let acc = pairwise_accumulate(recs.len(), DIM, |j, acc| {
        for (a, q) in acc.iter_mut().zip(q_flat(&recs[j], theta, family)) {
            *a += q;
        }
    });
    let mut out = [0.0; DIM];
    out.copy_from_slice(&acc);
    out
}

/// Summed stacked residual at `theta`, evaluated in canonical record order.
pub fn stacked_residual(data: &Dataset, theta: &ParameterVector, family: LinkFamily) -> Flat {
    stacked_sum(&data.canonical(), &theta.pack(), family)
}

/// Mean analytic Jacobian `n⁻¹ Σ_j ∂Q_j/∂θ` in the dataset's order.
pub fn mean_jacobian(data: &Dataset, theta: &Flat, family: LinkFamily) -> Matrix {
    let recs = data.records();
    let mut acc = pairwise_accumulate(recs.len(), DIM * DIM, |j, acc| {
        add_q_jacobian(&recs[j], theta, family, acc)
    });
    let n = recs.len() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    Matrix::from_row_major(DIM, DIM, acc)
}

/// Finite-difference step for coordinate value `x`.
#[inline]
pub fn fd_step(x: f64) -> f64 {
    (1e-6 * x.abs()).max(1e-6)
}

/// Mean Jacobian of the summed stack by central differences, restricted to
/// `slots` (rows and columns in that order).
pub fn numerical_jacobian(
    data: &Dataset,
    theta: &Flat,
    family: LinkFamily,
    slots: &[usize],
) -> Matrix {
    let n = data.len() as f64;
    let k = slots.len();
    let mut jac = Matrix::zeros(k, k);
    for (c, &col) in slots.iter().enumerate() {
        let h = fd_step(theta[col]);
        let mut up = *theta;
        let mut dn = *theta;
        up[col] += h;
        dn[col] -= h;
        let fu = stacked_sum(data, &up, family);
        let fd = stacked_sum(data, &dn, family);
        for (r, &row) in slots.iter().enumerate() {
            jac[(r, c)] = (fu[row] - fd[row]) / (2.0 * h * n);
        }
    }
    jac
}

/// Result of the plug-in solve.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub theta: ParameterVector,
    pub family: LinkFamily,
    pub n: usize,
    pub n0: usize,
    pub n1: usize,
    pub outcome_fit: GlmFit,
    pub mediator_fit: GlmFit,
}

impl Solution {
    /// Indices whose effect is non-positive, so the index is infinite.
    pub fn degenerate(&self) -> [bool; 9] {
        self.theta.indices.map(|i| i.is_infinite())
    }

    pub fn any_degenerate(&self) -> bool {
        self.degenerate().iter().any(|d| *d)
    }

    pub fn active_slots(&self) -> Vec<usize> {
        active_slots(&self.theta.pack())
    }
}

/// Plug-in root of the stacked system: fit both GLMs, set the contrast and
/// mediator-mean parameters to their group means, derive the effects, and
/// map them through `g`.
pub fn solve(data: &Dataset, family: LinkFamily) -> Result<Solution, SolveError> {
    data.require_both_groups()?;
    let data = data.canonical();
    let outcome_fit =
        fit_default(&GlmSpec::outcome(family), &data).map_err(SolveError::OutcomeFit)?;
    let mediator_fit =
        fit_default(&GlmSpec::mediator(family), &data).map_err(SolveError::MediatorFit)?;

    let mut theta = ParameterVector::default();
    theta.beta.copy_from_slice(&outcome_fit.coefficients);
    theta.gamma.copy_from_slice(&mediator_fit.coefficients);

    let mut indirect = [0.0; 2];
    let mut direct = [0.0; 2];
    for group in Group::BOTH {
        let means = GroupMeans::compute(&theta.beta, &theta.gamma, family, &data, group)?;
        let k = group.index();
        theta.contrasts[2 * Contrast::ExposureAtM0 as usize + k] = means.exposure_at_m0;
        theta.contrasts[2 * Contrast::MediatorAtA0 as usize + k] = means.mediator_at_a0;
        theta.contrasts[2 * Contrast::ExposureAtM1 as usize + k] = means.exposure_at_m1;
        theta.mediator_means[2 * MediatorLevel::Exposed as usize + k] = means.m1;
        theta.mediator_means[2 * MediatorLevel::Unexposed as usize + k] = means.m0;
        indirect[k] = means.indirect();
        direct[k] = means.direct();
    }
    let (n0, n1) = (data.n0(), data.n1());
    theta.p_indirect = [indirect[0], indirect[1], marginalize(indirect, n0, n1)?];
    theta.p_direct = [direct[0], direct[1], marginalize(direct, n0, n1)?];
    for kind in IndexKind::ALL {
        theta.indices[kind.position()] = g_transform(theta.effect_for(kind));
    }

    Ok(Solution {
        theta,
        family,
        n: data.len(),
        n0,
        n1,
        outcome_fit,
        mediator_fit,
    })
}

/// Damped Newton on the summed stack over the active coordinates of
/// `start`, with a finite-difference Jacobian. Infinite indices stay fixed.
pub fn newton_root(
    data: &Dataset,
    family: LinkFamily,
    start: &ParameterVector,
    max_iter: usize,
) -> Result<ParameterVector, SolveError> {
    let data = data.canonical();
    let mut theta = start.pack();
    let slots = active_slots(&theta);
    let n = data.len() as f64;
    let norm = |f: &Flat| slots.iter().fold(0.0_f64, |m, &s| m.max((f[s] / n).abs()));

    let mut f = stacked_sum(&data, &theta, family);
    for _ in 0..max_iter {
        let current = norm(&f);
        if current < 1e-14 {
            break;
        }
        let jac = numerical_jacobian(&data, &theta, family, &slots);
        let lu = Lu::factor(&jac).ok_or(SolveError::Newton("singular Jacobian"))?;
        let rhs: Vec<f64> = slots.iter().map(|&s| -f[s] / n).collect();
        let delta = lu.solve(&rhs);

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let mut trial = theta;
            for (&s, d) in slots.iter().zip(&delta) {
                trial[s] += t * d;
            }
            let ft = stacked_sum(&data, &trial, family);
            if norm(&ft) < current {
                accepted = Some((trial, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((trial, ft)) = accepted else {
            break;
        };
        let step = slots
            .iter()
            .zip(&delta)
            .fold(0.0_f64, |m, (_, d)| m.max((t * d).abs()));
        theta = trial;
        f = ft;
        if step < 1e-15 {
            break;
        }
    }
    if !slots.iter().all(|&s| f[s].is_finite()) {
        return Err(SolveError::Newton("non-finite residual"));
    }
    ParameterVector::unpack(&theta).map_err(|_| SolveError::Newton("layout"))
}

/// Largest absolute summed residual over the active coordinates.
pub fn residual_norm(data: &Dataset, solution: &Solution) -> f64 {
    let theta = solution.theta.pack();
    let r = stacked_sum(&data.canonical(), &theta, solution.family);
    active_slots(&theta)
        .into_iter()
        .fold(0.0, |m, s| m.max(r[s].abs()))
}

/// Mean of per-record outer products `n⁻¹ Σ_j Q_j Q_jᵀ` on `slots`.
pub fn mean_outer_product(
    data: &Dataset,
    theta: &Flat,
    family: LinkFamily,
    slots: &[usize],
) -> Matrix {
    let recs = data.records();
    let k = slots.len();
    let mut acc = pairwise_accumulate(recs.len(), k * k, |j, acc| {
        let q = q_flat(&recs[j], theta, family);
        for (r, &sr) in slots.iter().enumerate() {
            let qr = q[sr];
            if qr == 0.0 {
                continue;
            }
            for (c, &sc) in slots.iter().enumerate() {
                acc[r * k + c] += qr * q[sc];
            }
        }
    });
    let n = recs.len() as f64;
    acc.iter_mut().for_each(|v| *v /= n);
    Matrix::from_row_major(k, k, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{generate, SimulationConfig};

    fn sample(n: usize, family: LinkFamily, seed: u64) -> Dataset {
        let cfg = SimulationConfig {
            family,
            n,
            seed,
            ..SimulationConfig::default()
        };
        generate(&cfg, 0)
    }

    #[test]
    fn plug_in_is_a_root() {
        for family in [LinkFamily::Logit, LinkFamily::Probit] {
            let data = sample(400, family, 11);
            let sol = solve(&data, family).unwrap();
            assert!(residual_norm(&data, &sol) < 1e-8 * data.len() as f64);
        }
    }

    #[test]
    fn gating_zeroes_other_group() {
        let theta = ParameterVector {
            beta: [-1.0, 1.5, 1.5, -2.0],
            gamma: [-1.0, 3.0, -2.0],
            contrasts: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            mediator_means: [0.7, 0.6, 0.2, 0.1],
            p_indirect: [0.1, 0.2, 0.15],
            p_direct: [0.3, 0.3, 0.3],
            indices: [ExtendedIndex::Finite(2.0); 9],
        };
        let unexposed = ObservationRecord::new(true, false, true, 0.4);
        let q = q_function(&unexposed, &theta, LinkFamily::Logit);
        // γA score is s·A = 0 for an unexposed record.
        assert_eq!(q[5], 0.0);
        for kind in CONTRASTS {
            assert_eq!(q[StackLayout::contrast(kind, Group::Exposed)], 0.0);
            assert_ne!(q[StackLayout::contrast(kind, Group::Unexposed)], 0.0);
        }
    }

    #[test]
    fn analytic_jacobian_matches_differences() {
        for family in [LinkFamily::Logit, LinkFamily::Probit] {
            let data = sample(120, family, 5).canonical();
            let theta = solve(&data, family).unwrap().theta.pack();
            let slots = active_slots(&theta);
            let analytic = mean_jacobian(&data, &theta, family).select(&slots);
            let numeric = numerical_jacobian(&data, &theta, family, &slots);
            for r in 0..slots.len() {
                for c in 0..slots.len() {
                    let (x, y) = (analytic[(r, c)], numeric[(r, c)]);
                    if x.abs().max(y.abs()) > 1e-6 {
                        assert!(
                            (x - y).abs() <= 1e-4 * x.abs().max(y.abs()),
                            "{family} ({r},{c}): {x} vs {y}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn index_residual_extended_arithmetic() {
        assert_eq!(index_residual(-0.1, f64::INFINITY), 0.0);
        assert_eq!(index_residual(-0.1, 3.0), f64::INFINITY);
        assert_eq!(index_residual(0.5, f64::INFINITY), f64::NEG_INFINITY);
        assert_eq!(index_residual(0.5, 1.5), 0.5);
    }
}
