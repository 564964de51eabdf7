//! Sandwich covariance `A⁻¹ B A⁻ᵀ / n` for the stacked system and Wald
//! intervals on every coordinate.
//!
//! Index equations whose index is infinite are dropped from the system; the
//! matching rows and columns of the covariance are `NaN`.

use alloc::vec::Vec;

use crate::error::InferenceError;
use crate::linalg::{inverse_with_condition, Matrix};
use crate::link::{normal_quantile, LinkFamily};
use crate::stack::{active_slots, mean_jacobian, mean_outer_product};
use crate::types::{Dataset, IndexKind, ParameterVector, StackLayout};

/// Bread condition estimates above this mark the covariance as singular.
pub const SINGULAR_CONDITION: f64 = 1e12;

const DIM: usize = StackLayout::DIM;

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichResult {
    /// Coordinates taking part, in increasing order.
    pub slots: Vec<usize>,
    /// `-n⁻¹ Σ ∂Q/∂θ` on `slots`.
    pub bread: Matrix,
    /// `n⁻¹ Σ Q Qᵀ` on `slots`.
    pub meat: Matrix,
    /// Full 32×32 covariance, `NaN` outside `slots` or when singular.
    pub covariance: Matrix,
    pub standard_errors: [f64; DIM],
    /// 1-norm condition estimate of the bread.
    pub condition: f64,
    pub singular: bool,
    /// Largest `|V_ij - V_ji|` before symmetrization.
    pub asymmetry: f64,
    /// Per index in [`IndexKind::ALL`] order.
    pub infinite: [bool; 9],
    pub n: usize,
}

impl SandwichResult {
    pub fn require_nonsingular(&self) -> Result<(), InferenceError> {
        if self.singular {
            Err(InferenceError::SingularBread {
                condition: self.condition,
            })
        } else {
            Ok(())
        }
    }

    /// Standard error of `Σ w_k θ_k`.
    pub fn linear_combination_se(&self, weights: &[(usize, f64)]) -> f64 {
        let mut var = 0.0;
        for &(i, wi) in weights {
            for &(j, wj) in weights {
                var += wi * wj * self.covariance[(i, j)];
            }
        }
        libm::sqrt(var.max(0.0))
    }
}

/// `A⁻¹ B A⁻ᵀ / n` with the condition estimate of `A`; `None` when `A`
/// cannot be factored.
pub fn sandwich_covariance(bread: &Matrix, meat: &Matrix, n: usize) -> Option<(Matrix, f64)> {
    let (inv, cond) = inverse_with_condition(bread)?;
    let mut cov = inv.matmul(meat).matmul(&inv.transpose());
    cov.scale(1.0 / n as f64);
    Some((cov, cond))
}

/// Sandwich covariance of the stacked estimator at `theta`.
pub fn sandwich(data: &Dataset, theta: &ParameterVector, family: LinkFamily) -> SandwichResult {
    let data = data.canonical();
    let flat = theta.pack();
    let slots = active_slots(&flat);
    let mut bread = mean_jacobian(&data, &flat, family).select(&slots);
    bread.scale(-1.0);
    let meat = mean_outer_product(&data, &flat, family, &slots);

    let mut covariance = Matrix::from_row_major(DIM, DIM, alloc::vec![f64::NAN; DIM * DIM]);
    let (mut condition, mut singular, mut asymmetry) = (f64::INFINITY, true, f64::NAN);
    if let Some((mut cov, cond)) = sandwich_covariance(&bread, &meat, data.len()) {
        condition = cond;
        singular = !(cond <= SINGULAR_CONDITION);
        asymmetry = cov.max_asymmetry();
        cov.symmetrize();
        if !singular {
            for (a, &i) in slots.iter().enumerate() {
                for (b, &j) in slots.iter().enumerate() {
                    covariance[(i, j)] = cov[(a, b)];
                }
            }
        }
    }
    let standard_errors = core::array::from_fn(|k| {
        let v = covariance[(k, k)];
        if v.is_nan() {
            f64::NAN
        } else {
            libm::sqrt(v.max(0.0))
        }
    });
    SandwichResult {
        slots,
        bread,
        meat,
        covariance,
        standard_errors,
        condition,
        singular,
        asymmetry,
        infinite: IndexKind::ALL.map(|k| theta.index(k).is_infinite()),
        n: data.len(),
    }
}

/// A Wald interval. Infinite indices carry `infinite = true` and infinite
/// bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub estimate: f64,
    pub standard_error: f64,
    pub lower: f64,
    pub upper: f64,
    pub infinite: bool,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Two-sided standard normal critical value for `level`.
pub fn critical_value(level: f64) -> Result<f64, InferenceError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(InferenceError::Level(level));
    }
    Ok(normal_quantile(1.0 - (1.0 - level) / 2.0))
}

/// `θ̂_k ± z·SE_k` for all 32 coordinates. Lower bounds of index intervals
/// are floored at 1.
pub fn confidence_intervals(
    result: &SandwichResult,
    theta: &ParameterVector,
    level: f64,
) -> Result<[Interval; DIM], InferenceError> {
    let z = critical_value(level)?;
    let flat = theta.pack();
    Ok(core::array::from_fn(|k| {
        let estimate = flat[k];
        let se = result.standard_errors[k];
        if StackLayout::INDICES.contains(&k) && estimate == f64::INFINITY {
            return Interval {
                estimate,
                standard_error: f64::NAN,
                lower: f64::INFINITY,
                upper: f64::INFINITY,
                infinite: true,
            };
        }
        let mut lower = estimate - z * se;
        if StackLayout::INDICES.contains(&k) {
            lower = lower.max(1.0);
        }
        Interval {
            estimate,
            standard_error: se,
            lower,
            upper: estimate + z * se,
            infinite: false,
        }
    }))
}
