//! Binary-response GLMs for the mediator and outcome models, fitted by
//! iteratively reweighted least squares with step halving.

use alloc::vec::Vec;

use crate::error::GlmError;
use crate::linalg::{psd_rank, Lu, Matrix};
use crate::link::LinkFamily;
use crate::sum::pairwise_accumulate;
use crate::types::{Dataset, ObservationRecord};

pub const MAX_DIM: usize = 4;

/// Linear predictors beyond this size, while the likelihood keeps creeping
/// up, are read as (quasi-)complete separation.
const SEPARATION_ETA: f64 = 30.0;
const SEPARATION_STREAK: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Covariate {
    Intercept,
    Exposure,
    Mediator,
    Confounder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    Outcome,
    Mediator,
}

/// Family, design and response of one binary regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GlmSpec {
    pub family: LinkFamily,
    roles: [Covariate; MAX_DIM],
    dim: usize,
    pub response: Response,
}

impl GlmSpec {
    pub fn new(
        family: LinkFamily,
        roles: &[Covariate],
        response: Response,
    ) -> Result<Self, GlmError> {
        if roles.is_empty() || roles.len() > MAX_DIM {
            return Err(GlmError::InvalidDesign);
        }
        for (i, r) in roles.iter().enumerate() {
            if roles[..i].contains(r)
                || (response == Response::Mediator && *r == Covariate::Mediator)
            {
                return Err(GlmError::InvalidDesign);
            }
        }
        let mut fixed = [Covariate::Intercept; MAX_DIM];
        fixed[..roles.len()].copy_from_slice(roles);
        Ok(Self {
            family,
            roles: fixed,
            dim: roles.len(),
            response,
        })
    }

    /// `E[M | A, L] = η(γ0 + γA·A + γL·L)`.
    pub fn mediator(family: LinkFamily) -> Self {
        Self {
            family,
            roles: [
                Covariate::Intercept,
                Covariate::Exposure,
                Covariate::Confounder,
                Covariate::Intercept,
            ],
            dim: 3,
            response: Response::Mediator,
        }
    }

    /// `E[I | A, M, L] = ξ(β0 + βA·A + βM·M + βL·L)`.
    pub fn outcome(family: LinkFamily) -> Self {
        Self {
            family,
            roles: [
                Covariate::Intercept,
                Covariate::Exposure,
                Covariate::Mediator,
                Covariate::Confounder,
            ],
            dim: 4,
            response: Response::Outcome,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn roles(&self) -> &[Covariate] {
        &self.roles[..self.dim]
    }

    /// Design row; entries past `dim()` are zero.
    #[inline]
    pub fn design(&self, r: &ObservationRecord) -> [f64; MAX_DIM] {
        let mut x = [0.0; MAX_DIM];
        for (slot, role) in x.iter_mut().zip(self.roles()) {
            *slot = match role {
                Covariate::Intercept => 1.0,
                Covariate::Exposure => r.a(),
                Covariate::Mediator => r.m(),
                Covariate::Confounder => r.confounder,
            };
        }
        x
    }

    #[inline]
    pub fn response_value(&self, r: &ObservationRecord) -> f64 {
        match self.response {
            Response::Outcome => r.i(),
            Response::Mediator => r.m(),
        }
    }

    #[inline]
    fn linear_predictor(&self, coeffs: &[f64], r: &ObservationRecord) -> f64 {
        let x = self.design(r);
        (0..self.dim).map(|k| x[k] * coeffs[k]).sum()
    }

    fn check_dim(&self, coeffs: &[f64]) -> Result<(), GlmError> {
        if coeffs.len() != self.dim {
            return Err(GlmError::Dimension {
                expected: self.dim,
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    /// Per-record score contribution: `(y - μ)·x` for logit, the
    /// maximum-likelihood score `x·φ(η)(y - Φ)/[Φ(1 - Φ)]` for probit.
    pub fn score(&self, coeffs: &[f64], record: &ObservationRecord) -> Result<Vec<f64>, GlmError> {
        self.check_dim(coeffs)?;
        let eta = self.linear_predictor(coeffs, record);
        let s = score_weight(self.family, self.response_value(record), eta);
        let x = self.design(record);
        Ok(x[..self.dim].iter().map(|v| v * s).collect())
    }

    pub fn log_likelihood(
        &self,
        coeffs: &[f64],
        record: &ObservationRecord,
    ) -> Result<f64, GlmError> {
        self.check_dim(coeffs)?;
        let eta = self.linear_predictor(coeffs, record);
        Ok(record_log_likelihood(
            self.family,
            self.response_value(record),
            eta,
        ))
    }
}

/// Scalar `s(y, η)` with per-record score `s·x`.
#[inline]
pub(crate) fn score_weight(family: LinkFamily, y: f64, eta: f64) -> f64 {
    let mu = family.inv_link(eta);
    match family {
        LinkFamily::Logit => y - mu,
        LinkFamily::Probit => family.inv_link_deriv(eta) * (y - mu) / (mu * (1.0 - mu)),
    }
}

/// `∂s/∂η`, so that the per-record score Jacobian is `(∂s/∂η)·x xᵀ`.
#[inline]
pub(crate) fn score_weight_deriv(family: LinkFamily, y: f64, eta: f64) -> f64 {
    let mu = family.inv_link(eta);
    let d = family.inv_link_deriv(eta);
    match family {
        LinkFamily::Logit => -d,
        LinkFamily::Probit => {
            let v = mu * (1.0 - mu);
            let w = d / v;
            let dw = -eta * w - w * w * (1.0 - 2.0 * mu);
            dw * (y - mu) - w * d
        }
    }
}

#[inline]
fn fisher_weight(family: LinkFamily, eta: f64) -> f64 {
    let mu = family.inv_link(eta);
    let d = family.inv_link_deriv(eta);
    d * d / (mu * (1.0 - mu))
}

#[inline]
fn record_log_likelihood(family: LinkFamily, y: f64, eta: f64) -> f64 {
    let mu = family.inv_link(eta);
    y * libm::log(mu) + (1.0 - y) * libm::log(1.0 - mu)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `‖Σ_j score_j‖∞` at the returned coefficients.
    pub max_score_norm: f64,
    pub log_likelihood: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Bound on the relative coefficient step `‖Δ‖∞ / max(1, ‖c‖∞)`.
    pub tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
        }
    }
}

/// Score-norm bound for convergence, relative to the sample size.
pub const SCORE_TOL_PER_RECORD: f64 = 1e-9;

struct Evaluation {
    score: Vec<f64>,
    info: Matrix,
    loglik: f64,
    max_abs_eta: f64,
}

fn evaluate(spec: &GlmSpec, data: &Dataset, coeffs: &[f64]) -> Evaluation {
    let p = spec.dim;
    let recs = data.records();
    // Layout: score (p) | info (p*p) | loglik (1)
    let acc = pairwise_accumulate(recs.len(), p + p * p + 1, |j, acc| {
        let r = &recs[j];
        let x = spec.design(r);
        let eta = spec.linear_predictor(coeffs, r);
        let y = spec.response_value(r);
        let s = score_weight(spec.family, y, eta);
        let w = fisher_weight(spec.family, eta);
        for a in 0..p {
            acc[a] += s * x[a];
            for b in 0..p {
                acc[p + a * p + b] += w * x[a] * x[b];
            }
        }
        acc[p + p * p] += record_log_likelihood(spec.family, y, eta);
    });
    let max_abs_eta = recs
        .iter()
        .map(|r| spec.linear_predictor(coeffs, r).abs())
        .fold(0.0, f64::max);
    Evaluation {
        score: acc[..p].to_vec(),
        info: Matrix::from_row_major(p, p, acc[p..p + p * p].to_vec()),
        loglik: acc[p + p * p],
        max_abs_eta,
    }
}

fn loglik(spec: &GlmSpec, data: &Dataset, coeffs: &[f64]) -> f64 {
    let recs = data.records();
    pairwise_accumulate(recs.len(), 1, |j, acc| {
        let r = &recs[j];
        acc[0] += record_log_likelihood(
            spec.family,
            spec.response_value(r),
            spec.linear_predictor(coeffs, r),
        );
    })[0]
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Rank of the realized design crossproduct `XᵀX`.
pub fn design_rank(spec: &GlmSpec, data: &Dataset) -> usize {
    let p = spec.dim;
    let recs = data.records();
    let xtx = pairwise_accumulate(recs.len(), p * p, |j, acc| {
        let x = spec.design(&recs[j]);
        for a in 0..p {
            for b in 0..p {
                acc[a * p + b] += x[a] * x[b];
            }
        }
    });
    psd_rank(&Matrix::from_row_major(p, p, xtx), 1e-10)
}

/// Solves the summed score equations by Fisher scoring (IRLS).
///
/// Converges when the relative coefficient step drops below `tol` and the
/// summed score is below `1e-9·n` in the sup norm.
pub fn fit(
    spec: &GlmSpec,
    data: &Dataset,
    init: &[f64],
    max_iter: usize,
    tol: f64,
) -> Result<GlmFit, GlmError> {
    spec.check_dim(init)?;
    data.require_both_groups()?;
    let p = spec.dim;
    let rank = design_rank(spec, data);
    if rank < p {
        return Err(GlmError::RankDeficientDesign { rank, dim: p });
    }
    let score_tol = SCORE_TOL_PER_RECORD * data.len() as f64;

    let mut coeffs = init.to_vec();
    let mut eval = evaluate(spec, data, &coeffs);
    let mut last_step = f64::INFINITY;
    let mut streak = 0;
    for iteration in 0..=max_iter {
        let score_norm = inf_norm(&eval.score);
        if last_step < tol && score_norm < score_tol {
            return Ok(GlmFit {
                coefficients: coeffs,
                converged: true,
                iterations: iteration,
                max_score_norm: score_norm,
                log_likelihood: eval.loglik,
            });
        }
        if iteration == max_iter || streak >= SEPARATION_STREAK {
            return Err(did_not_converge(
                &coeffs,
                iteration,
                score_norm,
                streak >= SEPARATION_STREAK,
            ));
        }
        // The design has full rank, so a singular information matrix means the
        // weights have collapsed towards zero.
        let Some(lu) = Lu::factor(&eval.info) else {
            return Err(did_not_converge(&coeffs, iteration, score_norm, true));
        };
        let delta = lu.solve(&eval.score);

        let slack = 1e-12 * (1.0 + eval.loglik.abs());
        let mut t = 1.0;
        let mut trial: Vec<f64> = coeffs.iter().zip(&delta).map(|(c, d)| c + d).collect();
        for _ in 0..40 {
            if loglik(spec, data, &trial) >= eval.loglik - slack {
                break;
            }
            t *= 0.5;
            trial = coeffs.iter().zip(&delta).map(|(c, d)| c + t * d).collect();
        }
        let step = inf_norm(&delta) * t;
        last_step = step / inf_norm(&trial).max(1.0);
        let previous = eval.loglik;
        coeffs = trial;
        eval = evaluate(spec, data, &coeffs);
        if eval.max_abs_eta > SEPARATION_ETA && eval.loglik > previous && last_step >= tol {
            streak += 1;
        } else {
            streak = 0;
        }
    }
    unreachable!("loop returns by max_iter")
}

/// [`fit`] from the zero vector with [`FitOptions::default`].
pub fn fit_default(spec: &GlmSpec, data: &Dataset) -> Result<GlmFit, GlmError> {
    let opts = FitOptions::default();
    let init = [0.0; MAX_DIM];
    fit(spec, data, &init[..spec.dim], opts.max_iter, opts.tol)
}

fn did_not_converge(
    coeffs: &[f64],
    iterations: usize,
    score_norm: f64,
    separation: bool,
) -> GlmError {
    let mut c = [0.0; MAX_DIM];
    c[..coeffs.len()].copy_from_slice(coeffs);
    GlmError::DidNotConverge {
        coefficients: c,
        dim: coeffs.len(),
        iterations,
        score_norm,
        separation,
    }
}

/// Summed score `Σ_j score_j(c)`.
pub fn total_score(spec: &GlmSpec, data: &Dataset, coeffs: &[f64]) -> Result<Vec<f64>, GlmError> {
    spec.check_dim(coeffs)?;
    let recs = data.records();
    let p = spec.dim;
    Ok(pairwise_accumulate(recs.len(), p, |j, acc| {
        let r = &recs[j];
        let s = score_weight(
            spec.family,
            spec.response_value(r),
            spec.linear_predictor(coeffs, r),
        );
        let x = spec.design(r);
        for a in 0..p {
            acc[a] += s * x[a];
        }
    }))
}

/// Inverse expected information `(Σ w xxᵀ)⁻¹`, the model-based covariance.
pub fn inverse_information(spec: &GlmSpec, data: &Dataset, coeffs: &[f64]) -> Option<Matrix> {
    let eval = evaluate(spec, data, coeffs);
    Lu::factor(&eval.info).map(|lu| lu.inverse())
}
