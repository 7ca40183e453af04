//! Reference forecasters that become peak forecasters by sorting their
//! 24-hour output: ridge linear regression on the flattened input window,
//! and seasonal-naive (yesterday repeated).

use chrono::{NaiveDate, TimeDelta};
use thiserror::Error;

use crate::features::{FeatureVector, NormalizationParams, WindowSample, FEATURE_DIM, INPUT_HOURS, TARGET_HOURS};
use crate::linalg;
use crate::trace::DemandTrace;

pub const DEFAULT_RIDGE_LAMBDA: f64 = 1e-6;
pub const FLAT_INPUTS: usize = INPUT_HOURS * FEATURE_DIM;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("normal equations are singular (ridge_lambda = {0})")]
    SingularSystem(f64),
    #[error("no training samples")]
    EmptyDataset,
    #[error("ridge_lambda must be a finite value >= 0, got {0}")]
    BadLambda(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("trace lacks the full day before {0}")]
    MissingHistory(NaiveDate),
}

/// Least-squares solution of `Y ≈ X·Wᵀ + 1·bᵀ` with an unpenalized intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct RidgeSolution {
    /// `outputs × features`.
    pub weights: Vec<f64>,
    pub intercept: Vec<f64>,
}

/// Ridge regression through the normal equations. `x` is `n × p`, `y` is
/// `n × m`, both row-major.
pub fn ridge_solve(x: &[f64], n: usize, p: usize, y: &[f64], m: usize, lambda: f64) -> Result<RidgeSolution, BaselineError> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(BaselineError::BadLambda(lambda));
    }
    if n == 0 {
        return Err(BaselineError::EmptyDataset);
    }
    for (expected, found) in [(n * p, x.len()), (n * m, y.len())] {
        if expected != found {
            return Err(BaselineError::DimensionMismatch { expected, found });
        }
    }
    let q = p + 1;
    let mut a = Vec::with_capacity(n * q);
    for row in x.chunks_exact(p.max(1)).take(n) {
        if p > 0 {
            a.extend_from_slice(row);
        }
        a.push(1.0);
    }
    let mut g = linalg::gram(&a, n, q);
    for i in 0..p {
        g[i * q + i] += lambda;
    }
    let mut rhs = linalg::transpose_mul(&a, y, n, q, m);
    let l = linalg::cholesky(g, q).ok_or(BaselineError::SingularSystem(lambda))?;
    linalg::cholesky_solve(&l, q, &mut rhs, m);

    let mut weights = vec![0.0; m * p];
    for j in 0..p {
        for o in 0..m {
            weights[o * p + j] = rhs[j * m + o];
        }
    }
    let intercept = rhs[p * m..].to_vec();
    Ok(RidgeSolution { weights, intercept })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinRegModel {
    /// `24 × (48·39)`: one weight row per output hour.
    pub weights: Vec<f64>,
    pub intercept: [f64; TARGET_HOURS],
    pub ridge_lambda: f64,
    pub normalization: NormalizationParams,
}

impl LinRegModel {
    pub fn parameter_count(&self) -> usize {
        self.weights.len() + self.intercept.len()
    }
}

/// Per-hour ridge fit on flattened inputs against normalized targets.
pub fn fit_linreg(
    train: &[WindowSample],
    ridge_lambda: f64,
    normalization: NormalizationParams,
) -> Result<LinRegModel, BaselineError> {
    if train.is_empty() {
        return Err(BaselineError::EmptyDataset);
    }
    let n = train.len();
    let mut x = Vec::with_capacity(n * FLAT_INPUTS);
    let mut y = Vec::with_capacity(n * TARGET_HOURS);
    for s in train {
        if s.inputs.len() != INPUT_HOURS {
            return Err(BaselineError::DimensionMismatch {
                expected: INPUT_HOURS,
                found: s.inputs.len(),
            });
        }
        x.extend(s.inputs.iter().flat_map(|f| f.0));
        y.extend(s.target_kw.iter().map(|kw| normalization.scale_demand(*kw)));
    }
    let sol = ridge_solve(&x, n, FLAT_INPUTS, &y, TARGET_HOURS, ridge_lambda)?;
    let mut intercept = [0.0; TARGET_HOURS];
    intercept.copy_from_slice(&sol.intercept);
    Ok(LinRegModel {
        weights: sol.weights,
        intercept,
        ridge_lambda,
        normalization,
    })
}

pub fn predict_linreg(model: &LinRegModel, inputs: &[FeatureVector]) -> Result<[f64; TARGET_HOURS], BaselineError> {
    if inputs.len() != INPUT_HOURS {
        return Err(BaselineError::DimensionMismatch {
            expected: INPUT_HOURS,
            found: inputs.len(),
        });
    }
    if model.weights.len() != TARGET_HOURS * FLAT_INPUTS {
        return Err(BaselineError::DimensionMismatch {
            expected: TARGET_HOURS * FLAT_INPUTS,
            found: model.weights.len(),
        });
    }
    let flat: Vec<f64> = inputs.iter().flat_map(|f| f.0).collect();
    let mut out = [0.0; TARGET_HOURS];
    for (o, v) in out.iter_mut().enumerate() {
        let row = &model.weights[o * FLAT_INPUTS..(o + 1) * FLAT_INPUTS];
        *v = model.normalization.unscale_demand(linalg::dot(row, &flat) + model.intercept[o]);
    }
    Ok(out)
}

/// Yesterday's 24 demands, verbatim.
pub fn seasonal_naive_predict(trace: &DemandTrace, target_date: NaiveDate) -> Result<[f64; TARGET_HOURS], BaselineError> {
    let prev = target_date - TimeDelta::days(1);
    let day = trace.day(prev).ok_or(BaselineError::MissingHistory(target_date))?;
    let mut out = [0.0; TARGET_HOURS];
    for (o, r) in out.iter_mut().zip(day) {
        *o = r.demand_kw;
    }
    Ok(out)
}
