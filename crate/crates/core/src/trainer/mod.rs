//! Coefficient training by nonnegative (bound-constrained) least squares.
//!
//! The fit minimizes `sum_l w_l (sum_i n_li e_i - E_l)^2` subject to
//! `e >= 0`, with `w_l = 1` (absolute) or `w_l = 1 / E_l^2` (relative, the
//! default, which makes each residual a relative error like the mean
//! estimation error). The minimizer of this problem is unique up to rank
//! deficiency, so an active-set solver stands in for a trust-region one.

pub mod nnls;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::dataset::EnergyDataset;
use crate::energy::{mean_estimation_error, EnergyModel};
use crate::error::{Error, Result};
use crate::report::{EvaluationReport, ReportRow};

pub use nnls::NnlsSolution;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    AbsoluteLsq,
    #[default]
    RelativeWeightedLsq,
}

impl Objective {
    pub fn as_str(self) -> &'static str {
        match self {
            Objective::AbsoluteLsq => "abs",
            Objective::RelativeWeightedLsq => "rel",
        }
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "abs" | "absolute" | "absolute_lsq" => Ok(Objective::AbsoluteLsq),
            "rel" | "relative" | "relative_weighted_lsq" => Ok(Objective::RelativeWeightedLsq),
            other => Err(Error::InvalidConfig(format!(
                "unknown objective `{other}` (expected rel or abs)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub objective: Objective,
    /// Cap on active-set iterations; `None` means 10 per leaf.
    pub max_iterations: Option<usize>,
    /// Bound on the normalized KKT residual.
    pub convergence_tol: f64,
    /// Recorded for provenance. The solver breaks ties by leaf index and
    /// draws no random numbers.
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            objective: Objective::RelativeWeightedLsq,
            max_iterations: None,
            convergence_tol: 1e-10,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == Some(0) {
            return Err(Error::InvalidConfig("max_iterations must be >= 1".into()));
        }
        if !(self.convergence_tol > 0.0) {
            return Err(Error::InvalidConfig("convergence_tol must be > 0".into()));
        }
        Ok(())
    }
}

/// Result of one fit. A fit that hit the iteration cap is still returned,
/// flagged through `converged`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: EnergyModel,
    pub converged: bool,
    pub iterations: usize,
    pub kkt_residual: f64,
}

/// Fits nonnegative coefficients to rows of a design matrix.
///
/// `weights`, when given, multiply each squared residual.
pub fn fit_nonnegative(
    rows: &[Vec<f64>],
    targets: &[f64],
    weights: Option<&[f64]>,
    config: &TrainingConfig,
) -> Result<NnlsSolution> {
    config.validate()?;
    let m = rows.len();
    if m == 0 {
        return Err(Error::EmptyDataset {
            name: "<design matrix>".into(),
        });
    }
    let n = rows[0].len();
    if rows.iter().any(|r| r.len() != n) || targets.len() != m {
        return Err(Error::Alignment {
            expected: m,
            found: targets.len(),
        });
    }
    let row_weight = |l: usize| weights.map_or(1.0, |w| w[l].sqrt());
    let a = DMatrix::from_fn(m, n, |l, i| rows[l][i] * row_weight(l));
    let b = DVector::from_fn(m, |l, _| targets[l] * row_weight(l));
    let max_iterations = config.max_iterations.unwrap_or(10 * n.max(1));
    Ok(nnls::solve(&a, &b, config.convergence_tol, max_iterations))
}

/// Trains an energy model on `dataset`.
pub fn train(dataset: &EnergyDataset, config: &TrainingConfig) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset {
            name: dataset.name.clone(),
        });
    }
    let rows: Vec<Vec<f64>> = dataset
        .records()
        .iter()
        .map(|r| r.counts.counts().iter().map(|&c| c as f64).collect())
        .collect();
    let targets = dataset.energies();
    let weights: Option<Vec<f64>> = match config.objective {
        Objective::AbsoluteLsq => None,
        Objective::RelativeWeightedLsq => Some(targets.iter().map(|e| 1.0 / (e * e)).collect()),
    };
    let solution = fit_nonnegative(&rows, &targets, weights.as_deref(), config)?;
    if !solution.converged {
        warn!(
            "training on `{}` stopped after {} iterations (KKT residual {:e})",
            dataset.name, solution.iterations, solution.kkt_residual
        );
    }
    let mut model =
        EnergyModel::new(dataset.variant(), solution.x)?.with_untrained(solution.zero_columns)?;
    model
        .attributes
        .insert("trained_on".into(), dataset.name.clone());
    if let Some(depth) = dataset.bit_depth() {
        model
            .attributes
            .insert("bit_depth".into(), depth.to_string());
    }
    model
        .attributes
        .insert("objective".into(), config.objective.to_string());
    model
        .attributes
        .insert("records".into(), dataset.len().to_string());
    Ok(TrainOutcome {
        model,
        converged: solution.converged,
        iterations: solution.iterations,
        kkt_residual: solution.kkt_residual,
    })
}

/// Rejects validation sets sharing bitstream ids with the training set, or
/// sharing source sequences at the same bit depth.
///
/// Sequences of a different bit depth are separate encodings of the same
/// source and are allowed, as in an 8-bit-trained, 10-bit-validated setup.
pub fn check_disjoint(train_set: &EnergyDataset, validation: &EnergyDataset) -> Result<()> {
    let train_ids: BTreeSet<&str> = train_set.ids().collect();
    let mut offending: Vec<String> = validation
        .ids()
        .filter(|id| train_ids.contains(id))
        .map(str::to_string)
        .collect();
    if offending.is_empty() {
        let train_keys: BTreeSet<(&str, u8)> = train_set
            .records()
            .iter()
            .map(|r| (r.meta.sequence.as_str(), r.meta.bit_depth.bits()))
            .collect();
        let shared: BTreeSet<&str> = validation
            .records()
            .iter()
            .filter(|r| train_keys.contains(&(r.meta.sequence.as_str(), r.meta.bit_depth.bits())))
            .map(|r| r.meta.sequence.as_str())
            .collect();
        offending = shared
            .into_iter()
            .map(|s| format!("sequence {s}"))
            .collect();
    }
    if offending.is_empty() {
        Ok(())
    } else {
        offending.truncate(10);
        Err(Error::Overlap { items: offending })
    }
}

/// Trains on `train_set` and reports the mean estimation error for every
/// validation set, in the given order.
pub fn train_validate(
    train_set: &EnergyDataset,
    validation_sets: &[&EnergyDataset],
    config: &TrainingConfig,
) -> Result<(TrainOutcome, EvaluationReport)> {
    for v in validation_sets {
        check_disjoint(train_set, v)?;
    }
    let outcome = train(train_set, config)?;
    let mut report = EvaluationReport::new(&train_set.name, train_set.bit_depth());
    for v in validation_sets {
        let summary = mean_estimation_error(&outcome.model, v, false)?;
        report.rows.push(ReportRow {
            validation_setup: v.name.clone(),
            validation_bit_depth: v.bit_depth(),
            variant: outcome.model.variant(),
            mean_error: summary.mean,
            residuals: summary.residuals,
        });
    }
    report
        .provenance
        .insert("objective".into(), config.objective.to_string());
    report
        .provenance
        .insert("seed".into(), config.seed.to_string());
    report.provenance.insert(
        "convergence_tol".into(),
        format!("{:e}", config.convergence_tol),
    );
    Ok((outcome, report))
}

/// Normalized KKT residual of `coefficients` for the weighted problem on
/// `dataset`, computed independently of the solver's internal scaling.
pub fn kkt_residual(dataset: &EnergyDataset, coefficients: &[f64], objective: Objective) -> f64 {
    let n = coefficients.len();
    let mut grad = vec![0.0; n];
    let mut col_sq = vec![0.0; n];
    let mut b_sq = 0.0;
    for rec in dataset.records() {
        let w = match objective {
            Objective::AbsoluteLsq => 1.0,
            Objective::RelativeWeightedLsq => 1.0 / rec.energy,
        };
        let est: f64 = rec
            .counts
            .counts()
            .iter()
            .zip(coefficients)
            .map(|(&c, &e)| c as f64 * e)
            .sum();
        let r = (rec.energy - est) * w;
        b_sq += (rec.energy * w).powi(2);
        for (i, &c) in rec.counts.counts().iter().enumerate() {
            let a = c as f64 * w;
            grad[i] += a * r;
            col_sq[i] += a * a;
        }
    }
    let b_norm = b_sq.sqrt();
    (0..n)
        .map(|i| {
            if col_sq[i] == 0.0 {
                return 0.0;
            }
            let g = grad[i] / (col_sq[i].sqrt() * b_norm);
            if coefficients[i] > 0.0 {
                g.abs()
            } else {
                g.max(0.0)
            }
        })
        .fold(0.0, f64::max)
}
