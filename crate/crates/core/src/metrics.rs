//! Risk metrics over a year loss table: exceedance-probability curve,
//! probable maximum loss (PML), value-at-risk (VaR), tail value-at-risk
//! (TVaR), and return-period-loss reports.
//!
//! All definitions are empirical quantiles with ceil rank rules and no
//! interpolation, so every answer is an element (or exact mean of
//! elements) of the input and reproduces bit-for-bit anywhere:
//!
//! * exceedance probability of v: `count(loss >= v) / N`
//! * `pml(rp)`: descending-sorted loss at rank `ceil(N / rp)`
//! * `var(alpha)`: smallest v with `count(loss <= v) / N >= alpha`
//! * `tvar(alpha)`: mean of the worst `ceil((1 - alpha) * N)` losses
//!
//! Metrics are order-free: permuting the table changes nothing. They are
//! computed with selection rather than a full sort; the test oracles do
//! the opposite.

use std::fmt;

use crate::model::YearLossTable;
use crate::scalar::Scalar;
use crate::Wide;

/// Empirical exceedance curve: `(loss, probability of a year with loss >=
/// that loss)` per distinct loss, ascending. Probabilities are in (0, 1]
/// and non-increasing along the curve.
#[derive(Debug, Clone, PartialEq)]
pub struct EpCurve {
    pub points: Vec<(Wide, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MetricsError {
    EmptyTable,
    /// Return periods must exceed 1 year.
    ReturnPeriodTooSmall(f64),
    /// A return period beyond the trial count has no supporting data.
    InsufficientTrials { return_period: f64, trials: usize },
    AlphaOutOfRange(f64),
}

impl fmt::Display for MetricsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyTable => write!(f, "year loss table is empty"),
            Self::ReturnPeriodTooSmall(rp) => {
                write!(f, "return period {rp} must be greater than 1")
            }
            Self::InsufficientTrials { return_period, trials } => write!(
                f,
                "return period {return_period} exceeds the {trials} trials available"
            ),
            Self::AlphaOutOfRange(alpha) => {
                write!(f, "alpha {alpha} outside the open interval (0, 1)")
            }
        }
    }
}

impl std::error::Error for MetricsError {}

fn widened<S: Scalar>(ylt: &YearLossTable<S>) -> Result<Vec<f64>, MetricsError> {
    if ylt.losses.is_empty() {
        return Err(MetricsError::EmptyTable);
    }
    Ok(ylt.losses.iter().map(|&(_, loss)| loss.to_wide()).collect())
}

/// Exceedance probability per distinct loss value.
pub fn exceedance_curve<S: Scalar>(ylt: &YearLossTable<S>) -> Result<EpCurve, MetricsError> {
    let mut losses = widened(ylt)?;
    losses.sort_by(|a, b| a.partial_cmp(b).expect("finite losses"));
    let n = losses.len();
    let mut points = Vec::new();
    let mut start = 0;
    while start < n {
        let value = losses[start];
        let mut end = start + 1;
        while end < n && losses[end] == value {
            end += 1;
        }
        // Everything from the run's first index on is >= value.
        points.push((value, (n - start) as f64 / n as f64));
        start = end;
    }
    Ok(EpCurve { points })
}

/// Loss at exceedance probability `1 / return_period`: the
/// `ceil(N / return_period)`-th largest loss.
pub fn pml<S: Scalar>(ylt: &YearLossTable<S>, return_period: f64) -> Result<f64, MetricsError> {
    let mut losses = widened(ylt)?;
    let n = losses.len();
    if !(return_period > 1.0) {
        return Err(MetricsError::ReturnPeriodTooSmall(return_period));
    }
    if return_period > n as f64 {
        return Err(MetricsError::InsufficientTrials { return_period, trials: n });
    }
    let rank = (n as f64 / return_period).ceil() as usize;
    debug_assert!(rank >= 1 && rank <= n);
    // k-th largest sits at ascending index n - k.
    let (_, value, _) = losses
        .select_nth_unstable_by(n - rank, |a, b| a.partial_cmp(b).expect("finite losses"));
    Ok(*value)
}

/// Smallest loss v with `count(loss <= v) / N >= alpha`.
pub fn var<S: Scalar>(ylt: &YearLossTable<S>, alpha: f64) -> Result<f64, MetricsError> {
    let mut losses = widened(ylt)?;
    let n = losses.len();
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::AlphaOutOfRange(alpha));
    }
    let rank = (alpha * n as f64).ceil() as usize;
    if rank == 0 {
        // alpha small enough that no order statistic is forced; the
        // smallest loss satisfies the definition.
        let (_, value, _) = losses
            .select_nth_unstable_by(0, |a, b| a.partial_cmp(b).expect("finite losses"));
        return Ok(*value);
    }
    let (_, value, _) = losses
        .select_nth_unstable_by(rank - 1, |a, b| a.partial_cmp(b).expect("finite losses"));
    Ok(*value)
}

/// Mean of the worst `ceil((1 - alpha) * N)` losses. Always >= var(alpha).
pub fn tvar<S: Scalar>(ylt: &YearLossTable<S>, alpha: f64) -> Result<f64, MetricsError> {
    let mut losses = widened(ylt)?;
    let n = losses.len();
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::AlphaOutOfRange(alpha));
    }
    let tail = ((1.0 - alpha) * n as f64).ceil() as usize;
    debug_assert!(tail >= 1 && tail <= n);
    let split = n - tail;
    if split > 0 {
        losses.select_nth_unstable_by(split - 1, |a, b| {
            a.partial_cmp(b).expect("finite losses")
        });
    }
    // The tail slice arrives in selection order; summing it sorted keeps
    // the result independent of input permutation.
    let worst = &mut losses[split..];
    worst.sort_by(|a, b| a.partial_cmp(b).expect("finite losses"));
    Ok(worst.iter().sum::<f64>() / tail as f64)
}

/// One `(return_period, pml)` row per requested period, deduplicated and
/// sorted by period.
pub fn rpl_report<S: Scalar>(
    ylt: &YearLossTable<S>,
    periods: &[f64],
) -> Result<Vec<(f64, f64)>, MetricsError> {
    let mut sorted: Vec<f64> = periods.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sorted.dedup();
    sorted
        .into_iter()
        .map(|period| Ok((period, pml(ylt, period)?)))
        .collect()
}
