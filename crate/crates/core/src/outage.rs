//! Task outage, outage probability, task-aware epsilon-capacity and the task
//! achievable region.
//!
//! An inference is in outage when its wireless loss strays from the standard
//! risk by at least the discrepancy bound `G`. The maximum rate at which the
//! outage probability stays below `eps` is `C_eps = C / (1 - eps)`; figures
//! sometimes label the same quantity `C_s`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `|loss - standard| >= bound`, inclusive at equality.
pub fn outage_indicator(loss: f64, standard: f64, bound: f64) -> bool {
    (loss - standard).abs() >= bound
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageRecord {
    pub channel_id: usize,
    pub rate: f64,
    pub loss: f64,
    pub standard_risk: f64,
    pub bound: f64,
    pub outage: bool,
}

impl OutageRecord {
    pub fn new(channel_id: usize, rate: f64, loss: f64, standard_risk: f64, bound: f64) -> Self {
        Self {
            channel_id,
            rate,
            loss,
            standard_risk,
            bound,
            outage: outage_indicator(loss, standard_risk, bound),
        }
    }
}

/// How losses are grouped before comparing against the bound.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutageMode {
    /// One record per inference.
    #[default]
    PerSample,
    /// One record per channel draw, using the dataset-mean wireless loss.
    BatchMean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutageEstimate {
    pub probability: f64,
    pub std_error: f64,
    pub records: usize,
}

/// Fraction of records in outage with its binomial standard error.
pub fn outage_probability(records: &[OutageRecord]) -> Result<OutageEstimate> {
    outage_probability_from_flags(records.iter().map(|r| r.outage))
}

pub fn outage_probability_from_flags<I: IntoIterator<Item = bool>>(flags: I) -> Result<OutageEstimate> {
    let (mut total, mut hits) = (0usize, 0usize);
    for flag in flags {
        total += 1;
        hits += usize::from(flag);
    }
    if total == 0 {
        return Err(Error::input("outage probability needs at least one record"));
    }
    let p = hits as f64 / total as f64;
    Ok(OutageEstimate {
        probability: p,
        std_error: (p * (1.0 - p) / total as f64).sqrt(),
        records: total,
    })
}

/// `C / (1 - eps)`; `eps >= 1` is unattainable.
pub fn epsilon_capacity(capacity: f64, epsilon: f64) -> Result<f64> {
    if !(capacity >= 0.0) {
        return Err(Error::input(format!("capacity must be non-negative, got {capacity}")));
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::input(format!(
            "outage level must lie in [0, 1), got {epsilon}"
        )));
    }
    Ok(capacity / (1.0 - epsilon))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Boundary {
    Found {
        /// Largest sampled in-region rate.
        rate: f64,
        /// Rate where the loss gap crosses the bound, interpolated linearly
        /// towards the next sampled (out-of-region) rate.
        refined: f64,
    },
    /// No sampled rate is inside the region; carries the smallest gap seen.
    Empty { smallest_gap: f64 },
}

impl Boundary {
    pub fn rate(&self) -> Option<f64> {
        match self {
            Boundary::Found { rate, .. } => Some(*rate),
            Boundary::Empty { .. } => None,
        }
    }
}

/// Boundary of the task achievable region `{ rate : |loss(rate) - L| < G }`.
pub fn achievable_boundary(curve: &[(f64, f64)], standard: f64, bound: f64) -> Result<Boundary> {
    if curve.len() < 2 {
        return Err(Error::input("rate curve needs at least two points"));
    }
    let mut points = curve.to_vec();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gap = |loss: f64| (loss - standard).abs();
    let Some(last_in) = points.iter().rposition(|&(_, loss)| gap(loss) < bound) else {
        let smallest_gap = points.iter().map(|&(_, l)| gap(l)).fold(f64::INFINITY, f64::min);
        return Ok(Boundary::Empty { smallest_gap });
    };
    let (rate, loss_in) = points[last_in];
    let refined = match points.get(last_in + 1) {
        None => rate,
        Some(&(next_rate, loss_out)) => {
            let (g0, g1) = (gap(loss_in), gap(loss_out));
            if g1 > g0 {
                rate + (bound - g0) / (g1 - g0) * (next_rate - rate)
            } else {
                rate
            }
        }
    };
    Ok(Boundary::Found { rate, refined })
}
