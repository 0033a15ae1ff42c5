//! Estimation of the conditional mutual information `I(W;S|Z)` between the
//! trained weights and the channel state.
//!
//! Treating the posterior `p(w|s,z)` and prior `p(w|z)` as Gaussians with
//! proportional covariances reduces the KL form of `I(W;S|Z)` to a quadratic
//! form in the weight shift `dtheta = theta_{s,z} - theta_z`. The prior
//! covariance is approximated through influence functions by `F^{-1}/n`, and
//! expanding the empirical Fisher `F` over `T` logged gradients gives the
//! scalar estimator
//!
//! ```text
//! I~ = (n / T) * sum_t (dtheta . grad_t)^2
//! ```
//!
//! The proportionality constant is taken to be 1, so `I~` is meaningful up to
//! a fixed scale; the same convention flows into the reported bound.
//!
//! `theta_{s,z}` is tracked with a moving quadratic mean over recent weight
//! snapshots. Because that mean is componentwise non-negative, negative
//! weights contribute their magnitude; [`MeanKind::Signed`] offers a plain
//! exponential moving average for sensitivity checks.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_RHO: f64 = 0.99;
pub const DEFAULT_WINDOW: usize = 10;
pub const DEFAULT_LOG_CAPACITY: usize = 500;
pub const FISHER_FLOOR: f64 = 1e-8;

/// Most recent per-batch loss gradients, oldest first.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientLog {
    dim: usize,
    capacity: usize,
    entries: VecDeque<Vec<f64>>,
}

impl GradientLog {
    pub fn new(dim: usize, capacity: usize) -> Self {
        Self {
            dim,
            capacity: capacity.max(1),
            entries: VecDeque::new(),
        }
    }

    pub fn from_entries(entries: Vec<Vec<f64>>) -> Result<Self> {
        let dim = entries.first().map_or(0, Vec::len);
        let mut log = Self::new(dim, entries.len());
        for e in entries {
            log.push(e)?;
        }
        Ok(log)
    }

    /// Appends a gradient, evicting the oldest once the window is full.
    pub fn push(&mut self, gradient: Vec<f64>) -> Result<()> {
        if gradient.len() != self.dim {
            return Err(Error::input(format!(
                "gradient has dimension {}, log holds dimension {}",
                gradient.len(),
                self.dim
            )));
        }
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(gradient);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.iter().map(Vec::as_slice)
    }
}

/// Componentwise `sqrt(rho * prev^2 + ((1 - rho) / K) * sum_k snapshot_k^2)`
/// with `K = snapshots.len()`.
pub fn moving_quadratic_mean(previous: &[f64], snapshots: &[&[f64]], rho: f64) -> Result<Vec<f64>> {
    check_average_args(previous, snapshots, rho)?;
    let weight = (1.0 - rho) / snapshots.len() as f64;
    Ok((0..previous.len())
        .map(|i| {
            let recent: f64 = snapshots.iter().map(|s| s[i] * s[i]).sum();
            (rho * previous[i] * previous[i] + weight * recent).sqrt()
        })
        .collect())
}

/// `rho * prev + ((1 - rho) / K) * sum_k snapshot_k`.
pub fn moving_signed_mean(previous: &[f64], snapshots: &[&[f64]], rho: f64) -> Result<Vec<f64>> {
    check_average_args(previous, snapshots, rho)?;
    let weight = (1.0 - rho) / snapshots.len() as f64;
    Ok((0..previous.len())
        .map(|i| rho * previous[i] + weight * snapshots.iter().map(|s| s[i]).sum::<f64>())
        .collect())
}

fn check_average_args(previous: &[f64], snapshots: &[&[f64]], rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::input(format!("rho must lie in [0, 1), got {rho}")));
    }
    if snapshots.is_empty() {
        return Err(Error::input("moving average needs at least one snapshot"));
    }
    if snapshots.iter().any(|s| s.len() != previous.len()) {
        return Err(Error::input("snapshot dimension differs from the running mean"));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeanKind {
    #[default]
    Quadratic,
    Signed,
}

/// Running weight average over a sliding window of the last `K` snapshots.
#[derive(Clone, Debug)]
pub struct MovingAverage {
    kind: MeanKind,
    rho: f64,
    window: usize,
    recent: VecDeque<Vec<f64>>,
    current: Vec<f64>,
}

impl MovingAverage {
    /// Starts from `initial` (its magnitudes for the quadratic mean).
    pub fn new(initial: &[f64], rho: f64, window: usize, kind: MeanKind) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::input(format!("rho must lie in [0, 1), got {rho}")));
        }
        if window == 0 {
            return Err(Error::input("moving-average window must be at least 1"));
        }
        let current = match kind {
            MeanKind::Quadratic => initial.iter().map(|v| v.abs()).collect(),
            MeanKind::Signed => initial.to_vec(),
        };
        Ok(Self {
            kind,
            rho,
            window,
            recent: VecDeque::with_capacity(window),
            current,
        })
    }

    pub fn update(&mut self, snapshot: &[f64]) -> Result<&[f64]> {
        if self.recent.len() == self.window {
            self.recent.pop_front();
        }
        self.recent.push_back(snapshot.to_vec());
        let views: Vec<&[f64]> = self.recent.iter().map(Vec::as_slice).collect();
        self.current = match self.kind {
            MeanKind::Quadratic => moving_quadratic_mean(&self.current, &views, self.rho)?,
            MeanKind::Signed => moving_signed_mean(&self.current, &views, self.rho)?,
        };
        Ok(&self.current)
    }

    pub fn current(&self) -> &[f64] {
        &self.current
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiEstimate {
    pub value: f64,
    pub n: usize,
    pub t: usize,
    pub delta_theta: Vec<f64>,
}

/// `(n / T) * sum_t (dtheta . grad_t)^2`.
pub fn estimate_mi(delta_theta: &[f64], log: &GradientLog, n: usize) -> Result<MiEstimate> {
    if log.is_empty() {
        return Err(Error::input("gradient log is empty"));
    }
    if delta_theta.len() != log.dim() {
        return Err(Error::input(format!(
            "weight shift has dimension {}, gradients have {}",
            delta_theta.len(),
            log.dim()
        )));
    }
    let accumulated: f64 = log
        .iter()
        .map(|g| {
            let projection: f64 = delta_theta.iter().zip(g).map(|(d, gi)| d * gi).sum();
            projection * projection
        })
        .sum();
    Ok(MiEstimate {
        value: n as f64 / log.len() as f64 * accumulated,
        n,
        t: log.len(),
        delta_theta: delta_theta.to_vec(),
    })
}

/// Symmetric positive-definite matrix, stored densely or as its diagonal.
#[derive(Clone, Debug, PartialEq)]
pub enum SpdMatrix {
    Diagonal(Vec<f64>),
    Dense(DMatrix<f64>),
}

impl SpdMatrix {
    pub fn dim(&self) -> usize {
        match self {
            SpdMatrix::Diagonal(d) => d.len(),
            SpdMatrix::Dense(m) => m.nrows(),
        }
    }

    fn to_dense(&self) -> DMatrix<f64> {
        match self {
            SpdMatrix::Diagonal(d) => DMatrix::from_diagonal(&DVector::from_column_slice(d)),
            SpdMatrix::Dense(m) => m.clone(),
        }
    }

    fn condition_number(&self) -> f64 {
        let eig = self.to_dense().symmetric_eigenvalues();
        let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    fn not_pd(&self, what: &str) -> Error {
        Error::Numerical {
            message: format!("{what} is not positive definite"),
            condition: self.condition_number(),
        }
    }

    /// Cholesky factor of a dense matrix, or `None` for diagonals.
    fn factor(&self, what: &str) -> Result<Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>> {
        match self {
            SpdMatrix::Diagonal(d) => {
                if d.iter().all(|&v| v > 0.0 && v.is_finite()) {
                    Ok(None)
                } else {
                    Err(self.not_pd(what))
                }
            }
            SpdMatrix::Dense(m) => {
                if m.nrows() != m.ncols() || (m - m.transpose()).amax() > 1e-10 * m.amax().max(1.0) {
                    return Err(Error::input(format!("{what} is not square and symmetric")));
                }
                m.clone().cholesky().map(Some).ok_or_else(|| self.not_pd(what))
            }
        }
    }

    fn log_det(&self, factor: &Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>) -> f64 {
        match (self, factor) {
            (SpdMatrix::Diagonal(d), _) => d.iter().map(|v| v.ln()).sum(),
            (SpdMatrix::Dense(_), Some(c)) => 2.0 * c.l().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
            (SpdMatrix::Dense(_), None) => unreachable!("dense matrices are always factored"),
        }
    }

    fn solve(&self, factor: &Option<nalgebra::Cholesky<f64, nalgebra::Dyn>>, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match (self, factor) {
            (SpdMatrix::Diagonal(d), _) => {
                let mut out = rhs.clone();
                for (mut row, &v) in out.row_iter_mut().zip(d) {
                    row /= v;
                }
                out
            }
            (SpdMatrix::Dense(_), Some(c)) => c.solve(rhs),
            (SpdMatrix::Dense(_), None) => unreachable!("dense matrices are always factored"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    pub mean: Vec<f64>,
    pub covariance: SpdMatrix,
}

/// Closed-form `KL(posterior || prior)`:
/// `0.5 * [ln(det S2 / det S1) - D + (m1 - m2)' S2^{-1} (m1 - m2) + tr(S2^{-1} S1)]`.
pub fn gaussian_kl(posterior: &Gaussian, prior: &Gaussian) -> Result<f64> {
    let dim = posterior.mean.len();
    if prior.mean.len() != dim || posterior.covariance.dim() != dim || prior.covariance.dim() != dim {
        return Err(Error::input("Gaussian dimensions disagree"));
    }
    let f1 = posterior.covariance.factor("posterior covariance")?;
    let f2 = prior.covariance.factor("prior covariance")?;
    let log_det_ratio = prior.covariance.log_det(&f2) - posterior.covariance.log_det(&f1);
    let diff = DMatrix::from_iterator(
        dim,
        1,
        posterior.mean.iter().zip(&prior.mean).map(|(a, b)| a - b),
    );
    let mahalanobis = (diff.transpose() * prior.covariance.solve(&f2, &diff))[(0, 0)];
    let trace = match (&posterior.covariance, &prior.covariance) {
        (SpdMatrix::Diagonal(s1), SpdMatrix::Diagonal(s2)) => s1.iter().zip(s2).map(|(a, b)| a / b).sum(),
        _ => prior.covariance.solve(&f2, &posterior.covariance.to_dense()).trace(),
    };
    let kl = 0.5 * (log_det_ratio - dim as f64 + mahalanobis + trace);
    Ok(kl.max(0.0))
}

/// Influence functions `psi_i = -H^{-1} grad_i` for every sample.
pub fn influence_functions(per_sample_gradients: &[Vec<f64>], hessian: &SpdMatrix) -> Result<Vec<Vec<f64>>> {
    let dim = hessian.dim();
    if per_sample_gradients.iter().any(|g| g.len() != dim) {
        return Err(Error::input("gradient dimension differs from the Hessian"));
    }
    let factor = hessian.factor("Hessian")?;
    let condition = hessian.condition_number();
    if !condition.is_finite() || condition > 1e12 {
        return Err(Error::Numerical {
            message: "Hessian is numerically singular".into(),
            condition,
        });
    }
    let n = per_sample_gradients.len();
    let grads = DMatrix::from_fn(dim, n, |r, c| per_sample_gradients[c][r]);
    let psi = -hessian.solve(&factor, &grads);
    Ok(psi.column_iter().map(|c| c.iter().copied().collect()).collect())
}

/// First-order parameter shift under sample reweighting `xi`:
/// `(1/n) * sum_i (xi_i - 1) psi_i`.
pub fn influence_shift(per_sample_gradients: &[Vec<f64>], hessian: &SpdMatrix, weights: &[f64]) -> Result<Vec<f64>> {
    let n = per_sample_gradients.len();
    if weights.len() != n || n == 0 {
        return Err(Error::input(format!(
            "need one bootstrap weight per sample: {} weights, {} samples",
            weights.len(),
            n
        )));
    }
    let psi = influence_functions(per_sample_gradients, hessian)?;
    let mut shift = vec![0.0; hessian.dim()];
    for (p, &xi) in psi.iter().zip(weights) {
        for (s, v) in shift.iter_mut().zip(p) {
            *s += (xi - 1.0) * v;
        }
    }
    shift.iter_mut().for_each(|s| *s /= n as f64);
    Ok(shift)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FisherCovariance {
    /// Diagonal of `F^{-1} / n`.
    pub variances: Vec<f64>,
    /// Every Fisher entry hit the floor (all-zero gradients).
    pub degenerate: bool,
}

/// Diagonal empirical Fisher `(1/T) sum_t grad_t^2`, floored at [`FISHER_FLOOR`],
/// inverted and scaled by `1/n`.
pub fn fisher_covariance(log: &GradientLog, n: usize) -> Result<FisherCovariance> {
    if log.is_empty() {
        return Err(Error::input("gradient log is empty"));
    }
    if n == 0 {
        return Err(Error::input("sample count must be positive"));
    }
    let fisher = diagonal_fisher(log);
    let degenerate = fisher.iter().all(|&f| f < FISHER_FLOOR);
    let variances = fisher
        .iter()
        .map(|&f| 1.0 / (n as f64 * f.max(FISHER_FLOOR)))
        .collect();
    Ok(FisherCovariance {
        variances,
        degenerate,
    })
}

pub fn diagonal_fisher(log: &GradientLog) -> Vec<f64> {
    let mut fisher = vec![0.0; log.dim()];
    for g in log.iter() {
        for (f, v) in fisher.iter_mut().zip(g) {
            *f += v * v;
        }
    }
    let t = log.len() as f64;
    fisher.iter_mut().for_each(|f| *f /= t);
    fisher
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn diag_gaussian(mean: Vec<f64>, var: Vec<f64>) -> Gaussian {
        Gaussian {
            mean,
            covariance: SpdMatrix::Diagonal(var),
        }
    }

    #[test]
    fn quadratic_mean_examples() {
        let c = -1.7;
        let snaps = vec![vec![c; 3]; 4];
        let views: Vec<&[f64]> = snaps.iter().map(Vec::as_slice).collect();
        let out = moving_quadratic_mean(&[c.abs(); 3], &views, 0.9).unwrap();
        for v in out {
            assert!((v - c.abs()).abs() < 1e-15);
        }
        let single = [-0.3, 2.0];
        let out = moving_quadratic_mean(&[9.0, 9.0], &[&single], 0.0).unwrap();
        assert_eq!(out, vec![0.3, 2.0]);
        let out = moving_quadratic_mean(&[2.0], &[&[0.0]], 0.5).unwrap();
        assert!((out[0] - 2f64.sqrt()).abs() < 1e-15);
        assert!(moving_quadratic_mean(&[1.0], &[&[1.0, 2.0]], 0.5).is_err());
        assert!(moving_quadratic_mean(&[1.0], &[&[1.0]], 1.0).is_err());
    }

    #[test]
    fn moving_average_window_slides() {
        let mut avg = MovingAverage::new(&[-1.0], 0.0, 2, MeanKind::Quadratic).unwrap();
        assert_eq!(avg.current(), &[1.0]);
        avg.update(&[3.0]).unwrap();
        assert_eq!(avg.current(), &[3.0]);
        avg.update(&[4.0]).unwrap();
        assert!((avg.current()[0] - 12.5f64.sqrt()).abs() < 1e-15);
        avg.update(&[0.0]).unwrap();
        assert!((avg.current()[0] - 8f64.sqrt()).abs() < 1e-15);

        let mut signed = MovingAverage::new(&[-1.0], 0.5, 1, MeanKind::Signed).unwrap();
        signed.update(&[-3.0]).unwrap();
        assert_eq!(signed.current(), &[-2.0]);
    }

    #[test]
    fn mi_examples() {
        let log = GradientLog::from_entries(vec![vec![1.0, 2.0], vec![-0.5, 4.0]]).unwrap();
        assert_eq!(estimate_mi(&[0.0, 0.0], &log, 10).unwrap().value, 0.0);

        let orth = GradientLog::from_entries(vec![vec![0.0, 1.0], vec![0.0, -3.0]]).unwrap();
        assert_eq!(estimate_mi(&[2.0, 0.0], &orth, 10).unwrap().value, 0.0);

        let one = GradientLog::from_entries(vec![vec![0.3, 0.0]]).unwrap();
        let est = estimate_mi(&[1.0, 5.0], &one, 10).unwrap();
        assert!((est.value - 0.9).abs() < 1e-12);
        assert_eq!((est.n, est.t), (10, 1));

        assert!(estimate_mi(&[1.0], &GradientLog::new(1, 5), 10).is_err());
        assert!(estimate_mi(&[1.0], &log, 10).is_err());
    }

    #[test]
    fn gradient_log_evicts_oldest() {
        let mut log = GradientLog::new(1, 2);
        for v in [1.0, 2.0, 3.0] {
            log.push(vec![v]).unwrap();
        }
        let kept: Vec<f64> = log.iter().map(|g| g[0]).collect();
        assert_eq!(kept, vec![2.0, 3.0]);
        assert!(log.push(vec![1.0, 2.0]).is_err());
    }

    #[test]
    fn kl_closed_forms() {
        let same = diag_gaussian(vec![0.3, -1.0], vec![2.0, 0.5]);
        assert_eq!(gaussian_kl(&same, &same).unwrap(), 0.0);

        let shifted = gaussian_kl(&diag_gaussian(vec![1.0], vec![1.0]), &diag_gaussian(vec![0.0], vec![1.0])).unwrap();
        assert!((shifted - 0.5).abs() < 1e-9);

        let wide = gaussian_kl(&diag_gaussian(vec![0.0], vec![2.0]), &diag_gaussian(vec![0.0], vec![1.0])).unwrap();
        assert!((wide - 0.5 * (2.0 - 1.0 - 2f64.ln())).abs() < 1e-12);
        assert!((wide - 0.15343).abs() < 1e-5);
    }

    #[test]
    fn kl_is_asymmetric_and_dense_agrees_with_diagonal() {
        let p = diag_gaussian(vec![0.5, 1.0], vec![2.0, 0.3]);
        let q = diag_gaussian(vec![0.0, -1.0], vec![1.0, 1.5]);
        let pq = gaussian_kl(&p, &q).unwrap();
        let qp = gaussian_kl(&q, &p).unwrap();
        assert!((pq - qp).abs() > 1e-3);

        let dense = |g: &Gaussian| Gaussian {
            mean: g.mean.clone(),
            covariance: SpdMatrix::Dense(g.covariance.to_dense()),
        };
        assert!((gaussian_kl(&dense(&p), &dense(&q)).unwrap() - pq).abs() < 1e-12);
    }

    #[test]
    fn kl_rejects_non_pd() {
        let p = diag_gaussian(vec![0.0], vec![1.0]);
        let bad = diag_gaussian(vec![0.0], vec![-1.0]);
        assert!(matches!(gaussian_kl(&p, &bad), Err(Error::Numerical { .. })));
        let dense_bad = Gaussian {
            mean: vec![0.0, 0.0],
            covariance: SpdMatrix::Dense(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])),
        };
        let p2 = diag_gaussian(vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(matches!(gaussian_kl(&p2, &dense_bad), Err(Error::Numerical { .. })));
    }

    #[test]
    fn influence_shift_edge_cases() {
        let grads = vec![vec![1.0, -2.0], vec![0.5, 0.25], vec![-1.5, 1.75]];
        let h = SpdMatrix::Dense(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]));
        let zero = influence_shift(&grads, &h, &[1.0; 3]).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));

        let single = vec![vec![0.4, -0.8]];
        let shift = influence_shift(&single, &h, &[2.0]).unwrap();
        let psi = &influence_functions(&single, &h).unwrap()[0];
        assert_eq!(&shift, psi);

        let singular = SpdMatrix::Dense(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]));
        assert!(matches!(influence_shift(&grads, &singular, &[1.0; 3]), Err(Error::Numerical { .. })));
        assert!(influence_shift(&grads, &h, &[1.0; 2]).is_err());
    }

    #[test]
    fn fisher_single_gradient_and_floor() {
        let log = GradientLog::from_entries(vec![vec![2.0, 0.0, -1e-5]]).unwrap();
        let cov = fisher_covariance(&log, 10).unwrap();
        assert_eq!(cov.variances[0], 1.0 / (10.0 * 4.0));
        assert_eq!(cov.variances[1], 1.0 / (10.0 * FISHER_FLOOR));
        assert_eq!(cov.variances[2], 1.0 / (10.0 * 1e-10f64.max(FISHER_FLOOR)));
        assert!(!cov.degenerate);

        let zeros = GradientLog::from_entries(vec![vec![0.0, 0.0]; 3]).unwrap();
        let cov = fisher_covariance(&zeros, 5).unwrap();
        assert!(cov.degenerate);
        assert!(cov.variances.iter().all(|&v| v == 1.0 / (5.0 * FISHER_FLOOR)));
    }

    #[test]
    fn diagonal_fisher_matches_dense_outer_products() {
        // Orthonormal axes plus a generic set, compared against explicit outer-product sums.
        let sets = [
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![vec![0.3, -1.2, 2.0, 0.5], vec![1.1, 0.4, -0.7, 0.0], vec![-2.0, 0.9, 0.1, 3.0]],
        ];
        for grads in sets {
            let d = grads[0].len();
            let mut dense = DMatrix::<f64>::zeros(d, d);
            for g in &grads {
                let v = DVector::from_column_slice(g);
                dense += &v * v.transpose();
            }
            dense /= grads.len() as f64;
            let log = GradientLog::from_entries(grads).unwrap();
            let diag = diagonal_fisher(&log);
            for i in 0..d {
                assert_eq!(diag[i], dense[(i, i)]);
            }
        }
    }

    proptest! {
        #[test]
        fn mi_scales_quadratically(
            delta in proptest::collection::vec(-2.0f64..2.0, 4),
            grads in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 4), 1..8),
            alpha_exp in -3i32..4,
        ) {
            // Powers of two keep the scaling exact in floating point.
            let alpha = 2f64.powi(alpha_exp);
            let log = GradientLog::from_entries(grads).unwrap();
            let base = estimate_mi(&delta, &log, 17).unwrap().value;
            let scaled: Vec<f64> = delta.iter().map(|d| alpha * d).collect();
            let value = estimate_mi(&scaled, &log, 17).unwrap().value;
            prop_assert!(base >= 0.0);
            prop_assert_eq!(value, alpha * alpha * base);
        }

        #[test]
        fn kl_non_negative(
            m1 in proptest::collection::vec(-3.0f64..3.0, 3),
            m2 in proptest::collection::vec(-3.0f64..3.0, 3),
            v1 in proptest::collection::vec(0.05f64..5.0, 3),
            v2 in proptest::collection::vec(0.05f64..5.0, 3),
        ) {
            let kl = gaussian_kl(&diag_gaussian(m1, v1), &diag_gaussian(m2, v2)).unwrap();
            prop_assert!(kl >= 0.0);
        }
    }
}
