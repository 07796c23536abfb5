//! Multitask sparse Bayesian regression with shared hyperparameters.
//!
//! All channels of all training trials of one stimulus are regressed on
//! the sinusoid dictionary as separate tasks sharing one precision vector
//! `a` and one noise precision `a0`. Evidence maximization drives most
//! dictionary precisions to infinity, leaving the temporal subspace the
//! trials actually occupy; the fitted posterior yields the temporal
//! filter `F = a0 * Phi * Sigma * Phi^T` applied to trials before TRCA.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::data::Trial;
use crate::error::{Error, Result};
use crate::linalg;
use crate::reference::ReferenceDictionary;

/// Noise precision is capped here when the residual vanishes.
const NOISE_PRECISION_CAP: f64 = 1e12;

/// One multitask regression problem: shared dictionary, one target column
/// per task.
#[derive(Debug, Clone, PartialEq)]
pub struct MtlProblem {
    phi: Array2<f64>,
    targets: Array2<f64>,
}

impl MtlProblem {
    pub fn new(phi: Array2<f64>, targets: Array2<f64>) -> Result<Self> {
        if phi.nrows() != targets.nrows() {
            return Err(Error::InvalidInput(format!(
                "dictionary has {} rows but targets have {}",
                phi.nrows(),
                targets.nrows()
            )));
        }
        if targets.ncols() == 0 {
            return Err(Error::InvalidInput("no regression tasks".into()));
        }
        if phi.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "dictionary or targets contain non-finite values".into(),
            ));
        }
        Ok(Self { phi, targets })
    }

    pub fn dictionary(&self) -> &Array2<f64> {
        &self.phi
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    pub fn n_samples(&self) -> usize {
        self.phi.nrows()
    }

    pub fn n_coefficients(&self) -> usize {
        self.phi.ncols()
    }

    pub fn n_tasks(&self) -> usize {
        self.targets.ncols()
    }
}

/// Stacks the training trials of one stimulus into the task matrix:
/// task `m * n_channels + ch` is channel `ch` of trial `m`.
pub fn build_problem(trials: &[&Trial], dict: &ReferenceDictionary) -> Result<MtlProblem> {
    let first = trials
        .first()
        .ok_or_else(|| Error::InvalidInput("no trials for stimulus".into()))?;
    let n_t = first.n_samples();
    let n_ch = first.n_channels();
    if dict.n_samples() != n_t {
        return Err(Error::InvalidInput(format!(
            "dictionary has {} rows but trials have {} samples",
            dict.n_samples(),
            n_t
        )));
    }
    let mut targets = Array2::<f64>::zeros((n_t, n_ch * trials.len()));
    for (m, trial) in trials.iter().enumerate() {
        if trial.n_samples() != n_t || trial.n_channels() != n_ch {
            return Err(Error::InvalidInput(
                "trials of one stimulus differ in shape".into(),
            ));
        }
        for ch in 0..n_ch {
            targets
                .column_mut(m * n_ch + ch)
                .assign(&trial.samples().row(ch));
        }
    }
    MtlProblem::new(dict.matrix().clone(), targets)
}

/// Fixed-point iteration settings.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArdConfig {
    pub max_iters: usize,
    pub tol: f64,
    pub a_init: f64,
    /// Defaults to `10 / variance of the stacked targets` when absent.
    pub a0_init: Option<f64>,
    pub prune_threshold: f64,
}

impl Default for ArdConfig {
    fn default() -> Self {
        Self {
            max_iters: 300,
            tol: 1e-3,
            a_init: 1.0,
            a0_init: None,
            prune_threshold: 1e8,
        }
    }
}

/// Fitted posterior and hyperparameters.
///
/// `sigma` and `mu` are stored full-size with zeroed rows/columns for
/// pruned coefficients; the posterior covariance is shared by all tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct ArdModel {
    pub a: Array1<f64>,
    pub a0: f64,
    pub sigma: Array2<f64>,
    pub mu: Array2<f64>,
    pub pruned: Vec<bool>,
    pub evidence_trace: Vec<f64>,
    pub n_iters: usize,
}

impl ArdModel {
    pub fn n_coefficients(&self) -> usize {
        self.a.len()
    }

    pub fn n_active(&self) -> usize {
        self.pruned.iter().filter(|&&p| !p).count()
    }

    /// Writes the per-iteration marginal log-likelihood as CSV.
    pub fn write_evidence_csv(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "iteration,log_evidence")?;
        for (i, v) in self.evidence_trace.iter().enumerate() {
            writeln!(w, "{i},{v}")?;
        }
        Ok(())
    }
}

struct Posterior {
    active: Vec<usize>,
    sigma: Array2<f64>,
    mu: Array2<f64>,
    /// log det of the precision matrix `a0 Phi^T Phi + A` on the active set.
    logdet_precision: f64,
}

fn posterior(
    phi_t_phi: &Array2<f64>,
    phi_t_y: &Array2<f64>,
    a: &Array1<f64>,
    a0: f64,
    pruned: &[bool],
    iteration: usize,
) -> Result<Posterior> {
    let active: Vec<usize> = (0..a.len()).filter(|&j| !pruned[j]).collect();
    let n_tasks = phi_t_y.ncols();
    if active.is_empty() {
        return Ok(Posterior {
            active,
            sigma: Array2::zeros((0, 0)),
            mu: Array2::zeros((0, n_tasks)),
            logdet_precision: 0.0,
        });
    }
    let mut m = phi_t_phi.select(Axis(0), &active).select(Axis(1), &active) * a0;
    for (k, &j) in active.iter().enumerate() {
        m[[k, k]] += a[j];
    }
    let l = linalg::cholesky(&m.view()).map_err(|e| Error::NumericalFailure {
        iteration,
        message: format!("posterior precision not factorizable: {e}"),
    })?;
    let logdet_precision = 2.0 * l.diag().mapv(f64::ln).sum();
    let eye = Array2::<f64>::eye(active.len());
    let linv = linalg::solve_lower(&l.view(), &eye.view());
    let sigma = linv.t().dot(&linv);
    let mu = sigma.dot(&phi_t_y.select(Axis(0), &active)) * a0;
    Ok(Posterior {
        active,
        sigma,
        mu,
        logdet_precision,
    })
}

/// Eq-style marginal log-likelihood from the active-set posterior, exact
/// up to rounding via the determinant and Woodbury identities.
fn evidence_from_posterior(
    post: &Posterior,
    a: &Array1<f64>,
    a0: f64,
    y_sq: &Array1<f64>,
    phi_t_y: &Array2<f64>,
    n_samples: usize,
) -> f64 {
    let n_tasks = y_sq.len();
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut logdet_c = -(n_samples as f64) * a0.ln() + post.logdet_precision;
    for &j in &post.active {
        logdet_c -= a[j].ln();
    }
    let mut quad_sum = 0.0;
    if post.active.is_empty() {
        quad_sum = a0 * y_sq.sum();
    } else {
        let g = phi_t_y.select(Axis(0), &post.active);
        let sg = post.sigma.dot(&g);
        for i in 0..n_tasks {
            let gi = g.column(i);
            quad_sum += a0 * y_sq[i] - a0 * a0 * gi.dot(&sg.column(i));
        }
    }
    -0.5 * (n_tasks as f64 * (n_samples as f64 * ln_2pi + logdet_c) + quad_sum)
}

/// Evidence-maximizing fixed-point iteration over `a` and `a0`.
///
/// Each pass computes the shared posterior, re-estimates every active
/// precision from its posterior mean energy, re-estimates the noise
/// precision from the stacked residual, and prunes coefficients whose
/// precision crosses the threshold. The recorded evidence trace has one
/// entry per visited hyperparameter state, including the final one.
pub fn ard_fit(problem: &MtlProblem, config: &ArdConfig) -> Result<ArdModel> {
    let p = problem.n_coefficients();
    let n_t = problem.n_samples();
    let n_tasks = problem.n_tasks();
    let phi = problem.dictionary();
    let targets = problem.targets();

    let phi_t_phi = phi.t().dot(phi);
    let phi_t_y = phi.t().dot(targets);
    let y_sq = Array1::from_iter(targets.columns().into_iter().map(|c| c.dot(&c)));

    let mean_square = y_sq.sum() / (n_t * n_tasks) as f64;
    let mut a0 = config.a0_init.unwrap_or(if mean_square > 1e-300 {
        10.0 / mean_square
    } else {
        1.0
    });
    let mut a = Array1::from_elem(p, config.a_init);
    let mut pruned = vec![false; p];
    let mut trace: Vec<f64> = Vec::new();
    let mut converged = false;
    let mut iter = 0usize;

    let final_post = loop {
        let post = posterior(&phi_t_phi, &phi_t_y, &a, a0, &pruned, iter)?;
        let ev = evidence_from_posterior(&post, &a, a0, &y_sq, &phi_t_y, n_t);
        if let Some(&prev) = trace.last() {
            if ev < prev - 1e-6 {
                eprintln!(
                    "warning: marginal likelihood decreased at iteration {iter}: {prev} -> {ev}"
                );
            }
        }
        trace.push(ev);
        if converged || iter >= config.max_iters || post.active.is_empty() {
            break post;
        }
        iter += 1;

        // Residual over all tasks for the noise update.
        let fitted = phi.select(Axis(1), &post.active).dot(&post.mu);
        let resid_sq = targets
            .iter()
            .zip(fitted.iter())
            .map(|(y, f)| (y - f) * (y - f))
            .sum::<f64>();

        let mut gamma_sum = 0.0;
        let mut max_rel_change = 0.0f64;
        for (k, &j) in post.active.iter().enumerate() {
            let gamma = (1.0 - a[j] * post.sigma[[k, k]]).max(1e-12);
            gamma_sum += gamma;
            let mu_sq = post.mu.row(k).dot(&post.mu.row(k));
            let new_a = if mu_sq > 1e-300 {
                n_tasks as f64 * gamma / mu_sq
            } else {
                f64::INFINITY
            };
            if !new_a.is_finite() || new_a <= 0.0 || new_a > config.prune_threshold {
                pruned[j] = true;
                a[j] = config.prune_threshold;
            } else {
                max_rel_change = max_rel_change.max((new_a - a[j]).abs() / a[j]);
                a[j] = new_a;
            }
        }
        let degrees = n_tasks as f64 * (n_t as f64 - gamma_sum);
        let new_a0 = if resid_sq > 1e-300 && degrees > 0.0 {
            (degrees / resid_sq).min(NOISE_PRECISION_CAP)
        } else {
            NOISE_PRECISION_CAP
        };
        max_rel_change = max_rel_change.max((new_a0 - a0).abs() / a0);
        a0 = new_a0;

        if !a0.is_finite() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure {
                iteration: iter,
                message: "hyperparameters diverged to non-finite values".into(),
            });
        }
        if max_rel_change < config.tol {
            converged = true;
        }
    };

    let mut sigma = Array2::<f64>::zeros((p, p));
    let mut mu = Array2::<f64>::zeros((p, n_tasks));
    for (k, &j) in final_post.active.iter().enumerate() {
        mu.row_mut(j).assign(&final_post.mu.row(k));
        for (k2, &j2) in final_post.active.iter().enumerate() {
            sigma[[j, j2]] = final_post.sigma[[k, k2]];
        }
    }
    Ok(ArdModel {
        a,
        a0,
        sigma,
        mu,
        pruned,
        evidence_trace: trace,
        n_iters: iter,
    })
}

/// Marginal log-likelihood of hyperparameters, summed over tasks,
/// evaluated through a Cholesky factorization of the full marginal
/// covariance `a0^-1 I + Phi A^-1 Phi^T`.
pub fn marginal_log_likelihood(a: &ArrayView1<f64>, a0: f64, problem: &MtlProblem) -> Result<f64> {
    if a0 <= 0.0 || a.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidInput(
            "hyperparameters must be positive".into(),
        ));
    }
    if a.len() != problem.n_coefficients() {
        return Err(Error::InvalidInput(format!(
            "{} hyperparameters for {} dictionary columns",
            a.len(),
            problem.n_coefficients()
        )));
    }
    let n = problem.n_samples();
    let phi = problem.dictionary();
    let scaled = phi / &a.mapv(f64::sqrt);
    let mut c = scaled.dot(&scaled.t());
    for i in 0..n {
        c[[i, i]] += 1.0 / a0;
    }
    let l = linalg::cholesky(&c.view()).map_err(|e| Error::NumericalFailure {
        iteration: 0,
        message: format!("marginal covariance not positive definite: {e}"),
    })?;
    let logdet = 2.0 * l.diag().mapv(f64::ln).sum();
    let z = linalg::solve_lower(&l.view(), &problem.targets().view());
    let ln_2pi = (2.0 * std::f64::consts::PI).ln();
    let mut total = 0.0;
    for i in 0..problem.n_tasks() {
        let quad = z.column(i).dot(&z.column(i));
        total += -0.5 * (n as f64 * ln_2pi + logdet + quad);
    }
    Ok(total)
}

/// Temporal filter `F` applied to trials by right multiplication.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalFilter {
    matrix: Array2<f64>,
}

impl TemporalFilter {
    pub fn identity(n_samples: usize) -> Self {
        Self {
            matrix: Array2::eye(n_samples),
        }
    }

    pub fn from_matrix(matrix: Array2<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::InvalidInput(format!(
                "temporal filter must be square, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { matrix })
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.nrows()
    }

    /// `X F` for a channel-major trial matrix.
    pub fn apply(&self, samples: &ArrayView2<f64>) -> Array2<f64> {
        samples.dot(&self.matrix)
    }

    /// The time-weighting kernel `C = F F^T` of the filtered eigenproblem.
    pub fn gram(&self) -> Array2<f64> {
        self.matrix.dot(&self.matrix.t())
    }
}

/// `F = a0 Phi Sigma Phi^T`; pruned dictionary columns contribute zero.
pub fn temporal_filter(model: &ArdModel, dict: &ReferenceDictionary) -> Result<TemporalFilter> {
    let phi = dict.matrix();
    if phi.ncols() != model.n_coefficients() {
        return Err(Error::InvalidInput(format!(
            "dictionary has {} columns but the model was fitted with {}",
            phi.ncols(),
            model.n_coefficients()
        )));
    }
    let matrix = phi.dot(&model.sigma).dot(&phi.t()) * model.a0;
    Ok(TemporalFilter { matrix })
}
