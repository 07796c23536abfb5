//! Training-free CCA frequency detection.
//!
//! The feature for each stimulus is the principal canonical correlation
//! between the trial and that stimulus's sinusoidal template, obtained as
//! the square root of the largest generalized eigenvalue of the pencil
//! `(X Y^T (Y Y^T)^-1 Y X^T, X X^T)` with Y holding the template rows.

use ndarray::{Array2, ArrayView2};

use crate::data::Trial;
use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricPencil};
use crate::reference::{ReferenceDictionary, ReferenceTemplate};

/// Per-stimulus principal canonical correlations.
#[derive(Debug, Clone, PartialEq)]
pub struct CcaFeature {
    pub rho: Vec<f64>,
}

/// Principal canonical correlation between a centralized trial and one
/// reference template.
pub fn cca_rho(trial: &Trial, template: &ReferenceTemplate) -> Result<f64> {
    if template.n_samples() != trial.n_samples() {
        return Err(Error::InvalidInput(format!(
            "template has {} samples but trial has {}",
            template.n_samples(),
            trial.n_samples()
        )));
    }
    let x = trial.samples();
    let y = template.matrix().t().to_owned(); // [2*N_h x N_t]
    rho_from_views(&x.view(), &y.view())
}

fn ridged(m: &Array2<f64>) -> Array2<f64> {
    let n = m.nrows();
    let ridge = linalg::DENOMINATOR_RIDGE * m.diag().sum() / n as f64;
    let mut out = m.clone();
    for i in 0..n {
        out[[i, i]] += ridge;
    }
    out
}

fn rho_from_views(x: &ArrayView2<f64>, y: &ArrayView2<f64>) -> Result<f64> {
    let cxx = x.dot(&x.t());
    let cyy = y.dot(&y.t());
    let cyx = y.dot(&x.t());
    // S = (Y X^T)^T (Y Y^T)^-1 (Y X^T) as a Gram product so it stays symmetric.
    let l = linalg::cholesky(&ridged(&cyy).view())?;
    let z = linalg::solve_lower(&l.view(), &cyx.view());
    let s = z.t().dot(&z);
    let pencil = SymmetricPencil::new(s, cxx)?;
    let (lambda, _) = linalg::gen_eig_max(&pencil)?;
    Ok(lambda.clamp(0.0, 1.0).sqrt())
}

/// Index of the template with the largest canonical correlation, ties
/// broken toward the lowest stimulus index.
pub fn cca_classify(trial: &Trial, dict: &ReferenceDictionary) -> Result<(usize, CcaFeature)> {
    let mut rho = Vec::with_capacity(dict.n_stimuli());
    for s in 0..dict.n_stimuli() {
        rho.push(cca_rho(trial, &dict.template(s))?);
    }
    let predicted = argmax_lowest(&rho);
    Ok((predicted, CcaFeature { rho }))
}

/// First index attaining the maximum.
pub(crate) fn argmax_lowest(features: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in features.iter().enumerate().skip(1) {
        if v > features[best] {
            best = i;
        }
    }
    best
}
