//! Task-related component analysis: spatial-filter training, template
//! construction, classification, and the ensemble variant.
//!
//! Per stimulus the filter maximizes `w^T A A^T w / w^T B B^T w`, where
//! `A` is the mean training trial and `B` the horizontal concatenation of
//! all training trials of that stimulus.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::cca::argmax_lowest;
use crate::data::{Dataset, Trial};
use crate::error::{Error, Result};
use crate::linalg::{self, SymmetricPencil};

/// Trained per-stimulus spatial filters and templates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrcaModel {
    /// Unit-norm spatial filters, one per stimulus.
    pub filters: Vec<Array1<f64>>,
    /// Mean training trial per stimulus, centralized, unfiltered.
    pub templates: Vec<Array2<f64>>,
    /// Filter bank with one column per stimulus.
    pub ensemble: Option<Array2<f64>>,
}

impl TrcaModel {
    pub fn n_stimuli(&self) -> usize {
        self.filters.len()
    }

    pub fn n_channels(&self) -> usize {
        self.filters.first().map_or(0, Array1::len)
    }
}

/// Mean trial and the spatial filter of one stimulus.
///
/// Shared with the adaptive variant so that an identity temporal filter
/// reproduces plain TRCA exactly, operation for operation.
pub(crate) fn spatial_filter_and_template(
    trials: &[ArrayView2<f64>],
) -> Result<(Array1<f64>, Array2<f64>)> {
    let first = trials
        .first()
        .ok_or_else(|| Error::InsufficientData("no trials for stimulus".into()))?;
    let (n_ch, n_t) = first.dim();
    let mut mean = Array2::<f64>::zeros((n_ch, n_t));
    let mut denom = Array2::<f64>::zeros((n_ch, n_ch));
    for x in trials {
        if x.dim() != (n_ch, n_t) {
            return Err(Error::InvalidInput(
                "trials of one stimulus differ in shape".into(),
            ));
        }
        mean += x;
        denom += &x.dot(&x.t());
    }
    mean /= trials.len() as f64;
    let numer = mean.dot(&mean.t());
    let pencil = SymmetricPencil::new(numer, denom)?;
    let (_, w) = linalg::gen_eig_max(&pencil)?;
    Ok((w, mean))
}

pub(crate) fn stack_filters(filters: &[Array1<f64>]) -> Array2<f64> {
    let n_ch = filters[0].len();
    let mut bank = Array2::<f64>::zeros((n_ch, filters.len()));
    for (s, w) in filters.iter().enumerate() {
        bank.column_mut(s).assign(w);
    }
    bank
}

pub(crate) fn trials_by_stimulus(train: &Dataset) -> Result<Vec<Vec<&Trial>>> {
    (0..train.n_stimuli())
        .map(|s| {
            let trials = train.trials_of_stimulus(s);
            if trials.len() < 2 {
                return Err(Error::InsufficientData(format!(
                    "stimulus {s} has {} training trials, need at least 2",
                    trials.len()
                )));
            }
            Ok(trials)
        })
        .collect()
}

/// Trains one spatial filter and template per stimulus.
pub fn trca_fit(train: &Dataset) -> Result<TrcaModel> {
    let grouped = trials_by_stimulus(train)?;
    let fitted: Vec<(Array1<f64>, Array2<f64>)> = grouped
        .par_iter()
        .map(|trials| {
            let views: Vec<ArrayView2<f64>> = trials.iter().map(|t| t.samples().view()).collect();
            spatial_filter_and_template(&views)
        })
        .collect::<Result<_>>()?;
    let (filters, templates): (Vec<_>, Vec<_>) = fitted.into_iter().unzip();
    let ensemble = Some(stack_filters(&filters));
    Ok(TrcaModel {
        filters,
        templates,
        ensemble,
    })
}

pub(crate) fn check_channels(model_channels: usize, test: &Trial) -> Result<()> {
    if test.n_channels() != model_channels {
        return Err(Error::InvalidInput(format!(
            "test trial has {} channels but the model was trained on {}",
            test.n_channels(),
            model_channels
        )));
    }
    Ok(())
}

/// Correlation features against every stimulus template and the argmax
/// decision, ties broken toward the lowest index.
pub fn trca_classify(model: &TrcaModel, test: &Trial, ensemble: bool) -> Result<(usize, Vec<f64>)> {
    check_channels(model.n_channels(), test)?;
    if let Some(template) = model.templates.first() {
        if template.ncols() != test.n_samples() {
            return Err(Error::InvalidInput(format!(
                "test trial has {} samples but the model was trained on {}",
                test.n_samples(),
                template.ncols()
            )));
        }
    }
    if ensemble && model.ensemble.is_none() {
        return Err(Error::InvalidInput(
            "model has no ensemble filter bank".into(),
        ));
    }
    let x = test.samples();
    let mut features = Vec::with_capacity(model.n_stimuli());
    for s in 0..model.n_stimuli() {
        let template = &model.templates[s];
        let feature = if ensemble {
            let bank = model.ensemble.as_ref().unwrap();
            let proj_test = bank.t().dot(x);
            let proj_tmpl = bank.t().dot(template);
            linalg::matrix_corr(&proj_test.view(), &proj_tmpl.view())?
        } else {
            let w = &model.filters[s];
            let proj_test = w.dot(x);
            let proj_tmpl = w.dot(template);
            linalg::pearson(&proj_test.view(), &proj_tmpl.view())?
        };
        features.push(feature);
    }
    Ok((argmax_lowest(&features), features))
}
