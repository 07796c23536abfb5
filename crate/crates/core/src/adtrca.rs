//! Adaptive TRCA: per-stimulus temporal filtering learned by multitask
//! ARD, followed by TRCA spatial filtering on the filtered trials.
//!
//! With every temporal filter forced to the identity the method reduces
//! to plain TRCA, operation for operation; the `identity_filter` hook
//! exists to exercise exactly that.

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cca::argmax_lowest;
use crate::data::{Dataset, Trial};
use crate::error::{Error, Result};
use crate::linalg;
use crate::mtl_ard::{ard_fit, build_problem, temporal_filter, ArdConfig, TemporalFilter};
use crate::reference::ReferenceDictionary;
use crate::trca::{check_channels, spatial_filter_and_template, stack_filters, trials_by_stimulus};

/// How test trials are temporally filtered during classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFilterMode {
    /// Filter the test trial with the candidate class's own filter.
    #[default]
    PerClass,
    /// Filter once with the mean of all per-class filters.
    SharedMean,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AdTrcaConfig {
    pub ard: ArdConfig,
    /// Forces every temporal filter to the identity (degenerates to TRCA).
    pub identity_filter: bool,
    pub test_filter: TestFilterMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdTrcaModel {
    /// Per-stimulus temporal filters.
    pub temporal_filters: Vec<TemporalFilter>,
    /// Unit-norm spatial filters trained on filtered trials.
    pub filters: Vec<Array1<f64>>,
    /// Mean filtered training trial per stimulus.
    pub templates: Vec<Array2<f64>>,
    /// Filter bank with one column per stimulus.
    pub ensemble: Option<Array2<f64>>,
    pub test_filter: TestFilterMode,
}

impl AdTrcaModel {
    pub fn n_stimuli(&self) -> usize {
        self.filters.len()
    }

    pub fn n_channels(&self) -> usize {
        self.filters.first().map_or(0, Array1::len)
    }

    fn shared_filter(&self) -> TemporalFilter {
        let n = self.temporal_filters[0].n_samples();
        let mut mean = Array2::<f64>::zeros((n, n));
        for f in &self.temporal_filters {
            mean += f.matrix();
        }
        mean /= self.temporal_filters.len() as f64;
        TemporalFilter::from_matrix(mean).expect("mean of square filters is square")
    }
}

fn with_stimulus(s: usize, e: Error) -> Error {
    match e {
        Error::NumericalFailure { iteration, message } => Error::NumericalFailure {
            iteration,
            message: format!("stimulus {s}: {message}"),
        },
        other => Error::InvalidInput(format!("stimulus {s}: {other}")),
    }
}

/// Learns a temporal filter per stimulus, filters that stimulus's trials,
/// and trains the spatial filter on the filtered pencil.
pub fn adtrca_fit(
    train: &Dataset,
    dict: &ReferenceDictionary,
    config: &AdTrcaConfig,
) -> Result<AdTrcaModel> {
    let grouped = trials_by_stimulus(train)?;
    let n_t = train
        .n_samples()
        .ok_or_else(|| Error::InsufficientData("empty dataset".into()))?;
    if dict.n_samples() != n_t {
        return Err(Error::InvalidInput(format!(
            "dictionary has {} rows but trials have {n_t} samples",
            dict.n_samples()
        )));
    }
    let fitted: Vec<(TemporalFilter, Array1<f64>, Array2<f64>)> = grouped
        .par_iter()
        .enumerate()
        .map(|(s, trials)| {
            let filter = if config.identity_filter {
                TemporalFilter::identity(n_t)
            } else {
                let problem = build_problem(trials, dict).map_err(|e| with_stimulus(s, e))?;
                let ard = ard_fit(&problem, &config.ard).map_err(|e| with_stimulus(s, e))?;
                temporal_filter(&ard, dict).map_err(|e| with_stimulus(s, e))?
            };
            let filtered: Vec<Array2<f64>> = trials
                .iter()
                .map(|t| filter.apply(&t.samples().view()))
                .collect();
            let views: Vec<ArrayView2<f64>> = filtered.iter().map(|x| x.view()).collect();
            let (w, template) =
                spatial_filter_and_template(&views).map_err(|e| with_stimulus(s, e))?;
            Ok((filter, w, template))
        })
        .collect::<Result<_>>()?;

    let mut temporal_filters = Vec::with_capacity(fitted.len());
    let mut filters = Vec::with_capacity(fitted.len());
    let mut templates = Vec::with_capacity(fitted.len());
    for (f, w, t) in fitted {
        temporal_filters.push(f);
        filters.push(w);
        templates.push(t);
    }
    let ensemble = Some(stack_filters(&filters));
    Ok(AdTrcaModel {
        temporal_filters,
        filters,
        templates,
        ensemble,
        test_filter: config.test_filter,
    })
}

/// Correlation features against every filtered template; the test trial
/// is filtered with the candidate class's filter (or the shared mean
/// filter, per the model's mode).
pub fn adtrca_classify(
    model: &AdTrcaModel,
    test: &Trial,
    ensemble: bool,
) -> Result<(usize, Vec<f64>)> {
    check_channels(model.n_channels(), test)?;
    if ensemble && model.ensemble.is_none() {
        return Err(Error::InvalidInput(
            "model has no ensemble filter bank".into(),
        ));
    }
    if model.temporal_filters[0].n_samples() != test.n_samples() {
        return Err(Error::InvalidInput(format!(
            "test trial has {} samples but the model was trained on {}",
            test.n_samples(),
            model.temporal_filters[0].n_samples()
        )));
    }
    let shared = match model.test_filter {
        TestFilterMode::SharedMean => Some(model.shared_filter().apply(&test.samples().view())),
        TestFilterMode::PerClass => None,
    };
    let mut features = Vec::with_capacity(model.n_stimuli());
    for s in 0..model.n_stimuli() {
        let filtered;
        let x = match &shared {
            Some(x) => x,
            None => {
                filtered = model.temporal_filters[s].apply(&test.samples().view());
                &filtered
            }
        };
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
