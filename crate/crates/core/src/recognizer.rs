//! Strategy registry: every recognition method behind one trait, selected
//! by name at runtime.
//!
//! ```
//! use ssvep_core::recognizer::{create, method_names};
//! assert!(method_names().contains(&"adtrca"));
//! let method = create("trca").unwrap();
//! assert_eq!(method.name(), "trca");
//! ```

use crate::adtrca::{adtrca_classify, adtrca_fit, AdTrcaConfig, AdTrcaModel};
use crate::cca::cca_classify;
use crate::data::{Dataset, Trial};
use crate::error::{Error, Result};
use crate::reference::{build_dictionary, ReferenceDictionary};
use crate::trca::{trca_classify, trca_fit, TrcaModel};

/// Everything a method may need besides the training trials.
#[derive(Debug, Clone, PartialEq)]
pub struct FitContext {
    /// Harmonics per stimulus in sinusoidal references.
    pub n_harmonics: usize,
    /// Adaptive-method settings (ARD iteration, debug hooks).
    pub adaptive: AdTrcaConfig,
}

impl Default for FitContext {
    fn default() -> Self {
        Self {
            n_harmonics: 5,
            adaptive: AdTrcaConfig::default(),
        }
    }
}

/// One classification outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub predicted: usize,
    pub features: Vec<f64>,
}

/// A recognition strategy that can be fitted to calibration data.
pub trait Recognizer: Send + Sync {
    fn name(&self) -> &'static str;
    fn fit(&self, train: &Dataset, ctx: &FitContext) -> Result<Box<dyn TrainedModel>>;
}

/// A fitted model ready to classify trials.
pub trait TrainedModel: Send + Sync {
    fn method(&self) -> &'static str;
    fn classify(&self, trial: &Trial) -> Result<Classification>;
}

fn dictionary_for(train: &Dataset, n_harmonics: usize) -> Result<ReferenceDictionary> {
    let n_samples = train
        .n_samples()
        .ok_or_else(|| Error::InsufficientData("dataset has no trials".into()))?;
    build_dictionary(
        train.stimulus_frequencies_hz(),
        n_harmonics,
        train.sampling_rate_hz(),
        n_samples,
    )
}

struct CcaMethod;

struct FittedCca {
    dict: ReferenceDictionary,
}

impl Recognizer for CcaMethod {
    fn name(&self) -> &'static str {
        "cca"
    }

    fn fit(&self, train: &Dataset, ctx: &FitContext) -> Result<Box<dyn TrainedModel>> {
        // Training-free: only the reference dictionary is derived from the
        // dataset's metadata.
        Ok(Box::new(FittedCca {
            dict: dictionary_for(train, ctx.n_harmonics)?,
        }))
    }
}

impl TrainedModel for FittedCca {
    fn method(&self) -> &'static str {
        "cca"
    }

    fn classify(&self, trial: &Trial) -> Result<Classification> {
        let (predicted, feature) = cca_classify(trial, &self.dict)?;
        Ok(Classification {
            predicted,
            features: feature.rho,
        })
    }
}

struct TrcaMethod {
    ensemble: bool,
}

pub struct FittedTrca {
    pub model: TrcaModel,
    pub ensemble: bool,
}

impl Recognizer for TrcaMethod {
    fn name(&self) -> &'static str {
        if self.ensemble {
            "trca-ensemble"
        } else {
            "trca"
        }
    }

    fn fit(&self, train: &Dataset, _ctx: &FitContext) -> Result<Box<dyn TrainedModel>> {
        Ok(Box::new(FittedTrca {
            model: trca_fit(train)?,
            ensemble: self.ensemble,
        }))
    }
}

impl TrainedModel for FittedTrca {
    fn method(&self) -> &'static str {
        if self.ensemble {
            "trca-ensemble"
        } else {
            "trca"
        }
    }

    fn classify(&self, trial: &Trial) -> Result<Classification> {
        let (predicted, features) = trca_classify(&self.model, trial, self.ensemble)?;
        Ok(Classification {
            predicted,
            features,
        })
    }
}

struct AdTrcaMethod {
    ensemble: bool,
}

pub struct FittedAdTrca {
    pub model: AdTrcaModel,
    pub ensemble: bool,
}

impl Recognizer for AdTrcaMethod {
    fn name(&self) -> &'static str {
        if self.ensemble {
            "adtrca-ensemble"
        } else {
            "adtrca"
        }
    }

    fn fit(&self, train: &Dataset, ctx: &FitContext) -> Result<Box<dyn TrainedModel>> {
        let dict = dictionary_for(train, ctx.n_harmonics)?;
        Ok(Box::new(FittedAdTrca {
            model: adtrca_fit(train, &dict, &ctx.adaptive)?,
            ensemble: self.ensemble,
        }))
    }
}

impl TrainedModel for FittedAdTrca {
    fn method(&self) -> &'static str {
        if self.ensemble {
            "adtrca-ensemble"
        } else {
            "adtrca"
        }
    }

    fn classify(&self, trial: &Trial) -> Result<Classification> {
        let (predicted, features) = adtrca_classify(&self.model, trial, self.ensemble)?;
        Ok(Classification {
            predicted,
            features,
        })
    }
}

/// Names accepted by [`create`], in registry order.
pub fn method_names() -> &'static [&'static str] {
    &["cca", "trca", "trca-ensemble", "adtrca", "adtrca-ensemble"]
}

/// Looks a method up by name.
pub fn create(name: &str) -> Result<Box<dyn Recognizer>> {
    match name {
        "cca" => Ok(Box::new(CcaMethod)),
        "trca" => Ok(Box::new(TrcaMethod { ensemble: false })),
        "trca-ensemble" => Ok(Box::new(TrcaMethod { ensemble: true })),
        "adtrca" => Ok(Box::new(AdTrcaMethod { ensemble: false })),
        "adtrca-ensemble" => Ok(Box::new(AdTrcaMethod { ensemble: true })),
        other => Err(Error::UnknownMethod {
            name: other.to_string(),
            available: method_names().to_vec(),
        }),
    }
}

/// Rebuilds a fitted TRCA model (for example one loaded from disk) as a
/// trait object.
pub fn wrap_trca(model: TrcaModel, ensemble: bool) -> Box<dyn TrainedModel> {
    Box::new(FittedTrca { model, ensemble })
}

/// Rebuilds a fitted adaptive model as a trait object.
pub fn wrap_adtrca(model: AdTrcaModel, ensemble: bool) -> Box<dyn TrainedModel> {
    Box::new(FittedAdTrca { model, ensemble })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::centralize;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn dataset(seed: u64) -> Dataset {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut trials = Vec::new();
        for b in 0..3 {
            for s in 0..3 {
                let samples = Array2::from_shape_fn((2, 64), |_| rng.random::<f64>() - 0.5);
                trials.push(centralize(&Trial::new(samples, s, b).unwrap()));
            }
        }
        Dataset::new(
            trials,
            128.0,
            vec![8.0, 10.0, 12.0],
            3,
            vec!["O1".into(), "O2".into()],
        )
        .unwrap()
    }

    #[test]
    fn registry_knows_all_methods() {
        for &name in method_names() {
            let method = create(name).unwrap();
            assert_eq!(method.name(), name);
        }
        assert!(matches!(create("psda"), Err(Error::UnknownMethod { .. })));
    }

    #[test]
    fn every_method_fits_and_classifies() {
        let ds = dataset(1);
        let ctx = FitContext {
            n_harmonics: 2,
            ..FitContext::default()
        };
        for &name in method_names() {
            let method = create(name).unwrap();
            let model = method.fit(&ds, &ctx).unwrap();
            assert_eq!(model.method(), name);
            let out = model.classify(ds.trial(0, 0).unwrap()).unwrap();
            assert_eq!(out.features.len(), 3);
            assert!(out.predicted < 3);
        }
    }
}
