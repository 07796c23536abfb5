//! Trial and dataset types shared by every recognition method.
//!
//! A [`Trial`] is one multi-channel EEG epoch stored channel-major
//! (`n_channels x n_samples`). A [`Dataset`] is the collection of trials
//! for one subject together with the acquisition metadata needed to build
//! sinusoidal references (sampling rate, stimulus frequencies, channel
//! names).

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

/// One EEG epoch, channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    samples: Array2<f64>,
    stimulus_index: usize,
    block_index: usize,
}

impl Trial {
    pub fn new(samples: Array2<f64>, stimulus_index: usize, block_index: usize) -> Result<Self> {
        if samples.nrows() < 1 || samples.ncols() < 2 {
            return Err(Error::InvalidInput(format!(
                "trial needs at least 1 channel and 2 samples, got {}x{}",
                samples.nrows(),
                samples.ncols()
            )));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "trial contains non-finite samples".into(),
            ));
        }
        Ok(Self {
            samples,
            stimulus_index,
            block_index,
        })
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn stimulus_index(&self) -> usize {
        self.stimulus_index
    }

    pub fn block_index(&self) -> usize {
        self.block_index
    }

    pub fn n_channels(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.samples.ncols()
    }

    /// Replaces the sample matrix, keeping stimulus/block labels.
    pub fn with_samples(&self, samples: Array2<f64>) -> Result<Self> {
        Trial::new(samples, self.stimulus_index, self.block_index)
    }
}

/// Removes the mean of every channel.
pub fn centralize(trial: &Trial) -> Trial {
    let mut samples = trial.samples().clone();
    for mut row in samples.rows_mut() {
        let mean = row.sum() / row.len() as f64;
        row.mapv_inplace(|v| v - mean);
    }
    Trial {
        samples,
        stimulus_index: trial.stimulus_index,
        block_index: trial.block_index,
    }
}

/// Rounds half away from zero, so sample offsets are platform independent.
pub(crate) fn seconds_to_samples(seconds: f64, fs: f64) -> usize {
    (seconds * fs).round() as usize
}

/// Extracts the sub-trial of `round(duration_s*fs)` samples starting at
/// sample `round(latency_s*fs)`.
pub fn window(trial: &Trial, latency_s: f64, duration_s: f64, fs: f64) -> Result<Trial> {
    if latency_s < 0.0 || duration_s < 0.0 || fs <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "window offsets must be non-negative and fs positive (latency {latency_s}, duration {duration_s}, fs {fs})"
        )));
    }
    let start = seconds_to_samples(latency_s, fs);
    let len = seconds_to_samples(duration_s, fs);
    let end = start + len;
    if end > trial.n_samples() {
        return Err(Error::OutOfRange(format!(
            "window [{start}, {end}) exceeds trial length {}",
            trial.n_samples()
        )));
    }
    let samples = trial.samples.slice(ndarray::s![.., start..end]).to_owned();
    Trial::new(samples, trial.stimulus_index, trial.block_index)
}

/// Trials plus acquisition metadata for one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    trials: Vec<Trial>,
    sampling_rate_hz: f64,
    stimulus_frequencies_hz: Vec<f64>,
    n_blocks: usize,
    channel_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        trials: Vec<Trial>,
        sampling_rate_hz: f64,
        stimulus_frequencies_hz: Vec<f64>,
        n_blocks: usize,
        channel_names: Vec<String>,
    ) -> Result<Self> {
        if sampling_rate_hz <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "sampling rate must be positive, got {sampling_rate_hz}"
            )));
        }
        if stimulus_frequencies_hz.is_empty() {
            return Err(Error::InvalidInput("no stimulus frequencies".into()));
        }
        let nyquist = sampling_rate_hz / 2.0;
        for &f in &stimulus_frequencies_hz {
            if !(f > 0.0 && f < nyquist) {
                return Err(Error::InvalidInput(format!(
                    "stimulus frequency {f} Hz outside (0, {nyquist}) Hz"
                )));
            }
        }
        let n_stimuli = stimulus_frequencies_hz.len();
        let mut seen = std::collections::HashSet::new();
        for t in &trials {
            if t.stimulus_index() >= n_stimuli {
                return Err(Error::InvalidInput(format!(
                    "stimulus index {} out of range for {} stimuli",
                    t.stimulus_index(),
                    n_stimuli
                )));
            }
            if t.block_index() >= n_blocks {
                return Err(Error::InvalidInput(format!(
                    "block index {} out of range for {} blocks",
                    t.block_index(),
                    n_blocks
                )));
            }
            if !seen.insert((t.block_index(), t.stimulus_index())) {
                return Err(Error::InvalidInput(format!(
                    "duplicate trial for block {} stimulus {}",
                    t.block_index(),
                    t.stimulus_index()
                )));
            }
            if t.n_channels() != channel_names.len() {
                return Err(Error::InvalidInput(format!(
                    "trial has {} channels but {} channel names were given",
                    t.n_channels(),
                    channel_names.len()
                )));
            }
        }
        if let Some(first) = trials.first() {
            let n_samples = first.n_samples();
            if trials.iter().any(|t| t.n_samples() != n_samples) {
                return Err(Error::InvalidInput(
                    "all trials must share the same sample count".into(),
                ));
            }
        }
        Ok(Self {
            trials,
            sampling_rate_hz,
            stimulus_frequencies_hz,
            n_blocks,
            channel_names,
        })
    }

    pub fn trials(&self) -> &[Trial] {
        &self.trials
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn stimulus_frequencies_hz(&self) -> &[f64] {
        &self.stimulus_frequencies_hz
    }

    pub fn n_stimuli(&self) -> usize {
        self.stimulus_frequencies_hz.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_samples(&self) -> Option<usize> {
        self.trials.first().map(Trial::n_samples)
    }

    pub fn trial(&self, block: usize, stimulus: usize) -> Option<&Trial> {
        self.trials
            .iter()
            .find(|t| t.block_index() == block && t.stimulus_index() == stimulus)
    }

    pub fn trials_of_stimulus(&self, stimulus: usize) -> Vec<&Trial> {
        let mut trials: Vec<&Trial> = self
            .trials
            .iter()
            .filter(|t| t.stimulus_index() == stimulus)
            .collect();
        trials.sort_by_key(|t| t.block_index());
        trials
    }

    /// Dataset restricted to the given blocks.
    pub fn subset_blocks(&self, blocks: &[usize]) -> Result<Dataset> {
        let keep: std::collections::HashSet<usize> = blocks.iter().copied().collect();
        let trials = self
            .trials
            .iter()
            .filter(|t| keep.contains(&t.block_index()))
            .cloned()
            .collect();
        Dataset::new(
            trials,
            self.sampling_rate_hz,
            self.stimulus_frequencies_hz.clone(),
            self.n_blocks,
            self.channel_names.clone(),
        )
    }

    /// Applies an operation to every trial, keeping the metadata.
    pub fn map_trials(&self, f: impl Fn(&Trial) -> Result<Trial>) -> Result<Dataset> {
        let trials = self.trials.iter().map(f).collect::<Result<Vec<_>>>()?;
        Dataset::new(
            trials,
            self.sampling_rate_hz,
            self.stimulus_frequencies_hz.clone(),
            self.n_blocks,
            self.channel_names.clone(),
        )
    }

    pub fn centralized(&self) -> Dataset {
        self.map_trials(|t| Ok(centralize(t)))
            .expect("centralization preserves dataset invariants")
    }

    pub fn windowed(&self, latency_s: f64, duration_s: f64) -> Result<Dataset> {
        let fs = self.sampling_rate_hz;
        self.map_trials(|t| window(t, latency_s, duration_s, fs))
    }
}

/// Restricts the dataset to the requested channels, in the requested order.
pub fn select_channels(dataset: &Dataset, names: &[impl AsRef<str>]) -> Result<Dataset> {
    let mut indices = Vec::with_capacity(names.len());
    for name in names {
        let name = name.as_ref();
        let idx = dataset
            .channel_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownChannel {
                name: name.to_string(),
                available: dataset.channel_names().to_vec(),
            })?;
        indices.push(idx);
    }
    let trials = dataset
        .trials()
        .iter()
        .map(|t| {
            let samples = t.samples().select(Axis(0), &indices);
            Trial::new(samples, t.stimulus_index(), t.block_index())
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(
        trials,
        dataset.sampling_rate_hz(),
        dataset.stimulus_frequencies_hz().to_vec(),
        dataset.n_blocks(),
        names.iter().map(|n| n.as_ref().to_string()).collect(),
    )
}
