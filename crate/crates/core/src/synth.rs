//! Synthetic SSVEP dataset generator for desk-scale verification.
//!
//! Each trial is a harmonic stack at its class frequency (amplitude decay
//! 1/k), pushed through a fixed random mixing matrix, plus noise at a
//! configured SNR. Every class has a fixed response phase and every block
//! adds a bounded random phase jitter, fixed within the block: trials are
//! phase-locked the way evoked responses are, yet no two blocks line up
//! exactly. The `SharedProfile` noise model adds the same temporal
//! profile to every trial, which is exactly the kind of reproducible
//! interference plain TRCA locks onto.
//!
//! Samples are quantized to f32 on output so that datasets survive the
//! binary persistence format bit for bit.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Trial};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// Independent white Gaussian noise per trial.
    #[default]
    White,
    /// 1/f noise per trial (three-pole filtered white noise).
    Pink,
    /// Structured interference with one fixed spatial basis and fixed
    /// per-component magnitude spectrum for the whole dataset, freshly
    /// instantiated (random phases) in every trial. Looking reproducible
    /// without being task-locked, this is the regime where TRCA's
    /// inter-trial objective breaks down.
    SharedProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub frequencies_hz: Vec<f64>,
    pub sampling_rate_hz: f64,
    pub n_channels: usize,
    pub n_blocks: usize,
    pub duration_s: f64,
    /// Harmonics present in the simulated response.
    pub n_harmonics_signal: usize,
    /// Channel-mean signal-to-noise power ratio over the trial, in dB.
    pub snr_db: f64,
    pub noise: NoiseModel,
    /// Half-width of the uniform per-block phase jitter on the
    /// fundamental, in radians. `pi` makes blocks phase-unrelated.
    pub phase_jitter_rad: f64,
    pub mixing_seed: u64,
    pub noise_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            frequencies_hz: vec![6.66, 7.5, 8.57, 10.0, 12.0],
            sampling_rate_hz: 128.0,
            n_channels: 8,
            n_blocks: 6,
            duration_s: 4.0,
            n_harmonics_signal: 3,
            snr_db: 0.0,
            noise: NoiseModel::White,
            phase_jitter_rad: 0.4,
            mixing_seed: 1,
            noise_seed: 2,
        }
    }
}

fn mix64(seed: u64, b: u64, s: u64) -> u64 {
    // splitmix64 over a combined word; collisions across (b, s) pairs are
    // impossible for the block/stimulus counts this generator accepts.
    let mut z = seed ^ (b.wrapping_mul(0x9E3779B97F4A7C15)) ^ (s.wrapping_mul(0xBF58476D1CE4E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

fn gaussian_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

/// Three-pole pink filter applied per channel to white input.
fn pink_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Array2<f64> {
    let mut out = Array2::zeros((rows, cols));
    for r in 0..rows {
        let (mut b0, mut b1, mut b2) = (0.0f64, 0.0f64, 0.0f64);
        for c in 0..cols {
            let white: f64 = StandardNormal.sample(rng);
            b0 = 0.99765 * b0 + white * 0.0990460;
            b1 = 0.96300 * b1 + white * 0.2965164;
            b2 = 0.57000 * b2 + white * 1.0526913;
            out[[r, c]] = b0 + b1 + b2 + white * 0.1848;
        }
    }
    out
}

fn mean_power(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>() / m.len() as f64
}

/// Random orthonormal basis via Gram-Schmidt on a Gaussian matrix.
fn orthonormal_basis(rng: &mut ChaCha12Rng, n: usize) -> Array2<f64> {
    loop {
        let g = gaussian_matrix(rng, n, n);
        let mut q = Array2::<f64>::zeros((n, n));
        let mut ok = true;
        for j in 0..n {
            let mut v = g.column(j).to_owned();
            for i in 0..j {
                let qi = q.column(i).to_owned();
                let r = qi.dot(&v);
                v = &v - &(r * &qi);
            }
            let norm = v.dot(&v).sqrt();
            if norm < 1e-8 {
                ok = false;
                break;
            }
            q.column_mut(j).assign(&(v / norm));
        }
        if ok {
            return q;
        }
    }
}

/// Time courses with the given per-component magnitude spectrum and fresh
/// uniform phases: same profile every call, new realization.
fn spectral_noise(rng: &mut ChaCha12Rng, envelopes: &Array2<f64>, n_t: usize) -> Array2<f64> {
    let (n_comp, n_bins) = envelopes.dim();
    let mut out = Array2::<f64>::zeros((n_comp, n_t));
    for r in 0..n_comp {
        for bin in 0..n_bins {
            let amp = envelopes[[r, bin]];
            let phase: f64 = rng.random::<f64>() * std::f64::consts::TAU;
            let omega = std::f64::consts::TAU * (bin + 1) as f64 / n_t as f64;
            for t in 0..n_t {
                out[[r, t]] += amp * (omega * t as f64 + phase).cos();
            }
        }
    }
    out
}

fn validate(config: &SynthConfig) -> Result<usize> {
    if config.frequencies_hz.is_empty() {
        return Err(Error::Configuration("no stimulus frequencies".into()));
    }
    if config.sampling_rate_hz <= 0.0 {
        return Err(Error::Configuration(
            "sampling rate must be positive".into(),
        ));
    }
    if !config.snr_db.is_finite() {
        return Err(Error::Configuration("snr_db must be finite".into()));
    }
    if config.n_channels == 0 || config.n_blocks == 0 || config.n_harmonics_signal == 0 {
        return Err(Error::Configuration(
            "channels, blocks, and signal harmonics must be positive".into(),
        ));
    }
    if !(config.phase_jitter_rad >= 0.0 && config.phase_jitter_rad.is_finite()) {
        return Err(Error::Configuration(format!(
            "phase jitter must be finite and non-negative, got {}",
            config.phase_jitter_rad
        )));
    }
    let nyquist = config.sampling_rate_hz / 2.0;
    for &f in &config.frequencies_hz {
        if f * config.n_harmonics_signal as f64 >= nyquist {
            return Err(Error::Configuration(format!(
                "harmonic {} of {f} Hz is at or above Nyquist ({nyquist} Hz)",
                config.n_harmonics_signal
            )));
        }
    }
    let n_t = (config.duration_s * config.sampling_rate_hz).round() as usize;
    if n_t < 2 {
        return Err(Error::Configuration(format!(
            "duration {} s gives only {n_t} samples",
            config.duration_s
        )));
    }
    Ok(n_t)
}

/// Generates a complete block-by-stimulus dataset. Deterministic given the
/// two seeds.
pub fn generate(config: &SynthConfig) -> Result<Dataset> {
    let n_t = validate(config)?;
    let n_stim = config.frequencies_hz.len();
    let n_src = 2 * config.n_harmonics_signal;
    let fs = config.sampling_rate_hz;

    // Fixed forward model; redraw on the (measure-zero) chance of rank loss.
    let mut mixing = Array2::zeros((0, 0));
    for attempt in 0..16u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(config.mixing_seed.wrapping_add(attempt));
        let m = gaussian_matrix(&mut rng, config.n_channels, n_src);
        let gram = if config.n_channels <= n_src {
            m.dot(&m.t())
        } else {
            m.t().dot(&m)
        };
        if crate::linalg::cholesky(&gram.view()).is_ok() {
            mixing = m;
            break;
        }
    }
    if mixing.is_empty() {
        return Err(Error::Configuration(
            "could not draw a full-rank mixing matrix".into(),
        ));
    }

    let mut phase_rng = ChaCha12Rng::seed_from_u64(config.mixing_seed ^ 0x9E3779B97F4A7C15);
    let base_phases: Vec<f64> = (0..n_stim)
        .map(|_| phase_rng.random::<f64>() * std::f64::consts::TAU)
        .collect();
    let mut phases = Array2::<f64>::zeros((config.n_blocks, n_stim));
    for b in 0..config.n_blocks {
        for s in 0..n_stim {
            let jitter = (2.0 * phase_rng.random::<f64>() - 1.0) * config.phase_jitter_rad;
            phases[[b, s]] = base_phases[s] + jitter;
        }
    }

    let snr_linear = 10f64.powf(config.snr_db / 10.0);

    let signal_for = |b: usize, s: usize| -> Array2<f64> {
        let f = config.frequencies_hz[s];
        let phase = phases[[b, s]];
        let mut src = Array2::<f64>::zeros((n_src, n_t));
        for k in 1..=config.n_harmonics_signal {
            let amp = 1.0 / k as f64;
            for t in 0..n_t {
                let arg = std::f64::consts::TAU * k as f64 * f * (t as f64 / fs) + k as f64 * phase;
                src[[2 * (k - 1), t]] = amp * arg.sin();
                src[[2 * (k - 1) + 1, t]] = amp * arg.cos();
            }
        }
        mixing.dot(&src)
    };

    // The shared-profile parameters are drawn once per dataset; every
    // trial then instantiates them with fresh phases. One global scale
    // (dataset-mean signal power) keeps the noise spectrum identical
    // across trials.
    let shared_profile = match config.noise {
        NoiseModel::SharedProfile => {
            let mut rng = ChaCha12Rng::seed_from_u64(config.noise_seed ^ 0x5851F42D4C957F2D);
            let basis = orthonormal_basis(&mut rng, config.n_channels);
            let n_bins = (n_t / 2).saturating_sub(1).max(1);
            let envelopes = Array2::from_shape_fn((config.n_channels, n_bins), |_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                0.5 + g.abs()
            });
            let raw_power: f64 =
                envelopes.iter().map(|e| e * e / 2.0).sum::<f64>() / config.n_channels as f64;
            let mut sig_power = 0.0;
            for b in 0..config.n_blocks {
                for s in 0..n_stim {
                    sig_power += mean_power(&signal_for(b, s));
                }
            }
            sig_power /= (config.n_blocks * n_stim) as f64;
            let scale = (sig_power / (raw_power * snr_linear)).sqrt();
            Some((basis, envelopes * scale))
        }
        _ => None,
    };

    let mut trials = Vec::with_capacity(config.n_blocks * n_stim);
    for b in 0..config.n_blocks {
        for s in 0..n_stim {
            let signal = signal_for(b, s);
            let mut rng = ChaCha12Rng::seed_from_u64(mix64(config.noise_seed, b as u64, s as u64));
            let noise = match config.noise {
                NoiseModel::SharedProfile => {
                    let (basis, envelopes) = shared_profile.as_ref().unwrap();
                    let courses = spectral_noise(&mut rng, envelopes, n_t);
                    basis.dot(&courses)
                }
                kind => {
                    let raw = match kind {
                        NoiseModel::White => gaussian_matrix(&mut rng, config.n_channels, n_t),
                        NoiseModel::Pink => pink_matrix(&mut rng, config.n_channels, n_t),
                        NoiseModel::SharedProfile => unreachable!(),
                    };
                    let scale = (mean_power(&signal) / (mean_power(&raw) * snr_linear)).sqrt();
                    raw * scale
                }
            };
            let samples = (&signal + &noise).mapv(|v| v as f32 as f64);
            trials.push(Trial::new(samples, s, b)?);
        }
    }

    let channel_names = (1..=config.n_channels).map(|i| format!("C{i}")).collect();
    Dataset::new(
        trials,
        fs,
        config.frequencies_hz.clone(),
        config.n_blocks,
        channel_names,
    )
}

/// Permutes the stimulus labels within every block, decoupling trials
/// from their true class. Deterministic given the seed.
pub fn shuffle_labels(dataset: &Dataset, seed: u64) -> Dataset {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let n_stim = dataset.n_stimuli();
    let mut trials = Vec::with_capacity(dataset.trials().len());
    for b in 0..dataset.n_blocks() {
        let mut perm: Vec<usize> = (0..n_stim).collect();
        // Fisher-Yates.
        for i in (1..n_stim).rev() {
            let j = rng.random_range(0..=i);
            perm.swap(i, j);
        }
        for (s, &new_label) in perm.iter().enumerate() {
            if let Some(t) = dataset.trial(b, s) {
                trials.push(
                    Trial::new(t.samples().clone(), new_label, b)
                        .expect("relabeling preserves trial invariants"),
                );
            }
        }
    }
    Dataset::new(
        trials,
        dataset.sampling_rate_hz(),
        dataset.stimulus_frequencies_hz().to_vec(),
        dataset.n_blocks(),
        dataset.channel_names().to_vec(),
    )
    .expect("relabeling preserves dataset invariants")
}
