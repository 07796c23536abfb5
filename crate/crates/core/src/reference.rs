//! Sinusoidal reference templates and the stacked dictionary they form.
//!
//! A template holds sin/cos pairs at a stimulus frequency and its
//! harmonics, sampled on the analysis window's time grid with t = 0 at
//! the first sample. The dictionary concatenates the templates of all
//! stimuli column-wise.

use ndarray::{s, Array2};
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Sin/cos harmonics of one stimulus frequency, `n_samples x 2*n_harmonics`.
///
/// Column `2k` is `sin(2*pi*(k+1)*f*t)`, column `2k+1` the matching cosine,
/// harmonics ascending. Columns are raw sinusoids, not normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTemplate {
    matrix: Array2<f64>,
    frequency_hz: f64,
    n_harmonics: usize,
    sampling_rate_hz: f64,
}

impl ReferenceTemplate {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn frequency_hz(&self) -> f64 {
        self.frequency_hz
    }

    pub fn n_harmonics(&self) -> usize {
        self.n_harmonics
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn build_template(
    frequency_hz: f64,
    n_harmonics: usize,
    sampling_rate_hz: f64,
    n_samples: usize,
) -> Result<ReferenceTemplate> {
    if frequency_hz <= 0.0 || sampling_rate_hz <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "frequency and sampling rate must be positive (f {frequency_hz}, fs {sampling_rate_hz})"
        )));
    }
    if n_harmonics == 0 {
        return Err(Error::InvalidInput("need at least one harmonic".into()));
    }
    if n_samples < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    let nyquist = sampling_rate_hz / 2.0;
    if frequency_hz * n_harmonics as f64 >= nyquist {
        return Err(Error::Aliasing {
            frequency_hz,
            harmonic: n_harmonics,
            nyquist_hz: nyquist,
        });
    }
    let mut matrix = Array2::<f64>::zeros((n_samples, 2 * n_harmonics));
    for t in 0..n_samples {
        let time = t as f64 / sampling_rate_hz;
        for k in 1..=n_harmonics {
            let phase = TAU * k as f64 * frequency_hz * time;
            matrix[[t, 2 * (k - 1)]] = phase.sin();
            matrix[[t, 2 * (k - 1) + 1]] = phase.cos();
        }
    }
    Ok(ReferenceTemplate {
        matrix,
        frequency_hz,
        n_harmonics,
        sampling_rate_hz,
    })
}

/// Horizontal concatenation of the templates of all stimuli,
/// `n_samples x 2*n_stimuli*n_harmonics`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceDictionary {
    matrix: Array2<f64>,
    frequencies_hz: Vec<f64>,
    n_harmonics: usize,
    sampling_rate_hz: f64,
}

impl ReferenceDictionary {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn frequencies_hz(&self) -> &[f64] {
        &self.frequencies_hz
    }

    pub fn n_harmonics(&self) -> usize {
        self.n_harmonics
    }

    pub fn sampling_rate_hz(&self) -> f64 {
        self.sampling_rate_hz
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_stimuli(&self) -> usize {
        self.frequencies_hz.len()
    }

    /// The column block belonging to one stimulus, as a template.
    pub fn template(&self, stimulus: usize) -> ReferenceTemplate {
        let w = 2 * self.n_harmonics;
        let matrix = self
            .matrix
            .slice(s![.., stimulus * w..(stimulus + 1) * w])
            .to_owned();
        ReferenceTemplate {
            matrix,
            frequency_hz: self.frequencies_hz[stimulus],
            n_harmonics: self.n_harmonics,
            sampling_rate_hz: self.sampling_rate_hz,
        }
    }
}

pub fn build_dictionary(
    frequencies_hz: &[f64],
    n_harmonics: usize,
    sampling_rate_hz: f64,
    n_samples: usize,
) -> Result<ReferenceDictionary> {
    if frequencies_hz.is_empty() {
        return Err(Error::InvalidInput("no frequencies given".into()));
    }
    for (i, &a) in frequencies_hz.iter().enumerate() {
        for &b in &frequencies_hz[i + 1..] {
            if a == b {
                return Err(Error::InvalidInput(format!(
                    "duplicate stimulus frequency {a} Hz"
                )));
            }
        }
    }
    let width = 2 * n_harmonics;
    let mut matrix = Array2::<f64>::zeros((n_samples, width * frequencies_hz.len()));
    for (s_idx, &f) in frequencies_hz.iter().enumerate() {
        let template = build_template(f, n_harmonics, sampling_rate_hz, n_samples)?;
        matrix
            .slice_mut(s![.., s_idx * width..(s_idx + 1) * width])
            .assign(template.matrix());
    }
    Ok(ReferenceDictionary {
        matrix,
        frequencies_hz: frequencies_hz.to_vec(),
        n_harmonics,
        sampling_rate_hz,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn quarter_period_grid() {
        // f = fs/4 on 4 samples: one full period, phase steps of pi/2.
        let t = build_template(32.0, 1, 128.0, 4).unwrap();
        let m = t.matrix();
        let sin_expect = [0.0, 1.0, 0.0, -1.0];
        let cos_expect = [1.0, 0.0, -1.0, 0.0];
        for i in 0..4 {
            assert_abs_diff_eq!(m[[i, 0]], sin_expect[i], epsilon = 1e-12);
            assert_abs_diff_eq!(m[[i, 1]], cos_expect[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn first_row_is_sin_zero_cos_one() {
        let t = build_template(7.5, 4, 128.0, 64).unwrap();
        for k in 0..4 {
            assert_eq!(t.matrix()[[0, 2 * k]], 0.0);
            assert_eq!(t.matrix()[[0, 2 * k + 1]], 1.0);
        }
    }

    /// Plain DFT magnitude at an integer bin.
    fn dft_magnitude(signal: &[f64], cycles: usize) -> f64 {
        let n = signal.len() as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (t, &v) in signal.iter().enumerate() {
            let angle = std::f64::consts::TAU * cycles as f64 * t as f64 / n;
            re += v * angle.cos();
            im -= v * angle.sin();
        }
        (re * re + im * im).sqrt() / n
    }

    #[test]
    fn harmonic_columns_peak_at_multiples() {
        // 8 Hz at 250 Hz over 250 samples: harmonic k completes k*8 cycles.
        let t = build_template(8.0, 5, 250.0, 250).unwrap();
        for k in 1..=5usize {
            let sin_col: Vec<f64> = t.matrix().column(2 * (k - 1)).to_vec();
            let at_harmonic = dft_magnitude(&sin_col, 8 * k);
            for probe in [4 * k, 8 * k + 3, 8 * k.saturating_sub(1) + 1] {
                if probe == 8 * k || probe == 0 {
                    continue;
                }
                assert!(
                    at_harmonic > 10.0 * dft_magnitude(&sin_col, probe),
                    "harmonic {k} does not peak at {} cycles",
                    8 * k
                );
            }
            assert_abs_diff_eq!(at_harmonic, 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn aliasing_harmonic_rejected() {
        assert!(matches!(
            build_template(12.0, 6, 128.0, 64),
            Err(Error::Aliasing { .. })
        ));
    }

    #[test]
    fn epoc_dictionary_shape() {
        let d = build_dictionary(&[6.66, 7.5, 8.57, 10.0, 12.0], 2, 128.0, 128).unwrap();
        assert_eq!(d.matrix().dim(), (128, 20));
    }

    #[test]
    fn speller_dictionary_width() {
        let freqs: Vec<f64> = (0..40).map(|i| 8.0 + 0.2 * i as f64).collect();
        let d = build_dictionary(&freqs, 5, 250.0, 125).unwrap();
        assert_eq!(d.matrix().ncols(), 400);
    }

    #[test]
    fn single_frequency_dictionary_equals_template() {
        let d = build_dictionary(&[10.0], 3, 128.0, 64).unwrap();
        let t = build_template(10.0, 3, 128.0, 64).unwrap();
        assert_eq!(d.matrix(), t.matrix());
        assert_eq!(&d.template(0), &t);
    }

    #[test]
    fn duplicate_frequencies_rejected() {
        assert!(build_dictionary(&[10.0, 10.0], 2, 128.0, 64).is_err());
    }

    #[test]
    fn permuted_frequencies_permute_column_blocks() {
        let d1 = build_dictionary(&[7.5, 10.0, 12.0], 2, 128.0, 64).unwrap();
        let d2 = build_dictionary(&[12.0, 7.5, 10.0], 2, 128.0, 64).unwrap();
        assert_eq!(d1.template(0).matrix(), d2.template(1).matrix());
        assert_eq!(d1.template(1).matrix(), d2.template(2).matrix());
        assert_eq!(d1.template(2).matrix(), d2.template(0).matrix());
    }

    #[test]
    fn incommensurate_columns_near_orthogonal() {
        let fs = 128.0;
        let n = (4.0 * fs) as usize;
        let d = build_dictionary(&[6.66, 7.5], 1, fs, n).unwrap();
        let a = d.matrix().column(0);
        let b = d.matrix().column(2);
        let cos = a.dot(&b) / (a.dot(&a).sqrt() * b.dot(&b).sqrt());
        assert!(cos.abs() < 0.2, "normalized inner product {cos}");
    }
}
