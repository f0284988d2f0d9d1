//! Trace preprocessing: Savitzky-Golay smoothing followed by sliding-window
//! mean down-sampling.
//!
//! Every function here is pure. The smoothing filter is linear and exact on
//! polynomials up to its order, including at the trace edges: the first and
//! last full windows are fitted once and the fitted polynomial is evaluated
//! at the boundary offsets instead of padding the signal.

use nalgebra::{DMatrix, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Raw fixed-rate z-axis force samples for one insertion trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForceTrace {
    samples: Vec<f64>,
    sample_rate: f64,
}

impl ForceTrace {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTrace);
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration covered by the trace in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// Smoothed, down-sampled representation consumed by the classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Multiplies every component by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|v| v * factor).collect())
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub sg_window: usize,
    pub sg_order: usize,
    pub ds_window: usize,
    pub ds_stride: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            sg_window: 15,
            sg_order: 2,
            ds_window: 10,
            ds_stride: 10,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        check_filter_params(self.sg_window, self.sg_order)?;
        if self.ds_window == 0 {
            return Err(Error::ZeroParameter("down-sampling window"));
        }
        if self.ds_stride == 0 {
            return Err(Error::ZeroParameter("down-sampling stride"));
        }
        Ok(())
    }

    /// Smallest trace length both steps accept.
    pub fn min_trace_len(&self) -> usize {
        self.sg_window.max(self.ds_window)
    }

    /// Feature dimension produced from a trace of `n` samples.
    pub fn feature_len(&self, n: usize) -> Option<usize> {
        downsampled_len(n, self.ds_window, self.ds_stride)
    }
}

fn check_filter_params(window: usize, order: usize) -> Result<()> {
    if window.is_multiple_of(2) {
        return Err(Error::EvenWindow(window));
    }
    if order >= window {
        return Err(Error::OrderTooLarge { order, window });
    }
    Ok(())
}

/// Number of full windows of width `window` stepping by `stride` over `n`
/// samples, or `None` when not even one fits.
pub fn downsampled_len(n: usize, window: usize, stride: usize) -> Option<usize> {
    if window == 0 || stride == 0 || n < window {
        return None;
    }
    Some((n - window) / stride + 1)
}

/// Savitzky-Golay convolution weights for one window size and order.
///
/// Row `r` of `weights` evaluates the window's least-squares polynomial at
/// offset `r - half` from the window center, so row `half` is the classic
/// smoothing kernel and the other rows serve the edges.
#[derive(Debug, Clone)]
pub struct SavgolKernel {
    window: usize,
    order: usize,
    weights: Vec<Vec<f64>>,
}

impl SavgolKernel {
    pub fn new(window: usize, order: usize) -> Result<Self> {
        check_filter_params(window, order)?;
        let half = window / 2;
        // Positions are rescaled into [-1, 1] to keep the design matrix
        // well conditioned for wider windows and higher orders.
        let scale = half.max(1) as f64;
        let design = DMatrix::from_fn(window, order + 1, |row, power| {
            ((row as f64 - half as f64) / scale).powi(power as i32)
        });
        let pinv = design
            .pseudo_inverse(1e-12)
            .map_err(|e| Error::InvalidConfig(e.to_string()))?;

        let weights = (0..window)
            .map(|row| {
                let t = (row as f64 - half as f64) / scale;
                let basis = RowDVector::from_fn(order + 1, |_, power| t.powi(power as i32));
                (basis * &pinv).iter().copied().collect()
            })
            .collect();

        Ok(Self {
            window,
            order,
            weights,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Weights evaluating the fit at `offset` from the window center.
    pub fn weights_at(&self, offset: isize) -> &[f64] {
        let half = (self.window / 2) as isize;
        assert!(offset.abs() <= half, "offset {offset} outside window");
        &self.weights[(offset + half) as usize]
    }

    pub fn apply(&self, samples: &[f64]) -> Result<Vec<f64>> {
        let n = samples.len();
        if n < self.window {
            return Err(Error::TraceTooShort {
                len: n,
                needed: self.window,
            });
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }

        let half = self.window / 2;
        let dot = |weights: &[f64], start: usize| -> f64 {
            weights
                .iter()
                .zip(&samples[start..start + self.window])
                .map(|(w, y)| w * y)
                .sum()
        };

        let mut out = Vec::with_capacity(n);
        for i in 0..half {
            out.push(dot(self.weights_at(i as isize - half as isize), 0));
        }
        let center = self.weights_at(0);
        for i in half..n - half {
            out.push(dot(center, i - half));
        }
        let last_start = n - self.window;
        let last_center = n - 1 - half;
        for i in n - half..n {
            out.push(dot(
                self.weights_at(i as isize - last_center as isize),
                last_start,
            ));
        }
        Ok(out)
    }
}

/// Savitzky-Golay smoothing of a whole trace; output has the same length.
pub fn savgol_smooth(trace: &ForceTrace, window: usize, order: usize) -> Result<ForceTrace> {
    let kernel = SavgolKernel::new(window, order)?;
    let samples = kernel.apply(trace.samples())?;
    ForceTrace::new(samples, trace.sample_rate())
}

/// Means of consecutive windows; trailing samples that do not fill a
/// window are dropped.
pub fn downsample_mean(samples: &[f64], window: usize, stride: usize) -> Result<Vec<f64>> {
    if window == 0 {
        return Err(Error::ZeroParameter("down-sampling window"));
    }
    if stride == 0 {
        return Err(Error::ZeroParameter("down-sampling stride"));
    }
    let count = downsampled_len(samples.len(), window, stride).ok_or(Error::TraceTooShort {
        len: samples.len(),
        needed: window,
    })?;
    let width = window as f64;
    Ok((0..count)
        .map(|j| samples[j * stride..j * stride + window].iter().sum::<f64>() / width)
        .collect())
}

/// Down-samples a trace into a feature vector.
pub fn downsample_trace(trace: &ForceTrace, window: usize, stride: usize) -> Result<FeatureVector> {
    FeatureVector::new(downsample_mean(trace.samples(), window, stride)?)
}

/// Reusable preprocessing pipeline with a precomputed filter kernel.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    config: PreprocessConfig,
    kernel: SavgolKernel,
}

impl Preprocessor {
    pub fn new(config: PreprocessConfig) -> Result<Self> {
        config.validate()?;
        let kernel = SavgolKernel::new(config.sg_window, config.sg_order)?;
        Ok(Self { config, kernel })
    }

    pub fn config(&self) -> &PreprocessConfig {
        &self.config
    }

    pub fn apply(&self, trace: &ForceTrace) -> Result<FeatureVector> {
        let smoothed = self.kernel.apply(trace.samples())?;
        FeatureVector::new(downsample_mean(
            &smoothed,
            self.config.ds_window,
            self.config.ds_stride,
        )?)
    }
}

pub fn preprocess(trace: &ForceTrace, config: &PreprocessConfig) -> Result<FeatureVector> {
    Preprocessor::new(*config)?.apply(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(samples: Vec<f64>) -> ForceTrace {
        ForceTrace::new(samples, 500.0).unwrap()
    }

    #[test]
    fn rejects_bad_traces() {
        assert_eq!(ForceTrace::new(vec![], 500.0), Err(Error::EmptyTrace));
        assert_eq!(
            ForceTrace::new(vec![1.0, f64::NAN], 500.0),
            Err(Error::NonFinite(1))
        );
        assert!(ForceTrace::new(vec![1.0], 0.0).is_err());
    }

    #[test]
    fn rejects_bad_filter_params() {
        let t = trace(vec![0.0; 100]);
        assert_eq!(savgol_smooth(&t, 14, 2), Err(Error::EvenWindow(14)));
        assert_eq!(
            savgol_smooth(&t, 5, 5),
            Err(Error::OrderTooLarge {
                order: 5,
                window: 5
            })
        );
        let short = trace(vec![0.0; 10]);
        assert_eq!(
            savgol_smooth(&short, 15, 2),
            Err(Error::TraceTooShort {
                len: 10,
                needed: 15
            })
        );
    }

    #[test]
    fn constant_trace_is_unchanged() {
        let t = trace(vec![5.0; 100]);
        let s = savgol_smooth(&t, 15, 2).unwrap();
        assert_eq!(s.len(), 100);
        for v in s.samples() {
            assert!((v - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn quadratic_is_reproduced_everywhere() {
        let f = |i: f64| 0.01 * i * i - 0.3 * i + 2.0;
        let t = trace((0..100).map(|i| f(i as f64)).collect());
        let s = savgol_smooth(&t, 15, 2).unwrap();
        for (i, v) in s.samples().iter().enumerate() {
            assert!((v - f(i as f64)).abs() < 1e-9, "index {i}: {v}");
        }
    }

    #[test]
    fn window_equal_to_length_fits_single_polynomial() {
        let t = trace(vec![1.0, 4.0, 9.0, 16.0, 25.0]);
        let s = savgol_smooth(&t, 5, 2).unwrap();
        for (a, b) in s.samples().iter().zip(t.samples()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn order_zero_window_three_is_moving_average_inside() {
        let t = trace(vec![0.0, 3.0, 6.0, 0.0, 3.0]);
        let s = savgol_smooth(&t, 3, 0).unwrap();
        assert!((s.samples()[1] - 3.0).abs() < 1e-12);
        assert!((s.samples()[2] - 3.0).abs() < 1e-12);
        // edges take the mean of the first/last window
        assert!((s.samples()[0] - 3.0).abs() < 1e-12);
        assert!((s.samples()[4] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn downsample_examples() {
        assert_eq!(downsample_mean(&[1.0; 4], 2, 2).unwrap(), vec![1.0, 1.0]);
        let xs = [3.0, -1.0, 2.5, 7.0];
        assert_eq!(downsample_mean(&xs, 1, 1).unwrap(), xs.to_vec());
        assert_eq!(downsample_mean(&[1.0, 2.0, 3.0, 4.0, 5.0], 2, 2).unwrap(), vec![1.5, 3.5]);
    }

    #[test]
    fn downsample_errors() {
        assert_eq!(
            downsample_mean(&[1.0; 4], 0, 1),
            Err(Error::ZeroParameter("down-sampling window"))
        );
        assert_eq!(
            downsample_mean(&[1.0; 4], 1, 0),
            Err(Error::ZeroParameter("down-sampling stride"))
        );
        assert_eq!(
            downsample_mean(&[1.0; 4], 5, 1),
            Err(Error::TraceTooShort { len: 4, needed: 5 })
        );
    }

    #[test]
    fn preprocess_constant_defaults() {
        let t = trace(vec![-2.75; 1000]);
        let f = preprocess(&t, &PreprocessConfig::default()).unwrap();
        assert_eq!(f.len(), 100);
        for v in f.as_slice() {
            assert!((v + 2.75).abs() < 1e-12);
        }
    }

    #[test]
    fn preprocess_config_validation() {
        let mut cfg = PreprocessConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.sg_window = 16;
        assert!(cfg.validate().is_err());
        cfg = PreprocessConfig {
            ds_stride: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(PreprocessConfig::default().feature_len(1000), Some(100));
        assert_eq!(PreprocessConfig::default().feature_len(5), None);
    }
}
