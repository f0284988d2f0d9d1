//! Synthetic two-class insertion force profiles.
//!
//! Each trace is a piecewise template: zero force while the object is
//! approaching, a smoothstep ramp to a peak once it makes contact, then an
//! exponential relaxation to a plateau. Negative insertions leave the object
//! higher in the fixture, so they make contact earlier and press harder.
//! Gaussian sensor noise is added on top, and with a small probability the
//! peak is scaled up to produce an outlier.
//!
//! Everything here is a stand-in for recorded data; the defaults are tuned
//! so the classes overlap enough that strict agreement thresholds matter.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::classifier::Label;
use crate::error::{Error, Result};
use crate::online::LabeledTrial;
use crate::signal::ForceTrace;

/// Class-conditional shape distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassShape {
    /// Seconds from trace start to first contact.
    pub contact_time_mean: f64,
    pub contact_time_jitter: f64,
    pub peak_force_mean: f64,
    pub peak_force_std: f64,
    pub plateau_force_mean: f64,
    pub plateau_force_std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub n_samples: usize,
    pub sample_rate: f64,
    /// Seconds from contact to peak.
    pub ramp_duration: f64,
    /// Time constant of the peak-to-plateau relaxation, seconds.
    pub relax_time_constant: f64,
    pub positive: ClassShape,
    pub negative: ClassShape,
    pub noise_std: f64,
    pub outlier_probability: f64,
    pub outlier_scale: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            sample_rate: 500.0,
            ramp_duration: 0.15,
            relax_time_constant: 0.12,
            positive: ClassShape {
                contact_time_mean: 0.90,
                contact_time_jitter: 0.07,
                peak_force_mean: 14.0,
                peak_force_std: 2.5,
                plateau_force_mean: 6.0,
                plateau_force_std: 1.5,
            },
            negative: ClassShape {
                contact_time_mean: 0.60,
                contact_time_jitter: 0.07,
                peak_force_mean: 20.0,
                peak_force_std: 3.0,
                plateau_force_mean: 10.0,
                plateau_force_std: 2.0,
            },
            noise_std: 0.4,
            outlier_probability: 0.03,
            outlier_scale: 1.8,
        }
    }
}

impl GenParams {
    pub fn shape(&self, label: Label) -> &ClassShape {
        match label {
            Label::Positive => &self.positive,
            Label::Negative => &self.negative,
        }
    }

    pub fn duration(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(format!("generator: {msg}")));
        if self.n_samples == 0 {
            return fail("n_samples must be positive");
        }
        if !(self.sample_rate.is_finite() && self.sample_rate > 0.0) {
            return fail("sample_rate must be positive");
        }
        if !(self.ramp_duration > 0.0 && self.relax_time_constant > 0.0) {
            return fail("ramp duration and relaxation constant must be positive");
        }
        if self.ramp_duration >= self.duration() {
            return fail("ramp duration must be shorter than the trace");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return fail("noise_std must be non-negative");
        }
        if !(0.0..1.0).contains(&self.outlier_probability) {
            return fail("outlier_probability must lie in [0, 1)");
        }
        if !(self.outlier_scale >= 1.0 && self.outlier_scale.is_finite()) {
            return fail("outlier_scale must be at least 1");
        }
        for shape in [&self.positive, &self.negative] {
            let values = [
                shape.contact_time_mean,
                shape.contact_time_jitter,
                shape.peak_force_mean,
                shape.peak_force_std,
                shape.plateau_force_mean,
                shape.plateau_force_std,
            ];
            if values.iter().any(|v| !v.is_finite()) {
                return fail("class parameters must be finite");
            }
            if shape.contact_time_jitter < 0.0
                || shape.peak_force_std < 0.0
                || shape.plateau_force_std < 0.0
            {
                return fail("spreads must be non-negative");
            }
            if shape.peak_force_mean <= 0.0 {
                return fail("peak force mean must be positive");
            }
        }
        Ok(())
    }

    /// Class gaps in units of combined standard deviation, for peak and
    /// plateau force respectively.
    pub fn separation(&self) -> (f64, f64) {
        let gap = |a: f64, b: f64, sa: f64, sb: f64| (a - b).abs() / (sa * sa + sb * sb).sqrt();
        let (p, n) = (&self.positive, &self.negative);
        (
            gap(
                p.peak_force_mean,
                n.peak_force_mean,
                p.peak_force_std,
                n.peak_force_std,
            ),
            gap(
                p.plateau_force_mean,
                n.plateau_force_mean,
                p.plateau_force_std,
                n.plateau_force_std,
            ),
        )
    }
}

/// Concrete parameters of one trial's template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialShape {
    pub contact_time: f64,
    pub peak_force: f64,
    pub plateau_force: f64,
    pub outlier: bool,
}

impl TrialShape {
    /// Peak including the outlier multiplier.
    pub fn effective_peak(&self, params: &GenParams) -> f64 {
        if self.outlier {
            self.peak_force * params.outlier_scale
        } else {
            self.peak_force
        }
    }
}

fn normal(mean: f64, std: f64) -> Normal<f64> {
    // std is validated non-negative and finite
    Normal::new(mean, std).expect("valid normal parameters")
}

pub fn sample_shape<R: Rng + ?Sized>(label: Label, params: &GenParams, rng: &mut R) -> TrialShape {
    let shape = params.shape(label);
    let latest_contact = (params.duration() - params.ramp_duration - 1.0 / params.sample_rate).max(0.0);
    let contact_time = normal(shape.contact_time_mean, shape.contact_time_jitter)
        .sample(rng)
        .clamp(0.0, latest_contact);
    let peak_force = normal(shape.peak_force_mean, shape.peak_force_std)
        .sample(rng)
        .max(0.1 * shape.peak_force_mean);
    let plateau_force = normal(shape.plateau_force_mean, shape.plateau_force_std)
        .sample(rng)
        .clamp(0.0, peak_force);
    let outlier = rng.random::<f64>() < params.outlier_probability;
    TrialShape {
        contact_time,
        peak_force,
        plateau_force,
        outlier,
    }
}

/// Noise-free profile for a concrete shape. The peak falls exactly on a
/// sample.
pub fn template(shape: &TrialShape, params: &GenParams) -> Vec<f64> {
    let rate = params.sample_rate;
    let n = params.n_samples;
    let contact = ((shape.contact_time * rate).round() as usize).min(n.saturating_sub(1));
    let ramp = ((params.ramp_duration * rate).round() as usize).max(1);
    let peak_at = contact + ramp;
    let peak = shape.effective_peak(params);
    let tau = params.relax_time_constant * rate;

    (0..n)
        .map(|i| {
            if i <= contact {
                0.0
            } else if i <= peak_at {
                let x = (i - contact) as f64 / ramp as f64;
                peak * x * x * (3.0 - 2.0 * x)
            } else {
                let decay = (-((i - peak_at) as f64) / tau).exp();
                shape.plateau_force + (peak - shape.plateau_force) * decay
            }
        })
        .collect()
}

pub fn gen_trial<R: Rng + ?Sized>(
    id: impl Into<String>,
    label: Label,
    params: &GenParams,
    rng: &mut R,
) -> Result<LabeledTrial> {
    params.validate()?;
    let shape = sample_shape(label, params, rng);
    let mut samples = template(&shape, params);
    if params.noise_std > 0.0 {
        let noise = normal(0.0, params.noise_std);
        for s in &mut samples {
            *s += noise.sample(rng);
        }
    }
    Ok(LabeledTrial {
        id: id.into(),
        trace: ForceTrace::new(samples, params.sample_rate)?,
        truth: label,
    })
}

/// Label of stream position `i` when `n_pos` positives are spread evenly
/// over `n` trials.
fn interleaved_label(i: usize, n_pos: usize, n: usize) -> Label {
    if (i + 1) * n_pos / n > i * n_pos / n {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// `n_pos + n_neg` trials with the classes evenly interleaved. Trial `i`
/// draws from its own ChaCha8 stream so generation order does not matter.
pub fn gen_dataset(
    n_pos: usize,
    n_neg: usize,
    params: &GenParams,
    seed: u64,
) -> Result<Vec<LabeledTrial>> {
    params.validate()?;
    let n = n_pos + n_neg;
    (0..n)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            gen_trial(i.to_string(), interleaved_label(i, n_pos, n), params, &mut rng)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_separated() {
        let p = GenParams::default();
        p.validate().unwrap();
        let (peak, plateau) = p.separation();
        assert!(peak >= 1.0, "{peak}");
        assert!(plateau >= 1.0, "{plateau}");
    }

    #[test]
    fn invalid_params_rejected() {
        let base = GenParams::default();
        let cases = [
            GenParams {
                n_samples: 0,
                ..base
            },
            GenParams {
                noise_std: -1.0,
                ..base
            },
            GenParams {
                outlier_probability: 1.0,
                ..base
            },
            GenParams {
                outlier_scale: 0.5,
                ..base
            },
            GenParams {
                ramp_duration: 5.0,
                ..base
            },
        ];
        for p in cases {
            assert!(p.validate().is_err());
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            assert!(gen_trial("x", Label::Positive, &p, &mut rng).is_err());
        }
    }

    #[test]
    fn template_shape() {
        let params = GenParams::default();
        let shape = TrialShape {
            contact_time: 0.5,
            peak_force: 12.0,
            plateau_force: 4.0,
            outlier: false,
        };
        let t = template(&shape, &params);
        assert_eq!(t.len(), 1000);
        assert!(t[..=250].iter().all(|&v| v == 0.0));
        assert_eq!(t[250 + 75], 12.0);
        assert!((t[999] - 4.0).abs() < 1e-3);
        let max = t.iter().cloned().fold(f64::MIN, f64::max);
        assert_eq!(max, 12.0);
        let outlier = TrialShape {
            outlier: true,
            ..shape
        };
        assert_eq!(template(&outlier, &params)[325], 12.0 * params.outlier_scale);
    }

    #[test]
    fn interleaving_counts() {
        for (p, n) in [(0, 0), (3, 0), (0, 4), (297, 407), (5, 2)] {
            let total = p + n;
            let pos = (0..total)
                .filter(|&i| interleaved_label(i, p, total) == Label::Positive)
                .count();
            assert_eq!(pos, p);
        }
    }

    #[test]
    fn dataset_sizes() {
        let params = GenParams::default();
        assert!(gen_dataset(0, 0, &params, 1).unwrap().is_empty());
        let d = gen_dataset(4, 6, &params, 1).unwrap();
        assert_eq!(d.len(), 10);
        assert_eq!(d.iter().filter(|t| t.truth == Label::Positive).count(), 4);
        assert!(d.iter().all(|t| t.trace.len() == 1000));
    }
}
