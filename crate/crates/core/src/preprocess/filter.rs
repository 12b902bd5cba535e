//! Butterworth band-pass design as second-order sections, applied
//! forward-backward for zero phase.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::PreprocessError;
use crate::edf::SignalTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FilterDesign {
    #[default]
    Butterworth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    /// Order of the low-pass prototype; the band-pass has twice as many poles.
    pub order: usize,
    #[serde(default)]
    pub design: FilterDesign,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            low_hz: 0.5,
            high_hz: 40.0,
            order: 4,
            design: FilterDesign::Butterworth,
        }
    }
}

impl FilterSpec {
    pub fn validate(&self, fs: f64) -> Result<(), PreprocessError> {
        let ok = self.order >= 1
            && self.low_hz > 0.0
            && self.low_hz < self.high_hz
            && self.high_hz < fs / 2.0;
        if ok {
            Ok(())
        } else {
            Err(PreprocessError::InvalidBand {
                low_hz: self.low_hz,
                high_hz: self.high_hz,
                fs,
            })
        }
    }
}

/// One biquad `b0 + b1 z⁻¹ + b2 z⁻² / 1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex64) -> Complex64 {
        let num = self.b[0] + z_inv * (self.b[1] + z_inv * self.b[2]);
        let den = self.a[0] + z_inv * (self.a[1] + z_inv * self.a[2]);
        num / den
    }

    /// Transposed direct-form II state for a unit step held forever.
    fn step_state(&self) -> [f64; 2] {
        let dc = (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2]);
        [dc - self.b[0], self.b[2] - self.a[2] * dc]
    }

    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }
}

/// Cascade of biquads designed for one sampling rate.
#[derive(Debug, Clone, PartialEq)]
pub struct SosFilter {
    pub sections: Vec<Biquad>,
    pub fs: f64,
}

impl SosFilter {
    /// Butterworth band-pass via analog prototype, low-pass → band-pass
    /// transform and the pre-warped bilinear map.
    pub fn butterworth_bandpass(spec: &FilterSpec, fs: f64) -> Result<Self, PreprocessError> {
        spec.validate(fs)?;
        let n = spec.order;
        let warp = |f: f64| 2.0 * fs * (std::f64::consts::PI * f / fs).tan();
        let (w1, w2) = (warp(spec.low_hz), warp(spec.high_hz));
        let wo = (w1 * w2).sqrt();
        let bw = w2 - w1;

        let mut analog_poles = Vec::with_capacity(2 * n);
        for k in 0..n {
            let m = -(n as f64) + 1.0 + 2.0 * k as f64;
            let p = -Complex64::from_polar(1.0, std::f64::consts::PI * m / (2.0 * n as f64));
            let half = p * (bw / 2.0);
            let disc = (half * half - wo * wo).sqrt();
            analog_poles.push(half + disc);
            analog_poles.push(half - disc);
        }
        let fs2 = 2.0 * fs;
        let digital: Vec<Complex64> = analog_poles
            .iter()
            .map(|&s| (fs2 + s) / (fs2 - s))
            .collect();

        let mut upper: Vec<Complex64> = digital.iter().copied().filter(|p| p.im > 1e-12).collect();
        let mut real: Vec<f64> = digital
            .iter()
            .filter(|p| p.im.abs() <= 1e-12)
            .map(|p| p.re)
            .collect();
        upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
        real.sort_by(f64::total_cmp);

        // Every section carries one zero at z = 1 and one at z = -1.
        let mut sections: Vec<Biquad> = upper
            .iter()
            .map(|p| Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -2.0 * p.re, p.norm_sqr()],
            })
            .collect();
        for pair in real.chunks(2) {
            let (r1, r2) = (pair[0], *pair.get(1).unwrap_or(&0.0));
            sections.push(Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -(r1 + r2), r1 * r2],
            });
        }

        // Unit gain at the digital image of the analog centre frequency.
        let f0 = fs / std::f64::consts::PI * (wo / fs2).atan();
        let mut filter = SosFilter { sections, fs };
        let g = filter.magnitude_at(f0);
        filter.sections[0].b.iter_mut().for_each(|b| *b /= g);
        Ok(filter)
    }

    /// |H(e^{jω})| at `freq_hz` for a single pass.
    pub fn magnitude_at(&self, freq_hz: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq_hz / self.fs;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
            .norm()
    }

    /// Odd-extension pad length used by [`SosFilter::filtfilt`].
    pub fn pad_len(&self) -> usize {
        3 * (2 * self.sections.len() + 1)
    }

    fn initial_states(&self, x0: f64) -> Vec<[f64; 2]> {
        let mut scale = x0;
        self.sections
            .iter()
            .map(|s| {
                let st = s.step_state();
                let out = [st[0] * scale, st[1] * scale];
                scale *= s.dc_gain();
                out
            })
            .collect()
    }

    fn run(&self, x: &mut [f64], mut state: Vec<[f64; 2]>) {
        for (s, z) in self.sections.iter().zip(state.iter_mut()) {
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            for v in x.iter_mut() {
                let input = *v;
                let y = b0 * input + z[0];
                z[0] = b1 * input - a1 * y + z[1];
                z[1] = b2 * input - a2 * y;
                *v = y;
            }
        }
    }

    /// Forward-backward filtering with odd reflection at both ends and
    /// steady-state initial conditions.
    pub fn filtfilt(&self, x: &[f64]) -> Result<Vec<f64>, PreprocessError> {
        let pad = self.pad_len();
        if x.len() <= pad {
            return Err(PreprocessError::TooShort {
                len: x.len(),
                needed: pad + 1,
            });
        }
        let n = x.len();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let x0 = ext[0];
        self.run(&mut ext, self.initial_states(x0));
        ext.reverse();
        let y0 = ext[0];
        self.run(&mut ext, self.initial_states(y0));
        ext.reverse();
        Ok(ext[pad..pad + n].to_vec())
    }
}

/// Zero-phase band-pass of a whole trace.
pub fn bandpass_filter(
    trace: &SignalTrace,
    spec: &FilterSpec,
) -> Result<SignalTrace, PreprocessError> {
    let filter = SosFilter::butterworth_bandpass(spec, trace.fs)?;
    Ok(SignalTrace {
        label: trace.label.clone(),
        fs: trace.fs,
        samples: filter.filtfilt(&trace.samples)?,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn sine(freq: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / fs).sin())
            .collect()
    }

    fn trace(samples: Vec<f64>) -> SignalTrace {
        SignalTrace::new("EEG", 100.0, samples)
    }

    fn peak(xs: &[f64]) -> f64 {
        xs.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn design_is_stable_with_expected_section_count() {
        let f = SosFilter::butterworth_bandpass(&FilterSpec::default(), 100.0).unwrap();
        assert_eq!(f.sections.len(), 4);
        for s in &f.sections {
            // roots of z² + a1 z + a2 inside the unit circle
            assert!(s.a[2].abs() < 1.0);
            assert!(s.a[1].abs() < 1.0 + s.a[2]);
        }
    }

    #[test]
    fn magnitude_response_shape() {
        let f = SosFilter::butterworth_bandpass(&FilterSpec::default(), 100.0).unwrap();
        // -3 dB at both edges for a Butterworth design
        assert!((f.magnitude_at(0.5) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!((f.magnitude_at(40.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!((f.magnitude_at(10.0) - 1.0).abs() < 0.01);
        assert!(f.magnitude_at(0.1) < 0.01);
    }

    #[test]
    fn constant_input_vanishes() {
        let y = bandpass_filter(&trace(vec![5.0; 6000]), &FilterSpec::default()).unwrap();
        assert!(peak(&y.samples[500..5500]) < 1e-3);
    }

    #[test]
    fn ten_hz_passes() {
        let y = bandpass_filter(&trace(sine(10.0, 100.0, 6000)), &FilterSpec::default()).unwrap();
        let mid = peak(&y.samples[1000..5000]);
        assert!((mid - 1.0).abs() < 0.05, "{mid}");
    }

    #[test]
    fn slow_drift_attenuated() {
        // 0.1 Hz needs a long window to see several cycles
        let y = bandpass_filter(&trace(sine(0.1, 100.0, 60_000)), &FilterSpec::default()).unwrap();
        let mid = peak(&y.samples[15_000..45_000]);
        assert!(mid <= 0.1, "{mid}");
    }

    #[test]
    fn rejects_bad_band_and_short_input() {
        let bad = FilterSpec {
            low_hz: 0.5,
            high_hz: 60.0,
            ..FilterSpec::default()
        };
        assert!(matches!(
            bandpass_filter(&trace(vec![0.0; 1000]), &bad),
            Err(PreprocessError::InvalidBand { .. })
        ));
        assert!(matches!(
            bandpass_filter(&trace(vec![0.0; 27]), &FilterSpec::default()),
            Err(PreprocessError::TooShort { .. })
        ));
    }

    #[test]
    fn zero_phase_peak_at_lag_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw: Vec<f64> = (0..4000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // band-limit first so the reference is in the passband
        let x = bandpass_filter(
            &trace(raw),
            &FilterSpec {
                low_hz: 2.0,
                high_hz: 20.0,
                ..FilterSpec::default()
            },
        )
        .unwrap()
        .samples;
        let y = bandpass_filter(&trace(x.clone()), &FilterSpec::default())
            .unwrap()
            .samples;
        let xcorr = |lag: i64| -> f64 {
            (500..3500)
                .map(|i| x[i] * y[(i as i64 + lag) as usize])
                .sum()
        };
        let best = (-20..=20)
            .max_by(|&a, &b| xcorr(a).total_cmp(&xcorr(b)))
            .unwrap();
        assert_eq!(best, 0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn filter_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..800).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let y: Vec<f64> = (0..800).map(|_| rng.gen_range(-50.0..50.0)).collect();
            let spec = FilterSpec::default();
            let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let fm = bandpass_filter(&trace(mix), &spec).unwrap().samples;
            let fx = bandpass_filter(&trace(x), &spec).unwrap().samples;
            let fy = bandpass_filter(&trace(y), &spec).unwrap().samples;
            for i in 0..fm.len() {
                prop_assert!((fm[i] - (a * fx[i] + b * fy[i])).abs() < 1e-9);
            }
        }
    }
}
