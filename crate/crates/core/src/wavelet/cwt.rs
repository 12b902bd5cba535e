use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::WaveletError;

/// Log-spaced Morlet scales, in samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleGrid {
    pub scales: Vec<f64>,
    pub omega0: f64,
    pub fs: f64,
}

impl ScaleGrid {
    /// `count` scales whose pseudo-frequencies run log-uniformly from
    /// `f_max` down to `f_min`.
    pub fn log_spaced(
        f_min: f64,
        f_max: f64,
        count: usize,
        omega0: f64,
        fs: f64,
    ) -> Result<Self, WaveletError> {
        if count == 0 {
            return Err(WaveletError::EmptyScaleGrid);
        }
        if !(f_min > 0.0 && f_min < f_max && omega0 > 0.0 && fs > 0.0) {
            return Err(WaveletError::InvalidGrid(format!(
                "{f_min}-{f_max} Hz, ω0 {omega0}, fs {fs}"
            )));
        }
        let ratio = if count > 1 {
            (f_min / f_max).powf(1.0 / (count - 1) as f64)
        } else {
            1.0
        };
        let mut grid = ScaleGrid {
            scales: Vec::with_capacity(count),
            omega0,
            fs,
        };
        for i in 0..count {
            let f = if i + 1 == count {
                f_min
            } else {
                f_max * ratio.powi(i as i32)
            };
            grid.scales.push(grid.scale_for(f));
        }
        Ok(grid)
    }

    /// Default analysis grid: 64 scales over 0.5–40 Hz, ω0 = 6.
    pub fn eeg_default(fs: f64) -> Self {
        Self::log_spaced(0.5, 40.0, 64, 6.0, fs).expect("static grid parameters are valid")
    }

    pub fn frequency_of(&self, scale: f64) -> f64 {
        self.omega0 / (2.0 * PI) * self.fs / scale
    }

    pub fn scale_for(&self, freq_hz: f64) -> f64 {
        self.omega0 / (2.0 * PI) * self.fs / freq_hz
    }

    fn validate(&self) -> Result<(), WaveletError> {
        if self.scales.is_empty() {
            return Err(WaveletError::EmptyScaleGrid);
        }
        let increasing = self.scales.windows(2).all(|w| w[0] < w[1]);
        if !increasing || self.scales[0] <= 0.0 || !(self.omega0 > 0.0) || !(self.fs > 0.0) {
            return Err(WaveletError::InvalidGrid(
                "scales must be positive and strictly increasing".into(),
            ));
        }
        Ok(())
    }
}

/// Pseudo-frequency (Hz) of every scale in the grid.
pub fn scale_frequency_map(grid: &ScaleGrid) -> Vec<f64> {
    grid.scales.iter().map(|&a| grid.frequency_of(a)).collect()
}

/// |W(a, b)| for every scale (rows) and time sample (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct Scalogram {
    pub magnitudes: Vec<Vec<f64>>,
    pub grid: ScaleGrid,
}

impl Scalogram {
    pub fn n_times(&self) -> usize {
        self.magnitudes.first().map_or(0, Vec::len)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        scale_frequency_map(&self.grid)
    }
}

/// Precomputed Morlet spectra for one signal length and grid.
///
/// Shared across epochs of the same length; immutable after construction.
pub struct CwtPlan {
    grid: ScaleGrid,
    n: usize,
    fft_len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    kernels: Vec<Vec<f64>>,
}

impl std::fmt::Debug for CwtPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CwtPlan")
            .field("n", &self.n)
            .field("fft_len", &self.fft_len)
            .field("scales", &self.grid.scales.len())
            .finish()
    }
}

fn smooth_len(min: usize) -> usize {
    (min..)
        .find(|&m| {
            let mut v = m;
            for p in [2, 3, 5] {
                while v % p == 0 {
                    v /= p;
                }
            }
            v == 1
        })
        .expect("5-smooth numbers are unbounded")
}

impl CwtPlan {
    pub fn new(grid: &ScaleGrid, n: usize) -> Result<Self, WaveletError> {
        grid.validate()?;
        if n == 0 {
            return Err(WaveletError::EmptySignal);
        }
        let a_max = grid.scales.last().copied().unwrap_or(1.0);
        // zero padding past the Morlet envelope keeps the correlation linear
        let guard = (4.0 * a_max).ceil() as usize + 1;
        let fft_len = smooth_len(n + 2 * guard);
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);

        let norm = PI.powf(-0.25) * (2.0 * PI).sqrt();
        let kernels = grid
            .scales
            .iter()
            .map(|&a| {
                (0..fft_len)
                    .map(|k| {
                        // DTFT of the sampled wavelet: the continuous
                        // spectrum summed over its 2π aliases, which keeps
                        // fine scales smooth across Nyquist.
                        let w = 2.0 * PI * k as f64 / fft_len as f64;
                        (-3..=1)
                            .map(|m| {
                                let arg = a * (w + 2.0 * PI * f64::from(m)) - grid.omega0;
                                (-0.5 * arg * arg).exp()
                            })
                            .sum::<f64>()
                            * a.sqrt()
                            * norm
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            grid: grid.clone(),
            n,
            fft_len,
            forward,
            inverse,
            kernels,
        })
    }

    pub fn grid(&self) -> &ScaleGrid {
        &self.grid
    }

    pub fn signal_len(&self) -> usize {
        self.n
    }

    pub fn transform(&self, x: &[f64]) -> Result<Scalogram, WaveletError> {
        if x.len() != self.n {
            return Err(WaveletError::LengthMismatch {
                expected: self.n,
                got: x.len(),
            });
        }
        let mut spectrum: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        spectrum.resize(self.fft_len, Complex64::new(0.0, 0.0));
        self.forward.process(&mut spectrum);

        let scale = 1.0 / self.fft_len as f64;
        let mut buf = vec![Complex64::new(0.0, 0.0); self.fft_len];
        let magnitudes = self
            .kernels
            .iter()
            .map(|kernel| {
                for ((b, s), &k) in buf.iter_mut().zip(&spectrum).zip(kernel) {
                    *b = s * k;
                }
                self.inverse.process(&mut buf);
                buf[..self.n].iter().map(|c| c.norm() * scale).collect()
            })
            .collect();
        Ok(Scalogram {
            magnitudes,
            grid: self.grid.clone(),
        })
    }
}

/// Complex-Morlet CWT magnitudes via per-scale frequency-domain products.
pub fn cwt_scalogram(x: &[f64], grid: &ScaleGrid) -> Result<Scalogram, WaveletError> {
    CwtPlan::new(grid, x.len())?.transform(x)
}

#[cfg(test)]
mod tests {
    use num_complex::Complex64 as C;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn sine(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / 100.0).sin())
            .collect()
    }

    /// Direct time-domain evaluation of (1/√a) Σ x(t) ψ*((t−b)/a).
    fn direct(x: &[f64], a: f64, b: usize, omega0: f64) -> f64 {
        let mut acc = C::new(0.0, 0.0);
        for (t, &v) in x.iter().enumerate() {
            let u = (t as f64 - b as f64) / a;
            if u.abs() > 10.0 {
                continue;
            }
            let psi = C::from_polar(PI.powf(-0.25) * (-0.5 * u * u).exp(), omega0 * u);
            acc += v * psi.conj();
        }
        acc.norm() / a.sqrt()
    }

    #[test]
    fn frequency_map_closed_form() {
        let grid = ScaleGrid {
            scales: vec![9.5493, 19.0986],
            omega0: 6.0,
            fs: 100.0,
        };
        let f = scale_frequency_map(&grid);
        assert!((f[0] - 10.0).abs() < 1e-4);
        assert!((f[1] - f[0] / 2.0).abs() < 1e-9);
        let g = ScaleGrid::eeg_default(100.0);
        for &a in &g.scales {
            assert!((g.scale_for(g.frequency_of(a)) - a).abs() < 1e-9);
        }
        let freqs = scale_frequency_map(&g);
        assert!((freqs[0] - 40.0).abs() < 1e-9 && (freqs[63] - 0.5).abs() < 1e-9);
        assert!(freqs.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn matches_direct_convolution_in_interior() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grid = ScaleGrid::log_spaced(2.0, 30.0, 6, 6.0, 100.0).unwrap();
        let s = cwt_scalogram(&x, &grid).unwrap();
        for (row, &a) in grid.scales.iter().enumerate() {
            for b in [300, 500, 700] {
                let d = direct(&x, a, b, 6.0);
                let got = s.magnitudes[row][b];
                assert!(
                    (got - d).abs() < 1e-9 * d.max(1.0),
                    "a={a} b={b}: {got} vs {d}"
                );
            }
        }
    }

    #[test]
    fn zero_and_linearity() {
        let grid = ScaleGrid::eeg_default(100.0);
        let z = cwt_scalogram(&[0.0; 500], &grid).unwrap();
        assert!(z.magnitudes.iter().flatten().all(|&v| v == 0.0));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x: Vec<f64> = (0..500).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let s1 = cwt_scalogram(&x, &grid).unwrap();
        let s2 = cwt_scalogram(&x2, &grid).unwrap();
        for (r1, r2) in s1.magnitudes.iter().zip(&s2.magnitudes) {
            for (a, b) in r1.iter().zip(r2) {
                assert!((2.0 * a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn ten_hz_ridge() {
        let grid = ScaleGrid::eeg_default(100.0);
        let s = cwt_scalogram(&sine(10.0, 3000), &grid).unwrap();
        let freqs = s.frequencies();
        let interior = 500..2500;
        let row_mean = |r: usize| s.magnitudes[r][interior.clone()].iter().sum::<f64>();
        let best = (0..freqs.len())
            .max_by(|&a, &b| row_mean(a).total_cmp(&row_mean(b)))
            .unwrap();
        assert!((freqs[best] - 10.0).abs() <= 0.5, "{}", freqs[best]);
    }

    #[test]
    fn shift_covariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let long: Vec<f64> = (0..3200).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let k = 37;
        let grid = ScaleGrid::eeg_default(100.0);
        let plan = CwtPlan::new(&grid, 3000).unwrap();
        let a = plan.transform(&long[k..k + 3000]).unwrap();
        let b = plan.transform(&long[..3000]).unwrap();
        // rows whose envelope stays inside the interior window
        for (row, &scale) in grid.scales.iter().enumerate().filter(|(_, &s)| s < 60.0) {
            for t in 700..2300 {
                let d = (b.magnitudes[row][t + k] - a.magnitudes[row][t]).abs();
                assert!(
                    d < 1e-9 * (1.0 + a.magnitudes[row][t]),
                    "scale {scale} t {t}: {d}"
                );
            }
        }
    }

    #[test]
    fn empty_grid_rejected() {
        let g = ScaleGrid {
            scales: vec![],
            omega0: 6.0,
            fs: 100.0,
        };
        assert!(matches!(
            cwt_scalogram(&[1.0], &g),
            Err(WaveletError::EmptyScaleGrid)
        ));
    }
}
