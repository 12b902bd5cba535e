use serde::{Deserialize, Serialize};

use super::WaveletError;

/// Daubechies-4 scaling (low-pass reconstruction) filter, 8 taps,
/// minimum-phase root selection.
pub const DB4_LOWPASS: [f64; 8] = [
    0.230_377_813_308_855_23,
    0.714_846_570_552_541_5,
    0.630_880_767_929_590_4,
    -0.027_983_769_416_983_85,
    -0.187_034_811_718_881_14,
    0.030_841_381_835_986_965,
    0.032_883_011_666_982_945,
    -0.010_597_401_784_997_278,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WaveletFamily {
    #[default]
    Daubechies,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaveletSpec {
    pub family: WaveletFamily,
    pub taps: usize,
    pub levels: usize,
    pub boundary: Boundary,
}

impl Default for WaveletSpec {
    fn default() -> Self {
        Self::db4(5)
    }
}

impl WaveletSpec {
    pub fn db4(levels: usize) -> Self {
        Self {
            family: WaveletFamily::Daubechies,
            taps: 8,
            levels,
            boundary: Boundary::Periodic,
        }
    }

    fn validate(&self) -> Result<(), WaveletError> {
        if self.taps != 8 {
            return Err(WaveletError::UnsupportedWavelet { taps: self.taps });
        }
        if self.levels == 0 || self.levels > 30 {
            return Err(WaveletError::InvalidLevels(self.levels));
        }
        Ok(())
    }

    fn lowpass(&self) -> &'static [f64] {
        &DB4_LOWPASS
    }

    /// Padded length for a signal of `n` samples: next multiple of `2^levels`.
    pub fn padded_len(&self, n: usize) -> usize {
        let block = 1usize << self.levels;
        n.div_ceil(block) * block
    }
}

/// Quadrature-mirror high-pass from a low-pass filter.
fn highpass(lo: &[f64]) -> Vec<f64> {
    let l = lo.len();
    (0..l)
        .map(|n| {
            if n % 2 == 0 {
                lo[l - 1 - n]
            } else {
                -lo[l - 1 - n]
            }
        })
        .collect()
}

/// Multilevel decomposition: `details[0]` is D1 (finest), `approximation`
/// is A_L.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubbandSet {
    pub approximation: Vec<f64>,
    pub details: Vec<Vec<f64>>,
    pub original_length: usize,
    pub spec: WaveletSpec,
}

impl SubbandSet {
    pub fn padded_len(&self) -> usize {
        self.approximation.len() << self.details.len()
    }

    /// Subbands in feature order D1..DL then A_L.
    pub fn bands(&self) -> impl Iterator<Item = &[f64]> {
        self.details
            .iter()
            .map(Vec::as_slice)
            .chain(std::iter::once(self.approximation.as_slice()))
    }

    /// Nominal `[lo, hi]` frequency span (Hz) of band `i` in [`Self::bands`] order.
    pub fn band_span_hz(&self, i: usize, fs: f64) -> (f64, f64) {
        let levels = self.details.len();
        if i < levels {
            let k = (i + 1) as i32;
            (fs / 2f64.powi(k + 1), fs / 2f64.powi(k))
        } else {
            (0.0, fs / 2f64.powi(levels as i32 + 1))
        }
    }
}

fn analysis_step(x: &[f64], lo: &[f64], hi: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let half = n / 2;
    let mut a = vec![0.0; half];
    let mut d = vec![0.0; half];
    for k in 0..half {
        let (mut sa, mut sd) = (0.0, 0.0);
        for (j, (&h, &g)) in lo.iter().zip(hi).enumerate() {
            let v = x[(2 * k + j) % n];
            sa += h * v;
            sd += g * v;
        }
        a[k] = sa;
        d[k] = sd;
    }
    (a, d)
}

fn synthesis_step(a: &[f64], d: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = a.len() * 2;
    let mut x = vec![0.0; n];
    for k in 0..a.len() {
        for (j, (&h, &g)) in lo.iter().zip(hi).enumerate() {
            x[(2 * k + j) % n] += h * a[k] + g * d[k];
        }
    }
    x
}

/// Periodic orthonormal DWT. The input is extended by symmetric reflection
/// of its tail up to the next multiple of `2^levels`.
pub fn dwt_multilevel(x: &[f64], spec: &WaveletSpec) -> Result<SubbandSet, WaveletError> {
    spec.validate()?;
    let min = 1usize << spec.levels;
    if x.len() < min {
        return Err(WaveletError::TooShortForLevels {
            len: x.len(),
            levels: spec.levels,
        });
    }
    let padded = spec.padded_len(x.len());
    let mut cur = Vec::with_capacity(padded);
    cur.extend_from_slice(x);
    let n = x.len();
    for i in 0..padded - n {
        // reflect without repeating the edge sample
        cur.push(x[n - 2 - (i % (n - 1))]);
    }

    let lo = spec.lowpass();
    let hi = highpass(lo);
    let mut details = Vec::with_capacity(spec.levels);
    for _ in 0..spec.levels {
        let (a, d) = analysis_step(&cur, lo, &hi);
        details.push(d);
        cur = a;
    }
    Ok(SubbandSet {
        approximation: cur,
        details,
        original_length: n,
        spec: *spec,
    })
}

/// Inverse of [`dwt_multilevel`], truncated to the original length.
pub fn idwt_multilevel(s: &SubbandSet) -> Result<Vec<f64>, WaveletError> {
    s.spec.validate()?;
    let levels = s.details.len();
    if levels != s.spec.levels || s.approximation.is_empty() {
        return Err(WaveletError::InconsistentSubbands(format!(
            "{levels} detail bands for {} levels",
            s.spec.levels
        )));
    }
    for (k, d) in s.details.iter().enumerate() {
        let expected = s.approximation.len() << (levels - 1 - k);
        if d.len() != expected {
            return Err(WaveletError::InconsistentSubbands(format!(
                "D{} has {} coefficients, expected {expected}",
                k + 1,
                d.len()
            )));
        }
    }
    if s.original_length > s.padded_len() {
        return Err(WaveletError::InconsistentSubbands(format!(
            "original length {} exceeds padded length {}",
            s.original_length,
            s.padded_len()
        )));
    }
    let lo = s.spec.lowpass();
    let hi = highpass(lo);
    let mut cur = s.approximation.clone();
    for d in s.details.iter().rev() {
        cur = synthesis_step(&cur, d, lo, &hi);
    }
    cur.truncate(s.original_length);
    Ok(cur)
}
