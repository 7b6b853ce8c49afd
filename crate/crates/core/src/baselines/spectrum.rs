use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Two-sided DFT `X_k = Σ_t x_t e^{−2πi kt/n}` by direct summation, as `(re, im)` pairs.
pub fn dft(series: &[f64]) -> Vec<(f64, f64)> {
    let n = series.len();
    (0..n)
        .map(|k| {
            let mut re = 0.0;
            let mut im = 0.0;
            for (t, &x) in series.iter().enumerate() {
                // Reduce kt mod n first so the angle stays small and exact.
                let angle = -2.0 * PI * ((k * t) % n) as f64 / n as f64;
                re += x * angle.cos();
                im += x * angle.sin();
            }
            (re, im)
        })
        .collect()
}

/// Single-sided amplitude spectrum over bins `0..=n/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Cycles per sample.
    pub frequencies: Vec<f64>,
    /// `|X_k| / n`, doubled for bins strictly between 0 and the Nyquist bin.
    pub magnitudes: Vec<f64>,
}

impl Spectrum {
    pub fn dominant_bin(&self) -> usize {
        let mut best = 0;
        for (k, &m) in self.magnitudes.iter().enumerate() {
            if m > self.magnitudes[best] {
                best = k;
            }
        }
        best
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin,frequency,magnitude\n");
        for (k, (f, m)) in self.frequencies.iter().zip(&self.magnitudes).enumerate() {
            let _ = writeln!(s, "{k},{f:.16e},{m:.16e}");
        }
        s
    }
}

pub fn fourier_spectrum(series: &[f64]) -> Result<Spectrum> {
    let n = series.len();
    if n < 2 {
        return Err(Error::invalid("spectrum needs at least two samples"));
    }
    let x = dft(series);
    let half = n / 2;
    let magnitudes = (0..=half)
        .map(|k| {
            let (re, im) = x[k];
            let m = re.hypot(im) / n as f64;
            let interior = k > 0 && !(n % 2 == 0 && k == half);
            if interior {
                2.0 * m
            } else {
                m
            }
        })
        .collect();
    Ok(Spectrum {
        frequencies: (0..=half).map(|k| k as f64 / n as f64).collect(),
        magnitudes,
    })
}
