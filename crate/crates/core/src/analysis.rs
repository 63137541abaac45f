//! Observables computed from recordings: amplitude maps, transmission
//! ratios, out-of-plane angle traces, spectra and wavelengths.

use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::TraceRecord;
use crate::error::{Error, Result};
use crate::vec3::{norm, Vec3};
use crate::MU0;

/// Angle between `v` and +z in degrees, `None` for a zero vector.
pub fn theta_of(v: Vec3) -> Option<f64> {
    let n = norm(v);
    (n > 0.0).then(|| (v[2] / n).clamp(-1.0, 1.0).acos().to_degrees())
}

/// θ(t) of a probe record as `(t, θ_deg)` pairs.
pub fn theta_trace(record: &TraceRecord) -> Result<Vec<(f64, f64)>> {
    record
        .t
        .iter()
        .zip(&record.m)
        .map(|(&t, &v)| {
            theta_of(v)
                .map(|th| (t, th))
                .ok_or_else(|| Error::Analysis(format!("zero average magnetization at t = {t:e}")))
        })
        .collect()
}

/// Sampling plan for a time-averaged amplitude map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeWindow {
    pub t0: f64,
    pub t1: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmplitudeMap {
    /// Time-averaged √(mx²+my²) per grid cell (0 outside the active set).
    pub values: Vec<f64>,
    pub window: (f64, f64),
    pub samples: usize,
}

impl AmplitudeMap {
    pub fn region_mean(&self, cells: &[usize]) -> Result<f64> {
        if cells.is_empty() {
            return Err(Error::Analysis("empty region".into()));
        }
        Ok(cells.iter().map(|&i| self.values[i]).sum::<f64>() / cells.len() as f64)
    }
}

/// Running sum for [`AmplitudeMap`].
#[derive(Debug, Clone)]
pub struct AmplitudeAccumulator {
    sum: Vec<f64>,
    samples: usize,
    window: (f64, f64),
}

impl AmplitudeAccumulator {
    pub fn new(n_cells: usize, window: (f64, f64)) -> Self {
        Self {
            sum: vec![0.0; n_cells],
            samples: 0,
            window,
        }
    }

    pub fn add(&mut self, m: &[Vec3], cells: &[usize]) {
        for &i in cells {
            self.sum[i] += m[i][0].hypot(m[i][1]);
        }
        self.samples += 1;
    }

    pub fn finish(self) -> Result<AmplitudeMap> {
        if self.samples < 10 {
            return Err(Error::Analysis(format!(
                "amplitude window holds {} samples, need at least 10",
                self.samples
            )));
        }
        let inv = 1.0 / self.samples as f64;
        Ok(AmplitudeMap {
            values: self.sum.into_iter().map(|s| s * inv).collect(),
            window: self.window,
            samples: self.samples,
        })
    }
}

/// Amplitude map from stored frames `(t, m)`; frames outside `window` are ignored.
pub fn amplitude_map(frames: &[(f64, &[Vec3])], cells: &[usize], window: (f64, f64)) -> Result<AmplitudeMap> {
    let n = frames.first().map(|f| f.1.len()).unwrap_or(0);
    let mut acc = AmplitudeAccumulator::new(n, window);
    for (t, m) in frames {
        if *t >= window.0 && *t <= window.1 {
            acc.add(m, cells);
        }
    }
    acc.finish()
}

/// Mean amplitude over `to` divided by mean amplitude over `from`.
pub fn transmission_ratio(map: &AmplitudeMap, from: &[usize], to: &[usize]) -> Result<f64> {
    let a_in = map.region_mean(from)?;
    if a_in <= 0.0 {
        return Err(Error::Analysis("zero input amplitude".into()));
    }
    Ok(map.region_mean(to)? / a_in)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumResult {
    pub freqs: Vec<f64>,
    pub magnitude: Vec<f64>,
    pub source: String,
}

impl SpectrumResult {
    /// Frequency of the largest bin above DC.
    pub fn peak_frequency(&self) -> Option<f64> {
        self.magnitude
            .iter()
            .enumerate()
            .skip(1)
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| self.freqs[i])
    }

    /// Magnitude-weighted mean frequency (excluding DC).
    pub fn centroid(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (f, a) in self.freqs.iter().zip(&self.magnitude).skip(1) {
            num += f * a;
            den += a;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

/// Hann-windowed magnitude spectrum of mx over `window`.
pub fn spectrum(record: &TraceRecord, window: (f64, f64)) -> Result<SpectrumResult> {
    let idx: Vec<usize> = (0..record.len())
        .filter(|&i| record.t[i] >= window.0 && record.t[i] <= window.1)
        .collect();
    if idx.len() < 8 {
        return Err(Error::Analysis(format!(
            "spectrum needs at least 8 samples, window holds {}",
            idx.len()
        )));
    }
    let dt = record.t[idx[1]] - record.t[idx[0]];
    for w in idx.windows(2) {
        let d = record.t[w[1]] - record.t[w[0]];
        if (d - dt).abs() > 1e-6 * dt {
            return Err(Error::Analysis("non-uniform sampling".into()));
        }
    }
    let n = idx.len();
    let mean = idx.iter().map(|&i| record.m[i][0]).sum::<f64>() / n as f64;
    let hann: Vec<f64> = (0..n)
        .map(|k| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos())
        .collect();
    let wsum: f64 = hann.iter().sum();
    let mut buf: Vec<f64> = idx
        .iter()
        .zip(&hann)
        .map(|(&i, w)| (record.m[i][0] - mean) * w)
        .collect();
    let fft = RealFftPlanner::<f64>::new().plan_fft_forward(n);
    let mut out = fft.make_output_vec();
    fft.process(&mut buf, &mut out)
        .map_err(|e| Error::Analysis(e.to_string()))?;
    let df = 1.0 / (n as f64 * dt);
    Ok(SpectrumResult {
        freqs: (0..out.len()).map(|k| k as f64 * df).collect(),
        magnitude: out.iter().map(|c| 2.0 * c.norm() / wsum).collect(),
        source: record.name.clone(),
    })
}

/// Exchange-dominated spin-wave frequency of a perpendicular film, Hz.
pub fn dispersion_frequency(k: f64, hk: f64, a_ex: f64, ms: f64, gamma: f64) -> f64 {
    gamma / (2.0 * std::f64::consts::PI) * (hk + 2.0 * a_ex / (MU0 * ms) * k * k)
}

/// Wavelength from a sampled profile: twice the spacing of the zero crossings
/// that bracket the largest |value|. Units follow `x`.
pub fn estimate_wavelength(x: &[f64], v: &[f64]) -> Result<f64> {
    if x.len() != v.len() || x.len() < 3 {
        return Err(Error::Analysis("profile too short".into()));
    }
    let mut crossings = Vec::new();
    for i in 0..v.len() - 1 {
        let (a, b) = (v[i], v[i + 1]);
        if a == 0.0 {
            crossings.push(x[i]);
        } else if a * b < 0.0 {
            crossings.push(x[i] + (x[i + 1] - x[i]) * a / (a - b));
        }
    }
    if crossings.len() < 2 {
        return Err(Error::Analysis(format!(
            "need two zero crossings, found {}",
            crossings.len()
        )));
    }
    let peak = (0..v.len())
        .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
        .expect("non-empty");
    let xp = x[peak];
    let left = crossings.iter().rev().find(|&&c| c < xp);
    let right = crossings.iter().find(|&&c| c > xp);
    match (left, right) {
        (Some(l), Some(r)) => Ok(2.0 * (r - l)),
        // Extremum beyond the outermost crossing: use the nearest pair.
        (None, _) => Ok(2.0 * (crossings[1] - crossings[0])),
        (_, None) => {
            let n = crossings.len();
            Ok(2.0 * (crossings[n - 1] - crossings[n - 2]))
        }
    }
}
