//! Landau-Lifshitz-Gilbert time integration.

mod integrator;
mod run;

use serde::{Deserialize, Serialize};

pub use integrator::{Integrator, StepStats};
pub use run::{relax_initial_state, run_simulation, RelaxConfig, RunOptions, RunOutput, Snapshot};

use crate::error::{Error, Result};
use crate::fields::VectorField;
use crate::vec3::{cross, Vec3};
use crate::GAMMA_DEFAULT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub m: VectorField,
    /// Seconds.
    pub t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rk45Adaptive,
    Rk4Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Initial step; the fixed step for [`Method::Rk4Fixed`].
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    /// Bound on the per-step local error of any cell's |Δm|.
    pub tol: f64,
    /// Gyromagnetic ratio, m/(A·s).
    pub gamma: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk45Adaptive,
            dt_init: 1e-14,
            dt_min: 1e-15,
            dt_max: 1e-12,
            tol: 1e-5,
            gamma: GAMMA_DEFAULT,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.dt_min > 0.0 && self.dt_min <= self.dt_init && self.dt_init <= self.dt_max) {
            return bad(format!(
                "need 0 < dt_min <= dt_init <= dt_max, got {:e}, {:e}, {:e}",
                self.dt_min, self.dt_init, self.dt_max
            ));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.tol));
        }
        if !(self.gamma > 0.0) {
            return bad(format!("gamma must be > 0, got {}", self.gamma));
        }
        Ok(())
    }
}

/// Averaging probe over a set of cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub name: String,
    pub cells: Vec<usize>,
    /// Sampling period, s.
    pub period: f64,
}

/// Region-averaged magnetization samples of one probe.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub name: String,
    pub t: Vec<f64>,
    pub m: Vec<Vec3>,
}

impl TraceRecord {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            ..Default::default()
        }
    }

    pub fn push(&mut self, t: f64, m: Vec3) {
        self.t.push(t);
        self.m.push(m);
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Sample at time `t` (within half a femtosecond).
    pub fn sample_at(&self, t: f64) -> Option<Vec3> {
        let i = self.t.partition_point(|&s| s < t - 5e-16);
        (i < self.t.len() && (self.t[i] - t).abs() <= 5e-16).then(|| self.m[i])
    }

    /// θ in degrees for each sample; `None` where the average vanishes.
    pub fn theta_deg(&self) -> Vec<Option<f64>> {
        self.m.iter().map(|&v| crate::analysis::theta_of(v)).collect()
    }
}

/// dm/dt of a single cell.
#[inline(always)]
pub fn llg_cell(m: Vec3, h: Vec3, alpha: f64, gamma: f64) -> Vec3 {
    let mxh = cross(m, h);
    let mxmxh = cross(m, mxh);
    let pre = -gamma / (1.0 + alpha * alpha);
    [
        pre * (mxh[0] + alpha * mxmxh[0]),
        pre * (mxh[1] + alpha * mxmxh[1]),
        pre * (mxh[2] + alpha * mxmxh[2]),
    ]
}

/// dm/dt over `cells`; other entries of `out` are untouched.
pub fn llg_rhs(
    m: &[Vec3],
    h: &[Vec3],
    alpha: &[f64],
    gamma: f64,
    cells: &[usize],
    out: &mut [Vec3],
) {
    for &i in cells {
        out[i] = llg_cell(m[i], h[i], alpha[i], gamma);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec3::{dot, normalize};

    #[test]
    fn aligned_is_fixed_point() {
        let d = llg_cell([0.0, 0.0, 1.0], [0.0, 0.0, 5e4], 0.1, GAMMA_DEFAULT);
        assert_eq!(d, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn damping_increases_alignment() {
        let m = normalize([0.3, -0.2, 0.9]);
        let h = [0.0, 0.0, 1e5];
        let d = llg_cell(m, h, 0.05, GAMMA_DEFAULT);
        assert!(dot(d, [0.0, 0.0, 1.0]) > 0.0);
        // The torque is perpendicular to m.
        assert!(dot(d, m).abs() < 1e-6 * (d[0].abs() + d[1].abs()));
    }

    #[test]
    fn precession_sense_and_rate() {
        let m = [1.0, 0.0, 0.0];
        let h = [0.0, 0.0, 1e5];
        let d = llg_cell(m, h, 0.0, GAMMA_DEFAULT);
        // dm/dt = -γ m×H = -γ(0·, -H, 0) → +y
        assert!((d[1] - GAMMA_DEFAULT * 1e5).abs() < 1e-6);
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::default().validate().is_ok());
        let c = IntegratorConfig {
            dt_min: 1e-12,
            dt_init: 1e-14,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn sample_lookup() {
        let mut r = TraceRecord::new("p");
        r.push(0.0, [1.0, 0.0, 0.0]);
        r.push(1e-12, [0.0, 1.0, 0.0]);
        assert_eq!(r.sample_at(1e-12), Some([0.0, 1.0, 0.0]));
        assert_eq!(r.sample_at(2e-12), None);
    }
}
