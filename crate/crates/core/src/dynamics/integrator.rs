use serde::{Deserialize, Serialize};

use super::{llg_cell, IntegratorConfig, Method, SimState};
use crate::error::{Error, Result};
use crate::fields::{FieldWorkspace, KExtra, Model};
use crate::vec3::{norm, normalize, Vec3, ZERO};

// Dormand-Prince 5(4) tableau.
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// Fifth minus fourth order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: u64,
    pub rejected: u64,
    pub field_evaluations: u64,
    pub smallest_dt: f64,
    pub largest_dt: f64,
    /// Largest `| |m| - 1 |` seen before renormalization.
    pub max_norm_drift: f64,
}

pub struct Integrator<'a> {
    model: &'a Model,
    cfg: IntegratorConfig,
    alpha: Vec<f64>,
    ws: FieldWorkspace,
    k: [Vec<Vec3>; 7],
    stage: Vec<Vec3>,
    h: Vec<Vec3>,
    dt_next: f64,
    fsal: bool,
    pub stats: StepStats,
}

impl<'a> Integrator<'a> {
    pub fn new(model: &'a Model, cfg: IntegratorConfig) -> Result<Self> {
        cfg.validate()?;
        let n = model.n_cells();
        Ok(Self {
            model,
            cfg,
            alpha: model.params.alpha.clone(),
            ws: model.workspace(),
            k: std::array::from_fn(|_| vec![ZERO; n]),
            stage: vec![ZERO; n],
            h: vec![ZERO; n],
            dt_next: cfg.dt_init,
            fsal: false,
            stats: StepStats {
                smallest_dt: f64::INFINITY,
                ..Default::default()
            },
        })
    }

    /// Uses `alpha` instead of the model's damping map.
    pub fn with_alpha(mut self, alpha: Vec<f64>) -> Self {
        assert_eq!(alpha.len(), self.alpha.len());
        self.alpha = alpha;
        self.fsal = false;
        self
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    /// Step size the next call will attempt.
    pub fn next_dt(&self) -> f64 {
        self.dt_next
    }

    /// Drop cached derivative data after `m` was modified externally.
    pub fn invalidate(&mut self) {
        self.fsal = false;
    }

    /// Effective field at the given state (also used for torque checks).
    pub fn field(&mut self, m: &[Vec3], k_extra: &KExtra) -> Result<&[Vec3]> {
        self.model
            .effective_field_into(m, k_extra, &mut self.h, &mut self.ws)?;
        Ok(&self.h)
    }

    fn rhs(&mut self, slot: usize, m_src: Option<&[Vec3]>, kx: &KExtra) -> Result<()> {
        let m = m_src.unwrap_or(&self.stage);
        self.model.effective_field_into(m, kx, &mut self.h, &mut self.ws)?;
        let gamma = self.cfg.gamma;
        let out = &mut self.k[slot];
        for &i in self.model.active() {
            out[i] = llg_cell(m[i], self.h[i], self.alpha[i], gamma);
        }
        self.stats.field_evaluations += 1;
        Ok(())
    }

    fn build_stage(&mut self, m: &[Vec3], s: usize, dt: f64) {
        let a = &A[s];
        for &i in self.model.active() {
            let mut v = m[i];
            for (j, &aj) in a.iter().enumerate().take(s) {
                if aj != 0.0 {
                    let kj = self.k[j][i];
                    let w = aj * dt;
                    v[0] += w * kj[0];
                    v[1] += w * kj[1];
                    v[2] += w * kj[2];
                }
            }
            self.stage[i] = v;
        }
    }

    /// Advances `state` by one accepted step without passing `t_limit`.
    /// Returns the step size used.
    pub fn step(
        &mut self,
        state: &mut SimState,
        k_of_t: &dyn Fn(f64) -> KExtra,
        t_limit: f64,
    ) -> Result<f64> {
        let remaining = t_limit - state.t;
        if remaining <= 0.0 {
            return Ok(0.0);
        }
        match self.cfg.method {
            Method::Rk45Adaptive => self.step_dp45(state, k_of_t, t_limit),
            Method::Rk4Fixed => self.step_rk4(state, k_of_t, t_limit),
        }
    }

    fn finish(&mut self, state: &mut SimState, dt: f64, landed: Option<f64>) {
        let mut drift: f64 = 0.0;
        for &i in self.model.active() {
            drift = drift.max((norm(self.stage[i]) - 1.0).abs());
            state.m[i] = normalize(self.stage[i]);
        }
        self.stats.max_norm_drift = self.stats.max_norm_drift.max(drift);
        state.t = landed.unwrap_or(state.t + dt);
        self.stats.accepted += 1;
        self.stats.smallest_dt = self.stats.smallest_dt.min(dt);
        self.stats.largest_dt = self.stats.largest_dt.max(dt);
    }

    fn step_dp45(
        &mut self,
        state: &mut SimState,
        k_of_t: &dyn Fn(f64) -> KExtra,
        t_limit: f64,
    ) -> Result<f64> {
        let t0 = state.t;
        if !self.fsal {
            let kx = k_of_t(t0);
            self.rhs(0, Some(&state.m), &kx)?;
            self.fsal = true;
        }
        loop {
            let mut dt = self.dt_next.min(self.cfg.dt_max);
            let mut landed = None;
            // Land exactly on the limit rather than leaving a sliver behind.
            if t0 + dt >= t_limit - 1e-3 * self.cfg.dt_min {
                dt = t_limit - t0;
                landed = Some(t_limit);
            }
            for s in 1..7 {
                self.build_stage(&state.m, s, dt);
                let kx = k_of_t(t0 + C[s] * dt);
                self.rhs(s, None, &kx)?;
            }
            // stage now holds the 5th-order solution (row 7 of A equals b).
            let mut err: f64 = 0.0;
            for &i in self.model.active() {
                let mut e = ZERO;
                for (j, &ej) in E.iter().enumerate() {
                    if ej != 0.0 {
                        let kj = self.k[j][i];
                        e[0] += ej * kj[0];
                        e[1] += ej * kj[1];
                        e[2] += ej * kj[2];
                    }
                }
                err = err.max((e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt());
            }
            err *= dt;
            if !err.is_finite() {
                err = f64::INFINITY;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * (self.cfg.tol / err).powf(0.2)).clamp(0.2, 5.0)
            };
            if err <= self.cfg.tol {
                // k6 was taken at the (unnormalized) solution; reuse it as k0.
                self.finish(state, dt, landed);
                self.k.swap(0, 6);
                if landed.is_none() || factor * dt < self.dt_next {
                    self.dt_next = (factor * dt).min(self.cfg.dt_max);
                }
                return Ok(dt);
            }
            self.stats.rejected += 1;
            let new_dt = dt * factor.min(0.9);
            if new_dt < self.cfg.dt_min {
                return Err(Error::StepUnderflow { t: t0, dt: new_dt });
            }
            self.dt_next = new_dt;
        }
    }

    fn step_rk4(
        &mut self,
        state: &mut SimState,
        k_of_t: &dyn Fn(f64) -> KExtra,
        t_limit: f64,
    ) -> Result<f64> {
        let t0 = state.t;
        let mut dt = self.cfg.dt_init;
        let mut landed = None;
        if t0 + dt >= t_limit - 1e-3 * self.cfg.dt_min {
            dt = t_limit - t0;
            landed = Some(t_limit);
        }
        let kx = k_of_t(t0);
        self.rhs(0, Some(&state.m), &kx)?;
        let weights = [0.5, 0.5, 1.0];
        for (s, &w) in weights.iter().enumerate() {
            for &i in self.model.active() {
                let k = self.k[s][i];
                let m = state.m[i];
                self.stage[i] = [m[0] + w * dt * k[0], m[1] + w * dt * k[1], m[2] + w * dt * k[2]];
            }
            let kx = k_of_t(t0 + w * dt);
            self.rhs(s + 1, None, &kx)?;
        }
        for &i in self.model.active() {
            let m = state.m[i];
            let mut v = m;
            for c in 0..3 {
                v[c] += dt / 6.0
                    * (self.k[0][i][c] + 2.0 * self.k[1][i][c] + 2.0 * self.k[2][i][c] + self.k[3][i][c]);
            }
            self.stage[i] = v;
        }
        self.finish(state, dt, landed);
        Ok(dt)
    }
}
