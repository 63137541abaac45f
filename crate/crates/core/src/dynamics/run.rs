use serde::{Deserialize, Serialize};

use super::{Integrator, IntegratorConfig, ProbeSpec, SimState, StepStats, TraceRecord};
use crate::analysis::{AmplitudeAccumulator, AmplitudeMap, AmplitudeWindow};
use crate::error::{Error, Result};
use crate::fields::{KExtra, Model, VectorField};
use crate::transducers::ClockSchedule;

/// Two event times closer than this are treated as the same instant.
const T_EPS: f64 = 1e-19;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub probes: Vec<ProbeSpec>,
    pub snapshot_times: Vec<f64>,
    pub amplitude: Option<AmplitudeWindow>,
    /// Sample the total energy with this period.
    pub energy_period: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: f64,
    pub m: VectorField,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SimState,
    pub traces: Vec<TraceRecord>,
    pub snapshots: Vec<Snapshot>,
    pub amplitude: Option<AmplitudeMap>,
    /// `(t, E)` pairs, joules.
    pub energy: Vec<(f64, f64)>,
    pub stats: StepStats,
}

/// Periodic sampling stream starting at `start`.
struct Stream {
    start: f64,
    period: f64,
    k: u64,
    end: f64,
}

impl Stream {
    fn new(start: f64, period: f64, end: f64) -> Self {
        Self {
            start,
            period,
            k: 0,
            end,
        }
    }

    fn next(&self) -> Option<f64> {
        let t = self.start + self.k as f64 * self.period;
        (t <= self.end + T_EPS).then_some(t)
    }

    /// True (and advances) when the stream is due at `t`.
    fn due(&mut self, t: f64) -> bool {
        match self.next() {
            Some(n) if (n - t).abs() <= T_EPS.max(1e-9 * self.period) || n < t => {
                self.k += 1;
                true
            }
            _ => false,
        }
    }
}

/// Integrates from `initial` to `t_end` under `schedule`, sampling probes,
/// snapshots, amplitude and energy at exact step boundaries.
pub fn run_simulation(
    model: &Model,
    cfg: &IntegratorConfig,
    initial: SimState,
    schedule: &ClockSchedule,
    opts: &RunOptions,
    t_end: f64,
) -> Result<RunOutput> {
    if !(t_end >= initial.t) {
        return Err(Error::InvalidParameter(format!(
            "t_end {t_end:e} precedes the initial time {:e}",
            initial.t
        )));
    }
    for p in &opts.probes {
        if !(p.period >= cfg.dt_min) {
            return Err(Error::InvalidParameter(format!(
                "probe `{}` period {:e} below dt_min",
                p.name, p.period
            )));
        }
        if p.cells.is_empty() {
            return Err(Error::InvalidParameter(format!("probe `{}` has no cells", p.name)));
        }
    }
    if let Some(a) = &opts.amplitude {
        if !(a.t1 > a.t0 && a.period > 0.0) {
            return Err(Error::InvalidParameter("bad amplitude window".into()));
        }
    }
    let mut integ = Integrator::new(model, *cfg)?;
    let mut state = initial;
    let t_start = state.t;
    let k_of_t = |t: f64| schedule.k_extra_at(t);

    let mut traces: Vec<TraceRecord> = opts.probes.iter().map(|p| TraceRecord::new(&p.name)).collect();
    let mut probe_streams: Vec<Stream> = opts
        .probes
        .iter()
        .map(|p| Stream::new(t_start, p.period, t_end))
        .collect();
    let mut snap_times: Vec<f64> = opts
        .snapshot_times
        .iter()
        .copied()
        .filter(|&t| t >= t_start - T_EPS && t <= t_end + T_EPS)
        .collect();
    snap_times.sort_by(f64::total_cmp);
    snap_times.dedup();
    let mut snap_next = 0;
    let mut snapshots = Vec::new();
    let mut amp = opts
        .amplitude
        .map(|a| (AmplitudeAccumulator::new(model.n_cells(), (a.t0, a.t1)), Stream::new(a.t0, a.period, a.t1.min(t_end))));
    let mut energy_stream = opts.energy_period.map(|p| Stream::new(t_start, p, t_end));
    let mut energy = Vec::new();
    let clock_events: Vec<f64> = schedule
        .breakpoints()
        .into_iter()
        .filter(|&t| t > t_start + T_EPS && t < t_end)
        .collect();
    let mut clock_next = 0;
    let mut next_log = t_start;

    loop {
        let t = state.t;
        for (p, (s, tr)) in opts.probes.iter().zip(probe_streams.iter_mut().zip(traces.iter_mut())) {
            if s.due(t) {
                tr.push(t, state.m.mean_over(&p.cells));
            }
        }
        while snap_next < snap_times.len() && snap_times[snap_next] <= t + T_EPS {
            snapshots.push(Snapshot {
                t: snap_times[snap_next],
                m: state.m.clone(),
            });
            snap_next += 1;
        }
        if let Some((acc, s)) = &mut amp {
            if t >= s.start - T_EPS && s.due(t) {
                acc.add(&state.m, model.active());
            }
        }
        if let Some(s) = &mut energy_stream {
            if s.due(t) {
                energy.push((t, model.total_energy(&state.m, &k_of_t(t))?));
            }
        }
        while clock_next < clock_events.len() && clock_events[clock_next] <= t + T_EPS {
            clock_next += 1;
        }
        if t >= next_log {
            log::debug!(
                "t = {:.3} ns, {} steps, dt = {:.3e}",
                t * 1e9,
                integ.stats.accepted,
                integ.next_dt()
            );
            next_log += 0.1e-9;
        }
        if t >= t_end - T_EPS {
            break;
        }
        let mut limit = t_end;
        for s in &probe_streams {
            if let Some(n) = s.next() {
                limit = limit.min(n);
            }
        }
        if let Some(&n) = snap_times.get(snap_next) {
            limit = limit.min(n);
        }
        if let Some((_, s)) = &amp {
            if let Some(n) = s.next() {
                limit = limit.min(n);
            }
        }
        if let Some(s) = &energy_stream {
            if let Some(n) = s.next() {
                limit = limit.min(n);
            }
        }
        if let Some(&n) = clock_events.get(clock_next) {
            limit = limit.min(n);
        }
        integ.step(&mut state, &k_of_t, limit)?;
    }

    let amplitude = match amp {
        Some((acc, _)) => Some(acc.finish()?),
        None => None,
    };
    Ok(RunOutput {
        state,
        traces,
        snapshots,
        amplitude,
        energy,
        stats: integ.stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelaxConfig {
    /// Damping applied to every cell during relaxation.
    pub alpha: f64,
    /// Convergence bound on max |m×H|/|H|.
    pub torque_tol: f64,
    pub max_steps: usize,
    pub check_every: usize,
    pub integrator: IntegratorConfig,
}

impl Default for RelaxConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            torque_tol: 1e-4,
            max_steps: 400_000,
            check_every: 20,
            // Stiff interface cells dither at roughly 100×tol in relative
            // torque once dt sits at the stability limit.
            integrator: IntegratorConfig {
                tol: 1e-7,
                ..Default::default()
            },
        }
    }
}

/// High-damping relaxation of `seed` at fixed strain `k_extra`; returns the
/// relaxed state at t = 0.
pub fn relax_initial_state(
    model: &Model,
    seed: VectorField,
    k_extra: KExtra,
    rc: &RelaxConfig,
) -> Result<SimState> {
    let alpha = vec![rc.alpha; model.n_cells()];
    let mut integ = Integrator::new(model, rc.integrator)?.with_alpha(alpha);
    let mut state = SimState { m: seed, t: 0.0 };
    for &i in model.active() {
        state.m[i] = crate::vec3::normalize(state.m[i]);
    }
    let k_of_t = move |_t: f64| k_extra;
    let mut torque = f64::INFINITY;
    for step in 0..rc.max_steps {
        if step % rc.check_every == 0 {
            let h = integ.field(&state.m, &k_extra)?;
            torque = model.max_torque(&state.m, h);
            if step % (rc.check_every * 500) == 0 {
                log::debug!("relax step {step}: torque {torque:.3e}, t = {:.3e}", state.t);
            }
            if torque < rc.torque_tol {
                state.t = 0.0;
                return Ok(state);
            }
        }
        integ.step(&mut state, &k_of_t, f64::INFINITY)?;
    }
    Err(Error::RelaxationFailed {
        steps: rc.max_steps,
        torque,
    })
}
