//! ME-cell logic protocol: phase encoding, strain clocking, detection.

use serde::{Deserialize, Serialize};

use crate::analysis::theta_of;
use crate::dynamics::TraceRecord;
use crate::error::{Error, Result};
use crate::fields::KExtra;
use crate::geometry::RegionLabel;
use crate::vec3::Vec3;

/// Margin below which a detection is reported as weak.
pub const WEAK_MARGIN: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LogicBit {
    Zero,
    One,
}

impl LogicBit {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(LogicBit::Zero),
            1 => Some(LogicBit::One),
            _ => None,
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            LogicBit::Zero => 0,
            LogicBit::One => 1,
        }
    }

    pub fn complement(self) -> Self {
        match self {
            LogicBit::Zero => LogicBit::One,
            LogicBit::One => LogicBit::Zero,
        }
    }

    /// Reads a stored bit back from the sign of mx.
    pub fn from_mx(mx: f64) -> Self {
        if mx > 0.0 {
            LogicBit::Zero
        } else {
            LogicBit::One
        }
    }
}

/// Parses strings such as `"110"` into three bits.
pub fn parse_bits(s: &str) -> Option<[LogicBit; 3]> {
    let b = s.as_bytes();
    if b.len() != 3 {
        return None;
    }
    let mut out = [LogicBit::Zero; 3];
    for (o, c) in out.iter_mut().zip(b) {
        *o = LogicBit::from_u8(c.checked_sub(b'0')?)?;
    }
    Some(out)
}

pub fn bits_string(bits: &[LogicBit]) -> String {
    bits.iter().map(|b| char::from(b'0' + b.as_u8())).collect()
}

/// Initial in-plane direction of a transmitter holding `bit`.
pub fn encode_logic(bit: LogicBit) -> Vec3 {
    match bit {
        LogicBit::Zero => [1.0, 0.0, 0.0],
        LogicBit::One => [-1.0, 0.0, 0.0],
    }
}

pub fn majority_reference(a: LogicBit, b: LogicBit, c: LogicBit) -> LogicBit {
    let ones = [a, b, c].iter().filter(|&&x| x == LogicBit::One).count();
    if ones >= 2 {
        LogicBit::One
    } else {
        LogicBit::Zero
    }
}

/// Trapezoidal strain pulse on one ME cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockPulse {
    /// Start of the rise, s. May be negative for cells already held at t = 0.
    pub t_on: f64,
    /// Start of the fall, s; `None` keeps the level until the end of the run.
    pub t_off: Option<f64>,
    /// Held anisotropy, J/m³.
    pub k_level: f64,
    pub rise_time: f64,
}

impl ClockPulse {
    pub fn value_at(&self, t: f64) -> f64 {
        let ramp = |dt: f64| {
            if self.rise_time > 0.0 {
                (dt / self.rise_time).clamp(0.0, 1.0)
            } else if dt >= 0.0 {
                1.0
            } else {
                0.0
            }
        };
        let up = ramp(t - self.t_on);
        let down = match self.t_off {
            Some(off) => 1.0 - ramp(t - off),
            None => 1.0,
        };
        self.k_level * up.min(down)
    }

    /// Times where the profile has a kink.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v = vec![self.t_on, self.t_on + self.rise_time];
        if let Some(off) = self.t_off {
            v.push(off);
            v.push(off + self.rise_time);
        }
        v
    }
}

/// User-facing clock parameters from which gate schedules are built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockParams {
    pub k_level: f64,
    pub rise_time: f64,
    /// Time the input cells start switching.
    pub t_excite: f64,
    pub t_det: f64,
    pub t_read: f64,
    pub t_end: f64,
}

impl Default for ClockParams {
    fn default() -> Self {
        Self {
            k_level: 2.0e5,
            rise_time: 20e-12,
            t_excite: 0.0,
            t_det: 0.8e-9,
            t_read: 3.2e-9,
            t_end: 3.2e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClockSchedule {
    /// Indexed like [`RegionLabel::me_index`].
    pub pulses: [Option<ClockPulse>; 4],
    pub t_det: f64,
    pub t_read: f64,
    pub t_end: f64,
}

impl ClockSchedule {
    /// No clocking at all.
    pub fn idle(t_end: f64) -> Self {
        Self {
            pulses: [None; 4],
            t_det: t_end,
            t_read: t_end,
            t_end,
        }
    }

    /// Gate schedule: excited inputs switch at `t_excite` and stay held, the
    /// output is held from before t = 0 and released at `t_det`.
    pub fn gate(p: &ClockParams, excited: [bool; 3]) -> Result<Self> {
        let mut pulses = [None; 4];
        for (slot, &on) in excited.iter().enumerate() {
            if on {
                pulses[slot] = Some(ClockPulse {
                    t_on: p.t_excite,
                    t_off: None,
                    k_level: p.k_level,
                    rise_time: p.rise_time,
                });
            }
        }
        pulses[3] = Some(ClockPulse {
            t_on: -p.rise_time - 1e-12,
            t_off: Some(p.t_det),
            k_level: p.k_level,
            rise_time: p.rise_time,
        });
        let s = Self {
            pulses,
            t_det: p.t_det,
            t_read: p.t_read,
            t_end: p.t_end,
        };
        s.validate()?;
        Ok(s)
    }

    /// Like [`ClockSchedule::gate`] but the output is held for the whole run.
    pub fn gate_without_release(p: &ClockParams, excited: [bool; 3]) -> Result<Self> {
        let mut s = Self::gate(p, excited)?;
        if let Some(out) = &mut s.pulses[3] {
            out.t_off = None;
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        for p in self.pulses.iter().flatten() {
            if !(p.k_level >= 0.0) || !(p.rise_time >= 0.0) {
                return bad("pulse level and rise time must be >= 0".into());
            }
            if let Some(off) = p.t_off {
                if !(p.t_on < off) || off > self.t_read {
                    return bad(format!(
                        "pulse needs t_on < t_off <= t_read, got {:e}, {:e}, {:e}",
                        p.t_on, off, self.t_read
                    ));
                }
            }
        }
        if let Some(out) = &self.pulses[3] {
            if let Some(off) = out.t_off {
                if (off - self.t_det).abs() > 1e-18 {
                    return bad("output release must coincide with t_det".into());
                }
            }
        }
        if self.t_read > self.t_end + 1e-18 {
            return bad(format!("t_read {:e} beyond t_end {:e}", self.t_read, self.t_end));
        }
        Ok(())
    }

    pub fn k_extra_at(&self, t: f64) -> KExtra {
        std::array::from_fn(|s| self.pulses[s].map_or(0.0, |p| p.value_at(t)))
    }

    /// Sorted, de-duplicated kink times inside `[0, t_end]`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self
            .pulses
            .iter()
            .flatten()
            .flat_map(|p| p.breakpoints())
            .filter(|&t| t >= 0.0 && t <= self.t_end)
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn pulse_for(&self, label: RegionLabel) -> Option<&ClockPulse> {
        label.me_index().and_then(|s| self.pulses[s].as_ref())
    }
}

pub fn clock_anisotropy_at(t: f64, schedule: &ClockSchedule) -> KExtra {
    schedule.k_extra_at(t)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateResult {
    /// Output-region ⟨m⟩ at the readout time.
    pub m_read: Vec3,
    pub detected: LogicBit,
    pub margin: f64,
    pub weak: bool,
}

/// Reads the stored bit from the output probe at `t_read`.
pub fn detect_output(trace: &TraceRecord, t_read: f64) -> Result<GateResult> {
    let m = trace.sample_at(t_read).ok_or(Error::MissingSample(t_read))?;
    let margin = m[0].abs().min(1.0);
    Ok(GateResult {
        m_read: m,
        detected: LogicBit::from_mx(m[0]),
        margin,
        weak: margin < WEAK_MARGIN,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    /// Minimum θ (degrees) every trace must exceed.
    pub threshold_deg: f64,
    /// Length of the search window after the common arrival, s.
    pub span: f64,
    /// Upper bound on the returned time, s.
    pub t_max: f64,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        Self {
            threshold_deg: 0.25,
            span: 0.6e-9,
            t_max: 1.5e-9,
        }
    }
}

/// Spread of three θ values relative to their mean.
pub fn relative_spread(th: [f64; 3]) -> f64 {
    let max = th.iter().cloned().fold(f64::MIN, f64::max);
    let min = th.iter().cloned().fold(f64::MAX, f64::min);
    let mean = (th[0] + th[1] + th[2]) / 3.0;
    if mean > 0.0 {
        (max - min) / mean
    } else {
        f64::INFINITY
    }
}

/// Detection time at which three single-arm θ traces of the output agree best.
///
/// The search starts where all three exceed the activity threshold and runs
/// for `span`; within it the sample with the smallest relative spread wins
/// (earliest on ties).
pub fn calibrate_t_det(traces: &[TraceRecord; 3], p: &CalibrationParams) -> Result<f64> {
    let n = traces[0].len();
    if traces.iter().any(|r| r.len() != n) {
        return Err(Error::Calibration("traces have different lengths".into()));
    }
    for r in &traces[1..] {
        if r.t != traces[0].t {
            return Err(Error::Calibration("traces sampled at different times".into()));
        }
    }
    let th: Vec<[f64; 3]> = (0..n)
        .map(|i| std::array::from_fn(|k| theta_of(traces[k].m[i]).unwrap_or(0.0)))
        .collect();
    for (k, r) in traces.iter().enumerate() {
        if !th.iter().any(|v| v[k] > p.threshold_deg) {
            return Err(Error::Calibration(format!(
                "trace {} ({}) never exceeds {} deg",
                k + 1,
                r.name,
                p.threshold_deg
            )));
        }
    }
    let start = (0..n)
        .find(|&i| th[i].iter().all(|&v| v > p.threshold_deg))
        .ok_or_else(|| Error::Calibration("traces are never active simultaneously".into()))?;
    let t0 = traces[0].t[start];
    let mut best = (f64::INFINITY, t0);
    for i in start..n {
        let t = traces[0].t[i];
        if t > t0 + p.span || t > p.t_max {
            break;
        }
        if th[i].iter().any(|&v| v <= p.threshold_deg) {
            continue;
        }
        let s = relative_spread(th[i]);
        if s < best.0 {
            best = (s, t);
        }
    }
    Ok(best.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding() {
        assert_eq!(encode_logic(LogicBit::Zero), [1.0, 0.0, 0.0]);
        assert_eq!(encode_logic(LogicBit::One), [-1.0, 0.0, 0.0]);
        for b in [LogicBit::Zero, LogicBit::One] {
            assert_eq!(LogicBit::from_mx(encode_logic(b)[0]), b);
        }
        assert_eq!(parse_bits("110").map(|b| bits_string(&b)), Some("110".into()));
        assert_eq!(parse_bits("12a"), None);
    }

    #[test]
    fn majority_table() {
        use LogicBit::*;
        assert_eq!(majority_reference(One, One, Zero), One);
        assert_eq!(majority_reference(Zero, Zero, Zero), Zero);
        assert_eq!(majority_reference(Zero, One, Zero), Zero);
        for v in 0..8u8 {
            let b: Vec<LogicBit> = (0..3).map(|k| LogicBit::from_u8((v >> k) & 1).unwrap()).collect();
            let m = majority_reference(b[0], b[1], b[2]);
            let c = majority_reference(b[0].complement(), b[1].complement(), b[2].complement());
            assert_eq!(c, m.complement());
        }
    }

    #[test]
    fn output_clock_profile() {
        let p = ClockParams::default();
        let s = ClockSchedule::gate(&p, [true, true, true]).unwrap();
        let k = clock_anisotropy_at(0.4e-9, &s);
        assert_eq!(k[3], 2.0e5);
        assert_eq!(clock_anisotropy_at(0.0, &s)[3], 2.0e5);
        assert_eq!(clock_anisotropy_at(0.8e-9 + 21e-12, &s)[3], 0.0);
        assert_eq!(clock_anisotropy_at(3.0e-9, &s)[0], 2.0e5);
        assert_eq!(clock_anisotropy_at(0.0, &s)[0], 0.0);
        assert!((clock_anisotropy_at(10e-12, &s)[0] - 1.0e5).abs() < 1e-6);
        assert!(s.breakpoints().contains(&0.8e-9));
    }

    #[test]
    fn weak_detection_flag() {
        let mut r = TraceRecord::new("out");
        r.push(1e-9, [1.0, 0.0, 0.0]);
        r.push(2e-9, [-0.5, 0.0, 0.866]);
        let g = detect_output(&r, 1e-9).unwrap();
        assert_eq!((g.detected, g.margin, g.weak), (LogicBit::Zero, 1.0, false));
        let g = detect_output(&r, 2e-9).unwrap();
        assert_eq!((g.detected, g.weak), (LogicBit::One, true));
        assert!(matches!(detect_output(&r, 3e-9), Err(Error::MissingSample(_))));
    }

    #[test]
    fn release_must_precede_readout() {
        let p = ClockParams {
            t_det: 3.0e-9,
            t_read: 2.0e-9,
            ..Default::default()
        };
        assert!(ClockSchedule::gate(&p, [true; 3]).is_err());
    }

    fn synthetic(name: &str, scale: f64) -> TraceRecord {
        let mut r = TraceRecord::new(name);
        for k in 0..200 {
            let t = k as f64 * 10e-12;
            let th = (scale * (t - 0.305e-9).max(0.0) * 1e11).min(60.0).to_radians();
            r.push(t, [th.sin(), 0.0, th.cos()]);
        }
        r
    }

    #[test]
    fn identical_traces_give_earliest_active_time() {
        let r = synthetic("a", 1.0);
        let t = calibrate_t_det(&[r.clone(), r.clone(), r], &CalibrationParams::default()).unwrap();
        // θ passes 0.25 deg between the 0.30 and 0.31 ns samples.
        assert!((t - 0.31e-9).abs() < 1e-15, "{t}");
        let p = CalibrationParams {
            threshold_deg: 2.0,
            ..Default::default()
        };
        let t = calibrate_t_det(&[synthetic("a", 1.0), synthetic("b", 1.0), synthetic("c", 1.0)], &p).unwrap();
        assert!((t - 0.33e-9).abs() < 1e-15, "{t}");
    }

    #[test]
    fn silent_trace_is_an_error() {
        let a = synthetic("a", 1.0);
        let mut silent = TraceRecord::new("s");
        for &t in &a.t {
            silent.push(t, [0.0, 0.0, 1.0]);
        }
        assert!(matches!(
            calibrate_t_det(&[a.clone(), silent, a], &CalibrationParams::default()),
            Err(Error::Calibration(_))
        ));
    }
}
