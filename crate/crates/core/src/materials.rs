//! Magnetic and magneto-electric constants per region.
//!
//! Anisotropy constants stored in a [`MaterialMap`] are *net effective*
//! values by default: the thin-film shape anisotropy is already folded in.
//! When a demagnetizing term is switched on, the field assembly restores the
//! shape contribution as intrinsic anisotropy so it is not counted twice (see
//! [`crate::fields::Model`]).

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RegionLabel;
use crate::vec3::{norm, Vec3};
use crate::MU0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MagnetParams {
    /// Saturation magnetization, A/m.
    pub ms: f64,
    /// Exchange stiffness, J/m.
    pub a_ex: f64,
    pub alpha: f64,
    /// Uniaxial anisotropy along `easy_axis`, J/m³.
    pub ku: f64,
    pub easy_axis: Vec3,
}

impl MagnetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ms > 0.0) {
            return Err(Error::InvalidParameter(format!("Ms must be > 0, got {}", self.ms)));
        }
        if !(self.a_ex > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "A_ex must be > 0, got {}",
                self.a_ex
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be in (0, 1], got {}",
                self.alpha
            )));
        }
        if (norm(self.easy_axis) - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "easy axis must be a unit vector, got {:?}",
                self.easy_axis
            )));
        }
        Ok(())
    }

    /// Anisotropy field 2K/(μ0·Ms) in A/m.
    pub fn anisotropy_field(&self) -> f64 {
        2.0 * self.ku / (MU0 * self.ms)
    }
}

/// Piezoelectric/magnetostrictive stack of an ME cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MEStackParams {
    /// Saturation magnetostriction (dimensionless).
    pub lambda_s: f64,
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    /// Piezoelectric coefficient, m/V.
    pub d31: f64,
    /// Piezoelectric layer thickness, m.
    pub t_piezo: f64,
    /// Operating voltage, V.
    pub v_op: f64,
}

impl Default for MEStackParams {
    fn default() -> Self {
        Self {
            lambda_s: 200e-6,
            youngs_modulus: 200e9,
            d31: -1000e-12,
            t_piezo: 30e-9,
            v_op: 0.1,
        }
    }
}

impl MEStackParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_piezo > 0.0) || !(self.youngs_modulus > 0.0) {
            return Err(Error::InvalidParameter(
                "piezo thickness and Young's modulus must be > 0".into(),
            ));
        }
        Ok(())
    }

    /// In-plane biaxial strain produced by voltage `v`.
    pub fn strain(&self, v: f64) -> f64 {
        self.d31 * v / self.t_piezo
    }
}

/// Strain-induced perpendicular anisotropy (J/m³, easy axis z) at voltage `v`.
///
/// Only the polarity whose magnetoelastic energy favours the film normal
/// produces anisotropy; the opposite polarity returns 0.
pub fn me_anisotropy_from_voltage(v: f64, p: &MEStackParams) -> f64 {
    let stress = p.youngs_modulus * p.strain(v);
    let b = p.lambda_s * stress;
    // λ·σ < 0: in-plane compression (tension) for positive (negative)
    // magnetostriction pulls the moment out of plane.
    if b < 0.0 {
        1.5 * b.abs()
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnisotropyMode {
    /// Ku reproduces the anisotropy field on its own (shape part included).
    NetEffective,
    /// Ku is the intrinsic value that yields `Hk` after a full demag term.
    IntrinsicWithDemag,
}

/// Uniaxial constant for a perpendicular film with anisotropy field `hk`.
pub fn ku_from_hk(hk: f64, ms: f64, mode: AnisotropyMode) -> f64 {
    match mode {
        AnisotropyMode::NetEffective => 0.5 * MU0 * ms * hk,
        AnisotropyMode::IntrinsicWithDemag => 0.5 * MU0 * ms * (hk + ms),
    }
}

/// Effective anisotropy field of a magnet, the inverse of [`ku_from_hk`].
pub fn hk_of(p: &MagnetParams, mode: AnisotropyMode) -> f64 {
    let hk = 2.0 * p.ku / (MU0 * p.ms);
    match mode {
        AnisotropyMode::NetEffective => hk,
        AnisotropyMode::IntrinsicWithDemag => hk - p.ms,
    }
}

/// Anisotropy field of the bus multilayer, A/m.
pub const BUS_HK: f64 = 16.78e3;

/// Net in-plane uniaxial anisotropy of the ME-cell magnet, J/m³.
pub const ME_CELL_KU: f64 = 1.0e5;

/// Named material presets.
pub fn preset(name: &str) -> Option<MagnetParams> {
    match name {
        "CoFe-MEcell" => Some(MagnetParams {
            ms: 800e3,
            a_ex: 20e-12,
            alpha: 0.027,
            ku: ME_CELL_KU,
            easy_axis: [1.0, 0.0, 0.0],
        }),
        "CoNi-bus" => Some(MagnetParams {
            ms: 790e3,
            a_ex: 16e-12,
            alpha: 0.01,
            ku: ku_from_hk(BUS_HK, 790e3, AnisotropyMode::NetEffective),
            easy_axis: [0.0, 0.0, 1.0],
        }),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialMap {
    pub regions: BTreeMap<RegionLabel, MagnetParams>,
    pub me_stack: MEStackParams,
    /// How the `ku` values are to be read.
    pub anisotropy: AnisotropyMode,
    /// Damping reached at the outer end of every absorber ramp.
    pub absorber_alpha_max: f64,
}

impl MaterialMap {
    /// CoFe ME cells on a Co/Ni bus, output segment with α = 0.016.
    pub fn gate_default() -> Self {
        let bus = preset("CoNi-bus").expect("preset");
        let me = preset("CoFe-MEcell").expect("preset");
        let mut regions = BTreeMap::new();
        regions.insert(RegionLabel::Bus, bus);
        regions.insert(RegionLabel::Absorber, bus);
        regions.insert(RegionLabel::OutputArm, MagnetParams { alpha: 0.016, ..bus });
        for l in RegionLabel::ME_CELLS {
            regions.insert(l, me);
        }
        Self {
            regions,
            me_stack: MEStackParams::default(),
            anisotropy: AnisotropyMode::NetEffective,
            absorber_alpha_max: 0.5,
        }
    }

    /// Every magnetic label mapped to the same parameters.
    pub fn uniform(params: MagnetParams, anisotropy: AnisotropyMode) -> Self {
        let regions = RegionLabel::ALL
            .into_iter()
            .filter(|l| l.is_active())
            .map(|l| (l, params))
            .collect();
        Self {
            regions,
            me_stack: MEStackParams::default(),
            anisotropy,
            absorber_alpha_max: 0.5,
        }
    }

    pub fn get(&self, label: RegionLabel) -> Result<&MagnetParams> {
        self.regions.get(&label).ok_or(Error::MissingMaterial(label))
    }

    pub fn set(&mut self, label: RegionLabel, p: MagnetParams) {
        self.regions.insert(label, p);
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.regions.values() {
            p.validate()?;
        }
        self.me_stack.validate()?;
        if !(self.absorber_alpha_max > 0.0 && self.absorber_alpha_max <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "absorber alpha_max must be in (0, 1], got {}",
                self.absorber_alpha_max
            )));
        }
        Ok(())
    }

    /// Strain anisotropy delivered at the stack's operating voltage.
    pub fn me_k_level(&self) -> f64 {
        me_anisotropy_from_voltage(self.me_stack.v_op, &self.me_stack)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn strain_at_operating_voltage() {
        let p = MEStackParams::default();
        // -1000 pm/V * 0.1 V / 30 nm
        assert_relative_eq!(p.strain(0.1), -1e-9 * 0.1 / 30e-9, max_relative = 1e-12);
        assert_relative_eq!(p.strain(0.1), -3.333_333_333e-3, max_relative = 1e-9);
    }

    #[test]
    fn strain_anisotropy_matches_hand_calculation() {
        let p = MEStackParams::default();
        // hand calculation: 1.5 * 200e-6 * 200e9 * (1e-10/30e-9) * 1000... in steps
        let eps = 1000e-12 * 0.1 / 30e-9;
        let sigma = 200e9 * eps;
        let k = 1.5 * 200e-6 * sigma;
        assert_relative_eq!(me_anisotropy_from_voltage(0.1, &p), k, max_relative = 1e-12);
        assert_relative_eq!(me_anisotropy_from_voltage(0.1, &p), 2.0e5, max_relative = 1e-9);
        assert_eq!(me_anisotropy_from_voltage(0.0, &p), 0.0);
        assert_eq!(me_anisotropy_from_voltage(-0.1, &p), 0.0);
    }

    #[test]
    fn strain_anisotropy_is_linear_in_voltage() {
        let p = MEStackParams::default();
        for v in [0.01, 0.05, 0.1, 0.3] {
            let k1 = me_anisotropy_from_voltage(v, &p);
            let k2 = me_anisotropy_from_voltage(2.0 * v, &p);
            assert_relative_eq!(k2, 2.0 * k1, max_relative = 1e-12);
        }
    }

    #[test]
    fn ku_conversions() {
        let net = ku_from_hk(16.78e3, 790e3, AnisotropyMode::NetEffective);
        assert_relative_eq!(net, 0.5 * MU0 * 790e3 * 16.78e3, max_relative = 1e-14);
        assert!((net - 8.33e3).abs() < 5.0, "{net}");
        let intr = ku_from_hk(16.78e3, 790e3, AnisotropyMode::IntrinsicWithDemag);
        assert!((intr - 4.005e5).abs() < 0.001e5, "{intr}");
        assert_eq!(ku_from_hk(0.0, 790e3, AnisotropyMode::NetEffective), 0.0);
    }

    #[test]
    fn presets_are_valid_and_oriented() {
        let m = MaterialMap::gate_default();
        m.validate().unwrap();
        for l in RegionLabel::ME_CELLS {
            assert_eq!(m.get(l).unwrap().easy_axis, [1.0, 0.0, 0.0]);
        }
        for l in [RegionLabel::Bus, RegionLabel::OutputArm, RegionLabel::Absorber] {
            assert_eq!(m.get(l).unwrap().easy_axis, [0.0, 0.0, 1.0]);
        }
        let bus = m.get(RegionLabel::Bus).unwrap();
        assert_relative_eq!(bus.anisotropy_field(), BUS_HK, max_relative = 1e-12);
        assert!(preset("unknown").is_none());
    }

    #[test]
    fn invalid_params_rejected() {
        let mut p = preset("CoNi-bus").unwrap();
        p.alpha = 0.0;
        assert!(p.validate().is_err());
        p.alpha = 0.01;
        p.easy_axis = [1.0, 1.0, 0.0];
        assert!(p.validate().is_err());
    }
}
