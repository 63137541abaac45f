//! Property-based invariants of the analysis, logic and field code.

use proptest::prelude::*;

use swgate::analysis::{amplitude_map, estimate_wavelength, theta_of, transmission_ratio};
use swgate::dynamics::llg_cell;
use swgate::fields::{DemagMode, Model, VectorField, NO_STRAIN};
use swgate::geometry::{LabeledMesh, MeshSpec, RegionLabel};
use swgate::materials::{preset, AnisotropyMode, MaterialMap};
use swgate::transducers::{encode_logic, majority_reference, ClockPulse, LogicBit};
use swgate::vec3::{dot, norm, normalize, Vec3};
use swgate::GAMMA_DEFAULT;

fn unit() -> impl Strategy<Value = Vec3> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter("non-degenerate", |(x, y, z)| x * x + y * y + z * z > 1e-2)
        .prop_map(|(x, y, z)| normalize([x, y, z]))
}

fn bit() -> impl Strategy<Value = LogicBit> {
    prop_oneof![Just(LogicBit::Zero), Just(LogicBit::One)]
}

fn rotate_z(v: Vec3, phi: f64) -> Vec3 {
    let (s, c) = phi.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

fn film(nx: usize, ny: usize) -> LabeledMesh {
    LabeledMesh::uniform(MeshSpec::new(nx, ny, 1, 4.0, 4.0, 12.0).unwrap(), RegionLabel::Bus).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn amplitude_ignores_rotation_about_z(
        frames in prop::collection::vec(prop::collection::vec(unit(), 6), 10..20),
        phi in 0.0f64..std::f64::consts::TAU,
    ) {
        let cells: Vec<usize> = (0..6).collect();
        let rotated: Vec<Vec<Vec3>> = frames
            .iter()
            .map(|f| f.iter().map(|&v| rotate_z(v, phi)).collect())
            .collect();
        let fa: Vec<(f64, &[Vec3])> = frames.iter().enumerate().map(|(k, f)| (k as f64, f.as_slice())).collect();
        let fb: Vec<(f64, &[Vec3])> = rotated.iter().enumerate().map(|(k, f)| (k as f64, f.as_slice())).collect();
        let a = amplitude_map(&fa, &cells, (0.0, 100.0)).unwrap();
        let b = amplitude_map(&fb, &cells, (0.0, 100.0)).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        let r = transmission_ratio(&a, &cells[..3], &cells[..3]);
        if a.region_mean(&cells[..3]).unwrap() > 0.0 {
            prop_assert_eq!(r.unwrap(), 1.0);
        }
    }

    #[test]
    fn majority_is_symmetric_and_self_dual(a in bit(), b in bit(), c in bit()) {
        let m = majority_reference(a, b, c);
        prop_assert_eq!(m, majority_reference(b, c, a));
        prop_assert_eq!(m, majority_reference(c, b, a));
        prop_assert_eq!(
            majority_reference(a.complement(), b.complement(), c.complement()),
            m.complement()
        );
        // The result agrees with at least two inputs.
        prop_assert!([a, b, c].iter().filter(|&&x| x == m).count() >= 2);
    }

    #[test]
    fn encoding_round_trips(b in bit(), tilt in -0.9f64..0.9) {
        let v = encode_logic(b);
        prop_assert_eq!(norm(v), 1.0);
        prop_assert_eq!(LogicBit::from_mx(v[0] * (1.0 - tilt.abs())), b);
        prop_assert_eq!(encode_logic(b.complement()), [-v[0], -v[1], -v[2]]);
    }

    #[test]
    fn theta_stays_in_range(v in unit(), s in 0.1f64..10.0) {
        let th = theta_of([s * v[0], s * v[1], s * v[2]]).unwrap();
        prop_assert!((0.0..=180.0).contains(&th));
        prop_assert!((th - theta_of(v).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn llg_preserves_norm_and_damps(m in unit(), h in unit(), hmag in 1e3f64..1e6, alpha in 0.0f64..1.0) {
        let hv = [h[0] * hmag, h[1] * hmag, h[2] * hmag];
        let d = llg_cell(m, hv, alpha, GAMMA_DEFAULT);
        let scale = GAMMA_DEFAULT * hmag;
        prop_assert!(dot(d, m).abs() <= 1e-12 * scale);
        // dE/dt ∝ -H·dm/dt ≤ 0.
        prop_assert!(dot(hv, d) >= -1e-9 * scale * hmag);
    }

    #[test]
    fn clock_pulse_is_bounded_and_monotone_on_rise(
        t_on in 0.0f64..1e-9,
        rise in 0.0f64..1e-10,
        hold in 1e-11f64..1e-9,
        level in 1e4f64..1e6,
        samples in prop::collection::vec(0.0f64..3e-9, 2..30),
    ) {
        let p = ClockPulse { t_on, t_off: Some(t_on + rise + hold), k_level: level, rise_time: rise };
        let mut ts = samples;
        ts.sort_by(f64::total_cmp);
        let mut last = 0.0;
        for &t in &ts {
            let v = p.value_at(t);
            prop_assert!((0.0..=level).contains(&v));
            if t <= t_on + rise + hold {
                prop_assert!(v >= last - 1e-9 * level);
                last = v;
            }
        }
        prop_assert_eq!(p.value_at(t_on + rise + 0.5 * hold), level);
    }

    #[test]
    fn wavelength_of_synthetic_packet(lambda in 60.0f64..400.0, x0 in 300.0f64..700.0) {
        let x: Vec<f64> = (0..500).map(|i| i as f64 * 2.0).collect();
        let v: Vec<f64> = x
            .iter()
            .map(|&x| (std::f64::consts::TAU * (x - x0) / lambda + 0.3).sin() * (-((x - x0) / (2.0 * lambda)).powi(2)).exp())
            .collect();
        let est = estimate_wavelength(&x, &v).unwrap();
        prop_assert!((est - lambda).abs() <= 0.05 * lambda + 2.0, "{} vs {}", est, lambda);
    }

    #[test]
    fn uniform_state_has_no_exchange_and_rotation_invariant_energy(v in unit(), phi in 0.0f64..std::f64::consts::TAU) {
        let lm = film(5, 3);
        let mut p = preset("CoNi-bus").unwrap();
        p.ku = 0.0;
        let model = Model::new(lm.clone(), MaterialMap::uniform(p, AnisotropyMode::NetEffective), None).unwrap();
        let e = model.energy(&VectorField::uniform(&lm, v), &NO_STRAIN).unwrap();
        prop_assert!(e.exchange.abs() <= 1e-30);
        // Exchange energy of a textured state is invariant under a global rotation about z.
        let tex: Vec<Vec3> = (0..15).map(|i| normalize([(i as f64).sin(), (0.3 * i as f64).cos(), 0.5])).collect();
        let rot: Vec<Vec3> = tex.iter().map(|&u| rotate_z(u, phi)).collect();
        let e1 = model.energy(&tex, &NO_STRAIN).unwrap().exchange;
        let e2 = model.energy(&rot, &NO_STRAIN).unwrap().exchange;
        prop_assert!((e1 - e2).abs() <= 1e-9 * e1.abs());
    }

    #[test]
    fn pma_ground_state_is_stationary_in_any_demag_mode(nx in 1usize..6, ny in 1usize..6, up in any::<bool>()) {
        let lm = film(nx, ny);
        let z = if up { 1.0 } else { -1.0 };
        for demag in [Some(DemagMode::ThinFilmLocal), Some(DemagMode::FullFft), None] {
            let model = Model::new(lm.clone(), MaterialMap::gate_default(), demag).unwrap();
            let m = VectorField::uniform(&lm, [0.0, 0.0, z]);
            let h = model.effective_field(&m, &NO_STRAIN).unwrap();
            prop_assert!(model.max_torque(&m, &h) <= 1e-12);
        }
    }
}
