//! Numerical properties of the field and integrator code, each checked
//! against an independent route.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::random_unit;
use swgate::dynamics::{
    run_simulation, Integrator, IntegratorConfig, Method, ProbeSpec, RunOptions, SimState,
};
use swgate::fields::{build_demag_kernel, demag_field, DemagMode, Model, VectorField, NO_STRAIN};
use swgate::geometry::{LabeledMesh, MeshSpec, RegionLabel};
use swgate::materials::{preset, AnisotropyMode, MaterialMap};
use swgate::transducers::{ClockPulse, ClockSchedule};
use swgate::vec3::{dot, norm, normalize, Vec3};
use swgate::{GAMMA_DEFAULT, MU0};

#[test]
fn fft_demag_equals_brute_force() {
    let rel = common::demag_fft_error();
    assert!(rel <= 1e-10, "relative error {rel:e}");
}

#[test]
fn demag_operator_is_self_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = MeshSpec::new(9, 5, 2, 2.0, 3.0, 4.0).unwrap();
    let n = spec.n_cells();
    let kernel = build_demag_kernel(&spec, DemagMode::FullFft).unwrap();
    let ms = vec![1.0; n];
    let a: Vec<Vec3> = (0..n).map(|_| random_unit(&mut rng)).collect();
    let b: Vec<Vec3> = (0..n).map(|_| random_unit(&mut rng)).collect();
    let ha = demag_field(&a, &kernel, &ms).unwrap();
    let hb = demag_field(&b, &kernel, &ms).unwrap();
    let ab: f64 = a.iter().zip(&hb).map(|(u, v)| dot(*u, *v)).sum();
    let ba: f64 = b.iter().zip(&ha).map(|(u, v)| dot(*u, *v)).sum();
    assert!((ab - ba).abs() <= 1e-12 * ab.abs().max(ba.abs()), "{ab} vs {ba}");
    // Demag energy is positive definite.
    let aa: f64 = a.iter().zip(&ha).map(|(u, v)| dot(*u, *v)).sum();
    assert!(aa < 0.0);
}

#[test]
fn newell_self_trace_is_one() {
    let e = common::newell_trace_error();
    assert!(e <= 1e-12, "{e:e}");
}

#[test]
fn field_is_minus_energy_gradient() {
    let e = common::field_gradient_error();
    assert!(e <= 1e-6, "field vs -dE/dm: relative error {e:e}");
}

#[test]
fn norm_drift_per_step_is_small() {
    let d = common::norm_drift();
    assert!(d <= 1e-6, "drift {d:e}");
}

#[test]
fn energy_never_increases_under_damping() {
    let (rise, e0, e1) = common::damped_energy_rise();
    assert!(rise <= 1e-12, "relative rise {rise:e}");
    assert!(e1 < e0);
}

fn single_cell(ku: f64) -> Model {
    let spec = MeshSpec::new(1, 1, 1, 4.0, 4.0, 12.0).unwrap();
    let lm = LabeledMesh::uniform(spec, RegionLabel::Bus).unwrap();
    let mut p = preset("CoNi-bus").unwrap();
    p.ku = ku;
    Model::new(lm, MaterialMap::uniform(p, AnisotropyMode::NetEffective), None).unwrap()
}

#[test]
fn undamped_precession_matches_closed_form() {
    let ku = 5.0e4;
    let model = single_cell(ku);
    let ms = model.params.ms[0];
    let theta0: f64 = 0.5;
    let m0 = [theta0.sin(), 0.0, theta0.cos()];
    // H = Hk·mz·ẑ, so the cone angle is fixed and ω = γ·Hk·cosθ.
    let omega = GAMMA_DEFAULT * 2.0 * ku / (MU0 * ms) * theta0.cos();
    for method in [Method::Rk45Adaptive, Method::Rk4Fixed] {
        let cfg = IntegratorConfig {
            method,
            dt_init: 2e-14,
            tol: 1e-8,
            ..Default::default()
        };
        let mut integ = Integrator::new(&model, cfg).unwrap().with_alpha(vec![0.0]);
        let mut state = SimState {
            m: VectorField(vec![m0]),
            t: 0.0,
        };
        let t_end = 40e-12;
        while state.t < t_end {
            integ.step(&mut state, &|_t: f64| NO_STRAIN, t_end).unwrap();
        }
        assert_eq!(state.t, t_end);
        let phi = omega * t_end;
        let want = [theta0.sin() * phi.cos(), theta0.sin() * phi.sin(), theta0.cos()];
        let err = norm(swgate::vec3::sub(state.m[0], want));
        assert!(err < 1e-6, "{method:?}: {:?} vs {want:?}", state.m[0]);
    }
}

#[test]
fn uniform_film_fmr_matches_closed_form() {
    assert!((common::fmr_oracle() - 0.59e9).abs() < 0.01e9);
    let e = common::fmr_error();
    assert!(e < 0.02, "relative error {e}");
}

#[test]
fn standing_wave_follows_exchange_dispersion() {
    let e = common::dispersion_error();
    assert!(e < 0.15, "relative error {e}");
}

#[test]
fn steps_land_on_events_and_samples() {
    let spec = MeshSpec::new(6, 2, 1, 4.0, 4.0, 12.0).unwrap();
    let mut labels = vec![RegionLabel::Bus; spec.n_cells()];
    labels[spec.index(2, 0, 0)] = RegionLabel::MECellIn1;
    labels[spec.index(2, 1, 0)] = RegionLabel::MECellIn1;
    let lm = LabeledMesh::from_labels(spec, labels).unwrap();
    let model = Model::new(lm.clone(), MaterialMap::gate_default(), Some(DemagMode::FullFft)).unwrap();
    let mut pulses = [None; 4];
    pulses[0] = Some(ClockPulse {
        t_on: 3.3e-12,
        t_off: Some(21.7e-12),
        k_level: 2e5,
        rise_time: 2.2e-12,
    });
    let t_end = 37.1e-12;
    let schedule = ClockSchedule {
        pulses,
        t_det: t_end,
        t_read: t_end,
        t_end,
    };
    let opts = RunOptions {
        probes: vec![ProbeSpec {
            name: "me".into(),
            cells: lm.cells_with(RegionLabel::MECellIn1),
            period: 1.3e-12,
        }],
        snapshot_times: vec![0.0, 4.4e-12, 22.9e-12, t_end],
        ..Default::default()
    };
    let run = run_simulation(
        &model,
        &IntegratorConfig::default(),
        SimState {
            m: VectorField::uniform(&lm, [0.1, 0.0, 1.0]),
            t: 0.0,
        },
        &schedule,
        &opts,
        t_end,
    )
    .unwrap();
    assert_eq!(run.state.t, t_end);
    let snap_t: Vec<f64> = run.snapshots.iter().map(|s| s.t).collect();
    for (got, want) in snap_t.iter().zip(&opts.snapshot_times) {
        assert!((got - want).abs() <= 1e-24, "{got:e} vs {want:e}");
    }
    let tr = &run.traces[0];
    for (k, &t) in tr.t.iter().enumerate() {
        assert!((t - k as f64 * 1.3e-12).abs() <= 1e-24, "sample {k} at {t:e}");
    }
    assert_eq!(tr.len(), 1 + (t_end / 1.3e-12).floor() as usize);
}

#[test]
fn integrator_lands_exactly_on_limit() {
    let model = single_cell(5e4);
    let mut integ = Integrator::new(&model, IntegratorConfig::default()).unwrap();
    let mut state = SimState {
        m: VectorField(vec![normalize([0.3, 0.0, 1.0])]),
        t: 0.0,
    };
    for limit in [1.234e-13, 5.0e-12, 5.0e-12, 7.77e-12] {
        while state.t < limit {
            integ.step(&mut state, &|_t: f64| NO_STRAIN, limit).unwrap();
        }
        assert_eq!(state.t, limit);
    }
}
