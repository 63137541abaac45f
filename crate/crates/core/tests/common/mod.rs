//! Measurements shared by the numerics tests and the acceptance report. Each
//! returns the observed error so callers can apply their own threshold.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use swgate::analysis::dispersion_frequency;
use swgate::dynamics::{
    llg_rhs, run_simulation, Integrator, IntegratorConfig, Method, ProbeSpec, RunOptions,
    SimState,
};
use swgate::fields::newell::newell_tensor;
use swgate::fields::{build_demag_kernel, demag_field, DemagMode, Model, VectorField, NO_STRAIN};
use swgate::geometry::{LabeledMesh, MeshSpec, RegionLabel};
use swgate::materials::{ku_from_hk, preset, AnisotropyMode, MaterialMap};
use swgate::transducers::ClockSchedule;
use swgate::vec3::{dot, norm, normalize, Vec3};
use swgate::{GAMMA_DEFAULT, MU0};

pub fn random_unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        ];
        let n = norm(v);
        if n > 0.1 && n <= 1.0 {
            return normalize(v);
        }
    }
}

/// Direct O(N²) sum of Newell tensors, no FFT and no far-field switch.
pub fn brute_force_demag(spec: &MeshSpec, m: &[Vec3], ms: &[f64]) -> Vec<Vec3> {
    let n = spec.n_cells();
    let pos = |idx: usize| {
        let (i, j, k) = spec.coords(idx);
        [i as f64 * spec.dx, j as f64 * spec.dy, k as f64 * spec.dz]
    };
    let mut h = vec![[0.0; 3]; n];
    for t in 0..n {
        let pt = pos(t);
        for s in 0..n {
            if ms[s] == 0.0 {
                continue;
            }
            let ps = pos(s);
            let [xx, yy, zz, xy, xz, yz] = newell_tensor(
                pt[0] - ps[0],
                pt[1] - ps[1],
                pt[2] - ps[2],
                spec.dx,
                spec.dy,
                spec.dz,
            );
            let mm = [ms[s] * m[s][0], ms[s] * m[s][1], ms[s] * m[s][2]];
            h[t][0] -= xx * mm[0] + xy * mm[1] + xz * mm[2];
            h[t][1] -= xy * mm[0] + yy * mm[1] + yz * mm[2];
            h[t][2] -= xz * mm[0] + yz * mm[1] + zz * mm[2];
        }
    }
    h
}

fn max_abs_diff(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(u, v)| (0..3).map(move |c| (u[c] - v[c]).abs()))
        .fold(0.0, f64::max)
}

fn max_abs(a: &[Vec3]) -> f64 {
    a.iter().flat_map(|u| u.iter().map(|x| x.abs())).fold(0.0, f64::max)
}

/// Worst relative difference between the FFT demag field and the direct
/// sum, over several grids up to 8×8×2 with random Ms (some cells empty).
pub fn demag_fft_error() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let grids = [
        (8, 8, 2, 2.0, 2.0, 6.0),
        (5, 3, 2, 3.0, 2.0, 1.5),
        (7, 1, 1, 4.0, 4.0, 12.0),
        (4, 6, 1, 2.0, 2.0, 12.0),
    ];
    let mut worst: f64 = 0.0;
    for (nx, ny, nz, dx, dy, dz) in grids {
        let spec = MeshSpec::new(nx, ny, nz, dx, dy, dz).unwrap();
        let n = spec.n_cells();
        let m: Vec<Vec3> = (0..n).map(|_| random_unit(&mut rng)).collect();
        let ms: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.15) { 0.0 } else { rng.gen_range(5e5..9e5) })
            .collect();
        let kernel = build_demag_kernel(&spec, DemagMode::FullFft).unwrap();
        let fast = demag_field(&m, &kernel, &ms).unwrap();
        let slow = brute_force_demag(&spec, &m, &ms);
        worst = worst.max(max_abs_diff(&fast, &slow) / max_abs(&slow));
    }
    worst
}

pub fn newell_trace_error() -> f64 {
    [(2.0, 2.0, 12.0), (1.0, 1.0, 1.0), (4.0, 3.0, 0.5), (5.0, 1.0, 2.0)]
        .into_iter()
        .map(|(dx, dy, dz)| {
            let t = newell_tensor(0.0, 0.0, 0.0, dx, dy, dz);
            (t[0] + t[1] + t[2] - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// Small mixed mesh: bus, an ME cell, absorber cells and a vacuum notch.
pub fn mixed_mesh() -> LabeledMesh {
    let spec = MeshSpec::new(12, 6, 1, 4.0, 4.0, 12.0).unwrap();
    let mut labels = vec![RegionLabel::Bus; spec.n_cells()];
    for j in 0..6 {
        for i in 0..12 {
            let idx = spec.index(i, j, 0);
            labels[idx] = match (i, j) {
                (0..=1, _) => RegionLabel::Absorber,
                (4..=7, 1..=4) => RegionLabel::MECellIn1,
                (10..=11, 0..=1) => RegionLabel::Vacuum,
                (9, 5) => RegionLabel::OutputArm,
                _ => RegionLabel::Bus,
            };
        }
    }
    LabeledMesh::from_labels(spec, labels).unwrap()
}

pub fn smooth_state(lm: &LabeledMesh, seed: u64) -> VectorField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (a, b) = (rng.gen_range(0.1..0.4), rng.gen_range(0.1..0.4));
    let s = &lm.spec;
    let mut m = VectorField::zeros(s.n_cells());
    for (idx, l) in lm.labels.iter().enumerate() {
        if l.is_active() {
            let (i, j, _) = s.coords(idx);
            let (x, y) = (i as f64 / s.nx as f64, j as f64 / s.ny as f64);
            m[idx] = normalize([
                a * (2.0 * x + y).sin() + if l.is_me_cell() { 0.8 } else { 0.0 },
                b * (3.0 * y - x).cos(),
                1.0,
            ]);
        }
    }
    m
}

/// Largest |H_i + (1/μ0 Ms V) ∂E/∂m_i| / |H_i| by central differences.
pub fn gradient_error(model: &Model, m: &VectorField, k: &[f64; 4]) -> f64 {
    let h = model.effective_field(m, k).unwrap();
    let vol = model.mesh.spec.cell_volume_m3();
    let step = 1e-3;
    let mut worst: f64 = 0.0;
    for &i in model.active() {
        let ms = model.params.ms[i];
        let scale = norm(h[i]);
        for c in 0..3 {
            let mut p = m.clone();
            p[i][c] += step;
            let ep = model.total_energy(&p, k).unwrap();
            p[i][c] -= 2.0 * step;
            let em = model.total_energy(&p, k).unwrap();
            let g = (ep - em) / (2.0 * step);
            let expect = -g / (MU0 * ms * vol);
            worst = worst.max((expect - h[i][c]).abs() / scale);
        }
    }
    worst
}

/// Gradient check over every anisotropy and demag mode on the mixed mesh,
/// with strain applied to the ME cell.
pub fn field_gradient_error() -> f64 {
    let lm = mixed_mesh();
    let k = [2.0e5, 0.0, 0.0, 0.0];
    let mut worst: f64 = 0.0;
    for (mode, demag) in [
        (AnisotropyMode::NetEffective, Some(DemagMode::FullFft)),
        (AnisotropyMode::NetEffective, Some(DemagMode::ThinFilmLocal)),
        (AnisotropyMode::NetEffective, None),
        (AnisotropyMode::IntrinsicWithDemag, Some(DemagMode::FullFft)),
    ] {
        let mut mat = MaterialMap::gate_default();
        mat.anisotropy = mode;
        let model = Model::new(lm.clone(), mat, demag).unwrap();
        worst = worst.max(gradient_error(&model, &smooth_state(&lm, 3), &k));
    }
    worst
}

/// Per-step norm drift before renormalization, worst over both methods.
/// Also asserts that the LLG right-hand side is orthogonal to m.
pub fn norm_drift() -> f64 {
    let lm = mixed_mesh();
    let model = Model::new(lm.clone(), MaterialMap::gate_default(), Some(DemagMode::FullFft)).unwrap();
    let mut worst: f64 = 0.0;
    for method in [Method::Rk45Adaptive, Method::Rk4Fixed] {
        let cfg = IntegratorConfig {
            method,
            dt_init: 5e-14,
            ..Default::default()
        };
        let mut integ = Integrator::new(&model, cfg).unwrap();
        let mut state = SimState {
            m: smooth_state(&lm, 5),
            t: 0.0,
        };
        let k = |_t: f64| NO_STRAIN;
        for _ in 0..300 {
            integ.step(&mut state, &k, f64::INFINITY).unwrap();
            assert!(state.m.max_norm_deviation(model.active()) <= 1e-12);
            let h = model.effective_field(&state.m, &NO_STRAIN).unwrap();
            let mut rhs = vec![[0.0; 3]; model.n_cells()];
            llg_rhs(&state.m, &h, &model.params.alpha, GAMMA_DEFAULT, model.active(), &mut rhs);
            for &i in model.active() {
                assert!(dot(rhs[i], state.m[i]).abs() <= 1e-12 * norm(rhs[i]).max(1.0));
            }
        }
        assert!(integ.stats.max_norm_drift > 0.0);
        worst = worst.max(integ.stats.max_norm_drift);
    }
    worst
}

/// Energy history of a heavily damped relaxation without strain:
/// `(largest relative rise between steps, E0, E_end)`.
pub fn damped_energy_rise() -> (f64, f64, f64) {
    let lm = mixed_mesh();
    let model = Model::new(lm.clone(), MaterialMap::gate_default(), Some(DemagMode::FullFft)).unwrap();
    let mut integ = Integrator::new(&model, IntegratorConfig::default())
        .unwrap()
        .with_alpha(vec![0.5; model.n_cells()]);
    let mut state = SimState {
        m: smooth_state(&lm, 9),
        t: 0.0,
    };
    let k = |_t: f64| NO_STRAIN;
    let mut e = model.total_energy(&state.m, &NO_STRAIN).unwrap();
    let e0 = e;
    let mut rise: f64 = 0.0;
    for _ in 0..400 {
        integ.step(&mut state, &k, f64::INFINITY).unwrap();
        let e1 = model.total_energy(&state.m, &NO_STRAIN).unwrap();
        rise = rise.max((e1 - e) / e.abs());
        e = e1;
    }
    (rise, e0, e)
}

/// Mean frequency of the in-plane component from its unwrapped phase.
pub fn phase_frequency(t: &[f64], m: &[Vec3]) -> f64 {
    let mut phase = Vec::with_capacity(t.len());
    let mut last = 0.0;
    let mut offset = 0.0;
    for v in m {
        let p = v[1].atan2(v[0]);
        if !phase.is_empty() {
            let d = p - last;
            if d < -std::f64::consts::PI {
                offset += 2.0 * std::f64::consts::PI;
            } else if d > std::f64::consts::PI {
                offset -= 2.0 * std::f64::consts::PI;
            }
        }
        last = p;
        phase.push(p + offset);
    }
    // Least-squares slope.
    let n = t.len() as f64;
    let (mt, mp) = (t.iter().sum::<f64>() / n, phase.iter().sum::<f64>() / n);
    let cov: f64 = t.iter().zip(&phase).map(|(a, b)| (a - mt) * (b - mp)).sum();
    let var: f64 = t.iter().map(|a| (a - mt).powi(2)).sum();
    cov / var / (2.0 * std::f64::consts::PI)
}

/// Closed-form uniform-mode frequency of the bus film, (γ/2π)·Hk.
pub fn fmr_oracle() -> f64 {
    let bus = preset("CoNi-bus").unwrap();
    GAMMA_DEFAULT / (2.0 * std::f64::consts::PI) * 2.0 * bus.ku / (MU0 * bus.ms)
}

/// Relative error of the simulated uniform-film precession frequency
/// against [`fmr_oracle`], worst over both anisotropy conventions.
pub fn fmr_error() -> f64 {
    let spec = MeshSpec::new(4, 4, 1, 4.0, 4.0, 12.0).unwrap();
    let lm = LabeledMesh::uniform(spec, RegionLabel::Bus).unwrap();
    let bus = preset("CoNi-bus").unwrap();
    let hk = 2.0 * bus.ku / (MU0 * bus.ms);
    let f_oracle = fmr_oracle();
    let mut worst: f64 = 0.0;
    for mode in [AnisotropyMode::NetEffective, AnisotropyMode::IntrinsicWithDemag] {
        let mut p = bus;
        if mode == AnisotropyMode::IntrinsicWithDemag {
            p.ku = ku_from_hk(hk, p.ms, mode);
        }
        let model = Model::new(lm.clone(), MaterialMap::uniform(p, mode), Some(DemagMode::ThinFilmLocal)).unwrap();
        let tilt: f64 = 0.02;
        let m0 = VectorField::uniform(&lm, [tilt.sin(), 0.0, tilt.cos()]);
        let opts = RunOptions {
            probes: vec![ProbeSpec {
                name: "film".into(),
                cells: model.active().to_vec(),
                period: 5e-12,
            }],
            ..Default::default()
        };
        let run = run_simulation(
            &model,
            &IntegratorConfig::default(),
            SimState { m: m0, t: 0.0 },
            &ClockSchedule::idle(4e-9),
            &opts,
            4e-9,
        )
        .unwrap();
        let tr = &run.traces[0];
        worst = worst.max((phase_frequency(&tr.t, &tr.m) / f_oracle - 1.0).abs());
    }
    worst
}

/// Standing waves on a single-row strip with local demag, where the
/// linearized spectrum is the exchange parabola. Worst relative frequency
/// error over three mode numbers.
pub fn dispersion_error() -> f64 {
    let (nx, dx) = (128usize, 2.0);
    let spec = MeshSpec::new(nx, 1, 1, dx, 40.0, 12.0).unwrap();
    let lm = LabeledMesh::uniform(spec, RegionLabel::Bus).unwrap();
    let mut bus = preset("CoNi-bus").unwrap();
    bus.alpha = 1e-4;
    let model = Model::new(
        lm.clone(),
        MaterialMap::uniform(bus, AnisotropyMode::NetEffective),
        Some(DemagMode::ThinFilmLocal),
    )
    .unwrap();
    let hk = 2.0 * bus.ku / (MU0 * bus.ms);
    let length = nx as f64 * dx * 1e-9;
    let mut worst: f64 = 0.0;
    for n in [2usize, 4, 8] {
        // cos(k·x) at cell centres is an exact free-end mode of the mesh.
        let k = std::f64::consts::PI * n as f64 / length;
        let m0: Vec<Vec3> = (0..nx)
            .map(|i| {
                let x = (i as f64 + 0.5) * dx * 1e-9;
                normalize([0.01 * (k * x).cos(), 0.0, 1.0])
            })
            .collect();
        let opts = RunOptions {
            probes: vec![ProbeSpec {
                name: "edge".into(),
                cells: vec![0],
                period: 1e-12,
            }],
            ..Default::default()
        };
        let oracle = dispersion_frequency(k, hk, bus.a_ex, bus.ms, GAMMA_DEFAULT);
        let t_end = 4.0 / oracle;
        let run = run_simulation(
            &model,
            &IntegratorConfig::default(),
            SimState { m: VectorField(m0), t: 0.0 },
            &ClockSchedule::idle(t_end),
            &opts,
            t_end,
        )
        .unwrap();
        let tr = &run.traces[0];
        worst = worst.max((phase_frequency(&tr.t, &tr.m) / oracle - 1.0).abs());
    }
    worst
}
