//! Effective field and energy on a labeled mesh.
//!
//! A [`Model`] resolves the material map onto per-cell coefficients once, so
//! that the hot path of the integrator is a handful of flat loops. Fields are
//! stored on the full grid; vacuum cells carry zero vectors and are skipped.
//!
//! With [`AnisotropyMode::NetEffective`] the stored anisotropy constants
//! already contain the shape contribution of the film. When a demag term is
//! active, the model therefore adds a local "shape restoration" field
//! `Ms·(rx·mx, ry·my, rz·mz)` that cancels the uniform-mode part of the demag
//! field. Bus-type regions use the thin-film factors `(0, 0, 1)`; ME cells
//! use their own region-averaged demag factors. In the local demag mode the
//! two cancel exactly.

pub mod demag;
pub mod newell;

use std::ops::{Deref, DerefMut};

use serde::{Deserialize, Serialize};

pub use demag::{build_demag_kernel, demag_field, DemagKernel, DemagMode, DemagScratch};

use crate::error::{Error, Result};
use crate::geometry::{build_damping_map, LabeledMesh, RegionLabel};
use crate::materials::{AnisotropyMode, MaterialMap};
use crate::vec3::{dot, norm, Vec3, ZERO};
use crate::MU0;

/// Strain anisotropy (J/m³, axis z) per ME cell, indexed by
/// [`RegionLabel::me_index`].
pub type KExtra = [f64; 4];

pub const NO_STRAIN: KExtra = [0.0; 4];

/// Per-cell 3-vectors over the full grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField(pub Vec<Vec3>);

impl VectorField {
    pub fn zeros(n: usize) -> Self {
        Self(vec![ZERO; n])
    }

    /// `v` on every active cell of `lm`, zero elsewhere.
    pub fn uniform(lm: &LabeledMesh, v: Vec3) -> Self {
        Self(
            lm.labels
                .iter()
                .map(|l| if l.is_active() { v } else { ZERO })
                .collect(),
        )
    }

    /// Largest `| |v| - 1 |` over the given cells.
    pub fn max_norm_deviation(&self, cells: &[usize]) -> f64 {
        cells
            .iter()
            .map(|&i| (norm(self.0[i]) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Component-wise mean over `cells`.
    pub fn mean_over(&self, cells: &[usize]) -> Vec3 {
        if cells.is_empty() {
            return ZERO;
        }
        let mut s = ZERO;
        for &i in cells {
            for c in 0..3 {
                s[c] += self.0[i][c];
            }
        }
        let inv = 1.0 / cells.len() as f64;
        [s[0] * inv, s[1] * inv, s[2] * inv]
    }
}

impl Deref for VectorField {
    type Target = Vec<Vec3>;
    fn deref(&self) -> &Self::Target {
        &self.0
    }
}

impl DerefMut for VectorField {
    fn deref_mut(&mut self) -> &mut Self::Target {
        &mut self.0
    }
}

/// Which contributions enter the effective field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermToggles {
    pub exchange: bool,
    /// Static uniaxial plus clocked strain anisotropy.
    pub anisotropy: bool,
    /// Demag and, in net-effective mode, the matching shape restoration.
    pub demag: bool,
}

impl Default for TermToggles {
    fn default() -> Self {
        Self {
            exchange: true,
            anisotropy: true,
            demag: true,
        }
    }
}

/// Per-cell coefficients resolved from the material map.
#[derive(Debug, Clone)]
pub struct CellParams {
    pub ms: Vec<f64>,
    pub alpha: Vec<f64>,
    /// 2Ku/(μ0·Ms), A/m.
    pub hk: Vec<f64>,
    pub axis: Vec<Vec3>,
    /// Ku, J/m³ (kept for the energy).
    pub ku: Vec<f64>,
    /// ME slot of the cell, if any.
    pub me_slot: Vec<Option<u8>>,
    /// Shape restoration factors (dimensionless).
    pub restore: Vec<Vec3>,
}

/// Exchange couplings in compressed-row form over active cells.
#[derive(Debug, Clone)]
struct Stencil {
    start: Vec<u32>,
    nb: Vec<u32>,
    /// 2·A_face/(μ0·Ms_i·d²), A/m.
    coef: Vec<f64>,
    /// A_face·V/d², J (energy weight of the face, stored once per pair direction).
    energy_w: Vec<f64>,
}

#[derive(Debug)]
pub struct Model {
    pub mesh: LabeledMesh,
    pub materials: MaterialMap,
    pub params: CellParams,
    pub terms: TermToggles,
    kernel: Option<DemagKernel>,
    active: Vec<usize>,
    stencil: Stencil,
}

/// Scratch buffers for field evaluation.
pub struct FieldWorkspace {
    demag: Option<DemagScratch>,
    hd: Vec<Vec3>,
}

/// Individual contributions, for diagnostics.
#[derive(Debug, Clone)]
pub struct FieldTerms {
    pub exchange: VectorField,
    pub anisotropy: VectorField,
    pub demag: VectorField,
    pub restoration: VectorField,
}

/// Energy contributions in joules.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub exchange: f64,
    pub anisotropy: f64,
    pub demag: f64,
    pub restoration: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        accurate_sum(&[self.exchange, self.anisotropy, self.demag, self.restoration])
    }
}

fn accurate_sum(terms: &[f64]) -> f64 {
    let mut acc = Neumaier::default();
    for &t in terms {
        acc.add(t);
    }
    acc.value()
}

#[derive(Default)]
struct Neumaier {
    sum: f64,
    c: f64,
}

impl Neumaier {
    fn add(&mut self, t: f64) {
        let s = self.sum + t;
        if self.sum.abs() >= t.abs() {
            self.c += (self.sum - s) + t;
        } else {
            self.c += (t - s) + self.sum;
        }
        self.sum = s;
    }

    fn value(&self) -> f64 {
        self.sum + self.c
    }
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

impl Model {
    /// Resolves `materials` on `mesh`; `demag = None` disables the demag term.
    pub fn new(mesh: LabeledMesh, materials: MaterialMap, demag: Option<DemagMode>) -> Result<Self> {
        let kernel = match demag {
            Some(mode) => Some(build_demag_kernel(&mesh.spec, mode)?),
            None => None,
        };
        Self::with_kernel(mesh, materials, kernel)
    }

    /// Like [`Model::new`] but reusing a prebuilt kernel.
    pub fn with_kernel(
        mesh: LabeledMesh,
        materials: MaterialMap,
        kernel: Option<DemagKernel>,
    ) -> Result<Self> {
        materials.validate()?;
        if let Some(k) = &kernel {
            if !k.mesh().same_dims(&mesh.spec) {
                return Err(Error::KernelMismatch(format!(
                    "kernel {:?} vs mesh {:?}",
                    k.mesh(),
                    mesh.spec
                )));
            }
        }
        let n = mesh.spec.n_cells();
        let alpha = build_damping_map(&mesh, &materials)?;
        let mut p = CellParams {
            ms: vec![0.0; n],
            alpha,
            hk: vec![0.0; n],
            axis: vec![ZERO; n],
            ku: vec![0.0; n],
            me_slot: vec![None; n],
            restore: vec![ZERO; n],
        };
        let mut a_ex = vec![0.0; n];
        for (i, &l) in mesh.labels.iter().enumerate() {
            if !l.is_active() {
                continue;
            }
            let src = match (l, mesh.absorber[i]) {
                (RegionLabel::Absorber, Some(a)) => a.adjacent,
                _ => l,
            };
            let mp = match materials.get(l) {
                Ok(mp) => mp,
                Err(_) => materials.get(src)?,
            };
            p.ms[i] = mp.ms;
            a_ex[i] = mp.a_ex;
            p.ku[i] = mp.ku;
            p.hk[i] = 2.0 * mp.ku / (MU0 * mp.ms);
            p.axis[i] = mp.easy_axis;
            p.me_slot[i] = l.me_index().map(|s| s as u8);
        }
        let active = mesh.active_cells();
        let stencil = build_stencil(&mesh, &p.ms, &a_ex, &active);
        let mut model = Model {
            mesh,
            materials,
            params: p,
            terms: TermToggles::default(),
            kernel,
            active,
            stencil,
        };
        model.resolve_restoration()?;
        Ok(model)
    }

    fn resolve_restoration(&mut self) -> Result<()> {
        let Some(kernel) = &self.kernel else {
            return Ok(());
        };
        if self.materials.anisotropy != AnisotropyMode::NetEffective {
            return Ok(());
        }
        for &i in &self.active {
            self.params.restore[i] = [0.0, 0.0, 1.0];
        }
        if kernel.mode() == DemagMode::ThinFilmLocal {
            return Ok(());
        }
        let n = self.mesh.spec.n_cells();
        let mut s = kernel.scratch();
        let mut h = vec![ZERO; n];
        // ME cells: region-averaged demag factors of the cell itself.
        for label in RegionLabel::ME_CELLS {
            let cells = self.mesh.cells_with(label);
            if cells.is_empty() {
                continue;
            }
            let mut ms = vec![0.0; n];
            for &i in &cells {
                ms[i] = 1.0;
            }
            let mut r = ZERO;
            for (c, rc) in r.iter_mut().enumerate() {
                let mut e = ZERO;
                e[c] = 1.0;
                let m = vec![e; n];
                kernel.field_into(&m, &ms, &mut h, &mut s)?;
                *rc = -cells.iter().map(|&i| h[i][c]).sum::<f64>() / cells.len() as f64;
            }
            for &i in &cells {
                self.params.restore[i] = r;
            }
        }
        Ok(())
    }

    pub fn kernel(&self) -> Option<&DemagKernel> {
        self.kernel.as_ref()
    }

    pub fn demag_mode(&self) -> Option<DemagMode> {
        self.kernel.as_ref().map(|k| k.mode())
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.spec.n_cells()
    }

    /// Indices of non-vacuum cells, ascending.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    /// Replace the damping map (same length as the grid).
    pub fn set_alpha(&mut self, alpha: Vec<f64>) -> Result<()> {
        if alpha.len() != self.n_cells() {
            return Err(Error::InvalidParameter("damping map has wrong length".into()));
        }
        self.params.alpha = alpha;
        Ok(())
    }

    pub fn workspace(&self) -> FieldWorkspace {
        FieldWorkspace {
            demag: self.kernel.as_ref().map(|k| k.scratch()),
            hd: vec![ZERO; self.n_cells()],
        }
    }

    fn check_len(&self, m: &[Vec3]) -> Result<()> {
        if m.len() != self.n_cells() {
            return Err(Error::KernelMismatch(format!(
                "field of {} cells on a mesh of {}",
                m.len(),
                self.n_cells()
            )));
        }
        Ok(())
    }

    /// H_eff into `out` (A/m). Vacuum entries are left at zero.
    pub fn effective_field_into(
        &self,
        m: &[Vec3],
        k_extra: &KExtra,
        out: &mut [Vec3],
        ws: &mut FieldWorkspace,
    ) -> Result<()> {
        self.check_len(m)?;
        let demag_on = self.terms.demag && self.kernel.is_some();
        if demag_on {
            let k = self.kernel.as_ref().expect("checked");
            let s = ws.demag.as_mut().expect("workspace built for this model");
            k.field_into(m, &self.params.ms, &mut ws.hd, s)?;
        }
        let p = &self.params;
        let st = &self.stencil;
        let strain_coef: [f64; 4] = std::array::from_fn(|s| 2.0 * k_extra[s] / MU0);
        for (a, &i) in self.active.iter().enumerate() {
            let mi = m[i];
            let mut h = ZERO;
            if self.terms.exchange {
                for e in st.start[a] as usize..st.start[a + 1] as usize {
                    let mj = m[st.nb[e] as usize];
                    let c = st.coef[e];
                    h[0] += c * (mj[0] - mi[0]);
                    h[1] += c * (mj[1] - mi[1]);
                    h[2] += c * (mj[2] - mi[2]);
                }
            }
            if self.terms.anisotropy {
                let u = p.axis[i];
                let f = p.hk[i] * dot(mi, u);
                h[0] += f * u[0];
                h[1] += f * u[1];
                h[2] += f * u[2];
                if let Some(s) = p.me_slot[i] {
                    h[2] += strain_coef[s as usize] / p.ms[i] * mi[2];
                }
            }
            if demag_on {
                let r = p.restore[i];
                let ms = p.ms[i];
                let hd = ws.hd[i];
                h[0] += hd[0] + ms * r[0] * mi[0];
                h[1] += hd[1] + ms * r[1] * mi[1];
                h[2] += hd[2] + ms * r[2] * mi[2];
            }
            out[i] = h;
        }
        Ok(())
    }

    pub fn effective_field(&self, m: &[Vec3], k_extra: &KExtra) -> Result<VectorField> {
        let mut out = VectorField::zeros(self.n_cells());
        let mut ws = self.workspace();
        self.effective_field_into(m, k_extra, &mut out, &mut ws)?;
        Ok(out)
    }

    /// Each contribution separately, ignoring the toggles.
    pub fn field_terms(&self, m: &[Vec3], k_extra: &KExtra) -> Result<FieldTerms> {
        self.check_len(m)?;
        let n = self.n_cells();
        let mut t = FieldTerms {
            exchange: VectorField::zeros(n),
            anisotropy: VectorField::zeros(n),
            demag: VectorField::zeros(n),
            restoration: VectorField::zeros(n),
        };
        if let Some(k) = &self.kernel {
            let hd = demag_field(m, k, &self.params.ms)?;
            for &i in &self.active {
                t.demag[i] = hd[i];
                let r = self.params.restore[i];
                let ms = self.params.ms[i];
                t.restoration[i] = [ms * r[0] * m[i][0], ms * r[1] * m[i][1], ms * r[2] * m[i][2]];
            }
        }
        let mut model = Model {
            mesh: self.mesh.clone(),
            materials: self.materials.clone(),
            params: self.params.clone(),
            terms: TermToggles {
                exchange: true,
                anisotropy: false,
                demag: false,
            },
            kernel: None,
            active: self.active.clone(),
            stencil: self.stencil.clone(),
        };
        t.exchange = model.effective_field(m, k_extra)?;
        model.terms = TermToggles {
            exchange: false,
            anisotropy: true,
            demag: false,
        };
        t.anisotropy = model.effective_field(m, k_extra)?;
        Ok(t)
    }

    /// Energy contributions, honouring the term toggles.
    pub fn energy(&self, m: &[Vec3], k_extra: &KExtra) -> Result<EnergyBreakdown> {
        self.check_len(m)?;
        let p = &self.params;
        let v = self.mesh.spec.cell_volume_m3();
        let mut e = EnergyBreakdown::default();
        if self.terms.exchange {
            let st = &self.stencil;
            let mut acc = Neumaier::default();
            for (a, &i) in self.active.iter().enumerate() {
                for k in st.start[a] as usize..st.start[a + 1] as usize {
                    let j = st.nb[k] as usize;
                    // each face appears twice; count it once
                    if j > i {
                        let d = [m[j][0] - m[i][0], m[j][1] - m[i][1], m[j][2] - m[i][2]];
                        acc.add(st.energy_w[k] * dot(d, d));
                    }
                }
            }
            e.exchange = acc.value();
        }
        if self.terms.anisotropy {
            let mut acc = Neumaier::default();
            for &i in &self.active {
                let mu = dot(m[i], p.axis[i]);
                acc.add(p.ku[i] * (1.0 - mu * mu) * v);
                if let Some(s) = p.me_slot[i] {
                    acc.add(k_extra[s as usize] * (1.0 - m[i][2] * m[i][2]) * v);
                }
            }
            e.anisotropy = acc.value();
        }
        if self.terms.demag {
            if let Some(k) = &self.kernel {
                let hd = demag_field(m, k, &p.ms)?;
                let mut acc = Neumaier::default();
                let mut acc_r = Neumaier::default();
                for &i in &self.active {
                    acc.add(-0.5 * MU0 * p.ms[i] * dot(m[i], hd[i]) * v);
                    let r = p.restore[i];
                    let ms2 = p.ms[i] * p.ms[i];
                    let mut s = 0.0;
                    for c in 0..3 {
                        s += r[c] * (1.0 - m[i][c] * m[i][c]);
                    }
                    acc_r.add(0.5 * MU0 * ms2 * s * v);
                }
                e.demag = acc.value();
                e.restoration = acc_r.value();
            }
        }
        Ok(e)
    }

    pub fn total_energy(&self, m: &[Vec3], k_extra: &KExtra) -> Result<f64> {
        Ok(self.energy(m, k_extra)?.total())
    }

    /// Largest |m×H|/|H| over active cells.
    pub fn max_torque(&self, m: &[Vec3], h: &[Vec3]) -> f64 {
        let mut worst: f64 = 0.0;
        for &i in &self.active {
            let hn = norm(h[i]);
            if hn > 0.0 {
                let t = norm(crate::vec3::cross(m[i], h[i])) / hn;
                worst = worst.max(t);
            }
        }
        worst
    }
}

fn build_stencil(lm: &LabeledMesh, ms: &[f64], a_ex: &[f64], active: &[usize]) -> Stencil {
    let spec = &lm.spec;
    let d = spec.cell_size_m();
    let v = spec.cell_volume_m3();
    let mut st = Stencil {
        start: Vec::with_capacity(active.len() + 1),
        nb: Vec::new(),
        coef: Vec::new(),
        energy_w: Vec::new(),
    };
    st.start.push(0);
    let dims = [spec.nx, spec.ny, spec.nz];
    for &i in active {
        let (x, y, z) = spec.coords(i);
        let pos = [x, y, z];
        for axis in 0..3 {
            for dir in [-1i64, 1] {
                let q = pos[axis] as i64 + dir;
                if q < 0 || q >= dims[axis] as i64 {
                    continue;
                }
                let mut np = pos;
                np[axis] = q as usize;
                let j = spec.index(np[0], np[1], np[2]);
                if !lm.labels[j].is_active() {
                    continue;
                }
                let af = harmonic(a_ex[i], a_ex[j]);
                let d2 = d[axis] * d[axis];
                st.nb.push(j as u32);
                st.coef.push(2.0 * af / (MU0 * ms[i] * d2));
                st.energy_w.push(af * v / d2);
            }
        }
        st.start.push(st.nb.len() as u32);
    }
    st
}

/// Free-function form of the exchange field.
pub fn exchange_field(m: &[Vec3], lm: &LabeledMesh, mat: &MaterialMap) -> Result<VectorField> {
    let mut model = Model::new(lm.clone(), mat.clone(), None)?;
    model.terms = TermToggles {
        exchange: true,
        anisotropy: false,
        demag: false,
    };
    model.effective_field(m, &NO_STRAIN)
}

/// Free-function form of the anisotropy field (static plus strain).
pub fn anisotropy_field(
    m: &[Vec3],
    lm: &LabeledMesh,
    mat: &MaterialMap,
    k_extra: &KExtra,
) -> Result<VectorField> {
    let mut model = Model::new(lm.clone(), mat.clone(), None)?;
    model.terms = TermToggles {
        exchange: false,
        anisotropy: true,
        demag: false,
    };
    model.effective_field(m, k_extra)
}
