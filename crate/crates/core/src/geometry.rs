//! Mesh construction and rasterization of the gate and bus layouts.
//!
//! Coordinates: x runs along the buses (inputs on the left, output on the
//! right), y across them, z through the film. All lengths in this module are
//! in nanometres unless a name says otherwise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::MaterialMap;

/// Tolerance used when checking that a length is a whole number of cells.
const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    /// Cell edge lengths in nm.
    pub dx: f64,
    pub dy: f64,
    pub dz: f64,
}

impl Default for MeshSpec {
    fn default() -> Self {
        Self {
            nx: 1,
            ny: 1,
            nz: 1,
            dx: 2.0,
            dy: 2.0,
            dz: 12.0,
        }
    }
}

impl MeshSpec {
    pub fn new(nx: usize, ny: usize, nz: usize, dx: f64, dy: f64, dz: f64) -> Result<Self> {
        let m = Self {
            nx,
            ny,
            nz,
            dx,
            dy,
            dz,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx == 0 || self.ny == 0 || self.nz == 0 {
            return Err(Error::Geometry(format!(
                "cell counts must be >= 1, got {}x{}x{}",
                self.nx, self.ny, self.nz
            )));
        }
        for (name, v) in [("dx", self.dx), ("dy", self.dy), ("dz", self.dz)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Geometry(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n_cells(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let i = idx % self.nx;
        let j = (idx / self.nx) % self.ny;
        let k = idx / (self.nx * self.ny);
        (i, j, k)
    }

    /// Cell edge lengths in metres.
    pub fn cell_size_m(&self) -> [f64; 3] {
        [self.dx * 1e-9, self.dy * 1e-9, self.dz * 1e-9]
    }

    pub fn cell_volume_m3(&self) -> f64 {
        let [a, b, c] = self.cell_size_m();
        a * b * c
    }

    pub fn same_dims(&self, other: &MeshSpec) -> bool {
        self.nx == other.nx
            && self.ny == other.ny
            && self.nz == other.nz
            && self.dx == other.dx
            && self.dy == other.dy
            && self.dz == other.dz
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RegionLabel {
    Vacuum,
    Bus,
    OutputArm,
    MECellIn1,
    MECellIn2,
    MECellIn3,
    MECellOut,
    Absorber,
}

impl RegionLabel {
    pub const ALL: [RegionLabel; 8] = [
        RegionLabel::Vacuum,
        RegionLabel::Bus,
        RegionLabel::OutputArm,
        RegionLabel::MECellIn1,
        RegionLabel::MECellIn2,
        RegionLabel::MECellIn3,
        RegionLabel::MECellOut,
        RegionLabel::Absorber,
    ];

    pub const ME_CELLS: [RegionLabel; 4] = [
        RegionLabel::MECellIn1,
        RegionLabel::MECellIn2,
        RegionLabel::MECellIn3,
        RegionLabel::MECellOut,
    ];

    /// Slot of an ME cell in clock arrays: inputs 0..=2, output 3.
    pub fn me_index(self) -> Option<usize> {
        match self {
            RegionLabel::MECellIn1 => Some(0),
            RegionLabel::MECellIn2 => Some(1),
            RegionLabel::MECellIn3 => Some(2),
            RegionLabel::MECellOut => Some(3),
            _ => None,
        }
    }

    pub fn is_me_cell(self) -> bool {
        self.me_index().is_some()
    }

    pub fn is_active(self) -> bool {
        self != RegionLabel::Vacuum
    }

    /// Integer code used in region files.
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn name(self) -> &'static str {
        match self {
            RegionLabel::Vacuum => "vacuum",
            RegionLabel::Bus => "bus",
            RegionLabel::OutputArm => "output_arm",
            RegionLabel::MECellIn1 => "me_in1",
            RegionLabel::MECellIn2 => "me_in2",
            RegionLabel::MECellIn3 => "me_in3",
            RegionLabel::MECellOut => "me_out",
            RegionLabel::Absorber => "absorber",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == s)
    }

    /// Label seen in the mirror image about the central arm axis.
    pub fn mirrored(self) -> Self {
        match self {
            RegionLabel::MECellIn1 => RegionLabel::MECellIn3,
            RegionLabel::MECellIn3 => RegionLabel::MECellIn1,
            other => other,
        }
    }
}

/// Fork-shaped majority gate, all lengths in nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForkSpec {
    pub arm_width: f64,
    /// Centre-to-centre distance between neighbouring input arms.
    pub spacing: f64,
    pub me_cell_length: f64,
    pub me_cell_width: f64,
    /// Straight segment between the junction and the output ME cell.
    pub output_arm_length: f64,
    /// Path length along each input arm's centreline from the inner edge of its
    /// ME cell to the junction point. Equal for all three inputs.
    pub input_arm_length: f64,
    /// Angle between the diagonal part of a side arm and the central arm, degrees.
    pub bend_angle: f64,
    pub absorber_length: f64,
}

impl Default for ForkSpec {
    fn default() -> Self {
        Self {
            arm_width: 40.0,
            spacing: 88.0,
            me_cell_length: 80.0,
            me_cell_width: 40.0,
            output_arm_length: 92.0,
            input_arm_length: 320.0,
            bend_angle: 45.0,
            absorber_length: 200.0,
        }
    }
}

impl ForkSpec {
    /// Checks the layout invariants against the cell size of `mesh`.
    pub fn validate(&self, mesh: &MeshSpec) -> Result<()> {
        let all = [
            ("arm_width", self.arm_width),
            ("spacing", self.spacing),
            ("me_cell_length", self.me_cell_length),
            ("me_cell_width", self.me_cell_width),
            ("output_arm_length", self.output_arm_length),
            ("input_arm_length", self.input_arm_length),
            ("absorber_length", self.absorber_length),
        ];
        for (name, v) in all {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Geometry(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.spacing <= self.arm_width {
            return Err(Error::Geometry(format!(
                "spacing {} nm leaves no clearance between arms of width {} nm",
                self.spacing, self.arm_width
            )));
        }
        if self.me_cell_width > self.arm_width {
            return Err(Error::Geometry(format!(
                "ME cell width {} nm exceeds arm width {} nm",
                self.me_cell_width, self.arm_width
            )));
        }
        if !(self.bend_angle > 0.0 && self.bend_angle <= 90.0) {
            return Err(Error::Geometry(format!(
                "bend angle must be in (0, 90] degrees, got {}",
                self.bend_angle
            )));
        }
        for (name, v) in [
            ("arm_width", self.arm_width),
            ("spacing", self.spacing),
            ("me_cell_width", self.me_cell_width),
        ] {
            check_aligned(name, v, mesh.dy)?;
        }
        for (name, v) in [
            ("me_cell_length", self.me_cell_length),
            ("output_arm_length", self.output_arm_length),
            ("input_arm_length", self.input_arm_length),
            ("absorber_length", self.absorber_length),
        ] {
            check_aligned(name, v, mesh.dx)?;
        }
        if self.side_straight_length() < 0.0 {
            return Err(Error::Geometry(format!(
                "input arm length {} nm is shorter than the diagonal {:.1} nm",
                self.input_arm_length,
                self.diagonal_length()
            )));
        }
        Ok(())
    }

    fn bend_rad(&self) -> f64 {
        self.bend_angle.to_radians()
    }

    /// Centreline length of the diagonal part of a side arm.
    pub fn diagonal_length(&self) -> f64 {
        self.spacing / self.bend_rad().sin()
    }

    /// x-extent covered by the diagonal part of a side arm.
    pub fn diagonal_run(&self) -> f64 {
        self.spacing / self.bend_rad().tan()
    }

    fn side_straight_length(&self) -> f64 {
        self.input_arm_length - self.diagonal_length()
    }

    /// Smallest mesh that contains the layout for the given cell size.
    pub fn fitting_mesh(&self, dx: f64, dy: f64, dz: f64) -> Result<MeshSpec> {
        let probe = MeshSpec {
            nx: 1,
            ny: 1,
            nz: 1,
            dx,
            dy,
            dz,
        };
        probe.validate()?;
        self.validate(&probe)?;
        let plan = ForkPlan::new(self, dx);
        let nx = (plan.x_end / dx).round() as usize;
        let ny = ((2.0 * self.spacing + self.arm_width) / dy).round() as usize;
        MeshSpec::new(nx, ny, 1, dx, dy, dz)
    }
}

fn check_aligned(name: &str, v: f64, d: f64) -> Result<()> {
    let r = v / d;
    if (r - r.round()).abs() > GRID_EPS * r.abs().max(1.0) {
        return Err(Error::Geometry(format!(
            "{name} = {v} nm is not a multiple of the {d} nm cell edge"
        )));
    }
    Ok(())
}

fn snap(v: f64, d: f64) -> f64 {
    (v / d).round() * d
}

/// Resolved x-positions of the fork layout.
#[derive(Debug, Clone, Copy)]
struct ForkPlan {
    /// Central input ME cell spans [center_cell_start, center_cell_start + me_len].
    center_cell_start: f64,
    /// Side input ME cells span [side_cell_start, side_cell_start + me_len].
    side_cell_start: f64,
    /// Junction point where the side centrelines meet the axis.
    x_junction: f64,
    /// Start of the side-arm diagonals.
    x_bend: f64,
    /// Start of the output arm segment.
    x_output: f64,
    x_end: f64,
    /// Length of the arm probe windows behind each input cell.
    probe_len: f64,
}

impl ForkPlan {
    fn new(spec: &ForkSpec, dx: f64) -> Self {
        let la = spec.absorber_length;
        let lme = spec.me_cell_length;
        let center_cell_start = la;
        let x_junction = la + lme + spec.input_arm_length;
        let x_bend = x_junction - spec.diagonal_run();
        let side_straight = snap(spec.side_straight_length(), dx);
        let side_inner = snap(x_bend - side_straight, dx);
        let x_output = (x_junction + 0.5 * spec.arm_width) / dx;
        let x_output = x_output.ceil() * dx;
        let x_end = x_output + spec.output_arm_length + lme + la;
        Self {
            center_cell_start,
            side_cell_start: side_inner - lme,
            x_junction,
            x_bend,
            x_output,
            x_end,
            probe_len: side_straight.max(dx),
        }
    }
}

/// Where an absorber cell sits inside its graded-damping ramp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsorberCell {
    /// Fractional depth in (0, 1]; 1 is the outermost cell.
    pub depth: f64,
    /// Region the absorber extends; the ramp starts from its damping.
    pub adjacent: RegionLabel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayoutKind {
    Fork,
    StraightBus,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMesh {
    pub spec: MeshSpec,
    pub labels: Vec<RegionLabel>,
    /// Magnetic device area excluding absorbers, in μm².
    pub active_area: f64,
    pub absorber: Vec<Option<AbsorberCell>>,
    /// Named cell sets used for probes and transmission windows.
    pub probes: BTreeMap<String, Vec<usize>>,
    pub kind: LayoutKind,
    /// Rows (j indices) straddling the central axis.
    pub centerline_rows: Vec<usize>,
    /// x position (nm) of the inner edge of the first input ME cell.
    pub source_edge_x: f64,
}

impl LabeledMesh {
    /// Blank mesh with every cell magnetic bus material; useful for film tests.
    pub fn uniform(spec: MeshSpec, label: RegionLabel) -> Result<Self> {
        spec.validate()?;
        let labels = vec![label; spec.n_cells()];
        let mut lm = Self {
            spec,
            labels,
            active_area: 0.0,
            absorber: vec![None; spec.n_cells()],
            probes: BTreeMap::new(),
            kind: LayoutKind::StraightBus,
            centerline_rows: center_rows(spec.ny, spec.ny),
            source_edge_x: 0.0,
        };
        lm.active_area = lm.count_area();
        Ok(lm)
    }

    /// Builds a mesh from explicit labels (absorbers without ramp information
    /// get full depth).
    pub fn from_labels(spec: MeshSpec, labels: Vec<RegionLabel>) -> Result<Self> {
        spec.validate()?;
        if labels.len() != spec.n_cells() {
            return Err(Error::Geometry(format!(
                "{} labels for {} cells",
                labels.len(),
                spec.n_cells()
            )));
        }
        let absorber = labels
            .iter()
            .map(|&l| {
                (l == RegionLabel::Absorber).then_some(AbsorberCell {
                    depth: 1.0,
                    adjacent: RegionLabel::Bus,
                })
            })
            .collect();
        let mut lm = Self {
            spec,
            labels,
            active_area: 0.0,
            absorber,
            probes: BTreeMap::new(),
            kind: LayoutKind::StraightBus,
            centerline_rows: center_rows(spec.ny, spec.ny),
            source_edge_x: 0.0,
        };
        lm.active_area = lm.count_area();
        Ok(lm)
    }

    fn count_area(&self) -> f64 {
        let layer = self.spec.nx * self.spec.ny;
        let n = self.labels[..layer]
            .iter()
            .filter(|l| !matches!(l, RegionLabel::Vacuum | RegionLabel::Absorber))
            .count();
        n as f64 * self.spec.dx * self.spec.dy * 1e-6
    }

    /// Cell indices carrying `label`, in ascending order.
    pub fn cells_with(&self, label: RegionLabel) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == label).then_some(i))
            .collect()
    }

    pub fn active_cells(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.is_active().then_some(i))
            .collect()
    }

    pub fn contains(&self, label: RegionLabel) -> bool {
        self.labels.contains(&label)
    }

    /// Named probe set, or the cells of a region label given by name.
    pub fn probe_cells(&self, name: &str) -> Option<Vec<usize>> {
        if let Some(c) = self.probes.get(name) {
            return Some(c.clone());
        }
        RegionLabel::from_name(name).map(|l| self.cells_with(l))
    }

    /// Index of the mirror image of a cell about the central axis.
    pub fn mirror_index(&self, idx: usize) -> usize {
        let (i, j, k) = self.spec.coords(idx);
        self.spec.index(i, self.spec.ny - 1 - j, k)
    }

    /// Label grid reflected about the central axis, with input labels swapped.
    pub fn mirrored_labels(&self) -> Vec<RegionLabel> {
        (0..self.labels.len())
            .map(|idx| self.labels[self.mirror_index(idx)].mirrored())
            .collect()
    }

    pub fn is_mirror_symmetric(&self) -> bool {
        self.mirrored_labels() == self.labels
    }

    /// Cells of the x-column containing position `x_nm`, restricted to magnetic cells.
    pub fn column_cells(&self, x_nm: f64) -> Vec<usize> {
        let i = ((x_nm / self.spec.dx).floor() as usize).min(self.spec.nx - 1);
        let mut out = Vec::new();
        for k in 0..self.spec.nz {
            for j in 0..self.spec.ny {
                let idx = self.spec.index(i, j, k);
                if self.labels[idx].is_active() {
                    out.push(idx);
                }
            }
        }
        out
    }
}

fn center_rows(ny: usize, _width_cells: usize) -> Vec<usize> {
    if ny % 2 == 0 {
        vec![ny / 2 - 1, ny / 2]
    } else {
        vec![ny / 2]
    }
}

/// Rasterizes the three-input fork into `mesh`.
///
/// Input 1 is the upper side arm (+y), Input 2 the central arm and Input 3 the
/// lower side arm. Side arms run parallel to the central arm at ±spacing and
/// then bend towards the junction; their ME cells are placed so that every
/// input has the same centreline path length to the junction point.
pub fn build_fork(spec: &ForkSpec, mesh: &MeshSpec) -> Result<LabeledMesh> {
    mesh.validate()?;
    spec.validate(mesh)?;
    let (dx, dy) = (mesh.dx, mesh.dy);
    let plan = ForkPlan::new(spec, dx);
    let width_y = 2.0 * spec.spacing + spec.arm_width;
    if width_y > mesh.ny as f64 * dy + GRID_EPS {
        return Err(Error::LayoutOverflow(format!(
            "fork needs {width_y} nm across, mesh has {} nm",
            mesh.ny as f64 * dy
        )));
    }
    if plan.x_end > mesh.nx as f64 * dx + GRID_EPS {
        return Err(Error::LayoutOverflow(format!(
            "fork needs {} nm along x, mesh has {} nm",
            plan.x_end,
            mesh.nx as f64 * dx
        )));
    }
    let la = spec.absorber_length;
    let lme = spec.me_cell_length;
    let half_w = 0.5 * spec.arm_width;
    let half_me = 0.5 * spec.me_cell_width;
    let side_abs_start = plan.side_cell_start - la;
    if side_abs_start < -GRID_EPS {
        return Err(Error::LayoutOverflow(
            "side-arm absorber extends past the left mesh edge".into(),
        ));
    }

    // Diagonal centreline from (x_bend, spacing) to (x_junction, 0) in (x, |y|).
    let seg_a = (plan.x_bend, spec.spacing);
    let seg_b = (plan.x_junction, 0.0);

    let out_arm_end = plan.x_output + spec.output_arm_length;
    let out_cell_end = out_arm_end + lme;

    let n_layer = mesh.nx * mesh.ny;
    let mut labels = vec![RegionLabel::Vacuum; n_layer];
    let mut absorber = vec![None; n_layer];
    let mut probes: BTreeMap<String, Vec<usize>> = BTreeMap::new();

    for j in 0..mesh.ny {
        let y_rel = (j as f64 + 0.5 - 0.5 * mesh.ny as f64) * dy;
        let ay = y_rel.abs();
        for i in 0..mesh.nx {
            let xc = (i as f64 + 0.5) * dx;
            let idx = i + mesh.nx * j;
            let mut label = RegionLabel::Vacuum;
            let mut abs_cell = None;
            let mut probe: Option<&str> = None;

            if ay < half_w && xc < plan.x_end {
                // central arm
                let cell_lo = plan.center_cell_start;
                if xc < cell_lo {
                    label = RegionLabel::Absorber;
                    abs_cell = Some(AbsorberCell {
                        depth: (cell_lo - xc + 0.5 * dx) / la,
                        adjacent: RegionLabel::MECellIn2,
                    });
                } else if xc < cell_lo + lme {
                    label = if ay < half_me {
                        RegionLabel::MECellIn2
                    } else {
                        RegionLabel::Bus
                    };
                } else if xc < plan.x_output {
                    label = RegionLabel::Bus;
                    if xc < cell_lo + lme + plan.probe_len {
                        probe = Some("in2_arm");
                    }
                } else if xc < out_arm_end {
                    label = RegionLabel::OutputArm;
                } else if xc < out_cell_end {
                    label = if ay < half_me {
                        RegionLabel::MECellOut
                    } else {
                        RegionLabel::OutputArm
                    };
                } else {
                    label = RegionLabel::Absorber;
                    abs_cell = Some(AbsorberCell {
                        depth: (xc - out_cell_end + 0.5 * dx) / la,
                        adjacent: RegionLabel::MECellOut,
                    });
                }
            } else {
                let upper = y_rel > 0.0;
                let in_straight = (ay - spec.spacing).abs() < half_w;
                let cell_lo = plan.side_cell_start;
                let side_probe = if upper { "in1_arm" } else { "in3_arm" };
                let side_label = if upper {
                    RegionLabel::MECellIn1
                } else {
                    RegionLabel::MECellIn3
                };
                if in_straight && xc >= side_abs_start && xc < plan.x_bend {
                    if xc < cell_lo {
                        label = RegionLabel::Absorber;
                        abs_cell = Some(AbsorberCell {
                            depth: (cell_lo - xc + 0.5 * dx) / la,
                            adjacent: side_label,
                        });
                    } else if xc < cell_lo + lme {
                        label = if (ay - spec.spacing).abs() < half_me {
                            side_label
                        } else {
                            RegionLabel::Bus
                        };
                    } else {
                        label = RegionLabel::Bus;
                        if xc < cell_lo + lme + plan.probe_len {
                            probe = Some(side_probe);
                        }
                    }
                } else if xc >= plan.x_bend && seg_distance((xc, ay), seg_a, seg_b) < half_w {
                    label = RegionLabel::Bus;
                }
            }
            labels[idx] = label;
            absorber[idx] = abs_cell;
            if let Some(p) = probe {
                probes.entry(p.to_string()).or_default().push(idx);
            }
        }
    }

    let spec_m = *mesh;
    let (labels, absorber, probes) = extrude(&spec_m, labels, absorber, probes);
    let mut lm = LabeledMesh {
        spec: spec_m,
        labels,
        active_area: 0.0,
        absorber,
        probes,
        kind: LayoutKind::Fork,
        centerline_rows: center_rows(mesh.ny, 0),
        source_edge_x: plan.center_cell_start + lme,
    };
    let out_arm = lm.cells_with(RegionLabel::OutputArm);
    lm.probes.insert("output_arm".into(), out_arm);
    lm.active_area = lm.count_area();
    Ok(lm)
}

/// Copies a single labeled layer through all `nz` layers.
fn extrude(
    mesh: &MeshSpec,
    labels: Vec<RegionLabel>,
    absorber: Vec<Option<AbsorberCell>>,
    probes: BTreeMap<String, Vec<usize>>,
) -> (
    Vec<RegionLabel>,
    Vec<Option<AbsorberCell>>,
    BTreeMap<String, Vec<usize>>,
) {
    if mesh.nz == 1 {
        return (labels, absorber, probes);
    }
    let layer = mesh.nx * mesh.ny;
    let mut l = Vec::with_capacity(layer * mesh.nz);
    let mut a = Vec::with_capacity(layer * mesh.nz);
    for _ in 0..mesh.nz {
        l.extend_from_slice(&labels);
        a.extend_from_slice(&absorber);
    }
    let probes = probes
        .into_iter()
        .map(|(k, cells)| {
            let mut all = Vec::with_capacity(cells.len() * mesh.nz);
            for z in 0..mesh.nz {
                all.extend(cells.iter().map(|c| c + z * layer));
            }
            (k, all)
        })
        .collect();
    (l, a, probes)
}

fn seg_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let (wx, wy) = (p.0 - a.0, p.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = ((wx * vx + wy * vy) / len2).clamp(0.0, 1.0);
    let (cx, cy) = (a.0 + t * vx - p.0, a.1 + t * vy - p.1);
    (cx * cx + cy * cy).sqrt()
}

/// Straight single-bus layout used for wave characterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub length: f64,
    pub width: f64,
    pub me_cell_length: f64,
    pub absorber_length: f64,
    /// Distance from the ME cell's inner edge to the monitoring column.
    pub probe_offset: f64,
}

impl Default for BusSpec {
    fn default() -> Self {
        Self {
            length: 1000.0,
            width: 40.0,
            me_cell_length: 80.0,
            absorber_length: 200.0,
            probe_offset: 120.0,
        }
    }
}

impl BusSpec {
    pub fn fitting_mesh(&self, dx: f64, dy: f64, dz: f64) -> Result<MeshSpec> {
        let nx = (self.length / dx).round() as usize;
        let ny = (self.width / dy).round() as usize;
        MeshSpec::new(nx.max(1), ny.max(1), 1, dx, dy, dz)
    }
}

/// Straight bus: absorber, input ME cell, open bus, absorber.
pub fn build_straight_bus(bus: &BusSpec, mesh: &MeshSpec) -> Result<LabeledMesh> {
    mesh.validate()?;
    let (dx, dy) = (mesh.dx, mesh.dy);
    check_aligned("length", bus.length, dx)?;
    check_aligned("width", bus.width, dy)?;
    check_aligned("me_cell_length", bus.me_cell_length, dx)?;
    check_aligned("absorber_length", bus.absorber_length, dx)?;
    let la = bus.absorber_length;
    let lme = bus.me_cell_length;
    if bus.length + GRID_EPS < lme + 2.0 * la {
        return Err(Error::Geometry(format!(
            "bus length {} nm is shorter than ME cell plus two absorbers ({} nm)",
            bus.length,
            lme + 2.0 * la
        )));
    }
    if bus.length > mesh.nx as f64 * dx + GRID_EPS || bus.width > mesh.ny as f64 * dy + GRID_EPS
    {
        return Err(Error::LayoutOverflow(format!(
            "bus {}x{} nm does not fit mesh {}x{} nm",
            bus.length,
            bus.width,
            mesh.nx as f64 * dx,
            mesh.ny as f64 * dy
        )));
    }
    let half_w = 0.5 * bus.width;
    let far_abs = bus.length - la;
    let n_layer = mesh.nx * mesh.ny;
    let mut labels = vec![RegionLabel::Vacuum; n_layer];
    let mut absorber = vec![None; n_layer];
    for j in 0..mesh.ny {
        let ay = ((j as f64 + 0.5 - 0.5 * mesh.ny as f64) * dy).abs();
        if ay >= half_w {
            continue;
        }
        for i in 0..mesh.nx {
            let xc = (i as f64 + 0.5) * dx;
            let idx = i + mesh.nx * j;
            if xc >= bus.length {
                continue;
            }
            let (label, abs) = if xc < la {
                (
                    RegionLabel::Absorber,
                    Some(AbsorberCell {
                        depth: (la - xc + 0.5 * dx) / la,
                        adjacent: RegionLabel::MECellIn1,
                    }),
                )
            } else if xc < la + lme {
                (RegionLabel::MECellIn1, None)
            } else if xc < far_abs {
                (RegionLabel::Bus, None)
            } else {
                (
                    RegionLabel::Absorber,
                    Some(AbsorberCell {
                        depth: (xc - far_abs + 0.5 * dx) / la,
                        adjacent: RegionLabel::Bus,
                    }),
                )
            };
            labels[idx] = label;
            absorber[idx] = abs;
        }
    }
    let mut probes = BTreeMap::new();
    let probe_x = la + lme + bus.probe_offset;
    if probe_x <= far_abs + GRID_EPS && bus.probe_offset > 0.0 {
        let i = ((probe_x - 0.5 * dx) / dx).floor() as usize;
        let cells: Vec<usize> = (0..mesh.ny)
            .map(|j| i + mesh.nx * j)
            .filter(|&c| labels[c] == RegionLabel::Bus)
            .collect();
        if !cells.is_empty() {
            probes.insert("probe".to_string(), cells);
        }
    }
    let rows = center_rows(mesh.ny, 0);
    let centerline: Vec<usize> = (0..mesh.nx)
        .flat_map(|i| rows.iter().map(move |&j| (i, j)))
        .map(|(i, j)| i + mesh.nx * j)
        .filter(|&c| labels[c] == RegionLabel::Bus)
        .collect();
    probes.insert("centerline".to_string(), centerline);
    let (labels, absorber, probes) = extrude(mesh, labels, absorber, probes);
    let mut lm = LabeledMesh {
        spec: *mesh,
        labels,
        active_area: 0.0,
        absorber,
        probes,
        kind: LayoutKind::StraightBus,
        centerline_rows: rows,
        source_edge_x: la + lme,
    };
    lm.active_area = lm.count_area();
    Ok(lm)
}

/// Per-cell Gilbert damping including graded absorbers. Vacuum cells get 0.
pub fn build_damping_map(lm: &LabeledMesh, materials: &MaterialMap) -> Result<Vec<f64>> {
    let alpha_max = materials.absorber_alpha_max;
    let mut out = vec![0.0; lm.labels.len()];
    for (idx, &label) in lm.labels.iter().enumerate() {
        if !label.is_active() {
            continue;
        }
        let own = materials.get(label)?.alpha;
        out[idx] = match (label, lm.absorber[idx]) {
            (RegionLabel::Absorber, Some(a)) => {
                let base = materials.get(a.adjacent)?.alpha;
                let d = a.depth.clamp(0.0, 1.0);
                base + (alpha_max - base) * d * d
            }
            (RegionLabel::Absorber, None) => alpha_max,
            _ => own,
        };
    }
    Ok(out)
}
