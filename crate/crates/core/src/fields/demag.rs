//! Demagnetizing field: FFT convolution with the Newell tensor, or the local
//! thin-film approximation.

use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::newell::{demag_tensor, Tensor};
use crate::error::{Error, Result};
use crate::geometry::MeshSpec;
use crate::vec3::Vec3;

/// Padded grids larger than this are refused instead of allocated.
pub const MAX_PADDED_CELLS: usize = 1 << 26;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemagMode {
    FullFft,
    ThinFilmLocal,
}

impl DemagMode {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "fft" | "full_fft" | "FullFFT" => Some(DemagMode::FullFft),
            "local" | "thin_film_local" | "ThinFilmLocal" => Some(DemagMode::ThinFilmLocal),
            _ => None,
        }
    }
}

fn smooth_size(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut r = n;
        for p in [2, 3, 5, 7] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return n;
        }
        n += 1;
    }
}

struct FftConv {
    px: usize,
    py: usize,
    pz: usize,
    hx: usize,
    /// Real spectra of the six tensor components, pre-scaled by 1/(px·py·pz).
    kernel: [Vec<f64>; 6],
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
    fy: Arc<dyn Fft<f64>>,
    fy_inv: Arc<dyn Fft<f64>>,
    fz: Arc<dyn Fft<f64>>,
    fz_inv: Arc<dyn Fft<f64>>,
}

/// Reusable buffers for one demag evaluation at a time.
pub struct DemagScratch {
    real: Vec<f64>,
    row: Vec<Complex<f64>>,
    spec: [Vec<Complex<f64>>; 3],
    tmp: Vec<Complex<f64>>,
    fft: Vec<Complex<f64>>,
    comp: Vec<f64>,
}

impl FftConv {
    fn new(mesh: &MeshSpec) -> Result<Self> {
        let px = smooth_size(2 * mesh.nx - 1);
        let py = smooth_size(2 * mesh.ny - 1);
        let pz = smooth_size(2 * mesh.nz - 1);
        let cells = px
            .checked_mul(py)
            .and_then(|v| v.checked_mul(pz))
            .unwrap_or(usize::MAX);
        if cells > MAX_PADDED_CELLS {
            return Err(Error::DemagTooLarge {
                cells,
                limit: MAX_PADDED_CELLS,
            });
        }
        let hx = px / 2 + 1;
        let mut rp = RealFftPlanner::<f64>::new();
        let mut cp = FftPlanner::<f64>::new();
        let mut conv = FftConv {
            px,
            py,
            pz,
            hx,
            kernel: Default::default(),
            r2c: rp.plan_fft_forward(px),
            c2r: rp.plan_fft_inverse(px),
            fy: cp.plan_fft_forward(py),
            fy_inv: cp.plan_fft_inverse(py),
            fz: cp.plan_fft_forward(pz),
            fz_inv: cp.plan_fft_inverse(pz),
        };
        conv.kernel = conv.kernel_spectra(mesh);
        Ok(conv)
    }

    fn spec_len(&self) -> usize {
        self.hx * self.py * self.pz
    }

    fn scratch(&self, n_cells: usize) -> DemagScratch {
        let len = self.spec_len();
        let fft_len = [
            self.r2c.get_scratch_len(),
            self.c2r.get_scratch_len(),
            self.fy.get_inplace_scratch_len(),
            self.fy_inv.get_inplace_scratch_len(),
            self.fz.get_inplace_scratch_len(),
            self.fz_inv.get_inplace_scratch_len(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        DemagScratch {
            real: vec![0.0; self.px],
            row: vec![Complex::default(); self.hx],
            spec: [
                vec![Complex::default(); len],
                vec![Complex::default(); len],
                vec![Complex::default(); len],
            ],
            tmp: vec![Complex::default(); len],
            fft: vec![Complex::default(); fft_len],
            comp: vec![0.0; n_cells],
        }
    }

    fn kernel_spectra(&self, mesh: &MeshSpec) -> [Vec<f64>; 6] {
        let (px, py, pz) = (self.px, self.py, self.pz);
        let [dx, dy, dz] = [mesh.dx, mesh.dy, mesh.dz];
        let mut real: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; px * py * pz]);
        let sgn = |v: i64| if v < 0 { -1.0 } else { 1.0 };
        let wrap = |v: i64, p: usize| v.rem_euclid(p as i64) as usize;
        // Tensor values only depend on |X|,|Y|,|Z| up to sign flips of the
        // off-diagonal terms, so evaluate once per octant representative.
        for z in 0..mesh.nz as i64 {
            for y in 0..mesh.ny as i64 {
                for x in 0..mesh.nx as i64 {
                    let t: Tensor =
                        demag_tensor(x as f64 * dx, y as f64 * dy, z as f64 * dz, dx, dy, dz);
                    for &sx in if x == 0 { &[1][..] } else { &[1, -1][..] } {
                        for &sy in if y == 0 { &[1][..] } else { &[1, -1][..] } {
                            for &sz in if z == 0 { &[1][..] } else { &[1, -1][..] } {
                                let (xx, yy, zz) = (x * sx, y * sy, z * sz);
                                let idx = wrap(xx, px) + px * (wrap(yy, py) + py * wrap(zz, pz));
                                real[0][idx] = t[0];
                                real[1][idx] = t[1];
                                real[2][idx] = t[2];
                                real[3][idx] = t[3] * sgn(xx) * sgn(yy);
                                real[4][idx] = t[4] * sgn(xx) * sgn(zz);
                                real[5][idx] = t[5] * sgn(yy) * sgn(zz);
                            }
                        }
                    }
                }
            }
        }
        let norm = 1.0 / (px * py * pz) as f64;
        let mut scratch = self.scratch(0);
        let mut out: [Vec<f64>; 6] = Default::default();
        for (c, r) in real.iter().enumerate() {
            let mut spec = std::mem::take(&mut scratch.spec[0]);
            self.forward(r, [px, py, pz], &mut spec, &mut scratch);
            // Even/odd parities make every component's spectrum real.
            out[c] = spec.iter().map(|v| v.re * norm).collect();
            scratch.spec[0] = spec;
        }
        out
    }

    /// 3D forward transform of a real block of size `ext` (≤ padded size)
    /// placed at the origin of the padded grid.
    fn forward(&self, src: &[f64], ext: [usize; 3], out: &mut [Complex<f64>], s: &mut DemagScratch) {
        let (py, pz, hx) = (self.py, self.pz, self.hx);
        let [ex, ey, ez] = ext;
        for k in 0..pz {
            for j in 0..py {
                let row = &mut out[hx * (j + py * k)..hx * (j + py * k + 1)];
                if j < ey && k < ez {
                    let base = ex * (j + ey * k);
                    s.real[..ex].copy_from_slice(&src[base..base + ex]);
                    s.real[ex..].fill(0.0);
                    self.r2c
                        .process_with_scratch(&mut s.real, row, &mut s.fft)
                        .expect("r2c buffer sizes");
                } else {
                    row.fill(Complex::default());
                }
            }
        }
        let plane = hx * py;
        for k in 0..ez {
            let p = &mut out[plane * k..plane * (k + 1)];
            transpose(p, &mut s.tmp[..plane], py, hx);
            self.fy.process_with_scratch(&mut s.tmp[..plane], &mut s.fft);
            transpose(&s.tmp[..plane], p, hx, py);
        }
        if pz > 1 {
            transpose(out, &mut s.tmp, pz, plane);
            self.fz.process_with_scratch(&mut s.tmp, &mut s.fft);
            transpose(&s.tmp, out, plane, pz);
        }
    }

    /// Inverse of [`Self::forward`], writing the `ext` block into `dst`.
    fn inverse(&self, spec: &mut [Complex<f64>], ext: [usize; 3], dst: &mut [f64], s: &mut DemagScratch) {
        let (py, pz, hx) = (self.py, self.pz, self.hx);
        let [ex, ey, ez] = ext;
        let plane = hx * py;
        if pz > 1 {
            transpose(spec, &mut s.tmp, pz, plane);
            self.fz_inv.process_with_scratch(&mut s.tmp, &mut s.fft);
            transpose(&s.tmp, spec, plane, pz);
        }
        for k in 0..ez {
            let p = &mut spec[plane * k..plane * (k + 1)];
            transpose(p, &mut s.tmp[..plane], py, hx);
            self.fy_inv.process_with_scratch(&mut s.tmp[..plane], &mut s.fft);
            transpose(&s.tmp[..plane], p, hx, py);
        }
        for k in 0..ez {
            for j in 0..ey {
                let off = hx * (j + py * k);
                s.row.copy_from_slice(&spec[off..off + hx]);
                s.row[0].im = 0.0;
                if self.px % 2 == 0 {
                    s.row[hx - 1].im = 0.0;
                }
                self.c2r
                    .process_with_scratch(&mut s.row, &mut s.real, &mut s.fft)
                    .expect("c2r buffer sizes");
                let base = ex * (j + ey * k);
                dst[base..base + ex].copy_from_slice(&s.real[..ex]);
            }
        }
    }
}

/// Transposes a `rows × cols` row-major block into `cols × rows`.
fn transpose(src: &[Complex<f64>], dst: &mut [Complex<f64>], rows: usize, cols: usize) {
    const B: usize = 16;
    for r0 in (0..rows).step_by(B) {
        for c0 in (0..cols).step_by(B) {
            for r in r0..(r0 + B).min(rows) {
                for c in c0..(c0 + B).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

pub struct DemagKernel {
    mode: DemagMode,
    mesh: MeshSpec,
    self_tensor: Tensor,
    fft: Option<FftConv>,
}

impl std::fmt::Debug for DemagKernel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DemagKernel")
            .field("mode", &self.mode)
            .field("mesh", &self.mesh)
            .field("padded", &self.padded_dims())
            .finish()
    }
}

/// Builds the demag kernel for `mesh`.
pub fn build_demag_kernel(mesh: &MeshSpec, mode: DemagMode) -> Result<DemagKernel> {
    mesh.validate()?;
    let self_tensor = demag_tensor(0.0, 0.0, 0.0, mesh.dx, mesh.dy, mesh.dz);
    let fft = match mode {
        DemagMode::FullFft => Some(FftConv::new(mesh)?),
        DemagMode::ThinFilmLocal => None,
    };
    Ok(DemagKernel {
        mode,
        mesh: *mesh,
        self_tensor,
        fft,
    })
}

impl DemagKernel {
    pub fn mode(&self) -> DemagMode {
        self.mode
    }

    pub fn mesh(&self) -> &MeshSpec {
        &self.mesh
    }

    /// Newell tensor of a cell with itself (xx, yy, zz, xy, xz, yz).
    pub fn self_tensor(&self) -> Tensor {
        self.self_tensor
    }

    pub fn padded_dims(&self) -> Option<[usize; 3]> {
        self.fft.as_ref().map(|f| [f.px, f.py, f.pz])
    }

    pub fn scratch(&self) -> DemagScratch {
        match &self.fft {
            Some(f) => f.scratch(self.mesh.n_cells()),
            None => DemagScratch {
                real: Vec::new(),
                row: Vec::new(),
                spec: Default::default(),
                tmp: Vec::new(),
                fft: Vec::new(),
                comp: Vec::new(),
            },
        }
    }

    /// Demagnetizing field of magnetization `ms·m` over the full grid,
    /// written into `out`.
    pub fn field_into(
        &self,
        m: &[Vec3],
        ms: &[f64],
        out: &mut [Vec3],
        s: &mut DemagScratch,
    ) -> Result<()> {
        let n = self.mesh.n_cells();
        if m.len() != n || ms.len() != n || out.len() != n {
            return Err(Error::KernelMismatch(format!(
                "kernel has {n} cells, got m={}, ms={}, out={}",
                m.len(),
                ms.len(),
                out.len()
            )));
        }
        let Some(f) = &self.fft else {
            for ((h, mi), &msi) in out.iter_mut().zip(m).zip(ms) {
                *h = [0.0, 0.0, -msi * mi[2]];
            }
            return Ok(());
        };
        let ext = [self.mesh.nx, self.mesh.ny, self.mesh.nz];
        let mut spec = std::mem::take(&mut s.spec);
        for (c, sp) in spec.iter_mut().enumerate() {
            for ((v, mi), &msi) in s.comp.iter_mut().zip(m).zip(ms) {
                *v = mi[c] * msi;
            }
            let comp = std::mem::take(&mut s.comp);
            f.forward(&comp, ext, sp, s);
            s.comp = comp;
        }
        let [kxx, kyy, kzz, kxy, kxz, kyz] = &f.kernel;
        let [sx, sy, sz] = &mut spec;
        for i in 0..f.spec_len() {
            let (mx, my, mz) = (sx[i], sy[i], sz[i]);
            sx[i] = -(mx * kxx[i] + my * kxy[i] + mz * kxz[i]);
            sy[i] = -(mx * kxy[i] + my * kyy[i] + mz * kyz[i]);
            sz[i] = -(mx * kxz[i] + my * kyz[i] + mz * kzz[i]);
        }
        for (c, sp) in spec.iter_mut().enumerate() {
            let mut comp = std::mem::take(&mut s.comp);
            f.inverse(sp, ext, &mut comp, s);
            for (h, v) in out.iter_mut().zip(&comp) {
                h[c] = *v;
            }
            s.comp = comp;
        }
        s.spec = spec;
        Ok(())
    }
}

/// Convenience wrapper allocating its own scratch.
pub fn demag_field(m: &[Vec3], kernel: &DemagKernel, ms: &[f64]) -> Result<Vec<Vec3>> {
    let mut out = vec![[0.0; 3]; m.len()];
    let mut s = kernel.scratch();
    kernel.field_into(m, ms, &mut out, &mut s)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(1), 1);
        assert_eq!(smooth_size(11), 12);
        assert_eq!(smooth_size(13), 14);
        assert_eq!(smooth_size(97), 98);
    }

    #[test]
    fn local_mode_is_minus_ms_mz() {
        let mesh = MeshSpec::new(3, 2, 1, 2.0, 2.0, 12.0).unwrap();
        let k = build_demag_kernel(&mesh, DemagMode::ThinFilmLocal).unwrap();
        let m = vec![[0.6, 0.0, 0.8]; 6];
        let ms = vec![790e3; 6];
        let h = demag_field(&m, &k, &ms).unwrap();
        for v in h {
            assert_eq!(v, [0.0, 0.0, -0.8 * 790e3]);
        }
    }

    #[test]
    fn mismatched_sizes_rejected() {
        let mesh = MeshSpec::new(3, 2, 1, 2.0, 2.0, 12.0).unwrap();
        let k = build_demag_kernel(&mesh, DemagMode::FullFft).unwrap();
        let m = vec![[0.0, 0.0, 1.0]; 5];
        let ms = vec![1.0; 5];
        assert!(matches!(demag_field(&m, &k, &ms), Err(Error::KernelMismatch(_))));
    }

    #[test]
    fn single_cube_cell() {
        let mesh = MeshSpec::new(1, 1, 1, 3.0, 3.0, 3.0).unwrap();
        let k = build_demag_kernel(&mesh, DemagMode::FullFft).unwrap();
        let h = demag_field(&[[1.0, 0.0, 0.0]], &k, &[3.0]).unwrap();
        assert!((h[0][0] + 1.0).abs() < 1e-13, "{:?}", h[0]);
        assert!(h[0][1].abs() < 1e-14 && h[0][2].abs() < 1e-14);
    }

    #[test]
    fn oversize_grid_refused() {
        let mesh = MeshSpec::new(8192, 8192, 2, 2.0, 2.0, 2.0).unwrap();
        assert!(matches!(
            build_demag_kernel(&mesh, DemagMode::FullFft),
            Err(Error::DemagTooLarge { .. })
        ));
    }
}
