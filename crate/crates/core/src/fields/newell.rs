//! Demagnetizing tensor between two rectangular cells.
//!
//! Close cells use Newell's closed-form expressions (second differences of the
//! `f` and `g` potentials). Those lose precision to cancellation at large
//! separations, so distant cells use the cell-averaged point-dipole kernel
//! integrated with Gauss-Legendre quadrature over the overlap tent.

use std::f64::consts::PI;

/// Tensor components in the order xx, yy, zz, xy, xz, yz.
pub type Tensor = [f64; 6];

/// Separation (in units of the largest cell edge) beyond which the
/// quadrature form is used.
pub const FAR_FIELD_RATIO: f64 = 10.0;

/// Neumaier-compensated sum.
fn accurate_sum(terms: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for &t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            c += (sum - s) + t;
        } else {
            c += (t - s) + sum;
        }
        sum = s;
    }
    sum + c
}

fn newell_f(x: f64, y: f64, z: f64) -> f64 {
    let (x, y, z) = (x.abs(), y.abs(), z.abs());
    let (xsq, ysq, zsq) = (x * x, y * y, z * z);
    let r2 = xsq + ysq + zsq;
    if r2 <= 0.0 {
        return 0.0;
    }
    let r = r2.sqrt();
    let mut piece = [0.0; 8];
    let mut n = 0;
    if z > 0.0 {
        piece[n] = 2.0 * (2.0 * xsq - ysq - zsq) * r;
        n += 1;
        let t1 = x * y * z;
        if t1 > 0.0 {
            piece[n] = -12.0 * t1 * (y * z).atan2(x * r);
            n += 1;
        }
        let t2 = xsq + zsq;
        if y > 0.0 && t2 > 0.0 {
            let l = ((y + r) * (y + r) / t2).ln();
            piece[n] = 3.0 * y * zsq * l;
            piece[n + 1] = -3.0 * y * xsq * l;
            n += 2;
        }
        let t3 = xsq + ysq;
        if t3 > 0.0 {
            let l = ((z + r) * (z + r) / t3).ln();
            piece[n] = 3.0 * z * ysq * l;
            piece[n + 1] = -3.0 * z * xsq * l;
            n += 2;
        }
    } else if x == y {
        // 2*sqrt(2) - 6*ln(1+sqrt(2))
        const K: f64 = -2.459_814_397_371_068;
        piece[n] = K * xsq * x;
        n += 1;
    } else {
        piece[n] = 2.0 * (2.0 * xsq - ysq) * r;
        n += 1;
        if y > 0.0 && x > 0.0 {
            piece[n] = -6.0 * y * xsq * ((y + r) / x).ln();
            n += 1;
        }
    }
    accurate_sum(&piece[..n]) / 12.0
}

fn newell_g(x: f64, y: f64, z: f64) -> f64 {
    let mut sign = 1.0;
    if x < 0.0 {
        sign = -sign;
    }
    if y < 0.0 {
        sign = -sign;
    }
    let (x, y, z) = (x.abs(), y.abs(), z.abs());
    let (xsq, ysq, zsq) = (x * x, y * y, z * z);
    let r2 = xsq + ysq + zsq;
    if r2 <= 0.0 {
        return 0.0;
    }
    let r = r2.sqrt();
    let mut piece = [0.0; 7];
    let mut n = 0;
    piece[n] = -2.0 * x * y * r;
    n += 1;
    if z > 0.0 {
        piece[n] = -z * zsq * (x * y).atan2(z * r);
        piece[n + 1] = -3.0 * z * ysq * (x * z).atan2(y * r);
        piece[n + 2] = -3.0 * z * xsq * (y * z).atan2(x * r);
        n += 3;
        let t1 = xsq + ysq;
        if t1 > 0.0 {
            piece[n] = 6.0 * x * y * z * ((z + r) / t1.sqrt()).ln();
            n += 1;
        }
        let t2 = ysq + zsq;
        if t2 > 0.0 {
            piece[n] = y * (3.0 * zsq - ysq) * ((x + r) / t2.sqrt()).ln();
            n += 1;
        }
        let t3 = xsq + zsq;
        if t3 > 0.0 {
            piece[n] = x * (3.0 * zsq - xsq) * ((y + r) / t3.sqrt()).ln();
            n += 1;
        }
    } else {
        if y > 0.0 {
            piece[n] = -y * ysq * ((x + r) / y).ln();
            n += 1;
        }
        if x > 0.0 {
            piece[n] = -x * xsq * ((y + r) / x).ln();
            n += 1;
        }
    }
    sign * accurate_sum(&piece[..n]) / 6.0
}

const W: [f64; 3] = [-1.0, 2.0, -1.0];

fn second_difference(
    func: fn(f64, f64, f64) -> f64,
    x: f64,
    y: f64,
    z: f64,
    dx: f64,
    dy: f64,
    dz: f64,
) -> f64 {
    let mut terms = [0.0; 27];
    let mut n = 0;
    for (a, wa) in W.iter().enumerate() {
        for (b, wb) in W.iter().enumerate() {
            for (c, wc) in W.iter().enumerate() {
                let xa = x + (a as f64 - 1.0) * dx;
                let yb = y + (b as f64 - 1.0) * dy;
                let zc = z + (c as f64 - 1.0) * dz;
                terms[n] = wa * wb * wc * func(xa, yb, zc);
                n += 1;
            }
        }
    }
    accurate_sum(&terms) / (4.0 * PI * dx * dy * dz)
}

fn nxx(x: f64, y: f64, z: f64, dx: f64, dy: f64, dz: f64) -> f64 {
    second_difference(newell_f, x, y, z, dx, dy, dz)
}

fn nxy(x: f64, y: f64, z: f64, dx: f64, dy: f64, dz: f64) -> f64 {
    second_difference(newell_g, x, y, z, dx, dy, dz)
}

/// Newell tensor for a source cell at the origin and a target cell displaced by
/// `(x, y, z)`, both of size `dx × dy × dz`.
pub fn newell_tensor(x: f64, y: f64, z: f64, dx: f64, dy: f64, dz: f64) -> Tensor {
    // The expressions are scale invariant; work with the largest edge = 1.
    let s = dx.max(dy).max(dz);
    let (x, y, z, dx, dy, dz) = (x / s, y / s, z / s, dx / s, dy / s, dz / s);
    [
        nxx(x, y, z, dx, dy, dz),
        nxx(y, x, z, dy, dx, dz),
        nxx(z, y, x, dz, dy, dx),
        nxy(x, y, z, dx, dy, dz),
        nxy(x, z, y, dx, dz, dy),
        nxy(y, z, x, dy, dz, dx),
    ]
}

// Gauss-Legendre nodes and weights on [0, 1].
const GL_N: usize = 6;
const GL_X: [f64; GL_N] = [
    0.033_765_242_898_423_99,
    0.169_395_306_766_867_74,
    0.380_690_406_958_401_55,
    0.619_309_593_041_598_5,
    0.830_604_693_233_132_3,
    0.966_234_757_101_576,
];
const GL_W: [f64; GL_N] = [
    0.085_662_246_189_585_17,
    0.180_380_786_524_069_3,
    0.233_956_967_286_345_52,
    0.233_956_967_286_345_52,
    0.180_380_786_524_069_3,
    0.085_662_246_189_585_17,
];

/// Tent-weighted quadrature nodes for one axis: offsets and weights such that
/// `Σ w·g(s) ≈ ∫ (d − |s|)₊ g(s) ds / d²`.
fn tent_nodes(d: f64) -> [(f64, f64); 2 * GL_N] {
    let mut out = [(0.0, 0.0); 2 * GL_N];
    for i in 0..GL_N {
        let t = GL_X[i];
        let w = GL_W[i] * (1.0 - t);
        out[2 * i] = (t * d, w);
        out[2 * i + 1] = (-t * d, w);
    }
    out
}

/// Cell-pair averaged dipole tensor by quadrature; accurate for well separated cells.
pub fn dipole_tensor(x: f64, y: f64, z: f64, dx: f64, dy: f64, dz: f64) -> Tensor {
    let s = dx.max(dy).max(dz);
    let (x, y, z, dx, dy, dz) = (x / s, y / s, z / s, dx / s, dy / s, dz / s);
    let nx = tent_nodes(dx);
    let ny = tent_nodes(dy);
    let nz = tent_nodes(dz);
    let mut acc = [0.0; 6];
    for &(sx, wx) in &nx {
        let rx = x + sx;
        for &(sy, wy) in &ny {
            let ry = y + sy;
            let wxy = wx * wy;
            for &(sz, wz) in &nz {
                let rz = z + sz;
                let r2 = rx * rx + ry * ry + rz * rz;
                let inv_r = 1.0 / r2.sqrt();
                let inv_r3 = inv_r * inv_r * inv_r;
                let inv_r5 = inv_r3 / r2;
                let w = wxy * wz;
                acc[0] += w * (inv_r3 - 3.0 * rx * rx * inv_r5);
                acc[1] += w * (inv_r3 - 3.0 * ry * ry * inv_r5);
                acc[2] += w * (inv_r3 - 3.0 * rz * rz * inv_r5);
                acc[3] -= w * 3.0 * rx * ry * inv_r5;
                acc[4] -= w * 3.0 * rx * rz * inv_r5;
                acc[5] -= w * 3.0 * ry * rz * inv_r5;
            }
        }
    }
    // Weights integrate the tent to 1 per axis (times d each), so the volume
    // factor V = dx·dy·dz enters once.
    let v = dx * dy * dz;
    acc.map(|a| a * v / (4.0 * PI))
}

/// Demag tensor between cells separated by `(x, y, z)`.
pub fn demag_tensor(x: f64, y: f64, z: f64, dx: f64, dy: f64, dz: f64) -> Tensor {
    let r = (x * x + y * y + z * z).sqrt();
    if r > FAR_FIELD_RATIO * dx.max(dy).max(dz) {
        dipole_tensor(x, y, z, dx, dy, dz)
    } else {
        newell_tensor(x, y, z, dx, dy, dz)
    }
}
