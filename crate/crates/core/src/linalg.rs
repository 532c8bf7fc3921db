//! Small dense matrix helpers for n <= 4.

pub type Vec4 = [f64; 4];
pub type Mat4 = [[f64; 4]; 4];

pub const ZERO4: Vec4 = [0.0; 4];
pub const ZERO44: Mat4 = [[0.0; 4]; 4];

pub fn identity(n: usize) -> Mat4 {
    let mut m = ZERO44;
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    m
}

pub fn diag(values: &[f64]) -> Mat4 {
    let mut m = ZERO44;
    for (i, v) in values.iter().enumerate() {
        m[i][i] = *v;
    }
    m
}

/// Determinant and inverse by Gauss-Jordan elimination with partial pivoting.
/// Returns `None` for an exactly singular matrix.
pub fn det_inverse(n: usize, m: &Mat4) -> (f64, Option<Mat4>) {
    let mut a = *m;
    let mut inv = identity(n);
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        for r in col + 1..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col] == 0.0 {
            return (0.0, None);
        }
        if piv != col {
            a.swap(piv, col);
            inv.swap(piv, col);
            det = -det;
        }
        let p = a[col][col];
        det *= p;
        for k in 0..n {
            a[col][k] /= p;
            inv[col][k] /= p;
        }
        for r in 0..n {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for k in 0..n {
                        a[r][k] -= f * a[col][k];
                        inv[r][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    (det, Some(inv))
}

/// Eigenvalues of a symmetric matrix (cyclic Jacobi rotations).
pub fn symmetric_eigenvalues(n: usize, m: &Mat4) -> Vec<f64> {
    let mut a = *m;
    for _sweep in 0..64 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[i][j] * a[i][j];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

pub fn mat_vec(n: usize, m: &Mat4, v: &Vec4) -> Vec4 {
    let mut out = ZERO4;
    for i in 0..n {
        for k in 0..n {
            out[i] += m[i][k] * v[k];
        }
    }
    out
}

pub fn mat_mul(n: usize, a: &Mat4, b: &Mat4) -> Mat4 {
    let mut out = ZERO44;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Bilinear form `u^T m v`.
pub fn quad(n: usize, m: &Mat4, u: &Vec4, v: &Vec4) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += u[i] * m[i][j] * v[j];
        }
    }
    s
}

pub fn axpy(n: usize, a: f64, x: &Vec4, y: &Vec4) -> Vec4 {
    let mut out = ZERO4;
    for i in 0..n {
        out[i] = a * x[i] + y[i];
    }
    out
}

pub fn scale(n: usize, a: f64, x: &Vec4) -> Vec4 {
    let mut out = ZERO4;
    for i in 0..n {
        out[i] = a * x[i];
    }
    out
}

pub fn max_abs_mat(n: usize, m: &Mat4) -> f64 {
    let mut mx: f64 = 0.0;
    for row in m.iter().take(n) {
        for v in row.iter().take(n) {
            mx = mx.max(v.abs());
        }
    }
    mx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_lorentzian_block() {
        let m = [
            [-2.0, 0.3, 0.0, 0.0],
            [0.3, 1.0, 0.1, 0.0],
            [0.0, 0.1, 1.5, 0.2],
            [0.0, 0.0, 0.2, 1.0],
        ];
        let (det, inv) = det_inverse(4, &m);
        let inv = inv.unwrap();
        let id = mat_mul(4, &m, &inv);
        for i in 0..4 {
            for j in 0..4 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id[i][j] - e).abs() < 1e-13);
            }
        }
        assert!(det < 0.0);
    }

    #[test]
    fn jacobi_signs() {
        let ev = symmetric_eigenvalues(4, &diag(&[-1.0, 1.0, 1.0, 1.0]));
        assert_eq!(ev.iter().filter(|v| **v < 0.0).count(), 1);
        let m = [[2.0, 1.0, 0.0, 0.0], [1.0, 2.0, 0.0, 0.0], [0.0; 4], [0.0; 4]];
        let mut ev = symmetric_eigenvalues(2, &m);
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] - 1.0).abs() < 1e-12 && (ev[1] - 3.0).abs() < 1e-12);
    }
}
