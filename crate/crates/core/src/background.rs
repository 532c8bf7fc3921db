//! Analytic background spaces: metric, Christoffel symbols and covariant
//! differentiation of sampled tensor fields.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat4, Vec4};
use crate::tensor::{MetricValue, TensorValue, Variance};

/// Christoffel symbols `Gamma^mu_{lambda nu}` as `[mu][lambda][nu]`.
pub type Christoffel = [[[f64; 4]; 4]; 4];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackgroundKind {
    Euclidean,
    Minkowski,
    /// `g = Omega^2 eta` with `Omega = 1 + q |x|^2` (Euclidean norm of the
    /// coordinates); `eta` is Minkowski when `lorentzian` is set.
    ConformallyFlat { q: f64, lorentzian: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackgroundMetric {
    pub dim: usize,
    #[serde(flatten)]
    pub kind: BackgroundKind,
}

impl BackgroundMetric {
    pub fn euclidean(dim: usize) -> Self {
        Self {
            dim,
            kind: BackgroundKind::Euclidean,
        }
    }

    pub fn minkowski(dim: usize) -> Self {
        Self {
            dim,
            kind: BackgroundKind::Minkowski,
        }
    }

    pub fn conformal(dim: usize, q: f64, lorentzian: bool) -> Self {
        Self {
            dim,
            kind: BackgroundKind::ConformallyFlat { q, lorentzian },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(2..=4).contains(&self.dim) {
            return Err(Error::InvalidParameter(format!(
                "background dimension {} not in 2..=4",
                self.dim
            )));
        }
        Ok(())
    }

    pub fn is_flat(&self) -> bool {
        !matches!(self.kind, BackgroundKind::ConformallyFlat { .. })
    }

    fn flat_metric(&self) -> Mat4 {
        let mut eta = linalg::identity(self.dim);
        let lorentzian = match self.kind {
            BackgroundKind::Minkowski => true,
            BackgroundKind::ConformallyFlat { lorentzian, .. } => lorentzian,
            BackgroundKind::Euclidean => false,
        };
        if lorentzian {
            eta[0][0] = -1.0;
        }
        eta
    }

    fn conformal_factor(&self, q: f64, x: &Vec4) -> Result<f64> {
        let r2: f64 = x[..self.dim].iter().map(|v| v * v).sum();
        let om = 1.0 + q * r2;
        if om <= 0.0 || !om.is_finite() {
            return Err(Error::InvalidConformalFactor(om));
        }
        Ok(om)
    }

    fn check_point(&self, x: &Vec4) -> Result<()> {
        if x[..self.dim].iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite background point".into()));
        }
        Ok(())
    }

    /// Covariant metric components at `x` without building a [`MetricValue`].
    pub fn metric_matrix(&self, x: &Vec4) -> Result<Mat4> {
        self.check_point(x)?;
        let mut g = self.flat_metric();
        if let BackgroundKind::ConformallyFlat { q, .. } = self.kind {
            let om = self.conformal_factor(q, x)?;
            for (i, row) in g.iter_mut().enumerate().take(self.dim) {
                row[i] *= om * om;
            }
        }
        Ok(g)
    }

    pub fn metric_at(&self, x: &Vec4) -> Result<MetricValue> {
        MetricValue::new(self.dim, &self.metric_matrix(x)?)
    }

    /// Christoffel symbols, `None` for flat backgrounds.
    pub fn christoffel_raw(&self, x: &Vec4) -> Result<Option<Christoffel>> {
        self.check_point(x)?;
        let BackgroundKind::ConformallyFlat { q, .. } = self.kind else {
            return Ok(None);
        };
        let n = self.dim;
        let om = self.conformal_factor(q, x)?;
        let eta = self.flat_metric();
        // a_nu = d_nu ln Omega
        let mut a = [0.0; 4];
        for nu in 0..n {
            a[nu] = 2.0 * q * x[nu] / om;
        }
        let mut gam = [[[0.0; 4]; 4]; 4];
        for mu in 0..n {
            for l in 0..n {
                for nu in 0..n {
                    let mut v = 0.0;
                    if mu == l {
                        v += a[nu];
                    }
                    if mu == nu {
                        v += a[l];
                    }
                    // eta is diagonal with entries +-1, so eta^{mu mu} = eta_{mu mu}
                    v -= eta[l][nu] * eta[mu][mu] * a[mu];
                    gam[mu][l][nu] = v;
                }
            }
        }
        Ok(Some(gam))
    }

    /// `Gamma^mu_{lambda nu}` as a tensor value with variance (up, down, down).
    pub fn christoffel_at(&self, x: &Vec4) -> Result<TensorValue> {
        let n = self.dim;
        let var = [Variance::Contra, Variance::Co, Variance::Co];
        Ok(match self.christoffel_raw(x)? {
            None => TensorValue::zeros(n, &var),
            Some(g) => TensorValue::from_fn(n, &var, |i| g[i[0]][i[1]][i[2]]),
        })
    }
}

/// Values of a tensor field on the symmetric coordinate stencil around a point.
#[derive(Clone, Debug)]
pub struct FieldSample {
    pub x: Vec4,
    pub h: f64,
    pub center: TensorValue,
    /// `plus[rho]` is the field at `x + h e_rho`.
    pub plus: Vec<TensorValue>,
    pub minus: Vec<TensorValue>,
}

impl FieldSample {
    /// Samples `f` on the stencil of spacing `h` around `x`.
    pub fn from_fn(
        dim: usize,
        x: Vec4,
        h: f64,
        f: impl Fn(&Vec4) -> Result<TensorValue>,
    ) -> Result<Self> {
        let center = f(&x)?;
        let mut plus = Vec::with_capacity(dim);
        let mut minus = Vec::with_capacity(dim);
        for rho in 0..dim {
            let mut xp = x;
            xp[rho] += h;
            let mut xm = x;
            xm[rho] -= h;
            plus.push(f(&xp)?);
            minus.push(f(&xm)?);
        }
        Ok(Self {
            x,
            h,
            center,
            plus,
            minus,
        })
    }
}

/// `nabla_rho T` by central differences plus connection terms for every
/// slot; the derivative index is prepended as a covariant slot.
pub fn covariant_derivative(bg: &BackgroundMetric, f: &FieldSample) -> Result<TensorValue> {
    let n = bg.dim;
    let t = &f.center;
    if t.rank() > 3 {
        return Err(Error::InvalidParameter(format!(
            "covariant derivative of rank {} field",
            t.rank()
        )));
    }
    if !(f.h > 0.0) {
        return Err(Error::StencilWidth(format!("non-positive spacing {}", f.h)));
    }
    if f.plus.len() < n || f.minus.len() < n {
        return Err(Error::StencilWidth(format!(
            "{} of {} stencil directions present",
            f.plus.len().min(f.minus.len()),
            n
        )));
    }
    if t.dim() != n {
        return Err(Error::DimMismatch {
            expected: n,
            found: t.dim(),
        });
    }
    let mut var = vec![Variance::Co];
    var.extend_from_slice(t.variance());
    let gamma = bg.christoffel_raw(&f.x)?;
    let rank = t.rank();
    Ok(TensorValue::from_fn(n, &var, |idx| {
        let rho = idx[0];
        let rest = &idx[1..];
        let mut v = (f.plus[rho].get(rest) - f.minus[rho].get(rest)) / (2.0 * f.h);
        if let Some(g) = &gamma {
            let mut j = [0usize; 3];
            j[..rank].copy_from_slice(rest);
            for s in 0..rank {
                let orig = rest[s];
                for b in 0..n {
                    j[s] = b;
                    let c = t.get(&j[..rank]);
                    match t.variance()[s] {
                        Variance::Contra => v += g[orig][rho][b] * c,
                        Variance::Co => v -= g[b][rho][orig] * c,
                    }
                }
                j[s] = orig;
            }
        }
        v
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_christoffel(bg: &BackgroundMetric, x: &Vec4, h: f64) -> Christoffel {
        let n = bg.dim;
        let ginv = bg.metric_at(x).unwrap().upper_mat();
        let mut dg = [[[0.0; 4]; 4]; 4]; // dg[c][a][b] = d_c g_ab
        for c in 0..n {
            let mut xp = *x;
            xp[c] += h;
            let mut xm = *x;
            xm[c] -= h;
            let gp = bg.metric_matrix(&xp).unwrap();
            let gm = bg.metric_matrix(&xm).unwrap();
            for a in 0..n {
                for b in 0..n {
                    dg[c][a][b] = (gp[a][b] - gm[a][b]) / (2.0 * h);
                }
            }
        }
        let mut out = [[[0.0; 4]; 4]; 4];
        for mu in 0..n {
            for l in 0..n {
                for nu in 0..n {
                    let mut s = 0.0;
                    for a in 0..n {
                        s += 0.5 * ginv[mu][a] * (dg[l][a][nu] + dg[nu][a][l] - dg[a][l][nu]);
                    }
                    out[mu][l][nu] = s;
                }
            }
        }
        out
    }

    #[test]
    fn flat_metrics() {
        let m = BackgroundMetric::minkowski(4).metric_at(&[3.0, 1.0, -2.0, 0.5]).unwrap();
        assert_eq!(m.lower_mat(), linalg::diag(&[-1.0, 1.0, 1.0, 1.0]));
        let e = BackgroundMetric::euclidean(3).metric_at(&[1.0, 2.0, 3.0, 0.0]).unwrap();
        assert_eq!(e.lower_mat(), linalg::identity(3));
        let c = BackgroundMetric::conformal(4, 0.3, true).metric_at(&[0.0; 4]).unwrap();
        assert_eq!(c.lower_mat(), linalg::diag(&[-1.0, 1.0, 1.0, 1.0]));
        assert!(BackgroundMetric::minkowski(4)
            .christoffel_at(&[1.0; 4])
            .unwrap()
            .max_abs()
            == 0.0);
    }

    #[test]
    fn invalid_conformal_factor() {
        let bg = BackgroundMetric::conformal(3, -1.0, false);
        assert!(matches!(
            bg.metric_at(&[1.0, 1.0, 0.0, 0.0]),
            Err(Error::InvalidConformalFactor(_))
        ));
    }

    #[test]
    fn conformal_christoffels_match_metric_differences() {
        let bg = BackgroundMetric::conformal(4, 0.2, true);
        let x = [0.3, -0.5, 0.7, 0.2];
        let exact = bg.christoffel_raw(&x).unwrap().unwrap();
        let e1 = fd_christoffel(&bg, &x, 1e-2);
        let e2 = fd_christoffel(&bg, &x, 5e-3);
        let mut r1: f64 = 0.0;
        let mut r2: f64 = 0.0;
        for mu in 0..4 {
            for l in 0..4 {
                for nu in 0..4 {
                    assert_eq!(exact[mu][l][nu], exact[mu][nu][l]);
                    r1 = r1.max((exact[mu][l][nu] - e1[mu][l][nu]).abs());
                    r2 = r2.max((exact[mu][l][nu] - e2[mu][l][nu]).abs());
                }
            }
        }
        assert!(r1 < 1e-4, "{r1}");
        assert!((r1 / r2 - 4.0).abs() < 0.8, "ratio {}", r1 / r2);
    }

    #[test]
    fn metric_compatibility_converges_at_second_order() {
        let bg = BackgroundMetric::conformal(4, 0.25, true);
        let x = [0.4, 0.1, -0.3, 0.6];
        let res = |h: f64| {
            let s = FieldSample::from_fn(4, x, h, |p| Ok(bg.metric_at(p)?.g)).unwrap();
            covariant_derivative(&bg, &s).unwrap().max_abs()
        };
        let (a, b) = (res(0.02), res(0.01));
        assert!(a < 1e-3);
        let ratio = a / b;
        assert!((ratio - 4.0).abs() < 0.8, "ratio {ratio}");
    }

    #[test]
    fn flat_derivatives_are_exact_on_linear_fields() {
        let bg = BackgroundMetric::minkowski(4);
        let a = [0.5, -1.0, 2.0, 0.25];
        let s = FieldSample::from_fn(4, [0.1, 0.2, 0.3, 0.4], 0.1, |p| {
            Ok(TensorValue::scalar(4, (0..4).map(|i| a[i] * p[i]).sum()))
        })
        .unwrap();
        let d = covariant_derivative(&bg, &s).unwrap();
        for i in 0..4 {
            assert!((d.get(&[i]) - a[i]).abs() < 1e-14);
        }
        let c = FieldSample::from_fn(4, [0.0; 4], 0.1, |_| Ok(TensorValue::identity(4))).unwrap();
        assert!(covariant_derivative(&bg, &c).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn missing_stencil_is_reported() {
        let bg = BackgroundMetric::euclidean(3);
        let mut s = FieldSample::from_fn(3, [0.0; 4], 0.1, |_| Ok(TensorValue::scalar(3, 1.0))).unwrap();
        s.plus.pop();
        assert!(matches!(covariant_derivative(&bg, &s), Err(Error::StencilWidth(_))));
    }
}
