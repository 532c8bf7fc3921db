//! The area action, its equations of motion, deformations of a sheet and
//! the finite-difference variation engine, a minimal-surface relaxation
//! solver, and the variational identities built on them.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{FrameRule, SheetAnalysis, SheetGeometry};
use crate::grid::Grid2;
use crate::jet::Jet2;
use crate::linalg::Vec4;
use crate::tensor::Variance;
use crate::worldsheet::{
    edge_flux, row_flux, surface_integral, Chart, EmbeddingSheet, SheetSource, Surface,
};

/// Something that can be moved along a tangent direction.
pub trait Deformable: Sized {
    type Tangent;
    fn deformed(&self, tangent: &Self::Tangent, eps: f64) -> Result<Self>;
}

pub type DeformationMap = Arc<dyn Fn(&[Jet2; 4], Jet2, Jet2) -> [Jet2; 4] + Send + Sync>;

/// A background vector field `xi^mu` along a sheet.
///
/// The map receives the jets of the undeformed (anchor) position and the
/// sheet parameters, so a field is independent of the point of the phase
/// space it is applied at.
#[derive(Clone)]
pub struct DeformationField {
    pub name: String,
    /// Declared to solve the linearized equations of motion.
    pub tangent: bool,
    map: DeformationMap,
}

impl fmt::Debug for DeformationField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeformationField")
            .field("name", &self.name)
            .field("tangent", &self.tangent)
            .finish()
    }
}

const ZERO4: [Jet2; 4] = [Jet2::constant(0.0); 4];

impl DeformationField {
    pub fn new(
        name: impl Into<String>,
        tangent: bool,
        map: impl Fn(&[Jet2; 4], Jet2, Jet2) -> [Jet2; 4] + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            tangent,
            map: Arc::new(map),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", true, |_, _, _| ZERO4)
    }

    /// Constant translation.
    pub fn translation(v: Vec4) -> Self {
        Self::new(format!("translation{v:?}"), true, move |_, _, _| {
            v.map(Jet2::constant)
        })
    }

    /// `amp * f(tau, sigma) e_axis`.
    pub fn mode(
        name: impl Into<String>,
        tangent: bool,
        axis: usize,
        amp: f64,
        f: impl Fn(Jet2, Jet2) -> Jet2 + Send + Sync + 'static,
    ) -> Self {
        Self::new(name, tangent, move |_, t, s| {
            let mut out = ZERO4;
            out[axis] = f(t, s) * amp;
            out
        })
    }

    /// `amp * x / |x|` over the first three components of the anchor.
    pub fn radial(amp: f64) -> Self {
        Self::new(format!("radial({amp})"), false, move |x, _, _| {
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            [x[0] * amp / r, x[1] * amp / r, x[2] * amp / r, Jet2::constant(0.0)]
        })
    }

    /// Smooth bump of height `amp` along `dir`, supported in the parameter
    /// disc of radius `radius` about `center`.
    pub fn bump(dir: Vec4, amp: f64, center: (f64, f64), radius: f64) -> Self {
        Self::new("bump", false, move |_, t, s| {
            let u = (t - center.0) * (1.0 / radius);
            let v = (s - center.1) * (1.0 / radius);
            let r2 = u * u + v * v;
            if r2.v >= 1.0 {
                return ZERO4;
            }
            let b = ((1.0 - r2).powi(-1) * -1.0).exp() * (amp * std::f64::consts::E);
            dir.map(|c| b * c)
        })
    }

    /// Seeded smooth field of the anchor position: a few low-frequency
    /// Fourier terms per component, scaled by `amp`.
    pub fn seeded(seed: u64, dim: usize, amp: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms: Vec<(usize, [f64; 4], f64, f64)> = Vec::new();
        for mu in 0..dim {
            for _ in 0..3 {
                let mut k = [0.0; 4];
                for kk in k.iter_mut().take(dim) {
                    *kk = rng.gen_range(-1.5..1.5);
                }
                terms.push((mu, k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..std::f64::consts::TAU)));
            }
        }
        Self::new(format!("seeded({seed})"), false, move |x, _, _| {
            let mut out = ZERO4;
            for (mu, k, c, ph) in &terms {
                let mut arg = Jet2::constant(*ph);
                for n in 0..dim {
                    arg = arg + x[n] * k[n];
                }
                out[*mu] = out[*mu] + arg.sin() * (c * amp);
            }
            out
        })
    }

    pub fn scaled(&self, a: f64) -> Self {
        let m = self.map.clone();
        Self::new(format!("{a}*{}", self.name), self.tangent, move |x, t, s| {
            m(x, t, s).map(|c| c * a)
        })
    }

    /// `a * xi1 + b * xi2`.
    pub fn combine(a: f64, xi1: &Self, b: f64, xi2: &Self) -> Self {
        let (m1, m2) = (xi1.map.clone(), xi2.map.clone());
        let mut out = Self::new(
            format!("{a}*{}+{b}*{}", xi1.name, xi2.name),
            xi1.tangent && xi2.tangent,
            move |x, t, s| {
                let (u, v) = (m1(x, t, s), m2(x, t, s));
                [0, 1, 2, 3].map(|k| u[k] * a + v[k] * b)
            },
        );
        out.tangent = xi1.tangent && xi2.tangent;
        out
    }

    pub fn eval(&self, anchor: &[Jet2; 4], t: Jet2, s: Jet2) -> [Jet2; 4] {
        (self.map)(anchor, t, s)
    }

    /// Node values of the field along a sheet.
    pub fn values(&self, sheet: &EmbeddingSheet) -> Vec<Vec4> {
        let grid = sheet.grid;
        let anchor = sheet.anchor_source();
        (0..grid.len())
            .map(|k| {
                let (i, j) = grid.ij(k);
                let (t, s) = grid.params(i, j);
                let (t, s) = (Jet2::constant(t), Jet2::constant(s));
                self.eval(&anchor.eval(t, s, k), t, s).map(|c| c.v)
            })
            .collect()
    }
}

/// The sheet `x + eps * xi`, labelled by the same anchor.
pub fn deform(sheet: &EmbeddingSheet, xi: &DeformationField, eps: f64) -> Result<EmbeddingSheet> {
    let anchor = sheet.anchor_source().clone();
    let source = match &sheet.source {
        SheetSource::Analytic(f) => {
            let f = f.clone();
            let a = anchor.clone();
            let m = xi.map.clone();
            SheetSource::Analytic(Arc::new(move |t, s| {
                let x = f(t, s);
                let d = m(&a.eval(t, s, 0), t, s);
                [0, 1, 2, 3].map(|k| x[k] + d[k] * eps)
            }))
        }
        SheetSource::Grid(v) => {
            let d = xi.values(sheet);
            let vals: Vec<Vec4> = v
                .iter()
                .zip(&d)
                .map(|(x, d)| [0, 1, 2, 3].map(|k| x[k] + eps * d[k]))
                .collect();
            if vals.iter().flatten().any(|c| !c.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "deformation `{}` is not finite",
                    xi.name
                )));
            }
            SheetSource::Grid(Arc::new(vals))
        }
    };
    Ok(EmbeddingSheet {
        name: sheet.name.clone(),
        grid: sheet.grid,
        background: sheet.background.clone(),
        source,
        anchor: Some(anchor),
    })
}

impl Deformable for EmbeddingSheet {
    type Tangent = DeformationField;
    fn deformed(&self, xi: &DeformationField, eps: f64) -> Result<Self> {
        deform(self, xi, eps)
    }
}

impl Deformable for Surface {
    type Tangent = DeformationField;
    fn deformed(&self, xi: &DeformationField, eps: f64) -> Result<Self> {
        Ok(Surface {
            name: self.name.clone(),
            charts: self
                .charts
                .iter()
                .map(|c| {
                    Ok(Chart {
                        sheet: deform(&c.sheet, xi, eps)?,
                        weight: c.weight.clone(),
                    })
                })
                .collect::<Result<_>>()?,
        })
    }
}

/// A value with an error bound (max norm over components).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Vec<f64>,
    pub error: f64,
}

impl Estimate {
    pub fn exact(value: Vec<f64>) -> Self {
        Self { value, error: 0.0 }
    }

    pub fn scalar(&self) -> f64 {
        self.value[0]
    }

    pub fn max_abs(&self) -> f64 {
        self.value.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `self - other`, errors added.
    pub fn minus(&self, other: &Estimate) -> Result<Estimate> {
        if self.value.len() != other.value.len() {
            return Err(Error::DimMismatch {
                expected: self.value.len(),
                found: other.value.len(),
            });
        }
        Ok(Estimate {
            value: self.value.iter().zip(&other.value).map(|(a, b)| a - b).collect(),
            error: self.error + other.error,
        })
    }
}

/// Central-difference directional derivative `d/de F[x + e xi]` at `e = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationEngine {
    pub eps: f64,
    /// Combine steps `eps` and `eps / 2`.
    pub richardson: bool,
}

impl Default for VariationEngine {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            richardson: true,
        }
    }
}

impl VariationEngine {
    pub fn new(eps: f64, richardson: bool) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidParameter(format!("variation step {eps}")));
        }
        Ok(Self { eps, richardson })
    }

    fn central<S: Deformable>(
        &self,
        base: &S,
        t: &S::Tangent,
        h: f64,
        f: &impl Fn(&S) -> Result<Estimate>,
    ) -> Result<(Vec<f64>, f64, f64)> {
        let p = f(&base.deformed(t, h)?)?;
        let m = f(&base.deformed(t, -h)?)?;
        if p.value.len() != m.value.len() {
            return Err(Error::DimMismatch {
                expected: p.value.len(),
                found: m.value.len(),
            });
        }
        let d = p
            .value
            .iter()
            .zip(&m.value)
            .map(|(a, b)| (a - b) / (2.0 * h))
            .collect();
        let scale = p.max_abs().max(m.max_abs());
        Ok((d, p.error.max(m.error), scale))
    }

    /// Variation of an estimate-valued functional.
    pub fn vary<S: Deformable>(
        &self,
        base: &S,
        t: &S::Tangent,
        f: impl Fn(&S) -> Result<Estimate>,
    ) -> Result<Estimate> {
        let h = self.eps;
        let (d1, inner, scale) = self.central(base, t, h, &f)?;
        let noise = 4.0 * f64::EPSILON * scale;
        if !self.richardson {
            return Ok(Estimate {
                value: d1,
                error: (noise + inner) / h,
            });
        }
        let (d2, inner2, scale2) = self.central(base, t, 0.5 * h, &f)?;
        let noise = noise.max(4.0 * f64::EPSILON * scale2);
        let mut spread: f64 = 0.0;
        let value = d1
            .iter()
            .zip(&d2)
            .map(|(a, b)| {
                spread = spread.max((a - b).abs());
                (4.0 * b - a) / 3.0
            })
            .collect();
        Ok(Estimate {
            value,
            error: spread + 3.0 * (noise + inner.max(inner2)) / h,
        })
    }

    pub fn vary_values<S: Deformable>(
        &self,
        base: &S,
        t: &S::Tangent,
        f: impl Fn(&S) -> Result<Vec<f64>>,
    ) -> Result<Estimate> {
        self.vary(base, t, |s| Ok(Estimate::exact(f(s)?)))
    }

    pub fn vary_scalar<S: Deformable>(
        &self,
        base: &S,
        t: &S::Tangent,
        f: impl Fn(&S) -> Result<f64>,
    ) -> Result<Estimate> {
        self.vary(base, t, |s| Ok(Estimate::exact(vec![f(s)?])))
    }

    /// `delta_1 delta_2 F - delta_2 delta_1 F` for field-independent tangents.
    pub fn antisymmetrized_second<S: Deformable>(
        &self,
        base: &S,
        t1: &S::Tangent,
        t2: &S::Tangent,
        f: impl Fn(&S) -> Result<Estimate>,
    ) -> Result<Estimate> {
        let a = self.vary(base, t1, |s| self.vary(s, t2, &f))?;
        let b = self.vary(base, t2, |s| self.vary(s, t1, &f))?;
        a.minus(&b)
    }
}

pub(crate) fn flatten<const K: usize>(v: &[[f64; K]]) -> Vec<f64> {
    v.iter().flatten().copied().collect()
}

pub(crate) fn unflatten<const K: usize>(v: &[f64]) -> Vec<[f64; K]> {
    v.chunks_exact(K)
        .map(|c| {
            let mut a = [0.0; K];
            a.copy_from_slice(c);
            a
        })
        .collect()
}

/// `sigma0` times the area (or worldsheet measure).
pub fn dng_action(sheet: &EmbeddingSheet, sigma0: f64) -> Result<f64> {
    Ok(sigma0 * surface_integral(sheet, &vec![1.0; sheet.grid.len()])?)
}

pub fn dng_action_surface(surface: &Surface, sigma0: f64) -> Result<f64> {
    Ok(sigma0 * surface.area()?)
}

/// Mean-curvature vector `K^nu = nabla-bar_mu n^mu nu` per node.
pub fn dng_residual(sheet: &EmbeddingSheet) -> Result<Vec<Vec4>> {
    Ok(SheetGeometry::new(sheet)?.mean_curvature())
}

/// Max norm of a vector field over nodes at least `margin` from open edges.
pub fn interior_norm(grid: &Grid2, field: &[Vec4], margin: usize) -> f64 {
    grid.interior_nodes(margin)
        .into_iter()
        .flat_map(|k| field[k])
        .fold(0.0, |m, v| m.max(v.abs()))
}

/// `d_a x^mu d_b x^nu (nabla_mu xi_nu + nabla_nu xi_mu)` as `[tt, ts, ss]`.
pub fn pullback_lie_derivative(sheet: &EmbeddingSheet, xi: &DeformationField) -> Result<Vec<[f64; 3]>> {
    let geo = SheetGeometry::new(sheet)?;
    let vals = xi.values(sheet);
    let dim = geo.dim;
    Ok((0..geo.len())
        .map(|k| {
            let d = geo.coord_derivative(&vals, &[Variance::Contra], k);
            let n = &geo.nodes[k];
            let gd = |a: usize, b: usize| crate::linalg::quad(dim, &n.g, &n.tangents[a], &d[b]);
            [2.0 * gd(0, 0), gd(0, 1) + gd(1, 0), 2.0 * gd(1, 1)]
        })
        .collect())
}

/// Induced metric components `[tt, ts, ss]` per node.
pub fn induced_components(sheet: &EmbeddingSheet) -> Result<Vec<[f64; 3]>> {
    Ok(sheet
        .induced_metrics()?
        .iter()
        .map(|m| [m.gamma[0][0], m.gamma[0][1], m.gamma[1][1]])
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstVariation {
    /// `-sigma0 int xi . K`
    pub bulk: f64,
    /// `sigma0 int nabla-bar_mu (n^mu_nu xi^nu)` as a boundary flux.
    pub boundary: f64,
    /// Directly varied action.
    pub total: f64,
    pub total_error: f64,
}

/// Splits the first variation of the area action into its bulk and
/// boundary parts.
pub fn first_variation_decomposition(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    sigma0: f64,
    engine: &VariationEngine,
) -> Result<FirstVariation> {
    let geo = SheetGeometry::new(sheet)?;
    let dim = geo.dim;
    let vals = xi.values(sheet);
    let k = geo.mean_curvature();
    let dens = geo.densities();
    let integrand: Vec<f64> = (0..geo.len())
        .map(|n| crate::linalg::quad(dim, &geo.nodes[n].g, &vals[n], &k[n]))
        .collect();
    let bulk = -sigma0 * surface_integral(sheet, &integrand)?;
    let density: Vec<[f64; 2]> = (0..geo.len())
        .map(|n| {
            let v = geo.nodes[n].to_coords(dim, &vals[n]);
            [dens[n] * v[0], dens[n] * v[1]]
        })
        .collect();
    let g = &geo.grid;
    let mut boundary = edge_flux(g, &density, 0, g.tau.n - 1);
    if !g.tau.periodic {
        boundary += row_flux(g, &density, g.tau.n - 1) - row_flux(g, &density, 0);
    }
    let total = engine.vary_scalar(sheet, xi, |s| dng_action(s, sigma0))?;
    Ok(FirstVariation {
        bulk,
        boundary: sigma0 * boundary,
        total: total.scalar(),
        total_error: total.error,
    })
}

/// Variation of the mean-curvature vector along `xi`, flattened per node.
pub fn linearized_residual(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    engine: &VariationEngine,
) -> Result<Estimate> {
    engine.vary_values(sheet, xi, |s| Ok(flatten(&dng_residual(s)?)))
}

/// Interior max norm of the linearized residual and the tangency bound
/// `coeff * h^2 + floor` it is compared against.
pub fn tangency(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    engine: &VariationEngine,
    coeff: f64,
    floor: f64,
) -> Result<(f64, f64)> {
    let r = linearized_residual(sheet, xi, engine)?;
    let field: Vec<Vec4> = unflatten(&r.value);
    let h = sheet.grid.spacing();
    Ok((interior_norm(&sheet.grid, &field, 1), coeff * h * h + floor + r.error))
}

/// Coordinate components `rho_a` from the standard frame rule.
pub fn rho_coords(sheet: &EmbeddingSheet, rule: &FrameRule) -> Result<Vec<[f64; 2]>> {
    Ok(SheetAnalysis::new(sheet, rule)?.rho_coords())
}

pub fn omega_coords(sheet: &EmbeddingSheet, rule: &FrameRule) -> Result<Vec<[f64; 2]>> {
    Ok(SheetAnalysis::new(sheet, rule)?.omega_coords())
}

/// `dens * R` per node.
pub fn curvature_density(sheet: &EmbeddingSheet) -> Result<Vec<f64>> {
    let an = SheetAnalysis::standard(sheet)?;
    let dens = an.geometry.densities();
    Ok(an.curvature_scalar().iter().zip(&dens).map(|(r, d)| r * d).collect())
}

pub fn outer_density(sheet: &EmbeddingSheet) -> Result<Vec<f64>> {
    let an = SheetAnalysis::standard(sheet)?;
    let dens = an.geometry.densities();
    Ok(an.outer_scalar()?.iter().zip(&dens).map(|(r, d)| r * d).collect())
}

/// `eps^ab = dens * E^ab` in coordinates.
pub fn coordinate_surface_element(an: &SheetAnalysis) -> Vec<[[f64; 2]; 2]> {
    let dim = an.geometry.dim;
    (0..an.len())
        .map(|k| {
            let n = &an.geometry.nodes[k];
            let e = &an.connection.surface_element[k];
            let mut out = [[0.0; 2]; 2];
            for a in 0..2 {
                for b in 0..2 {
                    let mut s = 0.0;
                    for mu in 0..dim {
                        for nu in 0..dim {
                            s += n.cotangents[a][mu] * n.cotangents[b][nu] * e[mu][nu];
                        }
                    }
                    out[a][b] = n.metric.dens * s;
                }
            }
            out
        })
        .collect()
}

/// `eps^ab c_b` per node.
pub fn twisted_density(eps: &[[[f64; 2]; 2]], c: &[[f64; 2]]) -> Vec<[f64; 2]> {
    eps.iter()
        .zip(c)
        .map(|(e, c)| [e[0][0] * c[0] + e[0][1] * c[1], e[1][0] * c[0] + e[1][1] * c[1]])
        .collect()
}

/// `d_a V^a` per node for a coordinate vector density.
pub fn coordinate_divergence(grid: &Grid2, v: &[[f64; 2]]) -> Vec<f64> {
    (0..grid.len())
        .map(|k| {
            let (i, j) = grid.ij(k);
            let dt: [f64; 2] = grid.d(v, i, j, 0);
            let ds: [f64; 2] = grid.d(v, i, j, 1);
            dt[0] + ds[1]
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HilbertVariation {
    /// `sigma1 int (R n^mu nu / 2 - R^mu nu) delta g_mu nu`
    pub dynamic_term: f64,
    /// `sigma1 int nabla-bar_mu psi^mu`
    pub divergence_term: f64,
    /// Directly varied `sigma1 int R`.
    pub total: f64,
    pub total_error: f64,
}

/// Splits the variation of `sigma1 int R` into the term that would alter
/// the dynamics and a pure divergence.
pub fn hilbert_variation(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    sigma1: f64,
    engine: &VariationEngine,
) -> Result<HilbertVariation> {
    let an = SheetAnalysis::standard(sheet)?;
    let geo = &an.geometry;
    let dim = geo.dim;
    let vals = xi.values(sheet);
    let low: Vec<Vec4> = (0..geo.len())
        .map(|k| crate::linalg::mat_vec(dim, &geo.nodes[k].g, &vals[k]))
        .collect();
    let mut dynamic = vec![0.0; geo.len()];
    for (k, d) in dynamic.iter_mut().enumerate() {
        let dxi = geo.tangential_derivative(&low, &[Variance::Co], k);
        let c = an.internal(k);
        let n = &geo.nodes[k];
        let nu = n.n_upper(dim);
        let mut ru = [[0.0; 4]; 4];
        for m in 0..dim {
            for q in 0..dim {
                for a in 0..dim {
                    for b in 0..dim {
                        ru[m][q] += n.g_inv[m][a] * c.ricci[a][b] * n.g_inv[b][q];
                    }
                }
            }
        }
        let mut s = 0.0;
        for m in 0..dim {
            for q in 0..dim {
                let dg = dxi[m * 4 + q] + dxi[q * 4 + m];
                s += (0.5 * c.scalar * nu[m][q] - ru[m][q]) * dg;
            }
        }
        *d = s;
    }
    let dynamic_term = sigma1 * surface_integral(sheet, &dynamic)?;
    let rule = FrameRule::standard(dim);
    let drho = engine.vary_values(sheet, xi, |s| Ok(flatten(&rho_coords(s, &rule)?)))?;
    let psi = twisted_density(&coordinate_surface_element(&an), &unflatten::<2>(&drho.value));
    let div = coordinate_divergence(&geo.grid, &psi);
    let g = &geo.grid;
    let divergence_term = sigma1
        * (0..g.len())
            .map(|k| {
                let (i, j) = g.ij(k);
                div[k] * g.weight(i, j)
            })
            .sum::<f64>();
    let total = engine.vary_scalar(sheet, xi, |s| {
        let d = curvature_density(s)?;
        Ok(sigma1 * integrate_plain(&s.grid, &d))
    })?;
    Ok(HilbertVariation {
        dynamic_term,
        divergence_term,
        total: total.scalar(),
        total_error: total.error,
    })
}

/// Trapezoid sum of an already density-weighted node field.
pub fn integrate_plain(grid: &Grid2, f: &[f64]) -> f64 {
    (0..grid.len())
        .map(|k| {
            let (i, j) = grid.ij(k);
            f[k] * grid.weight(i, j)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PalatiniCheck {
    /// `delta(dens R) / dens` per node.
    pub lhs: Vec<f64>,
    /// `(1/dens) d_a(eps^ab delta rho_b)` per node.
    pub rhs: Vec<f64>,
    /// Interior max of `|lhs - rhs|`.
    pub residual: f64,
    pub variation_error: f64,
}

/// Compares the variation of the curvature density with the divergence of
/// the potential built from the comoving variation of `rho`.
pub fn palatini_identity_check(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    engine: &VariationEngine,
    margin: usize,
) -> Result<PalatiniCheck> {
    let an = SheetAnalysis::standard(sheet)?;
    let rule = an.frames.rule.clone();
    let lhs = engine.vary_values(sheet, xi, curvature_density)?;
    let drho = engine.vary_values(sheet, xi, |s| Ok(flatten(&rho_coords(s, &rule)?)))?;
    palatini_from_parts(&an, &lhs.value, &unflatten(&drho.value), margin, lhs.error + drho.error)
}

fn palatini_from_parts(
    an: &SheetAnalysis,
    dr: &[f64],
    drho: &[[f64; 2]],
    margin: usize,
    variation_error: f64,
) -> Result<PalatiniCheck> {
    let geo = &an.geometry;
    let dens = geo.densities();
    let psi = twisted_density(&coordinate_surface_element(an), drho);
    let div = coordinate_divergence(&geo.grid, &psi);
    let lhs: Vec<f64> = dr.iter().zip(&dens).map(|(a, d)| a / d).collect();
    let rhs: Vec<f64> = div.iter().zip(&dens).map(|(a, d)| a / d).collect();
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    Ok(PalatiniCheck {
        residual: crate::geometry::interior_max(&geo.grid, &diff, margin),
        lhs,
        rhs,
        variation_error,
    })
}

/// Pure-gauge case: a constant rotation of the tangent frame. Both sides
/// are finite differences without division by a step.
pub fn palatini_gauge_check(sheet: &EmbeddingSheet, angle: f64, margin: usize) -> Result<PalatiniCheck> {
    let an = SheetAnalysis::standard(sheet)?;
    let theta = vec![angle; an.len()];
    let rot = an.with_frames(an.frames.rotated(an.geometry.dim, &theta))?;
    let dens = an.geometry.densities();
    let r0 = an.curvature_scalar();
    let r1 = rot.curvature_scalar();
    let dr: Vec<f64> = r0.iter().zip(&r1).zip(&dens).map(|((a, b), d)| (b - a) * d).collect();
    let c0 = an.rho_coords();
    let c1 = rot.rho_coords();
    let drho: Vec<[f64; 2]> = c0.iter().zip(&c1).map(|(a, b)| [b[0] - a[0], b[1] - a[1]]).collect();
    palatini_from_parts(&an, &dr, &drho, margin, 0.0)
}

/// Solver parameters for [`relax_minimal`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Stop when the weighted area-gradient max norm falls below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Largest displacement of a steepest-descent trial step, in units of
    /// the grid spacing.
    pub step: f64,
    /// Inner conjugate-gradient iterations per Newton step.
    pub cg_iterations: usize,
    /// Neck radius, relative to the boundary rings, that counts as collapse.
    pub collapse_ratio: f64,
    /// Interior mean-curvature bound a relaxed sheet must meet.
    pub residual_tolerance: f64,
    /// Reject steps that increase the gradient norm.
    pub monotone: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-5,
            max_iterations: 20000,
            step: 0.5,
            cg_iterations: 400,
            collapse_ratio: 0.1,
            residual_tolerance: 5e-2,
            monotone: true,
        }
    }
}

/// Mutable state of the minimal-surface solver.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub grid: Grid2,
    pub positions: Vec<Vec4>,
    pub fixed: Vec<bool>,
    pub step: f64,
    /// Weighted L2 gradient norm after every accepted step.
    pub grad_history: Vec<f64>,
    pub area_history: Vec<f64>,
    pub config: SolverConfig,
    pub iterations: usize,
}

impl SolverState {
    /// Nodes on open edges are fixed.
    pub fn new(sheet: &EmbeddingSheet, config: SolverConfig) -> Result<Self> {
        if sheet.background != crate::background::BackgroundMetric::euclidean(sheet.dim()) {
            return Err(Error::InvalidParameter(
                "minimal-surface relaxation needs a Euclidean background".into(),
            ));
        }
        let grid = sheet.grid;
        let fixed = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.ij(k);
                !grid.is_interior(i, j, 1)
            })
            .collect();
        Ok(Self {
            grid,
            positions: sheet.points(),
            fixed,
            step: config.step,
            grad_history: Vec::new(),
            area_history: Vec::new(),
            config,
            iterations: 0,
        })
    }

    /// Cylinder of radius `radius` between the circles at `z = +-half_gap`.
    pub fn two_circles(n: usize, radius: f64, half_gap: f64, config: SolverConfig) -> Result<Self> {
        use crate::grid::Axis;
        let grid = Grid2::new(
            Axis::open(-half_gap, half_gap, n)?,
            Axis::periodic(0.0, std::f64::consts::TAU, n)?,
        );
        let sheet = EmbeddingSheet::analytic(
            "two-circles",
            grid,
            crate::background::BackgroundMetric::euclidean(3),
            move |z, u| [u.cos() * radius, u.sin() * radius, z, Jet2::constant(0.0)],
        );
        Self::new(&sheet.sampled(), config)
    }

    /// A dome spanning the unit circle in the `z = 0` plane, over a square
    /// grid whose edges are mapped onto the circle.
    pub fn planar_circle(n: usize, dome: f64, config: SolverConfig) -> Result<Self> {
        use crate::grid::Axis;
        let grid = Grid2::new(Axis::open(-1.0, 1.0, n)?, Axis::open(-1.0, 1.0, n)?);
        let values = (0..grid.len())
            .map(|k| {
                let (i, j) = grid.ij(k);
                let (u, v) = grid.params(i, j);
                let x = u * (1.0 - 0.5 * v * v).sqrt();
                let y = v * (1.0 - 0.5 * u * u).sqrt();
                [x, y, dome * (1.0 - x * x - y * y), 0.0]
            })
            .collect();
        let sheet = EmbeddingSheet::from_values(
            "planar-circle",
            grid,
            crate::background::BackgroundMetric::euclidean(3),
            values,
        )?;
        Self::new(&sheet, config)
    }

    pub fn sheet(&self, name: &str) -> Result<EmbeddingSheet> {
        EmbeddingSheet::from_values(
            name,
            self.grid,
            crate::background::BackgroundMetric::euclidean(3),
            self.positions.clone(),
        )
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&k| !self.fixed[k]).collect()
    }

    /// Smallest ring radius divided by the smaller boundary ring radius,
    /// for sheets periodic in sigma.
    pub fn neck_ratio(&self) -> Option<f64> {
        let g = &self.grid;
        if !g.sigma.periodic {
            return None;
        }
        let ring = |i: usize| {
            let n = g.sigma.n as f64;
            let mut c = [0.0; 3];
            for j in 0..g.sigma.n {
                for (m, cm) in c.iter_mut().enumerate() {
                    *cm += self.positions[g.node(i, j)][m] / n;
                }
            }
            (0..g.sigma.n)
                .map(|j| {
                    let x = self.positions[g.node(i, j)];
                    ((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2) + (x[2] - c[2]).powi(2)).sqrt()
                })
                .sum::<f64>()
                / n
        };
        let edge = ring(0).min(ring(g.tau.n - 1));
        let neck = (1..g.tau.n - 1).map(ring).fold(f64::INFINITY, f64::min);
        Some(neck / edge)
    }
}

/// Area of the polyhedral surface through the grid nodes, averaged over
/// both diagonal splits of every cell, with its gradient with respect to
/// every node position. Returns `None` if a triangle is degenerate.
pub fn discrete_area(grid: &Grid2, x: &[Vec4]) -> Option<(f64, Vec<Vec4>)> {
    let mut area = 0.0;
    let mut grad = vec![[0.0; 4]; grid.len()];
    let (nt, ns) = (grid.tau.n, grid.sigma.n);
    let ct = if grid.tau.periodic { nt } else { nt - 1 };
    let cs = if grid.sigma.periodic { ns } else { ns - 1 };
    let sub = |a: &Vec4, b: &Vec4| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let cross = |a: [f64; 3], b: [f64; 3]| {
        [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
    };
    for i in 0..ct {
        for j in 0..cs {
            let c = [
                grid.node(i, j),
                grid.node((i + 1) % nt, j),
                grid.node((i + 1) % nt, (j + 1) % ns),
                grid.node(i, (j + 1) % ns),
            ];
            for tri in [[0, 1, 2], [0, 2, 3], [0, 1, 3], [1, 2, 3]] {
                let (a, b, d) = (c[tri[0]], c[tri[1]], c[tri[2]]);
                let nrm = cross(sub(&x[b], &x[a]), sub(&x[d], &x[a]));
                let len = (nrm[0] * nrm[0] + nrm[1] * nrm[1] + nrm[2] * nrm[2]).sqrt();
                if !(len > 1e-300) {
                    return None;
                }
                area += 0.25 * len;
                let u = [nrm[0] / len, nrm[1] / len, nrm[2] / len];
                for (v, p, q) in [(a, d, b), (b, a, d), (d, b, a)] {
                    let g = cross(u, sub(&x[p], &x[q]));
                    for m in 0..3 {
                        grad[v][m] += 0.25 * g[m];
                    }
                }
            }
        }
    }
    Some((area, grad))
}

/// Unit normals of a Euclidean 3-space grid sheet from its node tangents.
fn node_normals(grid: &Grid2, x: &[Vec4]) -> Vec<Vec4> {
    (0..grid.len())
        .map(|k| {
            let (i, j) = grid.ij(k);
            let t: Vec4 = grid.d(x, i, j, 0);
            let s: Vec4 = grid.d(x, i, j, 1);
            let n = [t[1] * s[2] - t[2] * s[1], t[2] * s[0] - t[0] * s[2], t[0] * s[1] - t[1] * s[0]];
            let l = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
            [n[0] / l, n[1] / l, n[2] / l, 0.0]
        })
        .collect()
}

/// Preconditioned truncated conjugate-gradient solve of `H d = -g`, with
/// Hessian-vector products from central differences of the gradient. Stops
/// at negative curvature; the result is always a descent direction.
fn newton_direction(
    u: &[f64],
    g: &[f64],
    inv_w: &[f64],
    h: f64,
    max_iter: usize,
    grad: &dyn Fn(&[f64]) -> Option<Vec<f64>>,
) -> Option<Vec<f64>> {
    let dotv = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let hess = |v: &[f64]| -> Option<Vec<f64>> {
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let delta = 1e-5 * h / vmax;
        let plus: Vec<f64> = u.iter().zip(v).map(|(a, b)| a + delta * b).collect();
        let minus: Vec<f64> = u.iter().zip(v).map(|(a, b)| a - delta * b).collect();
        let (gp, gm) = (grad(&plus)?, grad(&minus)?);
        Some(gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * delta)).collect())
    };
    let mut d = vec![0.0; g.len()];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut z: Vec<f64> = r.iter().zip(inv_w).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz = dotv(&r, &z);
    let target = rz.sqrt() * rz.sqrt().sqrt().min(0.5);
    for it in 0..max_iter {
        let hp = hess(&p)?;
        let curv = dotv(&p, &hp);
        if curv <= 0.0 {
            return (it > 0).then_some(d);
        }
        let alpha = rz / curv;
        for k in 0..d.len() {
            d[k] += alpha * p[k];
            r[k] -= alpha * hp[k];
            z[k] = r[k] * inv_w[k];
        }
        let rz_new = dotv(&r, &z);
        if rz_new.sqrt() < target {
            break;
        }
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..p.len() {
            p[k] = z[k] + beta * p[k];
        }
    }
    Some(d)
}

fn stall_reason(what: &str, neck: Option<f64>) -> String {
    match neck {
        Some(r) => format!("{what} (neck ratio {r:.3})"),
        None => what.to_string(),
    }
}

/// Truncated Newton descent on the polyhedral area. Every free node moves along the
/// normal of the starting surface, which removes the reparametrization
/// modes. A step is accepted only if the area decreases sufficiently and
/// the gradient norm does not grow.
pub fn relax_minimal(state: &mut SolverState) -> Result<EmbeddingSheet> {
    let grid = state.grid;
    let free = state.free_indices();
    let dirs = node_normals(&grid, &state.positions);
    if dirs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("starting surface has a degenerate node".into()));
    }
    let inv_w: Vec<f64> = free
        .iter()
        .map(|&k| {
            let (i, j) = grid.ij(k);
            1.0 / grid.weight(i, j)
        })
        .collect();
    let base = state.positions.clone();
    let place = |u: &[f64]| -> Vec<Vec4> {
        let mut x = base.clone();
        for (n, &k) in free.iter().enumerate() {
            for m in 0..3 {
                x[k][m] += u[n] * dirs[k][m];
            }
        }
        x
    };
    let evaluate = |u: &[f64]| -> Option<(f64, Vec<f64>, f64, f64)> {
        let (a, grad) = discrete_area(&grid, &place(u))?;
        let g: Vec<f64> = free
            .iter()
            .map(|&k| (0..3).map(|m| grad[k][m] * dirs[k][m]).sum())
            .collect();
        let mut l2 = 0.0;
        let mut mx: f64 = 0.0;
        for (gi, iw) in g.iter().zip(&inv_w) {
            let v = gi * iw;
            l2 += v * v / iw;
            mx = mx.max(v.abs());
        }
        Some((a, g, l2.sqrt(), mx))
    };
    let degenerate = || Error::NonConvergence {
        iterations: 0,
        grad_norm: f64::NAN,
        reason: "degenerate starting surface".into(),
    };
    let mut u = vec![0.0; free.len()];
    let (mut area, mut g, mut gnorm, mut gmax) = evaluate(&u).ok_or_else(degenerate)?;
    let cfg = state.config.clone();
    let h_min = grid.tau.spacing().min(grid.sigma.spacing());
    let dotv = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let grad_only = |u: &[f64]| evaluate(u).map(|e| e.1);
    state.area_history.push(area);
    state.grad_history.push(gnorm);
    while gmax > cfg.tolerance {
        if state.iterations >= cfg.max_iterations {
            return Err(Error::NonConvergence {
                iterations: state.iterations,
                grad_norm: gmax,
                reason: "iteration limit".into(),
            });
        }
        if let Some(r) = state.neck_ratio() {
            if r < cfg.collapse_ratio {
                return Err(Error::NonConvergence {
                    iterations: state.iterations,
                    grad_norm: gmax,
                    reason: format!("neck collapse (ratio {r:.3})"),
                });
            }
        }
        let mut accepted = None;
        for newton in [true, false] {
            let dir: Vec<f64> = if newton {
                match newton_direction(&u, &g, &inv_w, h_min, cfg.cg_iterations, &grad_only) {
                    Some(d) => d,
                    None => continue,
                }
            } else {
                let big = g.iter().zip(&inv_w).fold(0.0f64, |m, (v, p)| m.max((p * v).abs()));
                let c = state.step * h_min / big.max(1e-300);
                g.iter().zip(&inv_w).map(|(v, p)| -c * p * v).collect()
            };
            let slope = dotv(&g, &dir);
            if !(slope < 0.0) {
                continue;
            }
            let mut alpha = 1.0;
            for _ in 0..60 {
                let trial: Vec<f64> = u.iter().zip(&dir).map(|(a, d)| a + alpha * d).collect();
                if let Some((a_new, g_new, gn, gm)) = evaluate(&trial) {
                    if a_new <= area + 1e-4 * alpha * slope && (!cfg.monotone || gn <= gnorm) {
                        accepted = Some((trial, a_new, g_new, gn, gm));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            if accepted.is_some() {
                break;
            }
        }
        let Some((trial, a_new, g_new, gn, gm)) = accepted else {
            return Err(Error::NonConvergence {
                iterations: state.iterations,
                grad_norm: gmax,
                reason: stall_reason("line search failed", state.neck_ratio()),
            });
        };
        let s: Vec<f64> = trial.iter().zip(&u).map(|(a, b)| a - b).collect();
        if s.iter().all(|v| *v == 0.0) {
            return Err(Error::NonConvergence {
                iterations: state.iterations,
                grad_norm: gmax,
                reason: stall_reason("step underflow", state.neck_ratio()),
            });
        }
        u = trial;
        state.positions = place(&u);
        area = a_new;
        g = g_new;
        gnorm = gn;
        gmax = gm;
        state.iterations += 1;
        state.area_history.push(area);
        state.grad_history.push(gnorm);
    }
    let sheet = state.sheet("relaxed")?;
    let k = dng_residual(&sheet)?;
    let res = interior_norm(&sheet.grid, &k, 1);
    if res > cfg.residual_tolerance {
        return Err(Error::NonConvergence {
            iterations: state.iterations,
            grad_norm: gmax,
            reason: format!("relaxed sheet has interior mean curvature {res:e}"),
        });
    }
    Ok(sheet)
}

/// Neck parameter `c` of the catenoid `r = c cosh(z / c)` through circles
/// of the given radius at `z = +-half_gap` (the wider, stable branch).
pub fn catenoid_neck(radius: f64, half_gap: f64) -> Option<f64> {
    let f = |c: f64| c * (half_gap / c).cosh() - radius;
    // f is convex in c with a single minimum; the stable branch lies above it
    let mut lo = half_gap * 1e-3;
    let mut hi = radius;
    let mut cmin = lo;
    let mut fmin = f64::INFINITY;
    for k in 0..=2000 {
        let c = lo + (hi - lo) * k as f64 / 2000.0;
        if f(c) < fmin {
            fmin = f(c);
            cmin = c;
        }
    }
    if fmin > 0.0 || f(radius) < 0.0 {
        return None;
    }
    lo = cmin;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Area of that catenoid.
pub fn catenoid_area(c: f64, half_gap: f64) -> f64 {
    std::f64::consts::PI * c * (2.0 * half_gap + c * (2.0 * half_gap / c).sinh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsheet::{catenoid, plane, rotating_string, static_string, unit_sphere};
    use std::f64::consts::PI;

    #[test]
    fn action_values() {
        let p = plane(16, 0.0, 1.0).unwrap();
        assert!((dng_action(&p, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let c = catenoid(128).unwrap();
        let exact = 2.0 * PI * (1.0 + 0.5 * 2f64.sinh());
        assert!((dng_action(&c, 1.0).unwrap() / exact - 1.0).abs() < 1e-3);
        let s = unit_sphere(128).unwrap();
        assert!((dng_action_surface(&s, 1.0).unwrap() / (4.0 * PI) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn plane_has_no_mean_curvature() {
        let p = plane(12, 0.0, 1.0).unwrap();
        assert!(interior_norm(&p.grid, &dng_residual(&p).unwrap(), 0) < 1e-12);
    }

    fn string_residual(n: usize) -> f64 {
        let s = rotating_string(n).unwrap();
        let k = dng_residual(&s).unwrap();
        s.grid.core_nodes(0.125).into_iter().map(|i| k[i].iter().fold(0.0f64, |m, v| m.max(v.abs()))).fold(0.0, f64::max)
    }

    #[test]
    fn rotating_string_solves_equations() {
        let (a, b) = (string_residual(32), string_residual(64));
        assert!(a.max(b) < 1e-8 || (a / b).log2() > 1.8, "{a} {b}");
    }

    #[test]
    fn deform_composes_and_labels_anchor() {
        let p = plane(8, 0.0, 1.0).unwrap();
        let xi = DeformationField::mode("z", false, 2, 1.0, |t, s| t * s);
        let d = deform(&deform(&p, &xi, 0.5).unwrap(), &xi, 0.5).unwrap();
        let (t, s) = d.grid.params(3, 4);
        assert!((d.point(3, 4)[2] - t * s).abs() < 1e-14);
        let pts = deform(&p.sampled(), &xi, 1.0).unwrap().points();
        assert!((pts[d.grid.node(3, 4)][2] - t * s).abs() < 1e-14);
    }

    #[test]
    fn sphere_area_variation() {
        let s = unit_sphere(64).unwrap();
        let e = VariationEngine::default();
        let v = e
            .vary_scalar(&s, &DeformationField::radial(0.3), |x| dng_action_surface(x, 1.0))
            .unwrap();
        assert!((v.scalar() / (8.0 * PI * 0.3) - 1.0).abs() < 5e-3, "{v:?}");
    }

    #[test]
    fn plane_is_critical() {
        let p = plane(24, 0.0, 1.0).unwrap();
        let xi = DeformationField::bump([0.0, 0.0, 1.0, 0.0], 0.2, (0.5, 0.5), 0.3);
        let e = VariationEngine::default();
        let v = e.vary_scalar(&p, &xi, |x| dng_action(x, 1.0)).unwrap();
        assert!(v.scalar().abs() <= v.error.max(1e-12), "{v:?}");
    }

    #[test]
    fn pulled_back_metric_variation_is_lie_derivative() {
        let mut s = plane(24, 0.2, 0.8).unwrap();
        s.background = crate::background::BackgroundMetric::conformal(3, 0.3, false);
        let xi = DeformationField::seeded(4, 3, 0.2);
        let e = VariationEngine::default();
        let v = e.vary_values(&s, &xi, |x| Ok(flatten(&induced_components(x)?))).unwrap();
        let lie = flatten(&pullback_lie_derivative(&s, &xi).unwrap());
        let err = v.value.iter().zip(&lie).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn variation_is_linear() {
        let s = catenoid(16).unwrap();
        let e = VariationEngine::default();
        let x1 = DeformationField::seeded(1, 3, 0.1);
        let x2 = DeformationField::seeded(2, 3, 0.1);
        let f = |x: &EmbeddingSheet| dng_action(x, 1.0);
        let v1 = e.vary_scalar(&s, &x1, f).unwrap();
        let v2 = e.vary_scalar(&s, &x2, f).unwrap();
        let v = e.vary_scalar(&s, &DeformationField::combine(2.0, &x1, -3.0, &x2), f).unwrap();
        let diff = (v.scalar() - 2.0 * v1.scalar() + 3.0 * v2.scalar()).abs();
        assert!(diff <= 2.0 * (v.error + 2.0 * v1.error + 3.0 * v2.error), "{diff}");
    }

    #[test]
    fn first_variation_on_sphere_chart() {
        let s = unit_sphere(64).unwrap();
        let sheet = &s.charts[0].sheet;
        let radial = DeformationField::new("radial-bump", false, |x, t, s| {
            let u = (t - 1.5) * 2.5;
            let v = (s - 3.0) * 2.5;
            let r2 = u * u + v * v;
            if r2.v >= 1.0 {
                return ZERO4;
            }
            let b = ((1.0 - r2).powi(-1) * -1.0).exp() * 0.1;
            [x[0] * b, x[1] * b, x[2] * b, Jet2::constant(0.0)]
        });
        let e = VariationEngine::default();
        let fv = first_variation_decomposition(sheet, &radial, 1.0, &e).unwrap();
        assert!(fv.boundary.abs() < 1e-12);
        assert!((fv.total - fv.bulk).abs() < 1e-2 * fv.total.abs(), "{fv:?}");
    }

    #[test]
    fn first_variation_boundary_on_catenoid() {
        let c = catenoid(64).unwrap();
        let xi = DeformationField::translation([0.0, 0.0, 1.0, 0.0]);
        let e = VariationEngine::default();
        let fv = first_variation_decomposition(&c, &xi, 1.0, &e).unwrap();
        assert!(fv.bulk.abs() < 1e-2);
        assert!((fv.total - fv.boundary).abs() < 1e-2, "{fv:?}");
    }

    fn wave_residual(n: usize) -> (f64, f64) {
        let s = static_string(n).unwrap();
        let e = VariationEngine::default();
        let xi = DeformationField::mode("wave", true, 2, 0.3, |t, s| (s - t).cos());
        let r = linearized_residual(&s, &xi, &e).unwrap();
        let bump = DeformationField::mode("static", false, 2, 0.3, |_, s| s.cos());
        let b = linearized_residual(&s, &bump, &e).unwrap();
        let g = &s.grid;
        (
            interior_norm(g, &unflatten(&r.value), 1),
            interior_norm(g, &unflatten(&b.value), 1),
        )
    }

    #[test]
    fn linearized_residual_detects_tangents() {
        let (w32, b32) = wave_residual(32);
        let (w64, b64) = wave_residual(64);
        assert!((w32 / w64).log2() > 1.8, "{w32} {w64}");
        assert!(b32 > 0.1 && b64 > 0.1);
        let s = static_string(16).unwrap();
        let t = DeformationField::translation([0.2, 0.1, -0.3, 0.5]);
        let r = linearized_residual(&s, &t, &VariationEngine::default()).unwrap();
        assert!(r.max_abs() < 1e-8);
    }

    #[test]
    fn hilbert_variation_on_sphere_chart() {
        let s = unit_sphere(48).unwrap();
        let sheet = &s.charts[0].sheet;
        let xi = DeformationField::seeded(9, 3, 0.1);
        let h = hilbert_variation(sheet, &xi, 1.0, &VariationEngine::default()).unwrap();
        assert!(h.dynamic_term.abs() < 1e-8, "{h:?}");
        let sum = h.dynamic_term + h.divergence_term;
        assert!((sum - h.total).abs() < 2e-2 * h.total.abs().max(1.0), "{h:?}");
    }

    fn palatini(n: usize) -> f64 {
        let s = unit_sphere(n).unwrap();
        let xi = DeformationField::seeded(3, 3, 0.1);
        let sheet = &s.charts[0].sheet;
        let pc = palatini_identity_check(sheet, &xi, &VariationEngine::default(), 1).unwrap();
        sheet.grid.core_nodes(0.25).into_iter().map(|i| (pc.lhs[i] - pc.rhs[i]).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn palatini_identity_converges() {
        let (a, b) = (palatini(32), palatini(64));
        assert!((a / b).log2() > 1.8, "{a} {b}");
        let p = plane(16, 0.0, 1.0).unwrap();
        let g = palatini_gauge_check(&unit_sphere(32).unwrap().charts[0].sheet, 0.7, 2).unwrap();
        assert!(g.residual < 1e-12, "{}", g.residual);
        let pc = palatini_identity_check(&p, &DeformationField::seeded(3, 3, 0.1), &VariationEngine::default(), 2)
            .unwrap();
        assert!(pc.residual < 1e-3, "{}", pc.residual);
    }

    #[test]
    fn catenoid_neck_solves_boundary_condition() {
        let c = catenoid_neck(1.0, 0.5).unwrap();
        assert!((c * (0.5 / c).cosh() - 1.0).abs() < 1e-12);
        assert!((c - 0.8483).abs() < 1e-3);
        assert!(catenoid_neck(1.0, 0.8).is_none());
    }

    #[test]
    fn relaxation_finds_catenoid() {
        let mut st = SolverState::two_circles(64, 1.0, 0.5, SolverConfig::default()).unwrap();
        let sheet = relax_minimal(&mut st).unwrap();
        let area = dng_action(&sheet, 1.0).unwrap();
        let exact = catenoid_area(catenoid_neck(1.0, 0.5).unwrap(), 0.5);
        assert!((area / exact - 1.0).abs() < 5e-3, "{area} {exact}");
        assert!(st.grad_history.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn area_gradient_matches_differences() {
        let st = SolverState::two_circles(8, 1.0, 0.5, SolverConfig::default()).unwrap();
        let mut x = st.positions.clone();
        for (k, p) in x.iter_mut().enumerate() {
            p[0] += 0.01 * (k as f64).sin();
            p[2] += 0.01 * (1.7 * k as f64).cos();
        }
        let (_, grad) = discrete_area(&st.grid, &x).unwrap();
        let h = 1e-6;
        for k in [0, 9, 20, 37] {
            for m in 0..3 {
                let mut p = x.clone();
                p[k][m] += h;
                let mut q = x.clone();
                q[k][m] -= h;
                let fd = (discrete_area(&st.grid, &p).unwrap().0 - discrete_area(&st.grid, &q).unwrap().0) / (2.0 * h);
                assert!((fd - grad[k][m]).abs() < 1e-7, "{k} {m} {fd} {}", grad[k][m]);
            }
        }
    }

    #[test]
    fn relaxation_flattens_dome() {
        let mut st = SolverState::planar_circle(17, 0.2, SolverConfig::default()).unwrap();
        let sheet = relax_minimal(&mut st).unwrap();
        let zmax = sheet.points().iter().fold(0.0f64, |m, x| m.max(x[2].abs()));
        assert!(zmax < 1e-6, "{zmax}");
    }

    #[test]
    fn goldschmidt_case_is_reported() {
        let mut st = SolverState::two_circles(24, 1.0, 0.8, SolverConfig::default()).unwrap();
        match relax_minimal(&mut st) {
            Err(Error::NonConvergence { reason, .. }) => {
                assert!(reason.contains("neck"), "{reason}");
                assert!(st.neck_ratio().unwrap() < 0.5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nilpotent_second_variation() {
        let s = catenoid(16).unwrap();
        let e = VariationEngine::default();
        let x1 = DeformationField::seeded(11, 3, 0.1);
        let x2 = DeformationField::seeded(12, 3, 0.1);
        let d = e
            .antisymmetrized_second(&s, &x1, &x2, |x| Ok(Estimate::exact(vec![dng_action(x, 1.0)?])))
            .unwrap();
        assert!(d.max_abs() <= 2.0 * d.error, "{d:?}");
    }
}
