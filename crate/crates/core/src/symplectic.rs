//! Symplectic potentials, currents and the two-form on the space of
//! solutions, for the area term and the two topological terms, plus the
//! graded algebra of phase-space forms.
//!
//! Every potential is stored twice: as an ambient vector density and as
//! coordinate components `theta^a`, which is what the conservation and
//! slice integrals use.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    flatten, tangency, unflatten, Deformable, DeformationField, Estimate, VariationEngine,
};
use crate::error::{Error, Result};
use crate::geometry::{FrameRule, Rank3, SheetAnalysis, SheetGeometry};
use crate::linalg::Vec4;
use crate::tolerances::Tolerances;
use crate::worldsheet::{row_flux, CauchySlice, EmbeddingSheet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PotentialKind {
    Dng,
    InnerTop,
    InnerTop2d,
    OuterTop,
    Combined,
}

/// Coupling constants of the area term and the two topological terms.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Couplings {
    pub sigma0: f64,
    pub sigma1: f64,
    pub sigma2: f64,
}

impl Default for Couplings {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            sigma1: 0.0,
            sigma2: 0.0,
        }
    }
}

impl Couplings {
    pub fn new(sigma0: f64, sigma1: f64, sigma2: f64) -> Self {
        Self { sigma0, sigma1, sigma2 }
    }
}

/// A potential `theta^mu` per node, density weight included.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialDensity {
    pub kind: PotentialKind,
    pub vector: Vec<Vec4>,
    /// `theta^a = e^a_mu theta^mu`
    pub coords: Vec<[f64; 2]>,
    /// Error bound carried over from the variations it was built from.
    pub error: f64,
}

impl PotentialDensity {
    fn from_coords(kind: PotentialKind, geo: &SheetGeometry, coords: Vec<[f64; 2]>, error: f64) -> Self {
        let vector = coords
            .iter()
            .zip(&geo.nodes)
            .map(|(c, n)| n.from_coords(geo.dim, c))
            .collect();
        Self { kind, vector, coords, error }
    }

    fn flat(&self) -> Vec<f64> {
        flatten(&self.coords)
    }

    /// Largest component of `theta` orthogonal to the sheet.
    pub fn normal_leak(&self, sheet: &EmbeddingSheet) -> Result<f64> {
        let geo = SheetGeometry::new(sheet)?;
        let dim = geo.dim;
        Ok(self
            .vector
            .iter()
            .zip(&geo.nodes)
            .map(|(v, n)| {
                let t = crate::linalg::mat_vec(dim, &n.n, v);
                (0..dim).fold(0.0f64, |m, mu| m.max((v[mu] - t[mu]).abs()))
            })
            .fold(0.0, f64::max))
    }
}

/// `-sigma0 dens n^mu_a xi^a`.
pub fn theta_dng(sheet: &EmbeddingSheet, xi: &DeformationField, sigma0: f64) -> Result<PotentialDensity> {
    let geo = SheetGeometry::new(sheet)?;
    let dim = geo.dim;
    let vals = xi.values(sheet);
    let coords = geo
        .nodes
        .iter()
        .zip(&vals)
        .map(|(n, v)| {
            let c = n.to_coords(dim, v);
            let w = -sigma0 * n.metric.dens;
            [w * c[0], w * c[1]]
        })
        .collect();
    Ok(PotentialDensity::from_coords(PotentialKind::Dng, &geo, coords, 0.0))
}

fn vary_connection(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    engine: &VariationEngine,
    rule: &FrameRule,
    outer: bool,
) -> Result<(Vec<[f64; 2]>, f64)> {
    let d = engine.vary_values(sheet, xi, |s| {
        let an = SheetAnalysis::new(s, rule)?;
        Ok(flatten(&if outer { an.omega_coords() } else { an.rho_coords() }))
    })?;
    Ok((unflatten(&d.value), d.error))
}

/// `sigma dens E^ab c_b` from coordinate covectors.
fn twisted(an: &SheetAnalysis, sigma: f64, c: &[[f64; 2]]) -> Vec<[f64; 2]> {
    crate::dynamics::twisted_density(&crate::dynamics::coordinate_surface_element(an), c)
        .into_iter()
        .map(|v| [sigma * v[0], sigma * v[1]])
        .collect()
}

/// `sigma1 dens E^mu nu delta rho_nu` with the standard frame rule.
pub fn psi_top_inner_2d(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    sigma1: f64,
    engine: &VariationEngine,
) -> Result<PotentialDensity> {
    psi_top_inner_2d_with(sheet, xi, sigma1, engine, &FrameRule::standard(sheet.dim()))
}

pub fn psi_top_inner_2d_with(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    sigma1: f64,
    engine: &VariationEngine,
    rule: &FrameRule,
) -> Result<PotentialDensity> {
    let an = SheetAnalysis::new(sheet, rule)?;
    let (drho, err) = vary_connection(sheet, xi, engine, rule, false)?;
    let coords = twisted(&an, sigma1, &drho);
    Ok(PotentialDensity::from_coords(
        PotentialKind::InnerTop2d,
        &an.geometry,
        coords,
        sigma1.abs() * err,
    ))
}

/// `sigma1 dens (n^ab drho_a^mu_b - n^a_b n^mu t drho_a^b_t)` with the
/// connection variation `drho_l^m_n = E^m_n e^b_l drho_b / 2`.
pub fn psi_top_inner(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    sigma1: f64,
    engine: &VariationEngine,
) -> Result<PotentialDensity> {
    let rule = FrameRule::standard(sheet.dim());
    let an = SheetAnalysis::new(sheet, &rule)?;
    let geo = &an.geometry;
    let dim = geo.dim;
    let (drho, err) = vary_connection(sheet, xi, engine, &rule, false)?;
    let coords = (0..geo.len())
        .map(|k| {
            let node = &geo.nodes[k];
            let e_up = &an.connection.surface_element[k];
            let mut e_mixed = crate::linalg::ZERO44;
            for m in 0..dim {
                for n in 0..dim {
                    e_mixed[m][n] = (0..dim).map(|a| e_up[m][a] * node.g[a][n]).sum();
                }
            }
            let mut low = [0.0; 4];
            for (l, lv) in low.iter_mut().enumerate().take(dim) {
                *lv = node.cotangents[0][l] * drho[k][0] + node.cotangents[1][l] * drho[k][1];
            }
            let mut t: Rank3 = [0.0; 64];
            for l in 0..dim {
                for m in 0..dim {
                    for n in 0..dim {
                        t[l * 16 + m * 4 + n] = 0.5 * e_mixed[m][n] * low[l];
                    }
                }
            }
            let nu = node.n_upper(dim);
            let mut psi = [0.0; 4];
            for (mu, p) in psi.iter_mut().enumerate().take(dim) {
                let mut s = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        s += nu[a][b] * t[a * 16 + mu * 4 + b];
                        for tt in 0..dim {
                            s -= node.n[a][b] * nu[mu][tt] * t[a * 16 + b * 4 + tt];
                        }
                    }
                }
                *p = sigma1 * node.metric.dens * s;
            }
            node.to_coords(dim, &psi)
        })
        .collect();
    Ok(PotentialDensity::from_coords(
        PotentialKind::InnerTop,
        geo,
        coords,
        sigma1.abs() * err,
    ))
}

/// `sigma2 dens E^mu nu delta omega_nu`; four-dimensional backgrounds only.
pub fn psi_top_outer(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    sigma2: f64,
    engine: &VariationEngine,
) -> Result<PotentialDensity> {
    if sheet.dim() != 4 {
        return Err(Error::DimMismatch {
            expected: 4,
            found: sheet.dim(),
        });
    }
    let rule = FrameRule::standard(4);
    let an = SheetAnalysis::new(sheet, &rule)?;
    let (domega, err) = vary_connection(sheet, xi, engine, &rule, true)?;
    let coords = twisted(&an, sigma2, &domega);
    Ok(PotentialDensity::from_coords(
        PotentialKind::OuterTop,
        &an.geometry,
        coords,
        sigma2.abs() * err,
    ))
}

/// Potential of the given kind. `Combined` adds the area term and both
/// topological terms (the outer one only when `sigma2 != 0`).
pub fn potential(
    kind: PotentialKind,
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    couplings: &Couplings,
    engine: &VariationEngine,
) -> Result<PotentialDensity> {
    match kind {
        PotentialKind::Dng => theta_dng(sheet, xi, couplings.sigma0),
        PotentialKind::InnerTop => psi_top_inner(sheet, xi, couplings.sigma1, engine),
        PotentialKind::InnerTop2d => psi_top_inner_2d(sheet, xi, couplings.sigma1, engine),
        PotentialKind::OuterTop => psi_top_outer(sheet, xi, couplings.sigma2, engine),
        PotentialKind::Combined => {
            let mut out = theta_dng(sheet, xi, couplings.sigma0)?;
            let mut parts = Vec::new();
            if couplings.sigma1 != 0.0 {
                parts.push(psi_top_inner_2d(sheet, xi, couplings.sigma1, engine)?);
            }
            if couplings.sigma2 != 0.0 {
                parts.push(psi_top_outer(sheet, xi, couplings.sigma2, engine)?);
            }
            for p in parts {
                for (a, b) in out.coords.iter_mut().zip(&p.coords) {
                    a[0] += b[0];
                    a[1] += b[1];
                }
                for (a, b) in out.vector.iter_mut().zip(&p.vector) {
                    for mu in 0..4 {
                        a[mu] += b[mu];
                    }
                }
                out.error += p.error;
            }
            out.kind = PotentialKind::Combined;
            Ok(out)
        }
    }
}

/// Antisymmetrized bi-variation of a potential.
#[derive(Clone, Debug, PartialEq)]
pub struct CurrentDensity {
    pub kind: PotentialKind,
    pub pair: (String, String),
    /// `J^a` coordinate density per node.
    pub coords: Vec<[f64; 2]>,
    pub error: f64,
}

impl CurrentDensity {
    pub fn max_abs(&self) -> f64 {
        self.coords.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Ambient components `J^mu = d_a x^mu J^a`.
    pub fn vector(&self, sheet: &EmbeddingSheet) -> Result<Vec<Vec4>> {
        let geo = SheetGeometry::new(sheet)?;
        Ok(self
            .coords
            .iter()
            .zip(&geo.nodes)
            .map(|(c, n)| n.from_coords(geo.dim, c))
            .collect())
    }
}

/// Rejects a deformation that does not solve the linearized equations of
/// motion.
pub fn require_tangent(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    engine: &VariationEngine,
    tol: &Tolerances,
) -> Result<()> {
    let (residual, bound) = tangency(sheet, xi, engine, tol.tangent_coeff, tol.tangent_floor)?;
    if residual > bound {
        return Err(Error::NonTangent {
            name: xi.name.clone(),
            residual,
            tolerance: bound,
        });
    }
    Ok(())
}

/// `J(xi1, xi2) = delta_1 theta(xi2) - delta_2 theta(xi1)` for a tangent pair.
pub fn symplectic_current(
    kind: PotentialKind,
    sheet: &EmbeddingSheet,
    xi1: &DeformationField,
    xi2: &DeformationField,
    couplings: &Couplings,
    engine: &VariationEngine,
) -> Result<CurrentDensity> {
    let tol = Tolerances::default();
    require_tangent(sheet, xi1, engine, &tol)?;
    require_tangent(sheet, xi2, engine, &tol)?;
    symplectic_current_unchecked(kind, sheet, xi1, xi2, couplings, engine)
}

/// Same as [`symplectic_current`] without the tangency test; used for
/// negative controls.
pub fn symplectic_current_unchecked(
    kind: PotentialKind,
    sheet: &EmbeddingSheet,
    xi1: &DeformationField,
    xi2: &DeformationField,
    couplings: &Couplings,
    engine: &VariationEngine,
) -> Result<CurrentDensity> {
    let pair = (xi1.name.clone(), xi2.name.clone());
    let of = |s: &EmbeddingSheet, t: &DeformationField| -> Result<Estimate> {
        let p = potential(kind, s, t, couplings, engine)?;
        Ok(Estimate {
            value: p.flat(),
            error: p.error,
        })
    };
    let a = engine.vary(sheet, xi1, |s| of(s, xi2))?;
    let b = engine.vary(sheet, xi2, |s| of(s, xi1))?;
    let d = a.minus(&b)?;
    Ok(CurrentDensity {
        kind,
        pair,
        coords: unflatten(&d.value),
        error: d.error,
    })
}

/// `(1/dens) d_a J^a` per node.
pub fn current_divergence(current: &CurrentDensity, sheet: &EmbeddingSheet) -> Result<Vec<f64>> {
    let dens = sheet.densities()?;
    let div = crate::dynamics::coordinate_divergence(&sheet.grid, &current.coords);
    Ok(div.iter().zip(&dens).map(|(a, d)| a / d).collect())
}

/// Max of `|nabla-bar_mu J^mu|` over the central `fraction` band of the
/// sheet (nodes at least `fraction` of the parameter range from open edges).
pub fn conservation_check(current: &CurrentDensity, sheet: &EmbeddingSheet, fraction: f64) -> Result<f64> {
    let div = current_divergence(current, sheet)?;
    Ok(sheet
        .grid
        .core_nodes(fraction)
        .into_iter()
        .fold(0.0, |m, k| m.max(div[k].abs())))
}

/// `omega = int_Sigma J^mu dSigma_mu` on a constant-tau slice.
pub fn omega_from_current(current: &CurrentDensity, sheet: &EmbeddingSheet, slice: &CauchySlice) -> f64 {
    row_flux(&sheet.grid, &current.coords, slice.row)
}

pub fn omega_eval(
    sheet: &EmbeddingSheet,
    xi1: &DeformationField,
    xi2: &DeformationField,
    slice: &CauchySlice,
    couplings: &Couplings,
    engine: &VariationEngine,
) -> Result<Estimate> {
    let j = symplectic_current(PotentialKind::Combined, sheet, xi1, xi2, couplings, engine)?;
    Ok(Estimate {
        value: vec![omega_from_current(&j, sheet, slice)],
        error: j.error * (sheet.grid.sigma.hi - sheet.grid.sigma.lo),
    })
}

/// The equations of motion with the given couplings. The topological terms
/// are total divergences, so only the area term contributes.
pub fn eom_residual(sheet: &EmbeddingSheet, couplings: &Couplings) -> Result<Vec<Vec4>> {
    let _ = couplings;
    crate::dynamics::dng_residual(sheet)
}

/// Difference of the inner potential under two frame rules.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameDependence {
    pub max_difference: f64,
    pub max_value: f64,
}

impl FrameDependence {
    pub fn relative(&self) -> f64 {
        self.max_difference / self.max_value.max(f64::MIN_POSITIVE)
    }
}

/// Compares the inner potential built with the standard and alternate
/// frame rules on the central `fraction` band.
pub fn psi_frame_dependence(
    sheet: &EmbeddingSheet,
    xi: &DeformationField,
    engine: &VariationEngine,
    fraction: f64,
) -> Result<FrameDependence> {
    let dim = sheet.dim();
    let a = psi_top_inner_2d_with(sheet, xi, 1.0, engine, &FrameRule::standard(dim))?;
    let b = psi_top_inner_2d_with(sheet, xi, 1.0, engine, &FrameRule::alternate(dim))?;
    let mut out = FrameDependence {
        max_difference: 0.0,
        max_value: 0.0,
    };
    for k in sheet.grid.core_nodes(fraction) {
        for c in 0..2 {
            out.max_difference = out.max_difference.max((a.coords[k][c] - b.coords[k][c]).abs());
            out.max_value = out.max_value.max(a.coords[k][c].abs());
        }
    }
    Ok(out)
}

pub type FormEvaluator<S> =
    Arc<dyn Fn(&S, &[<S as Deformable>::Tangent]) -> Result<Estimate> + Send + Sync>;

/// A `k`-form on a space of configurations (sheets by default), evaluated
/// on field-independent tangents.
pub struct PhaseSpaceForm<S: Deformable = EmbeddingSheet> {
    pub degree: usize,
    evaluator: FormEvaluator<S>,
    /// The evaluator is already alternating; skip antisymmetrization.
    alternating: bool,
    engine: VariationEngine,
}

impl<S: Deformable> Clone for PhaseSpaceForm<S> {
    fn clone(&self) -> Self {
        Self {
            degree: self.degree,
            evaluator: self.evaluator.clone(),
            alternating: self.alternating,
            engine: self.engine,
        }
    }
}

impl<S: Deformable> fmt::Debug for PhaseSpaceForm<S> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhaseSpaceForm")
            .field("degree", &self.degree)
            .field("alternating", &self.alternating)
            .finish()
    }
}

fn permutations(k: usize) -> Vec<(Vec<usize>, f64)> {
    if k == 0 {
        return vec![(Vec::new(), 1.0)];
    }
    let mut out = Vec::new();
    for (p, s) in permutations(k - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, k - 1);
            let flips = p.len() - pos;
            out.push((q, if flips % 2 == 0 { s } else { -s }));
        }
    }
    out
}

impl<S: Deformable> PhaseSpaceForm<S> {
    pub fn new(
        degree: usize,
        engine: VariationEngine,
        evaluator: impl Fn(&S, &[S::Tangent]) -> Result<Estimate> + Send + Sync + 'static,
    ) -> Self {
        Self {
            degree,
            evaluator: Arc::new(evaluator),
            alternating: degree < 2,
            engine,
        }
    }

    /// A functional as a degree-0 form.
    pub fn functional(
        engine: VariationEngine,
        f: impl Fn(&S) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self::new(0, engine, move |s, _| Ok(Estimate::exact(vec![f(s)?])))
    }
}

/// Fully antisymmetrized evaluation `(1/k!) sum_p sgn(p) F(xi_p)`.
pub fn form_eval<S: Deformable>(form: &PhaseSpaceForm<S>, sheet: &S, tangents: &[S::Tangent]) -> Result<Estimate>
where
    S::Tangent: Clone,
{
    if tangents.len() != form.degree {
        return Err(Error::DegreeMismatch {
            expected: form.degree,
            found: tangents.len(),
        });
    }
    if form.alternating {
        return (form.evaluator)(sheet, tangents);
    }
    let perms = permutations(form.degree);
    let norm = perms.len() as f64;
    let mut value: Vec<f64> = Vec::new();
    let mut error = 0.0;
    for (p, sign) in perms {
        let args: Vec<S::Tangent> = p.iter().map(|&i| tangents[i].clone()).collect();
        let e = (form.evaluator)(sheet, &args)?;
        if value.is_empty() {
            value = vec![0.0; e.value.len()];
        }
        for (v, x) in value.iter_mut().zip(&e.value) {
            *v += sign * x / norm;
        }
        error += e.error / norm;
    }
    Ok(Estimate { value, error })
}

/// `(dF)(xi_0..xi_k) = sum_i (-1)^i delta_{xi_i} F(.., xi_i omitted, ..)`.
pub fn form_derivative<S>(form: &PhaseSpaceForm<S>) -> PhaseSpaceForm<S>
where
    S: Deformable + 'static,
    S::Tangent: Clone + 'static,
{
    let inner = form.clone();
    let engine = form.engine;
    PhaseSpaceForm {
        degree: form.degree + 1,
        evaluator: Arc::new(move |sheet: &S, tangents: &[S::Tangent]| {
            let mut value: Vec<f64> = Vec::new();
            let mut error = 0.0;
            for i in 0..tangents.len() {
                let rest: Vec<S::Tangent> = tangents
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, t)| t.clone())
                    .collect();
                let d = engine.vary(sheet, &tangents[i], |s| form_eval(&inner, s, &rest))?;
                if value.is_empty() {
                    value = vec![0.0; d.value.len()];
                }
                let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
                for (v, x) in value.iter_mut().zip(&d.value) {
                    *v += sign * x;
                }
                error += d.error;
            }
            Ok(Estimate { value, error })
        }),
        alternating: true,
        engine,
    }
}

/// The one-form `xi -> int_Sigma theta(xi)` on a fixed slice row.
pub fn theta_slice_form(
    kind: PotentialKind,
    couplings: Couplings,
    row: usize,
    engine: VariationEngine,
) -> PhaseSpaceForm {
    PhaseSpaceForm::new(1, engine, move |s, t| {
        let p = potential(kind, s, &t[0], &couplings, &engine)?;
        Ok(Estimate {
            value: vec![row_flux(&s.grid, &p.coords, row)],
            error: p.error,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsheet::{plane, static_string, unit_sphere};

    fn wave(sign: f64, amp: f64, axis: usize) -> DeformationField {
        DeformationField::mode(format!("wave{sign}{axis}"), true, axis, amp, move |t, s| (s - t * sign).cos())
    }

    #[test]
    fn theta_on_static_string() {
        let s = static_string(16).unwrap();
        let z = theta_dng(&s, &DeformationField::zero(), 1.0).unwrap();
        assert!(z.coords.iter().flatten().all(|v| *v == 0.0));
        let tr = theta_dng(&s, &DeformationField::translation([0.0, 0.0, 0.7, 0.0]), 1.0).unwrap();
        assert!(tr.vector.iter().flatten().all(|v| v.abs() < 1e-14));
        let t = theta_dng(&s, &DeformationField::translation([1.0, 0.0, 0.0, 0.0]), 2.5).unwrap();
        for v in &t.coords {
            assert!((v[0] + 2.5).abs() < 1e-10 && v[1].abs() < 1e-10);
        }
        assert!(t.normal_leak(&s).unwrap() < 1e-14);
    }

    #[test]
    fn inner_potentials_agree() {
        let s = unit_sphere(32).unwrap();
        let sheet = &s.charts[0].sheet;
        let xi = DeformationField::seeded(5, 3, 0.1);
        let e = VariationEngine::default();
        let a = psi_top_inner(sheet, &xi, 1.0, &e).unwrap();
        let b = psi_top_inner_2d(sheet, &xi, 1.0, &e).unwrap();
        let scale = b.coords.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in a.coords.iter().zip(&b.coords) {
            for c in 0..2 {
                assert!((x[c] - y[c]).abs() <= 1e-6 * scale, "{x:?} {y:?}");
            }
        }
    }

    #[test]
    fn outer_potential_needs_four_dimensions() {
        let p = plane(8, 0.0, 1.0).unwrap();
        let xi = DeformationField::seeded(1, 3, 0.1);
        assert!(matches!(
            psi_top_outer(&p, &xi, 1.0, &VariationEngine::default()),
            Err(Error::DimMismatch { .. })
        ));
    }

    #[test]
    fn current_is_antisymmetric_and_rejects_non_tangents() {
        let s = static_string(24).unwrap();
        let e = VariationEngine::default();
        let c = Couplings::default();
        let x1 = wave(1.0, 0.1, 2);
        let x2 = wave(-1.0, 0.1, 3);
        let j = symplectic_current(PotentialKind::Dng, &s, &x1, &x1, &c, &e).unwrap();
        assert_eq!(j.max_abs(), 0.0);
        let a = symplectic_current(PotentialKind::Dng, &s, &x1, &x2, &c, &e).unwrap();
        let b = symplectic_current(PotentialKind::Dng, &s, &x2, &x1, &c, &e).unwrap();
        assert!(a.coords.iter().zip(&b.coords).all(|(p, q)| p[0] == -q[0] && p[1] == -q[1]));
        let bump = DeformationField::mode("bump", false, 2, 0.3, |_, s| s.cos());
        assert!(matches!(
            symplectic_current(PotentialKind::Dng, &s, &x1, &bump, &c, &e),
            Err(Error::NonTangent { .. })
        ));
    }

    fn wave_conservation(n: usize, on_shell: bool) -> f64 {
        let s = static_string(n).unwrap();
        let e = VariationEngine::default();
        let x1 = DeformationField::mode("a", true, 2, 0.2, |t, s| (s - t).cos() + (s + t).sin().scale(0.5));
        let x2 = if on_shell {
            DeformationField::mode("b", true, 2, 0.2, |t, s| (s + t).cos())
        } else {
            DeformationField::mode("b", false, 2, 0.2, |t, s| (s.scale(2.0) - t).cos())
        };
        let j = symplectic_current_unchecked(PotentialKind::Dng, &s, &x1, &x2, &Couplings::default(), &e).unwrap();
        conservation_check(&j, &s, 0.125).unwrap()
    }

    #[test]
    fn current_is_conserved_on_shell() {
        let (a, b) = (wave_conservation(32, true), wave_conservation(64, true));
        assert!(a.max(b) < 1e-9 || (a / b).log2() > 1.8, "{a} {b}");
        let (c, d) = (wave_conservation(32, false), wave_conservation(64, false));
        assert!(d > 0.1 * c && d > 1e-3, "{c} {d}");
    }

    #[test]
    fn omega_is_slice_independent() {
        let s = static_string(48).unwrap();
        let e = VariationEngine::default();
        let x1 = DeformationField::mode("a", true, 2, 0.2, |t, s| (s - t).cos());
        let x2 = DeformationField::mode("b", true, 2, 0.2, |t, s| (s - t).sin());
        let c = Couplings::new(1.0, 0.3, 0.2);
        let w1 = omega_eval(&s, &x1, &x2, &CauchySlice::new(&s, -0.5).unwrap(), &c, &e).unwrap();
        let w2 = omega_eval(&s, &x1, &x2, &CauchySlice::new(&s, 0.5).unwrap(), &c, &e).unwrap();
        assert!(w1.scalar().abs() > 1e-3);
        assert!((w1.scalar() - w2.scalar()).abs() < 1e-3 * w1.scalar().abs(), "{w1:?} {w2:?}");
    }

    #[test]
    fn permutation_signs() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p.iter().map(|x| x.1).sum::<f64>(), 0.0);
        let id = p.iter().find(|x| x.0 == vec![0, 1, 2]).unwrap();
        assert_eq!(id.1, 1.0);
        let swap = p.iter().find(|x| x.0 == vec![1, 0, 2]).unwrap();
        assert_eq!(swap.1, -1.0);
    }

    #[test]
    fn form_derivative_of_functional_is_variation() {
        let s = crate::worldsheet::catenoid(12).unwrap();
        let e = VariationEngine::default();
        let f = PhaseSpaceForm::functional(e, |s| crate::dynamics::dng_action(s, 1.0));
        let xi = DeformationField::seeded(3, 3, 0.1);
        let d = form_eval(&form_derivative(&f), &s, std::slice::from_ref(&xi)).unwrap();
        let v = e.vary_scalar(&s, &xi, |s| crate::dynamics::dng_action(s, 1.0)).unwrap();
        assert_eq!(d.scalar(), v.scalar());
        assert!(matches!(form_eval(&f, &s, &[xi]), Err(Error::DegreeMismatch { .. })));
    }

    #[test]
    fn second_derivative_vanishes() {
        let s = crate::worldsheet::catenoid(12).unwrap();
        let e = VariationEngine::default();
        let f = PhaseSpaceForm::functional(e, |s| crate::dynamics::dng_action(s, 1.0));
        let dd = form_derivative(&form_derivative(&f));
        let r = form_eval(&dd, &s, &[DeformationField::seeded(1, 3, 0.1), DeformationField::seeded(2, 3, 0.1)]).unwrap();
        assert!(r.scalar().abs() <= 2.0 * r.error, "{r:?}");
    }
}
