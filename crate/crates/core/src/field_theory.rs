//! Gauge fields, linearized gravity and scalar fields on small flat
//! lattices: equations of motion, symplectic potentials and currents, and
//! the total-derivative property of the gauge theta term.
//!
//! Spacetime is flat with `eta = diag(-1, 1, 1, 1)`. A lattice has up to
//! four axes; axis `mu` carries coordinate `x^mu`, and fields on a lattice
//! with fewer axes do not depend on the missing coordinates. Derivatives
//! use the second-order stencils of [`crate::grid::Axis`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::Deformable;
use crate::error::{Error, Result};
use crate::grid::{Axis, Linear};
use crate::tolerances::Tolerances;

/// Flat-metric signature factor `eta_{mu mu}`.
pub fn eta(mu: usize) -> f64 {
    if mu == 0 {
        -1.0
    } else {
        1.0
    }
}

/// Nonzero entries of the Levi-Civita symbol, `epsilon^{0123} = 1`.
pub fn levi_civita() -> Vec<([usize; 4], f64)> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let distinct = (0..4).all(|i| (i + 1..4).all(|j| p[i] != p[j]));
                    if !distinct {
                        continue;
                    }
                    let inversions = (0..4)
                        .flat_map(|i| (i + 1..4).map(move |j| (i, j)))
                        .filter(|&(i, j)| p[i] > p[j])
                        .count();
                    out.push((p, if inversions % 2 == 0 { 1.0 } else { -1.0 }));
                }
            }
        }
    }
    out
}

/// A product of one to four axes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub axes: Vec<Axis>,
}

impl Lattice {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() || axes.len() > 4 {
            return Err(Error::InvalidParameter(format!("lattice with {} axes", axes.len())));
        }
        Ok(Self { axes })
    }

    /// Periodic `(x^0, x^1)` lattice on `[0, l0) x [0, l1)`.
    pub fn periodic_2d(n0: usize, l0: f64, n1: usize, l1: f64) -> Result<Self> {
        Self::new(vec![Axis::periodic(0.0, l0, n0)?, Axis::periodic(0.0, l1, n1)?])
    }

    /// Open four-dimensional box `[lo, hi]^4` with `n` nodes per axis.
    pub fn open_box(n: usize, lo: f64, hi: f64) -> Result<Self> {
        let a = Axis::open(lo, hi, n)?;
        Self::new(vec![a; 4])
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    fn shape(&self) -> [usize; 4] {
        let mut s = [1; 4];
        for (k, a) in self.axes.iter().enumerate() {
            s[k] = a.n;
        }
        s
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, c: [usize; 4]) -> usize {
        let s = self.shape();
        ((c[0] * s[1] + c[1]) * s[2] + c[2]) * s[3] + c[3]
    }

    pub fn coords(&self, mut idx: usize) -> [usize; 4] {
        let s = self.shape();
        let mut c = [0; 4];
        for k in (0..4).rev() {
            c[k] = idx % s[k];
            idx /= s[k];
        }
        c
    }

    /// `x^mu` of a node; zero along missing axes.
    pub fn point(&self, idx: usize) -> [f64; 4] {
        let c = self.coords(idx);
        let mut x = [0.0; 4];
        for (k, a) in self.axes.iter().enumerate() {
            x[k] = a.coord(c[k]);
        }
        x
    }

    /// Largest spacing.
    pub fn spacing(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing()).fold(0.0, f64::max)
    }

    pub fn sample<V>(&self, f: impl Fn([f64; 4]) -> V) -> Vec<V> {
        (0..self.len()).map(|k| f(self.point(k))).collect()
    }

    /// `d_mu` of a node field; zero along missing axes.
    pub fn d<V: Linear>(&self, field: &[V], idx: usize, mu: usize) -> V {
        if mu >= self.dims() {
            return V::zero();
        }
        let c = self.coords(idx);
        self.axes[mu].d1(c[mu]).apply(|k| {
            let mut q = c;
            q[mu] = k;
            field[self.index(q)]
        })
    }

    /// Nodes at least `margin` steps from every open edge.
    pub fn interior(&self, margin: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| {
                let c = self.coords(k);
                self.axes
                    .iter()
                    .enumerate()
                    .all(|(m, a)| a.is_interior(c[m], margin))
            })
            .collect()
    }

    /// Nodes whose coordinates lie at least `fraction` of the axis length
    /// away from every open edge.
    pub fn core_nodes(&self, fraction: f64) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| {
                let c = self.coords(k);
                self.axes.iter().enumerate().all(|(m, a)| {
                    let w = fraction * (a.hi - a.lo);
                    let x = a.coord(c[m]);
                    a.periodic || (x >= a.lo + w - 1e-12 && x <= a.hi - w + 1e-12)
                })
            })
            .collect()
    }

    /// Quadrature weight of a node.
    pub fn weight(&self, idx: usize) -> f64 {
        let c = self.coords(idx);
        self.axes.iter().enumerate().map(|(m, a)| a.weight(c[m])).product()
    }
}

/// Max of `|f|` over the given nodes.
pub fn max_over(nodes: &[usize], f: &[f64]) -> f64 {
    nodes.iter().fold(0.0, |m, &k| m.max(f[k].abs()))
}

/// Lie-algebra element in a real basis: `su(2)` uses all three components
/// against `tau_a = -i sigma_a / 2`; `u(1)` uses component 0 only.
pub type Alg = [f64; 3];
pub type C2 = [[Complex64; 2]; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Group {
    U1,
    Su2,
}

impl Group {
    pub fn bracket(&self, x: &Alg, y: &Alg) -> Alg {
        match self {
            Group::U1 => [0.0; 3],
            Group::Su2 => [
                x[1] * y[2] - x[2] * y[1],
                x[2] * y[0] - x[0] * y[2],
                x[0] * y[1] - x[1] * y[0],
            ],
        }
    }

    /// `Tr(X Y)`; the `u(1)` trace is the identity.
    pub fn trace2(&self, x: &Alg, y: &Alg) -> f64 {
        match self {
            Group::U1 => x[0] * y[0],
            Group::Su2 => -0.5 * (x[0] * y[0] + x[1] * y[1] + x[2] * y[2]),
        }
    }

    /// `Tr(X Y Z)`.
    pub fn trace3(&self, x: &Alg, y: &Alg, z: &Alg) -> f64 {
        match self {
            Group::U1 => x[0] * y[0] * z[0],
            Group::Su2 => 0.5 * self.trace2(x, &self.bracket(y, z)),
        }
    }

    /// Matrix of an element in the fundamental representation.
    pub fn matrix(&self, x: &Alg) -> C2 {
        let z = Complex64::new(0.0, 0.0);
        match self {
            Group::U1 => [[Complex64::new(x[0], 0.0), z], [z, z]],
            Group::Su2 => {
                let h = -0.5;
                [
                    [Complex64::new(0.0, h * x[2]), Complex64::new(h * x[1], h * x[0])],
                    [Complex64::new(-h * x[1], h * x[0]), Complex64::new(0.0, -h * x[2])],
                ]
            }
        }
    }

    fn check(&self, x: &Alg) -> bool {
        x.iter().all(|v| v.is_finite()) && (*self == Group::Su2 || (x[1] == 0.0 && x[2] == 0.0))
    }
}

pub fn matrix_mul(a: &C2, b: &C2) -> C2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub fn matrix_trace(a: &C2) -> Complex64 {
    a[0][0] + a[1][1]
}

pub type GaugeField = [Alg; 4];
/// `F_{mu nu}` per node.
pub type FieldStrength = [[Alg; 4]; 4];

/// Gauge connection `A_mu` per node.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeConfig {
    pub lattice: Lattice,
    pub group: Group,
    pub a: Vec<GaugeField>,
}

impl GaugeConfig {
    pub fn new(lattice: Lattice, group: Group, a: Vec<GaugeField>) -> Result<Self> {
        if a.len() != lattice.len() {
            return Err(Error::DimMismatch {
                expected: lattice.len(),
                found: a.len(),
            });
        }
        if let Some(k) = a.iter().position(|f| !f.iter().all(|x| group.check(x))) {
            return Err(Error::InvalidParameter(format!(
                "gauge field at node {k} is not a finite {group:?} element"
            )));
        }
        Ok(Self { lattice, group, a })
    }

    pub fn sample(lattice: Lattice, group: Group, f: impl Fn([f64; 4]) -> GaugeField) -> Result<Self> {
        let a = lattice.sample(f);
        Self::new(lattice, group, a)
    }

    pub fn vacuum(lattice: Lattice, group: Group) -> Self {
        let a = vec![[[0.0; 3]; 4]; lattice.len()];
        Self { lattice, group, a }
    }
}

fn add(a: &Alg, b: &Alg) -> Alg {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn raise(f: &FieldStrength) -> FieldStrength {
    let mut out = *f;
    for (mu, row) in out.iter_mut().enumerate() {
        for (nu, x) in row.iter_mut().enumerate() {
            let s = eta(mu) * eta(nu);
            *x = x.map(|c| s * c);
        }
    }
    out
}

/// `F_{mu nu} = d_mu A_nu - d_nu A_mu + [A_mu, A_nu]`.
pub fn ym_curvature(cfg: &GaugeConfig) -> Vec<FieldStrength> {
    let lat = &cfg.lattice;
    (0..lat.len())
        .map(|k| {
            let d: [GaugeField; 4] = [0, 1, 2, 3].map(|mu| lat.d(&cfg.a, k, mu));
            let a = &cfg.a[k];
            let mut f = [[[0.0; 3]; 4]; 4];
            for mu in 0..4 {
                for nu in mu + 1..4 {
                    let c = cfg.group.bracket(&a[mu], &a[nu]);
                    let v = [0, 1, 2].map(|i| d[mu][nu][i] - d[nu][mu][i] + c[i]);
                    f[mu][nu] = v;
                    f[nu][mu] = v.map(|x| -x);
                }
            }
            f
        })
        .collect()
}

/// `d_mu X^{mu nu} + [A_mu, X^{mu nu}]` for an upper-index field `X`.
fn covariant_divergence(cfg: &GaugeConfig, upper: &[FieldStrength]) -> Vec<GaugeField> {
    let lat = &cfg.lattice;
    (0..lat.len())
        .map(|k| {
            let mut out = [[0.0; 3]; 4];
            for mu in 0..4 {
                let d: FieldStrength = lat.d(upper, k, mu);
                for nu in 0..4 {
                    let c = cfg.group.bracket(&cfg.a[k][mu], &upper[k][mu][nu]);
                    out[nu] = add(&out[nu], &add(&d[mu][nu], &c));
                }
            }
            out
        })
        .collect()
}

/// `d_mu F^{mu nu} + [A_mu, F^{mu nu}]` per node.
pub fn ym_eom_residual(cfg: &GaugeConfig) -> Vec<GaugeField> {
    let up: Vec<FieldStrength> = ym_curvature(cfg).iter().map(raise).collect();
    covariant_divergence(cfg, &up)
}

/// `delta F_{mu nu} = D_mu dA_nu - D_nu dA_mu`.
pub fn linearized_curvature(cfg: &GaugeConfig, da: &[GaugeField]) -> Vec<FieldStrength> {
    let lat = &cfg.lattice;
    let g = cfg.group;
    (0..lat.len())
        .map(|k| {
            let d: [GaugeField; 4] = [0, 1, 2, 3].map(|mu| lat.d(da, k, mu));
            let a = &cfg.a[k];
            let b = &da[k];
            let mut f = [[[0.0; 3]; 4]; 4];
            for mu in 0..4 {
                for nu in mu + 1..4 {
                    let c = add(&g.bracket(&a[mu], &b[nu]), &g.bracket(&b[mu], &a[nu]));
                    let v = [0, 1, 2].map(|i| d[mu][nu][i] - d[nu][mu][i] + c[i]);
                    f[mu][nu] = v;
                    f[nu][mu] = v.map(|x| -x);
                }
            }
            f
        })
        .collect()
}

/// Linearization of the equations of motion around `cfg` along `da`.
pub fn ym_linearized_residual(cfg: &GaugeConfig, da: &[GaugeField]) -> Vec<GaugeField> {
    let up: Vec<FieldStrength> = linearized_curvature(cfg, da).iter().map(raise).collect();
    let mut out = covariant_divergence(cfg, &up);
    if cfg.group == Group::Su2 {
        let f: Vec<FieldStrength> = ym_curvature(cfg).iter().map(raise).collect();
        for (k, o) in out.iter_mut().enumerate() {
            for mu in 0..4 {
                for nu in 0..4 {
                    o[nu] = add(&o[nu], &cfg.group.bracket(&da[k][mu], &f[k][mu][nu]));
                }
            }
        }
    }
    out
}

/// `Psi^mu = -Tr[dA_nu F^{mu nu}]` from lower-index `F`.
pub fn ym_potential(group: Group, da: &[GaugeField], f: &[FieldStrength]) -> Result<Vec<[f64; 4]>> {
    if da.len() != f.len() {
        return Err(Error::DimMismatch {
            expected: f.len(),
            found: da.len(),
        });
    }
    Ok(da
        .iter()
        .zip(f)
        .map(|(d, f)| {
            let up = raise(f);
            let mut psi = [0.0; 4];
            for (mu, p) in psi.iter_mut().enumerate() {
                *p = -(0..4).map(|nu| group.trace2(&d[nu], &up[mu][nu])).sum::<f64>();
            }
            psi
        })
        .collect())
}

/// A conserved-current candidate and its divergence per node.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeCurrent {
    pub j: Vec<[f64; 4]>,
    pub divergence: Vec<f64>,
}

impl LatticeCurrent {
    fn new(lattice: &Lattice, j: Vec<[f64; 4]>) -> Self {
        let divergence = (0..lattice.len())
            .map(|k| (0..4).map(|mu| lattice.d(&j, k, mu)[mu]).sum())
            .collect();
        Self { j, divergence }
    }

    /// Max of `|d_mu J^mu|` over nodes `margin` steps from open edges.
    pub fn residual(&self, lattice: &Lattice, margin: usize) -> f64 {
        max_over(&lattice.interior(margin), &self.divergence)
    }

    pub fn max_abs(&self) -> f64 {
        self.j.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn require_solution(what: &str, residual: f64, lattice: &Lattice, tol: &Tolerances) -> Result<()> {
    let h = lattice.spacing();
    let bound = tol.tangent_coeff * h * h + tol.tangent_floor;
    if residual > bound {
        return Err(Error::NonTangent {
            name: what.to_string(),
            residual,
            tolerance: bound,
        });
    }
    Ok(())
}

fn gauge_max(f: &[GaugeField]) -> f64 {
    f.iter().flatten().flatten().fold(0.0, |m, v| m.max(v.abs()))
}

/// `J^mu = Tr[d1A_nu d2F^{mu nu}] - (1 <-> 2)` for two linearized solutions.
pub fn ym_current(cfg: &GaugeConfig, d1: &[GaugeField], d2: &[GaugeField]) -> Result<LatticeCurrent> {
    let tol = Tolerances::default();
    require_solution("first gauge perturbation", gauge_max(&ym_linearized_residual(cfg, d1)), &cfg.lattice, &tol)?;
    require_solution("second gauge perturbation", gauge_max(&ym_linearized_residual(cfg, d2)), &cfg.lattice, &tol)?;
    Ok(ym_current_unchecked(cfg, d1, d2))
}

pub fn ym_current_unchecked(cfg: &GaugeConfig, d1: &[GaugeField], d2: &[GaugeField]) -> LatticeCurrent {
    let f1: Vec<FieldStrength> = linearized_curvature(cfg, d1).iter().map(raise).collect();
    let f2: Vec<FieldStrength> = linearized_curvature(cfg, d2).iter().map(raise).collect();
    let g = cfg.group;
    let j = (0..cfg.lattice.len())
        .map(|k| {
            let mut out = [0.0; 4];
            for (mu, o) in out.iter_mut().enumerate() {
                for nu in 0..4 {
                    *o += g.trace2(&d1[k][nu], &f2[k][mu][nu]) - g.trace2(&d2[k][nu], &f1[k][mu][nu]);
                }
            }
            out
        })
        .collect();
    LatticeCurrent::new(&cfg.lattice, j)
}

fn require_4d(lattice: &Lattice) -> Result<()> {
    if lattice.dims() != 4 {
        return Err(Error::DimMismatch {
            expected: 4,
            found: lattice.dims(),
        });
    }
    Ok(())
}

/// `epsilon^{mu nu sigma rho} Tr(F_{mu nu} F_{sigma rho})` per node.
pub fn theta_density(cfg: &GaugeConfig) -> Result<Vec<f64>> {
    require_4d(&cfg.lattice)?;
    let eps = levi_civita();
    Ok(ym_curvature(cfg)
        .iter()
        .map(|f| eps.iter().map(|(p, s)| s * cfg.group.trace2(&f[p[0]][p[1]], &f[p[2]][p[3]])).sum())
        .collect())
}

/// `K^mu = 4 epsilon^{mu nu sigma rho} Tr(A_nu d_sigma A_rho + 2/3 A_nu A_sigma A_rho)`.
pub fn chern_simons_current(cfg: &GaugeConfig) -> Result<Vec<[f64; 4]>> {
    require_4d(&cfg.lattice)?;
    let eps = levi_civita();
    let lat = &cfg.lattice;
    let g = cfg.group;
    Ok((0..lat.len())
        .map(|k| {
            let d: [GaugeField; 4] = [0, 1, 2, 3].map(|mu| lat.d(&cfg.a, k, mu));
            let a = &cfg.a[k];
            let mut out = [0.0; 4];
            for (p, s) in &eps {
                let [mu, nu, si, rho] = *p;
                out[mu] += 4.0
                    * s
                    * (g.trace2(&a[nu], &d[si][rho]) + 2.0 / 3.0 * g.trace3(&a[nu], &a[si], &a[rho]));
            }
            out
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThetaTermCheck {
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    /// Max of `|lhs - rhs|` over the core nodes.
    pub residual: f64,
}

/// Compares the theta density with the divergence of the Chern-Simons
/// current on the nodes at least `fraction` of the box away from its faces.
pub fn theta_term_check(cfg: &GaugeConfig, fraction: f64) -> Result<ThetaTermCheck> {
    let lhs = theta_density(cfg)?;
    let k = chern_simons_current(cfg)?;
    let lat = &cfg.lattice;
    let rhs: Vec<f64> = (0..lat.len())
        .map(|n| (0..4).map(|mu| lat.d(&k, n, mu)[mu]).sum())
        .collect();
    let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
    Ok(ThetaTermCheck {
        residual: max_over(&lat.core_nodes(fraction), &diff),
        lhs,
        rhs,
    })
}

/// Change of the equations of motion when `theta eps Tr(F F)` is added to
/// the Lagrangian: `4 theta eps^{mu nu sigma rho} D_mu F_{sigma rho}`.
pub fn theta_eom_shift(cfg: &GaugeConfig, theta: f64) -> Result<Vec<GaugeField>> {
    require_4d(&cfg.lattice)?;
    let eps = levi_civita();
    let f = ym_curvature(cfg);
    let lat = &cfg.lattice;
    let g = cfg.group;
    Ok((0..lat.len())
        .map(|k| {
            let d: [FieldStrength; 4] = [0, 1, 2, 3].map(|mu| lat.d(&f, k, mu));
            let mut out = [[0.0; 3]; 4];
            for (p, s) in &eps {
                let [mu, nu, si, rho] = *p;
                let c = g.bracket(&cfg.a[k][mu], &f[k][si][rho]);
                for i in 0..3 {
                    out[nu][i] += 4.0 * theta * s * (d[mu][si][rho][i] + c[i]);
                }
            }
            out
        })
        .collect())
}

/// Change of the potential from the same term:
/// `4 theta eps^{mu nu sigma rho} Tr(dA_nu F_{sigma rho})`.
pub fn theta_potential_shift(cfg: &GaugeConfig, da: &[GaugeField], theta: f64) -> Result<Vec<[f64; 4]>> {
    require_4d(&cfg.lattice)?;
    let eps = levi_civita();
    let f = ym_curvature(cfg);
    Ok((0..cfg.lattice.len())
        .map(|k| {
            let mut out = [0.0; 4];
            for (p, s) in &eps {
                let [mu, nu, si, rho] = *p;
                out[mu] += 4.0 * theta * s * cfg.group.trace2(&da[k][nu], &f[k][si][rho]);
            }
            out
        })
        .collect())
}

pub type Sym4 = [[f64; 4]; 4];
/// `dGamma[mu][nu][gamma] = delta Gamma_{mu nu}^gamma`.
pub type ChristoffelVariation = [[[f64; 4]; 4]; 4];

/// Perturbation `h_{mu nu}` of the flat metric per node.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricPerturbation {
    pub lattice: Lattice,
    pub h: Vec<Sym4>,
}

impl MetricPerturbation {
    pub fn new(lattice: Lattice, h: Vec<Sym4>) -> Result<Self> {
        if h.len() != lattice.len() {
            return Err(Error::DimMismatch {
                expected: lattice.len(),
                found: h.len(),
            });
        }
        for (k, m) in h.iter().enumerate() {
            for mu in 0..4 {
                for nu in 0..4 {
                    if m[mu][nu] != m[nu][mu] || !m[mu][nu].is_finite() {
                        return Err(Error::InvalidParameter(format!(
                            "perturbation at node {k} is not a finite symmetric tensor"
                        )));
                    }
                }
            }
        }
        Ok(Self { lattice, h })
    }

    pub fn sample(lattice: Lattice, f: impl Fn([f64; 4]) -> Sym4) -> Result<Self> {
        let h = lattice.sample(f);
        Self::new(lattice, h)
    }

    /// `dGamma_{mu nu}^gamma = 1/2 eta^{gamma a} (d_mu h_{a nu} + d_nu h_{a mu} - d_a h_{mu nu})`.
    pub fn christoffel_variation(&self) -> Vec<ChristoffelVariation> {
        let lat = &self.lattice;
        (0..lat.len())
            .map(|k| {
                let d: [Sym4; 4] = [0, 1, 2, 3].map(|mu| lat.d(&self.h, k, mu));
                let mut out = [[[0.0; 4]; 4]; 4];
                for mu in 0..4 {
                    for nu in 0..4 {
                        for ga in 0..4 {
                            out[mu][nu][ga] =
                                0.5 * eta(ga) * (d[mu][ga][nu] + d[nu][ga][mu] - d[ga][mu][nu]);
                        }
                    }
                }
                out
            })
            .collect()
    }
}

/// `dR_{mu nu} = d_gamma dGamma_{mu nu}^gamma - d_nu dGamma_{mu gamma}^gamma`,
/// symmetrized.
pub fn gr_palatini(pert: &MetricPerturbation) -> Vec<Sym4> {
    let lat = &pert.lattice;
    let dg = pert.christoffel_variation();
    let trace: Vec<[f64; 4]> = dg
        .iter()
        .map(|g| [0, 1, 2, 3].map(|mu| (0..4).map(|ga| g[mu][ga][ga]).sum()))
        .collect();
    (0..lat.len())
        .map(|k| {
            let mut r = [[0.0; 4]; 4];
            for ga in 0..4 {
                let d: ChristoffelVariation = lat.d(&dg, k, ga);
                for mu in 0..4 {
                    for nu in 0..4 {
                        r[mu][nu] += d[mu][nu][ga];
                    }
                }
            }
            for nu in 0..4 {
                let d: [f64; 4] = lat.d(&trace, k, nu);
                for mu in 0..4 {
                    r[mu][nu] -= d[mu];
                }
            }
            let mut s = [[0.0; 4]; 4];
            for mu in 0..4 {
                for nu in 0..4 {
                    s[mu][nu] = 0.5 * (r[mu][nu] + r[nu][mu]);
                }
            }
            s
        })
        .collect()
}

/// Trace-reversed linearized vacuum residual `dR_{mu nu} - 1/2 eta_{mu nu} dR`.
pub fn einstein_residual(pert: &MetricPerturbation) -> Vec<Sym4> {
    gr_palatini(pert)
        .into_iter()
        .map(|mut r| {
            let tr: f64 = (0..4).map(|m| eta(m) * r[m][m]).sum();
            for (m, row) in r.iter_mut().enumerate() {
                row[m] -= 0.5 * eta(m) * tr;
            }
            r
        })
        .collect()
}

/// `Psi^gamma = eta^{mu nu} dGamma_{nu mu}^gamma - eta^{mu gamma} dGamma_{mu a}^a`.
pub fn gr_potential(pert: &MetricPerturbation) -> Vec<[f64; 4]> {
    pert.christoffel_variation()
        .iter()
        .map(|g| {
            let mut psi = [0.0; 4];
            for (ga, p) in psi.iter_mut().enumerate() {
                let a: f64 = (0..4).map(|m| eta(m) * g[m][m][ga]).sum();
                let b: f64 = eta(ga) * (0..4).map(|al| g[ga][al][al]).sum::<f64>();
                *p = a - b;
            }
            psi
        })
        .collect()
}

/// `delta(sqrt|g| g^{mu nu}) = -h^{mu nu} + 1/2 eta^{mu nu} delta ln|g|`,
/// with `delta ln|g| = eta^{ab} h_ab`.
fn densitized_inverse_variation(h: &Sym4) -> Sym4 {
    let dlng: f64 = (0..4).map(|m| eta(m) * h[m][m]).sum();
    let mut out = [[0.0; 4]; 4];
    for mu in 0..4 {
        for nu in 0..4 {
            out[mu][nu] = -eta(mu) * eta(nu) * h[mu][nu];
        }
        out[mu][mu] += 0.5 * eta(mu) * dlng;
    }
    out
}

fn gr_half_current(dg: &ChristoffelVariation, dinv: &Sym4) -> [f64; 4] {
    let tr: [f64; 4] = [0, 1, 2, 3].map(|mu| (0..4).map(|nu| dg[mu][nu][nu]).sum());
    let mut j = [0.0; 4];
    for (ga, o) in j.iter_mut().enumerate() {
        for mu in 0..4 {
            for nu in 0..4 {
                *o += dg[nu][mu][ga] * dinv[mu][nu];
            }
            *o -= tr[mu] * dinv[ga][mu];
        }
    }
    j
}

/// `j^gamma` for a pair of linearized vacuum solutions.
pub fn gr_current(p1: &MetricPerturbation, p2: &MetricPerturbation) -> Result<LatticeCurrent> {
    let tol = Tolerances::default();
    for (name, p) in [("first metric perturbation", p1), ("second metric perturbation", p2)] {
        let r = einstein_residual(p)
            .iter()
            .flatten()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        require_solution(name, r, &p.lattice, &tol)?;
    }
    gr_current_unchecked(p1, p2)
}

pub fn gr_current_unchecked(p1: &MetricPerturbation, p2: &MetricPerturbation) -> Result<LatticeCurrent> {
    if p1.lattice != p2.lattice {
        return Err(Error::InvalidParameter("perturbations live on different lattices".into()));
    }
    let g1 = p1.christoffel_variation();
    let g2 = p2.christoffel_variation();
    let j = (0..p1.lattice.len())
        .map(|k| {
            let a = gr_half_current(&g1[k], &densitized_inverse_variation(&p2.h[k]));
            let b = gr_half_current(&g2[k], &densitized_inverse_variation(&p1.h[k]));
            [0, 1, 2, 3].map(|g| a[g] - b[g])
        })
        .collect();
    Ok(LatticeCurrent::new(&p1.lattice, j))
}

/// Scalar self-interaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScalarPotential {
    /// `m^2 phi^2 / 2`
    Free { mass: f64 },
    /// `m^2 phi^2 / 2 + lambda phi^4 / 4`
    Quartic { mass: f64, lambda: f64 },
}

impl ScalarPotential {
    pub fn value(&self, phi: f64) -> f64 {
        match *self {
            ScalarPotential::Free { mass } => 0.5 * mass * mass * phi * phi,
            ScalarPotential::Quartic { mass, lambda } => {
                0.5 * mass * mass * phi * phi + 0.25 * lambda * phi.powi(4)
            }
        }
    }

    pub fn derivative(&self, phi: f64) -> f64 {
        match *self {
            ScalarPotential::Free { mass } => mass * mass * phi,
            ScalarPotential::Quartic { mass, lambda } => mass * mass * phi + lambda * phi.powi(3),
        }
    }

    pub fn second_derivative(&self, phi: f64) -> f64 {
        match *self {
            ScalarPotential::Free { mass } => mass * mass,
            ScalarPotential::Quartic { mass, lambda } => mass * mass + 3.0 * lambda * phi * phi,
        }
    }
}

/// A scalar field sampled on a lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub lattice: Lattice,
    pub phi: Vec<f64>,
}

impl ScalarField {
    pub fn sample(lattice: Lattice, f: impl Fn([f64; 4]) -> f64) -> Self {
        let phi = lattice.sample(f);
        Self { lattice, phi }
    }
}

impl Deformable for ScalarField {
    type Tangent = Vec<f64>;
    fn deformed(&self, dphi: &Vec<f64>, eps: f64) -> Result<Self> {
        if dphi.len() != self.phi.len() {
            return Err(Error::DimMismatch {
                expected: self.phi.len(),
                found: dphi.len(),
            });
        }
        Ok(Self {
            lattice: self.lattice.clone(),
            phi: self.phi.iter().zip(dphi).map(|(a, b)| a + eps * b).collect(),
        })
    }
}

/// Residual evaluators of a scalar theory.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarFixture {
    pub potential: ScalarPotential,
}

pub fn scalar_fixtures(potential: ScalarPotential) -> ScalarFixture {
    ScalarFixture { potential }
}

impl ScalarFixture {
    fn box_op(lat: &Lattice, f: &[f64]) -> Vec<f64> {
        let grads: Vec<[f64; 4]> = (0..lat.len())
            .map(|k| [0, 1, 2, 3].map(|mu| lat.d(f, k, mu)))
            .collect();
        (0..lat.len())
            .map(|k| (0..lat.dims()).map(|mu| eta(mu) * lat.d(&grads, k, mu)[mu]).sum())
            .collect()
    }

    /// `box phi - V'(phi)`.
    pub fn eom_residual(&self, field: &ScalarField) -> Vec<f64> {
        Self::box_op(&field.lattice, &field.phi)
            .into_iter()
            .zip(&field.phi)
            .map(|(b, p)| b - self.potential.derivative(*p))
            .collect()
    }

    /// `box dphi - V''(phi) dphi`.
    pub fn linearized_residual(&self, field: &ScalarField, dphi: &[f64]) -> Vec<f64> {
        Self::box_op(&field.lattice, dphi)
            .into_iter()
            .zip(field.phi.iter().zip(dphi))
            .map(|(b, (p, d))| b - self.potential.second_derivative(*p) * d)
            .collect()
    }

    /// `int (-1/2 eta^{mu nu} d_mu phi d_nu phi - V(phi))`.
    pub fn action(&self, field: &ScalarField) -> f64 {
        let lat = &field.lattice;
        (0..lat.len())
            .map(|k| {
                let kin: f64 = (0..lat.dims())
                    .map(|mu| {
                        let d = lat.d(&field.phi, k, mu);
                        eta(mu) * d * d
                    })
                    .sum();
                (-0.5 * kin - self.potential.value(field.phi[k])) * lat.weight(k)
            })
            .sum()
    }
}

/// `Psi^mu = -eta^{mu nu} d_nu phi dphi`.
pub fn scalar_potential(field: &ScalarField, dphi: &[f64]) -> Vec<[f64; 4]> {
    let lat = &field.lattice;
    (0..lat.len())
        .map(|k| [0, 1, 2, 3].map(|mu| -eta(mu) * lat.d(&field.phi, k, mu) * dphi[k]))
        .collect()
}

/// `j^mu = -eta^{mu nu} (d_nu dphi1 dphi2 - d_nu dphi2 dphi1)`.
pub fn scalar_current(lattice: &Lattice, d1: &[f64], d2: &[f64]) -> LatticeCurrent {
    let j = (0..lattice.len())
        .map(|k| [0, 1, 2, 3].map(|mu| -eta(mu) * (lattice.d(d1, k, mu) * d2[k] - lattice.d(d2, k, mu) * d1[k])))
        .collect();
    LatticeCurrent::new(lattice, j)
}

/// Flux of a current through the slice `x^0 = const` at row `i0` of a
/// two-axis lattice.
pub fn slice_flux(lattice: &Lattice, j: &[[f64; 4]], i0: usize) -> f64 {
    let ax = &lattice.axes[1];
    (0..ax.n).map(|i1| j[lattice.index([i0, i1, 0, 0])][0] * ax.weight(i1)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;
    use proptest::prelude::*;

    fn alg() -> impl Strategy<Value = Alg> {
        prop::array::uniform3(-2.0f64..2.0)
    }

    fn close(a: &Alg, b: &Alg) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    }

    proptest! {
        #[test]
        fn su2_bracket_is_a_lie_bracket(x in alg(), y in alg(), z in alg()) {
            let g = Group::Su2;
            let neg = g.bracket(&y, &x).map(|v| -v);
            prop_assert!(close(&g.bracket(&x, &y), &neg));
            let mut jacobi = g.bracket(&x, &g.bracket(&y, &z));
            for (k, v) in g.bracket(&y, &g.bracket(&z, &x)).iter().zip(g.bracket(&z, &g.bracket(&x, &y))).enumerate() {
                jacobi[k] += v.0 + v.1;
            }
            prop_assert!(close(&jacobi, &[0.0; 3]));
        }

        #[test]
        fn su2_matrices_represent_the_algebra(x in alg(), y in alg()) {
            let g = Group::Su2;
            let (mx, my) = (g.matrix(&x), g.matrix(&y));
            let (xy, yx) = (matrix_mul(&mx, &my), matrix_mul(&my, &mx));
            let mb = g.matrix(&g.bracket(&x, &y));
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!((xy[i][j] - yx[i][j] - mb[i][j]).norm() < 1e-12);
                }
            }
            let tr = matrix_trace(&xy);
            prop_assert!((tr.re - g.trace2(&x, &y)).abs() < 1e-12 && tr.im.abs() < 1e-12);
        }

        #[test]
        fn trace_is_ad_invariant(x in alg(), y in alg(), z in alg()) {
            let g = Group::Su2;
            let lhs = g.trace2(&g.bracket(&z, &x), &y) + g.trace2(&x, &g.bracket(&z, &y));
            prop_assert!(lhs.abs() < 1e-12);
            let cyc = g.trace3(&x, &y, &z) - g.trace3(&y, &z, &x);
            prop_assert!(cyc.abs() < 1e-12);
        }
    }

    fn wave_lattice(n: usize) -> Lattice {
        Lattice::periodic_2d(n, TAU, n, 2.0 * TAU).unwrap()
    }

    fn transverse(lat: &Lattice, amp: f64, k: f64, dir: f64) -> Vec<GaugeField> {
        lat.sample(|x| {
            let mut a = [[0.0; 3]; 4];
            a[2][0] = amp * (k * (x[1] - dir * x[0])).cos();
            a
        })
    }

    #[test]
    fn levi_civita_has_24_signed_entries() {
        let e = levi_civita();
        assert_eq!(e.len(), 24);
        assert_eq!(e.iter().map(|x| x.1).sum::<f64>(), 0.0);
        assert!(e.contains(&([0, 1, 2, 3], 1.0)));
        assert!(e.contains(&([1, 0, 2, 3], -1.0)));
    }

    #[test]
    fn su2_basis_matches_matrices() {
        let g = Group::Su2;
        let x = [0.3, -0.7, 1.1];
        let y = [-0.4, 0.2, 0.5];
        let (mx, my) = (g.matrix(&x), g.matrix(&y));
        let t = matrix_trace(&matrix_mul(&mx, &my));
        assert!((t.re - g.trace2(&x, &y)).abs() < 1e-14 && t.im.abs() < 1e-14);
        let xy = matrix_mul(&mx, &my);
        let yx = matrix_mul(&my, &mx);
        let c = g.matrix(&g.bracket(&x, &y));
        for i in 0..2 {
            for j in 0..2 {
                assert!((xy[i][j] - yx[i][j] - c[i][j]).norm() < 1e-14);
                assert!((mx[i][j] + mx[j][i].conj()).norm() == 0.0);
            }
        }
    }

    #[test]
    fn curvature_examples() {
        let lat = wave_lattice(8);
        let c = GaugeConfig::sample(lat.clone(), Group::U1, |_| [[0.4, 0.0, 0.0]; 4]).unwrap();
        assert!(ym_curvature(&c).iter().flatten().flatten().flatten().all(|v| *v == 0.0));
        let open = Lattice::new(vec![Axis::open(0.0, 1.0, 6).unwrap(), Axis::open(0.0, 1.0, 6).unwrap()]).unwrap();
        let b = 1.7;
        let c = GaugeConfig::sample(open, Group::U1, |x| {
            let mut a = [[0.0; 3]; 4];
            a[1][0] = b * x[0];
            a
        })
        .unwrap();
        for f in ym_curvature(&c) {
            assert!((f[0][1][0] - b).abs() < 1e-12 && (f[1][0][0] + b).abs() < 1e-12);
        }
        let (a0, a1) = ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]);
        let c = GaugeConfig::sample(lat, Group::Su2, |_| [a0, a1, [0.0; 3], [0.0; 3]]).unwrap();
        for f in ym_curvature(&c) {
            assert_eq!(f[0][1], Group::Su2.bracket(&a0, &a1));
        }
        assert!(GaugeConfig::new(wave_lattice(4), Group::U1, vec![[[0.0, 1.0, 0.0]; 4]; 16]).is_err());
    }

    fn wave_eom(n: usize) -> f64 {
        let lat = wave_lattice(n);
        let c = GaugeConfig::new(lat.clone(), Group::U1, transverse(&lat, 0.5, 1.0, 1.0)).unwrap();
        gauge_max(&ym_eom_residual(&c))
    }

    #[test]
    fn plane_wave_solves_maxwell() {
        assert_eq!(gauge_max(&ym_eom_residual(&GaugeConfig::vacuum(wave_lattice(8), Group::Su2))), 0.0);
        let (a, b) = (wave_eom(32), wave_eom(64));
        assert!((a / b).log2() > 1.8, "{a} {b}");
        let lat = wave_lattice(32);
        let c = GaugeConfig::sample(lat, Group::Su2, |x| {
            [[x[0].sin(), 0.2, 0.0], [0.0, x[1].cos(), 0.3], [0.1, 0.0, 0.0], [0.0; 3]]
        })
        .unwrap();
        assert!(gauge_max(&ym_eom_residual(&c)) > 0.1);
    }

    #[test]
    fn potential_examples() {
        let lat = wave_lattice(4);
        let n = lat.len();
        let (c, f) = (0.3, 1.9);
        let mut da = vec![[[0.0; 3]; 4]; n];
        let mut fs = vec![[[[0.0; 3]; 4]; 4]; n];
        for k in 0..n {
            da[k][1][0] = c;
            fs[k][0][1][0] = f;
            fs[k][1][0][0] = -f;
        }
        let psi = ym_potential(Group::U1, &da, &fs).unwrap();
        assert!((psi[0][0] - c * f).abs() < 1e-15 && psi[0][1] == 0.0);
        let zero = ym_potential(Group::U1, &vec![[[0.0; 3]; 4]; n], &fs).unwrap();
        assert!(zero.iter().flatten().all(|v| *v == 0.0));
        let g = Group::Su2;
        let dir = [0.2, -0.5, 0.4];
        for k in 0..n {
            da[k][1] = dir.map(|v| 2.0 * v);
            fs[k][0][1] = dir;
            fs[k][1][0] = dir.map(|v| -v);
        }
        let psi = ym_potential(g, &da, &fs).unwrap();
        let tr = matrix_trace(&matrix_mul(&g.matrix(&da[0][1]), &g.matrix(&dir))).re;
        assert!((psi[0][0] - tr).abs() < 1e-14, "{} {tr}", psi[0][0]);
    }

    fn maxwell_current(n: usize, on_shell: bool) -> (f64, f64) {
        let lat = wave_lattice(n);
        let c = GaugeConfig::vacuum(lat.clone(), Group::U1);
        let d1 = transverse(&lat, 0.3, 1.0, 1.0);
        let d2 = if on_shell {
            transverse(&lat, 0.2, 2.0, -1.0)
        } else {
            lat.sample(|x| {
                let mut a = [[0.0; 3]; 4];
                a[2][0] = 0.2 * (x[1] - 2.0 * x[0]).cos();
                a
            })
        };
        let j = ym_current_unchecked(&c, &d1, &d2);
        (j.residual(&lat, 0), j.max_abs())
    }

    #[test]
    fn maxwell_current_is_conserved() {
        let (a, ja) = maxwell_current(32, true);
        let (b, _) = maxwell_current(64, true);
        assert!(ja > 1e-2);
        assert!((a / b).log2() > 1.8, "{a} {b}");
        let (c, _) = maxwell_current(32, false);
        let (d, _) = maxwell_current(64, false);
        assert!(d > 0.5 * c && d > 1e-2, "{c} {d}");
        let lat = wave_lattice(16);
        let cfg = GaugeConfig::vacuum(lat.clone(), Group::U1);
        let d1 = transverse(&lat, 0.3, 1.0, 1.0);
        assert_eq!(ym_current(&cfg, &d1, &d1).unwrap().max_abs(), 0.0);
        let off = lat.sample(|x| {
            let mut a = [[0.0; 3]; 4];
            a[2][0] = (x[1] - 2.0 * x[0]).cos();
            a
        });
        assert!(matches!(ym_current(&cfg, &d1, &off), Err(Error::NonTangent { .. })));
    }

    fn u1_box(n: usize) -> GaugeConfig {
        GaugeConfig::sample(Lattice::open_box(n, -1.0, 1.0).unwrap(), Group::U1, |x| {
            [
                [0.3 * (x[1] + x[3]).sin(), 0.0, 0.0],
                [(x[0] + 0.5 * x[2]).sin(), 0.0, 0.0],
                [0.5 * (x[1] * x[3]).cos(), 0.0, 0.0],
                [(x[0] - x[2]).cos(), 0.0, 0.0],
            ]
        })
        .unwrap()
    }

    #[test]
    fn theta_density_is_total_derivative() {
        let zero = GaugeConfig::vacuum(Lattice::open_box(6, -1.0, 1.0).unwrap(), Group::Su2);
        let t = theta_term_check(&zero, 0.25).unwrap();
        assert!(t.lhs.iter().chain(&t.rhs).all(|v| *v == 0.0));
        let (a, b) = (theta_term_check(&u1_box(8), 0.25).unwrap(), theta_term_check(&u1_box(16), 0.25).unwrap());
        assert!(max_over(&u1_box(8).lattice.interior(2), &a.lhs) > 0.1);
        assert!((a.residual / b.residual).log2() > 1.8, "{} {}", a.residual, b.residual);
        assert!(theta_term_check(&GaugeConfig::vacuum(wave_lattice(4), Group::U1), 0.25).is_err());
    }

    fn su2_box(n: usize) -> GaugeConfig {
        GaugeConfig::sample(Lattice::open_box(n, -1.0, 1.0).unwrap(), Group::Su2, |x| {
            [
                [0.5 * x[1], 0.3 * x[2] * x[3], 0.2],
                [0.4 * x[2] * x[2], 0.1 + 0.5 * x[0], -0.3 * x[3]],
                [0.2 * x[3], -0.4 * x[0] * x[1], 0.6 * x[1]],
                [0.3 * x[0] * x[2], 0.2 * x[1], 0.5 * x[2] - 0.1],
            ]
        })
        .unwrap()
    }

    #[test]
    fn su2_theta_density_is_total_derivative() {
        let (a, b) = (theta_term_check(&su2_box(8), 0.25).unwrap(), theta_term_check(&su2_box(16), 0.25).unwrap());
        assert!(max_over(&su2_box(8).lattice.interior(2), &a.lhs) > 1e-2);
        assert!(b.residual < 1e-10 || (a.residual / b.residual).log2() > 1.8, "{} {}", a.residual, b.residual);
    }

    #[test]
    fn theta_shifts_potential_but_not_equations() {
        let shifts = |n: usize| {
            let c = su2_box(n);
            let da = c.lattice.sample(|x| [[0.1, x[0], 0.0], [0.0, 0.2, x[3]], [x[1], 0.0, 0.3], [0.0, 0.1 * x[2], 0.0]]);
            let inner = c.lattice.core_nodes(0.25);
            let e: Vec<f64> = theta_eom_shift(&c, 0.7).unwrap().iter().map(|v| gauge_max(&[*v])).collect();
            let p: Vec<f64> = theta_potential_shift(&c, &da, 0.7)
                .unwrap()
                .iter()
                .map(|v| v.iter().fold(0.0f64, |m, x| m.max(x.abs())))
                .collect();
            (max_over(&inner, &e), max_over(&inner, &p))
        };
        let (e8, p8) = shifts(8);
        let (e16, p16) = shifts(16);
        assert!(p16 > 10.0 * e16 && p8 > 0.1, "{e8} {p8} {e16} {p16}");
        assert!(e16 < 1e-10 || (e8 / e16).log2() > 1.8, "{e8} {e16}");
    }

    #[test]
    fn conformal_palatini_matches_christoffel_differences() {
        let lat = Lattice::new(vec![Axis::open(0.0, 1.0, 24).unwrap(), Axis::open(0.0, 1.0, 24).unwrap()]).unwrap();
        let phi = |x: [f64; 4]| 0.3 * (2.0 * x[0] + x[1]).sin();
        let p = MetricPerturbation::sample(lat.clone(), |x| {
            let f = phi(x);
            let mut h = [[0.0; 4]; 4];
            for (m, row) in h.iter_mut().enumerate() {
                row[m] = eta(m) * f;
            }
            h
        })
        .unwrap();
        let dr = gr_palatini(&p);
        // full Ricci tensor of eta + eps h by nested differences
        let ricci = |eps: f64| -> Vec<Sym4> {
            let g: Vec<Sym4> = (0..lat.len())
                .map(|k| {
                    let mut g = [[0.0; 4]; 4];
                    for m in 0..4 {
                        g[m][m] = eta(m) * (1.0 + eps * phi(lat.point(k)));
                    }
                    g
                })
                .collect();
            let gam: Vec<ChristoffelVariation> = (0..lat.len())
                .map(|k| {
                    let d: [Sym4; 4] = [0, 1, 2, 3].map(|m| lat.d(&g, k, m));
                    let mut c = [[[0.0; 4]; 4]; 4];
                    for m in 0..4 {
                        for n in 0..4 {
                            for a in 0..4 {
                                c[m][n][a] = 0.5 / g[k][a][a] * (d[m][a][n] + d[n][a][m] - d[a][m][n]);
                            }
                        }
                    }
                    c
                })
                .collect();
            (0..lat.len())
                .map(|k| {
                    let c = &gam[k];
                    let mut r = [[0.0; 4]; 4];
                    for m in 0..4 {
                        for n in 0..4 {
                            for a in 0..4 {
                                r[m][n] += lat.d(&gam, k, a)[m][n][a] - lat.d(&gam, k, n)[m][a][a];
                                for b in 0..4 {
                                    r[m][n] += c[m][n][a] * c[a][b][b] - c[m][b][a] * c[n][a][b];
                                }
                            }
                        }
                    }
                    r
                })
                .collect()
        };
        let eps = 1e-4;
        let (rp, rm) = (ricci(eps), ricci(-eps));
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in lat.interior(3) {
            for m in 0..4 {
                for n in 0..4 {
                    let fd = (rp[k][m][n] - rm[k][m][n]) / (2.0 * eps);
                    err = err.max((fd - dr[k][m][n]).abs());
                    scale = scale.max(fd.abs());
                }
            }
        }
        assert!(scale > 0.1 && err < 1e-6 * scale, "{err} {scale}");
    }

    fn tt(lat: &Lattice, amp: f64, k: f64, dir: f64, plus: bool) -> MetricPerturbation {
        MetricPerturbation::sample(lat.clone(), |x| {
            let w = amp * (k * (x[1] - dir * x[0])).cos();
            let mut h = [[0.0; 4]; 4];
            if plus {
                h[2][2] = w;
                h[3][3] = -w;
            } else {
                h[2][3] = w;
                h[3][2] = w;
            }
            h
        })
        .unwrap()
    }

    fn sym_max(v: &[Sym4]) -> f64 {
        v.iter().flatten().flatten().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn gravity_examples() {
        let lat = wave_lattice(16);
        let c = MetricPerturbation::sample(lat.clone(), |_| [[0.1, 0.2, 0.0, 0.0], [0.2, 0.0, 0.0, 0.0], [0.0; 4], [0.0; 4]]).unwrap();
        assert_eq!(sym_max(&gr_palatini(&c)), 0.0);
        let r = |n: usize| sym_max(&gr_palatini(&tt(&wave_lattice(n), 0.4, 1.0, 1.0, false)));
        let (a, b) = (r(32), r(64));
        assert!((a / b).log2() > 1.8, "{a} {b}");
        let p = tt(&lat, 0.4, 1.0, 1.0, false);
        assert_eq!(gr_current(&p, &p).unwrap().max_abs(), 0.0);
        let fine = wave_lattice(64);
        let p = tt(&fine, 0.4, 1.0, 1.0, false);
        let bad = MetricPerturbation::sample(fine, |x| {
            let mut h = [[0.0; 4]; 4];
            h[0][0] = x[1].sin();
            h
        })
        .unwrap();
        assert!(matches!(gr_current(&p, &bad), Err(Error::NonTangent { .. })));
        assert!(MetricPerturbation::new(lat.clone(), vec![[[0.0, 1.0, 0.0, 0.0], [0.0; 4], [0.0; 4], [0.0; 4]]; lat.len()]).is_err());
    }

    fn gr_conservation(n: usize) -> (f64, f64) {
        let lat = wave_lattice(n);
        let p1 = tt(&lat, 0.3, 1.0, 1.0, true);
        let p2 = tt(&lat, 0.2, 2.0, -1.0, true);
        let j = gr_current_unchecked(&p1, &p2).unwrap();
        (j.residual(&lat, 0), j.max_abs())
    }

    #[test]
    fn gravity_current_is_conserved() {
        let (a, ja) = gr_conservation(32);
        let (b, _) = gr_conservation(64);
        assert!(ja > 1e-2, "{ja}");
        assert!((a / b).log2() > 1.8, "{a} {b}");
    }

    #[test]
    fn scalar_fixture_residuals() {
        let lat = Lattice::periodic_2d(32, TAU, 32, TAU).unwrap();
        let fx = scalar_fixtures(ScalarPotential::Free { mass: 4.0 });
        let zero = ScalarField::sample(lat.clone(), |_| 0.0);
        assert!(fx.eom_residual(&zero).iter().all(|v| *v == 0.0));
        let res = |n: usize| {
            let lat = Lattice::periodic_2d(n, TAU, n, TAU).unwrap();
            let f = ScalarField::sample(lat, |x| 0.2 * (3.0 * x[1] - 5.0 * x[0]).cos());
            fx.eom_residual(&f).iter().fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let (a, b) = (res(64), res(128));
        assert!((a / b).log2() > 1.8, "{a} {b}");
        let q = scalar_fixtures(ScalarPotential::Quartic { mass: 4.0, lambda: 0.5 });
        let dphi = lat.sample(|x| (3.0 * x[1] - 5.0 * x[0]).sin());
        let lin = q.linearized_residual(&zero, &dphi);
        let free = fx.linearized_residual(&zero, &dphi);
        assert_eq!(lin, free);
        let e = crate::dynamics::VariationEngine::default();
        let f = ScalarField::sample(lat.clone(), |x| 0.3 * x[0].sin() * x[1].cos());
        let v = e.vary_scalar(&f, &dphi, |s| Ok(q.action(s))).unwrap();
        let eom = q.eom_residual(&f);
        let pairing: f64 = (0..lat.len()).map(|k| eom[k] * dphi[k] * lat.weight(k)).sum();
        assert!((v.scalar() - pairing).abs() < 1e-6 * pairing.abs().max(1.0), "{} {pairing}", v.scalar());
    }

    #[test]
    fn scalar_forms_on_field_space() {
        use crate::symplectic::{form_derivative, form_eval, PhaseSpaceForm};
        let lat = Lattice::periodic_2d(48, TAU, 48, TAU).unwrap();
        let e = crate::dynamics::VariationEngine::default();
        let row = 7;
        let l2 = lat.clone();
        let theta: PhaseSpaceForm<ScalarField> = PhaseSpaceForm::new(1, e, move |f: &ScalarField, t: &[Vec<f64>]| {
            Ok(crate::dynamics::Estimate::exact(vec![slice_flux(&l2, &scalar_potential(f, &t[0]), row)]))
        });
        let omega = form_derivative(&theta);
        let base = ScalarField::sample(lat.clone(), |x| 0.2 * x[1].cos());
        let d1 = lat.sample(|x| (3.0 * x[1] - 5.0 * x[0]).cos());
        let d2 = lat.sample(|x| 0.5 * (x[1] + 2.0 * x[0]).sin());
        let d3 = lat.sample(|x| (2.0 * x[1]).cos() * x[0].sin());
        let w = form_eval(&omega, &base, &[d1.clone(), d2.clone()]).unwrap();
        let flux = slice_flux(&lat, &scalar_current(&lat, &d1, &d2).j, row);
        assert!((w.scalar() - flux).abs() < 1e-6 * flux.abs().max(1.0), "{} {flux}", w.scalar());
        let dd = form_eval(&form_derivative(&omega), &base, &[d1, d2, d3]).unwrap();
        assert!(dd.scalar().abs() < 1e-6, "{}", dd.scalar());
    }

    #[test]
    fn scalar_current_is_conserved() {
        let res = |n: usize| {
            let lat = Lattice::periodic_2d(n, TAU, n, TAU).unwrap();
            let d1 = lat.sample(|x| (3.0 * x[1] - 5.0 * x[0]).cos());
            let d2 = lat.sample(|x| (3.0 * x[1] + 5.0 * x[0]).sin());
            scalar_current(&lat, &d1, &d2).residual(&lat, 0)
        };
        let (a, b) = (res(64), res(128));
        assert!(b < 1e-10 || (a / b).log2() > 1.8, "{a} {b}");
        let lat = Lattice::periodic_2d(64, TAU, 64, TAU).unwrap();
        let d1 = lat.sample(|x| (3.0 * x[1] - 5.0 * x[0]).cos());
        let off = lat.sample(|x| (3.0 * x[1] - 2.0 * x[0]).sin());
        assert!(scalar_current(&lat, &d1, &off).residual(&lat, 0) > 1.0);
    }
}
