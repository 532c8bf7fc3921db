//! Extrinsic and intrinsic geometry of an embedded sheet: tangential and
//! orthogonal projectors, adapted frames, the internal and outer rotation
//! connections, their curvatures, and the pure-divergence forms of the
//! curvature scalars.
//!
//! Per-node data is kept in flat arrays. Mixed rank-3 connection fields use
//! the layout `c[l * 16 + m * 4 + n]` for `c_l^m_n`; rank-4 tensors use
//! `t[k * 64 + l * 16 + m * 4 + n]` and are only formed one node at a time.

use serde::{Deserialize, Serialize};

use crate::background::{BackgroundMetric, Christoffel};
use crate::error::{Error, Result};
use crate::grid::{Grid2, Linear};
use crate::linalg::{self, Mat4, Vec4};
use crate::tensor::{permutation_sign, MetricValue, Variance};
use crate::worldsheet::{induced_metric, EmbeddingJet, EmbeddingSheet, InducedMetric};

pub type Rank3 = [f64; 64];
pub type Rank4 = [f64; 256];

#[inline]
fn i3(l: usize, m: usize, n: usize) -> usize {
    l * 16 + m * 4 + n
}

#[inline]
fn i4(k: usize, l: usize, m: usize, n: usize) -> usize {
    k * 64 + l * 16 + m * 4 + n
}

/// Tangential projector `n^mu_nu` and its complement `perp^mu_nu`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProjectorPair {
    pub n: Mat4,
    pub perp: Mat4,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectorResiduals {
    /// `|n + perp - 1|`
    pub completeness: f64,
    /// `|n perp|`
    pub orthogonality: f64,
    /// `|n n - n|`
    pub idempotence: f64,
    /// Number of unit eigenvalues of `n`.
    pub rank: usize,
}

impl ProjectorPair {
    pub fn residuals(&self, dim: usize) -> ProjectorResiduals {
        let id = linalg::identity(dim);
        let np = linalg::mat_mul(dim, &self.n, &self.perp);
        let nn = linalg::mat_mul(dim, &self.n, &self.n);
        let mut completeness: f64 = 0.0;
        let mut orthogonality: f64 = 0.0;
        let mut idempotence: f64 = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                completeness = completeness.max((self.n[a][b] + self.perp[a][b] - id[a][b]).abs());
                orthogonality = orthogonality.max(np[a][b].abs());
                idempotence = idempotence.max((nn[a][b] - self.n[a][b]).abs());
            }
        }
        // n is similar to a symmetric matrix; count eigenvalues near 1 via
        // the trace of the idempotent.
        let trace: f64 = (0..dim).map(|a| self.n[a][a]).sum();
        ProjectorResiduals {
            completeness,
            orthogonality,
            idempotence,
            rank: trace.round() as usize,
        }
    }
}

/// `n^mu_nu = gamma^ab d_a x^mu d_b x^rho g_rho nu`, `perp = 1 - n`.
pub fn fundamental_tensors(jet: &EmbeddingJet, g: &MetricValue) -> Result<ProjectorPair> {
    let dim = g.dim();
    let gm = g.lower_mat();
    let m = induced_metric(jet, &gm, dim, (0, 0))?;
    let n = mixed_projector(jet, &m, &gm, dim);
    let mut perp = linalg::identity(dim);
    for a in 0..dim {
        for b in 0..dim {
            perp[a][b] -= n[a][b];
        }
    }
    Ok(ProjectorPair { n, perp })
}

fn mixed_projector(jet: &EmbeddingJet, m: &InducedMetric, g: &Mat4, dim: usize) -> Mat4 {
    let mut low = [[0.0; 4]; 2];
    for a in 0..2 {
        low[a] = linalg::mat_vec(dim, g, &jet.d[a]);
    }
    let mut n = linalg::ZERO44;
    for mu in 0..dim {
        for nu in 0..dim {
            let mut s = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    s += m.gamma_inv[a][b] * jet.d[a][mu] * low[b][nu];
                }
            }
            n[mu][nu] = s;
        }
    }
    n
}

/// Geometric data at one node.
#[derive(Clone, Copy, Debug)]
pub struct NodeGeometry {
    pub x: Vec4,
    /// `d_a x^mu`
    pub tangents: [Vec4; 2],
    pub metric: InducedMetric,
    pub g: Mat4,
    pub g_inv: Mat4,
    /// `n^mu_nu`
    pub n: Mat4,
    /// `e^a_mu = gamma^ab g_mu nu d_b x^nu`
    pub cotangents: [Vec4; 2],
}

impl NodeGeometry {
    pub fn new(
        jet: &EmbeddingJet,
        bg: &BackgroundMetric,
        node: (usize, usize),
    ) -> Result<Self> {
        let dim = bg.dim;
        let g = bg.metric_matrix(&jet.x)?;
        let (det, inv) = linalg::det_inverse(dim, &g);
        let g_inv = inv.ok_or(Error::DegenerateMetric(det.abs()))?;
        let metric = induced_metric(jet, &g, dim, node)?;
        let n = mixed_projector(jet, &metric, &g, dim);
        let mut cot = [[0.0; 4]; 2];
        let low = [
            linalg::mat_vec(dim, &g, &jet.d[0]),
            linalg::mat_vec(dim, &g, &jet.d[1]),
        ];
        for a in 0..2 {
            for mu in 0..dim {
                cot[a][mu] = metric.gamma_inv[a][0] * low[0][mu] + metric.gamma_inv[a][1] * low[1][mu];
            }
        }
        Ok(Self {
            x: jet.x,
            tangents: jet.d,
            metric,
            g,
            g_inv,
            n,
            cotangents: cot,
        })
    }

    pub fn projectors(&self, dim: usize) -> ProjectorPair {
        let mut perp = linalg::identity(dim);
        for a in 0..dim {
            for b in 0..dim {
                perp[a][b] -= self.n[a][b];
            }
        }
        ProjectorPair { n: self.n, perp }
    }

    /// `n_mu nu` (both indices down).
    pub fn n_lower(&self, dim: usize) -> Mat4 {
        linalg::mat_mul(dim, &self.g, &self.n)
    }

    /// `n^mu nu` (both indices up).
    pub fn n_upper(&self, dim: usize) -> Mat4 {
        let mut out = linalg::ZERO44;
        for mu in 0..dim {
            for nu in 0..dim {
                for a in 0..dim {
                    out[mu][nu] += self.n[mu][a] * self.g_inv[a][nu];
                }
            }
        }
        out
    }

    /// Coordinate components `v^a = e^a_mu v^mu` of a vector.
    pub fn to_coords(&self, dim: usize, v: &Vec4) -> [f64; 2] {
        let mut out = [0.0; 2];
        for a in 0..2 {
            for mu in 0..dim {
                out[a] += self.cotangents[a][mu] * v[mu];
            }
        }
        out
    }

    /// Coordinate components `w_a = d_a x^mu w_mu` of a covector.
    pub fn covector_to_coords(&self, dim: usize, w: &Vec4) -> [f64; 2] {
        let mut out = [0.0; 2];
        for a in 0..2 {
            for mu in 0..dim {
                out[a] += self.tangents[a][mu] * w[mu];
            }
        }
        out
    }

    /// Ambient vector `v^mu = d_a x^mu v^a`.
    pub fn from_coords(&self, dim: usize, v: &[f64; 2]) -> Vec4 {
        let mut out = [0.0; 4];
        for mu in 0..dim {
            out[mu] = self.tangents[0][mu] * v[0] + self.tangents[1][mu] * v[1];
        }
        out
    }
}

/// Node geometry for a whole sheet.
#[derive(Clone, Debug)]
pub struct SheetGeometry {
    pub grid: Grid2,
    pub dim: usize,
    pub background: BackgroundMetric,
    pub nodes: Vec<NodeGeometry>,
    christoffel: Vec<Christoffel>,
}

impl SheetGeometry {
    pub fn new(sheet: &EmbeddingSheet) -> Result<Self> {
        let jets = sheet.jets()?;
        let bg = &sheet.background;
        let grid = sheet.grid;
        let nodes = jets
            .iter()
            .enumerate()
            .map(|(k, jet)| NodeGeometry::new(jet, bg, grid.ij(k)))
            .collect::<Result<Vec<_>>>()?;
        let christoffel = if bg.is_flat() {
            Vec::new()
        } else {
            nodes
                .iter()
                .map(|n| Ok(bg.christoffel_raw(&n.x)?.expect("curved background")))
                .collect::<Result<_>>()?
        };
        Ok(Self {
            grid,
            dim: bg.dim,
            background: bg.clone(),
            nodes,
            christoffel,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_lorentzian(&self) -> bool {
        self.nodes.first().is_some_and(|n| n.metric.is_lorentzian())
    }

    pub fn densities(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.metric.dens).collect()
    }

    /// `G_a^m_b = Gamma^m_rho b d_a x^rho` at a node, if curved.
    fn connection_along(&self, node: usize) -> Option<[Mat4; 2]> {
        let gam = self.christoffel.get(node)?;
        let t = &self.nodes[node].tangents;
        let mut out = [linalg::ZERO44; 2];
        for a in 0..2 {
            for m in 0..self.dim {
                for b in 0..self.dim {
                    out[a][m][b] = (0..self.dim).map(|r| gam[m][r][b] * t[a][r]).sum();
                }
            }
        }
        Some(out)
    }

    /// Covariant derivative `d_a x^rho nabla_rho F` of a node field along
    /// both parameter directions. Components use a stride of 4 per slot.
    pub fn coord_derivative<const K: usize>(
        &self,
        field: &[[f64; K]],
        variance: &[Variance],
        node: usize,
    ) -> [[f64; K]; 2] {
        let mut out = self.grid.grad(field, node);
        if let Some(conn) = self.connection_along(node) {
            let rank = variance.len();
            let f = &field[node];
            for (a, out_a) in out.iter_mut().enumerate() {
                for (flat, o) in out_a.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for (s, var) in variance.iter().enumerate() {
                        let stride = 4usize.pow((rank - 1 - s) as u32);
                        let m = (flat / stride) % 4;
                        if m >= self.dim {
                            continue;
                        }
                        let base = flat - m * stride;
                        for b in 0..self.dim {
                            let c = f[base + b * stride];
                            match var {
                                Variance::Contra => acc += conn[a][m][b] * c,
                                Variance::Co => acc -= conn[a][b][m] * c,
                            }
                        }
                    }
                    *o += acc;
                }
            }
        }
        out
    }

    /// `nabla-bar_mu F = e^a_mu D_a F`; the new covariant slot comes first.
    pub fn tangential_derivative<const K: usize>(
        &self,
        field: &[[f64; K]],
        variance: &[Variance],
        node: usize,
    ) -> Vec<f64> {
        let d = self.coord_derivative(field, variance, node);
        let e = &self.nodes[node].cotangents;
        let mut out = vec![0.0; 4 * K];
        for mu in 0..self.dim {
            for k in 0..K {
                out[mu * K + k] = e[0][mu] * d[0][k] + e[1][mu] * d[1][k];
            }
        }
        out
    }

    /// `nabla-bar_mu V^mu` of an ambient vector field.
    pub fn divergence(&self, field: &[Vec4], node: usize) -> f64 {
        let d = self.coord_derivative(field, &[Variance::Contra], node);
        let e = &self.nodes[node].cotangents;
        (0..self.dim)
            .map(|mu| e[0][mu] * d[0][mu] + e[1][mu] * d[1][mu])
            .sum()
    }

    /// `(1/dens) d_a V^a` for a coordinate vector density `V^a`.
    pub fn density_divergence(&self, density: &[[f64; 2]], node: usize) -> f64 {
        let (i, j) = self.grid.ij(node);
        let dt: [f64; 2] = self.grid.d(density, i, j, 0);
        let ds: [f64; 2] = self.grid.d(density, i, j, 1);
        (dt[0] + ds[1]) / self.nodes[node].metric.dens
    }

    /// Projector pair residuals at every node, reduced by max.
    pub fn projector_residuals(&self) -> ProjectorResiduals {
        let mut out = ProjectorResiduals {
            completeness: 0.0,
            orthogonality: 0.0,
            idempotence: 0.0,
            rank: 2,
        };
        for n in &self.nodes {
            let r = n.projectors(self.dim).residuals(self.dim);
            out.completeness = out.completeness.max(r.completeness);
            out.orthogonality = out.orthogonality.max(r.orthogonality);
            out.idempotence = out.idempotence.max(r.idempotence);
            if r.rank != 2 {
                out.rank = r.rank;
            }
        }
        out
    }

    /// `K_mu nu^rho = n^lambda_nu nabla-bar_mu n^rho_lambda` and its trace
    /// `K^rho` at a node; the tensor is returned as `K[mu][nu][rho]`.
    pub fn second_fundamental(&self, nfield: &[[f64; 16]], node: usize) -> (Rank3, Vec4) {
        let dim = self.dim;
        let dn = self.tangential_derivative(nfield, &[Variance::Contra, Variance::Co], node);
        let geo = &self.nodes[node];
        let mut k = [0.0; 64];
        for mu in 0..dim {
            for nu in 0..dim {
                for rho in 0..dim {
                    let mut s = 0.0;
                    for l in 0..dim {
                        s += geo.n[l][nu] * dn[mu * 16 + rho * 4 + l];
                    }
                    k[i3(mu, nu, rho)] = s;
                }
            }
        }
        let mut trace = [0.0; 4];
        for rho in 0..dim {
            for mu in 0..dim {
                for nu in 0..dim {
                    trace[rho] += geo.g_inv[mu][nu] * k[i3(mu, nu, rho)];
                }
            }
        }
        (k, trace)
    }

    /// Mixed projector field `n^mu_nu` flattened per node.
    pub fn projector_field(&self) -> Vec<[f64; 16]> {
        self.nodes.iter().map(|n| flatten2(&n.n)).collect()
    }

    /// `n^mu nu` flattened per node.
    pub fn upper_projector_field(&self) -> Vec<[f64; 16]> {
        self.nodes.iter().map(|n| flatten2(&n.n_upper(self.dim))).collect()
    }

    /// Mean-curvature vector `K^nu = nabla-bar_mu n^mu nu` at every node.
    pub fn mean_curvature(&self) -> Vec<Vec4> {
        let up = self.upper_projector_field();
        (0..self.len())
            .map(|node| {
                let d = self.tangential_derivative(&up, &[Variance::Contra, Variance::Contra], node);
                let mut k = [0.0; 4];
                for nu in 0..self.dim {
                    for mu in 0..self.dim {
                        k[nu] += d[mu * 16 + mu * 4 + nu];
                    }
                }
                k
            })
            .collect()
    }
}

pub(crate) fn flatten2(m: &Mat4) -> [f64; 16] {
    let mut out = [0.0; 16];
    for a in 0..4 {
        for b in 0..4 {
            out[a * 4 + b] = m[a][b];
        }
    }
    out
}

/// Order in which the tangent legs are orthonormalized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum TangentRule {
    /// `iota_0` along `d_tau x`.
    #[default]
    TauFirst,
    /// `iota_1` along `d_sigma x`.
    SigmaFirst,
}

/// The deterministic frame construction rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameRule {
    pub tangent: TangentRule,
    /// Ambient basis vectors tried, in order, as seeds for the normal legs.
    pub seeds: Vec<usize>,
}

impl FrameRule {
    pub fn standard(dim: usize) -> Self {
        Self {
            tangent: TangentRule::TauFirst,
            seeds: (0..dim).collect(),
        }
    }

    pub fn alternate(dim: usize) -> Self {
        Self {
            tangent: TangentRule::SigmaFirst,
            seeds: (0..dim).rev().collect(),
        }
    }
}

/// Seed norm below which a per-node fallback seed is used.
pub const SEED_FALLBACK: f64 = 1e-3;
/// Minimum projected norm over a chart for a seed to be preferred.
pub const SEED_PREFERRED: f64 = 0.1;

/// Orthonormal frame adapted to the sheet at one node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptedFrame {
    /// `[iota_0, iota_1, lambda_1, lambda_2]`, contravariant.
    pub legs: [Vec4; 4],
    /// `g(leg, leg)` signs.
    pub eta: [f64; 4],
    pub normals: usize,
}

impl AdaptedFrame {
    /// `E^mu nu = iota_0^mu iota_1^nu - iota_1^mu iota_0^nu`.
    pub fn surface_element(&self, dim: usize) -> Mat4 {
        let (a, b) = (&self.legs[0], &self.legs[1]);
        let mut e = linalg::ZERO44;
        for mu in 0..dim {
            for nu in 0..dim {
                e[mu][nu] = a[mu] * b[nu] - b[mu] * a[nu];
            }
        }
        e
    }

    /// `s = g(iota_0, iota_0)`: +1 on Euclidean sheets, -1 on Lorentzian.
    pub fn tangent_sign(&self) -> f64 {
        self.eta[0]
    }
}

fn g_dot(dim: usize, g: &Mat4, u: &Vec4, v: &Vec4) -> f64 {
    linalg::quad(dim, g, u, v)
}

fn normalize(dim: usize, g: &Mat4, v: &Vec4) -> Option<(Vec4, f64)> {
    let q = g_dot(dim, g, v, v);
    if !(q.abs() > 1e-300) {
        return None;
    }
    Some((linalg::scale(dim, 1.0 / q.abs().sqrt(), v), q.signum()))
}

fn tangent_legs(dim: usize, geo: &NodeGeometry, rule: TangentRule, node: (usize, usize)) -> Result<([Vec4; 2], [f64; 2])> {
    let g = &geo.g;
    let (first, second) = match rule {
        TangentRule::TauFirst => (geo.tangents[0], geo.tangents[1]),
        TangentRule::SigmaFirst => (geo.tangents[1], geo.tangents[0]),
    };
    let deg = || Error::FrameDegeneracy { i: node.0, j: node.1 };
    let (u, su) = normalize(dim, g, &first).ok_or_else(deg)?;
    let proj = su * g_dot(dim, g, &second, &u);
    let w = linalg::axpy(dim, -proj, &u, &second);
    let (v, sv) = normalize(dim, g, &w).ok_or_else(deg)?;
    Ok(match rule {
        TangentRule::TauFirst => ([u, v], [su, sv]),
        TangentRule::SigmaFirst => ([v, u], [sv, su]),
    })
}

fn perp_project(dim: usize, geo: &NodeGeometry, e: usize) -> Vec4 {
    let mut v = [0.0; 4];
    v[e] = 1.0;
    for mu in 0..dim {
        v[mu] -= geo.n[mu][e];
    }
    v
}

fn seed_norm(dim: usize, geo: &NodeGeometry, e: usize) -> f64 {
    let v = perp_project(dim, geo, e);
    g_dot(dim, &geo.g, &v, &v).abs().sqrt()
}

/// `lambda_2^mu = eps^mu_{nu rho sigma} iota_0^nu iota_1^rho lambda_1^sigma`.
fn dual_normal(geo: &NodeGeometry, a: &Vec4, b: &Vec4, c: &Vec4) -> Vec4 {
    let sd = linalg::det_inverse(4, &geo.g).0.abs().sqrt();
    let mut low = [0.0; 4];
    for (m, l) in low.iter_mut().enumerate() {
        let mut s = 0.0;
        for nu in 0..4 {
            for r in 0..4 {
                for q in 0..4 {
                    let p = permutation_sign(&[m, nu, r, q]);
                    if p != 0.0 {
                        s += p * a[nu] * b[r] * c[q];
                    }
                }
            }
        }
        *l = sd * s;
    }
    linalg::mat_vec(4, &geo.g_inv, &low)
}

fn normal_legs(
    dim: usize,
    geo: &NodeGeometry,
    tangents: &[Vec4; 2],
    seeds: &[usize],
    preferred: usize,
    node: (usize, usize),
) -> Result<([Vec4; 2], [f64; 2], usize)> {
    let codim = dim - 2;
    if codim == 0 {
        return Ok(([[0.0; 4]; 2], [0.0; 2], 0));
    }
    let order = seeds.iter().skip(preferred).chain(seeds.iter().take(preferred));
    let mut chosen = None;
    for &e in order {
        if seed_norm(dim, geo, e) > SEED_FALLBACK {
            chosen = Some(e);
            break;
        }
    }
    let e = chosen.ok_or(Error::FrameDegeneracy { i: node.0, j: node.1 })?;
    let (l1, s1) = normalize(dim, &geo.g, &perp_project(dim, geo, e))
        .ok_or(Error::FrameDegeneracy { i: node.0, j: node.1 })?;
    if codim == 1 {
        return Ok(([l1, [0.0; 4]], [s1, 0.0], 1));
    }
    let l2 = dual_normal(geo, &tangents[0], &tangents[1], &l1);
    let (l2, s2) = normalize(dim, &geo.g, &l2).ok_or(Error::FrameDegeneracy { i: node.0, j: node.1 })?;
    Ok(([l1, l2], [s1, s2], 2))
}

/// Frame at a single point; the preferred normal seed is the first whose
/// projected norm exceeds [`SEED_PREFERRED`] there.
pub fn adapted_frame(geo: &NodeGeometry, dim: usize, rule: &FrameRule) -> Result<AdaptedFrame> {
    let (t, te) = tangent_legs(dim, geo, rule.tangent, (0, 0))?;
    let preferred = rule
        .seeds
        .iter()
        .position(|&e| seed_norm(dim, geo, e) > SEED_PREFERRED)
        .unwrap_or(0);
    let (nl, ne, normals) = normal_legs(dim, geo, &t, &rule.seeds, preferred, (0, 0))?;
    Ok(AdaptedFrame {
        legs: [t[0], t[1], nl[0], nl[1]],
        eta: [te[0], te[1], ne[0], ne[1]],
        normals,
    })
}

/// Frames on every node, sign-aligned along the sweep order.
#[derive(Clone, Debug)]
pub struct FrameField {
    pub frames: Vec<AdaptedFrame>,
    pub rule: FrameRule,
    /// Index into `rule.seeds` of the chart-wide preferred normal seed.
    pub preferred_seed: usize,
}

fn leg_angle(dim: usize, g: &Mat4, a: &Vec4, b: &Vec4) -> f64 {
    let c = g_dot(dim, g, a, b) / (g_dot(dim, g, a, a).abs() * g_dot(dim, g, b, b).abs()).sqrt();
    c.abs().min(1.0).acos() + if c < 0.0 { std::f64::consts::FRAC_PI_2 } else { 0.0 }
}

impl FrameField {
    pub fn new(geo: &SheetGeometry, rule: &FrameRule) -> Result<Self> {
        let dim = geo.dim;
        if rule.seeds.iter().any(|&e| e >= dim) || (dim > 2 && rule.seeds.is_empty()) {
            return Err(Error::InvalidParameter(format!(
                "frame seeds {:?} invalid for dimension {dim}",
                rule.seeds
            )));
        }
        let mut preferred = 0;
        let mut best = f64::NEG_INFINITY;
        for (k, &e) in rule.seeds.iter().enumerate() {
            let m = geo
                .nodes
                .iter()
                .map(|n| seed_norm(dim, n, e))
                .fold(f64::INFINITY, f64::min);
            if m > SEED_PREFERRED {
                preferred = k;
                break;
            }
            if m > best {
                best = m;
                preferred = k;
            }
        }
        let grid = geo.grid;
        let mut frames: Vec<AdaptedFrame> = Vec::with_capacity(geo.len());
        for (k, ng) in geo.nodes.iter().enumerate() {
            let ij = grid.ij(k);
            let (t, te) = tangent_legs(dim, ng, rule.tangent, ij)?;
            let (mut nl, ne, normals) = normal_legs(dim, ng, &t, &rule.seeds, preferred, ij)?;
            let prev = if ij.1 > 0 {
                Some(k - 1)
            } else if ij.0 > 0 {
                Some(grid.node(ij.0 - 1, 0))
            } else {
                None
            };
            if let Some(p) = prev {
                let pf = &frames[p];
                for a in 0..2 {
                    let ang = leg_angle(dim, &ng.g, &t[a], &pf.legs[a]);
                    if ang > std::f64::consts::FRAC_PI_2 {
                        return Err(Error::FrameContinuity {
                            i: ij.0,
                            j: ij.1,
                            angle: ang,
                        });
                    }
                }
                if normals > 0 && g_dot(dim, &ng.g, &nl[0], &pf.legs[2]) < 0.0 {
                    nl[0] = linalg::scale(dim, -1.0, &nl[0]);
                    if normals == 2 {
                        nl[1] = linalg::scale(dim, -1.0, &nl[1]);
                        nl[1] = {
                            let l2 = dual_normal(ng, &t[0], &t[1], &nl[0]);
                            normalize(dim, &ng.g, &l2).map(|x| x.0).unwrap_or(nl[1])
                        };
                    }
                }
                for a in 0..normals {
                    let ang = leg_angle(dim, &ng.g, &nl[a], &pf.legs[2 + a]);
                    if ang > std::f64::consts::FRAC_PI_2 {
                        return Err(Error::FrameContinuity {
                            i: ij.0,
                            j: ij.1,
                            angle: ang,
                        });
                    }
                }
            }
            frames.push(AdaptedFrame {
                legs: [t[0], t[1], nl[0], nl[1]],
                eta: [te[0], te[1], ne[0], ne[1]],
                normals,
            });
        }
        Ok(Self {
            frames,
            rule: rule.clone(),
            preferred_seed: preferred,
        })
    }

    /// Applies an internal rotation (boost on Lorentzian sheets) by the
    /// node angle `theta` to the tangent legs.
    pub fn rotated(&self, dim: usize, theta: &[f64]) -> Self {
        let mut out = self.clone();
        for (f, &th) in out.frames.iter_mut().zip(theta) {
            let (a, b) = (f.legs[0], f.legs[1]);
            let lorentzian = f.eta[0] * f.eta[1] < 0.0;
            let (c, s) = if lorentzian {
                (th.cosh(), th.sinh())
            } else {
                (th.cos(), th.sin())
            };
            let sb = if lorentzian { s } else { -s };
            for mu in 0..dim {
                f.legs[0][mu] = c * a[mu] + s * b[mu];
                f.legs[1][mu] = sb * a[mu] + c * b[mu];
            }
        }
        out
    }
}

/// Sign applied to the twist covector so that the outer curvature scalar
/// is the surface divergence of `E omega`.
pub fn twist_sign(bg: &BackgroundMetric) -> f64 {
    match bg.kind {
        crate::background::BackgroundKind::Minkowski => 1.0,
        crate::background::BackgroundKind::ConformallyFlat { lorentzian, .. } => {
            if lorentzian {
                1.0
            } else {
                -1.0
            }
        }
        crate::background::BackgroundKind::Euclidean => -1.0,
    }
}

/// Internal (`rho`) and outer (`omega`) rotation connections over a sheet.
#[derive(Clone, Debug)]
pub struct RotationConnection {
    /// `rho_l^m_n`
    pub rho: Vec<Rank3>,
    /// `omega_l^m_n`
    pub omega: Vec<Rank3>,
    /// `rho_l`
    pub rho_covector: Vec<Vec4>,
    /// `omega_l` (zero unless the codimension is 2)
    pub omega_covector: Vec<Vec4>,
    /// `E^mu nu` per node.
    pub surface_element: Vec<Mat4>,
}

/// Builds both connections from a frame field.
pub fn rotation_connections(geo: &SheetGeometry, frames: &FrameField) -> Result<RotationConnection> {
    let dim = geo.dim;
    let legs: Vec<Vec<Vec4>> = (0..4)
        .map(|k| frames.frames.iter().map(|f| f.legs[k]).collect())
        .collect();
    let mut rho = Vec::with_capacity(geo.len());
    let mut omega = Vec::with_capacity(geo.len());
    let mut rho_cov = Vec::with_capacity(geo.len());
    let mut omega_cov = Vec::with_capacity(geo.len());
    let mut elem = Vec::with_capacity(geo.len());
    let s_eps = twist_sign(&geo.background);
    for node in 0..geo.len() {
        let ng = &geo.nodes[node];
        let f = &frames.frames[node];
        // D_a leg^alpha for each leg, [a][leg][alpha]
        let dl: [[Vec4; 2]; 4] =
            [0, 1, 2, 3].map(|k| geo.coord_derivative(&legs[k], &[Variance::Contra], node));
        let nlow = ng.n_lower(dim);
        let mut plow = ng.g;
        for a in 0..dim {
            for b in 0..dim {
                plow[a][b] -= nlow[a][b];
            }
        }
        let lowered: [Vec4; 4] = [0, 1, 2, 3].map(|k| linalg::mat_vec(dim, &ng.g, &f.legs[k]));
        let build = |range: std::ops::Range<usize>, proj: &Mat4| -> Rank3 {
            let mut low = [0.0; 64];
            for a_leg in range {
                let eta = f.eta[a_leg];
                // nabla-bar_l leg^alpha = e^a_l D_a leg^alpha, projected and lowered
                for l in 0..dim {
                    let mut dv = [0.0; 4];
                    for al in 0..dim {
                        dv[al] = ng.cotangents[0][l] * dl[a_leg][0][al] + ng.cotangents[1][l] * dl[a_leg][1][al];
                    }
                    let p = linalg::mat_vec(dim, proj, &dv);
                    for m in 0..dim {
                        for n in 0..dim {
                            low[i3(l, m, n)] += 0.5 * eta * (p[m] * lowered[a_leg][n] - p[n] * lowered[a_leg][m]);
                        }
                    }
                }
            }
            raise_middle(dim, &ng.g_inv, &low)
        };
        let r = build(0..2, &nlow);
        let w = if f.normals == 2 { build(2..4, &plow) } else { [0.0; 64] };
        let e_up = f.surface_element(dim);
        let e_mixed_t = lower_second(dim, &ng.g, &e_up); // E^m_n as [m][n]
        let s = f.tangent_sign();
        let mut rc = [0.0; 4];
        for l in 0..dim {
            let mut acc = 0.0;
            for m in 0..dim {
                for n in 0..dim {
                    acc += r[i3(l, m, n)] * e_mixed_t[n][m];
                }
            }
            rc[l] = -s * acc;
        }
        let mut wc = [0.0; 4];
        if f.normals == 2 {
            // N_{lm} = eps_{lm rs} E^{rs}
            let sd = linalg::det_inverse(dim, &ng.g).0.abs().sqrt();
            let mut nbiv = linalg::ZERO44;
            for l in 0..4 {
                for m in 0..4 {
                    let mut acc = 0.0;
                    for r_ in 0..4 {
                        for q in 0..4 {
                            let p = permutation_sign(&[l, m, r_, q]);
                            if p != 0.0 {
                                acc += p * e_up[r_][q];
                            }
                        }
                    }
                    nbiv[l][m] = sd * acc;
                }
            }
            for nu in 0..4 {
                let mut acc = 0.0;
                for m in 0..4 {
                    for l in 0..4 {
                        // omega_nu^{m l} = omega_nu^m_b g^{b l}
                        let wul: f64 = (0..4).map(|b| w[i3(nu, m, b)] * ng.g_inv[b][l]).sum();
                        acc += wul * nbiv[l][m];
                    }
                }
                wc[nu] = 0.5 * s_eps * acc;
            }
        }
        rho.push(r);
        omega.push(w);
        rho_cov.push(rc);
        omega_cov.push(wc);
        elem.push(e_up);
    }
    Ok(RotationConnection {
        rho,
        omega,
        rho_covector: rho_cov,
        omega_covector: omega_cov,
        surface_element: elem,
    })
}

/// `c_l^m_n = g^{m a} c_{l a n}`.
fn raise_middle(dim: usize, g_inv: &Mat4, low: &Rank3) -> Rank3 {
    let mut out = [0.0; 64];
    for l in 0..dim {
        for m in 0..dim {
            for n in 0..dim {
                out[i3(l, m, n)] = (0..dim).map(|a| g_inv[m][a] * low[i3(l, a, n)]).sum();
            }
        }
    }
    out
}

/// `E^m_n = E^{m a} g_{a n}`.
fn lower_second(dim: usize, g: &Mat4, up: &Mat4) -> Mat4 {
    let mut out = linalg::ZERO44;
    for m in 0..dim {
        for n in 0..dim {
            out[m][n] = (0..dim).map(|a| up[m][a] * g[a][n]).sum();
        }
    }
    out
}

/// Curvature of a connection at one node:
/// `C_kl^m_n = 2 P_s^m P_n^t n_[l^p nabla-bar_k] c_p^s_t + 2 c_[k^{m p} c_l] p n`
/// with `P = n` (internal) or `P = perp` (outer).
fn connection_curvature(geo: &SheetGeometry, conn: &[Rank3], proj: &Mat4, node: usize) -> Rank4 {
    let dim = geo.dim;
    let ng = &geo.nodes[node];
    let dc = geo.coord_derivative(conn, &[Variance::Co, Variance::Contra, Variance::Co], node);
    // M_a p^m_n = P^m_s (D_a c_p^s_t) P^t_n
    let mut m_ = [[0.0; 64]; 2];
    for a in 0..2 {
        for p in 0..dim {
            for s in 0..dim {
                for t in 0..dim {
                    let v = dc[a][i3(p, s, t)];
                    if v == 0.0 {
                        continue;
                    }
                    for m in 0..dim {
                        let ps = proj[m][s] * v;
                        if ps == 0.0 {
                            continue;
                        }
                        for n in 0..dim {
                            m_[a][i3(p, m, n)] += ps * proj[t][n];
                        }
                    }
                }
            }
        }
    }
    // A_kl^m_n = e^a_k n^p_l M_a p^m_n
    let mut a_ = [0.0; 256];
    for k in 0..dim {
        for l in 0..dim {
            for m in 0..dim {
                for n in 0..dim {
                    let mut acc = 0.0;
                    for a in 0..2 {
                        let ek = ng.cotangents[a][k];
                        if ek == 0.0 {
                            continue;
                        }
                        for p in 0..dim {
                            acc += ek * ng.n[p][l] * m_[a][i3(p, m, n)];
                        }
                    }
                    a_[i4(k, l, m, n)] = acc;
                }
            }
        }
    }
    let c = &conn[node];
    let mut out = [0.0; 256];
    for k in 0..dim {
        for l in 0..dim {
            for m in 0..dim {
                for n in 0..dim {
                    let mut q = 0.0;
                    for al in 0..dim {
                        q += c[i3(k, m, al)] * c[i3(l, al, n)] - c[i3(l, m, al)] * c[i3(k, al, n)];
                    }
                    out[i4(k, l, m, n)] = a_[i4(k, l, m, n)] - a_[i4(l, k, m, n)] + q;
                }
            }
        }
    }
    out
}

/// Internal curvature at one node.
#[derive(Clone, Debug)]
pub struct InternalCurvature {
    /// `R_kl^m_n`
    pub riemann: Rank4,
    /// `R_mu nu`
    pub ricci: Mat4,
    pub scalar: f64,
}

/// Outer curvature at one node.
#[derive(Clone, Debug)]
pub struct OuterCurvature {
    /// `Omega_kl^m_n`
    pub tensor: Rank4,
    /// `Omega = 1/2 Omega_{lmnr} eps^{lmnr}`
    pub scalar: f64,
}

/// `R_kl m n` with the third slot lowered.
fn lower_third(dim: usize, g: &Mat4, t: &Rank4) -> Rank4 {
    let mut out = [0.0; 256];
    for k in 0..dim {
        for l in 0..dim {
            for m in 0..dim {
                for n in 0..dim {
                    out[i4(k, l, m, n)] = (0..dim).map(|a| g[m][a] * t[i4(k, l, a, n)]).sum();
                }
            }
        }
    }
    out
}

pub fn internal_curvature(geo: &SheetGeometry, rc: &RotationConnection, node: usize) -> InternalCurvature {
    let dim = geo.dim;
    let ng = &geo.nodes[node];
    let riemann = connection_curvature(geo, &rc.rho, &ng.n, node);
    let low = lower_third(dim, &ng.g, &riemann);
    // R_mu nu = R_{mu s nu}^s = R_{mu s nu t} g^{t s}
    let mut ricci = linalg::ZERO44;
    for mu in 0..dim {
        for nu in 0..dim {
            let mut acc = 0.0;
            for s in 0..dim {
                for t in 0..dim {
                    // R_{mu s nu t}: slots (k=mu, l=s, m=nu, n=t)
                    acc += low[i4(mu, s, nu, t)] * ng.g_inv[t][s];
                }
            }
            ricci[mu][nu] = acc;
        }
    }
    let mut scalar = 0.0;
    for mu in 0..dim {
        for nu in 0..dim {
            scalar += ng.g_inv[mu][nu] * ricci[mu][nu];
        }
    }
    InternalCurvature {
        riemann,
        ricci,
        scalar,
    }
}

/// Max norm of `R_mu nu - R n_mu nu / (p - 1) / 2`.
pub fn adjusted_ricci(geo: &SheetGeometry, node: usize, cb: &InternalCurvature, p: usize) -> Result<f64> {
    if p < 2 {
        return Err(Error::InvalidParameter(format!("adjusted Ricci needs p >= 2, got {p}")));
    }
    let dim = geo.dim;
    let nl = geo.nodes[node].n_lower(dim);
    let c = 1.0 / (2.0 * (p as f64 - 1.0));
    let mut m: f64 = 0.0;
    for mu in 0..dim {
        for nu in 0..dim {
            m = m.max((cb.ricci[mu][nu] - c * cb.scalar * nl[mu][nu]).abs());
        }
    }
    Ok(m)
}

/// Max of the orthogonal contractions `perp^a_k R_a l m n` etc. over all slots.
pub fn transversality(geo: &SheetGeometry, node: usize, t: &Rank4) -> f64 {
    let dim = geo.dim;
    let ng = &geo.nodes[node];
    let low = lower_third(dim, &ng.g, t);
    let perp = ng.projectors(dim).perp;
    let mut worst: f64 = 0.0;
    for slot in 0..4 {
        for k in 0..dim {
            for l in 0..dim {
                for m in 0..dim {
                    for n in 0..dim {
                        let mut idx = [k, l, m, n];
                        let target = idx[slot];
                        let mut acc = 0.0;
                        for a in 0..dim {
                            idx[slot] = a;
                            // all slots of `low` are covariant: perp^a_target
                            acc += perp[a][target] * low[i4(idx[0], idx[1], idx[2], idx[3])];
                        }
                        worst = worst.max(acc.abs());
                    }
                }
            }
        }
    }
    worst
}

pub fn outer_curvature(geo: &SheetGeometry, rc: &RotationConnection, node: usize) -> Result<OuterCurvature> {
    let dim = geo.dim;
    if dim != 4 {
        return Err(Error::DimMismatch {
            expected: 4,
            found: dim,
        });
    }
    let ng = &geo.nodes[node];
    let perp = ng.projectors(dim).perp;
    let tensor = connection_curvature(geo, &rc.omega, &perp, node);
    let low = lower_third(dim, &ng.g, &tensor);
    let det = linalg::det_inverse(dim, &ng.g).0;
    let eps_up = det.signum() / det.abs().sqrt();
    let mut scalar = 0.0;
    for k in 0..4 {
        for l in 0..4 {
            for m in 0..4 {
                for n in 0..4 {
                    let p = permutation_sign(&[k, l, m, n]);
                    if p != 0.0 {
                        scalar += 0.5 * low[i4(k, l, m, n)] * p * eps_up;
                    }
                }
            }
        }
    }
    Ok(OuterCurvature { tensor, scalar })
}

/// Largest single trace of the outer curvature tensor.
pub fn outer_traces(geo: &SheetGeometry, node: usize, oc: &OuterCurvature) -> f64 {
    let dim = geo.dim;
    let ng = &geo.nodes[node];
    let low = lower_third(dim, &ng.g, &oc.tensor);
    let mut worst: f64 = 0.0;
    for (s1, s2) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
        for x in 0..dim {
            for y in 0..dim {
                let mut acc = 0.0;
                for a in 0..dim {
                    for b in 0..dim {
                        let mut idx = [0usize; 4];
                        idx[s1] = a;
                        idx[s2] = b;
                        let free: Vec<usize> = (0..4).filter(|s| *s != s1 && *s != s2).collect();
                        idx[free[0]] = x;
                        idx[free[1]] = y;
                        acc += ng.g_inv[a][b] * low[i4(idx[0], idx[1], idx[2], idx[3])];
                    }
                }
                worst = worst.max(acc.abs());
            }
        }
    }
    worst
}

/// Everything derived from one sheet and one frame rule.
#[derive(Clone, Debug)]
pub struct SheetAnalysis {
    pub geometry: SheetGeometry,
    pub frames: FrameField,
    pub connection: RotationConnection,
}

impl SheetAnalysis {
    pub fn new(sheet: &EmbeddingSheet, rule: &FrameRule) -> Result<Self> {
        let geometry = SheetGeometry::new(sheet)?;
        let frames = FrameField::new(&geometry, rule)?;
        let connection = rotation_connections(&geometry, &frames)?;
        Ok(Self {
            geometry,
            frames,
            connection,
        })
    }

    pub fn standard(sheet: &EmbeddingSheet) -> Result<Self> {
        Self::new(sheet, &FrameRule::standard(sheet.dim()))
    }

    /// Same geometry with a different frame field.
    pub fn with_frames(&self, frames: FrameField) -> Result<Self> {
        let connection = rotation_connections(&self.geometry, &frames)?;
        Ok(Self {
            geometry: self.geometry.clone(),
            frames,
            connection,
        })
    }

    pub fn len(&self) -> usize {
        self.geometry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.geometry.is_empty()
    }

    pub fn internal(&self, node: usize) -> InternalCurvature {
        internal_curvature(&self.geometry, &self.connection, node)
    }

    pub fn outer(&self, node: usize) -> Result<OuterCurvature> {
        outer_curvature(&self.geometry, &self.connection, node)
    }

    /// Curvature scalar `R` from the full internal curvature tensor.
    pub fn curvature_scalar(&self) -> Vec<f64> {
        (0..self.len()).map(|k| self.internal(k).scalar).collect()
    }

    pub fn outer_scalar(&self) -> Result<Vec<f64>> {
        (0..self.len()).map(|k| Ok(self.outer(k)?.scalar)).collect()
    }

    /// Coordinate components `rho_a` of the internal rotation covector.
    pub fn rho_coords(&self) -> Vec<[f64; 2]> {
        let dim = self.geometry.dim;
        (0..self.len())
            .map(|k| self.geometry.nodes[k].covector_to_coords(dim, &self.connection.rho_covector[k]))
            .collect()
    }

    pub fn omega_coords(&self) -> Vec<[f64; 2]> {
        let dim = self.geometry.dim;
        (0..self.len())
            .map(|k| self.geometry.nodes[k].covector_to_coords(dim, &self.connection.omega_covector[k]))
            .collect()
    }

    /// `nabla-bar_mu (E^mu nu c_nu)` for a covector field `c`.
    pub fn twisted_divergence(&self, cov: &[Vec4]) -> Vec<f64> {
        let dim = self.geometry.dim;
        let field: Vec<Vec4> = (0..self.len())
            .map(|k| {
                let e = &self.connection.surface_element[k];
                let mut v = [0.0; 4];
                for mu in 0..dim {
                    v[mu] = (0..dim).map(|nu| e[mu][nu] * cov[k][nu]).sum();
                }
                v
            })
            .collect();
        (0..self.len()).map(|k| self.geometry.divergence(&field, k)).collect()
    }

    /// Pointwise `R - div(E rho)` and, in four dimensions, `Omega - div(E omega)`.
    pub fn divergence_form_residuals(&self) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
        let r = self.curvature_scalar();
        let dr = self.twisted_divergence(&self.connection.rho_covector);
        let res_r = r.iter().zip(&dr).map(|(a, b)| a - b).collect();
        let res_o = if self.geometry.dim == 4 {
            let o = self.outer_scalar()?;
            let dw = self.twisted_divergence(&self.connection.omega_covector);
            Some(o.iter().zip(&dw).map(|(a, b)| a - b).collect())
        } else {
            None
        };
        Ok((res_r, res_o))
    }
}

/// Max norm of a node field over nodes at least `margin` from open edges.
pub fn interior_max(grid: &Grid2, values: &[f64], margin: usize) -> f64 {
    grid.interior_nodes(margin)
        .into_iter()
        .map(|k| values[k].abs())
        .fold(0.0, f64::max)
}

pub fn interior_max_vec<V: Linear + AsRef<[f64]>>(grid: &Grid2, values: &[V], margin: usize) -> f64 {
    grid.interior_nodes(margin)
        .into_iter()
        .map(|k| values[k].as_ref().iter().fold(0.0f64, |m, v| m.max(v.abs())))
        .fold(0.0, f64::max)
}

/// Pure-divergence identity residuals over interior nodes.
pub fn divergence_form_check(sheet: &EmbeddingSheet, margin: usize) -> Result<(f64, Option<f64>)> {
    let an = SheetAnalysis::standard(sheet)?;
    let (r, o) = an.divergence_form_residuals()?;
    let grid = &an.geometry.grid;
    Ok((interior_max(grid, &r, margin), o.map(|o| interior_max(grid, &o, margin))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::worldsheet::{self, catenoid, plane, static_string, unit_sphere};
    use std::f64::consts::PI;

    #[test]
    fn plane_projectors() {
        let p = plane(8, 0.0, 1.0).unwrap();
        let jet = p.jet_at(2, 3).unwrap();
        let pp = fundamental_tensors(&jet, &MetricValue::euclidean(3)).unwrap();
        assert_eq!(pp.n, linalg::diag(&[1.0, 1.0, 0.0]));
        assert_eq!(pp.perp, linalg::diag(&[0.0, 0.0, 1.0]));
        let r = pp.residuals(3);
        assert_eq!(r.rank, 2);
        assert!(r.completeness == 0.0 && r.orthogonality == 0.0 && r.idempotence == 0.0);
    }

    #[test]
    fn sphere_normal_projector_is_radial() {
        let s = unit_sphere(16).unwrap();
        let jet = s.charts[1].sheet.jet_at_params(0.4, 1.3).unwrap();
        let pp = fundamental_tensors(&jet, &MetricValue::euclidean(3)).unwrap();
        let x = jet.x;
        for a in 0..3 {
            for b in 0..3 {
                assert!((pp.perp[a][b] - x[a] * x[b]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn static_string_frame_and_surface_element() {
        let s = static_string(8).unwrap();
        let an = SheetAnalysis::standard(&s).unwrap();
        let f = &an.frames.frames[9];
        assert_eq!(f.legs[0], [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(f.legs[1], [0.0, 1.0, 0.0, 0.0]);
        assert_eq!(f.eta[0], -1.0);
        let p = plane(8, 0.0, 1.0).unwrap();
        let an = SheetAnalysis::standard(&p).unwrap();
        let e = an.frames.frames[5].surface_element(3);
        assert_eq!(e[0][1], 1.0);
        assert_eq!(e[1][0], -1.0);
        assert_eq!(an.connection.rho[5], [0.0; 64]);
    }

    #[test]
    fn sphere_frame_follows_coordinate_directions() {
        let s = unit_sphere(16).unwrap();
        let an = SheetAnalysis::standard(&s.charts[0].sheet).unwrap();
        let g = an.geometry.grid;
        let k = g.node(5, 3);
        let (th, ph) = g.params(5, 3);
        let f = &an.frames.frames[k];
        let th_hat = [th.cos() * ph.cos(), th.cos() * ph.sin(), -th.sin()];
        let ph_hat = [-ph.sin(), ph.cos(), 0.0];
        for m in 0..3 {
            assert!((f.legs[0][m] - th_hat[m]).abs() < 1e-12);
            assert!((f.legs[1][m] - ph_hat[m]).abs() < 1e-12);
        }
    }

    fn band(g: &Grid2, cut: f64) -> Vec<usize> {
        (0..g.len())
            .filter(|&k| {
                let th = g.params(g.ij(k).0, 0).0;
                th > cut && th < PI - cut
            })
            .collect()
    }

    fn sphere_errors(n: usize) -> (f64, f64, f64) {
        let s = unit_sphere(n).unwrap();
        let sheet = &s.charts[0].sheet;
        let an = SheetAnalysis::standard(sheet).unwrap();
        let g = an.geometry.grid;
        let rho = an.rho_coords();
        let r = an.curvature_scalar();
        let k = an.geometry.mean_curvature();
        let mut e_rho: f64 = 0.0;
        let mut e_r: f64 = 0.0;
        let mut e_k: f64 = 0.0;
        for node in band(&g, 0.8) {
            let (th, _) = g.params(g.ij(node).0, 0);
            e_rho = e_rho.max((rho[node][1] + 2.0 * th.cos()).abs());
            e_r = e_r.max((r[node] - 2.0).abs());
            let x = an.geometry.nodes[node].x;
            for m in 0..3 {
                e_k = e_k.max((k[node][m] + 2.0 * x[m]).abs());
            }
        }
        (e_rho, e_r, e_k)
    }

    #[test]
    fn sphere_connection_and_curvature() {
        let (rho32, r32, k32) = sphere_errors(32);
        let (rho64, r64, k64) = sphere_errors(64);
        assert!(rho32 < 2e-2 && (rho32 / rho64).log2() > 1.8, "rho {rho32} {rho64}");
        assert!(r32 < 5e-2 && (r32 / r64).log2() > 1.8, "R {r32} {r64}");
        assert!(k32 < 5e-2 && (k32 / k64).log2() > 1.8, "K {k32} {k64}");
        assert!(rho64 < rho32);
    }

    #[test]
    fn catenoid_curvatures() {
        let c = catenoid(48).unwrap();
        let an = SheetAnalysis::standard(&c).unwrap();
        let g = an.geometry.grid;
        let r = an.curvature_scalar();
        let up = an.geometry.projector_field();
        for node in g.interior_nodes(2).into_iter().step_by(37) {
            let (v, _) = g.params(g.ij(node).0, 0);
            assert!((r[node] + 2.0 / v.cosh().powi(4)).abs() < 3e-2, "{} vs {}", r[node], v);
            let (kt, tr) = an.geometry.second_fundamental(&up, node);
            assert!(tr.iter().all(|t| t.abs() < 1e-2));
            let mx = kt.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(mx > 0.1);
        }
        let x = catenoid(16).unwrap().jet_at(5, 3).unwrap();
        let pp = fundamental_tensors(&x, &MetricValue::euclidean(3)).unwrap();
        assert!(pp.residuals(3).idempotence < 1e-12);
    }

    #[test]
    fn sphere_gauss_bonnet() {
        let s = unit_sphere(128).unwrap();
        let chi = s
            .integrate(|sh| Ok(SheetAnalysis::standard(sh)?.curvature_scalar()))
            .unwrap();
        assert!((chi / (8.0 * PI) - 1.0).abs() < 1e-3, "{chi}");
    }

    #[test]
    fn adjusted_ricci_and_transversality_on_sphere() {
        let s = unit_sphere(24).unwrap();
        let an = SheetAnalysis::standard(&s.charts[0].sheet).unwrap();
        for node in (0..an.len()).step_by(29) {
            let c = an.internal(node);
            assert!(adjusted_ricci(&an.geometry, node, &c, 2).unwrap() < 1e-10);
            assert!(transversality(&an.geometry, node, &c.riemann) < 1e-10);
        }
        let c = an.internal(0);
        assert!(adjusted_ricci(&an.geometry, 0, &c, 1).is_err());
    }

    fn graph_residual(n: usize) -> (f64, f64) {
        let s = worldsheet::graph_surface(n, 7, 0.3).unwrap();
        let an = SheetAnalysis::standard(&s).unwrap();
        let (_, o) = an.divergence_form_residuals().unwrap();
        let o = o.unwrap();
        let om = an.outer_scalar().unwrap();
        (
            o.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            om.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        )
    }

    #[test]
    fn outer_curvature_divergence_form() {
        let (a, om) = graph_residual(32);
        let (b, _) = graph_residual(64);
        assert!(om > 1e-2, "Omega should not vanish: {om}");
        assert!(a < 0.2 * om, "{a} vs {om}");
        assert!((a / b).log2() > 1.8, "{a} {b}");
    }

    #[test]
    fn flat_sphere_has_no_outer_curvature() {
        let s = worldsheet::sphere_in_r4(24).unwrap();
        let an = SheetAnalysis::standard(&s.charts[0].sheet).unwrap();
        let om = an.outer_scalar().unwrap();
        assert!(om.iter().all(|o| o.abs() < 1e-8));
        let oc = an.outer(40).unwrap();
        assert!(outer_traces(&an.geometry, 40, &oc) < 1e-8);
    }

    #[test]
    fn frame_gauge_rotation() {
        let s = unit_sphere(48).unwrap();
        let sheet = &s.charts[0].sheet;
        let an = SheetAnalysis::standard(sheet).unwrap();
        let g = an.geometry.grid;
        let theta: Vec<f64> = (0..g.len())
            .map(|k| {
                let (t, p) = g.params(g.ij(k).0, g.ij(k).1);
                0.3 * (t * 2.0).sin() * p.cos()
            })
            .collect();
        let rot = an.with_frames(an.frames.rotated(3, &theta)).unwrap();
        let r0 = an.curvature_scalar();
        let r1 = rot.curvature_scalar();
        let c0 = an.rho_coords();
        let c1 = rot.rho_coords();
        for node in band(&g, 0.5).into_iter().step_by(13) {
            assert!((r0[node] - r1[node]).abs() < 2e-2, "{} {}", r0[node], r1[node]);
            let (i, j) = g.ij(node);
            let dth: f64 = g.d(&theta, i, j, 1);
            let diff = c1[node][1] - c0[node][1];
            assert!((diff.abs() - 2.0 * dth.abs()).abs() < 1e-2, "{diff} {dth}");
        }
        let constant = vec![0.7; g.len()];
        let rigid = an.with_frames(an.frames.rotated(3, &constant)).unwrap();
        for (a, b) in an.connection.rho.iter().zip(&rigid.connection.rho) {
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
