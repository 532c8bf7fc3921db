//! Two-dimensional sheets embedded in a background: analytic maps evaluated
//! with exact jets, gridded sheets differentiated by stencils, the induced
//! metric, surface and slice quadrature, and multi-chart surfaces.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::background::BackgroundMetric;
use crate::error::{Error, Result};
use crate::grid::{Axis, Grid2};
use crate::jet::Jet2;
use crate::linalg::{self, Mat4, Vec4};
use crate::tolerances::DEGENERATE_DET;

pub type AnalyticMap = Arc<dyn Fn(Jet2, Jet2) -> [Jet2; 4] + Send + Sync>;

#[derive(Clone)]
pub enum SheetSource {
    Analytic(AnalyticMap),
    Grid(Arc<Vec<Vec4>>),
}

/// A p = 2 sheet over a rectangular parameter grid.
#[derive(Clone)]
pub struct EmbeddingSheet {
    pub name: String,
    pub grid: Grid2,
    pub background: BackgroundMetric,
    pub source: SheetSource,
    /// Undeformed source that labels points of a deformed sheet; `None`
    /// for sheets that are their own reference.
    pub anchor: Option<SheetSource>,
}

impl SheetSource {
    /// Jets of the source at `(t, s)`; grid sources give constant jets at
    /// the node `k`.
    pub fn eval(&self, t: Jet2, s: Jet2, k: usize) -> [Jet2; 4] {
        match self {
            SheetSource::Analytic(f) => f(t, s),
            SheetSource::Grid(v) => v[k].map(Jet2::constant),
        }
    }
}

impl fmt::Debug for EmbeddingSheet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingSheet")
            .field("name", &self.name)
            .field("grid", &self.grid)
            .field("background", &self.background)
            .field("analytic", &self.is_analytic())
            .finish()
    }
}

/// Position and first and second parameter derivatives at a node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmbeddingJet {
    pub x: Vec4,
    /// `d[a] = d_a x`
    pub d: [Vec4; 2],
    /// `[d_tau d_tau x, d_tau d_sigma x, d_sigma d_sigma x]`
    pub dd: [Vec4; 3],
}

impl EmbeddingJet {
    pub fn from_jets(x: &[Jet2; 4]) -> Self {
        let mut j = EmbeddingJet {
            x: [0.0; 4],
            d: [[0.0; 4]; 2],
            dd: [[0.0; 4]; 3],
        };
        for mu in 0..4 {
            j.x[mu] = x[mu].v;
            j.d[0][mu] = x[mu].d[0];
            j.d[1][mu] = x[mu].d[1];
            for k in 0..3 {
                j.dd[k][mu] = x[mu].h[k];
            }
        }
        j
    }

    pub fn second(&self, a: usize, b: usize) -> &Vec4 {
        &self.dd[a + b]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InducedMetric {
    pub gamma: [[f64; 2]; 2],
    pub gamma_inv: [[f64; 2]; 2],
    pub det: f64,
    /// `sqrt(|det gamma|)`
    pub dens: f64,
}

impl InducedMetric {
    pub fn is_lorentzian(&self) -> bool {
        self.det < 0.0
    }
}

/// `gamma_ab = g_mu nu d_a x^mu d_b x^nu`; `node` only labels errors.
pub fn induced_metric(
    jet: &EmbeddingJet,
    g: &Mat4,
    dim: usize,
    node: (usize, usize),
) -> Result<InducedMetric> {
    let mut gamma = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            gamma[a][b] = linalg::quad(dim, g, &jet.d[a], &jet.d[b]);
        }
    }
    let det = gamma[0][0] * gamma[1][1] - gamma[0][1] * gamma[1][0];
    if !(det.abs() >= DEGENERATE_DET) {
        return Err(Error::DegenerateSurface {
            i: node.0,
            j: node.1,
            det,
        });
    }
    let gamma_inv = [
        [gamma[1][1] / det, -gamma[0][1] / det],
        [-gamma[1][0] / det, gamma[0][0] / det],
    ];
    Ok(InducedMetric {
        gamma,
        gamma_inv,
        det,
        dens: det.abs().sqrt(),
    })
}

impl EmbeddingSheet {
    pub fn analytic(
        name: impl Into<String>,
        grid: Grid2,
        background: BackgroundMetric,
        map: impl Fn(Jet2, Jet2) -> [Jet2; 4] + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            grid,
            background,
            source: SheetSource::Analytic(Arc::new(map)),
            anchor: None,
        }
    }

    pub fn from_values(
        name: impl Into<String>,
        grid: Grid2,
        background: BackgroundMetric,
        values: Vec<Vec4>,
    ) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        let dim = background.dim;
        if let Some(k) = values
            .iter()
            .position(|x| x[..dim].iter().any(|v| !v.is_finite()))
        {
            let (i, j) = grid.ij(k);
            return Err(Error::InvalidParameter(format!(
                "non-finite grid value at node ({i}, {j})"
            )));
        }
        Ok(Self {
            name: name.into(),
            grid,
            background,
            source: SheetSource::Grid(Arc::new(values)),
            anchor: None,
        })
    }

    /// Reads node coordinates from a CSV file with header `i,j,x0,..`.
    pub fn from_csv(path: &Path, grid: Grid2, background: BackgroundMetric) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| csv_error(path, e))?;
        let headers = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
        let dim = background.dim;
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Parse(format!("{}: missing column `{name}`", path.display())))
        };
        let ci = col("i")?;
        let cj = col("j")?;
        let cx: Vec<usize> = (0..dim)
            .map(|m| col(&format!("x{m}")))
            .collect::<Result<_>>()?;
        let mut values = vec![[f64::NAN; 4]; grid.len()];
        let mut seen = vec![false; grid.len()];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_error(path, e))?;
            let parse = |c: usize| -> Result<f64> {
                rec.get(c)
                    .unwrap_or("")
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("{} row {}: {e}", path.display(), line + 2)))
            };
            let i = parse(ci)? as usize;
            let j = parse(cj)? as usize;
            if i >= grid.tau.n || j >= grid.sigma.n {
                return Err(Error::Parse(format!(
                    "{} row {}: node ({i}, {j}) outside {}x{} grid",
                    path.display(),
                    line + 2,
                    grid.tau.n,
                    grid.sigma.n
                )));
            }
            let k = grid.node(i, j);
            for (m, c) in cx.iter().enumerate() {
                values[k][m] = parse(*c)?;
            }
            for v in values[k].iter_mut().skip(dim) {
                *v = 0.0;
            }
            seen[k] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            let (i, j) = grid.ij(k);
            return Err(Error::Parse(format!(
                "{}: node ({i}, {j}) missing",
                path.display()
            )));
        }
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "grid".into());
        Self::from_values(name, grid, background, values)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        let dim = self.dim();
        let mut header = vec!["i".to_string(), "j".to_string()];
        header.extend((0..dim).map(|m| format!("x{m}")));
        w.write_record(&header).map_err(|e| csv_error(path, e))?;
        for i in 0..self.grid.tau.n {
            for j in 0..self.grid.sigma.n {
                let x = self.point(i, j);
                let mut rec = vec![i.to_string(), j.to_string()];
                rec.extend(x[..dim].iter().map(|v| format!("{v:.17e}")));
                w.write_record(&rec).map_err(|e| csv_error(path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn dim(&self) -> usize {
        self.background.dim
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self.source, SheetSource::Analytic(_))
    }

    pub fn point(&self, i: usize, j: usize) -> Vec4 {
        match &self.source {
            SheetSource::Analytic(f) => {
                let (t, s) = self.grid.params(i, j);
                let x = f(Jet2::constant(t), Jet2::constant(s));
                [x[0].v, x[1].v, x[2].v, x[3].v]
            }
            SheetSource::Grid(v) => v[self.grid.node(i, j)],
        }
    }

    pub fn points(&self) -> Vec<Vec4> {
        match &self.source {
            SheetSource::Grid(v) => v.as_ref().clone(),
            SheetSource::Analytic(_) => (0..self.grid.len())
                .map(|k| {
                    let (i, j) = self.grid.ij(k);
                    self.point(i, j)
                })
                .collect(),
        }
    }

    /// Exact jet of an analytic sheet at arbitrary parameters.
    pub fn jet_at_params(&self, t: f64, s: f64) -> Result<EmbeddingJet> {
        match &self.source {
            SheetSource::Analytic(f) => Ok(EmbeddingJet::from_jets(&f(
                Jet2::var(t, 0),
                Jet2::var(s, 1),
            ))),
            SheetSource::Grid(_) => Err(Error::InvalidParameter(
                "off-node jets need an analytic sheet".into(),
            )),
        }
    }

    pub fn jet_at(&self, i: usize, j: usize) -> Result<EmbeddingJet> {
        if i >= self.grid.tau.n || j >= self.grid.sigma.n {
            return Err(Error::StencilWidth(format!("node ({i}, {j}) outside grid")));
        }
        match &self.source {
            SheetSource::Analytic(_) => {
                let (t, s) = self.grid.params(i, j);
                self.jet_at_params(t, s)
            }
            SheetSource::Grid(v) => Ok(grid_jet(&self.grid, v, i, j)),
        }
    }

    pub fn jets(&self) -> Result<Vec<EmbeddingJet>> {
        match &self.source {
            SheetSource::Grid(v) => Ok((0..self.grid.len())
                .map(|k| {
                    let (i, j) = self.grid.ij(k);
                    grid_jet(&self.grid, v, i, j)
                })
                .collect()),
            SheetSource::Analytic(_) => (0..self.grid.len())
                .map(|k| {
                    let (i, j) = self.grid.ij(k);
                    self.jet_at(i, j)
                })
                .collect(),
        }
    }

    /// The same sheet with its map sampled onto the grid.
    pub fn sampled(&self) -> Self {
        Self {
            name: format!("{}-sampled", self.name),
            grid: self.grid,
            background: self.background.clone(),
            source: SheetSource::Grid(Arc::new(self.points())),
            anchor: self.anchor.as_ref().map(|a| {
                SheetSource::Grid(Arc::new(
                    (0..self.grid.len())
                        .map(|k| {
                            let (t, s) = self.grid.params(self.grid.ij(k).0, self.grid.ij(k).1);
                            a.eval(Jet2::constant(t), Jet2::constant(s), k).map(|x| x.v)
                        })
                        .collect(),
                ))
            }),
        }
    }

    /// The reference source labelling points of this sheet.
    pub fn anchor_source(&self) -> &SheetSource {
        self.anchor.as_ref().unwrap_or(&self.source)
    }

    /// Same sheet on a different grid resolution (analytic sheets only).
    pub fn with_resolution(&self, n_tau: usize, n_sigma: usize) -> Result<Self> {
        if !self.is_analytic() || matches!(self.anchor, Some(SheetSource::Grid(_))) {
            return Err(Error::InvalidParameter(
                "grid sheets cannot be resampled".into(),
            ));
        }
        let t = self.grid.tau;
        let s = self.grid.sigma;
        Ok(Self {
            grid: Grid2::new(
                Axis::new(t.lo, t.hi, n_tau, t.periodic)?,
                Axis::new(s.lo, s.hi, n_sigma, s.periodic)?,
            ),
            ..self.clone()
        })
    }

    pub fn induced_metrics(&self) -> Result<Vec<InducedMetric>> {
        let jets = self.jets()?;
        let dim = self.dim();
        jets.iter()
            .enumerate()
            .map(|(k, jet)| {
                let g = self.background.metric_matrix(&jet.x)?;
                induced_metric(jet, &g, dim, self.grid.ij(k))
            })
            .collect()
    }

    pub fn densities(&self) -> Result<Vec<f64>> {
        Ok(self.induced_metrics()?.iter().map(|m| m.dens).collect())
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse(format!("{}: {other:?}", path.display())),
    }
}

fn grid_jet(grid: &Grid2, v: &[Vec4], i: usize, j: usize) -> EmbeddingJet {
    EmbeddingJet {
        x: v[grid.node(i, j)],
        d: [grid.d(v, i, j, 0), grid.d(v, i, j, 1)],
        dd: [
            grid.dd(v, i, j, 0, 0),
            grid.dd(v, i, j, 0, 1),
            grid.dd(v, i, j, 1, 1),
        ],
    }
}

/// Trapezoid rule `sum f * dens * w_tau * w_sigma`.
pub fn surface_integral(sheet: &EmbeddingSheet, f: &[f64]) -> Result<f64> {
    let dens = sheet.densities()?;
    weighted_integral(&sheet.grid, &dens, f, None)
}

pub(crate) fn weighted_integral(
    grid: &Grid2,
    dens: &[f64],
    f: &[f64],
    weight: Option<&[f64]>,
) -> Result<f64> {
    if f.len() != grid.len() {
        return Err(Error::DimMismatch {
            expected: grid.len(),
            found: f.len(),
        });
    }
    if let Some(k) = f.iter().position(|v| !v.is_finite()) {
        let (i, j) = grid.ij(k);
        return Err(Error::InvalidParameter(format!(
            "non-finite integrand at node ({i}, {j})"
        )));
    }
    let mut sum = 0.0;
    for k in 0..grid.len() {
        let (i, j) = grid.ij(k);
        let w = weight.map_or(1.0, |w| w[k]);
        sum += f[k] * dens[k] * w * grid.weight(i, j);
    }
    Ok(sum)
}

/// A `tau = const` row of nodes used as a Cauchy slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchySlice {
    pub row: usize,
    pub tau: f64,
}

impl CauchySlice {
    pub fn new(sheet: &EmbeddingSheet, tau: f64) -> Result<Self> {
        let row = sheet
            .grid
            .tau
            .nearest(tau)
            .ok_or(Error::SliceOutsideDomain(tau))?;
        Ok(Self {
            row,
            tau: sheet.grid.tau.coord(row),
        })
    }

    pub fn at_row(sheet: &EmbeddingSheet, row: usize) -> Result<Self> {
        if row >= sheet.grid.tau.n {
            return Err(Error::SliceOutsideDomain(row as f64));
        }
        Ok(Self {
            row,
            tau: sheet.grid.tau.coord(row),
        })
    }

    /// Measure covectors `dSigma_mu = dens * d_mu tau * w_sigma` on the slice.
    pub fn measure(&self, sheet: &EmbeddingSheet) -> Result<Vec<Vec4>> {
        let dim = sheet.dim();
        (0..sheet.grid.sigma.n)
            .map(|j| {
                let jet = sheet.jet_at(self.row, j)?;
                let g = sheet.background.metric_matrix(&jet.x)?;
                let m = induced_metric(&jet, &g, dim, (self.row, j))?;
                let mut out = [0.0; 4];
                for mu in 0..dim {
                    for b in 0..2 {
                        let mut gx = 0.0;
                        for nu in 0..dim {
                            gx += g[mu][nu] * jet.d[b][nu];
                        }
                        out[mu] += m.gamma_inv[0][b] * gx;
                    }
                    out[mu] *= m.dens * sheet.grid.sigma.weight(j);
                }
                Ok(out)
            })
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceIntegral {
    pub value: f64,
    /// Largest normal component of the integrand, removed by the measure.
    pub normal_leak: f64,
}

/// `int w^mu dSigma_mu` over the slice; `w` holds one vector per slice node.
pub fn slice_integral(
    sheet: &EmbeddingSheet,
    slice: &CauchySlice,
    w: &[Vec4],
) -> Result<SliceIntegral> {
    let n = sheet.grid.sigma.n;
    if w.len() != n {
        return Err(Error::DimMismatch {
            expected: n,
            found: w.len(),
        });
    }
    let dim = sheet.dim();
    let measure = slice.measure(sheet)?;
    let mut value = 0.0;
    let mut leak: f64 = 0.0;
    for j in 0..n {
        value += (0..dim).map(|mu| w[j][mu] * measure[j][mu]).sum::<f64>();
        let jet = sheet.jet_at(slice.row, j)?;
        let g = sheet.background.metric_matrix(&jet.x)?;
        let m = induced_metric(&jet, &g, dim, (slice.row, j))?;
        let mut tangential = [0.0; 4];
        for a in 0..2 {
            for b in 0..2 {
                let gx = linalg::quad(dim, &g, &jet.d[b], &w[j]);
                for mu in 0..dim {
                    tangential[mu] += jet.d[a][mu] * m.gamma_inv[a][b] * gx;
                }
            }
        }
        for mu in 0..dim {
            leak = leak.max((w[j][mu] - tangential[mu]).abs());
        }
    }
    Ok(SliceIntegral {
        value,
        normal_leak: leak,
    })
}

/// Flux `sum_j V^tau(row, j) w_sigma(j)` of a coordinate vector density.
pub fn row_flux(grid: &Grid2, density: &[[f64; 2]], row: usize) -> f64 {
    (0..grid.sigma.n)
        .map(|j| density[grid.node(row, j)][0] * grid.sigma.weight(j))
        .sum()
}

/// Flux through the open sigma edges between rows `r1..=r2`, outward.
pub fn edge_flux(grid: &Grid2, density: &[[f64; 2]], r1: usize, r2: usize) -> f64 {
    if grid.sigma.periodic {
        return 0.0;
    }
    let last = grid.sigma.n - 1;
    let mut sum = 0.0;
    for i in r1..=r2 {
        let w = if i == r1 || i == r2 {
            0.5 * grid.tau.spacing()
        } else {
            grid.tau.spacing()
        };
        sum += w * (density[grid.node(i, last)][1] - density[grid.node(i, 0)][1]);
    }
    sum
}

/// Divergence-theorem self-test for a coordinate vector density
/// `V^a = dens * v^a`: returns `(bulk, boundary)` where `bulk` integrates
/// `d_a V^a` over rows `r1..=r2` and `boundary` is the slice difference plus
/// open-edge flux.
pub fn divergence_theorem(
    grid: &Grid2,
    density: &[[f64; 2]],
    r1: usize,
    r2: usize,
) -> Result<(f64, f64)> {
    if r1 >= r2 || r2 >= grid.tau.n {
        return Err(Error::SliceOutsideDomain(r2 as f64));
    }
    let mut bulk = 0.0;
    for i in r1..=r2 {
        let wt = if i == r1 || i == r2 {
            0.5 * grid.tau.spacing()
        } else {
            grid.tau.spacing()
        };
        for j in 0..grid.sigma.n {
            let dt: [f64; 2] = grid.d(density, i, j, 0);
            let ds: [f64; 2] = grid.d(density, i, j, 1);
            bulk += (dt[0] + ds[1]) * wt * grid.sigma.weight(j);
        }
    }
    let boundary = row_flux(grid, density, r2) - row_flux(grid, density, r1)
        + edge_flux(grid, density, r1, r2);
    Ok((bulk, boundary))
}

pub type ChartWeight = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// One sheet of a multi-chart surface with its partition-of-unity weight.
#[derive(Clone)]
pub struct Chart {
    pub sheet: EmbeddingSheet,
    pub weight: ChartWeight,
}

/// A surface covered by one or more charts.
#[derive(Clone)]
pub struct Surface {
    pub name: String,
    pub charts: Vec<Chart>,
}

impl fmt::Debug for Surface {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Surface")
            .field("name", &self.name)
            .field("charts", &self.charts.iter().map(|c| &c.sheet).collect::<Vec<_>>())
            .finish()
    }
}

impl Surface {
    pub fn single(sheet: EmbeddingSheet) -> Self {
        Self {
            name: sheet.name.clone(),
            charts: vec![Chart {
                sheet,
                weight: Arc::new(|_, _| 1.0),
            }],
        }
    }

    pub fn primary(&self) -> &EmbeddingSheet {
        &self.charts[0].sheet
    }

    pub fn with_resolution(&self, n: usize) -> Result<Self> {
        Ok(Self {
            name: self.name.clone(),
            charts: self
                .charts
                .iter()
                .map(|c| {
                    Ok(Chart {
                        sheet: c.sheet.with_resolution(n, n)?,
                        weight: c.weight.clone(),
                    })
                })
                .collect::<Result<_>>()?,
        })
    }

    /// `sum_charts int f * w_chart dA`, with `f` evaluated per chart.
    pub fn integrate(&self, f: impl Fn(&EmbeddingSheet) -> Result<Vec<f64>>) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.charts {
            let vals = f(&c.sheet)?;
            let dens = c.sheet.densities()?;
            let grid = &c.sheet.grid;
            let w: Vec<f64> = (0..grid.len())
                .map(|k| {
                    let (i, j) = grid.ij(k);
                    let (t, s) = grid.params(i, j);
                    (c.weight)(t, s)
                })
                .collect();
            total += weighted_integral(grid, &dens, &vals, Some(&w))?;
        }
        Ok(total)
    }

    pub fn area(&self) -> Result<f64> {
        self.integrate(|s| Ok(vec![1.0; s.grid.len()]))
    }
}

/// C-infinity step: 0 for `t <= a`, 1 for `t >= b`.
pub fn smooth_step(t: f64, a: f64, b: f64) -> f64 {
    let s = ((t - a) / (b - a)).clamp(0.0, 1.0);
    let e = |x: f64| if x > 0.0 { (-1.0 / x).exp() } else { 0.0 };
    let (p, q) = (e(s), e(1.0 - s));
    if p + q == 0.0 {
        0.0
    } else {
        p / (p + q)
    }
}

/// Lower edge of the polar-cap cut used by the sphere charts.
pub const SPHERE_CUT: f64 = 0.2;

fn sphere_weights(u: Vec4) -> (f64, f64) {
    let lo = 0.3f64.sin().powi(2);
    let a1 = smooth_step(1.0 - u[2] * u[2], lo, 0.5);
    let a2 = smooth_step(1.0 - u[0] * u[0], lo, 0.5);
    (a1, a2)
}

fn chart_direction(rotated: bool, th: f64, ph: f64) -> Vec4 {
    let (st, ct) = th.sin_cos();
    let (sp, cp) = ph.sin_cos();
    if rotated {
        [ct, st * cp, st * sp, 0.0]
    } else {
        [st * cp, st * sp, ct, 0.0]
    }
}

fn jet_direction(rotated: bool, th: Jet2, ph: Jet2) -> [Jet2; 3] {
    let (st, ct, sp, cp) = (th.sin(), th.cos(), ph.sin(), ph.cos());
    if rotated {
        [ct, st * cp, st * sp]
    } else {
        [st * cp, st * sp, ct]
    }
}

fn sphere_grid(n: usize) -> Result<Grid2> {
    Ok(Grid2::new(
        Axis::open(SPHERE_CUT, PI - SPHERE_CUT, n)?,
        Axis::periodic(0.0, TAU, n)?,
    ))
}

/// A radial graph `x = r(u) u` over the unit sphere, covered by a polar
/// chart and a chart with poles on the x axis.
pub fn radial_surface(
    name: &str,
    n: usize,
    background: BackgroundMetric,
    radius: Arc<dyn Fn([Jet2; 3]) -> Jet2 + Send + Sync>,
) -> Result<Surface> {
    let grid = sphere_grid(n)?;
    let mut charts = Vec::new();
    for rotated in [false, true] {
        let r = radius.clone();
        let sheet = EmbeddingSheet::analytic(
            format!("{name}-{}", if rotated { "x" } else { "z" }),
            grid,
            background.clone(),
            move |th, ph| {
                let u = jet_direction(rotated, th, ph);
                let rr = r(u);
                [rr * u[0], rr * u[1], rr * u[2], Jet2::constant(0.0)]
            },
        );
        let weight: ChartWeight = Arc::new(move |th, ph| {
            let (a1, a2) = sphere_weights(chart_direction(rotated, th, ph));
            if rotated {
                a2 / (a1 + a2)
            } else {
                a1 / (a1 + a2)
            }
        });
        charts.push(Chart { sheet, weight });
    }
    Ok(Surface {
        name: name.into(),
        charts,
    })
}

pub fn unit_sphere(n: usize) -> Result<Surface> {
    radial_surface(
        "sphere",
        n,
        BackgroundMetric::euclidean(3),
        Arc::new(|_| Jet2::constant(1.0)),
    )
}

/// Unit sphere inside the `x3 = 0` hyperplane of Euclidean 4-space.
pub fn sphere_in_r4(n: usize) -> Result<Surface> {
    radial_surface(
        "sphere-r4",
        n,
        BackgroundMetric::euclidean(4),
        Arc::new(|_| Jet2::constant(1.0)),
    )
}

/// Seeded polynomial of degree <= 3 in the sphere direction, max |c| <= 1.
#[derive(Clone, Debug, PartialEq)]
pub struct SpherePolynomial {
    pub terms: Vec<([i32; 3], f64)>,
}

impl SpherePolynomial {
    pub fn seeded(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::new();
        for a in 0..=3 {
            for b in 0..=3 - a {
                for c in 0..=3 - a - b {
                    if a + b + c == 0 {
                        continue;
                    }
                    terms.push(([a, b, c], rng.gen_range(-1.0..1.0) / 6.0));
                }
            }
        }
        Self { terms }
    }

    pub fn eval(&self, u: [Jet2; 3]) -> Jet2 {
        let mut s = Jet2::constant(0.0);
        for (p, c) in &self.terms {
            s = s + (u[0].powi(p[0]) * u[1].powi(p[1]) * u[2].powi(p[2])).scale(*c);
        }
        s
    }
}

pub fn deformed_sphere(n: usize, seed: u64, amplitude: f64) -> Result<Surface> {
    let poly = SpherePolynomial::seeded(seed);
    radial_surface(
        "deformed-sphere",
        n,
        BackgroundMetric::euclidean(3),
        Arc::new(move |u| 1.0 + poly.eval(u).scale(amplitude)),
    )
}

/// Seeded low-order Fourier series in `(tau, sigma)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigSeries {
    /// `(k_tau, k_sigma, amplitude, phase)`
    pub terms: Vec<(i32, i32, f64, f64)>,
}

impl TrigSeries {
    pub fn seeded(seed: u64, max_k: i32) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut terms = Vec::new();
        for kt in 0..=max_k {
            for ks in -max_k..=max_k {
                if kt == 0 && ks <= 0 {
                    continue;
                }
                let amp = rng.gen_range(-1.0..1.0) / (1 + kt * kt + ks * ks) as f64;
                let ph = rng.gen_range(0.0..TAU);
                terms.push((kt, ks, amp, ph));
            }
        }
        Self { terms }
    }

    pub fn eval(&self, t: Jet2, s: Jet2) -> Jet2 {
        let mut out = Jet2::constant(0.0);
        for &(kt, ks, a, ph) in &self.terms {
            out = out + (t.scale(kt as f64) + s.scale(ks as f64) + ph).cos().scale(a);
        }
        out
    }

    pub fn value(&self, t: f64, s: f64) -> f64 {
        self.eval(Jet2::constant(t), Jet2::constant(s)).v
    }
}

/// Flat patch `(tau, sigma, 0)` in Euclidean 3-space over `[lo, hi]^2`.
pub fn plane(n: usize, lo: f64, hi: f64) -> Result<EmbeddingSheet> {
    let grid = Grid2::new(Axis::open(lo, hi, n)?, Axis::open(lo, hi, n)?);
    Ok(EmbeddingSheet::analytic(
        "plane",
        grid,
        BackgroundMetric::euclidean(3),
        |t, s| [t, s, Jet2::constant(0.0), Jet2::constant(0.0)],
    ))
}

/// Catenoid `(cosh v cos u, cosh v sin u, v)` with `tau = v in [-1, 1]`,
/// `sigma = u` periodic.
pub fn catenoid(n: usize) -> Result<EmbeddingSheet> {
    let grid = Grid2::new(Axis::open(-1.0, 1.0, n)?, Axis::periodic(0.0, TAU, n)?);
    Ok(EmbeddingSheet::analytic(
        "catenoid",
        grid,
        BackgroundMetric::euclidean(3),
        |v, u| {
            let c = v.cosh();
            [c * u.cos(), c * u.sin(), v, Jet2::constant(0.0)]
        },
    ))
}

/// Flat torus `(cos tau, sin tau, cos sigma, sin sigma)` in Euclidean 4-space.
pub fn flat_torus(n: usize) -> Result<EmbeddingSheet> {
    let grid = Grid2::new(Axis::periodic(0.0, TAU, n)?, Axis::periodic(0.0, TAU, n)?);
    Ok(EmbeddingSheet::analytic(
        "flat-torus",
        grid,
        BackgroundMetric::euclidean(4),
        |t, s| [t.cos(), t.sin(), s.cos(), s.sin()],
    ))
}

/// Rigidly rotating open string `(tau, cos s cos tau, cos s sin tau, 0)` in
/// Minkowski space, with the null endpoints cut away.
pub fn rotating_string(n: usize) -> Result<EmbeddingSheet> {
    let grid = Grid2::new(
        Axis::open(-0.5, 0.5, n)?,
        Axis::open(0.4, PI - 0.4, n)?,
    );
    Ok(EmbeddingSheet::analytic(
        "rotating-string",
        grid,
        BackgroundMetric::minkowski(4),
        |t, s| {
            let c = s.cos();
            [t, c * t.cos(), c * t.sin(), Jet2::constant(0.0)]
        },
    ))
}

/// Static closed string `(tau, sigma, 0, 0)` in Minkowski space.
pub fn static_string(n: usize) -> Result<EmbeddingSheet> {
    let grid = Grid2::new(Axis::open(-1.0, 1.0, n)?, Axis::periodic(0.0, TAU, n)?);
    Ok(EmbeddingSheet::analytic(
        "static-string",
        grid,
        BackgroundMetric::minkowski(4),
        |t, s| [t, s, Jet2::constant(0.0), Jet2::constant(0.0)],
    ))
}

/// Doubly periodic graph `(tau, sigma, a f, a g)` in Euclidean 4-space.
pub fn graph_surface(n: usize, seed: u64, amplitude: f64) -> Result<EmbeddingSheet> {
    let f = TrigSeries::seeded(seed, 2);
    let g = TrigSeries::seeded(seed.wrapping_add(0x9e37_79b9), 2);
    let grid = Grid2::new(Axis::periodic(0.0, TAU, n)?, Axis::periodic(0.0, TAU, n)?);
    Ok(EmbeddingSheet::analytic(
        "graph-surface",
        grid,
        BackgroundMetric::euclidean(4),
        move |t, s| {
            [
                t,
                s,
                f.eval(t, s).scale(amplitude),
                g.eval(t, s).scale(amplitude),
            ]
        },
    ))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SheetKind {
    Plane,
    Sphere,
    SphereR4,
    DeformedSphere,
    Catenoid,
    FlatTorus,
    RotatingString,
    StaticString,
    GraphSurface,
}

impl SheetKind {
    pub const ALL: [SheetKind; 9] = [
        SheetKind::Plane,
        SheetKind::Sphere,
        SheetKind::SphereR4,
        SheetKind::DeformedSphere,
        SheetKind::Catenoid,
        SheetKind::FlatTorus,
        SheetKind::RotatingString,
        SheetKind::StaticString,
        SheetKind::GraphSurface,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SheetKind::Plane => "plane",
            SheetKind::Sphere => "sphere",
            SheetKind::SphereR4 => "sphere-r4",
            SheetKind::DeformedSphere => "deformed-sphere",
            SheetKind::Catenoid => "catenoid",
            SheetKind::FlatTorus => "flat-torus",
            SheetKind::RotatingString => "rotating-string",
            SheetKind::StaticString => "static-string",
            SheetKind::GraphSurface => "graph-surface",
        }
    }

    /// Builds the catalog surface at resolution `n`; `seed` and `amplitude`
    /// only affect the randomized members.
    pub fn build(&self, n: usize, seed: u64, amplitude: f64) -> Result<Surface> {
        Ok(match self {
            SheetKind::Plane => Surface::single(plane(n, 0.0, 1.0)?),
            SheetKind::Sphere => unit_sphere(n)?,
            SheetKind::SphereR4 => sphere_in_r4(n)?,
            SheetKind::DeformedSphere => deformed_sphere(n, seed, amplitude)?,
            SheetKind::Catenoid => Surface::single(catenoid(n)?),
            SheetKind::FlatTorus => Surface::single(flat_torus(n)?),
            SheetKind::RotatingString => Surface::single(rotating_string(n)?),
            SheetKind::StaticString => Surface::single(static_string(n)?),
            SheetKind::GraphSurface => Surface::single(graph_surface(n, seed, amplitude)?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plane_jet() {
        let p = plane(8, 0.0, 1.0).unwrap();
        let j = p.jet_at(3, 4).unwrap();
        assert_eq!(j.d[0], [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(j.dd, [[0.0; 4]; 3]);
        let m = induced_metric(&j, &linalg::identity(3), 3, (3, 4)).unwrap();
        assert_eq!(m.gamma, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(m.dens, 1.0);
    }

    #[test]
    fn sphere_chart_jet_and_metric() {
        let s = unit_sphere(16).unwrap();
        let j = s.charts[0].sheet.jet_at_params(PI / 2.0, 0.0).unwrap();
        assert!((j.d[0][0]).abs() < 1e-15 && (j.d[0][2] + 1.0).abs() < 1e-15);
        let th = 0.7;
        let j = s.charts[0].sheet.jet_at_params(th, 1.1).unwrap();
        let m = induced_metric(&j, &linalg::identity(3), 3, (0, 0)).unwrap();
        assert!((m.gamma[0][0] - 1.0).abs() < 1e-14);
        assert!((m.gamma[1][1] - th.sin().powi(2)).abs() < 1e-14);
        assert!(m.gamma[0][1].abs() < 1e-14);
    }

    #[test]
    fn static_string_metric() {
        let s = static_string(8).unwrap();
        let m = &s.induced_metrics().unwrap()[10];
        assert_eq!(m.gamma, [[-1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(m.dens, 1.0);
        assert!(m.is_lorentzian());
    }

    #[test]
    fn degenerate_surface_is_rejected() {
        let grid = Grid2::new(Axis::open(0.0, 1.0, 5).unwrap(), Axis::open(0.0, 1.0, 5).unwrap());
        let s = EmbeddingSheet::analytic("line", grid, BackgroundMetric::euclidean(3), |t, _| {
            [t, Jet2::constant(0.0), Jet2::constant(0.0), Jet2::constant(0.0)]
        });
        assert!(matches!(s.densities(), Err(Error::DegenerateSurface { .. })));
    }

    fn sampled_jet_error(n: usize) -> f64 {
        let sheet = unit_sphere(n).unwrap().charts[0].sheet.clone();
        let grid = sheet.sampled();
        let mut err: f64 = 0.0;
        for k in 0..sheet.grid.len() {
            let (i, j) = sheet.grid.ij(k);
            let a = sheet.jet_at(i, j).unwrap();
            let b = grid.jet_at(i, j).unwrap();
            for mu in 0..3 {
                err = err.max((a.d[0][mu] - b.d[0][mu]).abs());
                err = err.max((a.d[1][mu] - b.d[1][mu]).abs());
                for q in 0..3 {
                    err = err.max((a.dd[q][mu] - b.dd[q][mu]).abs());
                }
            }
        }
        err
    }

    #[test]
    fn sampled_sphere_jets_converge_at_second_order() {
        let (a, b) = (sampled_jet_error(32), sampled_jet_error(64));
        assert!((a / b).log2() > 1.8, "{a} {b}");
    }

    #[test]
    fn sphere_area_and_partition_of_unity() {
        let s = unit_sphere(64).unwrap();
        let area = s.area().unwrap();
        assert!((area / (4.0 * PI) - 1.0).abs() < 1e-3, "{area}");
        for (th, ph) in [(0.3, 0.1), (1.5, 2.0), (2.8, 4.0)] {
            let u = chart_direction(false, th, ph);
            let (a1, a2) = sphere_weights(u);
            assert!(a1 + a2 > 0.0);
        }
    }

    #[test]
    fn torus_area_is_exact() {
        let t = flat_torus(16).unwrap();
        let a = surface_integral(&t, &vec![1.0; t.grid.len()]).unwrap();
        assert!((a - 4.0 * PI * PI).abs() < 1e-10);
    }

    #[test]
    fn constant_timelike_flux_on_static_string() {
        let s = static_string(16).unwrap();
        let sl = CauchySlice::new(&s, 0.0).unwrap();
        let w = vec![[2.0, 0.0, 0.0, 0.0]; 16];
        let r = slice_integral(&s, &sl, &w).unwrap();
        assert!((r.value - 2.0 * TAU).abs() < 1e-12);
        assert!(r.normal_leak < 1e-14);
        assert_eq!(slice_integral(&s, &sl, &vec![[0.0; 4]; 16]).unwrap().value, 0.0);
        assert!(matches!(
            CauchySlice::new(&s, 3.0),
            Err(Error::SliceOutsideDomain(_))
        ));
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cat.csv");
        let c = catenoid(8).unwrap();
        c.write_csv(&path).unwrap();
        let back = EmbeddingSheet::from_csv(&path, c.grid, c.background.clone()).unwrap();
        for k in 0..c.grid.len() {
            let (i, j) = c.grid.ij(k);
            assert_eq!(back.point(i, j), c.point(i, j));
        }
    }
}
