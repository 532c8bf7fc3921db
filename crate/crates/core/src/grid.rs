//! Uniform parameter grids and second-order finite-difference stencils.
//!
//! Periodic axes use `h = L / N` and central differences everywhere.
//! Open axes use `h = L / (N - 1)`, central differences in the interior and
//! one-sided second-order formulas at the two end nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values that can be combined linearly by a stencil.
pub trait Linear: Copy {
    fn zero() -> Self;
    fn add_scaled(&mut self, a: f64, other: &Self);
}

impl Linear for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        *self += a * other;
    }
}

impl<V: Linear, const K: usize> Linear for [V; K] {
    fn zero() -> Self {
        [V::zero(); K]
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        for (s, o) in self.iter_mut().zip(other) {
            s.add_scaled(a, o);
        }
    }
}

/// Up to four weighted node offsets along one axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stencil {
    pub idx: [usize; 4],
    pub w: [f64; 4],
    pub len: usize,
}

impl Stencil {
    fn new(entries: &[(usize, f64)]) -> Self {
        let mut s = Stencil {
            idx: [0; 4],
            w: [0.0; 4],
            len: entries.len(),
        };
        for (k, (i, w)) in entries.iter().enumerate() {
            s.idx[k] = *i;
            s.w[k] = *w;
        }
        s
    }

    pub fn apply<V: Linear>(&self, f: impl Fn(usize) -> V) -> V {
        let mut out = V::zero();
        for k in 0..self.len {
            out.add_scaled(self.w[k], &f(self.idx[k]));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub periodic: bool,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, n: usize, periodic: bool) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidParameter(format!("empty axis [{lo}, {hi}]")));
        }
        let min = if periodic { 3 } else { 4 };
        if n < min {
            return Err(Error::StencilWidth(format!(
                "axis with {n} nodes (need at least {min})"
            )));
        }
        Ok(Self { lo, hi, n, periodic })
    }

    pub fn periodic(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(lo, hi, n, true)
    }

    pub fn open(lo: f64, hi: f64, n: usize) -> Result<Self> {
        Self::new(lo, hi, n, false)
    }

    pub fn spacing(&self) -> f64 {
        if self.periodic {
            (self.hi - self.lo) / self.n as f64
        } else {
            (self.hi - self.lo) / (self.n - 1) as f64
        }
    }

    pub fn coord(&self, k: usize) -> f64 {
        self.lo + k as f64 * self.spacing()
    }

    fn wrap(&self, k: isize) -> usize {
        k.rem_euclid(self.n as isize) as usize
    }

    /// First-derivative stencil at node `k`.
    pub fn d1(&self, k: usize) -> Stencil {
        let h = self.spacing();
        let c = 1.0 / (2.0 * h);
        if self.periodic {
            let ki = k as isize;
            return Stencil::new(&[(self.wrap(ki - 1), -c), (self.wrap(ki + 1), c)]);
        }
        let n = self.n;
        if k == 0 {
            Stencil::new(&[(0, -3.0 * c), (1, 4.0 * c), (2, -c)])
        } else if k == n - 1 {
            Stencil::new(&[(n - 1, 3.0 * c), (n - 2, -4.0 * c), (n - 3, c)])
        } else {
            Stencil::new(&[(k - 1, -c), (k + 1, c)])
        }
    }

    /// Second-derivative stencil at node `k`.
    pub fn d2(&self, k: usize) -> Stencil {
        let h = self.spacing();
        let c = 1.0 / (h * h);
        if self.periodic {
            let ki = k as isize;
            return Stencil::new(&[
                (self.wrap(ki - 1), c),
                (k, -2.0 * c),
                (self.wrap(ki + 1), c),
            ]);
        }
        let n = self.n;
        if k == 0 {
            Stencil::new(&[(0, 2.0 * c), (1, -5.0 * c), (2, 4.0 * c), (3, -c)])
        } else if k == n - 1 {
            Stencil::new(&[
                (n - 1, 2.0 * c),
                (n - 2, -5.0 * c),
                (n - 3, 4.0 * c),
                (n - 4, -c),
            ])
        } else {
            Stencil::new(&[(k - 1, c), (k, -2.0 * c), (k + 1, c)])
        }
    }

    /// Trapezoid quadrature weight of node `k`.
    pub fn weight(&self, k: usize) -> f64 {
        let h = self.spacing();
        if !self.periodic && (k == 0 || k == self.n - 1) {
            0.5 * h
        } else {
            h
        }
    }

    /// True if node `k` is at least `margin` nodes away from an open end.
    pub fn is_interior(&self, k: usize, margin: usize) -> bool {
        self.periodic || (k >= margin && k + margin < self.n)
    }

    /// Index of the node whose coordinate is closest to `t`, if `t` lies in
    /// the axis range.
    pub fn nearest(&self, t: f64) -> Option<usize> {
        let h = self.spacing();
        let top = if self.periodic { self.hi - h } else { self.hi };
        if !(t >= self.lo - 1e-9 * h && t <= top + 1e-9 * h) {
            return None;
        }
        Some((((t - self.lo) / h).round() as usize).min(self.n - 1))
    }
}

/// A tensor-product grid over `(tau, sigma)`; node `i * n_sigma + j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2 {
    pub tau: Axis,
    pub sigma: Axis,
}

impl Grid2 {
    pub fn new(tau: Axis, sigma: Axis) -> Self {
        Self { tau, sigma }
    }

    pub fn len(&self) -> usize {
        self.tau.n * self.sigma.n
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn node(&self, i: usize, j: usize) -> usize {
        i * self.sigma.n + j
    }

    pub fn ij(&self, node: usize) -> (usize, usize) {
        (node / self.sigma.n, node % self.sigma.n)
    }

    pub fn params(&self, i: usize, j: usize) -> (f64, f64) {
        (self.tau.coord(i), self.sigma.coord(j))
    }

    pub fn axis(&self, a: usize) -> &Axis {
        if a == 0 {
            &self.tau
        } else {
            &self.sigma
        }
    }

    pub fn spacing(&self) -> f64 {
        self.tau.spacing().max(self.sigma.spacing())
    }

    /// Quadrature weight `w_tau(i) * w_sigma(j)`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.tau.weight(i) * self.sigma.weight(j)
    }

    pub fn is_interior(&self, i: usize, j: usize, margin: usize) -> bool {
        self.tau.is_interior(i, margin) && self.sigma.is_interior(j, margin)
    }

    /// Nodes at least `margin` away from every open edge.
    pub fn interior_nodes(&self, margin: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&k| {
                let (i, j) = self.ij(k);
                self.is_interior(i, j, margin)
            })
            .collect()
    }

    /// Nodes whose parameters lie at least `fraction` of the axis length
    /// away from every open edge.
    pub fn core_nodes(&self, fraction: f64) -> Vec<usize> {
        let inside = |ax: &Axis, k: usize| {
            let m = fraction * (ax.hi - ax.lo);
            let x = ax.coord(k);
            ax.periodic || (x >= ax.lo + m - 1e-12 && x <= ax.hi - m + 1e-12)
        };
        (0..self.len())
            .filter(|&k| {
                let (i, j) = self.ij(k);
                inside(&self.tau, i) && inside(&self.sigma, j)
            })
            .collect()
    }

    /// First derivative of a node field along axis `a` at `(i, j)`.
    pub fn d<V: Linear>(&self, field: &[V], i: usize, j: usize, a: usize) -> V {
        if a == 0 {
            self.tau.d1(i).apply(|k| field[self.node(k, j)])
        } else {
            self.sigma.d1(j).apply(|k| field[self.node(i, k)])
        }
    }

    /// Second derivative `d_a d_b` of a node field at `(i, j)`.
    pub fn dd<V: Linear>(&self, field: &[V], i: usize, j: usize, a: usize, b: usize) -> V {
        match (a, b) {
            (0, 0) => self.tau.d2(i).apply(|k| field[self.node(k, j)]),
            (1, 1) => self.sigma.d2(j).apply(|k| field[self.node(i, k)]),
            _ => self
                .tau
                .d1(i)
                .apply(|k| self.sigma.d1(j).apply(|l| field[self.node(k, l)])),
        }
    }

    /// Both first derivatives of a node field.
    pub fn grad<V: Linear>(&self, field: &[V], node: usize) -> [V; 2] {
        let (i, j) = self.ij(node);
        [self.d(field, i, j, 0), self.d(field, i, j, 1)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_error(n: usize) -> f64 {
        let ax = Axis::open(0.0, 1.0, n).unwrap();
        let f: Vec<f64> = (0..n).map(|k| (2.0 * ax.coord(k)).sin()).collect();
        (0..n)
            .map(|k| {
                let x = ax.coord(k);
                let d1 = ax.d1(k).apply(|m| f[m]) - 2.0 * (2.0 * x).cos();
                let d2 = ax.d2(k).apply(|m| f[m]) + 4.0 * (2.0 * x).sin();
                d1.abs().max(d2.abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn stencils_are_second_order_including_ends() {
        let (a, b) = (open_error(33), open_error(65));
        let order = (a / b).log2();
        assert!(order > 1.8, "order {order}");
    }

    #[test]
    fn central_differences_exact_on_quadratics() {
        let ax = Axis::open(-1.0, 2.0, 7).unwrap();
        let f: Vec<f64> = (0..7).map(|k| 3.0 * ax.coord(k).powi(2) - ax.coord(k)).collect();
        for k in 0..7 {
            let x = ax.coord(k);
            assert!((ax.d1(k).apply(|m| f[m]) - (6.0 * x - 1.0)).abs() < 1e-12);
            assert!((ax.d2(k).apply(|m| f[m]) - 6.0).abs() < 1e-10);
        }
    }

    #[test]
    fn periodic_weights_sum_to_length() {
        let ax = Axis::periodic(0.0, std::f64::consts::TAU, 10).unwrap();
        let s: f64 = (0..10).map(|k| ax.weight(k)).sum();
        assert!((s - std::f64::consts::TAU).abs() < 1e-14);
        let op = Axis::open(0.0, 2.0, 9).unwrap();
        let s: f64 = (0..9).map(|k| op.weight(k)).sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn mixed_derivative_on_grid() {
        let g = Grid2::new(
            Axis::open(0.0, 1.0, 21).unwrap(),
            Axis::periodic(0.0, std::f64::consts::TAU, 32).unwrap(),
        );
        let f: Vec<f64> = (0..g.len())
            .map(|k| {
                let (i, j) = g.ij(k);
                let (t, s) = g.params(i, j);
                t * t * s.sin()
            })
            .collect();
        let (t, s) = g.params(0, 5);
        let exact = 2.0 * t * s.cos();
        let approx = g.dd(&f, 0, 5, 0, 1);
        assert!((approx - exact).abs() < 1e-2);
    }

    #[test]
    fn too_few_nodes_is_rejected() {
        assert!(Axis::open(0.0, 1.0, 3).is_err());
        assert!(Axis::periodic(0.0, 1.0, 2).is_err());
    }
}
