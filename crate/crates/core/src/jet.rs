//! Second-order forward-mode jets in the two sheet parameters `(tau, sigma)`.
//!
//! A [`Jet2`] carries a value, its two first partials and the three distinct
//! second partials, so analytic embeddings produce exact derivatives at
//! every node without finite differencing.

use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Jet2 {
    pub v: f64,
    /// `[d/dtau, d/dsigma]`
    pub d: [f64; 2],
    /// `[d2/dtau2, d2/dtau dsigma, d2/dsigma2]`
    pub h: [f64; 3],
}

impl Jet2 {
    pub const fn constant(v: f64) -> Self {
        Self {
            v,
            d: [0.0; 2],
            h: [0.0; 3],
        }
    }

    /// The independent variable along parameter `axis` (0 = tau, 1 = sigma).
    pub fn var(v: f64, axis: usize) -> Self {
        let mut d = [0.0; 2];
        d[axis] = 1.0;
        Self { v, d, h: [0.0; 3] }
    }

    /// Second partial `d2 / d(axis a) d(axis b)`.
    pub fn second(&self, a: usize, b: usize) -> f64 {
        self.h[a + b]
    }

    /// Applies a scalar function given its value and first two derivatives.
    fn chain(self, f: f64, df: f64, d2f: f64) -> Self {
        let d = [df * self.d[0], df * self.d[1]];
        let h = [
            d2f * self.d[0] * self.d[0] + df * self.h[0],
            d2f * self.d[0] * self.d[1] + df * self.h[1],
            d2f * self.d[1] * self.d[1] + df * self.h[2],
        ];
        Self { v: f, d, h }
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }

    pub fn ln(self) -> Self {
        self.chain(self.v.ln(), 1.0 / self.v, -1.0 / (self.v * self.v))
    }

    pub fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.v))
    }

    pub fn sinh(self) -> Self {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.chain(s, c, s)
    }

    pub fn cosh(self) -> Self {
        let (s, c) = (self.v.sinh(), self.v.cosh());
        self.chain(c, s, c)
    }

    pub fn powi(self, n: i32) -> Self {
        let f = self.v.powi(n);
        let df = if n == 0 { 0.0 } else { n as f64 * self.v.powi(n - 1) };
        let d2f = if n == 0 || n == 1 { 0.0 } else { (n * (n - 1)) as f64 * self.v.powi(n - 2) };
        self.chain(f, df, d2f)
    }

    pub fn scale(self, a: f64) -> Self {
        Self {
            v: a * self.v,
            d: [a * self.d[0], a * self.d[1]],
            h: [a * self.h[0], a * self.h[1], a * self.h[2]],
        }
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v + o.v,
            d: [self.d[0] + o.d[0], self.d[1] + o.d[1]],
            h: [self.h[0] + o.h[0], self.h[1] + o.h[1], self.h[2] + o.h[2]],
        }
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        self + (-o)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        Jet2 {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
            ],
            h: [
                self.h[0] * o.v + 2.0 * self.d[0] * o.d[0] + self.v * o.h[0],
                self.h[1] * o.v + self.d[0] * o.d[1] + self.d[1] * o.d[0] + self.v * o.h[1],
                self.h[2] * o.v + 2.0 * self.d[1] * o.d[1] + self.v * o.h[2],
            ],
        }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, o: Jet2) -> Jet2 {
        let inv = o.chain(1.0 / o.v, -1.0 / (o.v * o.v), 2.0 / (o.v * o.v * o.v));
        self * inv
    }
}

impl Add<f64> for Jet2 {
    type Output = Jet2;
    fn add(mut self, o: f64) -> Jet2 {
        self.v += o;
        self
    }
}

impl Sub<f64> for Jet2 {
    type Output = Jet2;
    fn sub(mut self, o: f64) -> Jet2 {
        self.v -= o;
        self
    }
}

impl Mul<f64> for Jet2 {
    type Output = Jet2;
    fn mul(self, o: f64) -> Jet2 {
        self.scale(o)
    }
}

impl Mul<Jet2> for f64 {
    type Output = Jet2;
    fn mul(self, o: Jet2) -> Jet2 {
        o.scale(self)
    }
}

impl Add<Jet2> for f64 {
    type Output = Jet2;
    fn add(self, o: Jet2) -> Jet2 {
        o + self
    }
}

impl Sub<Jet2> for f64 {
    type Output = Jet2;
    fn sub(self, o: Jet2) -> Jet2 {
        (-o) + self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn jets_match_finite_differences(t0 in -1.0f64..1.0, s0 in -1.0f64..1.0) {
            let j = f(Jet2::var(t0, 0), Jet2::var(s0, 1));
            let v = |t: f64, s: f64| f(Jet2::constant(t), Jet2::constant(s)).v;
            let e = 1e-4;
            let dt = (v(t0 + e, s0) - v(t0 - e, s0)) / (2.0 * e);
            let ds = (v(t0, s0 + e) - v(t0, s0 - e)) / (2.0 * e);
            let dts = (v(t0 + e, s0 + e) - v(t0 + e, s0 - e) - v(t0 - e, s0 + e) + v(t0 - e, s0 - e)) / (4.0 * e * e);
            prop_assert!((j.d[0] - dt).abs() < 1e-6);
            prop_assert!((j.d[1] - ds).abs() < 1e-6);
            prop_assert!((j.h[1] - dts).abs() < 1e-5);
        }

        #[test]
        fn integer_powers_match_products(x in -2.0f64..2.0, n in 0i32..5) {
            let v = Jet2::var(x, 0);
            let mut p = Jet2::constant(1.0);
            for _ in 0..n {
                p = p * v;
            }
            let q = v.powi(n);
            prop_assert!((p.v - q.v).abs() < 1e-10 && (p.d[0] - q.d[0]).abs() < 1e-10 && (p.h[0] - q.h[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn powi_at_zero_is_finite() {
        let x = Jet2::var(0.0, 0);
        for n in 0..4 {
            let j = x.powi(n);
            assert!(j.v.is_finite() && j.d.iter().all(|d| d.is_finite()), "n = {n}: {j:?}");
        }
        assert_eq!(x.powi(0).v, 1.0);
    }

    fn f(t: Jet2, s: Jet2) -> Jet2 {
        (t * s).sin() + (t.cosh() / (1.0 + s * s)) + (t * 0.5 + s).exp().sqrt()
    }

    #[test]
    fn matches_finite_differences() {
        let (t0, s0) = (0.3, -0.7);
        let j = f(Jet2::var(t0, 0), Jet2::var(s0, 1));
        let g = |t: f64, s: f64| f(Jet2::constant(t), Jet2::constant(s)).v;
        let e = 1e-4;
        let dt = (g(t0 + e, s0) - g(t0 - e, s0)) / (2.0 * e);
        let ds = (g(t0, s0 + e) - g(t0, s0 - e)) / (2.0 * e);
        let dts = (g(t0 + e, s0 + e) - g(t0 + e, s0 - e) - g(t0 - e, s0 + e) + g(t0 - e, s0 - e))
            / (4.0 * e * e);
        let dss = (g(t0, s0 + e) - 2.0 * g(t0, s0) + g(t0, s0 - e)) / (e * e);
        assert!((j.d[0] - dt).abs() < 1e-7);
        assert!((j.d[1] - ds).abs() < 1e-7);
        assert!((j.h[1] - dts).abs() < 1e-5);
        assert!((j.h[2] - dss).abs() < 1e-5);
    }
}
