//! Dense small-tensor algebra over index spaces of dimension at most four.
//!
//! A [`TensorValue`] stores `dim^rank` components in row-major order, the
//! first slot being the leftmost index as it is printed in the formulas that
//! use it. Every slot carries a [`Variance`] flag; contraction is only
//! defined between slots of opposite variance, and [`raise_lower`] moves a
//! slot between the two with a [`MetricValue`].

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat4, Vec4};
use crate::tolerances::DEGENERATE_DET;

pub const MAX_DIM: usize = 4;
pub const MAX_RANK: usize = 4;
const CAP: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variance {
    /// Lower index.
    Co,
    /// Upper index.
    Contra,
}

impl Variance {
    pub fn flip(self) -> Self {
        match self {
            Variance::Co => Variance::Contra,
            Variance::Contra => Variance::Co,
        }
    }
}

use Variance::{Co, Contra};

#[derive(Clone, PartialEq)]
pub struct TensorValue {
    dim: usize,
    rank: usize,
    variance: [Variance; MAX_RANK],
    data: [f64; CAP],
}

impl fmt::Debug for TensorValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TensorValue")
            .field("dim", &self.dim)
            .field("variance", &self.variance())
            .field("components", &self.components())
            .finish()
    }
}

fn pow(dim: usize, rank: usize) -> usize {
    dim.pow(rank as u32)
}

impl TensorValue {
    /// Zero tensor with the given slot variances.
    ///
    /// Panics if `dim` or the rank exceed the static limits.
    pub fn zeros(dim: usize, variance: &[Variance]) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dim {dim} out of range");
        assert!(variance.len() <= MAX_RANK, "rank {} too large", variance.len());
        let mut v = [Co; MAX_RANK];
        v[..variance.len()].copy_from_slice(variance);
        Self {
            dim,
            rank: variance.len(),
            variance: v,
            data: [0.0; CAP],
        }
    }

    pub fn scalar(dim: usize, value: f64) -> Self {
        let mut t = Self::zeros(dim, &[]);
        t.data[0] = value;
        t
    }

    pub fn vector(dim: usize, variance: Variance, comps: &[f64]) -> Self {
        let mut t = Self::zeros(dim, &[variance]);
        t.data[..dim].copy_from_slice(&comps[..dim]);
        t
    }

    pub fn matrix(dim: usize, variance: [Variance; 2], m: &Mat4) -> Self {
        let mut t = Self::zeros(dim, &variance);
        for i in 0..dim {
            for j in 0..dim {
                t.data[i * dim + j] = m[i][j];
            }
        }
        t
    }

    /// Mixed identity `delta^mu_nu`.
    pub fn identity(dim: usize) -> Self {
        Self::matrix(dim, [Contra, Co], &linalg::identity(dim))
    }

    pub fn from_fn(dim: usize, variance: &[Variance], f: impl Fn(&[usize]) -> f64) -> Self {
        let mut t = Self::zeros(dim, variance);
        let mut idx = [0usize; MAX_RANK];
        for k in 0..t.len() {
            t.unflatten(k, &mut idx);
            t.data[k] = f(&idx[..t.rank]);
        }
        t
    }

    /// Builds a tensor from a flat component slice of length `dim^rank`.
    pub fn from_components(dim: usize, variance: &[Variance], comps: &[f64]) -> Result<Self> {
        let mut t = Self::zeros(dim, variance);
        if comps.len() != t.len() {
            return Err(Error::DimMismatch {
                expected: t.len(),
                found: comps.len(),
            });
        }
        t.data[..comps.len()].copy_from_slice(comps);
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn variance(&self) -> &[Variance] {
        &self.variance[..self.rank]
    }

    pub fn len(&self) -> usize {
        pow(self.dim, self.rank)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn components(&self) -> &[f64] {
        &self.data[..self.len()]
    }

    pub fn components_mut(&mut self) -> &mut [f64] {
        let n = self.len();
        &mut self.data[..n]
    }

    fn offset(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.rank);
        idx.iter().fold(0, |acc, &i| acc * self.dim + i)
    }

    fn unflatten(&self, mut k: usize, idx: &mut [usize; MAX_RANK]) {
        for s in (0..self.rank).rev() {
            idx[s] = k % self.dim;
            k /= self.dim;
        }
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: f64) {
        let o = self.offset(idx);
        self.data[o] = value;
    }

    pub fn value(&self) -> f64 {
        self.data[0]
    }

    /// Rank-1 components as a fixed array.
    pub fn as_vec4(&self) -> Vec4 {
        let mut v = [0.0; 4];
        v[..self.dim].copy_from_slice(&self.data[..self.dim]);
        v
    }

    /// Rank-2 components as a fixed matrix.
    pub fn as_mat4(&self) -> Mat4 {
        let mut m = [[0.0; 4]; 4];
        for (i, row) in m.iter_mut().enumerate().take(self.dim) {
            for (j, v) in row.iter_mut().enumerate().take(self.dim) {
                *v = self.data[i * self.dim + j];
            }
        }
        m
    }

    pub fn max_abs(&self) -> f64 {
        self.components().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&self, a: f64) -> Self {
        let mut t = self.clone();
        t.components_mut().iter_mut().for_each(|v| *v *= a);
        t
    }

    fn check_same_shape(&self, other: &Self) {
        assert_eq!(self.dim, other.dim, "dimension mismatch");
        assert_eq!(self.variance(), other.variance(), "variance mismatch");
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        self.check_same_shape(other);
        let n = self.len();
        for k in 0..n {
            self.data[k] += a * other.data[k];
        }
    }

    pub fn outer(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        if self.rank + other.rank > MAX_RANK {
            return Err(Error::InvalidParameter(format!(
                "outer product rank {} exceeds {MAX_RANK}",
                self.rank + other.rank
            )));
        }
        let mut var = self.variance().to_vec();
        var.extend_from_slice(other.variance());
        let mut t = Self::zeros(self.dim, &var);
        let m = other.len();
        for i in 0..self.len() {
            for j in 0..m {
                t.data[i * m + j] = self.data[i] * other.data[j];
            }
        }
        Ok(t)
    }

    /// Contraction of slots `a` and `b` (opposite variance required).
    pub fn contract(&self, a: usize, b: usize) -> Result<Self> {
        let (a, b) = (a.min(b), a.max(b));
        if b >= self.rank || a == b {
            return Err(Error::InvalidSlot {
                slot: b,
                rank: self.rank,
            });
        }
        if self.variance[a] == self.variance[b] {
            return Err(Error::ContractVariance { a, b });
        }
        let var: Vec<Variance> = (0..self.rank)
            .filter(|s| *s != a && *s != b)
            .map(|s| self.variance[s])
            .collect();
        let mut out = Self::zeros(self.dim, &var);
        let mut idx = [0usize; MAX_RANK];
        let mut full = [0usize; MAX_RANK];
        for k in 0..out.len() {
            out.unflatten(k, &mut idx);
            let mut r = 0;
            for s in 0..self.rank {
                if s != a && s != b {
                    full[s] = idx[r];
                    r += 1;
                }
            }
            let mut sum = 0.0;
            for i in 0..self.dim {
                full[a] = i;
                full[b] = i;
                sum += self.data[self.offset(&full[..self.rank])];
            }
            out.data[k] = sum;
        }
        Ok(out)
    }

    /// Contraction of slot `i` of `self` with slot `j` of `other`; the result
    /// lists the remaining slots of `self` followed by those of `other`.
    pub fn contract_with(&self, i: usize, other: &Self, j: usize) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        if i >= self.rank {
            return Err(Error::InvalidSlot {
                slot: i,
                rank: self.rank,
            });
        }
        if j >= other.rank {
            return Err(Error::InvalidSlot {
                slot: j,
                rank: other.rank,
            });
        }
        if self.variance[i] == other.variance[j] {
            return Err(Error::ContractVariance { a: i, b: j });
        }
        let mut var: Vec<Variance> = (0..self.rank)
            .filter(|s| *s != i)
            .map(|s| self.variance[s])
            .collect();
        var.extend((0..other.rank).filter(|s| *s != j).map(|s| other.variance[s]));
        if var.len() > MAX_RANK {
            return Err(Error::InvalidParameter("contraction result rank too large".into()));
        }
        let mut out = Self::zeros(self.dim, &var);
        let mut idx = [0usize; MAX_RANK];
        let mut fa = [0usize; MAX_RANK];
        let mut fb = [0usize; MAX_RANK];
        let ra = self.rank - 1;
        for k in 0..out.len() {
            out.unflatten(k, &mut idx);
            let mut r = 0;
            for s in 0..self.rank {
                if s != i {
                    fa[s] = idx[r];
                    r += 1;
                }
            }
            for s in 0..other.rank {
                if s != j {
                    fb[s] = idx[r];
                    r += 1;
                }
            }
            debug_assert_eq!(r, ra + other.rank - 1);
            let mut sum = 0.0;
            for m in 0..self.dim {
                fa[i] = m;
                fb[j] = m;
                sum += self.data[self.offset(&fa[..self.rank])]
                    * other.data[other.offset(&fb[..other.rank])];
            }
            out.data[k] = sum;
        }
        Ok(out)
    }

    /// Reorders slots: slot `k` of the result is slot `order[k]` of `self`.
    pub fn permute(&self, order: &[usize]) -> Self {
        assert_eq!(order.len(), self.rank);
        let var: Vec<Variance> = order.iter().map(|&s| self.variance[s]).collect();
        let mut out = Self::zeros(self.dim, &var);
        let mut idx = [0usize; MAX_RANK];
        let mut src = [0usize; MAX_RANK];
        for k in 0..out.len() {
            out.unflatten(k, &mut idx);
            for (slot, &s) in order.iter().enumerate() {
                src[s] = idx[slot];
            }
            out.data[k] = self.data[self.offset(&src[..self.rank])];
        }
        out
    }

    pub fn swap_slots(&self, a: usize, b: usize) -> Self {
        let mut order: Vec<usize> = (0..self.rank).collect();
        order.swap(a, b);
        self.permute(&order)
    }

    /// `(T - T with slots a, b exchanged) / 2`.
    pub fn antisymmetrize(&self, a: usize, b: usize) -> Self {
        assert_eq!(self.variance[a], self.variance[b], "mixed-variance antisymmetrization");
        let mut t = self.swap_slots(a, b).scale(-0.5);
        t.axpy(0.5, self);
        t
    }

    pub fn symmetrize(&self, a: usize, b: usize) -> Self {
        assert_eq!(self.variance[a], self.variance[b], "mixed-variance symmetrization");
        let mut t = self.swap_slots(a, b).scale(0.5);
        t.axpy(0.5, self);
        t
    }

    /// Applies a mixed projector `P^mu_nu` to one slot.
    pub fn project(&self, slot: usize, proj: &TensorValue) -> Result<Self> {
        let r = if self.variance[slot] == Contra {
            proj.contract_with(1, self, slot)?
        } else {
            proj.contract_with(0, self, slot)?
        };
        // result slot 0 is the projected index; move it back into place
        let mut order: Vec<usize> = (1..self.rank).collect();
        order.insert(slot, 0);
        Ok(r.permute(&order))
    }
}

impl Add<&TensorValue> for &TensorValue {
    type Output = TensorValue;
    fn add(self, rhs: &TensorValue) -> TensorValue {
        let mut t = self.clone();
        t.axpy(1.0, rhs);
        t
    }
}

impl Sub<&TensorValue> for &TensorValue {
    type Output = TensorValue;
    fn sub(self, rhs: &TensorValue) -> TensorValue {
        let mut t = self.clone();
        t.axpy(-1.0, rhs);
        t
    }
}

impl AddAssign<&TensorValue> for TensorValue {
    fn add_assign(&mut self, rhs: &TensorValue) {
        self.axpy(1.0, rhs);
    }
}

impl Mul<f64> for &TensorValue {
    type Output = TensorValue;
    fn mul(self, rhs: f64) -> TensorValue {
        self.scale(rhs)
    }
}

impl Neg for &TensorValue {
    type Output = TensorValue;
    fn neg(self) -> TensorValue {
        self.scale(-1.0)
    }
}

/// Background metric at a point together with its inverse.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricValue {
    pub g: TensorValue,
    pub g_inv: TensorValue,
    /// Signs of the eigenvalues of `g`, ascending.
    pub signature: Vec<i8>,
    det: f64,
}

impl MetricValue {
    /// Builds a metric from its covariant components; the input is
    /// symmetrized exactly.
    pub fn new(dim: usize, m: &Mat4) -> Result<Self> {
        let mut sym = [[0.0; 4]; 4];
        for i in 0..dim {
            for j in 0..dim {
                sym[i][j] = if i == j { m[i][i] } else { 0.5 * (m[i][j] + m[j][i]) };
            }
        }
        let (det, inv) = linalg::det_inverse(dim, &sym);
        if det.abs() < DEGENERATE_DET {
            return Err(Error::DegenerateMetric(det.abs()));
        }
        let mut inv = inv.ok_or(Error::DegenerateMetric(0.0))?;
        for i in 0..dim {
            for j in i + 1..dim {
                let a = 0.5 * (inv[i][j] + inv[j][i]);
                inv[i][j] = a;
                inv[j][i] = a;
            }
        }
        let mut ev = linalg::symmetric_eigenvalues(dim, &sym);
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let signature = ev.iter().map(|v| if *v < 0.0 { -1 } else { 1 }).collect();
        Ok(Self {
            g: TensorValue::matrix(dim, [Co, Co], &sym),
            g_inv: TensorValue::matrix(dim, [Contra, Contra], &inv),
            signature,
            det,
        })
    }

    pub fn euclidean(dim: usize) -> Self {
        Self::new(dim, &linalg::identity(dim)).expect("identity metric")
    }

    pub fn minkowski(dim: usize) -> Self {
        let mut m = linalg::identity(dim);
        m[0][0] = -1.0;
        Self::new(dim, &m).expect("minkowski metric")
    }

    pub fn dim(&self) -> usize {
        self.g.dim()
    }

    pub fn det(&self) -> f64 {
        self.det
    }

    pub fn is_lorentzian(&self) -> bool {
        self.signature.iter().filter(|s| **s < 0).count() == 1
    }

    pub fn lower_mat(&self) -> Mat4 {
        self.g.as_mat4()
    }

    pub fn upper_mat(&self) -> Mat4 {
        self.g_inv.as_mat4()
    }
}

/// Raises or lowers one slot with the metric (flips its variance).
pub fn raise_lower(t: &TensorValue, m: &MetricValue, slot: usize) -> Result<TensorValue> {
    if t.dim() != m.dim() {
        return Err(Error::DimMismatch {
            expected: m.dim(),
            found: t.dim(),
        });
    }
    if slot >= t.rank() {
        return Err(Error::InvalidSlot {
            slot,
            rank: t.rank(),
        });
    }
    let metric = match t.variance()[slot] {
        Contra => &m.g,
        Co => &m.g_inv,
    };
    let r = metric.contract_with(1, t, slot)?;
    let mut order: Vec<usize> = (1..t.rank()).collect();
    order.insert(slot, 0);
    Ok(r.permute(&order))
}

/// Free-function form of [`TensorValue::contract`].
pub fn contract(t: &TensorValue, slot_a: usize, slot_b: usize) -> Result<TensorValue> {
    t.contract(slot_a, slot_b)
}

/// Fully antisymmetric volume tensor weighted by `sqrt|det g|`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlternatingTensor {
    /// All slots covariant: `eps_{01..} = sqrt|det g|`.
    pub eps: TensorValue,
    sqrt_det: f64,
    det_sign: f64,
}

impl AlternatingTensor {
    pub fn sqrt_det(&self) -> f64 {
        self.sqrt_det
    }

    /// Contravariant version, `eps^{01..} = sign(det g) / sqrt|det g|`.
    pub fn upper(&self) -> TensorValue {
        let n = self.eps.dim();
        let var = vec![Contra; n];
        let f = self.det_sign / (self.sqrt_det * self.sqrt_det);
        let mut t = self.eps.clone();
        t = t.scale(f);
        TensorValue::from_components(n, &var, t.components()).expect("same shape")
    }
}

/// Sign of a permutation of `0..n`, zero if an entry repeats.
pub fn permutation_sign(idx: &[usize]) -> f64 {
    let n = idx.len();
    let mut sign = 1.0;
    for i in 0..n {
        for j in i + 1..n {
            if idx[i] == idx[j] {
                return 0.0;
            }
            if idx[i] > idx[j] {
                sign = -sign;
            }
        }
    }
    sign
}

pub fn levi_civita(m: &MetricValue) -> Result<AlternatingTensor> {
    let n = m.dim();
    if n > MAX_RANK {
        return Err(Error::InvalidParameter(format!("levi-civita for dim {n}")));
    }
    let det = m.det();
    if det.abs() < DEGENERATE_DET {
        return Err(Error::DegenerateMetric(det.abs()));
    }
    let sd = det.abs().sqrt();
    let eps = TensorValue::from_fn(n, &vec![Co; n], |idx| sd * permutation_sign(idx));
    Ok(AlternatingTensor {
        eps,
        sqrt_det: sd,
        det_sign: det.signum(),
    })
}
