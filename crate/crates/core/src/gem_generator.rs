//! The second-order operator of the GEM process on the simplex.
//!
//! For a simplex point `y` with tail masses `T_k = 1 - Σ_{l≤k} y_l` the
//! coefficients are
//!
//! ```text
//! a_ij(y) = y_i y_j Σ_{k ≤ i∧j} (δ_ki T_{k-1} - y_k)(δ_kj T_{k-1} - y_k) / (y_k T_k)
//! b_i(y)  = y_i Σ_{k ≤ i} (δ_ik T_{k-1} - y_k)(a_k T_{k-1} - (a_k+b_k) y_k) / (y_k T_k)
//! ```
//!
//! Cancelling the common factors (`T_{k-1} - y_k = T_k`) gives, with
//! `S_i = Σ_{k<i} y_k / T_k`,
//!
//! ```text
//! a_ij = y_i y_j (S_i - 1)                       (i < j)
//! a_ii = y_i^2 S_i + y_i T_i
//! b_i  = a_i T_i - b_i y_i + y_i Σ_{k<i} (b_k y_k / T_k - a_k)
//! ```
//!
//! The cancellation is the `0/0 = 1` convention applied to the common
//! factors. The remaining ratios `y_k / T_k` (`k < i`) only occur multiplied
//! by `y_i`, and `y_i > 0` forces `T_k >= y_i > 0`, so on the closed simplex
//! no genuinely singular term survives: a coefficient with a vanishing
//! leading factor is zero.
//!
//! Indices in this module are 0-based; coordinate `i` here is the usual
//! 1-based coordinate `i + 1`.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Error, Result};
use crate::rng::RngStream;
use crate::stick_breaking::{phi_closed, GemParams, SimplexPoint, StickPoint};
use crate::wf_diffusion::{stationary_sample, WfParams};

/// Per-coordinate drift weights `(a_i, b_i)`, `i = 0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSeq {
    pairs: Vec<WfParams>,
}

impl ParamSeq {
    pub fn new(pairs: Vec<WfParams>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(invalid("pairs", "at least one coordinate is required"));
        }
        Ok(Self { pairs })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(a, b)| WfParams::new(a, b))
                .collect::<Result<_>>()?,
        )
    }

    pub fn constant(a: f64, b: f64, n: usize) -> Result<Self> {
        Self::new(vec![WfParams::new(a, b)?; n])
    }

    /// `a_i = (1 - α)/2`, `b_i = (θ + iα)/2` (1-based `i`): the stationary law
    /// of the simplex process is GEM(α, θ).
    pub fn from_gem(p: &GemParams, n: usize) -> Result<Self> {
        Self::new(
            (1..=n)
                .map(|k| {
                    let (s1, s2) = p.stick_shape(k);
                    WfParams::new(s1 / 2.0, s2 / 2.0)
                })
                .collect::<Result<_>>()?,
        )
    }

    pub fn one_parameter(theta: f64, n: usize) -> Result<Self> {
        Self::from_gem(&GemParams::one_parameter(theta)?, n)
    }

    pub fn two_parameter(alpha: f64, theta: f64, n: usize) -> Result<Self> {
        Self::from_gem(&GemParams::new(alpha, theta)?, n)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, i: usize) -> &WfParams {
        &self.pairs[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &WfParams> {
        self.pairs.iter()
    }

    /// `min_i (a_i ∧ b_i)` over the stored coordinates.
    pub fn inf_min_ab(&self) -> f64 {
        self.pairs.iter().map(|p| p.a().min(p.b())).fold(f64::INFINITY, f64::min)
    }

    /// `min_i (a_i + b_i)` over the stored coordinates.
    pub fn inf_sum_ab(&self) -> f64 {
        self.pairs.iter().map(|p| p.a() + p.b()).fold(f64::INFINITY, f64::min)
    }

    /// Truncate (or keep) the first `n` coordinates.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n > self.len() {
            return Err(invalid("n", format!("only {} coordinates available", self.len())));
        }
        Self::new(self.pairs[..n].to_vec())
    }

    /// Independent stationary sticks `x_i ~ Beta(2a_i, 2b_i)` for the first
    /// `m` coordinates.
    pub fn sample_stationary_sticks(&self, m: usize, rng: &mut RngStream) -> Vec<f64> {
        self.pairs[..m].iter().map(|p| stationary_sample(p, rng)).collect()
    }

    /// Exact draw of the first `m` simplex coordinates under the stationary
    /// law (the stick product law pushed through the stick-breaking map).
    pub fn sample_stationary(&self, m: usize, rng: &mut RngStream) -> SimplexPoint {
        phi_closed(&self.sample_stationary_sticks(m, rng))
    }
}

/// A smooth function of finitely many leading coordinates with first and
/// second derivatives.
pub trait CylinderFunction: Sync {
    /// Number of leading coordinates the function depends on.
    fn arity(&self) -> usize;
    fn value(&self, y: &[f64]) -> f64;
    fn gradient(&self, y: &[f64]) -> DVector<f64>;
    fn hessian(&self, y: &[f64]) -> DMatrix<f64>;
}

/// `c Π_i y_i^{e_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Monomial {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

/// Polynomial cylinder function with exact derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct Polynomial {
    terms: Vec<Monomial>,
    arity: usize,
}

impl Polynomial {
    pub fn new(terms: Vec<Monomial>) -> Self {
        let arity = terms
            .iter()
            .map(|t| t.exponents.iter().rposition(|&e| e > 0).map_or(0, |p| p + 1))
            .max()
            .unwrap_or(0);
        Self { terms, arity }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(vec![Monomial {
            coeff: c,
            exponents: vec![],
        }])
    }

    pub fn monomial(coeff: f64, exponents: &[u32]) -> Self {
        Self::new(vec![Monomial {
            coeff,
            exponents: exponents.to_vec(),
        }])
    }

    /// The coordinate function `y_i`.
    pub fn coordinate(i: usize) -> Self {
        let mut e = vec![0; i + 1];
        e[i] = 1;
        Self::monomial(1.0, &e)
    }

    pub fn plus(mut self, other: Polynomial) -> Self {
        self.terms.extend(other.terms);
        Self::new(self.terms)
    }

    pub fn scaled(mut self, c: f64) -> Self {
        for t in &mut self.terms {
            t.coeff *= c;
        }
        self
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.exponents.iter().sum()).max().unwrap_or(0)
    }

    /// Mixed partial derivative of one monomial; `orders[i]` is the
    /// differentiation order in `y_i`.
    fn term_value(t: &Monomial, y: &[f64], orders: &[(usize, u32)]) -> f64 {
        if orders.iter().any(|&(i, _)| i >= t.exponents.len()) {
            return 0.0;
        }
        let mut v = t.coeff;
        for (i, &e) in t.exponents.iter().enumerate() {
            let k: u32 = orders.iter().filter(|(j, _)| *j == i).map(|(_, k)| k).sum();
            if k > e {
                return 0.0;
            }
            v *= (e - k + 1..=e).map(f64::from).product::<f64>();
            v *= y[i].powi((e - k) as i32);
        }
        v
    }
}

impl CylinderFunction for Polynomial {
    fn arity(&self) -> usize {
        self.arity
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.terms.iter().map(|t| Self::term_value(t, y, &[])).sum()
    }

    fn gradient(&self, y: &[f64]) -> DVector<f64> {
        DVector::from_fn(self.arity, |i, _| {
            self.terms.iter().map(|t| Self::term_value(t, y, &[(i, 1)])).sum()
        })
    }

    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.arity, self.arity, |i, j| {
            self.terms
                .iter()
                .map(|t| Self::term_value(t, y, &[(i, 1), (j, 1)]))
                .sum()
        })
    }
}

/// Step of the central differences used by [`FiniteDifference`].
pub const FD_STEP: f64 = 1e-5;

/// Generic cylinder function differentiated by central differences. Its
/// derivatives are accurate to roughly 1e-4 and should only be compared at
/// that tolerance.
pub struct FiniteDifference<F> {
    arity: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FiniteDifference<F> {
    pub fn new(arity: usize, f: F) -> Self {
        Self { arity, f }
    }

    fn shifted(&self, y: &[f64], moves: &[(usize, f64)]) -> f64 {
        let mut z = y.to_vec();
        for &(i, h) in moves {
            z[i] += h;
        }
        (self.f)(&z)
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> CylinderFunction for FiniteDifference<F> {
    fn arity(&self) -> usize {
        self.arity
    }

    fn value(&self, y: &[f64]) -> f64 {
        (self.f)(y)
    }

    fn gradient(&self, y: &[f64]) -> DVector<f64> {
        let h = FD_STEP;
        DVector::from_fn(self.arity, |i, _| {
            (self.shifted(y, &[(i, h)]) - self.shifted(y, &[(i, -h)])) / (2.0 * h)
        })
    }

    fn hessian(&self, y: &[f64]) -> DMatrix<f64> {
        let h = FD_STEP;
        let f0 = (self.f)(y);
        DMatrix::from_fn(self.arity, self.arity, |i, j| {
            if i == j {
                (self.shifted(y, &[(i, h)]) - 2.0 * f0 + self.shifted(y, &[(i, -h)])) / (h * h)
            } else {
                (self.shifted(y, &[(i, h), (j, h)]) - self.shifted(y, &[(i, h), (j, -h)])
                    - self.shifted(y, &[(i, -h), (j, h)])
                    + self.shifted(y, &[(i, -h), (j, -h)]))
                    / (4.0 * h * h)
            }
        })
    }
}

/// `f ∘ φ` as a function of `n` stick coordinates, differentiated through
/// the exact Jacobian and second derivatives of the stick-breaking map.
pub struct Pullback<'a, F: ?Sized> {
    f: &'a F,
    n: usize,
}

impl<'a, F: CylinderFunction + ?Sized> Pullback<'a, F> {
    pub fn new(f: &'a F, n: usize) -> Result<Self> {
        if f.arity() > n {
            return Err(invalid("n", format!("pullback of an arity-{} function needs n >= {}", f.arity(), f.arity())));
        }
        Ok(Self { f, n })
    }
}

/// `Π_{l<j, l ∉ skip} (1 - x_l)`.
fn prod_except(x: &[f64], j: usize, skip: &[usize]) -> f64 {
    (0..j).filter(|l| !skip.contains(l)).map(|l| 1.0 - x[l]).product()
}

/// `∂φ_j / ∂x_i`.
fn phi_jacobian(x: &[f64], j: usize, i: usize) -> f64 {
    use std::cmp::Ordering::*;
    match i.cmp(&j) {
        Greater => 0.0,
        Equal => prod_except(x, j, &[]),
        Less => -x[j] * prod_except(x, j, &[i]),
    }
}

/// `∂²φ_j / ∂x_i ∂x_m`; `φ_j` is affine in each coordinate separately.
fn phi_second(x: &[f64], j: usize, i: usize, m: usize) -> f64 {
    if i == m || i > j || m > j {
        return 0.0;
    }
    let (lo, hi) = (i.min(m), i.max(m));
    if hi == j {
        -prod_except(x, j, &[lo])
    } else {
        x[j] * prod_except(x, j, &[lo, hi])
    }
}

impl<F: CylinderFunction + ?Sized> CylinderFunction for Pullback<'_, F> {
    fn arity(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.f.value(phi_closed(&x[..self.n]).weights())
    }

    fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let y = phi_closed(&x[..self.n]);
        let g = self.f.gradient(y.weights());
        let m = self.f.arity();
        DVector::from_fn(self.n, |i, _| (0..m).map(|j| g[j] * phi_jacobian(x, j, i)).sum())
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let y = phi_closed(&x[..self.n]);
        let g = self.f.gradient(y.weights());
        let h = self.f.hessian(y.weights());
        let m = self.f.arity();
        let jac = DMatrix::from_fn(m, self.n, |j, i| phi_jacobian(x, j, i));
        let mut out = jac.transpose() * h * &jac;
        for i in 0..self.n {
            for k in 0..self.n {
                out[(i, k)] += (0..m).map(|j| g[j] * phi_second(x, j, i, k)).sum::<f64>();
            }
        }
        out
    }
}

/// `S_i = Σ_{k<i} y_k / T_k` for `i = 0..n`, with `T_k = r[k+1]`. Entries
/// past an exhausted tail are infinite; they are only ever multiplied by a
/// zero weight.
fn ratio_prefix(y: &[f64], r: &[f64]) -> Vec<f64> {
    let mut s = Vec::with_capacity(y.len());
    let mut acc = 0.0;
    for k in 0..y.len() {
        s.push(acc);
        acc += if y[k] == 0.0 { 0.0 } else { y[k] / r[k + 1] };
    }
    s
}

fn a_entry(y: &[f64], r: &[f64], s: &[f64], i: usize, j: usize) -> f64 {
    let (i, j) = (i.min(j), i.max(j));
    if y[i] == 0.0 || y[j] == 0.0 {
        return 0.0;
    }
    if i == j {
        y[i] * y[i] * s[i] + y[i] * r[i + 1]
    } else {
        y[i] * y[j] * (s[i] - 1.0)
    }
}

fn b_entry(y: &[f64], r: &[f64], p: &ParamSeq, i: usize) -> f64 {
    if y[i] == 0.0 {
        return 0.0;
    }
    let pi = p.get(i);
    let mut acc = 0.0;
    for k in 0..i {
        let pk = p.get(k);
        let ratio = if y[k] == 0.0 { 0.0 } else { y[k] / r[k + 1] };
        acc += pk.b() * ratio - pk.a();
    }
    pi.a() * r[i + 1] - pi.b() * y[i] + y[i] * acc
}

/// Diffusion coefficient `a_ij(y)`; symmetric in `(i, j)`.
///
/// # Panics
///
/// If `i` or `j` is not below `y.len()`.
pub fn coeff_a(y: &SimplexPoint, i: usize, j: usize) -> f64 {
    let w = y.weights();
    assert!(i < w.len() && j < w.len(), "index out of range");
    let m = i.max(j) + 1;
    let r = crate::stick_breaking::tail_masses(&w[..m], y.remainder() + w[m..].iter().sum::<f64>());
    let s = ratio_prefix(&w[..m], &r);
    a_entry(w, &r, &s, i, j)
}

/// Drift coefficient `b_i(y)`.
///
/// # Panics
///
/// If `i` is not below both `y.len()` and `p.len()`.
pub fn coeff_b(y: &SimplexPoint, p: &ParamSeq, i: usize) -> f64 {
    let w = y.weights();
    assert!(i < w.len() && i < p.len(), "index out of range");
    let r = y.tail_masses();
    b_entry(w, &r, p, i)
}

/// Coefficients of the operator at a point, restricted to the first `n`
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorCoeffs {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl GeneratorCoeffs {
    /// Compute `a_ij`, `b_i` for `i, j < n`; needs `n <= y.len(), p.len()`.
    pub fn at(y: &SimplexPoint, p: &ParamSeq, n: usize) -> Self {
        let w = y.weights();
        assert!(n <= w.len() && n <= p.len(), "truncation level exceeds point or parameters");
        let r = y.tail_masses();
        let s = ratio_prefix(w, &r);
        let a = DMatrix::from_fn(n, n, |i, j| a_entry(w, &r, &s, i, j));
        let b = DVector::from_fn(n, |i, _| b_entry(w, &r, p, i));
        Self { a, b }
    }

    /// Only the diffusion matrix (no drift parameters needed).
    pub fn diffusion_at(y: &SimplexPoint, n: usize) -> DMatrix<f64> {
        let w = y.weights();
        assert!(n <= w.len(), "truncation level exceeds point");
        let r = y.tail_masses();
        let s = ratio_prefix(w, &r);
        DMatrix::from_fn(n, n, |i, j| a_entry(w, &r, &s, i, j))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.a.clone().symmetric_eigenvalues().min()
    }

    /// `Γ(f, g)` from precomputed gradients.
    pub fn gamma_of(&self, df: &DVector<f64>, dg: &DVector<f64>) -> f64 {
        let mut acc = 0.0;
        for i in 0..df.len() {
            for j in 0..dg.len() {
                acc += self.a[(i, j)] * df[i] * dg[j];
            }
        }
        acc
    }

    /// `Σ a_ij H_ij + Σ b_i g_i` with second-order weight `scale`.
    pub fn apply_of(&self, grad: &DVector<f64>, hess: &DMatrix<f64>, scale: f64) -> f64 {
        let m = grad.len();
        let mut second = 0.0;
        for i in 0..m {
            for j in 0..m {
                second += self.a[(i, j)] * hess[(i, j)];
            }
        }
        let first: f64 = (0..m).map(|i| self.b[i] * grad[i]).sum();
        scale * second + first
    }
}

fn check_dims(y: &SimplexPoint, m: usize) {
    assert!(
        y.len() >= m,
        "cylinder function of arity {m} evaluated at a point with {} coordinates",
        y.len()
    );
}

/// Carré du champ `Γ(f, g)(y) = Σ a_ij ∂_i f ∂_j g`.
pub fn gamma<F, G>(f: &F, g: &G, y: &SimplexPoint) -> f64
where
    F: CylinderFunction + ?Sized,
    G: CylinderFunction + ?Sized,
{
    let m = f.arity().max(g.arity());
    check_dims(y, m);
    let a = GeneratorCoeffs::diffusion_at(y, m);
    let w = y.weights();
    let df = f.gradient(w);
    let dg = g.gradient(w);
    let mut acc = 0.0;
    for i in 0..df.len() {
        for j in 0..dg.len() {
            acc += a[(i, j)] * df[i] * dg[j];
        }
    }
    acc
}

/// `ℒf(y) = Σ a_ij ∂²_ij f + Σ b_i ∂_i f`.
pub fn apply_generator<F: CylinderFunction + ?Sized>(f: &F, y: &SimplexPoint, p: &ParamSeq) -> f64 {
    let m = f.arity();
    check_dims(y, m);
    let c = GeneratorCoeffs::at(y, p, m);
    c.apply_of(&f.gradient(y.weights()), &f.hessian(y.weights()), 1.0)
}

/// Generator of `Φ(X_t)` where each stick `X_i` solves the Wright–Fisher
/// SDE: `½ Σ a_ij ∂²_ij f + Σ b_i ∂_i f`. Its carré du champ is `Γ/2`.
pub fn apply_process_generator<F: CylinderFunction + ?Sized>(
    f: &F,
    y: &SimplexPoint,
    p: &ParamSeq,
) -> f64 {
    let m = f.arity();
    check_dims(y, m);
    let c = GeneratorCoeffs::at(y, p, m);
    c.apply_of(&f.gradient(y.weights()), &f.hessian(y.weights()), 0.5)
}

/// Gradient of `f ∘ φ` at an interior stick point via
/// `∂_i (f∘φ) = Σ_{j≥i} (δ_ij - x_i) φ_j / (x_i (1 - x_i)) · ∂_j f`.
pub fn pullback_gradient<F: CylinderFunction + ?Sized>(f: &F, x: &StickPoint) -> Result<DVector<f64>> {
    let u = x.as_slice();
    if let Some(i) = u.iter().position(|&v| v == 0.0) {
        return Err(Error::BoundaryPoint { index: i + 1 });
    }
    let n = u.len();
    if f.arity() > n {
        return Err(invalid("x", format!("need at least {} sticks", f.arity())));
    }
    let y = phi_closed(u);
    let w = y.weights();
    let df = f.gradient(w);
    Ok(DVector::from_fn(n, |i, _| {
        let xi = u[i];
        (i..f.arity())
            .map(|j| {
                let delta = if i == j { 1.0 } else { 0.0 };
                (delta - xi) * w[j] / (xi * (1.0 - xi)) * df[j]
            })
            .sum()
    }))
}

/// Product generator on sticks
/// `L_n h(x) = Σ x_i (1 - x_i) ∂²_ii h + Σ (a_i - (a_i + b_i) x_i) ∂_i h`.
pub fn apply_finite_generator<H: CylinderFunction + ?Sized>(h: &H, x: &StickPoint, p: &ParamSeq) -> f64 {
    let u = x.as_slice();
    let n = h.arity();
    assert!(n <= u.len() && n <= p.len(), "dimension mismatch");
    let g = h.gradient(u);
    let hs = h.hessian(u);
    (0..n)
        .map(|i| u[i] * (1.0 - u[i]) * hs[(i, i)] + p.get(i).drift(u[i]) * g[i])
        .sum()
}

/// Bound on the total variation of the diffusion matrix.
pub const COEFF_BOUND: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffBound {
    pub value: f64,
    pub pass: bool,
}

/// `Σ_{i,j<n} |a_ij(y)|` against the bound 3 (with 1e-9 slack).
pub fn coeff_bound(y: &SimplexPoint) -> CoeffBound {
    let a = GeneratorCoeffs::diffusion_at(y, y.len());
    let value = a.iter().map(|v| v.abs()).sum();
    CoeffBound {
        value,
        pass: value <= COEFF_BOUND + 1e-9,
    }
}

/// `Σ_{k≤i} (b_k y_k + a_k)`, the bound on `|b_i(y)|`.
pub fn drift_bound(y: &SimplexPoint, p: &ParamSeq, i: usize) -> f64 {
    (0..=i).map(|k| p.get(k).b() * y.weights()[k] + p.get(k).a()).sum()
}
