//! Periodic energy densities `f(y, ξ)` and their extensions off the tangent bundle.
//!
//! An [`Integrand`] is a 1-periodic (in `y`) density on `d × N` matrices with
//! declared growth data `(p, α, β, L)`. The two extensions used to move the
//! cell problem from `T_s(M)`-valued to `R^d`-valued correctors are
//! [`FBar`] (penalize the normal part with `|·|^p`) and [`GExtension`]
//! (the `p = 1` variant, defined for every `s ∈ R^d` via a cut-off).

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{HomogError, Result};
use crate::manifold::Manifold;

pub type EvalFn = Arc<dyn Fn(&[f64], &DMatrix<f64>) -> f64 + Send + Sync>;
pub type GradFn = Arc<dyn Fn(&[f64], &DMatrix<f64>, &mut DMatrix<f64>) + Send + Sync>;

/// Step used by the finite-difference gradient fallback.
pub const FD_STEP: f64 = 1e-6;

/// Declared `(p, α, β, L)` of a density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthData {
    pub p: f64,
    pub alpha: f64,
    pub beta: f64,
    pub lipschitz: Option<f64>,
}

impl GrowthData {
    pub fn lower(&self, norm: f64) -> f64 {
        self.alpha * norm.powf(self.p)
    }

    pub fn upper(&self, norm: f64) -> f64 {
        self.beta * (1.0 + norm.powf(self.p))
    }
}

/// Interface shared by every density a cell solver can minimize.
///
/// `value` is the density reported to callers. `solver_value`/`solver_grad`
/// may be a smoothed surrogate (Huber regularization of `p = 1` penalties);
/// by default they coincide with `value`.
pub trait Density: Sync {
    fn n_dim(&self) -> usize;
    fn ambient_dim(&self) -> usize;
    fn growth(&self) -> GrowthData;
    fn value(&self, y: &[f64], xi: &DMatrix<f64>) -> f64;

    fn solver_value(&self, y: &[f64], xi: &DMatrix<f64>) -> f64 {
        self.value(y, xi)
    }

    fn solver_grad(&self, y: &[f64], xi: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        fd_grad_into(|z| self.solver_value(y, z), xi, FD_STEP, out);
    }

    /// True when `solver_value` is a quadratic polynomial in `ξ`.
    fn is_quadratic(&self) -> bool {
        false
    }
}

/// Piecewise-constant 1-periodic profile on `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl StepProfile {
    /// `values[k]` holds on `[breakpoints[k-1], breakpoints[k])` with the
    /// conventions `breakpoints[-1] = 0`, `breakpoints[len] = 1`.
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(HomogError::InvalidProfile(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            )));
        }
        if breakpoints.iter().any(|b| !(0.0..1.0).contains(b)) {
            return Err(HomogError::InvalidProfile("breakpoints must lie in [0, 1)".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(HomogError::InvalidProfile("breakpoints must be strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(HomogError::InvalidProfile(format!("profile values must be positive and finite, got {v}")));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(Vec::new(), vec![value])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at(&self, y: f64) -> f64 {
        let frac = y - y.floor();
        let idx = self.breakpoints.partition_point(|&b| b <= frac);
        self.values[idx]
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Segments `(length, value)` covering one period.
    pub fn segments(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::with_capacity(self.values.len());
        let mut start = 0.0;
        for (k, &v) in self.values.iter().enumerate() {
            let end = self.breakpoints.get(k).copied().unwrap_or(1.0);
            out.push((end - start, v));
            start = end;
        }
        out
    }
}

/// Common refinement of two profiles: `(length, a, b)` per segment.
pub fn merged_segments(a: &StepProfile, b: &StepProfile) -> Vec<(f64, f64, f64)> {
    let mut cuts: Vec<f64> = a.breakpoints().iter().chain(b.breakpoints()).copied().collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    cuts.windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            (w[1] - w[0], a.at(mid), b.at(mid))
        })
        .collect()
}

/// A periodic Carathéodory density with declared growth data.
#[derive(Clone)]
pub struct Integrand {
    n_dim: usize,
    ambient_dim: usize,
    growth: GrowthData,
    eval: EvalFn,
    grad: Option<GradFn>,
    quadratic: bool,
    label: String,
}

impl fmt::Debug for Integrand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Integrand")
            .field("label", &self.label)
            .field("n_dim", &self.n_dim)
            .field("ambient_dim", &self.ambient_dim)
            .field("growth", &self.growth)
            .field("quadratic", &self.quadratic)
            .finish()
    }
}

impl Integrand {
    pub fn from_fn(
        label: impl Into<String>,
        n_dim: usize,
        ambient_dim: usize,
        growth: GrowthData,
        eval: EvalFn,
        grad: Option<GradFn>,
    ) -> Result<Self> {
        if n_dim == 0 || ambient_dim == 0 {
            return Err(HomogError::InvalidInput("dimensions must be positive".into()));
        }
        if !(growth.p >= 1.0) || !(growth.alpha > 0.0) || !(growth.beta >= growth.alpha) {
            return Err(HomogError::InvalidInput(format!(
                "growth data must satisfy p >= 1, 0 < alpha <= beta: {growth:?}"
            )));
        }
        if growth.p == 1.0 && growth.lipschitz.is_none() {
            return Err(HomogError::InvalidInput("p = 1 integrands must declare a Lipschitz constant".into()));
        }
        Ok(Self { n_dim, ambient_dim, growth, eval, grad, quadratic: false, label: label.into() })
    }

    /// `Σ_j a(y₁)|ξ_{1j}|² + b(y₁)|ξ_{2j}|²` for `ξ ∈ R^{2×N}`.
    pub fn laminate_quadratic(a: StepProfile, b: StepProfile, n_dim: usize) -> Result<Self> {
        if n_dim == 0 {
            return Err(HomogError::InvalidInput("N must be >= 1".into()));
        }
        let alpha = a.min_value().min(b.min_value());
        let beta = a.max_value().max(b.max_value()) + 1.0;
        let (ea, eb) = (a.clone(), b.clone());
        let eval: EvalFn = Arc::new(move |y, xi| {
            let (wa, wb) = (ea.at(y[0]), eb.at(y[0]));
            let mut acc = 0.0;
            for j in 0..xi.ncols() {
                acc += wa * xi[(0, j)] * xi[(0, j)] + wb * xi[(1, j)] * xi[(1, j)];
            }
            acc
        });
        let grad: GradFn = Arc::new(move |y, xi, out| {
            let (wa, wb) = (a.at(y[0]), b.at(y[0]));
            for j in 0..xi.ncols() {
                out[(0, j)] = 2.0 * wa * xi[(0, j)];
                out[(1, j)] = 2.0 * wb * xi[(1, j)];
            }
        });
        let growth = GrowthData { p: 2.0, alpha, beta, lipschitz: None };
        let mut f = Self::from_fn("laminate", n_dim, 2, growth, eval, Some(grad))?;
        f.quadratic = true;
        Ok(f)
    }

    /// `c |ξ|^p`, independent of `y`.
    pub fn isotropic(scale: f64, p: f64, n_dim: usize, ambient_dim: usize) -> Result<Self> {
        if !(scale > 0.0) {
            return Err(HomogError::InvalidInput("scale must be positive".into()));
        }
        let eval: EvalFn = Arc::new(move |_, xi| scale * xi.norm().powf(p));
        let grad: GradFn = Arc::new(move |_, xi, out| {
            let r = xi.norm();
            if r == 0.0 {
                out.fill(0.0);
            } else {
                let factor = scale * p * r.powf(p - 2.0);
                out.copy_from(&(xi * factor));
            }
        });
        let lipschitz = (p == 1.0).then_some(scale);
        let growth = GrowthData { p, alpha: scale, beta: scale, lipschitz };
        let mut f = Self::from_fn("isotropic", n_dim, ambient_dim, growth, eval, Some(grad))?;
        f.quadratic = p == 2.0;
        Ok(f)
    }

    /// Linear-growth laminate `a(y₁) √(1 + |ξ|²)`, smooth in `ξ`.
    pub fn area_laminate(a: StepProfile, n_dim: usize, ambient_dim: usize) -> Result<Self> {
        let (lo, hi) = (a.min_value(), a.max_value());
        let ea = a.clone();
        let eval: EvalFn = Arc::new(move |y, xi| ea.at(y[0]) * (1.0 + xi.norm_squared()).sqrt());
        let grad: GradFn = Arc::new(move |y, xi, out| {
            let w = a.at(y[0]) / (1.0 + xi.norm_squared()).sqrt();
            out.copy_from(&(xi * w));
        });
        let growth = GrowthData { p: 1.0, alpha: lo, beta: hi, lipschitz: Some(hi) };
        Self::from_fn("area_laminate", n_dim, ambient_dim, growth, eval, Some(grad))
    }

    /// Replaces the declared growth constants (used to seed negative tests).
    pub fn with_declared(mut self, alpha: Option<f64>, beta: Option<f64>) -> Self {
        if let Some(a) = alpha {
            self.growth.alpha = a;
        }
        if let Some(b) = beta {
            self.growth.beta = b;
        }
        self
    }

    pub fn with_quadratic_flag(mut self, quadratic: bool) -> Self {
        self.quadratic = quadratic;
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, y: &[f64], xi: &DMatrix<f64>) -> f64 {
        (self.eval)(y, xi)
    }

    pub fn has_analytic_grad(&self) -> bool {
        self.grad.is_some()
    }

    /// Gradient in `ξ`; analytic when available, central differences otherwise.
    pub fn grad_into(&self, y: &[f64], xi: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        match &self.grad {
            Some(g) => g(y, xi, out),
            None => fd_grad_into(|z| self.eval(y, z), xi, FD_STEP, out),
        }
    }

    pub fn grad_xi(&self, y: &[f64], xi: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(xi.nrows(), xi.ncols());
        self.grad_into(y, xi, &mut out);
        out
    }
}

impl Density for Integrand {
    fn n_dim(&self) -> usize {
        self.n_dim
    }
    fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }
    fn growth(&self) -> GrowthData {
        self.growth
    }
    fn value(&self, y: &[f64], xi: &DMatrix<f64>) -> f64 {
        self.eval(y, xi)
    }
    fn solver_grad(&self, y: &[f64], xi: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        self.grad_into(y, xi, out)
    }
    fn is_quadratic(&self) -> bool {
        self.quadratic
    }
}

fn fd_grad_into(f: impl Fn(&DMatrix<f64>) -> f64, xi: &DMatrix<f64>, h: f64, out: &mut DMatrix<f64>) {
    let mut probe = xi.clone();
    for k in 0..xi.len() {
        let orig = probe[k];
        probe[k] = orig + h;
        let fp = f(&probe);
        probe[k] = orig - h;
        let fm = f(&probe);
        probe[k] = orig;
        out[k] = (fp - fm) / (2.0 * h);
    }
}

/// Entrywise central-difference gradient of `ξ ↦ f(y, ξ)`.
pub fn finite_difference_grad(f: &Integrand, y: &[f64], xi: &DMatrix<f64>, h: f64) -> DMatrix<f64> {
    assert!(h > 0.0, "finite-difference step must be positive");
    let mut out = DMatrix::zeros(xi.nrows(), xi.ncols());
    fd_grad_into(|z| f.eval(y, z), xi, h, &mut out);
    out
}

/// Huber regularization of `r ↦ r`: quadratic below `mu`, linear above.
pub fn huber(r: f64, mu: f64) -> f64 {
    if r <= mu {
        0.5 * r * r / mu
    } else {
        r - 0.5 * mu
    }
}

/// `d/dξ huber(|ξ|)` written as a scalar factor times `ξ`.
fn huber_factor(r: f64, mu: f64) -> f64 {
    if r <= mu {
        1.0 / mu
    } else {
        1.0 / r
    }
}

fn penalty(r: f64, p: f64) -> f64 {
    if p == 1.0 {
        r
    } else {
        r.powf(p)
    }
}

/// `f̄(y, s, ξ) = f(y, P_s ξ) + |ξ - P_s ξ|^p` on `R^N × M × R^{d×N}`.
#[derive(Debug, Clone)]
pub struct FBar {
    pub f: Integrand,
    pub manifold: Manifold,
    /// Huber parameter applied to the penalty inside solvers when `p = 1`.
    pub huber_mu: f64,
}

impl FBar {
    pub fn new(f: Integrand, manifold: Manifold) -> Result<Self> {
        if f.ambient_dim != manifold.ambient_dim {
            return Err(HomogError::ShapeMismatch(format!(
                "integrand acts on R^{}, manifold lives in R^{}",
                f.ambient_dim, manifold.ambient_dim
            )));
        }
        Ok(Self { f, manifold, huber_mu: 1e-4 })
    }

    /// `α' = min(α, 2^{1-p} min(α, 1))`, `β' = β + 1`.
    pub fn growth(&self) -> GrowthData {
        let g = self.f.growth;
        let alpha = g.alpha.min(2f64.powf(1.0 - g.p) * g.alpha.min(1.0));
        GrowthData { p: g.p, alpha, beta: g.beta + 1.0, lipschitz: None }
    }

    pub fn eval(&self, y: &[f64], s: &DVector<f64>, xi: &DMatrix<f64>) -> Result<f64> {
        let p = self.manifold.tangent_projector(s)?;
        Ok(fbar_value(&self.f, &p, y, xi))
    }

    /// Freezes the base point, precomputing `P_s`.
    pub fn at(&self, s: &DVector<f64>) -> Result<FBarAt<'_>> {
        let projector = self.manifold.tangent_projector(s)?;
        Ok(FBarAt { parent: self, projector })
    }
}

fn fbar_value(f: &Integrand, p: &DMatrix<f64>, y: &[f64], xi: &DMatrix<f64>) -> f64 {
    let t = p * xi;
    let normal = (xi - &t).norm();
    f.eval(y, &t) + penalty(normal, f.growth.p)
}

/// `f̄(·, s, ·)` at a fixed `s ∈ M`.
pub struct FBarAt<'a> {
    parent: &'a FBar,
    projector: DMatrix<f64>,
}

impl Density for FBarAt<'_> {
    fn n_dim(&self) -> usize {
        self.parent.f.n_dim
    }
    fn ambient_dim(&self) -> usize {
        self.parent.f.ambient_dim
    }
    fn growth(&self) -> GrowthData {
        self.parent.growth()
    }
    fn value(&self, y: &[f64], xi: &DMatrix<f64>) -> f64 {
        fbar_value(&self.parent.f, &self.projector, y, xi)
    }
    fn solver_value(&self, y: &[f64], xi: &DMatrix<f64>) -> f64 {
        let p = self.parent.f.growth.p;
        if p != 1.0 {
            return self.value(y, xi);
        }
        let t = &self.projector * xi;
        let normal = (xi - &t).norm();
        self.parent.f.eval(y, &t) + huber(normal, self.parent.huber_mu)
    }
    fn solver_grad(&self, y: &[f64], xi: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        let f = &self.parent.f;
        let t = &self.projector * xi;
        let normal = xi - &t;
        let mut gt = DMatrix::zeros(xi.nrows(), xi.ncols());
        f.grad_into(y, &t, &mut gt);
        let r = normal.norm();
        let p = f.growth.p;
        let factor = if p == 1.0 {
            huber_factor(r, self.parent.huber_mu)
        } else if r == 0.0 {
            0.0
        } else {
            p * r.powf(p - 2.0)
        };
        out.copy_from(&(&self.projector * gt + normal * factor));
    }
    fn is_quadratic(&self) -> bool {
        self.parent.f.quadratic && self.parent.f.growth.p == 2.0
    }
}

/// Constants of the `g` extension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GConstants {
    pub alpha_prime: f64,
    pub beta_prime: f64,
    /// `|g(y,s,ξ) - g(y,s',ξ)| ≤ lip_s |s - s'| |ξ|`.
    pub lip_s: f64,
    /// `|g(y,s,ξ) - g(y,s,ξ')| ≤ lip_xi |ξ - ξ'|`.
    pub lip_xi: f64,
}

/// `g(y, s, ξ) = f(y, ℙ_s ξ) + |ξ - ℙ_s ξ|` with `ℙ_s = χ(s) P_{Π(s)}`,
/// defined for every `s ∈ R^d`.
#[derive(Debug, Clone)]
pub struct GExtension {
    pub f: Integrand,
    pub manifold: Manifold,
    pub delta0: f64,
    pub huber_mu: f64,
    pub constants: GConstants,
}

impl GExtension {
    pub fn new(f: Integrand, manifold: Manifold, delta0: f64) -> Result<Self> {
        let g = f.growth;
        if g.p != 1.0 {
            return Err(HomogError::UnsupportedGrowth(g.p));
        }
        if f.ambient_dim != manifold.ambient_dim {
            return Err(HomogError::ShapeMismatch(format!(
                "integrand acts on R^{}, manifold lives in R^{}",
                f.ambient_dim, manifold.ambient_dim
            )));
        }
        if !(delta0 > 0.0) || 0.75 * delta0 >= manifold.tubular_radius {
            return Err(HomogError::InvalidInput(format!("delta0 = {delta0} must satisfy 0 < 3 delta0 / 4 < reach")));
        }
        let l = g
            .lipschitz
            .ok_or_else(|| HomogError::InvalidInput("g extension needs a declared Lipschitz constant".into()))?;
        let lip_proj = 7.5 / delta0 + manifold.projector_lipschitz(delta0);
        let constants = GConstants {
            alpha_prime: g.alpha.min(1.0),
            beta_prime: g.beta + 1.0,
            lip_s: (l + 1.0) * lip_proj,
            lip_xi: l + 1.0,
        };
        Ok(Self { f, manifold, delta0, huber_mu: 1e-4, constants })
    }

    pub fn with_huber(mut self, mu: f64) -> Self {
        self.huber_mu = mu;
        self
    }

    /// The matrix `ℙ_s = χ(s) P_{Π(s)}`.
    pub fn cutoff_projector(&self, s: &DVector<f64>) -> Result<DMatrix<f64>> {
        let d = self.manifold.ambient_dim;
        let chi = self.manifold.cutoff_chi(s, self.delta0);
        if chi == 0.0 {
            return Ok(DMatrix::zeros(d, d));
        }
        let base = self.manifold.project(s)?;
        Ok(self.manifold.tangent_projector(&base)? * chi)
    }

    pub fn eval(&self, y: &[f64], s: &DVector<f64>, xi: &DMatrix<f64>) -> Result<f64> {
        let p = self.cutoff_projector(s)?;
        let t = &p * xi;
        Ok(self.f.eval(y, &t) + (xi - &t).norm())
    }

    pub fn at(&self, s: &DVector<f64>) -> Result<GAt<'_>> {
        Ok(GAt { parent: self, projector: self.cutoff_projector(s)? })
    }

    pub fn growth(&self) -> GrowthData {
        GrowthData {
            p: 1.0,
            alpha: self.constants.alpha_prime,
            beta: self.constants.beta_prime,
            lipschitz: Some(self.constants.lip_xi),
        }
    }
}

/// `g(·, s, ·)` at a fixed `s ∈ R^d`.
pub struct GAt<'a> {
    parent: &'a GExtension,
    projector: DMatrix<f64>,
}

impl Density for GAt<'_> {
    fn n_dim(&self) -> usize {
        self.parent.f.n_dim
    }
    fn ambient_dim(&self) -> usize {
        self.parent.f.ambient_dim
    }
    fn growth(&self) -> GrowthData {
        self.parent.growth()
    }
    fn value(&self, y: &[f64], xi: &DMatrix<f64>) -> f64 {
        let t = &self.projector * xi;
        self.parent.f.eval(y, &t) + (xi - &t).norm()
    }
    fn solver_value(&self, y: &[f64], xi: &DMatrix<f64>) -> f64 {
        let t = &self.projector * xi;
        self.parent.f.eval(y, &t) + huber((xi - &t).norm(), self.parent.huber_mu)
    }
    fn solver_grad(&self, y: &[f64], xi: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        let t = &self.projector * xi;
        let normal = xi - &t;
        let mut gt = DMatrix::zeros(xi.nrows(), xi.ncols());
        self.parent.f.grad_into(y, &t, &mut gt);
        let factor = huber_factor(normal.norm(), self.parent.huber_mu);
        // ℙ is symmetric, and I - ℙ is symmetric as well.
        out.copy_from(&(self.projector.transpose() * gt + normal * factor));
    }
}

/// Worst-case residuals found by [`verify_hypotheses`].
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisReport {
    pub samples: usize,
    /// Largest `|f(y + e_i, ξ) - f(y, ξ)|`.
    pub periodicity_residual: f64,
    /// Smallest `f - α|ξ|^p` (negative means violated).
    pub lower_margin: f64,
    /// Smallest `β(1 + |ξ|^p) - f`.
    pub upper_margin: f64,
    /// Largest `|f(ξ) - f(ξ')| / |ξ - ξ'|`, when a Lipschitz constant is declared.
    pub lipschitz_ratio: Option<f64>,
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, max_norm: f64) -> DMatrix<f64> {
    let dir = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
    let n = dir.norm();
    if n == 0.0 {
        return dir;
    }
    let r: f64 = rng.random_range(0.0..max_norm);
    dir * (r / n)
}

/// Sampled check of periodicity, the growth sandwich, and the declared
/// `ξ`-Lipschitz bound. Deterministic in `seed`.
pub fn verify_hypotheses(f: &dyn Density, sample_count: usize, seed: u64) -> Result<HypothesisReport> {
    if sample_count == 0 {
        return Err(HomogError::InvalidInput("sample_count must be >= 1".into()));
    }
    const REL: f64 = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (n, d) = (f.n_dim(), f.ambient_dim());
    let g = f.growth();
    let mut report = HypothesisReport {
        samples: sample_count,
        periodicity_residual: 0.0,
        lower_margin: f64::INFINITY,
        upper_margin: f64::INFINITY,
        lipschitz_ratio: g.lipschitz.map(|_| 0.0),
    };
    for _ in 0..sample_count {
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let xi = random_matrix(&mut rng, d, n, 10.0);
        let v = f.value(&y, &xi);
        let scale = 1.0 + v.abs();
        for i in 0..n {
            let mut shifted = y.clone();
            shifted[i] += 1.0;
            let diff = (f.value(&shifted, &xi) - v).abs();
            report.periodicity_residual = report.periodicity_residual.max(diff);
            if diff > REL * scale {
                return Err(HomogError::HypothesisViolated(format!(
                    "periodicity fails in direction {i} at y = {y:?}, xi = {:?}: difference {diff:e}",
                    xi.as_slice()
                )));
            }
        }
        let norm = xi.norm();
        let lower = v - g.lower(norm);
        let upper = g.upper(norm) - v;
        report.lower_margin = report.lower_margin.min(lower);
        report.upper_margin = report.upper_margin.min(upper);
        if lower < -REL * scale || upper < -REL * scale || !(v >= 0.0) {
            return Err(HomogError::HypothesisViolated(format!(
                "growth sandwich fails at y = {y:?}, xi = {:?}: f = {v}, bounds [{}, {}]",
                xi.as_slice(),
                g.lower(norm),
                g.upper(norm)
            )));
        }
        if let Some(l) = g.lipschitz {
            let scale = 10f64.powi(rng.random_range(-4..1));
            let delta = random_matrix(&mut rng, d, n, scale);
            let dn = delta.norm();
            if dn > 0.0 {
                let other = &xi + &delta;
                let ratio = (f.value(&y, &other) - v).abs() / dn;
                if let Some(r) = report.lipschitz_ratio.as_mut() {
                    *r = r.max(ratio);
                }
                if ratio > l * (1.0 + 1e-9) + REL * scale / dn {
                    return Err(HomogError::HypothesisViolated(format!(
                        "Lipschitz bound {l} fails at y = {y:?}, xi = {:?}, xi' = {:?}: ratio {ratio}",
                        xi.as_slice(),
                        other.as_slice()
                    )));
                }
            }
        }
    }
    Ok(report)
}
