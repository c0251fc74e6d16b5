//! The tangentially homogenized density `Tf_hom(s, ξ)` and its property checks.

use std::collections::HashMap;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cell_solver::{
    check_tangent, solve_cell, solve_cell_unconstrained, Boundary, CellProblemSpec, CorrectorField, SolverKind,
};
use crate::error::{HomogError, Result};
use crate::integrand::{merged_segments, Density, FBar, GExtension, Integrand, StepProfile};
use crate::manifold::{circle_angle, circle_point, Manifold, ManifoldKind};

/// Options shared by every `Tf_hom` evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TfHomOptions {
    pub t_list: Vec<usize>,
    pub n: usize,
    pub boundary: Boundary,
    pub rel_tol: f64,
    /// `None` picks conjugate gradients for quadratic densities, L-BFGS otherwise.
    pub solver: Option<SolverKind>,
    pub tol_grad: f64,
    pub max_iters: usize,
}

impl Default for TfHomOptions {
    fn default() -> Self {
        Self {
            t_list: vec![1, 2, 4],
            n: 16,
            boundary: Boundary::Periodic,
            rel_tol: 5e-3,
            solver: None,
            tol_grad: 1e-8,
            max_iters: 20_000,
        }
    }
}

impl TfHomOptions {
    fn spec(&self, m: &Manifold, s: &DVector<f64>, xi: &DMatrix<f64>, t: usize, quadratic: bool) -> CellProblemSpec {
        let solver =
            self.solver.unwrap_or(if quadratic { SolverKind::ConjugateGradient } else { SolverKind::QuasiNewton });
        CellProblemSpec::new(m.clone(), s.clone(), xi.clone())
            .with_t(t)
            .with_nodes_per_period(self.n)
            .with_boundary(self.boundary)
            .with_solver(solver)
            .with_tol(self.tol_grad)
            .with_max_iters(self.max_iters)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: usize,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfHomResult {
    pub value: f64,
    pub trace: Vec<TracePoint>,
    /// Relative change between the last two cube sizes.
    pub rel_change: f64,
    /// False when `rel_change` exceeds the requested tolerance.
    pub t_converged: bool,
    /// False when some cell solve hit its iteration cap.
    pub solver_converged: bool,
}

fn run_t_list(
    opts: &TfHomOptions,
    mut solve: impl FnMut(usize) -> Result<crate::cell_solver::CellSolution>,
) -> Result<TfHomResult> {
    if opts.t_list.is_empty() {
        return Err(HomogError::InvalidInput("t_list must not be empty".into()));
    }
    let mut trace = Vec::with_capacity(opts.t_list.len());
    for &t in &opts.t_list {
        let sol = solve(t)?;
        trace.push(TracePoint { t, value: sol.value, iterations: sol.iterations, converged: sol.converged });
    }
    let last = trace[trace.len() - 1].value;
    let rel_change = if trace.len() >= 2 {
        let prev = trace[trace.len() - 2].value;
        (last - prev).abs() / last.abs().max(f64::MIN_POSITIVE)
    } else {
        0.0
    };
    let rel_change = if rel_change.is_nan() { 0.0 } else { rel_change };
    let t_converged = rel_change <= opts.rel_tol;
    if !t_converged {
        warn!("Tf_hom trace unconverged in t: relative change {rel_change:e}");
    }
    Ok(TfHomResult { value: last, solver_converged: trace.iter().all(|p| p.converged), trace, rel_change, t_converged })
}

/// `Tf_hom(s, ξ)` estimated by the last cube size of `opts.t_list`.
pub fn tf_hom(
    f: &Integrand,
    m: &Manifold,
    s: &DVector<f64>,
    xi: &DMatrix<f64>,
    opts: &TfHomOptions,
) -> Result<TfHomResult> {
    check_tangent(m, s, xi)?;
    run_t_list(opts, |t| solve_cell(f, &opts.spec(m, s, xi, t, f.is_quadratic())))
}

/// Homogenized value of an extended density frozen at `s`, with `R^d`-valued correctors.
pub fn extended_hom(
    fext: &dyn Density,
    m: &Manifold,
    s: &DVector<f64>,
    xi: &DMatrix<f64>,
    opts: &TfHomOptions,
) -> Result<TfHomResult> {
    run_t_list(opts, |t| solve_cell_unconstrained(fext, &opts.spec(m, s, xi, t, fext.is_quadratic())))
}

/// Harmonic and arithmetic means over one period of `t ↦ a(t) s₂² + b(t) s₁²`.
pub fn laminate_means(a: &StepProfile, b: &StepProfile, s: &DVector<f64>) -> (f64, f64) {
    let (s1sq, s2sq) = (s[0] * s[0], s[1] * s[1]);
    let mut inv = 0.0;
    let mut mean = 0.0;
    for (len, av, bv) in merged_segments(a, b) {
        let w = av * s2sq + bv * s1sq;
        inv += len / w;
        mean += len * w;
    }
    (1.0 / inv, mean)
}

/// Closed-form `Tf_hom` for the quadratic laminate on `S^1`:
/// `Σ_j α_j(s) |ξ_j|²` with `α_1` the harmonic and `α_{j≥2}` the arithmetic mean.
pub fn laminate_oracle(a: &StepProfile, b: &StepProfile, s: &DVector<f64>, xi: &DMatrix<f64>) -> Result<f64> {
    let circle = Manifold::circle();
    check_tangent(&circle, s, xi)?;
    let (harmonic, arithmetic) = laminate_means(a, b, s);
    Ok((0..xi.ncols())
        .map(|j| {
            let w = if j == 0 { harmonic } else { arithmetic };
            w * xi.column(j).norm_squared()
        })
        .sum())
}

/// Which extension the equivalence check solves with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ExtensionChoice {
    FBar,
    G { delta0: f64, huber_mu: f64 },
}

impl ExtensionChoice {
    /// `f̄` for `p > 1`, the Huber-smoothed `g` for `p = 1`.
    pub fn for_integrand(f: &Integrand, m: &Manifold) -> Self {
        if f.growth().p == 1.0 {
            ExtensionChoice::G { delta0: m.delta0, huber_mu: 1e-4 }
        } else {
            ExtensionChoice::FBar
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceEntry {
    pub s: Vec<f64>,
    pub xi: Vec<f64>,
    pub constrained: f64,
    pub unconstrained: f64,
    pub rel_gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub extension: ExtensionChoice,
    pub entries: Vec<EquivalenceEntry>,
    pub max_rel_gap: f64,
}

/// Compares `Tf_hom` with the homogenized value of `f̄` (or `g`) on each sample.
pub fn verify_equivalence(
    f: &Integrand,
    m: &Manifold,
    samples: &[(DVector<f64>, DMatrix<f64>)],
    opts: &TfHomOptions,
    extension: ExtensionChoice,
) -> Result<EquivalenceReport> {
    let fbar;
    let gext;
    let entries = match extension {
        ExtensionChoice::FBar => {
            fbar = FBar::new(f.clone(), m.clone())?;
            samples
                .par_iter()
                .map(|(s, xi)| {
                    let c = tf_hom(f, m, s, xi, opts)?.value;
                    let u = extended_hom(&fbar.at(s)?, m, s, xi, opts)?.value;
                    Ok(entry(s, xi, c, u))
                })
                .collect::<Result<Vec<_>>>()?
        }
        ExtensionChoice::G { delta0, huber_mu } => {
            gext = GExtension::new(f.clone(), m.clone(), delta0)?.with_huber(huber_mu);
            samples
                .par_iter()
                .map(|(s, xi)| {
                    let c = tf_hom(f, m, s, xi, opts)?.value;
                    let u = extended_hom(&gext.at(s)?, m, s, xi, opts)?.value;
                    Ok(entry(s, xi, c, u))
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let max_rel_gap = entries.iter().map(|e| e.rel_gap).fold(0.0, f64::max);
    Ok(EquivalenceReport { extension, entries, max_rel_gap })
}

fn entry(s: &DVector<f64>, xi: &DMatrix<f64>, constrained: f64, unconstrained: f64) -> EquivalenceEntry {
    EquivalenceEntry {
        s: s.as_slice().to_vec(),
        xi: xi.as_slice().to_vec(),
        constrained,
        unconstrained,
        rel_gap: (constrained - unconstrained).abs() / (1.0 + constrained.abs()),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct QuasiconvexityReport {
    pub lhs: f64,
    pub residuals: Vec<f64>,
    pub max_residual: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Memoized evaluation of `Tf_hom(s, ·)` at a fixed base point.
struct DensityAt<'a> {
    f: &'a Integrand,
    m: &'a Manifold,
    s: &'a DVector<f64>,
    opts: &'a TfHomOptions,
    cache: HashMap<Vec<u64>, f64>,
}

impl DensityAt<'_> {
    fn eval(&mut self, xi: &DMatrix<f64>) -> Result<f64> {
        let key: Vec<u64> = xi.iter().map(|v| v.to_bits()).collect();
        if let Some(v) = self.cache.get(&key) {
            return Ok(*v);
        }
        let v = tf_hom(self.f, self.m, self.s, xi, self.opts)?.value;
        self.cache.insert(key, v);
        Ok(v)
    }
}

fn jensen_rhs(at: &mut DensityAt<'_>, xi: &DMatrix<f64>, basis: &DMatrix<f64>, trial: &CorrectorField) -> Result<f64> {
    let grid = trial.grid();
    let m = trial.coord_dim;
    let mut g = DMatrix::zeros(m, grid.n_dim);
    // Group identical gradients so repeated values are averaged exactly.
    let mut groups: Vec<(DMatrix<f64>, usize)> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    for e in 0..grid.element_count() {
        grid.element_gradient(e, &trial.values, m, &mut g);
        let z = xi + basis * &g;
        let key: Vec<u64> = z.iter().map(|v| v.to_bits()).collect();
        match index.get(&key) {
            Some(&k) => groups[k].1 += 1,
            None => {
                index.insert(key, groups.len());
                groups.push((z, 1));
            }
        }
    }
    let total = grid.element_count();
    if groups.len() == 1 {
        return at.eval(&groups[0].0);
    }
    let mut acc = 0.0;
    for (z, count) in &groups {
        acc += at.eval(z)? * (*count as f64 / total as f64);
    }
    Ok(acc)
}

/// `Tf_hom(s, ξ) − ∫_Q Tf_hom(s, ξ + ∇φ)` for one Dirichlet-zero trial field on
/// `Q = (0,1)^N`, integrated with element-center gradients.
pub fn quasiconvexity_residual(
    f: &Integrand,
    m: &Manifold,
    s: &DVector<f64>,
    xi: &DMatrix<f64>,
    trial: &CorrectorField,
    opts: &TfHomOptions,
) -> Result<f64> {
    check_trial(m, xi, trial)?;
    let basis = m.tangent_basis(s)?;
    let mut at = DensityAt { f, m, s, opts, cache: HashMap::new() };
    let lhs = at.eval(xi)?;
    Ok(lhs - jensen_rhs(&mut at, xi, &basis, trial)?)
}

fn check_trial(m: &Manifold, xi: &DMatrix<f64>, trial: &CorrectorField) -> Result<()> {
    if trial.boundary != Boundary::DirichletZero
        || trial.t != 1
        || trial.n_dim != xi.ncols()
        || trial.coord_dim != m.intrinsic_dim
    {
        return Err(HomogError::ShapeMismatch(
            "trial fields must be Dirichlet-zero tangent-coordinate fields on the unit cube".into(),
        ));
    }
    Ok(())
}

/// Random piecewise-multilinear trial field with interior coordinates in `[-amplitude, amplitude]`.
pub fn random_trial_field(
    n_dim: usize,
    cells: usize,
    coord_dim: usize,
    amplitude: f64,
    rng: &mut impl Rng,
) -> CorrectorField {
    let mut field = CorrectorField::zeros(n_dim, 1, cells, Boundary::DirichletZero, coord_dim);
    let grid = field.grid();
    for node in 0..grid.node_count() {
        if !grid.is_boundary(node) {
            for c in 0..coord_dim {
                field.values[node * coord_dim + c] = rng.random_range(-amplitude..=amplitude);
            }
        }
    }
    field
}

/// Tests the Jensen inequality of tangential quasiconvexity on random trial fields.
#[allow(clippy::too_many_arguments)]
pub fn check_tangential_quasiconvexity(
    f: &Integrand,
    m: &Manifold,
    s: &DVector<f64>,
    xi: &DMatrix<f64>,
    trial_count: usize,
    trial_cells: usize,
    seed: u64,
    opts: &TfHomOptions,
) -> Result<QuasiconvexityReport> {
    check_tangent(m, s, xi)?;
    let basis = m.tangent_basis(s)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trials: Vec<CorrectorField> =
        (0..trial_count).map(|_| random_trial_field(xi.ncols(), trial_cells, m.intrinsic_dim, 1.0, &mut rng)).collect();
    let lhs = DensityAt { f, m, s, opts, cache: HashMap::new() }.eval(xi)?;
    let residuals = trials
        .par_iter()
        .map(|trial| {
            let mut at = DensityAt { f, m, s, opts, cache: HashMap::new() };
            Ok(lhs - jensen_rhs(&mut at, xi, &basis, trial)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max_residual = residuals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let tolerance = 1e-3 * (1.0 + xi.norm_squared());
    Ok(QuasiconvexityReport { lhs, passed: max_residual <= tolerance, residuals, max_residual, tolerance })
}

/// A base point with two tangent matrices at it.
#[derive(Debug, Clone)]
pub struct TangentPair {
    pub s: DVector<f64>,
    pub xi: DMatrix<f64>,
    pub xi2: DMatrix<f64>,
}

fn random_coeffs(rng: &mut ChaCha8Rng, rows: usize, cols: usize, radius: f64) -> DMatrix<f64> {
    loop {
        let c = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-radius..radius));
        if c.norm() <= radius {
            return c;
        }
    }
}

/// Sequentially generated pairs: the first `k` pairs do not depend on `count`.
pub fn sample_tangent_pairs(
    m: &Manifold,
    n_dim: usize,
    count: usize,
    radius: f64,
    seed: u64,
) -> Result<Vec<TangentPair>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let s = m.sample_point(&mut rng);
            let b = m.tangent_basis(&s)?;
            let xi = &b * random_coeffs(&mut rng, m.intrinsic_dim, n_dim, radius);
            let xi2 = &b * random_coeffs(&mut rng, m.intrinsic_dim, n_dim, radius);
            Ok(TangentPair { s, xi, xi2 })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct GrowthLipschitzReport {
    pub pairs: usize,
    pub skipped: usize,
    /// Smallest `C` consistent with every sampled Lipschitz ratio.
    pub fitted_c: f64,
    pub ratios: Vec<f64>,
}

/// Checks the growth sandwich at every sampled point and fits the constant of
/// the `(1 + |ξ|^{p-1} + |ξ'|^{p-1}) |ξ - ξ'|` Lipschitz estimate.
pub fn check_growth_lipschitz(
    f: &Integrand,
    m: &Manifold,
    pairs: &[TangentPair],
    opts: &TfHomOptions,
) -> Result<GrowthLipschitzReport> {
    let g = f.growth();
    let values = pairs
        .par_iter()
        .map(|pair| {
            let v1 = tf_hom(f, m, &pair.s, &pair.xi, opts)?.value;
            let v2 = tf_hom(f, m, &pair.s, &pair.xi2, opts)?.value;
            Ok((v1, v2))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ratios = Vec::with_capacity(pairs.len());
    let mut skipped = 0;
    for (pair, (v1, v2)) in pairs.iter().zip(values) {
        for (xi, v) in [(&pair.xi, v1), (&pair.xi2, v2)] {
            check_sandwich(g.alpha, g.beta, g.p, xi, v).map_err(|msg| {
                HomogError::GrowthViolation(format!("s = {:?}, xi = {:?}: {msg}", pair.s.as_slice(), xi.as_slice()))
            })?;
        }
        let dist = (&pair.xi - &pair.xi2).norm();
        if dist == 0.0 {
            skipped += 1;
            continue;
        }
        let weight = 1.0 + pair.xi.norm().powf(g.p - 1.0) + pair.xi2.norm().powf(g.p - 1.0);
        ratios.push((v1 - v2).abs() / (weight * dist));
    }
    let fitted_c = ratios.iter().copied().fold(0.0, f64::max);
    Ok(GrowthLipschitzReport { pairs: pairs.len(), skipped, fitted_c, ratios })
}

/// `α|ξ|^p ≤ v ≤ β(1 + |ξ|^p)`, checked without slack.
pub fn check_sandwich(alpha: f64, beta: f64, p: f64, xi: &DMatrix<f64>, v: f64) -> std::result::Result<(), String> {
    let r = xi.norm_squared().powf(0.5 * p);
    let (lo, hi) = (alpha * r, beta * (1.0 + r));
    if lo <= v && v <= hi {
        Ok(())
    } else {
        Err(format!("value {v} outside [{lo}, {hi}]"))
    }
}

/// Per-axis coefficient lattice; every tangent coefficient ranges over `values`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiLattice {
    pub values: Vec<f64>,
}

impl XiLattice {
    pub fn uniform(min: f64, max: f64, count: usize) -> Self {
        let values = match count {
            0 => Vec::new(),
            1 => vec![min],
            _ => (0..count).map(|i| min + (max - min) * i as f64 / (count - 1) as f64).collect(),
        };
        Self { values }
    }

    pub fn integers(min: i64, max: i64) -> Self {
        Self { values: (min..=max).map(|v| v as f64).collect() }
    }

    fn points(&self, axes: usize) -> usize {
        if self.values.is_empty() {
            0
        } else {
            self.values.len().pow(axes as u32)
        }
    }

    /// Coefficients of lattice point `idx`, axis 0 slowest.
    fn coeffs(&self, axes: usize, mut idx: usize) -> Vec<f64> {
        let l = self.values.len();
        let mut out = vec![0.0; axes];
        for a in (0..axes).rev() {
            out[a] = self.values[idx % l];
            idx /= l;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub s_index: usize,
    /// Tangent coefficients, column-major `m × N`.
    pub coeffs: Vec<f64>,
    pub value: f64,
    pub converged: bool,
    pub error: Option<String>,
    pub trace: Vec<TracePoint>,
}

/// Sampled `Tf_hom` over base points and a tangent-coefficient lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub manifold_kind: ManifoldKind,
    pub integrand: String,
    pub n_dim: usize,
    pub coord_dim: usize,
    pub s_points: Vec<Vec<f64>>,
    /// Uniform angles in `[0, 2π)` when the base points form a circle grid.
    pub angles: Option<Vec<f64>>,
    pub lattice: XiLattice,
    pub entries: Vec<TableEntry>,
}

impl DensityTable {
    pub fn axes(&self) -> usize {
        self.coord_dim * self.n_dim
    }

    pub fn failures(&self) -> usize {
        self.entries.iter().filter(|e| e.error.is_some()).count()
    }

    /// Tangent matrix `ξ = B(s) C` of an entry.
    pub fn xi_of(&self, m: &Manifold, e: &TableEntry) -> Result<DMatrix<f64>> {
        let s = DVector::from_column_slice(&self.s_points[e.s_index]);
        let b = m.tangent_basis(&s)?;
        Ok(b * DMatrix::from_column_slice(self.coord_dim, self.n_dim, &e.coeffs))
    }

    /// Violations of `α|ξ|^p ≤ v ≤ β(1 + |ξ|^p)` among successful entries.
    pub fn sandwich_violations(&self, m: &Manifold, alpha: f64, beta: f64, p: f64) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for e in self.entries.iter().filter(|e| e.error.is_none()) {
            let xi = self.xi_of(m, e)?;
            if let Err(msg) = check_sandwich(alpha, beta, p, &xi, e.value) {
                out.push(format!("s_index {} coeffs {:?}: {msg}", e.s_index, e.coeffs));
            }
        }
        Ok(out)
    }
}

/// Points on `M` and, for `S^1`, their angles.
pub type AngularGrid = (Vec<DVector<f64>>, Option<Vec<f64>>);

/// `count` equally spaced angles on `S^1`, or their `k`-fold product on `(S^1)^k`.
pub fn angular_grid(m: &Manifold, count: usize) -> Result<AngularGrid> {
    let angles: Vec<f64> = (0..count).map(|k| std::f64::consts::TAU * k as f64 / count as f64).collect();
    match m.kind {
        ManifoldKind::Sphere(2) => Ok((angles.iter().map(|&a| circle_point(a)).collect(), Some(angles))),
        ManifoldKind::FlatTorusCircleProduct(k) => {
            let total = count.pow(k as u32);
            let pts = (0..total)
                .map(|mut idx| {
                    let mut s = DVector::zeros(2 * k);
                    for i in 0..k {
                        let a = angles[idx % count];
                        idx /= count;
                        s[2 * i] = a.cos();
                        s[2 * i + 1] = a.sin();
                    }
                    s
                })
                .collect();
            Ok((pts, None))
        }
        ManifoldKind::Sphere(_) => {
            Err(HomogError::UnsupportedManifold("angular grids exist for circles and circle products only".into()))
        }
    }
}

/// Fills a table with independent `Tf_hom` evaluations (run on the current rayon pool).
pub fn build_density_table(
    f: &Integrand,
    m: &Manifold,
    s_count: usize,
    lattice: &XiLattice,
    opts: &TfHomOptions,
) -> Result<DensityTable> {
    let (s_points, angles) = angular_grid(m, s_count)?;
    let n_dim = f.n_dim();
    let coord_dim = m.intrinsic_dim;
    let axes = coord_dim * n_dim;
    let per_s = lattice.points(axes);
    let tasks: Vec<(usize, Vec<f64>)> = (0..s_points.len())
        .flat_map(|si| (0..per_s).map(move |li| (si, li)))
        .map(|(si, li)| (si, lattice.coeffs(axes, li)))
        .collect();
    let bases = s_points.iter().map(|s| m.tangent_basis(s)).collect::<Result<Vec<_>>>()?;
    let entries = tasks
        .into_par_iter()
        .map(|(s_index, coeffs)| {
            let xi = &bases[s_index] * DMatrix::from_column_slice(coord_dim, n_dim, &coeffs);
            match tf_hom(f, m, &s_points[s_index], &xi, opts) {
                Ok(r) => TableEntry {
                    s_index,
                    coeffs,
                    value: r.value,
                    converged: r.t_converged && r.solver_converged,
                    error: None,
                    trace: r.trace,
                },
                Err(e) => TableEntry {
                    s_index,
                    coeffs,
                    value: f64::NAN,
                    converged: false,
                    error: Some(e.to_string()),
                    trace: Vec::new(),
                },
            }
        })
        .collect();
    Ok(DensityTable {
        manifold_kind: m.kind,
        integrand: f.label().to_string(),
        n_dim,
        coord_dim,
        s_points: s_points.iter().map(|s| s.as_slice().to_vec()).collect(),
        angles,
        lattice: lattice.clone(),
        entries,
    })
}

/// Multilinear interpolation of a circle table in `(θ, tangent coefficients)`.
///
/// `θ` wraps periodically; coefficients outside the lattice are clamped
/// and reported as such.
#[derive(Debug, Clone)]
pub struct TableInterpolator {
    count: usize,
    axes: usize,
    lat_min: f64,
    lat_step: f64,
    lat_len: usize,
    values: Vec<f64>,
}

impl TableInterpolator {
    pub fn new(table: &DensityTable) -> Result<Self> {
        if table.manifold_kind != ManifoldKind::Sphere(2) || table.angles.is_none() {
            return Err(HomogError::UnsupportedManifold("table interpolation is implemented for S^1 tables".into()));
        }
        let count = table.s_points.len();
        let lat = &table.lattice.values;
        if lat.len() < 2 || count < 1 {
            return Err(HomogError::InvalidInput("table too small to interpolate".into()));
        }
        let lat_step = (lat[lat.len() - 1] - lat[0]) / (lat.len() - 1) as f64;
        if lat.windows(2).any(|w| ((w[1] - w[0]) - lat_step).abs() > 1e-9 * lat_step.abs().max(1.0)) {
            return Err(HomogError::InvalidInput("lattice must be uniform".into()));
        }
        let axes = table.axes();
        let per_s = lat.len().pow(axes as u32);
        if table.entries.len() != count * per_s {
            return Err(HomogError::ShapeMismatch("table is incomplete".into()));
        }
        let mut values = vec![f64::NAN; table.entries.len()];
        for e in &table.entries {
            let li =
                e.coeffs.iter().fold(0usize, |acc, c| acc * lat.len() + ((c - lat[0]) / lat_step).round() as usize);
            values[e.s_index * per_s + li] = e.value;
        }
        Ok(Self { count, axes, lat_min: lat[0], lat_step, lat_len: lat.len(), values })
    }

    pub fn coeff_range(&self) -> (f64, f64) {
        (self.lat_min, self.lat_min + self.lat_step * (self.lat_len - 1) as f64)
    }

    /// Returns the interpolated value and whether any coefficient was clamped.
    pub fn eval(&self, theta: f64, coeffs: &[f64]) -> (f64, bool) {
        debug_assert_eq!(coeffs.len(), self.axes);
        let pos = theta.rem_euclid(std::f64::consts::TAU) / std::f64::consts::TAU * self.count as f64;
        let i0 = (pos.floor() as usize) % self.count;
        let i1 = (i0 + 1) % self.count;
        let wt = pos - pos.floor();
        let mut clamped = false;
        let mut lo = vec![0usize; self.axes];
        let mut frac = vec![0.0; self.axes];
        for (a, &c) in coeffs.iter().enumerate() {
            let mut u = (c - self.lat_min) / self.lat_step;
            let top = (self.lat_len - 1) as f64;
            if u < 0.0 || u > top {
                clamped = true;
                u = u.clamp(0.0, top);
            }
            let k = (u.floor() as usize).min(self.lat_len - 2);
            lo[a] = k;
            frac[a] = u - k as f64;
        }
        let per_s = self.lat_len.pow(self.axes as u32);
        let mut acc = 0.0;
        for corner in 0..(1usize << self.axes) {
            let mut w = 1.0;
            let mut li = 0;
            for a in 0..self.axes {
                let bit = corner >> (self.axes - 1 - a) & 1;
                w *= if bit == 1 { frac[a] } else { 1.0 - frac[a] };
                li = li * self.lat_len + lo[a] + bit;
            }
            if w == 0.0 {
                continue;
            }
            let v = (1.0 - wt) * self.values[i0 * per_s + li] + wt * self.values[i1 * per_s + li];
            acc += w * v;
        }
        (acc, clamped)
    }

    /// Interpolated `Tf_hom(s, ξ)` for a point on `S^1` and a tangent matrix at it.
    pub fn eval_at(&self, s: &DVector<f64>, xi: &DMatrix<f64>) -> (f64, bool) {
        let tau = [-s[1], s[0]];
        let coeffs: Vec<f64> = (0..xi.ncols()).map(|j| tau[0] * xi[(0, j)] + tau[1] * xi[(1, j)]).collect();
        self.eval(circle_angle(s), &coeffs)
    }
}
