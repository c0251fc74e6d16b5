//! Minimum energies of the oscillating functionals `F_ε` versus the
//! homogenized functional `F_hom`, on circle-valued fields over `(0,1)^N`.

use log::{debug, warn};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::{build_density_table, DensityTable, TableInterpolator, TfHomOptions, XiLattice};
use crate::error::{HomogError, Result};
use crate::grid::Grid;
use crate::integrand::{Density, GExtension, Integrand};
use crate::manifold::{circle_point, Manifold};
use crate::optim::conjugate_gradient;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    /// Stop once the relative energy decrease stays below `tol` for 10 iterations.
    pub tol: f64,
    pub armijo_c: f64,
    pub initial_step: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { max_iters: 5000, tol: 1e-10, armijo_c: 1e-4, initial_step: 1.0 }
    }
}

/// Resolution of the density table built for `F_hom`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TableConfig {
    pub angles: usize,
    pub coeff_min: f64,
    pub coeff_max: f64,
    pub coeff_count: usize,
    pub t_list: Vec<usize>,
    pub n: usize,
}

impl Default for TableConfig {
    fn default() -> Self {
        Self { angles: 64, coeff_min: -4.0, coeff_max: 4.0, coeff_count: 161, t_list: vec![1], n: 16 }
    }
}

/// Lattice of the 1D `(x, θ)` shortest-path oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DpConfig {
    pub steps: usize,
    pub levels: usize,
    /// Largest jump between consecutive columns, in levels; `0` means `levels / 4`.
    pub window: usize,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self { steps: 32, levels: 2000, window: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GammaExperimentConfig {
    pub n_dim: usize,
    /// Mesh cells per side of `(0,1)^N`, shared by every run.
    pub cells: usize,
    /// Boundary angles at `x_1 = 0` and `x_1 = 1`; the trace is affine in `x_1`.
    pub theta_left: f64,
    pub theta_right: f64,
    pub epsilons: Vec<f64>,
    /// Integer translation of the coefficient pattern (`y ↦ y + shift`).
    pub shift: i64,
    pub optimizer: OptimizerConfig,
    pub table: TableConfig,
    pub huber_mu: f64,
    pub dp: Option<DpConfig>,
    pub dump_fields: bool,
    /// Directory holding a precomputed `density.csv`/`density.json` pair.
    pub table_dir: Option<std::path::PathBuf>,
}

impl Default for GammaExperimentConfig {
    fn default() -> Self {
        Self {
            n_dim: 1,
            cells: 512,
            theta_left: 0.0,
            theta_right: std::f64::consts::FRAC_PI_2,
            epsilons: vec![0.25, 0.125, 0.0625, 0.03125, 0.015625],
            shift: 0,
            optimizer: OptimizerConfig::default(),
            table: TableConfig::default(),
            huber_mu: 1e-4,
            dp: Some(DpConfig::default()),
            dump_fields: false,
            table_dir: None,
        }
    }
}

impl GammaExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.n_dim) {
            return Err(HomogError::InvalidInput(format!("n_dim must be 1 or 2, got {}", self.n_dim)));
        }
        if self.cells < 2 {
            return Err(HomogError::InvalidInput("cells must be at least 2".into()));
        }
        for &eps in &self.epsilons {
            periods_per_side(eps, self.cells)?;
        }
        if let Some(eps_min) = self.epsilons.iter().copied().reduce(f64::min) {
            let per_period = self.cells as f64 * eps_min;
            if per_period < 8.0 - 1e-9 {
                return Err(HomogError::InvalidInput(format!(
                    "mesh does not resolve eps = {eps_min}: {per_period} cells per period, need 8"
                )));
            }
        }
        if self.dp.is_some() && self.n_dim != 1 {
            return Err(HomogError::InvalidInput("the shortest-path oracle is one-dimensional".into()));
        }
        Ok(())
    }

    fn grid(&self) -> Grid {
        Grid::new(self.n_dim, self.cells, 1.0 / self.cells as f64, false)
    }
}

/// Checks that `1/ε` is an integer dividing `cells` and returns it.
fn periods_per_side(eps: f64, cells: usize) -> Result<usize> {
    let inv = 1.0 / eps;
    let k = inv.round();
    if !(eps > 0.0) || k < 1.0 || (inv - k).abs() > 1e-9 * k {
        return Err(HomogError::InvalidInput(format!("1/eps must be a positive integer, got eps = {eps}")));
    }
    let k = k as usize;
    if !cells.is_multiple_of(k) {
        return Err(HomogError::InvalidInput(format!("{cells} cells do not tile 1/eps = {k} periods")));
    }
    Ok(k)
}

/// Nodal circle-valued field on the uniform mesh of `(0,1)^N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub n_dim: usize,
    pub cells: usize,
    /// Node-major ambient coordinates, two per node.
    pub values: Vec<f64>,
}

impl Field {
    pub fn grid(&self) -> Grid {
        Grid::new(self.n_dim, self.cells, 1.0 / self.cells as f64, false)
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / 2
    }

    pub fn angles(&self) -> Vec<f64> {
        self.values.chunks(2).map(|p| p[1].atan2(p[0])).collect()
    }

    /// Largest `||u_i| - 1|` over the nodes.
    pub fn constraint_residual(&self) -> f64 {
        self.values.chunks(2).map(|p| (p[0].hypot(p[1]) - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Geodesic interpolation of the boundary trace: `θ(x) = θ_L + (θ_R − θ_L) x_1`.
///
/// The trace is affine in `x_1`, so this is also its harmonic extension in 2D.
pub fn initial_field(config: &GammaExperimentConfig) -> Field {
    let grid = config.grid();
    let mut x = vec![0.0; config.n_dim];
    let mut values = Vec::with_capacity(2 * grid.node_count());
    for i in 0..grid.node_count() {
        grid.node_coords(i, &mut x);
        let th = config.theta_left + (config.theta_right - config.theta_left) * x[0];
        values.extend_from_slice(circle_point(th).as_slice());
    }
    Field { n_dim: config.n_dim, cells: config.cells, values }
}

/// A discrete energy on nodal fields. `value` is reported, `solver_value_grad`
/// is what the optimizer descends (they differ only by smoothing).
pub trait DiscreteEnergy: Sync {
    fn value(&self, u: &[f64]) -> f64;
    fn solver_value_grad(&self, u: &[f64], grad: &mut [f64]) -> f64;
}

/// `F_ε(u) = ∫ f(x/ε, ∇u)`, or its `g`-extension surrogate when `p = 1`.
pub struct OscillatingEnergy<'a> {
    f: &'a Integrand,
    g: Option<GExtension>,
    grid: Grid,
    eps: f64,
    shift: f64,
}

impl<'a> OscillatingEnergy<'a> {
    pub fn new(f: &'a Integrand, m: &Manifold, config: &GammaExperimentConfig, eps: f64) -> Result<Self> {
        check_setup(f, m, config)?;
        let g = if f.growth().p == 1.0 {
            Some(GExtension::new(f.clone(), m.clone(), m.delta0)?.with_huber(config.huber_mu))
        } else {
            None
        };
        Ok(Self { f, g, grid: config.grid(), eps, shift: config.shift as f64 })
    }

    fn y_of(&self, e: usize, y: &mut [f64]) {
        self.grid.element_center(e, y);
        for v in y.iter_mut() {
            *v = *v / self.eps + self.shift;
        }
    }

    fn element_value(&self, e: usize, u: &[f64], smoothed: bool, y: &mut [f64], gm: &mut DMatrix<f64>) -> f64 {
        self.y_of(e, y);
        self.grid.element_gradient(e, u, 2, gm);
        match &self.g {
            None => self.f.eval(y, gm),
            Some(g) => {
                let mut mean = [0.0; 2];
                self.grid.element_mean(e, u, 2, &mut mean);
                let s = DVector::from_column_slice(&mean);
                match g.at(&s) {
                    Ok(at) if smoothed => at.solver_value(y, gm),
                    Ok(at) => at.value(y, gm),
                    Err(_) => f64::INFINITY,
                }
            }
        }
    }
}

impl DiscreteEnergy for OscillatingEnergy<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        let vol = self.grid.h.powi(self.grid.n_dim as i32);
        let mut y = vec![0.0; self.grid.n_dim];
        let mut gm = DMatrix::zeros(2, self.grid.n_dim);
        (0..self.grid.element_count()).map(|e| vol * self.element_value(e, u, false, &mut y, &mut gm)).sum()
    }

    fn solver_value_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        if self.g.is_some() {
            return fd_value_grad(&self.grid, u, grad, |e, corners| {
                let mut y = vec![0.0; self.grid.n_dim];
                let mut gm = DMatrix::zeros(2, self.grid.n_dim);
                self.element_value(e, corners, true, &mut y, &mut gm)
            });
        }
        grad.fill(0.0);
        let vol = self.grid.h.powi(self.grid.n_dim as i32);
        let mut y = vec![0.0; self.grid.n_dim];
        let mut gm = DMatrix::zeros(2, self.grid.n_dim);
        let mut dg = DMatrix::zeros(2, self.grid.n_dim);
        let mut total = 0.0;
        for e in 0..self.grid.element_count() {
            self.y_of(e, &mut y);
            self.grid.element_gradient(e, u, 2, &mut gm);
            total += vol * self.f.eval(&y, &gm);
            self.f.grad_into(&y, &gm, &mut dg);
            self.grid.scatter_gradient(e, &dg, 2, vol, grad);
        }
        total
    }
}

/// `F_hom(u) = ∫ Tf_hom(u, ∇u)` through multilinear table interpolation at
/// element centers: `s_c = Π(mean of corners)`, coefficients `τ(s_c)ᵀ ∇u`.
pub struct HomogenizedEnergy<'a> {
    table: &'a TableInterpolator,
    grid: Grid,
    clamp_events: std::sync::atomic::AtomicUsize,
}

impl<'a> HomogenizedEnergy<'a> {
    pub fn new(table: &'a TableInterpolator, config: &GammaExperimentConfig) -> Self {
        Self { table, grid: config.grid(), clamp_events: Default::default() }
    }

    /// Clamped element evaluations accumulated so far.
    pub fn clamp_events(&self) -> usize {
        self.clamp_events.load(std::sync::atomic::Ordering::Relaxed)
    }

    /// Elements whose coefficients fall outside the table at `u`.
    pub fn clamped_elements(&self, u: &[f64]) -> usize {
        (0..self.grid.element_count()).filter(|&e| self.element(e, u).1).count()
    }

    fn element(&self, e: usize, u: &[f64]) -> (f64, bool) {
        let n = self.grid.n_dim;
        let mut mean = [0.0; 2];
        self.grid.element_mean(e, u, 2, &mut mean);
        let r = mean[0].hypot(mean[1]);
        if r == 0.0 {
            return (f64::INFINITY, false);
        }
        let (c, s) = (mean[0] / r, mean[1] / r);
        let mut gm = DMatrix::zeros(2, n);
        self.grid.element_gradient(e, u, 2, &mut gm);
        let coeffs: Vec<f64> = (0..n).map(|j| -s * gm[(0, j)] + c * gm[(1, j)]).collect();
        self.table.eval(s.atan2(c), &coeffs)
    }

    fn element_value(&self, e: usize, u: &[f64]) -> f64 {
        let (v, clamped) = self.element(e, u);
        if clamped {
            self.clamp_events.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        }
        v
    }
}

impl DiscreteEnergy for HomogenizedEnergy<'_> {
    fn value(&self, u: &[f64]) -> f64 {
        let vol = self.grid.h.powi(self.grid.n_dim as i32);
        (0..self.grid.element_count()).map(|e| vol * self.element(e, u).0).sum()
    }

    fn solver_value_grad(&self, u: &[f64], grad: &mut [f64]) -> f64 {
        fd_value_grad(&self.grid, u, grad, |e, v| self.element_value(e, v))
    }
}

/// Element-by-element central differences in the corner coordinates.
fn fd_value_grad(grid: &Grid, u: &[f64], grad: &mut [f64], element: impl Fn(usize, &[f64]) -> f64) -> f64 {
    const STEP: f64 = 1e-7;
    grad.fill(0.0);
    let vol = grid.h.powi(grid.n_dim as i32);
    let mut work = u.to_vec();
    let mut total = 0.0;
    for e in 0..grid.element_count() {
        total += vol * element(e, u);
        for &node in grid.element_corners(e) {
            for c in 0..2 {
                let k = 2 * node + c;
                let orig = work[k];
                work[k] = orig + STEP;
                let plus = element(e, &work);
                work[k] = orig - STEP;
                let minus = element(e, &work);
                work[k] = orig;
                grad[k] += vol * (plus - minus) / (2.0 * STEP);
            }
        }
    }
    total
}

fn check_setup(f: &Integrand, m: &Manifold, config: &GammaExperimentConfig) -> Result<()> {
    if !m.is_circle() {
        return Err(HomogError::UnsupportedManifold("gamma experiments use circle-valued fields".into()));
    }
    if f.n_dim() != config.n_dim || f.ambient_dim() != 2 {
        return Err(HomogError::ShapeMismatch(format!(
            "integrand acts on {}x{} gradients, experiment needs 2x{}",
            f.ambient_dim(),
            f.n_dim(),
            config.n_dim
        )));
    }
    config.validate()
}

/// Result of one projected descent run.
#[derive(Debug, Clone)]
pub struct Minimization {
    /// Reported (unsmoothed) energy of the returned field.
    pub energy: f64,
    pub field: Field,
    pub iterations: usize,
    pub converged: bool,
}

/// Dirichlet Laplacian on the free nodes, scaled like the Hessian of `∫|∇u|²`.
struct Preconditioner {
    free: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    diag: f64,
    off: f64,
}

impl Preconditioner {
    fn new(grid: &Grid) -> Self {
        let n = grid.n_dim;
        let mut slot = vec![usize::MAX; grid.node_count()];
        let free: Vec<usize> = (0..grid.node_count()).filter(|&i| !grid.is_boundary(i)).collect();
        for (k, &i) in free.iter().enumerate() {
            slot[i] = k;
        }
        let mut multi = vec![0usize; n];
        let neighbors = free
            .iter()
            .map(|&i| {
                grid.node_multi(i, &mut multi);
                let mut out = Vec::new();
                for a in 0..n {
                    for delta in [-1i64, 1] {
                        let mut nb = multi.clone();
                        nb[a] = (nb[a] as i64 + delta) as usize;
                        let j = slot[grid.node_index(&nb)];
                        if j != usize::MAX {
                            out.push(j);
                        }
                    }
                }
                out
            })
            .collect();
        let scale = 2.0 * grid.h.powi(n as i32 - 2);
        Self { free, neighbors, diag: scale * 2.0 * n as f64, off: -scale }
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (k, nbs) in self.neighbors.iter().enumerate() {
            out[k] = self.diag * x[k] + self.off * nbs.iter().map(|&j| x[j]).sum::<f64>();
        }
    }

    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let n = rhs.len();
        conjugate_gradient(
            n,
            |x, g| {
                self.apply(x, g);
                for k in 0..n {
                    g[k] -= rhs[k];
                }
            },
            |p, out| self.apply(p, out),
            1e-12,
            10 * n + 100,
        )
        .x
    }
}

/// Projected descent on circle-valued fields with pinned boundary nodes.
///
/// Each step takes the `H¹`-preconditioned tangential gradient direction,
/// backtracks on the smoothed energy (Armijo) and retracts every node onto
/// `S^1`. Stops once the relative decrease stays below `tol` for ten
/// consecutive iterations or no decrease is attainable.
pub fn minimize(
    energy: &dyn DiscreteEnergy,
    m: &Manifold,
    start: Field,
    opt: &OptimizerConfig,
) -> Result<Minimization> {
    let grid = start.grid();
    let pre = Preconditioner::new(&grid);
    let nf = pre.free.len();
    let mut u = start.values;
    let mut grad = vec![0.0; u.len()];
    let mut trial = u.clone();
    let mut trial_grad = vec![0.0; u.len()];
    let mut e = energy.solver_value_grad(&u, &mut grad);
    let mut step = opt.initial_step;
    let mut stall = 0;
    let mut iterations = 0;
    let mut converged = nf == 0;
    let projectors = |u: &[f64]| -> Result<Vec<DMatrix<f64>>> {
        pre.free.iter().map(|&i| m.tangent_projector(&DVector::from_column_slice(&u[2 * i..2 * i + 2]))).collect()
    };

    while !converged && iterations < opt.max_iters {
        let proj = projectors(&u)?;
        let mut tg = [vec![0.0; nf], vec![0.0; nf]];
        for (k, &i) in pre.free.iter().enumerate() {
            let g = &proj[k] * DVector::from_column_slice(&grad[2 * i..2 * i + 2]);
            tg[0][k] = g[0];
            tg[1][k] = g[1];
        }
        let z = [pre.solve(&tg[0]), pre.solve(&tg[1])];
        let mut dir = vec![0.0; 2 * nf];
        let mut slope = 0.0;
        for (k, &i) in pre.free.iter().enumerate() {
            let d = -(&proj[k] * DVector::from_column_slice(&[z[0][k], z[1][k]]));
            dir[2 * k] = d[0];
            dir[2 * k + 1] = d[1];
            slope += d[0] * grad[2 * i] + d[1] * grad[2 * i + 1];
        }
        if !(slope < 0.0) {
            // Preconditioned direction lost descent; fall back to the plain tangential gradient.
            for k in 0..nf {
                dir[2 * k] = -tg[0][k];
                dir[2 * k + 1] = -tg[1][k];
            }
            slope = -tg[0].iter().chain(&tg[1]).map(|v| v * v).sum::<f64>();
            if !(slope < 0.0) {
                converged = true;
                break;
            }
        }

        let mut accepted = None;
        let mut degenerate = 0;
        let mut tau = step;
        for _ in 0..60 {
            trial.copy_from_slice(&u);
            let mut escaped = false;
            for (k, &i) in pre.free.iter().enumerate() {
                let s = DVector::from_column_slice(&u[2 * i..2 * i + 2]);
                let v = DVector::from_column_slice(&[tau * dir[2 * k], tau * dir[2 * k + 1]]);
                match m.retract(&s, &v) {
                    Ok(r) => trial[2 * i..2 * i + 2].copy_from_slice(r.as_slice()),
                    Err(_) => {
                        escaped = true;
                        break;
                    }
                }
            }
            if escaped {
                degenerate += 1;
                if degenerate > 30 {
                    return Err(HomogError::DegeneratePoint("descent step left the tubular neighborhood".into()));
                }
                tau *= 0.5;
                continue;
            }
            let e_new = energy.solver_value_grad(&trial, &mut trial_grad);
            if e_new <= e + opt.armijo_c * tau * slope {
                accepted = Some(e_new);
                break;
            }
            tau *= 0.5;
        }
        iterations += 1;
        let Some(e_new) = accepted else {
            debug!("line search exhausted after {iterations} iterations");
            converged = true;
            break;
        };
        let rel = (e - e_new) / e.abs().max(f64::MIN_POSITIVE);
        std::mem::swap(&mut u, &mut trial);
        std::mem::swap(&mut grad, &mut trial_grad);
        e = e_new;
        step = (2.0 * tau).min(opt.initial_step);
        if rel < opt.tol {
            stall += 1;
            if stall >= 10 {
                converged = true;
            }
        } else {
            stall = 0;
        }
    }
    if !converged {
        warn!("projected descent stopped at the iteration cap ({iterations})");
    }
    let field = Field { n_dim: start.n_dim, cells: start.cells, values: u };
    Ok(Minimization { energy: energy.value(&field.values), field, iterations, converged })
}

/// Minimizes `F_ε` from the geodesic initial field.
#[allow(non_snake_case)]
pub fn minimize_F_eps(f: &Integrand, m: &Manifold, config: &GammaExperimentConfig, eps: f64) -> Result<Minimization> {
    let energy = OscillatingEnergy::new(f, m, config, eps)?;
    minimize(&energy, m, initial_field(config), &config.optimizer)
}

/// Minimizes `F_hom` from the geodesic initial field; also returns the
/// number of clamped table evaluations.
#[allow(non_snake_case)]
pub fn minimize_F_hom(
    table: &TableInterpolator,
    m: &Manifold,
    config: &GammaExperimentConfig,
) -> Result<(Minimization, usize)> {
    config.validate()?;
    if !m.is_circle() {
        return Err(HomogError::UnsupportedManifold("gamma experiments use circle-valued fields".into()));
    }
    let energy = HomogenizedEnergy::new(table, config);
    let run = minimize(&energy, m, initial_field(config), &config.optimizer)?;
    let clamped = energy.clamped_elements(&run.field.values);
    if energy.clamp_events() > 0 {
        warn!("{} table evaluations clamped during F_hom descent", energy.clamp_events());
    }
    Ok((run, clamped))
}

/// Shortest path over the `(x, θ)` lattice for `min ∫_0^1 L(θ, θ') dx` with
/// `θ(0) = θ_L`, `θ(1) = θ_R`; paths stay between the boundary angles.
///
/// Segment costs use Simpson's rule along the straight segment.
pub fn dp_oracle_1d(
    cost: impl Fn(f64, f64) -> f64 + Sync,
    theta_left: f64,
    theta_right: f64,
    dp: &DpConfig,
) -> Result<f64> {
    if dp.steps == 0 || dp.levels < 2 {
        return Err(HomogError::InvalidInput("DP lattice needs steps >= 1 and levels >= 2".into()));
    }
    let j = dp.levels;
    let window = if dp.window == 0 { (j / 4).max(1) } else { dp.window.min(j - 1) };
    let (lo, hi) = (theta_left.min(theta_right), theta_left.max(theta_right));
    let dth = (hi - lo) / (j - 1) as f64;
    let dx = 1.0 / dp.steps as f64;
    let level = |i: usize| lo + dth * i as f64;
    // Transition table: cost of moving from level i by `d - window` levels.
    let width = 2 * window + 1;
    let table: Vec<f64> = (0..j)
        .into_par_iter()
        .flat_map_iter(|i| {
            let cost = &cost;
            (0..width).map(move |d| {
                let target = i as i64 + d as i64 - window as i64;
                if target < 0 || target >= j as i64 {
                    return f64::INFINITY;
                }
                let (a, b) = (level(i), level(target as usize));
                let v = (b - a) / dx;
                dx * (cost(a, v) + 4.0 * cost(0.5 * (a + b), v) + cost(b, v)) / 6.0
            })
        })
        .collect();
    let start = if theta_left <= theta_right { 0 } else { j - 1 };
    let end = j - 1 - start;
    let mut best = vec![f64::INFINITY; j];
    best[start] = 0.0;
    let mut next = vec![f64::INFINITY; j];
    for _ in 0..dp.steps {
        next.par_iter_mut().enumerate().for_each(|(t, slot)| {
            let mut m = f64::INFINITY;
            let from = t.saturating_sub(window);
            let to = (t + window).min(j - 1);
            for i in from..=to {
                let c = best[i] + table[i * width + (t + window - i)];
                if c < m {
                    m = c;
                }
            }
            *slot = m;
        });
        std::mem::swap(&mut best, &mut next);
    }
    Ok(best[end])
}

/// `(∫_{θ_L}^{θ_R} √H(θ) dθ)²`: the minimum of `∫_0^1 H(θ) θ'² dx`.
pub fn metric_geodesic_energy(h: impl Fn(f64) -> f64, theta_left: f64, theta_right: f64, panels: usize) -> f64 {
    let n = 2 * panels.max(1);
    let dt = (theta_right - theta_left) / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        acc += w * h(theta_left + dt * k as f64).sqrt();
    }
    let len = acc * dt / 3.0;
    len * len
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpsilonRun {
    pub epsilon: f64,
    pub energy: f64,
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GammaReport {
    pub n_dim: usize,
    pub cells: usize,
    pub runs: Vec<EpsilonRun>,
    pub hom_energy: f64,
    pub hom_iterations: usize,
    pub hom_converged: bool,
    /// Elements whose coefficients left the table range at the `F_hom` minimizer.
    pub clamped_elements: usize,
    pub dp_energy: Option<f64>,
    pub dp_rel_diff: Option<f64>,
    /// Fraction of consecutive gap decreases along the ε sequence.
    pub trend_fraction: f64,
    /// Last gap divided by the `F_hom` minimum.
    pub final_gap_rel: f64,
    /// `α · (minimum Dirichlet-type energy)` and `β · (|Ω| + energy of the initial competitor)`.
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub fields: Vec<(String, Field)>,
}

impl GammaReport {
    pub fn all_converged(&self) -> bool {
        self.hom_converged && self.runs.iter().all(|r| r.converged && r.error.is_none())
    }

    pub fn gaps(&self) -> Vec<(f64, f64)> {
        self.runs.iter().map(|r| (r.epsilon, r.gap)).collect()
    }
}

/// Builds the `F_hom` table this experiment needs.
pub fn experiment_table(f: &Integrand, m: &Manifold, config: &GammaExperimentConfig) -> Result<DensityTable> {
    let tc = &config.table;
    let opts = TfHomOptions { t_list: tc.t_list.clone(), n: tc.n, ..Default::default() };
    build_density_table(f, m, tc.angles, &XiLattice::uniform(tc.coeff_min, tc.coeff_max, tc.coeff_count), &opts)
}

/// Runs `F_ε` for each ε (concurrently) and `F_hom` once, and compares minima.
///
/// When `table` is `None` the table is built from `config.table`.
pub fn run_gamma_experiment(
    f: &Integrand,
    m: &Manifold,
    config: &GammaExperimentConfig,
    table: Option<&DensityTable>,
) -> Result<GammaReport> {
    check_setup(f, m, config)?;
    let built;
    let table = match table {
        Some(t) => t,
        None => {
            built = experiment_table(f, m, config)?;
            &built
        }
    };
    let mut warnings = Vec::new();
    if table.failures() > 0 {
        warnings.push(format!("{} density table entries failed", table.failures()));
    }
    let interp = TableInterpolator::new(table)?;
    let (hom, clamped_elements) = minimize_F_hom(&interp, m, config)?;
    if clamped_elements > 0 {
        warnings.push(format!(
            "{clamped_elements} elements clamped to the table range {:?} at the F_hom minimizer",
            interp.coeff_range()
        ));
    }

    let outcomes: Vec<Result<Minimization>> =
        config.epsilons.par_iter().map(|&eps| minimize_F_eps(f, m, config, eps)).collect();
    let mut runs = Vec::new();
    let mut fields = Vec::new();
    for (&eps, out) in config.epsilons.iter().zip(outcomes) {
        match out {
            Ok(run) => {
                runs.push(EpsilonRun {
                    epsilon: eps,
                    energy: run.energy,
                    gap: (run.energy - hom.energy).abs(),
                    iterations: run.iterations,
                    converged: run.converged,
                    error: None,
                });
                if config.dump_fields {
                    fields.push((format!("eps_{eps}"), run.field));
                }
            }
            Err(e) => {
                warnings.push(format!("eps = {eps}: {e}"));
                runs.push(EpsilonRun {
                    epsilon: eps,
                    energy: f64::NAN,
                    gap: f64::NAN,
                    iterations: 0,
                    converged: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    if config.dump_fields {
        fields.push(("hom".to_string(), hom.field.clone()));
    }

    let dp_energy = match &config.dp {
        Some(dp) => {
            let cost = |th: f64, v: f64| match interp.eval(th, &[v]) {
                (_, true) => f64::INFINITY,
                (val, false) => val,
            };
            Some(dp_oracle_1d(cost, config.theta_left, config.theta_right, dp)?)
        }
        None => None,
    };
    let dp_rel_diff = dp_energy.map(|d| (hom.energy - d).abs() / d.abs().max(f64::MIN_POSITIVE));

    let gaps: Vec<f64> = runs.iter().map(|r| r.gap).collect();
    let trend_fraction = if gaps.len() >= 2 {
        gaps.windows(2).filter(|w| w[1] < w[0]).count() as f64 / (gaps.len() - 1) as f64
    } else {
        1.0
    };
    let final_gap_rel = gaps.last().map_or(0.0, |g| g / hom.energy.abs().max(f64::MIN_POSITIVE));

    let (lower_bound, upper_bound) = energy_bounds(f, m, config)?;
    for r in &runs {
        if r.energy < lower_bound || r.energy > upper_bound {
            warnings.push(format!("eps = {}: energy {} outside [{lower_bound}, {upper_bound}]", r.epsilon, r.energy));
        }
    }
    Ok(GammaReport {
        n_dim: config.n_dim,
        cells: config.cells,
        runs,
        hom_energy: hom.energy,
        hom_iterations: hom.iterations,
        hom_converged: hom.converged,
        clamped_elements,
        dp_energy,
        dp_rel_diff,
        trend_fraction,
        final_gap_rel,
        lower_bound,
        upper_bound,
        warnings,
        fields,
    })
}

/// Two-sided bounds on every `min F_ε` from the growth constants:
/// below by `α` times the minimum of `∫|∇u|^p`, above by `β(1 + ∫|∇u₀|^p)`
/// for the initial competitor `u₀`.
pub fn energy_bounds(f: &Integrand, m: &Manifold, config: &GammaExperimentConfig) -> Result<(f64, f64)> {
    let growth = f.growth();
    let p = growth.p;
    let plain = Integrand::isotropic(1.0, p, config.n_dim, 2)?;
    let dirichlet = OscillatingEnergy::new(&plain, m, config, 1.0)?;
    let start = initial_field(config);
    let competitor = dirichlet.value(&start.values);
    let min = minimize(&dirichlet, m, start, &config.optimizer)?.energy;
    Ok((growth.alpha * min, growth.beta * (1.0 + competitor)))
}
