//! Discrete corrector cell problems on `(0, t)^N`.
//!
//! The corrector lives in tangent coordinates: with `B` the `d × m` matrix
//! of [`Manifold::tangent_basis`] at `s`, the ambient corrector is `B φ`,
//! so `ξ + ∇(Bφ)` stays in `[T_s(M)]^N` by construction and the cell
//! problem is an unconstrained minimization over `m` reals per node.
//! Passing `B = I_d` gives the `R^d`-valued problems of the extended
//! densities `f̄` and `g`.

use log::warn;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};
use crate::grid::Grid;
use crate::integrand::{Density, Integrand};
use crate::manifold::{Manifold, ON_MANIFOLD_TOL};
use crate::optim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    DirichletZero,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Linear conjugate gradients; quadratic densities only.
    ConjugateGradient,
    /// L-BFGS with Armijo backtracking.
    QuasiNewton,
}

#[derive(Debug, Clone)]
pub struct CellProblemSpec {
    pub manifold: Manifold,
    pub s: DVector<f64>,
    pub xi: DMatrix<f64>,
    /// Cube side, in periods.
    pub t: usize,
    pub nodes_per_period: usize,
    pub boundary: Boundary,
    pub solver: SolverKind,
    pub tol_grad: f64,
    pub max_iters: usize,
}

impl CellProblemSpec {
    pub fn new(manifold: Manifold, s: DVector<f64>, xi: DMatrix<f64>) -> Self {
        Self {
            manifold,
            s,
            xi,
            t: 1,
            nodes_per_period: 16,
            boundary: Boundary::Periodic,
            solver: SolverKind::ConjugateGradient,
            tol_grad: 1e-8,
            max_iters: 20_000,
        }
    }

    pub fn with_t(mut self, t: usize) -> Self {
        self.t = t;
        self
    }

    pub fn with_nodes_per_period(mut self, n: usize) -> Self {
        self.nodes_per_period = n;
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol_grad = tol;
        self
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    pub fn n_dim(&self) -> usize {
        self.xi.ncols()
    }

    /// Checks grid parameters and that every column of `ξ` is tangent at `s`.
    pub fn validate(&self) -> Result<()> {
        if self.t < 1 || self.nodes_per_period < 2 {
            return Err(HomogError::InvalidInput(format!(
                "need t >= 1 and n >= 2, got t = {}, n = {}",
                self.t, self.nodes_per_period
            )));
        }
        if !(self.tol_grad > 0.0) || self.max_iters == 0 {
            return Err(HomogError::InvalidInput("tolerance and iteration cap must be positive".into()));
        }
        check_tangent(&self.manifold, &self.s, &self.xi)
    }

    pub fn grid(&self) -> Grid {
        let cells = self.t * self.nodes_per_period;
        Grid::new(self.n_dim(), cells, 1.0 / self.nodes_per_period as f64, self.boundary == Boundary::Periodic)
    }
}

/// Fails with `NotTangent` unless every column of `ξ` lies in `T_s(M)` to 1e-9.
pub fn check_tangent(m: &Manifold, s: &DVector<f64>, xi: &DMatrix<f64>) -> Result<()> {
    let projected = m.project_matrix_columns(s, xi)?;
    for j in 0..xi.ncols() {
        let off = (xi.column(j) - projected.column(j)).norm();
        if off > ON_MANIFOLD_TOL {
            return Err(HomogError::NotTangent(format!("column {j} has normal component {off:e}")));
        }
    }
    Ok(())
}

/// Nodal corrector values, `coord_dim` reals per node.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectorField {
    pub n_dim: usize,
    pub t: usize,
    pub nodes_per_period: usize,
    pub boundary: Boundary,
    pub coord_dim: usize,
    pub values: Vec<f64>,
}

impl CorrectorField {
    pub fn zeros(n_dim: usize, t: usize, n: usize, boundary: Boundary, coord_dim: usize) -> Self {
        let mut field = Self { n_dim, t, nodes_per_period: n, boundary, coord_dim, values: Vec::new() };
        field.values = vec![0.0; field.grid().node_count() * coord_dim];
        field
    }

    pub fn grid(&self) -> Grid {
        Grid::new(
            self.n_dim,
            self.t * self.nodes_per_period,
            1.0 / self.nodes_per_period as f64,
            self.boundary == Boundary::Periodic,
        )
    }

    pub fn node_count(&self) -> usize {
        self.values.len() / self.coord_dim
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn node(&self, idx: usize) -> &[f64] {
        &self.values[idx * self.coord_dim..(idx + 1) * self.coord_dim]
    }
}

#[derive(Debug, Clone)]
pub struct CellSolution {
    /// Cell average of the reported density at the returned corrector.
    pub value: f64,
    pub corrector: CorrectorField,
    pub iterations: usize,
    pub grad_norm: f64,
    pub initial_grad_norm: f64,
    pub converged: bool,
}

/// Discrete cell energy `φ ↦ ⨍ h(y, ξ + B ∇φ)` with its assembled gradient.
pub struct CellEnergy<'a> {
    density: &'a dyn Density,
    xi: DMatrix<f64>,
    basis: DMatrix<f64>,
    grid: Grid,
    centers: Vec<f64>,
}

impl<'a> CellEnergy<'a> {
    pub fn new(density: &'a dyn Density, xi: DMatrix<f64>, basis: DMatrix<f64>, grid: Grid) -> Self {
        let n = grid.n_dim;
        let mut centers = vec![0.0; grid.element_count() * n];
        for e in 0..grid.element_count() {
            grid.element_center(e, &mut centers[e * n..(e + 1) * n]);
        }
        Self { density, xi, basis, grid, centers }
    }

    pub fn coord_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn unknowns(&self) -> usize {
        self.grid.node_count() * self.coord_dim()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn center(&self, e: usize) -> &[f64] {
        let n = self.grid.n_dim;
        &self.centers[e * n..(e + 1) * n]
    }

    /// Reported (unsmoothed) cell average.
    pub fn value(&self, phi: &[f64]) -> f64 {
        self.sum_over_elements(phi, &self.xi, |y, z| self.density.value(y, z))
    }

    /// Cell average of the solver surrogate.
    pub fn solver_value(&self, phi: &[f64]) -> f64 {
        self.sum_over_elements(phi, &self.xi, |y, z| self.density.solver_value(y, z))
    }

    fn sum_over_elements(&self, phi: &[f64], xi: &DMatrix<f64>, h: impl Fn(&[f64], &DMatrix<f64>) -> f64) -> f64 {
        let m = self.coord_dim();
        let ne = self.grid.element_count();
        let mut g = DMatrix::zeros(m, self.grid.n_dim);
        let mut z = xi.clone();
        let mut total = 0.0;
        for e in 0..ne {
            self.grid.element_gradient(e, phi, m, &mut g);
            z.copy_from(xi);
            z.gemm(1.0, &self.basis, &g, 1.0);
            total += h(self.center(e), &z);
        }
        total / ne as f64
    }

    /// Solver value and gradient with respect to nodal coordinates, for an
    /// arbitrary affine part `xi`. Boundary rows are zeroed on bounded grids.
    pub fn value_grad_with(&self, xi: &DMatrix<f64>, phi: &[f64], grad: &mut [f64]) -> f64 {
        let m = self.coord_dim();
        let d = self.basis.nrows();
        let n = self.grid.n_dim;
        let ne = self.grid.element_count();
        let scale = 1.0 / ne as f64;
        let mut g = DMatrix::zeros(m, n);
        let mut z = xi.clone();
        let mut dz = DMatrix::zeros(d, n);
        let mut dg = DMatrix::zeros(m, n);
        grad.fill(0.0);
        let mut total = 0.0;
        for e in 0..ne {
            self.grid.element_gradient(e, phi, m, &mut g);
            z.copy_from(xi);
            z.gemm(1.0, &self.basis, &g, 1.0);
            let y = self.center(e);
            total += self.density.solver_value(y, &z);
            self.density.solver_grad(y, &z, &mut dz);
            dg.gemm_tr(1.0, &self.basis, &dz, 0.0);
            self.grid.scatter_gradient(e, &dg, m, scale, grad);
        }
        self.clear_boundary(grad);
        total * scale
    }

    pub fn value_grad(&self, phi: &[f64], grad: &mut [f64]) -> f64 {
        self.value_grad_with(&self.xi, phi, grad)
    }

    pub fn gradient(&self, phi: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; phi.len()];
        self.value_grad(phi, &mut g);
        g
    }

    pub fn clear_boundary(&self, v: &mut [f64]) {
        if self.grid.periodic {
            return;
        }
        let m = self.coord_dim();
        for node in 0..self.grid.node_count() {
            if self.grid.is_boundary(node) {
                v[node * m..(node + 1) * m].fill(0.0);
            }
        }
    }
}

/// Constant element Hessians of a quadratic cell energy, in corrector-gradient
/// coordinates, so Hessian-vector products avoid density evaluations.
struct ElementHessians<'e, 'a> {
    energy: &'e CellEnergy<'a>,
    /// `(mN)²` entries per element, column-major over column-major `m × N` gradients.
    blocks: Vec<f64>,
}

impl<'e, 'a> ElementHessians<'e, 'a> {
    fn new(energy: &'e CellEnergy<'a>) -> Self {
        let m = energy.coord_dim();
        let n = energy.grid.n_dim;
        let d = energy.basis.nrows();
        let k = m * n;
        let zero = DMatrix::zeros(d, n);
        let mut base = DMatrix::zeros(d, n);
        let mut dz = DMatrix::zeros(d, n);
        let mut g = DMatrix::zeros(m, n);
        let mut blocks = Vec::with_capacity(energy.grid.element_count() * k * k);
        for e in 0..energy.grid.element_count() {
            let y = energy.center(e);
            energy.density.solver_grad(y, &zero, &mut base);
            for col in 0..k {
                g.fill(0.0);
                g[col] = 1.0;
                let z = &energy.basis * &g;
                energy.density.solver_grad(y, &z, &mut dz);
                dz -= &base;
                let dg = energy.basis.transpose() * &dz;
                blocks.extend_from_slice(dg.as_slice());
            }
        }
        Self { energy, blocks }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        let grid = &self.energy.grid;
        let m = self.energy.coord_dim();
        let k = m * grid.n_dim;
        let scale = 1.0 / grid.element_count() as f64;
        let mut g = DMatrix::zeros(m, grid.n_dim);
        let mut dg = DMatrix::zeros(m, grid.n_dim);
        out.fill(0.0);
        for e in 0..grid.element_count() {
            grid.element_gradient(e, v, m, &mut g);
            let block = &self.blocks[e * k * k..(e + 1) * k * k];
            for (r, slot) in dg.as_mut_slice().iter_mut().enumerate() {
                *slot = (0..k).map(|c| block[c * k + r] * g[c]).sum();
            }
            grid.scatter_gradient(e, &dg, m, scale, out);
        }
        self.energy.clear_boundary(out);
    }
}

fn subtract_mean(values: &mut [f64], m: usize) {
    let nodes = values.len() / m;
    for c in 0..m {
        let mean = values.iter().skip(c).step_by(m).sum::<f64>() / nodes as f64;
        values.iter_mut().skip(c).step_by(m).for_each(|v| *v -= mean);
    }
}

fn minimize(energy: &CellEnergy<'_>, spec: &CellProblemSpec, quadratic: bool) -> Result<CellSolution> {
    let n = energy.unknowns();
    let m = energy.coord_dim();
    let outcome = match spec.solver {
        SolverKind::ConjugateGradient => {
            if !quadratic {
                return Err(HomogError::UnsupportedSolver("conjugate gradients need a quadratic density".into()));
            }
            let hessian = ElementHessians::new(energy);
            optim::conjugate_gradient(
                n,
                |x, g| {
                    energy.value_grad(x, g);
                },
                |v, out| hessian.apply(v, out),
                spec.tol_grad,
                spec.max_iters,
            )
        }
        SolverKind::QuasiNewton => {
            optim::lbfgs(vec![0.0; n], |x, g| energy.value_grad(x, g), spec.tol_grad, spec.max_iters, 10)
        }
    };
    let mut values = outcome.x;
    if spec.boundary == Boundary::Periodic {
        subtract_mean(&mut values, m);
    }
    if !outcome.converged {
        warn!(
            "cell solve stopped after {} iterations with gradient norm {:e} (initial {:e})",
            outcome.iterations, outcome.grad_norm, outcome.initial_grad_norm
        );
    }
    let value = energy.value(&values);
    Ok(CellSolution {
        value,
        corrector: CorrectorField {
            n_dim: spec.n_dim(),
            t: spec.t,
            nodes_per_period: spec.nodes_per_period,
            boundary: spec.boundary,
            coord_dim: m,
            values,
        },
        iterations: outcome.iterations,
        grad_norm: outcome.grad_norm,
        initial_grad_norm: outcome.initial_grad_norm,
        converged: outcome.converged,
    })
}

fn check_dims(density: &dyn Density, spec: &CellProblemSpec) -> Result<()> {
    if density.n_dim() != spec.n_dim() || density.ambient_dim() != spec.xi.nrows() {
        return Err(HomogError::ShapeMismatch(format!(
            "density acts on {}x{} matrices, xi is {}x{}",
            density.ambient_dim(),
            density.n_dim(),
            spec.xi.nrows(),
            spec.xi.ncols()
        )));
    }
    Ok(())
}

/// Cell average of `f(y, ξ + ∇(Bφ))` for a tangent-coordinate corrector.
pub fn energy_of_field(f: &Integrand, spec: &CellProblemSpec, phi: &CorrectorField) -> Result<f64> {
    check_dims(f, spec)?;
    let basis = spec.manifold.tangent_basis(&spec.s)?;
    let expected = CorrectorField::zeros(spec.n_dim(), spec.t, spec.nodes_per_period, spec.boundary, basis.ncols());
    if phi.n_dim != expected.n_dim
        || phi.t != expected.t
        || phi.nodes_per_period != expected.nodes_per_period
        || phi.boundary != expected.boundary
        || phi.coord_dim != expected.coord_dim
        || phi.values.len() != expected.values.len()
    {
        return Err(HomogError::ShapeMismatch("corrector does not match the cell problem grid".into()));
    }
    let energy = CellEnergy::new(f, spec.xi.clone(), basis, spec.grid());
    Ok(energy.value(&phi.values))
}

/// Minimizes the tangent-constrained cell problem `Tf_t(s, ξ)` from a zero corrector.
pub fn solve_cell(f: &Integrand, spec: &CellProblemSpec) -> Result<CellSolution> {
    spec.validate()?;
    check_dims(f, spec)?;
    let basis = spec.manifold.tangent_basis(&spec.s)?;
    let energy = CellEnergy::new(f, spec.xi.clone(), basis, spec.grid());
    minimize(&energy, spec, f.is_quadratic())
}

/// Minimizes the `R^d`-valued cell problem of an extended density frozen at `spec.s`.
pub fn solve_cell_unconstrained(fext: &dyn Density, spec: &CellProblemSpec) -> Result<CellSolution> {
    spec.validate()?;
    check_dims(fext, spec)?;
    let d = spec.xi.nrows();
    let energy = CellEnergy::new(fext, spec.xi.clone(), DMatrix::identity(d, d), spec.grid());
    minimize(&energy, spec, fext.is_quadratic())
}

/// Repeats a Dirichlet-zero corrector `k` times per direction.
pub fn tile_corrector(phi: &CorrectorField, k: usize) -> Result<CorrectorField> {
    if phi.boundary != Boundary::DirichletZero {
        return Err(HomogError::UnsupportedBoundary("only Dirichlet-zero correctors can be tiled".into()));
    }
    if k == 0 {
        return Err(HomogError::InvalidInput("tiling factor must be >= 1".into()));
    }
    let small = phi.grid();
    let mut out = CorrectorField::zeros(phi.n_dim, phi.t * k, phi.nodes_per_period, phi.boundary, phi.coord_dim);
    let big = out.grid();
    let cells = small.cells;
    let mut multi = vec![0usize; phi.n_dim];
    let m = phi.coord_dim;
    for node in 0..big.node_count() {
        big.node_multi(node, &mut multi);
        multi.iter_mut().for_each(|i| *i %= cells);
        let src = small.node_index(&multi);
        out.values[node * m..(node + 1) * m].copy_from_slice(phi.node(src));
    }
    Ok(out)
}
