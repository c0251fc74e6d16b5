//! JSON run configuration. Unknown keys are rejected everywhere.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cell_solver::{Boundary, SolverKind};
use crate::density::{TfHomOptions, XiLattice};
use crate::error::{HomogError, Result};
use crate::gamma_sim::GammaExperimentConfig;
use crate::integrand::{Integrand, StepProfile};
use crate::manifold::Manifold;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Cell,
    Density,
    Verify,
    Gamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifoldSpec {
    /// `S^{d-1} ⊂ R^d`.
    Sphere {
        d: usize,
        delta0: Option<f64>,
    },
    Circle {
        delta0: Option<f64>,
    },
    CircleProduct {
        k: usize,
        delta0: Option<f64>,
    },
}

impl ManifoldSpec {
    pub fn build(&self) -> Result<Manifold> {
        let (m, delta0) = match *self {
            ManifoldSpec::Sphere { d, delta0 } => (Manifold::sphere(d)?, delta0),
            ManifoldSpec::Circle { delta0 } => (Manifold::circle(), delta0),
            ManifoldSpec::CircleProduct { k, delta0 } => (Manifold::circle_product(k)?, delta0),
        };
        match delta0 {
            Some(d) => m.with_delta0(d),
            None => Ok(m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    #[serde(default, alias = "breaks")]
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
}

impl ProfileSpec {
    pub fn build(&self) -> Result<StepProfile> {
        StepProfile::new(self.breakpoints.clone(), self.values.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrandSpec {
    /// `a(y_1) Σ_j ξ_{1j}² + b(y_1) Σ_j ξ_{2j}²` on `2 × n_dim` gradients.
    Laminate {
        a: ProfileSpec,
        b: ProfileSpec,
        #[serde(alias = "N")]
        n_dim: usize,
        alpha: Option<f64>,
        beta: Option<f64>,
    },
    /// `scale |ξ|^p`.
    Isotropic {
        #[serde(default = "one")]
        scale: f64,
        p: f64,
        #[serde(alias = "N")]
        n_dim: usize,
        d: usize,
        alpha: Option<f64>,
        beta: Option<f64>,
    },
    /// `a(y_1) √(1 + |ξ|²)`, linear growth.
    AreaLaminate {
        a: ProfileSpec,
        #[serde(alias = "N")]
        n_dim: usize,
        d: usize,
        alpha: Option<f64>,
        beta: Option<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl IntegrandSpec {
    pub fn build(&self) -> Result<Integrand> {
        let (f, alpha, beta) = match self {
            IntegrandSpec::Laminate { a, b, n_dim, alpha, beta } => {
                (Integrand::laminate_quadratic(a.build()?, b.build()?, *n_dim)?, alpha, beta)
            }
            IntegrandSpec::Isotropic { scale, p, n_dim, d, alpha, beta } => {
                (Integrand::isotropic(*scale, *p, *n_dim, *d)?, alpha, beta)
            }
            IntegrandSpec::AreaLaminate { a, n_dim, d, alpha, beta } => {
                (Integrand::area_laminate(a.build()?, *n_dim, *d)?, alpha, beta)
            }
        };
        Ok(f.with_declared(*alpha, *beta))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellConfig {
    pub s: Vec<f64>,
    /// `ξ` as `d` rows of `N` entries.
    pub xi: Vec<Vec<f64>>,
    #[serde(default = "default_t")]
    pub t: usize,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    /// Defaults to conjugate gradients for quadratic integrands, L-BFGS otherwise.
    pub solver: Option<SolverKind>,
    #[serde(default = "default_tol")]
    pub tol_grad: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
}

fn default_t() -> usize {
    1
}
fn default_n() -> usize {
    16
}
fn default_boundary() -> Boundary {
    Boundary::Periodic
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    20_000
}

impl CellConfig {
    pub fn point(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.s)
    }

    pub fn xi_matrix(&self) -> Result<DMatrix<f64>> {
        rows_to_matrix(&self.xi)
    }
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
        return Err(HomogError::InvalidInput("xi must be a non-empty rectangular list of rows".into()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LatticeSpec {
    Values { values: Vec<f64> },
    Uniform { min: f64, max: f64, count: usize },
    Integers { min: i64, max: i64 },
}

impl LatticeSpec {
    pub fn build(&self) -> XiLattice {
        match self {
            LatticeSpec::Values { values } => XiLattice { values: values.clone() },
            LatticeSpec::Uniform { min, max, count } => XiLattice::uniform(*min, *max, *count),
            LatticeSpec::Integers { min, max } => XiLattice::integers(*min, *max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityConfig {
    pub s_count: usize,
    pub lattice: LatticeSpec,
    #[serde(default)]
    pub options: TfHomOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Hypotheses,
    Equivalence,
    Sandwich,
    Lipschitz,
    Quasiconvexity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub suites: Vec<Suite>,
    /// Samples for the hypothesis check.
    pub hypothesis_samples: usize,
    /// `(s, ξ)` samples for equivalence and quasiconvexity.
    pub samples: usize,
    /// Tangent pairs for the Lipschitz fit; the stability check doubles this.
    pub pairs: usize,
    pub radius: f64,
    pub trials: usize,
    pub trial_cells: usize,
    /// Angular points and coefficient lattice of the sandwich table.
    pub s_count: usize,
    pub lattice: LatticeSpec,
    pub options: TfHomOptions,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            suites: vec![
                Suite::Hypotheses,
                Suite::Equivalence,
                Suite::Sandwich,
                Suite::Lipschitz,
                Suite::Quasiconvexity,
            ],
            hypothesis_samples: 1000,
            samples: 8,
            pairs: 200,
            radius: 5.0,
            trials: 100,
            trial_cells: 4,
            s_count: 8,
            lattice: LatticeSpec::Integers { min: -2, max: 2 },
            options: TfHomOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub manifold: ManifoldSpec,
    pub integrand: IntegrandSpec,
    pub output: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub cell: Option<CellConfig>,
    pub density: Option<DensityConfig>,
    pub verify: Option<VerifyConfig>,
    pub gamma: Option<GammaExperimentConfig>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HomogError::InvalidInput(format!("config: {e}")))
    }

    pub fn section<'a, T>(&self, value: &'a Option<T>, name: &str) -> Result<&'a T> {
        value.as_ref().ok_or_else(|| HomogError::InvalidInput(format!("config: missing `{name}` section")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const LAMINATE: &str = r#"{
        "command": "cell",
        "manifold": {"kind": "circle"},
        "integrand": {"kind": "laminate", "a": {"breakpoints": [0.5], "values": [1, 2]},
                      "b": {"values": [1]}, "n_dim": 2},
        "cell": {"s": [0, 1], "xi": [[1, 0], [0, 0]], "n": 64}
    }"#;

    #[test]
    fn parses_and_builds() {
        let c = RunConfig::from_json(LAMINATE).unwrap();
        assert_eq!(c.command, Command::Cell);
        let f = c.integrand.build().unwrap();
        assert!(crate::integrand::Density::is_quadratic(&f));
        let cell = c.cell.unwrap();
        assert_eq!(cell.xi_matrix().unwrap().shape(), (2, 2));
        assert_eq!(cell.boundary, Boundary::Periodic);
        assert!(c.manifold.build().unwrap().is_circle());
    }

    #[test]
    fn unknown_keys_are_named() {
        let bad = LAMINATE.replace("\"n\": 64", "\"n\": 64, \"colour\": 3");
        let err = RunConfig::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("colour"), "{err}");
        let bad = LAMINATE.replace("\"kind\": \"circle\"", "\"kind\": \"circle\", \"radius\": 2");
        assert!(RunConfig::from_json(&bad).unwrap_err().to_string().contains("radius"));
    }

    #[test]
    fn short_key_spellings_are_accepted() {
        let text = LAMINATE.replace("breakpoints", "breaks").replace("\"n_dim\"", "\"N\"");
        assert_eq!(RunConfig::from_json(&text).unwrap(), RunConfig::from_json(LAMINATE).unwrap());
    }

    #[test]
    fn ragged_xi_is_rejected() {
        assert!(rows_to_matrix(&[vec![1.0, 2.0], vec![3.0]]).is_err());
        assert!(rows_to_matrix(&[]).is_err());
    }
}
