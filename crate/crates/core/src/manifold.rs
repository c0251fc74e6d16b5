//! Concrete embedded target manifolds `M ⊂ R^d`.
//!
//! Only a small catalog is supported: round spheres `S^{d-1} ⊂ R^d` and
//! products of unit circles `(S^1)^k ⊂ R^{2k}`. Both admit closed-form
//! nearest-point projections and tangent projectors, so no root finding
//! is needed anywhere downstream.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HomogError, Result};

/// Tolerance for "this point lies on M" checks.
pub const ON_MANIFOLD_TOL: f64 = 1e-9;

/// Below this radius the radial projection is undefined.
const MIN_RADIUS: f64 = 1e-12;

/// Default cut-off radius used by the `g` extension.
pub const DEFAULT_DELTA0: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ManifoldKind {
    /// Unit sphere `S^{d-1}` in `R^d`.
    Sphere(usize),
    /// Product of `k` unit circles embedded in `R^{2k}`.
    FlatTorusCircleProduct(usize),
}

/// An embedded manifold together with its tubular data.
///
/// `tubular_radius` is the reach of `M`: the nearest-point projection is
/// unique on the open `tubular_radius`-neighborhood. The radial formulas
/// used here are valid on the larger set where every circle/sphere factor
/// has nonzero radius, and `project` accepts that whole set.
#[derive(Debug, Clone, PartialEq)]
pub struct Manifold {
    pub kind: ManifoldKind,
    pub ambient_dim: usize,
    pub intrinsic_dim: usize,
    pub tubular_radius: f64,
    /// The `δ₀` of the cut-off construction.
    pub delta0: f64,
}

impl Manifold {
    pub fn sphere(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(HomogError::InvalidInput(format!("sphere needs ambient dimension >= 2, got {d}")));
        }
        Ok(Self {
            kind: ManifoldKind::Sphere(d),
            ambient_dim: d,
            intrinsic_dim: d - 1,
            tubular_radius: 1.0,
            delta0: DEFAULT_DELTA0,
        })
    }

    /// The unit circle `S^1 ⊂ R^2`.
    pub fn circle() -> Self {
        Self::sphere(2).expect("d = 2 is valid")
    }

    pub fn circle_product(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(HomogError::InvalidInput("circle product needs k >= 1".into()));
        }
        Ok(Self {
            kind: ManifoldKind::FlatTorusCircleProduct(k),
            ambient_dim: 2 * k,
            intrinsic_dim: k,
            tubular_radius: 1.0,
            delta0: DEFAULT_DELTA0,
        })
    }

    pub fn with_delta0(mut self, delta0: f64) -> Result<Self> {
        if !(delta0 > 0.0) || 0.75 * delta0 >= self.tubular_radius {
            return Err(HomogError::InvalidInput(format!(
                "delta0 must satisfy 0 < 3*delta0/4 < {}, got {delta0}",
                self.tubular_radius
            )));
        }
        self.delta0 = delta0;
        Ok(self)
    }

    /// True for `S^1 ⊂ R^2`.
    pub fn is_circle(&self) -> bool {
        self.kind == ManifoldKind::Sphere(2)
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.ambient_dim {
            return Err(HomogError::ShapeMismatch(format!(
                "expected a vector in R^{}, got length {}",
                self.ambient_dim,
                x.len()
            )));
        }
        Ok(())
    }

    /// Euclidean distance from `x` to `M`.
    pub fn distance(&self, x: &DVector<f64>) -> f64 {
        match self.kind {
            ManifoldKind::Sphere(_) => (x.norm() - 1.0).abs(),
            ManifoldKind::FlatTorusCircleProduct(k) => (0..k)
                .map(|i| {
                    let r = x[2 * i].hypot(x[2 * i + 1]);
                    (r - 1.0) * (r - 1.0)
                })
                .sum::<f64>()
                .sqrt(),
        }
    }

    /// Constraint residual: `||s| - 1|` for spheres, the worst factor for products.
    pub fn constraint_residual(&self, s: &DVector<f64>) -> f64 {
        match self.kind {
            ManifoldKind::Sphere(_) => (s.norm() - 1.0).abs(),
            ManifoldKind::FlatTorusCircleProduct(k) => {
                (0..k).map(|i| (s[2 * i].hypot(s[2 * i + 1]) - 1.0).abs()).fold(0.0, f64::max)
            }
        }
    }

    pub fn check_on_manifold(&self, s: &DVector<f64>) -> Result<()> {
        self.check_dim(s)?;
        let res = self.constraint_residual(s);
        if !(res <= ON_MANIFOLD_TOL) {
            return Err(HomogError::DegeneratePoint(format!("point violates the manifold constraint by {res:e}")));
        }
        Ok(())
    }

    /// Nearest-point projection `Π(x)`.
    pub fn project(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(x)?;
        match self.kind {
            ManifoldKind::Sphere(_) => {
                let r = x.norm();
                if !(r > MIN_RADIUS) {
                    return Err(HomogError::DegeneratePoint(format!("cannot project {x:?} onto the sphere")));
                }
                Ok(x / r)
            }
            ManifoldKind::FlatTorusCircleProduct(k) => {
                let mut s = x.clone();
                for i in 0..k {
                    let r = x[2 * i].hypot(x[2 * i + 1]);
                    if !(r > MIN_RADIUS) {
                        return Err(HomogError::DegeneratePoint(format!("circle factor {i} of {x:?} has zero radius")));
                    }
                    s[2 * i] /= r;
                    s[2 * i + 1] /= r;
                }
                Ok(s)
            }
        }
    }

    /// Orthogonal projector `P_s` onto `T_s(M)`.
    pub fn tangent_projector(&self, s: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_on_manifold(s)?;
        Ok(self.projector_unchecked(s))
    }

    fn projector_unchecked(&self, s: &DVector<f64>) -> DMatrix<f64> {
        let d = self.ambient_dim;
        match self.kind {
            ManifoldKind::Sphere(_) => DMatrix::identity(d, d) - s * s.transpose(),
            ManifoldKind::FlatTorusCircleProduct(k) => {
                let mut p = DMatrix::zeros(d, d);
                for i in 0..k {
                    let (a, b) = (s[2 * i], s[2 * i + 1]);
                    p[(2 * i, 2 * i)] = 1.0 - a * a;
                    p[(2 * i, 2 * i + 1)] = -a * b;
                    p[(2 * i + 1, 2 * i)] = -a * b;
                    p[(2 * i + 1, 2 * i + 1)] = 1.0 - b * b;
                }
                p
            }
        }
    }

    /// Applies `P_s` to every column of `xi`.
    pub fn project_matrix_columns(&self, s: &DVector<f64>, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if xi.nrows() != self.ambient_dim {
            return Err(HomogError::ShapeMismatch(format!(
                "matrix has {} rows, ambient dimension is {}",
                xi.nrows(),
                self.ambient_dim
            )));
        }
        let p = self.tangent_projector(s)?;
        Ok(&p * xi)
    }

    /// Orthonormal basis of `T_s(M)`, returned as the columns of a `d × m` matrix.
    ///
    /// Circles use the analytic frame `(-sin θ, cos θ)`; spheres of higher
    /// dimension run a pivoted Gram–Schmidt over the projector columns
    /// (largest residual norm first, lowest index on ties).
    pub fn tangent_basis(&self, s: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_on_manifold(s)?;
        let d = self.ambient_dim;
        let m = self.intrinsic_dim;
        match self.kind {
            ManifoldKind::Sphere(2) => Ok(DMatrix::from_column_slice(2, 1, &[-s[1], s[0]])),
            ManifoldKind::FlatTorusCircleProduct(k) => {
                let mut b = DMatrix::zeros(d, k);
                for i in 0..k {
                    b[(2 * i, i)] = -s[2 * i + 1];
                    b[(2 * i + 1, i)] = s[2 * i];
                }
                Ok(b)
            }
            ManifoldKind::Sphere(_) => {
                let mut residual = self.projector_unchecked(s);
                let mut basis = DMatrix::zeros(d, m);
                for k in 0..m {
                    let mut best = 0;
                    let mut best_norm = -1.0;
                    for j in 0..d {
                        let nrm = residual.column(j).norm();
                        if nrm > best_norm {
                            best = j;
                            best_norm = nrm;
                        }
                    }
                    if best_norm <= 1e-8 {
                        return Err(HomogError::DegeneratePoint("tangent projector lost rank".into()));
                    }
                    let v = residual.column(best) / best_norm;
                    residual -= &v * (v.transpose() * &residual);
                    basis.set_column(k, &v);
                }
                Ok(basis)
            }
        }
    }

    /// `Π(s + v)`.
    pub fn retract(&self, s: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(v)?;
        if v.iter().all(|&x| x == 0.0) {
            self.check_dim(s)?;
            return Ok(s.clone());
        }
        self.project(&(s + v))
    }

    /// Cut-off `χ(x)` equal to 1 within `δ₀/2` of `M` and to 0 beyond `3δ₀/4`.
    pub fn cutoff_chi(&self, x: &DVector<f64>, delta0: f64) -> f64 {
        cutoff_profile(self.distance(x), delta0)
    }

    /// Lipschitz bound for `s ↦ P_{Π(s)}` on the support of the cut-off.
    pub fn projector_lipschitz(&self, delta0: f64) -> f64 {
        let r_min = (1.0 - 0.75 * delta0).max(MIN_RADIUS);
        2.0 / r_min
    }

    /// Deterministic sample of a point on `M`.
    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        match self.kind {
            ManifoldKind::Sphere(d) => loop {
                let x = DVector::from_fn(d, |_, _| rng.random_range(-1.0..1.0));
                let r = x.norm();
                if r > 0.1 && r <= 1.0 {
                    break x / r;
                }
            },
            ManifoldKind::FlatTorusCircleProduct(k) => {
                let mut s = DVector::zeros(2 * k);
                for i in 0..k {
                    let th: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    s[2 * i] = th.cos();
                    s[2 * i + 1] = th.sin();
                }
                s
            }
        }
    }
}

/// Quintic blend from 1 (at `δ₀/2`) to 0 (at `3δ₀/4`); Lipschitz constant `7.5/δ₀`.
pub fn cutoff_profile(dist: f64, delta0: f64) -> f64 {
    let lo = 0.5 * delta0;
    let hi = 0.75 * delta0;
    if dist <= lo {
        1.0
    } else if dist >= hi {
        0.0
    } else {
        let u = (dist - lo) / (hi - lo);
        1.0 - u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
    }
}

/// Point `(cos θ, sin θ)` on `S^1`.
pub fn circle_point(theta: f64) -> DVector<f64> {
    DVector::from_column_slice(&[theta.cos(), theta.sin()])
}

/// Angle of a point on `S^1`, in `(-π, π]`.
pub fn circle_angle(s: &DVector<f64>) -> f64 {
    s[1].atan2(s[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn projection_examples() {
        let c = Manifold::circle();
        assert_eq!(c.project(&v(&[2.0, 0.0])).unwrap(), v(&[1.0, 0.0]));
        assert_eq!(c.project(&v(&[0.0, -3.0])).unwrap(), v(&[0.0, -1.0]));
        let s2 = Manifold::sphere(3).unwrap();
        let p = s2.project(&v(&[1.0, 1.0, 0.0])).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((p - v(&[h, h, 0.0])).norm() < 1e-15);
    }

    #[test]
    fn projection_of_origin_is_degenerate() {
        let c = Manifold::circle();
        assert!(matches!(c.project(&v(&[0.0, 0.0])), Err(HomogError::DegeneratePoint(_))));
        let t = Manifold::circle_product(2).unwrap();
        assert!(t.project(&v(&[1.0, 0.0, 0.0, 0.0])).is_err());
    }

    #[test]
    fn projector_examples() {
        let c = Manifold::circle();
        let p = c.tangent_projector(&v(&[1.0, 0.0])).unwrap();
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]));
        let p = c.tangent_projector(&v(&[0.0, 1.0])).unwrap();
        assert_eq!(p, DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        let s2 = Manifold::sphere(3).unwrap();
        let p = s2.tangent_projector(&v(&[0.0, 0.0, 1.0])).unwrap();
        assert_eq!(p, DMatrix::from_diagonal(&v(&[1.0, 1.0, 0.0])));
    }

    #[test]
    fn projector_rejects_off_manifold() {
        let c = Manifold::circle();
        assert!(c.tangent_projector(&v(&[1.0 + 1e-6, 0.0])).is_err());
        assert!(c.tangent_projector(&v(&[1.0 + 1e-11, 0.0])).is_ok());
    }

    #[test]
    fn column_projection() {
        let c = Manifold::circle();
        let s = v(&[1.0, 0.0]);
        let xi = DMatrix::from_column_slice(2, 1, &[3.0, 4.0]);
        let out = c.project_matrix_columns(&s, &xi).unwrap();
        assert_eq!(out, DMatrix::from_column_slice(2, 1, &[0.0, 4.0]));
        let tangent = DMatrix::from_column_slice(2, 2, &[0.0, 2.0, 0.0, -1.0]);
        assert_eq!(c.project_matrix_columns(&s, &tangent).unwrap(), tangent);
        let zero = DMatrix::zeros(2, 3);
        assert_eq!(c.project_matrix_columns(&s, &zero).unwrap(), zero);
    }

    #[test]
    fn basis_examples() {
        let c = Manifold::circle();
        assert_eq!(c.tangent_basis(&v(&[1.0, 0.0])).unwrap(), DMatrix::from_column_slice(2, 1, &[0.0, 1.0]));
        assert_eq!(c.tangent_basis(&v(&[0.0, 1.0])).unwrap(), DMatrix::from_column_slice(2, 1, &[-1.0, 0.0]));
        let s2 = Manifold::sphere(3).unwrap();
        assert_eq!(
            s2.tangent_basis(&v(&[0.0, 0.0, 1.0])).unwrap(),
            DMatrix::from_column_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        );
    }

    #[test]
    fn retraction_examples() {
        let c = Manifold::circle();
        let s = v(&[1.0, 0.0]);
        assert_eq!(c.retract(&s, &v(&[0.0, 0.0])).unwrap(), s);
        let r = c.retract(&s, &v(&[0.0, 1.0])).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((r - v(&[h, h])).norm() < 1e-15);
    }

    #[test]
    fn cutoff_examples() {
        let c = Manifold::circle();
        let d0 = 0.5;
        assert_eq!(c.cutoff_chi(&v(&[0.0, 1.0]), d0), 1.0);
        assert_eq!(c.cutoff_chi(&v(&[0.0, 1.0 + d0]), d0), 0.0);
        let mid = c.cutoff_chi(&v(&[0.0, 1.0 + 5.0 * d0 / 8.0]), d0);
        assert!(mid > 0.0 && mid < 1.0);
    }

    #[test]
    fn cutoff_lipschitz_bound() {
        let d0 = 0.4;
        let mut worst: f64 = 0.0;
        let steps = 20_000;
        for i in 0..steps {
            let a = i as f64 / steps as f64;
            let b = (i + 1) as f64 / steps as f64;
            let slope = (cutoff_profile(a, d0) - cutoff_profile(b, d0)).abs() / (b - a);
            worst = worst.max(slope);
        }
        assert!(worst <= 8.0 / d0, "slope {worst}");
        for i in 0..steps {
            let a = i as f64 / steps as f64;
            let b = (i + 1) as f64 / steps as f64;
            assert!(cutoff_profile(b, d0) <= cutoff_profile(a, d0));
        }
    }

    fn catalog() -> Vec<Manifold> {
        vec![
            Manifold::circle(),
            Manifold::sphere(3).unwrap(),
            Manifold::sphere(4).unwrap(),
            Manifold::circle_product(2).unwrap(),
        ]
    }

    #[test]
    fn projector_algebra_on_random_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in catalog() {
            for _ in 0..1000 {
                let s = m.sample_point(&mut rng);
                assert!(m.constraint_residual(&s) <= 1e-12);
                let p = m.tangent_projector(&s).unwrap();
                assert!((&p * &p - &p).norm() <= 1e-12);
                assert!((&p - p.transpose()).norm() <= 1e-12);
                let b = m.tangent_basis(&s).unwrap();
                assert_eq!(b.ncols(), m.intrinsic_dim);
                assert!((&b * b.transpose() - &p).norm() <= 1e-12);
                assert!((b.transpose() * &b - DMatrix::identity(b.ncols(), b.ncols())).norm() <= 1e-12);
                assert!((p.trace() - m.intrinsic_dim as f64).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn projection_is_optimal_among_nearby_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in catalog() {
            for _ in 0..20 {
                let s = m.sample_point(&mut rng);
                let b = m.tangent_basis(&s).unwrap();
                let offset = DVector::from_fn(m.ambient_dim, |_, _| rng.random_range(-0.4..0.4));
                let x = &s + offset;
                let px = m.project(&x).unwrap();
                assert!(m.constraint_residual(&px) <= 1e-12);
                assert!((m.project(&px).unwrap() - &px).norm() <= 1e-15);
                let best = (&x - &px).norm();
                for _ in 0..100 {
                    let c = DVector::from_fn(m.intrinsic_dim, |_, _| rng.random_range(-0.3..0.3));
                    let other = m.retract(&px, &(&b * c)).unwrap();
                    assert!(best <= (&x - other).norm() + 1e-12);
                }
            }
        }
    }

    #[test]
    fn retraction_is_second_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for m in catalog() {
            let s = m.sample_point(&mut rng);
            let b = m.tangent_basis(&s).unwrap();
            let dir = &b * DVector::from_element(m.intrinsic_dim, 1.0);
            assert_eq!(m.retract(&s, &(&dir * 0.0)).unwrap(), s);
            let consts: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&t| {
                    let step = &dir * t;
                    let r = m.retract(&s, &step).unwrap();
                    (r - (&s + &step)).norm() / (t * t)
                })
                .collect();
            for c in &consts[1..] {
                assert!((c / consts[0] - 1.0).abs() < 0.05, "{consts:?}");
            }
        }
    }
}
