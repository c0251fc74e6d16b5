//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Run with `cargo test -p tanhom --test acceptance -- --nocapture`.

use std::f64::consts::FRAC_PI_2;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tanhom::cell_solver::{solve_cell, Boundary, CellEnergy, CellProblemSpec};
use tanhom::density::{
    build_density_table, check_growth_lipschitz, check_tangential_quasiconvexity, laminate_oracle,
    sample_tangent_pairs, tf_hom, verify_equivalence, ExtensionChoice, TfHomOptions, XiLattice,
};
use tanhom::gamma_sim::{
    dp_oracle_1d, metric_geodesic_energy, run_gamma_experiment, DiscreteEnergy, DpConfig, GammaExperimentConfig,
    OscillatingEnergy,
};
use tanhom::grid::Grid;
use tanhom::integrand::{Density, FBar, Integrand, StepProfile};
use tanhom::manifold::{circle_point, Manifold};

fn verdict(n: usize, name: &str, pass: bool, detail: String) {
    println!("criterion {n} ({name}): {} | {detail}", if pass { "PASS" } else { "FAIL" });
    assert!(pass, "criterion {n} ({name}) failed: {detail}");
}

fn a_profile() -> StepProfile {
    StepProfile::new(vec![0.5], vec![1.0, 2.0]).unwrap()
}

fn b_profile() -> StepProfile {
    StepProfile::constant(1.0).unwrap()
}

fn laminate(n_dim: usize) -> Integrand {
    Integrand::laminate_quadratic(a_profile(), b_profile(), n_dim).unwrap()
}

fn tangent(s: &DVector<f64>, coeffs: &[f64]) -> DMatrix<f64> {
    Manifold::circle().tangent_basis(s).unwrap() * DMatrix::from_row_slice(1, coeffs.len(), coeffs)
}

/// 8 angles × 5 tangent coefficient vectors.
fn sweep() -> Vec<(DVector<f64>, DMatrix<f64>)> {
    let coeffs = [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [-2.0, 1.0], [0.5, -1.5]];
    let mut out = Vec::new();
    for k in 0..8 {
        let s = circle_point(std::f64::consts::TAU * k as f64 / 8.0 + 0.1);
        for c in &coeffs {
            out.push((s.clone(), tangent(&s, c)));
        }
    }
    out
}

#[test]
fn criterion_1_laminate_oracle() {
    let start = Instant::now();
    let f = laminate(2);
    let m = Manifold::circle();
    let opts = TfHomOptions { t_list: vec![1, 2], n: 64, ..Default::default() };
    let mut worst: f64 = 0.0;
    for (s, xi) in sweep() {
        let v = tf_hom(&f, &m, &s, &xi, &opts).unwrap().value;
        let o = laminate_oracle(&a_profile(), &b_profile(), &s, &xi).unwrap();
        worst = worst.max((v - o).abs() / (1.0 + o));
    }
    let elapsed = start.elapsed().as_secs_f64();

    let fine = TfHomOptions { t_list: vec![1], n: 128, ..Default::default() };
    let mut worst_fine: f64 = 0.0;
    for (s, xi) in sweep() {
        let v = tf_hom(&f, &m, &s, &xi, &fine).unwrap().value;
        let o = laminate_oracle(&a_profile(), &b_profile(), &s, &xi).unwrap();
        worst_fine = worst_fine.max((v - o).abs() / (1.0 + o));
    }

    let north = DVector::from_column_slice(&[0.0, 1.0]);
    let harmonic = tf_hom(&f, &m, &north, &tangent(&north, &[1.0, 0.0]), &opts).unwrap().value;
    let arithmetic = tf_hom(&f, &m, &north, &tangent(&north, &[0.0, 1.0]), &opts).unwrap().value;
    let spots_ok = (harmonic - 4.0 / 3.0).abs() <= 0.02 * 4.0 / 3.0 && (arithmetic - 1.5).abs() <= 0.02 * 1.5;
    verdict(
        1,
        "laminate oracle",
        worst <= 2e-2 && worst_fine <= 5e-3 && spots_ok && elapsed <= 120.0,
        format!(
            "max rel err {worst:.2e} at n=64, {worst_fine:.2e} at n=128, spots {harmonic:.10} / {arithmetic:.10}, sweep {elapsed:.1}s"
        ),
    );
}

#[test]
fn criterion_2_equivalence() {
    let f = laminate(2);
    let m = Manifold::circle();
    let opts = TfHomOptions { t_list: vec![1], n: 16, ..Default::default() };
    let fbar = verify_equivalence(&f, &m, &sweep(), &opts, ExtensionChoice::FBar).unwrap();

    let area = Integrand::area_laminate(a_profile(), 2, 2).unwrap();
    let qn = TfHomOptions { t_list: vec![1], n: 8, ..Default::default() };
    let samples: Vec<_> = sweep().into_iter().step_by(7).collect();
    let mut g_gaps = Vec::new();
    for mu in [1e-2, 1e-3, 1e-4] {
        let ext = ExtensionChoice::G { delta0: m.delta0, huber_mu: mu };
        g_gaps.push(verify_equivalence(&area, &m, &samples, &qn, ext).unwrap().max_rel_gap);
    }
    let shrinking = g_gaps.windows(2).all(|w| w[1] <= w[0] + 1e-9);
    let g_final = g_gaps[2];
    verdict(
        2,
        "equivalence",
        fbar.max_rel_gap <= 1e-6 && g_final <= 1e-3 && shrinking,
        format!("f-bar max gap {:.2e}; g gaps at mu=1e-2,1e-3,1e-4: {g_gaps:?}", fbar.max_rel_gap),
    );
}

#[test]
fn criterion_3_sandwich() {
    let m = Manifold::circle();
    let f = laminate(2);
    let opts = TfHomOptions { t_list: vec![1, 2], n: 16, ..Default::default() };
    let lam = build_density_table(&f, &m, 8, &XiLattice::integers(-2, 2), &opts).unwrap();
    let g = f.growth();
    let lam_bad = lam.sandwich_violations(&m, g.alpha, g.beta, g.p).unwrap();

    let area = Integrand::area_laminate(a_profile(), 2, 2).unwrap();
    let qn = TfHomOptions { t_list: vec![1], n: 8, ..Default::default() };
    let at = build_density_table(&area, &m, 8, &XiLattice::integers(-2, 2), &qn).unwrap();
    let ga = area.growth();
    let area_bad = at.sandwich_violations(&m, ga.alpha, ga.beta, ga.p).unwrap();
    let total = lam.entries.len() + at.entries.len();
    let failed = lam.failures() + at.failures();
    verdict(
        3,
        "sandwich",
        lam_bad.is_empty() && area_bad.is_empty() && failed == 0,
        format!(
            "{} of {total} entries violate, {failed} failed; {:?}",
            lam_bad.len() + area_bad.len(),
            lam_bad.iter().chain(&area_bad).next()
        ),
    );
}

#[test]
fn criterion_4_lipschitz() {
    let m = Manifold::circle();
    let f = laminate(2);
    let opts = TfHomOptions { t_list: vec![1], n: 16, ..Default::default() };
    let pairs = sample_tangent_pairs(&m, 2, 400, 5.0, 2024).unwrap();
    let c200 = check_growth_lipschitz(&f, &m, &pairs[..200], &opts).unwrap().fitted_c;
    let c400 = check_growth_lipschitz(&f, &m, &pairs, &opts).unwrap().fitted_c;
    let drift = (c400 - c200).abs() / c200;
    verdict(
        4,
        "lipschitz",
        c200.is_finite() && c200 > 0.0 && drift <= 0.1,
        format!("C(200) = {c200:.5}, C(400) = {c400:.5}, drift {:.2}%", 100.0 * drift),
    );
}

#[test]
fn criterion_5_quasiconvexity() {
    let m = Manifold::circle();
    let f = laminate(2);
    let opts = TfHomOptions { t_list: vec![1], n: 16, ..Default::default() };
    let points = [(0.3, [1.0, 0.5]), (1.7, [-2.0, 1.0]), (4.0, [0.0, 0.0])];
    let mut worst = f64::NEG_INFINITY;
    let mut all = true;
    for (k, (th, c)) in points.iter().enumerate() {
        let s = circle_point(*th);
        let xi = tangent(&s, c);
        let r = check_tangential_quasiconvexity(&f, &m, &s, &xi, 100, 4, 77 + k as u64, &opts).unwrap();
        worst = worst.max(r.max_residual / r.tolerance);
        all &= r.passed && r.residuals.len() == 100;
    }
    verdict(5, "tangential quasiconvexity", all, format!("worst residual / tolerance {worst:.3e}"));
}

#[test]
fn criterion_6_tiling_and_boundary_monotonicity() {
    let m = Manifold::circle();
    let f = laminate(2);
    let area = Integrand::area_laminate(a_profile(), 2, 2).unwrap();
    let mut worst_increase = f64::NEG_INFINITY;
    let mut periodic_excess = f64::NEG_INFINITY;
    for (density, n) in [(&f, 8), (&area, 4)] {
        for (th, c) in [(0.4, [1.0, -1.0]), (2.0, [0.5, 2.0])] {
            let s = circle_point(th);
            let xi = tangent(&s, &c);
            let dir = TfHomOptions {
                t_list: vec![1, 2, 4],
                n,
                boundary: Boundary::DirichletZero,
                tol_grad: 1e-12,
                ..Default::default()
            };
            let per = TfHomOptions { boundary: Boundary::Periodic, ..dir.clone() };
            let d = tf_hom(density, &m, &s, &xi, &dir).unwrap();
            let p = tf_hom(density, &m, &s, &xi, &per).unwrap();
            for w in d.trace.windows(2) {
                worst_increase = worst_increase.max(w[1].value - w[0].value);
            }
            for (pt, dt) in p.trace.iter().zip(&d.trace) {
                periodic_excess = periodic_excess.max(pt.value - dt.value);
            }
        }
    }
    verdict(
        6,
        "tiling/boundary monotonicity",
        worst_increase <= 1e-10 && periodic_excess <= 1e-10,
        format!(
            "max Dirichlet increase along t {worst_increase:.2e}, max periodic minus Dirichlet {periodic_excess:.2e}"
        ),
    );
}

#[test]
fn criterion_7_zero_corrector() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_phi: f64 = 0.0;
    let mut worst_val: f64 = 0.0;
    for m in [Manifold::circle(), Manifold::sphere(3).unwrap(), Manifold::circle_product(2).unwrap()] {
        for n_dim in 1..=2 {
            let f = Integrand::isotropic(1.0, 2.0, n_dim, m.ambient_dim).unwrap();
            let s = m.sample_point(&mut rng);
            let b = m.tangent_basis(&s).unwrap();
            let c = DMatrix::from_fn(m.intrinsic_dim, n_dim, |_, _| rng.random_range(-2.0..2.0));
            let xi = b * c;
            for boundary in [Boundary::Periodic, Boundary::DirichletZero] {
                let spec = CellProblemSpec::new(m.clone(), s.clone(), xi.clone())
                    .with_nodes_per_period(8)
                    .with_boundary(boundary);
                let sol = solve_cell(&f, &spec).unwrap();
                worst_phi = worst_phi.max(sol.corrector.max_abs());
                worst_val = worst_val.max((sol.value - xi.norm_squared()).abs() / xi.norm_squared());
            }
        }
    }
    verdict(
        7,
        "zero corrector",
        worst_phi <= 1e-10 && worst_val <= 1e-13,
        format!("max |phi| {worst_phi:.2e}, max relative value error {worst_val:.2e}"),
    );
}

#[test]
fn criterion_8_gamma_probe() {
    let start = Instant::now();
    let f = laminate(1);
    let m = Manifold::circle();
    let config = GammaExperimentConfig::default();
    let report = run_gamma_experiment(&f, &m, &config, None).unwrap();
    let gaps: Vec<f64> = report.runs.iter().map(|r| r.gap).collect();
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);

    let h = |th: f64| {
        let s = circle_point(th);
        laminate_oracle(&a_profile(), &b_profile(), &s, &tangent(&s, &[1.0])).unwrap()
    };
    let dp = dp_oracle_1d(|th, v| h(th) * v * v, 0.0, FRAC_PI_2, &DpConfig::default()).unwrap();
    let dp_rel = (report.hom_energy - dp).abs() / dp;
    let quadrature = metric_geodesic_energy(h, 0.0, FRAC_PI_2, 400);
    let elapsed = start.elapsed().as_secs_f64();
    verdict(
        8,
        "gamma-convergence probe",
        decreasing
            && report.final_gap_rel <= 0.05
            && dp_rel <= 0.01
            && report.all_converged()
            && elapsed <= 300.0,
        format!(
            "gaps {gaps:?}, final gap {:.3}% of E_hom = {:.6}, DP {dp:.6} ({:.3}%), quadrature {quadrature:.6}, {elapsed:.1}s",
            100.0 * report.final_gap_rel,
            report.hom_energy,
            100.0 * dp_rel
        ),
    );
}

fn fd_check(value: impl Fn(&[f64]) -> f64, x: &[f64], analytic: &[f64], free: impl Fn(usize) -> bool) -> f64 {
    let h = 1e-6;
    let mut work = x.to_vec();
    let mut err: f64 = 0.0;
    let mut scale: f64 = 1e-8;
    for k in (0..x.len()).filter(|&k| free(k)) {
        work[k] = x[k] + h;
        let plus = value(&work);
        work[k] = x[k] - h;
        let minus = value(&work);
        work[k] = x[k];
        let fd = (plus - minus) / (2.0 * h);
        err = err.max((fd - analytic[k]).abs());
        scale = scale.max(analytic[k].abs());
    }
    err / scale
}

#[test]
fn criterion_9_gradient_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = Manifold::circle();
    let lam = laminate(2);
    let area = Integrand::area_laminate(a_profile(), 2, 2).unwrap();
    let fbar = FBar::new(lam.clone(), m.clone()).unwrap();
    let mut worst: f64 = 0.0;
    let mut fields = 0;

    for k in 0..40 {
        let s = m.sample_point(&mut rng);
        let c = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let xi = tangent(&s, &c);
        let periodic = k % 2 == 0;
        let grid = Grid::new(2, 4, 0.25, periodic);
        let fbar_at;
        let (density, basis): (&dyn Density, DMatrix<f64>) = match k % 4 {
            0 | 1 => (&lam, m.tangent_basis(&s).unwrap()),
            2 => (&area, m.tangent_basis(&s).unwrap()),
            _ => {
                fbar_at = fbar.at(&s).unwrap();
                (&fbar_at, DMatrix::identity(2, 2))
            }
        };
        let energy = CellEnergy::new(density, xi, basis, grid);
        let mut phi: Vec<f64> = (0..energy.unknowns()).map(|_| rng.random_range(-1.0..1.0)).collect();
        energy.clear_boundary(&mut phi);
        let g = energy.gradient(&phi);
        let comps = energy.coord_dim();
        let grid = energy.grid().clone();
        worst = worst.max(fd_check(|p| energy.solver_value(p), &phi, &g, |i| !grid.is_boundary(i / comps)));
        fields += 1;
    }

    let f1 = laminate(1);
    let config = GammaExperimentConfig { cells: 32, epsilons: vec![0.25], dp: None, ..Default::default() };
    let osc = OscillatingEnergy::new(&f1, &m, &config, 0.25).unwrap();
    let grid = Grid::new(1, 32, 1.0 / 32.0, false);
    for _ in 0..10 {
        let u: Vec<f64> =
            (0..33).flat_map(|_| circle_point(rng.random_range(0.0..FRAC_PI_2)).data.as_vec().clone()).collect();
        let mut g = vec![0.0; u.len()];
        osc.solver_value_grad(&u, &mut g);
        let value = |v: &[f64]| osc.solver_value_grad(v, &mut vec![0.0; v.len()]);
        worst = worst.max(fd_check(value, &u, &g, |i| !grid.is_boundary(i / 2)));
        fields += 1;
    }
    verdict(
        9,
        "gradient correctness",
        fields == 50 && worst <= 1e-5,
        format!("{fields} random fields, max relative deviation from central differences {worst:.2e}"),
    );
}
