use std::collections::BTreeSet;

use mdforms_core::cochain_spaces::{restriction_operator, BcVariant, WeightMode};
use mdforms_core::differential_ops::MixedComplex;
use mdforms_core::fixtures;
use mdforms_core::forest_geometry::{from_file, ForestGeometry, NodeId};
use mdforms_core::hodge::{betti_numbers, harmonic_basis, poincare_constant, SolverOptions};
use mdforms_core::laplace_solver::{
    coefficient_operators, coercivity_estimate, energy_minimality, euler_lagrange_residual, evaluate_functional, flux_balance, min_rayleigh_quotient,
    saddle_matrix, solve_reduced, solver_complex, CoefficientField, CoefficientOverride, LinearSolver, SolveOptions,
};
use mdforms_core::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn conforming() -> Vec<(&'static str, ForestGeometry)> {
    fixtures::shipped()
        .into_iter()
        .filter(|(n, _)| !n.starts_with("fig1_flipped"))
        .map(|(n, f)| (n, from_file(&f).unwrap()))
        .collect()
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn setup(g: &ForestGeometry) -> (MixedComplex, Vec<usize>) {
    let cx = solver_complex(g, WeightMode::Measure).unwrap();
    let b = betti_numbers(&cx).unwrap();
    (cx, b)
}

#[test]
fn functional_basics() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for (name, g) in conforming() {
        let (cx, b) = setup(&g);
        for k in 0..=cx.n {
            let ops = coefficient_operators(&g, &cx, k, &CoefficientField::unit(k)).unwrap();
            let zero = vec![0.0; cx.dim(k)];
            let f = random(&mut rng, cx.dim(k));
            assert_eq!(evaluate_functional(&cx, k, &ops, &zero, &f).unwrap(), 0.0);
            for _ in 0..10 {
                let a = random(&mut rng, cx.dim(k));
                assert!(evaluate_functional(&cx, k, &ops, &a, &zero).unwrap() >= 0.0, "{name} k={k}");
            }
            // equality exactly on harmonic forms
            for h in harmonic_basis(&cx, k, b[k], 2, &SolverOptions::default()).unwrap() {
                assert!(evaluate_functional(&cx, k, &ops, &h, &zero).unwrap() <= 1e-16, "{name} k={k}");
            }
        }
    }
}

#[test]
fn functional_rejects_mismatched_lengths() {
    let g = from_file(&fixtures::single_square(2)).unwrap();
    let (cx, _) = setup(&g);
    let ops = coefficient_operators(&g, &cx, 1, &CoefficientField::unit(1)).unwrap();
    let a = vec![0.0; cx.dim(1)];
    assert!(matches!(evaluate_functional(&cx, 1, &ops, &a, &[0.0]), Err(Error::DegreeMismatch { .. })));
}

#[test]
fn zero_source_gives_zero_solution() {
    for (name, g) in conforming() {
        let (cx, b) = setup(&g);
        for k in 0..=cx.n {
            let (st, rep) = solve_reduced(&g, &cx, k, &CoefficientField::unit(k), &vec![0.0; cx.dim(k)], b[k], &SolveOptions::default()).unwrap();
            assert!(st.a.iter().all(|&v| v == 0.0), "{name} k={k}");
            assert!(st.sigma.iter().all(|&v| v == 0.0), "{name} k={k}");
            assert_eq!(rep.energy, 0.0);
        }
    }
}

#[test]
fn weak_form_and_minimality() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (name, g) in conforming() {
        let (cx, b) = setup(&g);
        for k in 0..=cx.n {
            let f = random(&mut rng, cx.dim(k));
            let (st, rep) = solve_reduced(&g, &cx, k, &CoefficientField::unit(k), &f, b[k], &SolveOptions::default()).unwrap();
            assert!(rep.saddle_residual <= 1e-10, "{name} k={k}: {}", rep.saddle_residual);
            assert!(rep.harmonic_orthogonality <= 1e-8, "{name} k={k}");
            let el = euler_lagrange_residual(&cx, k, &st, 100, 9);
            assert!(el <= 1e-8, "{name} k={k}: {el}");
            let worst = energy_minimality(&cx, k, &st, &f, 100, 9).unwrap();
            assert!(worst >= 0.0, "{name} k={k}: {worst}");
        }
    }
}

#[test]
fn harmonic_part_is_reported() {
    let g = from_file(&fixtures::annulus(3, 12)).unwrap();
    let (cx, b) = setup(&g);
    let k = 1;
    assert_eq!(b[k], 1);
    let h = harmonic_basis(&cx, k, 1, 5, &SolverOptions::default()).unwrap().remove(0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = random(&mut rng, cx.dim(k));
    let f: Vec<f64> = h.iter().zip(&noise).map(|(x, y)| 3.0 * x + 0.01 * y).collect();
    let (st, rep) = solve_reduced(&g, &cx, k, &CoefficientField::unit(k), &f, b[k], &SolveOptions::default()).unwrap();
    assert_eq!(rep.harmonic_dim, 1);
    let removed = cx.spaces[k].restrict(&rep.harmonic_removed).unwrap();
    let expect = 3.0 + 0.01 * cx.inner(k, &h, &noise);
    assert!((cx.norm(k, &removed) - expect.abs()).abs() <= 1e-8 * expect.abs());
    assert!(cx.inner(k, &h, &st.f_projected).abs() <= 1e-10);
}

#[test]
fn fracture_flux_balance() {
    let g = from_file(&fixtures::fracture_square(8)).unwrap();
    let (cx, b) = setup(&g);
    let k = cx.n;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let f = random(&mut rng, cx.dim(k));
    let (st, _) = solve_reduced(&g, &cx, k, &CoefficientField::unit(k), &f, b[k], &SolveOptions::default()).unwrap();
    assert!(flux_balance(&cx, k, &st).unwrap() <= 1e-9);
    assert!(cx.jump[k - 1].to_f64().matvec(&st.sigma).iter().any(|v| v.abs() > 1e-6), "fracture carries flux");
    assert!(flux_balance(&cx, 1, &st).is_err());
}

#[test]
fn direct_and_minres_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for name in ["fig1.json", "fracture_square.json", "annulus.json"] {
        let g = conforming().into_iter().find(|(n, _)| *n == name).unwrap().1;
        let (cx, b) = setup(&g);
        for k in 0..=cx.n {
            let f = random(&mut rng, cx.dim(k));
            let field = CoefficientField::unit(k);
            let (d, _) = solve_reduced(&g, &cx, k, &field, &f, b[k], &SolveOptions::default()).unwrap();
            let opts = SolveOptions { solver: LinearSolver::Minres, tol: 1e-12, ..SolveOptions::default() };
            let (m, rep) = solve_reduced(&g, &cx, k, &field, &f, b[k], &opts).unwrap();
            assert_eq!(rep.solver, LinearSolver::Minres);
            let diff: Vec<f64> = d.a.iter().zip(&m.a).map(|(x, y)| x - y).collect();
            assert!(cx.norm(k, &diff) <= 1e-8 * cx.norm(k, &d.a), "{name} k={k}");
        }
    }
}

#[test]
fn natural_complex_is_rejected() {
    let g = from_file(&fixtures::single_square(2)).unwrap();
    let cx = MixedComplex::assemble(&g, WeightMode::Measure, BcVariant::Natural).unwrap();
    let f = vec![0.0; cx.dim(2)];
    assert!(solve_reduced(&g, &cx, 2, &CoefficientField::unit(2), &f, 0, &SolveOptions::default()).is_err());
}

#[test]
fn coercivity() {
    let opts = SolverOptions::default();
    for (name, g) in conforming() {
        let (cx, b) = setup(&g);
        for k in 0..=cx.n {
            if cx.dim(k) <= b[k] {
                continue;
            }
            let unit = CoefficientField::unit(k);
            let c1 = coercivity_estimate(&g, &cx, k, &unit, b[k]).unwrap();
            assert!(c1 > 0.0, "{name} k={k}");
            let c10 = coercivity_estimate(&g, &cx, k, &unit.scaled(10.0), b[k]).unwrap();
            assert!((c10 / c1 - 10.0).abs() <= 1e-8, "{name} k={k}: {c1} {c10}");
            // scaling one side only stays between the two extremes
            let mut one = unit.clone();
            one.default_r = 10.0;
            let c = coercivity_estimate(&g, &cx, k, &one, b[k]).unwrap();
            assert!(c >= c1 * (1.0 - 1e-10) && c <= c10 * (1.0 + 1e-10), "{name} k={k}: {c1} {c} {c10}");
            let pc = poincare_constant(&cx, k, b[k], 1, &opts).unwrap().constant;
            assert!(c1 >= (1.0 - 1e-9) / (1.0 + pc * pc), "{name} k={k}: {c1} vs C = {pc}");
        }
    }
}

#[test]
fn saddle_symmetry_and_definiteness() {
    for (name, g) in conforming() {
        let (cx, b) = setup(&g);
        for k in 0..=cx.n {
            let ops = coefficient_operators(&g, &cx, k, &CoefficientField::unit(k)).unwrap();
            let sys = saddle_matrix(&cx, k, &ops);
            let t = sys.matrix.transpose();
            let diff = sys.matrix.add(&t.map(|v: f64| -v));
            assert!(diff.triplets().all(|(_, _, v)| v.abs() <= 1e-14 * sys.matrix.max_abs().max(1.0)), "{name} k={k}");
            let h = harmonic_basis(&cx, k, b[k], 1, &SolverOptions::default()).unwrap();
            if cx.dim(k) > b[k] {
                assert!(min_rayleigh_quotient(&cx, k, &ops, &h, 50, 3) > 0.0, "{name} k={k}");
            }
        }
    }
}

#[test]
fn bad_coefficients_are_rejected() {
    let g = from_file(&fixtures::fracture_square(4)).unwrap();
    let (cx, _) = setup(&g);
    let mut f = CoefficientField::unit(1);
    f.default_r = -1.0;
    assert!(matches!(coefficient_operators(&g, &cx, 1, &f), Err(Error::Coefficient(_))));
    let mut f = CoefficientField::unit(1);
    f.overrides.push(CoefficientOverride { node: 3, r: 0.0, rstar: None });
    assert!(matches!(coefficient_operators(&g, &cx, 1, &f), Err(Error::Coefficient(_))));
    let mut f = CoefficientField::unit(1);
    f.overrides.push(CoefficientOverride { node: 3, r: 1.0, rstar: Some(f64::NAN) });
    assert!(matches!(coefficient_operators(&g, &cx, 1, &f), Err(Error::Coefficient(_))));
    let mut f = CoefficientField::unit(1);
    f.overrides.push(CoefficientOverride { node: 999, r: 1.0, rstar: None });
    assert!(matches!(coefficient_operators(&g, &cx, 1, &f), Err(Error::Coefficient(_))));
    let f = CoefficientField::unit(2);
    let rhs = vec![0.0; cx.dim(1)];
    assert!(matches!(solve_reduced(&g, &cx, 1, &f, &rhs, 0, &SolveOptions::default()), Err(Error::DegreeMismatch { .. })));
}

/// Reduced DOFs of degree `p` that node j's restriction reads.
fn support(g: &ForestGeometry, cx: &MixedComplex, p: usize, j: NodeId) -> BTreeSet<usize> {
    let space = &cx.spaces[p];
    let r = restriction_operator(g, &space.layout, j).unwrap();
    let off = space.layout.block(g.tree_of(j)).unwrap().offset;
    r.triplets().filter_map(|(_, c, _)| space.reduced_index(off + c)).collect()
}

#[test]
fn coefficient_locality() {
    let g = from_file(&fixtures::fig1(4)).unwrap();
    let (cx, _) = setup(&g);
    let k = 1;
    let base = saddle_matrix(&cx, k, &coefficient_operators(&g, &cx, k, &CoefficientField::unit(k)).unwrap());
    let n_s = base.n_sigma;
    let dk = cx.d_f64(k);
    for node in g.nodes().iter().map(|r| r.id) {
        let mut field = CoefficientField::unit(k);
        field.overrides.push(CoefficientOverride { node, r: 7.0, rstar: Some(0.25) });
        let sys = saddle_matrix(&cx, k, &coefficient_operators(&g, &cx, k, &field).unwrap());
        let lo = support(&g, &cx, k - 1, node);
        let hi = support(&g, &cx, k + 1, node);
        let touched: BTreeSet<usize> = dk.triplets().filter(|(s, _, _)| hi.contains(s)).map(|(_, c, _)| c).collect();
        let diff = sys.matrix.add(&base.matrix.map(|v: f64| -v));
        for (p, q, v) in diff.triplets() {
            if v.abs() <= 1e-12 {
                continue;
            }
            let ok = if p < n_s || q < n_s {
                p == q && lo.contains(&p)
            } else {
                let (p, q) = (p - n_s, q - n_s);
                touched.contains(&p) && touched.contains(&q) && dk.triplets().any(|(s, c, _)| c == p && hi.contains(&s) && dk.row(s).any(|(c2, _)| c2 == q))
            };
            assert!(ok, "node {node}: entry ({p}, {q}) changed by {v}");
        }
    }
}
