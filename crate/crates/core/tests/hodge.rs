use mdforms_core::cochain_spaces::{BcVariant, WeightMode};
use mdforms_core::differential_ops::MixedComplex;
use mdforms_core::fixtures;
use mdforms_core::forest_geometry::{from_file, ForestGeometry, GeometryFile};
use mdforms_core::hodge::{
    betti_numbers, dense_kernel_dimension, harmonic_basis, hodge_decompose, poincare_constant, poincare_lambda_with, project_out, EigenMethod,
    SolverOptions,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BCS: [BcVariant; 2] = [BcVariant::Natural, BcVariant::Essential];

fn conforming() -> Vec<(&'static str, ForestGeometry)> {
    fixtures::shipped()
        .into_iter()
        .filter(|(n, _)| !n.starts_with("fig1_flipped"))
        .map(|(n, f)| (n, from_file(&f).unwrap()))
        .collect()
}

fn is_closed(g: &ForestGeometry) -> bool {
    g.meta().and_then(|m| m.get("closed")).and_then(|v| v.as_bool()).unwrap_or(false)
}

fn expected(g: &ForestGeometry, bc: BcVariant) -> Option<Vec<usize>> {
    let key = if bc == BcVariant::Natural { "betti" } else { "betti_essential" };
    serde_json::from_value(g.meta()?.get(key)?.clone()).ok()
}

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn svd_rank(m: &DMatrix<f64>) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let top = sv.max();
    sv.iter().filter(|&&s| s > 1e-9 * top.max(1.0)).count()
}

#[test]
fn betti_numbers_match_metadata() {
    for (name, g) in conforming() {
        for bc in BCS {
            let cx = MixedComplex::assemble(&g, WeightMode::Unit, bc).unwrap();
            let b = betti_numbers(&cx).unwrap();
            if let Some(e) = expected(&g, bc) {
                assert_eq!(b, e, "{name} {bc:?}");
            }
        }
    }
}

#[test]
fn exact_rank_agrees_with_svd() {
    for (name, g) in conforming() {
        for bc in BCS {
            let cx = MixedComplex::assemble(&g, WeightMode::Unit, bc).unwrap();
            let b = betti_numbers(&cx).unwrap();
            let ranks: Vec<usize> = (0..cx.n).map(|k| svd_rank(&cx.d_f64(k).to_dense())).collect();
            for k in 0..=cx.n {
                let out = if k < cx.n { ranks[k] } else { 0 };
                let inc = if k > 0 { ranks[k - 1] } else { 0 };
                assert_eq!(b[k], cx.dim(k) - out - inc, "{name} {bc:?} k={k}");
            }
        }
    }
}

#[test]
fn euler_characteristic() {
    for (name, g) in conforming() {
        for bc in BCS {
            let cx = MixedComplex::assemble(&g, WeightMode::Unit, bc).unwrap();
            let b = betti_numbers(&cx).unwrap();
            let alt = |v: &dyn Fn(usize) -> usize| (0..=cx.n).map(|k| if k % 2 == 0 { v(k) as i64 } else { -(v(k) as i64) }).sum::<i64>();
            assert_eq!(alt(&|k| b[k]), alt(&|k| cx.dim(k)), "{name} {bc:?}");
        }
    }
}

#[test]
fn closed_forests_ignore_boundary_variant() {
    for (name, g) in conforming() {
        if !is_closed(&g) {
            continue;
        }
        let nat = betti_numbers(&MixedComplex::assemble(&g, WeightMode::Unit, BcVariant::Natural).unwrap()).unwrap();
        let ess = betti_numbers(&MixedComplex::assemble(&g, WeightMode::Unit, BcVariant::Essential).unwrap()).unwrap();
        assert_eq!(nat, ess, "{name}");
    }
}

#[test]
fn harmonic_dimensions_agree_across_variants() {
    // with boundary the variants pair degree k with n - k; without it they
    // are the same complex
    for (name, g) in conforming() {
        let nat = MixedComplex::assemble(&g, WeightMode::Hodge, BcVariant::Natural).unwrap();
        let ess = MixedComplex::assemble(&g, WeightMode::Hodge, BcVariant::Essential).unwrap();
        let n = g.n();
        for k in 0..=n {
            let partner = if is_closed(&g) { k } else { n - k };
            assert_eq!(dense_kernel_dimension(&nat, k, 1e-9), dense_kernel_dimension(&ess, partner, 1e-9), "{name} k={k}");
        }
    }
}

#[test]
fn harmonic_basis_properties() {
    let opts = SolverOptions::default();
    for (name, g) in conforming() {
        for bc in BCS {
            let cx = MixedComplex::assemble(&g, WeightMode::Measure, bc).unwrap();
            let b = betti_numbers(&cx).unwrap();
            for k in 0..=cx.n {
                let h = harmonic_basis(&cx, k, b[k], 3, &opts).unwrap();
                assert_eq!(h.len(), b[k]);
                assert_eq!(dense_kernel_dimension(&cx, k, 1e-9), b[k], "{name} {bc:?} k={k}");
                for (i, c) in h.iter().enumerate() {
                    let mut r = 0.0;
                    if k < cx.n {
                        r += cx.norm(k + 1, &cx.derivative(k, c));
                    }
                    if k > 0 {
                        r += cx.norm(k - 1, &cx.codifferential(k, c));
                    }
                    assert!(r <= 1e-8 * cx.norm(k, c), "{name} {bc:?} k={k}: {r}");
                    for (j, d) in h.iter().enumerate() {
                        let want = if i == j { 1.0 } else { 0.0 };
                        assert!((cx.inner(k, c, d) - want).abs() < 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn contractible_and_annulus_harmonics() {
    let opts = SolverOptions::default();
    let sq = from_file(&fixtures::fracture_square(8)).unwrap();
    let cx = MixedComplex::assemble(&sq, WeightMode::Measure, BcVariant::Natural).unwrap();
    assert!(harmonic_basis(&cx, 1, betti_numbers(&cx).unwrap()[1], 1, &opts).unwrap().is_empty());
    let an = from_file(&fixtures::annulus(3, 12)).unwrap();
    let cx = MixedComplex::assemble(&an, WeightMode::Measure, BcVariant::Natural).unwrap();
    let lap = mdforms_core::hodge::laplacian(&cx, 1).to_dense();
    let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(cx.mass[1].clone()));
    // L v = λ M v with diagonal M: symmetric scaling
    let s = m.map(|x| if x > 0.0 { 1.0 / x.sqrt() } else { 0.0 });
    let eig = (&s * lap * &s).symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    assert_eq!(eig.eigenvalues.iter().filter(|&&v| v.abs() < 1e-9 * scale).count(), 1);
    assert_eq!(harmonic_basis(&cx, 1, 1, 1, &opts).unwrap().len(), 1);
}

#[test]
fn decomposition_residuals() {
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (name, g) in conforming() {
        for bc in BCS {
            let cx = MixedComplex::assemble(&g, WeightMode::Measure, bc).unwrap();
            let betti = betti_numbers(&cx).unwrap();
            for k in 0..=cx.n {
                for _ in 0..10 {
                    let a = random(&mut rng, cx.dim(k));
                    let h = hodge_decompose(&cx, k, &a, &opts).unwrap();
                    assert!(h.reconstruction_residual(&cx, &a) <= 1e-8, "{name} {bc:?} k={k}");
                    assert!(h.orthogonality_residual(&cx, &a) <= 1e-8, "{name} {bc:?} k={k}");
                    assert!(h.harmonic_residual(&cx, &a) <= 1e-8, "{name} {bc:?} k={k}");
                    if betti[k] == 0 {
                        assert!(cx.norm(k, &h.a_0) <= 1e-8 * cx.norm(k, &a), "{name} {bc:?} k={k}");
                    }
                }
            }
        }
    }
}

#[test]
fn exact_and_harmonic_inputs() {
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = from_file(&fixtures::annulus(3, 12)).unwrap();
    let cx = MixedComplex::assemble(&g, WeightMode::Measure, BcVariant::Natural).unwrap();
    let k = 1;
    let w = random(&mut rng, cx.dim(0));
    let a = cx.derivative(0, &w);
    let h = hodge_decompose(&cx, k, &a, &opts).unwrap();
    let an = cx.norm(k, &a);
    assert!(cx.norm(k, &h.a_dstar) <= 1e-8 * an);
    assert!(cx.norm(k, &h.a_0) <= 1e-8 * an);
    let diff: Vec<f64> = a.iter().zip(&h.a_d).map(|(x, y)| x - y).collect();
    assert!(cx.norm(k, &diff) <= 1e-8 * an);

    let c = harmonic_basis(&cx, k, 1, 9, &opts).unwrap().remove(0);
    let h = hodge_decompose(&cx, k, &c, &opts).unwrap();
    assert!(cx.norm(k, &h.a_d) <= 1e-8);
    assert!(cx.norm(k, &h.a_dstar) <= 1e-8);
}

#[test]
fn decomposition_is_a_projection() {
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for (name, g) in conforming() {
        let cx = MixedComplex::assemble(&g, WeightMode::Measure, BcVariant::Natural).unwrap();
        for k in 1..=cx.n {
            let a = random(&mut rng, cx.dim(k));
            let first = hodge_decompose(&cx, k, &a, &opts).unwrap();
            let again = hodge_decompose(&cx, k, &first.a_d, &opts).unwrap();
            let scale = cx.norm(k, &a);
            let diff: Vec<f64> = again.a_d.iter().zip(&first.a_d).map(|(x, y)| x - y).collect();
            assert!(cx.norm(k, &diff) <= 1e-8 * scale, "{name} k={k}");
            assert!(cx.norm(k, &again.a_dstar) <= 1e-8 * scale, "{name} k={k}");
            assert!(cx.norm(k, &again.a_0) <= 1e-8 * scale, "{name} k={k}");
        }
    }
}

#[test]
fn exact_and_coexact_ranges_are_orthogonal() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for (name, g) in conforming() {
        for bc in BCS {
            let cx = MixedComplex::assemble(&g, WeightMode::Measure, bc).unwrap();
            for k in 1..cx.n {
                for _ in 0..20 {
                    let x = cx.derivative(k - 1, &random(&mut rng, cx.dim(k - 1)));
                    let y = cx.codifferential(k + 1, &random(&mut rng, cx.dim(k + 1)));
                    let ip = cx.inner(k, &x, &y).abs();
                    assert!(ip <= 1e-10 * cx.norm(k, &x) * cx.norm(k, &y), "{name} {bc:?} k={k}");
                }
            }
        }
    }
}

fn poincare_slack(cx: &MixedComplex, k: usize, c: f64, h: &[Vec<f64>], rng: &mut ChaCha8Rng) -> f64 {
    let mut a = random(rng, cx.dim(k));
    let full = cx.norm(k, &a);
    project_out(cx, k, h, &mut a);
    let a0 = full - cx.norm(k, &a);
    let mut bound = 0.0;
    if k < cx.n {
        bound += cx.norm(k + 1, &cx.derivative(k, &a));
    }
    if k > 0 {
        bound += cx.norm(k - 1, &cx.codifferential(k, &a));
    }
    // ‖a‖ ≤ C(‖𝔡a‖ + ‖𝔡*a‖) + ‖a_0‖, with 𝔡, 𝔡* blind to the harmonic part
    c * bound + a0 - full
}

#[test]
fn poincare_inequality_holds() {
    let opts = SolverOptions::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for (name, g) in conforming() {
        for bc in BCS {
            let cx = MixedComplex::assemble(&g, WeightMode::Measure, bc).unwrap();
            let b = betti_numbers(&cx).unwrap();
            for k in 0..=cx.n {
                let pc = poincare_constant(&cx, k, b[k], 1, &opts).unwrap();
                let h = harmonic_basis(&cx, k, b[k], 1, &opts).unwrap();
                for _ in 0..50 {
                    let s = poincare_slack(&cx, k, pc.constant, &h, &mut rng);
                    assert!(s >= -1e-10, "{name} {bc:?} k={k}: {s}");
                }
            }
        }
    }
}

#[test]
fn interval_constant_matches_closed_form() {
    // essential 0-forms: L = (1/h) tridiag(-1, 2, -1) against M = h·I (hodge)
    // or h·tridiag against I (measure)
    let opts = SolverOptions::default();
    for cells in [8usize, 50] {
        let g = from_file(&fixtures::single_interval(cells)).unwrap();
        let h = 1.0 / cells as f64;
        let base = 2.0 - 2.0 * (std::f64::consts::PI / cells as f64).cos();
        for (mode, lambda) in [(WeightMode::Measure, h * base), (WeightMode::Hodge, base / (h * h))] {
            let cx = MixedComplex::assemble(&g, mode, BcVariant::Essential).unwrap();
            let pc = poincare_constant(&cx, 0, 0, 1, &opts).unwrap();
            assert!((pc.lambda - lambda).abs() <= 1e-10 * lambda, "{cells} {mode:?}: {} vs {lambda}", pc.lambda);
            assert!((pc.constant - 1.0 / lambda.sqrt()).abs() <= 1e-9 * pc.constant);
        }
    }
}

#[test]
fn dense_and_iterative_eigenvalues_agree() {
    let opts = SolverOptions::default();
    for (name, g) in conforming() {
        for bc in BCS {
            let cx = MixedComplex::assemble(&g, WeightMode::Hodge, bc).unwrap();
            let b = betti_numbers(&cx).unwrap();
            for k in 0..=cx.n {
                if cx.dim(k) <= b[k] + 1 {
                    continue;
                }
                let d = poincare_lambda_with(&cx, k, b[k], EigenMethod::Dense, 4, &opts).unwrap();
                let i = poincare_lambda_with(&cx, k, b[k], EigenMethod::InverseIteration, 4, &opts).unwrap();
                assert!((d - i).abs() <= 1e-6 * d, "{name} {bc:?} k={k}: {d} vs {i}");
            }
        }
    }
}

fn constants(file: &GeometryFile, bc: BcVariant) -> Vec<f64> {
    let g = from_file(file).unwrap();
    let cx = MixedComplex::assemble(&g, WeightMode::Hodge, bc).unwrap();
    let b = betti_numbers(&cx).unwrap();
    (0..=cx.n).map(|k| poincare_constant(&cx, k, b[k], 1, &SolverOptions::default()).unwrap().constant).collect()
}

#[test]
fn poincare_constant_is_refinement_stable() {
    for bc in BCS {
        for (coarse, fine) in [
            (fixtures::single_square(8), fixtures::single_square(16)),
            (fixtures::fracture_square(8), fixtures::fracture_square(16)),
        ] {
            let (c0, c1) = (constants(&coarse, bc), constants(&fine, bc));
            for k in 0..c0.len() {
                assert!((c1[k] - c0[k]).abs() < 0.1 * c1[k], "{bc:?} k={k}: {c0:?} vs {c1:?}");
            }
        }
    }
}
