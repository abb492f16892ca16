use mdforms_core::cochain_spaces::{degree_layout, restriction_operator, BcVariant, MixedForm, WeightMode};
use mdforms_core::differential_ops::{jump_operator, local_derivative, stokes_check, trace_commutation_defect, MixedComplex};
use mdforms_core::fixtures;
use mdforms_core::forest_geometry::{from_file, ForestGeometry, NodeId};
use mdforms_core::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

#[test]
fn exact_structure_identities() {
    for (name, g) in conforming() {
        for bc in [BcVariant::Natural, BcVariant::Essential] {
            let cx = MixedComplex::assemble(&g, WeightMode::Unit, bc).unwrap();
            for k in 0..cx.n.saturating_sub(1) {
                assert!(cx.d[k + 1].mul(&cx.d[k]).is_zero(), "{name} {bc:?} DD k={k}");
                let anti = cx.d_local[k + 1].mul(&cx.jump[k]).add(&cx.jump[k + 1].mul(&cx.d_local[k]));
                assert!(anti.is_zero(), "{name} {bc:?} dJ+Jd k={k}");
                assert!(cx.jump[k + 1].mul(&cx.jump[k]).is_zero(), "{name} {bc:?} JJ k={k}");
            }
            for k in 0..cx.n {
                assert!(cx.d_local[k].max_abs() <= 1, "{name}");
                assert!(cx.jump[k].max_abs() <= 1, "{name}");
            }
        }
    }
}

#[test]
fn mesh_coboundaries_compose_to_zero() {
    for (name, g) in conforming() {
        for mesh in g.meshes().values() {
            for p in 0..mesh.dim().saturating_sub(1) {
                let d0 = mesh.coboundary(p).unwrap();
                let d1 = mesh.coboundary(p + 1).unwrap();
                assert!(d1.mul(&d0).is_zero(), "{name} p={p}");
            }
            assert!(mesh.coboundary(mesh.dim()).is_err());
        }
    }
}

#[test]
fn single_root_has_no_jump() {
    let g = from_file(&fixtures::single_square(3)).unwrap();
    let cx = MixedComplex::assemble(&g, WeightMode::Measure, BcVariant::Natural).unwrap();
    for k in 0..2 {
        assert!(cx.jump[k].is_zero());
        assert_eq!(cx.d[k], cx.d_local[k]);
    }
}

#[test]
fn slit_jump_collects_opposite_sides() {
    let g = from_file(&fixtures::fig1(8)).unwrap();
    let l1 = degree_layout(&g, 1).unwrap();
    let l2 = degree_layout(&g, 2).unwrap();
    let j = jump_operator(&g, &l1, &l2).unwrap();
    let row_block = l2.block(4).unwrap();
    let col_block = l1.block(7).unwrap();
    let sides: Vec<NodeId> = g.jump_sources(4).iter().map(|&(l, _)| l).collect();
    assert_eq!(sides.len(), 2);
    assert_eq!(g.orientation_sign(4, sides[0]).unwrap(), -g.orientation_sign(4, sides[1]).unwrap());
    // (-1)^(n-k) = -1 at n = 2, k = 1
    let r = restriction_operator(&g, &l1, sides[0]).unwrap().add(&restriction_operator(&g, &l1, sides[1]).unwrap());
    for row in 0..row_block.len {
        let got: Vec<(usize, i64)> = j.row(row_block.offset + row).collect();
        let want: Vec<(usize, i64)> = r.row(row).map(|(c, v)| (col_block.offset + c, -v)).collect();
        assert_eq!(got.len(), 2, "slit edge {row}");
        assert_eq!(got, want, "slit edge {row}");
    }
    // the interpolant of dx is continuous across the slit, so its jump vanishes
    let mesh = g.root_mesh(7);
    let mut a = vec![0.0; l1.total];
    for (e, s) in mesh.simplices(1).iter().enumerate() {
        a[col_block.offset + e] = mesh.vertex(s[1])[0] - mesh.vertex(s[0])[0];
    }
    let ja = j.to_f64().matvec(&a);
    for row in 0..row_block.len {
        assert!(ja[row_block.offset + row].abs() < 1e-15, "slit edge {row}: {}", ja[row_block.offset + row]);
    }
}

#[test]
fn jump_degree_mismatch() {
    let g = from_file(&fixtures::fig1(4)).unwrap();
    let l0 = degree_layout(&g, 0).unwrap();
    assert!(matches!(jump_operator(&g, &l0, &l0), Err(Error::DegreeMismatch { .. })));
    assert!(local_derivative(&g, &l0, &degree_layout(&g, 1).unwrap()).is_ok());
}

#[test]
fn bundle_codifferential() {
    let g = from_file(&fixtures::fracture_square(4)).unwrap();
    let cx = MixedComplex::assemble(&g, WeightMode::Measure, BcVariant::Natural).unwrap();
    let b = cx.bundle(1).unwrap();
    assert!(b.codifferential_apply(&vec![0.0; cx.dim(2)]).unwrap().iter().all(|&x| x == 0.0));
    assert!(matches!(b.codifferential_apply(&vec![0.0; cx.dim(1)]), Err(Error::DegreeMismatch { .. })));
    assert!(matches!(cx.bundle(2), Err(Error::DegreeOutOfRange { .. })));
}

#[test]
fn traces_commute_with_derivative() {
    for (name, g) in conforming() {
        for k in 0..g.n() {
            assert_eq!(trace_commutation_defect(&g, k).unwrap(), 0, "{name} k={k}");
        }
    }
}

#[test]
fn stokes_telescopes_on_two_segments() {
    let g = from_file(&fixtures::two_segments(5)).unwrap();
    let lay = degree_layout(&g, 0).unwrap();
    let u = |x: f64| x * x * x + 2.0 * x + 0.5;
    let mut a = MixedForm::zeros(&lay);
    for b in &lay.blocks {
        let mesh = g.root_mesh(b.root);
        for v in 0..b.len {
            a.coefficients[b.offset + v] = u(mesh.vertex(v)[0]);
        }
    }
    let (lhs, rhs) = stokes_check(&g, &a).unwrap();
    let expected = u(1.0) - u(-1.0);
    assert!((lhs - expected).abs() < 1e-13, "{lhs} vs {expected}");
    assert!((rhs - expected).abs() < 1e-13, "{rhs} vs {expected}");
}

#[test]
fn stokes_random_forms() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for (name, g) in conforming() {
        let n = g.n();
        let lay = degree_layout(&g, n as i64 - 1).unwrap();
        for _ in 0..200 {
            let a = MixedForm { k: n - 1, coefficients: random(&mut rng, lay.total) };
            let (lhs, rhs) = stokes_check(&g, &a).unwrap();
            let l1: f64 = a.coefficients.iter().map(|v| v.abs()).sum();
            assert!((lhs - rhs).abs() <= 1e-12 * l1, "{name}: {lhs} vs {rhs}");
            if is_closed(&g) {
                assert_eq!(rhs, 0.0, "{name}");
            }
        }
        // integer forms: every partial sum is exact
        let a = MixedForm { k: n - 1, coefficients: (0..lay.total).map(|_| rng.random_range(-50..=50) as f64).collect() };
        let (lhs, rhs) = stokes_check(&g, &a).unwrap();
        assert_eq!(lhs, rhs, "{name}");
        if is_closed(&g) {
            assert_eq!((lhs, rhs), (0.0, 0.0), "{name}");
        }
    }
}

#[test]
fn stokes_rejects_wrong_degree() {
    let g = from_file(&fixtures::single_square(2)).unwrap();
    let lay = degree_layout(&g, 0).unwrap();
    assert!(matches!(stokes_check(&g, &MixedForm::zeros(&lay)), Err(Error::DegreeMismatch { .. })));
}

fn adjoint_defect(cx: &MixedComplex, k: usize, a: &[f64], b: &[f64]) -> f64 {
    let lhs = cx.inner(k + 1, &cx.derivative(k, a), b);
    let rhs = cx.inner(k, a, &cx.codifferential(k + 1, b));
    (lhs - rhs).abs() / (cx.norm(k, a) * cx.norm(k + 1, b)).max(f64::MIN_POSITIVE)
}

/// ‖𝔡*𝔡*b‖ relative to the same chain of products taken in absolute value.
fn codiff_twice_defect(cx: &MixedComplex, k: usize, b: &[f64]) -> f64 {
    let x = cx.codifferential(k + 1, &cx.codifferential(k + 2, b));
    let abs_apply = |j: usize, v: &[f64]| {
        let d = cx.d_f64(j - 1).map(|e: f64| e.abs());
        let mv: Vec<f64> = v.iter().zip(&cx.mass[j]).map(|(a, m)| a.abs() * m).collect();
        let mut out = d.tmatvec(&mv);
        out.iter_mut().zip(&cx.mass[j - 1]).for_each(|(o, m)| *o /= m);
        out
    };
    let scale = abs_apply(k + 1, &abs_apply(k + 2, b));
    x.iter().zip(&scale).map(|(v, s)| if *s > 0.0 { v.abs() / s } else { v.abs() }).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn adjointness_all_modes(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, g) in conforming() {
            for mode in [WeightMode::Measure, WeightMode::Unit, WeightMode::Hodge] {
                for bc in [BcVariant::Natural, BcVariant::Essential] {
                    let cx = MixedComplex::assemble(&g, mode, bc).unwrap();
                    for k in 0..cx.n {
                        for _ in 0..16 {
                            let a = random(&mut rng, cx.dim(k));
                            let b = random(&mut rng, cx.dim(k + 1));
                            let e = adjoint_defect(&cx, k, &a, &b);
                            prop_assert!(e <= 1e-10, "{} {:?} {:?} k={}: {}", name, mode, bc, k, e);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn codifferential_squares_to_zero(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, g) in conforming() {
            for bc in [BcVariant::Natural, BcVariant::Essential] {
                let cx = MixedComplex::assemble(&g, WeightMode::Measure, bc).unwrap();
                for k in 0..cx.n.saturating_sub(1) {
                    for _ in 0..64 {
                        let b = random(&mut rng, cx.dim(k + 2));
                        let e = codiff_twice_defect(&cx, k, &b);
                        prop_assert!(e <= 1e-10, "{} {:?} k={}: {}", name, bc, k, e);
                    }
                }
            }
        }
    }
}
