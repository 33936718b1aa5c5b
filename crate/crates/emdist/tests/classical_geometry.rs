use emdist::classical::*;
use emdist::tensor::*;
use proptest::prelude::*;

fn line(chi: [f64; 3], axis: [f64; 3], angle: f64, xi: Vec4) -> TimelikeLine {
    let l = LorentzTransform::boost(chi).compose(&LorentzTransform::rotation(axis, angle));
    TimelikeLine::new(l, xi)
}

fn arb_line() -> impl Strategy<Value = TimelikeLine> {
    (
        prop::array::uniform3(-1.5f64..1.5),
        prop::array::uniform3(-1.0f64..1.0),
        -3.0f64..3.0,
        prop::array::uniform4(-5.0f64..5.0),
    )
        .prop_map(|(c, a, ang, x)| line(c, a, ang, x))
}

fn non_parallel(l1: &TimelikeLine, l2: &TimelikeLine) -> bool {
    let c = dot(&l1.tangent(), &l2.tangent());
    c * c - 1.0 > 1e-3
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn distance_matches_oracle(l1 in arb_line(), l2 in arb_line()) {
        prop_assume!(non_parallel(&l1, &l2));
        let d = lorentz_distance(&l1, &l2).unwrap();
        let (_, _, o) = closest_approach_oracle(&l1, &l2).unwrap();
        // compare squares: near-intersecting pairs lose digits in the square root
        let scale: f64 = (0..4).map(|k| (l1.translation[k] - l2.translation[k]).powi(2)).sum::<f64>().max(1.0);
        prop_assert!((d * d - o * o).abs() <= 1e-12 * scale * 10.0, "{} vs {}", d, o);
    }

    #[test]
    fn observable_distance_matches_geometry(l1 in arb_line(), l2 in arb_line(), m1 in 0.5f64..3.0, m2 in 0.5f64..3.0, s1 in 0.0f64..2.0, s2 in 0.0f64..2.0) {
        prop_assume!(non_parallel(&l1, &l2));
        let a = system_from_line(&l1, m1, s1).unwrap();
        let b = system_from_line(&l2, m2, s2).unwrap();
        let (dv, d) = relative_position(&a, &b).unwrap();
        let big_d = lorentz_distance(&l1, &l2).unwrap();
        prop_assert!((d - big_d).abs() <= 1e-9 * big_d.max(1.0), "{} vs {}", d, big_d);
        let scale = dv.iter().fold(1.0f64, |m, x| m.max(x.abs())) * a.p[0].max(b.p[0]);
        prop_assert!(dot(&dv, &a.p).abs() <= 1e-10 * scale);
        prop_assert!(dot(&dv, &b.p).abs() <= 1e-10 * scale);
    }

    #[test]
    fn decomposition_residual_small(l in arb_line(), m in 0.5f64..3.0, s in 0.0f64..2.0) {
        let sys = system_from_line(&l, m, s).unwrap();
        let (sv, mv, r) = sys.spin_and_moment();
        let scale = sys.j.iter().flatten().fold(1.0f64, |a, x| a.max(x.abs())) * m * m;
        prop_assert!(r < 1e-10 * scale);
        prop_assert!(dot(&sv, &sys.p).abs() < 1e-10 * scale);
        prop_assert!(dot(&mv, &sys.p).abs() < 1e-10 * scale);
    }

    #[test]
    fn gauge_and_poincare_invariance(l1 in arb_line(), l2 in arb_line(), u1 in -3.0f64..3.0, u2 in -3.0f64..3.0, g in arb_line()) {
        prop_assume!(non_parallel(&l1, &l2));
        let d = lorentz_distance(&l1, &l2).unwrap();
        let s1 = TimelikeLine::new(l1.boost, l1.point(u1));
        let s2 = TimelikeLine::new(l2.boost, l2.point(u2));
        prop_assert!((lorentz_distance(&s1, &s2).unwrap() - d).abs() < 1e-10 * d.max(1.0));
        let pg = PoincareTransform::new(g.boost, g.translation);
        let moved = |l: &TimelikeLine| TimelikeLine::new(pg.lorentz.compose(&l.boost), pg.apply(&l.translation));
        let dm = lorentz_distance(&moved(&l1), &moved(&l2)).unwrap();
        prop_assert!((dm - d).abs() < 1e-10 * d.max(1.0), "{} vs {}", dm, d);
    }

    #[test]
    fn rescaling_and_translation_leave_d_vector(l1 in arb_line(), l2 in arb_line(), al in 0.2f64..5.0, be in 0.2f64..5.0, xi in prop::array::uniform4(-3.0f64..3.0)) {
        prop_assume!(non_parallel(&l1, &l2));
        let a = system_from_line(&l1, 1.3, 0.4).unwrap();
        let b = system_from_line(&l2, 0.8, 1.1).unwrap();
        let (d0, _) = relative_position(&a, &b).unwrap();
        let sc = |s: &ClassicalSystem, f: f64| ClassicalSystem::new(s.p.map(|x| x * f), s.j.map(|r| r.map(|x| x * f))).unwrap();
        let (d1, _) = relative_position(&sc(&a, al), &sc(&b, be)).unwrap();
        let shift = |s: &ClassicalSystem| {
            let mut j = s.j;
            for x in 0..4 { for y in 0..4 { j[x][y] += xi[x] * s.p[y] - xi[y] * s.p[x]; } }
            ClassicalSystem::new(s.p, j).unwrap()
        };
        let (d2, _) = relative_position(&shift(&a), &shift(&b)).unwrap();
        let scale = d0.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for k in 0..4 {
            prop_assert!((d1[k] - d0[k]).abs() < 1e-10 * scale);
            prop_assert!((d2[k] - d0[k]).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn pi_is_projector(l1 in arb_line(), l2 in arb_line()) {
        prop_assume!(non_parallel(&l1, &l2));
        let (t1, t2) = (l1.tangent(), l2.tangent());
        let pi = projector(&t1, &t2).unwrap();
        let tr: f64 = (0..4).map(|a| pi[a][a]).sum();
        prop_assert!((tr - 2.0).abs() < 1e-9);
        for a in 0..4 {
            let x: f64 = (0..4).map(|b| pi[a][b] * t1[b]).sum();
            prop_assert!(x.abs() < 1e-9 * t1[0]);
            for b in 0..4 {
                let pp: f64 = (0..4).map(|c| pi[a][c] * pi[c][b]).sum();
                prop_assert!((pp - pi[a][b]).abs() < 1e-8 * (1.0 + pi[a][b].abs()));
            }
        }
    }
}

#[test]
fn boosted_line_with_offset() {
    let l1 = line([0.0; 3], [0.0, 0.0, 1.0], 0.0, [0.0; 4]);
    let l2 = line([0.0, 0.0, 1.0], [0.0, 0.0, 1.0], 0.0, [0.0, 3.0, 0.0, 0.0]);
    assert!((lorentz_distance(&l1, &l2).unwrap() - 3.0).abs() < 1e-12);
    let (_, _, o) = closest_approach_oracle(&l1, &l2).unwrap();
    assert!((o - 3.0).abs() < 1e-12);
    let a = system_from_line(&l1, 1.0, 0.5).unwrap();
    let b = system_from_line(&l2, 2.0, 0.5).unwrap();
    assert!((relative_position(&a, &b).unwrap().1 - 3.0).abs() < 1e-12);
    let (pp, _, _) = pair_invariants(&a, &b).unwrap();
    assert!((pp - 2.0 * 1f64.cosh()).abs() < 1e-12);
}

#[test]
fn intersecting_lines_have_zero_distance() {
    let l1 = line([0.3, 0.0, 0.0], [0.0, 0.0, 1.0], 0.0, [1.0, 2.0, 0.0, 0.0]);
    let l2 = line([0.0, -0.8, 0.2], [0.0, 0.0, 1.0], 0.0, [1.0, 2.0, 0.0, 0.0]);
    let (n12, n21, d) = closest_approach_oracle(&l1, &l2).unwrap();
    assert!(d < 1e-10);
    for k in 0..4 {
        assert!((n12[k] - n21[k]).abs() < 1e-10);
    }
    let a = system_from_line(&l1, 1.0, 0.2).unwrap();
    let b = system_from_line(&l2, 1.5, 0.9).unwrap();
    assert!(relative_position(&a, &b).unwrap().1 < 1e-10);
}

#[test]
fn point_distance_realizations() {
    let (a, b) = realize_point_distance(&[0.0, 1.0, 0.0, 0.0], &[0.0; 4]).unwrap();
    assert!((lorentz_distance(&a, &b).unwrap() - 1.0).abs() < 1e-10);
    let (a, b) = realize_point_distance(&[1.0, 0.0, 0.0, 0.0], &[-1.0, 0.0, 0.0, 0.0]).unwrap();
    assert!((lorentz_distance(&a, &b).unwrap() - 1.0).abs() < 1e-10);
    let x1 = [0.3, 2.0, -1.0, 0.5];
    let x2 = [-0.2, 0.1, 0.4, 1.5];
    let dx = [0.5, 1.9, -1.4, -1.0];
    let (a, b) = realize_point_distance(&x1, &x2).unwrap();
    assert!((lorentz_distance(&a, &b).unwrap() - (-dot(&dx, &dx)).sqrt()).abs() < 1e-10);
    let x1 = [4.0, 1.0, -1.0, 0.5];
    let dx = [4.0, 1.0, -1.0, 0.5];
    let (a, b) = realize_point_distance(&x1, &[0.0; 4]).unwrap();
    assert!((lorentz_distance(&a, &b).unwrap() - 0.5 * dot(&dx, &dx).sqrt()).abs() < 1e-10);
}

#[test]
fn epsilon_full_contraction() {
    let e = Tensor4::epsilon();
    let mut up = e.clone();
    for s in 0..4 {
        up = up.flip_slot(s).unwrap();
    }
    let full = contract(&e, &up, &[(0, 0), (1, 1), (2, 2), (3, 3)]).unwrap();
    assert!((full.get(&[]).re + 24.0).abs() < 1e-12);
    let g = Tensor4::metric();
    let delta = contract(&g, &g, &[(1, 0)]).unwrap();
    assert!(delta.max_abs_diff(&Tensor4::identity()) < 1e-15);
}
