use ovalflow::flow::*;
use ovalflow::rescale::*;

fn history(s0: &ProfileState, taus: &[f64]) -> Vec<CylState> {
    let mut s = s0.clone();
    taus.iter()
        .map(|&tau| {
            s = s.evolve_to(-(-tau).exp(), 1.0).unwrap();
            native_cylindrical(&s).unwrap()
        })
        .collect()
}

fn order(a: f64, b: f64) -> f64 {
    (a / b).log2()
}

#[test]
fn constants() {
    assert_eq!(neck_radius(4), 2.0);
    assert!((neutral_constant(4) - 0.25).abs() < 1e-15);
    assert!((neutral_constant_literal(4) - 0.125).abs() < 1e-15);
    assert!((neutral_constant(3) - neutral_constant_literal(3)).abs() < 1e-15);
}

#[test]
fn parabolic_model_approaches_the_neutral_profile() {
    // (-τ)G = -s(ξ²-2)/8 - s(ξ²-2)²/(128(-τ)) + O(τ⁻²)
    for n in [4usize, 6] {
        let s = neck_radius(n);
        let mut prev = f64::INFINITY;
        for tau in [-12.0, -50.0, -200.0] {
            let cyl = parabolic_model(n, tau, 2.0, 201).unwrap();
            let r = neutral_limit_check(&[cyl], 2.0, 0.0).unwrap();
            let snap = &r.snapshots[0];
            assert!(snap.deviation < prev);
            prev = snap.deviation;
            let leading = s / (32.0 * -tau);
            assert!((snap.deviation / leading - 1.0).abs() < 2.0 / -tau, "τ = {tau}: {} vs {leading}", snap.deviation);
            // the quadratic correction vanishes at the roots
            assert!(snap.at_roots.0.abs() < 1e-9 && snap.at_roots.1.abs() < 1e-9);
        }
    }
}

#[test]
fn cylinder_state_validation() {
    assert!(CylState::new(4, -1.0, vec![0.0, 1.0], vec![0.0]).is_err());
    assert!(parabolic_model(4, 1.0, 2.0, 11).is_err());
    let c = parabolic_model(4, -12.0, 2.0, 41).unwrap();
    assert!((c.t() + (12f64).exp()).abs() < 1e-6 * (12f64).exp());
    let csv = c.to_csv().unwrap();
    assert_eq!(csv.lines().count(), 42);
}

#[test]
fn g_equation_on_the_sphere_is_second_order() {
    let taus = [-0.9, -0.898, -0.896];
    let res: Vec<GResidualReport> = [101, 201, 401]
        .iter()
        .map(|&pts| {
            let s = ProfileState::sphere(4, -(1f64).exp(), pts).unwrap();
            g_equation_residual(&history(&s, &taus), 1.5).unwrap()
        })
        .collect();
    for r in &res {
        assert!(r.max_form_gap < 1e-10 * (1.0 + r.max_first_form));
    }
    for w in res.windows(2) {
        let p = order(w[0].max_first_form, w[1].max_first_form);
        assert!((p - 2.0).abs() < 0.35, "order {p}");
    }
}

#[test]
fn g_equation_on_the_oval_converges() {
    let taus = [-12.2, -12.19, -12.18];
    let res: Vec<GResidualReport> = [201, 401, 801]
        .iter()
        .map(|&pts| {
            let (s, _) = make_oval_initial_data(4, -(12.5f64).exp(), &OvalParams { points: pts, ..Default::default() }).unwrap();
            g_equation_residual(&history(&s, &taus), 3.0).unwrap()
        })
        .collect();
    for w in res.windows(2) {
        let p = order(w[0].max_second_form, w[1].max_second_form);
        assert!((p - 2.0).abs() < 0.35, "order {p}");
    }
    assert!(res[2].max_first_form < 1e-6);
}

#[test]
fn g_history_must_advance() {
    let c = parabolic_model(4, -12.0, 3.0, 61).unwrap();
    assert!(g_equation_residual(&[c.clone(), c.clone()], 2.0).is_err());
    assert!(g_equation_residual(&[c.clone(), c.clone(), c], 2.0).is_err());
}
