use std::f64::consts::PI;

use ovalflow::flow::*;
use ovalflow::rescale::{from_cylindrical, parabolic_model};

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |a, b| a.max(b.abs()))
}

#[test]
fn cylinder_shrinks_at_the_exact_rate() {
    let (n, t0) = (4, -10.0);
    let s = ProfileState::cylinder(n, t0, 5.0, 64).unwrap();
    let e = s.evolve_to(t0 + 1.0, 0.5).unwrap();
    let exact = cylinder_radius(n, t0 + 1.0);
    assert!(e.f.iter().all(|f| ((f - exact) / exact).abs() < 1e-8));
    let d = derived_fields(&s);
    assert_eq!(sup(&d.hzz), 0.0);
    assert_eq!(sup(&d.q), 0.0);
}

#[test]
fn perturbed_cylinder_follows_the_linearised_equation() {
    // u_t = u_zz + (n-2)u/F0² on [-5, 5] with a Neumann mode
    let (n, t) = (4, -10.0);
    let points = 201;
    let z: Vec<f64> = (0..points).map(|i| -5.0 + 10.0 * i as f64 / (points - 1) as f64).collect();
    let f0 = cylinder_radius(n, t);
    let (w, delta) = (2.0 * PI / 5.0, 1e-6);
    let f: Vec<f64> = z.iter().map(|z| f0 + delta * (w * z).cos()).collect();
    let s = ProfileState::new(n, t, z.clone(), f, Closure::Neumann).unwrap();
    let h = s.spacing();
    let discrete_w2 = 4.0 / (h * h) * (0.5 * w * h).sin().powi(2);
    let rate = -discrete_w2 + (n as f64 - 2.0) / (f0 * f0);
    let ft = s.time_derivative();
    for i in (1..points - 1).step_by(7) {
        let u = delta * (w * z[i]).cos();
        let got = ft[i] + (n as f64 - 2.0) / f0;
        assert!((got - rate * u).abs() < 1e-3 * delta, "z = {}: {} vs {}", z[i], got, rate * u);
    }
}

#[test]
fn sphere_profile_and_h_second_derivative() {
    // r = 1 at t = -1/6 when n = 4
    let s = ProfileState::sphere(4, -1.0 / 6.0, 401).unwrap();
    let mid = s.len() / 2;
    assert!((s.f[mid] - 1.0).abs() < 1e-14);
    let d = derived_fields(&s);
    assert!((d.hzz[mid - 1] + 1.0).abs() < 1e-4);
    // H_zz = -cos(2z/r)
    for i in (1..s.len() - 1).step_by(40) {
        assert!((d.hzz[i - 1] + (2.0 * s.z_grid[i]).cos()).abs() < 1e-3);
    }
}

#[test]
fn sphere_reaches_the_origin_at_time_zero() {
    let s = ProfileState::sphere(4, -1.0, 161).unwrap();
    let e = s.evolve_to(-0.75, 0.5).unwrap();
    let r = sphere_radius(4, -0.75);
    assert!(((e.z_tip_plus - 0.5 * PI * r) / r).abs() < 5e-3);
    let mid = e.len() / 2;
    assert!(((e.f[mid] - r) / r).abs() < 5e-3);
}

#[test]
fn sphere_identities_converge() {
    let res: Vec<IdentityReport> = [101, 201, 401]
        .iter()
        .map(|&pts| {
            let s = ProfileState::sphere(4, -1.0, pts).unwrap();
            let h = s.history(0.25 * s.stable_dt(), 2).unwrap();
            verify_evolution_identities(&h, 0.8).unwrap()
        })
        .collect();
    for w in res.windows(2) {
        for (a, b) in [(w[0].h_residual, w[1].h_residual), (w[0].hzz_residual, w[1].hzz_residual), (w[0].k_residual, w[1].k_residual)] {
            assert!(a / b > 3.0, "{a} -> {b}");
        }
    }
}

#[test]
fn oval_initial_data() {
    for n in [4usize, 5] {
        let nn = n as f64;
        let t0 = -(12f64).exp();
        let lt = 12.0;
        let (s, lay) = make_oval_initial_data(n, t0, &OvalParams::default()).unwrap();
        let mid = s.len() / 2;
        assert_eq!(s.z_grid[mid], 0.0);
        assert!(s.fz()[mid].abs() < 1e-12);
        // F(0)²/2 = (n-2)[(-t) - 2t/(4 log(-t))]
        let centre = (nn - 2.0) * (-t0) * (1.0 + 1.0 / (2.0 * lt));
        assert!((0.5 * s.f[mid] * s.f[mid] / centre - 1.0).abs() < 1e-3);
        // Bryant tip scaled by sqrt((-t)/log(-t)) has R = log(-t)/(-t)
        assert!((s.tip_scalar_curvature() / (lt / -t0) - 1.0).abs() < 2e-3);
        assert!(lay.tip > 2.0 * (-t0 * lt).sqrt());
        assert!((s.z_tip_plus + s.z_tip_minus).abs() < 1e-9 * s.z_tip_plus);
    }
}

#[test]
fn oval_rejects_bad_parameters() {
    let p = OvalParams::default();
    assert!(make_oval_initial_data(4, -10.0, &p).is_err());
    assert!(make_oval_initial_data(3, -(12f64).exp(), &p).is_err());
    let bad = OvalParams { glue_radius_fraction: 1.5, ..p };
    assert!(make_oval_initial_data(4, -(12f64).exp(), &bad).is_err());
}

#[test]
fn oval_s_quantity_and_neck() {
    for n in [4usize, 5] {
        let t0 = -(12f64).exp();
        let (s, _) = make_oval_initial_data(n, t0, &OvalParams::default()).unwrap();
        let e = s.evolve_to(0.99 * t0, 1.0).unwrap();
        let r = s_monotone_quantity(&e, alpha_n(n), 0.5).unwrap();
        assert_eq!(r.monotonicity_violations, 0);
        assert_eq!(r.sign_mismatches, 0);
        assert!(r.identity_error < 1e-2, "{}", r.identity_error);
        let nk = neck_asymptotics_check(&e, 0.5, 0.5).unwrap();
        assert!(nk.points > 0 && nk.profile_ratio.is_finite() && nk.gradient_ratio.is_finite());
    }
}

#[test]
fn parabolic_model_satisfies_the_neck_profile() {
    let state = from_cylindrical(&parabolic_model(4, -12.0, 6.0, 241).unwrap()).unwrap();
    let nk = neck_asymptotics_check(&state, 0.5, 0.5).unwrap();
    assert!(nk.profile_ratio < 1e-10, "{}", nk.profile_ratio);
}

#[test]
fn pic_of_round_solutions() {
    let c = ProfileState::cylinder(5, -2.0, 3.0, 40).unwrap();
    let (field, rep) = curvature_and_pic(&c);
    assert!(field.k_rad.iter().all(|k| k.abs() < 1e-14));
    assert!(rep.pic_min > 0.0 && rep.uniform_pic > 0.0);
    let s = ProfileState::sphere(5, -2.0, 201).unwrap();
    let (_, rep) = curvature_and_pic(&s);
    assert!(rep.pic_min > 0.0 && rep.pic2_min > 0.0);
}

#[test]
fn short_history_is_an_error() {
    let s = ProfileState::sphere(4, -1.0, 101).unwrap();
    assert!(verify_evolution_identities(&[s.clone(), s], 0.8).is_err());
}
