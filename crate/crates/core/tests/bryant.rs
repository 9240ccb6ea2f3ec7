use ovalflow::bryant::*;

fn profile(n: usize) -> BryantProfile {
    solve_bryant(n, 400.0, 1e-10).unwrap()
}

#[test]
fn small_radius_expansion() {
    let p = profile(4);
    // Φ = 1 - r²/12 + O(r⁴)
    assert!((p.phi_at(0.1) - (1.0 - 0.01 / 12.0)).abs() < 1e-6);
    assert!((p.phi_at(0.1) - 0.999167).abs() < 1e-6);
    let c = p.curvature_at(0.0);
    assert!((c.scalar - 1.0).abs() < 1e-12);
}

#[test]
fn quadratic_decay_at_infinity() {
    let p = profile(4);
    assert!((50.0f64.powi(2) * p.phi_at(50.0) / 4.0 - 1.0).abs() < 0.01);
    // the next coefficient is (5-n)(n-2)³ = 8 at n = 4
    let c2 = |r: f64| r.powi(4) * (p.phi_at(r) - 4.0 / (r * r));
    assert!((c2(200.0) / 8.0 - 1.0).abs() < 0.01);
    // and vanishes at n = 5
    let q = profile(5);
    let c2 = |r: f64| r.powi(4) * (q.phi_at(r) - 9.0 / (r * r));
    for r in [50.0, 100.0, 200.0] {
        assert!(c2(r).abs() < 1e-2, "{}", c2(r));
    }
}

#[test]
fn decay_combination_vanishes_faster_than_r_minus_four() {
    for n in [4, 5, 6] {
        let p = profile(n);
        let s = asymptotic_summary(&p, 50.0);
        assert!(s.decay_last.abs() < 0.1 * s.decay_large.abs(), "n = {n}: {s:?}");
    }
}

#[test]
fn residual_is_second_order() {
    let res: Vec<f64> = [50, 100, 200].iter().map(|&k| solve_bryant_with(4, 100.0, 1e-12, k).unwrap().ode_residual()).collect();
    for w in res.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..=4.5).contains(&ratio), "{ratio}");
    }
}

#[test]
fn arclength_profile() {
    let p = profile(4);
    let arc = to_arclength(&p, 2000.0).unwrap();
    assert_eq!(arc.b[0], 0.0);
    assert!((arc.db[0] - 1.0).abs() < 1e-12);
    assert!(arc.b.windows(2).all(|w| w[1] > w[0]));
    for (b, db) in arc.b.iter().zip(&arc.db).step_by(97) {
        assert!((db * db - p.phi_at(*b)).abs() < 1e-8);
    }
    // B ~ sqrt(2(n-2)z), B B' -> n-2
    let ratio = |z: f64| arc.eval(z).0 / (4.0 * z).sqrt();
    assert!((ratio(2000.0) - 1.0).abs() < (ratio(50.0) - 1.0).abs());
    assert!((ratio(2000.0) - 1.0).abs() < 1e-3);
    let (b, db) = arc.eval(500.0);
    assert!((b * db / 2.0 - 1.0).abs() < 0.01);
}

#[test]
fn arc_beyond_profile_is_an_error() {
    let p = solve_bryant(4, 20.0, 1e-10).unwrap();
    assert!(to_arclength(&p, 500.0).is_err());
}

#[test]
fn radial_curvature_decays_like_r_minus_four() {
    let p = profile(4);
    for r in [200.0, 399.0] {
        let c = p.curvature_at(r);
        assert!((r.powi(4) * c.k_rad / 4.0 - 1.0).abs() < 1e-3);
        let n = 4.0;
        assert!((c.scalar - ((n - 1.0) * (n - 2.0) * c.k_orb + 2.0 * (n - 1.0) * c.k_rad)).abs() < 1e-15);
    }
}

#[test]
fn concavity_thresholds_exist() {
    let p = profile(4);
    let arc = to_arclength(&p, 300.0).unwrap();
    let l0 = concavity_threshold(&arc, 0.0).unwrap();
    assert!(l0 > 0.0 && l0.is_finite());
    let p5 = profile(5);
    let arc5 = to_arclength(&p5, 300.0).unwrap();
    let l5 = concavity_threshold(&arc5, 1.0).unwrap();
    assert!(l5 > 0.0 && l5.is_finite());
    // near the tip Φ = 1 - B²/12 gives (B²/2)'' = 1 - B²/6
    let v = arc.concavity_values(0.0);
    let (b, q) = v[1];
    assert!((q - (1.0 - b * b / 6.0)).abs() < 5e-4, "{:?}", v[1]);
}

#[test]
fn stability_report() {
    for n in [4usize, 5, 6] {
        let nn = n as f64;
        let p = profile(n);
        let r = profile_stability_check(&p, 0.0, 0.1);
        assert_eq!(r.max_ratio, 0.0);
        assert!(r.holds);
        assert!((r.chi_small_r - 1.0 / (nn * (nn - 1.0))).abs() < 1e-6);
        // Φ ~ (n-2)² r⁻² puts the large-r limit of χ at 1/(n-2)²
        assert!((r.chi_large_r * (nn - 2.0).powi(2) - 1.0).abs() < 1e-3, "n = {n}: {}", r.chi_large_r);
    }
    let small = profile_stability_check(&profile(4), 0.01, 0.1);
    assert!(small.holds && small.max_ratio > 0.0);
}
