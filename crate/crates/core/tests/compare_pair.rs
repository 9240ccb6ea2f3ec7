use std::sync::OnceLock;

use ovalflow::bryant::solve_bryant;
use ovalflow::compare::*;
use ovalflow::flow::{calibrate_extinction, make_oval_initial_data, OvalParams, ProfileState};
use ovalflow::spectral::SpectralSpace;
use ovalflow::tip::{compute_tip_profile, weight_mu, Side};

const N: usize = 4;
const THETA: f64 = 1.5;
const EPS: f64 = 0.05;

struct Fixture {
    snaps: Vec<ProfileState>,
    flow: SnapshotFlow,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let (s0, _) = make_oval_initial_data(N, -(14f64).exp(), &OvalParams::default()).unwrap();
        let s0 = calibrate_extinction(&s0, 1e-3).unwrap();
        let snaps = record_snapshots(&s0, &tau_grid(-13.5, -11.7, 37), 0.9).unwrap();
        let flow = SnapshotFlow::new(&snaps, 160).unwrap();
        Fixture { snaps, flow }
    })
}

fn t_star() -> f64 {
    -(12f64).exp()
}

fn shift_for(tr: &ReparamTriplet, flow2: &dyn FlowHistory) -> ShiftTrack {
    let ts: Vec<f64> = tau_grid(-13.2, -12.0, 25).iter().map(|t| -(-t).exp()).collect();
    solve_shift(tr, flow2, &ts).unwrap()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[test]
fn identity_pair_has_no_difference() {
    let f = &fixture().flow;
    let id = ReparamTriplet::identity(EPS, t_star()).unwrap();
    let ctx = PairContext::new(f, f, id, THETA, SpectralSpace::default()).unwrap();
    let sh = shift_for(&id, f);
    let d = diff_fields(&ctx, Some(&sh), -12.5, &[0.05, 0.1, 0.2]).unwrap();
    assert!(sup(&d.hdiff) <= 1e-12 && sup(&d.hc) <= 1e-12);
    assert!(d.a.abs() <= 1e-12);
    assert!(sup(&d.w_plus) <= 1e-12 && sup(&d.w_minus) <= 1e-12);
    let et = error_terms(&ctx, Some(&sh), -12.5).unwrap();
    assert!(et.e.iter().chain(&et.ec).all(|v| sup(v) <= 1e-12));
}

#[test]
fn exact_reparametrization_is_recovered() {
    let f = &fixture().flow;
    let id = ReparamTriplet::identity(EPS, t_star()).unwrap();
    let b = id.budgets();
    let target = [0.3 * b[0], 0.3 * b[1], 0.25 * b[2]];
    let flow2 = ReparamFlow::new(f, target[0], target[1], target[2], t_star(), 200).unwrap();
    let ctx = PairContext::new(f, &flow2, id, THETA, SpectralSpace::default()).unwrap();

    // the construction triplet itself gives no difference
    let exact = ctx.with_triplet(id.with_params(target));
    let d = diff_fields(&exact, None, -12.0, &[]).unwrap();
    assert!(sup(&d.hdiff) < 1e-8, "{}", sup(&d.hdiff));

    let k = kill_modes(&ctx, EPS, &KillOptions::default()).unwrap();
    for (got, want) in k.triplet.params().iter().zip(&target) {
        assert!((got - want).abs() <= 1e-6 * want.abs(), "{got} vs {want}");
    }
    assert!(k.hc_norm <= 1e-6 * k.unkilled_norm);
    assert!(k.a_star.abs() <= 1e-8 * k.unkilled_norm + 1e-14);
    assert!(k.delta_admissible);

    let ts: Vec<f64> = tau_grid(-13.0, -12.0, 11).iter().map(|t| -(-t).exp()).collect();
    let sh = solve_shift(&k.triplet, &flow2, &ts).unwrap();
    assert!(sh.within_budget);
    assert!((sh.s.last().unwrap() - k.triplet.alpha).abs() < 1e-12 * b[0]);
    // the shift retraces the material point of the construction
    for (t, s) in sh.t_grid.iter().zip(&sh.s) {
        assert!((s + flow2.sigma(*t)).abs() < 1e-6 * b[0]);
    }
}

#[test]
fn inverse_triplet_returns_base_profile() {
    let f = &fixture().flow;
    let (a0, b0, g0) = (40.0, 2.0e3, 0.2);
    let flow2 = ReparamFlow::new(f, a0, b0, g0, t_star(), 200).unwrap();
    let tr = ReparamTriplet::new(a0, b0, g0, EPS, t_star()).unwrap();
    for z in [-300.0, -50.0, 0.0, 120.0, 400.0] {
        let back = reparam_profile(&flow2, &tr, a0, z, t_star()).unwrap();
        let base = f.sample(z, t_star()).unwrap();
        assert!((back.f - base.f).abs() < 1e-9 * base.f);
        assert!((back.fz - base.fz).abs() < 1e-9);
    }
}

#[test]
fn neutral_coefficient_is_linear_in_beta() {
    let f = &fixture().flow;
    let id = ReparamTriplet::identity(EPS, t_star()).unwrap();
    let ctx = PairContext::new(f, f, id, THETA, SpectralSpace::default()).unwrap();
    let b = id.budgets()[1];
    let a_of = |beta: f64| diff_fields(&ctx.with_triplet(id.with_params([0.0, beta, 0.0])), None, -12.0, &[]).unwrap().a;
    let (a1, a2, am) = (a_of(0.05 * b), a_of(0.1 * b), a_of(-0.05 * b));
    assert!(a1.abs() > 1e-9, "{a1}");
    assert!((a2 / a1 - 2.0).abs() < 0.02, "{}", a2 / a1);
    assert!((am / a1 + 1.0).abs() < 0.02, "{}", am / a1);
}

#[test]
fn v2_identity_matches_direct_construction() {
    let f = &fixture().flow;
    let b = ReparamTriplet::identity(EPS, t_star()).unwrap().budgets();
    for side in [Side::Plus, Side::Minus] {
        // the direct construction needs F₂ at fixed z over the whole time
        // stencil, which excludes the last stretch of the branch
        for rho in [0.6, 0.9, 1.2] {
            let v = v2_beta_gamma(f, side, 0.2 * b[1], 0.2 * b[2], rho, -12.5).unwrap();
            let w = v2_beta_gamma_direct(f, side, 0.2 * b[1], 0.2 * b[2], rho, -12.5).unwrap();
            assert!((v - w).abs() < 1e-4 * v.abs(), "{side:?} {rho}: {v} vs {w}");
        }
    }
}

#[test]
fn tip_energy_of_identical_pair_vanishes() {
    let fx = fixture();
    let f = &fx.flow;
    let bryant = solve_bryant(N, 200.0, 1e-10).unwrap();
    let id = ReparamTriplet::identity(EPS, t_star()).unwrap();
    let mut fields = vec![];
    let mut weights = vec![];
    let mut theta_tip = 0.0;
    let sh = shift_for(&id, f);
    for s in fx.snaps.iter().step_by(2).filter(|s| s.t >= -(13.2f64).exp() * 1.001 && s.t <= t_star() * 0.999) {
        let tip = compute_tip_profile(s, Side::Plus, 160, 2e-3).unwrap();
        if theta_tip == 0.0 {
            theta_tip = 0.2 * tip.rho_max;
        }
        let w = weight_mu(&tip, theta_tip, &bryant).unwrap();
        let ctx = PairContext::new(f, f, id, THETA, SpectralSpace::default()).unwrap().with_tip_theta(theta_tip);
        fields.push(diff_fields(&ctx, Some(&sh), -(-s.t).ln(), &w.rho_grid).unwrap());
        weights.push(w);
    }
    let r = tip_energy(&fields, &weights, -12.0).unwrap();
    assert!(r.i.iter().chain(&r.j).all(|&v| v.abs() <= 1e-20));
    assert_eq!(r.fitted_c, 0.0);
}

#[test]
fn tip_difference_vanishes_at_the_tip() {
    let f = &fixture().flow;
    let b = ReparamTriplet::identity(EPS, t_star()).unwrap().budgets();
    let tr = ReparamTriplet::new(0.0, 0.2 * b[1], 0.0, EPS, t_star()).unwrap();
    let ctx = PairContext::new(f, f, tr, THETA, SpectralSpace::default()).unwrap();
    let rho = [0.02, 0.04, 0.08];
    let d = diff_fields(&ctx, Some(&shift_for(&tr, f)), -12.5, &rho).unwrap();
    // W = O(ρ²): the ratio W/ρ² stays bounded as ρ halves
    let q: Vec<f64> = d.w_plus.iter().zip(&rho).map(|(w, r)| w / (r * r)).collect();
    assert!(q[0].abs() < 2.0 * q[2].abs() + 1e-9, "{q:?}");
}
