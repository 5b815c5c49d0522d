use perp_core::perpetuity::{associated_chain, f_inv, f_map, jump_field, simulate_path, step_affine, step_associated, step_delayed_walk, Trajectory};
use perp_core::{DoubleDouble, JointLaw, RandomStream, ScalarLaw};
use proptest::prelude::*;

type Dd = DoubleDouble;

fn dd(x: f64) -> Dd {
    Dd::from_f64(x)
}

fn pairs(max_len: usize) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-3.0f64..3.0, -5.0f64..20.0), 1..max_len)
}

/// Distance in units of the last place of `b`.
fn ulps(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let ulp = f64::from_bits(b.abs().to_bits() + 1) - b.abs();
    (a - b).abs() / ulp
}

proptest! {
    #[test]
    fn transfer_identity(p in pairs(60)) {
        // D~_n of (ξ, η) against D_n of (ξ, η e^{-ξ})
        let mut direct: Trajectory<Dd> = Trajectory::default();
        let mut moved: Trajectory<Dd> = Trajectory::default();
        for &(x, e) in &p {
            direct.push(dd(x), dd(e));
            moved.push(dd(x), dd(e) * (-dd(x)).exp());
        }
        for k in 0..p.len() {
            let (a, b) = (direct.d_tilde[k], moved.d[k]);
            let scale = direct.d_tilde.iter().take(k + 1).map(|v| v.abs().to_f64()).fold(1.0, f64::max);
            prop_assert!((a - b).abs().to_f64() <= 1e-27 * scale, "k={k} {a} {b}");
        }
    }

    #[test]
    fn conjugation_is_exact_in_double_double(d in -1e6f64..1e6, xi in -5.0f64..5.0, eta in -50.0f64..50.0) {
        let y = f_map(dd(d));
        let lhs = f_inv(step_associated(y, (dd(xi), dd(eta)))).to_f64();
        let rhs = (dd(eta) * dd(xi).exp() + dd(xi).exp() * dd(d)).to_f64();
        prop_assert!(ulps(lhs, rhs) <= 1.0, "{lhs} {rhs}");
    }

    #[test]
    fn jump_field_conjugates(y in -30.0f64..30.0, xi in -5.0f64..5.0, eta in -50.0f64..50.0) {
        let j = jump_field(dd(y), dd(xi), dd(eta));
        let lhs = f_inv(dd(y) + j).to_f64();
        let rhs = (dd(eta) * dd(xi).exp() + dd(xi).exp() * f_inv(dd(y))).to_f64();
        prop_assert!(ulps(lhs, rhs) <= 2.0, "{lhs} {rhs}");
    }

    #[test]
    fn delayed_walk_reversal(steps in prop::collection::vec(-4096i32..4096, 1..200)) {
        // dyadic increments keep every partial sum exact
        let xi: Vec<f64> = steps.iter().map(|&s| s as f64 / 1024.0).collect();
        let mut w = 0.0;
        for &x in xi.iter().rev() {
            w = step_delayed_walk(w, x);
        }
        let mut s = 0.0f64;
        let mut best = 0.0f64;
        for &x in &xi {
            s += x;
            best = best.max(s);
        }
        prop_assert_eq!(w, best);
    }

    #[test]
    fn affine_chain_is_reversed_tilde_series(p in pairs(40)) {
        let mut r = dd(0.0);
        for &(x, e) in &p {
            r = step_affine(r, (dd(x), dd(e)));
        }
        let rev: Vec<(f64, f64)> = p.iter().rev().copied().collect();
        let t: Trajectory<Dd> = Trajectory::from_pairs(&rev);
        let want = *t.d_tilde.last().unwrap();
        let scale = t.d_tilde.iter().map(|v| v.abs().to_f64()).fold(1.0, f64::max) * p.iter().map(|&(x, _)| x.exp()).fold(1.0, f64::max);
        prop_assert!((r - want).abs().to_f64() <= 1e-27 * scale);
    }

    #[test]
    fn maxima_are_monotone(seed in 0u64..1000) {
        let j = JointLaw::independent(ScalarLaw::normal(-0.2, 1.0), ScalarLaw::normal(0.0, 1.0));
        let t: Trajectory<f64> = simulate_path(&j, 100, &mut RandomStream::new(seed, 0)).unwrap();
        for k in 1..100 {
            prop_assert!(t.m[k] >= t.m[k - 1] && t.m_tilde[k] >= t.m_tilde[k - 1]);
            prop_assert!(t.m[k] >= t.d[k] && t.m_tilde[k] >= t.d_tilde[k]);
        }
    }

    #[test]
    fn trajectory_invariants(seed in 0u64..1000) {
        let j = JointLaw::independent(ScalarLaw::normal(0.1, 1.0), ScalarLaw::exponential(1.0));
        let t: Trajectory<f64> = simulate_path(&j, 50, &mut RandomStream::new(seed, 1)).unwrap();
        let (mut s, mut d, mut dt) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..50 {
            let prev = s;
            s += t.xi[k];
            d += t.eta[k] * s.exp();
            dt += t.eta[k] * prev.exp();
            prop_assert_eq!(t.s[k], s);
            prop_assert_eq!(t.d[k], d);
            prop_assert_eq!(t.d_tilde[k], dt);
        }
    }

    #[test]
    fn associated_chain_tracks_reversed_affine(p in pairs(30)) {
        let x: Vec<Dd> = associated_chain(&p);
        let mut r = dd(0.0);
        for (k, &(xi, eta)) in p.iter().enumerate() {
            r = dd(xi).exp() * (r + dd(eta));
            let tol = 1e-26 * r.abs().to_f64().max(1.0);
            prop_assert!((f_inv(x[k]) - r).abs().to_f64() <= tol);
        }
    }
}

#[test]
fn map_round_trip_on_grid() {
    let n = 200_001;
    for i in 0..n {
        let x = -1e6 + 2e6 * i as f64 / (n - 1) as f64;
        let back = f_inv(f_map(dd(x))).to_f64();
        assert!(ulps(back, x) <= 1.0, "{x} {back}");
        let plain = f_inv(f_map(x));
        assert!((plain - x).abs() <= 1e-14 * x.abs().max(1.0), "{x} {plain}");
    }
}

#[test]
fn map_is_increasing_and_continuous() {
    let e = std::f64::consts::E;
    for x in [-e, e] {
        let left = f_map(x - 1e-12);
        let right = f_map(x + 1e-12);
        assert!(right > left && right - left < 1e-11);
    }
    let mut prev = f64::NEG_INFINITY;
    for i in -1000..=1000 {
        let v = f_map(i as f64 * 0.01 * e);
        assert!(v > prev);
        prev = v;
    }
}

#[test]
fn generic_code_runs_in_single_precision() {
    let p = [(-0.5, 1.0), (0.3, 2.0), (-1.0, 0.5)];
    let t32: Trajectory<f32> = Trajectory::from_pairs(&p);
    let t64: Trajectory<f64> = Trajectory::from_pairs(&p);
    for k in 0..3 {
        assert!((t32.d[k] as f64 - t64.d[k]).abs() < 1e-6 * t64.d[k]);
    }
}
