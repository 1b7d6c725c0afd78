use cffl_core::baselines::{sample_of, SchemeContext, SchemeId};
use cffl_core::link::LinkModel;
use cffl_core::netmodel::{Scenario, SystemParams};
use cffl_core::perfmodel::FlParams;
use cffl_core::sca::{ScaParams, ShortTermProblem};
use cffl_core::two_timescale::{algorithm3, grad_t, time_of_theta, LongTermConfig, ShortTermSample, StepSchedules};
use cffl_core::Result;
use nalgebra::DMatrix;
use proptest::prelude::*;

/// One AP and one UE at a fixed distance, no shadowing.
fn fixed_link(beta: f64) -> (LinkModel, SystemParams) {
    let sys = SystemParams::default();
    let sc = Scenario::from_parts(DMatrix::from_element(1, 1, beta), vec![0], sys.tau_t, sys.rho_t, 0).unwrap();
    (LinkModel::cell_free(&sc, &sys), sys)
}

#[test]
fn degenerate_problem_converges_to_the_grid_minimizer() {
    let (link, sys) = fixed_link(2e-11);
    let flp = FlParams::default();
    let full_power = |theta: f64| -> Result<ShortTermSample> {
        let st = ShortTermProblem::new(link.clone(), &sys, &flp, theta)?;
        let (w, u) = st.equal_power();
        let out = st.fixed_power(&w, &u)?;
        Ok(sample_of(&out, theta))
    };

    // with one UE, full power and f_max are optimal while energy is slack
    for theta in [1e-4, 3e-3, 0.05] {
        let st = ShortTermProblem::new(link.clone(), &sys, &flp, theta).unwrap();
        let (w, u) = st.equal_power();
        let fixed = st.fixed_power(&w, &u).unwrap();
        assert!((fixed.vars.f[0] - flp.f_max).abs() < 1e-6 * flp.f_max, "energy binds at theta {theta}");
        let sca = ScaParams { eps_inner: 1e-8, max_inner_iters: 200, solver_tol: 1e-9, ..ScaParams::default() };
        let joint = st.algorithm2(&sca, None).unwrap();
        assert!((joint.time - fixed.time).abs() <= 1e-4 * fixed.time, "{} vs {}", joint.time, fixed.time);
    }

    // closed form of T(theta) from the full-power rates
    let s = full_power(0.01).unwrap();
    let (a, b) = (s.a, flp.nu * flp.cycles_per_pass() / flp.f_max);
    assert!((s.b - b).abs() < 1e-9 * b);
    assert!(a > 1.0 && a < 30.0, "toy transmission time {a} s");
    let n = 100_000;
    let best = (0..=n)
        .map(|i| flp.theta_min + (flp.theta_max - flp.theta_min) * i as f64 / n as f64)
        .min_by(|x, y| time_of_theta(*x, a, b).total_cmp(&time_of_theta(*y, a, b)))
        .unwrap();

    let oracle = |_: u64, theta: f64| full_power(theta);
    let cfg = LongTermConfig { n_outer: 20_000, early_stop_window: 0, ..LongTermConfig::default() };
    for seed in [1, 2, 3] {
        let out = algorithm3(&oracle, &flp, &cfg, seed).unwrap();
        assert!((out.theta - best).abs() < 5e-3, "seed {seed}: {} vs {best}", out.theta);
        assert!(out.history.iter().all(|h| (flp.theta_min..=flp.theta_max).contains(&h.theta)));
        let t = out.history.last().unwrap();
        assert!((t.time - time_of_theta(t.theta, a, b)).abs() <= 1e-9 * t.time);
    }
}

#[test]
fn slope_matches_finite_differences_on_a_grid() {
    for (a, b) in [(0.5, 0.2), (6.0, 0.067), (40.0, 0.01)] {
        for i in 0..20 {
            let theta = 10f64.powf(-5.5 + 4.5 * i as f64 / 19.0);
            let h = 1e-5 * theta;
            let fd = (time_of_theta(theta + h, a, b) - time_of_theta(theta - h, a, b)) / (2.0 * h);
            let g = grad_t(theta, a, b).unwrap();
            assert!((fd - g).abs() <= 1e-5 * g.abs().max(1e-9), "theta {theta}: {fd} vs {g}");
        }
    }
}

#[test]
fn schedules_satisfy_the_step_conditions() {
    let (mut sum_phi2, mut sum_pi, mut sum_pi2) = (0.0, 0.0, 0.0);
    let mut checkpoints = Vec::new();
    for n in 1..=1_000_000usize {
        let (phi, pi) = (StepSchedules::phi(n), StepSchedules::pi(n));
        sum_phi2 += phi * phi;
        sum_pi += pi;
        sum_pi2 += pi * pi;
        assert!(1.0 / phi <= (n as f64).powf(0.875) * (1.0 + 1e-12));
        if n.is_power_of_two() {
            checkpoints.push((n, sum_phi2, sum_pi, sum_pi2, pi / phi));
        }
    }
    // summable squares: increments between checkpoints shrink geometrically
    let d: Vec<f64> = checkpoints.windows(2).map(|w| w[1].1 - w[0].1).collect();
    assert!(d.windows(2).skip(2).all(|w| w[1] < w[0]));
    assert!(sum_phi2 < 1.0 + 1.0 / (2.0 * 0.875 - 1.0));
    assert!(sum_pi2 < std::f64::consts::PI.powi(2) / 6.0);
    // 1/n sums diverge like ln n
    assert!(sum_pi > (1e6f64).ln());
    // pi/phi = n^{-1/8} -> 0
    assert!(checkpoints.windows(2).all(|w| w[1].4 < w[0].4));
    assert!((checkpoints.last().unwrap().4 - (checkpoints.last().unwrap().0 as f64).powf(-0.125)).abs() < 1e-12);
}

#[test]
fn scheme_runs_are_reproducible() {
    let mut ctx = SchemeContext::new(SystemParams::default(), FlParams::default(), 6, 2);
    ctx.sca = ScaParams { eps_inner: 1e-2, ..ScaParams::default() };
    let cfg = LongTermConfig { n_outer: 8, ..LongTermConfig::default() };
    let a = ctx.run(SchemeId::Joint, &cfg, 17, 3).unwrap();
    let b = ctx.run(SchemeId::Joint, &cfg, 17, 3).unwrap();
    assert_eq!(a.theta, b.theta);
    assert_eq!(a.outer.as_ref().unwrap().history, b.outer.as_ref().unwrap().history);
    for (x, y) in a.t_e.iter().zip(&b.t_e) {
        assert_eq!(x.as_ref().ok(), y.as_ref().ok());
    }
    let h = &a.outer.as_ref().unwrap().history;
    assert!(h.iter().all(|r| (ctx.flp.theta_min..=ctx.flp.theta_max).contains(&r.theta)));
    // the running estimate is the mean of the per-iteration times
    let last = h.last().unwrap();
    let mean = h.iter().map(|r| r.time).sum::<f64>() / h.len() as f64;
    assert!((last.t_e_running - ctx.flp.effective_factor() * mean).abs() <= 1e-9 * last.t_e_running);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn theta_stays_in_bounds(a in 0.01..100.0f64, b in 0.0..1.0f64, noise in 0.0..0.9f64, tau in 0.1..1000.0f64, seed in 0u64..1000) {
        let oracle = |draw: u64, theta: f64| -> Result<ShortTermSample> {
            let a = a * (1.0 + noise * ((draw % 1000) as f64 / 500.0 - 1.0));
            Ok(ShortTermSample { time: time_of_theta(theta, a, b), a, b })
        };
        let flp = FlParams::default();
        let cfg = LongTermConfig { n_outer: 60, tau_prox: tau, ..LongTermConfig::default() };
        let out = algorithm3(&oracle, &flp, &cfg, seed).unwrap();
        prop_assert!(out.history.iter().all(|h| (flp.theta_min..=flp.theta_max).contains(&h.theta)));
        prop_assert!((flp.theta_min..=flp.theta_max).contains(&out.theta));
        prop_assert!(out.state.g.is_finite() && out.state.grad_g.is_finite());
    }
}
