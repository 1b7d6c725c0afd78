//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails. Run with `cargo test -p cffl-cli --test acceptance`.

use std::time::Instant;

use cffl_cli::config::{Sweep, SweepVar};
use cffl_cli::presets::preset;
use cffl_cli::{execute, ExperimentConfig, RunOutput, SchemeId};
use cffl_core::link::LinkModel;
use cffl_core::netmodel::{ColocatedScenario, PathLossParams, Scenario, SystemParams};
use cffl_core::perfmodel::{dl_rate_cf, dl_rate_colocated, dl_rate_tdma, energy_terms, latency_terms, ul_rate_cf,
    ul_rate_colocated, ul_rate_tdma, FlParams};
use cffl_core::sca::{hd_lower, hu_lower, quad_upper_bound, z_exact, z_tilde, ScaParams, ShortTermProblem};
use cffl_core::solver::{solve, Atom, QuadForm, SmoothConvexProgram};
use cffl_core::two_timescale::{grad_t, time_of_theta, StepSchedules};
use nalgebra::DMatrix;

type Check = Result<String, String>;

fn run(cfg: &ExperimentConfig) -> RunOutput {
    let t0 = Instant::now();
    let out = execute(cfg, None).expect("harness run");
    eprintln!("  [{} {:?}: {:.0} s]", cfg.preset.as_deref().unwrap_or("custom"), cfg.sweep.values, t0.elapsed().as_secs_f64());
    out
}

fn with_sweep(mut cfg: ExperimentConfig, variable: SweepVar, values: &[f64]) -> ExperimentConfig {
    cfg.sweep = Sweep { variable, values: values.to_vec() };
    cfg
}

fn convergence() -> Check {
    let cfg = with_sweep(preset("fig4").unwrap(), SweepVar::M, &[30.0]);
    let out = run(&cfg);
    let t: Vec<f64> = out.trace.iter().map(|r| r.t_e_running_s).collect();
    if t.len() < 200 {
        return Err(format!("trace has {} rows, expected 200", t.len()));
    }
    let (at100, fin) = (t[99], t[199]);
    let dev = (at100 - fin).abs() / fin;
    let worst = t[99..200].iter().map(|x| (x - fin).abs() / fin).fold(0.0, f64::max);
    let msg = format!(
        "T_e(100) = {at100:.4} s, T_e(200) = {fin:.4} s, deviation {:.2}% (max over 100..200: {:.2}%)",
        100.0 * dev,
        100.0 * worst
    );
    if dev <= 0.05 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// K sweep at M = 50 with all four schemes: gives the K trend and the
/// joint-design gain at K = 8.
fn k_sweep() -> RunOutput {
    let mut cfg = with_sweep(preset("fig6").unwrap(), SweepVar::K, &[2.0, 4.0, 8.0]);
    cfg.n_realizations = 20;
    run(&cfg)
}

fn joint_gain(out: &RunOutput) -> Check {
    let bl1 = out.paired(SchemeId::Joint, SchemeId::Bl1, 8.0).map_err(|e| e.to_string())?;
    let bl2 = out.paired(SchemeId::Joint, SchemeId::Bl2, 8.0).map_err(|e| e.to_string())?;
    let bl3 = out.paired(SchemeId::Joint, SchemeId::Bl3, 8.0).map_err(|e| e.to_string())?;
    let msg = format!(
        "JOINT/BL1 = {:.3} ({} common, {} excluded), JOINT/BL2 = {:.3}, JOINT/BL3 = {:.3}",
        bl1.ratio(),
        bl1.common,
        bl1.excluded,
        bl2.ratio(),
        bl3.ratio()
    );
    if bl1.ratio() <= 0.60 && bl2.mean_a < bl2.mean_b && bl3.mean_a < bl3.mean_b {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ratio_check(out: &RunOutput, other: SchemeId, value: f64, bound: f64) -> Check {
    let p = out.paired(SchemeId::Joint, other, value).map_err(|e| {
        let why = out.rows_of(other, value).into_iter().find(|r| !r.is_ok()).map(|r| r.detail.clone());
        format!("{e}; {other}: {}", why.unwrap_or_default())
    })?;
    let msg = format!(
        "mean CF {:.3} s, mean {other} {:.3} s, ratio {:.3} (bound {bound}), {} common, {} excluded",
        p.mean_a,
        p.mean_b,
        p.ratio(),
        p.common,
        p.excluded
    );
    if p.ratio() <= bound {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn cf_vs_tdma() -> Check {
    let mut cfg = with_sweep(preset("fig8").unwrap(), SweepVar::K, &[8.0]);
    cfg.n_realizations = 20;
    ratio_check(&run(&cfg), SchemeId::Tdma, 8.0, 0.15)
}

fn cf_vs_collocated() -> Check {
    let mut cfg = with_sweep(preset("fig9").unwrap(), SweepVar::M, &[30.0]);
    cfg.n_realizations = 20;
    ratio_check(&run(&cfg), SchemeId::Collocated, 30.0, 0.60)
}

/// JOINT means along the sweep; `increasing` is the expected direction.
fn trend(out: &RunOutput, values: &[f64], increasing: bool) -> Check {
    let means: Vec<f64> = values
        .iter()
        .map(|&v| out.summary_of(SchemeId::Joint, v).and_then(|s| s.mean_t_e_s).unwrap_or(f64::NAN))
        .collect();
    let failed: usize = values.iter().filter_map(|&v| out.summary_of(SchemeId::Joint, v)).map(|s| s.n_failed).sum();
    let ok = means.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
    let msg = format!(
        "{} ({failed} failed realizations)",
        values.iter().zip(&means).map(|(v, m)| format!("{v}: {m:.4}")).collect::<Vec<_>>().join(", ")
    );
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn trends(k_out: &RunOutput) -> Vec<(String, Check)> {
    let mut out = Vec::new();
    let mut cfg = with_sweep(preset("fig5").unwrap(), SweepVar::M, &[30.0, 50.0, 70.0]);
    cfg.schemes = vec![SchemeId::Joint];
    out.push(("decreasing in M (K=4)".to_string(), trend(&run(&cfg), &[30.0, 50.0, 70.0], false)));
    out.push(("increasing in K (M=50)".to_string(), trend(k_out, &[2.0, 4.0, 8.0], true)));
    for (name, values) in
        [("theta_max", [-10.0, -40.0]), ("f_max", [3.0e9, 1.5e9]), ("e_max", [15.0, 2.0])]
    {
        let p = preset(name).unwrap();
        let var = p.sweep.variable;
        let cfg = with_sweep(p, var, &values);
        out.push((format!("increasing as {var} decreases"), trend(&run(&cfg), &values, true)));
    }
    out
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn ensure(cond: bool, what: &str) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(what.to_string())
    }
}

fn properties() -> Check {
    let sys = SystemParams::default();
    let pl = PathLossParams::default();

    // reductions
    let col = ColocatedScenario::generate(&sys, &pl, 7, 3, 4).map_err(|e| e.to_string())?;
    let cf = col.as_cell_free(sys.tau_t);
    let eta = [0.2, 0.1, 0.3];
    let zeta = [0.5, 1.0, 0.2];
    let eta_cf = DMatrix::from_fn(7, 3, |_, k| eta[k] / 7.0);
    for (a, b) in dl_rate_cf(&eta_cf, &cf, &sys).iter().zip(dl_rate_colocated(&eta, &col, &sys)) {
        ensure(rel(*a, b) < 1e-10, "uniform-beta CF DL differs from collocated")?;
    }
    for (a, b) in ul_rate_cf(&zeta, &cf, &sys).iter().zip(ul_rate_colocated(&zeta, &col, &sys)) {
        ensure(rel(*a, b) < 1e-10, "uniform-beta CF UL differs from collocated")?;
    }
    let one = SystemParams { tau_t: 1, ..sys };
    let sc = Scenario::generate(&one, &pl, 6, 1, 2).map_err(|e| e.to_string())?;
    let sc = sc.with_orthogonal_pilots(1, one.rho_t).map_err(|e| e.to_string())?;
    let eta1 = DMatrix::from_fn(6, 1, |m, _| 0.5 / sc.sigma2[(m, 0)]);
    ensure(rel(dl_rate_cf(&eta1, &sc, &one)[0], dl_rate_tdma(&eta1, &sc, &one, 1)[0]) < 1e-10, "K=1 TDMA DL")?;
    ensure(rel(ul_rate_cf(&[0.6], &sc, &one)[0], ul_rate_tdma(&[0.6], &sc, &one, 1)[0]) < 1e-10, "K=1 TDMA UL")?;

    // surrogate tightness, gradient and domination
    let sc = Scenario::generate(&sys, &pl, 8, 3, 5).map_err(|e| e.to_string())?;
    let link = LinkModel::cell_free(&sc, &sys);
    let w0 = link.uniform_w(0.6);
    let u0 = vec![0.4, 0.7, 0.9];
    let hd = link.dl_rates(&w0);
    let hu = link.ul_rates(&u0);
    for k in 0..3 {
        ensure(rel(hd_lower(&link, k, &w0, &w0), hd[k]) < 1e-10, "DL bound not tight")?;
        ensure(rel(hu_lower(&link, k, &u0, &u0), hu[k]) < 1e-10, "UL bound not tight")?;
        for i in 0..u0.len() {
            let h = 1e-6;
            let mut a = u0.clone();
            let mut b = u0.clone();
            a[i] += h;
            b[i] -= h;
            let ge = (link.ul_rates(&a)[k] - link.ul_rates(&b)[k]) / (2.0 * h);
            let gl = (hu_lower(&link, k, &a, &u0) - hu_lower(&link, k, &b, &u0)) / (2.0 * h);
            ensure((ge - gl).abs() <= 1e-5 * ge.abs().max(1.0), "UL bound gradient")?;
        }
        for s in 1..50 {
            let f = 0.5 + s as f64 / 50.0;
            let w: Vec<f64> = w0.iter().enumerate().map(|(i, x)| x * if i % 2 == 0 { f } else { 1.0 / f }).collect();
            let u: Vec<f64> = u0.iter().map(|x| (x * f).min(1.0)).collect();
            ensure(hd_lower(&link, k, &w, &w0) <= link.dl_rates(&w)[k] * (1.0 + 1e-12) + 1e-9, "DL domination")?;
            ensure(hu_lower(&link, k, &u, &u0) <= link.ul_rates(&u)[k] * (1.0 + 1e-12) + 1e-9, "UL domination")?;
        }
    }
    for (u, p, r) in [(0.3, 1.0, 2.0), (0.9, 0.1, 4.0), (0.05, 3.0, 0.2)] {
        ensure(rel(z_tilde(u, p, r, p, r, 0.01), z_exact(u, p, r)) < 1e-10, "z surrogate not tight")?;
        for s in 0..200 {
            let (pp, rr) = (0.05 * s as f64, 0.07 * (200 - s) as f64);
            ensure(z_tilde(u, pp, rr, p, r, 0.01) >= z_exact(u, pp, rr) - 1e-9, "z domination")?;
            ensure(quad_upper_bound(pp, -rr, p, -r, 0.01) >= -(pp - rr).powi(2) - 1e-9, "quadratic domination")?;
        }
    }

    // slope of T(theta)
    for i in 0..20 {
        let theta = 10f64.powf(-5.5 + 0.23 * i as f64);
        let h = 1e-5 * theta;
        let fd = (time_of_theta(theta + h, 6.0, 0.07) - time_of_theta(theta - h, 6.0, 0.07)) / (2.0 * h);
        let g = grad_t(theta, 6.0, 0.07).map_err(|e| e.to_string())?;
        ensure((fd - g).abs() <= 1e-5 * g.abs().max(1e-9), "grad_T finite difference")?;
    }

    // SCA monotonicity
    let sca = ScaParams { eps_inner: 1e-4, ..ScaParams::default() };
    let st = ShortTermProblem::new(link.clone(), &sys, &FlParams::default(), 0.01).map_err(|e| e.to_string())?;
    let out = st.algorithm2(&sca, None).map_err(|e| e.to_string())?;
    ensure(out.trace.windows(2).all(|w| w[1].objective <= w[0].objective + 1e-6), "SCA objective increased")?;
    ensure(out.trace.iter().all(|r| r.max_violation <= 1e-6), "SCA iterate infeasible")?;

    // solver oracles
    let mut p = SmoothConvexProgram::new(2);
    p.set_objective(0, 1.0);
    p.set_objective(1, 1.0);
    p.push("disc", Atom::ConvexQuadratic { quad: QuadForm::diagonal(vec![(0, 1.0), (1, 1.0)]), q: vec![], r: -2.0 })
        .map_err(|e| e.to_string())?;
    let r = solve(&p, &[0.0, 0.0], 1e-9).map_err(|e| e.to_string())?;
    ensure((r.x_star[0] + 1.0).abs() < 1e-5 && (r.x_star[1] + 1.0).abs() < 1e-5, "disc oracle")?;
    let mut p = SmoothConvexProgram::new(3);
    p.set_objective(2, 1.0);
    p.set_bounds(0, 0.0, f64::INFINITY).map_err(|e| e.to_string())?;
    p.set_bounds(1, 0.0, f64::INFINITY).map_err(|e| e.to_string())?;
    p.push("cost", Atom::ReciprocalSum { terms: vec![(1.0, vec![0]), (9.0, vec![1])], a: vec![(2, -1.0)], b: 0.0 })
        .map_err(|e| e.to_string())?;
    p.push("budget", Atom::Affine { a: vec![(0, 1.0), (1, 1.0)], b: -1.0 }).map_err(|e| e.to_string())?;
    let r = solve(&p, &[0.3, 0.3, 100.0], 1e-10).map_err(|e| e.to_string())?;
    ensure((r.objective_value - 16.0).abs() <= 1e-6 * 16.0, "allocation oracle")?;

    // one AP, one UE against a zooming grid search
    let flp = FlParams { e_max_j: 1.0, ..FlParams::default() };
    let sc = Scenario::from_parts(DMatrix::from_element(1, 1, 3e-12), vec![0], sys.tau_t, sys.rho_t, 0)
        .map_err(|e| e.to_string())?;
    let theta = 0.01;
    let st = ShortTermProblem::new(LinkModel::cell_free(&sc, &sys), &sys, &flp, theta).map_err(|e| e.to_string())?;
    let tight = ScaParams { eps_inner: 1e-9, max_inner_iters: 300, solver_tol: 1e-9, ..ScaParams::default() };
    let sca_t = st.algorithm2(&tight, None).map_err(|e| e.to_string())?.time;
    let grid = single_link_grid(&sc, &sys, &flp, theta);
    ensure(rel(sca_t, grid) <= 1e-4, &format!("1-AP/1-UE: SCA {sca_t} vs grid {grid}"))?;

    // step-size conditions
    let (mut s_phi2, mut s_pi, mut s_pi2) = (0.0, 0.0, 0.0);
    for n in 1..=1_000_000usize {
        let (phi, pi) = (StepSchedules::phi(n), StepSchedules::pi(n));
        s_phi2 += phi * phi;
        s_pi += pi;
        s_pi2 += pi * pi;
    }
    ensure(s_phi2 < 1.0 + 1.0 / 0.75 && s_pi2 < 1.65 && s_pi > 13.8, "schedule sums")?;
    ensure(StepSchedules::pi(1_000_000) / StepSchedules::phi(1_000_000) < 0.18, "pi/phi does not vanish")?;

    Ok(format!("reductions, surrogates, grad_T, SCA monotonicity, solver oracles, 1-AP grid ({:.2e} rel), schedules", rel(sca_t, grid)))
}

fn single_link_grid(sc: &Scenario, sys: &SystemParams, flp: &FlParams, theta: f64) -> f64 {
    let eta_max = 1.0 / sc.sigma2[(0, 0)];
    let time = |p: [f64; 3]| -> f64 {
        let rd = dl_rate_cf(&DMatrix::from_element(1, 1, p[0]), sc, sys);
        let ru = ul_rate_cf(&[p[1]], sc, sys);
        let (Ok(lat), Ok((et, ec))) =
            (latency_terms(&rd, &ru, &[p[2]], theta, flp), energy_terms(&[p[1]], &ru, &[p[2]], theta, flp, sys))
        else {
            return f64::INFINITY;
        };
        if et[0] + ec[0] > flp.e_max_j {
            return f64::INFINITY;
        }
        lat.iteration_time() / (1.0 - theta)
    };
    let n = 50;
    let full = [eta_max, 1.0, flp.f_max];
    let floor = [1e-9, 1e-9, flp.f_min];
    let (mut lo, mut hi) = (floor, full);
    let mut best = (f64::INFINITY, [0.0; 3]);
    for _ in 0..10 {
        let step: Vec<f64> = (0..3).map(|d| (hi[d] - lo[d]) / (n - 1) as f64).collect();
        for i in 0..n {
            for j in 0..n {
                for l in 0..n {
                    let p = [lo[0] + step[0] * i as f64, lo[1] + step[1] * j as f64, lo[2] + step[2] * l as f64];
                    let t = time(p);
                    if t < best.0 {
                        best = (t, p);
                    }
                }
            }
        }
        for d in 0..3 {
            lo[d] = (best.1[d] - 2.0 * step[d]).max(floor[d]);
            hi[d] = (best.1[d] + 2.0 * step[d]).min(full[d]);
        }
    }
    best.0
}

fn main() {
    // `cargo test` passes harness flags such as `--nocapture`; only a
    // filter that excludes this suite is honoured.
    if std::env::args().skip(1).any(|a| !a.starts_with('-') && !"acceptance".contains(a.as_str())) {
        return;
    }
    let mut results: Vec<(String, Check)> = Vec::new();
    results.push(("property suite".into(), properties()));
    results.push(("convergence by iteration 100 (M=30, K=4)".into(), convergence()));
    let k_out = k_sweep();
    results.push(("joint gain over BL1/BL2/BL3 (M=50, K=8)".into(), joint_gain(&k_out)));
    results.push(("CF vs TDMA (M=50, K=8, orthogonal pilots)".into(), cf_vs_tdma()));
    results.push(("CF vs collocated (M=30, K=4, D=1 km)".into(), cf_vs_collocated()));
    for (name, check) in trends(&k_out) {
        results.push((format!("trend: {name}"), check));
    }
    let mut failed = 0;
    for (name, check) in &results {
        match check {
            Ok(msg) => println!("PASS {name}: {msg}"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
