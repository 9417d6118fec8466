//! Acceptance suite. Prints one `[PASS]`/`[FAIL]` line per criterion and
//! exits non-zero if any criterion fails.

mod common;

use std::path::Path;
use std::time::{Duration, Instant};

use common::{exact_filter_response, gauss_solve, settling_budget, DEMO_SOLUTION};
use paramodel::config::RunConfig;
use paramodel::linsolve::{demo_params, demo_problem, demo_system, DEMO_HORIZON};
use paramodel::runner::execute;
use paramodel::trainer::{builtin_scenario, segments};
use paramodel::{
    solve_linear, stagger_params, train_online, ControllerParams, ControllerState, DecayClock, FeedforwardNet,
    FirstOrderFilter, LinearTrackingProblem,
};
use rand::{rngs::StdRng, Rng, SeedableRng};

const AC1_REL_TOL: f64 = 1e-12;
const AC2_ERR_AT_TAU: f64 = 1e-4;
const AC2_RATIO: f64 = 32.0;
const AC2_RATIO_SLACK: f64 = 0.20;
const AC3_TOL: f64 = 1e-2;
const AC3_TIME_LIMIT: Duration = Duration::from_secs(5);
const TRACK_TOL: f64 = 1e-2;
const AC6_SAMPLES: usize = 100;
const AC6_SEED: u64 = 0x5eed_0006;
const AC7_DECIMATE: usize = 1000;
const AC8_RHOS: [f64; 4] = [0.9, 0.5, 0.25, 0.1];

type Verdict = Result<String, String>;
type Criterion = (&'static str, &'static str, fn() -> Verdict);

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ac1_controller_closed_form() -> Verdict {
    let params = ControllerParams {
        kp: 1.0,
        ki: 0.01,
        k_alpha: 0.0,
        k_beta: 40.0,
        dt: 1e-5,
        decay_clock: DecayClock::Time,
    };
    let mut state = ControllerState::new(&params, 2.0, 0.0).map_err(|e| e.to_string())?;
    let mut u = f64::NAN;
    for _ in 0..10_000 {
        (state, u) = state.step(&params, 0.1, 0.0).map_err(|e| e.to_string())?;
    }
    let expected = 2.0 * 0.01 * 0.1 * 1e4 * 1e-5;
    let rel = ((u - expected) / expected).abs();
    check(
        rel < AC1_REL_TOL,
        format!("u = {u:e}, expected {expected:e}, rel err {rel:.3e} (tol {AC1_REL_TOL:e})"),
    )
}

fn ac2_filter_accuracy() -> Verdict {
    let tau = 1e-5;
    let err = |dt: f64| {
        let f = FirstOrderFilter::new(tau, 0.0).unwrap().step(1.0, dt).unwrap();
        (f.state() - exact_filter_response(0.0, 1.0, dt, tau)).abs()
    };
    let errs: Vec<f64> = [1.0, 2.0, 4.0, 8.0].iter().map(|d| err(tau / d)).collect();
    let ratios: Vec<f64> = errs.windows(2).map(|w| w[0] / w[1]).collect();
    let at_tau_ok = errs[0] < AC2_ERR_AT_TAU;
    let rates_ok = ratios
        .iter()
        .all(|r| (r - AC2_RATIO).abs() <= AC2_RATIO_SLACK * AC2_RATIO);
    check(
        at_tau_ok && rates_ok,
        format!(
            "error at dt=tau {:.4e} (tol {AC2_ERR_AT_TAU:e}: {}), halving ratios {:?} (32 +/- 20%: {})",
            errs[0],
            if at_tau_ok { "ok" } else { "exceeded" },
            ratios.iter().map(|r| format!("{r:.2}")).collect::<Vec<_>>(),
            if rates_ok { "ok" } else { "out of band" },
        ),
    )
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn ac3_linear_solver() -> Verdict {
    let (a, b) = demo_system();
    let x_star = gauss_solve(&a, &b);
    if max_abs_diff(&x_star, &DEMO_SOLUTION) > 1e-12 {
        return Err(format!("oracle solution drifted: {x_star:?}"));
    }
    let start = Instant::now();
    let trace = solve_linear(&demo_problem()).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    let x = &trace.last().unwrap().x;
    let residual = trace.final_residual();
    let x_err = max_abs_diff(x, &x_star);

    let eye = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
    let diag = vec![vec![2.0, 0.0, 0.0], vec![0.0, 4.0, 0.0], vec![0.0, 0.0, 5.0]];
    let mut extra = Vec::new();
    for (label, a, b, exact) in [
        ("identity", eye, vec![0.5, -0.2, 0.3], vec![0.5, -0.2, 0.3]),
        ("diagonal", diag, vec![2.0, 2.0, 5.0], vec![1.0, 0.5, 1.0]),
    ] {
        let p = LinearTrackingProblem::staggered(a, b, &demo_params(), 0.5, 1e-5, DEMO_HORIZON)
            .map_err(|e| e.to_string())?;
        let t = solve_linear(&p).map_err(|e| e.to_string())?;
        extra.push((label, t.final_residual(), max_abs_diff(&t.last().unwrap().x, &exact)));
    }

    let ok = residual < AC3_TOL
        && x_err < AC3_TOL
        && elapsed < AC3_TIME_LIMIT
        && extra.iter().all(|(_, r, e)| *r < AC3_TOL && *e < AC3_TOL);
    let extra: Vec<String> = extra
        .iter()
        .map(|(l, r, e)| format!("{l}: residual {r:.2e}, |x-x*| {e:.2e}"))
        .collect();
    check(
        ok,
        format!(
            "demo: residual {residual:.3e}, |x-x*| {x_err:.3e}, {:.2?} for {DEMO_HORIZON} iterations; {} (tol {AC3_TOL:e})",
            elapsed,
            extra.join("; ")
        ),
    )
}

fn ac4_fig4() -> Verdict {
    let s = builtin_scenario("fig4").unwrap();
    let records = train_online(&s).map_err(|e| e.to_string())?;
    let from = s.horizon - s.horizon / 5;
    let worst = records
        .iter()
        .filter(|r| r.k > from)
        .map(|r| (r.y - 0.55).abs())
        .fold(0.0, f64::max);
    let clamp_ok = records.iter().all(|r| r.w.iter().all(|w| w.abs() <= s.w_max()));
    let max_w = records.iter().flat_map(|r| &r.w).fold(0.0f64, |m, w| m.max(w.abs()));
    check(
        worst < TRACK_TOL && clamp_ok,
        format!(
            "max |y - 0.55| over k > {from}: {worst:.3e} (tol {TRACK_TOL:e}); max |w| {max_w:.4} <= {}",
            s.w_max()
        ),
    )
}

fn ac5_event_resettling() -> Verdict {
    let mut ok = true;
    let mut parts = Vec::new();
    for name in ["fig5", "fig6", "fig7"] {
        let s = builtin_scenario(name).unwrap();
        let records = train_online(&s).map_err(|e| e.to_string())?;
        let segs = segments(&records, &s.event_iterations(), TRACK_TOL);
        let budget = settling_budget(name);
        if segs.len() != budget.len() {
            return Err(format!("{name}: {} segments, expected {}", segs.len(), budget.len()));
        }
        let mut desc = Vec::new();
        for (seg, &b) in segs.iter().zip(budget) {
            match seg.settling_time() {
                Some(n) if n <= b => desc.push(format!("{n}<={b}")),
                Some(n) => {
                    ok = false;
                    desc.push(format!("{n}>{b}"));
                }
                None => {
                    ok = false;
                    desc.push(format!("never<={b}"));
                }
            }
        }
        parts.push(format!("{name} [{}]", desc.join(", ")));
    }
    check(ok, format!("settling iterations per segment: {}", parts.join("; ")))
}

fn ac6_mask_equivalence() -> Verdict {
    let mut rng = StdRng::seed_from_u64(AC6_SEED);
    let base = FeedforwardNet::default_topology();
    let q = base.weight_count();
    let mut mismatches = 0;
    for _ in 0..AC6_SAMPLES {
        let w: Vec<f64> = (0..q).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        let x = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        for i in 0..q {
            let mut masked = base.clone();
            let mut zeroed = base.clone();
            for (j, &wj) in w.iter().enumerate() {
                masked.set_weight(j, wj).unwrap();
                zeroed.set_weight(j, if i == j { 0.0 } else { wj }).unwrap();
            }
            masked.set_mask(i, false).unwrap();
            let a = masked.forward(&x).unwrap();
            let b = zeroed.forward(&x).unwrap();
            if a.to_bits() != b.to_bits() {
                mismatches += 1;
            }
        }
    }
    check(
        mismatches == 0,
        format!(
            "{} comparisons (seed {AC6_SEED:#x}), {mismatches} bit mismatches",
            AC6_SAMPLES * q
        ),
    )
}

fn ac7_determinism() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let mut failures = Vec::new();
    let names = ["fig4", "fig5", "fig6", "fig7", "linsolve3"];
    for name in names {
        let mut runs = Vec::new();
        for run in 0..2 {
            let mut cfg = RunConfig::builtin(name).unwrap();
            let path = dir.path().join(format!("{name}-{run}.csv"));
            cfg.output = Some(path.clone());
            cfg.decimate = AC7_DECIMATE;
            execute(&cfg).map_err(|e| e.to_string())?;
            runs.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        let golden = std::fs::read(golden_dir.join(format!("{name}.csv"))).map_err(|e| format!("{name}: {e}"))?;
        if runs[0] != runs[1] {
            failures.push(format!("{name}: runs differ"));
        } else if runs[0] != golden {
            failures.push(format!("{name}: differs from golden"));
        }
    }
    check(
        failures.is_empty(),
        if failures.is_empty() {
            format!(
                "{} builtins byte-identical across runs and to golden traces",
                names.len()
            )
        } else {
            failures.join("; ")
        },
    )
}

fn ac8_stagger() -> Verdict {
    let base = ControllerParams::training_default();
    for rho in AC8_RHOS {
        let p = stagger_params(&base, 7, rho).map_err(|e| e.to_string())?;
        let decreasing = p.windows(2).all(|w| w[1].kp < w[0].kp && w[1].ki < w[0].ki);
        let shared = p
            .iter()
            .all(|c| c.k_alpha == base.k_alpha && c.k_beta == base.k_beta && c.dt == base.dt);
        if !(decreasing && shared) {
            return Err(format!(
                "rho = {rho}: decreasing {decreasing}, shared k_alpha/k_beta {shared}"
            ));
        }
    }
    Ok(format!(
        "rho in {AC8_RHOS:?}, 7 controllers: kp, ki strictly decreasing; k_alpha, k_beta constant"
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("AC1", "controller closed form", ac1_controller_closed_form),
        ("AC2", "filter accuracy and order", ac2_filter_accuracy),
        ("AC3", "linear solver vs direct solution", ac3_linear_solver),
        ("AC4", "fig4 tracking", ac4_fig4),
        ("AC5", "fig5-7 re-settling", ac5_event_resettling),
        ("AC6", "mask/zero equivalence", ac6_mask_equivalence),
        ("AC7", "determinism and golden traces", ac7_determinism),
        ("AC8", "stagger ordering", ac8_stagger),
    ];
    let mut failed = 0;
    for (id, title, run) in criteria {
        let verdict = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".to_string()));
        match verdict {
            Ok(detail) => println!("[PASS] {id} {title}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {id} {title}: {detail}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
