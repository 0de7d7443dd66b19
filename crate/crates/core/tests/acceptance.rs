//! End-to-end acceptance criteria. Each test prints one PASS/FAIL line straight
//! to stdout (past the harness capture) and then asserts its verdict.
//!
//! Run with `cargo test --release --test acceptance` for representative timings.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use corotfsi::algebra::Mat2;
use corotfsi::analysis::{eps_sweep, estimate_poincare_constants, DecayReport, SweepConfig};
use corotfsi::cli::{closure_run, corotation_suite, geometry_suite, run_config};
use corotfsi::config::{parse_config, velocity_from_streamfunction, Config};
use corotfsi::coupling::Termination;
use corotfsi::fluid::FluidState;
use corotfsi::geometry::ReferenceDomain;
use corotfsi::shell::{ShellModel, ShellState};
use corotfsi::solute::{lq_norm, SoluteSolver, StressField};

// one criterion at a time, so wall-clock budgets are not shared
static SERIAL: Mutex<()> = Mutex::new(());

fn report(id: u32, pass: bool, what: &str, detail: String, elapsed: Duration, budget: Duration) {
    let within = elapsed <= budget;
    let verdict = if pass && within { "PASS" } else { "FAIL" };
    let line = format!(
        "[{verdict}] criterion {id:>2}: {what}: {detail}; {:.2} s (budget {} s)\n",
        elapsed.as_secs_f64(),
        budget.as_secs()
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

fn verdict(id: u32, pass: bool, elapsed: Duration, budget: Duration) {
    assert!(pass, "criterion {id} failed its numerical check");
    assert!(elapsed <= budget, "criterion {id} took {elapsed:?}, budget {budget:?}");
}

fn config(text: &str) -> Config {
    parse_config(text).expect("acceptance config parses")
}

fn lock() -> std::sync::MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

#[test]
fn criterion_01_corotation_identity() {
    let _g = lock();
    let start = Instant::now();
    let line = corotation_suite(1000, 20251017);
    let el = start.elapsed();
    let budget = Duration::from_secs(1);
    report(1, line.pass, "corotation identity, 1000 pairs, n = 1..3, both variants", format!("max relative residual {:.3e} (tol 1e-12)", line.value), el, budget);
    verdict(1, line.pass, el, budget);
}

#[test]
fn criterion_02_stress_decay_constant_data() {
    let _g = lock();
    let start = Instant::now();
    let cfg = config("Nx = 64\nt_max = 4\neps = 0.5\nstress_offset = 1, 0.3, -0.5\ncadence = 100\n");
    let (tr, _) = run_config(&cfg).unwrap();
    let el = start.elapsed();
    // |T₀|_F² = 1 + 2·0.09 + 0.25 over a channel of area 2
    let norm0 = (2.0f64 * (1.0 + 2.0 * 0.09 + 0.25)).sqrt();
    let worst = tr
        .samples
        .iter()
        .map(|s| (s.norm_t_l2 / (norm0 * (-0.5 * s.t).exp()) - 1.0).abs())
        .fold(0.0, f64::max);
    let done = tr.termination == Termination::Completed && (tr.samples.last().unwrap().t - 4.0).abs() < 1e-12;
    let pass = done && worst <= 1e-8;
    let budget = Duration::from_secs(10);
    report(2, pass, "stress decay, constant data", format!("max |‖T‖/(e^(-εt)‖T₀‖) − 1| = {worst:.3e} (tol 1e-8)"), el, budget);
    verdict(2, pass, el, budget);
}

#[test]
fn criterion_03_stress_decay_general_data() {
    let _g = lock();
    let start = Instant::now();
    let cfg = config("Nx = 64\nt_max = 4\neps = 0.5\npreset = stress-bump\nstress_amplitude = 1\nstress_offset = 0.2, 0, -0.1\ncadence = 20\n");
    let (tr, _) = run_config(&cfg).unwrap();
    let el = start.elapsed();
    let n0 = tr.samples[0].norm_t_l2;
    let worst = tr
        .samples
        .iter()
        .map(|s| s.norm_t_l2 / (n0 * (-0.5 * s.t).exp()))
        .fold(0.0, f64::max);
    let pass = tr.termination == Termination::Completed && worst <= 1.0 + 2e-2;
    let budget = Duration::from_secs(30);
    report(3, pass, "stress decay, smooth non-constant data", format!("max ‖T‖/(e^(-εt)‖T₀‖) = {worst:.6} (bound 1.02)"), el, budget);
    verdict(3, pass, el, budget);
}

#[test]
fn criterion_04_lq_conservation_without_diffusion() {
    let _g = lock();
    let start = Instant::now();
    let d = ReferenceDomain::channel(128).unwrap();
    let g = d.grid();
    let mut fluid = FluidState::rest(&g);
    velocity_from_streamfunction(&g, &|x, y| 0.1 * (PI * x).sin() * (PI * y).sin().powi(2), &mut fluid);
    let t0 = StressField::from_fn(&g, |x, y| {
        let b = (-((x - 1.0).powi(2) + (y - 0.5).powi(2)) / 0.05).exp();
        Mat2::sym(1.0 + b, 0.5 * b, 0.5 - 0.3 * b)
    });
    let (dt, t_max) = (1e-3, 2.0);
    let solver = SoluteSolver::new(g, 0.0, dt).unwrap();
    let qs = [2.0, 4.0, 8.0, f64::INFINITY];
    let n0: Vec<f64> = qs.iter().map(|&q| lq_norm(&g, &t0, q, None).unwrap()).collect();
    let mut drift = [0.0f64; 4];
    let mut t = t0;
    for _ in 0..(t_max / dt).round() as usize {
        t = solver.step(&t, &fluid, None).unwrap().0;
        for (k, &q) in qs.iter().enumerate() {
            let r = lq_norm(&g, &t, q, None).unwrap() / n0[k] - 1.0;
            // the maximum may only shrink; the finite norms may move either way
            drift[k] = if q.is_infinite() { drift[k].max(r) } else { drift[k].max(r.abs()) };
        }
    }
    let el = start.elapsed();
    let per_time: Vec<f64> = drift[..3].iter().map(|d| d / t_max).collect();
    let pass = per_time.iter().all(|&d| d <= 1e-3) && drift[3] <= 1e-6;
    let budget = Duration::from_secs(60);
    report(
        4,
        pass,
        "L^q conservation at ε = 0, N = 128",
        format!(
            "drift per unit time q=2 {:.2e}, q=4 {:.2e}, q=8 {:.2e} (tol 1e-3); q=∞ growth {:.2e} (tol 1e-6)",
            per_time[0], per_time[1], per_time[2], drift[3]
        ),
        el,
        budget,
    );
    verdict(4, pass, el, budget);
}

#[test]
fn criterion_05_coupled_energy_inequality() {
    let _g = lock();
    let start = Instant::now();
    let cfg = config("Nx = 64\nt_max = 0.5\neps = 0.2\npreset = random-seeded\nseed = 11\namplitude = 0.2\nshell_amplitude = 0.03\ncadence = 50\n");
    let (tr, _) = run_config(&cfg).unwrap();
    let el = start.elapsed();
    let scale = tr.ledger.scale();
    let worst = tr.ledger.max_defect();
    let e0 = &tr.ledger.initial;
    let nonzero = e0.kinetic > 0.0 && e0.shell_elastic > 0.0 && e0.stress_source > 0.0;
    let pass = nonzero && tr.termination == Termination::Completed && tr.ledger.entries.len() == 500 && worst <= 1e-6 * scale;
    let budget = Duration::from_secs(60);
    report(
        5,
        pass,
        "coupled energy inequality, N = 64",
        format!("max per-step defect {worst:.3e} = {:.3e}·scale (tol 1e-6·scale, scale {scale:.3e})", worst / scale),
        el,
        budget,
    );
    verdict(5, pass, el, budget);
}

fn sweep(cfg: &Config, eps_list: &[f64]) -> corotfsi::analysis::SweepResult {
    eps_sweep(&SweepConfig {
        domain: cfg.domain().unwrap(),
        params: cfg.params(),
        eps_list: eps_list.to_vec(),
        t_max: cfg.t_max,
        cadence: cfg.cadence,
        initial: cfg.initial_state().unwrap(),
        parallel: true,
    })
    .unwrap()
}

const SWEEP_CFG: &str = "Nx = 64\nt_max = 1\neps = 0.2\npreset = random-seeded\nseed = 7\nstress_offset = 1, 0, 0.8\ncadence = 10\n";

#[test]
fn criterion_06_vanishing_diffusion_sweep() {
    let _g = lock();
    let start = Instant::now();
    let cfg = config(SWEEP_CFG);
    let r = sweep(&cfg, &[0.2, 0.1, 0.05, 0.025]);
    let el = start.elapsed();
    let band = |s: Option<f64>| s.is_some_and(|s| (0.7..=1.3).contains(&s));
    let pass = r.monotone_t() && r.monotone_u() && band(r.slope_t) && band(r.slope_u);
    let f = |s: Option<f64>| s.map_or("unavailable".to_string(), |s| format!("{s:.3}"));
    let dists: Vec<String> = r.rows.iter().map(|w| format!("{:.3e}/{:.3e}", w.dist_t_linf_l2, w.dist_u_linf_l2)).collect();
    let budget = Duration::from_secs(600);
    report(
        6,
        pass,
        "ε-sweep {0.2, 0.1, 0.05, 0.025}, N = 64",
        format!(
            "slope T {} u {} (band [0.7, 1.3]), monotone T {} u {}, distances T/u [{}]",
            f(r.slope_t),
            f(r.slope_u),
            r.monotone_t(),
            r.monotone_u(),
            dists.join(", ")
        ),
        el,
        budget,
    );
    verdict(6, pass, el, budget);
}

/// Report-only companion to criterion 6: the same data deeper in ε.
#[test]
fn criterion_06_report_small_eps_range() {
    let _g = lock();
    let start = Instant::now();
    let cfg = config(SWEEP_CFG);
    let r = sweep(&cfg, &[2e-3, 1e-3, 5e-4, 2.5e-4]);
    let el = start.elapsed();
    let f = |s: Option<f64>| s.map_or("unavailable".to_string(), |s| format!("{s:.3}"));
    let line = format!(
        "[INFO] criterion  6 (report only): ε-sweep {{2e-3, 1e-3, 5e-4, 2.5e-4}}: slope T {} u {}, monotone T {} u {}; {:.2} s\n",
        f(r.slope_t),
        f(r.slope_u),
        r.monotone_t(),
        r.monotone_u(),
        el.as_secs_f64()
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
}

/// `e^{−t/(2λ)} e^{tW} T₀ e^{tWᵀ}` for `W = [[0, 1], [−1, 0]]`.
fn rotating_decay(t0: &Mat2, lambda: f64, t: f64) -> Mat2 {
    let (s, c) = t.sin_cos();
    let r = Mat2::new(c, s, -s, c);
    let rt = r * *t0 * r.transpose();
    rt.scale((-t / (2.0 * lambda)).exp())
}

fn closure_error(nq: usize, dt: f64) -> f64 {
    let w = Mat2::new(0.0, 1.0, -1.0, 0.0);
    let every = ((0.01 / dt).round() as usize).max(1);
    let run = closure_run(6.0, nq, 1.0, w, 0.3, dt, 1.0, every).unwrap();
    let t0 = run[0].stress;
    let n0 = t0.frobenius();
    run.iter()
        .map(|c| (c.stress - rotating_decay(&t0, 1.0, c.t)).frobenius() / n0)
        .fold(0.0, f64::max)
}

#[test]
fn criterion_07_kinetic_closure() {
    let _g = lock();
    let start = Instant::now();
    let fine = closure_error(64, 1e-3);
    let coarse = closure_error(32, 2e-3);
    let el = start.elapsed();
    let order = (coarse / fine).log2();
    let pass = fine <= 0.02 && order >= 1.0;
    let budget = Duration::from_secs(60);
    report(
        7,
        pass,
        "kinetic closure, λ = 1, rotating W, Nq = 64, dt = 1e-3",
        format!("max Frobenius deviation {:.3}% (tol 2%); refinement order {order:.2} (need ≥ 1, coarse {:.3}%)", 100.0 * fine, 100.0 * coarse),
        el,
        budget,
    );
    verdict(7, pass, el, budget);
}

#[test]
fn criterion_08_geometry_identities() {
    let _g = lock();
    let start = Instant::now();
    let lines = geometry_suite().unwrap();
    let el = start.elapsed();
    let pass = lines.iter().all(|l| l.pass);
    let detail: Vec<String> = lines.iter().map(|l| format!("{} {:.2e}", l.name, l.value)).collect();
    let budget = Duration::from_secs(10);
    report(8, pass, "geometry identities", detail.join("; "), el, budget);
    verdict(8, pass, el, budget);
}

/// `y(t)` for `ÿ + cẏ + ω²y = 0`, `y(0) = y0`, `ẏ(0) = v0`, via the characteristic roots.
fn oscillator(c: f64, w2: f64, y0: f64, v0: f64, t: f64) -> f64 {
    let mu = 0.5 * c;
    let disc = mu * mu - w2;
    if disc < 0.0 {
        let wd = (-disc).sqrt();
        (-mu * t).exp() * (y0 * (wd * t).cos() + (v0 + mu * y0) / wd * (wd * t).sin())
    } else {
        let (r1, r2) = (-mu + disc.sqrt(), -mu - disc.sqrt());
        let a = (v0 - r2 * y0) / (r1 - r2);
        a * (r1 * t).exp() + (y0 - a) * (r2 * t).exp()
    }
}

#[test]
fn criterion_09_shell_modal_oracle() {
    let _g = lock();
    let start = Instant::now();
    let (n, lx, dt, steps) = (64, 2.0, 1e-3, 10_000);
    let x: Vec<f64> = (0..n).map(|i| lx * i as f64 / n as f64).collect();
    let mut worst = 0.0f64;
    // (γ, mode, amplitude, initial velocity): weakly damped, moderately damped, overdamped
    for (gamma, m, a, v) in [(0.02, 1, 0.05, 0.1), (1.0, 2, 0.02, -0.3), (3.0, 1, 0.05, 0.0)] {
        let model = ShellModel::new(n, lx, gamma, 0.4);
        let k = 2.0 * PI * m as f64 / lx;
        let (c, w2) = (gamma * k * k, k.powi(4));
        let mut s = ShellState::rest(n);
        s.eta = x.iter().map(|&x| a * (k * x).cos()).collect();
        s.eta_dot = x.iter().map(|&x| v * (k * x).cos()).collect();
        let g = vec![0.0; n];
        for step in 1..=steps {
            s = model.step(&s, &g, dt).unwrap();
            let y = oscillator(c, w2, a, v, step as f64 * dt);
            let e = s.eta.iter().zip(&x).map(|(e, &x)| (e - y * (k * x).cos()).abs()).fold(0.0, f64::max);
            worst = worst.max(e / a);
        }
    }
    let el = start.elapsed();
    let pass = worst <= 1e-10;
    let budget = Duration::from_secs(5);
    report(9, pass, "shell modal oracle, 3 modes × 10⁴ steps", format!("max error / amplitude {worst:.3e} (tol 1e-10)"), el, budget);
    verdict(9, pass, el, budget);
}

#[test]
fn criterion_10_report_velocity_envelopes() {
    let _g = lock();
    let start = Instant::now();
    let cfg = config("Nx = 64\nt_max = 1\neps = 0.5\npreset = random-seeded\nseed = 3\ncadence = 20\n");
    let (tr, range) = run_config(&cfg).unwrap();
    let pc = estimate_poincare_constants(&cfg.domain().unwrap(), &range);
    let rep = DecayReport::build(&tr.samples, &cfg.params(), pc, 2e-2, cfg.fit_from).unwrap();
    let el = start.elapsed();
    let all = |v: &[bool]| v.iter().all(|&p| p);
    let yn = |p: bool| if p { "pass" } else { "fail" };
    let line = format!(
        "[INFO] criterion 10 (report only): ∂ₜη envelope {}, u envelope {}, stress envelope {}; c₁ = {:.4}, c₂ = {:.4}, inf|Ω_η| = {:.4}, area hypothesis {}; {:.2} s\n",
        yn(all(&rep.pass_etadot)),
        yn(all(&rep.pass_u)),
        yn(rep.stress_passes()),
        pc.c1,
        pc.c2,
        rep.envelopes.inf_area,
        if rep.hypothesis_ok { "holds" } else { "violated" },
        el.as_secs_f64()
    );
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    // only the evaluation itself is required
    assert_eq!(rep.env_u.len(), tr.samples.len());
    assert!(rep.env_etadot.iter().chain(&rep.env_u).all(|v| v.is_finite()));
}
