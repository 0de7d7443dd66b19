//! Subcommand implementations behind the `corotfsi` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{corotation_identity_residual, Mat2, PowerOf};
use crate::analysis::{eps_sweep, estimate_poincare_constants, DecayReport, MetricRange, SweepConfig, SweepResult};
use crate::config::Config;
use crate::coupling::{run_trajectory, Coupler, Sample, Termination, Trajectory};
use crate::error::{Error, Result};
use crate::fluid::{FluidSolver, FluidState};
use crate::geometry::{hanzawa_forward, hanzawa_inverse, piola_matrices, BoundaryProfile, HanzawaMap, ReferenceDomain};
use crate::io::{fmt_f64, write_csv};
use crate::kinetic::{closure_residual, kinetic_trajectory, maxwellian_grid, ClosureSample, KineticState};
use crate::solute::{SoluteSolver, StressField};

#[derive(Clone, Debug, PartialEq)]
pub struct CheckLine {
    pub name: String,
    pub value: f64,
    pub tol: f64,
    pub pass: bool,
}

impl CheckLine {
    fn new(name: &str, value: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            value,
            tol,
            pass: value <= tol,
        }
    }

    fn flag(name: &str, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 0.0 } else { 1.0 },
            tol: 0.0,
            pass: ok,
        }
    }
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} {} value={:e} tol={:e}", if self.pass { "PASS" } else { "FAIL" }, self.name, self.value, self.tol)
    }
}

/// Largest relative residual of the corotational cancellation over random
/// `(G, Z)`, `n ∈ {1, 2, 3}`, both power variants.
pub fn corotation_suite(samples: usize, seed: u64) -> CheckLine {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let m = |rng: &mut ChaCha8Rng| Mat2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    for _ in 0..samples {
        let g = m(&mut rng).scale(10f64.powf(rng.gen_range(-2.0..2.0)));
        let z = m(&mut rng).scale(10f64.powf(rng.gen_range(-2.0..2.0)));
        for n in 1..=3 {
            for v in [PowerOf::Z, PowerOf::ZTranspose] {
                let r = corotation_identity_residual(&g, &z, n, v);
                let scale = g.frobenius() * z.frobenius().powi(n as i32 + 1);
                if scale > 0.0 {
                    worst = worst.max(r.abs() / scale);
                }
            }
        }
    }
    CheckLine::new("corotation identity (relative)", worst, 1e-12)
}

/// Map identities on a wavy profile plus the identity-map reduction of the
/// fluid and solute steppers.
pub fn geometry_suite() -> Result<Vec<CheckLine>> {
    let d = ReferenceDomain::channel(32)?;
    let g = d.grid();
    let pi = std::f64::consts::PI;
    let eta_v: Vec<f64> = g.shell_nodes().iter().map(|&x| 0.06 * (pi * x).sin() + 0.03 * (2.0 * pi * x).cos()).collect();
    let eta = BoundaryProfile::new(eta_v.clone(), d.lx);
    let (mut rt, mut a_err, mut det_err, mut jmin) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for j in 0..=40 {
        for i in 0..40 {
            let x = [i as f64 * d.lx / 40.0, j as f64 * d.ly / 40.0];
            let y = hanzawa_inverse(&d, &eta, hanzawa_forward(&d, &eta, x)?)?;
            rt = rt.max((y[0] - x[0]).abs().max((y[1] - x[1]).abs()));
            let (b, a) = piola_matrices(&d, &eta, x)?;
            let (_, jac) = crate::geometry::hanzawa_jacobian(&d, &eta, x)?;
            jmin = jmin.min(jac);
            a_err = a_err.max((a - (b * b.transpose()).scale(1.0 / jac)).frobenius());
            det_err = det_err.max((b.det() - jac).abs());
        }
    }
    let too_big = BoundaryProfile::new(vec![d.half_width; g.nx], d.lx);
    let guard = matches!(hanzawa_forward(&d, &too_big, [0.5, 0.9]), Err(Error::Degeneracy { .. }));

    let id = HanzawaMap::identity(&d, 0.0)?;
    let mut fl = FluidState::rest(&g);
    fl.u = g.sample_u(|x, y| 0.3 * (pi * x).cos() * (pi * y).sin());
    fl.v = g.sample_v(|x, y| 0.2 * (pi * x).sin() * (pi * y).sin());
    let t = StressField::from_fn(&g, |x, y| Mat2::sym((pi * x).sin() * y, 0.1 * x, (2.0 * pi * y).cos()));
    let fs = FluidSolver::new(g, 1.0, 1e-3)?;
    let top = vec![0.0; g.nx];
    let fluid_same = fs.step(&fl, &t, None, &top)?.0 == fs.step(&fl, &t, Some(&id), &top)?.0;
    let mut solute_same = true;
    for eps in [0.0, 0.3] {
        let s = SoluteSolver::new(g, eps, 1e-2)?;
        solute_same &= s.step(&t, &fl, None)?.0 == s.step(&t, &fl, Some(&id))?.0;
    }
    Ok(vec![
        CheckLine::new("Hanzawa round trip", rt, 1e-10),
        CheckLine::new("J > 0 on admissible profile", if jmin > 0.0 { 0.0 } else { 1.0 }, 0.0),
        CheckLine::flag("degeneracy guard at ‖η‖∞ = L", guard),
        CheckLine::new("A = BBᵀ/J", a_err, 1e-12),
        CheckLine::new("det B = J", det_err, 1e-12),
        CheckLine::flag("identity-map fluid step bitwise", fluid_same),
        CheckLine::flag("identity-map solute step bitwise", solute_same),
    ])
}

pub fn self_check() -> Result<Vec<CheckLine>> {
    let mut v = vec![corotation_suite(1000, 20240611)];
    v.extend(geometry_suite()?);
    Ok(v)
}

/// `error kind=<class> exit=<code> message=<text>` on one line.
pub fn error_line(e: &Error) -> String {
    format!("error kind={} exit={} message={}", e.kind(), e.exit_code(), e.to_string().replace('\n', " "))
}

fn out_path(cfg: &Config, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.output_dir)?;
    Ok(cfg.output_dir.join(name))
}

fn sample_row(s: &Sample) -> Vec<String> {
    s.values().iter().map(|&v| fmt_f64(v)).collect()
}

fn degenerate(tr: &Trajectory) -> Result<()> {
    match &tr.termination {
        Termination::Completed => Ok(()),
        Termination::Degenerate { time, detail } => Err(Error::Degeneracy {
            time: *time,
            detail: detail.clone(),
        }),
    }
}

/// Runs one trajectory and returns it with the metric extremes it visited.
pub fn run_config(cfg: &Config) -> Result<(Trajectory, MetricRange)> {
    let coupler = Coupler::new(cfg.domain()?, cfg.params())?;
    let init = cfg.initial_state()?;
    let mut range = MetricRange::of(&init.map);
    let tr = run_trajectory(&coupler, init, cfg.t_max, cfg.cadence, |s, _| range = range.merge(&MetricRange::of(&s.map)))?;
    Ok((tr, range))
}

/// `simulate`: writes `timeseries.csv`.
pub fn simulate(cfg: &Config) -> Result<(Trajectory, PathBuf)> {
    let (tr, _) = run_config(cfg)?;
    let path = out_path(cfg, "timeseries.csv")?;
    let rows: Vec<Vec<String>> = tr.samples.iter().map(sample_row).collect();
    write_csv(&path, &cfg.echo(), &Sample::COLUMNS, &rows)?;
    degenerate(&tr)?;
    Ok((tr, path))
}

pub const DECAY_EXTRA: [&str; 6] = ["env_T", "env_etadot", "env_u", "pass_T", "pass_etadot", "pass_u"];

/// `decay`: trajectory, envelopes and rate fits; writes `decay.csv` and
/// `decay_verdict.txt`. Fails with an acceptance error if the stress
/// envelope is violated.
pub fn decay(cfg: &Config) -> Result<(DecayReport, PathBuf)> {
    let (tr, range) = run_config(cfg)?;
    let pc = estimate_poincare_constants(&cfg.domain()?, &range);
    let rep = DecayReport::build(&tr.samples, &cfg.params(), pc, cfg.decay_tol, cfg.fit_from)?;
    let mut header: Vec<&str> = Sample::COLUMNS.to_vec();
    header.extend(DECAY_EXTRA);
    let b = |p: bool| if p { "1".to_string() } else { "0".to_string() };
    let rows: Vec<Vec<String>> = rep
        .samples
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut r = sample_row(s);
            r.extend([
                fmt_f64(rep.env_t[k]),
                fmt_f64(rep.env_etadot[k]),
                fmt_f64(rep.env_u[k]),
                b(rep.pass_t[k]),
                b(rep.pass_etadot[k]),
                b(rep.pass_u[k]),
            ]);
            r
        })
        .collect();
    let path = out_path(cfg, "decay.csv")?;
    write_csv(&path, &cfg.echo(), &header, &rows)?;
    fs::write(out_path(cfg, "decay_verdict.txt")?, decay_verdict(&rep))?;
    degenerate(&tr)?;
    if !rep.stress_passes() {
        let k = rep.pass_t.iter().position(|p| !p).unwrap_or(0);
        return Err(Error::Acceptance(format!(
            "stress norm {} exceeds envelope {} at t = {}",
            rep.samples[k].norm_t_l2, rep.env_t[k], rep.samples[k].t
        )));
    }
    Ok((rep, path))
}

pub fn decay_verdict(rep: &DecayReport) -> String {
    let mut s = String::new();
    let p = &rep.poincare;
    let e = &rep.envelopes;
    let all = |v: &[bool]| if v.iter().all(|&x| x) { "PASS" } else { "FAIL" };
    let rate = |r: &Option<crate::analysis::RateFit>| match r {
        Some(f) => format!("{:.6e} (R² = {:.6})", f.rate, f.r_squared),
        None => "unavailable".into(),
    };
    let _ = writeln!(s, "c1 = {:.12e}", p.c1);
    let _ = writeln!(s, "c2 = {:.12e} (deformed-domain interval [{:.6e}, {:.6e}], grid value {:.6e})", p.c2, p.c2_lo, p.c2_hi, p.c2_grid);
    let _ = writeln!(s, "inf area J = {:.12e}", e.inf_area);
    let _ = writeln!(s, "area hypothesis (|Ω| never equal to 1): {}", if rep.hypothesis_ok { "holds" } else { "violated" });
    let _ = writeln!(s, "stress envelope (gating, tol {:e}): {}", rep.tolerance, all(&rep.pass_t));
    let _ = writeln!(s, "shell velocity envelope (diagnostic): {}", all(&rep.pass_etadot));
    let _ = writeln!(s, "velocity envelope (diagnostic): {}", all(&rep.pass_u));
    let _ = writeln!(s, "stress rate: measured {}, predicted {:.6e}", rate(&rep.rate_t), e.eps);
    let _ = writeln!(s, "shell velocity rate: measured {}, predicted {:.6e}", rate(&rep.rate_etadot), e.c1 * e.gamma);
    let _ = writeln!(s, "velocity rate: measured {}, predicted {:.6e}", rate(&rep.rate_u), e.u_rate());
    s
}

pub const SWEEP_COLUMNS: [&str; 7] = ["eps", "dist_T_LinfL2", "dist_u_LinfL2", "dist_gradu_L2L2", "dist_eta_W22", "slope_T", "slope_u"];

/// `sweep-eps`: writes `sweep.csv`; slopes sit on the last row, `NA` when
/// they cannot be fitted.
pub fn sweep_eps(cfg: &Config, eps_list: &[f64]) -> Result<(SweepResult, PathBuf)> {
    let sc = SweepConfig {
        domain: cfg.domain()?,
        params: cfg.params(),
        eps_list: eps_list.to_vec(),
        t_max: cfg.t_max,
        cadence: cfg.cadence,
        initial: cfg.initial_state()?,
        parallel: cfg.parallel,
    };
    let r = eps_sweep(&sc)?;
    let na = |s: Option<f64>| s.map(fmt_f64).unwrap_or_else(|| "NA".into());
    let n = r.rows.len();
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .enumerate()
        .map(|(k, w)| {
            let last = k + 1 == n;
            vec![
                fmt_f64(w.eps),
                fmt_f64(w.dist_t_linf_l2),
                fmt_f64(w.dist_u_linf_l2),
                fmt_f64(w.dist_gradu_l2l2),
                fmt_f64(w.dist_eta_w22),
                if last { na(r.slope_t) } else { String::new() },
                if last { na(r.slope_u) } else { String::new() },
            ]
        })
        .collect();
    let path = out_path(cfg, "sweep.csv")?;
    write_csv(&path, &cfg.echo(), &SWEEP_COLUMNS, &rows)?;
    Ok((r, path))
}

pub const CLOSURE_COLUMNS: [&str; 8] = ["t", "res_frob_rel", "T11", "T12", "T22", "oracle_T11", "oracle_T12", "oracle_T22"];

/// Kinetic closure run from a Gaussian whose covariance is `σ²𝕀 + diag(δ, −δ)`.
pub fn closure_run(r_q: f64, nq: usize, lambda: f64, w: Mat2, delta: f64, dt: f64, horizon: f64, every: usize) -> Result<Vec<ClosureSample>> {
    let q = Arc::new(maxwellian_grid(r_q, nq)?);
    let s2 = q.sigma2;
    let s0 = KineticState::gaussian(q, 1.0, &Mat2::sym(s2 + delta, 0.0, s2 - delta), lambda, w)?;
    let (ts, ms, _) = kinetic_trajectory(&s0, dt, horizon, every)?;
    closure_residual(&ts, &ms, &w, lambda)
}

/// `closure-check`: writes `closure.csv`; fails if the kinetic moments leave
/// the closed-form solution by more than 2%.
pub fn closure_check(cfg: &Config) -> Result<(Vec<ClosureSample>, PathBuf)> {
    if !cfg.lambda.is_finite() {
        return Err(Error::Config("closure check needs a finite λ (ε > 0)".into()));
    }
    let r = closure_run(cfg.r_q, cfg.nq, cfg.lambda, cfg.kinetic_w(), cfg.kinetic_delta, cfg.kinetic_dt, cfg.t_max, cfg.kinetic_every)?;
    let rows: Vec<Vec<String>> = r
        .iter()
        .map(|c| {
            [c.t, c.res_frob_rel, c.stress.get(0, 0), c.stress.get(0, 1), c.stress.get(1, 1), c.oracle.get(0, 0), c.oracle.get(0, 1), c.oracle.get(1, 1)]
                .iter()
                .map(|&v| fmt_f64(v))
                .collect()
        })
        .collect();
    let path = out_path(cfg, "closure.csv")?;
    write_csv(&path, &cfg.echo(), &CLOSURE_COLUMNS, &rows)?;
    if let Some(c) = r.iter().find(|c| c.oracle_rel > 0.02) {
        return Err(Error::Acceptance(format!("kinetic stress leaves the closed form by {:.3}% at t = {}", 100.0 * c.oracle_rel, c.t)));
    }
    Ok((r, path))
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<Config> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    crate::config::parse_config(&text)
}
