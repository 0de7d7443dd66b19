//! Plain-text run configuration: `key = value` lines, `#` comments.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::Mat2;
use crate::coupling::{CoupledState, Params};
use crate::error::{Error, Result};
use crate::fluid::{FluidSolver, FluidState};
use crate::geometry::{HanzawaMap, ReferenceDomain};
use crate::grid::Grid;
use crate::shell::ShellState;
use crate::solute::StressField;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Rest,
    ShearMode,
    ShellMode,
    StressBump,
    RandomSeeded,
}

impl Preset {
    pub fn name(&self) -> &'static str {
        match self {
            Preset::Rest => "rest",
            Preset::ShearMode => "shear-mode",
            Preset::ShellMode => "shell-mode",
            Preset::StressBump => "stress-bump",
            Preset::RandomSeeded => "random-seeded",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "rest" => Preset::Rest,
            "shear-mode" => Preset::ShearMode,
            "shell-mode" => Preset::ShellMode,
            "stress-bump" => Preset::StressBump,
            "random-seeded" => Preset::RandomSeeded,
            _ => {
                return Err(Error::Config(format!(
                    "unknown preset `{s}` (expected rest, shear-mode, shell-mode, stress-bump or random-seeded)"
                )))
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub lx: f64,
    pub ly: f64,
    pub half_width: f64,
    pub nx: usize,
    pub ny: usize,

    pub nu: f64,
    pub gamma: f64,
    pub eps: f64,
    /// `1/(2ε)`, infinite at `ε = 0`
    pub lambda: f64,
    pub r_q: f64,
    pub nq: usize,
    /// kinetic surrogate `W = [[0, ω], [−ω, 0]]`
    pub omega: f64,

    pub dt: f64,
    pub t_max: f64,
    pub min_iterations: usize,
    pub max_iterations: usize,
    pub interface_tol: f64,
    pub cadence: usize,
    pub decay_tol: f64,
    pub fit_from: f64,
    pub kinetic_dt: f64,
    pub kinetic_every: usize,
    pub kinetic_delta: f64,
    pub eps_list: Vec<f64>,
    pub parallel: bool,

    pub preset: Preset,
    pub seed: u64,
    pub amplitude: f64,
    pub shell_amplitude: f64,
    pub stress_amplitude: f64,
    pub stress_offset: [f64; 3],

    pub output_dir: PathBuf,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            lx: 2.0,
            ly: 1.0,
            half_width: 0.4,
            nx: 64,
            ny: 32,
            nu: 1.0,
            gamma: 1.0,
            eps: 0.1,
            lambda: 5.0,
            r_q: 6.0,
            nq: 64,
            omega: 1.0,
            dt: 1e-3,
            t_max: 1.0,
            min_iterations: 2,
            max_iterations: 50,
            interface_tol: 1e-6,
            cadence: 10,
            decay_tol: 2e-2,
            fit_from: 0.0,
            kinetic_dt: 1e-3,
            kinetic_every: 10,
            kinetic_delta: 0.3,
            eps_list: vec![0.2, 0.1, 0.05, 0.025],
            parallel: false,
            preset: Preset::Rest,
            seed: 0,
            amplitude: 0.1,
            shell_amplitude: 0.02,
            stress_amplitude: 0.5,
            stress_offset: [0.0; 3],
            output_dir: PathBuf::from("."),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn list(key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| num::<f64>(key, s))
        .collect()
}

/// Splits a line into `key = value` pairs; `a = 1, b = 2` holds two pairs,
/// while `eps_list = 0.2, 0.1` holds one.
fn pairs(line: &str) -> Vec<String> {
    let parts: Vec<&str> = line.split(',').collect();
    if parts.len() > 1 && parts.iter().all(|p| p.contains('=')) {
        parts.into_iter().map(str::to_string).collect()
    } else {
        vec![line.to_string()]
    }
}

/// Parses and validates a configuration. Unknown keys, duplicates, a
/// missing `Nx`/`t_max`, and giving both or neither of `eps`/`lambda` are errors.
pub fn parse_config(text: &str) -> Result<Config> {
    let mut c = Config::default();
    let mut seen: Vec<String> = Vec::new();
    let (mut eps, mut lambda, mut ny, mut n_omega) = (None, None, None, None);
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        for pair in pairs(line) {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{}`", lineno + 1, raw.trim())))?;
            let (k, v) = (k.trim(), v.trim());
            if seen.iter().any(|s| s == k) {
                return Err(Error::Config(format!("line {}: `{k}` given twice", lineno + 1)));
            }
            seen.push(k.to_string());
            match k {
                "Lx" => c.lx = num(k, v)?,
                "Ly" => c.ly = num(k, v)?,
                "L" => c.half_width = num(k, v)?,
                "Nx" => c.nx = num(k, v)?,
                "Ny" => ny = Some(num(k, v)?),
                "N_omega" => n_omega = Some(num::<usize>(k, v)?),
                "nu" => c.nu = num(k, v)?,
                "gamma" => c.gamma = num(k, v)?,
                "eps" => eps = Some(num::<f64>(k, v)?),
                "lambda" => lambda = Some(num::<f64>(k, v)?),
                "R_q" => c.r_q = num(k, v)?,
                "Nq" => c.nq = num(k, v)?,
                "omega" => c.omega = num(k, v)?,
                "dt" => c.dt = num(k, v)?,
                "t_max" => c.t_max = num(k, v)?,
                "min_iterations" => c.min_iterations = num(k, v)?,
                "max_iterations" => c.max_iterations = num(k, v)?,
                "interface_tol" => c.interface_tol = num(k, v)?,
                "cadence" => c.cadence = num(k, v)?,
                "decay_tol" => c.decay_tol = num(k, v)?,
                "fit_from" => c.fit_from = num(k, v)?,
                "kinetic_dt" => c.kinetic_dt = num(k, v)?,
                "kinetic_every" => c.kinetic_every = num(k, v)?,
                "kinetic_delta" => c.kinetic_delta = num(k, v)?,
                "eps_list" => c.eps_list = list(k, v)?,
                "parallel" => c.parallel = num(k, v)?,
                "preset" => c.preset = Preset::parse(v)?,
                "seed" => c.seed = num(k, v)?,
                "amplitude" => c.amplitude = num(k, v)?,
                "shell_amplitude" => c.shell_amplitude = num(k, v)?,
                "stress_amplitude" => c.stress_amplitude = num(k, v)?,
                "stress_offset" => {
                    let l = list(k, v)?;
                    c.stress_offset = l
                        .try_into()
                        .map_err(|_| Error::Config("`stress_offset` needs three values T11, T12, T22".into()))?;
                }
                "output_dir" => c.output_dir = PathBuf::from(v),
                _ => return Err(Error::Config(format!("line {}: unknown key `{k}`", lineno + 1))),
            }
        }
    }
    for req in ["Nx", "t_max"] {
        if !seen.iter().any(|s| s == req) {
            return Err(Error::Config(format!("missing required key `{req}`")));
        }
    }
    (c.eps, c.lambda) = match (eps, lambda) {
        (Some(_), Some(_)) => return Err(Error::Config("give exactly one of `eps` and `lambda`, not both".into())),
        (None, None) => return Err(Error::Config("missing `eps` or `lambda`".into())),
        (Some(e), None) => {
            if !(e >= 0.0 && e.is_finite()) {
                return Err(Error::Config(format!("`eps` must be finite and ≥ 0, got {e}")));
            }
            (e, if e == 0.0 { f64::INFINITY } else { 1.0 / (2.0 * e) })
        }
        (None, Some(l)) => {
            if !(l > 0.0) {
                return Err(Error::Config(format!("`lambda` must be positive, got {l}")));
            }
            (1.0 / (2.0 * l), l)
        }
    };
    c.ny = match ny {
        Some(n) => n,
        None => ((c.nx as f64) * c.ly / c.lx).round() as usize,
    };
    if let Some(n) = n_omega {
        if n != c.nx {
            return Err(Error::Config(format!("`N_omega` = {n} must equal `Nx` = {}", c.nx)));
        }
    }
    c.validate()?;
    Ok(c)
}

impl Config {
    pub fn validate(&self) -> Result<()> {
        self.domain()?;
        self.params().validate()?;
        let pos = |k: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("`{k}` must be positive, got {v}")))
            }
        };
        pos("decay_tol", self.decay_tol)?;
        pos("kinetic_dt", self.kinetic_dt)?;
        pos("R_q", self.r_q)?;
        if !(self.t_max >= 0.0 && self.t_max.is_finite()) {
            return Err(Error::Config(format!("`t_max` must be ≥ 0, got {}", self.t_max)));
        }
        if self.cadence == 0 || self.kinetic_every == 0 {
            return Err(Error::Config("cadences must be at least 1".into()));
        }
        if self.nq < 16 {
            return Err(Error::Config(format!("`Nq` must be at least 16, got {}", self.nq)));
        }
        if !(self.kinetic_delta.abs() < 1.0) {
            return Err(Error::Config(format!("`kinetic_delta` must lie in (−1, 1), got {}", self.kinetic_delta)));
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::Config("`eps_list` entries must be positive".into()));
        }
        Ok(())
    }

    pub fn domain(&self) -> Result<ReferenceDomain> {
        ReferenceDomain::new(self.lx, self.ly, self.half_width, self.nx, self.ny)
    }

    pub fn params(&self) -> Params {
        Params {
            nu: self.nu,
            gamma: self.gamma,
            eps: self.eps,
            dt: self.dt,
            min_iterations: self.min_iterations,
            max_iterations: self.max_iterations,
            interface_tol: self.interface_tol,
        }
    }

    pub fn kinetic_w(&self) -> Mat2 {
        Mat2::new(0.0, self.omega, -self.omega, 0.0)
    }

    /// A config file that parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let f3 = |a: &[f64]| a.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "Lx = {:?}\nLy = {:?}\nL = {:?}\nNx = {}\nNy = {}", self.lx, self.ly, self.half_width, self.nx, self.ny);
        let _ = writeln!(s, "nu = {:?}\ngamma = {:?}\neps = {:?}", self.nu, self.gamma, self.eps);
        let _ = writeln!(s, "R_q = {:?}\nNq = {}\nomega = {:?}", self.r_q, self.nq, self.omega);
        let _ = writeln!(s, "dt = {:?}\nt_max = {:?}", self.dt, self.t_max);
        let _ = writeln!(
            s,
            "min_iterations = {}\nmax_iterations = {}\ninterface_tol = {:?}\ncadence = {}",
            self.min_iterations, self.max_iterations, self.interface_tol, self.cadence
        );
        let _ = writeln!(s, "decay_tol = {:?}\nfit_from = {:?}", self.decay_tol, self.fit_from);
        let _ = writeln!(
            s,
            "kinetic_dt = {:?}\nkinetic_every = {}\nkinetic_delta = {:?}",
            self.kinetic_dt, self.kinetic_every, self.kinetic_delta
        );
        let _ = writeln!(s, "eps_list = {}\nparallel = {}", f3(&self.eps_list), self.parallel);
        let _ = writeln!(s, "preset = {}\nseed = {}", self.preset.name(), self.seed);
        let _ = writeln!(
            s,
            "amplitude = {:?}\nshell_amplitude = {:?}\nstress_amplitude = {:?}\nstress_offset = {}",
            self.amplitude,
            self.shell_amplitude,
            self.stress_amplitude,
            f3(&self.stress_offset)
        );
        let _ = writeln!(s, "output_dir = {}", self.output_dir.display());
        s
    }

    /// The resolved config as `# `-prefixed lines, derived values included.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        for line in self.to_text().lines() {
            let _ = writeln!(s, "# {line}");
        }
        let _ = writeln!(s, "# lambda (derived) = {:?}", self.lambda);
        s
    }

    /// Initial coupled state for the configured preset, with the velocity
    /// projected onto the discretely divergence-free fields of the initial map.
    pub fn initial_state(&self) -> Result<CoupledState> {
        let d = self.domain()?;
        let g = d.grid();
        let mut shell = ShellState::rest(g.nx);
        let mut fluid = FluidState::rest(&g);
        let off = Mat2::sym(self.stress_offset[0], self.stress_offset[1], self.stress_offset[2]);
        let mut stress = StressField::constant(&g, &off);
        let (lx, ly) = (self.lx, self.ly);
        let kx = 2.0 * PI / lx;
        match self.preset {
            Preset::Rest => {}
            Preset::ShearMode => {
                let a = self.amplitude;
                fluid.u = g.sample_u(|_, y| a * (PI * y / ly).sin());
            }
            Preset::ShellMode => {
                let a = self.shell_amplitude;
                shell.eta = g.shell_nodes().iter().map(|&x| a * (kx * x).cos()).collect();
            }
            Preset::StressBump => {
                let a = self.stress_amplitude;
                let w2 = (0.15 * ly).powi(2);
                stress = StressField::from_fn(&g, |x, y| {
                    let b = a * (-((x - 0.5 * lx).powi(2) + (y - 0.5 * ly).powi(2)) / w2).exp();
                    off + Mat2::sym(b, 0.5 * b, -0.3 * b)
                });
            }
            Preset::RandomSeeded => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                let mut coef = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect() };
                let (cp, ce, ct) = (coef(6), coef(6), coef(18));
                let a = self.amplitude;
                let psi = move |x: f64, y: f64| {
                    let env = (PI * y / ly).sin().powi(2);
                    a * env * (0..3).map(|k| cp[2 * k] * (k as f64 * kx * x).cos() + cp[2 * k + 1] * ((k + 1) as f64 * kx * x).sin()).sum::<f64>()
                };
                velocity_from_streamfunction(&g, &psi, &mut fluid);
                let sa = self.shell_amplitude;
                shell.eta = g
                    .shell_nodes()
                    .iter()
                    .map(|&x| {
                        sa * (1..=3)
                            .map(|k| (ce[2 * k - 2] * (k as f64 * kx * x).cos() + ce[2 * k - 1] * (k as f64 * kx * x).sin()) / (k * k) as f64)
                            .sum::<f64>()
                            / 1.5
                    })
                    .collect();
                let ta = self.stress_amplitude;
                stress = StressField::from_fn(&g, |x, y| {
                    let mode = |c: &[f64]| {
                        c[0] + c[1] * (kx * x).cos() * (PI * y / ly).cos() + c[2] * (kx * x).sin() + c[3] * (PI * y / ly).cos() + c[4] * (2.0 * kx * x).cos() + c[5] * (kx * x).sin() * (PI * y / ly).cos()
                    };
                    off + Mat2::sym(ta * mode(&ct[0..6]) / 3.0, ta * mode(&ct[6..12]) / 3.0, ta * mode(&ct[12..18]) / 3.0)
                });
            }
        }
        stress.eps = self.eps;
        let sup = shell.sup_eta();
        if sup >= self.half_width {
            return Err(Error::Config(format!("initial ‖η‖∞ = {sup} reaches L = {}", self.half_width)));
        }
        let map = HanzawaMap::new(&d, &shell.eta, &shell.eta_dot, 0.0)?;
        if fluid.u.iter().chain(&fluid.v).any(|&x| x != 0.0) {
            let solver = FluidSolver::new(g, self.nu, self.dt)?;
            let (u, v, _) = solver.project(fluid.u, fluid.v, if map.is_identity() { None } else { Some(&map) })?;
            fluid.u = u;
            fluid.v = v;
        }
        CoupledState::new(&d, shell, fluid, stress)
    }
}

/// Face velocities `(∂_y ψ, −∂_x ψ)` by differences of corner values; exactly
/// divergence-free on the reference grid. `ψ` must vanish with its normal
/// derivative on the walls.
pub fn velocity_from_streamfunction(g: &Grid, psi: &dyn Fn(f64, f64) -> f64, fluid: &mut FluidState) {
    for j in 0..g.ny {
        for i in 0..g.nx {
            fluid.u[g.idx(i, j)] = (psi(g.xf(i), g.yf(j + 1)) - psi(g.xf(i), g.yf(j))) / g.hy;
        }
    }
    for j in 0..=g.ny {
        for i in 0..g.nx {
            fluid.v[g.idx(i, j)] = -(psi(g.xf(i + 1), g.yf(j)) - psi(g.xf(i), g.yf(j))) / g.hx;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = "Nx = 16\nt_max = 0.1\neps = 0.1\n";

    #[test]
    fn minimal_file_gets_defaults() {
        let c = parse_config(MIN).unwrap();
        assert_eq!((c.nx, c.ny, c.lx, c.ly), (16, 8, 2.0, 1.0));
        assert_eq!(c.lambda, 5.0);
        assert_eq!(c.preset, Preset::Rest);
        let l = parse_config("Nx = 16\nt_max = 1\nlambda = 2 # comment\n").unwrap();
        assert_eq!(l.eps, 0.25);
        assert_eq!(parse_config("Nx = 16\nt_max = 1\neps = 0\n").unwrap().lambda, f64::INFINITY);
    }

    #[test]
    fn rejects_bad_files() {
        let bad = [
            "Nx = 16\nt_max = 1\neps = 0.1\nlambda = 5\n",
            "Nx = 16\nt_max = 1\n",
            "t_max = 1\neps = 0.1\n",
            "Nx = 16\nt_max = 1\neps = 0.1\nLx = 1, Ly = 1\n",
            "Nx = 16\nt_max = 1\neps = 0.1\nepsilon = 3\n",
            "Nx = 16\nt_max = 1\neps = 0.1\nNx = 32\n",
            "Nx = 16\nt_max = 1\neps = 0.1\ndt = -1\n",
            "Nx = 16\nt_max = 1\neps = 0.1\ninterface_tol = 0\n",
            "Nx = 16\nt_max = 1\neps = 0.1\npreset = vortex\n",
            "Nx = 16\nt_max = 1\neps = 0.1\nN_omega = 8\n",
            "Nx = sixteen\nt_max = 1\neps = 0.1\n",
        ];
        for b in bad {
            let e = parse_config(b).unwrap_err();
            assert_eq!(e.exit_code(), 2, "{b}: {e}");
        }
    }

    #[test]
    fn text_round_trip() {
        let c = parse_config("Nx = 16\nt_max = 0.3\nlambda = 3\npreset = random-seeded\nseed = 7\nstress_offset = 1, 0.1, 1\neps_list = 0.2, 0.1\n").unwrap();
        let back = parse_config(&c.to_text()).unwrap();
        assert_eq!(back.eps, c.eps);
        assert_eq!(back.to_text(), c.to_text());
        assert!(c.echo().lines().all(|l| l.starts_with("# ")));
    }

    #[test]
    fn presets_build_admissible_states() {
        for p in ["rest", "shear-mode", "shell-mode", "stress-bump", "random-seeded"] {
            let c = parse_config(&format!("{MIN}preset = {p}\nseed = 3\n")).unwrap();
            let s = c.initial_state().unwrap();
            assert!(s.shell.sup_eta() < c.half_width);
            assert!(s.fluid.u.iter().all(|x| x.is_finite()));
        }
        let c = parse_config(&format!("{MIN}preset = random-seeded\nseed = 3\n")).unwrap();
        let (a, b) = (c.initial_state().unwrap(), c.initial_state().unwrap());
        assert_eq!(a.fluid.u, b.fluid.u);
        let c2 = parse_config(&format!("{MIN}preset = random-seeded\nseed = 4\n")).unwrap();
        assert_ne!(c2.initial_state().unwrap().fluid.u, a.fluid.u);
    }
}
