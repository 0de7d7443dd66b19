//! Partitioned stepper for shell, solvent and solute, with the energy ledger.
//!
//! Within a step the map is frozen at the old shell state. The stress moves
//! first. Then shell and fluid are iterated: each pass advances the shell with
//! the traction of the latest fluid iterate and solves the fluid with the new
//! shell velocity as wall data. A last shell update uses the final fluid
//! traction, and the mismatch between that shell velocity and the fluid wall
//! velocity is the interface residual.

use crate::error::{Error, Result};
use crate::fluid::{gradient_energy, interface_stress, kinetic_energy, velocity_l2, FluidSolver, FluidState};
use crate::geometry::{HanzawaMap, ReferenceDomain};
use crate::grid::Grid;
use crate::shell::{traction_forcing, ShellModel, ShellState};
use crate::solute::{l2_norm, lq_norm, SoluteSolver, StressField};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Params {
    pub nu: f64,
    pub gamma: f64,
    pub eps: f64,
    pub dt: f64,
    /// fluid solves per step, at least
    pub min_iterations: usize,
    pub max_iterations: usize,
    pub interface_tol: f64,
}

impl Default for Params {
    fn default() -> Self {
        Self {
            nu: 1.0,
            gamma: 1.0,
            eps: 0.1,
            dt: 1e-3,
            min_iterations: 2,
            max_iterations: 50,
            interface_tol: 1e-6,
        }
    }
}

impl Params {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| Err(Error::Config(format!("{what} must be positive, got {v}")));
        if !(self.nu > 0.0) {
            return bad("ν", self.nu);
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config(format!("γ must be ≥ 0, got {}", self.gamma)));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(Error::Config(format!("ε must be finite and ≥ 0, got {}", self.eps)));
        }
        if !(self.dt > 0.0) {
            return bad("dt", self.dt);
        }
        if !(self.interface_tol > 0.0) {
            return bad("interface tolerance", self.interface_tol);
        }
        if self.min_iterations == 0 || self.max_iterations < self.min_iterations {
            return Err(Error::Config(format!(
                "need 1 ≤ min iterations ≤ max iterations, got {} and {}",
                self.min_iterations, self.max_iterations
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct CoupledState {
    pub shell: ShellState,
    pub fluid: FluidState,
    pub stress: StressField,
    pub map: HanzawaMap,
    pub t: f64,
    /// interface residual left by the step that produced this state
    pub interface_residual: f64,
}

impl CoupledState {
    /// Assembles a state; the map is built from the shell.
    pub fn new(domain: &ReferenceDomain, shell: ShellState, fluid: FluidState, stress: StressField) -> Result<Self> {
        let t = shell.t;
        let map = HanzawaMap::new(domain, &shell.eta, &shell.eta_dot, t)?;
        let s = Self {
            shell,
            fluid,
            stress,
            map,
            t,
            interface_residual: 0.0,
        };
        s.check_shapes()?;
        Ok(s)
    }

    pub fn rest(domain: &ReferenceDomain) -> Result<Self> {
        let g = domain.grid();
        Self::new(domain, ShellState::rest(g.nx), FluidState::rest(&g), StressField::zeros(&g))
    }

    pub fn grid(&self) -> &Grid {
        &self.map.grid
    }

    fn check_shapes(&self) -> Result<()> {
        let g = self.grid();
        if self.shell.eta.len() != g.nx
            || self.fluid.u.len() != g.cells()
            || self.fluid.v.len() != g.v_len()
            || self.stress.len() != g.cells()
        {
            return Err(Error::InvalidArgument("coupled state arrays do not match the grid".into()));
        }
        Ok(())
    }
}

/// Energy, dissipation and source of one state.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyParts {
    /// `½‖u‖²` on the deformed domain
    pub kinetic: f64,
    /// `½‖∂ₜη‖²`
    pub shell_kinetic: f64,
    /// `½‖∂²η‖²`
    pub shell_elastic: f64,
    /// `ν‖∇u‖²` on the deformed domain
    pub viscous_dissipation: f64,
    /// `γ‖∂ₜ∂η‖²`
    pub shell_dissipation: f64,
    /// `(1/2ν)‖𝕋‖²` on the deformed domain
    pub stress_source: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.shell_kinetic + self.shell_elastic
    }

    /// Dissipation rate left after absorbing the stress work: `γ‖∂ₜ∂η‖² + (ν/2)‖∇u‖²`.
    pub fn absorbed_dissipation(&self) -> f64 {
        self.shell_dissipation + 0.5 * self.viscous_dissipation
    }
}

/// One ledger line per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LedgerEntry {
    pub t: f64,
    pub parts: EnergyParts,
    /// `ΔE + dt·(γ‖∂ₜ∂η‖² + (ν/2)‖∇u‖²) − dt·(1/2ν)‖𝕋‖²`, all at the new time
    pub defect: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    pub initial: EnergyParts,
    pub entries: Vec<LedgerEntry>,
}

impl EnergyLedger {
    pub fn new(initial: EnergyParts) -> Self {
        Self {
            initial,
            entries: Vec::new(),
        }
    }

    /// Records the step from `prev` to `next`.
    pub fn push(&mut self, t: f64, dt: f64, prev: &EnergyParts, next: &EnergyParts) {
        let defect = next.total() - prev.total() + dt * next.absorbed_dissipation() - dt * next.stress_source;
        self.entries.push(LedgerEntry { t, parts: *next, defect });
    }

    pub fn max_defect(&self) -> f64 {
        self.entries.iter().map(|e| e.defect).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Energy scale used to normalize defects.
    pub fn scale(&self) -> f64 {
        let s = self.initial.total() + self.initial.stress_source;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CouplingInfo {
    pub fluid_solves: usize,
    pub interface_residual: f64,
    pub clamped_feet: usize,
}

/// Solvers for one resolution and parameter set.
#[derive(Clone, Debug)]
pub struct Coupler {
    pub domain: ReferenceDomain,
    pub params: Params,
    pub fluid: FluidSolver,
    pub solute: SoluteSolver,
    pub shell: ShellModel,
}

impl Coupler {
    pub fn new(domain: ReferenceDomain, params: Params) -> Result<Self> {
        domain.validate()?;
        params.validate()?;
        let g = domain.grid();
        Ok(Self {
            domain,
            params,
            fluid: FluidSolver::new(g, params.nu, params.dt)?,
            solute: SoluteSolver::new(g, params.eps, params.dt)?,
            shell: ShellModel::new(g.nx, domain.lx, params.gamma, domain.half_width),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.fluid.grid
    }

    fn forcing(&self, fluid: &FluidState, stress: &StressField, map: &HanzawaMap, slope: &[f64]) -> Vec<f64> {
        let s = interface_stress(self.grid(), fluid, stress, Some(map), self.params.nu);
        traction_forcing(&s, slope)
    }

    pub fn step(&self, state: &CoupledState) -> Result<(CoupledState, CouplingInfo)> {
        self.step_with(state, self.params.min_iterations, self.params.max_iterations)
    }

    /// A step with explicit iteration bounds (`1, 1` gives the plain staggered scheme).
    pub fn step_with(&self, state: &CoupledState, min_iter: usize, max_iter: usize) -> Result<(CoupledState, CouplingInfo)> {
        let p = &self.params;
        let t_new = state.t + p.dt;
        let map = &state.map;
        let at = |e: Error| e.at_time(t_new);
        // the steppers reduce bitwise to their flat versions on the identity map
        let metric = Some(map).filter(|m| !m.is_identity());
        let (stress, sinfo) = self.solute.step(&state.stress, &state.fluid, metric).map_err(at)?;
        let slope = self.shell.plan.derivative(&state.shell.eta, 1);

        let mut info = CouplingInfo {
            clamped_feet: sinfo.clamped_feet,
            ..Default::default()
        };
        let mut shell = self
            .shell
            .step(&state.shell, &self.forcing(&state.fluid, &stress, map, &slope), p.dt)
            .map_err(at)?;
        loop {
            let (fluid, _) = self.fluid.step(&state.fluid, &stress, metric, &shell.eta_dot).map_err(at)?;
            info.fluid_solves += 1;
            let next = self.shell.step(&state.shell, &self.forcing(&fluid, &stress, map, &slope), p.dt).map_err(at)?;
            let residual = next
                .eta_dot
                .iter()
                .zip(&shell.eta_dot)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            info.interface_residual = residual;
            shell = next;
            let done = info.fluid_solves >= min_iter && residual <= p.interface_tol;
            if done || info.fluid_solves >= max_iter {
                if !done && max_iter > 1 {
                    return Err(Error::InterfaceNotConverged {
                        time: t_new,
                        residual,
                        iterations: info.fluid_solves,
                    });
                }
                let map = HanzawaMap::new(&self.domain, &shell.eta, &shell.eta_dot, t_new)?;
                let next = CoupledState {
                    shell,
                    fluid,
                    stress,
                    map,
                    t: t_new,
                    interface_residual: residual,
                };
                return Ok((next, info));
            }
        }
    }

    pub fn energy(&self, s: &CoupledState) -> EnergyParts {
        let g = self.grid();
        let map = Some(&s.map);
        EnergyParts {
            kinetic: kinetic_energy(g, &s.fluid, map),
            shell_kinetic: 0.5 * self.shell.l2_norm(&s.shell.eta_dot).powi(2),
            shell_elastic: 0.5 * self.shell.second_derivative_norm(&s.shell.eta).powi(2),
            viscous_dissipation: self.params.nu * gradient_energy(g, &s.fluid, map),
            shell_dissipation: self.shell.dissipation(&s.shell),
            stress_source: l2_norm(g, &s.stress, map).powi(2) / (2.0 * self.params.nu),
        }
    }

    /// Observer quantities of a state.
    pub fn sample(&self, s: &CoupledState, dissipation_cum: f64) -> Sample {
        let g = self.grid();
        let map = Some(&s.map);
        let lq = |q: f64| lq_norm(g, &s.stress, q, map).expect("valid exponent");
        Sample {
            t: s.t,
            norm_t_l2: lq(2.0),
            norm_u_l2: velocity_l2(g, &s.fluid, map),
            norm_etadot_l2: self.shell.l2_norm(&s.shell.eta_dot),
            norm_eta_w22: self.shell.w22_norm(&s.shell.eta),
            energy_total: self.energy(s).total(),
            dissipation_cum,
            lq2_t: lq(2.0),
            lq4_t: lq(4.0),
            lq8_t: lq(8.0),
            lqinf_t: lq(f64::INFINITY),
            interface_residual: check_interface(s),
            area_j: s.map.deformed_area(),
        }
    }
}

/// `max |u(top) − (0, ∂ₜη)|` over the shell nodes.
///
/// The horizontal wall velocity is zero by construction, so only the vertical
/// component can differ.
pub fn check_interface(s: &CoupledState) -> f64 {
    let g = s.grid();
    s.fluid
        .top_velocity(g)
        .iter()
        .zip(&s.shell.eta_dot)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

/// One step with the default iteration policy.
pub fn coupled_step(state: &CoupledState, domain: &ReferenceDomain, params: &Params) -> Result<CoupledState> {
    Ok(Coupler::new(*domain, *params)?.step(state)?.0)
}

/// Observer record at one sample time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub norm_t_l2: f64,
    pub norm_u_l2: f64,
    pub norm_etadot_l2: f64,
    pub norm_eta_w22: f64,
    pub energy_total: f64,
    pub dissipation_cum: f64,
    pub lq2_t: f64,
    pub lq4_t: f64,
    pub lq8_t: f64,
    pub lqinf_t: f64,
    pub interface_residual: f64,
    pub area_j: f64,
}

impl Sample {
    pub const COLUMNS: [&'static str; 13] = [
        "t",
        "norm_T_L2",
        "norm_u_L2",
        "norm_etadot_L2",
        "norm_eta_W22",
        "energy_total",
        "dissipation_cum",
        "lq2_T",
        "lq4_T",
        "lq8_T",
        "lqinf_T",
        "interface_residual",
        "area_J",
    ];

    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.norm_t_l2,
            self.norm_u_l2,
            self.norm_etadot_l2,
            self.norm_eta_w22,
            self.energy_total,
            self.dissipation_cum,
            self.lq2_t,
            self.lq4_t,
            self.lq8_t,
            self.lqinf_t,
            self.interface_residual,
            self.area_j,
        ]
    }

    pub fn from_values(v: &[f64]) -> Result<Self> {
        if v.len() != 13 {
            return Err(Error::Record(format!("sample needs 13 values, got {}", v.len())));
        }
        Ok(Self {
            t: v[0],
            norm_t_l2: v[1],
            norm_u_l2: v[2],
            norm_etadot_l2: v[3],
            norm_eta_w22: v[4],
            energy_total: v[5],
            dissipation_cum: v[6],
            lq2_t: v[7],
            lq4_t: v[8],
            lq8_t: v[9],
            lqinf_t: v[10],
            interface_residual: v[11],
            area_j: v[12],
        })
    }
}

/// How a trajectory ended.
#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    Completed,
    Degenerate { time: f64, detail: String },
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub ledger: EnergyLedger,
    pub termination: Termination,
    pub final_state: CoupledState,
    pub fluid_solves: usize,
    pub clamped_feet: usize,
}

/// Runs until `t_max` (or degeneracy), sampling every `cadence` steps and at the end.
///
/// `observer` sees every sampled state. Degeneracy stops the run and is
/// recorded; every other error propagates.
pub fn run_trajectory(
    coupler: &Coupler,
    initial: CoupledState,
    t_max: f64,
    cadence: usize,
    mut observer: impl FnMut(&CoupledState, &Sample),
) -> Result<Trajectory> {
    let dt = coupler.params.dt;
    let steps = if t_max <= 0.0 { 0 } else { (t_max / dt - 1e-9).ceil() as usize };
    let cadence = cadence.max(1);
    let t0 = initial.t;
    let mut state = initial;
    let mut prev = coupler.energy(&state);
    let mut ledger = EnergyLedger::new(prev);
    let mut cum = 0.0;
    let first = coupler.sample(&state, cum);
    observer(&state, &first);
    let mut samples = vec![first];
    let mut termination = Termination::Completed;
    let (mut solves, mut clamped) = (0, 0);
    for n in 1..=steps {
        match coupler.step(&state) {
            Ok((mut next, info)) => {
                // times from the step count, so sample times do not drift by round-off
                let t = t0 + n as f64 * dt;
                next.t = t;
                next.shell.t = t;
                next.fluid.t = t;
                next.stress.t = t;
                let parts = coupler.energy(&next);
                ledger.push(next.t, dt, &prev, &parts);
                cum += dt * (parts.shell_dissipation + parts.viscous_dissipation);
                prev = parts;
                solves += info.fluid_solves;
                clamped += info.clamped_feet;
                state = next;
            }
            Err(Error::Degeneracy { time, detail }) => {
                termination = Termination::Degenerate { time, detail };
                break;
            }
            Err(e) => return Err(e),
        }
        if n % cadence == 0 || n == steps {
            let s = coupler.sample(&state, cum);
            observer(&state, &s);
            samples.push(s);
        }
    }
    Ok(Trajectory {
        samples,
        ledger,
        termination,
        final_state: state,
        fluid_solves: solves,
        clamped_feet: clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::Mat2;
    use std::f64::consts::PI;

    #[test]
    fn rest_state_is_invariant() {
        let d = ReferenceDomain::channel(16).unwrap();
        let c = Coupler::new(d, Params::default()).unwrap();
        let s = CoupledState::rest(&d).unwrap();
        let (n, info) = c.step(&s).unwrap();
        assert!(n.fluid.u.iter().chain(&n.fluid.v).chain(&n.fluid.p).all(|&x| x == 0.0));
        assert!(n.shell.eta.iter().chain(&n.shell.eta_dot).all(|&x| x == 0.0));
        assert!(n.stress.t11.iter().all(|&x| x == 0.0));
        assert_eq!(info.interface_residual, 0.0);
    }

    #[test]
    fn zero_horizon_has_only_initial_sample() {
        let d = ReferenceDomain::channel(16).unwrap();
        let c = Coupler::new(d, Params::default()).unwrap();
        let tr = run_trajectory(&c, CoupledState::rest(&d).unwrap(), 0.0, 1, |_, _| {}).unwrap();
        assert_eq!(tr.samples.len(), 1);
        assert!(tr.ledger.entries.is_empty());
    }

    #[test]
    fn shell_mode_keeps_mean_zero_and_converges_interface() {
        let d = ReferenceDomain::channel(16).unwrap();
        let g = d.grid();
        let p = Params {
            dt: 2e-3,
            interface_tol: 1e-10,
            ..Params::default()
        };
        let c = Coupler::new(d, p).unwrap();
        let mut shell = ShellState::rest(g.nx);
        shell.eta = g.shell_nodes().iter().map(|&x| 0.02 * (PI * x).cos()).collect();
        let stress = StressField::constant(&g, &Mat2::diag(0.1, 0.2));
        let mut s = CoupledState::new(&d, shell, FluidState::rest(&g), stress).unwrap();
        for _ in 0..10 {
            s = c.step(&s).unwrap().0;
            let mean: f64 = s.shell.eta.iter().sum::<f64>() / g.nx as f64;
            assert!(mean.abs() < 1e-12);
            assert!(check_interface(&s) <= 1e-10);
        }
        // one pass only leaves a larger mismatch
        let (one, _) = c.step_with(&s, 1, 1).unwrap();
        let (many, _) = c.step(&s).unwrap();
        assert!(check_interface(&one) > check_interface(&many));
    }
}
