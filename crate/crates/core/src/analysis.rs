//! Decay envelopes, rate fits, Poincaré constants, comparison of trajectories
//! on a common domain and the vanishing-diffusion sweep.

use std::f64::consts::PI;

use crate::coupling::{run_trajectory, CoupledState, Coupler, Params, Sample, Trajectory};
use crate::error::{Error, Result};
use crate::fluid::velocity_cells;
use crate::geometry::{HanzawaMap, ReferenceDomain};
use crate::grid::Grid;
use crate::interp::{bicubic, clamp_y};
use crate::shell::ShellModel;

/// `c₁` on ω and `c₂` on the channel, with the interval `c₂` can take on
/// the deformed domain given the extremal metric weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoincareConstants {
    pub c1: f64,
    pub c2: f64,
    pub c2_lo: f64,
    pub c2_hi: f64,
    /// second-order finite-difference eigenvalues of the solver grid
    pub c1_grid: f64,
    pub c2_grid: f64,
}

/// Extremal `J` and eigenvalues of `A` over a set of maps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricRange {
    pub j_min: f64,
    pub j_max: f64,
    pub a_min: f64,
    pub a_max: f64,
}

impl MetricRange {
    pub const IDENTITY: MetricRange = MetricRange {
        j_min: 1.0,
        j_max: 1.0,
        a_min: 1.0,
        a_max: 1.0,
    };

    pub fn of(map: &HanzawaMap) -> Self {
        let mut r = MetricRange {
            j_min: f64::INFINITY,
            j_max: 0.0,
            a_min: f64::INFINITY,
            a_max: 0.0,
        };
        for k in 0..map.cell.a.len() {
            let (a, b, _) = map.cell.at(k);
            let am = map.cell.a_matrix(k);
            let (tr, det) = (am.trace(), am.det());
            let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
            r.j_min = r.j_min.min(b);
            r.j_max = r.j_max.max(b);
            r.a_min = r.a_min.min(0.5 * tr - disc);
            r.a_max = r.a_max.max(0.5 * tr + disc);
            let _ = a;
        }
        r
    }

    pub fn merge(&self, o: &MetricRange) -> MetricRange {
        MetricRange {
            j_min: self.j_min.min(o.j_min),
            j_max: self.j_max.max(o.j_max),
            a_min: self.a_min.min(o.a_min),
            a_max: self.a_max.max(o.a_max),
        }
    }
}

/// Smallest nonzero eigenvalues of `−∂²` on ω and of the Neumann/periodic
/// Laplacian on the reference channel (Fourier and cosine symbols are exact).
pub fn estimate_poincare_constants(domain: &ReferenceDomain, range: &MetricRange) -> PoincareConstants {
    let c1 = (2.0 * PI / domain.lx).powi(2);
    let c2 = c1.min((PI / domain.ly).powi(2));
    let (hx, hy) = (domain.lx / domain.nx as f64, domain.ly / domain.ny as f64);
    let c1_grid = 4.0 * (PI / domain.nx as f64).sin().powi(2) / (hx * hx);
    let c2_grid = c1_grid.min(4.0 * (PI / (2.0 * domain.ny as f64)).sin().powi(2) / (hy * hy));
    // Rayleigh quotient ∫∇ū A ∇ū / ∫ J ū² is squeezed between these.
    PoincareConstants {
        c1,
        c2,
        c2_lo: c2 * range.a_min / range.j_max,
        c2_hi: c2 * range.a_max / range.j_min,
        c1_grid,
        c2_grid,
    }
}

/// `(1 − e^{−2εt})/(2ε)`, equal to `t` at `ε = 0`.
pub fn source_factor(eps: f64, t: f64) -> f64 {
    if eps == 0.0 {
        t
    } else {
        -(-2.0 * eps * t).exp_m1() / (2.0 * eps)
    }
}

/// Parameters of the three decay envelopes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Envelopes {
    pub eps: f64,
    pub nu: f64,
    pub gamma: f64,
    pub c1: f64,
    pub c2: f64,
    pub inf_area: f64,
    pub stress0: f64,
    pub etadot0: f64,
    pub u0: f64,
}

impl Envelopes {
    /// `e^{−εt}‖𝕋₀‖`
    pub fn stress(&self, t: f64) -> f64 {
        (-self.eps * t).exp() * self.stress0
    }

    fn source(&self, t: f64) -> f64 {
        self.stress0 * self.stress0 * source_factor(self.eps, t) / self.nu
    }

    /// `e^{−c₁γt}(‖η⋆‖² + (1 − e^{−2εt})‖𝕋₀‖²/(2νε))^{1/2}`
    pub fn etadot(&self, t: f64) -> f64 {
        (-self.c1 * self.gamma * t).exp() * (self.etadot0 * self.etadot0 + self.source(t)).sqrt()
    }

    pub fn u_rate(&self) -> f64 {
        0.5 * self.c2 * self.nu * (1.0 - self.inf_area.powf(-0.5)).powi(2)
    }

    /// `e^{−(c₂/2)ν(1 − |Ω_η|^{−1/2})² t}(‖u₀‖² + (1 − e^{−2εt})‖𝕋₀‖²/(2νε))^{1/2}`
    pub fn u(&self, t: f64) -> f64 {
        (-self.u_rate() * t).exp() * (self.u0 * self.u0 + self.source(t)).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateFit {
    /// decay rate, the negated log-slope
    pub rate: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit of `log(series)` against `t` on `[t_lo, t_hi]`.
pub fn fit_exponential_rate(t: &[f64], series: &[f64], t_lo: f64, t_hi: f64) -> Result<RateFit> {
    if t.len() != series.len() {
        return Err(Error::InvalidArgument("time and value series differ in length".into()));
    }
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(series)
        .filter(|(&ti, _)| ti >= t_lo && ti <= t_hi)
        .map(|(&ti, &v)| (ti, v))
        .collect();
    if let Some((ti, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(format!("non-positive sample {v} at t = {ti} in the fit window")));
    }
    if pts.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least two samples in the fit window, got {}", pts.len())));
    }
    let xy: Vec<(f64, f64)> = pts.iter().map(|&(ti, v)| (ti, v.ln())).collect();
    let (slope, r2) = least_squares(&xy);
    Ok(RateFit {
        rate: -slope,
        r_squared: r2,
        points: xy.len(),
    })
}

/// Slope and `R²` of the least-squares line through `(x, y)`.
fn least_squares(xy: &[(f64, f64)]) -> (f64, f64) {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    (slope, r2)
}

/// Log–log slope of `d` against `eps`; `None` if fewer than two usable points.
pub fn loglog_slope(eps: &[f64], d: &[f64]) -> Option<f64> {
    let xy: Vec<(f64, f64)> = eps
        .iter()
        .zip(d)
        .filter(|(&e, &v)| e > 0.0 && v > 0.0)
        .map(|(&e, &v)| (e.ln(), v.ln()))
        .collect();
    if xy.len() < 2 || xy.len() != eps.len() {
        return None;
    }
    Some(least_squares(&xy).0)
}

/// Decay envelopes checked against a trajectory.
/// Relative to the largest initial norm.
pub const ROUNDOFF_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct DecayReport {
    pub samples: Vec<Sample>,
    pub envelopes: Envelopes,
    pub poincare: PoincareConstants,
    pub tolerance: f64,
    pub env_t: Vec<f64>,
    pub env_etadot: Vec<f64>,
    pub env_u: Vec<f64>,
    pub pass_t: Vec<bool>,
    pub pass_etadot: Vec<bool>,
    pub pass_u: Vec<bool>,
    /// false if the deformed area crossed 1
    pub hypothesis_ok: bool,
    pub rate_t: Option<RateFit>,
    pub rate_etadot: Option<RateFit>,
    pub rate_u: Option<RateFit>,
}

impl DecayReport {
    pub fn build(samples: &[Sample], params: &Params, poincare: PoincareConstants, tolerance: f64, fit_from: f64) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidArgument("decay report needs at least one sample".into()))?;
        let inf_area = samples.iter().map(|s| s.area_j).fold(f64::INFINITY, f64::min);
        let sup_area = samples.iter().map(|s| s.area_j).fold(0.0, f64::max);
        let envelopes = Envelopes {
            eps: params.eps,
            nu: params.nu,
            gamma: params.gamma,
            c1: poincare.c1,
            c2: poincare.c2,
            inf_area,
            stress0: first.norm_t_l2,
            etadot0: first.norm_etadot_l2,
            u0: first.norm_u_l2,
        };
        let ts: Vec<f64> = samples.iter().map(|s| s.t).collect();
        let env_t: Vec<f64> = ts.iter().map(|&t| envelopes.stress(t)).collect();
        let env_etadot: Vec<f64> = ts.iter().map(|&t| envelopes.etadot(t)).collect();
        let env_u: Vec<f64> = ts.iter().map(|&t| envelopes.u(t)).collect();
        // absolute floor: once a norm has decayed to round-off, the relative test is meaningless
        let scale = first.norm_t_l2.max(first.norm_etadot_l2).max(first.norm_u_l2);
        let floor = ROUNDOFF_FLOOR * scale;
        let ok = |m: f64, e: f64| m <= e * (1.0 + tolerance) + floor;
        let pass_t = samples.iter().zip(&env_t).map(|(s, &e)| ok(s.norm_t_l2, e)).collect();
        let pass_etadot = samples.iter().zip(&env_etadot).map(|(s, &e)| ok(s.norm_etadot_l2, e)).collect();
        let pass_u = samples.iter().zip(&env_u).map(|(s, &e)| ok(s.norm_u_l2, e)).collect();
        let t_end = ts.last().copied().unwrap_or(0.0);
        let fit = |f: fn(&Sample) -> f64| {
            let v: Vec<f64> = samples.iter().map(f).collect();
            fit_exponential_rate(&ts, &v, fit_from, t_end).ok()
        };
        Ok(Self {
            samples: samples.to_vec(),
            envelopes,
            poincare,
            tolerance,
            env_t,
            env_etadot,
            env_u,
            pass_t,
            pass_etadot,
            pass_u,
            hypothesis_ok: !(inf_area <= 1.0 && sup_area >= 1.0),
            rate_t: fit(|s| s.norm_t_l2),
            rate_etadot: fit(|s| s.norm_etadot_l2),
            rate_u: fit(|s| s.norm_u_l2),
        })
    }

    pub fn stress_passes(&self) -> bool {
        self.pass_t.iter().all(|&p| p)
    }
}

/// Resamples cell fields given through the map `from` (shell `η`) onto the
/// reference cells of the map `to` (shell `ζ`): the value at `x` is the field
/// at `Ψ_η⁻¹(Ψ_ζ(x))`. Interpolation is clipped Catmull-Rom, so constants
/// stay exactly constant.
pub fn transform_to_common_domain(fields: &[&[f64]], from: &HanzawaMap, to: &HanzawaMap) -> Result<Vec<Vec<f64>>> {
    let g = &to.grid;
    if !from.grid.same_shape(g) {
        return Err(Error::InvalidArgument("maps live on different grids".into()));
    }
    if fields.iter().any(|f| f.len() != g.cells()) {
        return Err(Error::InvalidArgument("field does not match the grid".into()));
    }
    let diff = from
        .eta
        .values()
        .iter()
        .zip(to.eta.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if !(diff < from.domain.half_width) {
        return Err(Error::Degeneracy {
            time: to.time,
            detail: format!("‖η − ζ‖∞ = {diff} reached L = {}", from.domain.half_width),
        });
    }
    let same = from.eta.values() == to.eta.values();
    let mut out: Vec<Vec<f64>> = fields.iter().map(|f| f.to_vec()).collect();
    if same {
        return Ok(out);
    }
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.idx(i, j);
            let x = [g.xc(i), g.yc(j)];
            let phys = to.forward(x)?;
            let y = from.inverse(phys)?;
            let fx = y[0] / g.hx - 0.5;
            let (fy, _) = clamp_y(y[1] / g.hy - 0.5, g.ny);
            for (o, f) in out.iter_mut().zip(fields) {
                let s = bicubic([*f], g.nx, g.ny, fx, fy);
                let (lo, hi) = s
                    .neighbours
                    .iter()
                    .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &n| (lo.min(f[n]), hi.max(f[n])));
                o[k] = s.value[0].clamp(lo, hi);
            }
        }
    }
    Ok(out)
}

/// Compact copy of a coupled state for later comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub eta: Vec<f64>,
    pub eta_dot: Vec<f64>,
    pub uc: Vec<f64>,
    pub vc: Vec<f64>,
    pub t11: Vec<f64>,
    pub t12: Vec<f64>,
    pub t22: Vec<f64>,
}

impl Snapshot {
    pub fn of(s: &CoupledState) -> Self {
        let (uc, vc) = velocity_cells(s.grid(), &s.fluid.u, &s.fluid.v);
        Self {
            t: s.t,
            eta: s.shell.eta.clone(),
            eta_dot: s.shell.eta_dot.clone(),
            uc,
            vc,
            t11: s.stress.t11.clone(),
            t12: s.stress.t12.clone(),
            t22: s.stress.t22.clone(),
        }
    }

    fn fields(&self) -> [&[f64]; 5] {
        [&self.uc, &self.vc, &self.t11, &self.t12, &self.t22]
    }
}

/// Left-hand side quantities of the relative-energy estimate over time.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RelativeEnergySeries {
    pub t: Vec<f64>,
    /// `‖ū^ε − v‖_{L²(Ω_ζ)}`
    pub u: Vec<f64>,
    /// `‖∂ₜη^ε − ∂ₜζ‖_{L²(ω)}`
    pub etadot: Vec<f64>,
    /// `‖∂²(η^ε − ζ)‖_{L²(ω)}`
    pub eta_dd: Vec<f64>,
    /// `‖η^ε − ζ‖_{W²,²(ω)}`
    pub eta_w22: Vec<f64>,
    /// `‖𝕋̄^ε − 𝕌‖_{L²(Ω_ζ)}`
    pub stress: Vec<f64>,
    /// `∫₀ᵗ ‖∇(ū^ε − v)‖²`
    pub grad_u_cum: Vec<f64>,
    /// `γ ∫₀ᵗ ‖∂(∂ₜη^ε − ∂ₜζ)‖²`
    pub grad_etadot_cum: Vec<f64>,
    /// `ε² ∫₀ᵗ (‖𝕋̄^ε‖²_{W²,²} + ‖𝕌‖²_{L^∞})`
    pub source_cum: Vec<f64>,
    /// `‖1_{Ω_{η^ε}} u^ε − 1_{Ω_ζ} v‖` on the container
    pub indicator_u: Vec<f64>,
    /// `‖1_{Ω_{η^ε}} 𝕋^ε − 1_{Ω_ζ} 𝕌‖` on the container
    pub indicator_stress: Vec<f64>,
}

fn sup(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

impl RelativeEnergySeries {
    pub fn sup_u(&self) -> f64 {
        sup(&self.u)
    }
    pub fn sup_stress(&self) -> f64 {
        sup(&self.stress)
    }
    pub fn sup_eta_w22(&self) -> f64 {
        sup(&self.eta_w22)
    }
    pub fn grad_u_total(&self) -> f64 {
        self.grad_u_cum.last().copied().unwrap_or(0.0)
    }
}

/// Central-difference gradient energy `Σ_k |∇f_k|²` of cell fields, one-sided at the walls.
fn gradient_sq(g: &Grid, f: &[f64], i: usize, j: usize) -> f64 {
    let dx = (f[g.idx(g.ip(i), j)] - f[g.idx(g.im(i), j)]) / (2.0 * g.hx);
    let (jl, jh) = (j.saturating_sub(1), (j + 1).min(g.ny - 1));
    let dy = (f[g.idx(i, jh)] - f[g.idx(i, jl)]) / ((jh - jl) as f64 * g.hy);
    dx * dx + dy * dy
}

/// `‖f‖²_{W²,²}` of a cell field by second-order differences (mirrored walls).
fn w22_sq(g: &Grid, f: &[f64]) -> f64 {
    let at = |i: usize, j: i64| f[g.idx(i, j.clamp(0, g.ny as i64 - 1) as usize)];
    let mut acc = 0.0;
    for j in 0..g.ny {
        let jj = j as i64;
        for i in 0..g.nx {
            let (ip, im) = (g.ip(i), g.im(i));
            let c = at(i, jj);
            let fx = (at(ip, jj) - at(im, jj)) / (2.0 * g.hx);
            let fy = (at(i, jj + 1) - at(i, jj - 1)) / (2.0 * g.hy);
            let fxx = (at(ip, jj) - 2.0 * c + at(im, jj)) / (g.hx * g.hx);
            let fyy = (at(i, jj + 1) - 2.0 * c + at(i, jj - 1)) / (g.hy * g.hy);
            let fxy = (at(ip, jj + 1) - at(im, jj + 1) - at(ip, jj - 1) + at(im, jj - 1)) / (4.0 * g.hx * g.hy);
            acc += c * c + fx * fx + fy * fy + fxx * fxx + 2.0 * fxy * fxy + fyy * fyy;
        }
    }
    acc * g.cell_area()
}

/// Distances between an `ε`-trajectory and the limit trajectory at common times.
pub fn relative_energy(
    domain: &ReferenceDomain,
    gamma: f64,
    eps: f64,
    traj_eps: &[Snapshot],
    traj_limit: &[Snapshot],
) -> Result<RelativeEnergySeries> {
    if traj_eps.len() != traj_limit.len() {
        return Err(Error::InvalidArgument(format!(
            "trajectories have {} and {} samples",
            traj_eps.len(),
            traj_limit.len()
        )));
    }
    let g = domain.grid();
    let shell = ShellModel::new(g.nx, domain.lx, gamma, domain.half_width);
    let mut r = RelativeEnergySeries::default();
    let (mut gu_cum, mut ge_cum, mut src_cum) = (0.0, 0.0, 0.0);
    let mut prev: Option<(f64, f64, f64, f64)> = None;
    for (a, b) in traj_eps.iter().zip(traj_limit) {
        if (a.t - b.t).abs() > 1e-12 * (1.0 + b.t.abs()) {
            return Err(Error::InvalidArgument(format!("sample times differ: {} vs {}", a.t, b.t)));
        }
        if a.uc.len() != g.cells() || b.uc.len() != g.cells() || a.eta.len() != g.nx || b.eta.len() != g.nx {
            return Err(Error::InvalidArgument("snapshot does not match the grid".into()));
        }
        let ma = HanzawaMap::new(domain, &a.eta, &a.eta_dot, a.t)?;
        let mb = HanzawaMap::new(domain, &b.eta, &b.eta_dot, b.t)?;
        let tr = transform_to_common_domain(&a.fields(), &ma, &mb)?;
        let bf = b.fields();
        let (mut du, mut dt, mut gu) = (0.0, 0.0, 0.0);
        let diff: Vec<Vec<f64>> = tr.iter().zip(bf).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p - q).collect()).collect();
        for j in 0..g.ny {
            for i in 0..g.nx {
                let k = g.idx(i, j);
                let w = mb.j_cell[k];
                du += w * (diff[0][k].powi(2) + diff[1][k].powi(2));
                dt += w * (diff[2][k].powi(2) + 2.0 * diff[3][k].powi(2) + diff[4][k].powi(2));
                gu += w * (gradient_sq(&g, &diff[0], i, j) + gradient_sq(&g, &diff[1], i, j));
            }
        }
        let area = g.cell_area();
        let de: Vec<f64> = a.eta.iter().zip(&b.eta).map(|(p, q)| p - q).collect();
        let ded: Vec<f64> = a.eta_dot.iter().zip(&b.eta_dot).map(|(p, q)| p - q).collect();
        let ge = gamma * shell.l2_norm(&shell.plan.derivative(&ded, 1)).powi(2);
        let t_w22 = w22_sq(&g, &a.t11) + 2.0 * w22_sq(&g, &a.t12) + w22_sq(&g, &a.t22);
        let u_inf = (0..g.cells())
            .map(|k| (b.t11[k].powi(2) + 2.0 * b.t12[k].powi(2) + b.t22[k].powi(2)).sqrt())
            .fold(0.0, f64::max);
        let src = eps * eps * (t_w22 + u_inf * u_inf);
        if let Some((t0, gu0, ge0, s0)) = prev {
            let h = a.t - t0;
            gu_cum += 0.5 * h * (gu0 + gu * area);
            ge_cum += 0.5 * h * (ge0 + ge);
            src_cum += 0.5 * h * (s0 + src);
        }
        prev = Some((a.t, gu * area, ge, src));
        let (iu, is) = indicator_distances(domain, &ma, &mb, a, b)?;
        r.t.push(a.t);
        r.u.push((du * area).sqrt());
        r.stress.push((dt * area).sqrt());
        r.etadot.push(shell.l2_norm(&ded));
        r.eta_dd.push(shell.second_derivative_norm(&de));
        r.eta_w22.push(shell.w22_norm(&de));
        r.grad_u_cum.push(gu_cum);
        r.grad_etadot_cum.push(ge_cum);
        r.source_cum.push(src_cum);
        r.indicator_u.push(iu);
        r.indicator_stress.push(is);
    }
    Ok(r)
}

/// Distances of the indicator-extended velocity and stress on the container
/// `(0, Lx) × (0, Ly + L)`, sampled on cells of the solver spacing.
fn indicator_distances(domain: &ReferenceDomain, ma: &HanzawaMap, mb: &HanzawaMap, a: &Snapshot, b: &Snapshot) -> Result<(f64, f64)> {
    let g = &mb.grid;
    let rows = ((domain.ly + domain.half_width) / g.hy).ceil() as usize;
    let sample = |m: &HanzawaMap, s: &Snapshot, x: [f64; 2]| -> Result<Option<[f64; 5]>> {
        let top = domain.ly + m.eta.value(x[0]);
        if x[1] >= top {
            return Ok(None);
        }
        let y = m.inverse(x)?;
        let fx = y[0] / g.hx - 0.5;
        let (fy, _) = clamp_y(y[1] / g.hy - 0.5, g.ny);
        let v = bicubic(s.fields(), g.nx, g.ny, fx, fy).value;
        Ok(Some(v))
    };
    let (mut du, mut dt) = (0.0, 0.0);
    for j in 0..rows {
        for i in 0..g.nx {
            let x = [g.xc(i), (j as f64 + 0.5) * g.hy];
            let va = sample(ma, a, x)?.unwrap_or([0.0; 5]);
            let vb = sample(mb, b, x)?.unwrap_or([0.0; 5]);
            let d: Vec<f64> = va.iter().zip(&vb).map(|(p, q)| p - q).collect();
            du += d[0] * d[0] + d[1] * d[1];
            dt += d[2] * d[2] + 2.0 * d[3] * d[3] + d[4] * d[4];
        }
    }
    let area = g.cell_area();
    Ok(((du * area).sqrt(), (dt * area).sqrt()))
}

/// Inputs of a vanishing-diffusion sweep. All runs share the initial state.
#[derive(Clone, Debug)]
pub struct SweepConfig {
    pub domain: ReferenceDomain,
    pub params: Params,
    pub eps_list: Vec<f64>,
    pub t_max: f64,
    pub cadence: usize,
    pub initial: CoupledState,
    /// run the `ε`-trajectories on separate threads
    pub parallel: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub dist_t_linf_l2: f64,
    pub dist_u_linf_l2: f64,
    pub dist_gradu_l2l2: f64,
    pub dist_eta_w22: f64,
    pub indicator_u: f64,
    pub indicator_t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub slope_t: Option<f64>,
    pub slope_u: Option<f64>,
    /// differences of the initial data across runs (zero for matched data)
    pub data_deltas: Vec<f64>,
}

impl SweepResult {
    /// Distances nonincreasing as `ε` decreases.
    pub fn monotone_t(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].dist_t_linf_l2 <= w[0].dist_t_linf_l2)
    }

    pub fn monotone_u(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].dist_u_linf_l2 <= w[0].dist_u_linf_l2)
    }
}

fn run_snapshots(domain: &ReferenceDomain, params: Params, eps: f64, cfg: &SweepConfig) -> Result<(Vec<Snapshot>, Trajectory)> {
    let coupler = Coupler::new(*domain, Params { eps, ..params })?;
    let mut snaps = Vec::new();
    let mut init = cfg.initial.clone();
    init.stress.eps = eps;
    let tr = run_trajectory(&coupler, init, cfg.t_max, cfg.cadence, |s, _| snaps.push(Snapshot::of(s)))?;
    if let crate::coupling::Termination::Degenerate { time, detail } = &tr.termination {
        return Err(Error::Degeneracy {
            time: *time,
            detail: detail.clone(),
        });
    }
    Ok((snaps, tr))
}

/// Runs the limit trajectory and every `ε`-trajectory and measures their distances.
pub fn eps_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.eps_list.is_empty() {
        return Err(Error::Config("empty ε list".into()));
    }
    if cfg.eps_list.windows(2).any(|w| !(w[1] < w[0])) && cfg.eps_list.iter().any(|&e| e != 0.0) {
        return Err(Error::Config("ε list must be strictly decreasing".into()));
    }
    let d = cfg.domain;
    let (limit, _) = run_snapshots(&d, cfg.params, 0.0, cfg)?;
    let one = |eps: f64| -> Result<SweepRow> {
        let (snaps, _) = run_snapshots(&d, cfg.params, eps, cfg)?;
        let r = relative_energy(&d, cfg.params.gamma, eps, &snaps, &limit)?;
        Ok(SweepRow {
            eps,
            dist_t_linf_l2: r.sup_stress(),
            dist_u_linf_l2: r.sup_u(),
            dist_gradu_l2l2: r.grad_u_total().sqrt(),
            dist_eta_w22: r.sup_eta_w22(),
            indicator_u: sup(&r.indicator_u),
            indicator_t: sup(&r.indicator_stress),
        })
    };
    let rows: Vec<Result<SweepRow>> = if cfg.parallel {
        std::thread::scope(|sc| {
            let handles: Vec<_> = cfg.eps_list.iter().map(|&e| sc.spawn(move || one(e))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(Error::Numerical("sweep worker panicked".into()))))
                .collect()
        })
    } else {
        cfg.eps_list.iter().map(|&e| one(e)).collect()
    };
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let eps: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let dt: Vec<f64> = rows.iter().map(|r| r.dist_t_linf_l2).collect();
    let du: Vec<f64> = rows.iter().map(|r| r.dist_u_linf_l2).collect();
    Ok(SweepResult {
        slope_t: loglog_slope(&eps, &dt),
        slope_u: loglog_slope(&eps, &du),
        data_deltas: vec![0.0; rows.len()],
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::Sample;

    #[test]
    fn poincare_constants_of_default_channel() {
        let d = ReferenceDomain::channel(128).unwrap();
        let p = estimate_poincare_constants(&d, &MetricRange::IDENTITY);
        assert!((p.c1 - PI * PI).abs() < 1e-14);
        assert!((p.c2 - PI * PI).abs() < 1e-14);
        assert_eq!((p.c2_lo, p.c2_hi), (p.c2, p.c2));
        let p2 = estimate_poincare_constants(&ReferenceDomain::channel(256).unwrap(), &MetricRange::IDENTITY);
        assert!((p2.c2 - p.c2).abs() < 1e-6 * p.c2);
        assert!((p.c2_grid - PI * PI).abs() < 1e-3 * PI * PI);
    }

    #[test]
    fn envelopes() {
        let e = Envelopes {
            eps: 0.5,
            nu: 1.0,
            gamma: 1.0,
            c1: PI * PI,
            c2: PI * PI,
            inf_area: 2.0,
            stress0: 2.0,
            etadot0: 0.3,
            u0: 0.1,
        };
        assert!((e.stress(1.0) - 2.0 * (-0.5f64).exp()).abs() < 1e-15);
        let e0 = Envelopes { stress0: 0.0, ..e };
        assert!((e0.etadot(0.7) - (-PI * PI * 0.7).exp() * 0.3).abs() < 1e-15);
        assert_eq!(source_factor(0.0, 1.3), 1.3);
        assert!((source_factor(1e-12, 1.3) - 1.3).abs() < 1e-10);
    }

    #[test]
    fn rate_fits() {
        let t: Vec<f64> = (0..50).map(|k| k as f64 * 0.1).collect();
        let v: Vec<f64> = t.iter().map(|&t| (-0.3 * t).exp()).collect();
        let f = fit_exponential_rate(&t, &v, 0.0, 10.0).unwrap();
        assert!((f.rate - 0.3).abs() < 1e-10 && (f.r_squared - 1.0).abs() < 1e-12);
        let c = fit_exponential_rate(&t, &vec![2.0; 50], 0.0, 10.0).unwrap();
        assert!(c.rate.abs() < 1e-14);
        let noisy: Vec<f64> = v.iter().enumerate().map(|(k, x)| x + if k % 2 == 0 { 1e-8 } else { -1e-8 }).collect();
        assert!((fit_exponential_rate(&t, &noisy, 0.0, 10.0).unwrap().rate - 0.3).abs() < 1e-3);
        let mut bad = v.clone();
        bad[3] = 0.0;
        assert!(fit_exponential_rate(&t, &bad, 0.0, 10.0).is_err());
        let eps = [0.2, 0.1, 0.05];
        let d: Vec<f64> = eps.iter().map(|e| 3.0 * e).collect();
        assert!((loglog_slope(&eps, &d).unwrap() - 1.0).abs() < 1e-6);
        assert_eq!(loglog_slope(&[0.1], &[0.3]), None);
    }

    #[test]
    fn transform_identity_and_constants() {
        let d = ReferenceDomain::channel(32).unwrap();
        let g = d.grid();
        let eta: Vec<f64> = g.shell_nodes().iter().map(|&x| 0.05 * (PI * x).sin()).collect();
        let zeta: Vec<f64> = g.shell_nodes().iter().map(|&x| 0.03 * (PI * x).cos()).collect();
        let zero = vec![0.0; g.nx];
        let ma = HanzawaMap::new(&d, &eta, &zero, 0.0).unwrap();
        let mb = HanzawaMap::new(&d, &zeta, &zero, 0.0).unwrap();
        let f = g.sample_cells(|x, y| x.sin() * y);
        let same = transform_to_common_domain(&[&f], &ma, &ma).unwrap();
        assert_eq!(same[0], f);
        let c = vec![1.7; g.cells()];
        let out = transform_to_common_domain(&[&c], &ma, &mb).unwrap();
        assert!(out[0].iter().all(|&v| v == 1.7));
    }

    #[test]
    fn transform_matches_analytic_composition() {
        // f(x) = F(Ψ_η(x)) with F smooth; resampled onto ζ it must equal F(Ψ_ζ(x)).
        let big = |x: [f64; 2]| (PI * x[0]).sin() * (1.0 + 0.5 * x[1] * x[1]);
        let err = |n: usize| {
            let d = ReferenceDomain::channel(n).unwrap();
            let g = d.grid();
            // η ≥ ζ keeps every composed point inside the η-domain
            let eta: Vec<f64> = g.shell_nodes().iter().map(|&x| 0.06 + 0.02 * (PI * x).sin()).collect();
            let zeta: Vec<f64> = g.shell_nodes().iter().map(|&x| 0.03 * (PI * x).sin()).collect();
            let zero = vec![0.0; g.nx];
            let ma = HanzawaMap::new(&d, &eta, &zero, 0.0).unwrap();
            let mb = HanzawaMap::new(&d, &zeta, &zero, 0.0).unwrap();
            let f = g.sample_cells(|x, y| big(ma.forward([x, y]).unwrap()));
            let out = transform_to_common_domain(&[&f], &ma, &mb).unwrap();
            let mut e = 0.0f64;
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let want = big(mb.forward([g.xc(i), g.yc(j)]).unwrap());
                    e = e.max((out[0][g.idx(i, j)] - want).abs());
                }
            }
            e
        };
        let (e1, e2) = (err(32), err(64));
        assert!(e2 < e1 / 6.0, "{e1} {e2}");
    }

    #[test]
    fn relative_energy_of_identical_trajectories_is_zero() {
        let d = ReferenceDomain::channel(16).unwrap();
        let g = d.grid();
        let mut s = CoupledState::rest(&d).unwrap();
        s.stress = crate::solute::StressField::from_fn(&g, |x, y| crate::algebra::Mat2::sym(x, y, x * y));
        let snaps = vec![Snapshot::of(&s)];
        let r = relative_energy(&d, 1.0, 0.0, &snaps, &snaps).unwrap();
        assert_eq!(r.sup_stress(), 0.0);
        assert_eq!(r.sup_u(), 0.0);
        assert_eq!(r.indicator_stress[0], 0.0);
        let _ = Sample::COLUMNS;
    }
}
