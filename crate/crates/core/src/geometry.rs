//! Reference channel, cutoff profile, Hanzawa transform and its derived
//! metric quantities.
//!
//! The reference domain is `(0,Lx)×(0,Ly)`, periodic in x, with a rigid
//! bottom wall and a flexible top boundary displaced vertically by `η(x₁)`.
//! The map is `Ψ(x) = (x₁, x₂ + η(x₁) φ(x₂ − Ly))`, so
//!
//! ```text
//! ∇Ψ = [[1, 0], [a, b]],  a = ∂η·φ,  b = 1 + η·φ′,  J = b,
//! B = J (∇Ψ)⁻¹ = [[b, 0], [−a, 1]],  A = B Bᵀ / J.
//! ```

use crate::algebra::Mat2;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::spectral::{Periodic1d, TrigInterpolant};

/// Iteration cap of the inverse-map root solve.
pub const INVERSE_MAX_ITER: usize = 100;

/// Quintic smoothstep cutoff: 1 on `[−L/4, ∞)`, 0 on `(−∞, −3L/4]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cutoff {
    pub half_width: f64,
}

impl Cutoff {
    #[inline]
    fn ramp(&self, s: f64) -> f64 {
        let l = self.half_width;
        if s <= -0.75 * l {
            0.0
        } else if s >= -0.25 * l {
            1.0
        } else {
            ((s + 0.75 * l) / (0.5 * l)).clamp(0.0, 1.0)
        }
    }

    #[inline]
    pub fn value(&self, s: f64) -> f64 {
        let r = self.ramp(s);
        r * r * r * (10.0 + r * (-15.0 + 6.0 * r))
    }

    #[inline]
    pub fn derivative(&self, s: f64) -> f64 {
        let r = self.ramp(s);
        if r <= 0.0 || r >= 1.0 {
            return 0.0;
        }
        30.0 * r * r * (1.0 - r) * (1.0 - r) / (0.5 * self.half_width)
    }

    #[inline]
    pub fn second_derivative(&self, s: f64) -> f64 {
        let r = self.ramp(s);
        if r <= 0.0 || r >= 1.0 {
            return 0.0;
        }
        let w = 0.5 * self.half_width;
        60.0 * r * (1.0 - r) * (1.0 - 2.0 * r) / (w * w)
    }

    /// Largest value of `φ′`, attained at the middle of the ramp.
    pub fn max_derivative(&self) -> f64 {
        3.75 / self.half_width
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReferenceDomain {
    pub lx: f64,
    pub ly: f64,
    /// Tube half-width `L`; the cutoff lives on `(−L, 0]`.
    pub half_width: f64,
    pub nx: usize,
    pub ny: usize,
}

impl ReferenceDomain {
    pub fn new(lx: f64, ly: f64, half_width: f64, nx: usize, ny: usize) -> Result<Self> {
        let d = Self {
            lx,
            ly,
            half_width,
            nx,
            ny,
        };
        d.validate()?;
        Ok(d)
    }

    /// Default channel: `Lx = 2`, `Ly = 1`, `L = 0.4 Ly`, square cells.
    pub fn channel(nx: usize) -> Result<Self> {
        Self::new(2.0, 1.0, 0.4, nx, nx / 2)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lx > 0.0 && self.ly > 0.0) {
            return Err(Error::Config(format!(
                "domain lengths must be positive, got Lx = {}, Ly = {}",
                self.lx, self.ly
            )));
        }
        if !(self.half_width > 0.0 && self.half_width < 0.5 * self.ly) {
            return Err(Error::Config(format!(
                "tube half-width L = {} must lie in (0, Ly/2 = {})",
                self.half_width,
                0.5 * self.ly
            )));
        }
        if (self.lx * self.ly - 1.0).abs() < 1e-12 {
            return Err(Error::Config(
                "reference area Lx·Ly must differ from 1".into(),
            ));
        }
        if self.nx < 4 || self.ny < 4 {
            return Err(Error::Config(format!(
                "grid too small: {}×{}",
                self.nx, self.ny
            )));
        }
        Ok(())
    }

    pub fn cutoff(&self) -> Cutoff {
        Cutoff {
            half_width: self.half_width,
        }
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.nx, self.ny, self.lx, self.ly).expect("validated domain")
    }

    /// Signed distance coordinate `s = x₂ − Ly` to the flexible boundary.
    #[inline]
    pub fn s(&self, x2: f64) -> f64 {
        x2 - self.ly
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }
}

/// A periodic boundary function sampled at the shell nodes `(i+½)·Lx/n`,
/// with spectral off-grid evaluation.
#[derive(Clone, Debug)]
pub struct BoundaryProfile {
    values: Vec<f64>,
    interp: TrigInterpolant,
}

impl BoundaryProfile {
    pub fn new(values: Vec<f64>, lx: f64) -> Self {
        let n = values.len();
        let plan = Periodic1d::new(n, lx);
        let interp = TrigInterpolant::new(&plan, &values, 0.5 * lx / n as f64);
        Self { values, interp }
    }

    pub fn with_plan(values: Vec<f64>, plan: &Periodic1d) -> Self {
        let n = values.len();
        let interp = TrigInterpolant::new(plan, &values, 0.5 * plan.len() / n as f64);
        Self { values, interp }
    }

    pub fn zeros(n: usize, lx: f64) -> Self {
        Self::new(vec![0.0; n], lx)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, x1: f64) -> f64 {
        self.interp.value(x1)
    }

    pub fn slope(&self, x1: f64) -> f64 {
        self.interp.derivative(x1, 1)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

fn check_admissible(domain: &ReferenceDomain, eta: &BoundaryProfile) -> Result<()> {
    let sup = eta.sup_norm();
    if !(sup < domain.half_width) {
        return Err(Error::Degeneracy {
            time: f64::NAN,
            detail: format!(
                "‖η‖∞ = {sup} reached the tube half-width L = {}",
                domain.half_width
            ),
        });
    }
    Ok(())
}

/// `Ψ_η(x)`.
pub fn hanzawa_forward(domain: &ReferenceDomain, eta: &BoundaryProfile, x: [f64; 2]) -> Result<[f64; 2]> {
    check_admissible(domain, eta)?;
    let phi = domain.cutoff().value(domain.s(x[1]));
    if phi == 0.0 {
        return Ok(x);
    }
    Ok([x[0], x[1] + eta.value(x[0]) * phi])
}

/// `Ψ_η⁻¹(x̃)` by a bracketed Newton iteration in the vertical coordinate.
pub fn hanzawa_inverse(domain: &ReferenceDomain, eta: &BoundaryProfile, xt: [f64; 2]) -> Result<[f64; 2]> {
    check_admissible(domain, eta)?;
    let e = eta.value(xt[0]);
    if e == 0.0 {
        return Ok(xt);
    }
    let cut = domain.cutoff();
    let f = |y: f64| y + e * cut.value(domain.s(y)) - xt[1];
    let df = |y: f64| 1.0 + e * cut.derivative(domain.s(y));
    let l = domain.half_width;
    let (mut lo, mut hi) = (xt[1] - l, xt[1] + l);
    let mut y = xt[1] - e;
    for _ in 0..INVERSE_MAX_ITER {
        let fy = f(y);
        if fy.abs() <= 1e-15 * (1.0 + xt[1].abs()) {
            return Ok([xt[0], y]);
        }
        if fy > 0.0 {
            hi = hi.min(y);
        } else {
            lo = lo.max(y);
        }
        let d = df(y);
        if d <= 0.0 {
            return Err(Error::Degeneracy {
                time: f64::NAN,
                detail: format!("non-positive Jacobian {d} during inverse map"),
            });
        }
        let mut next = y - fy / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - y).abs() <= 1e-16 * (1.0 + y.abs()) {
            return Ok([xt[0], next]);
        }
        y = next;
    }
    Err(Error::Numerical(format!(
        "inverse Hanzawa map did not converge at ({}, {})",
        xt[0], xt[1]
    )))
}

/// Metric coefficients `(a, b)` of `∇Ψ = [[1,0],[a,b]]` at `x`.
#[inline]
fn metric_ab(domain: &ReferenceDomain, eta: f64, eta_y: f64, x2: f64) -> (f64, f64) {
    let cut = domain.cutoff();
    let s = domain.s(x2);
    (eta_y * cut.value(s), 1.0 + eta * cut.derivative(s))
}

#[inline]
pub fn grad_from_ab(a: f64, b: f64) -> Mat2 {
    Mat2::new(1.0, 0.0, a, b)
}

#[inline]
pub fn piola_from_ab(a: f64, b: f64) -> (Mat2, Mat2) {
    let bm = Mat2::new(b, 0.0, -a, 1.0);
    let am = Mat2::sym(b, -a, (a * a + 1.0) / b);
    (bm, am)
}

/// `(∇Ψ, J)` at `x`.
pub fn hanzawa_jacobian(domain: &ReferenceDomain, eta: &BoundaryProfile, x: [f64; 2]) -> Result<(Mat2, f64)> {
    check_admissible(domain, eta)?;
    let (a, b) = metric_ab(domain, eta.value(x[0]), eta.slope(x[0]), x[1]);
    let g = grad_from_ab(a, b);
    let j = g.det();
    if !(j > 0.0) {
        return Err(Error::Degeneracy {
            time: f64::NAN,
            detail: format!("Jacobian J = {j} at ({}, {})", x[0], x[1]),
        });
    }
    Ok((g, j))
}

/// `(B, A)` at `x`, with `B` from the adjugate of `∇Ψ`.
pub fn piola_matrices(domain: &ReferenceDomain, eta: &BoundaryProfile, x: [f64; 2]) -> Result<(Mat2, Mat2)> {
    let (g, j) = hanzawa_jacobian(domain, eta, x)?;
    let b = g.adjugate();
    let a = (b * b.transpose()).scale(1.0 / j);
    Ok((b, a))
}

/// `(∂ₜΨ, ∂ₜΨ⁻¹∘Ψ)` at `x`.
pub fn map_time_derivative(
    domain: &ReferenceDomain,
    eta: &BoundaryProfile,
    eta_dot: &BoundaryProfile,
    x: [f64; 2],
) -> Result<([f64; 2], [f64; 2])> {
    let (g, j) = hanzawa_jacobian(domain, eta, x)?;
    let w = eta_dot.value(x[0]) * domain.cutoff().value(domain.s(x[1]));
    let dpsi = [0.0, w];
    let inv = g.adjugate().scale(1.0 / j).mul_vec(dpsi);
    Ok((dpsi, [-inv[0], -inv[1]]))
}

/// Closed-form metric samples at one family of grid points.
#[derive(Clone, Debug, Default)]
pub struct MetricSamples {
    /// `∂η·φ`
    pub a: Vec<f64>,
    /// `1 + η·φ′` (equal to `J`)
    pub b: Vec<f64>,
    /// mesh velocity `∂ₜη·φ` (vertical component of `∂ₜΨ`)
    pub w: Vec<f64>,
}

impl MetricSamples {
    pub fn at(&self, k: usize) -> (f64, f64, f64) {
        (self.a[k], self.b[k], self.w[k])
    }

    pub fn b_matrix(&self, k: usize) -> Mat2 {
        piola_from_ab(self.a[k], self.b[k]).0
    }

    pub fn a_matrix(&self, k: usize) -> Mat2 {
        piola_from_ab(self.a[k], self.b[k]).1
    }
}

/// Snapshot of the Hanzawa map on the staggered grid.
///
/// Besides closed-form samples of `a`, `b`, `w` at cells, faces and corners,
/// it carries the discrete ("mimetic") coefficients obtained by differencing
/// the vertical displacement `η φ` between grid points. These satisfy the
/// discrete Piola identity exactly and make `Σ J_cell·hx·hy` equal to the
/// deformed area.
#[derive(Clone, Debug)]
pub struct HanzawaMap {
    pub domain: ReferenceDomain,
    pub grid: Grid,
    pub time: f64,
    pub eta: BoundaryProfile,
    pub eta_dot: BoundaryProfile,
    /// cell centres
    pub cell: MetricSamples,
    /// horizontal-velocity faces
    pub uface: MetricSamples,
    /// vertical-velocity faces, wall rows included
    pub vface: MetricSamples,
    /// corners `(i hx, j hy)`, `j = 0..=ny`
    pub corner: MetricSamples,
    /// discrete `b` on horizontal-velocity faces (also their volume weight)
    pub b_u: Vec<f64>,
    /// discrete `a` on vertical-velocity faces
    pub a_v: Vec<f64>,
    /// discrete Jacobian of cells
    pub j_cell: Vec<f64>,
    /// discrete Jacobian (volume weight) of vertical-velocity faces
    pub j_v: Vec<f64>,
}

impl HanzawaMap {
    /// Builds the snapshot from shell samples at the nodes `(i+½)hx`.
    pub fn new(domain: &ReferenceDomain, eta: &[f64], eta_dot: &[f64], time: f64) -> Result<Self> {
        let grid = domain.grid();
        let (nx, ny) = (grid.nx, grid.ny);
        if eta.len() != nx || eta_dot.len() != nx {
            return Err(Error::InvalidArgument(format!(
                "shell samples must have {nx} entries, got {} and {}",
                eta.len(),
                eta_dot.len()
            )));
        }
        let plan = Periodic1d::new(nx, domain.lx);
        let eta_p = BoundaryProfile::with_plan(eta.to_vec(), &plan);
        let eta_dot_p = BoundaryProfile::with_plan(eta_dot.to_vec(), &plan);
        if let Err(Error::Degeneracy { detail, .. }) = check_admissible(domain, &eta_p) {
            return Err(Error::Degeneracy { time, detail });
        }

        let zero = eta.iter().all(|&v| v == 0.0);
        let zero_dot = eta_dot.iter().all(|&v| v == 0.0);
        let half = -0.5 * grid.hx;
        let (eta_f, eta_y_c, eta_y_f) = if zero {
            (vec![0.0; nx], vec![0.0; nx], vec![0.0; nx])
        } else {
            (
                plan.shift(eta, half),
                plan.derivative(eta, 1),
                plan.shifted_derivative(eta, half, 1),
            )
        };
        let eta_dot_f = if zero_dot {
            vec![0.0; nx]
        } else {
            plan.shift(eta_dot, half)
        };
        let cut = domain.cutoff();
        let s = |y: f64| domain.s(y);

        let fill = |n_rows: usize, y_of: &dyn Fn(usize) -> f64, e: &[f64], ey: &[f64], ed: &[f64]| {
            let mut m = MetricSamples {
                a: Vec::with_capacity(n_rows * nx),
                b: Vec::with_capacity(n_rows * nx),
                w: Vec::with_capacity(n_rows * nx),
            };
            for j in 0..n_rows {
                let sy = s(y_of(j));
                let (phi, dphi) = (cut.value(sy), cut.derivative(sy));
                for i in 0..nx {
                    m.a.push(ey[i] * phi);
                    m.b.push(1.0 + e[i] * dphi);
                    m.w.push(ed[i] * phi);
                }
            }
            m
        };
        let cell = fill(ny, &|j| grid.yc(j), eta, &eta_y_c, eta_dot);
        let uface = fill(ny, &|j| grid.yc(j), &eta_f, &eta_y_f, &eta_dot_f);
        let vface = fill(ny + 1, &|j| grid.yf(j), eta, &eta_y_c, eta_dot);
        let corner = fill(ny + 1, &|j| grid.yf(j), &eta_f, &eta_y_f, &eta_dot_f);

        // Discrete displacement differences.
        let disp = |e: f64, y: f64| e * cut.value(s(y));
        let mut b_u = Vec::with_capacity(nx * ny);
        let mut j_cell = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            let (y0, y1) = (grid.yf(j), grid.yf(j + 1));
            for i in 0..nx {
                b_u.push(1.0 + (disp(eta_f[i], y1) - disp(eta_f[i], y0)) / grid.hy);
            }
            for &e in eta.iter().take(nx) {
                j_cell.push(1.0 + (disp(e, y1) - disp(e, y0)) / grid.hy);
            }
        }
        let mut a_v = Vec::with_capacity(nx * (ny + 1));
        let mut j_v = Vec::with_capacity(nx * (ny + 1));
        for j in 0..=ny {
            let y = grid.yf(j);
            let (ylo, yhi) = (y - 0.5 * grid.hy, y + 0.5 * grid.hy);
            for i in 0..nx {
                let ip = grid.ip(i);
                a_v.push((disp(eta_f[ip], y) - disp(eta_f[i], y)) / grid.hx);
                j_v.push(1.0 + (disp(eta[i], yhi) - disp(eta[i], ylo)) / grid.hy);
            }
        }

        let map = Self {
            domain: *domain,
            grid,
            time,
            eta: eta_p,
            eta_dot: eta_dot_p,
            cell,
            uface,
            vface,
            corner,
            b_u,
            a_v,
            j_cell,
            j_v,
        };
        map.check_jacobian()?;
        Ok(map)
    }

    /// Identity map (flat shell at rest).
    pub fn identity(domain: &ReferenceDomain, time: f64) -> Result<Self> {
        let n = domain.nx;
        Self::new(domain, &vec![0.0; n], &vec![0.0; n], time)
    }

    fn check_jacobian(&self) -> Result<()> {
        let families: [(&str, &[f64]); 6] = [
            ("cell", &self.cell.b),
            ("u-face", &self.uface.b),
            ("v-face", &self.vface.b),
            ("corner", &self.corner.b),
            ("discrete cell", &self.j_cell),
            ("discrete face", &self.b_u),
        ];
        for (name, vals) in families {
            if let Some(j) = vals.iter().copied().find(|j| !(*j > 0.0)) {
                return Err(Error::Degeneracy {
                    time: self.time,
                    detail: format!("non-positive Jacobian {j} at a {name} point"),
                });
            }
        }
        if let Some(j) = self.j_v.iter().copied().find(|j| !(*j > 0.0)) {
            return Err(Error::Degeneracy {
                time: self.time,
                detail: format!("non-positive Jacobian {j} at a vertical face"),
            });
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.eta.is_zero() && self.eta_dot.is_zero()
    }

    /// `∫ J dx` from the discrete cell Jacobians.
    pub fn deformed_area(&self) -> f64 {
        self.j_cell.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn min_jacobian(&self) -> f64 {
        self.j_cell.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn forward(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        hanzawa_forward(&self.domain, &self.eta, x)
    }

    pub fn inverse(&self, x: [f64; 2]) -> Result<[f64; 2]> {
        hanzawa_inverse(&self.domain, &self.eta, x)
    }

    pub fn jacobian(&self, x: [f64; 2]) -> Result<(Mat2, f64)> {
        hanzawa_jacobian(&self.domain, &self.eta, x)
    }

    pub fn piola(&self, x: [f64; 2]) -> Result<(Mat2, Mat2)> {
        piola_matrices(&self.domain, &self.eta, x)
    }

    pub fn time_derivative(&self, x: [f64; 2]) -> Result<([f64; 2], [f64; 2])> {
        map_time_derivative(&self.domain, &self.eta, &self.eta_dot, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cutoff_shape() {
        let c = Cutoff { half_width: 0.4 };
        assert_eq!(c.value(0.0), 1.0);
        assert_eq!(c.value(-0.1), 1.0);
        assert_eq!(c.value(-0.31), 0.0);
        assert_eq!(c.value(-0.39), 0.0);
        assert_eq!(c.value(0.2), 1.0);
        assert!((c.value(-0.2) - 0.5).abs() < 1e-15);
        assert!((c.derivative(-0.2) - c.max_derivative()).abs() < 1e-12);
        let h = 1e-6;
        for s in [-0.29, -0.25, -0.2, -0.15, -0.11] {
            let fd = (c.value(s + h) - c.value(s - h)) / (2.0 * h);
            assert!((fd - c.derivative(s)).abs() < 1e-6);
            let fd2 = (c.derivative(s + h) - c.derivative(s - h)) / (2.0 * h);
            assert!((fd2 - c.second_derivative(s)).abs() < 1e-4);
        }
    }

    #[test]
    fn domain_validation() {
        assert!(ReferenceDomain::new(1.0, 1.0, 0.4, 16, 16).is_err());
        assert!(ReferenceDomain::new(2.0, 1.0, 0.6, 16, 8).is_err());
        assert!(ReferenceDomain::channel(32).is_ok());
    }

    #[test]
    fn identity_map_has_trivial_metrics() {
        let d = ReferenceDomain::channel(16).unwrap();
        let m = HanzawaMap::identity(&d, 0.0).unwrap();
        assert!(m.j_cell.iter().all(|&j| j == 1.0));
        assert!(m.b_u.iter().all(|&j| j == 1.0));
        assert!(m.a_v.iter().all(|&a| a == 0.0));
        assert!(m.cell.b.iter().all(|&b| b == 1.0));
        assert!(m.corner.a.iter().all(|&a| a == 0.0));
        assert!(m.is_identity());
    }

    #[test]
    fn discrete_area_is_preserved_for_mean_zero_eta() {
        let d = ReferenceDomain::channel(32).unwrap();
        let g = d.grid();
        let eta: Vec<f64> = g
            .shell_nodes()
            .iter()
            .map(|&x| 0.05 * (std::f64::consts::PI * x).cos() + 0.02 * (3.0 * std::f64::consts::PI * x).sin())
            .collect();
        let m = HanzawaMap::new(&d, &eta, &vec![0.0; 32], 0.0).unwrap();
        assert!((m.deformed_area() - d.area()).abs() < 1e-13);
    }

    #[test]
    fn degenerate_eta_is_rejected() {
        let d = ReferenceDomain::channel(16).unwrap();
        let eta = vec![0.5; 16];
        match HanzawaMap::new(&d, &eta, &[0.0; 16], 1.5) {
            Err(Error::Degeneracy { time, .. }) => assert_eq!(time, 1.5),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }
}
