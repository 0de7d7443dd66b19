//! Trigonometric tools on uniform periodic 1D grids, plus the dense
//! orthonormal cosine/Fourier bases used for exact modal exponentials.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// FFT plans and wavenumbers for a periodic grid of `n` samples over length `len`.
#[derive(Clone)]
pub struct Periodic1d {
    n: usize,
    len: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Periodic1d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Periodic1d").field("n", &self.n).field("len", &self.len).finish()
    }
}

impl Periodic1d {
    pub fn new(n: usize, len: f64) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            len,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> f64 {
        self.len
    }

    /// Signed integer mode index of DFT slot `m`.
    #[inline]
    pub fn mode_index(&self, m: usize) -> i64 {
        if 2 * m <= self.n {
            m as i64
        } else {
            m as i64 - self.n as i64
        }
    }

    /// Angular wavenumber `2π|k|/len` of slot `m`.
    #[inline]
    pub fn wavenumber(&self, m: usize) -> f64 {
        2.0 * PI * self.mode_index(m).unsigned_abs() as f64 / self.len
    }

    #[inline]
    fn is_nyquist(&self, m: usize) -> bool {
        self.n.is_multiple_of(2) && 2 * m == self.n
    }

    /// Unnormalised forward DFT of real samples.
    pub fn forward(&self, x: &[f64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n);
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse of [`forward`](Self::forward), keeping the real part.
    pub fn inverse(&self, mut c: Vec<Complex64>) -> Vec<f64> {
        assert_eq!(c.len(), self.n);
        self.inv.process(&mut c);
        let s = 1.0 / self.n as f64;
        c.iter().map(|z| z.re * s).collect()
    }

    /// Applies a per-slot multiplier in Fourier space.
    pub fn filter(&self, x: &[f64], mult: impl Fn(usize) -> Complex64) -> Vec<f64> {
        let mut c = self.forward(x);
        for (m, z) in c.iter_mut().enumerate() {
            *z *= mult(m);
        }
        self.inverse(c)
    }

    /// Spectral derivative of order `order`.
    pub fn derivative(&self, x: &[f64], order: u32) -> Vec<f64> {
        self.filter(x, |m| {
            if order % 2 == 1 && self.is_nyquist(m) {
                return Complex64::new(0.0, 0.0);
            }
            let k = 2.0 * PI * self.mode_index(m) as f64 / self.len;
            Complex64::new(0.0, k).powu(order)
        })
    }

    /// Values of the trigonometric interpolant at the shifted points `x_j + delta`.
    pub fn shift(&self, x: &[f64], delta: f64) -> Vec<f64> {
        self.filter(x, |m| {
            let k = 2.0 * PI * self.mode_index(m) as f64 / self.len;
            if self.is_nyquist(m) {
                Complex64::new((k * delta).cos(), 0.0)
            } else {
                Complex64::from_polar(1.0, k * delta)
            }
        })
    }

    /// Derivative of the interpolant at shifted points.
    pub fn shifted_derivative(&self, x: &[f64], delta: f64, order: u32) -> Vec<f64> {
        self.filter(x, |m| {
            let k = 2.0 * PI * self.mode_index(m) as f64 / self.len;
            if self.is_nyquist(m) {
                // d^r/dx^r cos(k(x+δ)) at a sample node, where sin(k x_j) = 0.
                let v = match order % 4 {
                    0 => (k * delta).cos(),
                    1 => -(k * delta).sin(),
                    2 => -(k * delta).cos(),
                    _ => (k * delta).sin(),
                };
                Complex64::new(v * k.powi(order as i32), 0.0)
            } else {
                Complex64::from_polar(1.0, k * delta) * Complex64::new(0.0, k).powu(order)
            }
        })
    }

    /// Removes the mean (slot 0).
    pub fn project_mean_zero(x: &mut [f64]) {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        x.iter_mut().for_each(|v| *v -= mean);
    }
}

/// Coefficients of the real trigonometric interpolant, for evaluation at arbitrary points.
#[derive(Clone, Debug)]
pub struct TrigInterpolant {
    len: f64,
    origin: f64,
    /// Normalised complex coefficients `c_m / n` for slots `0..=n/2`.
    coeffs: Vec<Complex64>,
    n: usize,
}

impl TrigInterpolant {
    /// `samples[j]` is the value at `origin + j·len/n`.
    pub fn new(plan: &Periodic1d, samples: &[f64], origin: f64) -> Self {
        let n = plan.n();
        let c = plan.forward(samples);
        let s = 1.0 / n as f64;
        let coeffs = c[..=n / 2].iter().map(|z| z * s).collect();
        Self {
            len: plan.len(),
            origin,
            coeffs,
            n,
        }
    }

    fn sum(&self, x: f64, order: u32) -> f64 {
        let theta = 2.0 * PI * (x - self.origin) / self.len;
        let mut acc = 0.0;
        for (m, c) in self.coeffs.iter().enumerate() {
            let k = 2.0 * PI * m as f64 / self.len;
            let phase = Complex64::from_polar(1.0, theta * m as f64);
            let d = Complex64::new(0.0, k).powu(order);
            let term = (c * phase * d).re;
            if m == 0 || (self.n.is_multiple_of(2) && 2 * m == self.n) {
                acc += term;
            } else {
                acc += 2.0 * term;
            }
        }
        acc
    }

    pub fn value(&self, x: f64) -> f64 {
        self.sum(x, 0)
    }

    pub fn derivative(&self, x: f64, order: u32) -> f64 {
        self.sum(x, order)
    }

    /// Largest absolute value over a fine resample, a cheap sup-norm estimate.
    pub fn max_abs_estimate(&self, oversample: usize) -> f64 {
        let m = self.n * oversample.max(1);
        (0..m)
            .map(|j| self.value(self.origin + self.len * j as f64 / m as f64).abs())
            .fold(0.0, f64::max)
    }
}

/// Dense orthonormal eigenbasis of a 1D second-difference operator.
#[derive(Clone, Debug)]
pub struct DenseBasis {
    n: usize,
    /// Column `m` is the `m`-th orthonormal eigenvector, stored row-major `q[j*n + m]`.
    q: Vec<f64>,
    /// Eigenvalues of the (negative semi-definite) difference Laplacian.
    pub eigenvalues: Vec<f64>,
}

impl DenseBasis {
    /// Cell-centred Neumann Laplacian `(u_{j+1} − 2u_j + u_{j−1})/h²` with mirrored ghosts.
    pub fn neumann_cells(n: usize, h: f64) -> Self {
        let mut q = vec![0.0; n * n];
        let mut eig = Vec::with_capacity(n);
        for m in 0..n {
            let norm = if m == 0 {
                (1.0 / n as f64).sqrt()
            } else {
                (2.0 / n as f64).sqrt()
            };
            for j in 0..n {
                q[j * n + m] = norm * (PI * m as f64 * (j as f64 + 0.5) / n as f64).cos();
            }
            let s = (PI * m as f64 / (2.0 * n as f64)).sin();
            eig.push(-4.0 * s * s / (h * h));
        }
        Self {
            n,
            q,
            eigenvalues: eig,
        }
    }

    /// Periodic Laplacian, real Fourier basis.
    pub fn periodic(n: usize, h: f64) -> Self {
        let mut q = vec![0.0; n * n];
        let mut eig = vec![0.0; n];
        // Column layout: 0 = constant; then cos/sin pairs; Nyquist cosine last for even n.
        let mut col = 0;
        let push = |q: &mut Vec<f64>, eig: &mut Vec<f64>, col: &mut usize, f: &dyn Fn(usize) -> f64, norm: f64, k: usize| {
            for j in 0..n {
                q[j * n + *col] = norm * f(j);
            }
            let s = (PI * k as f64 / n as f64).sin();
            eig[*col] = -4.0 * s * s / (h * h);
            *col += 1;
        };
        push(&mut q, &mut eig, &mut col, &|_| 1.0, (1.0 / n as f64).sqrt(), 0);
        let half = (n - 1) / 2;
        for k in 1..=half {
            let w = 2.0 * PI * k as f64 / n as f64;
            let nrm = (2.0 / n as f64).sqrt();
            push(&mut q, &mut eig, &mut col, &move |j| (w * j as f64).cos(), nrm, k);
            push(&mut q, &mut eig, &mut col, &move |j| (w * j as f64).sin(), nrm, k);
        }
        if n.is_multiple_of(2) {
            push(
                &mut q,
                &mut eig,
                &mut col,
                &|j| if j % 2 == 0 { 1.0 } else { -1.0 },
                (1.0 / n as f64).sqrt(),
                n / 2,
            );
        }
        debug_assert_eq!(col, n);
        Self {
            n,
            q,
            eigenvalues: eig,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn q(&self, j: usize, m: usize) -> f64 {
        self.q[j * self.n + m]
    }
}

/// Separable modal basis on an `nx × ny` cell grid, periodic in x (FFT) and
/// Neumann in y (dense cosine basis).
#[derive(Clone)]
pub struct ModalBasis2d {
    nx: usize,
    pub by: DenseBasis,
    /// periodic eigenvalues in FFT order
    pub eig_x: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for ModalBasis2d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModalBasis2d").field("nx", &self.nx).field("ny", &self.by.n()).finish()
    }
}

impl ModalBasis2d {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64) -> Self {
        let mut planner = FftPlanner::new();
        let eig_x = (0..nx)
            .map(|k| {
                let s = (PI * k as f64 / nx as f64).sin();
                -4.0 * s * s / (hx * hx)
            })
            .collect();
        Self {
            nx,
            by: DenseBasis::neumann_cells(ny, hy),
            eig_x,
            fwd: planner.plan_fft_forward(nx),
            inv: planner.plan_fft_inverse(nx),
        }
    }

    /// `f(λ)` for every mode, in the layout used by [`Self::apply_factors`].
    pub fn factors(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        let nx = self.nx;
        let mut out = vec![0.0; nx * self.by.n()];
        for (l, ly) in self.by.eigenvalues.iter().enumerate() {
            for (k, lx) in self.eig_x.iter().enumerate() {
                out[l * nx + k] = f(lx + ly);
            }
        }
        out
    }

    /// Applies `f(λ)` to the discrete Laplacian, where `λ ≤ 0` is the eigenvalue.
    pub fn apply_function(&self, field: &mut [f64], f: impl Fn(f64) -> f64) {
        let fac = self.factors(f);
        self.apply_factors(field, &fac);
    }

    /// Multiplies modal coefficients by precomputed factors.
    pub fn apply_factors(&self, field: &mut [f64], factors: &[f64]) {
        let (nx, ny) = (self.nx, self.by.n());
        assert_eq!(field.len(), nx * ny);
        assert_eq!(factors.len(), nx * ny);
        let qy = &self.by.q;
        let mut rows: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for r in rows.chunks_exact_mut(nx) {
            self.fwd.process(r);
        }
        // cosine transform in y, scale, and back, one wavenumber column at a time
        let mut col = vec![Complex64::new(0.0, 0.0); ny];
        let mut coef = vec![Complex64::new(0.0, 0.0); ny];
        let scale = 1.0 / nx as f64;
        for k in 0..nx {
            for (j, c) in col.iter_mut().enumerate() {
                *c = rows[j * nx + k];
            }
            for (l, c) in coef.iter_mut().enumerate() {
                let mut s = Complex64::new(0.0, 0.0);
                for (j, v) in col.iter().enumerate() {
                    s += v * qy[j * ny + l];
                }
                *c = s * (factors[l * nx + k] * scale);
            }
            for j in 0..ny {
                let q = &qy[j * ny..(j + 1) * ny];
                rows[j * nx + k] = coef.iter().zip(q).map(|(c, w)| c * w).sum();
            }
        }
        for r in rows.chunks_exact_mut(nx) {
            self.inv.process(r);
        }
        for (f, c) in field.iter_mut().zip(&rows) {
            *f = c.re;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_sine_is_exact() {
        let n = 32;
        let len = 2.0;
        let p = Periodic1d::new(n, len);
        let x: Vec<f64> = (0..n).map(|j| (2.0 * PI * 3.0 * j as f64 / n as f64).sin()).collect();
        let d = p.derivative(&x, 1);
        let k = 2.0 * PI * 3.0 / len;
        for j in 0..n {
            let want = k * (2.0 * PI * 3.0 * j as f64 / n as f64).cos();
            assert!((d[j] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_and_pointwise_agree() {
        let n = 16;
        let len = 2.0;
        let p = Periodic1d::new(n, len);
        let f = |x: f64| (PI * x).cos() + 0.3 * (3.0 * PI * x).sin() + 0.1 * (7.0 * PI * x).cos();
        let h = len / n as f64;
        let xs: Vec<f64> = (0..n).map(|j| f(0.5 * h + j as f64 * h)).collect();
        let sh = p.shift(&xs, -0.5 * h);
        let ti = TrigInterpolant::new(&p, &xs, 0.5 * h);
        for j in 0..n {
            let x = j as f64 * h;
            assert!((sh[j] - ti.value(x)).abs() < 1e-12);
            assert!((sh[j] - f(x)).abs() < 1e-12, "{} vs {}", sh[j], f(x));
        }
        let d = p.shifted_derivative(&xs, -0.5 * h, 1);
        for j in 0..n {
            let x = j as f64 * h;
            assert!((d[j] - ti.derivative(x, 1)).abs() < 1e-10);
        }
    }

    fn check_orthonormal(b: &DenseBasis) {
        let n = b.n();
        for a in 0..n {
            for c in 0..n {
                let s: f64 = (0..n).map(|j| b.q(j, a) * b.q(j, c)).sum();
                let want = if a == c { 1.0 } else { 0.0 };
                assert!((s - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_bases_are_orthonormal_eigenbases() {
        for b in [DenseBasis::neumann_cells(12, 0.1), DenseBasis::periodic(12, 0.1), DenseBasis::periodic(9, 0.1)] {
            check_orthonormal(&b);
        }
        let h = 0.1;
        let b = DenseBasis::neumann_cells(10, h);
        let n = 10;
        for m in 0..n {
            for j in 0..n {
                let c = b.q(j, m);
                let lo = if j == 0 { c } else { b.q(j - 1, m) };
                let hi = if j + 1 == n { c } else { b.q(j + 1, m) };
                let lap = (lo - 2.0 * c + hi) / (h * h);
                assert!((lap - b.eigenvalues[m] * c).abs() < 1e-9);
            }
        }
        let b = DenseBasis::periodic(10, h);
        for m in 0..n {
            for j in 0..n {
                let c = b.q(j, m);
                let lap = (b.q((j + n - 1) % n, m) - 2.0 * c + b.q((j + 1) % n, m)) / (h * h);
                assert!((lap - b.eigenvalues[m] * c).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn modal_identity_function_round_trips() {
        let basis = ModalBasis2d::new(8, 6, 0.25, 0.2);
        let mut f: Vec<f64> = (0..48).map(|k| ((k * 7) % 11) as f64 - 5.0).collect();
        let orig = f.clone();
        basis.apply_function(&mut f, |_| 1.0);
        for (a, b) in f.iter().zip(&orig) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn modal_exponential_matches_dense_eigenbasis() {
        let (nx, ny, hx, hy) = (10, 6, 0.2, 0.15);
        let basis = ModalBasis2d::new(nx, ny, hx, hy);
        let (bx, by) = (DenseBasis::periodic(nx, hx), DenseBasis::neumann_cells(ny, hy));
        let orig: Vec<f64> = (0..nx * ny).map(|k| (((k * 13) % 17) as f64 - 8.0) / 3.0).collect();
        let g = |lam: f64| (0.01 * lam).exp();
        let mut fast = orig.clone();
        basis.apply_function(&mut fast, g);
        let mut slow = vec![0.0; nx * ny];
        for l in 0..ny {
            for m in 0..nx {
                let mut c = 0.0;
                for j in 0..ny {
                    for i in 0..nx {
                        c += orig[j * nx + i] * bx.q(i, m) * by.q(j, l);
                    }
                }
                c *= g(bx.eigenvalues[m] + by.eigenvalues[l]);
                for j in 0..ny {
                    for i in 0..nx {
                        slow[j * nx + i] += c * bx.q(i, m) * by.q(j, l);
                    }
                }
            }
        }
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-13, "{a} {b}");
        }
    }
}
