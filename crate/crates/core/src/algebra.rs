//! Pointwise 2×2 tensor algebra for the corotational stress model.
//!
//! Everything here is a pure function on small value types. The exact
//! planar rotation propagator is the reference solution for transport of
//! a stress tensor along a characteristic with vorticity `W`.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};

/// Antisymmetry tolerance accepted by [`corotation_term`].
pub const ANTISYMMETRY_TOL: f64 = 1e-10;

/// Orthogonality drift tolerated by [`rotation_propagate`].
pub const ORTHOGONALITY_TOL: f64 = 1e-8;

/// A real 2×2 matrix, stored row-major.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const ZERO: Mat2 = Mat2([[0.0, 0.0], [0.0, 0.0]]);
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub const fn new(a11: f64, a12: f64, a21: f64, a22: f64) -> Self {
        Mat2([[a11, a12], [a21, a22]])
    }

    pub const fn diag(a: f64, b: f64) -> Self {
        Mat2([[a, 0.0], [0.0, b]])
    }

    /// Symmetric matrix from its three independent entries.
    pub const fn sym(a11: f64, a12: f64, a22: f64) -> Self {
        Mat2([[a11, a12], [a12, a22]])
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[i][j]
    }

    #[inline]
    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Mat2([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    #[inline]
    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    #[inline]
    pub fn det(&self) -> f64 {
        self.0[0][0] * self.0[1][1] - self.0[0][1] * self.0[1][0]
    }

    /// Adjugate (transpose of the cofactor matrix): `M adj(M) = det(M) I`.
    #[inline]
    pub fn adjugate(&self) -> Self {
        let m = &self.0;
        Mat2([[m[1][1], -m[0][1]], [-m[1][0], m[0][0]]])
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.adjugate().scale(1.0 / d))
    }

    #[inline]
    pub fn scale(&self, s: f64) -> Self {
        let m = &self.0;
        Mat2([[s * m[0][0], s * m[0][1]], [s * m[1][0], s * m[1][1]]])
    }

    /// Double contraction `A : B = Σ a_ij b_ij`.
    #[inline]
    pub fn ddot(&self, other: &Mat2) -> f64 {
        let (a, b) = (&self.0, &other.0);
        a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
    }

    #[inline]
    pub fn frobenius(&self) -> f64 {
        self.ddot(self).sqrt()
    }

    #[inline]
    pub fn mul_vec(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    /// `n`-fold matrix product `M^n`; `M^0 = I`.
    pub fn powi(&self, n: u32) -> Self {
        (0..n).fold(Mat2::IDENTITY, |acc, _| acc * *self)
    }

    pub fn symmetric_part(&self) -> Self {
        (*self + self.transpose()).scale(0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    pub fn is_symmetric(&self) -> bool {
        (*self - self.transpose()).frobenius() <= 1e-12 * (1.0 + self.frobenius())
    }

    pub fn is_antisymmetric(&self, tol: f64) -> bool {
        (*self + self.transpose()).frobenius() <= tol * (1.0 + self.frobenius())
    }
}

impl Add for Mat2 {
    type Output = Mat2;
    #[inline]
    fn add(self, o: Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl AddAssign for Mat2 {
    #[inline]
    fn add_assign(&mut self, o: Mat2) {
        *self = *self + o;
    }
}

impl Sub for Mat2 {
    type Output = Mat2;
    #[inline]
    fn sub(self, o: Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2([
            [a[0][0] - b[0][0], a[0][1] - b[0][1]],
            [a[1][0] - b[1][0], a[1][1] - b[1][1]],
        ])
    }
}

impl Neg for Mat2 {
    type Output = Mat2;
    #[inline]
    fn neg(self) -> Mat2 {
        self.scale(-1.0)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    #[inline]
    fn mul(self, o: Mat2) -> Mat2 {
        let (a, b) = (self.0, o.0);
        Mat2([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

/// Vorticity tensor `½(G − Gᵀ)` of a velocity gradient `G`.
#[inline]
pub fn vorticity_tensor(grad: &Mat2) -> Mat2 {
    // Built from the single off-diagonal entry so the result is exactly antisymmetric.
    let w = 0.5 * (grad.0[0][1] - grad.0[1][0]);
    Mat2([[0.0, w], [-w, 0.0]])
}

/// Corotation term `W T + T Wᵀ` (equal to `W T − T W` for antisymmetric `W`).
pub fn corotation_term(w: &Mat2, t: &Mat2) -> Result<Mat2> {
    if !w.is_antisymmetric(ANTISYMMETRY_TOL) {
        return Err(Error::InvalidArgument(format!(
            "corotation generator is not antisymmetric: {:?}",
            w.0
        )));
    }
    Ok(corotation_unchecked(w, t))
}

#[inline]
pub(crate) fn corotation_unchecked(w: &Mat2, t: &Mat2) -> Mat2 {
    *w * *t + *t * w.transpose()
}

/// Which matrix the power in [`corotation_identity_residual`] is taken of.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PowerOf {
    Z,
    ZTranspose,
}

/// Evaluates `W(∇w) Z : Yⁿ + Z W((∇w)ᵀ) : Yⁿ` with `Y ∈ {Z, Zᵀ}`.
///
/// The corotational structure makes this vanish identically, which is what
/// lets every `L^q` norm of the stress be conserved by pure transport.
pub fn corotation_identity_residual(grad: &Mat2, z: &Mat2, n: u32, variant: PowerOf) -> f64 {
    let w = vorticity_tensor(grad);
    let wt = vorticity_tensor(&grad.transpose());
    let y = match variant {
        PowerOf::Z => *z,
        PowerOf::ZTranspose => z.transpose(),
    };
    let yn = y.powi(n);
    (w * *z).ddot(&yn) + (*z * wt).ddot(&yn)
}

/// Planar rotation by `angle` (counter-clockwise).
#[inline]
pub fn planar_rotation(angle: f64) -> Mat2 {
    let (s, c) = angle.sin_cos();
    Mat2([[c, -s], [s, c]])
}

/// Rotation solving `Ṙ = W R` over a step during which `W = [[0, ω], [−ω, 0]]`
/// integrates to `∫ω dt = theta`. The result is `exp(θ [[0,1],[−1,0]])`.
#[inline]
pub fn rotation_from_vorticity_integral(theta: f64) -> Mat2 {
    planar_rotation(-theta)
}

/// Conjugation `R T Rᵀ`.
#[inline]
pub fn conjugate(r: &Mat2, t: &Mat2) -> Mat2 {
    *r * *t * r.transpose()
}

/// A sampled path of antisymmetric generators `W(t_k)` together with the
/// rotations `R(t_k)` obtained from `Ṙ = W R`, `R(0) = I`.
#[derive(Clone, Debug)]
pub struct RotationPath {
    times: Vec<f64>,
    generators: Vec<Mat2>,
    rotations: Vec<Mat2>,
}

impl RotationPath {
    /// Integrates the rotation along the sampled generators. The angle
    /// increment on each interval uses the midpoint value of `W₁₂`; since all
    /// planar antisymmetric matrices commute this is the only approximation.
    pub fn new(times: Vec<f64>, generators: Vec<Mat2>) -> Result<Self> {
        if times.len() != generators.len() || times.is_empty() {
            return Err(Error::InvalidArgument(
                "rotation path needs matching, non-empty time and generator samples".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "rotation path times must be strictly increasing".into(),
            ));
        }
        if let Some(w) = generators
            .iter()
            .find(|w| !w.is_antisymmetric(ANTISYMMETRY_TOL))
        {
            return Err(Error::InvalidArgument(format!(
                "rotation path generator is not antisymmetric: {:?}",
                w.0
            )));
        }
        let mut rotations = Vec::with_capacity(times.len());
        let mut theta = 0.0;
        rotations.push(Mat2::IDENTITY);
        for k in 1..times.len() {
            let dt = times[k] - times[k - 1];
            let mid = 0.5 * (generators[k].0[0][1] + generators[k - 1].0[0][1]);
            theta += mid * dt;
            rotations.push(rotation_from_vorticity_integral(theta));
        }
        Ok(Self {
            times,
            generators,
            rotations,
        })
    }

    /// Constant generator `[[0, ω], [−ω, 0]]` sampled on `n + 1` uniform times in `[0, t_end]`.
    pub fn constant(omega: f64, t_end: f64, n: usize) -> Result<Self> {
        let n = n.max(1);
        let times = (0..=n).map(|k| t_end * k as f64 / n as f64).collect();
        let generators = vec![Mat2::new(0.0, omega, -omega, 0.0); n + 1];
        Self::new(times, generators)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn generators(&self) -> &[Mat2] {
        &self.generators
    }

    pub fn rotations(&self) -> &[Mat2] {
        &self.rotations
    }

    /// Rotation at an arbitrary time inside the path, interpolating the
    /// accumulated angle linearly between samples.
    pub fn rotation_at(&self, t: f64) -> Result<Mat2> {
        let (t0, t1) = (self.times[0], *self.times.last().unwrap());
        if t < t0 - 1e-14 || t > t1 + 1e-14 {
            return Err(Error::InvalidArgument(format!(
                "time {t} outside rotation path range [{t0}, {t1}]"
            )));
        }
        let k = self.times.partition_point(|&s| s <= t).clamp(1, self.times.len().max(2) - 1);
        if self.times.len() == 1 {
            return Ok(Mat2::IDENTITY);
        }
        let angle = |r: &Mat2| r.0[1][0].atan2(r.0[0][0]);
        let (a0, a1) = (angle(&self.rotations[k - 1]), angle(&self.rotations[k]));
        let mut da = a1 - a0;
        if da > std::f64::consts::PI {
            da -= std::f64::consts::TAU;
        } else if da < -std::f64::consts::PI {
            da += std::f64::consts::TAU;
        }
        let s = (t - self.times[k - 1]) / (self.times[k] - self.times[k - 1]);
        Ok(planar_rotation(a0 + s * da))
    }
}

/// Solution `R(t) T₀ R(t)ᵀ` of `Ṫ = W T + T Wᵀ` along a rotation path.
pub fn rotation_propagate(path: &RotationPath, t0: &Mat2, t: f64) -> Result<Mat2> {
    let r = path.rotation_at(t)?;
    let drift = (r.transpose() * r - Mat2::IDENTITY).frobenius().max((r.det() - 1.0).abs());
    if drift > ORTHOGONALITY_TOL {
        return Err(Error::Numerical(format!(
            "rotation lost orthogonality: drift {drift:e}"
        )));
    }
    Ok(conjugate(&r, t0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Mat2, b: &Mat2, tol: f64) -> bool {
        (*a - *b).frobenius() <= tol
    }

    #[test]
    fn vorticity_examples() {
        let w = vorticity_tensor(&Mat2::new(0.0, 1.0, 0.0, 0.0));
        assert_eq!(w, Mat2::new(0.0, 0.5, -0.5, 0.0));
        assert_eq!(
            vorticity_tensor(&Mat2::sym(3.0, -2.0, 5.0)).frobenius(),
            0.0
        );
        let w = vorticity_tensor(&Mat2::new(1.0, 2.0, 3.0, 4.0));
        assert_eq!(w, Mat2::new(0.0, -0.5, 0.5, 0.0));
    }

    #[test]
    fn corotation_examples() {
        let t = Mat2::new(1.0, 2.0, 3.0, 4.0);
        assert_eq!(corotation_term(&Mat2::ZERO, &t).unwrap(), Mat2::ZERO);
        let w = Mat2::new(0.0, 1.0, -1.0, 0.0);
        assert_eq!(corotation_term(&w, &Mat2::IDENTITY).unwrap(), Mat2::ZERO);
        // WT = [[0,2],[-1,0]], TWᵀ = [[0,-1],[2,0]]
        assert_eq!(
            corotation_term(&w, &Mat2::diag(1.0, 2.0)).unwrap(),
            Mat2::new(0.0, 1.0, 1.0, 0.0)
        );
        // The opposite orientation flips the sign.
        assert_eq!(
            corotation_term(&w.transpose(), &Mat2::diag(1.0, 2.0)).unwrap(),
            Mat2::new(0.0, -1.0, -1.0, 0.0)
        );
        assert!(corotation_term(&Mat2::new(0.0, 1.0, 0.0, 0.0), &t).is_err());
    }

    #[test]
    fn identity_residual_examples() {
        let g = Mat2::new(0.3, -1.2, 0.7, 2.0);
        assert_eq!(corotation_identity_residual(&g, &Mat2::ZERO, 3, PowerOf::Z), 0.0);
        let r = corotation_identity_residual(
            &Mat2::new(0.0, 1.0, -1.0, 0.0),
            &Mat2::diag(1.0, 2.0),
            1,
            PowerOf::Z,
        );
        assert_eq!(r, 0.0);
    }

    #[test]
    fn rotation_propagate_constant_generator_matches_closed_form() {
        let omega = 0.7;
        let t_end = 2.0;
        let path = RotationPath::constant(omega, t_end, 200).unwrap();
        let t0 = Mat2::diag(1.0, -1.0);
        for &t in &[0.0, 0.35, 1.0, 2.0] {
            let got = rotation_propagate(&path, &t0, t).unwrap();
            let (s, c) = (2.0 * omega * t).sin_cos();
            let want = Mat2::new(c, -s, -s, -c);
            assert!(close(&got, &want, 1e-12), "t = {t}: {got:?} vs {want:?}");
        }
    }

    #[test]
    fn rotation_propagate_zero_generator_is_identity() {
        let path = RotationPath::constant(0.0, 1.0, 10).unwrap();
        let t0 = Mat2::sym(0.3, -0.1, 2.0);
        assert_eq!(rotation_propagate(&path, &t0, 0.5).unwrap(), t0);
    }

    #[test]
    fn rotation_path_rejects_bad_input() {
        assert!(RotationPath::new(vec![0.0, 0.0], vec![Mat2::ZERO; 2]).is_err());
        assert!(RotationPath::new(vec![0.0], vec![Mat2::IDENTITY]).is_err());
        let path = RotationPath::constant(1.0, 1.0, 4).unwrap();
        assert!(rotation_propagate(&path, &Mat2::IDENTITY, 1.5).is_err());
    }

    fn mat() -> impl Strategy<Value = Mat2> {
        prop::array::uniform4(-10.0f64..10.0).prop_map(|a| Mat2::new(a[0], a[1], a[2], a[3]))
    }

    proptest! {
        #[test]
        fn identity_residual_vanishes(g in mat(), z in mat(), n in 1u32..4, transpose in any::<bool>()) {
            let variant = if transpose { PowerOf::ZTranspose } else { PowerOf::Z };
            let zn = z.powi(n).frobenius();
            let scale = g.frobenius() * z.frobenius() * zn.max(1e-300) + 1.0;
            let r = corotation_identity_residual(&g, &z, n, variant);
            prop_assert!(r.abs() <= 1e-12 * scale, "residual {r} scale {scale}");
        }

        #[test]
        fn corotation_preserves_symmetry_and_is_null(g in mat(), a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let w = vorticity_tensor(&g);
            let t = Mat2::sym(a, b, c);
            let out = corotation_term(&w, &t).unwrap();
            prop_assert!(out.is_symmetric());
            prop_assert!(out.ddot(&t).abs() <= 1e-12 * (1.0 + w.frobenius() * t.frobenius().powi(2)));
        }

        #[test]
        fn propagation_preserves_invariants(omegas in prop::collection::vec(-3.0f64..3.0, 2..40), a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0) {
            let n = omegas.len();
            let times: Vec<f64> = (0..n).map(|k| 0.05 * k as f64).collect();
            let gens = omegas.iter().map(|&w| Mat2::new(0.0, w, -w, 0.0)).collect();
            let path = RotationPath::new(times.clone(), gens).unwrap();
            let t0 = Mat2::sym(a, b, c);
            for &t in &times {
                let r = path.rotation_at(t).unwrap();
                prop_assert!((r.transpose() * r - Mat2::IDENTITY).frobenius() < 1e-10);
                prop_assert!((r.det() - 1.0).abs() < 1e-10);
                let out = rotation_propagate(&path, &t0, t).unwrap();
                let scale = 1.0 + t0.frobenius();
                prop_assert!((out.frobenius() - t0.frobenius()).abs() < 1e-8 * scale);
                prop_assert!((out.trace() - t0.trace()).abs() < 1e-8 * scale);
                prop_assert!((out.det() - t0.det()).abs() < 1e-8 * scale * scale);
            }
        }
    }
}
