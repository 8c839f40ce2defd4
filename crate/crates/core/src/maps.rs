//! Linear algebra of the two shears: `F`, `G`, the composite `H = G·F`, its
//! eigenstructure, the invariant cones and the angled-lobe composite.

use std::f64::consts::FRAC_PI_2;
use std::ops::Mul;

use crate::error::{Error, Result};
use crate::geometry::TrackGeometry;

/// Row-major 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[f64; 2]; 2]);

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2([[1.0, 0.0], [0.0, 1.0]]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Mat2([[a, b], [c, d]])
    }

    pub fn det(&self) -> f64 {
        let m = &self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn trace(&self) -> f64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        let m = &self.0;
        [m[0][0] * v[0] + m[0][1] * v[1], m[1][0] * v[0] + m[1][1] * v[1]]
    }

    pub fn max_abs_diff(&self, other: &Mat2) -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                d = d.max((self.0[i][j] - other.0[i][j]).abs());
            }
        }
        d
    }

    /// Real eigenvalues from the characteristic polynomial, larger first.
    /// `None` when they are complex.
    pub fn real_eigenvalues(&self) -> Option<(f64, f64)> {
        let (t, d) = (self.trace(), self.det());
        let disc = t * t - 4.0 * d;
        if disc < 0.0 {
            return None;
        }
        let r = disc.sqrt();
        // avoid cancellation in the smaller root
        let big = if t >= 0.0 { (t + r) / 2.0 } else { (t - r) / 2.0 };
        let small = if big != 0.0 { d / big } else { 0.0 };
        Some(if big.abs() >= small.abs() { (big, small) } else { (small, big) })
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, rhs: Mat2) -> Mat2 {
        let (a, b) = (&self.0, &rhs.0);
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }
}

pub fn shear_upper(a: f64) -> Mat2 {
    Mat2::new(1.0, a, 0.0, 1.0)
}

pub fn shear_lower(a: f64) -> Mat2 {
    Mat2::new(1.0, 0.0, a, 1.0)
}

/// Eigen-data of `DH` in the hyperbolic regime.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen {
    /// Expanding eigenvalue, `|λ₊| ≥ 1`.
    pub lambda_plus: f64,
    /// Contracting eigenvalue, `λ₋ = 1/λ₊`.
    pub lambda_minus: f64,
    /// Slope ratio `ψ₁/ψ₂` of the expanding eigenvector (negative).
    pub l_ratio: f64,
}

/// `L = −α/2 + √((α/2)² − 1)`.
pub fn l_ratio(alpha: f64) -> f64 {
    let h = alpha / 2.0;
    // same value, written without cancellation
    -1.0 / (h + (h * h - 1.0).sqrt())
}

pub fn eigen(alpha: f64) -> Result<Eigen> {
    if !(alpha >= 2.0) {
        return Err(Error::Elliptic(alpha));
    }
    let a2 = alpha * alpha;
    let root = (a2 * a2 - 4.0 * a2).sqrt();
    let lambda_plus = (-a2 + 2.0 - root) / 2.0;
    let lambda_minus = if alpha == 2.0 { -1.0 } else { 1.0 / lambda_plus };
    Ok(Eigen { lambda_plus, lambda_minus, l_ratio: l_ratio(alpha) })
}

/// Shear strength, winding number and the derived eigen-quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShearConfig {
    pub alpha: f64,
    pub k: u32,
    pub lambda_plus: f64,
    pub lambda_minus: f64,
    pub l_ratio: f64,
}

impl ShearConfig {
    /// Validates `α·w = k·ℓ` against the geometry and `α ≥ 2`.
    pub fn new(alpha: f64, k: u32, geom: &TrackGeometry) -> Result<Self> {
        let target = k as f64 * geom.track_length;
        if k == 0 || (alpha * geom.width_w - target).abs() > 1e-12 * target.max(1.0) {
            return Err(Error::Parameter(format!(
                "winding relation alpha·w = k·ℓ fails: {alpha}·{} ≠ {k}·{}",
                geom.width_w, geom.track_length
            )));
        }
        let e = eigen(alpha)?;
        Ok(Self { alpha, k, lambda_plus: e.lambda_plus, lambda_minus: e.lambda_minus, l_ratio: e.l_ratio })
    }

    /// Derives `α = k·ℓ/w`.
    pub fn from_k(k: u32, geom: &TrackGeometry) -> Result<Self> {
        let alpha = k as f64 * geom.track_length / geom.width_w;
        Self::new(alpha, k, geom)
    }

    /// Derives `k = α·w/ℓ`, which must be a positive integer.
    pub fn from_alpha(alpha: f64, geom: &TrackGeometry) -> Result<Self> {
        let kf = alpha * geom.width_w / geom.track_length;
        let k = kf.round();
        if k < 1.0 || (kf - k).abs() > 1e-9 {
            return Err(Error::Parameter(format!(
                "alpha = {alpha} with w = {} gives non-integer winding {kf}",
                geom.width_w
            )));
        }
        // exact k, alpha re-derived so the relation holds to rounding
        Self::new(k * geom.track_length / geom.width_w, k as u32, geom)
    }

    pub fn abs_l(&self) -> f64 {
        self.l_ratio.abs()
    }
}

/// Horizontal shear on `W`-strip coordinates: `(x + α(y−y0) mod ℓ, y)` on
/// the band `y ∈ [y0, y1]`, identity elsewhere.
pub fn shear_f(p: [f64; 2], alpha: f64, geom: &TrackGeometry) -> [f64; 2] {
    let [x, y] = p;
    if y >= geom.y0 && y <= geom.y1 {
        [geom.wrap_s(x + alpha * (y - geom.y0)), y]
    } else {
        p
    }
}

/// Vertical shear of slope `−α` on `V`-strip coordinates.
pub fn shear_g(p: [f64; 2], alpha: f64, geom: &TrackGeometry) -> [f64; 2] {
    let [x, y] = p;
    if x >= geom.x0 && x <= geom.x1 {
        [x, geom.wrap_s(y - alpha * (x - geom.x0))]
    } else {
        p
    }
}

pub fn derivative_f(alpha: f64) -> Mat2 {
    shear_upper(alpha)
}

pub fn derivative_g(alpha: f64) -> Mat2 {
    shear_lower(-alpha)
}

/// `H = G·F = [[1, α], [−α, 1−α²]]`.
pub fn compose_h(alpha: f64) -> Mat2 {
    derivative_g(alpha) * derivative_f(alpha)
}

/// `H⁻¹ = F⁻¹·G⁻¹`.
pub fn compose_h_inv(alpha: f64) -> Mat2 {
    shear_upper(-alpha) * shear_lower(alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// `{(v, w) : L ≤ v/w ≤ 0}`, between the unstable direction and vertical.
    C,
    /// `C` turned by a quarter: `{(v, w) : 0 ≤ w/v ≤ |L|}`.
    CPrime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cone {
    pub kind: ConeKind,
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    Interior,
    Boundary,
    Outside,
}

const CONE_TOL: f64 = 1e-10;

impl Cone {
    pub fn new(kind: ConeKind, alpha: f64) -> Self {
        Self { kind, bound: l_ratio(alpha).abs() }
    }

    /// Membership of the line spanned by `v`.
    pub fn classify(&self, v: [f64; 2]) -> Membership {
        let (num, den) = match self.kind {
            // v/w ∈ [−bound, 0]
            ConeKind::C => (-v[0], v[1]),
            // w/v ∈ [0, bound]
            ConeKind::CPrime => (v[1], v[0]),
        };
        if den == 0.0 {
            return Membership::Outside;
        }
        let r = num / den;
        let tol = CONE_TOL * self.bound.max(1.0);
        if (r - 0.0).abs() <= tol || (r - self.bound).abs() <= tol {
            Membership::Boundary
        } else if r > 0.0 && r < self.bound {
            Membership::Interior
        } else {
            Membership::Outside
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    F,
    G,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConeStep {
    pub image: [f64; 2],
    pub before_c: Membership,
    pub before_c_prime: Membership,
    pub after_c: Membership,
    pub after_c_prime: Membership,
}

/// Applies `DF` or `DG` to a direction and reports cone membership.
pub fn cone_step(direction: [f64; 2], which: Step, alpha: f64) -> Result<ConeStep> {
    if direction == [0.0, 0.0] || !direction.iter().all(|c| c.is_finite()) {
        return Err(Error::ZeroVector);
    }
    let m = match which {
        Step::F => derivative_f(alpha),
        Step::G => derivative_g(alpha),
    };
    let image = m.apply(direction);
    let c = Cone::new(ConeKind::C, alpha);
    let cp = Cone::new(ConeKind::CPrime, alpha);
    Ok(ConeStep {
        image,
        before_c: c.classify(direction),
        before_c_prime: cp.classify(direction),
        after_c: c.classify(image),
        after_c_prime: cp.classify(image),
    })
}

fn check_angled(a: f64, phi: f64) -> Result<()> {
    if !(a > 2.0) || !a.is_finite() {
        return Err(Error::Parameter(format!("shear strength A must exceed 2, got {a}")));
    }
    if !(phi >= -1e-15 && phi <= FRAC_PI_2 + 1e-15) {
        return Err(Error::Parameter(format!("angle phi must lie in [0, π/2], got {phi}")));
    }
    Ok(())
}

/// Closed-form composite of two shears of strength `A` whose lobes meet at
/// angle `phi`, entry by entry as printed with the angled-lobe analysis.
///
/// Its determinant is `1 + 2A·sinφ·cosφ`, which is 1 only at `φ ∈ {0, π/2}`;
/// [`rotated_shear_product`] is the literal rotation product.
pub fn angled_composite(a: f64, phi: f64) -> Result<Mat2> {
    check_angled(a, phi)?;
    let (s, c) = phi.sin_cos();
    Ok(Mat2::new(
        1.0 + a * s * c,
        a + a * c * c + a * a * s * c,
        a * s * s,
        1.0 + a * a * s * s + a * s * c,
    ))
}

/// `R(φ)·Shear(A)·R(−φ)·Shear(A)` with `R(φ) = [[cos, sin], [−sin, cos]]`.
pub fn rotated_shear_product(a: f64, phi: f64) -> Mat2 {
    let (s, c) = phi.sin_cos();
    let r = Mat2::new(c, s, -s, c);
    let r_inv = Mat2::new(c, -s, s, c);
    r * shear_upper(a) * r_inv * shear_upper(a)
}

/// Closed-form eigenvalues `λ± = 1 + (X ± √(X² + 4A²sin²φ))/2` with
/// `X = A²sin²φ + 2A sinφ cosφ`.
pub fn angled_eigen(a: f64, phi: f64) -> Result<(f64, f64)> {
    check_angled(a, phi)?;
    let (s, c) = phi.sin_cos();
    let x = a * a * s * s + 2.0 * a * s * c;
    let root = (x * x + 4.0 * a * a * s * s).sqrt();
    Ok((1.0 + (x + root) / 2.0, 1.0 + (x - root) / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn shear_f_examples() {
        let g = TrackGeometry::default();
        assert_eq!(shear_f([0.3, g.y0], 100.0, &g), [0.3, g.y0]);
        let p = shear_f([0.0, g.y1], 100.0, &g);
        assert!(p[0].abs() < 1e-12 || (p[0] - 1.0).abs() < 1e-12);
        let p = shear_f([0.25, g.y0 + g.width_w / 2.0], 100.0, &g);
        assert!((p[0] - 0.25).abs() < 1e-12);
        // outside the band
        assert_eq!(shear_f([0.4, 0.9], 100.0, &g), [0.4, 0.9]);
    }

    #[test]
    fn shear_g_examples() {
        let g = TrackGeometry::default();
        assert_eq!(shear_g([g.x0, 0.4], 100.0, &g), [g.x0, 0.4]);
        let p = shear_g([g.x1, 0.4], 100.0, &g);
        assert!((p[1] - 0.4).abs() < 1e-12);
        let p = shear_g([g.x0 + g.width_w / 2.0, 0.1], 100.0, &g);
        assert!((p[1] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn composite_at_two() {
        let h = compose_h(2.0);
        assert_eq!(h, Mat2::new(1.0, 2.0, -2.0, -3.0));
        assert_eq!(h.trace(), -2.0);
    }

    #[test]
    fn composite_inverse() {
        for a in [2.0, 3.0, 6.23, 10.0] {
            let h = compose_h(a);
            assert_eq!(h, Mat2::new(1.0, a, -a, 1.0 - a * a));
            assert!((h * compose_h_inv(a)).max_abs_diff(&Mat2::IDENTITY) < 1e-14 * a * a);
            assert!((h.det() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn eigen_examples() {
        let e = eigen(2.0).unwrap();
        assert_eq!((e.lambda_plus, e.lambda_minus), (-1.0, -1.0));
        let e = eigen(3.0).unwrap();
        assert!((e.lambda_plus - (-7.0 - 45f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((e.lambda_minus - (-7.0 + 45f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((e.lambda_plus - -6.8541).abs() < 1e-4 && (e.lambda_minus - -0.1459).abs() < 1e-4);
        assert!((e.lambda_plus * e.lambda_minus - 1.0).abs() < 1e-12);
        assert!((e.l_ratio - (-1.5 + 1.25f64.sqrt())).abs() < 1e-12);
        let m = e.l_ratio.abs();
        assert!((m * (3.0 - m) - 1.0).abs() < 1e-12);
        assert!(matches!(eigen(1.5), Err(Error::Elliptic(_))));
    }

    #[test]
    fn expanding_eigenvector_has_ratio_l() {
        for a in [2.5, 3.0, 7.0, 20.0] {
            let e = eigen(a).unwrap();
            let v = [e.l_ratio, 1.0];
            let hv = compose_h(a).apply(v);
            assert!((hv[0] - e.lambda_plus * v[0]).abs() < 1e-10 * a * a);
            assert!((hv[1] - e.lambda_plus * v[1]).abs() < 1e-10 * a * a);
        }
    }

    #[test]
    fn cone_boundary_and_vertical() {
        let a = 3.0;
        let l = l_ratio(a);
        let st = cone_step([l, 1.0], Step::F, a).unwrap();
        assert_eq!(st.before_c, Membership::Boundary);
        assert_eq!(st.after_c_prime, Membership::Boundary);
        let st = cone_step([0.0, 1.0], Step::F, a).unwrap();
        assert_eq!(st.image, [3.0, 1.0]);
        assert_eq!(st.after_c_prime, Membership::Interior);
        let st = cone_step([l / 2.0, 1.0], Step::F, a).unwrap();
        assert_eq!(st.before_c, Membership::Interior);
        assert_eq!(st.after_c_prime, Membership::Interior);
        assert!(cone_step([0.0, 0.0], Step::G, a).is_err());
        // back from C' to C
        let st = cone_step([1.0, l.abs()], Step::G, a).unwrap();
        assert_eq!(st.after_c, Membership::Boundary);
    }

    #[test]
    fn angled_examples() {
        assert_eq!(angled_composite(3.0, 0.0).unwrap(), Mat2::new(1.0, 6.0, 0.0, 1.0));
        let m = angled_composite(3.0, FRAC_PI_2).unwrap();
        assert!(m.max_abs_diff(&Mat2::new(1.0, 3.0, 3.0, 10.0)) < 1e-12);
        assert_eq!(angled_eigen(5.0, 0.0).unwrap(), (1.0, 1.0));
        let (lp, lm) = angled_eigen(3.0, FRAC_PI_2).unwrap();
        assert!((lp - 10.908).abs() < 1e-3 && (lm - 0.0917).abs() < 1e-4);
        assert!((lp * lm - 1.0).abs() < 1e-12);
        assert!(angled_composite(2.0, 0.3).is_err());
        assert!(angled_eigen(3.0, 2.0).is_err());
    }

    #[test]
    fn rotated_product_is_unimodular() {
        for i in 0..=20 {
            let phi = FRAC_PI_2 * i as f64 / 20.0;
            let m = rotated_shear_product(3.0, phi);
            assert!((m.det() - 1.0).abs() < 1e-12);
            assert!((m.trace() - (2.0 - 9.0 * phi.sin().powi(2))).abs() < 1e-12);
        }
        assert!(rotated_shear_product(3.0, 0.0).max_abs_diff(&Mat2::new(1.0, 6.0, 0.0, 1.0)) < 1e-15);
    }

    #[test]
    fn winding_validation() {
        let g = TrackGeometry::default();
        let cfg = ShearConfig::from_k(2, &g).unwrap();
        assert!((cfg.alpha - 100.0).abs() < 1e-9);
        assert!(ShearConfig::from_alpha(101.0, &g).is_err());
        assert!(ShearConfig::new(100.0, 3, &g).is_err());
        let g7 = TrackGeometry::for_winding(7.0, 2, 1.0, 0.1).unwrap();
        let c7 = ShearConfig::new(7.0, 2, &g7).unwrap();
        assert!(c7.lambda_plus.abs() > 1.0 && c7.lambda_minus.abs() < 1.0);
    }
}
