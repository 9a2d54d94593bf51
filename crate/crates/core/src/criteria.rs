//! Information matrix, `M = D - C D^{-1} C`, and the efficiency criteria built on it.
//!
//! With `sigma^2 = 1`, the expected information of the two-line model is
//! `[[D, C], [C, D]]` where `D = diag(1, E x^2)` and `C` holds the moment
//! triple. Every criterion therefore depends on a design only through
//! `(z, xz, x2z)` and `E x^2`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix4};

use crate::design::MomentTriple;
use crate::dist::Distribution;
use crate::error::{Error, Result};
use crate::scalar::grid_then_brent;
use crate::solve_continuous::xz_max;

/// Grid size used before Brent refinement for custom criteria.
pub const CUSTOM_GRID: usize = 1024;

/// Short-term gain constraint, either raw or normalized by its maximum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gain {
    Xz(f64),
    Delta(f64),
}

/// Equality constraints `E_p z = z_tilde` and `E_p xz = xz`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraints {
    pub z_tilde: f64,
    pub xz: f64,
}

impl Constraints {
    pub fn new(z_tilde: f64, xz: f64) -> Self {
        Constraints { z_tilde, xz }
    }

    /// Resolves `gain` against `F` and checks that the pair lies in `J`.
    pub fn resolve(dist: &Distribution, z_tilde: f64, gain: Gain) -> Result<Constraints> {
        check_z(z_tilde)?;
        let max = xz_max(dist, z_tilde);
        let xz = match gain {
            Gain::Xz(xz) => xz,
            Gain::Delta(delta) => {
                if !(0.0..=1.0).contains(&delta) {
                    return Err(Error::Infeasible {
                        message: format!("delta = {delta} outside [0, 1]"),
                        z_tilde,
                        xz: delta * max,
                        xz_max: max,
                    });
                }
                if delta == 1.0 {
                    max
                } else {
                    delta * max
                }
            }
        };
        let c = Constraints { z_tilde, xz };
        c.check(dist)?;
        Ok(c)
    }

    pub fn from_delta(dist: &Distribution, z_tilde: f64, delta: f64) -> Result<Constraints> {
        Constraints::resolve(dist, z_tilde, Gain::Delta(delta))
    }

    /// Verifies `(z_tilde, xz)` is in `J` and returns `xz_max(z_tilde)`.
    ///
    /// `xz` within a relative `1e-12` above the maximum is accepted as the maximum.
    pub fn check(&self, dist: &Distribution) -> Result<f64> {
        check_z(self.z_tilde)?;
        let max = xz_max(dist, self.z_tilde);
        let infeasible = |message: String| Error::Infeasible {
            message,
            z_tilde: self.z_tilde,
            xz: self.xz,
            xz_max: max,
        };
        if !self.xz.is_finite() {
            return Err(infeasible("xz is not finite".into()));
        }
        if self.xz < 0.0 {
            return Err(infeasible("xz must be nonnegative".into()));
        }
        if self.xz > max * (1.0 + 1e-12) + 1e-300 {
            return Err(infeasible("xz exceeds xz_max(z_tilde)".into()));
        }
        Ok(max)
    }

    /// `xz / xz_max(z_tilde)`.
    pub fn delta(&self, dist: &Distribution) -> f64 {
        let max = xz_max(dist, self.z_tilde);
        if max > 0.0 {
            (self.xz / max).min(1.0)
        } else {
            0.0
        }
    }

    /// Copy with `xz` clamped onto `[0, xz_max]`.
    pub(crate) fn clamped(&self, max: f64) -> Constraints {
        Constraints {
            z_tilde: self.z_tilde,
            xz: self.xz.clamp(0.0, max),
        }
    }
}

fn check_z(z_tilde: f64) -> Result<()> {
    if !(z_tilde > -1.0 && z_tilde < 1.0) {
        return Err(Error::Infeasible {
            message: format!("z_tilde = {z_tilde} must lie strictly inside (-1, 1)"),
            z_tilde,
            xz: f64::NAN,
            xz_max: 0.0,
        });
    }
    Ok(())
}

/// Expected information matrix with `sigma^2 = 1`.
pub fn info_matrix(t: &MomentTriple, ex2: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0, 0.0, t.ez, t.exz, //
        0.0, ex2, t.exz, t.ex2z, //
        t.ez, t.exz, 1.0, 0.0, //
        t.exz, t.ex2z, 0.0, ex2,
    )
}

/// `M = D - C D^{-1} C`.
pub fn m_matrix(t: &MomentTriple, ex2: f64) -> Matrix2<f64> {
    let d = Matrix2::new(1.0, 0.0, 0.0, ex2);
    let c = Matrix2::new(t.ez, t.exz, t.exz, t.ex2z);
    let d_inv = Matrix2::new(1.0, 0.0, 0.0, 1.0 / ex2);
    d - c * d_inv * c
}

/// `M_11 = 1 - z^2 - xz^2 / E x^2`.
pub fn m11(z_tilde: f64, xz: f64, ex2: f64) -> f64 {
    1.0 - z_tilde * z_tilde - xz * xz / ex2
}

/// Closed-form `det(M)`, a concave quadratic in `x2z`.
pub fn det_m(z_tilde: f64, xz: f64, x2z: f64, ex2: f64) -> f64 {
    let q = 1.0 - z_tilde * z_tilde;
    let xz2 = xz * xz;
    -q * x2z * x2z / ex2 - 2.0 * z_tilde * xz2 * x2z / ex2 + ex2 * q + xz2 * (xz2 / ex2 - 2.0)
}

/// Unconstrained maximizer of `det(M)` over `x2z`.
pub fn a_star(z_tilde: f64, xz: f64) -> f64 {
    -z_tilde * xz * xz / (1.0 - z_tilde * z_tilde)
}

/// `M_11 / det(M)`, the asymptotic value of `n Var(beta_3 hat)`.
pub fn eff_inv(t: &MomentTriple, ex2: f64) -> f64 {
    m11(t.ez, t.exz, ex2) / det_m(t.ez, t.exz, t.ex2z, ex2)
}

type CustomFn = dyn Fn(f64, f64, f64, f64) -> f64 + Send + Sync;

/// User criterion `g(z, xz, x2z, ex2)`, to be maximized. Must be continuous in `x2z`.
#[derive(Clone)]
pub struct CustomCriterion {
    name: String,
    f: Arc<CustomFn>,
}

impl CustomCriterion {
    pub fn new<F>(name: impl Into<String>, f: F) -> Self
    where
        F: Fn(f64, f64, f64, f64) -> f64 + Send + Sync + 'static,
    {
        CustomCriterion {
            name: name.into(),
            f: Arc::new(f),
        }
    }

    /// Wraps a criterion `Psi(I)` on the 4x4 information matrix.
    pub fn from_matrix<F>(name: impl Into<String>, psi: F) -> Self
    where
        F: Fn(&Matrix4<f64>) -> f64 + Send + Sync + 'static,
    {
        CustomCriterion::new(name, move |z, xz, x2z, ex2| psi(&info_matrix(&MomentTriple::new(z, xz, x2z), ex2)))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, z: f64, xz: f64, x2z: f64, ex2: f64) -> f64 {
        (self.f)(z, xz, x2z, ex2)
    }
}

impl fmt::Debug for CustomCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("CustomCriterion").field(&self.name).finish()
    }
}

#[derive(Debug, Clone)]
pub enum CriterionSpec {
    /// `det(M) / M_11`: c-optimality for `beta_3`.
    Eff,
    /// `log det(I) = log(E x^2 det(M))`.
    D,
    Custom(CustomCriterion),
}

impl CriterionSpec {
    pub fn name(&self) -> &str {
        match self {
            CriterionSpec::Eff => "eff",
            CriterionSpec::D => "d",
            CriterionSpec::Custom(c) => c.name(),
        }
    }
}

/// Value of the criterion (larger is better).
pub fn criterion_value(spec: &CriterionSpec, t: &MomentTriple, ex2: f64) -> Result<f64> {
    match spec {
        CriterionSpec::Eff => {
            let m = m11(t.ez, t.exz, ex2);
            if !(m > 0.0) {
                return Err(Error::Infeasible {
                    message: format!("M_11 = {m} is not positive"),
                    z_tilde: t.ez,
                    xz: t.exz,
                    xz_max: f64::NAN,
                });
            }
            Ok(det_m(t.ez, t.exz, t.ex2z, ex2) / m)
        }
        CriterionSpec::D => {
            let det = det_m(t.ez, t.exz, t.ex2z, ex2);
            Ok(if det > 0.0 { (ex2 * det).ln() } else { f64::NEG_INFINITY })
        }
        CriterionSpec::Custom(c) => Ok(c.eval(t.ez, t.exz, t.ex2z, ex2)),
    }
}

/// Best attainable `x2z` in `[lo, hi]` under `spec`.
pub fn select_x2z(spec: &CriterionSpec, z_tilde: f64, xz: f64, lo: f64, hi: f64, ex2: f64) -> Result<f64> {
    if !(lo <= hi) {
        return Err(Error::Infeasible {
            message: format!("attainable interval [{lo}, {hi}] is empty"),
            z_tilde,
            xz,
            xz_max: f64::NAN,
        });
    }
    match spec {
        CriterionSpec::Eff | CriterionSpec::D => Ok(a_star(z_tilde, xz).clamp(lo, hi)),
        CriterionSpec::Custom(c) => {
            let (x, _) = grid_then_brent(|x2z| c.eval(z_tilde, xz, x2z, ex2), lo, hi, CUSTOM_GRID);
            Ok(x.clamp(lo, hi))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn rct_matrix_is_diagonal() {
        let i = info_matrix(&MomentTriple::new(0.0, 0.0, 0.0), 1.0 / 3.0);
        assert_eq!(i, Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, 1.0 / 3.0, 1.0, 1.0 / 3.0)));
    }

    #[test]
    fn table_values_from_closed_forms() {
        let ex2 = 1.0 / 3.0;
        let x2z = 2.0 * ((0.512 - 0.216) / 12.0 + (1.0 - 0.512) / 6.0) - 1.0 / 3.0;
        let t = MomentTriple::new(-0.7, 0.25, x2z);
        assert!(rel(det_m(-0.7, 0.25, x2z, ex2), 0.002_344_4) < 1e-4);
        assert!((eff_inv(&t, ex2) - 137.56).abs() < 0.01);
        let rdd = MomentTriple::new(-0.7, 0.255, -0.114_333_333_333_333_33);
        assert!((eff_inv(&rdd, ex2) - 223.44).abs() < 0.01);
        assert!(rel(det_m(-0.7, 0.255, rdd.ex2z, ex2), 0.001_409_7) < 1e-3);
        let det4 = info_matrix(&rdd, ex2).determinant();
        assert!(rel(det4, ex2 * det_m(-0.7, 0.255, rdd.ex2z, ex2)) < 1e-10);
    }

    #[test]
    fn m11_examples() {
        assert_eq!(m11(0.0, 0.0, 5.0), 1.0);
        assert!((m11(-0.7, 0.25, 1.0 / 3.0) - 0.3225).abs() < 1e-15);
        assert!((m11(-0.7, 0.255, 1.0 / 3.0) - 0.314_925).abs() < 1e-15);
    }

    #[test]
    fn closed_form_matches_schur_complement() {
        let t = MomentTriple::new(0.3, 0.2, -0.05);
        let ex2 = 0.7;
        let m = m_matrix(&t, ex2);
        assert!(rel(m.determinant(), det_m(t.ez, t.exz, t.ex2z, ex2)) < 1e-12);
        assert!((m[(0, 0)] - m11(t.ez, t.exz, ex2)).abs() < 1e-15);
    }

    #[test]
    fn rct_efficiencies() {
        let ex2 = 1.0 / 3.0;
        let eff = |z: f64| criterion_value(&CriterionSpec::Eff, &MomentTriple::new(z, 0.0, z * ex2), ex2).unwrap();
        assert!((eff(0.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((eff(-0.5) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn d_criterion_is_minus_infinity_when_singular() {
        let v = criterion_value(&CriterionSpec::D, &MomentTriple::new(1.0, 0.0, 1.0), 1.0).unwrap();
        assert_eq!(v, f64::NEG_INFINITY);
        assert!(criterion_value(&CriterionSpec::Eff, &MomentTriple::new(1.0, 0.0, 1.0), 1.0).is_err());
    }

    #[test]
    fn a_star_values() {
        assert_eq!(a_star(0.0, 0.4), 0.0);
        assert!((a_star(-0.7, 0.25) - 0.085_784_313_725_490_2).abs() < 1e-15);
        assert!(a_star(0.4, 0.1) < 0.0);
    }

    #[test]
    fn selection_clamps_the_apex() {
        let ex2 = 1.0 / 3.0;
        let x = select_x2z(&CriterionSpec::Eff, -0.7, 0.25, -0.12273, -0.11285, ex2).unwrap();
        assert_eq!(x, -0.11285);
        assert_eq!(select_x2z(&CriterionSpec::D, 0.0, 0.3, -0.1, 0.1, ex2).unwrap(), 0.0);
        assert!(select_x2z(&CriterionSpec::Eff, 0.0, 0.3, 0.1, -0.1, ex2).is_err());
        let a = a_star(-0.7, 0.25);
        assert_eq!(select_x2z(&CriterionSpec::Eff, -0.7, 0.25, a - 0.01, a + 0.01, ex2).unwrap(), a);
    }

    #[test]
    fn custom_eff_agrees_with_closed_form() {
        let custom = CriterionSpec::Custom(CustomCriterion::new("eff", |z, xz, x2z, ex2| {
            det_m(z, xz, x2z, ex2) / m11(z, xz, ex2)
        }));
        let ex2 = 1.0 / 3.0;
        for (z, xz, lo, hi) in [(-0.7, 0.25, -0.2, 0.2), (0.4, 0.1, -0.3, -0.1), (0.1, 0.3, -0.05, 0.3)] {
            let a = select_x2z(&CriterionSpec::Eff, z, xz, lo, hi, ex2).unwrap();
            let b = select_x2z(&custom, z, xz, lo, hi, ex2).unwrap();
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn matrix_adapter_sees_the_information_matrix() {
        let logdet = CustomCriterion::from_matrix("logdet", |m| m.determinant().ln());
        let t = MomentTriple::new(-0.2, 0.3, 0.01);
        let d = criterion_value(&CriterionSpec::D, &t, 0.5).unwrap();
        let c = criterion_value(&CriterionSpec::Custom(logdet), &t, 0.5).unwrap();
        assert!((c - d).abs() < 1e-12);
    }
}
