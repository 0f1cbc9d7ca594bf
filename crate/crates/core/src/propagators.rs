//! The plane propagator s_α, the field-point propagator S_α and the
//! reflection-symmetric four-**Γ** propagator D_α.

use crate::error::{Error, Result};
use crate::gamma_core::{bgamma, sign_pow, FieldPoint, GammaValue, Index};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A point of the complex plane; z̄ is always `z.conj()`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanePoint {
    pub z: Complex64,
}

impl PlanePoint {
    pub fn new(x: f64, y: f64) -> Self {
        PlanePoint {
            z: Complex64::new(x, y),
        }
    }

    pub fn from_complex(z: Complex64) -> Self {
        PlanePoint { z }
    }

    pub fn conj(&self) -> Complex64 {
        self.z.conj()
    }
}

/// [z]^β = z^β z̄^β̄ = |z|^{2⟨β⟩} e^{i[β] arg z} for an exponent with integer
/// discrete part. Used by s_prop (β = −α) and the plane integrands.
pub fn plane_power(z: Complex64, beta: Index) -> Result<Complex64> {
    let d = beta.disc_int()?;
    if z.re == 0.0 && z.im == 0.0 {
        return Err(Error::Origin);
    }
    let (r, th) = z.to_polar();
    Ok((beta.sigma * (2.0 * r.ln()) + Complex64::new(0.0, d as f64 * th)).exp())
}

/// s_α(z) = [z]^{−α}.
pub fn s_prop(z: PlanePoint, alpha: Index) -> Result<Complex64> {
    plane_power(z.z, Index::new(-alpha.twice_m, -alpha.sigma))
}

/// [α/2 + u] as an exact integer, or a sector error.
fn half_alpha_plus_u(u: FieldPoint, alpha: Index) -> Result<i64> {
    alpha.disc_int()?;
    let four = alpha.twice_m + 2 * u.twice_n;
    if four.rem_euclid(4) != 0 {
        return Err(Error::SectorMismatch(format!(
            "alpha {alpha} and u {u} do not share parity"
        )));
    }
    Ok(four / 4)
}

/// S_α(u) = (−1)^{[α/2+u]} **Γ**((1−α)/2 + u) **Γ**((1−α)/2 − u).
pub fn s_prop_field(u: FieldPoint, alpha: Index) -> Result<GammaValue> {
    let k = half_alpha_plus_u(u, alpha)?;
    let c = alpha.half_complement()?;
    Ok((bgamma(c + u) * bgamma(c - u).reversed()).scale(sign_pow(k)))
}

/// Alias matching the field-point propagator's conventional name.
#[allow(non_snake_case)]
pub fn S_prop(u: FieldPoint, alpha: Index) -> Result<GammaValue> {
    s_prop_field(u, alpha)
}

/// D_α(z₁, z₂) = **Γ**((1−α)/2 ± z₁ ± z₂).
pub fn d_prop(z1: FieldPoint, z2: FieldPoint, alpha: Index) -> Result<GammaValue> {
    alpha.disc_int()?;
    let c = alpha.half_complement()?;
    // pairing by z₁ ± z₂ keeps the float result exactly symmetric under
    // z₁ ↔ z₂ and z₁ → −z₁
    let s = z1 + z2;
    let d = z1 - z2;
    if (c + s).twice_n.rem_euclid(2) != 0 {
        return Err(Error::SectorMismatch(format!(
            "D propagator arguments need integer discrete parts: z1={z1}, z2={z2}, alpha={alpha}"
        )));
    }
    let ps = bgamma(c + s) * bgamma(c - s).reversed();
    let pd = bgamma(c + d) * bgamma(c - d).reversed();
    Ok(ps * pd)
}

/// Alias matching the D propagator's conventional name.
#[allow(non_snake_case)]
pub fn D_prop(z1: FieldPoint, z2: FieldPoint, alpha: Index) -> Result<GammaValue> {
    d_prop(z1, z2, alpha)
}

/// The field point L·z for a plane point z: [u] = 2Lx and ν = iLy, so that
/// u = L z and −ū = L z̄. Fails unless 4Lx is an integer.
pub fn plane_to_field(z: PlanePoint, scale: f64) -> Result<FieldPoint> {
    let t = 4.0 * scale * z.z.re;
    let r = t.round();
    if (t - r).abs() > 1e-9 {
        return Err(Error::Sector(format!(
            "4·L·Re z = {t} is not an integer"
        )));
    }
    Ok(FieldPoint::new(r as i64, Complex64::new(0.0, scale * z.z.im)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gamma_core::GammaKind;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn s_prop_examples() {
        let v = s_prop(PlanePoint::new(2.0, 0.0), Index::real(0, 1.0)).unwrap();
        assert!((v - 0.25).norm() < 1e-15);
        let v = s_prop(PlanePoint::new(0.0, 1.0), Index::real(1, 0.5)).unwrap();
        assert!((v - c(0.0, -1.0)).norm() < 1e-15);
        let v = s_prop(PlanePoint::new(1.0, 1.0), Index::real(0, 0.0)).unwrap();
        assert!((v - 1.0).norm() < 1e-15);
        assert_eq!(s_prop(PlanePoint::new(0.0, 0.0), Index::real(0, 0.3)), Err(Error::Origin));
        assert!(matches!(
            s_prop(PlanePoint::new(1.0, 0.0), Index::new(1, c(0.3, 0.0))),
            Err(Error::Sector(_))
        ));
    }

    #[test]
    fn s_prop_field_examples() {
        let v = s_prop_field(FieldPoint::new(0, c(0.0, 0.0)), Index::real(0, 0.0)).unwrap();
        assert!((v.get().unwrap() - 1.0).norm() < 1e-14);
        // odd u ([u] = 1/2) with odd α ([α] = 1): S(−u)/S(u) = (−1)^[α]
        let u = FieldPoint::new(1, c(0.0, 0.1));
        let a = Index::real(1, 0.4);
        let r = s_prop_field(-u, a).unwrap().get().unwrap() / s_prop_field(u, a).unwrap().get().unwrap();
        assert!((r + 1.0).norm() < 1e-13);
        let v = s_prop_field(FieldPoint::new(0, c(0.0, 0.2)), Index::int(0, c(0.0, 0.7))).unwrap();
        assert!((v.get().unwrap().norm() - 1.0).abs() < 1e-13);
        assert!(matches!(
            s_prop_field(FieldPoint::new(4, c(0.0, 0.1)), Index::real(1, 0.4)),
            Err(Error::SectorMismatch(_))
        ));
    }

    #[test]
    fn d_prop_examples() {
        let z = FieldPoint::new(0, c(0.0, 0.0));
        let v = d_prop(z, z, Index::real(0, 0.0)).unwrap();
        assert!((v.get().unwrap() - 1.0).norm() < 1e-13);
        let z1 = FieldPoint::new(2, c(0.1, 0.3));
        let z2 = FieldPoint::new(-4, c(0.0, -0.2));
        let a = Index::int(2, c(0.6, 0.1));
        let d12 = d_prop(z1, z2, a).unwrap();
        assert_eq!(d12, d_prop(z2, z1, a).unwrap());
        assert_eq!(d12, d_prop(-z1, z2, a).unwrap());
        assert_eq!(d12.kind, GammaKind::Finite);
        assert!(matches!(
            d_prop(FieldPoint::new(1, c(0.0, 0.0)), z2, a),
            Err(Error::SectorMismatch(_))
        ));
    }

    #[test]
    fn plane_to_field_round_trip() {
        let u = plane_to_field(PlanePoint::new(0.25, 0.3), 16.0).unwrap();
        assert_eq!(u.twice_n, 16);
        assert!((u.u() - c(4.0, 4.8)).norm() < 1e-14);
        assert!((-u.ubar() - c(4.0, -4.8)).norm() < 1e-14);
        assert!(plane_to_field(PlanePoint::new(0.3, 0.0), 1.0).is_err());
    }
}
