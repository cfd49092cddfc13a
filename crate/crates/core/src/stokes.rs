//! Linear-polarization algebra on single pixels.
//!
//! Angles are measured from the image column axis towards the row axis and
//! live in the half-open interval `[-pi/2, pi/2)`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StokesPixel {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

impl StokesPixel {
    pub fn new(s0: f64, s1: f64, s2: f64) -> Self {
        Self { s0, s1, s2 }
    }

    /// Builds the Stokes triple from intensity, angle and degree of polarization.
    pub fn from_polarization(s0: f64, aolp: f64, dolp: f64) -> Self {
        let (sin, cos) = (2.0 * aolp).sin_cos();
        Self {
            s0,
            s1: s0 * dolp * cos,
            s2: s0 * dolp * sin,
        }
    }

    pub fn scale(self, k: f64) -> Self {
        Self {
            s0: self.s0 * k,
            s1: self.s1 * k,
            s2: self.s2 * k,
        }
    }
}

/// Stokes parameters from the four filter intensities.
pub fn stokes_from_intensities(i0: f64, i45: f64, i90: f64, i135: f64) -> Result<StokesPixel> {
    if i0 < 0.0 || i45 < 0.0 || i90 < 0.0 || i135 < 0.0 {
        return Err(Error::Domain(format!(
            "negative intensity in ({i0}, {i45}, {i90}, {i135})"
        )));
    }
    Ok(stokes_unchecked(i0, i45, i90, i135))
}

#[inline]
pub(crate) fn stokes_unchecked(i0: f64, i45: f64, i90: f64, i135: f64) -> StokesPixel {
    StokesPixel {
        s0: i0 + i90,
        s1: i0 - i90,
        s2: i45 - i135,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dolp {
    pub value: f64,
    /// Set when `s0 <= 0`; the angle is undefined there.
    pub degenerate: bool,
}

pub fn dolp(p: StokesPixel) -> Dolp {
    if p.s0 <= 0.0 {
        return Dolp {
            value: 0.0,
            degenerate: true,
        };
    }
    Dolp {
        value: (p.s1.hypot(p.s2) / p.s0).clamp(0.0, 1.0),
        degenerate: false,
    }
}

/// Folds any angle into `[-pi/2, pi/2)`.
pub fn wrap_half_turn(phi: f64) -> f64 {
    let w = (phi + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    // rem_euclid can round up to exactly PI
    if w >= FRAC_PI_2 {
        w - PI
    } else {
        w
    }
}

/// [`wrap_half_turn`] rounded to a value whose `f32` representation also
/// lies in `[-pi/2, pi/2)`, for angles stored in single-precision files.
pub fn wrap_half_turn_f32(phi: f64) -> f64 {
    // Largest f32 below pi/2; f32 rounding of pi/2 itself lands above it.
    let hi = f32::from_bits((FRAC_PI_2 as f32).to_bits() - 1);
    f64::from((wrap_half_turn(phi) as f32).clamp(-hi, hi))
}

pub fn aolp(s1: f64, s2: f64) -> Result<f64> {
    if s1 == 0.0 && s2 == 0.0 {
        return Err(Error::UndefinedAngle);
    }
    Ok(wrap_half_turn(0.5 * s2.atan2(s1)))
}

/// Doubled-angle unit vector `(cos 2phi, sin 2phi)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleVector {
    pub ax: f64,
    pub ay: f64,
}

impl AngleVector {
    pub fn norm(&self) -> f64 {
        self.ax.hypot(self.ay)
    }
}

pub fn angle_to_vector(phi: f64) -> AngleVector {
    let (sin, cos) = (2.0 * phi).sin_cos();
    AngleVector { ax: cos, ay: sin }
}

pub fn vector_to_angle(v: AngleVector) -> Result<f64> {
    aolp(v.ax, v.ay)
}

/// Distance between two orientations, in `[0, pi/2]`.
pub fn wrapped_angle_error(phi_a: f64, phi_b: f64) -> f64 {
    let d = (phi_a - phi_b).rem_euclid(PI);
    d.min(PI - d).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_4;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn stokes_examples() {
        assert_eq!(stokes_from_intensities(1.0, 0.5, 0.0, 0.5).unwrap(), StokesPixel::new(1.0, 1.0, 0.0));
        assert_eq!(stokes_from_intensities(0.5, 1.0, 0.5, 0.0).unwrap(), StokesPixel::new(1.0, 0.0, 1.0));
        for c in [0.0, 0.25, 3.0] {
            assert_eq!(stokes_from_intensities(c, c, c, c).unwrap(), StokesPixel::new(2.0 * c, 0.0, 0.0));
        }
        assert!(matches!(stokes_from_intensities(-0.1, 0.0, 0.0, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn dolp_examples() {
        assert_eq!(dolp(StokesPixel::new(1.0, 1.0, 0.0)).value, 1.0);
        assert_eq!(dolp(StokesPixel::new(2.0, 0.0, 0.0)).value, 0.0);
        assert!((dolp(StokesPixel::new(2.0, 1.0, 1.0)).value - 0.707_106_781_186_547_5).abs() < 1e-12);
        let d = dolp(StokesPixel::new(0.0, 0.0, 0.0));
        assert!(d.degenerate);
        assert_eq!(d.value, 0.0);
        // noise can push the ratio above one
        assert_eq!(dolp(StokesPixel::new(1.0, 1.0, 0.1)).value, 1.0);
    }

    #[test]
    fn aolp_examples() {
        assert_eq!(aolp(1.0, 0.0).unwrap(), 0.0);
        assert!(close(aolp(0.0, 1.0).unwrap(), FRAC_PI_4));
        assert_eq!(aolp(-1.0, 0.0).unwrap(), -FRAC_PI_2);
        assert!(close(aolp(0.0, -1.0).unwrap(), -FRAC_PI_4));
        assert!(matches!(aolp(0.0, 0.0), Err(Error::UndefinedAngle)));
    }

    #[test]
    fn wrap_is_half_open() {
        assert_eq!(wrap_half_turn(FRAC_PI_2), -FRAC_PI_2);
        assert_eq!(wrap_half_turn(-FRAC_PI_2), -FRAC_PI_2);
        assert!(close(wrap_half_turn(PI + 0.25), 0.25));
        assert!(close(wrap_half_turn(-PI - 0.25), -0.25));
    }

    #[test]
    fn vector_examples() {
        let v = angle_to_vector(0.0);
        assert_eq!((v.ax, v.ay), (1.0, 0.0));
        let v = angle_to_vector(FRAC_PI_4);
        assert!(close(v.ax, 0.0) && close(v.ay, 1.0));
        assert!(matches!(vector_to_angle(AngleVector { ax: 0.0, ay: 0.0 }), Err(Error::UndefinedAngle)));
    }

    #[test]
    fn angle_error_examples() {
        let deg = PI / 180.0;
        assert!(close(wrapped_angle_error(89.0 * deg, -89.0 * deg), 2.0 * deg));
        assert_eq!(wrapped_angle_error(0.3, 0.3), 0.0);
        assert!(close(wrapped_angle_error(FRAC_PI_4, -FRAC_PI_4), FRAC_PI_2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn vector_round_trip_mod_pi(phi in -10.0f64..10.0) {
            let back = vector_to_angle(angle_to_vector(phi)).unwrap();
            prop_assert!(wrapped_angle_error(back, phi) < 1e-9);
            prop_assert!((-FRAC_PI_2..FRAC_PI_2).contains(&back));
            prop_assert!((angle_to_vector(phi).norm() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn dolp_and_aolp_scale_invariant(s0 in 0.01f64..10.0, d in 0.0f64..1.0, phi in -1.5f64..1.5, k in 0.01f64..100.0) {
            let p = StokesPixel::from_polarization(s0, phi, d);
            prop_assert!((dolp(p).value - dolp(p.scale(k)).value).abs() < 1e-12);
            if d > 1e-6 {
                let a = aolp(p.s1, p.s2).unwrap();
                let b = aolp(k * p.s1, k * p.s2).unwrap();
                prop_assert!(wrapped_angle_error(a, b) < 1e-12);
            }
        }

        #[test]
        fn angle_error_is_pseudometric(a in -5.0f64..5.0, b in -5.0f64..5.0, c in -5.0f64..5.0, k in -3i32..3) {
            let e = wrapped_angle_error;
            prop_assert!((e(a, b) - e(b, a)).abs() < 1e-12);
            prop_assert!(e(a, c) <= e(a, b) + e(b, c) + 1e-12);
            prop_assert!((0.0..=FRAC_PI_2 + 1e-15).contains(&e(a, b)));
            prop_assert!(e(a, a + k as f64 * PI) < 1e-9);
        }
    }
}
