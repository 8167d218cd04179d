//! Standard normal distribution functions.
//!
//! `erf`/`erfc` follow the SunPro rational approximations (FreeBSD
//! `s_erf.c`), which are accurate to below one ulp in double precision.
//! Everything else in the crate goes through [`cdf`], [`sf`] and [`pdf`].
//!
//! ```text
//! Copyright (C) 1993 by Sun Microsystems, Inc. All rights reserved.
//! Developed at SunPro, a Sun Microsystems, Inc. business.
//! Permission to use, copy, modify, and distribute this
//! software is freely granted, provided that this notice
//! is preserved.
//! ```

// Coefficients are kept digit-for-digit as published.
#![allow(clippy::excessive_precision)]

use crate::error::{AuditError, Result};
use crate::roots::safeguarded_newton;

const ERX: f64 = 8.45062911510467529297e-01;
const EFX: f64 = 1.28379167095512586316e-01;
const EFX8: f64 = 1.02703333676410069053e+00;
const PP0: f64 = 1.28379167095512558561e-01;
const PP1: f64 = -3.25042107247001499370e-01;
const PP2: f64 = -2.84817495755985104766e-02;
const PP3: f64 = -5.77027029648944159157e-03;
const PP4: f64 = -2.37630166566501626084e-05;
const QQ1: f64 = 3.97917223959155352819e-01;
const QQ2: f64 = 6.50222499887672944485e-02;
const QQ3: f64 = 5.08130628187576562776e-03;
const QQ4: f64 = 1.32494738004321644526e-04;
const QQ5: f64 = -3.96022827877536812320e-06;
const PA0: f64 = -2.36211856075265944077e-03;
const PA1: f64 = 4.14856118683748331666e-01;
const PA2: f64 = -3.72207876035701323847e-01;
const PA3: f64 = 3.18346619901161753674e-01;
const PA4: f64 = -1.10894694282396677476e-01;
const PA5: f64 = 3.54783043256182359371e-02;
const PA6: f64 = -2.16637559486879084300e-03;
const QA1: f64 = 1.06420880400844228286e-01;
const QA2: f64 = 5.40397917702171048937e-01;
const QA3: f64 = 7.18286544141962662868e-02;
const QA4: f64 = 1.26171219808761642112e-01;
const QA5: f64 = 1.36370839120290507362e-02;
const QA6: f64 = 1.19844998467991074170e-02;
const RA0: f64 = -9.86494403484714822705e-03;
const RA1: f64 = -6.93858572707181764372e-01;
const RA2: f64 = -1.05586262253232909814e+01;
const RA3: f64 = -6.23753324503260060396e+01;
const RA4: f64 = -1.62396669462573470355e+02;
const RA5: f64 = -1.84605092906711035994e+02;
const RA6: f64 = -8.12874355063065934246e+01;
const RA7: f64 = -9.81432934416914548592e+00;
const SA1: f64 = 1.96512716674392571292e+01;
const SA2: f64 = 1.37657754143519042600e+02;
const SA3: f64 = 4.34565877475229228821e+02;
const SA4: f64 = 6.45387271733267880336e+02;
const SA5: f64 = 4.29008140027567833386e+02;
const SA6: f64 = 1.08635005541779435134e+02;
const SA7: f64 = 6.57024977031928170135e+00;
const SA8: f64 = -6.04244152148580987438e-02;
const RB0: f64 = -9.86494292470009928597e-03;
const RB1: f64 = -7.99283237680523006574e-01;
const RB2: f64 = -1.77579549177547519889e+01;
const RB3: f64 = -1.60636384855821916062e+02;
const RB4: f64 = -6.37566443368389627722e+02;
const RB5: f64 = -1.02509513161107724954e+03;
const RB6: f64 = -4.83519191608651397019e+02;
const SB1: f64 = 3.03380607434824582924e+01;
const SB2: f64 = 3.25792512996573918826e+02;
const SB3: f64 = 1.53672958608443695994e+03;
const SB4: f64 = 3.19985821950859553908e+03;
const SB5: f64 = 2.55305040643316442583e+03;
const SB6: f64 = 4.74528541206955367215e+02;
const SB7: f64 = -2.24409524465858183362e+01;

const VERY_TINY: f64 = 2.848094538889218e-306;
const SMALL: f64 = 3.725_290_298_461_914e-9; // 2^-28
const TINY: f64 = 1.387_778_780_781_445_7e-17; // 2^-56

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// exp(-x^2 - 0.5625 + R/S) / x for |x| >= 1.25, split to keep the
/// exponent accurate.
fn tail_factor(x: f64) -> f64 {
    let s = 1.0 / (x * x);
    let (r, q) = if x < 1.0 / 0.35 {
        (
            RA0 + s * (RA1 + s * (RA2 + s * (RA3 + s * (RA4 + s * (RA5 + s * (RA6 + s * RA7)))))),
            1.0 + s
                * (SA1
                    + s * (SA2
                        + s * (SA3 + s * (SA4 + s * (SA5 + s * (SA6 + s * (SA7 + s * SA8))))))),
        )
    } else {
        (
            RB0 + s * (RB1 + s * (RB2 + s * (RB3 + s * (RB4 + s * (RB5 + s * RB6))))),
            1.0 + s * (SB1 + s * (SB2 + s * (SB3 + s * (SB4 + s * (SB5 + s * (SB6 + s * SB7)))))),
        )
    };
    let z = f64::from_bits(x.to_bits() & 0xffff_ffff_0000_0000);
    (-z * z - 0.5625).exp() * ((z - x) * (z + x) + r / q).exp() / x
}

pub fn erf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let a = x.abs();
    let value = if a < 0.84375 {
        if a < SMALL {
            if a < VERY_TINY {
                0.125 * (8.0 * a + EFX8 * a)
            } else {
                a + EFX * a
            }
        } else {
            let z = a * a;
            let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
            let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
            a + a * (r / s)
        }
    } else if a < 1.25 {
        let s = a - 1.0;
        let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
        let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
        ERX + p / q
    } else if a >= 6.0 {
        1.0
    } else {
        1.0 - tail_factor(a)
    };
    if x < 0.0 {
        -value
    } else {
        value
    }
}

pub fn erfc(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    let a = x.abs();
    let neg = x < 0.0;
    if a < 0.84375 {
        let t = if a < TINY {
            a
        } else {
            let z = a * a;
            let r = PP0 + z * (PP1 + z * (PP2 + z * (PP3 + z * PP4)));
            let s = 1.0 + z * (QQ1 + z * (QQ2 + z * (QQ3 + z * (QQ4 + z * QQ5))));
            let y = r / s;
            if a < 0.25 {
                a + a * y
            } else {
                0.5 + (a * y + (a - 0.5))
            }
        };
        return if neg { 1.0 + t } else { 1.0 - t };
    }
    if a < 1.25 {
        let s = a - 1.0;
        let p = PA0 + s * (PA1 + s * (PA2 + s * (PA3 + s * (PA4 + s * (PA5 + s * PA6)))));
        let q = 1.0 + s * (QA1 + s * (QA2 + s * (QA3 + s * (QA4 + s * (QA5 + s * QA6)))));
        return if neg {
            1.0 + ERX + p / q
        } else {
            1.0 - ERX - p / q
        };
    }
    if a < 28.0 {
        if neg && a > 6.0 {
            return 2.0;
        }
        let r = tail_factor(a);
        return if neg { 2.0 - r } else { r };
    }
    if neg {
        2.0
    } else {
        0.0
    }
}

/// Φ(x).
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Upper tail 1 − Φ(x), accurate far into the tail.
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2)
}

/// φ(x).
pub fn pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Φ(hi) − Φ(lo) for lo ≤ hi, evaluated on whichever tail keeps precision.
pub fn interval_prob(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        sf(lo) - sf(hi)
    } else if hi <= 0.0 {
        cdf(hi) - cdf(lo)
    } else {
        1.0 - sf(hi) - cdf(lo)
    }
}

/// Two-sided p-value 2(1 − Φ(|z|)).
pub fn two_sided_p(z: f64) -> f64 {
    erfc(z.abs() * std::f64::consts::FRAC_1_SQRT_2).min(1.0)
}

/// x with 1 − Φ(x) = q, for q in (0, 1).
pub fn upper_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(AuditError::OutOfRange {
            name: "tail probability",
            value: q,
            expected: "(0, 1)",
        });
    }
    if q > 0.5 {
        return upper_quantile(1.0 - q).map(|x| -x);
    }
    if q == 0.5 {
        return Ok(0.0);
    }
    // Abramowitz & Stegun 26.2.23 as a starting point.
    let t = (-2.0 * q.ln()).sqrt();
    let start = t
        - (2.515517 + 0.802853 * t + 0.010328 * t * t)
            / (1.0 + 1.432788 * t + 0.189269 * t * t + 0.001308 * t * t * t);
    safeguarded_newton(|x| sf(x) - q, |x| -pdf(x), 0.0, 40.0, start, 1e-15)
}

/// Φ⁻¹(p), for p in (0, 1).
pub fn quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(AuditError::OutOfRange {
            name: "probability",
            value: p,
            expected: "(0, 1)",
        });
    }
    if p < 0.5 {
        upper_quantile(p).map(|x| -x)
    } else {
        upper_quantile(1.0 - p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn erf_reference_values() {
        assert_eq!(erf(0.0), 0.0);
        assert!((erf(0.3) - 0.328_626_759_459_127_4).abs() < 1e-15);
        assert!((erf(1.0) - 0.842_700_792_949_714_9).abs() < 1e-15);
        assert!((erf(-1.0) + 0.842_700_792_949_714_9).abs() < 1e-15);
        assert!((erfc(3.5) - 7.430_983_723_414_128e-7).abs() < 1e-20);
        assert_eq!(erfc(f64::INFINITY), 0.0);
        assert_eq!(erfc(-30.0), 2.0);
        assert!(erf(f64::NAN).is_nan());
    }

    #[test]
    fn cdf_landmarks() {
        assert_eq!(cdf(0.0), 0.5);
        assert!((cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        assert!((sf(5.0) - 2.866_515_718_791_939e-7).abs() < 1e-20);
        assert!((cdf(-1.0) + sf(-1.0) - 1.0).abs() < 1e-16);
    }

    #[test]
    fn interval_prob_matches_difference() {
        for &(a, b) in &[(-1.0, 2.0), (0.5, 3.0), (-4.0, -0.2), (8.0, 9.0)] {
            let direct = cdf(b) - cdf(a);
            assert!((interval_prob(a, b) - direct).abs() < 1e-15);
        }
        assert!(interval_prob(8.0, 9.0) > 0.0);
    }

    #[test]
    fn two_sided_p_table_values() {
        assert!((two_sided_p(0.03803) - 0.970).abs() < 1e-3);
        assert!((two_sided_p(-2.6122) - 0.009).abs() < 1e-3);
        assert_eq!(two_sided_p(0.0), 1.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &p in &[1e-12, 1e-6, 0.01, 0.2, 0.5, 0.7, 0.975, 0.999_999] {
            let x = quantile(p).unwrap();
            let back = if p > 0.5 { 1.0 - sf(x) } else { cdf(x) };
            assert!((back - p).abs() <= 1e-12 * p.max(1e-3), "p={p} x={x}");
        }
        assert!(quantile(0.0).is_err());
        assert!(quantile(1.0).is_err());
    }
}
