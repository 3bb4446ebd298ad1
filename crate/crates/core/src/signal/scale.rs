use crate::error::{Error, Result};

pub const LADDER_LEN: usize = 6;

/// Six log-spaced partials from `f0` up to `8 * f0`: `f0 * 8^(i/5)`.
pub fn harmonic_ladder(f0: f64) -> Result<[f64; LADDER_LEN]> {
    if !(f0 > 0.0) || !f0.is_finite() {
        return Err(Error::input(format!("f0 must be positive and finite, got {f0}")));
    }
    Ok(std::array::from_fn(|i| f0 * 8f64.powf(i as f64 / 5.0)))
}

/// Bark value of a frequency in Hz.
pub fn bark(f: f64) -> Result<f64> {
    if !(f >= 0.0) || !f.is_finite() {
        return Err(Error::input(format!("bark of negative or non-finite frequency {f}")));
    }
    Ok(13.0 * (0.00076 * f).atan() + 3.5 * (f / 7500.0).powi(2).atan())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ladder_for_100_hz() {
        // Frozen from a 30-digit evaluation of 100 * 8^(i/5).
        let expected = [100.0, 151.571656651, 229.739670999, 348.220225318, 527.803164309, 800.0];
        let ladder = harmonic_ladder(100.0).unwrap();
        for (got, want) in ladder.iter().zip(expected) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
    }

    #[test]
    fn ladder_endpoints() {
        let unit = harmonic_ladder(1.0).unwrap();
        assert_eq!(unit[0], 1.0);
        assert_eq!(unit[5], 8.0);
        assert_eq!(harmonic_ladder(85.0).unwrap()[5], 680.0);
    }

    #[test]
    fn ladder_rejects_non_positive() {
        assert!(harmonic_ladder(0.0).is_err());
        assert!(harmonic_ladder(-3.0).is_err());
        assert!(harmonic_ladder(f64::NAN).is_err());
    }

    #[test]
    fn bark_reference_points() {
        assert_eq!(bark(0.0).unwrap(), 0.0);
        // 30-digit evaluations: 0.98672655817..., 8.51053151072...
        assert!((bark(100.0).unwrap() - 0.986_726_558).abs() < 1e-6);
        assert!((bark(1000.0).unwrap() - 8.510_531_511).abs() < 1e-6);
        assert!(bark(-1.0).is_err());
    }

    proptest! {
        #[test]
        fn bark_is_monotone(a in 0.0f64..20_000.0, b in 0.0f64..20_000.0) {
            prop_assume!(a != b);
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            prop_assert!(bark(lo).unwrap() < bark(hi).unwrap());
        }

        #[test]
        fn ladder_ratio_and_scale(f0 in 1e-3f64..1e4, k in 1e-2f64..1e2) {
            let ratio = 8f64.powf(0.2);
            let l = harmonic_ladder(f0).unwrap();
            for w in l.windows(2) {
                prop_assert!(((w[1] / w[0]) / ratio - 1.0).abs() < 1e-9);
            }
            let scaled = harmonic_ladder(k * f0).unwrap();
            for (s, v) in scaled.iter().zip(l) {
                prop_assert!((s / (k * v) - 1.0).abs() < 1e-12);
            }
        }
    }
}
