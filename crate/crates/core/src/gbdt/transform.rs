use crate::error::{Error, Result};

/// Constant added before taking logs, so zero concentrations are finite.
pub const LOG_EPSILON: f64 = 1e-7;

pub fn log_transform(y: f64) -> Result<f64> {
    if !(y >= 0.0) || !y.is_finite() {
        return Err(Error::invalid(format!("cannot log-transform target {y}")));
    }
    Ok((y + LOG_EPSILON).ln())
}

/// `exp(y') - 1e-7`, clamped at zero.
pub fn inverse_transform(y_log: f64) -> f64 {
    (y_log.exp() - LOG_EPSILON).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_maps_to_log_epsilon() {
        let v = log_transform(0.0).unwrap();
        assert!((v - (-16.11809565095832)).abs() < 1e-12);
        assert!((v - 1e-7f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_negative_targets() {
        assert!(log_transform(-0.1).is_err());
        assert!(log_transform(f64::NAN).is_err());
    }

    #[test]
    fn round_trip() {
        let y = 37.5;
        let back = inverse_transform(log_transform(y).unwrap());
        assert!(((back - y) / y).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn inverse_is_never_negative(v in -1e3f64..1e3) {
            prop_assert!(inverse_transform(v) >= 0.0);
        }

        #[test]
        fn round_trip_relative_error(y in 1e-3f64..1e4) {
            let back = inverse_transform(log_transform(y).unwrap());
            prop_assert!(((back - y) / y).abs() < 1e-9);
        }
    }
}
