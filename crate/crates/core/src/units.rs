//! Decibel conversions.
//!
//! All evaluators work in SI units (watts, hertz, seconds, bits). Anything
//! expressed in dB or dBm is converted here, once, at configuration load.

/// dBm to watts: 23 dBm -> 0.19953 W.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0) * 1e-3
}

/// dBm/Hz noise density to W/Hz.
pub fn dbm_per_hz_to_watts_per_hz(dbm_hz: f64) -> f64 {
    dbm_to_watts(dbm_hz)
}

/// dB to linear power gain.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Linear power gain to dB.
pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dbm_23_is_about_200_mw() {
        let w = dbm_to_watts(23.0);
        assert!((w - 0.19953).abs() < 1e-4, "got {w}");
    }

    #[test]
    fn db_roundtrip() {
        for &db in &[-174.0, -99.2, -35.3, 0.0, 10.0] {
            assert!((linear_to_db(db_to_linear(db)) - db).abs() < 1e-9);
        }
    }
}
