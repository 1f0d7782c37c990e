//! Decibel conversions. Everything past the configuration layer is linear SI.

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * w.log10() + 30.0
}

pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// SINR needed to reach `rate` bps/Hz.
pub fn sinr_threshold(rate: f64) -> f64 {
    2f64.powf(rate) - 1.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn conversions() {
        assert_eq!(db_to_linear(0.0), 1.0);
        assert_relative_eq!(db_to_linear(-100.0), 1e-10, max_relative = 1e-14);
        assert_relative_eq!(dbm_to_watts(-110.0), 1e-14, max_relative = 1e-14);
        assert_relative_eq!(dbm_to_watts(30.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(linear_to_db(db_to_linear(-37.5)), -37.5, max_relative = 1e-14);
        assert_relative_eq!(watts_to_dbm(dbm_to_watts(-3.0)), -3.0, max_relative = 1e-14);
    }

    #[test]
    fn thresholds() {
        assert_eq!(sinr_threshold(0.0), 0.0);
        assert_eq!(sinr_threshold(1.0), 1.0);
        assert_relative_eq!(sinr_threshold(0.5), 2f64.sqrt() - 1.0);
    }

    #[test]
    fn eight_ghz_wavelength() {
        assert_relative_eq!(wavelength(8e9), 0.037474057, max_relative = 1e-8);
    }
}
