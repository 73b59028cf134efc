//! Unit conversions at the presentation boundary.

use std::f64::consts::LN_2;

pub fn nats_to_bits(x: f64) -> f64 {
    x / LN_2
}

pub fn bits_to_nats(x: f64) -> f64 {
    x * LN_2
}

/// Variances scale with the square of the unit.
pub fn nats2_to_bits2(v: f64) -> f64 {
    v / (LN_2 * LN_2)
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert_eq!(nats_to_bits(LN_2), 1.0);
        assert_eq!(bits_to_nats(3.0), 3.0 * LN_2);
        assert!((db_to_linear(30.0) - 1000.0).abs() < 1e-9);
        assert!((linear_to_db(db_to_linear(3.0)) - 3.0).abs() < 1e-12);
    }
}
