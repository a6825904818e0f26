//! Deterministic text formatting of numbers.

/// Shortest decimal string that parses back to the same `f64`; large and
/// small magnitudes use exponent notation.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

/// Comma-joined [`num`] values.
pub fn row(values: &[f64]) -> String {
    values.iter().map(|&v| num(v)).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 6.02e23, -2.5, 0.0, f64::MIN_POSITIVE] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
        assert_eq!(num(1e-21), "1e-21");
        assert_eq!(row(&[1.0, 0.5]), "1.0,0.5");
    }
}
