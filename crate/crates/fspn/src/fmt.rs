//! Numeric output formatting: 12 significant digits everywhere.

/// Render with 12 significant digits; decimal notation for moderate
/// magnitudes, scientific notation outside them.
pub fn sig12(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.000000000000".to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-5..=14).contains(&mag) {
        return format!("{:.11e}", x);
    }
    let decimals = (11 - mag).max(0) as usize;
    format!("{:.*}", decimals, x)
}

#[cfg(test)]
mod tests {
    use super::sig12;

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(sig12(0.171), "0.171000000000");
        assert_eq!(sig12(1.0), "1.00000000000");
        assert_eq!(sig12(-6.05), "-6.05000000000");
        assert_eq!(sig12(0.0), "0.000000000000");
        assert_eq!(sig12(123456.0), "123456.000000");
        assert!(sig12(1e-9).contains('e'));
        assert_eq!(sig12(f64::NEG_INFINITY), "-inf");
    }
}
