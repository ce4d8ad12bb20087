//! Decimal formatting shared by every CSV writer.

/// Shortest decimal rendering of `x` rounded to 10 significant digits.
pub fn sig10(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let rounded: f64 = format!("{x:.9e}").parse().expect("formatted float parses");
    let exp = rounded.abs().log10().floor() as i32;
    if (-5..15).contains(&exp) {
        format!("{rounded}")
    } else {
        let s = format!("{rounded:e}");
        s
    }
}

/// Formats an optional value; `None` becomes an empty cell.
pub fn opt_sig10(x: Option<f64>) -> String {
    x.map(sig10).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_ten_digits() {
        assert_eq!(sig10(1.0), "1");
        assert_eq!(sig10(0.1 + 0.2), "0.3");
        assert_eq!(sig10(std::f64::consts::PI), "3.141592654");
        assert_eq!(sig10(-2.5e-9), "-2.5e-9");
        assert_eq!(sig10(123456789012.0), "123456789000");
        assert_eq!(opt_sig10(None), "");
    }

    #[test]
    fn round_trips_within_ten_digits() {
        for x in [1.234567890123e-200, -9.87654321e12, 4.2e300, 7.0 / 3.0] {
            let back: f64 = sig10(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 1e-9);
        }
    }
}
