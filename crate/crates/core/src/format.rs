//! Fixed 6-significant-digit number formatting shared by every report.
//!
//! Matches C's `%.6g`: scientific notation when the decimal exponent is
//! below -4 or at least 6, trailing zeros removed.

pub fn fmt6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (5 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `x` rounded to 6 significant digits, so JSON output prints the same
/// digits as the CSV output.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() {
        return x;
    }
    fmt6(x).parse().unwrap_or(x)
}

pub fn sig6_opt(x: Option<f64>) -> Option<f64> {
    x.map(sig6)
}

/// Empty string for undefined values in CSV cells.
pub fn fmt6_opt(x: Option<f64>) -> String {
    x.map(fmt6).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.6666666666, "0.666667"),
            (123456.4, "123456"),
            (1234567.0, "1.23457e+06"),
            (0.0001234567, "0.000123457"),
            (0.00001234567, "1.23457e-05"),
            (-2.5, "-2.5"),
            (999999.5, "1e+06"),
            (0.1654, "0.1654"),
            (1e-9, "1e-09"),
        ];
        for (x, s) in cases {
            assert_eq!(fmt6(x), s, "{x}");
        }
    }

    #[test]
    fn sig6_rounds() {
        assert_eq!(sig6(2.0 / 3.0), 0.666667);
        assert_eq!(sig6(1.0e-12 + 0.5), 0.5);
    }
}
