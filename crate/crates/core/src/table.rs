//! Fixed-precision number formatting for CSV output.

/// Significant digits written for every CSV number.
pub const SIG_DIGITS: i32 = 9;

/// Formats `v` with [`SIG_DIGITS`] significant digits.
///
/// Plain decimal notation is used for magnitudes in `[1e-5, 1e9)`, scientific
/// notation otherwise. Negative zero is written as `0`.
pub fn format_number(v: f64) -> String {
    if v.is_nan() {
        return "NaN".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return format!("{:.*}", (SIG_DIGITS - 1) as usize, 0.0);
    }
    // round first so the exponent reflects the printed mantissa
    let sci = format!("{:.*e}", (SIG_DIGITS - 1) as usize, v);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..9).contains(&exp) {
        let decimals = (SIG_DIGITS - 1 - exp).max(0) as usize;
        format!("{v:.decimals$}")
    } else {
        sci
    }
}
