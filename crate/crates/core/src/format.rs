//! Deterministic number formatting for the written artifacts.

/// Fixed-point rendering with 12 significant digits, `.` as separator.
/// Magnitudes below `1e-20` print with 31 decimals and may lose digits.
pub fn num(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return if v == 0.0 { "0".to_string() } else { v.to_string() };
    }
    let exp = v.abs().log10().floor() as i32;
    let decimals = (11 - exp).clamp(0, 31) as usize;
    let s = format!("{v:.decimals$}");
    // Rounding can carry into a new leading digit (9.99.. -> 10.0..).
    let digits = s.chars().filter(|c| c.is_ascii_digit()).skip_while(|&c| c == '0').count();
    if digits > 12 && decimals > 0 {
        let d = decimals - 1;
        format!("{v:.d$}")
    } else {
        s
    }
}
