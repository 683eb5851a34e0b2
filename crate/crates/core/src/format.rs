//! Fixed-precision number formatting for text outputs.

/// Formats `x` with 17 significant digits.
///
/// Plain notation is used for moderate magnitudes, scientific otherwise.
pub fn sig17(x: f64) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0.0000000000000000".to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-4..15).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.16e}")
    }
}
