//! Float formatting for tabular output.

/// Shortest decimal text that parses back to the same `f64`. Magnitudes
/// outside `[1e-5, 1e16)` use exponent notation.
pub fn decimal(v: f64) -> String {
    let m = v.abs();
    if v == 0.0 || !v.is_finite() || (1e-5..1e16).contains(&m) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}
