//! Deterministic float formatting for emitted CSV files.

/// Format `x` with `sig` significant digits, `%g`-style: fixed notation with
/// trailing zeros trimmed for moderate magnitudes, scientific otherwise.
///
/// The output is a pure function of the bits of `x`, which is what makes
/// rerun-for-rerun byte-identical CSV output possible.
pub fn format_sig(x: f64, sig: usize) -> String {
    assert!(sig >= 1);
    if x == 0.0 {
        return "0".to_string();
    }
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let decimals = sig as i32 - 1 - exp;
    if (-3..=15).contains(&exp) && decimals >= 0 {
        let s = format!("{:.*}", decimals as usize, x);
        trim_fixed(&s)
    } else {
        format!("{:.*e}", sig - 1, x)
    }
}

fn trim_fixed(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t.is_empty() || t == "-" {
        "0".to_string()
    } else {
        t.to_string()
    }
}
