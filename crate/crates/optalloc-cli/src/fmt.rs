/// Six significant digits, trailing zeros trimmed, scientific notation
/// outside `[1e-4, 1e6)`.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    if !(-4..6).contains(&mag) {
        let s = format!("{x:.5e}");
        let (mantissa, exp) = s.split_once('e').unwrap_or((&s, "0"));
        return format!("{}e{exp}", trim(mantissa));
    }
    let decimals = (5 - mag).max(0) as usize;
    trim(&format!("{x:.decimals$}")).to_string()
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| sig6(*x)).collect();
    format!("[{}]", parts.join(", "))
}
