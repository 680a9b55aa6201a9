//! Small numeric helpers shared across the crate.

use alloc::format;
use alloc::string::String;

/// Significant digits used for every decimal the simulator writes out.
pub const SIGNIFICANT_DIGITS: i32 = 12;

/// Formats `v` with 12 significant digits, trailing zeros removed.
///
/// Magnitudes outside `[1e-5, 1e12)` switch to scientific notation.
pub fn format_sig(v: f64) -> String {
    if v == 0.0 {
        return String::from("0");
    }
    if !v.is_finite() {
        return if v.is_nan() {
            String::from("NaN")
        } else if v > 0.0 {
            String::from("inf")
        } else {
            String::from("-inf")
        };
    }
    let exponent = libm::floor(libm::log10(v.abs())) as i32;
    if !(-5..SIGNIFICANT_DIGITS).contains(&exponent) {
        let s = format!("{:.*e}", (SIGNIFICANT_DIGITS - 1) as usize, v);
        // "1.50000000000e3" -> "1.5e3"
        return match s.split_once('e') {
            Some((mantissa, exp)) => format!("{}e{}", trim_zeros(mantissa), exp),
            None => s,
        };
    }
    let decimals = (SIGNIFICANT_DIGITS - 1 - exponent).max(0) as usize;
    let s = format!("{:.*}", decimals, v);
    String::from(trim_zeros(&s))
}

fn trim_zeros(s: &str) -> &str {
    if !s.contains('.') {
        return s;
    }
    let s = s.trim_end_matches('0');
    s.trim_end_matches('.')
}

/// Maximizes a concave function on `[lo, hi]` by golden-section search.
///
/// Returns `(argmax, max)`. Ties at the end of the search resolve toward
/// the larger abscissa.
pub fn golden_section_max<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while (b - a) > tol && iters < 200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    let mut best = (lo, f(lo));
    for x in [c, d, hi] {
        let v = f(x);
        if v >= best.1 {
            best = (x, v);
        }
    }
    let mid = 0.5 * (a + b);
    let vm = f(mid);
    if vm > best.1 {
        best = (mid, vm);
    }
    best
}
