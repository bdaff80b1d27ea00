//! Number formatting shared by every CSV and trace writer.

use num_complex::Complex64;

pub const SIG_DIGITS: usize = 12;

/// `%.12g`: 12 significant digits, trailing zeros trimmed, scientific notation
/// outside `1e-5 ≤ |x| < 1e12`.
pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", SIG_DIGITS - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..SIG_DIGITS as i32).contains(&exp) {
        let decimals = (SIG_DIGITS as i32 - 1 - exp).max(0) as usize;
        trim(format!("{:.*}", decimals, x))
    } else {
        format!("{}e{}", trim(mantissa.to_string()), exp)
    }
}

fn trim(s: String) -> String {
    if !s.contains('.') {
        return s;
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    if t == "-0" { "0".into() } else { t.into() }
}

/// `re+imi` with both parts in [`num`] format.
pub fn complex(z: Complex64) -> String {
    let im = num(z.im);
    if im.starts_with('-') {
        format!("{}{}i", num(z.re), im)
    } else {
        format!("{}+{}i", num(z.re), im)
    }
}
