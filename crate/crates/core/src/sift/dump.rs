//! Line-oriented feature dump: `x y scale orientation d0 .. d127`.

use std::fmt::Write as _;

use super::{SiftFeature, DESCRIPTOR_LEN};
use crate::error::{Error, Result};

/// `%g`-style formatting with `digits` significant digits.
pub fn format_g(v: f64, digits: usize) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let digits = digits.max(1);
    let sci = format!("{:.*e}", digits - 1, v);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= digits as i32 {
        format!("{}e{}{:02}", trim_zeros(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn feature_line(f: &SiftFeature) -> String {
    let mut line = String::with_capacity(16 * (4 + DESCRIPTOR_LEN));
    for v in [f.x, f.y, f.scale, f.orientation] {
        write!(line, "{} ", format_g(v as f64, 6)).unwrap();
    }
    for (i, d) in f.descriptor.iter().enumerate() {
        if i > 0 {
            line.push(' ');
        }
        line.push_str(&format_g(*d as f64, 6));
    }
    line
}

pub fn dump_features(features: &[SiftFeature]) -> String {
    let mut out = String::new();
    for f in features {
        out.push_str(&feature_line(f));
        out.push('\n');
    }
    out
}

/// Reads a dump back. Octave and layer are not part of the format and are
/// left at zero.
pub fn parse_features(text: &str) -> Result<Vec<SiftFeature>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(n, line)| {
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f32>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::parse(format!("feature line {}", n + 1), e.to_string()))?;
            if vals.len() != 4 + DESCRIPTOR_LEN {
                return Err(Error::parse(
                    format!("feature line {}", n + 1),
                    format!("{} values, want {}", vals.len(), 4 + DESCRIPTOR_LEN),
                ));
            }
            Ok(SiftFeature {
                x: vals[0],
                y: vals[1],
                scale: vals[2],
                orientation: vals[3],
                descriptor: vals[4..].to_vec(),
                octave: 0,
                layer: 0,
            })
        })
        .collect()
}
