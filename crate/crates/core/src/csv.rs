//! CSV emission for decay curves, penalty matrices and occupancy traces.
//!
//! Numbers are written with 12 significant digits in `%.12g` style, rows end
//! with `\n`.

use std::fmt::Write;

use crate::occupancy::OccupancyTrace;
use crate::penalty::{DecayCurve, PenaltyMatrix};
use crate::timeline::{KeyOwner, SegmentSchedule, TokenLayout};

pub const SIGNIFICANT_DIGITS: usize = 12;

/// Formats `x` like C's `%.12g`: fixed notation for decimal exponents in
/// `[-5, 12)`, scientific otherwise, trailing zeros removed.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let p = SIGNIFICANT_DIGITS;
    // Round once in scientific form so the exponent reflects rounding.
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if exp < -5 || exp >= p as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_owned()
    }
}

/// Quotes a header field if it contains a comma, quote or line break.
fn field(name: &str) -> String {
    if name.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", name.replace('"', "\"\""))
    } else {
        name.to_owned()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// `offset,retained_fraction` table for one curve.
pub fn decay_curve_csv(curve: &DecayCurve) -> String {
    let mut out = String::from("offset,retained_fraction\n");
    for p in &curve.points {
        writeln!(out, "{},{}", fmt_sig(p.offset), fmt_sig(p.retained_fraction)).unwrap();
    }
    out
}

/// One `offset` column followed by one labeled fraction column per curve.
/// All curves must share the same offsets.
pub fn decay_sweep_csv(curves: &[(String, DecayCurve)]) -> String {
    let mut out = String::from("offset");
    for (label, _) in curves {
        write!(out, ",{label}").unwrap();
    }
    out.push('\n');
    let Some((_, first)) = curves.first() else {
        return out;
    };
    for (row, p) in first.points.iter().enumerate() {
        out.push_str(&fmt_sig(p.offset));
        for (_, curve) in curves {
            debug_assert_eq!(curve.points[row].offset, p.offset);
            write!(out, ",{}", fmt_sig(curve.points[row].retained_fraction)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Penalty entries, one row per query. Key columns are labeled
/// `<prompt>#<n>` with `n` counting that prompt's tokens from 0.
pub fn penalty_csv(schedule: &SegmentSchedule, layout: &TokenLayout, penalty: &PenaltyMatrix) -> String {
    let mut out = String::from("query,frame");
    let mut seen = vec![0usize; schedule.segments().len() + 1];
    for &owner in layout.key_owners() {
        let (col, name) = match owner {
            KeyOwner::Segment(id) => (
                id.0 - 1,
                schedule.segment(id).map_or("", |s| s.prompt_id()),
            ),
            KeyOwner::Global => (
                schedule.segments().len(),
                schedule.global_prompt_id().unwrap_or(""),
            ),
        };
        write!(out, ",{}", field(&format!("{name}#{}", seen[col]))).unwrap();
        seen[col] += 1;
    }
    out.push('\n');
    for q in 0..layout.query_count() {
        write!(out, "{q},{}", layout.query_frame(q)).unwrap();
        for &c in penalty.values().row(q) {
            write!(out, ",{}", fmt_sig(c)).unwrap();
        }
        out.push('\n');
    }
    out
}

/// `frame,<prompt>...` table, one row per latent frame.
pub fn occupancy_csv(trace: &OccupancyTrace) -> String {
    let mut out = String::from("frame");
    for p in trace.prompts() {
        write!(out, ",{}", field(p)).unwrap();
    }
    out.push('\n');
    for f in 0..trace.frames() {
        write!(out, "{f}").unwrap();
        for &x in trace.row(f) {
            write!(out, ",{}", fmt_sig(x)).unwrap();
        }
        out.push('\n');
    }
    out
}
