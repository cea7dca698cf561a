//! Plain-text output helpers shared by the CSV writers.
//!
//! Reals are written with 17 significant digits in scientific notation,
//! `.` decimal separator, no locale.

use std::io::Write;

pub fn fmt_real(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Writes `# `-prefixed metadata lines ahead of a CSV header.
pub fn write_comment_block<W: Write>(out: &mut W, lines: &[String]) -> std::io::Result<()> {
    for line in lines {
        for part in line.lines() {
            writeln!(out, "# {part}")?;
        }
    }
    Ok(())
}

/// Iterates over the data lines of a CSV body, skipping `#` comments and the header.
pub(crate) fn data_lines<'a>(text: &'a str, header: &str) -> impl Iterator<Item = (usize, &'a str)> + 'a {
    let mut seen_header = false;
    let header = header.to_string();
    text.lines().enumerate().filter_map(move |(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        if !seen_header && line == header {
            seen_header = true;
            return None;
        }
        Some((i + 1, line))
    })
}
