//! Number formatting and CSV output.

use std::io::Write;
use std::path::Path;

use tou_core::Reservation;

use crate::CliError;

/// Console numbers: fixed four decimals.
pub fn console(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

/// File numbers: plain decimal with up to 12 significant digits.
pub fn full(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (11 - magnitude).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

pub fn reservation_kwh(r: Reservation, step: f64) -> f64 {
    match r {
        Reservation::Finite(m) => m as f64 * step,
        Reservation::Unbounded => f64::INFINITY,
    }
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(header).map_err(|e| CliError::Io(e.to_string()))?;
    for row in rows {
        writer.write_record(row).map_err(|e| CliError::Io(e.to_string()))?;
    }
    writer.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
    }
    let mut file = std::fs::File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    file.write_all(bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Left-aligned text table with a dashed rule under the header.
pub fn table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_precision_numbers() {
        assert_eq!(full(7.7), "7.7");
        assert_eq!(full(0.1 + 0.2), "0.3");
        assert_eq!(full(1.0986122886681098), "1.09861228867");
        assert_eq!(full(123456.0), "123456");
        assert_eq!(full(-0.0), "0");
        assert_eq!(full(f64::INFINITY), "inf");
        assert_eq!(full(2.5e-7), "0.00000025");
    }

    #[test]
    fn console_numbers() {
        assert_eq!(console(7.7), "7.7000");
        assert_eq!(console(-0.00001), "0.0000");
    }
}
