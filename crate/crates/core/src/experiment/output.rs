//! CSV emission.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::{CurvePoint, SweepRow};

pub const HEADER: [&str; 15] = [
    "gamma_bar_db",
    "xi",
    "rho",
    "n_t0",
    "n_t1",
    "n_r0",
    "m_streams",
    "n_interferences",
    "scheme",
    "mean_se",
    "mean_rho_star",
    "prob_overhead_exceeds",
    "prob_infeasible",
    "n_drops",
    "stderr_se",
];

pub const CURVE_HEADER: [&str; 11] = [
    "gamma_bar_db",
    "xi",
    "rho",
    "n_t0",
    "n_t1",
    "n_r0",
    "m_streams",
    "n_interferences",
    "scheme",
    "p_bar",
    "prob_exceeds",
];

/// Formats like C's `%.12g`.
pub fn format_g12(x: f64) -> String {
    const P: i32 = 12;
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{:.*e}", (P - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= P {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (P - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn axis_fields(
    g: f64,
    xi: f64,
    rho: f64,
    ints: [usize; 5],
    scheme: &str,
) -> Vec<String> {
    let mut v = vec![format_g12(g), format_g12(xi), format_g12(rho)];
    v.extend(ints.iter().map(|i| i.to_string()));
    v.push(scheme.to_string());
    v
}

pub fn write_rows<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        let mut rec = axis_fields(
            r.gamma_bar_db,
            r.xi,
            r.rho,
            [r.n_t0, r.n_t1, r.n_r0, r.m_streams, r.n_interferences],
            r.scheme.name(),
        );
        rec.push(format_g12(r.mean_se));
        rec.push(r.mean_rho_star.map(format_g12).unwrap_or_default());
        rec.push(format_g12(r.prob_overhead_exceeds));
        rec.push(format_g12(r.prob_infeasible));
        rec.push(r.n_drops.to_string());
        rec.push(format_g12(r.stderr_se));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

pub fn write_curve_rows<W: Write>(points: &[CurvePoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_HEADER)?;
    for c in points {
        let mut rec = axis_fields(
            c.gamma_bar_db,
            c.xi,
            c.rho,
            [c.n_t0, c.n_t1, c.n_r0, c.m_streams, c.n_interferences],
            c.scheme.name(),
        );
        rec.push(format_g12(c.p_bar));
        rec.push(format_g12(c.prob_exceeds));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::Csv(e.into()))?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn finish(path: &Path, mut w: BufWriter<File>) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_csv(rows: &[SweepRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_rows(rows, &mut w).map_err(|e| with_path(e, path))?;
    finish(path, w)
}

pub fn write_curve_csv(points: &[CurvePoint], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    write_curve_rows(points, &mut w).map_err(|e| with_path(e, path))?;
    finish(path, w)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Csv(c) if c.is_io_error() => match c.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked is_io_error"),
        },
        other => other,
    }
}

/// Path of the exceedance-curve companion of a sweep CSV.
pub fn curve_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("curve.csv")
}
