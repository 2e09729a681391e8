//! CSV tables and a minimal SVG line plot.

use std::io::Write;

use crate::error::Result;
use crate::scalar::{to_f64, Scalar};
use crate::variational::SweepRow;

/// Header of the localization table.
pub const SWEEP_HEADER: &str = "s,l2_error,energy_gap,el_residual";

/// Writes `x,value` rows with 17 significant digits.
pub fn write_xy_csv<T: Scalar, W: Write>(mut out: W, xs: &[T], ys: &[T]) -> Result<()> {
    writeln!(out, "x,value")?;
    for (x, y) in xs.iter().zip(ys) {
        writeln!(out, "{:.16e},{:.16e}", to_f64(*x), to_f64(*y))?;
    }
    Ok(())
}

pub fn write_sweep_csv<T: Scalar, W: Write>(mut out: W, rows: &[SweepRow<T>]) -> Result<()> {
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            to_f64(r.s),
            to_f64(r.l2_error),
            to_f64(r.energy_gap),
            to_f64(r.el_residual)
        )?;
    }
    Ok(())
}

/// Writes an 800x500 SVG with one polyline through `(xs, ys)`.
pub fn write_svg<T: Scalar, W: Write>(mut out: W, title: &str, xs: &[T], ys: &[T]) -> Result<()> {
    const W_PX: f64 = 800.0;
    const H_PX: f64 = 500.0;
    const PAD: f64 = 50.0;
    let xs: Vec<f64> = xs.iter().map(|&v| to_f64(v)).collect();
    let ys: Vec<f64> = ys.iter().map(|&v| to_f64(v)).collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W_PX - 2.0 * PAD);
    let sy = |y: f64| H_PX - PAD - (y - y0) / (y1 - y0) * (H_PX - 2.0 * PAD);
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="800" height="500" viewBox="0 0 800 500">"#
    )?;
    writeln!(out, r#"<rect width="800" height="500" fill="white"/>"#)?;
    writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W_PX - 2.0 * PAD,
        H_PX - 2.0 * PAD
    )?;
    if y0 < 0.0 && y1 > 0.0 {
        writeln!(
            out,
            r#"<line x1="{PAD}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="gray" stroke-dasharray="4"/>"#,
            W_PX - PAD,
            y = sy(0.0)
        )?;
    }
    let title = title.replace('&', "&amp;").replace('<', "&lt;");
    writeln!(
        out,
        r#"<text x="400" y="30" text-anchor="middle" font-size="16">{title}</text>"#
    )?;
    writeln!(
        out,
        r#"<text x="{PAD}" y="{}" font-size="12">{x0:.3}</text><text x="{}" y="{}" font-size="12" text-anchor="end">{x1:.3}</text>"#,
        H_PX - PAD + 18.0,
        W_PX - PAD,
        H_PX - PAD + 18.0
    )?;
    writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="end">{y1:.3}</text><text x="{}" y="{}" font-size="12" text-anchor="end">{y0:.3}</text>"#,
        PAD - 4.0,
        PAD + 4.0,
        PAD - 4.0,
        H_PX - PAD
    )?;
    write!(
        out,
        r#"<polyline fill="none" stroke="steelblue" stroke-width="1.5" points=""#
    )?;
    for (x, y) in xs.iter().zip(&ys) {
        write!(out, "{:.2},{:.2} ", sx(*x), sy(*y))?;
    }
    writeln!(out, r#""/>"#)?;
    writeln!(out, "</svg>")?;
    Ok(())
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        (0.0, 1.0)
    } else if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_csv_layout() {
        let rows = vec![SweepRow {
            s: 0.5,
            l2_error: 0.25,
            energy_gap: 0.125,
            el_residual: 1e-12,
            iterations: 3,
        }];
        let mut buf = Vec::new();
        write_sweep_csv(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(SWEEP_HEADER));
        assert_eq!(
            lines.next(),
            Some("5.0000000000000000e-1,2.5000000000000000e-1,1.2500000000000000e-1,9.9999999999999998e-13")
        );
    }

    #[test]
    fn svg_is_well_formed() {
        let xs = [0.0, 1.0, 2.0];
        let ys = [1.0, -1.0, 1.0];
        let mut buf = Vec::new();
        write_svg(&mut buf, "a<b", &xs, &ys).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("<svg"));
        assert!(text.contains(r#"width="800" height="500""#));
        assert!(text.contains("a&lt;b"));
        assert_eq!(text.matches("<polyline").count(), 1);
        assert!(text.trim_end().ends_with("</svg>"));
    }
}
