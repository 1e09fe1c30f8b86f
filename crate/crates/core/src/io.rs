//! Fixed-format writers shared by the exporters.

use std::io::Write;

use crate::error::Result;

/// 17 significant digits, round-trip exact.
pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

/// Write a binary P6 grayscale heatmap; `values` are row-major, `width` per row,
/// scaled linearly by their maximum to 0..=255.
pub fn write_ppm<W: Write>(mut out: W, width: usize, height: usize, values: &[f64]) -> Result<()> {
    assert_eq!(values.len(), width * height);
    let max = values.iter().cloned().fold(0.0_f64, f64::max);
    write!(out, "P6\n{width} {height}\n255\n")?;
    let mut buf = Vec::with_capacity(values.len() * 3);
    for &v in values {
        let level = if max > 0.0 {
            (255.0 * (v / max)).round().clamp(0.0, 255.0) as u8
        } else {
            0
        };
        buf.extend_from_slice(&[level, level, level]);
    }
    out.write_all(&buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_format_round_trips() {
        for x in [0.1, -1.0 / 3.0, 1e-300, std::f64::consts::PI, 0.0] {
            let s = fmt_real(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_real(1.0), "1.0000000000000000e0");
    }

    #[test]
    fn ppm_header_and_scaling() {
        let mut buf = Vec::new();
        write_ppm(&mut buf, 2, 1, &[0.5, 1.0]).unwrap();
        assert_eq!(&buf[..11], b"P6\n2 1\n255\n");
        assert_eq!(&buf[11..], &[128, 128, 128, 255, 255, 255]);
    }
}
