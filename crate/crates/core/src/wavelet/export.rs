use std::io::Write;

use super::Scalogram;

/// CSV with the scale values as header row and one row per time sample.
pub fn write_scalogram_csv<W: Write>(mut w: W, s: &Scalogram) -> std::io::Result<()> {
    let header: Vec<String> = s.grid.scales.iter().map(|a| format!("{a:.6}")).collect();
    writeln!(w, "{}", header.join(","))?;
    for t in 0..s.n_times() {
        let row: Vec<String> = s
            .magnitudes
            .iter()
            .map(|r| format!("{:.9e}", r[t]))
            .collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Binary PGM (P5), time on the x axis and frequency decreasing downward,
/// scaled so the largest magnitude is white.
pub fn scalogram_pgm(s: &Scalogram) -> Vec<u8> {
    let width = s.n_times();
    let height = s.magnitudes.len();
    let max = s.magnitudes.iter().flatten().fold(0.0f64, |m, &v| m.max(v));
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    // row 0 is the smallest scale, i.e. the highest frequency
    for row in &s.magnitudes {
        for &v in row {
            let g = if max > 0.0 {
                (v / max * 255.0).round()
            } else {
                0.0
            };
            out.push(g.clamp(0.0, 255.0) as u8);
        }
    }
    out
}

/// Parse a P5 image back into (width, height, pixels).
pub fn parse_pgm(bytes: &[u8]) -> Option<(usize, usize, &[u8])> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return None;
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return None;
    }
    let w: usize = fields[1].parse().ok()?;
    let h: usize = fields[2].parse().ok()?;
    let data = bytes.get(pos + 1..pos + 1 + w * h)?;
    Some((w, h, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::ScaleGrid;

    fn tiny() -> Scalogram {
        Scalogram {
            magnitudes: vec![vec![0.0, 1.0, 2.0], vec![4.0, 0.5, 0.0]],
            grid: ScaleGrid {
                scales: vec![2.0, 4.0],
                omega0: 6.0,
                fs: 100.0,
            },
        }
    }

    #[test]
    fn csv_shape() {
        let mut buf = Vec::new();
        write_scalogram_csv(&mut buf, &tiny()).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "2.000000,4.000000");
        assert!(lines[1].starts_with("0.000000000e0,4.000000000e0"));
    }

    #[test]
    fn pgm_round_trip() {
        let img = scalogram_pgm(&tiny());
        let (w, h, px) = parse_pgm(&img).unwrap();
        assert_eq!((w, h), (3, 2));
        assert_eq!(px, &[0, 64, 128, 255, 32, 0]);
    }
}
