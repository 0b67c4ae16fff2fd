//! Patch-score grids as CSV matrices and binary PGM images.

use std::fmt::Write as _;

/// Maps scores onto `0..=255` by min-max normalization. A constant grid
/// maps to mid-gray.
pub fn gray_levels(scores: &[f64]) -> Vec<u8> {
    let lo = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi.partial_cmp(&lo) != Some(core::cmp::Ordering::Greater) {
        return vec![128; scores.len()];
    }
    scores
        .iter()
        .map(|&s| ((s - lo) / (hi - lo) * 255.0).round() as u8)
        .collect()
}

/// `side` rows of `side` comma-separated scores, preceded by `# ` comment lines.
pub fn to_csv(scores: &[f64], side: usize, comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    for row in scores.chunks(side) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "{}", cells.join(","));
    }
    out
}

/// Binary (P5) graymap, one pixel per patch.
pub fn to_pgm(scores: &[f64], side: usize, comments: &[String]) -> Vec<u8> {
    let mut header = String::from("P5\n");
    for c in comments {
        let _ = writeln!(header, "# {}", c.replace('\n', " "));
    }
    let _ = write!(header, "{side} {side}\n255\n");
    let mut out = header.into_bytes();
    out.extend(gray_levels(scores));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_constant_gray() {
        assert!(gray_levels(&[0.3; 16]).iter().all(|&v| v == 128));
    }

    #[test]
    fn min_max_normalized() {
        assert_eq!(gray_levels(&[0.0, 0.5, 1.0]), [0, 128, 255]);
        assert_eq!(gray_levels(&[-2.0, 2.0]), [0, 255]);
    }

    #[test]
    fn pgm_layout() {
        let pgm = to_pgm(&[0.0, 1.0, 1.0, 0.0], 2, &["x".into()]);
        assert!(pgm.starts_with(b"P5\n# x\n2 2\n255\n"));
        assert_eq!(&pgm[pgm.len() - 4..], &[0, 255, 255, 0]);
    }

    #[test]
    fn csv_shape() {
        let csv = to_csv(&[0.0; 9], 3, &[]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().all(|l| l.split(',').count() == 3));
    }
}
