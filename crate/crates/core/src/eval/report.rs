//! Text table, CSV and overlay images.

use image::{Rgb, RgbImage};
use nalgebra::Point2;

use super::{EvalReport, ErrorStats};

/// Placeholder for a statistic that does not apply.
pub const MISSING: &str = "—";

pub const PRED_COLOR: Rgb<u8> = Rgb([0, 0, 255]);
pub const GT_COLOR: Rgb<u8> = Rgb([0, 255, 0]);

const FOOTER: &str = "px: Euclidean pixel distance in the left image. mm: 3D distance after \
back-projecting the prediction with its depth (5x5 median fallback). std is the population \
standard deviation. R2 is computed jointly over u and v about the per-coordinate target means. \
Accuracy uses valid frames only; failures are counted in the failure column.";

fn cell(v: Option<f64>, precision: usize) -> String {
    v.map_or_else(|| MISSING.to_string(), |x| format!("{x:.precision$}"))
}

fn stats_cells(s: Option<&ErrorStats>) -> [Option<f64>; 3] {
    [s.map(|s| s.mean), s.map(|s| s.std), s.map(|s| s.median)]
}

fn row(r: &EvalReport) -> Vec<String> {
    let mut out = vec![r.name.clone(), r.n_frames.to_string(), r.n_valid.to_string()];
    out.extend(stats_cells(r.px.as_ref()).map(|v| cell(v, 2)));
    out.push(cell(r.r2, 3));
    out.extend(stats_cells(r.mm.as_ref()).map(|v| cell(v, 2)));
    out.push(cell(r.failure_rate.map(|f| 100.0 * f), 1));
    out
}

const HEADER: [&str; 11] = [
    "predictor", "frames", "valid", "mean px", "std px", "median px", "R2", "mean mm", "std mm",
    "median mm", "failure %",
];

/// Aligned text table, one row per report, with a conventions footer.
pub fn render_report(reports: &[EvalReport]) -> String {
    let rows: Vec<Vec<String>> = std::iter::once(HEADER.iter().map(|s| s.to_string()).collect())
        .chain(reports.iter().map(row))
        .collect();
    let widths: Vec<usize> = (0..HEADER.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, r) in rows.iter().enumerate() {
        let line: Vec<String> = r
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| {
                let pad = " ".repeat(w - s.chars().count());
                if c == 0 {
                    format!("{s}{pad}")
                } else {
                    format!("{pad}{s}")
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
        if i == 0 {
            let total = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            out.push_str(&"-".repeat(total));
            out.push('\n');
        }
    }
    out.push('\n');
    out.push_str(FOOTER);
    out.push('\n');
    out
}

/// Machine-readable report, one row per configuration; missing values are
/// empty fields.
pub fn report_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(
        "predictor,n_frames,n_valid,n_failed,failure_rate,mean_px,std_px,median_px,r2,mean_mm,std_mm,median_mm,n_mm_excluded,fingerprint\n",
    );
    let f = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    for r in reports {
        let px = stats_cells(r.px.as_ref());
        let mm = stats_cells(r.mm.as_ref());
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.name,
            r.n_frames,
            r.n_valid,
            r.n_failed,
            f(r.failure_rate),
            f(px[0]),
            f(px[1]),
            f(px[2]),
            f(r.r2),
            f(mm[0]),
            f(mm[1]),
            f(mm[2]),
            r.n_mm_excluded,
            r.fingerprint
        ));
    }
    out
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && x < i64::from(img.width()) && y < i64::from(img.height()) {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Copy of `image` with a green disk at the ground truth and a blue cross at
/// the prediction, both centred on the rounded coordinates. The cross is
/// drawn last so both stay visible when they coincide.
pub fn draw_overlay(image: &RgbImage, pred: Option<Point2<f64>>, gt: Option<Point2<f64>>) -> RgbImage {
    let mut out = image.clone();
    if let Some(gt) = gt {
        let (gx, gy) = (gt.x.round() as i64, gt.y.round() as i64);
        for dy in -4..=4_i64 {
            for dx in -4..=4_i64 {
                if dx * dx + dy * dy <= 16 {
                    put(&mut out, gx + dx, gy + dy, GT_COLOR);
                }
            }
        }
    }
    if let Some(p) = pred {
        let (px, py) = (p.x.round() as i64, p.y.round() as i64);
        for d in -6..=6 {
            put(&mut out, px + d, py, PRED_COLOR);
            put(&mut out, px, py + d, PRED_COLOR);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> EvalReport {
        EvalReport {
            name: "oracle".into(),
            n_frames: 4,
            n_valid: 4,
            n_failed: 0,
            failure_rate: None,
            px: Some(ErrorStats {
                mean: 0.0,
                std: 0.0,
                median: 0.0,
            }),
            r2: Some(1.0),
            mm: None,
            n_mm_excluded: 0,
            fingerprint: "abc".into(),
        }
    }

    #[test]
    fn table_has_header_and_one_row() {
        let table = render_report(&[report()]);
        let lines: Vec<&str> = table.lines().collect();
        assert!(lines[0].starts_with("predictor"));
        assert!(lines[2].starts_with("oracle"));
        assert_eq!(lines[2].matches(MISSING).count(), 4);
        assert!(lines[3].is_empty());
    }

    #[test]
    fn csv_has_one_row_per_report() {
        let csv = report_csv(&[report(), report()]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(1).unwrap().starts_with("oracle,4,4,0,,0.000000"));
    }

    #[test]
    fn coincident_markers_share_the_centre() {
        let img = RgbImage::new(40, 30);
        let p = Point2::new(20.4, 9.6);
        let out = draw_overlay(&img, Some(p), Some(p));
        assert_eq!(*out.get_pixel(20, 10), PRED_COLOR);
        assert_eq!(*out.get_pixel(21, 11), GT_COLOR);
    }
}
