//! Table and plot emission: an aggregate CSV mirroring the benchmark-table
//! layout, plus one static SVG convergence plot per sequential run.
//! Outputs are byte-deterministic for fixed inputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::experiment::ResultRecord;
use crate::HarnessError;

fn fmt(v: f64) -> String {
    format!("{v:.6e}")
}

/// Writes `summary.csv` plus convergence SVGs, returning all output paths.
pub fn emit_report(records: &[ResultRecord], out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    if records.is_empty() {
        return Err(HarnessError::Config("no records to report".into()));
    }
    std::fs::create_dir_all(out_dir)
        .map_err(|e| HarnessError::Runtime(format!("creating {}: {e}", out_dir.display())))?;
    let mut paths = Vec::new();

    let mut sorted: Vec<&ResultRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.experiment, &a.family, &a.method, &a.config_hash).cmp(&(
            &b.experiment,
            &b.family,
            &b.method,
            &b.config_hash,
        ))
    });

    let mut csv = String::from(
        "experiment,family,method,dimension,n,repetitions,failures,truth,mape,mape_std_err\n",
    );
    for r in &sorted {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{}",
            r.experiment,
            r.family.as_deref().unwrap_or("-"),
            r.method,
            r.dimension,
            r.n_points,
            r.repetitions.len(),
            r.failures,
            fmt(r.truth),
            r.mape.map(fmt).unwrap_or_else(|| "-".into()),
            r.mape_std_err.map(fmt).unwrap_or_else(|| "-".into()),
        );
    }
    let csv_path = out_dir.join("summary.csv");
    std::fs::write(&csv_path, csv)
        .map_err(|e| HarnessError::Runtime(format!("writing summary.csv: {e}")))?;
    paths.push(csv_path);

    for r in &sorted {
        if let Some(svg) = convergence_svg(r) {
            let name = r.file_name().replace(".json", ".svg");
            let path = out_dir.join(name);
            std::fs::write(&path, svg)
                .map_err(|e| HarnessError::Runtime(format!("writing plot: {e}")))?;
            paths.push(path);
        }
    }
    Ok(paths)
}

/// Convergence plot of the first successful repetition's trajectory:
/// estimate with a +-1 posterior-sd band against the ground truth.
/// Returns `None` when no trajectory was recorded.
fn convergence_svg(record: &ResultRecord) -> Option<String> {
    let rep = record
        .repetitions
        .iter()
        .find(|r| r.error.is_none() && !r.trajectory.is_empty())?;
    let traj = &rep.trajectory;

    let (width, height, ml, mr, mt, mb) = (640.0, 400.0, 70.0, 20.0, 30.0, 50.0);
    let xs: Vec<f64> = traj.iter().map(|p| p.n as f64).collect();
    let mut lo = record.truth;
    let mut hi = record.truth;
    for p in traj {
        let sd = p.sd.unwrap_or(0.0);
        lo = lo.min(p.estimate - sd);
        hi = hi.max(p.estimate + sd);
    }
    let pad = 0.1 * (hi - lo).max(1e-12);
    let (lo, hi) = (lo - pad, hi + pad);
    let (x_min, x_max) = (xs[0], xs[xs.len() - 1].max(xs[0] + 1.0));
    let px = |n: f64| ml + (n - x_min) / (x_max - x_min) * (width - ml - mr);
    let py = |v: f64| height - mb - (v - lo) / (hi - lo) * (height - mt - mb);

    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">"
    );
    let _ = writeln!(s, "<rect width=\"{width}\" height=\"{height}\" fill=\"white\"/>");
    let title = format!(
        "{} {} {} (seed {})",
        record.experiment,
        record.family.as_deref().unwrap_or(""),
        record.method,
        rep.seed
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"18\" font-family=\"sans-serif\" font-size=\"13\">{}</text>",
        ml,
        title.trim()
    );
    // axes
    let _ = writeln!(
        s,
        "<line x1=\"{ml}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>",
        height - mb,
        width - mr,
        height - mb
    );
    let _ = writeln!(
        s,
        "<line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{:.1}\" stroke=\"black\"/>",
        height - mb
    );
    let _ = writeln!(
        s,
        "<text x=\"{:.1}\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"11\">n</text>",
        0.5 * width,
        height - 12.0
    );
    for (v, label) in [(lo + pad, fmt_axis(lo + pad)), (hi - pad, fmt_axis(hi - pad))] {
        let _ = writeln!(
            s,
            "<text x=\"4\" y=\"{:.1}\" font-family=\"sans-serif\" font-size=\"10\">{label}</text>",
            py(v) + 3.0
        );
    }
    // truth line
    let _ = writeln!(
        s,
        "<line x1=\"{ml}\" y1=\"{:.2}\" x2=\"{:.1}\" y2=\"{:.2}\" stroke=\"#2a7f2a\" stroke-dasharray=\"5,4\"/>",
        py(record.truth),
        width - mr,
        py(record.truth)
    );
    // sd whiskers
    for p in traj {
        if let Some(sd) = p.sd {
            let _ = writeln!(
                s,
                "<line x1=\"{0:.2}\" y1=\"{1:.2}\" x2=\"{0:.2}\" y2=\"{2:.2}\" stroke=\"#9ab0d4\"/>",
                px(p.n as f64),
                py(p.estimate - sd),
                py(p.estimate + sd)
            );
        }
    }
    // estimate polyline
    let pts: Vec<String> = traj
        .iter()
        .map(|p| format!("{:.2},{:.2}", px(p.n as f64), py(p.estimate)))
        .collect();
    let _ = writeln!(
        s,
        "<polyline fill=\"none\" stroke=\"#b03030\" stroke-width=\"1.5\" points=\"{}\"/>",
        pts.join(" ")
    );
    for p in traj {
        let _ = writeln!(
            s,
            "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"2.2\" fill=\"#b03030\"/>",
            px(p.n as f64),
            py(p.estimate)
        );
    }
    let _ = writeln!(s, "</svg>");
    Some(s)
}

fn fmt_axis(v: f64) -> String {
    format!("{v:.3}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{RepOutcome, TrajectoryPoint};
    use std::collections::BTreeMap;

    fn record_with_trajectory() -> ResultRecord {
        ResultRecord {
            config_hash: "abc".into(),
            experiment: "step".into(),
            family: None,
            method: "bart_int".into(),
            dimension: 1,
            n_points: 6,
            truth: 0.5,
            repetitions: vec![RepOutcome {
                seed: 3,
                estimate: Some(0.48),
                posterior_sd: Some(0.02),
                trajectory: (1..=5)
                    .map(|n| TrajectoryPoint {
                        n: n + 20,
                        estimate: 0.5 + 0.01 * n as f64,
                        sd: Some(0.03),
                    })
                    .collect(),
                move_acceptance: None,
                wall_secs: 0.0,
                error: None,
            }],
            mape: Some(0.04),
            mape_std_err: Some(0.01),
            failures: 0,
            metadata: BTreeMap::new(),
        }
    }

    #[test]
    fn csv_row_per_record_and_deterministic_bytes() {
        let dir = std::env::temp_dir().join(format!("bartint-report-{}", std::process::id()));
        let records = vec![record_with_trajectory()];
        let first = emit_report(&records, &dir).unwrap();
        let csv1 = std::fs::read(dir.join("summary.csv")).unwrap();
        let again = emit_report(&records, &dir).unwrap();
        let csv2 = std::fs::read(dir.join("summary.csv")).unwrap();
        assert_eq!(csv1, csv2);
        assert_eq!(first, again);
        let text = String::from_utf8(csv1).unwrap();
        assert_eq!(text.lines().count(), 2); // header + one row
        assert!(text.contains("bart_int"));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn svg_contains_every_trajectory_point() {
        let record = record_with_trajectory();
        let svg = convergence_svg(&record).unwrap();
        assert_eq!(svg.matches("<circle").count(), 5);
        assert!(svg.contains("stroke-dasharray")); // truth line present
    }

    #[test]
    fn records_without_trajectories_skip_plots() {
        let mut record = record_with_trajectory();
        record.repetitions[0].trajectory.clear();
        assert!(convergence_svg(&record).is_none());
    }
}
