use std::fmt::Write as _;

use super::study::{StudyKind, StudyReport};
use super::timing::TimingRow;
use crate::error::Result;
use crate::hypotest::Method;

fn method_title(m: Method) -> &'static str {
    match m {
        Method::TTest => "t-test",
        Method::RankSum => "rank-sum test",
        Method::GlobalRankSum => "global-rank-sum test",
    }
}

fn row_label(r: &StudyReport) -> String {
    match r.kind {
        StudyKind::Calibration => format!("({},{})", r.config.mu, r.config.sigma),
        StudyKind::Power => format!("{}%", r.config.lift_ratio * 100.0),
    }
}

/// Aligned text table: one row per report, one column per method × α.
pub fn render_study_table(reports: &[StudyReport]) -> String {
    let Some(first) = reports.first() else {
        return String::new();
    };
    let alphas = &first.config.alphas;
    let label = match first.kind {
        StudyKind::Calibration => "(mu,sigma)",
        StudyKind::Power => "lift ratio",
    };
    let cell_w = 9;
    let group_w = alphas.len() * (cell_w + 1) - 1;
    let label_w = reports.iter().map(|r| row_label(r).len()).chain([label.len()]).max().unwrap_or(0);

    let mut out = String::new();
    let _ = write!(out, "{:<label_w$}", "");
    for m in Method::ALL {
        let _ = write!(out, " | {:^group_w$}", method_title(m));
    }
    out.push('\n');
    let _ = write!(out, "{label:<label_w$}");
    for _ in Method::ALL {
        out.push_str(" |");
        for a in alphas {
            let _ = write!(out, " {:>cell_w$}", format!("a={a:.2}"));
        }
    }
    out.push('\n');
    out.push_str(&"-".repeat(label_w + 3 * (group_w + 3)));
    out.push('\n');
    for r in reports {
        let _ = write!(out, "{:<label_w$}", row_label(r));
        for m in Method::ALL {
            out.push_str(" |");
            for &a in alphas {
                let cell = r.rate(m, a).map(|x| format!("{:.2}%", x * 100.0)).unwrap_or_else(|| "-".into());
                let _ = write!(out, " {cell:>cell_w$}");
            }
        }
        out.push('\n');
    }
    for r in reports {
        let t = &r.timings;
        let _ = writeln!(
            out,
            "# {} {}: {} replications; population {:.3}s, ranking {:.3}s, replications {:.3}s",
            match r.kind {
                StudyKind::Calibration => "calibration",
                StudyKind::Power => "power",
            },
            row_label(r),
            r.replications,
            t.population_seconds,
            t.ranking_seconds,
            t.replication_seconds
        );
    }
    out
}

pub fn render_study_csv(reports: &[StudyReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "kind",
        "mu",
        "sigma",
        "lift_ratio",
        "population_size",
        "n_treatment",
        "n_control",
        "replications",
        "method",
        "alpha",
        "rejections",
        "failures",
        "rejection_rate",
    ])?;
    for r in reports {
        let kind = match r.kind {
            StudyKind::Calibration => "calibration",
            StudyKind::Power => "power",
        };
        let c = &r.config;
        for cell in &r.cells {
            w.write_record([
                kind.to_string(),
                c.mu.to_string(),
                c.sigma.to_string(),
                c.lift_ratio.to_string(),
                c.population_size.to_string(),
                c.n_treatment.to_string(),
                c.n_control.to_string(),
                r.replications.to_string(),
                cell.method.to_string(),
                cell.alpha.to_string(),
                cell.rejections.to_string(),
                cell.failures.to_string(),
                cell.rejection_rate.to_string(),
            ])?;
        }
    }
    crate::error::csv_into_string(w)
}

pub fn render_study_json(reports: &[StudyReport]) -> Result<String> {
    Ok(serde_json::to_string_pretty(reports)? + "\n")
}

pub fn render_timing_table(rows: &[TimingRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:>11} | {:>22} | {:>29} | {:>20}",
        "experiments", "seconds of rank-sum", "seconds of global-rank-sum", "time cost diff ratio"
    );
    let _ = writeln!(out, "{}", "-".repeat(11 + 22 + 29 + 20 + 9));
    for r in rows {
        let _ = writeln!(
            out,
            "{:>11} | {:>22.3} | {:>29.3} | {:>20}",
            r.n_experiments,
            r.traditional_seconds,
            r.global_seconds,
            format!("{:.1}%", r.diff_ratio * 100.0)
        );
    }
    out
}

pub fn render_timing_csv(rows: &[TimingRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    crate::error::csv_into_string(w)
}

pub fn render_timing_json(rows: &[TimingRow]) -> Result<String> {
    Ok(serde_json::to_string_pretty(rows)? + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simlab::{PhaseTimings, RateCell, SimulationConfig};

    fn report() -> StudyReport {
        let config = SimulationConfig::default();
        let cells = Method::ALL
            .into_iter()
            .flat_map(|m| {
                config.alphas.clone().into_iter().map(move |a| RateCell {
                    method: m,
                    alpha: a,
                    rejections: 271,
                    failures: 0,
                    rejection_rate: 271.0 / 5000.0,
                })
            })
            .collect();
        StudyReport {
            kind: StudyKind::Calibration,
            replications: 5000,
            config,
            cells,
            timings: PhaseTimings::default(),
        }
    }

    #[test]
    fn table_mirrors_layout() {
        let t = render_study_table(&[report()]);
        assert!(t.contains("global-rank-sum test"));
        assert!(t.contains("(-3,3)"));
        assert!(t.contains("5.42%"));
        assert!(t.contains("a=0.05"));
    }

    #[test]
    fn csv_has_one_row_per_cell() {
        let s = render_study_csv(&[report()]).unwrap();
        assert_eq!(s.lines().count(), 1 + 9);
        assert!(s.lines().nth(1).unwrap().starts_with("calibration,-3,3,0,1000000"));
    }

    #[test]
    fn json_skips_timings() {
        let s = render_study_json(&[report()]).unwrap();
        assert!(!s.contains("timings"));
        let back: Vec<StudyReport> = serde_json::from_str(&s).unwrap();
        assert_eq!(back[0].cells, report().cells);
    }

    #[test]
    fn timing_table_ratio_formatting() {
        let row = TimingRow {
            n_experiments: 1,
            population_size: 10,
            experiment_size: 2,
            traditional_seconds: 0.092,
            global_seconds: 0.386,
            diff_ratio: 0.386 / 0.092 - 1.0,
        };
        let t = render_timing_table(std::slice::from_ref(&row));
        assert!(t.contains("319.6%"), "{t}");
        assert!(render_timing_csv(&[row]).unwrap().starts_with("n_experiments,"));
    }
}
