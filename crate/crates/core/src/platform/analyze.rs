//! Rank once, test many: one global ranking feeds every experiment.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::io::{load_assignments, load_metrics};
use crate::error::{Error, Result};
use crate::hypotest::{
    global_rank_sum_test, rank_sum_test, t_test, validate_alphas, AlphaDecision, ExperimentAssignment, Group, Method,
    TestResult,
};
use crate::rankcore::{compute_global_ranks, densify, GlobalRankTable, MetricRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Table,
    Delimited,
    Structured,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(OutputFormat::Table),
            "delimited" | "csv" => Ok(OutputFormat::Delimited),
            "structured" | "json" => Ok(OutputFormat::Structured),
            other => Err(Error::InvalidConfig(format!("unknown output format '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnalysisRequest {
    pub metrics_path: PathBuf,
    pub assignments_path: PathBuf,
    pub has_header: bool,
    pub tiebreak_seed: u64,
    pub alphas: Vec<f64>,
    pub methods: Vec<Method>,
    /// `None` writes to stdout.
    pub output_path: Option<PathBuf>,
    pub output_format: OutputFormat,
}

/// One (experiment, method) result, or the reason it could not be computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment_id: String,
    pub method: Method,
    pub n_t: usize,
    pub n_c: usize,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub decisions: Vec<AlphaDecision>,
    pub error: Option<String>,
}

/// Pipeline instrumentation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhaseLog {
    /// Population sorts performed.
    pub global_sorts: usize,
    pub ranking_seconds: f64,
    pub evaluation_seconds: f64,
    pub experiments: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub alphas: Vec<f64>,
    pub rows: Vec<ReportRow>,
    #[serde(skip)]
    pub phases: PhaseLog,
}

fn canonical_methods(methods: &[Method]) -> Result<Vec<Method>> {
    let picked: Vec<Method> = Method::ALL.into_iter().filter(|m| methods.contains(m)).collect();
    if picked.is_empty() {
        return Err(Error::InvalidConfig("at least one method is required".into()));
    }
    Ok(picked)
}

/// Rounds to 6 significant digits.
fn sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().unwrap_or(x)
}

fn error_row(exp: &ExperimentAssignment, method: Method, message: String) -> ReportRow {
    ReportRow {
        experiment_id: exp.experiment_id.clone(),
        method,
        n_t: exp.n_treatment(),
        n_c: exp.n_control(),
        statistic: None,
        p_value: None,
        decisions: Vec::new(),
        error: Some(message),
    }
}

fn result_row(exp: &ExperimentAssignment, method: Method, result: Result<TestResult>) -> ReportRow {
    match result {
        Ok(r) => ReportRow {
            experiment_id: exp.experiment_id.clone(),
            method,
            n_t: r.n_treatment,
            n_c: r.n_control,
            statistic: Some(sig6(r.statistic)),
            p_value: Some(sig6(r.p_value)),
            decisions: r.decisions,
            error: None,
        },
        Err(e) => error_row(exp, method, e.to_string()),
    }
}

fn evaluate(
    exp: &ExperimentAssignment,
    methods: &[Method],
    alphas: &[f64],
    records: &[MetricRecord],
    index: &HashMap<&str, usize>,
    table: Option<&GlobalRankTable>,
) -> Vec<ReportRow> {
    let fail_all = |msg: String| methods.iter().map(|&m| error_row(exp, m, msg.clone())).collect();
    if !exp.is_testable() {
        let empty = if exp.n_treatment() == 0 { "treatment" } else { "control" };
        return fail_all(format!("untestable: empty {empty} group"));
    }
    let mut treatment = Vec::with_capacity(exp.n_treatment());
    let mut control = Vec::with_capacity(exp.n_control());
    for (user, &group) in &exp.groups {
        let Some(&pos) = index.get(user.as_str()) else {
            return fail_all(Error::UnknownUser(user.to_string()).to_string());
        };
        match group {
            Group::Treatment => treatment.push(pos),
            Group::Control => control.push(pos),
        }
    }

    let global = |positions: &[usize], t: &GlobalRankTable| positions.iter().map(|&p| t.rank_at(p)).collect::<Vec<u64>>();
    methods
        .iter()
        .map(|&method| {
            let result = match method {
                Method::TTest => {
                    let tv: Vec<f64> = treatment.iter().map(|&p| records[p].value).collect();
                    let cv: Vec<f64> = control.iter().map(|&p| records[p].value).collect();
                    t_test(&tv, &cv, alphas)
                }
                Method::RankSum => {
                    let table = table.expect("ranking precedes rank methods");
                    // Local ranks filtered from the global order; no re-sort of values.
                    let mut all = global(&treatment, table);
                    all.extend(global(&control, table));
                    let local = densify(&all);
                    let (t, c) = local.split_at(treatment.len());
                    rank_sum_test(t, c, alphas)
                }
                Method::GlobalRankSum => {
                    let table = table.expect("ranking precedes rank methods");
                    global_rank_sum_test(&global(&treatment, table), &global(&control, table), alphas)
                }
            };
            result_row(exp, method, result)
        })
        .collect()
}

/// Runs the pipeline on in-memory inputs.
///
/// The population is ranked at most once, and only if a rank method is
/// requested. Experiments are evaluated independently; a failure becomes an
/// error row for that experiment. Rows are ordered by experiment id, then by
/// method.
pub fn run_analysis(
    records: &[MetricRecord],
    experiments: &[ExperimentAssignment],
    tiebreak_seed: u64,
    alphas: &[f64],
    methods: &[Method],
) -> Result<AnalysisReport> {
    validate_alphas(alphas)?;
    if alphas.is_empty() {
        return Err(Error::InvalidConfig("at least one alpha is required".into()));
    }
    let methods = canonical_methods(methods)?;
    let mut phases = PhaseLog {
        experiments: experiments.len(),
        ..Default::default()
    };

    let table = if methods.iter().any(|m| m.uses_ranks()) {
        let start = Instant::now();
        let table = compute_global_ranks(records, tiebreak_seed)?;
        phases.global_sorts += 1;
        phases.ranking_seconds = start.elapsed().as_secs_f64();
        Some(table)
    } else {
        None
    };

    let index: HashMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.user_id.as_str(), i))
        .collect();
    let mut ordered: Vec<&ExperimentAssignment> = experiments.iter().collect();
    ordered.sort_by(|a, b| a.experiment_id.cmp(&b.experiment_id));

    let start = Instant::now();
    let rows: Vec<ReportRow> = ordered
        .par_iter()
        .map(|exp| evaluate(exp, &methods, alphas, records, &index, table.as_ref()))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect();
    phases.evaluation_seconds = start.elapsed().as_secs_f64();
    log::info!(
        "ranking: {} sort(s) in {:.3}s; evaluated {} experiment(s) in {:.3}s",
        phases.global_sorts,
        phases.ranking_seconds,
        phases.experiments,
        phases.evaluation_seconds
    );

    Ok(AnalysisReport {
        alphas: alphas.to_vec(),
        rows,
        phases,
    })
}

/// Loads the request's files, runs the pipeline and writes the report.
pub fn analyze(request: &AnalysisRequest) -> Result<AnalysisReport> {
    let records = load_metrics(&request.metrics_path, request.has_header)?;
    let experiments = load_assignments(&request.assignments_path, request.has_header)?;
    let report = run_analysis(
        &records,
        &experiments,
        request.tiebreak_seed,
        &request.alphas,
        &request.methods,
    )?;
    let text = report.render(request.output_format)?;
    match &request.output_path {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::io(path, e))?,
        None => print!("{text}"),
    }
    Ok(report)
}

fn fmt_num(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl AnalysisReport {
    pub fn render(&self, format: OutputFormat) -> Result<String> {
        match format {
            OutputFormat::Structured => Ok(serde_json::to_string_pretty(self)? + "\n"),
            OutputFormat::Delimited => self.render_csv(),
            OutputFormat::Table => Ok(self.render_table()),
        }
    }

    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["experiment_id", "method", "n_t", "n_c", "statistic", "p_value"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        h.extend(self.alphas.iter().map(|a| format!("decision@{a}")));
        h.push("error".into());
        h
    }

    fn cells(&self, row: &ReportRow) -> Vec<String> {
        let mut cells = vec![
            row.experiment_id.clone(),
            row.method.to_string(),
            row.n_t.to_string(),
            row.n_c.to_string(),
            fmt_num(row.statistic),
            fmt_num(row.p_value),
        ];
        for &a in &self.alphas {
            cells.push(
                row.decisions
                    .iter()
                    .find(|d| d.alpha == a)
                    .map(|d| d.decision.as_str().to_string())
                    .unwrap_or_default(),
            );
        }
        cells.push(row.error.clone().unwrap_or_default());
        cells
    }

    fn render_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(self.header())?;
        for row in &self.rows {
            w.write_record(self.cells(row))?;
        }
        crate::error::csv_into_string(w)
    }

    fn render_table(&self) -> String {
        let header = self.header();
        let body: Vec<Vec<String>> = self.rows.iter().map(|r| self.cells(r)).collect();
        let widths: Vec<usize> = (0..header.len())
            .map(|i| body.iter().map(|r| r[i].len()).chain([header[i].len()]).max().unwrap_or(0))
            .collect();
        let mut out = String::new();
        for line in std::iter::once(&header).chain(&body) {
            let cells: Vec<String> = line.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", cells.join("  ").trim_end());
        }
        out
    }
}
