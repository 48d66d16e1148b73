use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::hypotest::{ExperimentAssignment, Group};
use crate::rankcore::{GlobalRankTable, MetricRecord, UserId};

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn reader<R: Read>(input: R, has_header: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(has_header)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_reader(input)
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_error(path, line, e.to_string())
}

/// Reads `user_id,value` lines. `path` is only used in error messages.
pub fn parse_metrics<R: Read>(input: R, path: &Path, has_header: bool) -> Result<Vec<MetricRecord>> {
    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in reader(input, has_header).records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = line_of(&row);
        if row.len() != 2 {
            return Err(parse_error(path, line, format!("expected 2 fields (user_id,value), found {}", row.len())));
        }
        let id = &row[0];
        if id.is_empty() {
            return Err(parse_error(path, line, "empty user_id"));
        }
        let value: f64 = row[1]
            .parse()
            .map_err(|_| parse_error(path, line, format!("invalid metric value '{}'", &row[1])))?;
        if !value.is_finite() {
            return Err(Error::NonFiniteValue(id.to_owned()));
        }
        if !seen.insert(id.to_owned()) {
            return Err(Error::DuplicateUser(id.to_owned()));
        }
        records.push(MetricRecord::new(id, value));
    }
    if records.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    Ok(records)
}

pub fn load_metrics(path: impl AsRef<Path>, has_header: bool) -> Result<Vec<MetricRecord>> {
    let path = path.as_ref();
    parse_metrics(open(path)?, path, has_header)
}

/// Reads `experiment_id,user_id,group` lines into one assignment per
/// experiment, ordered by experiment id. Experiments with an empty group are
/// kept; check [`ExperimentAssignment::is_testable`].
pub fn parse_assignments<R: Read>(input: R, path: &Path, has_header: bool) -> Result<Vec<ExperimentAssignment>> {
    let mut experiments: BTreeMap<String, ExperimentAssignment> = BTreeMap::new();
    for row in reader(input, has_header).records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = line_of(&row);
        if row.len() != 3 {
            return Err(parse_error(
                path,
                line,
                format!("expected 3 fields (experiment_id,user_id,group), found {}", row.len()),
            ));
        }
        let (exp, user) = (&row[0], &row[1]);
        if exp.is_empty() || user.is_empty() {
            return Err(parse_error(path, line, "empty experiment_id or user_id"));
        }
        let group: Group = row[2].parse().map_err(|e: Error| parse_error(path, line, e.to_string()))?;
        experiments
            .entry(exp.to_owned())
            .or_insert_with(|| ExperimentAssignment::new(exp))
            .assign(user, group)
            .map_err(|e| parse_error(path, line, e.to_string()))?;
    }
    Ok(experiments.into_values().collect())
}

pub fn load_assignments(path: impl AsRef<Path>, has_header: bool) -> Result<Vec<ExperimentAssignment>> {
    let path = path.as_ref();
    parse_assignments(open(path)?, path, has_header)
}

/// Writes `#population_size=N tiebreak_seed=S` followed by `user_id,rank` rows
/// in the table's record order.
pub fn export_ranks<W: Write>(table: &GlobalRankTable, out: W) -> Result<()> {
    let mut out = std::io::BufWriter::new(out);
    let wrap = |e| Error::io("<rank export>", e);
    writeln!(
        out,
        "#population_size={} tiebreak_seed={}",
        table.population_size(),
        table.tiebreak_seed()
    )
    .map_err(wrap)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut out);
    for (id, rank) in table.iter() {
        w.write_record([id.as_str(), &rank.to_string()])?;
    }
    w.flush().map_err(wrap)?;
    drop(w);
    out.flush().map_err(wrap)
}

pub fn import_ranks(path: impl AsRef<Path>) -> Result<GlobalRankTable> {
    let path = path.as_ref();
    let mut buf = BufReader::new(open(path)?);
    let mut first = String::new();
    buf.read_line(&mut first).map_err(|e| Error::io(path, e))?;
    let meta = first
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| parse_error(path, 1, "missing '#population_size=N tiebreak_seed=S' header"))?;
    let mut size = None;
    let mut seed = None;
    for field in meta.split_whitespace() {
        match field.split_once('=') {
            Some(("population_size", v)) => size = v.parse::<usize>().ok(),
            Some(("tiebreak_seed", v)) => seed = v.parse::<u64>().ok(),
            _ => {}
        }
    }
    let (size, seed) = size
        .zip(seed)
        .ok_or_else(|| parse_error(path, 1, "malformed rank table header"))?;

    let mut ids = Vec::with_capacity(size);
    let mut ranks = Vec::with_capacity(size);
    for row in reader(buf, false).records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        // The header line was consumed before the csv reader started.
        let line = line_of(&row) + 1;
        if row.len() != 2 {
            return Err(parse_error(path, line, "expected 2 fields (user_id,rank)"));
        }
        let rank: u64 = row[1]
            .parse()
            .map_err(|_| parse_error(path, line, format!("invalid rank '{}'", &row[1])))?;
        ids.push(UserId::from(&row[0]));
        ranks.push(rank);
    }
    if ids.len() != size {
        return Err(parse_error(
            path,
            1,
            format!("header declares {size} rows but file holds {}", ids.len()),
        ));
    }
    GlobalRankTable::from_parts(ids, ranks, seed)
}
