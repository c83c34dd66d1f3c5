use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DistortionCase, DistortionKind, EvalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// The true track's best record is among the k best records.
    Segment,
    /// The true track is among the k best tracks (ranked by best record).
    Track,
}

/// Hit counts for one (case, run, granularity, k).
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub distortion: DistortionKind,
    pub parameter: Option<f64>,
    pub run: usize,
    pub seed: u64,
    pub granularity: Granularity,
    pub k: usize,
    pub queries: usize,
    pub hits: usize,
    /// Queries whose track is absent from the database (counted as misses).
    pub missing: usize,
    pub skipped_tracks: usize,
}

impl ReportRow {
    pub fn case(&self) -> DistortionCase {
        DistortionCase {
            kind: self.distortion,
            parameter: self.parameter,
        }
    }

    pub fn hit_rate(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.hits as f64 / self.queries as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftCurve {
    pub track_id: String,
    /// Start of the reference segment, seconds.
    pub start: f64,
    /// (shift in ms, similarity to the unshifted segment).
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
    pub shift_curves: Vec<ShiftCurve>,
}

impl EvalReport {
    /// Distortion cases in report order.
    pub fn cases(&self) -> Vec<DistortionCase> {
        let mut out: Vec<DistortionCase> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.case()) {
                out.push(r.case());
            }
        }
        out
    }

    /// Hit rate averaged over runs.
    pub fn mean_hit_rate(&self, case: &DistortionCase, granularity: Granularity, k: usize) -> Option<f64> {
        let rates: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.case() == *case && r.granularity == granularity && r.k == k)
            .map(ReportRow::hit_rate)
            .collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }

    pub fn k_values(&self) -> Vec<usize> {
        let mut ks: Vec<usize> = self.rows.iter().map(|r| r.k).collect();
        ks.sort_unstable();
        ks.dedup();
        ks
    }
}

#[derive(Serialize, Deserialize)]
struct CsvRecord {
    distortion: DistortionKind,
    parameter: Option<f64>,
    run: usize,
    seed: u64,
    granularity: Granularity,
    k: usize,
    queries: usize,
    hits: usize,
    hit_rate: f64,
    missing: usize,
    skipped_tracks: usize,
}

fn csv_err(e: impl std::fmt::Display) -> EvalError {
    EvalError::Report(e.to_string())
}

pub fn to_csv(report: &EvalReport) -> Result<String, EvalError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &report.rows {
        w.serialize(CsvRecord {
            distortion: r.distortion,
            parameter: r.parameter,
            run: r.run,
            seed: r.seed,
            granularity: r.granularity,
            k: r.k,
            queries: r.queries,
            hits: r.hits,
            hit_rate: r.hit_rate(),
            missing: r.missing,
            skipped_tracks: r.skipped_tracks,
        })
        .map_err(csv_err)?;
    }
    String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)
}

pub fn parse_csv(text: &str) -> Result<Vec<ReportRow>, EvalError> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize::<CsvRecord>()
        .map(|rec| {
            let r = rec.map_err(csv_err)?;
            Ok(ReportRow {
                distortion: r.distortion,
                parameter: r.parameter,
                run: r.run,
                seed: r.seed,
                granularity: r.granularity,
                k: r.k,
                queries: r.queries,
                hits: r.hits,
                missing: r.missing,
                skipped_tracks: r.skipped_tracks,
            })
        })
        .collect()
}

fn rates(report: &EvalReport, case: &DistortionCase, g: Granularity, ks: &[usize]) -> String {
    let pct = |k: usize| {
        report
            .mean_hit_rate(case, g, k)
            .map_or("-".to_string(), |r| format!("{:.1}", 100.0 * r))
    };
    match ks {
        [] => String::new(),
        [first, rest @ ..] => {
            let mut s = pct(*first);
            if !rest.is_empty() {
                let more: Vec<String> = rest.iter().map(|k| pct(*k)).collect();
                let _ = write!(s, " ({})", more.join(", "));
            }
            s
        }
    }
}

/// Human-readable table: mean top-k hit rates (%) per case, track and
/// segment granularity.
pub fn summary(report: &EvalReport) -> String {
    let ks = report.k_values();
    let header = match ks.as_slice() {
        [] => String::new(),
        [first] => format!("top-{first}"),
        [first, rest @ ..] => {
            let more: Vec<String> = rest.iter().map(|k| format!("top-{k}")).collect();
            format!("top-{first} ({})", more.join(", "))
        }
    };
    let mut out = String::new();
    let runs = report.rows.iter().map(|r| r.run).max().map_or(0, |r| r + 1);
    let first = report.rows.first();
    let _ = writeln!(
        out,
        "queries per run: {}, runs: {}, missing: {}, skipped tracks: {}",
        first.map_or(0, |r| r.queries),
        runs,
        first.map_or(0, |r| r.missing),
        first.map_or(0, |r| r.skipped_tracks)
    );
    let _ = writeln!(out, "hit rate %: {header}");
    let _ = writeln!(out, "{:<24} {:>20} {:>20}", "case", "track", "segment");
    for case in report.cases() {
        let _ = writeln!(
            out,
            "{:<24} {:>20} {:>20}",
            case.to_string(),
            rates(report, &case, Granularity::Track, &ks),
            rates(report, &case, Granularity::Segment, &ks)
        );
    }
    out
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map_or("report".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn write(path: &Path, text: &str) -> Result<(), EvalError> {
    std::fs::write(path, text).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes the CSV table to `out` and, next to it, `<stem>.summary.txt`,
/// `<stem>.stretch.csv` (mean hit rate against stretch rate, if any
/// stretch case was run) and `<stem>.shift.csv` (similarity-vs-shift
/// curves, if any). Returns the paths written.
pub fn emit_report(report: &EvalReport, out: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let mut written = vec![out.to_path_buf()];
    write(out, &to_csv(report)?)?;
    let path = sibling(out, "summary.txt");
    write(&path, &summary(report))?;
    written.push(path);

    let mut stretch: Vec<DistortionCase> = report
        .cases()
        .into_iter()
        .filter(|c| c.kind == DistortionKind::TimeStretch)
        .collect();
    if !stretch.is_empty() {
        stretch.sort_by(|a, b| a.parameter.unwrap_or(0.0).total_cmp(&b.parameter.unwrap_or(0.0)));
        let mut s = String::from("rate,granularity,k,mean_hit_rate\n");
        for c in &stretch {
            for g in [Granularity::Track, Granularity::Segment] {
                for k in report.k_values() {
                    if let Some(r) = report.mean_hit_rate(c, g, k) {
                        let g = if g == Granularity::Track { "track" } else { "segment" };
                        let _ = writeln!(s, "{},{g},{k},{r}", c.parameter.unwrap_or(1.0));
                    }
                }
            }
        }
        let path = sibling(out, "stretch.csv");
        write(&path, &s)?;
        written.push(path);
    }

    if !report.shift_curves.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["track_id", "start", "shift_ms", "similarity"]).map_err(csv_err)?;
        for c in &report.shift_curves {
            for (d, sim) in &c.points {
                w.write_record([c.track_id.clone(), c.start.to_string(), d.to_string(), sim.to_string()])
                    .map_err(csv_err)?;
            }
        }
        let text = String::from_utf8(w.into_inner().map_err(csv_err)?).map_err(csv_err)?;
        let path = sibling(out, "shift.csv");
        write(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}
