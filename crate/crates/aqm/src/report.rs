//! Result export: a CSV of accuracy curves, a JSON sidecar with the full
//! tables, and optional per-curve series files for plotting.

use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::formats::{save, FormatError};
use crate::harness::ResultTable;

pub const CSV_HEADER: &str = "turn,accuracy,ci95,entropy_mean,strategy,lambda,regime,seed";

/// One CSV line: a turn of one curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub turn: usize,
    pub accuracy: f64,
    pub ci95: f64,
    pub entropy_mean: f64,
    pub strategy: String,
    pub lambda: f64,
    pub regime: String,
    pub seed: u64,
}

pub fn curve_rows(table: &ResultTable) -> impl Iterator<Item = CurveRow> + '_ {
    table.rows.iter().map(|r| CurveRow {
        turn: r.turn,
        accuracy: r.accuracy,
        ci95: r.ci95,
        entropy_mean: r.entropy_mean,
        strategy: table.strategy.to_string(),
        lambda: table.config.lambda,
        regime: table.config.regime().name().to_string(),
        seed: table.config.game_seed,
    })
}

/// Wall-clock time is left out so that reruns give identical bytes.
pub fn write_csv<W: Write>(tables: &[ResultTable], out: W) -> io::Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for row in tables.iter().flat_map(curve_rows) {
        w.serialize(row)?;
    }
    w.flush()
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<CurveRow>, FormatError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(|e| FormatError::parse(1, e.to_string()))?;
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(FormatError::parse(1, format!("expected header `{CSV_HEADER}`")));
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| FormatError::parse(i + 2, e.to_string())))
        .collect()
}

pub fn write_json<W: Write>(tables: &[ResultTable], mut out: W) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut out, tables)?;
    writeln!(out)
}

pub fn read_json<R: Read>(input: R) -> Result<Vec<ResultTable>, FormatError> {
    serde_json::from_reader(input).map_err(|e| FormatError::parse(e.line(), e.to_string()))
}

pub fn curve_name(table: &ResultTable) -> String {
    format!("{}-lambda{}-{}", table.strategy, table.config.lambda, table.config.regime().name())
}

/// Whitespace-separated series, turn 0 being the prior.
pub fn write_series<W: Write>(table: &ResultTable, mut out: W) -> io::Result<()> {
    writeln!(out, "# {}", curve_name(table))?;
    writeln!(out, "# turn accuracy ci95 entropy_mean")?;
    let n = table.games.max(1) as f64;
    let p0 = table.prior_accuracy;
    writeln!(out, "0 {} {} {}", p0, 1.96 * (p0 * (1.0 - p0) / n).sqrt(), table.prior_entropy)?;
    for r in &table.rows {
        writeln!(out, "{} {} {} {}", r.turn, r.accuracy, r.ci95, r.entropy_mean)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExportPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub series: Vec<PathBuf>,
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Writes `<stem>.csv`, `<stem>.json` and, with `series`, one
/// `<stem>.<curve>.dat` per table. Existing files are replaced.
pub fn export_results(tables: &[ResultTable], stem: &Path, series: bool) -> Result<ExportPaths, FormatError> {
    let csv = with_suffix(stem, ".csv");
    let json = with_suffix(stem, ".json");
    save(&csv, true, |w| write_csv(tables, w))?;
    save(&json, true, |w| write_json(tables, w))?;
    let mut paths = ExportPaths { csv, json, series: Vec::new() };
    if series {
        for t in tables {
            let p = with_suffix(stem, &format!(".{}.dat", curve_name(t)));
            save(&p, true, |w| write_series(t, w))?;
            paths.series.push(p);
        }
    }
    Ok(paths)
}

/// Human-readable per-turn table.
pub fn render_table(table: &ResultTable) -> String {
    let mut s = format!(
        "{} | lambda {} | {} | {} games ({} failed) | pool {}\n",
        table.strategy,
        table.config.lambda,
        table.config.regime().name(),
        table.games,
        table.failed_games,
        table.pool_size
    );
    s.push_str("turn  accuracy  +/-ci95  entropy\n");
    s.push_str(&format!("{:>4}  {:>8.4}  {:>7}  {:>7.3}\n", 0, table.prior_accuracy, "", table.prior_entropy));
    for r in &table.rows {
        s.push_str(&format!("{:>4}  {:>8.4}  {:>7.4}  {:>7.3}\n", r.turn, r.accuracy, r.ci95, r.entropy_mean));
    }
    s
}

/// Side-by-side accuracy of several curves read back from CSV.
pub fn render_rows(rows: &[CurveRow]) -> String {
    let mut curves: Vec<(String, Vec<&CurveRow>)> = Vec::new();
    for r in rows {
        let key = format!("{}-lambda{}-{}-seed{}", r.strategy, r.lambda, r.regime, r.seed);
        match curves.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => curves.push((key, vec![r])),
        }
    }
    let mut s = String::new();
    for (key, rows) in curves {
        s.push_str(&key);
        s.push('\n');
        for r in rows {
            s.push_str(&format!("  t={:<3} acc {:.4} +/- {:.4}  H {:.3}\n", r.turn, r.accuracy, r.ci95, r.entropy_mean));
        }
    }
    s
}
