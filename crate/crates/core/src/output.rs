//! Plot-ready tables in CSV or JSON-lines.
//!
//! Floats are written with 17 significant digits so every value reads back
//! to the identical double. Files may start with a self-describing header:
//! `#` comment lines in CSV, a leading `{"meta": ...}` object in JSON-lines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ensemble::EnsembleResult;
use crate::error::{QsdError, Result};
use crate::integrator::{Observable, TrajectoryRecord};
use crate::linalg::{DensityMatrix, C64};
use crate::scenarios::PoincarePoint;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    JsonLines,
}

impl OutputFormat {
    pub fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::JsonLines => "jsonl",
        }
    }
}

impl FromStr for OutputFormat {
    type Err = QsdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json-lines" | "jsonl" => Ok(OutputFormat::JsonLines),
            other => Err(QsdError::InvalidParameter(format!(
                "unknown output format '{other}' (expected csv or json-lines)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Cell {
    Int(u64),
    Float(f64),
}

impl Cell {
    pub fn as_f64(self) -> f64 {
        match self {
            Cell::Int(v) => v as f64,
            Cell::Float(v) => v,
        }
    }

    fn render(self, json: bool) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) if v.is_finite() => format!("{v:.16e}"),
            Cell::Float(_) if json => "null".into(),
            Cell::Float(v) => v.to_string(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j].as_f64()).collect())
    }
}

/// Provenance written ahead of the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: String,
    pub seed: u64,
    pub config: serde_json::Value,
}

/// `t`, then `<name>_re`/`<name>_im` per observable, then `var_<name>` per
/// hermitian observable, then `norm_drift` and `leak`.
pub fn series_table(records: &[TrajectoryRecord], observables: &[Observable]) -> Table {
    let mut columns = vec!["t".to_string()];
    for o in observables {
        columns.push(format!("{}_re", o.name));
        columns.push(format!("{}_im", o.name));
    }
    for o in observables.iter().filter(|o| o.op.is_hermitian()) {
        columns.push(format!("var_{}", o.name));
    }
    columns.push("norm_drift".into());
    columns.push("leak".into());
    let rows = records
        .iter()
        .map(|r| {
            let mut row = Vec::with_capacity(columns.len());
            row.push(Cell::Float(r.t));
            for e in &r.expectations {
                row.push(Cell::Float(e.re));
                row.push(Cell::Float(e.im));
            }
            row.extend(r.variances.iter().map(|&v| Cell::Float(v)));
            row.push(Cell::Float(r.norm_drift));
            row.push(Cell::Float(r.top_level_leak));
            row
        })
        .collect();
    Table { columns, rows }
}

/// Record of a density matrix: tr(ρO) per observable, tr(ρO²) − tr(ρO)² per
/// hermitian observable, and the population of the top levels.
pub fn density_record(
    t: f64,
    rho: &DensityMatrix,
    observables: &[Observable],
    norm_drift: f64,
) -> Result<TrajectoryRecord> {
    let mut expectations = Vec::with_capacity(observables.len());
    let mut variances = Vec::new();
    for o in observables {
        let mean = rho.expectation(&o.op)?;
        expectations.push(mean);
        if o.op.is_hermitian() {
            let square = o.op.compose(&o.op)?;
            variances.push(rho.expectation(&square)?.re - mean.re * mean.re);
        }
    }
    Ok(TrajectoryRecord {
        t,
        expectations,
        variances,
        norm_drift,
        top_level_leak: rho.top_level_leak(),
    })
}

/// Ensemble-mean records; `norm_drift` is the worst trajectory at each time.
pub fn ensemble_records(
    result: &EnsembleResult,
    observables: &[Observable],
) -> Result<Vec<TrajectoryRecord>> {
    result
        .times
        .iter()
        .zip(&result.mean_density)
        .enumerate()
        .map(|(ti, (&t, rho))| {
            let drift = result
                .trajectories
                .iter()
                .map(|tr| tr.records[ti].norm_drift)
                .fold(0.0, f64::max);
            density_record(t, rho, observables, drift)
        })
        .collect()
}

/// Records of a master-equation solution; `norm_drift` is |tr ρ − 1|.
pub fn oracle_records(
    series: &[(f64, DensityMatrix)],
    observables: &[Observable],
) -> Result<Vec<TrajectoryRecord>> {
    series
        .iter()
        .map(|(t, rho)| density_record(*t, rho, observables, (rho.trace() - C64::from(1.0)).norm()))
        .collect()
}

pub fn poincare_table(points: &[PoincarePoint]) -> Table {
    Table {
        columns: vec!["period_index".into(), "re".into(), "im".into()],
        rows: points
            .iter()
            .map(|p| {
                vec![
                    Cell::Int(p.period_index as u64),
                    Cell::Float(p.re),
                    Cell::Float(p.im),
                ]
            })
            .collect(),
    }
}

pub fn render_table(
    table: &Table,
    format: OutputFormat,
    header: Option<&Header>,
) -> Result<String> {
    let mut out = String::new();
    match format {
        OutputFormat::Csv => {
            if let Some(h) = header {
                let config = serde_json::to_string(&h.config).map_err(config_error)?;
                writeln!(out, "# version: {}", h.version).unwrap();
                writeln!(out, "# seed: {}", h.seed).unwrap();
                writeln!(out, "# config: {config}").unwrap();
            }
            let mut writer = csv::Writer::from_writer(Vec::new());
            writer.write_record(&table.columns).map_err(csv_error)?;
            for row in &table.rows {
                writer
                    .write_record(row.iter().map(|c| c.render(false)))
                    .map_err(csv_error)?;
            }
            let bytes = writer
                .into_inner()
                .map_err(|e| csv_error(e.into_error().into()))?;
            out.push_str(&String::from_utf8(bytes).expect("csv output is utf-8"));
        }
        OutputFormat::JsonLines => {
            if let Some(h) = header {
                let meta = serde_json::json!({ "meta": h });
                writeln!(
                    out,
                    "{}",
                    serde_json::to_string(&meta).map_err(config_error)?
                )
                .unwrap();
            }
            let keys: Vec<String> = table
                .columns
                .iter()
                .map(|c| serde_json::to_string(c).map_err(config_error))
                .collect::<Result<_>>()?;
            for row in &table.rows {
                out.push('{');
                for (j, (k, cell)) in keys.iter().zip(row).enumerate() {
                    if j > 0 {
                        out.push(',');
                    }
                    write!(out, "{k}:{}", cell.render(true)).unwrap();
                }
                out.push_str("}\n");
            }
        }
    }
    Ok(out)
}

/// Writes `table` to `path`, creating parent directories as needed.
pub fn write_table(
    table: &Table,
    path: &Path,
    format: OutputFormat,
    header: Option<&Header>,
) -> Result<()> {
    let text = render_table(table, format, header)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| QsdError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| QsdError::io(path, e))
}

/// Writes trajectory records as a series table without a header.
pub fn emit_series(
    records: &[TrajectoryRecord],
    observables: &[Observable],
    path: &Path,
    format: OutputFormat,
) -> Result<()> {
    if records.is_empty() {
        return Err(QsdError::InvalidParameter("no records to write".into()));
    }
    write_table(&series_table(records, observables), path, format, None)
}

/// Parses a table produced by [`render_table`], skipping any header.
pub fn parse_table(text: &str, format: OutputFormat) -> Result<Table> {
    match format {
        OutputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .comment(Some(b'#'))
                .from_reader(text.as_bytes());
            let columns = reader
                .headers()
                .map_err(csv_error)?
                .iter()
                .map(str::to_string)
                .collect::<Vec<_>>();
            let mut rows = Vec::new();
            for record in reader.records() {
                let record = record.map_err(csv_error)?;
                rows.push(record.iter().map(parse_cell).collect::<Result<Vec<_>>>()?);
            }
            Ok(Table { columns, rows })
        }
        OutputFormat::JsonLines => {
            let mut table = Table::default();
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                let value: serde_json::Map<String, serde_json::Value> =
                    serde_json::from_str(line).map_err(config_error)?;
                if value.contains_key("meta") {
                    continue;
                }
                if table.columns.is_empty() {
                    table.columns = value.keys().cloned().collect();
                }
                let row = table
                    .columns
                    .iter()
                    .map(|k| match value.get(k) {
                        Some(serde_json::Value::Number(n)) => Ok(n
                            .as_u64()
                            .map(Cell::Int)
                            .unwrap_or_else(|| Cell::Float(n.as_f64().unwrap_or(f64::NAN)))),
                        Some(serde_json::Value::Null) => Ok(Cell::Float(f64::NAN)),
                        _ => Err(QsdError::Config(format!("row lacks numeric key '{k}'"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                table.rows.push(row);
            }
            Ok(table)
        }
    }
}

fn parse_cell(text: &str) -> Result<Cell> {
    if let Ok(v) = text.parse::<u64>() {
        return Ok(Cell::Int(v));
    }
    text.parse::<f64>()
        .map(Cell::Float)
        .map_err(|_| QsdError::Config(format!("not a number: '{text}'")))
}

fn csv_error(e: csv::Error) -> QsdError {
    QsdError::Config(format!("csv: {e}"))
}

fn config_error(e: serde_json::Error) -> QsdError {
    QsdError::Config(format!("json: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fock_annihilation, fock_number, C64};

    fn record(t: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            t,
            expectations: vec![C64::new(1.0 / 3.0, -2e-17)],
            variances: vec![std::f64::consts::PI],
            norm_drift: 1.234e-9,
            top_level_leak: 0.0,
        }
    }

    fn number_obs() -> Vec<Observable> {
        vec![Observable::new("n", fock_number(3).unwrap())]
    }

    #[test]
    fn single_record_is_two_lines() {
        let text = render_table(
            &series_table(&[record(0.1)], &number_obs()),
            OutputFormat::Csv,
            None,
        )
        .unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "t,n_re,n_im,var_n,norm_drift,leak");
    }

    #[test]
    fn non_hermitian_observables_have_no_variance_column() {
        let obs = vec![Observable::new("a", fock_annihilation(3).unwrap())];
        let rec = TrajectoryRecord {
            variances: vec![],
            ..record(0.0)
        };
        let table = series_table(&[rec], &obs);
        assert_eq!(table.columns, ["t", "a_re", "a_im", "norm_drift", "leak"]);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let records: Vec<_> = (0..5).map(|k| record(k as f64 * 0.1)).collect();
        let table = series_table(&records, &number_obs());
        let header = Header {
            version: "v0".into(),
            seed: 9,
            config: serde_json::json!({"dim": 3}),
        };
        let text = render_table(&table, OutputFormat::Csv, Some(&header)).unwrap();
        assert!(text.starts_with("# version: v0\n# seed: 9\n"));
        let back = parse_table(&text, OutputFormat::Csv).unwrap();
        assert_eq!(back.columns, table.columns);
        for (a, b) in back.rows.iter().zip(&table.rows) {
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.as_f64().to_bits(), y.as_f64().to_bits());
            }
        }
    }

    #[test]
    fn json_lines_share_keys() {
        let records: Vec<_> = (0..3).map(|k| record(k as f64)).collect();
        let table = series_table(&records, &number_obs());
        let header = Header {
            version: "v0".into(),
            seed: 1,
            config: serde_json::json!({}),
        };
        let text = render_table(&table, OutputFormat::JsonLines, Some(&header)).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        let keys = |l: &str| {
            let v: serde_json::Map<String, serde_json::Value> = serde_json::from_str(l).unwrap();
            v.keys().cloned().collect::<Vec<_>>()
        };
        assert_eq!(keys(lines[0]), ["meta"]);
        assert_eq!(keys(lines[1]), keys(lines[3]));
        let back = parse_table(&text, OutputFormat::JsonLines).unwrap();
        assert_eq!(back.rows.len(), 3);
        assert_eq!(back.column("var_n").unwrap()[2], std::f64::consts::PI);
    }

    #[test]
    fn poincare_columns() {
        let pts = [PoincarePoint {
            period_index: 21,
            re: 0.5,
            im: -0.25,
        }];
        let text = render_table(&poincare_table(&pts), OutputFormat::Csv, None).unwrap();
        assert_eq!(text.lines().next().unwrap(), "period_index,re,im");
        assert!(text.lines().nth(1).unwrap().starts_with("21,"));
    }

    #[test]
    fn write_reports_path_on_failure() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = emit_series(
            &[record(0.0)],
            &number_obs(),
            &blocker.join("out.csv"),
            OutputFormat::Csv,
        )
        .unwrap_err();
        assert_eq!(err.category(), "io");
        assert!(err.to_string().contains("file"));
        assert!(emit_series(
            &[],
            &number_obs(),
            &dir.path().join("x.csv"),
            OutputFormat::Csv
        )
        .is_err());
    }

    #[test]
    fn format_names() {
        assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
        assert_eq!(
            "json-lines".parse::<OutputFormat>().unwrap(),
            OutputFormat::JsonLines
        );
        assert!("xml".parse::<OutputFormat>().is_err());
    }
}
