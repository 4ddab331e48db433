//! CSV import/export and the JSON model document.
//!
//! Numbers are written with 17 significant digits (C's `%.17g`), so every
//! exported value parses back to the same double. Missing values are `NA`.

use serde::{Deserialize, Serialize};

use crate::analysis::{ChartTable, ModelComparison, OutlierFlags, ReverseResult};
use crate::bccg::{self, TailMode};
use crate::error::{Error, Result};
use crate::fitting::{percentile_curves, Dataset, FittedModel, Row};
use crate::selection::SelectionResult;

pub const FORMAT_VERSION: &str = "1";
pub const NA: &str = "NA";

/// `%.17g`: 17 significant digits, trailing zeros removed.
pub fn format_g17(v: f64) -> String {
    if v.is_nan() {
        return NA.to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..17).contains(&exp) {
        let m = strip_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        strip_zeros(&format!("{v:.decimals$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn format_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), format_g17)
}

/// Column label for a percentile level: `P3`, `P2.5`, …
pub fn percentile_label(level: f64) -> String {
    format!("P{level}")
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    let bytes = w.into_inner().expect("writing to memory cannot fail");
    String::from_utf8(bytes).expect("csv output is UTF-8")
}

fn write_row<I, S>(w: &mut csv::Writer<Vec<u8>>, fields: I)
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).expect("writing to memory cannot fail");
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportWarning {
    /// 1-based line in the source file.
    pub line: u64,
    pub row_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportReport {
    pub dataset: Dataset,
    pub warnings: Vec<ImportWarning>,
}

fn parse_flag(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

fn csv_error(e: csv::Error) -> Error {
    let offset = e.position().map_or(0, |p| p.byte() as usize);
    Error::Parse { offset, message: e.to_string() }
}

/// Reads a header-first, comma-separated table. Rows whose selected cells are
/// not usable (non-numeric, or a response ≤ 0) are kept but excluded.
pub fn import_csv(bytes: &[u8], x_column: &str, y_column: &str) -> Result<ImportReport> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::Import("file is empty".into()));
    }
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(bytes);
    let headers = reader.headers().map_err(csv_error)?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let xi = find(x_column).ok_or_else(|| Error::Import(format!("no column named {x_column:?}")))?;
    let yi = find(y_column).ok_or_else(|| Error::Import(format!("no column named {y_column:?}")))?;
    let id_col = find("id");
    let inc_col = find("included");

    let mut data = Dataset::new(x_column, y_column);
    let mut warnings = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(csv_error)?;
        let line = record.position().map_or(k as u64 + 2, |p| p.line());
        let id = match id_col.and_then(|c| record.get(c)) {
            Some(s) if !s.trim().is_empty() => s.trim().to_string(),
            _ => (k + 1).to_string(),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::Import(format!("duplicate row id {id:?} on line {line}")));
        }
        let mut warn = |message: String| warnings.push(ImportWarning { line, row_id: id.clone(), message });
        let mut included = match inc_col.and_then(|c| record.get(c)) {
            None => true,
            Some(s) => parse_flag(s).unwrap_or_else(|| {
                warn(format!("unrecognized included value {s:?}; row kept as included"));
                true
            }),
        };
        let mut cell = |col: usize, name: &str| -> f64 {
            let raw = record.get(col).unwrap_or("").trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                _ => {
                    warn(format!("{name} value {raw:?} is not a number; row excluded"));
                    f64::NAN
                }
            }
        };
        let x = cell(xi, x_column);
        let y = cell(yi, y_column);
        if x.is_nan() || y.is_nan() {
            included = false;
        } else if y <= 0.0 {
            warnings.push(ImportWarning {
                line,
                row_id: id.clone(),
                message: format!("{y_column} value {y} is not positive; row excluded"),
            });
            included = false;
        }
        data.push(Row { id, x, y, included });
    }
    if data.is_empty() {
        return Err(Error::Import("file has a header but no data rows".into()));
    }
    Ok(ImportReport { dataset: data, warnings })
}

/// `id,<x>,<y>,included`, readable by [`import_csv`].
pub fn export_dataset_csv(data: &Dataset) -> String {
    let mut w = csv_writer();
    write_row(&mut w, ["id", data.x_label.as_str(), data.y_label.as_str(), "included"]);
    for r in &data.rows {
        write_row(&mut w, [r.id.clone(), format_g17(r.x), format_g17(r.y), u8::from(r.included).to_string()]);
    }
    finish(w)
}

/// `x,L,M,S,P…` on the grid; a trailing `extrapolated` column appears only
/// when some grid point lies outside the training range.
pub fn export_curves(model: &FittedModel, x_grid: &[f64], percentiles: &[f64]) -> Result<String> {
    let curves = percentile_curves(model, x_grid, percentiles)?;
    let any_extrapolated = curves.lms.iter().any(|p| p.extrapolated);
    let mut w = csv_writer();
    let mut header: Vec<String> = ["x", "L", "M", "S"].iter().map(|s| s.to_string()).collect();
    header.extend(percentiles.iter().map(|&p| percentile_label(p)));
    if any_extrapolated {
        header.push("extrapolated".into());
    }
    write_row(&mut w, &header);
    for (j, p) in curves.lms.iter().enumerate() {
        let mut row = vec![format_g17(p.x), format_g17(p.l), format_g17(p.m), format_g17(p.s)];
        row.extend(curves.values.iter().map(|c| format_opt(c[j])));
        if any_extrapolated {
            row.push(u8::from(p.extrapolated).to_string());
        }
        write_row(&mut w, &row);
    }
    Ok(finish(w))
}

/// Long-format table `series,x,y,extrapolated` for plotting: one row per
/// curve point, then the observations as series `data` / `excluded`.
pub fn export_plot_data(
    model: &FittedModel,
    data: Option<&Dataset>,
    x_grid: &[f64],
    percentiles: &[f64],
) -> Result<String> {
    let curves = percentile_curves(model, x_grid, percentiles)?;
    let mut w = csv_writer();
    write_row(&mut w, ["series", "x", "y", "extrapolated"]);
    for (i, &level) in percentiles.iter().enumerate() {
        let label = percentile_label(level);
        for (j, p) in curves.lms.iter().enumerate() {
            write_row(
                &mut w,
                [label.clone(), format_g17(p.x), format_opt(curves.values[i][j]), u8::from(p.extrapolated).to_string()],
            );
        }
    }
    if let Some(data) = data {
        for r in &data.rows {
            let series = if r.included { "data" } else { "excluded" };
            let ext = u8::from(model.is_extrapolated(r.x)).to_string();
            write_row(&mut w, [series.to_string(), format_g17(r.x), format_g17(r.y), ext]);
        }
    }
    Ok(finish(w))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// RFC 3339 timestamp supplied by the caller.
    pub created_at: Option<String>,
    pub dataset_label: Option<String>,
    pub x_label: String,
    pub y_label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: String,
    pub provenance: Provenance,
    pub model: FittedModel,
}

impl ModelDocument {
    pub fn new(model: FittedModel, created_at: Option<String>, dataset_label: Option<String>) -> Self {
        let provenance = Provenance {
            created_at,
            dataset_label,
            x_label: model.x_label.clone(),
            y_label: model.y_label.clone(),
        };
        ModelDocument { format_version: FORMAT_VERSION.to_string(), provenance, model }
    }
}

pub fn save_model(doc: &ModelDocument) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("model documents contain only finite numbers");
    s.push('\n');
    s
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in bytes.split(|&b| b == b'\n').enumerate() {
        if i + 1 == line {
            return (offset + column.saturating_sub(1)).min(bytes.len());
        }
        offset += l.len() + 1;
    }
    bytes.len()
}

fn json_error(bytes: &[u8], e: serde_json::Error) -> Error {
    Error::Parse { offset: byte_offset(bytes, e.line(), e.column()), message: e.to_string() }
}

pub fn load_model(bytes: &[u8]) -> Result<ModelDocument> {
    let value: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| json_error(bytes, e))?;
    let found = value.get("format_version").and_then(|v| v.as_str());
    if found != Some(FORMAT_VERSION) {
        return Err(Error::UnsupportedVersion {
            found: found.map_or_else(|| "<missing>".to_string(), str::to_string),
            expected: FORMAT_VERSION.to_string(),
        });
    }
    let doc: ModelDocument = serde_json::from_slice(bytes).map_err(|e| json_error(bytes, e))?;
    for p in crate::fitting::Parameter::ALL {
        let pred = doc.model.predictor(p);
        if pred.coefficients.len() != pred.basis.n_basis() {
            return Err(Error::Parse {
                offset: 0,
                message: format!(
                    "{} predictor has {} coefficients for {} basis functions",
                    p.name(),
                    pred.coefficients.len(),
                    pred.basis.n_basis()
                ),
            });
        }
    }
    Ok(doc)
}

/// Chart table with header `x,P<l1>,P<l2>,…`.
pub fn parse_chart_csv(bytes: &[u8]) -> Result<ChartTable> {
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Err(Error::Import("chart file is empty".into()));
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(bytes);
    let headers = reader.headers().map_err(csv_error)?.clone();
    if headers.get(0).map(str::trim) != Some("x") {
        return Err(Error::Parse { offset: 0, message: "first chart column must be x".into() });
    }
    let levels = headers
        .iter()
        .skip(1)
        .map(|h| {
            h.trim()
                .strip_prefix('P')
                .and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| Error::Parse { offset: 0, message: format!("bad percentile column {h:?}") })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut x_values = Vec::new();
    let mut values = Vec::new();
    for record in reader.records() {
        let record = record.map_err(csv_error)?;
        let offset = record.position().map_or(0, |p| p.byte() as usize);
        let nums = record
            .iter()
            .map(|c| {
                c.trim().parse::<f64>().map_err(|_| Error::Parse {
                    offset,
                    message: format!("chart cell {c:?} is not a number"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        x_values.push(nums[0]);
        values.push(nums[1..].to_vec());
    }
    let chart = ChartTable { x_values, percentile_levels: levels, values };
    chart.validate()?;
    Ok(chart)
}

pub fn export_chart_csv(chart: &ChartTable) -> String {
    let mut w = csv_writer();
    let mut header = vec!["x".to_string()];
    header.extend(chart.percentile_levels.iter().map(|&l| percentile_label(l)));
    write_row(&mut w, &header);
    for (x, row) in chart.x_values.iter().zip(&chart.values) {
        let mut out = vec![format_g17(*x)];
        out.extend(row.iter().map(|&v| format_g17(v)));
        write_row(&mut w, &out);
    }
    finish(w)
}

/// `rank,m_df,s_df,l_df,k_edf,global_deviance,bic,converged`, then failed cells.
pub fn export_selection_csv(result: &SelectionResult) -> String {
    let mut w = csv_writer();
    write_row(&mut w, ["rank", "m_df", "s_df", "l_df", "k_edf", "global_deviance", "bic", "converged"]);
    for (i, r) in result.records.iter().enumerate() {
        let (m, s, l) = r.hp.dfs();
        write_row(
            &mut w,
            [
                (i + 1).to_string(),
                format_g17(m),
                format_g17(s),
                format_g17(l),
                format_g17(r.k_edf),
                format_g17(r.global_deviance),
                format_g17(r.bic),
                u8::from(r.converged).to_string(),
            ],
        );
    }
    for f in &result.failed {
        let (m, s, l) = f.hp.dfs();
        write_row(
            &mut w,
            [NA.to_string(), format_g17(m), format_g17(s), format_g17(l), NA.into(), NA.into(), NA.into(), "0".into()],
        );
    }
    finish(w)
}

/// `id,x,y,included,residual_z,percentile,flagged`.
pub fn export_outliers_csv(flags: &OutlierFlags) -> String {
    let mut w = csv_writer();
    write_row(&mut w, ["id", "x", "y", "included", "residual_z", "percentile", "flagged"]);
    for r in &flags.rows {
        write_row(
            &mut w,
            [
                r.id.clone(),
                format_g17(r.x),
                format_g17(r.y),
                u8::from(r.included).to_string(),
                format_opt(r.residual_z),
                format_opt(r.percentile),
                u8::from(r.flagged).to_string(),
            ],
        );
    }
    finish(w)
}

/// `x,a,b,delta,extrapolated`.
pub fn export_comparison_csv(cmp: &ModelComparison) -> String {
    let mut w = csv_writer();
    write_row(&mut w, ["x", "a", "b", "delta", "extrapolated"]);
    for j in 0..cmp.x.len() {
        write_row(
            &mut w,
            [
                format_g17(cmp.x[j]),
                format_opt(cmp.curve_a[j]),
                format_opt(cmp.curve_b[j]),
                format_opt(cmp.delta[j]),
                u8::from(cmp.extrapolated[j]).to_string(),
            ],
        );
    }
    finish(w)
}

/// `x,L,M,S,objective,converged`, plus smoothed columns when present.
pub fn export_reverse_csv(result: &ReverseResult) -> String {
    let mut w = csv_writer();
    let mut header = vec!["x", "L", "M", "S", "objective", "converged"];
    if result.smoothed.is_some() {
        header.extend(["L_smooth", "M_smooth", "S_smooth"]);
    }
    write_row(&mut w, &header);
    for (j, p) in result.points.iter().enumerate() {
        let mut row = vec![
            format_g17(p.x),
            format_g17(p.params.l),
            format_g17(p.params.m),
            format_g17(p.params.s),
            format_g17(p.objective),
            u8::from(p.converged).to_string(),
        ];
        if let Some(s) = &result.smoothed {
            row.extend([format_g17(s[j].l), format_g17(s[j].m), format_g17(s[j].s)]);
        }
        write_row(&mut w, &row);
    }
    finish(w)
}

/// Cole quantile recomputed from one exported `L,M,S` triple.
pub fn quantile_from_lms(level: f64, l: f64, m: f64, s: f64) -> Result<f64> {
    bccg::quantile(level / 100.0, &bccg::BccgParams::new(m, s, l)?, TailMode::ColeApprox)
}
