use std::fs;
use std::path::Path;

use refcurve::analysis::{self, CovariateMode};
use refcurve::bccg;
use refcurve::fitting::{linspace, FittedModel};
use refcurve::io::{self, ImportWarning, ModelDocument};
use refcurve::selection::{self, DfRange, GridRanges};
use refcurve::{Dataset, FitOptions, Hyperparameters, SmootherSpec};
use serde_json::json;

use crate::error::CliError;
use crate::{
    CompareArgs, ConvertArgs, CurvesArgs, CvArgs, FitArgs, FitOptionArgs, GridArgs, HpArgs, OutliersArgs,
    PlotdataArgs, ReverseArgs, SelectArgs, SimulateArgs, ZscoreArgs,
};

type CmdResult = Result<(), CliError>;

pub fn run(command: crate::Command) -> CmdResult {
    use crate::Command::*;
    match command {
        Fit(a) => fit(a),
        Select(a) => select(a),
        Cv(a) => cv(a),
        Outliers(a) => outliers(a),
        Curves(a) => curves(a),
        Plotdata(a) => plotdata(a),
        Zscore(a) => zscore(a),
        Convert(a) => convert(a),
        Simulate(a) => simulate(a),
        Reverse(a) => reverse(a),
        Compare(a) => compare(a),
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, content: &str) -> CmdResult {
    fs::write(path, content).map_err(|e| CliError::io(path, e))
}

/// Writes to `out` when given, otherwise to stdout.
fn emit(out: Option<&Path>, content: &str) -> CmdResult {
    match out {
        Some(path) => write(path, content),
        None => {
            print!("{content}");
            Ok(())
        }
    }
}

fn warn(message: &str) {
    eprintln!("{}", json!({ "warning": message }));
}

fn warn_import(w: &ImportWarning) {
    eprintln!("{}", json!({ "warning": w.message, "line": w.line, "row_id": w.row_id }));
}

fn load_data(path: &Path, x: &str, y: &str) -> Result<Dataset, CliError> {
    let report = io::import_csv(&read(path)?, x, y)?;
    report.warnings.iter().for_each(warn_import);
    Ok(report.dataset)
}

fn load_model(path: &Path) -> Result<FittedModel, CliError> {
    Ok(io::load_model(&read(path)?)?.model)
}

fn hyperparameters(a: &HpArgs) -> Hyperparameters {
    let spec = |poly: Option<usize>, df: f64| match poly {
        Some(degree) => SmootherSpec::Poly { degree },
        None => SmootherSpec::PSpline { df_extra: df },
    };
    Hyperparameters { m: spec(a.poly_m, a.mdf), s: spec(a.poly_s, a.sdf), l: spec(a.poly_l, a.ldf) }
}

fn fit_options(a: &FitOptionArgs) -> FitOptions {
    FitOptions { max_cycles: a.max_cycles, gd_tol: a.gd_tol, ..FitOptions::default() }
}

fn created_at() -> Result<Option<String>, CliError> {
    let Ok(raw) = std::env::var("SOURCE_DATE_EPOCH") else {
        return Ok(None);
    };
    let secs: i64 = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage("invalid_env".into(), format!("SOURCE_DATE_EPOCH is not an integer: {raw:?}")))?;
    let t = chrono::DateTime::from_timestamp(secs, 0)
        .ok_or_else(|| CliError::Usage("invalid_env".into(), format!("SOURCE_DATE_EPOCH out of range: {secs}")))?;
    Ok(Some(t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)))
}

fn grid(model: &FittedModel, a: &GridArgs) -> Result<Vec<f64>, CliError> {
    let lo = a.from.unwrap_or(model.x_range.0);
    let hi = a.to.unwrap_or(model.x_range.1);
    if a.grid == 0 || !(lo <= hi) {
        return Err(CliError::Usage(
            "invalid_grid".into(),
            format!("grid needs at least one point and from <= to (got {} points, {lo}..{hi})", a.grid),
        ));
    }
    Ok(linspace(lo, hi, a.grid))
}

fn fit(a: FitArgs) -> CmdResult {
    let data = load_data(&a.data.data, &a.data.x, &a.data.y)?;
    let hp = hyperparameters(&a.hp);
    let (model, report) = refcurve::fit_lms(&data, &hp, &fit_options(&a.options))?;
    report.warnings.iter().for_each(|w| warn(w));
    let summary = json!({
        "global_deviance": model.global_deviance,
        "edf": { "M": model.m.edf, "S": model.s.edf, "L": model.l.edf },
        "total_edf": model.total_edf,
        "converged": model.converged,
        "iterations": model.iterations,
        "n": model.n,
    });
    let label = a.data.data.file_name().map(|s| s.to_string_lossy().into_owned());
    let doc = ModelDocument::new(model, created_at()?, label);
    write(&a.out, &io::save_model(&doc))?;
    println!("{summary}");
    Ok(())
}

fn parse_range(raw: &str, step: f64) -> Result<DfRange, CliError> {
    let bad = || CliError::Usage("invalid_range".into(), format!("range must look like lo:hi, got {raw:?}"));
    let (lo, hi) = raw.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    Ok(DfRange::new(lo, hi, step))
}

fn select(a: SelectArgs) -> CmdResult {
    let data = load_data(&a.data.data, &a.data.x, &a.data.y)?;
    let one = |over: &Option<String>| parse_range(over.as_deref().unwrap_or(&a.range), a.step);
    let ranges = GridRanges { m: one(&a.m_range)?, s: one(&a.s_range)?, l: one(&a.l_range)? };
    let result = selection::grid_search_bic(&data, &ranges, &fit_options(&a.options))?;
    for f in &result.failed {
        let (m, s, l) = f.hp.dfs();
        warn(&format!("cell ({m}, {s}, {l}) failed: {}", f.error));
    }
    emit(a.out.as_deref(), &io::export_selection_csv(&result))?;
    if a.out.is_some() {
        let best = result.best();
        let (m, s, l) = best.hp.dfs();
        println!(
            "{}",
            json!({
                "best": { "m_df": m, "s_df": s, "l_df": l, "bic": best.bic, "global_deviance": best.global_deviance },
                "cells": result.records.len() + result.failed.len(),
                "failed": result.failed.len(),
            })
        );
    }
    Ok(())
}

fn cv(a: CvArgs) -> CmdResult {
    let data = load_data(&a.data.data, &a.data.x, &a.data.y)?;
    let hp = hyperparameters(&a.hp);
    let report = selection::cross_validate(&data, &hp, a.folds, a.seed, &fit_options(&a.options))?;
    println!("{}", serde_json::to_string_pretty(&report).expect("finite report"));
    Ok(())
}

fn outliers(a: OutliersArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let x = a.x.as_deref().unwrap_or(&model.x_label);
    let y = a.y.as_deref().unwrap_or(&model.y_label);
    let data = load_data(&a.data, x, y)?;
    let flags = analysis::flag_outliers(&model, &data, a.lower, a.upper)?;
    emit(a.out.as_deref(), &io::export_outliers_csv(&flags))?;
    if a.out.is_some() {
        println!("{}", json!({ "n": flags.rows.len(), "flagged": flags.n_flagged() }));
    }
    Ok(())
}

fn curves(a: CurvesArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let xs = grid(&model, &a.grid)?;
    emit(a.out.as_deref(), &io::export_curves(&model, &xs, &a.grid.percentiles)?)
}

fn plotdata(a: PlotdataArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let xs = grid(&model, &a.grid)?;
    let data = match &a.data {
        Some(path) => Some(load_data(
            path,
            a.x.as_deref().unwrap_or(&model.x_label),
            a.y.as_deref().unwrap_or(&model.y_label),
        )?),
        None => None,
    };
    emit(a.out.as_deref(), &io::export_plot_data(&model, data.as_ref(), &xs, &a.grid.percentiles)?)
}

fn zscore(a: ZscoreArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    if model.is_extrapolated(a.x) {
        warn(&format!("x = {} lies outside the training range; value is extrapolated", a.x));
    }
    let z = refcurve::zscore(&model, a.x, a.y)?;
    println!("{}", io::format_g17(z));
    Ok(())
}

fn convert(a: ConvertArgs) -> CmdResult {
    let value = match (a.percentile, a.zscore) {
        (Some(p), _) => bccg::percentile_to_z(p)?,
        (None, Some(z)) => bccg::z_to_percentile(z),
        (None, None) => unreachable!("clap enforces one of --percentile/--zscore"),
    };
    println!("{value:.5}");
    Ok(())
}

fn simulate(a: SimulateArgs) -> CmdResult {
    let model = load_model(&a.model)?;
    let mode = if a.uniform { CovariateMode::Uniform } else { CovariateMode::ResampleTraining };
    let data = analysis::monte_carlo(&model, a.n, mode, a.seed)?;
    emit(a.out.as_deref(), &io::export_dataset_csv(&data))
}

fn reverse(a: ReverseArgs) -> CmdResult {
    let chart = io::parse_chart_csv(&read(&a.chart)?)?;
    let result = analysis::reverse_lms(&chart, a.smooth_df)?;
    for x in result.unconverged() {
        warn(&format!("reverse fit at x = {x} did not converge"));
    }
    emit(a.out.as_deref(), &io::export_reverse_csv(&result))
}

fn compare(a: CompareArgs) -> CmdResult {
    let ma = load_model(&a.a)?;
    let mb = load_model(&a.b)?;
    let lo = ma.x_range.0.max(mb.x_range.0);
    let hi = ma.x_range.1.min(mb.x_range.1);
    let xs = if lo <= hi {
        linspace(lo, hi, a.grid)
    } else {
        warn("training ranges do not overlap; comparing over their union");
        linspace(ma.x_range.0.min(mb.x_range.0), ma.x_range.1.max(mb.x_range.1), a.grid)
    };
    let cmp = analysis::compare_models(&ma, &mb, a.percentile, &xs)?;
    emit(a.out.as_deref(), &io::export_comparison_csv(&cmp))?;
    if a.out.is_some() {
        println!("{}", json!({ "percentile": cmp.percentile, "max_abs_delta": cmp.max_abs_delta }));
    }
    Ok(())
}
