mod args;
mod report;

use std::fs::File;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use mind_core::bench::{run_gaussian, Estimator, GaussianPairConfig};
use mind_core::bounds::{sample_variance, PerformanceBound};
use mind_core::statistics::{cross_products, nest, NestBlock};
use mind_core::{
    copula_entropy, load_table, mixed_type_mi, polynomial_spec, AugmentationDescriptor, Dataset,
    Error, LoadOptions, MiOptions,
};
use serde_json::json;

use args::{BenchArgs, BoundsArgs, Cli, Command, CopulaEntropyArgs, EstimateMiArgs, SpecDumpArgs, TableArgs};
use report::{emit_error, write_output, Failure, Report};

const EXIT_USAGE: u8 = 2;
const EXIT_SOLVER: u8 = 4;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit_error(&Failure::usage(e.to_string().trim_end()));
            return ExitCode::from(EXIT_USAGE);
        }
    };
    let outcome = match cli.command {
        Command::EstimateMi(a) => estimate_mi(a),
        Command::CopulaEntropy(a) => entropy(a),
        Command::Bounds(a) => bounds(a),
        Command::BenchGaussian(a) => bench(a),
        Command::SpecDump(a) => spec_dump(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            emit_error(&f);
            ExitCode::from(f.exit_code())
        }
    }
}

fn load(t: &TableArgs, seed: u64) -> Result<Dataset, Failure> {
    if !t.delimiter.is_ascii() {
        return Err(Failure::usage("delimiter must be a single ASCII character"));
    }
    let opts = LoadOptions {
        delimiter: t.delimiter as u8,
        categorical: t.categorical.clone(),
        ordinal: t.ordinal.clone(),
        continuous: t.continuous.clone(),
    };
    let file = File::open(&t.input).map_err(|e| Failure::data(format!("{}: {e}", t.input.display())))?;
    let ds = load_table(file, &opts)?;
    match t.jitter {
        Some(sigma) => Ok(ds.with_jitter(sigma, seed)?),
        None => Ok(ds),
    }
}

fn table_config(t: &TableArgs) -> serde_json::Value {
    json!({
        "input": t.input,
        "delimiter": t.delimiter.to_string(),
        "categorical": t.categorical,
        "ordinal": t.ordinal,
        "continuous": t.continuous,
        "jitter": t.jitter,
    })
}

fn dataset_summary(ds: &Dataset) -> serde_json::Value {
    json!({
        "n": ds.n(),
        "dropped_rows": ds.dropped_rows(),
        "columns": ds.columns(),
    })
}

fn parse_mu(s: &str) -> Result<Option<f64>, Failure> {
    if s == "median" {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| Failure::usage(format!("bad centre `{s}` in --augment")))
}

fn parse_number(s: &str) -> Result<f64, Failure> {
    s.parse().map_err(|_| Failure::usage(format!("bad number `{s}` in --augment")))
}

/// Parses one `--augment` value against the column index it refers to.
fn parse_augment(text: &str, column: usize) -> Result<AugmentationDescriptor, Failure> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        ["abs", _] => Ok(AugmentationDescriptor::abs_deviation(column, None)),
        ["abs", _, mu] => Ok(AugmentationDescriptor::abs_deviation(column, parse_mu(mu)?)),
        ["eps", _, mu, eps] => Ok(AugmentationDescriptor::epsilon_insensitive(
            column,
            parse_mu(mu)?,
            parse_number(eps)?,
        )),
        ["periodic", _, period] => Ok(AugmentationDescriptor::periodic(column, parse_number(period)?)),
        _ => Err(Failure::usage(format!(
            "cannot parse --augment `{text}`; expected abs:COL[:MU], eps:COL:MU:EPSILON or periodic:COL:PERIOD"
        ))),
    }
}

fn estimate_mi(a: EstimateMiArgs) -> Result<u8, Failure> {
    let solver = a.solver.resolve();
    let ds = load(&a.table, solver.seed)?;
    let features = if a.features.is_empty() {
        ds.other_columns(&a.target)
    } else {
        a.features.clone()
    };
    let mut augment_x = Vec::new();
    let mut augment_y = Vec::new();
    for text in &a.augment {
        let col = text.split(':').nth(1).unwrap_or_default();
        if let Some(i) = features.iter().position(|f| f == col) {
            augment_x.push(parse_augment(text, i)?);
        } else if let Some(i) = a.target.iter().position(|t| t == col) {
            augment_y.push(parse_augment(text, i)?);
        } else {
            return Err(Failure::usage(format!(
                "--augment `{text}` names a column that is neither a target nor a feature"
            )));
        }
    }
    let opts = MiOptions {
        k: a.solver.k,
        degree: a.solver.degree,
        augment_x,
        augment_y,
        warm_start_tolerance: a.warm_start_tolerance,
        solver,
        accept_unconverged: true,
    };
    let est = mixed_type_mi(&ds, &a.target, &features, &opts)?;
    let var_y = match a.target.as_slice() {
        [t] => Some(sample_variance(&ds.column(t)?.to_vec())?),
        _ => None,
    };
    let bound = match var_y {
        Some(v) => Some(PerformanceBound::new(est.mi_nats, v)?),
        None => None,
    };
    let r2_max = mind_core::bounds::achievable_r2(est.mi_nats)?;
    let config = json!({
        "table": table_config(&a.table),
        "targets": a.target,
        "features": features,
        "augment": a.augment,
        "estimator": opts,
    });
    let mut result = serde_json::to_value(&est).map_err(Failure::internal)?;
    let extra = json!({
        "r2_max": r2_max,
        "rmse_min": bound.map(|b| b.rmse_min),
        "var_y": var_y,
    });
    merge(&mut result, extra);
    let report = Report::new("estimate-mi", config)
        .with("dataset", dataset_summary(&ds))
        .with("result", result);
    write_output(&a.output, &report.to_bytes()?)?;
    Ok(if est.converged { 0 } else { EXIT_SOLVER })
}

fn merge(into: &mut serde_json::Value, extra: serde_json::Value) {
    if let (Some(a), serde_json::Value::Object(b)) = (into.as_object_mut(), extra) {
        a.extend(b);
    }
}

fn entropy(a: CopulaEntropyArgs) -> Result<u8, Failure> {
    let solver = a.solver.resolve();
    let ds = load(&a.table, solver.seed)?;
    let columns = if a.columns.is_empty() {
        ds.columns().iter().map(|c| c.name.clone()).collect()
    } else {
        a.columns.clone()
    };
    let data = ds.select(&columns)?;
    let spec = polynomial_spec(columns.len(), a.solver.k, a.solver.degree)?;
    let (sol, code) = match copula_entropy(data.view(), &spec, &solver) {
        Ok((_, sol)) => (sol, 0),
        Err(Error::NotConverged(sol)) => (*sol, EXIT_SOLVER),
        Err(e) => return Err(e.into()),
    };
    let config = json!({
        "table": table_config(&a.table),
        "columns": columns,
        "k": a.solver.k,
        "degree": a.solver.degree,
        "solver": solver,
    });
    let result = json!({
        "entropy": sol.entropy,
        "converged": sol.diagnostics.converged,
        "spec": mind_core::mind::SpecSummary::from(&spec),
        "solution": sol.summary(),
    });
    let report = Report::new("copula-entropy", config)
        .with("dataset", dataset_summary(&ds))
        .with("result", result);
    write_output(&a.output, &report.to_bytes()?)?;
    Ok(code)
}

fn bounds(a: BoundsArgs) -> Result<u8, Failure> {
    let r2_max = mind_core::bounds::achievable_r2(a.mi)?;
    let rmse_min = match a.var_y {
        Some(v) => Some(mind_core::bounds::achievable_rmse(a.mi, v)?),
        None => None,
    };
    let config = json!({ "mi_nats": a.mi, "var_y": a.var_y });
    let result = json!({ "mi_nats": a.mi, "r2_max": r2_max, "rmse_min": rmse_min });
    let report = Report::new("bounds", config).with("result", result);
    write_output(&a.output, &report.to_bytes()?)?;
    Ok(0)
}

fn bench(a: BenchArgs) -> Result<u8, Failure> {
    let estimators = a
        .estimators
        .iter()
        .map(|s| s.parse::<Estimator>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::usage(e.to_string()))?;
    let mi = MiOptions {
        k: a.solver.k,
        degree: a.solver.degree,
        solver: a.solver.resolve(),
        accept_unconverged: true,
        ..MiOptions::default()
    };
    let mut out = csv::Writer::from_writer(Vec::new());
    for &rho in &a.rho {
        for &n in &a.n {
            for r in 0..a.repeats {
                let config = GaussianPairConfig { d: a.dim, rho, n, seed: a.solver.seed + r };
                config.validate().map_err(|e| Failure::usage(e.to_string()))?;
                for row in run_gaussian(&config, &estimators, &mi, a.ksg_neighbors)? {
                    out.serialize(row).map_err(Failure::internal)?;
                }
            }
        }
    }
    let bytes = out.into_inner().map_err(Failure::internal)?;
    write_output(&a.output, &bytes)?;
    Ok(0)
}

fn spec_dump(a: SpecDumpArgs) -> Result<u8, Failure> {
    let spec = match (a.dim, a.dx, a.dy) {
        (Some(d), None, None) => polynomial_spec(d, a.k, a.degree)?,
        (None, Some(dx), Some(dy)) => {
            let sx = polynomial_spec(dx, a.k, a.degree)?;
            let sy = polynomial_spec(dy, a.k, a.degree)?;
            let xs: Vec<usize> = (0..dx).collect();
            let ys: Vec<usize> = (dx..dx + dy).collect();
            nest(&NestBlock::consecutive(&[&sx, &sy]), &cross_products(&xs, &ys))?
        }
        _ => return Err(Failure::usage("give either --dim or both --dx and --dy")),
    };
    let config = json!({ "dim": a.dim, "dx": a.dx, "dy": a.dy, "k": a.k, "degree": a.degree });
    let doc = serde_json::to_value(spec.to_document()).map_err(Failure::internal)?;
    let report = Report::new("spec-dump", config).with("spec", doc);
    write_output(&a.output, &report.to_bytes()?)?;
    Ok(0)
}
