//! Command-line front end: dataset generation, single fits, the full
//! benchmark, chart re-rendering and the oracle suite.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use semiparam::harness::{
    self, derive_seed, generate_scenario, run_benchmark, svg, verify, AggregateRow,
    BenchmarkConfig, FitContext, Registry, ScenarioId, ScenarioOverrides, SplitRow,
};
use semiparam::harness::learner::MethodOverrides;
use semiparam::{Error, Result};

#[derive(Parser)]
#[command(name = "semiparam", version, about = "Semi-parametric model learning benchmark")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the datasets of one scenario repetition
    Gen {
        /// Scenario id: toy | via_instant | via_ar | simdyn_ll | simdyn_gl
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory for the dataset CSVs and scenario.json
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Fit a single method on a generated scenario and report its metrics
    Fit {
        /// Method id, e.g. LLS, SVR, GP, SPGP, BaMbANN, SVR-GP, it-SVR-GP
        method: String,
        /// Directory produced by `gen`
        #[arg(long)]
        data: PathBuf,
        /// Optional JSON file with method overrides
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output model/metrics JSON file
        #[arg(long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Run a full benchmark from a JSON config
    Bench {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-render the bar charts from an existing results.csv
    Plot {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
    /// Run the built-in oracle suite
    Verify,
}

/// Everything `fit` needs to rebuild the exact scenario `gen` wrote.
#[derive(Serialize, Deserialize)]
struct ScenarioMeta {
    scenario: ScenarioId,
    seed: u64,
    model_coefficients: Vec<f64>,
    true_coefficients: Option<Vec<f64>>,
    max_train_rows: Option<usize>,
}

#[derive(Serialize)]
struct FitOutput {
    scenario: ScenarioId,
    method: String,
    seed: u64,
    coefficients: Option<Vec<f64>>,
    metrics: Vec<SplitRow>,
}

fn cmd_gen(scenario: &str, seed: u64, out: &Path) -> Result<()> {
    let id = ScenarioId::parse(scenario)?;
    let data = generate_scenario(id, seed, &ScenarioOverrides::default())?;
    fs::create_dir_all(out)?;
    data.train.write_csv(&out.join("train.csv"))?;
    data.interp.write_csv(&out.join("interp.csv"))?;
    if let Some(extrap) = &data.extrap {
        extrap.write_csv(&out.join("extrap.csv"))?;
    }
    let meta = ScenarioMeta {
        scenario: id,
        seed,
        model_coefficients: data.model.coefficients().iter().copied().collect(),
        true_coefficients: data
            .true_coefficients
            .as_ref()
            .map(|c| c.iter().copied().collect()),
        max_train_rows: data.max_train_rows,
    };
    fs::write(
        out.join("scenario.json"),
        serde_json::to_string_pretty(&meta)? + "\n",
    )?;
    println!(
        "wrote {} rows train, {} rows interp{} to {}",
        data.train.len(),
        data.interp.len(),
        data.extrap
            .as_ref()
            .map(|e| format!(", {} rows extrap", e.len()))
            .unwrap_or_default(),
        out.display()
    );
    Ok(())
}

fn cmd_fit(method: &str, data_dir: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let meta: ScenarioMeta =
        serde_json::from_str(&fs::read_to_string(data_dir.join("scenario.json"))?)?;
    let overrides = match config {
        Some(path) => {
            let cfg: MethodOverrides = serde_json::from_str(&fs::read_to_string(path)?)?;
            cfg
        }
        None => MethodOverrides::default(),
    };
    let registry = Registry::standard(&overrides);
    let learner = registry.get(method)?;
    // gen is deterministic, so regenerating beats re-parsing CSVs and keeps
    // the basis (which is not serializable for simdyn) intact
    let data = generate_scenario(meta.scenario, meta.seed, &ScenarioOverrides::default())?;
    let seed = derive_seed(meta.seed, method, 0);
    let ctx = FitContext {
        train: &data.train,
        model: &data.model,
        seed,
        max_train_rows: data.max_train_rows,
    };
    let fitted = learner.fit(&ctx)?;
    let mut rows = Vec::new();
    harness::evaluate_split(fitted.as_ref(), &data.interp, &mut rows)?;
    if let Some(extrap) = &data.extrap {
        harness::evaluate_split(fitted.as_ref(), extrap, &mut rows)?;
    }
    let output = FitOutput {
        scenario: meta.scenario,
        method: method.to_string(),
        seed,
        coefficients: fitted.coefficients().map(|c| c.iter().copied().collect()),
        metrics: rows,
    };
    fs::write(out, serde_json::to_string_pretty(&output)? + "\n")?;
    for row in &output.metrics {
        println!(
            "{} {} dim {} rmse {:.6}{}",
            method,
            row.split,
            row.dim,
            row.rmse,
            row.nllh
                .map(|v| format!(" nllh {v:.6}"))
                .unwrap_or_default()
        );
    }
    Ok(())
}

fn cmd_bench(config: &Path) -> Result<bool> {
    let cfg = BenchmarkConfig::from_json(&fs::read_to_string(config)?)?;
    let report = run_benchmark(&cfg)?;
    harness::emit_outputs(&report, Path::new(&cfg.out_dir))?;
    for row in &report.aggregate {
        println!(
            "{} {} {} dim {}: rmse {:.6} +- {:.6} (n={}, failures={})",
            row.scenario,
            row.method,
            row.split,
            row.dim,
            row.mean_rmse,
            row.std_rmse,
            row.count,
            row.failures
        );
    }
    if report.has_failures() {
        for cell in report.cells.iter().filter(|c| c.error.is_some()) {
            eprintln!(
                "cell failed: {} rep {}: {}",
                cell.method,
                cell.rep,
                cell.error.as_deref().unwrap_or("")
            );
        }
    }
    println!("outputs written to {}", cfg.out_dir);
    Ok(report.has_failures())
}

fn parse_results_csv(path: &Path) -> Result<Vec<AggregateRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "scenario,method,seed,split,dim,rmse,nllh,wall_ms")) => {}
        _ => {
            return Err(Error::CsvParse {
                line: 1,
                msg: "expected results.csv header".into(),
            })
        }
    }
    struct Acc {
        scenario: String,
        rmses: Vec<f64>,
        nllhs: Vec<Option<f64>>,
    }
    // key order = first appearance, so charts keep the config's method order
    let mut keys: Vec<(String, String, usize)> = Vec::new();
    let mut accs: Vec<Acc> = Vec::new();
    for (idx, line) in lines {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::CsvParse {
                line: idx + 1,
                msg: format!("expected 8 fields, found {}", fields.len()),
            });
        }
        let bad = |msg: &str| Error::CsvParse {
            line: idx + 1,
            msg: msg.into(),
        };
        let dim: usize = fields[4].parse().map_err(|_| bad("dim"))?;
        let rmse: f64 = fields[5].parse().map_err(|_| bad("rmse"))?;
        let nllh = if fields[6].is_empty() {
            None
        } else {
            Some(fields[6].parse().map_err(|_| bad("nllh"))?)
        };
        let key = (fields[1].to_string(), fields[3].to_string(), dim);
        let slot = match keys.iter().position(|k| *k == key) {
            Some(i) => i,
            None => {
                keys.push(key);
                accs.push(Acc {
                    scenario: fields[0].to_string(),
                    rmses: Vec::new(),
                    nllhs: Vec::new(),
                });
                keys.len() - 1
            }
        };
        accs[slot].rmses.push(rmse);
        accs[slot].nllhs.push(nllh);
    }
    let mut rows = Vec::new();
    for ((method, split, dim), acc) in keys.into_iter().zip(accs) {
        let n = acc.rmses.len() as f64;
        let mean = acc.rmses.iter().sum::<f64>() / n;
        let var = acc.rmses.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        let nllhs: Vec<f64> = acc.nllhs.iter().filter_map(|v| *v).collect();
        rows.push(AggregateRow {
            scenario: acc.scenario,
            method,
            split,
            dim,
            mean_rmse: mean,
            std_rmse: var.sqrt(),
            min_rmse: acc.rmses.iter().copied().fold(f64::INFINITY, f64::min),
            max_rmse: acc.rmses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean_nllh: (nllhs.len() == acc.rmses.len())
                .then(|| nllhs.iter().sum::<f64>() / nllhs.len() as f64),
            count: acc.rmses.len(),
            failures: 0,
        });
    }
    Ok(rows)
}

fn cmd_plot(results: &Path, out: &Path) -> Result<()> {
    let aggregate = parse_results_csv(results)?;
    if aggregate.is_empty() {
        return Err(Error::InvalidConfig("results file has no data rows".into()));
    }
    fs::create_dir_all(out)?;
    let mut combos: Vec<(String, usize)> = Vec::new();
    for row in &aggregate {
        let key = (row.split.clone(), row.dim);
        if !combos.contains(&key) {
            combos.push(key);
        }
    }
    for (split, dim) in combos {
        let rows: Vec<&AggregateRow> = aggregate
            .iter()
            .filter(|r| r.split == split && r.dim == dim)
            .collect();
        let scenario = rows[0].scenario.clone();
        let chart = svg::bar_chart(&format!("{scenario} rmse {split} dim {dim}"), &rows);
        let name = format!("{scenario}_rmse_{split}_dim{dim}.svg");
        fs::write(out.join(&name), chart)?;
        println!("wrote {}", out.join(&name).display());
    }
    Ok(())
}

fn cmd_verify() -> Result<bool> {
    let checks = verify::run_all()?;
    let mut all_ok = true;
    for c in &checks {
        println!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
        all_ok &= c.passed;
    }
    Ok(all_ok)
}

/// Errors that stem from bad invocations or configs rather than failed
/// computation exit with the usage code 2.
fn is_usage_error(err: &Error) -> bool {
    matches!(
        err,
        Error::InvalidConfig(_) | Error::UnknownMethod(_) | Error::Json(_) | Error::CsvParse { .. }
    )
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Command::Gen { scenario, seed, out } => cmd_gen(scenario, *seed, out).map(|()| true),
        Command::Fit {
            method,
            data,
            config,
            out,
        } => cmd_fit(method, data, config.as_deref(), out).map(|()| true),
        Command::Bench { config } => cmd_bench(config).map(|failures| !failures),
        Command::Plot { results, out } => cmd_plot(results, out).map(|()| true),
        Command::Verify => cmd_verify(),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            if is_usage_error(&e) {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
