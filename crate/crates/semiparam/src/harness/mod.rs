//! Benchmark orchestration: runs each configured method over repetitions of
//! a scenario, aggregates RMSE/NLLH statistics and writes CSV/JSON tables
//! plus SVG bar charts. Deterministic end-to-end for a fixed config.

pub mod learner;
pub mod scenario;
pub mod svg;
pub mod verify;

use std::fs;
use std::io::Write as IoWrite;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, SplitTag};
use crate::error::{Error, Result};
use crate::metrics::{mean_nllh, rmse};

pub use learner::{FitContext, FittedLearner, Learner, MethodOverrides, Registry, METHOD_IDS};
pub use scenario::{generate_scenario, ScenarioData, ScenarioId, ScenarioOverrides};

/// Stable FNV-1a over (base seed, method id, repetition): adding or
/// reordering methods never perturbs another method's seeds.
pub fn derive_seed(base_seed: u64, method: &str, rep: u32) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in base_seed
        .to_le_bytes()
        .into_iter()
        .chain(method.bytes())
        .chain(rep.to_le_bytes())
    {
        h ^= b as u64;
        h = h.wrapping_mul(PRIME);
    }
    h
}

fn default_repetitions() -> u32 {
    5
}

fn default_out_dir() -> String {
    "results".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub scenario: ScenarioId,
    pub methods: Vec<String>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default)]
    pub overrides: MethodOverrides,
    #[serde(default)]
    pub scenario_overrides: ScenarioOverrides,
}

impl BenchmarkConfig {
    pub fn from_json(json: &str) -> Result<Self> {
        let cfg: BenchmarkConfig = serde_json::from_str(json)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::InvalidConfig("repetitions must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("method list is empty".into()));
        }
        for m in &self.methods {
            if !METHOD_IDS.contains(&m.as_str()) {
                return Err(Error::UnknownMethod(m.clone()));
            }
        }
        Ok(())
    }
}

/// Per-split, per-output-dimension metrics of one fit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitRow {
    pub split: String,
    pub dim: usize,
    pub rmse: f64,
    pub nllh: Option<f64>,
}

/// One (method, repetition) cell.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellResult {
    pub scenario: String,
    pub method: String,
    pub rep: u32,
    pub seed: u64,
    pub wall_ms: f64,
    pub coefficients: Option<Vec<f64>>,
    pub rows: Vec<SplitRow>,
    pub error: Option<String>,
}

/// Mean/std/min/max of one (method, split, dim) cell over repetitions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub method: String,
    pub split: String,
    pub dim: usize,
    pub mean_rmse: f64,
    pub std_rmse: f64,
    pub min_rmse: f64,
    pub max_rmse: f64,
    pub mean_nllh: Option<f64>,
    pub count: usize,
    pub failures: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub cells: Vec<CellResult>,
    pub aggregate: Vec<AggregateRow>,
}

impl BenchmarkReport {
    pub fn has_failures(&self) -> bool {
        self.cells.iter().any(|c| c.error.is_some())
    }
}

/// Builds a rayon pool honoring the SEMIPARAM_THREADS cap.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("SEMIPARAM_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("SEMIPARAM_THREADS = `{v}`")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))
}

/// Appends per-dimension metric rows for one evaluation split.
pub fn evaluate_split(
    fitted: &dyn FittedLearner,
    split: &Dataset,
    rows: &mut Vec<SplitRow>,
) -> Result<()> {
    let pred = fitted.predict(split.inputs())?;
    let rmse_per_dim = rmse(&pred, split.targets())?;
    let nllh_per_dim = mean_nllh(&pred, split.targets())?;
    let split_name = match split.tag() {
        SplitTag::Train => "train",
        SplitTag::InterpTest => "interp",
        SplitTag::ExtrapTest => "extrap",
    };
    for (dim, r) in rmse_per_dim.iter().enumerate() {
        rows.push(SplitRow {
            split: split_name.to_string(),
            dim,
            rmse: *r,
            nllh: nllh_per_dim.as_ref().map(|v| v[dim]),
        });
    }
    Ok(())
}

fn run_cell(
    cfg: &BenchmarkConfig,
    registry: &Registry,
    data: &ScenarioData,
    method: &str,
    rep: u32,
) -> CellResult {
    let seed = derive_seed(cfg.base_seed, method, rep);
    let mut cell = CellResult {
        scenario: cfg.scenario.as_str().to_string(),
        method: method.to_string(),
        rep,
        seed,
        wall_ms: 0.0,
        coefficients: None,
        rows: Vec::new(),
        error: None,
    };
    let attempt = || -> Result<(Box<dyn FittedLearner>, f64)> {
        let learner = registry.get(method)?;
        let ctx = FitContext {
            train: &data.train,
            model: &data.model,
            seed,
            max_train_rows: data.max_train_rows,
        };
        let start = Instant::now();
        let fitted = learner.fit(&ctx)?;
        Ok((fitted, start.elapsed().as_secs_f64() * 1e3))
    };
    match attempt() {
        Ok((fitted, wall_ms)) => {
            cell.wall_ms = wall_ms;
            cell.coefficients = fitted.coefficients().map(|c| c.iter().copied().collect());
            let mut eval = || -> Result<()> {
                evaluate_split(fitted.as_ref(), &data.interp, &mut cell.rows)?;
                if let Some(extrap) = &data.extrap {
                    evaluate_split(fitted.as_ref(), extrap, &mut cell.rows)?;
                }
                Ok(())
            };
            if let Err(e) = eval() {
                cell.error = Some(e.to_string());
            }
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let registry = Registry::standard(&cfg.overrides);
    // one scenario instance per repetition, shared by every method
    let mut scenario_data = Vec::with_capacity(cfg.repetitions as usize);
    for rep in 0..cfg.repetitions {
        let scenario_seed = derive_seed(cfg.base_seed, "scenario", rep);
        scenario_data.push(generate_scenario(
            cfg.scenario,
            scenario_seed,
            &cfg.scenario_overrides,
        )?);
    }
    let cells: Vec<(usize, u32)> = (0..cfg.methods.len())
        .flat_map(|m| (0..cfg.repetitions).map(move |r| (m, r)))
        .collect();
    let pool = thread_pool()?;
    let mut results: Vec<CellResult> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(m, rep)| {
                run_cell(
                    cfg,
                    &registry,
                    &scenario_data[rep as usize],
                    &cfg.methods[m],
                    rep,
                )
            })
            .collect()
    });
    // deterministic order regardless of scheduling
    results.sort_by(|a, b| {
        let ka = cfg.methods.iter().position(|m| *m == a.method).unwrap();
        let kb = cfg.methods.iter().position(|m| *m == b.method).unwrap();
        ka.cmp(&kb).then(a.rep.cmp(&b.rep))
    });
    let aggregate = aggregate(cfg, &results);
    Ok(BenchmarkReport {
        config: cfg.clone(),
        cells: results,
        aggregate,
    })
}

pub fn aggregate(cfg: &BenchmarkConfig, cells: &[CellResult]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for method in &cfg.methods {
        let (ok, failed): (Vec<_>, Vec<_>) = cells
            .iter()
            .filter(|c| c.method == *method)
            .partition(|c| c.error.is_none());
        let failures = failed.len();
        let mut keys: Vec<(String, usize)> = Vec::new();
        for c in &ok {
            for r in &c.rows {
                let key = (r.split.clone(), r.dim);
                if !keys.contains(&key) {
                    keys.push(key);
                }
            }
        }
        for (split, dim) in keys {
            let values: Vec<&SplitRow> = ok
                .iter()
                .flat_map(|c| c.rows.iter())
                .filter(|r| r.split == split && r.dim == dim)
                .collect();
            if values.is_empty() {
                continue;
            }
            let n = values.len() as f64;
            let mean = values.iter().map(|r| r.rmse).sum::<f64>() / n;
            let var = values.iter().map(|r| (r.rmse - mean).powi(2)).sum::<f64>() / n;
            let min = values.iter().map(|r| r.rmse).fold(f64::INFINITY, f64::min);
            let max = values
                .iter()
                .map(|r| r.rmse)
                .fold(f64::NEG_INFINITY, f64::max);
            let nllhs: Vec<f64> = values.iter().filter_map(|r| r.nllh).collect();
            rows.push(AggregateRow {
                scenario: cfg.scenario.as_str().to_string(),
                method: method.clone(),
                split,
                dim,
                mean_rmse: mean,
                std_rmse: var.sqrt(),
                min_rmse: min,
                max_rmse: max,
                mean_nllh: (nllhs.len() == values.len())
                    .then(|| nllhs.iter().sum::<f64>() / nllhs.len() as f64),
                count: values.len(),
                failures,
            });
        }
        if ok.is_empty() && failures > 0 {
            rows.push(AggregateRow {
                scenario: cfg.scenario.as_str().to_string(),
                method: method.clone(),
                split: "interp".to_string(),
                dim: 0,
                mean_rmse: f64::NAN,
                std_rmse: f64::NAN,
                min_rmse: f64::NAN,
                max_rmse: f64::NAN,
                mean_nllh: None,
                count: 0,
                failures,
            });
        }
    }
    rows
}

/// `results.csv` in long format, one row per (method, seed, split, dim).
/// The wall_ms column is always 0 here so result files are byte-identical
/// across runs; measured times go to `timings.csv`.
pub fn write_results_csv(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let mut out = String::from("scenario,method,seed,split,dim,rmse,nllh,wall_ms\n");
    for cell in &report.cells {
        for row in &cell.rows {
            let nllh = row
                .nllh
                .map(|v| format!("{v:.12e}"))
                .unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{},{},{:.12e},{},0.000\n",
                cell.scenario, cell.method, cell.seed, row.split, row.dim, row.rmse, nllh,
            ));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Per-fit wall time, the one output that legitimately differs across runs.
pub fn write_timings_csv(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let mut out = String::from("scenario,method,rep,seed,wall_ms\n");
    for cell in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{:.3}\n",
            cell.scenario, cell.method, cell.rep, cell.seed, cell.wall_ms
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn write_results_json(report: &BenchmarkReport, path: &Path) -> Result<()> {
    let mut scrubbed = BenchmarkReport {
        config: report.config.clone(),
        cells: report.cells.clone(),
        aggregate: report.aggregate.clone(),
    };
    for cell in &mut scrubbed.cells {
        cell.wall_ms = 0.0;
    }
    let mut file = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut file, &scrubbed)?;
    file.write_all(b"\n")?;
    Ok(())
}

/// Writes results.csv, results.json, timings.csv and the per-(split, dim)
/// SVG charts.
pub fn emit_outputs(report: &BenchmarkReport, out_dir: &Path) -> Result<()> {
    if report.aggregate.is_empty() {
        return Err(Error::InvalidConfig(
            "no aggregate rows; nothing to emit".into(),
        ));
    }
    fs::create_dir_all(out_dir)?;
    write_results_csv(report, &out_dir.join("results.csv"))?;
    write_results_json(report, &out_dir.join("results.json"))?;
    write_timings_csv(report, &out_dir.join("timings.csv"))?;
    let mut combos: Vec<(String, usize)> = Vec::new();
    for row in &report.aggregate {
        let key = (row.split.clone(), row.dim);
        if !combos.contains(&key) && row.count > 0 {
            combos.push(key);
        }
    }
    for (split, dim) in combos {
        let rows: Vec<&AggregateRow> = report
            .aggregate
            .iter()
            .filter(|r| r.split == split && r.dim == dim && r.count > 0)
            .collect();
        let chart = svg::bar_chart(
            &format!(
                "{} rmse {split} dim {dim}",
                report.config.scenario.as_str()
            ),
            &rows,
        );
        let name = format!(
            "{}_rmse_{split}_dim{dim}.svg",
            report.config.scenario.as_str()
        );
        fs::write(out_dir.join(name), chart)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn tiny_config() -> BenchmarkConfig {
        BenchmarkConfig {
            scenario: ScenarioId::Toy,
            methods: vec!["LLS".into(), "GP".into()],
            repetitions: 2,
            base_seed: 11,
            out_dir: default_out_dir(),
            overrides: MethodOverrides::default(),
            scenario_overrides: ScenarioOverrides::default(),
        }
    }

    #[test]
    fn derive_seed_is_stable_and_method_local() {
        assert_eq!(derive_seed(7, "GP", 0), derive_seed(7, "GP", 0));
        assert_ne!(derive_seed(7, "GP", 0), derive_seed(7, "GP", 1));
        assert_ne!(derive_seed(7, "GP", 0), derive_seed(7, "SVR", 0));
        assert_ne!(derive_seed(7, "GP", 0), derive_seed(8, "GP", 0));
    }

    #[test]
    fn config_rejects_unknown_method_and_unknown_key() {
        let bad = r#"{"scenario": "toy", "methods": ["NOPE"]}"#;
        assert!(BenchmarkConfig::from_json(bad).is_err());
        let extra = r#"{"scenario": "toy", "methods": ["LLS"], "foo": 1}"#;
        assert!(BenchmarkConfig::from_json(extra).is_err());
        let empty = r#"{"scenario": "toy", "methods": []}"#;
        assert!(BenchmarkConfig::from_json(empty).is_err());
        let ok = r#"{"scenario": "toy", "methods": ["LLS", "it-SVR-GP"], "repetitions": 2}"#;
        let cfg = BenchmarkConfig::from_json(ok).unwrap();
        assert_eq!(cfg.repetitions, 2);
        assert_eq!(cfg.base_seed, 0);
    }

    #[test]
    fn aggregate_uses_population_std() {
        let cfg = BenchmarkConfig {
            methods: vec!["LLS".into()],
            ..tiny_config()
        };
        let cells: Vec<CellResult> = [1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(rep, &v)| CellResult {
                scenario: "toy".into(),
                method: "LLS".into(),
                rep: rep as u32,
                seed: rep as u64,
                wall_ms: 1.0,
                coefficients: None,
                rows: vec![SplitRow {
                    split: "interp".into(),
                    dim: 0,
                    rmse: v,
                    nllh: Some(v * 2.0),
                }],
                error: None,
            })
            .collect();
        let agg = aggregate(&cfg, &cells);
        assert_eq!(agg.len(), 1);
        assert_relative_eq!(agg[0].mean_rmse, 2.0);
        assert_relative_eq!(agg[0].std_rmse, (2.0f64 / 3.0).sqrt(), epsilon = 1e-12);
        assert_relative_eq!(agg[0].min_rmse, 1.0);
        assert_relative_eq!(agg[0].max_rmse, 3.0);
        assert_relative_eq!(agg[0].mean_nllh.unwrap(), 4.0);
        assert_eq!(agg[0].count, 3);
        assert_eq!(agg[0].failures, 0);
    }

    #[test]
    fn benchmark_outputs_are_byte_identical_across_runs() {
        let cfg = tiny_config();
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        for dir in [&dir_a, &dir_b] {
            let report = run_benchmark(&cfg).unwrap();
            assert!(!report.has_failures(), "{:?}", report.cells);
            emit_outputs(&report, dir.path()).unwrap();
        }
        for name in ["results.csv", "results.json"] {
            let a = fs::read(dir_a.path().join(name)).unwrap();
            let b = fs::read(dir_b.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
        let csv = fs::read_to_string(dir_a.path().join("results.csv")).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "scenario,method,seed,split,dim,rmse,nllh,wall_ms"
        );
        // 2 methods x 2 reps x 2 splits x 1 dim
        assert_eq!(lines.count(), 8);
        let svg_a = fs::read(dir_a.path().join("toy_rmse_extrap_dim0.svg")).unwrap();
        let svg_b = fs::read(dir_b.path().join("toy_rmse_extrap_dim0.svg")).unwrap();
        assert_eq!(svg_a, svg_b);
        let svg = String::from_utf8(svg_a).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("best "));
    }

    #[test]
    fn failed_cells_are_reported_not_fatal() {
        let cfg = tiny_config();
        let cells = vec![CellResult {
            scenario: "toy".into(),
            method: "LLS".into(),
            rep: 0,
            seed: 0,
            wall_ms: 0.0,
            coefficients: None,
            rows: Vec::new(),
            error: Some("boom".into()),
        }];
        let agg = aggregate(&cfg, &cells);
        let lls = agg.iter().find(|r| r.method == "LLS").unwrap();
        assert_eq!(lls.failures, 1);
        assert_eq!(lls.count, 0);
        assert!(lls.mean_rmse.is_nan());
    }
}
