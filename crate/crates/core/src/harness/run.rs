use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::data::{gen_synthetic, load_mnist_dir, BatchPlan, Dataset};
use crate::error::{Error, Result};
use crate::linalg::{
    random_spd, spd_sqrt_db, spd_sqrt_eig_oracle, spd_sqrt_ns, Matrix, SqrtResult,
};
use crate::nn::Network;
use crate::optim::{evaluate, train_epoch, Model, OptimizerKind, OptimizerState};

use super::config::{parse_config, DatasetSpec, TrainConfig};
use super::rng::{rng_stream, Stream};

/// Column order of the metrics CSV.
pub const CSV_HEADER: [&str; 10] = [
    "run_id",
    "optimizer",
    "epoch",
    "step",
    "train_loss",
    "test_loss",
    "test_accuracy",
    "epoch_wall_ms",
    "fisher_refreshes",
    "sqrt_iterations_total",
];

/// One CSV row, written after every epoch. Test columns are empty on epochs
/// without an evaluation; the counters are cumulative over the run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub run_id: String,
    #[serde(rename = "optimizer", serialize_with = "kind_name")]
    pub optimizer_kind: OptimizerKind,
    pub epoch: usize,
    pub step: u64,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub epoch_wall_ms: f64,
    pub fisher_refreshes: u64,
    pub sqrt_iterations_total: u64,
}

fn kind_name<S: serde::Serializer>(kind: &OptimizerKind, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(kind.as_str())
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Record epoch wall time; when false the column is written as 0.
    pub timing: bool,
    /// Overrides the config's output path.
    pub output: Option<PathBuf>,
}

impl RunOptions {
    pub fn timed() -> Self {
        Self {
            timing: true,
            output: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub optimizer: OptimizerKind,
    pub records: Vec<MetricsRecord>,
    /// Mean measured epoch time, even when timing is left out of the CSV.
    pub mean_epoch_ms: f64,
}

impl RunSummary {
    pub fn final_train_loss(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.train_loss)
    }

    pub fn final_test_accuracy(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.test_accuracy)
    }

    pub fn best_test_accuracy(&self) -> Option<f64> {
        self.records
            .iter()
            .filter_map(|r| r.test_accuracy)
            .fold(None, |best, a| Some(best.map_or(a, |b: f64| b.max(a))))
    }
}

/// Train and test splits described by the config, subsampled to their first
/// rows when requested.
pub fn load_datasets(cfg: &TrainConfig) -> Result<(Dataset, Dataset)> {
    let (train, test) = match &cfg.dataset {
        DatasetSpec::Mnist { path } => load_mnist_dir(path)?,
        DatasetSpec::Synthetic {
            kind,
            n,
            test_n,
            dim,
        } => {
            let all = gen_synthetic(*kind, n + test_n, *dim, cfg.seed)?;
            (all.slice(0, *n)?, all.slice(*n, n + test_n)?)
        }
    };
    let train = match cfg.subsample {
        Some(n) => train.take_first(n)?,
        None => train,
    };
    let test = match cfg.test_subsample {
        Some(n) => test.take_first(n)?,
        None => test,
    };
    Ok((train, test))
}

/// The initial network, drawn from the init stream only.
pub fn build_network(cfg: &TrainConfig, input_dim: usize, classes: usize) -> Result<Network> {
    let mut sizes = Vec::with_capacity(cfg.hidden.len() + 2);
    sizes.push(input_dim);
    sizes.extend_from_slice(&cfg.hidden);
    sizes.push(classes);
    Network::mlp(
        &sizes,
        cfg.activation,
        cfg.batch_norm,
        &mut rng_stream(cfg.seed, Stream::Init),
    )
}

/// Trains according to `cfg` and returns one record per epoch.
pub fn train_run(cfg: &TrainConfig, timing: bool) -> Result<(Vec<MetricsRecord>, f64)> {
    let (train, test) = load_datasets(cfg)?;
    let net = build_network(cfg, train.dim(), train.class_count())?;
    let opt = &cfg.optimizer;
    let mut model = Model::for_optimizer(net, opt)?;
    let mut state = OptimizerState::new();
    let mut records = Vec::with_capacity(cfg.epochs);
    let (mut refreshes, mut sqrt_iters, mut wall_total) = (0u64, 0u64, 0.0);
    log::info!(
        "run '{}': {} on {} train / {} test examples, {} parameters",
        cfg.run_id,
        opt.kind,
        train.len(),
        test.len(),
        match &model {
            Model::Plain(n) => n.parameter_count(),
            Model::Reconstructed(r) => r.trainable_parameter_count(),
        }
    );
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let plan = BatchPlan::new(cfg.batch_size, cfg.seed, epoch as u64 - 1)?;
        let m = train_epoch(&mut model, &train, opt, &mut state, &plan, cfg.l2)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        wall_total += wall_ms;
        refreshes += m.refreshes as u64;
        sqrt_iters += m.sqrt_iterations as u64;
        let eval = if epoch % cfg.eval_every == 0 || epoch == cfg.epochs {
            Some(evaluate(&model, &test)?)
        } else {
            None
        };
        log::info!(
            "epoch {epoch}: train loss {:.5}, test accuracy {}, {:.0} ms",
            m.mean_loss,
            eval.map_or("-".to_string(), |e| format!("{:.4}", e.accuracy)),
            wall_ms
        );
        records.push(MetricsRecord {
            run_id: cfg.run_id.clone(),
            optimizer_kind: opt.kind,
            epoch,
            step: state.step_counter,
            train_loss: m.mean_loss,
            test_loss: eval.map(|e| e.loss),
            test_accuracy: eval.map(|e| e.accuracy),
            epoch_wall_ms: if timing { wall_ms } else { 0.0 },
            fisher_refreshes: refreshes,
            sqrt_iterations_total: sqrt_iters,
        });
    }
    Ok((records, wall_total / cfg.epochs as f64))
}

/// Writes the header and `records` to `path`, creating parent directories.
pub fn write_metrics(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn run_context(cfg: &TrainConfig, err: Error) -> Error {
    Error::Run {
        run: cfg.run_id.clone(),
        source: Box::new(err),
    }
}

/// Trains, evaluates and writes the metrics CSV.
pub fn run_experiment(cfg: &TrainConfig, opts: &RunOptions) -> Result<RunSummary> {
    let summary = execute(cfg, opts.timing).map_err(|e| run_context(cfg, e))?;
    let path = opts.output.as_deref().unwrap_or(&cfg.output);
    write_metrics(path, &summary.records).map_err(|e| run_context(cfg, e))?;
    Ok(summary)
}

fn execute(cfg: &TrainConfig, timing: bool) -> Result<RunSummary> {
    let (records, mean_epoch_ms) = train_run(cfg, timing)?;
    Ok(RunSummary {
        run_id: cfg.run_id.clone(),
        optimizer: cfg.optimizer.kind,
        records,
        mean_epoch_ms,
    })
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<TrainConfig> {
    let text = fs::read_to_string(path)?;
    parse_config(&text).map_err(|e| Error::Run {
        run: path.display().to_string(),
        source: Box::new(e.into()),
    })
}

/// Runs every config in order. With `out` set, all rows go to that one file;
/// otherwise each run writes to its own configured output.
pub fn compare(paths: &[PathBuf], out: Option<&Path>) -> Result<Vec<RunSummary>> {
    if paths.len() < 2 {
        return Err(Error::Usage(
            "compare needs at least two config files".into(),
        ));
    }
    let configs = paths
        .iter()
        .map(|p| load_config(p))
        .collect::<Result<Vec<_>>>()?;
    let mut summaries = Vec::with_capacity(configs.len());
    for (cfg, path) in configs.iter().zip(paths) {
        let named = |e: Error| Error::Run {
            run: path.display().to_string(),
            source: Box::new(e),
        };
        let summary = if out.is_some() {
            execute(cfg, true).map_err(named)?
        } else {
            run_experiment(cfg, &RunOptions::timed()).map_err(named)?
        };
        summaries.push(summary);
    }
    if let Some(out) = out {
        let rows: Vec<MetricsRecord> = summaries.iter().flat_map(|s| s.records.clone()).collect();
        write_metrics(out, &rows)?;
    }
    Ok(summaries)
}

/// Aligned table of the runs, with epoch time relative to the first run.
pub fn format_comparison(summaries: &[RunSummary]) -> String {
    let base = summaries.first().map_or(f64::NAN, |s| s.mean_epoch_ms);
    let fmt_acc = |a: Option<f64>| a.map_or("-".to_string(), |a| format!("{:.4}", a));
    let rows: Vec<[String; 6]> = summaries
        .iter()
        .map(|s| {
            [
                s.run_id.clone(),
                s.optimizer.to_string(),
                format!("{:.6}", s.final_train_loss()),
                fmt_acc(s.best_test_accuracy()),
                format!("{:.1}", s.mean_epoch_ms),
                format!("{:.2}", s.mean_epoch_ms / base),
            ]
        })
        .collect();
    let header = [
        "run_id",
        "optimizer",
        "final_train_loss",
        "best_test_acc",
        "epoch_ms",
        "overhead",
    ];
    let mut widths = header.map(str::len);
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut line = |cells: &[&str]| {
        let padded: Vec<String> = cells
            .iter()
            .zip(widths)
            .enumerate()
            .map(|(i, (c, w))| {
                if i < 2 {
                    format!("{c:<w$}")
                } else {
                    format!("{c:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", padded.join("  ").trim_end());
    };
    line(&header);
    for row in &rows {
        line(&row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SqrtBenchRow {
    pub method: &'static str,
    pub iterations: usize,
    pub residual: f64,
    pub oracle_error: f64,
    pub millis: f64,
}

/// Runs each square-root solver on one seeded SPD matrix.
pub fn sqrt_bench(order: usize, cond: f64, seed: u64) -> Result<Vec<SqrtBenchRow>> {
    if order == 0 || !(cond >= 1.0 && cond.is_finite()) {
        return Err(Error::Usage(
            "order must be ≥ 1 and cond a finite number ≥ 1".into(),
        ));
    }
    let a = random_spd(order, cond, &mut rng_stream(seed, Stream::Probe));
    let timed = |f: &dyn Fn(&Matrix) -> Result<SqrtResult, crate::linalg::LinalgError>| {
        let start = Instant::now();
        let r = f(&a);
        (r, start.elapsed().as_secs_f64() * 1e3)
    };
    let (oracle, oracle_ms) = timed(&|m| spd_sqrt_eig_oracle(m));
    let oracle = oracle?;
    let tol = crate::linalg::DEFAULT_TOL;
    let max_iter = crate::linalg::DEFAULT_MAX_ITER;
    let mut rows = vec![SqrtBenchRow {
        method: "eigen_oracle",
        iterations: oracle.iterations,
        residual: oracle.residual,
        oracle_error: 0.0,
        millis: oracle_ms,
    }];
    type Solver = fn(&Matrix, f64, usize) -> Result<SqrtResult, crate::linalg::LinalgError>;
    for (method, solver) in [
        ("denman_beavers", spd_sqrt_db as Solver),
        ("newton_schulz", spd_sqrt_ns as Solver),
    ] {
        let (r, millis) = timed(&|m| solver(m, tol, max_iter));
        let r = r?;
        rows.push(SqrtBenchRow {
            method,
            iterations: r.iterations,
            residual: r.residual,
            oracle_error: r.sqrt.relative_diff(&oracle.sqrt)?,
            millis,
        });
    }
    Ok(rows)
}

pub fn format_sqrt_bench(rows: &[SqrtBenchRow]) -> String {
    let mut out = format!(
        "{:<15} {:>10} {:>12} {:>12} {:>10}\n",
        "method", "iterations", "residual", "vs_oracle", "ms"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<15} {:>10} {:>12.3e} {:>12.3e} {:>10.2}",
            r.method, r.iterations, r.residual, r.oracle_error, r.millis
        );
    }
    out
}
