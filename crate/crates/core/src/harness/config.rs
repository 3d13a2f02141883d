use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

use crate::data::{BatchPlan, SyntheticKind};
use crate::linalg::SqrtMethod;
use crate::nn::Activation;
use crate::optim::{OptimizerConfig, OptimizerKind};

/// A config problem, located by 1-based line number. Problems with the file
/// as a whole (a missing key) point one past the last line.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("line {line}: {kind}")]
pub struct ConfigError {
    pub line: usize,
    pub kind: ConfigErrorKind,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigErrorKind {
    #[error("expected 'key = value', found '{0}'")]
    Syntax(String),
    #[error("unknown key '{0}'")]
    UnknownKey(String),
    #[error("key '{key}' already set on line {first}")]
    Duplicate { key: String, first: usize },
    #[error("invalid value '{value}' for '{key}': {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("missing required key '{0}'")]
    Missing(&'static str),
    #[error("'{key}' does not apply here: {reason}")]
    NotApplicable { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSpec {
    /// Directory with the four standard MNIST IDX files.
    Mnist { path: PathBuf },
    /// Generated data; the first `n` examples train, the next `test_n` test.
    Synthetic {
        kind: SyntheticKind,
        n: usize,
        test_n: usize,
        dim: usize,
    },
}

/// Everything one training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dataset: DatasetSpec,
    /// Keep only the first `n` training examples.
    pub subsample: Option<usize>,
    /// Keep only the first `n` test examples.
    pub test_subsample: Option<usize>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_norm: bool,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub l2: f64,
    pub eval_every: usize,
    pub output: PathBuf,
    pub run_id: String,
}

pub const DEFAULT_MNIST_PATH: &str = "data/mnist";
pub const DEFAULT_HIDDEN: [usize; 2] = [80, 80];
pub const DEFAULT_L2: f64 = 1e-3;
pub const DEFAULT_EPOCHS: usize = 5;
pub const DEFAULT_SYNTHETIC_N: usize = 1000;
pub const DEFAULT_SYNTHETIC_TEST_N: usize = 500;
pub const DEFAULT_SYNTHETIC_DIM: usize = 2;
pub const DEFAULT_OUTPUT: &str = "metrics.csv";

const KEYS: &[&str] = &[
    "dataset",
    "dataset.path",
    "dataset.subsample",
    "dataset.test_subsample",
    "synthetic.n",
    "synthetic.test_n",
    "synthetic.dim",
    "model.hidden",
    "model.activation",
    "model.batch_norm",
    "optimizer",
    "lr",
    "momentum",
    "adam.beta1",
    "adam.beta2",
    "adam.eps",
    "sngd.fisher_interval",
    "sngd.lambda",
    "sngd.rho",
    "sngd.sqrt_method",
    "sngd.sqrt_tol",
    "sngd.sqrt_max_iter",
    "sngd.momentum",
    "epochs",
    "batch_size",
    "seed",
    "l2",
    "eval_every",
    "output",
    "run_id",
];

impl TrainConfig {
    /// Defaults around the given dataset: the 80-80 ReLU MLP, SGD with
    /// momentum at its default learning rate, batch 50, L2 1e-3.
    pub fn with_dataset(dataset: DatasetSpec) -> Self {
        let optimizer = OptimizerConfig::new(OptimizerKind::SgdMomentum);
        Self {
            dataset,
            subsample: None,
            test_subsample: None,
            hidden: DEFAULT_HIDDEN.to_vec(),
            activation: Activation::Relu,
            batch_norm: false,
            run_id: optimizer.kind.to_string(),
            optimizer,
            epochs: DEFAULT_EPOCHS,
            batch_size: BatchPlan::DEFAULT_BATCH_SIZE,
            seed: 0,
            l2: DEFAULT_L2,
            eval_every: 1,
            output: PathBuf::from(DEFAULT_OUTPUT),
        }
    }

    /// Serializes every field; [`parse_config`] reads it back unchanged.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: &dyn fmt::Display| {
            let _ = writeln!(out, "{k} = {v}");
        };
        match &self.dataset {
            DatasetSpec::Mnist { path } => {
                put("dataset", &"mnist");
                put("dataset.path", &path.display());
            }
            DatasetSpec::Synthetic {
                kind,
                n,
                test_n,
                dim,
            } => {
                put("dataset", &format!("synthetic:{kind}"));
                put("synthetic.n", n);
                put("synthetic.test_n", test_n);
                put("synthetic.dim", dim);
            }
        }
        if let Some(n) = self.subsample {
            put("dataset.subsample", &n);
        }
        if let Some(n) = self.test_subsample {
            put("dataset.test_subsample", &n);
        }
        let hidden: Vec<String> = self.hidden.iter().map(|h| h.to_string()).collect();
        put(
            "model.hidden",
            &if hidden.is_empty() {
                "none".into()
            } else {
                hidden.join(",")
            },
        );
        put("model.activation", &self.activation);
        put("model.batch_norm", &self.batch_norm);
        let o = &self.optimizer;
        put("optimizer", &o.kind);
        put("lr", &o.lr);
        put("momentum", &o.momentum);
        put("adam.beta1", &o.adam_beta1);
        put("adam.beta2", &o.adam_beta2);
        put("adam.eps", &o.adam_eps);
        match o.sngd.fisher_interval {
            Some(n) => put("sngd.fisher_interval", &n),
            None => put("sngd.fisher_interval", &"never"),
        }
        put("sngd.lambda", &o.sngd.lambda);
        put("sngd.rho", &o.sngd.rho);
        put("sngd.sqrt_method", &o.sngd.sqrt_method);
        put("sngd.sqrt_tol", &o.sngd.sqrt_tol);
        put("sngd.sqrt_max_iter", &o.sngd.sqrt_max_iter);
        put("sngd.momentum", &o.sngd.momentum);
        put("epochs", &self.epochs);
        put("batch_size", &self.batch_size);
        put("seed", &self.seed);
        put("l2", &self.l2);
        put("eval_every", &self.eval_every);
        put("output", &self.output.display());
        put("run_id", &self.run_id);
        out
    }
}

struct Entries {
    map: HashMap<&'static str, (usize, String)>,
    end_line: usize,
}

impl Entries {
    fn get(&self, key: &'static str) -> Option<(usize, &str)> {
        self.map.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn parse<T>(&self, key: &'static str, reason: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
    {
        self.parse_with(key, |v| v.parse::<T>().map_err(|_| reason.to_string()))
    }

    fn parse_with<T>(
        &self,
        key: &'static str,
        f: impl FnOnce(&str) -> Result<T, String>,
    ) -> Result<Option<T>, ConfigError> {
        match self.get(key) {
            None => Ok(None),
            Some((line, value)) => f(value).map(Some).map_err(|reason| ConfigError {
                line,
                kind: ConfigErrorKind::InvalidValue {
                    key: key.to_string(),
                    value: value.to_string(),
                    reason,
                },
            }),
        }
    }

    fn reject_unless(
        &self,
        keys: &[&'static str],
        ok: bool,
        reason: &str,
    ) -> Result<(), ConfigError> {
        if ok {
            return Ok(());
        }
        for key in keys {
            if let Some((line, _)) = self.get(key) {
                return Err(ConfigError {
                    line,
                    kind: ConfigErrorKind::NotApplicable {
                        key: key.to_string(),
                        reason: reason.to_string(),
                    },
                });
            }
        }
        Ok(())
    }
}

fn tokenize(text: &str) -> Result<Entries, ConfigError> {
    let mut map: HashMap<&'static str, (usize, String)> = HashMap::new();
    let mut end_line = 1;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        end_line = line + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((k, v)) = content.split_once('=') else {
            return Err(ConfigError {
                line,
                kind: ConfigErrorKind::Syntax(content.to_string()),
            });
        };
        let (k, v) = (k.trim(), v.trim());
        let Some(&key) = KEYS.iter().find(|&&known| known == k) else {
            return Err(ConfigError {
                line,
                kind: ConfigErrorKind::UnknownKey(k.to_string()),
            });
        };
        if let Some((first, _)) = map.get(key) {
            return Err(ConfigError {
                line,
                kind: ConfigErrorKind::Duplicate {
                    key: key.to_string(),
                    first: *first,
                },
            });
        }
        map.insert(key, (line, v.to_string()));
    }
    Ok(Entries { map, end_line })
}

fn positive(v: &str) -> Result<usize, String> {
    match v.parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n),
        _ => Err("expected a positive integer".into()),
    }
}

fn real(v: &str) -> Result<f64, String> {
    match v.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(x),
        _ => Err("expected a finite number".into()),
    }
}

fn hidden_sizes(v: &str) -> Result<Vec<usize>, String> {
    if v.is_empty() || v == "none" {
        return Ok(Vec::new());
    }
    v.split(',').map(|s| positive(s.trim())).collect()
}

fn dataset_spec(entries: &Entries) -> Result<DatasetSpec, ConfigError> {
    let Some((line, value)) = entries.get("dataset") else {
        return Err(ConfigError {
            line: entries.end_line,
            kind: ConfigErrorKind::Missing("dataset"),
        });
    };
    let invalid = |reason: String| ConfigError {
        line,
        kind: ConfigErrorKind::InvalidValue {
            key: "dataset".into(),
            value: value.to_string(),
            reason,
        },
    };
    let synthetic_keys = ["synthetic.n", "synthetic.test_n", "synthetic.dim"];
    if value == "mnist" {
        entries.reject_unless(&synthetic_keys, false, "dataset is mnist")?;
        let path = entries
            .get("dataset.path")
            .map(|(_, p)| PathBuf::from(p))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_MNIST_PATH));
        return Ok(DatasetSpec::Mnist { path });
    }
    let Some(name) = value.strip_prefix("synthetic:") else {
        return Err(invalid(
            "expected 'mnist' or 'synthetic:<two_gaussians|spiral|linear_teacher>'".into(),
        ));
    };
    let kind: SyntheticKind = name
        .parse()
        .map_err(|e: crate::error::Error| invalid(e.to_string()))?;
    entries.reject_unless(&["dataset.path"], false, "dataset is synthetic")?;
    Ok(DatasetSpec::Synthetic {
        kind,
        n: entries
            .parse_with("synthetic.n", positive)?
            .unwrap_or(DEFAULT_SYNTHETIC_N),
        test_n: entries
            .parse_with("synthetic.test_n", positive)?
            .unwrap_or(DEFAULT_SYNTHETIC_TEST_N),
        dim: entries
            .parse_with("synthetic.dim", positive)?
            .unwrap_or(DEFAULT_SYNTHETIC_DIM),
    })
}

/// Parses the flat `key = value` format. `#` starts a comment; blank lines
/// are ignored; unknown or repeated keys are errors. Only `dataset` is
/// required.
pub fn parse_config(text: &str) -> Result<TrainConfig, ConfigError> {
    let e = tokenize(text)?;
    let mut cfg = TrainConfig::with_dataset(dataset_spec(&e)?);

    cfg.subsample = e.parse_with("dataset.subsample", positive)?;
    cfg.test_subsample = e.parse_with("dataset.test_subsample", positive)?;
    if let Some(h) = e.parse_with("model.hidden", hidden_sizes)? {
        cfg.hidden = h;
    }
    if let Some(a) = e.parse(
        "model.activation",
        "expected relu, tanh, sigmoid or identity",
    )? {
        cfg.activation = a;
    }
    if let Some(b) = e.parse("model.batch_norm", "expected true or false")? {
        cfg.batch_norm = b;
    }

    let kind = e
        .parse::<OptimizerKind>("optimizer", "expected sgd, sgd_momentum, adam or sngd")?
        .unwrap_or(cfg.optimizer.kind);
    let mut o = OptimizerConfig::new(kind);
    let set_real = |key: &'static str, slot: &mut f64| -> Result<(), ConfigError> {
        if let Some(v) = e.parse_with(key, real)? {
            *slot = v;
        }
        Ok(())
    };
    set_real("lr", &mut o.lr)?;
    set_real("momentum", &mut o.momentum)?;
    set_real("adam.beta1", &mut o.adam_beta1)?;
    set_real("adam.beta2", &mut o.adam_beta2)?;
    set_real("adam.eps", &mut o.adam_eps)?;
    set_real("sngd.lambda", &mut o.sngd.lambda)?;
    set_real("sngd.rho", &mut o.sngd.rho)?;
    set_real("sngd.sqrt_tol", &mut o.sngd.sqrt_tol)?;
    set_real("sngd.momentum", &mut o.sngd.momentum)?;
    if let Some(i) = e.parse_with("sngd.fisher_interval", |v| match v {
        "never" => Ok(None),
        _ => positive(v)
            .map(Some)
            .map_err(|_| "expected a positive integer or 'never'".into()),
    })? {
        o.sngd.fisher_interval = i;
    }
    if let Some(m) = e.parse::<SqrtMethod>(
        "sngd.sqrt_method",
        "expected denman_beavers or newton_schulz",
    )? {
        o.sngd.sqrt_method = m;
    }
    if let Some(n) = e.parse_with("sngd.sqrt_max_iter", positive)? {
        o.sngd.sqrt_max_iter = n;
    }
    if let Err(err) = o.validate() {
        let key = KEYS
            .iter()
            .copied()
            .filter(|k| {
                *k == "lr" || *k == "momentum" || k.starts_with("adam.") || k.starts_with("sngd.")
            })
            .find(|k| err.to_string().contains(k));
        let line = key
            .and_then(|k| e.get(k))
            .map(|(l, _)| l)
            .unwrap_or(e.end_line);
        return Err(ConfigError {
            line,
            kind: ConfigErrorKind::InvalidValue {
                key: key.unwrap_or("optimizer").to_string(),
                value: key
                    .and_then(|k| e.get(k))
                    .map(|(_, v)| v.to_string())
                    .unwrap_or_default(),
                reason: err.to_string(),
            },
        });
    }
    if kind == OptimizerKind::Sngd && cfg.batch_norm {
        let line = e
            .get("model.batch_norm")
            .map(|(l, _)| l)
            .unwrap_or(e.end_line);
        return Err(ConfigError {
            line,
            kind: ConfigErrorKind::NotApplicable {
                key: "model.batch_norm".into(),
                reason: "sngd rebuilds dense layers only".into(),
            },
        });
    }
    cfg.run_id = kind.to_string();
    cfg.optimizer = o;

    if let Some(n) = e.parse_with("epochs", positive)? {
        cfg.epochs = n;
    }
    if let Some(n) = e.parse_with("batch_size", positive)? {
        cfg.batch_size = n;
    }
    if let Some(s) = e.parse("seed", "expected a non-negative integer")? {
        cfg.seed = s;
    }
    if let Some(l2) = e.parse_with("l2", |v| match real(v) {
        Ok(x) if x >= 0.0 => Ok(x),
        _ => Err("expected a non-negative number".into()),
    })? {
        cfg.l2 = l2;
    }
    if let Some(n) = e.parse_with("eval_every", positive)? {
        cfg.eval_every = n;
    }
    if let Some((_, p)) = e.get("output") {
        cfg.output = PathBuf::from(p);
    }
    if let Some((line, id)) = e.get("run_id") {
        if id.is_empty() || id.contains([',', '"', '\n']) {
            return Err(ConfigError {
                line,
                kind: ConfigErrorKind::InvalidValue {
                    key: "run_id".into(),
                    value: id.to_string(),
                    reason: "must be non-empty without commas or quotes".into(),
                },
            });
        }
        cfg.run_id = id.to_string();
    }
    Ok(cfg)
}
