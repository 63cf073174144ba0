//! Flat `key = value` run configuration.
//!
//! Lines starting with `#` and blank lines are ignored. Every key has a
//! default; unknown and repeated keys are errors. [`RunConfig::dump`] emits
//! every key and parses back to an equal config.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use dkf_core::eval::{parse_methods, ExperimentConfig, Method, FIT_LEN};
use dkf_core::filters::PdFixStrategy;
use dkf_core::preprocess::{MovingSumMode, PreprocessOptions, ZscoreMode};
use dkf_core::regress::Checkpoint;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Trials generated by the cosine-tuning simulator.
    Synthetic,
    /// `trial<N>_spikes.csv` and `trial<N>_velocity.csv` under `data_dir`.
    Csv,
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "synthetic" => Ok(Source::Synthetic),
            "csv" => Ok(Source::Csv),
            _ => Err(format!("expected 'synthetic' or 'csv', got '{s}'")),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Synthetic => "synthetic",
            Source::Csv => "csv",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: Source,
    pub data_dir: PathBuf,
    pub trials: Vec<u32>,
    pub synth_length: usize,
    pub synth_neurons: usize,
    pub synth_seed: u64,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub record_runtime: bool,
    pub preprocess: PreprocessOptions,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: Source::Synthetic,
            data_dir: PathBuf::from("data"),
            trials: (1..=6).collect(),
            synth_length: 7000,
            synth_neurons: 30,
            synth_seed: 0,
            methods: Method::ALL.to_vec(),
            seeds: (0..10).collect(),
            output: PathBuf::from("results"),
            jobs: 0,
            record_runtime: false,
            preprocess: PreprocessOptions::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

type Getter = fn(&RunConfig) -> String;
type Setter = fn(&mut RunConfig, &str) -> std::result::Result<(), String>;

struct Field {
    key: &'static str,
    help: &'static str,
    get: Getter,
    set: Setter,
}

fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| format!("cannot parse '{v}': {e}"))
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    let items: Vec<T> = v
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(parse)
        .collect::<std::result::Result<_, _>>()?;
    if items.is_empty() {
        return Err("empty list".into());
    }
    Ok(items)
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn zscore_name(z: ZscoreMode) -> &'static str {
    match z {
        ZscoreMode::WholeTrial => "whole-trial",
        ZscoreMode::LeadingRows(_) => "fit-rows",
    }
}

const FIELDS: &[Field] = &[
    Field {
        key: "source",
        help: "synthetic | csv",
        get: |c| c.source.to_string(),
        set: |c, v| {
            c.source = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "data_dir",
        help: "directory of trial<N>_spikes.csv / trial<N>_velocity.csv",
        get: |c| c.data_dir.display().to_string(),
        set: |c, v| {
            c.data_dir = PathBuf::from(v);
            Ok(())
        },
    },
    Field {
        key: "trials",
        help: "trial numbers to load or generate",
        get: |c| join(&c.trials),
        set: |c, v| {
            c.trials = parse_list(v)?;
            Ok(())
        },
    },
    Field {
        key: "synth_length",
        help: "synthetic trial length in 100 ms samples",
        get: |c| c.synth_length.to_string(),
        set: |c, v| {
            c.synth_length = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "synth_neurons",
        help: "simulated neurons per synthetic trial",
        get: |c| c.synth_neurons.to_string(),
        set: |c, v| {
            c.synth_neurons = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "synth_seed",
        help: "trial N is generated from seed synth_seed + N",
        get: |c| c.synth_seed.to_string(),
        set: |c, v| {
            c.synth_seed = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "methods",
        help: "Kalman,NW,GP,NN,LSTM,EKF,UKF (regressors are scored with and without DKF)",
        get: |c| join(&c.methods.iter().map(|m| m.name()).collect::<Vec<_>>()),
        set: |c, v| {
            c.methods = parse_methods(v).map_err(|e| e.to_string())?;
            Ok(())
        },
    },
    Field {
        key: "seeds",
        help: "master seeds; each reseeds splits, initializations and restarts",
        get: |c| join(&c.seeds),
        set: |c, v| {
            c.seeds = parse_list(v)?;
            Ok(())
        },
    },
    Field {
        key: "output",
        help: "directory for processed trials, results and tables",
        get: |c| c.output.display().to_string(),
        set: |c, v| {
            c.output = PathBuf::from(v);
            Ok(())
        },
    },
    Field {
        key: "jobs",
        help: "worker threads, 0 = all cores",
        get: |c| c.jobs.to_string(),
        set: |c, v| {
            c.jobs = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "record_runtime",
        help: "write wall-clock seconds per cell (makes results non-reproducible)",
        get: |c| c.record_runtime.to_string(),
        set: |c, v| {
            c.record_runtime = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "bin_ms",
        help: "output bin width in milliseconds",
        get: |c| ((c.preprocess.bin_width * 1000.0).round() as u64).to_string(),
        set: |c, v| {
            c.preprocess.bin_width = parse::<u64>(v)? as f64 / 1000.0;
            Ok(())
        },
    },
    Field {
        key: "window",
        help: "moving-sum window in bins",
        get: |c| c.preprocess.window.to_string(),
        set: |c, v| {
            c.preprocess.window = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "moving_sum",
        help: "trailing | centered",
        get: |c| c.preprocess.moving_sum.to_string(),
        set: |c, v| {
            c.preprocess.moving_sum = parse::<MovingSumMode>(v)?;
            Ok(())
        },
    },
    Field {
        key: "components",
        help: "principal components kept",
        get: |c| c.preprocess.components.to_string(),
        set: |c, v| {
            c.preprocess.components = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "zscore",
        help: "whole-trial | fit-rows (PCA and z-score statistics from the first 5000 rows only)",
        get: |c| zscore_name(c.preprocess.zscore).to_string(),
        set: |c, v| {
            c.preprocess.zscore = match v {
                "whole-trial" => ZscoreMode::WholeTrial,
                "fit-rows" => ZscoreMode::LeadingRows(FIT_LEN),
                _ => return Err(format!("expected 'whole-trial' or 'fit-rows', got '{v}'")),
            };
            Ok(())
        },
    },
    Field {
        key: "min_samples",
        help: "trials with fewer output samples are rejected",
        get: |c| c.preprocess.min_samples.to_string(),
        set: |c, v| {
            c.preprocess.min_samples = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "pd_fix",
        help: "as-printed | drop-prior",
        get: |c| c.experiment.dkf.strategy.to_string(),
        set: |c, v| {
            c.experiment.dkf.strategy = parse::<PdFixStrategy>(v)?;
            Ok(())
        },
    },
    Field {
        key: "robust_dkf",
        help: "use the robust DKF (no -S^-1 term) for every DKF row",
        get: |c| c.experiment.robust_dkf.to_string(),
        set: |c, v| {
            c.experiment.robust_dkf = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "ut_alpha",
        help: "unscented transform spread",
        get: |c| c.experiment.ut.alpha.to_string(),
        set: |c, v| {
            c.experiment.ut.alpha = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "ut_beta",
        help: "unscented transform prior-knowledge weight",
        get: |c| c.experiment.ut.beta.to_string(),
        set: |c, v| {
            c.experiment.ut.beta = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "ut_kappa",
        help: "unscented transform secondary scaling",
        get: |c| c.experiment.ut.kappa.to_string(),
        set: |c, v| {
            c.experiment.ut.kappa = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "mlp_epochs",
        help: "full-batch RMSProp epochs for NN, EKF and UKF networks",
        get: |c| c.experiment.mlp.epochs.to_string(),
        set: |c, v| {
            c.experiment.mlp.epochs = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "mlp_learning_rate",
        help: "",
        get: |c| c.experiment.mlp.learning_rate.to_string(),
        set: |c, v| {
            c.experiment.mlp.learning_rate = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "mlp_l2",
        help: "",
        get: |c| c.experiment.mlp.l2_penalty.to_string(),
        set: |c, v| {
            c.experiment.mlp.l2_penalty = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "lstm_epochs",
        help: "Adam epochs",
        get: |c| c.experiment.lstm.train.epochs.to_string(),
        set: |c, v| {
            c.experiment.lstm.train.epochs = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "lstm_learning_rate",
        help: "",
        get: |c| c.experiment.lstm.train.learning_rate.to_string(),
        set: |c, v| {
            c.experiment.lstm.train.learning_rate = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "lstm_l2",
        help: "",
        get: |c| c.experiment.lstm.train.l2_penalty.to_string(),
        set: |c, v| {
            c.experiment.lstm.train.l2_penalty = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "lstm_hidden",
        help: "",
        get: |c| c.experiment.lstm.hidden.to_string(),
        set: |c, v| {
            c.experiment.lstm.hidden = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "lstm_batch_size",
        help: "",
        get: |c| c.experiment.lstm.batch_size.to_string(),
        set: |c, v| {
            c.experiment.lstm.batch_size = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "lstm_checkpoint",
        help: "best-validation | last-epoch",
        get: |c| c.experiment.lstm.checkpoint.to_string(),
        set: |c, v| {
            c.experiment.lstm.checkpoint = parse::<Checkpoint>(v)?;
            Ok(())
        },
    },
    Field {
        key: "gp_restarts",
        help: "random restarts of the marginal-likelihood search",
        get: |c| c.experiment.gp.restarts.to_string(),
        set: |c, v| {
            c.experiment.gp.restarts = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "gp_max_iters",
        help: "gradient steps per restart",
        get: |c| c.experiment.gp.max_iters.to_string(),
        set: |c, v| {
            c.experiment.gp.max_iters = parse(v)?;
            Ok(())
        },
    },
    Field {
        key: "gp_hyperopt_points",
        help: "training rows used for the hyperparameter search",
        get: |c| c.experiment.gp.hyperopt_points.to_string(),
        set: |c, v| {
            c.experiment.gp.hyperopt_points = parse(v)?;
            Ok(())
        },
    },
];

impl RunConfig {
    pub fn keys() -> impl Iterator<Item = &'static str> {
        FIELDS.iter().map(|f| f.key)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        FIELDS.iter().find(|f| f.key == key).map(|f| (f.get)(self))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let field = FIELDS
            .iter()
            .find(|f| f.key == key)
            .ok_or_else(|| CliError::config(format!("unknown key '{key}'")))?;
        (field.set)(self, value.trim()).map_err(|e| CliError::config(format!("{key}: {e}")))
    }

    /// Parse config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen: Vec<&str> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("line {}: expected key = value", n + 1)))?;
            let key = key.trim();
            if seen.contains(&key) {
                return Err(CliError::config(format!("line {}: '{key}' set twice", n + 1)));
            }
            cfg.set(key, value).map_err(|e| {
                CliError::config(format!(
                    "line {}: {}",
                    n + 1,
                    e.to_string().trim_start_matches("config: ")
                ))
            })?;
            seen.push(key);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| {
            CliError::config(format!(
                "{}: {}",
                path.display(),
                e.to_string().trim_start_matches("config: ")
            ))
        })
    }

    /// Every key with its current value.
    pub fn dump(&self) -> String {
        let mut out = String::from("# dkf-bench configuration\n");
        for f in FIELDS {
            if !f.help.is_empty() {
                out.push_str(&format!("\n# {}\n", f.help));
            }
            out.push_str(&format!("{} = {}\n", f.key, (f.get)(self)));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CliError::config(msg));
        if self.synth_neurons < 2 {
            return bad(format!("synth_neurons must be at least 2, got {}", self.synth_neurons));
        }
        if self.preprocess.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.preprocess.components == 0 {
            return bad("components must be at least 1".into());
        }
        if !(self.preprocess.bin_width > 0.0) {
            return bad("bin_ms must be positive".into());
        }
        let exp = &self.experiment;
        exp.mlp.validate().map_err(|e| CliError::config(format!("mlp: {e}")))?;
        exp.lstm
            .train
            .validate()
            .map_err(|e| CliError::config(format!("lstm: {e}")))?;
        if exp.lstm.hidden == 0 || exp.lstm.batch_size == 0 {
            return bad("lstm_hidden and lstm_batch_size must be positive".into());
        }
        if exp.gp.restarts == 0 || exp.gp.hyperopt_points < 2 {
            return bad("gp_restarts must be >= 1 and gp_hyperopt_points >= 2".into());
        }
        exp.ut.validate(2).map_err(|e| CliError::config(format!("ut: {e}")))?;
        Ok(())
    }
}
