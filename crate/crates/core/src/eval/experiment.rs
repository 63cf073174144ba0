use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::{
    belief_means, dkf_filter_with, ekf_filter, kf_filter, kf_fit, robust_dkf_filter, ukf_filter, DkfInputs, DkfOptions,
    GaussianBelief, StateSpaceParams, UtParams,
};
use crate::linalg::{sample_covariance, symmetrize, Mat};
use crate::preprocess::ProcessedTrial;
use crate::regress::lstm::LstmOptions;
use crate::regress::{fit_cov_function, GpConfig, GpModel, LstmModel, MlpModel, NwModel, TrainConfig};
use crate::rng::{derive_seed, stream};

use super::metrics::{maae_report, nrmse};
use super::split::{make_sequential_split, make_split, SplitIndices, FIT_LEN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Kalman,
    Nw,
    Gp,
    Nn,
    Lstm,
    Ekf,
    Ukf,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Kalman,
        Method::Nw,
        Method::Gp,
        Method::Nn,
        Method::Lstm,
        Method::Ekf,
        Method::Ukf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Kalman => "Kalman",
            Method::Nw => "NW",
            Method::Gp => "GP",
            Method::Nn => "NN",
            Method::Lstm => "LSTM",
            Method::Ekf => "EKF",
            Method::Ukf => "UKF",
        }
    }

    /// Regressors are reported both raw and after DKF filtering.
    pub fn is_regressor(self) -> bool {
        matches!(self, Method::Nw | Method::Gp | Method::Nn | Method::Lstm)
    }

    pub fn label(self, dkf_applied: bool) -> String {
        if dkf_applied {
            format!("DKF-{}", self.name())
        } else {
            self.name().to_string()
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Accepts plain names and `DKF-` prefixed regressor names, any case.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let base = lower.strip_prefix("dkf-").unwrap_or(&lower);
        let m = match base {
            "kalman" | "kf" => Method::Kalman,
            "nw" => Method::Nw,
            "gp" => Method::Gp,
            "nn" => Method::Nn,
            "lstm" => Method::Lstm,
            "ekf" => Method::Ekf,
            "ukf" => Method::Ukf,
            _ => return Err(Error::Config(format!("unknown method {s:?}"))),
        };
        if base != lower && !m.is_regressor() {
            return Err(Error::Config(format!("{s:?}: only regressors take the DKF- prefix")));
        }
        Ok(m)
    }
}

/// Parse a comma-separated method list, dropping duplicates.
pub fn parse_methods(list: &str) -> Result<Vec<Method>> {
    let mut out: Vec<Method> = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let m: Method = item.parse()?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err(Error::Config("empty method list".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mlp: TrainConfig,
    pub lstm: LstmOptions,
    pub gp: GpConfig,
    pub dkf: DkfOptions,
    pub robust_dkf: bool,
    pub ut: UtParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mlp: TrainConfig::mlp(0),
            lstm: LstmOptions::new(TrainConfig::lstm(0)),
            gp: GpConfig::default(),
            dkf: DkfOptions::default(),
            robust_dkf: false,
            ut: UtParams::classic(2),
        }
    }
}

/// One cell of the results grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub trial: String,
    pub seed: u64,
    pub method: Method,
    pub dkf_applied: bool,
    /// NaN when the cell failed.
    pub nrmse: f64,
    pub maae: f64,
    pub runtime_s: f64,
    /// `ok`, or the error kind that stopped the cell.
    pub status: String,
    pub maae_excluded: usize,
    /// Steps at which the DKF positive-definiteness fix fired.
    pub pd_fixes: usize,
}

impl MethodResult {
    pub fn label(&self) -> String {
        self.method.label(self.dkf_applied)
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Everything shared by the cells of one seed.
struct SeedData<'a> {
    trial: &'a ProcessedTrial,
    seed: u64,
    split: SplitIndices,
    /// KF parameters estimated on all fitting rows.
    kalman: StateSpaceParams,
    test_obs: Mat,
    test_latents: Mat,
}

impl<'a> SeedData<'a> {
    fn new(trial: &'a ProcessedTrial, seed: u64) -> Result<Self> {
        let split = make_split(trial.len(), seed)?;
        let kalman = kf_fit(
            &trial.latents.rows(0, FIT_LEN).into_owned(),
            &trial.observations.rows(0, FIT_LEN).into_owned(),
        )?;
        let test_obs = trial.observations.rows(split.test.start, split.test.len()).into_owned();
        let test_latents = trial.latents.rows(split.test.start, split.test.len()).into_owned();
        Ok(Self {
            trial,
            seed,
            split,
            kalman,
            test_obs,
            test_latents,
        })
    }

    fn rows(&self, m: &Mat, idx: &[usize]) -> Mat {
        m.select_rows(idx)
    }
}

struct Outcome {
    method: Method,
    dkf_applied: bool,
    result: Result<(Mat, usize)>,
    runtime_s: f64,
}

fn score(data: &SeedData, o: Outcome) -> MethodResult {
    let mut r = MethodResult {
        trial: data.trial.id.clone(),
        seed: data.seed,
        method: o.method,
        dkf_applied: o.dkf_applied,
        nrmse: f64::NAN,
        maae: f64::NAN,
        runtime_s: o.runtime_s,
        status: "ok".into(),
        maae_excluded: 0,
        pd_fixes: 0,
    };
    let (pred, fixes) = match o.result {
        Ok(v) => v,
        Err(e) => {
            log::warn!("{} seed {} {}: {e}", r.trial, r.seed, r.label());
            r.status = e.kind().into();
            return r;
        }
    };
    r.pd_fixes = fixes;
    match nrmse(&pred, &data.test_latents) {
        Ok(v) => r.nrmse = v,
        Err(e) => r.status = e.kind().into(),
    }
    match maae_report(&pred, &data.test_latents) {
        Ok(m) => {
            r.maae = m.value;
            r.maae_excluded = m.excluded;
        }
        Err(e) => r.status = e.kind().into(),
    }
    r
}

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

fn run_kalman(data: &SeedData) -> Outcome {
    let t = Instant::now();
    let result = kf_filter(&data.kalman, &data.test_obs, &GaussianBelief::centered(&data.kalman.s))
        .map(|b| (belief_means(&b), 0));
    Outcome {
        method: Method::Kalman,
        dkf_applied: false,
        result,
        runtime_s: secs(t),
    }
}

/// Fitted observation-to-latent map evaluated on validation and test rows.
struct Fitted {
    val_inputs: Mat,
    val_pred: Mat,
    val_latents: Mat,
    test_pred: Mat,
}

fn fit_regressor(data: &SeedData, method: Method, cfg: &ExperimentConfig) -> Result<Fitted> {
    let trial = data.trial;
    let split = if method == Method::Lstm {
        make_sequential_split(trial.len(), data.seed)?
    } else {
        data.split.clone()
    };
    let train_x = data.rows(&trial.observations, &split.train);
    let train_z = data.rows(&trial.latents, &split.train);
    let val_x = data.rows(&trial.observations, &split.validation);
    let val_z = data.rows(&trial.latents, &split.validation);
    let (val_pred, test_pred) = match method {
        Method::Nw => {
            let m = NwModel::fit(&train_x, &train_z)?;
            (m.predict_rows(&val_x)?.0, m.predict_rows(&data.test_obs)?.0)
        }
        Method::Gp => {
            let gp = GpConfig {
                seed: derive_seed(data.seed, stream::GP),
                ..cfg.gp
            };
            let m = GpModel::fit(&train_x, &train_z, &gp)?;
            (m.predict_rows(&val_x)?, m.predict_rows(&data.test_obs)?)
        }
        Method::Nn => {
            let train = TrainConfig {
                seed: derive_seed(data.seed, stream::NN_FORWARD),
                ..cfg.mlp
            };
            let (m, _) = MlpModel::fit(&train_x, &train_z, &train)?;
            (m.predict_rows(&val_x)?, m.predict_rows(&data.test_obs)?)
        }
        Method::Lstm => {
            let mut opts = cfg.lstm;
            opts.train.seed = derive_seed(data.seed, stream::LSTM);
            opts.train_fraction = split.train.len() as f64 / FIT_LEN as f64;
            let (m, _) = LstmModel::fit(
                &trial.observations.rows(0, FIT_LEN).into_owned(),
                &trial.latents.rows(0, FIT_LEN).into_owned(),
                &opts,
            )?;
            let all = m.predict_sequence(&trial.observations.rows(0, split.test.end).into_owned())?;
            (
                all.select_rows(&split.validation),
                all.rows(split.test.start, split.test.len()).into_owned(),
            )
        }
        other => return Err(Error::InvalidArgument(format!("{other} is not a regressor"))),
    };
    Ok(Fitted {
        val_inputs: val_x,
        val_pred,
        val_latents: val_z,
        test_pred,
    })
}

fn run_regressor(data: &SeedData, method: Method, cfg: &ExperimentConfig) -> [Outcome; 2] {
    let t = Instant::now();
    let fitted = fit_regressor(data, method, cfg);
    let raw_time = secs(t);
    let (raw, dkf) = match fitted {
        Err(e) => (Err(e.clone()), Err(e)),
        Ok(f) => {
            let dkf = (|| {
                let q = fit_cov_function(&f.val_inputs, &(&f.val_latents - &f.val_pred))?;
                let (qs, _) = q.evaluate_rows(&data.test_obs)?;
                let inputs = DkfInputs::new(f.test_pred.clone(), qs)?;
                if cfg.robust_dkf {
                    Ok((belief_means(&robust_dkf_filter(&data.kalman, &inputs)?), 0))
                } else {
                    let run = dkf_filter_with(&data.kalman, &inputs, &cfg.dkf)?;
                    Ok((belief_means(&run.beliefs), run.pd_fixes))
                }
            })();
            (Ok((f.test_pred, 0)), dkf)
        }
    };
    [
        Outcome {
            method,
            dkf_applied: false,
            result: raw,
            runtime_s: raw_time,
        },
        Outcome {
            method,
            dkf_applied: true,
            result: dkf,
            runtime_s: secs(t),
        },
    ]
}

/// EKF and UKF share one learned latent-to-observation network.
fn run_inverse(data: &SeedData, methods: &[Method], cfg: &ExperimentConfig) -> Vec<Outcome> {
    let t = Instant::now();
    let trial = data.trial;
    let fitted = (|| {
        let train = TrainConfig {
            seed: derive_seed(data.seed, stream::NN_INVERSE),
            ..cfg.mlp
        };
        let (net, _) = MlpModel::fit(
            &data.rows(&trial.latents, &data.split.train),
            &data.rows(&trial.observations, &data.split.train),
            &train,
        )?;
        let val_z = data.rows(&trial.latents, &data.split.validation);
        let val_x = data.rows(&trial.observations, &data.split.validation);
        let r = symmetrize(&sample_covariance(&(val_x - net.predict_rows(&val_z)?), 1)?)?;
        let params = StateSpaceParams {
            r,
            ..data.kalman.clone()
        };
        Ok::<_, Error>((net, params))
    })();
    let fit_time = secs(t);
    methods
        .iter()
        .map(|&method| {
            let t = Instant::now();
            let result = fitted.clone().and_then(|(net, params)| {
                let init = GaussianBelief::centered(&params.s);
                let beliefs = if method == Method::Ekf {
                    ekf_filter(&net, &params, &data.test_obs, &init)?
                } else {
                    ukf_filter(&net, &params, &cfg.ut, &data.test_obs, &init)?
                };
                Ok((belief_means(&beliefs), 0))
            });
            Outcome {
                method,
                dkf_applied: false,
                result,
                runtime_s: fit_time + secs(t),
            }
        })
        .collect()
}

enum Unit {
    Kalman,
    Regressor(Method),
    Inverse(Vec<Method>),
}

/// Evaluate every method for every seed on one trial.
///
/// Cells run in parallel; each is a deterministic function of (trial, seed,
/// method, config). Failures are recorded in the cell's `status` rather than
/// aborting the run. Output is ordered by seed, then table row order.
pub fn run_experiment(
    trial: &ProcessedTrial,
    methods: &[Method],
    seeds: &[u64],
    config: &ExperimentConfig,
) -> Result<Vec<MethodResult>> {
    make_split(trial.len(), 0)?;
    let data: Vec<SeedData> = seeds.iter().map(|&s| SeedData::new(trial, s)).collect::<Result<_>>()?;
    let mut units = Vec::new();
    if methods.contains(&Method::Kalman) {
        units.push(Unit::Kalman);
    }
    units.extend(methods.iter().filter(|m| m.is_regressor()).map(|&m| Unit::Regressor(m)));
    let inverse: Vec<Method> = methods
        .iter()
        .copied()
        .filter(|m| matches!(m, Method::Ekf | Method::Ukf))
        .collect();
    if !inverse.is_empty() {
        units.push(Unit::Inverse(inverse));
    }
    let cells: Vec<(&SeedData, &Unit)> = data.iter().flat_map(|d| units.iter().map(move |u| (d, u))).collect();
    let mut results: Vec<MethodResult> = cells
        .par_iter()
        .flat_map_iter(|&(d, unit)| {
            let outcomes = match unit {
                Unit::Kalman => vec![run_kalman(d)],
                Unit::Regressor(m) => run_regressor(d, *m, config).into(),
                Unit::Inverse(ms) => run_inverse(d, ms, config),
            };
            outcomes.into_iter().map(move |o| score(d, o))
        })
        .collect();
    results.sort_by_key(|r| (r.seed, r.method, r.dkf_applied));
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_parse() {
        assert_eq!("DKF-NW".parse::<Method>().unwrap(), Method::Nw);
        assert_eq!("kalman".parse::<Method>().unwrap(), Method::Kalman);
        assert!("DKF-EKF".parse::<Method>().is_err());
        assert!("xgboost".parse::<Method>().is_err());
        assert_eq!(
            parse_methods("Kalman, DKF-NW,NW,UKF").unwrap(),
            vec![Method::Kalman, Method::Nw, Method::Ukf]
        );
        assert_eq!(Method::Gp.label(true), "DKF-GP");
        assert_eq!(Method::Lstm.label(false), "LSTM");
    }
}
