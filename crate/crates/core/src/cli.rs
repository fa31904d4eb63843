//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::couplings::{CouplingConfig, CouplingKind};
use crate::dynamics::{
    criticality_residual, estimate_decay_rate, harmonic_energy, harmonic_modal_solution, harmonic_rhs,
    integrate_kuramoto, integrate_rk45, integrate_sl, kuramoto_energy, kuramoto_rhs, order_parameter,
    phase_velocity_limit, sample_grid, sync_spread, HarmonicParams, Rk45Options, SLParams, StateLayout,
    Trajectory,
};
use crate::error::{Error, Result};
use crate::graph::{load_bundle, make_graph_splits, make_splits, read_edge_list, sbm, DatasetBundle, SbmConfig, SparseGraph, SplitMasks, Targets};
use crate::models::{gradcheck_model, Model, ModelConfig, ModelFamily, ModelInput, Pooling};
use crate::solvers::{simulate_sl_fixed, CubicMethod, PhaseSign, SlScheme, StepConfig};
use crate::trainer::{
    depth_sweep, metric, robustness_sweep, run_experiment, t_score, write_depth_csv, write_robustness_csv,
    OptimizerKind, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(name = "oscgnn", version, about = "Oscillatory graph neural networks and oscillator dynamics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate an oscillator system and analyze the trajectory.
    Simulate(SimulateArgs),
    /// Train a model and write metrics plus a checkpoint.
    Train(Common),
    /// Evaluate a saved checkpoint on the configured dataset.
    Eval(EvalArgs),
    /// Compare model gradients with central finite differences.
    Gradcheck(GradcheckArgs),
    /// Train one model per depth.
    SweepDepth(SweepDepthArgs),
    /// Accuracy under random fake-edge perturbations.
    Perturb(PerturbArgs),
    /// One-tailed t-score between two reported means.
    Ttest(TtestArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct Common {
    /// Flat JSON configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` override, applied after the file; repeatable.
    #[arg(long = "set", short = 's', value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Sl,
    Kuramoto,
    Harmonic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Rk45,
    Imex,
    Euler,
    Symplectic,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub system: System,
    /// `none`, `ring:N`, `complete:N` or `file:PATH` (edge list or bundle dir).
    #[arg(long, default_value = "none")]
    pub graph: String,
    /// Node count when the graph is `none`.
    #[arg(long, default_value_t = 1)]
    pub nodes: usize,
    /// `α,β,ω,γ` for sl, `ω` for kuramoto, `ζ,ω₀` for harmonic.
    #[arg(long, allow_hyphen_values = true)]
    pub params: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 20.0)]
    pub tmax: f64,
    /// Step of the fixed-step solvers.
    #[arg(long, default_value_t = 0.01)]
    pub dt: f64,
    #[arg(long, value_enum, default_value = "rk45")]
    pub solver: Solver,
    /// Sample intervals reported by rk45.
    #[arg(long, default_value_t = 400)]
    pub samples: usize,
    /// Initial magnitude for sl.
    #[arg(long, default_value_t = 1.0)]
    pub r0: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-12)]
    pub atol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Directory written by `train` (its `model` subdirectory).
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub family: Option<String>,
    #[arg(long)]
    pub coupling: Option<String>,
    #[arg(long, default_value_t = 12)]
    pub nodes: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SweepDepthArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', default_value = "2,4,8,16,32,64,128")]
    pub depths: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PerturbArgs {
    #[command(flatten)]
    pub common: Common,
    /// Fake-edge counts.
    #[arg(long, value_delimiter = ',', default_value = "0,100,200,500")]
    pub edges: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    pub trials: usize,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TtestArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub mu1: f64,
    #[arg(long)]
    pub s1: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub mu2: f64,
    #[arg(long)]
    pub s2: f64,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Flat experiment configuration; every key may appear in the JSON file or
/// as a `--set key=value` override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `sbm` or a bundle directory.
    pub dataset: String,
    pub sbm_blocks: usize,
    pub sbm_nodes_per_block: usize,
    pub sbm_p_in: f64,
    pub sbm_p_out: f64,
    pub sbm_noise: f64,
    pub train_per_class: usize,
    pub val_count: usize,
    /// Index into the bundle's predefined masks, when it has any.
    pub split: usize,

    pub family: ModelFamily,
    pub coupling: CouplingKind,
    pub layers: usize,
    pub dt: f64,
    pub alpha: f64,
    pub beta: f64,
    pub omega: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub zeta: f64,
    pub omega0: f64,
    pub hidden_dim: usize,
    pub heads: usize,
    pub attn_dim: usize,
    pub leaky_slope: f64,
    pub complex_weights: bool,
    pub dropout: f64,
    pub input_dropout: f64,
    pub tied: bool,
    pub pooling: Pooling,
    pub cubic_method: CubicMethod,
    pub phase_sign: PhaseSign,
    pub newton_tol: f64,
    pub newton_max_iter: usize,

    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub patience: usize,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let model = ModelConfig::default();
        let train = TrainConfig::default();
        let sbm = SbmConfig::default();
        Self {
            dataset: "sbm".into(),
            sbm_blocks: sbm.blocks,
            sbm_nodes_per_block: sbm.nodes_per_block,
            sbm_p_in: sbm.p_in,
            sbm_p_out: sbm.p_out,
            sbm_noise: sbm.feature_noise,
            train_per_class: 10,
            val_count: 20,
            split: 0,
            family: model.family,
            coupling: model.coupling.kind,
            layers: model.layers,
            dt: model.step.dt,
            alpha: model.sl.alpha,
            beta: model.sl.beta,
            omega: model.sl.omega,
            gamma: model.sl.gamma,
            kappa: model.coupling.kappa,
            zeta: model.harmonic.zeta,
            omega0: model.harmonic.omega0,
            hidden_dim: model.coupling.hidden_dim,
            heads: model.coupling.heads,
            attn_dim: model.coupling.attn_dim,
            leaky_slope: model.coupling.leaky_slope,
            complex_weights: model.coupling.complex_weights,
            dropout: model.dropout,
            input_dropout: model.input_dropout,
            tied: model.tied,
            pooling: model.pooling,
            cubic_method: model.step.cubic_method,
            phase_sign: model.step.phase_sign,
            newton_tol: model.step.newton_tol,
            newton_max_iter: model.step.newton_max_iter,
            lr: train.lr,
            weight_decay: train.weight_decay,
            epochs: train.epochs,
            patience: train.patience,
            optimizer: train.optimizer,
            batch_size: train.batch_size,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            family: self.family,
            coupling: CouplingConfig {
                kind: self.coupling,
                hidden_dim: self.hidden_dim,
                heads: self.heads,
                attn_dim: self.attn_dim,
                kappa: self.kappa,
                leaky_slope: self.leaky_slope,
                complex_weights: self.complex_weights,
            },
            layers: self.layers,
            step: StepConfig {
                dt: self.dt,
                newton_tol: self.newton_tol,
                newton_max_iter: self.newton_max_iter,
                cubic_method: self.cubic_method,
                phase_sign: self.phase_sign,
            },
            sl: SLParams {
                kappa: self.kappa,
                ..SLParams::new(self.alpha, self.beta, self.omega, self.gamma)
            },
            harmonic: HarmonicParams::new(self.zeta, self.omega0),
            omega: self.omega,
            dropout: self.dropout,
            input_dropout: self.input_dropout,
            tied: self.tied,
            pooling: self.pooling,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            epochs: self.epochs,
            patience: self.patience,
            seed: self.seed,
            optimizer: self.optimizer,
            batch_size: self.batch_size,
        }
    }

    /// Structural validation plus the documented tuning ranges.
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(1e-5..=1e-2).contains(&self.lr) {
            bad.push(format!("lr={} (allowed [1e-5, 1e-2])", self.lr));
        }
        if !(1e-6..=1.0).contains(&self.weight_decay) {
            bad.push(format!("weight_decay={} (allowed [1e-6, 1])", self.weight_decay));
        }
        for (k, v) in [("dropout", self.dropout), ("input_dropout", self.input_dropout)] {
            if !(0.0..=0.5).contains(&v) {
                bad.push(format!("{k}={v} (allowed [0, 0.5])"));
            }
        }
        if self.layers == 0 {
            bad.push("layers=0 (must be >= 1)".into());
        }
        if !bad.is_empty() {
            return Err(Error::ConfigKeys(bad));
        }
        self.model_config().validate()?;
        self.train_config().validate()
    }

    pub fn sbm_config(&self) -> SbmConfig {
        SbmConfig {
            blocks: self.sbm_blocks,
            nodes_per_block: self.sbm_nodes_per_block,
            p_in: self.sbm_p_in,
            p_out: self.sbm_p_out,
            feature_noise: self.sbm_noise,
            seed: self.seed,
        }
    }

    pub fn load_dataset(&self) -> Result<DatasetBundle> {
        if self.dataset == "sbm" {
            sbm(&self.sbm_config())
        } else {
            load_bundle(Path::new(&self.dataset))
        }
    }

    /// Predefined masks when the bundle carries them, otherwise seeded splits.
    pub fn masks(&self, bundle: &DatasetBundle) -> Result<SplitMasks> {
        if !bundle.masks.is_empty() {
            return bundle.masks.get(self.split).cloned().ok_or_else(|| {
                Error::Config(format!("split {} requested, bundle has {}", self.split, bundle.masks.len()))
            });
        }
        match &bundle.targets {
            _ if bundle.task.is_graph_level() => Ok(make_graph_splits(bundle.num_graphs(), self.seed)),
            Targets::Classes { labels, num_classes } => {
                make_splits(labels, *num_classes, self.train_per_class, self.val_count, self.seed)
            }
            Targets::Regression(_) => Err(Error::Input("node-level regression is not supported".into())),
        }
    }
}

fn parse_override(raw: &str, default: &Value) -> Option<Value> {
    if default.is_string() {
        return Some(Value::String(raw.to_string()));
    }
    serde_json::from_str(raw).ok().or_else(|| Some(Value::String(raw.to_string())))
}

/// Defaults, then the file, then `key=value` overrides, then `--seed`.
pub fn resolve_config(common: &Common) -> Result<ExperimentConfig> {
    let defaults = match serde_json::to_value(ExperimentConfig::default())? {
        Value::Object(m) => m,
        _ => unreachable!("config serializes to an object"),
    };
    let mut merged = defaults.clone();
    let mut unknown = Vec::new();
    let mut touched = Vec::new();
    if let Some(path) = &common.config {
        let text = fs::read_to_string(path)?;
        let Value::Object(file) = serde_json::from_str::<Value>(&text)? else {
            return Err(Error::Config(format!("{} is not a JSON object", path.display())));
        };
        for (k, v) in file {
            if defaults.contains_key(&k) {
                touched.push(k.clone());
                merged.insert(k, v);
            } else {
                unknown.push(k);
            }
        }
    }
    for item in &common.overrides {
        let Some((key, raw)) = item.split_once('=') else {
            return Err(Error::Config(format!("override {item:?} is not key=value")));
        };
        let key = key.trim();
        match defaults.get(key) {
            Some(default) => {
                let value = parse_override(raw.trim(), default).expect("override value");
                touched.push(key.to_string());
                merged.insert(key.to_string(), value);
            }
            None => unknown.push(key.to_string()),
        }
    }
    if let Some(seed) = common.seed {
        merged.insert("seed".into(), json!(seed));
    }
    if !unknown.is_empty() {
        return Err(Error::ConfigKeys(unknown.into_iter().map(|k| format!("{k} (unknown)")).collect()));
    }
    let bad_types: Vec<String> = touched
        .iter()
        .filter(|k| {
            let mut probe = defaults.clone();
            probe.insert((*k).clone(), merged[k.as_str()].clone());
            serde_json::from_value::<ExperimentConfig>(Value::Object(probe)).is_err()
        })
        .map(|k| format!("{k}={} (invalid value)", merged[k.as_str()]))
        .collect();
    if !bad_types.is_empty() {
        return Err(Error::ConfigKeys(bad_types));
    }
    let cfg: ExperimentConfig =
        serde_json::from_value(Value::Object(merged)).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

fn unix_time() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Output directory with the effective-config echo and a timestamped
/// sidecar log; nothing else written here carries a timestamp.
struct RunDir {
    path: PathBuf,
    started: Instant,
}

impl RunDir {
    fn open<T: Serialize>(path: &Path, command: &str, effective: &T) -> Result<Self> {
        fs::create_dir_all(path)?;
        let echo = json!({ "command": command, "config": effective });
        fs::write(path.join("effective_config.json"), serde_json::to_string_pretty(&echo)?)?;
        let dir = RunDir {
            path: path.to_path_buf(),
            started: Instant::now(),
        };
        dir.log(&format!("{command} started"))?;
        Ok(dir)
    }

    fn log(&self, line: &str) -> Result<()> {
        let mut f = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.path.join("run.log"))?;
        writeln!(f, "{} {line}", unix_time())?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        fs::write(self.path.join(name), serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        self.log(&format!("finished in {:.3} s", self.started.elapsed().as_secs_f64()))
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Usage(format!("cannot parse {v:?} in parameter list")))
        })
        .collect()
}

pub fn parse_graph(spec: &str, nodes: usize) -> Result<Option<SparseGraph>> {
    let size = |v: &str| -> Result<usize> {
        v.parse()
            .map_err(|_| Error::Usage(format!("bad node count in graph spec {spec:?}")))
    };
    match spec.split_once(':') {
        None if spec == "none" => {
            if nodes == 0 {
                return Err(Error::Usage("--nodes must be >= 1".into()));
            }
            Ok(None)
        }
        Some(("ring", n)) => Ok(Some(SparseGraph::ring(size(n)?, false)?)),
        Some(("complete", n)) => Ok(Some(SparseGraph::complete(size(n)?, false)?)),
        Some(("file", path)) => {
            let path = Path::new(path);
            if path.is_dir() {
                Ok(Some(load_bundle(path)?.graph))
            } else {
                Ok(Some(read_edge_list(path)?))
            }
        }
        _ => Err(Error::Usage(format!(
            "graph spec {spec:?} is not none, ring:N, complete:N or file:PATH"
        ))),
    }
}

fn params_or(args: &SimulateArgs, defaults: &[f64]) -> Result<Vec<f64>> {
    let values = match &args.params {
        Some(s) => parse_list(s)?,
        None => defaults.to_vec(),
    };
    if values.len() != defaults.len() {
        return Err(Error::Usage(format!(
            "--params for {:?} takes {} values, got {}",
            args.system,
            defaults.len(),
            values.len()
        )));
    }
    Ok(values)
}

fn fit_json(times: &[f64], mags: &[f64]) -> Value {
    match estimate_decay_rate(times, mags) {
        Ok(fit) => serde_json::to_value(fit).expect("fit serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let incompatible = match args.system {
        System::Sl => args.solver == Solver::Symplectic,
        System::Kuramoto => matches!(args.solver, Solver::Imex | Solver::Symplectic),
        System::Harmonic => matches!(args.solver, Solver::Imex | Solver::Euler),
    };
    if incompatible {
        return Err(Error::Usage(format!(
            "solver {:?} is not available for system {:?}",
            args.solver, args.system
        )));
    }
    if !(args.tmax > 0.0) || !(args.dt > 0.0) || args.samples == 0 {
        return Err(Error::Usage("--tmax, --dt and --samples must be positive".into()));
    }
    let graph = parse_graph(&args.graph, args.nodes)?;
    let n = graph.as_ref().map_or(args.nodes, SparseGraph::n);
    let run = RunDir::open(&args.out, "simulate", args)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let opts = Rk45Options::with_tolerances(args.rtol, args.atol);
    let grid = sample_grid(args.tmax, args.samples);
    let steps = (args.tmax / args.dt).round() as usize;

    let (traj, analysis) = match args.system {
        System::Sl => {
            let v = params_or(args, &[1.0, 1.0, 1.0, 0.0])?;
            let p = SLParams {
                kappa: args.kappa,
                ..SLParams::new(v[0], v[1], v[2], v[3])
            };
            p.validate()?;
            let z0: Vec<Complex64> = (0..n)
                .map(|j| {
                    let theta = if j == 0 { 0.0 } else { rng.random_range(-std::f64::consts::PI..std::f64::consts::PI) };
                    Complex64::from_polar(args.r0, theta)
                })
                .collect();
            let traj = match args.solver {
                Solver::Rk45 => integrate_sl(&z0, &p, graph.as_ref(), args.tmax, &grid, &opts)?,
                scheme => {
                    let scheme = if scheme == Solver::Imex { SlScheme::Imex } else { SlScheme::Euler };
                    simulate_sl_fixed(&z0, &p, graph.as_ref(), &StepConfig::with_dt(args.dt), steps, scheme, Some(1e12))?.0
                }
            };
            (traj.clone(), sl_analysis(&traj, &p, graph.as_ref(), n))
        }
        System::Kuramoto => {
            let v = params_or(args, &[0.0])?;
            let omega = v[0];
            let g = graph.clone().unwrap_or(SparseGraph::build(&[], n, false)?);
            let phi0: Vec<f64> = (0..n).map(|_| rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
            let traj = match args.solver {
                Solver::Rk45 => integrate_kuramoto(&phi0, omega, &g, args.tmax, &grid, &opts)?,
                _ => {
                    let mut traj = Trajectory::new(StateLayout::Phase, n);
                    let mut phi = phi0.clone();
                    traj.push(0.0, phi.clone());
                    for k in 1..=steps {
                        let d = kuramoto_rhs(&phi, omega, &g)?;
                        phi.iter_mut().zip(&d).for_each(|(p, d)| *p += args.dt * d);
                        traj.push(k as f64 * args.dt, phi.clone());
                        traj.accepted += 1;
                    }
                    traj
                }
            };
            let energies: Vec<f64> = traj
                .states
                .iter()
                .map(|s| kuramoto_energy(s, omega, &g))
                .collect::<Result<_>>()?;
            let max_increase = energies.windows(2).fold(0.0f64, |m, w| m.max(w[1] - w[0]));
            let last = traj.last().map(|(_, s)| s.to_vec()).unwrap_or_default();
            let analysis = json!({
                "system": "kuramoto",
                "energy_initial": energies.first(),
                "energy_final": energies.last(),
                "energy_max_increase": max_increase,
                "order_parameter": order_parameter(&last),
                "phase_velocity": phase_velocity_limit(&traj.times, &traj.component(0)).ok(),
            });
            (traj, analysis)
        }
        System::Harmonic => {
            let v = params_or(args, &[0.0, 1.0])?;
            let p = HarmonicParams::new(v[0], v[1]);
            p.validate()?;
            let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y0: Vec<f64> = x0.iter().flat_map(|&x| [x, 0.0]).collect();
            let g = graph.as_ref();
            let mut traj = match args.solver {
                Solver::Rk45 => {
                    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
                        dy.copy_from_slice(&harmonic_rhs(y, &p, g).expect("shape checked"));
                    };
                    integrate_rk45(rhs, &y0, (0.0, args.tmax), &grid, &opts)?
                }
                _ => {
                    let mut traj = Trajectory::new(StateLayout::PositionVelocity, 2 * n);
                    let mut y = y0.clone();
                    traj.push(0.0, y.clone());
                    for k in 1..=steps {
                        let d = harmonic_rhs(&y, &p, g)?;
                        for j in 0..n {
                            y[2 * j + 1] += args.dt * d[2 * j + 1];
                        }
                        for j in 0..n {
                            y[2 * j] += args.dt * y[2 * j + 1];
                        }
                        traj.push(k as f64 * args.dt, y.clone());
                        traj.accepted += 1;
                    }
                    traj
                }
            };
            traj.layout = StateLayout::PositionVelocity;
            let energies: Vec<f64> = traj
                .states
                .iter()
                .map(|s| harmonic_energy(s, &p, g))
                .collect::<Result<_>>()?;
            let drift = energies.iter().fold(0.0f64, |m, e| m.max((e - energies[0]).abs()));
            let v0 = vec![0.0; n];
            let mut modal_error = 0.0f64;
            for (t, s) in traj.times.iter().zip(&traj.states) {
                let (x, _) = harmonic_modal_solution(&x0, &v0, g, &p, *t)?;
                for j in 0..n {
                    modal_error = modal_error.max((x[j] - s[2 * j]).abs());
                }
            }
            let analysis = json!({
                "system": "harmonic",
                "energy_initial": energies[0],
                "energy_drift": drift,
                "modal_max_error": modal_error,
            });
            (traj, analysis)
        }
    };
    traj.write_csv(&run.path.join("trajectory.csv"))?;
    let mut analysis = analysis;
    analysis["solver"] = json!(args.solver);
    analysis["accepted_steps"] = json!(traj.accepted);
    analysis["rejected_steps"] = json!(traj.rejected);
    run.write_json("analysis.json", &analysis)?;
    println!("{}", serde_json::to_string(&analysis)?);
    run.finish()
}

fn sl_analysis(traj: &Trajectory, p: &SLParams, graph: Option<&SparseGraph>, n: usize) -> Value {
    let series: Vec<Vec<Complex64>> = (0..n).map(|j| traj.complex_series(j)).collect();
    let mean_mag: Vec<f64> = (0..traj.len())
        .map(|k| series.iter().map(|s| s[k].norm()).sum::<f64>() / n as f64)
        .collect();
    let phases: Vec<f64> = series[0].iter().map(|c| c.arg()).collect();
    let last: Vec<Complex64> = series.iter().map(|s| s[s.len() - 1]).collect();
    let empty;
    let g = match graph {
        Some(g) => g,
        None => {
            empty = SparseGraph::build(&[], n, false).expect("empty graph");
            &empty
        }
    };
    let criticality = match criticality_residual(&last, p, g) {
        Ok(r) => serde_json::to_value(r).expect("report serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    };
    json!({
        "system": "sl",
        "decay": fit_json(&traj.times, &mean_mag),
        "phase_velocity": phase_velocity_limit(&traj.times, &phases).ok(),
        "expected_phase_velocity": p.limit_phase_velocity(),
        "final_magnitude": mean_mag.last(),
        "sync_spread": sync_spread(&last),
        "criticality": criticality,
        "warnings": p.warnings(),
    })
}

fn train_cmd(common: &Common) -> Result<()> {
    let cfg = resolve_config(common)?;
    let run = RunDir::open(&common.out, "train", &cfg)?;
    let bundle = cfg.load_dataset()?;
    let masks = cfg.masks(&bundle)?;
    let (model, report) = run_experiment(&cfg.model_config(), &bundle, &masks, &cfg.train_config())?;
    model.save(&run.path.join("model"))?;
    run.write_json("metrics.json", &report)?;
    run.log(&format!("training wall time {:.3} s", report.wall_time_s))?;
    println!(
        "{}",
        json!({ "test_metric": report.test_metric, "val_metric": report.val_metric, "epochs_run": report.epochs_run })
    );
    run.finish()
}

fn eval_cmd(args: &EvalArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    let run = RunDir::open(&args.common.out, "eval", &cfg)?;
    let model = Model::load(&args.checkpoint)?;
    let bundle = cfg.load_dataset()?;
    let masks = cfg.masks(&bundle)?;
    let mut result = Map::new();
    for (name, mask) in [("train", &masks.train), ("val", &masks.val), ("test", &masks.test)] {
        let ids: Vec<usize> = mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect();
        if ids.is_empty() {
            continue;
        }
        let value = if bundle.task.is_graph_level() {
            let batch = bundle.graph_batch(&ids)?;
            let out = model.predict(&ModelInput::from_bundle(&batch)?)?;
            metric(&out, &batch.targets, &(0..ids.len()).collect::<Vec<_>>())?
        } else {
            let out = model.predict(&ModelInput::from_bundle(&bundle)?)?;
            metric(&out, &bundle.targets, &ids)?
        };
        result.insert(format!("{name}_metric"), json!(value));
    }
    run.write_json("eval.json", &result)?;
    println!("{}", Value::Object(result));
    run.finish()
}

/// Connected random graph: a ring plus random chords.
pub fn random_graph(n: usize, chords: usize, seed: u64) -> Result<SparseGraph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: Vec<(usize, usize)> = (0..n).map(|i| (i, (i + 1) % n)).collect();
    let mut added = 0;
    while added < chords {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a != b {
            edges.push((a, b));
            added += 1;
        }
    }
    SparseGraph::build(&edges, n, false)
}

fn gradcheck_cmd(args: &GradcheckArgs) -> Result<()> {
    let mut common = args.common.clone();
    if let Some(f) = &args.family {
        common.overrides.push(format!("family={f}"));
    }
    if let Some(c) = &args.coupling {
        common.overrides.push(format!("coupling={c}"));
    }
    common.overrides.push(format!("layers={}", args.layers));
    let cfg = resolve_config(&common)?;
    let run = RunDir::open(&common.out, "gradcheck", &cfg)?;
    if args.nodes < 3 {
        return Err(Error::Usage("--nodes must be >= 3".into()));
    }
    let graph = random_graph(args.nodes, args.nodes / 2, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + 1);
    let d = 3;
    let features = crate::tensor::Matrix::from_vec(
        args.nodes,
        d,
        (0..args.nodes * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let input = ModelInput::new(&graph, features, None)?;
    let model = Model::new(cfg.model_config(), d, 3)?;
    let report = gradcheck_model(&model, &input, 1e-6, cfg.seed)?;
    let max = report.max_rel_err();
    let summary = json!({
        "family": cfg.family,
        "coupling": cfg.coupling,
        "parameters": model.params.num_scalars(),
        "max_rel_err": max,
        "tolerance": args.tol,
        "passed": max < args.tol,
    });
    run.write_json("gradcheck.json", &summary)?;
    println!("{summary}");
    run.finish()?;
    if max < args.tol {
        Ok(())
    } else {
        Err(Error::Domain {
            op: "gradcheck",
            detail: format!("max relative error {max:e} exceeds {:e}", args.tol),
        })
    }
}

fn sweep_depth_cmd(args: &SweepDepthArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    let run = RunDir::open(&args.common.out, "sweep-depth", &json!({ "config": cfg, "depths": args.depths }))?;
    let bundle = cfg.load_dataset()?;
    let masks = cfg.masks(&bundle)?;
    let rows = depth_sweep(&cfg.model_config(), &args.depths, &bundle, &masks, &cfg.train_config(), args.jobs)?;
    write_depth_csv(&rows, fs::File::create(run.path.join("depth.csv"))?)?;
    run.write_json("depth_reports.json", &rows)?;
    for r in &rows {
        println!("{},{}", r.depth, r.report.test_metric);
    }
    run.finish()
}

fn perturb_cmd(args: &PerturbArgs) -> Result<()> {
    let cfg = resolve_config(&args.common)?;
    let run = RunDir::open(
        &args.common.out,
        "perturb",
        &json!({ "config": cfg, "edges": args.edges, "trials": args.trials }),
    )?;
    let bundle = cfg.load_dataset()?;
    let masks = cfg.masks(&bundle)?;
    let rows = robustness_sweep(
        &cfg.model_config(),
        &bundle,
        &masks,
        &cfg.train_config(),
        &args.edges,
        args.trials,
        cfg.seed,
        args.jobs,
    )?;
    write_robustness_csv(&rows, fs::File::create(run.path.join("robustness.csv"))?)?;
    run.write_json("robustness.json", &rows)?;
    for r in &rows {
        println!("{},{},{},{}", r.level, r.mean, r.p25, r.p75);
    }
    run.finish()
}

fn ttest_cmd(args: &TtestArgs) -> Result<()> {
    let run = match &args.out {
        Some(out) => Some(RunDir::open(out, "ttest", args)?),
        None => None,
    };
    let t = t_score(args.mu1, args.s1, args.mu2, args.s2, args.n)?;
    if let Some(run) = &run {
        run.write_json("ttest.json", &t)?;
        run.finish()?;
    }
    println!("{}", serde_json::to_string(&t)?);
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(c) => train_cmd(c),
        Command::Eval(a) => eval_cmd(a),
        Command::Gradcheck(a) => gradcheck_cmd(a),
        Command::SweepDepth(a) => sweep_depth_cmd(a),
        Command::Perturb(a) => perturb_cmd(a),
        Command::Ttest(a) => ttest_cmd(a),
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Failures are reported on stderr as a single JSON object.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            let body = json!({ "error": e.kind(), "message": e.to_string(), "exit_code": e.exit_code() });
            eprintln!("{body}");
            e.exit_code()
        }
    }
}
