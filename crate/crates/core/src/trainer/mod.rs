//! Losses, optimizers, the training loop, significance tests and sweeps.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DatasetBundle, SplitMasks, Targets, Task};
use crate::models::{Mode, Model, ModelConfig, ModelInput};
use crate::tensor::{Matrix, Tape, Tensor};

#[cfg(test)]
mod tests;

/// One-tailed significance threshold for the t-score.
pub const T_THRESHOLD: f64 = 1.66;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Adam,
    Sgd,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Sgd => "sgd",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    /// Epochs without validation improvement before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    /// Graphs per minibatch for graph-level tasks.
    pub batch_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            weight_decay: 5e-4,
            epochs: 200,
            patience: 50,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            batch_size: 64,
        }
    }
}

impl TrainConfig {
    /// Structural checks only; the tuning ranges are enforced by the CLI.
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be >= 0, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!("weight_decay must be >= 0, got {}", self.weight_decay)));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        Ok(())
    }
}

/// Masked cross-entropy for classification, mean squared error for regression.
pub fn loss<'t>(outputs: &Tensor<'t>, targets: &Targets, rows: &[usize]) -> Result<Tensor<'t>> {
    if rows.is_empty() {
        return Err(Error::Mask("loss over an empty mask".into()));
    }
    match targets {
        Targets::Classes { labels, .. } => outputs.cross_entropy(labels, rows),
        Targets::Regression(v) => outputs.mse(&Matrix::column(v.clone()), rows),
    }
}

/// Accuracy in percent (classification) or mean squared error (regression).
pub fn metric(outputs: &Matrix, targets: &Targets, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Mask("metric over an empty mask".into()));
    }
    match targets {
        Targets::Classes { labels, .. } => {
            let pred = outputs.argmax_rows();
            let hits = rows.iter().filter(|&&r| pred[r] == labels[r]).count();
            Ok(100.0 * hits as f64 / rows.len() as f64)
        }
        Targets::Regression(v) => Ok(rows
            .iter()
            .map(|&r| (outputs.get(r, 0) - v[r]).powi(2))
            .sum::<f64>()
            / rows.len() as f64),
    }
}

/// Adam with decoupled weight decay, or plain SGD with weight decay.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: BTreeMap<String, Matrix>,
    v: BTreeMap<String, Matrix>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn step(&mut self, params: &mut BTreeMap<String, Matrix>, grads: &BTreeMap<String, Matrix>) {
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            let decay = self.lr * self.weight_decay;
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, gi) in p.data_mut().iter_mut().zip(g.data()) {
                        *w -= self.lr * gi + decay * *w;
                    }
                }
                OptimizerKind::Adam => {
                    let m = self.m.entry(name.clone()).or_insert_with(|| Matrix::zeros(g.rows(), g.cols()));
                    let v = self.v.entry(name.clone()).or_insert_with(|| Matrix::zeros(g.rows(), g.cols()));
                    for k in 0..g.len() {
                        let gk = g.data()[k];
                        let mk = b1 * m.data()[k] + (1.0 - b1) * gk;
                        let vk = b2 * v.data()[k] + (1.0 - b2) * gk * gk;
                        m.data_mut()[k] = mk;
                        v.data_mut()[k] = vk;
                        let w = &mut p.data_mut()[k];
                        *w -= self.lr * (mk / c1) / ((vk / c2).sqrt() + self.eps) + decay * *w;
                    }
                }
            }
        }
    }
}

/// Loss value and parameter gradients for one batch.
pub fn compute_gradients(
    model: &Model,
    input: &ModelInput,
    targets: &Targets,
    rows: &[usize],
    mode: Mode,
) -> Result<(f64, BTreeMap<String, Matrix>)> {
    let tape = Tape::new();
    let params = model.params.leaves(&tape);
    let out = model.forward(&params, input, mode)?;
    let l = loss(&out.output, targets, rows)?;
    let value = l.value().item();
    if !value.is_finite() {
        return Ok((value, BTreeMap::new()));
    }
    tape.backward(l)?;
    let grads = params
        .iter()
        .map(|(k, t)| (k.clone(), t.grad().expect("leaf gradient populated")))
        .collect();
    Ok((value, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub task: Task,
    pub family: String,
    pub coupling: String,
    pub layers: usize,
    pub seed: u64,
    pub epochs_run: usize,
    pub best_epoch: usize,
    /// Accuracy in percent, or mean squared error for regression.
    pub test_metric: f64,
    pub val_metric: f64,
    pub config_digest: String,
    pub history: Vec<EpochRecord>,
    /// Excluded from the JSON so that reruns produce identical files.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// FNV-1a digest of the JSON form of the configuration.
pub fn config_digest(model: &ModelConfig, train: &TrainConfig) -> String {
    let text = serde_json::to_string(&(model, train)).expect("configs serialize");
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

fn diagnostics(model: &Model) -> String {
    let mut prefixes: Vec<String> = model
        .params
        .values
        .keys()
        .map(|k| k.split('.').next().unwrap_or(k).to_string())
        .collect();
    prefixes.dedup();
    prefixes
        .iter()
        .map(|p| format!("{p}={:.3e}", model.params.norm_of(&format!("{p}."))))
        .collect::<Vec<_>>()
        .join(" ")
}

struct Split {
    input: ModelInput,
    targets: Targets,
    rows: Vec<usize>,
}

/// Evaluation views of one split: the whole graph with a row mask for node
/// tasks, the batch of the split's graphs for graph tasks.
fn split_view(bundle: &DatasetBundle, full: Option<&ModelInput>, mask: &[bool]) -> Result<Split> {
    let ids: Vec<usize> = mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect();
    if ids.is_empty() {
        return Err(Error::Mask("empty split".into()));
    }
    if let Some(full) = full {
        Ok(Split {
            input: full.clone(),
            targets: bundle.targets.clone(),
            rows: ids,
        })
    } else {
        let batch = bundle.graph_batch(&ids)?;
        Ok(Split {
            input: ModelInput::from_bundle(&batch)?,
            targets: batch.targets,
            rows: (0..ids.len()).collect(),
        })
    }
}

fn evaluate(model: &Model, split: &Split) -> Result<(f64, f64)> {
    let tape = Tape::new();
    let params = model.params.constants(&tape);
    let out = model.forward(&params, &split.input, Mode::Eval)?;
    let l = loss(&out.output, &split.targets, &split.rows)?.value().item();
    let m = metric(&out.output.value(), &split.targets, &split.rows)?;
    Ok((l, m))
}

/// Trains `model` with early stopping on the validation loss and evaluates
/// the best checkpoint on the test split.
pub fn train(
    mut model: Model,
    bundle: &DatasetBundle,
    masks: &SplitMasks,
    cfg: &TrainConfig,
) -> Result<(Model, MetricsReport)> {
    cfg.validate()?;
    bundle.validate()?;
    let started = Instant::now();
    let graph_level = bundle.task.is_graph_level();
    let full = if graph_level { None } else { Some(ModelInput::from_bundle(bundle)?) };
    let train_split = split_view(bundle, full.as_ref(), &masks.train)?;
    let val = split_view(bundle, full.as_ref(), &masks.val)?;
    let test = split_view(bundle, full.as_ref(), &masks.test)?;
    let train_ids = masks.train_idx();

    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr, cfg.weight_decay);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, model.params.clone(), 0usize);
    let mut since_best = 0usize;

    for epoch in 0..cfg.epochs {
        let mut train_loss = 0.0;
        if graph_level {
            let mut order = train_ids.clone();
            order.shuffle(&mut rng);
            let mut weight = 0usize;
            for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
                let batch = bundle.graph_batch(chunk)?;
                let input = ModelInput::from_bundle(&batch)?;
                let rows: Vec<usize> = (0..chunk.len()).collect();
                let mode = Mode::Train { seed: step_seed(cfg.seed, epoch, b) };
                let (l, grads) = compute_gradients(&model, &input, &batch.targets, &rows, mode)?;
                check_finite(l, epoch, &model)?;
                opt.step(&mut model.params.values, &grads);
                train_loss += l * chunk.len() as f64;
                weight += chunk.len();
            }
            train_loss /= weight as f64;
        } else {
            let mode = Mode::Train { seed: step_seed(cfg.seed, epoch, 0) };
            let (l, grads) = compute_gradients(&model, &train_split.input, &train_split.targets, &train_split.rows, mode)?;
            check_finite(l, epoch, &model)?;
            opt.step(&mut model.params.values, &grads);
            train_loss = l;
        }
        let (val_loss, val_metric) = evaluate(&model, &val)?;
        check_finite(val_loss, epoch, &model)?;
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_metric,
        });
        if val_loss < best.0 {
            best = (val_loss, model.params.clone(), epoch);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }

    model.params = best.1;
    let (_, val_metric) = evaluate(&model, &val)?;
    let (_, test_metric) = evaluate(&model, &test)?;
    let report = MetricsReport {
        task: bundle.task,
        family: model.config.family.to_string(),
        coupling: model.config.coupling.kind.to_string(),
        layers: model.config.layers,
        seed: cfg.seed,
        epochs_run: history.len(),
        best_epoch: best.2,
        test_metric,
        val_metric,
        config_digest: config_digest(&model.config, cfg),
        history,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

fn step_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((epoch as u64) << 20) ^ batch as u64
}

fn check_finite(l: f64, epoch: usize, model: &Model) -> Result<()> {
    if l.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite {
            epoch,
            diagnostics: format!("loss {l}; parameter norms {}", diagnostics(model)),
        })
    }
}

/// Builds, trains and evaluates one model from configs.
pub fn run_experiment(
    model_cfg: &ModelConfig,
    bundle: &DatasetBundle,
    masks: &SplitMasks,
    cfg: &TrainConfig,
) -> Result<(Model, MetricsReport)> {
    let model = Model::new(model_cfg.clone(), bundle.features.cols(), bundle.targets.output_dim())?;
    train(model, bundle, masks, cfg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TScore {
    pub t: f64,
    pub threshold: f64,
    pub significant: bool,
}

/// `(μ1 − μ2) / √(σ1²/n + σ2²/n)` with the one-tailed threshold.
pub fn t_score(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64, n: usize) -> Result<TScore> {
    if n < 2 {
        return Err(Error::Contract(format!("t-score needs n >= 2, got {n}")));
    }
    if sigma1 < 0.0 || sigma2 < 0.0 || !sigma1.is_finite() || !sigma2.is_finite() {
        return Err(Error::Contract("standard deviations must be finite and >= 0".into()));
    }
    let pooled = (sigma1 * sigma1 + sigma2 * sigma2) / n as f64;
    if pooled == 0.0 {
        return Err(Error::DegenerateVariance);
    }
    let t = (mu1 - mu2) / pooled.sqrt();
    Ok(TScore {
        t,
        threshold: T_THRESHOLD,
        significant: t > T_THRESHOLD,
    })
}

/// Runs `f` over `items` on up to `jobs` threads, keeping input order.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("result lock")
        .into_iter()
        .map(|r| r.expect("every item processed"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthRow {
    pub depth: usize,
    pub report: MetricsReport,
}

/// Trains one model per depth with an otherwise identical configuration.
pub fn depth_sweep(
    model_cfg: &ModelConfig,
    depths: &[usize],
    bundle: &DatasetBundle,
    masks: &SplitMasks,
    cfg: &TrainConfig,
    jobs: usize,
) -> Result<Vec<DepthRow>> {
    if depths.is_empty() {
        return Err(Error::Config("depth list is empty".into()));
    }
    parallel_map(depths, jobs, |&depth| {
        let mc = ModelConfig {
            layers: depth,
            ..model_cfg.clone()
        };
        run_experiment(&mc, bundle, masks, cfg).map(|(_, report)| DepthRow { depth, report })
    })
    .into_iter()
    .collect()
}

pub fn write_depth_csv<W: Write>(rows: &[DepthRow], mut w: W) -> Result<()> {
    writeln!(w, "depth,val_metric,test_metric,epochs_run")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{}",
            r.depth, r.report.val_metric, r.report.test_metric, r.report.epochs_run
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessRow {
    pub level: usize,
    pub mean: f64,
    pub p25: f64,
    pub p75: f64,
    pub trials: Vec<f64>,
}

/// Linear-interpolation quantile of a sample.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Test metric versus number of random fake edges. Trial `t` trains with
/// seed `seed + t` on a graph perturbed with the same seed; level 0 keeps
/// the original graph.
#[allow(clippy::too_many_arguments)]
pub fn robustness_sweep(
    model_cfg: &ModelConfig,
    bundle: &DatasetBundle,
    masks: &SplitMasks,
    cfg: &TrainConfig,
    edge_counts: &[usize],
    trials: usize,
    seed: u64,
    jobs: usize,
) -> Result<Vec<RobustnessRow>> {
    if trials == 0 || edge_counts.is_empty() {
        return Err(Error::Config("robustness sweep needs trials >= 1 and at least one level".into()));
    }
    let runs: Vec<(usize, u64)> = edge_counts
        .iter()
        .flat_map(|&level| (0..trials as u64).map(move |t| (level, seed + t)))
        .collect();
    let scores: Vec<f64> = parallel_map(&runs, jobs, |&(level, s)| -> Result<f64> {
        let mut b = bundle.clone();
        if level > 0 {
            b.graph = bundle.graph.perturb_edges(level, s)?;
        }
        let mc = ModelConfig {
            seed: s,
            ..model_cfg.clone()
        };
        let tc = TrainConfig { seed: s, ..cfg.clone() };
        Ok(run_experiment(&mc, &b, masks, &tc)?.1.test_metric)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    Ok(edge_counts
        .iter()
        .zip(scores.chunks(trials))
        .map(|(&level, s)| RobustnessRow {
            level,
            mean: s.iter().sum::<f64>() / s.len() as f64,
            p25: quantile(s, 0.25),
            p75: quantile(s, 0.75),
            trials: s.to_vec(),
        })
        .collect())
}

pub fn write_robustness_csv<W: Write>(rows: &[RobustnessRow], mut w: W) -> Result<()> {
    writeln!(w, "level,mean,p25,p75")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.level, r.mean, r.p25, r.p75)?;
    }
    Ok(())
}
