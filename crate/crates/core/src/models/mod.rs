//! End-to-end architectures: encoder, stacked oscillator layers, decoder and
//! graph readout.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::couplings::{apply_coupling, CouplingConfig, CouplingGraphs, LayerParams};
use crate::dynamics::{HarmonicParams, SLParams};
use crate::error::{Error, Result};
use crate::graph::{DatasetBundle, SparseGraph};
use crate::solvers::{
    euler_skip_step, imex_sl_step, kuramoto_circle_step, symplectic_step, SlTensors, SolveStats,
    StepConfig,
};
use crate::tensor::gradcheck::{check_gradients, GradCheckReport};
use crate::tensor::{ComplexMatrix, Matrix, Tape, Tensor};

#[cfg(test)]
mod tests;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Baseline,
    Graphcon,
    Kuramoto,
    #[default]
    Slgnn,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 4] = [
        ModelFamily::Baseline,
        ModelFamily::Graphcon,
        ModelFamily::Kuramoto,
        ModelFamily::Slgnn,
    ];

    /// Number of real planes carried through the layers.
    pub fn planes(self) -> usize {
        match self {
            ModelFamily::Baseline | ModelFamily::Graphcon => 1,
            ModelFamily::Kuramoto | ModelFamily::Slgnn => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Baseline => "baseline",
            ModelFamily::Graphcon => "graphcon",
            ModelFamily::Kuramoto => "kuramoto",
            ModelFamily::Slgnn => "slgnn",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "baseline" => Ok(ModelFamily::Baseline),
            "graphcon" => Ok(ModelFamily::Graphcon),
            "kuramoto" => Ok(ModelFamily::Kuramoto),
            "slgnn" | "sl" => Ok(ModelFamily::Slgnn),
            other => Err(Error::Config(format!("unknown model family {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    #[default]
    Mean,
    Max,
}

impl FromStr for Pooling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Pooling::Mean),
            "max" => Ok(Pooling::Max),
            other => Err(Error::Config(format!("unknown pooling {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub family: ModelFamily,
    pub coupling: CouplingConfig,
    pub layers: usize,
    /// Step size plus cubic-solver settings for the SLGNN layers.
    pub step: StepConfig,
    pub sl: SLParams,
    /// GraphCON uses `α = damping()` and `γ = ω₀²`.
    pub harmonic: HarmonicParams,
    /// Natural frequency of the Kuramoto layers.
    pub omega: f64,
    pub dropout: f64,
    pub input_dropout: f64,
    /// Share one set of coupling weights across all layers.
    pub tied: bool,
    pub pooling: Pooling,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            family: ModelFamily::Slgnn,
            coupling: CouplingConfig::default(),
            layers: 4,
            step: StepConfig::default(),
            sl: SLParams::default(),
            harmonic: HarmonicParams::new(0.5, 1.0),
            omega: 1.0,
            dropout: 0.0,
            input_dropout: 0.0,
            tied: false,
            pooling: Pooling::Mean,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn hidden_dim(&self) -> usize {
        self.coupling.hidden_dim
    }

    pub fn dt(&self) -> f64 {
        self.step.dt
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::Config("layers must be >= 1".into()));
        }
        for (name, p) in [("dropout", self.dropout), ("input_dropout", self.input_dropout)] {
            if !(0.0..=0.5).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 0.5], got {p}")));
            }
        }
        if !self.omega.is_finite() {
            return Err(Error::Config("omega must be finite".into()));
        }
        self.coupling.validate()?;
        self.step.validate()?;
        match self.family {
            ModelFamily::Slgnn => self.sl.validate()?,
            ModelFamily::Graphcon => self.harmonic.validate()?,
            _ => {}
        }
        Ok(())
    }

    fn layer_prefix(&self, layer: usize) -> String {
        if self.tied {
            "layers.".to_string()
        } else {
            format!("layer{layer:03}.")
        }
    }

    /// Every parameter name with its shape, in a stable order.
    pub fn param_shapes(&self, input_dim: usize, output_dim: usize) -> Vec<(String, (usize, usize))> {
        let h = self.hidden_dim();
        let mut shapes = Vec::new();
        match self.family {
            ModelFamily::Slgnn => {
                shapes.push(("enc.w_re".to_string(), (input_dim, h)));
                shapes.push(("enc.w_im".to_string(), (input_dim, h)));
                shapes.push(("enc.b_re".to_string(), (1, h)));
                shapes.push(("enc.b_im".to_string(), (1, h)));
            }
            ModelFamily::Kuramoto => {
                shapes.push(("enc.w".to_string(), (input_dim, 2 * h)));
                shapes.push(("enc.b".to_string(), (1, 2 * h)));
            }
            _ => {
                shapes.push(("enc.w".to_string(), (input_dim, h)));
                shapes.push(("enc.b".to_string(), (1, h)));
            }
        }
        let layer_count = if self.tied { 1 } else { self.layers };
        for layer in 0..layer_count {
            let prefix = self.layer_prefix(layer);
            for (name, shape) in self.coupling.param_shapes(self.family.planes()) {
                shapes.push((format!("{prefix}{name}"), shape));
            }
        }
        shapes.push(("dec.w".to_string(), (self.decoder_width(), output_dim)));
        shapes.push(("dec.b".to_string(), (1, output_dim)));
        shapes
    }

    /// Width of the representation the decoder sees.
    pub fn decoder_width(&self) -> usize {
        match self.family {
            ModelFamily::Kuramoto => 2 * self.hidden_dim(),
            _ => self.hidden_dim(),
        }
    }
}

/// Named parameter matrices, ordered by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub values: BTreeMap<String, Matrix>,
}

impl ParamStore {
    /// Uniform Glorot initialization of weights, zero biases.
    pub fn glorot(shapes: &[(String, (usize, usize))], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = BTreeMap::new();
        for (name, (rows, cols)) in shapes {
            let is_bias = name.rsplit('.').next().is_some_and(|leaf| leaf.starts_with('b'));
            let m = if is_bias {
                Matrix::zeros(*rows, *cols)
            } else {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                let data = (0..rows * cols)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Matrix::from_vec(*rows, *cols, data).expect("shape matches data")
            };
            values.insert(name.clone(), m);
        }
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.values.keys().cloned().collect()
    }

    pub fn get(&self, name: &str) -> Option<&Matrix> {
        self.values.get(name)
    }

    pub fn num_scalars(&self) -> usize {
        self.values.values().map(Matrix::len).sum()
    }

    pub fn leaves<'t>(&self, tape: &'t Tape) -> BTreeMap<String, Tensor<'t>> {
        self.values
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect()
    }

    pub fn constants<'t>(&self, tape: &'t Tape) -> BTreeMap<String, Tensor<'t>> {
        self.values
            .iter()
            .map(|(k, v)| (k.clone(), tape.constant(v.clone())))
            .collect()
    }

    /// Frobenius norms of the parameters whose name starts with `prefix`.
    pub fn norm_of(&self, prefix: &str) -> f64 {
        self.values
            .iter()
            .filter(|(k, _)| k.starts_with(prefix))
            .map(|(_, v)| v.dot(v))
            .sum::<f64>()
            .sqrt()
    }
}

/// Graph views, features and (for graph-level tasks) membership prepared
/// once for repeated forward passes.
#[derive(Clone, Debug)]
pub struct ModelInput {
    pub graphs: CouplingGraphs,
    pub features: Matrix,
    pub membership: Option<(Arc<[usize]>, usize)>,
}

impl ModelInput {
    pub fn new(graph: &SparseGraph, features: Matrix, membership: Option<(Arc<[usize]>, usize)>) -> Result<Self> {
        if features.rows() != graph.n() {
            return Err(Error::Dimension {
                op: "model input",
                left: (graph.n(), features.cols()),
                right: features.shape(),
            });
        }
        Ok(Self {
            graphs: CouplingGraphs::new(graph)?,
            features,
            membership,
        })
    }

    pub fn from_bundle(bundle: &DatasetBundle) -> Result<Self> {
        let membership = if bundle.task.is_graph_level() {
            let m = bundle
                .membership
                .clone()
                .ok_or_else(|| Error::Input("graph-level task without membership".into()))?;
            Some((m, bundle.num_graphs()))
        } else {
            None
        };
        Self::new(&bundle.graph, bundle.features.clone(), membership)
    }

    pub fn n(&self) -> usize {
        self.features.rows()
    }
}

/// Training mode draws dropout masks from the given seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Eval,
    Train { seed: u64 },
}

pub struct ForwardOutput<'t> {
    /// Per-node outputs, or per-graph outputs after readout.
    pub output: Tensor<'t>,
    /// Representation fed to the decoder (before readout).
    pub features: Tensor<'t>,
    /// State planes after each layer, index 0 being the encoding.
    pub states: Vec<Vec<Matrix>>,
    pub stats: SolveStats,
}

/// Inverted dropout mask with entries `0` or `1/(1-p)`.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - p);
    let data = (0..rows * cols)
        .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    Matrix::from_vec(rows, cols, data).expect("shape matches data")
}

pub fn dropout_apply<'t>(x: &Tensor<'t>, p: f64, training: bool, seed: u64) -> Result<Tensor<'t>> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Contract(format!("dropout probability {p} not in [0, 1)")));
    }
    if !training || p == 0.0 {
        return Ok(*x);
    }
    let (rows, cols) = x.shape();
    let mask = x.tape().constant(dropout_mask(rows, cols, p, seed));
    x.hadamard(&mask)
}

fn site_seed(seed: u64, site: u64) -> u64 {
    seed ^ site.wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Mean or max over the nodes of each graph.
pub fn readout<'t>(x: &Tensor<'t>, membership: &Arc<[usize]>, groups: usize, pooling: Pooling) -> Result<Tensor<'t>> {
    if membership.len() != x.shape().0 {
        return Err(Error::Pooling(format!(
            "membership covers {} nodes, features have {}",
            membership.len(),
            x.shape().0
        )));
    }
    match pooling {
        Pooling::Mean => x.group_mean(Arc::clone(membership), groups),
        Pooling::Max => x.group_max(Arc::clone(membership), groups),
    }
}

fn param<'t>(params: &BTreeMap<String, Tensor<'t>>, name: &str) -> Result<Tensor<'t>> {
    params
        .get(name)
        .copied()
        .ok_or_else(|| Error::Contract(format!("missing model parameter `{name}`")))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub input_dim: usize,
    pub output_dim: usize,
    pub params: ParamStore,
}

impl Model {
    pub fn new(config: ModelConfig, input_dim: usize, output_dim: usize) -> Result<Self> {
        config.validate()?;
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::Config("input and output widths must be >= 1".into()));
        }
        let params = ParamStore::glorot(&config.param_shapes(input_dim, output_dim), config.seed);
        Ok(Self {
            config,
            input_dim,
            output_dim,
            params,
        })
    }

    /// The initial state planes.
    pub fn encode<'t>(&self, params: &BTreeMap<String, Tensor<'t>>, x0: &Tensor<'t>) -> Result<Vec<Tensor<'t>>> {
        let affine = |w: &str, b: &str| -> Result<Tensor<'t>> {
            x0.matmul(&param(params, w)?)?.add_row(&param(params, b)?)
        };
        match self.config.family {
            ModelFamily::Slgnn => Ok(vec![affine("enc.w_re", "enc.b_re")?, affine("enc.w_im", "enc.b_im")?]),
            ModelFamily::Kuramoto => {
                let h = self.config.hidden_dim();
                let raw = affine("enc.w", "enc.b")?;
                let phi = raw.slice_cols(h, 2 * h)?.atan2(&raw.slice_cols(0, h)?)?;
                let z = ComplexMatrix::unit(&phi);
                Ok(vec![z.re, z.im])
            }
            ModelFamily::Graphcon => {
                let x = affine("enc.w", "enc.b")?;
                let (n, h) = x.shape();
                Ok(vec![x, x0.tape().constant(Matrix::zeros(n, h))])
            }
            ModelFamily::Baseline => Ok(vec![affine("enc.w", "enc.b")?]),
        }
    }

    /// Representation passed to the decoder.
    pub fn decoder_input<'t>(&self, state: &[Tensor<'t>]) -> Result<Tensor<'t>> {
        match self.config.family {
            ModelFamily::Kuramoto => Tensor::concat_cols(state),
            _ => Ok(state[0]),
        }
    }

    fn layer_params<'t>(&self, params: &BTreeMap<String, Tensor<'t>>, layer: usize) -> LayerParams<'t> {
        let prefix = self.config.layer_prefix(layer);
        params
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(&prefix).map(|rest| (rest.to_string(), *v)))
            .collect()
    }

    fn layer<'t>(
        &self,
        state: Vec<Tensor<'t>>,
        lp: &LayerParams<'t>,
        graphs: &CouplingGraphs,
        stats: &mut SolveStats,
    ) -> Result<Vec<Tensor<'t>>> {
        let cfg = &self.config;
        let dt = cfg.dt();
        let tape = state[0].tape();
        match cfg.family {
            ModelFamily::Baseline => {
                let f = apply_coupling(&cfg.coupling, &state, graphs, lp)?;
                Ok(vec![euler_skip_step(&state[0], &f[0], dt)?])
            }
            ModelFamily::Graphcon => {
                let f = apply_coupling(&cfg.coupling, &state[..1], graphs, lp)?;
                let alpha = tape.scalar(cfg.harmonic.damping());
                let gamma = tape.scalar(cfg.harmonic.omega0 * cfg.harmonic.omega0);
                let (x, y) = symplectic_step(&state[0], &state[1], &f[0], &alpha, &gamma, dt)?;
                Ok(vec![x, y])
            }
            ModelFamily::Kuramoto => {
                let f = apply_coupling(&cfg.coupling, &state, graphs, lp)?;
                let z = ComplexMatrix::new(state[0], state[1])?;
                let fz = ComplexMatrix::new(f[0], f[1])?;
                let next = kuramoto_circle_step(&z, &fz, &tape.scalar(cfg.omega), dt)?;
                Ok(vec![next.re, next.im])
            }
            ModelFamily::Slgnn => {
                let f = apply_coupling(&cfg.coupling, &state, graphs, lp)?;
                let z = ComplexMatrix::new(state[0], state[1])?;
                let fz = ComplexMatrix::new(f[0], f[1])?;
                let (next, s) = imex_sl_step(&z, &fz, &SlTensors::constant(tape, &cfg.sl), &cfg.step)?;
                stats.merge(&s);
                Ok(vec![next.re, next.im])
            }
        }
    }

    /// Encoder, `L` layers, decoder; graph-level inputs are pooled before
    /// the decoder.
    pub fn forward<'t>(
        &self,
        params: &BTreeMap<String, Tensor<'t>>,
        input: &ModelInput,
        mode: Mode,
    ) -> Result<ForwardOutput<'t>> {
        let tape = params
            .values()
            .next()
            .ok_or_else(|| Error::Contract("empty parameter map".into()))?
            .tape();
        if input.features.cols() != self.input_dim {
            return Err(Error::Dimension {
                op: "forward",
                left: (input.n(), self.input_dim),
                right: input.features.shape(),
            });
        }
        let (training, seed) = match mode {
            Mode::Eval => (false, 0),
            Mode::Train { seed } => (true, seed),
        };
        let x0 = tape.constant(input.features.clone());
        let x0 = dropout_apply(&x0, self.config.input_dropout, training, site_seed(seed, 1))?;
        let mut state = self.encode(params, &x0)?;
        let mut states = vec![state.iter().map(|t| (*t.value()).clone()).collect()];
        let mut stats = SolveStats::default();
        for layer in 0..self.config.layers {
            let lp = self.layer_params(params, layer);
            state = self.layer(state, &lp, &input.graphs, &mut stats)?;
            states.push(state.iter().map(|t| (*t.value()).clone()).collect());
        }
        let features = self.decoder_input(&state)?;
        let mut h = dropout_apply(&features, self.config.dropout, training, site_seed(seed, 2))?;
        if let Some((membership, groups)) = &input.membership {
            h = readout(&h, membership, *groups, self.config.pooling)?;
        }
        let output = h.matmul(&param(params, "dec.w")?)?.add_row(&param(params, "dec.b")?)?;
        Ok(ForwardOutput {
            output,
            features,
            states,
            stats,
        })
    }

    /// Evaluation-mode outputs as a plain matrix.
    pub fn predict(&self, input: &ModelInput) -> Result<Matrix> {
        let tape = Tape::new();
        let params = self.params.constants(&tape);
        let out = self.forward(&params, input, Mode::Eval)?;
        Ok((*out.output.value()).clone())
    }

    /// Writes `model.json` and `params.bin` (little-endian f64) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut bytes = Vec::with_capacity(self.params.num_scalars() * 8);
        let mut index = Vec::new();
        for (name, m) in &self.params.values {
            index.push(ParamEntry {
                name: name.clone(),
                offset: bytes.len() / 8,
                shape: [m.rows(), m.cols()],
            });
            for v in m.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let manifest = CheckpointManifest {
            config: self.config.clone(),
            input_dim: self.input_dim,
            output_dim: self.output_dim,
            params: index,
        };
        fs::write(dir.join("model.json"), serde_json::to_string_pretty(&manifest)?)?;
        fs::write(dir.join("params.bin"), bytes)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: CheckpointManifest = serde_json::from_str(&fs::read_to_string(dir.join("model.json"))?)?;
        let bytes = fs::read(dir.join("params.bin"))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Input("params.bin length is not a multiple of 8".into()));
        }
        let floats: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let mut model = Model::new(manifest.config, manifest.input_dim, manifest.output_dim)?;
        if manifest.params.len() != model.params.len() {
            return Err(Error::Input(format!(
                "checkpoint has {} parameters, model expects {}",
                manifest.params.len(),
                model.params.len()
            )));
        }
        for entry in manifest.params {
            let [rows, cols] = entry.shape;
            let slot = model
                .params
                .values
                .get_mut(&entry.name)
                .ok_or_else(|| Error::Input(format!("unexpected parameter `{}`", entry.name)))?;
            if slot.shape() != (rows, cols) || entry.offset + rows * cols > floats.len() {
                return Err(Error::Input(format!("parameter `{}` has a bad shape or offset", entry.name)));
            }
            *slot = Matrix::from_vec(rows, cols, floats[entry.offset..entry.offset + rows * cols].to_vec())?;
        }
        Ok(model)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    offset: usize,
    shape: [usize; 2],
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct CheckpointManifest {
    config: ModelConfig,
    input_dim: usize,
    output_dim: usize,
    params: Vec<ParamEntry>,
}

/// Finite-difference check of every parameter gradient of `model` under the
/// scalar probe `Σ out ⊙ R` with a fixed pseudo-random `R`.
pub fn gradcheck_model(model: &Model, input: &ModelInput, h: f64, seed: u64) -> Result<GradCheckReport> {
    let names = model.params.names();
    let rows = input.membership.as_ref().map_or(input.n(), |(_, g)| *g);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probe = Matrix::from_vec(
        rows,
        model.output_dim,
        (0..rows * model.output_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )?;
    let values: Vec<Matrix> = names.iter().map(|k| model.params.values[k].clone()).collect();
    check_gradients(
        |tape, leaves| {
            let params: BTreeMap<String, Tensor<'_>> = names.iter().cloned().zip(leaves.iter().copied()).collect();
            let out = model.forward(&params, input, Mode::Eval)?;
            out.output.hadamard(&tape.constant(probe.clone())).map(|t| t.sum())
        },
        &values,
        h,
    )
}
