use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SparseGraph;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "node-class")]
    NodeClass,
    #[serde(rename = "graph-class")]
    GraphClass,
    #[serde(rename = "graph-reg")]
    GraphReg,
}

impl Task {
    pub fn is_graph_level(self) -> bool {
        !matches!(self, Task::NodeClass)
    }

    pub fn is_classification(self) -> bool {
        !matches!(self, Task::GraphReg)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::NodeClass => "node-class",
            Task::GraphClass => "graph-class",
            Task::GraphReg => "graph-reg",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "node-class" => Ok(Task::NodeClass),
            "graph-class" => Ok(Task::GraphClass),
            "graph-reg" => Ok(Task::GraphReg),
            other => Err(Error::Input(format!("unknown task {other:?}"))),
        }
    }
}

/// Supervision targets: class labels or real regression targets, one per
/// node (node tasks) or per graph (graph tasks).
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    Classes { labels: Vec<usize>, num_classes: usize },
    Regression(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Regression(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Width of the model output: class count, or 1 for regression.
    pub fn output_dim(&self) -> usize {
        match self {
            Targets::Classes { num_classes, .. } => *num_classes,
            Targets::Regression(_) => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
    pub seed: u64,
}

impl SplitMasks {
    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    fn indices(mask: &[bool]) -> Vec<usize> {
        mask.iter().enumerate().filter_map(|(i, &m)| m.then_some(i)).collect()
    }

    pub fn train_idx(&self) -> Vec<usize> {
        Self::indices(&self.train)
    }

    pub fn val_idx(&self) -> Vec<usize> {
        Self::indices(&self.val)
    }

    pub fn test_idx(&self) -> Vec<usize> {
        Self::indices(&self.test)
    }

    pub fn is_disjoint(&self) -> bool {
        (0..self.len()).all(|i| {
            (self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8) <= 1
        })
    }

    fn from_parts(n: usize, train: &[usize], val: &[usize], test: &[usize], seed: u64) -> Self {
        let mut m = SplitMasks {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
            seed,
        };
        train.iter().for_each(|&i| m.train[i] = true);
        val.iter().for_each(|&i| m.val[i] = true);
        test.iter().for_each(|&i| m.test[i] = true);
        m
    }
}

#[derive(Clone, Debug)]
pub struct DatasetBundle {
    /// Raw unit-weight adjacency without self-loops.
    pub graph: SparseGraph,
    pub features: Matrix,
    pub targets: Targets,
    pub task: Task,
    /// Node to graph id, for graph-level tasks.
    pub membership: Option<Arc<[usize]>>,
    /// Predefined splits read from `masks.csv`, if present.
    pub masks: Vec<SplitMasks>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub n: usize,
    pub d: usize,
    pub task: Task,
    pub num_classes: usize,
}

impl DatasetBundle {
    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn num_graphs(&self) -> usize {
        match &self.membership {
            Some(m) => m.iter().max().map_or(0, |&g| g + 1),
            None => 1,
        }
    }

    /// Checks the cross-field invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.graph.n();
        if self.features.rows() != n {
            return Err(Error::Input(format!(
                "{} feature rows for {n} nodes",
                self.features.rows()
            )));
        }
        let expected = if self.task.is_graph_level() {
            let m = self
                .membership
                .as_ref()
                .ok_or_else(|| Error::Input("graph-level task without membership".into()))?;
            if m.len() != n {
                return Err(Error::Input(format!("membership has {} entries for {n} nodes", m.len())));
            }
            self.num_graphs()
        } else {
            n
        };
        if self.targets.len() != expected {
            return Err(Error::Input(format!(
                "{} targets, expected {expected}",
                self.targets.len()
            )));
        }
        match (&self.targets, self.task.is_classification()) {
            (Targets::Classes { labels, num_classes }, true) => {
                if let Some(&bad) = labels.iter().find(|&&l| l >= *num_classes) {
                    return Err(Error::Input(format!("label {bad} not in [0, {num_classes})")));
                }
            }
            (Targets::Regression(_), false) => {}
            _ => return Err(Error::Input("targets do not match the task".into())),
        }
        for m in &self.masks {
            if m.len() != expected || !m.is_disjoint() {
                return Err(Error::Input("predefined split masks are malformed".into()));
            }
        }
        Ok(())
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            n: self.n(),
            d: self.features.cols(),
            task: self.task,
            num_classes: match &self.targets {
                Targets::Classes { num_classes, .. } => *num_classes,
                Targets::Regression(_) => 0,
            },
        }
    }

    /// Writes the CSV bundle: `edges.csv`, `features.csv`, `labels.csv`,
    /// `manifest.json`, plus `graphs.csv` / `masks.csv` when present.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut edges = String::new();
        for (a, b) in self.graph.edge_list() {
            edges.push_str(&format!("{a},{b}\n"));
        }
        fs::write(dir.join("edges.csv"), edges)?;

        let mut feats = String::new();
        for i in 0..self.features.rows() {
            let row: Vec<String> = self.features.row(i).iter().map(|v| format!("{v:?}")).collect();
            feats.push_str(&row.join(","));
            feats.push('\n');
        }
        fs::write(dir.join("features.csv"), feats)?;

        let labels: String = match &self.targets {
            Targets::Classes { labels, .. } => labels.iter().map(|l| format!("{l}\n")).collect(),
            Targets::Regression(v) => v.iter().map(|x| format!("{x:?}\n")).collect(),
        };
        fs::write(dir.join("labels.csv"), labels)?;

        if let Some(m) = &self.membership {
            let s: String = m.iter().map(|g| format!("{g}\n")).collect();
            fs::write(dir.join("graphs.csv"), s)?;
        }
        if !self.masks.is_empty() {
            let mut s = String::new();
            for i in 0..self.masks[0].len() {
                let row: Vec<&str> = self
                    .masks
                    .iter()
                    .map(|m| {
                        if m.train[i] {
                            "train"
                        } else if m.val[i] {
                            "val"
                        } else if m.test[i] {
                            "test"
                        } else {
                            "none"
                        }
                    })
                    .collect();
                s.push_str(&row.join(","));
                s.push('\n');
            }
            fs::write(dir.join("masks.csv"), s)?;
        }
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&self.manifest())?,
        )?;
        Ok(())
    }

    /// Extracts the graphs in `graph_ids` as a standalone batch. Graph ids
    /// are renumbered in the given order; node order within each graph is
    /// preserved.
    pub fn graph_batch(&self, graph_ids: &[usize]) -> Result<DatasetBundle> {
        let membership = self
            .membership
            .as_ref()
            .ok_or_else(|| Error::Input("graph_batch on a node-level bundle".into()))?;
        let mut nodes = Vec::new();
        let mut new_membership = Vec::new();
        for (k, &gid) in graph_ids.iter().enumerate() {
            for (v, &g) in membership.iter().enumerate() {
                if g == gid {
                    nodes.push(v);
                    new_membership.push(k);
                }
            }
        }
        let graph = self.graph.induced(&nodes);
        let mut features = Matrix::zeros(nodes.len(), self.features.cols());
        for (k, &v) in nodes.iter().enumerate() {
            features.row_mut(k).copy_from_slice(self.features.row(v));
        }
        let targets = match &self.targets {
            Targets::Classes { labels, num_classes } => Targets::Classes {
                labels: graph_ids.iter().map(|&g| labels[g]).collect(),
                num_classes: *num_classes,
            },
            Targets::Regression(v) => Targets::Regression(graph_ids.iter().map(|&g| v[g]).collect()),
        };
        Ok(DatasetBundle {
            graph,
            features,
            targets,
            task: self.task,
            membership: Some(new_membership.into()),
            masks: Vec::new(),
        })
    }
}

fn parse_err(file: &str, line: usize, detail: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_string(),
        line,
        detail: detail.into(),
    }
}

fn read_lines(dir: &Path, name: &str) -> Result<Vec<(usize, String)>> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| {
        parse_err(name, 0, format!("cannot read {}: {e}", path.display()))
    })?;
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect())
}

fn parse_edges(file: &str, lines: Vec<(usize, String)>, n: Option<usize>) -> Result<Vec<(usize, usize)>> {
    let mut edges = Vec::new();
    for (line, text) in lines {
        let mut it = text.split(',').map(str::trim);
        let (a, b) = (it.next(), it.next());
        let parsed = a.zip(b).and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)));
        match (parsed, n) {
            (Some((a, b)), Some(n)) if a >= n || b >= n => {
                return Err(parse_err(file, line, format!("dangling edge ({a}, {b}) for n = {n}")))
            }
            (Some(e), _) => edges.push(e),
            (None, _) if line == 1 => continue, // header
            (None, _) => return Err(parse_err(file, line, format!("expected src,dst, got {text:?}"))),
        }
    }
    Ok(edges)
}

/// Reads a standalone `src,dst` edge list; the node count is one past the
/// largest id.
pub fn read_edge_list(path: &Path) -> Result<SparseGraph> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| parse_err(&name, 0, e.to_string()))?;
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim().to_string()))
        .filter(|(_, l)| !l.is_empty())
        .collect();
    let edges = parse_edges(&name, lines, None)?;
    let n = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    SparseGraph::build(&edges, n, false)
}

/// Loads and validates a CSV bundle directory.
pub fn load_bundle(dir: &Path) -> Result<DatasetBundle> {
    let manifest_text = fs::read_to_string(dir.join("manifest.json"))
        .map_err(|e| parse_err("manifest.json", 0, e.to_string()))?;
    let manifest: Manifest = serde_json::from_str(&manifest_text)
        .map_err(|e| parse_err("manifest.json", e.line(), e.to_string()))?;
    let n = manifest.n;

    let edges = parse_edges("edges.csv", read_lines(dir, "edges.csv")?, Some(n))?;
    let graph = SparseGraph::build(&edges, n, false)?;

    let feature_lines = read_lines(dir, "features.csv")?;
    if feature_lines.len() != n {
        return Err(parse_err(
            "features.csv",
            feature_lines.len(),
            format!("{} rows for n = {n}", feature_lines.len()),
        ));
    }
    let mut feats = Vec::with_capacity(n * manifest.d);
    for (line, text) in &feature_lines {
        let row: std::result::Result<Vec<f64>, _> = text.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| parse_err("features.csv", *line, e.to_string()))?;
        if row.len() != manifest.d {
            return Err(parse_err("features.csv", *line, format!("{} columns, expected {}", row.len(), manifest.d)));
        }
        feats.extend(row);
    }
    let features = Matrix::from_vec(n, manifest.d, feats)?;

    let membership: Option<Arc<[usize]>> = if manifest.task.is_graph_level() {
        let mut m = Vec::with_capacity(n);
        for (line, text) in read_lines(dir, "graphs.csv")? {
            m.push(text.parse::<usize>().map_err(|e| parse_err("graphs.csv", line, e.to_string()))?);
        }
        if m.len() != n {
            return Err(parse_err("graphs.csv", m.len(), format!("{} rows for n = {n}", m.len())));
        }
        Some(m.into())
    } else {
        None
    };

    let label_lines = read_lines(dir, "labels.csv")?;
    let targets = if manifest.task.is_classification() {
        let mut labels = Vec::with_capacity(label_lines.len());
        for (line, text) in &label_lines {
            let l = text
                .parse::<usize>()
                .map_err(|_| parse_err("labels.csv", *line, format!("non-integer label {text:?}")))?;
            if l >= manifest.num_classes {
                return Err(parse_err("labels.csv", *line, format!("label {l} not in [0, {})", manifest.num_classes)));
            }
            labels.push(l);
        }
        Targets::Classes {
            labels,
            num_classes: manifest.num_classes,
        }
    } else {
        let mut v = Vec::with_capacity(label_lines.len());
        for (line, text) in &label_lines {
            v.push(text.parse::<f64>().map_err(|e| parse_err("labels.csv", *line, e.to_string()))?);
        }
        Targets::Regression(v)
    };

    let mut masks = Vec::new();
    if dir.join("masks.csv").exists() {
        let lines = read_lines(dir, "masks.csv")?;
        let cols = lines.first().map_or(0, |(_, t)| t.split(',').count());
        let len = lines.len();
        masks = (0..cols)
            .map(|_| SplitMasks {
                train: vec![false; len],
                val: vec![false; len],
                test: vec![false; len],
                seed: 0,
            })
            .collect();
        for (row, (line, text)) in lines.iter().enumerate() {
            let tokens: Vec<&str> = text.split(',').map(str::trim).collect();
            if tokens.len() != cols {
                return Err(parse_err("masks.csv", *line, "ragged row"));
            }
            for (m, tok) in masks.iter_mut().zip(tokens) {
                match tok {
                    "train" => m.train[row] = true,
                    "val" => m.val[row] = true,
                    "test" => m.test[row] = true,
                    "none" => {}
                    other => return Err(parse_err("masks.csv", *line, format!("unknown split {other:?}"))),
                }
            }
        }
    }

    let bundle = DatasetBundle {
        graph,
        features,
        targets,
        task: manifest.task,
        membership,
        masks,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Per-class fixed training count, a fixed validation count drawn from the
/// remainder, and everything else as test.
pub fn make_splits(
    labels: &[usize],
    num_classes: usize,
    train_per_class: usize,
    val_count: usize,
    seed: u64,
) -> Result<SplitMasks> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut rest = Vec::new();
    for class in 0..num_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < train_per_class {
            return Err(Error::Stratification {
                class,
                have: members.len(),
                need: train_per_class,
            });
        }
        members.shuffle(&mut rng);
        train.extend_from_slice(&members[..train_per_class]);
        rest.extend_from_slice(&members[train_per_class..]);
    }
    rest.sort_unstable();
    rest.shuffle(&mut rng);
    if rest.len() < val_count {
        return Err(Error::Input(format!(
            "only {} nodes left for a validation set of {val_count}",
            rest.len()
        )));
    }
    let (val, test) = rest.split_at(val_count);
    Ok(SplitMasks::from_parts(labels.len(), &train, val, test, seed))
}

/// 80:10:10 split of graph indices.
pub fn make_graph_splits(num_graphs: usize, seed: u64) -> SplitMasks {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids: Vec<usize> = (0..num_graphs).collect();
    ids.shuffle(&mut rng);
    let n_train = num_graphs * 8 / 10;
    let n_val = num_graphs / 10;
    let (train, rest) = ids.split_at(n_train);
    let (val, test) = rest.split_at(n_val);
    SplitMasks::from_parts(num_graphs, train, val, test, seed)
}

/// Stochastic block model with block-indicator features plus Gaussian noise.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SbmConfig {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_noise: f64,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            blocks: 2,
            nodes_per_block: 50,
            p_in: 0.2,
            p_out: 0.02,
            feature_noise: 0.5,
            seed: 0,
        }
    }
}

pub fn sbm(cfg: &SbmConfig) -> Result<DatasetBundle> {
    let n = cfg.blocks * cfg.nodes_per_block;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let block = |i: usize| i / cfg.nodes_per_block;
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let p = if block(i) == block(j) { cfg.p_in } else { cfg.p_out };
            if rng.random::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let graph = SparseGraph::build(&edges, n, false)?;
    let noise = Normal::new(0.0, cfg.feature_noise)
        .map_err(|e| Error::Input(format!("feature noise: {e}")))?;
    let mut features = Matrix::zeros(n, cfg.blocks);
    for i in 0..n {
        for c in 0..cfg.blocks {
            let base = if block(i) == c { 1.0 } else { 0.0 };
            features.set(i, c, base + noise.sample(&mut rng));
        }
    }
    Ok(DatasetBundle {
        graph,
        features,
        targets: Targets::Classes {
            labels: (0..n).map(block).collect(),
            num_classes: cfg.blocks,
        },
        task: Task::NodeClass,
        membership: None,
        masks: Vec::new(),
    })
}

/// Small collection of rings and stars (class = shape) with a constant
/// plus degree feature. For regression the target is the edge density.
pub fn ring_star_collection(count: usize, task: Task, seed: u64) -> Result<DatasetBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    let mut membership = Vec::new();
    let mut labels = Vec::new();
    let mut density = Vec::new();
    let mut offset = 0;
    for g in 0..count {
        let size = rng.random_range(4..9usize);
        let is_star = rng.random::<bool>();
        let mut local = 0;
        for k in 1..size {
            if is_star {
                edges.push((offset, offset + k));
            } else {
                edges.push((offset + k - 1, offset + k));
            }
            local += 1;
        }
        if !is_star {
            edges.push((offset + size - 1, offset));
            local += 1;
        }
        membership.extend(std::iter::repeat_n(g, size));
        labels.push(is_star as usize);
        density.push(2.0 * local as f64 / (size * (size - 1)) as f64);
        offset += size;
    }
    let graph = SparseGraph::build(&edges, offset, false)?;
    let mut features = Matrix::zeros(offset, 2);
    for i in 0..offset {
        features.set(i, 0, 1.0);
        features.set(i, 1, graph.degree(i) as f64 / 4.0);
    }
    let targets = match task {
        Task::GraphClass => Targets::Classes {
            labels,
            num_classes: 2,
        },
        Task::GraphReg => Targets::Regression(density),
        Task::NodeClass => return Err(Error::Input("ring_star_collection is graph-level".into())),
    };
    Ok(DatasetBundle {
        graph,
        features,
        targets,
        task,
        membership: Some(membership.into()),
        masks: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_node_bundle() -> DatasetBundle {
        DatasetBundle {
            graph: SparseGraph::build(&[(0, 1)], 2, false).unwrap(),
            features: Matrix::from_rows(&[vec![0.5, -1.0], vec![2.0, 0.25]]).unwrap(),
            targets: Targets::Classes {
                labels: vec![0, 1],
                num_classes: 2,
            },
            task: Task::NodeClass,
            membership: None,
            masks: Vec::new(),
        }
    }

    #[test]
    fn two_node_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = two_node_bundle();
        b.write(dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.graph, b.graph);
        assert_eq!(back.features, b.features);
        assert_eq!(back.targets, b.targets);
        let again = tempfile::tempdir().unwrap();
        back.write(again.path()).unwrap();
        for f in ["edges.csv", "features.csv", "labels.csv", "manifest.json"] {
            assert_eq!(
                fs::read(dir.path().join(f)).unwrap(),
                fs::read(again.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn missing_labels_is_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        two_node_bundle().write(dir.path()).unwrap();
        fs::remove_file(dir.path().join("labels.csv")).unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn bad_label_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        two_node_bundle().write(dir.path()).unwrap();
        fs::write(dir.path().join("labels.csv"), "0\nx\n").unwrap();
        match load_bundle(dir.path()) {
            Err(Error::Parse { file, line, .. }) => {
                assert_eq!(file, "labels.csv");
                assert_eq!(line, 2);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn dangling_edge_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        two_node_bundle().write(dir.path()).unwrap();
        fs::write(dir.path().join("edges.csv"), "0,1\n1,5\n").unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn feature_row_count_checked() {
        let dir = tempfile::tempdir().unwrap();
        two_node_bundle().write(dir.path()).unwrap();
        fs::write(dir.path().join("features.csv"), "1.0,2.0\n").unwrap();
        assert!(matches!(load_bundle(dir.path()), Err(Error::Parse { .. })));
    }

    #[test]
    fn sbm_output_loads() {
        let b = sbm(&SbmConfig::default()).unwrap();
        b.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.graph, b.graph);
        assert_eq!(back.features, b.features);
        assert_eq!(back.targets, b.targets);
    }

    #[test]
    fn graph_collection_round_trip_with_masks() {
        let mut b = ring_star_collection(12, Task::GraphReg, 3).unwrap();
        b.masks.push(make_graph_splits(12, 1));
        b.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.write(dir.path()).unwrap();
        let back = load_bundle(dir.path()).unwrap();
        assert_eq!(back.membership, b.membership);
        assert_eq!(back.targets, b.targets);
        assert_eq!(back.masks[0].train, b.masks[0].train);
    }

    #[test]
    fn split_sizes() {
        let labels: Vec<usize> = (0..100).map(|i| i / 50).collect();
        let m = make_splits(&labels, 2, 20, 20, 7).unwrap();
        assert_eq!(m.train_idx().len(), 40);
        assert_eq!(m.val_idx().len(), 20);
        assert_eq!(m.test_idx().len(), 40);
        assert_eq!(m, make_splits(&labels, 2, 20, 20, 7).unwrap());
        let per_class = m.train_idx().iter().filter(|&&i| labels[i] == 0).count();
        assert_eq!(per_class, 20);
    }

    #[test]
    fn small_class_is_named() {
        let labels = vec![0, 0, 0, 1];
        assert!(matches!(
            make_splits(&labels, 2, 2, 0, 0),
            Err(Error::Stratification { class: 1, have: 1, need: 2 })
        ));
    }

    #[test]
    fn graph_batch_preserves_targets() {
        let b = ring_star_collection(5, Task::GraphClass, 9).unwrap();
        let batch = b.graph_batch(&[3, 1]).unwrap();
        batch.validate().unwrap();
        let Targets::Classes { labels, .. } = &b.targets else { unreachable!() };
        let Targets::Classes { labels: bl, .. } = &batch.targets else { unreachable!() };
        assert_eq!(bl, &vec![labels[3], labels[1]]);
        assert_eq!(batch.num_graphs(), 2);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn splits_are_disjoint(
            classes in 1usize..5,
            per in 3usize..20,
            tpc in 0usize..3,
            val in 0usize..5,
            seed in any::<u64>(),
        ) {
            let labels: Vec<usize> = (0..classes * per).map(|i| i % classes).collect();
            if classes * (per - tpc) < val {
                prop_assert!(make_splits(&labels, classes, tpc, val, seed).is_err());
                return Ok(());
            }
            let m = make_splits(&labels, classes, tpc, val, seed).unwrap();
            prop_assert!(m.is_disjoint());
            prop_assert_eq!(m.train_idx().len(), tpc * classes);
            prop_assert_eq!(m.val_idx().len(), val);
            prop_assert_eq!(m.test_idx().len(), classes * per - tpc * classes - val);
        }
    }
}
