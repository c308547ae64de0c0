//! On-disk formats: dataset manifests, feature and label containers, attack
//! results and model checkpoints.
//!
//! Matrices are stored as text: a `rows cols dtype` header (`dtype` is `u8`
//! or `f64`) followed by one whitespace-separated line per row. `f64` values
//! use the shortest representation that parses back to the same number.
//! Any file whose name ends in `.gz` is transparently gzip-compressed.
//! Every write goes to a temporary file in the target directory that is
//! renamed into place once complete.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use ndarray::{concatenate, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::attack::{AttackResult, CellChange, FeatureMode};
use crate::error::{Error, Result};
use crate::hgnn::{LabelData, ModelParams, SeededRng};
use crate::hypergraph::FeatureMatrix;

const ATTACK_MAGIC: &str = "mghga-attack v1";
const CHECKPOINT_MAGIC: &str = "mghga-checkpoint v1";

/// Element type recorded in a matrix header.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueType {
    U8,
    F64,
}

impl ValueType {
    fn tag(self) -> &'static str {
        match self {
            ValueType::U8 => "u8",
            ValueType::F64 => "f64",
        }
    }

    /// `U8` for binary data, `F64` otherwise.
    pub fn for_values(m: &Array2<f64>) -> Self {
        if m.iter().all(|&v| v == 0.0 || v == 1.0) {
            ValueType::U8
        } else {
            ValueType::F64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    /// Feature blocks, concatenated column-wise in this order. Paths are
    /// relative to the manifest.
    pub feature_files: Vec<String>,
    pub label_file: String,
    pub feature_mode: FeatureMode,
    pub n_nodes: usize,
    pub n_features: usize,
    pub n_classes: usize,
    #[serde(default)]
    pub preprocessing: String,
}

/// A loaded dataset before any train/test split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub feature_mode: FeatureMode,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: FeatureMatrix,
        labels: Vec<usize>,
        n_classes: usize,
        feature_mode: FeatureMode,
    ) -> Result<Self> {
        if labels.len() != features.n_nodes() {
            return Err(Error::Dimension(format!(
                "{} labels for {} nodes",
                labels.len(),
                features.n_nodes()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if feature_mode == FeatureMode::Discrete && !features.is_binary() {
            return Err(Error::InvalidInput(
                "discrete datasets must have binary features".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            n_classes,
            feature_mode,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.features.n_nodes()
    }

    /// Restriction to the given nodes, in the given order.
    pub fn select_nodes(&self, nodes: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(nodes)?;
        let labels = nodes.iter().map(|&v| self.labels[v]).collect();
        Ok(Self {
            name: self.name.clone(),
            features,
            labels,
            n_classes: self.n_classes,
            feature_mode: self.feature_mode,
        })
    }

    /// Uniformly random `n` nodes, kept in their original order.
    pub fn subsample(&self, n: usize, seed: u64) -> Result<Self> {
        if n == 0 || n > self.n_nodes() {
            return Err(Error::Config(format!(
                "cannot subsample {n} of {} nodes",
                self.n_nodes()
            )));
        }
        let mut rng = SeededRng::seed_from_u64(seed);
        let mut nodes = rand::seq::index::sample(&mut rng, self.n_nodes(), n).into_vec();
        nodes.sort_unstable();
        self.select_nodes(&nodes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.2,
            test_fraction: 0.8,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f > 0.0 && f <= 1.0;
        if !ok(self.train_fraction) || !ok(self.test_fraction) {
            return Err(Error::Config(format!(
                "split fractions must lie in (0, 1], got {} and {}",
                self.train_fraction, self.test_fraction
            )));
        }
        if self.train_fraction + self.test_fraction > 1.0 + 1e-9 {
            return Err(Error::Config(format!(
                "split fractions {} + {} exceed 1",
                self.train_fraction, self.test_fraction
            )));
        }
        Ok(())
    }
}

/// Shuffles the nodes and marks the first `⌊train·n⌋` for training and the
/// next `⌊test·n⌋` for testing.
pub fn split_masks(n_nodes: usize, spec: &SplitSpec) -> Result<(Vec<bool>, Vec<bool>)> {
    spec.validate()?;
    let n = n_nodes;
    let count = |f: f64| (f * n as f64 + 1e-9).floor() as usize;
    let n_train = count(spec.train_fraction);
    let n_test = count(spec.test_fraction).min(n - n_train);
    if n_train == 0 || n_test == 0 {
        return Err(Error::Config(format!(
            "split of {n} nodes leaves an empty train or test set"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut SeededRng::seed_from_u64(spec.seed));
    let mut train = vec![false; n];
    let mut test = vec![false; n];
    for &v in &order[..n_train] {
        train[v] = true;
    }
    for &v in &order[n_train..n_train + n_test] {
        test[v] = true;
    }
    Ok((train, test))
}

/// Labels with masks from [`split_masks`].
pub fn make_split(labels: &[usize], n_classes: usize, spec: &SplitSpec) -> Result<LabelData> {
    let (train, test) = split_masks(labels.len(), spec)?;
    LabelData::new(labels.to_vec(), n_classes, train, test)
}

/// Atomically replaces `path` with `text`.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

fn open_reader(path: &Path) -> Result<LineReader> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let inner: Box<dyn Read> = if is_gz(path) {
        Box::new(GzDecoder::new(file))
    } else {
        Box::new(file)
    };
    Ok(LineReader {
        inner: BufReader::new(inner),
        path: path.to_path_buf(),
        line: 0,
        buf: String::new(),
    })
}

/// Writes through `body` into a temporary sibling of `path`, then renames.
fn write_atomic(path: &Path, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    {
        let file = tmp.as_file().try_clone().map_err(|e| Error::io(path, e))?;
        let mut buffered = BufWriter::new(file);
        if is_gz(path) {
            let mut gz = GzEncoder::new(buffered, Compression::default());
            body(&mut gz).map_err(|e| Error::io(path, e))?;
            buffered = gz.finish().map_err(|e| Error::io(path, e))?;
        } else {
            body(&mut buffered).map_err(|e| Error::io(path, e))?;
        }
        buffered.flush().map_err(|e| Error::io(path, e))?;
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let perms = std::fs::Permissions::from_mode(0o644);
        std::fs::set_permissions(tmp.path(), perms).map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

struct LineReader {
    inner: BufReader<Box<dyn Read>>,
    path: PathBuf,
    line: usize,
    buf: String,
}

impl LineReader {
    fn parse_err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self) -> Result<Option<String>> {
        self.buf.clear();
        let read = self
            .inner
            .read_line(&mut self.buf)
            .map_err(|e| Error::io(&self.path, e))?;
        if read == 0 {
            return Ok(None);
        }
        self.line += 1;
        Ok(Some(self.buf.trim_end_matches(['\n', '\r']).to_string()))
    }

    fn expect_line(&mut self, what: &str) -> Result<String> {
        match self.next_line()? {
            Some(l) => Ok(l),
            None => {
                self.line += 1;
                Err(self.parse_err(format!("unexpected end of file, expected {what}")))
            }
        }
    }

    fn expect_eof(&mut self) -> Result<()> {
        while let Some(l) = self.next_line()? {
            if !l.trim().is_empty() {
                return Err(self.parse_err("trailing content"));
            }
        }
        Ok(())
    }
}

fn write_matrix(w: &mut dyn Write, m: &Array2<f64>, dtype: ValueType) -> std::io::Result<()> {
    writeln!(w, "{} {} {}", m.nrows(), m.ncols(), dtype.tag())?;
    let mut line = String::new();
    for row in m.rows() {
        line.clear();
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                line.push(' ');
            }
            match dtype {
                ValueType::U8 => line.push(if *v == 0.0 { '0' } else { '1' }),
                ValueType::F64 => line.push_str(&v.to_string()),
            }
        }
        line.push('\n');
        w.write_all(line.as_bytes())?;
    }
    Ok(())
}

fn read_matrix(r: &mut LineReader) -> Result<Array2<f64>> {
    let header = r.expect_line("matrix header")?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    let [rows, cols, dtype] = fields[..] else {
        return Err(r.parse_err(format!("bad matrix header `{header}`")));
    };
    let rows: usize = rows
        .parse()
        .map_err(|_| r.parse_err(format!("bad row count `{rows}`")))?;
    let cols: usize = cols
        .parse()
        .map_err(|_| r.parse_err(format!("bad column count `{cols}`")))?;
    let dtype = match dtype {
        "u8" => ValueType::U8,
        "f64" => ValueType::F64,
        other => return Err(r.parse_err(format!("unknown dtype `{other}`"))),
    };
    let mut data = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        let line = r.expect_line(&format!("matrix row {i}"))?;
        let before = data.len();
        for tok in line.split_whitespace() {
            let v: f64 = match dtype {
                ValueType::U8 => tok
                    .parse::<u8>()
                    .map(f64::from)
                    .map_err(|_| r.parse_err(format!("bad u8 value `{tok}`")))?,
                ValueType::F64 => tok
                    .parse()
                    .map_err(|_| r.parse_err(format!("bad f64 value `{tok}`")))?,
            };
            if !v.is_finite() {
                return Err(r.parse_err(format!("non-finite value `{tok}`")));
            }
            data.push(v);
        }
        if data.len() - before != cols {
            return Err(Error::Shape {
                path: r.path.clone(),
                msg: format!(
                    "row {i} has {} values, header declares {cols}",
                    data.len() - before
                ),
            });
        }
    }
    Ok(Array2::from_shape_vec((rows, cols), data).expect("row lengths checked"))
}

/// Reads a single matrix container.
pub fn read_matrix_file(path: &Path) -> Result<Array2<f64>> {
    let mut r = open_reader(path)?;
    let m = read_matrix(&mut r)?;
    r.expect_eof()?;
    Ok(m)
}

pub fn write_matrix_file(path: &Path, m: &Array2<f64>, dtype: ValueType) -> Result<()> {
    if dtype == ValueType::U8 && ValueType::for_values(m) != ValueType::U8 {
        return Err(Error::InvalidInput("u8 container needs binary values".into()));
    }
    write_atomic(path, |w| write_matrix(w, m, dtype))
}

/// One non-negative integer per line.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let mut r = open_reader(path)?;
    let mut out = Vec::new();
    while let Some(line) = r.next_line()? {
        let tok = line.trim();
        if tok.is_empty() {
            continue;
        }
        match tok.parse() {
            Ok(y) => out.push(y),
            Err(_) => return Err(r.parse_err(format!("bad label `{tok}`"))),
        }
    }
    Ok(out)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    write_atomic(path, |w| {
        for y in labels {
            writeln!(w, "{y}")?;
        }
        Ok(())
    })
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        msg: e.to_string(),
    })
}

/// Accepts either a manifest file or a directory containing
/// `manifest.json`.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let manifest_path = if path.is_dir() {
        path.join("manifest.json")
    } else {
        path.to_path_buf()
    };
    let manifest = read_manifest(&manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));

    if manifest.feature_files.is_empty() {
        return Err(Error::Shape {
            path: manifest_path.clone(),
            msg: "manifest lists no feature files".into(),
        });
    }
    let mut blocks = Vec::with_capacity(manifest.feature_files.len());
    for file in &manifest.feature_files {
        let p = base.join(file);
        let block = read_matrix_file(&p)?;
        if block.nrows() != manifest.n_nodes {
            return Err(Error::Shape {
                path: p,
                msg: format!("{} rows, manifest declares {} nodes", block.nrows(), manifest.n_nodes),
            });
        }
        blocks.push(block);
    }
    let views: Vec<_> = blocks.iter().map(|b| b.view()).collect();
    let features = concatenate(Axis(1), &views).expect("row counts checked");
    if features.ncols() != manifest.n_features {
        return Err(Error::Shape {
            path: manifest_path.clone(),
            msg: format!(
                "{} feature columns, manifest declares {}",
                features.ncols(),
                manifest.n_features
            ),
        });
    }
    if manifest.feature_mode == FeatureMode::Discrete {
        if let Some(((row, col), &value)) = features
            .indexed_iter()
            .find(|(_, &v)| v != 0.0 && v != 1.0)
        {
            return Err(Error::NonBinary {
                path: manifest_path.clone(),
                row,
                col,
                value,
            });
        }
    }

    let label_path = base.join(&manifest.label_file);
    let labels = read_labels(&label_path)?;
    if labels.len() != manifest.n_nodes {
        return Err(Error::Shape {
            path: label_path,
            msg: format!("{} labels, manifest declares {} nodes", labels.len(), manifest.n_nodes),
        });
    }
    if let Some((i, &y)) = labels
        .iter()
        .enumerate()
        .find(|(_, &y)| y >= manifest.n_classes)
    {
        return Err(Error::Parse {
            path: label_path,
            line: i + 1,
            msg: format!("label {y} out of range for {} classes", manifest.n_classes),
        });
    }

    let features = FeatureMatrix::new(features).map_err(|e| Error::Shape {
        path: manifest_path.clone(),
        msg: e.to_string(),
    })?;
    Dataset::new(
        manifest.name,
        features,
        labels,
        manifest.n_classes,
        manifest.feature_mode,
    )
}

/// Writes `features.txt.gz`, `labels.txt` and `manifest.json` into `dir`.
pub fn save_dataset(dir: &Path, dataset: &Dataset, preprocessing: &str) -> Result<PathBuf> {
    let features = "features.txt.gz";
    let labels = "labels.txt";
    let values = dataset.features.values();
    write_matrix_file(&dir.join(features), values, ValueType::for_values(values))?;
    write_labels(&dir.join(labels), &dataset.labels)?;
    let manifest = DatasetManifest {
        name: dataset.name.clone(),
        feature_files: vec![features.into()],
        label_file: labels.into(),
        feature_mode: dataset.feature_mode,
        n_nodes: dataset.n_nodes(),
        n_features: dataset.features.n_features(),
        n_classes: dataset.n_classes,
        preprocessing: preprocessing.into(),
    };
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&path, |w| writeln!(w, "{json}"))?;
    Ok(path)
}

/// Reads the tab-separated `id features... class` table and `cited citing`
/// link list used by the classic citation benchmarks.
///
/// Classes are numbered in sorted name order. With `largest_component`,
/// only the largest connected component of the (undirected) link graph is
/// kept, in file order.
pub fn import_linqs(
    name: &str,
    content: &Path,
    cites: &Path,
    largest_component: bool,
) -> Result<Dataset> {
    let mut r = open_reader(content)?;
    let mut ids = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut class_names = Vec::new();
    while let Some(line) = r.next_line()? {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() < 3 {
            return Err(r.parse_err("expected an id, features and a class"));
        }
        let values = fields[1..fields.len() - 1]
            .iter()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| r.parse_err("bad feature value"))?;
        if let Some(first) = rows.first() {
            if first.len() != values.len() {
                return Err(Error::Shape {
                    path: content.to_path_buf(),
                    msg: format!("line {} has {} features, expected {}", r.line, values.len(), first.len()),
                });
            }
        }
        ids.push(fields[0].to_string());
        class_names.push(fields[fields.len() - 1].to_string());
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(r.parse_err("no nodes"));
    }
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let classes: Vec<&String> = class_names.iter().collect::<BTreeSet<_>>().into_iter().collect();
    let labels: Vec<usize> = class_names
        .iter()
        .map(|c| classes.binary_search(&c).expect("class present"))
        .collect();

    let n = rows.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut v: usize) -> usize {
        while parent[v] != v {
            parent[v] = parent[parent[v]];
            v = parent[v];
        }
        v
    }
    let mut r = open_reader(cites)?;
    while let Some(line) = r.next_line()? {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 2 {
            return Err(r.parse_err("expected two ids"));
        }
        if let (Some(&a), Some(&b)) = (index.get(fields[0]), index.get(fields[1])) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }

    let d = rows[0].len();
    let values = Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect())
        .expect("row lengths checked");
    let mode = if ValueType::for_values(&values) == ValueType::U8 {
        FeatureMode::Discrete
    } else {
        FeatureMode::Continuous
    };
    let full = Dataset::new(name, FeatureMatrix::new(values)?, labels, classes.len(), mode)?;
    if !largest_component {
        return Ok(full);
    }
    let roots: Vec<usize> = (0..n).map(|v| find(&mut parent, v)).collect();
    let mut sizes = vec![0usize; n];
    for &root in &roots {
        sizes[root] += 1;
    }
    let best = (0..n).max_by_key(|&r| (sizes[r], std::cmp::Reverse(r))).expect("non-empty");
    let keep: Vec<usize> = (0..n).filter(|&v| roots[v] == best).collect();
    full.select_nodes(&keep)
}

/// Metadata stored with a saved attack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackMetadata {
    pub attack: String,
    pub dataset: String,
    pub feature_mode: FeatureMode,
    pub budget: usize,
    pub modifications_used: usize,
    pub exhausted: bool,
    #[serde(default)]
    pub config: serde_json::Value,
}

pub fn save_attack_result(path: &Path, meta: &AttackMetadata, result: &AttackResult) -> Result<()> {
    let json = serde_json::to_string(meta).expect("metadata serializes");
    let values = result.perturbed.values();
    let dtype = ValueType::for_values(values);
    write_atomic(path, |w| {
        writeln!(w, "{ATTACK_MAGIC}")?;
        writeln!(w, "{json}")?;
        write_matrix(w, values, dtype)?;
        writeln!(w, "cells {}", result.modified_cells.len())?;
        for c in &result.modified_cells {
            writeln!(w, "{} {} {} {}", c.node, c.feature, c.old, c.new)?;
        }
        Ok(())
    })
}

pub fn load_attack_result(path: &Path) -> Result<(AttackMetadata, AttackResult)> {
    let mut r = open_reader(path)?;
    if r.expect_line("magic line")? != ATTACK_MAGIC {
        return Err(r.parse_err("not an attack result file"));
    }
    let json = r.expect_line("metadata")?;
    let meta: AttackMetadata =
        serde_json::from_str(&json).map_err(|e| r.parse_err(e.to_string()))?;
    let perturbed = FeatureMatrix::new(read_matrix(&mut r)?).map_err(|e| r.parse_err(e.to_string()))?;
    let header = r.expect_line("cell log header")?;
    let count: usize = header
        .strip_prefix("cells ")
        .and_then(|c| c.trim().parse().ok())
        .ok_or_else(|| r.parse_err(format!("bad cell log header `{header}`")))?;
    let mut cells = Vec::with_capacity(count);
    for _ in 0..count {
        let line = r.expect_line("cell record")?;
        let f: Vec<&str> = line.split_whitespace().collect();
        let parsed = (|| {
            let [node, feature, old, new] = f[..] else { return None };
            Some(CellChange {
                node: node.parse().ok()?,
                feature: feature.parse().ok()?,
                old: old.parse().ok()?,
                new: new.parse().ok()?,
            })
        })();
        let cell = parsed.ok_or_else(|| r.parse_err(format!("bad cell record `{line}`")))?;
        if cell.node >= perturbed.n_nodes() || cell.feature >= perturbed.n_features() {
            return Err(r.parse_err("cell outside the feature matrix"));
        }
        cells.push(cell);
    }
    r.expect_eof()?;
    let result = AttackResult {
        perturbed,
        modifications_used: meta.modifications_used,
        budget: meta.budget,
        exhausted: meta.exhausted,
        modified_cells: cells,
    };
    Ok((meta, result))
}

/// Metadata stored with trained parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMetadata {
    pub dataset: String,
    pub construction: String,
    #[serde(default)]
    pub config: serde_json::Value,
}

pub fn save_checkpoint(path: &Path, meta: &CheckpointMetadata, params: &ModelParams) -> Result<()> {
    let json = serde_json::to_string(meta).expect("metadata serializes");
    write_atomic(path, |w| {
        writeln!(w, "{CHECKPOINT_MAGIC}")?;
        writeln!(w, "{json}")?;
        write_matrix(w, &params.theta1, ValueType::F64)?;
        write_matrix(w, &params.theta2, ValueType::F64)
    })
}

pub fn load_checkpoint(path: &Path) -> Result<(CheckpointMetadata, ModelParams)> {
    let mut r = open_reader(path)?;
    if r.expect_line("magic line")? != CHECKPOINT_MAGIC {
        return Err(r.parse_err("not a checkpoint file"));
    }
    let json = r.expect_line("metadata")?;
    let meta: CheckpointMetadata =
        serde_json::from_str(&json).map_err(|e| r.parse_err(e.to_string()))?;
    let theta1 = read_matrix(&mut r)?;
    let theta2 = read_matrix(&mut r)?;
    r.expect_eof()?;
    let params = ModelParams::new(theta1, theta2).map_err(|e| Error::Shape {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    Ok((meta, params))
}
