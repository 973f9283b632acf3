//! Samples, label vectors, CSV ingestion, synthetic generation and the four
//! evolving sample pools (labelled, unlabelled, pseudo-labelled, anchor).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{AcplError, Result};

pub type SampleId = u64;

const SOFT_SUM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    /// Exactly one class per sample, softmax output.
    Multiclass,
    /// Any subset of classes per sample, per-class sigmoid output.
    Multilabel,
}

impl std::str::FromStr for TaskKind {
    type Err = AcplError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "multiclass" => Ok(TaskKind::Multiclass),
            "multilabel" => Ok(TaskKind::Multilabel),
            other => Err(AcplError::Config(format!("unknown task kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hardness {
    Hard,
    Soft,
}

/// A target vector in `[0,1]^C`.
///
/// Hard multiclass vectors are one-hot, hard multilabel vectors are binary,
/// soft vectors carry pseudo-label mass (summing to one for multiclass).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelVector {
    values: Vec<f64>,
    kind: TaskKind,
    hardness: Hardness,
}

impl LabelVector {
    pub fn hard(values: Vec<f64>, kind: TaskKind) -> Result<Self> {
        if values.is_empty() {
            return Err(AcplError::InvalidLabel("label vector has no classes".into()));
        }
        if let Some(v) = values.iter().find(|v| **v != 0.0 && **v != 1.0) {
            return Err(AcplError::InvalidLabel(format!(
                "hard label entry {v} is not 0 or 1"
            )));
        }
        if kind == TaskKind::Multiclass {
            let positives = values.iter().filter(|v| **v == 1.0).count();
            if positives != 1 {
                return Err(AcplError::InvalidLabel(format!(
                    "multiclass label has {positives} positive entries, expected 1"
                )));
            }
        }
        Ok(Self {
            values,
            kind,
            hardness: Hardness::Hard,
        })
    }

    pub fn soft(values: Vec<f64>, kind: TaskKind) -> Result<Self> {
        if values.is_empty() {
            return Err(AcplError::InvalidLabel("label vector has no classes".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(AcplError::InvalidLabel(format!(
                "soft label entry {v} outside [0, 1]"
            )));
        }
        if kind == TaskKind::Multiclass {
            let sum: f64 = values.iter().sum();
            if (sum - 1.0).abs() > SOFT_SUM_TOL {
                return Err(AcplError::InvalidLabel(format!(
                    "multiclass soft label sums to {sum}"
                )));
            }
        }
        Ok(Self {
            values,
            kind,
            hardness: Hardness::Soft,
        })
    }

    pub fn one_hot(class: usize, num_classes: usize) -> Self {
        assert!(class < num_classes, "class {class} out of range {num_classes}");
        let mut values = vec![0.0; num_classes];
        values[class] = 1.0;
        Self {
            values,
            kind: TaskKind::Multiclass,
            hardness: Hardness::Hard,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn kind(&self) -> TaskKind {
        self.kind
    }

    pub fn hardness(&self) -> Hardness {
        self.hardness
    }

    pub fn num_classes(&self) -> usize {
        self.values.len()
    }

    /// Index of the largest entry; the lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }

    /// Hardened class membership: argmax for multiclass, `>= 0.5` for multilabel.
    pub fn active(&self) -> Vec<bool> {
        harden(&self.values, self.kind)
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Threshold a probability vector into class membership flags.
pub fn harden(probs: &[f64], kind: TaskKind) -> Vec<bool> {
    match kind {
        TaskKind::Multiclass => {
            let best = argmax(probs);
            (0..probs.len()).map(|i| i == best).collect()
        }
        TaskKind::Multilabel => probs.iter().map(|p| *p >= 0.5).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: SampleId,
    pub features: Vec<f64>,
    pub label: Option<LabelVector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub num_classes: usize,
    pub task_kind: TaskKind,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.samples.first().map_or(0, |s| s.features.len())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Number of samples whose label includes each class.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for label in self.samples.iter().filter_map(|s| s.label.as_ref()) {
            for (c, on) in label.active().into_iter().enumerate() {
                if on {
                    counts[c] += 1;
                }
            }
        }
        counts
    }

    /// Split into (labelled samples, unlabelled samples) keeping the task metadata.
    pub fn partition_labelled(self) -> (Dataset, Dataset) {
        let (labelled, unlabelled): (Vec<_>, Vec<_>) =
            self.samples.into_iter().partition(|s| s.label.is_some());
        (
            Dataset {
                samples: labelled,
                num_classes: self.num_classes,
                task_kind: self.task_kind,
            },
            Dataset {
                samples: unlabelled,
                num_classes: self.num_classes,
                task_kind: self.task_kind,
            },
        )
    }
}

/// Column layout of an input CSV file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub id_column: String,
    pub feature_columns: Vec<String>,
    pub label_columns: Vec<String>,
    pub task_kind: TaskKind,
}

impl CsvSchema {
    /// The conventional `id,f0..f{D-1},y0..y{C-1}` layout.
    pub fn standard(dim: usize, num_classes: usize, task_kind: TaskKind) -> Self {
        Self {
            id_column: "id".into(),
            feature_columns: (0..dim).map(|i| format!("f{i}")).collect(),
            label_columns: (0..num_classes).map(|i| format!("y{i}")).collect(),
            task_kind,
        }
    }

    /// Derive the conventional layout from a header row: `id`, then every
    /// `f<n>` column as a feature and every `y<n>` column as a label.
    pub fn from_header(header: &[&str], task_kind: TaskKind) -> Result<Self> {
        let is_indexed = |name: &str, prefix: char| {
            name.strip_prefix(prefix)
                .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|b| b.is_ascii_digit()))
        };
        if !header.contains(&"id") {
            return Err(AcplError::Schema("header has no `id` column".into()));
        }
        let feature_columns: Vec<String> = header
            .iter()
            .filter(|h| is_indexed(h, 'f'))
            .map(|h| h.to_string())
            .collect();
        let label_columns: Vec<String> = header
            .iter()
            .filter(|h| is_indexed(h, 'y'))
            .map(|h| h.to_string())
            .collect();
        if feature_columns.is_empty() {
            return Err(AcplError::Schema("header has no feature columns".into()));
        }
        if label_columns.is_empty() {
            return Err(AcplError::Schema("header has no label columns".into()));
        }
        Ok(Self {
            id_column: "id".into(),
            feature_columns,
            label_columns,
            task_kind,
        })
    }
}

/// Read a CSV file with the conventional header, inferring the schema.
pub fn load_csv_auto(path: &Path, task_kind: TaskKind) -> Result<Dataset> {
    let mut reader = open_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .clone();
    let names: Vec<&str> = headers.iter().collect();
    let schema = CsvSchema::from_header(&names, task_kind)?;
    read_rows(path, reader, &schema)
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let reader = open_reader(path)?;
    read_rows(path, reader, schema)
}

fn open_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| AcplError::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file))
}

fn csv_error(path: &Path, e: csv::Error) -> AcplError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => AcplError::io(path, io),
        other => AcplError::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn read_rows(path: &Path, mut reader: csv::Reader<File>, schema: &CsvSchema) -> Result<Dataset> {
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| AcplError::Schema(format!("missing column `{name}`")))
    };
    let id_col = column(&schema.id_column)?;
    let feature_cols = schema
        .feature_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    let label_cols = schema
        .label_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<Vec<_>>>()?;
    if feature_cols.is_empty() || label_cols.is_empty() {
        return Err(AcplError::Schema(
            "schema needs at least one feature and one label column".into(),
        ));
    }

    let mut samples = Vec::new();
    let mut seen = BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(AcplError::Schema(format!(
                "line {line} has {} cells, header has {}",
                record.len(),
                headers.len()
            )));
        }
        let id: SampleId = record[id_col].parse().map_err(|_| AcplError::Parse {
            line,
            message: format!("invalid id `{}`", &record[id_col]),
        })?;
        if !seen.insert(id) {
            return Err(AcplError::Parse {
                line,
                message: format!("duplicate id {id}"),
            });
        }
        let features = feature_cols
            .iter()
            .map(|&c| {
                let cell = &record[c];
                match cell.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    _ => Err(AcplError::Parse {
                        line,
                        message: format!("feature `{}` has non-finite value `{cell}`", &headers[c]),
                    }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let cells: Vec<&str> = label_cols.iter().map(|&c| &record[c]).collect();
        let label = if cells.iter().all(|c| c.is_empty()) {
            None
        } else {
            let values = cells
                .iter()
                .map(|cell| match cell.parse::<f64>() {
                    Ok(v) if v == 0.0 || v == 1.0 => Ok(v),
                    _ => Err(AcplError::Label {
                        line,
                        message: format!("label cell `{cell}` is not 0 or 1"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            Some(
                LabelVector::hard(values, schema.task_kind).map_err(|e| AcplError::Label {
                    line,
                    message: e.to_string(),
                })?,
            )
        };
        samples.push(Sample {
            id,
            features,
            label,
        });
    }
    Ok(Dataset {
        samples,
        num_classes: label_cols.len(),
        task_kind: schema.task_kind,
    })
}

/// Write a dataset in the conventional layout. Unlabelled rows get empty label cells.
pub fn write_csv(path: &Path, dataset: &Dataset) -> Result<()> {
    let mut out = String::new();
    out.push_str("id");
    for i in 0..dataset.dim() {
        out.push_str(&format!(",f{i}"));
    }
    for i in 0..dataset.num_classes {
        out.push_str(&format!(",y{i}"));
    }
    out.push('\n');
    for s in &dataset.samples {
        out.push_str(&s.id.to_string());
        for v in &s.features {
            out.push(',');
            out.push_str(&v.to_string());
        }
        match &s.label {
            Some(l) => {
                for v in l.values() {
                    out.push_str(if *v == 1.0 { ",1" } else { ",0" });
                }
            }
            None => out.push_str(&",".repeat(dataset.num_classes)),
        }
        out.push('\n');
    }
    let mut file = File::create(path).map_err(|e| AcplError::io(path, e))?;
    file.write_all(out.as_bytes())
        .map_err(|e| AcplError::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Covariance {
    Isotropic(f64),
    Diagonal(Vec<f64>),
    Full(Vec<Vec<f64>>),
}

impl Covariance {
    fn to_matrix(&self, dim: usize) -> Result<Vec<Vec<f64>>> {
        match self {
            Covariance::Isotropic(v) => Ok((0..dim)
                .map(|i| (0..dim).map(|j| if i == j { *v } else { 0.0 }).collect())
                .collect()),
            Covariance::Diagonal(d) => {
                if d.len() != dim {
                    return Err(AcplError::Spec(format!(
                        "diagonal covariance has {} entries, mean has {dim}",
                        d.len()
                    )));
                }
                Ok((0..dim)
                    .map(|i| (0..dim).map(|j| if i == j { d[i] } else { 0.0 }).collect())
                    .collect())
            }
            Covariance::Full(m) => {
                if m.len() != dim || m.iter().any(|r| r.len() != dim) {
                    return Err(AcplError::Spec(format!("covariance is not {dim}x{dim}")));
                }
                Ok(m.clone())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSpec {
    pub count: usize,
    pub mean: Vec<f64>,
    pub cov: Covariance,
}

/// Recipe for a seeded Gaussian dataset.
///
/// In multilabel mode every sample has a primary class (whose Gaussian it is
/// drawn from and whose count it contributes to) and additionally switches on
/// class `j` with probability `co_activation[primary][j]`; each co-active
/// class adds its mean to the feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub task_kind: TaskKind,
    pub classes: Vec<ClassSpec>,
    #[serde(default)]
    pub co_activation: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub first_id: SampleId,
}

/// Lower-triangular factor `L` with `L Lᵀ = cov`, tolerating zero pivots (PSD).
pub(crate) fn psd_factor(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = cov.len();
    let scale = (0..n).map(|i| cov[i][i].abs()).fold(0.0_f64, f64::max).max(1.0);
    let tol = 1e-10 * scale;
    for i in 0..n {
        for j in 0..i {
            if (cov[i][j] - cov[j][i]).abs() > tol {
                return Err(AcplError::Spec("covariance is not symmetric".into()));
            }
        }
    }
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let d = cov[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d < -tol {
            return Err(AcplError::Spec(
                "covariance is not positive semi-definite".into(),
            ));
        }
        if d <= tol {
            for i in j + 1..n {
                let r = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
                if r.abs() > tol.sqrt() {
                    return Err(AcplError::Spec(
                        "covariance is not positive semi-definite".into(),
                    ));
                }
            }
            continue;
        }
        let pivot = d.sqrt();
        l[j][j] = pivot;
        for i in j + 1..n {
            let r = cov[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            l[i][j] = r / pivot;
        }
    }
    Ok(l)
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset> {
    let num_classes = spec.classes.len();
    if num_classes == 0 {
        return Err(AcplError::Spec("no classes".into()));
    }
    let dim = spec.classes[0].mean.len();
    if dim == 0 {
        return Err(AcplError::Spec("class mean has no dimensions".into()));
    }
    let mut factors = Vec::with_capacity(num_classes);
    for (c, class) in spec.classes.iter().enumerate() {
        if class.count == 0 {
            return Err(AcplError::Spec(format!("class {c} has count 0")));
        }
        if class.mean.len() != dim {
            return Err(AcplError::Spec(format!(
                "class {c} mean has {} dims, expected {dim}",
                class.mean.len()
            )));
        }
        if class.mean.iter().any(|v| !v.is_finite()) {
            return Err(AcplError::Spec(format!("class {c} mean is not finite")));
        }
        let cov = class.cov.to_matrix(dim)?;
        factors.push(psd_factor(&cov).map_err(|e| match e {
            AcplError::Spec(m) => AcplError::Spec(format!("class {c}: {m}")),
            other => other,
        })?);
    }
    let co_activation = match (spec.task_kind, &spec.co_activation) {
        (TaskKind::Multiclass, Some(_)) => {
            return Err(AcplError::Spec(
                "co-activation table only applies to multilabel data".into(),
            ))
        }
        (TaskKind::Multilabel, Some(table)) => {
            if table.len() != num_classes || table.iter().any(|r| r.len() != num_classes) {
                return Err(AcplError::Spec(format!(
                    "co-activation table must be {num_classes}x{num_classes}"
                )));
            }
            if table.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(AcplError::Spec(
                    "co-activation probabilities must lie in [0, 1]".into(),
                ));
            }
            Some(table)
        }
        _ => None,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(spec.classes.iter().map(|c| c.count).sum());
    for (c, class) in spec.classes.iter().enumerate() {
        let l = &factors[c];
        for _ in 0..class.count {
            let z: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let mut x: Vec<f64> = (0..dim)
                .map(|i| class.mean[i] + (0..=i).map(|k| l[i][k] * z[k]).sum::<f64>())
                .collect();
            let mut label = vec![0.0; num_classes];
            label[c] = 1.0;
            if let Some(table) = co_activation {
                for j in (0..num_classes).filter(|&j| j != c) {
                    if rng.random::<f64>() < table[c][j] {
                        label[j] = 1.0;
                        for (xi, mi) in x.iter_mut().zip(&spec.classes[j].mean) {
                            *xi += mi;
                        }
                    }
                }
            }
            rows.push((x, label));
        }
    }
    rows.shuffle(&mut rng);
    let samples = rows
        .into_iter()
        .enumerate()
        .map(|(i, (features, values))| {
            Ok(Sample {
                id: spec.first_id + i as SampleId,
                features,
                label: Some(LabelVector::hard(values, spec.task_kind)?),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        samples,
        num_classes,
        task_kind: spec.task_kind,
    })
}

/// A sample with a target: a member of D_L, D_S or D_A.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelledEntry {
    pub id: SampleId,
    pub features: Vec<f64>,
    pub label: LabelVector,
}

/// A member of D_U. Its ground truth, when known, is kept out of reach of the
/// training code and is only read by evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct UnlabelledEntry {
    pub id: SampleId,
    pub features: Vec<f64>,
    hidden: Option<LabelVector>,
}

impl UnlabelledEntry {
    pub fn new(id: SampleId, features: Vec<f64>, hidden: Option<LabelVector>) -> Self {
        Self {
            id,
            features,
            hidden,
        }
    }

    /// Ground truth for evaluation oracles. Never feed this into training.
    pub fn ground_truth(&self) -> Option<&LabelVector> {
        self.hidden.as_ref()
    }
}

/// The labelled, unlabelled, pseudo-labelled and anchor sets.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPools {
    labelled: Vec<LabelledEntry>,
    unlabelled: Vec<UnlabelledEntry>,
    pseudo: Vec<LabelledEntry>,
    anchor: Vec<LabelledEntry>,
    num_classes: usize,
    task_kind: TaskKind,
    dim: usize,
}

impl DataPools {
    /// Assemble pools from explicit labelled and unlabelled sets; D_A = D_L, D_S empty.
    pub fn new(
        mut labelled: Vec<LabelledEntry>,
        mut unlabelled: Vec<UnlabelledEntry>,
        num_classes: usize,
        task_kind: TaskKind,
        dim: usize,
    ) -> Result<Self> {
        let mut ids = BTreeSet::new();
        for (id, len) in labelled
            .iter()
            .map(|e| (e.id, e.features.len()))
            .chain(unlabelled.iter().map(|e| (e.id, e.features.len())))
        {
            if len != dim {
                return Err(AcplError::Shape {
                    expected: dim,
                    actual: len,
                });
            }
            if !ids.insert(id) {
                return Err(AcplError::Split(format!("duplicate sample id {id}")));
            }
        }
        if let Some(e) = labelled.iter().find(|e| e.label.num_classes() != num_classes) {
            return Err(AcplError::Shape {
                expected: num_classes,
                actual: e.label.num_classes(),
            });
        }
        labelled.sort_by_key(|e| e.id);
        unlabelled.sort_by_key(|e| e.id);
        Ok(Self {
            anchor: labelled.clone(),
            labelled,
            unlabelled,
            pseudo: Vec::new(),
            num_classes,
            task_kind,
            dim,
        })
    }

    pub fn labelled(&self) -> &[LabelledEntry] {
        &self.labelled
    }

    pub fn unlabelled(&self) -> &[UnlabelledEntry] {
        &self.unlabelled
    }

    pub fn pseudo(&self) -> &[LabelledEntry] {
        &self.pseudo
    }

    pub fn anchor(&self) -> &[LabelledEntry] {
        &self.anchor
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Append samples without any label (e.g. unlabelled CSV rows) to D_U.
    pub fn add_unlabelled(&mut self, samples: Vec<Sample>) -> Result<()> {
        let mut ids: BTreeSet<SampleId> = self.all_ids();
        for s in samples {
            if s.features.len() != self.dim {
                return Err(AcplError::Shape {
                    expected: self.dim,
                    actual: s.features.len(),
                });
            }
            if !ids.insert(s.id) {
                return Err(AcplError::Split(format!("duplicate sample id {}", s.id)));
            }
            self.unlabelled
                .push(UnlabelledEntry::new(s.id, s.features, s.label));
        }
        self.unlabelled.sort_by_key(|e| e.id);
        Ok(())
    }

    fn all_ids(&self) -> BTreeSet<SampleId> {
        self.labelled
            .iter()
            .map(|e| e.id)
            .chain(self.unlabelled.iter().map(|e| e.id))
            .collect()
    }

    /// Install this stage's pseudo-labelled set. Every id must be in D_U.
    pub fn set_pseudo(&mut self, pseudo: Vec<LabelledEntry>) -> Result<()> {
        let unlabelled: BTreeSet<SampleId> = self.unlabelled.iter().map(|e| e.id).collect();
        let mut seen = BTreeSet::new();
        for p in &pseudo {
            if !unlabelled.contains(&p.id) {
                return Err(AcplError::Consistency(format!(
                    "pseudo-labelled id {} is not in the unlabelled pool",
                    p.id
                )));
            }
            if !seen.insert(p.id) {
                return Err(AcplError::Consistency(format!(
                    "pseudo-labelled id {} given twice",
                    p.id
                )));
            }
        }
        self.pseudo = pseudo;
        Ok(())
    }

    /// Insert entries into D_A. Each must already be labelled or pseudo-labelled.
    pub fn extend_anchor(&mut self, entries: Vec<LabelledEntry>) -> Result<()> {
        let allowed: BTreeSet<SampleId> = self
            .labelled
            .iter()
            .chain(&self.pseudo)
            .map(|e| e.id)
            .collect();
        let mut present: BTreeSet<SampleId> = self.anchor.iter().map(|e| e.id).collect();
        for e in entries {
            if !allowed.contains(&e.id) {
                return Err(AcplError::Consistency(format!(
                    "anchor candidate {} is neither labelled nor pseudo-labelled",
                    e.id
                )));
            }
            if present.insert(e.id) {
                self.anchor.push(e);
            }
        }
        Ok(())
    }

    /// `D_L ← D_L ∪ D_S`, `D_U ← D_U \ D_S`, then clear D_S. Returns |D_S|.
    pub fn migrate(&mut self) -> usize {
        let moved: BTreeSet<SampleId> = self.pseudo.iter().map(|e| e.id).collect();
        self.unlabelled.retain(|e| !moved.contains(&e.id));
        let count = self.pseudo.len();
        self.labelled.append(&mut self.pseudo);
        self.labelled.sort_by_key(|e| e.id);
        count
    }

    /// Check the partition invariants, returning the first violation.
    pub fn check_invariants(&self) -> Result<()> {
        let labelled: BTreeSet<SampleId> = self.labelled.iter().map(|e| e.id).collect();
        let unlabelled: BTreeSet<SampleId> = self.unlabelled.iter().map(|e| e.id).collect();
        if labelled.len() != self.labelled.len() || unlabelled.len() != self.unlabelled.len() {
            return Err(AcplError::Consistency("duplicate ids inside a pool".into()));
        }
        if let Some(id) = labelled.intersection(&unlabelled).next() {
            return Err(AcplError::Consistency(format!(
                "id {id} is both labelled and unlabelled"
            )));
        }
        for p in &self.pseudo {
            if !unlabelled.contains(&p.id) {
                return Err(AcplError::Consistency(format!(
                    "pseudo-labelled id {} not drawn from the unlabelled pool",
                    p.id
                )));
            }
        }
        let pseudo: BTreeSet<SampleId> = self.pseudo.iter().map(|e| e.id).collect();
        for a in &self.anchor {
            if !labelled.contains(&a.id) && !pseudo.contains(&a.id) {
                return Err(AcplError::Consistency(format!(
                    "anchor {} is neither labelled nor pseudo-labelled",
                    a.id
                )));
            }
        }
        Ok(())
    }
}

fn stratum(label: &LabelVector) -> usize {
    // Multilabel rows are stratified by their first active class; all-negative
    // rows form their own stratum.
    label
        .values()
        .iter()
        .position(|v| *v == 1.0)
        .unwrap_or(label.num_classes())
}

/// Split a fully labelled dataset into D_L (`⌈fraction·n⌉` samples, per class
/// when stratified) and D_U (labels hidden). D_S starts empty and D_A = D_L.
pub fn split_pools(
    dataset: &Dataset,
    labelled_fraction: f64,
    stratified: bool,
    seed: u64,
) -> Result<DataPools> {
    if !(labelled_fraction > 0.0 && labelled_fraction <= 1.0) {
        return Err(AcplError::Split(format!(
            "labelled fraction {labelled_fraction} outside (0, 1]"
        )));
    }
    if dataset.is_empty() {
        return Err(AcplError::Split("dataset is empty".into()));
    }
    let dim = dataset.dim();
    let mut ids = BTreeSet::new();
    for s in &dataset.samples {
        if s.label.is_none() {
            return Err(AcplError::Split(format!("sample {} has no label", s.id)));
        }
        if s.features.len() != dim {
            return Err(AcplError::Shape {
                expected: dim,
                actual: s.features.len(),
            });
        }
        if !ids.insert(s.id) {
            return Err(AcplError::Split(format!("duplicate sample id {}", s.id)));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let take = |n: usize| ((labelled_fraction * n as f64).ceil() as usize).min(n);
    let mut chosen: BTreeSet<SampleId> = BTreeSet::new();
    if stratified {
        let mut strata: BTreeMap<usize, Vec<SampleId>> = BTreeMap::new();
        for s in &dataset.samples {
            let label = s.label.as_ref().expect("checked above");
            strata.entry(stratum(label)).or_default().push(s.id);
        }
        if dataset.task_kind == TaskKind::Multiclass {
            if let Some(c) = (0..dataset.num_classes).find(|c| !strata.contains_key(c)) {
                return Err(AcplError::Split(format!(
                    "class {c} has no samples, stratified split impossible"
                )));
            }
        }
        for (_, mut members) in strata {
            members.sort_unstable();
            members.shuffle(&mut rng);
            let k = take(members.len());
            chosen.extend(members.into_iter().take(k));
        }
    } else {
        let mut members: Vec<SampleId> = dataset.samples.iter().map(|s| s.id).collect();
        members.sort_unstable();
        members.shuffle(&mut rng);
        let k = take(members.len());
        chosen.extend(members.into_iter().take(k));
    }

    let mut labelled = Vec::new();
    let mut unlabelled = Vec::new();
    for s in &dataset.samples {
        let label = s.label.clone().expect("checked above");
        if chosen.contains(&s.id) {
            labelled.push(LabelledEntry {
                id: s.id,
                features: s.features.clone(),
                label,
            });
        } else {
            unlabelled.push(UnlabelledEntry::new(s.id, s.features.clone(), Some(label)));
        }
    }
    labelled.sort_by_key(|e| e.id);
    unlabelled.sort_by_key(|e| e.id);
    let anchor = labelled.clone();
    Ok(DataPools {
        labelled,
        unlabelled,
        pseudo: Vec::new(),
        anchor,
        num_classes: dataset.num_classes,
        task_kind: dataset.task_kind,
        dim,
    })
}

/// Stratified holdout: `(train dataset, test entries)` with `⌈fraction·n⌉`
/// test samples per class.
pub fn holdout_split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Vec<LabelledEntry>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(AcplError::Split(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let pools = split_pools(dataset, test_fraction, true, seed ^ 0x7E57_5EED)?;
    let train = Dataset {
        samples: pools
            .unlabelled
            .iter()
            .map(|u| Sample {
                id: u.id,
                features: u.features.clone(),
                label: u.hidden.clone(),
            })
            .collect(),
        num_classes: dataset.num_classes,
        task_kind: dataset.task_kind,
    };
    if train.is_empty() {
        return Err(AcplError::Split("holdout left no training samples".into()));
    }
    Ok((train, pools.labelled))
}

impl Dataset {
    /// Every sample as a labelled entry; errors on an unlabelled row.
    pub fn labelled_entries(&self) -> Result<Vec<LabelledEntry>> {
        self.samples
            .iter()
            .map(|s| {
                let label = s
                    .label
                    .clone()
                    .ok_or_else(|| AcplError::Split(format!("sample {} has no label", s.id)))?;
                Ok(LabelledEntry {
                    id: s.id,
                    features: s.features.clone(),
                    label,
                })
            })
            .collect()
    }
}
