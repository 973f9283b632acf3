//! Exact cosine-similarity nearest neighbours over anchor (and unlabelled)
//! features, the anchor density score and the KNN label prediction.

use std::cmp::Ordering;

use crate::data::{LabelVector, SampleId};
use crate::error::{AcplError, Result};

fn normalize(v: &[f64]) -> Result<Vec<f64>> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm == 0.0 {
        return Err(AcplError::Normalization(format!(
            "cannot normalize vector with norm {norm}"
        )));
    }
    Ok(v.iter().map(|x| x / norm).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbour {
    pub id: SampleId,
    pub similarity: f64,
    /// Position of the neighbour inside the index.
    pub position: usize,
}

/// Descending similarity, ascending id on ties.
fn rank(a: &Neighbour, b: &Neighbour) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.id.cmp(&b.id))
}

/// Brute-force cosine KNN over unit-normalized copies of the inserted vectors.
#[derive(Debug, Clone)]
pub struct CosineIndex {
    ids: Vec<SampleId>,
    vectors: Vec<Vec<f64>>,
    dim: usize,
    k: usize,
}

impl CosineIndex {
    pub fn build(points: Vec<(SampleId, Vec<f64>)>, k: usize) -> Result<Self> {
        if points.is_empty() {
            return Err(AcplError::Build("index needs at least one point".into()));
        }
        if k == 0 {
            return Err(AcplError::Build("K must be at least 1".into()));
        }
        let dim = points[0].1.len();
        let mut ids = Vec::with_capacity(points.len());
        let mut vectors = Vec::with_capacity(points.len());
        for (id, v) in points {
            if v.len() != dim {
                return Err(AcplError::Shape {
                    expected: dim,
                    actual: v.len(),
                });
            }
            vectors.push(normalize(&v).map_err(|e| match e {
                AcplError::Normalization(m) => AcplError::Normalization(format!("point {id}: {m}")),
                other => other,
            })?);
            ids.push(id);
        }
        Ok(Self {
            ids,
            vectors,
            dim,
            k,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `min(K, |entries|)`
    pub fn effective_k(&self) -> usize {
        self.k.min(self.ids.len())
    }

    pub fn ids(&self) -> &[SampleId] {
        &self.ids
    }

    pub fn vector(&self, position: usize) -> &[f64] {
        &self.vectors[position]
    }

    pub fn position_of(&self, id: SampleId) -> Option<usize> {
        self.ids.iter().position(|&i| i == id)
    }

    /// The `min(K, n)` most similar points to `q`, best first.
    pub fn query(&self, q: &[f64]) -> Result<Vec<Neighbour>> {
        self.query_k(q, self.k)
    }

    pub fn query_k(&self, q: &[f64], k: usize) -> Result<Vec<Neighbour>> {
        if q.len() != self.dim {
            return Err(AcplError::Shape {
                expected: self.dim,
                actual: q.len(),
            });
        }
        let unit = normalize(q)?;
        self.query_unit(&unit, k)
    }

    pub(crate) fn query_unit(&self, unit: &[f64], k: usize) -> Result<Vec<Neighbour>> {
        let k = k.min(self.ids.len());
        let mut all: Vec<Neighbour> = self
            .vectors
            .iter()
            .zip(&self.ids)
            .enumerate()
            .map(|(position, (v, &id))| Neighbour {
                id,
                similarity: dot(unit, v).clamp(-1.0, 1.0),
                position,
            })
            .collect();
        if k < all.len() {
            all.select_nth_unstable_by(k, rank);
            all.truncate(k);
        }
        all.sort_unstable_by(rank);
        Ok(all)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorNeighbour<'a> {
    pub id: SampleId,
    pub similarity: f64,
    pub label: &'a LabelVector,
}

/// Cosine KNN over anchor features, each carrying a label vector.
#[derive(Debug, Clone)]
pub struct AnchorIndex {
    index: CosineIndex,
    labels: Vec<LabelVector>,
}

/// Build an anchor index over L2-normalized copies of the features.
pub fn build_index(anchors: Vec<(SampleId, Vec<f64>, LabelVector)>, k: usize) -> Result<AnchorIndex> {
    let mut points = Vec::with_capacity(anchors.len());
    let mut labels = Vec::with_capacity(anchors.len());
    for (id, features, label) in anchors {
        if let Some(first) = labels.first().map(|l: &LabelVector| l.num_classes()) {
            if label.num_classes() != first {
                return Err(AcplError::Shape {
                    expected: first,
                    actual: label.num_classes(),
                });
            }
        }
        points.push((id, features));
        labels.push(label);
    }
    Ok(AnchorIndex {
        index: CosineIndex::build(points, k)?,
        labels,
    })
}

impl AnchorIndex {
    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn k(&self) -> usize {
        self.index.k()
    }

    pub fn effective_k(&self) -> usize {
        self.index.effective_k()
    }

    pub fn cosine(&self) -> &CosineIndex {
        &self.index
    }

    pub fn label(&self, position: usize) -> &LabelVector {
        &self.labels[position]
    }

    pub fn knn_query(&self, q: &[f64]) -> Result<Vec<AnchorNeighbour<'_>>> {
        Ok(self
            .index
            .query(q)?
            .into_iter()
            .map(|n| AnchorNeighbour {
                id: n.id,
                similarity: n.similarity,
                label: &self.labels[n.position],
            })
            .collect())
    }

    /// Mean cosine similarity to the K nearest anchors, in `[-1, 1]`.
    pub fn density_score(&self, q: &[f64]) -> Result<f64> {
        let neighbours = self.index.query(q)?;
        Ok(mean_similarity(&neighbours))
    }

    /// Mean of the K nearest anchors' label vectors.
    pub fn knn_label(&self, q: &[f64]) -> Result<LabelVector> {
        let neighbours = self.index.query(q)?;
        self.mean_label(&neighbours)
    }

    /// Density score and KNN label from a single neighbour search.
    pub fn density_and_label(&self, q: &[f64]) -> Result<(f64, LabelVector)> {
        let neighbours = self.index.query(q)?;
        Ok((mean_similarity(&neighbours), self.mean_label(&neighbours)?))
    }

    fn mean_label(&self, neighbours: &[Neighbour]) -> Result<LabelVector> {
        let first = &self.labels[neighbours[0].position];
        let mut mean = vec![0.0; first.num_classes()];
        for n in neighbours {
            for (m, v) in mean.iter_mut().zip(self.labels[n.position].values()) {
                *m += v;
            }
        }
        let k = neighbours.len() as f64;
        for m in &mut mean {
            *m = (*m / k).clamp(0.0, 1.0);
        }
        LabelVector::soft(mean, first.kind())
    }
}

fn mean_similarity(neighbours: &[Neighbour]) -> f64 {
    neighbours.iter().map(|n| n.similarity).sum::<f64>() / neighbours.len() as f64
}
