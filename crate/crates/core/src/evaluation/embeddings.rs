//! Pooled embedding export with a 2-D principal-component projection.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

use super::model_input;
use crate::data::Utterance;
use crate::error::{Error, Result};
use crate::model::{Architecture, LanguageRegistry, ModelParams, TaskType};

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub utterance_id: String,
    pub dataset: String,
    pub label: u8,
    pub task: TaskType,
    pub embedding: Vec<f32>,
    pub projection: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub rows: Vec<EmbeddingRow>,
    /// Unit principal axes, each with its largest-magnitude loading positive.
    pub components: [Vec<f64>; 2],
}

/// Per-row coordinates and the two unit axes.
pub type Projection = (Vec<[f64; 2]>, [Vec<f64>; 2]);

/// Projects centred rows onto the top two principal axes. With fewer than
/// two dimensions the missing axis is zero.
pub fn pca_2d(x: &[Vec<f64>]) -> Result<Projection> {
    let n = x.len();
    if n == 0 {
        return Err(Error::Usage("cannot project an empty set".into()));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::Input(
            "embedding rows must share a positive dimension".into(),
        ));
    }
    let mean: Vec<f64> = (0..d)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect();
    let centred = DMatrix::from_fn(n, d, |i, j| x[i][j] - mean[j]);
    let cov = centred.transpose() * &centred / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let axis = |k: usize| -> Vec<f64> {
        let Some(&col) = order.get(k) else {
            return vec![0.0; d];
        };
        let mut v: Vec<f64> = eig.eigenvectors.column(col).iter().copied().collect();
        let pivot = v.iter().enumerate().fold(
            0,
            |best, (i, c)| if c.abs() > v[best].abs() { i } else { best },
        );
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
        v
    };
    let components = [axis(0), axis(1)];
    let proj = (0..n)
        .map(|i| {
            let row = centred.row(i);
            let dot = |v: &[f64]| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
            [dot(&components[0]), dot(&components[1])]
        })
        .collect();
    Ok((proj, components))
}

pub fn export_embeddings(
    arch: &Architecture,
    params: &ModelParams<f32>,
    languages: &LanguageRegistry,
    utterances: &[Utterance],
    task: Option<TaskType>,
) -> Result<EmbeddingTable> {
    let selected: Vec<&Utterance> = utterances
        .iter()
        .filter(|u| task.is_none_or(|t| u.entry.task == t))
        .collect();
    if selected.is_empty() {
        return Err(Error::Usage(format!(
            "no utterances match the task filter {}",
            task.map_or("(none)".to_string(), |t| t.to_string())
        )));
    }
    let mut rows = Vec::with_capacity(selected.len());
    for u in selected {
        let out = arch.forward(params, &model_input(arch, languages, u)?)?;
        rows.push(EmbeddingRow {
            utterance_id: u.entry.utterance_id.clone(),
            dataset: u.entry.dataset.clone(),
            label: u.entry.label,
            task: u.entry.task,
            embedding: out.embedding.into_data(),
            projection: [0.0; 2],
        });
    }
    let x: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.embedding.iter().map(|&v| f64::from(v)).collect())
        .collect();
    let (proj, components) = pca_2d(&x)?;
    for (r, p) in rows.iter_mut().zip(proj) {
        r.projection = p;
    }
    Ok(EmbeddingTable {
        dim: x[0].len(),
        rows,
        components,
    })
}

impl EmbeddingTable {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = ["utterance_id", "dataset", "label", "task"]
            .into_iter()
            .map(String::from)
            .collect();
        h.extend((0..self.dim).map(|i| format!("e{i}")));
        h.push("pc1".into());
        h.push("pc2".into());
        h
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let to_err = |e: csv::Error| Error::Validation(format!("embedding table: {e}"));
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header()).map_err(to_err)?;
        for r in &self.rows {
            let mut rec = vec![
                r.utterance_id.clone(),
                r.dataset.clone(),
                r.label.to_string(),
                r.task.to_string(),
            ];
            rec.extend(r.embedding.iter().map(|v| v.to_string()));
            rec.extend(r.projection.iter().map(|v| format!("{v:.6}")));
            out.write_record(&rec).map_err(to_err)?;
        }
        out.flush()
            .map_err(|e| Error::Validation(format!("embedding table: {e}")))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}
