//! The n x m activation mask A and its derived index sets.
//!
//! A_{i,j} = 1 iff neuron j is active on datum i at initialization with the
//! matching output sign: u_j^T x_i > 0 (strictly) and sgn(y_i) = s_j.

use serde::{Deserialize, Serialize};

use crate::dataset::OrthonormalDataset;
use crate::error::{Error, Result};
use crate::init::InitDraw;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskMatrix {
    pub n: usize,
    pub m: usize,
    /// Row-major entries, `entries[i][j]`.
    pub entries: Vec<Vec<bool>>,
    /// Neuron output signs s_j (carried along for the limit process).
    pub signs: Vec<f64>,
    /// Data indices with positive labels.
    pub i_plus: Vec<usize>,
    /// Data indices with negative labels.
    pub i_minus: Vec<usize>,
    /// Neurons with s_j = +1.
    pub j_plus: Vec<usize>,
    /// Neurons with s_j = -1.
    pub j_minus: Vec<usize>,
    /// S_j = { i : A_{i,j} = 1 }, sorted, one per neuron.
    pub active_sets: Vec<Vec<usize>>,
}

impl MaskMatrix {
    /// Build from raw entries. Enforces S_j ⊆ I_{s_j}: a neuron may only be
    /// marked active on data whose label sign matches its own.
    pub fn from_entries(
        entries: Vec<Vec<bool>>,
        labels: &[f64],
        signs: &[f64],
    ) -> Result<Self> {
        let n = labels.len();
        let m = signs.len();
        if entries.len() != n || entries.iter().any(|row| row.len() != m) {
            return Err(Error::InvalidMask(format!("entries are not {n} x {m}")));
        }
        for (i, row) in entries.iter().enumerate() {
            for (j, &on) in row.iter().enumerate() {
                if on && sign_of(labels[i]) != signs[j] {
                    return Err(Error::InvalidMask(format!(
                        "A[{i}][{j}] = 1 but sgn(y_{i}) != s_{j}"
                    )));
                }
            }
        }
        Ok(Self::assemble(entries, labels, signs.to_vec()))
    }

    fn assemble(entries: Vec<Vec<bool>>, labels: &[f64], signs: Vec<f64>) -> Self {
        let n = labels.len();
        let m = signs.len();
        let i_plus = (0..n).filter(|&i| labels[i] > 0.0).collect();
        let i_minus = (0..n).filter(|&i| labels[i] < 0.0).collect();
        let j_plus = (0..m).filter(|&j| signs[j] > 0.0).collect();
        let j_minus = (0..m).filter(|&j| signs[j] < 0.0).collect();
        let active_sets = (0..m)
            .map(|j| (0..n).filter(|&i| entries[i][j]).collect())
            .collect();
        Self {
            n,
            m,
            entries,
            signs,
            i_plus,
            i_minus,
            j_plus,
            j_minus,
            active_sets,
        }
    }

    /// Column j as a bit pattern, for distinctness checks.
    pub fn column(&self, j: usize) -> Vec<bool> {
        (0..self.n).map(|i| self.entries[i][j]).collect()
    }
}

fn sign_of(y: f64) -> f64 {
    if y > 0.0 {
        1.0
    } else if y < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Evaluate the mask of an initialization draw on a dataset.
///
/// The boundary convention is strict: u_j^T x_i = 0 gives A_{i,j} = 0.
pub fn mask_matrix(dataset: &OrthonormalDataset, init: &InitDraw) -> Result<MaskMatrix> {
    if dataset.d() != init.d {
        return Err(Error::DimensionMismatch(format!(
            "dataset d = {}, init d = {}",
            dataset.d(),
            init.d
        )));
    }
    let n = dataset.n();
    let m = init.m;
    let labels = dataset.labels();
    let mut entries = vec![vec![false; m]; n];
    for j in 0..m {
        let u = &init.directions[j];
        let s = init.signs[j];
        for (i, row) in entries.iter_mut().enumerate() {
            row[j] = dataset.dot_input(i, u) > 0.0 && sign_of(labels[i]) == s;
        }
    }
    Ok(MaskMatrix::assemble(entries, labels, init.signs.clone()))
}
