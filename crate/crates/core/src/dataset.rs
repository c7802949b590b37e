//! Orthonormal datasets: n labeled points whose inputs form an orthonormal family.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-entry tolerance on the Gram matrix of the inputs.
pub const GRAM_TOL: f64 = 1e-12;

/// Input representation.
///
/// `Identity` means x_i = e_i (requires d = n) and is the default everywhere;
/// the training dynamics are rotation invariant, so nothing is lost. Explicit
/// bases exist to exercise exactly that invariance.
#[derive(Debug, Clone, PartialEq)]
pub enum Basis {
    Identity,
    /// n rows of length d, pairwise orthonormal.
    Explicit(Vec<Vec<f64>>),
}

/// How labels are drawn by [`generate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "spec", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LabelSpec {
    /// Use the given values verbatim.
    Explicit { values: Vec<f64> },
    /// y_i = |z_i| with z_i standard normal.
    AbsGaussian,
    /// y_i standard normal.
    Gaussian,
    /// All labels equal to `value`.
    Constant { value: f64 },
}

/// Which basis [`generate_dataset`] should construct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BasisSpec {
    Identity,
    RandomOrthonormal,
}

/// n labeled points with pairwise-orthonormal inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalDataset {
    n: usize,
    d: usize,
    basis: Basis,
    labels: Vec<f64>,
}

impl OrthonormalDataset {
    /// Build a dataset, checking the Gram invariant (1e-12 per entry) and
    /// label finiteness. Zero labels are permitted here; they are only
    /// rejected by consumers that need them non-zero.
    pub fn new(basis: Basis, labels: Vec<f64>, d: usize) -> Result<Self> {
        let n = labels.len();
        match &basis {
            Basis::Identity => {
                if d != n {
                    return Err(Error::DimensionMismatch(format!(
                        "identity basis requires d = n, got d = {d}, n = {n}"
                    )));
                }
            }
            Basis::Explicit(rows) => {
                if rows.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "{} basis rows for {} labels",
                        rows.len(),
                        n
                    )));
                }
                if d < n {
                    return Err(Error::DimensionMismatch(format!("d = {d} < n = {n}")));
                }
                for (i, row) in rows.iter().enumerate() {
                    if row.len() != d {
                        return Err(Error::DimensionMismatch(format!(
                            "basis row {i} has length {}, expected {d}",
                            row.len()
                        )));
                    }
                }
                for i in 0..n {
                    for j in i..n {
                        let g: f64 = dot(&rows[i], &rows[j]);
                        let expect = if i == j { 1.0 } else { 0.0 };
                        if (g - expect).abs() > GRAM_TOL {
                            return Err(Error::DimensionMismatch(format!(
                                "Gram[{i}][{j}] = {g}, expected {expect}"
                            )));
                        }
                    }
                }
            }
        }
        if let Some(i) = labels.iter().position(|y| !y.is_finite()) {
            return Err(Error::DimensionMismatch(format!(
                "label y[{i}] is not finite"
            )));
        }
        Ok(Self {
            n,
            d,
            basis,
            labels,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    /// Indices of exactly-zero labels. Non-empty means Assumption violations
    /// downstream: the limit-process builder refuses these in strict mode.
    pub fn zero_label_indices(&self) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, y)| **y == 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    /// x_i as a dense d-vector (allocates for the identity basis).
    pub fn input(&self, i: usize) -> Vec<f64> {
        match &self.basis {
            Basis::Identity => {
                let mut e = vec![0.0; self.d];
                e[i] = 1.0;
                e
            }
            Basis::Explicit(rows) => rows[i].clone(),
        }
    }

    /// v^T x_i without materializing x_i.
    pub fn dot_input(&self, i: usize, v: &[f64]) -> f64 {
        match &self.basis {
            Basis::Identity => v[i],
            Basis::Explicit(rows) => dot(&rows[i], v),
        }
    }

    /// Accumulate `coeff * x_i` into `acc`.
    pub fn add_input(&self, i: usize, coeff: f64, acc: &mut [f64]) {
        match &self.basis {
            Basis::Identity => acc[i] += coeff,
            Basis::Explicit(rows) => {
                for (a, x) in acc.iter_mut().zip(&rows[i]) {
                    *a += coeff * x;
                }
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Generate a seeded dataset. Labels are drawn first, then the basis, from a
/// single ChaCha8 stream, so a given seed fully determines the dataset.
pub fn generate_dataset(
    n: usize,
    d: usize,
    label_spec: &LabelSpec,
    basis_spec: BasisSpec,
    seed: u64,
) -> Result<OrthonormalDataset> {
    if d < n {
        return Err(Error::DimensionMismatch(format!("d = {d} < n = {n}")));
    }
    if basis_spec == BasisSpec::Identity && d != n {
        return Err(Error::DimensionMismatch(format!(
            "identity basis requires d = n, got d = {d}, n = {n}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = match label_spec {
        LabelSpec::Explicit { values } => {
            if values.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "{} explicit labels for n = {n}",
                    values.len()
                )));
            }
            values.clone()
        }
        LabelSpec::AbsGaussian => (0..n)
            .map(|_| rng.sample::<f64, _>(StandardNormal).abs())
            .collect(),
        LabelSpec::Gaussian => (0..n).map(|_| rng.sample(StandardNormal)).collect(),
        LabelSpec::Constant { value } => vec![*value; n],
    };
    let basis = match basis_spec {
        BasisSpec::Identity => Basis::Identity,
        BasisSpec::RandomOrthonormal => Basis::Explicit(random_orthonormal_rows(n, d, &mut rng)),
    };
    OrthonormalDataset::new(basis, labels, d)
}

/// n orthonormal rows in R^d from a seeded Gaussian matrix. Modified
/// Gram-Schmidt, applied twice so the Gram matrix lands well inside the
/// 1e-12 tolerance.
pub fn random_orthonormal_rows(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    assert!(d >= n, "need d >= n for an orthonormal family");
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for _pass in 0..2 {
        for i in 0..n {
            for j in 0..i {
                let proj = dot(&rows[i], &rows[j]);
                let prev = rows[j].clone();
                for (a, b) in rows[i].iter_mut().zip(&prev) {
                    *a -= proj * b;
                }
            }
            let nrm = norm(&rows[i]);
            assert!(nrm > 0.0, "degenerate Gaussian draw");
            for a in rows[i].iter_mut() {
                *a /= nrm;
            }
        }
    }
    rows
}

// JSON form of a dataset: {n, d, basis: "identity" | [[..],..], labels: [..]}.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetJson {
    n: usize,
    d: usize,
    basis: BasisJson,
    labels: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BasisJson {
    Name(String),
    Rows(Vec<Vec<f64>>),
}

impl Serialize for OrthonormalDataset {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let basis = match &self.basis {
            Basis::Identity => BasisJson::Name("identity".to_string()),
            Basis::Explicit(rows) => BasisJson::Rows(rows.clone()),
        };
        DatasetJson {
            n: self.n,
            d: self.d,
            basis,
            labels: self.labels.clone(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for OrthonormalDataset {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = DatasetJson::deserialize(deserializer)?;
        let basis = match raw.basis {
            BasisJson::Name(name) if name == "identity" => Basis::Identity,
            BasisJson::Name(name) => {
                return Err(serde::de::Error::custom(format!("unknown basis {name:?}")))
            }
            BasisJson::Rows(rows) => Basis::Explicit(rows),
        };
        if raw.labels.len() != raw.n {
            return Err(serde::de::Error::custom("labels length != n"));
        }
        OrthonormalDataset::new(basis, raw.labels, raw.d).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn explicit_identity_dataset() {
        let ds = generate_dataset(
            3,
            3,
            &LabelSpec::Explicit {
                values: vec![1.0, -2.0, 3.0],
            },
            BasisSpec::Identity,
            0,
        )
        .unwrap();
        assert_eq!(ds.labels(), &[1.0, -2.0, 3.0]);
        for i in 0..3 {
            for j in 0..3 {
                let g = ds.dot_input(i, &ds.input(j));
                assert_abs_diff_eq!(g, if i == j { 1.0 } else { 0.0 }, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn abs_gaussian_labels_are_positive() {
        let ds = generate_dataset(64, 64, &LabelSpec::AbsGaussian, BasisSpec::Identity, 0).unwrap();
        assert_eq!(ds.n(), 64);
        assert!(ds.labels().iter().all(|&y| y > 0.0));
    }

    #[test]
    fn random_orthonormal_gram_within_tolerance() {
        let ds =
            generate_dataset(4, 8, &LabelSpec::Gaussian, BasisSpec::RandomOrthonormal, 1).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let g = ds.dot_input(i, &ds.input(j));
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((g - expect).abs() < 1e-12, "Gram[{i}][{j}] = {g}");
            }
        }
    }

    #[test]
    fn dimension_errors() {
        assert!(matches!(
            generate_dataset(4, 3, &LabelSpec::Gaussian, BasisSpec::RandomOrthonormal, 0),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            generate_dataset(3, 4, &LabelSpec::Gaussian, BasisSpec::Identity, 0),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn zero_labels_flagged_not_rejected() {
        let ds = generate_dataset(
            2,
            2,
            &LabelSpec::Explicit {
                values: vec![0.0, 1.0],
            },
            BasisSpec::Identity,
            0,
        )
        .unwrap();
        assert_eq!(ds.zero_label_indices(), vec![0]);
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_dataset(6, 9, &LabelSpec::Gaussian, BasisSpec::RandomOrthonormal, 42)
            .unwrap();
        let b = generate_dataset(6, 9, &LabelSpec::Gaussian, BasisSpec::RandomOrthonormal, 42)
            .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn json_round_trip() {
        let ds = generate_dataset(3, 5, &LabelSpec::Gaussian, BasisSpec::RandomOrthonormal, 7)
            .unwrap();
        let text = serde_json::to_string(&ds).unwrap();
        let back: OrthonormalDataset = serde_json::from_str(&text).unwrap();
        assert_eq!(ds, back);

        let ident = generate_dataset(
            2,
            2,
            &LabelSpec::Explicit {
                values: vec![1.0, 2.0],
            },
            BasisSpec::Identity,
            0,
        )
        .unwrap();
        let text = serde_json::to_string(&ident).unwrap();
        assert!(text.contains("\"identity\""));
        let back: OrthonormalDataset = serde_json::from_str(&text).unwrap();
        assert_eq!(ident, back);
    }
}
