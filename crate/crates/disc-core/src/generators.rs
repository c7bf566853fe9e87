//! Seeded instance generators for benchmark and test corpora.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::{InstanceMatrix, InstanceError, MatrixKind};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("column sparsity k={0} exceeds row count m={1}")]
    SparsityTooLarge(usize, usize),
    #[error("unknown profile {0}")]
    UnknownProfile(String),
    #[error("unknown adversarial kind {0}")]
    UnknownKind(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
}

/// Sign matrix with exactly k nonzeros per column (uniform rows, +-1 values).
pub fn gen_sparse_signs(n: usize, m: usize, k: usize, seed: u64) -> Result<InstanceMatrix, GenError> {
    if k > m {
        return Err(GenError::SparsityTooLarge(k, m));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n * k);
    let mut rows: Vec<usize> = (0..m).collect();
    for j in 0..n {
        rows.shuffle(&mut rng);
        for &i in rows.iter().take(k) {
            let v = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            entries.push((i, j, v));
        }
    }
    Ok(InstanceMatrix::new(m, n, entries, MatrixKind::SignMatrix)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnitProfile {
    /// Dense gaussian column, normalized to unit length.
    GaussianNormalized,
    /// Entries drawn across dyadic magnitude scales, then normalized.
    DyadicMixture,
}

impl UnitProfile {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gaussian" | "gaussian-normalized" => Some(UnitProfile::GaussianNormalized),
            "dyadic" | "dyadic-mixture" => Some(UnitProfile::DyadicMixture),
            _ => None,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; avoids log(0).
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Matrix with unit-l2 columns.
pub fn gen_unit_columns(
    n: usize,
    m: usize,
    profile: UnitProfile,
    seed: u64,
) -> Result<InstanceMatrix, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for j in 0..n {
        let mut col = vec![0.0f64; m];
        match profile {
            UnitProfile::GaussianNormalized => {
                for x in col.iter_mut() {
                    *x = gaussian(&mut rng);
                }
            }
            UnitProfile::DyadicMixture => {
                // A handful of entries per scale p = 1..=5 with magnitudes in
                // (2^-p, 2^-p+1], random rows and signs.
                for p in 1..=5usize {
                    let count = (m / (1 << p)).clamp(1, m);
                    for _ in 0..count {
                        let i = rng.gen_range(0..m);
                        let mag = rng.gen_range(0.5f64..1.0) * (1 << (p - 1)) as f64 / (1 << p) as f64
                            + 0.5 / (1 << p) as f64;
                        let mag = mag.clamp(1.0 / (1 << p) as f64 + 1e-12, 1.0 / (1 << (p - 1)) as f64);
                        let s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                        col[i] += s * mag;
                    }
                }
            }
        }
        let norm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-15 {
            col[j % m] = 1.0;
        } else {
            for x in col.iter_mut() {
                *x /= norm;
            }
        }
        for (i, &v) in col.iter().enumerate() {
            if v != 0.0 {
                entries.push((i, j, v));
            }
        }
    }
    Ok(InstanceMatrix::new(m, n, entries, MatrixKind::UnitColumns)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdversarialKind {
    /// First k rows identical (defeats independent-evolution assumptions).
    RepeatedRows,
    /// Sylvester-Hadamard block scaled to unit columns.
    Hadamard,
    /// Block-diagonal disjoint supports.
    DisjointSupport,
}

impl AdversarialKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "repeated-rows" => Some(AdversarialKind::RepeatedRows),
            "hadamard" => Some(AdversarialKind::Hadamard),
            "disjoint-support" => Some(AdversarialKind::DisjointSupport),
            _ => None,
        }
    }
}

pub fn gen_adversarial(kind: AdversarialKind, n: usize, k: usize) -> Result<InstanceMatrix, GenError> {
    match kind {
        AdversarialKind::RepeatedRows => {
            // k identical rows covering all columns with alternating signs,
            // plus singleton rows below.
            let mut entries = Vec::new();
            for i in 0..k {
                for j in 0..n {
                    let v = if j % 2 == 0 { 1.0 } else { -1.0 };
                    entries.push((i, j, v));
                }
            }
            for j in 0..n {
                entries.push((k + j, j, 1.0));
            }
            Ok(InstanceMatrix::new(k + n, n, entries, MatrixKind::SignMatrix)?)
        }
        AdversarialKind::Hadamard => {
            let size = n.next_power_of_two();
            let mut h = vec![vec![1.0f64]];
            while h.len() < size {
                let s = h.len();
                let mut next = vec![vec![0.0; 2 * s]; 2 * s];
                for i in 0..s {
                    for j in 0..s {
                        next[i][j] = h[i][j];
                        next[i][j + s] = h[i][j];
                        next[i + s][j] = h[i][j];
                        next[i + s][j + s] = -h[i][j];
                    }
                }
                h = next;
            }
            let scale = 1.0 / (size as f64).sqrt();
            let mut entries = Vec::new();
            for (i, row) in h.iter().enumerate() {
                for j in 0..n.min(size) {
                    entries.push((i, j, row[j] * scale));
                }
            }
            Ok(InstanceMatrix::new(size, n.min(size), entries, MatrixKind::UnitColumns)?)
        }
        AdversarialKind::DisjointSupport => {
            // Blocks of k columns sharing one all-ones row each.
            let blocks = n.div_ceil(k.max(1));
            let mut entries = Vec::new();
            for b in 0..blocks {
                for j in (b * k)..((b + 1) * k).min(n) {
                    entries.push((b, j, 1.0));
                }
            }
            Ok(InstanceMatrix::new(blocks, n, entries, MatrixKind::SignMatrix)?)
        }
    }
}
