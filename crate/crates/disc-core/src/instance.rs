//! Sparse instance matrices, colorings, and discrepancy evaluation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::pairwise_sum;

#[derive(Debug, Error)]
pub enum InstanceError {
    #[error("duplicate entry at ({0}, {1})")]
    DuplicateEntry(usize, usize),
    #[error("entry ({0}, {1}) out of bounds for {2}x{3}")]
    OutOfBounds(usize, usize, usize, usize),
    #[error("sign matrix entry at ({0}, {1}) must be +-1, got {2}")]
    NotSign(usize, usize, f64),
    #[error("column {0} has squared norm {1}, exceeds unit bound")]
    ColumnNorm(usize, f64),
    #[error("coloring length {0} does not match column count {1}")]
    DimensionMismatch(usize, usize),
    #[error("coloring entry {0} = {1} outside [-1, 1]")]
    ColoringRange(usize, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    SignMatrix,
    UnitColumns,
    General,
}

impl MatrixKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MatrixKind::SignMatrix => "signs",
            MatrixKind::UnitColumns => "unit",
            MatrixKind::General => "general",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "signs" => Some(MatrixKind::SignMatrix),
            "unit" => Some(MatrixKind::UnitColumns),
            "general" => Some(MatrixKind::General),
            _ => None,
        }
    }
}

/// Sparse input matrix in coordinate form, entries sorted by (row, col).
///
/// Immutable after construction; row and column gather views are built once
/// and cached so algorithms can alternate row-wise and column-wise access.
#[derive(Debug, Clone)]
pub struct InstanceMatrix {
    m: usize,
    n: usize,
    kind: MatrixKind,
    entries: Vec<(usize, usize, f64)>,
    rows: Vec<Vec<(usize, f64)>>,
    cols: Vec<Vec<(usize, f64)>>,
}

impl InstanceMatrix {
    pub fn new(
        m: usize,
        n: usize,
        mut entries: Vec<(usize, usize, f64)>,
        kind: MatrixKind,
    ) -> Result<Self, InstanceError> {
        entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        entries.retain(|e| e.2 != 0.0);
        for w in entries.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(InstanceError::DuplicateEntry(w[0].0, w[0].1));
            }
        }
        let mut rows = vec![Vec::new(); m];
        let mut cols = vec![Vec::new(); n];
        for &(i, j, v) in &entries {
            if i >= m || j >= n {
                return Err(InstanceError::OutOfBounds(i, j, m, n));
            }
            if kind == MatrixKind::SignMatrix && v != 1.0 && v != -1.0 {
                return Err(InstanceError::NotSign(i, j, v));
            }
            rows[i].push((j, v));
            cols[j].push((i, v));
        }
        if kind == MatrixKind::UnitColumns {
            for (j, col) in cols.iter().enumerate() {
                let sq: f64 = col.iter().map(|&(_, v)| v * v).sum();
                if sq > 1.0 + 1e-9 {
                    return Err(InstanceError::ColumnNorm(j, sq));
                }
            }
        }
        Ok(InstanceMatrix { m, n, kind, entries, rows, cols })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> MatrixKind {
        self.kind
    }

    /// Entries sorted by (row, col).
    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }

    /// Nonzeros of row i as (col, value), sorted by col.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Nonzeros of column j as (row, value), sorted by row.
    pub fn col(&self, j: usize) -> &[(usize, f64)] {
        &self.cols[j]
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// Max over columns of the nonzero count.
    pub fn column_sparsity(&self) -> usize {
        self.cols.iter().map(|c| c.len()).max().unwrap_or(0)
    }

    /// 2m x n matrix with rows a_1..a_m, -a_1..-a_m. One-sided danger tests on
    /// the result bound the two-sided discrepancy of the original.
    pub fn append_negations(&self) -> InstanceMatrix {
        let mut entries = Vec::with_capacity(self.entries.len() * 2);
        for &(i, j, v) in &self.entries {
            entries.push((i, j, v));
            entries.push((i + self.m, j, -v));
        }
        InstanceMatrix::new(2 * self.m, self.n, entries, self.kind)
            .expect("negation of a valid matrix is valid")
    }

    /// Row sums <a_i, x> plus max |.| with ties broken by smallest row index.
    pub fn disc_eval(&self, x: &Coloring) -> Result<DiscrepancyReport, InstanceError> {
        if x.values().len() != self.n {
            return Err(InstanceError::DimensionMismatch(x.values().len(), self.n));
        }
        let xs = x.values();
        let mut per_row = Vec::with_capacity(self.m);
        let mut terms: Vec<f64> = Vec::new();
        for row in &self.rows {
            terms.clear();
            terms.extend(row.iter().map(|&(j, v)| v * xs[j]));
            per_row.push(pairwise_sum(&terms));
        }
        let mut max_abs = 0.0f64;
        let mut argmax_row = 0usize;
        for (i, &v) in per_row.iter().enumerate() {
            if v.abs() > max_abs {
                max_abs = v.abs();
                argmax_row = i;
            }
        }
        Ok(DiscrepancyReport { per_row, max_abs, argmax_row })
    }
}

/// Fractional coloring: every entry in [-1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coloring(Vec<f64>);

impl Coloring {
    pub fn new(x: Vec<f64>) -> Result<Self, InstanceError> {
        for (i, &v) in x.iter().enumerate() {
            if !(-1.0..=1.0).contains(&v) || v.is_nan() {
                return Err(InstanceError::ColoringRange(i, v));
            }
        }
        Ok(Coloring(x))
    }

    pub fn zeros(n: usize) -> Self {
        Coloring(vec![0.0; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Full +-1 coloring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FullColoring(Vec<i8>);

impl FullColoring {
    pub fn new(signs: Vec<i8>) -> Self {
        assert!(signs.iter().all(|&s| s == 1 || s == -1), "signs must be +-1");
        FullColoring(signs)
    }

    pub fn signs(&self) -> &[i8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn to_coloring(&self) -> Coloring {
        Coloring(self.0.iter().map(|&s| s as f64).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub per_row: Vec<f64>,
    pub max_abs: f64,
    pub argmax_row: usize,
}

/// Exhaustive minimum of max |Ax| over all 2^n sign vectors. Test oracle;
/// only viable for small n.
pub fn brute_force_optimum(a: &InstanceMatrix) -> (f64, FullColoring) {
    let n = a.n();
    assert!(n <= 24, "brute force limited to small n");
    let mut best = f64::INFINITY;
    let mut best_signs = vec![1i8; n];
    let mut sums = vec![0.0f64; a.m()];
    // Start from all +1.
    for (i, row) in (0..a.m()).map(|i| (i, a.row(i))) {
        sums[i] = row.iter().map(|&(_, v)| v).sum();
    }
    let mut signs = vec![1i8; n];
    let eval = |sums: &[f64]| sums.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    let mut cur = eval(&sums);
    if cur < best {
        best = cur;
        best_signs = signs.clone();
    }
    // Gray-code walk over all sign vectors.
    let total = 1u64 << n;
    for step in 1..total {
        let j = step.trailing_zeros() as usize;
        let delta = -2.0 * signs[j] as f64;
        signs[j] = -signs[j];
        for &(i, v) in a.col(j) {
            sums[i] += delta * v;
        }
        cur = eval(&sums);
        if cur < best - 1e-12 {
            best = cur;
            best_signs = signs.clone();
        }
    }
    (best, FullColoring::new(best_signs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn sign_matrix(m: usize, n: usize, entries: &[(usize, usize, f64)]) -> InstanceMatrix {
        InstanceMatrix::new(m, n, entries.to_vec(), MatrixKind::SignMatrix).unwrap()
    }

    #[test]
    fn column_sparsity_identity() {
        let a = sign_matrix(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        assert_eq!(a.column_sparsity(), 1);
    }

    #[test]
    fn column_sparsity_full() {
        let mut e = Vec::new();
        for i in 0..3 {
            for j in 0..3 {
                e.push((i, j, 1.0));
            }
        }
        let a = sign_matrix(3, 3, &e);
        assert_eq!(a.column_sparsity(), 3);
    }

    #[test]
    fn column_sparsity_empty() {
        let a = InstanceMatrix::new(0, 0, vec![], MatrixKind::General).unwrap();
        assert_eq!(a.column_sparsity(), 0);
    }

    #[test]
    fn disc_eval_direct() {
        let a = sign_matrix(2, 2, &[(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, -1.0)]);
        let rep = a.disc_eval(&Coloring::new(vec![1.0, 1.0]).unwrap()).unwrap();
        assert_eq!(rep.per_row, vec![2.0, 0.0]);
        assert_eq!(rep.max_abs, 2.0);
        assert_eq!(rep.argmax_row, 0);
    }

    #[test]
    fn disc_eval_identity() {
        let a = sign_matrix(2, 2, &[(0, 0, 1.0), (1, 1, 1.0)]);
        let rep = a.disc_eval(&Coloring::new(vec![1.0, -1.0]).unwrap()).unwrap();
        assert_eq!(rep.max_abs, 1.0);
    }

    #[test]
    fn disc_eval_dimension_mismatch() {
        let a = sign_matrix(1, 2, &[(0, 0, 1.0)]);
        assert!(a.disc_eval(&Coloring::zeros(3)).is_err());
    }

    #[test]
    fn disc_eval_matches_brute_force_minimum() {
        // Random 8x8 sign matrix; brute-force minimizer's report must agree
        // with the exhaustive minimum value.
        let mut rng = StdRng::seed_from_u64(1234);
        let mut entries = Vec::new();
        for i in 0..8 {
            for j in 0..8 {
                if rng.gen::<bool>() {
                    entries.push((i, j, if rng.gen::<bool>() { 1.0 } else { -1.0 }));
                }
            }
        }
        let a = sign_matrix(8, 8, &entries);
        let (best, argbest) = brute_force_optimum(&a);
        let rep = a.disc_eval(&argbest.to_coloring()).unwrap();
        assert!((rep.max_abs - best).abs() < 1e-12);
    }

    #[test]
    fn append_negations_shape_and_values() {
        let a = sign_matrix(1, 2, &[(0, 0, 1.0)]);
        let d = a.append_negations();
        assert_eq!(d.m(), 2);
        assert_eq!(d.n(), 2);
        assert_eq!(d.row(0), &[(0, 1.0)]);
        assert_eq!(d.row(1), &[(0, -1.0)]);
    }

    #[test]
    fn append_negations_one_sided_max_equals_two_sided() {
        let a = sign_matrix(2, 3, &[(0, 0, 1.0), (0, 2, -1.0), (1, 1, 1.0)]);
        let d = a.append_negations();
        let x = Coloring::new(vec![1.0, -1.0, 1.0]).unwrap();
        let two = a.disc_eval(&x).unwrap().max_abs;
        let one = d
            .disc_eval(&x)
            .unwrap()
            .per_row
            .iter()
            .fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        assert!((two - one).abs() < 1e-12);
    }

    #[test]
    fn duplicate_entries_rejected() {
        let r = InstanceMatrix::new(
            2,
            2,
            vec![(0, 0, 1.0), (0, 0, -1.0)],
            MatrixKind::SignMatrix,
        );
        assert!(r.is_err());
    }

    #[test]
    fn unit_columns_norm_checked() {
        let r = InstanceMatrix::new(
            2,
            1,
            vec![(0, 0, 1.0), (1, 0, 0.5)],
            MatrixKind::UnitColumns,
        );
        assert!(r.is_err());
    }

    #[test]
    fn degenerate_empty_ok() {
        let a = InstanceMatrix::new(0, 3, vec![], MatrixKind::General).unwrap();
        let rep = a.disc_eval(&Coloring::zeros(3)).unwrap();
        assert!(rep.per_row.is_empty());
        assert_eq!(rep.max_abs, 0.0);
    }

    proptest! {
        #[test]
        fn disc_eval_linear_in_x(seed in 0u64..200) {
            let mut rng = StdRng::seed_from_u64(seed);
            let (m, n) = (5usize, 6usize);
            let mut entries = Vec::new();
            for i in 0..m {
                for j in 0..n {
                    if rng.gen::<f64>() < 0.5 {
                        entries.push((i, j, rng.gen_range(-1.0..1.0)));
                    }
                }
            }
            let a = InstanceMatrix::new(m, n, entries, MatrixKind::General).unwrap();
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
            let xy: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a + b).collect();
            let rx = a.disc_eval(&Coloring::new(x).unwrap()).unwrap();
            let ry = a.disc_eval(&Coloring::new(y).unwrap()).unwrap();
            let rxy = a.disc_eval(&Coloring::new(xy).unwrap()).unwrap();
            for i in 0..m {
                prop_assert!((rxy.per_row[i] - rx.per_row[i] - ry.per_row[i]).abs() < 1e-9);
            }
        }

        #[test]
        fn negation_doubles_sparsity(seed in 0u64..100) {
            let mut rng = StdRng::seed_from_u64(seed);
            let (m, n) = (6usize, 5usize);
            let mut entries = Vec::new();
            for i in 0..m {
                for j in 0..n {
                    if rng.gen::<f64>() < 0.4 {
                        entries.push((i, j, if rng.gen::<bool>() { 1.0 } else { -1.0 }));
                    }
                }
            }
            let a = InstanceMatrix::new(m, n, entries, MatrixKind::SignMatrix).unwrap();
            prop_assert_eq!(a.append_negations().column_sparsity(), 2 * a.column_sparsity());
        }

        #[test]
        fn full_coloring_row_parity(seed in 0u64..100) {
            let mut rng = StdRng::seed_from_u64(seed);
            let (m, n) = (5usize, 7usize);
            let mut entries = Vec::new();
            for i in 0..m {
                for j in 0..n {
                    if rng.gen::<f64>() < 0.5 {
                        entries.push((i, j, if rng.gen::<bool>() { 1.0 } else { -1.0 }));
                    }
                }
            }
            let a = InstanceMatrix::new(m, n, entries, MatrixKind::SignMatrix).unwrap();
            let signs: Vec<i8> = (0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect();
            let x = FullColoring::new(signs).to_coloring();
            let rep = a.disc_eval(&x).unwrap();
            for i in 0..m {
                let v = rep.per_row[i];
                prop_assert!((v - v.round()).abs() < 1e-9);
                let parity = (a.row(i).len() % 2) as i64;
                prop_assert_eq!((v.round() as i64).rem_euclid(2), parity);
            }
        }
    }
}
