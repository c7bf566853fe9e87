//! Small dense linear algebra: symmetric eigendecomposition, orthonormal
//! bases, and Householder sampling chains.
//!
//! Everything here is plain f64 and deterministic. Matrix sizes in this crate
//! stay in the low hundreds, so dense cubic algorithms are the right tool.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("eigensolver failed to converge after {0} sweeps")]
    NoConvergence(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = if r == 0 { 0 } else { rows[0].len() };
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.at(i, j)).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                *t.at_mut(j, i) = self.at(i, j);
            }
        }
        t
    }

    /// self * other
    pub fn mul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "mul shape");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.at(i, k);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(orow.iter()) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// self^T * other
    pub fn mul_t_left(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows, "mul_t_left shape");
        let mut out = Mat::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            for i in 0..self.cols {
                let a = self.at(k, i);
                if a == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(orow.iter()) {
                    *o += a * b;
                }
            }
        }
        out
    }

    /// self * other^T
    pub fn mul_t_right(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.cols, "mul_t_right shape");
        let mut out = Mat::zeros(self.rows, other.rows);
        for i in 0..self.rows {
            for j in 0..other.rows {
                let mut s = 0.0;
                let a = self.row(i);
                let b = other.row(j);
                for k in 0..self.cols {
                    s += a[k] * b[k];
                }
                *out.at_mut(i, j) = s;
            }
        }
        out
    }

    /// Matrix-vector product.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape");
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            out[i] = dot(self.row(i), v);
        }
        out
    }

    /// v^T self v for square self.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        dot(&self.matvec(v), v)
    }

    pub fn symmetrize(&mut self) {
        assert_eq!(self.rows, self.cols);
        for i in 0..self.rows {
            for j in 0..i {
                let m = 0.5 * (self.at(i, j) + self.at(j, i));
                *self.at_mut(i, j) = m;
                *self.at_mut(j, i) = m;
            }
        }
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.at(i, i)).sum()
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.at(i, i)).collect()
    }

    pub fn scale(&mut self, c: f64) {
        for x in &mut self.data {
            *x *= c;
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += *b;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x.iter()) {
        *yi += alpha * xi;
    }
}

/// Pairwise (tree) summation; bounds rounding drift on long accumulations.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

fn hypot(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Eigendecomposition of a real symmetric matrix.
///
/// Householder tridiagonalization followed by implicit-shift QL. Returns
/// eigenvalues in ascending order with matching eigenvector columns, so
/// `a = Q diag(vals) Q^T`.
pub fn sym_eigen(a: &Mat) -> Result<(Vec<f64>, Mat), LinalgError> {
    assert_eq!(a.rows, a.cols, "sym_eigen needs square input");
    let n = a.rows;
    if n == 0 {
        return Ok((Vec::new(), Mat::zeros(0, 0)));
    }
    let mut z = a.clone();
    z.symmetrize();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut z, &mut d, &mut e);
    tql2(&mut z, &mut d, &mut e)?;

    // Sort ascending, permuting eigenvector columns.
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| d[i].partial_cmp(&d[j]).unwrap());
    let vals: Vec<f64> = idx.iter().map(|&i| d[i]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (newc, &oldc) in idx.iter().enumerate() {
        for r in 0..n {
            *vecs.at_mut(r, newc) = z.at(r, oldc);
        }
    }
    Ok((vals, vecs))
}

/// Householder reduction to tridiagonal form, accumulating transforms in z.
fn tred2(z: &mut Mat, d: &mut [f64], e: &mut [f64]) {
    let n = z.rows;
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| z.at(i, k).abs()).sum();
            if scale == 0.0 {
                e[i] = z.at(i, l);
            } else {
                for k in 0..=l {
                    *z.at_mut(i, k) /= scale;
                    h += z.at(i, k) * z.at(i, k);
                }
                let f = z.at(i, l);
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                *z.at_mut(i, l) = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    *z.at_mut(j, i) = z.at(i, j) / h;
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += z.at(j, k) * z.at(i, k);
                    }
                    for k in (j + 1)..=l {
                        g_acc += z.at(k, j) * z.at(i, k);
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * z.at(i, j);
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = z.at(i, j);
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let upd = f * e[k] + g * z.at(i, k);
                        *z.at_mut(j, k) -= upd;
                    }
                }
            }
        } else {
            e[i] = z.at(i, l);
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    for i in 0..n {
        if d[i] != 0.0 {
            for j in 0..i {
                let mut g = 0.0;
                for k in 0..i {
                    g += z.at(i, k) * z.at(k, j);
                }
                for k in 0..i {
                    let upd = g * z.at(k, i);
                    *z.at_mut(k, j) -= upd;
                }
            }
        }
        d[i] = z.at(i, i);
        *z.at_mut(i, i) = 1.0;
        for j in 0..i {
            *z.at_mut(j, i) = 0.0;
            *z.at_mut(i, j) = 0.0;
        }
    }
}

/// Implicit-shift QL on the tridiagonal (d, e), rotating z's columns along.
fn tql2(z: &mut Mat, d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    let n = z.rows;
    if n == 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0usize;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(LinalgError::NoConvergence(iter));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = hypot(g, 1.0);
            let sign_r = if g >= 0.0 { r.abs() } else { -r.abs() };
            g = d[m] - d[l] + e[l] / (g + sign_r);
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = hypot(f, g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z.at(k, i + 1);
                    *z.at_mut(k, i + 1) = s * z.at(k, i) + c * f;
                    *z.at_mut(k, i) = c * z.at(k, i) - s * f;
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

/// Modified Gram-Schmidt with one re-orthogonalization pass.
///
/// Returns an orthonormal basis of the span; inputs whose residual norm falls
/// below `drop_tol` (relative to their own norm, or absolutely for zero-ish
/// vectors) are dropped.
pub fn orthonormalize(vectors: &[Vec<f64>], drop_tol: f64) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        let mut r = v.clone();
        for _ in 0..2 {
            for b in &basis {
                let c = dot(&r, b);
                axpy(&mut r, -c, b);
            }
        }
        let nrm = norm2(&r);
        if nrm >= drop_tol {
            for x in &mut r {
                *x /= nrm;
            }
            basis.push(r);
        }
    }
    basis
}

/// Orthonormal basis of the complement of `w_basis` (which must itself be
/// orthonormal) inside R^h. Returned as an h x (h - rank) matrix of columns.
pub fn complement_basis(w_basis: &[Vec<f64>], h: usize) -> Mat {
    let target = h - w_basis.len();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(target);
    for j in 0..h {
        if cols.len() == target {
            break;
        }
        let mut r = vec![0.0; h];
        r[j] = 1.0;
        for _ in 0..2 {
            for w in w_basis {
                let c = dot(&r, w);
                axpy(&mut r, -c, w);
            }
            for b in &cols {
                let c = dot(&r, b);
                axpy(&mut r, -c, b);
            }
        }
        let nrm = norm2(&r);
        if nrm > 1e-8 {
            for x in &mut r {
                *x /= nrm;
            }
            cols.push(r);
        }
    }
    // Degenerate W basis vectors can starve the sweep above; rare, but finish
    // with scaled random-free deterministic candidates if so.
    let mut salt = 0u64;
    while cols.len() < target {
        salt += 1;
        let mut r: Vec<f64> = (0..h)
            .map(|j| {
                let x = ((j as u64 + 1) * (salt + 7)) % 1009;
                (x as f64) / 1009.0 - 0.5
            })
            .collect();
        for _ in 0..2 {
            for w in w_basis {
                let c = dot(&r, w);
                axpy(&mut r, -c, w);
            }
            for b in &cols {
                let c = dot(&r, b);
                axpy(&mut r, -c, b);
            }
        }
        let nrm = norm2(&r);
        if nrm > 1e-10 {
            for x in &mut r {
                *x /= nrm;
            }
            cols.push(r);
        }
        assert!(salt < 10_000, "complement basis construction failed");
    }
    let mut p = Mat::zeros(h, target);
    for (c, colv) in cols.iter().enumerate() {
        for r in 0..h {
            *p.at_mut(r, c) = colv[r];
        }
    }
    p
}

/// Chain of Householder reflectors mapping span{e_1..e_d} onto span(W).
///
/// Used to sample uniformly-signed vectors in the orthogonal complement of a
/// small set of vectors in O(d * h) per sample.
#[derive(Debug, Clone)]
pub struct HouseholderChain {
    pub h: usize,
    pub rank: usize,
    reflectors: Vec<Vec<f64>>,
}

impl HouseholderChain {
    /// Build from a set of (not necessarily orthonormal) vectors; linearly
    /// dependent ones are skipped.
    pub fn new(h: usize, vectors: &[Vec<f64>]) -> Self {
        let mut reflectors: Vec<Vec<f64>> = Vec::new();
        let mut rank = 0usize;
        for v in vectors {
            // Apply existing reflectors to v.
            let mut w = v.clone();
            for u in &reflectors {
                let c = 2.0 * dot(&w, u);
                axpy(&mut w, -c, u);
            }
            // Zero out components beyond position `rank`: build reflector that
            // maps w -> +-||tail|| e_rank, acting only on coords >= rank.
            let tail_norm2: f64 = w[rank..].iter().map(|x| x * x).sum();
            let tail_norm = tail_norm2.sqrt();
            if tail_norm < 1e-12 * (norm2(v) + 1.0) {
                continue; // dependent on previous vectors
            }
            let alpha = if w[rank] >= 0.0 { -tail_norm } else { tail_norm };
            let mut u = vec![0.0; h];
            u[rank] = w[rank] - alpha;
            u[rank + 1..].copy_from_slice(&w[rank + 1..]);
            let un = norm2(&u);
            if un < 1e-300 {
                continue;
            }
            for x in &mut u {
                *x /= un;
            }
            reflectors.push(u);
            rank += 1;
        }
        HouseholderChain { h, rank, reflectors }
    }

    /// Apply H_1 H_2 ... H_d to z in place (maps eigen-coordinates back).
    pub fn apply(&self, z: &mut [f64]) {
        for u in self.reflectors.iter().rev() {
            let c = 2.0 * dot(z, u);
            axpy(z, -c, u);
        }
    }

    /// Apply H_d ... H_2 H_1 to z in place (maps into eigen-coordinates).
    pub fn apply_transpose(&self, z: &mut [f64]) {
        for u in self.reflectors.iter() {
            let c = 2.0 * dot(z, u);
            axpy(z, -c, u);
        }
    }
}

/// Largest eigenvalue estimate of a symmetric matrix via power iteration
/// with a deterministic start. Adequate for residual pre-checks; exact
/// certification paths use `sym_eigen`.
pub fn lambda_max_estimate(m: &Mat, iters: usize) -> f64 {
    let n = m.rows;
    if n == 0 {
        return 0.0;
    }
    // Shift to make the dominant eigenvalue the most positive one.
    let shift: f64 = m
        .diag()
        .iter()
        .cloned()
        .fold(0.0f64, |a, b| a.max(b.abs()))
        + m.max_abs() * (n as f64).sqrt();
    let mut v: Vec<f64> = (0..n)
        .map(|j| 1.0 + 0.3 * ((j * 2654435761usize % 97) as f64) / 97.0)
        .collect();
    let nv = norm2(&v);
    for x in &mut v {
        *x /= nv;
    }
    let mut lam = 0.0;
    for _ in 0..iters {
        let mut w = m.matvec(&v);
        for (wi, &vi) in w.iter_mut().zip(v.iter()) {
            *wi += shift * vi;
        }
        let nw = norm2(&w);
        if nw == 0.0 {
            return -shift;
        }
        for x in &mut w {
            *x /= nw;
        }
        lam = m.quad_form(&w);
        v = w;
    }
    lam
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_sym(n: usize, seed: u64) -> Mat {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let x: f64 = rng.gen_range(-1.0..1.0);
                *m.at_mut(i, j) = x;
                *m.at_mut(j, i) = x;
            }
        }
        m
    }

    fn reconstruct(vals: &[f64], vecs: &Mat) -> Mat {
        let n = vecs.rows;
        let mut out = Mat::zeros(n, n);
        for k in 0..vals.len() {
            for i in 0..n {
                for j in 0..n {
                    *out.at_mut(i, j) += vals[k] * vecs.at(i, k) * vecs.at(j, k);
                }
            }
        }
        out
    }

    #[test]
    fn eigen_2x2_analytic() {
        // [[2,1],[1,2]] has eigenvalues 1 and 3.
        let m = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let (vals, _) = sym_eigen(&m).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-12);
        assert!((vals[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_diag() {
        let m = Mat::from_rows(&[
            vec![3.0, 0.0, 0.0],
            vec![0.0, -1.0, 0.0],
            vec![0.0, 0.0, 0.5],
        ]);
        let (vals, vecs) = sym_eigen(&m).unwrap();
        assert!((vals[0] + 1.0).abs() < 1e-12);
        assert!((vals[1] - 0.5).abs() < 1e-12);
        assert!((vals[2] - 3.0).abs() < 1e-12);
        let rec = reconstruct(&vals, &vecs);
        for i in 0..3 {
            for j in 0..3 {
                assert!((rec.at(i, j) - m.at(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn eigen_reconstruction_various_sizes() {
        for &n in &[1usize, 2, 3, 5, 8, 17, 33, 64] {
            let m = random_sym(n, 42 + n as u64);
            let (vals, vecs) = sym_eigen(&m).unwrap();
            let rec = reconstruct(&vals, &vecs);
            let scale = m.max_abs().max(1.0);
            for i in 0..n {
                for j in 0..n {
                    assert!(
                        (rec.at(i, j) - m.at(i, j)).abs() < 1e-9 * scale,
                        "n={} entry ({},{})",
                        n,
                        i,
                        j
                    );
                }
            }
            // Orthonormality of eigenvectors.
            for a in 0..n {
                for b in 0..n {
                    let d = dot(&vecs.col(a), &vecs.col(b));
                    let want = if a == b { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn eigen_repeated_eigenvalues() {
        // Projector onto first two coords, eigenvalues {1,1,0,0}.
        let mut m = Mat::zeros(4, 4);
        *m.at_mut(0, 0) = 1.0;
        *m.at_mut(1, 1) = 1.0;
        let (vals, _) = sym_eigen(&m).unwrap();
        assert!((vals[0]).abs() < 1e-12 && (vals[1]).abs() < 1e-12);
        assert!((vals[2] - 1.0).abs() < 1e-12 && (vals[3] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn orthonormalize_drops_dependent() {
        let v1 = vec![1.0, 1.0, 0.0];
        let v2 = vec![2.0, 2.0, 0.0];
        let v3 = vec![0.0, 0.0, 3.0];
        let basis = orthonormalize(&[v1, v2, v3], 1e-10);
        assert_eq!(basis.len(), 2);
        assert!((norm2(&basis[0]) - 1.0).abs() < 1e-12);
        assert!(dot(&basis[0], &basis[1]).abs() < 1e-12);
    }

    #[test]
    fn complement_spans_everything() {
        let w = orthonormalize(&[vec![1.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]], 1e-10);
        let p = complement_basis(&w, 4);
        assert_eq!(p.cols, 2);
        for c in 0..2 {
            let col = p.col(c);
            for wv in &w {
                assert!(dot(&col, wv).abs() < 1e-10);
            }
            assert!((norm2(&col) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn householder_chain_complement_sampling() {
        let h = 6;
        let vecs = vec![
            vec![1.0, 0.5, 0.0, -0.25, 0.0, 0.0],
            vec![0.0, 1.0, 1.0, 0.0, 0.0, 0.5],
        ];
        let chain = HouseholderChain::new(h, &vecs);
        assert_eq!(chain.rank, 2);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..32 {
            let mut z = vec![0.0; h];
            for zi in z.iter_mut().skip(chain.rank) {
                *zi = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            }
            let want = norm2(&z);
            chain.apply(&mut z);
            assert!((norm2(&z) - want).abs() < 1e-10);
            for v in &vecs {
                assert!(dot(&z, v).abs() < 1e-9, "not orthogonal to span");
            }
        }
    }

    #[test]
    fn lambda_max_close_on_random() {
        let m = random_sym(24, 5);
        let (vals, _) = sym_eigen(&m).unwrap();
        let exact = vals[vals.len() - 1];
        let est = lambda_max_estimate(&m, 300);
        assert!(est <= exact + 1e-8);
        assert!(est >= exact - 0.05 * exact.abs().max(1.0));
    }

    proptest! {
        #[test]
        fn pairwise_sum_matches_naive(xs in proptest::collection::vec(-1e6f64..1e6, 0..200)) {
            let naive: f64 = xs.iter().sum();
            let pw = pairwise_sum(&xs);
            prop_assert!((naive - pw).abs() <= 1e-6 * (1.0 + naive.abs()));
        }

        #[test]
        fn eigen_trace_preserved(seed in 0u64..500) {
            let m = random_sym(10, seed);
            let (vals, _) = sym_eigen(&m).unwrap();
            let tr: f64 = vals.iter().sum();
            prop_assert!((tr - m.trace()).abs() < 1e-9);
        }
    }
}
