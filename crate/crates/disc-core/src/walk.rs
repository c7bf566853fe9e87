//! The discrete random-walk engine: sample a unit direction from an SDP
//! covariance, step the fractional coloring, freeze saturated coordinates,
//! and round at the end.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::{Coloring, FullColoring, InstanceMatrix};
use crate::linalg::{self, HouseholderChain, Mat};
use crate::sdp::SdpSolution;

#[derive(Debug, Error)]
pub enum WalkError {
    #[error("degenerate covariance: trace {0} below threshold")]
    DegenerateCovariance(f64),
    #[error("direction lies entirely inside the projected span")]
    ProjectedAway,
}

/// Factored covariance ready for unit-norm sampling.
///
/// `Dense` carries S = Q Lambda^(1/2) in the alive coordinates, so v = S r
/// with Rademacher r has ||v||^2 = r^T Lambda r = tr(U) exactly.
/// `IsotropicPerp` is the uniform covariance on the orthogonal complement of
/// a few vectors, sampled through a Householder chain in O(rank * h).
#[derive(Debug, Clone)]
pub enum CovFactor {
    Dense { s: Mat, trace: f64 },
    IsotropicPerp { chain: HouseholderChain, trace: f64 },
}

impl CovFactor {
    /// From an explicit PSD matrix (used by tests and the sampling-law demo).
    pub fn from_dense(u: &Mat) -> Result<Self, WalkError> {
        let trace = u.trace();
        if trace <= 1e-12 {
            return Err(WalkError::DegenerateCovariance(trace));
        }
        let (vals, vecs) = linalg::sym_eigen(u).expect("covariance eigen");
        Ok(CovFactor::Dense { s: scaled_eigvecs(&vals, &vecs), trace })
    }

    /// From a solver solution U = P B P^T, reusing the cached eigen pair of B.
    pub fn from_solution(sol: &SdpSolution) -> Result<Self, WalkError> {
        let trace = sol.trace;
        if trace <= 1e-12 {
            return Err(WalkError::DegenerateCovariance(trace));
        }
        let (vals, vecs) = &sol.core_eigen;
        let sb = scaled_eigvecs(vals, vecs);
        Ok(CovFactor::Dense { s: sol.basis.mul(&sb), trace })
    }

    /// Covariance I - Proj_span{vecs} over dimension h.
    pub fn isotropic_perp(h: usize, vectors: &[Vec<f64>]) -> Result<Self, WalkError> {
        let chain = HouseholderChain::new(h, vectors);
        let trace = (h - chain.rank) as f64;
        if trace <= 1e-12 {
            return Err(WalkError::DegenerateCovariance(trace));
        }
        Ok(CovFactor::IsotropicPerp { chain, trace })
    }

    pub fn trace(&self) -> f64 {
        match self {
            CovFactor::Dense { trace, .. } => *trace,
            CovFactor::IsotropicPerp { trace, .. } => *trace,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            CovFactor::Dense { s, .. } => s.rows,
            CovFactor::IsotropicPerp { chain, .. } => chain.h,
        }
    }

    /// Materialize the covariance (scaled by nothing, i.e. U itself).
    pub fn u_matrix(&self) -> Mat {
        match self {
            CovFactor::Dense { s, .. } => s.mul_t_right(s),
            CovFactor::IsotropicPerp { chain, .. } => {
                let h = chain.h;
                let mut u = Mat::identity(h);
                // I - QQ^T with Q the mapped first `rank` basis vectors.
                for c in 0..chain.rank {
                    let mut q = vec![0.0; h];
                    q[c] = 1.0;
                    chain.apply(&mut q);
                    for i in 0..h {
                        for j in 0..h {
                            *u.at_mut(i, j) -= q[i] * q[j];
                        }
                    }
                }
                u
            }
        }
    }
}

fn scaled_eigvecs(vals: &[f64], vecs: &Mat) -> Mat {
    let n = vecs.rows;
    let k = vals.len();
    let mut s = Mat::zeros(n, k);
    for c in 0..k {
        let lam = vals[c].max(0.0).sqrt();
        for r in 0..n {
            *s.at_mut(r, c) = vecs.at(r, c) * lam;
        }
    }
    s
}

/// Sample v = tr(U)^(-1/2) Q Lambda^(1/2) r with i.i.d. Rademacher r.
/// The output has exactly unit 2-norm.
pub fn sample_direction(factor: &CovFactor, rng: &mut ChaCha8Rng) -> Result<Vec<f64>, WalkError> {
    let trace = factor.trace();
    if trace <= 1e-12 {
        return Err(WalkError::DegenerateCovariance(trace));
    }
    let inv_sqrt = 1.0 / trace.sqrt();
    match factor {
        CovFactor::Dense { s, .. } => {
            let k = s.cols;
            let mut v = vec![0.0; s.rows];
            for c in 0..k {
                let r: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                for row in 0..s.rows {
                    v[row] += s.at(row, c) * r;
                }
            }
            for x in &mut v {
                *x *= inv_sqrt;
            }
            Ok(v)
        }
        CovFactor::IsotropicPerp { chain, .. } => {
            let mut z = vec![0.0; chain.h];
            for zi in z.iter_mut().skip(chain.rank) {
                *zi = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            }
            chain.apply(&mut z);
            for x in &mut z {
                *x *= inv_sqrt;
            }
            Ok(z)
        }
    }
}

/// Remove the components of v along span(span_vectors) and renormalize.
/// The span is orthonormalized internally so the projection is exact even
/// for strongly correlated span vectors. Errors when the residual norm
/// drops below 1e-8 (caller must re-solve).
pub fn project_out(v: &[f64], span_vectors: &[&[f64]]) -> Result<Vec<f64>, WalkError> {
    let owned: Vec<Vec<f64>> = span_vectors.iter().map(|s| s.to_vec()).collect();
    let basis = linalg::orthonormalize(&owned, 1e-10);
    let mut r = v.to_vec();
    for _ in 0..2 {
        for q in &basis {
            let c = linalg::dot(&r, q);
            linalg::axpy(&mut r, -c, q);
        }
    }
    let nrm = linalg::norm2(&r);
    if nrm < 1e-8 {
        return Err(WalkError::ProjectedAway);
    }
    for x in &mut r {
        *x /= nrm;
    }
    Ok(r)
}

/// Log entry for a coordinate leaving the alive set.
#[derive(Debug, Clone, Copy)]
pub struct FreezeEvent {
    pub coord: usize,
    pub step: u64,
    pub value: f64,
}

/// Mutable state of one walk run.
#[derive(Debug, Clone)]
pub struct WalkState {
    x: Vec<f64>,
    alive: Vec<usize>,
    alive_pos: Vec<usize>, // usize::MAX when frozen
    t: f64,
    dt: f64,
    steps_taken: u64,
    clamp_events: u64,
    freeze_log: Vec<FreezeEvent>,
    freeze_band: f64,
}

impl WalkState {
    pub fn new(n: usize, dt: f64) -> Self {
        assert!(dt > 0.0);
        let band = 1.0 - 1.0 / (2.0 * n.max(1) as f64);
        WalkState {
            x: vec![0.0; n],
            alive: (0..n).collect(),
            alive_pos: (0..n).collect(),
            t: 0.0,
            dt,
            steps_taken: 0,
            clamp_events: 0,
            freeze_log: Vec::new(),
            freeze_band: band,
        }
    }

    /// Default step size 1/(8n).
    pub fn default_dt(n: usize) -> f64 {
        1.0 / (8.0 * n.max(1) as f64)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn coloring(&self) -> Coloring {
        Coloring::new(self.x.clone()).expect("walk keeps x in [-1,1]")
    }

    pub fn alive(&self) -> &[usize] {
        &self.alive
    }

    pub fn n_alive(&self) -> usize {
        self.alive.len()
    }

    pub fn is_alive(&self, j: usize) -> bool {
        self.alive_pos[j] != usize::MAX
    }

    /// Position of coordinate j within the alive ordering.
    pub fn alive_index(&self, j: usize) -> Option<usize> {
        let p = self.alive_pos[j];
        (p != usize::MAX).then_some(p)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }

    pub fn freeze_log(&self) -> &[FreezeEvent] {
        &self.freeze_log
    }

    /// Gather a full-length vector restricted to alive coordinates, in alive
    /// order.
    pub fn gather_alive(&self, full: &[f64]) -> Vec<f64> {
        self.alive.iter().map(|&j| full[j]).collect()
    }

    /// x_t restricted to alive coordinates.
    pub fn x_alive(&self) -> Vec<f64> {
        self.gather_alive(&self.x)
    }

    /// Apply the update x += v sqrt(dt) where v lives on the alive
    /// coordinates (in alive order). Clamps overshoot into [-1,1], recomputes
    /// the alive set, and returns the coordinates frozen by this step.
    pub fn step(&mut self, v_alive: &[f64]) -> Vec<usize> {
        assert_eq!(v_alive.len(), self.alive.len(), "direction length");
        let sdt = self.dt.sqrt();
        let mut frozen = Vec::new();
        for (pos, &j) in self.alive.iter().enumerate() {
            let mut nx = self.x[j] + v_alive[pos] * sdt;
            if nx > 1.0 {
                nx = 1.0;
                self.clamp_events += 1;
            } else if nx < -1.0 {
                nx = -1.0;
                self.clamp_events += 1;
            }
            self.x[j] = nx;
            if nx.abs() > self.freeze_band {
                frozen.push(j);
            }
        }
        self.steps_taken += 1;
        self.t = self.steps_taken as f64 * self.dt;
        for &j in &frozen {
            self.alive_pos[j] = usize::MAX;
            self.freeze_log.push(FreezeEvent { coord: j, step: self.steps_taken, value: self.x[j] });
        }
        if !frozen.is_empty() {
            self.alive.retain(|&j| self.alive_pos[j] != usize::MAX);
            for (pos, &j) in self.alive.iter().enumerate() {
                self.alive_pos[j] = pos;
            }
        }
        frozen
    }
}

/// Round a terminated walk to a full coloring: sign per coordinate (zero maps
/// to +1); when at most `exhaust_limit` coordinates are still alive they are
/// completed by exhaustive search minimizing the max row discrepancy of `a`,
/// ties broken lexicographically with +1 preferred.
pub fn round_final(
    a: &InstanceMatrix,
    x: &[f64],
    alive: &[usize],
    exhaust_limit: usize,
) -> FullColoring {
    let mut signs: Vec<i8> = x.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect();
    if alive.is_empty() || alive.len() > exhaust_limit {
        return FullColoring::new(signs);
    }
    // Base row sums with alive coordinates excluded; alive columns gathered.
    let mut base = vec![0.0f64; a.m()];
    let mut alive_cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); alive.len()];
    let is_alive: Vec<bool> = {
        let mut f = vec![false; x.len()];
        for &j in alive {
            f[j] = true;
        }
        f
    };
    for i in 0..a.m() {
        let mut s = 0.0;
        for &(j, val) in a.row(i) {
            if is_alive[j] {
                let pos = alive.iter().position(|&aj| aj == j).unwrap();
                alive_cols[pos].push((i, val));
            } else {
                s += val * signs[j] as f64;
            }
        }
        base[i] = s;
    }
    let k = alive.len();
    let mut sums = base.clone();
    // Start at all +1 (mask 0).
    for col in &alive_cols {
        for &(i, val) in col {
            sums[i] += val;
        }
    }
    let eval = |sums: &[f64]| sums.iter().fold(0.0f64, |m, &s| m.max(s.abs()));
    // Lexicographic on coordinates in alive order, +1 (bit clear) preferred:
    // the first differing coordinate decides.
    let lex_less = |a: u32, b: u32| {
        let d = a ^ b;
        d != 0 && (a >> d.trailing_zeros()) & 1 == 0
    };
    let mut best = eval(&sums);
    let mut best_mask = 0u32;
    let mut cur_mask = 0u32;
    for g in 1..(1u32 << k) {
        let bit = g.trailing_zeros() as usize;
        cur_mask ^= 1 << bit;
        let newly_neg = cur_mask >> bit & 1 == 1;
        let delta = if newly_neg { -2.0 } else { 2.0 };
        for &(i, val) in &alive_cols[bit] {
            sums[i] += delta * val;
        }
        let worst = eval(&sums);
        let better = worst < best - 1e-12;
        let tie_better = (worst - best).abs() <= 1e-12 && lex_less(cur_mask, best_mask);
        if better || tie_better {
            best = worst;
            best_mask = cur_mask;
        }
    }
    for (bit, &j) in alive.iter().enumerate() {
        signs[j] = if best_mask >> bit & 1 == 0 { 1 } else { -1 };
    }
    FullColoring::new(signs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::MatrixKind;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn sample_rank_one_is_signed_basis_vector() {
        let mut u = Mat::zeros(3, 3);
        *u.at_mut(0, 0) = 1.0;
        let f = CovFactor::from_dense(&u).unwrap();
        let mut r = rng(3);
        let mut seen_plus = false;
        let mut seen_minus = false;
        for _ in 0..64 {
            let v = sample_direction(&f, &mut r).unwrap();
            assert!((linalg::norm2(&v) - 1.0).abs() < 1e-12);
            assert!(v[1].abs() < 1e-12 && v[2].abs() < 1e-12);
            assert!((v[0].abs() - 1.0).abs() < 1e-12);
            if v[0] > 0.0 {
                seen_plus = true;
            } else {
                seen_minus = true;
            }
        }
        assert!(seen_plus && seen_minus);
    }

    #[test]
    fn sample_identity_covariance_entries() {
        let h = 8;
        let f = CovFactor::from_dense(&Mat::identity(h)).unwrap();
        let mut r = rng(9);
        let v = sample_direction(&f, &mut r).unwrap();
        let want = 1.0 / (h as f64).sqrt();
        for &x in &v {
            assert!((x.abs() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn sample_covariance_matches_u_monte_carlo() {
        // Fixed PSD U (h=8); 1e5 samples must reproduce U / tr(U) within
        // 0.02 entrywise.
        let h = 8;
        let mut seedm = Mat::zeros(h, h);
        let mut r = rng(123);
        for i in 0..h {
            for j in 0..h {
                *seedm.at_mut(i, j) = if (i * 7 + j * 3) % 5 < 2 { 0.7 } else { -0.4 };
            }
        }
        let mut u = seedm.mul_t_right(&seedm); // PSD
        u.scale(1.0 / 4.0);
        let f = CovFactor::from_dense(&u).unwrap();
        let tr = u.trace();
        let samples = 100_000;
        let mut acc = Mat::zeros(h, h);
        for _ in 0..samples {
            let v = sample_direction(&f, &mut r).unwrap();
            assert!((linalg::norm2(&v) - 1.0).abs() < 1e-9);
            for i in 0..h {
                for j in 0..h {
                    *acc.at_mut(i, j) += v[i] * v[j];
                }
            }
        }
        acc.scale(1.0 / samples as f64);
        for i in 0..h {
            for j in 0..h {
                let want = u.at(i, j) / tr;
                assert!(
                    (acc.at(i, j) - want).abs() < 0.02,
                    "cov entry ({},{}): {} vs {}",
                    i,
                    j,
                    acc.at(i, j),
                    want
                );
            }
        }
    }

    #[test]
    fn degenerate_covariance_rejected() {
        let u = Mat::zeros(3, 3);
        assert!(matches!(
            CovFactor::from_dense(&u),
            Err(WalkError::DegenerateCovariance(_))
        ));
    }

    #[test]
    fn step_moves_by_sqrt_dt() {
        let mut st = WalkState::new(2, 0.01);
        st.step(&[1.0, 0.0]);
        assert!((st.x()[0] - 0.1).abs() < 1e-15);
        assert_eq!(st.x()[1], 0.0);
        assert!((st.t() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn freeze_threshold_formula() {
        // n=2: freeze band 1 - 1/4 = 0.75.
        let mut st = WalkState::new(2, 0.64);
        let frozen = st.step(&[1.0, 0.0]); // moves x0 to 0.8 > 0.75
        assert_eq!(frozen, vec![0]);
        assert_eq!(st.n_alive(), 1);
        assert!(!st.is_alive(0));
        assert_eq!(st.freeze_log().len(), 1);
    }

    #[test]
    fn frozen_coordinates_never_move() {
        let mut st = WalkState::new(2, 0.64);
        st.step(&[1.0, 0.0]);
        let frozen_val = st.x()[0];
        st.step(&[1.0]); // only coordinate 1 is alive now
        assert_eq!(st.x()[0], frozen_val);
    }

    #[test]
    fn norm_growth_pythagoras() {
        // v orthogonal to x implies ||x'||^2 = ||x||^2 + dt before clamping.
        let mut st = WalkState::new(4, 0.01);
        let v1 = [0.5f64, 0.5, 0.5, 0.5];
        st.step(&v1);
        let n1: f64 = st.x().iter().map(|x| x * x).sum();
        assert!((n1 - 0.01).abs() < 1e-12);
        let x = st.x_alive();
        let v2 = project_out(&[1.0, -1.0, 0.3, 0.1], &[&x]).unwrap();
        st.step(&v2);
        let n2: f64 = st.x().iter().map(|x| x * x).sum();
        assert!((n2 - 0.02).abs() < 1e-12);
    }

    #[test]
    fn project_out_cases() {
        let v = project_out(&[1.0, 0.0], &[&[0.0, 1.0][..]]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let v = project_out(&[s, s], &[&[0.0, 1.0][..]]).unwrap();
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12);
        assert!(matches!(
            project_out(&[0.0, 1.0], &[&[0.0, 1.0][..]]),
            Err(WalkError::ProjectedAway)
        ));
    }

    #[test]
    fn round_final_signs_and_tie() {
        let a = InstanceMatrix::new(1, 2, vec![(0, 0, 1.0)], MatrixKind::SignMatrix).unwrap();
        let c = round_final(&a, &[0.99, -0.99], &[], 10);
        assert_eq!(c.signs(), &[1, -1]);
        let c = round_final(&a, &[0.0, 0.5], &[], 10);
        assert_eq!(c.signs(), &[1, 1]);
    }

    #[test]
    fn round_final_exhaustive_two_alive() {
        // A = [[1,1]] with x=(0,0) both alive: optimal completions are
        // (+1,-1) and (-1,+1); the +1-preferring lexicographic rule picks
        // (+1,-1).
        let a = InstanceMatrix::new(
            1,
            2,
            vec![(0, 0, 1.0), (0, 1, 1.0)],
            MatrixKind::SignMatrix,
        )
        .unwrap();
        let c = round_final(&a, &[0.0, 0.0], &[0, 1], 10);
        assert_eq!(c.signs(), &[1, -1]);
        let rep = a.disc_eval(&c.to_coloring()).unwrap();
        assert_eq!(rep.max_abs, 0.0);
    }

    #[test]
    fn isotropic_perp_sampler_orthogonal_and_unit() {
        let h = 16;
        let x: Vec<f64> = (0..h).map(|j| (j as f64 * 0.13).sin() * 0.4).collect();
        let f = CovFactor::isotropic_perp(h, &[x.clone()]).unwrap();
        let mut r = rng(5);
        for _ in 0..50 {
            let v = sample_direction(&f, &mut r).unwrap();
            assert!((linalg::norm2(&v) - 1.0).abs() < 1e-12);
            assert!(linalg::dot(&v, &x).abs() < 1e-10);
        }
        assert!((f.trace() - (h as f64 - 1.0)).abs() < 1e-12);
    }
}
