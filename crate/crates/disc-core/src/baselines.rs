//! Reference algorithms: uniform random coloring, the classical iterative
//! rounding argument, and the plain blocked walk for unit-column instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use thiserror::Error;

use crate::engine::{
    self, Assembly, Ctx, EngineConfig, EngineError, Observation, Policy, RunOutput,
};
use crate::instance::{FullColoring, InstanceMatrix};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("kernel extraction failed after perturbation retries")]
    KernelDegenerate,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// I.i.d. uniform +-1 coloring.
pub fn random_coloring(n: usize, seed: u64) -> FullColoring {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    FullColoring::new((0..n).map(|_| if rng.gen::<bool>() { 1 } else { -1 }).collect())
}

/// Classical iterative rounding: repeatedly restrict to floating variables,
/// keep rows with more than k floating nonzeros (always fewer rows than
/// floating variables), move along a kernel vector until a variable hits
/// +-1, and fix it. Every produced coloring satisfies disc <= 2k - 1.
pub fn iterative_rounding_bf(a: &InstanceMatrix, k: usize) -> Result<FullColoring, BaselineError> {
    let n = a.n();
    let mut x = vec![0.0f64; n];
    let fixed_band = 1.0 - 1e-12;
    loop {
        let floating: Vec<usize> = (0..n).filter(|&j| x[j].abs() < fixed_band).collect();
        if floating.is_empty() {
            break;
        }
        let mut pos = vec![usize::MAX; n];
        for (p, &j) in floating.iter().enumerate() {
            pos[j] = p;
        }
        // Active rows: more than k floating nonzeros.
        let mut active_rows: Vec<usize> = Vec::new();
        for i in 0..a.m() {
            let cnt = a.row(i).iter().filter(|&&(j, _)| pos[j] != usize::MAX).count();
            if cnt > k {
                active_rows.push(i);
            }
        }
        if active_rows.is_empty() {
            // Fix the remaining floats to their sign; zero maps to +1.
            for &j in &floating {
                x[j] = if x[j] < 0.0 { -1.0 } else { 1.0 };
            }
            break;
        }
        let d = kernel_vector(a, &active_rows, &floating, &pos)?;
        // Move along +d until the first variable hits the boundary.
        let mut alpha = f64::INFINITY;
        for (p, &j) in floating.iter().enumerate() {
            if d[p] > 1e-14 {
                alpha = alpha.min((1.0 - x[j]) / d[p]);
            } else if d[p] < -1e-14 {
                alpha = alpha.min((-1.0 - x[j]) / d[p]);
            }
        }
        assert!(alpha.is_finite() && alpha > 0.0, "kernel move must make progress");
        for (p, &j) in floating.iter().enumerate() {
            x[j] += alpha * d[p];
        }
        // Snap anything at the boundary exactly.
        let mut fixed_any = false;
        for &j in &floating {
            if x[j].abs() >= fixed_band {
                x[j] = if x[j] < 0.0 { -1.0 } else { 1.0 };
                fixed_any = true;
            }
        }
        assert!(fixed_any, "each pivot fixes at least one variable");
    }
    Ok(FullColoring::new(x.iter().map(|&v| if v < 0.0 { -1 } else { 1 }).collect()))
}

/// Nonzero kernel vector of the active-row submatrix over floating columns,
/// via Gaussian elimination with partial pivoting. Retries once with a tiny
/// diagonal perturbation when the pivoting is numerically ambiguous.
fn kernel_vector(
    a: &InstanceMatrix,
    active_rows: &[usize],
    floating: &[usize],
    pos: &[usize],
) -> Result<Vec<f64>, BaselineError> {
    let rows = active_rows.len();
    let cols = floating.len();
    debug_assert!(rows < cols, "active rows must be fewer than floating vars");
    for attempt in 0..2 {
        let mut m = vec![0.0f64; rows * cols];
        for (r, &i) in active_rows.iter().enumerate() {
            for &(j, v) in a.row(i) {
                if pos[j] != usize::MAX {
                    m[r * cols + pos[j]] = v;
                }
            }
            if attempt == 1 {
                // Column pivot perturbation for degenerate repeats.
                m[r * cols + (r % cols)] += 1e-12;
            }
        }
        // Forward elimination with partial pivoting; track pivot columns.
        let mut pivot_col = vec![usize::MAX; rows];
        let mut rank = 0usize;
        let mut col = 0usize;
        while rank < rows && col < cols {
            let mut best = rank;
            for r in rank + 1..rows {
                if m[r * cols + col].abs() > m[best * cols + col].abs() {
                    best = r;
                }
            }
            if m[best * cols + col].abs() < 1e-10 {
                col += 1;
                continue;
            }
            if best != rank {
                for c in 0..cols {
                    m.swap(rank * cols + c, best * cols + c);
                }
            }
            let piv = m[rank * cols + col];
            for r in rank + 1..rows {
                let f = m[r * cols + col] / piv;
                if f != 0.0 {
                    for c in col..cols {
                        m[r * cols + c] -= f * m[rank * cols + c];
                    }
                }
            }
            pivot_col[rank] = col;
            rank += 1;
            col += 1;
        }
        // Free column: first column that is not a pivot.
        let pivots: Vec<usize> = pivot_col[..rank].to_vec();
        let free = (0..cols).find(|c| !pivots.contains(c));
        let Some(free) = free else {
            continue;
        };
        // Back-substitute: d[free] = 1, solve pivot entries.
        let mut d = vec![0.0f64; cols];
        d[free] = 1.0;
        for r in (0..rank).rev() {
            let pc = pivots[r];
            let mut s = 0.0;
            for c in pc + 1..cols {
                s += m[r * cols + c] * d[c];
            }
            d[pc] = -s / m[r * cols + pc];
        }
        // Validate: residual must vanish.
        let mut ok = true;
        for &i in active_rows {
            let mut s = 0.0;
            for &(j, v) in a.row(i) {
                if pos[j] != usize::MAX {
                    s += v * d[pos[j]];
                }
            }
            if s.abs() > 1e-8 {
                ok = false;
                break;
            }
        }
        if ok {
            return Ok(d);
        }
    }
    Err(BaselineError::KernelDegenerate)
}

/// Plain blocked walk (no affine blocks): rows with alive squared mass >= 4
/// are blocked, kappa = eta = 1/4.
struct BanaszczykPolicy {
    status_large: Vec<bool>,
}

impl Policy for BanaszczykPolicy {
    fn name(&self) -> &'static str {
        "banaszczyk"
    }

    fn params_json(&self) -> serde_json::Value {
        json!({ "kappa": 0.25, "eta": 0.25, "large_mass": 4.0 })
    }

    fn stop_threshold(&self) -> usize {
        10
    }

    fn fail_denominator(&self) -> f64 {
        2.0
    }

    fn refresh(&mut self, ctx: &Ctx) {
        for i in 0..ctx.sq_mass.len() {
            self.status_large[i] = ctx.sq_mass[i] >= 4.0;
        }
    }

    fn on_freeze(&mut self, ctx: &Ctx, frozen: &[usize]) -> bool {
        let mut structural = false;
        for &j in frozen {
            for &(i, _) in ctx.a.col(j) {
                let large = ctx.sq_mass[i] >= 4.0;
                if large != self.status_large[i] {
                    self.status_large[i] = large;
                    structural = true;
                }
            }
        }
        structural
    }

    fn observe_step(&mut self, _ctx: &Ctx) -> Observation {
        Observation::quiet()
    }

    fn assemble(&self, ctx: &Ctx) -> Assembly {
        let mut w_rows = Vec::new();
        let mut blocked_ids = Vec::new();
        for i in 0..self.status_large.len() {
            if self.status_large[i] {
                w_rows.push(engine::row_alive_dense(ctx.a, i, ctx.state));
                blocked_ids.push(i);
            }
        }
        Assembly { w_rows, blocked_row_ids: blocked_ids, blocks: Vec::new(), kappa: 0.25, eta: 0.25 }
    }

    fn detail_json(&self, _ctx: &Ctx) -> serde_json::Value {
        json!({ "final_large": self.status_large.iter().filter(|&&b| b).count() })
    }
}

pub fn banaszczyk_walk(a: &InstanceMatrix, cfg: &EngineConfig) -> Result<RunOutput, EngineError> {
    let mut policy = BanaszczykPolicy { status_large: vec![false; a.m()] };
    engine::run_walk(a, a, &mut policy, cfg)
}
