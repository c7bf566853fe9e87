//! Multi-scale walk for unit-column instances: dyadic magnitude scales, one
//! set of Beck-Fiala machinery per scale, a single joint SDP per step.

use serde_json::json;
use thiserror::Error;

use crate::bf::target_b;
use crate::engine::{
    self, Assembly, AssemblyBlock, Ctx, EngineConfig, EngineError, Observation, Policy, RunOutput,
};
use crate::instance::{InstanceMatrix, MatrixKind};

#[derive(Debug, Error)]
pub enum KomlosError {
    #[error("expected unit-l2 columns, got kind {0:?}")]
    NotUnitColumns(MatrixKind),
    #[error("column {0} has squared norm {1} > 1")]
    ColumnNorm(usize, f64),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Number of dyadic scales: 1 + ceil(5 log2 log2 n), floored at 2.
pub fn scale_count(n: usize) -> usize {
    let lg = (n.max(2) as f64).log2();
    let lglg = lg.log2().max(1.0);
    (1 + (5.0 * lglg).ceil() as usize).max(2)
}

#[derive(Debug, Clone)]
pub struct ScaleParams {
    /// Sparsity proxy 2^(2p).
    pub k_p: f64,
    /// Target b_p = B(k_p) * sqrt(P).
    pub b_p: f64,
    /// Tiny threshold on alive squared mass.
    pub mu_p: f64,
    pub beta_p: f64,
    pub eta_p: f64,
}

/// Scale index (1-based) of an entry magnitude: heavy scales p < P hold
/// (2^-p, 2^-p+1]; everything at or below the last heavy boundary goes to
/// the light scale P. Boundary values fall to the deeper scale.
pub fn scale_of_entry(mag: f64, p_count: usize) -> usize {
    debug_assert!(mag > 0.0 && mag <= 1.0 + 1e-12);
    for p in 1..p_count {
        if mag > (2.0f64).powi(-(p as i32)) {
            return p;
        }
    }
    p_count
}

/// Entry partition of a unit-column matrix into P magnitude scales, each
/// rescaled so that A = sum_p 2^(1-p) A^(p).
#[derive(Debug, Clone)]
pub struct ScaleDecomposition {
    pub p_count: usize,
    /// Scale matrices (same shape as the input; empty rows allowed).
    pub scales: Vec<InstanceMatrix>,
    pub params: Vec<ScaleParams>,
}

pub fn scale_decompose(a: &InstanceMatrix, c_b: f64) -> Result<ScaleDecomposition, KomlosError> {
    if a.kind() != MatrixKind::UnitColumns {
        return Err(KomlosError::NotUnitColumns(a.kind()));
    }
    let n = a.n();
    let p_count = scale_count(n);
    let ln_n = (n.max(4) as f64).ln();
    let mut per_scale_entries: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); p_count];
    for &(i, j, v) in a.entries() {
        let p = scale_of_entry(v.abs(), p_count);
        let scaled = v * (2.0f64).powi(p as i32 - 1);
        per_scale_entries[p - 1].push((i, j, scaled));
    }
    let mut scales = Vec::with_capacity(p_count);
    let mut params = Vec::with_capacity(p_count);
    let sqrt_p = (p_count as f64).sqrt();
    for (idx, entries) in per_scale_entries.into_iter().enumerate() {
        let p = idx + 1;
        scales.push(
            InstanceMatrix::new(a.m(), n, entries, MatrixKind::General)
                .expect("scaled entries are in range"),
        );
        let k_p = (2.0f64).powi(2 * p as i32);
        let k_int = k_p.min(1e12) as usize;
        let b_p = target_b(n, k_int.max(1), c_b) * sqrt_p;
        let mu_p = b_p.max(b_p * b_p / ln_n);
        let beta_p = b_p / (10.0 * k_p);
        let eta_p = if p == p_count { 1.0 / 6.0 } else { 1.0 / (6.0 * p_count as f64) };
        params.push(ScaleParams { k_p, b_p, mu_p, beta_p, eta_p });
    }
    Ok(ScaleDecomposition { p_count, scales, params })
}

impl ScaleDecomposition {
    /// Entrywise reconstruction error of sum_p 2^(1-p) A^(p) against `a`.
    pub fn reconstruction_error(&self, a: &InstanceMatrix) -> f64 {
        let mut recon: std::collections::HashMap<(usize, usize), f64> =
            std::collections::HashMap::new();
        for (idx, s) in self.scales.iter().enumerate() {
            let w = (2.0f64).powi(-(idx as i32));
            for &(i, j, v) in s.entries() {
                *recon.entry((i, j)).or_insert(0.0) += v * w;
            }
        }
        let mut err = 0.0f64;
        for &(i, j, v) in a.entries() {
            let r = recon.remove(&(i, j)).unwrap_or(0.0);
            err = err.max((r - v).abs());
        }
        for (_, r) in recon {
            err = err.max(r.abs());
        }
        err
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScaleStatus {
    Large,
    Medium,
    Tiny,
}

/// The run matrix stacks the doubled rows of every scale; `row_scale` maps a
/// run row back to its scale.
struct KomlosPolicy {
    p_count: usize,
    params: Vec<ScaleParams>,
    row_scale: Vec<usize>,
    status: Vec<ScaleStatus>,
    dangerous: Vec<bool>,
    /// Below 10 P alive coordinates the danger machinery is dropped and the
    /// walk finishes like the plain blocked walk.
    tail_mode: bool,
    tail_threshold: usize,
    danger_events: u64,
    c_b: f64,
}

impl KomlosPolicy {
    fn classify(&self, run_row: usize, sq: f64) -> ScaleStatus {
        let p = &self.params[self.row_scale[run_row]];
        if sq > 10.0 * p.k_p {
            ScaleStatus::Large
        } else if sq <= p.mu_p {
            ScaleStatus::Tiny
        } else {
            ScaleStatus::Medium
        }
    }
}

impl Policy for KomlosPolicy {
    fn name(&self) -> &'static str {
        "komlos"
    }

    fn params_json(&self) -> serde_json::Value {
        json!({
            "p_count": self.p_count,
            "c_b": self.c_b,
            "kappa": 1.0 / 6.0,
            "eta": 1.0 / 6.0,
            "b_p": self.params.iter().map(|p| p.b_p).collect::<Vec<_>>(),
            "mu_p": self.params.iter().map(|p| p.mu_p).collect::<Vec<_>>(),
            "eta_p": self.params.iter().map(|p| p.eta_p).collect::<Vec<_>>(),
            "tail_threshold": self.tail_threshold,
        })
    }

    fn stop_threshold(&self) -> usize {
        10
    }

    fn refresh(&mut self, ctx: &Ctx) {
        self.tail_mode = ctx.state.n_alive() <= self.tail_threshold;
        for i in 0..ctx.sq_mass.len() {
            self.status[i] = self.classify(i, ctx.sq_mass[i]);
        }
    }

    fn on_freeze(&mut self, ctx: &Ctx, frozen: &[usize]) -> bool {
        let mut structural = false;
        for &j in frozen {
            for &(i, _) in ctx.a.col(j) {
                let new = self.classify(i, ctx.sq_mass[i]);
                if new != self.status[i] {
                    self.status[i] = new;
                    structural = true;
                    if new == ScaleStatus::Tiny {
                        self.dangerous[i] = false;
                    }
                }
            }
        }
        structural
    }

    fn observe_step(&mut self, ctx: &Ctx) -> Observation {
        let mut obs = Observation::quiet();
        if !self.tail_mode && ctx.state.n_alive() <= self.tail_threshold {
            self.tail_mode = true;
            obs.structural = true;
        }
        if self.tail_mode {
            return obs;
        }
        for i in 0..self.status.len() {
            if self.status[i] != ScaleStatus::Medium || self.dangerous[i] {
                continue;
            }
            let p = &self.params[self.row_scale[i]];
            if ctx.disc[i] >= 2.0 * p.b_p {
                self.dangerous[i] = true;
                self.danger_events += 1;
                obs.structural = true;
                obs.block_now.push(i);
            }
        }
        obs
    }

    fn assemble(&self, ctx: &Ctx) -> Assembly {
        let mut w_rows = Vec::new();
        let mut blocked_ids = Vec::new();
        let mut per_scale_rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); self.p_count];
        let mut per_scale_ids: Vec<Vec<usize>> = vec![Vec::new(); self.p_count];
        for i in 0..self.status.len() {
            match self.status[i] {
                ScaleStatus::Large => {
                    w_rows.push(engine::row_alive_dense(ctx.a, i, ctx.state));
                    blocked_ids.push(i);
                }
                ScaleStatus::Medium if !self.tail_mode => {
                    let s = self.row_scale[i];
                    let row =
                        engine::modified_row_alive(ctx.a, i, self.params[s].beta_p, ctx.state);
                    if self.dangerous[i] {
                        w_rows.push(row.clone());
                        blocked_ids.push(i);
                    }
                    per_scale_rows[s].push(row);
                    per_scale_ids[s].push(i);
                }
                _ => {}
            }
        }
        let blocks = per_scale_rows
            .into_iter()
            .zip(per_scale_ids)
            .enumerate()
            .filter(|(_, (rows, _))| !rows.is_empty())
            .map(|(s, (rows, row_ids))| AssemblyBlock {
                rows,
                row_ids,
                eta_s: self.params[s].eta_p,
            })
            .collect();
        Assembly {
            w_rows,
            blocked_row_ids: blocked_ids,
            blocks,
            kappa: 1.0 / 6.0,
            eta: 1.0 / 6.0,
        }
    }

    fn y_values(&self, ctx: &Ctx) -> Vec<(usize, f64)> {
        (0..self.status.len())
            .filter(|&i| self.status[i] == ScaleStatus::Medium)
            .map(|i| {
                let p = &self.params[self.row_scale[i]];
                (i, ctx.disc[i] + p.beta_p * ctx.energy[i])
            })
            .collect()
    }

    fn detail_json(&self, ctx: &Ctx) -> serde_json::Value {
        let mut per_scale_max = vec![0.0f64; self.p_count];
        for i in 0..self.status.len() {
            let s = self.row_scale[i];
            per_scale_max[s] = per_scale_max[s].max(ctx.disc[i].abs());
        }
        // Light-scale subscale histogram: dyadic magnitude bands of the
        // rescaled light entries. Diagnostic only.
        let qmax = (ctx.a.n().max(2) as f64).log2().ceil() as usize;
        let mut subscale = vec![0u64; qmax + 1];
        for i in 0..self.status.len() {
            if self.row_scale[i] + 1 != self.p_count {
                continue;
            }
            for &(_, v) in ctx.a.row(i) {
                let mag = v.abs();
                if mag <= 0.0 {
                    continue;
                }
                let q = (-mag.log2()).ceil().max(1.0) as usize;
                subscale[q.min(qmax)] += 1;
            }
        }
        json!({
            "danger_events": self.danger_events,
            "tail_mode": self.tail_mode,
            "per_scale_max_disc": per_scale_max,
            "light_subscale_counts": subscale,
        })
    }
}

/// Run the multi-scale walk. The run matrix stacks the doubled rows of each
/// scale matrix; the original instance is evaluated.
pub fn run_komlos(
    a: &InstanceMatrix,
    c_b: f64,
    cfg: &EngineConfig,
) -> Result<RunOutput, KomlosError> {
    for j in 0..a.n() {
        let sq: f64 = a.col(j).iter().map(|&(_, v)| v * v).sum();
        if sq > 1.0 + 1e-9 {
            return Err(KomlosError::ColumnNorm(j, sq));
        }
    }
    let decomp = scale_decompose(a, c_b)?;
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut row_scale: Vec<usize> = Vec::new();
    let mut next_row = 0usize;
    for (s, scale) in decomp.scales.iter().enumerate() {
        let doubled = scale.append_negations();
        // Keep only rows with entries; empty scale rows are dead weight.
        let mut row_map: Vec<Option<usize>> = vec![None; doubled.m()];
        for &(i, j, v) in doubled.entries() {
            let run_row = match row_map[i] {
                Some(r) => r,
                None => {
                    let r = next_row;
                    next_row += 1;
                    row_scale.push(s);
                    row_map[i] = Some(r);
                    r
                }
            };
            entries.push((run_row, j, v));
        }
    }
    let run_matrix = InstanceMatrix::new(next_row, a.n(), entries, MatrixKind::General)
        .expect("stacked scales form a valid matrix");
    let tail_threshold = 10 * decomp.p_count;
    let mut policy = KomlosPolicy {
        p_count: decomp.p_count,
        params: decomp.params.clone(),
        row_scale,
        status: vec![ScaleStatus::Tiny; next_row],
        dangerous: vec![false; next_row],
        tail_mode: false,
        tail_threshold,
        danger_events: 0,
        c_b,
    };
    Ok(engine::run_walk(a, &run_matrix, &mut policy, cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Mode;
    use crate::generators::{self, UnitProfile};

    #[test]
    fn scale_of_entry_intervals() {
        let p_count = 6;
        assert_eq!(scale_of_entry(0.6, p_count), 1);
        assert_eq!(scale_of_entry(0.3, p_count), 2);
        // Boundary 0.5 is not > 1/2, so it falls to scale 2.
        assert_eq!(scale_of_entry(0.5, p_count), 2);
        assert_eq!(scale_of_entry(1e-9, p_count), p_count);
    }

    #[test]
    fn scaled_values_in_unit_band() {
        for mag in [0.9, 0.51, 0.5, 0.26, 0.13, 0.06] {
            let p = scale_of_entry(mag, 8);
            if p < 8 {
                let scaled = mag * (2.0f64).powi(p as i32 - 1);
                assert!(scaled > 0.5 - 1e-12 && scaled <= 1.0 + 1e-12, "mag {mag} p {p}");
            }
        }
    }

    #[test]
    fn reconstruction_identity_random_instance() {
        let a = generators::gen_unit_columns(16, 16, UnitProfile::DyadicMixture, 4).unwrap();
        let d = scale_decompose(&a, 4.0).unwrap();
        assert!(d.reconstruction_error(&a) <= 1e-12);
    }

    #[test]
    fn dyadic_mixture_populates_heavy_scales() {
        let mut distinct = std::collections::HashSet::new();
        for seed in 0..20 {
            let a = generators::gen_unit_columns(16, 64, UnitProfile::DyadicMixture, seed).unwrap();
            let d = scale_decompose(&a, 4.0).unwrap();
            for (idx, s) in d.scales.iter().enumerate() {
                if idx + 1 < d.p_count && s.nnz() > 0 {
                    distinct.insert(idx);
                }
            }
        }
        assert!(distinct.len() >= 3, "only {} heavy scales populated", distinct.len());
    }

    #[test]
    fn identity_matrix_disc_one() {
        let n = 24;
        let entries: Vec<(usize, usize, f64)> = (0..n).map(|j| (j, j, 1.0)).collect();
        let a = InstanceMatrix::new(n, n, entries, MatrixKind::UnitColumns).unwrap();
        let cfg = EngineConfig { seed: 5, mode: Mode::Fast, ..Default::default() };
        let out = run_komlos(&a, 4.0, &cfg).unwrap();
        assert_eq!(out.report.disc_max, 1.0);
        assert!(!out.report.failed());
    }

    #[test]
    fn single_heavy_scale_collapse() {
        // All magnitudes in (1/2, 1]: everything lands in scale 1 and the
        // run completes cleanly within the trivial per-row l1 bound.
        let n = 12;
        let mut entries = Vec::new();
        for j in 0..n {
            entries.push((j, j, 0.8));
            entries.push(((j + 1) % n, j, 0.6));
        }
        let a = InstanceMatrix::new(n, n, entries, MatrixKind::UnitColumns).unwrap();
        let d = scale_decompose(&a, 4.0).unwrap();
        assert_eq!(d.scales[0].nnz(), a.nnz());
        for s in d.scales.iter().skip(1) {
            assert_eq!(s.nnz(), 0);
        }
        let cfg = EngineConfig { seed: 2, mode: Mode::Fast, ..Default::default() };
        let out = run_komlos(&a, 4.0, &cfg).unwrap();
        assert!(!out.report.failed());
        assert!(out.report.disc_max <= 1.4 + 1e-9);
    }

    #[test]
    fn combined_disc_decomposes_over_scales() {
        // disc of A at x equals sum_p 2^(1-p) disc of A^(p) at x.
        let a = generators::gen_unit_columns(10, 12, UnitProfile::GaussianNormalized, 8).unwrap();
        let d = scale_decompose(&a, 4.0).unwrap();
        let x = crate::instance::Coloring::new(
            (0..10).map(|j| if j % 2 == 0 { 0.5 } else { -0.7 }).collect(),
        )
        .unwrap();
        let direct = a.disc_eval(&x).unwrap();
        for i in 0..a.m() {
            let mut combined = 0.0;
            for (idx, s) in d.scales.iter().enumerate() {
                let w = (2.0f64).powi(-(idx as i32));
                combined += w * s.disc_eval(&x).unwrap().per_row[i];
            }
            assert!((combined - direct.per_row[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_non_unit_columns() {
        let a = InstanceMatrix::new(2, 2, vec![(0, 0, 1.0), (1, 1, 1.0)], MatrixKind::SignMatrix)
            .unwrap();
        assert!(matches!(scale_decompose(&a, 4.0), Err(KomlosError::NotUnitColumns(_))));
    }
}
