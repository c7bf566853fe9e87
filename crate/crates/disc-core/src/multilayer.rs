//! Multi-layered walk: danger levels 0..L with geometrically tightening
//! targets; a dangerous row is upgraded a level instead of blocked, except at
//! the top level.

use serde_json::json;

use crate::engine::{
    self, Assembly, AssemblyBlock, Ctx, EngineConfig, EngineError, Observation, Policy, RunOutput,
};
use crate::instance::InstanceMatrix;

#[derive(Debug, Clone)]
pub struct LevelParams {
    pub c: f64,
    pub k: usize,
    /// Levels 0..=max_level are active (k_l >= 1).
    pub max_level: usize,
    /// Tiny threshold max(b_0, b_0^2 / ln n).
    pub mu: f64,
    /// Large-k regime (k >= ln^2 n) uses b_l = C 2^l sqrt(k_l); otherwise
    /// b_l = C 2^l k_l^(1/3) ln^(1/3) n.
    pub large_k_regime: bool,
    pub k_l: Vec<f64>,
    pub b_l: Vec<f64>,
    pub beta_l: Vec<f64>,
    pub eta_l: Vec<f64>,
    pub large_threshold: Vec<f64>,
}

impl LevelParams {
    pub fn new(n: usize, k: usize, c: f64) -> Self {
        let k = k.max(1);
        let ln_n = (n.max(4) as f64).ln();
        let large_k_regime = (k as f64) >= ln_n * ln_n;
        let b = |lvl: usize| {
            let k_l = (k as f64 / 100f64.powi(lvl as i32)).max(1.0);
            let p = (2.0f64).powi(lvl as i32);
            if large_k_regime {
                c * p * k_l.sqrt()
            } else {
                c * p * k_l.cbrt() * ln_n.cbrt()
            }
        };
        let b0 = b(0);
        let mu = b0.max(b0 * b0 / ln_n);
        // L = ceil(log_100(10 k / mu)), clamped to levels with k_l >= 1.
        let raw_l = ((10.0 * k as f64 / mu).log(100.0)).ceil().max(0.0) as usize;
        let mut max_level = raw_l;
        while max_level > 0 && (k as f64) / 100f64.powi(max_level as i32) < 1.0 {
            max_level -= 1;
        }
        let mut k_l = Vec::new();
        let mut b_l = Vec::new();
        let mut beta_l = Vec::new();
        let mut eta_l = Vec::new();
        let mut large_threshold = Vec::new();
        for lvl in 0..=max_level {
            let kl = (k as f64 / 100f64.powi(lvl as i32)).max(1.0);
            let p = (2.0f64).powi(lvl as i32);
            k_l.push(kl);
            b_l.push(b(lvl));
            beta_l.push(b(lvl) / (p * 10.0 * kl));
            eta_l.push((1.0 / 6.0) / p);
            large_threshold.push(p * 10.0 * kl);
        }
        LevelParams { c, k, max_level, mu, large_k_regime, k_l, b_l, beta_l, eta_l, large_threshold }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MlStatus {
    Large,
    Medium,
    Tiny,
    /// Tiny at t = 0: carries no level and is never tracked.
    NeverTracked,
}

#[derive(Debug, Clone)]
struct RowTrack {
    status: MlStatus,
    level: usize,
    /// <a_i, x> at the time the row entered its current level.
    snapshot: f64,
    /// Dangerous at the top level (blocked rather than upgraded).
    blocked: bool,
}

pub struct MultilayerPolicy {
    pub params: LevelParams,
    rows: Vec<RowTrack>,
    /// Rows that ever reached level l, per column of the run matrix:
    /// arrivals[l][j].
    level_arrivals: Vec<Vec<u32>>,
    upgrade_counts: Vec<u64>,
    max_seg_y: f64,
    /// Telescoping bookkeeping: discrepancy at first tracking, and the sum
    /// of closed level segments.
    entry_disc: Vec<f64>,
    seg_accum: Vec<f64>,
}

impl MultilayerPolicy {
    pub fn new(m: usize, n: usize, params: LevelParams) -> Self {
        let levels = params.max_level + 1;
        MultilayerPolicy {
            params,
            rows: vec![
                RowTrack { status: MlStatus::Medium, level: 0, snapshot: 0.0, blocked: false };
                m
            ],
            level_arrivals: vec![vec![0; n]; levels],
            upgrade_counts: vec![0; levels],
            max_seg_y: 0.0,
            entry_disc: vec![0.0; m],
            seg_accum: vec![0.0; m],
        }
    }

    fn classify(&self, level: usize, size: usize) -> MlStatus {
        if (size as f64) < self.params.mu {
            MlStatus::Tiny
        } else if size as f64 > self.params.large_threshold[level] {
            MlStatus::Large
        } else {
            MlStatus::Medium
        }
    }

    fn y_value(&self, ctx: &Ctx, i: usize) -> f64 {
        let t = &self.rows[i];
        (ctx.disc[i] - t.snapshot) + self.params.beta_l[t.level] * ctx.energy[i]
    }

    fn record_arrival(&mut self, ctx: &Ctx, i: usize, level: usize) {
        for &(j, _) in ctx.a.row(i) {
            self.level_arrivals[level][j] += 1;
        }
    }

    /// Exact telescoping identity: the current snapshot equals the entry
    /// discrepancy plus all closed level segments, so the total discrepancy
    /// splits as entry + segments + open segment.
    fn max_telescope_gap(&self) -> f64 {
        let mut worst = 0.0f64;
        for (i, t) in self.rows.iter().enumerate() {
            if matches!(t.status, MlStatus::NeverTracked) {
                continue;
            }
            worst = worst.max((t.snapshot - self.entry_disc[i] - self.seg_accum[i]).abs());
        }
        worst
    }
}

impl Policy for MultilayerPolicy {
    fn name(&self) -> &'static str {
        "multilayer"
    }

    fn params_json(&self) -> serde_json::Value {
        json!({
            "c": self.params.c,
            "k": self.params.k,
            "max_level": self.params.max_level,
            "mu": self.params.mu,
            "large_k_regime": self.params.large_k_regime,
            "b_l": self.params.b_l,
            "beta_l": self.params.beta_l,
            "eta_l": self.params.eta_l,
            "kappa": 1.0 / 6.0,
            "eta": 1.0 / 6.0,
        })
    }

    fn stop_threshold(&self) -> usize {
        10
    }

    fn refresh(&mut self, ctx: &Ctx) {
        for i in 0..self.rows.len() {
            let size = ctx.sizes[i];
            if (size as f64) < self.params.mu {
                self.rows[i].status = MlStatus::NeverTracked;
            } else {
                self.rows[i].status = self.classify(0, size);
                self.entry_disc[i] = ctx.disc[i];
                self.record_arrival(ctx, i, 0);
            }
        }
    }

    fn on_freeze(&mut self, ctx: &Ctx, frozen: &[usize]) -> bool {
        let mut structural = false;
        for &j in frozen {
            for &(i, _) in ctx.a.col(j) {
                let t = &self.rows[i];
                if matches!(t.status, MlStatus::NeverTracked | MlStatus::Tiny) {
                    continue;
                }
                let new = self.classify(t.level, ctx.sizes[i]);
                if new != t.status {
                    self.rows[i].status = new;
                    structural = true;
                    if new == MlStatus::Tiny {
                        self.rows[i].blocked = false;
                    }
                }
            }
        }
        structural
    }

    fn observe_step(&mut self, ctx: &Ctx) -> Observation {
        let mut obs = Observation::quiet();
        let max_level = self.params.max_level;
        // Ascending row order keeps simultaneous upgrades deterministic.
        for i in 0..self.rows.len() {
            if self.rows[i].status != MlStatus::Medium || self.rows[i].blocked {
                continue;
            }
            let level = self.rows[i].level;
            let y = self.y_value(ctx, i);
            self.max_seg_y = self.max_seg_y.max(y);
            if y < 2.0 * self.params.b_l[level] {
                continue;
            }
            if level < max_level {
                // Upgrade: re-base the segment and reclassify against the
                // next level's large threshold.
                let next = level + 1;
                self.seg_accum[i] += ctx.disc[i] - self.rows[i].snapshot;
                self.rows[i].level = next;
                self.rows[i].snapshot = ctx.disc[i];
                self.rows[i].status = self.classify(next, ctx.sizes[i]);
                self.upgrade_counts[next] += 1;
                self.record_arrival(ctx, i, next);
                obs.structural = true;
            } else {
                self.rows[i].blocked = true;
                self.upgrade_counts[max_level] += 1;
                obs.structural = true;
                obs.block_now.push(i);
            }
        }
        obs
    }

    fn assemble(&self, ctx: &Ctx) -> Assembly {
        let levels = self.params.max_level + 1;
        let mut w_rows = Vec::new();
        let mut blocked_ids = Vec::new();
        let mut per_level_rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); levels];
        let mut per_level_ids: Vec<Vec<usize>> = vec![Vec::new(); levels];
        for (i, t) in self.rows.iter().enumerate() {
            match t.status {
                MlStatus::Large => {
                    w_rows.push(engine::row_alive_dense(ctx.a, i, ctx.state));
                    blocked_ids.push(i);
                }
                MlStatus::Medium => {
                    let beta = self.params.beta_l[t.level];
                    let row = engine::modified_row_alive(ctx.a, i, beta, ctx.state);
                    if t.blocked {
                        w_rows.push(row.clone());
                        blocked_ids.push(i);
                    }
                    per_level_rows[t.level].push(row);
                    per_level_ids[t.level].push(i);
                }
                _ => {}
            }
        }
        let blocks = per_level_rows
            .into_iter()
            .zip(per_level_ids)
            .enumerate()
            .filter(|(_, (rows, _))| !rows.is_empty())
            .map(|(l, (rows, row_ids))| AssemblyBlock {
                rows,
                row_ids,
                eta_s: self.params.eta_l[l],
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
        (0..self.rows.len())
            .filter(|&i| self.rows[i].status == MlStatus::Medium)
            .map(|i| (i, self.y_value(ctx, i)))
            .collect()
    }

    fn detail_json(&self, ctx: &Ctx) -> serde_json::Value {
        // Per-level max arrivals over columns, against the k_l cap.
        let diag: Vec<serde_json::Value> = self
            .level_arrivals
            .iter()
            .enumerate()
            .map(|(l, cols)| {
                let max_col = cols.iter().copied().max().unwrap_or(0);
                json!({
                    "level": l,
                    "max_column_arrivals": max_col,
                    "k_l": self.params.k_l[l],
                    "within_cap": (max_col as f64) <= self.params.k_l[l],
                })
            })
            .collect();
        json!({
            "upgrade_counts": self.upgrade_counts,
            "level_arrivals": diag,
            "max_segment_y": self.max_seg_y,
            "max_telescope_gap": self.max_telescope_gap(),
        })
    }
}

pub fn run_multilayer(
    a: &InstanceMatrix,
    c: f64,
    cfg: &EngineConfig,
) -> Result<RunOutput, EngineError> {
    let doubled = a.append_negations();
    let k = a.column_sparsity();
    let params = LevelParams::new(a.n(), k, c);
    let mut policy = MultilayerPolicy::new(doubled.m(), doubled.n(), params);
    engine::run_walk(a, &doubled, &mut policy, cfg)
}
