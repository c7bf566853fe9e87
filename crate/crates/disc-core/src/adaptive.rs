//! Adaptive size-class walk: levels crossed with size classes, each class
//! carrying its own regularization weight so the spectral-independence
//! budget tracks the actual row sizes.

use serde_json::json;

use crate::engine::{
    self, Assembly, AssemblyBlock, Ctx, EngineConfig, EngineError, Observation, Policy, RunOutput,
};
use crate::instance::InstanceMatrix;

#[derive(Debug, Clone)]
pub struct ClassParams {
    pub c: f64,
    pub k: usize,
    /// b_0 = C (sqrt(k) + sqrt(ln n)) (1 + log2 log2 n); mu = b_0.
    pub mu: f64,
    pub max_level: usize,
    /// Size classes 1..=class_count per level.
    pub class_count: usize,
    pub k_l: Vec<f64>,
    pub b_l: Vec<f64>,
    /// Large threshold 10 L k_l per level.
    pub large_threshold: Vec<f64>,
    /// Shared eta for every (level, class) block: eta / (N * max(L,1)).
    pub eta_block: f64,
}

impl ClassParams {
    pub fn new(n: usize, k: usize, c: f64) -> Self {
        let k = k.max(1);
        let ln_n = (n.max(4) as f64).ln();
        let lglg = (n.max(4) as f64).log2().log2().max(0.0);
        let b = |kl: f64| c * (kl.sqrt() + ln_n.sqrt()) * (1.0 + lglg);
        let b0 = b(k as f64);
        let mu = b0;
        let raw_l = ((10.0 * k as f64 / mu).log(100.0)).ceil().max(0.0) as usize;
        let mut max_level = raw_l;
        while max_level > 0 && (k as f64) / 100f64.powi(max_level as i32) < 1.0 {
            max_level -= 1;
        }
        let class_count = ((k as f64 / mu).log2().ceil().max(1.0)) as usize;
        let l_factor = (max_level as f64).max(1.0);
        let mut k_l = Vec::new();
        let mut b_l = Vec::new();
        let mut large_threshold = Vec::new();
        for lvl in 0..=max_level {
            let kl = (k as f64 / 100f64.powi(lvl as i32)).max(1.0);
            k_l.push(kl);
            b_l.push(b(kl));
            large_threshold.push(10.0 * l_factor * kl);
        }
        let eta_block = (1.0 / 6.0) / (class_count as f64 * l_factor);
        ClassParams { c, k, mu, max_level, class_count, k_l, b_l, large_threshold, eta_block }
    }

    /// Upper size bound of class q at level l: 20 L k_l / 2^q.
    pub fn class_upper(&self, level: usize, q: usize) -> f64 {
        2.0 * self.large_threshold[level] / (2.0f64).powi(q as i32)
    }

    /// Class of a medium row: the unique q with size in
    /// (10 L k_l / 2^q, 20 L k_l / 2^q], boundaries falling to the deeper
    /// class, clamped to the deepest class near the tiny threshold.
    pub fn class_of(&self, size: usize, level: usize) -> Result<usize, String> {
        let s = size as f64;
        let top = self.large_threshold[level];
        if s < self.mu || s > top {
            return Err(format!(
                "size {size} outside medium range [{}, {}] at level {level}",
                self.mu, top
            ));
        }
        let mut q = 1usize;
        while q < self.class_count && s <= top / (2.0f64).powi(q as i32) {
            q += 1;
        }
        Ok(q)
    }

    pub fn beta(&self, level: usize, q: usize) -> f64 {
        self.b_l[level] / self.class_upper(level, q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum AdStatus {
    Large,
    Medium,
    Tiny,
    NeverTracked,
}

#[derive(Debug, Clone)]
struct AdTrack {
    status: AdStatus,
    level: usize,
    class: usize,
    snapshot: f64,
    blocked: bool,
}

pub struct AdaptivePolicy {
    pub params: ClassParams,
    rows: Vec<AdTrack>,
    /// Danger counts per (level, class).
    danger_counts: Vec<Vec<u64>>,
    /// Telescoping bookkeeping across (level, class) segments.
    entry_disc: Vec<f64>,
    seg_accum: Vec<f64>,
}

impl AdaptivePolicy {
    pub fn new(m: usize, params: ClassParams) -> Self {
        let danger_counts = vec![vec![0; params.class_count + 1]; params.max_level + 1];
        AdaptivePolicy {
            params,
            rows: vec![
                AdTrack { status: AdStatus::Medium, level: 0, class: 1, snapshot: 0.0, blocked: false };
                m
            ],
            danger_counts,
            entry_disc: vec![0.0; m],
            seg_accum: vec![0.0; m],
        }
    }

    fn classify(&self, level: usize, size: usize) -> AdStatus {
        let s = size as f64;
        if s < self.params.mu {
            AdStatus::Tiny
        } else if s > self.params.large_threshold[level] {
            AdStatus::Large
        } else {
            AdStatus::Medium
        }
    }

    fn y_value(&self, ctx: &Ctx, i: usize) -> f64 {
        let t = &self.rows[i];
        (ctx.disc[i] - t.snapshot) + self.params.beta(t.level, t.class) * ctx.energy[i]
    }

    /// Enter (level, class) fresh: snapshot re-based, so the class-entry
    /// regularized discrepancy is beta * G <= b_l.
    fn enter_class(&mut self, ctx: &Ctx, i: usize, level: usize) {
        let status = self.classify(level, ctx.sizes[i]);
        let class = if status == AdStatus::Medium {
            self.params.class_of(ctx.sizes[i], level).expect("medium size in range")
        } else {
            self.rows[i].class
        };
        self.seg_accum[i] += ctx.disc[i] - self.rows[i].snapshot;
        let t = &mut self.rows[i];
        t.level = level;
        t.status = status;
        t.class = class;
        t.snapshot = ctx.disc[i];
    }
}

impl Policy for AdaptivePolicy {
    fn name(&self) -> &'static str {
        "adaptive"
    }

    fn params_json(&self) -> serde_json::Value {
        json!({
            "c": self.params.c,
            "k": self.params.k,
            "mu": self.params.mu,
            "max_level": self.params.max_level,
            "class_count": self.params.class_count,
            "b_l": self.params.b_l,
            "eta_block": self.params.eta_block,
            "kappa": 1.0 / 6.0,
            "eta": 1.0 / 6.0,
        })
    }

    fn stop_threshold(&self) -> usize {
        10
    }

    fn refresh(&mut self, ctx: &Ctx) {
        for i in 0..self.rows.len() {
            if (ctx.sizes[i] as f64) < self.params.mu {
                self.rows[i].status = AdStatus::NeverTracked;
            } else {
                self.enter_class(ctx, i, 0);
                self.entry_disc[i] = ctx.disc[i];
                self.seg_accum[i] = 0.0;
            }
        }
    }

    fn on_freeze(&mut self, ctx: &Ctx, frozen: &[usize]) -> bool {
        let mut structural = false;
        for &j in frozen {
            for &(i, _) in ctx.a.col(j) {
                let t = &self.rows[i];
                if matches!(t.status, AdStatus::NeverTracked | AdStatus::Tiny) {
                    continue;
                }
                let level = t.level;
                let new = self.classify(level, ctx.sizes[i]);
                if new != t.status {
                    self.rows[i].status = new;
                    structural = true;
                    match new {
                        AdStatus::Tiny => self.rows[i].blocked = false,
                        AdStatus::Medium => {
                            // Large -> Medium: enters its first class here.
                            self.enter_class(ctx, i, level);
                        }
                        _ => {}
                    }
                } else if new == AdStatus::Medium {
                    let q = self.params.class_of(ctx.sizes[i], level).expect("medium in range");
                    if q != t.class {
                        // Size crossed a class boundary: Y resets.
                        self.seg_accum[i] += ctx.disc[i] - self.rows[i].snapshot;
                        self.rows[i].class = q;
                        self.rows[i].snapshot = ctx.disc[i];
                        structural = true;
                    }
                }
            }
        }
        structural
    }

    fn observe_step(&mut self, ctx: &Ctx) -> Observation {
        let mut obs = Observation::quiet();
        let max_level = self.params.max_level;
        for i in 0..self.rows.len() {
            if self.rows[i].status != AdStatus::Medium || self.rows[i].blocked {
                continue;
            }
            let (level, class) = (self.rows[i].level, self.rows[i].class);
            let y = self.y_value(ctx, i);
            if y < 2.0 * self.params.b_l[level] {
                continue;
            }
            self.danger_counts[level][class] += 1;
            if level < max_level {
                // Level upgrade resolves first; the class is recomputed for
                // the new level.
                self.enter_class(ctx, i, level + 1);
                obs.structural = true;
            } else {
                self.rows[i].blocked = true;
                obs.structural = true;
                obs.block_now.push(i);
            }
        }
        obs
    }

    fn assemble(&self, ctx: &Ctx) -> Assembly {
        let levels = self.params.max_level + 1;
        let classes = self.params.class_count;
        let mut w_rows = Vec::new();
        let mut blocked_ids = Vec::new();
        let mut cells_rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); levels * classes];
        let mut cells_ids: Vec<Vec<usize>> = vec![Vec::new(); levels * classes];
        for (i, t) in self.rows.iter().enumerate() {
            match t.status {
                AdStatus::Large => {
                    w_rows.push(engine::row_alive_dense(ctx.a, i, ctx.state));
                    blocked_ids.push(i);
                }
                AdStatus::Medium => {
                    let beta = self.params.beta(t.level, t.class);
                    let row = engine::modified_row_alive(ctx.a, i, beta, ctx.state);
                    if t.blocked {
                        w_rows.push(row.clone());
                        blocked_ids.push(i);
                    }
                    let cell = t.level * classes + (t.class - 1);
                    cells_rows[cell].push(row);
                    cells_ids[cell].push(i);
                }
                _ => {}
            }
        }
        let blocks = cells_rows
            .into_iter()
            .zip(cells_ids)
            .filter(|(rows, _)| !rows.is_empty())
            .map(|(rows, row_ids)| AssemblyBlock {
                rows,
                row_ids,
                eta_s: self.params.eta_block,
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
            .filter(|&i| self.rows[i].status == AdStatus::Medium)
            .map(|i| (i, self.y_value(ctx, i)))
            .collect()
    }

    fn detail_json(&self, _ctx: &Ctx) -> serde_json::Value {
        // Snapshot bookkeeping telescopes exactly: snapshot = entry + sum of
        // closed segments for every tracked row.
        let mut gap = 0.0f64;
        for (i, t) in self.rows.iter().enumerate() {
            if !matches!(t.status, AdStatus::NeverTracked) {
                gap = gap.max((t.snapshot - self.entry_disc[i] - self.seg_accum[i]).abs());
            }
        }
        json!({ "danger_counts": self.danger_counts, "max_telescope_gap": gap })
    }
}

pub fn run_adaptive(
    a: &InstanceMatrix,
    c: f64,
    cfg: &EngineConfig,
) -> Result<RunOutput, EngineError> {
    let doubled = a.append_negations();
    let k = a.column_sparsity();
    let params = ClassParams::new(a.n(), k, c);
    let mut policy = AdaptivePolicy::new(doubled.m(), params);
    engine::run_walk(a, &doubled, &mut policy, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::Mode;
    use crate::generators;
    use crate::instance::brute_force_optimum;
    use proptest::prelude::*;

    fn params_with(k: usize, mu: f64, max_level: usize, class_count: usize) -> ClassParams {
        let l_factor = (max_level as f64).max(1.0);
        let mut k_l = Vec::new();
        let mut b_l = Vec::new();
        let mut large_threshold = Vec::new();
        for lvl in 0..=max_level {
            let kl = (k as f64 / 100f64.powi(lvl as i32)).max(1.0);
            k_l.push(kl);
            b_l.push(kl.sqrt());
            large_threshold.push(10.0 * l_factor * kl);
        }
        ClassParams {
            c: 1.0,
            k,
            mu,
            max_level,
            class_count,
            k_l,
            b_l,
            large_threshold,
            eta_block: 0.05,
        }
    }

    #[test]
    fn class_interval_arithmetic() {
        // L = 2, k_l = 100: interval for q=1 is (1000, 2000].
        let p = params_with(100, 4.0, 2, 6);
        assert_eq!(p.large_threshold[0], 2000.0);
        assert_eq!(p.class_of(1500, 0).unwrap(), 1);
        // size exactly 10 L k_l = upper bound of the medium range: q = 1.
        assert_eq!(p.class_of(2000, 0).unwrap(), 1);
        // Boundary 10 L k_l / 2^q falls to the deeper class: size = 1000
        // is the lower boundary of q=1, so it belongs to q=2.
        assert_eq!(p.class_of(1000, 0).unwrap(), 2);
        // Just above the tiny threshold lands in the deepest class.
        assert_eq!(p.class_of(5, 0).unwrap(), 6);
        assert!(p.class_of(2, 0).is_err());
        assert!(p.class_of(4000, 0).is_err());
    }

    #[test]
    fn class_entry_y_at_most_b() {
        // At class entry Y = beta * G <= b_l since G <= s_q.
        let p = params_with(100, 4.0, 2, 6);
        for q in 1..=6 {
            let s_q = p.class_upper(0, q);
            let beta = p.beta(0, q);
            assert!(beta * s_q <= p.b_l[0] + 1e-12);
        }
    }

    #[test]
    fn collapses_when_single_class() {
        let p = ClassParams::new(64, 2, 4.0);
        // mu = b_0 > k here, so a single class and level remain.
        assert_eq!(p.class_count, 1);
        assert_eq!(p.max_level, 0);
    }

    #[test]
    fn disc_sandwich_small_instances() {
        let a = generators::gen_sparse_signs(14, 14, 3, 31).unwrap();
        let (opt, _) = brute_force_optimum(&a);
        for seed in 0..3 {
            let cfg = EngineConfig { seed, mode: Mode::Fast, ..Default::default() };
            let out = run_adaptive(&a, 4.0, &cfg).unwrap();
            assert!(out.report.disc_max >= opt - 1e-9);
            assert!(out.coloring.signs().iter().all(|&s| s == 1 || s == -1));
        }
    }

    #[test]
    fn small_c_forces_machinery_and_completes() {
        let a = generators::gen_sparse_signs(20, 10, 4, 8).unwrap();
        let cfg = EngineConfig { seed: 2, mode: Mode::Fast, ..Default::default() };
        let out = run_adaptive(&a, 0.2, &cfg).unwrap();
        assert!(out.coloring.signs().iter().all(|&s| s == 1 || s == -1));
        let gap = out.detail["max_telescope_gap"].as_f64().unwrap();
        assert!(gap <= 1e-9, "telescope gap {gap}");
    }

    proptest! {
        #[test]
        fn class_partition_exact(size in 1usize..4000, level in 0usize..3) {
            // Every medium size maps to exactly one class.
            let p = params_with(200, 3.0, 2, 16);
            let top = p.large_threshold[level];
            prop_assume!((size as f64) >= p.mu && (size as f64) <= top);
            let q = p.class_of(size, level).unwrap();
            prop_assert!(q >= 1 && q <= p.class_count);
            // Membership: size in (top/2^q, top/2^(q-1)] unless clamped deep.
            let upper = p.class_upper(level, q);
            let lower = upper / 2.0;
            if q < p.class_count {
                prop_assert!((size as f64) > lower && (size as f64) <= upper);
            } else {
                prop_assert!((size as f64) <= upper);
            }
        }
    }
}
