//! Browser bindings: run walks on seeded instances, compare algorithms, and
//! visualize the covariance sampling law. Each export returns a JSON string
//! for the static demo page in `www/`.

use wasm_bindgen::prelude::*;

use disc_core::engine::{EngineConfig, Mode};
use disc_core::generators::{self, UnitProfile};
use disc_core::instance::InstanceMatrix;
use disc_core::linalg::Mat;
use disc_core::walk::{sample_direction, CovFactor};
use disc_core::{adaptive, baselines, bf, komlos, multilayer};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn err_json(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn demo_config(seed: u64, fidelity: bool, path_every: usize) -> EngineConfig {
    EngineConfig {
        seed,
        mode: if fidelity { Mode::Fidelity } else { Mode::Fast },
        collect_path_every: path_every,
        ..Default::default()
    }
}

fn sign_instance(n: usize, m: usize, k: usize, seed: u64) -> Result<InstanceMatrix, String> {
    generators::gen_sparse_signs(n, m, k, seed).map_err(|e| e.to_string())
}

/// Run one walk algorithm on a seeded sparse-sign (or unit-column, for the
/// multi-scale walk) instance; returns the sampled trajectory and outcome.
#[wasm_bindgen]
pub fn run_walk_demo(algo: &str, n: usize, m: usize, k: usize, seed: u64, fidelity: bool) -> String {
    if n == 0 || n > 192 || m == 0 || m > 192 || k == 0 || k > m {
        return err_json("size limits: 1 <= n, m <= 192, 1 <= k <= m");
    }
    let stride = ((8 * n * n) / 400).max(1);
    let cfg = demo_config(seed, fidelity, stride);
    let result = match algo {
        "bf-basic" => sign_instance(n, m, k, seed)
            .and_then(|a| bf::run_bf_basic(&a, 4.0, &cfg).map(|o| (a, o)).map_err(|e| e.to_string())),
        "multilayer" => sign_instance(n, m, k, seed).and_then(|a| {
            multilayer::run_multilayer(&a, 4.0, &cfg).map(|o| (a, o)).map_err(|e| e.to_string())
        }),
        "adaptive" => sign_instance(n, m, k, seed).and_then(|a| {
            adaptive::run_adaptive(&a, 4.0, &cfg).map(|o| (a, o)).map_err(|e| e.to_string())
        }),
        "komlos" => generators::gen_unit_columns(n, m, UnitProfile::DyadicMixture, seed)
            .map_err(|e| e.to_string())
            .and_then(|a| {
                komlos::run_komlos(&a, 4.0, &cfg).map(|o| (a, o)).map_err(|e| e.to_string())
            }),
        "banaszczyk" => generators::gen_unit_columns(n, m, UnitProfile::GaussianNormalized, seed)
            .map_err(|e| e.to_string())
            .and_then(|a| {
                baselines::banaszczyk_walk(&a, &cfg).map(|o| (a, o)).map_err(|e| e.to_string())
            }),
        other => Err(format!("unknown algo {other}")),
    };
    match result {
        Ok((a, out)) => {
            let rep = a
                .disc_eval(&out.coloring.to_coloring())
                .expect("coloring evaluates");
            json!({
                "algo": out.report.algo,
                "n": n, "m": m, "k": k, "seed": seed,
                "disc": out.report.disc_max,
                "steps": out.report.steps,
                "resolves": out.report.resolves,
                "failed": out.report.failed(),
                "freeze_count": out.report.freeze_count,
                "per_row": rep.per_row,
                "coloring": out.coloring.signs(),
                "path": out.path,
            })
            .to_string()
        }
        Err(e) => err_json(e),
    }
}

/// Final discrepancies of every algorithm on one shared seeded instance.
#[wasm_bindgen]
pub fn compare_algorithms(n: usize, m: usize, k: usize, seed: u64) -> String {
    if n == 0 || n > 160 || m == 0 || m > 160 || k == 0 || k > m {
        return err_json("size limits: 1 <= n, m <= 160, 1 <= k <= m");
    }
    let a = match sign_instance(n, m, k, seed) {
        Ok(a) => a,
        Err(e) => return err_json(e),
    };
    // The same instance viewed with unit columns (entries k^-1/2) feeds the
    // unit-column walks.
    let scale = 1.0 / (k as f64).sqrt();
    let unit_entries: Vec<(usize, usize, f64)> = a
        .entries()
        .iter()
        .map(|&(i, j, v)| (i, j, v * scale))
        .collect();
    let unit = InstanceMatrix::new(m, n, unit_entries, disc_core::MatrixKind::UnitColumns)
        .expect("scaled sign matrix has unit columns");
    let cfg = demo_config(seed, false, 0);
    let mut rows = Vec::new();
    let mut push = |name: &str, disc: Result<f64, String>, failed: bool| match disc {
        Ok(d) => rows.push(json!({ "algo": name, "disc": d, "failed": failed })),
        Err(e) => rows.push(json!({ "algo": name, "error": e })),
    };
    match bf::run_bf_basic(&a, 4.0, &cfg) {
        Ok(o) => push("bf-basic", Ok(o.report.disc_max), o.report.failed()),
        Err(e) => push("bf-basic", Err(e.to_string()), false),
    }
    match multilayer::run_multilayer(&a, 4.0, &cfg) {
        Ok(o) => push("multilayer", Ok(o.report.disc_max), o.report.failed()),
        Err(e) => push("multilayer", Err(e.to_string()), false),
    }
    match adaptive::run_adaptive(&a, 4.0, &cfg) {
        Ok(o) => push("adaptive", Ok(o.report.disc_max), o.report.failed()),
        Err(e) => push("adaptive", Err(e.to_string()), false),
    }
    match komlos::run_komlos(&unit, 4.0, &cfg) {
        Ok(o) => push("komlos (k^-1/2 scaled)", Ok(o.report.disc_max * (k as f64).sqrt()), o.report.failed()),
        Err(e) => push("komlos (k^-1/2 scaled)", Err(e.to_string()), false),
    }
    match baselines::banaszczyk_walk(&unit, &cfg) {
        Ok(o) => push("banaszczyk (k^-1/2 scaled)", Ok(o.report.disc_max * (k as f64).sqrt()), o.report.failed()),
        Err(e) => push("banaszczyk (k^-1/2 scaled)", Err(e.to_string()), false),
    }
    {
        let c = baselines::random_coloring(n, seed);
        let d = a.disc_eval(&c.to_coloring()).unwrap().max_abs;
        push("random", Ok(d), false);
    }
    match baselines::iterative_rounding_bf(&a, k) {
        Ok(c) => {
            let d = a.disc_eval(&c.to_coloring()).unwrap().max_abs;
            push("iter-round", Ok(d), false);
        }
        Err(e) => push("iter-round", Err(e.to_string()), false),
    }
    json!({
        "n": n, "m": m, "k": k, "seed": seed,
        "classical_bound": 2 * k - 1,
        "results": rows,
    })
    .to_string()
}

/// Empirical covariance of the unit-norm sampling law against U / tr(U).
#[wasm_bindgen]
pub fn sampling_demo(h: usize, samples: usize, seed: u64) -> String {
    if h == 0 || h > 16 || samples == 0 || samples > 2_000_000 {
        return err_json("size limits: 1 <= h <= 16, samples <= 2e6");
    }
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Seeded PSD target U = G G^T / h.
    let mut g = Mat::zeros(h, h);
    {
        use rand::Rng;
        for v in g.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
    }
    let mut u = g.mul_t_right(&g);
    u.scale(1.0 / h as f64);
    let factor = match CovFactor::from_dense(&u) {
        Ok(f) => f,
        Err(e) => return err_json(e),
    };
    let tr = u.trace();
    let mut acc = Mat::zeros(h, h);
    let mut max_norm_err = 0.0f64;
    for _ in 0..samples {
        let v = sample_direction(&factor, &mut rng).expect("positive trace");
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        max_norm_err = max_norm_err.max((norm - 1.0).abs());
        for i in 0..h {
            for j in 0..h {
                *acc.at_mut(i, j) += v[i] * v[j];
            }
        }
    }
    acc.scale(1.0 / samples as f64);
    let mut max_err = 0.0f64;
    let mut target = vec![vec![0.0; h]; h];
    let mut emp = vec![vec![0.0; h]; h];
    for i in 0..h {
        for j in 0..h {
            let want = u.at(i, j) / tr;
            target[i][j] = want;
            emp[i][j] = acc.at(i, j);
            max_err = max_err.max((acc.at(i, j) - want).abs());
        }
    }
    json!({
        "h": h,
        "samples": samples,
        "target": target,
        "empirical": emp,
        "max_entry_error": max_err,
        "max_norm_error": max_norm_err,
    })
    .to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_walk_demo_returns_trajectory() {
        let out: serde_json::Value =
            serde_json::from_str(&run_walk_demo("bf-basic", 32, 16, 3, 5, false)).unwrap();
        assert!(out.get("error").is_none(), "{out}");
        assert!(out["disc"].as_f64().unwrap() >= 0.0);
        assert!(!out["path"].as_array().unwrap().is_empty());
        assert_eq!(out["coloring"].as_array().unwrap().len(), 32);
    }

    #[test]
    fn compare_algorithms_covers_all() {
        let out: serde_json::Value =
            serde_json::from_str(&compare_algorithms(24, 16, 3, 2)).unwrap();
        assert!(out.get("error").is_none(), "{out}");
        let rows = out["results"].as_array().unwrap();
        assert_eq!(rows.len(), 7);
        for r in rows {
            assert!(r.get("disc").is_some(), "missing disc in {r}");
        }
    }

    #[test]
    fn sampling_demo_small_error() {
        let out: serde_json::Value = serde_json::from_str(&sampling_demo(6, 50_000, 1)).unwrap();
        assert!(out["max_entry_error"].as_f64().unwrap() < 0.02);
        assert!(out["max_norm_error"].as_f64().unwrap() < 1e-9);
    }

    #[test]
    fn size_limits_enforced() {
        let out: serde_json::Value =
            serde_json::from_str(&run_walk_demo("bf-basic", 100_000, 8, 3, 0, false)).unwrap();
        assert!(out.get("error").is_some());
    }
}
