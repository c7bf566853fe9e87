//! Shared run loop for the SDP-guided walk algorithms.
//!
//! A `Policy` decides what to block and which affine spectral-independence
//! blocks to impose; the engine owns the walk state, incremental row
//! statistics, the re-solve schedule, and report assembly.
//!
//! Covariance path: at each re-solve the engine first tries the orthogonal
//! projector onto the complement of the blocked span. If that candidate
//! passes every constraint check it is used directly (sampled through a
//! Householder chain in O(rank * n) per step); otherwise the dense
//! projection solver runs. Both paths satisfy the same verified contract.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::instance::{FullColoring, InstanceMatrix};
use crate::io::{self, FailEvent, RunReport};
use crate::linalg::{self, HouseholderChain};
use crate::sdp::{self, BlockInput, SolveOutcome};
use crate::walk::{self, CovFactor, WalkState};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("SDP reported infeasible despite positive margin (dim W = {dim_w}, n_t = {n_t}); solver bug")]
    SolverBug { dim_w: usize, n_t: usize },
    #[error(transparent)]
    Sdp(#[from] sdp::SdpError),
    #[error(transparent)]
    Walk(#[from] walk::WalkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Re-solve the SDP every step with x_t in the blocked span.
    Fidelity,
    /// Cache the covariance between structural events, re-solve every
    /// `resolve_every` steps, and re-orthogonalize samples in between.
    Fast,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Fidelity => "fidelity",
            Mode::Fast => "fast",
        }
    }

    pub fn parse(s: &str) -> Option<Mode> {
        match s {
            "fidelity" => Some(Mode::Fidelity),
            "fast" => Some(Mode::Fast),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub dt: Option<f64>,
    pub mode: Mode,
    /// Scheduled re-solve cadence in fast mode.
    pub resolve_every: usize,
    pub seed: u64,
    pub sdp_tol: f64,
    pub sdp_max_iters: usize,
    /// Exhaustive-completion width at termination.
    pub exhaust_limit: usize,
    pub record_per_row: bool,
    /// Record per-step regularized-discrepancy values for medium rows.
    pub collect_y_trace: bool,
    /// Sample (step, max one-sided disc, alive count) every this many steps
    /// (0 = off).
    pub collect_path_every: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            dt: None,
            mode: Mode::Fast,
            resolve_every: 64,
            seed: 0,
            sdp_tol: sdp::DEFAULT_TOL,
            sdp_max_iters: sdp::DEFAULT_MAX_ITERS,
            exhaust_limit: 10,
            record_per_row: false,
            collect_y_trace: false,
            collect_path_every: 0,
        }
    }
}

/// One sampled point of a run trajectory.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct PathPoint {
    pub step: u64,
    pub t: f64,
    /// Max <a_i, x_t> over the run matrix rows (one-sided).
    pub max_disc: f64,
    pub n_alive: usize,
}

/// Snapshot handed to policies.
pub struct Ctx<'a> {
    pub a: &'a InstanceMatrix,
    pub state: &'a WalkState,
    /// <a_i, x_t> per row of the run matrix.
    pub disc: &'a [f64],
    /// Alive nonzero count per row.
    pub sizes: &'a [usize],
    /// Alive squared mass per row (sum of a_ij^2 over alive j).
    pub sq_mass: &'a [f64],
    /// Energy G_t(i) = sum_j a_ij^2 (1 - x_j^2).
    pub energy: &'a [f64],
}

pub struct AssemblyBlock {
    pub rows: Vec<Vec<f64>>,
    pub row_ids: Vec<usize>,
    pub eta_s: f64,
}

pub struct Assembly {
    /// Blocking vectors over alive coordinates (x_t is appended by the
    /// engine).
    pub w_rows: Vec<Vec<f64>>,
    /// Row ids whose discrepancy must stay flat (drift audit).
    pub blocked_row_ids: Vec<usize>,
    pub blocks: Vec<AssemblyBlock>,
    pub kappa: f64,
    pub eta: f64,
}

pub struct Observation {
    pub structural: bool,
    /// Rows to re-orthogonalize against until the next re-solve.
    pub block_now: Vec<usize>,
}

impl Observation {
    pub fn quiet() -> Self {
        Observation { structural: false, block_now: Vec::new() }
    }
}

pub trait Policy {
    fn name(&self) -> &'static str;
    fn params_json(&self) -> serde_json::Value;
    /// Alive-count threshold at which the walk stops and rounds.
    fn stop_threshold(&self) -> usize;
    /// dim(W) fails the run when it exceeds n_t / fail_denominator.
    fn fail_denominator(&self) -> f64 {
        3.0
    }
    /// Recompute all row statuses from the snapshot (run start).
    fn refresh(&mut self, ctx: &Ctx);
    /// Coordinates froze; update statuses. Return true on any status change.
    fn on_freeze(&mut self, ctx: &Ctx, frozen: &[usize]) -> bool;
    /// Inspect the post-step snapshot; flag danger crossings etc.
    fn observe_step(&mut self, ctx: &Ctx) -> Observation;
    fn assemble(&self, ctx: &Ctx) -> Assembly;
    /// Rows currently tracked as medium, with their regularized
    /// discrepancies, for trace collection.
    fn y_values(&self, _ctx: &Ctx) -> Vec<(usize, f64)> {
        Vec::new()
    }
    fn detail_json(&self, _ctx: &Ctx) -> serde_json::Value {
        serde_json::Value::Null
    }
}

/// Per-step record of medium-row regularized discrepancies.
#[derive(Debug, Clone)]
pub struct YTraceRecord {
    pub step: u64,
    pub rows: Vec<(u32, f64)>,
}

#[derive(Debug, Clone, Default)]
pub struct RunAudits {
    /// Max per-step |delta disc| over rows blocked at that step.
    pub max_blocked_drift: f64,
    /// | ||x||^2 - t | at termination.
    pub norm_gap: f64,
    /// Clamp-adjusted tolerance for `norm_gap`.
    pub norm_gap_bound: f64,
    /// (ratio, bound) of each affine block at each re-solve.
    pub si_ratios: Vec<(f64, f64)>,
    pub clamp_events: u64,
    pub aborted_fail: bool,
    /// Rounded minus fractional max discrepancy: the cost of snapping dead
    /// and leftover coordinates to signs.
    pub rounding_residual: f64,
    /// Max per-step |<v, x>| (orthogonality of the update).
    pub max_vx_inner: f64,
    /// Max per-step | ||v|| - 1 |.
    pub max_vnorm_err: f64,
    /// Re-solves served by the projector candidate vs the dense solver.
    pub perp_solves: u64,
    pub dense_solves: u64,
}

pub struct RunOutput {
    pub report: RunReport,
    pub coloring: FullColoring,
    pub audits: RunAudits,
    pub y_trace: Option<Vec<YTraceRecord>>,
    pub path: Vec<PathPoint>,
    pub detail: serde_json::Value,
}

enum Sampler {
    Perp { chain: HouseholderChain },
    Dense { factor: CovFactor },
}

/// Run a policy-driven walk on `run_matrix` and evaluate the result against
/// `eval_matrix` (the original instance when the run matrix is the doubled
/// one-sided form).
pub fn run_walk<P: Policy>(
    eval_matrix: &InstanceMatrix,
    run_matrix: &InstanceMatrix,
    policy: &mut P,
    cfg: &EngineConfig,
) -> Result<RunOutput, EngineError> {
    let start = Instant::now();
    let n = run_matrix.n();
    let m = run_matrix.m();
    let dt = cfg.dt.unwrap_or_else(|| WalkState::default_dt(n));
    let mut state = WalkState::new(n, dt);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut disc = vec![0.0f64; m];
    let mut sizes: Vec<usize> = (0..m).map(|i| run_matrix.row(i).len()).collect();
    let mut sq_mass: Vec<f64> = (0..m)
        .map(|i| run_matrix.row(i).iter().map(|&(_, v)| v * v).sum())
        .collect();
    let mut energy = sq_mass.clone();

    macro_rules! ctx {
        () => {
            Ctx {
                a: run_matrix,
                state: &state,
                disc: &disc,
                sizes: &sizes,
                sq_mass: &sq_mass,
                energy: &energy,
            }
        };
    }

    policy.refresh(&ctx!());

    let step_cap: u64 = (n as f64 / dt).ceil() as u64 + n as u64;
    let mut fail_events: Vec<FailEvent> = Vec::new();
    let mut audits = RunAudits::default();
    let mut y_trace: Option<Vec<YTraceRecord>> = cfg.collect_y_trace.then(Vec::new);
    let mut path: Vec<PathPoint> = Vec::new();
    let mut resolves: u64 = 0;

    let mut sampler: Option<Sampler> = None;
    let mut solve_alive: Vec<usize> = Vec::new();
    let mut solve_pos: Vec<usize> = vec![usize::MAX; n];
    let mut steps_since_solve: usize = 0;
    let mut pending_block_rows: Vec<usize> = Vec::new();
    let mut frozen_since_solve: Vec<usize> = Vec::new();
    let mut flat_vectors: Vec<Vec<f64>> = Vec::new();
    let mut need_resolve = true;
    let mut old_x_alive: Vec<f64> = Vec::new();
    // Last dense solution (alive snapshot, U) for warm starts.
    let mut last_dense: Option<(Vec<usize>, linalg::Mat)> = None;

    'outer: while state.n_alive() > policy.stop_threshold() {
        if state.steps_taken() >= step_cap {
            break;
        }
        let n_t = state.n_alive();

        if cfg.mode == Mode::Fidelity
            || need_resolve
            || sampler.is_none()
            || steps_since_solve >= cfg.resolve_every
        {
            // Recompute energies exactly at re-solve time to stop drift.
            for i in 0..m {
                let mut g = 0.0;
                for &(j, v) in run_matrix.row(i) {
                    g += v * v * (1.0 - state.x()[j] * state.x()[j]);
                }
                energy[i] = g;
            }
            let assembly = policy.assemble(&ctx!());
            let mut w_all = assembly.w_rows;
            let x_alive = state.x_alive();
            if linalg::norm2(&x_alive) > 1e-12 {
                w_all.push(x_alive);
            }
            flat_vectors.clone_from(&w_all);
            let w_basis = linalg::orthonormalize(&w_all, 1e-10);
            let dim_w = w_basis.len();
            if (dim_w as f64) > n_t as f64 / policy.fail_denominator() {
                fail_events.push(FailEvent { step: state.steps_taken(), dim_w, n_t });
                audits.aborted_fail = true;
                break 'outer;
            }

            let warm = match &last_dense {
                Some((snapshot, u)) if snapshot == state.alive() => Some(u),
                _ => None,
            };
            match build_sampler(
                n_t,
                &w_basis,
                &assembly.blocks,
                assembly.kappa,
                assembly.eta,
                cfg,
                warm,
                &mut audits,
            )? {
                Some((s, dense_u)) => {
                    if let Some(u) = dense_u {
                        last_dense = Some((state.alive().to_vec(), u));
                    }
                    sampler = Some(s);
                }
                None => {
                    let eta_sum: f64 = assembly.blocks.iter().map(|b| b.eta_s).sum();
                    let margin = 1.0
                        - (dim_w as f64 / n_t as f64 + assembly.kappa + assembly.eta + eta_sum);
                    if margin > 0.0 {
                        return Err(EngineError::SolverBug { dim_w, n_t });
                    }
                    fail_events.push(FailEvent { step: state.steps_taken(), dim_w, n_t });
                    audits.aborted_fail = true;
                    break 'outer;
                }
            }
            resolves += 1;
            steps_since_solve = 0;
            pending_block_rows.clear();
            frozen_since_solve.clear();
            need_resolve = false;
            solve_alive = state.alive().to_vec();
            for p in solve_pos.iter_mut() {
                *p = usize::MAX;
            }
            for (pos, &j) in solve_alive.iter().enumerate() {
                solve_pos[j] = pos;
            }
        }

        // Sample in the solve-time coordinate space.
        let mut v_solve = match sampler.as_ref().unwrap() {
            Sampler::Perp { chain } => {
                let factor = CovFactor::IsotropicPerp {
                    chain: chain.clone(),
                    trace: (chain.h - chain.rank) as f64,
                };
                walk::sample_direction(&factor, &mut rng)?
            }
            Sampler::Dense { factor } => walk::sample_direction(factor, &mut rng)?,
        };

        // Between re-solves: re-orthogonalize against the moved x_t, any
        // newly frozen coordinates, and rows blocked since the last solve.
        if steps_since_solve > 0 {
            let mut spans: Vec<Vec<f64>> = Vec::new();
            let x_on_solve: Vec<f64> = solve_alive.iter().map(|&j| state.x()[j]).collect();
            if linalg::norm2(&x_on_solve) > 1e-12 {
                spans.push(x_on_solve);
            }
            for &j in &frozen_since_solve {
                let mut e = vec![0.0; solve_alive.len()];
                e[solve_pos[j]] = 1.0;
                spans.push(e);
            }
            for &i in &pending_block_rows {
                let mut r = vec![0.0; solve_alive.len()];
                for &(j, val) in run_matrix.row(i) {
                    if solve_pos[j] != usize::MAX {
                        r[solve_pos[j]] = val;
                    }
                }
                spans.push(r);
            }
            if !spans.is_empty() {
                let refs: Vec<&[f64]> = spans.iter().map(|s| s.as_slice()).collect();
                match walk::project_out(&v_solve, &refs) {
                    Ok(v) => v_solve = v,
                    Err(_) => {
                        need_resolve = true;
                        continue;
                    }
                }
            }
        }

        // Scatter to the current alive ordering.
        let mut v_cur = vec![0.0f64; state.n_alive()];
        if steps_since_solve == 0 {
            v_cur.copy_from_slice(&v_solve);
        } else {
            for (pos_cur, &j) in state.alive().iter().enumerate() {
                let ps = solve_pos[j];
                if ps != usize::MAX {
                    v_cur[pos_cur] = v_solve[ps];
                }
            }
            let nrm = linalg::norm2(&v_cur);
            if nrm < 1e-8 {
                need_resolve = true;
                continue;
            }
            for x in &mut v_cur {
                *x /= nrm;
            }
        }

        // Blocked-span flatness audit: every vector placed in W (large rows,
        // dangerous E-rows, x_t) must be orthogonal to the fresh sample. For
        // dangerous rows the flat vector is the modified E-row, which is what
        // makes their regularized discrepancy non-increasing. Measured on
        // pre-clamp updates at exact-contract steps.
        if steps_since_solve == 0 {
            let sdt = dt.sqrt();
            for w in &flat_vectors {
                let d = linalg::dot(w, &v_solve) * sdt;
                audits.max_blocked_drift = audits.max_blocked_drift.max(d.abs());
            }
        }

        {
            let x_alive = state.x_alive();
            audits.max_vx_inner = audits.max_vx_inner.max(linalg::dot(&v_cur, &x_alive).abs());
            audits.max_vnorm_err =
                audits.max_vnorm_err.max((linalg::norm2(&v_cur) - 1.0).abs());
        }

        // Step and update incremental row statistics from actual deltas.
        old_x_alive.clear();
        old_x_alive.extend(state.alive().iter().map(|&j| state.x()[j]));
        let alive_before: Vec<usize> = state.alive().to_vec();
        let frozen = state.step(&v_cur);
        for (pos, &j) in alive_before.iter().enumerate() {
            let dx = state.x()[j] - old_x_alive[pos];
            if dx == 0.0 {
                continue;
            }
            let xo = old_x_alive[pos];
            let xn = state.x()[j];
            let dsq = xn * xn - xo * xo;
            for &(i, val) in run_matrix.col(j) {
                disc[i] += val * dx;
                energy[i] -= val * val * dsq;
            }
        }
        steps_since_solve += 1;

        if !frozen.is_empty() {
            for &j in &frozen {
                for &(i, val) in run_matrix.col(j) {
                    sizes[i] -= 1;
                    sq_mass[i] -= val * val;
                }
            }
            frozen_since_solve.extend_from_slice(&frozen);
            if policy.on_freeze(&ctx!(), &frozen) {
                need_resolve = true;
            }
        }

        if cfg.collect_path_every > 0 && state.steps_taken() % cfg.collect_path_every as u64 == 0 {
            let max_disc = disc.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d));
            path.push(PathPoint {
                step: state.steps_taken(),
                t: state.t(),
                max_disc,
                n_alive: state.n_alive(),
            });
        }

        let obs = policy.observe_step(&ctx!());
        if obs.structural {
            need_resolve = true;
        }
        pending_block_rows.extend(obs.block_now);
        if let Some(trace) = y_trace.as_mut() {
            let rows = policy
                .y_values(&ctx!())
                .into_iter()
                .map(|(i, y)| (i as u32, y))
                .collect();
            trace.push(YTraceRecord { step: state.steps_taken(), rows });
        }
    }

    // Round. The exhaustive tail minimizes the evaluation matrix's
    // discrepancy directly.
    let coloring = walk::round_final(eval_matrix, state.x(), state.alive(), cfg.exhaust_limit);

    let sq: Vec<f64> = state.x().iter().map(|&v| v * v).collect();
    let norm_sq = linalg::pairwise_sum(&sq);
    audits.norm_gap = (norm_sq - state.t()).abs();
    let sdt = dt.sqrt();
    audits.norm_gap_bound =
        state.clamp_events() as f64 * (2.0 * sdt + dt) + 1e-9 * state.steps_taken() as f64 + 1e-9;
    audits.clamp_events = state.clamp_events();

    let mut detail = policy.detail_json(&ctx!());

    let rep = eval_matrix
        .disc_eval(&coloring.to_coloring())
        .expect("coloring length matches");
    let frac = eval_matrix
        .disc_eval(&state.coloring())
        .expect("fractional coloring evaluates");
    audits.rounding_residual = rep.max_abs - frac.max_abs;
    match &mut detail {
        serde_json::Value::Object(map) => {
            map.insert("rounding_residual".into(), audits.rounding_residual.into());
        }
        serde_json::Value::Null => {
            detail = serde_json::json!({ "rounding_residual": audits.rounding_residual });
        }
        _ => {}
    }
    let report = RunReport {
        instance_hash: io::instance_hash(eval_matrix),
        algo: policy.name().to_string(),
        params: policy.params_json(),
        seed: cfg.seed,
        dt,
        mode: cfg.mode.as_str().to_string(),
        disc_max: rep.max_abs,
        disc_per_row: cfg.record_per_row.then(|| rep.per_row.clone()),
        coloring: Some(coloring.signs().to_vec()),
        fail_events,
        steps: state.steps_taken(),
        resolves,
        wallclock_ms: start.elapsed().as_millis() as u64,
        freeze_count: state.freeze_log().len() as u64,
        tool_version: crate::TOOL_VERSION.to_string(),
    };

    Ok(RunOutput { report, coloring, audits, y_trace, path, detail })
}

/// Try the isotropic-projector candidate first; fall back to the dense
/// solver (warm-started when the alive set is unchanged). Returns the
/// sampler plus the dense U when one was solved, or None when the dense
/// solver certifies infeasibility.
#[allow(clippy::too_many_arguments)]
fn build_sampler(
    n_t: usize,
    w_basis: &[Vec<f64>],
    blocks: &[AssemblyBlock],
    kappa: f64,
    eta: f64,
    cfg: &EngineConfig,
    warm: Option<&linalg::Mat>,
    audits: &mut RunAudits,
) -> Result<Option<(Sampler, Option<linalg::Mat>)>, EngineError> {
    let rank = w_basis.len();
    let tol = cfg.sdp_tol;
    let block_rows: usize = blocks.iter().map(|b| b.rows.len()).sum();
    let check = if cfg.mode == Mode::Fidelity || block_rows <= 128 {
        BlockCheck::Exact
    } else {
        BlockCheck::Estimate
    };

    // Projector candidate U = I - QQ^T.
    let trace = (n_t - rank) as f64;
    if trace >= kappa * n_t as f64 - tol && trace > 1e-12 {
        let mut diag = vec![1.0f64; n_t];
        for q in w_basis {
            for (j, &qj) in q.iter().enumerate() {
                diag[j] -= qj * qj;
            }
        }
        let min_diag = diag.iter().cloned().fold(f64::INFINITY, f64::min);
        // lambda_max(D^-1/2 U D^-1/2) <= 1/min_diag since ||U|| <= 1, so
        // min_diag >= eta certifies the spectral-independence family
        // outright. Otherwise estimate the whitened top eigenvalue through
        // the implicit operator; the sufficient bound is very conservative
        // once a coordinate of x approaches the freeze band.
        let dominance_ok = if min_diag >= eta + tol {
            true
        } else if min_diag > 1e-9 {
            let inv_sqrt: Vec<f64> = diag.iter().map(|&d| 1.0 / d.sqrt()).collect();
            let apply = |v: &[f64]| -> Vec<f64> {
                let mut y: Vec<f64> = v.iter().zip(&inv_sqrt).map(|(a, b)| a * b).collect();
                for q in w_basis {
                    let c = linalg::dot(&y, q);
                    linalg::axpy(&mut y, -c, q);
                }
                for (yi, s) in y.iter_mut().zip(&inv_sqrt) {
                    *yi *= *s;
                }
                y
            };
            let est = operator_lambda_max(apply, n_t, 160) * 1.05;
            est <= 1.0 / eta - tol
        } else {
            false
        };
        if dominance_ok {
            let mut ratios = Vec::with_capacity(blocks.len());
            let mut ok = true;
            for blk in blocks {
                let bound = block_bound(blk, n_t);
                if let Some(ratio) = projector_block_ratio(blk, w_basis, n_t, check) {
                    if ratio > bound - tol {
                        ok = false;
                        break;
                    }
                    ratios.push((ratio, bound));
                }
            }
            if ok {
                audits.si_ratios.extend(ratios);
                audits.perp_solves += 1;
                let chain = HouseholderChain::new(n_t, w_basis);
                return Ok(Some((Sampler::Perp { chain }, None)));
            }
        }
    }
    audits.dense_solves += 1;

    // Dense path.
    let block_inputs: Vec<BlockInput> = blocks
        .iter()
        .map(|b| BlockInput::new(b.rows.clone(), b.eta_s))
        .collect();
    let spec = sdp::build_spec(n_t, w_basis, block_inputs, kappa, eta)?;
    match sdp::solve_warm(&spec, tol, cfg.sdp_max_iters, warm)? {
        SolveOutcome::Feasible(sol) => {
            let u = sol.u_matrix();
            for blk in spec.blocks.iter() {
                let ratio = crate::analysis::check_affine_si_mat(&blk.e, blk.active_rows, &u);
                audits.si_ratios.push((ratio, blk.bound()));
            }
            let factor = CovFactor::from_solution(&sol)?;
            Ok(Some((Sampler::Dense { factor }, Some(u))))
        }
        SolveOutcome::Infeasible(_) => Ok(None),
    }
}

fn block_bound(blk: &AssemblyBlock, n_t: usize) -> f64 {
    let r = blk.rows.len().div_ceil(n_t).max(1);
    r as f64 / blk.eta_s
}

/// Power iteration for the top eigenvalue of an implicit PSD operator.
fn operator_lambda_max(apply: impl Fn(&[f64]) -> Vec<f64>, n: usize, iters: usize) -> f64 {
    let mut v: Vec<f64> = (0..n)
        .map(|j| 1.0 + 0.37 * ((j * 2654435761usize % 101) as f64) / 101.0)
        .collect();
    let nv = linalg::norm2(&v);
    for x in &mut v {
        *x /= nv;
    }
    let mut lam = 0.0;
    for _ in 0..iters {
        let w = apply(&v);
        let nw = linalg::norm2(&w);
        if nw < 1e-300 {
            return 0.0;
        }
        lam = linalg::dot(&w, &v);
        v = w;
        for x in &mut v {
            *x /= nw;
        }
    }
    lam
}

/// How thoroughly to certify the affine blocks of a covariance candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BlockCheck {
    /// Full whitened eigendecomposition.
    Exact,
    /// Power-iteration estimate with a safety factor.
    Estimate,
}

/// lambda_max of the diag-whitened E U E^T for U = I - QQ^T. The Gram matrix
/// is assembled through per-column buckets (the E rows are sparse), so the
/// cost is governed by the actual overlap rather than r^2 h.
fn projector_block_ratio(
    blk: &AssemblyBlock,
    w_basis: &[Vec<f64>],
    n_t: usize,
    check: BlockCheck,
) -> Option<f64> {
    let r = blk.rows.len();
    if r == 0 {
        return None;
    }
    let mut m = linalg::Mat::zeros(r, r);
    let mut buckets: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_t];
    for (ri, row) in blk.rows.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            if v != 0.0 {
                buckets[c].push((ri, v));
            }
        }
    }
    for bucket in &buckets {
        for (a_idx, &(i, vi)) in bucket.iter().enumerate() {
            for &(j, vj) in &bucket[a_idx..] {
                *m.at_mut(i, j) += vi * vj;
                if i != j {
                    *m.at_mut(j, i) += vi * vj;
                }
            }
        }
    }
    for q in w_basis {
        let eq: Vec<f64> = (0..r).map(|i| linalg::dot(&blk.rows[i], q)).collect();
        for i in 0..r {
            if eq[i] == 0.0 {
                continue;
            }
            for j in 0..r {
                *m.at_mut(i, j) -= eq[i] * eq[j];
            }
        }
    }
    match check {
        BlockCheck::Exact => Some(crate::analysis::whitened_lambda_max(&m)),
        BlockCheck::Estimate => {
            let diag = m.diag();
            let keep: Vec<usize> = (0..r).filter(|&i| diag[i] > 1e-12).collect();
            if keep.is_empty() {
                return Some(0.0);
            }
            let kn = keep.len();
            let mut wh = linalg::Mat::zeros(kn, kn);
            for (a, &i) in keep.iter().enumerate() {
                for (b, &j) in keep.iter().enumerate() {
                    *wh.at_mut(a, b) = m.at(i, j) / (diag[i] * diag[j]).sqrt();
                }
            }
            // Safety factor compensates power-iteration underestimation.
            Some(linalg::lambda_max_estimate(&wh, 120) * 1.05)
        }
    }
}

/// Gather row i of `a` as a dense vector over the alive coordinates.
pub fn row_alive_dense(a: &InstanceMatrix, i: usize, state: &WalkState) -> Vec<f64> {
    let mut out = vec![0.0; state.n_alive()];
    for &(j, v) in a.row(i) {
        if let Some(pos) = state.alive_index(j) {
            out[pos] = v;
        }
    }
    out
}

/// Row of the affine block: a_i - 2 beta a_i^2 x_t restricted to alive.
pub fn modified_row_alive(
    a: &InstanceMatrix,
    i: usize,
    beta: f64,
    state: &WalkState,
) -> Vec<f64> {
    let mut out = vec![0.0; state.n_alive()];
    for &(j, v) in a.row(i) {
        if let Some(pos) = state.alive_index(j) {
            out[pos] = v - 2.0 * beta * v * v * state.x()[j];
        }
    }
    out
}
