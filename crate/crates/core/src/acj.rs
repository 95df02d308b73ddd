//! Adaptive cycle-jump engine plus the fixed (FCJ) and extrapolation-based
//! (ECJ) baseline schemes.
//!
//! The fatigue life is split into three stages, each with its own global
//! monitoring variable and target increment per jump:
//!
//! | stage | identification       | monitor        | target increment    |
//! |-------|----------------------|----------------|---------------------|
//! | I     | max(abar) <= abar_th | max(abar)      | abar_th - max(abar) |
//! | II    | max(d) <= 0.99       | max(d)         | lambda_II * 0.02    |
//! | III   | max(d) > 0.99        | crack length a | lambda_III * l/2    |
//!
//! A quadratic LLSQ fit of the monitor over the last 3 N_s computed cycles
//! gives the jump size; the local fatigue field is extrapolated over the
//! jump with a 4-point backward finite-difference stencil, and a trial
//! cycle with frozen fatigue validates the jump (restore + halve on
//! non-convergence, restore + rescale when the observed increment exceeds
//! 1.5x the target).

use std::collections::VecDeque;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cycle::{CycleFailure, CycleRecord, CycleSystem};
use crate::error::{Error, Result};
use crate::model::FatigueParams;

/// Settings of the adaptive engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcjSettings {
    /// Stencil size: cycles resolved between jumps.
    #[serde(default = "default_n_s")]
    pub n_s: usize,
    #[serde(default = "one")]
    pub lambda_ii: f64,
    #[serde(default = "one")]
    pub lambda_iii: f64,
    /// Localization tolerance: stage III begins at max(d) > 1 - tol.
    #[serde(default = "default_d_loc_tol")]
    pub d_loc_tol: f64,
    /// Trial-cycle rejection threshold on the observed increment.
    #[serde(default = "default_overshoot")]
    pub overshoot_factor: f64,
    /// Stage II base increment of max(d).
    #[serde(default = "default_stage_ii")]
    pub stage_ii_base_increment: f64,
}

fn default_n_s() -> usize {
    4
}
fn one() -> f64 {
    1.0
}
fn default_d_loc_tol() -> f64 {
    0.01
}
fn default_overshoot() -> f64 {
    1.5
}
fn default_stage_ii() -> f64 {
    0.02
}

impl Default for AcjSettings {
    fn default() -> Self {
        AcjSettings {
            n_s: 4,
            lambda_ii: 1.0,
            lambda_iii: 1.0,
            d_loc_tol: 0.01,
            overshoot_factor: 1.5,
            stage_ii_base_increment: 0.02,
        }
    }
}

impl AcjSettings {
    pub fn validate(&self) -> Result<()> {
        if self.n_s != 4 {
            // the FD extrapolation stencil is hard-coded for 4 cycles
            return Err(Error::Config(format!("N_s must be 4, got {}", self.n_s)));
        }
        if self.lambda_ii <= 0.0
            || self.lambda_iii <= 0.0
            || self.d_loc_tol <= 0.0
            || self.overshoot_factor <= 0.0
            || self.stage_ii_base_increment <= 0.0
        {
            return Err(Error::Config("ACJ parameters must be positive".into()));
        }
        Ok(())
    }
}

/// Fatigue-life stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    I,
    II,
    III,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::I => write!(f, "I"),
            Stage::II => write!(f, "II"),
            Stage::III => write!(f, "III"),
        }
    }
}

/// Stage detection from the current global monitors.
pub fn detect_stage(max_alpha_bar: f64, max_d: f64, fatigue: &FatigueParams, settings: &AcjSettings) -> Stage {
    if max_alpha_bar <= fatigue.alpha_th {
        Stage::I
    } else if max_d <= 1.0 - settings.d_loc_tol {
        Stage::II
    } else {
        Stage::III
    }
}

/// Target increment of the stage monitor for one jump.
pub fn target_increment(
    stage: Stage,
    settings: &AcjSettings,
    max_alpha_bar: f64,
    fatigue: &FatigueParams,
    ell: f64,
) -> Result<f64> {
    match stage {
        Stage::I => {
            let t = fatigue.alpha_th - max_alpha_bar;
            if t <= 0.0 {
                return Err(Error::Config(format!(
                    "stage I with max(abar) = {max_alpha_bar} >= threshold {}",
                    fatigue.alpha_th
                )));
            }
            Ok(t)
        }
        Stage::II => Ok(settings.lambda_ii * settings.stage_ii_base_increment),
        Stage::III => Ok(settings.lambda_iii * ell / 2.0),
    }
}

/// Ring buffer of (N, Lambda) pairs spanning the last 3 N_s computed cycles.
#[derive(Debug, Clone, Default)]
pub struct MonitorHistory {
    points: VecDeque<(u64, f64)>,
    cap: usize,
}

impl MonitorHistory {
    pub fn new(n_s: usize) -> MonitorHistory {
        MonitorHistory {
            points: VecDeque::new(),
            cap: 3 * n_s,
        }
    }

    pub fn push(&mut self, n: u64, lambda: f64) {
        if let Some(&(last, _)) = self.points.back() {
            debug_assert!(n > last, "monitor history indices must increase");
        }
        self.points.push_back((n, lambda));
        while self.points.len() > self.cap {
            self.points.pop_front();
        }
    }

    pub fn clear(&mut self) {
        self.points.clear();
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.points.iter().copied()
    }
}

/// Quadratic LLSQ fit in the shifted coordinate tau = N - center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticFit {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
    pub center: f64,
}

impl QuadraticFit {
    /// Coefficients in the raw N basis (Lambda = a0 + a1 N + a2 N^2).
    pub fn raw_coefficients(&self) -> (f64, f64, f64) {
        let c = self.center;
        (
            self.c0 - self.c1 * c + self.c2 * c * c,
            self.c1 - 2.0 * self.c2 * c,
            self.c2,
        )
    }

    pub fn eval(&self, n: f64) -> f64 {
        let t = n - self.center;
        self.c0 + self.c1 * t + self.c2 * t * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub c0: f64,
    pub c1: f64,
    pub center: f64,
}

/// Least squares via modified Gram-Schmidt QR on the Vandermonde columns.
fn llsq(xs: &[f64], ys: &[f64], degree: usize) -> Vec<f64> {
    let m = xs.len();
    let n = degree + 1;
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|p| xs.iter().map(|&x| x.powi(p as i32)).collect())
        .collect();
    let mut r = vec![vec![0.0; n]; n];
    for k in 0..n {
        for j in 0..k {
            let dot: f64 = (0..m).map(|i| cols[j][i] * cols[k][i]).sum();
            r[j][k] = dot;
            for i in 0..m {
                cols[k][i] -= dot * cols[j][i];
            }
        }
        let norm: f64 = (0..m).map(|i| cols[k][i] * cols[k][i]).sum::<f64>().sqrt();
        r[k][k] = norm;
        if norm > 0.0 {
            for i in 0..m {
                cols[k][i] /= norm;
            }
        }
    }
    // back substitution on R x = Q^T y
    let qty: Vec<f64> = (0..n).map(|k| (0..m).map(|i| cols[k][i] * ys[i]).sum()).collect();
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let mut s = qty[k];
        for j in k + 1..n {
            s -= r[k][j] * x[j];
        }
        x[k] = if r[k][k].abs() > 1e-300 { s / r[k][k] } else { 0.0 };
    }
    x
}

/// Quadratic fit of the monitor history, centered at the last cycle.
/// Fewer than 3 data points is an insufficient-data signal.
pub fn fit_quadratic(history: &MonitorHistory) -> Result<QuadraticFit> {
    if history.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} monitor points, need 3 for the quadratic fit",
            history.len()
        )));
    }
    let center = history.points().last().unwrap().0 as f64;
    let xs: Vec<f64> = history.points().map(|(n, _)| n as f64 - center).collect();
    let ys: Vec<f64> = history.points().map(|(_, l)| l).collect();
    let c = llsq(&xs, &ys, 2);
    Ok(QuadraticFit {
        c0: c[0],
        c1: c[1],
        c2: c[2],
        center,
    })
}

pub fn fit_linear(history: &MonitorHistory) -> Result<LinearFit> {
    if history.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} monitor points, need 2 for the linear fit",
            history.len()
        )));
    }
    let center = history.points().last().unwrap().0 as f64;
    let xs: Vec<f64> = history.points().map(|(n, _)| n as f64 - center).collect();
    let ys: Vec<f64> = history.points().map(|(_, l)| l).collect();
    let c = llsq(&xs, &ys, 1);
    Ok(LinearFit {
        c0: c[0],
        c1: c[1],
        center,
    })
}

/// Which branch produced the jump size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpBranch {
    Quadratic,
    /// Negative discriminant (or vanishing quadratic term): linear refit.
    Linear,
    /// Negative jump size: half of the last accepted jump.
    Halved,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpComputation {
    pub delta_n: i64,
    pub branch: JumpBranch,
}

/// Threshold below which the quadratic coefficient routes to the linear
/// branch directly.
const QUAD_EPS: f64 = 1e-14;

/// Solve the cycle-jump criterion for the jump size. Special cases: a
/// negative discriminant reverts to the linear fit; a negative jump size
/// falls back to half of the last accepted jump.
pub fn compute_jump(
    quad: &QuadraticFit,
    linear: &LinearFit,
    lambda_now: f64,
    n_now: u64,
    target: f64,
    last_accepted: Option<u64>,
) -> JumpComputation {
    let halved = || JumpComputation {
        delta_n: last_accepted.map(|d| (d / 2) as i64).unwrap_or(0),
        branch: JumpBranch::Halved,
    };
    let linear_branch = || {
        if linear.c1 <= 0.0 {
            return halved();
        }
        let n_bar = (lambda_now + target - linear.c0) / linear.c1 + linear.center;
        let delta = n_bar.round() - n_now as f64;
        if delta < 0.0 {
            halved()
        } else {
            JumpComputation {
                delta_n: delta as i64,
                branch: JumpBranch::Linear,
            }
        }
    };
    if quad.c2.abs() <= QUAD_EPS {
        return linear_branch();
    }
    let disc = quad.c1 * quad.c1 - 4.0 * quad.c2 * (quad.c0 - lambda_now - target);
    if disc < 0.0 {
        return linear_branch();
    }
    let tau_bar = (-quad.c1 + disc.sqrt()) / (2.0 * quad.c2);
    let n_bar = tau_bar + quad.center;
    let delta = n_bar.round() - n_now as f64;
    if delta < 0.0 {
        halved()
    } else {
        JumpComputation {
            delta_n: delta as i64,
            branch: JumpBranch::Quadratic,
        }
    }
}

/// Backward finite-difference extrapolation of the fatigue field over a
/// jump: abar(N + dN) = abar(N) + D1 dN + D2 dN^2 with the 4-point stencils
/// (-2, 9, -18, 11)/6 and (-1, 4, -5, 2)/2 over cycles N-3..N. Negative
/// increments are neglected, so the result never falls below abar(N).
pub fn extrapolate_alpha(buffer: &[Vec<f64>], delta_n: u64) -> Result<Vec<f64>> {
    if buffer.len() != 4 {
        return Err(Error::InsufficientData(format!(
            "{} fatigue fields buffered, the stencil needs 4",
            buffer.len()
        )));
    }
    let n_pts = buffer[3].len();
    let dn = delta_n as f64;
    let mut out = Vec::with_capacity(n_pts);
    for i in 0..n_pts {
        let (a0, a1, a2, a3) = (buffer[0][i], buffer[1][i], buffer[2][i], buffer[3][i]);
        let d1 = (-2.0 * a0 + 9.0 * a1 - 18.0 * a2 + 11.0 * a3) / 6.0;
        let d2 = (-a0 + 4.0 * a1 - 5.0 * a2 + 2.0 * a3) / 2.0;
        let star = a3 + d1 * dn + d2 * dn * dn;
        out.push(star.max(a3));
    }
    Ok(out)
}

/// Estimated number of cycles to be resolved for a full fatigue life.
pub fn estimate_resolved(lambda_ii: f64, lambda_iii: f64, n_s: usize, a_u_over_ell: f64) -> u64 {
    let ns = n_s as f64;
    let est = ns + 0.99 / (lambda_ii * 0.02) * ns + a_u_over_ell / (lambda_iii / 2.0) * ns;
    est.round() as u64
}

/// ECJ jump size: q times the spatial minimum of |d_abar| over the change
/// of |d_abar|, capped at delta_n_max. Points with a vanishing denominator
/// are excluded; if every denominator vanishes the cap is returned.
pub fn ecj_jump(alpha_fields: [&[f64]; 3], q: f64, delta_n_max: u64) -> u64 {
    let [f0, f1, f2] = alpha_fields;
    let mut min_ratio = f64::INFINITY;
    for i in 0..f2.len() {
        let d_now = (f2[i] - f1[i]).abs();
        let d_prev = (f1[i] - f0[i]).abs();
        let denom = (d_now - d_prev).abs();
        if denom > 0.0 {
            min_ratio = min_ratio.min(d_now / denom);
        }
    }
    if !min_ratio.is_finite() {
        return delta_n_max;
    }
    ((q * min_ratio).floor() as u64).min(delta_n_max)
}

/// Outcome of one jump decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JumpOutcome {
    Jumped,
    /// The quadratic criterion returned dN < 2.
    NoJump,
    RejectedNonConverged,
    RejectedOvershoot,
    /// dN < 2 arrived through the halving fallback.
    HalvedFallback,
    /// dN < 2 arrived through the linear fallback.
    LinearFallback,
}

impl std::fmt::Display for JumpOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            JumpOutcome::Jumped => "jumped",
            JumpOutcome::NoJump => "no_jump",
            JumpOutcome::RejectedNonConverged => "rejected_nonconverged",
            JumpOutcome::RejectedOvershoot => "rejected_overshoot",
            JumpOutcome::HalvedFallback => "halved_fallback",
            JumpOutcome::LinearFallback => "linear_fallback",
        };
        write!(f, "{s}")
    }
}

/// One cycle-jump decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JumpDecision {
    pub n_before: u64,
    pub stage: Stage,
    pub target_increment: f64,
    pub delta_n: i64,
    pub outcome: JumpOutcome,
    /// Observed monitor increment of the trial cycle.
    pub observed_increment: Option<f64>,
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunEnd {
    /// A regular resolved cycle failed to converge: fatigue failure N_u.
    CycleNonConvergence,
    /// The smeared crack reached the configured failure length: N_u.
    CrackLengthReached,
    BudgetCycles,
    BudgetWall,
    /// Baseline (FCJ/ECJ) trial cycle failed to converge: run invalid.
    BaselineJumpFailure,
}

impl std::fmt::Display for RunEnd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RunEnd::CycleNonConvergence => "cycle_nonconvergence",
            RunEnd::CrackLengthReached => "crack_length_reached",
            RunEnd::BudgetCycles => "budget_cycles",
            RunEnd::BudgetWall => "budget_wall",
            RunEnd::BaselineJumpFailure => "baseline_jump_failure",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for RunEnd {
    type Err = Error;

    fn from_str(s: &str) -> Result<RunEnd> {
        Ok(match s {
            "cycle_nonconvergence" => RunEnd::CycleNonConvergence,
            "crack_length_reached" => RunEnd::CrackLengthReached,
            "budget_cycles" => RunEnd::BudgetCycles,
            "budget_wall" => RunEnd::BudgetWall,
            "baseline_jump_failure" => RunEnd::BaselineJumpFailure,
            other => return Err(Error::Config(format!("unknown run end '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunBudgets {
    pub max_cycles: u64,
    pub max_wall_seconds: f64,
    /// Smeared crack length at which failure N_u is declared.
    pub failure_crack_length: Option<f64>,
}

impl Default for RunBudgets {
    fn default() -> Self {
        RunBudgets {
            max_cycles: 1_000_000,
            max_wall_seconds: 3600.0,
            failure_crack_length: None,
        }
    }
}

/// Acceleration engine selector.
#[derive(Debug, Clone, PartialEq)]
pub enum EngineKind {
    /// High-fidelity: every cycle resolved.
    Hf,
    Acj(AcjSettings),
    /// Fixed jump size after every block of N_s resolved cycles.
    Fcj { delta_n: u64, n_s: usize },
    Ecj { q: f64, delta_n_max: u64, n_s: usize },
}

/// Full trace of a run.
#[derive(Debug, Clone)]
pub struct RunTrace {
    pub records: Vec<CycleRecord>,
    pub jumps: Vec<JumpDecision>,
    /// Declared fatigue life, when failure was reached.
    pub n_u: Option<u64>,
    pub end: RunEnd,
    /// Number of resolved (computed) cycles N_r.
    pub resolved: u64,
    pub final_cycle: u64,
    /// Accumulated solver wall time (s).
    pub wall_seconds: f64,
    /// Per accepted jump: (N before the jump, L2 norm of the mean relative
    /// prediction error over the post-jump stencil cycles). Populated only
    /// when prediction diagnostics are enabled.
    pub prediction_errors: Vec<(u64, f64)>,
}

struct PendingDiagnostics {
    stencil: Vec<Vec<f64>>,
    delta_n: u64,
    n_before: u64,
    collected: Vec<Vec<f64>>,
}

/// Drive a cycle system with the selected engine until failure or budget
/// exhaustion.
pub fn run_engine<S: CycleSystem>(
    sys: &mut S,
    engine: &EngineKind,
    budgets: &RunBudgets,
    diagnostics: bool,
) -> Result<RunTrace> {
    let n_s = match engine {
        EngineKind::Hf => 4,
        EngineKind::Acj(s) => {
            s.validate()?;
            s.n_s
        }
        EngineKind::Fcj { delta_n, n_s } => {
            if *delta_n < 2 {
                return Err(Error::Config("FCJ jump size must be at least 2".into()));
            }
            *n_s
        }
        EngineKind::Ecj { n_s, .. } => *n_s,
    };
    let stage_settings = match engine {
        EngineKind::Acj(s) => *s,
        _ => AcjSettings::default(),
    };
    let fatigue = sys.fatigue_params();
    let ell = sys.ell();

    let mut trace = RunTrace {
        records: Vec::new(),
        jumps: Vec::new(),
        n_u: None,
        end: RunEnd::BudgetCycles,
        resolved: 0,
        final_cycle: 0,
        wall_seconds: 0.0,
        prediction_errors: Vec::new(),
    };
    let mut monitor = MonitorHistory::new(n_s);
    let mut alpha_buf: VecDeque<(u64, Vec<f64>)> = VecDeque::new();
    let mut cycles_since_jump = 0usize;
    let mut last_accepted: Option<u64> = None;
    let mut cur_stage: Option<Stage> = None;
    let mut pending: Option<PendingDiagnostics> = None;
    let started = Instant::now();

    let monitor_value = |stage: Stage, rec: &CycleRecord| match stage {
        Stage::I => rec.max_alpha_bar,
        Stage::II => rec.max_d,
        Stage::III => rec.crack_length,
    };

    // accept a trial record into the trace and reset the jump bookkeeping;
    // evaluates to true when the crack-length failure was reached
    macro_rules! accept_jump {
        ($trec:expr, $n_target:expr, $stage:expr) => {{
            let trec = $trec;
            trace.wall_seconds += trec.wall_time;
            trace.records.push(trec);
            trace.resolved += 1;
            alpha_buf.clear();
            alpha_buf.push_back(($n_target, sys.alpha_bar().to_vec()));
            cycles_since_jump = 1;
            let stage_after = detect_stage(trec.max_alpha_bar, trec.max_d, &fatigue, &stage_settings);
            if stage_after != $stage {
                monitor.clear();
            }
            cur_stage = Some(stage_after);
            monitor.push($n_target, monitor_value(stage_after, &trec));
            let failed = budgets
                .failure_crack_length
                .is_some_and(|a_fail| trec.crack_length >= a_fail);
            if failed {
                trace.end = RunEnd::CrackLengthReached;
                trace.n_u = Some(trec.cycle);
            }
            failed
        }};
    }

    'run: loop {
        if sys.cycle_index() >= budgets.max_cycles {
            trace.end = RunEnd::BudgetCycles;
            break;
        }
        if started.elapsed().as_secs_f64() > budgets.max_wall_seconds {
            trace.end = RunEnd::BudgetWall;
            break;
        }

        let rec = match sys.resolve_cycle() {
            Ok(r) => r,
            Err(CycleFailure { .. }) => {
                trace.end = RunEnd::CycleNonConvergence;
                trace.n_u = Some(sys.cycle_index() + 1);
                break;
            }
        };
        trace.wall_seconds += rec.wall_time;
        trace.records.push(rec);
        trace.resolved += 1;
        cycles_since_jump += 1;

        if let Some(p) = pending.as_mut() {
            p.collected.push(sys.alpha_bar().to_vec());
            if p.collected.len() == n_s - 1 {
                let p = pending.take().unwrap();
                if let Some(l2) = prediction_error_l2(&p) {
                    trace.prediction_errors.push((p.n_before, l2));
                }
            }
        }

        alpha_buf.push_back((rec.cycle, sys.alpha_bar().to_vec()));
        while alpha_buf.len() > n_s {
            alpha_buf.pop_front();
        }

        let stage = detect_stage(rec.max_alpha_bar, rec.max_d, &fatigue, &stage_settings);
        if cur_stage.is_some() && cur_stage != Some(stage) {
            monitor.clear();
        }
        cur_stage = Some(stage);
        monitor.push(rec.cycle, monitor_value(stage, &rec));

        if let Some(a_fail) = budgets.failure_crack_length {
            if rec.crack_length >= a_fail {
                trace.end = RunEnd::CrackLengthReached;
                trace.n_u = Some(rec.cycle);
                break;
            }
        }

        // a jump needs N_s computed cycles since the last one
        if cycles_since_jump < n_s || alpha_buf.len() < n_s {
            continue;
        }
        debug_assert!(
            alpha_buf
                .iter()
                .zip(alpha_buf.iter().skip(1))
                .all(|(a, b)| b.0 == a.0 + 1),
            "fatigue buffer must hold consecutive cycles"
        );

        match engine {
            EngineKind::Hf => {}
            EngineKind::Acj(settings) => {
                if monitor.len() < 3 {
                    continue;
                }
                let quad = fit_quadratic(&monitor)?;
                let lin = fit_linear(&monitor)?;
                let lambda_now = monitor_value(stage, &rec);
                let target = target_increment(stage, settings, rec.max_alpha_bar, &fatigue, ell)?;
                let jump = compute_jump(&quad, &lin, lambda_now, rec.cycle, target, last_accepted);
                let mut attempt = jump.delta_n;
                let mut branch = jump.branch;
                loop {
                    if attempt < 2 {
                        let outcome = match branch {
                            JumpBranch::Quadratic => JumpOutcome::NoJump,
                            JumpBranch::Linear => JumpOutcome::LinearFallback,
                            JumpBranch::Halved => JumpOutcome::HalvedFallback,
                        };
                        trace.jumps.push(JumpDecision {
                            n_before: rec.cycle,
                            stage,
                            target_increment: target,
                            delta_n: attempt,
                            outcome,
                            observed_increment: None,
                        });
                        break;
                    }
                    let delta_n = attempt as u64;
                    let stencil: Vec<Vec<f64>> = alpha_buf.iter().map(|(_, a)| a.clone()).collect();
                    let alpha_star = extrapolate_alpha(&stencil, delta_n)?;
                    let snap = sys.snapshot();
                    let n_target = rec.cycle + delta_n;
                    match sys.trial_cycle(&alpha_star, n_target) {
                        Err(_) => {
                            sys.restore(&snap);
                            trace.jumps.push(JumpDecision {
                                n_before: rec.cycle,
                                stage,
                                target_increment: target,
                                delta_n: attempt,
                                outcome: JumpOutcome::RejectedNonConverged,
                                observed_increment: None,
                            });
                            // retry with half of the last accepted jump,
                            // never larger than half the failed attempt
                            let base = last_accepted.unwrap_or(delta_n).min(delta_n);
                            attempt = (base / 2) as i64;
                            branch = JumpBranch::Halved;
                        }
                        Ok(trec) => {
                            let observed = monitor_value(stage, &trec) - lambda_now;
                            if observed > settings.overshoot_factor * target {
                                sys.restore(&snap);
                                trace.jumps.push(JumpDecision {
                                    n_before: rec.cycle,
                                    stage,
                                    target_increment: target,
                                    delta_n: attempt,
                                    outcome: JumpOutcome::RejectedOvershoot,
                                    observed_increment: Some(observed),
                                });
                                // rescale the jump towards the target
                                attempt = (target / observed * attempt as f64).round() as i64;
                                branch = JumpBranch::Quadratic;
                            } else {
                                trace.jumps.push(JumpDecision {
                                    n_before: rec.cycle,
                                    stage,
                                    target_increment: target,
                                    delta_n: attempt,
                                    outcome: JumpOutcome::Jumped,
                                    observed_increment: Some(observed),
                                });
                                if diagnostics {
                                    pending = Some(PendingDiagnostics {
                                        stencil,
                                        delta_n,
                                        n_before: rec.cycle,
                                        collected: Vec::new(),
                                    });
                                }
                                last_accepted = Some(delta_n);
                                if accept_jump!(trec, n_target, stage) {
                                    break 'run;
                                }
                                break;
                            }
                        }
                    }
                }
            }
            EngineKind::Fcj { delta_n, .. } => {
                let stencil: Vec<Vec<f64>> = alpha_buf.iter().map(|(_, a)| a.clone()).collect();
                let alpha_star = extrapolate_alpha(&stencil, *delta_n)?;
                let snap = sys.snapshot();
                let n_target = rec.cycle + delta_n;
                match sys.trial_cycle(&alpha_star, n_target) {
                    Err(_) => {
                        sys.restore(&snap);
                        trace.jumps.push(JumpDecision {
                            n_before: rec.cycle,
                            stage,
                            target_increment: 0.0,
                            delta_n: *delta_n as i64,
                            outcome: JumpOutcome::RejectedNonConverged,
                            observed_increment: None,
                        });
                        trace.end = RunEnd::BaselineJumpFailure;
                        break 'run;
                    }
                    Ok(trec) => {
                        trace.jumps.push(JumpDecision {
                            n_before: rec.cycle,
                            stage,
                            target_increment: 0.0,
                            delta_n: *delta_n as i64,
                            outcome: JumpOutcome::Jumped,
                            observed_increment: Some(monitor_value(stage, &trec) - monitor_value(stage, &rec)),
                        });
                        if diagnostics {
                            pending = Some(PendingDiagnostics {
                                stencil,
                                delta_n: *delta_n,
                                n_before: rec.cycle,
                                collected: Vec::new(),
                            });
                        }
                        if accept_jump!(trec, n_target, stage) {
                            break 'run;
                        }
                    }
                }
            }
            EngineKind::Ecj { q, delta_n_max, .. } => {
                let fields: Vec<&[f64]> = alpha_buf.iter().map(|(_, a)| a.as_slice()).collect();
                let k = fields.len();
                let dn = ecj_jump([fields[k - 3], fields[k - 2], fields[k - 1]], *q, *delta_n_max);
                if dn < 2 {
                    trace.jumps.push(JumpDecision {
                        n_before: rec.cycle,
                        stage,
                        target_increment: 0.0,
                        delta_n: dn as i64,
                        outcome: JumpOutcome::NoJump,
                        observed_increment: None,
                    });
                    continue;
                }
                let stencil: Vec<Vec<f64>> = alpha_buf.iter().map(|(_, a)| a.clone()).collect();
                let alpha_star = extrapolate_alpha(&stencil, dn)?;
                let snap = sys.snapshot();
                let n_target = rec.cycle + dn;
                match sys.trial_cycle(&alpha_star, n_target) {
                    Err(_) => {
                        sys.restore(&snap);
                        trace.jumps.push(JumpDecision {
                            n_before: rec.cycle,
                            stage,
                            target_increment: 0.0,
                            delta_n: dn as i64,
                            outcome: JumpOutcome::RejectedNonConverged,
                            observed_increment: None,
                        });
                        trace.end = RunEnd::BaselineJumpFailure;
                        break 'run;
                    }
                    Ok(trec) => {
                        trace.jumps.push(JumpDecision {
                            n_before: rec.cycle,
                            stage,
                            target_increment: 0.0,
                            delta_n: dn as i64,
                            outcome: JumpOutcome::Jumped,
                            observed_increment: Some(monitor_value(stage, &trec) - monitor_value(stage, &rec)),
                        });
                        if accept_jump!(trec, n_target, stage) {
                            break 'run;
                        }
                    }
                }
            }
        }
    }
    trace.final_cycle = sys.cycle_index();
    for j in &trace.jumps {
        assert!(
            j.outcome != JumpOutcome::Jumped || j.delta_n >= 2,
            "accepted jumps must skip at least 2 cycles"
        );
    }
    Ok(trace)
}

/// Mean relative prediction error per point, L2 over the field. Points with
/// a vanishing denominator are excluded.
fn prediction_error_l2(p: &PendingDiagnostics) -> Option<f64> {
    let n_pts = p.stencil[3].len();
    let stars: Vec<Vec<f64>> = (1..=p.collected.len() as u64)
        .map(|i| extrapolate_alpha(&p.stencil, p.delta_n + i).expect("stencil is full"))
        .collect();
    let mut sum_sq = 0.0;
    let mut any = false;
    for x in 0..n_pts {
        let mut acc = 0.0;
        let mut ok = true;
        for (i, computed) in p.collected.iter().enumerate() {
            let denom = computed[x];
            if denom == 0.0 {
                ok = false;
                break;
            }
            acc += (stars[i][x] - denom) / denom;
        }
        if ok {
            let eps = acc / p.collected.len() as f64;
            sum_sq += eps * eps;
            any = true;
        }
    }
    any.then(|| sum_sq.sqrt())
}
