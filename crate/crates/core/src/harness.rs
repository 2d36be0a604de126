//! Experiment drivers: initial conditions, the time loop, convergence
//! studies, parameter sweeps and scheme comparisons.
//!
//! Sweep entries are independent jobs. [`parallel_map`] runs them on scoped
//! threads and returns results in input order, so outputs do not depend on
//! the job count.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use evalexpr::{build_operator_tree, ContextWithMutableFunctions, ContextWithMutableVariables, Function, HashMapContext, Value};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::diagnostics::{EnergyTrace, TraceRecord, Violation};
use crate::error::{GridError, IntegratorError, ModelError};
use crate::grid::{l2_norm, PeriodicGrid, ScalarField};
use crate::integrators::{initialize, step, IntegratorState, Scheme, SchemeConfig, StepReport};
use crate::models::ModelSpec;
use crate::snapshot;

pub const LIBRARY_VERSION: &str = env!("CARGO_PKG_VERSION");

/// A failed run together with what was computed before the failure.
#[derive(Debug)]
pub struct Divergence {
    pub error: IntegratorError,
    pub last_good: IntegratorState,
    pub trace: EnergyTrace,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} (last good step {} at t = {})",
            self.error, self.last_good.step_index, self.last_good.t
        )
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("run diverged: {0}")]
    Diverged(Box<Divergence>),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("invalid experiment setup: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl HarnessError {
    pub fn is_divergence(&self) -> bool {
        match self {
            HarnessError::Diverged(_) => true,
            HarnessError::Integrator(e) => e.is_divergence(),
            _ => false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalPatch {
    pub center: [f64; 2],
    pub theta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InitialCondition {
    /// `Σ -tanh((|x - cᵢ| - Rᵢ)/(√2 ε)) + 1`: value 1 inside the bubbles and
    /// -1 outside.
    TwoBubbles {
        centers: Vec<[f64; 2]>,
        radii: Vec<f64>,
        eps: f64,
    },
    /// Six-fold flower `tanh((1.5 + 1.2 cos 6θ - 2πr)/(√2 ε))` about the
    /// domain center.
    Flower { eps: f64 },
    /// `A(sin 3x sin 2y + sin 5x sin 5y)`.
    MbeSine { amplitude: f64 },
    /// `φ₀ + A·U(-1, 1)` per node.
    PfcRandom { phi0: f64, amplitude: f64, seed: u64 },
    /// Liquid at `φ₀` with square crystallite patches
    /// `φ₀ + C₁(cos(C₂ y_l/√3) cos(C₂ x_l) - ½ cos(2C₂ y_l/√3))`.
    PfcCrystallites {
        phi0: f64,
        c1: f64,
        c2: f64,
        side: f64,
        patches: Vec<CrystalPatch>,
    },
    /// `φ̄ + A·(U - mean U)`: random perturbation with exactly zero mean.
    DiblockRandom { phi_mean: f64, amplitude: f64, seed: u64 },
    Constant { value: f64 },
    /// Expression in `x`, `y`, `lx`, `ly` and `pi`, with `sin`, `cos`,
    /// `tanh`, `exp`, `sqrt`, `abs`, `ln` available.
    CustomExpression { expr: String },
}

impl InitialCondition {
    pub fn two_bubbles_example1(eps: f64) -> Self {
        InitialCondition::TwoBubbles {
            centers: vec![[PI - 0.8, PI], [PI + 1.7, PI]],
            radii: vec![1.4, 0.5],
            eps,
        }
    }

    pub fn two_bubbles_example3(eps: f64) -> Self {
        InitialCondition::TwoBubbles {
            centers: vec![[0.3, 0.5], [0.7, 0.5]],
            radii: vec![0.19, 0.19],
            eps,
        }
    }

    pub fn crystallites_example7() -> Self {
        InitialCondition::PfcCrystallites {
            phi0: 0.285,
            c1: 0.446,
            c2: 0.66,
            side: 40.0,
            patches: vec![
                CrystalPatch {
                    center: [350.0, 400.0],
                    theta: -PI / 4.0,
                },
                CrystalPatch {
                    center: [200.0, 200.0],
                    theta: 0.0,
                },
                CrystalPatch {
                    center: [600.0, 300.0],
                    theta: PI / 4.0,
                },
            ],
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            InitialCondition::PfcRandom { seed, .. } | InitialCondition::DiblockRandom { seed, .. } => Some(*seed),
            _ => None,
        }
    }
}

fn uniform_noise(grid: &PeriodicGrid, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..grid.len()).map(|_| rng.gen_range(-1.0..=1.0)).collect()
}

fn expression_field(expr: &str, grid: &Arc<PeriodicGrid>) -> Result<ScalarField, HarnessError> {
    let bad = |e: evalexpr::EvalexprError| HarnessError::Config(format!("expression `{expr}`: {e}"));
    let tree = build_operator_tree(expr).map_err(bad)?;
    let mut ctx = HashMapContext::new();
    let unary: [(&str, fn(f64) -> f64); 7] = [
        ("sin", f64::sin),
        ("cos", f64::cos),
        ("tanh", f64::tanh),
        ("exp", f64::exp),
        ("sqrt", f64::sqrt),
        ("abs", f64::abs),
        ("ln", f64::ln),
    ];
    for (name, f) in unary {
        ctx.set_function(
            name.into(),
            Function::new(move |arg| Ok(Value::Float(f(arg.as_number()?)))),
        )
        .map_err(bad)?;
    }
    for (name, v) in [("pi", PI), ("lx", grid.lx()), ("ly", grid.ly())] {
        ctx.set_value(name.into(), Value::Float(v)).map_err(bad)?;
    }
    let mut values = Vec::with_capacity(grid.len());
    for j in 0..grid.ny() {
        for i in 0..grid.nx() {
            ctx.set_value("x".into(), Value::Float(grid.x(i))).map_err(bad)?;
            ctx.set_value("y".into(), Value::Float(grid.y(j))).map_err(bad)?;
            values.push(tree.eval_number_with_context(&ctx).map_err(bad)?);
        }
    }
    Ok(ScalarField::from_values(grid, values)?)
}

fn positive(name: &str, v: f64) -> Result<(), HarnessError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("{name} = {v} must be positive")))
    }
}

pub fn build_initial(ic: &InitialCondition, grid: &Arc<PeriodicGrid>) -> Result<ScalarField, HarnessError> {
    let field = match ic {
        InitialCondition::TwoBubbles { centers, radii, eps } => {
            positive("eps", *eps)?;
            if centers.is_empty() || centers.len() != radii.len() {
                return Err(HarnessError::Config(
                    "bubbles need matching, non-empty centers and radii".into(),
                ));
            }
            let w = SQRT_2 * eps;
            ScalarField::from_fn(grid, |x, y| {
                centers
                    .iter()
                    .zip(radii)
                    .map(|(c, r)| -(((x - c[0]).hypot(y - c[1]) - r) / w).tanh())
                    .sum::<f64>()
                    + 1.0
            })
        }
        InitialCondition::Flower { eps } => {
            positive("eps", *eps)?;
            let (cx, cy) = (0.5 * grid.lx(), 0.5 * grid.ly());
            ScalarField::from_fn(grid, |x, y| {
                let theta = (y - cy).atan2(x - cx);
                let r = (x - cx).hypot(y - cy);
                ((1.5 + 1.2 * (6.0 * theta).cos() - 2.0 * PI * r) / (SQRT_2 * eps)).tanh()
            })
        }
        InitialCondition::MbeSine { amplitude } => ScalarField::from_fn(grid, |x, y| {
            amplitude * ((3.0 * x).sin() * (2.0 * y).sin() + (5.0 * x).sin() * (5.0 * y).sin())
        }),
        InitialCondition::PfcRandom { phi0, amplitude, seed } => {
            let values = uniform_noise(grid, *seed).into_iter().map(|u| phi0 + amplitude * u).collect();
            ScalarField::from_values(grid, values)?
        }
        InitialCondition::DiblockRandom {
            phi_mean,
            amplitude,
            seed,
        } => {
            let noise = uniform_noise(grid, *seed);
            let m = crate::numeric::stable_sum(noise.iter().copied()) / noise.len() as f64;
            let values = noise.into_iter().map(|u| phi_mean + amplitude * (u - m)).collect();
            ScalarField::from_values(grid, values)?
        }
        InitialCondition::PfcCrystallites {
            phi0,
            c1,
            c2,
            side,
            patches,
        } => {
            positive("side", *side)?;
            let half = 0.5 * side;
            let s3 = 3f64.sqrt();
            ScalarField::from_fn(grid, |x, y| {
                for p in patches {
                    if (x - p.center[0]).abs() <= half && (y - p.center[1]).abs() <= half {
                        let (st, ct) = p.theta.sin_cos();
                        let xl = x * st + y * ct;
                        let yl = -x * ct + y * st;
                        return phi0
                            + c1 * ((c2 / s3 * yl).cos() * (c2 * xl).cos() - 0.5 * (2.0 * c2 / s3 * yl).cos());
                    }
                }
                *phi0
            })
        }
        InitialCondition::Constant { value } => ScalarField::constant(grid, *value),
        InitialCondition::CustomExpression { expr } => expression_field(expr, grid)?,
    };
    if !field.is_finite() {
        return Err(HarnessError::Config("initial condition is not finite".into()));
    }
    Ok(field)
}

/// Number of steps of size `dt` needed to reach `t_final`.
pub fn steps_to(t_final: f64, dt: f64) -> Result<usize, HarnessError> {
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(HarnessError::Config(format!("T = {t_final} must be non-negative")));
    }
    positive("dt", dt)?;
    Ok((t_final / dt - 1e-9).ceil().max(0.0) as usize)
}

fn exact_steps(t_final: f64, dt: f64) -> Result<usize, HarnessError> {
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(HarnessError::Config(format!("dt = {dt} does not divide T = {t_final}")));
    }
    Ok(n as usize)
}

/// Advances `n_steps`, calling `observe` after each step. Divergence carries
/// the last good state.
pub fn integrate_steps<F>(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    mut state: IntegratorState,
    n_steps: usize,
    mut observe: F,
) -> Result<IntegratorState, HarnessError>
where
    F: FnMut(&StepReport) -> Result<(), HarnessError>,
{
    for _ in 0..n_steps {
        match step(model, cfg, &state) {
            Ok(report) => {
                observe(&report)?;
                state = report.state;
            }
            Err(error) if error.is_divergence() => {
                return Err(HarnessError::Diverged(Box::new(Divergence {
                    error,
                    last_good: state,
                    trace: EnergyTrace::new(),
                })))
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(state)
}

/// Final state after `t_final` without recording a trace.
pub fn final_state(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    phi0: &ScalarField,
    t_final: f64,
) -> Result<IntegratorState, HarnessError> {
    let n = steps_to(t_final, cfg.dt)?;
    let state = initialize(model, cfg, phi0.clone(), 0.0)?;
    integrate_steps(model, cfg, state, n, |_| Ok(()))
}

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub requested: f64,
    pub t: f64,
    pub step: usize,
    pub field: ScalarField,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub trace: EnergyTrace,
    pub snapshots: Vec<Snapshot>,
    pub final_state: IntegratorState,
}

/// Runs to `t_final`, recording one trace record per step and snapshots at
/// the completed steps nearest to `snapshot_times`.
pub fn run_simulation(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    phi0: &ScalarField,
    t_final: f64,
    snapshot_times: &[f64],
) -> Result<RunOutput, HarnessError> {
    let n = steps_to(t_final, cfg.dt)?;
    let mut wanted: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for &ts in snapshot_times {
        if !(0.0..=t_final * (1.0 + 1e-12)).contains(&ts) {
            return Err(HarnessError::Config(format!(
                "snapshot time {ts} lies outside [0, {t_final}]"
            )));
        }
        let idx = ((ts / cfg.dt).round() as usize).min(n);
        wanted.entry(idx).or_default().push(ts);
    }

    let state = initialize(model, cfg, phi0.clone(), 0.0)?;
    let mut trace = EnergyTrace::new();
    trace.push(TraceRecord::new(model, cfg, &state, None)?)?;
    let mut snapshots = Vec::new();
    let take = |snaps: &mut Vec<Snapshot>, s: &IntegratorState| {
        if let Some(times) = wanted.get(&s.step_index) {
            for &requested in times {
                snaps.push(Snapshot {
                    requested,
                    t: s.t,
                    step: s.step_index,
                    field: s.phi.clone(),
                });
            }
        }
    };
    take(&mut snapshots, &state);

    let mut current = state;
    for _ in 0..n {
        match step(model, cfg, &current) {
            Ok(report) => {
                let record = TraceRecord::new(model, cfg, &report.state, Some(&report.diagnostics))
                    .and_then(|rec| trace.push(rec));
                if let Err(error) = record {
                    return Err(diverged(error, current, trace));
                }
                current = report.state;
                take(&mut snapshots, &current);
            }
            Err(error) if error.is_divergence() => return Err(diverged(error, current, trace)),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(RunOutput {
        trace,
        snapshots,
        final_state: current,
    })
}

fn diverged(error: IntegratorError, last_good: IntegratorState, trace: EnergyTrace) -> HarnessError {
    HarnessError::Diverged(Box::new(Divergence {
        error,
        last_good,
        trace,
    }))
}

/// Maps `f` over `items` on up to `jobs` threads, preserving order.
pub fn parallel_map<T, R, F>(jobs: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    if jobs <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(items.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Content hash of everything that determines a trajectory.
pub fn trajectory_key(model: &ModelSpec, cfg: &SchemeConfig, phi0: &ScalarField, t_final: f64) -> String {
    let mut h = Sha256::new();
    h.update(b"csav-trajectory-v1");
    h.update(serde_json::to_vec(&model.kind).expect("serializable"));
    h.update(serde_json::to_vec(&model.terms).expect("serializable"));
    let g = model.grid();
    for v in [g.lx(), g.ly(), g.nx() as f64, g.ny() as f64, model.extra_forcing, t_final] {
        h.update(v.to_le_bytes());
    }
    for sym in [&model.mobility, &model.linear, &model.nonlocal, &model.extra_linear] {
        for v in sym.values() {
            h.update(v.to_le_bytes());
        }
    }
    h.update(serde_json::to_vec(cfg).expect("serializable"));
    for v in phi0.values() {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug)]
pub struct CachedReference {
    pub phi: ScalarField,
    pub r: Vec<f64>,
}

/// Content-addressed store of reference solutions, in memory and optionally
/// mirrored to a directory.
#[derive(Debug, Default)]
pub struct ReferenceCache {
    dir: Option<PathBuf>,
    memory: Mutex<HashMap<String, Arc<CachedReference>>>,
    hits: AtomicUsize,
}

impl ReferenceCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            ..Self::default()
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    fn lookup(&self, key: &str) -> Option<Arc<CachedReference>> {
        if let Some(hit) = self.memory.lock().expect("cache").get(key) {
            return Some(Arc::clone(hit));
        }
        let dir = self.dir.as_ref()?;
        let phi = snapshot::load_binary(&dir.join(format!("{key}.field"))).ok()?;
        let r: Vec<f64> = serde_json::from_slice(&fs::read(dir.join(format!("{key}.json"))).ok()?).ok()?;
        let entry = Arc::new(CachedReference { phi, r });
        self.memory
            .lock()
            .expect("cache")
            .insert(key.to_string(), Arc::clone(&entry));
        Some(entry)
    }

    fn store(&self, key: &str, entry: CachedReference) -> Result<Arc<CachedReference>, HarnessError> {
        if let Some(dir) = &self.dir {
            fs::create_dir_all(dir)?;
            snapshot::save_binary(&entry.phi, &dir.join(format!("{key}.field")))?;
            fs::write(
                dir.join(format!("{key}.json")),
                serde_json::to_vec(&entry.r).expect("serializable"),
            )?;
        }
        let entry = Arc::new(entry);
        self.memory
            .lock()
            .expect("cache")
            .insert(key.to_string(), Arc::clone(&entry));
        Ok(entry)
    }

    /// Final state of the given run, computed once per content key.
    pub fn get_or_compute(
        &self,
        model: &ModelSpec,
        cfg: &SchemeConfig,
        phi0: &ScalarField,
        t_final: f64,
    ) -> Result<(Arc<CachedReference>, String, bool), HarnessError> {
        let key = trajectory_key(model, cfg, phi0, t_final);
        if let Some(hit) = self.lookup(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok((hit, key, true));
        }
        let state = final_state(model, cfg, phi0, t_final)?;
        let entry = self.store(
            &key,
            CachedReference {
                phi: state.phi,
                r: state.r,
            },
        )?;
        Ok((entry, key, false))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSpec {
    /// Reference step is `min(Δt list) / dt_divisor`.
    pub dt_divisor: u32,
    pub alpha: f64,
}

impl Default for ReferenceSpec {
    fn default() -> Self {
        Self {
            dt_divisor: 4,
            alpha: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDescriptor {
    pub key: String,
    pub scheme: Scheme,
    pub dt: f64,
    pub alpha: f64,
    pub cache_hit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub dt: f64,
    pub error: f64,
    /// Order between this step and the next finer one.
    pub order: Option<f64>,
    /// `max_i |rᵢ - 1|` at the final time.
    pub r_deviation: f64,
    /// `max_i |rᵢ - rᵢ,ref|` at the final time.
    pub r_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub scheme: Scheme,
    pub alpha: f64,
    pub t_final: f64,
    pub rows: Vec<ConvergenceRow>,
    pub reference: ReferenceDescriptor,
}

impl ConvergenceResult {
    pub fn orders(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order).collect()
    }
}

/// Temporal self-convergence against a finer run of the same scheme.
pub fn convergence_study(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    dt_list: &[f64],
    phi0: &ScalarField,
    t_final: f64,
    reference: &ReferenceSpec,
    cache: &ReferenceCache,
    jobs: usize,
) -> Result<ConvergenceResult, HarnessError> {
    if dt_list.is_empty() {
        return Err(HarnessError::Config("empty dt list".into()));
    }
    if dt_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(HarnessError::Config("dt list must be strictly descending".into()));
    }
    if reference.dt_divisor == 0 {
        return Err(HarnessError::Config("reference divisor must be positive".into()));
    }
    positive("T", t_final)?;
    for &dt in dt_list {
        exact_steps(t_final, dt)?;
    }
    let dt_ref = dt_list[dt_list.len() - 1] / reference.dt_divisor as f64;
    let mut ref_cfg = cfg.clone();
    ref_cfg.dt = dt_ref;
    ref_cfg.alpha = reference.alpha;
    ref_cfg.validate()?;
    let (reference_state, key, cache_hit) = cache.get_or_compute(model, &ref_cfg, phi0, t_final)?;

    let finals = parallel_map(jobs, dt_list, |&dt| {
        let mut c = cfg.clone();
        c.dt = dt;
        final_state(model, &c, phi0, t_final)
    });
    let mut rows = Vec::with_capacity(dt_list.len());
    for (&dt, fin) in dt_list.iter().zip(finals) {
        let fin = fin?;
        let error = l2_norm(&fin.phi.sub(&reference_state.phi)?);
        let r_deviation = fin.r.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
        let r_error = fin
            .r
            .iter()
            .zip(&reference_state.r)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        rows.push(ConvergenceRow {
            dt,
            error,
            order: None,
            r_deviation,
            r_error,
        });
    }
    for i in 0..rows.len().saturating_sub(1) {
        let (a, b) = (&rows[i], &rows[i + 1]);
        let order = (a.error / b.error).ln() / (a.dt / b.dt).ln();
        rows[i].order = Some(order);
    }
    Ok(ConvergenceResult {
        scheme: cfg.scheme,
        alpha: cfg.alpha,
        t_final,
        rows,
        reference: ReferenceDescriptor {
            key,
            scheme: ref_cfg.scheme,
            dt: dt_ref,
            alpha: ref_cfg.alpha,
            cache_hit,
        },
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRow {
    pub alpha: f64,
    pub max_r_deviation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSweep {
    pub dt: f64,
    pub rows: Vec<AlphaRow>,
    /// Deviation ratios between adjacent α values.
    pub ratios: Vec<f64>,
}

impl AlphaSweep {
    /// True when every adjacent deviation ratio lies in `[lo, hi]`.
    pub fn ratios_within(&self, lo: f64, hi: f64) -> bool {
        self.ratios.iter().all(|r| (lo..=hi).contains(r))
    }
}

/// `max_n |rⁿ - 1|` for each α at fixed Δt.
pub fn alpha_sweep(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    alpha_list: &[f64],
    phi0: &ScalarField,
    t_final: f64,
    jobs: usize,
) -> Result<AlphaSweep, HarnessError> {
    if alpha_list.windows(2).any(|w| w[1] > w[0]) {
        return Err(HarnessError::Config("alpha list must be descending".into()));
    }
    let n = steps_to(t_final, cfg.dt)?;
    let results = parallel_map(jobs, alpha_list, |&alpha| {
        let mut c = cfg.clone();
        c.alpha = alpha;
        let state = initialize(model, &c, phi0.clone(), 0.0)?;
        let mut dev = 0.0f64;
        integrate_steps(model, &c, state, n, |rep| {
            for r in &rep.state.r {
                dev = dev.max((r - 1.0).abs());
            }
            Ok(())
        })?;
        Ok::<_, HarnessError>(AlphaRow {
            alpha,
            max_r_deviation: dev,
        })
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let ratios = rows
        .windows(2)
        .map(|w| w[0].max_r_deviation / w[1].max_r_deviation)
        .collect();
    Ok(AlphaSweep { dt: cfg.dt, rows, ratios })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityRow {
    pub dt: f64,
    pub steps: usize,
    pub violations: Vec<Violation>,
    /// Largest step-to-step change of the discrete energy, relative to its
    /// magnitude (negative when the energy always decreased).
    pub max_relative_change: f64,
    pub trace: EnergyTrace,
}

impl StabilityRow {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Discrete-energy monotonicity for each Δt.
pub fn stability_sweep(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    dt_list: &[f64],
    phi0: &ScalarField,
    t_final: f64,
    rel_slack: f64,
    jobs: usize,
) -> Result<Vec<StabilityRow>, HarnessError> {
    let skip_bootstrap = cfg.scheme == Scheme::CsavBdf2;
    let results = parallel_map(jobs, dt_list, |&dt| {
        let mut c = cfg.clone();
        c.dt = dt;
        let out = run_simulation(model, &c, phi0, t_final, &[])?;
        let violations = out.trace.energy_violations(rel_slack, skip_bootstrap);
        let max_relative_change = out
            .trace
            .records
            .windows(2)
            .filter(|w| !(skip_bootstrap && w[0].step == 0))
            .map(|w| w[1].discrete.change_since(&w[0].discrete) / w[0].discrete.total().abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok::<_, HarnessError>(StabilityRow {
            dt,
            steps: out.trace.len() - 1,
            violations,
            max_relative_change,
            trace: out.trace,
        })
    });
    results.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub t: f64,
    pub energy: f64,
    pub reference_energy: f64,
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheme: Scheme,
    pub final_error: Option<f64>,
    pub max_ratio_deviation: Option<f64>,
    pub max_energy_deviation: Option<f64>,
    pub failure: Option<String>,
    pub series: Vec<SeriesPoint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub dt: f64,
    pub reference_dt: f64,
    pub t_final: f64,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn row(&self, scheme: Scheme) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.scheme == scheme)
    }
}

/// Runs each scheme with the shared Δt and compares against the α = 0
/// reference CN run at `reference_dt`.
pub fn scheme_comparison(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    schemes: &[Scheme],
    phi0: &ScalarField,
    t_final: f64,
    reference_dt: f64,
    jobs: usize,
) -> Result<ComparisonTable, HarnessError> {
    positive("reference dt", reference_dt)?;
    let ratio = cfg.dt / reference_dt;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio || ratio.round() < 1.0 {
        return Err(HarnessError::Config(format!(
            "reference dt {reference_dt} must divide dt {}",
            cfg.dt
        )));
    }
    let mut ref_cfg = cfg.clone();
    ref_cfg.scheme = Scheme::SicnRef;
    ref_cfg.alpha = 0.0;
    ref_cfg.dt = reference_dt;
    let n_ref = steps_to(t_final, reference_dt)?;
    let stride = ratio.round() as usize;
    let mut ref_energy = Vec::with_capacity(n_ref / stride + 1);
    let ref_state0 = initialize(model, &ref_cfg, phi0.clone(), 0.0)?;
    ref_energy.push(model.total_energy(phi0));
    let ref_final = integrate_steps(model, &ref_cfg, ref_state0, n_ref, |rep| {
        if rep.state.step_index % stride == 0 {
            ref_energy.push(model.total_energy(&rep.state.phi));
        }
        Ok(())
    })?;

    let rows = parallel_map(jobs, schemes, |&scheme| {
        let mut c = cfg.clone();
        c.scheme = scheme;
        match run_simulation(model, &c, phi0, t_final, &[]) {
            Ok(out) => {
                let series: Vec<SeriesPoint> = out
                    .trace
                    .records
                    .iter()
                    .map(|rec| SeriesPoint {
                        t: rec.t,
                        energy: rec.e_reported,
                        reference_energy: ref_energy[rec.step.min(ref_energy.len() - 1)],
                        ratio: rec.ratio,
                    })
                    .collect();
                let max_energy = series
                    .iter()
                    .map(|p| (p.energy - p.reference_energy).abs())
                    .fold(0.0, f64::max);
                let err = out.final_state.phi.sub(&ref_final.phi).map(|d| l2_norm(&d)).ok();
                ComparisonRow {
                    scheme,
                    final_error: err,
                    max_ratio_deviation: Some(out.trace.max_ratio_deviation()),
                    max_energy_deviation: Some(max_energy),
                    failure: None,
                    series,
                }
            }
            Err(e) => ComparisonRow {
                scheme,
                final_error: None,
                max_ratio_deviation: None,
                max_energy_deviation: None,
                failure: Some(e.to_string()),
                series: Vec::new(),
            },
        }
    });
    Ok(ComparisonTable {
        dt: cfg.dt,
        reference_dt,
        t_final,
        rows,
    })
}
