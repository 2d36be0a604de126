//! Time steppers.
//!
//! Every scheme treats `G(L + S) + X` implicitly through one diagonal
//! Fourier solve (two for the SAV families) and the stabilized nonlinear
//! force explicitly. The CSAV auxiliary scalars are updated after the field,
//! using the freshly computed `φ^{n+1}`.
//!
//! Two-step schemes need `φ^{n-1}` and `r^{n-1}`. At step 0 they are produced
//! by [`bootstrap_first_step`], either one first-order step at `Δt` or ten
//! first-order substeps at `Δt/10`.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::IntegratorError;
use crate::grid::{divide_shifted, inner_product, spectral_quadratic, ScalarField};
use crate::models::ModelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    CsavBdf1,
    CsavCn,
    CsavBdf2,
    SavBdf1,
    SavCn,
    RsavCn,
    McsavBdf1,
    McsavCn,
    SicnRef,
}

impl Scheme {
    pub const ALL: [Scheme; 9] = [
        Scheme::CsavBdf1,
        Scheme::CsavCn,
        Scheme::CsavBdf2,
        Scheme::SavBdf1,
        Scheme::SavCn,
        Scheme::RsavCn,
        Scheme::McsavBdf1,
        Scheme::McsavCn,
        Scheme::SicnRef,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::CsavBdf1 => "csav-bdf1",
            Scheme::CsavCn => "csav-cn",
            Scheme::CsavBdf2 => "csav-bdf2",
            Scheme::SavBdf1 => "sav-bdf1",
            Scheme::SavCn => "sav-cn",
            Scheme::RsavCn => "rsav-cn",
            Scheme::McsavBdf1 => "mcsav-bdf1",
            Scheme::McsavCn => "mcsav-cn",
            Scheme::SicnRef => "sicn-ref",
        }
    }

    /// True for schemes that read `φ^{n-1}`.
    pub fn is_two_step(self) -> bool {
        matches!(
            self,
            Scheme::CsavCn | Scheme::CsavBdf2 | Scheme::SavCn | Scheme::RsavCn | Scheme::McsavCn | Scheme::SicnRef
        )
    }

    /// True for the q-based SAV and RSAV schemes.
    pub fn uses_q(self) -> bool {
        matches!(self, Scheme::SavBdf1 | Scheme::SavCn | Scheme::RsavCn)
    }

    /// True for schemes carrying one `r` per nonlinear term.
    pub fn is_multi(self) -> bool {
        matches!(self, Scheme::McsavBdf1 | Scheme::McsavCn)
    }

    /// True for schemes whose `r` evolves (CSAV and multi-CSAV).
    pub fn uses_r(self) -> bool {
        !self.uses_q() && self != Scheme::SicnRef
    }

    /// Nominal temporal order.
    pub fn order(self) -> u32 {
        match self {
            Scheme::CsavBdf1 | Scheme::SavBdf1 | Scheme::McsavBdf1 => 1,
            _ => 2,
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = IntegratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| IntegratorError::Config(format!("unknown scheme `{s}`")))
    }
}

/// How the first level of a two-step scheme is produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Bootstrap {
    /// One first-order step at `Δt`.
    #[default]
    SingleStep,
    /// Ten first-order substeps at `Δt/10`.
    Substep10,
}

impl Bootstrap {
    pub fn substeps(self) -> usize {
        match self {
            Bootstrap::SingleStep => 1,
            Bootstrap::Substep10 => 10,
        }
    }
}

fn default_c0() -> f64 {
    1.0
}

fn default_eta() -> f64 {
    0.99
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    pub scheme: Scheme,
    pub dt: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub bootstrap: Bootstrap,
}

impl SchemeConfig {
    pub fn new(scheme: Scheme, dt: f64, alpha: f64) -> Self {
        Self {
            scheme,
            dt,
            alpha,
            c0: default_c0(),
            eta: default_eta(),
            bootstrap: Bootstrap::default(),
        }
    }

    pub fn with_c0(mut self, c0: f64) -> Self {
        self.c0 = c0;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = eta;
        self
    }

    pub fn with_bootstrap(mut self, bootstrap: Bootstrap) -> Self {
        self.bootstrap = bootstrap;
        self
    }

    pub fn validate(&self) -> Result<(), IntegratorError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(IntegratorError::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(IntegratorError::Config(format!(
                "alpha = {} must be non-negative",
                self.alpha
            )));
        }
        if !self.c0.is_finite() {
            return Err(IntegratorError::Config(format!("c0 = {} must be finite", self.c0)));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(IntegratorError::Config(format!("eta = {} must lie in [0, 1]", self.eta)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntegratorState {
    pub phi: ScalarField,
    pub phi_prev: Option<ScalarField>,
    /// CSAV scalars: one entry, or one per term for multi-CSAV. SAV schemes
    /// leave this empty.
    pub r: Vec<f64>,
    pub r_prev: Option<Vec<f64>>,
    pub q: Option<f64>,
    pub step_index: usize,
    pub t: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    /// Coefficient multiplying the explicit nonlinear force.
    pub ratio: f64,
    /// Extrapolated (or lagged) `r` per group, as used in the step.
    pub r_bar: Vec<f64>,
    pub q_tilde: Option<f64>,
    pub xi0: Option<f64>,
    /// RSAV relaxation budget `Δt η ⟨Gμ, μ⟩`.
    pub budget: Option<f64>,
    /// `⟨Gμ, μ⟩` for the chemical potential of the step.
    pub dissipation: f64,
    /// Diagonal spectral solves performed.
    pub solves: usize,
    /// True when the step was produced by the bootstrap policy.
    pub bootstrap: bool,
}

#[derive(Clone, Debug)]
pub struct StepReport {
    pub state: IntegratorState,
    pub mu: ScalarField,
    pub diagnostics: StepDiagnostics,
}

/// Index groups of nonlinear terms that share one auxiliary scalar.
pub fn term_groups(model: &ModelSpec, scheme: Scheme) -> Vec<Vec<usize>> {
    if scheme.is_multi() {
        (0..model.terms.len()).map(|i| vec![i]).collect()
    } else {
        vec![(0..model.terms.len()).collect()]
    }
}

fn group_force(model: &ModelSpec, group: &[usize], phi: &ScalarField) -> ScalarField {
    let mut it = group.iter();
    let first = model.terms[*it.next().expect("non-empty group")].force(phi);
    it.fold(first, |acc, &i| acc.add(&model.terms[i].force(phi)).expect("same grid"))
}

/// Split energy `E_i` of a group of terms.
pub fn group_energy(model: &ModelSpec, group: &[usize], phi: &ScalarField) -> f64 {
    group.iter().map(|&i| model.terms[i].energy(phi)).sum()
}

fn check_field(f: &ScalarField, step: usize, what: &'static str) -> Result<(), IntegratorError> {
    if f.is_finite() {
        Ok(())
    } else {
        Err(IntegratorError::Divergence { step, what })
    }
}

fn check_scalar(v: f64, step: usize, what: &'static str) -> Result<(), IntegratorError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(IntegratorError::Divergence { step, what })
    }
}

fn shifted_root(model: &ModelSpec, c0: f64, phi: &ScalarField) -> Result<f64, IntegratorError> {
    let value = model.nonlinear_energy(phi) + c0;
    if value > 0.0 && value.is_finite() {
        Ok(value.sqrt())
    } else {
        Err(IntegratorError::EnergyShift { value })
    }
}

/// Initial state: `r = 1` for CSAV schemes, `q = √(E₀ + C₀)` for SAV ones.
pub fn initialize(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    phi0: ScalarField,
    t0: f64,
) -> Result<IntegratorState, IntegratorError> {
    cfg.validate()?;
    phi0.same_grid(&ScalarField::zeros(model.grid()))?;
    if !phi0.is_finite() {
        return Err(IntegratorError::State("initial field is not finite".into()));
    }
    let (r, q) = if cfg.scheme.uses_q() {
        (Vec::new(), Some(shifted_root(model, cfg.c0, &phi0)?))
    } else {
        (vec![1.0; term_groups(model, cfg.scheme).len()], None)
    };
    Ok(IntegratorState {
        phi: phi0,
        phi_prev: None,
        r,
        r_prev: None,
        q,
        step_index: 0,
        t: t0,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Level {
    Bdf1,
    Cn,
    Bdf2,
}

fn csav_core(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
    level: Level,
    groups: &[Vec<usize>],
    evolve_r: bool,
) -> Result<StepReport, IntegratorError> {
    let step = state.step_index + 1;
    let grid = model.grid();
    let len = grid.len();
    let dt = cfg.dt;
    if state.r.len() != groups.len() {
        return Err(IntegratorError::State(format!(
            "expected {} auxiliary scalars, found {}",
            groups.len(),
            state.r.len()
        )));
    }

    let prev = match level {
        Level::Bdf1 => None,
        Level::Cn | Level::Bdf2 => Some(
            state
                .phi_prev
                .as_ref()
                .ok_or(IntegratorError::BootstrapRequired { step })?,
        ),
    };
    let (phi_star, r_star) = match prev {
        None => (state.phi.clone(), state.r.clone()),
        Some(prev) => {
            let phi_bar = state.phi.lin_comb(1.5, prev, -0.5)?;
            let r_bar = if evolve_r {
                let r_prev = state
                    .r_prev
                    .as_ref()
                    .ok_or(IntegratorError::BootstrapRequired { step })?;
                state.r.iter().zip(r_prev).map(|(a, b)| 1.5 * a - 0.5 * b).collect()
            } else {
                vec![1.0; groups.len()]
            };
            (phi_bar, r_bar)
        }
    };

    let forces: Vec<ScalarField> = groups.iter().map(|g| group_force(model, g, &phi_star)).collect();
    let mut explicit = forces[0].scale(r_star[0]);
    for (f, r) in forces.iter().zip(&r_star).skip(1) {
        explicit = explicit.lin_comb(1.0, f, *r)?;
    }

    let n_hat = explicit.to_spectral();
    let phi_hat = state.phi.to_spectral();
    let prev_hat = match (level, prev) {
        (Level::Bdf2, Some(p)) => Some(p.to_spectral()),
        _ => None,
    };
    let implicit = model.implicit_symbol().values();
    let mobility = model.mobility.values();
    let (theta, weight) = match level {
        Level::Bdf1 => (dt, dt),
        Level::Cn => (0.5 * dt, dt),
        Level::Bdf2 => (2.0 * dt / 3.0, 2.0 * dt / 3.0),
    };

    let mut rhs: Vec<Complex64> = (0..len)
        .map(|k| {
            let base = match level {
                Level::Bdf1 => phi_hat[k],
                Level::Cn => phi_hat[k] * (1.0 - 0.5 * dt * implicit[k]),
                Level::Bdf2 => {
                    let p = prev_hat.as_ref().expect("history")[k];
                    (phi_hat[k] * 4.0 - p) / 3.0
                }
            };
            base - n_hat[k] * (weight * mobility[k])
        })
        .collect();
    rhs[0] += weight * model.extra_forcing * len as f64;
    let shift: Vec<f64> = implicit.iter().map(|a| theta * a).collect();
    divide_shifted(&shift, &mut rhs)?;
    let new_hat = rhs;

    let quad = model.quadratic_symbol().values();
    let mu_hat: Vec<Complex64> = match level {
        Level::Cn => (0..len)
            .map(|k| (new_hat[k] + phi_hat[k]) * (0.5 * quad[k]) + n_hat[k])
            .collect(),
        _ => (0..len).map(|k| new_hat[k] * quad[k] + n_hat[k]).collect(),
    };
    let dissipation = spectral_quadratic(grid, mobility, &mu_hat);
    let phi_new = ScalarField::from_spectral(grid, new_hat);
    check_field(&phi_new, step, "phase field")?;
    let mu = ScalarField::from_spectral(grid, mu_hat);

    let r_new: Vec<f64> = if !evolve_r {
        state.r.clone()
    } else {
        let mut out = Vec::with_capacity(groups.len());
        for (i, g) in groups.iter().enumerate() {
            let value = match level {
                Level::Bdf1 | Level::Cn => {
                    let incr = if cfg.alpha == 0.0 {
                        0.0
                    } else {
                        let de = group_energy(model, g, &phi_new) - group_energy(model, g, &state.phi);
                        let dphi = phi_new.sub(&state.phi)?;
                        -de + r_star[i] * inner_product(&forces[i], &dphi)?
                    };
                    state.r[i] + cfg.alpha * incr
                }
                Level::Bdf2 => {
                    let prev = prev.expect("history");
                    let r_prev = state.r_prev.as_ref().expect("history")[i];
                    let incr = if cfg.alpha == 0.0 {
                        0.0
                    } else {
                        let de = 3.0 * group_energy(model, g, &phi_new) - 4.0 * group_energy(model, g, &state.phi)
                            + group_energy(model, g, prev);
                        let dphi = phi_new.lin_comb(3.0, &state.phi, -4.0)?.add(prev)?;
                        -de + r_star[i] * inner_product(&forces[i], &dphi)?
                    };
                    (4.0 * state.r[i] - r_prev) / 3.0 + cfg.alpha / 3.0 * incr
                }
            };
            check_scalar(value, step, "auxiliary variable r")?;
            out.push(value);
        }
        out
    };
    check_scalar(dissipation, step, "dissipation")?;

    let diagnostics = StepDiagnostics {
        ratio: r_star[0],
        r_bar: r_star,
        dissipation,
        solves: 1,
        ..StepDiagnostics::default()
    };
    Ok(StepReport {
        state: IntegratorState {
            phi: phi_new,
            phi_prev: Some(state.phi.clone()),
            r: r_new,
            r_prev: Some(state.r.clone()),
            q: state.q,
            step_index: step,
            t: state.t + dt,
        },
        mu,
        diagnostics,
    })
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum SavLevel {
    Bdf1,
    Cn,
    Relaxed,
}

fn sav_core(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
    level: SavLevel,
) -> Result<StepReport, IntegratorError> {
    let step = state.step_index + 1;
    let grid = model.grid();
    let len = grid.len();
    let dt = cfg.dt;
    let q_n = state
        .q
        .ok_or_else(|| IntegratorError::State("SAV scheme needs q".into()))?;

    let phi_star = match level {
        SavLevel::Bdf1 => state.phi.clone(),
        SavLevel::Cn | SavLevel::Relaxed => {
            let prev = state
                .phi_prev
                .as_ref()
                .ok_or(IntegratorError::BootstrapRequired { step })?;
            state.phi.lin_comb(1.5, prev, -0.5)?
        }
    };
    let root = shifted_root(model, cfg.c0, &phi_star)?;
    let b = model.nonlinear_force(&phi_star).scale(0.5 / root);
    let b_phi = inner_product(&b, &state.phi)?;

    // BDF1: μ = (L+S)φ' + 2b(q^n - ⟨b,φ^n⟩) + 2b⟨b,φ'⟩
    // CN:   μ = (L+S)φ½ + b(2q^n - ⟨b,φ^n⟩) + b⟨b,φ'⟩
    let (theta, coef, w2) = match level {
        SavLevel::Bdf1 => (dt, 2.0 * (q_n - b_phi), 2.0),
        _ => (0.5 * dt, 2.0 * q_n - b_phi, 1.0),
    };
    let b_hat = b.to_spectral();
    let phi_hat = state.phi.to_spectral();
    let implicit = model.implicit_symbol().values();
    let mobility = model.mobility.values();
    let mut hat1: Vec<Complex64> = (0..len)
        .map(|k| {
            let base = match level {
                SavLevel::Bdf1 => phi_hat[k],
                _ => phi_hat[k] * (1.0 - 0.5 * dt * implicit[k]),
            };
            base - b_hat[k] * (dt * mobility[k] * coef)
        })
        .collect();
    hat1[0] += dt * model.extra_forcing * len as f64;
    let mut hat2: Vec<Complex64> = (0..len).map(|k| b_hat[k] * (-dt * mobility[k] * w2)).collect();
    let shift: Vec<f64> = implicit.iter().map(|a| theta * a).collect();
    divide_shifted(&shift, &mut hat1)?;
    divide_shifted(&shift, &mut hat2)?;

    let phi1 = ScalarField::from_spectral(grid, hat1.clone());
    let phi2 = ScalarField::from_spectral(grid, hat2.clone());
    let denom = 1.0 - inner_product(&b, &phi2)?;
    if !(denom.is_finite() && denom != 0.0) {
        return Err(IntegratorError::SingularSplitting { step });
    }
    let gamma = inner_product(&b, &phi1)? / denom;
    let phi_new = phi1.lin_comb(1.0, &phi2, gamma)?;
    check_field(&phi_new, step, "phase field")?;
    let q_new = q_n + inner_product(&b, &phi_new)? - b_phi;
    check_scalar(q_new, step, "auxiliary variable q")?;

    let new_hat: Vec<Complex64> = hat1.iter().zip(&hat2).map(|(a, c)| a + c * gamma).collect();
    let quad = model.quadratic_symbol().values();
    let (mu_hat, ratio): (Vec<Complex64>, f64) = match level {
        SavLevel::Bdf1 => (
            (0..len).map(|k| new_hat[k] * quad[k] + b_hat[k] * (2.0 * q_new)).collect(),
            q_new / root,
        ),
        _ => (
            (0..len)
                .map(|k| (new_hat[k] + phi_hat[k]) * (0.5 * quad[k]) + b_hat[k] * (q_n + q_new))
                .collect(),
            (q_n + q_new) / (2.0 * root),
        ),
    };
    let dissipation = spectral_quadratic(grid, mobility, &mu_hat);
    check_scalar(dissipation, step, "dissipation")?;
    let mu = ScalarField::from_spectral(grid, mu_hat);

    let mut diagnostics = StepDiagnostics {
        ratio,
        dissipation,
        solves: 2,
        ..StepDiagnostics::default()
    };
    let q_final = if level == SavLevel::Relaxed {
        let e_new = model.nonlinear_energy(&phi_new);
        let shifted = e_new + cfg.c0;
        if !(shifted > 0.0) {
            return Err(IntegratorError::EnergyShift { value: shifted });
        }
        let budget = dt * cfg.eta * dissipation;
        let xi = relax_xi(q_new, e_new, cfg.c0, budget);
        diagnostics.q_tilde = Some(q_new);
        diagnostics.xi0 = Some(xi);
        diagnostics.budget = Some(budget);
        xi * q_new + (1.0 - xi) * shifted.sqrt()
    } else {
        q_new
    };
    check_scalar(q_final, step, "auxiliary variable q")?;

    Ok(StepReport {
        state: IntegratorState {
            phi: phi_new,
            phi_prev: Some(state.phi.clone()),
            r: state.r.clone(),
            r_prev: Some(state.r.clone()),
            q: Some(q_final),
            step_index: step,
            t: state.t + dt,
        },
        mu,
        diagnostics,
    })
}

/// Smallest `ξ ∈ [0, 1]` with `(ξq̃ + (1-ξ)√(E₀+C₀))² - q̃² ≤ budget`.
pub fn relax_xi(q_tilde: f64, e0: f64, c0: f64, budget: f64) -> f64 {
    let shifted = e0 + c0;
    let root = shifted.sqrt();
    let d = q_tilde - root;
    let a = d * d;
    let b = 2.0 * d * root;
    let c = shifted - q_tilde * q_tilde - budget;
    if c <= 0.0 {
        return 0.0;
    }
    if a < 1e-14 * q_tilde.powi(2).max(1.0) {
        if b == 0.0 {
            return 1.0;
        }
        return (-c / b).clamp(0.0, 1.0);
    }
    let disc = (b * b - 4.0 * a * c).max(0.0).sqrt();
    // smaller root, written to avoid cancellation
    let xi = if b >= 0.0 {
        (-b - disc) / (2.0 * a)
    } else {
        2.0 * c / (-b + disc)
    };
    xi.clamp(0.0, 1.0)
}

fn require_scheme(cfg: &SchemeConfig, allowed: &[Scheme]) -> Result<(), IntegratorError> {
    if allowed.contains(&cfg.scheme) {
        Ok(())
    } else {
        Err(IntegratorError::Config(format!(
            "step function called with scheme {}",
            cfg.scheme
        )))
    }
}

pub fn csav_bdf1_step(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<StepReport, IntegratorError> {
    let groups = term_groups(model, Scheme::CsavBdf1);
    csav_core(model, cfg, state, Level::Bdf1, &groups, true)
}

pub fn csav_cn_step(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<StepReport, IntegratorError> {
    let groups = term_groups(model, Scheme::CsavCn);
    csav_core(model, cfg, state, Level::Cn, &groups, true)
}

pub fn csav_bdf2_step(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<StepReport, IntegratorError> {
    let groups = term_groups(model, Scheme::CsavBdf2);
    csav_core(model, cfg, state, Level::Bdf2, &groups, true)
}

pub fn mcsav_bdf1_step(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<StepReport, IntegratorError> {
    let groups = term_groups(model, Scheme::McsavBdf1);
    csav_core(model, cfg, state, Level::Bdf1, &groups, true)
}

pub fn mcsav_cn_step(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<StepReport, IntegratorError> {
    let groups = term_groups(model, Scheme::McsavCn);
    csav_core(model, cfg, state, Level::Cn, &groups, true)
}

/// CSAV-CN with `r̄` frozen at 1 and no `r` update.
pub fn semi_implicit_cn_step(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<StepReport, IntegratorError> {
    let groups = term_groups(model, Scheme::SicnRef);
    csav_core(model, cfg, state, Level::Cn, &groups, false)
}

pub fn sav_bdf1_step(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<StepReport, IntegratorError> {
    sav_core(model, cfg, state, SavLevel::Bdf1)
}

pub fn sav_cn_step(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<StepReport, IntegratorError> {
    sav_core(model, cfg, state, SavLevel::Cn)
}

pub fn rsav_cn_step(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<StepReport, IntegratorError> {
    sav_core(model, cfg, state, SavLevel::Relaxed)
}

/// First-order step matching the family of `cfg.scheme`.
fn first_order_step(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<StepReport, IntegratorError> {
    match cfg.scheme {
        Scheme::SavCn | Scheme::RsavCn | Scheme::SavBdf1 => sav_bdf1_step(model, cfg, state),
        Scheme::McsavCn | Scheme::McsavBdf1 => mcsav_bdf1_step(model, cfg, state),
        Scheme::SicnRef => {
            let groups = term_groups(model, Scheme::SicnRef);
            csav_core(model, cfg, state, Level::Bdf1, &groups, false)
        }
        Scheme::CsavCn | Scheme::CsavBdf2 | Scheme::CsavBdf1 => csav_bdf1_step(model, cfg, state),
    }
}

/// Produces level 1 of a two-step scheme from level 0.
pub fn bootstrap_first_step(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<StepReport, IntegratorError> {
    if state.step_index != 0 {
        return Err(IntegratorError::State(format!(
            "bootstrap requested at step {}",
            state.step_index
        )));
    }
    let m = cfg.bootstrap.substeps();
    let mut sub_cfg = cfg.clone();
    sub_cfg.dt = cfg.dt / m as f64;
    let mut current = state.clone();
    let mut solves = 0;
    let mut last = None;
    for _ in 0..m {
        let report = first_order_step(model, &sub_cfg, &current)?;
        solves += report.diagnostics.solves;
        current = report.state.clone();
        last = Some(report);
    }
    let mut report = last.expect("at least one substep");
    report.state.phi_prev = Some(state.phi.clone());
    report.state.r_prev = Some(state.r.clone());
    report.state.step_index = 1;
    report.state.t = state.t + cfg.dt;
    report.diagnostics.solves = solves;
    report.diagnostics.bootstrap = true;
    Ok(report)
}

/// Advances one step with the configured scheme, bootstrapping two-step
/// schemes automatically at step 0.
pub fn step(model: &ModelSpec, cfg: &SchemeConfig, state: &IntegratorState) -> Result<StepReport, IntegratorError> {
    cfg.validate()?;
    if cfg.scheme.is_two_step() && state.phi_prev.is_none() {
        return bootstrap_first_step(model, cfg, state);
    }
    match cfg.scheme {
        Scheme::CsavBdf1 => csav_bdf1_step(model, cfg, state),
        Scheme::CsavCn => csav_cn_step(model, cfg, state),
        Scheme::CsavBdf2 => csav_bdf2_step(model, cfg, state),
        Scheme::SavBdf1 => sav_bdf1_step(model, cfg, state),
        Scheme::SavCn => sav_cn_step(model, cfg, state),
        Scheme::RsavCn => rsav_cn_step(model, cfg, state),
        Scheme::McsavBdf1 => mcsav_bdf1_step(model, cfg, state),
        Scheme::McsavCn => mcsav_cn_step(model, cfg, state),
        Scheme::SicnRef => semi_implicit_cn_step(model, cfg, state),
    }
}

/// Checks that `cfg.scheme` is one of `allowed`; used by callers that pin a
/// family.
pub fn ensure_scheme(cfg: &SchemeConfig, allowed: &[Scheme]) -> Result<(), IntegratorError> {
    require_scheme(cfg, allowed)
}
