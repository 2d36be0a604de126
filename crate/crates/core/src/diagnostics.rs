//! Energies, consistency ratios and per-run traces.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::IntegratorError;
use crate::grid::{mean, ScalarField};
use crate::integrators::{group_energy, term_groups, IntegratorState, Scheme, SchemeConfig, StepDiagnostics};
use crate::models::ModelSpec;

/// Original free energy.
pub fn original_energy(model: &ModelSpec, phi: &ScalarField) -> f64 {
    model.total_energy(phi)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReportedEnergy {
    /// `E + Σr/α`, absent when `α = 0`.
    pub e_cm: Option<f64>,
    /// `E_CM` with the initial constant `Σ r⁰/α` removed: `E + Σ(r-1)/α`.
    pub shifted: f64,
    /// `E_CM - Σr/α`, identical to the original energy. This is the curve
    /// compared against the accurate energy.
    pub original: f64,
}

pub fn csav_reported_energy(model: &ModelSpec, phi: &ScalarField, r: &[f64], alpha: f64) -> ReportedEnergy {
    let original = original_energy(model, phi);
    if alpha == 0.0 {
        return ReportedEnergy {
            e_cm: None,
            shifted: original,
            original,
        };
    }
    let aux: f64 = r.iter().map(|v| v / alpha).sum();
    let drift: f64 = r.iter().map(|v| (v - 1.0) / alpha).sum();
    let e_cm = original + aux;
    ReportedEnergy {
        e_cm: Some(e_cm),
        shifted: original + drift,
        original: e_cm - aux,
    }
}

/// Discrete Lyapunov functional split into a field part and an auxiliary
/// part, so that step differences can be formed without cancelling against
/// a large `r/α`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyParts {
    pub field: f64,
    pub auxiliary: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.field + self.auxiliary
    }

    /// `self - earlier`, differenced part by part.
    pub fn change_since(&self, earlier: &EnergyParts) -> f64 {
        (self.field - earlier.field) + (self.auxiliary - earlier.auxiliary)
    }
}

/// The discrete energy whose monotonicity the scheme guarantees.
///
/// * CSAV BDF1/CN and multi-CSAV: `½⟨φ,Qφ⟩ + E₀(φ) + Σr/α`
/// * CSAV BDF2: two-level form with `2φⁿ - φⁿ⁻¹`
/// * SAV/RSAV: `½⟨φ,Qφ⟩ + q² - C₀`
/// * reference CN (`α = 0`): the original energy
///
/// `Q` is the full quadratic symbol, including the stabilization.
pub fn discrete_energy(
    model: &ModelSpec,
    cfg: &SchemeConfig,
    state: &IntegratorState,
) -> Result<EnergyParts, IntegratorError> {
    let scheme = cfg.scheme;
    let alpha = cfg.alpha;
    let aux_r = |r: &[f64]| if alpha > 0.0 { r.iter().sum::<f64>() / alpha } else { 0.0 };
    match scheme {
        Scheme::SavBdf1 | Scheme::SavCn | Scheme::RsavCn => {
            let q = state
                .q
                .ok_or_else(|| IntegratorError::State("SAV energy needs q".into()))?;
            Ok(EnergyParts {
                field: model.quadratic_energy(&state.phi),
                auxiliary: q * q - cfg.c0,
            })
        }
        Scheme::CsavBdf2 => {
            let (prev, r_prev) = match (&state.phi_prev, &state.r_prev) {
                (Some(p), Some(r)) => (p.clone(), r.clone()),
                _ if state.step_index == 0 => (state.phi.clone(), state.r.clone()),
                _ => {
                    return Err(IntegratorError::State(
                        "two-level energy needs the previous level".into(),
                    ))
                }
            };
            let groups = term_groups(model, scheme);
            let e0 = |phi: &ScalarField| groups.iter().map(|g| group_energy(model, g, phi)).sum::<f64>();
            let extrap = state.phi.lin_comb(2.0, &prev, -1.0)?;
            let field = 0.5 * (model.quadratic_energy(&state.phi) + model.quadratic_energy(&extrap))
                + 0.5 * (3.0 * e0(&state.phi) - e0(&prev));
            let auxiliary = if alpha > 0.0 {
                (3.0 * state.r.iter().sum::<f64>() - r_prev.iter().sum::<f64>()) / (2.0 * alpha)
            } else {
                0.0
            };
            Ok(EnergyParts { field, auxiliary })
        }
        _ => Ok(EnergyParts {
            field: model.total_energy(&state.phi),
            auxiliary: aux_r(&state.r),
        }),
    }
}

/// `q½ / √(E₀(φ̄) + C₀)`: the SAV coefficient of the nonlinear force.
pub fn sav_consistency_ratio(q_half: f64, e0_bar: f64, c0: f64) -> f64 {
    q_half / (e0_bar + c0).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub t: f64,
    pub e_original: f64,
    /// Continuous `E + Σr/α`; absent for SAV schemes and `α = 0`.
    pub e_cm: Option<f64>,
    /// `E_CM - Σr/α` (the original energy) for CSAV, `E_M` for SAV, `E` otherwise.
    pub e_reported: f64,
    pub discrete: EnergyParts,
    pub r: Vec<f64>,
    pub q: Option<f64>,
    pub q_tilde: Option<f64>,
    pub xi0: Option<f64>,
    pub ratio: Option<f64>,
    pub mass: f64,
    pub dissipation: Option<f64>,
    pub bootstrap: bool,
}

impl TraceRecord {
    pub fn new(
        model: &ModelSpec,
        cfg: &SchemeConfig,
        state: &IntegratorState,
        step: Option<&StepDiagnostics>,
    ) -> Result<Self, IntegratorError> {
        let discrete = discrete_energy(model, cfg, state)?;
        let e_original = original_energy(model, &state.phi);
        let (e_cm, e_reported) = if cfg.scheme.uses_q() {
            (None, discrete.total())
        } else {
            let rep = csav_reported_energy(model, &state.phi, &state.r, cfg.alpha);
            (rep.e_cm, rep.original)
        };
        Ok(Self {
            step: state.step_index,
            t: state.t,
            e_original,
            e_cm,
            e_reported,
            discrete,
            r: state.r.clone(),
            q: state.q,
            q_tilde: step.and_then(|d| d.q_tilde),
            xi0: step.and_then(|d| d.xi0),
            ratio: step.map(|d| d.ratio),
            mass: mean(&state.phi),
            dissipation: step.map(|d| d.dissipation),
            bootstrap: step.is_some_and(|d| d.bootstrap),
        })
    }

    fn is_finite(&self) -> bool {
        let opt = |v: Option<f64>| v.is_none_or(f64::is_finite);
        self.t.is_finite()
            && self.e_original.is_finite()
            && self.e_reported.is_finite()
            && self.discrete.total().is_finite()
            && self.r.iter().all(|v| v.is_finite())
            && self.mass.is_finite()
            && opt(self.e_cm)
            && opt(self.q)
            && opt(self.q_tilde)
            && opt(self.xi0)
            && opt(self.ratio)
            && opt(self.dissipation)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub records: Vec<TraceRecord>,
}

pub const CSV_HEADER: &str = "t,E_original,E_CM_discrete,r,q,xi0,ratio,mass,dissipation";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.17e}")).unwrap_or_default()
}

/// A step at which the discrete energy rose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Violation {
    pub step: usize,
    pub increase: f64,
    pub slack: f64,
}

impl EnergyTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record; time must increase strictly and all values be finite.
    pub fn push(&mut self, record: TraceRecord) -> Result<(), IntegratorError> {
        if !record.is_finite() {
            return Err(IntegratorError::Divergence {
                step: record.step,
                what: "trace record",
            });
        }
        if let Some(last) = self.records.last() {
            if record.t <= last.t {
                return Err(IntegratorError::State(format!(
                    "trace time {} does not exceed {}",
                    record.t, last.t
                )));
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Steps where the discrete energy increased by more than
    /// `rel_slack·|E|`. Transitions out of a bootstrap record are skipped for
    /// two-level energies, whose first level is not produced by the scheme.
    pub fn energy_violations(&self, rel_slack: f64, skip_bootstrap: bool) -> Vec<Violation> {
        self.records
            .windows(2)
            .filter(|w| !(skip_bootstrap && (w[1].bootstrap || w[0].step == 0)))
            .filter_map(|w| {
                let increase = w[1].discrete.change_since(&w[0].discrete);
                let slack = rel_slack * w[0].discrete.total().abs();
                (increase > slack).then_some(Violation {
                    step: w[1].step,
                    increase,
                    slack,
                })
            })
            .collect()
    }

    /// Per-step `ΔE + Δt⟨Gμ,μ⟩`, the residual of the CN energy identity.
    pub fn balance_residuals(&self) -> Vec<(usize, f64, f64)> {
        self.records
            .windows(2)
            .filter(|w| !w[1].bootstrap)
            .filter_map(|w| {
                let d = w[1].dissipation?;
                let dt = w[1].t - w[0].t;
                let res = w[1].discrete.change_since(&w[0].discrete) + dt * d;
                Some((w[1].step, res, w[0].discrete.total()))
            })
            .collect()
    }

    pub fn max_r_deviation(&self) -> f64 {
        self.records
            .iter()
            .flat_map(|rec| rec.r.iter().map(|r| (r - 1.0).abs()))
            .fold(0.0, f64::max)
    }

    pub fn max_ratio_deviation(&self) -> f64 {
        self.records
            .iter()
            .filter_map(|rec| rec.ratio)
            .map(|v| (v - 1.0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_mass_drift(&self) -> f64 {
        let Some(first) = self.records.first() else {
            return 0.0;
        };
        self.records
            .iter()
            .map(|rec| (rec.mass - first.mass).abs())
            .fold(0.0, f64::max)
    }

    /// Writes the fixed-column CSV, keeping every `decimate`-th record plus
    /// the last one.
    pub fn write_csv<W: Write>(&self, mut out: W, decimate: usize) -> io::Result<()> {
        let every = decimate.max(1);
        writeln!(out, "{CSV_HEADER}")?;
        let n = self.records.len();
        for (i, rec) in self.records.iter().enumerate() {
            if i % every != 0 && i + 1 != n {
                continue;
            }
            let r = rec
                .r
                .iter()
                .map(|v| format!("{v:.17e}"))
                .collect::<Vec<_>>()
                .join(";");
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{},{},{},{},{:.17e},{}",
                rec.t,
                rec.e_original,
                rec.discrete.total(),
                r,
                fmt_opt(rec.q),
                fmt_opt(rec.xi0),
                fmt_opt(rec.ratio),
                rec.mass,
                fmt_opt(rec.dissipation),
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self, decimate: usize) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, decimate).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::integrators::{initialize, step};
    use crate::models::build_allen_cahn;
    use std::f64::consts::PI;

    #[test]
    fn reported_energy_examples() {
        let g = make_grid(2.0 * PI, 2.0 * PI, 16, 16).unwrap();
        let m = build_allen_cahn(0.1, 1.0, 4.0, &g).unwrap();
        let phi = ScalarField::from_fn(&g, |x, y| 0.5 * x.sin() * y.cos());
        let e = original_energy(&m, &phi);
        let rep = csav_reported_energy(&m, &phi, &[1.0], 1.0);
        assert!((rep.e_cm.unwrap() - (e + 1.0)).abs() < 1e-12);
        let rep = csav_reported_energy(&m, &phi, &[1.0], 1e-3);
        assert!((rep.e_cm.unwrap() - 1e3 - e).abs() < 1e-9);
        assert_eq!(rep.shifted, e);
        assert!((rep.original - e).abs() < 1e-9);
        let rep = csav_reported_energy(&m, &phi, &[1.0], 0.0);
        assert_eq!(rep.e_cm, None);
        assert_eq!(rep.original, e);
    }

    #[test]
    fn stationary_discrete_energy_is_one_over_alpha() {
        let g = make_grid(2.0 * PI, 2.0 * PI, 8, 8).unwrap();
        let m = build_allen_cahn(0.1, 1.0, 4.0, &g).unwrap();
        let cfg = SchemeConfig::new(Scheme::CsavBdf1, 0.1, 0.5);
        let state = initialize(&m, &cfg, ScalarField::constant(&g, 1.0), 0.0).unwrap();
        let e = discrete_energy(&m, &cfg, &state).unwrap();
        assert!((e.total() - 2.0).abs() < 1e-13);
    }

    #[test]
    fn bdf2_form_with_identical_levels() {
        let g = make_grid(2.0 * PI, 2.0 * PI, 16, 16).unwrap();
        let m = build_allen_cahn(0.1, 1.0, 4.0, &g).unwrap();
        let phi = ScalarField::from_fn(&g, |x, y| 0.7 * (x + y).sin());
        let cfg1 = SchemeConfig::new(Scheme::CsavBdf1, 0.1, 0.5);
        let cfg2 = SchemeConfig::new(Scheme::CsavBdf2, 0.1, 0.5);
        let mut state = initialize(&m, &cfg2, phi.clone(), 0.0).unwrap();
        let single = discrete_energy(&m, &cfg1, &state).unwrap();
        let two = discrete_energy(&m, &cfg2, &state).unwrap();
        // identical levels: ¼(2⟨φ,Qφ⟩) + (3r-r)/(2α) + ½(3E₀-E₀) equals the one-level form
        assert!((single.total() - two.total()).abs() < 1e-12);
        state.phi_prev = Some(phi.clone());
        state.r_prev = Some(vec![1.0]);
        state.step_index = 3;
        let again = discrete_energy(&m, &cfg2, &state).unwrap();
        assert!((again.total() - two.total()).abs() < 1e-12);
        state.phi_prev = None;
        assert!(discrete_energy(&m, &cfg2, &state).is_err());
    }

    #[test]
    fn sav_energy_at_consistent_q_is_original_energy() {
        let g = make_grid(2.0 * PI, 2.0 * PI, 16, 16).unwrap();
        let m = build_allen_cahn(0.1, 1.0, 4.0, &g).unwrap();
        let phi = ScalarField::from_fn(&g, |x, _| 0.3 * x.cos());
        let cfg = SchemeConfig::new(Scheme::SavCn, 0.1, 0.0).with_c0(100.0);
        let state = initialize(&m, &cfg, phi.clone(), 0.0).unwrap();
        let e = discrete_energy(&m, &cfg, &state).unwrap();
        assert!((e.total() - original_energy(&m, &phi)).abs() < 1e-11);
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(sav_consistency_ratio(2.0, 3.0, 1.0), 1.0);
        let g = make_grid(2.0 * PI, 2.0 * PI, 8, 8).unwrap();
        let m = build_allen_cahn(0.1, 1.0, 4.0, &g).unwrap();
        let cfg = SchemeConfig::new(Scheme::CsavCn, 0.1, 0.5);
        let phi = ScalarField::from_fn(&g, |x, _| 0.3 * x.cos());
        let state = initialize(&m, &cfg, phi, 0.0).unwrap();
        let rep = step(&m, &cfg, &state).unwrap();
        assert_eq!(rep.diagnostics.ratio, 1.0);
    }

    #[test]
    fn trace_rejects_time_going_backwards_and_writes_csv() {
        let g = make_grid(2.0 * PI, 2.0 * PI, 8, 8).unwrap();
        let m = build_allen_cahn(0.1, 1.0, 4.0, &g).unwrap();
        let cfg = SchemeConfig::new(Scheme::CsavCn, 0.1, 0.5);
        let state = initialize(&m, &cfg, ScalarField::constant(&g, 0.2), 0.0).unwrap();
        let mut trace = EnergyTrace::new();
        trace.push(TraceRecord::new(&m, &cfg, &state, None).unwrap()).unwrap();
        assert!(trace.push(TraceRecord::new(&m, &cfg, &state, None).unwrap()).is_err());
        let rep = step(&m, &cfg, &state).unwrap();
        trace
            .push(TraceRecord::new(&m, &cfg, &rep.state, Some(&rep.diagnostics)).unwrap())
            .unwrap();
        let csv = trace.to_csv_string(1);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 9);
    }
}
