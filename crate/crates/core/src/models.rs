//! Gradient-flow model definitions.
//!
//! A model is `φ_t = -G μ - X φ + c` with `μ = (L + S) φ + Σ r_i g_i(φ)`,
//! where every operator is a real Fourier symbol:
//!
//! * `G` mobility, `L` linear part of the free energy,
//! * `S` the stabilization moved from the nonlinear energy into the implicit
//!   operator (constant `s` for potential terms, `s|k|^2` for the slope
//!   selection term),
//! * `X`, `c` an extra implicit linear term and constant source (only the
//!   diblock copolymer model uses them).
//!
//! Each [`NonlinearTerm`] carries its split energy
//! `E_i = ∫F_i - ½⟨φ, S_i φ⟩` and force `g_i = δE_i/δφ`.
//!
//! Mobility conventions: Allen-Cahn folds λ into the mobility (`G = λ`);
//! Cahn-Hilliard keeps λ inside the chemical potential
//! (`μ = λ(-ε²Δφ + φ³ - φ)`, `G = |k|²`); phase-field crystal and diblock put
//! λ in the mobility (`G = λ|k|²`).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::ModelError;
use crate::grid::{
    divergence, gradient, inner_product, integrate, quadratic_form, PeriodicGrid, ScalarField, SpectralSymbol,
};
use crate::numeric::NeumaierSum;

/// Nonlinear free energy density.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Potential {
    /// `F(φ) = Σ_p coeffs[p] φ^p`.
    Polynomial { coeffs: Vec<f64> },
    /// `F(∇φ) = ¼(|∇φ|² - 1)²`.
    SlopeSelection,
}

impl Potential {
    fn poly_value(coeffs: &[f64], v: f64) -> f64 {
        coeffs.iter().rev().fold(0.0, |acc, c| acc * v + c)
    }

    fn poly_derivative(coeffs: &[f64], v: f64) -> f64 {
        coeffs
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(0.0, |acc, (p, c)| acc * v + p as f64 * c)
    }
}

/// One stabilized nonlinear contribution to the free energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonlinearTerm {
    pub potential: Potential,
    /// Stabilization coefficient `s_i >= 0`.
    pub stabilization: f64,
}

impl NonlinearTerm {
    pub fn polynomial(coeffs: Vec<f64>, stabilization: f64) -> Self {
        Self {
            potential: Potential::Polynomial { coeffs },
            stabilization,
        }
    }

    pub fn slope_selection(stabilization: f64) -> Self {
        Self {
            potential: Potential::SlopeSelection,
            stabilization,
        }
    }

    /// Symbol `S_i` of the stabilizing operator.
    pub fn stabilization_symbol(&self, grid: &Arc<PeriodicGrid>) -> SpectralSymbol {
        match self.potential {
            Potential::Polynomial { .. } => SpectralSymbol::constant(grid, self.stabilization),
            Potential::SlopeSelection => SpectralSymbol::neg_div_grad(grid).scale(self.stabilization),
        }
    }

    /// `∫F_i(φ) dΩ` without the stabilization split.
    pub fn bulk_energy(&self, phi: &ScalarField) -> f64 {
        match &self.potential {
            Potential::Polynomial { coeffs } => {
                let mut acc = NeumaierSum::default();
                for &v in phi.values() {
                    acc.add(Potential::poly_value(coeffs, v));
                }
                acc.total() * phi.grid().cell_area()
            }
            Potential::SlopeSelection => {
                let g2 = gradient(phi).norm_sqr();
                integrate(&g2.map(|a| 0.25 * (a - 1.0) * (a - 1.0)))
            }
        }
    }

    /// Split energy `E_i(φ) = ∫F_i - ½⟨φ, S_i φ⟩`.
    pub fn energy(&self, phi: &ScalarField) -> f64 {
        let s = self.stabilization;
        match &self.potential {
            Potential::Polynomial { coeffs } => {
                let mut acc = NeumaierSum::default();
                for &v in phi.values() {
                    acc.add(Potential::poly_value(coeffs, v) - 0.5 * s * v * v);
                }
                acc.total() * phi.grid().cell_area()
            }
            Potential::SlopeSelection => {
                // ¼∫(|∇φ|² - 1 - s)² shifted by a constant so that adding
                // ½s∫|∇φ|² recovers ¼∫(|∇φ|² - 1)² exactly
                let g2 = gradient(phi).norm_sqr();
                let shifted = integrate(&g2.map(|a| 0.25 * (a - 1.0 - s) * (a - 1.0 - s)));
                shifted - (0.5 * s + 0.25 * s * s) * phi.grid().area()
            }
        }
    }

    /// Variational derivative `g_i = δE_i/δφ`.
    pub fn force(&self, phi: &ScalarField) -> ScalarField {
        let s = self.stabilization;
        match &self.potential {
            Potential::Polynomial { coeffs } => phi.map(|v| Potential::poly_derivative(coeffs, v) - s * v),
            Potential::SlopeSelection => {
                let grad = gradient(phi);
                let weight = grad.norm_sqr().map(|a| a - 1.0 - s);
                let flux = grad.scaled_by(&weight).expect("same grid");
                divergence(&flux).scale(-1.0)
            }
        }
    }
}

/// Model family and physical parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum ModelKind {
    AllenCahn { eps: f64, lambda: f64, s: f64 },
    CahnHilliard { eps: f64, lambda: f64, s: f64 },
    Mbe { eps2: f64, s: f64 },
    Pfc { a0: f64, b0: f64, lambda: f64, s: f64 },
    Diblock { eps: f64, lambda: f64, sigma: f64, phi_mean: f64, s: f64 },
    MultiTerm { terms: usize },
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            ModelKind::AllenCahn { .. } => "allen_cahn",
            ModelKind::CahnHilliard { .. } => "cahn_hilliard",
            ModelKind::Mbe { .. } => "mbe",
            ModelKind::Pfc { .. } => "pfc",
            ModelKind::Diblock { .. } => "diblock",
            ModelKind::MultiTerm { .. } => "multi_term",
        }
    }
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub kind: ModelKind,
    grid: Arc<PeriodicGrid>,
    pub mobility: SpectralSymbol,
    pub linear: SpectralSymbol,
    /// Sum of the per-term stabilization symbols.
    pub stabilization: SpectralSymbol,
    /// Quadratic energy contribution that enters the dynamics only through
    /// `extra_linear` (the diblock nonlocal term `σ(-Δ)^{-1}`).
    pub nonlocal: SpectralSymbol,
    pub extra_linear: SpectralSymbol,
    pub extra_forcing: f64,
    pub terms: Vec<NonlinearTerm>,
    implicit: SpectralSymbol,
    quadratic: SpectralSymbol,
}

fn positive(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(ModelError::Parameter {
            name,
            value,
            reason: "must be positive",
        })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() && value >= 0.0 {
        Ok(())
    } else {
        Err(ModelError::Parameter {
            name,
            value,
            reason: "must be non-negative",
        })
    }
}

fn finite(name: &'static str, value: f64) -> Result<(), ModelError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(ModelError::Parameter {
            name,
            value,
            reason: "must be finite",
        })
    }
}

/// `¼(φ² - 1)²` as polynomial coefficients.
fn double_well(scale: f64) -> Vec<f64> {
    vec![0.25 * scale, 0.0, -0.5 * scale, 0.0, 0.25 * scale]
}

impl ModelSpec {
    #[allow(clippy::too_many_arguments)]
    fn assemble(
        kind: ModelKind,
        grid: &Arc<PeriodicGrid>,
        mobility: SpectralSymbol,
        linear: SpectralSymbol,
        nonlocal: SpectralSymbol,
        extra_linear: SpectralSymbol,
        extra_forcing: f64,
        terms: Vec<NonlinearTerm>,
    ) -> Result<Self, ModelError> {
        if terms.is_empty() {
            return Err(ModelError::NoTerms);
        }
        for t in &terms {
            non_negative("s", t.stabilization)?;
        }
        let mut stabilization = SpectralSymbol::zero(grid);
        for t in &terms {
            stabilization = stabilization.add(&t.stabilization_symbol(grid))?;
        }
        let implicit = mobility.mul(&linear.add(&stabilization)?)?.add(&extra_linear)?;
        let quadratic = linear.add(&stabilization)?.add(&nonlocal)?;
        Ok(Self {
            kind,
            grid: Arc::clone(grid),
            mobility,
            linear,
            stabilization,
            nonlocal,
            extra_linear,
            extra_forcing,
            terms,
            implicit,
            quadratic,
        })
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        &self.grid
    }

    /// `G(L + S) + X`, the operator treated implicitly by every scheme.
    pub fn implicit_symbol(&self) -> &SpectralSymbol {
        &self.implicit
    }

    /// `L + S + B`: the full quadratic part of the energy.
    pub fn quadratic_symbol(&self) -> &SpectralSymbol {
        &self.quadratic
    }

    /// `Σ_i E_i(φ)`.
    pub fn nonlinear_energy(&self, phi: &ScalarField) -> f64 {
        self.terms.iter().map(|t| t.energy(phi)).sum()
    }

    /// `Σ_i g_i(φ)`.
    pub fn nonlinear_force(&self, phi: &ScalarField) -> ScalarField {
        let mut terms = self.terms.iter();
        let first = terms.next().expect("at least one term").force(phi);
        terms.fold(first, |acc, t| acc.add(&t.force(phi)).expect("same grid"))
    }

    /// `∫F(φ)` summed over the terms, without the split.
    pub fn bulk_energy(&self, phi: &ScalarField) -> f64 {
        self.terms.iter().map(|t| t.bulk_energy(phi)).sum()
    }

    /// `½⟨φ, (L + S + B) φ⟩`.
    pub fn quadratic_energy(&self, phi: &ScalarField) -> f64 {
        0.5 * quadratic_form(&self.quadratic, phi).expect("model grid")
    }

    /// Original free energy `½⟨φ, Lφ⟩ + ∫F(φ)` (plus the nonlocal term for
    /// the diblock model), evaluated through the stabilized split.
    pub fn total_energy(&self, phi: &ScalarField) -> f64 {
        self.quadratic_energy(phi) + self.nonlinear_energy(phi)
    }

    /// True when the `k = 0` mode cannot change.
    pub fn conserves_mass(&self) -> bool {
        self.mobility.at_zero() == 0.0 && self.extra_linear.at_zero() == 0.0 && self.extra_forcing == 0.0
    }
}

pub fn build_allen_cahn(eps: f64, lambda: f64, s: f64, grid: &Arc<PeriodicGrid>) -> Result<ModelSpec, ModelError> {
    positive("eps", eps)?;
    positive("lambda", lambda)?;
    non_negative("s", s)?;
    ModelSpec::assemble(
        ModelKind::AllenCahn { eps, lambda, s },
        grid,
        SpectralSymbol::constant(grid, lambda),
        SpectralSymbol::neg_laplacian(grid).scale(eps * eps),
        SpectralSymbol::zero(grid),
        SpectralSymbol::zero(grid),
        0.0,
        vec![NonlinearTerm::polynomial(double_well(1.0), s)],
    )
}

pub fn build_cahn_hilliard(eps: f64, lambda: f64, s: f64, grid: &Arc<PeriodicGrid>) -> Result<ModelSpec, ModelError> {
    positive("eps", eps)?;
    positive("lambda", lambda)?;
    non_negative("s", s)?;
    ModelSpec::assemble(
        ModelKind::CahnHilliard { eps, lambda, s },
        grid,
        SpectralSymbol::neg_laplacian(grid),
        SpectralSymbol::neg_laplacian(grid).scale(lambda * eps * eps),
        SpectralSymbol::zero(grid),
        SpectralSymbol::zero(grid),
        0.0,
        vec![NonlinearTerm::polynomial(double_well(lambda), s)],
    )
}

/// Thin-film epitaxy with slope selection: `φ_t = -ε²Δ²φ + ∇·((|∇φ|² - 1)∇φ)`.
pub fn build_mbe(eps2: f64, s: f64, grid: &Arc<PeriodicGrid>) -> Result<ModelSpec, ModelError> {
    positive("eps2", eps2)?;
    non_negative("s", s)?;
    ModelSpec::assemble(
        ModelKind::Mbe { eps2, s },
        grid,
        SpectralSymbol::constant(grid, 1.0),
        SpectralSymbol::bilaplacian(grid).scale(eps2),
        SpectralSymbol::zero(grid),
        SpectralSymbol::zero(grid),
        0.0,
        vec![NonlinearTerm::slope_selection(s)],
    )
}

pub fn build_pfc(a0: f64, b0: f64, lambda: f64, s: f64, grid: &Arc<PeriodicGrid>) -> Result<ModelSpec, ModelError> {
    finite("a0", a0)?;
    finite("b0", b0)?;
    positive("lambda", lambda)?;
    non_negative("s", s)?;
    ModelSpec::assemble(
        ModelKind::Pfc { a0, b0, lambda, s },
        grid,
        SpectralSymbol::neg_laplacian(grid).scale(lambda),
        SpectralSymbol::shifted_laplacian_squared(grid, a0),
        SpectralSymbol::zero(grid),
        SpectralSymbol::zero(grid),
        0.0,
        vec![NonlinearTerm::polynomial(vec![0.0, 0.0, -0.5 * b0, 0.0, 0.25], s)],
    )
}

/// Diblock copolymer: `φ_t = λ[Δμ - σ(φ - φ̂₀)]`, `μ = -ε²Δφ + φ³ - φ`.
pub fn build_diblock(
    eps: f64,
    lambda: f64,
    sigma: f64,
    phi_mean: f64,
    s: f64,
    grid: &Arc<PeriodicGrid>,
) -> Result<ModelSpec, ModelError> {
    positive("eps", eps)?;
    positive("lambda", lambda)?;
    non_negative("sigma", sigma)?;
    finite("phi_mean", phi_mean)?;
    non_negative("s", s)?;
    ModelSpec::assemble(
        ModelKind::Diblock {
            eps,
            lambda,
            sigma,
            phi_mean,
            s,
        },
        grid,
        SpectralSymbol::neg_laplacian(grid).scale(lambda),
        SpectralSymbol::neg_laplacian(grid).scale(eps * eps),
        SpectralSymbol::inverse_neg_laplacian(grid).scale(sigma),
        SpectralSymbol::constant(grid, lambda * sigma),
        lambda * sigma * phi_mean,
        vec![NonlinearTerm::polynomial(double_well(1.0), s)],
    )
}

/// Generic model with one or more independently stabilized nonlinear terms.
pub fn build_multi_term(
    linear: SpectralSymbol,
    mobility: SpectralSymbol,
    terms: Vec<NonlinearTerm>,
    grid: &Arc<PeriodicGrid>,
) -> Result<ModelSpec, ModelError> {
    if linear.min_value() < 0.0 {
        return Err(ModelError::Parameter {
            name: "linear",
            value: linear.min_value(),
            reason: "linear symbol must be non-negative",
        });
    }
    if mobility.min_value() < 0.0 {
        return Err(ModelError::Parameter {
            name: "mobility",
            value: mobility.min_value(),
            reason: "mobility symbol must be non-negative",
        });
    }
    ModelSpec::assemble(
        ModelKind::MultiTerm { terms: terms.len() },
        grid,
        mobility,
        linear,
        SpectralSymbol::zero(grid),
        SpectralSymbol::zero(grid),
        0.0,
        terms,
    )
}

/// Allen-Cahn double well split as `F₁ = ¼φ⁴` (stabilized by `s`) and
/// `F₂ = -½φ² + ¼` (unstabilized).
pub fn allen_cahn_two_term(eps: f64, lambda: f64, s: f64, grid: &Arc<PeriodicGrid>) -> Result<ModelSpec, ModelError> {
    positive("eps", eps)?;
    positive("lambda", lambda)?;
    build_multi_term(
        SpectralSymbol::neg_laplacian(grid).scale(eps * eps),
        SpectralSymbol::constant(grid, lambda),
        vec![
            NonlinearTerm::polynomial(vec![0.0, 0.0, 0.0, 0.0, 0.25], s),
            NonlinearTerm::polynomial(vec![0.25, 0.0, -0.5], 0.0),
        ],
        grid,
    )
}

/// `⟨g(φ), ψ⟩` for the slope selection term written as the flux pairing
/// `∫(|∇φ|² - 1 - s)∇φ·∇ψ`.
pub fn slope_flux_pairing(phi: &ScalarField, psi: &ScalarField, s: f64) -> f64 {
    let gp = gradient(phi);
    let gq = gradient(psi);
    let weight = gp.norm_sqr().map(|a| a - 1.0 - s);
    let fx = gp.x.values().iter().zip(gq.x.values());
    let fy = gp.y.values().iter().zip(gq.y.values());
    let dot: Vec<f64> = fx
        .zip(fy)
        .zip(weight.values())
        .map(|(((ax, bx), (ay, by)), w)| w * (ax * bx + ay * by))
        .collect();
    integrate(&ScalarField::from_values(phi.grid(), dot).expect("same grid"))
}

/// `⟨g(φ), ψ⟩` through the generic force.
pub fn force_pairing(model: &ModelSpec, phi: &ScalarField, psi: &ScalarField) -> f64 {
    inner_product(&model.nonlinear_force(phi), psi).expect("same grid")
}
