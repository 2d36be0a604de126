//! Dense linear-algebra oracle for single time steps.
//!
//! Operators are assembled as explicit `N×N` matrices from cosine sums over
//! the discrete wavenumbers, and every scheme is solved as written, with the
//! SAV family solved as the coupled `(N+1)` system. Nothing here goes
//! through the library's spectral machinery.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use csav::grid::{PeriodicGrid, ScalarField};
use nalgebra::{DMatrix, DVector};

pub struct DenseTerm {
    /// `F(φ) = Σ_p coeffs[p] φ^p`.
    pub coeffs: Vec<f64>,
    pub s: f64,
}

impl DenseTerm {
    fn f_prime(&self, v: f64) -> f64 {
        (1..self.coeffs.len())
            .map(|p| p as f64 * self.coeffs[p] * v.powi(p as i32 - 1))
            .sum()
    }

    fn f(&self, v: f64) -> f64 {
        (0..self.coeffs.len()).map(|p| self.coeffs[p] * v.powi(p as i32)).sum()
    }

    /// `F'(φ) - sφ`.
    pub fn g(&self, phi: &DVector<f64>) -> DVector<f64> {
        phi.map(|v| self.f_prime(v) - self.s * v)
    }

    /// `∫ F(φ) - ½sφ²`.
    pub fn e(&self, phi: &DVector<f64>, cell: f64) -> f64 {
        phi.iter().map(|&v| self.f(v) - 0.5 * self.s * v * v).sum::<f64>() * cell
    }
}

pub struct DenseProblem {
    pub cell: f64,
    pub mobility: DMatrix<f64>,
    /// `L + S`.
    pub linear: DMatrix<f64>,
    /// Implicit zeroth-order term added to `G(L+S)`.
    pub extra: f64,
    pub forcing: f64,
    pub terms: Vec<DenseTerm>,
}

/// `-Δ` as a dense matrix: `(1/N) Σ_k |k|² cos(k·(x_p - x_q))`.
pub fn neg_laplacian(grid: &PeriodicGrid) -> DMatrix<f64> {
    let (nx, ny) = (grid.nx(), grid.ny());
    let n = nx * ny;
    let waves = |m: usize, len: usize, l: f64| {
        let signed = if m < len / 2 { m as f64 } else { m as f64 - len as f64 };
        2.0 * PI * signed / l
    };
    let mut mat = DMatrix::zeros(n, n);
    for jq in 0..ny {
        for iq in 0..nx {
            for jp in 0..ny {
                for ip in 0..nx {
                    let dx = grid.x(ip) - grid.x(iq);
                    let dy = grid.y(jp) - grid.y(jq);
                    let mut acc = 0.0;
                    for my in 0..ny {
                        let ky = waves(my, ny, grid.ly());
                        for mx in 0..nx {
                            let kx = waves(mx, nx, grid.lx());
                            acc += (kx * kx + ky * ky) * (kx * dx + ky * dy).cos();
                        }
                    }
                    mat[(grid.index(ip, jp), grid.index(iq, jq))] = acc / n as f64;
                }
            }
        }
    }
    mat
}

fn double_well(scale: f64) -> Vec<f64> {
    vec![0.25 * scale, 0.0, -0.5 * scale, 0.0, 0.25 * scale]
}

impl DenseProblem {
    fn n(&self) -> usize {
        self.mobility.nrows()
    }

    pub fn allen_cahn(grid: &PeriodicGrid, eps: f64, lambda: f64, s: f64) -> Self {
        let n = grid.len();
        let id = DMatrix::<f64>::identity(n, n);
        Self {
            cell: grid.cell_area(),
            mobility: &id * lambda,
            linear: neg_laplacian(grid) * (eps * eps) + &id * s,
            extra: 0.0,
            forcing: 0.0,
            terms: vec![DenseTerm {
                coeffs: double_well(1.0),
                s,
            }],
        }
    }

    pub fn allen_cahn_two_term(grid: &PeriodicGrid, eps: f64, lambda: f64, s: f64) -> Self {
        let mut p = Self::allen_cahn(grid, eps, lambda, s);
        p.terms = vec![
            DenseTerm {
                coeffs: vec![0.0, 0.0, 0.0, 0.0, 0.25],
                s,
            },
            DenseTerm {
                coeffs: vec![0.25, 0.0, -0.5],
                s: 0.0,
            },
        ];
        p
    }

    /// `φ_t = Δμ`, `μ = λ(-ε²Δφ + φ³ - φ)`.
    pub fn cahn_hilliard(grid: &PeriodicGrid, eps: f64, lambda: f64, s: f64) -> Self {
        let n = grid.len();
        let lap = neg_laplacian(grid);
        Self {
            cell: grid.cell_area(),
            mobility: lap.clone(),
            linear: lap * (lambda * eps * eps) + DMatrix::<f64>::identity(n, n) * s,
            extra: 0.0,
            forcing: 0.0,
            terms: vec![DenseTerm {
                coeffs: double_well(lambda),
                s,
            }],
        }
    }

    /// `φ_t = λ[Δμ - σ(φ - φ̄)]`.
    pub fn diblock(grid: &PeriodicGrid, eps: f64, lambda: f64, sigma: f64, phi_mean: f64, s: f64) -> Self {
        let n = grid.len();
        let lap = neg_laplacian(grid);
        Self {
            cell: grid.cell_area(),
            mobility: &lap * lambda,
            linear: lap * (eps * eps) + DMatrix::<f64>::identity(n, n) * s,
            extra: lambda * sigma,
            forcing: lambda * sigma * phi_mean,
            terms: vec![DenseTerm {
                coeffs: double_well(1.0),
                s,
            }],
        }
    }

    fn k(&self) -> DMatrix<f64> {
        let n = self.n();
        &self.mobility * &self.linear + DMatrix::<f64>::identity(n, n) * self.extra
    }

    fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        a.dot(b) * self.cell
    }

    /// Groups of terms sharing one scalar: one group, or one per term.
    fn groups(&self, multi: bool) -> Vec<Vec<usize>> {
        if multi {
            (0..self.terms.len()).map(|i| vec![i]).collect()
        } else {
            vec![(0..self.terms.len()).collect()]
        }
    }

    fn group_g(&self, group: &[usize], phi: &DVector<f64>) -> DVector<f64> {
        group
            .iter()
            .fold(DVector::zeros(phi.len()), |acc, &i| acc + self.terms[i].g(phi))
    }

    fn group_e(&self, group: &[usize], phi: &DVector<f64>) -> f64 {
        group.iter().map(|&i| self.terms[i].e(phi, self.cell)).sum()
    }

    fn e0(&self, phi: &DVector<f64>) -> f64 {
        self.group_e(&(0..self.terms.len()).collect::<Vec<_>>(), phi)
    }

    fn ones(&self) -> DVector<f64> {
        DVector::from_element(self.n(), 1.0)
    }

    fn solve(a: DMatrix<f64>, rhs: DVector<f64>) -> DVector<f64> {
        a.lu().solve(&rhs).expect("nonsingular oracle system")
    }

    /// `(φⁿ⁺¹ - φⁿ)/Δt = -G[(L+S)φⁿ⁺¹ + Σ rᵢⁿ gᵢ(φⁿ)] - Xφⁿ⁺¹ + c`.
    pub fn csav_bdf1(
        &self,
        dt: f64,
        alpha: f64,
        multi: bool,
        phi: &DVector<f64>,
        r: &[f64],
    ) -> (DVector<f64>, Vec<f64>) {
        let n = self.n();
        let groups = self.groups(multi);
        let mut explicit = DVector::zeros(n);
        for (gi, group) in groups.iter().enumerate() {
            explicit += self.group_g(group, phi) * r[gi];
        }
        let a = DMatrix::<f64>::identity(n, n) + self.k() * dt;
        let rhs = phi - &self.mobility * explicit * dt + self.ones() * (dt * self.forcing);
        let new = Self::solve(a, rhs);
        let diff = &new - phi;
        let r_new = groups
            .iter()
            .enumerate()
            .map(|(gi, group)| {
                r[gi]
                    + alpha
                        * (-(self.group_e(group, &new) - self.group_e(group, phi))
                            + r[gi] * self.inner(&self.group_g(group, phi), &diff))
            })
            .collect();
        (new, r_new)
    }

    /// Crank-Nicolson with `φ̄ = 3/2 φⁿ - 1/2 φⁿ⁻¹` and `r̄` likewise.
    #[allow(clippy::too_many_arguments)]
    pub fn csav_cn(
        &self,
        dt: f64,
        alpha: f64,
        multi: bool,
        phi: &DVector<f64>,
        phi_prev: &DVector<f64>,
        r: &[f64],
        r_prev: &[f64],
    ) -> (DVector<f64>, Vec<f64>) {
        let n = self.n();
        let groups = self.groups(multi);
        let bar = phi * 1.5 - phi_prev * 0.5;
        let r_bar: Vec<f64> = r.iter().zip(r_prev).map(|(a, b)| 1.5 * a - 0.5 * b).collect();
        let mut explicit = DVector::zeros(n);
        for (gi, group) in groups.iter().enumerate() {
            explicit += self.group_g(group, &bar) * r_bar[gi];
        }
        let id = DMatrix::<f64>::identity(n, n);
        let a = &id + self.k() * (0.5 * dt);
        let rhs = (&id - self.k() * (0.5 * dt)) * phi - &self.mobility * explicit * dt
            + self.ones() * (dt * self.forcing);
        let new = Self::solve(a, rhs);
        let diff = &new - phi;
        let r_new = groups
            .iter()
            .enumerate()
            .map(|(gi, group)| {
                r[gi]
                    + alpha
                        * (-(self.group_e(group, &new) - self.group_e(group, phi))
                            + r_bar[gi] * self.inner(&self.group_g(group, &bar), &diff))
            })
            .collect();
        (new, r_new)
    }

    /// BDF2 in φ and r with the midpoint extrapolations.
    pub fn csav_bdf2(
        &self,
        dt: f64,
        alpha: f64,
        phi: &DVector<f64>,
        phi_prev: &DVector<f64>,
        r: f64,
        r_prev: f64,
    ) -> (DVector<f64>, f64) {
        let n = self.n();
        let bar = phi * 1.5 - phi_prev * 0.5;
        let r_bar = 1.5 * r - 0.5 * r_prev;
        let all: Vec<usize> = (0..self.terms.len()).collect();
        let g = self.group_g(&all, &bar);
        let a = DMatrix::<f64>::identity(n, n) * 3.0 + self.k() * (2.0 * dt);
        let rhs = phi * 4.0 - phi_prev - &self.mobility * &g * (2.0 * dt * r_bar)
            + self.ones() * (2.0 * dt * self.forcing);
        let new = Self::solve(a, rhs);
        let d3 = &new * 3.0 - phi * 4.0 + phi_prev;
        let e3 = 3.0 * self.e0(&new) - 4.0 * self.e0(phi) + self.e0(phi_prev);
        let r_new = (4.0 * r - r_prev + alpha * (-e3 + r_bar * self.inner(&g, &d3))) / 3.0;
        (new, r_new)
    }

    fn sav_b(&self, at: &DVector<f64>, c0: f64) -> DVector<f64> {
        self.group_g(&(0..self.terms.len()).collect::<Vec<_>>(), at) / (self.e0(at) + c0).sqrt()
    }

    /// Coupled `(φⁿ⁺¹, qⁿ⁺¹)` system for SAV-BDF1.
    pub fn sav_bdf1(&self, dt: f64, c0: f64, phi: &DVector<f64>, q: f64) -> (DVector<f64>, f64) {
        let n = self.n();
        let b = self.sav_b(phi, c0);
        let gb = &self.mobility * &b;
        let mut m = DMatrix::zeros(n + 1, n + 1);
        let mut rhs = DVector::zeros(n + 1);
        let a = DMatrix::<f64>::identity(n, n) + self.k() * dt;
        m.view_mut((0, 0), (n, n)).copy_from(&a);
        for i in 0..n {
            m[(i, n)] = dt * gb[i];
            m[(n, i)] = -0.5 * self.cell * b[i];
            rhs[i] = phi[i] + dt * self.forcing;
        }
        m[(n, n)] = 1.0;
        rhs[n] = q - 0.5 * self.inner(&b, phi);
        let z = Self::solve(m, rhs);
        (z.rows(0, n).into_owned(), z[n])
    }

    /// Coupled `(φⁿ⁺¹, qⁿ⁺¹)` system for SAV-CN.
    pub fn sav_cn(
        &self,
        dt: f64,
        c0: f64,
        phi: &DVector<f64>,
        phi_prev: &DVector<f64>,
        q: f64,
    ) -> (DVector<f64>, f64) {
        let n = self.n();
        let bar = phi * 1.5 - phi_prev * 0.5;
        let b = self.sav_b(&bar, c0);
        let gb = &self.mobility * &b;
        let id = DMatrix::<f64>::identity(n, n);
        let a = &id + self.k() * (0.5 * dt);
        let known = (&id - self.k() * (0.5 * dt)) * phi - &gb * (0.5 * dt * q) + self.ones() * (dt * self.forcing);
        let mut m = DMatrix::zeros(n + 1, n + 1);
        let mut rhs = DVector::zeros(n + 1);
        m.view_mut((0, 0), (n, n)).copy_from(&a);
        for i in 0..n {
            m[(i, n)] = 0.5 * dt * gb[i];
            m[(n, i)] = -0.5 * self.cell * b[i];
            rhs[i] = known[i];
        }
        m[(n, n)] = 1.0;
        rhs[n] = q - 0.5 * self.inner(&b, phi);
        let z = Self::solve(m, rhs);
        (z.rows(0, n).into_owned(), z[n])
    }

    /// SAV-CN predictor followed by the relaxation with the closed-form
    /// smallest feasible ξ. Returns `(φ, q, q̃, ξ)`.
    #[allow(clippy::too_many_arguments)]
    pub fn rsav_cn(
        &self,
        dt: f64,
        c0: f64,
        eta: f64,
        phi: &DVector<f64>,
        phi_prev: &DVector<f64>,
        q: f64,
    ) -> (DVector<f64>, f64, f64, f64) {
        let (new, q_tilde) = self.sav_cn(dt, c0, phi, phi_prev, q);
        let bar = phi * 1.5 - phi_prev * 0.5;
        let b = self.sav_b(&bar, c0);
        let half = (&new + phi) * 0.5;
        let mu = &self.linear * half + b * (0.5 * (q_tilde + q));
        let budget = dt * eta * self.inner(&(&self.mobility * &mu), &mu);
        let root = (self.e0(&new) + c0).sqrt();
        let a = (q_tilde - root).powi(2);
        let bb = 2.0 * (q_tilde - root) * root;
        let c = root * root - q_tilde * q_tilde - budget;
        let xi = if a > 0.0 {
            (0.0f64).max((-bb - (bb * bb - 4.0 * a * c).sqrt()) / (2.0 * a))
        } else {
            0.0
        };
        (new, xi * q_tilde + (1.0 - xi) * root, q_tilde, xi)
    }
}

pub fn to_dense(f: &ScalarField) -> DVector<f64> {
    DVector::from_column_slice(f.values())
}

pub fn to_field(grid: &Arc<PeriodicGrid>, v: &DVector<f64>) -> ScalarField {
    ScalarField::from_values(grid, v.iter().copied().collect()).unwrap()
}

pub fn max_diff(a: &ScalarField, b: &DVector<f64>) -> f64 {
    a.values()
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Smooth periodic field with a few random low modes.
pub fn smooth_field(grid: &Arc<PeriodicGrid>, seed: u64, amp: f64, offset: f64) -> ScalarField {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(f64, f64, f64, f64)> = (0..5)
        .map(|_| {
            (
                rng.gen_range(0..3) as f64,
                rng.gen_range(0..3) as f64,
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let (lx, ly) = (grid.lx(), grid.ly());
    ScalarField::from_fn(grid, |x, y| {
        offset
            + amp
                * modes
                    .iter()
                    .map(|(a, b, c, ph)| c * (2.0 * PI * (a * x / lx + b * y / ly) + ph).cos())
                    .sum::<f64>()
    })
}

pub struct OracleCase {
    pub label: String,
    pub field_error: f64,
    pub scalar_error: f64,
}

impl OracleCase {
    pub fn worst(&self) -> f64 {
        self.field_error.max(self.scalar_error)
    }
}

/// Every scheme on 8×8 Allen-Cahn, CSAV-CN on Cahn-Hilliard and diblock,
/// compared against the dense oracle from a generic two-level state.
pub fn oracle_cases() -> Vec<OracleCase> {
    use csav::grid::make_grid;
    use csav::integrators::*;
    use csav::models::*;

    let g = make_grid(2.0 * PI, 2.0 * PI, 8, 8).unwrap();
    let phi = smooth_field(&g, 11, 0.4, 0.1);
    let prev = smooth_field(&g, 12, 0.4, 0.05);
    let (dp, dq) = (to_dense(&phi), to_dense(&prev));
    let state = |r: Vec<f64>, r_prev: Vec<f64>, q: Option<f64>| IntegratorState {
        phi: phi.clone(),
        phi_prev: Some(prev.clone()),
        r,
        r_prev: Some(r_prev),
        q,
        step_index: 4,
        t: 0.2,
    };
    let (dt, alpha, c0, eta) = (0.05, 0.3, 120.0, 0.9);
    let mut out = Vec::new();
    let mut push = |label: &str, rep: StepReport, phi_ref: &DVector<f64>, scalars: &[f64], got: &[f64]| {
        let scalar_error = scalars
            .iter()
            .zip(got)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        out.push(OracleCase {
            label: label.to_string(),
            field_error: max_diff(&rep.state.phi, phi_ref),
            scalar_error,
        });
    };

    let ac = build_allen_cahn(0.3, 1.0, 2.0, &g).unwrap();
    let dac = DenseProblem::allen_cahn(&g, 0.3, 1.0, 2.0);
    let two = allen_cahn_two_term(0.3, 1.0, 2.0, &g).unwrap();
    let dtwo = DenseProblem::allen_cahn_two_term(&g, 0.3, 1.0, 2.0);

    let cfg = |scheme| SchemeConfig::new(scheme, dt, alpha).with_c0(c0).with_eta(eta);

    let rep = csav_bdf1_step(&ac, &cfg(Scheme::CsavBdf1), &state(vec![1.02], vec![0.99], None)).unwrap();
    let (p, r) = dac.csav_bdf1(dt, alpha, false, &dp, &[1.02]);
    push("csav-bdf1 allen-cahn", rep.clone(), &p, &r, &rep.state.r);

    let rep = csav_cn_step(&ac, &cfg(Scheme::CsavCn), &state(vec![1.02], vec![0.99], None)).unwrap();
    let (p, r) = dac.csav_cn(dt, alpha, false, &dp, &dq, &[1.02], &[0.99]);
    push("csav-cn allen-cahn", rep.clone(), &p, &r, &rep.state.r);

    let rep = csav_bdf2_step(&ac, &cfg(Scheme::CsavBdf2), &state(vec![1.02], vec![0.99], None)).unwrap();
    let (p, r) = dac.csav_bdf2(dt, alpha, &dp, &dq, 1.02, 0.99);
    push("csav-bdf2 allen-cahn", rep.clone(), &p, &[r], &rep.state.r);

    let rep = semi_implicit_cn_step(&ac, &cfg(Scheme::SicnRef), &state(vec![1.0], vec![1.0], None)).unwrap();
    let (p, _) = dac.csav_cn(dt, 0.0, false, &dp, &dq, &[1.0], &[1.0]);
    push("sicn-ref allen-cahn", rep.clone(), &p, &[1.0], &rep.state.r);

    let q0 = 10.5;
    let rep = sav_bdf1_step(&ac, &cfg(Scheme::SavBdf1), &state(vec![], vec![], Some(q0))).unwrap();
    let (p, q) = dac.sav_bdf1(dt, c0, &dp, q0);
    push("sav-bdf1 allen-cahn", rep.clone(), &p, &[q], &[rep.state.q.unwrap()]);

    let rep = sav_cn_step(&ac, &cfg(Scheme::SavCn), &state(vec![], vec![], Some(q0))).unwrap();
    let (p, q) = dac.sav_cn(dt, c0, &dp, &dq, q0);
    push("sav-cn allen-cahn", rep.clone(), &p, &[q], &[rep.state.q.unwrap()]);

    let rep = rsav_cn_step(&ac, &cfg(Scheme::RsavCn), &state(vec![], vec![], Some(q0))).unwrap();
    let (p, q, qt, xi) = dac.rsav_cn(dt, c0, eta, &dp, &dq, q0);
    let got = [
        rep.state.q.unwrap(),
        rep.diagnostics.q_tilde.unwrap(),
        rep.diagnostics.xi0.unwrap(),
    ];
    push("rsav-cn allen-cahn", rep.clone(), &p, &[q, qt, xi], &got);

    let rep = mcsav_bdf1_step(&two, &cfg(Scheme::McsavBdf1), &state(vec![1.02, 0.97], vec![0.99, 1.01], None)).unwrap();
    let (p, r) = dtwo.csav_bdf1(dt, alpha, true, &dp, &[1.02, 0.97]);
    push("mcsav-bdf1 two-term", rep.clone(), &p, &r, &rep.state.r);

    let rep = mcsav_cn_step(&two, &cfg(Scheme::McsavCn), &state(vec![1.02, 0.97], vec![0.99, 1.01], None)).unwrap();
    let (p, r) = dtwo.csav_cn(dt, alpha, true, &dp, &dq, &[1.02, 0.97], &[0.99, 1.01]);
    push("mcsav-cn two-term", rep.clone(), &p, &r, &rep.state.r);

    let ch = build_cahn_hilliard(0.3, 0.5, 2.0, &g).unwrap();
    let dch = DenseProblem::cahn_hilliard(&g, 0.3, 0.5, 2.0);
    let rep = csav_cn_step(&ch, &cfg(Scheme::CsavCn), &state(vec![1.02], vec![0.99], None)).unwrap();
    let (p, r) = dch.csav_cn(dt, alpha, false, &dp, &dq, &[1.02], &[0.99]);
    push("csav-cn cahn-hilliard", rep.clone(), &p, &r, &rep.state.r);

    let rep = rsav_cn_step(&ch, &cfg(Scheme::RsavCn), &state(vec![], vec![], Some(q0))).unwrap();
    let (p, q, _, _) = dch.rsav_cn(dt, c0, eta, &dp, &dq, q0);
    push("rsav-cn cahn-hilliard", rep.clone(), &p, &[q], &[rep.state.q.unwrap()]);

    let db = build_diblock(0.3, 0.5, 5.0, 0.1, 2.0, &g).unwrap();
    let ddb = DenseProblem::diblock(&g, 0.3, 0.5, 5.0, 0.1, 2.0);
    let rep = csav_cn_step(&db, &cfg(Scheme::CsavCn), &state(vec![1.02], vec![0.99], None)).unwrap();
    let (p, r) = ddb.csav_cn(dt, alpha, false, &dp, &dq, &[1.02], &[0.99]);
    push("csav-cn diblock", rep.clone(), &p, &r, &rep.state.r);

    let rep = csav_bdf1_step(&db, &cfg(Scheme::CsavBdf1), &state(vec![1.02], vec![0.99], None)).unwrap();
    let (p, r) = ddb.csav_bdf1(dt, alpha, false, &dp, &[1.02]);
    push("csav-bdf1 diblock", rep.clone(), &p, &r, &rep.state.r);

    out
}
