//! Uniform periodic grids, spectral transforms and diagonal operators.
//!
//! Field layout is row-major with `x` varying fastest: the sample at node
//! `(i, j)` (coordinates `x_i = i*hx`, `y_j = j*hy`) lives at `j*nx + i`.
//! Spectral arrays use the same layout and the standard FFT ordering along
//! each axis, so index `m` maps to the wavenumber `2*pi/L * m` for
//! `m < N/2` and `2*pi/L * (m - N)` otherwise. The Nyquist mode is therefore
//! `-N/2`.
//!
//! First derivatives drop the Nyquist mode (its `i*k` multiplier would make
//! a real field complex). Second-order symbols such as `|k|^2` keep it.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::GridError;
use crate::numeric::NeumaierSum;

/// Relative size of the imaginary residue tolerated when converting an
/// inverse transform back to a real field.
pub const IMAG_RESIDUE_TOL: f64 = 1e-10;

pub struct PeriodicGrid {
    lx: f64,
    ly: f64,
    nx: usize,
    ny: usize,
    kx: Vec<f64>,
    ky: Vec<f64>,
    dkx: Vec<f64>,
    dky: Vec<f64>,
    fft_x: Arc<dyn Fft<f64>>,
    ifft_x: Arc<dyn Fft<f64>>,
    fft_y: Arc<dyn Fft<f64>>,
    ifft_y: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for PeriodicGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PeriodicGrid")
            .field("lx", &self.lx)
            .field("ly", &self.ly)
            .field("nx", &self.nx)
            .field("ny", &self.ny)
            .finish()
    }
}

impl PartialEq for PeriodicGrid {
    fn eq(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.lx == other.lx && self.ly == other.ly
    }
}

fn wavenumbers(n: usize, length: f64) -> (Vec<f64>, Vec<f64>) {
    let scale = 2.0 * std::f64::consts::PI / length;
    let full: Vec<f64> = (0..n)
        .map(|m| {
            if m < n / 2 {
                scale * m as f64
            } else {
                scale * (m as f64 - n as f64)
            }
        })
        .collect();
    let mut deriv = full.clone();
    deriv[n / 2] = 0.0;
    (full, deriv)
}

/// Builds a periodic grid on `[0, lx) x [0, ly)` with `nx x ny` nodes.
pub fn make_grid(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Arc<PeriodicGrid>, GridError> {
    PeriodicGrid::new(lx, ly, nx, ny)
}

impl PeriodicGrid {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Arc<Self>, GridError> {
        for (name, n) in [("nx", nx), ("ny", ny)] {
            if n < 4 || n % 2 != 0 {
                return Err(GridError::Resolution { axis: name, n });
            }
        }
        for (name, l) in [("lx", lx), ("ly", ly)] {
            if !(l.is_finite() && l > 0.0) {
                return Err(GridError::Length { axis: name, length: l });
            }
        }
        let (kx, dkx) = wavenumbers(nx, lx);
        let (ky, dky) = wavenumbers(ny, ly);
        let mut planner = FftPlanner::new();
        Ok(Arc::new(Self {
            lx,
            ly,
            nx,
            ny,
            kx,
            ky,
            dkx,
            dky,
            fft_x: planner.plan_fft_forward(nx),
            ifft_x: planner.plan_fft_inverse(nx),
            fft_y: planner.plan_fft_forward(ny),
            ifft_y: planner.plan_fft_inverse(ny),
        }))
    }

    pub fn lx(&self) -> f64 {
        self.lx
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn hx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn hy(&self) -> f64 {
        self.ly / self.ny as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.hx() * self.hy()
    }

    pub fn area(&self) -> f64 {
        self.lx * self.ly
    }

    /// Number of grid nodes.
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx()
    }

    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy()
    }

    /// Wavenumbers along x in FFT order.
    pub fn kx(&self) -> &[f64] {
        &self.kx
    }

    pub fn ky(&self) -> &[f64] {
        &self.ky
    }

    /// Wavenumbers used for first derivatives (Nyquist entry zeroed).
    pub fn deriv_kx(&self) -> &[f64] {
        &self.dkx
    }

    pub fn deriv_ky(&self) -> &[f64] {
        &self.dky
    }

    /// `|k|^2` at spectral index `idx`.
    pub fn k2_at(&self, idx: usize) -> f64 {
        let (i, j) = (idx % self.nx, idx / self.nx);
        self.kx[i] * self.kx[i] + self.ky[j] * self.ky[j]
    }

    /// Unnormalized forward DFT of a real array.
    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        assert_eq!(values.len(), self.len(), "field length does not match grid");
        let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, true);
        data
    }

    /// Forward DFT of complex data in place.
    pub fn forward_complex(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        self.transform(data, true);
    }

    /// Normalized inverse DFT in place.
    pub fn inverse_complex(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.len());
        self.transform(data, false);
        let norm = 1.0 / self.len() as f64;
        for z in data.iter_mut() {
            *z *= norm;
        }
    }

    /// Normalized inverse DFT returning the real part. The imaginary residue
    /// is checked against [`IMAG_RESIDUE_TOL`] in debug builds.
    pub fn inverse_real(&self, mut data: Vec<Complex64>) -> Vec<f64> {
        self.inverse_complex(&mut data);
        debug_assert!(
            imag_residue(&data) <= IMAG_RESIDUE_TOL,
            "imaginary residue {} after inverse transform",
            imag_residue(&data)
        );
        data.into_iter().map(|z| z.re).collect()
    }

    /// Checked variant of [`inverse_real`](Self::inverse_real).
    pub fn try_inverse_real(&self, mut data: Vec<Complex64>) -> Result<Vec<f64>, GridError> {
        self.inverse_complex(&mut data);
        let residue = imag_residue(&data);
        if residue > IMAG_RESIDUE_TOL {
            return Err(GridError::ImaginaryResidue { residue });
        }
        Ok(data.into_iter().map(|z| z.re).collect())
    }

    fn transform(&self, data: &mut [Complex64], forward: bool) {
        let (fx, fy) = if forward {
            (&self.fft_x, &self.fft_y)
        } else {
            (&self.ifft_x, &self.ifft_y)
        };
        let mut scratch = vec![Complex64::default(); fx.get_inplace_scratch_len().max(fy.get_inplace_scratch_len())];
        // rows are contiguous
        for row in data.chunks_exact_mut(self.nx) {
            fx.process_with_scratch(row, &mut scratch);
        }
        let mut column = vec![Complex64::default(); self.ny];
        for i in 0..self.nx {
            for (j, c) in column.iter_mut().enumerate() {
                *c = data[j * self.nx + i];
            }
            fy.process_with_scratch(&mut column, &mut scratch);
            for (j, c) in column.iter().enumerate() {
                data[j * self.nx + i] = *c;
            }
        }
    }

    /// Zeroes every mode outside the central two thirds of each axis.
    pub fn dealias_two_thirds(&self, spectrum: &mut [Complex64]) {
        let cut_x = self.nx as f64 / 3.0;
        let cut_y = self.ny as f64 / 3.0;
        for j in 0..self.ny {
            let my = signed_index(j, self.ny).abs() as f64;
            for i in 0..self.nx {
                let mx = signed_index(i, self.nx).abs() as f64;
                if mx > cut_x || my > cut_y {
                    spectrum[j * self.nx + i] = Complex64::default();
                }
            }
        }
    }
}

fn signed_index(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

fn imag_residue(data: &[Complex64]) -> f64 {
    let (max_re, max_im) = data
        .iter()
        .fold((0.0f64, 0.0f64), |(r, i), z| (r.max(z.re.abs()), i.max(z.im.abs())));
    max_im / max_re.max(1.0)
}

/// Real samples of a function on a periodic grid.
#[derive(Clone)]
pub struct ScalarField {
    grid: Arc<PeriodicGrid>,
    values: Vec<f64>,
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ScalarField")
            .field("grid", &self.grid)
            .field("len", &self.values.len())
            .finish()
    }
}

impl PartialEq for ScalarField {
    fn eq(&self, other: &Self) -> bool {
        *self.grid == *other.grid && self.values == other.values
    }
}

impl ScalarField {
    pub fn zeros(grid: &Arc<PeriodicGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Arc<PeriodicGrid>, c: f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![c; grid.len()],
        }
    }

    pub fn from_values(grid: &Arc<PeriodicGrid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::FieldLength {
                expected: grid.len(),
                found: values.len(),
            });
        }
        Ok(Self {
            grid: Arc::clone(grid),
            values,
        })
    }

    /// Samples `f(x, y)` at every node.
    pub fn from_fn(grid: &Arc<PeriodicGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny() {
            let y = grid.y(j);
            for i in 0..grid.nx() {
                values.push(f(grid.x(i), y));
            }
        }
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn same_grid(&self, other: &ScalarField) -> Result<(), GridError> {
        check_grids(&self.grid, &other.grid)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `a*self + b*other`.
    pub fn lin_comb(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self, GridError> {
        self.same_grid(other)?;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&u, &v)| a * u + b * v)
                .collect(),
        })
    }

    pub fn sub(&self, other: &ScalarField) -> Result<Self, GridError> {
        self.lin_comb(1.0, other, -1.0)
    }

    pub fn add(&self, other: &ScalarField) -> Result<Self, GridError> {
        self.lin_comb(1.0, other, 1.0)
    }

    pub fn scale(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_spectral(&self) -> Vec<Complex64> {
        self.grid.forward(&self.values)
    }

    pub fn from_spectral(grid: &Arc<PeriodicGrid>, spectrum: Vec<Complex64>) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: grid.inverse_real(spectrum),
        }
    }
}

fn check_grids(a: &Arc<PeriodicGrid>, b: &Arc<PeriodicGrid>) -> Result<(), GridError> {
    if Arc::ptr_eq(a, b) || **a == **b {
        Ok(())
    } else {
        Err(GridError::Mismatch)
    }
}

/// Two-component field, same layout as [`ScalarField`].
#[derive(Clone, Debug)]
pub struct VectorField {
    pub x: ScalarField,
    pub y: ScalarField,
}

impl VectorField {
    pub fn new(x: ScalarField, y: ScalarField) -> Result<Self, GridError> {
        x.same_grid(&y)?;
        Ok(Self { x, y })
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        self.x.grid()
    }

    /// Pointwise `w * v`.
    pub fn scaled_by(&self, w: &ScalarField) -> Result<Self, GridError> {
        w.same_grid(&self.x)?;
        let mul = |c: &ScalarField| {
            let values = c.values.iter().zip(&w.values).map(|(a, b)| a * b).collect();
            ScalarField {
                grid: Arc::clone(&c.grid),
                values,
            }
        };
        Ok(Self {
            x: mul(&self.x),
            y: mul(&self.y),
        })
    }

    /// Pointwise `|v|^2`.
    pub fn norm_sqr(&self) -> ScalarField {
        let values = self
            .x
            .values
            .iter()
            .zip(&self.y.values)
            .map(|(a, b)| a * a + b * b)
            .collect();
        ScalarField {
            grid: Arc::clone(self.grid()),
            values,
        }
    }
}

/// Real Fourier multiplier over the wavenumber lattice.
#[derive(Clone)]
pub struct SpectralSymbol {
    grid: Arc<PeriodicGrid>,
    values: Vec<f64>,
}

impl fmt::Debug for SpectralSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralSymbol")
            .field("grid", &self.grid)
            .field("at_zero", &self.values[0])
            .finish()
    }
}

impl SpectralSymbol {
    /// Evaluates `f(kx, ky)` over the lattice.
    pub fn from_fn(grid: &Arc<PeriodicGrid>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &ky in grid.ky() {
            for &kx in grid.kx() {
                values.push(f(kx, ky));
            }
        }
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    pub fn constant(grid: &Arc<PeriodicGrid>, c: f64) -> Self {
        Self {
            grid: Arc::clone(grid),
            values: vec![c; grid.len()],
        }
    }

    pub fn zero(grid: &Arc<PeriodicGrid>) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Symbol of `-Δ`: `|k|^2`.
    pub fn neg_laplacian(grid: &Arc<PeriodicGrid>) -> Self {
        Self::from_fn(grid, |kx, ky| kx * kx + ky * ky)
    }

    /// Symbol of `Δ²`: `|k|^4`.
    pub fn bilaplacian(grid: &Arc<PeriodicGrid>) -> Self {
        Self::from_fn(grid, |kx, ky| (kx * kx + ky * ky).powi(2))
    }

    /// Symbol of `(a0 + Δ)²`: `(a0 - |k|^2)^2`.
    pub fn shifted_laplacian_squared(grid: &Arc<PeriodicGrid>, a0: f64) -> Self {
        Self::from_fn(grid, |kx, ky| (a0 - (kx * kx + ky * ky)).powi(2))
    }

    /// Symbol of `-∇·∇` built from the first-derivative wavenumbers, so it
    /// vanishes on the Nyquist lines exactly like `divergence(gradient(.))`.
    pub fn neg_div_grad(grid: &Arc<PeriodicGrid>) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for &ky in grid.deriv_ky() {
            for &kx in grid.deriv_kx() {
                values.push(kx * kx + ky * ky);
            }
        }
        Self {
            grid: Arc::clone(grid),
            values,
        }
    }

    /// Inverse of `-Δ` on the mean-zero subspace (zero at `k = 0`).
    pub fn inverse_neg_laplacian(grid: &Arc<PeriodicGrid>) -> Self {
        Self::from_fn(grid, |kx, ky| {
            let k2 = kx * kx + ky * ky;
            if k2 == 0.0 {
                0.0
            } else {
                1.0 / k2
            }
        })
    }

    pub fn grid(&self) -> &Arc<PeriodicGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn at_zero(&self) -> f64 {
        self.values[0]
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().map(|v| a * v).collect(),
        }
    }

    pub fn add(&self, other: &SpectralSymbol) -> Result<Self, GridError> {
        check_grids(&self.grid, &other.grid)?;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn mul(&self, other: &SpectralSymbol) -> Result<Self, GridError> {
        check_grids(&self.grid, &other.grid)?;
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
        })
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Multiplies a spectrum in place.
    pub fn apply_in_place(&self, spectrum: &mut [Complex64]) {
        for (z, s) in spectrum.iter_mut().zip(&self.values) {
            *z *= *s;
        }
    }
}

/// `∫ u v dΩ` by the periodic trapezoid rule.
pub fn inner_product(u: &ScalarField, v: &ScalarField) -> Result<f64, GridError> {
    u.same_grid(v)?;
    let mut acc = NeumaierSum::default();
    for (a, b) in u.values.iter().zip(&v.values) {
        acc.add(a * b);
    }
    Ok(acc.total() * u.grid.cell_area())
}

/// Inverse transform of `sym ⊙ û`.
pub fn apply_symbol(sym: &SpectralSymbol, u: &ScalarField) -> Result<ScalarField, GridError> {
    check_grids(&sym.grid, &u.grid)?;
    let mut spectrum = u.to_spectral();
    sym.apply_in_place(&mut spectrum);
    Ok(ScalarField::from_spectral(&u.grid, spectrum))
}

/// Solves `(I + A) u = rhs` where `A` is diagonal with symbol `shift`.
pub fn solve_shifted_diagonal(shift: &SpectralSymbol, rhs: &ScalarField) -> Result<ScalarField, GridError> {
    check_grids(&shift.grid, &rhs.grid)?;
    let mut spectrum = rhs.to_spectral();
    divide_shifted(shift.values(), &mut spectrum)?;
    Ok(ScalarField::from_spectral(&rhs.grid, spectrum))
}

/// `û(k) /= 1 + shift(k)` with a singularity check.
pub(crate) fn divide_shifted(shift: &[f64], spectrum: &mut [Complex64]) -> Result<(), GridError> {
    for (idx, (z, s)) in spectrum.iter_mut().zip(shift).enumerate() {
        let den = 1.0 + s;
        if den == 0.0 || !den.is_finite() {
            return Err(GridError::Singular { index: idx });
        }
        *z /= den;
    }
    Ok(())
}

/// Spectral gradient.
pub fn gradient(u: &ScalarField) -> VectorField {
    let grid = u.grid();
    let spectrum = u.to_spectral();
    let mut sx = spectrum.clone();
    let mut sy = spectrum;
    let i_unit = Complex64::new(0.0, 1.0);
    for j in 0..grid.ny() {
        let ky = grid.deriv_ky()[j];
        for i in 0..grid.nx() {
            let idx = j * grid.nx() + i;
            sx[idx] *= i_unit * grid.deriv_kx()[i];
            sy[idx] *= i_unit * ky;
        }
    }
    VectorField {
        x: ScalarField::from_spectral(grid, sx),
        y: ScalarField::from_spectral(grid, sy),
    }
}

/// Spectral divergence, returned in spectral form.
pub(crate) fn divergence_spectrum(v: &VectorField) -> Vec<Complex64> {
    let grid = v.grid();
    let sx = v.x.to_spectral();
    let sy = v.y.to_spectral();
    let i_unit = Complex64::new(0.0, 1.0);
    let mut out = vec![Complex64::default(); grid.len()];
    for j in 0..grid.ny() {
        let ky = grid.deriv_ky()[j];
        for i in 0..grid.nx() {
            let idx = j * grid.nx() + i;
            out[idx] = i_unit * (sx[idx] * grid.deriv_kx()[i] + sy[idx] * ky);
        }
    }
    out
}

pub fn divergence(v: &VectorField) -> ScalarField {
    ScalarField::from_spectral(v.grid(), divergence_spectrum(v))
}

pub fn laplacian(u: &ScalarField) -> ScalarField {
    let grid = u.grid();
    let mut spectrum = u.to_spectral();
    for (idx, z) in spectrum.iter_mut().enumerate() {
        *z *= -grid.k2_at(idx);
    }
    ScalarField::from_spectral(grid, spectrum)
}

pub fn integrate(u: &ScalarField) -> f64 {
    let mut acc = NeumaierSum::default();
    for v in &u.values {
        acc.add(*v);
    }
    acc.total() * u.grid.cell_area()
}

pub fn mean(u: &ScalarField) -> f64 {
    integrate(u) / u.grid.area()
}

pub fn l2_norm(u: &ScalarField) -> f64 {
    inner_product(u, u).expect("same field").sqrt()
}

/// `∫ u (S u) dΩ` for a real symbol, from the spectrum of `u`.
pub(crate) fn spectral_quadratic(grid: &PeriodicGrid, sym: &[f64], a: &[Complex64]) -> f64 {
    let mut acc = NeumaierSum::default();
    for (x, s) in a.iter().zip(sym) {
        acc.add(s * x.norm_sqr());
    }
    acc.total() * grid.cell_area() / grid.len() as f64
}

/// Quadratic form `∫ u (S u) dΩ` evaluated in symbol space.
pub fn quadratic_form(sym: &SpectralSymbol, u: &ScalarField) -> Result<f64, GridError> {
    check_grids(&sym.grid, &u.grid)?;
    Ok(spectral_quadratic(&u.grid, sym.values(), &u.to_spectral()))
}
