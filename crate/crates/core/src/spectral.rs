//! Periodic spectral solver for the time-harmonic Biot system with a Gaussian
//! fluid source.
//!
//! Fields live on an `n x n` periodic grid of side `L`, stored row-major with
//! the x index outer (`ix * n + iy`). Node `i` sits at `(i - n/2) * L / n`, so
//! the box centre is a grid node.

use std::sync::Arc;

use num_complex::Complex;
use num_traits::Float;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::biot::{compute_coefficients, FrequencySpec, PoroelasticParams};
use crate::error::{Error, Result};
use crate::scalar::SpectralScalar;

/// Periodic square grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec<T> {
    /// Box side length.
    pub side: T,
    /// Points per axis.
    pub n: usize,
}

impl<T: SpectralScalar> GridSpec<T> {
    pub fn new(side: T, n: usize) -> Result<Self> {
        let g = Self { side, n };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.side > T::zero()) || !self.side.is_finite() {
            return Err(Error::InvalidGrid(format!("side {} must be positive", self.side)));
        }
        if self.n < 64 || self.n % 2 != 0 {
            return Err(Error::InvalidGrid(format!("n = {} must be even and at least 64", self.n)));
        }
        Ok(())
    }

    pub fn spacing(&self) -> T {
        self.side / T::from_count(self.n)
    }

    /// Coordinate of node `i` along either axis.
    pub fn coordinate(&self, i: usize) -> T {
        (T::from_count(i) - T::from_count(self.n / 2)) * self.spacing()
    }

    /// Signed angular wavenumber of FFT bin `i`; the Nyquist bin is negative.
    pub fn wavenumber(&self, i: usize) -> T {
        let base = T::TAU() / self.side;
        if i < self.n / 2 {
            base * T::from_count(i)
        } else {
            -base * T::from_count(self.n - i)
        }
    }

    /// Total number of nodes.
    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}

/// Square sampling window centred on the source.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec<T> {
    pub side: T,
    /// Samples per axis.
    pub samples: usize,
}

impl<T: SpectralScalar> Default for WindowSpec<T> {
    fn default() -> Self {
        Self { side: T::lit(5.0), samples: 64 }
    }
}

/// Gaussian fluid source `D exp(-decay |x - center|^2)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec<T> {
    pub amplitude: T,
    pub decay: T,
    pub center: [T; 2],
}

impl<T: SpectralScalar> SourceSpec<T> {
    pub fn new(amplitude: T, decay: T, center: [T; 2]) -> Result<Self> {
        if amplitude == T::zero() || !amplitude.is_finite() {
            return Err(Error::InvalidParams("source amplitude must be finite and non-zero".into()));
        }
        if !(decay > T::zero()) {
            return Err(Error::InvalidParams("source decay must be positive".into()));
        }
        Ok(Self { amplitude, decay, center })
    }

    /// Nominal source at the origin.
    pub fn nominal() -> Self {
        Self { amplitude: T::lit(5.97e5), decay: T::lit(187.52), center: [T::zero(); 2] }
    }

    /// Gaussian value at a point.
    pub fn delta_at(&self, x: T, y: T) -> T {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        self.amplitude * (-self.decay * (dx * dx + dy * dy)).exp()
    }
}

/// How the scalar Gaussian enters the pressure equation source.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum FluidSource {
    /// `d(delta)/dx`, aligned with the x-directed solid source.
    #[default]
    #[serde(rename = "dx")]
    Dx,
    /// `d(delta)/dx + d(delta)/dy`.
    #[serde(rename = "dx+dy")]
    Divergence,
    /// `delta` itself.
    #[serde(rename = "delta")]
    Scalar,
}

/// Source arrays on the full grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceFields<T> {
    pub delta: Vec<T>,
    pub f_ux: Vec<Complex<T>>,
    pub f_p: Vec<T>,
}

/// Largest spacing admitted for a Gaussian of the given decay: four points
/// per e-folding length.
pub fn resolution_limit<T: SpectralScalar>(decay: T) -> T {
    T::lit(0.25) / decay.sqrt()
}

/// Samples the source on the grid. `fluid_coupling` is `rho_f / gamma`.
pub fn synthesize_source<T: SpectralScalar>(
    spec: &SourceSpec<T>,
    grid: &GridSpec<T>,
    fluid_coupling: Complex<T>,
    mode: FluidSource,
) -> Result<SourceFields<T>> {
    grid.validate()?;
    if !(spec.decay > T::zero()) {
        return Err(Error::InvalidParams("source decay must be positive".into()));
    }
    let limit = resolution_limit(spec.decay);
    if grid.spacing() > limit {
        return Err(Error::UnderResolved {
            spacing: grid.spacing().to_f64_lossy(),
            decay: spec.decay.to_f64_lossy(),
            limit: limit.to_f64_lossy(),
        });
    }
    let n = grid.n;
    let mut delta = Vec::with_capacity(grid.len());
    for ix in 0..n {
        let x = grid.coordinate(ix);
        for iy in 0..n {
            delta.push(spec.delta_at(x, grid.coordinate(iy)));
        }
    }
    let f_ux = delta.iter().map(|&d| -fluid_coupling * d).collect();
    let f_p = match mode {
        FluidSource::Scalar => delta.clone(),
        FluidSource::Dx => {
            let ops = SpectralOps::new(grid);
            ops.derivative_real(&delta, &[Derivative::X], None).remove(0)
        }
        FluidSource::Divergence => {
            let ops = SpectralOps::new(grid);
            let mut d = ops.derivative_real(&delta, &[Derivative::X, Derivative::Y], None);
            let dy = d.pop().unwrap_or_default();
            let mut dx = d.pop().unwrap_or_default();
            dx.iter_mut().zip(dy).for_each(|(a, b)| *a += b);
            dx
        }
    };
    Ok(SourceFields { delta, f_ux, f_p })
}

/// Complex displacement and pressure with their sources on the full grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FocalField<T> {
    pub grid: GridSpec<T>,
    pub window: WindowSpec<T>,
    /// Window centre (the source centre).
    pub center: [T; 2],
    pub omega: T,
    pub ux: Vec<Complex<T>>,
    pub uy: Vec<Complex<T>>,
    pub p: Vec<Complex<T>>,
    pub f_ux: Vec<Complex<T>>,
    pub f_p: Vec<Complex<T>>,
}

/// The three unknown fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FieldComponent {
    Ux,
    Uy,
    P,
}

impl FieldComponent {
    pub const ALL: [FieldComponent; 3] = [FieldComponent::Ux, FieldComponent::Uy, FieldComponent::P];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn symbol(self) -> &'static str {
        match self {
            FieldComponent::Ux => "ux",
            FieldComponent::Uy => "uy",
            FieldComponent::P => "p",
        }
    }
}

impl<T: SpectralScalar> FocalField<T> {
    pub fn component(&self, c: FieldComponent) -> &[Complex<T>] {
        match c {
            FieldComponent::Ux => &self.ux,
            FieldComponent::Uy => &self.uy,
            FieldComponent::P => &self.p,
        }
    }

    pub fn component_mut(&mut self, c: FieldComponent) -> &mut Vec<Complex<T>> {
        match c {
            FieldComponent::Ux => &mut self.ux,
            FieldComponent::Uy => &mut self.uy,
            FieldComponent::P => &mut self.p,
        }
    }

    /// Checks array lengths and finiteness.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        let len = self.grid.len();
        for (name, arr) in [
            ("ux", &self.ux),
            ("uy", &self.uy),
            ("p", &self.p),
            ("f_ux", &self.f_ux),
            ("f_p", &self.f_p),
        ] {
            if arr.len() != len {
                return Err(Error::ShapeMismatch(format!("{name} has {} entries, grid has {len}", arr.len())));
            }
            if arr.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidParams(format!("{name} contains non-finite values")));
            }
        }
        Ok(())
    }

    /// True when both fields share grid, window and centre.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.grid == other.grid && self.window == other.window && self.center == other.center
    }

    /// Grid indices of the window samples, x index outer.
    pub fn window_indices(&self) -> Result<Vec<usize>> {
        let (ix, iy) = self.window_axes()?;
        let mut out = Vec::with_capacity(ix.len() * iy.len());
        for &i in &ix {
            for &j in &iy {
                out.push(i * self.grid.n + j);
            }
        }
        Ok(out)
    }

    /// Coordinates of the window samples, in [`Self::window_indices`] order.
    pub fn window_coordinates(&self) -> Result<Vec<[T; 2]>> {
        let (ix, iy) = self.window_axes()?;
        let mut out = Vec::with_capacity(ix.len() * iy.len());
        for &i in &ix {
            for &j in &iy {
                out.push([self.grid.coordinate(i), self.grid.coordinate(j)]);
            }
        }
        Ok(out)
    }

    fn window_axes(&self) -> Result<(Vec<usize>, Vec<usize>)> {
        let w = &self.window;
        if w.samples == 0 || !(w.side > T::zero()) || w.side > self.grid.side {
            return Err(Error::InvalidGrid("window must be non-empty and fit in the box".into()));
        }
        let dx = self.grid.spacing();
        let step = w.side / T::from_count(w.samples) / dx;
        let tol = T::lit(1e-6);
        if Float::abs(step - step.round()) > tol || step.round() < T::one() {
            return Err(Error::InvalidGrid(format!(
                "window step {} is not a whole number of grid cells",
                step
            )));
        }
        let half = T::from_count(self.grid.n / 2);
        let n = self.grid.n as i64;
        let axis = |c: T| -> Result<Vec<usize>> {
            let start = (c - w.side / T::lit(2.0)) / dx + half;
            if Float::abs(start - start.round()) > tol {
                return Err(Error::InvalidGrid("window corner is not a grid node".into()));
            }
            let s = start.round().to_i64().unwrap_or(0);
            let st = step.round().to_i64().unwrap_or(1);
            Ok((0..w.samples as i64).map(|j| (s + j * st).rem_euclid(n) as usize).collect())
        };
        Ok((axis(self.center[0])?, axis(self.center[1])?))
    }
}

/// Options for [`solve_biot_spectral`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions<T> {
    pub fluid_source: FluidSource,
    pub window: WindowSpec<T>,
    /// Largest admitted 1-norm condition number of a wavevector system.
    pub max_condition: f64,
}

impl<T: SpectralScalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self { fluid_source: FluidSource::Dx, window: WindowSpec::default(), max_condition: 1e12 }
    }
}

/// Solves the Biot system mode by mode and returns the fields on the full grid.
pub fn solve_biot_spectral<T: SpectralScalar>(
    params: &PoroelasticParams<T>,
    freq: &FrequencySpec<T>,
    source: &SourceSpec<T>,
    grid: &GridSpec<T>,
    options: &SolverOptions<T>,
) -> Result<FocalField<T>> {
    params.validate()?;
    let co = compute_coefficients(params, freq)?;
    let coupling = co.c * params.rho_f;
    let src = synthesize_source(source, grid, coupling, options.fluid_source)?;
    let ops = SpectralOps::new(grid);
    let n = grid.n;

    let mut fu_hat: Vec<Complex<T>> = src.f_ux.clone();
    ops.forward(&mut fu_hat);
    let mut fp_hat: Vec<Complex<T>> = src.f_p.iter().map(|&v| Complex::new(v, T::zero())).collect();
    ops.forward(&mut fp_hat);

    let zero = Complex::new(T::zero(), T::zero());
    let i = Complex::new(T::zero(), T::one());
    let omega2 = freq.omega * freq.omega;
    let mass = co.b * omega2;
    let cw = co.c / omega2;
    let inv_m = Complex::new(T::one() / params.biot_modulus, T::zero());
    let mu = params.mu;
    let lm = params.lambda + params.mu;

    let mut ux = vec![zero; grid.len()];
    let mut uy = vec![zero; grid.len()];
    let mut p = vec![zero; grid.len()];
    for ix in 0..n {
        for iy in 0..n {
            let idx = ix * n + iy;
            let rhs = [fu_hat[idx], zero, -cw * fp_hat[idx]];
            if ix == 0 && iy == 0 {
                ux[idx] = rhs[0] / mass;
                uy[idx] = rhs[1] / mass;
                p[idx] = rhs[2] / inv_m;
                continue;
            }
            let d1x = i * ops.k_odd[ix];
            let d1y = i * ops.k_odd[iy];
            let dxx = -ops.k[ix] * ops.k[ix];
            let dyy = -ops.k[iy] * ops.k[iy];
            let dxy = -ops.k_odd[ix] * ops.k_odd[iy];
            let lap = dxx + dyy;
            let m = [
                [mass + mu * lap + lm * dxx, Complex::new(lm * dxy, T::zero()), -co.a * d1x],
                [Complex::new(lm * dxy, T::zero()), mass + mu * lap + lm * dyy, -co.a * d1y],
                [co.a * d1x, co.a * d1y, cw * lap + inv_m],
            ];
            let lu = Lu3::factor(m);
            let cond = lu.condition(&m);
            if !(cond <= options.max_condition) {
                return Err(Error::IllConditioned {
                    kx: ops.k[ix].to_f64_lossy(),
                    ky: ops.k[iy].to_f64_lossy(),
                    condition: cond,
                });
            }
            let x = lu.solve(rhs);
            ux[idx] = x[0];
            uy[idx] = x[1];
            p[idx] = x[2];
        }
    }
    ops.inverse(&mut ux);
    ops.inverse(&mut uy);
    ops.inverse(&mut p);

    let field = FocalField {
        grid: *grid,
        window: options.window,
        center: source.center,
        omega: freq.omega,
        ux,
        uy,
        p,
        f_ux: src.f_ux,
        f_p: src.f_p.into_iter().map(|v| Complex::new(v, T::zero())).collect(),
    };
    field.window_indices()?;
    Ok(field)
}

/// Relative residual norms of the three scalar equations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualNorms<T> {
    pub momentum_x: T,
    pub momentum_y: T,
    pub pressure: T,
}

impl<T: SpectralScalar> ResidualNorms<T> {
    pub fn max(&self) -> T {
        self.momentum_x.max(self.momentum_y).max(self.pressure)
    }
}

/// Evaluates the Biot equations spectrally on the full grid and returns each
/// residual norm divided by the norm of that equation's largest term.
pub fn pde_residual_check<T: SpectralScalar>(
    field: &FocalField<T>,
    params: &PoroelasticParams<T>,
) -> Result<ResidualNorms<T>> {
    field.validate()?;
    let freq = FrequencySpec::new(field.omega)?;
    let co = compute_coefficients(params, &freq)?;
    let ops = SpectralOps::new(&field.grid);
    let use_ = [Derivative::Value, Derivative::X, Derivative::Y, Derivative::XX, Derivative::YY, Derivative::XY];
    let du = ops.derivative_complex(&field.ux, &use_);
    let dv = ops.derivative_complex(&field.uy, &use_);
    let dp = ops.derivative_complex(&field.p, &use_);
    let (v, x, y, xx, yy, xy) = (0, 1, 2, 3, 4, 5);
    let omega2 = field.omega * field.omega;
    let cw = co.c / omega2;
    let inv_m = T::one() / params.biot_modulus;
    let mu = params.mu;
    let lm = params.lambda + params.mu;
    let len = field.grid.len();

    let mut acc_x = TermAccumulator::new(5);
    let mut acc_y = TermAccumulator::new(5);
    let mut acc_p = TermAccumulator::new(4);
    for j in 0..len {
        acc_x.push(&[
            (du[xx][j] + du[yy][j]) * mu,
            (du[xx][j] + dv[xy][j]) * lm,
            -co.a * dp[x][j],
            co.b * omega2 * du[v][j],
            -field.f_ux[j],
        ]);
        acc_y.push(&[
            (dv[xx][j] + dv[yy][j]) * mu,
            (dv[yy][j] + du[xy][j]) * lm,
            -co.a * dp[y][j],
            co.b * omega2 * dv[v][j],
            Complex::new(T::zero(), T::zero()),
        ]);
        acc_p.push(&[
            cw * (dp[xx][j] + dp[yy][j]),
            dp[v][j] * inv_m,
            co.a * (du[x][j] + dv[y][j]),
            cw * field.f_p[j],
        ]);
    }
    Ok(ResidualNorms {
        momentum_x: acc_x.relative(),
        momentum_y: acc_y.relative(),
        pressure: acc_p.relative(),
    })
}

struct TermAccumulator<T> {
    terms: Vec<T>,
    residual: T,
}

impl<T: SpectralScalar> TermAccumulator<T> {
    fn new(n: usize) -> Self {
        Self { terms: vec![T::zero(); n], residual: T::zero() }
    }

    fn push(&mut self, values: &[Complex<T>]) {
        let mut sum = Complex::new(T::zero(), T::zero());
        for (t, v) in self.terms.iter_mut().zip(values) {
            *t += v.norm_sqr();
            sum += *v;
        }
        self.residual += sum.norm_sqr();
    }

    fn relative(&self) -> T {
        let lead = self.terms.iter().fold(T::zero(), |m, &t| m.max(t));
        if lead == T::zero() {
            T::zero()
        } else {
            (self.residual / lead).sqrt()
        }
    }
}

/// Spectral derivative selector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Derivative {
    Value,
    X,
    Y,
    XX,
    YY,
    XY,
}

impl Derivative {
    pub const ALL: [Derivative; 6] = [
        Derivative::Value,
        Derivative::X,
        Derivative::Y,
        Derivative::XX,
        Derivative::YY,
        Derivative::XY,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// FFT plans and wavenumber tables for one grid.
///
/// Odd-order derivatives use `k_odd`, which zeroes the Nyquist bin so that
/// derivatives of real arrays stay real.
pub(crate) struct SpectralOps<T: SpectralScalar> {
    n: usize,
    fft: Arc<dyn Fft<T>>,
    ifft: Arc<dyn Fft<T>>,
    pub(crate) k: Vec<T>,
    pub(crate) k_odd: Vec<T>,
}

impl<T: SpectralScalar> SpectralOps<T> {
    pub(crate) fn new(grid: &GridSpec<T>) -> Self {
        let n = grid.n;
        let mut planner = FftPlanner::new();
        let k: Vec<T> = (0..n).map(|i| grid.wavenumber(i)).collect();
        let k_odd = k
            .iter()
            .enumerate()
            .map(|(i, &v)| if i == n / 2 { T::zero() } else { v })
            .collect();
        Self { n, fft: planner.plan_fft_forward(n), ifft: planner.plan_fft_inverse(n), k, k_odd }
    }

    fn transform(&self, data: &mut [Complex<T>], plan: &Arc<dyn Fft<T>>) {
        let n = self.n;
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); plan.get_inplace_scratch_len()];
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
        plan.process_with_scratch(data, &mut scratch);
        transpose(data, n);
    }

    pub(crate) fn forward(&self, data: &mut [Complex<T>]) {
        self.transform(data, &self.fft);
    }

    /// Normalised inverse transform.
    pub(crate) fn inverse(&self, data: &mut [Complex<T>]) {
        self.transform(data, &self.ifft);
        let scale = T::one() / T::from_count(self.n * self.n);
        data.iter_mut().for_each(|z| *z = *z * scale);
    }

    pub(crate) fn multiplier(&self, d: Derivative, ix: usize, iy: usize) -> Complex<T> {
        let zero = T::zero();
        match d {
            Derivative::Value => Complex::new(T::one(), zero),
            Derivative::X => Complex::new(zero, self.k_odd[ix]),
            Derivative::Y => Complex::new(zero, self.k_odd[iy]),
            Derivative::XX => Complex::new(-self.k[ix] * self.k[ix], zero),
            Derivative::YY => Complex::new(-self.k[iy] * self.k[iy], zero),
            Derivative::XY => Complex::new(-self.k_odd[ix] * self.k_odd[iy], zero),
        }
    }

    /// Zeroes modes with |k| above the cutoff.
    pub(crate) fn low_pass(&self, spectrum: &mut [Complex<T>], cutoff: T) {
        let n = self.n;
        let c2 = cutoff * cutoff;
        for ix in 0..n {
            for iy in 0..n {
                if self.k[ix] * self.k[ix] + self.k[iy] * self.k[iy] > c2 {
                    spectrum[ix * n + iy] = Complex::new(T::zero(), T::zero());
                }
            }
        }
    }

    /// Derivatives of a complex array from its spectrum.
    fn from_spectrum(&self, spectrum: &[Complex<T>], which: &[Derivative]) -> Vec<Vec<Complex<T>>> {
        let n = self.n;
        which
            .iter()
            .map(|&d| {
                let mut buf: Vec<Complex<T>> = Vec::with_capacity(n * n);
                for ix in 0..n {
                    for iy in 0..n {
                        buf.push(spectrum[ix * n + iy] * self.multiplier(d, ix, iy));
                    }
                }
                self.inverse(&mut buf);
                buf
            })
            .collect()
    }

    pub(crate) fn derivative_complex(&self, data: &[Complex<T>], which: &[Derivative]) -> Vec<Vec<Complex<T>>> {
        let mut spec = data.to_vec();
        self.forward(&mut spec);
        self.from_spectrum(&spec, which)
    }

    /// Derivatives of a real array, optionally low-passed first. The outputs
    /// are real by construction; an all-zero input gives exact zeros.
    pub(crate) fn derivative_real(&self, data: &[T], which: &[Derivative], cutoff: Option<T>) -> Vec<Vec<T>> {
        if data.iter().all(|&v| v == T::zero()) {
            return vec![vec![T::zero(); data.len()]; which.len()];
        }
        let mut spec: Vec<Complex<T>> = data.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.forward(&mut spec);
        if let Some(c) = cutoff {
            self.low_pass(&mut spec, c);
        }
        self.from_spectrum(&spec, which)
            .into_iter()
            .map(|v| v.into_iter().map(|z| z.re).collect())
            .collect()
    }
}

fn transpose<T: Copy>(data: &mut [T], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}

/// LU factorisation of a 3x3 complex matrix with partial pivoting.
struct Lu3<T> {
    lu: [[Complex<T>; 3]; 3],
    perm: [usize; 3],
}

impl<T: SpectralScalar> Lu3<T> {
    fn factor(m: [[Complex<T>; 3]; 3]) -> Self {
        let mut lu = m;
        let mut perm = [0, 1, 2];
        for col in 0..3 {
            let mut piv = col;
            for r in col + 1..3 {
                if lu[r][col].norm_sqr() > lu[piv][col].norm_sqr() {
                    piv = r;
                }
            }
            lu.swap(col, piv);
            perm.swap(col, piv);
            let d = lu[col][col];
            if d.norm_sqr() == T::zero() {
                continue;
            }
            for r in col + 1..3 {
                let f = lu[r][col] / d;
                lu[r][col] = f;
                for c in col + 1..3 {
                    let sub = f * lu[col][c];
                    lu[r][c] -= sub;
                }
            }
        }
        Self { lu, perm }
    }

    fn solve(&self, b: [Complex<T>; 3]) -> [Complex<T>; 3] {
        let mut y = [b[self.perm[0]], b[self.perm[1]], b[self.perm[2]]];
        for r in 1..3 {
            for c in 0..r {
                let sub = self.lu[r][c] * y[c];
                y[r] -= sub;
            }
        }
        for r in (0..3).rev() {
            for c in r + 1..3 {
                let sub = self.lu[r][c] * y[c];
                y[r] -= sub;
            }
            y[r] = y[r] / self.lu[r][r];
        }
        y
    }

    /// 1-norm condition number; infinite for a singular factor.
    fn condition(&self, m: &[[Complex<T>; 3]; 3]) -> f64 {
        if self.lu.iter().enumerate().any(|(i, row)| row[i].norm_sqr() == T::zero()) {
            return f64::INFINITY;
        }
        let zero = Complex::new(T::zero(), T::zero());
        let one = Complex::new(T::one(), T::zero());
        let mut norm_a = T::zero();
        let mut norm_inv = T::zero();
        for c in 0..3 {
            let col_a = (0..3).fold(T::zero(), |s, r| s + m[r][c].norm());
            norm_a = norm_a.max(col_a);
            let mut e = [zero; 3];
            e[c] = one;
            let x = self.solve(e);
            norm_inv = norm_inv.max(x.iter().fold(T::zero(), |s, z| s + z.norm()));
        }
        (norm_a * norm_inv).to_f64_lossy()
    }
}
