//! Factorised residuals `l_k = sum_l f_kl(theta, omega) d_kl` and their
//! Gram-matrix evaluation.
//!
//! Components, in order: Re and Im of the x momentum residual, Re and Im of
//! the y momentum residual, Re and Im of the pressure residual.

use serde::{Deserialize, Serialize};

use crate::biot::{jacobian_unchecked, CoefficientJacobian, FrequencySpec, PoroelasticParams, Quantity, UNKNOWN_COUNT};
use crate::error::{Error, Result};
use crate::fields::{DerivativeBundle, Part, SourceTerm};
use crate::scalar::{Scalar, SpectralScalar};
use crate::spectral::{Derivative, FieldComponent};

/// Number of loss components.
pub const COMPONENT_COUNT: usize = 6;

/// Parameter-dependent factor of a term, before sign and frequency power.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Coefficient {
    Mu,
    Lambda,
    LambdaPlusMu,
    ReA,
    ImA,
    ReB,
    ImB,
    ReC,
    ImC,
    InvM,
    /// Unit coefficient of a known source term.
    One,
}

/// `sign * omega^omega_power * coefficient`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoefficientSpec {
    pub coefficient: Coefficient,
    pub sign: i8,
    pub omega_power: i32,
}

/// One array entering a data term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DataRef {
    Field(FieldComponent, Part, Derivative),
    Source(SourceTerm, Part),
    /// An identically zero source (the y solid force).
    Zero,
}

/// A coefficient and the signed sum of arrays it multiplies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorTerm {
    pub coefficient: CoefficientSpec,
    pub data: Vec<(i8, DataRef)>,
}

/// How the elastic operator is split between the Lame coefficients.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grouping {
    /// `mu lap(u) + (lambda + mu) grad(div u)`.
    #[default]
    ShearAndSum,
    /// `mu (lap(u) + grad(div u)) + lambda grad(div u)`.
    ShearAndLambda,
}

/// Term lists of the six components at a fixed frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorTable<T> {
    pub omega: T,
    pub grouping: Grouping,
    pub components: Vec<Vec<FactorTerm>>,
}

fn coef(coefficient: Coefficient, sign: i8, omega_power: i32) -> CoefficientSpec {
    CoefficientSpec { coefficient, sign, omega_power }
}

fn fld(c: FieldComponent, p: Part, d: Derivative) -> (i8, DataRef) {
    (1, DataRef::Field(c, p, d))
}

fn term(coefficient: CoefficientSpec, data: Vec<(i8, DataRef)>) -> FactorTerm {
    FactorTerm { coefficient, data }
}

/// Table with the default grouping.
pub fn build_factor_table<T: Scalar>(freq: &FrequencySpec<T>) -> FactorTable<T> {
    build_factor_table_with(freq, Grouping::default())
}

pub fn build_factor_table_with<T: Scalar>(freq: &FrequencySpec<T>, grouping: Grouping) -> FactorTable<T> {
    use Coefficient as C;
    use Derivative as D;
    use FieldComponent as F;
    let mut components = Vec::with_capacity(COMPONENT_COUNT);

    // Momentum: x then y, real part then imaginary part.
    for (u, v, d1, dd, dcross, src) in [
        (F::Ux, F::Uy, D::X, D::XX, D::XY, Some(SourceTerm::SolidX)),
        (F::Uy, F::Ux, D::Y, D::YY, D::XY, None),
    ] {
        for part in Part::ALL {
            let other = match part {
                Part::Re => Part::Im,
                Part::Im => Part::Re,
            };
            let lap = vec![fld(u, part, D::XX), fld(u, part, D::YY)];
            let grad_div = vec![fld(u, part, dd), fld(v, part, dcross)];
            let mut terms = match grouping {
                Grouping::ShearAndSum => vec![term(coef(C::Mu, 1, 0), lap), term(coef(C::LambdaPlusMu, 1, 0), grad_div)],
                Grouping::ShearAndLambda => {
                    let mut both = lap;
                    both.extend(grad_div.iter().copied());
                    vec![term(coef(C::Mu, 1, 0), both), term(coef(C::Lambda, 1, 0), grad_div)]
                }
            };
            // -a dp, a = Re a + i Im a
            let (im_a_sign, im_b_sign) = match part {
                Part::Re => (1, -1),
                Part::Im => (-1, 1),
            };
            terms.push(term(coef(C::ReA, -1, 0), vec![fld(F::P, part, d1)]));
            terms.push(term(coef(C::ImA, im_a_sign, 0), vec![fld(F::P, other, d1)]));
            terms.push(term(coef(C::ReB, 1, 2), vec![fld(u, part, D::Value)]));
            terms.push(term(coef(C::ImB, im_b_sign, 2), vec![fld(u, other, D::Value)]));
            let source = match src {
                Some(s) => (-1, DataRef::Source(s, part)),
                None => (-1, DataRef::Zero),
            };
            terms.push(term(coef(C::One, 1, 0), vec![source]));
            components.push(terms);
        }
    }

    // Pressure: real part then imaginary part.
    for part in Part::ALL {
        let other = match part {
            Part::Re => Part::Im,
            Part::Im => Part::Re,
        };
        let im_sign = match part {
            Part::Re => -1,
            Part::Im => 1,
        };
        let div = |p: Part| vec![fld(F::Ux, p, D::X), fld(F::Uy, p, D::Y)];
        let lap = |p: Part| vec![fld(F::P, p, D::XX), fld(F::P, p, D::YY)];
        components.push(vec![
            term(coef(C::ReA, 1, 0), div(part)),
            term(coef(C::ImA, im_sign, 0), div(other)),
            term(coef(C::ReC, 1, -2), lap(part)),
            term(coef(C::ImC, im_sign, -2), lap(other)),
            term(coef(C::InvM, 1, 0), vec![fld(F::P, part, D::Value)]),
            term(coef(C::ReC, 1, -2), vec![(1, DataRef::Source(SourceTerm::Fluid, part))]),
            term(coef(C::ImC, im_sign, -2), vec![(1, DataRef::Source(SourceTerm::Fluid, other))]),
        ]);
    }
    FactorTable { omega: freq.omega, grouping, components }
}

impl<T: Scalar> FactorTable<T> {
    /// Coefficient values of component `k`.
    pub fn coefficient_vector(&self, k: usize, jac: &CoefficientJacobian<T>) -> Vec<T> {
        self.components[k]
            .iter()
            .map(|t| self.scale(&t.coefficient) * base_value(t.coefficient.coefficient, jac))
            .collect()
    }

    /// Partial derivatives of component `k`'s coefficients, one row per term.
    pub fn coefficient_partials(&self, k: usize, jac: &CoefficientJacobian<T>) -> Vec<[T; UNKNOWN_COUNT]> {
        self.components[k]
            .iter()
            .map(|t| {
                let s = self.scale(&t.coefficient);
                let base = base_partials(t.coefficient.coefficient, jac);
                base.map(|v| s * v)
            })
            .collect()
    }

    fn scale(&self, c: &CoefficientSpec) -> T {
        T::from_i8(c.sign).unwrap_or_else(T::one) * self.omega.powi(c.omega_power)
    }
}

fn base_value<T: Scalar>(c: Coefficient, jac: &CoefficientJacobian<T>) -> T {
    match c {
        Coefficient::One => T::one(),
        Coefficient::LambdaPlusMu => jac.value(Quantity::Mu) + jac.value(Quantity::Lambda),
        other => jac.value(quantity_of(other)),
    }
}

fn base_partials<T: Scalar>(c: Coefficient, jac: &CoefficientJacobian<T>) -> [T; UNKNOWN_COUNT] {
    match c {
        Coefficient::One => [T::zero(); UNKNOWN_COUNT],
        Coefficient::LambdaPlusMu => {
            let (a, b) = (jac.partials[Quantity::Mu.index()], jac.partials[Quantity::Lambda.index()]);
            std::array::from_fn(|n| a[n] + b[n])
        }
        other => jac.partials[quantity_of(other).index()],
    }
}

fn quantity_of(c: Coefficient) -> Quantity {
    match c {
        Coefficient::Mu => Quantity::Mu,
        Coefficient::Lambda => Quantity::Lambda,
        Coefficient::ReA => Quantity::ReA,
        Coefficient::ImA => Quantity::ImA,
        Coefficient::ReB => Quantity::ReB,
        Coefficient::ImB => Quantity::ImB,
        Coefficient::ReC => Quantity::ReC,
        Coefficient::ImC => Quantity::ImC,
        Coefficient::InvM => Quantity::InvM,
        Coefficient::One | Coefficient::LambdaPlusMu => unreachable!("composite coefficient"),
    }
}

/// Precomputed data-term statistics of one component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentGram<T> {
    pub terms: usize,
    /// Row-major `terms x terms` Gram matrix.
    pub gram: Vec<T>,
    /// Row-major upper-triangular `R` with `R^T R = G`, from a Householder QR
    /// of the data matrix.
    pub factor: Vec<T>,
    /// Mean absolute value of each data term over the window.
    pub mean_abs: Vec<T>,
}

impl<T: Scalar> ComponentGram<T> {
    /// `f^T G f`.
    pub fn quadratic_form(&self, f: &[T]) -> T {
        let m = self.terms;
        let mut s = T::zero();
        for l in 0..m {
            for j in 0..m {
                s += f[l] * self.gram[l * m + j] * f[j];
            }
        }
        s
    }

    /// `R f`, the residual in the reduced basis.
    pub fn reduced_residual(&self, f: &[T]) -> Vec<T> {
        let m = self.terms;
        (0..m).map(|r| (r..m).fold(T::zero(), |s, c| s + self.factor[r * m + c] * f[c])).collect()
    }

    /// `||R f||^2`.
    pub fn loss(&self, f: &[T]) -> T {
        self.reduced_residual(f).iter().fold(T::zero(), |s, &v| s + v * v)
    }

    /// Gradient of `||R f||^2` with respect to `f`: `2 R^T R f`.
    pub fn loss_gradient(&self, f: &[T]) -> Vec<T> {
        let m = self.terms;
        let r = self.reduced_residual(f);
        let two = T::lit(2.0);
        (0..m).map(|c| two * (0..=c).fold(T::zero(), |s, row| s + self.factor[row * m + c] * r[row])).collect()
    }
}

/// Gram data for the six components of one region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GramCache<T> {
    pub table: FactorTable<T>,
    pub components: Vec<ComponentGram<T>>,
}

/// Assembles the data terms of every component.
pub fn assemble_data_terms<T: SpectralScalar>(bundle: &DerivativeBundle<T>, table: &FactorTable<T>) -> Vec<Vec<Vec<T>>> {
    let n = bundle.samples();
    table
        .components
        .iter()
        .map(|terms| {
            terms
                .iter()
                .map(|t| {
                    let mut d = vec![T::zero(); n];
                    for &(sign, r) in &t.data {
                        let s = T::from_i8(sign).unwrap_or_else(T::one);
                        let arr = match r {
                            DataRef::Field(c, p, der) => bundle.field(c, p, der),
                            DataRef::Source(src, p) => bundle.source(src, p),
                            DataRef::Zero => continue,
                        };
                        d.iter_mut().zip(arr).for_each(|(a, &b)| *a += s * b);
                    }
                    d
                })
                .collect()
        })
        .collect()
}

/// Builds the Gram matrices, triangular factors and mean magnitudes.
pub fn precompute_gram<T: SpectralScalar>(bundle: &DerivativeBundle<T>, table: &FactorTable<T>) -> Result<GramCache<T>> {
    if table.components.len() != COMPONENT_COUNT {
        return Err(Error::ShapeMismatch(format!("factor table has {} components", table.components.len())));
    }
    let n = bundle.samples();
    if n == 0 {
        return Err(Error::ShapeMismatch("bundle has no samples".into()));
    }
    let data = assemble_data_terms(bundle, table);
    let components = data
        .iter()
        .map(|cols| {
            let m = cols.len();
            let mut gram = vec![T::zero(); m * m];
            for l in 0..m {
                for j in l..m {
                    let s = cols[l].iter().zip(&cols[j]).fold(T::zero(), |s, (&a, &b)| s + a * b);
                    gram[l * m + j] = s;
                    gram[j * m + l] = s;
                }
            }
            let mean_abs = cols
                .iter()
                .map(|c| c.iter().fold(T::zero(), |s, &v| s + num_traits::Float::abs(v)) / T::from_count(n))
                .collect();
            ComponentGram { terms: m, gram, factor: householder_r(cols), mean_abs }
        })
        .collect();
    Ok(GramCache { table: table.clone(), components })
}

/// Upper-triangular factor of a tall matrix given by columns.
fn householder_r<T: Scalar>(cols: &[Vec<T>]) -> Vec<T> {
    let m = cols.len();
    let mut a: Vec<Vec<T>> = cols.to_vec();
    let mut r = vec![T::zero(); m * m];
    let rows = a.first().map_or(0, |c| c.len());
    for j in 0..m.min(rows) {
        let norm = a[j][j..].iter().fold(T::zero(), |s, &v| s + v * v).sqrt();
        if norm > T::zero() {
            let alpha = if a[j][j] > T::zero() { -norm } else { norm };
            let mut v: Vec<T> = a[j][j..].to_vec();
            v[0] -= alpha;
            let vnorm2 = v.iter().fold(T::zero(), |s, &x| s + x * x);
            if vnorm2 > T::zero() {
                for col in a.iter_mut().skip(j) {
                    let dot = v.iter().zip(&col[j..]).fold(T::zero(), |s, (&x, &y)| s + x * y);
                    let f = T::lit(2.0) * dot / vnorm2;
                    col[j..].iter_mut().zip(&v).for_each(|(y, &x)| *y -= f * x);
                }
            }
        }
        for c in j..m {
            r[j * m + c] = a[c][j];
        }
    }
    r
}

/// Unweighted `||l_k||^2` for the six components.
///
/// No domain checks are made, so non-physical parameters evaluate to whatever
/// the coefficient formulas give.
pub fn loss_components<T: Scalar>(params: &PoroelasticParams<T>, cache: &GramCache<T>) -> [T; COMPONENT_COUNT] {
    let jac = jacobian_unchecked(params, cache.table.omega);
    std::array::from_fn(|k| {
        let f = cache.table.coefficient_vector(k, &jac);
        cache.components[k].loss(&f).max(T::zero())
    })
}

/// Gradient of each unweighted component with respect to the six unknowns.
pub fn component_gradients<T: Scalar>(
    params: &PoroelasticParams<T>,
    cache: &GramCache<T>,
) -> [[T; UNKNOWN_COUNT]; COMPONENT_COUNT] {
    let jac = jacobian_unchecked(params, cache.table.omega);
    std::array::from_fn(|k| {
        let f = cache.table.coefficient_vector(k, &jac);
        let df = cache.table.coefficient_partials(k, &jac);
        let g = cache.components[k].loss_gradient(&f);
        std::array::from_fn(|n| g.iter().zip(&df).fold(T::zero(), |s, (&gl, d)| s + gl * d[n]))
    })
}

/// Gradient of `sum_k w_k^2 ||l_k||^2` with respect to the six unknowns.
pub fn loss_gradient<T: Scalar>(
    params: &PoroelasticParams<T>,
    cache: &GramCache<T>,
    weights: &[T; COMPONENT_COUNT],
) -> [T; UNKNOWN_COUNT] {
    let per = component_gradients(params, cache);
    std::array::from_fn(|n| (0..COMPONENT_COUNT).fold(T::zero(), |s, k| s + weights[k] * weights[k] * per[k][n]))
}

/// Largest `f_l^2 G_ll` of component `k`: the energy of its biggest term.
pub fn largest_term_energy<T: Scalar>(params: &PoroelasticParams<T>, cache: &GramCache<T>, k: usize) -> T {
    let jac = jacobian_unchecked(params, cache.table.omega);
    let f = cache.table.coefficient_vector(k, &jac);
    let c = &cache.components[k];
    (0..c.terms).fold(T::zero(), |m, l| m.max(f[l] * f[l] * c.gram[l * c.terms + l]))
}
