//! Poroelastic parameter sets, the derived Biot coefficients and their
//! analytic Jacobian, and the conversion from SI values.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of reconstructed parameters per region.
pub const UNKNOWN_COUNT: usize = 6;

/// The reconstructed parameters, in network output order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unknown {
    Mu,
    Lambda,
    BiotModulus,
    Alpha,
    Phi,
    Kappa,
}

impl Unknown {
    pub const ALL: [Unknown; UNKNOWN_COUNT] = [
        Unknown::Mu,
        Unknown::Lambda,
        Unknown::BiotModulus,
        Unknown::Alpha,
        Unknown::Phi,
        Unknown::Kappa,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Short name used in reports and CSV headers.
    pub fn symbol(self) -> &'static str {
        match self {
            Unknown::Mu => "mu",
            Unknown::Lambda => "lambda",
            Unknown::BiotModulus => "M",
            Unknown::Alpha => "alpha",
            Unknown::Phi => "phi",
            Unknown::Kappa => "kappa",
        }
    }
}

/// Dimensionless parameters of one focal region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoroelasticParams<T> {
    pub mu: T,
    pub lambda: T,
    #[serde(rename = "M", alias = "biot_modulus")]
    pub biot_modulus: T,
    pub alpha: T,
    pub phi: T,
    pub kappa: T,
    pub rho: T,
    pub rho_f: T,
    pub rho_a: T,
}

impl<T: Scalar> PoroelasticParams<T> {
    /// Sandstone with the given permeability, other entries at their nominal
    /// dimensionless values.
    pub fn sandstone(kappa: T) -> Self {
        Self {
            mu: T::one(),
            lambda: T::lit(0.47),
            biot_modulus: T::lit(1.66),
            alpha: T::lit(0.83),
            phi: T::lit(0.195),
            kappa,
            rho: T::lit(2.27),
            rho_f: T::one(),
            rho_a: T::lit(0.117),
        }
    }

    /// High-permeability focal region.
    pub fn sandstone_high_permeability() -> Self {
        Self::sandstone(T::lit(1.5407e-5))
    }

    /// Low-permeability focal region.
    pub fn sandstone_low_permeability() -> Self {
        Self::sandstone(T::lit(2.45e-8))
    }

    /// The six unknowns in [`Unknown::ALL`] order.
    pub fn unknowns(&self) -> [T; UNKNOWN_COUNT] {
        [
            self.mu,
            self.lambda,
            self.biot_modulus,
            self.alpha,
            self.phi,
            self.kappa,
        ]
    }

    /// Copy with the unknowns replaced and the densities kept.
    pub fn with_unknowns(&self, u: [T; UNKNOWN_COUNT]) -> Self {
        Self {
            mu: u[0],
            lambda: u[1],
            biot_modulus: u[2],
            alpha: u[3],
            phi: u[4],
            kappa: u[5],
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks: [(bool, &str); 9] = [
            (self.mu > T::zero(), "mu must be positive"),
            (self.biot_modulus > T::zero(), "M must be positive"),
            (self.kappa > T::zero(), "kappa must be positive"),
            (self.phi > T::zero() && self.phi < T::one(), "phi must lie in (0, 1)"),
            (self.alpha > T::zero() && self.alpha <= T::one(), "alpha must lie in (0, 1]"),
            (self.rho > T::zero(), "rho must be positive"),
            (self.rho_f > T::zero(), "rho_f must be positive"),
            (self.rho_a >= T::zero(), "rho_a must be non-negative"),
            (self.lambda.is_finite(), "lambda must be finite"),
        ];
        for (ok, msg) in checks {
            if !ok {
                return Err(Error::InvalidParams(msg.to_string()));
            }
        }
        Ok(())
    }
}

/// Dimensionless angular frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencySpec<T> {
    pub omega: T,
}

impl<T: Scalar> FrequencySpec<T> {
    pub fn new(omega: T) -> Result<Self> {
        if omega > T::zero() && omega.is_finite() {
            Ok(Self { omega })
        } else {
            Err(Error::InvalidParams(format!("omega must be positive, got {omega}")))
        }
    }

    /// The nominal excitation frequency.
    pub fn nominal() -> Self {
        Self { omega: T::lit(391.0) }
    }
}

/// The complex coefficients entering the Biot system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BiotCoefficients<T> {
    pub gamma: Complex<T>,
    pub a: Complex<T>,
    pub b: Complex<T>,
    pub c: Complex<T>,
}

/// Evaluates gamma, a, b and c for valid parameters.
pub fn compute_coefficients<T: Scalar>(
    params: &PoroelasticParams<T>,
    freq: &FrequencySpec<T>,
) -> Result<BiotCoefficients<T>> {
    if params.kappa <= T::zero() || params.phi <= T::zero() {
        return Err(Error::InvalidParams(
            "kappa and phi must be positive to evaluate gamma".into(),
        ));
    }
    if freq.omega <= T::zero() {
        return Err(Error::InvalidParams("omega must be positive".into()));
    }
    Ok(coefficients_unchecked(params, freq.omega))
}

/// Coefficient formulas without domain checks; non-physical inputs give
/// whatever the arithmetic yields.
pub(crate) fn coefficients_unchecked<T: Scalar>(
    params: &PoroelasticParams<T>,
    omega: T,
) -> BiotCoefficients<T> {
    let phi = params.phi;
    let re = params.rho_a / (phi * phi) + params.rho_f / phi;
    let gamma = Complex::new(re, T::one() / (omega * params.kappa));
    let c = gamma.inv();
    let a = Complex::new(params.alpha, T::zero()) - c * params.rho_f;
    let b = Complex::new(params.rho, T::zero()) - c * (params.rho_f * params.rho_f);
    BiotCoefficients { gamma, a, b, c }
}

/// Real quantities that every factorised residual is linear in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    Mu,
    Lambda,
    ReA,
    ImA,
    ReB,
    ImB,
    ReC,
    ImC,
    InvM,
}

/// Number of [`Quantity`] rows.
pub const QUANTITY_COUNT: usize = 9;

impl Quantity {
    pub const ALL: [Quantity; QUANTITY_COUNT] = [
        Quantity::Mu,
        Quantity::Lambda,
        Quantity::ReA,
        Quantity::ImA,
        Quantity::ReB,
        Quantity::ImB,
        Quantity::ReC,
        Quantity::ImC,
        Quantity::InvM,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Values of the nine quantities and their partial derivatives with respect
/// to the six unknowns (`partials[q][n]`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoefficientJacobian<T> {
    pub values: [T; QUANTITY_COUNT],
    pub partials: [[T; UNKNOWN_COUNT]; QUANTITY_COUNT],
}

impl<T: Scalar> CoefficientJacobian<T> {
    pub fn value(&self, q: Quantity) -> T {
        self.values[q.index()]
    }

    pub fn partial(&self, q: Quantity, n: Unknown) -> T {
        self.partials[q.index()][n.index()]
    }
}

/// Analytic Jacobian of {mu, lambda, Re a, Im a, Re b, Im b, Re c, Im c, 1/M}.
pub fn coefficient_jacobian<T: Scalar>(
    params: &PoroelasticParams<T>,
    freq: &FrequencySpec<T>,
) -> Result<CoefficientJacobian<T>> {
    compute_coefficients(params, freq)?;
    Ok(jacobian_unchecked(params, freq.omega))
}

pub(crate) fn jacobian_unchecked<T: Scalar>(
    params: &PoroelasticParams<T>,
    omega: T,
) -> CoefficientJacobian<T> {
    let co = coefficients_unchecked(params, omega);
    let zero = T::zero();
    let one = T::one();
    let phi = params.phi;
    let kappa = params.kappa;
    let two = T::lit(2.0);

    let dgamma_dphi = Complex::new(
        -two * params.rho_a / (phi * phi * phi) - params.rho_f / (phi * phi),
        zero,
    );
    let dgamma_dkappa = Complex::new(zero, -one / (omega * kappa * kappa));
    let c2 = co.c * co.c;
    let da_dgamma = c2 * params.rho_f;
    let db_dgamma = c2 * (params.rho_f * params.rho_f);
    let dc_dgamma = -c2;

    let mut partials = [[zero; UNKNOWN_COUNT]; QUANTITY_COUNT];
    let (iphi, ikap, ialpha) = (
        Unknown::Phi.index(),
        Unknown::Kappa.index(),
        Unknown::Alpha.index(),
    );
    partials[Quantity::Mu.index()][Unknown::Mu.index()] = one;
    partials[Quantity::Lambda.index()][Unknown::Lambda.index()] = one;
    partials[Quantity::ReA.index()][ialpha] = one;
    for (rows, d) in [
        ((Quantity::ReA, Quantity::ImA), da_dgamma),
        ((Quantity::ReB, Quantity::ImB), db_dgamma),
        ((Quantity::ReC, Quantity::ImC), dc_dgamma),
    ] {
        let dphi = d * dgamma_dphi;
        let dkap = d * dgamma_dkappa;
        partials[rows.0.index()][iphi] = dphi.re;
        partials[rows.1.index()][iphi] = dphi.im;
        partials[rows.0.index()][ikap] = dkap.re;
        partials[rows.1.index()][ikap] = dkap.im;
    }
    let m = params.biot_modulus;
    partials[Quantity::InvM.index()][Unknown::BiotModulus.index()] = -one / (m * m);

    let values = [
        params.mu,
        params.lambda,
        co.a.re,
        co.a.im,
        co.b.re,
        co.b.im,
        co.c.re,
        co.c.im,
        one / m,
    ];
    CoefficientJacobian { values, partials }
}

/// Reference scales for density (kg/m^3), length (m) and stress (Pa).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceScales<T> {
    pub rho_r: T,
    pub ell_r: T,
    pub mu_r: T,
}

impl<T: Scalar> ReferenceScales<T> {
    /// Water density, drained shear wavelength 0.14 m and shear modulus 5.85 GPa.
    pub fn sandstone() -> Self {
        Self {
            rho_r: T::lit(1.0e3),
            ell_r: T::lit(0.14),
            mu_r: T::lit(5.85e9),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.rho_r > T::zero() && self.ell_r > T::zero() && self.mu_r > T::zero() {
            Ok(())
        } else {
            Err(Error::InvalidParams("reference scales must be positive".into()))
        }
    }

    /// Natural permeability factor sqrt(rho_r mu_r) / ell_r.
    fn natural_kappa_factor(&self) -> T {
        (self.rho_r * self.mu_r).sqrt() / self.ell_r
    }

    /// Natural frequency factor ell_r sqrt(rho_r / mu_r).
    fn natural_omega_factor(&self) -> T {
        self.ell_r * (self.rho_r / self.mu_r).sqrt()
    }
}

/// Parameters in SI units: moduli in Pa, densities in kg/m^3, permeability in
/// m^4/N, angular frequency in 1/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalProperties<T> {
    pub mu: T,
    pub lambda: T,
    pub biot_modulus: T,
    pub alpha: T,
    pub phi: T,
    pub kappa: T,
    pub rho: T,
    pub rho_f: T,
    pub rho_a: T,
    pub omega: T,
}

impl<T: Scalar> PhysicalProperties<T> {
    /// Sandstone with the given permeability in mm^4/N.
    pub fn sandstone(kappa_mm4_per_n: T) -> Self {
        Self {
            mu: T::lit(5.85e9),
            lambda: T::lit(2.74e9),
            biot_modulus: T::lit(9.71e9),
            alpha: T::lit(0.83),
            phi: T::lit(0.195),
            kappa: kappa_mm4_per_n * T::lit(1e-12),
            rho: T::lit(2270.0),
            rho_f: T::lit(1000.0),
            rho_a: T::lit(117.0),
            omega: T::lit(1.2e6),
        }
    }
}

/// Anchor pairing a physical permeability (m^4/N) with its tabulated
/// dimensionless value; fixes the permeability conversion constant.
pub const KAPPA_ANCHOR: (f64, f64) = (503.0e-12, 1.5407e-5);

/// Anchor pairing a physical angular frequency (1/s) with its tabulated
/// dimensionless value.
pub const OMEGA_ANCHOR: (f64, f64) = (1.2e6, 391.0);

/// Ratio between the tabulated and the natural dimensionless permeability
/// under the sandstone reference scales.
pub fn kappa_calibration() -> f64 {
    let natural = ReferenceScales::<f64>::sandstone().natural_kappa_factor();
    KAPPA_ANCHOR.1 / (KAPPA_ANCHOR.0 * natural)
}

/// Ratio between the tabulated and the natural dimensionless frequency under
/// the sandstone reference scales.
pub fn omega_calibration() -> f64 {
    let natural = ReferenceScales::<f64>::sandstone().natural_omega_factor();
    OMEGA_ANCHOR.1 / (OMEGA_ANCHOR.0 * natural)
}

/// Converts SI properties to dimensionless parameters and frequency.
///
/// Moduli are divided by `mu_r` and densities by `rho_r`. Permeability and
/// frequency use their natural factors times the stored calibrations
/// [`kappa_calibration`] and [`omega_calibration`].
pub fn nondimensionalize<T: Scalar>(
    physical: &PhysicalProperties<T>,
    scales: &ReferenceScales<T>,
) -> Result<(PoroelasticParams<T>, FrequencySpec<T>)> {
    scales.validate()?;
    let params = PoroelasticParams {
        mu: physical.mu / scales.mu_r,
        lambda: physical.lambda / scales.mu_r,
        biot_modulus: physical.biot_modulus / scales.mu_r,
        alpha: physical.alpha,
        phi: physical.phi,
        kappa: physical.kappa * scales.natural_kappa_factor() * T::lit(kappa_calibration()),
        rho: physical.rho / scales.rho_r,
        rho_f: physical.rho_f / scales.rho_r,
        rho_a: physical.rho_a / scales.rho_r,
    };
    let omega = physical.omega * scales.natural_omega_factor() * T::lit(omega_calibration());
    Ok((params, FrequencySpec::new(omega)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn region1() -> (PoroelasticParams<f64>, FrequencySpec<f64>) {
        (PoroelasticParams::sandstone_high_permeability(), FrequencySpec::nominal())
    }

    #[test]
    fn gamma_region_one() {
        let (p, f) = region1();
        let co = compute_coefficients(&p, &f).unwrap();
        // 0.117 / 0.195^2 + 1 / 0.195 and 1 / (391 * 1.5407e-5)
        let re = 0.117 / 0.038025 + 1.0 / 0.195;
        let im = 1.0 / (391.0 * 1.5407e-5);
        assert_relative_eq!(co.gamma.re, re, max_relative = 1e-14);
        assert_relative_eq!(co.gamma.im, im, max_relative = 1e-14);
        assert_relative_eq!(co.gamma.re, 8.2051, max_relative = 1e-4);
        assert_relative_eq!(co.gamma.im, 166.00, max_relative = 1e-4);
    }

    #[test]
    fn derived_coefficients_region_one() {
        let (p, f) = region1();
        let co = compute_coefficients(&p, &f).unwrap();
        assert_relative_eq!(co.a.re, 0.82970, max_relative = 1e-5);
        assert_relative_eq!(co.a.im, 0.0060095, max_relative = 1e-4);
        assert_relative_eq!(co.b.re, 2.26970, max_relative = 1e-5);
        assert_relative_eq!(co.b.im, 0.0060095, max_relative = 1e-4);
        assert_relative_eq!(co.c.re, 2.9704e-4, max_relative = 1e-4);
        assert_relative_eq!(co.c.im, -6.0095e-3, max_relative = 1e-4);
    }

    #[test]
    fn degenerate_limit() {
        // kappa -> infinity, phi = 1, rho_a = 0
        let p = PoroelasticParams {
            phi: 1.0,
            rho_a: 0.0,
            kappa: f64::INFINITY,
            rho_f: 1.3,
            ..PoroelasticParams::sandstone_high_permeability()
        };
        let co = coefficients_unchecked(&p, 391.0);
        assert_eq!(co.gamma, Complex::new(1.3, 0.0));
        assert_relative_eq!(co.a.re, p.alpha - 1.0, max_relative = 1e-15);
        assert_relative_eq!(co.b.re, p.rho - 1.3, max_relative = 1e-15);
        assert_relative_eq!(co.c.re, 1.0 / 1.3, max_relative = 1e-15);
    }

    #[test]
    fn rejects_nonpositive_kappa_and_phi() {
        let (p, f) = region1();
        assert!(compute_coefficients(&PoroelasticParams { kappa: 0.0, ..p }, &f).is_err());
        assert!(compute_coefficients(&PoroelasticParams { phi: -0.1, ..p }, &f).is_err());
        assert!(coefficient_jacobian(&PoroelasticParams { kappa: -1.0, ..p }, &f).is_err());
        assert!(FrequencySpec::new(0.0).is_err());
    }

    #[test]
    fn validate_bounds() {
        let (p, _) = region1();
        assert!(p.validate().is_ok());
        assert!(PoroelasticParams { alpha: 1.2, ..p }.validate().is_err());
        assert!(PoroelasticParams { phi: 1.0, ..p }.validate().is_err());
        assert!(PoroelasticParams { rho_a: -0.1, ..p }.validate().is_err());
        assert!(PoroelasticParams { alpha: 1.0, ..p }.validate().is_ok());
    }

    #[test]
    fn lame_rows_independent_of_a() {
        let (p, f) = region1();
        let j = coefficient_jacobian(&p, &f).unwrap();
        assert_eq!(j.partial(Quantity::ReA, Unknown::Mu), 0.0);
        assert_eq!(j.partial(Quantity::ReA, Unknown::Lambda), 0.0);
        assert_eq!(j.partial(Quantity::Mu, Unknown::Mu), 1.0);
        assert_eq!(j.partial(Quantity::Lambda, Unknown::Lambda), 1.0);
    }

    #[test]
    fn inverse_modulus_derivative() {
        let (p, f) = region1();
        let j = coefficient_jacobian(&p, &f).unwrap();
        let d = j.partial(Quantity::InvM, Unknown::BiotModulus);
        assert_relative_eq!(d, -1.0 / (1.66 * 1.66), max_relative = 1e-15);
        assert_relative_eq!(d, -0.3628973, max_relative = 1e-6);
    }

    /// Independent evaluation of the nine quantities. For phi and kappa the
    /// constant parts alpha and rho are dropped so finite differences do not
    /// cancel against them.
    fn oracle(p: &PoroelasticParams<f64>, omega: f64, drop_constants: bool) -> [f64; 9] {
        let gamma = Complex::new(
            p.rho_a / p.phi.powi(2) + p.rho_f / p.phi,
            1.0 / (omega * p.kappa),
        );
        let (alpha, rho) = if drop_constants { (0.0, 0.0) } else { (p.alpha, p.rho) };
        let a = alpha - p.rho_f / gamma;
        let b = rho - p.rho_f * p.rho_f / gamma;
        let c = 1.0 / gamma;
        [p.mu, p.lambda, a.re, a.im, b.re, b.im, c.re, c.im, 1.0 / p.biot_modulus]
    }

    fn check_jacobian_fd(p: &PoroelasticParams<f64>, omega: f64) -> f64 {
        let f = FrequencySpec::new(omega).unwrap();
        let j = coefficient_jacobian(p, &f).unwrap();
        let mut worst = 0.0f64;
        for n in Unknown::ALL {
            let drop = matches!(n, Unknown::Phi | Unknown::Kappa);
            let u = p.unknowns();
            let h = 1e-6 * u[n.index()].abs();
            let (mut up, mut dn) = (u, u);
            up[n.index()] += h;
            dn[n.index()] -= h;
            let vp = oracle(&p.with_unknowns(up), omega, drop);
            let vm = oracle(&p.with_unknowns(dn), omega, drop);
            for q in Quantity::ALL {
                let fd = (vp[q.index()] - vm[q.index()]) / (2.0 * h);
                let an = j.partial(q, n);
                if an == 0.0 {
                    assert_eq!(fd, 0.0, "{q:?}/{n:?}");
                } else {
                    worst = worst.max(((fd - an) / an).abs());
                }
            }
        }
        worst
    }

    // Double-precision differences resolve the high-permeability region only;
    // the low-permeability entries are checked with exact rational arithmetic
    // in the integration tests.
    #[test]
    fn jacobian_matches_finite_differences() {
        let base = PoroelasticParams::<f64>::sandstone_high_permeability();
        for p in [base, base.with_unknowns([1.3, 0.3, 2.0, 0.6, 0.25, 2.2e-5])] {
            let worst = check_jacobian_fd(&p, 391.0);
            assert!(worst < 1e-6, "worst relative error {worst}");
        }
    }

    #[test]
    fn nondimensionalize_table_values() {
        let scales = ReferenceScales::sandstone();
        let (p, f) = nondimensionalize(&PhysicalProperties::<f64>::sandstone(503.0), &scales).unwrap();
        assert_relative_eq!(p.mu, 1.0, max_relative = 1e-15);
        assert_relative_eq!(p.kappa, 1.5407e-5, max_relative = 1e-12);
        assert_relative_eq!(f.omega, 391.0, max_relative = 1e-12);
        assert_relative_eq!(p.lambda, 0.47, max_relative = 5e-3);
        assert_relative_eq!(p.biot_modulus, 1.66, max_relative = 5e-3);
        assert_relative_eq!(p.rho, 2.27, max_relative = 1e-12);
        assert_relative_eq!(p.rho_a, 0.117, max_relative = 1e-12);
        let (p2, _) = nondimensionalize(&PhysicalProperties::<f64>::sandstone(0.8), &scales).unwrap();
        assert_relative_eq!(p2.kappa, 2.45e-8, max_relative = 1e-3);
    }

    #[test]
    fn nondimensionalize_rejects_bad_scales() {
        let scales = ReferenceScales { ell_r: 0.0, ..ReferenceScales::sandstone() };
        assert!(nondimensionalize(&PhysicalProperties::<f64>::sandstone(503.0), &scales).is_err());
    }

    #[test]
    fn single_precision_coefficients() {
        let p = PoroelasticParams::<f32>::sandstone_high_permeability();
        let co = compute_coefficients(&p, &FrequencySpec::nominal()).unwrap();
        assert!((co.c * co.gamma - Complex::new(1.0f32, 0.0)).norm() < 1e-6);
    }
}
