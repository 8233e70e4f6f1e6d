//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_complex::Complex;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use poroscale::biot::{coefficient_jacobian, FrequencySpec, PoroelasticParams, UNKNOWN_COUNT};
use poroscale::fields::{DerivativeBundle, Part, SourceTerm};
use poroscale::network::ScaledMlp;
use poroscale::residual::{
    build_factor_table, loss_components, loss_gradient, precompute_gram, Coefficient, CoefficientSpec, GramCache,
};
use poroscale::trainer::NetworkOptions;
use poroscale::spectral::{
    solve_biot_spectral, Derivative, FieldComponent, FocalField, GridSpec, SolverOptions, SourceSpec, WindowSpec,
};

pub type Q = BigRational;

pub fn q(x: f64) -> Q {
    BigRational::from_float(x).expect("finite")
}

fn qi(n: i64) -> Q {
    BigRational::from_integer(BigInt::from(n))
}

/// Exact complex rational.
#[derive(Clone, Debug)]
pub struct Cq {
    pub re: Q,
    pub im: Q,
}

impl Cq {
    fn inv(&self) -> Cq {
        let d = &self.re * &self.re + &self.im * &self.im;
        Cq { re: &self.re / &d, im: -&self.im / &d }
    }
}

/// The nine real quantities the residuals are linear in, evaluated exactly:
/// mu, lambda, Re a, Im a, Re b, Im b, Re c, Im c, 1/M.
pub fn quantities_exact(u: &[Q; UNKNOWN_COUNT], rho: &Q, rho_f: &Q, rho_a: &Q, omega: &Q) -> [Q; 9] {
    let [mu, lambda, m, alpha, phi, kappa] = u.clone();
    let gamma = Cq { re: rho_a / (&phi * &phi) + rho_f / &phi, im: Q::one() / (omega * &kappa) };
    let c = gamma.inv();
    let a = Cq { re: &alpha - rho_f * &c.re, im: -(rho_f * &c.im) };
    let b = Cq { re: rho - rho_f * rho_f * &c.re, im: -(rho_f * rho_f * &c.im) };
    [mu, lambda, a.re, a.im, b.re, b.im, c.re, c.im, Q::one() / m]
}

/// Central finite-difference Jacobian of the nine quantities, computed in
/// exact arithmetic so only the truncation error of the stencil remains.
/// `rel_step` is relative to each unknown.
pub fn jacobian_fd_exact(p: &PoroelasticParams<f64>, omega: f64, rel_step: f64) -> [[f64; UNKNOWN_COUNT]; 9] {
    let base: [Q; UNKNOWN_COUNT] = p.unknowns().map(q);
    let (rho, rho_f, rho_a, om) = (q(p.rho), q(p.rho_f), q(p.rho_a), q(omega));
    let mut out = [[0.0; UNKNOWN_COUNT]; 9];
    for n in 0..UNKNOWN_COUNT {
        let h = &base[n] * q(rel_step);
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[n] = &base[n] + &h;
        minus[n] = &base[n] - &h;
        let fp = quantities_exact(&plus, &rho, &rho_f, &rho_a, &om);
        let fm = quantities_exact(&minus, &rho, &rho_f, &rho_a, &om);
        for i in 0..9 {
            let d = (&fp[i] - &fm[i]) / (qi(2) * &h);
            out[i][n] = d.to_f64().expect("representable");
        }
    }
    out
}

/// Biot coefficients straight from their definitions in complex f64.
pub fn coefficients_direct(p: &PoroelasticParams<f64>, omega: f64) -> (Complex<f64>, Complex<f64>, Complex<f64>) {
    let gamma = Complex::new(p.rho_a / (p.phi * p.phi) + p.rho_f / p.phi, 1.0 / (omega * p.kappa));
    let c = 1.0 / gamma;
    let a = p.alpha - p.rho_f * c;
    let b = p.rho - p.rho_f * p.rho_f * c;
    (a, b, c)
}

/// Brute-force loss components: the complex residuals are formed sample by
/// sample and the squares of their real and imaginary parts summed.
pub fn pointwise_loss(bundle: &DerivativeBundle<f64>, p: &PoroelasticParams<f64>, omega: f64) -> [f64; 6] {
    use Derivative as D;
    use FieldComponent as F;
    let (a, b, c) = coefficients_direct(p, omega);
    let z = |f: F, d: D, i: usize| {
        Complex::new(bundle.field(f, Part::Re, d)[i], bundle.field(f, Part::Im, d)[i])
    };
    let s = |t: SourceTerm, i: usize| Complex::new(bundle.source(t, Part::Re)[i], bundle.source(t, Part::Im)[i]);
    let w2 = omega * omega;
    let mut out = [0.0; 6];
    for i in 0..bundle.samples() {
        let div = z(F::Ux, D::X, i) + z(F::Uy, D::Y, i);
        let rx = (z(F::Ux, D::XX, i) + z(F::Ux, D::YY, i)) * p.mu
            + (z(F::Ux, D::XX, i) + z(F::Uy, D::XY, i)) * (p.lambda + p.mu)
            - a * z(F::P, D::X, i)
            + b * w2 * z(F::Ux, D::Value, i)
            - s(SourceTerm::SolidX, i);
        let ry = (z(F::Uy, D::XX, i) + z(F::Uy, D::YY, i)) * p.mu
            + (z(F::Uy, D::YY, i) + z(F::Ux, D::XY, i)) * (p.lambda + p.mu)
            - a * z(F::P, D::Y, i)
            + b * w2 * z(F::Uy, D::Value, i);
        let rp = c / w2 * (z(F::P, D::XX, i) + z(F::P, D::YY, i))
            + z(F::P, D::Value, i) / p.biot_modulus
            + a * div
            + c / w2 * s(SourceTerm::Fluid, i);
        for (k, r) in [rx, ry, rp].iter().enumerate() {
            out[2 * k] += r.re * r.re;
            out[2 * k + 1] += r.im * r.im;
        }
    }
    out
}

/// Bundle of uniform random arrays.
pub fn random_bundle(rng: &mut ChaCha8Rng, samples: usize) -> DerivativeBundle<f64> {
    let mut fields: Vec<Vec<f64>> = (0..36).map(|_| (0..samples).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let mut sources: Vec<Vec<f64>> = (0..4).map(|_| (0..samples).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    DerivativeBundle::from_arrays(samples, |_, _, _| fields.pop().unwrap(), |_, _| sources.pop().unwrap()).unwrap()
}

/// Physically admissible random parameters; permeability log-uniform.
pub fn random_params(rng: &mut ChaCha8Rng) -> PoroelasticParams<f64> {
    let kappa = 10f64.powf(rng.random_range(-9.0..-4.0));
    PoroelasticParams {
        mu: rng.random_range(0.5..2.0),
        lambda: rng.random_range(0.1..2.0),
        biot_modulus: rng.random_range(0.5..3.0),
        alpha: rng.random_range(0.3..1.0),
        phi: rng.random_range(0.05..0.5),
        kappa,
        ..PoroelasticParams::sandstone(kappa)
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Relative difference with a floor on the denominator.
pub fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// A small but resolved grid: side 4 with 256 points, window side 2.5
/// sampled 32 times per axis.
pub fn small_grid() -> (GridSpec<f64>, WindowSpec<f64>) {
    (GridSpec::new(4.0, 256).unwrap(), WindowSpec { side: 2.5, samples: 32 })
}

pub fn solve_small(p: &PoroelasticParams<f64>) -> FocalField<f64> {
    let (grid, window) = small_grid();
    let options = SolverOptions { window, ..SolverOptions::default() };
    solve_biot_spectral(p, &FrequencySpec::nominal(), &SourceSpec::nominal(), &grid, &options).unwrap()
}

/// Exact value of one table coefficient from the nine exact quantities.
fn coefficient_exact(spec: &CoefficientSpec, quantities: &[Q; 9], omega: &Q) -> Q {
    use Coefficient as C;
    let base = match spec.coefficient {
        C::Mu => quantities[0].clone(),
        C::Lambda => quantities[1].clone(),
        C::LambdaPlusMu => &quantities[0] + &quantities[1],
        C::ReA => quantities[2].clone(),
        C::ImA => quantities[3].clone(),
        C::ReB => quantities[4].clone(),
        C::ImB => quantities[5].clone(),
        C::ReC => quantities[6].clone(),
        C::ImC => quantities[7].clone(),
        C::InvM => quantities[8].clone(),
        C::One => Q::one(),
    };
    let mut scale = qi(spec.sign as i64);
    for _ in 0..spec.omega_power.unsigned_abs() {
        scale = if spec.omega_power > 0 { scale * omega } else { scale / omega };
    }
    scale * base
}

/// Exact `sum_k w_k^2 ||R_k f_k(u)||^2` with the cached factors taken as exact.
pub fn weighted_loss_exact(cache: &GramCache<f64>, p: &PoroelasticParams<f64>, u: &[Q; UNKNOWN_COUNT], w: &[f64; 6]) -> Q {
    let om = q(cache.table.omega);
    let quantities = quantities_exact(u, &q(p.rho), &q(p.rho_f), &q(p.rho_a), &om);
    let mut total = Q::zero();
    for (k, (terms, comp)) in cache.table.components.iter().zip(&cache.components).enumerate() {
        let f: Vec<Q> = terms.iter().map(|t| coefficient_exact(&t.coefficient, &quantities, &om)).collect();
        let m = comp.terms;
        let mut sum = Q::zero();
        for r in 0..m {
            let mut v = Q::zero();
            for c in r..m {
                v += q(comp.factor[r * m + c]) * &f[c];
            }
            sum += &v * &v;
        }
        total += q(w[k] * w[k]) * sum;
    }
    total
}

/// Largest normwise relative error of the analytic coefficient Jacobian
/// against exact central differences, in relative-parameter coordinates
/// (each column scaled by its unknown).
pub fn jacobian_check(trials: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let p = random_params(&mut r);
        let omega = r.random_range(10.0..1000.0);
        let jac = coefficient_jacobian(&p, &FrequencySpec::new(omega).unwrap()).unwrap();
        let fd = jacobian_fd_exact(&p, omega, 1e-5);
        let u = p.unknowns();
        for i in 0..9 {
            let scale = (0..UNKNOWN_COUNT).fold(0.0f64, |m, n| m.max((u[n] * fd[i][n]).abs()));
            if scale == 0.0 {
                continue;
            }
            for n in 0..UNKNOWN_COUNT {
                worst = worst.max((u[n] * (jac.partials[i][n] - fd[i][n])).abs() / scale);
            }
        }
    }
    worst
}

/// Random two-region network with every trainable value drawn from [-1, 1].
pub fn random_network(r: &mut ChaCha8Rng, scaled: bool) -> ScaledMlp<f64> {
    let options = NetworkOptions { scaling: scaled, ..NetworkOptions::default() };
    let mut net = options.build(2, r.random()).unwrap();
    net.params.iter_mut().for_each(|v| *v = r.random_range(-1.0..1.0));
    net
}

/// Largest normwise relative error of the network backward pass against
/// central differences of `upstream . theta`.
pub fn network_backward_check(trials: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let mut net = random_network(&mut r, t % 2 == 0);
        let region = t % 2;
        let upstream: [f64; UNKNOWN_COUNT] = std::array::from_fn(|_| r.random_range(-1.0..1.0));
        let objective = |net: &ScaledMlp<f64>| -> f64 {
            let th = net.predict(region);
            let s = net.scales.clone();
            (0..UNKNOWN_COUNT).map(|n| upstream[n] * th[n] / s.scale(region, n)).sum()
        };
        // Divide by the scales so every head contributes at O(1).
        let scaled_up: [f64; UNKNOWN_COUNT] = std::array::from_fn(|n| upstream[n] / net.scales.scale(region, n));
        let g = net.backward(&net.forward(region), &scaled_up);
        let fd = central_differences(&mut net, 1e-4, objective);
        worst = worst.max(normwise(&g, &fd));
    }
    worst
}

/// Fourth-order central differences over every trainable value.
fn central_differences(net: &mut ScaledMlp<f64>, h: f64, f: impl Fn(&ScaledMlp<f64>) -> f64) -> Vec<f64> {
    (0..net.params.len())
        .map(|i| {
            let keep = net.params[i];
            let mut at = |x: f64| {
                net.params[i] = keep + x;
                f(net)
            };
            let d = 8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h));
            net.params[i] = keep;
            d / (12.0 * h)
        })
        .collect()
}

/// Central differences at the step of a decade ladder where consecutive
/// estimates agree best. 1/M and 1/kappa have poles at zero raw output, so a
/// fixed step can straddle one while a small step drowns in roundoff.
fn stable_differences(net: &mut ScaledMlp<f64>, f: impl Fn(&ScaledMlp<f64>) -> f64) -> Vec<f64> {
    let ladder: Vec<Vec<f64>> = (2..=8).map(|j| central_differences(net, 10f64.powi(-j), &f)).collect();
    let best = (0..ladder.len() - 1)
        .min_by(|&a, &b| normwise(&ladder[a], &ladder[a + 1]).total_cmp(&normwise(&ladder[b], &ladder[b + 1])))
        .unwrap();
    ladder[best].clone()
}

fn normwise(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Largest normwise relative error of the weighted loss gradient: first with
/// respect to the unknowns against exact central differences, then through
/// the network against floating-point central differences of the total loss.
pub fn loss_gradient_check(trials: usize, seed: u64) -> (f64, f64) {
    let mut r = rng(seed);
    let table = build_factor_table(&FrequencySpec::nominal());
    let (mut theta_worst, mut chain_worst) = (0.0f64, 0.0f64);
    for t in 0..trials {
        let bundle = random_bundle(&mut r, 16);
        let cache = precompute_gram(&bundle, &table).unwrap();
        let p = random_params(&mut r);
        let w: [f64; 6] = std::array::from_fn(|_| 10f64.powf(r.random_range(-4.0..0.0)));

        let g = loss_gradient(&p, &cache, &w);
        let u = p.unknowns();
        let base: [Q; UNKNOWN_COUNT] = u.map(q);
        let fd: Vec<f64> = (0..UNKNOWN_COUNT)
            .map(|n| {
                let h = &base[n] * q(1e-6);
                let mut plus = base.clone();
                let mut minus = base.clone();
                plus[n] = &base[n] + &h;
                minus[n] = &base[n] - &h;
                let d = (weighted_loss_exact(&cache, &p, &plus, &w) - weighted_loss_exact(&cache, &p, &minus, &w))
                    / (qi(2) * &h);
                u[n] * d.to_f64().unwrap()
            })
            .collect();
        let scaled: Vec<f64> = (0..UNKNOWN_COUNT).map(|n| u[n] * g[n]).collect();
        theta_worst = theta_worst.max(normwise(&scaled, &fd));

        // Through the network: theta = scale * raw, densities from p.
        let mut net = random_network(&mut r, true);
        net.params.iter_mut().for_each(|v| *v *= 0.3);
        let region = t % 2;
        let fwd = net.forward(region);
        let total = |net: &ScaledMlp<f64>| -> f64 {
            let l = loss_components(&p.with_unknowns(net.predict(region)), &cache);
            (0..6).map(|k| w[k] * w[k] * l[k]).sum()
        };
        let up = loss_gradient(&p.with_unknowns(fwd.theta), &cache, &w);
        let g_net = net.backward(&fwd, &up);
        let fd_net = stable_differences(&mut net, total);
        chain_worst = chain_worst.max(normwise(&g_net, &fd_net));
    }
    (theta_worst, chain_worst)
}

/// Largest relative difference between Gram-path and pointwise losses on
/// random 4 x 4 instances.
pub fn gram_vs_pointwise(trials: usize, seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let omega = r.random_range(10.0..1000.0);
        let freq = FrequencySpec::new(omega).unwrap();
        let bundle = random_bundle(&mut r, 16);
        let cache = precompute_gram(&bundle, &build_factor_table(&freq)).unwrap();
        let p = random_params(&mut r);
        let gram = loss_components(&p, &cache);
        let brute = pointwise_loss(&bundle, &p, omega);
        for k in 0..6 {
            worst = worst.max(rel(gram[k], brute[k], 0.0));
        }
    }
    worst
}
