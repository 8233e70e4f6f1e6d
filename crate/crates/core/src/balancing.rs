//! Loss-weighting strategies: scale-based weights from the factorised terms,
//! their gradient-based variant, SoftAdapt, GradNorm and equal weights.

use serde::{Deserialize, Serialize};

use crate::biot::{jacobian_unchecked, CoefficientJacobian, PoroelasticParams, UNKNOWN_COUNT};
use crate::network::AdamState;
use crate::residual::{GramCache, COMPONENT_COUNT};
use crate::scalar::Scalar;

/// Weighting strategy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
pub enum Strategy {
    /// Weights from the coefficient and data scales of each term.
    #[default]
    #[serde(rename = "dynscl")]
    #[value(name = "dynscl")]
    DynScl,
    /// Weights from coefficient-derivative, parameter and data scales.
    #[serde(rename = "dynscl-grad")]
    #[value(name = "dynscl-grad")]
    DynSclGradient,
    #[serde(rename = "softadapt")]
    #[value(name = "softadapt")]
    SoftAdapt,
    #[serde(rename = "gradnorm")]
    #[value(name = "gradnorm")]
    GradNorm,
    #[serde(rename = "equal")]
    #[value(name = "equal")]
    Equal,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::DynScl,
        Strategy::DynSclGradient,
        Strategy::SoftAdapt,
        Strategy::GradNorm,
        Strategy::Equal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::DynScl => "dynscl",
            Strategy::DynSclGradient => "dynscl-grad",
            Strategy::SoftAdapt => "softadapt",
            Strategy::GradNorm => "gradnorm",
            Strategy::Equal => "equal",
        }
    }
}

/// Magnitudes below this are treated as identically zero.
pub const EXCLUSION_THRESHOLD: f64 = 1e-30;

/// Scale weights with their exponents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleWeights<T> {
    pub weights: [T; COMPONENT_COUNT],
    /// Average exponent per component.
    pub exponents: [T; COMPONENT_COUNT],
    /// Components whose terms were all excluded; their weight is one.
    pub defaulted: [bool; COMPONENT_COUNT],
}

fn rounded_log<T: Scalar>(x: T, eta: T) -> T {
    (x.abs().log10() / eta).round()
}

fn finish<T: Scalar>(sums: [(T, usize); COMPONENT_COUNT], eta: T) -> ScaleWeights<T> {
    let mut weights = [T::one(); COMPONENT_COUNT];
    let mut exponents = [T::zero(); COMPONENT_COUNT];
    let mut defaulted = [false; COMPONENT_COUNT];
    for k in 0..COMPONENT_COUNT {
        let (sum, count) = sums[k];
        if count == 0 {
            defaulted[k] = true;
            continue;
        }
        let beta = sum / T::from_count(count);
        exponents[k] = beta;
        weights[k] = T::lit(10.0).powf(-eta * beta);
    }
    ScaleWeights { weights, exponents, defaulted }
}

/// `w_k = b^(-beta_k)` with `b = 10^eta` and `beta_k` the mean over terms of
/// `round(log_b |f_kl|) + round(log_b <|d_kl|>)`.
pub fn dynscl_weights<T: Scalar>(params: &PoroelasticParams<T>, cache: &GramCache<T>, eta: T) -> ScaleWeights<T> {
    let jac = jacobian_unchecked(params, cache.table.omega);
    let tiny = T::lit(EXCLUSION_THRESHOLD);
    let sums = std::array::from_fn(|k| {
        let f = cache.table.coefficient_vector(k, &jac);
        let mean_abs = &cache.components[k].mean_abs;
        f.iter().zip(mean_abs).fold((T::zero(), 0usize), |(s, c), (&fl, &d)| {
            if fl.abs() < tiny || d < tiny || !fl.is_finite() {
                (s, c)
            } else {
                (s + rounded_log(fl, eta) + rounded_log(d, eta), c + 1)
            }
        })
    });
    finish(sums, eta)
}

/// Gradient-based scale weights: each term contributes its data exponent
/// plus the mean over unknowns with a non-zero coefficient derivative of
/// `round(log_b |df_kl/dtheta_n|) + round(log_b |theta_n|)`. Terms with a
/// constant coefficient contribute their data exponent alone.
pub fn dynscl_gradient_weights<T: Scalar>(
    params: &PoroelasticParams<T>,
    cache: &GramCache<T>,
    jacobian: &CoefficientJacobian<T>,
    eta: T,
) -> ScaleWeights<T> {
    let theta = params.unknowns();
    let tiny = T::lit(EXCLUSION_THRESHOLD);
    let sums = std::array::from_fn(|k| {
        let partials = cache.table.coefficient_partials(k, jacobian);
        let mean_abs = &cache.components[k].mean_abs;
        partials.iter().zip(mean_abs).fold((T::zero(), 0usize), |(s, c), (df, &d)| {
            if d < tiny {
                return (s, c);
            }
            let (inner, pairs) = (0..UNKNOWN_COUNT).fold((T::zero(), 0usize), |(a, m), n| {
                if df[n].abs() < tiny || theta[n].abs() < tiny || !df[n].is_finite() {
                    (a, m)
                } else {
                    (a + rounded_log(df[n], eta) + rounded_log(theta[n], eta), m + 1)
                }
            });
            let mean = if pairs == 0 { T::zero() } else { inner / T::from_count(pairs) };
            (s + rounded_log(d, eta) + mean, c + 1)
        })
    });
    finish(sums, eta)
}

/// Convenience wrapper computing the Jacobian without domain checks.
pub fn dynscl_gradient_weights_at<T: Scalar>(params: &PoroelasticParams<T>, cache: &GramCache<T>, eta: T) -> ScaleWeights<T> {
    let jac = jacobian_unchecked(params, cache.table.omega);
    dynscl_gradient_weights(params, cache, &jac, eta)
}

/// Six unit weights.
pub fn equal_weights<T: Scalar>() -> [T; COMPONENT_COUNT] {
    [T::one(); COMPONENT_COUNT]
}

/// SoftAdapt memory of the previous epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftAdaptState<T> {
    pub eta: T,
    pub previous: Option<[T; COMPONENT_COUNT]>,
    /// Last rates of change.
    pub rates: [T; COMPONENT_COUNT],
}

impl<T: Scalar> SoftAdaptState<T> {
    pub fn new(eta: T) -> Self {
        Self { eta, previous: None, rates: [T::zero(); COMPONENT_COUNT] }
    }
}

/// Softmax of `eta (s_k - max s)` over the rates `s_k` of the raw component
/// values; equal weights 1/6 until a previous epoch exists.
pub fn softadapt_weights<T: Scalar>(state: &mut SoftAdaptState<T>, current: &[T; COMPONENT_COUNT]) -> [T; COMPONENT_COUNT] {
    let Some(prev) = state.previous.replace(*current) else {
        return [T::one() / T::from_count(COMPONENT_COUNT); COMPONENT_COUNT];
    };
    let s: [T; COMPONENT_COUNT] = std::array::from_fn(|k| current[k] - prev[k]);
    state.rates = s;
    softmax(&s, state.eta)
}

fn softmax<T: Scalar>(s: &[T; COMPONENT_COUNT], eta: T) -> [T; COMPONENT_COUNT] {
    let max = s.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let e: [T; COMPONENT_COUNT] = std::array::from_fn(|k| (eta * (s[k] - max)).exp());
    let total = e.iter().fold(T::zero(), |a, &b| a + b);
    e.map(|v| v / total)
}

/// GradNorm weights and their optimiser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradNormState<T> {
    pub weights: [T; COMPONENT_COUNT],
    pub eta_tilde: T,
    pub initial: Option<[T; COMPONENT_COUNT]>,
    /// Last relative training rates.
    pub rates: [T; COMPONENT_COUNT],
    /// Last value of the gradient-matching loss.
    pub inner_loss: T,
    adam: AdamState<T>,
}

impl<T: Scalar> GradNormState<T> {
    pub fn new(eta_tilde: T, lr: T) -> Self {
        Self {
            weights: [T::one(); COMPONENT_COUNT],
            eta_tilde,
            initial: None,
            rates: [T::one(); COMPONENT_COUNT],
            inner_loss: T::zero(),
            adam: AdamState::new(COMPONENT_COUNT, lr),
        }
    }
}

/// Outcome of one GradNorm update.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum GradNormStatus {
    Updated,
    /// Every component gradient vanished; weights kept.
    VanishingGradients,
}

/// One GradNorm step.
///
/// `trunk_norms[k]` is `||grad_W L_k||` over the shared trunk for the
/// unweighted component `L_k`. The gradient-norm target is the mean of
/// `w_k ||grad_W L_k||` times `r_k^eta_tilde`, with `r_k` the loss ratio to
/// the first epoch divided by its mean, held fixed during the step. The step
/// on `sum_k |G_k - target_k|` uses Adam; weights are then floored at a tiny
/// positive value and renormalised to sum to six.
pub fn gradnorm_update<T: Scalar>(
    state: &mut GradNormState<T>,
    trunk_norms: &[T; COMPONENT_COUNT],
    values: &[T; COMPONENT_COUNT],
) -> GradNormStatus {
    let initial = *state.initial.get_or_insert(*values);
    if trunk_norms.iter().all(|&g| g == T::zero()) {
        return GradNormStatus::VanishingGradients;
    }
    let ratio: [T; COMPONENT_COUNT] = std::array::from_fn(|k| {
        if initial[k] > T::zero() {
            values[k] / initial[k]
        } else {
            T::one()
        }
    });
    let mean_ratio = ratio.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(COMPONENT_COUNT);
    let rates: [T; COMPONENT_COUNT] =
        std::array::from_fn(|k| if mean_ratio > T::zero() { ratio[k] / mean_ratio } else { T::one() });
    let norms: [T; COMPONENT_COUNT] = std::array::from_fn(|k| state.weights[k] * trunk_norms[k]);
    let mean_norm = norms.iter().fold(T::zero(), |a, &b| a + b) / T::from_count(COMPONENT_COUNT);
    let target: [T; COMPONENT_COUNT] = std::array::from_fn(|k| mean_norm * rates[k].powf(state.eta_tilde));
    state.rates = rates;
    state.inner_loss = (0..COMPONENT_COUNT).fold(T::zero(), |a, k| a + (norms[k] - target[k]).abs());
    let grad: Vec<T> = (0..COMPONENT_COUNT)
        .map(|k| {
            let diff = norms[k] - target[k];
            if diff == T::zero() {
                T::zero()
            } else {
                diff.signum() * trunk_norms[k]
            }
        })
        .collect();
    let mut w = state.weights.to_vec();
    if state.adam.step(&mut w, &grad).is_err() {
        return GradNormStatus::VanishingGradients;
    }
    let floor = T::lit(1e-8);
    w.iter_mut().for_each(|v| *v = v.max(floor));
    let total = w.iter().fold(T::zero(), |a, &b| a + b);
    let six = T::from_count(COMPONENT_COUNT);
    state.weights = std::array::from_fn(|k| w[k] * six / total);
    GradNormStatus::Updated
}
