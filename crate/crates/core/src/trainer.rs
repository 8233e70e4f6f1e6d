//! Training loop, reconstruction errors and dataset preparation.

use serde::{Deserialize, Serialize};

use crate::balancing::{
    dynscl_gradient_weights_at, dynscl_weights, equal_weights, gradnorm_update, softadapt_weights, GradNormState,
    SoftAdaptState, Strategy,
};
use crate::biot::{FrequencySpec, PoroelasticParams, Unknown, UNKNOWN_COUNT};
use crate::error::{Error, Result};
use crate::fields::spectral_derivatives;
use crate::network::{Activation, AdamState, NetworkShape, ScaleSet, ScaledMlp, SnapBands, SnapOutcome};
use crate::residual::{
    build_factor_table, component_gradients, loss_components, loss_gradient, precompute_gram, GramCache,
    COMPONENT_COUNT,
};
use crate::spectral::FocalField;

/// Training data and ground truth of one focal region.
#[derive(Clone, Debug)]
pub struct RegionData {
    pub name: String,
    /// Ground truth; its densities are also the known densities used during
    /// training.
    pub truth: PoroelasticParams<f64>,
    pub cache: GramCache<f64>,
}

impl RegionData {
    /// Differentiates a field (optionally low-passed) and builds the Gram data.
    pub fn from_field(
        name: impl Into<String>,
        truth: PoroelasticParams<f64>,
        field: &FocalField<f64>,
        cutoff: Option<f64>,
    ) -> Result<Self> {
        let bundle = spectral_derivatives(field, cutoff)?;
        let table = build_factor_table(&FrequencySpec::new(field.omega)?);
        let cache = precompute_gram(&bundle, &table)?;
        Ok(Self { name: name.into(), truth, cache })
    }
}

/// Optimisation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Factor applied to the learning rate every `lr_decay_every` epochs.
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    /// Stop once the total weighted loss falls below this value.
    pub early_stop: f64,
    /// Epoch interval between scale snaps; zero disables snapping.
    pub snap_every: usize,
    pub snap_trigger: [f64; 2],
    pub snap_target: [f64; 2],
    /// Training aborts once the total weighted loss exceeds this multiple of
    /// `max(1, first-epoch loss)`.
    pub divergence_threshold: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        let band = SnapBands::<f64>::default();
        Self {
            epochs: 50_000,
            learning_rate: 1e-3,
            lr_decay: 0.5,
            lr_decay_every: 10_000,
            early_stop: 1e-12,
            snap_every: 100,
            snap_trigger: band.trigger,
            snap_target: band.target,
            divergence_threshold: 1e12,
        }
    }
}

/// Weighting settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BalanceOptions {
    pub strategy: Strategy,
    /// Exponent of the logarithm base `10^eta` used by the scale weights.
    pub dynscl_eta: f64,
    pub softadapt_eta: f64,
    pub gradnorm_eta_tilde: f64,
    pub gradnorm_lr: f64,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        Self { strategy: Strategy::DynScl, dynscl_eta: 1.0, softadapt_eta: 0.1, gradnorm_eta_tilde: 1.5, gradnorm_lr: 0.025 }
    }
}

/// Network settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkOptions {
    pub trunk_width: usize,
    pub tower_width: usize,
    pub activation: Activation,
    /// Use the scaling layer; when false every scale is one and the heads are
    /// plain affine maps.
    pub scaling: bool,
    pub phi_scales: Vec<f64>,
    pub kappa_scales: Vec<f64>,
    /// Starting permeability scale; the largest candidate when absent.
    pub initial_kappa_scale: Option<f64>,
}

impl Default for NetworkOptions {
    fn default() -> Self {
        Self {
            trunk_width: 32,
            tower_width: 16,
            activation: Activation::Tanh,
            scaling: true,
            phi_scales: vec![0.1],
            kappa_scales: vec![1e-5, 1e-6, 1e-7, 1e-8],
            initial_kappa_scale: None,
        }
    }
}

impl NetworkOptions {
    /// Builds the network for `regions` regions.
    pub fn build(&self, regions: usize, seed: u64) -> Result<ScaledMlp<f64>> {
        let shape = NetworkShape { regions, trunk_width: self.trunk_width, tower_width: self.tower_width };
        let (scales, positive) = if self.scaling {
            let one = vec![1.0];
            let mut s = ScaleSet::from_candidates(
                vec![one.clone(), one.clone(), one.clone(), one, self.phi_scales.clone(), self.kappa_scales.clone()],
                regions,
            );
            s.validate()?;
            let start = self
                .initial_kappa_scale
                .unwrap_or_else(|| self.kappa_scales.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            for r in 0..regions {
                s.select_nearest(r, Unknown::Kappa.index(), start);
                s.select_nearest(r, Unknown::Phi.index(), self.phi_scales.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
            (s, [false, false, false, false, true, true])
        } else {
            (ScaleSet::unit(regions), [false; UNKNOWN_COUNT])
        };
        ScaledMlp::new(shape, self.activation, scales, positive, seed)
    }
}

/// Why training ended.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StopReason {
    EpochBudget,
    EarlyStop { epoch: usize },
    Diverged { epoch: usize, loss: f64 },
}

/// Per-region values recorded every epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    /// `w_k^2 ||l_k||^2`.
    pub weighted: [f64; COMPONENT_COUNT],
    pub weights: [f64; COMPONENT_COUNT],
    pub theta: [f64; UNKNOWN_COUNT],
}

/// One trace row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub total: f64,
    pub regions: Vec<RegionRecord>,
}

/// A scale reassignment during training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapEvent {
    pub epoch: usize,
    pub region: usize,
    pub unknown: Unknown,
    pub from: f64,
    pub to: f64,
    pub saturated: bool,
}

/// Everything a training run produces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub strategy: Strategy,
    pub seed: u64,
    pub region_names: Vec<String>,
    pub records: Vec<EpochRecord>,
    /// Final predictions (the last finite ones after a divergence).
    pub final_theta: Vec<[f64; UNKNOWN_COUNT]>,
    pub final_scales: Vec<[f64; UNKNOWN_COUNT]>,
    pub final_weights: Vec<[f64; COMPONENT_COUNT]>,
    pub xi: Vec<[f64; UNKNOWN_COUNT]>,
    pub truth: Vec<[f64; UNKNOWN_COUNT]>,
    pub snaps: Vec<SnapEvent>,
    pub stop: StopReason,
    /// Largest absolute trainable value at the end.
    pub max_abs_weight: f64,
    pub network: ScaledMlp<f64>,
    pub optimizer: AdamState<f64>,
}

impl TrainTrace {
    pub fn max_xi(&self) -> f64 {
        self.xi.iter().flatten().fold(0.0, |m, &v| m.max(v))
    }
}

/// `|predicted - truth| / |truth|` per unknown.
pub fn compute_xi(predicted: &PoroelasticParams<f64>, truth: &PoroelasticParams<f64>) -> Result<[f64; UNKNOWN_COUNT]> {
    let p = predicted.unknowns();
    let t = truth.unknowns();
    let mut out = [0.0; UNKNOWN_COUNT];
    for n in 0..UNKNOWN_COUNT {
        if t[n] == 0.0 {
            return Err(Error::ZeroTruth(Unknown::ALL[n].symbol()));
        }
        out[n] = ((p[n] - t[n]) / t[n]).abs();
    }
    Ok(out)
}

enum RegionWeighting {
    Stateless,
    SoftAdapt(SoftAdaptState<f64>),
    GradNorm(GradNormState<f64>),
}

/// Full-batch training of one network on all regions simultaneously.
pub fn train(
    regions: &[RegionData],
    network: &NetworkOptions,
    balance: &BalanceOptions,
    options: &TrainOptions,
    seed: u64,
) -> Result<TrainTrace> {
    if regions.is_empty() {
        return Err(Error::Config("at least one region is required".into()));
    }
    let mut net = network.build(regions.len(), seed)?;
    let mut adam = AdamState::new(net.param_count(), options.learning_rate);
    let bands = SnapBands { trigger: options.snap_trigger, target: options.snap_target };
    let mut states: Vec<RegionWeighting> = regions
        .iter()
        .map(|_| match balance.strategy {
            Strategy::SoftAdapt => RegionWeighting::SoftAdapt(SoftAdaptState::new(balance.softadapt_eta)),
            Strategy::GradNorm => {
                RegionWeighting::GradNorm(GradNormState::new(balance.gradnorm_eta_tilde, balance.gradnorm_lr))
            }
            _ => RegionWeighting::Stateless,
        })
        .collect();

    let mut records = Vec::with_capacity(options.epochs);
    let mut snaps = Vec::new();
    let mut stop = StopReason::EpochBudget;
    let mut last_theta: Vec<[f64; UNKNOWN_COUNT]> = (0..regions.len()).map(|r| net.predict(r)).collect();
    let mut last_weights = vec![[1.0; COMPONENT_COUNT]; regions.len()];
    let mut grads = vec![0.0; net.param_count()];
    let trunk = net.trunk_len();
    let mut initial_total: Option<f64> = None;

    for epoch in 0..options.epochs {
        grads.iter_mut().for_each(|g| *g = 0.0);
        let mut total = 0.0;
        let mut rows = Vec::with_capacity(regions.len());
        for (r, region) in regions.iter().enumerate() {
            let fwd = net.forward(r);
            let params = region.truth.with_unknowns(fwd.theta);
            let values = loss_components(&params, &region.cache);
            let weights = match (&mut states[r], balance.strategy) {
                (_, Strategy::DynScl) => dynscl_weights(&params, &region.cache, balance.dynscl_eta).weights,
                (_, Strategy::DynSclGradient) => {
                    dynscl_gradient_weights_at(&params, &region.cache, balance.dynscl_eta).weights
                }
                (RegionWeighting::SoftAdapt(st), _) => softadapt_weights(st, &values),
                (RegionWeighting::GradNorm(st), _) => st.weights,
                _ => equal_weights(),
            };
            let weighted: [f64; COMPONENT_COUNT] = std::array::from_fn(|k| weights[k] * weights[k] * values[k]);
            total += weighted.iter().sum::<f64>();
            let upstream = loss_gradient(&params, &region.cache, &weights);
            net.backward_into(&fwd, &upstream, &mut grads);

            if let RegionWeighting::GradNorm(st) = &mut states[r] {
                let per = component_gradients(&params, &region.cache);
                let norms: [f64; COMPONENT_COUNT] = std::array::from_fn(|k| {
                    let g = net.backward(&fwd, &per[k]);
                    g[..trunk].iter().map(|v| v * v).sum::<f64>().sqrt()
                });
                gradnorm_update(st, &norms, &values);
            }
            rows.push(RegionRecord { weighted, weights, theta: fwd.theta });
        }

        let reference = *initial_total.get_or_insert(total.max(1.0));
        if !total.is_finite() || total > options.divergence_threshold * reference {
            stop = StopReason::Diverged { epoch, loss: total };
            records.push(EpochRecord { epoch, total, regions: rows });
            break;
        }
        for (r, row) in rows.iter().enumerate() {
            last_theta[r] = row.theta;
            last_weights[r] = row.weights;
        }
        records.push(EpochRecord { epoch, total, regions: rows });
        if total < options.early_stop {
            stop = StopReason::EarlyStop { epoch };
            break;
        }
        if options.lr_decay_every > 0 {
            let decays = (epoch / options.lr_decay_every) as i32;
            adam.lr = options.learning_rate * options.lr_decay.powi(decays);
        }
        if adam.step(&mut net.params, &grads).is_err() {
            stop = StopReason::Diverged { epoch, loss: f64::NAN };
            break;
        }
        if options.snap_every > 0 && (epoch + 1) % options.snap_every == 0 {
            for r in 0..regions.len() {
                for n in 0..UNKNOWN_COUNT {
                    let (from, to, saturated) = match net.scale_snap(n, r, &bands) {
                        SnapOutcome::Unchanged => continue,
                        SnapOutcome::Snapped { from, to } => (from, to, false),
                        SnapOutcome::Saturated { from, to } => (from, to, true),
                    };
                    if from != to {
                        snaps.push(SnapEvent { epoch: epoch + 1, region: r, unknown: Unknown::ALL[n], from, to, saturated });
                    }
                }
            }
        }
    }

    if matches!(stop, StopReason::EpochBudget) && options.epochs > 0 {
        for (r, t) in last_theta.iter_mut().enumerate() {
            let p = net.predict(r);
            if p.iter().all(|v| v.is_finite()) {
                *t = p;
            }
        }
    }
    let xi = regions
        .iter()
        .zip(&last_theta)
        .map(|(reg, th)| compute_xi(&reg.truth.with_unknowns(*th), &reg.truth))
        .collect::<Result<Vec<_>>>()?;
    let final_scales = (0..regions.len())
        .map(|r| std::array::from_fn(|n| net.scales.scale(r, n)))
        .collect();
    Ok(TrainTrace {
        strategy: balance.strategy,
        seed,
        region_names: regions.iter().map(|r| r.name.clone()).collect(),
        records,
        final_theta: last_theta,
        final_scales,
        final_weights: last_weights,
        xi,
        truth: regions.iter().map(|r| r.truth.unknowns()).collect(),
        snaps,
        stop,
        max_abs_weight: net.max_abs_param(),
        network: net,
        optimizer: adam,
    })
}
