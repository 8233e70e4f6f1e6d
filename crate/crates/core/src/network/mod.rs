//! Scaled property network: a shared trunk fed by a one-hot region code, one
//! tower per unknown, and a scaling layer holding the physical magnitudes.
//!
//! All trainable values live in one flat vector. Layout: trunk weights
//! (`trunk_width x regions`), trunk biases, then for each tower its hidden
//! weights (`tower_width x trunk_width`), hidden biases, head weights and one
//! head bias per region.

mod adam;

pub use adam::AdamState;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::biot::{Unknown, UNKNOWN_COUNT};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Hidden-layer nonlinearity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn slope<T: Scalar>(self, pre: T, out: T) -> T {
        match self {
            Activation::Tanh => T::one() - out * out,
            Activation::Relu => {
                if pre > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

fn softplus<T: Scalar>(z: T) -> T {
    // log(1 + e^z) without overflow
    z.max(T::zero()) + (-z.abs()).exp().ln_1p()
}

fn sigmoid<T: Scalar>(z: T) -> T {
    T::one() / (T::one() + (-z).exp())
}

fn softplus_inverse<T: Scalar>(r: T) -> T {
    if r > T::lit(30.0) {
        r + (-(-r).exp()).ln_1p()
    } else {
        r.exp_m1().ln()
    }
}

/// Candidate scales per unknown and the current choice per region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleSet<T> {
    pub candidates: Vec<Vec<T>>,
    /// `selection[region][unknown]` indexes into `candidates[unknown]`.
    pub selection: Vec<[usize; UNKNOWN_COUNT]>,
}

impl<T: Scalar> ScaleSet<T> {
    /// Unit scales for the moduli and alpha, 0.1 for porosity and four
    /// decades for permeability starting at the largest.
    pub fn sandstone(regions: usize) -> Self {
        let one = vec![T::one()];
        Self::from_candidates(
            vec![
                one.clone(),
                one.clone(),
                one.clone(),
                one,
                vec![T::lit(0.1)],
                vec![T::lit(1e-5), T::lit(1e-6), T::lit(1e-7), T::lit(1e-8)],
            ],
            regions,
        )
    }

    /// All scales fixed to one.
    pub fn unit(regions: usize) -> Self {
        Self::from_candidates(vec![vec![T::one()]; UNKNOWN_COUNT], regions)
    }

    /// Every region starts at the first candidate of each list.
    pub fn from_candidates(candidates: Vec<Vec<T>>, regions: usize) -> Self {
        Self { candidates, selection: vec![[0; UNKNOWN_COUNT]; regions] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() != UNKNOWN_COUNT || self.candidates.iter().any(|c| c.is_empty()) {
            return Err(Error::Config("each unknown needs at least one candidate scale".into()));
        }
        if self.candidates.iter().flatten().any(|&s| !(s > T::zero()) || !s.is_finite()) {
            return Err(Error::Config("candidate scales must be positive and finite".into()));
        }
        for sel in &self.selection {
            for (n, &i) in sel.iter().enumerate() {
                if i >= self.candidates[n].len() {
                    return Err(Error::Config(format!("scale selection {i} out of range for {}", Unknown::ALL[n].symbol())));
                }
            }
        }
        Ok(())
    }

    pub fn scale(&self, region: usize, n: usize) -> T {
        self.candidates[n][self.selection[region][n]]
    }

    /// Selects the candidate closest in log distance to `value`.
    pub fn select_nearest(&mut self, region: usize, n: usize, value: T) {
        let target = value.abs().log10();
        let mut best = 0;
        let mut dist = T::infinity();
        for (i, &s) in self.candidates[n].iter().enumerate() {
            let d = (s.log10() - target).abs();
            if d < dist {
                best = i;
                dist = d;
            }
        }
        self.selection[region][n] = best;
    }
}

/// Band of raw outputs that triggers a snap and the band a snap aims for.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapBands<T> {
    pub trigger: [T; 2],
    pub target: [T; 2],
}

impl<T: Scalar> Default for SnapBands<T> {
    fn default() -> Self {
        let lo = T::lit(10f64.powf(-0.5));
        let hi = T::lit(10f64.powf(0.5));
        Self { trigger: [lo, hi], target: [lo, hi] }
    }
}

/// Result of [`ScaledMlp::scale_snap`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SnapOutcome<T> {
    Unchanged,
    Snapped { from: T, to: T },
    /// No candidate brings the raw output into the target band; the closest
    /// boundary candidate was taken.
    Saturated { from: T, to: T },
}

/// Architecture sizes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub regions: usize,
    pub trunk_width: usize,
    pub tower_width: usize,
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self { regions: 2, trunk_width: 32, tower_width: 16 }
    }
}

/// Activations kept from a forward pass for the backward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardCache<T> {
    pub region: usize,
    trunk_pre: Vec<T>,
    trunk_out: Vec<T>,
    tower_pre: Vec<Vec<T>>,
    tower_out: Vec<Vec<T>>,
    head: [T; UNKNOWN_COUNT],
    /// Raw outputs before scaling.
    pub raw: [T; UNKNOWN_COUNT],
    /// Scaled predictions.
    pub theta: [T; UNKNOWN_COUNT],
}

/// The scaled multilayer perceptron.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaledMlp<T> {
    pub shape: NetworkShape,
    pub activation: Activation,
    /// Heads passed through softplus to keep the output positive.
    pub positive_heads: [bool; UNKNOWN_COUNT],
    pub scales: ScaleSet<T>,
    pub params: Vec<T>,
}

impl<T: Scalar> ScaledMlp<T> {
    /// Random hidden weights (Glorot-uniform bounds, all inside [-1, 1]), zero
    /// hidden biases, zero head weights and head biases chosen so every raw
    /// output starts at one.
    pub fn new(
        shape: NetworkShape,
        activation: Activation,
        scales: ScaleSet<T>,
        positive_heads: [bool; UNKNOWN_COUNT],
        seed: u64,
    ) -> Result<Self> {
        if shape.regions == 0 || shape.trunk_width == 0 || shape.tower_width == 0 {
            return Err(Error::Config("network sizes must be positive".into()));
        }
        if scales.selection.len() != shape.regions {
            return Err(Error::Config("scale selections must cover every region".into()));
        }
        scales.validate()?;
        let mut net = Self { shape, activation, positive_heads, scales, params: Vec::new() };
        net.params = vec![T::zero(); net.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |params: &mut [T], fan_in: usize, fan_out: usize| {
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt().min(1.0);
            params.iter_mut().for_each(|w| *w = T::lit(rng.random_range(-bound..=bound)));
        };
        let (r, h, t) = (shape.regions, shape.trunk_width, shape.tower_width);
        fill(&mut net.params[0..h * r], r, h);
        for n in 0..UNKNOWN_COUNT {
            let o = net.tower_offset(n);
            fill(&mut net.params[o..o + t * h], h, t);
            let bias = if positive_heads[n] { softplus_inverse(T::one()) } else { T::one() };
            let hb = net.head_bias_offset(n);
            net.params[hb..hb + r].iter_mut().for_each(|b| *b = bias);
        }
        Ok(net)
    }

    pub fn param_count(&self) -> usize {
        let NetworkShape { regions: r, trunk_width: h, tower_width: t } = self.shape;
        h * r + h + UNKNOWN_COUNT * (t * h + t + t + r)
    }

    /// Length of the shared trunk block at the start of `params`.
    pub fn trunk_len(&self) -> usize {
        self.shape.trunk_width * (self.shape.regions + 1)
    }

    fn tower_offset(&self, n: usize) -> usize {
        let NetworkShape { regions: r, trunk_width: h, tower_width: t } = self.shape;
        self.trunk_len() + n * (t * h + t + t + r)
    }

    fn head_weight_offset(&self, n: usize) -> usize {
        let (h, t) = (self.shape.trunk_width, self.shape.tower_width);
        self.tower_offset(n) + t * h + t
    }

    fn head_bias_offset(&self, n: usize) -> usize {
        self.head_weight_offset(n) + self.shape.tower_width
    }

    /// Head bias of unknown `n` for `region`.
    pub fn head_bias(&self, n: usize, region: usize) -> T {
        self.params[self.head_bias_offset(n) + region]
    }

    /// Forward pass for one region.
    pub fn forward(&self, region: usize) -> ForwardCache<T> {
        assert!(region < self.shape.regions, "region {region} out of range");
        let NetworkShape { regions: r, trunk_width: h, tower_width: t } = self.shape;
        let p = &self.params;
        let trunk_pre: Vec<T> = (0..h).map(|j| p[j * r + region] + p[h * r + j]).collect();
        let trunk_out: Vec<T> = trunk_pre.iter().map(|&x| self.activation.apply(x)).collect();
        let mut tower_pre = Vec::with_capacity(UNKNOWN_COUNT);
        let mut tower_out = Vec::with_capacity(UNKNOWN_COUNT);
        let mut head = [T::zero(); UNKNOWN_COUNT];
        let mut raw = [T::zero(); UNKNOWN_COUNT];
        let mut theta = [T::zero(); UNKNOWN_COUNT];
        for n in 0..UNKNOWN_COUNT {
            let o = self.tower_offset(n);
            let pre: Vec<T> = (0..t)
                .map(|i| {
                    let row = &p[o + i * h..o + (i + 1) * h];
                    row.iter().zip(&trunk_out).fold(p[o + t * h + i], |s, (&w, &x)| s + w * x)
                })
                .collect();
            let out: Vec<T> = pre.iter().map(|&x| self.activation.apply(x)).collect();
            let hw = self.head_weight_offset(n);
            let z = out.iter().zip(&p[hw..hw + t]).fold(self.head_bias(n, region), |s, (&g, &v)| s + g * v);
            head[n] = z;
            raw[n] = if self.positive_heads[n] { softplus(z) } else { z };
            theta[n] = self.scales.scale(region, n) * raw[n];
            tower_pre.push(pre);
            tower_out.push(out);
        }
        ForwardCache { region, trunk_pre, trunk_out, tower_pre, tower_out, head, raw, theta }
    }

    /// Scaled predictions for one region.
    pub fn predict(&self, region: usize) -> [T; UNKNOWN_COUNT] {
        self.forward(region).theta
    }

    /// Gradient of `upstream . theta` with respect to every trainable value.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: &[T; UNKNOWN_COUNT]) -> Vec<T> {
        let mut grads = vec![T::zero(); self.param_count()];
        self.backward_into(cache, upstream, &mut grads);
        grads
    }

    /// As [`Self::backward`], accumulating into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache<T>, upstream: &[T; UNKNOWN_COUNT], grads: &mut [T]) {
        let NetworkShape { regions: r, trunk_width: h, tower_width: t } = self.shape;
        let region = cache.region;
        let p = &self.params;
        let mut d_trunk = vec![T::zero(); h];
        for n in 0..UNKNOWN_COUNT {
            let mut dz = upstream[n] * self.scales.scale(region, n);
            if self.positive_heads[n] {
                dz *= sigmoid(cache.head[n]);
            }
            if dz == T::zero() {
                continue;
            }
            let o = self.tower_offset(n);
            let hw = self.head_weight_offset(n);
            grads[self.head_bias_offset(n) + region] += dz;
            for i in 0..t {
                grads[hw + i] += dz * cache.tower_out[n][i];
                let dpre = dz * p[hw + i] * self.activation.slope(cache.tower_pre[n][i], cache.tower_out[n][i]);
                if dpre == T::zero() {
                    continue;
                }
                grads[o + t * h + i] += dpre;
                let row = o + i * h;
                for j in 0..h {
                    grads[row + j] += dpre * cache.trunk_out[j];
                    d_trunk[j] += dpre * p[row + j];
                }
            }
        }
        for j in 0..h {
            let d = d_trunk[j] * self.activation.slope(cache.trunk_pre[j], cache.trunk_out[j]);
            grads[j * r + region] += d;
            grads[h * r + j] += d;
        }
    }

    /// Reassigns the scale of unknown `n` in `region` when its raw output has
    /// left the trigger band, adjusting that region's head bias so the scaled
    /// prediction is unchanged.
    pub fn scale_snap(&mut self, n: usize, region: usize, bands: &SnapBands<T>) -> SnapOutcome<T> {
        let candidates = &self.scales.candidates[n];
        if candidates.len() < 2 {
            return SnapOutcome::Unchanged;
        }
        let cache = self.forward(region);
        let raw = cache.raw[n];
        if !(raw > T::zero()) || (raw >= bands.trigger[0] && raw <= bands.trigger[1]) {
            return SnapOutcome::Unchanged;
        }
        let current = self.scales.scale(region, n);
        let value = cache.theta[n];
        let (lo, hi) = (bands.target[0], bands.target[1]);
        let centre = (lo.log10() + hi.log10()) / T::lit(2.0);
        let mut best: Option<(usize, T)> = None;
        for (i, &s) in candidates.iter().enumerate() {
            let r = value / s;
            if r >= lo && r <= hi {
                let d = (r.log10() - centre).abs();
                if best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((i, d));
                }
            }
        }
        let (index, saturated) = match best {
            Some((i, _)) => (i, false),
            None => {
                // boundary candidate in the direction of the drift
                let (mut imin, mut imax) = (0, 0);
                for (i, &s) in candidates.iter().enumerate() {
                    if s < candidates[imin] {
                        imin = i;
                    }
                    if s > candidates[imax] {
                        imax = i;
                    }
                }
                (if raw > hi { imax } else { imin }, true)
            }
        };
        let to = candidates[index];
        if to == current {
            return if saturated { SnapOutcome::Saturated { from: current, to } } else { SnapOutcome::Unchanged };
        }
        let new_raw = value / to;
        let new_head = if self.positive_heads[n] { softplus_inverse(new_raw) } else { new_raw };
        let b = self.head_bias_offset(n) + region;
        self.params[b] += new_head - cache.head[n];
        self.scales.selection[region][n] = index;
        if saturated {
            SnapOutcome::Saturated { from: current, to }
        } else {
            SnapOutcome::Snapped { from: current, to }
        }
    }

    /// Largest absolute trainable value.
    pub fn max_abs_param(&self) -> T {
        self.params.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }
}
