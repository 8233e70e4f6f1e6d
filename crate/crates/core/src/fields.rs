//! Spectral derivatives, measurement noise, ensemble averaging and field
//! misfits.

use num_complex::Complex;
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::SpectralScalar;
use crate::spectral::{Derivative, FieldComponent, FocalField, SpectralOps};

/// Real or imaginary part.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Part {
    Re,
    Im,
}

impl Part {
    pub const ALL: [Part; 2] = [Part::Re, Part::Im];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn of<T: Copy>(self, z: Complex<T>) -> T {
        match self {
            Part::Re => z.re,
            Part::Im => z.im,
        }
    }
}

/// Known source arrays.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SourceTerm {
    /// x component of the solid body force.
    SolidX,
    /// Pressure equation source.
    Fluid,
}

impl SourceTerm {
    pub const ALL: [SourceTerm; 2] = [SourceTerm::SolidX, SourceTerm::Fluid];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Field values and derivatives restricted to the focal window.
#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeBundle<T> {
    samples: usize,
    fields: Vec<Vec<T>>,
    sources: Vec<Vec<T>>,
}

fn field_slot(c: FieldComponent, part: Part, d: Derivative) -> usize {
    (c.index() * 2 + part.index()) * 6 + d.index()
}

fn source_slot(s: SourceTerm, part: Part) -> usize {
    s.index() * 2 + part.index()
}

impl<T: SpectralScalar> DerivativeBundle<T> {
    /// Builds a bundle from per-slot arrays of equal length.
    pub fn from_arrays(
        samples: usize,
        mut field: impl FnMut(FieldComponent, Part, Derivative) -> Vec<T>,
        mut source: impl FnMut(SourceTerm, Part) -> Vec<T>,
    ) -> Result<Self> {
        let mut fields = vec![Vec::new(); 36];
        for c in FieldComponent::ALL {
            for part in Part::ALL {
                for d in Derivative::ALL {
                    fields[field_slot(c, part, d)] = field(c, part, d);
                }
            }
        }
        let mut sources = vec![Vec::new(); 4];
        for s in SourceTerm::ALL {
            for part in Part::ALL {
                sources[source_slot(s, part)] = source(s, part);
            }
        }
        if let Some(bad) = fields.iter().chain(&sources).find(|v| v.len() != samples) {
            return Err(Error::ShapeMismatch(format!(
                "bundle array of length {} where {samples} samples were declared",
                bad.len()
            )));
        }
        Ok(Self { samples, fields, sources })
    }

    /// Number of window samples.
    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn field(&self, c: FieldComponent, part: Part, d: Derivative) -> &[T] {
        &self.fields[field_slot(c, part, d)]
    }

    pub fn source(&self, s: SourceTerm, part: Part) -> &[T] {
        &self.sources[source_slot(s, part)]
    }
}

/// Differentiates the field on its full grid and restricts to the window.
///
/// With a cutoff, modes with `|k| > cutoff` are removed from the fields and
/// from the source arrays alike. Low-pass filtering commutes with the
/// constant-coefficient operator, so filtered noiseless data still satisfy
/// the equations exactly.
pub fn spectral_derivatives<T: SpectralScalar>(
    field: &FocalField<T>,
    cutoff: Option<T>,
) -> Result<DerivativeBundle<T>> {
    field.validate()?;
    let idx = field.window_indices()?;
    let ops = SpectralOps::new(&field.grid);
    let restrict = |v: &[T]| -> Vec<T> { idx.iter().map(|&i| v[i]).collect() };
    let part_of = |arr: &[Complex<T>], part: Part| -> Vec<T> { arr.iter().map(|&z| part.of(z)).collect() };

    let mut fields = vec![Vec::new(); 36];
    for c in FieldComponent::ALL {
        for part in Part::ALL {
            let data = part_of(field.component(c), part);
            let ds = ops.derivative_real(&data, &Derivative::ALL, cutoff);
            for (d, arr) in Derivative::ALL.iter().zip(ds) {
                fields[field_slot(c, part, *d)] = restrict(&arr);
            }
        }
    }
    let mut sources = vec![Vec::new(); 4];
    for (s, arr) in [(SourceTerm::SolidX, &field.f_ux), (SourceTerm::Fluid, &field.f_p)] {
        for part in Part::ALL {
            let data = part_of(arr, part);
            let filtered = match cutoff {
                Some(_) => ops.derivative_real(&data, &[Derivative::Value], cutoff).remove(0),
                None => data,
            };
            sources[source_slot(s, part)] = restrict(&filtered);
        }
    }
    Ok(DerivativeBundle { samples: idx.len(), fields, sources })
}

/// Applies the isotropic low-pass filter to the three unknown fields.
pub fn low_pass_field<T: SpectralScalar>(field: &FocalField<T>, cutoff: T) -> Result<FocalField<T>> {
    field.validate()?;
    let ops = SpectralOps::new(&field.grid);
    let mut out = field.clone();
    for c in FieldComponent::ALL {
        let arr = out.component_mut(c);
        ops.forward(arr);
        ops.low_pass(arr, cutoff);
        ops.inverse(arr);
    }
    Ok(out)
}

/// Wavenumber magnitude at the peak of the radially binned power spectrum of
/// the displacement, excluding the mean.
pub fn dominant_wavenumber<T: SpectralScalar>(field: &FocalField<T>) -> Result<T> {
    field.validate()?;
    let ops = SpectralOps::new(&field.grid);
    let n = field.grid.n;
    let dk = T::TAU() / field.grid.side;
    let mut bins = vec![T::zero(); n];
    for arr in [&field.ux, &field.uy] {
        let mut spec = arr.clone();
        ops.forward(&mut spec);
        for ix in 0..n {
            for iy in 0..n {
                let k = (ops.k[ix] * ops.k[ix] + ops.k[iy] * ops.k[iy]).sqrt();
                let b = (k / dk).round().to_usize().unwrap_or(0);
                if b > 0 && b < n {
                    bins[b] += spec[ix * n + iy].norm_sqr();
                }
            }
        }
    }
    let (best, _) = bins
        .iter()
        .enumerate()
        .fold((1usize, T::zero()), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
    Ok(T::from_count(best) * dk)
}

/// Distribution of the unit noise arrays.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseDistribution {
    /// Independent uniform draws on [-1, 1].
    #[default]
    Uniform,
    /// Independent standard normal draws.
    Normal,
}

/// Multiplicative measurement noise model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Noise level relative to the peak field magnitude.
    pub level: f64,
    /// Number of averaged realizations.
    pub ensemble: usize,
    pub seed: u64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.level >= 0.0) || self.ensemble == 0 {
            return Err(Error::InvalidParams("noise level must be >= 0 and ensemble >= 1".into()));
        }
        Ok(())
    }
}

fn realization_rng(seed: u64, realization: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(realization);
    rng
}

fn draw(rng: &mut ChaCha8Rng, dist: NoiseDistribution) -> f64 {
    match dist {
        NoiseDistribution::Uniform => rng.random_range(-1.0..=1.0),
        NoiseDistribution::Normal => rng.sample(StandardNormal),
    }
}

fn peak<T: SpectralScalar>(arr: &[Complex<T>]) -> T {
    arr.iter().fold(T::zero(), |m, z| m.max(z.norm()))
}

/// Adds `level * max|Z| * (N1 + i N2)` to each unknown field. The stream is
/// fixed by the seed and the realization index.
pub fn add_noise<T: SpectralScalar>(field: &FocalField<T>, spec: &NoiseSpec, realization: u64) -> FocalField<T> {
    let mut out = field.clone();
    if spec.level == 0.0 {
        return out;
    }
    let mut rng = realization_rng(spec.seed, realization);
    for c in FieldComponent::ALL {
        let arr = out.component_mut(c);
        let amp = T::lit(spec.level) * peak(arr);
        for z in arr.iter_mut() {
            let re = draw(&mut rng, spec.distribution);
            let im = draw(&mut rng, spec.distribution);
            *z = *z + Complex::new(T::lit(re), T::lit(im)) * amp;
        }
    }
    out
}

/// Mean of `spec.ensemble` noisy realizations, accumulated without storing
/// them.
pub fn averaged_noisy_field<T: SpectralScalar>(field: &FocalField<T>, spec: &NoiseSpec) -> Result<FocalField<T>> {
    spec.validate()?;
    let mut out = field.clone();
    if spec.level == 0.0 {
        return Ok(out);
    }
    let peaks = FieldComponent::ALL.map(|c| peak(field.component(c)).to_f64_lossy() * spec.level);
    let len = field.grid.len();
    let mut sums = vec![vec![Complex::new(0.0f64, 0.0); len]; 3];
    for r in 0..spec.ensemble as u64 {
        let mut rng = realization_rng(spec.seed, r);
        for sum in sums.iter_mut() {
            for s in sum.iter_mut() {
                s.re += draw(&mut rng, spec.distribution);
                s.im += draw(&mut rng, spec.distribution);
            }
        }
    }
    let inv = 1.0 / spec.ensemble as f64;
    for (c, sum) in FieldComponent::ALL.iter().zip(&sums) {
        let amp = peaks[c.index()] * inv;
        for (z, s) in out.component_mut(*c).iter_mut().zip(sum) {
            *z = *z + Complex::new(T::lit(s.re * amp), T::lit(s.im * amp));
        }
    }
    Ok(out)
}

/// Componentwise arithmetic mean of fields sharing one layout.
pub fn ensemble_average<T: SpectralScalar>(fields: &[FocalField<T>]) -> Result<FocalField<T>> {
    let first = fields
        .first()
        .ok_or_else(|| Error::ShapeMismatch("cannot average an empty list".into()))?;
    for f in fields {
        if !f.same_layout(first) || f.ux.len() != first.ux.len() {
            return Err(Error::ShapeMismatch("fields differ in grid or window".into()));
        }
    }
    let mut out = first.clone();
    let inv = T::one() / T::from_count(fields.len());
    for c in FieldComponent::ALL {
        let acc = out.component_mut(c);
        for f in &fields[1..] {
            for (a, b) in acc.iter_mut().zip(f.component(c)) {
                *a += *b;
            }
        }
        acc.iter_mut().for_each(|z| *z = *z * inv);
    }
    Ok(out)
}

/// Ordering of the six real field components in misfit reports.
pub const REAL_COMPONENTS: [(FieldComponent, Part); 6] = [
    (FieldComponent::Ux, Part::Re),
    (FieldComponent::Ux, Part::Im),
    (FieldComponent::Uy, Part::Re),
    (FieldComponent::Uy, Part::Im),
    (FieldComponent::P, Part::Re),
    (FieldComponent::P, Part::Im),
];

/// Label such as `re_ux`.
pub fn component_label(c: FieldComponent, part: Part) -> String {
    let p = match part {
        Part::Re => "re",
        Part::Im => "im",
    };
    format!("{p}_{}", c.symbol())
}

/// Normalised misfit on the focal window for the six real components.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldMisfit<T> {
    /// Per-sample misfit, in [`REAL_COMPONENTS`] order.
    pub arrays: Vec<Vec<T>>,
    pub maxima: [T; 6],
}

/// `|noisy - clean| / max|clean|` per real component over the window.
pub fn field_misfit_theta<T: SpectralScalar>(noisy: &FocalField<T>, clean: &FocalField<T>) -> Result<FieldMisfit<T>> {
    if !noisy.same_layout(clean) || noisy.ux.len() != clean.ux.len() {
        return Err(Error::ShapeMismatch("noisy and clean fields differ in layout".into()));
    }
    let idx = clean.window_indices()?;
    let mut arrays = Vec::with_capacity(6);
    let mut maxima = [T::zero(); 6];
    for (slot, (c, part)) in REAL_COMPONENTS.iter().enumerate() {
        let z = clean.component(*c);
        let zt = noisy.component(*c);
        let scale = idx.iter().fold(T::zero(), |m, &i| m.max(Float::abs(part.of(z[i]))));
        if scale == T::zero() {
            return Err(Error::Unnormalizable(match slot {
                0 => "re_ux",
                1 => "im_ux",
                2 => "re_uy",
                3 => "im_uy",
                4 => "re_p",
                _ => "im_p",
            }));
        }
        let arr: Vec<T> = idx
            .iter()
            .map(|&i| Float::abs(part.of(zt[i]) - part.of(z[i])) / scale)
            .collect();
        maxima[slot] = arr.iter().fold(T::zero(), |m, &v| m.max(v));
        arrays.push(arr);
    }
    Ok(FieldMisfit { arrays, maxima })
}
