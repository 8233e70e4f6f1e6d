//! Config-driven experiments: data preparation, reconstructions and the
//! noise study.

use serde::{Deserialize, Serialize};

use crate::biot::{FrequencySpec, PoroelasticParams, Unknown, UNKNOWN_COUNT};
use crate::config::{Cutoff, ExperimentConfig, RegionSpec};
use crate::dataset::{read_dataset, DatasetMeta};
use crate::error::{Error, Result};
use crate::fields::{averaged_noisy_field, dominant_wavenumber, field_misfit_theta, add_noise, NoiseSpec};
use crate::spectral::{solve_biot_spectral, FocalField, SolverOptions};
use crate::trainer::{train, RegionData, StopReason, TrainTrace};

/// Clean field, truth and sidecar metadata of one region.
#[derive(Clone, Debug)]
pub struct RegionField {
    pub name: String,
    pub truth: PoroelasticParams<f64>,
    pub field: FocalField<f64>,
    pub meta: DatasetMeta,
}

/// Synthesizes the region with the spectral solver.
pub fn simulate_region(cfg: &ExperimentConfig, name: &str, truth: PoroelasticParams<f64>) -> Result<RegionField> {
    let fw = &cfg.forward;
    let options = SolverOptions { fluid_source: fw.fluid_source, window: fw.window, max_condition: fw.max_condition };
    let field = solve_biot_spectral(&truth, &FrequencySpec::new(fw.omega)?, &fw.source, &fw.grid, &options)?;
    let mut meta = DatasetMeta::for_field(&field, truth);
    meta.source = Some(fw.source);
    meta.fluid_source = Some(fw.fluid_source);
    Ok(RegionField { name: name.into(), truth, field, meta })
}

/// Loads or synthesizes the clean field of a configured region.
pub fn region_field(cfg: &ExperimentConfig, spec: &RegionSpec) -> Result<RegionField> {
    if let Some(path) = &spec.dataset {
        let (field, meta) = read_dataset(path)?;
        return Ok(RegionField { name: spec.name.clone(), truth: meta.truth, field, meta });
    }
    let truth = spec
        .synthetic_params()
        .ok_or_else(|| Error::Config(format!("region '{}' has no data source", spec.name)))?;
    simulate_region(cfg, &spec.name, truth)
}

/// Clean fields of every configured region.
pub fn region_fields(cfg: &ExperimentConfig) -> Result<Vec<RegionField>> {
    cfg.regions.iter().map(|s| region_field(cfg, s)).collect()
}

/// Trains on the configured regions with the configured strategy.
pub fn run_reconstruction(cfg: &ExperimentConfig) -> Result<TrainTrace> {
    cfg.validate()?;
    let regions = region_fields(cfg)?
        .into_iter()
        .map(|r| RegionData::from_field(r.name, r.truth, &r.field, None))
        .collect::<Result<Vec<_>>>()?;
    train(&regions, &cfg.network, &cfg.balance, &cfg.training, cfg.seed)
}

/// Resolves the low-pass cutoff for a clean field.
pub fn resolve_cutoff(cfg: &ExperimentConfig, clean: &FocalField<f64>) -> Result<f64> {
    match cfg.noise.cutoff {
        Cutoff::Fixed(k) => Ok(k),
        Cutoff::Auto(_) => Ok(cfg.noise.cutoff_factor * dominant_wavenumber(clean)?),
    }
}

/// Noise spec of one region; regions draw from distinct streams.
pub fn region_noise(cfg: &ExperimentConfig, region: usize, ensemble: usize) -> NoiseSpec {
    NoiseSpec {
        level: cfg.noise.level,
        ensemble,
        seed: cfg.noise.seed.wrapping_add(1_000_003 * region as u64),
        distribution: cfg.noise.distribution,
    }
}

/// One ensemble size of the noise study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudyRow {
    pub ensemble: usize,
    /// Per region, per unknown.
    pub xi: Vec<[f64; UNKNOWN_COUNT]>,
    pub predictions: Vec<[f64; UNKNOWN_COUNT]>,
    pub epochs_run: usize,
    pub stop: StopReason,
}

/// Largest single-realization field misfit per real component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MisfitRow {
    pub region: String,
    /// In `re_ux, im_ux, re_uy, im_uy, re_p, im_p` order.
    pub max_theta: [f64; 6],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseStudy {
    pub level: f64,
    pub seed: u64,
    pub cutoffs: Vec<f64>,
    pub rows: Vec<NoiseStudyRow>,
    pub misfit: Vec<MisfitRow>,
}

impl NoiseStudy {
    /// Permeability error of `region` for each ensemble size.
    pub fn kappa_errors(&self, region: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.xi[region][Unknown::Kappa.index()]).collect()
    }
}

/// Averaged noisy fields of every region for one ensemble size.
pub fn averaged_fields(cfg: &ExperimentConfig, clean: &[RegionField], ensemble: usize) -> Result<Vec<FocalField<f64>>> {
    clean
        .iter()
        .enumerate()
        .map(|(i, r)| averaged_noisy_field(&r.field, &region_noise(cfg, i, ensemble)))
        .collect()
}

/// For each ensemble size: average, denoise, differentiate and train with the
/// configured strategy. `on_averaged(ensemble, region, clean, averaged)` sees
/// each averaged field before training.
pub fn run_noise_study(
    cfg: &ExperimentConfig,
    mut on_averaged: impl FnMut(usize, usize, &RegionField, &FocalField<f64>) -> Result<()>,
) -> Result<NoiseStudy> {
    cfg.validate()?;
    let clean = region_fields(cfg)?;
    let cutoffs = clean.iter().map(|r| resolve_cutoff(cfg, &r.field)).collect::<Result<Vec<_>>>()?;
    let misfit = clean
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let noisy = add_noise(&r.field, &region_noise(cfg, i, 1), 0);
            Ok(MisfitRow { region: r.name.clone(), max_theta: field_misfit_theta(&noisy, &r.field)?.maxima })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    for &ensemble in &cfg.noise.ensembles {
        let averaged = averaged_fields(cfg, &clean, ensemble)?;
        let mut regions = Vec::with_capacity(clean.len());
        for (i, ((r, f), &k)) in clean.iter().zip(&averaged).zip(&cutoffs).enumerate() {
            on_averaged(ensemble, i, r, f)?;
            regions.push(RegionData::from_field(r.name.clone(), r.truth, f, Some(k))?);
        }
        let trace = train(&regions, &cfg.network, &cfg.balance, &cfg.training, cfg.seed)?;
        rows.push(NoiseStudyRow {
            ensemble,
            epochs_run: trace.records.len(),
            stop: trace.stop,
            xi: trace.xi,
            predictions: trace.final_theta,
        });
    }
    Ok(NoiseStudy { level: cfg.noise.level, seed: cfg.noise.seed, cutoffs, rows, misfit })
}
