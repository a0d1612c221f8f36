//! Campaign generation: phantoms x indentations with per-indentation loading
//! rates drawn uniformly from the protocol range, all derived from one seed.

use super::{simulate_indentation, IndentationProtocol, IndentationRecording, PhantomSpec, SensorSpec, StopReason};
use crate::{derive_seed, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub const LOADING_RATE_RANGE_MM_S: (f64, f64) = (0.1, 0.5);

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignConfig {
    pub concentrations: Vec<f64>,
    pub phantoms_per_concentration: usize,
    pub indentations_per_phantom: usize,
    pub scatterer_density_per_um: f64,
    pub sensor: SensorSpec,
    pub protocol: IndentationProtocol,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            concentrations: vec![10.0, 12.0, 14.0, 16.0, 18.0, 20.0],
            phantoms_per_concentration: 3,
            indentations_per_phantom: 15,
            scatterer_density_per_um: 0.04,
            sensor: SensorSpec::default(),
            protocol: IndentationProtocol::default(),
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.concentrations.is_empty() {
            return Err(Error::Config("campaign needs at least one concentration".into()));
        }
        if self.phantoms_per_concentration < 1 || self.indentations_per_phantom < 1 {
            return Err(Error::Config("phantom and indentation counts must be >= 1".into()));
        }
        if self.scatterer_density_per_um <= 0.0 {
            return Err(Error::Config("scatterer density must be positive".into()));
        }
        self.sensor.validate()?;
        self.protocol.validate()?;
        Ok(())
    }

    pub fn n_recordings(&self) -> usize {
        self.concentrations.len() * self.phantoms_per_concentration * self.indentations_per_phantom
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomEntry {
    pub phantom_id: String,
    pub concentration: f64,
    pub youngs_modulus: f64,
    pub scatterer_seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecordingEntry {
    pub recording_id: String,
    pub phantom_id: String,
    pub concentration: f64,
    pub loading_rate_mm_s: f64,
    pub noise_seed: u64,
    pub stop_reason: StopReason,
    pub n_scans: usize,
    pub depth_pixels: usize,
}

/// Byte-stable description of a generated campaign (field order is fixed and
/// no maps are used, so serialization is reproducible).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub seed: u64,
    pub phantoms: Vec<PhantomEntry>,
    pub recordings: Vec<RecordingEntry>,
}

fn build_phantoms(config: &CampaignConfig, seed: u64) -> Vec<PhantomSpec> {
    let mut phantoms = Vec::new();
    for (ci, &conc) in config.concentrations.iter().enumerate() {
        for p in 0..config.phantoms_per_concentration {
            let idx = (ci * config.phantoms_per_concentration + p) as u64;
            let mut spec = PhantomSpec::new(
                format!("c{conc:02.0}_p{p:02}"),
                conc,
                derive_seed(seed, "scatterers", idx),
            )
            .expect("validated concentrations");
            spec.scatterer_density_per_um = config.scatterer_density_per_um;
            phantoms.push(spec);
        }
    }
    phantoms
}

struct PlannedRecording {
    recording_id: String,
    phantom_index: usize,
    loading_rate_mm_s: f64,
    noise_seed: u64,
}

fn plan_recordings(config: &CampaignConfig, phantoms: &[PhantomSpec], seed: u64) -> Vec<PlannedRecording> {
    let mut rate_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "rates", 0));
    let mut plans = Vec::with_capacity(config.n_recordings());
    for (pi, phantom) in phantoms.iter().enumerate() {
        for k in 0..config.indentations_per_phantom {
            let global = plans.len() as u64;
            plans.push(PlannedRecording {
                recording_id: format!("{}_i{k:02}", phantom.phantom_id),
                phantom_index: pi,
                loading_rate_mm_s: rate_rng
                    .gen_range(LOADING_RATE_RANGE_MM_S.0..=LOADING_RATE_RANGE_MM_S.1),
                noise_seed: derive_seed(seed, "noise", global),
            });
        }
    }
    plans
}

/// Generates every recording of the campaign, in parallel chunks, feeding
/// each finished recording to `consume` in deterministic plan order so the
/// caller can persist or window it without holding the whole campaign in
/// memory.
pub fn generate_campaign_streaming(
    config: &CampaignConfig,
    seed: u64,
    mut consume: impl FnMut(&RecordingEntry, IndentationRecording) -> Result<()>,
) -> Result<CampaignManifest> {
    config.validate()?;
    let phantoms = build_phantoms(config, seed);
    let plans = plan_recordings(config, &phantoms, seed);

    let mut entries = Vec::with_capacity(plans.len());
    for chunk in plans.chunks(16) {
        let produced: Vec<Result<(RecordingEntry, IndentationRecording)>> = chunk
            .par_iter()
            .map(|plan| {
                let phantom = &phantoms[plan.phantom_index];
                let protocol = IndentationProtocol {
                    loading_rate_mm_s: plan.loading_rate_mm_s,
                    ..config.protocol.clone()
                };
                let rec = simulate_indentation(phantom, &config.sensor, &protocol, plan.noise_seed)?;
                let entry = RecordingEntry {
                    recording_id: plan.recording_id.clone(),
                    phantom_id: phantom.phantom_id.clone(),
                    concentration: phantom.concentration,
                    loading_rate_mm_s: plan.loading_rate_mm_s,
                    noise_seed: plan.noise_seed,
                    stop_reason: rec.stop_reason,
                    n_scans: rec.n_scans(),
                    depth_pixels: rec.depth_pixels(),
                };
                Ok((entry, rec))
            })
            .collect();
        for item in produced {
            let (entry, rec) = item?;
            consume(&entry, rec)?;
            entries.push(entry);
        }
    }

    Ok(CampaignManifest {
        seed,
        phantoms: phantoms
            .iter()
            .map(|p| PhantomEntry {
                phantom_id: p.phantom_id.clone(),
                concentration: p.concentration,
                youngs_modulus: p.youngs_modulus,
                scatterer_seed: p.scatterer_seed,
            })
            .collect(),
        recordings: entries,
    })
}

/// In-memory campaign generation.
pub fn generate_campaign(
    config: &CampaignConfig,
    seed: u64,
) -> Result<(CampaignManifest, Vec<IndentationRecording>)> {
    let mut recordings = Vec::with_capacity(config.n_recordings());
    let manifest = generate_campaign_streaming(config, seed, |_, rec| {
        recordings.push(rec);
        Ok(())
    })?;
    Ok((manifest, recordings))
}
