//! Depth-profile rendering: two sensor interface peaks plus a strained
//! speckle field, attenuation, noise, log compression.

use super::{IndentationProtocol, PhantomSpec, QuasistaticState, SensorSpec, StrainProfile};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Optical rendering knobs. All values are simulator conventions.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RenderSettings {
    /// Effective sample depth over which the indentation is absorbed, um.
    pub effective_depth_um: f64,
    /// Intensity attenuation per millimeter of in-sample depth.
    pub attenuation_per_mm: f64,
    /// Gaussian width of the interface peaks, pixels.
    pub interface_sigma_px: f64,
    /// Gaussian width of a single scatterer response, pixels.
    pub scatterer_sigma_px: f64,
    /// Sigma of the multiplicative log-normal speckle noise.
    pub speckle_sigma: f64,
    /// Sigma of additive Gaussian noise, as a fraction of full scale.
    pub additive_sigma: f64,
    /// Fixed pixel position of the fiber/epoxy interface.
    pub fiber_interface_px: f64,
    /// Scatterer-free margin beyond the epoxy/sample interface, um.
    pub surface_deadzone_um: f64,
    /// Gain of the log compression: out = ln(1 + g*I) / ln(1 + g*I_ref).
    pub log_gain: f64,
    /// Reference intensity mapped to 1.0 by the log compression.
    pub log_reference: f64,
    pub strain_profile: StrainProfile,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self {
            effective_depth_um: 2000.0,
            attenuation_per_mm: 0.5,
            interface_sigma_px: 1.5,
            scatterer_sigma_px: 1.2,
            speckle_sigma: 0.2,
            additive_sigma: 0.01,
            fiber_interface_px: 8.0,
            surface_deadzone_um: 30.0,
            log_gain: 30.0,
            log_reference: 2.0,
            strain_profile: StrainProfile::Uniform,
        }
    }
}

impl RenderSettings {
    /// Noise-free variant for closed-form checks.
    pub fn noise_free() -> Self {
        Self {
            speckle_sigma: 0.0,
            additive_sigma: 0.0,
            ..Self::default()
        }
    }
}

/// The phantom's speckle sources in material coordinates: depth below the
/// undeformed sample surface plus a reflection amplitude each. Fixed per
/// phantom, so repeated indentations image the same material.
#[derive(Debug, Clone)]
pub struct ScattererField {
    /// Material depth below the sample surface, um, ascending.
    pub depths_um: Vec<f64>,
    pub amplitudes: Vec<f64>,
}

impl ScattererField {
    pub fn for_phantom(phantom: &PhantomSpec, protocol: &IndentationProtocol) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(phantom.scatterer_seed);
        // Strain can at most halve the imaged depth of a scatterer, so twice
        // the imaging window always covers every renderable source.
        let span_um = 2.0 * protocol.depth_pixels as f64 * protocol.pixel_pitch_um;
        let start = protocol.render.surface_deadzone_um;
        let n = ((span_um - start).max(0.0) * phantom.scatterer_density_per_um).round() as usize;
        let mut depths: Vec<f64> = (0..n).map(|_| rng.gen_range(start..span_um)).collect();
        depths.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Rayleigh amplitudes: identical statistics for every concentration,
        // so brightness carries no label information.
        let sigma = 0.12;
        let amplitudes = (0..n)
            .map(|_| {
                let u: f64 = rng.gen_range(f64::EPSILON..1.0);
                sigma * (-2.0 * u.ln()).sqrt()
            })
            .collect();
        Self { depths_um: depths, amplitudes }
    }
}

pub(super) fn noise_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[inline]
fn splat_gaussian(profile: &mut [f64], center_px: f64, sigma_px: f64, amplitude: f64) {
    let lo = ((center_px - 4.0 * sigma_px).floor().max(0.0)) as usize;
    let hi = ((center_px + 4.0 * sigma_px).ceil()).min((profile.len() - 1) as f64) as usize;
    let inv_two_sigma_sq = 1.0 / (2.0 * sigma_px * sigma_px);
    for (i, slot) in profile.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let d = i as f64 - center_px;
        *slot += amplitude * (-d * d * inv_two_sigma_sq).exp();
    }
}

/// Renders one depth profile for a solved mechanical state. Returns the
/// log-compressed intensity vector of length `depth_pixels`, or an overrun
/// error when the epoxy/sample interface leaves the imaging window.
pub fn render_ascan(
    state: &QuasistaticState,
    sensor: &SensorSpec,
    protocol: &IndentationProtocol,
    scatterers: &ScattererField,
    noise_rng: &mut ChaCha8Rng,
) -> Result<Vec<f32>> {
    let m = protocol.depth_pixels;
    let pitch = protocol.pixel_pitch_um;
    let r = &protocol.render;

    let interface_px = (sensor.rest_length_um - state.sensor_deflection_um) / pitch;
    if !(0.0..m as f64).contains(&interface_px) {
        return Err(Error::Overrun(format!(
            "epoxy/sample interface at pixel {interface_px:.1}, window is [0, {m})"
        )));
    }

    let mut intensity = vec![0.0f64; m];
    splat_gaussian(
        &mut intensity,
        r.fiber_interface_px,
        r.interface_sigma_px,
        sensor.interface_reflectivities[0],
    );
    splat_gaussian(
        &mut intensity,
        interface_px,
        r.interface_sigma_px,
        sensor.interface_reflectivities[1],
    );

    // Uniform strain compresses the whole field by (1 - eps); the decaying
    // profile absorbs the same indentation asymptotically with depth.
    let strain = (state.sample_indentation_um / r.effective_depth_um).clamp(0.0, 0.5);
    for (depth_um, amp) in scatterers.depths_um.iter().zip(&scatterers.amplitudes) {
        let imaged_depth_um = match r.strain_profile {
            StrainProfile::Uniform => depth_um * (1.0 - strain),
            StrainProfile::DepthDecay => {
                depth_um - state.sample_indentation_um * (1.0 - (-depth_um / r.effective_depth_um).exp())
            }
        };
        let px = interface_px + imaged_depth_um / pitch;
        if px >= m as f64 + 5.0 {
            break; // depths ascend, nothing further can land in the window
        }
        let attenuation = (-r.attenuation_per_mm * imaged_depth_um * 1e-3).exp();
        splat_gaussian(&mut intensity, px, r.scatterer_sigma_px, amp * attenuation);
    }

    let full_scale = r.log_reference;
    let denom = (1.0 + r.log_gain * r.log_reference).ln();
    let out = intensity
        .into_iter()
        .map(|i| {
            let mut v = i;
            if r.speckle_sigma > 0.0 {
                let g: f64 = StandardNormal.sample(noise_rng);
                v *= (r.speckle_sigma * g).exp();
            }
            if r.additive_sigma > 0.0 {
                let g: f64 = StandardNormal.sample(noise_rng);
                v += r.additive_sigma * full_scale * g;
            }
            let compressed = (1.0 + r.log_gain * v.max(0.0)).ln() / denom;
            compressed.clamp(0.0, 1.0) as f32
        })
        .collect();
    Ok(out)
}

/// Argmax interface detector used by the traceability checks: finds the
/// brightest pixel beyond the fixed fiber/epoxy peak.
pub fn detect_interface_pixel(profile: &[f32], protocol: &IndentationProtocol) -> usize {
    let start = (protocol.render.fiber_interface_px + 4.0 * protocol.render.interface_sigma_px)
        .ceil() as usize;
    let (best, _) = profile
        .iter()
        .enumerate()
        .skip(start.min(profile.len().saturating_sub(1)))
        .fold((start, f32::MIN), |(bi, bv), (i, &v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        });
    best
}
