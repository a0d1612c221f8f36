//! Synthetic needle-probe OCE: a flat-tip needle with a compliant epoxy tip
//! sensor indents a gelatin phantom while an A-scan images both the sensor
//! interfaces and the sample speckle under deformation.
//!
//! Units: lengths in micrometers, forces in newtons, stiffnesses in N/m,
//! moduli in pascals. All randomness flows through explicit seeds, so equal
//! seeds give bit-identical recordings.

mod campaign;
mod render;

pub use campaign::{
    generate_campaign, generate_campaign_streaming, CampaignConfig, CampaignManifest,
    PhantomEntry, RecordingEntry,
};
pub use render::{detect_interface_pixel, render_ascan, RenderSettings, ScattererField};

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Reference point of the concentration-to-modulus power law: 10 wt% gelatin
/// is assigned 10 kPa.
pub const MODULUS_REF_PA: f64 = 10_000.0;
pub const CONCENTRATION_REF_WT: f64 = 10.0;
pub const MODULUS_EXPONENT: f64 = 2.0;

/// Flat punch radius of the needle tip, micrometers.
pub const PUNCH_RADIUS_UM: f64 = 150.0;
/// Poisson ratio of the (nearly incompressible) gelatin.
pub const POISSON_RATIO: f64 = 0.49;

/// One gelatin phantom. The scatterer seed pins the sample's material
/// speckle pattern, which is shared by all indentations of the phantom.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub phantom_id: String,
    /// Gelatin weight ratio, wt%.
    pub concentration: f64,
    /// Young's modulus, Pa.
    pub youngs_modulus: f64,
    pub scatterer_seed: u64,
    /// Scatterers per micrometer of material depth.
    pub scatterer_density_per_um: f64,
}

impl PhantomSpec {
    pub fn new(phantom_id: impl Into<String>, concentration: f64, scatterer_seed: u64) -> Result<Self> {
        Ok(Self {
            phantom_id: phantom_id.into(),
            concentration,
            youngs_modulus: concentration_to_modulus(concentration)?,
            scatterer_seed,
            scatterer_density_per_um: 0.04,
        })
    }
}

/// The compliant tip sensor: a translucent epoxy cylinder between the fiber
/// end and the sample, modeled as a linear spring.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SensorSpec {
    /// Optical path between the fiber/epoxy and epoxy/sample interfaces at
    /// zero load, micrometers.
    pub rest_length_um: f64,
    /// Lumped stiffness of the epoxy cylinder, N/m.
    pub spring_constant_n_per_m: f64,
    /// Unitless reflection amplitudes: fiber/epoxy and epoxy/sample.
    pub interface_reflectivities: [f64; 2],
}

impl Default for SensorSpec {
    fn default() -> Self {
        Self {
            rest_length_um: 600.0,
            spring_constant_n_per_m: 5.0,
            interface_reflectivities: [1.0, 0.8],
        }
    }
}

impl SensorSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rest_length_um <= 0.0 {
            return Err(Error::Domain("sensor rest length must be positive".into()));
        }
        if self.spring_constant_n_per_m <= 0.0 {
            return Err(Error::Domain("sensor spring constant must be positive".into()));
        }
        if self.interface_reflectivities.iter().any(|&r| r < 0.0) {
            return Err(Error::Domain("interface reflectivities must be non-negative".into()));
        }
        Ok(())
    }
}

/// How the axial strain is distributed over the sample depth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrainProfile {
    /// Uniform strain over the effective depth; keeps scatterer positions
    /// closed-form for the oracle checks.
    Uniform,
    /// Strain decays exponentially with material depth.
    DepthDecay,
}

/// Loading protocol and imaging geometry for one indentation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndentationProtocol {
    /// Stage speed, mm/s. Campaigns draw this uniformly from [0.1, 0.5].
    pub loading_rate_mm_s: f64,
    /// Stop criterion, N: loading ends once tip force reaches this value.
    pub max_force_n: f64,
    /// A-scan acquisition rate, Hz.
    pub ascan_rate_hz: f64,
    /// Depth pixels per A-scan (m).
    pub depth_pixels: usize,
    /// Axial sampling, micrometers per pixel.
    pub pixel_pitch_um: f64,
    pub render: RenderSettings,
}

impl Default for IndentationProtocol {
    fn default() -> Self {
        Self {
            loading_rate_mm_s: 0.3,
            // The spec-pinned contact model gives gelatin contact stiffnesses
            // of a few N/m, so the force stop must sit in the millinewton
            // range to be reachable before the sensor bottoms out.
            max_force_n: 0.5e-3,
            ascan_rate_hz: 5500.0,
            depth_pixels: 512,
            pixel_pitch_um: 6.5,
            render: RenderSettings::default(),
        }
    }
}

impl IndentationProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.ascan_rate_hz <= 0.0 {
            return Err(Error::Domain("A-scan rate must be positive".into()));
        }
        if self.depth_pixels < 64 {
            return Err(Error::Domain("depth must be at least 64 pixels".into()));
        }
        if self.pixel_pitch_um <= 0.0 {
            return Err(Error::Domain("pixel pitch must be positive".into()));
        }
        if self.loading_rate_mm_s <= 0.0 {
            return Err(Error::Domain("loading rate must be positive".into()));
        }
        Ok(())
    }
}

/// Why a recording stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Tip force reached the protocol's stop force.
    MaxForce,
    /// The epoxy/sample interface left the imaging window.
    Overrun,
}

/// Quasistatic mechanical state at one imposed stage displacement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuasistaticState {
    pub force_n: f64,
    pub sensor_deflection_um: f64,
    pub sample_indentation_um: f64,
}

/// A full indentation recording: the time-major A-scan matrix plus the
/// mechanical traces that produced it.
#[derive(Debug, Clone)]
pub struct IndentationRecording {
    /// T x m intensity matrix, log-scaled, values in [0, 1], time-major.
    pub ascans: ndarray::Array2<f32>,
    pub force_trace_n: Vec<f64>,
    pub sensor_deflection_trace_um: Vec<f64>,
    pub sample_indentation_trace_um: Vec<f64>,
    pub protocol: IndentationProtocol,
    pub phantom_id: String,
    pub concentration: f64,
    pub stop_reason: StopReason,
}

impl IndentationRecording {
    pub fn n_scans(&self) -> usize {
        self.ascans.nrows()
    }

    pub fn depth_pixels(&self) -> usize {
        self.ascans.ncols()
    }
}

/// Power-law surrogate mapping gelatin weight ratio to Young's modulus.
pub fn concentration_to_modulus(concentration_wt: f64) -> Result<f64> {
    if !(concentration_wt > 0.0) {
        return Err(Error::Domain(format!(
            "concentration must be positive, got {concentration_wt}"
        )));
    }
    Ok(MODULUS_REF_PA * (concentration_wt / CONCENTRATION_REF_WT).powf(MODULUS_EXPONENT))
}

/// Flat-punch contact stiffness of an elastic half-space, N/m:
/// k_t = 2 a E / (1 - nu^2) with the punch radius in meters.
pub fn contact_stiffness(youngs_modulus_pa: f64) -> f64 {
    2.0 * (PUNCH_RADIUS_UM * 1e-6) * youngs_modulus_pa / (1.0 - POISSON_RATIO * POISSON_RATIO)
}

/// Splits an imposed stage displacement between the tip sensor and the sample
/// as two springs in series, and returns the resulting tip force.
pub fn solve_quasistatic_state(
    total_displacement_um: f64,
    phantom: &PhantomSpec,
    sensor: &SensorSpec,
) -> Result<QuasistaticState> {
    if total_displacement_um < 0.0 {
        return Err(Error::Domain(format!(
            "total displacement must be non-negative, got {total_displacement_um}"
        )));
    }
    let k_sensor = sensor.spring_constant_n_per_m;
    let k_tissue = contact_stiffness(phantom.youngs_modulus);
    let sample_indentation_um = total_displacement_um * k_sensor / (k_sensor + k_tissue);
    let sensor_deflection_um = total_displacement_um - sample_indentation_um;
    let force_n = k_sensor * sensor_deflection_um * 1e-6;
    Ok(QuasistaticState {
        force_n,
        sensor_deflection_um,
        sample_indentation_um,
    })
}

/// Runs one indentation: the stage advances at the protocol's loading rate,
/// one A-scan per 1/ascan_rate, until the force stop or an imaging overrun.
pub fn simulate_indentation(
    phantom: &PhantomSpec,
    sensor: &SensorSpec,
    protocol: &IndentationProtocol,
    noise_seed: u64,
) -> Result<IndentationRecording> {
    sensor.validate()?;
    protocol.validate()?;
    let m = protocol.depth_pixels;
    let scatterers = ScattererField::for_phantom(phantom, protocol);
    let mut noise_rng = render::noise_rng(noise_seed);

    let rate_um_per_s = protocol.loading_rate_mm_s * 1e3;
    let mut rows: Vec<f32> = Vec::new();
    let mut force_trace = Vec::new();
    let mut sensor_trace = Vec::new();
    let mut sample_trace = Vec::new();
    let mut stop_reason = None;

    // Generous hard cap so a misconfigured protocol cannot spin forever.
    let max_frames = 4_000_000usize;
    for t in 0..max_frames {
        let displacement = rate_um_per_s * t as f64 / protocol.ascan_rate_hz;
        let state = solve_quasistatic_state(displacement, phantom, sensor)?;
        match render_ascan(&state, sensor, protocol, &scatterers, &mut noise_rng) {
            Ok(profile) => {
                rows.extend_from_slice(&profile);
                force_trace.push(state.force_n);
                sensor_trace.push(state.sensor_deflection_um);
                sample_trace.push(state.sample_indentation_um);
            }
            Err(Error::Overrun(_)) => {
                stop_reason = Some(StopReason::Overrun);
                break;
            }
            Err(e) => return Err(e),
        }
        if state.force_n >= protocol.max_force_n {
            stop_reason = Some(StopReason::MaxForce);
            break;
        }
    }
    let stop_reason = stop_reason.ok_or_else(|| {
        Error::Protocol(format!("recording did not terminate within {max_frames} frames"))
    })?;

    let n_scans = force_trace.len();
    if n_scans < 64 {
        return Err(Error::Protocol(format!(
            "protocol produced only {n_scans} A-scans (need at least 64); \
             raise max_force or the imaging window"
        )));
    }
    let ascans = ndarray::Array2::from_shape_vec((n_scans, m), rows)
        .expect("row count times depth matches buffer length");
    Ok(IndentationRecording {
        ascans,
        force_trace_n: force_trace,
        sensor_deflection_trace_um: sensor_trace,
        sample_indentation_trace_um: sample_trace,
        protocol: protocol.clone(),
        phantom_id: phantom.phantom_id.clone(),
        concentration: phantom.concentration,
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn phantom(conc: f64) -> PhantomSpec {
        PhantomSpec::new(format!("c{conc}_p0"), conc, 7).unwrap()
    }

    #[test]
    fn modulus_power_law_reference_points() {
        // 10 wt% is the anchor; 20 wt% follows from the square law.
        assert_relative_eq!(concentration_to_modulus(10.0).unwrap(), 10_000.0);
        assert_relative_eq!(concentration_to_modulus(20.0).unwrap(), 40_000.0);
        assert!(concentration_to_modulus(12.0).unwrap() < concentration_to_modulus(14.0).unwrap());
    }

    #[test]
    fn modulus_rejects_non_positive_concentration() {
        assert!(concentration_to_modulus(0.0).is_err());
        assert!(concentration_to_modulus(-3.0).is_err());
    }

    #[test]
    fn quasistatic_zero_displacement_is_zero_state() {
        let state = solve_quasistatic_state(0.0, &phantom(14.0), &SensorSpec::default()).unwrap();
        assert_eq!(state.force_n, 0.0);
        assert_eq!(state.sensor_deflection_um, 0.0);
        assert_eq!(state.sample_indentation_um, 0.0);
    }

    #[test]
    fn quasistatic_matched_springs_split_evenly() {
        // Pick the sensor stiffness equal to the contact stiffness.
        let p = phantom(10.0);
        let sensor = SensorSpec {
            spring_constant_n_per_m: contact_stiffness(p.youngs_modulus),
            ..SensorSpec::default()
        };
        let state = solve_quasistatic_state(100.0, &p, &sensor).unwrap();
        assert_relative_eq!(state.sensor_deflection_um, 50.0, max_relative = 1e-12);
        assert_relative_eq!(state.sample_indentation_um, 50.0, max_relative = 1e-12);
    }

    #[test]
    fn quasistatic_stiffer_sample_deflects_sensor_more() {
        let sensor = SensorSpec::default();
        let soft = solve_quasistatic_state(200.0, &phantom(10.0), &sensor).unwrap();
        // Doubling the modulus doubles the contact stiffness in the linear model.
        let mut stiff_phantom = phantom(10.0);
        stiff_phantom.youngs_modulus *= 2.0;
        let stiff = solve_quasistatic_state(200.0, &stiff_phantom, &sensor).unwrap();
        assert!(stiff.sensor_deflection_um > soft.sensor_deflection_um);
    }

    #[test]
    fn quasistatic_rejects_negative_displacement() {
        assert!(solve_quasistatic_state(-1.0, &phantom(10.0), &SensorSpec::default()).is_err());
    }

    #[test]
    fn quasistatic_conserves_displacement_and_hookes_law() {
        let sensor = SensorSpec::default();
        for conc in [10.0, 12.0, 14.0, 16.0, 18.0, 20.0] {
            for d in [1.0, 50.0, 333.3, 1000.0] {
                let s = solve_quasistatic_state(d, &phantom(conc), &sensor).unwrap();
                assert_relative_eq!(
                    s.sensor_deflection_um + s.sample_indentation_um,
                    d,
                    max_relative = 1e-9
                );
                assert_relative_eq!(
                    s.force_n,
                    sensor.spring_constant_n_per_m * s.sensor_deflection_um * 1e-6,
                    max_relative = 1e-9
                );
            }
        }
    }

    #[test]
    fn deformation_ratio_is_rate_independent() {
        // The quasistatic solve never sees the loading rate, so the split at
        // equal displacement is exactly equal across rates.
        let p = phantom(16.0);
        let sensor = SensorSpec::default();
        for d in [10.0, 120.0, 480.0] {
            let a = solve_quasistatic_state(d, &p, &sensor).unwrap();
            let b = solve_quasistatic_state(d, &p, &sensor).unwrap();
            let ratio_a = a.sensor_deflection_um / a.sample_indentation_um;
            let ratio_b = b.sensor_deflection_um / b.sample_indentation_um;
            assert_relative_eq!(ratio_a, ratio_b, max_relative = 1e-12);
        }
    }

    #[test]
    fn sensor_deflection_increases_with_concentration() {
        let sensor = SensorSpec::default();
        let d = 150.0;
        let deflections: Vec<f64> = [10.0, 12.0, 14.0, 16.0, 18.0, 20.0]
            .iter()
            .map(|&c| {
                solve_quasistatic_state(d, &phantom(c), &sensor)
                    .unwrap()
                    .sensor_deflection_um
            })
            .collect();
        for pair in deflections.windows(2) {
            assert!(pair[0] < pair[1], "deflection not increasing: {deflections:?}");
        }
    }

    fn quick_protocol() -> IndentationProtocol {
        IndentationProtocol {
            loading_rate_mm_s: 0.4,
            max_force_n: 0.3e-3,
            depth_pixels: 96,
            render: RenderSettings::noise_free(),
            ..IndentationProtocol::default()
        }
    }

    #[test]
    fn indentation_stops_at_max_force_with_valid_traces() {
        let rec = simulate_indentation(&phantom(14.0), &SensorSpec::default(), &quick_protocol(), 3)
            .unwrap();
        assert_eq!(rec.stop_reason, StopReason::MaxForce);
        assert!(rec.n_scans() >= 64);
        // Force is non-decreasing under monotone loading.
        for pair in rec.force_trace_n.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
        let last = *rec.force_trace_n.last().unwrap();
        assert!(last >= rec.protocol.max_force_n);
        // All pixels normalized.
        assert!(rec.ascans.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn indentation_force_displacement_curve_is_rate_independent() {
        let p = phantom(12.0);
        let sensor = SensorSpec::default();
        let slow = simulate_indentation(
            &p,
            &sensor,
            &IndentationProtocol { loading_rate_mm_s: 0.1, ..quick_protocol() },
            3,
        )
        .unwrap();
        let fast = simulate_indentation(
            &p,
            &sensor,
            &IndentationProtocol { loading_rate_mm_s: 0.5, ..quick_protocol() },
            3,
        )
        .unwrap();
        // Frame t of the fast run sits at the same displacement as frame 5t of
        // the slow run, so the force samples must line up there.
        assert!(slow.n_scans() > 4 * fast.n_scans());
        for t in 0..fast.n_scans() {
            if 5 * t < slow.n_scans() {
                assert_relative_eq!(
                    fast.force_trace_n[t],
                    slow.force_trace_n[5 * t],
                    max_relative = 1e-9,
                    epsilon = 1e-15
                );
            }
        }
    }

    #[test]
    fn stiffer_phantom_reaches_stop_force_at_smaller_displacement() {
        let sensor = SensorSpec::default();
        let proto = quick_protocol();
        let soft = simulate_indentation(&phantom(10.0), &sensor, &proto, 3).unwrap();
        let stiff = simulate_indentation(&phantom(20.0), &sensor, &proto, 3).unwrap();
        let total = |r: &IndentationRecording| {
            r.sensor_deflection_trace_um.last().unwrap() + r.sample_indentation_trace_um.last().unwrap()
        };
        assert!(total(&stiff) < total(&soft));
    }

    #[test]
    fn zero_max_force_stops_immediately_as_protocol_error() {
        let proto = IndentationProtocol { max_force_n: 0.0, ..quick_protocol() };
        let err = simulate_indentation(&phantom(10.0), &SensorSpec::default(), &proto, 3);
        assert!(matches!(err, Err(Error::Protocol(_))));
    }

    #[test]
    fn recordings_are_bit_identical_for_equal_seeds() {
        let p = phantom(18.0);
        let sensor = SensorSpec::default();
        let proto = IndentationProtocol {
            render: RenderSettings::default(),
            ..quick_protocol()
        };
        let a = simulate_indentation(&p, &sensor, &proto, 99).unwrap();
        let b = simulate_indentation(&p, &sensor, &proto, 99).unwrap();
        assert_eq!(a.ascans, b.ascans);
        assert_eq!(a.force_trace_n, b.force_trace_n);
        let c = simulate_indentation(&p, &sensor, &proto, 100).unwrap();
        assert_ne!(a.ascans, c.ascans);
    }

    #[test]
    fn conservation_holds_along_every_trace() {
        let rec = simulate_indentation(&phantom(16.0), &SensorSpec::default(), &quick_protocol(), 5)
            .unwrap();
        let rate_um_s = rec.protocol.loading_rate_mm_s * 1e3;
        for t in 0..rec.n_scans() {
            let imposed = rate_um_s * t as f64 / rec.protocol.ascan_rate_hz;
            let split_sum = rec.sensor_deflection_trace_um[t] + rec.sample_indentation_trace_um[t];
            assert_abs_diff_eq!(split_sum, imposed, epsilon = 1e-9 * imposed.max(1.0));
        }
    }
}
