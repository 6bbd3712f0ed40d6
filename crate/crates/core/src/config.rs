//! Experiment configuration: a TOML tree in which every physical quantity
//! is a string with an explicit unit suffix ("568 us", "2e19 /cm2/s"),
//! parsed by a small unit-aware reader. Unknown keys are rejected.

use crate::bloch::{CoherenceParams, SignalMode};
use crate::error::{Error, Result};
use crate::geometry::{ArrayGeometry, ExcitationSpot, OccupancyModel, DEFAULT_NA};
use crate::levels::{ExcitationSpec, LevelSystem};
use crate::profile::StackSpec;
use crate::stream::DetectorSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A physical quantity carrying its unit, e.g. "32 us" or "2e19 /cm2/s".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Qty(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dim {
    Time,
    Length,
    Frequency,
    ArealDensity,
    Flux,
    Area,
    Rate,
}

fn unit_factor(unit: &str, dim: Dim) -> Option<f64> {
    // canonical units: s, nm, Hz, /cm2, /cm2/s, cm2, /s
    match dim {
        Dim::Time => match unit {
            "s" => Some(1.0),
            "ms" => Some(1e-3),
            "us" => Some(1e-6),
            "ns" => Some(1e-9),
            "ps" => Some(1e-12),
            _ => None,
        },
        Dim::Length => match unit {
            "nm" => Some(1.0),
            "um" => Some(1e3),
            "mm" => Some(1e6),
            "cm" => Some(1e7),
            "m" => Some(1e9),
            _ => None,
        },
        Dim::Frequency => match unit {
            "Hz" => Some(1.0),
            "kHz" => Some(1e3),
            "MHz" => Some(1e6),
            "GHz" => Some(1e9),
            _ => None,
        },
        Dim::ArealDensity => match unit {
            "/cm2" | "cm-2" => Some(1.0),
            _ => None,
        },
        Dim::Flux => match unit {
            "/cm2/s" | "cm-2s-1" => Some(1.0),
            _ => None,
        },
        Dim::Area => match unit {
            "cm2" => Some(1.0),
            "nm2" => Some(1e-14),
            _ => None,
        },
        Dim::Rate => match unit {
            "/s" | "Hz" | "cps" => Some(1.0),
            "/ms" | "kHz" | "kcps" => Some(1e3),
            _ => None,
        },
    }
}

impl Qty {
    fn parse(&self, dim: Dim) -> Result<f64> {
        let s = self.0.trim();
        // infinities are legal for coherence times
        if dim == Dim::Time && (s == "inf" || s == "infinite") {
            return Ok(f64::INFINITY);
        }
        let split = s
            .find(|c: char| c.is_ascii_alphabetic() || c == '/')
            .ok_or_else(|| Error::Format(format!("quantity '{s}' is missing a unit")))?;
        // guard against the exponent 'e' being taken as a unit
        let (num_str, unit) = {
            let (a, b) = s.split_at(split);
            if b.starts_with('e') && b.len() > 1 && b[1..2].chars().all(|c| c.is_ascii_digit() || c == '-' || c == '+')
            {
                let rest = &b[1..];
                let end = rest
                    .find(|c: char| c.is_ascii_alphabetic() || c == '/')
                    .unwrap_or(rest.len());
                (format!("{a}e{}", &rest[..end]), rest[end..].trim())
            } else {
                (a.to_string(), b.trim())
            }
        };
        let value: f64 = num_str
            .trim()
            .parse()
            .map_err(|_| Error::Format(format!("bad number in quantity '{s}'")))?;
        let factor = unit_factor(unit, dim)
            .ok_or_else(|| Error::Format(format!("unit '{unit}' invalid in '{s}'")))?;
        Ok(value * factor)
    }

    pub fn seconds(&self) -> Result<f64> {
        self.parse(Dim::Time)
    }
    pub fn nanometers(&self) -> Result<f64> {
        self.parse(Dim::Length)
    }
    pub fn hertz(&self) -> Result<f64> {
        self.parse(Dim::Frequency)
    }
    /// Frequency quantity as an angular rate in rad/s.
    pub fn rad_per_s(&self) -> Result<f64> {
        Ok(2.0 * std::f64::consts::PI * self.parse(Dim::Frequency)?)
    }
    pub fn per_cm2(&self) -> Result<f64> {
        self.parse(Dim::ArealDensity)
    }
    pub fn per_cm2_per_s(&self) -> Result<f64> {
        self.parse(Dim::Flux)
    }
    pub fn cm2(&self) -> Result<f64> {
        self.parse(Dim::Area)
    }
    pub fn per_s(&self) -> Result<f64> {
        self.parse(Dim::Rate)
    }
}

// ---------------------------------------------------------------------------
// Config sections

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub pitch: Qty,
    pub rows: usize,
    pub cols: usize,
    pub hnp_inner_radius: Qty,
    pub critical_dimension: Qty,
    pub hnp_height: Qty,
    pub spot_center: Option<[Qty; 2]>,
    pub spot_diameter: Option<Qty>,
    pub wavelength: Qty,
    pub numerical_aperture: Option<f64>,
}

impl GeometrySection {
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        let g = ArrayGeometry {
            pitch_nm: self.pitch.nanometers()?,
            rows: self.rows,
            cols: self.cols,
            hnp_inner_radius_nm: self.hnp_inner_radius.nanometers()?,
            critical_dimension_nm: self.critical_dimension.nanometers()?,
            hnp_height_nm: self.hnp_height.nanometers()?,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn spot(&self) -> Result<ExcitationSpot> {
        let wavelength = self.wavelength.nanometers()?;
        let center = match &self.spot_center {
            Some([x, y]) => (x.nanometers()?, y.nanometers()?),
            None => (0.0, 0.0),
        };
        let diameter = match &self.spot_diameter {
            Some(d) => d.nanometers()?,
            None => 1.22 * wavelength / self.numerical_aperture.unwrap_or(DEFAULT_NA),
        };
        let spot = ExcitationSpot {
            center_nm: center,
            diameter_nm: diameter,
            wavelength_nm: wavelength,
        };
        spot.validate()?;
        Ok(spot)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancySection {
    pub dose: Qty,
    pub retention_fraction: f64,
    pub activation_fraction: f64,
    pub k_max: Option<usize>,
}

impl OccupancySection {
    pub fn model(&self, capture_area_cm2: f64) -> Result<OccupancyModel> {
        let m = OccupancyModel {
            dose_per_cm2: self.dose.per_cm2()?,
            capture_area_cm2,
            retention_fraction: self.retention_fraction,
            activation_fraction: self.activation_fraction,
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    /// Path to a tabulated profile; when absent the Gaussian surrogate
    /// built from `range`/`straggle` is used.
    pub file: Option<String>,
    pub range: Option<Qty>,
    pub straggle: Option<Qty>,
    pub grid_step: Option<Qty>,
    pub oxide_thickness: Qty,
    pub hnp_top_depth: Qty,
    pub window_height: Qty,
}

impl ProfileSection {
    pub fn stack(&self) -> Result<StackSpec> {
        let s = StackSpec {
            oxide_thickness_nm: self.oxide_thickness.nanometers()?,
            hnp_top_depth_nm: self.hnp_top_depth.nanometers()?,
            hnp_height_nm: self.window_height.nanometers()?,
        };
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsSection {
    /// "main_text" or "caption_variant".
    pub preset: String,
    pub n_pulses: Option<usize>,
}

impl LevelsSection {
    pub fn system(&self) -> Result<LevelSystem> {
        match self.preset.as_str() {
            "main_text" => Ok(LevelSystem::preset_main_text()),
            "caption_variant" => Ok(LevelSystem::preset_caption_variant()),
            other => Err(Error::Format(format!("unknown level preset '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExcitationSection {
    pub photon_flux: Qty,
    pub cross_section: Qty,
    pub pulse_width: Qty,
}

impl ExcitationSection {
    pub fn spec(&self) -> Result<ExcitationSpec> {
        let e = ExcitationSpec {
            photon_flux: self.photon_flux.per_cm2_per_s()?,
            cross_section_cm2: self.cross_section.cm2()?,
            pulse_width_s: self.pulse_width.seconds()?,
        };
        e.validate()?;
        Ok(e)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceSection {
    pub rabi_frequency: Qty,
    pub detuning: Qty,
    pub t1: Qty,
    pub t2: Qty,
    pub t2_star: Qty,
}

impl CoherenceSection {
    pub fn params(&self) -> Result<CoherenceParams> {
        let p = CoherenceParams {
            rabi_rad_per_s: self.rabi_frequency.rad_per_s()?,
            detuning_rad_per_s: self.detuning.rad_per_s()?,
            t1_s: self.t1.seconds()?,
            t2_s: self.t2.seconds()?,
            t2_star_s: self.t2_star.seconds()?,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceSection {
    pub tau_max: Option<Qty>,
    pub pulse_width_max: Option<Qty>,
    pub n_points: usize,
    pub contrast: Option<f64>,
    pub offset: Option<f64>,
    /// "analytic" or "bloch".
    pub mode: String,
    pub noise_sigma: Option<f64>,
    pub ensemble_shots: Option<usize>,
}

impl SequenceSection {
    pub fn signal_mode(&self) -> Result<SignalMode> {
        match self.mode.as_str() {
            "analytic" => Ok(SignalMode::Analytic),
            "bloch" => Ok(SignalMode::Bloch),
            other => Err(Error::Format(format!("unknown signal mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub efficiency: f64,
    pub dark_rate: Qty,
    pub dead_time: Qty,
    pub jitter_sigma: Qty,
}

impl DetectorSection {
    pub fn spec(&self) -> Result<DetectorSpec> {
        let d = DetectorSpec {
            efficiency: self.efficiency,
            dark_rate_hz: self.dark_rate.per_s()?,
            dead_time_s: self.dead_time.seconds()?,
            jitter_sigma_s: self.jitter_sigma.seconds()?,
        };
        d.validate()?;
        Ok(d)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSection {
    pub n_emitters: usize,
    pub lifetime: Qty,
    pub n_pulses: u64,
    pub period: Qty,
    pub background_rate: Qty,
    pub max_k: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LineshapeSection {
    pub lorentz_fwhm: Qty,
    pub laser_fwhm: Qty,
    pub grid_span: Qty,
    pub grid_points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrplSection {
    pub tau1: Qty,
    pub tau2: Qty,
    /// Target mean lifetime the amplitude pair is solved for.
    pub mean_lifetime: Qty,
    pub t_max: Qty,
    pub n_points: usize,
    pub noise_sigma: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImageSection {
    pub emitters: Vec<[Qty; 2]>,
    pub psf_sigma: Qty,
    pub pixel_pitch: Qty,
    pub exposure_clicks: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub model: String,
    pub initial: Vec<f64>,
    /// CSV file with x,y columns.
    pub data: String,
}

/// Whole-run configuration. Sections are optional; each experiment pulls
/// the ones it needs and fails validation when they are missing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: Option<u64>,
    pub output_dir: Option<String>,
    pub geometry: Option<GeometrySection>,
    pub occupancy: Option<OccupancySection>,
    pub profile: Option<ProfileSection>,
    pub levels: Option<LevelsSection>,
    pub excitation: Option<ExcitationSection>,
    pub coherence: Option<CoherenceSection>,
    pub sequence: Option<SequenceSection>,
    pub detector: Option<DetectorSection>,
    pub stream: Option<StreamSection>,
    pub lineshape: Option<LineshapeSection>,
    pub trpl: Option<TrplSection>,
    pub image: Option<ImageSection>,
    pub fit: Option<FitSection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format(format!("config parse: {e}")))
    }

    /// Canonical serialized form (sorted tables, stable float formatting).
    pub fn canonical_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Format(format!("config serialize: {e}")))
    }

    /// SHA-256 digest of the canonical bytes.
    pub fn digest(&self) -> Result<String> {
        let canon = self.canonical_toml()?;
        let mut hasher = Sha256::new();
        hasher.update(canon.as_bytes());
        Ok(format!("{:x}", hasher.finalize()))
    }

    /// Validate every quantity in every present section, collecting all
    /// offending keys rather than stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut errors: Vec<String> = Vec::new();
        let mut check = |name: &str, r: std::result::Result<(), Error>| {
            if let Err(e) = r {
                errors.push(format!("{name}: {e}"));
            }
        };
        if let Some(g) = &self.geometry {
            check("geometry", g.geometry().map(|_| ()));
            check("geometry.spot", g.spot().map(|_| ()));
        }
        if let Some(o) = &self.occupancy {
            check("occupancy", o.model(1e-12).map(|_| ()));
        }
        if let Some(p) = &self.profile {
            check("profile.stack", p.stack().map(|_| ()));
            if p.file.is_none() {
                for (k, q) in [("range", &p.range), ("straggle", &p.straggle), ("grid_step", &p.grid_step)] {
                    if let Some(q) = q {
                        check(&format!("profile.{k}"), q.nanometers().map(|_| ()));
                    } else {
                        check(
                            &format!("profile.{k}"),
                            Err(Error::Config("required without profile.file".into())),
                        );
                    }
                }
            }
        }
        if let Some(l) = &self.levels {
            check("levels", l.system().map(|_| ()));
        }
        if let Some(e) = &self.excitation {
            check("excitation", e.spec().map(|_| ()));
        }
        if let Some(c) = &self.coherence {
            check("coherence", c.params().map(|_| ()));
        }
        if let Some(s) = &self.sequence {
            check("sequence.mode", s.signal_mode().map(|_| ()));
            if let Some(q) = &s.tau_max {
                check("sequence.tau_max", q.seconds().map(|_| ()));
            }
            if let Some(q) = &s.pulse_width_max {
                check("sequence.pulse_width_max", q.seconds().map(|_| ()));
            }
        }
        if let Some(d) = &self.detector {
            check("detector", d.spec().map(|_| ()));
        }
        if let Some(s) = &self.stream {
            check("stream.lifetime", s.lifetime.seconds().map(|_| ()));
            check("stream.period", s.period.seconds().map(|_| ()));
            check("stream.background_rate", s.background_rate.per_s().map(|_| ()));
        }
        if let Some(l) = &self.lineshape {
            check("lineshape.lorentz_fwhm", l.lorentz_fwhm.hertz().map(|_| ()));
            check("lineshape.laser_fwhm", l.laser_fwhm.hertz().map(|_| ()));
            check("lineshape.grid_span", l.grid_span.hertz().map(|_| ()));
        }
        if let Some(t) = &self.trpl {
            for (k, q) in [
                ("tau1", &t.tau1),
                ("tau2", &t.tau2),
                ("mean_lifetime", &t.mean_lifetime),
                ("t_max", &t.t_max),
            ] {
                check(&format!("trpl.{k}"), q.seconds().map(|_| ()));
            }
        }
        if let Some(i) = &self.image {
            check("image.psf_sigma", i.psf_sigma.nanometers().map(|_| ()));
            check("image.pixel_pitch", i.pixel_pitch.nanometers().map(|_| ()));
            for (n, pos) in i.emitters.iter().enumerate() {
                check(&format!("image.emitters[{n}]"), pos[0].nanometers().map(|_| ()));
                check(&format!("image.emitters[{n}]"), pos[1].nanometers().map(|_| ()));
            }
        }
        if let Some(f) = &self.fit {
            check("fit.model", crate::fit::Model::from_id(&f.model).map(|_| ()));
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Format(errors.join("; ")))
        }
    }

    /// Seed, mandatory for stochastic experiments.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::Format("seed is mandatory for stochastic experiments".into())
        })
    }
}

/// Machine-readable run summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub experiment: String,
    pub config_digest: String,
    pub toolkit_version: String,
    pub outputs: Vec<OutputArtifact>,
    pub summary: serde_json::Value,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputArtifact {
    pub name: String,
    pub path: String,
}
