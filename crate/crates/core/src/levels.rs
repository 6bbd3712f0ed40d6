//! Five-level population dynamics: rate-equation integration, the
//! saturation law, time-resolved decay curves, and the pulsed
//! upconversion ladder.

use crate::error::{Error, Result};

pub const N_LEVELS: usize = 5;

/// Canonical level indices.
pub const GROUND: usize = 0;
pub const TELECOM: usize = 1;
pub const NIR: usize = 2;
pub const RED: usize = 3;
pub const GREEN: usize = 4;

/// One energy level: optional emission wavelength for its transition to
/// ground and an optional lifetime (`None` marks the ground level).
#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub label: String,
    pub emission_wavelength_nm: Option<f64>,
    pub lifetime_s: Option<f64>,
}

/// Five-level system with decay branching and a per-pulse promotion map.
///
/// `branching[l][m]` is the fraction of decays from level `l` that land on
/// level `m`; rows of levels with finite lifetime must sum to 1.
/// `ladder_promotion` lists `(from, to, probability)` entries applied once
/// per drive pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSystem {
    pub levels: [Level; N_LEVELS],
    pub branching: [[f64; N_LEVELS]; N_LEVELS],
    pub ladder_promotion: Vec<(usize, usize, f64)>,
}

impl LevelSystem {
    /// Main-text lifetime preset: 164 us (518 nm), 310 us (660 nm),
    /// 700 us (980 nm), 1.2 ms telecom.
    pub fn preset_main_text() -> Self {
        Self::with_upconversion_lifetimes(164e-6, 310e-6, 700e-6)
    }

    /// Alternate reported lifetime set: 164 us, 380 us, 712 us.
    pub fn preset_caption_variant() -> Self {
        Self::with_upconversion_lifetimes(164e-6, 380e-6, 712e-6)
    }

    fn with_upconversion_lifetimes(tau_green: f64, tau_red: f64, tau_nir: f64) -> Self {
        let levels = [
            Level {
                label: "G".into(),
                emission_wavelength_nm: None,
                lifetime_s: None,
            },
            Level {
                label: "T".into(),
                emission_wavelength_nm: Some(1534.0),
                lifetime_s: Some(1.2e-3),
            },
            Level {
                label: "N1".into(),
                emission_wavelength_nm: Some(980.0),
                lifetime_s: Some(tau_nir),
            },
            Level {
                label: "R".into(),
                emission_wavelength_nm: Some(660.0),
                lifetime_s: Some(tau_red),
            },
            Level {
                label: "H".into(),
                emission_wavelength_nm: Some(518.0),
                lifetime_s: Some(tau_green),
            },
        ];
        let mut branching = [[0.0; N_LEVELS]; N_LEVELS];
        for l in 1..N_LEVELS {
            branching[l][GROUND] = 1.0;
        }
        // pi-pulse ladder: each pulse promotes one rung
        let ladder_promotion = vec![
            (GROUND, TELECOM, 1.0),
            (TELECOM, NIR, 1.0),
            (NIR, RED, 1.0),
            (RED, GREEN, 1.0),
        ];
        LevelSystem {
            levels,
            branching,
            ladder_promotion,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (l, level) in self.levels.iter().enumerate() {
            if let Some(tau) = level.lifetime_s {
                if !(tau.is_finite() && tau > 0.0) {
                    return Err(Error::Domain(format!(
                        "lifetime of level {} must be positive, got {tau}",
                        level.label
                    )));
                }
                let row: f64 = self.branching[l].iter().sum();
                if (row - 1.0).abs() > 1e-9 {
                    return Err(Error::Domain(format!(
                        "branching row of level {} sums to {row}, expected 1",
                        level.label
                    )));
                }
            }
        }
        for &(from, to, p) in &self.ladder_promotion {
            if from >= N_LEVELS || to >= N_LEVELS {
                return Err(Error::Domain(format!(
                    "promotion {from}->{to} outside the level range"
                )));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!(
                    "promotion probability must be in [0,1], got {p}"
                )));
            }
        }
        Ok(())
    }

    fn min_lifetime(&self) -> f64 {
        self.levels
            .iter()
            .filter_map(|l| l.lifetime_s)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Optical excitation: photon flux [cm^-2 s^-1], excitation cross-section
/// [cm^2], pulse width [s].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationSpec {
    pub photon_flux: f64,
    pub cross_section_cm2: f64,
    pub pulse_width_s: f64,
}

impl ExcitationSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("photon_flux", self.photon_flux),
            ("cross_section", self.cross_section_cm2),
            ("pulse_width", self.pulse_width_s),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Pump rate sigma * phi in 1/s.
    pub fn pump_rate(&self) -> f64 {
        self.cross_section_cm2 * self.photon_flux
    }

    /// Probability that one pulse excites a ground-state ion.
    pub fn excitation_probability(&self) -> f64 {
        1.0 - (-self.pump_rate() * self.pulse_width_s).exp()
    }
}

/// Population trajectory on a fixed time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub time_s: Vec<f64>,
    pub populations: Vec<[f64; N_LEVELS]>,
}

impl Trajectory {
    pub fn final_populations(&self) -> [f64; N_LEVELS] {
        *self.populations.last().expect("non-empty trajectory")
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("time_s,n_G,n_T,n_N1,n_R,n_H\n");
        for (t, n) in self.time_s.iter().zip(&self.populations) {
            out.push_str(&format!(
                "{:.9e},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
                t, n[0], n[1], n[2], n[3], n[4]
            ));
        }
        out
    }
}

fn derivative(sys: &LevelSystem, pump_rate: f64, n: &[f64; N_LEVELS]) -> [f64; N_LEVELS] {
    let mut dn = [0.0; N_LEVELS];
    // pump promotes ground to the telecom level
    let pumped = pump_rate * n[GROUND];
    dn[GROUND] -= pumped;
    dn[TELECOM] += pumped;
    for l in 1..N_LEVELS {
        if let Some(tau) = sys.levels[l].lifetime_s {
            let out = n[l] / tau;
            dn[l] -= out;
            for m in 0..N_LEVELS {
                dn[m] += out * sys.branching[l][m];
            }
        }
    }
    dn
}

/// Fixed-step RK4 integration of the rate equations starting from `initial`.
pub fn integrate_populations(
    sys: &LevelSystem,
    exc: &ExcitationSpec,
    initial: [f64; N_LEVELS],
    duration_s: f64,
    step_s: f64,
) -> Result<Trajectory> {
    sys.validate()?;
    exc.validate()?;
    if !(step_s > 0.0 && duration_s >= 0.0) {
        return Err(Error::Config("step and duration must be positive".into()));
    }
    let pump = exc.pump_rate();
    let mut fastest = sys.min_lifetime();
    if pump > 0.0 {
        fastest = fastest.min(1.0 / pump);
    }
    if fastest.is_finite() && step_s > fastest / 50.0 {
        return Err(Error::Config(format!(
            "step {step_s} s too coarse for fastest timescale {fastest} s (need <= {:.3e})",
            fastest / 50.0
        )));
    }

    let n_steps = (duration_s / step_s).ceil().max(1.0) as usize;
    let h = duration_s / n_steps as f64;
    let step_s = h;
    let mut time = Vec::with_capacity(n_steps + 1);
    let mut pops = Vec::with_capacity(n_steps + 1);
    let mut n = initial;
    time.push(0.0);
    pops.push(n);
    for i in 0..n_steps {
        let k1 = derivative(sys, pump, &n);
        let mut tmp = n;
        for j in 0..N_LEVELS {
            tmp[j] = n[j] + 0.5 * step_s * k1[j];
        }
        let k2 = derivative(sys, pump, &tmp);
        for j in 0..N_LEVELS {
            tmp[j] = n[j] + 0.5 * step_s * k2[j];
        }
        let k3 = derivative(sys, pump, &tmp);
        for j in 0..N_LEVELS {
            tmp[j] = n[j] + step_s * k3[j];
        }
        let k4 = derivative(sys, pump, &tmp);
        for j in 0..N_LEVELS {
            n[j] += step_s / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        time.push((i + 1) as f64 * step_s);
        pops.push(n);
    }
    Ok(Trajectory {
        time_s: time,
        populations: pops,
    })
}

/// Two-level saturation law R(phi) = r_max * phi / (phi + phi_sat) with
/// phi_sat = 1 / (sigma * tau).
pub fn saturation_flux(cross_section_cm2: f64, tau_effective_s: f64) -> Result<f64> {
    if cross_section_cm2 <= 0.0 || tau_effective_s <= 0.0 {
        return Err(Error::Domain(
            "cross-section and lifetime must be positive".into(),
        ));
    }
    Ok(1.0 / (cross_section_cm2 * tau_effective_s))
}

pub fn saturation_curve(
    cross_section_cm2: f64,
    tau_effective_s: f64,
    r_max: f64,
    flux_grid: &[f64],
) -> Result<Vec<f64>> {
    let phi_sat = saturation_flux(cross_section_cm2, tau_effective_s)?;
    Ok(flux_grid
        .iter()
        .map(|&phi| r_max * phi / (phi + phi_sat))
        .collect())
}

/// Biexponential decay I(t) = A1 e^{-t/tau1} + A2 e^{-t/tau2}.
pub fn trpl_decay(amplitudes: (f64, f64), lifetimes: (f64, f64), time_grid: &[f64]) -> Result<Vec<f64>> {
    let (a1, a2) = amplitudes;
    let (t1, t2) = lifetimes;
    if t1 <= 0.0 || t2 <= 0.0 {
        return Err(Error::Domain("lifetimes must be positive".into()));
    }
    Ok(time_grid
        .iter()
        .map(|&t| a1 * (-t / t1).exp() + a2 * (-t / t2).exp())
        .collect())
}

/// Result of a pulsed upconversion ladder sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct UpconversionResult {
    /// Populations immediately after the last pulse, before free decay.
    pub populations_after_pulses: [f64; N_LEVELS],
    /// Expected photons per emission channel, keyed by wavelength in nm.
    pub photon_yields: Vec<(f64, f64)>,
}

/// Apply `n_pulses` instantaneous promotion maps to a ground-state ion,
/// then cascade all excited population down via the branching matrix,
/// accumulating the expected photon count of each level-to-ground channel.
pub fn upconversion_sequence(sys: &LevelSystem, n_pulses: usize) -> Result<UpconversionResult> {
    sys.validate()?;
    if !(1..=100).contains(&n_pulses) {
        return Err(Error::Config(format!(
            "pulse count {n_pulses} outside [1, 100]"
        )));
    }
    let mut n = [0.0; N_LEVELS];
    n[GROUND] = 1.0;
    for _ in 0..n_pulses {
        let before = n;
        for &(from, to, p) in &sys.ladder_promotion {
            let moved = before[from] * p;
            n[from] -= moved;
            n[to] += moved;
        }
    }
    let populations_after_pulses = n;

    // free decay: cascade from the top level down
    let mut yields = [0.0; N_LEVELS];
    let mut amount = n;
    for l in (1..N_LEVELS).rev() {
        if sys.levels[l].lifetime_s.is_none() {
            continue;
        }
        let a = amount[l];
        amount[l] = 0.0;
        for m in 0..l {
            amount[m] += a * sys.branching[l][m];
        }
        yields[l] += a * sys.branching[l][GROUND];
    }

    let photon_yields = (1..N_LEVELS)
        .filter_map(|l| {
            sys.levels[l]
                .emission_wavelength_nm
                .map(|w| (w, yields[l]))
        })
        .collect();
    Ok(UpconversionResult {
        populations_after_pulses,
        photon_yields,
    })
}
