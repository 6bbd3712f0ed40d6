//! Implanted-ion depth profiles: table ingestion, Gaussian surrogates,
//! retained-fraction overlap with the pillar height, and a vacancy proxy.

use crate::error::{Error, Result};

/// Normalized implanted-ion depth profile on a strictly increasing grid.
///
/// `ion_density` integrates to 1 over the grid (trapezoid rule);
/// `vacancy_density` is in vacancies per ion per nm and is not normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthProfile {
    pub depth_nm: Vec<f64>,
    pub ion_density: Vec<f64>,
    pub vacancy_density: Vec<f64>,
}

/// Layer stack seen by the beam: sacrificial oxide on top, then the
/// retained window `[hnp_top_depth, hnp_top_depth + hnp_height]` measured
/// from the oxide/pillar interface.
#[derive(Debug, Clone, PartialEq)]
pub struct StackSpec {
    pub oxide_thickness_nm: f64,
    pub hnp_top_depth_nm: f64,
    pub hnp_height_nm: f64,
}

impl StackSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("oxide_thickness", self.oxide_thickness_nm),
            ("hnp_top_depth", self.hnp_top_depth_nm),
            ("hnp_height", self.hnp_height_nm),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Domain(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (xs[1] - xs[0]) * (ys[0] + ys[1]) / 2.0)
        .sum()
}

impl DepthProfile {
    /// Build from raw columns, checking monotonicity and renormalizing the
    /// ion density to unit area.
    pub fn new(depth_nm: Vec<f64>, ion_density: Vec<f64>, vacancy_density: Vec<f64>) -> Result<Self> {
        if depth_nm.len() < 2 {
            return Err(Error::Format("profile needs at least 2 rows".into()));
        }
        if depth_nm.len() != ion_density.len() || depth_nm.len() != vacancy_density.len() {
            return Err(Error::Format("profile column lengths differ".into()));
        }
        if depth_nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Format("depth grid must be strictly increasing".into()));
        }
        if ion_density.iter().chain(vacancy_density.iter()).any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::Format("densities must be finite and non-negative".into()));
        }
        let area = trapezoid(&depth_nm, &ion_density);
        if area <= 0.0 {
            return Err(Error::Format("ion density integrates to zero".into()));
        }
        let ion_density = ion_density.iter().map(|v| v / area).collect();
        Ok(DepthProfile {
            depth_nm,
            ion_density,
            vacancy_density,
        })
    }

    /// Mean implantation depth (first moment of the ion density).
    pub fn mean_depth_nm(&self) -> f64 {
        let weighted: Vec<f64> = self
            .depth_nm
            .iter()
            .zip(&self.ion_density)
            .map(|(x, y)| x * y)
            .collect();
        trapezoid(&self.depth_nm, &weighted)
    }

    /// Serialize as CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("depth_nm,ion_density,vacancy_density\n");
        for i in 0..self.depth_nm.len() {
            out.push_str(&format!(
                "{:.9e},{:.9e},{:.9e}\n",
                self.depth_nm[i], self.ion_density[i], self.vacancy_density[i]
            ));
        }
        out
    }
}

/// Parse a two- or three-column table (whitespace or comma separated).
///
/// Columns: depth [nm], ion density, optional vacancy density. Lines that do
/// not start with a number (headers, comments) are skipped.
pub fn load_profile(text: &str) -> Result<DepthProfile> {
    let mut depth = Vec::new();
    let mut ion = Vec::new();
    let mut vac = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace() || c == ';')
            .filter(|s| !s.is_empty())
            .collect();
        let parsed: Option<Vec<f64>> = fields.iter().map(|f| f.parse::<f64>().ok()).collect();
        let Some(values) = parsed else {
            // header or comment line
            continue;
        };
        if values.len() < 2 {
            continue;
        }
        depth.push(values[0]);
        ion.push(values[1]);
        vac.push(if values.len() > 2 { values[2] } else { 0.0 });
    }
    DepthProfile::new(depth, ion, vac)
}

/// Gaussian surrogate profile with range `rp` and straggle `drp`,
/// truncated at rp +- 5 drp (clipped at zero depth) and renormalized.
pub fn gaussian_profile(rp_nm: f64, drp_nm: f64, grid_step_nm: f64) -> Result<DepthProfile> {
    if rp_nm <= 0.0 || drp_nm <= 0.0 || grid_step_nm <= 0.0 {
        return Err(Error::Domain(
            "range, straggle and grid step must be positive".into(),
        ));
    }
    let lo = (rp_nm - 5.0 * drp_nm).max(0.0);
    let hi = rp_nm + 5.0 * drp_nm;
    let n = ((hi - lo) / grid_step_nm).ceil() as usize + 1;
    let mut depth = Vec::with_capacity(n);
    let mut ion = Vec::with_capacity(n);
    for i in 0..n {
        let x = lo + i as f64 * grid_step_nm;
        depth.push(x);
        let z = (x - rp_nm) / drp_nm;
        ion.push((-0.5 * z * z).exp());
    }
    let vac = vec![0.0; depth.len()];
    DepthProfile::new(depth, ion, vac)
}

/// Fraction of implanted ions retained in the stack's window after the
/// sacrificial oxide is stripped. Mass stopped within the oxide is lost.
pub fn retained_fraction(profile: &DepthProfile, stack: &StackSpec) -> Result<f64> {
    stack.validate()?;
    let lo = stack.oxide_thickness_nm + stack.hnp_top_depth_nm;
    let hi = lo + stack.hnp_height_nm;
    Ok(integrate_window(&profile.depth_nm, &profile.ion_density, lo, hi))
}

/// Integral of the vacancy density over a depth window [lo, hi] in nm.
pub fn vacancy_proxy(profile: &DepthProfile, window_nm: (f64, f64)) -> Result<f64> {
    let (lo, hi) = window_nm;
    if !(lo.is_finite() && hi.is_finite()) || hi < lo {
        return Err(Error::Domain(format!("bad depth window [{lo}, {hi}]")));
    }
    Ok(integrate_window(&profile.depth_nm, &profile.vacancy_density, lo, hi))
}

/// Trapezoid integral of a piecewise-linear density restricted to [lo, hi].
/// Windows outside the grid contribute zero.
fn integrate_window(x: &[f64], y: &[f64], lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..x.len() - 1 {
        let (x0, x1) = (x[i], x[i + 1]);
        let a = x0.max(lo);
        let b = x1.min(hi);
        if b <= a {
            continue;
        }
        let slope = (y[i + 1] - y[i]) / (x1 - x0);
        let ya = y[i] + slope * (a - x0);
        let yb = y[i] + slope * (b - x0);
        total += (b - a) * (ya + yb) / 2.0;
    }
    total
}
