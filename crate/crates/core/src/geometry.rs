//! Hollow-nanopillar array geometry, excitation-spot overlap, and the
//! dose-to-emitter-count Poisson occupancy blueprint.

use crate::error::{Error, Result};

const NM2_PER_CM2: f64 = 1e-14;

/// Square lattice of hollow nanopillars (HNPs).
///
/// Lengths are in nanometers. The sidewall thickness (`critical_dimension`)
/// is the annular shell that captures implanted ions.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub pitch_nm: f64,
    pub rows: usize,
    pub cols: usize,
    pub hnp_inner_radius_nm: f64,
    pub critical_dimension_nm: f64,
    pub hnp_height_nm: f64,
}

impl ArrayGeometry {
    pub fn validate(&self) -> Result<()> {
        let lengths = [
            ("pitch", self.pitch_nm),
            ("hnp_inner_radius", self.hnp_inner_radius_nm),
            ("critical_dimension", self.critical_dimension_nm),
            ("hnp_height", self.hnp_height_nm),
        ];
        for (name, v) in lengths {
            if !v.is_finite() || v <= 0.0 {
                return Err(Error::Domain(format!(
                    "{name} must be finite and positive, got {v}"
                )));
            }
        }
        if self.pitch_nm <= 2.0 * (self.hnp_inner_radius_nm + self.critical_dimension_nm) {
            return Err(Error::Domain(format!(
                "pitch {} nm does not clear the pillar outer diameter {}",
                self.pitch_nm,
                2.0 * (self.hnp_inner_radius_nm + self.critical_dimension_nm)
            )));
        }
        Ok(())
    }

    /// Lattice site positions in nm, site (i, j) at (j * pitch, i * pitch).
    pub fn site_positions(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let pitch = self.pitch_nm;
        (0..self.rows)
            .flat_map(move |i| (0..self.cols).map(move |j| (j as f64 * pitch, i as f64 * pitch)))
    }
}

/// Excitation beam spot on the array plane.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationSpot {
    pub center_nm: (f64, f64),
    pub diameter_nm: f64,
    pub wavelength_nm: f64,
}

impl ExcitationSpot {
    pub fn validate(&self) -> Result<()> {
        if !(self.diameter_nm.is_finite() && self.diameter_nm > 0.0) {
            return Err(Error::Domain(format!(
                "spot diameter must be positive, got {}",
                self.diameter_nm
            )));
        }
        Ok(())
    }

    /// Diffraction-limited spot diameter 1.22 lambda / NA.
    pub fn diffraction_limited(center_nm: (f64, f64), wavelength_nm: f64, na: f64) -> Self {
        ExcitationSpot {
            center_nm,
            diameter_nm: 1.22 * wavelength_nm / na,
            wavelength_nm,
        }
    }
}

/// Default numerical aperture chosen so that the spot diameter is 1000 nm
/// at 1534 nm excitation.
pub const DEFAULT_NA: f64 = 1.22 * 1534.0 / 1000.0;

/// Dose-to-occupancy model: the Poisson mean per excitation spot is
/// `n_hnps * dose * capture_area * retention * activation`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyModel {
    pub dose_per_cm2: f64,
    pub capture_area_cm2: f64,
    pub retention_fraction: f64,
    pub activation_fraction: f64,
}

impl OccupancyModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v, lo, hi) in [
            ("retention_fraction", self.retention_fraction, 0.0, 1.0),
            ("activation_fraction", self.activation_fraction, 0.0, 1.0),
        ] {
            if !v.is_finite() || v < lo || v > hi {
                return Err(Error::Domain(format!("{name} must be in [0,1], got {v}")));
            }
        }
        if !self.dose_per_cm2.is_finite() || self.dose_per_cm2 < 0.0 {
            return Err(Error::Domain(format!(
                "dose must be non-negative, got {}",
                self.dose_per_cm2
            )));
        }
        if !self.capture_area_cm2.is_finite() || self.capture_area_cm2 < 0.0 {
            return Err(Error::Domain(format!(
                "capture area must be non-negative, got {}",
                self.capture_area_cm2
            )));
        }
        Ok(())
    }
}

/// Number of lattice sites whose center falls inside the spot.
///
/// Membership is center-in-circle: distance to spot center <= diameter / 2.
pub fn hnps_in_spot(geom: &ArrayGeometry, spot: &ExcitationSpot) -> usize {
    let r = spot.diameter_nm / 2.0;
    let (cx, cy) = spot.center_nm;
    geom.site_positions()
        .filter(|(x, y)| {
            let dx = x - cx;
            let dy = y - cy;
            dx * dx + dy * dy <= r * r
        })
        .count()
}

/// Footprint of the hollow sidewall annulus, in cm^2.
pub fn sidewall_capture_area(geom: &ArrayGeometry) -> f64 {
    let r = geom.hnp_inner_radius_nm;
    let t = geom.critical_dimension_nm;
    std::f64::consts::PI * ((r + t) * (r + t) - r * r) * NM2_PER_CM2
}

/// Expected number of optically active ions in the spot.
pub fn expected_ions(model: &OccupancyModel, n_hnps: usize) -> f64 {
    n_hnps as f64
        * model.dose_per_cm2
        * model.capture_area_cm2
        * model.retention_fraction
        * model.activation_fraction
}

/// Poisson pmf P(k) for k = 0..=k_max.
pub fn occupancy_pmf(lambda: f64, k_max: usize) -> Result<Vec<f64>> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Domain(format!(
            "Poisson mean must be non-negative, got {lambda}"
        )));
    }
    let mut pmf = Vec::with_capacity(k_max + 1);
    // P(k) = P(k-1) * lambda / k, P(0) = e^-lambda
    let mut p = (-lambda).exp();
    for k in 0..=k_max {
        if k > 0 {
            p *= lambda / k as f64;
        }
        pmf.push(p);
    }
    Ok(pmf)
}

/// Ideal multi-emitter antibunching value (N - 1) / N.
pub fn g2_zero_model(n_emitters: usize) -> Result<f64> {
    if n_emitters == 0 {
        return Err(Error::Domain(
            "emitter-number model needs at least one emitter".into(),
        ));
    }
    Ok((n_emitters as f64 - 1.0) / n_emitters as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geom() -> ArrayGeometry {
        ArrayGeometry {
            pitch_nm: 250.0,
            rows: 1000,
            cols: 1000,
            hnp_inner_radius_nm: 25.0,
            critical_dimension_nm: 4.8,
            hnp_height_nm: 200.0,
        }
    }

    #[test]
    fn twelve_pillars_in_micron_spot() {
        let g = geom();
        g.validate().unwrap();
        // spot centered between four lattice sites
        let spot = ExcitationSpot {
            center_nm: (125_125.0, 125_125.0),
            diameter_nm: 1000.0,
            wavelength_nm: 1534.0,
        };
        assert_eq!(hnps_in_spot(&g, &spot), 12);
    }

    #[test]
    fn narrow_spot_sees_one_pillar() {
        let g = geom();
        let spot = ExcitationSpot {
            center_nm: (250.0 * 500.0, 250.0 * 500.0),
            diameter_nm: 100.0,
            wavelength_nm: 1534.0,
        };
        assert_eq!(hnps_in_spot(&g, &spot), 1);
    }

    #[test]
    fn spot_count_matches_enumeration() {
        // brute-force oracle over an explicit offset grid
        let g = geom();
        let spot = ExcitationSpot {
            center_nm: (250.0 * 500.0, 250.0 * 500.0),
            diameter_nm: 760.0,
            wavelength_nm: 1534.0,
        };
        let r = spot.diameter_nm / 2.0;
        let mut oracle = 0usize;
        for i in -10i64..=10 {
            for j in -10i64..=10 {
                let x = (500 + j) as f64 * 250.0;
                let y = (500 + i) as f64 * 250.0;
                if (0..1000).contains(&(500 + j)) && (0..1000).contains(&(500 + i)) {
                    let dx = x - spot.center_nm.0;
                    let dy = y - spot.center_nm.1;
                    if dx * dx + dy * dy <= r * r {
                        oracle += 1;
                    }
                }
            }
        }
        assert_eq!(hnps_in_spot(&g, &spot), oracle);
    }

    #[test]
    fn empty_array_counts_zero() {
        let mut g = geom();
        g.rows = 0;
        let spot = ExcitationSpot {
            center_nm: (0.0, 0.0),
            diameter_nm: 1000.0,
            wavelength_nm: 1534.0,
        };
        assert_eq!(hnps_in_spot(&g, &spot), 0);
    }

    #[test]
    fn capture_area_annulus() {
        let mut g = geom();
        g.hnp_inner_radius_nm = 25.0;
        g.critical_dimension_nm = 5.0;
        let a = sidewall_capture_area(&g);
        // pi * (30^2 - 25^2) nm^2 = 863.938 nm^2
        assert_relative_eq!(a, 8.63938e-12, max_relative = 1e-5);

        // doubling t: ratio (35^2-25^2)/(30^2-25^2) = 600/275
        g.critical_dimension_nm = 10.0;
        let a2 = sidewall_capture_area(&g);
        assert_relative_eq!(a2 / a, 600.0 / 275.0, max_relative = 1e-12);
    }

    #[test]
    fn capture_area_zero_thickness() {
        let mut g = geom();
        g.critical_dimension_nm = 0.0;
        assert_eq!(sidewall_capture_area(&g), 0.0);
    }

    #[test]
    fn expected_ions_linear_in_dose() {
        let mut m = OccupancyModel {
            dose_per_cm2: 1e12,
            capture_area_cm2: 8.639e-12,
            retention_fraction: 0.12,
            activation_fraction: 0.08,
        };
        assert_eq!(
            expected_ions(
                &OccupancyModel {
                    dose_per_cm2: 0.0,
                    ..m.clone()
                },
                12
            ),
            0.0
        );
        let lo = expected_ions(&m, 12);
        m.dose_per_cm2 = 1e14;
        let hi = expected_ions(&m, 12);
        assert_eq!(hi / lo, 100.0);
    }

    #[test]
    fn single_ion_regime_calibration() {
        // solve retention*activation so that lambda = 1 at dose 1e12, 12 HNPs
        let capture = 8.639e-12;
        let cal = 1.0 / (12.0 * 1e12 * capture);
        assert_relative_eq!(cal, 0.009646, max_relative = 1e-3);
        let m = OccupancyModel {
            dose_per_cm2: 1e12,
            capture_area_cm2: capture,
            retention_fraction: cal,
            activation_fraction: 1.0,
        };
        assert_relative_eq!(expected_ions(&m, 12), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn poisson_pmf_values() {
        let pmf = occupancy_pmf(1.0, 50).unwrap();
        assert_relative_eq!(pmf[1], (-1.0f64).exp(), max_relative = 1e-12);
        let total: f64 = pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);

        // brute-force factorial oracle at lambda = 2
        let pmf2 = occupancy_pmf(2.0, 5).unwrap();
        let mut fact = 1.0f64;
        for (k, p) in pmf2.iter().enumerate() {
            if k > 0 {
                fact *= k as f64;
            }
            let oracle = 2.0f64.powi(k as i32) * (-2.0f64).exp() / fact;
            assert_relative_eq!(*p, oracle, max_relative = 1e-12);
        }
    }

    #[test]
    fn poisson_rejects_negative_mean() {
        assert!(occupancy_pmf(-0.5, 10).is_err());
    }

    #[test]
    fn g2_model_values() {
        assert!(g2_zero_model(0).is_err());
        assert_eq!(g2_zero_model(1).unwrap(), 0.0);
        assert_eq!(g2_zero_model(2).unwrap(), 0.5);
        assert_relative_eq!(g2_zero_model(6).unwrap(), 0.8333, max_relative = 1e-4);
    }

    #[test]
    fn g2_model_monotone_bounded() {
        let mut prev = -1.0;
        for n in 1..=100 {
            let v = g2_zero_model(n).unwrap();
            assert!(v > prev);
            assert!((0.0..1.0).contains(&v));
            prev = v;
        }
    }

    #[test]
    fn default_na_gives_micron_spot() {
        let s = ExcitationSpot::diffraction_limited((0.0, 0.0), 1534.0, DEFAULT_NA);
        assert_relative_eq!(s.diameter_nm, 1000.0, max_relative = 1e-12);
    }
}
