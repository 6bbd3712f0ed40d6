//! Monte-Carlo click-stream generation for N pulsed emitters with detector
//! imperfections, the pulsed g2 correlator, the background-corrected g2
//! model, and camera-image synthesis.

use crate::error::{Error, Result};
use crate::levels::ExcitationSpec;
use crate::rng::stream_rng;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson};

/// Single-photon detector model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorSpec {
    pub efficiency: f64,
    pub dark_rate_hz: f64,
    pub dead_time_s: f64,
    pub jitter_sigma_s: f64,
}

impl DetectorSpec {
    pub fn ideal() -> Self {
        DetectorSpec {
            efficiency: 1.0,
            dark_rate_hz: 0.0,
            dead_time_s: 0.0,
            jitter_sigma_s: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::Domain(format!(
                "efficiency must be in [0,1], got {}",
                self.efficiency
            )));
        }
        for (name, v) in [
            ("dark_rate", self.dark_rate_hz),
            ("dead_time", self.dead_time_s),
            ("jitter_sigma", self.jitter_sigma_s),
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

/// Timestamped detection events. Timestamps are integer picoseconds,
/// sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickStream {
    pub timestamps_ps: Vec<i64>,
    pub channels: Vec<u8>,
    pub pulse_period_ps: i64,
    pub n_pulses: u64,
}

impl ClickStream {
    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# pulse_period_ps={} n_pulses={}\ntimestamp_ps,channel\n",
            self.pulse_period_ps, self.n_pulses
        );
        for (t, c) in self.timestamps_ps.iter().zip(&self.channels) {
            out.push_str(&format!("{t},{c}\n"));
        }
        out
    }
}

const PS_PER_S: f64 = 1e12;

/// Parameters for one simulated acquisition.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamParams {
    pub n_emitters: usize,
    pub excitation: ExcitationSpec,
    pub lifetime_s: f64,
    pub detector: DetectorSpec,
    pub n_pulses: u64,
    pub period_s: f64,
    /// Uncorrelated background counts [counts/s], on top of detector darks.
    pub background_rate_hz: f64,
    pub seed: u64,
}

/// Simulate a pulsed acquisition. Per pulse each emitter is excited with
/// probability 1 - exp(-sigma phi t_p), emits once after an exponential
/// delay, and the click survives detection with the configured efficiency.
/// Dark and background counts are Poisson-uniform over the acquisition;
/// jitter is Gaussian; dead-time pruning drops clicks that arrive within
/// the dead window of the previous accepted click.
pub fn simulate_stream(params: &StreamParams) -> Result<ClickStream> {
    params.excitation.validate()?;
    params.detector.validate()?;
    if !(params.lifetime_s > 0.0 && params.period_s > 0.0) {
        return Err(Error::Domain("lifetime and period must be positive".into()));
    }
    let mut rng = stream_rng(params.seed, "click-stream");
    let p_exc = params.excitation.excitation_probability();
    let exp = Exp::new(1.0 / params.lifetime_s).expect("positive lifetime");
    let duration_s = params.n_pulses as f64 * params.period_s;

    let mut times_s: Vec<f64> = Vec::new();
    for pulse in 0..params.n_pulses {
        let t0 = pulse as f64 * params.period_s;
        for _ in 0..params.n_emitters {
            if p_exc >= 1.0 || rng.gen::<f64>() < p_exc {
                if params.detector.efficiency >= 1.0
                    || rng.gen::<f64>() < params.detector.efficiency
                {
                    times_s.push(t0 + exp.sample(&mut rng));
                }
            }
        }
    }

    let noise_rate = params.detector.dark_rate_hz + params.background_rate_hz;
    if noise_rate > 0.0 && duration_s > 0.0 {
        let n_noise = Poisson::new(noise_rate * duration_s)
            .expect("positive mean")
            .sample(&mut rng) as u64;
        for _ in 0..n_noise {
            times_s.push(rng.gen::<f64>() * duration_s);
        }
    }

    if params.detector.jitter_sigma_s > 0.0 {
        let jitter = Normal::new(0.0, params.detector.jitter_sigma_s).expect("positive sigma");
        for t in times_s.iter_mut() {
            *t += jitter.sample(&mut rng);
        }
    }

    let mut stamps: Vec<i64> = times_s
        .into_iter()
        .filter(|&t| t >= 0.0)
        .map(|t| (t * PS_PER_S).round() as i64)
        .collect();
    stamps.sort_unstable();

    if params.detector.dead_time_s > 0.0 {
        let dead_ps = (params.detector.dead_time_s * PS_PER_S).round() as i64;
        let mut kept = Vec::with_capacity(stamps.len());
        let mut last: i64 = i64::MIN / 2;
        for t in stamps {
            if t - last >= dead_ps {
                kept.push(t);
                last = t;
            }
        }
        stamps = kept;
    }

    let channels = vec![0u8; stamps.len()];
    Ok(ClickStream {
        timestamps_ps: stamps,
        channels,
        pulse_period_ps: (params.period_s * PS_PER_S).round() as i64,
        n_pulses: params.n_pulses,
    })
}

/// Pulsed-g2 coincidence histogram over pulse-separation index k.
#[derive(Debug, Clone, PartialEq)]
pub struct G2Histogram {
    /// Ordered-pair counts for k = -max_k ..= max_k.
    pub counts: Vec<u64>,
    pub max_k: usize,
    pub g2_zero: f64,
    pub g2_zero_sigma: f64,
}

impl G2Histogram {
    pub fn count_at(&self, k: i64) -> u64 {
        self.counts[(k + self.max_k as i64) as usize]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,counts\n");
        for (i, c) in self.counts.iter().enumerate() {
            out.push_str(&format!("{},{}\n", i as i64 - self.max_k as i64, c));
        }
        out
    }
}

/// Estimate pulsed g2(0) from a click stream.
///
/// Each click is assigned to its nearest pulse; ordered click pairs are
/// binned by pulse-index difference k. g2(0) is the k = 0 count divided by
/// the mean of the |k| >= 1 counts, with a Poisson-propagated uncertainty.
pub fn pulsed_g2(stream: &ClickStream, max_k: usize) -> Result<G2Histogram> {
    if stream.timestamps_ps.len() < 2 {
        return Err(Error::Estimation(
            "need at least 2 clicks to correlate".into(),
        ));
    }
    if stream.pulse_period_ps <= 0 || max_k == 0 {
        return Err(Error::Domain("need positive period and max_k".into()));
    }
    let period = stream.pulse_period_ps;

    // multiplicity per pulse index, assigned by nearest pulse
    let mut indices: Vec<i64> = stream
        .timestamps_ps
        .iter()
        .map(|&t| (t + period / 2).div_euclid(period))
        .collect();
    indices.sort_unstable();
    let mut pulses: Vec<(i64, u64)> = Vec::new();
    for idx in indices {
        match pulses.last_mut() {
            Some((i, m)) if *i == idx => *m += 1,
            _ => pulses.push((idx, 1)),
        }
    }

    let mut c0: u64 = 0;
    let mut side = vec![0u64; max_k];
    for (a, &(ia, ma)) in pulses.iter().enumerate() {
        c0 += ma * (ma - 1); // ordered pairs within one pulse
        for &(ib, mb) in pulses[a + 1..].iter() {
            let dk = ib - ia;
            if dk as usize > max_k {
                break;
            }
            side[dk as usize - 1] += ma * mb;
        }
    }

    let side_sum: u64 = side.iter().sum();
    if side_sum == 0 {
        return Err(Error::Estimation("no side-peak coincidences".into()));
    }
    let mean_side = side_sum as f64 / max_k as f64;
    let g2_zero = c0 as f64 / mean_side;
    // Poisson counting statistics on the zero bin and the side-peak sum
    let rel = (1.0 / (c0 as f64).max(1.0) + 1.0 / side_sum as f64).sqrt();
    let g2_zero_sigma = if c0 == 0 {
        // upper-bound style error when the zero bin is empty
        1.0 / mean_side
    } else {
        g2_zero * rel
    };

    let mut counts = vec![0u64; 2 * max_k + 1];
    counts[max_k] = c0;
    for k in 1..=max_k {
        counts[max_k + k] = side[k - 1];
        counts[max_k - k] = side[k - 1];
    }
    Ok(G2Histogram {
        counts,
        max_k,
        g2_zero,
        g2_zero_sigma,
    })
}

/// Closed-form pulsed g2(0) for N emitters mixed with uncorrelated
/// Poissonian background; `signal_fraction` is the fraction of detected
/// clicks that come from the emitters.
pub fn g2_with_background(n_emitters: usize, signal_fraction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&signal_fraction) {
        return Err(Error::Domain(format!(
            "signal fraction must be in [0,1], got {signal_fraction}"
        )));
    }
    let rho = signal_fraction;
    let g2_signal = if n_emitters == 0 {
        if rho > 0.0 {
            return Err(Error::Domain(
                "nonzero signal fraction needs at least one emitter".into(),
            ));
        }
        0.0
    } else {
        crate::geometry::g2_zero_model(n_emitters)?
    };
    Ok(rho * rho * g2_signal + 2.0 * rho * (1.0 - rho) + (1.0 - rho) * (1.0 - rho))
}

/// Solve the background model for the signal fraction that produces a
/// target g2(0) (bisection on the monotone decreasing closed form).
pub fn solve_signal_fraction(n_emitters: usize, target_g2: f64) -> Result<f64> {
    let g_min = g2_with_background(n_emitters, 1.0)?;
    if !(g_min..=1.0).contains(&target_g2) {
        return Err(Error::Domain(format!(
            "target g2 {target_g2} outside attainable range [{g_min}, 1]"
        )));
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g2_with_background(n_emitters, mid)? > target_g2 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Pixelated photon-count image.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraImage {
    pub counts: Vec<u64>,
    pub width: usize,
    pub height: usize,
    /// World position of the (0, 0) pixel corner, in nm.
    pub origin_nm: (f64, f64),
    pub pixel_pitch_nm: f64,
}

impl CameraImage {
    pub fn pixel(&self, x: usize, y: usize) -> u64 {
        self.counts[y * self.width + x]
    }

    /// Photon-weighted centroid in world coordinates (nm), using pixel
    /// centers. Returns None for an empty image.
    pub fn centroid_nm(&self) -> Option<(f64, f64)> {
        let total: u64 = self.counts.iter().sum();
        if total == 0 {
            return None;
        }
        let mut sx = 0.0;
        let mut sy = 0.0;
        for y in 0..self.height {
            for x in 0..self.width {
                let c = self.pixel(x, y) as f64;
                sx += c * (self.origin_nm.0 + (x as f64 + 0.5) * self.pixel_pitch_nm);
                sy += c * (self.origin_nm.1 + (y as f64 + 0.5) * self.pixel_pitch_nm);
            }
        }
        Some((sx / total as f64, sy / total as f64))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width).map(|x| self.pixel(x, y).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Plain (P2) PGM rendering, grey levels scaled to the peak count.
    pub fn to_pgm(&self) -> String {
        let peak = self.counts.iter().copied().max().unwrap_or(0).max(1);
        let mut out = format!("P2\n{} {}\n255\n", self.width, self.height);
        for y in 0..self.height {
            let row: Vec<String> = (0..self.width)
                .map(|x| ((self.pixel(x, y) * 255) / peak).to_string())
                .collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

/// Splat photons from point emitters through a Gaussian PSF onto a pixel
/// grid. `exposure_clicks` photons are distributed uniformly over the
/// emitters.
pub fn camera_image(
    emitter_positions_nm: &[(f64, f64)],
    psf_sigma_nm: f64,
    pixel_pitch_nm: f64,
    exposure_clicks: u64,
    seed: u64,
) -> Result<CameraImage> {
    if !(pixel_pitch_nm > 0.0) {
        return Err(Error::Domain("pixel pitch must be positive".into()));
    }
    if !(psf_sigma_nm >= 0.0) {
        return Err(Error::Domain("PSF sigma must be non-negative".into()));
    }
    let margin = 5.0 * psf_sigma_nm + pixel_pitch_nm;
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(x, y) in emitter_positions_nm {
        min_x = min_x.min(x);
        min_y = min_y.min(y);
        max_x = max_x.max(x);
        max_y = max_y.max(y);
    }
    if emitter_positions_nm.is_empty() {
        min_x = 0.0;
        min_y = 0.0;
        max_x = 0.0;
        max_y = 0.0;
    }
    let origin = (min_x - margin, min_y - margin);
    let width = (((max_x + margin) - origin.0) / pixel_pitch_nm).ceil() as usize + 1;
    let height = (((max_y + margin) - origin.1) / pixel_pitch_nm).ceil() as usize + 1;

    let mut counts = vec![0u64; width * height];
    if !emitter_positions_nm.is_empty() && exposure_clicks > 0 {
        let mut rng = stream_rng(seed, "camera-image");
        let normal = Normal::new(0.0, psf_sigma_nm.max(f64::MIN_POSITIVE)).expect("sigma");
        for _ in 0..exposure_clicks {
            let (ex, ey) = emitter_positions_nm[rng.gen_range(0..emitter_positions_nm.len())];
            let x = ex + if psf_sigma_nm > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            let y = ey + if psf_sigma_nm > 0.0 { normal.sample(&mut rng) } else { 0.0 };
            let px = ((x - origin.0) / pixel_pitch_nm).floor();
            let py = ((y - origin.1) / pixel_pitch_nm).floor();
            if px >= 0.0 && py >= 0.0 && (px as usize) < width && (py as usize) < height {
                counts[py as usize * width + px as usize] += 1;
            }
        }
    }
    Ok(CameraImage {
        counts,
        width,
        height,
        origin_nm: origin,
        pixel_pitch_nm,
    })
}
