//! Two-level optical Bloch dynamics and the Rabi / Ramsey / photon-echo
//! pulse-sequence engine.
//!
//! State convention: (u, v, w) with w = -1 the ground state and excited
//! population P_e = (1 + w) / 2. Drive rotates (v, w) at the Rabi rate.

use crate::error::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Coherence parameters, angular frequencies in rad/s, times in seconds.
/// Infinite times are represented by `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceParams {
    pub rabi_rad_per_s: f64,
    pub detuning_rad_per_s: f64,
    pub t1_s: f64,
    pub t2_s: f64,
    pub t2_star_s: f64,
}

impl CoherenceParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("T1", self.t1_s), ("T2", self.t2_s), ("T2*", self.t2_star_s)] {
            if v.is_nan() || v <= 0.0 {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.t1_s.is_finite() && self.t2_s.is_finite() && self.t2_s > 2.0 * self.t1_s + 1e-12 {
            return Err(Error::Domain(format!(
                "T2 = {} exceeds 2 T1 = {}",
                self.t2_s,
                2.0 * self.t1_s
            )));
        }
        Ok(())
    }
}

/// Pulse width that accumulates rotation angle theta at Rabi rate omega.
pub fn pulse_width_for_angle(rabi_rad_per_s: f64, theta: f64) -> f64 {
    theta / rabi_rad_per_s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SegmentKind {
    Drive,
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub kind: SegmentKind,
    pub duration_s: f64,
    pub rabi_rad_per_s: f64,
}

impl Segment {
    pub fn drive(duration_s: f64, rabi_rad_per_s: f64) -> Self {
        Segment {
            kind: SegmentKind::Drive,
            duration_s,
            rabi_rad_per_s,
        }
    }
    pub fn free(duration_s: f64) -> Self {
        Segment {
            kind: SegmentKind::Free,
            duration_s,
            rabi_rad_per_s: 0.0,
        }
    }
}

/// Ordered pulse sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence(pub Vec<Segment>);

impl PulseSequence {
    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Domain("pulse sequence is empty".into()));
        }
        if self.0.iter().any(|s| !(s.duration_s > 0.0)) {
            return Err(Error::Domain("segment durations must be positive".into()));
        }
        Ok(())
    }

    pub fn max_rabi(&self) -> f64 {
        self.0
            .iter()
            .filter(|s| s.kind == SegmentKind::Drive)
            .map(|s| s.rabi_rad_per_s.abs())
            .fold(0.0, f64::max)
    }
}

pub type BlochState = (f64, f64, f64);

fn bloch_derivative(s: BlochState, p: &CoherenceParams, omega: f64) -> BlochState {
    let (u, v, w) = s;
    let g2 = if p.t2_s.is_finite() { 1.0 / p.t2_s } else { 0.0 };
    let g1 = if p.t1_s.is_finite() { 1.0 / p.t1_s } else { 0.0 };
    let d = p.detuning_rad_per_s;
    (
        -u * g2 + d * v,
        -v * g2 - d * u + omega * w,
        -(w + 1.0) * g1 - omega * v,
    )
}

/// RK4 integration of the Bloch equations over a pulse sequence.
/// Returns the final state and the (time, state) trajectory.
pub fn bloch_evolve(
    state: BlochState,
    params: &CoherenceParams,
    seq: &PulseSequence,
    step_s: f64,
) -> Result<(BlochState, Vec<(f64, BlochState)>)> {
    params.validate()?;
    seq.validate()?;
    let omega_max = seq.max_rabi();
    let mut fastest = params.t2_s;
    if omega_max > 0.0 {
        fastest = fastest.min(1.0 / omega_max);
    }
    if params.detuning_rad_per_s != 0.0 {
        fastest = fastest.min(1.0 / params.detuning_rad_per_s.abs());
    }
    if !(step_s > 0.0) || (fastest.is_finite() && step_s > fastest / 50.0) {
        return Err(Error::Config(format!(
            "step {step_s} s too coarse for fastest timescale {fastest} s"
        )));
    }

    let mut s = state;
    let mut t = 0.0;
    let mut traj = vec![(0.0, s)];
    for seg in &seq.0 {
        let omega = match seg.kind {
            SegmentKind::Drive => seg.rabi_rad_per_s,
            SegmentKind::Free => 0.0,
        };
        // free segments have no drive, so the step only needs to resolve
        // relaxation and detuning precession
        let seg_step = if seg.kind == SegmentKind::Free {
            let mut fast = params.t2_s.min(params.t1_s);
            if params.detuning_rad_per_s != 0.0 {
                fast = fast.min(1.0 / params.detuning_rad_per_s.abs());
            }
            if fast.is_finite() {
                (fast / 100.0).max(step_s)
            } else {
                seg.duration_s
            }
        } else {
            step_s
        };
        let n_steps = (seg.duration_s / seg_step).ceil().max(1.0) as usize;
        let h = seg.duration_s / n_steps as f64;
        for _ in 0..n_steps {
            let k1 = bloch_derivative(s, params, omega);
            let mid1 = (s.0 + 0.5 * h * k1.0, s.1 + 0.5 * h * k1.1, s.2 + 0.5 * h * k1.2);
            let k2 = bloch_derivative(mid1, params, omega);
            let mid2 = (s.0 + 0.5 * h * k2.0, s.1 + 0.5 * h * k2.1, s.2 + 0.5 * h * k2.2);
            let k3 = bloch_derivative(mid2, params, omega);
            let end = (s.0 + h * k3.0, s.1 + h * k3.1, s.2 + h * k3.2);
            let k4 = bloch_derivative(end, params, omega);
            s = (
                s.0 + h / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
                s.1 + h / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
                s.2 + h / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
            );
            t += h;
            traj.push((t, s));
        }
    }
    Ok((s, traj))
}

pub fn excited_population(state: BlochState) -> f64 {
    (1.0 + state.2) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalMode {
    /// Closed-form envelopes.
    Analytic,
    /// Numerically integrated Bloch dynamics.
    Bloch,
}

/// Rabi signal versus pulse width.
///
/// Analytic mode returns `contrast * sin(omega t_p) + offset`; Bloch mode
/// returns `offset + contrast * P_e(t_p)` from the integrated dynamics.
pub fn rabi_experiment(
    params: &CoherenceParams,
    pulse_width_grid_s: &[f64],
    contrast: f64,
    offset: f64,
    mode: SignalMode,
) -> Result<Vec<f64>> {
    params.validate()?;
    match mode {
        SignalMode::Analytic => Ok(pulse_width_grid_s
            .iter()
            .map(|&tp| contrast * (params.rabi_rad_per_s * tp).sin() + offset)
            .collect()),
        SignalMode::Bloch => {
            let omega = params.rabi_rad_per_s;
            let step = (1.0 / omega).min(params.t2_s) / 200.0;
            pulse_width_grid_s
                .iter()
                .map(|&tp| {
                    if tp == 0.0 {
                        return Ok(offset);
                    }
                    let seq = PulseSequence(vec![Segment::drive(tp, omega)]);
                    let (s, _) = bloch_evolve((0.0, 0.0, -1.0), params, &seq, step)?;
                    Ok(offset + contrast * excited_population(s))
                })
                .collect()
        }
    }
}

/// Ramsey projection amplitude versus free-evolution time.
///
/// Analytic mode returns the envelope `exp(-tau / T2*)`. Bloch mode runs
/// pi/2 - free - pi/2 with the dephasing time `T2*` substituted for `T2`
/// and returns `2 P_e - 1`.
pub fn ramsey_experiment(
    params: &CoherenceParams,
    tau_free_grid_s: &[f64],
    pi_half_width_s: f64,
    mode: SignalMode,
) -> Result<Vec<f64>> {
    params.validate()?;
    match mode {
        SignalMode::Analytic => Ok(tau_free_grid_s
            .iter()
            .map(|&tau| (-tau / params.t2_star_s).exp())
            .collect()),
        SignalMode::Bloch => {
            let omega = params.rabi_rad_per_s;
            if (omega * pi_half_width_s - std::f64::consts::FRAC_PI_2).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "pi/2 width {pi_half_width_s} s inconsistent with Rabi rate {omega} rad/s"
                )));
            }
            let dephased = CoherenceParams {
                t2_s: params.t2_star_s,
                ..*params
            };
            let step = (1.0 / omega).min(dephased.t2_s) / 200.0;
            tau_free_grid_s
                .iter()
                .map(|&tau| {
                    let mut segs = vec![Segment::drive(pi_half_width_s, omega)];
                    if tau > 0.0 {
                        segs.push(Segment::free(tau));
                    }
                    segs.push(Segment::drive(pi_half_width_s, omega));
                    let (s, _) =
                        bloch_evolve((0.0, 0.0, -1.0), &dephased, &PulseSequence(segs), step)?;
                    Ok(2.0 * excited_population(s) - 1.0)
                })
                .collect()
        }
    }
}

/// Photon-echo amplitude versus total free-evolution time.
///
/// Sequence pi/2 - tau/2 - pi - tau/2 - pi/2; the central pi pulse
/// refocuses static dephasing. Analytic mode returns `exp(-tau / T2)`;
/// Bloch mode returns `1 - 2 P_e` (readout phase chosen so the
/// zero-delay amplitude is +1).
pub fn echo_experiment(
    params: &CoherenceParams,
    tau_free_grid_s: &[f64],
    pi_width_s: f64,
    mode: SignalMode,
) -> Result<Vec<f64>> {
    params.validate()?;
    match mode {
        SignalMode::Analytic => Ok(tau_free_grid_s
            .iter()
            .map(|&tau| (-tau / params.t2_s).exp())
            .collect()),
        SignalMode::Bloch => {
            let omega = params.rabi_rad_per_s;
            if (omega * pi_width_s - std::f64::consts::PI).abs() > 1e-6 {
                return Err(Error::Config(format!(
                    "pi width {pi_width_s} s inconsistent with Rabi rate {omega} rad/s"
                )));
            }
            let step = (1.0 / omega).min(params.t2_s) / 200.0;
            tau_free_grid_s
                .iter()
                .map(|&tau| {
                    let half = pi_width_s / 2.0;
                    let mut segs = vec![Segment::drive(half, omega)];
                    if tau > 0.0 {
                        segs.push(Segment::free(tau / 2.0));
                    }
                    segs.push(Segment::drive(pi_width_s, omega));
                    if tau > 0.0 {
                        segs.push(Segment::free(tau / 2.0));
                    }
                    segs.push(Segment::drive(half, omega));
                    let (s, _) =
                        bloch_evolve((0.0, 0.0, -1.0), params, &PulseSequence(segs), step)?;
                    Ok(1.0 - 2.0 * excited_population(s))
                })
                .collect()
        }
    }
}

/// Static inhomogeneous-broadening ensemble: each shot draws a fixed
/// detuning from N(0, sigma_delta); T2* = sqrt(2) / sigma_delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetuningEnsemble {
    pub sigma_delta_rad_per_s: f64,
    pub n_shots: usize,
    pub seed: u64,
}

impl DetuningEnsemble {
    /// Spread that produces a given inhomogeneous coherence time.
    pub fn from_t2_star(t2_star_s: f64, n_shots: usize, seed: u64) -> Self {
        DetuningEnsemble {
            sigma_delta_rad_per_s: std::f64::consts::SQRT_2 / t2_star_s,
            n_shots,
            seed,
        }
    }

    fn detunings(&self) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let normal = Normal::new(0.0, self.sigma_delta_rad_per_s).expect("positive sigma");
        (0..self.n_shots).map(|_| normal.sample(&mut rng)).collect()
    }
}

// Ideal-pulse per-shot evolution: instantaneous rotations about x, analytic
// free precession. Used by the ensemble averages where finite pulse width
// would otherwise mix detuning into the rotations.

fn rotate_x(s: BlochState, theta: f64) -> BlochState {
    let (u, v, w) = s;
    let (sin, cos) = theta.sin_cos();
    (u, v * cos + w * sin, -v * sin + w * cos)
}

fn free_precess(s: BlochState, delta: f64, tau: f64, t2: f64, t1: f64) -> BlochState {
    let (u, v, w) = s;
    let decay2 = if t2.is_finite() { (-tau / t2).exp() } else { 1.0 };
    let (sin, cos) = (delta * tau).sin_cos();
    // (u + iv) -> (u + iv) e^{-i delta tau} e^{-tau/T2}
    let u2 = (u * cos + v * sin) * decay2;
    let v2 = (v * cos - u * sin) * decay2;
    let w2 = if t1.is_finite() {
        -1.0 + (w + 1.0) * (-tau / t1).exp()
    } else {
        w
    };
    (u2, v2, w2)
}

/// Ensemble-averaged Ramsey amplitude with ideal pulses.
pub fn ramsey_ensemble(
    params: &CoherenceParams,
    tau_free_grid_s: &[f64],
    ensemble: &DetuningEnsemble,
) -> Result<Vec<f64>> {
    params.validate()?;
    let deltas = ensemble.detunings();
    Ok(tau_free_grid_s
        .iter()
        .map(|&tau| {
            let mean: f64 = deltas
                .iter()
                .map(|&d| {
                    let s = rotate_x((0.0, 0.0, -1.0), std::f64::consts::FRAC_PI_2);
                    let s = free_precess(s, d, tau, params.t2_s, params.t1_s);
                    let s = rotate_x(s, std::f64::consts::FRAC_PI_2);
                    2.0 * excited_population(s) - 1.0
                })
                .sum::<f64>()
                / deltas.len() as f64;
            mean
        })
        .collect())
}

/// Ensemble-averaged photon-echo amplitude with ideal pulses. Static
/// detuning cancels exactly across the central pi pulse.
pub fn echo_ensemble(
    params: &CoherenceParams,
    tau_free_grid_s: &[f64],
    ensemble: &DetuningEnsemble,
) -> Result<Vec<f64>> {
    params.validate()?;
    let deltas = ensemble.detunings();
    Ok(tau_free_grid_s
        .iter()
        .map(|&tau| {
            deltas
                .iter()
                .map(|&d| {
                    let s = rotate_x((0.0, 0.0, -1.0), std::f64::consts::FRAC_PI_2);
                    let s = free_precess(s, d, tau / 2.0, params.t2_s, params.t1_s);
                    let s = rotate_x(s, std::f64::consts::PI);
                    let s = free_precess(s, d, tau / 2.0, params.t2_s, params.t1_s);
                    let s = rotate_x(s, std::f64::consts::FRAC_PI_2);
                    1.0 - 2.0 * excited_population(s)
                })
                .sum::<f64>()
                / deltas.len() as f64
        })
        .collect())
}

/// Fourier-limited linewidth 1 / (pi T) in Hz.
pub fn intrinsic_linewidth(coherence_time_s: f64) -> Result<f64> {
    if !(coherence_time_s > 0.0) {
        return Err(Error::Domain(format!(
            "coherence time must be positive, got {coherence_time_s}"
        )));
    }
    Ok(1.0 / (std::f64::consts::PI * coherence_time_s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    const INF: f64 = f64::INFINITY;

    fn ideal_params(omega: f64) -> CoherenceParams {
        CoherenceParams {
            rabi_rad_per_s: omega,
            detuning_rad_per_s: 0.0,
            t1_s: INF,
            t2_s: INF,
            t2_star_s: INF,
        }
    }

    #[test]
    fn t1_relaxation_from_excited() {
        let t1 = 1.2e-3;
        let params = CoherenceParams {
            rabi_rad_per_s: 0.0,
            detuning_rad_per_s: 0.0,
            t1_s: t1,
            t2_s: t1,
            t2_star_s: 32e-6,
        };
        let seq = PulseSequence(vec![Segment::free(t1)]);
        let (s, _) = bloch_evolve((0.0, 0.0, 1.0), &params, &seq, t1 / 200.0).unwrap();
        assert!((s.2 - (2.0 * (-1.0f64).exp() - 1.0)).abs() < 1e-4);
    }

    #[test]
    fn resonant_rabi_matches_analytic() {
        let omega = 2.0 * PI * 660e3;
        let params = ideal_params(omega);
        let step = (1.0 / omega) / 200.0;
        for i in 1..=20 {
            let tp = i as f64 * 0.1 * (2.0 * PI / omega);
            let seq = PulseSequence(vec![Segment::drive(tp, omega)]);
            let (s, _) = bloch_evolve((0.0, 0.0, -1.0), &params, &seq, step).unwrap();
            let expected = (omega * tp / 2.0).sin().powi(2);
            assert!(
                (excited_population(s) - expected).abs() < 1e-6,
                "t_p = {tp}"
            );
        }
    }

    #[test]
    fn pi_pulse_inverts() {
        let omega = 1.0e6;
        let params = ideal_params(omega);
        let tp = pulse_width_for_angle(omega, PI);
        let seq = PulseSequence(vec![Segment::drive(tp, omega)]);
        let (s, _) = bloch_evolve((0.0, 0.0, 1.0), &params, &seq, (1.0 / omega) / 200.0).unwrap();
        assert!((s.0).abs() < 1e-8);
        assert!((s.1).abs() < 1e-8);
        assert!((s.2 + 1.0).abs() < 1e-8);
    }

    #[test]
    fn bloch_norm_conserved_when_lossless() {
        let omega = 1.0e6;
        let mut params = ideal_params(omega);
        params.detuning_rad_per_s = 3.0e5;
        let seq = PulseSequence(vec![
            Segment::drive(2.3 / omega, omega),
            Segment::free(5.0 / omega),
            Segment::drive(1.1 / omega, omega),
        ]);
        let (_, traj) = bloch_evolve((0.0, 0.0, -1.0), &params, &seq, (1.0 / omega) / 100.0).unwrap();
        for (_, (u, v, w)) in traj {
            let norm = u * u + v * v + w * w;
            assert!((norm - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn bloch_norm_bounded_with_decay() {
        let omega = 1.0e6;
        let params = CoherenceParams {
            rabi_rad_per_s: omega,
            detuning_rad_per_s: 1e5,
            t1_s: 20.0 / omega,
            t2_s: 10.0 / omega,
            t2_star_s: 5.0 / omega,
        };
        let seq = PulseSequence(vec![Segment::drive(30.0 / omega, omega)]);
        let (_, traj) = bloch_evolve((0.0, 0.0, -1.0), &params, &seq, (1.0 / omega) / 100.0).unwrap();
        for (_, (u, v, w)) in traj {
            assert!(u * u + v * v + w * w <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn coarse_step_rejected() {
        let omega = 1.0e6;
        let params = ideal_params(omega);
        let seq = PulseSequence(vec![Segment::drive(1.0 / omega, omega)]);
        assert!(matches!(
            bloch_evolve((0.0, 0.0, -1.0), &params, &seq, 1.0 / omega),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn rabi_modes() {
        let omega = 2.0 * PI * 660e3;
        let params = ideal_params(omega);
        // analytic mode at omega t = pi/2
        let s = rabi_experiment(&params, &[PI / 2.0 / omega], 1.0, 0.0, SignalMode::Analytic)
            .unwrap();
        assert_relative_eq!(s[0], 1.0, max_relative = 1e-12);

        // Bloch mode matches sin^2(omega t / 2)
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.05 * 2.0 * PI / omega).collect();
        let sig = rabi_experiment(&params, &grid, 1.0, 0.0, SignalMode::Bloch).unwrap();
        for (tp, y) in grid.iter().zip(&sig) {
            assert!((y - (omega * tp / 2.0).sin().powi(2)).abs() < 1e-6);
        }
    }

    #[test]
    fn rabi_contrast_scaling() {
        let omega = 1.0e6;
        let params = ideal_params(omega);
        // grid hitting the exact extrema of sin^2
        let grid = [0.0, PI / omega];
        let sig = rabi_experiment(&params, &grid, 0.96, 0.02, SignalMode::Bloch).unwrap();
        let span = sig.iter().cloned().fold(f64::MIN, f64::max)
            - sig.iter().cloned().fold(f64::MAX, f64::min);
        assert!((span - 0.96).abs() < 1e-6);
    }

    #[test]
    fn ramsey_envelope_values() {
        let t2_star = 32e-6;
        let params = CoherenceParams {
            rabi_rad_per_s: 1.0e6,
            detuning_rad_per_s: 0.0,
            t1_s: INF,
            t2_s: INF,
            t2_star_s: t2_star,
        };
        let env =
            ramsey_experiment(&params, &[0.0, t2_star], 0.0, SignalMode::Analytic).unwrap();
        assert_relative_eq!(env[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(env[1], (-1.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn ramsey_analytic_vs_bloch() {
        let t2_star = 32e-6;
        let omega = 2.0 * PI * 2.0e6;
        let params = CoherenceParams {
            rabi_rad_per_s: omega,
            detuning_rad_per_s: 0.0,
            t1_s: INF,
            t2_s: INF,
            t2_star_s: t2_star,
        };
        let grid: Vec<f64> = (0..=12).map(|i| i as f64 * 0.25 * t2_star).collect();
        let analytic = ramsey_experiment(&params, &grid, 0.0, SignalMode::Analytic).unwrap();
        let width = pulse_width_for_angle(omega, PI / 2.0);
        let bloch = ramsey_experiment(&params, &grid, width, SignalMode::Bloch).unwrap();
        for (a, b) in analytic.iter().zip(&bloch) {
            assert!((a - b).abs() < 0.01, "analytic {a} vs bloch {b}");
        }
    }

    #[test]
    fn ramsey_envelope_monotone() {
        let params = CoherenceParams {
            rabi_rad_per_s: 1.0e6,
            detuning_rad_per_s: 0.0,
            t1_s: INF,
            t2_s: INF,
            t2_star_s: 32e-6,
        };
        let grid: Vec<f64> = (0..50).map(|i| i as f64 * 2e-6).collect();
        let env = ramsey_experiment(&params, &grid, 0.0, SignalMode::Analytic).unwrap();
        for w in env.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn echo_envelope_values() {
        let t2 = 568e-6;
        let params = CoherenceParams {
            rabi_rad_per_s: 1.0e6,
            detuning_rad_per_s: 0.0,
            t1_s: INF,
            t2_s: t2,
            t2_star_s: 32e-6,
        };
        let env = echo_experiment(&params, &[0.0, t2], 0.0, SignalMode::Analytic).unwrap();
        assert_relative_eq!(env[0], 1.0, max_relative = 1e-12);
        assert_relative_eq!(env[1], (-1.0f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn echo_bloch_matches_analytic() {
        let t2 = 568e-6;
        let omega = 2.0 * PI * 2.0e6;
        let params = CoherenceParams {
            rabi_rad_per_s: omega,
            detuning_rad_per_s: 0.0,
            t1_s: INF,
            t2_s: t2,
            t2_star_s: 32e-6,
        };
        let grid = [0.0, 0.5 * t2, t2];
        let analytic = echo_experiment(&params, &grid, 0.0, SignalMode::Analytic).unwrap();
        let width = pulse_width_for_angle(omega, PI);
        let bloch = echo_experiment(&params, &grid, width, SignalMode::Bloch).unwrap();
        for (a, b) in analytic.iter().zip(&bloch) {
            assert!((a - b).abs() < 0.01);
        }
    }

    #[test]
    fn echo_refocuses_static_detuning() {
        let params = CoherenceParams {
            rabi_rad_per_s: 1.0e6,
            detuning_rad_per_s: 0.0,
            t1_s: INF,
            t2_s: INF,
            t2_star_s: 32e-6,
        };
        let ensemble = DetuningEnsemble::from_t2_star(32e-6, 2000, 11);
        let grid: Vec<f64> = (0..8).map(|i| i as f64 * 50e-6).collect();
        let echo = echo_ensemble(&params, &grid, &ensemble).unwrap();
        for a in &echo {
            assert!((a - 1.0).abs() < 0.01, "echo amplitude {a}");
        }
        // the same ensemble dephases in a Ramsey sequence
        let ramsey = ramsey_ensemble(&params, &grid, &ensemble).unwrap();
        assert!(ramsey[0] > 0.99);
        assert!(ramsey.last().unwrap().abs() < 0.1);
    }

    #[test]
    fn linewidth_projection() {
        assert_relative_eq!(
            intrinsic_linewidth(32e-6).unwrap(),
            9947.18,
            max_relative = 1e-4
        );
        assert_relative_eq!(
            intrinsic_linewidth(568e-6).unwrap(),
            560.45,
            max_relative = 1e-3
        );
        assert_eq!(intrinsic_linewidth(f64::INFINITY).unwrap(), 0.0);
        assert!(intrinsic_linewidth(0.0).is_err());
    }

    #[test]
    fn t2_bound_enforced() {
        let p = CoherenceParams {
            rabi_rad_per_s: 1.0,
            detuning_rad_per_s: 0.0,
            t1_s: 1.0,
            t2_s: 3.0,
            t2_star_s: 1.0,
        };
        assert!(p.validate().is_err());
    }
}
