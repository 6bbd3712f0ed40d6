//! Damped Gauss-Newton least-squares engine and the model library used to
//! recover lifetimes, Rabi rates, saturation fluxes, coherence times, and
//! linewidths from measured or synthetic curves.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Fit models. Parameter order is documented per variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// `a * exp(-x / tau)`; params `[a, tau]`.
    SingleExp,
    /// `a1 * exp(-x / tau1) + a2 * exp(-x / tau2)`; params `[a1, tau1, a2, tau2]`.
    Biexp,
    /// `a * sin(omega x) + b`; params `[a, omega, b]`.
    RabiSin,
    /// `c * sin^2(omega x / 2) + b`; params `[c, omega, b]`.
    RabiBloch,
    /// `r_max * x / (x + phi_sat)`; params `[r_max, phi_sat]`.
    Saturation,
    /// Single-exponential coherence envelope; params `[a, t2_star]`.
    RamseyEnv,
    /// Single-exponential coherence envelope; params `[a, t2]`.
    EchoEnv,
    /// Peak-normalized Lorentzian (x) Gaussian; params
    /// `[amplitude, center, lorentz_fwhm, gauss_fwhm]`.
    LineshapeConvolved,
}

impl Model {
    pub fn id(&self) -> &'static str {
        match self {
            Model::SingleExp => "single_exp",
            Model::Biexp => "biexp",
            Model::RabiSin => "rabi_sin",
            Model::RabiBloch => "rabi_bloch",
            Model::Saturation => "saturation",
            Model::RamseyEnv => "ramsey_env",
            Model::EchoEnv => "echo_env",
            Model::LineshapeConvolved => "lineshape_convolved",
        }
    }

    pub fn from_id(id: &str) -> Result<Model> {
        Ok(match id {
            "single_exp" => Model::SingleExp,
            "biexp" => Model::Biexp,
            "rabi_sin" => Model::RabiSin,
            "rabi_bloch" => Model::RabiBloch,
            "saturation" => Model::Saturation,
            "ramsey_env" => Model::RamseyEnv,
            "echo_env" => Model::EchoEnv,
            "lineshape_convolved" => Model::LineshapeConvolved,
            other => return Err(Error::Domain(format!("unknown model id '{other}'"))),
        })
    }

    pub fn arity(&self) -> usize {
        match self {
            Model::SingleExp | Model::RamseyEnv | Model::EchoEnv | Model::Saturation => 2,
            Model::RabiSin | Model::RabiBloch => 3,
            Model::Biexp | Model::LineshapeConvolved => 4,
        }
    }

    pub fn eval(&self, p: &[f64], x: f64) -> f64 {
        match self {
            Model::SingleExp | Model::RamseyEnv | Model::EchoEnv => p[0] * (-x / p[1]).exp(),
            Model::Biexp => p[0] * (-x / p[1]).exp() + p[2] * (-x / p[3]).exp(),
            Model::RabiSin => p[0] * (p[1] * x).sin() + p[2],
            Model::RabiBloch => p[0] * (p[1] * x / 2.0).sin().powi(2) + p[2],
            Model::Saturation => p[0] * x / (x + p[1]),
            Model::LineshapeConvolved => {
                let peak = voigt(0.0, p[3], p[2]);
                if peak > 0.0 {
                    p[0] * voigt(x - p[1], p[3], p[2]) / peak
                } else {
                    0.0
                }
            }
        }
    }

    /// Analytic Jacobian row, where available.
    pub fn analytic_jacobian(&self, p: &[f64], x: f64) -> Option<Vec<f64>> {
        match self {
            Model::SingleExp | Model::RamseyEnv | Model::EchoEnv => {
                let e = (-x / p[1]).exp();
                Some(vec![e, p[0] * e * x / (p[1] * p[1])])
            }
            Model::RabiSin => {
                Some(vec![(p[1] * x).sin(), p[0] * x * (p[1] * x).cos(), 1.0])
            }
            Model::Saturation => {
                let d = x + p[1];
                Some(vec![x / d, -p[0] * x / (d * d)])
            }
            _ => None,
        }
    }
}

/// Model plus starting point and box bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub model: Model,
    pub initial: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl ModelSpec {
    /// Unbounded spec with the given starting point.
    pub fn new(model: Model, initial: Vec<f64>) -> Self {
        let n = initial.len();
        ModelSpec {
            model,
            initial,
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.arity();
        if self.initial.len() != n || self.lower.len() != n || self.upper.len() != n {
            return Err(Error::Domain(format!(
                "model {} expects {n} parameters",
                self.model.id()
            )));
        }
        for i in 0..n {
            if self.initial[i] < self.lower[i] || self.initial[i] > self.upper[i] {
                return Err(Error::Domain(format!(
                    "initial value {} of parameter {i} outside bounds",
                    self.initial[i]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model_id: &'static str,
    pub parameters: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

const MAX_ITERATIONS: usize = 200;
const REL_TOL: f64 = 1e-8;
const DAMPING_INIT: f64 = 1e-3;
const DAMPING_MAX: f64 = 1e12;

fn jacobian(model: Model, p: &[f64], x: &[f64]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|&xi| {
            if let Some(row) = model.analytic_jacobian(p, xi) {
                return row;
            }
            // central finite differences
            let mut row = Vec::with_capacity(p.len());
            let mut q = p.to_vec();
            for j in 0..p.len() {
                let h = 1e-6 * p[j].abs().max(1e-6);
                q[j] = p[j] + h;
                let up = model.eval(&q, xi);
                q[j] = p[j] - h;
                let dn = model.eval(&q, xi);
                q[j] = p[j];
                row.push((up - dn) / (2.0 * h));
            }
            row
        })
        .collect()
}

fn weighted_ssr(model: Model, p: &[f64], x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .zip(w)
        .map(|((&xi, &yi), &wi)| {
            let r = yi - model.eval(p, xi);
            wi * r * r
        })
        .sum()
}

/// Weighted nonlinear least squares by damped Gauss-Newton
/// (Levenberg-Marquardt damping: x10 on a rejected step, /10 on an
/// accepted one).
pub fn fit(spec: &ModelSpec, x: &[f64], y: &[f64], weights: Option<&[f64]>) -> Result<FitResult> {
    spec.validate()?;
    let n = x.len();
    let n_par = spec.model.arity();
    if n != y.len() {
        return Err(Error::Domain("x and y lengths differ".into()));
    }
    if n < n_par + 1 {
        return Err(Error::Domain(format!(
            "need at least {} points for {} parameters",
            n_par + 1,
            n_par
        )));
    }
    if x.iter().chain(y.iter()).any(|v| v.is_nan()) {
        return Err(Error::Domain("NaN in input data".into()));
    }
    let w: Vec<f64> = match weights {
        Some(w) => {
            if w.len() != n {
                return Err(Error::Domain("weight length differs from data".into()));
            }
            w.to_vec()
        }
        None => vec![1.0; n],
    };

    let model = spec.model;
    let mut p = spec.initial.clone();
    let mut ssr = weighted_ssr(model, &p, x, y, &w);
    let mut damping = DAMPING_INIT;
    let mut converged = false;
    let mut iterations = 0;

    for iter in 0..MAX_ITERATIONS {
        iterations = iter + 1;
        let jac = jacobian(model, &p, x);
        // normal equations J^T W J and J^T W r
        let mut jtj = DMatrix::zeros(n_par, n_par);
        let mut jtr = DVector::zeros(n_par);
        for i in 0..n {
            let r = y[i] - model.eval(&p, x[i]);
            for a in 0..n_par {
                jtr[a] += w[i] * jac[i][a] * r;
                for b in 0..n_par {
                    jtj[(a, b)] += w[i] * jac[i][a] * jac[i][b];
                }
            }
        }

        let mut accepted = false;
        while damping <= DAMPING_MAX {
            let mut damped = jtj.clone();
            for a in 0..n_par {
                let d: f64 = jtj[(a, a)];
                damped[(a, a)] = d + damping * d.max(1e-30);
            }
            let step = match damped.clone().lu().solve(&jtr) {
                Some(s) if s.iter().all(|v| v.is_finite()) => s,
                _ => {
                    damping *= 10.0;
                    continue;
                }
            };
            let mut trial = p.clone();
            for a in 0..n_par {
                trial[a] = (p[a] + step[a]).clamp(spec.lower[a], spec.upper[a]);
            }
            let trial_ssr = weighted_ssr(model, &trial, x, y, &w);
            if trial_ssr.is_finite() && trial_ssr <= ssr {
                let rel_change = (0..n_par)
                    .map(|a| (trial[a] - p[a]).abs() / p[a].abs().max(1e-30))
                    .fold(0.0, f64::max);
                p = trial;
                ssr = trial_ssr;
                damping = (damping / 10.0).max(1e-15);
                accepted = true;
                if rel_change < REL_TOL {
                    converged = true;
                }
                break;
            }
            damping *= 10.0;
        }
        if !accepted || converged {
            break;
        }
    }

    // asymptotic standard errors from the undamped normal equations
    let jac = jacobian(model, &p, x);
    let mut jtj: DMatrix<f64> = DMatrix::zeros(n_par, n_par);
    for i in 0..n {
        for a in 0..n_par {
            for b in 0..n_par {
                jtj[(a, b)] += w[i] * jac[i][a] * jac[i][b];
            }
        }
    }
    let dof = (n - n_par).max(1) as f64;
    let s2 = ssr / dof;
    let std_errors = match jtj.try_inverse() {
        Some(cov) => (0..n_par)
            .map(|a| (cov[(a, a)].max(0.0) * s2).sqrt())
            .collect(),
        None => vec![f64::NAN; n_par],
    };

    Ok(FitResult {
        model_id: model.id(),
        parameters: p,
        std_errors,
        residual_norm: ssr.sqrt(),
        converged,
        iterations,
    })
}

// ---------------------------------------------------------------------------
// Voigt lineshape

/// Complex probability (Faddeeva) function w(z) = exp(-z^2) erfc(-iz) for
/// y >= 0, Humlicek's 4-region rational approximation (~1e-4 relative).
fn faddeeva(x: f64, y: f64) -> (f64, f64) {
    let t = Complex { re: y, im: -x };
    let s = x.abs() + y;
    let w = if s >= 15.0 {
        // region I
        t.scale(0.5641896).div(t.mul(t).add_re(0.5))
    } else if s >= 5.5 {
        // region II
        let u = t.mul(t);
        t.mul(u.scale(0.5641896).add_re(1.410474))
            .div(u.add_re(3.0).mul(u).add_re(0.75))
    } else if y >= 0.195 * x.abs() - 0.176 {
        // region III
        let num = t
            .scale(0.5642236)
            .add_re(3.778987)
            .mul(t)
            .add_re(11.96482)
            .mul(t)
            .add_re(20.20933)
            .mul(t)
            .add_re(16.4955);
        let den = t
            .add_re(6.699398)
            .mul(t)
            .add_re(21.69274)
            .mul(t)
            .add_re(39.27121)
            .mul(t)
            .add_re(38.82363)
            .mul(t)
            .add_re(16.4955);
        num.div(den)
    } else {
        // region IV
        let u = t.mul(t);
        let num = u
            .scale(-0.56419)
            .add_re(1.320522)
            .mul(u)
            .neg()
            .add_re(35.76683)
            .mul(u)
            .neg()
            .add_re(219.0313)
            .mul(u)
            .neg()
            .add_re(1540.787)
            .mul(u)
            .neg()
            .add_re(3321.9905)
            .mul(u)
            .neg()
            .add_re(36183.31);
        let den = u
            .neg()
            .add_re(1.841439)
            .mul(u)
            .neg()
            .add_re(61.57037)
            .mul(u)
            .neg()
            .add_re(364.2191)
            .mul(u)
            .neg()
            .add_re(2186.181)
            .mul(u)
            .neg()
            .add_re(9022.228)
            .mul(u)
            .neg()
            .add_re(24322.84)
            .mul(u)
            .neg()
            .add_re(32066.6);
        let exp_u = u.exp();
        exp_u.sub(t.mul(num.div(den)))
    };
    (w.re, w.im)
}

#[derive(Clone, Copy)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    fn mul(self, o: Complex) -> Complex {
        Complex {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
    fn div(self, o: Complex) -> Complex {
        let d = o.re * o.re + o.im * o.im;
        Complex {
            re: (self.re * o.re + self.im * o.im) / d,
            im: (self.im * o.re - self.re * o.im) / d,
        }
    }
    fn add_re(self, r: f64) -> Complex {
        Complex {
            re: self.re + r,
            im: self.im,
        }
    }
    fn sub(self, o: Complex) -> Complex {
        Complex {
            re: self.re - o.re,
            im: self.im - o.im,
        }
    }
    fn scale(self, s: f64) -> Complex {
        Complex {
            re: self.re * s,
            im: self.im * s,
        }
    }
    fn neg(self) -> Complex {
        self.scale(-1.0)
    }
    fn exp(self) -> Complex {
        let m = self.re.exp();
        Complex {
            re: m * self.im.cos(),
            im: m * self.im.sin(),
        }
    }
}

/// Unit-area Voigt profile: Lorentzian FWHM `lorentz_fwhm` convolved with
/// Gaussian FWHM `gauss_fwhm`, evaluated at offset `x` from center.
pub fn voigt(x: f64, gauss_fwhm: f64, lorentz_fwhm: f64) -> f64 {
    let gamma = lorentz_fwhm / 2.0;
    if gauss_fwhm <= 0.0 {
        // pure Lorentzian
        if gamma <= 0.0 {
            return 0.0;
        }
        return gamma / (std::f64::consts::PI * (x * x + gamma * gamma));
    }
    let sigma = gauss_fwhm / (8.0 * std::f64::consts::LN_2).sqrt();
    if gamma <= 0.0 {
        let z = x / sigma;
        return (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
    }
    let scale = 1.0 / (sigma * std::f64::consts::SQRT_2);
    let (re, _) = faddeeva(x * scale, gamma * scale);
    re / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Peak-normalized convolved lineshape on a frequency grid [Hz].
///
/// The grid must span at least 6x the wider of the two widths.
pub fn lineshape_convolved(
    freq_grid_hz: &[f64],
    lorentz_fwhm_hz: f64,
    laser_fwhm_hz: f64,
) -> Result<Vec<f64>> {
    if freq_grid_hz.len() < 2 {
        return Err(Error::Domain("frequency grid too short".into()));
    }
    if lorentz_fwhm_hz < 0.0 || laser_fwhm_hz < 0.0 {
        return Err(Error::Domain("linewidths must be non-negative".into()));
    }
    let span = freq_grid_hz.last().unwrap() - freq_grid_hz.first().unwrap();
    let need = 6.0 * lorentz_fwhm_hz.max(laser_fwhm_hz);
    if span < need {
        return Err(Error::Config(format!(
            "grid span {span} Hz below required {need} Hz"
        )));
    }
    let center = (freq_grid_hz.first().unwrap() + freq_grid_hz.last().unwrap()) / 2.0;
    let values: Vec<f64> = freq_grid_hz
        .iter()
        .map(|&f| voigt(f - center, laser_fwhm_hz, lorentz_fwhm_hz))
        .collect();
    let peak = values.iter().cloned().fold(0.0, f64::max);
    if peak <= 0.0 {
        return Err(Error::Domain("degenerate lineshape".into()));
    }
    Ok(values.into_iter().map(|v| v / peak).collect())
}

/// Full width at half maximum by linear interpolation of the half-max
/// crossings around the peak.
pub fn fwhm(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::Estimation("need at least 3 samples for FWHM".into()));
    }
    let (i_peak, &peak) = y
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let half = peak / 2.0;
    let mut left = None;
    for i in (1..=i_peak).rev() {
        if y[i - 1] <= half && y[i] >= half {
            let t = (half - y[i - 1]) / (y[i] - y[i - 1]);
            left = Some(x[i - 1] + t * (x[i] - x[i - 1]));
            break;
        }
    }
    let mut right = None;
    for i in i_peak..y.len() - 1 {
        if y[i] >= half && y[i + 1] <= half {
            let t = (y[i] - half) / (y[i] - y[i + 1]);
            right = Some(x[i] + t * (x[i + 1] - x[i]));
            break;
        }
    }
    match (left, right) {
        (Some(l), Some(r)) => Ok(r - l),
        _ => Err(Error::Estimation("half-max crossings not bracketed".into())),
    }
}

/// Mean-lifetime convention for multi-exponential decays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeanConvention {
    /// sum(A tau^2) / sum(A tau)
    Intensity,
    /// sum(A tau) / sum(A)
    Amplitude,
}

pub fn weighted_mean_lifetime(
    amplitudes: &[f64],
    lifetimes: &[f64],
    convention: MeanConvention,
) -> Result<f64> {
    if amplitudes.len() != lifetimes.len() || amplitudes.is_empty() {
        return Err(Error::Domain("amplitude/lifetime length mismatch".into()));
    }
    if amplitudes.iter().chain(lifetimes.iter()).any(|&v| v <= 0.0) {
        return Err(Error::Domain("amplitudes and lifetimes must be positive".into()));
    }
    let (num, den): (f64, f64) = match convention {
        MeanConvention::Intensity => (
            amplitudes.iter().zip(lifetimes).map(|(a, t)| a * t * t).sum(),
            amplitudes.iter().zip(lifetimes).map(|(a, t)| a * t).sum(),
        ),
        MeanConvention::Amplitude => (
            amplitudes.iter().zip(lifetimes).map(|(a, t)| a * t).sum(),
            amplitudes.iter().sum(),
        ),
    };
    Ok(num / den)
}

/// Solve for the amplitude ratio A1 / A2 of a biexponential whose mean
/// lifetime under the given convention equals `target`. Bisection on a
/// monotone bracket.
pub fn amplitude_ratio_for_mean_lifetime(
    tau1: f64,
    tau2: f64,
    target: f64,
    convention: MeanConvention,
) -> Result<f64> {
    let (lo_t, hi_t) = (tau1.min(tau2), tau1.max(tau2));
    if !(lo_t < target && target < hi_t) {
        return Err(Error::Domain(format!(
            "target mean {target} outside ({lo_t}, {hi_t})"
        )));
    }
    let mean = |ratio: f64| {
        weighted_mean_lifetime(&[ratio, 1.0], &[tau1, tau2], convention).unwrap()
    };
    let mut lo = 1e-9;
    let mut hi = 1e9;
    // mean is monotone in the ratio; orient the bracket
    let increasing = mean(hi) > mean(lo);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        let m = mean(mid);
        if (m > target) == increasing {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo * hi).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn noiseless_single_exp_exact() {
        let tau = 1.3e-3;
        let x: Vec<f64> = (0..60).map(|i| i as f64 * 1e-4).collect();
        let y: Vec<f64> = x.iter().map(|&t| 2.0 * (-t / tau).exp()).collect();
        let spec = ModelSpec::new(Model::SingleExp, vec![1.0, 5e-4]);
        let res = fit(&spec, &x, &y, None).unwrap();
        assert!(res.converged);
        assert_relative_eq!(res.parameters[1], tau, max_relative = 1e-6);
    }

    #[test]
    fn noiseless_rabi_sin_exact() {
        let omega = 2.0 * std::f64::consts::PI * 660e3;
        let x: Vec<f64> = (0..80).map(|i| i as f64 * 2e-8).collect();
        let y: Vec<f64> = x.iter().map(|&t| 0.48 * (omega * t).sin() + 0.5).collect();
        let spec = ModelSpec::new(Model::RabiSin, vec![0.4, omega * 1.05, 0.45]);
        let res = fit(&spec, &x, &y, None).unwrap();
        assert_relative_eq!(res.parameters[1], omega, max_relative = 1e-6);
        assert_relative_eq!(res.parameters[0], 0.48, max_relative = 1e-6);
    }

    #[test]
    fn noiseless_saturation_exact() {
        let phi_sat = 1.667e19;
        let x: Vec<f64> = (1..80).map(|i| i as f64 * 5e17).collect();
        let y: Vec<f64> = x.iter().map(|&f| 3.0 * f / (f + phi_sat)).collect();
        let spec = ModelSpec::new(Model::Saturation, vec![1.0, 1e19]);
        let res = fit(&spec, &x, &y, None).unwrap();
        assert_relative_eq!(res.parameters[1], phi_sat, max_relative = 1e-6);
    }

    #[test]
    fn biexp_under_noise_monte_carlo() {
        let (tau1, tau2) = (0.3e-3, 1.3e-3);
        let (a1, a2) = (0.4815, 1.0);
        let x: Vec<f64> = (0..150).map(|i| i as f64 * 4e-5).collect();
        let clean: Vec<f64> = x
            .iter()
            .map(|&t| a1 * (-t / tau1).exp() + a2 * (-t / tau2).exp())
            .collect();
        let mut successes = 0;
        for trial in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let noise = Normal::new(0.0, 0.01).unwrap();
            let y: Vec<f64> = clean.iter().map(|&v| v + noise.sample(&mut rng)).collect();
            let mut spec = ModelSpec::new(Model::Biexp, vec![0.4, 0.2e-3, 0.9, 1.6e-3]);
            spec.lower = vec![0.0, 1e-5, 0.0, 1e-5];
            spec.upper = vec![10.0, 1e-1, 10.0, 1e-1];
            let res = fit(&spec, &x, &y, None).unwrap();
            let mut taus = [res.parameters[1], res.parameters[3]];
            taus.sort_by(|a, b| a.partial_cmp(b).unwrap());
            if (taus[0] - tau1).abs() / tau1 < 0.1 && (taus[1] - tau2).abs() / tau2 < 0.1 {
                successes += 1;
            }
        }
        assert!(successes >= 95, "only {successes}/100 within 10%");
    }

    #[test]
    fn nan_input_rejected() {
        let spec = ModelSpec::new(Model::SingleExp, vec![1.0, 1.0]);
        let err = fit(&spec, &[0.0, 1.0, 2.0], &[1.0, f64::NAN, 0.1], None);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn too_few_points_rejected() {
        let spec = ModelSpec::new(Model::SingleExp, vec![1.0, 1.0]);
        assert!(fit(&spec, &[0.0, 1.0], &[1.0, 0.4], None).is_err());
    }

    #[test]
    fn finite_difference_matches_analytic_jacobian() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for model in [Model::SingleExp, Model::RabiSin, Model::Saturation] {
            for _ in 0..100 {
                let p: Vec<f64> = (0..model.arity())
                    .map(|_| 0.5 + rng.gen::<f64>())
                    .collect();
                let x = 0.1 + rng.gen::<f64>();
                let analytic = model.analytic_jacobian(&p, x).unwrap();
                let mut q = p.clone();
                for j in 0..p.len() {
                    let h = 1e-6 * p[j].abs().max(1e-6);
                    q[j] = p[j] + h;
                    let up = model.eval(&q, x);
                    q[j] = p[j] - h;
                    let dn = model.eval(&q, x);
                    q[j] = p[j];
                    let fd = (up - dn) / (2.0 * h);
                    let scale = analytic[j].abs().max(1e-8);
                    assert!(
                        (fd - analytic[j]).abs() / scale < 1e-5,
                        "{} param {j}: fd {fd} vs {}",
                        model.id(),
                        analytic[j]
                    );
                }
            }
        }
    }

    #[test]
    fn rescaled_axis_recovers_transformed_parameters() {
        // fit in seconds, then in milliseconds; tau should transform exactly
        let tau = 1.3e-3;
        let x_s: Vec<f64> = (0..60).map(|i| i as f64 * 1e-4).collect();
        let y: Vec<f64> = x_s.iter().map(|&t| (-t / tau).exp()).collect();
        let spec_s = ModelSpec::new(Model::SingleExp, vec![0.8, 5e-4]);
        let r_s = fit(&spec_s, &x_s, &y, None).unwrap();

        let x_ms: Vec<f64> = x_s.iter().map(|&t| t * 1e3).collect();
        let spec_ms = ModelSpec::new(Model::SingleExp, vec![0.8, 0.5]);
        let r_ms = fit(&spec_ms, &x_ms, &y, None).unwrap();
        assert_relative_eq!(r_ms.parameters[1], r_s.parameters[1] * 1e3, max_relative = 1e-6);
    }

    #[test]
    fn voigt_limits() {
        // pure Lorentzian
        let g = 0.0;
        let l = 2.0;
        assert_relative_eq!(
            voigt(0.0, g, l),
            1.0 / (std::f64::consts::PI * 1.0),
            max_relative = 1e-12
        );
        // pure Gaussian peak value
        let gf = 2.0;
        let sigma = gf / (8.0f64 * std::f64::consts::LN_2).sqrt();
        assert_relative_eq!(
            voigt(0.0, gf, 0.0),
            1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt()),
            max_relative = 1e-12
        );
    }

    #[test]
    fn voigt_matches_numeric_convolution() {
        // brute-force quadrature oracle at comparable widths
        let lf = 1.0;
        let gf = 1.0;
        let sigma = gf / (8.0f64 * std::f64::consts::LN_2).sqrt();
        let gamma = lf / 2.0;
        let conv = |nu: f64| {
            let n = 400_000;
            let span = 80.0;
            let h = span / n as f64;
            let mut acc = 0.0;
            for i in 0..=n {
                let u = -span / 2.0 + i as f64 * h;
                let lor = gamma / (std::f64::consts::PI * (u * u + gamma * gamma));
                let z = (nu - u) / sigma;
                let gau = (-0.5 * z * z).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt());
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                acc += w * lor * gau * h;
            }
            acc
        };
        for nu in [0.0, 0.5, 1.0, 2.0] {
            let oracle = conv(nu);
            let got = voigt(nu, gf, lf);
            assert!(
                (got - oracle).abs() / oracle < 5e-3,
                "nu {nu}: {got} vs {oracle}"
            );
        }
    }

    #[test]
    fn laser_limited_lineshape_fwhm() {
        let wl = 67e6;
        let grid: Vec<f64> = (0..4001).map(|i| (i as f64 - 2000.0) * 1.25e5).collect();
        let spectrum = lineshape_convolved(&grid, 10e3, wl).unwrap();
        let got = fwhm(&grid, &spectrum).unwrap();
        assert!((got - wl).abs() / wl < 0.01, "FWHM {got}");
    }

    #[test]
    fn zero_laser_width_gives_lorentzian() {
        let l0 = 10e6;
        let grid: Vec<f64> = (0..4001).map(|i| (i as f64 - 2000.0) * 5e4).collect();
        let spectrum = lineshape_convolved(&grid, l0, 0.0).unwrap();
        let got = fwhm(&grid, &spectrum).unwrap();
        assert!((got - l0).abs() / l0 < 0.01);
    }

    #[test]
    fn equal_widths_match_convolution_oracle() {
        let w = 10e6;
        let grid: Vec<f64> = (0..8001).map(|i| (i as f64 - 4000.0) * 2.5e4).collect();
        let spectrum = lineshape_convolved(&grid, w, w).unwrap();
        let got = fwhm(&grid, &spectrum).unwrap();
        // Voigt FWHM approximation (Olivero-Longbothum), good to 0.02%
        let expected = 0.5346 * w + (0.2166 * w * w + w * w).sqrt();
        assert!(
            (got - expected).abs() / expected < 0.005,
            "{got} vs {expected}"
        );
    }

    #[test]
    fn grid_span_precondition() {
        let grid: Vec<f64> = (0..100).map(|i| i as f64 * 1e5).collect();
        assert!(matches!(
            lineshape_convolved(&grid, 1e3, 67e6),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn mean_lifetime_conventions() {
        assert_relative_eq!(
            weighted_mean_lifetime(&[2.0], &[1.3e-3], MeanConvention::Intensity).unwrap(),
            1.3e-3,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            weighted_mean_lifetime(&[2.0], &[1.3e-3], MeanConvention::Amplitude).unwrap(),
            1.3e-3,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            weighted_mean_lifetime(&[1.0, 1.0], &[1.0, 1.0], MeanConvention::Intensity).unwrap(),
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn amplitude_ratio_reproduces_mean() {
        let (t1, t2) = (0.3e-3, 1.3e-3);
        for conv in [MeanConvention::Intensity, MeanConvention::Amplitude] {
            let ratio = amplitude_ratio_for_mean_lifetime(t1, t2, 1.2e-3, conv).unwrap();
            let mean = weighted_mean_lifetime(&[ratio, 1.0], &[t1, t2], conv).unwrap();
            assert_relative_eq!(mean, 1.2e-3, max_relative = 1e-9);
        }
        // intensity convention closed form: ratio = 13/27
        let r = amplitude_ratio_for_mean_lifetime(t1, t2, 1.2e-3, MeanConvention::Intensity)
            .unwrap();
        assert_relative_eq!(r, 13.0 / 27.0, max_relative = 1e-6);
    }
}
