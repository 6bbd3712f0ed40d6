//! Experiment orchestration: turn a validated configuration into CSV/JSON
//! artifacts plus a machine-readable run report.

use crate::bloch::{
    echo_experiment, pulse_width_for_angle, rabi_experiment, ramsey_experiment, SignalMode,
};
use crate::config::{ExperimentConfig, OutputArtifact, RunReport};
use crate::error::{Error, Result};
use crate::fit::{
    amplitude_ratio_for_mean_lifetime, fit, fwhm, lineshape_convolved, weighted_mean_lifetime,
    MeanConvention, Model, ModelSpec,
};
use crate::geometry::{expected_ions, hnps_in_spot, occupancy_pmf, sidewall_capture_area};
use crate::levels::{saturation_curve, saturation_flux, trpl_decay, upconversion_sequence};
use crate::profile::{gaussian_profile, load_profile, retained_fraction};
use crate::rng::stream_rng;
use crate::stream::{camera_image, pulsed_g2, simulate_stream, StreamParams};
use rand_distr::{Distribution, Normal};
use serde_json::json;
use std::path::Path;
use std::time::Instant;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

fn missing(section: &str) -> Error {
    Error::Config(format!("experiment requires the [{section}] section"))
}

fn write_artifact(
    out_dir: &Path,
    name: &str,
    contents: &str,
    outputs: &mut Vec<OutputArtifact>,
) -> Result<()> {
    let path = out_dir.join(name);
    std::fs::write(&path, contents)?;
    outputs.push(OutputArtifact {
        name: name.to_string(),
        path: path.display().to_string(),
    });
    Ok(())
}

fn csv_xy(header: &str, x: &[f64], y: &[f64]) -> String {
    let mut out = format!("{header}\n");
    for (a, b) in x.iter().zip(y) {
        out.push_str(&format!("{a:.9e},{b:.9e}\n"));
    }
    out
}

fn linspace(max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| max * i as f64 / (n - 1) as f64).collect()
}

fn maybe_add_noise(y: &mut [f64], sigma: Option<f64>, seed: u64, label: &str) {
    if let Some(s) = sigma {
        if s > 0.0 {
            let mut rng = stream_rng(seed, label);
            let normal = Normal::new(0.0, s).expect("positive sigma");
            for v in y.iter_mut() {
                *v += normal.sample(&mut rng);
            }
        }
    }
}

/// Run one experiment, writing artifacts under `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let mut outputs = Vec::new();

    let summary = match cfg.experiment.as_str() {
        "blueprint" => run_blueprint(cfg, out_dir, &mut outputs)?,
        "implant" => run_implant(cfg, out_dir, &mut outputs)?,
        "saturation" => run_saturation(cfg, out_dir, &mut outputs)?,
        "trpl" => run_trpl(cfg, out_dir, &mut outputs)?,
        "rabi" => run_rabi(cfg, out_dir, &mut outputs)?,
        "ramsey" => run_coherence(cfg, out_dir, &mut outputs, false)?,
        "echo" => run_coherence(cfg, out_dir, &mut outputs, true)?,
        "g2" => run_g2(cfg, out_dir, &mut outputs)?,
        "upconversion" => run_upconversion(cfg, out_dir, &mut outputs)?,
        "ple" => run_ple(cfg, out_dir, &mut outputs)?,
        "image" => run_image(cfg, out_dir, &mut outputs)?,
        "fit" => run_fit(cfg, out_dir, &mut outputs)?,
        other => return Err(Error::Config(format!("unknown experiment '{other}'"))),
    };

    let report = RunReport {
        experiment: cfg.experiment.clone(),
        config_digest: cfg.digest()?,
        toolkit_version: TOOLKIT_VERSION.to_string(),
        outputs: outputs.clone(),
        summary,
        wall_clock_ms: started.elapsed().as_millis() as u64,
    };
    let report_json =
        serde_json::to_string_pretty(&report).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(out_dir.join("report.json"), report_json)?;
    Ok(report)
}

fn run_blueprint(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: &mut Vec<OutputArtifact>,
) -> Result<serde_json::Value> {
    let gs = cfg.geometry.as_ref().ok_or_else(|| missing("geometry"))?;
    let os = cfg.occupancy.as_ref().ok_or_else(|| missing("occupancy"))?;
    let geom = gs.geometry()?;
    let spot = gs.spot()?;
    let n_hnps = hnps_in_spot(&geom, &spot);
    let capture = sidewall_capture_area(&geom);
    let model = os.model(capture)?;
    let lambda = expected_ions(&model, n_hnps);
    let k_max = os.k_max.unwrap_or(12);
    let pmf = occupancy_pmf(lambda, k_max)?;

    let ks: Vec<f64> = (0..=k_max).map(|k| k as f64).collect();
    write_artifact(out_dir, "blueprint.csv", &csv_xy("k,probability", &ks, &pmf), outputs)?;

    let p_multi: f64 = pmf.iter().skip(2).sum();
    Ok(json!({
        "n_hnps_in_spot": n_hnps,
        "capture_area_cm2": capture,
        "expected_ions": lambda,
        "p_empty": pmf[0],
        "p_single": pmf.get(1).copied().unwrap_or(0.0),
        "p_multi": p_multi,
    }))
}

fn run_implant(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: &mut Vec<OutputArtifact>,
) -> Result<serde_json::Value> {
    let ps = cfg.profile.as_ref().ok_or_else(|| missing("profile"))?;
    let profile = match &ps.file {
        Some(path) => load_profile(&std::fs::read_to_string(path)?)?,
        None => {
            let rp = ps.range.as_ref().ok_or_else(|| missing("profile.range"))?;
            let drp = ps
                .straggle
                .as_ref()
                .ok_or_else(|| missing("profile.straggle"))?;
            let step = ps
                .grid_step
                .as_ref()
                .ok_or_else(|| missing("profile.grid_step"))?;
            gaussian_profile(rp.nanometers()?, drp.nanometers()?, step.nanometers()?)?
        }
    };
    let stack = ps.stack()?;
    let retained = retained_fraction(&profile, &stack)?;
    write_artifact(out_dir, "profile.csv", &profile.to_csv(), outputs)?;
    Ok(json!({
        "mean_depth_nm": profile.mean_depth_nm(),
        "retained_fraction": retained,
    }))
}

fn run_saturation(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: &mut Vec<OutputArtifact>,
) -> Result<serde_json::Value> {
    let es = cfg.excitation.as_ref().ok_or_else(|| missing("excitation"))?;
    let exc = es.spec()?;
    let ls = cfg.levels.as_ref().ok_or_else(|| missing("levels"))?;
    let sys = ls.system()?;
    let tau = sys.levels[crate::levels::TELECOM]
        .lifetime_s
        .expect("telecom lifetime");
    let phi_sat = saturation_flux(exc.cross_section_cm2, tau)?;

    // logarithmic flux grid spanning two decades around saturation
    let grid: Vec<f64> = (0..61)
        .map(|i| phi_sat * 10f64.powf(-2.0 + i as f64 * 4.0 / 60.0))
        .collect();
    let rates = saturation_curve(exc.cross_section_cm2, tau, 1.0, &grid)?;
    write_artifact(
        out_dir,
        "saturation.csv",
        &csv_xy("photon_flux_per_cm2_s,normalized_rate", &grid, &rates),
        outputs,
    )?;
    Ok(json!({
        "saturation_flux_per_cm2_s": phi_sat,
        "tau_effective_s": tau,
        "cross_section_cm2": exc.cross_section_cm2,
    }))
}

fn run_trpl(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: &mut Vec<OutputArtifact>,
) -> Result<serde_json::Value> {
    let ts = cfg.trpl.as_ref().ok_or_else(|| missing("trpl"))?;
    let tau1 = ts.tau1.seconds()?;
    let tau2 = ts.tau2.seconds()?;
    let target = ts.mean_lifetime.seconds()?;
    let ratio = amplitude_ratio_for_mean_lifetime(tau1, tau2, target, MeanConvention::Intensity)?;
    let grid = linspace(ts.t_max.seconds()?, ts.n_points);
    let mut decay = trpl_decay((ratio, 1.0), (tau1, tau2), &grid)?;
    if ts.noise_sigma.is_some() {
        let seed = cfg.require_seed()?;
        maybe_add_noise(&mut decay, ts.noise_sigma, seed, "trpl-noise");
    }
    write_artifact(
        out_dir,
        "trpl.csv",
        &csv_xy("time_s,intensity", &grid, &decay),
        outputs,
    )?;

    let mut spec = ModelSpec::new(Model::Biexp, vec![ratio * 0.8, tau1 * 0.7, 1.2, tau2 * 1.3]);
    spec.lower = vec![0.0, 1e-6, 0.0, 1e-6];
    spec.upper = vec![100.0, 1.0, 100.0, 1.0];
    let res = fit(&spec, &grid, &decay, None)?;
    let mean = weighted_mean_lifetime(
        &[res.parameters[0], res.parameters[2]],
        &[res.parameters[1], res.parameters[3]],
        MeanConvention::Intensity,
    )?;
    Ok(json!({
        "tau1_s": tau1,
        "tau2_s": tau2,
        "amplitude_ratio": ratio,
        "mean_lifetime_target_s": target,
        "fit": {
            "parameters": res.parameters,
            "std_errors": res.std_errors,
            "converged": res.converged,
            "mean_lifetime_s": mean,
        },
    }))
}

fn run_rabi(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: &mut Vec<OutputArtifact>,
) -> Result<serde_json::Value> {
    let cs = cfg.coherence.as_ref().ok_or_else(|| missing("coherence"))?;
    let ss = cfg.sequence.as_ref().ok_or_else(|| missing("sequence"))?;
    let params = cs.params()?;
    let mode = ss.signal_mode()?;
    let tp_max = ss
        .pulse_width_max
        .as_ref()
        .ok_or_else(|| missing("sequence.pulse_width_max"))?
        .seconds()?;
    let grid = linspace(tp_max, ss.n_points);
    let contrast = ss.contrast.unwrap_or(1.0);
    let offset = ss.offset.unwrap_or(0.0);
    let mut signal = rabi_experiment(&params, &grid, contrast, offset, mode)?;
    if ss.noise_sigma.is_some() {
        let seed = cfg.require_seed()?;
        maybe_add_noise(&mut signal, ss.noise_sigma, seed, "rabi-noise");
    }
    write_artifact(
        out_dir,
        "rabi.csv",
        &csv_xy("pulse_width_s,signal", &grid, &signal),
        outputs,
    )?;

    let model = match mode {
        SignalMode::Analytic => Model::RabiSin,
        SignalMode::Bloch => Model::RabiBloch,
    };
    let omega = params.rabi_rad_per_s;
    let spec = ModelSpec::new(model, vec![contrast, omega * 1.02, offset]);
    let res = fit(&spec, &grid, &signal, None)?;
    Ok(json!({
        "rabi_rad_per_s": omega,
        "rabi_hz": omega / (2.0 * std::f64::consts::PI),
        "contrast": contrast,
        "fit": {
            "model": res.model_id,
            "parameters": res.parameters,
            "std_errors": res.std_errors,
            "converged": res.converged,
        },
    }))
}

fn run_coherence(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: &mut Vec<OutputArtifact>,
    echo: bool,
) -> Result<serde_json::Value> {
    let cs = cfg.coherence.as_ref().ok_or_else(|| missing("coherence"))?;
    let ss = cfg.sequence.as_ref().ok_or_else(|| missing("sequence"))?;
    let params = cs.params()?;
    let mode = ss.signal_mode()?;
    let tau_max = ss
        .tau_max
        .as_ref()
        .ok_or_else(|| missing("sequence.tau_max"))?
        .seconds()?;
    let grid = linspace(tau_max, ss.n_points);
    let (name, time_scale) = if echo {
        ("echo", params.t2_s)
    } else {
        ("ramsey", params.t2_star_s)
    };
    let mut signal = if echo {
        let width = pulse_width_for_angle(params.rabi_rad_per_s, std::f64::consts::PI);
        echo_experiment(&params, &grid, width, mode)?
    } else {
        let width = pulse_width_for_angle(params.rabi_rad_per_s, std::f64::consts::FRAC_PI_2);
        ramsey_experiment(&params, &grid, width, mode)?
    };
    if ss.noise_sigma.is_some() {
        let seed = cfg.require_seed()?;
        maybe_add_noise(&mut signal, ss.noise_sigma, seed, &format!("{name}-noise"));
    }
    write_artifact(
        out_dir,
        &format!("{name}.csv"),
        &csv_xy("tau_s,amplitude", &grid, &signal),
        outputs,
    )?;

    let model = if echo { Model::EchoEnv } else { Model::RamseyEnv };
    let mut spec = ModelSpec::new(model, vec![1.0, time_scale * 1.2]);
    spec.lower = vec![0.0, 1e-9];
    spec.upper = vec![10.0, 1.0];
    let res = fit(&spec, &grid, &signal, None)?;
    let linewidth = crate::bloch::intrinsic_linewidth(res.parameters[1])?;
    Ok(json!({
        "coherence_time_true_s": time_scale,
        "fit": {
            "model": res.model_id,
            "amplitude": res.parameters[0],
            "coherence_time_s": res.parameters[1],
            "std_errors": res.std_errors,
            "converged": res.converged,
        },
        "intrinsic_linewidth_hz": linewidth,
    }))
}

fn run_g2(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: &mut Vec<OutputArtifact>,
) -> Result<serde_json::Value> {
    let es = cfg.excitation.as_ref().ok_or_else(|| missing("excitation"))?;
    let ds = cfg.detector.as_ref().ok_or_else(|| missing("detector"))?;
    let ss = cfg.stream.as_ref().ok_or_else(|| missing("stream"))?;
    let seed = cfg.require_seed()?;
    let params = StreamParams {
        n_emitters: ss.n_emitters,
        excitation: es.spec()?,
        lifetime_s: ss.lifetime.seconds()?,
        detector: ds.spec()?,
        n_pulses: ss.n_pulses,
        period_s: ss.period.seconds()?,
        background_rate_hz: ss.background_rate.per_s()?,
        seed,
    };
    let stream = simulate_stream(&params)?;
    let hist = pulsed_g2(&stream, ss.max_k.unwrap_or(20))?;
    write_artifact(out_dir, "clicks.csv", &stream.to_csv(), outputs)?;
    write_artifact(out_dir, "g2_histogram.csv", &hist.to_csv(), outputs)?;
    Ok(json!({
        "n_emitters": ss.n_emitters,
        "n_clicks": stream.timestamps_ps.len(),
        "g2_zero": hist.g2_zero,
        "g2_zero_sigma": hist.g2_zero_sigma,
        "ideal_model_g2": crate::geometry::g2_zero_model(ss.n_emitters.max(1))?,
    }))
}

fn run_upconversion(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: &mut Vec<OutputArtifact>,
) -> Result<serde_json::Value> {
    let ls = cfg.levels.as_ref().ok_or_else(|| missing("levels"))?;
    let sys = ls.system()?;
    let n_pulses = ls.n_pulses.unwrap_or(4);
    let res = upconversion_sequence(&sys, n_pulses)?;
    let (w, y): (Vec<f64>, Vec<f64>) = res.photon_yields.iter().cloned().unzip();
    write_artifact(
        out_dir,
        "upconversion.csv",
        &csv_xy("wavelength_nm,photons_per_sequence", &w, &y),
        outputs,
    )?;
    Ok(json!({
        "n_pulses": n_pulses,
        "populations_after_pulses": res.populations_after_pulses.to_vec(),
        "photon_yields": res.photon_yields,
    }))
}

fn run_ple(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: &mut Vec<OutputArtifact>,
) -> Result<serde_json::Value> {
    let ls = cfg.lineshape.as_ref().ok_or_else(|| missing("lineshape"))?;
    let lorentz = ls.lorentz_fwhm.hertz()?;
    let laser = ls.laser_fwhm.hertz()?;
    let span = ls.grid_span.hertz()?;
    let n = ls.grid_points;
    if n < 3 {
        return Err(Error::Config("grid_points must be at least 3".into()));
    }
    let grid: Vec<f64> = (0..n)
        .map(|i| -span / 2.0 + span * i as f64 / (n - 1) as f64)
        .collect();
    let spectrum = lineshape_convolved(&grid, lorentz, laser)?;
    let width = fwhm(&grid, &spectrum)?;
    write_artifact(
        out_dir,
        "ple.csv",
        &csv_xy("detuning_hz,intensity", &grid, &spectrum),
        outputs,
    )?;
    Ok(json!({
        "lorentz_fwhm_hz": lorentz,
        "laser_fwhm_hz": laser,
        "observed_fwhm_hz": width,
    }))
}

fn run_image(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: &mut Vec<OutputArtifact>,
) -> Result<serde_json::Value> {
    let is = cfg.image.as_ref().ok_or_else(|| missing("image"))?;
    let seed = cfg.require_seed()?;
    let mut positions = Vec::with_capacity(is.emitters.len());
    for pos in &is.emitters {
        positions.push((pos[0].nanometers()?, pos[1].nanometers()?));
    }
    let img = camera_image(
        &positions,
        is.psf_sigma.nanometers()?,
        is.pixel_pitch.nanometers()?,
        is.exposure_clicks,
        seed,
    )?;
    write_artifact(out_dir, "image.csv", &img.to_csv(), outputs)?;
    write_artifact(out_dir, "image.pgm", &img.to_pgm(), outputs)?;
    let centroid = img.centroid_nm();
    Ok(json!({
        "width": img.width,
        "height": img.height,
        "pixel_pitch_nm": img.pixel_pitch_nm,
        "centroid_nm": centroid.map(|(x, y)| vec![x, y]),
    }))
}

fn run_fit(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    outputs: &mut Vec<OutputArtifact>,
) -> Result<serde_json::Value> {
    let fs = cfg.fit.as_ref().ok_or_else(|| missing("fit"))?;
    let model = Model::from_id(&fs.model)?;
    let text = std::fs::read_to_string(&fs.data)?;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for line in text.lines() {
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() < 2 {
            continue;
        }
        let (Ok(a), Ok(b)) = (fields[0].parse::<f64>(), fields[1].parse::<f64>()) else {
            continue; // header
        };
        x.push(a);
        y.push(b);
    }
    let spec = ModelSpec::new(model, fs.initial.clone());
    let res = fit(&spec, &x, &y, None)?;
    if !res.converged {
        return Err(Error::Fit(format!(
            "fit of model '{}' did not converge after {} iterations",
            res.model_id, res.iterations
        )));
    }
    let result_json = json!({
        "model": res.model_id,
        "parameters": res.parameters,
        "std_errors": res.std_errors,
        "residual_norm": res.residual_norm,
        "iterations": res.iterations,
    });
    write_artifact(
        out_dir,
        "fit.json",
        &serde_json::to_string_pretty(&result_json).map_err(|e| Error::Format(e.to_string()))?,
        outputs,
    )?;
    Ok(result_json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::load_preset;
    use tempfile::tempdir;

    #[test]
    fn blueprint_preset_runs() {
        let cfg = load_preset("fig3_blueprint").unwrap();
        let dir = tempdir().unwrap();
        let report = run_experiment(&cfg, dir.path()).unwrap();
        assert_eq!(report.summary["n_hnps_in_spot"], 12);
        let lambda = report.summary["expected_ions"].as_f64().unwrap();
        assert!((lambda - 1.0).abs() < 0.05, "lambda {lambda}");
        assert!(dir.path().join("blueprint.csv").exists());
        assert!(dir.path().join("report.json").exists());
    }

    #[test]
    fn ple_preset_reports_laser_limited_width() {
        let cfg = load_preset("fig5c_ple").unwrap();
        let dir = tempdir().unwrap();
        let report = run_experiment(&cfg, dir.path()).unwrap();
        let w = report.summary["observed_fwhm_hz"].as_f64().unwrap();
        assert!((w - 67e6).abs() / 67e6 < 0.01, "width {w}");
    }

    #[test]
    fn upconversion_preset_pumps_green() {
        let cfg = load_preset("fig5_upconversion").unwrap();
        let dir = tempdir().unwrap();
        let report = run_experiment(&cfg, dir.path()).unwrap();
        let pops = report.summary["populations_after_pulses"].as_array().unwrap();
        assert!(pops[4].as_f64().unwrap() > 0.9);
    }

    #[test]
    fn same_config_same_bytes() {
        let cfg = load_preset("fig4b_g2").unwrap();
        let d1 = tempdir().unwrap();
        let d2 = tempdir().unwrap();
        run_experiment(&cfg, d1.path()).unwrap();
        run_experiment(&cfg, d2.path()).unwrap();
        for name in ["clicks.csv", "g2_histogram.csv"] {
            let a = std::fs::read(d1.path().join(name)).unwrap();
            let b = std::fs::read(d2.path().join(name)).unwrap();
            assert_eq!(a, b, "{name} differs");
        }
    }

    #[test]
    fn missing_section_is_config_error() {
        let cfg = ExperimentConfig::from_toml("experiment = \"rabi\"\n").unwrap();
        let dir = tempdir().unwrap();
        assert!(matches!(
            run_experiment(&cfg, dir.path()),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn fit_subcommand_round_trip() {
        let dir = tempdir().unwrap();
        let tau = 1.3e-3;
        let mut data = String::from("x,y\n");
        for i in 0..60 {
            let t = i as f64 * 1e-4;
            data.push_str(&format!("{t},{}\n", 2.0 * (-t / tau).exp()));
        }
        let data_path = dir.path().join("decay.csv");
        std::fs::write(&data_path, data).unwrap();
        let toml = format!(
            "experiment = \"fit\"\n[fit]\nmodel = \"single_exp\"\ninitial = [1.0, 5e-4]\ndata = \"{}\"\n",
            data_path.display()
        );
        let cfg = ExperimentConfig::from_toml(&toml).unwrap();
        let report = run_experiment(&cfg, dir.path()).unwrap();
        let p = report.summary["parameters"].as_array().unwrap();
        assert!((p[1].as_f64().unwrap() - tau).abs() / tau < 1e-6);
    }
}
