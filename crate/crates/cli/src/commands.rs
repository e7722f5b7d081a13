use std::fs;
use std::path::{Path, PathBuf};

use doa_core::array_sim::{generate_scenario, ArrayConfig};
use doa_core::bench::{self, write_sweep_csv, SweepAxis};
use doa_core::config::RunConfig;
use doa_core::decomposer::{self, write_trace_csv, TraceRecord};
use doa_core::files::{self, InputFile, MatrixRecord, SolutionFile, SOLUTION_FORMAT};
use doa_core::{detector, doa};
use serde::Serialize;

use crate::failure::{read_text, sibling_with_suffix, write_atomic, CliResult, Failure};
use crate::Common;

/// File config (or defaults) with flag overrides applied, validated.
fn resolve_config(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = read_text(path)?;
            RunConfig::from_toml_str(&text).map_err(|e| Failure::config(format!("{}: {}", path.display(), e)))?
        }
        None => RunConfig::new(ArrayConfig::default()),
    };
    if let Some(seed) = common.seed {
        cfg.scenario.seed = seed;
    }
    warn(&cfg.validate()?);
    Ok(cfg)
}

fn warn(warnings: &[String]) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn toml_echo<T: Serialize>(value: &T) -> CliResult<String> {
    toml::to_string(value).map_err(|e| Failure::config(format!("cannot serialise configuration: {e}")))
}

pub fn simulate(common: &Common, out: &Path) -> CliResult {
    let cfg = resolve_config(common)?;
    let scenario = generate_scenario(&cfg.scenario)?;
    let echo = toml_echo(&cfg.scenario)?;
    write_atomic(out, files::scenario_to_string(&scenario)?.as_bytes())?;
    print!("{echo}");
    eprintln!("wrote {}", out.display());
    Ok(())
}

pub fn solve(common: &Common, input: Option<&Path>, out: &Path, trace: Option<PathBuf>) -> CliResult {
    let mut cfg = resolve_config(common)?;
    let scenario = match input {
        Some(path) => match files::input_from_str(&read_text(path)?)? {
            InputFile::Scenario(s) => {
                if common.seed.is_some() {
                    eprintln!("warning: --seed has no effect on a scenario read from file");
                }
                *s
            }
            InputFile::Solution(_) => {
                return Err(Failure::config(format!("{}: expected a scenario file, found a solution", path.display())))
            }
        },
        None => generate_scenario(&cfg.scenario)?,
    };
    cfg.scenario = scenario.config.clone();
    let trace_path = trace.unwrap_or_else(|| sibling_with_suffix(out, ".trace.csv"));

    let mut records: Vec<TraceRecord> = Vec::new();
    let outcome = decomposer::run_observed(&scenario.measurements, &cfg.solver, None, |r| records.push(r.clone()));
    let mut csv = Vec::new();
    write_trace_csv(&records, &mut csv).map_err(|e| Failure::io(&trace_path, e))?;
    write_atomic(&trace_path, &csv)?;
    let result = outcome?;

    let grid = doa::uniform_grid(cfg.trial.grid_step_deg)?;
    let k = cfg.scenario.num_sources();
    let est = doa::estimate(&result.z_hat, k, &grid, cfg.scenario.spacing_wavelengths)?;
    let detection = detector::detect(&result.gamma_hat, cfg.trial.h_factor)?;

    println!(
        "iterations {} ({}), DOAs {:?}{}, distorted sensors {:?}",
        result.iterations(),
        if result.converged { "converged" } else { "iteration limit" },
        est.doas_deg,
        if est.degenerate { " [degenerate]" } else { "" },
        detection.distorted_indices
    );
    let solution = SolutionFile {
        format: SOLUTION_FORMAT.into(),
        config: cfg,
        converged: result.converged,
        iterations: result.iterations(),
        gamma_hat: files::vector_record(&result.gamma_hat),
        z_hat: MatrixRecord::from(&result.z_hat),
        detection,
        doas_deg: est.doas_deg,
        doa_degenerate: est.degenerate,
        trace: result.trace,
    };
    write_atomic(out, solution.to_json()?.as_bytes())?;
    eprintln!("wrote {} and {}", out.display(), trace_path.display());
    Ok(())
}

pub fn bench(common: &Common, out_dir: &Path, q: Option<usize>, workers: Option<usize>) -> CliResult {
    let mut cfg = resolve_config(common)?;
    if let Some(q) = q {
        cfg.bench.q = q;
    }
    if let Some(w) = workers {
        cfg.bench.workers = w;
    }
    cfg.validate()?;
    if cfg.bench.sweeps.is_empty() {
        return Err(Failure::config("configuration defines no [[bench.sweeps]]"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Failure::io(out_dir, e))?;
    write_atomic(&out_dir.join("config.toml"), toml_echo(&cfg)?.as_bytes())?;

    for spec in &cfg.bench.sweeps {
        let base = spec.base_config(&cfg.scenario);
        let points =
            bench::sweep(&base, &cfg.solver, &cfg.trial, spec.axis, &spec.values, cfg.bench.q, cfg.bench.workers)?;
        for p in &points {
            for t in p.trials.iter().filter(|t| t.failed()) {
                eprintln!(
                    "warning: sweep {} value {} trial {} failed: {}",
                    spec.name,
                    p.report.sweep_value,
                    t.trial_index,
                    t.error.as_deref().unwrap_or_default()
                );
            }
        }
        let csv_path = out_dir.join(format!("{}.csv", spec.name));
        let mut csv = Vec::new();
        write_sweep_csv(points.iter().map(|p| &p.report), &mut csv).map_err(|e| Failure::io(&csv_path, e))?;
        write_atomic(&csv_path, &csv)?;
        if cfg.bench.json_report {
            let json_path = out_dir.join(format!("{}.trials.json", spec.name));
            let text = serde_json::to_string_pretty(&points).map_err(|e| Failure::io(&json_path, e))?;
            write_atomic(&json_path, text.as_bytes())?;
        }

        let axis = match spec.axis {
            SweepAxis::SnrDb => "snr_db",
            SweepAxis::Snapshots => "snapshots",
        };
        println!("sweep {} ({axis}, q = {})", spec.name, cfg.bench.q);
        println!("  {:>10} {:>10} {:>8} {:>8} {:>6}", "value", "rmse_deg", "resprob", "detrate", "failed");
        for p in &points {
            let r = &p.report;
            println!(
                "  {:>10} {:>10.4} {:>8.3} {:>8.3} {:>6}",
                r.sweep_value, r.rmse_deg, r.res_prob, r.det_rate, r.failed_trials
            );
        }
    }
    eprintln!("wrote results to {}", out_dir.display());
    Ok(())
}

#[derive(Serialize)]
struct SpectrumEcho<'a> {
    input: String,
    source: &'a str,
    sources: usize,
    grid_step_deg: f64,
    peaks_deg: &'a [f64],
    config: &'a RunConfig,
}

pub fn spectrum(
    common: &Common,
    input: &Path,
    out: &Path,
    sources: Option<usize>,
    grid_step: Option<f64>,
) -> CliResult {
    let base = resolve_config(common)?;
    let (matrix, cfg, source) = match files::input_from_str(&read_text(input)?)? {
        InputFile::Scenario(s) => {
            let cfg = RunConfig { scenario: s.config.clone(), ..base };
            (s.measurements, cfg, "measurements")
        }
        InputFile::Solution(sol) => (sol.z_hat()?, sol.config, "z_hat"),
    };
    let k = sources.unwrap_or_else(|| cfg.scenario.num_sources());
    let step = grid_step.unwrap_or(cfg.trial.grid_step_deg);
    let grid = doa::uniform_grid(step)?;
    let spec = doa::music_spectrum(&matrix, k, &grid, cfg.scenario.spacing_wavelengths)?;
    let est = doa::estimate_doas(&spec, k)?;

    let mut csv = Vec::new();
    spec.write_csv(&mut csv).map_err(|e| Failure::io(out, e))?;
    write_atomic(out, &csv)?;
    let echo = SpectrumEcho {
        input: input.display().to_string(),
        source,
        sources: k,
        grid_step_deg: step,
        peaks_deg: &est.doas_deg,
        config: &cfg,
    };
    let echo_path = sibling_with_suffix(out, ".config.toml");
    write_atomic(&echo_path, toml_echo(&echo)?.as_bytes())?;
    println!("peaks {:?}{}", est.doas_deg, if est.degenerate { " [degenerate]" } else { "" });
    eprintln!("wrote {} and {}", out.display(), echo_path.display());
    Ok(())
}
