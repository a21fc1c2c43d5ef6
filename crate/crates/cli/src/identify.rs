use std::fmt::Write as _;

use pwl_core::identify::identify;
use pwl_core::sim::fd_dataset;
use pwl_core::{Dataset, IdentifyConfig};
use serde::Deserialize;

use crate::error::{CliError, EXIT_NOT_CONVERGED};
use crate::files::{read_text, read_trajectory, write_text};
use crate::IdentifyArgs;

/// Identification options as read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    k: Option<usize>,
    epsilon: Option<f64>,
    delta_rel: Option<f64>,
    t_max: Option<usize>,
    restarts: Option<usize>,
    seed: Option<u64>,
}

fn resolve(args: &IdentifyArgs) -> Result<(usize, IdentifyConfig), CliError> {
    let file: ConfigFile = match &args.config {
        Some(p) => serde_json::from_str(&read_text(p)?)?,
        None => ConfigFile::default(),
    };
    let defaults = IdentifyConfig::default();
    let config = IdentifyConfig {
        epsilon: args.epsilon.or(file.epsilon),
        delta_rel: args.delta_rel.or(file.delta_rel).unwrap_or(defaults.delta_rel),
        t_max: args.t_max.or(file.t_max).unwrap_or(defaults.t_max),
        restarts: args.restarts.or(file.restarts).unwrap_or(defaults.restarts),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
    };
    let k = args.k.or(file.k).ok_or_else(|| CliError::config("the number of modes is required (--k)"))?;
    if k == 0 || config.restarts == 0 || config.t_max == 0 {
        return Err(CliError::config("k, restarts and t_max must be positive"));
    }
    if config.epsilon.is_some_and(|e| e.is_nan() || e < 0.0) || config.delta_rel.is_nan() || config.delta_rel < 0.0 {
        return Err(CliError::config("epsilon and delta_rel must be non-negative"));
    }
    Ok((k, config))
}

pub fn run(args: &IdentifyArgs) -> Result<(), CliError> {
    let (k, config) = resolve(args)?;
    let (csv, sidecar) = read_trajectory(&args.data)?;
    if csv.times.is_empty() {
        return Err(CliError::config(format!("{}: no samples", args.data.display())));
    }
    let data = match csv.derivs {
        Some(derivs) => Dataset::new(csv.times, csv.states, derivs)?,
        None if args.fd => {
            let switches = sidecar.map_or_else(|| vec![0.0], |s| s.switch_times);
            fd_dataset(&csv.times, &csv.states, &switches)?
        }
        None => return Err(CliError::config("the data has no derivative columns; pass --fd to estimate them")),
    };

    let result = identify(&data, k, &config)?;
    write_text(args.out.as_deref(), &result.to_json())?;
    if let Some(path) = &args.assignments {
        let mut text = String::from("t,mode");
        for (t, q) in data.times().iter().zip(&result.assignments) {
            write!(text, "\n{t:.16e},{q}").expect("writing to a string");
        }
        write_text(Some(path), &text)?;
    }
    if !result.converged {
        return Err(CliError::new(
            EXIT_NOT_CONVERGED,
            "not_converged",
            format!("E = {:.6e} did not fall below epsilon = {:.6e}; result written", result.objective, result.epsilon),
        ));
    }
    Ok(())
}
