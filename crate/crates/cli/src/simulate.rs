use nalgebra::DVector;
use pwl_core::presets::{artificial_instance, lorenz_initial_state, noise_seed, ArtificialSetup};
use pwl_core::sim::{add_noise, concatenate, voronoi_cell, ScheduledSwitch};
use pwl_core::{simulate_ode, simulate_pwl, Lorenz, PwlSystem, SimOptions, SwitchingLaw, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;
use crate::files::{companion_path, parse_vector, read_text, read_vectors, write_text, write_trajectory};
use crate::{Preset, SimulateLorenzArgs, SimulatePwlArgs};

pub fn pwl(args: &SimulatePwlArgs) -> Result<(), CliError> {
    let common = &args.common;
    if let Some(preset) = args.preset {
        if preset != Preset::Artificial {
            return Err(CliError::config("`simulate pwl` only supports the artificial preset"));
        }
        let defaults = ArtificialSetup::default();
        let delta = common.delta.unwrap_or(defaults.delta);
        let setup = ArtificialSetup {
            runs: args.concat.unwrap_or(defaults.runs),
            delta,
            samples_per_run: common.t_end.map_or(defaults.samples_per_run, |t| (t / delta).round() as usize),
            snr_percent: common.noise_snr,
            ..defaults
        };
        let inst = artificial_instance(&setup, common.seed)?;
        write_trajectory(&common.out, &inst.trajectory)?;
        write_text(Some(&companion_path(&common.out, "model.json")), &inst.system.to_json())?;
        let centers: Vec<&[f64]> = inst.centers.iter().map(|c| c.as_slice()).collect();
        write_text(Some(&companion_path(&common.out, "centers.json")), &serde_json::to_string_pretty(&centers)?)?;
        return Ok(());
    }

    let model = args.model.as_ref().ok_or_else(|| CliError::config("--model is required"))?;
    let sys = PwlSystem::from_json(&read_text(model)?)?;
    let law = match (&args.voronoi, &args.schedule) {
        (Some(path), None) => {
            let centers = read_vectors(path)?;
            if centers.len() != sys.num_modes() {
                return Err(CliError::config(format!("{} centers for {} modes", centers.len(), sys.num_modes())));
            }
            SwitchingLaw::voronoi(centers)?
        }
        (None, Some(path)) => {
            let events: Vec<ScheduledSwitch> = serde_json::from_str(&read_text(path)?)?;
            SwitchingLaw::Schedule(events)
        }
        _ => return Err(CliError::config("give exactly one of --voronoi and --schedule")),
    };
    let opts = SimOptions {
        t_end: common.t_end.unwrap_or(10.0),
        delta: common.delta.unwrap_or(0.01),
        min_dwell: args.min_dwell,
    };
    let runs = args.concat.unwrap_or(1);
    if runs == 0 {
        return Err(CliError::config("--concat must be at least 1"));
    }
    if args.x0.is_some() && runs > 1 {
        return Err(CliError::config("--x0 fixes a single run; drop it or --concat"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(common.seed);
    let mut trajs = Vec::with_capacity(runs);
    for _ in 0..runs {
        let (x0, q0) = match &law {
            SwitchingLaw::Voronoi { centers } => {
                let x0 = match &args.x0 {
                    Some(s) => parse_vector(s)?,
                    None => random_in_hull_box(centers, &mut rng),
                };
                let q0 = voronoi_cell(centers, &x0);
                (x0, q0)
            }
            SwitchingLaw::Schedule(_) => {
                if args.q0 >= sys.num_modes() {
                    return Err(CliError::config(format!("--q0 {} out of range", args.q0)));
                }
                let n = sys.mode(args.q0).state_dim();
                let x0 = match &args.x0 {
                    Some(s) => parse_vector(s)?,
                    None => DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0)),
                };
                (x0, args.q0)
            }
        };
        trajs.push(simulate_pwl(&sys, &law, &x0, q0, &opts)?);
    }
    let traj = concatenate(&trajs)?;
    write_trajectory(&common.out, &noisy(traj, common.noise_snr, common.seed)?)
}

pub fn lorenz(args: &SimulateLorenzArgs) -> Result<(), CliError> {
    let common = &args.common;
    if args.preset == Some(Preset::Artificial) {
        return Err(CliError::config("`simulate lorenz` only supports the lorenz preset"));
    }
    let delta = common.delta.unwrap_or(0.01);
    let t_end = common.t_end.unwrap_or(50.0);
    let x0 = match &args.x0 {
        Some(s) => parse_vector(s)?,
        None => lorenz_initial_state(common.seed),
    };
    if x0.len() != 3 {
        return Err(CliError::config("the Lorenz state has 3 components"));
    }
    let rhs = Lorenz { sigma: args.sigma, rho: args.rho, beta: args.beta };
    let traj = simulate_ode(&rhs, &x0, t_end, delta)?;
    write_trajectory(&common.out, &noisy(traj, common.noise_snr, common.seed)?)
}

fn noisy(traj: Trajectory, snr: f64, seed: u64) -> Result<Trajectory, CliError> {
    if snr == 0.0 {
        return Ok(traj);
    }
    Ok(add_noise(&traj, snr, noise_seed(seed))?)
}

/// Uniform draw from the bounding box of the centers, widened by half its
/// extent (or by 1 along degenerate axes).
fn random_in_hull_box(centers: &[DVector<f64>], rng: &mut impl Rng) -> DVector<f64> {
    let n = centers[0].len();
    DVector::from_fn(n, |i, _| {
        let lo = centers.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min);
        let hi = centers.iter().map(|c| c[i]).fold(f64::NEG_INFINITY, f64::max);
        let pad = if hi > lo { 0.5 * (hi - lo) } else { 1.0 };
        rng.random_range(lo - pad..hi + pad)
    })
}
