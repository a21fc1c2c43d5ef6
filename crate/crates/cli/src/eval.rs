use pwl_core::{match_modes, segmentation_agreement, verify_ar, ArSignal, ModeParams, PwlSystem, SarsModel};
use serde::Serialize;

use crate::error::CliError;
use crate::files::{read_labels, read_signal, read_text, write_text};
use crate::EvalCommand;

#[derive(Serialize)]
struct Agreement {
    agreement: f64,
    samples: usize,
}

#[derive(Serialize)]
struct ArResidual {
    residual: f64,
    order: usize,
    mode: usize,
}

fn params(path: &std::path::Path) -> Result<ModeParams, CliError> {
    Ok(ModeParams::from_pwl(&PwlSystem::from_json(&read_text(path)?)?)?)
}

pub fn run(cmd: &EvalCommand) -> Result<(), CliError> {
    match cmd {
        EvalCommand::Match { truth, est, out } => {
            let report = match_modes(&params(truth)?, &params(est)?)?;
            write_text(out.as_deref(), &report.to_json())
        }
        EvalCommand::Segment { a, b, out } => {
            let (a, b) = (read_labels(a)?, read_labels(b)?);
            let agreement = segmentation_agreement(&a, &b)?;
            write_text(out.as_deref(), &serde_json::to_string_pretty(&Agreement { agreement, samples: a.len() })?)
        }
        EvalCommand::Ar { traj, coeffs, mode, segment, out } => {
            let sars = SarsModel::from_json(&read_text(coeffs)?)?;
            let coeffs =
                sars.modes().get(*mode).ok_or_else(|| CliError::config(format!("the AR model has no mode {mode}")))?;
            let traj = read_signal(traj)?;
            let segment = segment.as_deref().map(|s| (s[0], s[1]));
            let residual = verify_ar(&traj, coeffs, ArSignal::FiniteDifference, segment)?;
            let doc = ArResidual { residual, order: sars.order(), mode: *mode };
            write_text(out.as_deref(), &serde_json::to_string_pretty(&doc)?)
        }
    }
}
