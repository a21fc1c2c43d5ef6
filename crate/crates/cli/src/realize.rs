use pwl_core::model::{dimension, embed_affine_to_linear, merge_to_lssj};
use pwl_core::realization::{build_hankel, kalman_ho, kn_realize, HankelMatrix, MarkovTable, PartitionSearch};
use pwl_core::PwlSystem;

use crate::error::CliError;
use crate::files::{read_text, write_text};
use crate::RealizeArgs;

pub fn run(args: &RealizeArgs) -> Result<(), CliError> {
    let (h, affine) = match (&args.hankel, &args.model) {
        (Some(path), None) => (HankelMatrix::from_json(&read_text(path)?)?, false),
        (None, Some(path)) => {
            let sys = PwlSystem::from_json(&read_text(path)?)?;
            (hankel_of_model(&sys, args)?, !sys.is_linear())
        }
        _ => return Err(CliError::config("give exactly one of --hankel and --model")),
    };

    let text = match args.kn.as_deref() {
        None => kalman_ho(&h, args.rank_tol)?.to_json(),
        Some(&[k, n]) => {
            let n = if affine && !args.n_bound_after_embedding { n + 1 } else { n };
            let search = if args.exhaustive { PartitionSearch::Exhaustive } else { PartitionSearch::Greedy };
            kn_realize(&h, k, n, args.rank_tol, search)?.to_json()
        }
        Some(_) => return Err(CliError::config("--kn takes two integers K N")),
    };
    write_text(args.out.as_deref(), &text)
}

/// Hankel matrix of the merged (and, for affine models, embedded) system with
/// one analytic piece per initial state.
fn hankel_of_model(sys: &PwlSystem, args: &RealizeArgs) -> Result<HankelMatrix, CliError> {
    let linear = if sys.is_linear() { sys.clone() } else { embed_affine_to_linear(sys) };
    let lssj = merge_to_lssj(&linear)?;
    let n = dimension(&linear).total_continuous;
    let l = args.l.unwrap_or(n);
    let m = args.m.unwrap_or(n);
    let r = args.r.unwrap_or(lssj.x0.len());
    let table = MarkovTable::from_lssj(&lssj, l + m)?;
    Ok(build_hankel(&table, l, m, r)?)
}
