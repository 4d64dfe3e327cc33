use std::time::Instant;

use p2s_core::baseline::svd_rank_denoise;
use p2s_core::{io, patch2self_with_progress, DenoiseConfig, Passthrough, Regularization, SolverChoice, Volume4D};

use crate::args::{DenoiseArgs, Model, PassthroughArg, SolverArg};
use crate::{CliError, CliResult};

fn regularization(model: Model, lambda: Option<f64>) -> CliResult<Regularization> {
    match (model, lambda) {
        (Model::Ridge, Some(l)) if l.is_finite() && l >= 0.0 => Ok(Regularization::Ridge(l)),
        (Model::Ridge, Some(l)) => Err(CliError::Usage(format!("--lambda must be finite and >= 0, got {l}"))),
        (Model::Ridge, None) => Err(CliError::Usage("--model ridge requires --lambda".into())),
        (_, Some(_)) => Err(CliError::Usage("--lambda is only valid with --model ridge".into())),
        (_, None) => Ok(Regularization::Ols),
    }
}

/// Validates flags, then builds the configuration for the linear models.
pub fn config(args: &DenoiseArgs) -> CliResult<DenoiseConfig> {
    let reg = regularization(args.model, args.lambda)?;
    let mask = args.mask.as_ref().map(io::read_mask).transpose()?;
    Ok(DenoiseConfig::new(args.radius)
        .with_regularization(reg)
        .with_mask(mask)
        .with_passthrough(match args.passthrough {
            PassthroughArg::Copy => Passthrough::CopyInput,
            PassthroughArg::Zero => Passthrough::Zero,
        })
        .with_solver(match args.solver {
            SolverArg::Auto => SolverChoice::Auto,
            SolverArg::Qr => SolverChoice::Qr,
            SolverArg::Normal => SolverChoice::NormalEquations,
        }))
}

pub fn denoise(vol: &Volume4D, model: Model, block: usize, cfg: &DenoiseConfig) -> p2s_core::Result<Volume4D> {
    match model {
        Model::SvdRank(rank) => svd_rank_denoise(vol, rank, block),
        Model::Ols | Model::Ridge => {
            let n = vol.volumes();
            patch2self_with_progress(vol, cfg, |r| {
                eprintln!(
                    "volume {:>3}/{n}: rank {}, {:.3} s",
                    r.index + 1,
                    r.rank,
                    r.elapsed.as_secs_f64()
                )
            })
        }
    }
}

pub fn run(args: &DenoiseArgs) -> CliResult {
    let cfg = config(args)?;
    let vol = io::read_volume(&args.input)?;
    eprintln!(
        "denoise: {} dims {:?}, model {:?}, radius {}, lambda {}, mask {}, passthrough {:?}, solver {:?}, threads {}",
        args.input.display(),
        vol.dims(),
        args.model,
        args.radius,
        cfg.regularization.lambda(),
        args.mask.as_ref().map_or("none".into(), |p| p.display().to_string()),
        args.passthrough,
        args.solver,
        rayon::current_num_threads()
    );
    let start = Instant::now();
    let out = denoise(&vol, args.model, args.block, &cfg)?;
    eprintln!("total {:.3} s", start.elapsed().as_secs_f64());
    io::write_volume(&out, &args.output)?;
    eprintln!("wrote {}", args.output.display());
    Ok(())
}
