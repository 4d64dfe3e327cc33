use std::path::{Path, PathBuf};

use p2s_core::io;
use p2s_core::phantom::mean_b0_tissue;
use p2s_core::{apply_noise, clean_signal, GradientTable, NoiseSpec, PhantomSpec, Volume4D};

use crate::args::{PhantomArgs, SimulateArgs};
use crate::{io_error, CliError, CliResult};

/// Built-in gradient scheme: two b=0 volumes and a single b=1000 shell.
pub fn default_gradients(volumes: usize) -> CliResult<GradientTable> {
    if volumes < 3 {
        return Err(CliError::Usage(format!("--volumes must be at least 3, got {volumes}")));
    }
    Ok(GradientTable::shells(2, &[(1000.0, volumes - 2)])?)
}

/// The phantom described by the flags, and the seed used for its noise.
pub fn load_phantom(args: &PhantomArgs, volumes: usize) -> CliResult<(PhantomSpec, u64)> {
    match &args.spec {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
            let spec = PhantomSpec::from_toml(&text)
                .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let seed = args.seed.unwrap_or(spec.seed);
            Ok((spec, seed))
        }
        None => {
            let dims: [usize; 3] = args
                .dims
                .clone()
                .try_into()
                .map_err(|_| CliError::Usage("--dims takes exactly three values".into()))?;
            let seed = args.seed.unwrap_or(0);
            Ok((PhantomSpec::brain(dims, default_gradients(volumes)?, seed)?, seed))
        }
    }
}

pub fn echo_spec(spec: &PhantomSpec, seed: u64, channels: usize) {
    let g = spec.gradients.entries();
    let b0 = spec.gradients.b0_indices().len();
    let mut shells: Vec<f64> = g.iter().map(|e| e.b).filter(|&b| b > 0.0).collect();
    shells.sort_by(f64::total_cmp);
    shells.dedup();
    eprintln!(
        "phantom: dims {:?}, {} volumes ({} b=0, shells {:?}), seed {}, {} channels",
        spec.dims,
        g.len(),
        b0,
        shells,
        seed,
        channels
    );
    for t in &spec.tissues {
        eprintln!("  tissue {}: S0 {}, D {:?}", t.name, t.s0, t.tensor.matrix());
    }
}

fn write(vol: &Volume4D, path: &Path) -> CliResult {
    io::write_volume(vol, path)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

pub fn run(args: &SimulateArgs) -> CliResult {
    let (spec, seed) = load_phantom(&args.phantom, args.volumes)?;
    let channels = args.phantom.channels;
    echo_spec(&spec, seed, channels);
    let clean = clean_signal(&spec)?;
    let tissue = spec.tissue_mask();
    let b0 = spec.gradients.b0_indices();

    let mut noises: Vec<(String, NoiseSpec)> = Vec::new();
    if let Some(sigma) = args.sigma {
        noises.push((format!("sigma{sigma}"), NoiseSpec::new(sigma, channels)?));
    }
    for &snr in &args.snr {
        noises.push((format!("snr{snr}"), NoiseSpec::for_snr(snr, channels, &clean, &b0, &tissue)?));
    }

    std::fs::create_dir_all(&args.out_dir).map_err(|e| io_error(&args.out_dir, e))?;
    let ext = args.format.extension();
    let out = |stem: &str| -> PathBuf { args.out_dir.join(format!("{stem}.{ext}")) };

    if args.write_mask {
        io::write_mask(&tissue, out("mask"))?;
        eprintln!("wrote {}", out("mask").display());
    }
    if noises.is_empty() {
        return write(&clean, &out("clean"));
    }
    let mean_b0 = mean_b0_tissue(&clean, &b0, &tissue).ok();
    for (label, noise) in &noises {
        match mean_b0.filter(|_| noise.sigma > 0.0) {
            Some(m) => eprintln!("{label}: sigma {} (SNR {:.3})", noise.sigma, m / noise.sigma),
            None => eprintln!("{label}: sigma {}", noise.sigma),
        }
        write(&clean, &out(&format!("clean_{label}")))?;
        write(&apply_noise(&clean, noise, seed)?, &out(&format!("noisy_{label}")))?;
    }
    Ok(())
}
