//! Grid runner: for each (SNR, volume count) cell, simulate once, then
//! score the noisy data, the linear denoiser at every radius, and optionally
//! the SVD baseline, both inside the tissue mask and over the whole grid.

use std::io::Write;

use p2s_core::baseline::DEFAULT_BLOCK_EDGE;
use p2s_core::{apply_noise, clean_signal, evaluate, DenoiseConfig, Mask3D, NoiseSpec, Volume4D};

use crate::args::{Model, SweepArgs};
use crate::denoise::denoise;
use crate::simulate::{default_gradients, echo_spec, load_phantom};
use crate::{io_error, CliResult};

pub const SWEEP_HEADER: &str = "schema,snr,volumes,radius,method,region,rmse,r2,voxel_count,status";
pub const SWEEP_SCHEMA: &str = "p2s-sweep/1";

struct Sink {
    out: Box<dyn Write>,
    path: Option<std::path::PathBuf>,
}

impl Sink {
    fn line(&mut self, s: &str) -> CliResult {
        let res = writeln!(self.out, "{s}").and_then(|_| self.out.flush());
        res.map_err(|e| io_error(self.path.as_deref().unwrap_or("<stdout>".as_ref()), e))
    }
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\"").replace('\n', " "))
}

struct Cell<'a> {
    snr: f64,
    volumes: usize,
    clean: &'a Volume4D,
    tissue: &'a Mask3D,
}

impl Cell<'_> {
    fn rows(&self, radius: Option<usize>, method: &str, estimate: Result<&Volume4D, String>) -> Vec<String> {
        let radius = radius.map(|r| r.to_string()).unwrap_or_default();
        let prefix = format!("{SWEEP_SCHEMA},{},{},{radius},{method}", self.snr, self.volumes);
        [("tissue", Some(self.tissue)), ("all", None)]
            .into_iter()
            .map(|(region, mask)| {
                let scored = estimate
                    .clone()
                    .and_then(|est| evaluate(self.clean, est, mask, false).map_err(|e| e.to_string()));
                match scored {
                    Ok(r) => format!("{prefix},{region},{},{},{},ok", r.rmse, r.r2, r.voxel_count),
                    Err(e) => format!("{prefix},{region},,,,{}", quote(&format!("error: {e}"))),
                }
            })
            .collect()
    }
}

pub fn run(args: &SweepArgs) -> CliResult {
    // A spec file fixes its own gradient table, so the volume axis collapses
    // to one placeholder entry. Otherwise validate every count up front.
    let counts: Vec<usize> = match args.phantom.spec {
        Some(_) => vec![0],
        None => args.volumes.clone(),
    };
    if args.phantom.spec.is_none() {
        counts.iter().try_for_each(|&n| default_gradients(n).map(drop))?;
    }
    let mut sink = match &args.out {
        Some(path) => Sink {
            out: Box::new(std::fs::File::create(path).map_err(|e| io_error(path, e))?),
            path: Some(path.clone()),
        },
        None => Sink {
            out: Box::new(std::io::stdout()),
            path: None,
        },
    };
    sink.line(SWEEP_HEADER)?;

    let channels = args.phantom.channels;
    for &n in &counts {
        let (spec, seed) = load_phantom(&args.phantom, n)?;
        echo_spec(&spec, seed, channels);
        let clean = clean_signal(&spec)?;
        let tissue = spec.tissue_mask();
        let b0 = spec.gradients.b0_indices();
        for &snr in &args.snr {
            let cell = Cell {
                snr,
                volumes: clean.volumes(),
                clean: &clean,
                tissue: &tissue,
            };
            eprintln!("cell: SNR {snr}, {} volumes", cell.volumes);
            let noisy = NoiseSpec::for_snr(snr, channels, &clean, &b0, &tissue)
                .and_then(|noise| apply_noise(&clean, &noise, seed));
            let mut rows = cell.rows(None, "noisy", noisy.as_ref().map_err(|e| e.to_string()));
            if let Ok(noisy) = &noisy {
                for &radius in &args.radius {
                    let est = denoise(noisy, Model::Ols, 0, &DenoiseConfig::new(radius));
                    rows.extend(cell.rows(Some(radius), "p2s", est.as_ref().map_err(|e| e.to_string())));
                }
                if let Some(rank) = args.baseline_rank {
                    let est = denoise(noisy, Model::SvdRank(rank), DEFAULT_BLOCK_EDGE, &DenoiseConfig::default());
                    let label = format!("svd-rank-{rank}");
                    rows.extend(cell.rows(None, &label, est.as_ref().map_err(|e| e.to_string())));
                }
            }
            for row in rows {
                sink.line(&row)?;
            }
        }
    }
    Ok(())
}
