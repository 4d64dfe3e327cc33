use std::io::Write;

use p2s_core::metrics::REPORT_HEADER;
use p2s_core::{evaluate, io};

use crate::args::EvaluateArgs;
use crate::{io_error, CliResult};

pub fn run(args: &EvaluateArgs) -> CliResult {
    let reference = io::read_volume(&args.reference)?;
    let estimate = io::read_volume(&args.estimate)?;
    let mask = args.mask.as_ref().map(io::read_mask).transpose()?;
    let report = evaluate(&reference, &estimate, mask.as_ref(), args.per_volume)?;
    let record = report.csv_record(args.snr, &args.method);

    println!("{REPORT_HEADER}");
    println!("{record}");
    if let Some(rows) = &report.per_volume {
        println!();
        println!("volume,rmse,r2");
        for (j, s) in rows.iter().enumerate() {
            println!("{j},{},{}", s.rmse, s.r2.map(|v| v.to_string()).unwrap_or_default());
        }
    }

    if let Some(path) = &args.report {
        let mut f = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_error(path, e))?;
        let fresh = f.metadata().map_err(|e| io_error(path, e))?.len() == 0;
        let mut text = String::new();
        if fresh {
            text.push_str(REPORT_HEADER);
            text.push('\n');
        }
        text.push_str(&record);
        text.push('\n');
        f.write_all(text.as_bytes()).map_err(|e| io_error(path, e))?;
    }
    Ok(())
}
