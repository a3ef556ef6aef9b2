use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use hinet::config::RunConfig;
use hinet::{bench, checkpoint, hvol, report, train, HinetError};
use hinet_core::data::argmax_labels;
use hinet_core::gradcheck::{run_suite, GradcheckOptions};
use hinet_core::metrics::evaluate;
use hinet_core::network::Network;

const EXIT_VERIFY: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "hinet",
    version,
    about = "Hyperdense inception 3D UNet: training, inference and verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a JSON run configuration.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Segment a volume with a trained checkpoint.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a predicted label volume against ground truth.
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compare every analytic gradient with central finite differences.
    Gradcheck {
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Full 3x3x3 convolution against a factorized three-view stage.
    Bench {
        #[arg(long, default_value_t = 8)]
        channels: usize,
        #[arg(long, default_value_t = 32)]
        extent: usize,
        #[arg(long, default_value_t = 5)]
        repeats: usize,
    },
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var("HINET_THREADS") else {
        return Ok(());
    };
    let n: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("HINET_THREADS must be a positive integer, got {value:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn cmd_train(config: PathBuf) -> Result<u8, HinetError> {
    let cfg = RunConfig::load(&config)?;
    let steps = cfg.steps_per_epoch;
    let progress = |row: &train::LogRow| {
        if row.step + 1 == steps {
            println!("epoch {:>4}  loss {:.6}  lr {:e}", row.epoch, row.loss, row.lr);
        }
    };
    let out = if cfg.check64 {
        train::train::<f64>(&cfg, progress)?
    } else {
        train::train::<f32>(&cfg, progress)?
    };
    println!("checkpoint {}", out.checkpoint.display());
    println!("loss log   {}", out.log_file.display());
    Ok(0)
}

fn cmd_predict(ckpt: PathBuf, input: PathBuf, out: PathBuf) -> Result<u8, HinetError> {
    let net: Network<f32> = checkpoint::load(&ckpt)?;
    let sample = hvol::read_volume(&input)?;
    let probs = net.predict(&sample.image)?;
    hvol::write_labels(&out, &argmax_labels(&probs)?)?;
    Ok(0)
}

fn cmd_evaluate(pred: PathBuf, gt: PathBuf, json: Option<PathBuf>) -> Result<u8, HinetError> {
    let p = hvol::read_volume(&pred)?;
    let g = hvol::read_volume(&gt)?;
    let r = evaluate(&p.labels, &g.labels)?;
    print!("{}", report::table(&r));
    if let Some(path) = json {
        let text = serde_json::to_string_pretty(&report::ReportJson::from(&r)).expect("report serializes");
        std::fs::write(&path, text + "\n").map_err(|e| HinetError::Io { path, source: e })?;
    }
    Ok(0)
}

fn cmd_gradcheck(fault: Option<String>) -> u8 {
    let reports = run_suite(&GradcheckOptions { fault });
    println!(
        "{:<24}{:>12}{:>11}{:>9}{:>7}  result",
        "component", "worst", "threshold", "checked", "kinks"
    );
    for r in &reports {
        println!(
            "{:<24}{:>12.3e}{:>11.0e}{:>9}{:>7}  {}",
            r.name,
            r.worst_rel_err,
            r.threshold,
            r.checked,
            r.skipped_kinks,
            if r.passed() { "ok" } else { "FAIL" }
        );
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        println!("all {} components within tolerance", reports.len());
        0
    } else {
        eprintln!("gradient check failed: {}", failed.join(", "));
        EXIT_VERIFY
    }
}

fn cmd_bench(channels: usize, extent: usize, repeats: usize) -> Result<u8, HinetError> {
    let r = bench::run(channels, extent, repeats)?;
    println!(
        "input (1, {}, {e}, {e}, {e}), {} repeats, branch width {}",
        r.channels,
        r.repeats,
        r.branch_channels,
        e = r.extent
    );
    println!("{:<12}{:>12}{:>16}{:>14}", "layer", "params", "MACs", "median ms");
    println!(
        "{:<12}{:>12}{:>16}{:>14.3}",
        "full",
        r.full_params,
        r.full_macs,
        1e3 * r.full_median_s
    );
    println!(
        "{:<12}{:>12}{:>16}{:>14.3}",
        "factorized",
        r.factorized_params,
        r.factorized_macs,
        1e3 * r.factorized_median_s
    );
    println!(
        "ratios      params {:.4}  MACs {:.4}  time {:.4}",
        r.factorized_params as f64 / r.full_params as f64,
        r.factorized_macs as f64 / r.full_macs as f64,
        r.factorized_median_s / r.full_median_s
    );
    if r.counts_hold() {
        Ok(0)
    } else {
        eprintln!("factorized stage is not cheaper than the full convolution");
        Ok(EXIT_VERIFY)
    }
}

fn main() -> ExitCode {
    let defaults = serde_json::to_string_pretty(&RunConfig::default()).expect("defaults serialize");
    let command = Cli::command().mut_subcommand("train", |c| {
        c.after_long_help(format!(
            "Every config key is optional; unknown keys are rejected. Defaults:\n{defaults}"
        ))
    });
    let cli = match Cli::from_arg_matches(&command.get_matches()) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(EXIT_USAGE);
    }
    let result = match cli.command {
        Command::Train { config } => cmd_train(config),
        Command::Predict { ckpt, input, out } => cmd_predict(ckpt, input, out),
        Command::Evaluate { pred, gt, json } => cmd_evaluate(pred, gt, json),
        Command::Gradcheck { inject_fault } => Ok(cmd_gradcheck(inject_fault)),
        Command::Bench {
            channels,
            extent,
            repeats,
        } => cmd_bench(channels, extent, repeats),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
