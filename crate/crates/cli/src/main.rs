use std::path::PathBuf;
use std::process::ExitCode;

use cffl_cli::output::sig6;
use cffl_cli::{presets, run, ExperimentConfig, HarnessError, Overrides, SchemeId};
use clap::Parser;

/// Training-time experiments for federated learning over cell-free massive
/// MIMO. Settings come from the preset, then the config file, then flags.
#[derive(Debug, Parser)]
#[command(name = "cffl", version)]
struct Args {
    /// Named experiment (see --list-presets).
    #[arg(long)]
    preset: Option<String>,
    /// JSON config file; any subset of the fields of the resolved config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of APs.
    #[arg(long = "M")]
    m: Option<usize>,
    /// Number of UEs.
    #[arg(long = "K")]
    k: Option<usize>,
    /// Side of the square area in km.
    #[arg(long = "D-km")]
    d_km: Option<f64>,
    /// Pilot length in samples.
    #[arg(long = "tau-t")]
    tau_t: Option<usize>,
    /// Evaluation realizations per sweep point.
    #[arg(long)]
    realizations: Option<usize>,
    /// Root seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Schemes to run, comma separated (JOINT, BL1, BL2, BL3, TDMA, COLLOCATED).
    #[arg(long, value_delimiter = ',')]
    scheme: Option<Vec<SchemeId>>,
    /// Worker threads (default: one per core).
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved config as JSON and exit.
    #[arg(long)]
    print_config: bool,
    #[arg(long)]
    list_presets: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    match real_main(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cffl: {e}");
            match e {
                HarnessError::Config(_) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn real_main(args: Args) -> Result<(), HarnessError> {
    if args.list_presets {
        for name in presets::NAMES {
            let p = presets::preset(name)?;
            let schemes: Vec<&str> = p.schemes.iter().map(|s| s.as_str()).collect();
            println!("{name:10} {} over {:?} ({})", p.sweep.variable, p.sweep.values, schemes.join(", "));
        }
        return Ok(());
    }
    let doc = match &args.config {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?,
        ),
        None => None,
    };
    let flags = Overrides {
        preset: args.preset,
        num_aps: args.m,
        num_ues: args.k,
        d_km: args.d_km,
        tau_t: args.tau_t,
        realizations: args.realizations,
        seed: args.seed,
        out: args.out,
        schemes: args.scheme,
    };
    let cfg = ExperimentConfig::resolve(doc.as_deref(), &flags)?;
    if args.print_config {
        println!("{}", serde_json::to_string_pretty(&cfg).expect("config serializes"));
        return Ok(());
    }
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| HarnessError::Config(format!("thread pool: {e}")))?;
    }
    let out = run(&cfg)?;
    println!("{:12} {:>10} {:>12} {:>12} {:>8}", "scheme", cfg.sweep.variable, "mean T_e (s)", "SE (s)", "ok/all");
    for s in &out.summary {
        println!(
            "{:12} {:>10} {:>12} {:>12} {:>8}",
            s.scheme,
            sig6(s.sweep_value),
            s.mean_t_e_s.map(sig6).unwrap_or_else(|| "-".into()),
            s.se_t_e_s.map(sig6).unwrap_or_else(|| "-".into()),
            format!("{}/{}", s.n_ok, s.n_ok + s.n_failed)
        );
    }
    println!("wrote {}", cfg.output.display());
    Ok(())
}
