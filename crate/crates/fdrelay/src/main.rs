//! Thin command-line front end over the experiment drivers: resolves the
//! configuration (subcommand defaults, then config file, then flags), runs
//! the experiment, writes the CSV and prints a short summary.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::exit;

use clap::{Args, Parser, Subcommand};

use fdrelay::config::{Scheme, SimConfig};
use fdrelay::error::Result;
use fdrelay::experiment::{
    ber_curve, run_ber_sweep, run_convergence, run_sinr_sweep, sinr_curve, write_ber_csv,
    write_convergence_csv, write_sinr_csv, ExperimentResult,
};
use fdrelay::metrics::{crossing_db, fitted_slope, summarize_convergence};

#[derive(Parser)]
#[command(
    name = "fdrelay",
    version,
    about = "Link-level simulator of an in-band full-duplex MIMO-OFDM relay \
             with adaptive self-interference cancellation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convergence time of the adaptive canceller (histogram + CSV)
    Convergence(RunArgs),
    /// Post-cancellation SINR versus loopback interference power
    SinrSweep(RunArgs),
    /// Bit-error rate at the relay versus loopback interference power
    BerSweep(RunArgs),
    /// Resolve, validate and echo the configuration without running
    ValidateConfig(RunArgs),
}

/// Flags mirror the configuration fields; unset flags keep the subcommand
/// defaults, and a config file sits between the two.
#[derive(Args)]
struct RunArgs {
    /// key=value configuration file applied over the subcommand defaults
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output CSV path (default: <subcommand>.csv)
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, value_name = "N")]
    n_s: Option<String>,
    #[arg(long, value_name = "N")]
    n_d: Option<String>,
    #[arg(long, value_name = "N")]
    m_r: Option<String>,
    #[arg(long, value_name = "N")]
    m_t: Option<String>,
    #[arg(long, value_name = "L")]
    l_sr: Option<String>,
    #[arg(long, value_name = "L")]
    l_rd: Option<String>,
    #[arg(long, value_name = "L")]
    l_li: Option<String>,
    #[arg(long, value_name = "L")]
    l_a: Option<String>,
    #[arg(long, value_name = "N")]
    n_sub: Option<String>,
    #[arg(long, value_name = "N")]
    n_cp: Option<String>,
    /// Scalar, comma list, or start:stop:step grid in dB
    #[arg(long, value_name = "GRID", allow_hyphen_values = true)]
    sigma2_li_db: Option<String>,
    #[arg(long, value_name = "DB", allow_hyphen_values = true)]
    sigma2_nr_db: Option<String>,
    #[arg(long, value_name = "RATIO")]
    delta: Option<String>,
    #[arg(long, value_name = "RATIO")]
    alpha: Option<String>,
    #[arg(long, value_name = "FACTOR")]
    lambda: Option<String>,
    #[arg(long, value_name = "STEP")]
    mu: Option<String>,
    #[arg(long, value_name = "DB", allow_hyphen_values = true)]
    em_threshold_db: Option<String>,
    #[arg(long, value_name = "N")]
    ofdm_symbols: Option<String>,
    #[arg(long, value_name = "N")]
    realizations: Option<String>,
    #[arg(long, value_name = "SEED")]
    master_seed: Option<String>,
    /// ni | tdc | rls | no-si | all
    #[arg(long, value_name = "SCHEME")]
    scheme: Option<String>,
    /// Worker threads (0 = all cores)
    #[arg(long, value_name = "N")]
    workers: Option<String>,
    #[arg(long, value_name = "VAR")]
    h_sr_tap_variance: Option<String>,
}

impl RunArgs {
    fn resolve(&self, mut cfg: SimConfig) -> Result<SimConfig> {
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags: [(&str, &Option<String>); 23] = [
            ("n-s", &self.n_s),
            ("n-d", &self.n_d),
            ("m-r", &self.m_r),
            ("m-t", &self.m_t),
            ("l-sr", &self.l_sr),
            ("l-rd", &self.l_rd),
            ("l-li", &self.l_li),
            ("l-a", &self.l_a),
            ("n-sub", &self.n_sub),
            ("n-cp", &self.n_cp),
            ("sigma2-li-db", &self.sigma2_li_db),
            ("sigma2-nr-db", &self.sigma2_nr_db),
            ("delta", &self.delta),
            ("alpha", &self.alpha),
            ("lambda", &self.lambda),
            ("mu", &self.mu),
            ("em-threshold-db", &self.em_threshold_db),
            ("ofdm-symbols", &self.ofdm_symbols),
            ("realizations", &self.realizations),
            ("master-seed", &self.master_seed),
            ("scheme", &self.scheme),
            ("workers", &self.workers),
            ("h-sr-tap-variance", &self.h_sr_tap_variance),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set_field(key, v)?;
            }
        }
        Ok(cfg)
    }

    fn out_path(&self, default_name: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default_name))
    }
}

fn write_csv(
    path: &PathBuf,
    result: &ExperimentResult,
    writer: fn(&ExperimentResult, &mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    writer(result, &mut out)?;
    Ok(())
}

fn print_convergence_summary(result: &ExperimentResult) -> Result<()> {
    let samples: Vec<f64> = result
        .records
        .iter()
        .filter_map(|r| r.convergence_sample.map(|s| s as f64))
        .collect();
    let non_converged = result.records.len() - samples.len();
    println!(
        "realizations: {} (converged {}, non-converged {})",
        result.records.len(),
        samples.len(),
        non_converged
    );
    let summary = summarize_convergence(&samples)?;
    println!(
        "convergence samples: mean {:.1}, median {:.1}, std {:.1}",
        summary.mean, summary.median, summary.std
    );
    println!(
        "log-normal fit: mu {:.4}, sigma {:.4}",
        summary.log_mean, summary.log_std
    );
    println!("histogram (bin width {} samples):", summary.bin_width);
    let peak = summary.histogram.iter().map(|b| b.count).max().unwrap_or(1).max(1);
    for bin in &summary.histogram {
        if bin.count == 0 {
            continue;
        }
        let bar = "#".repeat((bin.count * 50).div_ceil(peak));
        println!("  {:>8} {:>6}  {bar}", bin.start, bin.count);
    }
    Ok(())
}

fn print_sinr_summary(result: &ExperimentResult) {
    for scheme in Scheme::all() {
        let curve = sinr_curve(result, scheme);
        if curve.is_empty() {
            continue;
        }
        let pts: Vec<String> = curve.iter().map(|(x, y)| format!("{x}:{y:.2}")).collect();
        println!("{:<6} {}", scheme.label(), pts.join(" "));
    }
    let ni: Vec<(f64, f64)> = sinr_curve(result, Scheme::Ni)
        .into_iter()
        .filter(|(x, _)| *x >= 10.0)
        .collect();
    if ni.len() >= 2 {
        println!("ni slope above 10 dB: {:.3} dB/dB", fitted_slope(&ni));
    }
}

fn print_ber_summary(result: &ExperimentResult) {
    let mut crossings = Vec::new();
    for scheme in Scheme::all() {
        let curve = ber_curve(result, scheme);
        if curve.is_empty() {
            continue;
        }
        let pts: Vec<String> = curve.iter().map(|(x, y)| format!("{x}:{y:.2e}")).collect();
        println!("{:<6} {}", scheme.label(), pts.join(" "));
        if let Some(c) = crossing_db(&curve, 1e-2) {
            println!("  crosses BER 1e-2 at {c:.2} dB");
            crossings.push((scheme, c));
        }
    }
    let find = |s: Scheme| crossings.iter().find(|(x, _)| *x == s).map(|(_, c)| *c);
    if let (Some(rls), Some(tdc), Some(ni)) =
        (find(Scheme::Rls), find(Scheme::Tdc), find(Scheme::Ni))
    {
        println!("interference resilience at BER 1e-2:");
        println!("  rls over tdc: {:.2} dB", rls - tdc);
        println!("  rls over ni:  {:.2} dB", rls - ni);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Convergence(args) => {
            let cfg = args.resolve(SimConfig::convergence_defaults())?;
            let result = run_convergence(&cfg)?;
            let path = args.out_path("convergence.csv");
            write_csv(&path, &result, |r, w| write_convergence_csv(r, w))?;
            print_convergence_summary(&result)?;
            println!("wrote {}", path.display());
        }
        Command::SinrSweep(args) => {
            let cfg = args.resolve(SimConfig::sinr_defaults())?;
            let result = run_sinr_sweep(&cfg)?;
            let path = args.out_path("sinr.csv");
            write_csv(&path, &result, |r, w| write_sinr_csv(r, w))?;
            print_sinr_summary(&result);
            println!("wrote {}", path.display());
        }
        Command::BerSweep(args) => {
            let cfg = args.resolve(SimConfig::ber_defaults())?;
            let result = run_ber_sweep(&cfg)?;
            let path = args.out_path("ber.csv");
            write_csv(&path, &result, |r, w| write_ber_csv(r, w))?;
            print_ber_summary(&result);
            println!("wrote {}", path.display());
        }
        Command::ValidateConfig(args) => {
            let cfg = args.resolve(SimConfig::paper_defaults())?;
            cfg.validate()?;
            for (k, v) in cfg.echo() {
                println!("{k}={v}");
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err}");
        exit(err.exit_code());
    }
}
