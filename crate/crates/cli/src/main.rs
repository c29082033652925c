//! Batch front end: configuration parsing, experiment orchestration, and
//! report emission.
//!
//! Exit codes: 0 on completion, 2 when any report row carries a failing
//! verdict, 1 on errors (bad config, missing files).

mod config;
mod plot;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use mazyalab_core::extremize::{search, FamilySpec};
use mazyalab_core::gridfn::GridFunction;
use mazyalab_core::kernel::convolve_with;
use mazyalab_core::verify::{self, run_suite};

use config::LabSetup;
use report::CsvRow;

#[derive(Parser)]
#[command(name = "mazyalab", version, about = "Numerical laboratory for Maz'ya Φ-inequalities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration file (sections of key = value pairs).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for reports.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed override for quadrature, generators, and searches.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread count (falls back to MAZYALAB_THREADS, then all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Report the two sphere cancellation residuals for the configured pair.
    CheckCancellation {
        #[command(flatten)]
        common: Common,
    },
    /// Convolve a stored grid function with the configured banded kernel.
    Convolve {
        #[command(flatten)]
        common: Common,
        /// Input grid function (binary format with JSON sidecar).
        #[arg(long)]
        f_file: PathBuf,
    },
    /// Run the configured inequality suite and write a report CSV.
    Verify {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep shrinking dipoles to probe necessity of the cancellation.
    ProbeNecessity {
        #[command(flatten)]
        common: Common,
    },
    /// Search bump families for the largest main-inequality ratio.
    Extremize {
        #[command(flatten)]
        common: Common,
        /// Run even when the cancellation residual is above threshold.
        #[arg(long)]
        force: bool,
    },
    /// Render SVG charts from a report CSV.
    Plot {
        /// Report CSV produced by verify/probe-necessity/extremize.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap help/version go to stdout with success.
            if e.use_stderr() {
                eprintln!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match dispatch(cli) {
        Ok(any_fail) => {
            if any_fail {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn init_threads(requested: Option<usize>) {
    let threads = requested.or_else(|| {
        std::env::var("MAZYALAB_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // Ignore failure if a pool already exists (tests, repeated init).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load_setup(common: &Common) -> Result<LabSetup> {
    init_threads(common.threads);
    config::load(&common.config, common.seed)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::CheckCancellation { common } => {
            let setup = load_setup(&common)?;
            let (row, raw) =
                verify::cancellation_report(&setup.kernel, &setup.phi, &setup.quad, &setup.verify)
                    .map_err(|e| anyhow!("{e}"))?;
            println!(
                "cancellation: residual_plus = {} residual_minus = {} normalizer = {} verdict = {}",
                report::format_float(raw.residual_plus),
                report::format_float(raw.residual_minus),
                report::format_float(raw.normalizer),
                row.verdict.as_str()
            );
            let mut rows = vec![CsvRow::from_report(&row, setup.digest)];
            std::fs::create_dir_all(&common.out)?;
            report::write_csv(&mut rows, &common.out.join("cancellation.csv"))?;
            Ok(report::any_fail(&rows))
        }
        Command::Convolve { common, f_file } => {
            let setup = load_setup(&common)?;
            let f = GridFunction::load(&f_file)
                .with_context(|| format!("cannot load grid function {}", f_file.display()))?;
            let conv = convolve_with(
                &setup.kernel,
                setup.verify.bands,
                &f,
                setup.verify.method,
                &mazyalab_core::kernel::ConvParams {
                    lo_min: -20,
                    grid_cap: Some(setup.verify.grid_cap),
                    max_cells: setup.verify.max_cells,
                },
            )
            .map_err(|e| anyhow!("{e}"))?;
            std::fs::create_dir_all(&common.out)?;
            let out_path = common.out.join("convolution.bin");
            conv.out.save(&out_path).map_err(|e| anyhow!("{e}"))?;
            println!(
                "convolved bands {} onto a grid of half-width {} ({} cells/axis) -> {}",
                conv.effective_range,
                conv.out.half_width(),
                conv.out.cells_per_axis(),
                out_path.display()
            );
            Ok(false)
        }
        Command::Verify { common } => {
            let setup = load_setup(&common)?;
            let reports = run_suite(&setup.kernel, &setup.phi, &setup.suite, &setup.verify)
                .map_err(|e| anyhow!("{e}"))?;
            let mut rows: Vec<CsvRow> =
                reports.iter().map(|r| CsvRow::from_report(r, setup.digest)).collect();
            std::fs::create_dir_all(&common.out)?;
            let csv_path = common.out.join("verify.csv");
            report::write_csv(&mut rows, &csv_path)?;
            println!("wrote {} rows to {}", rows.len(), csv_path.display());
            if setup.formats.iter().any(|f| f == "svg") {
                let files = plot::plot_csv(&csv_path, &common.out)?;
                println!("wrote {} charts", files.len());
            }
            Ok(report::any_fail(&rows))
        }
        Command::ProbeNecessity { common } => {
            let setup = load_setup(&common)?;
            let probe = verify::cancellation_necessity_probe(
                &setup.kernel,
                &setup.phi,
                &setup.suite.dipole_widths,
                setup.suite.dipole_offset,
                setup.suite.cells_per_axis,
                &setup.verify,
            )
            .map_err(|e| anyhow!("{e}"))?;
            println!("necessity probe verdict: {}", probe.verdict.as_str());
            for (w, ratio) in probe.widths.iter().zip(&probe.ratios) {
                println!("  width {:<12} ratio {}", w, report::format_float(*ratio));
            }
            let mut rows: Vec<CsvRow> =
                probe.rows.iter().map(|r| CsvRow::from_report(r, setup.digest)).collect();
            std::fs::create_dir_all(&common.out)?;
            let csv_path = common.out.join("necessity.csv");
            report::write_csv(&mut rows, &csv_path)?;
            if setup.formats.iter().any(|f| f == "svg") {
                plot::plot_csv(&csv_path, &common.out)?;
            }
            Ok(report::any_fail(&rows))
        }
        Command::Extremize { common, force } => {
            let setup = load_setup(&common)?;
            let family = FamilySpec {
                bump_count: setup.extremize_bumps,
                seed: setup.extremize_seed,
                d: setup.kernel.d,
                grid_half_width: setup.suite.grid_half_width,
                cells_per_axis: setup.suite.cells_per_axis,
            };
            let result = search(
                &setup.kernel,
                &setup.phi,
                &family,
                setup.extremize_budget,
                &setup.verify,
                force,
            )
            .map_err(|e| anyhow!("{e}"))?;
            println!(
                "best ratio {} after {} evaluations over {} restarts",
                report::format_float(result.best_ratio),
                result.evaluations,
                result.restarts
            );
            std::fs::create_dir_all(&common.out)?;
            let trace_path = common.out.join("extremize_trace.json");
            std::fs::write(&trace_path, serde_json_string(&result)?)?;
            let mut rows = vec![CsvRow {
                statement_id: "extremize".to_string(),
                kernel_id: verify::kernel_id(&setup.kernel),
                phi_id: verify::phi_id(&setup.phi),
                f_id: format!("family_m{}_s{}", family.bump_count, family.seed),
                n: None,
                lhs: result.best_ratio,
                rhs: 1.0,
                ratio: result.best_ratio,
                tail_bound: 0.0,
                verdict: "info".to_string(),
                config_digest: format!("{:016x}", setup.digest),
            }];
            report::write_csv(&mut rows, &common.out.join("extremize.csv"))?;
            Ok(false)
        }
        Command::Plot { report: report_path, out } => {
            let files = plot::plot_csv(&report_path, &out)?;
            for f in &files {
                println!("wrote {}", out.join(f).display());
            }
            Ok(false)
        }
    }
}

fn serde_json_string(result: &mazyalab_core::extremize::SearchResult) -> Result<String> {
    Ok(serde_json::to_string_pretty(result)?)
}
