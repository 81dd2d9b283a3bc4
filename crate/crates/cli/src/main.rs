//! `hmpf`: drives the service from the shell. Without `--server` an
//! in-process service is started on a loopback port for the duration of the
//! command.

use std::fs::File;
use std::io::BufWriter;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hmpf_client::{Client, ClientError};
use hmpf_core::config::parse_schedule;
use hmpf_core::evaluation::{write_plot_data_csv, write_report_csv, write_results_csv};
use hmpf_core::{ErrorCategory, ListKind, Metric, MethodKind};
use hmpf_proto::{CreateSession, EvaluateRequest, KOut, RunRequest, SweepRequest, SynthRequest, SyntheticSpec};

#[derive(Parser)]
#[command(name = "hmpf", version, about = "Hierarchical multi-process fusion for place recognition")]
struct Cli {
    /// Base URL of a running hmpf-server. Omit to run an embedded one.
    #[arg(long, global = true, value_name = "URL")]
    server: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute global descriptors for one image list and write an HMPF1 file.
    Extract {
        #[arg(long)]
        manifest: PathBuf,
        /// `hog` or `gist`.
        #[arg(long)]
        method: String,
        /// HOG cell size in pixels.
        #[arg(long, default_value_t = 30)]
        cell_px: usize,
        /// `reference` or `query`.
        #[arg(long)]
        list: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every query and write per-query results as CSV.
    Run {
        #[command(flatten)]
        session: SessionArgs,
        /// Comma-separated k_out per tier, e.g. `50,10,1` or `all,10,1`.
        #[arg(long, value_name = "K,K,...")]
        k_schedule: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recall@1 report plus per-method Recall@N plot data.
    Eval {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, value_name = "K,K,...")]
        k_schedule: Option<String>,
        /// Report CSV.
        #[arg(long)]
        out: PathBuf,
        /// Recall@N curve CSV; defaults to `<out stem>.plot.csv` beside `--out`.
        #[arg(long)]
        plot_data: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,50,100")]
        n_values: Vec<usize>,
    },
    /// One experiment per schedule; report CSV with every schedule's rows.
    Sweep {
        #[command(flatten)]
        session: SessionArgs,
        /// Repeat for each schedule to compare.
        #[arg(long, value_name = "K,K,...", required = true)]
        k_schedule: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate the synthetic aliasing benchmark into a directory.
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        refs: usize,
        #[arg(long, default_value_t = 50)]
        queries: usize,
        #[arg(long, default_value_t = 3)]
        methods: usize,
        /// Aliased queries per method.
        #[arg(long, default_value_t = 5)]
        distractors: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
    },
}

#[derive(Args)]
struct SessionArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Pipeline config TOML.
    #[arg(long)]
    config: PathBuf,
    /// Query worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Core(#[from] hmpf_core::Error),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    /// `None` means the service was unreachable or spoke nonsense.
    fn category(&self) -> Option<ErrorCategory> {
        match self {
            CliError::Core(e) => Some(e.category()),
            CliError::Client(e) => e.category(),
            CliError::Usage(_) => Some(ErrorCategory::Usage),
        }
    }

    fn exit_code(&self) -> u8 {
        match self.category() {
            Some(ErrorCategory::Internal) => 1,
            Some(ErrorCategory::Usage) => 2,
            Some(ErrorCategory::Parse) => 3,
            Some(ErrorCategory::Validation) => 4,
            Some(ErrorCategory::Io) => 5,
            Some(ErrorCategory::Mismatch) => 6,
            None => 7,
        }
    }

    fn label(&self) -> &'static str {
        self.category().map_or("server", ErrorCategory::as_str)
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            eprintln!("error[usage]: {}", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let rt = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error[internal]: starting runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match rt.block_on(dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.label());
            ExitCode::from(e.exit_code())
        }
    }
}

async fn connect(server: Option<String>) -> Result<Client> {
    match server {
        Some(url) => Ok(Client::new(url)),
        None => {
            let (addr, _task) = hmpf_service::spawn(SocketAddr::from((Ipv4Addr::LOCALHOST, 0)))
                .await
                .map_err(|e| hmpf_core::Error::Internal(format!("embedded server: {e}")))?;
            Ok(Client::new(format!("http://{addr}")))
        }
    }
}

/// The server resolves paths against its own working directory.
fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).map_err(|e| hmpf_core::Error::io(p, e).into())
}

fn schedule(s: Option<&str>) -> Result<Option<Vec<KOut>>> {
    Ok(s.map(parse_schedule).transpose()?)
}

fn create(out: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(out).map_err(|e| hmpf_core::Error::io(out, e))?))
}

async fn open_session(client: &Client, args: &SessionArgs, sched: Option<Vec<KOut>>) -> Result<uuid::Uuid> {
    let info = client
        .create_session(&CreateSession {
            manifest: absolute(&args.manifest)?,
            config: absolute(&args.config)?,
            schedule: sched,
        })
        .await?;
    Ok(info.session)
}

async fn dispatch(cli: Cli) -> Result<()> {
    let client = connect(cli.server).await?;
    match cli.command {
        Command::Extract {
            manifest,
            method,
            cell_px,
            list,
            out,
        } => {
            let list: ListKind = list.parse()?;
            let method = match method.as_str() {
                "hog" => MethodKind::Hog {
                    cell_px,
                    metric: Metric::Euclidean,
                },
                "gist" => MethodKind::Gist {
                    metric: Metric::Euclidean,
                },
                other => return Err(CliError::Usage(format!("--method must be `hog` or `gist`, got `{other}`"))),
            };
            let resp = client
                .extract(&hmpf_proto::ExtractRequest {
                    manifest: absolute(&manifest)?,
                    list,
                    method,
                    out: absolute(&out)?,
                })
                .await?;
            println!("wrote {} ({} x {})", resp.out.display(), resp.count, resp.dim);
        }
        Command::Run { session, k_schedule, out } => {
            let sched = schedule(k_schedule.as_deref())?;
            let id = open_session(&client, &session, sched).await?;
            let run = client
                .run(id, &RunRequest {
                    workers: session.workers,
                    name: None,
                })
                .await?;
            client.delete_session(id).await?;
            write_results_csv(create(&out)?, &run.outcomes)?;
            print_summary(&run.report);
        }
        Command::Eval {
            session,
            k_schedule,
            out,
            plot_data,
            n_values,
        } => {
            let sched = schedule(k_schedule.as_deref())?;
            let id = open_session(&client, &session, sched).await?;
            let eval = client
                .evaluate(id, &EvaluateRequest {
                    workers: session.workers,
                    name: None,
                    n_values,
                })
                .await?;
            client.delete_session(id).await?;
            let plot = plot_data.unwrap_or_else(|| {
                let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                out.with_file_name(format!("{stem}.plot.csv"))
            });
            write_report_csv(create(&out)?, std::slice::from_ref(&eval.run.report))?;
            write_plot_data_csv(create(&plot)?, &eval.curves)?;
            print_summary(&eval.run.report);
        }
        Command::Sweep { session, k_schedule, out } => {
            let schedules = k_schedule
                .iter()
                .map(|s| parse_schedule(s))
                .collect::<hmpf_core::Result<Vec<_>>>()?;
            let id = open_session(&client, &session, None).await?;
            let resp = client
                .sweep(id, &SweepRequest {
                    schedules,
                    workers: session.workers,
                })
                .await?;
            client.delete_session(id).await?;
            write_report_csv(create(&out)?, &resp.reports)?;
            for r in &resp.reports {
                print_summary(r);
            }
        }
        Command::Synth {
            out,
            seed,
            refs,
            queries,
            methods,
            distractors,
            dim,
        } => {
            let spec = SyntheticSpec {
                n_refs: refs,
                n_queries: queries,
                methods,
                distractors,
                dim,
                seed,
            };
            let summary = client
                .synth(&SynthRequest {
                    spec,
                    out_dir: absolute(&out)?,
                })
                .await?;
            println!(
                "wrote {} files to {} (attempts {})",
                summary.files.len(),
                out.display(),
                summary.attempts
            );
            for (m, r) in summary.method_recall_at_1.iter().enumerate() {
                println!("method{} R@1 {r:.3}", m + 1);
            }
        }
    }
    Ok(())
}

fn print_summary(r: &hmpf_proto::ExperimentReport) {
    let mut line = format!("{}: final R@1 {:.3}", r.name, r.final_recall_at_1);
    if let Some(c) = r.combined_recall_at_1 {
        line.push_str(&format!(", combined R@1 {c:.3}"));
    }
    line.push_str(&format!(", {:.4} s/frame", r.mean_seconds_per_frame));
    println!("{line}");
}
