use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use deephys_core::synth::generate_pair;
use deephys_core::{
    load_bundle, save_bundle, AnalysisSession, ReportDocument, ShiftKind, SyntheticShiftSpec,
    DEFAULT_TOP_K,
};

use crate::api::{router, AppState};

#[derive(Debug, Parser)]
#[command(name = "deephys", version, about = "Compare neuron activity between in- and out-of-distribution datasets")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute shift metrics and write a JSON report.
    Analyze {
        #[command(flatten)]
        inputs: SessionArgs,
        /// Report destination.
        #[arg(long)]
        out: PathBuf,
        /// Include per-neuron ratios and top image ids.
        #[arg(long)]
        digests: bool,
    },
    /// Serve the HTTP JSON API.
    Serve {
        #[command(flatten)]
        inputs: SessionArgs,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Write synthetic colour-shift bundles: `ind.dphb` plus one file per kind.
    Synth {
        /// Shift kind of an OOD bundle to write (repeatable).
        #[arg(long = "kind", required = true)]
        kinds: Vec<String>,
        #[arg(long, default_value_t = 10)]
        categories: usize,
        #[arg(long, default_value_t = 100)]
        per_category: usize,
        #[arg(long, default_value_t = 50)]
        neurons: usize,
        #[arg(long, default_value_t = 0.1)]
        drift: f64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Attach per-image PNG thumbnails.
        #[arg(long)]
        thumbnails: bool,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    /// In-distribution bundle.
    #[arg(long)]
    pub ind: PathBuf,
    /// Out-of-distribution bundle (repeatable).
    #[arg(long)]
    pub ood: Vec<PathBuf>,
    /// Layer to analyse.
    #[arg(long)]
    pub layer: String,
    /// Top images per neuron grid.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub topk: usize,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Failure(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failure(_) => 1,
        }
    }
}

impl SessionArgs {
    pub fn load(&self) -> Result<AnalysisSession, CliError> {
        if self.topk == 0 {
            return Err(CliError::Usage("--topk must be at least 1".into()));
        }
        let read = |p: &Path| load_bundle(p).with_context(|| format!("reading {}", p.display()));
        let ind = read(&self.ind)?;
        let oods = self.ood.iter().map(|p| read(p)).collect::<Result<Vec<_>, _>>()?;
        log::info!(
            "loaded {} ({} images) and {} OOD bundle(s)",
            ind.name(),
            ind.image_count(),
            oods.len()
        );
        Ok(AnalysisSession::build(ind, oods, &self.layer).context("building session")?)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze {
            inputs,
            out,
            digests,
        } => {
            let session = inputs.load()?;
            let report = ReportDocument::build(&session, inputs.topk, digests).context("computing report")?;
            std::fs::write(&out, report.to_json_pretty() + "\n")
                .with_context(|| format!("writing {}", out.display()))?;
            log::info!("wrote {}", out.display());
            Ok(())
        }
        Command::Serve { inputs, port, host } => {
            let session = inputs.load()?;
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|_| CliError::Usage(format!("invalid listen address {host}:{port}")))?;
            let state = Arc::new(AppState::new(session, inputs.topk));
            serve(state, addr)?;
            Ok(())
        }
        Command::Synth {
            kinds,
            categories,
            per_category,
            neurons,
            drift,
            noise,
            seed,
            thumbnails,
            out,
        } => {
            let kinds = kinds
                .iter()
                .map(|k| k.parse::<ShiftKind>().map_err(|e| CliError::Usage(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let base = SyntheticShiftSpec {
                category_count: categories,
                images_per_category: per_category,
                neuron_count: neurons,
                shift_kind: ShiftKind::Identity,
                drift_magnitude: drift,
                noise_sigma: noise,
                seed,
                thumbnails,
            };
            base.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut wrote_ind = false;
            for kind in kinds {
                let (ind, ood) = generate_pair(&base.with_kind(kind)).map_err(|e| CliError::Usage(e.to_string()))?;
                if !wrote_ind {
                    save(&ind, &out.join("ind.dphb"))?;
                    wrote_ind = true;
                }
                save(&ood, &out.join(format!("{kind}.dphb")))?;
            }
            Ok(())
        }
    }
}

fn save(bundle: &deephys_core::DatasetBundle, path: &Path) -> Result<(), CliError> {
    let bytes = save_bundle(bundle, path).with_context(|| format!("writing {}", path.display()))?;
    log::info!("wrote {} ({bytes} bytes)", path.display());
    Ok(())
}

fn serve(state: Arc<AppState>, addr: SocketAddr) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        log::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .context("serving")
    })
}
