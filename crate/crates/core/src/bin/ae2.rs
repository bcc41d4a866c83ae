use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ae2::commands::{
    cmd_align, cmd_embed, cmd_eval, cmd_gen, cmd_retrieve, cmd_train, env_seed, load_train_config,
};
use ae2::data::write_file;
use ae2::error::Result;
use ae2::eval::{EvalConfig, RetrievalScope};

#[derive(Parser)]
#[command(name = "ae2", version, about = "Ego-exo frame embeddings by temporal alignment")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

fn key_value(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got {s:?}"))
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic dataset.
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing dataset.
        #[arg(long)]
        force: bool,
        #[arg(long)]
        seed: Option<u64>,
        /// Extra generator settings, `key=value`.
        #[arg(long = "set", value_parser = key_value)]
        set: Vec<(String, String)>,
    },
    /// Train an encoder on the train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Continue from a `last.ckpt`.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Extra training settings, `key=value`.
        #[arg(long = "set", value_parser = key_value)]
        set: Vec<(String, String)>,
    },
    /// Write per-video embedding files.
    Embed {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// train, val, test or all.
        #[arg(long, default_value = "all")]
        split: String,
    },
    /// Run every downstream evaluation.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 10)]
        few_shot_repeats: usize,
    },
    /// Align two embedding files.
    Align {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        beta: f64,
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        /// Plot data: cost matrix, path and sync map.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Dump top-k frame retrieval results for the test split.
    Retrieve {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        embeddings: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// regular, ego2exo or exo2ego.
        #[arg(long, default_value = "regular")]
        scope: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen { config, out, force, seed, mut set } => {
            if let Some(s) = seed {
                set.push(("seed".into(), s.to_string()));
            }
            let s = cmd_gen(config.as_deref(), &set, &out, force)?;
            println!("{}", s.manifest.display());
            println!("videos={} frames={}", s.videos, s.frames);
        }
        Cmd::Train { manifest, config, out, resume, epochs, seed, mut set } => {
            if let Some(e) = epochs {
                set.push(("epochs".into(), e.to_string()));
            }
            if let Some(s) = seed {
                set.push(("seed".into(), s.to_string()));
            }
            let cfg = load_train_config(config.as_deref(), &set)?;
            let o = cmd_train(&manifest, cfg, &out, resume.as_deref())?;
            println!("best={}", o.best.display());
            println!("last={}", o.last.display());
            println!("log={}", o.log.display());
        }
        Cmd::Embed { manifest, checkpoint, out, split } => {
            let written = cmd_embed(&manifest, &checkpoint, &split, &out)?;
            println!("wrote {} embedding files to {}", written.len(), out.display());
        }
        Cmd::Eval { manifest, embeddings, out, seed, few_shot_repeats } => {
            let mut cfg = EvalConfig {
                few_shot_repeats,
                ..EvalConfig::default()
            };
            if let Some(s) = seed.or(env_seed()?) {
                cfg.svm.seed = s;
            }
            let (report, warnings) = cmd_eval(&manifest, &embeddings, &out, &cfg)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", report.to_text());
        }
        Cmd::Align { a, b, beta, gamma, csv } => {
            let o = cmd_align(&a, &b, beta, gamma, csv.as_deref())?;
            println!("soft_loss={}", o.soft_loss);
            println!("hard_cost={}", o.hard_cost);
            let path: Vec<String> = o.path.iter().map(|(i, j)| format!("{i}:{j}")).collect();
            println!("path={}", path.join(" "));
            let map: Vec<String> = o.sync.map.iter().map(|j| j.to_string()).collect();
            println!("sync_map={}", map.join(","));
        }
        Cmd::Retrieve { manifest, embeddings, k, scope, out } => {
            let scope: RetrievalScope = scope.parse()?;
            let dump = cmd_retrieve(&manifest, &embeddings, k, scope)?;
            match out {
                Some(p) => write_file(&p, dump.as_bytes())?,
                None => print!("{dump}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
