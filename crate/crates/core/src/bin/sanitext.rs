use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use sanitext::harness::{Client, ModelKind, Server};
use sanitext::index::DEFAULT_K;
use sanitext::verify::{self, Mechanism, DEFAULT_TRIALS};
use sanitext::{
    CandidateTable, EmbeddingStore, Error, PrivacyParams, Result, RngStream, Sanitizer,
    SanitizerConfig, SensitivityPartition,
};

#[derive(Parser)]
#[command(
    name = "sanitext",
    version,
    about = "Report-Noisy-Max text sanitization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Precompute the top-k candidate table for a store.
    BuildIndex {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the sensitive / non-sensitive split of a store.
    Partition {
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        q: f64,
    },
    /// Sanitize a text file.
    Sanitize {
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.3)]
        p: f64,
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        audit: Option<PathBuf>,
    },
    /// Empirically check the privacy-loss bound for a pair of tokens.
    Verify {
        #[arg(value_enum)]
        case: Case,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.3)]
        p: f64,
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        #[arg(long)]
        x: String,
        #[arg(long)]
        xprime: String,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Run the split-inference server.
    Serve {
        #[arg(long)]
        bind: String,
        #[arg(long)]
        store: PathBuf,
        #[arg(long, default_value = "echo")]
        model: String,
    },
    /// Sanitize a file locally and send it to a split-inference server.
    Client {
        #[arg(long)]
        connect: String,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 0.3)]
        p: f64,
        #[arg(long, default_value_t = 0.2)]
        q: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        session: u64,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Case {
    Case1,
    Case2,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sanitext: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_pair(store: &PathBuf, table: &PathBuf) -> Result<(EmbeddingStore, CandidateTable)> {
    let store = EmbeddingStore::load_path(store)?;
    let table = CandidateTable::load_for(&store, BufReader::new(File::open(table)?))?;
    Ok((store, table))
}

fn token(store: &EmbeddingStore, surface: &str) -> Result<u32> {
    store
        .lookup(surface)
        .ok_or_else(|| Error::Config(format!("token {surface:?} is not in the store")))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildIndex { store, k, out } => {
            let store = EmbeddingStore::load_path(&store)?;
            let table = CandidateTable::build(&store, k)?;
            let n = table.save(BufWriter::new(File::create(&out)?))?;
            eprintln!("wrote {n} bytes for {} tokens (k = {k})", table.len());
        }
        Command::Partition { store, q } => {
            let store = EmbeddingStore::load_path(&store)?;
            let part = SensitivityPartition::by_frequency(&store, q)?;
            println!(
                "tokens={} sensitive={} non_sensitive={} q={}",
                store.len(),
                part.sensitive_count(),
                store.len() - part.sensitive_count(),
                q
            );
            if let Some(max) = part.sensitive_ids().map(|id| store.frequency(id)).max() {
                println!("max_sensitive_frequency={max}");
            }
        }
        Command::Sanitize {
            store,
            table,
            epsilon,
            p,
            q,
            k,
            seed,
            input,
            out,
            audit,
        } => {
            let config = SanitizerConfig {
                epsilon,
                k,
                p,
                q,
                seed,
                store: Some(store),
                table: Some(table),
                input,
                output: out,
                audit,
            };
            let doc = sanitext::sanitizer::run_sanitize(&config)?;
            let oov = Sanitizer::oov_count(&doc);
            if oov > 0 {
                eprintln!(
                    "{oov} of {} tokens were not in the vocabulary",
                    doc.audit.len()
                );
            }
        }
        Command::Verify {
            case,
            store,
            table,
            epsilon,
            p,
            q,
            x,
            xprime,
            trials,
            seed,
            json,
        } => {
            let (store, table) = load_pair(&store, &table)?;
            let part = SensitivityPartition::by_frequency(&store, q)?;
            let params = PrivacyParams::new(epsilon, p)?;
            let mech = Mechanism::new(&part, &table, params);
            let (x, xp) = (token(&store, &x)?, token(&store, &xprime)?);
            let report = match case {
                Case::Case1 => verify::check_case1(&mech, x, xp, trials, seed)?,
                Case::Case2 => verify::check_case2(&mech, x, xp, trials, seed)?,
            };
            println!("{}", report.summary());
            if let Some(path) = json {
                let mut w = BufWriter::new(File::create(path)?);
                serde_json::to_writer_pretty(&mut w, &report)?;
                w.write_all(b"\n")?;
            }
        }
        Command::Serve { bind, store, model } => {
            let store = Arc::new(EmbeddingStore::load_path(&store)?);
            let kind: ModelKind = model.parse()?;
            let server = Server::bind(bind.as_str(), store, kind)?;
            eprintln!("listening on {}", server.local_addr()?);
            server.run()?;
        }
        Command::Client {
            connect,
            store,
            table,
            epsilon,
            p,
            q,
            seed,
            session,
            input,
            report,
        } => {
            let (store, table) = load_pair(&store, &table)?;
            let part = SensitivityPartition::by_frequency(&store, q)?;
            let sanitizer = Arc::new(Sanitizer::new(
                store,
                table,
                part,
                PrivacyParams::new(epsilon, p)?,
            )?);
            let text = String::from_utf8(std::fs::read(&input)?)
                .map_err(|e| Error::Format(format!("input is not valid UTF-8: {e}")))?;
            let mut client = Client::connect(connect.as_str(), sanitizer)?;
            let outcome = client.infer(&text, session, &mut RngStream::new(seed, session))?;
            let json = serde_json::to_string_pretty(&outcome.report())?;
            match report {
                Some(path) => std::fs::write(path, json + "\n")?,
                None => println!("{json}"),
            }
        }
    }
    Ok(())
}
