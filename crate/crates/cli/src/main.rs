use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pdvoice::config::RunConfig;
use pdvoice::data::synth::generate_synthetic_corpus;
use pdvoice::data::{load_utterances, Corpus, Utterance};
use pdvoice::evaluation::{evaluate, export_embeddings};
use pdvoice::gradcheck::run_suite;
use pdvoice::model::{Checkpoint, Components, LanguageRegistry};
use pdvoice::training::{ablate, train};
use pdvoice::{Error, Result};

/// Largest relative gradient error accepted by `gradcheck`.
const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(
    name = "pdvoice",
    version,
    about = "Dual-head Parkinson's disease speech detector"
)]
struct Cli {
    /// Flat JSON config of dotted keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Maps an unseen dataset to a registered language, `unseen=known`. Repeatable.
    #[arg(long = "lang-map", global = true, value_name = "UNSEEN=KNOWN")]
    lang_map: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic bilingual corpus.
    Synth {
        /// Dotted-key overrides, `key=value`.
        overrides: Vec<String>,
    },
    /// Train a model and write checkpoint and history.
    Train { overrides: Vec<String> },
    /// Score a checkpoint on one split.
    Eval { overrides: Vec<String> },
    /// Train the full model and one model per removed component.
    Ablate {
        /// Comma-separated components to remove; all of them by default.
        #[arg(long, value_delimiter = ',')]
        components: Option<Vec<String>>,
        overrides: Vec<String>,
    },
    /// Write pooled embeddings and their 2-D projection as CSV.
    ExportEmbeddings { overrides: Vec<String> },
    /// Finite-difference check of every layer and the full training objective.
    Gradcheck {
        /// Number of random seeds, starting at `seed`.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        overrides: Vec<String>,
    },
}

impl Command {
    fn overrides(&self) -> &[String] {
        match self {
            Command::Synth { overrides }
            | Command::Train { overrides }
            | Command::Eval { overrides }
            | Command::Ablate { overrides, .. }
            | Command::ExportEmbeddings { overrides }
            | Command::Gradcheck { overrides, .. } => overrides,
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Languages seen in training, sorted.
fn train_languages(train: &[Utterance]) -> LanguageRegistry {
    let mut names: Vec<&str> = train.iter().map(|u| u.entry.dataset.as_str()).collect();
    names.sort_unstable();
    names.dedup();
    LanguageRegistry::from_names(names)
}

fn apply_lang_map(languages: &mut LanguageRegistry, pairs: &[String]) -> Result<()> {
    for pair in pairs {
        let (unseen, known) = pair.split_once('=').ok_or_else(|| {
            Error::Usage(format!(
                "--lang-map `{pair}` is not of the form unseen=known"
            ))
        })?;
        languages.add_alias(unseen, known)?;
    }
    Ok(())
}

fn check_ssl_dim(cfg: &RunConfig, utts: &[Utterance]) -> Result<()> {
    if let Some(u) = utts.iter().find(|u| u.ssl.last_dim() != cfg.model.d_ssl) {
        return Err(Error::Config(format!(
            "`model.d_ssl` = {} but `{}` has {} SSL features per frame",
            cfg.model.d_ssl,
            u.entry.ssl_feature_path,
            u.ssl.last_dim()
        )));
    }
    Ok(())
}

fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let features = cfg.components.wavelet.then_some(&cfg.features);
    let corpus = Corpus::load(Path::new(&cfg.paths.corpus), features)?;
    check_ssl_dim(cfg, &corpus.train)?;
    Ok(corpus)
}

/// Checkpoint, language registry with `--lang-map` applied, and the configured split.
fn load_for_scoring(
    cfg: &RunConfig,
    cli: &Cli,
) -> Result<(Checkpoint, LanguageRegistry, Vec<Utterance>)> {
    let ckpt = Checkpoint::load(Path::new(&cfg.paths.checkpoint))?;
    let mut languages = ckpt.languages.clone();
    apply_lang_map(&mut languages, &cli.lang_map)?;
    let split = cfg.eval_split()?;
    let features = ckpt.components.wavelet.then_some(&cfg.features);
    let manifest = Path::new(&cfg.paths.corpus).join(split.manifest_name());
    let utts = load_utterances(&manifest, features)?;
    Ok((ckpt, languages, utts))
}

/// `--out`, or `<checkpoint dir>/<what>_<split>` so scoring runs never
/// overwrite the training run's resolved config.
fn output_dir(cli: &Cli, cfg: &RunConfig, what: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| {
        Path::new(&cfg.paths.checkpoint)
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("{what}_{}", cfg.eval.split))
    })
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::resolve(cli.config.as_deref(), cli.seed, cli.command.overrides())?;
    match &cli.command {
        Command::Synth { .. } => {
            let out = cli
                .out
                .clone()
                .unwrap_or_else(|| PathBuf::from(&cfg.paths.corpus));
            create_dir(&out)?;
            let corpus = generate_synthetic_corpus(&cfg.synth_config(), &out)?;
            cfg.write_resolved(&out)?;
            println!(
                "wrote {} train, {} validation, {} test utterances to {}",
                corpus.train.len(),
                corpus.validation.len(),
                corpus.test.len(),
                out.display()
            );
        }
        Command::Train { .. } => {
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("run"));
            let corpus = load_corpus(&cfg)?;
            let languages = train_languages(&corpus.train);
            create_dir(&out)?;
            cfg.write_resolved(&out)?;
            let outcome = train(&corpus.train, &corpus.validation, &languages, &cfg.setup())?;
            outcome.checkpoint.save(&out.join("checkpoint.bin"))?;
            let history = outcome.history.to_tsv();
            write(&out.join("history.tsv"), &history)?;
            print!("{history}");
            println!(
                "best epoch {} validation macro-F1 {:.2}{}",
                outcome.best_epoch,
                outcome.best_macro_f1,
                if outcome.stopped_early {
                    " (stopped early)"
                } else {
                    ""
                }
            );
        }
        Command::Eval { .. } => {
            let (ckpt, languages, utts) = load_for_scoring(&cfg, cli)?;
            let arch = ckpt.architecture()?;
            let eval = evaluate(&arch, &ckpt.params, &languages, &utts, cfg.eval.by_speaker)?;
            let out = output_dir(cli, &cfg, "eval");
            create_dir(&out)?;
            cfg.write_resolved(&out)?;
            write(
                &out.join(format!("metrics_{}.txt", cfg.eval.split)),
                &eval.to_key_values(),
            )?;
            print!("{}", eval.render());
        }
        Command::Ablate { components, .. } => {
            let names: Vec<&str> = match components {
                Some(list) => list.iter().map(String::as_str).collect(),
                None => Components::NAMES.to_vec(),
            };
            let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("ablation"));
            let corpus = load_corpus(&cfg)?;
            let languages = train_languages(&corpus.train);
            create_dir(&out)?;
            cfg.write_resolved(&out)?;
            let table = ablate(&corpus, &languages, &cfg.setup(), &names)?;
            let tsv = table.to_tsv();
            write(&out.join("ablation.tsv"), &tsv)?;
            print!("{tsv}");
        }
        Command::ExportEmbeddings { .. } => {
            let (ckpt, languages, utts) = load_for_scoring(&cfg, cli)?;
            let arch = ckpt.architecture()?;
            let table =
                export_embeddings(&arch, &ckpt.params, &languages, &utts, cfg.eval_task()?)?;
            let out = output_dir(cli, &cfg, "embeddings");
            create_dir(&out)?;
            cfg.write_resolved(&out)?;
            let path = out.join(format!("embeddings_{}.csv", cfg.eval.split));
            table.save(&path)?;
            println!(
                "wrote {} embeddings of dimension {} to {}",
                table.rows.len(),
                table.dim,
                path.display()
            );
        }
        Command::Gradcheck { seeds, .. } => {
            if *seeds == 0 {
                return Err(Error::Usage("--seeds must be positive".into()));
            }
            let report = run_suite(cfg.seed, *seeds)?;
            print!("{}", report.render());
            if let Some(out) = &cli.out {
                create_dir(out)?;
                cfg.write_resolved(out)?;
                write(&out.join("gradcheck.txt"), &report.render())?;
            }
            // a NaN error counts as a failure
            if let Some(bad) = report
                .cases
                .iter()
                .find(|c| c.max_error.is_nan() || c.max_error >= GRADCHECK_TOLERANCE)
            {
                return Err(Error::Numeric(format!(
                    "gradient check `{}` failed: max relative error {:.3e} at seed {}",
                    bad.name, bad.max_error, bad.worst_seed
                )));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
