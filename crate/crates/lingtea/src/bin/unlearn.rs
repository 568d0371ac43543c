//! Command-line front end: runs experiments from config files, generates
//! synthetic corpora, and drives the comparison recipes.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric
//! failure.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use lingtea::corpus::write_corpus;
use lingtea::harness::{
    kappa_ablation, load_corpus_source, load_experiment_spec, materialize_corpus, run_recipe,
    scaling_experiment, CorpusSource, ExperimentOutcome, ExperimentSpec, Method, Recipe,
    SpecOverrides,
};
use lingtea::Error;

#[derive(Parser)]
#[command(
    name = "unlearn",
    version,
    about = "Multilingual unlearning experiments on small causal language models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Generate a synthetic parallel corpus directory.
    GenCorpus(GenCorpusArgs),
    /// Compare adaptive mixing against fixed mix weights.
    AblateKappa(AblateKappaArgs),
    /// Compare batch and chunked unlearning as the forget set grows.
    Scale(ScaleArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's method.
    #[arg(long)]
    method: Option<Method>,
    /// Override the config's seeds; repeat for several.
    #[arg(long = "seed")]
    seeds: Vec<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Corpus spec file (a `[corpus]` section or bare corpus keys).
    #[arg(long)]
    spec: PathBuf,
    /// Override the spec's generation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory to write the corpus into.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateKappaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Override the fixed mix weights, e.g. `0,0.25,0.5,0.75,1`.
    #[arg(long, value_delimiter = ',')]
    kappas: Vec<f64>,
}

#[derive(Args)]
struct ScaleArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Override the forget-set multipliers, e.g. `1,2,4`.
    #[arg(long, value_delimiter = ',')]
    multipliers: Vec<usize>,
}

fn load_spec(common: &CommonArgs, recipe: Option<Recipe>) -> Result<ExperimentSpec, Error> {
    let mut spec = load_experiment_spec(&common.config)?;
    let overrides = SpecOverrides {
        method: common.method,
        seeds: common.seeds.clone(),
        out_dir: common.out.clone(),
        recipe,
        ..SpecOverrides::default()
    };
    overrides.apply(&mut spec);
    Ok(spec)
}

fn report_outcome(outcome: &ExperimentOutcome) {
    for (label, _) in &outcome.runs {
        println!("completed {label}");
    }
    println!("wrote {}", outcome.summary_csv.display());
    println!("wrote {}", outcome.summary_md.display());
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run(args) => {
            let spec = load_spec(&args.common, None)?;
            let outcome = run_recipe(&spec)?;
            report_outcome(&outcome);
        }
        Command::GenCorpus(args) => {
            let mut source = load_corpus_source(&args.spec)?;
            match (&mut source, args.seed) {
                (CorpusSource::Synthetic { seed, .. }, Some(s)) => *seed = s,
                (CorpusSource::Path { .. }, _) => {
                    return Err(Error::Config(
                        "gen-corpus needs a synthetic corpus spec, not a `path`".into(),
                    ))
                }
                _ => {}
            }
            let corpus = materialize_corpus(&source)?;
            write_corpus(&corpus, &args.out)?;
            println!("wrote corpus to {}", args.out.display());
        }
        Command::AblateKappa(args) => {
            let spec = load_spec(&args.common, Some(Recipe::KappaAblation))?;
            let kappas =
                if args.kappas.is_empty() { spec.fixed_kappas.clone() } else { args.kappas };
            let outcome = kappa_ablation(&spec, &kappas)?;
            report_outcome(&outcome);
        }
        Command::Scale(args) => {
            let spec = load_spec(&args.common, Some(Recipe::Scaling))?;
            let multipliers =
                if args.multipliers.is_empty() { spec.multipliers.clone() } else { args.multipliers };
            let outcome = scaling_experiment(&spec, &multipliers)?;
            report_outcome(&outcome);
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
