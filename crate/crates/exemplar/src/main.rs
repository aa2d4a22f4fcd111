use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use exemplar::bank::load_bank;
use exemplar::evaluation::{bank_table_counts, complexity_stats};
use exemplar::jsonl;
use exemplar::pipeline::{self, EmbeddedSet, RunConfig, StageGate};

#[derive(Parser)]
#[command(
    name = "exemplar",
    version,
    about = "Few-shot example selection and evaluation pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Inspect an example bank file
    Bank {
        #[command(subcommand)]
        action: BankAction,
    },
    /// Generate skill rewrites for bank and queries
    Rewrite(StageArgs),
    /// Embed whatever the configured strategy scores on
    Embed(StageArgs),
    /// Pick in-context examples per query
    Select(StageArgs),
    /// Assemble prompts and collect backbone predictions
    Run(StageArgs),
    /// Score predictions and write the report
    Eval(StageArgs),
    /// All stages, with a stage-by-stage account and the report
    Pipeline(StageArgs),
    /// Write embeddings as "id<TAB>space-separated values" for projection tools
    ExportEmbeddings {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Subcommand)]
enum BankAction {
    /// Parse the file and check ids, fields, and records
    Validate(BankArgs),
    /// Print size, database spread, and complexity means
    Stats(BankArgs),
}

#[derive(Args)]
struct BankArgs {
    #[arg(long)]
    bank: PathBuf,
    #[arg(long, default_value = "default")]
    task_tag: String,
}

#[derive(Args)]
struct StageArgs {
    /// Run config TOML
    #[arg(long)]
    config: PathBuf,
    /// Validate the config and print the stage plan without executing
    #[arg(long)]
    dry_run: bool,
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Bank { action } => bank_command(action),
        Command::Rewrite(args) => stage_command(args, StageGate::Rewrite),
        Command::Embed(args) => stage_command(args, StageGate::Embed),
        Command::Select(args) => stage_command(args, StageGate::Select),
        Command::Run(args) => stage_command(args, StageGate::Run),
        Command::Eval(args) => stage_command(args, StageGate::Eval),
        Command::Pipeline(args) => stage_command(args, StageGate::Eval),
        Command::ExportEmbeddings { config, output } => export_embeddings(&config, &output),
    }
}

fn bank_command(action: BankAction) -> anyhow::Result<()> {
    match action {
        BankAction::Validate(args) => {
            let bank = load_bank(&args.bank, &args.task_tag)
                .with_context(|| format!("validating {}", args.bank.display()))?;
            println!(
                "ok: {} examples across {} databases",
                bank.len(),
                bank.distinct_dbs()
            );
        }
        BankAction::Stats(args) => {
            let bank = load_bank(&args.bank, &args.task_tag)?;
            let all: Vec<_> = bank.examples().iter().collect();
            let (tables, target_len) = complexity_stats(&all, &bank_table_counts(&bank))?;
            println!("examples            {}", bank.len());
            println!("databases           {}", bank.distinct_dbs());
            println!("mean schema tables  {tables:.4}");
            println!("mean target tokens  {target_len:.4}");
        }
    }
    Ok(())
}

fn stage_command(args: StageArgs, gate: StageGate) -> anyhow::Result<()> {
    let config = RunConfig::load(&args.config)?;
    if args.dry_run {
        let plans = pipeline::plan(&config, gate)?;
        if plans.is_empty() {
            println!(
                "nothing to do: strategy {} has no stage at or before this gate",
                config.selection.strategy
            );
        }
        for plan in plans {
            println!(
                "{:16} {:8} {}",
                plan.stage,
                if plan.cached { "cached" } else { "pending" },
                plan.output.display()
            );
        }
        return Ok(());
    }
    let outcome = pipeline::run_to(&config, gate)?;
    for stage in &outcome.stages {
        println!(
            "{:16} {:8} {}",
            stage.stage,
            if stage.cached { "reused" } else { "computed" },
            stage.output.display()
        );
    }
    if let Some(path) = &outcome.predictions_path {
        println!("predictions      {}", path.display());
    }
    if let Some(path) = &outcome.records_path {
        println!("records          {}", path.display());
    }
    if let Some(path) = &outcome.report_path {
        println!("report           {}", path.display());
    }
    if let Some(report) = &outcome.report {
        println!();
        print_report(report);
    }
    Ok(())
}

fn print_report(report: &exemplar::EvalReport) {
    println!("scored records      {}", report.n);
    println!("exact match rate    {:.4}", report.exact_match_rate);
    println!("mean sketch overlap {:.4}", report.mean_sketch_overlap);
    println!("mean distinct dbs   {:.4}", report.diversity_mean_distinct_dbs);
    println!("mean schema tables  {:.4}", report.complexity_mean_tables);
    println!("mean target tokens  {:.4}", report.complexity_mean_target_len);
    if let Some(rates) = &report.per_trial_rates {
        let formatted: Vec<String> = rates.iter().map(|r| format!("{r:.4}")).collect();
        println!("per-trial rates     {}", formatted.join(" "));
    }
}

fn export_embeddings(config_path: &std::path::Path, output: &std::path::Path) -> anyhow::Result<()> {
    let config = RunConfig::load(config_path)?;
    let outcome = pipeline::run_to(&config, StageGate::Embed)?;
    let embed_stages: Vec<_> = outcome
        .stages
        .iter()
        .filter(|s| s.stage.starts_with("embed-"))
        .collect();
    if embed_stages.is_empty() {
        bail!(
            "strategy {} embeds nothing; pick an embedding-based strategy",
            config.selection.strategy
        );
    }
    let mut lines = Vec::new();
    for stage in embed_stages {
        let sets: Vec<EmbeddedSet> = jsonl::read_records(&stage.output)?;
        for set in sets {
            let multi = set.vectors.len() > 1;
            for (idx, vector) in set.vectors.iter().enumerate() {
                let label = if multi {
                    format!("{}:{idx}", set.id)
                } else {
                    set.id.clone()
                };
                let values: Vec<String> =
                    vector.values.iter().map(|v| v.to_string()).collect();
                lines.push(format!("{label}\t{}", values.join(" ")));
            }
        }
    }
    if let Some(parent) = output.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(output, lines.join("\n") + "\n")
        .with_context(|| format!("writing {}", output.display()))?;
    println!("wrote {} embeddings to {}", lines.len(), output.display());
    Ok(())
}
