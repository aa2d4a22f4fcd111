//! Drive the whole content-addressed pipeline from a TOML run config:
//! rewrite, embed, select, run, eval. A second invocation reuses every
//! cached stage, and the final outputs are byte-stable.

use exemplar::pipeline::{plan, run, RunConfig, StageGate};
use exemplar::SyntheticFixture;

fn main() -> anyhow::Result<()> {
    let dir = tempfile::tempdir()?;
    let fixture = SyntheticFixture::generate(11);
    let paths = fixture.write_files(dir.path())?;

    // mock endpoints replay the fixture's canned completions, so the run
    // needs no network and reproduces exactly
    let source = format!(
        r#"
seed = 11
cache_dir = {cache:?}
bank_path = {bank:?}
queries_path = {queries:?}
demos_path = {demos:?}
task_tag = "text_to_sql"

[rewriter_endpoint]
kind = "mock"
model_id = "synthetic-rewriter"
canned_path = {rewrites:?}

[backbone]
kind = "mock"
model_id = "synthetic-backbone"
canned_path = {answers:?}

[selection]
strategy = "skill_consistency"
"#,
        cache = dir.path().join("cache"),
        bank = paths.bank,
        queries = paths.queries,
        demos = paths.demos,
        rewrites = paths.canned_rewrites,
        answers = paths.canned_answers,
    );
    let config = RunConfig::from_toml_str(&source, dir.path())?;

    println!("planned stages (nothing cached yet):");
    for stage in plan(&config, StageGate::Eval)? {
        println!("  {:<16} cached={}", stage.stage, stage.cached);
    }

    let outcome = run(&config)?;
    let report = outcome.report.as_ref().expect("eval gate produces a report");
    println!("\nfirst run:");
    for stage in &outcome.stages {
        println!("  {:<16} cached={}", stage.stage, stage.cached);
    }
    println!("report: n={} exact_match_rate={:.4}", report.n, report.exact_match_rate);
    let predictions_path = outcome.predictions_path.expect("predictions written");
    let first_bytes = std::fs::read(&predictions_path)?;

    let again = run(&config)?;
    println!("\nsecond run:");
    for stage in &again.stages {
        println!("  {:<16} cached={}", stage.stage, stage.cached);
    }
    let second_bytes = std::fs::read(&predictions_path)?;
    println!(
        "predictions byte-identical across runs: {}",
        first_bytes == second_bytes
    );
    println!("outputs under {:?}", config.cache_dir);
    Ok(())
}
