use std::io::{BufReader, Write};
use std::path::Path;

use anyhow::{bail, Context};
use groundseg::dataset::{
    dataset_stats, filter_qa, read_jsonl, sample_corpus, CompatibilityTable, Corpus, FilterConfig, QAPair, Strategy,
    DEFAULT_CATEGORY_K, DEFAULT_NN_K,
};

use crate::{
    open, output, BuildSamplesArgs, DatasetCommand, FilterArgs, StatsArgs, StrategyArg, EXIT_FINDINGS, EXIT_OK,
};

pub fn cmd_dataset(cmd: &DatasetCommand) -> anyhow::Result<i32> {
    match cmd {
        DatasetCommand::BuildSamples(a) => build_samples(a),
        DatasetCommand::Filter(a) => filter(a),
        DatasetCommand::Stats(a) => stats(a),
    }
}

fn load_corpus(path: &Path) -> anyhow::Result<Corpus> {
    Corpus::from_jsonl(BufReader::new(open(path)?)).with_context(|| format!("corpus {}", path.display()))
}

fn load_qa(path: &Path) -> anyhow::Result<Vec<QAPair>> {
    let pairs: Vec<QAPair> =
        read_jsonl(BufReader::new(open(path)?)).with_context(|| format!("QA file {}", path.display()))?;
    for (i, p) in pairs.iter().enumerate() {
        p.sample
            .validate()
            .with_context(|| format!("QA file {}: record {}", path.display(), i + 1))?;
    }
    Ok(pairs)
}

fn write_jsonl<T: serde::Serialize>(path: Option<&Path>, items: &[T]) -> anyhow::Result<()> {
    let mut w = output(path)?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn build_samples(a: &BuildSamplesArgs) -> anyhow::Result<i32> {
    let corpus = load_corpus(&a.corpus)?;
    let table;
    let strategy = match a.strategy {
        StrategyArg::Nn => Strategy::NearestNeighbor {
            k: a.k.unwrap_or(DEFAULT_NN_K),
            set_sizes: &[2, 3],
            sets_per_anchor: a.sets_per_anchor,
        },
        StrategyArg::Category => {
            let Some(path) = &a.compat else {
                bail!("--compat is required for the category strategy");
            };
            table = CompatibilityTable::load(path).with_context(|| format!("compatibility table {}", path.display()))?;
            Strategy::ObjectCategory {
                k: a.k.unwrap_or(DEFAULT_CATEGORY_K),
                set_sizes: &[2, 3],
                sets_per_anchor: a.sets_per_anchor,
                table: &table,
            }
        }
    };
    let sets = sample_corpus(&corpus, &strategy, a.seed)?;
    write_jsonl(a.out.as_deref(), &sets)?;
    eprintln!("{} sample sets from {} images", sets.len(), corpus.len());
    Ok(EXIT_OK)
}

fn filter(a: &FilterArgs) -> anyhow::Result<i32> {
    let corpus = load_corpus(&a.corpus)?;
    let pairs = load_qa(&a.qa)?;
    let config = FilterConfig {
        max_masks: a.max_masks,
        min_clause_words: a.min_clause_words,
    };
    let (kept, report) = filter_qa(&pairs, &corpus, &config);
    write_jsonl(a.out.as_deref(), &kept)?;
    let json = serde_json::to_string_pretty(&report)?;
    match &a.report {
        Some(p) => {
            let mut w = output(Some(p))?;
            writeln!(w, "{json}")?;
            w.flush()?;
        }
        None => eprintln!("{json}"),
    }
    if report.total > 0 && report.kept == 0 {
        eprintln!("every QA pair was discarded");
        return Ok(EXIT_FINDINGS);
    }
    Ok(EXIT_OK)
}

fn stats(a: &StatsArgs) -> anyhow::Result<i32> {
    let pairs = load_qa(&a.qa)?;
    let corpus = a.corpus.as_deref().map(load_corpus).transpose()?;
    let Some(s) = dataset_stats(&pairs, corpus.as_ref()) else {
        bail!("{} contains no QA pairs", a.qa.display());
    };
    let mut w = output(a.out.as_deref())?;
    writeln!(w, "{}", serde_json::to_string_pretty(&s)?)?;
    w.flush()?;
    Ok(EXIT_OK)
}
