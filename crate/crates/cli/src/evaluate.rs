use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use groundseg::metrics::{
    EmbeddingProvider, EvalConfig, EvalSample, FileEmbeddings, HashEmbeddings, MetricError, MetricReport, SynonymTable,
    TargetEntry, Thresholds, HASH_FALLBACK_NAME,
};
use serde::Deserialize;

use crate::{check_unit, open, output, EvaluateArgs, ReportFormat, EXIT_FINDINGS, EXIT_OK};

/// Fields read from a prediction record. Records without `pred` supply their
/// ground truth as the prediction.
#[derive(Deserialize)]
struct PredRecord {
    sample_id: String,
    #[serde(default)]
    pred: Option<Vec<TargetEntry>>,
    #[serde(default)]
    pred_sentence: Option<String>,
    #[serde(default)]
    gt: Vec<TargetEntry>,
    #[serde(default)]
    gt_sentence: String,
}

#[derive(Deserialize)]
struct IdOnly {
    sample_id: String,
}

/// Byte offsets of every record in a prediction file, so predictions can be
/// fetched on demand without holding the file in memory.
struct PredIndex {
    reader: BufReader<File>,
    offsets: HashMap<String, u64>,
    path: String,
}

impl PredIndex {
    fn build(path: &Path) -> anyhow::Result<Self> {
        let mut reader = BufReader::new(open(path)?);
        let mut offsets = HashMap::new();
        let mut line = String::new();
        let mut offset = 0u64;
        let mut line_no = 0usize;
        loop {
            line.clear();
            let n = reader.read_line(&mut line).with_context(|| format!("reading {}", path.display()))?;
            if n == 0 {
                break;
            }
            line_no += 1;
            if !line.trim().is_empty() {
                let id: IdOnly = serde_json::from_str(&line)
                    .with_context(|| format!("{}:{line_no}: bad prediction record", path.display()))?;
                if offsets.insert(id.sample_id.clone(), offset).is_some() {
                    bail!("{}:{line_no}: duplicate sample_id `{}`", path.display(), id.sample_id);
                }
            }
            offset += n as u64;
        }
        Ok(Self {
            reader,
            offsets,
            path: path.display().to_string(),
        })
    }

    fn fetch(&mut self, sample_id: &str) -> anyhow::Result<PredRecord> {
        let &offset = self
            .offsets
            .get(sample_id)
            .ok_or_else(|| anyhow!("sample_id `{sample_id}` missing from predictions {}", self.path))?;
        self.reader.seek(SeekFrom::Start(offset))?;
        let mut line = String::new();
        self.reader.read_line(&mut line)?;
        serde_json::from_str(&line).with_context(|| format!("prediction `{sample_id}` in {}", self.path))
    }
}

fn apply_prediction(sample: &mut EvalSample, rec: PredRecord) {
    match rec.pred {
        Some(pred) => {
            sample.pred = pred;
            sample.pred_sentence = rec.pred_sentence.unwrap_or_default();
        }
        None => {
            sample.pred = rec.gt;
            sample.pred_sentence = rec.gt_sentence;
        }
    }
}

pub(crate) fn load_provider(source: &str) -> anyhow::Result<Box<dyn EmbeddingProvider>> {
    if source == HASH_FALLBACK_NAME {
        return Ok(Box::new(HashEmbeddings::default()));
    }
    Ok(Box::new(
        FileEmbeddings::load(source).with_context(|| format!("loading embeddings {source}"))?,
    ))
}

/// Reads samples lazily, stopping at the first error and keeping it.
struct SampleStream<'a> {
    lines: std::io::Lines<BufReader<File>>,
    line_no: usize,
    path: &'a Path,
    preds: Option<PredIndex>,
    error: Option<anyhow::Error>,
}

impl SampleStream<'_> {
    fn next_sample(&mut self) -> anyhow::Result<Option<EvalSample>> {
        loop {
            let Some(line) = self.lines.next() else { return Ok(None) };
            self.line_no += 1;
            let line = line.with_context(|| format!("reading {}", self.path.display()))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut sample: EvalSample = serde_json::from_str(&line)
                .with_context(|| format!("{}:{}: bad sample record", self.path.display(), self.line_no))?;
            if let Some(p) = self.preds.as_mut() {
                let rec = p.fetch(&sample.sample_id)?;
                debug_assert_eq!(rec.sample_id, sample.sample_id);
                apply_prediction(&mut sample, rec);
            }
            return Ok(Some(sample));
        }
    }
}

impl Iterator for SampleStream<'_> {
    type Item = EvalSample;

    fn next(&mut self) -> Option<EvalSample> {
        if self.error.is_some() {
            return None;
        }
        match self.next_sample() {
            Ok(s) => s,
            Err(e) => {
                self.error = Some(e);
                None
            }
        }
    }
}

fn fmt4(v: f64) -> String {
    format!("{v:.4}")
}

const HEADLINE: [&str; 7] = ["miou", "recall", "ss", "siou", "i_ss", "i_siou", "meteor"];

fn headline_values(r: &MetricReport) -> [f64; 7] {
    [r.miou, r.recall, r.ss, r.siou, r.i_ss, r.i_siou, r.meteor]
}

fn count_values(r: &MetricReport) -> [(&'static str, usize); 6] {
    [
        ("n_samples", r.n_samples),
        ("n_gt", r.n_gt),
        ("n_pred", r.n_pred),
        ("n_true_positive", r.n_true_positive),
        ("n_invalid", r.n_invalid),
        ("n_i_flagged", r.n_i_flagged),
    ]
}

/// Renders a report. JSON keeps full precision; CSV and Markdown round the
/// metric values to four decimals.
pub fn render_report(r: &MetricReport, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            let mut s = serde_json::to_string_pretty(r).expect("report serializes");
            s.push('\n');
            s
        }
        ReportFormat::Csv => {
            let mut header: Vec<&str> = HEADLINE.to_vec();
            let mut row: Vec<String> = headline_values(r).iter().map(|&v| fmt4(v)).collect();
            for (k, v) in count_values(r) {
                header.push(k);
                row.push(v.to_string());
            }
            header.push("embedding_provider");
            row.push(r.embedding_provider.clone());
            format!("{}\n{}\n", header.join(","), row.join(","))
        }
        ReportFormat::Md => {
            let mut s = String::from("| metric | value |\n|---|---|\n");
            for (k, v) in HEADLINE.iter().zip(headline_values(r)) {
                s.push_str(&format!("| {k} | {} |\n", fmt4(v)));
            }
            for (k, v) in count_values(r) {
                s.push_str(&format!("| {k} | {v} |\n"));
            }
            s.push_str(&format!("| embedding_provider | {} |\n", r.embedding_provider));
            s
        }
    }
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<i32> {
    check_unit("--iou-threshold", args.iou_threshold)?;
    check_unit("--sim-threshold", args.sim_threshold)?;
    if args.jobs == 0 {
        bail!("--jobs must be at least 1");
    }
    let provider = load_provider(&args.embeddings)?;
    let synonyms = match &args.synonyms {
        Some(p) => Some(Arc::new(
            SynonymTable::load(p).with_context(|| format!("loading synonyms {}", p.display()))?,
        )),
        None => None,
    };
    let config = EvalConfig {
        thresholds: Thresholds {
            iou: args.iou_threshold,
            similarity: args.sim_threshold,
        },
        synonyms,
        skip_invalid: args.skip_invalid,
        keep_per_sample: args.per_sample,
        parallelism: args.jobs,
        ..EvalConfig::default()
    };
    let preds = args.pred.as_deref().map(PredIndex::build).transpose()?;
    let mut stream = SampleStream {
        lines: BufReader::new(open(&args.gt)?).lines(),
        line_no: 0,
        path: &args.gt,
        preds,
        error: None,
    };
    let result = groundseg::metrics::evaluate_dataset(&mut stream, provider.as_ref(), &config);
    if let Some(e) = stream.error {
        return Err(e);
    }
    let report = match result {
        Ok(r) => r,
        Err(MetricError::NoSamples) => bail!("no evaluable samples in {}", args.gt.display()),
        Err(e) => return Err(e.into()),
    };

    let rendered = render_report(&report, args.format);
    let mut stdout = std::io::stdout().lock();
    for (k, v) in HEADLINE.iter().zip(headline_values(&report)) {
        writeln!(stdout, "{k}\t{}", fmt4(v))?;
    }
    match &args.out {
        Some(p) => {
            let mut w = output(Some(p))?;
            w.write_all(rendered.as_bytes())?;
            w.flush()?;
        }
        None => stdout.write_all(rendered.as_bytes())?,
    }
    if report.n_invalid > 0 {
        eprintln!("{} invalid sample(s) skipped", report.n_invalid);
        return Ok(EXIT_FINDINGS);
    }
    Ok(EXIT_OK)
}
