use std::io::{BufRead, BufReader, Write};

use anyhow::Context;
use groundseg::markup::parse_response;
use serde::{Deserialize, Serialize};

use crate::{open, output, ValidateArgs, EXIT_FINDINGS, EXIT_OK};

#[derive(Deserialize)]
struct ResponseRecord {
    text: String,
    num_images: u32,
}

/// One problem found in the input. `offset` is the byte offset within the
/// response text, or within the line for unparseable records.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct Diagnostic {
    pub line: usize,
    pub offset: usize,
    pub error: String,
}

fn check_line(line: &str, max_masks: usize) -> Option<(usize, String)> {
    let rec: ResponseRecord = match serde_json::from_str(line) {
        Ok(r) => r,
        Err(e) => return Some((0, format!("bad record: {e}"))),
    };
    match parse_response(&rec.text, rec.num_images, true) {
        Err(e) => Some((e.offset, e.kind.to_string())),
        Ok(r) if r.phrases().len() > max_masks => {
            let offset = r.phrases()[max_masks].markup_span.start;
            Some((
                offset,
                format!("{} grounded phrases exceed the cap of {max_masks}", r.phrases().len()),
            ))
        }
        Ok(_) => None,
    }
}

pub fn cmd_validate(args: &ValidateArgs) -> anyhow::Result<i32> {
    let reader = BufReader::new(open(&args.input)?);
    let mut diagnostics = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.with_context(|| format!("reading {}", args.input.display()))?;
        if line.trim().is_empty() {
            continue;
        }
        if let Some((offset, error)) = check_line(&line, args.max_masks) {
            diagnostics.push(Diagnostic {
                line: i + 1,
                offset,
                error,
            });
        }
    }
    let mut w = output(args.out.as_deref())?;
    for d in &diagnostics {
        serde_json::to_writer(&mut w, d)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    if diagnostics.is_empty() {
        Ok(EXIT_OK)
    } else {
        eprintln!("{} invalid response(s)", diagnostics.len());
        Ok(EXIT_FINDINGS)
    }
}
