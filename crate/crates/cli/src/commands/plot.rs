use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::svg::{histogram, line_chart, Bar};

pub const ENTROPY_HEADER: [&str; 3] = ["bin_low", "bin_high", "count"];
pub const ACCURACY_HEADER: [&str; 2] = ["epoch", "accuracy"];
/// Comment carrying the histogram's marker value.
pub const MARKER_PREFIX: &str = "# image_entropy=";

/// The chart kinds recognized from a CSV header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schema {
    EntropyDistribution,
    AccuracyPerEpoch,
}

/// Renders CSV text as SVG, picking the chart from the header.
pub fn render(text: &str, title: &str) -> Result<String> {
    let mut marker = None;
    let mut body = String::new();
    for line in text.lines() {
        if let Some(v) = line.strip_prefix(MARKER_PREFIX) {
            marker = Some(
                v.trim()
                    .parse::<f64>()
                    .with_context(|| format!("bad marker line {line:?}"))?,
            );
        } else if !line.trim_start().starts_with('#') {
            body.push_str(line);
            body.push('\n');
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.iter().all(|h| h.is_empty()) {
        bail!("empty CSV");
    }
    let schema = if header == ENTROPY_HEADER {
        Schema::EntropyDistribution
    } else if header == ACCURACY_HEADER {
        Schema::AccuracyPerEpoch
    } else {
        bail!(
            "unrecognized CSV schema {header:?}; expected {ENTROPY_HEADER:?} or {ACCURACY_HEADER:?}"
        );
    };
    let rows: Vec<csv::StringRecord> = reader.records().collect::<Result<_, _>>()?;
    if rows.is_empty() {
        bail!("empty CSV: header only");
    }
    let num = |r: &csv::StringRecord, i: usize| -> Result<f64> {
        r[i].parse::<f64>()
            .with_context(|| format!("non-numeric {} value {:?}", header[i], &r[i]))
    };
    Ok(match schema {
        Schema::EntropyDistribution => {
            let bars = rows
                .iter()
                .map(|r| {
                    Ok(Bar {
                        low: num(r, 0)?,
                        high: num(r, 1)?,
                        count: r[2]
                            .parse()
                            .with_context(|| format!("non-integer count {:?}", &r[2]))?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            histogram(title, &bars, marker.map(|m| (m, "image entropy")))
        }
        Schema::AccuracyPerEpoch => {
            let points = rows
                .iter()
                .map(|r| Ok((num(r, 0)?, num(r, 1)?)))
                .collect::<Result<Vec<_>>>()?;
            line_chart(title, &points)
        }
    })
}

/// Renders `input` to `output` (default: same path with `.svg`).
pub fn run(input: &Path, output: Option<&Path>) -> Result<PathBuf> {
    let text =
        std::fs::read_to_string(input).with_context(|| format!("reading {}", input.display()))?;
    let title = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let svg = render(&text, &title).with_context(|| format!("plotting {}", input.display()))?;
    let target = output
        .map(Path::to_path_buf)
        .unwrap_or_else(|| input.with_extension("svg"));
    std::fs::write(&target, svg)?;
    Ok(target)
}
