//! CSV emission and the matching reader.

use std::path::Path;

use crate::angular::InteractionKind;
use crate::error::{Error, Result};

use super::config::Contribution;
use super::pipeline::ContributionRecord;

pub const CSV_HEADER: &str = "state,kind,dressing,value_uh,l_tail_uh,k_nodes,iterations";

pub fn kind_label(kind: InteractionKind) -> &'static str {
    match kind {
        InteractionKind::Gaunt => "Gaunt",
        InteractionKind::ScalarRetardation => "ScalarRetardation",
        InteractionKind::Coulomb => "Coulomb",
    }
}

fn parse_kind(s: &str) -> Option<InteractionKind> {
    [InteractionKind::Gaunt, InteractionKind::ScalarRetardation, InteractionKind::Coulomb]
        .into_iter()
        .find(|&k| kind_label(k) == s)
}

/// `v` rounded to six significant digits: positional notation for
/// `1e-4 ≤ |v| < 1e6`, scientific otherwise.
pub fn format_sig6(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.5e}");
    let rounded: f64 = sci.parse().expect("formatted float parses");
    let exp = rounded.abs().log10().floor() as i32;
    if (-4..6).contains(&exp) {
        format!("{rounded:.*}", (5 - exp) as usize)
    } else {
        sci
    }
}

/// CSV text; `full` keeps round-trip precision instead of six digits.
pub fn csv_text(records: &[ContributionRecord], full: bool) -> String {
    let num = |v: f64| if full { format!("{v:e}") } else { format_sig6(v) };
    let mut s = format!("{CSV_HEADER}\n");
    for r in records {
        s += &format!(
            "{},{},{},{},{},{},{}\n",
            r.state,
            kind_label(r.kind),
            r.dressing.name(),
            num(r.value_uh),
            num(r.l_tail_uh),
            r.k_nodes,
            r.iterations
        );
    }
    s
}

/// Writes the six-digit CSV. An empty record set is an error and writes nothing.
pub fn emit_csv(records: &[ContributionRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidInput, "no records to write")));
    }
    std::fs::write(path, csv_text(records, false))?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<ContributionRecord>> {
    let bad = |line: usize, msg: &str| Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("csv line {line}: {msg}")));
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => return Err(bad(1, "missing header")),
    }
    lines
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(bad(i + 1, "expected 7 fields"));
            }
            Ok(ContributionRecord {
                state: f[0].to_string(),
                kind: parse_kind(f[1]).ok_or_else(|| bad(i + 1, "unknown kind"))?,
                dressing: Contribution::parse(f[2]).ok_or_else(|| bad(i + 1, "unknown dressing"))?,
                value_uh: f[3].parse().map_err(|_| bad(i + 1, "bad value"))?,
                l_tail_uh: f[4].parse().map_err(|_| bad(i + 1, "bad l tail"))?,
                k_nodes: f[5].parse().map_err(|_| bad(i + 1, "bad node count"))?,
                iterations: f[6].parse().map_err(|_| bad(i + 1, "bad iteration count"))?,
            })
        })
        .collect()
}
