//! Plain-text response files.
//!
//! Two line formats are accepted, one record per line:
//!
//! * `arm,pattern,count`, e.g. `E,10,358`, for aggregated frequencies;
//! * `arm,bits`, e.g. `C,01`, for one subject.
//!
//! `arm` is `E` or `C`. Blank lines, lines starting with `#`, and a header
//! line whose first field is `arm` are ignored.

use crate::error::{Error, Result};
use crate::model::{parse_pattern, JointCounts};
use crate::trial::Arm;

struct Record {
    line: usize,
    arm: Arm,
    cell: usize,
    outcomes: usize,
    count: Option<u64>,
}

fn records(text: &str) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields[0].eq_ignore_ascii_case("arm") {
            continue;
        }
        let fail = |message: String| Error::Parse { line, message };
        let arm = match fields[0] {
            "E" | "e" => Arm::Experimental,
            "C" | "c" => Arm::Control,
            other => return Err(fail(format!("unknown arm {other:?}; expected E or C"))),
        };
        let count = match fields.len() {
            2 => None,
            3 => Some(fields[2].parse::<u64>().map_err(|_| fail(format!("count {:?} is not a non-negative integer", fields[2])))?),
            n => return Err(fail(format!("expected 2 or 3 comma-separated fields, found {n}"))),
        };
        let (cell, outcomes) = parse_pattern(fields[1]).map_err(|e| fail(e.to_string()))?;
        out.push(Record { line, arm, cell, outcomes, count });
    }
    if out.is_empty() {
        return Err(Error::EmptyCounts);
    }
    let k = out[0].outcomes;
    if let Some(r) = out.iter().find(|r| r.outcomes != k) {
        return Err(Error::Parse { line: r.line, message: format!("pattern has {} bits, earlier lines have {k}", r.outcomes) });
    }
    Ok(out)
}

/// Pattern counts per arm, `(experimental, control)`. Both line formats
/// may be mixed; repeated patterns accumulate.
pub fn parse_counts(text: &str) -> Result<(JointCounts, JointCounts)> {
    let recs = records(text)?;
    let k = recs[0].outcomes;
    let q = crate::model::cell_count(k);
    let mut e = vec![0u64; q];
    let mut c = vec![0u64; q];
    for r in recs {
        let target = if r.arm == Arm::Experimental { &mut e } else { &mut c };
        target[r.cell] += r.count.unwrap_or(1);
    }
    Ok((JointCounts::new(e)?, JointCounts::new(c)?))
}

/// Subject-level responses in enrolment order: `(K, experimental cells,
/// control cells)`.
pub fn parse_subjects(text: &str) -> Result<(usize, Vec<usize>, Vec<usize>)> {
    let recs = records(text)?;
    let k = recs[0].outcomes;
    let mut e = Vec::new();
    let mut c = Vec::new();
    for r in recs {
        if r.count.is_some() {
            return Err(Error::Parse { line: r.line, message: "subject files take `arm,bits` records".into() });
        }
        if r.arm == Arm::Experimental { e.push(r.cell) } else { c.push(r.cell) }
    }
    Ok((k, e, c))
}

/// Renders counts in the `arm,pattern,count` format.
pub fn format_counts(experimental: &JointCounts, control: &JointCounts) -> String {
    let mut out = String::from("arm,pattern,count\n");
    for (tag, counts) in [('E', experimental), ('C', control)] {
        for (q, n) in counts.as_slice().iter().enumerate() {
            out.push_str(&format!("{tag},{},{n}\n", crate::model::pattern_label(q, counts.outcomes())));
        }
    }
    out
}
