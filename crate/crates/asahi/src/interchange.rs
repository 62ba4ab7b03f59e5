//! Line-oriented detection records: `image_id class_id score x1 y1 x2 y2`.
//! Floats are written with six decimals.

use std::fmt::Write as _;
use std::io::{self, Write};

use asahi_core::{BBox, Detection, Origin};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

/// One parsed record. The origin of a parsed detection is unknown and set to
/// full inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub image_id: u64,
    pub detection: Detection,
}

pub fn format_line(image_id: u64, d: &Detection) -> String {
    let [x1, y1, x2, y2] = d.bbox.corners();
    format!(
        "{image_id} {} {:.6} {:.6} {:.6} {:.6} {:.6}",
        d.class_id, d.score, x1, y1, x2, y2
    )
}

pub fn format_records<'a, I>(records: I) -> String
where
    I: IntoIterator<Item = (u64, &'a Detection)>,
{
    let mut s = String::new();
    for (id, d) in records {
        let _ = writeln!(s, "{}", format_line(id, d));
    }
    s
}

pub fn write_records<'a, W, I>(mut out: W, records: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = (u64, &'a Detection)>,
{
    out.write_all(format_records(records).as_bytes())?;
    out.flush()
}

/// Parses every non-blank line. Line numbers in errors are 1-based.
pub fn parse(text: &str) -> Result<Vec<Record>, ParseError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ParseError { line: i + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 7 {
            return Err(err(format!("expected 7 fields, found {}", fields.len())));
        }
        let image_id: u64 = fields[0]
            .parse()
            .map_err(|_| err(format!("bad image id {:?}", fields[0])))?;
        let class_id: u32 = fields[1]
            .parse()
            .map_err(|_| err(format!("bad class id {:?}", fields[1])))?;
        let mut nums = [0.0f64; 5];
        for (k, f) in fields[2..].iter().enumerate() {
            nums[k] = f
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(format!("bad number {f:?}")))?;
        }
        let bbox = BBox::new(nums[1], nums[2], nums[3], nums[4]).map_err(|e| err(e.to_string()))?;
        out.push(Record {
            image_id,
            detection: Detection::new(class_id, nums[0], bbox, Origin::FullInference),
        });
    }
    Ok(out)
}
