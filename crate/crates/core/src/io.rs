//! Plain-text file formats.
//!
//! | format | header                        | body                          |
//! |--------|-------------------------------|-------------------------------|
//! | mask   | `P1` / `<w> <h>`              | `h` rows of `w` 0/1 digits    |
//! | labels | `P2` / `<w> <h>` / `<maxval>` | `h` rows of `w` integers      |
//! | dtm    | `DTM <w> <h> <R>`             | `h` rows of `w` integers      |
//! | bps    | `BPS <w> <h> <K> <r_1..r_K>`  | `K` blocks of `h` 0/1 rows    |
//!
//! Writers emit exactly that layout with LF line endings, optionally with
//! `#` comment lines right after the first line. Readers accept any
//! whitespace between tokens and skip `#` comments to the end of a line.
//! Readers never clamp or repair values.
//!
//! Proposal lists are one proposal per line:
//! `<id> <x0> <y0> <x1> <y1> <score> [maskfile]`, where `maskfile` is a P1
//! mask relative to the proposal file. A mask whose size equals the box is
//! box-anchored; any other size is canvas-anchored.
//!
//! A stack read back from BPS has its radius cap set to its largest radius,
//! since the cap only matters for encoding.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::boxsim::RobustnessRecord;
use crate::codec::{BitPlaneStack, QuantizationScheme};
use crate::edt::TruncatedDistanceMap;
use crate::eval::EvalReport;
use crate::grid::{BBox, BinaryMask, BoxProposal, LabelMap, MaskAnchor};
use crate::{Error, Result};

struct Token<'a> {
    text: &'a str,
    line: usize,
}

struct Tokens<'a> {
    source: String,
    tokens: Vec<Token<'a>>,
    pos: usize,
    last_line: usize,
}

impl<'a> Tokens<'a> {
    fn new(text: &'a str, source: &str) -> Self {
        let tokens = text
            .lines()
            .enumerate()
            .flat_map(|(i, line)| {
                let content = line.split('#').next().unwrap_or("");
                content
                    .split_whitespace()
                    .map(move |t| Token { text: t, line: i + 1 })
            })
            .collect();
        Self {
            source: source.to_string(),
            tokens,
            pos: 0,
            last_line: text.lines().count().max(1),
        }
    }

    fn err(&self, line: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.source.clone(),
            line,
            message: message.into(),
        }
    }

    fn current_line(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.last_line, |t| t.line)
    }

    fn next(&mut self, what: &str) -> Result<&'a str> {
        match self.tokens.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.text)
            }
            None => Err(self.err(self.last_line, format!("unexpected end of file, expected {what}"))),
        }
    }

    fn expect(&mut self, magic: &str) -> Result<()> {
        let line = self.current_line();
        let got = self.next("magic token")?;
        if got != magic {
            return Err(self.err(line, format!("expected magic {magic:?}, found {got:?}")));
        }
        Ok(())
    }

    fn number<T: std::str::FromStr>(&mut self, what: &str) -> Result<T> {
        let line = self.current_line();
        let text = self.next(what)?;
        text.parse()
            .map_err(|_| self.err(line, format!("invalid {what}: {text:?}")))
    }

    fn dimension(&mut self, what: &str) -> Result<usize> {
        let line = self.current_line();
        let v: usize = self.number(what)?;
        if v == 0 {
            return Err(self.err(line, format!("{what} must be at least 1")));
        }
        Ok(v)
    }

    /// Reads `count` values, reporting expected vs found on truncation.
    fn values<T>(&mut self, count: usize, what: &str, mut parse: impl FnMut(&str, usize) -> Result<T>) -> Result<Vec<T>> {
        let available = self.tokens.len() - self.pos;
        if available < count {
            return Err(self.err(
                self.last_line,
                format!("truncated {what}: expected {count} values, found {available}"),
            ));
        }
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let t = &self.tokens[self.pos];
            self.pos += 1;
            out.push(parse(t.text, t.line)?);
        }
        Ok(out)
    }

    fn bits(&mut self, count: usize, what: &str) -> Result<Vec<bool>> {
        // plain PBM permits digits without separating whitespace
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let Some(t) = self.tokens.get(self.pos) else {
                return Err(self.err(
                    self.last_line,
                    format!("truncated {what}: expected {count} values, found {}", out.len()),
                ));
            };
            self.pos += 1;
            for c in t.text.chars() {
                match c {
                    '0' => out.push(false),
                    '1' => out.push(true),
                    _ => return Err(self.err(t.line, format!("non-binary digit {c:?} in {what}"))),
                }
            }
        }
        if out.len() > count {
            return Err(self.err(self.current_line(), format!("{what}: expected {count} values, found more")));
        }
        Ok(out)
    }

    fn finish(&self) -> Result<()> {
        match self.tokens.get(self.pos) {
            None => Ok(()),
            Some(t) => Err(self.err(
                t.line,
                format!("trailing data: {} extra values", self.tokens.len() - self.pos),
            )),
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn push_comments(out: &mut String, comments: &[String]) {
    for c in comments {
        out.push_str("# ");
        out.push_str(c);
        out.push('\n');
    }
}

fn push_bit_rows(out: &mut String, mask: &BinaryMask) {
    for row in mask.bits().chunks(mask.width()) {
        let line: Vec<&str> = row.iter().map(|&b| if b { "1" } else { "0" }).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

fn push_int_rows(out: &mut String, values: &[u32], width: usize) {
    for row in values.chunks(width) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn parse_mask(text: &str, source: &str) -> Result<BinaryMask> {
    let mut t = Tokens::new(text, source);
    t.expect("P1")?;
    let w = t.dimension("width")?;
    let h = t.dimension("height")?;
    let bits = t.bits(w * h, "pixel data")?;
    t.finish()?;
    BinaryMask::from_bits(w, h, bits)
}

pub fn format_mask(mask: &BinaryMask, comments: &[String]) -> String {
    let mut out = String::from("P1\n");
    push_comments(&mut out, comments);
    let _ = writeln!(out, "{} {}", mask.width(), mask.height());
    push_bit_rows(&mut out, mask);
    out
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    let path = path.as_ref();
    parse_mask(&read_text(path)?, &path.display().to_string())
}

pub fn write_mask(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    write_mask_with_comments(path, mask, &[])
}

pub fn write_mask_with_comments(path: impl AsRef<Path>, mask: &BinaryMask, comments: &[String]) -> Result<()> {
    write_text(path.as_ref(), &format_mask(mask, comments))
}

pub fn parse_label_map(text: &str, source: &str) -> Result<LabelMap> {
    let mut t = Tokens::new(text, source);
    t.expect("P2")?;
    let w = t.dimension("width")?;
    let h = t.dimension("height")?;
    let maxval: u32 = t.number("maxval")?;
    let labels = t.values(w * h, "label data", |s, line| {
        let v: i64 = s.parse().map_err(|_| Error::Parse {
            path: source.to_string(),
            line,
            message: format!("invalid label {s:?}"),
        })?;
        if v < 0 || v > maxval as i64 {
            return Err(Error::Parse {
                path: source.to_string(),
                line,
                message: format!("label {v} outside [0, {maxval}]"),
            });
        }
        Ok(v as u32)
    })?;
    t.finish()?;
    LabelMap::from_labels(w, h, labels)
}

pub fn format_label_map(map: &LabelMap, comments: &[String]) -> String {
    let mut out = String::from("P2\n");
    push_comments(&mut out, comments);
    let _ = writeln!(out, "{} {}\n{}", map.width(), map.height(), map.max_label());
    push_int_rows(&mut out, map.labels(), map.width());
    out
}

pub fn read_label_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    let path = path.as_ref();
    parse_label_map(&read_text(path)?, &path.display().to_string())
}

pub fn write_label_map(path: impl AsRef<Path>, map: &LabelMap) -> Result<()> {
    write_text(path.as_ref(), &format_label_map(map, &[]))
}

pub fn parse_dtm(text: &str, source: &str) -> Result<TruncatedDistanceMap> {
    let mut t = Tokens::new(text, source);
    t.expect("DTM")?;
    let w = t.dimension("width")?;
    let h = t.dimension("height")?;
    let cap_line = t.current_line();
    let cap: u32 = t.number("radius cap")?;
    if cap == 0 {
        return Err(t.err(cap_line, "radius cap must be at least 1"));
    }
    let values = t.values(w * h, "distance data", |s, line| {
        let v: i64 = s.parse().map_err(|_| Error::Parse {
            path: source.to_string(),
            line,
            message: format!("invalid distance {s:?}"),
        })?;
        if v < 0 || v > cap as i64 {
            return Err(Error::Parse {
                path: source.to_string(),
                line,
                message: format!("distance {v} outside [0, {cap}]"),
            });
        }
        Ok(v as u32)
    })?;
    t.finish()?;
    TruncatedDistanceMap::new(w, h, values, cap)
}

pub fn format_dtm(dmap: &TruncatedDistanceMap, comments: &[String]) -> String {
    let mut out = format!("DTM {} {} {}\n", dmap.width(), dmap.height(), dmap.radius_cap());
    push_comments(&mut out, comments);
    push_int_rows(&mut out, dmap.values(), dmap.width());
    out
}

pub fn read_dtm(path: impl AsRef<Path>) -> Result<TruncatedDistanceMap> {
    let path = path.as_ref();
    parse_dtm(&read_text(path)?, &path.display().to_string())
}

pub fn write_dtm(path: impl AsRef<Path>, dmap: &TruncatedDistanceMap) -> Result<()> {
    write_dtm_with_comments(path, dmap, &[])
}

pub fn write_dtm_with_comments(path: impl AsRef<Path>, dmap: &TruncatedDistanceMap, comments: &[String]) -> Result<()> {
    write_text(path.as_ref(), &format_dtm(dmap, comments))
}

/// Parses a bit-plane stack. With `lax` the one-hot check is skipped.
pub fn parse_bps(text: &str, source: &str, lax: bool) -> Result<BitPlaneStack> {
    let mut t = Tokens::new(text, source);
    t.expect("BPS")?;
    let w = t.dimension("width")?;
    let h = t.dimension("height")?;
    let k_line = t.current_line();
    let k: usize = t.number("plane count")?;
    if k < 2 {
        return Err(t.err(k_line, format!("plane count {k} < 2")));
    }
    let radii_line = t.current_line();
    let radii = (0..k).map(|_| t.number::<u32>("radius")).collect::<Result<Vec<_>>>()?;
    let cap = radii.last().copied().unwrap_or(0).max(1);
    let scheme = QuantizationScheme::new(radii, cap).map_err(|e| t.err(radii_line, e.to_string()))?;
    let planes = (0..k)
        .map(|n| {
            let bits = t.bits(w * h, &format!("plane {}", n + 1))?;
            BinaryMask::from_bits(w, h, bits)
        })
        .collect::<Result<Vec<_>>>()?;
    t.finish()?;
    let stack = BitPlaneStack::from_planes(planes, scheme)?;
    if !lax {
        stack.check_one_hot()?;
    }
    Ok(stack)
}

pub fn format_bps(stack: &BitPlaneStack, comments: &[String]) -> String {
    let radii: Vec<String> = stack.scheme().radii().iter().map(u32::to_string).collect();
    let mut out = format!(
        "BPS {} {} {} {}\n",
        stack.width(),
        stack.height(),
        stack.bins(),
        radii.join(" ")
    );
    push_comments(&mut out, comments);
    for plane in stack.planes() {
        push_bit_rows(&mut out, plane);
    }
    out
}

pub fn read_bps(path: impl AsRef<Path>, lax: bool) -> Result<BitPlaneStack> {
    let path = path.as_ref();
    parse_bps(&read_text(path)?, &path.display().to_string(), lax)
}

pub fn write_bps(path: impl AsRef<Path>, stack: &BitPlaneStack) -> Result<()> {
    write_bps_with_comments(path, stack, &[])
}

pub fn write_bps_with_comments(path: impl AsRef<Path>, stack: &BitPlaneStack, comments: &[String]) -> Result<()> {
    write_text(path.as_ref(), &format_bps(stack, comments))
}

/// Reads a proposal list, loading referenced masks relative to its directory.
pub fn read_proposals(path: impl AsRef<Path>) -> Result<Vec<BoxProposal>> {
    let path = path.as_ref();
    let text = read_text(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let source = path.display().to_string();
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| Error::Parse {
            path: source.clone(),
            line: line_no,
            message,
        };
        let content = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 6 && fields.len() != 7 {
            return Err(err(format!("expected 6 or 7 fields, found {}", fields.len())));
        }
        let int = |s: &str, what: &str| s.parse::<i64>().map_err(|_| err(format!("invalid {what} {s:?}")));
        let id = fields[0]
            .parse::<u32>()
            .map_err(|_| err(format!("invalid id {:?}", fields[0])))?;
        let (x0, y0) = (int(fields[1], "x0")?, int(fields[2], "y0")?);
        let (x1, y1) = (int(fields[3], "x1")?, int(fields[4], "y1")?);
        let score: f64 = fields[5]
            .parse()
            .map_err(|_| err(format!("invalid score {:?}", fields[5])))?;
        let bbox = BBox::new(x0, y0, x1, y1).map_err(|e| err(e.to_string()))?;
        let mut proposal = BoxProposal::new(id, bbox, score).map_err(|e| err(e.to_string()))?;
        if let Some(&mask_file) = fields.get(6) {
            let mask = read_mask(base.join(mask_file))?;
            let anchor = if mask.width() as i64 == bbox.width() && mask.height() as i64 == bbox.height() {
                MaskAnchor::Box
            } else {
                MaskAnchor::Canvas
            };
            proposal = proposal.with_mask(mask, anchor).map_err(|e| err(e.to_string()))?;
        }
        out.push(proposal);
    }
    Ok(out)
}

/// Writes a proposal list; masks go to `<stem>.<id>.pbm` next to it.
pub fn write_proposals(path: impl AsRef<Path>, proposals: &[BoxProposal]) -> Result<()> {
    let path = path.as_ref();
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "proposals".into());
    let mut out = String::new();
    for p in proposals {
        let b = p.bbox;
        let _ = write!(out, "{} {} {} {} {} {}", p.id, b.x0, b.y0, b.x1, b.y1, p.score);
        if let Some(mask) = &p.mask {
            let name = format!("{stem}.{}.pbm", p.id);
            write_mask(dir.join(&name), mask)?;
            let _ = write!(out, " {name}");
        }
        out.push('\n');
    }
    write_text(path, &out)
}

/// Comment lines followed by CSV rows; every row is written as strings.
pub fn format_csv(comments: &[String], header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    push_comments(&mut out, comments);
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    let bytes = w.into_inner().expect("in-memory flush");
    out.push_str(std::str::from_utf8(&bytes).expect("utf-8 fields"));
    out
}

pub fn format_records_csv(records: &[RobustnessRecord], comments: &[String]) -> String {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.dx.to_string(),
                r.dy.to_string(),
                format!("{:.6}", r.sx),
                format!("{:.6}", r.sy),
                format!("{:.6}", r.iou_beyond),
                format!("{:.6}", r.iou_inside),
            ]
        })
        .collect();
    format_csv(comments, &["dx", "dy", "sx", "sy", "iou_beyond", "iou_inside"], &rows)
}

pub fn write_records_csv(path: impl AsRef<Path>, records: &[RobustnessRecord], comments: &[String]) -> Result<()> {
    write_text(path.as_ref(), &format_records_csv(records, comments))
}

pub fn format_report_csv(report: &EvalReport, comments: &[String]) -> String {
    let row = |section: &str, key: String, value: String| vec![section.to_string(), key, value];
    let mut rows = Vec::new();
    for (t, r) in &report.recall_curve {
        rows.push(row("recall", format!("{t:.2}"), format!("{r:.6}")));
    }
    for (n, ar) in &report.ar_at_n {
        rows.push(row("ar", n.to_string(), format!("{ar:.6}")));
    }
    for (t, ap) in &report.ap_at {
        rows.push(row("ap", format!("{t:.2}"), format!("{ap:.6}")));
    }
    rows.push(row("count", "proposals".into(), report.num_proposals.to_string()));
    rows.push(row("count", "gts".into(), report.num_gts.to_string()));
    format_csv(comments, &["section", "key", "value"], &rows)
}

pub fn write_report_csv(path: impl AsRef<Path>, report: &EvalReport, comments: &[String]) -> Result<()> {
    write_text(path.as_ref(), &format_report_csv(report, comments))
}

pub fn write_text_file(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_text(path.as_ref(), text)
}
