use super::{parse_timestamp, FormatTable, LogRecord, SourceFile};

#[derive(Debug, Default)]
pub struct Assembled {
    pub records: Vec<LogRecord>,
    pub line_count: usize,
    pub warnings: Vec<String>,
}

/// Reads `file` (lossy UTF-8) and groups its lines into records.
pub fn assemble_records(file: &SourceFile, table: &FormatTable) -> std::io::Result<Assembled> {
    let bytes = std::fs::read(&file.path)?;
    let text = String::from_utf8_lossy(&bytes);
    let mut out = assemble_text(&text, file.index, table);
    if matches!(text, std::borrow::Cow::Owned(_)) {
        out.warnings.push(format!(
            "{}: invalid UTF-8 replaced with U+FFFD",
            file.path.display()
        ));
    }
    Ok(out)
}

/// A line with a parseable timestamp opens a record; every other line is
/// appended to the open record, or opens a timestamp-less one at file head.
pub fn assemble_text(text: &str, source: usize, table: &FormatTable) -> Assembled {
    let mut out = Assembled::default();
    let mut current: Option<LogRecord> = None;
    let mut unknown_zones: Vec<String> = Vec::new();

    let mut lines: Vec<&str> = text.split('\n').collect();
    if lines.last() == Some(&"") {
        lines.pop();
    }
    out.line_count = lines.len();

    for (i, line) in lines.into_iter().enumerate() {
        let n = i + 1;
        match parse_timestamp(line, table) {
            Some(ts) => {
                if let Some(z) = ts.unknown_zone {
                    if !unknown_zones.contains(&z) {
                        out.warnings.push(format!("line {n}: unknown zone {z}, read as UTC"));
                        unknown_zones.push(z);
                    }
                }
                push(&mut out.records, current.take());
                current = Some(LogRecord {
                    record_id: 0,
                    source,
                    line_start: n,
                    line_end: n,
                    timestamp: Some(ts.instant),
                    effective_ts: None,
                    raw: line.to_owned(),
                    body_offset: ts.prefix_len,
                });
            }
            None => match current.as_mut() {
                Some(rec) => {
                    rec.raw.push('\n');
                    rec.raw.push_str(line);
                    rec.line_end = n;
                }
                None => {
                    current = Some(LogRecord {
                        record_id: 0,
                        source,
                        line_start: n,
                        line_end: n,
                        timestamp: None,
                        effective_ts: None,
                        raw: line.to_owned(),
                        body_offset: 0,
                    })
                }
            },
        }
    }
    push(&mut out.records, current);
    out
}

fn push(records: &mut Vec<LogRecord>, rec: Option<LogRecord>) {
    // a lone blank line at file head carries no bytes
    if let Some(r) = rec.filter(|r| !r.raw.is_empty()) {
        records.push(r);
    }
}
