use super::{IngestError, SourceFile};
use globset::{Glob, GlobSet, GlobSetBuilder};
use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};
use walkdir::WalkDir;

const SNIFF_BYTES: usize = 8 * 1024;

#[derive(Debug, Default)]
pub struct Discovered {
    pub files: Vec<SourceFile>,
    pub warnings: Vec<String>,
}

fn build_set(patterns: &[String]) -> Result<Option<GlobSet>, IngestError> {
    if patterns.is_empty() {
        return Ok(None);
    }
    let mut b = GlobSetBuilder::new();
    for p in patterns {
        let g = Glob::new(p).map_err(|e| IngestError::BadGlob {
            pattern: p.clone(),
            message: e.to_string(),
        })?;
        b.add(g);
    }
    b.build().map(Some).map_err(|e| IngestError::BadGlob {
        pattern: patterns.join(","),
        message: e.to_string(),
    })
}

fn archive_kind(path: &Path, head: &[u8]) -> Option<&'static str> {
    const MAGIC: &[(&[u8], &str)] = &[
        (b"PK\x03\x04", "zip"),
        (b"PK\x05\x06", "zip"),
        (b"\x1f\x8b", "gzip"),
        (b"BZh", "bzip2"),
        (b"7z\xbc\xaf\x27\x1c", "7z"),
        (b"\xfd7zXZ\x00", "xz"),
    ];
    for (m, kind) in MAGIC {
        if head.starts_with(m) {
            return Some(kind);
        }
    }
    if head.len() > 262 && &head[257..262] == b"ustar" {
        return Some("tar");
    }
    let name = path.file_name()?.to_string_lossy().to_ascii_lowercase();
    for (ext, kind) in [
        (".zip", "zip"),
        (".tar", "tar"),
        (".tgz", "tar"),
        (".tar.gz", "tar"),
        (".gz", "gzip"),
        (".7z", "7z"),
    ] {
        if name.ends_with(ext) {
            return Some(kind);
        }
    }
    None
}

enum Sniff {
    Text(u64),
    Binary,
}

fn sniff(path: &Path) -> Result<Sniff, IngestError> {
    let read = || -> std::io::Result<(Vec<u8>, u64)> {
        let mut f = File::open(path)?;
        let size = f.metadata()?.len();
        let mut buf = Vec::with_capacity(SNIFF_BYTES);
        f.by_ref().take(SNIFF_BYTES as u64).read_to_end(&mut buf)?;
        Ok((buf, size))
    };
    let (head, size) = read().map_err(|source| IngestError::UnreadableRoot {
        path: path.to_path_buf(),
        source,
    })?;
    if let Some(kind) = archive_kind(path, &head) {
        return Err(IngestError::UnsupportedArchive { path: path.to_path_buf(), kind });
    }
    if head.contains(&0) {
        return Ok(Sniff::Binary);
    }
    Ok(Sniff::Text(size))
}

/// Lists the text files under `roots`, sorted by path.
///
/// Globs are matched against the path relative to its root. Binary files are
/// skipped silently, unreadable files with a warning. Archives are rejected.
pub fn discover<P: AsRef<Path>>(
    roots: &[P],
    include: &[String],
    exclude: &[String],
) -> Result<Discovered, IngestError> {
    let inc = build_set(include)?;
    let exc = build_set(exclude)?;
    let mut out = Discovered::default();
    let mut candidates: Vec<PathBuf> = Vec::new();

    for root in roots {
        let root = root.as_ref();
        let meta = std::fs::metadata(root).map_err(|source| IngestError::UnreadableRoot {
            path: root.to_path_buf(),
            source,
        })?;
        if meta.is_file() {
            candidates.push(root.to_path_buf());
            continue;
        }
        if let Err(source) = std::fs::read_dir(root) {
            return Err(IngestError::UnreadableRoot { path: root.to_path_buf(), source });
        }
        for entry in WalkDir::new(root).follow_links(true) {
            let entry = match entry {
                Ok(e) => e,
                Err(e) => {
                    out.warnings.push(format!("skipped unreadable entry: {e}"));
                    continue;
                }
            };
            if !entry.file_type().is_file() {
                continue;
            }
            let rel = entry.path().strip_prefix(root).unwrap_or(entry.path());
            if inc.as_ref().is_some_and(|s| !s.is_match(rel)) {
                continue;
            }
            if exc.as_ref().is_some_and(|s| s.is_match(rel)) {
                continue;
            }
            candidates.push(entry.into_path());
        }
    }
    candidates.sort();
    candidates.dedup();

    for path in candidates {
        match sniff(&path) {
            Ok(Sniff::Text(byte_size)) => out.files.push(SourceFile {
                index: out.files.len(),
                path,
                byte_size,
                line_count: 0,
            }),
            Ok(Sniff::Binary) => {}
            Err(e @ IngestError::UnsupportedArchive { .. }) => return Err(e),
            Err(e) => out.warnings.push(format!("skipped {}: {e}", path.display())),
        }
    }
    Ok(out)
}
