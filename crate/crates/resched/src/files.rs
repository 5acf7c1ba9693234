//! Reading and writing instances, schedules and checkpoints.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use resched_core::env::DispatchRecord;
use resched_core::instance::{parse, serialize, Format, Instance};
use resched_core::nn::{decode_checkpoint, encode_checkpoint};
use resched_core::PolicyParams;

use crate::CliError;

/// Guesses the format from the extension and layout: `.fjs` files and
/// headers carrying an average are FJSP, a body of exactly `2n` lines is
/// Taillard, anything else OR-Library.
pub fn detect_format(path: &Path, text: &str) -> Format {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("fjs")) {
        return Format::Fjsp;
    }
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let Some(header) = lines.next() else { return Format::Orlib };
    let head: Vec<&str> = header.split_whitespace().collect();
    if head.len() == 3 && head[2].contains('.') {
        return Format::Fjsp;
    }
    let n: usize = head.first().and_then(|t| t.parse().ok()).unwrap_or(0);
    let body: Vec<&str> = lines.collect();
    if n > 0 && body.len() == 2 * n {
        return Format::Taillard;
    }
    // an FJSP job line starts with its operation count, so its token count
    // is odd whenever the first operation has a single option; OR-Library
    // lines always hold pairs
    if body.iter().any(|l| l.split_whitespace().count() % 2 == 1) {
        return Format::Fjsp;
    }
    Format::Orlib
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(CliError::io(path))
}

pub fn read_instance(path: &Path, format: Option<Format>) -> Result<Instance, CliError> {
    let text = read_text(path)?;
    let format = format.unwrap_or_else(|| detect_format(path, &text));
    parse(&text, format).map_err(|e| CliError::Data(format!("{}: {e} (read as {format})", path.display())))
}

/// Writes through a temporary sibling and renames it into place, so readers
/// never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut file = fs::File::create(&tmp).map_err(CliError::io(&tmp))?;
    file.write_all(bytes).and_then(|_| file.sync_all()).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

pub fn write_instance(path: &Path, instance: &Instance, format: Format) -> Result<(), CliError> {
    let text = serialize(instance, format).map_err(|e| CliError::Data(e.to_string()))?;
    fs::write(path, text).map_err(CliError::io(path))
}

pub fn save_checkpoint(path: &Path, params: &PolicyParams) -> Result<(), CliError> {
    write_atomic(path, &encode_checkpoint(params))
}

pub fn load_checkpoint(path: &Path) -> Result<PolicyParams, CliError> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    decode_checkpoint(&bytes).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Parses `job,op,machine,start,end` rows; a header row is allowed.
pub fn parse_gantt(text: &str) -> Result<Vec<DispatchRecord>, CliError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || (i == 0 && line.starts_with("job")) {
            continue;
        }
        let bad = || CliError::Data(format!("schedule line {}: expected job,op,machine,start,end", i + 1));
        let v: Vec<u64> = line.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect::<Result<_, _>>()?;
        if v.len() != 5 || v[3] > u64::from(u32::MAX) || v[4] > u64::from(u32::MAX) {
            return Err(bad());
        }
        out.push(DispatchRecord {
            job: v[0] as usize,
            op: v[1] as usize,
            machine: v[2] as usize,
            start: v[3] as u32,
            end: v[4] as u32,
        });
    }
    Ok(out)
}

/// Regular files of `dir`, sorted by name.
pub fn list_dir(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(CliError::io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    Ok(files)
}
