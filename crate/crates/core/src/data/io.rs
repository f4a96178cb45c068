use std::fs;
use std::io::Write;
use std::path::Path;

use super::SignalTensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"STFD";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalFormat {
    Binary,
    Csv,
}

impl SignalFormat {
    /// `.csv` is CSV, everything else the binary format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => SignalFormat::Csv,
            _ => SignalFormat::Binary,
        }
    }
}

/// Loads a signal file. `features` is only consulted for CSV, where each row
/// holds `nodes * features` values.
pub fn load_signal(path: impl AsRef<Path>, format: SignalFormat, features: usize) -> Result<SignalTensor> {
    let path = path.as_ref();
    match format {
        SignalFormat::Binary => read_binary(&fs::read(path)?),
        SignalFormat::Csv => read_csv(&fs::read_to_string(path)?, features),
    }
}

/// Layout: `STFD`, u32 version, u32 steps, u32 nodes, u32 features, then
/// little-endian f32 values `[t][n][k]`.
pub fn read_binary(bytes: &[u8]) -> Result<SignalTensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::ingestion_offset(
            bytes.len(),
            format!("header needs {HEADER_LEN} bytes, file has {}", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::ingestion_offset(0, "bad magic, expected STFD"));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(Error::ingestion_offset(
            4,
            format!("unsupported version {version}"),
        ));
    }
    let (steps, nodes, features) = (word(8) as usize, word(12) as usize, word(16) as usize);
    let count = steps
        .checked_mul(nodes)
        .and_then(|v| v.checked_mul(features))
        .ok_or_else(|| Error::ingestion_offset(8, "shape overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 4 {
        return Err(Error::ingestion_offset(
            HEADER_LEN + payload.len().min(count * 4),
            format!(
                "shape mismatch: {steps}x{nodes}x{features} needs {} payload bytes, found {}",
                count * 4,
                payload.len()
            ),
        ));
    }
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::ingestion_offset(HEADER_LEN + 4 * i, "non-finite value"));
        }
        values.push(v);
    }
    SignalTensor::new(steps, nodes, features, values).map_err(|e| Error::ingestion_offset(8, e.to_string()))
}

pub fn write_binary<W: Write>(tensor: &SignalTensor, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    for v in [
        VERSION,
        tensor.steps as u32,
        tensor.nodes as u32,
        tensor.features as u32,
    ] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in tensor.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// A header row, then one row per step with `nodes * features` cells. Empty
/// cells are missing observations: stored as 0 and masked out.
pub fn read_csv(text: &str, features: usize) -> Result<SignalTensor> {
    if features == 0 {
        return Err(Error::Usage("features must be positive".into()));
    }
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::ingestion_line(1, "missing header row"))?;
    let columns = header.split(',').count();
    if columns % features != 0 {
        return Err(Error::ingestion_line(
            1,
            format!("{columns} columns do not divide into {features} features per node"),
        ));
    }
    let mut values = Vec::new();
    let mut mask = Vec::new();
    let mut steps = 0;
    for (idx, line) in lines {
        let line_no = idx + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != columns {
            return Err(Error::ingestion_line(
                line_no,
                format!("expected {columns} cells, found {}", cells.len()),
            ));
        }
        for cell in cells {
            if cell.is_empty() {
                values.push(0.0);
                mask.push(false);
                continue;
            }
            let v: f32 = cell
                .parse()
                .map_err(|_| Error::ingestion_line(line_no, format!("non-numeric cell `{cell}`")))?;
            if !v.is_finite() {
                return Err(Error::ingestion_line(
                    line_no,
                    format!("non-finite cell `{cell}`"),
                ));
            }
            values.push(v);
            mask.push(true);
        }
        steps += 1;
    }
    if steps == 0 {
        return Err(Error::ingestion_line(2, "no data rows"));
    }
    let tensor = SignalTensor::new(steps, columns / features, features, values)
        .map_err(|e| Error::ingestion_line(1, e.to_string()))?;
    if mask.iter().all(|&m| m) {
        Ok(tensor)
    } else {
        tensor.with_mask(mask)
    }
}

pub fn write_csv<W: Write>(tensor: &SignalTensor, mut w: W) -> std::io::Result<()> {
    let header: Vec<String> = (0..tensor.nodes)
        .flat_map(|n| {
            (0..tensor.features).map(move |k| {
                if tensor.features == 1 {
                    format!("n{n}")
                } else {
                    format!("n{n}_f{k}")
                }
            })
        })
        .collect();
    writeln!(w, "{}", header.join(","))?;
    let mask = tensor.mask();
    for (t, row) in tensor.values().chunks(tensor.step_len()).enumerate() {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, v)| match mask {
                Some(m) if !m[t * tensor.step_len() + i] => String::new(),
                _ => v.to_string(),
            })
            .collect();
        writeln!(w, "{}", cells.join(","))?;
    }
    Ok(())
}

/// `node,cluster` rows.
pub fn write_labels<W: Write>(labels: &[usize], mut w: W) -> std::io::Result<()> {
    writeln!(w, "node,cluster")?;
    for (node, cluster) in labels.iter().enumerate() {
        writeln!(w, "{node},{cluster}")?;
    }
    Ok(())
}
