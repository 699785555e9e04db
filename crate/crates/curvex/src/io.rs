//! Dataset and training-history CSV files.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use curvex_core::dataset::{Dataset, Provenance};
use curvex_core::neural::EpochRecord;
use curvex_core::packet::{DataPacket, Sample, FEATURE_COUNT, FEATURE_NAMES};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TARGET_COLUMN: &str = "target";
pub const HISTORY_HEADER: [&str; 7] = [
    "epoch",
    "lr",
    "train_rmse",
    "train_mae",
    "valid_rmse",
    "valid_mae",
    "valid_maxae",
];

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        kind => Error::Format {
            path: path.into(),
            line,
            message: format!("{kind:?}"),
        },
    }
}

/// Writes the dataset with a header of the 28 feature names plus `target`.
/// Values use the shortest representation that parses back exactly.
pub fn write_dataset<W: Write>(ds: &Dataset, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = FEATURE_NAMES.to_vec();
    header.push(TARGET_COLUMN);
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(FEATURE_COUNT + 1);
    for s in &ds.samples {
        row.clear();
        row.extend(s.packet.features().iter().map(|v| v.to_string()));
        row.push(s.target.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset_csv(ds: &Dataset, path: &Path) -> Result<()> {
    write_dataset(ds, create(path)?).map_err(|e| csv_error(path, e))
}

/// Parses a dataset CSV; every sample gets the `External` provenance.
pub fn read_dataset<R: Read>(input: R, eta: u32, path: &Path) -> Result<Dataset> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = FEATURE_NAMES.iter().copied().chain([TARGET_COLUMN]);
    if header.len() != FEATURE_COUNT + 1 || !header.iter().eq(expected) {
        return Err(Error::Format {
            path: path.into(),
            line: 1,
            message: format!(
                "header must be the {FEATURE_COUNT} feature names followed by `{TARGET_COLUMN}`"
            ),
        });
    }
    let mut ds = Dataset::new(eta);
    let mut record = csv::StringRecord::new();
    let mut f = [0.0; FEATURE_COUNT];
    while r.read_record(&mut record).map_err(|e| csv_error(path, e))? {
        let line = record.position().map_or(0, |p| p.line());
        let bad = |message: String| Error::Format {
            path: path.into(),
            line,
            message,
        };
        if record.len() != FEATURE_COUNT + 1 {
            return Err(bad(format!(
                "expected {} fields, got {}",
                FEATURE_COUNT + 1,
                record.len()
            )));
        }
        let parse = |k: usize| -> Result<f64> {
            let v: f64 = record[k].trim().parse().map_err(|_| {
                bad(format!(
                    "column `{}`: not a number: {:?}",
                    &header[k], &record[k]
                ))
            })?;
            if !v.is_finite() {
                return Err(bad(format!("column `{}`: non-finite value", &header[k])));
            }
            Ok(v)
        };
        for (k, slot) in f.iter_mut().enumerate() {
            *slot = parse(k)?;
        }
        let target = parse(FEATURE_COUNT)?;
        ds.push(
            Sample {
                packet: DataPacket::from_features(&f),
                target,
            },
            Provenance::External,
        );
    }
    Ok(ds)
}

pub fn read_dataset_csv(path: &Path, eta: u32) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_dataset(std::io::BufReader::new(file), eta, path)
}

/// SHA-256 over the little-endian bytes of every feature and target, as hex.
pub fn dataset_digest(ds: &Dataset) -> String {
    let mut hasher = Sha256::new();
    for s in &ds.samples {
        for v in s.packet.features() {
            hasher.update(v.to_le_bytes());
        }
        hasher.update(s.target.to_le_bytes());
    }
    hex(&hasher.finalize())
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_history_csv(history: &[EpochRecord], path: &Path) -> Result<()> {
    let write = |w: BufWriter<File>| -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(HISTORY_HEADER)?;
        for r in history {
            w.write_record([
                r.epoch.to_string(),
                r.lr.to_string(),
                r.train_rmse.to_string(),
                r.train_mae.to_string(),
                r.valid_rmse.to_string(),
                r.valid_mae.to_string(),
                r.valid_maxae.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    write(create(path)?).map_err(|e| csv_error(path, e))
}

pub fn read_history_csv(path: &Path) -> Result<Vec<EpochRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |k: usize| -> Result<f64> {
            rec.get(k)
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| Error::Format {
                    path: path.into(),
                    line,
                    message: format!("bad `{}` value", HISTORY_HEADER[k]),
                })
        };
        out.push(EpochRecord {
            epoch: num(0)? as usize,
            lr: num(1)?,
            train_rmse: num(2)?,
            train_mae: num(3)?,
            valid_rmse: num(4)?,
            valid_mae: num(5)?,
            valid_maxae: num(6)?,
        });
    }
    Ok(out)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json {
        path: path.into(),
        message: e.to_string(),
    })?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| Error::Json {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Writes rows of `f64` under `header`.
pub fn write_table(header: &[&str], rows: &[Vec<f64>], path: &Path) -> Result<()> {
    let write = |w: BufWriter<File>| -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    };
    write(create(path)?).map_err(|e| csv_error(path, e))
}
