use std::fs;
use std::path::Path;

use serde::Serialize;

use super::IoError;
use crate::frap::FrapSample;

pub const RECOVERY_HEADER: [&str; 3] = ["time_s", "mean_concentration", "roi_area"];

fn csv_bytes(samples: &[FrapSample]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECOVERY_HEADER)?;
    for s in samples {
        w.write_record([
            format!("{:.16e}", s.time),
            format!("{:.16e}", s.mean_concentration),
            format!("{:.16e}", s.roi_area),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Recovery series as CSV text, 17 significant digits per value.
pub fn recovery_csv_string(samples: &[FrapSample]) -> String {
    String::from_utf8(csv_bytes(samples).expect("writing to memory cannot fail")).expect("CSV output is ASCII")
}

pub fn write_recovery_csv(path: &Path, samples: &[FrapSample]) -> Result<(), IoError> {
    fs::write(path, recovery_csv_string(samples)).map_err(|e| IoError::io(path, e))
}

/// Reads a recovery series. `time_s` and `mean_concentration` are required;
/// a missing `roi_area` column reads as NaN.
pub fn read_recovery_csv(path: &Path) -> Result<Vec<FrapSample>, IoError> {
    let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let column = |name: &str| headers.iter().position(|h| h == name);
    let missing = |name: &str| IoError::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: format!("missing column {name}"),
    };
    let time_col = column(RECOVERY_HEADER[0]).ok_or_else(|| missing(RECOVERY_HEADER[0]))?;
    let mean_col = column(RECOVERY_HEADER[1]).ok_or_else(|| missing(RECOVERY_HEADER[1]))?;
    let area_col = column(RECOVERY_HEADER[2]);

    let mut samples = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| IoError::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |col: usize| -> Result<f64, IoError> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|e| IoError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("bad number {raw:?}: {e}"),
            })
        };
        samples.push(FrapSample {
            time: field(time_col)?,
            mean_concentration: field(mean_col)?,
            roi_area: match area_col {
                Some(c) => field(c)?,
                None => f64::NAN,
            },
        });
    }
    Ok(samples)
}

/// Pretty-printed JSON.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| IoError::invalid(path, e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| IoError::io(path, e))
}
