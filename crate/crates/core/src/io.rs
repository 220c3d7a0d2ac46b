//! File formats: trajectories as JSON lines, models and reports as JSON,
//! figure data as CSV.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::domain::Trajectory;
use crate::error::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// One validated trajectory per non-empty line.
pub fn read_trajectories(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let out: Vec<Trajectory> = read_jsonl(path)?;
    for (i, traj) in out.iter().enumerate() {
        traj.validate()
            .map_err(|e| Error::Data(format!("{}: trajectory {}: {e}", path.display(), i + 1)))?;
    }
    Ok(out)
}

pub fn write_trajectories<'a>(
    path: impl AsRef<Path>,
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
) -> Result<()> {
    write_jsonl(path, trajectories)
}

/// One JSON value per line.
pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: impl AsRef<Path>,
    values: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for v in values {
        serde_json::to_writer(&mut w, v).map_err(|e| Error::Json {
            context: path.display().to_string(),
            source: e,
        })?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One value per non-empty line; errors name the offending line.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Json {
            context: format!("{}:{}", path.display(), i + 1),
            source: e,
        })?);
    }
    Ok(out)
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json {
        context: path.display().to_string(),
        source: e,
    })
}

/// Writes `header` then one record per row; an empty `rows` gives a
/// header-only file.
pub fn write_csv<T: Serialize>(path: impl AsRef<Path>, header: &[&str], rows: &[T]) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| Error::Data(format!("{}: {e}", path.display()));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(create(path)?);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{DayOutcome, ItemId};

    #[test]
    fn trajectories_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        let t = Trajectory {
            user_id: 3,
            start: 2,
            end: 3,
            taste: vec![0.5, -1.0],
            days: vec![
                DayOutcome::new(vec![ItemId(1)], vec![30.0]).unwrap(),
                DayOutcome::new(vec![ItemId(2)], vec![0.0]).unwrap(),
            ],
            latent_type_id: 0,
        };
        write_trajectories(&path, [&t, &t]).unwrap();
        assert_eq!(read_trajectories(&path).unwrap(), vec![t.clone(), t]);
    }

    #[test]
    fn malformed_line_names_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"nope\": 1}\n").unwrap();
        let err = read_trajectories(&path).unwrap_err().to_string();
        assert!(err.contains("bad.jsonl:1"), "{err}");
    }

    #[test]
    fn empty_csv_has_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.csv");
        write_csv::<(u32, f64)>(&path, &["a", "b"], &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n");
        write_csv(&path, &["a", "b"], &[(1u32, 0.5f64)]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "a,b\n1,0.5\n");
    }

    #[test]
    fn missing_file_reports_path() {
        let err = read_json::<Vec<u32>>("/nonexistent/models.json").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/models.json"));
    }
}
