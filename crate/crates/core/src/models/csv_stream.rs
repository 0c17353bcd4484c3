//! CSV observation files: a header row, the response in the first column and
//! covariates `x_1..x_{d_x}` in the remaining columns.

use std::fs::File;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::Observation;
use crate::error::{Error, Result};

/// Lazily parsed CSV stream; yields one observation per data row.
pub struct CsvStream {
    records: csv::StringRecordsIntoIter<File>,
    dx: usize,
    row: u64,
}

impl CsvStream {
    /// Opens `path`, checking that the header has `1 + dx` columns.
    pub fn open(path: impl AsRef<Path>, dx: usize) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let cols = reader
            .headers()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .len();
        if cols != dx + 1 {
            return Err(Error::Dimension { expected: dx + 1, got: cols });
        }
        Ok(Self { records: reader.into_records(), dx, row: 1 })
    }
}

impl Iterator for CsvStream {
    type Item = Result<Observation>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.records.next()?;
        self.row += 1;
        let row = self.row;
        let parsed = rec
            .map_err(|e| Error::Data(format!("row {row}: {e}")))
            .and_then(|r| {
                if r.len() != self.dx + 1 {
                    return Err(Error::Dimension { expected: self.dx + 1, got: r.len() });
                }
                let mut vals = r.iter().map(|f| {
                    f.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Data(format!("row {row}: {e}")))
                });
                let z = vals.next().expect("non-empty record")?;
                let x = vals.collect::<Result<Vec<_>>>()?;
                Ok(Observation { z, x })
            });
        Some(parsed)
    }
}

/// Reads a whole CSV file, optionally permuting the rows with a seeded shuffle.
pub fn read_csv(path: impl AsRef<Path>, dx: usize, shuffle_seed: Option<u64>) -> Result<Vec<Observation>> {
    let mut rows = CsvStream::open(path, dx)?.collect::<Result<Vec<_>>>()?;
    if let Some(seed) = shuffle_seed {
        rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(name: &str, body: &str) -> std::path::PathBuf {
        let p = std::env::temp_dir().join(format!("pb-csv-{}-{name}.csv", std::process::id()));
        let mut f = File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn parses_rows() {
        let p = write_tmp("ok", "z,x1,x2\n1,1.0,0.5\n0,1.0,-2\n");
        let rows: Vec<_> = CsvStream::open(&p, 2).unwrap().collect::<Result<_>>().unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[1], Observation { z: 0.0, x: vec![1.0, -2.0] });
        let shuffled = read_csv(&p, 2, Some(7)).unwrap();
        assert_eq!(shuffled.len(), 2);
    }

    #[test]
    fn rejects_wrong_width() {
        let p = write_tmp("bad", "z,x1\n1,2\n");
        assert!(matches!(CsvStream::open(&p, 2), Err(Error::Dimension { .. })));
    }

    #[test]
    fn reports_bad_number() {
        let p = write_tmp("nan", "z,x1\n1,abc\n");
        let first = CsvStream::open(&p, 1).unwrap().next().unwrap();
        assert!(matches!(first, Err(Error::Data(_))));
    }
}
