//! CSV ingestion and emission for time series.
//!
//! Format: comma-separated UTF-8, '.' decimal separator, optional single
//! header row, LF or CRLF line endings, a UTF-8 byte order mark tolerated.
//! Values are written with the shortest representation that parses back to
//! the identical bits, so a write/read round trip is exact.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use micvar_core::timeseries::TimeSeries;
use nalgebra::DMatrix;

/// CSV-level failures, tagged with 1-based line (and column) numbers.
#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    /// A cell failed to parse as a number.
    #[error("parse error on line {line}: cell is not a number")]
    Parse {
        /// 1-based line number.
        line: u64,
    },
    /// A row has a different number of cells than the first row.
    #[error("ragged row on line {line}: width differs from the first row")]
    RaggedRow {
        /// 1-based line number.
        line: u64,
    },
    /// A cell parsed to NaN or infinity.
    #[error("non-finite value on line {line}, column {column}")]
    NonFinite {
        /// 1-based line number.
        line: u64,
        /// 1-based column number.
        column: usize,
    },
    /// The file holds no data rows.
    #[error("no data rows")]
    Empty,
    /// Underlying file system failure.
    #[error("{0}")]
    Io(#[from] std::io::Error),
    /// Malformed CSV structure (unbalanced quotes and similar).
    #[error("{0}")]
    Malformed(String),
}

fn record_line(record: &csv::StringRecord) -> u64 {
    record.position().map(|p| p.line()).unwrap_or(0)
}

/// Reads a rectangular numeric CSV into a [`TimeSeries`].
///
/// With `has_header` the first row supplies column names; otherwise the
/// columns are named `y1..yk`.
pub fn read_csv(path: &Path, has_header: bool) -> Result<TimeSeries, CsvError> {
    let raw = fs::read(path)?;
    // A leading byte order mark would otherwise stick to the first cell.
    let raw = raw.strip_prefix(b"\xef\xbb\xbf").unwrap_or(&raw);
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(raw);

    let names: Option<Vec<String>> = if has_header {
        let headers = reader
            .headers()
            .map_err(|e| CsvError::Malformed(e.to_string()))?;
        Some(headers.iter().map(str::to_owned).collect())
    } else {
        None
    };

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width: Option<usize> = None;
    for record in reader.records() {
        let record = record.map_err(|e| CsvError::Malformed(e.to_string()))?;
        // Skip completely blank lines.
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let line = record_line(&record);
        match width {
            None => width = Some(record.len()),
            Some(w) if record.len() != w => return Err(CsvError::RaggedRow { line }),
            Some(_) => {}
        }
        let mut row = Vec::with_capacity(record.len());
        for (j, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| CsvError::Parse { line })?;
            if !value.is_finite() {
                return Err(CsvError::NonFinite {
                    line,
                    column: j + 1,
                });
            }
            row.push(value);
        }
        rows.push(row);
    }

    let n = rows.len();
    let k = width.ok_or(CsvError::Empty)?;
    if n == 0 {
        return Err(CsvError::Empty);
    }
    if let Some(names) = &names {
        if names.len() != k {
            return Err(CsvError::RaggedRow { line: 1 });
        }
    }
    let values = DMatrix::from_fn(n, k, |i, j| rows[i][j]);
    let series = match names {
        Some(names) => TimeSeries::new(values, names),
        None => TimeSeries::from_values(values),
    };
    series.map_err(|e| CsvError::Malformed(e.to_string()))
}

/// Atomically writes `content` to `path`: a sibling temporary file is
/// written in full and renamed over the target, so no partial file is ever
/// observable.
pub fn write_atomic(path: &Path, content: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(dir) => tempfile::NamedTempFile::new_in(dir)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(content)?;
    tmp.flush()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

/// Renders a series as CSV text with a header row.
pub fn series_to_csv(series: &TimeSeries) -> String {
    let mut out = String::new();
    out.push_str(&series.names().join(","));
    out.push('\n');
    let values = series.values();
    for i in 0..values.nrows() {
        for j in 0..values.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", values[(i, j)]));
        }
        out.push('\n');
    }
    out
}

/// Writes a series to `path` as CSV with a header row, atomically.
pub fn write_csv(series: &TimeSeries, path: &Path) -> Result<(), CsvError> {
    write_atomic(path, series_to_csv(series).as_bytes())?;
    Ok(())
}
