//! Composite-snapshot CSV files: `element_index,subarray_index,real,imag`,
//! 0-based indices, one row per element of every subarray.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use pcdf::{ArrayGeometry, MeasurementMatrix};

use crate::error::{CliError, CliResult};

pub const HEADER: [&str; 4] = ["element_index", "subarray_index", "real", "imag"];

/// Writes rows in element-major order.
pub fn write_snapshot<W: Write>(out: W, x: &MeasurementMatrix) -> CliResult<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(HEADER)?;
    let data = x.data();
    for m in 0..data.nrows() {
        for k in 0..data.ncols() {
            let v = data[[m, k]];
            w.write_record([m.to_string(), k.to_string(), v.re.to_string(), v.im.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn parse_err(line: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("snapshot parse error at line {line}: {msg}"))
}

/// Parses a snapshot for the given geometry; every cell must appear exactly once.
pub fn read_snapshot<R: Read>(input: R, geometry: &ArrayGeometry) -> CliResult<MeasurementMatrix> {
    let (rows, cols) = (geometry.elements(), geometry.subarrays());
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = reader.headers().map_err(|e| parse_err(1, e))?.clone();
    if header.iter().map(str::trim).ne(HEADER) {
        return Err(parse_err(1, format!("expected header {}", HEADER.join(","))));
    }
    let mut cells: Array2<Option<Complex64>> = Array2::from_elem((rows, cols), None);
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2;
        let record = record.map_err(|e| parse_err(line, e))?;
        if record.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", record.len())));
        }
        let index = |j: usize| {
            record[j]
                .trim()
                .parse::<usize>()
                .map_err(|_| parse_err(line, format!("{} '{}' is not an index", HEADER[j], &record[j])))
        };
        let value = |j: usize| {
            record[j]
                .trim()
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("{} '{}' is not a number", HEADER[j], &record[j])))
        };
        let (m, k) = (index(0)?, index(1)?);
        let v = Complex64::new(value(2)?, value(3)?);
        if m >= rows || k >= cols {
            return Err(parse_err(
                line,
                format!("cell ({m}, {k}) outside the {rows}x{cols} geometry"),
            ));
        }
        if cells[[m, k]].replace(v).is_some() {
            return Err(parse_err(line, format!("duplicate cell (element {m}, subarray {k})")));
        }
    }
    let mut x = Array2::zeros((rows, cols));
    for ((m, k), v) in cells.indexed_iter() {
        x[[m, k]] = v.ok_or_else(|| {
            CliError::Io(format!("snapshot is missing cell (element {m}, subarray {k})"))
        })?;
    }
    Ok(MeasurementMatrix(x))
}

pub fn read_snapshot_file(path: &Path, geometry: &ArrayGeometry) -> CliResult<MeasurementMatrix> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    read_snapshot(file, geometry).map_err(|e| match e {
        CliError::Io(msg) => CliError::Io(format!("{}: {msg}", path.display())),
        other => other,
    })
}
