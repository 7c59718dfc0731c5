use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::series::TimeSeries;

/// Read a comma-separated file with a header row into a [`TimeSeries`].
///
/// `date_column` names a column kept as timestamps instead of a channel.
/// When it is `None`, a column headed `date` (any case) is used if present.
/// Every other column must hold a finite number in every row; blank, `NaN`
/// and unparsable cells are reported with their 1-based data row (the
/// header is row 0) and column name.
pub fn load_csv(path: impl AsRef<Path>, date_column: Option<&str>) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = ::csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let format_err = |message: String| Error::CsvFormat {
        path: path.to_path_buf(),
        message,
    };

    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| format_err(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let date_idx = match date_column {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| format_err(format!("date column '{name}' not found in header")))?,
        ),
        None => headers.iter().position(|h| h.eq_ignore_ascii_case("date")),
    };
    let channels: Vec<usize> = (0..headers.len()).filter(|&c| Some(c) != date_idx).collect();
    if channels.is_empty() {
        return Err(format_err("no channel columns".into()));
    }

    let mut data: Vec<Vec<f64>> = vec![Vec::new(); channels.len()];
    let mut stamps = date_idx.map(|_| Vec::new());
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| format_err(format!("row {row}: {e}")))?;
        if record.len() != headers.len() {
            return Err(format_err(format!(
                "row {row}: expected {} fields, found {}",
                headers.len(),
                record.len()
            )));
        }
        if let (Some(d), Some(stamps)) = (date_idx, stamps.as_mut()) {
            stamps.push(record[d].to_string());
        }
        for (k, &c) in channels.iter().enumerate() {
            let cell = record[c].trim();
            let cell_err = |message: &str| Error::CsvCell {
                path: path.to_path_buf(),
                row,
                column: headers[c].clone(),
                message: message.to_string(),
            };
            if cell.is_empty() {
                return Err(cell_err("empty cell"));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| cell_err(&format!("cannot parse '{cell}' as a number")))?;
            if !v.is_finite() {
                return Err(cell_err(&format!("non-finite value '{cell}'")));
            }
            data[k].push(v);
        }
    }
    let t = data[0].len();
    if t == 0 {
        return Err(format_err("no data rows".into()));
    }
    let values = DMatrix::from_vec(t, channels.len(), data.concat());
    let names = channels.iter().map(|&c| headers[c].clone()).collect();
    TimeSeries::new(values, names, stamps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn three_rows_two_channels() {
        let f = write("date,a,b\n2020-01-01,1,2\n2020-01-02,3,4\n2020-01-03,5,6.5\n");
        let s = load_csv(f.path(), None).unwrap();
        assert_eq!((s.len(), s.n_channels()), (3, 2));
        assert_eq!(s.channel(1).unwrap(), &[2.0, 4.0, 6.5]);
        assert_eq!(s.channel_names(), &["a", "b"]);
        assert_eq!(s.timestamps().unwrap()[2], "2020-01-03");
    }

    #[test]
    fn no_date_column() {
        let s = load_csv(write("x\n1\n2\n").path(), None).unwrap();
        assert!(s.timestamps().is_none());
        assert_eq!(s.len(), 2);
    }

    #[test]
    fn named_date_column() {
        let s = load_csv(write("v,when\n1,a\n2,b\n").path(), Some("when")).unwrap();
        assert_eq!(s.channel_names(), &["v"]);
        assert!(load_csv(write("v\n1\n").path(), Some("when")).is_err());
    }

    #[test]
    fn blank_cell_names_row_and_column() {
        let err = load_csv(write("date,a,b\nd1,1,2\nd2,,4\n").path(), None).unwrap_err();
        match &err {
            Error::CsvCell { row, column, .. } => assert_eq!((*row, column.as_str()), (2, "a")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 2, column 'a'"));
    }

    #[test]
    fn nan_and_garbage_rejected() {
        assert!(matches!(
            load_csv(write("a\n1\nNaN\n").path(), None),
            Err(Error::CsvCell { row: 2, .. })
        ));
        assert!(matches!(
            load_csv(write("a\nx\n").path(), None),
            Err(Error::CsvCell { row: 1, .. })
        ));
    }

    #[test]
    fn missing_file_and_ragged_rows() {
        assert!(matches!(
            load_csv("/definitely/not/here.csv", None),
            Err(Error::Io { .. })
        ));
        assert!(load_csv(write("a,b\n1,2\n3\n").path(), None).is_err());
        assert!(load_csv(write("a,b\n").path(), None).is_err());
    }
}
