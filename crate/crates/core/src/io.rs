//! Text formats: numeric CSV tables and Matrix Market exports.

use std::fmt::Write as _;
use std::io::Read;

use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, SparseSymMatrix};

fn reader<R: Read>(r: R, headers: bool) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .has_headers(headers)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(r)
}

/// Numeric rows of a CSV table; `#` lines are comments and a leading non-numeric
/// row is taken as a header.
pub fn read_numeric_table(r: impl Read) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (n, rec) in reader(r, false).records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => rows.push(v),
            Err(_) if rows.is_empty() && n == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("record {}: {e}", n + 1))),
        }
    }
    Ok(rows)
}

/// Observation records `(center, width, value)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationRecords {
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    pub values: Vec<f64>,
}

/// Reads `center,width,value` rows.
pub fn read_observations(r: impl Read) -> Result<ObservationRecords> {
    let mut out = ObservationRecords::default();
    for (n, row) in read_numeric_table(r)?.into_iter().enumerate() {
        if row.len() != 3 {
            return Err(Error::Parse(format!("observation row {} has {} fields, expected 3", n + 1, row.len())));
        }
        out.centers.push(row[0]);
        out.widths.push(row[1]);
        out.values.push(row[2]);
    }
    Ok(out)
}

/// Matrix Market `real symmetric` export (lower triangle, 1-based).
pub fn matrix_market_symmetric(a: &SparseSymMatrix) -> String {
    let n = a.dim();
    let lower: Vec<(usize, usize, f64)> = a.iter().filter(|(i, j, _)| j <= i).collect();
    let mut s = format!("%%MatrixMarket matrix coordinate real symmetric\n{n} {n} {}\n", lower.len());
    for (i, j, v) in lower {
        let _ = writeln!(s, "{} {} {v:.17e}", i + 1, j + 1);
    }
    s
}

/// Matrix Market `real general` export.
pub fn matrix_market_general(a: &CsrMatrix) -> String {
    let mut s = format!("%%MatrixMarket matrix coordinate real general\n{} {} {}\n", a.rows, a.cols, a.nnz());
    for (i, j, v) in a.iter() {
        let _ = writeln!(s, "{} {} {v:.17e}", i + 1, j + 1);
    }
    s
}

/// `(rows, cols, triplets)` of a parsed coordinate file.
pub type Coordinates = (usize, usize, Vec<(usize, usize, f64)>);

/// Parses a Matrix Market coordinate file into 0-based `(row, col, value)` triplets;
/// pattern files get value one.
pub fn parse_matrix_market(text: &str) -> Result<Coordinates> {
    let mut lines = text.lines().filter(|l| !l.starts_with('%') && !l.trim().is_empty());
    let size = lines.next().ok_or_else(|| Error::Parse("missing size line".into()))?;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|e| Error::Parse(format!("size line: {e}"))))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::Parse("size line needs rows, cols, nnz".into()));
    }
    let mut trip = Vec::with_capacity(dims[2]);
    for l in lines {
        let f: Vec<&str> = l.split_whitespace().collect();
        let parse_idx = |t: &str| t.parse::<usize>().map_err(|e| Error::Parse(format!("{l}: {e}")));
        let i = parse_idx(f.first().copied().unwrap_or(""))?;
        let j = parse_idx(f.get(1).copied().unwrap_or(""))?;
        let v = match f.get(2) {
            Some(t) => t.parse::<f64>().map_err(|e| Error::Parse(format!("{l}: {e}")))?,
            None => 1.0,
        };
        if i == 0 || j == 0 || i > dims[0] || j > dims[1] {
            return Err(Error::Parse(format!("entry out of range: {l}")));
        }
        trip.push((i - 1, j - 1, v));
    }
    if trip.len() != dims[2] {
        return Err(Error::Parse(format!("expected {} entries, found {}", dims[2], trip.len())));
    }
    Ok((dims[0], dims[1], trip))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numeric_table_skips_header_and_comments() {
        let text = "# seed: 3\nc0,c1\n1.0, 2.5\n-3,4e-2\n";
        assert_eq!(read_numeric_table(text.as_bytes()).unwrap(), vec![vec![1.0, 2.5], vec![-3.0, 0.04]]);
        assert!(read_numeric_table("1,2\nx,3\n".as_bytes()).is_err());
    }

    #[test]
    fn observations_need_three_fields() {
        let obs = read_observations("center,width,value\n0.5,0.1,2\n1.5,0.1,-1\n".as_bytes()).unwrap();
        assert_eq!(obs.centers, vec![0.5, 1.5]);
        assert_eq!(obs.values, vec![2.0, -1.0]);
        assert!(read_observations("0.5,0.1\n".as_bytes()).is_err());
    }

    #[test]
    fn matrix_market_round_trip() {
        let a = SparseSymMatrix::from_upper_triplets(3, vec![(0, 0, 2.0), (0, 2, -0.5), (1, 1, 1.0 / 3.0)]).unwrap();
        let (n, m, trip) = parse_matrix_market(&matrix_market_symmetric(&a)).unwrap();
        assert_eq!((n, m, trip.len()), (3, 3, 3));
        for (i, j, v) in trip {
            assert_eq!(a.get(i, j), v);
        }
        let g = CsrMatrix::from_rows(4, vec![vec![(3, 1.5)], vec![(0, -2.0), (1, 0.25)]]);
        let (_, _, trip) = parse_matrix_market(&matrix_market_general(&g)).unwrap();
        assert_eq!(trip, vec![(0, 3, 1.5), (1, 0, -2.0), (1, 1, 0.25)]);
    }
}
