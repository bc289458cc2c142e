//! Point files: comma-separated rows of `d` numbers with an optional header,
//! or a JSON array of arrays.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::lattice::{Point, PointSet};
use crate::positivity::HypercubeValues;

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Parses CSV rows of equal width. A first row that does not parse as
/// numbers is treated as a header and returned separately.
pub fn read_rows_csv<R: Read>(reader: R) -> Result<(Option<Vec<String>>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut header = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => {
                if let Some(first) = rows.first() {
                    if first.len() != row.len() {
                        return Err(Error::Parse(format!(
                            "row {} has {} columns, expected {}",
                            line + 1,
                            row.len(),
                            first.len()
                        )));
                    }
                }
                rows.push(row);
            }
            Err(_) if line == 0 => {
                header = Some(record.iter().map(str::to_owned).collect());
            }
            Err(e) => {
                return Err(Error::Parse(format!("row {}: {e}", line + 1)));
            }
        }
    }
    Ok((header, rows))
}

/// Reads a point file. Points must be finite and share one dimension.
pub fn read_points_csv<R: Read>(reader: R) -> Result<PointSet> {
    let (_, rows) = read_rows_csv(reader)?;
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    PointSet::from_rows(rows)
}

/// Like [`read_points_csv`] but keeps row order and duplicates.
pub fn read_point_list_csv<R: Read>(reader: R) -> Result<Vec<Point>> {
    let (_, rows) = read_rows_csv(reader)?;
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    rows.into_iter().map(Point::new).collect()
}

pub fn read_points_json<R: Read>(reader: R) -> Result<PointSet> {
    let rows: Vec<Vec<f64>> = serde_json::from_reader(reader)?;
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    PointSet::from_rows(rows)
}

/// Reads rows of `2d` numbers as point pairs `(x, y)`.
pub fn read_pairs_csv<R: Read>(reader: R) -> Result<Vec<(Point, Point)>> {
    let (_, rows) = read_rows_csv(reader)?;
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    let width = rows[0].len();
    if width == 0 || width % 2 != 0 {
        return Err(Error::Parse(format!("pair rows need an even number of columns, got {width}")));
    }
    rows.into_iter()
        .map(|mut r| {
            let y = r.split_off(width / 2);
            Ok((Point::new(r)?, Point::new(y)?))
        })
        .collect()
}

/// Reads unit-cube vertex weights as `vertex,value` rows, e.g. `01,0.25`,
/// where character `k` of the vertex string is axis `k`. Every vertex must
/// appear exactly once. A non-numeric value in the first row marks a header.
pub fn read_hypercube_csv<R: Read>(reader: R) -> Result<HypercubeValues> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let mut entries: Vec<(u64, f64)> = Vec::new();
    let mut dims = None;
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Parse(format!("row {}: expected `vertex,value`", line + 1)));
        }
        let value = match record[1].parse::<f64>() {
            Ok(v) => v,
            Err(_) if line == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("row {}: {e}", line + 1))),
        };
        let vertex = &record[0];
        if vertex.is_empty() || vertex.len() > 24 || !vertex.bytes().all(|b| b == b'0' || b == b'1') {
            return Err(Error::Parse(format!("row {}: `{vertex}` is not a vertex string", line + 1)));
        }
        if *dims.get_or_insert(vertex.len()) != vertex.len() {
            return Err(Error::Parse(format!("row {}: vertex `{vertex}` has the wrong length", line + 1)));
        }
        let mask = vertex
            .bytes()
            .enumerate()
            .fold(0u64, |acc, (k, b)| acc | (u64::from(b - b'0') << k));
        entries.push((mask, value));
    }
    let d = dims.ok_or(Error::Empty)?;
    let mut values = vec![f64::NAN; 1 << d];
    for (mask, v) in entries {
        let slot = &mut values[mask as usize];
        if !slot.is_nan() {
            return Err(Error::Parse(format!("vertex {mask:0d$b} listed twice")));
        }
        *slot = v;
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Parse(format!("all {} vertices must be listed", 1 << d)));
    }
    HypercubeValues::unit(d, values)
}

/// Default column names `x0, x1, ...`.
pub fn coord_header(dims: usize) -> Vec<String> {
    (0..dims).map(|k| format!("x{k}")).collect()
}

/// Writes points with a header row, one point per row.
pub fn write_points_csv<'a, W, I>(writer: W, dims: usize, points: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Point>,
{
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(coord_header(dims))?;
    for p in points {
        wtr.write_record(p.coords().iter().map(|c| fmt_f64(*c)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `(point..., value)` rows under the header `x0..x{d-1},<value_name>`.
pub fn write_values_csv<W: Write>(
    writer: W,
    dims: usize,
    value_name: &str,
    rows: &[(Point, f64)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = coord_header(dims);
    header.push(value_name.to_owned());
    wtr.write_record(&header)?;
    for (p, v) in rows {
        let mut rec: Vec<String> = p.coords().iter().map(|c| fmt_f64(*c)).collect();
        rec.push(fmt_f64(*v));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_is_detected() {
        let (h, rows) = read_rows_csv("a,b\n1,2\n3.5,-4e-1\n".as_bytes()).unwrap();
        assert_eq!(h.unwrap(), vec!["a", "b"]);
        assert_eq!(rows, vec![vec![1.0, 2.0], vec![3.5, -0.4]]);
        let (h, rows) = read_rows_csv("1,2\n".as_bytes()).unwrap();
        assert!(h.is_none());
        assert_eq!(rows.len(), 1);
    }

    #[test]
    fn ragged_and_bad_rows_fail() {
        assert!(read_points_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(read_points_csv("1,2\n3,x\n".as_bytes()).is_err());
        assert!(matches!(read_points_csv("".as_bytes()), Err(Error::Empty)));
        assert!(matches!(read_points_csv("x,y\n".as_bytes()), Err(Error::Empty)));
        assert!(read_points_csv("1,nan\n".as_bytes()).is_err());
    }

    #[test]
    fn pair_rows_split_in_half() {
        let pairs = read_pairs_csv("x0,x1,y0,y1\n0,1,1,0\n".as_bytes()).unwrap();
        assert_eq!(pairs[0].0.coords(), &[0.0, 1.0]);
        assert_eq!(pairs[0].1.coords(), &[1.0, 0.0]);
        assert!(read_pairs_csv("1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn vertex_files() {
        let h = read_hypercube_csv("vertex,value\n00,1\n10,2\n01,3\n11,4\n".as_bytes()).unwrap();
        assert_eq!(h.dims(), 2);
        // character 0 is axis 0, so "10" is mask 0b01
        assert_eq!(h.value(0b01), 2.0);
        assert_eq!(h.value(0b10), 3.0);
        assert!(read_hypercube_csv("00,1\n10,2\n01,3\n".as_bytes()).is_err());
        assert!(read_hypercube_csv("00,1\n00,2\n01,3\n11,1\n".as_bytes()).is_err());
        assert!(read_hypercube_csv("00,1\n10,2\n01,3\n1,4\n".as_bytes()).is_err());
        assert!(read_hypercube_csv("00,1\n10,-2\n01,3\n11,4\n".as_bytes()).is_err());
    }

    #[test]
    fn json_points() {
        let s = read_points_json("[[2,0],[0,1]]".as_bytes()).unwrap();
        assert_eq!(s.len(), 2);
        assert!(read_points_json("[]".as_bytes()).is_err());
    }

    #[test]
    fn written_floats_round_trip() {
        let v = [0.1, -1.0 / 3.0, 1e-300, 12345.678901234567, 0.0];
        for x in v {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap().to_bits(), x.to_bits());
        }
        let set = PointSet::from_rows(vec![vec![0.1, 2.0 / 3.0], vec![-5.5, 1e-17]]).unwrap();
        let mut buf = Vec::new();
        write_points_csv(&mut buf, 2, &set).unwrap();
        assert_eq!(read_points_csv(buf.as_slice()).unwrap(), set);
    }
}
