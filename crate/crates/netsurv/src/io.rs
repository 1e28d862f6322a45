//! Trial data and edge-list files.
//!
//! Data files are CSV with a header naming the columns `id`, `y`, `d`, `z`
//! and optionally `b` (any order, extra columns ignored). Edge lists hold one
//! `i j` pair per line, meaning unit `j` may affect unit `i`, with 0-based
//! indices into the rows of the data file. Lines starting with `#` are
//! comments; a `# n = <count>` comment fixes the number of units.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use netsurv_core::interference::InterferenceMatrix;
use netsurv_core::randomize::ObservedData;

use crate::error::CliError;
use crate::num::fmt17;

/// Parsed data file.
#[derive(Debug, Clone, PartialEq)]
pub struct DataFile {
    pub ids: Vec<String>,
    pub data: ObservedData,
}

fn open(path: &Path) -> Result<fs::File, CliError> {
    fs::File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn parse_flag(field: &str, name: &str, line: u64) -> Result<bool, CliError> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(CliError::data(format!("line {line}: `{name}` must be 0 or 1, got `{other}`"))),
    }
}

pub fn read_data(path: &Path) -> Result<DataFile, CliError> {
    parse_data(open(path)?).map_err(|e| e.context(&path.display().to_string()))
}

pub fn parse_data<R: std::io::Read>(reader: R) -> Result<DataFile, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers().map_err(|e| CliError::data(format!("header: {e}")))?.clone();
    let col = |name: &str| header.iter().position(|h| h == name);
    let missing: Vec<&str> = ["id", "y", "d", "z"].into_iter().filter(|c| col(c).is_none()).collect();
    if !missing.is_empty() {
        return Err(CliError::data(format!("header lacks column(s): {}", missing.join(", "))));
    }
    let (ci, cy, cd, cz, cb) = (col("id").unwrap(), col("y").unwrap(), col("d").unwrap(), col("z").unwrap(), col("b"));
    let (mut ids, mut y, mut d, mut z, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::data(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |c: usize| rec.get(c).unwrap_or("");
        ids.push(get(ci).to_string());
        let t: f64 =
            get(cy).parse().map_err(|_| CliError::data(format!("line {line}: `y` is not a number: `{}`", get(cy))))?;
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::data(format!("line {line}: `y` must be positive and finite, got {t}")));
        }
        y.push(t);
        d.push(parse_flag(get(cd), "d", line)?);
        z.push(parse_flag(get(cz), "z", line)?);
        if let Some(c) = cb {
            let v: u32 = get(c).parse().map_err(|_| {
                CliError::data(format!("line {line}: `b` must be a non-negative integer, got `{}`", get(c)))
            })?;
            b.push(v);
        }
    }
    if y.is_empty() {
        return Err(CliError::data("no data rows"));
    }
    let data = ObservedData::new(y, d, z, cb.map(|_| b))?;
    Ok(DataFile { ids, data })
}

/// Edge list and the unit count it declares, if any.
pub fn read_edges(path: &Path, n: Option<usize>) -> Result<InterferenceMatrix, CliError> {
    let reader = BufReader::new(open(path)?);
    parse_edges(reader, n).map_err(|e| e.context(&path.display().to_string()))
}

pub fn parse_edges<R: BufRead>(reader: R, n: Option<usize>) -> Result<InterferenceMatrix, CliError> {
    let mut declared: Option<usize> = None;
    let mut edges = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = k + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        if let Some(comment) = t.strip_prefix('#') {
            if let Some(rest) = comment.trim().strip_prefix("n") {
                if let Some(v) = rest.trim().strip_prefix('=') {
                    let v: usize = v
                        .trim()
                        .parse()
                        .map_err(|_| CliError::data(format!("line {lineno}: bad unit count `{}`", v.trim())))?;
                    declared = Some(v);
                }
            }
            continue;
        }
        let parts: Vec<&str> = t.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if parts.len() != 2 {
            return Err(CliError::data(format!("line {lineno}: expected `i j`, got `{t}`")));
        }
        let idx = |s: &str| -> Result<usize, CliError> {
            s.parse().map_err(|_| CliError::data(format!("line {lineno}: `{s}` is not a non-negative integer")))
        };
        edges.push((idx(parts[0])?, idx(parts[1])?, lineno));
    }
    let n = match (n, declared) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::data(format!("network declares n = {b} but the data have {a} rows")))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => edges.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0),
    };
    for &(i, j, lineno) in &edges {
        if i >= n || j >= n {
            return Err(CliError::data(format!("line {lineno}: index out of range for n = {n}")));
        }
        if i == j {
            return Err(CliError::data(format!("line {lineno}: self edge at {i}")));
        }
    }
    let pairs: Vec<(usize, usize)> = edges.iter().map(|&(i, j, _)| (i, j)).collect();
    Ok(InterferenceMatrix::from_edges(&pairs, n, false)?)
}

pub fn write_edges(path: &Path, a: &InterferenceMatrix) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(fs::File::create(path)?);
    write_edges_to(&mut w, a)?;
    w.flush()?;
    Ok(())
}

pub fn write_edges_to<W: Write>(w: &mut W, a: &InterferenceMatrix) -> std::io::Result<()> {
    writeln!(w, "# n = {}", a.n())?;
    writeln!(w, "# i j: unit j may affect unit i")?;
    for (i, j) in a.edges() {
        writeln!(w, "{i} {j}")?;
    }
    Ok(())
}

/// Writes a data file in the format read by [`read_data`].
pub fn write_data(path: &Path, ids: &[String], data: &ObservedData) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::data(e.to_string()))?;
    let csv_err = |e: csv::Error| CliError::data(e.to_string());
    let b = data.denominators();
    let mut header = vec!["id", "y", "d", "z"];
    if b.is_some() {
        header.push("b");
    }
    w.write_record(&header).map_err(csv_err)?;
    for i in 0..data.n() {
        let mut rec = vec![
            ids[i].clone(),
            fmt17(data.times()[i]),
            (data.events()[i] as u8).to_string(),
            (data.treated()[i] as u8).to_string(),
        ];
        if let Some(b) = b {
            rec.push(b[i].to_string());
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `value` as pretty JSON followed by a newline.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::data(e.to_string()))?;
    s.push('\n');
    fs::write(path, s).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn data_round_trip_and_errors() {
        let text = "id,y,d,z\na,10.5,1,1\nb,3,0,0\n";
        let f = parse_data(text.as_bytes()).unwrap();
        assert_eq!(f.ids, vec!["a", "b"]);
        assert_eq!(f.data.times(), &[10.5, 3.0]);
        assert_eq!(f.data.events(), &[true, false]);
        assert!(f.data.denominators().is_none());

        let bad = "id,y,d,z\na,10.5,1,1\nb,3,2,0\n";
        let e = parse_data(bad.as_bytes()).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let neg = "id,y,d,z\na,-1,1,1\n";
        assert!(parse_data(neg.as_bytes()).unwrap_err().to_string().contains("line 2"));
        let missing = "id,y,z\na,1,1\n";
        assert!(parse_data(missing.as_bytes()).unwrap_err().to_string().contains("d"));
        let with_b = "z,d,y,id,b\n1,1,2,x,4\n";
        let f = parse_data(with_b.as_bytes()).unwrap();
        assert_eq!(f.data.denominators(), Some(&[4u32][..]));
    }

    #[test]
    fn edges_round_trip() {
        let a = InterferenceMatrix::from_edges(&[(0, 1), (2, 1), (1, 0)], 4, false).unwrap();
        let mut buf = Vec::new();
        write_edges_to(&mut buf, &a).unwrap();
        let b = parse_edges(buf.as_slice(), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(b.n(), 4);
        assert!(parse_edges(buf.as_slice(), Some(5)).unwrap_err().to_string().contains("n = 4"));
        assert!(parse_edges("0 0\n".as_bytes(), Some(2)).is_err());
        let e = parse_edges("# x\n0 1\n0 9\n".as_bytes(), Some(3)).unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
    }
}
