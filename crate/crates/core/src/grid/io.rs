//! The `RSF1` field file and a small CSV import.
//!
//! ```text
//! RSF1
//! dim 3
//! counts 8 8 8
//! origin -1 -1 -1
//! spacing 0.25 0.25 0.25
//! kind function
//! payload float64 little-endian row-major
//!
//! <8 * prod(counts) bytes>
//! ```

use std::io::{BufRead, Read, Write};
use std::path::Path;

use super::{FieldKind, GridField, Lattice};
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &str = "RSF1";
const PAYLOAD: &str = "payload float64 little-endian row-major";

fn join<T: Real>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| format!("{:?}", x.as_f64()))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn write_field_to<T: Real>(mut w: impl Write, field: &GridField<T>) -> Result<()> {
    let lat = field.lattice();
    let counts: Vec<String> = lat.counts().iter().map(|n| n.to_string()).collect();
    write!(
        w,
        "{MAGIC}\ndim {}\ncounts {}\norigin {}\nspacing {}\nkind {}\n{PAYLOAD}\n\n",
        lat.dim(),
        counts.join(" "),
        join(lat.origin()),
        join(lat.spacing()),
        field.kind().as_str()
    )?;
    let mut buf = Vec::with_capacity(8 * field.values().len());
    for v in field.values() {
        buf.extend_from_slice(&v.as_f64().to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn write_field<T: Real>(path: impl AsRef<Path>, field: &GridField<T>) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_field_to(&mut w, field)?;
    w.flush()?;
    Ok(())
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn keyed<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| fmt_err(format!("missing `{key}` line")))?;
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| fmt_err(format!("expected `{key} ...`, found `{line}`")))
}

fn parse_list<X: std::str::FromStr>(s: &str, what: &str, d: usize) -> Result<Vec<X>> {
    let xs: Vec<X> = s
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| fmt_err(format!("bad {what} entry `{t}`"))))
        .collect::<Result<_>>()?;
    if xs.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: xs.len(),
        });
    }
    Ok(xs)
}

pub fn read_field_from<T: Real>(mut r: impl Read) -> Result<GridField<T>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let split = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .ok_or_else(|| fmt_err("header is not terminated by a blank line"))?;
    let header = std::str::from_utf8(&bytes[..split]).map_err(|_| fmt_err("header is not UTF-8"))?;
    let payload = &bytes[split + 2..];

    let mut lines = header.lines();
    if lines.next() != Some(MAGIC) {
        return Err(fmt_err("bad magic"));
    }
    let d: usize = keyed(lines.next(), "dim")?
        .trim()
        .parse()
        .map_err(|_| fmt_err("bad dim"))?;
    if d == 0 {
        return Err(fmt_err("dim must be positive"));
    }
    let counts: Vec<usize> = parse_list(keyed(lines.next(), "counts")?, "counts", d)?;
    let origin: Vec<f64> = parse_list(keyed(lines.next(), "origin")?, "origin", d)?;
    let spacing: Vec<f64> = parse_list(keyed(lines.next(), "spacing")?, "spacing", d)?;
    let kind: FieldKind = keyed(lines.next(), "kind")?.trim().parse()?;
    if lines.next() != Some(PAYLOAD) {
        return Err(fmt_err("unsupported payload description"));
    }
    if lines.next().is_some() {
        return Err(fmt_err("unexpected header lines"));
    }
    let n: usize = counts.iter().product();
    if payload.len() != 8 * n {
        return Err(fmt_err(format!(
            "payload holds {} bytes, header implies {}",
            payload.len(),
            8 * n
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| T::of(f64::from_le_bytes(c.try_into().unwrap())))
        .collect();
    let lattice = Lattice::new(
        origin.into_iter().map(T::of).collect(),
        spacing.into_iter().map(T::of).collect(),
        counts,
    )?;
    GridField::on_lattice(lattice, values, kind)
}

pub fn read_field<T: Real>(path: impl AsRef<Path>) -> Result<GridField<T>> {
    read_field_from(std::fs::File::open(path)?)
}

/// One value per line after a `# rsf-csv dim=<d> counts=<n1 .. nd>` header.
/// Optional header keys: `origin=`, `spacing=` (defaults 0 and 1) and
/// `kind=` (default `function`).
pub fn read_csv<T: Real>(r: impl BufRead) -> Result<GridField<T>> {
    let mut lines = r.lines();
    let header = lines.next().ok_or_else(|| fmt_err("empty csv"))??;
    let rest = header
        .trim()
        .strip_prefix("# rsf-csv")
        .ok_or_else(|| fmt_err("missing `# rsf-csv` header"))?;
    let mut keys: Vec<(String, Vec<String>)> = Vec::new();
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some((k, v)) => keys.push((
                k.to_string(),
                vec![v.to_string()].into_iter().filter(|s| !s.is_empty()).collect(),
            )),
            None => keys
                .last_mut()
                .ok_or_else(|| fmt_err(format!("stray header token `{tok}`")))?
                .1
                .push(tok.to_string()),
        }
    }
    let get = |k: &str| keys.iter().find(|(key, _)| key == k).map(|(_, v)| v.join(" "));
    let d: usize = get("dim")
        .ok_or_else(|| fmt_err("missing dim="))?
        .parse()
        .map_err(|_| fmt_err("bad dim"))?;
    let counts: Vec<usize> = parse_list(&get("counts").ok_or_else(|| fmt_err("missing counts="))?, "counts", d)?;
    let origin: Vec<f64> = match get("origin") {
        Some(s) => parse_list(&s, "origin", d)?,
        None => vec![0.0; d],
    };
    let spacing: Vec<f64> = match get("spacing") {
        Some(s) => parse_list(&s, "spacing", d)?,
        None => vec![1.0; d],
    };
    let kind = match get("kind") {
        Some(s) => s.parse()?,
        None => FieldKind::Function,
    };
    let mut values = Vec::new();
    for line in lines {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| fmt_err(format!("bad value `{t}`")))?;
        values.push(T::of(v));
    }
    let lattice = Lattice::new(
        origin.into_iter().map(T::of).collect(),
        spacing.into_iter().map(T::of).collect(),
        counts,
    )?;
    GridField::on_lattice(lattice, values, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridBox;

    fn sample() -> GridField<f64> {
        let bx = GridBox::new(vec![-1.0, -2.0, 0.5], vec![2.0, 3.0, 1.7]).unwrap();
        GridField::from_fn(&bx, vec![3, 4, 5], FieldKind::Function, |x: &[f64]| {
            (x[0] * 7.1).sin() + x[1] / 3.0 - x[2]
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let f = sample();
        let mut buf = Vec::new();
        write_field_to(&mut buf, &f).unwrap();
        let g: GridField<f64> = read_field_from(&buf[..]).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn rejects_corruption() {
        let f = sample();
        let mut buf = Vec::new();
        write_field_to(&mut buf, &f).unwrap();

        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_field_from::<f64>(&bad[..]).is_err());

        let text = String::from_utf8_lossy(&buf[..60]).replace("counts 3 4 5", "counts 3 4 6");
        let mut bad = text.into_bytes();
        bad.extend_from_slice(&buf[60..]);
        assert!(read_field_from::<f64>(&bad[..]).is_err());

        let bad = &buf[..buf.len() - 8];
        assert!(read_field_from::<f64>(bad).is_err());

        let mut bad = buf.clone();
        let n = bad.len();
        bad[n - 8..].copy_from_slice(&f64::NAN.to_le_bytes());
        assert!(read_field_from::<f64>(&bad[..]).is_err());

        let text = String::from_utf8_lossy(&buf[..20]).replace("dim 3", "dim 2");
        let mut bad = text.into_bytes();
        bad.extend_from_slice(&buf[20..]);
        assert!(read_field_from::<f64>(&bad[..]).is_err());
    }

    #[test]
    fn csv_fixture_2x2x2() {
        let csv = "# rsf-csv dim=3 counts=2 2 2\n1\n2\n3\n4\n5\n6\n7\n8\n";
        let f: GridField<f64> = read_csv(csv.as_bytes()).unwrap();
        let bx = GridBox::new(vec![0.0; 3], vec![2.0; 3]).unwrap();
        let want = GridField::new(
            &bx,
            vec![2, 2, 2],
            (1..=8).map(f64::from).collect(),
            FieldKind::Function,
        )
        .unwrap();
        assert_eq!(f, want);
        assert_eq!(f.value_at(&[1, 0, 1]), 6.0);
        assert!(read_csv::<f64>("# rsf-csv dim=3 counts=2 2 2\n1\n".as_bytes()).is_err());
    }
}
