//! Text format for matrix fields over a grid.
//!
//! ```text
//! blochframe-field 1
//! kind frame
//! sizes 4 4
//! n 2
//! t_points 1
//! meta {"seed":0,...}
//! data
//! 1 0 0 0 0 0 1 0
//! ```
//!
//! One record per grid point (per t slice for homotopies, t-major), entries
//! row-major as `Re Im` pairs in shortest round-trip decimal form.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::diagnostics::RegularityField;
use crate::error::{Error, Result};
use crate::frames::GaugeFrame;
use crate::grid::KGrid;
use crate::homotopy::{Homotopy, UnitaryField};
use crate::matcore::{c, CMatrix};
use crate::tolerances::Tolerances;

const MAGIC: &str = "blochframe-field 1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    Unitary,
    Frame,
    Homotopy,
}

impl FieldKind {
    fn as_str(self) -> &'static str {
        match self {
            FieldKind::Unitary => "unitary",
            FieldKind::Frame => "frame",
            FieldKind::Homotopy => "homotopy",
        }
    }
}

impl FromStr for FieldKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unitary" => Ok(FieldKind::Unitary),
            "frame" => Ok(FieldKind::Frame),
            "homotopy" => Ok(FieldKind::Homotopy),
            _ => Err(Error::Config(format!("unknown field kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldHeader {
    pub kind: FieldKind,
    pub grid: KGrid,
    pub n: usize,
    pub t_points: usize,
    /// Single-line JSON object.
    pub meta: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldData {
    pub header: FieldHeader,
    pub values: Vec<CMatrix>,
}

impl FieldData {
    pub fn unitary(field: &UnitaryField, meta: &impl Serialize) -> Result<Self> {
        Ok(FieldData {
            header: FieldHeader {
                kind: FieldKind::Unitary,
                grid: field.grid().clone(),
                n: field.n(),
                t_points: 1,
                meta: to_json(meta)?,
            },
            values: field.values().to_vec(),
        })
    }

    pub fn frame(frame: &GaugeFrame, tol: &Tolerances) -> Result<Self> {
        #[derive(Serialize)]
        struct Meta<'a> {
            frame: &'a crate::frames::FrameMeta,
            tolerances: &'a Tolerances,
        }
        Ok(FieldData {
            header: FieldHeader {
                kind: FieldKind::Frame,
                grid: frame.grid().clone(),
                n: frame.n(),
                t_points: 1,
                meta: to_json(&Meta {
                    frame: &frame.meta,
                    tolerances: tol,
                })?,
            },
            values: frame.coeffs().to_vec(),
        })
    }

    pub fn homotopy(h: &Homotopy, tol: &Tolerances) -> Result<Self> {
        #[derive(Serialize)]
        struct Meta<'a> {
            homotopy: &'a crate::homotopy::HomotopyMeta,
            max_step: f64,
            tolerances: &'a Tolerances,
        }
        Ok(FieldData {
            header: FieldHeader {
                kind: FieldKind::Homotopy,
                grid: h.grid().clone(),
                n: h.at(0, 0).nrows(),
                t_points: h.t_points(),
                meta: to_json(&Meta {
                    homotopy: &h.meta,
                    max_step: h.max_step(),
                    tolerances: tol,
                })?,
            },
            values: h.values().to_vec(),
        })
    }

    /// The values as a unitary field; homotopies yield their `t = 0` slice.
    pub fn into_unitary_field(self) -> Result<UnitaryField> {
        let nk = self.header.grid.len();
        let mut values = self.values;
        values.truncate(nk);
        UnitaryField::new(self.header.grid, values)
    }
}

fn to_json(meta: &impl Serialize) -> Result<String> {
    serde_json::to_string(meta).map_err(|e| Error::Config(e.to_string()))
}

pub fn write_field(data: &FieldData) -> String {
    let h = &data.header;
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "kind {}", h.kind.as_str());
    let sizes: Vec<String> = h.grid.sizes().iter().map(|s| s.to_string()).collect();
    let _ = writeln!(out, "sizes {}", sizes.join(" "));
    let _ = writeln!(out, "n {}", h.n);
    let _ = writeln!(out, "t_points {}", h.t_points);
    let _ = writeln!(out, "meta {}", h.meta.replace('\n', " "));
    out.push_str("data\n");
    for m in &data.values {
        let mut first = true;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                if !first {
                    out.push(' ');
                }
                first = false;
                let _ = write!(out, "{} {}", z.re, z.im);
            }
        }
        out.push('\n');
    }
    out
}

pub fn emit_field(data: &FieldData, path: &Path) -> Result<()> {
    std::fs::write(path, write_field(data))?;
    Ok(())
}

pub fn read_field(text: &str) -> Result<FieldData> {
    let all: Vec<&str> = text.lines().collect();
    let parse_err = |ln: usize, what: &str| Error::Parse {
        line: ln,
        reason: format!("bad {what}"),
    };
    let line = |i: usize| {
        all.get(i)
            .copied()
            .ok_or_else(|| parse_err(i + 1, "header (file ends early)"))
    };
    if line(0)?.trim() != MAGIC {
        return Err(Error::Parse {
            line: 1,
            reason: "not a field file".into(),
        });
    }
    let keyed = |i: usize, key: &str| -> Result<String> {
        let l = line(i)?;
        let rest = l.strip_prefix(key).ok_or_else(|| parse_err(i + 1, key))?;
        if !(rest.is_empty() || rest.starts_with(' ')) {
            return Err(parse_err(i + 1, key));
        }
        Ok(rest.trim_start_matches(' ').to_string())
    };
    let kind: FieldKind = keyed(1, "kind")?
        .trim()
        .parse()
        .map_err(|_| parse_err(2, "kind"))?;
    let sizes: Vec<usize> = keyed(2, "sizes")?
        .split_whitespace()
        .map(|s| s.parse().map_err(|_| parse_err(3, "sizes")))
        .collect::<Result<_>>()?;
    let grid = KGrid::new(&sizes)?;
    let n: usize = keyed(3, "n")?
        .trim()
        .parse()
        .map_err(|_| parse_err(4, "n"))?;
    let t_points: usize = keyed(4, "t_points")?
        .trim()
        .parse()
        .map_err(|_| parse_err(5, "t_points"))?;
    let meta = keyed(5, "meta")?;
    if line(6)?.trim() != "data" {
        return Err(parse_err(7, "data marker"));
    }
    let lines = all.iter().enumerate().skip(7).map(|(i, l)| (i + 1, *l));
    let expected = grid.len() * t_points;
    let mut values = Vec::with_capacity(expected);
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let nums: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>().map_err(|_| parse_err(ln, "entry")))
            .collect::<Result<_>>()?;
        if nums.len() != 2 * n * n {
            return Err(Error::Parse {
                line: ln,
                reason: format!("expected {} numbers, found {}", 2 * n * n, nums.len()),
            });
        }
        values.push(CMatrix::from_fn(n, n, |i, j| {
            let at = 2 * (i * n + j);
            c(nums[at], nums[at + 1])
        }));
    }
    if values.len() != expected {
        return Err(Error::CountMismatch {
            expected,
            found: values.len(),
        });
    }
    Ok(FieldData {
        header: FieldHeader {
            kind,
            grid,
            n,
            t_points,
            meta,
        },
        values,
    })
}

/// CSV with the fractional coordinates of each grid point and its value.
pub fn regularity_csv(r: &RegularityField) -> String {
    let d = r.grid.dim();
    let mut out = String::new();
    let cols: Vec<String> = (1..=d).map(|i| format!("k{i}")).collect();
    let _ = writeln!(out, "{},value", cols.join(","));
    for (f, v) in r.values.iter().enumerate() {
        let k: Vec<String> = r.grid.point(f).iter().map(|x| x.to_string()).collect();
        let _ = writeln!(out, "{},{}", k.join(","), v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::{cis, identity};

    #[test]
    fn identity_records() {
        let f = UnitaryField::constant(KGrid::line(4).unwrap(), identity(2)).unwrap();
        let text = write_field(&FieldData::unitary(&f, &serde_json::json!({})).unwrap());
        let records: Vec<&str> = text.lines().skip_while(|l| *l != "data").skip(1).collect();
        assert_eq!(records, vec!["1 0 0 0 0 0 1 0"; 4]);
    }

    #[test]
    fn round_trip_is_exact() {
        let grid = KGrid::new(&[3, 2]).unwrap();
        let values = (0..6)
            .map(|i| {
                let mut m = identity(2) * cis(0.1 * i as f64 + 1e-17);
                m[(0, 1)] = c(1.0 / 3.0, -f64::MIN_POSITIVE);
                m
            })
            .collect();
        let f = UnitaryField::new(grid, values).unwrap();
        let data = FieldData::unitary(&f, &serde_json::json!({"seed": 7})).unwrap();
        let back = read_field(&write_field(&data)).unwrap();
        assert_eq!(back, data);
        assert_eq!(write_field(&back), write_field(&data));
    }

    #[test]
    fn truncated_records_rejected() {
        let f = UnitaryField::constant(KGrid::line(3).unwrap(), identity(1)).unwrap();
        let text = write_field(&FieldData::unitary(&f, &serde_json::json!({})).unwrap());
        let cut: String = text
            .lines()
            .take(text.lines().count() - 1)
            .map(|l| format!("{l}\n"))
            .collect();
        assert!(matches!(
            read_field(&cut),
            Err(Error::CountMismatch {
                expected: 3,
                found: 2
            })
        ));
        assert!(matches!(
            read_field("nope\n"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn regularity_columns() {
        let r = RegularityField {
            grid: KGrid::new(&[2, 2]).unwrap(),
            values: vec![0.0, 1.0, 2.0, 3.5],
            max: 3.5,
            mean: 1.625,
        };
        let csv = regularity_csv(&r);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "k1,k2,value");
        assert_eq!(lines[4], "0.5,0.5,3.5");
    }
}
