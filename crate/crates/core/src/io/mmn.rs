use std::collections::HashMap;
use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::grid::KGrid;
use crate::matcore::{c, CMatrix};
use crate::transport::OverlapProvider;

/// One overlap block `M_{mn} = ⟨u_{m,k} | u_{n,k_b + G}⟩` with 0-based k indices.
#[derive(Debug, Clone, PartialEq)]
pub struct MmnBlock {
    pub k: usize,
    pub neighbor: usize,
    pub shift: [i32; 3],
    pub matrix: CMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MmnData {
    pub comment: String,
    pub n_bands: usize,
    pub n_kpts: usize,
    pub n_neighbors: usize,
    pub blocks: Vec<MmnBlock>,
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    /// Next non-blank line with its 1-based number.
    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            if !line.trim().is_empty() {
                return Ok((i + 1, line));
            }
        }
        Err(Error::Parse {
            line: self.last + 1,
            reason: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn fields<T: FromStr>(line_no: usize, line: &str, count: usize, what: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() < count {
        return Err(Error::Parse {
            line: line_no,
            reason: format!("expected {count} values for {what}, found {}", parts.len()),
        });
    }
    parts[..count]
        .iter()
        .map(|p| {
            p.parse::<T>().map_err(|e| Error::Parse {
                line: line_no,
                reason: format!("{what}: `{p}`: {e}"),
            })
        })
        .collect()
}

/// Parse the Wannier90 `.mmn` layout: a comment line, `n_bands n_kpts
/// n_neighbors`, then per block a header `ik ikb g1 g2 g3` (1-based k
/// indices) and `n_bands²` lines `Re Im` with the bra index varying fastest.
pub fn parse_mmn(text: &str) -> Result<MmnData> {
    let mut lines = Lines::new(text);
    let (_, comment) = lines
        .inner
        .next()
        .map(|(i, l)| (i + 1, l))
        .ok_or(Error::Parse {
            line: 1,
            reason: "empty file".into(),
        })?;
    lines.last = 1;
    let (ln, header) = lines.next("the size line")?;
    let sizes: Vec<usize> = fields(ln, header, 3, "n_bands n_kpts n_neighbors")?;
    let (n_bands, n_kpts, n_neighbors) = (sizes[0], sizes[1], sizes[2]);
    if n_bands == 0 || n_kpts == 0 {
        return Err(Error::Parse {
            line: ln,
            reason: "zero bands or k-points".into(),
        });
    }
    let expected = n_kpts * n_neighbors;
    let mut blocks = Vec::with_capacity(expected);
    loop {
        let (ln, head) = match lines.next("a block header") {
            Ok(x) => x,
            Err(_) if blocks.len() == expected => break,
            Err(_) if !blocks.is_empty() && blocks.len() < expected => {
                return Err(Error::CountMismatch {
                    expected,
                    found: blocks.len(),
                })
            }
            Err(e) => return Err(e),
        };
        let h: Vec<i64> = fields(ln, head, 5, "block header")?;
        let index = |v: i64| -> Result<usize> {
            if v < 1 || v as usize > n_kpts {
                return Err(Error::Parse {
                    line: ln,
                    reason: format!("k index {v} outside 1..={n_kpts}"),
                });
            }
            Ok(v as usize - 1)
        };
        let (k, neighbor) = (index(h[0])?, index(h[1])?);
        let shift = [h[2] as i32, h[3] as i32, h[4] as i32];
        let mut matrix = CMatrix::zeros(n_bands, n_bands);
        for n in 0..n_bands {
            for m in 0..n_bands {
                let (ln, entry) = lines.next("an overlap entry")?;
                let v: Vec<f64> = fields(ln, entry, 2, "overlap entry")?;
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(Error::Parse {
                        line: ln,
                        reason: "non-finite overlap entry".into(),
                    });
                }
                matrix[(m, n)] = c(v[0], v[1]);
            }
        }
        blocks.push(MmnBlock {
            k,
            neighbor,
            shift,
            matrix,
        });
    }
    if blocks.len() != expected {
        return Err(Error::CountMismatch {
            expected,
            found: blocks.len(),
        });
    }
    let mut per_k = vec![0usize; n_kpts];
    for b in &blocks {
        per_k[b.k] += 1;
    }
    if let Some(found) = per_k.iter().copied().find(|&n| n != n_neighbors) {
        return Err(Error::CountMismatch {
            expected: n_neighbors,
            found,
        });
    }
    Ok(MmnData {
        comment: comment.to_string(),
        n_bands,
        n_kpts,
        n_neighbors,
        blocks,
    })
}

/// Inverse of [`parse_mmn`]; numbers use the shortest round-trip decimal form.
pub fn write_mmn(data: &MmnData) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", data.comment.lines().next().unwrap_or(""));
    let _ = writeln!(
        out,
        "{:>12}{:>12}{:>12}",
        data.n_bands, data.n_kpts, data.n_neighbors
    );
    for b in &data.blocks {
        let _ = writeln!(
            out,
            "{:>5}{:>5}{:>5}{:>5}{:>5}",
            b.k + 1,
            b.neighbor + 1,
            b.shift[0],
            b.shift[1],
            b.shift[2]
        );
        for n in 0..data.n_bands {
            for m in 0..data.n_bands {
                let z = b.matrix[(m, n)];
                let _ = writeln!(out, "{} {}", z.re, z.im);
            }
        }
    }
    out
}

impl MmnData {
    /// Blocks for the given grid offsets taken from any provider, with the
    /// reciprocal shifts a uniform grid implies.
    pub fn from_provider<P: OverlapProvider + ?Sized>(
        p: &P,
        offsets: &[Vec<i32>],
        comment: &str,
    ) -> Result<Self> {
        let grid = p.grid();
        let mut blocks = Vec::with_capacity(grid.len() * offsets.len());
        for k in 0..grid.len() {
            let idx = grid.multi_index(k);
            for o in offsets {
                let mut shift = [0i32; 3];
                for axis in 0..grid.dim() {
                    shift[axis] = (idx[axis] as i64 + o[axis] as i64)
                        .div_euclid(grid.size(axis) as i64)
                        as i32;
                }
                blocks.push(MmnBlock {
                    k,
                    neighbor: grid.shifted(k, o),
                    shift,
                    matrix: p.overlap_offset(k, o)?,
                });
            }
        }
        Ok(MmnData {
            comment: comment.to_string(),
            n_bands: p.n_occ(),
            n_kpts: grid.len(),
            n_neighbors: offsets.len(),
            blocks,
        })
    }
}

/// Contiguous band window, stored 0-based half-open.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Window {
    pub start: usize,
    pub end: usize,
}

impl Window {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

impl FromStr for Window {
    type Err = Error;

    /// 1-based inclusive `first-last`, Wannier90 style (`1-4`).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("band window `{s}`: expected FIRST-LAST, 1-based"));
        let (a, b) = s.split_once(['-', ':']).ok_or_else(bad)?;
        let first: usize = a.trim().parse().map_err(|_| bad())?;
        let last: usize = b.trim().parse().map_err(|_| bad())?;
        if first == 0 || last < first {
            return Err(bad());
        }
        Ok(Window {
            start: first - 1,
            end: last,
        })
    }
}

/// Overlaps read from an MMN file, restricted to a band window.
#[derive(Debug, Clone)]
pub struct MmnProvider {
    grid: KGrid,
    n_occ: usize,
    blocks: HashMap<(usize, Vec<i32>), CMatrix>,
}

/// Build an overlap provider on `grid` from MMN data. Each block's grid offset
/// is `idx(k_b) + G·n − idx(k)`; with `strict`, offsets must also be the
/// minimal image of the plain index difference, so shifts that disagree with
/// the declared grid are rejected.
pub fn provider_from_mmn(
    data: &MmnData,
    window: Window,
    grid: &KGrid,
    strict: bool,
) -> Result<MmnProvider> {
    if window.is_empty() || window.end > data.n_bands {
        return Err(Error::Config(format!(
            "band window {}-{} outside 1-{}",
            window.start + 1,
            window.end,
            data.n_bands
        )));
    }
    if data.n_kpts != grid.len() {
        return Err(Error::CountMismatch {
            expected: grid.len(),
            found: data.n_kpts,
        });
    }
    let mut blocks = HashMap::with_capacity(data.blocks.len());
    let mut offsets_at_zero: Option<Vec<Vec<i32>>> = None;
    for (i, b) in data.blocks.iter().enumerate() {
        let from = grid.multi_index(b.k);
        let to = grid.multi_index(b.neighbor);
        let mut offset = Vec::with_capacity(grid.dim());
        for axis in 0..grid.dim() {
            let n = grid.size(axis) as i64;
            let o = to[axis] as i64 + b.shift[axis] as i64 * n - from[axis] as i64;
            if strict {
                let diff = (to[axis] as i64 - from[axis] as i64).rem_euclid(n);
                let minimal = if 2 * diff > n { diff - n } else { diff };
                if o != minimal && !(2 * diff == n && o == -minimal) {
                    return Err(Error::Config(format!(
                        "block {}: shift {:?} inconsistent with a {} grid",
                        i + 1,
                        b.shift,
                        grid.label()
                    )));
                }
            }
            offset.push(o as i32);
        }
        if b.shift[grid.dim()..].iter().any(|&g| g != 0) {
            return Err(Error::Config(format!(
                "block {}: shift along an axis the grid lacks",
                i + 1
            )));
        }
        if strict && b.k == 0 {
            offsets_at_zero
                .get_or_insert_with(Vec::new)
                .push(offset.clone());
        }
        let m = b
            .matrix
            .view((window.start, window.start), (window.len(), window.len()))
            .into_owned();
        blocks.insert((b.k, offset), m);
    }
    if let Some(reference) = offsets_at_zero {
        for k in 1..grid.len() {
            if reference
                .iter()
                .any(|o| !blocks.contains_key(&(k, o.clone())))
            {
                return Err(Error::Config(format!(
                    "k-point {} has a different neighbor set",
                    k + 1
                )));
            }
        }
    }
    Ok(MmnProvider {
        grid: grid.clone(),
        n_occ: window.len(),
        blocks,
    })
}

impl MmnProvider {
    fn lookup(&self, from: usize, offset: &[i32]) -> Option<CMatrix> {
        if let Some(m) = self.blocks.get(&(from, offset.to_vec())) {
            return Some(m.clone());
        }
        let back: Vec<i32> = offset.iter().map(|o| -o).collect();
        let to = self.grid.shifted(from, offset);
        self.blocks.get(&(to, back)).map(|m| m.adjoint())
    }

    /// Offsets present at the first k-point.
    pub fn offsets(&self) -> Vec<Vec<i32>> {
        let mut out: Vec<Vec<i32>> = self
            .blocks
            .keys()
            .filter(|(k, _)| *k == 0)
            .map(|(_, o)| o.clone())
            .collect();
        out.sort();
        out
    }
}

impl OverlapProvider for MmnProvider {
    fn grid(&self) -> &KGrid {
        &self.grid
    }

    fn n_occ(&self) -> usize {
        self.n_occ
    }

    fn overlap(&self, from: usize, axis: usize, step: isize) -> Result<CMatrix> {
        let mut offset = vec![0i32; self.grid.dim()];
        offset[axis] = step as i32;
        self.lookup(from, &offset)
            .ok_or(Error::MissingNeighbor { axis })
    }

    fn overlap_offset(&self, from: usize, offset: &[i32]) -> Result<CMatrix> {
        if offset.iter().all(|&o| o == 0) {
            return Ok(crate::matcore::identity(self.n_occ));
        }
        self.lookup(from, offset)
            .ok_or_else(|| Error::MissingOffset {
                offset: offset.to_vec(),
            })
    }
}

/// Band energies from a Wannier90 `.eig` file (`band kpoint energy` per line).
#[derive(Debug, Clone, PartialEq)]
pub struct EigData {
    /// `energies[k][band]`.
    pub energies: Vec<Vec<f64>>,
}

impl EigData {
    pub fn n_kpts(&self) -> usize {
        self.energies.len()
    }

    pub fn n_bands(&self) -> usize {
        self.energies.first().map_or(0, Vec::len)
    }

    /// Smallest direct gap above the window, `min_k E_{end}(k) − E_{end−1}(k)`.
    pub fn gap_above(&self, window: Window) -> Option<f64> {
        if window.end >= self.n_bands() || window.end == 0 {
            return None;
        }
        self.energies
            .iter()
            .map(|e| e[window.end] - e[window.end - 1])
            .reduce(f64::min)
    }
}

pub fn parse_eig(text: &str) -> Result<EigData> {
    let mut entries: Vec<(usize, usize, f64, usize)> = vec![];
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() < 3 {
            return Err(Error::Parse {
                line: i + 1,
                reason: "expected `band kpoint energy`".into(),
            });
        }
        let int = |s: &str| -> Result<usize> {
            s.parse::<usize>()
                .ok()
                .filter(|&v| v >= 1)
                .ok_or(Error::Parse {
                    line: i + 1,
                    reason: format!("bad index `{s}`"),
                })
        };
        let e: f64 = parts[2].parse().map_err(|_| Error::Parse {
            line: i + 1,
            reason: format!("bad energy `{}`", parts[2]),
        })?;
        entries.push((int(parts[0])? - 1, int(parts[1])? - 1, e, i + 1));
    }
    let n_bands = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let n_kpts = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    if entries.len() != n_bands * n_kpts {
        return Err(Error::CountMismatch {
            expected: n_bands * n_kpts,
            found: entries.len(),
        });
    }
    let mut energies = vec![vec![f64::NAN; n_bands]; n_kpts];
    for (b, k, e, line) in entries {
        if !energies[k][b].is_nan() {
            return Err(Error::Parse {
                line,
                reason: format!("duplicate entry for band {} k-point {}", b + 1, k + 1),
            });
        }
        energies[k][b] = e;
    }
    Ok(EigData { energies })
}
