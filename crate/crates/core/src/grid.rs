use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform grid on the torus `[0,1)^d`, `k_i = i / size` per axis, with the
/// point past the last one identified with index 0.
///
/// Points are numbered with the last axis varying fastest, the same order
/// Wannier90 uses for its k-point lists.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct KGrid {
    sizes: Vec<usize>,
}

/// Smallest per-axis size considered adequate for frame construction.
pub const MIN_FRAME_SIZE: usize = 8;

impl KGrid {
    pub fn new(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.len() > 3 {
            return Err(Error::InvalidGrid(format!(
                "dimension {} not in 1..=3",
                sizes.len()
            )));
        }
        if let Some(&s) = sizes.iter().find(|&&s| s < 2) {
            return Err(Error::InvalidGrid(format!("axis size {s} is below 2")));
        }
        Ok(KGrid {
            sizes: sizes.to_vec(),
        })
    }

    pub fn line(n: usize) -> Result<Self> {
        Self::new(&[n])
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(&[n, n])
    }

    pub fn dim(&self) -> usize {
        self.sizes.len()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn size(&self, axis: usize) -> usize {
        self.sizes[axis]
    }

    pub fn len(&self) -> usize {
        self.sizes.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        1.0 / self.sizes[axis] as f64
    }

    /// Whether any axis is coarser than [`MIN_FRAME_SIZE`].
    pub fn is_coarse(&self) -> bool {
        self.sizes.iter().any(|&s| s < MIN_FRAME_SIZE)
    }

    pub fn index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dim());
        idx.iter()
            .zip(&self.sizes)
            .fold(0, |acc, (&i, &n)| acc * n + i % n)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            out[axis] = flat % self.sizes[axis];
            flat /= self.sizes[axis];
        }
        out
    }

    /// Fractional coordinates of a point.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.sizes)
            .map(|(&i, &n)| i as f64 / n as f64)
            .collect()
    }

    /// Neighbor one step along `axis` (`step = ±1`), with the reciprocal-lattice
    /// shift picked up when crossing the boundary.
    pub fn neighbor(&self, flat: usize, axis: usize, step: isize) -> (usize, i32) {
        let mut idx = self.multi_index(flat);
        let n = self.sizes[axis] as isize;
        let raw = idx[axis] as isize + step;
        let wrapped = raw.rem_euclid(n);
        idx[axis] = wrapped as usize;
        (self.index(&idx), raw.div_euclid(n) as i32)
    }

    /// Flat index of `flat + offset`, wrapped onto the grid.
    pub fn shifted(&self, flat: usize, offset: &[i32]) -> usize {
        let mut idx = self.multi_index(flat);
        for (axis, (&o, i)) in offset.iter().zip(idx.iter_mut()).enumerate() {
            *i = (*i as i64 + o as i64).rem_euclid(self.sizes[axis] as i64) as usize;
        }
        self.index(&idx)
    }

    /// Flat indices of the line along `axis` through `flat`, starting at
    /// coordinate 0 on that axis.
    pub fn line_through(&self, flat: usize, axis: usize) -> Vec<usize> {
        let mut idx = self.multi_index(flat);
        (0..self.sizes[axis])
            .map(|i| {
                idx[axis] = i;
                self.index(&idx)
            })
            .collect()
    }

    /// Flat indices of the sub-grid with coordinate 0 along `axis`.
    pub fn face(&self, axis: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&f| self.multi_index(f)[axis] == 0)
            .collect()
    }

    pub fn label(&self) -> String {
        self.sizes
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()
            .join("x")
    }
}

/// Reciprocal lattice vectors `b_i` (rows, Cartesian), conjugate to the
/// reduced coordinates of the grid. Used to turn grid offsets into
/// finite-difference vectors `Σ o_i b_i / n_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lattice {
    pub reciprocal: Vec<Vec<f64>>,
}

impl Lattice {
    pub fn new(reciprocal: Vec<Vec<f64>>) -> Result<Self> {
        let d = reciprocal.len();
        if !(1..=3).contains(&d) || reciprocal.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidGrid(
                "reciprocal vectors must form a square matrix".into(),
            ));
        }
        Ok(Lattice { reciprocal })
    }

    /// Unit lattice constant: `b_i = 2π e_i`.
    pub fn cubic(dim: usize) -> Self {
        let reciprocal = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| if i == j { std::f64::consts::TAU } else { 0.0 })
                    .collect()
            })
            .collect();
        Lattice { reciprocal }
    }

    /// Honeycomb Bravais lattice `a1 = (1, 0)`, `a2 = (1/2, √3/2)`, optionally
    /// stacked with unit spacing along z.
    pub fn hexagonal(dim: usize) -> Self {
        let tau = std::f64::consts::TAU;
        let r3 = 3f64.sqrt();
        let plane = [[tau, -tau / r3], [0.0, 2.0 * tau / r3]];
        let reciprocal = (0..dim)
            .map(|i| {
                (0..dim)
                    .map(|j| match (i < 2, j < 2) {
                        (true, true) => plane[i][j],
                        (false, false) => tau,
                        _ => 0.0,
                    })
                    .collect()
            })
            .collect();
        Lattice { reciprocal }
    }

    pub fn dim(&self) -> usize {
        self.reciprocal.len()
    }

    /// Cartesian vector of a grid offset.
    pub fn bvector(&self, grid: &KGrid, offset: &[i32]) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|c| {
                (0..d)
                    .map(|i| offset[i] as f64 * self.reciprocal[i][c] / grid.size(i) as f64)
                    .sum()
            })
            .collect()
    }
}

impl std::str::FromStr for KGrid {
    type Err = Error;

    /// Parses `N`, `NxM` or `NxMxL`.
    fn from_str(s: &str) -> Result<Self> {
        let sizes = s
            .split(['x', 'X'])
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidGrid(format!("`{s}`: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        KGrid::new(&sizes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn last_axis_fastest() {
        let g = KGrid::new(&[2, 3]).unwrap();
        assert_eq!(g.index(&[0, 1]), 1);
        assert_eq!(g.index(&[1, 0]), 3);
        assert_eq!(g.point(4), vec![0.5, 1.0 / 3.0]);
    }

    #[test]
    fn neighbor_wraps_with_shift() {
        let g = KGrid::new(&[4, 5]).unwrap();
        let last = g.index(&[3, 2]);
        assert_eq!(g.neighbor(last, 0, 1), (g.index(&[0, 2]), 1));
        assert_eq!(g.neighbor(g.index(&[0, 2]), 0, -1), (last, -1));
        assert_eq!(g.neighbor(g.index(&[1, 4]), 1, 1), (g.index(&[1, 0]), 1));
        assert_eq!(g.neighbor(g.index(&[1, 1]), 1, 1), (g.index(&[1, 2]), 0));
    }

    #[test]
    fn hexagonal_reciprocal_vectors() {
        let l = Lattice::hexagonal(2);
        let a = [[1.0, 0.0], [0.5, 3f64.sqrt() / 2.0]];
        for (i, ai) in a.iter().enumerate() {
            for j in 0..2 {
                let dot: f64 = (0..2).map(|c| ai[c] * l.reciprocal[j][c]).sum();
                let expected = if i == j { std::f64::consts::TAU } else { 0.0 };
                assert!((dot - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shifted_wraps() {
        let g = KGrid::new(&[4, 5]).unwrap();
        assert_eq!(g.shifted(g.index(&[3, 4]), &[1, 1]), 0);
        assert_eq!(g.shifted(0, &[-1, 0]), g.index(&[3, 0]));
    }

    #[test]
    fn parse_sizes() {
        assert_eq!("8x9".parse::<KGrid>().unwrap().sizes(), &[8, 9]);
        assert_eq!("5".parse::<KGrid>().unwrap().dim(), 1);
        assert!("0x4".parse::<KGrid>().is_err());
        assert!("2x2x2x2".parse::<KGrid>().is_err());
    }

    #[test]
    fn faces_and_lines() {
        let g = KGrid::new(&[3, 4, 5]).unwrap();
        assert_eq!(g.face(2).len(), 12);
        let line = g.line_through(g.index(&[1, 2, 3]), 1);
        assert_eq!(
            line,
            (0..4).map(|j| g.index(&[1, j, 3])).collect::<Vec<_>>()
        );
    }

    proptest! {
        #[test]
        fn index_round_trip(a in 2usize..9, b in 2usize..9, c in 2usize..9, f in 0usize..1000) {
            let g = KGrid::new(&[a, b, c]).unwrap();
            let f = f % g.len();
            prop_assert_eq!(g.index(&g.multi_index(f)), f);
        }

        #[test]
        fn neighbor_inverse(a in 2usize..9, b in 2usize..9, f in 0usize..100, axis in 0usize..2) {
            let g = KGrid::new(&[a, b]).unwrap();
            let f = f % g.len();
            let (n, s) = g.neighbor(f, axis, 1);
            prop_assert_eq!(g.neighbor(n, axis, -1), (f, -s));
        }
    }
}
