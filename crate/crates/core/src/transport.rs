//! Discrete parallel transport in gauge space.
//!
//! A frame at `k` is an `N×N` unitary expressing frame vectors in the local
//! occupied basis. Moving it to a neighbor means projecting with the overlap
//! matrix and restoring orthonormality with a Löwdin step.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::KGrid;
use crate::matcore::{identity, loewdin_with, CMatrix};
use crate::models::{spectral_snapshot, BlochModel};
use crate::tolerances::Tolerances;

/// Source of overlaps `M(k, k')_{mn} = ⟨ψ_m(k) | ψ_n(k')⟩` between grid neighbors,
/// restricted to the occupied window.
pub trait OverlapProvider: Sync {
    fn grid(&self) -> &KGrid;

    fn n_occ(&self) -> usize;

    /// `M(k, k + step·e_axis)` for `step = ±1`, with `k` a flat grid index.
    fn overlap(&self, from: usize, axis: usize, step: isize) -> Result<CMatrix>;

    /// `M(k, k + Σ offset_i e_i)` for a general neighbor. Providers that only
    /// know axis neighbors serve exactly those.
    fn overlap_offset(&self, from: usize, offset: &[i32]) -> Result<CMatrix> {
        let nonzero: Vec<usize> = (0..offset.len()).filter(|&a| offset[a] != 0).collect();
        match nonzero.as_slice() {
            [] => Ok(identity(self.n_occ())),
            [a] if offset[*a].abs() == 1 => self.overlap(from, *a, offset[*a] as isize),
            _ => Err(Error::MissingOffset {
                offset: offset.to_vec(),
            }),
        }
    }
}

impl<P: OverlapProvider + ?Sized> OverlapProvider for &P {
    fn grid(&self) -> &KGrid {
        (**self).grid()
    }
    fn n_occ(&self) -> usize {
        (**self).n_occ()
    }
    fn overlap(&self, from: usize, axis: usize, step: isize) -> Result<CMatrix> {
        (**self).overlap(from, axis, step)
    }
    fn overlap_offset(&self, from: usize, offset: &[i32]) -> Result<CMatrix> {
        (**self).overlap_offset(from, offset)
    }
}

/// Overlaps computed from the occupied eigenvectors of a tight-binding model.
#[derive(Debug, Clone)]
pub struct ModelProvider {
    grid: KGrid,
    n_occ: usize,
    vectors: Vec<CMatrix>,
    min_gap: f64,
}

impl ModelProvider {
    /// Diagonalizes the model on every grid point. Fails with `GapClosed` if the
    /// occupied bands touch the rest anywhere on the grid.
    pub fn new(model: &BlochModel, grid: &KGrid, tol: &Tolerances) -> Result<Self> {
        if grid.dim() != model.dim() {
            return Err(Error::InvalidGrid(format!(
                "{}d grid for a {}d model",
                grid.dim(),
                model.dim()
            )));
        }
        let snaps = (0..grid.len())
            .into_par_iter()
            .map(|f| spectral_snapshot(model, &grid.point(f), tol))
            .collect::<Result<Vec<_>>>()?;
        let min_gap = snaps.iter().map(|s| s.gap).fold(f64::INFINITY, f64::min);
        Ok(ModelProvider {
            grid: grid.clone(),
            n_occ: model.n_occ(),
            vectors: snaps.into_iter().map(|s| s.occ_vectors).collect(),
            min_gap,
        })
    }

    /// Build from explicit orthonormal occupied vectors, one `n_b × N` block per
    /// grid point. The vectors must be periodic in `k`.
    pub fn from_vectors(grid: &KGrid, vectors: Vec<CMatrix>) -> Result<Self> {
        if vectors.len() != grid.len() {
            return Err(Error::CountMismatch {
                expected: grid.len(),
                found: vectors.len(),
            });
        }
        let n_occ = vectors.first().map(|v| v.ncols()).unwrap_or(0);
        if vectors
            .iter()
            .any(|v| v.ncols() != n_occ || v.nrows() != vectors[0].nrows())
        {
            return Err(Error::Shape("inconsistent occupied blocks".into()));
        }
        Ok(ModelProvider {
            grid: grid.clone(),
            n_occ,
            vectors,
            min_gap: f64::NAN,
        })
    }

    /// Replace the basis at each point by `ψ(k)·G(k)` for unitary `G(k)`.
    pub fn rotated(&self, gauge: impl Fn(usize) -> CMatrix + Sync) -> Self {
        let vectors = self
            .vectors
            .par_iter()
            .enumerate()
            .map(|(f, v)| v * gauge(f))
            .collect();
        ModelProvider {
            vectors,
            ..self.clone()
        }
    }

    /// Occupied eigenvectors (`n_b × N`) at a grid point.
    pub fn vectors(&self, flat: usize) -> &CMatrix {
        &self.vectors[flat]
    }

    /// Smallest gap found while diagonalizing (NaN for explicit vectors).
    pub fn min_gap(&self) -> f64 {
        self.min_gap
    }
}

impl OverlapProvider for ModelProvider {
    fn grid(&self) -> &KGrid {
        &self.grid
    }

    fn n_occ(&self) -> usize {
        self.n_occ
    }

    fn overlap(&self, from: usize, axis: usize, step: isize) -> Result<CMatrix> {
        let (to, _) = self.grid.neighbor(from, axis, step);
        Ok(self.vectors[from].adjoint() * &self.vectors[to])
    }

    fn overlap_offset(&self, from: usize, offset: &[i32]) -> Result<CMatrix> {
        let to = self.grid.shifted(from, offset);
        Ok(self.vectors[from].adjoint() * &self.vectors[to])
    }
}

/// The restriction of a provider to the face where one axis is 0.
pub struct SliceProvider<'a, P: OverlapProvider + ?Sized> {
    inner: &'a P,
    fixed_axis: usize,
    grid: KGrid,
}

impl<'a, P: OverlapProvider + ?Sized> SliceProvider<'a, P> {
    pub fn new(inner: &'a P, fixed_axis: usize) -> Result<Self> {
        let g = inner.grid();
        if g.dim() < 2 || fixed_axis >= g.dim() {
            return Err(Error::InvalidGrid(format!(
                "cannot fix axis {fixed_axis} of a {}d grid",
                g.dim()
            )));
        }
        let sizes: Vec<usize> = (0..g.dim())
            .filter(|&a| a != fixed_axis)
            .map(|a| g.size(a))
            .collect();
        Ok(SliceProvider {
            inner,
            fixed_axis,
            grid: KGrid::new(&sizes)?,
        })
    }

    /// Flat index in the parent grid of a point of the face.
    pub fn lift(&self, flat: usize) -> usize {
        let mut idx = self.grid.multi_index(flat);
        idx.insert(self.fixed_axis, 0);
        self.inner.grid().index(&idx)
    }

    fn lift_axis(&self, axis: usize) -> usize {
        if axis >= self.fixed_axis {
            axis + 1
        } else {
            axis
        }
    }
}

impl<P: OverlapProvider + ?Sized> OverlapProvider for SliceProvider<'_, P> {
    fn grid(&self) -> &KGrid {
        &self.grid
    }

    fn n_occ(&self) -> usize {
        self.inner.n_occ()
    }

    fn overlap(&self, from: usize, axis: usize, step: isize) -> Result<CMatrix> {
        self.inner
            .overlap(self.lift(from), self.lift_axis(axis), step)
    }

    fn overlap_offset(&self, from: usize, offset: &[i32]) -> Result<CMatrix> {
        let mut lifted = offset.to_vec();
        lifted.insert(self.fixed_axis, 0);
        self.inner.overlap_offset(self.lift(from), &lifted)
    }
}

/// Every overlap is the identity: the occupied space does not move.
#[derive(Debug, Clone)]
pub struct ConstantProvider {
    grid: KGrid,
    n_occ: usize,
}

impl ConstantProvider {
    pub fn new(grid: KGrid, n_occ: usize) -> Self {
        ConstantProvider { grid, n_occ }
    }
}

impl OverlapProvider for ConstantProvider {
    fn grid(&self) -> &KGrid {
        &self.grid
    }
    fn n_occ(&self) -> usize {
        self.n_occ
    }
    fn overlap(&self, _: usize, _: usize, _: isize) -> Result<CMatrix> {
        Ok(identity(self.n_occ))
    }
    fn overlap_offset(&self, _: usize, _: &[i32]) -> Result<CMatrix> {
        Ok(identity(self.n_occ))
    }
}

/// Transport `u_from` at `from` one step along `axis`:
/// `U(k') = loewdin(M(k', k)·U(k))`.
pub fn transport_step<P: OverlapProvider + ?Sized>(
    provider: &P,
    u_from: &CMatrix,
    from: usize,
    axis: usize,
    step: isize,
    tol: &Tolerances,
) -> Result<CMatrix> {
    let (to, _) = provider.grid().neighbor(from, axis, step);
    let m = provider.overlap(to, axis, -step)?;
    let (u, sigma) = loewdin_with(&(m * u_from), tol)?;
    if sigma < tol.rank_warning {
        log::warn!(
            "transport step {from} -> {to} along axis {axis}: smallest singular value {sigma:.3e}; grid may be too coarse"
        );
    }
    Ok(u)
}

/// Transport along the full line through `start` in direction `axis`,
/// beginning at coordinate 0. Element `i` sits at coordinate `i` on the axis.
pub fn transport_line<P: OverlapProvider + ?Sized>(
    provider: &P,
    u_start: &CMatrix,
    start: usize,
    axis: usize,
    tol: &Tolerances,
) -> Result<Vec<CMatrix>> {
    let points = provider.grid().line_through(start, axis);
    let mut out = Vec::with_capacity(points.len());
    out.push(u_start.clone());
    for w in points.windows(2) {
        let next = transport_step(provider, out.last().expect("nonempty"), w[0], axis, 1, tol)?;
        out.push(next);
    }
    Ok(out)
}

/// Close a transported line through the boundary and return
/// `V_obs = U_start*·U_end`, re-projected onto the unitary group.
pub fn closure_obstruction<P: OverlapProvider + ?Sized>(
    provider: &P,
    seq: &[CMatrix],
    start: usize,
    axis: usize,
    tol: &Tolerances,
) -> Result<CMatrix> {
    let points = provider.grid().line_through(start, axis);
    if seq.len() != points.len() {
        return Err(Error::Shape(format!(
            "line of {} frames on an axis of {} points",
            seq.len(),
            points.len()
        )));
    }
    let last = *points.last().expect("nonempty");
    let wrapped = transport_step(provider, &seq[seq.len() - 1], last, axis, 1, tol)?;
    let v = seq[0].adjoint() * wrapped;
    loewdin_with(&v, tol).map(|(u, _)| u)
}
