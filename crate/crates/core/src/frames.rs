//! Inductive construction of periodic Bloch frames in one, two and three
//! dimensions.
//!
//! In `d = 1` the transported frame is corrected with `exp(−k L)`, where
//! `exp(L)` is the obstruction matrix. In higher dimension the frame on the
//! face `k_d = 0` is transported along the last axis; the obstruction matrices
//! then form a loop (or surface) that is contracted to the identity, and the
//! contraction is applied with its time variable set to `k_d`.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{ChernNumber, Error, Result};
use crate::grid::KGrid;
use crate::homotopy::{
    contract_columns_1d, contract_columns_2d, contract_log, contract_log_forced, winding_det,
    Homotopy, UnitaryField,
};
use crate::matcore::{
    c, identity, log_unitary_with, max_diff, unitarity_deviation, CMatrix, ExpFlow,
};
use crate::tolerances::Tolerances;
use crate::transport::{closure_obstruction, transport_line, OverlapProvider, SliceProvider};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Continuous logarithm of the obstruction loop; fails when eigenvalues wind.
    Log,
    /// Column interpolation; works whenever the Chern numbers vanish.
    Columns,
    /// Pointwise principal logarithms. Always produces a frame, which is
    /// discontinuous when the logarithm method does not apply.
    LogForced,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Log => "log",
            Method::Columns => "columns",
            Method::LogForced => "log-forced",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log" => Ok(Method::Log),
            "columns" => Ok(Method::Columns),
            "log-forced" | "log_forced" => Ok(Method::LogForced),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOptions {
    pub method: Method,
    pub seed: u64,
    pub tol: Tolerances,
}

impl Default for FrameOptions {
    fn default() -> Self {
        FrameOptions {
            method: Method::Columns,
            seed: 0,
            tol: Tolerances::default(),
        }
    }
}

impl FrameOptions {
    pub fn with_method(method: Method) -> Self {
        FrameOptions {
            method,
            ..Default::default()
        }
    }
}

/// Decisions taken while building a frame.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FrameMeta {
    pub method: String,
    pub seed: u64,
    /// Number of logarithms that hit the branch cut and were retried with a
    /// scalar phase shift of `tol.branch_shift`.
    pub branch_retries: usize,
    pub reference_vectors: Vec<Vec<[f64; 2]>>,
    pub reference_margins: Vec<f64>,
    /// Mismatch of the continued frame across the boundary, per axis.
    pub periodicity: Vec<f64>,
    /// Largest step of the contraction applied along the last axis.
    pub homotopy_max_step: Option<f64>,
    /// The result is not guaranteed to be continuous.
    pub forced: bool,
    /// Some axis has fewer points than recommended.
    pub coarse_grid: bool,
}

/// Per grid point, the `N×N` unitary expressing the frame in the local
/// occupied basis.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeFrame {
    grid: KGrid,
    coeffs: Vec<CMatrix>,
    pub meta: FrameMeta,
}

impl GaugeFrame {
    pub fn new(grid: KGrid, coeffs: Vec<CMatrix>, meta: FrameMeta) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::CountMismatch {
                expected: grid.len(),
                found: coeffs.len(),
            });
        }
        Ok(GaugeFrame { grid, coeffs, meta })
    }

    /// The frame equal to the local basis everywhere.
    pub fn identity(grid: KGrid, n: usize) -> Self {
        let coeffs = vec![identity(n); grid.len()];
        GaugeFrame {
            grid,
            coeffs,
            meta: FrameMeta::default(),
        }
    }

    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[CMatrix] {
        &self.coeffs
    }

    pub fn at(&self, flat: usize) -> &CMatrix {
        &self.coeffs[flat]
    }

    pub fn n(&self) -> usize {
        self.coeffs[0].ncols()
    }

    pub fn unitarity_deviation(&self) -> f64 {
        self.coeffs
            .iter()
            .map(unitarity_deviation)
            .fold(0.0, f64::max)
    }

    pub fn periodicity_residual(&self) -> f64 {
        self.meta.periodicity.iter().copied().fold(0.0, f64::max)
    }

    /// Right-multiply every coefficient matrix by `g`.
    pub fn rotated(&self, g: &CMatrix) -> Self {
        GaugeFrame {
            grid: self.grid.clone(),
            coeffs: self.coeffs.iter().map(|u| u * g).collect(),
            meta: self.meta.clone(),
        }
    }
}

fn check_dim<P: OverlapProvider + ?Sized>(p: &P, dim: usize) -> Result<()> {
    if p.grid().dim() != dim {
        return Err(Error::InvalidGrid(format!(
            "expected a {dim}d grid, got {}d",
            p.grid().dim()
        )));
    }
    if p.grid().is_coarse() {
        log::warn!(
            "grid {} has an axis below {} points; the frame may be under-resolved",
            p.grid().label(),
            crate::grid::MIN_FRAME_SIZE
        );
    }
    Ok(())
}

struct Edge {
    frames: Vec<CMatrix>,
    residual: f64,
    retried: bool,
}

/// Periodic frame along the line through `start` in direction `axis`, starting
/// from the local basis.
fn edge_frame<P: OverlapProvider + ?Sized>(
    p: &P,
    start: usize,
    axis: usize,
    tol: &Tolerances,
) -> Result<Edge> {
    let n = p.n_occ();
    let seq = transport_line(p, &identity(n), start, axis, tol)?;
    let v = closure_obstruction(p, &seq, start, axis, tol)?;
    let (l, retried) = match log_unitary_with(&v, tol) {
        Ok(log) => (log.l, false),
        Err(Error::BranchCut { phase }) => {
            let alpha = tol.branch_shift;
            log::info!(
                "obstruction eigenphase {phase:.6} on the branch cut; retrying with shift {alpha}"
            );
            let shifted = log_unitary_with(&(&v * crate::matcore::cis(-alpha)), tol)?;
            (shifted.l + identity(n) * c(0.0, alpha), true)
        }
        Err(e) => return Err(e),
    };
    let flow = ExpFlow::new(&l)?;
    let len = seq.len() as f64;
    let frames: Vec<CMatrix> = seq
        .iter()
        .enumerate()
        .map(|(i, u)| u * flow.at(-(i as f64) / len))
        .collect();
    let residual = max_diff(&(&v * flow.at(-1.0)), &identity(n));
    Ok(Edge {
        frames,
        residual,
        retried,
    })
}

/// One-dimensional frame: transport from the local basis at `k = 0`, then
/// spread the obstruction evenly with `exp(−k L)`.
pub fn frame_1d<P: OverlapProvider + ?Sized>(p: &P, opts: &FrameOptions) -> Result<GaugeFrame> {
    check_dim(p, 1)?;
    let edge = edge_frame(p, 0, 0, &opts.tol)?;
    let meta = FrameMeta {
        method: "transport".into(),
        seed: opts.seed,
        branch_retries: edge.retried as usize,
        periodicity: vec![edge.residual],
        coarse_grid: p.grid().is_coarse(),
        ..Default::default()
    };
    GaugeFrame::new(p.grid().clone(), edge.frames, meta)
}

/// Frames transported along `axis` from each base frame, and the obstruction
/// matrix closing each line.
fn transport_columns<P: OverlapProvider + ?Sized>(
    p: &P,
    starts: &[usize],
    base: &[CMatrix],
    axis: usize,
    tol: &Tolerances,
) -> Result<Vec<Column>> {
    starts
        .par_iter()
        .zip(base)
        .map(|(&s, u)| {
            let seq = transport_line(p, u, s, axis, tol)?;
            let v = closure_obstruction(p, &seq, s, axis, tol)?;
            Ok((seq, v))
        })
        .collect()
}

fn plane_name(axes: (usize, usize)) -> &'static str {
    match axes {
        (0, 1) => "k1k2",
        (0, 2) => "k1k3",
        (1, 2) => "k2k3",
        _ => "k?k?",
    }
}

/// Chern number of a 2d provider as the winding of its obstruction loop.
/// A transported column and its closure holonomy.
type Column = (Vec<CMatrix>, CMatrix);

fn obstruction_loop<P: OverlapProvider + ?Sized>(
    p: &P,
    tol: &Tolerances,
) -> Result<(Edge, Vec<Column>, UnitaryField, i64)> {
    let n1 = p.grid().size(0);
    let edge = edge_frame(p, 0, 0, tol)?;
    let starts: Vec<usize> = (0..n1).map(|i| p.grid().index(&[i, 0])).collect();
    let columns = transport_columns(p, &starts, &edge.frames, 1, tol)?;
    let field = UnitaryField::new(
        KGrid::line(n1)?,
        columns.iter().map(|(_, v)| v.clone()).collect(),
    )?;
    let c1 = winding_det(&field, tol)?.winding;
    Ok((edge, columns, field, c1))
}

/// Maximum over the loop (or surface) of `‖V·H(1) − H(0)‖`: how well the
/// corrected frame closes up across the last axis.
/// The obstruction loop over `k1` of a 2d grid: transport of the periodic
/// edge frame along `k2`, compared with its start.
pub fn obstruction_2d<P: OverlapProvider + ?Sized>(
    p: &P,
    tol: &Tolerances,
) -> Result<UnitaryField> {
    check_dim(p, 2)?;
    obstruction_loop(p, tol).map(|(_, _, field, _)| field)
}

fn closure_residual(obstruction: &UnitaryField, h: &Homotopy) -> f64 {
    let last = h.t_points() - 1;
    obstruction
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| max_diff(&(v * h.at(last, k)), h.at(0, k)))
        .fold(0.0, f64::max)
}

fn absorb(meta: &mut FrameMeta, h: &Homotopy) {
    meta.reference_vectors
        .extend(h.meta.reference_vectors.iter().cloned());
    meta.reference_margins
        .extend(h.meta.reference_margins.iter().copied());
    meta.forced |= h.meta.forced;
    meta.homotopy_max_step = Some(meta.homotopy_max_step.unwrap_or(0.0).max(h.max_step()));
}

/// Two-dimensional frame. Fails with `ChernObstruction` when the obstruction
/// loop winds; with [`Method::Log`] it also fails (`EigenvalueWinding`) when
/// the obstruction eigenvalues wind individually.
pub fn frame_2d<P: OverlapProvider + ?Sized>(p: &P, opts: &FrameOptions) -> Result<GaugeFrame> {
    check_dim(p, 2)?;
    let tol = &opts.tol;
    let (n1, n2) = (p.grid().size(0), p.grid().size(1));
    let (edge, columns, obstruction, c1) = obstruction_loop(p, tol)?;
    if c1 != 0 {
        return Err(Error::ChernObstruction(vec![ChernNumber {
            plane: plane_name((0, 1)),
            value: c1,
        }]));
    }
    let h = match opts.method {
        Method::Columns => contract_columns_1d(&obstruction, n2 + 1, opts.seed, tol)?,
        Method::Log => contract_log(&obstruction, n2 + 1, tol)?,
        Method::LogForced => contract_log_forced(&obstruction, n2 + 1, tol)?,
    };

    let mut coeffs = vec![CMatrix::zeros(0, 0); p.grid().len()];
    for (i, (seq, _)) in columns.iter().enumerate() {
        for (j, u) in seq.iter().enumerate() {
            coeffs[p.grid().index(&[i, j])] = u * h.at(j, i);
        }
    }
    let mut meta = FrameMeta {
        method: opts.method.to_string(),
        seed: opts.seed,
        branch_retries: edge.retried as usize,
        periodicity: vec![edge.residual, closure_residual(&obstruction, &h)],
        coarse_grid: p.grid().is_coarse(),
        ..Default::default()
    };
    absorb(&mut meta, &h);
    debug_assert_eq!(coeffs.len(), n1 * n2);
    GaugeFrame::new(p.grid().clone(), coeffs, meta)
}

/// Three-dimensional frame, column interpolation only. All three coordinate
/// planes through the origin are checked first; every nonzero Chern number is
/// reported.
pub fn frame_3d<P: OverlapProvider + ?Sized>(p: &P, opts: &FrameOptions) -> Result<GaugeFrame> {
    check_dim(p, 3)?;
    if opts.method != Method::Columns {
        return Err(Error::UnsupportedMethod(format!(
            "{} in three dimensions",
            opts.method
        )));
    }
    let tol = &opts.tol;

    let mut cherns = Vec::new();
    for (fixed, plane) in [(2, (0, 1)), (1, (0, 2)), (0, (1, 2))] {
        let slice = SliceProvider::new(p, fixed)?;
        let (_, _, _, value) = obstruction_loop(&slice, tol)?;
        if value != 0 {
            cherns.push(ChernNumber {
                plane: plane_name(plane),
                value,
            });
        }
    }
    if !cherns.is_empty() {
        return Err(Error::ChernObstruction(cherns));
    }

    let face = SliceProvider::new(p, 2)?;
    let face_frame = frame_2d(&face, opts)?;
    let starts: Vec<usize> = (0..face.grid().len()).map(|f| face.lift(f)).collect();
    let columns = transport_columns(p, &starts, face_frame.coeffs(), 2, tol)?;
    let surface = UnitaryField::new(
        face.grid().clone(),
        columns.iter().map(|(_, v)| v.clone()).collect(),
    )?;
    let n3 = p.grid().size(2);
    let h = contract_columns_2d(&surface, n3 + 1, opts.seed.wrapping_add(1), tol)?;

    let mut coeffs = vec![CMatrix::zeros(0, 0); p.grid().len()];
    for (f, ((seq, _), &start)) in columns.iter().zip(&starts).enumerate() {
        for (l, u) in seq.iter().enumerate() {
            coeffs[start + l] = u * h.at(l, f);
        }
    }
    let mut meta = face_frame.meta.clone();
    meta.periodicity.push(closure_residual(&surface, &h));
    meta.coarse_grid = p.grid().is_coarse();
    absorb(&mut meta, &h);
    GaugeFrame::new(p.grid().clone(), coeffs, meta)
}

/// Dispatch on the grid dimension.
pub fn frame<P: OverlapProvider + ?Sized>(p: &P, opts: &FrameOptions) -> Result<GaugeFrame> {
    match p.grid().dim() {
        1 => frame_1d(p, opts),
        2 => frame_2d(p, opts),
        _ => frame_3d(p, opts),
    }
}
