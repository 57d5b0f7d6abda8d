//! Unitary loops and surfaces over the torus, their winding numbers, and
//! contractions to the identity.

mod columns;
mod winding;

pub use columns::{
    contract_columns_1d, contract_columns_2d, pick_reference_vector, ReferenceChoice,
};
pub use winding::{
    contract_log, contract_log_forced, winding_det, winding_det_cyclic, winding_eigenvalues,
    winding_report, DetWinding, WindingReport,
};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::KGrid;
use crate::matcore::{identity, max_diff, unitarity_deviation, CMatrix};

/// `N×N` unitaries sampled on a periodic grid (a loop for 1d, a surface for 2d).
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryField {
    grid: KGrid,
    values: Vec<CMatrix>,
}

impl UnitaryField {
    pub fn new(grid: KGrid, values: Vec<CMatrix>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::CountMismatch {
                expected: grid.len(),
                found: values.len(),
            });
        }
        let n = values[0].nrows();
        if values.iter().any(|v| v.nrows() != n || v.ncols() != n) {
            return Err(Error::Shape(
                "field values must be square and of equal size".into(),
            ));
        }
        Ok(UnitaryField { grid, values })
    }

    /// A k-independent field.
    pub fn constant(grid: KGrid, value: CMatrix) -> Result<Self> {
        let values = vec![value; grid.len()];
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn into_values(self) -> Vec<CMatrix> {
        self.values
    }

    /// Largest `‖U*U − I‖` entry over the field.
    pub fn unitarity_deviation(&self) -> f64 {
        self.values
            .iter()
            .map(unitarity_deviation)
            .fold(0.0, f64::max)
    }

    /// The loop along `axis` through `flat`, as a 1d field.
    pub fn restrict_line(&self, flat: usize, axis: usize) -> Result<UnitaryField> {
        let pts = self.grid.line_through(flat, axis);
        UnitaryField::new(
            KGrid::line(pts.len())?,
            pts.iter().map(|&f| self.values[f].clone()).collect(),
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct HomotopyMeta {
    pub method: String,
    pub seed: Option<u64>,
    /// Reference vectors chosen per column stage, as `[re, im]` pairs.
    pub reference_vectors: Vec<Vec<[f64; 2]>>,
    /// Antipodal margin achieved by each reference vector.
    pub reference_margins: Vec<f64>,
    /// True when continuity was not guaranteed (principal logarithms per point).
    pub forced: bool,
}

/// A discrete homotopy `H(k, t)` with `t_j = j / (T − 1)`, `H(·,0)` the input
/// field and `H(·,1) = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct Homotopy {
    grid: KGrid,
    t: Vec<f64>,
    /// `values[j * grid.len() + k]`.
    values: Vec<CMatrix>,
    max_step: f64,
    pub meta: HomotopyMeta,
}

pub fn t_grid(points: usize) -> Result<Vec<f64>> {
    if points < 2 {
        return Err(Error::InvalidGrid(format!(
            "{points} homotopy time points (need at least 2)"
        )));
    }
    Ok((0..points)
        .map(|j| j as f64 / (points - 1) as f64)
        .collect())
}

impl Homotopy {
    pub(crate) fn from_values(
        grid: KGrid,
        t: Vec<f64>,
        values: Vec<CMatrix>,
        meta: HomotopyMeta,
    ) -> Self {
        debug_assert_eq!(values.len(), grid.len() * t.len());
        let mut h = Homotopy {
            grid,
            t,
            values,
            max_step: 0.0,
            meta,
        };
        h.max_step = h.compute_max_step();
        h
    }

    pub fn grid(&self) -> &KGrid {
        &self.grid
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn t_points(&self) -> usize {
        self.t.len()
    }

    pub fn at(&self, t_index: usize, k: usize) -> &CMatrix {
        &self.values[t_index * self.grid.len() + k]
    }

    pub fn slice(&self, t_index: usize) -> &[CMatrix] {
        let nk = self.grid.len();
        &self.values[t_index * nk..(t_index + 1) * nk]
    }

    pub fn slice_field(&self, t_index: usize) -> UnitaryField {
        UnitaryField {
            grid: self.grid.clone(),
            values: self.slice(t_index).to_vec(),
        }
    }

    pub fn values(&self) -> &[CMatrix] {
        &self.values
    }

    /// Largest Frobenius distance between values at neighboring `(k, t)` points,
    /// including neighbors across the k boundary.
    pub fn max_step(&self) -> f64 {
        self.max_step
    }

    fn compute_max_step(&self) -> f64 {
        let nk = self.grid.len();
        let mut worst = 0.0f64;
        for j in 0..self.t.len() {
            for k in 0..nk {
                let here = self.at(j, k);
                for axis in 0..self.grid.dim() {
                    let (nb, _) = self.grid.neighbor(k, axis, 1);
                    worst = worst.max((self.at(j, nb) - here).norm());
                }
                if j + 1 < self.t.len() {
                    worst = worst.max((self.at(j + 1, k) - here).norm());
                }
            }
        }
        worst
    }

    /// Largest distance of the `t = 1` slice from the identity.
    pub fn endpoint_error(&self) -> f64 {
        let id = identity(self.at(0, 0).nrows());
        self.slice(self.t.len() - 1)
            .iter()
            .map(|v| max_diff(v, &id))
            .fold(0.0, f64::max)
    }

    pub fn unitarity_deviation(&self) -> f64 {
        self.values
            .iter()
            .map(unitarity_deviation)
            .fold(0.0, f64::max)
    }

    /// Largest distance of the `t = 0` slice from `start`.
    pub fn start_error(&self, start: &UnitaryField) -> f64 {
        start
            .values
            .iter()
            .zip(self.slice(0))
            .map(|(a, b)| max_diff(a, b))
            .fold(0.0, f64::max)
    }
}
