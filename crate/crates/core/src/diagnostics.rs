//! Frame quality measures: finite-difference regularity, plaquette Chern
//! numbers, Marzari-Vanderbilt spreads and grid convergence studies.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frames::{frame, FrameOptions, GaugeFrame};
use crate::grid::{KGrid, Lattice};
use crate::matcore::{det, principal, CMatrix};
use crate::models::BlochModel;
use crate::tolerances::Tolerances;
use crate::transport::{ModelProvider, OverlapProvider};

/// Per-point regularity `Σ_axes ‖M(k, k+δ)·U(k+δ) − U(k)‖_F / δ`.
#[derive(Debug, Clone, Serialize)]
pub struct RegularityField {
    #[serde(skip)]
    pub grid: KGrid,
    pub values: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

/// Forward finite-difference size of the frame, measured through the overlaps
/// so that only the physical frame matters, not the local basis.
pub fn regularity<P: OverlapProvider + ?Sized>(
    frame: &GaugeFrame,
    p: &P,
) -> Result<RegularityField> {
    let grid = p.grid();
    if frame.grid() != grid {
        return Err(Error::InvalidGrid(format!(
            "frame on {} but overlaps on {}",
            frame.grid().label(),
            grid.label()
        )));
    }
    let values = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let mut total = 0.0;
            for axis in 0..grid.dim() {
                let (nb, _) = grid.neighbor(k, axis, 1);
                let m = p.overlap(k, axis, 1)?;
                total += (m * frame.at(nb) - frame.at(k)).norm() / grid.spacing(axis);
            }
            Ok(total)
        })
        .collect::<Result<Vec<f64>>>()?;
    let max = values.iter().copied().fold(0.0, f64::max);
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(RegularityField {
        grid: grid.clone(),
        values,
        max,
        mean,
    })
}

/// Chern number of the occupied bundle over a 2d grid from plaquette fluxes.
///
/// Each plaquette contributes `arg det(M(k,k+e₂) M(k+e₂,k+e₁+e₂) M(k+e₁+e₂,k+e₁) M(k+e₁,k))`.
/// With this orientation the result equals the determinant winding of the
/// transport obstruction loop.
pub fn chern_plaquette<P: OverlapProvider + ?Sized>(p: &P, tol: &Tolerances) -> Result<i64> {
    let grid = p.grid();
    if grid.dim() != 2 {
        return Err(Error::InvalidGrid(format!(
            "plaquette Chern number needs a 2d grid, got {}d",
            grid.dim()
        )));
    }
    let fluxes = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let (k2, _) = grid.neighbor(k, 1, 1);
            let (k1, _) = grid.neighbor(k, 0, 1);
            let (k12, _) = grid.neighbor(k2, 0, 1);
            let loop_m = p.overlap(k, 1, 1)?
                * p.overlap(k2, 0, 1)?
                * p.overlap(k12, 1, -1)?
                * p.overlap(k1, 0, -1)?;
            let d = det(&loop_m);
            if !(d.norm() > 0.0) {
                return Err(Error::RankDeficient { sigma_min: 0.0 });
            }
            Ok(principal(d.arg()))
        })
        .collect::<Result<Vec<f64>>>()?;
    let total = fluxes.iter().sum::<f64>() / std::f64::consts::TAU;
    let rounded = total.round();
    let residual = (total - rounded).abs();
    if residual > tol.integer_residual {
        return Err(Error::NonIntegerResidual { residual });
    }
    Ok(rounded as i64)
}

/// Chern numbers of every coordinate plane through the origin of a 3d grid,
/// labelled `k1k2`, `k1k3`, `k2k3`.
pub fn chern_planes<P: OverlapProvider + ?Sized>(
    p: &P,
    tol: &Tolerances,
) -> Result<Vec<crate::ChernNumber>> {
    match p.grid().dim() {
        2 => Ok(vec![crate::ChernNumber {
            plane: "k1k2",
            value: chern_plaquette(p, tol)?,
        }]),
        3 => [(2, "k1k2"), (1, "k1k3"), (0, "k2k3")]
            .iter()
            .map(|&(fixed, plane)| {
                let slice = crate::transport::SliceProvider::new(p, fixed)?;
                Ok(crate::ChernNumber {
                    plane,
                    value: chern_plaquette(&slice, tol)?,
                })
            })
            .collect(),
        d => Err(Error::InvalidGrid(format!("no planes in a {d}d grid"))),
    }
}

/// One shell of finite-difference vectors sharing a weight.
#[derive(Debug, Clone, Serialize)]
pub struct Shell {
    pub weight: f64,
    pub offsets: Vec<Vec<i32>>,
    pub bvectors: Vec<Vec<f64>>,
}

/// Finite-difference stencil satisfying `Σ_b w_b b bᵀ = I`.
#[derive(Debug, Clone, Serialize)]
pub struct SpreadGeometry {
    pub dim: usize,
    pub shells: Vec<Shell>,
}

impl SpreadGeometry {
    /// Search shells of grid offsets in `{−1, 0, 1}^d` in order of length and
    /// keep adding linearly independent ones until the completeness relation
    /// holds.
    pub fn new(lattice: &Lattice, grid: &KGrid, tol: &Tolerances) -> Result<Self> {
        let d = grid.dim();
        if lattice.dim() != d {
            return Err(Error::InvalidGrid(format!(
                "{}d lattice for a {d}d grid",
                lattice.dim()
            )));
        }
        let mut offsets: Vec<Vec<i32>> = (0..3i32.pow(d as u32))
            .map(|mut code| {
                (0..d)
                    .map(|_| {
                        let o = code % 3 - 1;
                        code /= 3;
                        o
                    })
                    .collect::<Vec<i32>>()
            })
            .filter(|o| o.iter().any(|&x| x != 0))
            .collect();
        let length = |o: &Vec<i32>| {
            lattice
                .bvector(grid, o)
                .iter()
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
        };
        offsets.sort_by(|a, b| length(a).total_cmp(&length(b)));

        let mut candidates: Vec<Shell> = vec![];
        for o in offsets {
            let b = lattice.bvector(grid, &o);
            let len = length(&o);
            match candidates.last_mut() {
                Some(s) if (norm(&s.bvectors[0]) - len).abs() <= 1e-8 * len => {
                    s.offsets.push(o);
                    s.bvectors.push(b);
                }
                _ => candidates.push(Shell {
                    weight: 0.0,
                    offsets: vec![o],
                    bvectors: vec![b],
                }),
            }
        }

        let pairs: Vec<(usize, usize)> = (0..d).flat_map(|i| (i..d).map(move |j| (i, j))).collect();
        let target = DVector::from_iterator(
            pairs.len(),
            pairs.iter().map(|&(i, j)| if i == j { 1.0 } else { 0.0 }),
        );
        let column = |s: &Shell| {
            DVector::from_iterator(
                pairs.len(),
                pairs
                    .iter()
                    .map(|&(i, j)| s.bvectors.iter().map(|b| b[i] * b[j]).sum::<f64>()),
            )
        };

        let mut chosen: Vec<Shell> = vec![];
        let mut best = f64::INFINITY;
        for shell in candidates {
            let mut trial: Vec<DVector<f64>> = chosen.iter().map(column).collect();
            trial.push(column(&shell));
            let a = DMatrix::from_columns(&trial);
            let svd = a.clone().svd(true, true);
            let smax = svd.singular_values.max();
            if svd.singular_values.min() <= 1e-8 * smax {
                continue;
            }
            let w = svd
                .solve(&target, 1e-12)
                .map_err(|e| Error::Shape(e.to_string()))?;
            let residual = (&a * &w - &target).norm();
            chosen.push(shell);
            best = residual;
            if residual < tol.shell_completeness {
                for (s, wi) in chosen.iter_mut().zip(w.iter()) {
                    s.weight = *wi;
                }
                return Ok(SpreadGeometry {
                    dim: d,
                    shells: chosen,
                });
            }
            if chosen.len() == pairs.len() {
                break;
            }
        }
        Err(Error::IncompleteShells { residual: best })
    }

    /// Explicit shells; the completeness relation is checked, not assumed.
    pub fn from_shells(dim: usize, shells: Vec<Shell>, tol: &Tolerances) -> Result<Self> {
        let residual = completeness_residual(dim, &shells);
        if !(residual < tol.shell_completeness) {
            return Err(Error::IncompleteShells { residual });
        }
        Ok(SpreadGeometry { dim, shells })
    }

    /// Frobenius norm of `Σ_b w_b b bᵀ − I`.
    pub fn completeness_residual(&self) -> f64 {
        completeness_residual(self.dim, &self.shells)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn completeness_residual(dim: usize, shells: &[Shell]) -> f64 {
    let mut m = DMatrix::<f64>::identity(dim, dim) * -1.0;
    for s in shells {
        for b in &s.bvectors {
            let bv = DVector::from_column_slice(b);
            m += &bv * bv.transpose() * s.weight;
        }
    }
    m.norm()
}

/// Lattice matching the reduced coordinates of the built-in models: hexagonal
/// for the honeycomb models, unit cubic otherwise.
pub fn default_lattice(model: &BlochModel) -> Lattice {
    if model.name().starts_with("kane-mele") || model.name().starts_with("haldane") {
        Lattice::hexagonal(model.dim())
    } else {
        Lattice::cubic(model.dim())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpreadReport {
    /// `Σ_n (⟨r²⟩_n − |r̄_n|²)`.
    pub omega_total: f64,
    /// Gauge-invariant part.
    pub omega_i: f64,
    pub centers: Vec<Vec<f64>>,
    pub spreads: Vec<f64>,
}

/// Marzari-Vanderbilt spread of the Wannier functions of `frame`, in the
/// squared length units of `geometry`.
pub fn spread<P: OverlapProvider + ?Sized>(
    frame: &GaugeFrame,
    p: &P,
    geometry: &SpreadGeometry,
) -> Result<SpreadReport> {
    let grid = p.grid();
    if frame.grid() != grid || geometry.dim != grid.dim() {
        return Err(Error::InvalidGrid(
            "frame, overlaps and stencil disagree".into(),
        ));
    }
    let n = frame.n();
    let d = grid.dim();
    let nk = grid.len() as f64;

    struct Acc {
        center: Vec<Vec<f64>>,
        r2: Vec<f64>,
        omega_i: f64,
    }
    let zero = || Acc {
        center: vec![vec![0.0; d]; n],
        r2: vec![0.0; n],
        omega_i: 0.0,
    };
    let acc = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let mut a = zero();
            for shell in &geometry.shells {
                for (o, b) in shell.offsets.iter().zip(&shell.bvectors) {
                    let m: CMatrix = p.overlap_offset(k, o)?;
                    let to = grid.shifted(k, o);
                    let mt = frame.at(k).adjoint() * &m * frame.at(to);
                    a.omega_i += shell.weight * (n as f64 - m.norm_squared());
                    for band in 0..n {
                        let z = mt[(band, band)];
                        if z.norm() < 0.1 {
                            log::warn!("diagonal overlap {:.3e} at k={k}, band {band}: frame is not smooth here", z.norm());
                        }
                        let phase = -z.arg();
                        for (ci, bi) in a.center[band].iter_mut().zip(b) {
                            *ci += shell.weight * bi * phase;
                        }
                        a.r2[band] += shell.weight * (1.0 - z.norm_sqr() + phase * phase);
                    }
                }
            }
            Ok::<Acc, Error>(a)
        })
        .try_reduce(zero, |mut x, y| {
            for band in 0..n {
                for c in 0..d {
                    x.center[band][c] += y.center[band][c];
                }
                x.r2[band] += y.r2[band];
            }
            x.omega_i += y.omega_i;
            Ok(x)
        })?;

    let centers: Vec<Vec<f64>> = acc
        .center
        .iter()
        .map(|c| c.iter().map(|x| x / nk).collect())
        .collect();
    let spreads: Vec<f64> = (0..n)
        .map(|band| acc.r2[band] / nk - centers[band].iter().map(|x| x * x).sum::<f64>())
        .collect();
    Ok(SpreadReport {
        omega_total: spreads.iter().sum(),
        omega_i: acc.omega_i / nk,
        centers,
        spreads,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub size: usize,
    pub max_regularity: Option<f64>,
    pub mean_regularity: Option<f64>,
    pub omega: Option<f64>,
    pub periodicity: Option<f64>,
    pub error: Option<String>,
}

/// Build frames on `size^d` grids for each size and record regularity and
/// spread. Failures are recorded per row rather than aborting the study.
pub fn convergence_study(
    model: &BlochModel,
    opts: &FrameOptions,
    sizes: &[usize],
    lattice: &Lattice,
) -> Vec<ConvergenceRow> {
    sizes
        .iter()
        .map(|&size| {
            let run = || -> Result<(f64, f64, f64, f64)> {
                let grid = KGrid::new(&vec![size; model.dim()])?;
                let p = ModelProvider::new(model, &grid, &opts.tol)?;
                let f = frame(&p, opts)?;
                let reg = regularity(&f, &p)?;
                let geom = SpreadGeometry::new(lattice, &grid, &opts.tol)?;
                let s = spread(&f, &p, &geom)?;
                Ok((reg.max, reg.mean, s.omega_total, f.periodicity_residual()))
            };
            match run() {
                Ok((max, mean, omega, per)) => ConvergenceRow {
                    size,
                    max_regularity: Some(max),
                    mean_regularity: Some(mean),
                    omega: Some(omega),
                    periodicity: Some(per),
                    error: None,
                },
                Err(e) => ConvergenceRow {
                    size,
                    max_regularity: None,
                    mean_regularity: None,
                    omega: None,
                    periodicity: None,
                    error: Some(e.kind().to_string()),
                },
            }
        })
        .collect()
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let opt = |x: Option<f64>| x.map(|v| format!("{v:.10e}")).unwrap_or_default();
    let mut out = String::from("size,max_regularity,mean_regularity,omega,periodicity,error\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.size,
            opt(r.max_regularity),
            opt(r.mean_regularity),
            opt(r.omega),
            opt(r.periodicity),
            r.error.as_deref().unwrap_or("")
        ));
    }
    out
}
