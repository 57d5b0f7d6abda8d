use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::Serialize;

use super::{t_grid, Homotopy, HomotopyMeta, UnitaryField};
use crate::error::{Error, Result};
use crate::matcore::{
    cis, det, from_eig, log_unitary_any, principal, unitary_eig, ExpFlow, UnitaryEig, C64,
};
use crate::tolerances::Tolerances;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetWinding {
    pub winding: i64,
    /// Distance of the discrete winding from the nearest integer.
    pub residual: f64,
    /// Largest phase increment of the determinant between neighbors.
    pub max_step: f64,
}

/// Winding of a closed sequence of unit complex numbers (the last one is
/// followed by the first).
pub fn winding_det_cyclic(dets: &[C64], tol: &Tolerances) -> Result<DetWinding> {
    let n = dets.len();
    let mut total = 0.0;
    let mut max_step = 0.0f64;
    for i in 0..n {
        let step = (dets[(i + 1) % n] * dets[i].conj()).arg();
        max_step = max_step.max(step.abs());
        total += step;
    }
    if max_step >= PI - tol.aliasing_margin {
        return Err(Error::AliasedPhase { step: max_step });
    }
    let w = total / TAU;
    let residual = (w - w.round()).abs();
    if residual > tol.integer_residual {
        return Err(Error::NonIntegerResidual { residual });
    }
    Ok(DetWinding {
        winding: w.round() as i64,
        residual,
        max_step,
    })
}

/// `W(det V) = (1/2π) Σ arg(det V_{i+1} · conj det V_i)` around a loop.
pub fn winding_det(lp: &UnitaryField, tol: &Tolerances) -> Result<DetWinding> {
    require_loop(lp)?;
    let dets: Vec<C64> = lp.values().iter().map(det).collect();
    winding_det_cyclic(&dets, tol)
}

fn require_loop(lp: &UnitaryField) -> Result<()> {
    if lp.grid().dim() != 1 {
        return Err(Error::InvalidGrid(format!(
            "expected a loop, got a {}d field",
            lp.grid().dim()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindingReport {
    pub total: i64,
    /// Present when the eigenvalues could be followed unambiguously.
    pub per_eigenvalue: Option<Vec<i64>>,
    pub max_phase_step: f64,
}

/// Eigenphases followed continuously around a loop.
struct Tracking {
    eigs: Vec<UnitaryEig>,
    /// `slot[i][j]`: eigen index at point `i` carried by track `j`.
    slot: Vec<Vec<usize>>,
    /// `phase[i][j]`: continuous phase of track `j` at point `i`, `i = 0..=n`
    /// (the last entry is the return to the start).
    phase: Vec<Vec<f64>>,
    windings: Vec<i64>,
    max_step: f64,
}

fn close(a: f64, b: f64, eps: f64) -> bool {
    principal(a - b).abs() <= eps
}

fn track(values: &[crate::matcore::CMatrix], tol: &Tolerances) -> Result<Tracking> {
    let n = values.len();
    let eigs = values
        .par_iter()
        .map(|v| unitary_eig(v, tol))
        .collect::<Result<Vec<_>>>()?;
    let dim = eigs[0].phases.len();
    let eps = tol.eigenvalue_collision;

    // Degenerate eigenvalues at the base point start on one branch.
    let mut start = eigs[0].phases.clone();
    for j in 1..dim {
        if let Some(jj) = (0..j).find(|&jj| close(start[j], start[jj], eps)) {
            start[j] = start[jj];
        }
    }
    let mut slot = vec![(0..dim).collect::<Vec<_>>()];
    let mut phase = vec![start];
    let mut max_step = 0.0f64;

    for i in 0..n {
        let next = &eigs[(i + 1) % n].phases;
        let cur = &phase[i];
        let prev = if i > 0 { Some(&phase[i - 1]) } else { None };
        let pred: Vec<f64> = (0..dim)
            .map(|j| match prev {
                Some(p) => 2.0 * cur[j] - p[j],
                None => cur[j],
            })
            .collect();
        let cost = |j: usize, l: usize| principal(next[l] - pred[j]).abs();

        let mut pairs: Vec<(f64, usize, usize)> = (0..dim)
            .flat_map(|j| (0..dim).map(move |l| (j, l)))
            .map(|(j, l)| (cost(j, l), j, l))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut assign = vec![usize::MAX; dim];
        let mut taken = vec![false; dim];
        for &(_, j, l) in &pairs {
            if assign[j] == usize::MAX && !taken[l] {
                assign[j] = l;
                taken[l] = true;
            }
        }

        // Ambiguous only when exchanging two distinguishable tracks between two
        // distinct eigenvalues costs (almost) nothing.
        for j in 0..dim {
            for jj in j + 1..dim {
                let (l, ll) = (assign[j], assign[jj]);
                let distinct_targets = !close(next[l], next[ll], eps);
                let distinct_sources =
                    !close(cur[j], cur[jj], eps) || prev.is_some_and(|p| !close(p[j], p[jj], eps));
                if distinct_targets && distinct_sources {
                    let kept = cost(j, l) + cost(jj, ll);
                    let swapped = cost(j, ll) + cost(jj, l);
                    if swapped - kept < eps {
                        return Err(Error::EigenvalueCollision { index: (i + 1) % n });
                    }
                }
            }
        }

        let mut new_phase = vec![0.0; dim];
        for j in 0..dim {
            let inc = principal(next[assign[j]] - cur[j]);
            max_step = max_step.max(inc.abs());
            new_phase[j] = cur[j] + inc;
        }
        if max_step >= PI - tol.aliasing_margin {
            return Err(Error::AliasedPhase { step: max_step });
        }
        slot.push(assign);
        phase.push(new_phase);
    }

    // Each track must come back to the eigenvalue it started from.
    let mut windings = Vec::with_capacity(dim);
    for j in 0..dim {
        let begin = eigs[0].phases[slot[0][j]];
        let end = eigs[0].phases[slot[n][j]];
        if !close(begin, end, eps) {
            return Err(Error::EigenvalueCollision { index: 0 });
        }
        let w = (phase[n][j] - phase[0][j]) / TAU;
        let residual = (w - w.round()).abs();
        if residual > tol.integer_residual {
            return Err(Error::NonIntegerResidual { residual });
        }
        windings.push(w.round() as i64);
    }
    slot.pop();
    Ok(Tracking {
        eigs,
        slot,
        phase,
        windings,
        max_step,
    })
}

/// Per-eigenvalue windings by continuous phase tracking between neighbors.
pub fn winding_eigenvalues(lp: &UnitaryField, tol: &Tolerances) -> Result<WindingReport> {
    require_loop(lp)?;
    let tr = track(lp.values(), tol)?;
    let total = winding_det(lp, tol)?.winding;
    debug_assert_eq!(total, tr.windings.iter().sum::<i64>());
    Ok(WindingReport {
        total,
        per_eigenvalue: Some(tr.windings),
        max_phase_step: tr.max_step,
    })
}

/// Determinant winding, plus per-eigenvalue windings when they are well defined.
pub fn winding_report(lp: &UnitaryField, tol: &Tolerances) -> Result<WindingReport> {
    match winding_eigenvalues(lp, tol) {
        Ok(r) => Ok(r),
        Err(Error::EigenvalueCollision { .. }) => {
            let d = winding_det(lp, tol)?;
            Ok(WindingReport {
                total: d.winding,
                per_eigenvalue: None,
                max_phase_step: d.max_step,
            })
        }
        Err(e) => Err(e),
    }
}

/// `H(k, t) = exp((1 − t) L(k))` with `L(k)` the logarithm on the continuously
/// tracked branch. Fails when an eigenvalue winds.
pub fn contract_log(lp: &UnitaryField, t_points: usize, tol: &Tolerances) -> Result<Homotopy> {
    require_loop(lp)?;
    let ts = t_grid(t_points)?;
    let tr = track(lp.values(), tol)?;
    if tr.windings.iter().any(|&w| w != 0) {
        return Err(Error::EigenvalueWinding(tr.windings));
    }
    let n = lp.values().len();
    let dim = lp.n();
    let eps = tol.eigenvalue_collision;

    // Branch per eigen index; coinciding eigenvalues must share a branch for
    // the logarithm to be a function of the matrix.
    let mut branches = Vec::with_capacity(n);
    for i in 0..n {
        let mut b = vec![0.0; dim];
        for j in 0..dim {
            b[tr.slot[i][j]] = tr.phase[i][j];
        }
        for j in 0..dim {
            for jj in j + 1..dim {
                if close(b[j], b[jj], eps) && (b[j] - b[jj]).abs() > eps {
                    return Err(Error::EigenvalueCollision { index: i });
                }
            }
        }
        branches.push(b);
    }

    let per_k: Vec<Vec<_>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let q = &tr.eigs[i].vectors;
            ts.iter()
                .map(|&t| from_eig(q, branches[i].iter().map(|&th| cis((1.0 - t) * th))))
                .collect()
        })
        .collect();
    let meta = HomotopyMeta {
        method: "log".into(),
        ..Default::default()
    };
    Ok(Homotopy::from_values(
        lp.grid().clone(),
        ts.clone(),
        transpose(per_k, ts.len()),
        meta,
    ))
}

/// Pointwise principal logarithms, `H(k, t) = exp((1 − t) Log V(k))`. Always
/// succeeds on unitary input but is discontinuous wherever an eigenphase
/// crosses π.
pub fn contract_log_forced(
    field: &UnitaryField,
    t_points: usize,
    tol: &Tolerances,
) -> Result<Homotopy> {
    let ts = t_grid(t_points)?;
    let per_k: Vec<Vec<_>> = field
        .values()
        .par_iter()
        .map(|v| {
            let flow = ExpFlow::new(&log_unitary_any(v, tol)?.l)?;
            Ok(ts.iter().map(|&t| flow.at(1.0 - t)).collect())
        })
        .collect::<Result<_>>()?;
    let meta = HomotopyMeta {
        method: "log-forced".into(),
        forced: true,
        ..Default::default()
    };
    Ok(Homotopy::from_values(
        field.grid().clone(),
        ts.clone(),
        transpose(per_k, ts.len()),
        meta,
    ))
}

/// `[k][t]` to t-major flat storage.
pub(super) fn transpose<T: Clone>(per_k: Vec<Vec<T>>, t_len: usize) -> Vec<T> {
    let nk = per_k.len();
    let mut out = Vec::with_capacity(nk * t_len);
    for j in 0..t_len {
        for row in &per_k {
            out.push(row[j].clone());
        }
    }
    out
}
