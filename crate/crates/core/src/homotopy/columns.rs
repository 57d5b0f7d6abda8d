//! Contraction of unitary loops and surfaces column by column.
//!
//! Stage `n` parallel-transports the not yet contracted columns along `t`
//! inside the orthogonal complement of the columns already built, then rotates
//! the first of them onto a fixed reference vector by interpolating its
//! coefficients on the sphere. The last column is a phase and is unwound
//! directly; the constant matrix of reference vectors is finally taken to the
//! identity with its logarithm.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use super::winding::{transpose, winding_det};
use super::{t_grid, Homotopy, HomotopyMeta, UnitaryField};
use crate::error::{Error, Result};
use crate::grid::KGrid;
use crate::matcore::{
    c, cis, identity, loewdin_with, log_unitary_any, principal, CMatrix, ExpFlow, C64,
};
use crate::tolerances::Tolerances;

type CVector = DVector<C64>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceChoice {
    #[serde(serialize_with = "ser_vector")]
    pub vector: CVector,
    /// `min_k ‖ṽ(k) + p‖` for the chosen `p`.
    pub margin: f64,
    /// Index of the winning candidate (axis vectors come first).
    pub candidate: usize,
}

fn ser_vector<S: serde::Serializer>(v: &CVector, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|z| [z.re, z.im]))
}

/// Pick a unit vector `p` orthogonal to `exclude` that stays away from the
/// antipode of every sample: maximizes `min_k ‖samples[k] + p‖` over the axis
/// vectors and seeded Gaussian candidates.
pub fn pick_reference_vector(
    samples: &[CVector],
    exclude: &[CVector],
    tol: &Tolerances,
    seed: u64,
) -> Result<ReferenceChoice> {
    let n = samples.first().map(|s| s.len()).unwrap_or(0);
    if n == 0 {
        return Err(Error::Shape("no samples".into()));
    }
    let project = |mut p: CVector| {
        for e in exclude {
            let overlap = e.dotc(&p);
            p -= e * overlap;
        }
        let norm = p.norm();
        (norm > 1e-3).then(|| p / c(norm, 0.0))
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut candidates = Vec::with_capacity(tol.candidate_budget);
    for i in 0..tol.candidate_budget {
        let raw = if i < n {
            let mut e = CVector::zeros(n);
            e[i] = c(1.0, 0.0);
            e
        } else {
            CVector::from_fn(n, |_, _| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                c(re, im)
            })
        };
        candidates.push(project(raw));
    }

    let scores: Vec<Option<f64>> = candidates
        .par_iter()
        .map(|p| {
            p.as_ref().map(|p| {
                samples
                    .iter()
                    .map(|s| (s + p).norm())
                    .fold(f64::INFINITY, f64::min)
            })
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.iter().enumerate() {
        if let Some(s) = *s {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    let (idx, margin) = best.ok_or(Error::NoSafeVector { margin: 0.0 })?;
    if margin < tol.reference_margin {
        return Err(Error::NoSafeVector { margin });
    }
    Ok(ReferenceChoice {
        vector: candidates[idx].clone().expect("scored"),
        margin,
        candidate: idx,
    })
}

/// Contract a loop `T¹ → U(N)` with zero determinant winding to the identity.
pub fn contract_columns_1d(
    lp: &UnitaryField,
    t_points: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Homotopy> {
    if lp.grid().dim() != 1 {
        return Err(Error::InvalidGrid("expected a loop".into()));
    }
    let w = winding_det(lp, tol)?.winding;
    if w != 0 {
        return Err(Error::WindingObstruction(vec![w]));
    }
    contract(lp, t_points, seed, tol)
}

/// Contract a surface `T² → U(N)` whose two boundary loops have zero
/// determinant winding.
pub fn contract_columns_2d(
    surface: &UnitaryField,
    t_points: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Homotopy> {
    if surface.grid().dim() != 2 {
        return Err(Error::InvalidGrid("expected a surface".into()));
    }
    let w1 = winding_det(&surface.restrict_line(0, 0)?, tol)?.winding;
    let w2 = winding_det(&surface.restrict_line(0, 1)?, tol)?.winding;
    if w1 != 0 || w2 != 0 {
        return Err(Error::WindingObstruction(vec![w1, w2]));
    }
    contract(surface, t_points, seed, tol)
}

fn stage_seed(seed: u64, stage: usize) -> u64 {
    seed ^ (stage as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn contract(
    field: &UnitaryField,
    t_points: usize,
    seed: u64,
    tol: &Tolerances,
) -> Result<Homotopy> {
    let ts = t_grid(t_points)?;
    let nt = ts.len();
    let nk = field.grid().len();
    let n = field.n();

    // cols[k][t]: the columns built so far (later ones are zero).
    let mut cols: Vec<Vec<CMatrix>> = vec![vec![CMatrix::zeros(n, n); nt]; nk];
    let mut refs: Vec<CVector> = Vec::with_capacity(n);
    let mut meta = HomotopyMeta {
        method: "columns".into(),
        seed: Some(seed),
        ..Default::default()
    };

    for stage in 0..n {
        let width = n - stage;
        // Transport the remaining columns along t inside Ran P_{stage}(k, t).
        let moved: Vec<Vec<CMatrix>> = cols
            .par_iter()
            .enumerate()
            .map(|(k, built)| {
                let mut cur = field.values()[k].columns(stage, width).into_owned();
                let mut out = Vec::with_capacity(nt);
                out.push(cur.clone());
                for frame in built.iter().skip(1) {
                    let mut p = identity(n);
                    for j in 0..stage {
                        let v = frame.column(j);
                        let vh = v.adjoint();
                        p -= v * vh;
                    }
                    cur = loewdin_with(&(p * &cur), tol)?.0;
                    out.push(cur.clone());
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let ends: Vec<CVector> = moved
            .iter()
            .map(|w| w[nt - 1].column(0).into_owned())
            .collect();

        if stage + 1 < n {
            let choice = pick_reference_vector(&ends, &refs, tol, stage_seed(seed, stage))?;
            let target = choice.vector.clone();
            cols.par_iter_mut().zip(&moved).for_each(|(built, w)| {
                let coeff = w[nt - 1].adjoint() * &target;
                for ((frame, wt), &t) in built.iter_mut().zip(w).zip(&ts) {
                    let mut ch = &coeff * c(t, 0.0);
                    ch[0] += c(1.0 - t, 0.0);
                    let norm = ch.norm();
                    let col = wt * (ch / c(norm, 0.0));
                    frame.set_column(stage, &col);
                }
            });
            meta.reference_vectors
                .push(target.iter().map(|z| [z.re, z.im]).collect());
            meta.reference_margins.push(choice.margin);
            refs.push(target);
        } else {
            let target = ends[0].clone();
            let raw: Vec<f64> = ends.iter().map(|e| target.dotc(e).arg()).collect();
            let phi = unwrap_phase(field.grid(), &raw, tol)?;
            cols.par_iter_mut()
                .zip(&moved)
                .zip(&phi)
                .for_each(|((built, w), &ph)| {
                    for ((frame, wt), &t) in built.iter_mut().zip(w).zip(&ts) {
                        let col = wt.column(0) * cis(-t * ph);
                        frame.set_column(stage, &col);
                    }
                });
            meta.reference_vectors
                .push(target.iter().map(|z| [z.re, z.im]).collect());
            refs.push(target);
        }
    }

    // Take the constant frame of reference vectors to the identity.
    let vbar = CMatrix::from_columns(&refs);
    let flow = ExpFlow::new(&log_unitary_any(&vbar, tol)?.l)?;
    let corrections: Vec<CMatrix> = ts.iter().map(|&t| flow.at(-t)).collect();
    cols.par_iter_mut().for_each(|built| {
        for (frame, e) in built.iter_mut().zip(&corrections) {
            *frame = &*frame * e;
        }
    });

    Ok(Homotopy::from_values(
        field.grid().clone(),
        ts,
        transpose(cols, nt),
        meta,
    ))
}

fn check_step(step: f64, tol: &Tolerances) -> Result<f64> {
    if step.abs() >= std::f64::consts::PI - tol.aliasing_margin {
        return Err(Error::AliasedPhase { step: step.abs() });
    }
    Ok(step)
}

/// Continuous phase over a periodic 1d or 2d grid with `phi[0] = raw[0]`.
/// Fails with `WindingObstruction` when the phase winds around any axis.
fn unwrap_phase(grid: &KGrid, raw: &[f64], tol: &Tolerances) -> Result<Vec<f64>> {
    let tau = std::f64::consts::TAU;
    let step = |a: usize, b: usize| check_step(principal(raw[b] - raw[a]), tol);
    match grid.dim() {
        1 => {
            let n = raw.len();
            let mut phi = vec![raw[0]; n];
            for i in 1..n {
                phi[i] = phi[i - 1] + step(i - 1, i)?;
            }
            let m = ((phi[n - 1] + step(n - 1, 0)? - phi[0]) / tau).round() as i64;
            if m != 0 {
                return Err(Error::WindingObstruction(vec![m]));
            }
            Ok(phi)
        }
        2 => {
            let (n1, n2) = (grid.size(0), grid.size(1));
            let at = |i: usize, j: usize| grid.index(&[i, j]);
            let mut phi = vec![0.0; raw.len()];
            phi[at(0, 0)] = raw[at(0, 0)];
            for i in 1..n1 {
                phi[at(i, 0)] = phi[at(i - 1, 0)] + step(at(i - 1, 0), at(i, 0))?;
            }
            for i in 0..n1 {
                for j in 1..n2 {
                    phi[at(i, j)] = phi[at(i, j - 1)] + step(at(i, j - 1), at(i, j))?;
                }
            }
            // Every edge along the first axis must agree with the unwrapped
            // values, and the boundary increments must not depend on the row.
            let mut m1 = None;
            for j in 0..n2 {
                for i in 0..n1 {
                    let (a, b) = (at(i, j), at((i + 1) % n1, j));
                    let mismatch = phi[a] + step(a, b)? - phi[b];
                    let turns = (mismatch / tau).round() as i64;
                    if i + 1 < n1 {
                        if turns != 0 {
                            return Err(Error::PhaseUnwrapInconsistent);
                        }
                    } else if *m1.get_or_insert(turns) != turns {
                        return Err(Error::PhaseUnwrapInconsistent);
                    }
                }
            }
            let mut m2 = None;
            for i in 0..n1 {
                let (a, b) = (at(i, n2 - 1), at(i, 0));
                let turns = ((phi[a] + step(a, b)? - phi[b]) / tau).round() as i64;
                if *m2.get_or_insert(turns) != turns {
                    return Err(Error::PhaseUnwrapInconsistent);
                }
            }
            let (m1, m2) = (m1.unwrap_or(0), m2.unwrap_or(0));
            if m1 != 0 || m2 != 0 {
                return Err(Error::WindingObstruction(vec![m1, m2]));
            }
            Ok(phi)
        }
        d => Err(Error::InvalidGrid(format!(
            "cannot unwrap a phase over {d} dimensions"
        ))),
    }
}
