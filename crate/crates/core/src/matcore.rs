//! Dense complex linear algebra: Hermitian eigenproblems, Löwdin
//! orthonormalization, and logarithms/exponentials on the unitary group.

use nalgebra::{DMatrix, DVector, Schur, SymmetricEigen, SVD};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tolerances::Tolerances;

pub type CMatrix = DMatrix<Complex64>;
pub type C64 = Complex64;

const EIG_MAX_ITER: usize = 10_000;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `e^{iθ}`.
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Largest entry of `|a − b|`.
pub fn max_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `max |U*U − I|` entrywise. Works for tall matrices too (orthonormal columns).
pub fn unitarity_deviation(u: &CMatrix) -> f64 {
    let g = u.adjoint() * u;
    max_diff(&g, &identity(u.ncols()))
}

pub fn det(a: &CMatrix) -> C64 {
    a.clone().determinant()
}

/// Map a phase to the principal interval (−π, π].
#[inline]
pub fn principal(theta: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let mut t = theta - two_pi * (theta / two_pi).round();
    if t <= -std::f64::consts::PI {
        t += two_pi;
    }
    if t > std::f64::consts::PI {
        t -= two_pi;
    }
    t
}

/// Kronecker product.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

#[derive(Debug, Clone)]
pub struct HermEig {
    /// Ascending.
    pub values: Vec<f64>,
    /// Orthonormal columns; the largest-modulus entry of each column is real positive.
    pub vectors: CMatrix,
}

pub fn herm_eig(a: &CMatrix) -> Result<HermEig> {
    herm_eig_with(a, &Tolerances::default())
}

pub fn herm_eig_with(a: &CMatrix, tol: &Tolerances) -> Result<HermEig> {
    if !a.is_square() {
        return Err(Error::Shape(format!(
            "{}x{} is not square",
            a.nrows(),
            a.ncols()
        )));
    }
    if !is_finite(a) {
        return Err(Error::NonFinite);
    }
    let scale = a.norm();
    let asym = (a - a.adjoint()).norm();
    if asym > tol.hermiticity * scale.max(f64::MIN_POSITIVE) && asym > 0.0 {
        return Err(Error::NonHermitian {
            asymmetry: asym / scale.max(f64::MIN_POSITIVE),
        });
    }
    let n = a.nrows();
    if n == 0 {
        return Ok(HermEig {
            values: vec![],
            vectors: CMatrix::zeros(0, 0),
        });
    }
    let sym = (a + a.adjoint()) * c(0.5, 0.0);
    let eig =
        SymmetricEigen::try_new(sym, f64::EPSILON, EIG_MAX_ITER).ok_or(Error::NoConvergence)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .total_cmp(&eig.eigenvalues[j])
            .then(i.cmp(&j))
    });

    let mut vectors = CMatrix::zeros(n, n);
    let mut values = Vec::with_capacity(n);
    for (dst, &src) in order.iter().enumerate() {
        values.push(eig.eigenvalues[src]);
        let col = eig.eigenvectors.column(src);
        let phase = fixing_phase(col.iter().copied());
        for r in 0..n {
            vectors[(r, dst)] = col[r] * phase;
        }
    }
    if !is_finite(&vectors) {
        return Err(Error::NonFinite);
    }
    Ok(HermEig { values, vectors })
}

/// Unit phase that rotates the largest-modulus entry onto the positive real axis.
/// Near-ties are broken towards the lowest index so the choice is stable.
fn fixing_phase(col: impl Iterator<Item = C64> + Clone) -> C64 {
    let biggest = col.clone().map(|z| z.norm()).fold(0.0, f64::max);
    if biggest == 0.0 {
        return c(1.0, 0.0);
    }
    let pivot = col
        .into_iter()
        .find(|z| z.norm() >= biggest * (1.0 - 1e-9))
        .expect("nonzero column");
    pivot.conj() / pivot.norm()
}

/// Smallest singular value.
pub fn sigma_min(a: &CMatrix) -> f64 {
    let svd = SVD::new(a.clone(), false, false);
    svd.singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Largest singular value (spectral norm).
pub fn sigma_max(a: &CMatrix) -> f64 {
    let svd = SVD::new(a.clone(), false, false);
    svd.singular_values.iter().copied().fold(0.0, f64::max)
}

/// Polar factor `WX*` of `A = WΣX*`: the closest matrix with orthonormal
/// columns. Fails with `RankDeficient` when `σ_min < tol.rank_error`.
pub fn loewdin(a: &CMatrix) -> Result<CMatrix> {
    loewdin_with(a, &Tolerances::default()).map(|(u, _)| u)
}

/// Löwdin factor together with the smallest singular value of the input.
pub fn loewdin_with(a: &CMatrix, tol: &Tolerances) -> Result<(CMatrix, f64)> {
    if !is_finite(a) {
        return Err(Error::NonFinite);
    }
    if a.ncols() > a.nrows() {
        return Err(Error::Shape(format!(
            "{}x{} cannot have orthonormal columns",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.ncols() == 0 {
        return Ok((a.clone(), f64::INFINITY));
    }
    let svd = SVD::try_new(a.clone(), true, true, f64::EPSILON, EIG_MAX_ITER)
        .ok_or(Error::NoConvergence)?;
    let smin = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(smin >= tol.rank_error) {
        return Err(Error::RankDeficient { sigma_min: smin });
    }
    let w = svd.u.as_ref().expect("requested");
    let xh = svd.v_t.as_ref().expect("requested");
    Ok((w * xh, smin))
}

/// Eigen-decomposition of a unitary matrix: principal eigenphases in (−π, π]
/// and a unitary eigenbasis, `U = Q diag(e^{iθ}) Q*`.
#[derive(Debug, Clone)]
pub struct UnitaryEig {
    pub phases: Vec<f64>,
    pub vectors: CMatrix,
}

impl UnitaryEig {
    pub fn eigenvalues(&self) -> Vec<C64> {
        self.phases.iter().map(|&t| cis(t)).collect()
    }
}

pub fn unitary_eig(u: &CMatrix, tol: &Tolerances) -> Result<UnitaryEig> {
    if !u.is_square() {
        return Err(Error::Shape(format!(
            "{}x{} is not square",
            u.nrows(),
            u.ncols()
        )));
    }
    if !is_finite(u) {
        return Err(Error::NonFinite);
    }
    let dev = unitarity_deviation(u);
    if dev > tol.unitarity {
        return Err(Error::NonUnitary { deviation: dev });
    }
    let n = u.nrows();
    if n == 0 {
        return Ok(UnitaryEig {
            phases: vec![],
            vectors: CMatrix::zeros(0, 0),
        });
    }
    // A normal matrix has a diagonal Schur form, so the Schur vectors are eigenvectors.
    let schur =
        Schur::try_new(u.clone(), f64::EPSILON, EIG_MAX_ITER).ok_or(Error::NoConvergence)?;
    let (q, t) = schur.unpack();
    let phases = (0..n).map(|i| principal(t[(i, i)].arg())).collect();
    Ok(UnitaryEig { phases, vectors: q })
}

#[derive(Debug, Clone)]
pub struct AntiHermLog {
    /// Anti-Hermitian, `exp(l) = U`.
    pub l: CMatrix,
    /// Principal eigenphases in (−π, π].
    pub phases: Vec<f64>,
}

/// Principal logarithm of a unitary matrix.
pub fn log_unitary(u: &CMatrix) -> Result<AntiHermLog> {
    log_unitary_with(u, &Tolerances::default())
}

pub fn log_unitary_with(u: &CMatrix, tol: &Tolerances) -> Result<AntiHermLog> {
    log_unitary_impl(u, tol, Some(tol.branch_cut))
}

/// Principal logarithm without the branch-cut check. Any logarithm of a
/// single constant matrix is fine when continuity in a parameter is not needed.
pub fn log_unitary_any(u: &CMatrix, tol: &Tolerances) -> Result<AntiHermLog> {
    log_unitary_impl(u, tol, None)
}

fn log_unitary_impl(u: &CMatrix, tol: &Tolerances, cut: Option<f64>) -> Result<AntiHermLog> {
    let eig = unitary_eig(u, tol)?;
    if let Some(cut) = cut {
        for &p in &eig.phases {
            if std::f64::consts::PI - p.abs() < cut {
                return Err(Error::BranchCut { phase: p });
            }
        }
    }
    let l = from_eig(&eig.vectors, eig.phases.iter().map(|&t| c(0.0, t)));
    Ok(AntiHermLog {
        l: antiherm_part(&l),
        phases: eig.phases,
    })
}

/// `Q diag(d) Q*`.
pub fn from_eig(q: &CMatrix, d: impl Iterator<Item = C64>) -> CMatrix {
    let d = DVector::from_iterator(q.ncols(), d);
    let mut scaled = q.clone();
    for (j, dj) in d.iter().enumerate() {
        for z in scaled.column_mut(j).iter_mut() {
            *z *= dj;
        }
    }
    scaled * q.adjoint()
}

fn antiherm_part(l: &CMatrix) -> CMatrix {
    (l - l.adjoint()) * c(0.5, 0.0)
}

/// `exp(sL)` for anti-Hermitian `L`.
pub fn exp_antiherm(l: &CMatrix, s: f64) -> Result<CMatrix> {
    Ok(ExpFlow::new(l)?.at(s))
}

/// Pre-diagonalized anti-Hermitian generator: evaluates `exp(sL)` for many `s`
/// with one eigendecomposition.
#[derive(Debug, Clone)]
pub struct ExpFlow {
    q: CMatrix,
    /// Eigenvalues of `−iL` (real).
    omega: Vec<f64>,
}

impl ExpFlow {
    pub fn new(l: &CMatrix) -> Result<Self> {
        if !is_finite(l) {
            return Err(Error::NonFinite);
        }
        let scale = l.norm();
        let dev = (l + l.adjoint()).norm();
        if dev > 1e-10 * scale && dev > 1e-14 {
            return Err(Error::NonAntiHermitian {
                deviation: dev / scale,
            });
        }
        // −iL is Hermitian; symmetrize away the residual part before diagonalizing.
        let h = antiherm_part(l) * c(0.0, -1.0);
        let h = (&h + h.adjoint()) * c(0.5, 0.0);
        let eig = herm_eig(&h)?;
        Ok(ExpFlow {
            q: eig.vectors,
            omega: eig.values,
        })
    }

    pub fn at(&self, s: f64) -> CMatrix {
        from_eig(&self.q, self.omega.iter().map(|&w| cis(s * w)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, r: usize, cols: usize) -> CMatrix {
        CMatrix::from_fn(r, cols, |_, _| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    fn random_hermitian(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let a = random_matrix(rng, n, n);
        (&a + a.adjoint()) * c(0.5, 0.0)
    }

    /// Anti-Hermitian matrix whose spectrum is confined to `(−bound, bound)`.
    fn random_antiherm(rng: &mut ChaCha8Rng, n: usize, bound: f64) -> CMatrix {
        let q = loewdin(&random_matrix(rng, n, n)).unwrap();
        let phases: Vec<f64> = (0..n).map(|_| rng.random_range(-bound..bound)).collect();
        from_eig(&q, phases.iter().map(|&t| c(0.0, t)))
    }

    /// Taylor series with scaling and squaring; independent of any eigensolver.
    fn expm_taylor(a: &CMatrix) -> CMatrix {
        let n = a.nrows();
        let squarings = (a.norm().max(1.0).log2().ceil() as i32 + 4).max(0);
        let b = a * c(0.5f64.powi(squarings), 0.0);
        let mut term = identity(n);
        let mut sum = identity(n);
        for k in 1..30 {
            term = &term * &b * c(1.0 / k as f64, 0.0);
            sum += &term;
        }
        for _ in 0..squarings {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn herm_eig_identity() {
        let e = herm_eig(&identity(2)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0]);
        assert!(max_diff(&e.vectors, &identity(2)) < 1e-15);
    }

    #[test]
    fn herm_eig_diagonal() {
        let a = CMatrix::from_diagonal(&DVector::from_vec(vec![c(3.0, 0.0), c(-1.0, 0.0)]));
        let e = herm_eig(&a).unwrap();
        assert_eq!(e.values, vec![-1.0, 3.0]);
        let expected =
            CMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]);
        assert!(max_diff(&e.vectors, &expected) < 1e-15);
    }

    #[test]
    fn herm_eig_random_residual_and_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_hermitian(&mut rng, 6);
        let e = herm_eig(&a).unwrap();
        let scale = a.norm();
        for (i, &lam) in e.values.iter().enumerate() {
            let q = e.vectors.column(i);
            let r = &a * q - q * c(lam, 0.0);
            assert!(r.norm() < 1e-10 * scale);
            let (pivot, _) = q.iter().enumerate().fold((0, 0.0), |acc, (j, z)| {
                if z.norm() > acc.1 + 1e-9 {
                    (j, z.norm())
                } else {
                    acc
                }
            });
            assert!(q[pivot].im.abs() < 1e-14 && q[pivot].re > 0.0);
        }
        assert!(e.values.windows(2).all(|w| w[0] <= w[1]));
        let rebuilt = from_eig(&e.vectors, e.values.iter().map(|&v| c(v, 0.0)));
        assert!(max_diff(&rebuilt, &a) < 1e-12);
        assert!(unitarity_deviation(&e.vectors) < 1e-12);
    }

    #[test]
    fn herm_eig_rejects_non_hermitian() {
        let a =
            CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(herm_eig(&a), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn herm_eig_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_hermitian(&mut rng, 8);
        let e1 = herm_eig(&a).unwrap();
        let e2 = herm_eig(&a).unwrap();
        assert_eq!(e1.values, e2.values);
        assert_eq!(e1.vectors, e2.vectors);
    }

    #[test]
    fn loewdin_orthonormal_input_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = loewdin(&random_matrix(&mut rng, 5, 3)).unwrap();
        assert!(max_diff(&loewdin(&q).unwrap(), &q) < 1e-12);
    }

    #[test]
    fn loewdin_single_column() {
        let a = CMatrix::from_column_slice(2, 1, &[c(2.0, 0.0), c(0.0, 0.0)]);
        let u = loewdin(&a).unwrap();
        assert!(
            max_diff(
                &u,
                &CMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)])
            ) < 1e-15
        );
    }

    #[test]
    fn loewdin_matches_inverse_square_root_oracle() {
        // A (A*A)^{-1/2} via a Hermitian eigendecomposition of the Gram matrix.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 4, 2);
        let gram = herm_eig(&(a.adjoint() * &a)).unwrap();
        let inv_sqrt = from_eig(
            &gram.vectors,
            gram.values.iter().map(|&v| c(1.0 / v.sqrt(), 0.0)),
        );
        let oracle = &a * inv_sqrt;
        assert!(max_diff(&loewdin(&a).unwrap(), &oracle) < 1e-10);
    }

    #[test]
    fn loewdin_rank_deficient() {
        let a =
            CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]);
        assert!(matches!(loewdin(&a), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn log_identity_is_zero() {
        let l = log_unitary(&identity(3)).unwrap();
        assert!(max_abs(&l.l) < 1e-15);
    }

    #[test]
    fn log_analytic_phases() {
        let u = CMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0, 1.0), c(0.0, -1.0)]));
        let l = log_unitary(&u).unwrap();
        let h = std::f64::consts::FRAC_PI_2;
        let expected = CMatrix::from_diagonal(&DVector::from_vec(vec![c(0.0, h), c(0.0, -h)]));
        assert!(max_diff(&l.l, &expected) < 1e-14);
    }

    #[test]
    fn log_branch_cut() {
        let u = CMatrix::from_diagonal(&DVector::from_vec(vec![c(-1.0, 0.0), c(1.0, 0.0)]));
        assert!(matches!(log_unitary(&u), Err(Error::BranchCut { .. })));
        assert!(log_unitary_any(&u, &Tolerances::default()).is_ok());
    }

    #[test]
    fn log_exp_round_trip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for n in 1..6 {
            let l = random_antiherm(&mut rng, n, std::f64::consts::PI - 0.1);
            let u = expm_taylor(&l);
            let log = log_unitary(&u).unwrap();
            assert!(max_diff(&exp_antiherm(&log.l, 1.0).unwrap(), &u) < 1e-10);
            assert!(max_diff(&expm_taylor(&log.l), &u) < 1e-10);
            assert!(max_diff(&log.l, &l) < 1e-9);
        }
    }

    #[test]
    fn exp_trivial_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let l = random_antiherm(&mut rng, 3, 2.0);
        assert!(max_diff(&exp_antiherm(&l, 0.0).unwrap(), &identity(3)) < 1e-14);
        let pi = CMatrix::from_element(1, 1, c(0.0, std::f64::consts::PI));
        let e = exp_antiherm(&pi, 1.0).unwrap();
        assert!((e[(0, 0)] - c(-1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn exp_semigroup() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let l = random_antiherm(&mut rng, 3, 3.0);
        let lhs = exp_antiherm(&l, 0.3).unwrap() * exp_antiherm(&l, 0.7).unwrap();
        assert!(max_diff(&lhs, &exp_antiherm(&l, 1.0).unwrap()) < 1e-12);
        assert!(max_diff(&exp_antiherm(&l, 1.0).unwrap(), &expm_taylor(&l)) < 1e-11);
    }

    #[test]
    fn exp_rejects_hermitian_generator() {
        assert!(matches!(
            exp_antiherm(&identity(2), 1.0),
            Err(Error::NonAntiHermitian { .. })
        ));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn seeded(seed: u64) -> ChaCha8Rng {
            ChaCha8Rng::seed_from_u64(seed)
        }

        proptest! {
            #[test]
            fn loewdin_idempotent(seed in any::<u64>(), rows in 1usize..7, extra in 0usize..3) {
                let mut rng = seeded(seed);
                let cols = rows.saturating_sub(extra).max(1);
                let a = random_matrix(&mut rng, rows, cols);
                if let Ok(u) = loewdin(&a) {
                    prop_assert!(unitarity_deviation(&u) < 1e-12);
                    prop_assert!(max_diff(&loewdin(&u).unwrap(), &u) < 1e-12);
                }
            }

            #[test]
            fn log_round_trip(seed in any::<u64>(), n in 1usize..6) {
                let mut rng = seeded(seed);
                let l = random_antiherm(&mut rng, n, std::f64::consts::PI - 0.01);
                let u = exp_antiherm(&l, 1.0).unwrap();
                let log = log_unitary(&u).unwrap();
                prop_assert!(max_diff(&exp_antiherm(&log.l, 1.0).unwrap(), &u) < 1e-10);
                prop_assert!(log.phases.iter().all(|p| p.abs() <= std::f64::consts::PI));
            }

            #[test]
            fn exp_unitary_on_unit_interval(seed in any::<u64>(), n in 1usize..6, s in 0.0f64..=1.0) {
                let mut rng = seeded(seed);
                let l = random_antiherm(&mut rng, n, 10.0);
                prop_assert!(unitarity_deviation(&exp_antiherm(&l, s).unwrap()) < 1e-12);
            }
        }
    }
}
