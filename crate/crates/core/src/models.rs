//! Tight-binding Bloch Hamiltonians on the unit torus.
//!
//! Every model here is exactly periodic, `H(k + e_i) = H(k)` with `k` in
//! fractional (reduced) coordinates.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::KGrid;
use crate::homotopy::UnitaryField;
use crate::matcore::{c, cis, herm_eig_with, identity, kron, CMatrix, C64};
use crate::tolerances::Tolerances;

type HamFn = dyn Fn(&[f64]) -> CMatrix + Send + Sync;

#[derive(Clone)]
pub struct BlochModel {
    name: String,
    dim: usize,
    n_bands: usize,
    n_occ: usize,
    h: Arc<HamFn>,
}

impl fmt::Debug for BlochModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BlochModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("n_bands", &self.n_bands)
            .field("n_occ", &self.n_occ)
            .finish()
    }
}

impl BlochModel {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        n_bands: usize,
        n_occ: usize,
        h: impl Fn(&[f64]) -> CMatrix + Send + Sync + 'static,
    ) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidParams(format!(
                "dimension {dim} not in 1..=3"
            )));
        }
        if n_occ == 0 || n_occ > n_bands {
            return Err(Error::InvalidParams(format!(
                "{n_occ} occupied bands out of {n_bands}"
            )));
        }
        Ok(BlochModel {
            name: name.into(),
            dim,
            n_bands,
            n_occ,
            h: Arc::new(h),
        })
    }

    /// A k-independent Hamiltonian.
    pub fn constant(h: CMatrix, n_occ: usize, dim: usize) -> Result<Self> {
        if !h.is_square() {
            return Err(Error::Shape("constant Hamiltonian must be square".into()));
        }
        let n = h.nrows();
        Self::new("constant", dim, n, n_occ, move |_| h.clone())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_bands(&self) -> usize {
        self.n_bands
    }

    pub fn n_occ(&self) -> usize {
        self.n_occ
    }

    pub fn hamiltonian(&self, k: &[f64]) -> CMatrix {
        (self.h)(k)
    }

    /// The same Hamiltonian with a different number of occupied bands.
    pub fn with_occupation(mut self, n_occ: usize) -> Result<Self> {
        if n_occ == 0 || n_occ > self.n_bands {
            return Err(Error::InvalidParams(format!(
                "{n_occ} occupied bands out of {}",
                self.n_bands
            )));
        }
        self.n_occ = n_occ;
        Ok(self)
    }

    /// Lift a model to a higher-dimensional torus; the extra coordinates are ignored.
    pub fn broadcast(self, dim: usize) -> Result<Self> {
        if dim < self.dim || dim > 3 {
            return Err(Error::InvalidParams(format!(
                "cannot broadcast to dimension {dim}"
            )));
        }
        let inner = self.h.clone();
        let d0 = self.dim;
        Self::new(
            format!("{}-broadcast", self.name),
            dim,
            self.n_bands,
            self.n_occ,
            move |k| inner(&k[..d0]),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KaneMeleParams {
    pub t: f64,
    pub lambda_so: f64,
    pub lambda_nu: f64,
    pub lambda_r: f64,
}

impl KaneMeleParams {
    /// Hopping and spin-orbit coupling fixed to 1.
    pub fn new(lambda_nu: f64, lambda_r: f64) -> Self {
        KaneMeleParams {
            t: 1.0,
            lambda_so: 1.0,
            lambda_nu,
            lambda_r,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.t, self.lambda_so, self.lambda_nu, self.lambda_r];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams(
                "non-finite Kane-Mele parameter".into(),
            ));
        }
        if self.lambda_r >= 2.0 * 3f64.sqrt() {
            return Err(Error::InvalidParams(format!(
                "lambda_R = {} must stay below 2*sqrt(3)",
                self.lambda_r
            )));
        }
        Ok(())
    }
}

fn pauli() -> [CMatrix; 4] {
    let o = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        identity(2),
        CMatrix::from_row_slice(2, 2, &[o, one, one, o]),
        CMatrix::from_row_slice(2, 2, &[o, -i, i, o]),
        CMatrix::from_row_slice(2, 2, &[one, o, o, -one]),
    ]
}

/// The five Dirac matrices `(σx⊗I, σz⊗I, σy⊗sx, σy⊗sy, σy⊗sz)` with sublattice
/// `σ` and spin `s`; basis index = 2·sublattice + spin.
pub fn dirac_matrices() -> [CMatrix; 5] {
    let [s0, sx, sy, sz] = pauli();
    [
        kron(&sx, &s0),
        kron(&sz, &s0),
        kron(&sy, &sx),
        kron(&sy, &sy),
        kron(&sy, &sz),
    ]
}

/// `Γ^{ab} = [Γ^a, Γ^b] / 2i`.
pub fn dirac_commutator(g: &[CMatrix; 5], a: usize, b: usize) -> CMatrix {
    (&g[a] * &g[b] - &g[b] * &g[a]) * c(0.0, -0.5)
}

/// Coefficients `d_1..d_5` and `d_12, d_15, d_23, d_24` at reduced coordinates `f`.
///
/// With `x = k·a1/2`, `y = √3 k_y a/2` on the hexagonal lattice spanned by
/// `a1 = (1,0)`, `a2 = (1/2, √3/2)`, reduced coordinates map to
/// `x = π f1`, `y = π (2 f2 − f1)`.
pub fn kane_mele_coefficients(p: &KaneMeleParams, f: &[f64]) -> ([f64; 5], [f64; 4]) {
    let x = PI * f[0];
    let y = PI * (2.0 * f[1] - f[0]);
    let (sx, cx) = x.sin_cos();
    let (sy, cy) = y.sin_cos();
    let r3 = 3f64.sqrt();
    let d = [
        p.t * (1.0 + 2.0 * cx * cy),
        p.lambda_nu,
        p.lambda_r * (1.0 - cx * cy),
        -r3 * p.lambda_r * sx * sy,
        0.0,
    ];
    let dab = [
        -2.0 * p.t * cx * sy,
        p.lambda_so * (2.0 * (2.0 * x).sin() - 4.0 * sx * cy),
        -p.lambda_r * cx * sy,
        r3 * p.lambda_r * sx * cy,
    ];
    (d, dab)
}

/// Index pairs of the commutator terms, matching the second array of
/// [`kane_mele_coefficients`].
pub const KANE_MELE_PAIRS: [(usize, usize); 4] = [(0, 1), (0, 4), (1, 2), (1, 3)];

/// Four-band Kane-Mele model with two occupied bands.
pub fn kane_mele(p: KaneMeleParams) -> Result<BlochModel> {
    p.validate()?;
    let g = dirac_matrices();
    let gab: Vec<CMatrix> = KANE_MELE_PAIRS
        .iter()
        .map(|&(a, b)| dirac_commutator(&g, a, b))
        .collect();
    BlochModel::new("kane-mele", 2, 4, 2, move |k| {
        let (d, dab) = kane_mele_coefficients(&p, k);
        let mut h = CMatrix::zeros(4, 4);
        for (da, ga) in d.iter().zip(&g) {
            h += ga * c(*da, 0.0);
        }
        for (dv, gv) in dab.iter().zip(&gab) {
            h += gv * c(*dv, 0.0);
        }
        h
    })
}

/// Kane-Mele planes stacked along the third axis, with an interlayer term that
/// modulates the staggered potential: `λ_ν → λ_ν + t_z cos 2πk₃`.
pub fn kane_mele_layered(p: KaneMeleParams, t_z: f64) -> Result<BlochModel> {
    p.validate()?;
    let plane = kane_mele(p)?;
    let g2 = dirac_matrices()[1].clone();
    BlochModel::new("kane-mele-layered", 3, 4, 2, move |k| {
        plane.hamiltonian(&k[..2]) + &g2 * c(t_z * (TAU * k[2]).cos(), 0.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HaldaneParams {
    pub t1: f64,
    pub t2: f64,
    pub phi: f64,
    pub mass: f64,
}

impl Default for HaldaneParams {
    fn default() -> Self {
        HaldaneParams {
            t1: 1.0,
            t2: 0.3,
            phi: -PI / 2.0,
            mass: 0.0,
        }
    }
}

/// Two-band Haldane model in the periodic (atom-independent) Bloch convention.
pub fn haldane(p: HaldaneParams) -> Result<BlochModel> {
    if ![p.t1, p.t2, p.phi, p.mass].iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidParams("non-finite Haldane parameter".into()));
    }
    BlochModel::new("haldane", 2, 2, 1, move |k| {
        let hab = c(p.t1, 0.0) * (c(1.0, 0.0) + cis(-TAU * k[0]) + cis(-TAU * k[1]));
        let thetas = [k[0], k[1] - k[0], -k[1]];
        let d0 = 2.0 * p.t2 * p.phi.cos() * thetas.iter().map(|t| (TAU * t).cos()).sum::<f64>();
        let dz =
            p.mass - 2.0 * p.t2 * p.phi.sin() * thetas.iter().map(|t| (TAU * t).sin()).sum::<f64>();
        CMatrix::from_row_slice(2, 2, &[c(d0 + dz, 0.0), hab, hab.conj(), c(d0 - dz, 0.0)])
    })
}

/// Haldane model at default parameters, Chern number 1 in the lower band.
pub fn haldane_chern() -> BlochModel {
    haldane(HaldaneParams::default()).expect("default parameters are valid")
}

/// Occupied state `(cos α, sin α·e^{2πik₁})`; `H = I − 2|v⟩⟨v|` on `T^1`.
pub fn two_level(alpha: f64) -> BlochModel {
    BlochModel::new("two-level", 1, 2, 1, move |k| {
        let v =
            nalgebra::DVector::from_vec(vec![c(alpha.cos(), 0.0), cis(TAU * k[0]) * alpha.sin()]);
        identity(2) - (&v * v.adjoint()) * c(2.0, 0.0)
    })
    .expect("valid shape")
}

/// `diag(exp(2πi·w_j·k))` sampled at `n_k` points of `T^1`.
pub fn toy_diag_loop(windings: &[i64], n_k: usize) -> Result<UnitaryField> {
    if windings.is_empty() {
        return Err(Error::InvalidParams("empty winding list".into()));
    }
    let grid = KGrid::line(n_k)?;
    let n = windings.len();
    let values = (0..n_k)
        .map(|i| {
            let k = i as f64 / n_k as f64;
            let mut m = CMatrix::zeros(n, n);
            for (j, &w) in windings.iter().enumerate() {
                m[(j, j)] = cis(TAU * w as f64 * k);
            }
            m
        })
        .collect();
    UnitaryField::new(grid, values)
}

#[derive(Debug, Clone)]
pub struct SpectralSnapshot {
    pub k: Vec<f64>,
    pub eigenvalues: Vec<f64>,
    /// `n_bands × n_occ`, orthonormal columns.
    pub occ_vectors: CMatrix,
    /// `ε_{N+1} − ε_N`, infinite when every band is occupied.
    pub gap: f64,
}

pub fn spectral_snapshot(
    model: &BlochModel,
    k: &[f64],
    tol: &Tolerances,
) -> Result<SpectralSnapshot> {
    let eig = herm_eig_with(&model.hamiltonian(k), tol)?;
    let n = model.n_occ;
    let gap = if n < model.n_bands {
        eig.values[n] - eig.values[n - 1]
    } else {
        f64::INFINITY
    };
    if gap < tol.gap {
        return Err(Error::GapClosed { k: k.to_vec(), gap });
    }
    Ok(SpectralSnapshot {
        k: k.to_vec(),
        occ_vectors: eig.vectors.columns(0, n).into_owned(),
        eigenvalues: eig.values,
        gap,
    })
}

/// Smallest direct gap `ε_{N+1} − ε_N` over the grid.
pub fn min_gap(model: &BlochModel, grid: &KGrid) -> Result<f64> {
    if grid.dim() != model.dim {
        return Err(Error::InvalidGrid(format!(
            "{}d grid for a {}d model",
            grid.dim(),
            model.dim
        )));
    }
    let no_gap_check = Tolerances {
        gap: f64::NEG_INFINITY,
        ..Tolerances::default()
    };
    (0..grid.len())
        .into_par_iter()
        .map(|f| spectral_snapshot(model, &grid.point(f), &no_gap_check).map(|s| s.gap))
        .try_reduce(|| f64::INFINITY, |a, b| Ok(a.min(b)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrsKind {
    /// `θ = K`, `θ² = +1`.
    Bosonic,
    /// `θ = (I ⊗ i s_y) K` on the spin index (fastest), `θ² = −1`.
    Fermionic,
}

/// Unitary part of the time-reversal operator.
pub fn trs_unitary(kind: TrsKind, n_bands: usize) -> Result<CMatrix> {
    match kind {
        TrsKind::Bosonic => Ok(identity(n_bands)),
        TrsKind::Fermionic => {
            if !n_bands.is_multiple_of(2) {
                return Err(Error::InvalidParams(
                    "fermionic TRS needs an even band count".into(),
                ));
            }
            let isy = CMatrix::from_row_slice(
                2,
                2,
                &[c(0.0, 0.0), c(1.0, 0.0), c(-1.0, 0.0), c(0.0, 0.0)],
            );
            Ok(kron(&identity(n_bands / 2), &isy))
        }
    }
}

/// `max ‖H(−k) − θ H(k) θ⁻¹‖_F` over `samples` seeded random points.
pub fn check_trs(model: &BlochModel, kind: TrsKind, samples: usize) -> Result<f64> {
    let t = trs_unitary(kind, model.n_bands)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x7a5);
    let mut worst = 0.0f64;
    for _ in 0..samples {
        let k: Vec<f64> = (0..model.dim).map(|_| rng.random_range(0.0..1.0)).collect();
        let mk: Vec<f64> = k.iter().map(|x| -x).collect();
        let h = model.hamiltonian(&k);
        let image = &t * h.map(|z: C64| z.conj()) * t.adjoint();
        worst = worst.max((model.hamiltonian(&mk) - image).norm());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matcore::max_diff;
    use proptest::prelude::*;
    use rand::Rng;

    fn km(lv: f64, lr: f64) -> BlochModel {
        kane_mele(KaneMeleParams::new(lv, lr)).unwrap()
    }

    #[test]
    fn dirac_algebra() {
        let g = dirac_matrices();
        for a in 0..5 {
            for b in 0..5 {
                let anti = &g[a] * &g[b] + &g[b] * &g[a];
                let expected = if a == b {
                    identity(4) * c(2.0, 0.0)
                } else {
                    CMatrix::zeros(4, 4)
                };
                assert!(max_diff(&anti, &expected) < 1e-15, "{a}{b}");
            }
        }
    }

    #[test]
    fn rashba_bound_is_enforced() {
        assert!(matches!(
            kane_mele(KaneMeleParams::new(0.0, 2.0 * 3f64.sqrt())),
            Err(Error::InvalidParams(_))
        ));
        assert!(kane_mele(KaneMeleParams::new(0.0, 3.4)).is_ok());
    }

    #[test]
    fn trivial_phase_is_gapped() {
        let g = min_gap(&km(6.0, 1.0), &KGrid::square(96).unwrap()).unwrap();
        assert!(g > 0.3, "gap {g}");
    }

    #[test]
    fn gap_closes_at_critical_point_without_rashba() {
        let lv = 3.0 * 3f64.sqrt();
        // K point sits on the 3n grids.
        let g = min_gap(&km(lv, 0.0), &KGrid::square(96).unwrap()).unwrap();
        assert!(g < 1e-12, "gap {g}");
        let off = min_gap(&km(lv + 0.5, 0.0), &KGrid::square(96).unwrap()).unwrap();
        assert!(off > 0.9, "gap {off}");
    }

    #[test]
    fn spin_blocks_decouple_without_rashba_and_staggering() {
        let m = km(0.0, 0.0);
        for &k in &[[0.1, 0.7], [0.33, 0.2], [0.9, 0.45]] {
            let h = m.hamiltonian(&k);
            for a in 0..4 {
                for b in 0..4 {
                    if a % 2 != b % 2 {
                        assert_eq!(h[(a, b)], c(0.0, 0.0));
                    }
                }
            }
        }
    }

    #[test]
    fn coefficients_have_definite_parity() {
        let p = KaneMeleParams::new(1.3, 0.8);
        let m = kane_mele(p).unwrap();
        let g = dirac_matrices();
        let trace = |h: &CMatrix, gm: &CMatrix| (gm * h).trace().re / 4.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let k = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let h = m.hamiltonian(&k);
            let hm = m.hamiltonian(&[-k[0], -k[1]]);
            for ga in &g {
                assert!((trace(&h, ga) - trace(&hm, ga)).abs() < 1e-10);
            }
            for &(a, b) in &KANE_MELE_PAIRS {
                let gab = dirac_commutator(&g, a, b);
                assert!((trace(&h, &gab) + trace(&hm, &gab)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn fermionic_trs_holds_for_kane_mele() {
        let t = trs_unitary(TrsKind::Fermionic, 4).unwrap();
        let t2 = &t * t.map(|z: C64| z.conj());
        assert!(max_diff(&t2, &(identity(4) * c(-1.0, 0.0))) < 1e-15);
        for &(lv, lr) in &[(0.0, 1.0), (6.0, 1.0), (1.0, 3.0), (-2.0, 0.3)] {
            assert!(check_trs(&km(lv, lr), TrsKind::Fermionic, 200).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn haldane_breaks_trs_both_ways() {
        let h = haldane_chern();
        assert!(check_trs(&h, TrsKind::Bosonic, 100).unwrap() > 0.1);
        assert!(check_trs(&h, TrsKind::Fermionic, 100).unwrap() > 0.1);
    }

    #[test]
    fn haldane_is_gapped() {
        let g = min_gap(&haldane_chern(), &KGrid::square(96).unwrap()).unwrap();
        assert!(g > 0.5, "gap {g}");
    }

    #[test]
    fn constant_real_hamiltonian_has_bosonic_trs() {
        let h =
            CMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(-2.0, 0.0)]);
        let m = BlochModel::constant(h, 1, 2).unwrap();
        assert_eq!(check_trs(&m, TrsKind::Bosonic, 10).unwrap(), 0.0);
    }

    #[test]
    fn snapshot_of_kane_mele_origin() {
        let s = spectral_snapshot(&km(6.0, 1.0), &[0.0, 0.0], &Tolerances::default()).unwrap();
        assert_eq!(s.occ_vectors.shape(), (4, 2));
        assert!(crate::matcore::unitarity_deviation(&s.occ_vectors) < 1e-12);
    }

    #[test]
    fn snapshot_of_constant_model() {
        let h =
            CMatrix::from_row_slice(2, 2, &[c(-1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)]);
        let m = BlochModel::constant(h, 1, 1).unwrap();
        let s = spectral_snapshot(&m, &[0.3], &Tolerances::default()).unwrap();
        assert_eq!(
            s.occ_vectors,
            CMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)])
        );
        assert_eq!(s.gap, 2.0);
    }

    #[test]
    fn snapshot_reports_closed_gap() {
        let m = BlochModel::constant(identity(2), 1, 1).unwrap();
        assert!(matches!(
            spectral_snapshot(&m, &[0.0], &Tolerances::default()),
            Err(Error::GapClosed { .. })
        ));
    }

    #[test]
    fn kramers_pairs_of_spectra() {
        let m = km(1.0, 1.0);
        let tol = Tolerances::default();
        for &k in &[[0.1, 0.2], [0.37, 0.81], [0.5, 0.05]] {
            let a = spectral_snapshot(&m, &k, &tol).unwrap();
            let b = spectral_snapshot(&m, &[-k[0], -k[1]], &tol).unwrap();
            for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn toy_loop_values() {
        let f = toy_diag_loop(&[2, -1], 8).unwrap();
        assert!((f.values()[1][(0, 0)] - cis(TAU * 2.0 / 8.0)).norm() < 1e-15);
        let id = toy_diag_loop(&[0, 0, 0], 5).unwrap();
        assert!(id.values().iter().all(|v| max_diff(v, &identity(3)) == 0.0));
    }

    fn any_model() -> impl Strategy<Value = BlochModel> {
        prop_oneof![
            (-7.0f64..7.0, 0.0f64..3.4).prop_map(|(lv, lr)| km(lv, lr)),
            Just(haldane_chern()),
            (0.0f64..1.5).prop_map(two_level),
            (0.0f64..7.0, 0.0f64..2.0, -1.0f64..1.0).prop_map(|(lv, lr, tz)| kane_mele_layered(
                KaneMeleParams::new(lv, lr),
                tz
            )
            .unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn periodic_and_hermitian(m in any_model(), f in proptest::collection::vec(0.0f64..1.0, 3), axis in 0usize..3) {
            let k = &f[..m.dim()];
            let axis = axis % m.dim();
            let mut shifted = k.to_vec();
            shifted[axis] += 1.0;
            let h = m.hamiltonian(k);
            prop_assert!(max_diff(&h, &m.hamiltonian(&shifted)) <= 1e-12);
            prop_assert!(max_diff(&h, &h.adjoint()) <= 1e-12);
        }

        #[test]
        fn occupied_projector_is_orthogonal(m in any_model(), f in proptest::collection::vec(0.0f64..1.0, 3)) {
            let tol = Tolerances { gap: f64::NEG_INFINITY, ..Tolerances::default() };
            let s = spectral_snapshot(&m, &f[..m.dim()], &tol).unwrap();
            let p = &s.occ_vectors * s.occ_vectors.adjoint();
            prop_assert!(max_diff(&(&p * &p), &p) <= 1e-12);
            prop_assert!(max_diff(&p, &p.adjoint()) <= 1e-12);
        }

        #[test]
        fn kane_mele_ftrs(lv in -8.0f64..8.0, lr in 0.0f64..3.46) {
            prop_assert!(check_trs(&km(lv, lr), TrsKind::Fermionic, 20).unwrap() <= 1e-10);
        }
    }
}
