//! Ground-state Hamiltonian of the NV electron spin (S = 1) coupled to the
//! host 14N nucleus (I = 1), its diagonalization, and the hyperfine-resolved
//! transition triplets.
//!
//! All energies are in MHz. The product basis is ordered
//! `(m_s, m_I) = (+1,+1), (+1,0), (+1,-1), (0,+1), ..., (-1,-1)`,
//! i.e. index `3 * (1 - m_s) + (1 - m_I)`.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eigen::{check_hermitian, jacobi_hermitian, EigenError};

pub const DIM: usize = 9;

/// 9x9 Hermitian matrix in the (m_s, m_I) product basis, MHz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HermitianMatrix9(pub [[Complex64; DIM]; DIM]);

impl HermitianMatrix9 {
    pub fn trace(&self) -> f64 {
        (0..DIM).map(|i| self.0[i][i].re).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0
            .iter()
            .flat_map(|r| r.iter())
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = [[Complex64::new(0.0, 0.0); DIM]; DIM];
        for (i, row) in self.0.iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                out[j][i] = z.conj();
            }
        }
        HermitianMatrix9(out)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpinError {
    #[error("spin parameter `{name}` is invalid: {value}")]
    InvalidParameter { name: &'static str, value: f64 },
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error("level labeling is ambiguous: level {level} has dominant-component overlap {overlap:.3} <= 0.5")]
    AmbiguousLabel { level: usize, overlap: f64 },
    #[error("level labels are not unique: (m_s={m_s}, m_I={m_i}) assigned twice")]
    DuplicateLabel { m_s: i8, m_i: i8 },
    #[error("no field angle in [0, pi/2] yields a branch splitting of {target} MHz at |B| = {b_mag} G")]
    SplittingUnreachable { target: f64, b_mag: f64 },
}

/// Physical constants of the NV + 14N ground-state system.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpinSystemParams {
    /// Zero-field splitting, MHz.
    pub d: f64,
    /// Electron gyromagnetic ratio, MHz/G.
    pub gamma_e: f64,
    /// Static field magnitude, G.
    pub b_mag: f64,
    /// Polar angle of the static field to the NV axis, rad.
    pub b_theta: f64,
    /// Axial hyperfine constant, MHz.
    pub a_par: f64,
    /// Transverse hyperfine constant, MHz.
    pub a_perp: f64,
    /// Nuclear quadrupole constant, MHz (enters as `-P Iz^2`).
    pub p_quad: f64,
}

impl Default for SpinSystemParams {
    fn default() -> Self {
        Self {
            d: 2870.0,
            gamma_e: 2.8025,
            b_mag: 40.0,
            b_theta: 0.0,
            a_par: 2.3,
            a_perp: 2.1,
            p_quad: -5.1,
        }
    }
}

impl SpinSystemParams {
    pub fn validate(&self) -> Result<(), SpinError> {
        let fields = [
            ("d", self.d),
            ("gamma_e", self.gamma_e),
            ("b_mag", self.b_mag),
            ("b_theta", self.b_theta),
            ("a_par", self.a_par),
            ("a_perp", self.a_perp),
            ("p_quad", self.p_quad),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(SpinError::InvalidParameter { name, value });
            }
        }
        if self.d <= 0.0 {
            return Err(SpinError::InvalidParameter { name: "d", value: self.d });
        }
        if self.gamma_e <= 0.0 {
            return Err(SpinError::InvalidParameter {
                name: "gamma_e",
                value: self.gamma_e,
            });
        }
        if self.b_mag < 0.0 {
            return Err(SpinError::InvalidParameter {
                name: "b_mag",
                value: self.b_mag,
            });
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.b_theta) {
            return Err(SpinError::InvalidParameter {
                name: "b_theta",
                value: self.b_theta,
            });
        }
        Ok(())
    }

    /// Returns a copy whose field angle is chosen so that the m_s = +1 and
    /// m_s = -1 triplet centers are `target` MHz apart at the current
    /// `b_mag`. The splitting falls monotonically with tilt; angles close to
    /// pi/2, where the two manifolds mix and labels become ambiguous, are
    /// treated as undershooting.
    pub fn with_branch_splitting(&self, target: f64) -> Result<Self, SpinError> {
        self.validate()?;
        let splitting_at = |theta: f64| -> Result<f64, SpinError> {
            let p = SpinSystemParams { b_theta: theta, ..*self };
            let levels = diagonalize(&build_hamiltonian(&p)?)?;
            let plus = transition_triplet(&levels, Branch::Plus)?;
            let minus = transition_triplet(&levels, Branch::Minus)?;
            Ok(plus.center - minus.center)
        };
        let unreachable = SpinError::SplittingUnreachable {
            target,
            b_mag: self.b_mag,
        };
        if splitting_at(0.0)? < target {
            return Err(unreachable);
        }
        let mut lo = 0.0;
        let mut hi = std::f64::consts::FRAC_PI_2;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            match splitting_at(mid) {
                Ok(s) if s > target => lo = mid,
                _ => hi = mid,
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        match splitting_at(lo) {
            Ok(s) if (s - target).abs() <= 1e-6 * target.abs().max(1.0) => Ok(SpinSystemParams {
                b_theta: lo,
                ..*self
            }),
            _ => Err(unreachable),
        }
    }
}

/// Spin-1 operators in the (+1, 0, -1) basis.
struct Spin1 {
    x: [[Complex64; 3]; 3],
    y: [[Complex64; 3]; 3],
    z: [[Complex64; 3]; 3],
}

impl Spin1 {
    fn new() -> Self {
        let o = Complex64::new(0.0, 0.0);
        let r = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let i = Complex64::new(0.0, FRAC_1_SQRT_2);
        Self {
            x: [[o, r, o], [r, o, r], [o, r, o]],
            y: [[o, -i, o], [i, o, -i], [o, i, o]],
            z: [
                [Complex64::new(1.0, 0.0), o, o],
                [o, o, o],
                [o, o, Complex64::new(-1.0, 0.0)],
            ],
        }
    }
}

fn identity3() -> [[Complex64; 3]; 3] {
    let mut m = [[Complex64::new(0.0, 0.0); 3]; 3];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = Complex64::new(1.0, 0.0);
    }
    m
}

fn mul3(a: &[[Complex64; 3]; 3], b: &[[Complex64; 3]; 3]) -> [[Complex64; 3]; 3] {
    let mut out = [[Complex64::new(0.0, 0.0); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

/// Adds `scale * (a ⊗ b)` into `h`.
fn add_kron(
    h: &mut [[Complex64; DIM]; DIM],
    scale: f64,
    a: &[[Complex64; 3]; 3],
    b: &[[Complex64; 3]; 3],
) {
    if scale == 0.0 {
        return;
    }
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    h[3 * i + k][3 * j + l] += a[i][j] * b[k][l] * scale;
                }
            }
        }
    }
}

/// Builds `D Sz^2 + gamma_e (Bz Sz + Bx Sx) + A_par Sz Iz
/// + A_perp (Sx Ix + Sy Iy) - P Iz^2` in MHz.
pub fn build_hamiltonian(params: &SpinSystemParams) -> Result<HermitianMatrix9, SpinError> {
    params.validate()?;
    let s = Spin1::new();
    let id = identity3();
    let sz2 = mul3(&s.z, &s.z);
    let bz = params.b_mag * params.b_theta.cos();
    let bx = params.b_mag * params.b_theta.sin();

    let mut h = [[Complex64::new(0.0, 0.0); DIM]; DIM];
    add_kron(&mut h, params.d, &sz2, &id);
    add_kron(&mut h, params.gamma_e * bz, &s.z, &id);
    add_kron(&mut h, params.gamma_e * bx, &s.x, &id);
    add_kron(&mut h, params.a_par, &s.z, &s.z);
    add_kron(&mut h, params.a_perp, &s.x, &s.x);
    add_kron(&mut h, params.a_perp, &s.y, &s.y);
    add_kron(&mut h, -params.p_quad, &id, &sz2);
    Ok(HermitianMatrix9(h))
}

/// Maps a product-basis index to its `(m_s, m_I)` pair.
pub fn basis_label(index: usize) -> (i8, i8) {
    assert!(index < DIM);
    (1 - (index / 3) as i8, 1 - (index % 3) as i8)
}

/// Inverse of [`basis_label`].
pub fn basis_index(m_s: i8, m_i: i8) -> usize {
    assert!((-1..=1).contains(&m_s) && (-1..=1).contains(&m_i));
    (3 * (1 - m_s) + (1 - m_i)) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelLabel {
    pub m_s: i8,
    pub m_i: i8,
}

/// Nine eigenlevels, ascending, with their dominant product-basis labels.
#[derive(Debug, Clone, Serialize)]
pub struct HyperfineLevels {
    pub energies: [f64; DIM],
    pub labels: [LevelLabel; DIM],
    pub basis_overlap: [f64; DIM],
    #[serde(skip)]
    pub vectors: [[Complex64; DIM]; DIM],
}

impl HyperfineLevels {
    /// Energy of the level labeled `(m_s, m_I)`, if exactly one carries it.
    pub fn energy_of(&self, m_s: i8, m_i: i8) -> Option<f64> {
        let mut found = None;
        for (k, l) in self.labels.iter().enumerate() {
            if l.m_s == m_s && l.m_i == m_i {
                if found.is_some() {
                    return None;
                }
                found = Some(self.energies[k]);
            }
        }
        found
    }

    /// Eigenvector `k` as a column.
    pub fn vector(&self, k: usize) -> [Complex64; DIM] {
        let mut v = [Complex64::new(0.0, 0.0); DIM];
        for (i, vi) in v.iter_mut().enumerate() {
            *vi = self.vectors[i][k];
        }
        v
    }
}

/// Diagonalizes the Hamiltonian and labels every level by its
/// largest-magnitude basis component (ties go to the lowest basis index).
pub fn diagonalize(h: &HermitianMatrix9) -> Result<HyperfineLevels, SpinError> {
    check_hermitian(&h.0, 1e-12)?;
    let eig = jacobi_hermitian(&h.0)?;
    let mut labels = [LevelLabel { m_s: 0, m_i: 0 }; DIM];
    let mut overlap = [0.0; DIM];
    for k in 0..DIM {
        let mut best = 0;
        let mut best_w = -1.0;
        for i in 0..DIM {
            let w = eig.vectors[i][k].norm_sqr();
            if w > best_w {
                best_w = w;
                best = i;
            }
        }
        let (m_s, m_i) = basis_label(best);
        labels[k] = LevelLabel { m_s, m_i };
        overlap[k] = best_w;
    }
    Ok(HyperfineLevels {
        energies: eig.values,
        labels,
        basis_overlap: overlap,
        vectors: eig.vectors,
    })
}

/// Electron transition branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// m_s = 0 -> +1
    Plus,
    /// m_s = 0 -> -1
    Minus,
}

impl Branch {
    pub fn m_s(self) -> i8 {
        match self {
            Branch::Plus => 1,
            Branch::Minus => -1,
        }
    }
}

/// The three Δm_I = 0 transitions of one electron branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionTriplet {
    pub branch: Branch,
    /// Sorted ascending.
    pub freqs: [f64; 3],
    /// Frequencies indexed by nuclear projection `m_I = -1, 0, +1`.
    pub by_projection: [f64; 3],
    /// The m_I = 0 transition frequency.
    pub center: f64,
    /// Mean adjacent spacing.
    pub splitting: f64,
}

pub fn transition_triplet(
    levels: &HyperfineLevels,
    branch: Branch,
) -> Result<TransitionTriplet, SpinError> {
    for (level, &overlap) in levels.basis_overlap.iter().enumerate() {
        if overlap <= 0.5 {
            return Err(SpinError::AmbiguousLabel { level, overlap });
        }
    }
    let energy = |m_s: i8, m_i: i8| {
        levels
            .energy_of(m_s, m_i)
            .ok_or(SpinError::DuplicateLabel { m_s, m_i })
    };
    let mut by_projection = [0.0; 3];
    for (slot, m_i) in by_projection.iter_mut().zip([-1i8, 0, 1]) {
        *slot = energy(branch.m_s(), m_i)? - energy(0, m_i)?;
    }
    let center = by_projection[1];
    let mut freqs = by_projection;
    freqs.sort_by(f64::total_cmp);
    let splitting = 0.5 * (freqs[2] - freqs[0]);
    Ok(TransitionTriplet {
        branch,
        freqs,
        by_projection,
        center,
        splitting,
    })
}

/// Generalized Rabi frequency `sqrt(f0^2 + delta^2)`.
pub fn effective_rabi(f0: f64, delta_f: f64) -> f64 {
    f0.hypot(delta_f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn zero_hyperfine() -> SpinSystemParams {
        SpinSystemParams {
            a_par: 0.0,
            a_perp: 0.0,
            p_quad: 0.0,
            b_mag: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn zero_field_zero_hyperfine_is_diagonal_d() {
        let h = build_hamiltonian(&zero_hyperfine()).unwrap();
        for i in 0..DIM {
            for j in 0..DIM {
                let expected = if i == j && basis_label(i).0 != 0 { 2870.0 } else { 0.0 };
                assert_eq!(h.0[i][j], Complex64::new(expected, 0.0), "({i},{j})");
            }
        }
    }

    /// Diagonal of H written out term by term in the product basis.
    fn hand_trace(p: &SpinSystemParams) -> f64 {
        let mut t = 0.0;
        for m_s in [-1.0f64, 0.0, 1.0] {
            for m_i in [-1.0f64, 0.0, 1.0] {
                t += p.d * m_s * m_s
                    + p.gamma_e * p.b_mag * p.b_theta.cos() * m_s
                    + p.a_par * m_s * m_i
                    - p.p_quad * m_i * m_i;
            }
        }
        t
    }

    #[test]
    fn default_trace_matches_hand_sum() {
        let p = SpinSystemParams::default();
        let h = build_hamiltonian(&p).unwrap();
        assert!((h.trace() - (17220.0 + 30.6)).abs() < 1e-9);
        assert!((h.trace() - hand_trace(&p)).abs() < 1e-9);
    }

    #[test]
    fn hamiltonian_is_exactly_hermitian() {
        let p = SpinSystemParams {
            b_mag: 40.0,
            b_theta: 1.1,
            ..Default::default()
        };
        let h = build_hamiltonian(&p).unwrap();
        assert_eq!(h, h.adjoint());
    }

    #[test]
    fn rejects_non_finite_and_out_of_range() {
        let bad = [
            SpinSystemParams { d: f64::NAN, ..Default::default() },
            SpinSystemParams { a_perp: f64::INFINITY, ..Default::default() },
            SpinSystemParams { d: -1.0, ..Default::default() },
            SpinSystemParams { b_mag: -1.0, ..Default::default() },
            SpinSystemParams { b_theta: 4.0, ..Default::default() },
            SpinSystemParams { gamma_e: 0.0, ..Default::default() },
        ];
        for p in bad {
            assert!(matches!(
                build_hamiltonian(&p),
                Err(SpinError::InvalidParameter { .. })
            ));
        }
    }

    #[test]
    fn diagonal_hamiltonian_gives_identity_vectors() {
        let p = SpinSystemParams {
            a_perp: 0.0,
            b_mag: 30.0,
            ..Default::default()
        };
        let levels = diagonalize(&build_hamiltonian(&p).unwrap()).unwrap();
        for &o in &levels.basis_overlap {
            assert_eq!(o, 1.0);
        }
    }

    #[test]
    fn default_axial_levels_group_into_three_manifolds() {
        let p = SpinSystemParams {
            b_mag: 40.0,
            ..Default::default()
        };
        let levels = diagonalize(&build_hamiltonian(&p).unwrap()).unwrap();
        // lowest three: m_s = 0; next m_s = -1 (D - gamma B); top m_s = +1.
        for k in 0..3 {
            assert_eq!(levels.labels[k].m_s, 0);
            assert_eq!(levels.labels[k + 3].m_s, -1);
            assert_eq!(levels.labels[k + 6].m_s, 1);
        }
        let mut seen = std::collections::HashSet::new();
        for (l, o) in levels.labels.iter().zip(levels.basis_overlap) {
            assert!(o > 0.9);
            assert!(seen.insert((l.m_s, l.m_i)));
        }
        let gap = levels.energies[6] - levels.energies[3];
        assert!((gap - 2.0 * 2.8025 * 40.0).abs() < 10.0);
    }

    #[test]
    fn triplet_splitting_close_to_axial_hyperfine() {
        let levels = diagonalize(&build_hamiltonian(&SpinSystemParams::default()).unwrap()).unwrap();
        let t = transition_triplet(&levels, Branch::Plus).unwrap();
        assert!((t.splitting - 2.3).abs() < 2.0 * 2.1 * 2.1 / 2870.0);
        assert_eq!(t.center, t.by_projection[1]);
        assert!(t.freqs[0] < t.freqs[1] && t.freqs[1] < t.freqs[2]);
    }

    #[test]
    fn zero_hyperfine_collapses_triplet() {
        let levels = diagonalize(&build_hamiltonian(&zero_hyperfine()).unwrap()).unwrap();
        // With a fully degenerate nuclear manifold the eigenvectors stay in
        // the product basis (no off-diagonal terms), so labels are valid.
        let t = transition_triplet(&levels, Branch::Plus).unwrap();
        assert_eq!(t.splitting, 0.0);
        assert_eq!(t.freqs[0], t.freqs[2]);
    }

    #[test]
    fn quadrupole_invariance_exact_without_transverse_hyperfine() {
        let base = SpinSystemParams {
            a_perp: 0.0,
            b_mag: 40.0,
            b_theta: 0.7,
            ..Default::default()
        };
        let reference = transition_triplet(
            &diagonalize(&build_hamiltonian(&base).unwrap()).unwrap(),
            Branch::Plus,
        )
        .unwrap();
        for p_quad in [-10.0, -5.1, -2.0, 0.0] {
            let p = SpinSystemParams { p_quad, ..base };
            let t = transition_triplet(
                &diagonalize(&build_hamiltonian(&p).unwrap()).unwrap(),
                Branch::Plus,
            )
            .unwrap();
            for m in 0..3 {
                assert!((t.by_projection[m] - reference.by_projection[m]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quadrupole_shift_bounded_by_second_order_mixing() {
        // With A_perp != 0 the quadrupole enters only through second-order
        // energy denominators, so the shift is O(A_perp^2 |dP| / D^2).
        let shift = |p_quad: f64| {
            let p = SpinSystemParams { p_quad, b_mag: 10.7, ..Default::default() };
            transition_triplet(&diagonalize(&build_hamiltonian(&p).unwrap()).unwrap(), Branch::Plus)
                .unwrap()
                .by_projection
        };
        let a = shift(-10.0);
        let b = shift(0.0);
        let bound = 4.0 * 2.1 * 2.1 * 10.0 / (2870.0 * 2870.0);
        for m in 0..3 {
            assert!((a[m] - b[m]).abs() < bound);
        }
    }

    #[test]
    fn ambiguous_labels_rejected() {
        // Near the level anticrossing (Bz ~ D / gamma) the m_s = 0 and -1
        // manifolds mix strongly under a transverse field.
        let p = SpinSystemParams {
            b_mag: 2870.0 / 2.8025 / 0.05f64.cos(),
            b_theta: 0.05,
            ..Default::default()
        };
        let levels = diagonalize(&build_hamiltonian(&p).unwrap()).unwrap();
        assert!(matches!(
            transition_triplet(&levels, Branch::Plus),
            Err(SpinError::AmbiguousLabel { .. })
        ));
    }

    #[test]
    fn effective_rabi_values() {
        assert_eq!(effective_rabi(4.2, 0.0), 4.2);
        assert_eq!(effective_rabi(0.0, 3.3), 3.3);
        assert!((effective_rabi(4.2, 2.2) - 4.7414).abs() < 1e-4);
        assert!((effective_rabi(4.2, 2.2) - 22.48f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn branch_splitting_solver_hits_target() {
        let p = SpinSystemParams { b_mag: 40.0, ..Default::default() }
            .with_branch_splitting(60.0)
            .unwrap();
        let levels = diagonalize(&build_hamiltonian(&p).unwrap()).unwrap();
        let plus = transition_triplet(&levels, Branch::Plus).unwrap();
        let minus = transition_triplet(&levels, Branch::Minus).unwrap();
        assert!((plus.center - minus.center - 60.0).abs() < 1e-6);
        let too_big = SpinSystemParams { b_mag: 40.0, ..Default::default() }.with_branch_splitting(500.0);
        assert!(matches!(too_big, Err(SpinError::SplittingUnreachable { .. })));
    }

    fn params_strategy() -> impl Strategy<Value = SpinSystemParams> {
        (
            1000.0..4000.0f64,
            0.0..100.0f64,
            0.0..std::f64::consts::PI,
            -5.0..5.0f64,
            -5.0..5.0f64,
            -10.0..10.0f64,
        )
            .prop_map(|(d, b_mag, b_theta, a_par, a_perp, p_quad)| SpinSystemParams {
                d,
                b_mag,
                b_theta,
                a_par,
                a_perp,
                p_quad,
                ..Default::default()
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn eigenvalue_sum_equals_trace(p in params_strategy()) {
            let h = build_hamiltonian(&p).unwrap();
            let levels = diagonalize(&h).unwrap();
            let sum: f64 = levels.energies.iter().sum();
            prop_assert!((sum - h.trace()).abs() <= 1e-9 * h.trace().abs().max(1.0));
            for w in levels.energies.windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
        }

        #[test]
        fn eigenpair_residuals_small(p in params_strategy()) {
            let h = build_hamiltonian(&p).unwrap();
            let levels = diagonalize(&h).unwrap();
            let norm = h.frobenius_norm();
            for k in 0..DIM {
                let v = levels.vector(k);
                let mut r = 0.0;
                for i in 0..DIM {
                    let mut hv = Complex64::new(0.0, 0.0);
                    for j in 0..DIM {
                        hv += h.0[i][j] * v[j];
                    }
                    r += (hv - v[i] * levels.energies[k]).norm_sqr();
                }
                prop_assert!(r.sqrt() <= 1e-9 * norm);
            }
        }

        #[test]
        fn eigenvalues_scale_linearly(p in params_strategy(), scale in 0.1..10.0f64) {
            let scaled = SpinSystemParams {
                d: p.d * scale,
                gamma_e: p.gamma_e * scale,
                a_par: p.a_par * scale,
                a_perp: p.a_perp * scale,
                p_quad: p.p_quad * scale,
                ..p
            };
            let e1 = diagonalize(&build_hamiltonian(&p).unwrap()).unwrap().energies;
            let e2 = diagonalize(&build_hamiltonian(&scaled).unwrap()).unwrap().energies;
            for k in 0..DIM {
                prop_assert!((e2[k] - scale * e1[k]).abs() <= 1e-9 * (scale * p.d));
            }
        }

        #[test]
        fn secular_limit(a_par in 0.5..5.0f64, a_perp in 0.0..5.0f64) {
            let p = SpinSystemParams { d: 1.0e6, a_par, a_perp, ..Default::default() };
            let levels = diagonalize(&build_hamiltonian(&p).unwrap()).unwrap();
            let t = transition_triplet(&levels, Branch::Plus).unwrap();
            prop_assert!((t.splitting - a_par).abs() <= 4.0 * a_perp * a_perp / p.d + 1e-9);
        }
    }
}
