//! Diagnosis schemes: linear maps that turn an error into a short real
//! vector from which its logical class can be read off.
//!
//! A scheme is a matrix `H_g` of logical rows. The diagnosis of an error `e`
//! is `g = H_g Λ eᵀ`; because every row commutes with the checks, `g` depends
//! on `e` only through its syndrome and logical class. Stacking the class
//! columns `(H_g Λ (wG)ᵀ; 1)` gives the class matrix `D`, and a real left
//! inverse of `D` converts averaged diagnoses back into class probabilities.
//!
//! Scheme quality is summarized by three numbers: the sensitivity `m` (how
//! many diagnosis bits a single-qubit error can touch), the boundary distance
//! `M` (how far a class column sits from the decision boundaries between the
//! other classes), and their ratio `N = m / M`, which is the figure a scheme
//! designer wants small.

use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::codes::{Family, StabilizerCode};
use crate::gf2::{gf2_rank, pauli_weight, qr_left_inverse, BitMatrix, BitVec, RealMatrix};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DiagnosisError {
    /// The rows do not span all logical classes modulo the stabilizer, or
    /// fail to commute with the checks.
    #[error("row matrix is not faithful for this code")]
    NotFaithful,
    /// The class matrix has no real left inverse.
    #[error("class matrix is rank-deficient, scheme is not decomposable")]
    NotDecomposable,
    /// No line table is shipped for this family and distance.
    #[error("no uniform line table for {family} at d = {d}")]
    UnsupportedDistance { family: Family, d: usize },
}

// ==================== scheme ====================

/// A faithful, decomposable diagnosis scheme for one code.
#[derive(Debug, Clone)]
pub struct DiagnosisScheme {
    /// Logical rows, one diagnosis bit each; `|g| x 2n`.
    pub h_g: BitMatrix,
    /// Class matrix `D`: column `w` is `(H_g Λ (wG)ᵀ; 1)`; `(|g|+1) x 4^k`.
    pub d_matrix: RealMatrix,
    /// Real left inverse of `D`.
    pub d_inv: RealMatrix,
    /// Column order of `D`, ascending class index: 00, 01, 10, 11 at k = 1.
    pub class_order: Vec<usize>,
    /// Sensitivity `m`.
    pub sensitivity: usize,
    /// Boundary distance `M`.
    pub boundary_distance: f64,
    /// `N = m / M`.
    pub normalized_sensitivity: f64,
}

impl DiagnosisScheme {
    /// Builds the scheme, rejecting row matrices that are not faithful or
    /// whose class matrix cannot be inverted from the left.
    pub fn new(code: &StabilizerCode, h_g: BitMatrix) -> Result<Self, DiagnosisError> {
        if !is_faithful(code, &h_g) {
            return Err(DiagnosisError::NotFaithful);
        }
        let class_order: Vec<usize> = (0..code.num_classes()).collect();
        let d_matrix = class_matrix(code, &h_g);
        if d_matrix.rows() < d_matrix.cols() {
            return Err(DiagnosisError::NotDecomposable);
        }
        let d_inv = qr_left_inverse(&d_matrix).map_err(|_| DiagnosisError::NotDecomposable)?;
        let sensitivity = sensitivity(&h_g);
        let boundary_distance = min_constrained_distance(&class_columns(code, &h_g));
        let normalized_sensitivity = sensitivity as f64 / boundary_distance;
        Ok(DiagnosisScheme {
            h_g,
            d_matrix,
            d_inv,
            class_order,
            sensitivity,
            boundary_distance,
            normalized_sensitivity,
        })
    }

    /// Number of diagnosis bits `|g|`.
    pub fn rows(&self) -> usize {
        self.h_g.rows()
    }

    /// `g(e) = H_g Λ eᵀ`.
    pub fn diagnosis_of(&self, e: &BitVec) -> BitVec {
        self.h_g.symplectic_mul(e)
    }

    /// Content hash of the row matrix, used to tie datasets to schemes.
    pub fn id(&self) -> String {
        scheme_id(&self.h_g)
    }
}

/// Hex digest over the dimensions and row words of a row matrix.
pub fn scheme_id(h_g: &BitMatrix) -> String {
    let mut hasher = Sha256::new();
    hasher.update((h_g.rows() as u64).to_le_bytes());
    hasher.update((h_g.cols() as u64).to_le_bytes());
    for row in h_g.iter_rows() {
        for w in row.words() {
            hasher.update(w.to_le_bytes());
        }
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

// ==================== predicates and metrics ====================

/// A row matrix is faithful when every row commutes with every check and the
/// rows span all logical classes: rank(H_c; H_g) = n + k.
pub fn is_faithful(code: &StabilizerCode, h_g: &BitMatrix) -> bool {
    if h_g.cols() != 2 * code.n {
        return false;
    }
    for row in h_g.iter_rows() {
        if !code.syndrome(row).is_zero() {
            return false;
        }
    }
    let (rank, _) = gf2_rank(&code.h_c.vstack(h_g));
    rank == code.n + code.k
}

/// A scheme is decomposable when its class matrix has full column rank over
/// the reals, so a left inverse exists.
pub fn is_decomposable(code: &StabilizerCode, h_g: &BitMatrix) -> bool {
    let d = class_matrix(code, h_g);
    d.rows() >= d.cols() && qr_left_inverse(&d).is_ok()
}

/// Sensitivity `m`: the largest number of rows of `H Λ` that any single bit
/// of an error can flip, i.e. the maximum column weight of `H Λ`.
pub fn sensitivity(h: &BitMatrix) -> usize {
    let hl = h.times_lambda();
    (0..hl.cols()).map(|j| hl.column_weight(j)).max().unwrap_or(0)
}

/// Boundary distance `M`: minimum over ordered class pairs (w, w') of the
/// squared distance from the column g(w) to the pair's decision set
/// { α(g(w) + g(w')) + Σ β_v g(v) : 2α + Σ β_v = 1 }, evaluated at zero
/// syndrome. The affine constraint keeps the set away from the origin;
/// without it the distance collapses to 0 whenever some g(w) = 0.
pub fn boundary_distance(code: &StabilizerCode, h_g: &BitMatrix) -> f64 {
    min_constrained_distance(&class_columns(code, h_g))
}

/// The unconstrained variant of [`boundary_distance`], kept for reference:
/// coefficients range freely, so any scheme with a zero class column scores
/// exactly 0. The constrained figure is the one used throughout.
pub fn boundary_distance_unconstrained(code: &StabilizerCode, h_g: &BitMatrix) -> f64 {
    let cols = class_columns(code, h_g);
    let classes = cols.len();
    let mut best = f64::INFINITY;
    for w in 0..classes {
        for wp in 0..classes {
            if wp == w {
                continue;
            }
            let mut sys = vec![add(&cols[w], &cols[wp])];
            for v in 0..classes {
                if v != w && v != wp {
                    sys.push(cols[v].clone());
                }
            }
            best = best.min(least_squares_residual(&sys, &cols[w]));
        }
    }
    best
}

/// `N = m / M` for a row matrix on a given code.
pub fn normalized_sensitivity(code: &StabilizerCode, h_g: &BitMatrix) -> f64 {
    sensitivity(h_g) as f64 / boundary_distance(code, h_g)
}

/// Class columns of `D` without the augmented ones row, as real vectors.
fn class_columns(code: &StabilizerCode, h_g: &BitMatrix) -> Vec<Vec<f64>> {
    (0..code.num_classes())
        .map(|w| {
            let g = h_g.symplectic_mul(&code.class_representative(w));
            (0..h_g.rows()).map(|i| g.get(i) as u8 as f64).collect()
        })
        .collect()
}

fn class_matrix(code: &StabilizerCode, h_g: &BitMatrix) -> RealMatrix {
    let cols = class_columns(code, h_g);
    let rows = h_g.rows() + 1;
    let mut d = RealMatrix::zeros(rows, cols.len());
    for (j, col) in cols.iter().enumerate() {
        for (i, &v) in col.iter().enumerate() {
            d.set(i, j, v);
        }
        d.set(rows - 1, j, 1.0);
    }
    d
}

fn min_constrained_distance(cols: &[Vec<f64>]) -> f64 {
    let classes = cols.len();
    let mut best = f64::INFINITY;
    for w in 0..classes {
        for wp in 0..classes {
            if wp == w {
                continue;
            }
            let others: Vec<usize> =
                (0..classes).filter(|&v| v != w && v != wp).collect();
            // Eliminate the last β through 2α + Σβ = 1, leaving a free
            // least-squares problem in α and the remaining β's.
            let pivot = &cols[*others.last().expect("at least four classes")];
            let b = sub(&cols[w], pivot);
            let mut sys = Vec::with_capacity(others.len());
            let mut alpha_col = add(&cols[w], &cols[wp]);
            for (a, p) in alpha_col.iter_mut().zip(pivot) {
                *a -= 2.0 * p;
            }
            sys.push(alpha_col);
            for &v in &others[..others.len() - 1] {
                sys.push(sub(&cols[v], pivot));
            }
            best = best.min(least_squares_residual(&sys, &b));
        }
    }
    best
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimum of ‖Σ xᵢ aᵢ − b‖² over free xᵢ, by Gauss-Jordan on the normal
/// equations. The normal system is always consistent, so near-zero pivots
/// are skipped with their variables pinned to zero.
fn least_squares_residual(cols: &[Vec<f64>], b: &[f64]) -> f64 {
    let m = cols.len();
    let mut g = vec![vec![0.0f64; m]; m];
    let mut c = vec![0.0f64; m];
    for i in 0..m {
        for j in 0..m {
            g[i][j] = dot(&cols[i], &cols[j]);
        }
        c[i] = dot(&cols[i], b);
    }
    let c0 = c.clone();
    let scale = (0..m).map(|i| g[i][i]).fold(0.0f64, f64::max);
    let tol = 1e-12 * scale.max(1e-300);
    let mut pivot_row_of = vec![None; m];
    let mut row = 0;
    for col in 0..m {
        let mut lead = row;
        for r in row..m {
            if g[r][col].abs() > g[lead][col].abs() {
                lead = r;
            }
        }
        if g[lead][col].abs() <= tol {
            continue;
        }
        g.swap(row, lead);
        c.swap(row, lead);
        for r in 0..m {
            if r != row && g[r][col] != 0.0 {
                let f = g[r][col] / g[row][col];
                for j in 0..m {
                    g[r][j] -= f * g[row][j];
                }
                c[r] -= f * c[row];
            }
        }
        pivot_row_of[col] = Some(row);
        row += 1;
        if row == m {
            break;
        }
    }
    let mut x = vec![0.0f64; m];
    for col in 0..m {
        if let Some(r) = pivot_row_of[col] {
            x[col] = c[r] / g[r][col];
        }
    }
    (dot(b, b) - dot(&x, &c0)).max(0.0)
}

// ==================== short construction ====================

/// Largest coset basis the representative search walks exhaustively.
const MAX_WALK_BITS: usize = 24;

/// Three-row scheme: a minimum-weight representative of each nonzero class,
/// in class order 01, 10, 11. Ties inside a weight are broken
/// lexicographically on the binary vector.
///
/// Minimum weight in the 01 class is attained with a zero X half (dropping
/// the X half of a candidate keeps it in the class and cannot raise the
/// weight), and a zero half is also lexicographically least, so that row
/// comes from a walk over the Z-check span alone; symmetrically for 10. The
/// 11 class genuinely couples the halves and walks the whole stabilizer
/// span, falling back to l01 + l10 when the span is too large to enumerate.
pub fn short_construction(code: &StabilizerCode) -> BitMatrix {
    assert_eq!(code.k, 1, "short construction is defined for k = 1");
    let num_x = code.num_x_stabs();
    let x_rows: Vec<&BitVec> = (0..num_x).map(|i| code.h_c.row(i)).collect();
    let z_rows: Vec<&BitVec> =
        (num_x..code.h_c.rows()).map(|i| code.h_c.row(i)).collect();
    let g0 = code.g.row(0);
    let g1 = code.g.row(1);
    let l01 = if z_rows.len() <= MAX_WALK_BITS {
        min_weight_rep(g1, &z_rows)
    } else {
        g1.clone()
    };
    let l10 = if x_rows.len() <= MAX_WALK_BITS {
        min_weight_rep(g0, &x_rows)
    } else {
        g0.clone()
    };
    let all_rows: Vec<&BitVec> = code.h_c.iter_rows().collect();
    let l11 = if all_rows.len() <= MAX_WALK_BITS {
        min_weight_rep(&g0.xored(g1), &all_rows)
    } else {
        l01.xored(&l10)
    };
    BitMatrix::from_rows(vec![l01, l10, l11])
}

/// Gray-coded walk over `start + span(basis)` returning the element of
/// minimum pauli weight, lexicographic on ties.
fn min_weight_rep(start: &BitVec, basis: &[&BitVec]) -> BitVec {
    assert!(basis.len() < 63);
    let mut v = start.clone();
    let mut best = v.clone();
    let mut best_w = pauli_weight(&v);
    for g in 1u64..1u64 << basis.len() {
        v.xor_assign(basis[g.trailing_zeros() as usize]);
        let w = pauli_weight(&v);
        if w < best_w || (w == best_w && lex_less(&v, &best)) {
            best_w = w;
            best = v.clone();
        }
    }
    best
}

/// Strict lexicographic order reading bit indices upward: the vector with 0
/// at the first differing index is smaller.
fn lex_less(a: &BitVec, b: &BitVec) -> bool {
    for (wa, wb) in a.words().iter().zip(b.words()) {
        if wa != wb {
            let bit = (wa ^ wb).trailing_zeros();
            return wa >> bit & 1 == 0;
        }
    }
    false
}

// ==================== uniform construction ====================

/// Line-based scheme with one X, one Z and one Y row per lattice line.
///
/// Rows come in three class blocks: all Z-type rows first, then all X-type,
/// then the Y-type products. Surfaces take their d + d lines straight from
/// the grid (rows parallel to the X logical, columns parallel to the Z
/// logical); the color families use pattern tables found offline, covering
/// every qubit the same number of times so the sensitivity stays flat in d.
pub fn uniform_construction(code: &StabilizerCode) -> Result<BitMatrix, DiagnosisError> {
    match code.family {
        Family::SurfaceUnrotated | Family::SurfaceRotated => Ok(surface_line_rows(code)),
        Family::Color666 | Family::Color488 => color_line_rows(code),
    }
}

fn surface_line_rows(code: &StabilizerCode) -> BitMatrix {
    let d = code.d as i32;
    let mut x_lines = Vec::new();
    let mut z_lines = Vec::new();
    for t in 0..d {
        // Rotated grids use every row and column; unrotated only the even
        // ones, where the qubits sit.
        let (xi, zj) = match code.family {
            Family::SurfaceRotated => (t, t),
            Family::SurfaceUnrotated => (2 * t, 2 * t),
            _ => unreachable!("surface lines on a color family"),
        };
        x_lines.push(coords_where(code, |(i, _)| i == xi));
        z_lines.push(coords_where(code, |(_, j)| j == zj));
    }
    let n = code.n;
    let mut rows = Vec::with_capacity(3 * d as usize);
    for line in &z_lines {
        rows.push(pauli_row(n, &[], line));
    }
    for line in &x_lines {
        rows.push(pauli_row(n, line, &[]));
    }
    for (xl, zl) in x_lines.iter().zip(&z_lines) {
        rows.push(pauli_row(n, xl, zl));
    }
    BitMatrix::from_rows(rows)
}

fn color_line_rows(code: &StabilizerCode) -> Result<BitMatrix, DiagnosisError> {
    let patterns = color_line_table(code.family, code.d).ok_or(
        DiagnosisError::UnsupportedDistance { family: code.family, d: code.d },
    )?;
    let index: BTreeMap<(i32, i32), usize> =
        code.qubit_coords.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let lines: Vec<Vec<usize>> = patterns
        .iter()
        .flat_map(|p| p.iter())
        .map(|line| {
            line.iter()
                .map(|c| *index.get(c).expect("line table coordinate outside the patch"))
                .collect()
        })
        .collect();
    let n = code.n;
    let mut rows = Vec::with_capacity(3 * lines.len());
    for line in &lines {
        rows.push(pauli_row(n, &[], line));
    }
    for line in &lines {
        rows.push(pauli_row(n, line, &[]));
    }
    for line in &lines {
        rows.push(pauli_row(n, line, line));
    }
    Ok(BitMatrix::from_rows(rows))
}

fn coords_where(code: &StabilizerCode, pred: impl Fn((i32, i32)) -> bool) -> Vec<usize> {
    code.qubit_coords
        .iter()
        .enumerate()
        .filter(|&(_, &c)| pred(c))
        .map(|(i, _)| i)
        .collect()
}

fn pauli_row(n: usize, xs: &[usize], zs: &[usize]) -> BitVec {
    let mut v = BitVec::zeros(2 * n);
    for &q in xs {
        v.set(q, true);
    }
    for &q in zs {
        v.set(n + q, !v.get(n + q));
    }
    v
}

fn color_line_table(family: Family, d: usize) -> Option<&'static [&'static [tables::Line]]> {
    match (family, d) {
        (Family::Color666, 3) => Some(tables::C666_D3),
        (Family::Color666, 5) => Some(tables::C666_D5),
        (Family::Color666, 7) => Some(tables::C666_D7),
        (Family::Color666, 9) => Some(tables::C666_D9),
        (Family::Color488, 3) => Some(tables::C488_D3),
        (Family::Color488, 5) => Some(tables::C488_D5),
        (Family::Color488, 7) => Some(tables::C488_D7),
        (Family::Color488, 9) => Some(tables::C488_D9),
        _ => None,
    }
}

/// Offline-searched line patterns for the color lattices, in the coordinate
/// frames of the code geometries. Each set holds (d+1)/2 lines per pattern,
/// every line the support of a weight-d logical, and covers each qubit
/// exactly 3 times (6.6.6) or 4 times (4.8.8).
mod tables {
    pub type Line = &'static [(i32, i32)];

    pub const C666_D3: &[&[Line]] = &[
        &[
            &[(0, 0), (1, 1), (3, 3)],
            &[(0, 0), (2, 1), (3, 2)],
        ],
        &[
            &[(0, 0), (2, 0), (3, 0)],
            &[(1, 1), (2, 1), (3, 0)],
        ],
        &[
            &[(3, 0), (3, 2), (3, 3)],
            &[(2, 0), (2, 1), (3, 3)],
        ],
    ];

    pub const C666_D5: &[&[Line]] = &[
        &[
            &[(0, 0), (1, 1), (3, 3), (4, 4), (6, 6)],
            &[(0, 0), (2, 1), (3, 2), (5, 3), (6, 3)],
            &[(1, 1), (2, 0), (3, 2), (5, 4), (6, 5)],
        ],
        &[
            &[(0, 0), (2, 0), (3, 0), (5, 0), (6, 0)],
            &[(3, 2), (3, 3), (4, 1), (5, 1), (6, 0)],
            &[(1, 1), (2, 1), (4, 1), (5, 0), (6, 2)],
        ],
        &[
            &[(6, 0), (6, 2), (6, 3), (6, 5), (6, 6)],
            &[(3, 0), (4, 1), (5, 3), (5, 4), (6, 6)],
            &[(4, 4), (5, 0), (5, 1), (5, 3), (6, 5)],
        ],
    ];

    pub const C666_D7: &[&[Line]] = &[
        &[
            &[(0, 0), (1, 1), (3, 3), (4, 4), (6, 6), (7, 7), (9, 9)],
            &[(0, 0), (2, 0), (3, 0), (5, 1), (6, 2), (8, 3), (9, 3)],
            &[(1, 1), (2, 0), (3, 2), (5, 4), (6, 5), (8, 6), (9, 6)],
            &[(1, 1), (2, 1), (4, 1), (5, 0), (6, 2), (8, 4), (9, 5)],
        ],
        &[
            &[(0, 0), (2, 0), (3, 0), (5, 0), (6, 0), (8, 0), (9, 0)],
            &[(6, 5), (6, 6), (7, 4), (8, 4), (9, 0), (9, 2), (9, 3)],
            &[(3, 2), (3, 3), (4, 1), (5, 1), (7, 1), (8, 0), (9, 2)],
            &[(4, 4), (5, 4), (7, 4), (8, 0), (8, 1), (8, 3), (9, 5)],
        ],
        &[
            &[(9, 0), (9, 2), (9, 3), (9, 5), (9, 6), (9, 8), (9, 9)],
            &[(3, 0), (4, 1), (5, 3), (5, 4), (6, 6), (7, 7), (9, 9)],
            &[(6, 0), (7, 1), (7, 7), (8, 3), (8, 4), (8, 6), (9, 8)],
            &[(4, 4), (5, 0), (5, 1), (5, 3), (6, 5), (8, 7), (9, 8)],
        ],
    ];

    pub const C666_D9: &[&[Line]] = &[
        &[
            &[(0, 0), (1, 1), (3, 3), (4, 4), (6, 6), (7, 7), (9, 9), (10, 10), (12, 12)],
            &[(0, 0), (2, 0), (3, 0), (5, 1), (6, 2), (8, 3), (9, 3), (11, 3), (12, 3)],
            &[(1, 1), (2, 0), (3, 2), (5, 4), (6, 5), (8, 6), (9, 6), (11, 6), (12, 6)],
            &[(1, 1), (2, 1), (4, 1), (5, 0), (6, 2), (8, 4), (9, 5), (11, 7), (12, 8)],
            &[(3, 2), (3, 3), (4, 1), (5, 1), (6, 0), (8, 1), (9, 2), (11, 4), (12, 5)],
        ],
        &[
            &[(0, 0), (2, 0), (3, 0), (5, 0), (6, 0), (8, 0), (9, 0), (11, 0), (12, 0)],
            &[(9, 5), (9, 6), (9, 8), (9, 9), (10, 4), (11, 4), (12, 0), (12, 2), (12, 3)],
            &[(6, 2), (6, 3), (6, 5), (6, 6), (7, 1), (8, 1), (10, 1), (11, 0), (12, 2)],
            &[(4, 4), (5, 4), (7, 4), (8, 4), (10, 4), (11, 0), (11, 1), (11, 3), (12, 5)],
            &[(7, 7), (8, 7), (9, 0), (10, 1), (10, 7), (11, 3), (11, 4), (11, 7), (12, 6)],
        ],
        &[
            &[(12, 0), (12, 2), (12, 3), (12, 5), (12, 6), (12, 8), (12, 9), (12, 11), (12, 12)],
            &[(3, 0), (4, 1), (6, 3), (7, 4), (8, 6), (8, 7), (9, 9), (10, 10), (12, 12)],
            &[(6, 0), (7, 1), (9, 3), (10, 4), (10, 10), (11, 6), (11, 7), (11, 9), (12, 11)],
            &[(7, 7), (8, 0), (8, 1), (8, 3), (8, 4), (8, 6), (9, 8), (11, 10), (12, 11)],
            &[(5, 0), (5, 1), (5, 3), (5, 4), (6, 6), (8, 7), (9, 8), (11, 9), (12, 9)],
        ],
    ];

    pub const C488_D3: &[&[Line]] = &[
        &[
            &[(1, 0), (3, 0), (4, -1)],
            &[(1, 0), (3, 0), (4, -1), (4, 1), (4, 3), (5, 0), (5, 4)],
        ],
        &[
            &[(1, 0), (4, 1), (5, 0)],
            &[(1, 0), (4, 3), (5, 4)],
        ],
        &[
            &[(3, 0), (4, 1), (5, 4)],
            &[(3, 0), (4, 3), (5, 0)],
        ],
        &[
            &[(4, -1), (4, 1), (4, 3)],
            &[(4, -1), (5, 0), (5, 4)],
        ],
    ];

    pub const C488_D5: &[&[Line]] = &[
        &[
            &[(-3, 4), (-1, 0), (-1, 4), (0, 1), (0, 3)],
            &[(-3, 4), (-1, 0), (0, 1), (0, 5), (1, 4)],
            &[(-3, 4), (-1, 4), (0, -1), (0, 3), (1, 0)],
        ],
        &[
            &[(-3, 4), (0, -1), (0, 5), (1, 0), (1, 4)],
            &[(-1, 0), (0, -1), (3, 0), (4, 1), (5, 4)],
            &[(-1, 0), (0, -1), (3, 0), (4, 3), (5, 0)],
        ],
        &[
            &[(-1, 4), (0, 5), (3, 0), (3, 4), (4, -1)],
            &[(-1, 4), (0, 5), (3, 4), (4, 1), (5, 0)],
            &[(0, 1), (1, 0), (3, 0), (4, 1), (5, 4)],
        ],
        &[
            &[(0, 1), (1, 0), (4, -1), (5, 0), (5, 4)],
            &[(0, 3), (1, 4), (3, 4), (4, 1), (5, 0)],
            &[(0, 3), (1, 4), (3, 4), (4, 3), (5, 4)],
        ],
    ];

    pub const C488_D7: &[&[Line]] = &[
        &[
            &[(-7, 8), (-5, 8), (-4, 7), (0, 7), (3, 0), (3, 4), (4, -1)],
            &[(-7, 8), (-4, 9), (-3, 8), (0, -1), (0, 5), (1, 0), (1, 4)],
            &[(-7, 8), (-4, 11), (-1, 4), (-1, 8), (0, -1), (0, 3), (1, 0)],
            &[(-5, 0), (-4, -1), (-4, 3), (-4, 5), (-1, 4), (0, 5), (0, 7)],
        ],
        &[
            &[(-5, 0), (-4, 1), (-1, 0), (1, 0), (3, 0), (4, 1), (4, 3)],
            &[(-5, 0), (-4, 1), (0, 1), (1, 0), (4, -1), (4, 1), (4, 3)],
            &[(-5, 0), (-4, 3), (-4, 5), (-4, 7), (-4, 9), (-4, 11), (-3, 0)],
            &[(-5, 4), (-5, 8), (-4, 1), (-4, 5), (-4, 9), (-3, 0), (-1, 8)],
        ],
        &[
            &[(-5, 4), (-4, -1), (-4, 1), (-4, 7), (-3, 4), (-3, 8), (-1, 8)],
            &[(-5, 4), (-4, 3), (-1, 0), (0, 1), (0, 3), (1, 4), (3, 4)],
            &[(-5, 4), (-4, 3), (0, -1), (0, 1), (4, -1), (4, 1), (5, 4)],
            &[(-5, 8), (-4, 11), (-3, 8), (-1, 4), (0, 3), (4, 3), (5, 4)],
        ],
        &[
            &[(-4, -1), (-3, 0), (-1, 0), (0, -1), (4, -1), (5, 0), (5, 4)],
            &[(-4, -1), (-3, 0), (0, 3), (0, 5), (0, 7), (4, 1), (5, 0)],
            &[(-4, 5), (-3, 4), (-1, 4), (0, 7), (1, 4), (4, 3), (5, 4)],
            &[(-4, 7), (-4, 9), (-4, 11), (-1, 0), (0, 1), (0, 5), (1, 4)],
        ],
    ];

    pub const C488_D9: &[&[Line]] = &[
        &[
            &[(-11, 12), (-9, 12), (-8, -1), (-8, 5), (-8, 7), (-8, 11), (-7, 0), (-7, 4), (-7, 8)],
            &[(-11, 12), (-8, 13), (-7, 12), (-4, 11), (-1, 0), (-1, 8), (0, 1), (0, 5), (1, 4)],
            &[(-11, 12), (-8, 15), (-5, 0), (-5, 12), (-4, -1), (-4, 3), (-4, 9), (-3, 4), (-3, 8)],
            &[(-11, 12), (-8, 15), (-5, 12), (-4, 9), (-3, 8), (0, 7), (3, 0), (3, 4), (4, -1)],
            &[(-9, 0), (-9, 4), (-8, 1), (-8, 5), (-5, 4), (-5, 8), (-4, 5), (-4, 11), (-3, 8)],
        ],
        &[
            &[(-9, 0), (-8, -1), (-5, 0), (-4, 1), (-1, 4), (0, 7), (1, 4), (4, 3), (5, 4)],
            &[(-9, 0), (-8, 1), (-8, 3), (-7, 4), (-5, 4), (-4, 5), (-4, 7), (-4, 9), (-4, 11)],
            &[(-9, 0), (-7, 0), (-4, -1), (-4, 1), (0, 1), (1, 0), (4, -1), (4, 1), (4, 3)],
            &[(-9, 4), (-8, 5), (-5, 4), (-4, 1), (-3, 0), (-3, 4), (0, 3), (0, 5), (3, 4)],
            &[(-9, 8), (-8, 7), (-5, 0), (-4, -1), (-4, 3), (-4, 5), (0, 3), (0, 7), (1, 4)],
        ],
        &[
            &[(-9, 8), (-8, 7), (-4, 5), (-3, 4), (-1, 0), (0, -1), (3, 0), (4, 3), (5, 0)],
            &[(-9, 12), (-8, 5), (-8, 7), (-8, 15), (-7, 4), (-7, 8), (-7, 12), (-4, 1), (-3, 0)],
            &[(-9, 12), (-8, 13), (-5, 8), (-5, 12), (-4, 7), (-1, 4), (0, 3), (4, 3), (5, 4)],
            &[(-9, 12), (-8, 15), (-7, 12), (-5, 8), (-4, 7), (-1, 4), (0, 3), (3, 0), (4, -1)],
            &[(-8, -1), (-8, 1), (-5, 0), (-3, 0), (0, -1), (0, 1), (3, 0), (5, 0), (5, 4)],
        ],
        &[
            &[(-8, -1), (-8, 11), (-7, 0), (-7, 12), (-5, 12), (-4, 3), (-4, 11), (-3, 4), (-1, 8)],
            &[(-8, 1), (-7, 0), (-4, -1), (-3, 0), (-1, 4), (0, 5), (3, 4), (4, 1), (5, 0)],
            &[(-8, 3), (-7, 4), (-5, 8), (-4, 9), (-1, 0), (-1, 8), (0, 1), (0, 7), (3, 4)],
            &[(-8, 9), (-7, 8), (-5, 4), (-4, 3), (-1, 0), (0, -1), (4, -1), (5, 0), (5, 4)],
            &[(-8, 9), (-7, 8), (-4, 7), (-3, 8), (-1, 8), (0, -1), (0, 5), (1, 0), (1, 4)],
        ],
    ];
}

// ==================== tests ====================

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::build_code;
    use crate::gf2::symplectic_product;
    use crate::noise::CounterRng;

    fn rotated(d: usize) -> StabilizerCode {
        build_code(Family::SurfaceRotated, d).unwrap()
    }

    fn all_families() -> Vec<Family> {
        Family::ALL.to_vec()
    }

    /// Reference enumeration of a coset minimum: recompute every element
    /// from its subset mask instead of walking incrementally.
    fn coset_min_by_subset_scan(start: &BitVec, basis: &[&BitVec]) -> BitVec {
        let mut best: Option<(usize, BitVec)> = None;
        for mask in 0u64..1 << basis.len() {
            let mut v = start.clone();
            for (i, row) in basis.iter().enumerate() {
                if mask >> i & 1 == 1 {
                    v.xor_assign(row);
                }
            }
            let w = pauli_weight(&v);
            let better = match &best {
                None => true,
                Some((bw, bv)) => w < *bw || (w == *bw && lex_less(&v, bv)),
            };
            if better {
                best = Some((w, v));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn short_d_matrix_is_the_class_pairing_table() {
        // The short rows are coset representatives, so D is the symplectic
        // pairing table of the nonzero classes plus the ones row, no matter
        // the code or distance.
        let expected = [
            [0.0, 0.0, 1.0, 1.0],
            [0.0, 1.0, 0.0, 1.0],
            [0.0, 1.0, 1.0, 0.0],
            [1.0, 1.0, 1.0, 1.0],
        ];
        for family in all_families() {
            let code = build_code(family, 3).unwrap();
            let scheme = DiagnosisScheme::new(&code, short_construction(&code)).unwrap();
            assert_eq!(scheme.d_matrix.rows(), 4);
            for i in 0..4 {
                for j in 0..4 {
                    assert_eq!(scheme.d_matrix.get(i, j), expected[i][j], "({i},{j})");
                }
            }
            assert_eq!(scheme.class_order, vec![0b00, 0b01, 0b10, 0b11]);
        }
    }

    #[test]
    fn short_rows_are_minimum_weight_class_representatives() {
        for family in all_families() {
            let code = build_code(family, 3).unwrap();
            let h_g = short_construction(&code);
            let classes = [0b01, 0b10, 0b11];
            for (i, &w) in classes.iter().enumerate() {
                assert_eq!(code.logical_class(h_g.row(i)), Ok(w));
                assert!(pauli_weight(h_g.row(i)) >= 3);
                // Independent scan over the whole coset agrees on the
                // minimum and the lexicographic tie-break.
                let basis: Vec<&BitVec> = code.h_c.iter_rows().collect();
                let oracle =
                    coset_min_by_subset_scan(&code.class_representative(w), &basis);
                assert_eq!(h_g.row(i), &oracle, "{family} class {w:02b}");
            }
        }
    }

    #[test]
    fn short_scheme_diagnosis_fixture() {
        let code = rotated(3);
        let h_g = short_construction(&code);
        let scheme = DiagnosisScheme::new(&code, h_g.clone()).unwrap();
        // Diagnosing the class-10 row itself pairs it against the other two.
        let e = h_g.row(1);
        let g = scheme.diagnosis_of(e);
        assert_eq!(g.get(0), symplectic_product(h_g.row(0), e));
        assert!(!g.get(1));
        assert_eq!(g.get(2), symplectic_product(h_g.row(2), e));
        assert_eq!((g.get(0), g.get(1), g.get(2)), (true, false, true));
    }

    #[test]
    fn uniform_row_counts_match_the_family_laws() {
        for d in [3usize, 5] {
            let expect = |family| match family {
                Family::SurfaceUnrotated | Family::SurfaceRotated => 3 * d,
                Family::Color666 => 9 * (d + 1) / 2,
                Family::Color488 => 6 * (d + 1),
            };
            for family in all_families() {
                let code = build_code(family, d).unwrap();
                let h_g = uniform_construction(&code).unwrap();
                assert_eq!(h_g.rows(), expect(family), "{family} d={d}");
            }
        }
    }

    #[test]
    fn uniform_rows_are_logicals_in_class_blocks() {
        for family in all_families() {
            for d in [3usize, 5] {
                let code = build_code(family, d).unwrap();
                let h_g = uniform_construction(&code).unwrap();
                let block = h_g.rows() / 3;
                for (i, row) in h_g.iter_rows().enumerate() {
                    let expected = [0b01, 0b10, 0b11][i / block];
                    assert_eq!(
                        code.logical_class(row),
                        Ok(expected),
                        "{family} d={d} row {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn uniform_construction_rejects_unlisted_color_distances() {
        let code = build_code(Family::Color666, 11).unwrap();
        assert_eq!(
            uniform_construction(&code),
            Err(DiagnosisError::UnsupportedDistance { family: Family::Color666, d: 11 })
        );
        assert!(uniform_construction(&rotated(11)).is_ok());
    }

    #[test]
    fn sensitivity_of_check_matrices() {
        for d in [3usize, 5] {
            for family in all_families() {
                let code = build_code(family, d).unwrap();
                let expected = if family.is_surface() { 2 } else { 3 };
                assert_eq!(sensitivity(&code.h_c), expected, "{family} d={d}");
            }
        }
        assert_eq!(sensitivity(&BitMatrix::zeros(3, 8)), 0);
    }

    #[test]
    fn uniform_sensitivity_is_flat_in_distance() {
        for family in all_families() {
            let expected = match family {
                Family::SurfaceUnrotated | Family::SurfaceRotated => 2,
                Family::Color666 => 6,
                Family::Color488 => 8,
            };
            for d in [3usize, 5, 7, 9] {
                let code = build_code(family, d).unwrap();
                let h_g = uniform_construction(&code).unwrap();
                assert_eq!(sensitivity(&h_g), expected, "{family} d={d}");
            }
        }
    }

    #[test]
    fn boundary_distance_of_the_three_row_scheme_is_half() {
        // Columns 000, 011, 101, 110: the nearest constrained boundary point
        // to any column sits at squared distance 1/2.
        for family in all_families() {
            let code = build_code(family, 3).unwrap();
            let h_g = short_construction(&code);
            assert!((boundary_distance(&code, &h_g) - 0.5).abs() < 1e-9, "{family}");
            // Without the affine constraint the zero column collapses it.
            assert!(boundary_distance_unconstrained(&code, &h_g).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_boundary_distances_match_frozen_values() {
        // With r rows per class block the class columns sit at the corners
        // of a regular tetrahedron and the constrained minimum is r/2.
        let cases = [
            (Family::SurfaceRotated, 3, 1.5),
            (Family::SurfaceRotated, 5, 2.5),
            (Family::SurfaceRotated, 7, 3.5),
            (Family::SurfaceUnrotated, 3, 1.5),
            (Family::SurfaceUnrotated, 5, 2.5),
            (Family::Color666, 3, 3.0),
            (Family::Color666, 5, 4.5),
            (Family::Color488, 3, 4.0),
            (Family::Color488, 5, 6.0),
        ];
        for (family, d, expected) in cases {
            let code = build_code(family, d).unwrap();
            let h_g = uniform_construction(&code).unwrap();
            let m = boundary_distance(&code, &h_g);
            assert!((m - expected).abs() < 1e-9, "{family} d={d}: {m}");
        }
    }

    #[test]
    fn duplicating_every_row_doubles_the_boundary_distance() {
        let code = rotated(3);
        let h_g = short_construction(&code);
        let doubled = h_g.vstack(&h_g);
        let m = boundary_distance(&code, &h_g);
        let m2 = boundary_distance(&code, &doubled);
        assert!((m2 - 2.0 * m).abs() < 1e-9);
    }

    #[test]
    fn normalized_sensitivity_respects_the_distance_bound() {
        // N >= 2d/n for every scheme; the uniform schemes also improve with
        // distance while the bound itself shrinks.
        for family in all_families() {
            for d in [3usize, 5] {
                let code = build_code(family, d).unwrap();
                let bound = 2.0 * d as f64 / code.n as f64;
                for h_g in [short_construction(&code), uniform_construction(&code).unwrap()]
                {
                    let n_metric = normalized_sensitivity(&code, &h_g);
                    assert!(n_metric >= bound - 1e-12, "{family} d={d}: {n_metric} < {bound}");
                }
            }
        }
        let n3 = normalized_sensitivity(&rotated(3), &uniform_construction(&rotated(3)).unwrap());
        let n7 = normalized_sensitivity(&rotated(7), &uniform_construction(&rotated(7)).unwrap());
        assert!(n7 < n3);
    }

    #[test]
    fn faithfulness_examples() {
        let code = rotated(3);
        // Check rows alone span no logical class.
        assert!(!is_faithful(&code, &code.h_c));
        assert!(is_faithful(&code, &short_construction(&code)));
        for family in all_families() {
            for d in [3usize, 5] {
                let c = build_code(family, d).unwrap();
                assert!(is_faithful(&c, &uniform_construction(&c).unwrap()));
            }
        }
        // A row anticommuting with some check is rejected outright.
        let mut bad = BitMatrix::zeros(1, 2 * code.n);
        bad.set(0, 0, true);
        assert!(!is_faithful(&code, &bad));
    }

    #[test]
    fn decomposability_examples() {
        let code = rotated(3);
        let short = short_construction(&code);
        assert!(is_decomposable(&code, &short));
        // Two rows cannot separate four classes: D has more columns than rows.
        let two = BitMatrix::from_rows(vec![short.row(0).clone(), short.row(1).clone()]);
        assert!(is_faithful(&code, &two));
        assert!(!is_decomposable(&code, &two));
        assert_eq!(
            DiagnosisScheme::new(&code, two).unwrap_err(),
            DiagnosisError::NotDecomposable
        );
        // Duplicated rows collapse D's columns the same way.
        let dup = BitMatrix::from_rows(vec![short.row(0).clone(), short.row(0).clone()]);
        assert!(!is_decomposable(&code, &dup));
        assert_eq!(
            DiagnosisScheme::new(&code, code.h_c.clone()).unwrap_err(),
            DiagnosisError::NotFaithful
        );
    }

    #[test]
    fn d_inverse_is_a_left_inverse() {
        for family in all_families() {
            for d in [3usize, 5] {
                let code = build_code(family, d).unwrap();
                for h_g in [short_construction(&code), uniform_construction(&code).unwrap()]
                {
                    let scheme = DiagnosisScheme::new(&code, h_g).unwrap();
                    let prod = scheme.d_inv.mul_mat(&scheme.d_matrix);
                    for i in 0..4 {
                        for j in 0..4 {
                            let want = if i == j { 1.0 } else { 0.0 };
                            assert!((prod.get(i, j) - want).abs() < 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn diagnosis_depends_only_on_syndrome_and_class() {
        let code = rotated(3);
        let scheme =
            DiagnosisScheme::new(&code, uniform_construction(&code).unwrap()).unwrap();
        let mut rng = CounterRng::new(11, 0);
        for _ in 0..200 {
            let mut e = BitVec::zeros(2 * code.n);
            for i in 0..2 * code.n {
                e.set(i, rng.next_u64() & 1 == 1);
            }
            // Stabilizer factors leave the diagnosis alone.
            let mut stab = BitVec::zeros(2 * code.n);
            for row in code.h_c.iter_rows() {
                if rng.next_u64() & 1 == 1 {
                    stab.xor_assign(row);
                }
            }
            assert_eq!(scheme.diagnosis_of(&e), scheme.diagnosis_of(&e.xored(&stab)));
            // And the diagnosis reconstructs from (syndrome, class) alone.
            let s = code.syndrome(&e);
            let w = code.error_class(&e);
            let rebuilt = scheme
                .diagnosis_of(&code.pure_error(&s))
                .xored(&scheme.diagnosis_of(&code.class_representative(w)));
            assert_eq!(scheme.diagnosis_of(&e), rebuilt);
        }
    }

    #[test]
    fn class_columns_are_distinct() {
        for family in all_families() {
            let code = build_code(family, 3).unwrap();
            for h_g in [short_construction(&code), uniform_construction(&code).unwrap()] {
                let cols = class_columns(&code, &h_g);
                for a in 0..4 {
                    for b in a + 1..4 {
                        assert_ne!(cols[a], cols[b], "{family} columns {a} {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn coordinate_flips_preserve_the_boundary_distance() {
        // Flipping any subset of diagnosis coordinates (v -> 1 - v) is an
        // isometry that respects the affine constraint, so M is unchanged.
        let code = rotated(3);
        let cols = class_columns(&code, &uniform_construction(&code).unwrap());
        let m = min_constrained_distance(&cols);
        let mut rng = CounterRng::new(23, 0);
        for _ in 0..20 {
            let mut flipped = cols.clone();
            let delta: Vec<bool> =
                (0..cols[0].len()).map(|_| rng.next_u64() & 1 == 1).collect();
            for col in &mut flipped {
                for (v, &f) in col.iter_mut().zip(&delta) {
                    if f {
                        *v = 1.0 - *v;
                    }
                }
            }
            let m_flipped = min_constrained_distance(&flipped);
            assert!((m - m_flipped).abs() < 1e-9);
        }
    }

    #[test]
    fn scheme_ids_separate_schemes() {
        let code = rotated(3);
        let short = short_construction(&code);
        let uniform = uniform_construction(&code).unwrap();
        assert_eq!(scheme_id(&short), scheme_id(&short_construction(&code)));
        assert_ne!(scheme_id(&short), scheme_id(&uniform));
        let mut tweaked = short.clone();
        tweaked.set(0, 0, !tweaked.get(0, 0));
        assert_ne!(scheme_id(&short), scheme_id(&tweaked));
        assert_eq!(scheme_id(&short).len(), 64);
    }
}
