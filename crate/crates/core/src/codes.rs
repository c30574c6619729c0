//! The four supported code families as concrete stabilizer codes.
//!
//! Each family is laid out on an explicit 2D lattice:
//!
//! - `surface_unrotated`: qubits on the even-parity points of a
//!   (2d-1) x (2d-1) grid, X checks at (odd, even) points, Z checks at
//!   (even, odd) points. An [[2d^2-2d+1, 1, d]] code.
//! - `surface_rotated`: a d x d qubit grid with alternating bulk plaquettes
//!   and weight-2 boundary checks. An [[d^2, 1, d]] code.
//! - `color_666`: a triangular patch of the hexagonal tiling; every face
//!   carries one X and one Z check. An [[3/4 d^2 + 1/4, 1, d]] code.
//! - `color_488`: a triangular patch of the square-octagon tiling, faces
//!   again doubled into X/Z pairs. An [[1/2 d^2 + d - 1/2, 1, d]] code.
//!
//! Constructions are validated by invariants (commutation, ranks, the n
//! formula, brute-force distance) rather than by matching any particular
//! drawing of the lattice.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gf2::{gf2_solve, symplectic_product, BitMatrix, BitVec};

#[derive(Debug, Error, PartialEq)]
pub enum CodeError {
    #[error("distance must be odd and at least 3, got {0}")]
    InvalidDistance(usize),
    #[error("vector has a nonzero syndrome and no logical class")]
    NotInNormalizer,
    #[error("no logical operator found up to weight {0}")]
    BoundExceeded(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "surface_unrotated")]
    SurfaceUnrotated,
    #[serde(rename = "surface_rotated")]
    SurfaceRotated,
    #[serde(rename = "color_488")]
    Color488,
    #[serde(rename = "color_666")]
    Color666,
}

impl Family {
    pub const ALL: [Family; 4] =
        [Family::SurfaceUnrotated, Family::SurfaceRotated, Family::Color488, Family::Color666];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::SurfaceUnrotated => "surface_unrotated",
            Family::SurfaceRotated => "surface_rotated",
            Family::Color488 => "color_488",
            Family::Color666 => "color_666",
        }
    }

    pub fn is_surface(self) -> bool {
        matches!(self, Family::SurfaceUnrotated | Family::SurfaceRotated)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "surface_unrotated" => Ok(Family::SurfaceUnrotated),
            "surface_rotated" => Ok(Family::SurfaceRotated),
            "color_488" => Ok(Family::Color488),
            "color_666" => Ok(Family::Color666),
            other => Err(format!("unknown code family: {other}")),
        }
    }
}

/// A stabilizer code instance with its lattice geometry.
///
/// `h_c` rows are ordered all X-type checks first, then all Z-type;
/// `stab_coords_x[i]` is the position of row `i` and `stab_coords_z[j]` the
/// position of row `num_x_stabs() + j`. `g`'s two rows (k = 1) are one
/// minimum-weight X-type and one minimum-weight Z-type logical, ordered so
/// that `g Λ gᵀ` is the 2x2 swap block.
#[derive(Debug, Clone)]
pub struct StabilizerCode {
    pub family: Family,
    pub n: usize,
    pub k: usize,
    pub d: usize,
    /// (n-k) x 2n check matrix.
    pub h_c: BitMatrix,
    /// 2k x 2n logical generator matrix.
    pub g: BitMatrix,
    /// One representative per nonzero class, keyed by class index.
    pub logicals_by_class: BTreeMap<usize, BitVec>,
    /// 2n x (n-k) pure-error map; `pure_error(s) = T s`.
    pub t: BitMatrix,
    pub qubit_coords: Vec<(i32, i32)>,
    pub stab_coords_x: Vec<(i32, i32)>,
    pub stab_coords_z: Vec<(i32, i32)>,
}

impl StabilizerCode {
    pub fn num_x_stabs(&self) -> usize {
        self.stab_coords_x.len()
    }

    /// Number of logical classes, `4^k`.
    pub fn num_classes(&self) -> usize {
        1 << (2 * self.k)
    }

    /// `s(e) = H_c Λ eᵀ`.
    pub fn syndrome(&self, e: &BitVec) -> BitVec {
        assert_eq!(e.len(), 2 * self.n, "error vector must have length 2n");
        self.h_c.symplectic_mul(e)
    }

    /// The linear pure error `t(s) = T s`, satisfying `syndrome(t(s)) = s`.
    pub fn pure_error(&self, s: &BitVec) -> BitVec {
        assert_eq!(s.len(), self.n - self.k, "syndrome length mismatch");
        self.t.mul_vec(s)
    }

    /// Class of a normalizer element, read off by pairing against `g`'s rows:
    /// the pair partner of each generator detects it, so `w_{2i}` comes from
    /// row `2i+1` and `w_{2i+1}` from row `2i`. Class bits are packed
    /// big-endian: at k = 1 the classes order as 00 < 01 < 10 < 11.
    pub fn logical_class(&self, v: &BitVec) -> Result<usize, CodeError> {
        if !self.syndrome(v).is_zero() {
            return Err(CodeError::NotInNormalizer);
        }
        let mut w = 0usize;
        for i in 0..2 * self.k {
            let partner = i ^ 1;
            if symplectic_product(v, self.g.row(partner)) {
                w |= 1 << (2 * self.k - 1 - i);
            }
        }
        Ok(w)
    }

    /// Representative `wG` of class `w`: the sum of generator rows selected
    /// by the big-endian bits of `w`. Inverse of `logical_class` on classes.
    pub fn class_representative(&self, w: usize) -> BitVec {
        assert!(w < self.num_classes(), "class index out of range");
        let mut v = BitVec::zeros(2 * self.n);
        for i in 0..2 * self.k {
            if w >> (2 * self.k - 1 - i) & 1 == 1 {
                v.xor_assign(self.g.row(i));
            }
        }
        v
    }

    /// Class of an arbitrary error: strip the pure error of its syndrome
    /// first, then classify the remaining normalizer element.
    pub fn error_class(&self, e: &BitVec) -> usize {
        let s = self.syndrome(e);
        let v = e.xored(&self.pure_error(&s));
        self.logical_class(&v).expect("e + t(s(e)) is in the normalizer")
    }

    /// Minimum pauli weight over normalizer elements with nonzero class,
    /// found by weight-ordered support enumeration.
    ///
    /// All four families are CSS with a linear class map, so the minimum is
    /// attained by a pure X-type or pure Z-type element: splitting any mixed
    /// logical into halves keeps at least one half a nontrivial logical of no
    /// larger weight. The scan therefore enumerates single-type supports.
    pub fn code_distance(&self, max_weight: usize) -> Result<usize, CodeError> {
        // X-type candidates must commute with Z checks and be detected by the
        // Z logical; symmetrically for Z-type.
        let num_x = self.num_x_stabs();
        let z_check_supports: Vec<BitVec> =
            (num_x..self.h_c.rows()).map(|i| self.h_c.row(i).halves().1).collect();
        let x_check_supports: Vec<BitVec> =
            (0..num_x).map(|i| self.h_c.row(i).halves().0).collect();
        let x_logical_support = self.g.row(0).halves().0;
        let z_logical_support = self.g.row(1).halves().1;
        for w in 1..=max_weight {
            let hit_x = find_support(self.n, w, &z_check_supports, &z_logical_support);
            let hit_z = find_support(self.n, w, &x_check_supports, &x_logical_support);
            if hit_x || hit_z {
                return Ok(w);
            }
        }
        Err(CodeError::BoundExceeded(max_weight))
    }
}

/// Depth-first scan over weight-`w` supports: true when some support is
/// orthogonal to every check and pairs oddly with the detector.
fn find_support(n: usize, w: usize, checks: &[BitVec], detector: &BitVec) -> bool {
    fn rec(
        n: usize,
        w: usize,
        start: usize,
        acc: &mut BitVec,
        checks: &[BitVec],
        detector: &BitVec,
    ) -> bool {
        if w == 0 {
            return checks.iter().all(|c| !acc.dot(c)) && acc.dot(detector);
        }
        for i in start..=n - w {
            acc.set(i, true);
            if rec(n, w - 1, i + 1, acc, checks, detector) {
                return true;
            }
            acc.set(i, false);
        }
        false
    }
    let mut acc = BitVec::zeros(n);
    rec(n, w, 0, &mut acc, checks, detector)
}

// ==================== lattice geometry ====================

/// Intermediate lattice description shared by all four builders.
struct Geometry {
    qubit_coords: Vec<(i32, i32)>,
    /// Per-check qubit-index supports.
    x_checks: Vec<Vec<usize>>,
    z_checks: Vec<Vec<usize>>,
    x_coords: Vec<(i32, i32)>,
    z_coords: Vec<(i32, i32)>,
    /// Qubit-index supports of one X-type and one Z-type logical.
    x_logical: Vec<usize>,
    z_logical: Vec<usize>,
}

fn index_of(coords: &[(i32, i32)]) -> BTreeMap<(i32, i32), usize> {
    coords.iter().enumerate().map(|(i, &c)| (c, i)).collect()
}

fn surface_unrotated_geometry(d: usize) -> Geometry {
    let side = 2 * d as i32 - 1;
    let mut qubit_coords = Vec::new();
    for i in 0..side {
        for j in 0..side {
            if (i + j) % 2 == 0 {
                qubit_coords.push((i, j));
            }
        }
    }
    let qidx = index_of(&qubit_coords);
    let mut x_checks = Vec::new();
    let mut z_checks = Vec::new();
    let mut x_coords = Vec::new();
    let mut z_coords = Vec::new();
    for i in 0..side {
        for j in 0..side {
            let support: Vec<usize> = [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
                .iter()
                .filter_map(|p| qidx.get(p).copied())
                .collect();
            if i % 2 == 1 && j % 2 == 0 {
                x_checks.push(support);
                x_coords.push((i, j));
            } else if i % 2 == 0 && j % 2 == 1 {
                z_checks.push(support);
                z_coords.push((i, j));
            }
        }
    }
    // X logical along the top row, Z logical down the left column; they
    // share exactly the corner qubit.
    let x_logical = (0..d as i32).map(|t| qidx[&(0, 2 * t)]).collect();
    let z_logical = (0..d as i32).map(|t| qidx[&(2 * t, 0)]).collect();
    Geometry { qubit_coords, x_checks, z_checks, x_coords, z_coords, x_logical, z_logical }
}

fn surface_rotated_geometry(d: usize) -> Geometry {
    let dd = d as i32;
    let mut qubit_coords = Vec::new();
    for i in 0..dd {
        for j in 0..dd {
            qubit_coords.push((i, j));
        }
    }
    let qidx = index_of(&qubit_coords);
    let mut x_checks = Vec::new();
    let mut z_checks = Vec::new();
    let mut x_coords = Vec::new();
    let mut z_coords = Vec::new();
    // Bulk plaquettes between qubits (i..i+1, j..j+1), alternating by parity.
    // Check positions use doubled coordinates so faces sit at odd points and
    // boundary halves at -1 / 2d-1.
    for i in 0..dd - 1 {
        for j in 0..dd - 1 {
            let support =
                vec![qidx[&(i, j)], qidx[&(i + 1, j)], qidx[&(i, j + 1)], qidx[&(i + 1, j + 1)]];
            if (i + j) % 2 == 0 {
                x_checks.push(support);
                x_coords.push((2 * i + 1, 2 * j + 1));
            } else {
                z_checks.push(support);
                z_coords.push((2 * i + 1, 2 * j + 1));
            }
        }
    }
    for i in 0..dd - 1 {
        // Weight-2 X checks cap the j=0 edge at odd i and the j=d-1 edge at
        // even i, continuing the bulk alternation.
        if i % 2 == 1 {
            x_checks.push(vec![qidx[&(i, 0)], qidx[&(i + 1, 0)]]);
            x_coords.push((2 * i + 1, -1));
        } else {
            x_checks.push(vec![qidx[&(i, dd - 1)], qidx[&(i + 1, dd - 1)]]);
            x_coords.push((2 * i + 1, 2 * dd - 1));
        }
    }
    for j in 0..dd - 1 {
        if j % 2 == 0 {
            z_checks.push(vec![qidx[&(0, j)], qidx[&(0, j + 1)]]);
            z_coords.push((-1, 2 * j + 1));
        } else {
            z_checks.push(vec![qidx[&(dd - 1, j)], qidx[&(dd - 1, j + 1)]]);
            z_coords.push((2 * dd - 1, 2 * j + 1));
        }
    }
    let x_logical = (0..dd).map(|j| qidx[&(0, j)]).collect();
    let z_logical = (0..dd).map(|i| qidx[&(i, 0)]).collect();
    Geometry { qubit_coords, x_checks, z_checks, x_coords, z_coords, x_logical, z_logical }
}

fn color_666_geometry(d: usize) -> Geometry {
    let rr = 3 * (d as i32 - 1) / 2;
    let mut qubit_coords = Vec::new();
    let mut faces = Vec::new();
    for r in 0..=rr {
        for c in 0..=r {
            if (r + c) % 3 == 1 {
                faces.push((r, c));
            } else {
                qubit_coords.push((r, c));
            }
        }
    }
    let qidx = index_of(&qubit_coords);
    let mut checks = Vec::new();
    for &(r, c) in &faces {
        let support: Vec<usize> = [(r - 1, c - 1), (r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c), (r + 1, c + 1)]
            .iter()
            .filter_map(|p| qidx.get(p).copied())
            .collect();
        checks.push(support);
    }
    // Left boundary column: d qubits, a minimum-weight logical.
    let logical: Vec<usize> =
        (0..=rr).filter(|r| r % 3 != 1).map(|r| qidx[&(r, 0)]).collect();
    Geometry {
        qubit_coords,
        x_checks: checks.clone(),
        z_checks: checks,
        x_coords: faces.clone(),
        z_coords: faces,
        x_logical: logical.clone(),
        z_logical: logical,
    }
}

// The 4.8.8 patch lives on coordinates scaled by 4: squares centered at
// (4i, 4j) with corner qubits one step away, octagons centered at
// (4i+2, 4j+2). Boundary faces are four-corner arcs of octagons.

fn sq_corners(i: i32, j: i32) -> Vec<(i32, i32)> {
    let (x, y) = (4 * i, 4 * j);
    vec![(x, y + 1), (x + 1, y), (x, y - 1), (x - 1, y)]
}

fn oct_cycle(i: i32, j: i32) -> Vec<(i32, i32)> {
    let (x, y) = (4 * i, 4 * j);
    vec![
        (x + 1, y),
        (x + 3, y),
        (x + 4, y + 1),
        (x + 4, y + 3),
        (x + 3, y + 4),
        (x + 1, y + 4),
        (x, y + 3),
        (x, y + 1),
    ]
}

fn color_488_faces(d: usize) -> (Vec<Vec<(i32, i32)>>, Vec<(i32, i32)>) {
    let t = (d as i32 - 3) / 2;
    let mut supports = Vec::new();
    let mut centers = Vec::new();
    for i in (1 - t)..=1 {
        for j in 0..=(1 - i) {
            supports.push(sq_corners(i, j));
            centers.push((4 * i, 4 * j));
        }
    }
    for i in (1 - t)..=0 {
        for j in 0..=(-i) {
            supports.push(oct_cycle(i, j));
            centers.push((4 * i + 2, 4 * j + 2));
        }
    }
    let mut arc = |i: i32, j: i32, idx: [usize; 4]| {
        let cycle = oct_cycle(i, j);
        supports.push(idx.iter().map(|&k| cycle[k]).collect());
        centers.push((4 * i + 2, 4 * j + 2));
    };
    arc(1, 0, [5, 6, 7, 0]);
    let mut i = 0;
    while i >= 1 - t {
        arc(i, -1, [3, 4, 5, 6]);
        i -= 2;
    }
    let mut j = t - 2;
    while j >= 0 {
        arc(-t, j, [1, 2, 3, 4]);
        j -= 2;
    }
    for i in (1 - t)..=0 {
        arc(i, 1 - i, [6, 7, 0, 1]);
    }
    arc(-t, t, [0, 1, 2, 3]);
    (supports, centers)
}

/// Minimum-weight 4.8.8 logical: a string hugging the bottom boundary. It
/// starts on the column x = 4 and then alternates square/octagon crossings
/// leftward, two qubits per step, for weight 3 + (d-3) = d.
fn color_488_logical(d: usize) -> Vec<(i32, i32)> {
    let t = (d as i32 - 3) / 2;
    let mut string = vec![(4, 3), (4, 1), (4, -1)];
    for step in 1..=t {
        let i = 1 - step;
        if step % 2 == 1 {
            string.push((4 * i, -1));
            string.push((4 * i - 1, 0));
        } else {
            string.push((4 * i + 1, 0));
            string.push((4 * i, -1));
        }
    }
    string
}

fn color_488_geometry(d: usize) -> Geometry {
    let (face_coords, centers) = color_488_faces(d);
    let mut qubit_coords: Vec<(i32, i32)> = face_coords.iter().flatten().copied().collect();
    qubit_coords.sort_unstable();
    qubit_coords.dedup();
    let qidx = index_of(&qubit_coords);
    let checks: Vec<Vec<usize>> =
        face_coords.iter().map(|f| f.iter().map(|q| qidx[q]).collect()).collect();
    let logical: Vec<usize> = color_488_logical(d).iter().map(|q| qidx[q]).collect();
    Geometry {
        qubit_coords,
        x_checks: checks.clone(),
        z_checks: checks,
        x_coords: centers.clone(),
        z_coords: centers,
        x_logical: logical.clone(),
        z_logical: logical,
    }
}

// ==================== assembly ====================

fn support_to_vec(n: usize, support: &[usize], x_type: bool) -> BitVec {
    let shifted: Vec<usize> =
        support.iter().map(|&q| if x_type { q } else { n + q }).collect();
    BitVec::from_indices(2 * n, &shifted)
}

pub fn expected_n(family: Family, d: usize) -> usize {
    match family {
        Family::SurfaceUnrotated => 2 * d * d - 2 * d + 1,
        Family::SurfaceRotated => d * d,
        Family::Color488 => (d * d + 2 * d - 1) / 2,
        Family::Color666 => (3 * d * d + 1) / 4,
    }
}

/// Construct a code family member at odd distance `d >= 3`.
pub fn build_code(family: Family, d: usize) -> Result<StabilizerCode, CodeError> {
    if d < 3 || d % 2 == 0 {
        return Err(CodeError::InvalidDistance(d));
    }
    let geom = match family {
        Family::SurfaceUnrotated => surface_unrotated_geometry(d),
        Family::SurfaceRotated => surface_rotated_geometry(d),
        Family::Color488 => color_488_geometry(d),
        Family::Color666 => color_666_geometry(d),
    };
    let n = geom.qubit_coords.len();
    let k = 1;
    assert_eq!(n, expected_n(family, d), "qubit count disagrees with the family formula");

    let mut rows = Vec::with_capacity(n - k);
    for sup in &geom.x_checks {
        rows.push(support_to_vec(n, sup, true));
    }
    for sup in &geom.z_checks {
        rows.push(support_to_vec(n, sup, false));
    }
    let h_c = BitMatrix::from_rows(rows);
    assert_eq!(h_c.rows(), n - k, "check count disagrees with n - k");

    let g = BitMatrix::from_rows(vec![
        support_to_vec(n, &geom.x_logical, true),
        support_to_vec(n, &geom.z_logical, false),
    ]);

    // Class indices pack pairing bits big-endian; see logical_class. Row 0
    // of g (X-type) is detected by row 1 and lands in class 10, and vice
    // versa; the product covers class 11.
    let mut logicals_by_class = BTreeMap::new();
    logicals_by_class.insert(0b01, g.row(1).clone());
    logicals_by_class.insert(0b10, g.row(0).clone());
    logicals_by_class.insert(0b11, g.row(0).xored(g.row(1)));

    // T column by column: t(unit syndrome s_j) solves (H_c Λ) x = e_j.
    let h_c_lambda = h_c.times_lambda();
    let mut t = BitMatrix::zeros(2 * n, n - k);
    for j in 0..n - k {
        let unit = BitVec::from_indices(n - k, &[j]);
        let col = gf2_solve(&h_c_lambda, &unit)
            .expect("every syndrome is attainable: H_c has full row rank");
        for i in col.ones() {
            t.set(i, j, true);
        }
    }

    let code = StabilizerCode {
        family,
        n,
        k,
        d,
        h_c,
        g,
        logicals_by_class,
        t,
        qubit_coords: geom.qubit_coords,
        stab_coords_x: geom.x_coords,
        stab_coords_z: geom.z_coords,
    };
    debug_assert!(code.syndrome(code.g.row(0)).is_zero());
    debug_assert!(code.syndrome(code.g.row(1)).is_zero());
    Ok(code)
}

// ==================== tests ====================
