//! Bit-packed GF(2) linear algebra, the binary symplectic form, and the
//! small dense real kernels (Householder QR) behind class extraction.
//!
//! Pauli operators live here as length-`2n` bit vectors: bits `0..n` are the
//! X part, bits `n..2n` the Z part. The symplectic form pairs the two halves,
//! so two operators commute exactly when their product is 0.
//!
//! Everything is immutable after construction and free of interior state;
//! all operations are pure and safe to call from worker threads.

use std::fmt;

use thiserror::Error;

const WORD: usize = 64;

#[derive(Debug, Error, PartialEq)]
pub enum Gf2Error {
    /// QR found a diagonal entry of R below the rank threshold: the matrix
    /// has no trustworthy left inverse.
    #[error("matrix is not decomposable: |R[{index},{index}]| = {magnitude:.3e} is below 1e-9")]
    NotDecomposable { index: usize, magnitude: f64 },
}

// ==================== BitVec ====================

/// Fixed-length bit vector packed into `u64` words.
///
/// Trailing bits of the last word are kept zero, so derived equality and
/// hashing are bytewise.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        BitVec { len, words: vec![0; len.div_ceil(WORD)] }
    }

    /// Build from 0/1 entries.
    pub fn from_bits(bits: &[u8]) -> Self {
        let mut v = BitVec::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            debug_assert!(b <= 1, "from_bits entries must be 0 or 1");
            if b != 0 {
                v.set(i, true);
            }
        }
        v
    }

    /// Reassemble from packed words; bits past `len` are masked off.
    pub fn from_words(len: usize, words: &[u64]) -> Self {
        assert_eq!(words.len(), len.div_ceil(WORD), "word count mismatch");
        let mut v = BitVec { len, words: words.to_vec() };
        v.mask_tail();
        v
    }

    /// Zero vector of length `len` with the given bits set.
    pub fn from_indices(len: usize, ones: &[usize]) -> Self {
        let mut v = BitVec::zeros(len);
        for &i in ones {
            v.set(i, true);
        }
        v
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        self.words[i / WORD] >> (i % WORD) & 1 == 1
    }

    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Number of set bits.
    pub fn hamming(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len, "xor of unequal lengths");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xored(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    /// Parity of the AND of the two vectors: the GF(2) inner product.
    pub fn dot(&self, other: &BitVec) -> bool {
        assert_eq!(self.len, other.len, "dot of unequal lengths");
        let mut acc = 0u32;
        for (a, b) in self.words.iter().zip(&other.words) {
            acc ^= (a & b).count_ones();
        }
        acc & 1 == 1
    }

    /// Indices of set bits, ascending.
    pub fn ones(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len).filter(|&i| self.get(i))
    }

    /// Split an even-length vector into its X half (bits `0..n`) and Z half
    /// (bits `n..2n`).
    pub fn halves(&self) -> (BitVec, BitVec) {
        assert!(self.len % 2 == 0, "halves of odd-length vector");
        let n = self.len / 2;
        (self.extract(0, n), self.extract(n, n))
    }

    /// Concatenate an X half and a Z half into one symplectic vector.
    pub fn from_halves(x: &BitVec, z: &BitVec) -> BitVec {
        assert_eq!(x.len, z.len, "halves of unequal lengths");
        let mut v = BitVec::zeros(2 * x.len);
        for i in x.ones() {
            v.set(i, true);
        }
        for i in z.ones() {
            v.set(x.len + i, true);
        }
        v
    }

    fn extract(&self, start: usize, len: usize) -> BitVec {
        assert!(start + len <= self.len);
        let mut out = BitVec::zeros(len);
        for w in 0..out.words.len() {
            let lo = start + w * WORD;
            let shift = lo % WORD;
            let mut word = self.words[lo / WORD] >> shift;
            if shift != 0 && lo / WORD + 1 < self.words.len() {
                word |= self.words[lo / WORD + 1] << (WORD - shift);
            }
            out.words[w] = word;
        }
        out.mask_tail();
        out
    }

    /// Raw packed words, little-endian bit order within each word.
    pub fn words(&self) -> &[u64] {
        &self.words
    }

    fn mask_tail(&mut self) {
        let tail = self.len % WORD;
        if tail != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << tail) - 1;
            }
        }
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect();
        write!(f, "BitVec({s})")
    }
}

// ==================== BitMatrix ====================

/// Row-major matrix over GF(2); every row is a [`BitVec`] of length `cols`.
#[derive(Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    data: Vec<BitVec>,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        BitMatrix { rows, cols, data: vec![BitVec::zeros(cols); rows] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = BitMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i].set(i, true);
        }
        m
    }

    /// The symplectic form `Λ` on `2n` bits: the block swap `[[0,I],[I,0]]`.
    pub fn lambda(n: usize) -> Self {
        let mut m = BitMatrix::zeros(2 * n, 2 * n);
        for i in 0..n {
            m.data[i].set(n + i, true);
            m.data[n + i].set(i, true);
        }
        m
    }

    pub fn from_rows(rows: Vec<BitVec>) -> Self {
        let cols = rows.first().map_or(0, BitVec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "rows of unequal length");
        BitMatrix { rows: rows.len(), cols, data: rows }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &BitVec {
        &self.data[i]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &BitVec> {
        self.data.iter()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.data[i].get(j)
    }

    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        self.data[i].set(j, value);
    }

    pub fn set_row(&mut self, i: usize, row: BitVec) {
        assert_eq!(row.len(), self.cols, "row length mismatch");
        self.data[i] = row;
    }

    /// Stack `self` on top of `bottom`.
    pub fn vstack(&self, bottom: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, bottom.cols, "vstack of unequal widths");
        let mut data = self.data.clone();
        data.extend_from_slice(&bottom.data);
        BitMatrix { rows: self.rows + bottom.rows, cols: self.cols, data }
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in self.data[i].ones() {
                t.data[j].set(i, true);
            }
        }
        t
    }

    /// Matrix-vector product over GF(2); `v` has length `cols`.
    pub fn mul_vec(&self, v: &BitVec) -> BitVec {
        assert_eq!(v.len(), self.cols, "vector length mismatch");
        let mut out = BitVec::zeros(self.rows);
        for (i, row) in self.data.iter().enumerate() {
            if row.dot(v) {
                out.set(i, true);
            }
        }
        out
    }

    pub fn mul_mat(&self, other: &BitMatrix) -> BitMatrix {
        assert_eq!(self.cols, other.rows, "inner dimension mismatch");
        let ot = other.transpose();
        let mut out = BitMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                if self.data[i].dot(&ot.data[j]) {
                    out.data[i].set(j, true);
                }
            }
        }
        out
    }

    /// One symplectic product per row: `self · Λ · vᵀ`.
    pub fn symplectic_mul(&self, v: &BitVec) -> BitVec {
        let mut out = BitVec::zeros(self.rows);
        for (i, row) in self.data.iter().enumerate() {
            if symplectic_product(row, v) {
                out.set(i, true);
            }
        }
        out
    }

    /// Hamming weight of column `j`.
    pub fn column_weight(&self, j: usize) -> usize {
        assert!(j < self.cols);
        self.data.iter().filter(|r| r.get(j)).count()
    }

    /// `self · Λ`: right-multiplying by the block swap exchanges the X and Z
    /// halves of every row.
    pub fn times_lambda(&self) -> BitMatrix {
        let data = self
            .data
            .iter()
            .map(|row| {
                let (x, z) = row.halves();
                BitVec::from_halves(&z, &x)
            })
            .collect();
        BitMatrix { rows: self.rows, cols: self.cols, data }
    }
}

impl fmt::Debug for BitMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "BitMatrix {}x{} [", self.rows, self.cols)?;
        for row in &self.data {
            let s: String = (0..self.cols).map(|j| if row.get(j) { '1' } else { '0' }).collect();
            writeln!(f, "  {s}")?;
        }
        write!(f, "]")
    }
}

// ==================== symplectic form and weight ====================

/// The commutation pairing `u Λ vᵀ = Σᵢ uᵢ·v_{n+i} ⊕ u_{n+i}·vᵢ`.
///
/// Zero means the two Pauli operators commute.
pub fn symplectic_product(u: &BitVec, v: &BitVec) -> bool {
    assert_eq!(u.len(), v.len(), "symplectic product of unequal lengths");
    assert!(u.len() % 2 == 0, "symplectic product needs even length");
    let (ux, uz) = u.halves();
    let (vx, vz) = v.halves();
    ux.dot(&vz) ^ uz.dot(&vx)
}

/// Number of qubits a symplectic vector acts on: indices `i < n` with
/// `vᵢ ⊕ v_{n+i} ⊕ vᵢ·v_{n+i} = 1`, i.e. where either half is set.
pub fn pauli_weight(v: &BitVec) -> usize {
    assert!(v.len() % 2 == 0, "pauli weight needs even length");
    let (x, z) = v.halves();
    x.words.iter().zip(&z.words).map(|(a, b)| (a | b).count_ones() as usize).sum()
}

// ==================== GF(2) elimination ====================

/// Rank and reduced row echelon form over GF(2).
pub fn gf2_rank(m: &BitMatrix) -> (usize, BitMatrix) {
    let mut rows = m.data.clone();
    let rank = rref_in_place(&mut rows, m.cols, None);
    (rank, BitMatrix { rows: m.rows, cols: m.cols, data: rows })
}

/// A particular solution of `Mx = b`, or `None` when the system is
/// inconsistent. Free variables are set to zero; callers needing other
/// solutions add kernel vectors.
pub fn gf2_solve(m: &BitMatrix, b: &BitVec) -> Option<BitVec> {
    assert_eq!(b.len(), m.rows, "rhs length must equal row count");
    let mut rows = m.data.clone();
    let mut rhs: Vec<bool> = (0..m.rows).map(|i| b.get(i)).collect();
    let rank = rref_in_place(&mut rows, m.cols, Some(&mut rhs));
    // Inconsistent when a zero row carries a 1 on the right.
    for i in rank..m.rows {
        if rhs[i] {
            return None;
        }
    }
    let mut x = BitVec::zeros(m.cols);
    for (i, row) in rows.iter().enumerate().take(rank) {
        let pivot = row.ones().next().expect("pivot row is nonzero");
        // RREF cleared every other pivot column, and free variables are zero.
        if rhs[i] {
            x.set(pivot, true);
        }
    }
    Some(x)
}

/// In-place RREF; returns the rank. `rhs`, when present, receives the same
/// row operations (augmented-system elimination).
fn rref_in_place(rows: &mut [BitVec], cols: usize, mut rhs: Option<&mut Vec<bool>>) -> usize {
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows.len()).find(|&r| rows[r].get(col)) else {
            continue;
        };
        rows.swap(rank, pivot);
        if let Some(rhs) = rhs.as_deref_mut() {
            rhs.swap(rank, pivot);
        }
        for r in 0..rows.len() {
            if r != rank && rows[r].get(col) {
                let (head, tail) = if r < rank {
                    let (a, b) = rows.split_at_mut(rank);
                    (&mut a[r], &b[0])
                } else {
                    let (a, b) = rows.split_at_mut(r);
                    (&mut b[0], &a[rank])
                };
                head.xor_assign(tail);
                if let Some(rhs) = rhs.as_deref_mut() {
                    rhs[r] ^= rhs[rank];
                }
            }
        }
        rank += 1;
        if rank == rows.len() {
            break;
        }
    }
    rank
}

// ==================== RealMatrix and QR ====================

/// Dense row-major matrix of finite doubles.
#[derive(Clone, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = RealMatrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols), "rows of unequal length");
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        assert!(data.iter().all(|x| x.is_finite()), "entries must be finite");
        RealMatrix { rows: rows.len(), cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        assert!(i < self.rows && j < self.cols);
        assert!(value.is_finite(), "entries must be finite");
        self.data[i * self.cols + j] = value;
    }

    /// `self · v` for a column vector `v` of length `cols`.
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.cols, "vector length mismatch");
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.data[i * self.cols + j] * v[j]).sum())
            .collect()
    }

    pub fn mul_mat(&self, other: &RealMatrix) -> RealMatrix {
        assert_eq!(self.cols, other.rows, "inner dimension mismatch");
        let mut out = RealMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.data[k * other.cols + j];
                }
            }
        }
        out
    }
}

impl fmt::Debug for RealMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "RealMatrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            let row: Vec<String> =
                (0..self.cols).map(|j| format!("{:10.4}", self.get(i, j))).collect();
            writeln!(f, "  {}", row.join(" "))?;
        }
        write!(f, "]")
    }
}

/// Rank threshold on the diagonal of R.
const QR_EPS: f64 = 1e-9;

/// Left inverse `D⁻¹ = R⁻¹Qᵀ` of a tall full-column-rank matrix, via
/// Householder QR in double precision.
///
/// For any `y`, `D⁻¹y` is the coefficient vector of the least-squares
/// projection of `y` onto the column space of `D`. Fails with
/// [`Gf2Error::NotDecomposable`] when some `|R[k,k]|` falls below `1e-9`.
pub fn qr_left_inverse(d: &RealMatrix) -> Result<RealMatrix, Gf2Error> {
    let (m, n) = (d.rows, d.cols);
    assert!(m >= n, "left inverse needs rows >= cols");
    let mut work = d.clone();
    // Accumulate Qᵀ by applying each reflector to the identity.
    let mut qt = RealMatrix::identity(m);
    let mut v = vec![0.0; m];
    for k in 0..n {
        let norm: f64 = (k..m).map(|i| work.data[i * n + k].powi(2)).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Gf2Error::NotDecomposable { index: k, magnitude: 0.0 });
        }
        let head = work.data[k * n + k];
        let alpha = if head >= 0.0 { -norm } else { norm };
        v[k] = head - alpha;
        for i in k + 1..m {
            v[i] = work.data[i * n + k];
        }
        let vtv: f64 = (k..m).map(|i| v[i] * v[i]).sum();
        if vtv > 0.0 {
            let beta = 2.0 / vtv;
            for j in k..n {
                let s: f64 = (k..m).map(|i| v[i] * work.data[i * n + j]).sum();
                for i in k..m {
                    work.data[i * n + j] -= beta * s * v[i];
                }
            }
            for j in 0..m {
                let s: f64 = (k..m).map(|i| v[i] * qt.data[i * m + j]).sum();
                for i in k..m {
                    qt.data[i * m + j] -= beta * s * v[i];
                }
            }
        }
    }
    for k in 0..n {
        let diag = work.data[k * n + k].abs();
        if diag < QR_EPS {
            return Err(Gf2Error::NotDecomposable { index: k, magnitude: diag });
        }
    }
    // Back-substitute R x = (Qᵀ)_col for every column of Qᵀ at once.
    let mut inv = RealMatrix::zeros(n, m);
    for j in 0..m {
        for i in (0..n).rev() {
            let mut s = qt.data[i * m + j];
            for l in i + 1..n {
                s -= work.data[i * n + l] * inv.data[l * m + j];
            }
            inv.data[i * m + j] = s / work.data[i * n + i];
        }
    }
    debug_assert!(inv.data.iter().all(|x| x.is_finite()));
    Ok(inv)
}

// ==================== tests ====================
