//! Minimum-distance and matching-based reference decoders.
//!
//! `md_decode` finds the most probable minimum-weight error for any family
//! by iterative-deepening search; `mwpm_decode` matches defect pairs on
//! surface codes, solving each error type as an exact minimum-weight
//! perfect matching over the defects and their boundary options.

use rayon::prelude::*;
use thiserror::Error;

use crate::codes::StabilizerCode;
use crate::decode::{is_success, wilson_interval, RateEstimate};
use crate::gf2::BitVec;
use crate::noise::NoiseModel;

/// Matching by subset enumeration is exponential in the defect count; past
/// this many defects of one type the caller must fall back or report.
pub const MATCHING_CAP: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum BaselineError {
    #[error("no consistent error found up to weight {0}")]
    BoundExceeded(usize),
    #[error("{found} defects of one type exceed the matching cap of {cap}")]
    TooManyDefects { found: usize, cap: usize },
}

// ==================== minimum distance ====================

/// One single-qubit Pauli choice: its error vector and its syndrome.
struct PauliMove {
    qubit: usize,
    error: BitVec,
    syndrome: BitVec,
}

/// Exact minimum-distance decoding: the lowest-weight error with syndrome
/// `s`; among equal weights the model's most probable, then the
/// lexicographically smallest vector.
///
/// Iterative deepening over supports in weight order. Each node branches on
/// the lowest unfixed syndrome bit, so only Paulis touching that bit are
/// candidates, and a branch is cut when the residual has more set bits than
/// the remaining support can flip.
pub fn md_decode(
    code: &StabilizerCode,
    model: &NoiseModel,
    s: &BitVec,
    max_weight: usize,
) -> Result<BitVec, BaselineError> {
    assert_eq!(s.len(), code.n - code.k, "syndrome length mismatch");
    if s.is_zero() {
        return Ok(BitVec::zeros(2 * code.n));
    }
    let checks = code.n - code.k;
    // Three moves per qubit, indexed by every syndrome bit they flip.
    let mut moves: Vec<PauliMove> = Vec::with_capacity(3 * code.n);
    for q in 0..code.n {
        for (xbit, zbit) in [(true, false), (false, true), (true, true)] {
            let mut e = BitVec::zeros(2 * code.n);
            e.set(q, xbit);
            e.set(code.n + q, zbit);
            let syndrome = code.syndrome(&e);
            moves.push(PauliMove { qubit: q, error: e, syndrome });
        }
    }
    let mut touching: Vec<Vec<usize>> = vec![Vec::new(); checks];
    for (idx, mv) in moves.iter().enumerate() {
        for b in mv.syndrome.ones() {
            touching[b].push(idx);
        }
    }
    let max_flips = moves.iter().map(|m| m.syndrome.hamming()).max().unwrap_or(0);

    struct Search<'a> {
        moves: &'a [PauliMove],
        touching: &'a [Vec<usize>],
        max_flips: usize,
        solutions: Vec<BitVec>,
    }
    impl Search<'_> {
        fn dfs(&mut self, residual: &BitVec, current: &BitVec, used: u64, left: usize) {
            let Some(lowest) = residual.ones().next() else {
                if left == 0 {
                    self.solutions.push(current.clone());
                }
                return;
            };
            if left == 0 || residual.hamming() > left * self.max_flips {
                return;
            }
            for &idx in &self.touching[lowest] {
                let mv = &self.moves[idx];
                if used >> mv.qubit & 1 == 1 {
                    continue;
                }
                self.dfs(
                    &residual.xored(&mv.syndrome),
                    &current.xored(&mv.error),
                    used | 1 << mv.qubit,
                    left - 1,
                );
            }
        }
    }

    let mut search = Search { moves: &moves, touching: &touching, max_flips, solutions: Vec::new() };
    for weight in 1..=max_weight {
        search.dfs(s, &BitVec::zeros(2 * code.n), 0, weight);
        if !search.solutions.is_empty() {
            search.solutions.sort_by(|a, b| lex_cmp(a, b));
            search.solutions.dedup();
            let mut best = search.solutions[0].clone();
            let mut best_lp = model.log_prob(&best);
            for cand in &search.solutions[1..] {
                let lp = model.log_prob(cand);
                if lp > best_lp {
                    best = cand.clone();
                    best_lp = lp;
                }
            }
            return Ok(best);
        }
    }
    Err(BaselineError::BoundExceeded(max_weight))
}

/// Bitwise lexicographic order, lowest index first, 0 before 1.
fn lex_cmp(a: &BitVec, b: &BitVec) -> std::cmp::Ordering {
    for (wa, wb) in a.words().iter().zip(b.words()) {
        if wa != wb {
            let low = (wa ^ wb) & (wa ^ wb).wrapping_neg();
            return if wa & low == 0 { std::cmp::Ordering::Less } else { std::cmp::Ordering::Greater };
        }
    }
    std::cmp::Ordering::Equal
}

// ==================== matching ====================

/// Defects of one error type with everything a matching needs: pairwise
/// chain costs, per-defect boundary costs, and the qubit paths realizing
/// them.
pub struct DefectGraph {
    /// Check indices (within the type) whose syndrome bit is set.
    pub defects: Vec<usize>,
    /// Lattice coordinates of those checks.
    pub positions: Vec<(i32, i32)>,
    /// `costs[i][j]`: shortest chain between defects `i` and `j`.
    pub costs: Vec<Vec<u32>>,
    /// Shortest chain from each defect to any lattice boundary.
    pub boundary_costs: Vec<u32>,
    paths: Vec<Vec<Vec<usize>>>,
    boundary_paths: Vec<Vec<usize>>,
}

/// Which Pauli half the chains of a matching flip.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ChainKind {
    X,
    Z,
}

/// Check adjacency of one error type: `X` chains are detected by Z-type
/// checks, `Z` chains by X-type checks.
struct ChainGraph {
    /// `edges[c]`: (neighbor check, crossing qubit).
    edges: Vec<Vec<(usize, usize)>>,
    /// (check, qubit) pairs where a chain may end on the boundary.
    boundary: Vec<(usize, usize)>,
    /// Global row offset of this type's checks in `h_c`.
    row0: usize,
    count: usize,
}

impl ChainGraph {
    fn build(code: &StabilizerCode, kind: ChainKind) -> ChainGraph {
        let (row0, count, half) = match kind {
            ChainKind::X => (code.num_x_stabs(), code.stab_coords_z.len(), code.n),
            ChainKind::Z => (0, code.num_x_stabs(), 0),
        };
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); code.n];
        for c in 0..count {
            for q in 0..code.n {
                if code.h_c.get(row0 + c, half + q) {
                    adj[q].push(c);
                }
            }
        }
        let mut edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); count];
        let mut boundary = Vec::new();
        for (q, checks) in adj.iter().enumerate() {
            match checks.as_slice() {
                [a, b] => {
                    edges[*a].push((*b, q));
                    edges[*b].push((*a, q));
                }
                [a] => boundary.push((*a, q)),
                [] => {}
                _ => panic!("qubit {q} touches {} checks of one type", checks.len()),
            }
        }
        ChainGraph { edges, boundary, row0, count }
    }

    /// BFS distances and predecessor edges from one check.
    fn bfs(&self, src: usize) -> (Vec<u32>, Vec<(usize, usize)>) {
        let mut dist = vec![u32::MAX; self.count];
        let mut prev = vec![(usize::MAX, usize::MAX); self.count];
        let mut queue = std::collections::VecDeque::new();
        dist[src] = 0;
        queue.push_back(src);
        while let Some(c) = queue.pop_front() {
            for &(next, q) in &self.edges[c] {
                if dist[next] == u32::MAX {
                    dist[next] = dist[c] + 1;
                    prev[next] = (c, q);
                    queue.push_back(next);
                }
            }
        }
        (dist, prev)
    }

    fn path(src: usize, dst: usize, prev: &[(usize, usize)]) -> Vec<usize> {
        let mut qubits = Vec::new();
        let mut at = dst;
        while at != src {
            let (back, q) = prev[at];
            qubits.push(q);
            at = back;
        }
        qubits
    }

    fn defect_graph(&self, code: &StabilizerCode, s: &BitVec) -> DefectGraph {
        let coords = match self.row0 {
            0 => &code.stab_coords_x,
            _ => &code.stab_coords_z,
        };
        let defects: Vec<usize> = (0..self.count).filter(|c| s.get(self.row0 + c)).collect();
        let positions = defects.iter().map(|&c| coords[c]).collect();
        let mut costs = vec![vec![0u32; defects.len()]; defects.len()];
        let mut paths = vec![vec![Vec::new(); defects.len()]; defects.len()];
        let mut boundary_costs = vec![u32::MAX; defects.len()];
        let mut boundary_paths = vec![Vec::new(); defects.len()];
        for (i, &di) in defects.iter().enumerate() {
            let (dist, prev) = self.bfs(di);
            for (j, &dj) in defects.iter().enumerate() {
                costs[i][j] = dist[dj];
                if i != j {
                    paths[i][j] = ChainGraph::path(di, dj, &prev);
                }
            }
            for &(c, q) in &self.boundary {
                if dist[c] != u32::MAX && dist[c] + 1 < boundary_costs[i] {
                    boundary_costs[i] = dist[c] + 1;
                    let mut p = ChainGraph::path(di, c, &prev);
                    p.push(q);
                    boundary_paths[i] = p;
                }
            }
        }
        DefectGraph { defects, positions, costs, boundary_costs, paths, boundary_paths }
    }
}

/// Minimum-cost resolution of all defects: each pairs with another defect
/// or exits through its boundary option. Exact subset dynamic programming.
/// Returns the total cost and the flipped qubits.
fn match_defects(g: &DefectGraph) -> (u64, Vec<usize>) {
    let m = g.defects.len();
    if m == 0 {
        return (0, Vec::new());
    }
    let full = 1usize << m;
    let mut dp = vec![u32::MAX; full];
    let mut choice = vec![(usize::MAX, usize::MAX); full];
    dp[0] = 0;
    for set in 1..full {
        let i = set.trailing_zeros() as usize;
        let rest = set & !(1 << i);
        let mut best = dp[rest].saturating_add(g.boundary_costs[i]);
        let mut pick = (i, usize::MAX);
        let mut others = rest;
        while others != 0 {
            let j = others.trailing_zeros() as usize;
            others &= others - 1;
            let c = dp[rest & !(1 << j)].saturating_add(g.costs[i][j]);
            if c < best {
                best = c;
                pick = (i, j);
            }
        }
        dp[set] = best;
        choice[set] = pick;
    }
    let mut qubits = Vec::new();
    let mut set = full - 1;
    while set != 0 {
        let (i, j) = choice[set];
        if j == usize::MAX {
            qubits.extend_from_slice(&g.boundary_paths[i]);
            set &= !(1 << i);
        } else {
            qubits.extend_from_slice(&g.paths[i][j]);
            set &= !(1 << i | 1 << j);
        }
    }
    (u64::from(dp[full - 1]), qubits)
}

/// Matching-based decoding for surface codes: X and Z syndromes are decoded
/// independently, each as an exact minimum-weight matching of its defects.
pub fn mwpm_decode(code: &StabilizerCode, s: &BitVec) -> Result<BitVec, BaselineError> {
    let (recovery, _) = mwpm_decode_with_cost(code, s)?;
    Ok(recovery)
}

/// Like [`mwpm_decode`], also reporting the matching cost per error type.
pub fn mwpm_decode_with_cost(
    code: &StabilizerCode,
    s: &BitVec,
) -> Result<(BitVec, [u64; 2]), BaselineError> {
    assert!(code.family.is_surface(), "matching decoder requires a surface code");
    assert_eq!(s.len(), code.n - code.k, "syndrome length mismatch");
    let mut recovery = BitVec::zeros(2 * code.n);
    let mut costs = [0u64; 2];
    for (slot, kind) in [ChainKind::X, ChainKind::Z].into_iter().enumerate() {
        let graph = ChainGraph::build(code, kind);
        let defect_graph = graph.defect_graph(code, s);
        if defect_graph.defects.len() > MATCHING_CAP {
            return Err(BaselineError::TooManyDefects {
                found: defect_graph.defects.len(),
                cap: MATCHING_CAP,
            });
        }
        let (cost, qubits) = match_defects(&defect_graph);
        costs[slot] = cost;
        let offset = match kind {
            ChainKind::X => 0,
            ChainKind::Z => code.n,
        };
        for q in qubits {
            let cur = recovery.get(offset + q);
            recovery.set(offset + q, !cur);
        }
    }
    Ok((recovery, costs))
}

/// Sampled failure rate of a baseline decoder, trials derived from
/// `(seed, index)` as in the prediction pipeline.
pub fn baseline_error_rate<F>(
    code: &StabilizerCode,
    model: &NoiseModel,
    trials: u64,
    seed: u64,
    decode: F,
) -> Result<RateEstimate, BaselineError>
where
    F: Fn(&BitVec) -> Result<BitVec, BaselineError> + Sync,
{
    assert!(trials >= 1, "need at least one trial");
    let failures = (0..trials)
        .into_par_iter()
        .map(|i| {
            let e = model.sample_error(code.n, seed, i);
            let s = code.syndrome(&e);
            let r = decode(&s)?;
            Ok(u64::from(!is_success(code, &e, &r)))
        })
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(wilson_interval(failures, trials))
}
