//! Stabilizer tableau over labeled qubits with sign tracking, used as the
//! correctness oracle for every graph rewrite and compiled circuit.
//!
//! A row is a Hermitian Pauli string `i^k * P_0 ... P_{n-1}` where qubit `q`
//! holds `(x, z)` with `(1,0) = X`, `(1,1) = Y`, `(0,1) = Z`.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::error::{Error, Result};
use crate::graphstate::{Basis, GraphState, VertexId};

/// Dense bit vector backed by 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitRow {
    words: Vec<u64>,
}

impl BitRow {
    pub fn zeros(n: usize) -> Self {
        Self { words: vec![0; n.div_ceil(64)] }
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, b: bool) {
        let mask = 1u64 << (i % 64);
        if b {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        self.words[i / 64] ^= 1u64 << (i % 64);
    }

    pub fn xor_with(&mut self, other: &BitRow) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> u32 {
        self.words.iter().map(|w| w.count_ones()).sum()
    }

    fn remove_bit(&mut self, idx: usize, len: usize) {
        let mut out = BitRow::zeros(len - 1);
        let mut j = 0;
        for i in 0..len {
            if i != idx {
                out.set(j, self.get(i));
                j += 1;
            }
        }
        *self = out;
    }
}

/// One stabilizer generator: `i^phase` times the Pauli string `(x, z)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliRow {
    pub x: BitRow,
    pub z: BitRow,
    pub phase: u8,
}

impl PauliRow {
    pub fn identity(n: usize) -> Self {
        Self { x: BitRow::zeros(n), z: BitRow::zeros(n), phase: 0 }
    }

    /// True when this row equals `-1` times its Pauli string.
    pub fn negative(&self) -> bool {
        self.phase % 4 == 2
    }

    pub fn is_identity(&self) -> bool {
        self.x.is_zero() && self.z.is_zero()
    }

    /// Replaces `self` by the product `self * other`.
    pub fn mul_assign(&mut self, other: &PauliRow) {
        let mut pos = 0u32;
        let mut neg = 0u32;
        for w in 0..self.x.words.len() {
            let (x1, z1) = (self.x.words[w], self.z.words[w]);
            let (x2, z2) = (other.x.words[w], other.z.words[w]);
            let p = (x1 & z1 & z2 & !x2) | (x1 & !z1 & z2 & x2) | (!x1 & z1 & x2 & !z2);
            let m = (x1 & z1 & x2 & !z2) | (x1 & !z1 & z2 & !x2) | (!x1 & z1 & x2 & z2);
            pos += p.count_ones();
            neg += m.count_ones();
        }
        let k = self.phase as i64 + other.phase as i64 + pos as i64 - neg as i64;
        self.phase = k.rem_euclid(4) as u8;
        self.x.xor_with(&other.x);
        self.z.xor_with(&other.z);
    }

    /// Symplectic inner product: true iff the two strings anticommute.
    pub fn anticommutes(&self, other: &PauliRow) -> bool {
        let mut acc = 0u32;
        for w in 0..self.x.words.len() {
            acc += ((self.x.words[w] & other.z.words[w]) ^ (self.z.words[w] & other.x.words[w]))
                .count_ones();
        }
        acc % 2 == 1
    }

    fn single(n: usize, q: usize, x: bool, z: bool, negative: bool) -> Self {
        let mut r = Self::identity(n);
        r.x.set(q, x);
        r.z.set(q, z);
        r.phase = if negative { 2 } else { 0 };
        r
    }

    /// Human-readable form such as `-XZI`.
    pub fn render(&self, n: usize) -> String {
        let mut s = String::with_capacity(n + 1);
        s.push(if self.negative() { '-' } else { '+' });
        for q in 0..n {
            s.push(match (self.x.get(q), self.z.get(q)) {
                (false, false) => 'I',
                (true, false) => 'X',
                (true, true) => 'Y',
                (false, true) => 'Z',
            });
        }
        s
    }
}

/// Outcome of a Z measurement on the tableau.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasureOutcome {
    /// `true` for eigenvalue -1.
    pub bit: bool,
    /// `true` when the outcome was fixed by the state.
    pub deterministic: bool,
}

/// Pending Pauli corrections on photon qubits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PauliFrame {
    entries: BTreeMap<VertexId, (bool, bool)>,
}

impl PauliFrame {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_x(&mut self, q: VertexId) {
        let e = self.entries.entry(q).or_insert((false, false));
        e.0 ^= true;
    }

    pub fn add_z(&mut self, q: VertexId) {
        let e = self.entries.entry(q).or_insert((false, false));
        e.1 ^= true;
    }

    /// `(x, z)` flags for `q`.
    pub fn get(&self, q: VertexId) -> (bool, bool) {
        self.entries.get(&q).copied().unwrap_or((false, false))
    }

    pub fn iter(&self) -> impl Iterator<Item = (VertexId, (bool, bool))> + '_ {
        self.entries.iter().map(|(&q, &f)| (q, f))
    }

    pub fn is_empty(&self) -> bool {
        self.entries.values().all(|&(x, z)| !x && !z)
    }
}

/// Stabilizer tableau of `n` labeled qubits (generators only, no destabilizers).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilizerTableau {
    labels: Vec<VertexId>,
    index: HashMap<VertexId, usize>,
    rows: Vec<PauliRow>,
}

impl StabilizerTableau {
    /// All qubits in `|0>`.
    pub fn zero_state(labels: &[VertexId]) -> Result<Self> {
        let n = labels.len();
        let rows = (0..n).map(|q| PauliRow::single(n, q, false, true, false)).collect();
        Self::from_rows(labels.to_vec(), rows)
    }

    /// Builds a tableau from explicit rows. Fails on duplicate labels.
    pub fn from_rows(labels: Vec<VertexId>, rows: Vec<PauliRow>) -> Result<Self> {
        let mut index = HashMap::new();
        for (i, &l) in labels.iter().enumerate() {
            if index.insert(l, i).is_some() {
                return Err(Error::DuplicateVertex(l));
            }
        }
        Ok(Self { labels, index, rows })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[VertexId] {
        &self.labels
    }

    pub fn rows(&self) -> &[PauliRow] {
        &self.rows
    }

    fn idx(&self, q: VertexId) -> Result<usize> {
        self.index.get(&q).copied().ok_or(Error::VertexNotFound(q))
    }

    pub fn h(&mut self, q: VertexId) -> Result<()> {
        let i = self.idx(q)?;
        for r in &mut self.rows {
            let (x, z) = (r.x.get(i), r.z.get(i));
            if x && z {
                r.phase = (r.phase + 2) % 4;
            }
            r.x.set(i, z);
            r.z.set(i, x);
        }
        Ok(())
    }

    pub fn s(&mut self, q: VertexId) -> Result<()> {
        let i = self.idx(q)?;
        for r in &mut self.rows {
            let (x, z) = (r.x.get(i), r.z.get(i));
            if x && z {
                r.phase = (r.phase + 2) % 4;
            }
            r.z.set(i, z ^ x);
        }
        Ok(())
    }

    pub fn s_dag(&mut self, q: VertexId) -> Result<()> {
        let i = self.idx(q)?;
        for r in &mut self.rows {
            let (x, z) = (r.x.get(i), r.z.get(i));
            if x && !z {
                r.phase = (r.phase + 2) % 4;
            }
            r.z.set(i, z ^ x);
        }
        Ok(())
    }

    pub fn x(&mut self, q: VertexId) -> Result<()> {
        let i = self.idx(q)?;
        for r in &mut self.rows {
            if r.z.get(i) {
                r.phase = (r.phase + 2) % 4;
            }
        }
        Ok(())
    }

    pub fn z(&mut self, q: VertexId) -> Result<()> {
        let i = self.idx(q)?;
        for r in &mut self.rows {
            if r.x.get(i) {
                r.phase = (r.phase + 2) % 4;
            }
        }
        Ok(())
    }

    pub fn cnot(&mut self, c: VertexId, t: VertexId) -> Result<()> {
        let (a, b) = (self.idx(c)?, self.idx(t)?);
        if a == b {
            return Err(Error::SelfLoop(c));
        }
        for r in &mut self.rows {
            let (xa, za, xb, zb) = (r.x.get(a), r.z.get(a), r.x.get(b), r.z.get(b));
            if xa && zb && (xb == za) {
                r.phase = (r.phase + 2) % 4;
            }
            r.x.set(b, xb ^ xa);
            r.z.set(a, za ^ zb);
        }
        Ok(())
    }

    pub fn cz(&mut self, a: VertexId, b: VertexId) -> Result<()> {
        self.h(b)?;
        self.cnot(a, b)?;
        self.h(b)
    }

    /// Z measurement of `q`. A random outcome takes `forced` when given and is
    /// drawn from `rng` otherwise. A forced value that contradicts a
    /// deterministic outcome is reported through the returned outcome, the
    /// state is left consistent with the actual outcome.
    pub fn measure_z<R: Rng + ?Sized>(
        &mut self,
        q: VertexId,
        forced: Option<bool>,
        rng: &mut R,
    ) -> Result<MeasureOutcome> {
        self.measure_z_with(q, || forced.unwrap_or_else(|| rng.random::<bool>()))
    }

    fn measure_z_with(
        &mut self,
        q: VertexId,
        random_bit: impl FnOnce() -> bool,
    ) -> Result<MeasureOutcome> {
        let i = self.idx(q)?;
        let n = self.n();
        let anti: Vec<usize> = (0..n).filter(|&r| self.rows[r].x.get(i)).collect();
        if let Some((&p, rest)) = anti.split_first() {
            let pivot = self.rows[p].clone();
            for &r in rest {
                self.rows[r].mul_assign(&pivot);
            }
            let bit = random_bit();
            self.rows[p] = PauliRow::single(n, i, false, true, bit);
            Ok(MeasureOutcome { bit, deterministic: false })
        } else {
            let target = PauliRow::single(n, i, false, true, false);
            let sign = self.member_sign(&target).expect("Z commutes with every generator");
            Ok(MeasureOutcome { bit: sign, deterministic: true })
        }
    }

    /// Measures `q` in `basis`; see [`StabilizerTableau::measure_z`].
    pub fn measure<R: Rng + ?Sized>(
        &mut self,
        q: VertexId,
        basis: Basis,
        forced: Option<bool>,
        rng: &mut R,
    ) -> Result<MeasureOutcome> {
        match basis {
            Basis::Z => self.measure_z(q, forced, rng),
            Basis::X => {
                self.h(q)?;
                let out = self.measure_z(q, forced, rng)?;
                self.h(q)?;
                Ok(out)
            }
            Basis::Y => {
                self.s_dag(q)?;
                self.h(q)?;
                let out = self.measure_z(q, forced, rng)?;
                self.h(q)?;
                self.s(q)?;
                Ok(out)
            }
        }
    }

    /// Resets `q` to `|0>`.
    pub fn reset(&mut self, q: VertexId) -> Result<()> {
        let out = self.measure_z_with(q, || false)?;
        if out.bit {
            self.x(q)?;
        }
        Ok(())
    }

    /// Row echelon form of the generators (phases tracked). Returns the
    /// reduced rows and their pivot columns, where column `c < n` is `x_c` and
    /// `n + c` is `z_c`.
    fn echelon(&self) -> (Vec<PauliRow>, Vec<usize>) {
        let n = self.n();
        let mut rows = self.rows.clone();
        let mut pivots = Vec::new();
        let mut top = 0;
        for col in 0..2 * n {
            if top == rows.len() {
                break;
            }
            let bit = |r: &PauliRow| if col < n { r.x.get(col) } else { r.z.get(col - n) };
            let Some(p) = (top..rows.len()).find(|&r| bit(&rows[r])) else {
                continue;
            };
            rows.swap(top, p);
            let pivot = rows[top].clone();
            for r in rows.iter_mut().skip(top + 1) {
                if bit(r) {
                    r.mul_assign(&pivot);
                }
            }
            pivots.push(col);
            top += 1;
        }
        rows.truncate(top);
        (rows, pivots)
    }

    fn reduce_with(rows: &[PauliRow], pivots: &[usize], n: usize, target: &PauliRow) -> PauliRow {
        let mut t = target.clone();
        for (row, &col) in rows.iter().zip(pivots) {
            let set = if col < n { t.x.get(col) } else { t.z.get(col - n) };
            if set {
                t.mul_assign(row);
            }
        }
        t
    }

    /// If `+target` or `-target` lies in the stabilizer group, returns
    /// `Some(negative)`, otherwise `None`.
    pub fn member_sign(&self, target: &PauliRow) -> Option<bool> {
        let (rows, pivots) = self.echelon();
        let rem = Self::reduce_with(&rows, &pivots, self.n(), target);
        if rem.is_identity() {
            Some(rem.phase % 4 == 2)
        } else {
            None
        }
    }

    /// Number of independent generators.
    pub fn rank(&self) -> usize {
        self.echelon().0.len()
    }

    /// True when all generators commute pairwise and are independent.
    pub fn is_valid(&self) -> bool {
        let n = self.n();
        if self.rows.len() != n {
            return false;
        }
        for i in 0..n {
            if self.rows[i].phase % 2 == 1 {
                return false;
            }
            for j in i + 1..n {
                if self.rows[i].anticommutes(&self.rows[j]) {
                    return false;
                }
            }
        }
        self.rank() == n
    }

    /// Same qubit labels in the same column order as `other`.
    fn aligned_to(&self, other: &StabilizerTableau) -> Result<StabilizerTableau> {
        if self.n() != other.n() {
            return Err(Error::QubitMismatch);
        }
        let perm: Vec<usize> = other
            .labels
            .iter()
            .map(|l| self.index.get(l).copied().ok_or(Error::QubitMismatch))
            .collect::<Result<_>>()?;
        let n = self.n();
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let mut out = PauliRow::identity(n);
                out.phase = r.phase;
                for (j, &i) in perm.iter().enumerate() {
                    out.x.set(j, r.x.get(i));
                    out.z.set(j, r.z.get(i));
                }
                out
            })
            .collect();
        StabilizerTableau::from_rows(other.labels.clone(), rows)
    }

    /// True iff both tableaus generate the same group, signs included.
    pub fn same_state(&self, other: &StabilizerTableau) -> Result<bool> {
        self.compare(other, true)
    }

    /// True iff both tableaus generate the same group up to signs, i.e. the
    /// states differ at most by a Pauli operator.
    pub fn same_state_up_to_pauli(&self, other: &StabilizerTableau) -> Result<bool> {
        self.compare(other, false)
    }

    fn compare(&self, other: &StabilizerTableau, signed: bool) -> Result<bool> {
        let a = self.aligned_to(other)?;
        let n = other.n();
        let (rows, pivots) = other.echelon();
        if rows.len() != n || a.rank() != n {
            return Ok(false);
        }
        for r in &a.rows {
            let rem = Self::reduce_with(&rows, &pivots, n, r);
            if !rem.is_identity() || (signed && rem.phase % 4 != 0) {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Generators of `self` that are not in the group of `other` (signs
    /// included), rendered as strings in `other`'s column order.
    pub fn diff(&self, other: &StabilizerTableau) -> Result<Vec<String>> {
        let a = self.aligned_to(other)?;
        let n = other.n();
        let (rows, pivots) = other.echelon();
        Ok(a.rows
            .iter()
            .filter(|r| {
                let rem = Self::reduce_with(&rows, &pivots, n, r);
                !rem.is_identity() || rem.phase % 4 != 0
            })
            .map(|r| r.render(n))
            .collect())
    }

    /// Tensor product `self ⊗ other` on disjoint label sets.
    pub fn tensor(&self, other: &StabilizerTableau) -> Result<StabilizerTableau> {
        let (n1, n2) = (self.n(), other.n());
        let n = n1 + n2;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        let mut rows = Vec::with_capacity(n);
        for r in &self.rows {
            let mut out = PauliRow::identity(n);
            out.phase = r.phase;
            for q in 0..n1 {
                out.x.set(q, r.x.get(q));
                out.z.set(q, r.z.get(q));
            }
            rows.push(out);
        }
        for r in &other.rows {
            let mut out = PauliRow::identity(n);
            out.phase = r.phase;
            for q in 0..n2 {
                out.x.set(n1 + q, r.x.get(q));
                out.z.set(n1 + q, r.z.get(q));
            }
            rows.push(out);
        }
        StabilizerTableau::from_rows(labels, rows)
    }

    /// Removes qubit `q`, which must be in a pure product state with the rest.
    pub fn discard(&mut self, q: VertexId) -> Result<()> {
        let i = self.idx(q)?;
        let n = self.n();
        // Echelon with the columns of q last: a row supported only on q then
        // sits at the bottom if q factors out.
        let order: Vec<usize> = (0..n)
            .filter(|&c| c != i)
            .flat_map(|c| [c, n + c])
            .chain([i, n + i])
            .collect();
        let mut rows = self.rows.clone();
        let mut top = 0;
        for &col in &order {
            let bit = |r: &PauliRow| if col < n { r.x.get(col) } else { r.z.get(col - n) };
            let Some(p) = (top..rows.len()).find(|&r| bit(&rows[r])) else {
                continue;
            };
            rows.swap(top, p);
            let pivot = rows[top].clone();
            for (k, r) in rows.iter_mut().enumerate() {
                if k != top && bit(r) {
                    r.mul_assign(&pivot);
                }
            }
            top += 1;
        }
        let local = |r: &PauliRow| {
            (0..n).all(|c| c == i || (!r.x.get(c) && !r.z.get(c))) && !r.is_identity()
        };
        let Some(k) = rows.iter().position(local) else {
            return Err(Error::NotSeparable(q));
        };
        let single = rows.remove(k);
        for r in rows.iter_mut() {
            if r.x.get(i) || r.z.get(i) {
                if r.x.get(i) == single.x.get(i) && r.z.get(i) == single.z.get(i) {
                    r.mul_assign(&single);
                } else {
                    return Err(Error::NotSeparable(q));
                }
            }
        }
        for r in rows.iter_mut() {
            r.x.remove_bit(i, n);
            r.z.remove_bit(i, n);
        }
        let mut labels = self.labels.clone();
        labels.remove(i);
        *self = StabilizerTableau::from_rows(labels, rows)?;
        Ok(())
    }

    /// Applies the Pauli corrections of `frame` to the qubits it names.
    pub fn apply_frame(&mut self, frame: &PauliFrame) -> Result<()> {
        for (q, (x, z)) in frame.iter() {
            if x {
                self.x(q)?;
            }
            if z {
                self.z(q)?;
            }
        }
        Ok(())
    }
}

/// Tableau of the graph state `g`: row `j` is `X_j prod_{k in N(j)} Z_k`.
pub fn graph_to_tableau(g: &GraphState) -> StabilizerTableau {
    let labels: Vec<VertexId> = g.vertices().collect();
    let n = labels.len();
    let pos: HashMap<VertexId, usize> = labels.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let rows = labels
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let mut r = PauliRow::identity(n);
            r.x.set(i, true);
            for u in g.neighbors(v).expect("vertex exists") {
                r.z.set(pos[u], true);
            }
            r
        })
        .collect();
    StabilizerTableau::from_rows(labels, rows).expect("graph labels are unique")
}

/// True iff `t`, after applying the frame's corrections, stabilizes exactly
/// the graph state of `g` (signs included).
pub fn tableau_equals_graph(
    t: &StabilizerTableau,
    g: &GraphState,
    frame: &PauliFrame,
) -> Result<bool> {
    let mut t = t.clone();
    t.apply_frame(frame)?;
    t.same_state(&graph_to_tableau(g))
}

/// Decides whether some local Clifford acting only on `free` maps the state
/// of `b` to the state of `a`, up to a Pauli. Solves the linear system for
/// per-qubit binary symplectic 2x2 blocks and enumerates its solution space.
/// Fails with [`Error::SearchTooLarge`] when the space exceeds `2^max_dim`.
pub fn local_clifford_equivalent(
    a: &StabilizerTableau,
    b: &StabilizerTableau,
    free: &[VertexId],
    max_dim: u32,
) -> Result<bool> {
    let b = b.aligned_to(a)?;
    let n = a.n();
    let fidx: Vec<usize> = free.iter().map(|&q| a.idx(q)).collect::<Result<_>>()?;
    let mut is_free = vec![usize::MAX; n];
    for (k, &q) in fidx.iter().enumerate() {
        is_free[q] = k;
    }
    let nu = 4 * fidx.len();
    // Unknown layout per free qubit k: [a, b, c, d] at 4k..4k+4, with
    // x' = a x + b z and z' = c x + d z. Bit nu holds the constant term.
    let mut basis: Vec<(usize, BitRow)> = Vec::new();
    let insert = |basis: &mut Vec<(usize, BitRow)>, mut row: BitRow| -> bool {
        for (p, r) in basis.iter() {
            if row.get(*p) {
                row.xor_with(r);
            }
        }
        match (0..nu).find(|&i| row.get(i)) {
            Some(p) => {
                for (_, r) in basis.iter_mut() {
                    if r.get(p) {
                        r.xor_with(&row);
                    }
                }
                basis.push((p, row));
                true
            }
            None => !row.get(nu),
        }
    };
    for g in &b.rows {
        for r in &a.rows {
            let mut eq = BitRow::zeros(nu + 1);
            for q in 0..n {
                let (rx, rz, gx, gz) = (r.x.get(q), r.z.get(q), g.x.get(q), g.z.get(q));
                let k = is_free[q];
                if k == usize::MAX {
                    if (rx && gz) ^ (rz && gx) {
                        eq.flip(nu);
                    }
                } else {
                    if rz && gx {
                        eq.flip(4 * k);
                    }
                    if rz && gz {
                        eq.flip(4 * k + 1);
                    }
                    if rx && gx {
                        eq.flip(4 * k + 2);
                    }
                    if rx && gz {
                        eq.flip(4 * k + 3);
                    }
                }
            }
            if !insert(&mut basis, eq) {
                return Ok(false);
            }
        }
    }
    let pivots: Vec<usize> = basis.iter().map(|(p, _)| *p).collect();
    let freevars: Vec<usize> = (0..nu).filter(|i| !pivots.contains(i)).collect();
    if freevars.len() as u32 > max_dim {
        return Err(Error::SearchTooLarge(format!(
            "solution space has dimension {}",
            freevars.len()
        )));
    }
    let mut sol = vec![false; nu];
    for mask in 0u64..(1u64 << freevars.len()) {
        for (j, &v) in freevars.iter().enumerate() {
            sol[v] = (mask >> j) & 1 == 1;
        }
        for (p, r) in &basis {
            let mut val = r.get(nu);
            for &v in &freevars {
                if r.get(v) && sol[v] {
                    val ^= true;
                }
            }
            sol[*p] = val;
        }
        let invertible = (0..fidx.len()).all(|k| {
            let (a, b, c, d) = (sol[4 * k], sol[4 * k + 1], sol[4 * k + 2], sol[4 * k + 3]);
            (a && d) ^ (b && c)
        });
        if invertible {
            return Ok(true);
        }
    }
    Ok(false)
}
