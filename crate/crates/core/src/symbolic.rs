//! Memory-one subshifts of finite type.
//!
//! A shift is given by a q×q zero-one adjacency matrix; a [`Word`] is a finite
//! vertex path `x₀ x₁ … xₙ` in that graph and names the cylinder
//! `[x₀, …, xₙ]`. Higher-memory shifts must be block-coded to memory one
//! before they are handed to this crate.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default cap on the number of words an enumeration may produce.
pub const DEFAULT_WORD_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Word(pub Vec<usize>);

impl Word {
    pub fn new(symbols: Vec<usize>) -> Self {
        Word(symbols)
    }

    pub fn symbols(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn first(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn last(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Consecutive pairs `(xᵢ, xᵢ₊₁)`, i.e. the edges the word traverses.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }

    /// Number of edges (the length `n` of the cocycle product along the word).
    pub fn edge_count(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    /// Sub-word spanning edges `[start, end)`, i.e. symbols `start..=end`.
    pub fn edge_window(&self, start: usize, end: usize) -> Word {
        Word(self.0[start..=end].to_vec())
    }
}

impl From<Vec<usize>> for Word {
    fn from(v: Vec<usize>) -> Self {
        Word(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrimitivityReport {
    pub primitive: bool,
    /// Least `k` with `P^k > 0` entrywise.
    pub exponent: Option<usize>,
}

/// Boolean matrix product on row-major q×q storage.
fn bool_mul(a: &[bool], b: &[bool], q: usize) -> Vec<bool> {
    let mut out = vec![false; q * q];
    for i in 0..q {
        for k in 0..q {
            if a[i * q + k] {
                for j in 0..q {
                    out[i * q + j] |= b[k * q + j];
                }
            }
        }
    }
    out
}

fn check_adjacency(adjacency: &[Vec<u8>]) -> Result<usize> {
    let q = adjacency.len();
    if q == 0 {
        return Err(Error::InvalidShift("empty adjacency matrix".into()));
    }
    for (i, row) in adjacency.iter().enumerate() {
        if row.len() != q {
            return Err(Error::InvalidShift(format!(
                "adjacency is not square: row {i} has {} entries, expected {q}",
                row.len()
            )));
        }
        if let Some(&bad) = row.iter().find(|&&v| v > 1) {
            return Err(Error::InvalidShift(format!("entry {bad} in row {i} is not 0 or 1")));
        }
        if row.iter().all(|&v| v == 0) {
            return Err(Error::InvalidShift(format!("row {i} is all zero")));
        }
    }
    for j in 0..q {
        if adjacency.iter().all(|row| row[j] == 0) {
            return Err(Error::InvalidShift(format!("column {j} is all zero")));
        }
    }
    Ok(q)
}

/// Primitivity check with the Wielandt bound `(q-1)^2 + 1` as search cutoff.
pub fn validate_shift(adjacency: &[Vec<u8>]) -> Result<PrimitivityReport> {
    let q = check_adjacency(adjacency)?;
    let base: Vec<bool> = adjacency.iter().flatten().map(|&v| v == 1).collect();
    let bound = (q - 1) * (q - 1) + 1;
    let mut power = base.clone();
    for k in 1..=bound {
        if power.iter().all(|&v| v) {
            return Ok(PrimitivityReport { primitive: true, exponent: Some(k) });
        }
        power = bool_mul(&power, &base, q);
    }
    Ok(PrimitivityReport { primitive: false, exponent: None })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSpace {
    q: usize,
    adjacency: Vec<Vec<u8>>,
    exponent: usize,
}

impl ShiftSpace {
    /// Builds a shift from a primitive zero-one adjacency matrix.
    pub fn new(adjacency: Vec<Vec<u8>>) -> Result<Self> {
        let report = validate_shift(&adjacency)?;
        match report.exponent {
            Some(exponent) if report.primitive => Ok(ShiftSpace { q: adjacency.len(), adjacency, exponent }),
            _ => Err(Error::InvalidShift("adjacency matrix is not primitive".into())),
        }
    }

    /// Full shift on `q` symbols.
    pub fn full(q: usize) -> Result<Self> {
        Self::new(vec![vec![1; q]; q])
    }

    /// The golden-mean shift: `11` is forbidden.
    pub fn golden_mean() -> Self {
        Self::new(vec![vec![1, 1], vec![1, 0]]).expect("golden-mean adjacency is primitive")
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn adjacency(&self) -> &[Vec<u8>] {
        &self.adjacency
    }

    pub fn primitivity_exponent(&self) -> usize {
        self.exponent
    }

    pub fn allows(&self, a: usize, b: usize) -> bool {
        a < self.q && b < self.q && self.adjacency[a][b] == 1
    }

    /// Allowed edges in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.q).flat_map(move |a| (0..self.q).filter(move |&b| self.adjacency[a][b] == 1).map(move |b| (a, b)))
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().flatten().filter(|&&v| v == 1).count()
    }

    fn check_symbols(&self, word: &Word) -> Result<()> {
        match word.symbols().iter().find(|&&s| s >= self.q) {
            Some(&symbol) => Err(Error::SymbolOutOfRange { symbol, q: self.q }),
            None => Ok(()),
        }
    }

    pub fn is_admissible(&self, word: &Word) -> Result<bool> {
        self.check_symbols(word)?;
        Ok(word.edges().all(|(a, b)| self.adjacency[a][b] == 1))
    }

    /// Like [`is_admissible`](Self::is_admissible) but reports the first forbidden edge.
    pub fn check_admissible(&self, word: &Word) -> Result<()> {
        self.check_symbols(word)?;
        match word.edges().find(|&(a, b)| self.adjacency[a][b] == 0) {
            Some((from, to)) => Err(Error::Inadmissible { from, to }),
            None => Ok(()),
        }
    }

    /// Number of admissible words of length `n`: the entry sum of `P^(n-1)`.
    pub fn word_count(&self, n: usize) -> u128 {
        if n == 0 {
            return 1;
        }
        let mut counts = vec![1u128; self.q];
        for _ in 1..n {
            let mut next = vec![0u128; self.q];
            for (a, &c) in counts.iter().enumerate() {
                for b in 0..self.q {
                    if self.adjacency[a][b] == 1 {
                        next[b] = next[b].saturating_add(c);
                    }
                }
            }
            counts = next;
        }
        counts.into_iter().fold(0u128, u128::saturating_add)
    }

    /// All admissible words of length `n` in lexicographic order.
    pub fn enumerate_words(&self, n: usize, cap: usize) -> Result<Vec<Word>> {
        if n == 0 {
            return Err(Error::InvalidArgument("word length must be at least 1".into()));
        }
        let count = self.word_count(n);
        if count > cap as u128 {
            return Err(Error::EnumerationCap { count, cap });
        }
        let mut out = Vec::with_capacity(count as usize);
        let mut stack = Vec::with_capacity(n);
        for s in 0..self.q {
            stack.push(s);
            self.extend_words(&mut stack, n, &mut out);
            stack.pop();
        }
        Ok(out)
    }

    fn extend_words(&self, stack: &mut Vec<usize>, n: usize, out: &mut Vec<Word>) {
        if stack.len() == n {
            out.push(Word(stack.clone()));
            return;
        }
        let last = *stack.last().expect("stack is non-empty");
        for b in 0..self.q {
            if self.adjacency[last][b] == 1 {
                stack.push(b);
                self.extend_words(stack, n, out);
                stack.pop();
            }
        }
    }

    /// Closed loops of length at most `max_length`, one representative per
    /// rotation class. Representatives are the least rotation and loops that
    /// are powers of a shorter loop are omitted, so the result lists the
    /// primitive periodic orbits. Ordered by length, then lexicographically.
    pub fn enumerate_cycles(&self, max_length: usize, cap: usize) -> Result<Vec<Word>> {
        if max_length == 0 {
            return Err(Error::InvalidArgument("cycle length bound must be at least 1".into()));
        }
        let mut out = Vec::new();
        for len in 1..=max_length {
            for w in self.enumerate_words(len, cap)? {
                let (first, last) = (w.0[0], w.0[len - 1]);
                if self.adjacency[last][first] == 1 && is_lyndon(&w.0) {
                    out.push(w);
                    if out.len() > cap {
                        return Err(Error::EnumerationCap { count: out.len() as u128, cap });
                    }
                }
            }
        }
        Ok(out)
    }
}

/// True iff `w` is strictly smaller than each of its proper rotations, i.e.
/// it is the canonical representative of an aperiodic necklace.
fn is_lyndon(w: &[usize]) -> bool {
    let n = w.len();
    (1..n).all(|r| {
        let rotated = w[r..].iter().chain(&w[..r]);
        w.iter().lt(rotated)
    })
}
