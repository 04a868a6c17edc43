//! Dense linear algebra over GF(2).
//!
//! Two flavours: [`XorBasis`] for short vectors packed in a `u32` (effects,
//! matrix rows) and [`BitMatrix`] for the wide systems built by the
//! collineation search.

/// Incrementally built echelon basis of a subspace of GF(2)^p, p <= 32.
///
/// Each stored vector has a distinct leading bit, so `v.min(v ^ b)` over
/// the stored rows reduces `v` modulo the span.
#[derive(Debug, Clone, Default)]
pub struct XorBasis {
    rows: Vec<u32>,
}

impl XorBasis {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn reduce(&self, mut v: u32) -> u32 {
        for &b in &self.rows {
            v = v.min(v ^ b);
        }
        v
    }

    /// Adds `v`; returns false when it was already in the span.
    pub fn insert(&mut self, v: u32) -> bool {
        let r = self.reduce(v);
        if r == 0 {
            return false;
        }
        let pos = self
            .rows
            .iter()
            .position(|&b| b < r)
            .unwrap_or(self.rows.len());
        self.rows.insert(pos, r);
        true
    }

    pub fn contains(&self, v: u32) -> bool {
        self.reduce(v) == 0
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }
}

/// GF(2) rank of a list of packed vectors.
pub fn rank_of(vectors: impl IntoIterator<Item = u32>) -> usize {
    let mut basis = XorBasis::new();
    for v in vectors {
        basis.insert(v);
    }
    basis.rank()
}

/// Row-major bit matrix with rows packed into `u64` words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMatrix {
    rows: usize,
    cols: usize,
    stride: usize,
    words: Vec<u64>,
}

/// Solution set of a consistent system: `particular` plus any XOR
/// combination of `nullspace`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GfSolution {
    pub particular: Vec<bool>,
    pub nullspace: Vec<Vec<bool>>,
}

impl GfSolution {
    /// Solution obtained by setting the free variables to the bits of `code`
    /// (bit i selects nullspace vector i). Code 0 is the particular solution.
    pub fn with_free(&self, code: u64) -> Vec<bool> {
        let mut x = self.particular.clone();
        for (i, v) in self.nullspace.iter().enumerate() {
            if i < 64 && code >> i & 1 == 1 {
                for (xj, vj) in x.iter_mut().zip(v) {
                    *xj ^= *vj;
                }
            }
        }
        x
    }

    /// Number of free variables.
    pub fn free_count(&self) -> usize {
        self.nullspace.len()
    }
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        let stride = cols.div_ceil(64).max(1);
        Self {
            rows,
            cols,
            stride,
            words: vec![0; rows * stride],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, true);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.words[r * self.stride + c / 64] >> (c % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        let w = &mut self.words[r * self.stride + c / 64];
        let mask = 1u64 << (c % 64);
        if v {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    fn row_words(&self, r: usize) -> &[u64] {
        &self.words[r * self.stride..(r + 1) * self.stride]
    }

    fn xor_row_into(&mut self, src: usize, dst: usize) {
        let (s, d) = (src * self.stride, dst * self.stride);
        for k in 0..self.stride {
            let v = self.words[s + k];
            self.words[d + k] ^= v;
        }
    }

    fn swap_rows(&mut self, a: usize, b: usize) {
        if a != b {
            for k in 0..self.stride {
                self.words.swap(a * self.stride + k, b * self.stride + k);
            }
        }
    }

    /// Reduces in place to reduced row echelon form over the first `limit`
    /// columns, returning the pivot columns in row order.
    fn rref(&mut self, limit: usize) -> Vec<usize> {
        let mut pivots = Vec::new();
        let mut row = 0;
        for col in 0..limit {
            if row == self.rows {
                break;
            }
            let Some(pr) = (row..self.rows).find(|&r| self.get(r, col)) else {
                continue;
            };
            self.swap_rows(pr, row);
            for r in 0..self.rows {
                if r != row && self.get(r, col) {
                    self.xor_row_into(row, r);
                }
            }
            pivots.push(col);
            row += 1;
        }
        pivots
    }

    pub fn rank(&self) -> usize {
        let mut m = self.clone();
        m.rref(self.cols).len()
    }

    /// Solves `self * x = rhs` by Gaussian elimination; `None` if inconsistent.
    pub fn solve(&self, rhs: &[bool]) -> Option<GfSolution> {
        assert_eq!(rhs.len(), self.rows, "rhs length must equal row count");
        let n = self.cols;
        let mut aug = BitMatrix::zeros(self.rows, n + 1);
        for (r, &b) in rhs.iter().enumerate() {
            let dst = r * aug.stride;
            aug.words[dst..dst + self.stride].copy_from_slice(self.row_words(r));
            aug.set(r, n, b);
        }
        let pivots = aug.rref(n);
        if (pivots.len()..aug.rows).any(|r| aug.get(r, n)) {
            return None;
        }
        let mut particular = vec![false; n];
        for (r, &c) in pivots.iter().enumerate() {
            particular[c] = aug.get(r, n);
        }
        let mut is_pivot = vec![false; n];
        for &c in &pivots {
            is_pivot[c] = true;
        }
        let nullspace = (0..n)
            .filter(|&f| !is_pivot[f])
            .map(|f| {
                let mut v = vec![false; n];
                v[f] = true;
                for (r, &c) in pivots.iter().enumerate() {
                    v[c] = aug.get(r, f);
                }
                v
            })
            .collect();
        Some(GfSolution {
            particular,
            nullspace,
        })
    }

    /// `self * x` for a bit vector `x`.
    pub fn mul_vec(&self, x: &[bool]) -> Vec<bool> {
        (0..self.rows)
            .map(|r| (0..self.cols).filter(|&c| x[c] && self.get(r, c)).count() % 2 == 1)
            .collect()
    }
}
