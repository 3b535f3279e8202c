//! Compressed sparse column storage and the direct solver shared by the
//! Newton power flow and the interior-point KKT systems.

mod lu;
mod ordering;

pub use lu::{SingularMatrix, SparseLu};
pub use ordering::{min_degree_order, paired_min_degree_order, weighted_matching};

/// Coordinate-format accumulator. Duplicate entries are summed on compression.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub vals: Vec<f64>,
}

impl Triplets {
    pub fn with_capacity(cap: usize) -> Self {
        Self { rows: Vec::with_capacity(cap), cols: Vec::with_capacity(cap), vals: Vec::with_capacity(cap) }
    }

    #[inline]
    pub fn push(&mut self, row: usize, col: usize, val: f64) {
        self.rows.push(row);
        self.cols.push(col);
        self.vals.push(val);
    }

    pub fn len(&self) -> usize {
        self.vals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vals.is_empty()
    }

    pub fn clear(&mut self) {
        self.rows.clear();
        self.cols.clear();
        self.vals.clear();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

/// A compressed pattern plus the scatter map from triplet slots to value slots.
///
/// Assembly loops that emit triplets in a fixed order (the Newton Jacobian,
/// the KKT matrix) build this once and then refill values with [`CscPattern::fill`].
#[derive(Debug, Clone)]
pub struct CscPattern {
    pub matrix: CscMatrix,
    slot: Vec<usize>,
}

impl CscPattern {
    pub fn new(nrows: usize, ncols: usize, rows: &[usize], cols: &[usize]) -> Self {
        assert_eq!(rows.len(), cols.len());
        let mut count = vec![0usize; ncols];
        for &c in cols {
            count[c] += 1;
        }
        // bucket by column, then sort rows within each column and merge duplicates
        let mut start = vec![0usize; ncols + 1];
        for c in 0..ncols {
            start[c + 1] = start[c] + count[c];
        }
        let mut order = vec![0usize; rows.len()];
        let mut next = start.clone();
        for (t, &c) in cols.iter().enumerate() {
            order[next[c]] = t;
            next[c] += 1;
        }
        let mut slot = vec![0usize; rows.len()];
        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::with_capacity(rows.len());
        col_ptr.push(0);
        for c in 0..ncols {
            let bucket = &mut order[start[c]..start[c + 1]];
            bucket.sort_unstable_by_key(|&t| rows[t]);
            let mut last = usize::MAX;
            for &t in bucket.iter() {
                let r = rows[t];
                assert!(r < nrows, "row {r} out of range {nrows}");
                if r != last {
                    row_idx.push(r);
                    last = r;
                }
                slot[t] = row_idx.len() - 1;
            }
            col_ptr.push(row_idx.len());
        }
        let nnz = row_idx.len();
        Self { matrix: CscMatrix { nrows, ncols, col_ptr, row_idx, values: vec![0.0; nnz] }, slot }
    }

    pub fn from_triplets(nrows: usize, ncols: usize, t: &Triplets) -> Self {
        let mut p = Self::new(nrows, ncols, &t.rows, &t.cols);
        p.fill(&t.vals);
        p
    }

    /// Overwrite the matrix values from triplet values in the original slot order.
    pub fn fill(&mut self, vals: &[f64]) {
        assert_eq!(vals.len(), self.slot.len());
        self.matrix.values.iter_mut().for_each(|v| *v = 0.0);
        for (&s, &v) in self.slot.iter().zip(vals) {
            self.matrix.values[s] += v;
        }
    }
}

impl CscMatrix {
    pub fn from_triplets(nrows: usize, ncols: usize, t: &Triplets) -> Self {
        CscPattern::from_triplets(nrows, ncols, t).matrix
    }

    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        assert_eq!(y.len(), self.nrows);
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.ncols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                y[self.row_idx[p]] += self.values[p] * xj;
            }
        }
    }

    /// y = Aᵀ x
    pub fn mul_transpose_vec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.nrows);
        assert_eq!(y.len(), self.ncols);
        for j in 0..self.ncols {
            let mut acc = 0.0;
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                acc += self.values[p] * x[self.row_idx[p]];
            }
            y[j] = acc;
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let range = self.col_ptr[col]..self.col_ptr[col + 1];
        match self.row_idx[range.clone()].binary_search(&row) {
            Ok(k) => self.values[range.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.ncols]; self.nrows];
        for j in 0..self.ncols {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                d[self.row_idx[p]][j] += self.values[p];
            }
        }
        d
    }

    /// Pattern of A + Aᵀ without the diagonal, as sorted adjacency lists.
    pub fn symmetric_adjacency(&self) -> Vec<Vec<usize>> {
        assert_eq!(self.nrows, self.ncols);
        let n = self.ncols;
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for j in 0..n {
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[p];
                if i != j {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}
