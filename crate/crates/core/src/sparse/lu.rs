use thiserror::Error;

use super::CscMatrix;

#[derive(Debug, Clone, Copy, Error, PartialEq)]
#[error("matrix is structurally or numerically singular at column {column}")]
pub struct SingularMatrix {
    /// Original column index of A at which no usable pivot was found.
    pub column: usize,
}

/// Left-looking sparse LU (Gilbert–Peierls) with threshold partial pivoting.
///
/// Factors `P A Q = L U` where `Q` is a caller-supplied fill-reducing column
/// order and `P` is chosen during elimination. The diagonal entry is kept as
/// pivot whenever it is within `pivot_tol` of the column maximum, so a
/// symmetric ordering keeps most of its fill advantage.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    l: CscMatrix,
    u: CscMatrix,
    /// pinv[row] = pivot step of that row
    pinv: Vec<usize>,
    /// q[step] = original column
    q: Vec<usize>,
}

const UNSET: usize = usize::MAX;

impl SparseLu {
    pub fn factor(a: &CscMatrix, col_order: &[usize], pivot_tol: f64) -> Result<Self, SingularMatrix> {
        Self::factor_with_pivots(a, col_order, col_order, pivot_tol)
    }

    /// As [`SparseLu::factor`], but step `k` prefers row `pivot_rows[k]`
    /// instead of the diagonal. Pairing a zero-diagonal column with a row
    /// of its partner column reproduces 2×2 block pivots in LU form.
    pub fn factor_with_pivots(a: &CscMatrix, col_order: &[usize], pivot_rows: &[usize], pivot_tol: f64) -> Result<Self, SingularMatrix> {
        let n = a.ncols;
        assert_eq!(pivot_rows.len(), n);
        assert_eq!(a.nrows, n, "LU needs a square matrix");
        assert_eq!(col_order.len(), n);

        let guess = 4 * a.nnz() + n;
        let mut lp = Vec::with_capacity(n + 1);
        let mut li: Vec<usize> = Vec::with_capacity(guess);
        let mut lx: Vec<f64> = Vec::with_capacity(guess);
        let mut up = Vec::with_capacity(n + 1);
        let mut ui: Vec<usize> = Vec::with_capacity(guess);
        let mut ux: Vec<f64> = Vec::with_capacity(guess);

        let mut pinv = vec![UNSET; n];
        let mut x = vec![0.0; n];
        let mut xi = vec![0usize; n];
        let mut stack = vec![0usize; n];
        let mut pstack = vec![0usize; n];
        let mut marked = vec![false; n];

        for (k, &col) in col_order.iter().enumerate() {
            lp.push(li.len());
            up.push(ui.len());

            // sparse triangular solve x = L \ A(:, col) over the reach of A(:, col)
            let mut top = n;
            for p in a.col_ptr[col]..a.col_ptr[col + 1] {
                let r = a.row_idx[p];
                if !marked[r] {
                    top = dfs(r, &lp, &li, &pinv, &mut marked, top, &mut xi, &mut stack, &mut pstack);
                }
            }
            for &r in &xi[top..n] {
                marked[r] = false;
                x[r] = 0.0;
            }
            for p in a.col_ptr[col]..a.col_ptr[col + 1] {
                x[a.row_idx[p]] = a.values[p];
            }
            for px in top..n {
                let j = xi[px];
                let jj = pinv[j];
                if jj == UNSET {
                    continue;
                }
                // unit diagonal stored first
                let xj = x[j];
                for p in lp[jj] + 1..lp_end(&lp, jj, li.len()) {
                    x[li[p]] -= lx[p] * xj;
                }
            }

            let mut ipiv = UNSET;
            let mut best = -1.0;
            for &i in &xi[top..n] {
                if pinv[i] == UNSET {
                    let t = x[i].abs();
                    if t > best {
                        best = t;
                        ipiv = i;
                    }
                } else {
                    ui.push(pinv[i]);
                    ux.push(x[i]);
                }
            }
            if ipiv == UNSET || !(best > 0.0) || !best.is_finite() {
                return Err(SingularMatrix { column: col });
            }
            let pref = pivot_rows[k];
            if pinv[pref] == UNSET && x[pref].abs() >= best * pivot_tol {
                ipiv = pref;
            }
            let pivot = x[ipiv];
            ui.push(k);
            ux.push(pivot);
            pinv[ipiv] = k;
            li.push(ipiv);
            lx.push(1.0);
            for &i in &xi[top..n] {
                if pinv[i] == UNSET {
                    li.push(i);
                    lx.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        lp.push(li.len());
        up.push(ui.len());
        for r in li.iter_mut() {
            *r = pinv[*r];
        }

        Ok(Self {
            n,
            l: CscMatrix { nrows: n, ncols: n, col_ptr: lp, row_idx: li, values: lx },
            u: CscMatrix { nrows: n, ncols: n, col_ptr: up, row_idx: ui, values: ux },
            pinv,
            q: col_order.to_vec(),
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn fill_nnz(&self) -> usize {
        self.l.nnz() + self.u.nnz()
    }

    /// Solve A x = b, overwriting `b` with x.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut y = vec![0.0; n];
        for (i, &bi) in b.iter().enumerate() {
            y[self.pinv[i]] = bi;
        }
        // L: unit diagonal first in each column
        for j in 0..n {
            let yj = y[j];
            if yj == 0.0 {
                continue;
            }
            for p in self.l.col_ptr[j] + 1..self.l.col_ptr[j + 1] {
                y[self.l.row_idx[p]] -= self.l.values[p] * yj;
            }
        }
        // U: diagonal last in each column
        for j in (0..n).rev() {
            let last = self.u.col_ptr[j + 1] - 1;
            y[j] /= self.u.values[last];
            let yj = y[j];
            if yj == 0.0 {
                continue;
            }
            for p in self.u.col_ptr[j]..last {
                y[self.u.row_idx[p]] -= self.u.values[p] * yj;
            }
        }
        for (k, &c) in self.q.iter().enumerate() {
            b[c] = y[k];
        }
    }

    /// Solve with a few rounds of iterative refinement against `a`.
    pub fn solve_refined(&self, a: &CscMatrix, b: &[f64], rounds: usize) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        let mut r = vec![0.0; b.len()];
        for _ in 0..rounds {
            a.mul_vec(&x, &mut r);
            let mut worst: f64 = 0.0;
            for (ri, bi) in r.iter_mut().zip(b) {
                *ri = bi - *ri;
                worst = worst.max(ri.abs());
            }
            if worst == 0.0 {
                break;
            }
            self.solve_in_place(&mut r);
            for (xi, di) in x.iter_mut().zip(&r) {
                *xi += di;
            }
        }
        x
    }
}

#[inline]
fn lp_end(lp: &[usize], col: usize, current_len: usize) -> usize {
    // columns before the active one are closed by the next column's start
    if col + 1 < lp.len() {
        lp[col + 1]
    } else {
        current_len
    }
}

/// Depth-first search in the graph of L from `start`; pushes the topologically
/// ordered reach into `xi[top..]` and returns the new `top`.
#[allow(clippy::too_many_arguments)]
fn dfs(
    start: usize,
    lp: &[usize],
    li: &[usize],
    pinv: &[usize],
    marked: &mut [bool],
    mut top: usize,
    xi: &mut [usize],
    stack: &mut [usize],
    pstack: &mut [usize],
) -> usize {
    let mut head: isize = 0;
    stack[0] = start;
    while head >= 0 {
        let h = head as usize;
        let j = stack[h];
        let jj = pinv[j];
        if !marked[j] {
            marked[j] = true;
            pstack[h] = if jj == UNSET { 0 } else { lp[jj] + 1 };
        }
        let end = if jj == UNSET { 0 } else { lp_end(lp, jj, li.len()) };
        let mut done = true;
        let mut p = pstack[h];
        while p < end {
            let i = li[p];
            p += 1;
            if marked[i] {
                continue;
            }
            pstack[h] = p;
            head += 1;
            stack[head as usize] = i;
            done = false;
            break;
        }
        if done {
            head -= 1;
            top -= 1;
            xi[top] = j;
        }
    }
    top
}
