//! Column-major sparse storage for the covariate matrix.
//!
//! Coordinate descent and the balance diagnostics both sweep columns, so each
//! covariate is stored as its own index/value list. Binary covariates (the
//! common case at EHR scale) drop the value array entirely.

/// One covariate column. Row indices are strictly increasing.
#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    /// General real-valued column.
    Sparse { idx: Vec<u32>, val: Vec<f64> },
    /// 0/1 column; every stored entry is 1.0.
    Binary { idx: Vec<u32> },
}

impl Column {
    pub fn nnz(&self) -> usize {
        match self {
            Column::Sparse { idx, .. } | Column::Binary { idx } => idx.len(),
        }
    }

    /// Builds the cheapest representation for a dense slice of values.
    pub fn from_dense(values: &[f64]) -> Self {
        let binary = values.iter().all(|&v| v == 0.0 || v == 1.0);
        if binary {
            let idx = values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, _)| i as u32)
                .collect();
            Column::Binary { idx }
        } else {
            let (idx, val) = values
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(i, &v)| (i as u32, v))
                .unzip();
            Column::Sparse { idx, val }
        }
    }

    pub fn iter(&self) -> ColumnIter<'_> {
        match self {
            Column::Sparse { idx, val } => ColumnIter {
                idx,
                val: Some(val),
                pos: 0,
            },
            Column::Binary { idx } => ColumnIter {
                idx,
                val: None,
                pos: 0,
            },
        }
    }

    /// Σ_i x_i v[i]
    pub fn dot(&self, v: &[f64]) -> f64 {
        match self {
            Column::Sparse { idx, val } => idx
                .iter()
                .zip(val)
                .map(|(&i, &x)| x * v[i as usize])
                .sum(),
            Column::Binary { idx } => idx.iter().map(|&i| v[i as usize]).sum(),
        }
    }

    /// Σ_i x_i v[i] restricted to rows where mask holds.
    pub fn dot_masked(&self, v: &[f64], mask: &[bool]) -> f64 {
        match self {
            Column::Sparse { idx, val } => idx
                .iter()
                .zip(val)
                .filter(|(&i, _)| mask[i as usize])
                .map(|(&i, &x)| x * v[i as usize])
                .sum(),
            Column::Binary { idx } => idx
                .iter()
                .filter(|&&i| mask[i as usize])
                .map(|&i| v[i as usize])
                .sum(),
        }
    }

    /// out[i] += a * x_i
    pub fn axpy(&self, a: f64, out: &mut [f64]) {
        match self {
            Column::Sparse { idx, val } => {
                for (&i, &x) in idx.iter().zip(val) {
                    out[i as usize] += a * x;
                }
            }
            Column::Binary { idx } => {
                for &i in idx {
                    out[i as usize] += a;
                }
            }
        }
    }

    pub fn axpy_masked(&self, a: f64, out: &mut [f64], mask: &[bool]) {
        match self {
            Column::Sparse { idx, val } => {
                for (&i, &x) in idx.iter().zip(val) {
                    if mask[i as usize] {
                        out[i as usize] += a * x;
                    }
                }
            }
            Column::Binary { idx } => {
                for &i in idx {
                    if mask[i as usize] {
                        out[i as usize] += a;
                    }
                }
            }
        }
    }

    pub fn sum(&self) -> f64 {
        match self {
            Column::Sparse { val, .. } => val.iter().sum(),
            Column::Binary { idx } => idx.len() as f64,
        }
    }

    pub fn sq_sum(&self) -> f64 {
        match self {
            Column::Sparse { val, .. } => val.iter().map(|x| x * x).sum(),
            Column::Binary { idx } => idx.len() as f64,
        }
    }

    pub fn sq_sum_masked(&self, mask: &[bool]) -> f64 {
        match self {
            Column::Sparse { idx, val } => idx
                .iter()
                .zip(val)
                .filter(|(&i, _)| mask[i as usize])
                .map(|(_, &x)| x * x)
                .sum(),
            Column::Binary { idx } => {
                idx.iter().filter(|&&i| mask[i as usize]).count() as f64
            }
        }
    }

    /// Materializes the column as a dense vector of length `n_rows`.
    pub fn to_dense(&self, n_rows: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_rows];
        for (i, x) in self.iter() {
            out[i as usize] = x;
        }
        out
    }
}

pub struct ColumnIter<'a> {
    idx: &'a [u32],
    val: Option<&'a [f64]>,
    pos: usize,
}

impl Iterator for ColumnIter<'_> {
    type Item = (u32, f64);

    fn next(&mut self) -> Option<(u32, f64)> {
        if self.pos >= self.idx.len() {
            return None;
        }
        let i = self.idx[self.pos];
        let x = self.val.map_or(1.0, |v| v[self.pos]);
        self.pos += 1;
        Some((i, x))
    }
}

/// Owned column-major sparse matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    cols: Vec<Column>,
}

impl SparseMatrix {
    pub fn new(n_rows: usize, cols: Vec<Column>) -> Self {
        SparseMatrix { n_rows, cols }
    }

    /// Builds from row-major dense data.
    pub fn from_rows(rows: &[Vec<f64>], n_cols: usize) -> Self {
        let n_rows = rows.len();
        let cols = (0..n_cols)
            .map(|j| {
                let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                Column::from_dense(&column)
            })
            .collect();
        SparseMatrix { n_rows, cols }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, j: usize) -> &Column {
        &self.cols[j]
    }

    pub fn columns(&self) -> &[Column] {
        &self.cols
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Column::nnz).sum()
    }

    pub fn view(&self) -> MatrixView<'_> {
        MatrixView {
            n_rows: self.n_rows,
            cols: self.cols.iter().collect(),
        }
    }

    /// Copies the given rows (in order) into a new matrix. `rows` must be
    /// strictly increasing.
    pub fn select_rows(&self, rows: &[usize]) -> SparseMatrix {
        debug_assert!(rows.windows(2).all(|w| w[0] < w[1]));
        let mut new_index = vec![u32::MAX; self.n_rows];
        for (new_i, &old_i) in rows.iter().enumerate() {
            new_index[old_i] = new_i as u32;
        }
        let cols = self
            .cols
            .iter()
            .map(|col| match col {
                Column::Sparse { idx, val } => {
                    let mut ni = Vec::new();
                    let mut nv = Vec::new();
                    for (&i, &v) in idx.iter().zip(val) {
                        let mapped = new_index[i as usize];
                        if mapped != u32::MAX {
                            ni.push(mapped);
                            nv.push(v);
                        }
                    }
                    Column::Sparse { idx: ni, val: nv }
                }
                Column::Binary { idx } => {
                    let ni = idx
                        .iter()
                        .filter_map(|&i| {
                            let mapped = new_index[i as usize];
                            (mapped != u32::MAX).then_some(mapped)
                        })
                        .collect();
                    Column::Binary { idx: ni }
                }
            })
            .collect();
        SparseMatrix {
            n_rows: rows.len(),
            cols,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.col(j) {
            Column::Sparse { idx, val } => idx
                .binary_search(&(i as u32))
                .map_or(0.0, |p| val[p]),
            Column::Binary { idx } => {
                if idx.binary_search(&(i as u32)).is_ok() {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Borrowed set of columns, so callers can append extra columns (e.g. the
/// oracle's confounder) without copying the base matrix.
#[derive(Clone)]
pub struct MatrixView<'a> {
    n_rows: usize,
    cols: Vec<&'a Column>,
}

impl<'a> MatrixView<'a> {
    pub fn new(n_rows: usize, cols: Vec<&'a Column>) -> Self {
        MatrixView { n_rows, cols }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn col(&self, j: usize) -> &'a Column {
        self.cols[j]
    }

    pub fn with_column(&self, extra: &'a Column) -> MatrixView<'a> {
        let mut cols = self.cols.clone();
        cols.push(extra);
        MatrixView {
            n_rows: self.n_rows,
            cols,
        }
    }

    /// y = X v
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (j, col) in self.cols.iter().enumerate() {
            if v[j] != 0.0 {
                col.axpy(v[j], out);
            }
        }
    }

    /// out_j = x_jᵀ w
    pub fn matvec_t(&self, w: &[f64], out: &mut [f64]) {
        for (j, col) in self.cols.iter().enumerate() {
            out[j] = col.dot(w);
        }
    }

    /// Column means restricted to rows where mask holds (`n_active` rows).
    pub fn col_means_masked(&self, mask: &[bool], n_active: usize) -> Vec<f64> {
        self.cols
            .iter()
            .map(|c| {
                let s: f64 = c
                    .iter()
                    .filter(|(i, _)| mask[*i as usize])
                    .map(|(_, x)| x)
                    .sum();
                s / n_active as f64
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_rows_matches_dense_subset() {
        let rows = vec![
            vec![1.0, 0.0, 2.5],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, -3.0],
            vec![0.0, 0.0, 4.0],
        ];
        let m = SparseMatrix::from_rows(&rows, 3);
        let sub = m.select_rows(&[0, 2, 3]);
        assert_eq!(sub.n_rows(), 3);
        for (new_i, &old_i) in [0usize, 2, 3].iter().enumerate() {
            for j in 0..3 {
                assert_eq!(sub.get(new_i, j), rows[old_i][j]);
            }
        }
    }

    #[test]
    fn dense_round_trip() {
        let rows = vec![
            vec![1.0, 0.0, 2.5],
            vec![0.0, 1.0, 0.0],
            vec![1.0, 1.0, -3.0],
        ];
        let m = SparseMatrix::from_rows(&rows, 3);
        assert_eq!(m.n_rows(), 3);
        assert_eq!(m.n_cols(), 3);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), rows[i][j]);
            }
        }
        // first two columns are binary, third is not
        assert!(matches!(m.col(0), Column::Binary { .. }));
        assert!(matches!(m.col(1), Column::Binary { .. }));
        assert!(matches!(m.col(2), Column::Sparse { .. }));
    }

    #[test]
    fn kernels_agree_with_dense() {
        let col = Column::from_dense(&[0.0, 2.0, 0.0, -1.0, 1.0]);
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(col.dot(&v), 2.0 * 2.0 - 4.0 + 5.0);
        assert_eq!(col.sum(), 2.0);
        assert_eq!(col.sq_sum(), 6.0);

        let mask = [true, true, false, false, true];
        assert_eq!(col.dot_masked(&v, &mask), 4.0 + 5.0);
        assert_eq!(col.sq_sum_masked(&mask), 5.0);

        let mut out = vec![0.0; 5];
        col.axpy(2.0, &mut out);
        assert_eq!(out, vec![0.0, 4.0, 0.0, -2.0, 2.0]);
    }

    #[test]
    fn view_appends_column_without_copying_base() {
        let m = SparseMatrix::from_rows(&[vec![1.0], vec![0.0]], 1);
        let extra = Column::from_dense(&[0.5, 0.5]);
        let v = m.view().with_column(&extra);
        assert_eq!(v.n_cols(), 2);
        let mut out = vec![0.0; 2];
        v.matvec(&[1.0, 2.0], &mut out);
        assert_eq!(out, vec![2.0, 1.0]);
    }
}
