//! Free-DOF numbering, compressed sparse column storage and the sparse LU wrapper.

use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMat};
use faer::Mat;

/// Maps global DOFs (`3 * node + dir`) to a compact numbering of the free ones.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    /// Free index of each global DOF, `usize::MAX` when constrained.
    pub free_index: Vec<usize>,
    /// Global DOF of each free index.
    pub free_dofs: Vec<usize>,
}

pub const FIXED: usize = usize::MAX;

impl DofMap {
    pub fn new(constrained: &[bool]) -> Self {
        let mut free_index = vec![FIXED; constrained.len()];
        let mut free_dofs = Vec::new();
        for (d, &c) in constrained.iter().enumerate() {
            if !c {
                free_index[d] = free_dofs.len();
                free_dofs.push(d);
            }
        }
        DofMap {
            free_index,
            free_dofs,
        }
    }

    pub fn n_free(&self) -> usize {
        self.free_dofs.len()
    }

    pub fn n_total(&self) -> usize {
        self.free_index.len()
    }

    /// Free entries of a full vector.
    pub fn gather(&self, full: &[f64]) -> Vec<f64> {
        self.free_dofs.iter().map(|&d| full[d]).collect()
    }

    /// Writes free entries into a full vector, leaving constrained entries untouched.
    pub fn scatter(&self, free: &[f64], full: &mut [f64]) {
        for (&d, &v) in self.free_dofs.iter().zip(free) {
            full[d] = v;
        }
    }
}

/// Column-compressed sparsity pattern with sorted row indices.
#[derive(Debug)]
pub struct CscPattern {
    n: usize,
    symbolic: SymbolicSparseColMat<usize>,
}

impl CscPattern {
    /// Square pattern from per-column row lists (sorted and deduplicated here).
    pub fn from_columns(mut cols: Vec<Vec<usize>>) -> Self {
        let n = cols.len();
        let mut col_ptr = Vec::with_capacity(n + 1);
        col_ptr.push(0);
        let mut row_idx = Vec::new();
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            row_idx.extend_from_slice(c);
            col_ptr.push(row_idx.len());
        }
        let symbolic = SymbolicSparseColMat::new_checked(n, n, col_ptr, None, row_idx);
        CscPattern { n, symbolic }
    }

    /// Pattern coupling every pair of free DOFs that share an element.
    pub fn from_elements(elements: &[[usize; 8]], dofs: &DofMap) -> Self {
        let mut cols: Vec<Vec<usize>> = vec![Vec::new(); dofs.n_free()];
        for conn in elements {
            let free: Vec<usize> = conn
                .iter()
                .flat_map(|&n| (0..3).map(move |i| 3 * n + i))
                .map(|d| dofs.free_index[d])
                .filter(|&f| f != FIXED)
                .collect();
            for &c in &free {
                cols[c].extend_from_slice(&free);
            }
        }
        Self::from_columns(cols)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.row_idx().len()
    }

    pub fn col_ptr(&self) -> &[usize] {
        self.symbolic.col_ptr()
    }

    pub fn row_idx(&self) -> &[usize] {
        self.symbolic.row_idx()
    }

    /// Storage position of entry `(row, col)`, if present.
    pub fn position(&self, row: usize, col: usize) -> Option<usize> {
        let cp = self.col_ptr();
        let rows = &self.row_idx()[cp[col]..cp[col + 1]];
        rows.binary_search(&row).ok().map(|k| cp[col] + k)
    }

    /// Positions of the 24×24 entries of each element, column-major per element
    /// (`[e * 576 + 24 * c + r]`); `u32::MAX` where a DOF is constrained.
    pub fn element_positions(&self, elements: &[[usize; 8]], dofs: &DofMap) -> Vec<u32> {
        assert!(self.nnz() < u32::MAX as usize, "pattern too large for 32-bit positions");
        let mut out = Vec::with_capacity(elements.len() * 576);
        for conn in elements {
            let free: [usize; 24] = std::array::from_fn(|l| dofs.free_index[3 * conn[l / 3] + l % 3]);
            for &c in &free {
                for &r in &free {
                    let p = if r == FIXED || c == FIXED {
                        u32::MAX
                    } else {
                        self.position(r, c).expect("element entry in pattern") as u32
                    };
                    out.push(p);
                }
            }
        }
        out
    }
}

#[inline(always)]
fn madd<const FUSED: bool>(a: f64, b: f64, c: f64) -> f64 {
    if FUSED {
        a.mul_add(b, c)
    } else {
        a * b + c
    }
}

/// Row-wise traversal of a CSC pattern for products with dense row-major
/// blocks. Consecutive rows with the same column set (the free DOFs of one
/// node) are grouped so each row of the dense block is read once per group.
#[derive(Debug, Clone)]
pub struct RowPlan {
    n: usize,
    /// `(first row, row count, start in cols)` per group.
    groups: Vec<(usize, usize, usize)>,
    cols: Vec<usize>,
    /// Value positions, `row count` entries per column of a group.
    pos: Vec<usize>,
}

impl RowPlan {
    const MAX_GROUP: usize = 3;

    pub fn new(pattern: &CscPattern) -> Self {
        let n = pattern.n();
        let cp = pattern.col_ptr();
        let ri = pattern.row_idx();
        let mut rows: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for c in 0..n {
            for p in cp[c]..cp[c + 1] {
                rows[ri[p]].push((c, p));
            }
        }
        let same = |a: &[(usize, usize)], b: &[(usize, usize)]| a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.0 == y.0);
        let mut plan = RowPlan {
            n,
            groups: Vec::new(),
            cols: Vec::new(),
            pos: Vec::new(),
        };
        let mut r = 0;
        while r < n {
            let mut g = 1;
            while g < Self::MAX_GROUP && r + g < n && same(&rows[r], &rows[r + g]) {
                g += 1;
            }
            plan.groups.push((r, g, plan.cols.len()));
            for (k, &(c, _)) in rows[r].iter().enumerate() {
                plan.cols.push(c);
                for row in &rows[r..r + g] {
                    plan.pos.push(row[k].1);
                }
            }
            r += g;
        }
        plan
    }

    /// `A X` for row-major `X` (`n × m`); result row-major `n × m`.
    pub fn mul_dense_rows(&self, values: &[f64], x: &[f64], m: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.n * m];
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the required CPU features were detected at runtime.
            unsafe { self.kernel_avx2(values, x, m, &mut y) };
            return y;
        }
        self.kernel::<false>(values, x, m, &mut y);
        y
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2,fma")]
    unsafe fn kernel_avx2(&self, values: &[f64], x: &[f64], m: usize, y: &mut [f64]) {
        self.kernel::<true>(values, x, m, y)
    }

    #[inline(always)]
    fn kernel<const FUSED: bool>(&self, values: &[f64], x: &[f64], m: usize, y: &mut [f64]) {
        let mut pos_at = 0;
        for (gi, &(r0, g, c0)) in self.groups.iter().enumerate() {
            let c1 = self.groups.get(gi + 1).map_or(self.cols.len(), |x| x.2);
            let head = &mut y[r0 * m..(r0 + g) * m];
            if g == 3 {
                let (a0, rest) = head.split_at_mut(m);
                let (a1, a2) = rest.split_at_mut(m);
                for &c in &self.cols[c0..c1] {
                    let p = &self.pos[pos_at..pos_at + 3];
                    let (v0, v1, v2) = (values[p[0]], values[p[1]], values[p[2]]);
                    pos_at += 3;
                    let xc = &x[c * m..(c + 1) * m];
                    for (((p0, p1), p2), xv) in a0.iter_mut().zip(a1.iter_mut()).zip(a2.iter_mut()).zip(xc) {
                        *p0 = madd::<FUSED>(v0, *xv, *p0);
                        *p1 = madd::<FUSED>(v1, *xv, *p1);
                        *p2 = madd::<FUSED>(v2, *xv, *p2);
                    }
                }
            } else {
                for &c in &self.cols[c0..c1] {
                    let xc = &x[c * m..(c + 1) * m];
                    for (j, acc) in head.chunks_exact_mut(m).enumerate() {
                        let v = values[self.pos[pos_at + j]];
                        for (a, xv) in acc.iter_mut().zip(xc) {
                            *a = madd::<FUSED>(v, *xv, *a);
                        }
                    }
                    pos_at += g;
                }
            }
        }
    }
}

/// Square sparse matrix on a shared pattern.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    pub pattern: Arc<CscPattern>,
    pub values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<CscPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        SparseMatrix { pattern, values }
    }

    pub fn n(&self) -> usize {
        self.pattern.n()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pattern.position(row, col).map_or(0.0, |p| self.values[p])
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n()];
        let cp = self.pattern.col_ptr();
        let ri = self.pattern.row_idx();
        for c in 0..self.n() {
            let xc = x[c];
            if xc == 0.0 {
                continue;
            }
            for p in cp[c]..cp[c + 1] {
                y[ri[p]] += self.values[p] * xc;
            }
        }
        y
    }

    /// `A X` for a dense row-major `n × m` block; result row-major `n × m`.
    /// See [`RowPlan`] for a faster repeated product.
    pub fn mul_dense_rows(&self, x: &[f64], m: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.n() * m];
        let cp = self.pattern.col_ptr();
        let ri = self.pattern.row_idx();
        for c in 0..self.n() {
            let xc = &x[c * m..(c + 1) * m];
            for p in cp[c]..cp[c + 1] {
                let v = self.values[p];
                let yr = &mut y[ri[p] * m..(ri[p] + 1) * m];
                for (yk, xk) in yr.iter_mut().zip(xc) {
                    *yk += v * xk;
                }
            }
        }
        y
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.n();
        let mut d = nalgebra::DMatrix::zeros(n, n);
        let cp = self.pattern.col_ptr();
        let ri = self.pattern.row_idx();
        for c in 0..n {
            for p in cp[c]..cp[c + 1] {
                d[(ri[p], c)] += self.values[p];
            }
        }
        d
    }

    fn as_faer(&self) -> SparseColMatRef<'_, usize, f64> {
        SparseColMatRef::new(self.pattern.symbolic.as_ref(), &self.values)
    }
}

/// Sparse LU with the symbolic analysis cached across factorizations of
/// matrices that share one pattern.
#[derive(Default)]
pub struct SparseLu {
    symbolic: Option<(usize, SymbolicLu<usize>)>,
}

/// A numeric factorization ready to solve.
pub struct LuFactors(Lu<usize, f64>);

impl SparseLu {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factor(&mut self, a: &SparseMatrix) -> Result<LuFactors, String> {
        if a.values.iter().any(|v| !v.is_finite()) {
            return Err("matrix contains non-finite entries".into());
        }
        let key = Arc::as_ptr(&a.pattern) as usize;
        let symbolic = match &self.symbolic {
            Some((k, s)) if *k == key => s.clone(),
            _ => {
                let s = SymbolicLu::try_new(a.pattern.symbolic.as_ref()).map_err(|e| format!("{e:?}"))?;
                self.symbolic = Some((key, s.clone()));
                s
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, a.as_faer()).map_err(|e| format!("{e:?}"))?;
        Ok(LuFactors(lu))
    }
}

impl LuFactors {
    /// Solves in place; reports a singular or ill-conditioned system as an error.
    pub fn solve(&self, rhs: &mut [f64]) -> Result<(), String> {
        let n = rhs.len();
        let mut m = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        self.0.solve_in_place(m.as_mut());
        for (i, r) in rhs.iter_mut().enumerate() {
            *r = m[(i, 0)];
        }
        if rhs.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err("singular matrix (non-finite solution)".into())
        }
    }
}

/// Dense LU solve of a small system (reduced models); errors when singular.
pub fn dense_solve(a: &Mat<f64>, rhs: &mut [f64]) -> Result<(), String> {
    let n = rhs.len();
    let lu = a.partial_piv_lu();
    let mut m = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
    lu.solve_in_place(m.as_mut());
    for (i, r) in rhs.iter_mut().enumerate() {
        *r = m[(i, 0)];
    }
    if rhs.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err("singular reduced matrix".into())
    }
}
