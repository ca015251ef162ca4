use std::ops::Range;
use std::sync::Arc;

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::Mat;

use super::multifrontal::Analysis;
use chns_base::sparse::Csr;
use chns_base::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    /// Multifrontal LU with nested dissection ordering.
    #[default]
    DirectLu,
    /// General sparse LU from faer.
    FaerLu,
    GmresIlu,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::DirectLu => "direct_lu",
            Backend::FaerLu => "faer_lu",
            Backend::GmresIlu => "gmres_ilu",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "direct_lu" => Some(Backend::DirectLu),
            "faer_lu" => Some(Backend::FaerLu),
            "gmres_ilu" => Some(Backend::GmresIlu),
            _ => None,
        }
    }
}

/// Named index ranges of the unknown vector, used to report which block a
/// singular system fails on.
pub type Blocks = [(&'static str, Range<usize>)];

/// Sparse linear solver. The direct backends keep their symbolic analysis
/// while the sparsity pattern stays the same.
pub struct LinearSolver {
    pub backend: Backend,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLu<usize>)>,
    analysis: Option<Arc<Analysis>>,
}

impl std::fmt::Debug for LinearSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LinearSolver").field("backend", &self.backend).finish()
    }
}

impl LinearSolver {
    pub fn new(backend: Backend) -> Self {
        LinearSolver {
            backend,
            gmres_tol: 1e-12,
            gmres_restart: 200,
            gmres_max_iter: 5000,
            symbolic: None,
            analysis: None,
        }
    }

    pub fn solve(&mut self, a: &Csr, b: &[f64], blocks: &Blocks) -> Result<Vec<f64>> {
        self.solve_located(a, b, blocks, &|| None)
    }

    /// Like [`solve`](Self::solve); `points` locates the unknowns in the
    /// plane and is only called when a new ordering has to be computed. It
    /// may return more points than unknowns, the leading ones are used.
    pub fn solve_located(
        &mut self,
        a: &Csr,
        b: &[f64],
        blocks: &Blocks,
        points: &dyn Fn() -> Option<Vec<[f64; 2]>>,
    ) -> Result<Vec<f64>> {
        let backend = self.backend.name();
        if a.nrows != a.ncols || a.nrows != b.len() {
            return Err(Error::LinearSolveFailure {
                backend,
                detail: format!("shape mismatch: {}x{} matrix, rhs of length {}", a.nrows, a.ncols, b.len()),
            });
        }
        if let Some(block) = constant_mode_in_kernel(a, blocks) {
            return Err(Error::LinearSolveFailure {
                backend,
                detail: format!(
                    "singular matrix: constant {block} mode lies in the kernel (rank-deficient {block} block)"
                ),
            });
        }
        let x = match self.backend {
            Backend::DirectLu => self.solve_multifrontal(a, b, points)?,
            Backend::FaerLu => self.solve_faer(a, b)?,
            Backend::GmresIlu => {
                let pre = ilu0(a).map_err(|i| Error::LinearSolveFailure {
                    backend: "gmres_ilu",
                    detail: format!("zero pivot in ILU(0) at row {i} ({} block)", block_name(blocks, i)),
                })?;
                gmres(a, b, None, |v| pre.apply(v), self.gmres_tol, self.gmres_restart, self.gmres_max_iter)
                    .map_err(|detail| Error::LinearSolveFailure { backend: "gmres_ilu", detail })?
            }
        };
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailure {
                backend,
                detail: format!(
                    "non-finite solution entry {i} in the {} block (near-singular pivot)",
                    block_name(blocks, i)
                ),
            });
        }
        Ok(x)
    }

    fn solve_multifrontal(
        &mut self,
        a: &Csr,
        b: &[f64],
        points: &dyn Fn() -> Option<Vec<[f64; 2]>>,
    ) -> Result<Vec<f64>> {
        let n = a.nrows;
        if !self.analysis.as_ref().is_some_and(|an| an.matches(a)) {
            let pts = points()
                .filter(|p| p.len() >= n)
                .map(|mut p| {
                    p.truncate(n);
                    p
                })
                .unwrap_or_else(|| (0..n).map(|i| [i as f64, 0.0]).collect());
            self.analysis = Some(Arc::new(Analysis::new(a, &pts)));
        }
        let factor = self.analysis.as_ref().expect("analysis").factor(a);
        let x = factor.solve(b);
        if factor.perturbed == 0 {
            return Ok(x);
        }
        gmres(a, b, Some(x), |v| factor.solve(v), self.gmres_tol, self.gmres_restart, self.gmres_max_iter).map_err(
            |detail| Error::LinearSolveFailure {
                backend: "direct_lu",
                detail: format!("{} perturbed pivots; refinement failed: {detail}", factor.perturbed),
            },
        )
    }

    fn solve_faer(&mut self, a: &Csr, b: &[f64]) -> Result<Vec<f64>> {
        let fail = |detail: String| Error::LinearSolveFailure { backend: "faer_lu", detail };
        let mat = a.to_faer();
        let reuse = matches!(&self.symbolic, Some((rp, ci, _)) if *rp == a.row_ptr && *ci == a.col_idx);
        if !reuse {
            let sym =
                SymbolicLu::try_new(mat.symbolic()).map_err(|e| fail(format!("symbolic factorisation: {e:?}")))?;
            self.symbolic = Some((a.row_ptr.clone(), a.col_idx.clone(), sym));
        }
        let sym = self.symbolic.as_ref().expect("symbolic").2.clone();
        let lu =
            Lu::try_new_with_symbolic(sym, mat.as_ref()).map_err(|e| fail(format!("numeric factorisation: {e:?}")))?;
        let mut rhs = Mat::<f64>::from_fn(b.len(), 1, |i, _| b[i]);
        lu.solve_in_place(rhs.as_mut());
        Ok((0..b.len()).map(|i| rhs[(i, 0)]).collect())
    }
}

/// Returns the name of a block whose constant vector `z` satisfies `A z = 0`
/// up to roundoff: every row of `A z` must cancel relative to `|A| |z|`.
fn constant_mode_in_kernel(a: &Csr, blocks: &Blocks) -> Option<&'static str> {
    for (name, range) in blocks {
        if range.is_empty() {
            continue;
        }
        let cancels = (0..a.nrows).all(|i| {
            let (mut s, mut abs) = (0.0, 0.0);
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                if range.contains(&a.col_idx[k]) {
                    s += a.vals[k];
                    abs += a.vals[k].abs();
                }
            }
            s.abs() <= 1e-10 * abs
        });
        if cancels {
            return Some(name);
        }
    }
    None
}

/// Incomplete LU factorisation with zero fill, stored on the pattern of `A`.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    lu: Csr,
    diag: Vec<usize>,
}

pub fn ilu0(a: &Csr) -> std::result::Result<Ilu0, usize> {
    let n = a.nrows;
    let mut lu = a.clone();
    let mut diag = vec![usize::MAX; n];
    for (i, d) in diag.iter_mut().enumerate() {
        if let Ok(k) = lu.col_idx[lu.row_ptr[i]..lu.row_ptr[i + 1]].binary_search(&i) {
            *d = lu.row_ptr[i] + k;
        }
    }
    if let Some(i) = diag.iter().position(|&d| d == usize::MAX) {
        return Err(i);
    }
    let mut pos = vec![usize::MAX; n];
    for i in 0..n {
        let (lo, hi) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
        for k in lo..hi {
            pos[lu.col_idx[k]] = k;
        }
        for kk in lo..hi {
            let k = lu.col_idx[kk];
            if k >= i {
                break;
            }
            let pivot = lu.vals[diag[k]];
            if pivot == 0.0 {
                return Err(k);
            }
            let lik = lu.vals[kk] / pivot;
            lu.vals[kk] = lik;
            for jj in diag[k] + 1..lu.row_ptr[k + 1] {
                let p = pos[lu.col_idx[jj]];
                if p != usize::MAX {
                    lu.vals[p] -= lik * lu.vals[jj];
                }
            }
        }
        for k in lo..hi {
            pos[lu.col_idx[k]] = usize::MAX;
        }
        if lu.vals[diag[i]] == 0.0 {
            return Err(i);
        }
    }
    Ok(Ilu0 { lu, diag })
}

impl Ilu0 {
    pub fn apply(&self, b: &[f64]) -> Vec<f64> {
        let n = b.len();
        let m = &self.lu;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in m.row_ptr[i]..self.diag[i] {
                s -= m.vals[k] * y[m.col_idx[k]];
            }
            y[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in self.diag[i] + 1..m.row_ptr[i + 1] {
                s -= m.vals[k] * y[m.col_idx[k]];
            }
            y[i] = s / m.vals[self.diag[i]];
        }
        y
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn block_name(blocks: &Blocks, i: usize) -> &'static str {
    blocks.iter().find(|(_, r)| r.contains(&i)).map_or("unknown", |(n, _)| *n)
}

/// Right-preconditioned restarted GMRES to `‖b − A x‖ ≤ tol ‖b‖`.
fn gmres(
    a: &Csr,
    b: &[f64],
    x0: Option<Vec<f64>>,
    pre: impl Fn(&[f64]) -> Vec<f64>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> std::result::Result<Vec<f64>, String> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = x0.unwrap_or_else(|| vec![0.0; n]);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let m = restart.max(1);
    let mut total = 0;
    loop {
        let ax = a.matvec(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = norm(&r);
        if beta <= tol * bnorm {
            return Ok(x);
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            total += 1;
            let z = pre(&v[k]);
            let mut w = a.matvec(&z);
            for (i, vi) in v.iter().enumerate() {
                let hik: f64 = w.iter().zip(vi).map(|(a, b)| a * b).sum();
                h[i][k] = hik;
                w.iter_mut().zip(vi).for_each(|(wj, vj)| *wj -= hik * vj);
            }
            let hn = norm(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let den = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if den == 0.0 {
                return Err("Arnoldi breakdown".into());
            }
            cs[k] = h[k][k] / den;
            sn[k] = h[k + 1][k] / den;
            h[k][k] = den;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;
            if g[k + 1].abs() <= tol * bnorm || total >= max_iter || hn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / hn).collect());
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut upd = vec![0.0; n];
        for (j, yj) in y.iter().enumerate() {
            upd.iter_mut().zip(&v[j]).for_each(|(u, vj)| *u += yj * vj);
        }
        let upd = pre(&upd);
        x.iter_mut().zip(&upd).for_each(|(x, u)| *x += u);
        if total >= max_iter {
            let ax = a.matvec(&x);
            let res = norm(&b.iter().zip(&ax).map(|(b, a)| b - a).collect::<Vec<_>>());
            if res <= tol * bnorm {
                return Ok(x);
            }
            return Err(format!("no convergence after {total} iterations (relative residual {:.3e})", res / bnorm));
        }
    }
}
