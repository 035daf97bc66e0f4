//! Small dense/sparse helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Row-compressed sparse matrix.
#[derive(Clone, Debug, Default)]
pub struct SparseMatrix {
    pub n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut r in rows {
            r.sort_by_key(|e| e.0);
            for (c, v) in r {
                if let Some(&last) = cols.last() {
                    if cols.len() > *row_ptr.last().unwrap() && last == c {
                        *vals.last_mut().unwrap() += v;
                        continue;
                    }
                }
                cols.push(c);
                vals.push(v);
            }
            row_ptr.push(cols.len());
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|e| e.0 == j).map_or(0.0, |e| e.1)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut m = self.clone();
        m.vals.iter_mut().for_each(|v| *v *= s);
        m
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for i in 0..self.n {
            for (j, _) in self.row(i) {
                if j < i {
                    kl = kl.max(i - j);
                } else {
                    ku = ku.max(j - i);
                }
            }
        }
        (kl, ku)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

/// LU factorisation of a banded matrix without pivoting.
///
/// Only used on row diagonally dominant matrices (shifted M-matrices), for
/// which elimination without pivoting is stable and keeps the band.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    w: usize,
    a: Vec<f64>,
}

impl BandedLu {
    /// Factorises `shift·I + scale·m`.
    pub fn new(m: &SparseMatrix, shift: f64, scale: f64) -> Result<Self> {
        let n = m.n;
        let (kl, ku) = m.bandwidths();
        let w = kl + ku + 1;
        let mut a = vec![0.0; n * w];
        for i in 0..n {
            a[i * w + kl] += shift;
            for (j, v) in m.row(i) {
                a[i * w + j + kl - i] += scale * v;
            }
        }
        for k in 0..n {
            let piv = a[k * w + kl];
            if piv.abs() < 1e-300 || !piv.is_finite() {
                return Err(Error::Solver(format!("zero pivot at row {k}")));
            }
            let iend = (k + kl + 1).min(n);
            let jend = (k + ku + 1).min(n);
            for i in k + 1..iend {
                let ik = i * w + k + kl - i;
                let l = a[ik] / piv;
                if l == 0.0 {
                    continue;
                }
                a[ik] = l;
                for j in k + 1..jend {
                    a[i * w + j + kl - i] -= l * a[k * w + j + kl - k];
                }
            }
        }
        Ok(Self { n, kl, ku, w, a })
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, ku, w) = (self.n, self.kl, self.ku, self.w);
        for i in 0..n {
            let s: f64 = (i.saturating_sub(kl)..i).map(|j| self.a[i * w + j + kl - i] * b[j]).sum();
            b[i] -= s;
        }
        for i in (0..n).rev() {
            let s: f64 = (i + 1..(i + ku + 1).min(n)).map(|j| self.a[i * w + j + kl - i] * b[j]).sum();
            b[i] = (b[i] - s) / self.a[i * w + kl];
        }
    }
}

/// Solves `m x = b` and reports the max-norm residual.
pub fn solve_sparse(m: &SparseMatrix, b: &[f64]) -> Result<(Vec<f64>, f64)> {
    let lu = BandedLu::new(m, 0.0, 1.0)?;
    let mut x = b.to_vec();
    lu.solve_in_place(&mut x);
    let r = m.apply(&x);
    let res = r.iter().zip(b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok((x, res))
}

/// Symmetric eigen-decomposition with eigenvalues sorted ascending.
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column k is the eigenvector of `values[k]`.
    pub vectors: DMatrix<f64>,
}

pub fn sym_eigen(m: DMatrix<f64>) -> SymEigen {
    let n = m.nrows();
    let e = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let values = order.iter().map(|&k| e.eigenvalues[k]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (c, &k) in order.iter().enumerate() {
        vectors.set_column(c, &e.eigenvectors.column(k));
    }
    SymEigen { values, vectors }
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; m];
    let mut w = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, 0.0);
            for j in 0..m {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j + 1) as f64;
            }
            dp = m as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[m - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[m - 1 - i] = w[i];
    }
    (x, w)
}

/// Composite Gauss–Legendre rule on [a, b]: `panels` panels of `m` nodes.
pub fn composite_gl(a: f64, b: f64, panels: usize, m: usize) -> Vec<(f64, f64)> {
    let (x, w) = gauss_legendre(m);
    let h = (b - a) / panels as f64;
    let mut out = Vec::with_capacity(panels * m);
    for k in 0..panels {
        let lo = a + k as f64 * h;
        for (xi, wi) in x.iter().zip(&w) {
            out.push((lo + 0.5 * h * (xi + 1.0), 0.5 * h * wi));
        }
    }
    out
}

/// Composite rule graded towards `a`, for integrands with a layer at the left end.
pub fn graded_gl(a: f64, b: f64, levels: usize, m: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut hi = b;
    for _ in 0..levels {
        let lo = a + (hi - a) / 4.0;
        out.extend(composite_gl(lo, hi, 1, m));
        hi = lo;
    }
    out.extend(composite_gl(a, hi, 1, m));
    out.sort_by(|p, q| p.0.total_cmp(&q.0));
    out
}

/// Sum with O(log n) error growth; deterministic for a given order.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 16 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// (e^{z} − 1)/z, accurate near 0.
pub fn phi1(z: f64) -> f64 {
    if z.abs() < 1e-5 {
        1.0 + z / 2.0 + z * z / 6.0
    } else {
        z.exp_m1() / z
    }
}

/// ∫_0^t e^{a(t−s)} e^{b s} ds for a, b ≤ 0.
pub fn exp_convolution(a: f64, b: f64, t: f64) -> f64 {
    let d = (b - a) * t;
    if d.abs() < 1e-3 {
        // symmetric midpoint expansion
        let m = 0.5 * (a + b) * t;
        t * m.exp() * (1.0 + d * d / 24.0 + d.powi(4) / 1920.0)
    } else {
        ((b * t).exp() - (a * t).exp()) / (b - a)
    }
}
