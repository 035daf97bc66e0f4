//! Closed moment hierarchy: the discrete heat equation for the density and
//! the triangle equation for the extended two-point correlations.

use nalgebra::DMatrix;

use crate::error::{domain, Error, Result};
use crate::linalg::{solve_sparse, sym_eigen, SparseMatrix};
use crate::model::{mobility, ModelParams};
use crate::ode::{self, ExpSum, LinearProblem, Source};
use crate::oracle::ExactMoments;

/// ρ on the closed lattice {0,…,N}; `values[0]` and `values[N]` are the reservoir densities.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityProfile {
    pub time: f64,
    pub values: Vec<f64>,
}

impl DensityProfile {
    pub fn from_interior(p: &ModelParams, time: f64, interior: &[f64]) -> Self {
        let mut values = Vec::with_capacity(p.n + 1);
        values.push(p.rho_l);
        values.extend_from_slice(interior);
        values.push(p.rho_r);
        Self { time, values }
    }

    pub fn n(&self) -> usize {
        self.values.len() - 1
    }

    pub fn interior(&self) -> &[f64] {
        &self.values[1..self.values.len() - 1]
    }
}

/// Δ_N^i f at the interior sites (unaccelerated).
pub fn density_generator_apply(f: &DensityProfile, p: &ModelParams) -> Vec<f64> {
    let n = p.n;
    let a = p.a();
    let v = &f.values;
    (1..n)
        .map(|x| {
            let cl = if x == 1 { p.bond_left() } else { a };
            let cr = if x == n - 1 { p.bond_right() } else { a };
            cl * (v[x - 1] - v[x]) + cr * (v[x + 1] - v[x])
        })
        .collect()
}

/// N²Δ_N^i restricted to the interior with zero boundary values.
fn density_matrix(p: &ModelParams) -> SparseMatrix {
    let n = p.n;
    let n2 = p.nf() * p.nf();
    let a = p.a();
    let rows = (1..n)
        .map(|x| {
            let cl = if x == 1 { p.bond_left() } else { a };
            let cr = if x == n - 1 { p.bond_right() } else { a };
            let mut r = vec![(x - 1, -n2 * (cl + cr))];
            if x > 1 {
                r.push((x - 2, n2 * a));
            }
            if x < n - 1 {
                r.push((x, n2 * a));
            }
            r
        })
        .collect();
    SparseMatrix::from_rows(rows)
}

#[derive(Clone, Debug, PartialEq)]
pub struct StationaryCoefficients {
    pub a: f64,
    pub b: f64,
    /// ρ_ss at the interior sites, from the direct solve.
    pub profile: Vec<f64>,
}

impl StationaryCoefficients {
    pub fn at(&self, x: usize) -> f64 {
        self.a * x as f64 + self.b
    }
}

/// Stationary profile from the tridiagonal system Δ_N^i ρ = 0.
pub fn stationary_profile(p: &ModelParams) -> Result<StationaryCoefficients> {
    if p.rho_l == p.rho_r {
        return Ok(StationaryCoefficients { a: 0.0, b: p.rho_l, profile: vec![p.rho_l; p.sites()] });
    }
    let m = density_matrix(p);
    let n2 = p.nf() * p.nf();
    let mut rhs = vec![0.0; p.sites()];
    rhs[0] -= n2 * p.bond_left() * p.rho_l;
    rhs[p.sites() - 1] -= n2 * p.bond_right() * p.rho_r;
    let (profile, res) = solve_sparse(&m, &rhs)?;
    if res > 1e-10 * n2 * p.a() {
        return Err(Error::Solver(format!("stationary residual {res:e}")));
    }
    let a = if profile.len() > 1 { profile[1] - profile[0] } else { 0.0 };
    Ok(StationaryCoefficients { a, b: profile[0] - a, profile })
}

/// The printed closed form (a_N, b_N); `None` when N^θ = λ^ℓ.
pub fn stationary_closed_form(p: &ModelParams) -> Option<(f64, f64)> {
    let nt = p.nf().powf(p.theta);
    let (ll, lr, n) = (p.lambda_l, p.lambda_r, p.nf());
    if (nt - ll).abs() < 1e-14 * nt.max(1.0) {
        return None;
    }
    let b = (lr * p.rho_r * (nt - ll) + ll * p.rho_l * (nt + (n - 1.0) * lr))
        / (ll * lr * (n - 1.0) + ll * nt + lr * (nt - ll));
    let a = ll * (b - p.rho_l) / (nt - ll);
    Some((a, b))
}

/// Transition kernel of the absorbed one-dimensional walk with generator N²Δ_N^i.
#[derive(Clone, Debug)]
pub struct Kernel1d {
    /// Decay rates, ascending.
    pub rates: Vec<f64>,
    /// Orthonormal eigenvectors as columns.
    pub modes: DMatrix<f64>,
}

impl Kernel1d {
    pub fn new(p: &ModelParams) -> Self {
        let e = sym_eigen(density_matrix(p).to_dense());
        let m = e.values.len();
        let mut rates: Vec<f64> = e.values.iter().map(|v| -v).collect();
        let mut modes = e.vectors;
        // ascending decay rate
        rates.reverse();
        let cols: Vec<_> = (0..m).rev().map(|k| modes.column(k).clone_owned()).collect();
        for (c, col) in cols.into_iter().enumerate() {
            modes.set_column(c, &col);
        }
        Self { rates, modes }
    }

    pub fn dim(&self) -> usize {
        self.rates.len()
    }

    fn weighted(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let m = self.dim();
        let d: Vec<f64> = self.rates.iter().map(|&r| f(r)).collect();
        let mut out = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in i..m {
                let s: f64 = (0..m).map(|k| self.modes[(i, k)] * d[k] * self.modes[(j, k)]).sum();
                out[(i, j)] = s;
                out[(j, i)] = s;
            }
        }
        out
    }

    /// P_t as an (N−1)×(N−1) matrix indexed by (x−1, y−1).
    pub fn transition(&self, t: f64) -> DMatrix<f64> {
        self.weighted(|r| (-r * t).exp())
    }

    /// ∫_0^τ P_s ds
    pub fn integral(&self, tau: f64) -> DMatrix<f64> {
        self.weighted(|r| -(-r * tau).exp_m1() / r)
    }

    pub fn entry(&self, x: usize, y: usize, t: f64) -> f64 {
        (0..self.dim()).map(|k| (-self.rates[k] * t).exp() * self.modes[(x - 1, k)] * self.modes[(y - 1, k)]).sum()
    }
}

/// Exact solution of the density equation via the kernel eigenbasis.
#[derive(Clone, Debug)]
pub struct DensitySolver {
    pub p: ModelParams,
    pub kernel: Kernel1d,
    stationary: Vec<f64>,
    coef: Vec<f64>,
}

impl DensitySolver {
    pub fn new(p: &ModelParams, rho0: &[f64]) -> Result<Self> {
        p.validate()?;
        if rho0.len() != p.sites() {
            return domain(format!("initial density has {} entries, expected {}", rho0.len(), p.sites()));
        }
        if rho0.iter().any(|&r| !(0.0..=p.a()).contains(&r)) {
            return domain("initial density outside [0, alpha]");
        }
        let kernel = Kernel1d::new(p);
        let stationary = stationary_profile(p)?.profile;
        let m = p.sites();
        let coef = (0..m).map(|k| (0..m).map(|i| kernel.modes[(i, k)] * (rho0[i] - stationary[i])).sum()).collect();
        Ok(Self { p: p.clone(), kernel, stationary, coef })
    }

    pub fn stationary(&self) -> &[f64] {
        &self.stationary
    }

    /// ρ_t at the interior sites.
    pub fn at(&self, t: f64) -> Vec<f64> {
        let m = self.p.sites();
        let e: Vec<f64> = (0..m).map(|k| self.coef[k] * (-self.kernel.rates[k] * t).exp()).collect();
        (0..m).map(|i| self.stationary[i] + (0..m).map(|k| self.kernel.modes[(i, k)] * e[k]).sum::<f64>()).collect()
    }

    pub fn profile(&self, t: f64) -> DensityProfile {
        DensityProfile::from_interior(&self.p, t, &self.at(t))
    }

    /// ∫_a^b ρ_s ds at the interior sites.
    pub fn integral(&self, a: f64, b: f64) -> Vec<f64> {
        let m = self.p.sites();
        let e: Vec<f64> = (0..m)
            .map(|k| {
                let r = self.kernel.rates[k];
                self.coef[k] * ((-r * a).exp() - (-r * b).exp()) / r
            })
            .collect();
        (0..m)
            .map(|i| self.stationary[i] * (b - a) + (0..m).map(|k| self.kernel.modes[(i, k)] * e[k]).sum::<f64>())
            .collect()
    }
}

pub fn evolve_density(rho0: &DensityProfile, t: f64, p: &ModelParams) -> Result<DensityProfile> {
    if t < 0.0 {
        return domain("negative time");
    }
    let s = DensitySolver::new(p, rho0.interior())?;
    let mut out = s.profile(rho0.time + t);
    out.values[1..p.n].copy_from_slice(&s.at(t));
    Ok(out)
}

/// Index set V_N of the correlation triangle, packed row-major over x ≤ y.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleLattice {
    pub n: usize,
    pub diag: bool,
    offsets: Vec<usize>,
    len: usize,
}

impl TriangleLattice {
    pub fn new(n: usize, alpha: u32) -> Self {
        let diag = alpha >= 2;
        let mut offsets = vec![0; n + 1];
        let mut len = 0;
        for x in 1..n {
            offsets[x] = len;
            len += if diag { n - x } else { n - 1 - x };
        }
        offsets[n] = len;
        Self { n, diag, offsets, len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of (x, y) in either order; `None` on ∂V_N or an absent diagonal.
    pub fn index(&self, x: usize, y: usize) -> Option<usize> {
        let (x, y) = if x <= y { (x, y) } else { (y, x) };
        if x == 0 || y >= self.n || (x == y && !self.diag) {
            return None;
        }
        let first = if self.diag { x } else { x + 1 };
        Some(self.offsets[x] + y - first)
    }

    pub fn points(&self) -> Vec<(usize, usize)> {
        let mut v = Vec::with_capacity(self.len);
        for x in 1..self.n {
            let first = if self.diag { x } else { x + 1 };
            for y in first..self.n {
                v.push((x, y));
            }
        }
        v
    }

    /// Indices of D_N^+, ordered by x = 1..N−2.
    pub fn upper(&self) -> Vec<usize> {
        (1..self.n - 1).map(|x| self.index(x, x + 1).unwrap()).collect()
    }

    /// Reversibility weights: 1 off the diagonal, (α−1)/(2α) on it.
    pub fn weights(&self, alpha: u32) -> Vec<f64> {
        let a = alpha as f64;
        self.points().iter().map(|&(x, y)| if x == y { (a - 1.0) / (2.0 * a) } else { 1.0 }).collect()
    }
}

/// Moves of the two-particle walk from (x, y), with targets possibly on ∂V_N.
pub fn triangle_moves(p: &ModelParams, x: usize, y: usize) -> Vec<((usize, usize), f64)> {
    let n = p.n;
    let a = p.a();
    let left = |x: usize| if x == 1 { p.bond_left() } else { a };
    let right = |y: usize| if y == n - 1 { p.bond_right() } else { a };
    let mut m = Vec::with_capacity(4);
    if x == y {
        m.push(((x - 1, x), 2.0 * left(x)));
        m.push(((x, x + 1), 2.0 * right(x)));
    } else if y == x + 1 {
        m.push(((x - 1, y), left(x)));
        m.push(((x, y + 1), right(y)));
        if p.alpha >= 2 {
            m.push(((x, x), a - 1.0));
            m.push(((y, y), a - 1.0));
        }
    } else {
        m.push(((x - 1, y), left(x)));
        m.push(((x + 1, y), a));
        m.push(((x, y - 1), a));
        m.push(((x, y + 1), right(y)));
    }
    m
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Walk {
    /// Killed on ∂V_N.
    Absorbed,
    /// Moves into ∂V_N suppressed.
    Reflected,
}

/// N²Δ_N^i (or the reflected generator) on the triangle.
pub fn triangle_operator(p: &ModelParams, lat: &TriangleLattice, walk: Walk) -> SparseMatrix {
    let n2 = p.nf() * p.nf();
    let rows = lat
        .points()
        .iter()
        .enumerate()
        .map(|(i, &(x, y))| {
            let mut row = Vec::with_capacity(5);
            let mut out = 0.0;
            for ((u, v), r) in triangle_moves(p, x, y) {
                match lat.index(u, v) {
                    Some(j) => {
                        row.push((j, n2 * r));
                        out += n2 * r;
                    }
                    None if walk == Walk::Absorbed => out += n2 * r,
                    None => {}
                }
            }
            row.push((i, -out));
            row
        })
        .collect();
    SparseMatrix::from_rows(rows)
}

/// Killing rate of the absorbed walk, as the non-positive potential −N²·rate.
pub fn killing_potential(p: &ModelParams, lat: &TriangleLattice) -> Vec<f64> {
    let n2 = p.nf() * p.nf();
    lat.points()
        .iter()
        .map(|&(x, y)| {
            -n2 * triangle_moves(p, x, y)
                .iter()
                .filter(|((u, v), _)| lat.index(*u, *v).is_none())
                .map(|(_, r)| r)
                .sum::<f64>()
        })
        .collect()
}

/// Extended two-point function on V̄_N.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationField {
    pub time: f64,
    pub lattice: TriangleLattice,
    pub values: Vec<f64>,
}

impl CorrelationField {
    pub fn zeros(p: &ModelParams, time: f64) -> Self {
        let lattice = TriangleLattice::new(p.n, p.alpha);
        let values = vec![0.0; lattice.len()];
        Self { time, lattice, values }
    }

    /// Value at (x, y) in either order, 0 on ∂V_N.
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.lattice.index(x, y).map_or(0.0, |i| self.values[i])
    }

    pub fn from_moments(m: &ExactMoments, p: &ModelParams, time: f64) -> Result<Self> {
        let mut f = Self::zeros(p, time);
        for (i, (x, y)) in f.lattice.points().into_iter().enumerate() {
            f.values[i] = m.phi(x, y)?;
        }
        Ok(f)
    }

    pub fn max_abs(&self, pred: impl Fn(usize, usize) -> bool) -> f64 {
        self.lattice
            .points()
            .iter()
            .zip(&self.values)
            .filter(|((x, y), _)| pred(*x, *y))
            .fold(0.0, |m, (_, v)| m.max(v.abs()))
    }
}

/// g(x, x+1) = −(N(ρ(x+1) − ρ(x)))², indexed by x−1 for x = 1..N−2.
pub fn correlation_source(rho: &DensityProfile) -> Vec<f64> {
    let n = rho.n();
    let nf = n as f64;
    (1..n - 1).map(|x| -(nf * (rho.values[x + 1] - rho.values[x])).powi(2)).collect()
}

/// Δ_N^i φ on the triangle (unaccelerated).
pub fn correlation_generator_apply(phi: &CorrelationField, p: &ModelParams) -> Result<CorrelationField> {
    if phi.lattice != TriangleLattice::new(p.n, p.alpha) {
        return domain("field lattice does not match the parameters");
    }
    let op = triangle_operator(p, &phi.lattice, Walk::Absorbed);
    let n2 = p.nf() * p.nf();
    let values = op.apply(&phi.values).iter().map(|v| v / n2).collect();
    Ok(CorrelationField { time: phi.time, lattice: phi.lattice.clone(), values })
}

/// Source of the correlation equation driven by an exact density solution.
pub struct GradientSource<'a> {
    rho: &'a DensitySolver,
    upper: Vec<usize>,
}

impl<'a> GradientSource<'a> {
    pub fn new(rho: &'a DensitySolver, lat: &TriangleLattice) -> Self {
        Self { rho, upper: lat.upper() }
    }
}

impl Source for GradientSource<'_> {
    fn eval(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let r = self.rho.at(t);
        let n2 = self.rho.p.nf().powi(2);
        for (x, &i) in self.upper.iter().enumerate() {
            out[i] = -n2 * (r[x + 1] - r[x]).powi(2);
        }
    }

    fn exp_sum(&self) -> Option<ExpSum> {
        let s = self.rho;
        let n2 = s.p.nf().powi(2);
        let m = s.p.sites();
        let ss = s.stationary();
        let d0: Vec<f64> = (0..m - 1).map(|x| ss[x + 1] - ss[x]).collect();
        let dk: Vec<Vec<f64>> = (0..m)
            .map(|k| (0..m - 1).map(|x| s.coef[k] * (s.kernel.modes[(x + 1, k)] - s.kernel.modes[(x, k)])).collect())
            .collect();
        let sparse = |f: &dyn Fn(usize) -> f64| -> Vec<(usize, f64)> {
            self.upper.iter().enumerate().map(|(x, &i)| (i, f(x))).filter(|e| e.1 != 0.0).collect()
        };
        let mut terms = vec![(0.0, sparse(&|x| -n2 * d0[x] * d0[x]))];
        let rates = &s.kernel.rates;
        for k in 0..m {
            if s.coef[k] == 0.0 {
                continue;
            }
            terms.push((rates[k], sparse(&|x| -2.0 * n2 * d0[x] * dk[k][x])));
            for l in k..m {
                if s.coef[l] == 0.0 {
                    continue;
                }
                let c = if k == l { 1.0 } else { 2.0 };
                terms.push((rates[k] + rates[l], sparse(&|x| -c * n2 * dk[k][x] * dk[l][x])));
            }
        }
        terms.retain(|(_, v)| !v.is_empty());
        Some(ExpSum { terms })
    }
}

/// φ at each of `times`, started from `phi0` at time 0 along the density path `rho`.
pub fn evolve_correlation(
    phi0: &CorrelationField,
    rho: &DensitySolver,
    times: &[f64],
    integrator: Option<&str>,
) -> Result<Vec<CorrelationField>> {
    let p = &rho.p;
    let lat = TriangleLattice::new(p.n, p.alpha);
    if phi0.lattice != lat {
        return domain("initial field lattice does not match the parameters (alpha = 1 carries no diagonal)");
    }
    let op = triangle_operator(p, &lat, Walk::Absorbed);
    let w = lat.weights(p.alpha);
    let src = GradientSource::new(rho, &lat);
    let prob = LinearProblem { op: &op, weights: Some(&w), source: &src };
    let solver = ode::resolve(integrator, lat.len())?;
    let sols = solver.solve(&prob, &phi0.values, times)?;
    Ok(sols
        .into_iter()
        .zip(times)
        .map(|(values, &t)| CorrelationField { time: t, lattice: lat.clone(), values })
        .collect())
}

/// Var η(x) from the extended diagonal value.
pub fn variance_from_extended(phi_diag: f64, rho: f64, alpha: u32) -> f64 {
    let a = alpha as f64;
    let chi = rho * (a - rho);
    if alpha == 1 {
        return chi;
    }
    chi / a + (a - 1.0) / a * phi_diag
}

/// Equal-time covariance matrix E[η̄(x)η̄(z)] with the true variance on the diagonal.
pub fn equal_time_covariance(phi: &CorrelationField, rho: &[f64], alpha: u32) -> DMatrix<f64> {
    let m = rho.len();
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            variance_from_extended(phi.get(i + 1, i + 1), rho[i], alpha)
        } else {
            phi.get(i + 1, j + 1)
        }
    })
}

/// E[η̄_v(x) η̄_r(y)] from the equal-time covariance at time v.
pub fn two_time_correlation(cov_v: &DMatrix<f64>, v: f64, r: f64, kernel: &Kernel1d) -> Result<DMatrix<f64>> {
    if r < v {
        return domain(format!("second time {r} precedes first time {v}"));
    }
    if r == v {
        return Ok(cov_v.clone());
    }
    Ok(cov_v * kernel.transition(r - v))
}

/// g_N(x/N) at the interior sites for g_N = ρ̄_{μ_N} + f.
pub fn admissible_initial_profile(f: &dyn Fn(f64) -> f64, p: &ModelParams) -> Result<Vec<f64>> {
    if f(0.0).abs() > 1e-14 || f(1.0).abs() > 1e-14 {
        return domain("perturbation must vanish at the boundary");
    }
    if p.lambda_l != p.lambda_r {
        return domain("the closed Robin profile needs lambda_l = lambda_r");
    }
    let n = p.nf();
    let lam = p.lambda_l;
    let denom = n.powf(p.theta) - lam;
    let base: Vec<f64> = if denom.abs() < 1e-12 {
        stationary_profile(p)?.profile
    } else {
        let mu = n * lam / denom;
        (1..p.n)
            .map(|x| {
                let u = x as f64 / n;
                (p.rho_r + p.rho_l * (1.0 + mu)) / (2.0 + mu) + mu * (p.rho_r - p.rho_l) * u / (2.0 + mu)
            })
            .collect()
    };
    let g: Vec<f64> = base.iter().enumerate().map(|(i, b)| b + f((i + 1) as f64 / n)).collect();
    if g.iter().any(|&v| !(0.0..=p.a()).contains(&v)) {
        return domain("admissible profile leaves [0, alpha]");
    }
    Ok(g)
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisReport {
    /// max_{x≠y} |φ_0(x,y)|
    pub max_offdiag: f64,
    /// max over bulk x of |E[αη(η−1) − (α−1)ρ²]|
    pub max_diag_deviation: f64,
    /// max_{y≠x} |φ_0(x,y)| over x ∈ {1, N−1}
    pub boundary_offdiag: f64,
    pub boundary_diag_deviation: f64,
    /// The same four quantities divided by their allowed scale.
    pub scaled: [f64; 4],
}

pub fn hypothesis_check(m: &ExactMoments, p: &ModelParams) -> Result<HypothesisReport> {
    let n = p.n;
    let a = p.a();
    let mut r = HypothesisReport {
        max_offdiag: 0.0,
        max_diag_deviation: 0.0,
        boundary_offdiag: 0.0,
        boundary_diag_deviation: 0.0,
        scaled: [0.0; 4],
    };
    for x in 1..n {
        for y in 1..n {
            if x == y {
                continue;
            }
            let v = m.phi(x, y)?.abs();
            r.max_offdiag = r.max_offdiag.max(v);
            if x == 1 || x == n - 1 {
                r.boundary_offdiag = r.boundary_offdiag.max(v);
            }
        }
        let rho = m.density[x - 1];
        let dev = (a * m.factorial[x - 1] - (a - 1.0) * rho * rho).abs();
        if x == 1 || x == n - 1 {
            r.boundary_diag_deviation = r.boundary_diag_deviation.max(dev);
        } else {
            r.max_diag_deviation = r.max_diag_deviation.max(dev);
        }
    }
    let nf = p.nf();
    let bulk = 1.0 / nf;
    let bnd = (1.0 / nf) * nf.powf(p.theta - 1.0).min(1.0);
    r.scaled =
        [r.max_offdiag / bulk, r.max_diag_deviation / bulk, r.boundary_offdiag / bnd, r.boundary_diag_deviation / bnd];
    Ok(r)
}

/// χ_α(ρ)/α, the equilibrium site variance.
pub fn equilibrium_variance(rho: f64, alpha: u32) -> f64 {
    mobility(rho, alpha).unwrap_or(0.0) / alpha as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{build_generator, exact_moments, DEFAULT_STATE_CAP};

    fn params(alpha: u32, n: usize, theta: f64) -> ModelParams {
        ModelParams::new(alpha, 0.8, 0.5, 0.2 * alpha as f64, 0.7 * alpha as f64, theta, n).unwrap()
    }

    #[test]
    fn generator_examples() {
        let p = ModelParams::new(1, 1.0, 1.0, 0.2, 0.7, 0.0, 6).unwrap();
        let lin = DensityProfile { time: 0.0, values: (0..=6).map(|x| 0.1 + 0.05 * x as f64).collect() };
        assert!(density_generator_apply(&lin, &p).iter().all(|v| v.abs() < 1e-15));
        let p = ModelParams::new(1, 1.0, 1.0, 0.5, 0.5, 1.0, 5).unwrap();
        let mut vals: Vec<f64> = (0..=5).map(|x| x as f64 / 13.0 + 4.0 / 13.0).collect();
        vals[0] = 0.0;
        vals[5] = 1.0;
        let lp = density_generator_apply(&DensityProfile { time: 0.0, values: vals }, &p);
        assert!(lp[0].abs() < 1e-15 && lp[3].abs() < 1e-15);
    }

    #[test]
    fn stationary_examples() {
        let p = ModelParams::new(1, 1.0, 1.0, 1e-9, 1.0 - 1e-9, 1.0, 5).unwrap();
        let s = stationary_profile(&p).unwrap();
        assert!((s.b - 4.0 / 13.0).abs() < 1e-8 && (s.a - 1.0 / 13.0).abs() < 1e-8);
        let p = params(2, 9, 0.4);
        let s = stationary_profile(&p).unwrap();
        let (a, b) = stationary_closed_form(&p).unwrap();
        assert!((s.a - a).abs() < 1e-10 && (s.b - b).abs() < 1e-10);
        let lp = density_generator_apply(&DensityProfile::from_interior(&p, 0.0, &s.profile), &p);
        assert!(lp.iter().all(|v| v.abs() < 1e-10));
        let p = ModelParams::new(1, 1.0, 1.0, 0.2, 0.6, 0.0, 8).unwrap();
        assert!(stationary_closed_form(&p).is_none());
        let s = stationary_profile(&p).unwrap();
        for x in 1..8 {
            assert!((s.profile[x - 1] - (0.2 + 0.4 * x as f64 / 8.0)).abs() < 1e-12);
        }
        let p = ModelParams::new(2, 0.3, 0.3, 0.8, 0.8, -1.0, 8).unwrap();
        let s = stationary_profile(&p).unwrap();
        assert!(s.a.abs() < 1e-14 && (s.b - 0.8).abs() < 1e-14);
    }

    #[test]
    fn density_long_time_and_constant() {
        let p = params(2, 10, -0.5);
        let d = DensitySolver::new(&p, &vec![1.9; 9]).unwrap();
        let late = d.at(50.0);
        let ss = stationary_profile(&p).unwrap().profile;
        assert!(late.iter().zip(&ss).all(|(a, b)| (a - b).abs() < 1e-8));
        let mut q = p.clone();
        q.rho_r = q.rho_l;
        let d = DensitySolver::new(&q, &vec![q.rho_l; 9]).unwrap();
        assert!(d.at(0.3).iter().all(|v| (v - q.rho_l).abs() < 1e-12));
    }

    #[test]
    fn density_integral_matches_quadrature() {
        let p = params(2, 7, 0.0);
        let d = DensitySolver::new(&p, &[0.1, 1.9, 0.4, 1.2, 1.0, 0.0]).unwrap();
        let exact = d.integral(0.01, 0.3);
        let q = crate::linalg::composite_gl(0.01, 0.3, 40, 10);
        for i in 0..6 {
            let s: f64 = q.iter().map(|(t, w)| w * d.at(*t)[i]).sum();
            assert!((s - exact[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn lattice_indexing() {
        let l = TriangleLattice::new(6, 2);
        assert_eq!(l.len(), 15);
        for (i, (x, y)) in l.points().into_iter().enumerate() {
            assert_eq!(l.index(x, y), Some(i));
            assert_eq!(l.index(y, x), Some(i));
        }
        assert_eq!(l.index(0, 3), None);
        assert_eq!(l.index(2, 6), None);
        let l1 = TriangleLattice::new(6, 1);
        assert_eq!(l1.len(), 10);
        assert_eq!(l1.index(2, 2), None);
    }

    #[test]
    fn source_examples() {
        let p = params(2, 8, 0.0);
        let s = stationary_profile(&p).unwrap();
        let prof = DensityProfile::from_interior(&p, 0.0, &s.profile);
        let g = correlation_source(&prof);
        let expect = -(8.0 * s.a).powi(2);
        assert!(g.iter().all(|v| (v - expect).abs() < 1e-10));
        let flat = DensityProfile { time: 0.0, values: vec![0.7; 9] };
        assert!(correlation_source(&flat).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn exp_sum_source_matches_pointwise() {
        let p = params(3, 7, 0.3);
        let d = DensitySolver::new(&p, &[3.0, 0.0, 2.0, 1.0, 0.5, 2.5]).unwrap();
        let lat = TriangleLattice::new(7, 3);
        let src = GradientSource::new(&d, &lat);
        let es = src.exp_sum().unwrap();
        let mut a = vec![0.0; lat.len()];
        let mut b = vec![0.0; lat.len()];
        for t in [0.0, 0.003, 0.1] {
            src.eval(t, &mut a);
            es.eval(t, &mut b);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() < 1e-9 * (1.0 + x.abs()), "{x} {y}");
            }
        }
    }

    fn oracle_phi(p: &ModelParams, profile: &[f64], t: f64) -> (Vec<f64>, CorrelationField) {
        let g = build_generator(p, DEFAULT_STATE_CAP).unwrap();
        let p0 = g.space.product_measure(profile);
        let pt = g.evolve_distribution(&p0, t).unwrap();
        let m = exact_moments(&g.space, &pt).unwrap();
        (m.density.clone(), CorrelationField::from_moments(&m, p, t).unwrap())
    }

    #[test]
    fn closure_against_oracle() {
        for alpha in 1..=3 {
            for theta in [-1.0, 0.0, 1.0, 2.0] {
                let p = params(alpha, 4, theta);
                let a = alpha as f64;
                let prof = [0.9 * a, 0.1 * a, 0.5 * a];
                let d = DensitySolver::new(&p, &prof).unwrap();
                let phi0 = CorrelationField::zeros(&p, 0.0);
                let times = [0.05, 0.5];
                let sol = evolve_correlation(&phi0, &d, &times, Some("modal")).unwrap();
                for (k, &t) in times.iter().enumerate() {
                    let (rho, phi) = oracle_phi(&p, &prof, t);
                    let r = d.at(t);
                    for i in 0..3 {
                        assert!((rho[i] - r[i]).abs() < 1e-8);
                    }
                    for (u, v) in phi.values.iter().zip(&sol[k].values) {
                        assert!((u - v).abs() < 1e-8, "alpha {alpha} theta {theta} t {t}: {u} vs {v}");
                    }
                }
            }
        }
    }

    #[test]
    fn operator_matches_oracle_time_derivative() {
        let p = params(2, 4, 0.5);
        let g = build_generator(&p, DEFAULT_STATE_CAP).unwrap();
        let prof = [1.6, 0.3, 1.1];
        let p0 = g.space.product_measure(&prof);
        let t = 0.02;
        let h = 1e-5;
        let phi_at = |s: f64| {
            let m = exact_moments(&g.space, &g.evolve_distribution(&p0, s).unwrap()).unwrap();
            (CorrelationField::from_moments(&m, &p, s).unwrap(), m.density)
        };
        let (f_minus, _) = phi_at(t - h);
        let (f_plus, _) = phi_at(t + h);
        let (f0, rho) = phi_at(t);
        let lf = correlation_generator_apply(&f0, &p).unwrap();
        let prof_t = DensityProfile::from_interior(&p, t, &rho);
        let src = correlation_source(&prof_t);
        let n2 = 16.0;
        for (i, (x, y)) in f0.lattice.points().into_iter().enumerate() {
            let dt = (f_plus.values[i] - f_minus.values[i]) / (2.0 * h);
            let mut rhs = n2 * lf.values[i];
            if y == x + 1 {
                rhs += src[x - 1];
            }
            assert!((dt - rhs).abs() < 1e-6 * (1.0 + dt.abs()), "({x},{y}) {dt} {rhs}");
        }
    }

    #[test]
    fn trbdf2_close_to_modal() {
        let p = params(2, 12, 0.5);
        let prof: Vec<f64> = (1..12).map(|x| 1.0 + 0.8 * (x as f64 * 0.9).sin()).collect();
        let d = DensitySolver::new(&p, &prof).unwrap();
        let phi0 = CorrelationField::zeros(&p, 0.0);
        let times = [0.02, 0.2];
        let a = evolve_correlation(&phi0, &d, &times, Some("modal")).unwrap();
        let b = evolve_correlation(&phi0, &d, &times, Some("tr-bdf2")).unwrap();
        for (u, v) in a.iter().zip(&b) {
            let scale = u.max_abs(|_, _| true);
            for (x, y) in u.values.iter().zip(&v.values) {
                assert!((x - y).abs() < 1e-4 * scale, "{} {x} {y} {scale}", u.time);
            }
        }
    }

    #[test]
    fn nonpositive_data_stay_nonpositive_and_equilibrium_stays_zero() {
        let p = params(2, 10, 0.0);
        let prof: Vec<f64> = (1..10).map(|x| 0.2 + 0.15 * x as f64).collect();
        let d = DensitySolver::new(&p, &prof).unwrap();
        let mut phi0 = CorrelationField::zeros(&p, 0.0);
        phi0.values.iter_mut().enumerate().for_each(|(i, v)| *v = -((i % 3) as f64) * 0.01);
        for f in evolve_correlation(&phi0, &d, &[0.01, 0.1, 0.5], None).unwrap() {
            assert!(f.values.iter().all(|v| *v <= 1e-13));
        }
        let mut q = p.clone();
        q.rho_r = q.rho_l;
        let d = DensitySolver::new(&q, &vec![q.rho_l; 9]).unwrap();
        let phi = evolve_correlation(&CorrelationField::zeros(&q, 0.0), &d, &[0.3], None).unwrap();
        assert!(phi[0].max_abs(|_, _| true) < 1e-13);
        let p1 = params(1, 10, 0.0);
        assert!(evolve_correlation(
            &CorrelationField::zeros(&p, 0.0),
            &DensitySolver::new(&p1, &vec![0.5; 9]).unwrap(),
            &[0.1],
            None
        )
        .is_err());
    }

    #[test]
    fn variance_examples() {
        assert!((variance_from_extended(0.3, 0.4, 1) - 0.24).abs() < 1e-15);
        assert!((variance_from_extended(0.0, 1.3, 3) - 1.3 * 1.7 / 3.0).abs() < 1e-15);
        assert!((variance_from_extended(1.0, 1.0, 2) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_time_against_oracle() {
        let p = params(2, 4, 0.0);
        let prof = [1.8, 0.4, 1.0];
        let g = build_generator(&p, DEFAULT_STATE_CAP).unwrap();
        let p0 = g.space.product_measure(&prof);
        let d = DensitySolver::new(&p, &prof).unwrap();
        let (v, r) = (0.04, 0.09);
        let phi_v = &evolve_correlation(&CorrelationField::zeros(&p, 0.0), &d, &[v], None).unwrap()[0];
        let cov = equal_time_covariance(phi_v, &d.at(v), 2);
        let tt = two_time_correlation(&cov, v, r, &d.kernel).unwrap();
        let pv = g.evolve_distribution(&p0, v).unwrap();
        let (rv, rr) = (d.at(v), d.at(r));
        for x in 1..4 {
            let e = g.two_time_moments(&pv, x, r - v).unwrap();
            for y in 1..4 {
                let want = e[y - 1] - rv[x - 1] * rr[y - 1];
                assert!((tt[(x - 1, y - 1)] - want).abs() < 1e-7);
            }
        }
        assert!(two_time_correlation(&cov, r, v, &d.kernel).is_err());
    }

    #[test]
    fn admissible_profiles() {
        let p = ModelParams::new(2, 0.7, 0.7, 1.2, 1.2, 0.5, 16).unwrap();
        let g = admissible_initial_profile(&|_| 0.0, &p).unwrap();
        assert!(g.iter().all(|v| (v - 1.2).abs() < 1e-14));
        for k in 4..10 {
            let n = 1usize << k;
            let p = ModelParams::new(2, 0.7, 0.7, 0.4, 1.5, 0.3, n).unwrap();
            let g = admissible_initial_profile(&|_| 0.0, &p).unwrap();
            let ss = stationary_profile(&p).unwrap().profile;
            let dev = g.iter().zip(&ss).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            assert!(dev * n as f64 <= 1.0);
        }
        let p = ModelParams::new(2, 1.0, 1.0, 0.4, 1.5, 0.0, 16).unwrap();
        let g = admissible_initial_profile(&|_| 0.0, &p).unwrap();
        assert!((g[0] - (0.4 + 1.1 / 16.0)).abs() < 1e-12);
    }

    #[test]
    fn hypothesis_examples() {
        let p = params(2, 4, 0.0);
        let g = build_generator(&p, DEFAULT_STATE_CAP).unwrap();
        let m = exact_moments(&g.space, &g.space.product_measure(&[0.5, 1.0, 1.5])).unwrap();
        let r = hypothesis_check(&m, &p).unwrap();
        assert!(r.max_offdiag < 1e-15 && r.max_diag_deviation < 1e-14 && r.boundary_diag_deviation < 1e-14);
        let c = crate::model::Configuration::new(vec![1, 2, 0], 2).unwrap();
        let m = exact_moments(&g.space, &g.space.point_mass(&c)).unwrap();
        let r = hypothesis_check(&m, &p).unwrap();
        assert_eq!(r.max_offdiag, 0.0);
        // site 2 holds 2 particles: α·2·1 − (α−1)·4 = 0
        assert_eq!(r.max_diag_deviation, 0.0);
        // site 1 holds 1 particle: 0 − 1 = −1
        assert_eq!(r.boundary_diag_deviation, 1.0);
    }
}
