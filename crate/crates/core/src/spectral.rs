//! Eigen-expansions of the continuum semigroups and of the reference lattice kernel.

use std::f64::consts::PI;

use crate::error::{domain, Result};
use crate::linalg::{composite_gl, BandedLu, SparseMatrix};
use crate::model::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Dirichlet,
    Robin,
    Neumann,
}

impl Regime {
    pub fn of(theta: f64) -> Self {
        if theta < 1.0 {
            Regime::Dirichlet
        } else if theta == 1.0 {
            Regime::Robin
        } else {
            Regime::Neumann
        }
    }
}

/// (x² − ab) sin x − (a+b) x cos x; its positive zeros are the Robin wavenumbers.
fn robin_defect(x: f64, a: f64, b: f64) -> f64 {
    (x * x - a * b) * x.sin() - (a + b) * x * x.cos()
}

/// First `k` positive roots of tan x = (a+b)x/(x² − ab).
pub fn robin_roots(lambda_l: f64, lambda_r: f64, k: usize) -> Result<Vec<f64>> {
    if !(lambda_l > 0.0 && lambda_l <= 1.0 && lambda_r > 0.0 && lambda_r <= 1.0) {
        return domain("Robin coefficients must lie in (0,1]");
    }
    if k == 0 {
        return domain("need at least one root");
    }
    let (a, b) = (lambda_l, lambda_r);
    let mut roots = Vec::with_capacity(k);
    for j in 0..k {
        let base = j as f64 * PI;
        let (mut lo, mut hi) = if j == 0 { (1e-300, PI / 2.0) } else { (base, base + PI / 2.0) };
        let flo = robin_defect(lo, a, b).signum();
        while hi - lo > 1e-13 * hi.max(1.0) {
            let mid = 0.5 * (lo + hi);
            if robin_defect(mid, a, b).signum() == flo {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        roots.push(0.5 * (lo + hi));
    }
    Ok(roots)
}

/// Truncated eigen-expansion of S_t φ.
#[derive(Clone, Debug)]
pub struct SemigroupExpansion {
    pub regime: Regime,
    pub alpha: f64,
    pub lambda_l: f64,
    /// Wavenumbers; the decay rate of mode k is α·w_k².
    pub wavenumbers: Vec<f64>,
    /// Squared L² norms of the modes.
    pub norms: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl SemigroupExpansion {
    pub fn new(phi: &dyn Fn(f64) -> f64, p: &ModelParams, k: usize) -> Result<Self> {
        Self::with_regime(phi, p, Regime::of(p.theta), k)
    }

    pub fn with_regime(phi: &dyn Fn(f64) -> f64, p: &ModelParams, regime: Regime, k: usize) -> Result<Self> {
        if k == 0 {
            return domain("mode count must be positive");
        }
        let wavenumbers: Vec<f64> = match regime {
            Regime::Dirichlet => (1..=k).map(|j| j as f64 * PI).collect(),
            Regime::Neumann => (0..k).map(|j| j as f64 * PI).collect(),
            Regime::Robin => robin_roots(p.lambda_l, p.lambda_r, k)?,
        };
        let mut s = Self {
            regime,
            alpha: p.a(),
            lambda_l: p.lambda_l,
            wavenumbers,
            norms: vec![0.0; k],
            coefficients: vec![0.0; k],
        };
        let q = composite_gl(0.0, 1.0, (4 * k).max(64), 8);
        let fv: Vec<f64> = q.iter().map(|(u, _)| phi(*u)).collect();
        for j in 0..k {
            let (mut ip, mut nn) = (0.0, 0.0);
            for ((u, w), f) in q.iter().zip(&fv) {
                let m = s.mode(j, *u);
                ip += w * m * f;
                nn += w * m * m;
            }
            s.norms[j] = nn;
            s.coefficients[j] = ip / nn;
        }
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    pub fn mode(&self, j: usize, u: f64) -> f64 {
        let w = self.wavenumbers[j];
        match self.regime {
            Regime::Dirichlet => (w * u).sin(),
            Regime::Neumann => (w * u).cos(),
            Regime::Robin => self.lambda_l / w * (w * u).sin() + (w * u).cos(),
        }
    }

    pub fn mode_deriv(&self, j: usize, u: f64) -> f64 {
        let w = self.wavenumbers[j];
        match self.regime {
            Regime::Dirichlet => w * (w * u).cos(),
            Regime::Neumann => -w * (w * u).sin(),
            Regime::Robin => self.lambda_l * (w * u).cos() - w * (w * u).sin(),
        }
    }

    fn decay(&self, j: usize, t: f64) -> f64 {
        (-self.alpha * self.wavenumbers[j].powi(2) * t).exp()
    }

    pub fn eval(&self, t: f64, u: f64) -> f64 {
        (0..self.len()).map(|j| self.coefficients[j] * self.decay(j, t) * self.mode(j, u)).sum()
    }

    pub fn deriv(&self, t: f64, u: f64) -> f64 {
        (0..self.len()).map(|j| self.coefficients[j] * self.decay(j, t) * self.mode_deriv(j, u)).sum()
    }

    /// Expansion of S_t φ itself.
    pub fn advanced(&self, t: f64) -> Self {
        let mut s = self.clone();
        for j in 0..s.len() {
            s.coefficients[j] *= self.decay(j, t);
        }
        s
    }
}

/// Mode count for which the dropped tail is below ~1e−12 at time t.
pub fn adaptive_modes(alpha: f64, t: f64) -> usize {
    let k = ((12.0 * 10f64.ln()) / (alpha * PI * PI * t)).sqrt().ceil() as usize + 4;
    k.clamp(16, 4096)
}

/// S_t φ on `grid`.
pub fn semigroup_apply(phi: &dyn Fn(f64) -> f64, t: f64, p: &ModelParams, grid: &[f64]) -> Result<Vec<f64>> {
    if t < 0.0 {
        return domain("negative time");
    }
    if t == 0.0 {
        return Ok(grid.iter().map(|&u| phi(u)).collect());
    }
    if t < 1e-6 {
        let m = 4096;
        let v = crank_nicolson(phi, t, p, Regime::of(p.theta), m, 64)?;
        return Ok(grid
            .iter()
            .map(|&u| {
                let s = (u * m as f64).clamp(0.0, m as f64 - 1e-9);
                let i = s.floor() as usize;
                let f = s - i as f64;
                v[i] * (1.0 - f) + v[(i + 1).min(m)] * f
            })
            .collect());
    }
    let e = SemigroupExpansion::new(phi, p, adaptive_modes(p.a(), t))?;
    Ok(grid.iter().map(|&u| e.eval(t, u)).collect())
}

/// Crank–Nicolson solve of ∂_t ρ = αΔρ on `m` intervals with the regime's homogeneous
/// boundary conditions; returns the values at the nodes i/m.
pub fn crank_nicolson(
    phi: &dyn Fn(f64) -> f64,
    t: f64,
    p: &ModelParams,
    regime: Regime,
    m: usize,
    steps: usize,
) -> Result<Vec<f64>> {
    if m < 2 || steps == 0 {
        return domain("grid needs at least two intervals and one step");
    }
    let h = 1.0 / m as f64;
    let c = p.a() / (h * h);
    // ghost points fold the Robin/Neumann conditions into the end rows
    let (gl, gr) = match regime {
        Regime::Dirichlet => (0.0, 0.0),
        Regime::Neumann => (0.0, 0.0),
        Regime::Robin => (p.lambda_l, p.lambda_r),
    };
    let rows = (0..=m)
        .map(|i| {
            if regime == Regime::Dirichlet && (i == 0 || i == m) {
                return vec![(i, 0.0)];
            }
            if i == 0 {
                vec![(0, -2.0 * c * (1.0 + h * gl)), (1, 2.0 * c)]
            } else if i == m {
                vec![(m, -2.0 * c * (1.0 + h * gr)), (m - 1, 2.0 * c)]
            } else {
                vec![(i - 1, c), (i, -2.0 * c), (i + 1, c)]
            }
        })
        .collect();
    let a = SparseMatrix::from_rows(rows);
    let dt = t / steps as f64;
    let lu = BandedLu::new(&a, 1.0, -0.5 * dt)?;
    let mut u: Vec<f64> = (0..=m).map(|i| phi(i as f64 * h)).collect();
    if regime == Regime::Dirichlet {
        u[0] = 0.0;
        u[m] = 0.0;
    }
    let mut au = vec![0.0; m + 1];
    for _ in 0..steps {
        a.matvec(&u, &mut au);
        for i in 0..=m {
            u[i] += 0.5 * dt * au[i];
        }
        lu.solve_in_place(&mut u);
    }
    Ok(u)
}

/// Eigen-data of N²Δ on Λ_N with absorbing ends and unit rates.
#[derive(Clone, Debug)]
pub struct DiscreteSpectrum {
    pub n: usize,
    /// λ_l = 4N² sin²(πl/2N), l = 1..N−1.
    pub values: Vec<f64>,
}

impl DiscreteSpectrum {
    pub fn new(n: usize) -> Self {
        let nf = n as f64;
        let values = (1..n).map(|l| 4.0 * nf * nf * (PI * l as f64 / (2.0 * nf)).sin().powi(2)).collect();
        Self { n, values }
    }

    /// v_l(x) = sqrt(2/N) sin(πlx/N).
    pub fn vector(&self, l: usize, x: usize) -> f64 {
        let nf = self.n as f64;
        (2.0 / nf).sqrt() * (PI * (l * x) as f64 / nf).sin()
    }
}

/// P̃_t(x, y) for the walk with rate α on every bond.
pub fn discrete_kernel(x: usize, y: usize, t: f64, n: usize, alpha: u32) -> f64 {
    let s = DiscreteSpectrum::new(n);
    kernel_from_spectrum(&s, x, y, t, alpha as f64)
}

fn kernel_from_spectrum(s: &DiscreteSpectrum, x: usize, y: usize, t: f64, a: f64) -> f64 {
    (1..s.n).map(|l| (-a * s.values[l - 1] * t).exp() * s.vector(l, x) * s.vector(l, y)).sum()
}

/// ψ(u) = (e^{−u} − 1 + u)/u².
pub fn psi(u: f64) -> Result<f64> {
    if u < 0.0 || u.is_nan() {
        return domain(format!("psi needs u >= 0, got {u}"));
    }
    if u < 1e-4 {
        return Ok(0.5 - u / 6.0 + u * u / 24.0);
    }
    Ok(((-u).exp_m1() + u) / (u * u))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelIntegrals {
    /// Σ_{x∈W} ∫_0^t∫_0^s P̃_{s−v}(x,x) dv ds
    pub diag: f64,
    /// Σ_{x∈W} ∫_0^t∫_0^s P̃_{s−v}(x,1) dv ds
    pub boundary: f64,
    /// Σ_{x≠z∈W} ∫_0^t∫_0^s P̃_{s−v}(x,z) dv ds
    pub cross: f64,
}

/// Double time integrals of the reference kernel over a window, via t²ψ(αλ_l t).
pub fn kernel_time_integrals(window: &[usize], t: f64, n: usize, alpha: u32) -> Result<KernelIntegrals> {
    if window.iter().any(|&x| x == 0 || x >= n) {
        return domain("window must lie inside 1..N-1");
    }
    if t < 0.0 {
        return domain("negative time");
    }
    let s = DiscreteSpectrum::new(n);
    let a = alpha as f64;
    let mut out = KernelIntegrals { diag: 0.0, boundary: 0.0, cross: 0.0 };
    for l in 1..n {
        let w = t * t * psi(a * s.values[l - 1] * t)?;
        let vs: Vec<f64> = window.iter().map(|&x| s.vector(l, x)).collect();
        let sum: f64 = vs.iter().sum();
        let sq: f64 = vs.iter().map(|v| v * v).sum();
        out.diag += w * sq;
        out.boundary += w * sum * s.vector(l, 1);
        out.cross += w * (sum * sum - sq);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(theta: f64, ll: f64, lr: f64) -> ModelParams {
        ModelParams::new(2, ll, lr, 0.5, 1.5, theta, 16).unwrap()
    }

    #[test]
    fn robin_roots_brackets_and_limits() {
        let r = robin_roots(1.0, 1.0, 6).unwrap();
        assert!(r[0] > 0.0 && r[0] < PI / 2.0);
        for (j, b) in r.iter().enumerate().skip(1) {
            let lo = j as f64 * PI;
            assert!(*b > lo && *b < lo + PI / 2.0);
        }
        // tan x = 2x/(x²−1) has its first root at ≈1.3065
        assert!((r[0] - 1.306_542_374_188_806).abs() < 1e-10);
        assert!(r.windows(2).all(|w| w[1] > w[0]));
        let small = robin_roots(1e-6, 1e-6, 5).unwrap();
        for k in 1..5 {
            assert!((small[k] - k as f64 * PI).abs() < 1e-3);
        }
        for b in &r {
            let d = (robin_defect(b + 1e-6, 1.0, 1.0) - robin_defect(b - 1e-6, 1.0, 1.0)) / 2e-6;
            assert!(d.abs() > 1e-3);
        }
    }

    #[test]
    fn robin_modes_satisfy_boundary_conditions() {
        let p = params(1.0, 0.4, 0.9);
        let e = SemigroupExpansion::new(&|u| u * (1.0 - u), &p, 8).unwrap();
        for j in 0..8 {
            assert!((e.mode_deriv(j, 0.0) - 0.4 * e.mode(j, 0.0)).abs() < 1e-12);
            assert!((e.mode_deriv(j, 1.0) + 0.9 * e.mode(j, 1.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn single_mode_examples() {
        let p = params(0.0, 1.0, 1.0);
        let v = semigroup_apply(&|u| (PI * u).sin(), 0.1, &p, &[0.5]).unwrap();
        assert!((v[0] - (-0.2 * PI * PI).exp()).abs() < 1e-10);
        assert!(((-0.2 * PI * PI).exp() - 0.1389).abs() < 1e-4);
        let p = params(2.0, 1.0, 1.0);
        let v = semigroup_apply(&|u| (PI * u).cos(), 0.03, &p, &[0.2]).unwrap();
        assert!((v[0] - (-PI * PI * 2.0 * 0.03).exp() * (0.2 * PI).cos()).abs() < 1e-10);
        let v = semigroup_apply(&|u| u * u, 0.0, &p, &[0.3]).unwrap();
        assert_eq!(v[0], 0.09);
    }

    fn bump(u: f64) -> f64 {
        (-((u - 0.45) / 0.1).powi(2)).exp()
    }

    #[test]
    fn agrees_with_crank_nicolson() {
        for (theta, regime) in [(0.0, Regime::Dirichlet), (1.0, Regime::Robin), (2.0, Regime::Neumann)] {
            let p = params(theta, 0.6, 0.8);
            let cn = crank_nicolson(&bump, 0.05, &p, regime, 512, 400).unwrap();
            let e = SemigroupExpansion::new(&bump, &p, 64).unwrap();
            let err = (0..=512).map(|i| (cn[i] - e.eval(0.05, i as f64 / 512.0)).abs()).fold(0.0, f64::max);
            assert!(err < 1e-3, "{regime:?} {err}");
        }
    }

    #[test]
    fn semigroup_property() {
        for theta in [0.0, 1.0, 2.0] {
            let p = params(theta, 0.6, 0.8);
            let e = SemigroupExpansion::new(&bump, &p, 64).unwrap();
            let mid = e.advanced(0.01);
            let again = SemigroupExpansion::new(&|u| mid.eval(0.0, u), &p, 64).unwrap();
            for i in 0..=20 {
                let u = i as f64 / 20.0;
                assert!((again.eval(0.02, u) - e.eval(0.03, u)).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn discrete_spectrum_data() {
        let s = DiscreteSpectrum::new(4);
        assert!((s.values[0] - 64.0 * (PI / 8.0).sin().powi(2)).abs() < 1e-12);
        assert!((s.values[0] - 9.3726).abs() < 1e-4);
        assert!((s.vector(1, 2) - 0.5f64.sqrt()).abs() < 1e-15);
        let s = DiscreteSpectrum::new(9);
        for l in 1..9 {
            for m in 1..9 {
                let ip: f64 = (1..9).map(|x| s.vector(l, x) * s.vector(m, x)).sum();
                assert!((ip - if l == m { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        assert!(s.values.windows(2).all(|w| w[1] > w[0]));
        for x in 1..9 {
            for y in 1..9 {
                let k = discrete_kernel(x, y, 0.0, 9, 2);
                assert!((k - if x == y { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn psi_values() {
        assert!((psi(0.0).unwrap() - 0.5).abs() < 1e-15);
        assert!((psi(1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        assert!((psi(1e6).unwrap() * 1e6 - 1.0).abs() < 1e-5);
        assert!((psi(9.9e-5).unwrap() - psi(1.01e-4).unwrap()).abs() < 1e-6);
        assert!(psi(-1.0).is_err());
    }

    #[test]
    fn kernel_integrals_match_quadrature() {
        let n = 32;
        let w: Vec<usize> = (1..=6).collect();
        let t = 0.02;
        let k = kernel_time_integrals(&w, t, n, 2).unwrap();
        let s = DiscreteSpectrum::new(n);
        // ∫_0^t∫_0^s f(s−v) dv ds = ∫_0^t (t−τ) f(τ) dτ
        let q = crate::linalg::composite_gl(0.0, t, 400, 8);
        let mut d = 0.0;
        let mut b = 0.0;
        let mut c = 0.0;
        for (tau, wt) in &q {
            for &x in &w {
                d += wt * (t - tau) * kernel_from_spectrum(&s, x, x, *tau, 2.0);
                b += wt * (t - tau) * kernel_from_spectrum(&s, x, 1, *tau, 2.0);
                for &z in &w {
                    if z != x {
                        c += wt * (t - tau) * kernel_from_spectrum(&s, x, z, *tau, 2.0);
                    }
                }
            }
        }
        assert!((k.diag - d).abs() < 1e-6 && (k.boundary - b).abs() < 1e-6 && (k.cross - c).abs() < 1e-6);
        let z = kernel_time_integrals(&w, 0.0, n, 2).unwrap();
        assert_eq!(z.diag, 0.0);
    }
}
