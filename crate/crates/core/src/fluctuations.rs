//! Density fluctuation fields, Dynkin martingales, the OU covariance and
//! correlation-decay fits.

use std::f64::consts::{E, PI};

use serde::Serialize;

use crate::error::{domain, Result};
use crate::kmc::{
    run_replicas, sample_local_gibbs, simulate, CellIntegrals, Cells, EnsembleEstimate, Many, ReplicaId, Snapshots,
    Trajectory,
};
use nalgebra::DVector;

use crate::linalg::{composite_gl, graded_gl, phi1};
use crate::model::{Configuration, ModelParams};
use crate::moments::{
    admissible_initial_profile, equal_time_covariance, evolve_correlation, CorrelationField, DensityProfile,
    DensitySolver,
};
use crate::spectral::{robin_roots, Regime, SemigroupExpansion};

/// Mollified bump on [a, b] with peak value 1; flat to all orders at a and b.
pub fn bump(a: f64, b: f64, u: f64) -> f64 {
    if u <= a || u >= b {
        return 0.0;
    }
    let s = (2.0 * u - a - b) / (b - a);
    E * (-1.0 / (1.0 - s * s)).exp()
}

fn bump_deriv(a: f64, b: f64, u: f64) -> f64 {
    if u <= a || u >= b {
        return 0.0;
    }
    let s = (2.0 * u - a - b) / (b - a);
    let q = 1.0 - s * s;
    bump(a, b, u) * (-2.0 * s / (q * q)) * 2.0 / (b - a)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Basis {
    /// sin(kπu), k = 1, 2, ...
    Sine,
    /// cos(kπu), k = 0, 1, ...
    Cosine,
    /// (λ^ℓ/β_k) sin β_k u + cos β_k u.
    Robin { lambda_l: f64, lambda_r: f64, wavenumbers: Vec<f64> },
    /// Bumps on the listed supports inside (0, 1).
    Bump { supports: Vec<(f64, f64)> },
}

/// Finite combination of basis functions of one regime.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    pub basis: Basis,
    pub coefficients: Vec<f64>,
}

impl TestFunction {
    pub fn sine(coefficients: Vec<f64>) -> Self {
        Self { basis: Basis::Sine, coefficients }
    }

    pub fn cosine(coefficients: Vec<f64>) -> Self {
        Self { basis: Basis::Cosine, coefficients }
    }

    pub fn robin(lambda_l: f64, lambda_r: f64, coefficients: Vec<f64>) -> Result<Self> {
        let wavenumbers = robin_roots(lambda_l, lambda_r, coefficients.len().max(1))?;
        Ok(Self { basis: Basis::Robin { lambda_l, lambda_r, wavenumbers }, coefficients })
    }

    pub fn bumps(supports: Vec<(f64, f64)>, coefficients: Vec<f64>) -> Result<Self> {
        if supports.len() != coefficients.len() {
            return domain("one coefficient per bump");
        }
        if supports.iter().any(|&(a, b)| !(a > 0.0 && a < b && b < 1.0)) {
            return domain("bump supports must satisfy 0 < a < b < 1");
        }
        Ok(Self { basis: Basis::Bump { supports }, coefficients })
    }

    /// Default member of the class matching θ.
    pub fn for_params(p: &ModelParams) -> Result<Self> {
        if p.theta < 0.0 {
            Self::bumps(vec![(0.15, 0.85)], vec![1.0])
        } else {
            match Regime::of(p.theta) {
                Regime::Dirichlet => Ok(Self::sine(vec![1.0])),
                Regime::Robin => Self::robin(p.lambda_l, p.lambda_r, vec![1.0]),
                Regime::Neumann => Ok(Self::cosine(vec![0.0, 1.0])),
            }
        }
    }

    pub fn regime(&self) -> Regime {
        match self.basis {
            Basis::Sine | Basis::Bump { .. } => Regime::Dirichlet,
            Basis::Cosine => Regime::Neumann,
            Basis::Robin { .. } => Regime::Robin,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.iter().all(|&c| c == 0.0)
    }

    /// k-th derivative of the j-th basis function of a trigonometric family.
    fn trig(&self, j: usize, k: u32, u: f64) -> f64 {
        let shift = k as f64 * PI / 2.0;
        match &self.basis {
            Basis::Sine => {
                let w = (j + 1) as f64 * PI;
                w.powi(k as i32) * (w * u + shift).sin()
            }
            Basis::Cosine => {
                let w = j as f64 * PI;
                if k > 0 && j == 0 {
                    return 0.0;
                }
                w.powi(k as i32) * (w * u + shift).cos()
            }
            Basis::Robin { lambda_l, wavenumbers, .. } => {
                let w = wavenumbers[j];
                w.powi(k as i32) * (lambda_l / w * (w * u + shift).sin() + (w * u + shift).cos())
            }
            Basis::Bump { .. } => unreachable!(),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match &self.basis {
            Basis::Bump { supports } => {
                supports.iter().zip(&self.coefficients).map(|(&(a, b), c)| c * bump(a, b, u)).sum()
            }
            _ => self.coefficients.iter().enumerate().map(|(j, c)| c * self.trig(j, 0, u)).sum(),
        }
    }

    pub fn deriv(&self, u: f64) -> f64 {
        match &self.basis {
            Basis::Bump { supports } => {
                supports.iter().zip(&self.coefficients).map(|(&(a, b), c)| c * bump_deriv(a, b, u)).sum()
            }
            _ => self.coefficients.iter().enumerate().map(|(j, c)| c * self.trig(j, 1, u)).sum(),
        }
    }

    /// k-th derivative at u ∈ {0, 1}.
    pub fn boundary_derivative(&self, k: u32, u: f64) -> f64 {
        match &self.basis {
            // the supports stay away from 0 and 1
            Basis::Bump { .. } => 0.0,
            _ => self.coefficients.iter().enumerate().map(|(j, c)| c * self.trig(j, k, u)).sum(),
        }
    }

    /// Largest boundary-condition residual of the class for θ, checking
    /// derivatives up to `order`. Errors if the basis belongs to another class.
    pub fn membership(&self, p: &ModelParams, order: u32) -> Result<f64> {
        let want = Regime::of(p.theta);
        if self.regime() != want {
            return domain(format!("{:?} test function used in the {want:?} regime", self.regime()));
        }
        let mut worst: f64 = 0.0;
        let ends = [0.0, 1.0];
        if p.theta < 0.0 {
            if !matches!(self.basis, Basis::Bump { .. }) {
                return domain("theta < 0 needs test functions flat at the boundary");
            }
            for k in 0..=order {
                for u in ends {
                    worst = worst.max(self.boundary_derivative(k, u).abs());
                }
            }
            return Ok(worst);
        }
        match &self.basis {
            Basis::Sine | Basis::Bump { .. } => {
                for k in (0..=order).step_by(2) {
                    for u in ends {
                        let scale = PI.powi(k as i32) * self.coefficients.len().pow(k) as f64;
                        worst = worst.max(self.boundary_derivative(k, u).abs() / scale.max(1.0));
                    }
                }
            }
            Basis::Cosine => {
                for k in (1..=order).step_by(2) {
                    for u in ends {
                        let scale = PI.powi(k as i32) * self.coefficients.len().pow(k) as f64;
                        worst = worst.max(self.boundary_derivative(k, u).abs() / scale.max(1.0));
                    }
                }
            }
            Basis::Robin { lambda_l, lambda_r, .. } => {
                if *lambda_l != p.lambda_l || *lambda_r != p.lambda_r {
                    return domain("Robin test function built for other boundary rates");
                }
                let l = self.boundary_derivative(1, 0.0) - lambda_l * self.boundary_derivative(0, 0.0);
                let r = self.boundary_derivative(1, 1.0) + lambda_r * self.boundary_derivative(0, 1.0);
                worst = l.abs().max(r.abs());
            }
        }
        Ok(worst)
    }

    /// Eigen-expansion of S_t f in the function's own regime.
    pub fn semigroup(&self, p: &ModelParams, modes: usize) -> Result<SemigroupExpansion> {
        SemigroupExpansion::with_regime(&|u| self.eval(u), p, self.regime(), modes)
    }

    /// ∇_Nφ(x/N) = N(φ((x+1)/N) − φ(x/N)).
    pub fn grad_n(&self, x: usize, n: usize) -> f64 {
        let nf = n as f64;
        nf * (self.eval((x + 1) as f64 / nf) - self.eval(x as f64 / nf))
    }

    /// Δ_Nφ(x/N) = N²(φ((x+1)/N) + φ((x−1)/N) − 2φ(x/N)).
    pub fn laplacian_n(&self, x: usize, n: usize) -> f64 {
        let nf = n as f64;
        let f = |k: usize| self.eval(k as f64 / nf);
        nf * nf * (f(x + 1) + f(x - 1) - 2.0 * f(x))
    }
}

/// Decay scales R_N^θ, d_N^θ and δ_θ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayRates {
    pub n: usize,
    pub theta: f64,
}

impl DecayRates {
    pub fn new(n: usize, theta: f64) -> Self {
        Self { n, theta }
    }

    /// Exponent e with R_N^θ = N^e.
    pub fn r_exponent(theta: f64) -> f64 {
        if theta > 1.0 {
            -1.0
        } else if theta >= 0.0 {
            theta - 2.0
        } else if theta > -1.0 {
            theta - 1.0
        } else {
            -2.0
        }
    }

    pub fn r(&self) -> f64 {
        (self.n as f64).powf(Self::r_exponent(self.theta))
    }

    pub fn d(&self) -> f64 {
        let n = self.n as f64;
        if self.theta <= 1.0 {
            n.sqrt()
        } else {
            n.powf(1.5 - self.theta)
        }
    }

    pub fn delta(&self) -> f64 {
        if self.theta < 3.0 {
            (1.0 - self.theta).abs() / 2.0
        } else {
            1.0
        }
    }
}

/// Y^N(φ) = N^{−1/2} Σ_x φ(x/N)(η(x) − ρ(x)).
pub fn field_eval(cfg: &Configuration, phi: &TestFunction, rho: &DensityProfile) -> f64 {
    let n = cfg.n();
    debug_assert_eq!(n, rho.n());
    let nf = n as f64;
    let r = rho.interior();
    (1..n).map(|x| phi.eval(x as f64 / nf) * (cfg.getf(x) - r[x - 1])).sum::<f64>() / nf.sqrt()
}

/// Γ^N(φ) split into its reservoir and bulk parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QvParts {
    pub boundary: f64,
    pub bulk: f64,
}

impl QvParts {
    pub fn total(&self) -> f64 {
        self.boundary + self.bulk
    }
}

/// Reservoir coefficients (c, d) with boundary QV density c·η(end) + d.
fn reservoir_qv(p: &ModelParams) -> [(f64, f64); 2] {
    let a = p.a();
    [
        (p.lambda_l * (a - 2.0 * p.rho_l), a * p.lambda_l * p.rho_l),
        (p.lambda_r * (a - 2.0 * p.rho_r), a * p.lambda_r * p.rho_r),
    ]
}

pub fn qv_integrand(cfg: &Configuration, phi: &TestFunction, p: &ModelParams) -> QvParts {
    let n = p.n;
    let nf = p.nf();
    let a = p.a();
    let [(cl, dl), (cr, dr)] = reservoir_qv(p);
    let fl = phi.eval(1.0 / nf).powi(2);
    let fr = phi.eval((n - 1) as f64 / nf).powi(2);
    let boundary = nf.powf(1.0 - p.theta) * (fl * (cl * cfg.getf(1) + dl) + fr * (cr * cfg.getf(n - 1) + dr));
    let bulk = (1..n - 1)
        .map(|x| {
            let (u, v) = (cfg.getf(x), cfg.getf(x + 1));
            phi.grad_n(x, n).powi(2) * (u * (a - v) + v * (a - u))
        })
        .sum::<f64>()
        / nf;
    QvParts { boundary, bulk }
}

/// ∫_0^t Γ_s^N(φ) ds from the site integrals ∫η(x) (x = 1..N−1) and the bond
/// integrals (x = 1..N−2) over [0, t].
pub fn qv_time_integral(sites: &[f64], bonds: &[f64], phi: &TestFunction, p: &ModelParams, t: f64) -> QvParts {
    let n = p.n;
    let nf = p.nf();
    let [(cl, dl), (cr, dr)] = reservoir_qv(p);
    let fl = phi.eval(1.0 / nf).powi(2);
    let fr = phi.eval((n - 1) as f64 / nf).powi(2);
    let boundary = nf.powf(1.0 - p.theta) * (fl * (cl * sites[0] + dl * t) + fr * (cr * sites[n - 2] + dr * t));
    let bulk = (1..n - 1).map(|x| phi.grad_n(x, n).powi(2) * bonds[x - 1]).sum::<f64>() / nf;
    QvParts { boundary, bulk }
}

/// Dynkin decomposition of Y_t(φ) along one trajectory.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DynkinSeries {
    pub times: Vec<f64>,
    pub field: Vec<f64>,
    /// ∫ N^{−1/2} Σ_x αΔ_Nφ(x/N) η̄_s(x) ds
    pub bulk: Vec<f64>,
    /// −∫ αN^{3/2−θ}[λ^ℓφ(1/N)η̄_s(1) + λ^rφ((N−1)/N)η̄_s(N−1)] ds
    pub boundary: Vec<f64>,
    /// −∫ α√N[∇_Nφ((N−1)/N)η̄_s(N−1) − ∇_Nφ(0)η̄_s(1)] ds
    pub gradient: Vec<f64>,
    pub martingale: Vec<f64>,
    pub qv_boundary: Vec<f64>,
    pub qv_bulk: Vec<f64>,
}

/// Weights of ∫η̄(x) ds in the three integral terms, x = 1..N−1.
fn dynkin_weights(phi: &TestFunction, p: &ModelParams) -> [Vec<f64>; 3] {
    let n = p.n;
    let nf = p.nf();
    let a = p.a();
    let m = n - 1;
    let bulk = (1..n).map(|x| a * phi.laplacian_n(x, n) / nf.sqrt()).collect();
    let mut boundary = vec![0.0; m];
    let s = a * nf.powf(1.5 - p.theta);
    boundary[0] -= s * p.lambda_l * phi.eval(1.0 / nf);
    boundary[m - 1] -= s * p.lambda_r * phi.eval((n - 1) as f64 / nf);
    let mut gradient = vec![0.0; m];
    gradient[0] += a * nf.sqrt() * phi.grad_n(0, n);
    gradient[m - 1] -= a * nf.sqrt() * phi.grad_n(n - 1, n);
    [bulk, boundary, gradient]
}

pub fn dynkin_residual(
    traj: &Trajectory,
    phi: &TestFunction,
    rho: &DensitySolver,
    times: &[f64],
) -> Result<DynkinSeries> {
    let p = &rho.p;
    if traj.initial.n() != p.n {
        return domain("trajectory and density solver disagree on N");
    }
    if traj.events.is_none() {
        return domain("trajectory has no event log");
    }
    if times.windows(2).any(|w| w[1] < w[0]) || times.iter().any(|&t| t < 0.0 || t > traj.t_end) {
        return domain("times must be ascending within [0, t_end]");
    }
    let mut snaps = Snapshots::new(times);
    let mut sites = CellIntegrals::new(Cells::Sites, p.alpha, times);
    let mut bonds = CellIntegrals::new(Cells::Bonds, p.alpha, times);
    traj.replay(&mut Many(vec![&mut snaps, &mut sites, &mut bonds]))?;
    let [wb, wd, wg] = dynkin_weights(phi, p);
    let y0 = field_eval(&traj.initial, phi, &rho.profile(0.0));
    let mut out = DynkinSeries {
        times: times.to_vec(),
        field: Vec::new(),
        bulk: Vec::new(),
        boundary: Vec::new(),
        gradient: Vec::new(),
        martingale: Vec::new(),
        qv_boundary: Vec::new(),
        qv_bulk: Vec::new(),
    };
    for (k, &t) in times.iter().enumerate() {
        let ints = &sites.recorded[k];
        let ir = rho.integral(0.0, t);
        let bar: Vec<f64> = ints.iter().zip(&ir).map(|(a, b)| a - b).collect();
        let dot = |w: &[f64]| -> f64 { w.iter().zip(&bar).map(|(a, b)| a * b).sum() };
        let (b, d, g) = (dot(&wb), dot(&wd), dot(&wg));
        let y = field_eval(&snaps.taken[k], phi, &rho.profile(t));
        out.field.push(y);
        out.bulk.push(b);
        out.boundary.push(d);
        out.gradient.push(g);
        out.martingale.push(y - y0 - b - d - g);
        let qv = qv_time_integral(ints, &bonds.recorded[k], phi, p, t);
        out.qv_boundary.push(qv.boundary);
        out.qv_bulk.push(qv.bulk);
    }
    Ok(out)
}

/// Per-replica field values Y_t^N(φ) centred by the solver density.
#[derive(Clone, Debug, PartialEq)]
pub struct FluctuationObservable {
    pub phi: TestFunction,
    pub times: Vec<f64>,
    /// values[replica][time]
    pub values: Vec<Vec<f64>>,
}

impl FluctuationObservable {
    pub fn from_snapshots(
        phi: &TestFunction,
        times: &[f64],
        snapshots: &[Vec<Configuration>],
        rho: &DensitySolver,
    ) -> Result<Self> {
        if snapshots.iter().any(|s| s.len() != times.len()) {
            return domain("every replica needs one snapshot per time");
        }
        let profiles: Vec<DensityProfile> = times.iter().map(|&t| rho.profile(t)).collect();
        let values =
            snapshots.iter().map(|s| s.iter().zip(&profiles).map(|(c, r)| field_eval(c, phi, r)).collect()).collect();
        Ok(Self { phi: phi.clone(), times: times.to_vec(), values })
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[k]).collect()
    }
}

/// Continuum density ρ_t = ρ̄ + S_t(γ − ρ̄) in the regime matching θ.
pub struct ContinuumDensity {
    intercept: f64,
    slope: f64,
    expansion: SemigroupExpansion,
}

impl ContinuumDensity {
    pub fn new(gamma: &dyn Fn(f64) -> f64, p: &ModelParams, modes: usize) -> Result<Self> {
        let regime = Regime::of(p.theta);
        let (intercept, slope) = match regime {
            Regime::Dirichlet => (p.rho_l, p.rho_r - p.rho_l),
            Regime::Robin => {
                let (l, r) = (p.lambda_l, p.lambda_r);
                let b = l * r * (p.rho_r - p.rho_l) / (l + r + l * r);
                (p.rho_l + b / l, b)
            }
            Regime::Neumann => (0.0, 0.0),
        };
        let expansion = SemigroupExpansion::with_regime(&|u| gamma(u) - intercept - slope * u, p, regime, modes)?;
        Ok(Self { intercept, slope, expansion })
    }

    pub fn eval(&self, t: f64, u: f64) -> f64 {
        self.intercept + self.slope * u + self.expansion.eval(t, u)
    }
}

fn mobility(rho: f64, alpha: f64) -> f64 {
    rho * (alpha - rho)
}

/// ∫_0^t [∫ 2χ(ρ_s)(∂_u S_{t−s}f)² du + 1(θ=1)·(reservoir terms)(S_{t−s}f)² at 0 and 1] ds.
pub fn ou_variance_predictor(f: &TestFunction, t: f64, rho: &dyn Fn(f64, f64) -> f64, p: &ModelParams) -> Result<f64> {
    if t < 0.0 {
        return domain("negative time");
    }
    f.membership(p, 2)?;
    if t == 0.0 || f.is_zero() {
        return Ok(0.0);
    }
    let a = p.a();
    let sg = f.semigroup(p, 64)?;
    let robin = Regime::of(p.theta) == Regime::Robin;
    let [(cl, dl), (cr, dr)] = reservoir_qv(p);
    let space = composite_gl(0.0, 1.0, 32, 8);
    let time = composite_gl(0.0, t, 16, 8);
    let mut total = 0.0;
    for &(s, ws) in &time {
        let tau = t - s;
        let bulk: f64 = space.iter().map(|&(u, wu)| wu * 2.0 * mobility(rho(s, u), a) * sg.deriv(tau, u).powi(2)).sum();
        let mut g = bulk;
        if robin {
            let (r0, r1) = (rho(s, 0.0), rho(s, 1.0));
            g += (cl * r0 + dl) * sg.eval(tau, 0.0).powi(2) + (cr * r1 + dr) * sg.eval(tau, 1.0).powi(2);
        }
        total += ws * g;
    }
    Ok(total)
}

/// (χ/α)∫f², the equilibrium variance of Y(f) at constant density ρ.
pub fn equilibrium_field_variance(f: &dyn Fn(f64) -> f64, rho: f64, alpha: u32) -> f64 {
    let a = alpha as f64;
    let q = composite_gl(0.0, 1.0, 64, 8);
    mobility(rho, a) / a * q.iter().map(|&(u, w)| w * f(u).powi(2)).sum::<f64>()
}

/// Time nodes on [0, t] refined towards 0, where the correlations build up.
fn window_nodes(t: f64) -> Vec<(f64, f64)> {
    let mut q = graded_gl(0.0, t / 4.0, 10, 8);
    q.extend(composite_gl(t / 4.0, t, 12, 8));
    q
}

/// E[(Σ_x w_x ∫_0^t η̄_s(x) ds)²] for local Gibbs initial data with the solver's
/// initial profile, as 2∫_0^t wᵀ C_s Q_{t−s} w ds.
pub fn window_second_moment(w: &[f64], t: f64, rho: &DensitySolver, integrator: Option<&str>) -> Result<f64> {
    Ok(window_second_moments(&[w.to_vec()], t, rho, integrator)?[0])
}

/// `window_second_moment` for several weight vectors sharing one correlation solve.
pub fn window_second_moments(
    ws: &[Vec<f64>],
    t: f64,
    rho: &DensitySolver,
    integrator: Option<&str>,
) -> Result<Vec<f64>> {
    let p = &rho.p;
    if let Some(w) = ws.iter().find(|w| w.len() != p.sites()) {
        return domain(format!("weight vector has {} entries, expected {}", w.len(), p.sites()));
    }
    if t < 0.0 {
        return domain("negative time");
    }
    if t == 0.0 {
        return Ok(vec![0.0; ws.len()]);
    }
    let nodes = window_nodes(t);
    let times: Vec<f64> = nodes.iter().map(|q| q.0).collect();
    let phi0 = CorrelationField::zeros(p, 0.0);
    let fields = evolve_correlation(&phi0, rho, &times, integrator)?;
    let kernel = &rho.kernel;
    let wvs: Vec<DVector<f64>> = ws.iter().map(|w| crate::linalg::dvec(w)).collect();
    let wks: Vec<DVector<f64>> = wvs.iter().map(|w| kernel.modes.tr_mul(w)).collect();
    let mut totals = vec![0.0; ws.len()];
    for ((s, ws), phi) in nodes.iter().zip(&fields) {
        let cov = equal_time_covariance(phi, &rho.at(*s), p.alpha);
        let tau = t - s;
        // Q_τ = V diag((1 − e^{−rτ})/r) Vᵀ
        let q: Vec<f64> = kernel.rates.iter().map(|&r| tau * phi1(-r * tau)).collect();
        for (k, (wv, wk)) in wvs.iter().zip(&wks).enumerate() {
            let c = &cov * wv;
            let d = DVector::from_iterator(q.len(), q.iter().zip(wk.iter()).map(|(a, b)| a * b));
            totals[k] += ws * c.dot(&(&kernel.modes * d));
        }
    }
    Ok(totals.into_iter().map(|v| 2.0 * v).collect())
}

/// Sites of the window Λ_N^{ε,j}: x ≤ ⌊εN⌋ for j = 0, x ≥ N − ⌊εN⌋ for j = 1.
pub fn window_sites(eps: f64, j: u8, n: usize) -> Result<Vec<usize>> {
    if !(eps > 0.0 && eps < 0.5) {
        return domain("window width must lie in (0, 1/2)");
    }
    let k = (eps * n as f64 + 1e-9).floor() as usize;
    if k == 0 {
        return domain("window holds no site");
    }
    match j {
        0 => Ok((1..=k).collect()),
        1 => Ok((n - k..n).collect()),
        _ => domain("window side must be 0 or 1"),
    }
}

/// E[(∫_0^t Y_s^N(ι_ε^j) ds)²] with ι_ε^j = ε^{−1} times the indicator of the window.
pub fn boundary_window_statistic(
    eps: f64,
    j: u8,
    t: f64,
    rho: &DensitySolver,
    integrator: Option<&str>,
) -> Result<f64> {
    Ok(boundary_window_statistics(&[(eps, j)], t, rho, integrator)?[0])
}

/// `boundary_window_statistic` for several (ε, j) windows.
pub fn boundary_window_statistics(
    windows: &[(f64, u8)],
    t: f64,
    rho: &DensitySolver,
    integrator: Option<&str>,
) -> Result<Vec<f64>> {
    let p = &rho.p;
    if p.theta >= 1.0 {
        return domain("the boundary window statistic is defined for theta < 1");
    }
    let ws = windows
        .iter()
        .map(|&(eps, j)| {
            let mut w = vec![0.0; p.sites()];
            for x in window_sites(eps, j, p.n)? {
                w[x - 1] = 1.0 / (eps * p.nf().sqrt());
            }
            Ok(w)
        })
        .collect::<Result<Vec<_>>>()?;
    window_second_moments(&ws, t, rho, integrator)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Bulk,
    Boundary,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub theta: f64,
    pub region: Region,
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    #[serde(rename = "N_list")]
    pub n_list: Vec<usize>,
    /// sup_t max |φ| for each N.
    pub maxima: Vec<f64>,
    pub expected: f64,
}

impl FitReport {
    pub fn within(&self, tol: f64) -> bool {
        (self.slope - self.expected).abs() <= tol
    }
}

/// Least-squares line y = intercept + slope·x with the slope's standard error.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64)> {
    let n = x.len();
    if n < 3 || y.len() != n {
        return domain("a fit needs at least three points");
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return domain("fit abscissae coincide");
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok((slope, intercept, (ssr / (nf - 2.0) / sxx).sqrt()))
}

/// Parameters and initial data for the decay fits.
#[derive(Clone, Debug, PartialEq)]
pub struct DecayTemplate {
    /// N and θ are overridden per run; λ^ℓ = λ^r is required.
    pub params: ModelParams,
    pub amplitude: f64,
    pub support: (f64, f64),
    pub horizon: f64,
    pub steps: usize,
}

impl Default for DecayTemplate {
    fn default() -> Self {
        Self {
            params: ModelParams::new(2, 1.0, 1.0, 1.0, 1.0, 0.0, 16).expect("valid template"),
            amplitude: 0.3,
            support: (0.3, 0.7),
            horizon: 1.0,
            steps: 50,
        }
    }
}

/// sup over the time grid of max_{x≠y}|φ| in the bulk and on the rows x ∈ {1, N−1}.
pub fn correlation_maxima(p: &ModelParams, template: &DecayTemplate, integrator: Option<&str>) -> Result<(f64, f64)> {
    let (a, b, amp) = (template.support.0, template.support.1, template.amplitude);
    let rho0 = admissible_initial_profile(&|u| amp * bump(a, b, u), p)?;
    let solver = DensitySolver::new(p, &rho0)?;
    let times: Vec<f64> = (1..=template.steps).map(|k| template.horizon * k as f64 / template.steps as f64).collect();
    let fields = evolve_correlation(&CorrelationField::zeros(p, 0.0), &solver, &times, integrator)?;
    let n = p.n;
    let mut bulk: f64 = 0.0;
    let mut edge: f64 = 0.0;
    for f in &fields {
        bulk = bulk.max(f.max_abs(|x, y| x != y));
        edge = edge.max(f.max_abs(|x, y| x != y && (x == 1 || y == 1 || x == n - 1 || y == n - 1)));
    }
    Ok((bulk, edge))
}

pub fn decay_fit(
    thetas: &[f64],
    ns: &[usize],
    template: &DecayTemplate,
    integrator: Option<&str>,
) -> Result<Vec<FitReport>> {
    if ns.len() < 3 {
        return domain("decay fits need at least three values of N");
    }
    let mut out = Vec::new();
    for &theta in thetas {
        let mut bulk = Vec::new();
        let mut edge = Vec::new();
        for &n in ns {
            let p = template.params.with_n(n).with_theta(theta);
            p.validate()?;
            let (b, e) = correlation_maxima(&p, template, integrator)?;
            bulk.push(b);
            edge.push(e);
        }
        let x: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        for (region, vals, expected) in
            [(Region::Bulk, bulk, -1.0), (Region::Boundary, edge, DecayRates::r_exponent(theta))]
        {
            let y: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
            let (slope, intercept, stderr) = linear_fit(&x, &y)?;
            out.push(FitReport {
                theta,
                region,
                slope,
                intercept,
                stderr,
                n_list: ns.to_vec(),
                maxima: vals,
                expected,
            });
        }
    }
    Ok(out)
}

/// ∫(η(x) − L^{−1}Σ_{y=x+1}^{x+L} η(y)) ds from site integrals indexed x−1.
pub fn replacement_value(site_integrals: &[f64], x: usize, l: usize) -> Result<f64> {
    let m = site_integrals.len();
    if x == 0 || l == 0 || x + l > m {
        return domain(format!("window of length {l} right of site {x} leaves the lattice"));
    }
    let avg = site_integrals[x..x + l].iter().sum::<f64>() / l as f64;
    Ok(site_integrals[x - 1] - avg)
}

/// MC estimate of E|∫_0^t (η_s(x) − right block average over L) ds| from local
/// Gibbs initial data with profile `rho0`.
#[allow(clippy::too_many_arguments)]
pub fn replacement_statistic(
    p: &ModelParams,
    rho0: &[f64],
    x: usize,
    l: usize,
    t: f64,
    replicas: usize,
    seed: u64,
    stream: u64,
) -> Result<EnsembleEstimate> {
    replacement_value(&vec![0.0; p.sites()], x, l)?;
    let vals = run_replicas(replicas, |r| -> Result<f64> {
        let id = ReplicaId { seed, stream, replica: r };
        let mut rng = id.rng();
        let cfg = sample_local_gibbs(rho0, p, &mut rng)?;
        let mut ints = CellIntegrals::new(Cells::Sites, p.alpha, &[t]);
        simulate(cfg, t, p, &mut rng, id, false, &mut ints)?;
        Ok(replacement_value(&ints.recorded[0], x, l)?.abs())
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    EnsembleEstimate::from_values(&vals, seed, stream)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HydroReport {
    pub time: f64,
    /// MC estimate of ⟨π_t^N, G⟩.
    pub mc: EnsembleEstimate,
    /// N^{−1} Σ_x G(x/N)ρ_t(x/N) with ρ_t from the continuum semigroup.
    pub predicted: f64,
    /// ∫ G ρ_t du.
    pub continuum: f64,
    pub deviation: f64,
    /// |deviation| in standard errors.
    pub z: f64,
}

/// ⟨π^N, G⟩ = N^{−1} Σ_x G(x/N) η(x).
pub fn empirical_pairing(cfg: &Configuration, g: &dyn Fn(f64) -> f64) -> f64 {
    let n = cfg.n();
    let nf = n as f64;
    (1..n).map(|x| g(x as f64 / nf) * cfg.getf(x)).sum::<f64>() / nf
}

/// Compares ⟨π_t^N, G⟩ from local Gibbs starts at γ(x/N) with ⟨G, ρ_t⟩.
#[allow(clippy::too_many_arguments)]
pub fn hydro_check(
    g: &dyn Fn(f64) -> f64,
    gamma: &(dyn Fn(f64) -> f64 + Sync),
    t: f64,
    p: &ModelParams,
    replicas: usize,
    seed: u64,
    stream: u64,
) -> Result<HydroReport> {
    p.validate()?;
    let nf = p.nf();
    let profile: Vec<f64> = (1..p.n).map(|x| gamma(x as f64 / nf)).collect();
    let finals = run_replicas(replicas, |r| -> Result<Configuration> {
        let id = ReplicaId { seed, stream, replica: r };
        let mut rng = id.rng();
        let cfg = sample_local_gibbs(&profile, p, &mut rng)?;
        Ok(simulate(cfg, t, p, &mut rng, id, false, &mut ())?.final_cfg)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let vals: Vec<f64> = finals.iter().map(|c| empirical_pairing(c, g)).collect();
    let mc = EnsembleEstimate::from_values(&vals, seed, stream)?;
    let rho = ContinuumDensity::new(gamma, p, 128)?;
    let continuum = composite_gl(0.0, 1.0, 64, 8).iter().map(|&(u, w)| w * g(u) * rho.eval(t, u)).sum();
    let predicted = (1..p.n).map(|x| g(x as f64 / nf) * rho.eval(t, x as f64 / nf)).sum::<f64>() / nf;
    let deviation = mc.mean - predicted;
    let z = mc.z(predicted);
    Ok(HydroReport { time: t, mc, predicted, continuum, deviation, z })
}
