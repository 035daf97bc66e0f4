//! Model parameters, configurations and the local rate formulas.
//!
//! Sites are labelled `1..=N-1` everywhere in the public API; `0` and `N`
//! are the two reservoirs.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub alpha: u32,
    pub lambda_l: f64,
    pub lambda_r: f64,
    pub rho_l: f64,
    pub rho_r: f64,
    pub theta: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

impl ModelParams {
    pub fn new(alpha: u32, lambda_l: f64, lambda_r: f64, rho_l: f64, rho_r: f64, theta: f64, n: usize) -> Result<Self> {
        let p = Self { alpha, lambda_l, lambda_r, rho_l, rho_r, theta, n };
        p.validate()?;
        Ok(p)
    }

    /// Field-path diagnostics on failure, e.g. `lambda_l must lie in (0,1]`.
    pub fn validate(&self) -> Result<()> {
        let a = self.alpha as f64;
        if self.alpha == 0 {
            return domain("alpha must be a positive integer");
        }
        for (name, v) in [("lambda_l", self.lambda_l), ("lambda_r", self.lambda_r)] {
            if !(v > 0.0 && v <= 1.0) {
                return domain(format!("{name} must lie in (0,1], got {v}"));
            }
        }
        for (name, v) in [("rho_l", self.rho_l), ("rho_r", self.rho_r)] {
            if !(v > 0.0 && v < a) {
                return domain(format!("{name} must lie in (0,alpha), got {v}"));
            }
        }
        if !self.theta.is_finite() {
            return domain("theta must be finite");
        }
        if self.n < 3 {
            return domain(format!("N must be at least 3, got {}", self.n));
        }
        Ok(())
    }

    pub fn with_n(&self, n: usize) -> Self {
        Self { n, ..self.clone() }
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        Self { theta, ..self.clone() }
    }

    pub fn a(&self) -> f64 {
        self.alpha as f64
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Number of interior sites, `N-1`.
    pub fn sites(&self) -> usize {
        self.n - 1
    }

    /// N^{-θ}
    pub fn reservoir_scale(&self) -> f64 {
        self.nf().powf(-self.theta)
    }

    /// Bond rate between the left reservoir and site 1, αλ^ℓ/N^θ.
    pub fn bond_left(&self) -> f64 {
        self.a() * self.lambda_l * self.reservoir_scale()
    }

    pub fn bond_right(&self) -> f64 {
        self.a() * self.lambda_r * self.reservoir_scale()
    }

    pub fn epsilon(&self) -> f64 {
        self.lambda_l * self.rho_l
    }

    pub fn delta(&self) -> f64 {
        self.lambda_r * self.rho_r
    }

    pub fn gamma(&self) -> f64 {
        self.lambda_l * (self.a() - self.rho_l)
    }

    pub fn beta(&self) -> f64 {
        self.lambda_r * (self.a() - self.rho_r)
    }

    pub fn is_equilibrium(&self) -> bool {
        self.rho_l == self.rho_r
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Configuration {
    eta: Vec<u8>,
}

impl Configuration {
    /// `values[i]` is the occupation of site `i+1`.
    pub fn new(values: Vec<u8>, alpha: u32) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v as u32 > alpha) {
            return domain(format!("occupation {v} exceeds alpha = {alpha}"));
        }
        Ok(Self { eta: values })
    }

    pub fn empty(n: usize) -> Self {
        Self { eta: vec![0; n - 1] }
    }

    pub fn filled(n: usize, alpha: u32) -> Self {
        Self { eta: vec![alpha as u8; n - 1] }
    }

    /// Lattice size N.
    pub fn n(&self) -> usize {
        self.eta.len() + 1
    }

    pub fn get(&self, x: usize) -> u8 {
        self.eta[x - 1]
    }

    pub fn getf(&self, x: usize) -> f64 {
        self.eta[x - 1] as f64
    }

    pub(crate) fn bump(&mut self, x: usize, up: bool) {
        let v = &mut self.eta[x - 1];
        if up {
            *v += 1;
        } else {
            *v -= 1;
        }
    }

    pub fn values(&self) -> &[u8] {
        &self.eta
    }

    pub fn total(&self) -> u64 {
        self.eta.iter().map(|&v| v as u64).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dir {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// Rate (before the N² speed-up) at which one particle leaves `x` towards `dir`.
pub fn bulk_rate(cfg: &Configuration, x: usize, dir: Dir, alpha: u32) -> Result<f64> {
    let n = cfg.n();
    if x == 0 || x >= n {
        return domain(format!("site {x} outside 1..={}", n - 1));
    }
    let target = match dir {
        Dir::Left if x == 1 => return Ok(0.0),
        Dir::Right if x == n - 1 => return Ok(0.0),
        Dir::Left => x - 1,
        Dir::Right => x + 1,
    };
    Ok(cfg.getf(x) * (alpha as f64 - cfg.getf(target)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReservoirRates {
    pub inj_l: f64,
    pub rem_l: f64,
    pub inj_r: f64,
    pub rem_r: f64,
}

pub fn reservoir_rates(cfg: &Configuration, p: &ModelParams) -> ReservoirRates {
    let s = p.reservoir_scale();
    let a = p.a();
    let e1 = cfg.getf(1);
    let en = cfg.getf(p.n - 1);
    ReservoirRates {
        inj_l: s * p.lambda_l * p.rho_l * (a - e1),
        rem_l: s * p.lambda_l * (a - p.rho_l) * e1,
        inj_r: s * p.lambda_r * p.rho_r * (a - en),
        rem_r: s * p.lambda_r * (a - p.rho_r) * en,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaPosition {
    /// Nearest-neighbour pair y = x+1.
    BulkOffdiag,
    /// Contribution of one bulk bond {x, z} to Γ(η(x), η(x)); `b` is η(z).
    BulkDiag,
    /// Reservoir contribution to Γ(η(1), η(1)); `b` is ignored.
    LeftCorner,
    RightCorner,
}

/// Degree-two correction of the (unaccelerated) generator.
pub fn gamma_term(a: u32, b: u32, pos: GammaPosition, p: &ModelParams) -> Result<f64> {
    if a > p.alpha || b > p.alpha {
        return domain(format!("counts ({a},{b}) exceed alpha = {}", p.alpha));
    }
    let (af, bf, al) = (a as f64, b as f64, p.a());
    Ok(match pos {
        GammaPosition::BulkOffdiag => 2.0 * af * bf - al * (af + bf),
        GammaPosition::BulkDiag => al * (af + bf) - 2.0 * af * bf,
        GammaPosition::LeftCorner => p.reservoir_scale() * p.lambda_l * (p.rho_l * (al - af) + (al - p.rho_l) * af),
        GammaPosition::RightCorner => p.reservoir_scale() * p.lambda_r * (p.rho_r * (al - af) + (al - p.rho_r) * af),
    })
}

/// L_N(η(x)η(y)) − η(x)L_Nη(y) − η(y)L_Nη(x) at a given configuration.
pub fn gamma_pair(cfg: &Configuration, x: usize, y: usize, p: &ModelParams) -> Result<f64> {
    let (x, y) = if x <= y { (x, y) } else { (y, x) };
    let n = p.n;
    if x == 0 || y >= n {
        return domain(format!("pair ({x},{y}) outside the lattice"));
    }
    let c = |z: usize| cfg.get(z) as u32;
    if y == x + 1 {
        return gamma_term(c(x), c(y), GammaPosition::BulkOffdiag, p);
    }
    if y != x {
        return Ok(0.0);
    }
    let mut g = 0.0;
    if x > 1 {
        g += gamma_term(c(x), c(x - 1), GammaPosition::BulkDiag, p)?;
    } else {
        g += gamma_term(c(x), 0, GammaPosition::LeftCorner, p)?;
    }
    if x < n - 1 {
        g += gamma_term(c(x), c(x + 1), GammaPosition::BulkDiag, p)?;
    } else {
        g += gamma_term(c(x), 0, GammaPosition::RightCorner, p)?;
    }
    Ok(g)
}

/// Dual configuration on {0} ∪ Λ_N ∪ {N}.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DualConfiguration {
    counts: Vec<u32>,
}

impl DualConfiguration {
    pub fn new(counts: Vec<u32>, alpha: u32) -> Result<Self> {
        if counts.len() < 4 {
            return domain("dual configuration needs at least N+1 = 4 entries");
        }
        let last = counts.len() - 1;
        if counts[1..last].iter().any(|&c| c > alpha) {
            return domain("interior dual count exceeds alpha");
        }
        Ok(Self { counts })
    }

    /// δ_x + δ_y (or 2δ_x) on a lattice of size N.
    pub fn pair(n: usize, x: usize, y: usize, alpha: u32) -> Result<Self> {
        let mut counts = vec![0; n + 1];
        counts[x] += 1;
        counts[y] += 1;
        Self::new(counts, alpha)
    }

    pub fn single(n: usize, x: usize, alpha: u32) -> Result<Self> {
        let mut counts = vec![0; n + 1];
        counts[x] += 1;
        Self::new(counts, alpha)
    }

    pub fn get(&self, x: usize) -> u32 {
        self.counts[x]
    }
}

fn falling(k: u32, m: u32) -> f64 {
    (0..m).map(|i| (k - i) as f64).product()
}

/// Product-form duality function D(η, η̂).
pub fn duality_eval(cfg: &Configuration, dual: &DualConfiguration, p: &ModelParams) -> Result<f64> {
    let n = cfg.n();
    if dual.counts.len() != n + 1 {
        return domain("dual configuration has the wrong lattice size");
    }
    let mut d = p.rho_l.powi(dual.get(0) as i32) * p.rho_r.powi(dual.get(n) as i32);
    for x in 1..n {
        let m = dual.get(x);
        if m == 0 {
            continue;
        }
        if m > p.alpha || (p.alpha == 1 && m >= 2) {
            return domain(format!("dual mass {m} at site {x} is undefined for alpha = {}", p.alpha));
        }
        let e = cfg.get(x) as u32;
        if e < m {
            return Ok(0.0);
        }
        // η!/(η−m)! · (α−m)!/α!
        d *= falling(e, m) / falling(p.alpha, m);
    }
    Ok(d)
}

/// χ_α(ρ) = ρ(α−ρ).
pub fn mobility(rho: f64, alpha: u32) -> Result<f64> {
    let a = alpha as f64;
    if !(0.0..=a).contains(&rho) {
        return domain(format!("density {rho} outside [0, {a}]"));
    }
    Ok(rho * (a - rho))
}

pub fn binomial_pmf(k: u32, alpha: u32, rho: f64) -> f64 {
    let q = rho / alpha as f64;
    let mut c = 1.0;
    for i in 0..k {
        c *= (alpha - i) as f64 / (i + 1) as f64;
    }
    c * q.powi(k as i32) * (1.0 - q).powi((alpha - k) as i32)
}

/// Binomial(α, ρ/α) product probability of a configuration.
pub fn equilibrium_pmf(cfg: &Configuration, rho: f64, alpha: u32) -> f64 {
    cfg.values().iter().map(|&k| binomial_pmf(k as u32, alpha, rho)).product()
}

/// ⟨π^N, G⟩ = N^{-1} Σ_x η(x) G(x/N).
pub fn empirical_pairing(cfg: &Configuration, g: impl Fn(f64) -> f64) -> f64 {
    let n = cfg.n() as f64;
    (1..cfg.n()).map(|x| cfg.getf(x) * g(x as f64 / n)).sum::<f64>() / n
}

/// Mean of the `l` occupations strictly to one side of `z`.
pub fn block_average(cfg: &Configuration, z: usize, l: usize, side: Side) -> Result<f64> {
    let n = cfg.n();
    if l == 0 {
        return domain("window length must be positive");
    }
    let range = match side {
        Side::Right if z + l <= n - 1 => z + 1..=z + l,
        Side::Left if z > l => z - l..=z - 1,
        _ => return Err(Error::Domain(format!("window of {l} sites from {z} overflows the lattice"))),
    };
    Ok(range.map(|y| cfg.getf(y)).sum::<f64>() / l as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(alpha: u32) -> ModelParams {
        ModelParams::new(alpha, 1.0, 1.0, 0.5, 0.5, 0.0, 6).unwrap()
    }

    #[test]
    fn bulk_rate_examples() {
        let c = Configuration::new(vec![0, 2, 1, 0, 0], 3).unwrap();
        assert_eq!(bulk_rate(&c, 2, Dir::Right, 3).unwrap(), 4.0);
        assert_eq!(bulk_rate(&c, 1, Dir::Left, 3).unwrap(), 0.0);
        let c = Configuration::new(vec![1, 2, 0, 0, 0], 2).unwrap();
        assert_eq!(bulk_rate(&c, 1, Dir::Right, 2).unwrap(), 0.0);
        assert!(bulk_rate(&c, 6, Dir::Right, 2).is_err());
    }

    #[test]
    fn reservoir_example() {
        let p = ModelParams::new(2, 0.5, 1.0, 1.0, 1.0, 1.0, 10).unwrap();
        let mut v = vec![0u8; 9];
        v[0] = 1;
        let r = reservoir_rates(&Configuration::new(v, 2).unwrap(), &p);
        assert!((r.inj_l - 0.05).abs() < 1e-15);
        assert!((r.rem_l - 0.05).abs() < 1e-15);
        let full = Configuration::filled(10, 2);
        assert_eq!(reservoir_rates(&full, &p).inj_l, 0.0);
        assert_eq!(reservoir_rates(&Configuration::empty(10), &p).rem_l, 0.0);
    }

    #[test]
    fn gamma_examples() {
        assert_eq!(gamma_term(1, 0, GammaPosition::BulkOffdiag, &params(1)).unwrap(), -1.0);
        assert_eq!(gamma_term(0, 0, GammaPosition::BulkOffdiag, &params(1)).unwrap(), 0.0);
        assert_eq!(gamma_term(2, 1, GammaPosition::BulkOffdiag, &params(2)).unwrap(), -2.0);
        assert!(gamma_term(3, 1, GammaPosition::BulkOffdiag, &params(2)).is_err());
    }

    #[test]
    fn duality_examples() {
        let p = ModelParams::new(2, 1.0, 1.0, 1.0, 1.0, 0.0, 4).unwrap();
        let c = Configuration::new(vec![2, 1, 0], 2).unwrap();
        let d = DualConfiguration::pair(4, 1, 2, 2).unwrap();
        assert_eq!(duality_eval(&c, &d, &p).unwrap(), 0.5);
        let d = DualConfiguration::pair(4, 1, 1, 2).unwrap();
        assert_eq!(duality_eval(&c, &d, &p).unwrap(), 1.0);
        let d = DualConfiguration::pair(4, 2, 2, 2).unwrap();
        assert_eq!(duality_eval(&c, &d, &p).unwrap(), 0.0);
        let p1 = ModelParams::new(1, 1.0, 1.0, 0.5, 0.5, 0.0, 4).unwrap();
        let c1 = Configuration::new(vec![1, 1, 0], 1).unwrap();
        assert!(
            DualConfiguration::pair(4, 1, 1, 1).is_err()
                || duality_eval(&c1, &DualConfiguration::pair(4, 1, 1, 1).unwrap(), &p1).is_err()
        );
    }

    #[test]
    fn mobility_and_pmf() {
        assert_eq!(mobility(1.0, 2).unwrap(), 1.0);
        assert_eq!(mobility(0.0, 2).unwrap(), 0.0);
        assert_eq!(mobility(2.0, 2).unwrap(), 0.0);
        assert!(mobility(2.5, 2).is_err());
        assert_eq!(binomial_pmf(1, 2, 1.0), 0.5);
        let c = Configuration::new(vec![0, 1], 1).unwrap();
        assert!((equilibrium_pmf(&c, 0.5, 1) - 0.25).abs() < 1e-15);
        assert!((equilibrium_pmf(&Configuration::empty(5), 1e-12, 2) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pairing_and_blocks() {
        let c = Configuration::new(vec![1, 0, 1], 1).unwrap();
        let direct: f64 = [1.0, 0.0, 1.0].iter().enumerate().map(|(i, v)| v * (i + 1) as f64 / 4.0).sum::<f64>() / 4.0;
        assert!((empirical_pairing(&c, |u| u) - 0.25).abs() < 1e-15);
        assert!((empirical_pairing(&c, |u| u) - direct).abs() < 1e-15);
        assert_eq!(empirical_pairing(&Configuration::empty(4), |u| u), 0.0);
        let full = Configuration::filled(5, 2);
        assert!((empirical_pairing(&full, |_| 1.0) - 2.0 * 4.0 / 5.0).abs() < 1e-15);
        let c = Configuration::new(vec![0, 1, 2, 1, 0], 2).unwrap();
        assert!((block_average(&c, 1, 3, Side::Right).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert_eq!(block_average(&c, 1, 1, Side::Right).unwrap(), 1.0);
        assert!(block_average(&c, 3, 3, Side::Right).is_err());
        assert!(block_average(&c, 3, 3, Side::Left).is_err());
        assert_eq!(block_average(&c, 4, 3, Side::Left).unwrap(), 1.0);
    }

    #[test]
    fn params_reject_bad_values() {
        assert!(ModelParams::new(0, 1.0, 1.0, 0.5, 0.5, 0.0, 5).is_err());
        assert!(ModelParams::new(1, 1.5, 1.0, 0.5, 0.5, 0.0, 5).is_err());
        assert!(ModelParams::new(1, 1.0, 1.0, 1.0, 0.5, 0.0, 5).is_err());
        assert!(ModelParams::new(1, 1.0, 1.0, 0.5, 0.5, 0.0, 2).is_err());
        let p = ModelParams::new(2, 0.5, 0.25, 0.5, 1.5, 0.0, 5).unwrap();
        assert!(p.epsilon() > 0.0 && p.delta() > 0.0 && p.gamma() > 0.0 && p.beta() > 0.0);
    }
}
