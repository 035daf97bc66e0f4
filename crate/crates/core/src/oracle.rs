//! Exact computations on tiny lattices by enumerating every configuration.

use nalgebra::DMatrix;

use crate::error::{domain, Error, Result};
use crate::linalg::SparseMatrix;
use crate::model::{bulk_rate, equilibrium_pmf, reservoir_rates, Configuration, Dir, ModelParams};

pub const DEFAULT_STATE_CAP: usize = 500_000;

/// All configurations of Ω_N in base-(α+1) order, site 1 least significant.
#[derive(Clone, Debug)]
pub struct StateSpace {
    pub alpha: u32,
    pub n: usize,
    states: Vec<Configuration>,
}

impl StateSpace {
    pub fn new(alpha: u32, n: usize, cap: usize) -> Result<Self> {
        let base = alpha as usize + 1;
        let size = (0..n - 1).try_fold(1usize, |acc, _| acc.checked_mul(base));
        let size = match size {
            Some(s) if s <= cap => s,
            _ => {
                return Err(Error::Size { states: size.unwrap_or(usize::MAX), cap });
            }
        };
        let states = (0..size)
            .map(|mut k| {
                let v = (0..n - 1)
                    .map(|_| {
                        let d = (k % base) as u8;
                        k /= base;
                        d
                    })
                    .collect();
                Configuration::new(v, alpha).expect("digits bounded by alpha")
            })
            .collect();
        Ok(Self { alpha, n, states })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, i: usize) -> &Configuration {
        &self.states[i]
    }

    pub fn states(&self) -> &[Configuration] {
        &self.states
    }

    pub fn index(&self, cfg: &Configuration) -> usize {
        let base = self.alpha as usize + 1;
        cfg.values().iter().rev().fold(0, |acc, &d| acc * base + d as usize)
    }

    /// Vector of f(η) over the state space.
    pub fn observable(&self, f: impl Fn(&Configuration) -> f64) -> Vec<f64> {
        self.states.iter().map(f).collect()
    }

    pub fn point_mass(&self, cfg: &Configuration) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        v[self.index(cfg)] = 1.0;
        v
    }

    /// Binomial product measure with site densities `profile[x-1]`.
    pub fn product_measure(&self, profile: &[f64]) -> Vec<f64> {
        self.observable(|c| {
            (1..self.n).map(|x| crate::model::binomial_pmf(c.get(x) as u32, self.alpha, profile[x - 1])).product()
        })
    }

    pub fn equilibrium(&self, rho: f64) -> Vec<f64> {
        self.observable(|c| equilibrium_pmf(c, rho, self.alpha))
    }
}

/// Rate matrix of the accelerated generator N²L_N.
#[derive(Clone, Debug)]
pub struct GeneratorMatrix {
    pub space: StateSpace,
    pub q: SparseMatrix,
    qt: SparseMatrix,
    exit_max: f64,
}

fn neighbours(c: &Configuration, p: &ModelParams) -> Vec<(Configuration, f64)> {
    let n = p.n;
    let mut out = Vec::new();
    for x in 1..n {
        for dir in [Dir::Left, Dir::Right] {
            let r = bulk_rate(c, x, dir, p.alpha).expect("interior site");
            if r > 0.0 {
                let y = if dir == Dir::Left { x - 1 } else { x + 1 };
                let mut d = c.clone();
                d.bump(x, false);
                d.bump(y, true);
                out.push((d, r));
            }
        }
    }
    let rr = reservoir_rates(c, p);
    for (site, rate, up) in
        [(1, rr.inj_l, true), (1, rr.rem_l, false), (n - 1, rr.inj_r, true), (n - 1, rr.rem_r, false)]
    {
        if rate > 0.0 {
            let mut d = c.clone();
            d.bump(site, up);
            out.push((d, rate));
        }
    }
    out
}

pub fn build_generator(p: &ModelParams, cap: usize) -> Result<GeneratorMatrix> {
    p.validate()?;
    let space = StateSpace::new(p.alpha, p.n, cap)?;
    let n2 = p.nf() * p.nf();
    let mut rows = Vec::with_capacity(space.len());
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); space.len()];
    let mut exit_max: f64 = 0.0;
    for (i, c) in space.states().iter().enumerate() {
        let mut row = Vec::new();
        let mut exit = 0.0;
        for (d, r) in neighbours(c, p) {
            let j = space.index(&d);
            row.push((j, n2 * r));
            cols[j].push((i, n2 * r));
            exit += n2 * r;
        }
        row.push((i, -exit));
        cols[i].push((i, -exit));
        exit_max = exit_max.max(exit);
        rows.push(row);
    }
    Ok(GeneratorMatrix { space, q: SparseMatrix::from_rows(rows), qt: SparseMatrix::from_rows(cols), exit_max })
}

impl GeneratorMatrix {
    /// (Q f)(η) for an observable f.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.q.apply(f)
    }

    /// p Q for a row vector p.
    pub fn apply_left(&self, p: &[f64]) -> Vec<f64> {
        self.qt.apply(p)
    }

    /// Evolves a non-negative (not necessarily normalised) measure.
    pub fn evolve_measure(&self, p0: &[f64], t: f64) -> Result<Vec<f64>> {
        if p0.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return domain("initial measure has negative or non-finite entries");
        }
        if t < 0.0 {
            return domain("negative time");
        }
        let lam = self.exit_max * 1.02;
        if t == 0.0 || lam == 0.0 {
            return Ok(p0.to_vec());
        }
        // chunks with Λh ≤ 30 keep every Poisson weight representable
        let chunks = ((lam * t) / 30.0).ceil().max(1.0) as usize;
        let h = t / chunks as f64;
        let mut p = p0.to_vec();
        let mut tmp = vec![0.0; p.len()];
        for _ in 0..chunks {
            p = self.uniformized_step(&p, lam, h, &mut tmp);
        }
        Ok(p)
    }

    fn uniformized_step(&self, p0: &[f64], lam: f64, h: f64, tmp: &mut [f64]) -> Vec<f64> {
        let mu = lam * h;
        let mut w = (-mu).exp();
        let mut term = p0.to_vec();
        let mut acc: Vec<f64> = term.iter().map(|v| w * v).collect();
        let mut k = 0usize;
        while ((k as f64) <= mu || w > 1e-18) && k < 10_000 {
            k += 1;
            // term ← term (I + Q/Λ)
            self.qt.matvec(&term, tmp);
            for (a, b) in term.iter_mut().zip(tmp.iter()) {
                *a += b / lam;
            }
            w *= mu / k as f64;
            for (a, b) in acc.iter_mut().zip(&term) {
                *a += w * b;
            }
        }
        acc
    }

    pub fn evolve_distribution(&self, p0: &[f64], t: f64) -> Result<Vec<f64>> {
        let s: f64 = p0.iter().sum();
        if (s - 1.0).abs() > 1e-10 {
            return domain(format!("initial vector sums to {s}, not 1"));
        }
        self.evolve_measure(p0, t)
    }

    /// πQ = 0, Σπ = 1, with residual below 1e-12.
    pub fn stationary_distribution(&self) -> Result<Vec<f64>> {
        let m = self.space.len();
        let pi = if m <= 4000 {
            let mut a = self.qt.to_dense();
            for j in 0..m {
                a[(m - 1, j)] = 1.0;
            }
            let mut b = nalgebra::DVector::zeros(m);
            b[m - 1] = 1.0;
            let x = a.lu().solve(&b).ok_or_else(|| Error::Solver("singular stationary system".into()))?;
            x.iter().map(|v| v.max(0.0)).collect::<Vec<_>>()
        } else {
            let mut p = vec![1.0 / m as f64; m];
            for _ in 0..200 {
                p = self.evolve_measure(&p, 1.0)?;
                let s: f64 = p.iter().sum();
                p.iter_mut().for_each(|v| *v /= s);
                if self.residual(&p) < 1e-13 {
                    break;
                }
            }
            p
        };
        let s: f64 = pi.iter().sum();
        let pi: Vec<f64> = pi.iter().map(|v| v / s).collect();
        let res = self.residual(&pi) / self.exit_max.max(1.0);
        if res > 1e-12 {
            return Err(Error::Solver(format!("stationary residual {res:e}")));
        }
        Ok(pi)
    }

    /// ‖πQ‖∞
    pub fn residual(&self, pi: &[f64]) -> f64 {
        self.apply_left(pi).iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// E[η_v(x) η_{v+τ}(y)] for every y, starting from the law at time v.
    pub fn two_time_moments(&self, dist_v: &[f64], x: usize, tau: f64) -> Result<Vec<f64>> {
        let tilted: Vec<f64> = dist_v.iter().zip(self.space.states()).map(|(p, c)| p * c.getf(x)).collect();
        let q = self.evolve_measure(&tilted, tau)?;
        Ok((1..self.space.n).map(|y| q.iter().zip(self.space.states()).map(|(w, c)| w * c.getf(y)).sum()).collect())
    }
}

/// One- and two-point moments of an exact distribution.
#[derive(Clone, Debug)]
pub struct ExactMoments {
    pub alpha: u32,
    /// E[η(x)], index x-1.
    pub density: Vec<f64>,
    /// E[η(x)η(y)] (the diagonal holds E[η(x)²]).
    pub pair: DMatrix<f64>,
    /// E[η(x)(η(x)−1)].
    pub factorial: Vec<f64>,
}

pub fn exact_moments(space: &StateSpace, dist: &[f64]) -> Result<ExactMoments> {
    if dist.len() != space.len() {
        return domain("distribution length does not match the state space");
    }
    let m = space.n - 1;
    let mut density = vec![0.0; m];
    let mut pair = DMatrix::zeros(m, m);
    let mut factorial = vec![0.0; m];
    for (p, c) in dist.iter().zip(space.states()) {
        if *p == 0.0 {
            continue;
        }
        for i in 0..m {
            let a = c.values()[i] as f64;
            density[i] += p * a;
            factorial[i] += p * a * (a - 1.0);
            for j in i..m {
                pair[(i, j)] += p * a * c.values()[j] as f64;
            }
        }
    }
    for i in 0..m {
        for j in 0..i {
            pair[(i, j)] = pair[(j, i)];
        }
    }
    Ok(ExactMoments { alpha: space.alpha, density, pair, factorial })
}

impl ExactMoments {
    /// Extended correlation φ(x,y); the diagonal uses the factorial-moment extension.
    pub fn phi(&self, x: usize, y: usize) -> Result<f64> {
        let (i, j) = (x - 1, y - 1);
        if i != j {
            return Ok(self.pair[(i, j)] - self.density[i] * self.density[j]);
        }
        if self.alpha == 1 {
            return domain("the diagonal extension is undefined for alpha = 1");
        }
        let a = self.alpha as f64;
        Ok(a / (a - 1.0) * self.factorial[i] - self.density[i] * self.density[i])
    }

    pub fn variance(&self, x: usize) -> f64 {
        self.pair[(x - 1, x - 1)] - self.density[x - 1].powi(2)
    }
}

/// Σ p log(p/q) over the support of p.
pub fn relative_entropy(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{gamma_pair, reservoir_rates};

    fn p(alpha: u32, n: usize, theta: f64) -> ModelParams {
        ModelParams::new(alpha, 0.7, 0.4, 0.3 * alpha as f64, 0.8 * alpha as f64, theta, n).unwrap()
    }

    #[test]
    fn generator_n3_entries() {
        let pr = ModelParams::new(1, 1.0, 1.0, 0.3, 0.6, 0.0, 3).unwrap();
        let g = build_generator(&pr, DEFAULT_STATE_CAP).unwrap();
        assert_eq!(g.space.len(), 4);
        let c = Configuration::new(vec![1, 0], 1).unwrap();
        let i = g.space.index(&c);
        let exit = -g.q.get(i, i) / 9.0;
        assert!((exit - (1.0 + 0.7 + 0.6)).abs() < 1e-14);
        let rr = reservoir_rates(&c, &pr);
        let rem = Configuration::new(vec![0, 0], 1).unwrap();
        assert!((g.q.get(i, g.space.index(&rem)) - 9.0 * rr.rem_l).abs() < 1e-14);
    }

    #[test]
    fn rows_sum_to_zero_and_binomial_is_invariant() {
        for alpha in 1..=3 {
            for n in 3..=4 {
                let mut pr = p(alpha, n, 0.5);
                let g = build_generator(&pr, DEFAULT_STATE_CAP).unwrap();
                let ones = vec![1.0; g.space.len()];
                assert!(g.apply(&ones).iter().all(|v| v.abs() < 1e-12));
                pr.rho_r = pr.rho_l;
                pr.lambda_r = pr.lambda_l;
                let g = build_generator(&pr, DEFAULT_STATE_CAP).unwrap();
                let pi = g.space.equilibrium(pr.rho_l);
                assert!(g.residual(&pi) < 1e-12);
            }
        }
    }

    #[test]
    fn stationary_and_evolution() {
        let pr = ModelParams::new(1, 1.0, 1.0, 0.5, 0.5, 0.0, 3).unwrap();
        let g = build_generator(&pr, DEFAULT_STATE_CAP).unwrap();
        let pi = g.stationary_distribution().unwrap();
        assert!(pi.iter().all(|v| (v - 0.25).abs() < 1e-12));
        let pr = p(1, 3, 0.0);
        let g = build_generator(&pr, DEFAULT_STATE_CAP).unwrap();
        let pi = g.stationary_distribution().unwrap();
        let kept = g.evolve_distribution(&pi, 0.3).unwrap();
        assert!(kept.iter().zip(&pi).all(|(a, b)| (a - b).abs() < 1e-12));
        let p0 = g.space.point_mass(&Configuration::empty(3));
        let late = g.evolve_distribution(&p0, 20.0).unwrap();
        assert!(late.iter().zip(&pi).all(|(a, b)| (a - b).abs() < 1e-10));
        assert_eq!(g.evolve_distribution(&p0, 0.0).unwrap(), p0);
        assert!(g.evolve_distribution(&[-0.5, 1.5, 0.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        let pr = p(3, 12, 0.0);
        assert!(matches!(build_generator(&pr, DEFAULT_STATE_CAP), Err(Error::Size { .. })));
    }

    #[test]
    fn moments_examples() {
        let space = StateSpace::new(2, 3, DEFAULT_STATE_CAP).unwrap();
        let pi = space.equilibrium(0.8);
        let m = exact_moments(&space, &pi).unwrap();
        for x in 1..3 {
            for y in 1..3 {
                assert!(m.phi(x, y).unwrap().abs() < 1e-14);
            }
        }
        let c = Configuration::new(vec![2, 1], 2).unwrap();
        let m = exact_moments(&space, &space.point_mass(&c)).unwrap();
        assert_eq!(m.pair[(0, 1)], 2.0);
        let mut d = vec![0.0; space.len()];
        d[space.index(&Configuration::new(vec![0, 0], 2).unwrap())] = 0.5;
        d[space.index(&Configuration::new(vec![2, 0], 2).unwrap())] = 0.5;
        let m = exact_moments(&space, &d).unwrap();
        assert!((m.phi(1, 1).unwrap() - 1.0).abs() < 1e-15);
        let s1 = StateSpace::new(1, 3, DEFAULT_STATE_CAP).unwrap();
        let m1 = exact_moments(&s1, &s1.equilibrium(0.5)).unwrap();
        assert!(m1.phi(1, 1).is_err());
    }

    #[test]
    fn gamma_matches_generator_expansion() {
        for alpha in 1..=3 {
            for n in 3..=5 {
                let pr = p(alpha, n, 0.7);
                let g = build_generator(&pr, DEFAULT_STATE_CAP).unwrap();
                let n2 = pr.nf().powi(2);
                for x in 1..n {
                    let ex = g.space.observable(|c| c.getf(x));
                    let lex = g.apply(&ex);
                    for y in x..n {
                        let ey = g.space.observable(|c| c.getf(y));
                        let exy = g.space.observable(|c| c.getf(x) * c.getf(y));
                        let ley = g.apply(&ey);
                        let lexy = g.apply(&exy);
                        for (k, c) in g.space.states().iter().enumerate() {
                            let lhs = (lexy[k] - ex[k] * ley[k] - ey[k] * lex[k]) / n2;
                            let rhs = gamma_pair(c, x, y, &pr).unwrap();
                            assert!((lhs - rhs).abs() < 1e-11, "{alpha} {n} {x} {y} {lhs} {rhs}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn entropy_decreases_towards_equilibrium() {
        let mut pr = p(2, 4, 0.0);
        pr.rho_r = pr.rho_l;
        let g = build_generator(&pr, DEFAULT_STATE_CAP).unwrap();
        let eq = g.space.equilibrium(pr.rho_l);
        let p0 = g.space.point_mass(&Configuration::filled(4, 2));
        let mut last = f64::INFINITY;
        for k in 0..10 {
            let pt = g.evolve_distribution(&p0, 0.02 * k as f64).unwrap();
            let h = relative_entropy(&pt, &eq);
            assert!(h <= last + 1e-12);
            last = h;
        }
    }
}
