//! Integrators for linear systems u' = A u + s(t), selectable by name.
//!
//! Every strategy implements [`LinearIntegrator`] and is registered in a
//! process-wide table; callers pick one with [`integrator`] or let
//! [`auto_integrator`] choose from the system size.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::DMatrix;

use crate::error::{domain, Error, Result};
use crate::linalg::{exp_convolution, sym_eigen, BandedLu, SparseMatrix};

/// Time-dependent forcing term.
pub trait Source: Sync {
    fn eval(&self, t: f64, out: &mut [f64]);

    /// Representation Σ_k e^{−r_k t} v_k, when one is available.
    fn exp_sum(&self) -> Option<ExpSum> {
        None
    }
}

/// Σ_k e^{−rate_k t} v_k with sparse vectors.
#[derive(Clone, Debug, Default)]
pub struct ExpSum {
    pub terms: Vec<(f64, Vec<(usize, f64)>)>,
}

impl Source for ExpSum {
    fn eval(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (r, v) in &self.terms {
            let e = (-r * t).exp();
            for &(i, x) in v {
                out[i] += e * x;
            }
        }
    }

    fn exp_sum(&self) -> Option<ExpSum> {
        Some(self.clone())
    }
}

pub struct NoSource;

impl Source for NoSource {
    fn eval(&self, _t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }

    fn exp_sum(&self) -> Option<ExpSum> {
        Some(ExpSum::default())
    }
}

pub struct LinearProblem<'a> {
    pub op: &'a SparseMatrix,
    /// Positive weights w with w_i A_ij = w_j A_ji, if A is reversible.
    pub weights: Option<&'a [f64]>,
    pub source: &'a dyn Source,
}

pub trait LinearIntegrator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Solution at each of the (ascending, non-negative) `times`.
    fn solve(&self, prob: &LinearProblem, u0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>>;
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.iter().any(|&t| t < 0.0 || !t.is_finite()) {
        return domain("output times must be finite and non-negative");
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return domain("output times must be ascending");
    }
    Ok(())
}

/// Exact solution through the eigen-decomposition of the symmetrised operator.
///
/// Requires reversible A and a source given as a sum of exponentials; every
/// exponential is convolved with every mode in closed form.
pub struct Modal;

impl LinearIntegrator for Modal {
    fn name(&self) -> &'static str {
        "modal"
    }

    fn solve(&self, prob: &LinearProblem, u0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_times(times)?;
        let n = prob.op.n;
        let w = prob.weights.ok_or_else(|| Error::Domain("modal integration needs a reversible operator".into()))?;
        let src = prob
            .source
            .exp_sum()
            .ok_or_else(|| Error::Domain("modal integration needs an exponential-sum source".into()))?;
        let sq: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, a) in prob.op.row(i) {
                s[(i, j)] += 0.5 * a * sq[i] / sq[j];
                s[(j, i)] += 0.5 * a * sq[i] / sq[j];
            }
        }
        let e = sym_eigen(s);
        let u = &e.vectors;
        let q0: Vec<f64> = (0..n).map(|k| (0..n).map(|i| u[(i, k)] * sq[i] * u0[i]).sum()).collect();
        // projected source terms, one row per exponential
        let proj: Vec<(f64, Vec<f64>)> = src
            .terms
            .iter()
            .map(|(r, v)| {
                let c = (0..n).map(|k| v.iter().map(|&(i, x)| u[(i, k)] * sq[i] * x).sum()).collect();
                (*r, c)
            })
            .collect();
        let mut out = Vec::with_capacity(times.len());
        for &t in times {
            let q: Vec<f64> = (0..n)
                .map(|k| {
                    let lam = e.values[k].min(0.0);
                    let mut v = (lam * t).exp() * q0[k];
                    for (r, c) in &proj {
                        v += c[k] * exp_convolution(lam, -r, t);
                    }
                    v
                })
                .collect();
            let sol = (0..n).map(|i| (0..n).map(|k| u[(i, k)] * q[k]).sum::<f64>() / sq[i]).collect();
            out.push(sol);
        }
        Ok(out)
    }
}

/// L-stable TR-BDF2 on a graded mesh.
///
/// The step grows like `grading·t` from a floor set by the stiffness, is capped
/// at `max_step`, and is rounded down to a power of 2^{1/4} so that only a few
/// banded factorisations are needed.
pub struct TrBdf2 {
    pub max_step: f64,
    pub grading: f64,
}

const GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;

struct Stepper<'a> {
    prob: &'a LinearProblem<'a>,
    cache: HashMap<i64, BandedLu>,
    s0: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
    au: Vec<f64>,
    ug: Vec<f64>,
}

impl Stepper<'_> {
    fn step(&mut self, u: &mut [f64], t: f64, h: f64, key: Option<i64>) -> Result<()> {
        let g = GAMMA;
        let fresh;
        let fac = match key {
            Some(k) => {
                if !self.cache.contains_key(&k) {
                    self.cache.insert(k, BandedLu::new(self.prob.op, 1.0, -0.5 * g * h)?);
                }
                &self.cache[&k]
            }
            None => {
                fresh = BandedLu::new(self.prob.op, 1.0, -0.5 * g * h)?;
                &fresh
            }
        };
        let src = self.prob.source;
        src.eval(t, &mut self.s0);
        src.eval(t + g * h, &mut self.s1);
        src.eval(t + h, &mut self.s2);
        self.prob.op.matvec(u, &mut self.au);
        for i in 0..u.len() {
            self.ug[i] = u[i] + 0.5 * g * h * (self.au[i] + self.s0[i] + self.s1[i]);
        }
        fac.solve_in_place(&mut self.ug);
        let c1 = 1.0 / (g * (2.0 - g));
        let c0 = (1.0 - g).powi(2) / (g * (2.0 - g));
        let c2 = (1.0 - g) / (2.0 - g) * h;
        for i in 0..u.len() {
            u[i] = c1 * self.ug[i] - c0 * u[i] + c2 * self.s2[i];
        }
        fac.solve_in_place(u);
        Ok(())
    }
}

impl LinearIntegrator for TrBdf2 {
    fn name(&self) -> &'static str {
        "tr-bdf2"
    }

    fn solve(&self, prob: &LinearProblem, u0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_times(times)?;
        let n = prob.op.n;
        let stiff = (0..n).map(|i| prob.op.get(i, i).abs()).fold(1.0, f64::max);
        let h_min = (self.grading / (2.0 * stiff)).min(self.max_step);
        let mut st = Stepper {
            prob,
            cache: HashMap::new(),
            s0: vec![0.0; n],
            s1: vec![0.0; n],
            s2: vec![0.0; n],
            au: vec![0.0; n],
            ug: vec![0.0; n],
        };
        let mut u = u0.to_vec();
        let mut t = 0.0;
        let mut out = Vec::with_capacity(times.len());
        for &target in times {
            while t < target {
                let want = (self.grading * t).max(h_min).min(self.max_step);
                let k = (4.0 * want.log2()).floor() as i64;
                let h = 2f64.powf(k as f64 / 4.0);
                if t + h < target * (1.0 - 1e-12) {
                    st.step(&mut u, t, h, Some(k))?;
                    t += h;
                } else {
                    st.step(&mut u, t, target - t, None)?;
                    t = target;
                }
            }
            out.push(u.clone());
        }
        Ok(out)
    }
}

static REGISTRY: OnceLock<Vec<Box<dyn LinearIntegrator>>> = OnceLock::new();

fn registry() -> &'static [Box<dyn LinearIntegrator>] {
    REGISTRY.get_or_init(|| vec![Box::new(Modal), Box::new(TrBdf2 { max_step: 1e-3, grading: 0.02 })])
}

pub fn integrator(name: &str) -> Option<&'static dyn LinearIntegrator> {
    registry().iter().find(|i| i.name() == name).map(|b| b.as_ref())
}

pub fn integrator_names() -> Vec<&'static str> {
    registry().iter().map(|i| i.name()).collect()
}

/// Largest dimension routed to the dense modal solver by default.
pub const MODAL_MAX_DIM: usize = 700;

pub fn auto_integrator(dim: usize) -> &'static dyn LinearIntegrator {
    if dim <= MODAL_MAX_DIM {
        integrator("modal").unwrap()
    } else {
        integrator("tr-bdf2").unwrap()
    }
}

pub fn resolve(name: Option<&str>, dim: usize) -> Result<&'static dyn LinearIntegrator> {
    match name {
        None | Some("auto") => Ok(auto_integrator(dim)),
        Some(n) => integrator(n)
            .ok_or_else(|| Error::Domain(format!("unknown integrator '{n}', known: {:?}", integrator_names()))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(n: usize) -> SparseMatrix {
        let rows = (0..n)
            .map(|i| {
                let mut r = vec![(i, -2.0 * 50.0)];
                if i > 0 {
                    r.push((i - 1, 50.0));
                }
                if i + 1 < n {
                    r.push((i + 1, 50.0));
                }
                r
            })
            .collect();
        SparseMatrix::from_rows(rows)
    }

    #[test]
    fn integrators_agree() {
        let op = chain(9);
        let w = vec![1.0; 9];
        let src = ExpSum { terms: vec![(0.0, vec![(4, 1.0)]), (3.0, vec![(1, -2.0), (7, 0.5)])] };
        let prob = LinearProblem { op: &op, weights: Some(&w), source: &src };
        let u0: Vec<f64> = (0..9).map(|i| (i as f64 * 0.3).sin()).collect();
        let times = [0.0, 0.01, 0.2, 1.0];
        let a = integrator("modal").unwrap().solve(&prob, &u0, &times).unwrap();
        let b = TrBdf2 { max_step: 5e-5, grading: f64::INFINITY }.solve(&prob, &u0, &times).unwrap();
        for (x, y) in a.iter().zip(&b) {
            for (p, q) in x.iter().zip(y) {
                assert!((p - q).abs() < 1e-6, "{p} {q}");
            }
        }
        assert!(a[0].iter().zip(&u0).all(|(p, q)| (p - q).abs() < 1e-14));
        assert_eq!(b[0], u0);
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(integrator_names(), vec!["modal", "tr-bdf2"]);
        assert!(resolve(Some("euler"), 3).is_err());
        assert_eq!(resolve(None, 10_000).unwrap().name(), "tr-bdf2");
    }
}
