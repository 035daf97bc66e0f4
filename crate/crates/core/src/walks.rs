//! Occupation times and kernels of the triangle and line walks, plus
//! discrete maximum-principle checkers.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::linalg::{solve_sparse, BandedLu, SparseMatrix};
use crate::model::ModelParams;
use crate::moments::{killing_potential, triangle_moves, triangle_operator, Kernel1d, TriangleLattice, Walk};
use crate::ode::{self, ExpSum, LinearProblem};
use crate::spectral::discrete_kernel;

/// A field on V̄_N that vanishes on ∂V_N.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupationSolution {
    pub lattice: TriangleLattice,
    pub values: Vec<f64>,
}

impl OccupationSolution {
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.lattice.index(x, y).map_or(0.0, |i| self.values[i])
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }
}

/// (N−y)x/(N²(αN−1)) − 1(y=x)/(2N(αN−1)) for x ≤ y.
pub fn occupation_closed_form_value(n: usize, alpha: u32, x: usize, y: usize) -> f64 {
    let (x, y) = if x <= y { (x, y) } else { (y, x) };
    if x == 0 || y >= n {
        return 0.0;
    }
    let nf = n as f64;
    let d = alpha as f64 * nf - 1.0;
    let mut v = (nf - y as f64) * x as f64 / (nf * nf * d);
    if x == y {
        v -= 1.0 / (2.0 * nf * d);
    }
    v
}

/// Closed form for uniform bond rate α (θ = 0, λ^ℓ = λ^r = 1).
pub fn occupation_closed_form(n: usize, alpha: u32) -> OccupationSolution {
    let lattice = TriangleLattice::new(n, alpha);
    let values = lattice.points().iter().map(|&(x, y)| occupation_closed_form_value(n, alpha, x, y)).collect();
    OccupationSolution { lattice, values }
}

/// Solves N²Δ T = −1(D_N^+) with T = 0 on ∂V_N.
pub fn occupation_solve(p: &ModelParams) -> Result<OccupationSolution> {
    p.validate()?;
    let lattice = TriangleLattice::new(p.n, p.alpha);
    let a = triangle_operator(p, &lattice, Walk::Absorbed).scaled(-1.0);
    let mut rhs = vec![0.0; lattice.len()];
    for i in lattice.upper() {
        rhs[i] = 1.0;
    }
    let (values, res) = solve_sparse(&a, &rhs)?;
    if res > 1e-10 {
        return Err(Error::Solver(format!("occupation residual {res:e}")));
    }
    Ok(OccupationSolution { lattice, values })
}

/// Scale of the bound on max T: 1/N + N^θ/N^{3 if θ>0 else 1}.
pub fn occupation_bound_scale(n: usize, theta: f64) -> f64 {
    let nf = n as f64;
    let e = if theta > 0.0 { 3.0 } else { 1.0 };
    1.0 / nf + nf.powf(theta) / nf.powf(e)
}

/// Non-positive killing potential of the absorbed walk; the diagonal corners
/// carry the doubled rate of the diagonal moves.
pub fn potential_field(p: &ModelParams) -> Vec<f64> {
    killing_potential(p, &TriangleLattice::new(p.n, p.alpha))
}

/// E_z ∫_0^t 1(X_s ∈ D_N^+) ds for the reflected walk, for every start z.
pub fn reflected_occupation_field(t: f64, p: &ModelParams) -> Result<OccupationSolution> {
    if t < 0.0 {
        return domain("negative time");
    }
    let lattice = TriangleLattice::new(p.n, p.alpha);
    let op = triangle_operator(p, &lattice, Walk::Reflected);
    let w = lattice.weights(p.alpha);
    let src = ExpSum { terms: vec![(0.0, lattice.upper().into_iter().map(|i| (i, 1.0)).collect())] };
    let prob = LinearProblem { op: &op, weights: Some(&w), source: &src };
    let u0 = vec![0.0; lattice.len()];
    let values = ode::auto_integrator(lattice.len()).solve(&prob, &u0, &[t])?.remove(0);
    Ok(OccupationSolution { lattice, values })
}

pub fn reflected_occupation(start: (usize, usize), t: f64, p: &ModelParams) -> Result<f64> {
    let lat = TriangleLattice::new(p.n, p.alpha);
    if lat.index(start.0, start.1).is_none() {
        return domain(format!("start {start:?} is not in the interior of the triangle"));
    }
    Ok(reflected_occupation_field(t, p)?.get(start.0, start.1))
}

/// Monte Carlo estimate (mean, standard error) of the reflected occupation time.
pub fn reflected_occupation_mc(
    start: (usize, usize),
    t: f64,
    p: &ModelParams,
    paths: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let lat = TriangleLattice::new(p.n, p.alpha);
    if lat.index(start.0, start.1).is_none() {
        return domain("start outside the triangle");
    }
    if paths < 2 {
        return domain("need at least two paths");
    }
    let n2 = p.nf() * p.nf();
    let (mut s, mut s2) = (0.0, 0.0);
    for _ in 0..paths {
        let (mut x, mut y) = start;
        let mut clock = 0.0;
        let mut occ = 0.0;
        while clock < t {
            let moves: Vec<_> =
                triangle_moves(p, x, y).into_iter().filter(|((u, v), _)| lat.index(*u, *v).is_some()).collect();
            let total: f64 = moves.iter().map(|m| m.1).sum::<f64>() * n2;
            let dt = -(1.0 - rng.gen::<f64>()).ln() / total;
            let stay = dt.min(t - clock);
            if y == x + 1 {
                occ += stay;
            }
            clock += dt;
            if clock >= t {
                break;
            }
            let mut r = rng.gen::<f64>() * total / n2;
            let mut next = moves[moves.len() - 1].0;
            for (m, rate) in &moves {
                if r < *rate {
                    next = *m;
                    break;
                }
                r -= rate;
            }
            (x, y) = if next.0 <= next.1 { next } else { (next.1, next.0) };
        }
        s += occ;
        s2 += occ * occ;
    }
    let m = s / paths as f64;
    let var = (s2 - paths as f64 * m * m) / (paths as f64 - 1.0);
    Ok((m, (var.max(0.0) / paths as f64).sqrt()))
}

/// P^{N,θ}_t for the line walk with reservoir-weighted end bonds.
#[derive(Clone, Debug)]
pub struct TransitionKernel {
    kernel: Kernel1d,
}

impl TransitionKernel {
    pub fn new(p: &ModelParams) -> Self {
        Self { kernel: Kernel1d::new(p) }
    }

    pub fn at(&self, x: usize, y: usize, t: f64) -> f64 {
        self.kernel.entry(x, y, t)
    }
}

pub fn transition_kernel(x: usize, y: usize, t: f64, p: &ModelParams) -> Result<f64> {
    if x == 0 || y == 0 || x >= p.n || y >= p.n {
        return domain("sites must lie in 1..N-1");
    }
    if t < 0.0 {
        return domain("negative time");
    }
    Ok(TransitionKernel::new(p).at(x, y, t))
}

const RUNNING_MAX_GRID: usize = 400;

#[derive(Clone, Debug, PartialEq)]
pub struct DominationReport {
    pub samples: usize,
    pub min_margin: f64,
    /// (x, y, t, margin) for every sample with margin < −1e−12.
    pub violations: Vec<(usize, usize, f64, f64)>,
    /// Violations of the bound with the end terms replaced by their running
    /// maximum over [0, t], which is what the parabolic maximum principle gives.
    pub running_max_violations: usize,
    pub running_max_min_margin: f64,
}

/// Checks P^{N,θ}_t(x,y) against the reference kernel bound on every sample.
///
/// For θ < 0 the comparison needs λ^j ≥ N^θ at both ends.
pub fn kernel_domination_check(samples: &[(usize, usize, f64)], p: &ModelParams) -> Result<DominationReport> {
    let nt = p.nf().powf(p.theta);
    if p.theta < 0.0 && (p.lambda_l < nt || p.lambda_r < nt) {
        return Err(Error::Precondition(format!("theta < 0 needs lambda >= N^theta = {nt:e} at both reservoirs")));
    }
    let k = TransitionKernel::new(p);
    let n = p.n;
    let mut rep = DominationReport {
        samples: samples.len(),
        min_margin: f64::INFINITY,
        violations: Vec::new(),
        running_max_violations: 0,
        running_max_min_margin: f64::INFINITY,
    };
    let (cl, cr) = (nt / p.lambda_l - 1.0, nt / p.lambda_r - 1.0);
    for &(x, y, t) in samples {
        if x == 0 || y == 0 || x >= n || y >= n || t < 0.0 {
            return domain(format!("bad sample ({x}, {y}, {t})"));
        }
        let pt = k.at(x, y, t);
        let base = discrete_kernel(x, y, t, n, p.alpha);
        let (mut bound, mut running) = (base, base);
        if p.theta >= 0.0 {
            let ends =
                |s: f64| (cl * discrete_kernel(1, y, s, n, p.alpha), cr * discrete_kernel(n - 1, y, s, n, p.alpha));
            let (el, er) = ends(t);
            bound += el + er;
            let peak = (0..=RUNNING_MAX_GRID)
                .map(|i| ends(t * i as f64 / RUNNING_MAX_GRID as f64))
                .fold(0.0f64, |m, (a, b)| m.max(a).max(b));
            running += peak;
        }
        let margin = bound - pt;
        rep.min_margin = rep.min_margin.min(margin);
        if margin < -1e-12 {
            rep.violations.push((x, y, t, margin));
        }
        let m2 = running - pt;
        rep.running_max_min_margin = rep.running_max_min_margin.min(m2);
        if m2 < -1e-12 {
            rep.running_max_violations += 1;
        }
    }
    Ok(rep)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Verdict {
    pub holds: bool,
    /// Slack of the asserted inequality; negative when it fails.
    pub margin: f64,
}

fn check_graph_operator(op: &SparseMatrix) -> Result<()> {
    for i in 0..op.n {
        for (j, v) in op.row(i) {
            if j != i && v < 0.0 {
                return Err(Error::Precondition(format!("negative rate {v} from {i} to {j}")));
            }
        }
    }
    Ok(())
}

/// Interior extrema of an op-harmonic f are attained on the boundary.
pub fn max_principle_elliptic(op: &SparseMatrix, f: &[f64], boundary: &[bool]) -> Result<Verdict> {
    check_graph_operator(op)?;
    let lf = op.apply(f);
    let scale = f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let (mut bmax, mut bmin, mut imax, mut imin) = (f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..f.len() {
        if boundary[i] {
            bmax = bmax.max(f[i]);
            bmin = bmin.min(f[i]);
        } else {
            if lf[i].abs() > 1e-9 * scale {
                return Err(Error::Precondition(format!("not harmonic at {i}: residual {:e}", lf[i])));
            }
            imax = imax.max(f[i]);
            imin = imin.min(f[i]);
        }
    }
    if !bmax.is_finite() {
        return Err(Error::Precondition("empty boundary".into()));
    }
    let margin = (bmax - imax).min(imin - bmin);
    Ok(Verdict { holds: margin >= -1e-12 * scale, margin })
}

/// op f ≥ 0 in Ω and f = 0 on ∂Ω imply f ≤ 0 in Ω.
pub fn max_principle_markov(op: &SparseMatrix, f: &[f64], absorbing: &[bool]) -> Result<Verdict> {
    check_graph_operator(op)?;
    let lf = op.apply(f);
    let scale = f.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut worst = f64::INFINITY;
    for i in 0..f.len() {
        if absorbing[i] {
            if f[i] != 0.0 {
                return Err(Error::Precondition(format!("f({i}) = {} on the absorbing set", f[i])));
            }
        } else {
            if lf[i] < -1e-9 * scale {
                return Err(Error::Precondition(format!("op f = {:e} < 0 at {i}", lf[i])));
            }
            worst = worst.min(-f[i]);
        }
    }
    Ok(Verdict { holds: worst >= -1e-12 * scale, margin: worst })
}

/// A trajectory with ∂_t f ≤ op f (backward differences) and zero lateral values
/// never exceeds max(0, max f_0).
pub fn max_principle_parabolic(op: &SparseMatrix, path: &[(f64, Vec<f64>)], absorbing: &[bool]) -> Result<Verdict> {
    check_graph_operator(op)?;
    if path.is_empty() {
        return domain("empty trajectory");
    }
    let scale = path.iter().flat_map(|(_, f)| f.iter()).fold(1.0f64, |m, v| m.max(v.abs()));
    for w in path.windows(2) {
        let ((t0, f0), (t1, f1)) = (&w[0], &w[1]);
        let dt = t1 - t0;
        if dt <= 0.0 {
            return domain("trajectory times must increase");
        }
        let lf = op.apply(f1);
        for i in 0..f1.len() {
            if absorbing[i] {
                if f1[i] != 0.0 {
                    return Err(Error::Precondition(format!("nonzero lateral value at {i}")));
                }
                continue;
            }
            let r = (f1[i] - f0[i]) / dt - lf[i];
            if r > 1e-9 * scale / dt.min(1.0) {
                return Err(Error::Precondition(format!("d_t f - op f = {r:e} > 0 at {i}, t = {t1}")));
            }
        }
    }
    let cap = path[0].1.iter().copied().fold(0.0, f64::max);
    let sup = path.iter().flat_map(|(_, f)| f.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
    let margin = cap - sup;
    Ok(Verdict { holds: margin >= -1e-12 * scale, margin })
}

/// Backward Euler path of ∂_t f = op f + s with zero lateral values.
pub fn backward_euler_path(
    op: &SparseMatrix,
    f0: &[f64],
    source: &[f64],
    dt: f64,
    steps: usize,
    absorbing: &[bool],
) -> Result<Vec<(f64, Vec<f64>)>> {
    let rows = (0..op.n).map(|i| if absorbing[i] { vec![(i, 0.0)] } else { op.row(i).collect() }).collect();
    let masked = SparseMatrix::from_rows(rows);
    let lu = BandedLu::new(&masked, 1.0, -dt)?;
    let mut f = f0.to_vec();
    let mut out = vec![(0.0, f.clone())];
    for k in 1..=steps {
        for i in 0..f.len() {
            if !absorbing[i] {
                f[i] += dt * source[i];
            }
        }
        lu.solve_in_place(&mut f);
        out.push((k as f64 * dt, f.clone()));
    }
    Ok(out)
}

/// Random positive-rate operator on a path of `n` nodes with a few extra chords
/// of bounded span; row sums are zero.
pub fn random_graph_operator(n: usize, rng: &mut ChaCha8Rng) -> SparseMatrix {
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let link = |rows: &mut Vec<Vec<(usize, f64)>>, i: usize, j: usize, r: f64| {
        rows[i].push((j, r));
        rows[i].push((i, -r));
    };
    for i in 0..n - 1 {
        let r = rng.gen_range(0.1..2.0);
        link(&mut rows, i, i + 1, r);
        let r = rng.gen_range(0.1..2.0);
        link(&mut rows, i + 1, i, r);
        if i + 3 < n && rng.gen_bool(0.3) {
            let r = rng.gen_range(0.0..1.0);
            link(&mut rows, i, i + 3, r);
        }
    }
    SparseMatrix::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn uniform(alpha: u32, n: usize) -> ModelParams {
        ModelParams::new(alpha, 1.0, 1.0, 0.3, 0.6, 0.0, n).unwrap()
    }

    #[test]
    fn closed_form_spot_values() {
        assert!((occupation_closed_form_value(4, 1, 1, 3) - 1.0 / 48.0).abs() < 1e-15);
        assert!((occupation_closed_form_value(4, 1, 2, 2) - 1.0 / 24.0).abs() < 1e-15);
        assert_eq!(occupation_closed_form_value(4, 1, 0, 2), 0.0);
    }

    #[test]
    fn solve_matches_closed_form() {
        for alpha in 1..=3 {
            for n in [4, 9, 32, 64] {
                let s = occupation_solve(&uniform(alpha, n)).unwrap();
                let c = occupation_closed_form(n, alpha);
                let err = s.values.iter().zip(&c.values).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                assert!(err < 1e-12, "alpha {alpha} n {n}: {err:e}");
            }
        }
    }

    #[test]
    fn occupation_monotone_in_boundary_rate() {
        let slow = ModelParams::new(2, 0.3, 0.5, 0.5, 1.0, 1.0, 12).unwrap();
        let fast = ModelParams::new(2, 0.9, 0.5, 0.5, 1.0, 1.0, 12).unwrap();
        let (a, b) = (occupation_solve(&slow).unwrap(), occupation_solve(&fast).unwrap());
        assert!(a.values.iter().all(|v| *v >= 0.0));
        assert!(a.values.iter().zip(&b.values).all(|(s, f)| f <= s));
    }

    #[test]
    fn reflected_zero_time_and_mc() {
        let p = ModelParams::new(2, 0.7, 0.5, 0.5, 1.0, 1.0, 4).unwrap();
        assert_eq!(reflected_occupation((1, 2), 0.0, &p).unwrap(), 0.0);
        let exact = reflected_occupation((1, 2), 0.3, &p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (m, se) = reflected_occupation_mc((1, 2), 0.3, &p, 100_000, &mut rng).unwrap();
        assert!((m - exact).abs() < 4.0 * se, "{m} {exact} {se}");
    }

    #[test]
    fn kernel_matches_reference_and_limits() {
        let p = uniform(2, 10);
        let k = TransitionKernel::new(&p);
        for (x, y, t) in [(1, 1, 0.0), (2, 7, 0.01), (5, 5, 0.2), (9, 3, 0.05)] {
            assert!((k.at(x, y, t) - discrete_kernel(x, y, t, 10, 2)).abs() < 1e-9);
        }
        let fast = ModelParams::new(2, 1.0, 1.0, 0.3, 0.6, -4.0, 32).unwrap();
        let k = TransitionKernel::new(&fast);
        let row: f64 = (1..32).map(|y| k.at(1, y, 1.0 / 32.0)).sum();
        assert!(row < 1e-3);
    }

    #[test]
    fn domination_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<_> =
            (0..200).map(|_| (rng.gen_range(1..32), rng.gen_range(1..32), rng.gen_range(0.0..0.5))).collect();
        for (theta, ll, lr) in [(-1.0, 1.0, 1.0), (-0.5, 0.5, 0.9), (-3.0, 0.2, 1.0)] {
            let p = ModelParams::new(2, ll, lr, 0.3, 0.6, theta, 32).unwrap();
            let r = kernel_domination_check(&samples, &p).unwrap();
            assert!(r.violations.is_empty(), "theta {theta}: {:?}", r.violations.first());
        }
        let r = kernel_domination_check(&samples, &uniform(2, 32)).unwrap();
        assert!(r.min_margin.abs() < 1e-12 && r.violations.is_empty());
        // for θ > 0 only the running-maximum form survives
        let p = ModelParams::new(2, 0.4, 0.8, 0.3, 0.6, 2.0, 32).unwrap();
        let r = kernel_domination_check(&samples, &p).unwrap();
        assert!(!r.violations.is_empty());
        assert_eq!(r.running_max_violations, 0);
        let bad = ModelParams::new(2, 0.01, 0.01, 0.3, 0.6, -0.5, 32).unwrap();
        assert!(matches!(kernel_domination_check(&samples, &bad), Err(Error::Precondition(_))));
    }

    #[test]
    fn domination_can_fail_below_the_rate_threshold() {
        // with λ < N^θ the end bonds are slower than the reference bonds
        let p = ModelParams::new(2, 0.01, 0.01, 0.3, 0.6, -0.5, 32).unwrap();
        let k = TransitionKernel::new(&p);
        assert!(k.at(1, 1, 0.01) > discrete_kernel(1, 1, 0.01, 32, 2));
    }

    fn boundary_mask(n: usize) -> Vec<bool> {
        (0..n).map(|i| i == 0 || i == n - 1).collect()
    }

    #[test]
    fn elliptic_checker() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 12;
        let op = random_graph_operator(n, &mut rng);
        let b = boundary_mask(n);
        let f = vec![0.7; n];
        assert!(max_principle_elliptic(&op, &f, &b).unwrap().holds);
        let harm = harmonic_extension(&op, &b, 1.3, -0.4);
        assert!(max_principle_elliptic(&op, &harm, &b).unwrap().holds);
        let mut bent = harm.clone();
        bent[5] += 0.1;
        assert!(matches!(max_principle_elliptic(&op, &bent, &b), Err(Error::Precondition(_))));
    }

    fn harmonic_extension(op: &SparseMatrix, b: &[bool], left: f64, right: f64) -> Vec<f64> {
        let n = op.n;
        let rows = (0..n).map(|i| if b[i] { vec![(i, 1.0)] } else { op.row(i).collect() }).collect();
        let mut rhs = vec![0.0; n];
        rhs[0] = left;
        rhs[n - 1] = right;
        solve_sparse(&SparseMatrix::from_rows(rows), &rhs).unwrap().0
    }

    #[test]
    fn markov_checker() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 10;
        let op = random_graph_operator(n, &mut rng);
        let b = boundary_mask(n);
        let rows = (0..n).map(|i| if b[i] { vec![(i, 1.0)] } else { op.row(i).collect() }).collect();
        let m = SparseMatrix::from_rows(rows);
        let rhs: Vec<f64> = (0..n).map(|i| if b[i] { 0.0 } else { rng.gen_range(0.0..1.0) }).collect();
        let mut f = solve_sparse(&m, &rhs).unwrap().0;
        f[0] = 0.0;
        f[n - 1] = 0.0;
        assert!(max_principle_markov(&op, &f, &b).unwrap().holds);
        assert!(max_principle_markov(&op, &vec![0.0; n], &b).unwrap().holds);
        let mixed: Vec<f64> = (0..n)
            .map(|i| {
                if b[i] {
                    0.0
                } else if i % 2 == 0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let g = solve_sparse(&m, &mixed).unwrap().0;
        assert!(matches!(max_principle_markov(&op, &g, &b), Err(Error::Precondition(_))));
    }

    #[test]
    fn parabolic_checker() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 10;
        let op = random_graph_operator(n, &mut rng);
        let b = boundary_mask(n);
        let f0: Vec<f64> = (0..n).map(|i| if b[i] { 0.0 } else { -rng.gen_range(0.0..1.0) }).collect();
        let path = backward_euler_path(&op, &f0, &vec![0.0; n], 0.01, 50, &b).unwrap();
        assert!(max_principle_parabolic(&op, &path, &b).unwrap().holds);
        let zero = backward_euler_path(&op, &vec![0.0; n], &vec![0.0; n], 0.01, 5, &b).unwrap();
        assert!(zero.iter().all(|(_, f)| f.iter().all(|v| *v == 0.0)));
        let hot = backward_euler_path(&op, &f0, &vec![1.0; n], 0.01, 5, &b).unwrap();
        assert!(matches!(max_principle_parabolic(&op, &hot, &b), Err(Error::Precondition(_))));
    }

    #[test]
    fn feynman_kac_bound() {
        let p = ModelParams::new(2, 0.6, 0.6, 0.3, 1.7, 2.0, 16).unwrap();
        let prof: Vec<f64> = (1..16).map(|x| 0.3 + 1.4 * x as f64 / 16.0).collect();
        let d = crate::moments::DensitySolver::new(&p, &prof).unwrap();
        let phi0 = crate::moments::CorrelationField::zeros(&p, 0.0);
        let t = 0.3;
        let phi = crate::moments::evolve_correlation(&phi0, &d, &[t], None).unwrap().remove(0);
        // sup of the source over [0,t]
        let gmax = (0..=60)
            .map(|k| {
                let r = d.profile(t * k as f64 / 60.0);
                crate::moments::correlation_source(&r).iter().fold(0.0f64, |m, v| m.max(v.abs()))
            })
            .fold(0.0, f64::max);
        let occ = reflected_occupation_field(t, &p).unwrap();
        for (i, v) in phi.values.iter().enumerate() {
            assert!(v.abs() <= 1.05 * gmax * occ.values[i] + 1e-12);
        }
    }
}
