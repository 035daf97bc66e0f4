//! Kinetic Monte Carlo for SEP(α) with reservoirs, at the diffusive time scale.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::linalg::pairwise_sum;
use crate::model::{Configuration, ModelParams, Side};

/// Independent, reproducible stream for one replica of one task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReplicaId {
    pub seed: u64,
    pub stream: u64,
    pub replica: u64,
}

impl ReplicaId {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.stream.to_le_bytes());
        let mut r = ChaCha8Rng::from_seed(key);
        r.set_stream(self.replica);
        r
    }
}

/// Independent Binomial(α, γ(x)/α) occupation at each interior site.
pub fn sample_local_gibbs(profile: &[f64], p: &ModelParams, rng: &mut impl Rng) -> Result<Configuration> {
    if profile.len() != p.sites() {
        return domain(format!("profile has {} entries, expected {}", profile.len(), p.sites()));
    }
    let a = p.a();
    if let Some(v) = profile.iter().find(|v| !(0.0..=a).contains(*v)) {
        return domain(format!("profile value {v} outside [0, alpha]"));
    }
    let eta = profile
        .iter()
        .map(|g| {
            let q = g / a;
            (0..p.alpha).filter(|_| rng.gen::<f64>() < q).count() as u8
        })
        .collect();
    Configuration::new(eta, p.alpha)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Move {
    Hop { from: usize, to: usize },
    Enter(Side),
    Exit(Side),
}

impl Move {
    /// Sites whose occupation changed, with the sign of the change.
    pub fn changes(&self, n: usize) -> ([(usize, i8); 2], usize) {
        let end = |s: Side| if s == Side::Left { 1 } else { n - 1 };
        match *self {
            Move::Hop { from, to } => ([(from, -1), (to, 1)], 2),
            Move::Enter(s) => ([(end(s), 1), (0, 0)], 1),
            Move::Exit(s) => ([(end(s), -1), (0, 0)], 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub time: f64,
    pub mv: Move,
}

/// Streaming consumer of a trajectory.
pub trait Observer {
    /// The configuration is `cfg` on [t0, t1].
    fn hold(&mut self, _cfg: &Configuration, _t0: f64, _t1: f64) {}
    /// `cfg` is the state right after `mv` fired at time `t`.
    fn jump(&mut self, _cfg: &Configuration, _mv: Move, _t: f64) {}
}

impl Observer for () {}

/// Forwards to several observers in order.
pub struct Many<'a>(pub Vec<&'a mut dyn Observer>);

impl Observer for Many<'_> {
    fn hold(&mut self, cfg: &Configuration, t0: f64, t1: f64) {
        for o in self.0.iter_mut() {
            o.hold(cfg, t0, t1);
        }
    }

    fn jump(&mut self, cfg: &Configuration, mv: Move, t: f64) {
        for o in self.0.iter_mut() {
            o.jump(cfg, mv, t);
        }
    }
}

/// Configurations at a fixed list of ascending times.
#[derive(Clone, Debug, Default)]
pub struct Snapshots {
    pub times: Vec<f64>,
    pub taken: Vec<Configuration>,
}

impl Snapshots {
    pub fn new(times: &[f64]) -> Self {
        Self { times: times.to_vec(), taken: Vec::with_capacity(times.len()) }
    }
}

impl Observer for Snapshots {
    fn hold(&mut self, cfg: &Configuration, _t0: f64, t1: f64) {
        while self.taken.len() < self.times.len() && self.times[self.taken.len()] <= t1 {
            self.taken.push(cfg.clone());
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct EventLog {
    pub events: Vec<Event>,
}

impl Observer for EventLog {
    fn jump(&mut self, _cfg: &Configuration, mv: Move, t: f64) {
        self.events.push(Event { time: t, mv });
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Cells {
    /// η(x), x = 1..N−1.
    Sites,
    /// η(x)(α−η(x+1)) + η(x+1)(α−η(x)), x = 1..N−2.
    Bonds,
}

/// Time integrals ∫_0^t c_s ds of site or bond observables, updated lazily.
#[derive(Clone, Debug)]
pub struct CellIntegrals {
    kind: Cells,
    alpha: f64,
    cur: Vec<f64>,
    acc: Vec<f64>,
    last: Vec<f64>,
    times: Vec<f64>,
    /// Integrals up to each requested time.
    pub recorded: Vec<Vec<f64>>,
}

impl CellIntegrals {
    pub fn new(kind: Cells, alpha: u32, times: &[f64]) -> Self {
        Self {
            kind,
            alpha: alpha as f64,
            cur: Vec::new(),
            acc: Vec::new(),
            last: Vec::new(),
            times: times.to_vec(),
            recorded: Vec::with_capacity(times.len()),
        }
    }

    fn value(&self, cfg: &Configuration, c: usize) -> f64 {
        match self.kind {
            Cells::Sites => cfg.getf(c + 1),
            Cells::Bonds => {
                let (a, b) = (cfg.getf(c + 1), cfg.getf(c + 2));
                a * (self.alpha - b) + b * (self.alpha - a)
            }
        }
    }

    fn init(&mut self, cfg: &Configuration, t: f64) {
        let m = match self.kind {
            Cells::Sites => cfg.n() - 1,
            Cells::Bonds => cfg.n() - 2,
        };
        self.cur = (0..m).map(|c| self.value(cfg, c)).collect();
        self.acc = vec![0.0; m];
        self.last = vec![t; m];
    }

    fn touch(&mut self, cfg: &Configuration, c: usize, t: f64) {
        self.acc[c] += self.cur[c] * (t - self.last[c]);
        self.last[c] = t;
        self.cur[c] = self.value(cfg, c);
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        (0..self.cur.len()).map(|c| self.acc[c] + self.cur[c] * (t - self.last[c])).collect()
    }
}

impl Observer for CellIntegrals {
    fn hold(&mut self, cfg: &Configuration, t0: f64, t1: f64) {
        if self.cur.is_empty() {
            self.init(cfg, t0);
        }
        while self.recorded.len() < self.times.len() && self.times[self.recorded.len()] <= t1 {
            let t = self.times[self.recorded.len()];
            self.recorded.push(self.at(t));
        }
    }

    fn jump(&mut self, cfg: &Configuration, mv: Move, t: f64) {
        let n = cfg.n();
        let (ch, k) = mv.changes(n);
        for &(x, _) in &ch[..k] {
            match self.kind {
                Cells::Sites => self.touch(cfg, x - 1, t),
                Cells::Bonds => {
                    if x >= 2 {
                        self.touch(cfg, x - 2, t);
                    }
                    if x <= n - 2 {
                        self.touch(cfg, x - 1, t);
                    }
                }
            }
        }
    }
}

/// Binary sum tree over channel rates.
#[derive(Clone, Debug)]
struct RateTree {
    size: usize,
    t: Vec<f64>,
}

impl RateTree {
    fn new(n: usize) -> Self {
        let size = n.next_power_of_two();
        Self { size, t: vec![0.0; 2 * size] }
    }

    fn set(&mut self, i: usize, v: f64) {
        let mut k = i + self.size;
        self.t[k] = v;
        while k > 1 {
            k /= 2;
            self.t[k] = self.t[2 * k] + self.t[2 * k + 1];
        }
    }

    fn total(&self) -> f64 {
        self.t[1]
    }

    fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.size {
            let l = self.t[2 * k];
            if u < l || self.t[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                u -= l;
                k = 2 * k + 1;
            }
        }
        k - self.size
    }
}

/// Exact (Gillespie) simulator. Channels 2b and 2b+1 are the right and left hops
/// across bond {b+1, b+2}; the last four are the reservoir moves.
#[derive(Clone, Debug)]
pub struct Simulator<'a> {
    p: &'a ModelParams,
    cfg: Configuration,
    tree: RateTree,
    time: f64,
    events: u64,
}

impl<'a> Simulator<'a> {
    pub fn new(p: &'a ModelParams, cfg0: Configuration) -> Result<Self> {
        p.validate()?;
        if cfg0.n() != p.n {
            return domain(format!("configuration has N = {}, parameters N = {}", cfg0.n(), p.n));
        }
        if cfg0.values().iter().any(|&v| v as u32 > p.alpha) {
            return domain("configuration exceeds alpha");
        }
        let channels = 2 * (p.n - 2) + 4;
        let mut s = Self { p, cfg: cfg0, tree: RateTree::new(channels), time: 0.0, events: 0 };
        for c in 0..channels {
            s.tree.set(c, s.rate(c));
        }
        Ok(s)
    }

    pub fn config(&self) -> &Configuration {
        &self.cfg
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn event_count(&self) -> u64 {
        self.events
    }

    fn bonds(&self) -> usize {
        self.p.n - 2
    }

    fn rate(&self, c: usize) -> f64 {
        let a = self.p.a();
        let nb = self.bonds();
        if c < 2 * nb {
            let x = c / 2 + 1;
            let (from, to) = if c % 2 == 0 { (x, x + 1) } else { (x + 1, x) };
            return self.cfg.getf(from) * (a - self.cfg.getf(to));
        }
        let s = self.p.reservoir_scale();
        let (e1, en) = (self.cfg.getf(1), self.cfg.getf(self.p.n - 1));
        let p = self.p;
        match c - 2 * nb {
            0 => s * p.lambda_l * p.rho_l * (a - e1),
            1 => s * p.lambda_l * (a - p.rho_l) * e1,
            2 => s * p.lambda_r * p.rho_r * (a - en),
            _ => s * p.lambda_r * (a - p.rho_r) * en,
        }
    }

    fn decode(&self, c: usize) -> Move {
        let nb = self.bonds();
        if c < 2 * nb {
            let x = c / 2 + 1;
            return if c % 2 == 0 { Move::Hop { from: x, to: x + 1 } } else { Move::Hop { from: x + 1, to: x } };
        }
        match c - 2 * nb {
            0 => Move::Enter(Side::Left),
            1 => Move::Exit(Side::Left),
            2 => Move::Enter(Side::Right),
            _ => Move::Exit(Side::Right),
        }
    }

    fn refresh(&mut self, x: usize) {
        let n = self.p.n;
        let nb = self.bonds();
        if x >= 2 {
            for c in [2 * (x - 2), 2 * (x - 2) + 1] {
                self.tree.set(c, self.rate(c));
            }
        }
        if x <= n - 2 {
            for c in [2 * (x - 1), 2 * (x - 1) + 1] {
                self.tree.set(c, self.rate(c));
            }
        }
        if x == 1 {
            self.tree.set(2 * nb, self.rate(2 * nb));
            self.tree.set(2 * nb + 1, self.rate(2 * nb + 1));
        }
        if x == n - 1 {
            self.tree.set(2 * nb + 2, self.rate(2 * nb + 2));
            self.tree.set(2 * nb + 3, self.rate(2 * nb + 3));
        }
    }

    fn apply(&mut self, mv: Move) {
        let (ch, k) = mv.changes(self.p.n);
        for &(x, d) in &ch[..k] {
            self.cfg.bump(x, d > 0);
            debug_assert!(self.cfg.get(x) as u32 <= self.p.alpha);
        }
        for &(x, _) in &ch[..k] {
            self.refresh(x);
        }
    }

    /// Advances to macroscopic time `t_end`, reporting to `obs`.
    pub fn run(&mut self, t_end: f64, rng: &mut impl Rng, obs: &mut dyn Observer) -> Result<()> {
        if t_end < self.time {
            return domain(format!("cannot run backwards to {t_end} from {}", self.time));
        }
        let n2 = self.p.nf() * self.p.nf();
        loop {
            let total = self.tree.total();
            let dt = -(1.0 - rng.gen::<f64>()).ln() / (n2 * total);
            if self.time + dt > t_end {
                obs.hold(&self.cfg, self.time, t_end);
                self.time = t_end;
                return Ok(());
            }
            obs.hold(&self.cfg, self.time, self.time + dt);
            self.time += dt;
            let c = self.tree.find(rng.gen::<f64>() * total);
            let mv = self.decode(c);
            self.apply(mv);
            self.events += 1;
            obs.jump(&self.cfg, mv, self.time);
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub initial: Configuration,
    pub t_end: f64,
    pub events: Option<Vec<Event>>,
    pub final_cfg: Configuration,
    pub id: ReplicaId,
    pub event_count: u64,
}

impl Trajectory {
    /// Replays a logged trajectory into `obs`.
    pub fn replay(&self, obs: &mut dyn Observer) -> Result<()> {
        let ev = self.events.as_ref().ok_or_else(|| crate::Error::Domain("trajectory has no event log".into()))?;
        let n = self.initial.n();
        let mut cfg = self.initial.clone();
        let mut t = 0.0;
        for e in ev {
            obs.hold(&cfg, t, e.time);
            let (ch, k) = e.mv.changes(n);
            for &(x, d) in &ch[..k] {
                cfg.bump(x, d > 0);
            }
            t = e.time;
            obs.jump(&cfg, e.mv, t);
        }
        obs.hold(&cfg, t, self.t_end);
        Ok(())
    }
}

pub fn simulate(
    cfg0: Configuration,
    t_end: f64,
    p: &ModelParams,
    rng: &mut impl Rng,
    id: ReplicaId,
    log_events: bool,
    obs: &mut dyn Observer,
) -> Result<Trajectory> {
    if t_end < 0.0 {
        return domain("negative end time");
    }
    let initial = cfg0.clone();
    let mut sim = Simulator::new(p, cfg0)?;
    let mut log = EventLog::default();
    if log_events {
        sim.run(t_end, rng, &mut Many(vec![&mut log, obs]))?;
    } else {
        sim.run(t_end, rng, obs)?;
    }
    Ok(Trajectory {
        initial,
        t_end,
        events: log_events.then_some(log.events),
        final_cfg: sim.cfg.clone(),
        id,
        event_count: sim.events,
    })
}

/// Runs `f` for replicas 0..count in parallel; the output order is the replica order.
pub fn run_replicas<T: Send>(count: usize, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..count as u64).into_par_iter().map(f).collect()
}

#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct EnsembleEstimate {
    pub mean: f64,
    /// Sample standard deviation over sqrt(replicas).
    pub se: f64,
    pub replicas: usize,
    /// Replicas used the streams (seed, stream, 0..replicas).
    pub seed: u64,
    pub stream: u64,
}

impl EnsembleEstimate {
    pub fn from_values(values: &[f64], seed: u64, stream: u64) -> Result<Self> {
        let r = values.len();
        if r < 2 {
            return domain("a standard error needs at least two replicas");
        }
        let mean = pairwise_sum(values) / r as f64;
        let dev: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
        let var = pairwise_sum(&dev) / (r as f64 - 1.0);
        Ok(Self { mean, se: (var / r as f64).sqrt(), replicas: r, seed, stream })
    }

    /// |mean − target| in units of the standard error (0 when both vanish).
    pub fn z(&self, target: f64) -> f64 {
        let d = (self.mean - target).abs();
        if d == 0.0 {
            0.0
        } else {
            d / self.se
        }
    }
}

#[derive(Clone, Debug)]
pub struct MomentEstimate {
    pub time: f64,
    /// ρ̂(x), index x−1.
    pub density: Vec<EnsembleEstimate>,
    /// Covariance for x < y and the extended diagonal value for x = y (α ≥ 2).
    pub correlation: Vec<((usize, usize), EnsembleEstimate)>,
}

/// Moment estimators from `snapshots[replica][time]`.
pub fn ensemble_moments(
    snapshots: &[Vec<Configuration>],
    times: &[f64],
    alpha: u32,
    seed: u64,
    stream: u64,
) -> Result<Vec<MomentEstimate>> {
    let r = snapshots.len();
    if r < 2 {
        return domain("need at least two replicas");
    }
    if snapshots.iter().any(|s| s.len() != times.len()) {
        return domain("every replica needs one snapshot per time");
    }
    let a = alpha as f64;
    let m = snapshots[0][0].n() - 1;
    let rf = r as f64;
    let mut out = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let col = |x: usize| -> Vec<f64> { snapshots.iter().map(|s| s[k].getf(x)).collect() };
        let cols: Vec<Vec<f64>> = (1..=m).map(col).collect();
        let density =
            cols.iter().map(|c| EnsembleEstimate::from_values(c, seed, stream)).collect::<Result<Vec<_>>>()?;
        let means: Vec<f64> = density.iter().map(|d| d.mean).collect();
        let mut correlation = Vec::new();
        for x in 0..m {
            if alpha >= 2 {
                // unbiased for ρ²: ρ̂² − s²/R
                let s2 = density[x].se.powi(2);
                let infl: Vec<f64> =
                    cols[x].iter().map(|v| a / (a - 1.0) * v * (v - 1.0) - 2.0 * means[x] * v).collect();
                let mut e = EnsembleEstimate::from_values(&infl, seed, stream)?;
                e.mean += means[x] * means[x] + s2;
                correlation.push(((x + 1, x + 1), e));
            }
            for y in x + 1..m {
                let prod: Vec<f64> =
                    cols[x].iter().zip(&cols[y]).map(|(u, v)| (u - means[x]) * (v - means[y])).collect();
                let mut e = EnsembleEstimate::from_values(&prod, seed, stream)?;
                e.mean *= rf / (rf - 1.0);
                correlation.push(((x + 1, y + 1), e));
            }
        }
        out.push(MomentEstimate { time: t, density, correlation });
    }
    Ok(out)
}
