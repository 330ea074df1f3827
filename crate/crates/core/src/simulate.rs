//! Simulation of the ε-truncated jump process by thinning: jumps are proposed
//! from the dominating measure Σ_i k₂,ᵢ 1_{S_i}(ĥ) j(|h|) on |h| > ε and
//! accepted with probability n(x, h) / envelope(h).

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, invalid, Error, Result};
use crate::kernel::{Cap, JumpKernel, RadialProfile, TailRule};
use crate::quadrature::region_rate;
use crate::region::Region;
use crate::vecmath::{add, dist, orthonormal_complement, scale, Pt};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Jumps with |h| ≤ ε are dropped.
    pub epsilon: f64,
    #[serde(default = "default_max_events")]
    pub max_events: u64,
    #[serde(default)]
    pub time_horizon: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_max_events() -> u64 {
    1_000_000
}

impl SimConfig {
    pub fn new(epsilon: f64, seed: u64) -> Result<Self> {
        let c = Self { epsilon, max_events: default_max_events(), time_horizon: None, seed };
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return invalid(format!("small-jump cutoff ε = {} outside (0, 1)", self.epsilon));
        }
        if self.max_events == 0 {
            return invalid("max_events must be at least 1");
        }
        if let Some(t) = self.time_horizon {
            if !(t > 0.0) {
                return invalid(format!("time horizon {t} must be positive"));
            }
        }
        Ok(())
    }
}

/// Open ball B(center, radius).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ball {
    pub center: Pt,
    pub radius: f64,
}

impl Ball {
    pub fn new(center: &[f64], radius: f64) -> Self {
        Self { center: crate::vecmath::to_pt(center), radius }
    }

    #[inline]
    pub fn contains(&self, z: &Pt) -> bool {
        dist(z, &self.center) < self.radius
    }

    #[inline]
    pub fn contains_closed(&self, z: &Pt) -> bool {
        dist(z, &self.center) <= self.radius
    }

    pub fn region(&self) -> Region {
        Region::Ball { center: self.center, radius: self.radius }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExitSample {
    pub tau: f64,
    pub x_pre: Pt,
    pub x_post: Pt,
    pub n_real_jumps: u64,
    pub n_fictitious: u64,
    pub censored: bool,
}

/// One proposal event of a simulated path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Event {
    pub time: f64,
    pub x_pre: Pt,
    pub x_post: Pt,
    pub fictitious: bool,
}

/// ∫_{|h|>ε} k₂(ĥ) j(|h|) dh by angular quadrature of k₂ times the radial shell.
pub fn envelope_rate(kernel: &JumpKernel, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return domain(format!("envelope mass diverges for ε = {epsilon}"));
    }
    let angular = kernel.angular_rule().integrate(|xi| kernel.upper(xi));
    Ok(angular * kernel.radial.shell(epsilon, f64::INFINITY)?)
}

// ---------------------------------------------------------------------------
// Radial sampler

#[derive(Debug, Clone, Copy)]
enum PieceKind {
    /// Density ∝ t^{−1−α} on [a, b].
    Power,
    /// Density ∝ ℓ(t) t^{−1−α}; rejection against sup ℓ on the piece.
    SlowlyVarying { sup: f64 },
    /// Density ∝ t^{−1−α} e^{−rate t} on [a, ∞).
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    kind: PieceKind,
}

#[derive(Debug, Clone)]
struct RadialSampler {
    pieces: Vec<Piece>,
    cumulative: Vec<f64>,
    total: f64,
    alpha: f64,
}

/// Inverse CDF of t^{−1−α} on [a, b] (b may be infinite).
#[inline]
fn power_draw(alpha: f64, a: f64, b: f64, u: f64) -> f64 {
    let (pa, pb) = (a.powf(-alpha), if b.is_finite() { b.powf(-alpha) } else { 0.0 });
    (pa - u * (pa - pb)).powf(-1.0 / alpha)
}

impl RadialSampler {
    fn new(radial: &RadialProfile, epsilon: f64) -> Result<Self> {
        let mut cuts = vec![epsilon];
        if epsilon < 1.0 {
            if radial.ell.as_constant().is_none() {
                // Dyadic pieces keep the rejection bound tight.
                let mut t = 2.0 * epsilon;
                while t < 1.0 {
                    cuts.push(t);
                    t *= 2.0;
                }
            }
            cuts.push(1.0);
        }
        cuts.extend(radial.tail.breakpoints().into_iter().filter(|b| *b > epsilon));
        cuts.push(radial.tail.support_end().unwrap_or(f64::INFINITY));
        cuts.dedup();

        let mut pieces = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0;
        for w in cuts.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(b > a) {
                continue;
            }
            let mass = radial.shell(a, b)?;
            if mass <= 0.0 {
                continue;
            }
            let kind = if b <= 1.0 {
                match radial.ell.as_constant() {
                    Some(_) => PieceKind::Power,
                    None => PieceKind::SlowlyVarying { sup: radial.ell.sup_on(a, b) },
                }
            } else {
                match radial.tail {
                    TailRule::Exponential { rate } => PieceKind::Exponential { rate },
                    _ => PieceKind::Power,
                }
            };
            total += mass;
            pieces.push(Piece { a, b, kind });
            cumulative.push(total);
        }
        Ok(Self { pieces, cumulative, total, alpha: radial.alpha })
    }

    fn draw(&self, ell: &crate::regvar::SlowlyVarying, rng: &mut ChaCha8Rng) -> f64 {
        let k = pick(&self.cumulative, rng.random::<f64>() * self.total);
        let p = self.pieces[k];
        let alpha = self.alpha;
        match p.kind {
            PieceKind::Power => power_draw(alpha, p.a, p.b, rng.random()),
            PieceKind::SlowlyVarying { sup } => loop {
                let t = power_draw(alpha, p.a, p.b, rng.random());
                if rng.random::<f64>() * sup <= ell.value(t) {
                    return t;
                }
            },
            PieceKind::Exponential { rate } => {
                if rate * p.a < 1.0 + alpha {
                    loop {
                        let t = power_draw(alpha, p.a, f64::INFINITY, rng.random());
                        if rng.random::<f64>() <= (-rate * (t - p.a)).exp() {
                            return t;
                        }
                    }
                } else {
                    loop {
                        let t = p.a - (1.0 - rng.random::<f64>()).ln() / rate;
                        if rng.random::<f64>() <= (t / p.a).powf(-1.0 - alpha) {
                            return t;
                        }
                    }
                }
            }
        }
    }
}

/// Index of the first cumulative weight exceeding `u`.
#[inline]
fn pick(cumulative: &[f64], u: f64) -> usize {
    cumulative.partition_point(|c| *c <= u).min(cumulative.len() - 1)
}

// ---------------------------------------------------------------------------
// Direction sampler

#[derive(Debug, Clone)]
struct CapSampler {
    cap: Cap,
    dim: usize,
    t1: Pt,
    t2: Pt,
    base_angle: f64,
    cos_min: f64,
    half_angle: f64,
}

impl CapSampler {
    fn new(cap: &Cap, dim: usize) -> Self {
        let axis = *cap.axis.as_pt();
        let (t1, t2) = orthonormal_complement(&axis);
        let half_angle = cap.polar_half_angle();
        Self { cap: *cap, dim, t1, t2, base_angle: axis[1].atan2(axis[0]), cos_min: half_angle.cos(), half_angle }
    }

    /// Uniform direction on the symmetrized cap (exact, no rejection).
    fn draw(&self, rng: &mut ChaCha8Rng) -> Pt {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let full = self.cap.is_full();
        match self.dim {
            1 => [sign, 0.0, 0.0],
            2 => {
                let phi = if full {
                    2.0 * PI * rng.random::<f64>()
                } else {
                    let p = self.base_angle + self.half_angle * (2.0 * rng.random::<f64>() - 1.0);
                    if sign < 0.0 {
                        p + PI
                    } else {
                        p
                    }
                };
                [phi.cos(), phi.sin(), 0.0]
            }
            _ => {
                let (c, axis) = if full {
                    (2.0 * rng.random::<f64>() - 1.0, [0.0, 0.0, 1.0])
                } else {
                    (self.cos_min + (1.0 - self.cos_min) * rng.random::<f64>(), scale(self.cap.axis.as_pt(), sign))
                };
                let s = (1.0 - c * c).max(0.0).sqrt();
                let phi = 2.0 * PI * rng.random::<f64>();
                let (t1, t2) = if full { ([1.0, 0.0, 0.0], [0.0, 1.0, 0.0]) } else { (self.t1, self.t2) };
                add(&add(&scale(&axis, c), &scale(&t1, s * phi.cos())), &scale(&t2, s * phi.sin()))
            }
        }
    }
}

/// Outcome of one proposal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Jump {
    Real(Pt),
    Fictitious,
}

/// Proposal sampler for the dominating measure of a kernel at a fixed ε.
#[derive(Debug, Clone)]
pub struct JumpSampler<'a> {
    kernel: &'a JumpKernel,
    epsilon: f64,
    radial: RadialSampler,
    caps: Vec<CapSampler>,
    cap_cumulative: Vec<f64>,
    rate: f64,
}

impl<'a> JumpSampler<'a> {
    pub fn new(kernel: &'a JumpKernel, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0) {
            return domain(format!("small-jump cutoff ε = {epsilon} must be positive"));
        }
        let radial = RadialSampler::new(&kernel.radial, epsilon)?;
        let dim = kernel.dim;
        let mut caps = Vec::new();
        let mut cap_cumulative = Vec::new();
        let mut angular = 0.0;
        for (cap, upper) in kernel.cones.caps().iter().zip(kernel.cones.upper_values()) {
            angular += upper * cap.measure(dim);
            caps.push(CapSampler::new(cap, dim));
            cap_cumulative.push(angular);
        }
        let rate = angular * radial.total;
        if !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Domain(format!("degenerate jump envelope (rate {rate}) at ε = {epsilon}")));
        }
        Ok(Self { kernel, epsilon, radial, caps, cap_cumulative, rate })
    }

    /// Total proposal rate (equals the k₂ envelope mass when caps are disjoint).
    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn kernel(&self) -> &JumpKernel {
        self.kernel
    }

    /// Σ_i k₂,ᵢ 1_{S_i}(ξ), the angular factor of the proposal density.
    fn envelope_angular(&self, xi: &Pt) -> f64 {
        self.caps
            .iter()
            .zip(self.kernel.cones.upper_values())
            .filter(|(c, _)| c.cap.contains(xi))
            .map(|(_, u)| *u)
            .sum()
    }

    /// Draws a proposal from the normalized envelope (no thinning).
    pub fn propose(&self, rng: &mut ChaCha8Rng) -> Pt {
        let k = pick(&self.cap_cumulative, rng.random::<f64>() * self.cap_cumulative[self.caps.len() - 1]);
        let xi = self.caps[k].draw(rng);
        let t = self.radial.draw(&self.kernel.radial.ell, rng);
        scale(&xi, t)
    }

    /// Proposes a displacement and thins it against n(x, ·).
    pub fn sample(&self, x: &Pt, rng: &mut ChaCha8Rng) -> Result<Jump> {
        let k = pick(&self.cap_cumulative, rng.random::<f64>() * self.cap_cumulative[self.caps.len() - 1]);
        let xi = self.caps[k].draw(rng);
        let t = self.radial.draw(&self.kernel.radial.ell, rng);
        let p = self.kernel.angular(x, &xi) / self.envelope_angular(&xi);
        if !(-1e-12..=1.0 + 1e-12).contains(&p) {
            return Err(Error::KernelBound(p));
        }
        if rng.random::<f64>() < p {
            Ok(Jump::Real(scale(&xi, t)))
        } else {
            Ok(Jump::Fictitious)
        }
    }
}

/// Convenience wrapper: one thinned proposal at x.
pub fn sample_jump(sampler: &JumpSampler<'_>, x: &Pt, rng: &mut ChaCha8Rng) -> Result<Jump> {
    sampler.sample(x, rng)
}

// ---------------------------------------------------------------------------
// Random streams and replicas

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for replica `index` of experiment `tag` under `seed`.
pub fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(tag)));
    rng.set_stream(index);
    rng
}

/// Runs `n` replicas in parallel; results are returned in replica order and
/// the first error (by index) is reported, independent of scheduling.
pub fn run_replicas<T, F>(n: usize, seed: u64, tag: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64, &mut ChaCha8Rng) -> Result<T> + Sync,
{
    let out: Vec<Result<T>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream(seed, tag, i);
            f(i, &mut rng)
        })
        .collect();
    out.into_iter().collect()
}

/// Mean with standard error over uncensored replicas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
    pub censored_fraction: f64,
}

impl MCEstimate {
    pub fn from_values(values: &[f64], censored: usize) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Estimation("no uncensored replicas".into()));
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
        Ok(Self { mean, std_error: (var / n as f64).sqrt(), n, censored_fraction: censored as f64 / (n + censored) as f64 })
    }
}

// ---------------------------------------------------------------------------
// Paths

/// A holding interval [t0, t1] at x_pre followed by a move to x_post.
#[derive(Debug, Clone, Copy)]
struct Step {
    t0: f64,
    t1: f64,
    x_pre: Pt,
    x_post: Pt,
    real: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PathEnd {
    Stopped,
    Horizon,
    MaxEvents,
}

struct PathState {
    end: PathEnd,
    time: f64,
    x_pre: Pt,
    x: Pt,
    real: u64,
    fictitious: u64,
}

/// Runs the thinned process until `visit` asks to stop, the horizon passes
/// (a final partial interval is visited) or the event cap is reached.
fn drive(
    sampler: &JumpSampler<'_>,
    start: &Pt,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    mut log: Option<&mut Vec<Event>>,
    mut visit: impl FnMut(&Step) -> bool,
) -> Result<PathState> {
    let mut st = PathState { end: PathEnd::MaxEvents, time: 0.0, x_pre: *start, x: *start, real: 0, fictitious: 0 };
    let rate = sampler.rate();
    for _ in 0..cfg.max_events {
        let t1 = st.time - (1.0 - rng.random::<f64>()).ln() / rate;
        if let Some(h) = cfg.time_horizon {
            if t1 > h {
                visit(&Step { t0: st.time, t1: h, x_pre: st.x, x_post: st.x, real: false });
                st.time = h;
                st.end = PathEnd::Horizon;
                return Ok(st);
            }
        }
        let (x_post, real) = match sampler.sample(&st.x, rng)? {
            Jump::Real(h) => (add(&st.x, &h), true),
            Jump::Fictitious => (st.x, false),
        };
        if real {
            st.real += 1;
        } else {
            st.fictitious += 1;
        }
        if let Some(log) = log.as_deref_mut() {
            log.push(Event { time: t1, x_pre: st.x, x_post, fictitious: !real });
        }
        let step = Step { t0: st.time, t1, x_pre: st.x, x_post, real };
        st.time = t1;
        st.x_pre = st.x;
        st.x = x_post;
        if visit(&step) {
            st.end = PathEnd::Stopped;
            return Ok(st);
        }
    }
    Ok(st)
}

/// First exit from `ball`; a start outside the ball exits at time 0.
pub fn simulate_until_exit(
    sampler: &JumpSampler<'_>,
    start: &Pt,
    ball: &Ball,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
    log: Option<&mut Vec<Event>>,
) -> Result<ExitSample> {
    if !ball.contains(start) {
        return Ok(ExitSample { tau: 0.0, x_pre: *start, x_post: *start, n_real_jumps: 0, n_fictitious: 0, censored: false });
    }
    let st = drive(sampler, start, cfg, rng, log, |s| s.real && !ball.contains(&s.x_post))?;
    Ok(ExitSample {
        tau: st.time,
        x_pre: st.x_pre,
        x_post: st.x,
        n_real_jumps: st.real,
        n_fictitious: st.fictitious,
        censored: st.end != PathEnd::Stopped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HitOutcome {
    pub hit: bool,
    pub sample: ExitSample,
}

/// Whether the path lands in one of the closed `targets` before leaving
/// `container`. The returned sample records the stopping event.
pub fn hitting_before_exit(
    sampler: &JumpSampler<'_>,
    start: &Pt,
    targets: &[Ball],
    container: &Ball,
    cfg: &SimConfig,
    rng: &mut ChaCha8Rng,
) -> Result<HitOutcome> {
    let in_target = |z: &Pt| targets.iter().any(|b| b.contains_closed(z));
    if in_target(start) {
        let sample = ExitSample { tau: 0.0, x_pre: *start, x_post: *start, n_real_jumps: 0, n_fictitious: 0, censored: false };
        return Ok(HitOutcome { hit: true, sample });
    }
    let st = drive(sampler, start, cfg, rng, None, |s| s.real && (in_target(&s.x_post) || !container.contains(&s.x_post)))?;
    let stopped = st.end == PathEnd::Stopped;
    let sample = ExitSample {
        tau: st.time,
        x_pre: st.x_pre,
        x_post: st.x,
        n_real_jumps: st.real,
        n_fictitious: st.fictitious,
        censored: !stopped,
    };
    Ok(HitOutcome { hit: stopped && in_target(&st.x), sample })
}

// ---------------------------------------------------------------------------
// Lévy system

/// When a path of the Lévy-system check ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StopRule {
    FixedTime { t: f64 },
    Exit { center: Pt, radius: f64 },
}

/// How x ↦ ∫_B n(x, u − x) du is evaluated along paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RateMode {
    /// Fresh quadrature at every visited state.
    Exact,
    /// Multilinear interpolation of quadrature values on a grid over A.
    Grid { points: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevyReport {
    /// Mean number of jumps from A into B.
    pub jumps: MCEstimate,
    /// Mean of ∫ 1_A(X_s) ∫_B n(X_s, u − X_s) du ds.
    pub compensator: MCEstimate,
    /// Pathwise difference of the two.
    pub difference: MCEstimate,
}

fn regions_disjoint(a: &Region, b: &Region) -> Option<bool> {
    match (a, b) {
        (Region::Ball { center, radius }, other) | (other, Region::Ball { center, radius }) => {
            Some(other.avoids_ball(center, *radius))
        }
        _ => None,
    }
}

fn bounding_box(region: &Region) -> Option<(Pt, f64)> {
    match *region {
        Region::Ball { center, radius } | Region::Annulus { center, outer: radius, .. } => Some((center, radius)),
        Region::BallComplement { .. } => None,
    }
}

/// Quadrature values of a rate function on a regular grid over a cube.
struct RateGrid {
    dim: usize,
    lo: Pt,
    step: f64,
    points: usize,
    values: Vec<f64>,
}

impl RateGrid {
    fn build(dim: usize, center: &Pt, half: f64, points: usize, f: impl Fn(&Pt) -> Result<f64> + Sync) -> Result<Self> {
        let points = points.max(2);
        let step = 2.0 * half / (points - 1) as f64;
        let mut lo = *center;
        for v in lo.iter_mut().take(dim) {
            *v -= half;
        }
        let total = points.pow(dim as u32);
        let values: Vec<Result<f64>> = (0..total)
            .into_par_iter()
            .map(|flat| {
                let mut p = lo;
                let mut rest = flat;
                for v in p.iter_mut().take(dim) {
                    *v += (rest % points) as f64 * step;
                    rest /= points;
                }
                f(&p)
            })
            .collect();
        let values = values.into_iter().collect::<Result<Vec<f64>>>()?;
        Ok(Self { dim, lo, step, points, values })
    }

    fn eval(&self, x: &Pt) -> f64 {
        let mut idx = [0usize; 3];
        let mut frac = [0.0; 3];
        for k in 0..self.dim {
            let s = ((x[k] - self.lo[k]) / self.step).clamp(0.0, (self.points - 1) as f64);
            let i = (s.floor() as usize).min(self.points - 2);
            idx[k] = i;
            frac[k] = s - i as f64;
        }
        let mut total = 0.0;
        for corner in 0..(1usize << self.dim) {
            let mut w = 1.0;
            let mut flat = 0;
            let mut stride = 1;
            for k in 0..self.dim {
                let bit = (corner >> k) & 1;
                w *= if bit == 1 { frac[k] } else { 1.0 - frac[k] };
                flat += (idx[k] + bit) * stride;
                stride *= self.points;
            }
            if w != 0.0 {
                total += w * self.values[flat];
            }
        }
        total
    }
}

/// Monte Carlo check of the Lévy-system identity for disjoint A and B:
/// jumps from A into B versus the time integral of the B-rate while in A.
#[allow(clippy::too_many_arguments)]
pub fn levy_system_paths(
    kernel: &JumpKernel,
    start: &Pt,
    a: &Region,
    b: &Region,
    stop: StopRule,
    n: usize,
    cfg: &SimConfig,
    mode: RateMode,
) -> Result<LevyReport> {
    cfg.check()?;
    match regions_disjoint(a, b) {
        Some(true) => {}
        Some(false) => return domain("regions A and B overlap"),
        None => return domain("disjointness of A and B cannot be certified (one of them must be a ball)"),
    }
    let eps = cfg.epsilon;
    let rate_at = |x: &Pt| region_rate(kernel, x, b, None, eps);
    let grid = match mode {
        RateMode::Exact => None,
        RateMode::Grid { points } => {
            let (c, half) = bounding_box(a).ok_or_else(|| Error::InvalidInput("grid rates need a bounded A".into()))?;
            Some(RateGrid::build(kernel.dim, &c, half, points, rate_at)?)
        }
    };
    let sampler = JumpSampler::new(kernel, eps)?;
    let mut path_cfg = *cfg;
    let exit_ball = match stop {
        StopRule::FixedTime { t } => {
            if !(t > 0.0) {
                return domain("fixed time must be positive");
            }
            path_cfg.time_horizon = Some(t);
            None
        }
        StopRule::Exit { center, radius } => {
            path_cfg.time_horizon = None;
            Some(Ball { center, radius })
        }
    };

    let per_path = run_replicas(n, cfg.seed, 0x1e5, |_, rng| {
        let mut count = 0.0;
        let mut comp = 0.0;
        let mut cache: Option<(Pt, f64)> = None;
        let mut err = None;
        let st = drive(&sampler, start, &path_cfg, rng, None, |s| {
            if a.contains(&s.x_pre) {
                let r = match &cache {
                    Some((p, v)) if *p == s.x_pre => *v,
                    _ => {
                        let v = match &grid {
                            Some(g) => g.eval(&s.x_pre),
                            None => match rate_at(&s.x_pre) {
                                Ok(v) => v,
                                Err(e) => {
                                    err = Some(e);
                                    return true;
                                }
                            },
                        };
                        cache = Some((s.x_pre, v));
                        v
                    }
                };
                comp += r * (s.t1 - s.t0);
                if s.real && b.contains(&s.x_post) {
                    count += 1.0;
                }
            }
            s.real && exit_ball.is_some_and(|ball| !ball.contains(&s.x_post))
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        let complete = match stop {
            StopRule::FixedTime { .. } => st.end == PathEnd::Horizon,
            StopRule::Exit { .. } => st.end == PathEnd::Stopped,
        };
        Ok((count, comp, complete))
    })?;

    let kept: Vec<&(f64, f64, bool)> = per_path.iter().filter(|p| p.2).collect();
    let censored = per_path.len() - kept.len();
    let jumps: Vec<f64> = kept.iter().map(|p| p.0).collect();
    let comps: Vec<f64> = kept.iter().map(|p| p.1).collect();
    let diffs: Vec<f64> = kept.iter().map(|p| p.0 - p.1).collect();
    Ok(LevyReport {
        jumps: MCEstimate::from_values(&jumps, censored)?,
        compensator: MCEstimate::from_values(&comps, censored)?,
        difference: MCEstimate::from_values(&diffs, censored)?,
    })
}
