//! Monte Carlo estimators built on the simulator: exit-time statistics,
//! hitting probabilities, exit-distribution expectations ("harmonic"
//! functions), Harnack quotients and Hölder exponents.

use serde::Serialize;

use crate::error::{domain, invalid, Error, Result};
use crate::geometry::{default_lambda, lambda_max};
use crate::kernel::JumpKernel;
use crate::quadrature::harnack_tail_term;
use crate::region::{ExteriorData, Region};
use crate::simulate::{hitting_before_exit, run_replicas, simulate_until_exit, Ball, JumpSampler, MCEstimate, SimConfig};
use crate::sphere::{ball_points, unit_ball_volume};
use crate::vecmath::{dist, Pt};

/// Replica stream tags; replica i of an exit-time run uses `stream(seed, TAG_EXIT, i)`.
pub const TAG_EXIT: u64 = 1;
pub const TAG_HIT: u64 = 2;
pub const TAG_HARMONIC: u64 = 3;
pub const TAG_RESTRICTED_SMALL: u64 = 4;
pub const TAG_RESTRICTED_LARGE: u64 = 5;

/// Leading order b(ε) of the truncation bias of exit functionals:
/// ε^{2−α} for α > 1, ε·log(1/ε) for α = 1 and ε for α < 1.
pub fn truncation_bias_order(alpha: f64, eps: f64) -> f64 {
    if (alpha - 1.0).abs() < 1e-9 {
        eps * (1.0 / eps).ln()
    } else if alpha > 1.0 {
        eps.powf(2.0 - alpha)
    } else {
        eps
    }
}

/// Removes the leading truncation bias from estimates at ε and ε/2.
pub fn extrapolate_epsilon(coarse: &MCEstimate, fine: &MCEstimate, alpha: f64, eps: f64) -> MCEstimate {
    let (bc, bf) = (truncation_bias_order(alpha, eps), truncation_bias_order(alpha, eps / 2.0));
    let w = bf / (bc - bf);
    MCEstimate {
        mean: fine.mean - w * (coarse.mean - fine.mean),
        std_error: (((1.0 + w) * fine.std_error).powi(2) + (w * coarse.std_error).powi(2)).sqrt(),
        n: fine.n.min(coarse.n),
        censored_fraction: fine.censored_fraction.max(coarse.censored_fraction),
    }
}

/// Least-squares line through (log x, log y): (slope, intercept, rms residual).
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return invalid("log-log fit needs at least two matching points");
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return invalid("log-log fit needs positive values");
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / n).sqrt();
    Ok((slope, intercept, rms))
}

// ---------------------------------------------------------------------------
// Exit times

#[derive(Debug, Clone, Serialize)]
pub struct SurvivalPoint {
    pub t: f64,
    /// Estimate of P(τ ≤ t).
    pub probability: MCEstimate,
    /// P(τ ≤ t)·r^α / (t ℓ(r)).
    pub normalized: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExitStats {
    pub tau: MCEstimate,
    /// E τ · ℓ(r) / r^α.
    pub normalized_mean: f64,
    pub survival: Vec<SurvivalPoint>,
    /// Start on the boundary sphere.
    pub degenerate: bool,
}

pub fn estimate_exit_stats(
    kernel: &JumpKernel,
    x: &Pt,
    ball: &Ball,
    times: &[f64],
    n: usize,
    cfg: &SimConfig,
) -> Result<ExitStats> {
    cfg.check()?;
    if n < 2 {
        return invalid("at least two replicas are needed");
    }
    let e = dist(x, &ball.center);
    if e > ball.radius * (1.0 + 1e-12) {
        return domain("start point lies outside the ball");
    }
    let degenerate = e >= ball.radius * (1.0 - 1e-12);
    let sampler = JumpSampler::new(kernel, cfg.epsilon)?;
    let samples = run_replicas(n, cfg.seed, TAG_EXIT, |_, rng| simulate_until_exit(&sampler, x, ball, cfg, rng, None))?;
    let taus: Vec<f64> = samples.iter().filter(|s| !s.censored).map(|s| s.tau).collect();
    let censored = samples.len() - taus.len();
    let tau = MCEstimate::from_values(&taus, censored)?;
    let r = ball.radius;
    let scale = r.powf(kernel.radial.alpha) / kernel.radial.ell_at(r);
    let mut survival = Vec::with_capacity(times.len());
    for &t in times {
        let ind: Vec<f64> = taus.iter().map(|v| if *v <= t { 1.0 } else { 0.0 }).collect();
        let p = MCEstimate::from_values(&ind, censored)?;
        survival.push(SurvivalPoint { t, probability: p, normalized: p.mean * scale / t });
    }
    Ok(ExitStats { tau, normalized_mean: tau.mean / scale, survival, degenerate })
}

// ---------------------------------------------------------------------------
// Hitting probabilities

#[derive(Debug, Clone, Serialize)]
pub struct KsRow {
    /// |A| / |B(x₀, λr)|.
    pub fraction: f64,
    pub target_radius: f64,
    pub probability: MCEstimate,
    /// P(T_A < τ) / (|A| / |B(x₀, r)|).
    pub ratio: f64,
}

/// Hitting probabilities of the concentric balls A ⊆ B(x₀, λr) whose volume is
/// the given fraction of |B(x₀, λr)|, before leaving B(x₀, r).
#[allow(clippy::too_many_arguments)]
pub fn estimate_ks_ratio(
    kernel: &JumpKernel,
    x0: &Pt,
    r: f64,
    lambda: f64,
    start: &Pt,
    fractions: &[f64],
    n: usize,
    cfg: &SimConfig,
) -> Result<Vec<KsRow>> {
    cfg.check()?;
    let theta = kernel.cones.governing_half_angle();
    if !(lambda > 0.0 && lambda <= lambda_max(theta) * (1.0 + 1e-12)) {
        return domain(format!("λ = {lambda} outside (0, sin θ/8 = {}]", lambda_max(theta)));
    }
    if dist(start, x0) >= lambda * r {
        return domain("start point must lie in B(x₀, λr)");
    }
    let d = kernel.dim as i32;
    let container = Ball { center: *x0, radius: r };
    let sampler = JumpSampler::new(kernel, cfg.epsilon)?;
    let mut rows = Vec::with_capacity(fractions.len());
    for (k, &f) in fractions.iter().enumerate() {
        if !(0.0..=1.0).contains(&f) {
            return invalid(format!("volume fraction {f} outside [0, 1]"));
        }
        let rho = lambda * r * f.powf(1.0 / d as f64);
        let targets: Vec<Ball> = if f > 0.0 { vec![Ball { center: *x0, radius: rho }] } else { vec![] };
        let outcomes = run_replicas(n, cfg.seed, TAG_HIT + 16 * k as u64, |_, rng| {
            hitting_before_exit(&sampler, start, &targets, &container, cfg, rng)
        })?;
        let vals: Vec<f64> = outcomes.iter().filter(|o| !o.sample.censored).map(|o| if o.hit { 1.0 } else { 0.0 }).collect();
        let censored = outcomes.len() - vals.len();
        let probability = MCEstimate::from_values(&vals, censored)?;
        let volume_ratio = lambda.powi(d) * f;
        let ratio = if volume_ratio > 0.0 { probability.mean / volume_ratio } else { f64::NAN };
        rows.push(KsRow { fraction: f, target_radius: rho, probability, ratio });
    }
    Ok(rows)
}

/// Default λ for hitting experiments: half of the admissible sin θ/8, times 0.9.
pub fn ks_default_lambda(kernel: &JumpKernel) -> f64 {
    default_lambda(kernel.cones.governing_half_angle())
}

// ---------------------------------------------------------------------------
// Exit distributions

/// Exit positions X_τ of `n` replicas started at x (None when censored).
/// All starting points share the replica streams of `tag`, so estimates at
/// different points use common random numbers.
pub fn exit_positions(
    sampler: &JumpSampler<'_>,
    domain_ball: &Ball,
    x: &Pt,
    n: usize,
    cfg: &SimConfig,
    tag: u64,
) -> Result<Vec<Option<Pt>>> {
    run_replicas(n, cfg.seed, tag, |_, rng| {
        let s = simulate_until_exit(sampler, x, domain_ball, cfg, rng, None)?;
        Ok(if s.censored { None } else { Some(s.x_post) })
    })
}

fn functional(positions: &[Option<Pt>], g: impl Fn(&Pt) -> f64) -> Result<MCEstimate> {
    let vals: Vec<f64> = positions.iter().flatten().map(g).collect();
    MCEstimate::from_values(&vals, positions.len() - vals.len())
}

/// E^x g(X_τ) for the exit time τ of `domain`.
pub fn evaluate_harmonic(
    kernel: &JumpKernel,
    domain_ball: &Ball,
    g: &ExteriorData,
    x: &Pt,
    n: usize,
    cfg: &SimConfig,
) -> Result<MCEstimate> {
    cfg.check()?;
    g.check()?;
    if !domain_ball.contains(x) {
        return domain("evaluation point must lie inside the domain");
    }
    let sampler = JumpSampler::new(kernel, cfg.epsilon)?;
    functional(&exit_positions(&sampler, domain_ball, x, n, cfg, TAG_HARMONIC)?, |z| g.eval(z))
}

// ---------------------------------------------------------------------------
// Harnack

#[derive(Debug, Clone, Serialize)]
pub struct HarnackReport {
    pub probes: Vec<Pt>,
    pub values: Vec<MCEstimate>,
    pub sup: f64,
    pub inf: f64,
    /// sup/inf, suppressed when inf is not resolved from zero.
    pub quotient: Option<f64>,
    pub tail_term: f64,
    /// Smallest c₁ with sup ≤ c₁ inf + tail (c₂ = 1), when inf > 0.
    pub c1: Option<f64>,
    /// Smallest c₂ with sup ≤ c₂·tail for c₁ = 0 is not informative; this
    /// is (sup − inf)/tail, the c₂ needed with c₁ = 1 (None when tail = 0).
    pub c2: Option<f64>,
    /// inf within two standard errors of zero.
    pub flagged: bool,
}

fn check_harnack_scale(r: f64) -> Result<()> {
    if !(r > 0.0 && r < 0.25) {
        return domain(format!("scale r = {r} outside (0, 1/4)"));
    }
    Ok(())
}

fn nonnegative_near(g: &ExteriorData, x0: &Pt, radius: f64) -> bool {
    let (base, pieces) = g.pieces();
    let base_ok = base >= 0.0 || pieces.iter().any(|(reg, v)| *v >= 0.0 && matches!(reg, Region::Ball { .. }) && {
        // A non-negative ball covering B(x₀, radius) masks a negative base.
        if let Region::Ball { center, radius: rr } = reg {
            dist(center, x0) + radius <= *rr
        } else {
            false
        }
    });
    base_ok && pieces.iter().all(|(reg, v)| *v >= 0.0 || reg.avoids_ball(x0, radius))
}

/// Probe values of f = E^· g(X_{τ_{B(x₀,4r)}}) on B(x₀, r) with the tail term.
#[allow(clippy::too_many_arguments)]
pub fn harnack_report(
    kernel: &JumpKernel,
    x0: &Pt,
    r: f64,
    g: &ExteriorData,
    probes: usize,
    tail_probes: usize,
    n: usize,
    cfg: &SimConfig,
) -> Result<HarnackReport> {
    cfg.check()?;
    g.check()?;
    check_harnack_scale(r)?;
    if !nonnegative_near(g, x0, 4.0 * r) {
        return invalid("exterior data must be non-negative on B(x₀, 4r)");
    }
    let domain_ball = Ball { center: *x0, radius: 4.0 * r };
    let sampler = JumpSampler::new(kernel, cfg.epsilon)?;
    let pts = ball_points(kernel.dim, x0, r, probes.max(1));
    let mut values = Vec::with_capacity(pts.len());
    for p in &pts {
        let pos = exit_positions(&sampler, &domain_ball, p, n, cfg, TAG_HARMONIC)?;
        values.push(functional(&pos, |z| g.eval(z))?);
    }
    let sup = values.iter().map(|v| v.mean).fold(f64::NEG_INFINITY, f64::max);
    let (inf_idx, inf_est) =
        values.iter().enumerate().min_by(|a, b| a.1.mean.total_cmp(&b.1.mean)).map(|(i, v)| (i, *v)).unwrap();
    let _ = inf_idx;
    let inf = inf_est.mean;
    let flagged = inf <= 2.0 * inf_est.std_error;
    let tail_term = harnack_tail_term(kernel, &x0[..kernel.dim], r, g, tail_probes)?;
    let quotient = if flagged { None } else { Some(sup / inf) };
    let c1 = if flagged { None } else { Some(((sup - tail_term) / inf).max(0.0)) };
    let c2 = if tail_term > 0.0 { Some(((sup - inf) / tail_term).max(0.0)) } else { None };
    Ok(HarnackReport { probes: pts, values, sup, inf, quotient, tail_term, c1, c2, flagged })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SignedRow {
    pub amplitude: f64,
    pub sup: f64,
    pub inf: f64,
    /// Tail term of the data p − a·q.
    pub tail_term: f64,
}

/// Probe extrema of f_a = E[p(X_τ)] − a·E[q(X_τ)] for each amplitude a, from
/// one set of exit samples, where p ≥ 0 and q ≥ 0 with q supported outside
/// B(x₀, 4r).
#[allow(clippy::too_many_arguments)]
pub fn signed_harnack_scan(
    kernel: &JumpKernel,
    x0: &Pt,
    r: f64,
    positive: &[(Region, f64)],
    negative: &[(Region, f64)],
    amplitudes: &[f64],
    probes: usize,
    tail_probes: usize,
    n: usize,
    cfg: &SimConfig,
) -> Result<Vec<SignedRow>> {
    cfg.check()?;
    check_harnack_scale(r)?;
    if negative.iter().any(|(reg, v)| *v < 0.0 || !reg.avoids_ball(x0, 4.0 * r)) {
        return invalid("negative part must be given as non-negative values supported outside B(x₀, 4r)");
    }
    if positive.iter().any(|(_, v)| *v < 0.0) {
        return invalid("positive part must be non-negative");
    }
    let p = ExteriorData::SignedBump { positive: positive.to_vec(), negative: vec![] };
    let q = ExteriorData::SignedBump { positive: negative.to_vec(), negative: vec![] };
    let q_neg = ExteriorData::SignedBump { positive: vec![], negative: negative.to_vec() };
    let unit_tail = harnack_tail_term(kernel, &x0[..kernel.dim], r, &q_neg, tail_probes)?;

    let domain_ball = Ball { center: *x0, radius: 4.0 * r };
    let sampler = JumpSampler::new(kernel, cfg.epsilon)?;
    let mut pq = Vec::new();
    for pt in ball_points(kernel.dim, x0, r, probes.max(1)) {
        let pos = exit_positions(&sampler, &domain_ball, &pt, n, cfg, TAG_HARMONIC)?;
        pq.push((functional(&pos, |z| p.eval(z))?.mean, functional(&pos, |z| q.eval(z))?.mean));
    }
    Ok(amplitudes
        .iter()
        .map(|&a| {
            let vals = pq.iter().map(|(pv, qv)| pv - a * qv);
            let sup = vals.clone().fold(f64::NEG_INFINITY, f64::max);
            let inf = vals.fold(f64::INFINITY, f64::min);
            SignedRow { amplitude: a, sup, inf, tail_term: a.abs() * unit_tail }
        })
        .collect())
}

/// Constants (c₁, c₂) read off a scan and inflated by `safety` ≥ 1: c₁ is
/// safety·sup/inf of the amplitude-0 row, c₂ is safety times the smallest
/// coefficient making sup ≤ c₁ inf + c₂ tail on every row.
pub fn fit_harnack_constants(rows: &[SignedRow], safety: f64) -> Result<(f64, f64)> {
    if !(safety >= 1.0) {
        return invalid("safety factor must be at least 1");
    }
    let base = rows
        .iter()
        .find(|r| r.amplitude == 0.0)
        .ok_or_else(|| Error::InvalidInput("scan must include amplitude 0".into()))?;
    if !(base.inf > 0.0) {
        return Err(Error::Estimation("non-negative data gives a non-positive infimum".into()));
    }
    let c1 = safety * base.sup / base.inf;
    let c2 = rows
        .iter()
        .filter(|r| r.tail_term > 0.0)
        .map(|r| ((r.sup - c1 * r.inf) / r.tail_term).max(0.0))
        .fold(0.0, f64::max);
    Ok((c1, safety * c2))
}

/// sup ≤ c₁ inf + c₂ tail on a row.
pub fn harnack_holds(row: &SignedRow, c1: f64, c2: f64) -> bool {
    row.sup <= c1 * row.inf + c2 * row.tail_term
}

// ---------------------------------------------------------------------------
// Restricted Harnack

#[derive(Debug, Clone, Serialize)]
pub struct RestrictedReport {
    /// E^x H(X_{τ_{B(x₀,λr)}}).
    pub small: MCEstimate,
    /// E^y H(X_{τ_{B(x₀,r)}}).
    pub large: MCEstimate,
    pub ratio: Option<f64>,
    /// Both sides vanish: no cone reaches the support of H.
    pub vacuous: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn restricted_harnack_check(
    kernel: &JumpKernel,
    x0: &Pt,
    r: f64,
    lambda: f64,
    h: &ExteriorData,
    x: &Pt,
    y: &Pt,
    n: usize,
    cfg: &SimConfig,
) -> Result<RestrictedReport> {
    cfg.check()?;
    h.check()?;
    let lambda0 = lambda_max(kernel.cones.governing_half_angle()) / 2.0;
    if !(lambda > 0.0 && lambda <= lambda0 * (1.0 + 1e-12)) {
        return domain(format!("λ = {lambda} outside (0, sin θ/16 = {lambda0}]"));
    }
    if dist(x, x0) >= lambda * r || dist(y, x0) >= lambda * r {
        return domain("probe points must lie in B(x₀, λr)");
    }
    let (base, pieces) = h.pieces();
    if base != 0.0 || pieces.iter().any(|(reg, v)| *v < 0.0 || (*v != 0.0 && !reg.avoids_ball(x0, 1.5 * r))) {
        return invalid("H must be non-negative and supported in B(x₀, 3r/2)^c");
    }
    let sampler = JumpSampler::new(kernel, cfg.epsilon)?;
    let small_ball = Ball { center: *x0, radius: lambda * r };
    let large_ball = Ball { center: *x0, radius: r };
    let small = functional(&exit_positions(&sampler, &small_ball, x, n, cfg, TAG_RESTRICTED_SMALL)?, |z| h.eval(z))?;
    let large = functional(&exit_positions(&sampler, &large_ball, y, n, cfg, TAG_RESTRICTED_LARGE)?, |z| h.eval(z))?;
    let vacuous = small.mean == 0.0 && large.mean == 0.0;
    let ratio = if large.mean > 0.0 { Some(small.mean / large.mean) } else { None };
    Ok(RestrictedReport { small, large, ratio, vacuous })
}

// ---------------------------------------------------------------------------
// Hölder exponent

#[derive(Debug, Clone, Serialize)]
pub struct HolderScale {
    pub rho: f64,
    /// max − min of the probe values in B(x₀, ρ).
    pub osc: f64,
    /// Standard error of the extremal pair difference.
    pub std_error: f64,
    pub usable: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderFit {
    pub scales: Vec<HolderScale>,
    pub beta: Option<f64>,
    pub residual: Option<f64>,
    /// max_k osc_k / (‖g‖∞ (ρ_k/R)^β).
    pub c3: Option<f64>,
}

/// Oscillation of f = E^· g(X_{τ_{B(x₀,R)}}) over probe sets in B(x₀, ρ_k)
/// and the least-squares exponent of osc against ρ.
#[allow(clippy::too_many_arguments)]
pub fn holder_fit(
    kernel: &JumpKernel,
    x0: &Pt,
    big_r: f64,
    g: &ExteriorData,
    scales: &[f64],
    probes: usize,
    n: usize,
    cfg: &SimConfig,
) -> Result<HolderFit> {
    cfg.check()?;
    g.check()?;
    if scales.len() < 3 {
        return invalid("at least three scales are needed");
    }
    if scales.windows(2).any(|w| w[1] >= w[0]) || scales.iter().any(|s| !(*s > 0.0 && *s <= 0.5 * big_r)) {
        return invalid("scales must be strictly decreasing within (0, R/2]");
    }
    let domain_ball = Ball { center: *x0, radius: big_r };
    let sampler = JumpSampler::new(kernel, cfg.epsilon)?;
    let mut out = Vec::with_capacity(scales.len());
    for &rho in scales {
        let pts = ball_points(kernel.dim, x0, rho, probes.max(2));
        let mut per_point: Vec<Vec<f64>> = Vec::with_capacity(pts.len());
        for p in &pts {
            let pos = exit_positions(&sampler, &domain_ball, p, n, cfg, TAG_HARMONIC)?;
            // Censored replicas count as g = 0 so that pairs stay aligned.
            per_point.push(pos.iter().map(|z| z.map_or(0.0, |z| g.eval(&z))).collect());
        }
        let means: Vec<f64> = per_point.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
        let imax = (0..means.len()).max_by(|a, b| means[*a].total_cmp(&means[*b])).unwrap();
        let imin = (0..means.len()).min_by(|a, b| means[*a].total_cmp(&means[*b])).unwrap();
        let diffs: Vec<f64> = per_point[imax].iter().zip(&per_point[imin]).map(|(a, b)| a - b).collect();
        let d = MCEstimate::from_values(&diffs, 0)?;
        let osc = means[imax] - means[imin];
        out.push(HolderScale { rho, osc, std_error: d.std_error, usable: osc > 2.0 * d.std_error });
    }
    if out.iter().all(|s| !s.usable) {
        return Err(Error::Estimation("oscillation indistinguishable from zero at every scale (degenerate data)".into()));
    }
    let usable: Vec<&HolderScale> = out.iter().filter(|s| s.usable).collect();
    let (beta, residual, c3) = if usable.len() >= 3 {
        let xs: Vec<f64> = usable.iter().map(|s| s.rho).collect();
        let ys: Vec<f64> = usable.iter().map(|s| s.osc).collect();
        let (beta, _, res) = fit_loglog(&xs, &ys)?;
        let norm = g.sup_norm();
        let c3 = usable.iter().map(|s| s.osc / (norm * (s.rho / big_r).powf(beta))).fold(0.0, f64::max);
        (Some(beta), Some(res), Some(c3))
    } else {
        (None, None, None)
    };
    Ok(HolderFit { scales: out, beta, residual, c3 })
}

/// |A|/|B| for concentric balls in dimension d.
pub fn volume_fraction(dim: usize, inner: f64, outer: f64) -> f64 {
    unit_ball_volume(dim) * inner.powi(dim as i32) / (unit_ball_volume(dim) * outer.powi(dim as i32))
}
