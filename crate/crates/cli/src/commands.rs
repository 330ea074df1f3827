//! One function per subcommand. Each reads its parameters from the
//! `[experiment]` table, validates them before any sampling, and returns the
//! artifacts to write.

use jumplab_core::estimators::{
    estimate_exit_stats, estimate_ks_ratio, evaluate_harmonic, extrapolate_epsilon, fit_harnack_constants,
    fit_loglog, harnack_holds, harnack_report, holder_fit, ks_default_lambda, restricted_harnack_check,
    signed_harnack_scan, ExitStats, TAG_EXIT,
};
use jumplab_core::geometry::{default_lambda, lambda_max};
use jumplab_core::quadrature::{apply_l, eta_rj, nu_measure, PowerDensity, TailMeasureQuery};
use jumplab_core::regvar::{karamata_ratio_large, karamata_ratio_small};
use jumplab_core::simulate::{levy_system_paths, simulate_until_exit, stream, Event, RateMode, StopRule};
use jumplab_core::sphere::ball_points;
use jumplab_core::{
    build_chain, nondegeneracy_matrix, validate_kernel, verify_chain, Ball, Error, JumpKernel, JumpSampler, Pt,
    Region, SimConfig, ValidationGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{pieces, point, ExperimentConfig, ExperimentSpec};
use crate::output::{Cell, Plot, Table};
use crate::{CliError, Command, Outcome};

type Res<T> = Result<T, CliError>;

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    ex: &'a ExperimentSpec,
    kernel: JumpKernel,
    dim: usize,
}

impl<'a> Ctx<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Res<Self> {
        let kernel = cfg.kernel.build()?;
        Ok(Self { cfg, ex: &cfg.experiment, dim: kernel.dim, kernel })
    }

    fn pt(&self, v: &Option<Vec<f64>>, default: Pt, what: &str) -> Res<Pt> {
        match v {
            Some(v) => point(v, self.dim, what),
            None => Ok(default),
        }
    }

    fn center(&self) -> Res<Pt> {
        self.pt(&self.ex.center, [0.0; 3], "experiment.center")
    }

    fn sim(&self, scale: f64) -> Res<SimConfig> {
        self.cfg.simulation.at_scale(self.cfg.seed, scale)
    }

    fn n(&self) -> usize {
        self.cfg.simulation.n
    }

    fn base_epsilon(&self) -> f64 {
        self.cfg.simulation.epsilon
    }

    fn coord_names(&self, prefix: &str) -> Vec<String> {
        (1..=self.dim).map(|i| format!("{prefix}{i}")).collect()
    }

    fn coords(&self, p: &Pt) -> Vec<Cell> {
        p[..self.dim].iter().map(|v| Cell::F(*v)).collect()
    }
}

fn require<T: Clone>(v: &Option<T>, key: &str) -> Res<T> {
    v.clone().ok_or_else(|| CliError::Config(format!("experiment.{key} is required for this command")))
}

fn positive_list(v: &[f64], key: &str) -> Res<()> {
    if v.is_empty() || v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(CliError::Config(format!("experiment.{key} must be a non-empty list of positive numbers")));
    }
    Ok(())
}

pub fn dispatch(cmd: Command, cfg: &ExperimentConfig, dump_paths: bool) -> Res<Outcome> {
    let ctx = Ctx::new(cfg)?;
    match cmd {
        Command::Validate => validate(&ctx),
        Command::ExitTime => exit_time(&ctx, dump_paths),
        Command::Survival => survival(&ctx, dump_paths),
        Command::Hitting => hitting(&ctx),
        Command::Harmonic => harmonic(&ctx),
        Command::Harnack => harnack(&ctx),
        Command::RestrictedHarnack => restricted(&ctx),
        Command::Hoelder => hoelder(&ctx),
        Command::LevyCheck => levy_check(&ctx),
        Command::Nondegeneracy => nondegeneracy(&ctx),
        Command::Eta => eta(&ctx),
        Command::ApplyL => apply_l_cmd(&ctx),
        Command::Karamata => karamata(&ctx),
        Command::GeometryCheck => geometry_check(&ctx),
    }
}

fn validate(ctx: &Ctx) -> Res<Outcome> {
    let d = ValidationGrid::default();
    let ex = ctx.ex;
    let grid = ValidationGrid {
        radial_points: ex.radial_points.unwrap_or(d.radial_points),
        r_min: ex.r_min.unwrap_or(d.r_min),
        r_max: ex.r_max.unwrap_or(d.r_max),
        tolerance: ex.tolerance.unwrap_or(d.tolerance),
        pair_samples: ex.pair_samples.unwrap_or(d.pair_samples),
        seed: ctx.cfg.seed,
    };
    let report = validate_kernel(&ctx.kernel, &grid);
    let mut table = Table::new(&["check", "passed", "worst_margin"]);
    let mut out_failures = Vec::new();
    for c in &report.checks {
        table.push(vec![c.name.into(), c.passed.into(), c.worst_margin.into()]);
        if !c.passed {
            out_failures.push(format!("{} (worst margin {:e})", c.name, c.worst_margin));
        }
    }
    let mut out = Outcome::new(table, ctx.base_epsilon());
    out.set("all_passed", report.all_passed());
    out.set("failed", toml::Value::Array(out_failures.iter().map(|s| s.clone().into()).collect()));
    out.failures = out_failures;
    Ok(out)
}

/// Event logs of the first `count` replicas of an exit-time run; they use the
/// estimator's own replica streams and so reproduce its paths exactly.
fn dump_table(ctx: &Ctx, start: &Pt, ball: &Ball, sim: &SimConfig, count: usize) -> Res<Table> {
    let mut header = vec!["replica".to_string(), "time".to_string()];
    header.extend(ctx.coord_names("x_pre_"));
    header.extend(ctx.coord_names("x_post_"));
    header.push("fictitious".into());
    let mut table = Table::with_header(header);
    let sampler = JumpSampler::new(&ctx.kernel, sim.epsilon)?;
    for i in 0..count.min(ctx.n()) {
        let mut log: Vec<Event> = Vec::new();
        simulate_until_exit(&sampler, start, ball, sim, &mut stream(sim.seed, TAG_EXIT, i as u64), Some(&mut log))?;
        for e in &log {
            let mut row = vec![Cell::from(i), e.time.into()];
            row.extend(ctx.coords(&e.x_pre));
            row.extend(ctx.coords(&e.x_post));
            row.push(Cell::I(e.fictitious as i64));
            table.push(row);
        }
    }
    Ok(table)
}

fn radii(ctx: &Ctx) -> Res<Vec<f64>> {
    let r = ctx.ex.radii.clone().unwrap_or_else(|| vec![0.05, 0.1, 0.2, 0.4]);
    positive_list(&r, "radii")?;
    Ok(r)
}

fn exit_time(ctx: &Ctx, dump: bool) -> Res<Outcome> {
    let center = ctx.center()?;
    let start = ctx.pt(&ctx.ex.start, center, "experiment.start")?;
    let radii = radii(ctx)?;
    let extrapolate = ctx.ex.extrapolate.unwrap_or(false);
    let alpha = ctx.kernel.radial.alpha;
    let mut table = Table::new(&[
        "r",
        "epsilon_used",
        "mean_tau",
        "std_error",
        "normalized_mean",
        "censored_fraction",
        "mean_coarse",
        "mean_fine",
    ]);
    let mut out = Outcome::new(Table::default(), ctx.base_epsilon());
    let mut means = Vec::new();
    let mut normalized = Vec::new();
    for (k, &r) in radii.iter().enumerate() {
        let ball = Ball { center, radius: r };
        let sim = ctx.sim(r)?;
        let coarse = estimate_exit_stats(&ctx.kernel, &start, &ball, &[], ctx.n(), &sim)?;
        let (est, fine_mean) = if extrapolate {
            let fine_cfg = SimConfig { epsilon: sim.epsilon / 2.0, ..sim };
            let fine = estimate_exit_stats(&ctx.kernel, &start, &ball, &[], ctx.n(), &fine_cfg)?;
            (extrapolate_epsilon(&coarse.tau, &fine.tau, alpha, sim.epsilon), fine.tau.mean)
        } else {
            (coarse.tau, f64::NAN)
        };
        let scale = r.powf(alpha) / ctx.kernel.radial.ell_at(r);
        let norm = est.mean / scale;
        table.push(vec![
            r.into(),
            sim.epsilon.into(),
            est.mean.into(),
            est.std_error.into(),
            norm.into(),
            est.censored_fraction.into(),
            coarse.tau.mean.into(),
            fine_mean.into(),
        ]);
        means.push(est.mean);
        normalized.push(norm);
        if dump {
            let count = ctx.ex.dump_replicas.unwrap_or(10);
            out.extra.push((format!("paths_r{k}"), dump_table(ctx, &start, &ball, &sim, count)?));
        }
    }
    if radii.len() >= 2 {
        let (slope, intercept, residual) = fit_loglog(&radii, &means)?;
        out.set_f("slope", slope);
        out.set_f("intercept", intercept);
        out.set_f("residual", residual);
    }
    let lo = normalized.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    out.set_f("normalized_min", lo);
    out.set_f("normalized_max", hi);
    out.set_f("normalized_spread", hi / lo);
    out.set("extrapolated", extrapolate);
    out.plot = Some(Plot {
        title: "Mean exit time".into(),
        x_label: "r".into(),
        y_label: "E τ".into(),
        log_x: true,
        log_y: true,
        series: vec![("mean τ".into(), radii.iter().copied().zip(means.iter().copied()).collect())],
    });
    out.table = table;
    Ok(out)
}

fn survival(ctx: &Ctx, dump: bool) -> Res<Outcome> {
    let center = ctx.center()?;
    let start = ctx.pt(&ctx.ex.start, center, "experiment.start")?;
    let radii = radii(ctx)?;
    let scales = ctx.ex.time_scales.clone().unwrap_or_else(|| vec![0.05, 0.1, 0.2]);
    positive_list(&scales, "time_scales")?;
    let alpha = ctx.kernel.radial.alpha;
    let mut table = Table::new(&["r", "t", "probability", "std_error", "normalized"]);
    let mut out = Outcome::new(Table::default(), ctx.base_epsilon());
    let mut series = Vec::new();
    let mut all = Vec::new();
    for (k, &r) in radii.iter().enumerate() {
        let ball = Ball { center, radius: r };
        let sim = ctx.sim(r)?;
        let natural = r.powf(alpha) / ctx.kernel.radial.ell_at(r);
        let times: Vec<f64> = scales.iter().map(|s| s * natural).collect();
        let stats: ExitStats = estimate_exit_stats(&ctx.kernel, &start, &ball, &times, ctx.n(), &sim)?;
        let mut pts = Vec::new();
        for p in &stats.survival {
            table.push(vec![
                r.into(),
                p.t.into(),
                p.probability.mean.into(),
                p.probability.std_error.into(),
                p.normalized.into(),
            ]);
            pts.push((p.t, p.normalized));
            all.push(p.normalized);
        }
        series.push((format!("r = {r}"), pts));
        if dump {
            let count = ctx.ex.dump_replicas.unwrap_or(10);
            out.extra.push((format!("paths_r{k}"), dump_table(ctx, &start, &ball, &sim, count)?));
        }
    }
    let hi = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = all.iter().copied().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min);
    out.set_f("normalized_max", hi);
    out.set_f("normalized_min_positive", lo);
    out.set_f("normalized_spread", hi / lo);
    out.set("any_zero", all.contains(&0.0));
    out.plot = Some(Plot {
        title: "Normalized distribution function of τ".into(),
        x_label: "t".into(),
        y_label: "P(τ ≤ t) r^α / (t ℓ(r))".into(),
        log_x: true,
        log_y: false,
        series,
    });
    out.table = table;
    Ok(out)
}

fn hitting(ctx: &Ctx) -> Res<Outcome> {
    let x0 = ctx.center()?;
    let r = ctx.ex.r.unwrap_or(1.0);
    let lambda = ctx.ex.lambda.unwrap_or_else(|| ks_default_lambda(&ctx.kernel));
    let axis = *ctx.kernel.cones.caps()[0].axis.as_pt();
    let default_start = std::array::from_fn(|i| x0[i] + 0.9 * lambda * r * axis[i]);
    let start = ctx.pt(&ctx.ex.start, default_start, "experiment.start")?;
    let fractions = ctx.ex.fractions.clone().unwrap_or_else(|| vec![0.5, 0.25, 0.125, 0.0625]);
    let sim = ctx.sim(r)?;
    let rows = estimate_ks_ratio(&ctx.kernel, &x0, r, lambda, &start, &fractions, ctx.n(), &sim)?;
    let mut table = Table::new(&["fraction", "target_radius", "probability", "std_error", "ratio"]);
    for row in &rows {
        table.push(vec![
            row.fraction.into(),
            row.target_radius.into(),
            row.probability.mean.into(),
            row.probability.std_error.into(),
            row.ratio.into(),
        ]);
    }
    let mut out = Outcome::new(table, ctx.base_epsilon());
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio).filter(|v| v.is_finite()).collect();
    out.set_f("lambda", lambda);
    out.set_f("min_ratio", ratios.iter().copied().fold(f64::INFINITY, f64::min));
    out.set_f("max_ratio", ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    out.plot = Some(Plot {
        title: "Hitting probability over volume fraction".into(),
        x_label: "|A| / |B(x₀, λr)|".into(),
        y_label: "ratio".into(),
        log_x: true,
        log_y: true,
        series: vec![("ratio".into(), rows.iter().map(|r| (r.fraction, r.ratio)).collect())],
    });
    Ok(out)
}

fn harmonic(ctx: &Ctx) -> Res<Outcome> {
    let center = ctx.center()?;
    let r = ctx.ex.r.unwrap_or(1.0);
    let g = require(&ctx.ex.data, "data")?.build(ctx.dim)?;
    let points: Vec<Pt> = match &ctx.ex.points {
        Some(ps) => ps.iter().map(|p| point(p, ctx.dim, "experiment.points")).collect::<Res<_>>()?,
        None => vec![center],
    };
    let ball = Ball { center, radius: r };
    let sim = ctx.sim(r)?;
    let mut header = ctx.coord_names("x");
    header.extend(["value", "std_error", "censored_fraction"].map(String::from));
    let mut table = Table::with_header(header);
    for p in &points {
        let e = evaluate_harmonic(&ctx.kernel, &ball, &g, p, ctx.n(), &sim)?;
        let mut row = ctx.coords(p);
        row.extend([e.mean.into(), e.std_error.into(), e.censored_fraction.into()]);
        table.push(row);
    }
    let mut out = Outcome::new(table, ctx.base_epsilon());
    out.set("points", points.len() as i64);
    Ok(out)
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

fn harnack(ctx: &Ctx) -> Res<Outcome> {
    if ctx.ex.negative.is_some() {
        return signed_harnack(ctx);
    }
    let x0 = ctx.center()?;
    let g = require(&ctx.ex.data, "data")?.build(ctx.dim)?;
    let radii = ctx.ex.radii.clone().unwrap_or_else(|| vec![0.02, 0.05, 0.1, 0.2]);
    positive_list(&radii, "radii")?;
    let probes = ctx.ex.probes.unwrap_or(32);
    let tail_probes = ctx.ex.tail_probes.unwrap_or(64);
    let mut table =
        Table::new(&["r", "sup", "inf", "inf_std_error", "quotient", "tail_term", "c1", "c2", "flagged"]);
    let mut quotients = Vec::new();
    let mut max_tail = 0.0f64;
    for &r in &radii {
        let sim = ctx.sim(r)?;
        let rep = harnack_report(&ctx.kernel, &x0, r, &g, probes, tail_probes, ctx.n(), &sim)?;
        let inf_se = rep.values.iter().min_by(|a, b| a.mean.total_cmp(&b.mean)).map_or(f64::NAN, |v| v.std_error);
        table.push(vec![
            r.into(),
            rep.sup.into(),
            rep.inf.into(),
            inf_se.into(),
            rep.quotient.into(),
            rep.tail_term.into(),
            rep.c1.into(),
            rep.c2.into(),
            rep.flagged.into(),
        ]);
        if let Some(q) = rep.quotient {
            quotients.push(q);
        }
        max_tail = max_tail.max(rep.tail_term);
    }
    let mut out = Outcome::new(Table::default(), ctx.base_epsilon());
    out.set_f("max_tail_term", max_tail);
    out.set("resolved_scales", quotients.len() as i64);
    if !quotients.is_empty() {
        let med = median(&quotients);
        let max = quotients.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        out.set_f("median_quotient", med);
        out.set_f("max_quotient", max);
        out.set_f("max_over_median", max / med);
    }
    out.plot = Some(Plot {
        title: "Harnack quotient sup f / inf f".into(),
        x_label: "r".into(),
        y_label: "quotient".into(),
        log_x: true,
        log_y: false,
        series: vec![(
            "quotient".into(),
            table.column("r").unwrap().into_iter().zip(table.column("quotient").unwrap()).collect(),
        )],
    });
    out.table = table;
    Ok(out)
}

/// Signed exterior data p − a·q: constants fitted on one seed and checked on
/// an independent one, with and without the tail term.
fn signed_harnack(ctx: &Ctx) -> Res<Outcome> {
    let x0 = ctx.center()?;
    let r = ctx.ex.r.unwrap_or(0.1);
    let positive = match require(&ctx.ex.data, "data")? {
        crate::config::DataSpec::Pieces { positive, negative } if negative.is_empty() => pieces(&positive, ctx.dim)?,
        _ => {
            return Err(CliError::Config(
                "signed scans need experiment.data of kind \"pieces\" with positive entries only".into(),
            ))
        }
    };
    let negative = pieces(&require(&ctx.ex.negative, "negative")?, ctx.dim)?;
    let amplitudes = ctx.ex.amplitudes.clone().unwrap_or_else(|| vec![0.0, 1.0, 4.0, 16.0, 64.0]);
    if !amplitudes.contains(&0.0) || amplitudes.iter().any(|a| a.is_nan() || *a < 0.0) {
        return Err(CliError::Config("experiment.amplitudes must be non-negative and include 0".into()));
    }
    let safety = ctx.ex.safety.unwrap_or(1.5);
    let probes = ctx.ex.probes.unwrap_or(32);
    let tail_probes = ctx.ex.tail_probes.unwrap_or(64);
    let fit_cfg = ctx.sim(r)?;
    let check_cfg = SimConfig { seed: fit_cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15), ..fit_cfg };
    let scan = |cfg: &SimConfig| {
        signed_harnack_scan(&ctx.kernel, &x0, r, &positive, &negative, &amplitudes, probes, tail_probes, ctx.n(), cfg)
    };
    let fit = scan(&fit_cfg)?;
    let check = scan(&check_cfg)?;
    let (c1, c2) = fit_harnack_constants(&fit, safety)?;
    let mut table = Table::new(&[
        "amplitude",
        "sup_fit",
        "inf_fit",
        "sup_check",
        "inf_check",
        "tail_term",
        "holds_with_tail",
        "holds_without_tail",
    ]);
    let mut all_with = true;
    let mut any_without_fails = false;
    for (a, b) in fit.iter().zip(&check) {
        let with = harnack_holds(b, c1, c2);
        let without = harnack_holds(b, c1, 0.0);
        all_with &= with;
        any_without_fails |= !without;
        table.push(vec![
            a.amplitude.into(),
            a.sup.into(),
            a.inf.into(),
            b.sup.into(),
            b.inf.into(),
            b.tail_term.into(),
            with.into(),
            without.into(),
        ]);
    }
    let mut out = Outcome::new(table, ctx.base_epsilon());
    out.set_f("r", r);
    out.set_f("safety", safety);
    out.set_f("c1", c1);
    out.set_f("c2", c2);
    out.set("holds_with_tail", all_with);
    out.set("tail_free_fails", any_without_fails);
    Ok(out)
}

fn restricted(ctx: &Ctx) -> Res<Outcome> {
    let x0 = ctx.center()?;
    let r = ctx.ex.r.unwrap_or(1.0);
    let lambda = ctx.ex.lambda.unwrap_or_else(|| default_lambda(ctx.kernel.cones.governing_half_angle()));
    let x = ctx.pt(&ctx.ex.x, x0, "experiment.x")?;
    let y = ctx.pt(&ctx.ex.y, x0, "experiment.y")?;
    let h = require(&ctx.ex.data, "data")?.build(ctx.dim)?;
    let sim = ctx.sim(lambda * r)?;
    let rep = restricted_harnack_check(&ctx.kernel, &x0, r, lambda, &h, &x, &y, ctx.n(), &sim)?;
    let mut table =
        Table::new(&["lambda", "small_mean", "small_std_error", "large_mean", "large_std_error", "ratio", "vacuous"]);
    table.push(vec![
        lambda.into(),
        rep.small.mean.into(),
        rep.small.std_error.into(),
        rep.large.mean.into(),
        rep.large.std_error.into(),
        rep.ratio.into(),
        rep.vacuous.into(),
    ]);
    let mut out = Outcome::new(table, ctx.base_epsilon());
    out.set_f("lambda", lambda);
    if let Some(q) = rep.ratio {
        out.set_f("ratio", q);
    }
    out.set("vacuous", rep.vacuous);
    Ok(out)
}

fn hoelder(ctx: &Ctx) -> Res<Outcome> {
    let x0 = ctx.center()?;
    let big_r = ctx.ex.r.unwrap_or(1.0);
    let g = require(&ctx.ex.data, "data")?.build(ctx.dim)?;
    let scales = ctx.ex.scales.clone().unwrap_or_else(|| (1..=4).map(|k| big_r / 2f64.powi(k)).collect());
    positive_list(&scales, "scales")?;
    let probes = ctx.ex.probes.unwrap_or(12);
    let sim = ctx.sim(big_r)?;
    let fit = holder_fit(&ctx.kernel, &x0, big_r, &g, &scales, probes, ctx.n(), &sim)?;
    let mut table = Table::new(&["rho", "osc", "std_error", "usable"]);
    for s in &fit.scales {
        table.push(vec![s.rho.into(), s.osc.into(), s.std_error.into(), s.usable.into()]);
    }
    let mut out = Outcome::new(table, ctx.base_epsilon());
    if let (Some(b), Some(res), Some(c3)) = (fit.beta, fit.residual, fit.c3) {
        out.set_f("beta", b);
        out.set_f("residual", res);
        out.set_f("c3", c3);
    }
    out.set("usable_scales", fit.scales.iter().filter(|s| s.usable).count() as i64);
    out.plot = Some(Plot {
        title: "Oscillation decay".into(),
        x_label: "ρ".into(),
        y_label: "osc".into(),
        log_x: true,
        log_y: true,
        series: vec![("osc".into(), fit.scales.iter().map(|s| (s.rho, s.osc)).collect())],
    });
    Ok(out)
}

fn levy_check(ctx: &Ctx) -> Res<Outcome> {
    let center = ctx.center()?;
    let start = ctx.pt(&ctx.ex.start, center, "experiment.start")?;
    let a = require(&ctx.ex.region_a, "region_a")?.build(ctx.dim)?;
    let b = require(&ctx.ex.region_b, "region_b")?.build(ctx.dim)?;
    let stop = match ctx.ex.stop_radius {
        Some(radius) => StopRule::Exit { center, radius },
        None => StopRule::FixedTime { t: ctx.ex.stop_time.unwrap_or(1.0) },
    };
    let mode = match ctx.ex.rate_grid.unwrap_or(33) {
        0 => RateMode::Exact,
        points => RateMode::Grid { points },
    };
    let sim = ctx.sim(1.0)?;
    let rep = levy_system_paths(&ctx.kernel, &start, &a, &b, stop, ctx.n(), &sim, mode)?;
    let joint = rep.difference.std_error;
    let z = if joint > 0.0 { rep.difference.mean / joint } else { 0.0 };
    let mut table = Table::new(&[
        "jumps",
        "jumps_std_error",
        "compensator",
        "compensator_std_error",
        "difference",
        "difference_std_error",
        "z_score",
    ]);
    table.push(vec![
        rep.jumps.mean.into(),
        rep.jumps.std_error.into(),
        rep.compensator.mean.into(),
        rep.compensator.std_error.into(),
        rep.difference.mean.into(),
        joint.into(),
        z.into(),
    ]);
    let mut out = Outcome::new(table, sim.epsilon);
    out.set_f("jumps", rep.jumps.mean);
    out.set_f("compensator", rep.compensator.mean);
    out.set_f("z_score", z);
    out.set("agree_3se", rep.difference.mean.abs() <= 3.0 * joint);
    Ok(out)
}

fn nondegeneracy(ctx: &Ctx) -> Res<Outcome> {
    let x = ctx.center()?;
    let rhos = ctx.ex.rhos.clone().unwrap_or_else(|| vec![0.1, 0.5]);
    positive_list(&rhos, "rhos")?;
    let d = ctx.dim;
    let mut header = vec!["rho".to_string()];
    for i in 1..=d {
        for j in 1..=d {
            header.push(format!("a{i}{j}"));
        }
    }
    header.extend(["lambda_min", "lambda_max"].map(String::from));
    let mut table = Table::with_header(header);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &rho in &rhos {
        let rep = nondegeneracy_matrix(&ctx.kernel, &x[..d], rho, None)?;
        let mut row = vec![Cell::F(rho)];
        row.extend(rep.matrix.iter().flatten().map(|v| Cell::F(*v)));
        row.extend([rep.lambda_min.into(), rep.lambda_max.into()]);
        table.push(row);
        lo = lo.min(rep.lambda_min);
        hi = hi.max(rep.lambda_max);
    }
    let mut out = Outcome::new(table, ctx.base_epsilon());
    out.set_f("lambda_min", lo);
    out.set_f("lambda_max", hi);
    out.set("positive_definite", lo > 0.0);
    Ok(out)
}

fn eta(ctx: &Ctx) -> Res<Outcome> {
    let x0 = ctx.center()?;
    let alpha = ctx.kernel.radial.alpha;
    let gamma = PowerDensity { dim: ctx.dim, exponent: ctx.dim as f64 + alpha };
    let r_grid = ctx.ex.r_grid.clone().unwrap_or_else(|| vec![0.01, 0.05, 0.1, 0.2]);
    positive_list(&r_grid, "r_grid")?;
    let j_max = ctx.ex.j_max.unwrap_or(8);
    let probes = ctx.ex.probes.unwrap_or(16);
    let mut table = Table::new(&["r", "j", "nu_at_center", "closed_form", "eta", "root"]);
    let (mut worst_err, mut max_root) = (0.0f64, f64::NEG_INFINITY);
    for &r in &r_grid {
        let xs = ball_points(ctx.dim, &x0, 0.5 * r, probes.max(1));
        for j in 1..=j_max {
            let region = Region::BallComplement { center: x0, radius: 2f64.powi(j as i32) * r };
            let nu = nu_measure(&gamma, &TailMeasureQuery { x0, r, x: x0, region: Some(region) })?;
            let closed = 2f64.powf(-(j as f64) * alpha);
            let rep = eta_rj(&gamma, &x0, r, j, &xs)?;
            worst_err = worst_err.max((nu - closed).abs());
            if j >= 5 {
                max_root = max_root.max(rep.root);
            }
            table.push(vec![r.into(), j.into(), nu.into(), closed.into(), rep.eta.into(), rep.root.into()]);
        }
    }
    let mut out = Outcome::new(table, ctx.base_epsilon());
    out.set_f("max_abs_error_at_center", worst_err);
    out.set_f("max_root_j_ge_5", max_root);
    Ok(out)
}

fn apply_l_cmd(ctx: &Ctx) -> Res<Outcome> {
    let f = require(&ctx.ex.function, "function")?.build(ctx.dim)?;
    let points: Vec<Pt> = match &ctx.ex.points {
        Some(ps) => ps.iter().map(|p| point(p, ctx.dim, "experiment.points")).collect::<Res<_>>()?,
        None => vec![ctx.center()?],
    };
    let mut header = ctx.coord_names("x");
    header.push("value".into());
    let mut table = Table::with_header(header);
    for p in &points {
        let v = apply_l(&ctx.kernel, &f, &p[..ctx.dim])?;
        let mut row = ctx.coords(p);
        row.push(v.into());
        table.push(row);
    }
    let mut out = Outcome::new(table, ctx.base_epsilon());
    out.set("points", points.len() as i64);
    Ok(out)
}

fn karamata(ctx: &Ctx) -> Res<Outcome> {
    let ell = ctx.ex.ell.clone().unwrap_or_else(|| ctx.kernel.radial.ell.clone());
    let beta1 = ctx.ex.beta1.unwrap_or(0.0);
    let r_grid = ctx.ex.r_grid.clone().unwrap_or_else(|| (1..=6).map(|k| 10f64.powi(-k)).collect());
    positive_list(&r_grid, "r_grid")?;
    let mut table = Table::new(&["r", "ratio_small", "ratio_large"]);
    let mut last = f64::NAN;
    for &r in &r_grid {
        let small = karamata_ratio_small(&ell, beta1, r)?.ratio;
        let large = match ctx.ex.beta2 {
            Some(b2) => karamata_ratio_large(&ell, b2, r)?.ratio,
            None => f64::NAN,
        };
        table.push(vec![r.into(), small.into(), large.into()]);
        last = small;
    }
    let mut out = Outcome::new(table, ctx.base_epsilon());
    out.set_f("beta1", beta1);
    out.set_f("ratio_small_at_last_r", last);
    Ok(out)
}

fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Unit vector at angle `psi` from `axis`, tilted in a random direction.
fn tilt(rng: &mut ChaCha8Rng, axis: &[f64], psi: f64) -> Vec<f64> {
    if axis.len() == 1 {
        return axis.to_vec();
    }
    loop {
        let w = random_unit(rng, axis.len());
        let p: f64 = w.iter().zip(axis).map(|(a, b)| a * b).sum();
        let perp: Vec<f64> = w.iter().zip(axis).map(|(a, b)| a - p * b).collect();
        let n = perp.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            return axis.iter().zip(&perp).map(|(a, q)| psi.cos() * a + psi.sin() * q / n).collect();
        }
    }
}

fn geometry_check(ctx: &Ctx) -> Res<Outcome> {
    let d = ctx.dim;
    let mut table = Table::new(&[
        "trial", "mode", "lambda", "m1", "m2", "m3", "m4", "v1", "v2", "v3", "v4", "nonnegative",
    ]);
    let push = |table: &mut Table, trial: usize, mode: &str, lam: f64, m: [f64; 4], v: [f64; 4]| {
        let mut row = vec![Cell::from(trial), mode.into(), lam.into()];
        row.extend(m.iter().chain(&v).map(|x| Cell::F(*x)));
        row.push(v.iter().all(|x| *x >= 0.0).into());
        table.push(row);
    };
    let mut out = Outcome::new(Table::default(), ctx.base_epsilon());

    if let Some(z) = &ctx.ex.target {
        let x0 = ctx.center()?;
        let u0 = ctx.pt(&ctx.ex.start, x0, "experiment.start")?;
        let z = point(z, d, "experiment.target")?;
        let r = ctx.ex.r.unwrap_or(1.0);
        let (cfg, cone) = build_chain(&x0[..d], r, &ctx.kernel, &u0[..d], &z[..d], ctx.ex.lambda)?;
        let v = verify_chain(&cfg, &cone);
        push(&mut table, 0, "single", cfg.lambda, cfg.margins, v);
        out.set("nonnegative", v.iter().all(|x| *x >= 0.0));
        out.set("chain", toml::Value::try_from(cfg).map_err(|e| CliError::Io(e.to_string()))?);
        out.table = table;
        return Ok(out);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let theta_gov = ctx.kernel.cones.governing_half_angle();
    let caps = ctx.kernel.cones.caps();
    let trials = ctx.ex.trials.unwrap_or(1000);
    let mut all_ok = true;
    for trial in 0..trials {
        let cap = caps[rng.random_range(0..caps.len())];
        let axis: Vec<f64> =
            if cap.is_full() { random_unit(&mut rng, d) } else { cap.axis.components().to_vec() };
        let theta = cap.polar_half_angle();
        let r: f64 = rng.random_range(0.05..1.0);
        let lam = rng.random_range(1e-3..1.0) * default_lambda(theta_gov);
        let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let off = random_unit(&mut rng, d);
        let s = rng.random_range(0.0..0.99) * lam * r;
        let u0: Vec<f64> = x0.iter().zip(&off).map(|(a, b)| a + s * b).collect();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let signed: Vec<f64> = axis.iter().map(|a| sign * a).collect();
        let psi = rng.random_range(0.0..0.999) * theta;
        let dir = tilt(&mut rng, &signed, psi);
        let t = rng.random_range((1.5 + lam) * r * 1.001..(100.0 - lam) * r);
        let z: Vec<f64> = u0.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
        let (cfg, cone) = build_chain(&x0, r, &ctx.kernel, &u0, &z, Some(lam))?;
        let v = verify_chain(&cfg, &cone);
        all_ok &= v.iter().all(|x| *x >= 0.0);
        push(&mut table, trial, "random", lam, cfg.margins, v);
    }

    // Directed search with λ beyond the admissible sin θ/8.
    let inflate = ctx.ex.inflate.unwrap_or(2.0);
    let inflated_trials = ctx.ex.inflated_trials.unwrap_or(50);
    let mut negative = 0usize;
    for trial in 0..inflated_trials {
        let cap = caps[rng.random_range(0..caps.len())];
        let axis: Vec<f64> =
            if cap.is_full() { random_unit(&mut rng, d) } else { cap.axis.components().to_vec() };
        let lam = inflate * lambda_max(theta_gov);
        let x0 = vec![0.0; d];
        let z: Vec<f64> = axis.iter().map(|a| 20.0 * a).collect();
        match build_chain(&x0, 1.0, &ctx.kernel, &x0, &z, Some(lam)) {
            Ok((cfg, cone)) => {
                let v = verify_chain(&cfg, &cone);
                if v.iter().any(|x| *x < 0.0) {
                    negative += 1;
                }
                push(&mut table, trial, "inflated", lam, cfg.margins, v);
            }
            Err(Error::Infeasible(m)) => {
                negative += 1;
                push(&mut table, trial, "inflated", lam, m, m);
            }
            Err(e) => return Err(e.into()),
        }
    }
    out.set("random_trials", trials as i64);
    out.set("random_all_nonnegative", all_ok);
    out.set_f("inflate", inflate);
    out.set("inflated_trials", inflated_trials as i64);
    out.set("inflated_negative", negative as i64);
    if !all_ok {
        out.failures.push("a feasible configuration has a negative verified margin".into());
    }
    out.table = table;
    Ok(out)
}
