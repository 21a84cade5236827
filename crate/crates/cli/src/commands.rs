use crate::config::{ConfigError, ExperimentConfig};
use crate::output::{CsvTable, RunOutput};
use isodiff::action::action_one_bump;
use isodiff::chain::build_chain;
use isodiff::fit::fit_power;
use isodiff::onebump::solve_one_bump;
use isodiff::reduced::{reduced_action, solve_reduced};
use isodiff::simulator::{integrate, scaling_experiment, shadow_verify, Flow, FlowState, IntegrateOptions, ShadowOptions, Trajectory};
use isodiff::spectral::{gamma_fourier, gamma_samples, homoclinic_samples, reduced_samples, splitting_bound_check, three_scale_coeffs, ThreeScaleConfig};
use isodiff::splitting::{certify_series, find_critical_points, interpolant, three_scale_certify, CriticalKind, ThreeScaleOptions};
use isodiff::tori::{flow_residual, symplectic_residual, torus_correction, zero_mean_check, TorusSettings};
use isodiff::torus::TorusGrid;
use std::f64::consts::PI;

#[derive(Debug)]
pub enum Failure {
    Config(ConfigError),
    Numerical(isodiff::Error),
    Io(std::io::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<isodiff::Error> for Failure {
    fn from(e: isodiff::Error) -> Self {
        Failure::Numerical(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

pub struct Context<'a> {
    pub config: &'a ExperimentConfig,
    pub out: &'a mut RunOutput,
    pub verbose: bool,
}

impl Context<'_> {
    fn log(&self, message: impl AsRef<str>) {
        if self.verbose {
            eprintln!("{}", message.as_ref());
        }
    }

    fn grid(&self) -> Result<TorusGrid, Failure> {
        Ok(TorusGrid::new(self.config.problem.n, self.config.numerics.torus_grid)?)
    }
}

fn point_columns(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("a{i}")).collect()
}

fn numbered(stem: &str, index: usize, count: usize) -> String {
    if count == 1 {
        format!("{stem}.csv")
    } else {
        format!("{stem}_{index}.csv")
    }
}

pub fn orbit(ctx: &mut Context) -> Result<(), Failure> {
    let system = ctx.config.system()?;
    let settings = ctx.config.orbit_settings();
    let a = ctx.config.a();
    let theta = ctx.config.task.theta;
    let mus = ctx.config.mus();
    let mut summary = CsvTable::new(["mu", "residual", "F", "dF_dtheta", "reduced_residual", "F_reduced", "reduced_alpha"])
        .meta("theta", theta)
        .meta("a", format!("{a:?}"));
    for (i, &mu) in mus.iter().enumerate() {
        ctx.log(format!("orbit: mu = {mu}"));
        let one = solve_one_bump(&system, mu, &a, theta, &settings)?;
        let act = action_one_bump(&system, &one);
        let red = solve_reduced::<f64>(&system, mu, &a, theta, &settings)?;
        let ract = reduced_action(&system, &red);
        let q = one.q();
        let mut table = CsvTable::new(["t", "q", "qdot", "Q_reduced", "Qdot_reduced"]).meta("mu", mu);
        for (j, t) in q.grid.nodes().enumerate() {
            let (wr, dwr) = red.w_at(t);
            let base = isodiff::system::BasePoint::<f64>::at_single(t - theta);
            table.rows.push(vec![t, q.values[j], q.derivative_values[j], base.q + wr, base.dq + dwr]);
        }
        ctx.out.csv(&numbered("orbit", i, mus.len()), &table)?;
        summary.rows.push(vec![mu, one.residual, act.value, act.dtheta[0], red.residual, ract.value, red.alpha]);
        ctx.out.constant(&format!("residual[{mu}]"), one.residual);
    }
    ctx.out.csv("orbit_summary.csv", &summary)?;
    Ok(())
}

pub fn gmap(ctx: &mut Context) -> Result<(), Failure> {
    let system = ctx.config.system()?;
    let settings = ctx.config.orbit_settings();
    let grid = ctx.grid()?;
    let mus = ctx.config.mus();
    let reduced = ctx.config.task.reduced;
    for (i, &mu) in mus.iter().enumerate() {
        ctx.log(format!("gmap: mu = {mu} on {} points", grid.len()));
        let values =
            if reduced { reduced_samples(&system, mu, &grid, &settings)? } else { homoclinic_samples(&system, mu, &grid, &settings)? };
        let mut header = point_columns(grid.n);
        header.push(if reduced { "G_reduced".into() } else { "G".into() });
        let mut table = CsvTable::new(header).meta("mu", mu).meta("grid", grid.m);
        for (idx, v) in values.iter().enumerate() {
            let mut row = grid.point(idx);
            row.push(*v);
            table.rows.push(row);
        }
        ctx.out.csv(&numbered("gmap", i, mus.len()), &table)?;
        let (lo, hi) = values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(*v), h.max(*v)));
        ctx.out.constant(&format!("range[{mu}]"), [lo, hi]);
    }
    Ok(())
}

pub fn melnikov(ctx: &mut Context) -> Result<(), Failure> {
    let system = ctx.config.system()?;
    let grid = ctx.grid()?;
    let omega = system.omega();
    let values = gamma_samples(&grid, omega, &system.f);
    let mut header = point_columns(grid.n);
    header.push("amplitude".into());
    let mut profile = CsvTable::new(header).meta("grid", grid.m);
    for (idx, v) in values.iter().enumerate() {
        let mut row = grid.point(idx);
        row.push(*v);
        profile.rows.push(row);
    }
    ctx.out.csv("melnikov_profile.csv", &profile)?;
    let bound = ctx.config.numerics.fourier_bound;
    let table = gamma_fourier(omega, &system.f, bound);
    let mut header: Vec<String> = (1..=grid.n).map(|i| format!("k{i}")).collect();
    header.extend(["re", "im", "amplitude"].map(String::from));
    let mut coeffs = CsvTable::new(header).meta("bound", bound).meta("amplitude", "cosine amplitude 2|c_k| (|c_0| at k = 0)");
    for (k, c) in &table.entries {
        if c.norm() == 0.0 {
            continue;
        }
        let zero = k.iter().all(|x| *x == 0);
        let mut row: Vec<f64> = k.iter().map(|x| *x as f64).collect();
        row.extend([c.re, c.im, if zero { c.norm() } else { 2.0 * c.norm() }]);
        coeffs.rows.push(row);
    }
    ctx.out.csv("melnikov_fourier.csv", &coeffs)?;
    ctx.out.constant("profile_max", values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    Ok(())
}

pub fn bound(ctx: &mut Context) -> Result<(), Failure> {
    let system = ctx.config.system()?;
    let settings = ctx.config.orbit_settings();
    let grid = ctx.grid()?;
    let delta = ctx.config.task.delta.unwrap_or(PI / 8.0);
    let bound = ctx.config.numerics.fourier_bound;
    let mut header: Vec<String> = (1..=grid.n).map(|i| format!("k{i}")).collect();
    header.extend(["mu", "deviation", "envelope", "ratio"].map(String::from));
    let mut table = CsvTable::new(header).meta("delta", delta).meta("bound", bound);
    let mut c6 = Vec::new();
    for mu in ctx.config.mus() {
        ctx.log(format!("bound: mu = {mu}"));
        let report = splitting_bound_check(&system, mu, delta, &grid, bound, &settings)?;
        for e in &report.entries {
            let mut row: Vec<f64> = e.k.iter().map(|x| *x as f64).collect();
            row.extend([mu, e.deviation, e.envelope, e.ratio]);
            table.rows.push(row);
        }
        ctx.out.constant(&format!("C6[{mu}]"), report.max_ratio);
        ctx.out.report(&format!("excluded[{mu}]"), report.excluded);
        c6.push(report.max_ratio);
    }
    let hi = c6.iter().copied().fold(0.0, f64::max);
    let lo = c6.iter().copied().fold(f64::INFINITY, f64::min);
    ctx.out.constant("C6_spread", hi / lo);
    ctx.out.csv("bound.csv", &table)?;
    Ok(())
}

pub fn tori(ctx: &mut Context) -> Result<(), Failure> {
    let frequency = ctx.config.frequency()?;
    let f = ctx.config.general_perturbation()?;
    let grid = ctx.grid()?;
    let n = grid.n;
    let i0 = ctx.config.task.i0.clone().unwrap_or_else(|| vec![0.0; n]);
    let seed = ctx.config.task.seed.unwrap_or(7);
    let mus = ctx.config.mus();
    for (i, &mu) in mus.iter().enumerate() {
        ctx.log(format!("tori: mu = {mu}"));
        let torus = torus_correction(&frequency, &f, mu, &grid, &i0, &TorusSettings::default())?;
        let residual = flow_residual(&torus, &f);
        let zero_mean = zero_mean_check(&torus.orbit, &f);
        let symplectic = symplectic_residual(&torus, 32, seed);
        let mut header = point_columns(n);
        header.extend(["Q", "P"].map(String::from));
        header.extend((1..=n).map(|c| format!("a_mu{c}")));
        let mut table = CsvTable::new(header).meta("mu", mu).meta("energy", torus.energy);
        for idx in 0..grid.len() {
            let mut row = grid.point(idx);
            row.extend([torus.orbit.q[idx], torus.orbit.p[idx]]);
            row.extend(torus.a.iter().map(|c| c[idx]));
            table.rows.push(row);
        }
        ctx.out.csv(&numbered("torus", i, mus.len()), &table)?;
        ctx.out.constant(&format!("flow_residual[{mu}]"), residual.max());
        ctx.out.constant(&format!("zero_mean[{mu}]"), zero_mean);
        ctx.out.constant(&format!("symplectic_deviation[{mu}]"), symplectic.max_deviation);
        ctx.out.constant(&format!("min_divisor[{mu}]"), torus.min_divisor);
        ctx.out.report(&format!("symplectic[{mu}]"), &symplectic);
    }
    Ok(())
}

fn kind_code(kind: CriticalKind) -> f64 {
    match kind {
        CriticalKind::Minimum => 0.0,
        CriticalKind::Maximum => 1.0,
        CriticalKind::Saddle => 2.0,
        CriticalKind::Degenerate => 3.0,
    }
}

pub fn certify(ctx: &mut Context) -> Result<(), Failure> {
    let system = ctx.config.system()?;
    let settings = ctx.config.orbit_settings();
    let grid = ctx.grid()?;
    let mus = ctx.config.mus();
    for (i, &mu) in mus.iter().enumerate() {
        ctx.log(format!("certify: mu = {mu}"));
        let values = homoclinic_samples(&system, mu, &grid, &settings)?;
        let report = find_critical_points(&grid, &values)?;
        let mut header = point_columns(grid.n);
        header.extend(["value", "kind"].map(String::from));
        header.extend((1..=grid.n).map(|c| format!("eigenvalue{c}")));
        let mut table = CsvTable::new(header).meta("mu", mu).meta("kind", "0 minimum, 1 maximum, 2 saddle, 3 degenerate");
        for p in &report.points {
            let mut row = p.point.clone();
            row.extend([p.value, kind_code(p.kind)]);
            row.extend(&p.eigenvalues);
            table.rows.push(row);
        }
        ctx.out.csv(&numbered("critical_points", i, mus.len()), &table)?;
        let center = match &ctx.config.task.a {
            Some(a) => a.clone(),
            None => report
                .global_minimum()
                .map(|p| p.point.clone())
                .ok_or_else(|| isodiff::Error::Certification("no nondegenerate minimum".into()))?,
        };
        let cert = certify_series(&interpolant(&grid, &values), &center, &isodiff::splitting::CertifyOptions::default())?;
        ctx.out.constant(&format!("delta[{mu}]"), cert.delta);
        ctx.out.constant(&format!("alpha[{mu}]"), cert.alpha);
        ctx.out.json(&numbered("certificate", i, mus.len()).replace(".csv", ".json"), &cert)?;
    }
    Ok(())
}

pub fn chain(ctx: &mut Context) -> Result<(), Failure> {
    let system = ctx.config.system()?;
    let (i0, i0p) = ctx.config.jump_ends(system.omega())?;
    let options = ctx.config.pipeline();
    let mus = ctx.config.mus();
    for (i, &mu) in mus.iter().enumerate() {
        ctx.log(format!("chain: mu = {mu}"));
        let run = build_chain(&system, mu, &i0, &i0p, &options)?;
        let n = system.n();
        let mut header = vec!["index".to_string(), "theta".to_string()];
        header.extend((1..=n).map(|c| format!("jump{c}")));
        header.extend((1..=n).map(|c| format!("I{c}")));
        let mut table = CsvTable::new(header).meta("mu", mu).meta("k", run.plan.k).meta("T_d", run.diffusion_time);
        for tr in &run.result.transitions {
            let mut row = vec![tr.index as f64, tr.theta];
            row.extend(tr.jump());
            row.extend(&tr.after.action);
            table.rows.push(row);
        }
        ctx.out.csv(&numbered("transitions", i, mus.len()), &table)?;
        ctx.out.json(&numbered("chain", i, mus.len()).replace(".csv", ".json"), &run)?;
        let r = &run.result;
        ctx.out.constant(&format!("T_d[{mu}]"), run.diffusion_time);
        ctx.out.constant(&format!("k[{mu}]"), run.plan.k);
        ctx.out.constant(&format!("D[{mu}]"), run.plan.spacing);
        ctx.out.constant(&format!("C2_prefactor[{mu}]"), run.plan.remainder.prefactor);
        ctx.out.constant(&format!("C2_rate[{mu}]"), run.plan.remainder.rate);
        ctx.out.constant(&format!("net_constant[{mu}]"), run.plan.net_constant);
        ctx.out.constant(&format!("K2[{mu}]"), r.k2);
        ctx.out.constant(&format!("K3[{mu}]"), r.k3);
        ctx.out.constant(&format!("gradient_norm[{mu}]"), r.gradient_norm);
    }
    Ok(())
}

pub fn simulate(ctx: &mut Context) -> Result<(), Failure> {
    let system = ctx.config.system()?;
    let task = &ctx.config.task;
    let n = system.n();
    if task.shadow {
        let (i0, i0p) = ctx.config.jump_ends(system.omega())?;
        let options = ctx.config.pipeline();
        let shadow = ShadowOptions {
            dt: task.dt.unwrap_or(ShadowOptions::default().dt),
            scheme: task.scheme.unwrap_or_default(),
            ..ShadowOptions::default()
        };
        for (i, mu) in ctx.config.mus().into_iter().enumerate() {
            ctx.log(format!("simulate: shadowing the chain at mu = {mu}"));
            let run = build_chain(&system, mu, &i0, &i0p, &options)?;
            let report = shadow_verify(&system, mu, &run.result, options.eta, &shadow)?;
            let mut table = CsvTable::new(["index", "theta", "jump_error", "edge_deviation", "approach", "energy_drift"])
                .meta("mu", mu)
                .meta("tolerance", report.tolerance);
            for w in &report.windows {
                table.rows.push(vec![w.index as f64, w.theta, w.jump_error, w.edge_deviation, w.approach, w.energy_drift]);
            }
            ctx.out.csv(&format!("shadow_{i}.csv"), &table)?;
            ctx.out.constant(&format!("max_jump_error[{mu}]"), report.max_jump_error);
            ctx.out.constant(&format!("departure[{mu}]"), report.departure);
            ctx.out.constant(&format!("arrival[{mu}]"), report.arrival);
            ctx.out.report(&format!("failures[{mu}]"), &report.failures);
        }
        return Ok(());
    }
    let initial = task
        .initial
        .clone()
        .ok_or_else(|| ConfigError { field: "task.initial".into(), message: "required unless task.shadow is set".into() })?;
    let state = FlowState { t: 0.0, phi: initial.phi, action: initial.action, q: initial.q, p: initial.p };
    let options = IntegrateOptions {
        dt: task.dt.unwrap_or(1e-2),
        scheme: task.scheme.unwrap_or_default(),
        record_every: task.record_every.unwrap_or(100),
        drift_bound: None,
    };
    let duration = task.duration.unwrap_or(100.0);
    for (i, mu) in ctx.config.mus().into_iter().enumerate() {
        ctx.log(format!("simulate: mu = {mu}, T = {duration}"));
        let trajectory = integrate(&Flow::new(&system, mu), &state, duration, &options)?;
        let mut table = CsvTable::new(Trajectory::header(n)).meta("mu", mu).meta("dt", options.dt);
        table.rows = trajectory.rows();
        ctx.out.csv(&format!("trajectory_{i}.csv"), &table)?;
        ctx.out.constant(&format!("energy_drift[{mu}]"), trajectory.max_drift);
    }
    Ok(())
}

pub fn scaling(ctx: &mut Context) -> Result<(), Failure> {
    let system = ctx.config.system()?;
    let (i0, i0p) = ctx.config.jump_ends(system.omega())?;
    let mus = ctx.config.mus();
    ctx.log(format!("scaling: {} values of mu", mus.len()));
    let report = scaling_experiment(&system, &mus, &i0, &i0p, &ctx.config.pipeline());
    let mut table = CsvTable::new(["mu", "delta", "k", "T_d", "ratio"]).meta("ratio", "T_d·mu/|ln mu|");
    for r in &report.rows {
        let nan = f64::NAN;
        table.rows.push(vec![
            r.mu,
            r.delta.unwrap_or(nan),
            r.k.map_or(nan, |k| k as f64),
            r.diffusion_time.unwrap_or(nan),
            r.ratio.unwrap_or(nan),
        ]);
    }
    ctx.out.csv("scaling.csv", &table)?;
    if let Some(fit) = report.fit {
        ctx.out.constant("c", fit.slope);
        ctx.out.constant("a", report.offset);
        ctx.out.constant("r_squared", fit.r_squared);
    }
    ctx.out.constant("band", report.band);
    ctx.out.report("rows", &report.rows);
    Ok(())
}

pub fn three_scale(ctx: &mut Context) -> Result<(), Failure> {
    let base = ctx.config.problem.three_scale.clone().ok_or_else(|| ConfigError {
        field: "problem.three_scale".into(),
        message: "required by the three-scale subcommand".into(),
    })?;
    let f = ctx.config.perturbation()?;
    let epsilons = ctx.config.task.epsilons.clone().unwrap_or_else(|| vec![base.epsilon]);
    let slow = ctx.config.task.slow_points.unwrap_or(64);
    let dims = base.beta.len();
    if dims != 1 {
        return Err(ConfigError { field: "problem.three_scale.beta".into(), message: "one slow angle is supported".into() }.into());
    }
    let points: Vec<Vec<f64>> = (0..slow).map(|j| vec![2.0 * PI * j as f64 / slow as f64]).collect();
    let mut defects = Vec::new();
    for (i, &eps) in epsilons.iter().enumerate() {
        ctx.log(format!("three-scale: epsilon = {eps}"));
        let cfg = ThreeScaleConfig { epsilon: eps, ..base.clone() };
        let coeffs = three_scale_coeffs(&cfg, &f, &points)?;
        let mut table = CsvTable::new(["a2", "gamma0", "gamma0_limit", "gamma1_re", "gamma1_im", "limit_re", "limit_im"])
            .meta("epsilon", eps)
            .meta("gamma1", "k1 = 1 coefficient divided by (4π/√ε)e^{−π/(2√ε)}");
        for p in &coeffs.profiles {
            table.rows.push(vec![
                p.a2[0],
                p.gamma0,
                p.gamma0_limit,
                p.gamma1_rescaled.re,
                p.gamma1_rescaled.im,
                p.gamma1_limit.re,
                p.gamma1_limit.im,
            ]);
        }
        ctx.out.csv(&format!("three_scale_{i}.csv"), &table)?;
        ctx.out.constant(&format!("gamma0_defect[{eps}]"), coeffs.gamma0_defect);
        ctx.out.constant(&format!("gamma1_defect[{eps}]"), coeffs.gamma1_defect);
        ctx.out.constant(&format!("tail_ratio[{eps}]"), coeffs.tail_ratio);
        defects.push((eps, coeffs.gamma0_defect));
        let mu = if ctx.config.problem.mu > 0.0 { ctx.config.problem.mu } else { eps * eps };
        match three_scale_certify(&cfg, &f, mu, &ThreeScaleOptions::default()) {
            Ok(cert) => {
                ctx.out.constant(&format!("ln_delta[{eps}]"), cert.ln_delta);
                ctx.out.constant(&format!("ln_scale[{eps}]"), cert.ln_scale);
                ctx.out.constant(&format!("c0[{eps}]"), cert.c0);
                ctx.out.constant(&format!("c1[{eps}]"), cert.c1);
                ctx.out.json(&format!("three_scale_certificate_{i}.json"), &cert)?;
            }
            Err(e) => ctx.out.report(&format!("certificate_error[{eps}]"), e.to_string()),
        }
    }
    let usable: Vec<&(f64, f64)> = defects.iter().filter(|d| d.1 > 0.0).collect();
    if usable.len() >= 2 {
        let fit = fit_power(&usable.iter().map(|d| d.0).collect::<Vec<_>>(), &usable.iter().map(|d| d.1).collect::<Vec<_>>())?;
        ctx.out.constant("gamma0_defect_exponent", fit.slope);
    }
    Ok(())
}
