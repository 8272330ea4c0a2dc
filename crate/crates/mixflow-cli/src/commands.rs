//! Subcommand handlers.

use std::path::Path;

use mixflow::control::{rescale_control, TimeRescale};
use mixflow::error::{Error, Result};
use mixflow::metrics::{self, MetricKind, NormKind, SelectOptions};
use mixflow::opt::{
    self, GeodesicReport, MixingProblemSpec, OptimizeOptions, OptimizerResult, TransferOptions,
};
use mixflow::transport::{self, Direction, FnControl, IntegrateOptions};
use mixflow::{euler, helmholtz, io, presets, spectral, Grid, ScalarField};

use crate::inputs::{self, ControlInput};
use crate::outputs;
use crate::{
    Command, DecomposeArgs, DiagnoseArgs, EulerArgs, ExportPgmArgs, MakeFieldArgs, MixArgs,
    RescaleArgs, SelectVelocityArgs, TransferArgs, TransportArgs,
};

pub fn dispatch(command: Command, argv: &[String]) -> Result<()> {
    match command {
        Command::MakeField(a) => make_field(a, argv),
        Command::Transport(a) => run_transport(a, argv),
        Command::Euler(a) => run_euler(a, argv),
        Command::Decompose(a) => decompose(a, argv),
        Command::SelectVelocity(a) => select_velocity(a, argv),
        Command::Mix(a) => mix(a, argv),
        Command::Transfer(a) => transfer(a, argv),
        Command::Rescale(a) => rescale(a, argv),
        Command::Diagnose(a) => diagnose(a, argv),
        Command::ExportPgm(a) => export_pgm(a, argv),
    }
}

fn file_record(out: &Path, argv: &[String]) -> Result<()> {
    let dir = outputs::parent_dir(out).map(Path::to_path_buf);
    let dir = match dir {
        Ok(d) => d,
        Err(_) => std::path::PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir)?;
    let name = format!(
        "{}.run.txt",
        out.file_name().map(|s| s.to_string_lossy()).unwrap_or_default()
    );
    let mut lines = vec![format!("mixflow {}", env!("CARGO_PKG_VERSION")), argv.join(" ")];
    outputs::report(&dir, &name, &mut lines.drain(..).collect::<Vec<_>>())
}

fn make_field(a: MakeFieldArgs, argv: &[String]) -> Result<()> {
    let grid = a.grid.build()?;
    if a.velocity {
        let v = inputs::velocity(&a.kind, grid, a.seed, a.amplitude)?;
        io::write_vector_field(&a.out, &v, 0.0, &a.name)?;
    } else {
        let rho = inputs::density(&a.kind, grid, a.seed)?;
        io::write_scalar_field(&a.out, &rho, 0.0, &a.name)?;
    }
    file_record(&a.out, argv)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

fn run_transport(a: TransportArgs, argv: &[String]) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    let grid = a.grid.build()?;
    let rho0 = inputs::density(&a.rho, grid, a.seed)?;
    let mut opts = IntegrateOptions::new(a.dt).with_stride(a.stride);
    if a.backward {
        opts.direction = Direction::Backward;
    }
    let traj = match inputs::control(&a.control, grid, a.seed, a.amplitude)? {
        ControlInput::Path(path) => transport::integrate_transport(&rho0, &path, a.horizon, &opts)?,
        ControlInput::Steady(v) => {
            let bound = v.max_speed();
            let steady = FnControl::new(&a.control, move |_g: &Grid, _t: f64| v.clone())
                .with_speed_bound(bound);
            transport::integrate_transport(&rho0, &steady, a.horizon, &opts)?
        }
    };
    io::write_density_trajectory(&a.out, &traj, "rho")?;
    let rows: Vec<Vec<f64>> = transport::trajectory_diagnostics(&traj)
        .iter()
        .map(|r| vec![r.time, r.mass, r.l2_norm, r.min, r.max, r.hneg_mixnorm])
        .collect();
    io::write_csv(
        a.out.join("diagnostics.csv"),
        "time,mass,l2_norm,min,max,hneg_mixnorm",
        &rows,
    )?;
    outputs::run_record(&a.out, argv)?;
    let first = rows.first().expect("nonempty");
    let last = rows.last().expect("nonempty");
    println!(
        "transport: {} snapshots, mass drift {:.3e}, l2 drift {:.3e}",
        traj.len(),
        (last[1] - first[1]).abs() / first[1].abs().max(1e-300),
        (last[2] - first[2]).abs() / first[2].abs().max(1e-300),
    );
    Ok(())
}

fn run_euler(a: EulerArgs, argv: &[String]) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    let grid = a.grid.build()?;
    let v0 = inputs::velocity(&a.init, grid, a.seed, a.amplitude)?;
    let traj = euler::integrate_euler(
        &v0,
        a.horizon,
        &euler::EulerOptions::new(a.dt).with_stride(a.stride),
    )?;
    io::write_velocity_trajectory(&a.out, &traj)?;
    let rows: Vec<Vec<f64>> = euler::energy_series(&traj)
        .iter()
        .map(|r| vec![r.time, r.energy, r.enstrophy, r.omega_min, r.omega_max])
        .collect();
    io::write_csv(
        a.out.join("energy.csv"),
        "time,energy,enstrophy,omega_min,omega_max",
        &rows,
    )?;
    if traj.len() >= 3 {
        let res: Vec<Vec<f64>> = euler::euler_residual(&traj)?
            .iter()
            .map(|(t, r)| vec![*t, *r])
            .collect();
        io::write_csv(a.out.join("residual.csv"), "time,euler_residual", &res)?;
    }
    outputs::run_record(&a.out, argv)?;
    let e0 = rows.first().expect("nonempty")[1];
    let e1 = rows.last().expect("nonempty")[1];
    println!(
        "euler: {} snapshots, relative energy drift {:.3e}",
        traj.len(),
        (e1 - e0).abs() / e0.abs().max(1e-300)
    );
    Ok(())
}

fn decompose(a: DecomposeArgs, argv: &[String]) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    let grid = a.grid.build()?;
    let v = inputs::velocity(&a.v, grid, a.seed, a.amplitude)?;
    let mu = inputs::density(&a.mu, grid, a.seed + 1)?;
    let dec = helmholtz::weighted_helmholtz_decompose(&v, &mu, a.tol)?;
    io::write_vector_field(a.out.join("v_p.fld"), &dec.v_p, 0.0, "v_p")?;
    io::write_vector_field(a.out.join("v_r.fld"), &dec.v_r, 0.0, "v_r")?;
    io::write_scalar_field(a.out.join("xi.fld"), &dec.xi, 0.0, "xi")?;
    let ortho = dec.v_p.inner_l2(&dec.v_r)?;
    let wdiv = spectral::divergence(&dec.v_r.weighted_by(&mu)).l2_norm();
    outputs::report(
        &a.out,
        "report.txt",
        &[
            format!("solver_residual={}", dec.residual),
            format!("orthogonality={ortho}"),
            format!("weighted_divergence={wdiv}"),
            format!("potential_norm={}", dec.v_p.l2_norm()),
            format!("rotational_norm={}", dec.v_r.l2_norm()),
        ],
    )?;
    outputs::run_record(&a.out, argv)?;
    println!(
        "decompose: residual {:.3e}, orthogonality {:.3e}",
        dec.residual, ortho
    );
    Ok(())
}

fn select_velocity(a: SelectVelocityArgs, argv: &[String]) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    let grid = a.grid.build()?;
    let rho = inputs::density(&a.rho, grid, a.seed)?;
    let norm = NormKind::parse(&a.norm)?;
    let tau = match (&a.tau, &a.tau_from_velocity) {
        (Some(path), None) => io::read_scalar_field(path)?.0,
        (None, Some(spec)) => {
            let v = inputs::velocity(spec, grid, a.seed + 1, a.amplitude)?;
            transport::continuity_rhs(&rho, &v)?
        }
        _ => {
            return Err(Error::Config(
                "pass exactly one of --tau or --tau-from-velocity".into(),
            ))
        }
    };
    let opts = SelectOptions {
        tol: a.tol,
        ..SelectOptions::default()
    };
    let sel = metrics::select_velocity(&rho, &tau, norm, &opts)?;
    io::write_vector_field(a.out.join("v.fld"), &sel.v, 0.0, "v")?;
    io::write_scalar_field(a.out.join("lambda.fld"), &sel.lambda, 0.0, "lambda")?;
    io::write_scalar_field(a.out.join("gamma.fld"), &sel.gamma, 0.0, "gamma")?;
    let norm_value = metrics::control_norm(&sel.v, norm);
    outputs::report(
        &a.out,
        "report.txt",
        &[
            format!("norm={}", a.norm),
            format!("control_norm={norm_value}"),
            format!("continuity_residual={}", sel.continuity_residual),
            format!("divergence_residual={}", sel.divergence_residual),
            format!("stationarity_residual={}", sel.stationarity_residual),
            format!("iterations={}", sel.iterations),
        ],
    )?;
    outputs::run_record(&a.out, argv)?;
    println!(
        "select-velocity: |Kv| = {norm_value}, continuity residual {:.3e}",
        sel.continuity_residual
    );
    Ok(())
}

fn build_target(
    rho_i: &ScalarField,
    rho_star: &Option<String>,
    match_mass: bool,
    grid: Grid,
    seed: u64,
) -> Result<ScalarField> {
    let mut target = match rho_star {
        Some(spec) => inputs::density(spec, grid, seed)?,
        None => presets::uniform_matching_mass(rho_i),
    };
    if match_mass {
        let m = target.mass();
        if m.abs() < 1e-300 {
            return Err(Error::Config("target mass is zero; cannot rescale".into()));
        }
        target.scale(rho_i.mass() / m);
    }
    Ok(target)
}

fn write_solution(
    dir: &Path,
    result: &OptimizerResult,
    report: &GeodesicReport,
    extra: Vec<String>,
) -> Result<()> {
    io::write_control_path(dir.join("control"), &result.control)?;
    io::write_density_trajectory(dir.join("density"), &result.density_trajectory, "rho")?;
    io::write_density_trajectory(dir.join("costate"), &result.costate_trajectory, "lambda")?;
    let log: Vec<Vec<f64>> = result
        .history
        .iter()
        .map(|r| vec![r.iter as f64, r.total, r.effort, r.penalty, r.grad_norm, r.step])
        .collect();
    io::write_csv(dir.join("log.csv"), "iter,J,effort,penalty,grad_norm,step", &log)?;

    let times = result.control.node_times();
    let diag: Vec<Vec<f64>> = (0..result.control.node_count())
        .map(|n| vec![n as f64, times[n], report.speeds[n], report.stationarity[n]])
        .collect();
    io::write_csv(
        dir.join("diagnostics.csv"),
        "node,time,speed,stationarity",
        &diag,
    )?;
    if let Some(series) = &report.euler_residual {
        let rows: Vec<Vec<f64>> = series.iter().map(|(t, r)| vec![*t, *r]).collect();
        io::write_csv(dir.join("euler_residual.csv"), "time,euler_residual", &rows)?;
    }

    let mut lines = vec![
        format!("status={}", result.status.name()),
        format!("iterations={}", result.history.last().expect("nonempty").iter),
        format!("J={}", result.cost.total),
        format!("effort={}", result.cost.effort),
        format!("penalty={}", result.cost.penalty),
        format!("grad_norm={}", result.grad_norm),
        format!("speed_cv={}", report.speed_cv),
    ];
    if let Some(max) = report.max_euler_residual {
        lines.push(format!("max_euler_residual={max}"));
    }
    lines.extend(extra);
    outputs::report(dir, "summary.txt", &lines)
}

fn mix(a: MixArgs, argv: &[String]) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    let grid = a.grid.build()?;
    let rho_i = inputs::density(&a.rho_i, grid, a.seed)?;
    let rho_star = build_target(&rho_i, &a.rho_star, a.match_mass, grid, a.seed + 1)?;
    let norm = NormKind::parse(&a.norm)?;
    let metric = MetricKind::parse(&a.metric)?;
    let spec = MixingProblemSpec::new(
        rho_i, rho_star, a.alpha, a.horizon, a.nt, norm, metric, a.dt,
    )?;
    let opts = OptimizeOptions {
        max_iters: a.max_iters,
        grad_tol: a.grad_tol,
        ..OptimizeOptions::default()
    };
    let result = opt::optimize_mixing(&spec, &opts)?;
    let report = opt::geodesic_diagnostics(&result, norm)?;
    let d0 = metrics::mix_distance(&spec.rho_initial, &spec.rho_target, metric)?;
    let d1 = metrics::mix_distance(&result.cost.rho_final, &spec.rho_target, metric)?;
    write_solution(
        &a.out,
        &result,
        &report,
        vec![
            format!("initial_distance={d0}"),
            format!("final_distance={d1}"),
        ],
    )?;
    outputs::run_record(&a.out, argv)?;
    println!(
        "mix: {} -> J = {}, distance {d0} -> {d1}",
        result.status.name(),
        result.cost.total
    );
    Ok(())
}

fn transfer(a: TransferArgs, argv: &[String]) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    let grid = a.grid.build()?;
    let rho_i = inputs::density(&a.rho_i, grid, a.seed)?;
    let rho_f = inputs::density(&a.rho_f, grid, a.seed + 1)?;
    let norm = NormKind::parse(&a.norm)?;
    let metric = MetricKind::parse(&a.metric)?;
    let opts = TransferOptions {
        alpha0: a.alpha0,
        stages: a.stages,
        gap_tol: a.gap_tol,
        reach_tol: a.reach_tol,
        force: a.force,
        inner: OptimizeOptions {
            max_iters: a.max_iters,
            grad_tol: a.grad_tol,
            ..OptimizeOptions::default()
        },
        ..TransferOptions::default()
    };
    let est = opt::transfer_continuation(&rho_i, &rho_f, a.nt, a.dt, norm, metric, &opts)?;
    let report = opt::geodesic_diagnostics(&est.result, norm)?;
    let stages: Vec<Vec<f64>> = est
        .history
        .iter()
        .map(|s| vec![s.alpha, s.cost, s.effort, s.gap])
        .collect();
    io::write_csv(a.out.join("continuation.csv"), "alpha,cost,effort,gap", &stages)?;
    write_solution(
        &a.out,
        &est.result,
        &report,
        vec![
            format!("m_upper={}", est.m_upper),
            format!("endpoint_gap={}", est.endpoint_gap),
            format!("feasible_within_tol={}", est.feasible_within_tol),
        ],
    )?;
    outputs::run_record(&a.out, argv)?;
    println!(
        "transfer: m_upper = {}, endpoint gap = {}, feasible = {}",
        est.m_upper, est.endpoint_gap, est.feasible_within_tol
    );
    Ok(())
}

fn rescale(a: RescaleArgs, argv: &[String]) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    let control = io::read_control_path(&a.control)?;
    let norm = NormKind::parse(&a.norm)?;
    let before = control.effort(norm);
    let rescaled = rescale_control(
        &control,
        &TimeRescale::Linear {
            new_horizon: a.new_horizon,
        },
    )?;
    let after = rescaled.effort(norm);
    io::write_control_path(&a.out, &rescaled)?;
    outputs::report(
        &a.out,
        "summary.txt",
        &[
            format!("old_horizon={}", control.horizon()),
            format!("new_horizon={}", rescaled.horizon()),
            format!("effort_before={before}"),
            format!("effort_after={after}"),
        ],
    )?;
    outputs::run_record(&a.out, argv)?;
    println!("rescale: effort {before} -> {after}");
    Ok(())
}

fn diagnose(a: DiagnoseArgs, argv: &[String]) -> Result<()> {
    std::fs::create_dir_all(&a.out)?;
    let grid = a.grid.build()?;
    let control = io::read_control_path(&a.control)?;
    let rho_i = inputs::density(&a.rho_i, grid, a.seed)?;
    let rho_star = build_target(&rho_i, &a.rho_star, false, grid, a.seed + 1)?;
    let norm = NormKind::parse(&a.norm)?;
    let metric = MetricKind::parse(&a.metric)?;
    let spec = MixingProblemSpec::new(
        rho_i,
        rho_star,
        a.alpha,
        control.horizon(),
        control.intervals(),
        norm,
        metric,
        a.dt,
    )?;
    let result = opt::evaluate_control(&spec, control)?;
    let report = opt::geodesic_diagnostics(&result, norm)?;
    write_solution(&a.out, &result, &report, vec![])?;
    outputs::run_record(&a.out, argv)?;
    println!(
        "diagnose: speed_cv = {}, max stationarity = {:.3e}",
        report.speed_cv,
        report.stationarity.iter().fold(0.0f64, |m, s| m.max(*s))
    );
    Ok(())
}

fn export_pgm(a: ExportPgmArgs, argv: &[String]) -> Result<()> {
    let (field, _meta) = io::read_field(&a.field)?;
    let scalar = match field {
        io::AnyField::Scalar(f) => f,
        io::AnyField::Vector(v) => match a.component.as_str() {
            "x" => v.x().clone(),
            "y" => v.y().clone(),
            "magnitude" => {
                let values = v
                    .x()
                    .values()
                    .iter()
                    .zip(v.y().values())
                    .map(|(a, b)| (a * a + b * b).sqrt())
                    .collect();
                ScalarField::from_values(*v.grid(), values)?
            }
            other => {
                return Err(Error::Config(format!(
                    "unknown component '{other}' (expected x, y, magnitude)"
                )))
            }
        },
    };
    outputs::export_pgm(&a.out, &scalar)?;
    file_record(&a.out, argv)?;
    println!("wrote {}", a.out.display());
    Ok(())
}
