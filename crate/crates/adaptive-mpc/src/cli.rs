//! Command front end: run orchestration, CSV emission, and diagnostics
//! reporting for the `simulate`, `sweep`, and `diagnose` subcommands.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::analysis::{run_sweep, tracking_error, CellOutcome, SweepGrid};
use crate::closed_loop::{bootstrap, run_closed_loop, ClosedLoopTrace, LoopError, RunStatus};
use crate::config::RunConfig;
use crate::sysid::{assumption_report, identify, pe_metric, AssumptionThresholds};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_ABORTED: i32 = 2;

/// Command-line overrides applied on top of the configuration file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub lambdas: Option<Vec<f64>>,
    pub windows: Option<Vec<usize>>,
}

fn load_config(path: Option<&Path>, ov: &Overrides) -> Result<RunConfig, String> {
    let text = match path {
        Some(p) => fs::read_to_string(p).map_err(|e| format!("cannot read {}: {e}", p.display()))?,
        None => String::new(),
    };
    let mut cfg = RunConfig::parse(&text).map_err(|e| e.to_string())?;
    if let Some(out) = &ov.out {
        cfg.out = Some(out.clone());
    }
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(workers) = ov.workers {
        cfg.workers = workers;
    }
    if let Some(lambdas) = &ov.lambdas {
        cfg.sweep.lambdas = lambdas.clone();
    }
    if let Some(windows) = &ov.windows {
        cfg.sweep.windows = windows.clone();
    }
    cfg.validate().map_err(|e| e.to_string())?;
    Ok(cfg)
}

/// Formats a float with full round-trip precision, locale independent.
fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn csv_token(s: &str) -> String {
    s.replace(',', ";")
}

/// Writes the closed-loop trace as CSV. Solve-instant columns are empty on
/// rows without a solve record.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &ClosedLoopTrace) -> io::Result<()> {
    let (n, m, p) = match trace.rows.first() {
        Some(row) => (row.state.len(), row.input.len(), row.output.len()),
        None => (0, 0, 0),
    };
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((1..=n).map(|i| format!("x{i}")));
    header.extend((1..=m).map(|i| format!("u{i}")));
    header.extend((1..=p).map(|i| format!("y{i}")));
    if p == 1 {
        header.push("y_ref".into());
    } else {
        header.extend((1..=p).map(|i| format!("y_ref{i}")));
    }
    header.extend(
        ["J_star", "J_hat_star", "V", "sigma_min_Z", "id_error", "status", "frozen"]
            .map(String::from),
    );
    writeln!(w, "{}", header.join(","))?;

    for row in &trace.rows {
        let mut fields: Vec<String> = vec![row.t.to_string()];
        fields.extend(row.state.iter().map(|v| fmt_f64(*v)));
        fields.extend(row.input.iter().map(|v| fmt_f64(*v)));
        fields.extend(row.output.iter().map(|v| fmt_f64(*v)));
        fields.extend(trace.y_ref.iter().map(|v| fmt_f64(*v)));
        match &row.solve {
            Some(rec) => {
                fields.push(fmt_f64(rec.j_star));
                fields.push(fmt_f64(rec.j_hat_star));
                fields.push(fmt_f64(rec.lyapunov));
                fields.push(fmt_f64(rec.sigma_min_z));
                fields.push(fmt_f64(rec.id_error));
                fields.push(rec.status.to_string());
                fields.push(rec.frozen.to_string());
            }
            None => fields.extend(std::iter::repeat(String::new()).take(7)),
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Writes the sweep grid as a CSV matrix: rows are window lengths, columns
/// are regularization values, each cell is a tracking error or a status
/// token.
pub fn write_sweep_csv<W: Write>(mut w: W, grid: &SweepGrid) -> io::Result<()> {
    let mut header: Vec<String> = vec!["N\\lambda".into()];
    header.extend(grid.lambdas.iter().map(|l| fmt_f64(*l)));
    writeln!(w, "{}", header.join(","))?;
    for (wi, window) in grid.windows.iter().enumerate() {
        let mut fields = vec![window.to_string()];
        for li in 0..grid.lambdas.len() {
            let cell = grid.cell(wi, li);
            fields.push(match &cell.outcome {
                CellOutcome::Converged { tracking_error, .. } => fmt_f64(*tracking_error),
                CellOutcome::Failed { status } => csv_token(status),
            });
        }
        writeln!(w, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Runs one closed loop and writes the trace CSV.
///
/// Exit codes: 0 on a completed run, 2 when the run aborted (the partial
/// trace is still written), 1 on configuration errors.
pub fn cmd_simulate(config: Option<&Path>, ov: &Overrides) -> i32 {
    let cfg = match load_config(config, ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let plant = match cfg.build_plant() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let strategy = cfg.bootstrap_strategy();
    let trace = match run_closed_loop(plant.as_ref(), &cfg.x0, &cfg.mpc, &strategy, cfg.t_end) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("run failed: {e}");
            return EXIT_ABORTED;
        }
    };
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("trace.csv"));
    match fs::File::create(&out).and_then(|f| write_trace_csv(io::BufWriter::new(f), &trace)) {
        Ok(()) => println!("trace: {} rows -> {}", trace.rows.len(), out.display()),
        Err(e) => {
            eprintln!("cannot write {}: {e}", out.display());
            return EXIT_ABORTED;
        }
    }
    match trace.status {
        RunStatus::Completed => {
            match tracking_error(&trace, &cfg.mpc.y_ref, cfg.t_end) {
                Ok(err) => println!("tracking_error = {}", fmt_f64(err)),
                Err(e) => eprintln!("tracking error unavailable: {e}"),
            }
            let deviation = (&trace.rows[cfg.t_end].output - &cfg.mpc.y_ref).norm();
            println!("final_deviation = {}", fmt_f64(deviation));
            EXIT_OK
        }
        status => {
            eprintln!("run aborted: {status}");
            EXIT_ABORTED
        }
    }
}

/// Runs the λ×N sweep grid and writes the matrix CSV. Exit code 0 when at
/// least one cell converged.
pub fn cmd_sweep(config: Option<&Path>, ov: &Overrides) -> i32 {
    let cfg = match load_config(config, ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let plant = match cfg.build_plant() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let strategy = cfg.bootstrap_strategy();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot build worker pool: {e}");
            return EXIT_CONFIG;
        }
    };
    let grid = pool.install(|| {
        run_sweep(
            plant.as_ref(),
            &cfg.x0,
            &cfg.mpc,
            &strategy,
            cfg.t_end,
            &cfg.sweep,
            cfg.seed,
        )
    });
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("sweep.csv"));
    match fs::File::create(&out).and_then(|f| write_sweep_csv(io::BufWriter::new(f), &grid)) {
        Ok(()) => println!(
            "sweep: {} of {} cells converged -> {}",
            grid.converged_count(),
            grid.cells.len(),
            out.display()
        ),
        Err(e) => {
            eprintln!("cannot write {}: {e}", out.display());
            return EXIT_ABORTED;
        }
    }
    if grid.converged_count() > 0 {
        EXIT_OK
    } else {
        eprintln!("no sweep cell converged");
        EXIT_ABORTED
    }
}

/// Bootstraps once, identifies once, and prints the assumption diagnostics
/// and the excitation metric. Exit code 0 whenever the diagnostics complete,
/// including the rank-deficient-bootstrap case, which is reported rather
/// than treated as a failure.
pub fn cmd_diagnose(config: Option<&Path>, ov: &Overrides) -> i32 {
    let cfg = match load_config(config, ov) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let plant = match cfg.build_plant() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let strategy = cfg.bootstrap_strategy();
    let window = match bootstrap(plant.as_ref(), &cfg.x0, &cfg.mpc, &strategy) {
        Ok(w) => w,
        Err(LoopError::RankDeficientBootstrap { sigma_min }) => {
            println!("pe_sigma_min_Z = {}", fmt_f64(sigma_min));
            println!("pe_rank: FAIL (regressor rank deficient; identification would be ill posed)");
            return EXIT_OK;
        }
        Err(e) => {
            eprintln!("bootstrap failed: {e}");
            return EXIT_ABORTED;
        }
    };
    let sigma_z = match pe_metric(&window) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("pe metric failed: {e}");
            return EXIT_ABORTED;
        }
    };
    let model = match identify(&window, cfg.mpc.lambda) {
        Ok(m) => m,
        Err(e) => {
            println!("pe_sigma_min_Z = {}", fmt_f64(sigma_z));
            println!("identification: FAIL ({e})");
            return EXIT_OK;
        }
    };
    let report = assumption_report(&model, &AssumptionThresholds::default());
    let flag = |ok: bool| if ok { "ok" } else { "FAIL" };
    println!("pe_sigma_min_Z = {}", fmt_f64(sigma_z));
    println!(
        "sigma_rank = {} [{}]",
        fmt_f64(report.sigma_rank),
        flag(report.rank_ok)
    );
    println!(
        "sigma_controllability = {} [{}]",
        fmt_f64(report.sigma_controllability),
        flag(report.controllability_ok)
    );
    println!(
        "sigma_steady_map = {} [{}]",
        fmt_f64(report.sigma_steady_map),
        flag(report.steady_map_ok)
    );
    let x_head: DVector<f64> = window
        .head_state()
        .expect("full window has a head state")
        .clone();
    match crate::analysis::id_error_diagnostic(&model, plant.as_ref(), &x_head) {
        Ok(err) => println!("id_error_vs_linearization = {}", fmt_f64(err)),
        Err(e) => println!("id_error_vs_linearization unavailable: {e}"),
    }
    EXIT_OK
}
