//! Command-line driver: `faultscope <command> --config <file> [--set key=value ...] --out <dir>`.
//!
//! Every command writes into a temporary sibling of `--out` and renames it
//! into place on success, so a failed run leaves no partial output.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, ValueEnum};
use serde_json::json;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::geometry::{FaultSegment, Point2};
use crate::gradcheck::{gradcheck, write_csv, GradcheckOptions};
use crate::recon::{overlay_svg, run};
use crate::synthetic::{add_noise, make_measurement, Measurement};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_GATE: i32 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Synthetic measurements from the configured true fault.
    Synth,
    /// One forward solve and its boundary trace.
    Forward,
    /// Steepest-descent reconstruction of the fault endpoints.
    Reconstruct,
    /// Finite-difference check of the vertex shape derivatives.
    Gradcheck,
}

#[derive(Debug, Parser)]
#[command(name = "faultscope", version, about = "Fault reconstruction from surface displacements")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Dotted override, e.g. `inversion.alpha=2e-6`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory, replaced on success.
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. }
        | Error::UnknownKey(_)
        | Error::Io { .. }
        | Error::FaultOutsideAdmissibleRegion { .. }
        | Error::DegenerateFault { .. }
        | Error::InvalidElasticity(_)
        | Error::LayoutMismatch(_)
        | Error::BoundaryVertex(_) => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

/// Sets the dense and sparse kernels to run on `FAULTSCOPE_THREADS` threads,
/// serially when unset.
pub fn configure_threads() {
    let n = std::env::var("FAULTSCOPE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()).unwrap_or(1);
    faer::set_global_parallelism(if n <= 1 { faer::Par::Seq } else { faer::Par::rayon(n) });
}

/// Parses the command line, runs the command and returns the exit code.
pub fn main_with_args(args: impl IntoIterator<Item = String>) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    configure_threads();
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("faultscope: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one command; `Ok` carries the exit code of a completed run.
pub fn execute(cli: &Cli) -> Result<i32> {
    let cfg = RunConfig::load(&cli.config, &cli.set)?;
    let staging = Staging::new(&cli.out)?;
    let result = match cli.command {
        Command::Synth => synth(&cfg, staging.path()),
        Command::Forward => forward(&cfg, staging.path()),
        Command::Reconstruct => reconstruct(&cfg, staging.path()),
        Command::Gradcheck => check_gradient(&cfg, staging.path()),
    };
    match result {
        Ok(code) => {
            write(&staging.path().join("resolved_config.json"), &to_json(&cfg))?;
            staging.commit()?;
            Ok(code)
        }
        Err(e) => Err(e),
    }
}

/// A temporary output directory renamed into place by `commit`.
struct Staging {
    tmp: PathBuf,
    out: PathBuf,
    done: bool,
}

impl Staging {
    fn new(out: &Path) -> Result<Self> {
        let name = out.file_name().ok_or_else(|| Error::config("--out", "output path has no final component"))?;
        let parent = match out.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
        let tmp = parent.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(|e| Error::io(&tmp, e))?;
        }
        fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;
        Ok(Staging { tmp, out: out.to_path_buf(), done: false })
    }

    fn path(&self) -> &Path {
        &self.tmp
    }

    fn commit(mut self) -> Result<()> {
        if self.out.exists() {
            fs::remove_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        }
        fs::rename(&self.tmp, &self.out).map_err(|e| Error::io(&self.out, e))?;
        self.done = true;
        Ok(())
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        if !self.done {
            let _ = fs::remove_dir_all(&self.tmp);
        }
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Noisy measurements of the configured true fault, one per slip.
pub fn synthesize(cfg: &RunConfig) -> Result<Vec<Measurement>> {
    let model = cfg.model()?.with_h(cfg.data.h_data);
    let truth = cfg.fault()?;
    cfg.slips()
        .into_iter()
        .enumerate()
        .map(|(i, slip)| {
            let fault = FaultSegment::new(truth.p0, truth.p1, slip);
            let clean = make_measurement(&model, &fault, cfg.data.acquisition)?;
            Ok(add_noise(&clean, cfg.data.a, cfg.data.seed + i as u64))
        })
        .collect()
}

/// Measurements from `data.measurements`, or synthesized when none are listed.
pub fn load_measurements(cfg: &RunConfig) -> Result<Vec<Measurement>> {
    if cfg.data.measurements.is_empty() {
        return synthesize(cfg);
    }
    cfg.data.measurements.iter().map(|p| Measurement::read(p)).collect()
}

fn synth(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    for (i, m) in synthesize(cfg)?.iter().enumerate() {
        write(&dir.join(format!("measurement_{i}.csv")), &m.to_csv())?;
        write(&dir.join(format!("measurement_{i}.json")), &to_json(&m.sidecar()))?;
        println!("measurement {i}: {} nodes, noise level {:.4}%", m.nodes.len(), 100.0 * m.meta.noise_level);
    }
    Ok(EXIT_OK)
}

fn forward(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let model = cfg.model()?;
    let fault = cfg.fault()?;
    let trace = make_measurement(&model, &fault, cfg.data.acquisition)?;
    let mesh = model.build_mesh(&fault)?;
    let mut text = Vec::new();
    mesh.fine.write_text(&mut text).map_err(|e| Error::io(&dir.join("mesh.txt"), e))?;
    write(&dir.join("mesh.txt"), &String::from_utf8_lossy(&text))?;
    write(&dir.join("trace.csv"), &trace.to_csv())?;
    write(&dir.join("trace.json"), &to_json(&trace.sidecar()))?;
    let summary = json!({
        "triangles": mesh.fine.n_triangles(),
        "dofs": 2 * (model.degree + 1) * (model.degree + 2) / 2 * mesh.fine.n_triangles(),
        "min_angle_deg": mesh.fine.min_angle_deg(),
        "max_abs_trace": trace.values.iter().map(|v| v.x.abs().max(v.y.abs())).fold(0.0, f64::max),
    });
    write(&dir.join("forward.json"), &to_json(&summary))?;
    println!("forward: {} triangles", mesh.fine.n_triangles());
    Ok(EXIT_OK)
}

fn reconstruct(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let model = cfg.model()?;
    let recon = cfg.inversion.recon();
    recon.validate()?;
    let measurements = load_measurements(cfg)?;
    let initial = cfg.initial_fault(measurements[0].slip.clone())?;
    let truth = measurements[0].meta.true_fault.map(|[a, b]| {
        initial.with_vertices(Point2::new(a[0], a[1]), Point2::new(b[0], b[1]))
    });
    let start = Instant::now();
    let report = run(&model, &initial, &measurements, &recon, truth.as_ref(), |_| {})?;
    let seconds = start.elapsed().as_secs_f64();
    write(&dir.join("report.json"), &to_json(&report))?;
    write(&dir.join("timing.json"), &to_json(&json!({ "seconds": seconds })))?;
    write(&dir.join("overlay.svg"), &overlay_svg(&report, measurements[0].acquisition))?;
    println!(
        "reconstruct: {:?} after {} iterations, misfit {:.4e} -> {:.4e}",
        report.termination, report.iterations, report.misfit_initial, report.misfit_final
    );
    Ok(EXIT_OK)
}

fn check_gradient(cfg: &RunConfig, dir: &Path) -> Result<i32> {
    let model = cfg.model()?;
    let measurements = load_measurements(cfg)?;
    let slip = measurements[0].slip.clone();
    let at = match cfg.inversion.initial_vertices {
        Some(_) => cfg.initial_fault(slip)?,
        None => {
            let f = cfg.fault()?;
            FaultSegment::new(f.p0, f.p1, slip)
        }
    };
    let g = &cfg.gradcheck;
    let opts = GradcheckOptions { eps: g.eps, tol: g.tol, floor: g.floor, negate: g.negate };
    let rows = gradcheck(&model, &at, &measurements, &g.formulas, &opts)?;
    let mut text = Vec::new();
    write_csv(&rows, &mut text).map_err(|e| Error::io(&dir.join("gradcheck.csv"), e))?;
    write(&dir.join("gradcheck.csv"), &String::from_utf8_lossy(&text))?;
    let failed = rows.iter().filter(|r| !r.passed()).count();
    println!("gradcheck: {} rows, {failed} failed", rows.len());
    Ok(if failed == 0 { EXIT_OK } else { EXIT_GATE })
}
