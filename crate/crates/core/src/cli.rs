//! Command-line front end of the `kb` binary.
//!
//! Exit codes: 0 on success, 2 when the solver hits `max_iter` before
//! converging, 1 on usage, format and domain errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::cone::spherical_distance;
use crate::error::{KbError, Result};
use crate::flows::{flow_evolve, stability_cap, Functional};
use crate::io::{
    load_measure, load_raw, save_measure, to_json, write_json, DistanceReport, FlowReport,
    FrameEntry, GeodesicIndex, RunConfig, SphericalReport, ValidateReport,
};
use crate::measure::{synth_measure, Generator, MatrixMeasure};
use crate::solver::{sample_path, solve, Mode, SolverConfig};
use crate::GridSpec;

#[derive(Debug, Parser)]
#[command(
    name = "kb",
    version,
    about = "Transport distances, geodesics and gradient flows of matrix measures"
)]
pub struct Cli {
    #[command(flatten)]
    pub solver: SolverFlags,
    /// Directory for reports and frames.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct SolverFlags {
    /// Number of time intervals.
    #[arg(long, global = true)]
    pub nt: Option<usize>,
    #[arg(long, global = true)]
    pub max_iter: Option<usize>,
    /// Stopping tolerance on the relative gap.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub tau: Option<f64>,
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Kb,
    Hellinger,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FunctionalArg {
    Entropy,
    Volume,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Distance between two measure files (`--b zero` for the zero measure).
    Distance {
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<String>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
    },
    /// Spherical distance between the unit-mass normalizations.
    Spherical {
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<String>,
    },
    /// Solve and write `frames` equally spaced slices of the geodesic.
    Geodesic {
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long)]
        b: Option<String>,
        #[arg(long, default_value_t = 5)]
        frames: usize,
    },
    /// Explicit gradient flow of the entropy or volume functional.
    Flow {
        #[arg(long)]
        a: Option<PathBuf>,
        #[arg(long, value_enum)]
        functional: FunctionalArg,
        /// Time step; defaults to the stability cap.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long, default_value_t = 100)]
        steps: usize,
        #[arg(long, default_value_t = 2)]
        frames: usize,
    },
    /// Check that a file decodes and every cell is positive semidefinite.
    Validate {
        #[arg(long)]
        a: Option<PathBuf>,
    },
    /// Write a fixture measure.
    Synth {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        n: usize,
        /// Generator as JSON, e.g. `{"kind":"smooth","floor":0.5,"amplitude":1}`.
        #[arg(long)]
        generator: String,
        /// Rescale to this total mass.
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
}

struct Context {
    run: RunConfig,
    solver: SolverConfig,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self> {
        let mut run = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let f = &cli.solver;
        let s = &mut run.solver;
        if let Some(v) = f.nt {
            s.nt = v;
        }
        if let Some(v) = f.max_iter {
            s.max_iter = v;
        }
        if let Some(v) = f.tol {
            s.tol_residual = v;
        }
        if f.tau.is_some() {
            s.tau = f.tau;
        }
        if f.sigma.is_some() {
            s.sigma = f.sigma;
        }
        if let Some(v) = f.seed {
            s.seed = v;
        }
        if cli.output.is_some() {
            run.output = cli.output.clone();
        }
        s.validate()?;
        let solver = run.solver;
        Ok(Context { run, solver })
    }

    fn path_a(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        flag.clone()
            .or_else(|| self.run.a.clone())
            .ok_or_else(|| KbError::Input("missing --a".into()))
    }

    fn name_b(&self, flag: &Option<String>) -> Result<String> {
        flag.clone()
            .or_else(|| self.run.b.clone())
            .ok_or_else(|| KbError::Input("missing --b".into()))
    }

    fn output_dir(&self) -> Result<Option<PathBuf>> {
        if let Some(dir) = &self.run.output {
            std::fs::create_dir_all(dir)?;
        }
        Ok(self.run.output.clone())
    }
}

fn load_pair(a: &Path, b: &str) -> Result<(MatrixMeasure, MatrixMeasure)> {
    let ga = load_measure(a)?;
    let gb = if b == "zero" {
        MatrixMeasure::zeros(*ga.grid(), ga.size())
    } else {
        load_measure(b)?
    };
    Ok((ga, gb))
}

fn exit_for(converged: bool) -> i32 {
    if converged {
        0
    } else {
        2
    }
}

fn emit<T: serde::Serialize>(
    out: &mut dyn Write,
    report: &T,
    dir: Option<&Path>,
    name: &str,
) -> Result<()> {
    writeln!(out, "{}", to_json(report)?)?;
    if let Some(dir) = dir {
        write_json(report, dir.join(name))?;
    }
    Ok(())
}

fn frame_name(i: usize) -> String {
    format!("frame_{i:03}.kbm")
}

fn dispatch(cli: &Cli, out: &mut dyn Write) -> Result<i32> {
    let ctx = Context::new(cli)?;
    match &cli.command {
        Command::Distance { a, b, mode } => {
            let (pa, nb) = (ctx.path_a(a)?, ctx.name_b(b)?);
            let mut cfg = ctx.solver;
            if let Some(m) = mode {
                cfg.mode = match m {
                    ModeArg::Kb => Mode::Kb,
                    ModeArg::Hellinger => Mode::Hellinger,
                };
            }
            let (ga, gb) = load_pair(&pa, &nb)?;
            let (rep, _) = solve(&ga, &gb, &cfg)?;
            let report = DistanceReport::new(
                &pa.display().to_string(),
                &nb,
                (ga.total_mass(), gb.total_mass()),
                &rep,
                &cfg,
            );
            emit(out, &report, ctx.output_dir()?.as_deref(), "report.json")?;
            Ok(exit_for(rep.converged))
        }
        Command::Spherical { a, b } => {
            let (pa, nb) = (ctx.path_a(a)?, ctx.name_b(b)?);
            let (ga, gb) = load_pair(&pa, &nb)?;
            let (sd, rep) = spherical_distance(&ga, &gb, &ctx.solver)?;
            let report = SphericalReport {
                command: "spherical",
                version: env!("CARGO_PKG_VERSION"),
                a: pa.display().to_string(),
                b: nb,
                radius_a: ga.total_mass().sqrt(),
                radius_b: gb.total_mass().sqrt(),
                spherical_distance: sd,
                unit_distance: rep.distance,
                residual: rep.residual,
                iterations: rep.iterations,
                converged: rep.converged,
                config: ctx.solver,
            };
            emit(out, &report, ctx.output_dir()?.as_deref(), "report.json")?;
            Ok(exit_for(rep.converged))
        }
        Command::Geodesic { a, b, frames } => {
            if *frames < 2 {
                return Err(KbError::Input("--frames must be at least 2".into()));
            }
            let dir = ctx
                .output_dir()?
                .ok_or_else(|| KbError::Input("geodesic needs --output DIR".into()))?;
            let (pa, nb) = (ctx.path_a(a)?, ctx.name_b(b)?);
            let (ga, gb) = load_pair(&pa, &nb)?;
            let (rep, path) = solve(&ga, &gb, &ctx.solver)?;
            let mut entries = Vec::with_capacity(*frames);
            for i in 0..*frames {
                let t = i as f64 / (*frames - 1) as f64;
                let g = sample_path(&path, t);
                save_measure(&g, dir.join(frame_name(i)))?;
                entries.push(FrameEntry {
                    index: i,
                    t,
                    file: frame_name(i),
                    mass: g.total_mass(),
                });
            }
            let index = GeodesicIndex {
                command: "geodesic",
                version: env!("CARGO_PKG_VERSION"),
                a: pa.display().to_string(),
                b: nb,
                distance: rep.distance,
                energy: rep.energy,
                residual: rep.residual,
                iterations: rep.iterations,
                converged: rep.converged,
                interval_energies: path.interval_energies().unwrap_or_default(),
                frames: entries,
                config: ctx.solver,
            };
            emit(out, &index, Some(&dir), "index.json")?;
            Ok(exit_for(rep.converged))
        }
        Command::Flow {
            a,
            functional,
            dt,
            steps,
            frames,
        } => {
            if *frames < 2 {
                return Err(KbError::Input("--frames must be at least 2".into()));
            }
            let pa = ctx.path_a(a)?;
            let g = load_measure(&pa)?;
            let f = match functional {
                FunctionalArg::Entropy => Functional::Entropy,
                FunctionalArg::Volume => Functional::Volume,
            };
            let cap = stability_cap(&g);
            let dt = dt.unwrap_or(cap);
            let stride = (*steps / (*frames - 1)).max(1);
            let traj = flow_evolve(&g, f, dt, *steps, stride)?;
            let dir = ctx.output_dir()?;
            let mut entries = Vec::with_capacity(traj.frames.len());
            for (i, (t, fr)) in traj.times.iter().zip(&traj.frames).enumerate() {
                if let Some(dir) = &dir {
                    save_measure(fr, dir.join(frame_name(i)))?;
                }
                entries.push(FrameEntry {
                    index: i,
                    t: *t,
                    file: frame_name(i),
                    mass: fr.total_mass(),
                });
            }
            let report = FlowReport {
                command: "flow",
                version: env!("CARGO_PKG_VERSION"),
                a: pa.display().to_string(),
                functional: f,
                dt,
                steps: *steps,
                stability_cap: cap,
                dissipative: traj.is_dissipative(1e-8),
                floored_steps: traj.floored.iter().filter(|&&c| c > 0).count(),
                initial_value: traj.values[0],
                final_value: *traj.values.last().unwrap(),
                frames: entries,
            };
            emit(out, &report, dir.as_deref(), "report.json")?;
            Ok(0)
        }
        Command::Validate { a } => {
            let pa = ctx.path_a(a)?;
            let raw = load_raw(&pa)?;
            let bad = raw.first_invalid_cell();
            let grid = raw.grid;
            let mass = match bad {
                None => Some(raw.into_measure()?.total_mass()),
                Some(_) => None,
            };
            let report = ValidateReport {
                command: "validate",
                version: env!("CARGO_PKG_VERSION"),
                a: pa.display().to_string(),
                valid: bad.is_none(),
                dim: grid.dim(),
                n: grid.n(),
                mass,
                first_invalid_cell: bad.map(|b| b.0),
                lambda_min: bad.map(|b| b.1),
            };
            emit(out, &report, ctx.output_dir()?.as_deref(), "report.json")?;
            match bad {
                None => Ok(0),
                Some((cell, l)) => Err(KbError::Domain {
                    msg: format!("cell {cell} is not positive semidefinite (λ_min = {l:e})"),
                    lambda_min: Some(l),
                    cell: Some(cell),
                }),
            }
        }
        Command::Synth {
            dim,
            n,
            generator,
            mass,
            out: file,
        } => {
            let gen: Generator = serde_json::from_str(generator)
                .map_err(|e| KbError::Input(format!("generator: {e}")))?;
            let mut g = synth_measure(GridSpec::new(*dim, *n)?, &gen, ctx.solver.seed)?;
            if let Some(m) = mass {
                let current = g.total_mass();
                if !m.is_finite() || *m < 0.0 || current <= 0.0 {
                    return Err(KbError::Input(
                        "cannot rescale to the requested mass".into(),
                    ));
                }
                g = g.scale_measure((m / current).sqrt());
            }
            save_measure(&g, file)?;
            writeln!(out, "{}", file.display())?;
            Ok(0)
        }
    }
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli, out) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("kb: {e}");
            1
        }
    }
}
