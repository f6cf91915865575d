use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use fabricsim_core::coordinator::EventKind;
use fabricsim_core::experiments::{
    multi_object_scenario, passing_experiment, scalability_scenario, square_experiment,
    target_experiment, PASSING_SHAPES, SEEDS,
};
use fabricsim_core::export::{
    metric_targets, metrics_to_json, read_csv, read_metrics, records_to_csv, render_svg,
    ticks_to_csv, write_atomic,
};
use fabricsim_core::runner::{all_succeeded, run_with_seed};
use fabricsim_core::scenario::GridConfig;
use fabricsim_core::{
    compute_trajectory_std, parse_scenario, ActuatorGrid, Metrics, RunLog, RunOutput, Scenario,
    SquareVariant,
};

/// Radius drawn around targets in plots, m.
const THRESHOLD: f64 = 0.03;

#[derive(Parser)]
#[command(
    name = "fabricsim",
    version,
    about = "Simulate objects carried on an actuated fabric surface"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file.
    Run {
        scenario: PathBuf,
        /// Seed of the first replica; defaults to the file's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Number of replicas, each with the next seed.
        #[arg(long)]
        repeats: Option<u32>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Run every `.toml` scenario in a directory.
    Batch {
        dir: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Summarize trajectory logs; with several logs of one scenario, also
    /// report the per-axis spread across them.
    Metrics {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Draw a trajectory log as SVG.
    Plot {
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Metrics document with the grid and targets; defaults to the JSON
        /// file next to the log.
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Run one of the built-in experiments.
    Experiments {
        which: Experiment,
        /// Seeds for the repeated experiments.
        #[arg(long, value_delimiter = ',', default_values_t = SEEDS)]
        seeds: Vec<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Experiment {
    Passing,
    Square,
    Target,
    Multi,
    Scale,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run {
            scenario,
            seed,
            repeats,
            out,
        } => run_file(&scenario, seed, repeats, &out),
        Command::Batch { dir, out } => batch(&dir, &out),
        Command::Metrics { logs } => metrics(&logs),
        Command::Plot { log, out, metrics } => plot(&log, &out, metrics.as_deref()),
        Command::Experiments { which, seeds } => experiments(which, &seeds),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_scenario(&text).with_context(|| path.display().to_string())
}

fn stem(out: &Path, s: &Scenario, seed: u64) -> PathBuf {
    out.join(format!("{}.s{seed}", s.name))
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut p = base.as_os_str().to_owned();
    p.push(".");
    p.push(ext);
    PathBuf::from(p)
}

fn write_outputs(s: &Scenario, out: &RunOutput, dir: &Path) -> Result<()> {
    let base = stem(dir, s, out.log.seed);
    if s.output.csv {
        write_atomic(&with_ext(&base, "csv"), &records_to_csv(&out.log.records)?)?;
        write_atomic(
            &with_ext(&base, "ticks.csv"),
            &ticks_to_csv(&out.log.ticks)?,
        )?;
    }
    if s.output.json {
        write_atomic(
            &with_ext(&base, "json"),
            metrics_to_json(&out.metrics)?.as_bytes(),
        )?;
        let events = serde_json::to_string_pretty(&out.log.events)? + "\n";
        write_atomic(&with_ext(&base, "events.json"), events.as_bytes())?;
    }
    if s.output.svg {
        let grid = s.grid.build()?;
        let svg = render_svg(
            &grid,
            &out.log.records,
            &metric_targets(&out.metrics),
            THRESHOLD,
        );
        write_atomic(&with_ext(&base, "svg"), svg.as_bytes())?;
    }
    Ok(())
}

fn report(out: &RunOutput) {
    let m = &out.metrics;
    println!(
        "{} seed {}: mean error {:.4} m, max {:.4} m",
        m.scenario, m.seed, m.mean_error, m.max_error
    );
    for o in &m.objects {
        let time = o
            .time_to_target
            .map_or("-".to_string(), |t| format!("{t:.2} s"));
        println!(
            "  object {} {:<8} error {:.4} m  {}  time {time}  hops {}  retries {}",
            o.object,
            o.shape.name(),
            o.final_error,
            if o.success { "ok" } else { "MISSED" },
            o.hops,
            o.retries
        );
    }
}

/// Runs the replicas of one scenario, writes their files and prints a
/// summary. Returns whether every replica succeeded.
fn run_replicas(s: &Scenario, first_seed: u64, repeats: u32, dir: &Path) -> Result<bool> {
    let outs = (0..repeats as u64)
        .into_par_iter()
        .map(|r| {
            let out = run_with_seed(s, first_seed.wrapping_add(r))?;
            write_outputs(s, &out, dir)?;
            Ok(out)
        })
        .collect::<Result<Vec<_>>>()?;
    for out in &outs {
        report(out);
    }
    if outs.len() >= 2 {
        let logs: Vec<RunLog> = outs.iter().map(|o| o.log.clone()).collect();
        for id in logs[0].object_ids() {
            let [x, y, z] = compute_trajectory_std(&logs, id)?;
            println!(
                "  object {id} spread across {} runs: x {x:.4} y {y:.4} z {z:.4} m",
                logs.len()
            );
        }
    }
    Ok(outs.iter().all(all_succeeded))
}

fn run_file(path: &Path, seed: Option<u64>, repeats: Option<u32>, out: &Path) -> Result<bool> {
    let s = load(path)?;
    let repeats = repeats.unwrap_or(s.repeats);
    if repeats == 0 {
        bail!("--repeats must be at least 1");
    }
    run_replicas(&s, seed.unwrap_or(s.seed), repeats, out)
}

fn batch(dir: &Path, out: &Path) -> Result<bool> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "toml"));
    files.sort();
    if files.is_empty() {
        bail!("no .toml scenarios in {}", dir.display());
    }
    // Validate everything before running anything.
    let scenarios = files.iter().map(|p| load(p)).collect::<Result<Vec<_>>>()?;
    let mut ok = true;
    for s in &scenarios {
        ok &= run_replicas(s, s.seed, s.repeats, out)?;
    }
    Ok(ok)
}

/// The metrics document written next to a trajectory log, if any.
fn sibling_metrics(log: &Path) -> Option<PathBuf> {
    let name = log.file_name()?.to_str()?;
    let p = log.with_file_name(format!("{}.json", name.strip_suffix(".csv")?));
    p.exists().then_some(p)
}

fn metrics(paths: &[PathBuf]) -> Result<bool> {
    let mut logs = Vec::with_capacity(paths.len());
    let mut ok = true;
    for p in paths {
        let log = read_csv(p).with_context(|| format!("reading {}", p.display()))?;
        println!(
            "{}: {} records over {:.3} s",
            p.display(),
            log.records.len(),
            log.end_time()
        );
        for id in log.object_ids() {
            if let Some(last) = log.records.iter().rev().find(|r| r.object == id) {
                println!(
                    "  object {id} ends at ({:.4}, {:.4}) on M{}",
                    last.x, last.y, last.module
                );
            }
        }
        if let Some(mp) = sibling_metrics(p) {
            let m = read_metrics(&mp).with_context(|| format!("reading {}", mp.display()))?;
            println!(
                "  mean error {:.4} m, all succeeded: {}",
                m.mean_error, m.all_succeeded
            );
            ok &= m.all_succeeded;
        }
        logs.push(log);
    }
    if logs.len() >= 2 {
        for id in logs[0].object_ids() {
            let [x, y, z] = compute_trajectory_std(&logs, id)?;
            println!(
                "object {id} spread across {} logs: x {x:.4} y {y:.4} z {z:.4} m",
                logs.len()
            );
        }
    }
    Ok(ok)
}

/// Smallest grid of standard modules covering every record.
fn covering_grid(log: &RunLog) -> Result<ActuatorGrid> {
    let mut g = GridConfig::new(1, 1);
    let fit = |v: f64| ((v / g.spacing).ceil() as usize).max(1);
    let (mx, my) = log
        .records
        .iter()
        .fold((0.0f64, 0.0f64), |(mx, my), r| (mx.max(r.x), my.max(r.y)));
    (g.rows, g.cols) = (fit(my), fit(mx));
    Ok(g.build()?)
}

fn plot(log_path: &Path, out: &Path, metrics_path: Option<&Path>) -> Result<bool> {
    let log = read_csv(log_path).with_context(|| format!("reading {}", log_path.display()))?;
    let metrics_path = metrics_path
        .map(Path::to_path_buf)
        .or_else(|| sibling_metrics(log_path));
    let metrics: Option<Metrics> = metrics_path
        .map(|p| read_metrics(&p).with_context(|| format!("reading {}", p.display())))
        .transpose()?;
    let (grid, targets) = match &metrics {
        Some(m) => {
            let mut g = GridConfig::new(m.grid.rows, m.grid.cols);
            g.spacing = m.grid.spacing;
            (g.build()?, metric_targets(m))
        }
        None => (covering_grid(&log)?, Vec::new()),
    };
    write_atomic(
        out,
        render_svg(&grid, &log.records, &targets, THRESHOLD).as_bytes(),
    )?;
    println!("wrote {}", out.display());
    Ok(true)
}

fn experiments(which: Experiment, seeds: &[u64]) -> Result<bool> {
    if seeds.is_empty() {
        bail!("--seeds needs at least one seed");
    }
    match which {
        Experiment::Passing => {
            println!("shape     std x    std y    std z    reached");
            let results = PASSING_SHAPES
                .par_iter()
                .map(|&shape| passing_experiment(shape, seeds))
                .collect::<fabricsim_core::Result<Vec<_>>>()?;
            for r in &results {
                println!(
                    "{:<8}  {:.4}   {:.4}   {:.4}   {}/{}",
                    r.shape.name(),
                    r.std[0],
                    r.std[1],
                    r.std[2],
                    r.successes(),
                    r.runs.len()
                );
            }
            Ok(results.iter().all(|r| r.successes() == r.runs.len()))
        }
        Experiment::Square => {
            let mut ok = true;
            for v in SquareVariant::ALL {
                let r = square_experiment(v, seeds)?;
                let areas: Vec<String> = r
                    .runs
                    .iter()
                    .map(|run| format!("{:.3}", run.area))
                    .collect();
                println!(
                    "{:<6}  areas [{}] m^2, mean {:.3}, crossings within {:.4} m of midpoints",
                    v.name(),
                    areas.join(", "),
                    r.mean_area(),
                    r.max_crossing_offset()
                );
                ok &= r.runs.iter().all(|run| run.metrics.success);
            }
            Ok(ok)
        }
        Experiment::Target => {
            let r = target_experiment(20, seeds[0])?;
            let slowest = r
                .max_time()
                .map_or("-".to_string(), |t| format!("{t:.2} s"));
            println!(
                "{}/{} reached, mean error {:.4} m, slowest {slowest}",
                r.reached(),
                r.trials.len(),
                r.mean_error()
            );
            Ok(r.reached() == r.trials.len())
        }
        Experiment::Multi | Experiment::Scale => {
            let s = match which {
                Experiment::Multi => multi_object_scenario(),
                _ => scalability_scenario(),
            };
            let out = run_with_seed(&s, seeds[0])?;
            report(&out);
            let deferrals = out
                .log
                .events
                .iter()
                .filter(|e| matches!(e.kind, EventKind::LeaseDeferred { .. }))
                .count();
            println!("  lease deferrals: {deferrals}");
            Ok(all_succeeded(&out))
        }
    }
}
