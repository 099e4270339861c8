use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use rendezvous_verify::error::Error;
use rendezvous_verify::io::{
    emit_flowpipe, emit_plot, emit_report, flowpipe_rows, load_flowpipe, load_report, load_scenario, plot_svg,
    report_json, sweep_csv, sweep_svg, trajectory_csv, Plane,
};
use rendezvous_verify::verifier::{
    default_sweep_grid, falsify, sample_initial_states, sweep_passive_time, verify, verify_windowed, Engine, Verdict,
};

const EXIT_OK: u8 = 0;
const EXIT_FOUND: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_INCONCLUSIVE: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rdv",
    version,
    about = "Passive-safety verification for spacecraft rendezvous"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the flowpipe and check every property.
    Verify {
        scenario: PathBuf,
        /// Directory for report.json, flowpipe.csv and xy.svg; prints the report when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Split the abort window into sub-windows of this width (s).
        #[arg(long)]
        window: Option<f64>,
    },
    /// Simulate sample trajectories from the initial set.
    Simulate {
        scenario: PathBuf,
        #[arg(long, default_value_t = 1)]
        samples: usize,
        /// Go passive at this time (s) instead of completing the rendezvous.
        #[arg(long)]
        abort_at: Option<f64>,
        /// Directory for one trajectory CSV per sample.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Search for a concrete violating trajectory.
    Falsify {
        scenario: PathBuf,
        #[arg(long)]
        samples: usize,
        /// Defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Where to write the counterexample trajectory as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Largest safe abort time over a ring of initial positions.
    Sweep {
        scenario: PathBuf,
        /// Angles in degrees as start:end:step.
        #[arg(long, default_value = "0:355:5")]
        angles: String,
        #[arg(long, default_value_t = 950.0)]
        radius: f64,
        /// Sub-window width (s); defaults to the scenario's.
        #[arg(long)]
        window: Option<f64>,
        /// Directory for sweep.csv and sweep.svg; prints the table when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw a saved report as SVG.
    Plot {
        report: PathBuf,
        /// One of xy, vxvy, uxuy.
        #[arg(long)]
        plane: String,
        /// Output file; defaults to <plane>.svg next to the report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_angles(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("bad angle range {spec:?}"))?;
    let [a, b, step] = parts[..] else {
        bail!("angle range must be start:end:step, got {spec:?}");
    };
    if !(step > 0.0 && a <= b) {
        bail!("angle range needs start <= end and a positive step, got {spec:?}");
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + i as f64 * step).collect())
}

fn write(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Verify { scenario, out, window } => {
            let sc = load_scenario(&scenario)?;
            let report = match window {
                Some(w) => verify_windowed(&sc, w)?,
                None => verify(&sc)?,
            };
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    emit_report(&report, dir.join("report.json"))?;
                    emit_flowpipe(&report, dir.join("flowpipe.csv"))?;
                    emit_plot(&report, Plane::Xy, dir.join("xy.svg"))?;
                }
                None => print!("{}", report_json(&report)),
            }
            for v in &report.violations {
                eprintln!("violation: {} in {} ({}) at {} s", v.property, v.mode, v.pipe, v.time_s);
            }
            eprintln!("verdict: {:?}", report.verdict);
            Ok(match report.verdict {
                Verdict::Safe => EXIT_OK,
                Verdict::Unsafe => EXIT_FOUND,
                Verdict::Inconclusive => EXIT_INCONCLUSIVE,
            })
        }
        Command::Simulate {
            scenario,
            samples,
            abort_at,
            out,
        } => {
            if samples == 0 {
                bail!("--samples must be positive");
            }
            let sc = load_scenario(&scenario)?;
            let engine = Engine::for_simulation(&sc)?;
            if let Some(dir) = &out {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            let mut code = EXIT_OK;
            for (i, x0) in sample_initial_states(&sc.init.project(&[0, 1, 2, 3]), samples)
                .iter()
                .enumerate()
            {
                let traj = engine.simulate_point(x0, abort_at)?;
                match engine.first_point_violation(&traj) {
                    Some((p, k)) => {
                        code = EXIT_FOUND;
                        println!(
                            "sample {i}: {} violated at {} s",
                            engine.properties()[p].name,
                            traj.times[k]
                        );
                    }
                    None => println!("sample {i}: no violation"),
                }
                match &out {
                    Some(dir) => write(&dir.join(format!("trajectory_{i}.csv")), &trajectory_csv(&traj))?,
                    None if samples == 1 => print!("{}", trajectory_csv(&traj)),
                    None => {}
                }
            }
            Ok(code)
        }
        Command::Falsify {
            scenario,
            samples,
            seed,
            out,
        } => {
            let sc = load_scenario(&scenario)?;
            let outcome = falsify(&sc, samples, seed.unwrap_or(sc.seed))?;
            match outcome.counterexample {
                Some(cx) => {
                    println!(
                        "counterexample: sample {} violates {} in {} at {} s (abort {}), x0 = {:?}",
                        cx.sample,
                        cx.property,
                        cx.mode,
                        cx.time_s,
                        cx.passive_at_s.map_or("none".into(), |t| format!("{t} s")),
                        cx.initial_state
                    );
                    if let Some(path) = out {
                        write(&path, &trajectory_csv(&cx.trajectory))?;
                    }
                    Ok(EXIT_FOUND)
                }
                None => {
                    println!("no counterexample in {} samples", outcome.samples);
                    Ok(EXIT_OK)
                }
            }
        }
        Command::Sweep {
            scenario,
            angles,
            radius,
            window,
            out,
        } => {
            let sc = load_scenario(&scenario)?;
            let angles = parse_angles(&angles)?;
            let (_, grid) = default_sweep_grid(sc.horizon);
            let rows = sweep_passive_time(&sc, &angles, radius, window.unwrap_or(sc.window), &grid)?;
            let table = sweep_csv(&rows);
            match out {
                Some(dir) => {
                    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                    write(&dir.join("sweep.csv"), &table)?;
                    write(&dir.join("sweep.svg"), &sweep_svg(&rows, sc.horizon))?;
                }
                None => print!("{table}"),
            }
            Ok(EXIT_OK)
        }
        Command::Plot { report, plane, out } => {
            let plane: Plane = plane.parse()?;
            let rep = load_report(&report).with_context(|| format!("reading {}", report.display()))?;
            let sibling = report.with_file_name("flowpipe.csv");
            let rows = if sibling.exists() {
                load_flowpipe(&sibling)?
            } else {
                // no saved flowpipe: recompute it from the echoed config
                let sc = rep.config.to_scenario()?;
                let recomputed = match rep.windows.as_slice() {
                    [] | [_] => verify(&sc)?,
                    [w, ..] => verify_windowed(&sc, w[1] - w[0])?,
                };
                flowpipe_rows(&recomputed)
            };
            let svg = plot_svg(&rows, rep.config.variant.dim(), &rep.config.properties, plane)?;
            let path = out.unwrap_or_else(|| {
                report.with_file_name(format!(
                    "{}.svg",
                    match plane {
                        Plane::Xy => "xy",
                        Plane::VxVy => "vxvy",
                        Plane::UxUy => "uxuy",
                    }
                ))
            });
            write(&path, &svg)?;
            Ok(EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = matches!(e.downcast_ref::<Error>(), Some(Error::Config { .. }));
            if !config {
                eprintln!("(run with --help for usage)");
            }
            ExitCode::from(EXIT_USAGE)
        }
    }
}
