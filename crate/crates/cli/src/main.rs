use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use floquet_braid::evolve::{edge_modes, floquet_propagator, pinned_mode_counts, spectrum, ModeLabel, PinFlag, N_LOC};
use floquet_braid::fockoracle::cross_check;
use floquet_braid::gaussian::{init_logical, LogicalLabel, SeededRng};
use floquet_braid::lattice::ParamConfig;
use floquet_braid::logic::{
    readout, run_algorithm, Algorithm, Backend, BraidLibrary, CnotOutcomes, CnotRun, CnotWires,
};
use floquet_braid::protocols::{
    base_modes, braid_matrix, builtin_schedule, run, wilson_holonomy, FShape, RunOptions, Schedule, ScheduleOptions, Sector,
};
use floquet_braid::topology::{phase_diagram, phase_rows_csv, winding_invariants};
use floquet_braid::{Error, Result};

#[derive(Parser, Debug)]
#[command(name = "floquet-braid", version, about = "Floquet Majorana superlattice simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Parameter file (JSON); the ideal case is used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV/JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Number of sites N (overrides the config file).
    #[arg(long, global = true)]
    sites: Option<usize>,
    #[arg(long = "periods-per-step", global = true, default_value_t = 400)]
    periods_per_step: usize,
    /// k-grid size for winding numbers.
    #[arg(long, global = true, default_value_t = 512)]
    grid: usize,
    #[arg(long, global = true, default_value = "braidA_left")]
    protocol: String,
    /// Site offset n of protocol B.
    #[arg(long, global = true, default_value_t = 4)]
    n: usize,
    /// Forced CNOT outcomes, e.g. "+-".
    #[arg(long = "force-outcomes", global = true)]
    force_outcomes: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Floquet quasienergy spectrum with edge weights.
    Spectrum,
    /// Winding numbers ν₀, ν_π of the bulk.
    Invariants,
    /// Invariants along one uniform parameter.
    PhaseDiagram {
        #[arg(long, default_value = "j2")]
        axis: String,
        #[arg(long, default_value_t = 0.0)]
        from: f64,
        #[arg(long, default_value_t = 4.0 * std::f64::consts::PI)]
        to: f64,
        #[arg(long, default_value_t = 101)]
        points: usize,
    },
    /// The six Majorana edge modes.
    EdgeModes,
    /// Runs a braiding schedule and reports the edge-mode transport.
    Braid {
        /// Schedule JSON (overrides --protocol).
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Envelope f(s) of protocol B: cosine or linear.
        #[arg(long, default_value = "cosine")]
        f: String,
        /// Keep one trajectory row per this many parameter updates.
        #[arg(long, default_value_t = 10)]
        stride: usize,
    },
    /// Discrete Wilson line of one edge-mode sector.
    Holonomy {
        #[arg(long)]
        schedule: Option<PathBuf>,
        #[arg(long, default_value = "zero")]
        sector: String,
    },
    /// Quasienergy offsets of the logical states under symmetry breaking.
    Readout {
        #[arg(long, default_value_t = 0.1)]
        mu1: f64,
        #[arg(long, default_value_t = 0.05)]
        mu2: f64,
    },
    /// Two-qubit search or Deutsch–Jozsa.
    Algorithm {
        #[arg(long, default_value = "search")]
        name: String,
        /// z̄ for search, z for Deutsch–Jozsa (0..=3, left qubit is the high bit).
        #[arg(long, default_value_t = 0)]
        input: usize,
        /// Constant offset k of the Deutsch–Jozsa function.
        #[arg(long, default_value_t = 0)]
        k: u8,
        #[arg(long, default_value = "logical_matrix")]
        backend: String,
        #[arg(long, default_value_t = 2)]
        width: usize,
    },
    /// Measurement-assisted CNOT on two wires.
    Cnot {
        #[arg(long, default_value = "01")]
        input: String,
        #[arg(long, default_value_t = 1)]
        shots: usize,
    },
    /// Fock-oracle cross-checks at N = 2 and 3.
    Validate {
        #[arg(long, default_value_t = 5)]
        draws: usize,
    },
}

/// Everything that determines a run's artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct RunConfig {
    command: String,
    params: ParamConfig,
    schedule: ScheduleConfig,
    out: String,
    seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct ScheduleConfig {
    n: usize,
    periods_per_step: usize,
    f: String,
    protocol: String,
}

impl RunConfig {
    /// Canonical JSON: sorted keys, two-space indent, trailing newline.
    fn to_json(&self) -> String {
        to_json(self)
    }

    #[cfg(test)]
    fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("run config: {e}")))
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let value = serde_json::to_value(v).expect("serializable");
    let mut s = serde_json::to_string_pretty(&value).expect("value serializes");
    s.push('\n');
    s
}

fn compact<T: Serialize>(v: &T) -> String {
    serde_json::to_string(&serde_json::to_value(v).expect("serializable")).expect("value serializes")
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::InvalidInput(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::InvalidInput(format!("cannot write {}: {e}", path.display())))
}

fn load_config(cli: &Cli, default_sites: usize) -> Result<ParamConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", p.display())))?;
            ParamConfig::from_json(&text)?
        }
        None => ParamConfig::ideal(default_sites),
    };
    if let Some(n) = cli.sites {
        cfg.n = n;
    }
    Ok(cfg)
}

fn f_shape(name: &str) -> Result<FShape> {
    match name {
        "cosine" | "cos" => Ok(FShape::Cosine),
        "linear" => Ok(FShape::Linear),
        other => Err(Error::InvalidInput(format!("unknown f shape `{other}`"))),
    }
}

fn schedule_for(cli: &Cli, file: Option<&PathBuf>, n_sites: usize, f: &str) -> Result<Schedule> {
    if let Some(p) = file {
        let text = fs::read_to_string(p).map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", p.display())))?;
        return Schedule::from_json(&text);
    }
    let mut opts = ScheduleOptions::new(n_sites, cli.periods_per_step);
    opts.n = cli.n;
    opts.f_shape = f_shape(f)?;
    builtin_schedule(&cli.protocol, &opts)
}

fn matrix_rows(m: &floquet_braid::linalg::Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect()
}

fn parse_forced(s: &str) -> Result<[i8; 2]> {
    let v: Vec<i8> = s
        .chars()
        .map(|c| match c {
            '+' => Ok(1),
            '-' => Ok(-1),
            other => Err(Error::InvalidInput(format!("forced outcome `{other}` is not + or -"))),
        })
        .collect::<Result<_>>()?;
    match v.as_slice() {
        [a, b] => Ok([*a, *b]),
        _ => Err(Error::InvalidInput(format!("--force-outcomes needs two signs, got `{s}`"))),
    }
}

fn execute(cli: &Cli) -> Result<String> {
    let default_sites = match cli.command {
        Command::Cnot { .. } => 3,
        Command::Braid { .. } | Command::Holonomy { .. } => 12,
        _ => 40,
    };
    let cfg = load_config(cli, default_sites)?;
    let params = cfg.to_params()?;
    let f_name = match &cli.command {
        Command::Braid { f, .. } => f.clone(),
        _ => "cosine".into(),
    };
    let command_name = format!("{:?}", cli.command).split([' ', '{']).next().unwrap_or_default().to_lowercase();
    let run_config = RunConfig {
        command: command_name,
        params: cfg.clone(),
        schedule: ScheduleConfig { n: cli.n, periods_per_step: cli.periods_per_step, f: f_name, protocol: cli.protocol.clone() },
        out: cli.out.display().to_string(),
        seed: cli.seed,
    };
    let out = &cli.out;
    let summary = match &cli.command {
        Command::Spectrum => {
            let o = floquet_propagator(&params)?;
            let rep = spectrum(&o, params.n_sites, N_LOC);
            write(out, "spectrum.csv", &rep.to_csv())?;
            format!(
                "N={} zero={} pi={} bulk={}",
                params.n_sites,
                rep.count(PinFlag::Zero),
                rep.count(PinFlag::Pi),
                rep.count(PinFlag::Bulk)
            )
        }
        Command::Invariants => {
            let w = winding_invariants(&params, cli.grid)?;
            write(out, "invariants.json", &to_json(&w))?;
            format!("nu0={} nu_pi={}", w.nu0, w.nu_pi)
        }
        Command::PhaseDiagram { axis, from, to, points } => {
            let template = params.homogeneous()?;
            let rows = phase_diagram(&template, axis, (*from, *to), *points, cli.grid)?;
            write(out, "phase_diagram.csv", &phase_rows_csv(&rows))?;
            let closed = rows.iter().filter(|r| r.gap_closed).count();
            format!("axis={axis} rows={} gap_closed={closed}", rows.len())
        }
        Command::EdgeModes => {
            let o = floquet_propagator(&params)?;
            let modes = edge_modes(&o, params.n_sites, None)?;
            let mut obj = serde_json::Map::new();
            let mut worst: f64 = 0.0;
            for l in ModeLabel::ALL {
                let v = modes.get(l);
                let target = if l.is_pi() { -v } else { v.clone() };
                worst = worst.max((o.apply(v) - target).amax());
                obj.insert(l.name().to_string(), json!(v.iter().copied().collect::<Vec<f64>>()));
            }
            let ((zl, pl), (zr, pr)) = pinned_mode_counts(&o, params.n_sites);
            let doc = json!({
                "modes": Value::Object(obj),
                "max_residual": worst,
                "pinned": {"left": {"zero": zl, "pi": pl}, "right": {"zero": zr, "pi": pr}},
            });
            write(out, "edge_modes.json", &to_json(&doc))?;
            format!("edge modes: left zero={zl} pi={pl}, right zero={zr} pi={pr}, max residual {worst:.2e}")
        }
        Command::Braid { schedule, f, stride } => {
            let sched = schedule_for(cli, schedule.as_ref(), params.n_sites, f)?;
            let report = braid_matrix(&sched, &params)?;
            let (p0, modes) = base_modes(&sched, &params)?;
            let o0 = floquet_propagator(&p0)?;
            let plus = init_logical(LogicalLabel::Plus, &modes, &o0)?;
            let traj = run(&sched, &p0, Some(&plus), &modes, RunOptions { splittings: true, stride: *stride })?;
            write(out, "trajectory.csv", &traj.to_csv())?;
            write(out, "braid.json", &to_json(&report))?;
            write(out, "schedule.json", &format!("{}\n", sched.to_json()))?;
            format!(
                "{}: block=[[{:.4}, {:.4}], [{:.4}, {:.4}]] leakage={:.2e} diabatic={:.2e}",
                report.schedule,
                report.block[0][0],
                report.block[0][1],
                report.block[1][0],
                report.block[1][1],
                report.leakage,
                report.diabatic_error
            )
        }
        Command::Holonomy { schedule, sector } => {
            let sched = schedule_for(cli, schedule.as_ref(), params.n_sites, "cosine")?;
            let sector = match sector.as_str() {
                "zero" => Sector::Zero,
                "pi" => Sector::Pi,
                "combined" => Sector::Combined,
                other => return Err(Error::InvalidInput(format!("unknown sector `{other}`"))),
            };
            let h = wilson_holonomy(&sched, &params, sector)?;
            let doc = json!({
                "schedule": sched.name,
                "sector": sector,
                "labels": h.labels.iter().map(|l| l.name()).collect::<Vec<_>>(),
                "w": matrix_rows(&h.w),
                "per_step": h.per_step.iter().map(matrix_rows).collect::<Vec<_>>(),
                "berry_diagnostic": h.berry_diagnostic,
                "unitarity_defect": h.unitarity_defect,
            });
            write(out, "holonomy.json", &to_json(&doc))?;
            format!("{}: berry_diagnostic={:.2e} unitarity_defect={:.2e}", sched.name, h.berry_diagnostic, h.unitarity_defect)
        }
        Command::Readout { mu1, mu2 } => {
            let rep = readout(&params, *mu1, *mu2)?;
            write(out, "readout.json", &to_json(&rep))?;
            let offs: Vec<String> = rep.offsets.iter().map(|x| format!("{x:.6}")).collect();
            format!("offsets=[{}] min_separation={:.3e} distinct={}", offs.join(", "), rep.min_separation, rep.distinct())
        }
        Command::Algorithm { name, input, k, backend, width } => {
            let alg = Algorithm::from_name(name, *input, *k)?;
            let backend = match backend.as_str() {
                "logical_matrix" => Backend::LogicalMatrix,
                "gaussian_trajectory" => {
                    Backend::GaussianTrajectory(Box::new(BraidLibrary::build(params.n_sites, cli.periods_per_step)?))
                }
                other => return Err(Error::InvalidInput(format!("unknown backend `{other}`"))),
            };
            let res = run_algorithm(alg, *width, &backend)?;
            write(out, "algorithm.json", &to_json(&res))?;
            compact(&json!({
                "algorithm": res.algorithm,
                "backend": res.backend,
                "input": input,
                "outcome": res.outcome,
                "classification": res.classification,
                "probabilities": res.probabilities,
            }))
        }
        Command::Cnot { input, shots } => {
            let label = LogicalLabel::from_name(input)
                .filter(|l| l.index().is_some())
                .ok_or_else(|| Error::InvalidInput(format!("`{input}` is not a logical basis label")))?;
            let wires = CnotWires::new(&params)?;
            let state = wires.prepare(label)?;
            let forced = cli.force_outcomes.as_deref().map(parse_forced).transpose()?;
            let mut runs: Vec<CnotRun> = Vec::new();
            for shot in 0..(*shots).max(1) {
                let run = match forced {
                    Some(q) => floquet_braid::logic::cnot_two_wire(&state, &wires, CnotOutcomes::Forced(q))?,
                    None => {
                        let mut rng = SeededRng::new(cli.seed.wrapping_add(shot as u64));
                        floquet_braid::logic::cnot_two_wire(&state, &wires, CnotOutcomes::Sample(&mut rng))?
                    }
                };
                runs.push(run);
            }
            write(out, "cnot.json", &to_json(&json!({"input": label.name(), "runs": runs})))?;
            let ok = runs.iter().filter(|r| r.is_cnot).count();
            let outputs: Vec<&str> = runs.iter().map(|r| r.output.as_deref().unwrap_or("?")).collect();
            let first = &runs[0];
            if runs.len() == 1 {
                format!("input={} output={} p1={} p2={} cnot={}", label.name(), outputs[0], first.p1, first.p2, first.is_cnot)
            } else {
                let plus = runs.iter().filter(|r| r.p1 * r.p2 == 1).count();
                format!("input={} shots={} cnot_ok={ok} p1p2=+1:{plus} -1:{}", label.name(), runs.len(), runs.len() - plus)
            }
        }
        Command::Validate { draws } => {
            let checks = [cross_check(2, *draws, cli.seed)?, cross_check(3, *draws, cli.seed.wrapping_add(1))?];
            write(out, "validate.json", &to_json(&checks))?;
            let worst = checks.iter().map(|c| c.worst()).fold(0.0, f64::max);
            if worst > 1e-8 {
                return Err(Error::NonGaussian(format!("oracle disagreement {worst:.2e} exceeds 1e-8")));
            }
            format!("validate: {draws} draws at N=2,3, max deviation {worst:.2e}")
        }
    };
    write(out, "run_config.json", &run_config.to_json())?;
    Ok(summary)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 3 })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_round_trips() {
        let rc = RunConfig {
            command: "braid".into(),
            params: ParamConfig::ideal(12),
            schedule: ScheduleConfig { n: 4, periods_per_step: 400, f: "cosine".into(), protocol: "braidB_left".into() },
            out: "out".into(),
            seed: 9,
        };
        let text = rc.to_json();
        let back = RunConfig::from_json(&text).unwrap();
        assert_eq!(back, rc);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn forced_outcomes_parse() {
        assert_eq!(parse_forced("+-").unwrap(), [1, -1]);
        assert!(parse_forced("+").is_err());
        assert!(parse_forced("+x").is_err());
    }
}
