//! Subcommands. Each prints a text report, writes it together with a flat
//! summary into the output directory and returns an exit code.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use ncs_core::abstraction::{AbsError, AggregateState};
use ncs_core::refine::MealyController;
use ncs_core::sim::verify_trace;
use ncs_core::tsys;

use crate::pipeline::{pool, AppError, Pipeline, RunResult, EXIT_INVALID, EXIT_OK, EXIT_RUNTIME};
use crate::scenarios;
use crate::summary::Summary;
use crate::traces::{read_samples, write_iterations, write_samples, TraceLabels};

#[derive(Debug, Parser)]
#[command(name = "ncs", version, about = "Delay-aware symbolic control of networked systems")]
pub struct Cli {
    /// Worker threads (0: one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a configuration: plant, certificate, network, parameters, spec.
    Validate { config: PathBuf },
    /// Print the delay worksheet and the discrete delay bounds.
    Delays { config: PathBuf },
    /// Explore the symbolic model reachable from the initial set.
    Abstract {
        config: PathBuf,
        /// Write the explored system in text form.
        #[arg(long)]
        write_system: bool,
        /// Cap on explored states.
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Synthesize and refine a controller; writes controller.txt.
    Synthesize { config: PathBuf },
    /// Run the closed loop; synthesizes first unless a controller is given.
    Simulate {
        config: PathBuf,
        #[arg(long)]
        controller: Option<PathBuf>,
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// uniform, fixed, worst, best or sequence.
        #[arg(long)]
        policy: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
    },
    /// Check a samples CSV against the specification at the configured precision.
    Verify {
        config: PathBuf,
        trace: PathBuf,
    },
    /// The surveillance robot on its reduced grid with the packaged route.
    DemoVehicle {
        /// Run with a configuration file instead of the bundled one.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

/// Collected report lines plus summary.
struct Report {
    text: String,
    summary: Summary,
    name: &'static str,
}

impl Report {
    fn new(name: &'static str) -> Self {
        Report {
            text: String::new(),
            summary: Summary::new(name),
            name,
        }
    }

    fn line(&mut self, s: impl AsRef<str>) {
        println!("{}", s.as_ref());
        self.text.push_str(s.as_ref());
        self.text.push('\n');
    }

    fn kv(&mut self, k: &str, v: impl std::fmt::Display) {
        let v = v.to_string();
        self.line(format!("{:<28} {}", k, v));
        self.summary.push(k, v);
    }

    fn finish(mut self, dir: &Path, result: &Result<(), AppError>) -> i32 {
        let code = match result {
            Ok(()) => EXIT_OK,
            Err(e) => {
                self.line(format!("error: {}", e));
                e.code
            }
        };
        self.summary.push("exit_code", code);
        self.summary.push(
            "status",
            match result {
                Ok(()) => "ok".to_string(),
                Err(e) => e.msg.clone(),
            },
        );
        if fs::create_dir_all(dir).is_ok() {
            let _ = fs::write(dir.join(format!("{}.txt", self.name)), &self.text);
            let _ = fs::write(dir.join(format!("{}.summary", self.name)), self.summary.to_text());
        }
        code
    }
}

fn io_err(path: &Path, e: std::io::Error) -> AppError {
    AppError::new(EXIT_INVALID, format!("{}: {}", path.display(), e))
}

fn out_dir(cli_out: &Option<PathBuf>, p: Option<&Pipeline>, config: Option<&Path>) -> PathBuf {
    if let Some(o) = cli_out {
        return o.clone();
    }
    match p {
        Some(p) => {
            let d = PathBuf::from(&p.cfg.output.dir);
            match config.and_then(Path::parent) {
                Some(base) if d.is_relative() => base.join(d),
                _ => d,
            }
        }
        None => PathBuf::from("out"),
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{}", x)).collect();
    format!("[{}]", parts.join(", "))
}

fn report_setup(r: &mut Report, p: &Pipeline) {
    let plant = &p.setup.plant;
    let lat = &p.setup.lattice;
    r.kv("name", &p.cfg.name);
    r.kv("state_dimension", plant.plant.dim_x());
    r.kv("inputs", plant.plant.inputs().len());
    r.kv("normalized", p.cfg.plant.normalize);
    r.kv("mu_x", fmt_vec(&p.setup.abs_cfg.mu_x));
    let per_axis: Vec<String> = lat
        .axis_counts()
        .iter()
        .map(|rc| format!("{:?}", rc))
        .collect();
    r.kv("lattice_points_per_axis", per_axis.join(" "));
    r.kv("lattice_points", lat.count());
}

fn report_delays(r: &mut Report, p: &Pipeline) {
    let b = &p.setup.bounds;
    if b.bits_pc > 0 {
        r.kv("bits_pc", b.bits_pc);
        r.kv("bits_cp", b.bits_cp);
        r.kv("delta_b_pc_min", format!("{:.4}", b.d_b_pc_min));
        r.kv("delta_b_pc_max", format!("{:.4}", b.d_b_pc_max));
        r.kv("delta_b_cp_min", format!("{:.4}", b.d_b_cp_min));
        r.kv("delta_b_cp_max", format!("{:.4}", b.d_b_cp_max));
        r.kv("delta_bar_min", format!("{:.4}", b.delta_bar_min));
        r.kv("delta_bar_max", format!("{:.4}", b.delta_bar_max));
        r.kv("delta_min", format!("{:.4}", b.delta_min));
        r.kv("delta_max", format!("{:.4}", b.delta_max));
    }
    r.kv("n_min", b.n_min);
    r.kv("n_max", b.n_max);
}

fn cmd_validate(r: &mut Report, p: &Pipeline) -> Result<(), AppError> {
    report_setup(r, p);
    report_delays(r, p);
    p.setup
        .plant
        .plant
        .check_finite(5)
        .map_err(|e| AppError::new(EXIT_INVALID, format!("plant: {}", e)))?;
    r.kv("plant_check", "finite on sample grid");
    let cert = p.certificate_report()?;
    r.kv("certificate_samples", cert.samples);
    r.kv("certificate_decay_slack", format!("{:.3e}", cert.decay_slack));
    r.kv("certificate_gamma_slack", format!("{:.3e}", cert.gamma_slack));
    let abs = p.abstraction()?;
    r.kv("link_bound", format!("{:.6}", abs.link_bound()));
    r.kv("search_radius", format!("{:.6}", abs.search_radius()));
    let rep = p.param_report();
    for c in &rep.conditions {
        r.line(format!(
            "condition {:<40} {} ({:.6} vs {:.6})",
            c.name,
            if c.pass { "holds" } else { "VIOLATED" },
            c.lhs,
            c.rhs
        ));
    }
    if let Some(q) = &p.spec {
        r.kv("spec_states", q.len());
        r.kv("spec_transitions", q.transitions.len());
    }
    if !rep.ok() {
        let names: Vec<&str> = rep.failures().iter().map(|c| c.name).collect();
        return Err(AppError::new(
            EXIT_INVALID,
            format!("condition {} violated", names.join(", ")),
        ));
    }
    Ok(())
}

fn cmd_abstract(
    r: &mut Report,
    p: &Pipeline,
    dir: &Path,
    write_system: bool,
    budget: Option<usize>,
    jobs: &rayon::ThreadPool,
) -> Result<(), AppError> {
    report_setup(r, p);
    let abs = p.abstraction()?;
    r.kv("link_bound", format!("{:.6}", abs.link_bound()));
    r.kv("search_radius", format!("{:.6}", abs.search_radius()));
    let seeds = abs.initial_states(p.cfg.abstraction.state_budget)?;
    r.kv("initial_states", seeds.len());
    let t0 = Instant::now();
    let budget = budget.unwrap_or(p.cfg.abstraction.state_budget);
    let reach = ncs_core::abstraction::build_reachable(
        seeds,
        |x| abs.output(x),
        |wave: &[AggregateState]| -> Result<_, AbsError> {
            use rayon::prelude::*;
            jobs.install(|| wave.par_iter().map(|x| abs.expand(x)).collect())
        },
        budget,
        false,
    )?;
    let sys = &reach.system;
    r.kv("states", sys.n_states());
    r.kv("transitions", sys.n_transitions());
    r.kv("truncated", reach.truncated);
    r.kv("blocking_states", sys.blocking_states().len());
    r.kv("seconds", format!("{:.3}", t0.elapsed().as_secs_f64()));
    if write_system {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let path = dir.join("system.txt");
        fs::write(&path, tsys::to_text(sys)).map_err(|e| io_err(&path, e))?;
        r.kv("system_file", path.display());
    }
    Ok(())
}

fn write_controller(dir: &Path, c: &MealyController) -> Result<PathBuf, AppError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join("controller.txt");
    fs::write(&path, c.to_text()).map_err(|e| io_err(&path, e))?;
    Ok(path)
}

fn synthesize_into(
    r: &mut Report,
    p: &Pipeline,
    dir: &Path,
    jobs: &rayon::ThreadPool,
) -> Result<MealyController, AppError> {
    let t0 = Instant::now();
    let out = p.synthesize(jobs)?;
    let st = &out.syn.stats;
    r.kv("lifted_spec_states", out.lifted.n_states());
    r.kv("explored_states", st.explored_states);
    r.kv("explored_pairs", st.explored_pairs);
    r.kv("deleted_pairs", st.deleted_pairs);
    r.kv("controller_states", st.controller_states);
    r.kv("controller_transitions", st.controller_transitions);
    r.kv("losing_initial_states", out.syn.losing_initial.len());
    r.kv("witnesses", "checked");
    r.kv("synthesis_seconds", format!("{:.3}", t0.elapsed().as_secs_f64()));
    let path = write_controller(dir, &out.controller)?;
    r.kv("controller_file", path.display());
    Ok(out.controller)
}

fn write_run(dir: &Path, p: &Pipeline, res: &RunResult) -> Result<(), AppError> {
    let inputs: Vec<Vec<f64>> = (0..p.setup.plant.physical.inputs().len())
        .map(|i| p.setup.plant.physical_input(i))
        .collect();
    let labels = TraceLabels {
        state_map: &p.setup.plant.state_map,
        inputs: &inputs,
    };
    let sp = dir.join(format!("run_{:03}_samples.csv", res.run));
    let f = fs::File::create(&sp).map_err(|e| io_err(&sp, e))?;
    write_samples(std::io::BufWriter::new(f), &res.trace, &labels)
        .map_err(|e| AppError::new(EXIT_RUNTIME, e.to_string()))?;
    let ip = dir.join(format!("run_{:03}_iterations.csv", res.run));
    let f = fs::File::create(&ip).map_err(|e| io_err(&ip, e))?;
    write_iterations(std::io::BufWriter::new(f), &res.trace, &labels)
        .map_err(|e| AppError::new(EXIT_RUNTIME, e.to_string()))?;
    if p.cfg.simulation.dense > 1 {
        let dense = ncs_core::sim::dense_output(&p.setup.plant.plant, &res.trace, p.cfg.simulation.dense)?;
        let dp = dir.join(format!("run_{:03}_dense.csv", res.run));
        let mut text = String::from("# ncs-trace-dense v1\nt");
        let n = p.setup.plant.plant.dim_x();
        for i in 0..n {
            text.push_str(&format!(",phys_x{}", i));
        }
        text.push('\n');
        for (t, x) in dense {
            text.push_str(&crate::traces::fmt_f64(t));
            for v in p.setup.plant.state_map.to_physical(&x) {
                text.push(',');
                text.push_str(&crate::traces::fmt_f64(v));
            }
            text.push('\n');
        }
        fs::write(&dp, text).map_err(|e| io_err(&dp, e))?;
    }
    Ok(())
}

fn simulate_with(
    r: &mut Report,
    p: &Pipeline,
    ctrl: &MealyController,
    dir: &Path,
    jobs: &rayon::ThreadPool,
) -> Result<(), AppError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let runs = p.simulate(ctrl, p.cfg.simulation.runs, jobs)?;
    let mut passed = 0;
    let mut iters = Vec::new();
    for res in &runs {
        write_run(dir, p, res)?;
        iters.push(res.trace.iterations());
        if res.verdict.as_ref().map_or(true, |v| v.ok) {
            passed += 1;
        }
    }
    let mean = iters.iter().sum::<usize>() as f64 / iters.len().max(1) as f64;
    r.kv("runs", runs.len());
    r.kv("horizon", p.cfg.simulation.horizon);
    r.kv("iterations_min", iters.iter().min().copied().unwrap_or(0));
    r.kv("iterations_max", iters.iter().max().copied().unwrap_or(0));
    r.kv("iterations_mean", format!("{:.3}", mean));
    if p.spec.is_some() {
        r.kv("spec_satisfied", format!("{}/{}", passed, runs.len()));
    }
    if let Some(bad) = runs.iter().find(|x| x.verdict.as_ref().is_some_and(|v| !v.ok)) {
        let s = bad.verdict.as_ref().unwrap().first_failure.unwrap_or(0);
        return Err(AppError::new(
            EXIT_RUNTIME,
            format!(
                "run {} leaves the epsilon tube of the specification at sample {}",
                bad.run, s
            ),
        ));
    }
    Ok(())
}

fn cmd_verify(r: &mut Report, p: &Pipeline, trace: &Path) -> Result<(), AppError> {
    let f = fs::File::open(trace).map_err(|e| io_err(trace, e))?;
    let t = read_samples(f).map_err(|e| AppError::new(EXIT_INVALID, format!("{}: {}", trace.display(), e)))?;
    let q = p.spec()?;
    let eps = p.setup.abs_cfg.epsilon;
    let v = verify_trace(&t.y_tilde, q, eps);
    r.kv("samples", t.y_tilde.len());
    r.kv("epsilon", eps);
    r.kv("satisfied", v.ok);
    if v.ok {
        let names: Vec<&str> = v.witness.iter().map(|&i| q.names[i as usize].as_str()).collect();
        r.kv("witness", names.join(" "));
        Ok(())
    } else {
        Err(AppError::new(
            EXIT_RUNTIME,
            format!(
                "trace leaves the epsilon tube of every specification run at sample {}",
                v.first_failure.unwrap_or(0)
            ),
        ))
    }
}

fn cmd_demo_vehicle(
    r: &mut Report,
    p: &Pipeline,
    dir: &Path,
    jobs: &rayon::ThreadPool,
) -> Result<(), AppError> {
    report_setup(r, p);
    report_delays(r, p);
    let abs = p.abstraction()?;
    let m = abs.search_radius() / p.setup.abs_cfg.mu_max();
    let per_link = (2.0 * m.floor() + 1.0).powi(p.setup.plant.plant.dim_x() as i32);
    r.kv("link_bound", format!("{:.6}", abs.link_bound()));
    r.kv("candidates_per_link", per_link);
    r.kv(
        "bursts_per_state_input",
        format!(
            "{:.3e}",
            p.setup.bounds.range().map(|n| per_link.powi(n as i32)).sum::<f64>()
        ),
    );
    let ctrl = synthesize_into(r, p, dir, jobs)?;
    simulate_with(r, p, &ctrl, dir, jobs)
}

/// Parses `args` and runs the selected subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    let jobs = pool(cli.jobs);
    let (name, config): (&'static str, Option<&Path>) = match &cli.cmd {
        Command::Validate { config } => ("validate", Some(config)),
        Command::Delays { config } => ("delays", Some(config)),
        Command::Abstract { config, .. } => ("abstract", Some(config)),
        Command::Synthesize { config } => ("synthesize", Some(config)),
        Command::Simulate { config, .. } => ("simulate", Some(config)),
        Command::Verify { config, .. } => ("verify", Some(config)),
        Command::DemoVehicle { config } => ("demo-vehicle", config.as_deref()),
    };
    let mut r = Report::new(name);
    let loaded = match (&cli.cmd, config) {
        (Command::DemoVehicle { config: None }, _) => scenarios::vehicle(),
        (_, Some(c)) => Pipeline::load(c),
        (_, None) => unreachable!("every other command takes a config"),
    };
    let mut p = match loaded {
        Ok(p) => p,
        Err(e) => {
            let dir = out_dir(&cli.out, None, config);
            return r.finish(&dir, &Err(e));
        }
    };
    if let Command::Simulate {
        runs,
        seed,
        policy,
        horizon,
        ..
    } = &cli.cmd
    {
        let s = &mut p.cfg.simulation;
        s.runs = runs.unwrap_or(s.runs);
        s.seed = seed.unwrap_or(s.seed);
        s.horizon = horizon.unwrap_or(s.horizon);
        if let Some(pol) = policy {
            s.policy = pol.clone();
        }
    }
    let dir = out_dir(&cli.out, Some(&p), config);
    let result = match &cli.cmd {
        Command::Validate { .. } => cmd_validate(&mut r, &p),
        Command::Delays { .. } => {
            report_delays(&mut r, &p);
            Ok(())
        }
        Command::Abstract {
            write_system,
            budget,
            ..
        } => cmd_abstract(&mut r, &p, &dir, *write_system, *budget, &jobs),
        Command::Synthesize { .. } => synthesize_into(&mut r, &p, &dir, &jobs).map(|_| ()),
        Command::Simulate { controller, .. } => {
            let ctrl = match controller {
                Some(path) => fs::read_to_string(path)
                    .map_err(|e| io_err(path, e))
                    .and_then(|t| {
                        MealyController::from_text(&t).map_err(|e| {
                            AppError::new(EXIT_INVALID, format!("{}: {}", path.display(), e))
                        })
                    }),
                None => synthesize_into(&mut r, &p, &dir, &jobs),
            };
            ctrl.and_then(|c| simulate_with(&mut r, &p, &c, &dir, &jobs))
        }
        Command::Verify { trace, .. } => cmd_verify(&mut r, &p, trace),
        Command::DemoVehicle { .. } => cmd_demo_vehicle(&mut r, &p, &dir, &jobs),
    };
    r.finish(&dir, &result)
}
