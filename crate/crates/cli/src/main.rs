use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use camdp_cli::config::{float_list, int_list, InstanceSource, SweepSpec};
use camdp_cli::error::{CliError, CliResult, EXIT_OK, EXIT_UNMET};
use camdp_cli::hardgen::generate;
use camdp_cli::solve::{parse_planner, parse_strict_constants, parse_truncation, Bench, StructureOverride};
use camdp_cli::sweep::{run_sweep, sweep_exit_code, write_csv};
use camdp_cli::verify::{run_criterion, run_suite, CRITERIA};
use camdp_cli::{CellOptions, SolveMode};
use camdp_core::oracle::{solve_camdp_lp, LpOutcome};
use camdp_core::structure::structural_params;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "camdp", version, about = "Constrained average-reward MDP benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one cell and print its report as JSON.
    Solve(SolveArgs),
    /// Run a grid of cells in parallel and write CSV.
    Sweep(SweepArgs),
    /// Generate a lower-bound instance plus a metadata sidecar.
    HardGen(HardGenArgs),
    /// Solve the occupancy LP of an instance.
    Oracle(OracleArgs),
    /// Run a property suite, `acceptance` for all criteria, or `list`.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct CellArgs {
    /// Iteration ceiling per cell.
    #[arg(long)]
    t_cap: Option<u64>,
    /// value-iteration | discounted | exact-average
    #[arg(long)]
    planner: Option<String>,
    /// keep-step | rescale-step
    #[arg(long)]
    truncation: Option<String>,
    /// proof | statement
    #[arg(long)]
    strict_constants: Option<String>,
    /// Fill the wall_ms field.
    #[arg(long)]
    timing: bool,
    /// Known bias span H (skips enumeration when given with --transient).
    #[arg(long)]
    span: Option<f64>,
    /// Known transient bound B.
    #[arg(long)]
    transient: Option<f64>,
}

impl CellArgs {
    fn apply(&self, opts: &mut CellOptions, structure: &mut StructureOverride) -> CliResult<()> {
        if let Some(t) = self.t_cap {
            opts.iteration_cap = t;
        }
        if let Some(p) = &self.planner {
            opts.planner = parse_planner(p)?;
        }
        if let Some(t) = &self.truncation {
            opts.truncation = parse_truncation(t)?;
        }
        if let Some(c) = &self.strict_constants {
            opts.strict_constants = parse_strict_constants(c)?;
        }
        opts.timing |= self.timing;
        structure.span = self.span.or(structure.span);
        structure.transient = self.transient.or(structure.transient);
        Ok(())
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Instance JSON path or `fixture:<name>`.
    #[arg(long)]
    instance: String,
    #[arg(long, default_value = "relaxed")]
    mode: String,
    #[arg(long)]
    epsilon: f64,
    /// Samples per state-action pair.
    #[arg(long)]
    samples: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the dual trace as CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[command(flatten)]
    cell: CellArgs,
}

#[derive(Args)]
struct SweepArgs {
    /// `key = value` spec file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    instance: Option<String>,
    /// `hard-gen` parameter string used as the instance.
    #[arg(long)]
    params: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    /// Comma-separated list.
    #[arg(long)]
    epsilon: Option<String>,
    /// Comma-separated list; `2^k` and `a..b` allowed.
    #[arg(long)]
    samples: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    /// CSV destination (stdout if absent).
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    cell: CellArgs,
}

#[derive(Args)]
struct HardGenArgs {
    /// e.g. `kind=general,S=13,A=3,B=4,epsilon=0.01,zeta=0.25,s_star=0,a_star=1`
    #[arg(long)]
    params: String,
    /// Instance JSON destination; metadata goes next to it as `<stem>.meta.json`.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    instance: String,
    /// Replace the instance threshold.
    #[arg(long)]
    threshold: Option<f64>,
    /// Also report H, B, D and zeta (enumerates deterministic policies).
    #[arg(long)]
    structure: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    suite: String,
    /// Print JSON instead of text.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    // clap's own usage errors exit with 2, which is reserved for infeasible instances
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { camdp_cli::error::EXIT_INPUT as u8 } else { EXIT_OK as u8 });
        }
    };
    let code = match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}

fn run(command: Command) -> CliResult<i32> {
    match command {
        Command::Solve(a) => solve(a),
        Command::Sweep(a) => sweep(a),
        Command::HardGen(a) => hard_gen(a),
        Command::Oracle(a) => oracle(a),
        Command::Verify(a) => verify(a),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> CliResult<String> {
    let text = serde_json::to_string_pretty(value)?;
    println!("{text}");
    Ok(text)
}

fn solve(a: SolveArgs) -> CliResult<i32> {
    let mode: SolveMode = a.mode.parse()?;
    let mut opts = CellOptions { record_trace: a.trace.is_some(), ..CellOptions::default() };
    let mut structure = StructureOverride::default();
    a.cell.apply(&mut opts, &mut structure)?;
    let bench = Bench::with_structure(InstanceSource::parse(&a.instance).load()?, structure)?;
    let solved = bench.solve(mode, a.epsilon, a.samples, a.seed, &opts)?;
    let text = print_json(&solved.report)?;
    if let Some(path) = a.out {
        std::fs::write(path, text + "\n")?;
    }
    if let Some(path) = a.trace {
        solved.run.trace.write_csv(BufWriter::new(File::create(path)?))?;
    }
    Ok(if solved.report.objective_met { EXIT_OK } else { EXIT_UNMET })
}

fn sweep(a: SweepArgs) -> CliResult<i32> {
    let mut spec = match &a.config {
        Some(path) => Some(SweepSpec::load(path)?),
        None => None,
    };
    let instance = match (&a.instance, &a.params) {
        (Some(_), Some(_)) => return Err(CliError::Input("give --instance or --params, not both".into())),
        (Some(i), None) => Some(InstanceSource::parse(i)),
        (None, Some(p)) => Some(InstanceSource::Generator(p.clone())),
        (None, None) => None,
    };
    let need = |what: &str| CliError::Input(format!("{what} is required without --config"));
    let mut spec = match spec.take() {
        Some(mut s) => {
            if let Some(i) = instance {
                s.instance = i;
            }
            s
        }
        None => SweepSpec::new(
            instance.ok_or_else(|| need("--instance or --params"))?,
            SolveMode::Relaxed,
            float_list(a.epsilon.as_deref().ok_or_else(|| need("--epsilon"))?)?,
            int_list(a.samples.as_deref().ok_or_else(|| need("--samples"))?)?,
            int_list(a.seeds.as_deref().ok_or_else(|| need("--seeds"))?)?,
        )?,
    };
    if let Some(m) = &a.mode {
        spec.mode = m.parse()?;
    }
    if let Some(e) = &a.epsilon {
        spec.epsilons = float_list(e)?;
    }
    if let Some(n) = &a.samples {
        spec.samples = int_list(n)?;
    }
    if let Some(s) = &a.seeds {
        spec.seeds = int_list(s)?;
    }
    if a.out.is_some() {
        spec.out = a.out.clone();
    }
    a.cell.apply(&mut spec.options, &mut spec.structure)?;
    spec.validate()?;
    let rows = run_sweep(&spec)?;
    match &spec.out {
        Some(path) => write_csv(&rows, BufWriter::new(File::create(path)?))?,
        None => write_csv(&rows, io::stdout().lock())?,
    }
    Ok(sweep_exit_code(&rows))
}

fn sidecar(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "instance".into());
    out.with_file_name(format!("{stem}.meta.json"))
}

fn hard_gen(a: HardGenArgs) -> CliResult<i32> {
    let generated = generate(&a.params)?;
    generated.instance.save(&a.out)?;
    let meta_path = sidecar(&a.out);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&generated.meta)? + "\n")?;
    println!("{}", a.out.display());
    println!("{}", meta_path.display());
    Ok(EXIT_OK)
}

fn oracle(a: OracleArgs) -> CliResult<i32> {
    let inst = InstanceSource::parse(&a.instance).load()?;
    let sol = solve_camdp_lp(&inst, a.threshold)?;
    let lp: serde_json::Value = serde_json::from_str(&sol.to_json()?)?;
    let value = if a.structure {
        serde_json::json!({ "lp": lp, "structure": structural_params(&inst)? })
    } else {
        lp
    };
    print_json(&value)?;
    Ok(if sol.status == LpOutcome::Optimal { EXIT_OK } else { camdp_cli::error::EXIT_INFEASIBLE })
}

fn verify(a: VerifyArgs) -> CliResult<i32> {
    let mut out = io::stdout().lock();
    if a.suite == "list" {
        for s in camdp_cli::verify::SUITES {
            writeln!(out, "{s}")?;
        }
        writeln!(out, "acceptance")?;
        return Ok(EXIT_OK);
    }
    if a.suite == "acceptance" {
        let mut all = true;
        let mut reports = Vec::new();
        for (id, _, _) in CRITERIA {
            let r = run_criterion(id)?;
            all &= r.passed();
            if !a.json {
                writeln!(out, "{}", r.line())?;
                for s in &r.suites {
                    for c in &s.checks {
                        writeln!(out, "    [{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail)?;
                    }
                }
            }
            reports.push(r);
        }
        if a.json {
            writeln!(out, "{}", serde_json::to_string_pretty(&reports)?)?;
        }
        return Ok(if all { EXIT_OK } else { EXIT_UNMET });
    }
    let report = run_suite(&a.suite)?;
    if a.json {
        writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    } else {
        writeln!(out, "{report}")?;
    }
    Ok(if report.passed() { EXIT_OK } else { EXIT_UNMET })
}
