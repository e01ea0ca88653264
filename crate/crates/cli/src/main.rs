use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};

use gcodeloop::corrector::{run_benchmark, run_loop, BenchmarkTask, LoopConfig, LoopError};
use gcodeloop::exec::Execution;
use gcodeloop::extract::{decompose, fill_defaults};
use gcodeloop::gcode::parse_program;
use gcodeloop::generation::{
    FaultInjectingGenerator, FaultScript, Generator, RemoteGenerator, TemplateGenerator,
};
use gcodeloop::params::{find_missing, Operation, TaskParameters, FIELD_NAMES};
use gcodeloop::registry::CommandRegistry;
use gcodeloop::remote::{CompletionClient, EndpointConfig};
use gcodeloop::similarity::{validate_functional, DEFAULT_TOLERANCE};
use gcodeloop::svg::{render_svg, Canvas, PathRole};
use gcodeloop::tasks::canonical_tasks;
use gcodeloop::toolpath::interpret;
use gcodeloop::validation::{validate, SafetyConfig};
use gcodeloop_service::{ServiceConfig, DEFAULT_PORT, DEFAULT_TTL};

#[derive(Parser)]
#[command(
    name = "gcodeloop",
    version,
    about = "Validate, simulate and generate G-code"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorKind {
    Template,
    Remote,
    Fault,
}

#[derive(Subcommand)]
enum Command {
    /// Run the static checks and print one line per diagnostic.
    Validate {
        file: PathBuf,
        /// Command registry file (`G1 description` per line).
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long, default_value_t = 2.0)]
        safe_height: f64,
        #[arg(long, default_value_t = 0.0)]
        surface_z: f64,
        /// Also run the drilling check.
        #[arg(long)]
        drilling: bool,
    },
    /// Interpret a program into its XY toolpath.
    Simulate {
        file: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Compare a program's path with the reference path of a task.
    Compare {
        file: PathBuf,
        /// Task parameters: a JSON file, or inline JSON.
        #[arg(long)]
        params: String,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tolerance: f64,
    },
    /// Run the self-correcting generation loop.
    Generate {
        #[arg(long)]
        params: String,
        #[arg(long, value_enum, default_value_t = GeneratorKind::Template)]
        generator: GeneratorKind,
        /// Fault script for `--generator fault` (JSON file or inline).
        #[arg(long)]
        faults: Option<String>,
        #[arg(long, default_value_t = 5)]
        max_iter: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Split a description into one subtask per shape.
    Decompose {
        #[arg(long)]
        description: String,
    },
    /// Run every task several times and write per-run results as CSV.
    Bench {
        /// Directory of task JSON files; the built-in six tasks when omitted.
        #[arg(long)]
        tasks: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        runs: u32,
        #[arg(long, value_enum, default_value_t = GeneratorKind::Template)]
        generator: GeneratorKind,
        #[arg(long)]
        faults: Option<String>,
        #[arg(long)]
        csv: PathBuf,
        /// Run on one thread.
        #[arg(long)]
        sequential: bool,
    },
    /// Start the HTTP session API.
    Serve {
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = DEFAULT_TTL.as_secs())]
        ttl_secs: u64,
        /// Allowed browser origin; repeat for several. Any origin when omitted.
        #[arg(long)]
        cors_origin: Vec<String>,
    },
}

enum Failure {
    /// Exit 1: the input was processed and did not pass.
    Rejected(String),
    /// Exit 2.
    Usage(String),
    /// Exit 3.
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Rejected(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn json_arg(arg: &str) -> Result<String, Failure> {
    if arg.trim_start().starts_with('{') {
        Ok(arg.to_string())
    } else {
        read(Path::new(arg))
    }
}

/// Parameters from a file or inline JSON, with derived defaults filled in.
fn load_params(arg: &str) -> Result<TaskParameters, Failure> {
    let params =
        TaskParameters::from_json(&json_arg(arg)?).map_err(|e| Failure::Usage(e.to_string()))?;
    Ok(fill_defaults(&params))
}

fn fault_script(arg: Option<&str>) -> Result<FaultScript, Failure> {
    match arg {
        None => Ok(FaultScript::default()),
        Some(a) => serde_json::from_str(&json_arg(a)?)
            .map_err(|e| Failure::Usage(format!("fault script: {e}"))),
    }
}

fn generator(kind: GeneratorKind, faults: Option<&str>) -> Result<Box<dyn Generator>, Failure> {
    Ok(match kind {
        GeneratorKind::Template => Box::new(TemplateGenerator),
        GeneratorKind::Fault => Box::new(FaultInjectingGenerator::new(fault_script(faults)?)),
        GeneratorKind::Remote => {
            let cfg = EndpointConfig::from_env().map_err(|e| Failure::Io(e.to_string()))?;
            Box::new(RemoteGenerator::new(
                CompletionClient::new(cfg).map_err(|e| Failure::Io(e.to_string()))?,
            ))
        }
    })
}

fn cmd_validate(
    file: &Path,
    registry: Option<&Path>,
    safe_height: f64,
    surface_z: f64,
    drilling: bool,
) -> Outcome {
    let text = read(file)?;
    let registry = match registry {
        Some(p) => CommandRegistry::parse(&read(p)?).map_err(|e| Failure::Usage(e.to_string()))?,
        None => CommandRegistry::standard(),
    };
    let safety =
        SafetyConfig::new(safe_height, surface_z).map_err(|e| Failure::Usage(e.to_string()))?;
    let op = if drilling {
        Operation::Drilling
    } else {
        Operation::Milling
    };
    let report = validate(&parse_program(&text), &registry, &safety, op);
    for line in report.lines() {
        println!("{line}");
    }
    if report.passed {
        Ok(())
    } else {
        Err(Failure::Rejected(format!(
            "{} diagnostics",
            report.diagnostics.len()
        )))
    }
}

fn cmd_simulate(file: &Path, svg: Option<&Path>, json: Option<&Path>) -> Outcome {
    let path =
        interpret(&parse_program(&read(file)?)).map_err(|e| Failure::Rejected(e.to_string()))?;
    let drawing = render_svg(&[(&path, PathRole::Gcode)], Canvas::default())
        .map_err(|e| Failure::Rejected(e.to_string()))?;
    if let Some(p) = svg {
        write(p, &drawing)?;
    }
    if let Some(p) = json {
        write(p, &path.to_json())?;
    }
    if svg.is_none() && json.is_none() {
        println!("{}", path.to_json());
    }
    Ok(())
}

fn cmd_compare(file: &Path, params: &str, tolerance: f64) -> Outcome {
    let text = read(file)?;
    let params = load_params(params)?;
    let result = validate_functional(&text, &params, tolerance)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    println!("{}", result.message);
    println!("d={:.6}", result.distance);
    if result.matched {
        Ok(())
    } else {
        Err(Failure::Rejected(format!(
            "distance exceeds tolerance {tolerance}"
        )))
    }
}

fn cmd_generate(
    params: &str,
    kind: GeneratorKind,
    faults: Option<&str>,
    max_iter: u32,
    out: Option<&Path>,
    trace: Option<&Path>,
) -> Outcome {
    let params = load_params(params)?;
    let required: Vec<String> = FIELD_NAMES.iter().map(|s| s.to_string()).collect();
    let missing = find_missing(&params, &required);
    if !missing.is_empty() {
        return Err(Failure::Usage(format!(
            "missing parameters: {}",
            missing.join(", ")
        )));
    }
    let generator = generator(kind, faults)?;
    let config = LoopConfig {
        max_iterations: max_iter,
        ..Default::default()
    };
    let result = match run_loop(&params, generator.as_ref(), &config) {
        Ok(r) => r,
        Err(LoopError::GeneratorUnavailable { message, partial }) => {
            if let Some(t) = trace {
                write(t, &partial.to_json())?;
            }
            return Err(Failure::Io(message));
        }
        Err(LoopError::Params(e)) => return Err(Failure::Usage(e.to_string())),
        Err(e) => return Err(Failure::Usage(e.to_string())),
    };
    if let Some(t) = trace {
        write(t, &result.to_json())?;
    }
    for rec in &result.trace {
        let d = rec
            .functional
            .as_ref()
            .map(|f| format!("{:.6}", f.distance))
            .unwrap_or_else(|| "-".into());
        let status = if rec.succeeded() { "ok" } else { "retry" };
        println!(
            "attempt {}: {status}, {} diagnostics, d={d}",
            rec.attempt,
            rec.report.diagnostics.len()
        );
    }
    match (&result.final_gcode, result.success) {
        (Some(g), true) => {
            match out {
                Some(p) => write(p, g)?,
                None => print!("{g}"),
            }
            Ok(())
        }
        _ => Err(Failure::Rejected(format!(
            "no accepted program after {} attempts",
            result.iterations_used
        ))),
    }
}

fn cmd_decompose(description: &str) -> Outcome {
    if description.trim().is_empty() {
        return Err(Failure::Usage("description is empty".into()));
    }
    for sub in decompose(description) {
        println!("{}. {}", sub.index, sub.text);
    }
    Ok(())
}

fn load_tasks(dir: &Path) -> Result<Vec<BenchmarkTask>, Failure> {
    let entries = fs::read_dir(dir).map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    let mut tasks = Vec::new();
    for f in files {
        let mut task: BenchmarkTask = serde_json::from_str(&read(&f)?)
            .map_err(|e| Failure::Usage(format!("{}: {e}", f.display())))?;
        task.params = fill_defaults(&task.params);
        tasks.push(task);
    }
    if tasks.is_empty() {
        return Err(Failure::Usage(format!(
            "no task files in {}",
            dir.display()
        )));
    }
    Ok(tasks)
}

fn cmd_bench(
    tasks: Option<&Path>,
    runs: u32,
    kind: GeneratorKind,
    faults: Option<&str>,
    csv: &Path,
    sequential: bool,
) -> Outcome {
    if runs == 0 {
        return Err(Failure::Usage("--runs must be at least 1".into()));
    }
    let tasks = match tasks {
        Some(d) => load_tasks(d)?,
        None => canonical_tasks(),
    };
    let generator = generator(kind, faults)?;
    let exec = if sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let report = run_benchmark(
        &tasks,
        generator.as_ref(),
        &LoopConfig::default(),
        runs,
        exec,
    )
    .map_err(|e| Failure::Usage(e.to_string()))?;
    write(csv, &report.to_csv())?;
    for t in &report.per_task {
        println!(
            "{}: {}/{} succeeded, avg_iterations={:.2}",
            t.task, t.successes, t.runs, t.avg_iterations
        );
    }
    println!(
        "success_rate={:.4} avg_iterations={:.4} elapsed={:.3}s",
        report.success_rate,
        report.avg_iterations,
        report.elapsed.as_secs_f64()
    );
    Ok(())
}

fn cmd_serve(host: &str, port: u16, ttl_secs: u64, cors_origins: Vec<String>) -> Outcome {
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    runtime.block_on(async {
        let addr = format!("{host}:{port}");
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Failure::Io(format!("cannot listen on {addr}: {e}")))?;
        let config = ServiceConfig {
            ttl: Duration::from_secs(ttl_secs),
            remote: EndpointConfig::from_env().ok(),
            cors_origins,
            ..Default::default()
        };
        eprintln!(
            "listening on http://{}",
            listener
                .local_addr()
                .map_err(|e| Failure::Io(e.to_string()))?
        );
        gcodeloop_service::serve(listener, config)
            .await
            .map_err(|e| Failure::Io(e.to_string()))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Validate {
            file,
            registry,
            safe_height,
            surface_z,
            drilling,
        } => cmd_validate(&file, registry.as_deref(), safe_height, surface_z, drilling),
        Command::Simulate { file, svg, json } => {
            cmd_simulate(&file, svg.as_deref(), json.as_deref())
        }
        Command::Compare {
            file,
            params,
            tolerance,
        } => cmd_compare(&file, &params, tolerance),
        Command::Generate {
            params,
            generator,
            faults,
            max_iter,
            out,
            trace,
        } => cmd_generate(
            &params,
            generator,
            faults.as_deref(),
            max_iter,
            out.as_deref(),
            trace.as_deref(),
        ),
        Command::Decompose { description } => cmd_decompose(&description),
        Command::Bench {
            tasks,
            runs,
            generator,
            faults,
            csv,
            sequential,
        } => cmd_bench(
            tasks.as_deref(),
            runs,
            generator,
            faults.as_deref(),
            &csv,
            sequential,
        ),
        Command::Serve {
            port,
            host,
            ttl_secs,
            cors_origin,
        } => cmd_serve(&host, port, ttl_secs, cors_origin),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Rejected(m) | Failure::Usage(m) | Failure::Io(m) => {
                    eprintln!("error: {m}")
                }
            }
            ExitCode::from(f.code())
        }
    }
}
