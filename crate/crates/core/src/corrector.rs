//! The bounded generate, check and regenerate loop.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::extract::{decompose, extract_parameters, fill_defaults, Extractor, SubtaskDescription};
use crate::gcode::{parse_program, serialize, GCodeProgram};
use crate::generation::{
    adjust_parameters, extract_gcode, integrate_segments, Generator, GeneratorRequest,
    IntegrationOptions, DEFAULT_BRIDGE_HEIGHT,
};
use crate::params::{find_missing, Operation, ParamsError, TaskParameters};
use crate::prompt::{render_prompt, Feedback, PromptTemplate};
use crate::registry::CommandRegistry;
use crate::similarity::{
    validate_functional_program, FunctionalOptions, FunctionalResult, DEFAULT_DEDUP_EPS,
    DEFAULT_TOLERANCE,
};
use crate::toolpath::DEFAULT_CHORD_TOL;
use crate::validation::{validate, SafetyConfig, ValidationReport};

pub const DEFAULT_MAX_ITERATIONS: u32 = 5;
pub const DEFAULT_SESSION: &str = "session";

#[derive(Debug, Clone)]
pub struct LoopConfig {
    pub max_iterations: u32,
    pub tolerance: f64,
    pub safety: SafetyConfig,
    pub dedup_eps: f64,
    pub chord_tol: f64,
    pub registry: CommandRegistry,
    pub template: PromptTemplate,
    pub bridge_height: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            tolerance: DEFAULT_TOLERANCE,
            safety: SafetyConfig::default(),
            dedup_eps: DEFAULT_DEDUP_EPS,
            chord_tol: DEFAULT_CHORD_TOL,
            registry: CommandRegistry::standard(),
            template: PromptTemplate::default(),
            bridge_height: DEFAULT_BRIDGE_HEIGHT,
        }
    }
}

impl LoopConfig {
    fn check(&self) -> Result<(), LoopError> {
        let bad = |what: &str| Err(LoopError::InvalidConfig(what.to_string()));
        if self.max_iterations < 1 {
            return bad("max_iterations must be at least 1");
        }
        for (name, v) in [
            ("tolerance", self.tolerance),
            ("dedup_eps", self.dedup_eps),
            ("chord_tol", self.chord_tol),
            ("bridge_height", self.bridge_height),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(&format!("{name} must be positive"));
            }
        }
        Ok(())
    }

    fn functional(&self) -> FunctionalOptions {
        FunctionalOptions {
            tolerance: self.tolerance,
            dedup_eps: self.dedup_eps,
            chord_tol: self.chord_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub attempt: u32,
    pub prompt: String,
    pub raw_output: String,
    pub gcode: Option<String>,
    pub report: ValidationReport,
    pub functional: Option<FunctionalResult>,
    /// Error text carried into the next prompt; empty on success.
    pub feedback: String,
    /// Generator or postprocessing failure, when there was one.
    pub error: Option<String>,
}

impl IterationRecord {
    pub fn succeeded(&self) -> bool {
        self.report.passed && self.functional.as_ref().is_some_and(|f| f.matched)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopResult {
    pub success: bool,
    pub final_gcode: Option<String>,
    pub iterations_used: u32,
    pub trace: Vec<IterationRecord>,
}

impl LoopResult {
    /// Distance of the last attempt that reached the functional check.
    pub fn final_distance(&self) -> Option<f64> {
        self.trace
            .iter()
            .rev()
            .find_map(|r| r.functional.as_ref().map(|f| f.distance))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LoopError {
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error("invalid loop configuration: {0}")]
    InvalidConfig(String),
    #[error("generator unavailable after {} attempts: {message}", .partial.iterations_used)]
    GeneratorUnavailable {
        message: String,
        partial: LoopResult,
    },
}

fn unchecked_report() -> ValidationReport {
    ValidationReport {
        diagnostics: Vec::new(),
        passed: false,
    }
}

fn feedback_text(items: &[Feedback]) -> String {
    items
        .iter()
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn run_loop(
    params: &TaskParameters,
    generator: &dyn Generator,
    config: &LoopConfig,
) -> Result<LoopResult, LoopError> {
    run_loop_in_session(params, generator, config, DEFAULT_SESSION)
}

/// Generates until a program passes every static check and matches the
/// reference path, or `max_iterations` attempts have been made. Each retry
/// prompt carries the previous attempt's errors.
pub fn run_loop_in_session(
    params: &TaskParameters,
    generator: &dyn Generator,
    config: &LoopConfig,
    session: &str,
) -> Result<LoopResult, LoopError> {
    config.check()?;
    let missing = find_missing(params, &config.template.required_keys);
    if !missing.is_empty() {
        return Err(ParamsError::MissingFields(missing).into());
    }
    let operation = params.operation.unwrap_or(Operation::Milling);
    let mut trace: Vec<IterationRecord> = Vec::new();
    let mut prior: Vec<Feedback> = Vec::new();
    let mut transport_failures = 0;

    for attempt in 1..=config.max_iterations {
        let prompt = render_prompt(params, &config.template, &prior)?;
        let mut record = IterationRecord {
            attempt,
            prompt: prompt.clone(),
            raw_output: String::new(),
            gcode: None,
            report: unchecked_report(),
            functional: None,
            feedback: String::new(),
            error: None,
        };
        let fail = |record: &mut IterationRecord, items: Vec<Feedback>| {
            record.feedback = feedback_text(&items);
            items
        };

        let raw = match generator.generate(&GeneratorRequest::new(prompt, attempt, session)) {
            Ok(raw) => {
                transport_failures = 0;
                raw
            }
            Err(e) => {
                let msg = e.to_string();
                record.error = Some(msg.clone());
                prior = fail(
                    &mut record,
                    vec![Feedback::Note(format!("generation failed: {msg}"))],
                );
                trace.push(record);
                if e.is_remote() {
                    transport_failures += 1;
                    if transport_failures >= 2 {
                        return Err(LoopError::GeneratorUnavailable {
                            message: msg,
                            partial: finish(false, None, trace),
                        });
                    }
                }
                continue;
            }
        };
        record.raw_output = raw.clone();

        let text = match extract_gcode(&raw) {
            Ok(t) => t,
            Err(e) => {
                record.error = Some(e.to_string());
                prior = fail(
                    &mut record,
                    vec![Feedback::Note(format!(
                        "{e}; reply with the G-code program only"
                    ))],
                );
                trace.push(record);
                continue;
            }
        };
        let program = adjust_parameters(&parse_program(&text), params);
        record.gcode = Some(serialize(&program));
        record.report = validate(&program, &config.registry, &config.safety, operation);
        if !record.report.passed {
            let items = record
                .report
                .diagnostics
                .iter()
                .cloned()
                .map(Feedback::Diagnostic)
                .collect();
            prior = fail(&mut record, items);
            trace.push(record);
            continue;
        }

        match validate_functional_program(&program, params, &config.functional()) {
            Ok(f) if f.matched => {
                record.functional = Some(f);
                let gcode = record.gcode.clone();
                trace.push(record);
                return Ok(finish(true, gcode, trace));
            }
            Ok(f) => {
                prior = fail(&mut record, vec![Feedback::Functional(f.clone())]);
                record.functional = Some(f);
            }
            Err(e) => {
                record.error = Some(e.to_string());
                prior = fail(
                    &mut record,
                    vec![Feedback::Note(format!(
                        "the tool path could not be simulated: {e}"
                    ))],
                );
            }
        }
        trace.push(record);
    }
    Ok(finish(false, None, trace))
}

fn finish(success: bool, final_gcode: Option<String>, trace: Vec<IterationRecord>) -> LoopResult {
    LoopResult {
        success,
        final_gcode,
        iterations_used: trace.len() as u32,
        trace,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskOutcome {
    pub subtask: SubtaskDescription,
    pub session: String,
    pub params: TaskParameters,
    pub warnings: Vec<String>,
    pub result: Option<LoopResult>,
    pub error: Option<String>,
}

impl SubtaskOutcome {
    pub fn succeeded(&self) -> bool {
        self.result.as_ref().is_some_and(|r| r.success)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiShapeResult {
    pub success: bool,
    pub subtasks: Vec<SubtaskOutcome>,
    pub integrated_gcode: Option<String>,
    pub integration_report: Option<ValidationReport>,
    pub error: Option<String>,
}

/// Splits the description into one subtask per shape, runs the loop on
/// each, and joins the accepted programs into one.
pub fn run_multi_shape(
    description: &str,
    extractor: &dyn Extractor,
    generator: &dyn Generator,
    config: &LoopConfig,
) -> Result<MultiShapeResult, LoopError> {
    config.check()?;
    if description.trim().is_empty() {
        return Err(ParamsError::EmptyDescription.into());
    }
    let mut subtasks = Vec::new();
    for sub in decompose(description) {
        let session = format!("subtask-{}", sub.index);
        let extraction = extract_parameters(&sub.text, extractor)?;
        let params = fill_defaults(&extraction.params);
        let mut outcome = SubtaskOutcome {
            subtask: sub,
            session: session.clone(),
            params: params.clone(),
            warnings: extraction.warnings,
            result: None,
            error: None,
        };
        match run_loop_in_session(&params, generator, config, &session) {
            Ok(r) => outcome.result = Some(r),
            Err(LoopError::GeneratorUnavailable { message, partial }) => {
                outcome.error = Some(message);
                outcome.result = Some(partial);
            }
            Err(e) => outcome.error = Some(e.to_string()),
        }
        subtasks.push(outcome);
    }

    let mut result = MultiShapeResult {
        success: false,
        subtasks,
        integrated_gcode: None,
        integration_report: None,
        error: None,
    };
    if let Some(bad) = result.subtasks.iter().find(|s| !s.succeeded()) {
        result.error = Some(format!("subtask {} failed", bad.subtask.index));
        return Ok(result);
    }
    let segments: Vec<GCodeProgram> = result
        .subtasks
        .iter()
        .filter_map(|s| s.result.as_ref()?.final_gcode.as_deref().map(parse_program))
        .collect();
    let all_drilling = result
        .subtasks
        .iter()
        .all(|s| s.params.operation == Some(Operation::Drilling));
    let opts = IntegrationOptions {
        bridge_height: config.bridge_height,
        registry: config.registry.clone(),
        safety: config.safety,
        operation: if all_drilling {
            Operation::Drilling
        } else {
            Operation::Milling
        },
    };
    match integrate_segments(&segments, &opts) {
        Ok(program) => {
            result.integration_report = Some(validate(
                &program,
                &opts.registry,
                &opts.safety,
                opts.operation,
            ));
            result.integrated_gcode = Some(serialize(&program));
            result.success = result.integration_report.as_ref().is_some_and(|r| r.passed);
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkTask {
    pub name: String,
    pub description: String,
    pub params: TaskParameters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub task: String,
    pub run: u32,
    pub success: bool,
    pub iterations: u32,
    pub final_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskStats {
    pub task: String,
    pub runs: u32,
    pub successes: u32,
    pub avg_iterations: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub success_rate: f64,
    pub avg_iterations: f64,
    pub per_task: Vec<TaskStats>,
    pub rows: Vec<BenchmarkRow>,
    #[serde(with = "duration_secs")]
    pub elapsed: Duration,
}

mod duration_secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        f64::deserialize(d).map(Duration::from_secs_f64)
    }
}

impl BenchmarkReport {
    /// `task,run,success,iterations,final_distance`, one row per run.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            let _ = w.serialize(r);
        }
        String::from_utf8(w.into_inner().unwrap_or_default()).unwrap_or_default()
    }
}

/// Runs the loop `runs` times on every task. Runs are independent; with
/// `Execution::Parallel` they are spread across threads.
pub fn run_benchmark(
    tasks: &[BenchmarkTask],
    generator: &dyn Generator,
    config: &LoopConfig,
    runs: u32,
    exec: Execution,
) -> Result<BenchmarkReport, LoopError> {
    if runs < 1 {
        return Err(LoopError::InvalidConfig("runs must be at least 1".into()));
    }
    config.check()?;
    let jobs: Vec<(usize, u32)> = (0..tasks.len())
        .flat_map(|t| (1..=runs).map(move |r| (t, r)))
        .collect();
    let one = |&(t, run): &(usize, u32)| -> Result<BenchmarkRow, LoopError> {
        let task = &tasks[t];
        let session = format!("{}-run{run}", task.name);
        let result = match run_loop_in_session(&task.params, generator, config, &session) {
            Ok(r) => r,
            Err(LoopError::GeneratorUnavailable { partial, .. }) => partial,
            Err(e) => return Err(e),
        };
        Ok(BenchmarkRow {
            task: task.name.clone(),
            run,
            success: result.success,
            iterations: result.iterations_used,
            final_distance: result.final_distance(),
        })
    };

    let started = Instant::now();
    let rows: Vec<BenchmarkRow> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            jobs.par_iter().map(one).collect::<Result<_, _>>()?
        }
        _ => jobs.iter().map(one).collect::<Result<_, _>>()?,
    };
    let elapsed = started.elapsed();

    let per_task = tasks
        .iter()
        .map(|t| {
            let mine: Vec<&BenchmarkRow> = rows.iter().filter(|r| r.task == t.name).collect();
            TaskStats {
                task: t.name.clone(),
                runs: mine.len() as u32,
                successes: mine.iter().filter(|r| r.success).count() as u32,
                avg_iterations: mean(mine.iter().map(|r| f64::from(r.iterations))),
            }
        })
        .collect();
    Ok(BenchmarkReport {
        success_rate: mean(rows.iter().map(|r| if r.success { 1.0 } else { 0.0 })),
        avg_iterations: mean(rows.iter().map(|r| f64::from(r.iterations))),
        per_task,
        rows,
        elapsed,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generation::{Fault, FaultInjectingGenerator, FaultScript, TemplateGenerator};
    use crate::tasks::canonical_tasks;
    use crate::validation::Rule;

    fn square() -> TaskParameters {
        canonical_tasks().remove(0).params
    }

    #[test]
    fn template_succeeds_first_time() {
        let r = run_loop(&square(), &TemplateGenerator, &LoopConfig::default()).unwrap();
        assert!(r.success);
        assert_eq!(r.iterations_used, 1);
        assert_eq!(r.final_distance(), Some(0.0));
    }

    #[test]
    fn syntax_error_then_fixed() {
        let g = FaultInjectingGenerator::new(FaultScript::new(vec![Fault::Syntax]));
        let r = run_loop(&square(), &g, &LoopConfig::default()).unwrap();
        assert!(r.success);
        assert_eq!(r.iterations_used, 2);
        assert!(r.trace[0]
            .report
            .diagnostics
            .iter()
            .all(|d| d.rule == Rule::Syntax));
        assert!(g.requests()[1].prompt.contains("G022"));
    }

    #[test]
    fn functional_failure_exhausts_budget() {
        let g = FaultInjectingGenerator::new(FaultScript::always(Fault::Functional));
        let r = run_loop(&square(), &g, &LoopConfig::default()).unwrap();
        assert!(!r.success);
        assert_eq!(r.iterations_used, 5);
        assert_eq!(g.calls(), 5);
        assert!(r
            .trace
            .iter()
            .all(|t| t.functional.as_ref().unwrap().distance == 10.0));
        assert!(g.requests()[1].prompt.contains("d=10.000000"));
    }

    #[test]
    fn no_gcode_is_a_failed_attempt() {
        let g = FaultInjectingGenerator::new(FaultScript::new(vec![Fault::NoGCode]));
        let r = run_loop(&square(), &g, &LoopConfig::default()).unwrap();
        assert!(r.success);
        assert_eq!(r.iterations_used, 2);
        assert!(!r.trace[0].report.passed);
        assert!(r.trace[0].functional.is_none());
    }

    #[test]
    fn transport_failure_retried_once() {
        let once = FaultInjectingGenerator::new(FaultScript::new(vec![Fault::Unavailable]));
        assert!(
            run_loop(&square(), &once, &LoopConfig::default())
                .unwrap()
                .success
        );
        let down = FaultInjectingGenerator::new(FaultScript::always(Fault::Unavailable));
        match run_loop(&square(), &down, &LoopConfig::default()) {
            Err(LoopError::GeneratorUnavailable { partial, .. }) => {
                assert_eq!(partial.iterations_used, 2)
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(down.calls(), 2);
    }

    #[test]
    fn incomplete_params_refused() {
        let mut p = square();
        p.feed_rate = None;
        assert!(matches!(
            run_loop(&p, &TemplateGenerator, &LoopConfig::default()),
            Err(LoopError::Params(ParamsError::MissingFields(_)))
        ));
    }

    #[test]
    fn benchmark_metrics() {
        let tasks = canonical_tasks();
        let cfg = LoopConfig::default();
        let r = run_benchmark(&tasks, &TemplateGenerator, &cfg, 2, Execution::Sequential).unwrap();
        assert_eq!((r.success_rate, r.avg_iterations), (1.0, 1.0));
        let once = FaultInjectingGenerator::new(FaultScript::new(vec![Fault::Rapid]));
        let r = run_benchmark(&tasks[..1], &once, &cfg, 3, Execution::Parallel).unwrap();
        assert_eq!(r.avg_iterations, 2.0);
        let tight = LoopConfig {
            max_iterations: 1,
            ..LoopConfig::default()
        };
        let r = run_benchmark(&tasks[..1], &once, &tight, 3, Execution::Sequential).unwrap();
        assert_eq!(r.success_rate, 0.0);
        assert!(r
            .to_csv()
            .starts_with("task,run,success,iterations,final_distance\n"));
    }

    #[test]
    fn pocket_with_islands_runs_three_loops() {
        use crate::extract::RuleBasedExtractor;
        use crate::tasks::POCKET_DESCRIPTION;
        let cfg = LoopConfig::default();
        let r = run_multi_shape(
            POCKET_DESCRIPTION,
            &RuleBasedExtractor,
            &TemplateGenerator,
            &cfg,
        )
        .unwrap();
        assert!(r.success, "{:?}", r.error);
        assert_eq!(r.subtasks.len(), 3);
        let g = r.integrated_gcode.unwrap();
        assert_eq!(g.matches("M30").count(), 1);
        assert!(r.integration_report.unwrap().passed);

        let g = FaultInjectingGenerator::new(FaultScript::default())
            .with_session("subtask-2", FaultScript::always(Fault::Functional));
        let r = run_multi_shape(POCKET_DESCRIPTION, &RuleBasedExtractor, &g, &cfg).unwrap();
        assert!(!r.success);
        assert!(r.integrated_gcode.is_none());
        assert_eq!(r.subtasks[1].result.as_ref().unwrap().iterations_used, 5);
        assert!(r.subtasks[0].succeeded() && r.subtasks[2].succeeded());
    }

    #[test]
    fn single_shape_description_is_one_loop() {
        use crate::extract::RuleBasedExtractor;
        let t = &canonical_tasks()[0];
        let r = run_multi_shape(
            &t.description,
            &RuleBasedExtractor,
            &TemplateGenerator,
            &LoopConfig::default(),
        )
        .unwrap();
        assert!(r.success);
        assert_eq!(r.subtasks.len(), 1);
        let alone = run_loop(&t.params, &TemplateGenerator, &LoopConfig::default()).unwrap();
        assert_eq!(r.integrated_gcode, alone.final_gcode);
    }
}
