use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::template::{template_generate, DRILL_RETRACT_Z};
use super::{GenerateError, Generator, GeneratorRequest};
use crate::gcode::format_number;
use crate::geometry::Point2;
use crate::params::{Shape, TaskParameters};
use crate::prompt::params_from_prompt;
use crate::remote::RemoteError;

/// Defect injected into an otherwise correct template program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    None,
    /// First contour move spelled `G022`.
    Syntax,
    /// A move after M30.
    Unreachable,
    /// First contour move turned into a rapid.
    Rapid,
    /// Drilling R plane lowered below the safe height.
    Drilling,
    /// Shape 10 mm too wide (or shifted 10 mm in X when it has no width).
    Functional,
    /// Prose without any G-code.
    NoGCode,
    /// Transport failure.
    Unavailable,
    /// Fixed output.
    Raw(String),
}

/// Faults by attempt; attempts past the list use `then`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultScript {
    pub attempts: Vec<Fault>,
    pub then: Fault,
}

impl FaultScript {
    pub fn new(attempts: Vec<Fault>) -> Self {
        FaultScript {
            attempts,
            then: Fault::None,
        }
    }

    pub fn always(fault: Fault) -> Self {
        FaultScript {
            attempts: Vec::new(),
            then: fault,
        }
    }

    pub fn fault_for(&self, attempt: u32) -> &Fault {
        (attempt as usize)
            .checked_sub(1)
            .and_then(|i| self.attempts.get(i))
            .unwrap_or(&self.then)
    }
}

impl Default for FaultScript {
    fn default() -> Self {
        FaultScript::new(Vec::new())
    }
}

/// Test double: template output with scripted defects per attempt, and a
/// log of every request it received.
#[derive(Debug, Default)]
pub struct FaultInjectingGenerator {
    script: FaultScript,
    sessions: HashMap<String, FaultScript>,
    log: Mutex<Vec<GeneratorRequest>>,
}

impl FaultInjectingGenerator {
    pub fn new(script: FaultScript) -> Self {
        FaultInjectingGenerator {
            script,
            ..Default::default()
        }
    }

    /// Overrides the script for one session id.
    pub fn with_session(mut self, session: impl Into<String>, script: FaultScript) -> Self {
        self.sessions.insert(session.into(), script);
        self
    }

    pub fn requests(&self) -> Vec<GeneratorRequest> {
        self.log.lock().map(|l| l.clone()).unwrap_or_default()
    }

    pub fn calls(&self) -> usize {
        self.log.lock().map(|l| l.len()).unwrap_or(0)
    }
}

impl Generator for FaultInjectingGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<String, GenerateError> {
        if let Ok(mut log) = self.log.lock() {
            log.push(request.clone());
        }
        let script = self.sessions.get(&request.session).unwrap_or(&self.script);
        let fault = script.fault_for(request.attempt);
        match fault {
            Fault::NoGCode => return Ok("I cannot help with that.".into()),
            Fault::Unavailable => {
                return Err(RemoteError::Transport("scripted outage".into()).into())
            }
            Fault::Raw(text) => return Ok(text.clone()),
            _ => {}
        }
        let params = params_from_prompt(&request.prompt).ok_or(GenerateError::NoParameters)?;
        if *fault == Fault::Functional {
            return template_generate(&mistaken(&params));
        }
        let program = template_generate(&params)?;
        Ok(inject(&program, fault))
    }
}

/// The same task with a 10 mm error in X.
fn mistaken(params: &TaskParameters) -> TaskParameters {
    let mut p = params.clone();
    match (&p.shape, p.workpiece_dims.as_mut()) {
        (Some(Shape::Square | Shape::Rectangle), Some(d)) => {
            if p.shape == Some(Shape::Square) {
                d.height = d.width;
            }
            d.width += 10.0;
            p.shape = Some(Shape::Rectangle);
        }
        (Some(Shape::Pocket { .. }), Some(d)) => d.width += 10.0,
        _ => {
            let shift = |q: Point2| q.translate(10.0, 0.0);
            p.starting_point = p.starting_point.map(shift);
            p.tool_path = p.tool_path.map(|v| v.into_iter().map(shift).collect());
        }
    }
    p
}

fn inject(program: &str, fault: &Fault) -> String {
    let mut lines: Vec<String> = program.lines().map(str::to_string).collect();
    let first_cut = lines
        .iter()
        .position(|l| (l.starts_with("G1 X") || l.starts_with("G3 X")) && !l.contains(" Z"));
    match fault {
        Fault::Syntax => {
            if let Some(i) = first_cut {
                lines[i] = format!("G022{}", &lines[i][2..]);
            } else {
                lines.insert(lines.len().saturating_sub(1), "G022 X0".into());
            }
        }
        Fault::Unreachable => lines.push("G0 X0 Y0".into()),
        Fault::Rapid => {
            if let Some(i) = first_cut.filter(|&i| lines[i].starts_with("G1")) {
                lines[i] = format!("G0{}", &lines[i][2..]);
            } else if let Some(i) = lines.iter().position(|l| l.starts_with("G1 Z-")) {
                lines.insert(i + 1, "G0 X1 Y1".into());
            }
        }
        Fault::Drilling => {
            let r = format!(" R{}", format_number(DRILL_RETRACT_Z));
            for l in lines.iter_mut().filter(|l| l.starts_with("G81")) {
                *l = l.replace(&r, " R0.5");
            }
        }
        _ => {}
    }
    let mut out = lines.join("\n");
    out.push('\n');
    out
}
