//! Structured prompt rendering with error feedback.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::gcode::format_number;
use crate::geometry::Point2;
use crate::params::{find_missing, ParamsError, TaskParameters, FIELD_NAMES};
use crate::similarity::FunctionalResult;
use crate::validation::Diagnostic;

pub const PARAMETERS_HEADER: &str = "PARAMETERS JSON:";
pub const ERRORS_HEADER: &str = "PREVIOUS ERRORS:";

const DEFAULT_BODY: &str = "\
You are a CNC programming assistant. Write a complete G-code program for the machining task below.
Material: {material}
Operation: {operation}
Shape: {shape}
Workpiece dimensions: {workpiece_dims}
Starting point: {starting_point}
Home position: {home_position}
Tool path: {tool_path}
Return to home position when finished: {return_home}
Depth of cut: {depth_of_cut} mm
Feed rate: {feed_rate} mm/min
Spindle speed: {spindle_speed} rpm
Use millimeters (G21) and absolute positioning (G90). Retract above the stock before any rapid move.
Reply with the G-code program only and end it with M30.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub required_keys: Vec<String>,
    pub body: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            required_keys: FIELD_NAMES.iter().map(|s| s.to_string()).collect(),
            body: DEFAULT_BODY.to_string(),
        }
    }
}

/// One item of feedback carried into the next prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum Feedback {
    Diagnostic(Diagnostic),
    Functional(FunctionalResult),
    Note(String),
}

impl fmt::Display for Feedback {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feedback::Diagnostic(d) => write!(f, "{d}"),
            Feedback::Functional(r) => f.write_str(&r.feedback_line()),
            Feedback::Note(n) => f.write_str(n),
        }
    }
}

fn point(p: Point2) -> String {
    format!("({}, {})", format_number(p.x), format_number(p.y))
}

fn field_text(params: &TaskParameters, key: &str) -> String {
    let unset = || "unspecified".to_string();
    match key {
        "material" => params.material.clone().unwrap_or_else(unset),
        "operation" => params
            .operation
            .map(|o| o.to_string())
            .unwrap_or_else(unset),
        "shape" => params
            .shape
            .as_ref()
            .map(|s| s.to_string())
            .unwrap_or_else(unset),
        "workpiece_dims" => params
            .workpiece_dims
            .map(|d| match d.thickness {
                Some(t) => format!(
                    "{} x {} x {} mm",
                    format_number(d.width),
                    format_number(d.height),
                    format_number(t)
                ),
                None => format!(
                    "{} x {} mm",
                    format_number(d.width),
                    format_number(d.height)
                ),
            })
            .unwrap_or_else(unset),
        "starting_point" => params.starting_point.map(point).unwrap_or_else(unset),
        "home_position" => params
            .home_position
            .map(|p| {
                format!(
                    "({}, {}, {})",
                    format_number(p.x),
                    format_number(p.y),
                    format_number(p.z)
                )
            })
            .unwrap_or_else(unset),
        "tool_path" => params
            .tool_path
            .as_ref()
            .map(|pts| {
                pts.iter()
                    .map(|p| point(*p))
                    .collect::<Vec<_>>()
                    .join(" -> ")
            })
            .unwrap_or_else(unset),
        "return_home" => params
            .return_home
            .map(|b| if b { "yes" } else { "no" }.to_string())
            .unwrap_or_else(unset),
        "depth_of_cut" => params.depth_of_cut.map(format_number).unwrap_or_else(unset),
        "feed_rate" => params.feed_rate.map(format_number).unwrap_or_else(unset),
        "spindle_speed" => params
            .spindle_speed
            .map(format_number)
            .unwrap_or_else(unset),
        _ => unset(),
    }
}

/// Renders the template with every parameter substituted, a machine-readable
/// parameter line, and the previous attempt's errors when there are any.
pub fn render_prompt(
    params: &TaskParameters,
    template: &PromptTemplate,
    prior_errors: &[Feedback],
) -> Result<String, ParamsError> {
    let missing = find_missing(params, &template.required_keys);
    if !missing.is_empty() {
        return Err(ParamsError::MissingFields(missing));
    }
    let mut body = template.body.clone();
    for key in FIELD_NAMES {
        body = body.replace(&format!("{{{key}}}"), &field_text(params, key));
    }
    let mut out = format!("{body}\n\n{PARAMETERS_HEADER}\n{}\n", params.to_json());
    if !prior_errors.is_empty() {
        out.push_str(&format!(
            "\n{ERRORS_HEADER}\nThe previous program was rejected. Fix these problems:\n"
        ));
        for e in prior_errors {
            out.push_str(&e.to_string());
            out.push('\n');
        }
    }
    Ok(out)
}

/// Recovers the parameters embedded by [`render_prompt`].
pub fn params_from_prompt(prompt: &str) -> Option<TaskParameters> {
    let mut lines = prompt.lines();
    lines.find(|l| l.trim() == PARAMETERS_HEADER)?;
    serde_json::from_str(lines.next()?.trim()).ok()
}
