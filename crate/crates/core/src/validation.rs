//! Static checks over a parsed program.
//!
//! [`validate`] runs the syntax check first and stops there if it finds
//! anything; otherwise the unreachable-code, rapid-while-cutting and (for
//! drilling) safe-drilling checks are concatenated in that order.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcode::{format_number, Block, GCodeProgram};
use crate::machine::{walk, InterpretError, Move, MoveKind, MoveSource};
use crate::params::Operation;
use crate::registry::CommandRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rule {
    Syntax,
    Unreachable,
    RapidWhileCutting,
    UnsafeDrillMove,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::Syntax => "SYNTAX",
            Rule::Unreachable => "UNREACHABLE",
            Rule::RapidWhileCutting => "RAPID_WHILE_CUTTING",
            Rule::UnsafeDrillMove => "UNSAFE_DRILL_MOVE",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Severity {
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub rule: Rule,
    pub line_no: usize,
    pub message: String,
    pub severity: Severity,
}

impl Diagnostic {
    pub fn new(rule: Rule, line_no: usize, message: impl Into<String>) -> Self {
        Diagnostic {
            rule,
            line_no,
            message: message.into(),
            severity: Severity::Error,
        }
    }
}

/// `LINE <n>: <RULE>: <message>`
impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "LINE {}: {}: {}", self.line_no, self.rule, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub diagnostics: Vec<Diagnostic>,
    pub passed: bool,
}

impl ValidationReport {
    pub fn from_diagnostics(diagnostics: Vec<Diagnostic>) -> Self {
        let passed = diagnostics.is_empty();
        ValidationReport {
            diagnostics,
            passed,
        }
    }

    pub fn lines(&self) -> Vec<String> {
        self.diagnostics.iter().map(|d| d.to_string()).collect()
    }
}

#[derive(Debug, Error, PartialEq)]
#[error("safe height {safe_height} must be above the stock surface {surface_z}")]
pub struct SafetyConfigError {
    pub safe_height: f64,
    pub surface_z: f64,
}

/// Heights used by the safety checks, mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyConfig {
    safe_height: f64,
    surface_z: f64,
}

impl Default for SafetyConfig {
    fn default() -> Self {
        SafetyConfig {
            safe_height: 2.0,
            surface_z: 0.0,
        }
    }
}

impl SafetyConfig {
    pub fn new(safe_height: f64, surface_z: f64) -> Result<Self, SafetyConfigError> {
        if safe_height > surface_z {
            Ok(SafetyConfig {
                safe_height,
                surface_z,
            })
        } else {
            Err(SafetyConfigError {
                safe_height,
                surface_z,
            })
        }
    }

    pub fn safe_height(&self) -> f64 {
        self.safe_height
    }

    pub fn surface_z(&self) -> f64 {
        self.surface_z
    }
}

fn block_text(block: &Block) -> String {
    let mut s = block.to_string();
    if let Some(i) = s.find(" ;") {
        s.truncate(i);
    }
    s
}

pub fn check_syntax(program: &GCodeProgram, registry: &CommandRegistry) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    walk(program, |block, _, outcome| {
        let before = out.len();
        for issue in &block.issues {
            out.push(Diagnostic::new(
                Rule::Syntax,
                block.line_no,
                format!("malformed word: {issue}"),
            ));
        }
        for w in block
            .words
            .iter()
            .filter(|w| w.letter == 'G' || w.letter == 'M')
        {
            if !registry.is_recognized(w) {
                out.push(Diagnostic::new(
                    Rule::Syntax,
                    block.line_no,
                    format!("unrecognized command '{}'", w.raw),
                ));
            }
        }
        if let (Some(InterpretError::UnknownMotion { .. }), true) =
            (&outcome.error, out.len() == before)
        {
            out.push(Diagnostic::new(
                Rule::Syntax,
                block.line_no,
                format!(
                    "'{}' has axis words but no motion command is active",
                    block_text(block)
                ),
            ));
        }
    });
    out
}

pub fn check_unreachable(program: &GCodeProgram) -> Vec<Diagnostic> {
    let Some(end) = program.blocks.iter().find(|b| b.has('M', 30)) else {
        return Vec::new();
    };
    program.blocks[end.line_no..]
        .iter()
        .filter(|b| !b.is_blank())
        .map(|b| {
            Diagnostic::new(
                Rule::Unreachable,
                b.line_no,
                format!(
                    "'{}' follows M30 on line {} and never executes",
                    block_text(b),
                    end.line_no
                ),
            )
        })
        .collect()
}

/// Visits the moves of every block that executes before program end.
fn reachable_moves<F>(program: &GCodeProgram, mut visit: F)
where
    F: FnMut(&Block, &[Move]),
{
    let mut ended = false;
    walk(program, |block, state, outcome| {
        if !ended {
            visit(block, &outcome.moves);
        }
        ended = state.ended;
    });
}

pub fn check_rapid_while_cutting(program: &GCodeProgram, cfg: &SafetyConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    reachable_moves(program, |block, moves| {
        let hit = moves.iter().find(|m| {
            m.source == MoveSource::Motion
                && m.kind == MoveKind::Rapid
                && m.spindle_on
                && m.z_known_before
                && m.from.z <= cfg.surface_z
        });
        if let Some(m) = hit {
            out.push(Diagnostic::new(
                Rule::RapidWhileCutting,
                block.line_no,
                format!(
                    "rapid move '{}' while cutting: spindle on at Z={} (stock surface {})",
                    block_text(block),
                    format_number(m.from.z),
                    format_number(cfg.surface_z)
                ),
            ));
        }
    });
    out
}

pub fn check_safe_drilling(program: &GCodeProgram, cfg: &SafetyConfig) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    reachable_moves(program, |block, moves| {
        let hit = moves.iter().find(|m| {
            m.changes_xy()
                && m.z_known_before
                && m.from.z < cfg.safe_height
                && m.to.z < cfg.safe_height
        });
        if let Some(m) = hit {
            out.push(Diagnostic::new(
                Rule::UnsafeDrillMove,
                block.line_no,
                format!(
                    "horizontal move to X{} Y{} at Z={} below safe height {}",
                    format_number(m.to.x),
                    format_number(m.to.y),
                    format_number(m.from.z),
                    format_number(cfg.safe_height)
                ),
            ));
        }
    });
    out
}

pub fn validate(
    program: &GCodeProgram,
    registry: &CommandRegistry,
    cfg: &SafetyConfig,
    operation: Operation,
) -> ValidationReport {
    let syntax = check_syntax(program, registry);
    if !syntax.is_empty() {
        return ValidationReport::from_diagnostics(syntax);
    }
    let mut diags = check_unreachable(program);
    diags.extend(check_rapid_while_cutting(program, cfg));
    if operation == Operation::Drilling {
        diags.extend(check_safe_drilling(program, cfg));
    }
    ValidationReport::from_diagnostics(diags)
}
