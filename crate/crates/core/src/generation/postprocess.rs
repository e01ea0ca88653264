use thiserror::Error;

use crate::gcode::{normalize, tokenize_line, Block, Command, GCodeProgram, WORD_LETTERS};
use crate::geometry::Point2;
use crate::machine::walk;
use crate::params::{Operation, TaskParameters};
use crate::registry::CommandRegistry;
use crate::validation::{validate, Diagnostic, SafetyConfig};

pub const DEFAULT_BRIDGE_HEIGHT: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PostprocessError {
    #[error("no G-code found in the model output")]
    NoGCodeFound,
    #[error("segment {index} does not validate: {}", first_line(.diagnostics))]
    SegmentInvalid {
        index: usize,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("integrated program does not validate: {}", first_line(.diagnostics))]
    IntegrationInvalid { diagnostics: Vec<Diagnostic> },
    #[error("nothing to integrate")]
    NoSegments,
}

fn first_line(d: &[Diagnostic]) -> String {
    d.first().map(|d| d.to_string()).unwrap_or_default()
}

/// True when the line opens with a comment or a well-formed word.
fn is_gcode_line(line: &str) -> bool {
    let t = line.trim_start();
    let mut chars = t.chars();
    match chars.next() {
        Some('(' | ';' | '%') => true,
        Some(c) if WORD_LETTERS.contains(&c.to_ascii_uppercase()) => {
            let rest: String = chars.take(2).collect();
            let mut r = rest.chars();
            match r.next() {
                Some(d) if d.is_ascii_digit() => true,
                Some('-' | '+' | '.') => r.next().is_some_and(|d| d.is_ascii_digit()),
                _ => false,
            }
        }
        _ => false,
    }
}

/// Drops code fences and prose, keeping every line that reads as G-code.
pub fn extract_gcode(raw: &str) -> Result<String, PostprocessError> {
    let kept: Vec<&str> = raw
        .lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .filter(|l| is_gcode_line(l))
        .map(str::trim_end)
        .collect();
    if kept.is_empty() {
        return Err(PostprocessError::NoGCodeFound);
    }
    Ok(kept.join("\n"))
}

fn is_feed_motion(w: &Command) -> bool {
    w.is('G', 1) || w.is('G', 2) || w.is('G', 3)
}

/// Rewrites spindle speeds and feed rates to the task values, and adds a
/// feed rate to the first feed move when none was set before it.
pub fn adjust_parameters(program: &GCodeProgram, params: &TaskParameters) -> GCodeProgram {
    let mut out = program.clone();
    let mut feed_seen = false;
    for block in &mut out.blocks {
        let spindle_start = block.has('M', 3) || block.has('M', 4);
        for w in &mut block.words {
            match w.letter {
                'S' if spindle_start => {
                    if let Some(s) = params.spindle_speed {
                        *w = Command::new('S', s);
                    }
                }
                'F' => {
                    if let Some(f) = params.feed_rate {
                        *w = Command::new('F', f);
                    }
                    feed_seen = true;
                }
                _ => {}
            }
        }
        if !feed_seen && block.words.iter().any(is_feed_motion) {
            if let Some(f) = params.feed_rate {
                block.words.push(Command::new('F', f));
                feed_seen = true;
            }
        }
    }
    out.source = crate::gcode::serialize(&out);
    out
}

#[derive(Debug, Clone)]
pub struct IntegrationOptions {
    pub bridge_height: f64,
    pub registry: CommandRegistry,
    pub safety: SafetyConfig,
    pub operation: Operation,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions {
            bridge_height: DEFAULT_BRIDGE_HEIGHT,
            registry: CommandRegistry::standard(),
            safety: SafetyConfig::default(),
            operation: Operation::Milling,
        }
    }
}

/// Setup codes a later segment may drop when the first one already set them.
fn is_setup_block(b: &Block) -> bool {
    b.issues.is_empty()
        && b.words.iter().all(|w| {
            [17, 21, 40, 49, 54, 90, 94]
                .into_iter()
                .any(|c| w.is('G', c))
        })
}

fn is_program_end(w: &Command) -> bool {
    w.is('M', 30) || w.is('M', 2)
}

/// First commanded XY position of a segment run on its own.
fn first_xy(segment: &GCodeProgram) -> Option<Point2> {
    let mut found = None;
    walk(segment, |_, _, outcome| {
        if found.is_none() {
            found = outcome
                .moves
                .iter()
                .find(|m| m.changes_xy())
                .map(|m| m.to.xy());
        }
    });
    found
}

fn block(text: &str) -> Block {
    tokenize_line(text, 0)
}

/// Joins validated segments into one program: the first segment's setup,
/// each body without its program end, a retract and reposition between
/// segments, and a single M30.
pub fn integrate_segments(
    segments: &[GCodeProgram],
    opts: &IntegrationOptions,
) -> Result<GCodeProgram, PostprocessError> {
    for (i, seg) in segments.iter().enumerate() {
        let report = validate(seg, &opts.registry, &opts.safety, opts.operation);
        if !report.passed {
            return Err(PostprocessError::SegmentInvalid {
                index: i + 1,
                diagnostics: report.diagnostics,
            });
        }
    }
    let program = match segments {
        [] => return Err(PostprocessError::NoSegments),
        [only] => normalize(only),
        _ => {
            let h = crate::gcode::format_number(opts.bridge_height);
            let mut blocks: Vec<Block> = Vec::new();
            for (i, seg) in segments.iter().enumerate() {
                let mut body: Vec<Block> = seg
                    .blocks
                    .iter()
                    .filter(|b| !b.is_blank() || b.comment.is_some())
                    .cloned()
                    .collect();
                if i > 0 {
                    let skip = body.iter().take_while(|b| is_setup_block(b)).count();
                    body.drain(..skip);
                    let so_far = GCodeProgram::from_blocks(blocks.clone());
                    let end = walk(&so_far, |_, _, _| {});
                    let engaged = end.spindle_on && end.z_known && end.z <= opts.safety.surface_z();
                    let rapid = if engaged { "G1" } else { "G0" };
                    let mut retract = block(&format!("{rapid} Z{h}"));
                    retract.comment = Some(format!("bridge to segment {}", i + 1));
                    blocks.push(retract);
                    if let Some(p) = first_xy(seg) {
                        blocks.push(block(&format!(
                            "G0 X{} Y{}",
                            crate::gcode::format_rounded(p.x, 4),
                            crate::gcode::format_rounded(p.y, 4)
                        )));
                    }
                }
                for mut b in body {
                    let had_end = b.words.iter().any(is_program_end);
                    b.words.retain(|w| !is_program_end(w));
                    if had_end && b.words.is_empty() && b.comment.is_none() {
                        continue;
                    }
                    blocks.push(b);
                }
            }
            blocks.push(block("M30"));
            normalize(&GCodeProgram::from_blocks(blocks))
        }
    };
    let report = validate(&program, &opts.registry, &opts.safety, opts.operation);
    if !report.passed {
        return Err(PostprocessError::IntegrationInvalid {
            diagnostics: report.diagnostics,
        });
    }
    Ok(program)
}
