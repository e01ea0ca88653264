//! Block-by-block machine state evolution.
//!
//! [`MachineState::step`] is the single source of motion semantics: the
//! toolpath interpreter and the safety checks both fold over its output.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcode::{Block, GCodeProgram};
use crate::geometry::{Point2, Point3};
use crate::toolpath::{arc_center_from_radius, ArcDirection, ArcError, ArcSpec};

const MM_PER_INCH: f64 = 25.4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionMode {
    None,
    Rapid,
    Linear,
    ArcCw,
    ArcCcw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleKind {
    Drill,
    PeckDrill,
}

/// An active G81/G83 cycle. Depth and retract plane are absolute Z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CannedCycle {
    pub kind: CycleKind,
    pub depth_z: Option<f64>,
    pub retract_z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterpretError {
    #[error("line {line_no}: axis words with no active motion mode")]
    UnknownMotion { line_no: usize },
    #[error(
        "line {line_no}: arc start radius {start_radius} and end radius {end_radius} disagree"
    )]
    ArcRadiusMismatch {
        line_no: usize,
        start_radius: f64,
        end_radius: f64,
    },
    #[error("line {line_no}: arc has zero radius")]
    DegenerateArc { line_no: usize },
    #[error("line {line_no}: arc needs I/J offsets or an R word")]
    MissingArcCenter { line_no: usize },
    #[error("line {line_no}: canned cycle needs Z depth and R plane")]
    IncompleteCycle { line_no: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveKind {
    Rapid,
    Feed,
}

/// What produced a move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveSource {
    /// G0/G1/G2/G3, explicit or modal.
    Motion,
    /// Part of a G81/G83 expansion.
    Cycle,
    /// G28 return to home.
    Home,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Move {
    pub line_no: usize,
    pub kind: MoveKind,
    pub source: MoveSource,
    pub from: Point3,
    pub to: Point3,
    pub arc: Option<ArcSpec>,
    /// Z had been commanded at least once before this move started.
    pub z_known_before: bool,
    pub spindle_on: bool,
    /// Whether the endpoint belongs to the XY toolpath. Z-only legs of a
    /// canned cycle are not listed.
    pub on_path: bool,
}

impl Move {
    pub fn changes_xy(&self) -> bool {
        self.from.x != self.to.x || self.from.y != self.to.y
    }
}

#[derive(Debug, Default)]
pub struct StepOutcome {
    pub moves: Vec<Move>,
    pub error: Option<InterpretError>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub feed: f64,
    pub spindle_on: bool,
    pub motion_mode: MotionMode,
    pub absolute: bool,
    pub units_mm: bool,
    /// False until a Z position has been commanded; the start height of a
    /// program is not known to the checks.
    pub z_known: bool,
    pub canned: Option<CannedCycle>,
    /// Set once M2 or M30 has executed.
    pub ended: bool,
}

impl Default for MachineState {
    fn default() -> Self {
        MachineState {
            x: 0.0,
            y: 0.0,
            z: 0.0,
            feed: 0.0,
            spindle_on: false,
            motion_mode: MotionMode::None,
            absolute: true,
            units_mm: true,
            z_known: false,
            canned: None,
            ended: false,
        }
    }
}

fn motion_word(block: &Block) -> Option<u32> {
    block
        .words
        .iter()
        .rev()
        .filter(|w| w.letter == 'G')
        .find_map(|w| [0, 1, 2, 3, 80, 81, 83].into_iter().find(|&c| w.is('G', c)))
}

impl MachineState {
    pub fn position(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    fn scale(&self, v: f64) -> f64 {
        if self.units_mm {
            v
        } else {
            v * MM_PER_INCH
        }
    }

    fn axis_target(&self, block: &Block, letter: char, current: f64) -> f64 {
        match block.value(letter) {
            Some(v) if self.absolute => self.scale(v),
            Some(v) => current + self.scale(v),
            None => current,
        }
    }

    fn target(&self, block: &Block) -> Point3 {
        Point3::new(
            self.axis_target(block, 'X', self.x),
            self.axis_target(block, 'Y', self.y),
            self.axis_target(block, 'Z', self.z),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn push_move(
        &mut self,
        out: &mut StepOutcome,
        line_no: usize,
        kind: MoveKind,
        source: MoveSource,
        to: Point3,
        arc: Option<ArcSpec>,
        on_path: bool,
    ) {
        out.moves.push(Move {
            line_no,
            kind,
            source,
            from: self.position(),
            to,
            arc,
            z_known_before: self.z_known,
            spindle_on: self.spindle_on,
            on_path,
        });
        self.x = to.x;
        self.y = to.y;
        self.z = to.z;
    }

    /// Applies one block, returning the moves it produced. An interpretation
    /// error still advances the state as far as it can be determined.
    pub fn step(&mut self, block: &Block) -> StepOutcome {
        let mut out = StepOutcome::default();
        let line_no = block.line_no;

        for w in block.words.iter().filter(|w| w.letter == 'G') {
            if w.is('G', 20) {
                self.units_mm = false;
            } else if w.is('G', 21) {
                self.units_mm = true;
            } else if w.is('G', 90) {
                self.absolute = true;
            } else if w.is('G', 91) {
                self.absolute = false;
            }
        }
        if let Some(f) = block.value('F') {
            self.feed = self.scale(f);
        }
        if block.has('M', 3) || block.has('M', 4) {
            self.spindle_on = true;
        }

        let has_axis = block.has_axis_words();
        if block.has('G', 92) {
            let t = self.target(block);
            self.x = t.x;
            self.y = t.y;
            self.z = t.z;
            self.z_known |= block.value('Z').is_some();
        } else if block.has('G', 28) {
            if has_axis {
                let via = self.target(block);
                self.push_move(
                    &mut out,
                    line_no,
                    MoveKind::Rapid,
                    MoveSource::Home,
                    via,
                    None,
                    true,
                );
                self.z_known = true;
            }
            self.push_move(
                &mut out,
                line_no,
                MoveKind::Rapid,
                MoveSource::Home,
                Point3::new(0.0, 0.0, 0.0),
                None,
                true,
            );
            self.z_known = true;
        } else {
            let motion = motion_word(block);
            match motion {
                Some(c @ 0..=3) => {
                    self.canned = None;
                    self.motion_mode = match c {
                        0 => MotionMode::Rapid,
                        1 => MotionMode::Linear,
                        2 => MotionMode::ArcCw,
                        _ => MotionMode::ArcCcw,
                    };
                }
                Some(80) => {
                    self.canned = None;
                    self.motion_mode = MotionMode::None;
                }
                Some(c) => {
                    let kind = if c == 81 {
                        CycleKind::Drill
                    } else {
                        CycleKind::PeckDrill
                    };
                    let prev = self.canned.filter(|cy| cy.kind == kind);
                    self.canned = Some(CannedCycle {
                        kind,
                        depth_z: prev.and_then(|p| p.depth_z),
                        retract_z: prev.and_then(|p| p.retract_z),
                    });
                }
                None => {}
            }

            if let Some(mut cycle) = self.canned {
                if let Some(r) = block.value('R') {
                    cycle.retract_z = Some(self.scale(r));
                }
                if let Some(z) = block.value('Z') {
                    cycle.depth_z = Some(self.scale(z));
                }
                self.canned = Some(cycle);
                if has_axis {
                    self.run_cycle(&mut out, block, cycle);
                }
            } else if has_axis {
                let to = self.target(block);
                match self.motion_mode {
                    MotionMode::None => {
                        out.error = Some(InterpretError::UnknownMotion { line_no });
                    }
                    MotionMode::Rapid => self.push_move(
                        &mut out,
                        line_no,
                        MoveKind::Rapid,
                        MoveSource::Motion,
                        to,
                        None,
                        true,
                    ),
                    MotionMode::Linear => self.push_move(
                        &mut out,
                        line_no,
                        MoveKind::Feed,
                        MoveSource::Motion,
                        to,
                        None,
                        true,
                    ),
                    MotionMode::ArcCw | MotionMode::ArcCcw => {
                        let direction = if self.motion_mode == MotionMode::ArcCw {
                            ArcDirection::Cw
                        } else {
                            ArcDirection::Ccw
                        };
                        let arc = self.arc_spec(block, to, direction);
                        let arc = match arc {
                            Ok(a) => Some(a),
                            Err(e) => {
                                out.error = Some(e);
                                None
                            }
                        };
                        self.push_move(
                            &mut out,
                            line_no,
                            MoveKind::Feed,
                            MoveSource::Motion,
                            to,
                            arc,
                            true,
                        );
                    }
                }
            }
            if block.value('Z').is_some() && out.error.is_none() {
                self.z_known = true;
            }
        }

        if block.has('M', 5) || block.has('M', 2) || block.has('M', 30) {
            self.spindle_on = false;
        }
        if block.has('M', 2) || block.has('M', 30) {
            self.ended = true;
        }
        out
    }

    fn arc_spec(
        &self,
        block: &Block,
        to: Point3,
        direction: ArcDirection,
    ) -> Result<ArcSpec, InterpretError> {
        let line_no = block.line_no;
        let start = Point2::new(self.x, self.y);
        let end = to.xy();
        let center_offset = match (block.value('I'), block.value('J'), block.value('R')) {
            (None, None, Some(r)) => {
                let center = arc_center_from_radius(start, end, self.scale(r), direction).ok_or(
                    InterpretError::ArcRadiusMismatch {
                        line_no,
                        start_radius: self.scale(r).abs(),
                        end_radius: start.distance(end) / 2.0,
                    },
                )?;
                Point2::new(center.x - start.x, center.y - start.y)
            }
            (None, None, None) => return Err(InterpretError::MissingArcCenter { line_no }),
            (i, j, _) => Point2::new(self.scale(i.unwrap_or(0.0)), self.scale(j.unwrap_or(0.0))),
        };
        let arc = ArcSpec {
            start,
            end,
            center_offset,
            direction,
        };
        arc.radius().map(|_| arc).map_err(|e| match e {
            ArcError::Degenerate => InterpretError::DegenerateArc { line_no },
            ArcError::RadiusMismatch {
                start_radius,
                end_radius,
            } => InterpretError::ArcRadiusMismatch {
                line_no,
                start_radius,
                end_radius,
            },
            ArcError::InvalidTolerance => InterpretError::DegenerateArc { line_no },
        })
    }

    /// Position over the hole, drill to depth, retract to the R plane.
    fn run_cycle(&mut self, out: &mut StepOutcome, block: &Block, cycle: CannedCycle) {
        let line_no = block.line_no;
        let (Some(depth), Some(retract)) = (cycle.depth_z, cycle.retract_z) else {
            out.error = Some(InterpretError::IncompleteCycle { line_no });
            return;
        };
        let x = self.axis_target(block, 'X', self.x);
        let y = self.axis_target(block, 'Y', self.y);
        let z0 = self.z;
        self.push_move(
            out,
            line_no,
            MoveKind::Rapid,
            MoveSource::Cycle,
            Point3::new(x, y, z0),
            None,
            true,
        );
        if z0 != retract {
            self.push_move(
                out,
                line_no,
                MoveKind::Rapid,
                MoveSource::Cycle,
                Point3::new(x, y, retract),
                None,
                false,
            );
        }
        self.z_known = true;
        self.push_move(
            out,
            line_no,
            MoveKind::Feed,
            MoveSource::Cycle,
            Point3::new(x, y, depth),
            None,
            false,
        );
        self.push_move(
            out,
            line_no,
            MoveKind::Rapid,
            MoveSource::Cycle,
            Point3::new(x, y, retract),
            None,
            false,
        );
    }
}

/// Runs every block through a fresh [`MachineState`], handing each outcome
/// to `visit`.
pub fn walk<F>(program: &GCodeProgram, mut visit: F) -> MachineState
where
    F: FnMut(&Block, &MachineState, StepOutcome),
{
    let mut state = MachineState::default();
    for block in &program.blocks {
        let outcome = state.step(block);
        visit(block, &state, outcome);
    }
    state
}
