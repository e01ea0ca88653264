//! XY toolpaths: interpretation of programs, arc densification, and the
//! user-defined reference path.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gcode::GCodeProgram;
use crate::geometry::Point2;
use crate::machine::{walk, InterpretError, MoveSource};
use crate::params::{ParamsError, TaskParameters};
use crate::shapes::{contours_for, Contour};

pub use crate::machine::MoveKind as SegmentKind;

/// Default chord tolerance for arc densification, mm.
pub const DEFAULT_CHORD_TOL: f64 = 0.1;
/// Minimum number of samples for a full turn.
pub const MIN_SAMPLES_PER_TURN: f64 = 8.0;
/// Start and end radius of an arc must agree to this many mm.
pub const ARC_RADIUS_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcDirection {
    Cw,
    Ccw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArcSpec {
    pub start: Point2,
    pub end: Point2,
    /// Center relative to `start` (the I and J words).
    pub center_offset: Point2,
    pub direction: ArcDirection,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ArcError {
    #[error("arc has zero radius")]
    Degenerate,
    #[error("arc start radius {start_radius} and end radius {end_radius} disagree")]
    RadiusMismatch { start_radius: f64, end_radius: f64 },
    #[error("chord tolerance must be positive")]
    InvalidTolerance,
}

impl ArcSpec {
    pub fn center(&self) -> Point2 {
        self.start
            .translate(self.center_offset.x, self.center_offset.y)
    }

    /// Radius at the start point, after checking the end point agrees.
    pub fn radius(&self) -> Result<f64, ArcError> {
        let c = self.center();
        let r = self.start.distance(c);
        if r < 1e-12 {
            return Err(ArcError::Degenerate);
        }
        let re = self.end.distance(c);
        if (r - re).abs() > ARC_RADIUS_TOL {
            return Err(ArcError::RadiusMismatch {
                start_radius: r,
                end_radius: re,
            });
        }
        Ok(r)
    }

    pub fn is_full_circle(&self) -> bool {
        self.start.distance(self.end) < 1e-9
    }

    /// Signed sweep angle in radians; positive counter-clockwise.
    pub fn sweep(&self) -> f64 {
        if self.is_full_circle() {
            return match self.direction {
                ArcDirection::Ccw => TAU,
                ArcDirection::Cw => -TAU,
            };
        }
        let c = self.center();
        let a0 = (self.start.y - c.y).atan2(self.start.x - c.x);
        let a1 = (self.end.y - c.y).atan2(self.end.x - c.x);
        let mut d = match self.direction {
            ArcDirection::Ccw => a1 - a0,
            ArcDirection::Cw => a0 - a1,
        };
        while d <= 0.0 {
            d += TAU;
        }
        match self.direction {
            ArcDirection::Ccw => d,
            ArcDirection::Cw => -d,
        }
    }
}

/// Center of the arc of radius `|r|` from `start` to `end`. Positive `r`
/// picks the minor arc, negative the major one. `None` when the chord is
/// longer than the diameter.
pub fn arc_center_from_radius(
    start: Point2,
    end: Point2,
    r: f64,
    direction: ArcDirection,
) -> Option<Point2> {
    let dx = end.x - start.x;
    let dy = end.y - start.y;
    let chord = (dx * dx + dy * dy).sqrt();
    if chord < 1e-12 || r == 0.0 {
        return None;
    }
    let half = chord / 2.0;
    let rr = r.abs();
    if half > rr + ARC_RADIUS_TOL {
        return None;
    }
    let h = (rr * rr - half * half).max(0.0).sqrt();
    let mid = Point2::new(start.x + dx / 2.0, start.y + dy / 2.0);
    // unit normal pointing left of the chord direction
    let (lx, ly) = (-dy / chord, dx / chord);
    let mut side = match direction {
        ArcDirection::Ccw => 1.0,
        ArcDirection::Cw => -1.0,
    };
    if r < 0.0 {
        side = -side;
    }
    Some(Point2::new(mid.x + side * h * lx, mid.y + side * h * ly))
}

/// Densifies an arc. The start point is excluded, the end point included;
/// every point lies on the circle and no chord's sagitta exceeds
/// `chord_tol`, with at least eight samples per full turn.
pub fn sample_arc(arc: &ArcSpec, chord_tol: f64) -> Result<Vec<Point2>, ArcError> {
    if chord_tol.is_nan() || chord_tol <= 0.0 {
        return Err(ArcError::InvalidTolerance);
    }
    let r = arc.radius()?;
    let c = arc.center();
    let sweep = arc.sweep();
    let max_step = if chord_tol >= r {
        std::f64::consts::PI
    } else {
        2.0 * (1.0 - chord_tol / r).acos()
    };
    let by_tol = (sweep.abs() / max_step).ceil();
    let by_floor = (MIN_SAMPLES_PER_TURN * sweep.abs() / TAU).ceil();
    let n = by_tol.max(by_floor).max(1.0) as usize;

    let a0 = (arc.start.y - c.y).atan2(arc.start.x - c.x);
    let mut pts: Vec<Point2> = (1..n)
        .map(|k| {
            let a = a0 + sweep * k as f64 / n as f64;
            Point2::new(c.x + r * a.cos(), c.y + r * a.sin())
        })
        .collect();
    pts.push(arc.end);
    Ok(pts)
}

/// Ordered XY points with the kind of motion between consecutive points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Toolpath {
    pub points: Vec<Point2>,
    pub segment_kinds: Vec<SegmentKind>,
}

impl Toolpath {
    pub fn starting_at(p: Point2) -> Self {
        Toolpath {
            points: vec![p],
            segment_kinds: Vec::new(),
        }
    }

    pub fn push(&mut self, p: Point2, kind: SegmentKind) {
        if self.points.is_empty() {
            self.points.push(p);
        } else {
            self.points.push(p);
            self.segment_kinds.push(kind);
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn segments(&self) -> impl Iterator<Item = (Point2, Point2, SegmentKind)> + '_ {
        self.points
            .windows(2)
            .zip(&self.segment_kinds)
            .map(|(w, k)| (w[0], w[1], *k))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("toolpath serializes")
    }
}

/// Interprets a program into its XY toolpath with the default chord
/// tolerance.
pub fn interpret(program: &GCodeProgram) -> Result<Toolpath, InterpretError> {
    interpret_with(program, DEFAULT_CHORD_TOL)
}

/// The path starts at the machine origin. Each motion block appends its XY
/// endpoint (Z-only moves repeat the current point); arcs are densified and
/// canned cycles add the hole position once.
pub fn interpret_with(program: &GCodeProgram, chord_tol: f64) -> Result<Toolpath, InterpretError> {
    trace(program, chord_tol, false)
}

/// The XY positions a program actually commands: like [`interpret_with`],
/// but the path begins at the first block that names an X or Y position
/// (or homes), so the machine origin and Z-only moves before it are left
/// out.
pub fn interpret_commanded(
    program: &GCodeProgram,
    chord_tol: f64,
) -> Result<Toolpath, InterpretError> {
    trace(program, chord_tol, true)
}

fn trace(
    program: &GCodeProgram,
    chord_tol: f64,
    commanded_only: bool,
) -> Result<Toolpath, InterpretError> {
    let mut path = if commanded_only {
        Toolpath::default()
    } else {
        Toolpath::starting_at(Point2::ORIGIN)
    };
    let mut recording = !commanded_only;
    let mut first_err = None;
    walk(program, |block, _, outcome| {
        if first_err.is_some() {
            return;
        }
        if let Some(e) = outcome.error {
            first_err = Some(e);
            return;
        }
        if !recording {
            recording = block
                .words
                .iter()
                .any(|w| w.letter == 'X' || w.letter == 'Y')
                || outcome.moves.iter().any(|m| m.source == MoveSource::Home);
            if !recording {
                return;
            }
        }
        for mv in outcome.moves.iter().filter(|m| m.on_path) {
            match &mv.arc {
                Some(arc) => match sample_arc(arc, chord_tol) {
                    Ok(pts) => pts.into_iter().for_each(|p| path.push(p, mv.kind)),
                    Err(_) => {
                        first_err = Some(InterpretError::DegenerateArc {
                            line_no: mv.line_no,
                        });
                        return;
                    }
                },
                None => path.push(mv.to.xy(), mv.kind),
            }
        }
    });
    match first_err {
        Some(e) => Err(e),
        None => Ok(path),
    }
}

/// Collapses each point closer than `eps` to the last kept point.
pub fn remove_duplicates(path: &Toolpath, eps: f64) -> Toolpath {
    let mut out = Toolpath::default();
    for (i, &p) in path.points.iter().enumerate() {
        match out.points.last() {
            None => out.points.push(p),
            Some(&last) if last.distance(p) < eps => {}
            Some(_) => out.push(p, path.segment_kinds[i - 1]),
        }
    }
    out
}

fn contour_path(contours: &[Contour], chord_tol: f64) -> Toolpath {
    let mut path = Toolpath::default();
    for c in contours {
        match c {
            Contour::Polyline(pts) => {
                for (i, p) in pts.iter().enumerate() {
                    let kind = if i == 0 {
                        SegmentKind::Rapid
                    } else {
                        SegmentKind::Feed
                    };
                    path.push(*p, kind);
                }
            }
            Contour::Holes(pts) => pts.iter().for_each(|p| path.push(*p, SegmentKind::Rapid)),
            Contour::Circle { start, center } => {
                path.push(*start, SegmentKind::Rapid);
                let arc = ArcSpec {
                    start: *start,
                    end: *start,
                    center_offset: Point2::new(center.x - start.x, center.y - start.y),
                    direction: ArcDirection::Ccw,
                };
                if let Ok(pts) = sample_arc(&arc, chord_tol) {
                    pts.into_iter()
                        .for_each(|p| path.push(p, SegmentKind::Feed));
                }
            }
        }
    }
    path
}

/// Points of the synthesized shape, suitable as a `tool_path` value.
pub fn synthesize_tool_path(
    params: &TaskParameters,
    chord_tol: f64,
) -> Result<Vec<Point2>, ParamsError> {
    let contours = crate::shapes::layout(params)?;
    Ok(contour_path(&contours, chord_tol).points)
}

pub fn construct_user_path(params: &TaskParameters) -> Result<Toolpath, ParamsError> {
    construct_user_path_with(params, DEFAULT_CHORD_TOL)
}

/// The reference path: the explicit tool path when given, otherwise the
/// synthesized shape, with the starting point prepended when it differs
/// from the first point and the home position appended when the task
/// returns home.
pub fn construct_user_path_with(
    params: &TaskParameters,
    chord_tol: f64,
) -> Result<Toolpath, ParamsError> {
    let mut path = match params.tool_path.as_ref().filter(|p| !p.is_empty()) {
        Some(pts) => {
            let kind = match params.operation {
                Some(crate::params::Operation::Drilling) => SegmentKind::Rapid,
                _ => SegmentKind::Feed,
            };
            let mut t = Toolpath::default();
            pts.iter().for_each(|p| t.push(*p, kind));
            t
        }
        None => contour_path(&contours_for(params)?, chord_tol),
    };
    if path.is_empty() {
        return Err(ParamsError::InsufficientGeometry("empty tool path".into()));
    }
    if let Some(st) = params.starting_point {
        if st != path.points[0] {
            path.points.insert(0, st);
            path.segment_kinds.insert(0, SegmentKind::Rapid);
        }
    }
    if let (Some(true), Some(home)) = (params.return_home, params.home_position) {
        if path.points.last() != Some(&home.xy()) {
            path.push(home.xy(), SegmentKind::Rapid);
        }
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gcode::parse_program;
    use crate::params::{Shape, WorkpieceDims};

    fn pts(v: &[(f64, f64)]) -> Vec<Point2> {
        v.iter().map(|&p| p.into()).collect()
    }

    #[test]
    fn interprets_rapid_then_feed() {
        let p = interpret(&parse_program("G00 X10 Y10\nG01 X20 Y10 F100")).unwrap();
        assert_eq!(p.points, pts(&[(0.0, 0.0), (10.0, 10.0), (20.0, 10.0)]));
        assert_eq!(p.segment_kinds, [SegmentKind::Rapid, SegmentKind::Feed]);
    }

    #[test]
    fn no_motion_is_just_origin() {
        let p = interpret(&parse_program("G90 G21")).unwrap();
        assert_eq!(p.points, pts(&[(0.0, 0.0)]));
        assert!(p.segment_kinds.is_empty());
    }

    #[test]
    fn interpret_errors() {
        assert!(matches!(
            interpret(&parse_program("X10")),
            Err(InterpretError::UnknownMotion { line_no: 1 })
        ));
        assert!(matches!(
            interpret(&parse_program("G0 X0 Y0\nG2 X10 Y0 I3 J0")),
            Err(InterpretError::ArcRadiusMismatch { line_no: 2, .. })
        ));
    }

    #[test]
    fn quarter_arc_samples_on_circle() {
        let arc = ArcSpec {
            start: Point2::new(10.0, 0.0),
            end: Point2::new(0.0, 10.0),
            center_offset: Point2::new(-10.0, 0.0),
            direction: ArcDirection::Ccw,
        };
        let s = sample_arc(&arc, 0.01).unwrap();
        assert_eq!(*s.last().unwrap(), arc.end);
        for p in &s {
            assert!((p.distance(Point2::ORIGIN) - 10.0).abs() <= 1e-9 * 10.0);
            assert!(p.x >= -1e-12 && p.y >= -1e-12, "stays in first quadrant");
        }
    }

    #[test]
    fn half_circle_respects_sample_floor() {
        let arc = ArcSpec {
            start: Point2::new(5.0, 0.0),
            end: Point2::new(-5.0, 0.0),
            center_offset: Point2::new(-5.0, 0.0),
            direction: ArcDirection::Ccw,
        };
        let s = sample_arc(&arc, 10.0).unwrap();
        // four chords: three interior samples plus the end point
        assert_eq!(s.len(), 4);
        assert!(s.len() > 2);
    }

    #[test]
    fn full_circle_closes() {
        let arc = ArcSpec {
            start: Point2::new(0.0, 0.0),
            end: Point2::new(0.0, 0.0),
            center_offset: Point2::new(25.0, 0.0),
            direction: ArcDirection::Cw,
        };
        let s = sample_arc(&arc, 0.1).unwrap();
        assert_ne!(s[0], arc.start);
        assert_eq!(*s.last().unwrap(), arc.start);
        // clockwise from the leftmost point heads up (+Y)
        assert!(s[0].y > 0.0);
    }

    #[test]
    fn degenerate_arc_rejected() {
        let arc = ArcSpec {
            start: Point2::new(1.0, 1.0),
            end: Point2::new(1.0, 1.0),
            center_offset: Point2::ORIGIN,
            direction: ArcDirection::Cw,
        };
        assert_eq!(sample_arc(&arc, 0.1), Err(ArcError::Degenerate));
    }

    #[test]
    fn duplicates_collapse_against_last_kept() {
        let t = |v: &[(f64, f64)]| {
            let mut p = Toolpath::default();
            pts(v)
                .into_iter()
                .for_each(|q| p.push(q, SegmentKind::Feed));
            p
        };
        assert_eq!(
            remove_duplicates(&t(&[(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)]), 1e-6).points,
            pts(&[(0.0, 0.0), (1.0, 0.0)])
        );
        let square = t(&[
            (0.0, 0.0),
            (50.0, 0.0),
            (50.0, 50.0),
            (0.0, 50.0),
            (0.0, 0.0),
        ]);
        assert_eq!(remove_duplicates(&square, 1e-6), square);
        assert_eq!(
            remove_duplicates(&t(&[(0.0, 0.0), (1e-9, 0.0), (1e-9, 1e-9)]), 1e-6).points,
            pts(&[(0.0, 0.0)])
        );
    }

    #[test]
    fn dedup_keeps_kind_of_incoming_move() {
        let mut p = Toolpath::starting_at(Point2::ORIGIN);
        p.push(Point2::ORIGIN, SegmentKind::Rapid);
        p.push(Point2::new(5.0, 0.0), SegmentKind::Feed);
        let d = remove_duplicates(&p, 1e-6);
        assert_eq!(d.segment_kinds, [SegmentKind::Feed]);
    }

    fn square_params() -> TaskParameters {
        TaskParameters {
            starting_point: Some(Point2::ORIGIN),
            tool_path: Some(pts(&[(50.0, 0.0), (50.0, 50.0), (0.0, 50.0), (0.0, 0.0)])),
            ..Default::default()
        }
    }

    #[test]
    fn start_point_prepended_when_different() {
        let p = construct_user_path(&square_params()).unwrap();
        assert_eq!(p.points.len(), 5);
        assert_eq!(p.points[0], Point2::ORIGIN);

        let mut q = square_params();
        q.tool_path = Some(pts(&[(0.0, 0.0), (50.0, 0.0)]));
        assert_eq!(
            construct_user_path(&q).unwrap().points,
            pts(&[(0.0, 0.0), (50.0, 0.0)])
        );
    }

    #[test]
    fn insufficient_geometry() {
        let p = TaskParameters {
            shape: Some(Shape::Custom),
            ..Default::default()
        };
        assert!(matches!(
            construct_user_path(&p),
            Err(ParamsError::InsufficientGeometry(_))
        ));
        assert!(construct_user_path(&TaskParameters::default()).is_err());
    }

    #[test]
    fn circle_user_path_matches_interpreted_g3() {
        let params = TaskParameters {
            shape: Some(Shape::Circle),
            workpiece_dims: Some(WorkpieceDims {
                width: 50.0,
                height: 50.0,
                thickness: None,
            }),
            ..Default::default()
        };
        let user = construct_user_path(&params).unwrap();
        let prog = parse_program("G0 X0 Y0\nG3 X0 Y0 I25 J0");
        let interp = interpret(&prog).unwrap();
        assert_eq!(interp.points[1..], user.points[..]);
    }
}
