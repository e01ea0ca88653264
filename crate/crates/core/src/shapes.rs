//! Canonical contours for the primitive shapes.
//!
//! Every shape is anchored at the task's starting point (the origin when
//! none is given) and the contour begins there:
//!
//! * rectangle, square, pocket boundary: anchor is the lower-left corner,
//!   width along +X and height along +Y, traversed counter-clockwise;
//! * regular polygon: circumradius `min(w, h) / 2`, anchor is the leftmost
//!   vertex, counter-clockwise;
//! * circle: radius `min(w, h) / 2`, anchor is the leftmost point, one full
//!   counter-clockwise turn;
//! * hole grid: first hole at the anchor, rows along +Y, columns along +X,
//!   visited row by row in alternating direction;
//! * pocket islands: each a full circle starting at its leftmost point.

use std::f64::consts::PI;

use crate::geometry::Point2;
use crate::params::{Operation, ParamsError, Shape, TaskParameters};

#[derive(Debug, Clone, PartialEq)]
pub enum Contour {
    /// Open or closed polyline cut at depth.
    Polyline(Vec<Point2>),
    /// Full counter-clockwise circle from `start` around `center`.
    Circle { start: Point2, center: Point2 },
    /// Drill positions.
    Holes(Vec<Point2>),
}

impl Contour {
    pub fn start(&self) -> Option<Point2> {
        match self {
            Contour::Polyline(p) | Contour::Holes(p) => p.first().copied(),
            Contour::Circle { start, .. } => Some(*start),
        }
    }
}

fn insufficient(msg: &str) -> ParamsError {
    ParamsError::InsufficientGeometry(msg.to_string())
}

/// Regular polygon vertices, closed (first vertex repeated at the end).
pub fn regular_polygon(anchor: Point2, sides: u32, circumradius: f64) -> Vec<Point2> {
    let center = anchor.translate(circumradius, 0.0);
    let mut pts: Vec<Point2> = (0..sides)
        .map(|k| {
            if k == 0 {
                return anchor;
            }
            let a = PI + 2.0 * PI * f64::from(k) / f64::from(sides);
            Point2::new(
                center.x + circumradius * a.cos(),
                center.y + circumradius * a.sin(),
            )
        })
        .collect();
    pts.push(anchor);
    pts
}

pub fn rectangle(anchor: Point2, width: f64, height: f64) -> Vec<Point2> {
    vec![
        anchor,
        anchor.translate(width, 0.0),
        anchor.translate(width, height),
        anchor.translate(0.0, height),
        anchor,
    ]
}

pub fn hole_grid(anchor: Point2, rows: u32, cols: u32, spacing: f64) -> Vec<Point2> {
    let mut holes = Vec::with_capacity((rows * cols) as usize);
    for r in 0..rows {
        let cols_iter: Box<dyn Iterator<Item = u32>> = if r % 2 == 0 {
            Box::new(0..cols)
        } else {
            Box::new((0..cols).rev())
        };
        for c in cols_iter {
            holes.push(anchor.translate(f64::from(c) * spacing, f64::from(r) * spacing));
        }
    }
    holes
}

/// Contours synthesized from shape and dimensions, ignoring any explicit
/// tool path.
pub fn layout(params: &TaskParameters) -> Result<Vec<Contour>, ParamsError> {
    let anchor = params.starting_point.unwrap_or(Point2::ORIGIN);
    let shape = params
        .shape
        .as_ref()
        .ok_or_else(|| insufficient("no shape given"))?;
    let dims = params.workpiece_dims;
    let need_dims = || dims.ok_or_else(|| insufficient("shape needs workpiece dimensions"));

    let contours = match shape {
        Shape::Square => {
            let d = need_dims()?;
            vec![Contour::Polyline(rectangle(anchor, d.width, d.width))]
        }
        Shape::Rectangle => {
            let d = need_dims()?;
            vec![Contour::Polyline(rectangle(anchor, d.width, d.height))]
        }
        Shape::Polygon(n) => {
            let d = need_dims()?;
            if *n < 3 {
                return Err(insufficient("a polygon needs at least 3 sides"));
            }
            vec![Contour::Polyline(regular_polygon(
                anchor,
                *n,
                d.width.min(d.height) / 2.0,
            ))]
        }
        Shape::Circle => {
            let d = need_dims()?;
            let r = d.width.min(d.height) / 2.0;
            vec![Contour::Circle {
                start: anchor,
                center: anchor.translate(r, 0.0),
            }]
        }
        Shape::HoleGrid(g) => vec![Contour::Holes(hole_grid(
            anchor,
            g.rows,
            g.cols,
            g.spacing.mm(),
        ))],
        Shape::Pocket { islands } => {
            let d = need_dims()?;
            let mut v = vec![Contour::Polyline(rectangle(anchor, d.width, d.height))];
            v.extend(islands.iter().map(|i| Contour::Circle {
                start: i.center.translate(-i.radius, 0.0),
                center: i.center,
            }));
            v
        }
        Shape::Custom => return Err(insufficient("a custom shape needs an explicit tool path")),
    };
    Ok(contours)
}

/// Contours to machine: the shape layout, or the explicit tool path when
/// the shape cannot be synthesized.
pub fn contours_for(params: &TaskParameters) -> Result<Vec<Contour>, ParamsError> {
    match layout(params) {
        Ok(c) => Ok(c),
        Err(e) => match params.tool_path.as_ref().filter(|p| !p.is_empty()) {
            Some(path) if params.operation == Some(Operation::Drilling) => {
                Ok(vec![Contour::Holes(path.clone())])
            }
            Some(path) => Ok(vec![Contour::Polyline(path.clone())]),
            None => Err(e),
        },
    }
}
