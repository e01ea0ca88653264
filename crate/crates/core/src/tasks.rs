//! The six benchmark tasks: square, hexagon, irregular pentagon, circle,
//! pocket with two circular islands, and a 3x3 hole grid.

use crate::corrector::BenchmarkTask;
use crate::extract::{fill_defaults, DEFAULT_HOME};
use crate::geometry::Point2;
use crate::params::{GridSpec, Island, Operation, Shape, Spacing, TaskParameters, WorkpieceDims};

pub const POCKET_DESCRIPTION: &str = "Mill a 100x60 mm rectangular pocket in aluminum featuring two internal \
     circular islands of radius 8 mm centered at (30, 30) and (70, 30), depth 2 mm, feed 100 mm/min, \
     spindle 1200 rpm, start at (0, 0), home at (0, 0, 10), do not return home.";

#[allow(clippy::too_many_arguments)]
fn task(
    material: &str,
    operation: Operation,
    shape: Shape,
    (w, h): (f64, f64),
    start: Point2,
    return_home: bool,
    (depth, feed, speed): (f64, f64, f64),
    tool_path: Option<Vec<Point2>>,
) -> TaskParameters {
    fill_defaults(&TaskParameters {
        material: Some(material.into()),
        operation: Some(operation),
        shape: Some(shape),
        workpiece_dims: Some(WorkpieceDims {
            width: w,
            height: h,
            thickness: None,
        }),
        starting_point: Some(start),
        home_position: Some(DEFAULT_HOME),
        tool_path,
        return_home: Some(return_home),
        depth_of_cut: Some(depth),
        feed_rate: Some(feed),
        spindle_speed: Some(speed),
    })
}

fn named(name: &str, description: &str, params: TaskParameters) -> BenchmarkTask {
    BenchmarkTask {
        name: name.into(),
        description: description.into(),
        params,
    }
}

pub fn canonical_tasks() -> Vec<BenchmarkTask> {
    use Operation::*;
    let o = Point2::ORIGIN;
    let pentagon: Vec<Point2> = [
        (0.0, 0.0),
        (40.0, 0.0),
        (50.0, 30.0),
        (20.0, 50.0),
        (-10.0, 30.0),
        (0.0, 0.0),
    ]
    .into_iter()
    .map(Point2::from)
    .collect();
    vec![
        named(
            "square",
            "Mill a 50x50 mm square in aluminum, depth 2 mm, feed 100 mm/min, spindle 1200 rpm, \
             start at (0, 0), home at (0, 0, 10), do not return home.",
            task("aluminum", Milling, Shape::Square, (50.0, 50.0), o, false, (2.0, 100.0, 1200.0), None),
        ),
        named(
            "hexagon",
            "Mill a regular hexagon of diameter 40 mm in brass, depth 1.5 mm, feed 120 mm/min, \
             spindle 1500 rpm, start at (0, 0), home at (0, 0, 10), then return home.",
            task("brass", Milling, Shape::Polygon(6), (40.0, 40.0), o, true, (1.5, 120.0, 1500.0), None),
        ),
        named(
            "irregular_pentagon",
            "Mill an irregular pentagon on 60x60 mm stock in aluminum through (0, 0), (40, 0), (50, 30), \
             (20, 50), (-10, 30), (0, 0), depth 1 mm, feed 100 mm/min, spindle 1200 rpm, start at (0, 0), \
             home at (0, 0, 10), do not return home.",
            task(
                "aluminum",
                Milling,
                Shape::Custom,
                (60.0, 60.0),
                o,
                false,
                (1.0, 100.0, 1200.0),
                Some(pentagon),
            ),
        ),
        named(
            "circle",
            "Mill a circle of diameter 50 mm centered at (25, 25) in acrylic, depth 1 mm, feed 200 mm/min, \
             spindle 10000 rpm, home at (0, 0, 10), do not return home.",
            task(
                "acrylic",
                Milling,
                Shape::Circle,
                (50.0, 50.0),
                Point2::new(0.0, 25.0),
                false,
                (1.0, 200.0, 10000.0),
                None,
            ),
        ),
        named(
            "pocket_islands",
            POCKET_DESCRIPTION,
            task(
                "aluminum",
                Milling,
                Shape::Pocket {
                    islands: vec![
                        Island {
                            center: Point2::new(30.0, 30.0),
                            radius: 8.0,
                        },
                        Island {
                            center: Point2::new(70.0, 30.0),
                            radius: 8.0,
                        },
                    ],
                },
                (100.0, 60.0),
                o,
                false,
                (2.0, 100.0, 1200.0),
                None,
            ),
        ),
        named(
            "hole_grid",
            "Drill a 3x3 grid of holes spaced 10 mm apart in a 40x40 mm aluminum plate, 5 mm deep, \
             feed 80 mm/min, spindle 1500 rpm, start at (5, 5), home at (0, 0, 10), return home.",
            task(
                "aluminum",
                Drilling,
                Shape::HoleGrid(GridSpec {
                    rows: 3,
                    cols: 3,
                    spacing: Spacing::from_mm(10.0),
                }),
                (40.0, 40.0),
                Point2::new(5.0, 5.0),
                true,
                (5.0, 80.0, 1500.0),
                None,
            ),
        ),
    ]
}
