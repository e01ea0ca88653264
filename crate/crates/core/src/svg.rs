//! SVG plots of toolpaths.

use std::fmt::Write;

use thiserror::Error;

use crate::gcode::format_rounded;
use crate::toolpath::{SegmentKind, Toolpath};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathRole {
    User,
    Gcode,
}

impl PathRole {
    pub fn class(self) -> &'static str {
        match self {
            PathRole::User => "user-path",
            PathRole::Gcode => "gcode-path",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SvgError {
    #[error("nothing to draw: every path has fewer than two points")]
    EmptyPath,
}

/// Output size in pixels. The drawing is scaled to fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Canvas {
    pub width: f64,
    pub height: f64,
}

impl Default for Canvas {
    fn default() -> Self {
        Canvas {
            width: 640.0,
            height: 480.0,
        }
    }
}

fn n(v: f64) -> String {
    format_rounded(v, 4)
}

/// Draws every path as individual segments, feed moves solid and rapid
/// moves dashed, with Y pointing up. Zero-length segments are skipped.
pub fn render_svg(paths: &[(&Toolpath, PathRole)], canvas: Canvas) -> Result<String, SvgError> {
    if paths.iter().all(|(p, _)| p.points.len() < 2) {
        return Err(SvgError::EmptyPath);
    }
    let all = paths.iter().flat_map(|(p, _)| p.points.iter());
    let (mut min_x, mut max_x, mut min_y, mut max_y) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in all {
        min_x = min_x.min(p.x);
        max_x = max_x.max(p.x);
        min_y = min_y.min(-p.y);
        max_y = max_y.max(-p.y);
    }
    let span = (max_x - min_x).max(max_y - min_y).max(1.0);
    let margin = 0.05 * span;
    let (vx, vy) = (min_x - margin, min_y - margin);
    let (vw, vh) = (max_x - min_x + 2.0 * margin, max_y - min_y + 2.0 * margin);
    let stroke = span / 200.0;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{}" height="{}" viewBox="{} {} {} {}">"#,
        n(canvas.width),
        n(canvas.height),
        n(vx),
        n(vy),
        n(vw),
        n(vh)
    );
    let _ = writeln!(
        out,
        "<style>line{{fill:none;stroke-width:{};stroke-linecap:round}} .user-path{{stroke:#1f77b4}} \
         .gcode-path{{stroke:#d62728}} .rapid{{stroke-dasharray:{} {}}}</style>",
        n(stroke),
        n(stroke * 4.0),
        n(stroke * 3.0)
    );
    for (path, role) in paths {
        let _ = writeln!(out, r#"<g class="{}">"#, role.class());
        for (a, b, kind) in path.segments() {
            if a == b {
                continue;
            }
            let k = match kind {
                SegmentKind::Feed => "feed",
                SegmentKind::Rapid => "rapid",
            };
            let _ = writeln!(
                out,
                r#"<line class="{} {k}" x1="{}" y1="{}" x2="{}" y2="{}"/>"#,
                role.class(),
                n(a.x),
                n(-a.y),
                n(b.x),
                n(-b.y)
            );
        }
        out.push_str("</g>\n");
    }
    out.push_str("</svg>\n");
    Ok(out.replace("=\"-0\"", "=\"0\""))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;

    fn path(kinds: &[(f64, f64, SegmentKind)]) -> Toolpath {
        let mut t = Toolpath::starting_at(Point2::ORIGIN);
        for &(x, y, k) in kinds {
            t.push(Point2::new(x, y), k);
        }
        t
    }

    #[test]
    fn rapid_dashed_feed_solid() {
        let p = path(&[
            (10.0, 0.0, SegmentKind::Rapid),
            (10.0, 10.0, SegmentKind::Feed),
        ]);
        let svg = render_svg(&[(&p, PathRole::Gcode)], Canvas::default()).unwrap();
        assert_eq!(svg.matches("class=\"gcode-path rapid\"").count(), 1);
        assert_eq!(svg.matches("class=\"gcode-path feed\"").count(), 1);
        assert!(svg.contains(r#"viewBox="-0.5 -10.5 11 11""#), "{svg}");
    }

    #[test]
    fn overlay_keeps_both_roles_and_is_deterministic() {
        let p = path(&[(5.0, 5.0, SegmentKind::Feed)]);
        let a = render_svg(
            &[(&p, PathRole::User), (&p, PathRole::Gcode)],
            Canvas::default(),
        )
        .unwrap();
        assert!(a.contains("user-path feed") && a.contains("gcode-path feed"));
        assert_eq!(
            a,
            render_svg(
                &[(&p, PathRole::User), (&p, PathRole::Gcode)],
                Canvas::default()
            )
            .unwrap()
        );
    }

    #[test]
    fn single_points_rejected() {
        let p = Toolpath::starting_at(Point2::ORIGIN);
        assert_eq!(
            render_svg(&[(&p, PathRole::Gcode)], Canvas::default()),
            Err(SvgError::EmptyPath)
        );
    }
}
