use super::{GenerateError, Generator, GeneratorRequest};
use crate::gcode::format_rounded;
use crate::geometry::Point2;
use crate::params::{find_missing, ParamsError, TaskParameters, FIELD_NAMES};
use crate::prompt::params_from_prompt;
use crate::shapes::{contours_for, Contour};

/// Height for rapid positioning above the stock.
pub const CLEARANCE_Z: f64 = 5.0;
/// R plane of the drilling cycles.
pub const DRILL_RETRACT_Z: f64 = 3.0;

/// Deterministic generator: reads the parameter block from the prompt and
/// emits [`template_generate`] output.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateGenerator;

impl Generator for TemplateGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<String, GenerateError> {
        let params = params_from_prompt(&request.prompt).ok_or(GenerateError::NoParameters)?;
        template_generate(&params)
    }
}

fn c(v: f64) -> String {
    format_rounded(v, 4)
}

fn xy(p: Point2) -> String {
    format!("X{} Y{}", c(p.x), c(p.y))
}

/// A complete program for a complete parameter set: preamble, spindle
/// start, one cut per contour with retracts between, optional return home,
/// spindle stop and M30.
pub fn template_generate(params: &TaskParameters) -> Result<String, GenerateError> {
    let required: Vec<String> = FIELD_NAMES.iter().map(|s| s.to_string()).collect();
    let missing = find_missing(params, &required);
    if !missing.is_empty() {
        return Err(ParamsError::MissingFields(missing).into());
    }
    let contours =
        contours_for(params).map_err(|e| GenerateError::UnsupportedShape(e.to_string()))?;
    let (Some(start), Some(home), Some(depth), Some(feed), Some(speed)) = (
        params.starting_point,
        params.home_position,
        params.depth_of_cut,
        params.feed_rate,
        params.spindle_speed,
    ) else {
        unreachable!("completeness checked above");
    };

    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line("G21".into());
    line("G90".into());
    line("G17".into());
    line(format!("G0 Z{}", c(CLEARANCE_Z)));
    line(format!("G0 {}", xy(start)));
    line(format!("M3 S{}", c(speed)));

    let mut at = start;
    let plunge = format!("G1 Z{} F{}", c(-depth), c(feed));
    let retract = format!("G1 Z{}", c(CLEARANCE_Z));
    for contour in &contours {
        match contour {
            Contour::Polyline(pts) => {
                let Some(first) = pts.first() else { continue };
                if *first != at {
                    line(format!("G0 {}", xy(*first)));
                }
                line(plunge.clone());
                for p in &pts[1..] {
                    line(format!("G1 {}", xy(*p)));
                }
                line(retract.clone());
                at = *pts.last().unwrap_or(first);
            }
            Contour::Circle { start: s, center } => {
                if *s != at {
                    line(format!("G0 {}", xy(*s)));
                }
                line(plunge.clone());
                line(format!(
                    "G3 {} I{} J{}",
                    xy(*s),
                    c(center.x - s.x),
                    c(center.y - s.y)
                ));
                line(retract.clone());
                at = *s;
            }
            Contour::Holes(holes) => {
                for (i, h) in holes.iter().enumerate() {
                    if i == 0 {
                        line(format!(
                            "G81 {} Z{} R{} F{}",
                            xy(*h),
                            c(-depth),
                            c(DRILL_RETRACT_Z),
                            c(feed)
                        ));
                    } else {
                        line(xy(*h));
                    }
                    at = *h;
                }
                line("G80".into());
                line(format!("G0 Z{}", c(CLEARANCE_Z)));
            }
        }
    }
    if params.return_home == Some(true) {
        line(format!("G0 {}", xy(home.xy())));
        line(format!("G0 Z{}", c(home.z)));
    }
    line("M5".into());
    line("M30".into());
    Ok(out)
}
