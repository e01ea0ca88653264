//! The eleven-field task parameter record and the checklist operations over it.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value;
use thiserror::Error;

use crate::geometry::{Point2, Point3};

/// Field names in checklist order; also the JSON keys.
pub const FIELD_NAMES: [&str; 11] = [
    "material",
    "operation",
    "shape",
    "workpiece_dims",
    "starting_point",
    "home_position",
    "tool_path",
    "return_home",
    "depth_of_cut",
    "feed_rate",
    "spindle_speed",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamsError {
    #[error("task description is empty")]
    EmptyDescription,
    #[error("unknown parameter '{0}'")]
    UnknownField(String),
    #[error("invalid value for '{field}': {reason}")]
    InvalidValue { field: String, reason: String },
    #[error("missing parameters: {}", .0.join(", "))]
    MissingFields(Vec<String>),
    #[error("parameter extraction failed: {0}")]
    ExtractionFailed(String),
    #[error("insufficient geometry: {0}")]
    InsufficientGeometry(String),
}

impl ParamsError {
    fn invalid(field: &str, reason: impl Into<String>) -> Self {
        ParamsError::InvalidValue {
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Operation {
    Milling,
    Drilling,
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operation::Milling => "milling",
            Operation::Drilling => "drilling",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Island {
    pub center: Point2,
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: u32,
    pub cols: u32,
    #[serde(with = "spacing_repr")]
    pub spacing: Spacing,
}

/// Hole pitch in millimeters, stored as micrometers so [`GridSpec`] stays `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Spacing(i64);

impl Spacing {
    pub fn from_mm(mm: f64) -> Self {
        Spacing((mm * 1000.0).round() as i64)
    }

    pub fn mm(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

mod spacing_repr {
    use super::Spacing;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(s: &Spacing, ser: S) -> Result<S::Ok, S::Error> {
        ser.serialize_f64(s.mm())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Spacing, D::Error> {
        f64::deserialize(de).map(Spacing::from_mm)
    }
}

/// Target geometry of a task.
///
/// JSON form: plain names for unparameterized shapes (`"square"`,
/// `"hexagon"`), single-key objects otherwise (`{"polygon": 6}`,
/// `{"hole_grid": {"rows": 3, "cols": 3, "spacing": 10}}`,
/// `{"pocket": {"islands": [...]}}`).
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Rectangle,
    Square,
    Polygon(u32),
    Circle,
    Custom,
    HoleGrid(GridSpec),
    Pocket { islands: Vec<Island> },
}

impl Shape {
    pub fn from_name(name: &str) -> Option<Shape> {
        Some(match name.trim().to_ascii_lowercase().as_str() {
            "rectangle" => Shape::Rectangle,
            "square" => Shape::Square,
            "circle" => Shape::Circle,
            "custom" | "irregular" => Shape::Custom,
            "pocket" => Shape::Pocket { islands: vec![] },
            "triangle" => Shape::Polygon(3),
            "pentagon" => Shape::Polygon(5),
            "hexagon" => Shape::Polygon(6),
            "heptagon" => Shape::Polygon(7),
            "octagon" => Shape::Polygon(8),
            _ => return None,
        })
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Rectangle => f.write_str("rectangle"),
            Shape::Square => f.write_str("square"),
            Shape::Polygon(n) => write!(f, "regular polygon with {n} sides"),
            Shape::Circle => f.write_str("circle"),
            Shape::Custom => f.write_str("custom outline"),
            Shape::HoleGrid(g) => write!(
                f,
                "{}x{} grid of holes at {} mm spacing",
                g.rows,
                g.cols,
                crate::gcode::format_number(g.spacing.mm())
            ),
            Shape::Pocket { islands } if islands.is_empty() => f.write_str("rectangular pocket"),
            Shape::Pocket { islands } => {
                write!(
                    f,
                    "rectangular pocket with {} circular islands",
                    islands.len()
                )?;
                for i in islands {
                    write!(
                        f,
                        " (center ({}, {}), radius {})",
                        crate::gcode::format_number(i.center.x),
                        crate::gcode::format_number(i.center.y),
                        crate::gcode::format_number(i.radius)
                    )?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct PocketSpec {
    #[serde(default)]
    islands: Vec<Island>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum ShapeRepr {
    Name(String),
    Polygon { polygon: u32 },
    HoleGrid { hole_grid: GridSpec },
    Pocket { pocket: PocketSpec },
}

impl Serialize for Shape {
    fn serialize<S: Serializer>(&self, ser: S) -> Result<S::Ok, S::Error> {
        let repr = match self {
            Shape::Rectangle => ShapeRepr::Name("rectangle".into()),
            Shape::Square => ShapeRepr::Name("square".into()),
            Shape::Circle => ShapeRepr::Name("circle".into()),
            Shape::Custom => ShapeRepr::Name("custom".into()),
            Shape::Polygon(n) => ShapeRepr::Polygon { polygon: *n },
            Shape::HoleGrid(g) => ShapeRepr::HoleGrid { hole_grid: *g },
            Shape::Pocket { islands } if islands.is_empty() => ShapeRepr::Name("pocket".into()),
            Shape::Pocket { islands } => ShapeRepr::Pocket {
                pocket: PocketSpec {
                    islands: islands.clone(),
                },
            },
        };
        repr.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for Shape {
    fn deserialize<D: Deserializer<'de>>(de: D) -> Result<Self, D::Error> {
        match ShapeRepr::deserialize(de)? {
            ShapeRepr::Name(n) => {
                Shape::from_name(&n).ok_or_else(|| D::Error::custom(format!("unknown shape '{n}'")))
            }
            ShapeRepr::Polygon { polygon } => Ok(Shape::Polygon(polygon)),
            ShapeRepr::HoleGrid { hole_grid } => Ok(Shape::HoleGrid(hole_grid)),
            ShapeRepr::Pocket { pocket } => Ok(Shape::Pocket {
                islands: pocket.islands,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkpieceDims {
    pub width: f64,
    pub height: f64,
    #[serde(default)]
    pub thickness: Option<f64>,
}

/// Structured task description. Every field may be absent until the user
/// or an extractor fills it in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskParameters {
    pub material: Option<String>,
    pub operation: Option<Operation>,
    pub shape: Option<Shape>,
    pub workpiece_dims: Option<WorkpieceDims>,
    pub starting_point: Option<Point2>,
    pub home_position: Option<Point3>,
    pub tool_path: Option<Vec<Point2>>,
    pub return_home: Option<bool>,
    pub depth_of_cut: Option<f64>,
    pub feed_rate: Option<f64>,
    pub spindle_speed: Option<f64>,
}

impl TaskParameters {
    pub fn from_json(text: &str) -> Result<Self, ParamsError> {
        let p: TaskParameters = serde_json::from_str(text)
            .map_err(|e| ParamsError::invalid("parameters", e.to_string()))?;
        p.check_ranges()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("parameters serialize")
    }

    pub fn is_populated(&self, field: &str) -> bool {
        match field {
            "material" => self
                .material
                .as_deref()
                .is_some_and(|m| !m.trim().is_empty()),
            "operation" => self.operation.is_some(),
            "shape" => self.shape.is_some(),
            "workpiece_dims" => self.workpiece_dims.is_some(),
            "starting_point" => self.starting_point.is_some(),
            "home_position" => self.home_position.is_some(),
            "tool_path" => self.tool_path.as_ref().is_some_and(|p| !p.is_empty()),
            "return_home" => self.return_home.is_some(),
            "depth_of_cut" => self.depth_of_cut.is_some(),
            "feed_rate" => self.feed_rate.is_some(),
            "spindle_speed" => self.spindle_speed.is_some(),
            _ => false,
        }
    }

    pub fn is_complete(&self) -> bool {
        FIELD_NAMES.iter().all(|f| self.is_populated(f))
    }

    /// Enforces the value-range invariants on whatever is populated.
    pub fn check_ranges(&self) -> Result<(), ParamsError> {
        let positive = |field: &str, v: Option<f64>| match v {
            Some(v) if !(v.is_finite() && v > 0.0) => Err(ParamsError::invalid(
                field,
                format!("must be positive, got {v}"),
            )),
            _ => Ok(()),
        };
        positive("depth_of_cut", self.depth_of_cut)?;
        positive("feed_rate", self.feed_rate)?;
        positive("spindle_speed", self.spindle_speed)?;
        if let Some(d) = self.workpiece_dims {
            positive("workpiece_dims", Some(d.width))?;
            positive("workpiece_dims", Some(d.height))?;
            positive("workpiece_dims", d.thickness)?;
        }
        let finite = |field: &str, vals: &[f64]| {
            if vals.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(ParamsError::invalid(field, "coordinates must be finite"))
            }
        };
        if let Some(p) = self.starting_point {
            finite("starting_point", &[p.x, p.y])?;
        }
        if let Some(p) = self.home_position {
            finite("home_position", &[p.x, p.y, p.z])?;
        }
        if let Some(path) = &self.tool_path {
            for p in path {
                finite("tool_path", &[p.x, p.y])?;
            }
        }
        match &self.shape {
            Some(Shape::Polygon(n)) if *n < 3 => {
                return Err(ParamsError::invalid(
                    "shape",
                    "a polygon needs at least 3 sides",
                ))
            }
            Some(Shape::HoleGrid(g)) if g.rows == 0 || g.cols == 0 || g.spacing.0 <= 0 => {
                return Err(ParamsError::invalid(
                    "shape",
                    "hole grid needs rows, cols and positive spacing",
                ))
            }
            Some(Shape::Pocket { islands }) => {
                for i in islands {
                    positive("shape", Some(i.radius))?;
                    finite("shape", &[i.center.x, i.center.y])?;
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Names of required keys that are not populated, in checklist order.
pub fn find_missing(params: &TaskParameters, required_keys: &[String]) -> Vec<String> {
    required_keys
        .iter()
        .filter(|k| !params.is_populated(k))
        .cloned()
        .collect()
}

/// Fills unpopulated fields from `answers`. Populated fields are left as
/// they are; every answer that would be used is range-checked first.
pub fn merge_user_answers(
    params: &TaskParameters,
    answers: &BTreeMap<String, Value>,
) -> Result<TaskParameters, ParamsError> {
    if let Some(k) = answers.keys().find(|k| !FIELD_NAMES.contains(&k.as_str())) {
        return Err(ParamsError::UnknownField(k.clone()));
    }
    let mut merged = serde_json::to_value(params).expect("parameters serialize");
    let obj = merged
        .as_object_mut()
        .expect("parameters serialize to an object");
    for (key, value) in answers {
        if value.is_null() || params.is_populated(key) {
            continue;
        }
        obj.insert(key.clone(), value.clone());
    }
    let out: TaskParameters = serde_json::from_value(merged).map_err(|e| {
        let field = answers
            .keys()
            .find(|k| e.to_string().contains(k.as_str()))
            .cloned()
            .unwrap_or_else(|| "answers".to_string());
        ParamsError::invalid(&field, e.to_string())
    })?;
    out.check_ranges()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn keys() -> Vec<String> {
        FIELD_NAMES.iter().map(|s| s.to_string()).collect()
    }

    pub(crate) fn complete_square() -> TaskParameters {
        TaskParameters::from_json(
            r#"{"material":"aluminum","operation":"milling","shape":"square",
                "workpiece_dims":{"width":50,"height":50,"thickness":10},
                "starting_point":[0,0],"home_position":[0,0,10],
                "tool_path":[[0,0],[50,0],[50,50],[0,50],[0,0]],"return_home":true,
                "depth_of_cut":2,"feed_rate":100,"spindle_speed":1200}"#,
        )
        .unwrap()
    }

    #[test]
    fn json_has_exactly_the_eleven_keys() {
        let v = serde_json::to_value(TaskParameters::default()).unwrap();
        let mut got: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        got.sort();
        let mut want = keys();
        want.sort();
        assert_eq!(got, want);
        assert!(TaskParameters::from_json(r#"{"colour":"red"}"#).is_err());
    }

    #[test]
    fn shape_json_forms() {
        for (text, shape) in [
            (r#""hexagon""#, Shape::Polygon(6)),
            (r#"{"polygon":5}"#, Shape::Polygon(5)),
            (r#""pocket""#, Shape::Pocket { islands: vec![] }),
            (
                r#"{"hole_grid":{"rows":3,"cols":2,"spacing":10}}"#,
                Shape::HoleGrid(GridSpec {
                    rows: 3,
                    cols: 2,
                    spacing: Spacing::from_mm(10.0),
                }),
            ),
        ] {
            let parsed: Shape = serde_json::from_str(text).unwrap();
            assert_eq!(parsed, shape);
            let again: Shape =
                serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
            assert_eq!(again, shape);
        }
        assert!(serde_json::from_str::<Shape>(r#""blob""#).is_err());
    }

    #[test]
    fn missing_lists_in_template_order() {
        let mut p = complete_square();
        assert!(find_missing(&p, &keys()).is_empty());
        p.feed_rate = None;
        p.spindle_speed = None;
        assert_eq!(find_missing(&p, &keys()), ["feed_rate", "spindle_speed"]);
        assert_eq!(find_missing(&TaskParameters::default(), &keys()), keys());
    }

    #[test]
    fn merge_fills_only_missing() {
        let mut p = complete_square();
        p.feed_rate = None;
        let answers: BTreeMap<_, _> = [
            ("feed_rate".to_string(), json!(100)),
            ("spindle_speed".to_string(), json!(5000)),
        ]
        .into();
        let merged = merge_user_answers(&p, &answers).unwrap();
        assert_eq!(merged.feed_rate, Some(100.0));
        assert_eq!(merged.spindle_speed, Some(1200.0));
    }

    #[test]
    fn merge_rejects_bad_values() {
        let mut p = complete_square();
        p.depth_of_cut = None;
        p.starting_point = None;
        let bad = |k: &str, v: Value| merge_user_answers(&p, &[(k.to_string(), v)].into());
        assert!(matches!(
            bad("depth_of_cut", json!(-1)),
            Err(ParamsError::InvalidValue { field, .. }) if field == "depth_of_cut"
        ));
        assert!(matches!(
            bad("starting_point", json!([1])),
            Err(ParamsError::InvalidValue { .. })
        ));
        assert!(matches!(
            bad("speed", json!(1)),
            Err(ParamsError::UnknownField(_))
        ));
    }
}
