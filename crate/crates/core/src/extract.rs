//! Task descriptions to parameters: rule-based and remote extraction,
//! shape counting, and splitting multi-shape descriptions into subtasks.

use std::f64::consts::PI;
use std::ops::Range;
use std::sync::LazyLock;

use regex::{Match, Regex};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::geometry::{Point2, Point3};
use crate::params::{
    GridSpec, Island, Operation, ParamsError, Shape, Spacing, TaskParameters, WorkpieceDims,
};
use crate::remote::CompletionClient;
use crate::toolpath::{synthesize_tool_path, DEFAULT_CHORD_TOL};

pub const DEFAULT_HOME: Point3 = Point3::new(0.0, 0.0, 10.0);

const NUM: &str = r"(-?\d+(?:\.\d+)?)";

fn re(pattern: &str) -> Regex {
    Regex::new(&format!("(?i){}", pattern.replace("NUM", NUM))).expect("static pattern")
}

static TUPLE2: LazyLock<Regex> = LazyLock::new(|| re(r"\(\s*NUM\s*,\s*NUM\s*\)"));
static TUPLE3: LazyLock<Regex> = LazyLock::new(|| re(r"\(\s*NUM\s*,\s*NUM\s*,\s*NUM\s*\)"));
static DIMS: LazyLock<Regex> = LazyLock::new(|| {
    re(
        r"\b(\d+(?:\.\d+)?)\s*(?:mm)?\s*[x×]\s*(\d+(?:\.\d+)?)(?:\s*(?:mm)?\s*[x×]\s*(\d+(?:\.\d+)?))?(?:\s*mm)?",
    )
});
static GRID: LazyLock<Regex> = LazyLock::new(|| re(r"\b(\d+)\s*[x×]\s*(\d+)\s*(?:hole\s+)?grid"));
static SPACING: LazyLock<Regex> = LazyLock::new(|| {
    re(
        r"(?:spacing|spaced|pitch)(?:\s*(?:of|at|:|=))?\s*NUM(?:\s*mm)?|NUM\s*mm\s+(?:apart|spacing|pitch)",
    )
});
static DEPTH: LazyLock<Regex> = LazyLock::new(|| {
    re(
        r"(?:depth\s+of\s+cut|cut\s+depth|depth)(?:\s*(?:of|:|=|is))?\s*NUM(?:\s*mm)?|NUM\s*mm\s+deep",
    )
});
static FEED: LazyLock<Regex> = LazyLock::new(|| {
    re(r"feed(?:\s*rate)?(?:\s*(?:of|at|:|=|is))?\s*NUM(?:\s*mm\s*/\s*min)?|NUM\s*mm\s*/\s*min")
});
static SPINDLE: LazyLock<Regex> = LazyLock::new(|| {
    re(r"spindle(?:\s*speed)?(?:\s*(?:of|at|:|=|is))?\s*NUM(?:\s*rpm)?|NUM\s*rpm")
});
static START: LazyLock<Regex> = LazyLock::new(|| {
    re(r"start(?:ing|s)?(?:\s+point)?(?:\s*(?:at|from|of|:|=|is))?\s*\(\s*NUM\s*,\s*NUM\s*\)")
});
static HOME: LazyLock<Regex> = LazyLock::new(|| {
    re(r"home(?:\s+position)?(?:\s*(?:at|of|:|=|is))?\s*\(\s*NUM\s*,\s*NUM\s*,\s*NUM\s*\)")
});
static RETURN_NO: LazyLock<Regex> = LazyLock::new(|| {
    re(
        r"(?:do\s+not|don't|dont|without|no)\s+return(?:ing)?(?:\s+(?:to\s+)?(?:the\s+)?home)?|stay\s+(?:at|in)\s+place",
    )
});
static RETURN_YES: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?:then\s+)?return(?:s|ing)?\s+(?:to\s+)?(?:the\s+)?home(?:\s+position)?")
});
static DIAMETER: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?:diameter|dia\.?)(?:\s*(?:of|:|=|is))?\s*NUM(?:\s*mm)?|NUM\s*mm\s+(?:diameter|dia)")
});
static RADIUS: LazyLock<Regex> =
    LazyLock::new(|| re(r"radius(?:\s*(?:of|:|=|is))?\s*NUM(?:\s*mm)?|NUM\s*mm\s+radius"));
static SIDE: LazyLock<Regex> = LazyLock::new(|| {
    re(r"side(?:\s*length)?(?:\s*(?:of|:|=|is))?\s*NUM(?:\s*mm)?|NUM\s*mm\s+sides?")
});
static THICK: LazyLock<Regex> =
    LazyLock::new(|| re(r"NUM\s*mm\s+thick|thickness(?:\s*(?:of|:|=|is))?\s*NUM(?:\s*mm)?"));
static CENTER: LazyLock<Regex> = LazyLock::new(|| {
    re(r"cent(?:er|re)(?:ed|d)?(?:\s*(?:at|of|on|:|=|is))?\s*\(\s*NUM\s*,\s*NUM\s*\)")
});
static PATH_KEY: LazyLock<Regex> =
    LazyLock::new(|| re(r"\b(?:through|vertices|waypoints|points|tool\s*path|path|holes?\s+at)\b"));
static NGON: LazyLock<Regex> = LazyLock::new(|| re(r"\b(\d+)\s*-?\s*(?:sided|gon)\b"));
static WORD: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[a-z0-9]+(?:[.\-'][a-z0-9]+)*").unwrap());

const MATERIALS: &[&str] = &[
    "stainless steel",
    "aluminium",
    "aluminum",
    "steel",
    "brass",
    "copper",
    "bronze",
    "titanium",
    "plywood",
    "hardwood",
    "wood",
    "mdf",
    "acrylic",
    "polycarbonate",
    "delrin",
    "hdpe",
    "plastic",
    "foam",
];

/// Shape nouns and the shape base they count as.
const SHAPE_NOUNS: &[(&str, &str)] = &[
    ("square", "square"),
    ("rectangle", "rectangle"),
    ("circle", "circle"),
    ("triangle", "triangle"),
    ("pentagon", "pentagon"),
    ("hexagon", "hexagon"),
    ("heptagon", "heptagon"),
    ("octagon", "octagon"),
    ("polygon", "polygon"),
    ("pocket", "pocket"),
    ("island", "island"),
    ("hole", "hole"),
    ("grid", "grid"),
];

const NUMBER_WORDS: &[(&str, u32)] = &[
    ("one", 1),
    ("single", 1),
    ("two", 2),
    ("both", 2),
    ("three", 3),
    ("four", 4),
    ("five", 5),
    ("six", 6),
    ("seven", 7),
    ("eight", 8),
    ("nine", 9),
    ("ten", 10),
    ("eleven", 11),
    ("twelve", 12),
];

/// Words that refer back to a shape already mentioned.
const BACK_REFERENCES: &[&str] = &[
    "the", "this", "that", "these", "those", "its", "their", "same",
];
const DISTRIBUTIVE: &[&str] = &["each", "every", "per"];
/// Words that end the modifier run in front of a shape noun.
const PHRASE_STOPS: &[&str] = &[
    "a",
    "an",
    "and",
    "of",
    "with",
    "mm",
    "in",
    "at",
    "to",
    "on",
    "from",
    "featuring",
    "plus",
    "then",
    "containing",
    "having",
    "has",
    "into",
    "inside",
    "mill",
    "drill",
    "cut",
    "machine",
];

fn num(m: Option<Match<'_>>) -> Option<f64> {
    m.and_then(|m| m.as_str().parse().ok())
}

/// First numeric capture of the first match of `re` in `text`.
fn first_value(re: &Regex, text: &str) -> Option<(f64, Range<usize>)> {
    re.captures_iter(text).find_map(|c| {
        let v = c
            .iter()
            .skip(1)
            .flatten()
            .find_map(|m| m.as_str().parse().ok())?;
        Some((v, c.get(0)?.range()))
    })
}

fn positive(v: Option<f64>) -> Option<f64> {
    v.filter(|v| v.is_finite() && *v > 0.0)
}

/// Turns free text into (possibly partial) task parameters.
pub trait Extractor: Send + Sync {
    fn extract(&self, description: &str) -> Result<TaskParameters, ParamsError>;
}

/// Keyword and number patterns. Never fails.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleBasedExtractor;

impl Extractor for RuleBasedExtractor {
    fn extract(&self, description: &str) -> Result<TaskParameters, ParamsError> {
        Ok(rule_based(description))
    }
}

/// Asks a completion endpoint for the parameter JSON.
#[derive(Debug, Clone)]
pub struct RemoteExtractor {
    client: CompletionClient,
}

impl RemoteExtractor {
    pub fn new(client: CompletionClient) -> Self {
        RemoteExtractor { client }
    }

    pub fn prompt(description: &str) -> String {
        format!(
            "Extract the machining parameters from the task below. Answer with one JSON object using \
             only these keys: {}. Leave out anything the task does not state.\nTASK:\n{description}\n",
            crate::params::FIELD_NAMES.join(", ")
        )
    }
}

impl Extractor for RemoteExtractor {
    fn extract(&self, description: &str) -> Result<TaskParameters, ParamsError> {
        let text = self
            .client
            .complete(&Self::prompt(description))
            .map_err(|e| ParamsError::ExtractionFailed(e.to_string()))?;
        let (Some(a), Some(b)) = (text.find('{'), text.rfind('}')) else {
            return Err(ParamsError::ExtractionFailed(
                "no JSON object in response".into(),
            ));
        };
        if b < a {
            return Err(ParamsError::ExtractionFailed(
                "no JSON object in response".into(),
            ));
        }
        TaskParameters::from_json(&text[a..=b])
            .map_err(|e| ParamsError::ExtractionFailed(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Extraction {
    pub params: TaskParameters,
    pub warnings: Vec<String>,
}

/// Runs `extractor`, falling back to the rule-based patterns when it fails.
pub fn extract_parameters(
    description: &str,
    extractor: &dyn Extractor,
) -> Result<Extraction, ParamsError> {
    if description.trim().is_empty() {
        return Err(ParamsError::EmptyDescription);
    }
    Ok(match extractor.extract(description) {
        Ok(params) => Extraction {
            params,
            warnings: Vec::new(),
        },
        Err(e) => Extraction {
            params: rule_based(description),
            warnings: vec![format!("{e}; fell back to rule-based extraction")],
        },
    })
}

fn contains_word(lower: &str, words: &[&str]) -> bool {
    WORD.find_iter(lower).any(|w| words.contains(&w.as_str()))
}

fn detect_shape(lower: &str) -> Option<Shape> {
    let has = |w: &[&str]| contains_word(lower, w);
    if has(&["pocket", "pockets"]) {
        return Some(Shape::Pocket { islands: vec![] });
    }
    if let Some(c) = GRID.captures(lower) {
        let rows: u32 = c[1].parse().ok()?;
        let cols: u32 = c[2].parse().ok()?;
        let spacing = positive(first_value(&SPACING, lower).map(|v| v.0)).unwrap_or(10.0);
        return Some(Shape::HoleGrid(GridSpec {
            rows,
            cols,
            spacing: Spacing::from_mm(spacing),
        }));
    }
    if has(&[
        "irregular",
        "custom",
        "freeform",
        "arbitrary",
        "outline",
        "profile",
    ]) {
        return Some(Shape::Custom);
    }
    for (word, n) in [
        ("triangle", 3),
        ("pentagon", 5),
        ("hexagon", 6),
        ("heptagon", 7),
        ("octagon", 8),
    ] {
        if has(&[word, &format!("{word}s"), &format!("{word}al")]) {
            return Some(Shape::Polygon(n));
        }
    }
    if let Some(n) = NGON.captures(lower).and_then(|c| c[1].parse::<u32>().ok()) {
        return Some(Shape::Polygon(n));
    }
    if has(&["square", "squares"]) {
        return Some(Shape::Square);
    }
    if has(&["rectangle", "rectangles", "rectangular"]) {
        return Some(Shape::Rectangle);
    }
    if has(&[
        "circle", "circles", "circular", "round", "island", "islands", "disc", "disk",
    ]) {
        return Some(Shape::Circle);
    }
    None
}

/// Tuples that are not part of the start, home or center phrases.
fn free_tuples(text: &str, from: usize) -> Vec<(Point2, Range<usize>)> {
    let taken: Vec<Range<usize>> = START
        .find_iter(text)
        .chain(HOME.find_iter(text))
        .chain(TUPLE3.find_iter(text))
        .map(|m| m.range())
        .collect();
    TUPLE2
        .captures_iter(&text[from..])
        .filter_map(|c| {
            let m = c.get(0)?;
            let r = (m.start() + from)..(m.end() + from);
            if taken.iter().any(|t| t.start <= r.start && r.end <= t.end) {
                return None;
            }
            Some((Point2::new(num(c.get(1))?, num(c.get(2))?), r))
        })
        .collect()
}

fn rule_based(description: &str) -> TaskParameters {
    let lower = description.to_lowercase();
    let mut p = TaskParameters {
        material: MATERIALS
            .iter()
            .filter_map(|m| {
                Regex::new(&format!(r"\b{m}\b"))
                    .ok()?
                    .find(&lower)
                    .map(|f| (f.start(), *m))
            })
            .min_by_key(|(pos, m)| (*pos, usize::MAX - m.len()))
            .map(|(_, m)| m.to_string()),
        ..Default::default()
    };

    if contains_word(
        &lower,
        &["drill", "drilling", "drilled", "hole", "holes", "bore"],
    ) {
        p.operation = Some(Operation::Drilling);
    } else if contains_word(
        &lower,
        &[
            "mill", "milling", "milled", "cut", "cutting", "pocket", "engrave", "profile",
            "contour", "machine", "trace",
        ],
    ) {
        p.operation = Some(Operation::Milling);
    }

    p.depth_of_cut = positive(first_value(&DEPTH, &lower).map(|v| v.0));
    p.feed_rate = positive(first_value(&FEED, &lower).map(|v| v.0));
    p.spindle_speed = positive(first_value(&SPINDLE, &lower).map(|v| v.0));
    p.starting_point = START
        .captures(&lower)
        .and_then(|c| Some(Point2::new(num(c.get(1))?, num(c.get(2))?)));
    p.home_position = HOME
        .captures(&lower)
        .and_then(|c| Some(Point3::new(num(c.get(1))?, num(c.get(2))?, num(c.get(3))?)));
    if RETURN_NO.is_match(&lower) {
        p.return_home = Some(false);
    } else if RETURN_YES.is_match(&lower) {
        p.return_home = Some(true);
    }

    let shape = detect_shape(&lower);
    let thickness = positive(first_value(&THICK, &lower).map(|v| v.0));
    let dims = DIMS
        .captures_iter(&lower)
        .filter(|c| {
            let end = c.get(0).map_or(0, |m| m.end());
            !lower[end..].trim_start().starts_with("grid")
        })
        .find_map(|c| {
            Some(WorkpieceDims {
                width: positive(num(c.get(1)))?,
                height: positive(num(c.get(2)))?,
                thickness: positive(num(c.get(3))).or(thickness),
            })
        });
    let diameter = positive(first_value(&DIAMETER, &lower).map(|v| v.0))
        .or_else(|| positive(first_value(&RADIUS, &lower).map(|v| v.0 * 2.0)));
    let side = positive(first_value(&SIDE, &lower).map(|v| v.0));
    let square_dims = |s: f64| WorkpieceDims {
        width: s,
        height: s,
        thickness,
    };

    p.workpiece_dims = match (&shape, dims) {
        (Some(Shape::Pocket { .. }), d)
        | (Some(Shape::Rectangle | Shape::Square | Shape::HoleGrid(_) | Shape::Custom), d)
            if d.is_some() =>
        {
            d
        }
        (Some(Shape::Circle), _) if diameter.is_some() => diameter.map(square_dims),
        (Some(Shape::Polygon(n)), _) if side.is_some() => {
            side.map(|s| square_dims(s / (PI / f64::from(*n)).sin()))
        }
        (Some(Shape::Polygon(_)), _) if diameter.is_some() => diameter.map(square_dims),
        (Some(Shape::Square), None) => side.map(square_dims),
        (_, d) => d,
    };

    let center = CENTER
        .captures(&lower)
        .and_then(|c| Some(Point2::new(num(c.get(1))?, num(c.get(2))?)));
    let shape = match shape {
        Some(Shape::Pocket { .. }) => {
            let islands = island_specs(&lower);
            Some(Shape::Pocket { islands })
        }
        s => s,
    };
    if p.starting_point.is_none() {
        if let (Some(c), Some(Shape::Circle | Shape::Polygon(_)), Some(d)) =
            (center, &shape, p.workpiece_dims)
        {
            p.starting_point = Some(c.translate(-d.width.min(d.height) / 2.0, 0.0));
        }
    }
    p.shape = shape;

    if let Some(k) = PATH_KEY.find(&lower) {
        let pts: Vec<Point2> = free_tuples(&lower, k.end())
            .into_iter()
            .map(|t| t.0)
            .collect();
        let needs = matches!(p.shape, None | Some(Shape::Custom))
            || (p.operation == Some(Operation::Drilling)
                && !matches!(p.shape, Some(Shape::HoleGrid(_))));
        if needs && !pts.is_empty() {
            if p.shape.is_none() {
                p.shape = Some(Shape::Custom);
            }
            p.tool_path = Some(pts);
        }
    }
    p
}

/// Circular islands named after the word "island": one per free tuple
/// following it, all sharing the stated radius or diameter.
fn island_specs(lower: &str) -> Vec<Island> {
    let Some(at) = lower.find("island") else {
        return Vec::new();
    };
    let rest = &lower[at..];
    let Some(radius) = positive(first_value(&RADIUS, rest).map(|v| v.0))
        .or_else(|| positive(first_value(&DIAMETER, rest).map(|v| v.0 / 2.0)))
    else {
        return Vec::new();
    };
    free_tuples(lower, at)
        .into_iter()
        .map(|(center, _)| Island { center, radius })
        .collect()
}

/// Subtask defaults for fields a decomposed description rarely states.
pub fn fill_defaults(params: &TaskParameters) -> TaskParameters {
    let mut p = params.clone();
    p.starting_point.get_or_insert(Point2::ORIGIN);
    p.home_position.get_or_insert(DEFAULT_HOME);
    p.return_home.get_or_insert(false);
    if p.tool_path.is_none() {
        p.tool_path = synthesize_tool_path(&p, DEFAULT_CHORD_TOL).ok();
    }
    p
}

#[derive(Debug, Clone, PartialEq)]
struct Token<'a> {
    text: &'a str,
    range: Range<usize>,
}

fn tokens(lower: &str) -> Vec<Token<'_>> {
    WORD.find_iter(lower)
        .map(|m| Token {
            text: m.as_str(),
            range: m.range(),
        })
        .collect()
}

/// (base noun, plural) for a shape noun token.
fn shape_noun(tok: &str) -> Option<(&'static str, bool)> {
    if tok.ends_with("gon") && tok.contains('-') {
        return Some(("polygon", false));
    }
    SHAPE_NOUNS.iter().find_map(|(noun, base)| {
        if tok == *noun {
            Some((*base, false))
        } else if tok.strip_suffix('s') == Some(noun) {
            Some((*base, true))
        } else {
            None
        }
    })
}

fn quantity(tok: &str) -> Option<u32> {
    NUMBER_WORDS
        .iter()
        .find(|(w, _)| *w == tok)
        .map(|(_, n)| *n)
        .or_else(|| tok.parse().ok().filter(|n| *n >= 1))
}

#[derive(Debug, Clone, PartialEq)]
struct Occurrence {
    base: &'static str,
    count: u32,
    adjectives: Vec<String>,
    /// Byte range from the first modifier to the end of the noun.
    span: Range<usize>,
}

fn occurrences(lower: &str) -> Vec<Occurrence> {
    let toks = tokens(lower);
    let mut out: Vec<Occurrence> = Vec::new();
    for (i, tok) in toks.iter().enumerate() {
        let Some((base, plural)) = shape_noun(tok.text) else {
            continue;
        };
        if toks
            .get(i + 1)
            .is_some_and(|n| shape_noun(n.text).is_some())
        {
            continue;
        }
        let prev = i.checked_sub(1).map(|j| toks[j].text);
        if prev.is_some_and(|p| DISTRIBUTIVE.contains(&p)) {
            continue;
        }
        if prev.is_some_and(|p| BACK_REFERENCES.contains(&p)) && out.iter().any(|o| o.base == base)
        {
            continue;
        }
        if base == "hole" {
            let window = toks[i.saturating_sub(4)..(i + 5).min(toks.len())].iter();
            if window
                .clone()
                .any(|t| t.text == "grid" || t.text == "grids")
            {
                continue;
            }
        }
        let mut count = None;
        let mut adjectives = Vec::new();
        let mut start = tok.range.start;
        for j in (i.saturating_sub(4)..i).rev() {
            let t = toks[j].text;
            if let Some(n) = quantity(t) {
                if base != "grid" {
                    count = Some(n);
                }
                start = toks[j].range.start;
                break;
            }
            if PHRASE_STOPS.contains(&t)
                || BACK_REFERENCES.contains(&t)
                || t.chars().next().is_some_and(|c| c.is_ascii_digit())
            {
                break;
            }
            adjectives.insert(0, t.to_string());
            start = toks[j].range.start;
        }
        let count = count.unwrap_or(if plural && base != "grid" { 2 } else { 1 });
        out.push(Occurrence {
            base,
            count,
            adjectives,
            span: start..tok.range.end,
        });
    }
    out
}

/// Number of distinct shapes a description asks for. At least 1.
pub fn count_shapes(description: &str) -> usize {
    let total: u32 = occurrences(&description.to_lowercase())
        .iter()
        .map(|o| o.count)
        .sum();
    total.max(1) as usize
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtaskDescription {
    pub index: usize,
    pub text: String,
    pub parent_ref: String,
}

/// Short stable identifier of a description.
pub fn description_ref(description: &str) -> String {
    let digest = Sha256::digest(description.as_bytes());
    digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
}

fn article(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

fn snippet<'a>(re: &Regex, text: &'a str) -> Option<&'a str> {
    re.find(text).map(|m| m.as_str().trim())
}

fn round_like(base: &str) -> bool {
    !matches!(base, "square" | "rectangle" | "pocket" | "grid" | "hole")
}

/// Splits a multi-shape description into one description per shape.
///
/// Geometry stated next to a shape stays with it; material, depth, feed,
/// spindle and home phrases are copied into every subtask. The start phrase
/// goes to the first subtask only. With a quantified noun ("two islands
/// centered at (a) and (b)") the k-th coordinate goes to the k-th instance.
pub fn decompose(description: &str) -> Vec<SubtaskDescription> {
    let parent_ref = description_ref(description);
    let lower = description.to_lowercase();
    let occ = occurrences(&lower);
    let total: u32 = occ.iter().map(|o| o.count).sum();
    if total <= 1 {
        return vec![SubtaskDescription {
            index: 1,
            text: description.to_string(),
            parent_ref,
        }];
    }

    let verb = if rule_based(description).operation == Some(Operation::Drilling) {
        "Drill"
    } else {
        "Mill"
    };
    let mut shared: Vec<String> = Vec::new();
    if let Some(m) = MATERIALS.iter().find(|m| contains_phrase(&lower, m)) {
        shared.push(format!("in {m}"));
    }
    for r in [&*DEPTH, &*FEED, &*SPINDLE, &*HOME] {
        shared.extend(snippet(r, &lower).map(str::to_string));
    }
    if let Some(s) = snippet(&RETURN_NO, &lower).or_else(|| snippet(&RETURN_YES, &lower)) {
        shared.push(s.to_string());
    }
    let start = snippet(&START, &lower).map(str::to_string);

    let bounds = region_bounds(&lower, &occ);
    let mut out = Vec::new();
    for (k, o) in occ.iter().enumerate() {
        let region = &lower[bounds[k].clone()];
        let mut tuples: Vec<String> = free_tuples(&lower, bounds[k].start)
            .into_iter()
            .filter(|(_, r)| r.end <= bounds[k].end)
            .map(|(_, r)| lower[r].to_string())
            .collect();
        let path = if o.count == 1 {
            PATH_KEY
                .find(region)
                .filter(|_| !tuples.is_empty())
                .map(|key| {
                    let from = bounds[k].start + key.start();
                    let last = tuples
                        .last()
                        .and_then(|t| lower[from..].find(t.as_str()).map(|i| i + t.len()));
                    let end = last.map_or(from + key.len(), |l| from + l);
                    lower[from..end].to_string()
                })
        } else {
            None
        };
        if path.is_some() {
            tuples.clear();
        }
        let mut attachments: Vec<String> = Vec::new();
        if o.base == "grid" {
            if let Some(g) = snippet(&GRID, region) {
                attachments.push(format!("{g} of holes"));
            }
            attachments.extend(snippet(&SPACING, region).map(str::to_string));
        } else {
            if let Some(d) = DIMS
                .find_iter(region)
                .find(|m| !region[m.end()..].trim_start().starts_with("grid"))
            {
                attachments.push(d.as_str().trim().to_string());
            }
            for r in [&*DIAMETER, &*RADIUS, &*SIDE, &*NGON] {
                attachments.extend(snippet(r, region).map(str::to_string));
            }
        }
        attachments.extend(path);

        for inst in 0..o.count as usize {
            let noun = if o.base == "grid" && !attachments.is_empty() {
                String::new()
            } else {
                let words: Vec<&str> = o
                    .adjectives
                    .iter()
                    .map(String::as_str)
                    .chain([o.base])
                    .collect();
                let phrase = words.join(" ");
                format!("{} {phrase}", article(&phrase))
            };
            let mut parts: Vec<String> = Vec::new();
            let mut head = verb.to_string();
            if !noun.is_empty() {
                head.push(' ');
                head.push_str(&noun);
            }
            parts.push(head);
            parts.extend(attachments.iter().cloned());
            if let Some(t) = tuples.get(inst) {
                parts.push(if round_like(o.base) {
                    format!("centered at {t}")
                } else {
                    format!("starting at {t}")
                });
            }
            if out.is_empty() {
                parts.extend(start.clone());
            }
            parts.extend(shared.iter().cloned());
            let mut text = parts.join(", ");
            if o.base == "grid" && noun.is_empty() {
                text = text.replacen(", ", " a ", 1);
            }
            text.push('.');
            out.push(SubtaskDescription {
                index: out.len() + 1,
                text,
                parent_ref: parent_ref.clone(),
            });
        }
    }
    out
}

fn contains_phrase(lower: &str, phrase: &str) -> bool {
    Regex::new(&format!(r"\b{phrase}\b")).is_ok_and(|r| r.is_match(lower))
}

/// Splits the text into one region per occurrence. The boundary between
/// neighbours is the last clause delimiter between them, or the start of
/// the later noun phrase when there is none.
fn region_bounds(lower: &str, occ: &[Occurrence]) -> Vec<Range<usize>> {
    static DELIM: LazyLock<Regex> =
        LazyLock::new(|| re(r",|;|\.\s|\band\b|\bfeaturing\b|\bwith\b|\bplus\b|\bcontaining\b"));
    let mut cuts = vec![0];
    for w in occ.windows(2) {
        let gap = w[0].span.end..w[1].span.start;
        let cut = DELIM
            .find_iter(&lower[gap.clone()])
            .last()
            .map_or(gap.end, |m| gap.start + m.start());
        cuts.push(cut);
    }
    cuts.push(lower.len());
    cuts.windows(2).map(|c| c[0]..c[1]).collect()
}
