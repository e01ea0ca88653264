//! Hausdorff distance between point sets and the functional-correctness
//! check built on it.
//!
//! The directed distance is computed exactly by a double loop over the two
//! sets. With the `parallel` feature the outer loop runs on rayon; `max`
//! over exact per-point minima is order-independent, so both paths return
//! bit-identical results.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::Execution;
use crate::gcode::{parse_program, GCodeProgram};
use crate::geometry::Point2;
use crate::machine::InterpretError;
use crate::params::{ParamsError, TaskParameters};
use crate::toolpath::{
    construct_user_path_with, interpret_commanded, remove_duplicates, DEFAULT_CHORD_TOL,
};

pub const DEFAULT_TOLERANCE: f64 = 0.5;
pub const DEFAULT_DEDUP_EPS: f64 = 1e-6;

pub const MATCH_MESSAGE: &str = "tool paths match within tolerance";
pub const MISMATCH_MESSAGE: &str = "tool paths do not match";

/// Below this many point pairs the parallel path is not worth its overhead.
const PARALLEL_MIN_PAIRS: usize = 1 << 14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimilarityError {
    #[error("point set is empty")]
    EmptySet,
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Interpret(#[from] InterpretError),
}

fn nearest_squared(a: Point2, set: &[Point2]) -> f64 {
    set.iter()
        .map(|b| a.distance_squared(*b))
        .fold(f64::INFINITY, f64::min)
}

/// Single-threaded directed Hausdorff distance.
pub fn directed_hausdorff_sequential(a: &[Point2], b: &[Point2]) -> Result<f64, SimilarityError> {
    if a.is_empty() || b.is_empty() {
        return Err(SimilarityError::EmptySet);
    }
    let worst = a.iter().map(|p| nearest_squared(*p, b)).fold(0.0, f64::max);
    Ok(worst.sqrt())
}

/// Directed Hausdorff distance with the outer loop on rayon. Falls back to
/// the sequential loop when built without the `parallel` feature.
pub fn directed_hausdorff_parallel(a: &[Point2], b: &[Point2]) -> Result<f64, SimilarityError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if a.is_empty() || b.is_empty() {
            return Err(SimilarityError::EmptySet);
        }
        let worst = a
            .par_iter()
            .map(|p| nearest_squared(*p, b))
            .reduce(|| 0.0, f64::max);
        Ok(worst.sqrt())
    }
    #[cfg(not(feature = "parallel"))]
    {
        directed_hausdorff_sequential(a, b)
    }
}

pub fn directed_hausdorff_with(
    a: &[Point2],
    b: &[Point2],
    exec: Execution,
) -> Result<f64, SimilarityError> {
    match exec {
        Execution::Parallel if a.len().saturating_mul(b.len()) >= PARALLEL_MIN_PAIRS => {
            directed_hausdorff_parallel(a, b)
        }
        _ => directed_hausdorff_sequential(a, b),
    }
}

/// max over `a` of the distance to the nearest point of `b`.
pub fn directed_hausdorff(a: &[Point2], b: &[Point2]) -> Result<f64, SimilarityError> {
    directed_hausdorff_with(a, b, Execution::default())
}

pub fn hausdorff_with(a: &[Point2], b: &[Point2], exec: Execution) -> Result<f64, SimilarityError> {
    Ok(directed_hausdorff_with(a, b, exec)?.max(directed_hausdorff_with(b, a, exec)?))
}

/// Symmetric Hausdorff distance.
pub fn hausdorff(a: &[Point2], b: &[Point2]) -> Result<f64, SimilarityError> {
    hausdorff_with(a, b, Execution::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalResult {
    pub distance: f64,
    pub matched: bool,
    pub message: String,
    pub tolerance: f64,
}

impl FunctionalResult {
    pub fn new(distance: f64, tolerance: f64) -> Self {
        let matched = distance <= tolerance;
        FunctionalResult {
            distance,
            matched,
            message: if matched {
                MATCH_MESSAGE
            } else {
                MISMATCH_MESSAGE
            }
            .to_string(),
            tolerance,
        }
    }

    /// Feedback line for prompt augmentation.
    pub fn feedback_line(&self) -> String {
        format!(
            "Hausdorff distance d={:.6} exceeds tolerance {:.6}",
            self.distance, self.tolerance
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionalOptions {
    pub tolerance: f64,
    pub dedup_eps: f64,
    pub chord_tol: f64,
}

impl Default for FunctionalOptions {
    fn default() -> Self {
        FunctionalOptions {
            tolerance: DEFAULT_TOLERANCE,
            dedup_eps: DEFAULT_DEDUP_EPS,
            chord_tol: DEFAULT_CHORD_TOL,
        }
    }
}

/// Compares the commanded XY path of a parsed program with the user path.
///
/// Points recorded before the program first names an X or Y position sit at
/// the machine origin without being commanded, and are left out of the
/// comparison.
pub fn validate_functional_program(
    program: &GCodeProgram,
    params: &TaskParameters,
    opts: &FunctionalOptions,
) -> Result<FunctionalResult, SimilarityError> {
    let gcode_path = remove_duplicates(
        &interpret_commanded(program, opts.chord_tol)?,
        opts.dedup_eps,
    );
    let user_path = remove_duplicates(
        &construct_user_path_with(params, opts.chord_tol)?,
        opts.dedup_eps,
    );
    let d = hausdorff(&gcode_path.points, &user_path.points)?;
    Ok(FunctionalResult::new(d, opts.tolerance))
}

pub fn validate_functional(
    gcode_text: &str,
    params: &TaskParameters,
    tolerance: f64,
) -> Result<FunctionalResult, SimilarityError> {
    let opts = FunctionalOptions {
        tolerance,
        ..Default::default()
    };
    validate_functional_program(&parse_program(gcode_text), params, &opts)
}
