//! G-code generators and the postprocessing applied to their output.

mod fault;
mod postprocess;
mod template;

pub use fault::{Fault, FaultInjectingGenerator, FaultScript};
pub use postprocess::{
    adjust_parameters, extract_gcode, integrate_segments, IntegrationOptions, PostprocessError,
    DEFAULT_BRIDGE_HEIGHT,
};
pub use template::{template_generate, TemplateGenerator, CLEARANCE_Z, DRILL_RETRACT_Z};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::params::ParamsError;
use crate::remote::{CompletionClient, RemoteError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub prompt: String,
    /// 1-based attempt number within the session.
    pub attempt: u32,
    pub session: String,
}

impl GeneratorRequest {
    pub fn new(prompt: impl Into<String>, attempt: u32, session: impl Into<String>) -> Self {
        GeneratorRequest {
            prompt: prompt.into(),
            attempt,
            session: session.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerateError {
    #[error("prompt carries no parameter block")]
    NoParameters,
    #[error("unsupported shape: {0}")]
    UnsupportedShape(String),
    #[error(transparent)]
    Params(#[from] ParamsError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
}

impl GenerateError {
    /// Errors from the model transport rather than from the task.
    pub fn is_remote(&self) -> bool {
        matches!(self, GenerateError::Remote(_))
    }
}

/// Produces raw model output for a prompt.
pub trait Generator: Send + Sync {
    fn generate(&self, request: &GeneratorRequest) -> Result<String, GenerateError>;
}

impl<G: Generator + ?Sized> Generator for &G {
    fn generate(&self, request: &GeneratorRequest) -> Result<String, GenerateError> {
        (**self).generate(request)
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn generate(&self, request: &GeneratorRequest) -> Result<String, GenerateError> {
        (**self).generate(request)
    }
}

/// Sends the prompt to a completion endpoint and returns its text verbatim.
#[derive(Debug, Clone)]
pub struct RemoteGenerator {
    client: CompletionClient,
}

impl RemoteGenerator {
    pub fn new(client: CompletionClient) -> Self {
        RemoteGenerator { client }
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<String, GenerateError> {
        Ok(self.client.complete(&request.prompt)?)
    }
}
