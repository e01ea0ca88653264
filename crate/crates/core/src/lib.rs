pub mod corrector;
pub mod exec;
pub mod extract;
pub mod gcode;
pub mod generation;
pub mod geometry;
pub mod machine;
pub mod params;
pub mod prompt;
pub mod registry;
pub mod remote;
pub mod shapes;
pub mod similarity;
pub mod svg;
pub mod tasks;
pub mod toolpath;
pub mod validation;
