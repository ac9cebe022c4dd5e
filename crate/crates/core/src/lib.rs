pub mod annotations;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod llm;
pub mod pipeline;
pub mod prompts;
pub mod record;
pub mod selection;
