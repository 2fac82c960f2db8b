//! Counter-language workbench: counter machines, a small causal transformer trained
//! to predict valid next symbols, and probes for stack depth in its hidden states.

pub mod counterlang;
pub mod tensorcore;
pub mod dataset;
pub mod transformer;
pub mod probe;
pub mod rasp;
