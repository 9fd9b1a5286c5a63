//! Receding-horizon driving planner that chooses, online, which model of the
//! nearby human driver to plan against.

pub mod diffopt;
pub mod dynamics;
pub mod reward;
pub mod models;
pub mod planner;
pub mod scene;
pub mod switcher;
pub mod sim;
pub mod experiment;
