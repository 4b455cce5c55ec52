//! Scenario I/O, the deterministic discrete-event simulator, statistics,
//! reporting and logging.

pub mod log;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod stats;

pub use report::{report_render, Format, RunReport};
pub use scenario::{load_scenario, LoadedScenario, Scenario};
pub use sim::{run, SimResult};
