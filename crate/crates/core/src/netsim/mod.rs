//! Virtual-time emulation of a single bottleneck path.

mod event;
mod link;
mod scenario;

pub use event::{EventQueue, SimClock};
pub use link::{policer_refill, DropReason, EnqueueOutcome, Link, LinkCounters, LinkState};
pub use scenario::{
    bundled_scenario, bundled_scenarios, resolve_scenario, NamedScenario, PolicerConfig,
    ScenarioConfig, SCENARIO_KEYS,
};
