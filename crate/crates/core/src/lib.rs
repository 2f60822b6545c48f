//! Fully dynamic online facility location.
//!
//! Clients arrive and depart over a finite metric; every client location is a
//! candidate facility and opening costs 1. The crate provides the randomized
//! online policies (Meyerson's rule and its dynamic and capacitated
//! variants), a hierarchically well-separated tree embedding used by the
//! capacitated policy, exact offline optima, adversarial instance generators
//! and a seeded experiment harness.
//!
//! ```
//! use dynfl::{gen::gen_claim3, run, Algorithm, PolicyConfig};
//!
//! let inst: dynfl::Instance = gen_claim3(4);
//! let out = run(&PolicyConfig::new(Algorithm::Alg1), &inst, 7).unwrap();
//! assert!(out.report.total >= 1.0);
//! ```

pub mod experiment;
pub mod gen;
pub mod hst;
pub mod io;
pub mod metric;
pub mod oracle;
pub mod policy;
pub mod scalar;
pub mod seed;
pub mod sim;
pub mod stream;
pub mod trace;

pub use hst::{height_for, HstError};
pub use metric::{Layout, MetricError, Point};
pub use policy::{Algorithm, PolicyConfig, PolicyError, ReassignOrder};
pub use scalar::Scalar;
pub use seed::derive_seed;
pub use sim::{run, run_with, RunOptions, SimError};
pub use stream::{ClientId, Event, EventStream, StreamError};
pub use trace::{Counters, Step, TraceMode};

pub type MetricSpace<T = f64> = metric::MetricSpace<T>;
pub type Hst<T = f64> = hst::Hst<T>;
pub type Instance<T = f64> = sim::Instance<T>;
pub type Trace<T = f64> = trace::Trace<T>;
pub type SolutionState<T = f64> = policy::SolutionState<T>;
pub type CostReport<T = f64> = sim::CostReport<T>;

pub type Metric = metric::MetricSpace<f64>;
pub type Metric32 = metric::MetricSpace<f32>;
pub type Tree = hst::Hst<f64>;
pub type Tree32 = hst::Hst<f32>;
