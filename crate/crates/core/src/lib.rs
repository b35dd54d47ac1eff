//! Operational valuation of energy storage under stage-wise independent
//! price uncertainty.
//!
//! The marginal value of stored energy is propagated backwards through the
//! horizon directly from each stage's price distribution: CDF values and
//! partial expectations are all that is needed, so tail events in the price
//! distribution are captured without scenario sampling. The resulting
//! curves drive a simple threshold dispatch policy that can be replayed on
//! realized prices or evaluated by Monte Carlo.
//!
//! ```
//! use storage_valuation::{backward_pass, PriceDistribution, StorageSpec, ValuationHorizon, ValueCurve};
//!
//! let spec = StorageSpec::new(0.25, 1.0, 0.9, 5.0).unwrap();
//! let stages = (0..24)
//!     .map(|h| PriceDistribution::normal(30.0 + 10.0 * (h as f64 / 4.0).sin(), 10.0).unwrap())
//!     .collect();
//! let terminal = ValueCurve::constant(1.0, 101, 25.0).unwrap();
//! let horizon = ValuationHorizon::new(spec, stages, terminal).unwrap();
//! let result = backward_pass(&horizon).unwrap();
//! assert_eq!(result.curves.len(), 25);
//! assert!(result.curves[0].range() > 0.0);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod distributions;
pub mod error;
pub mod forecast_io;
pub mod oracle;
pub mod policy;
pub mod recursion;
pub mod storage;
pub mod validation;
pub mod value_curve;

pub use distributions::{DistributionKind, PriceDistribution};
pub use error::{Error, Result};
pub use policy::{dispatch, monte_carlo, simulate_path, Dispatch, McSummary, PathOutcome};
pub use recursion::{
    backward_pass, backward_pass_with, backward_step, soc_price_cdf, ValuationHorizon,
    ValuationResult,
};
pub use storage::StorageSpec;
pub use value_curve::{Lookup, ValueCurve};
