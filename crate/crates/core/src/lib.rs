//! Bootstrap tests of instrument validity when treatment effects are heterogeneous.
//!
//! An instrument is valid for a local average treatment effect when it is
//! as good as randomly assigned, excluded from the outcome equation and moves
//! the treatment monotonically. Together these imply that certain conditional
//! probabilities are ordered across instrument values. The test looks for the
//! largest standardized violation of those inequalities over intervals of the
//! outcome, and calibrates it with a bootstrap restricted to the inequalities
//! that are nearly binding.
//!
//! Supported designs: multivalued ordered treatment with a multivalued
//! instrument, binary treatment and instrument, unordered treatment with a
//! user-supplied set of `(d, z, z')` restrictions, and either of the first
//! or third conditioned on a discrete covariate.
//!
//! # Layout
//!
//! - [`model`]: datasets, the trimming measure `ν`, [`TestConfig`](model::TestConfig) and [`TestResult`](model::TestResult)
//! - [`spaces`]: the finite index set (pairs, intervals, thresholds) and prefix-sum count tables
//! - [`statistic`]: `φ̂`, `σ̂`, the statistic and the contact set
//! - [`bootstrap`]: resampling, critical values and [`run_test`](bootstrap::run_test)
//! - [`simulation`]: the design catalog, warp-speed Monte Carlo and table reproduction
//! - [`cli`]: CSV ingestion and the `ivtest` command
//!
//! # Examples
//!
//! Each lives in `examples/` and runs with `cargo run --release --example <name>`.
//!
//! | example | shows |
//! |---|---|
//! | `basic_test` | one test on simulated data, per-`ξ` suprema |
//! | `unordered` | unordered treatment with a c-set, with and without a covariate |
//! | `covariates` | conditioning cells and the bound-scaled trimming grid |
//! | `contact_set` | contact-set size and critical value across `τ` |
//! | `inspect_statistic` | decoding the maximizing interval of each `ξ` |
//! | `warp_speed` | single experiments and full `τ × ν` grids |
//! | `reproduce_table` | a rejection-rate table at reduced scale |
//! | `custom_dgp` | building a design by hand |
//! | `csv_workflow` | CSV in, JSON report out |
//!
//! ```
//! use ivtest::bootstrap::{replication_rng, run_test};
//! use ivtest::model::TestConfig;
//! use ivtest::simulation::{dgp, generate};
//!
//! let data = generate(&dgp("binary-null", 300, None)?, &mut replication_rng(1, 0))?;
//! let config = TestConfig { n_bootstrap: 99, ..TestConfig::default() };
//! let result = run_test(&data, &config)?;
//! assert_eq!(result.reject, result.ts > result.critical_value);
//! # Ok::<(), ivtest::error::Error>(())
//! ```

pub mod bootstrap;
pub mod cli;
pub mod error;
pub mod model;
pub mod simulation;
pub mod spaces;
pub mod statistic;
