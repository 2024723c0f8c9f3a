//! Exponential forgetting for online inference over non-stationary streams.
//!
//! * [`kernel`]: exponential recency weights over a context history
//! * [`filters`]: discounted Dirichlet–categorical and Gaussian filters, and a
//!   sliding-window baseline
//! * [`calibration`]: recover the discount factor that best explains a logged
//!   subject's predictives
//! * [`pmp`]: recency-weighted subsampling of a context history
//! * [`environments`]: synthetic drifting probes with ground truth
//! * [`bench`]: scoring, error decomposition, forgetting-curve fits and policy
//!   comparison
//! * [`formats`]: newline-delimited JSON file formats
//! * [`cli`]: the `forgetting` command-line tool
//!
//! ```
//! use forgetting::{calibrate_gamma, CalibrationOptions, DiscountFactor, FilterSpec, Prior, SubjectTrace};
//! use forgetting::environments::{generate, EnvConfig};
//! use forgetting::filters::run_predictives;
//!
//! // A subject that forgets with γ = 0.8; calibration recovers it from its predictions.
//! let trace = generate(&EnvConfig::default_biased_die(), 42)?;
//! let prior = Prior::categorical(vec![1.0; 6])?;
//! let spec = FilterSpec::discounted(prior.clone(), DiscountFactor::new(0.8)?);
//! let subject = SubjectTrace::from_predictives(&run_predictives(&spec, &trace.observations)?)?;
//! let fit = calibrate_gamma(&subject, &trace.observations, &prior, &CalibrationOptions::default())?;
//! assert!((fit.gamma_star.get() - 0.8).abs() < 0.02);
//! # Ok::<(), forgetting::Error>(())
//! ```

pub mod bench;
pub mod calibration;
pub mod cli;
pub mod distribution;
pub mod environments;
pub mod error;
pub mod filters;
pub mod formats;
pub mod kernel;
pub mod numeric;
pub mod pmp;

pub use calibration::{calibrate_gamma, CalibrationOptions, CalibrationResult, SubjectTrace};
pub use distribution::{Family, Normal, Observation, Predictive};
pub use environments::{EnvConfig, EnvTrace};
pub use error::{Error, Result};
pub use filters::{DiscountFactor, Filter, FilterSpec, Prior};
pub use kernel::{forgetting_weights, WeightVector};
pub use pmp::{pmp_sample, truncate_window, ContextHistory, ContextPolicy, ShapedContext};
