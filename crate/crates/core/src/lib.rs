//! Room-temperature characterization of Al/AlOx/Al tunnel junctions at
//! wafer scale.
//!
//! The crate covers the forward transport models of a thin tunnel oxide, the
//! staged extraction of its parameters from capacitance, I-V, resistance and
//! voltage-ramp measurements, and a seeded synthetic-wafer generator that
//! produces complete datasets with known ground truth.
//!
//! | module | contents |
//! |--------|----------|
//! | [`units`] | constants, unit conversions, tunnel coefficient |
//! | [`geometry`] | junction test-structure geometry |
//! | [`transport`] | DT, Mott-Gurney, power-law and FN current models |
//! | [`iv`] | regime segmentation, k / exponent / FN slope extraction |
//! | [`capacitance`] | wafer maps, C/A regression, oxide thickness |
//! | [`resistance`] | top-area / sidewall area-resistance decomposition |
//! | [`breakdown`] | ramp breakdown detection, Weibull knee, defect density |
//! | [`synthetic`] | seeded wafer generator |
//! | [`dataset`] | dataset container, text / JSON formats, grid export |
//! | [`report`] | end-to-end wafer analysis and report rendering |

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::approx_constant))]

pub mod breakdown;
pub mod capacitance;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod iv;
pub mod numeric;
pub mod report;
pub mod resistance;
pub mod synthetic;
pub mod transport;
pub mod units;

pub use error::{Error, Result};
pub use exec::Exec;
