//! Emerging-market corporate credit as a two-barrier basket over correlated
//! jump-diffusion firm values.
//!
//! A corporate and its country each follow a jump-diffusion log firm value.
//! The corporate defaults when it crosses its own barrier, or when the
//! country crosses a deeper one whose depth depends on the corporate rating.
//! Sector parameters come from developed-market curves, country parameters
//! from the sovereign curve.

// `!(x > 0.0)` style checks are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod barrier;
pub mod basket;
pub mod calibration;
pub mod cli;
pub mod curve_fit;
pub mod default_curve;
pub mod error;
pub mod io;
pub mod optim;
pub mod rating;
pub mod rng;
pub mod validate;

pub use barrier::{
    diffusion_first_passage_cdf, martingale_drift, simulate_crossings, simulate_pair_crossings, CrossingRecord,
    DriverSet, Entity, PathConfig, ProcessParams,
};
pub use basket::{basket_default_samples, em_corporate_curve, BasketConfig, BasketSpec, EmCurves};
pub use calibration::{
    calibrate_country, calibrate_sector, calibrate_single, CalibrationConfig, CalibrationResult, CalibrationTarget,
};
pub use curve_fit::{eval_parametric, fit_sector, interpolate_grade_spread, ParametricSpreadCurve, Quote};
pub use default_curve::{
    estimate_default_curve, par_spread, spread_curve, DefaultCurve, DiscountCurve, Recovery, SpreadCurve,
};
pub use error::{Error, Result};
pub use rating::{lstar_c_for_grade, RatingGrade, RatingSchemes};
