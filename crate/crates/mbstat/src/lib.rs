//! Market-based statistics: moments of trade series, risk-cell aggregation,
//! characteristic-function density approximation, and economic-media transport.

pub mod econ_media;
pub mod error;
pub mod moments;
pub mod numeric;
pub mod prob_approx;
pub mod risk_domain;
pub mod trade_data;

pub use error::{Error, Result};
