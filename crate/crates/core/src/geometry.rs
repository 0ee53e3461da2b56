//! Cross-type junction test structures: a top electrode of width `w_top`
//! crossing a bottom electrode of width `w_bot` and thickness `h`. The
//! overlap has a flat top region plus two sidewalls along the bottom
//! electrode edges.
//!
//! No lithography bias is applied: drawn and fabricated areas are taken as
//! equal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bottom Al layer thickness [µm].
pub const DEFAULT_BOTTOM_HEIGHT_UM: f64 = 0.12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JunctionGeometry {
    w_top: f64,
    w_bot: f64,
    h: f64,
}

impl JunctionGeometry {
    /// All dimensions in µm; each must be positive and finite.
    pub fn new(w_top: f64, w_bot: f64, h: f64) -> Result<Self> {
        for (name, v) in [("w_top", w_top), ("w_bot", w_bot), ("h", h)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { w_top, w_bot, h })
    }

    /// Square junction with the default bottom-layer thickness.
    pub fn square(w: f64) -> Result<Self> {
        Self::new(w, w, DEFAULT_BOTTOM_HEIGHT_UM)
    }

    pub fn w_top(&self) -> f64 {
        self.w_top
    }

    pub fn w_bot(&self) -> f64 {
        self.w_bot
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    /// `w_top · w_bot` [µm²].
    pub fn top_area(&self) -> f64 {
        self.w_top * self.w_bot
    }

    /// `2 · h · w_top` [µm²].
    pub fn sidewall_area(&self) -> f64 {
        2.0 * self.h * self.w_top
    }
}
