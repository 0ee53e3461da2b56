//! Separation of the junction resistance into a top-area and a sidewall
//! contribution.
//!
//! Both regions conduct in parallel:
//!
//! ```text
//! 1/R = w_top·w_bot / RA + 2·h·w_top / RA_S
//!   R = RA·RA_S / (w_bot·RA_S + 2·h·RA) · 1/w_top
//! ```
//!
//! and for `w_bot·RA_S >> 2·h·RA` the sidewall term drops out, leaving
//! `R = RA / (w_top·w_bot)`. RA is fitted on a constant-`w_top` series with
//! that approximation, RA_S on a constant-`w_bot` series with the full
//! expression and RA held fixed. [`decompose`] then alternates full-model
//! refits of both until they agree, which removes the bias the approximation
//! leaves in RA when the widest bottom electrodes are not wide enough.
//!
//! Resistances are in MΩ, lengths in µm, area-resistances in MΩ·µm².

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::JunctionGeometry;
use crate::numeric::{fit_through_origin, golden_min};

/// Sidewall share above which a point is flagged as violating the
/// top-area-only approximation: `w_bot·RA_S < DOMINANCE·2h·RA`.
pub const DOMINANCE: f64 = 10.0;

const SCAN_LO: f64 = 1e-3;
const SCAN_HI: f64 = 1e9;
const SCAN_PER_DECADE: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResistanceRecord {
    pub geometry: JunctionGeometry,
    /// Measured resistance [MΩ].
    pub r: f64,
}

impl ResistanceRecord {
    pub fn new(geometry: JunctionGeometry, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Invalid(format!("resistance must be positive, got {r}")));
        }
        Ok(Self { geometry, r })
    }
}

/// Resistance measurements on junctions of different overlap sizes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResistanceDataset {
    pub records: Vec<ResistanceRecord>,
}

fn distinct(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

impl ResistanceDataset {
    pub fn new(records: Vec<ResistanceRecord>) -> Self {
        Self { records }
    }

    pub fn constant_w_top(&self, w_top: f64) -> Vec<ResistanceRecord> {
        self.records
            .iter()
            .filter(|r| r.geometry.w_top() == w_top)
            .copied()
            .collect()
    }

    pub fn constant_w_bot(&self, w_bot: f64) -> Vec<ResistanceRecord> {
        self.records
            .iter()
            .filter(|r| r.geometry.w_bot() == w_bot)
            .copied()
            .collect()
    }

    /// Widest `w_top` having at least three distinct `w_bot`.
    pub fn default_ra_series(&self) -> Option<f64> {
        distinct(self.records.iter().map(|r| r.geometry.w_top()).collect())
            .into_iter()
            .rev()
            .find(|&w| distinct(self.constant_w_top(w).iter().map(|r| r.geometry.w_bot()).collect()).len() >= 3)
    }

    /// Narrowest `w_bot` having at least three distinct `w_top`; the sidewall
    /// share of the resistance is largest there.
    pub fn default_ras_series(&self) -> Option<f64> {
        distinct(self.records.iter().map(|r| r.geometry.w_bot()).collect())
            .into_iter()
            .find(|&w| distinct(self.constant_w_bot(w).iter().map(|r| r.geometry.w_top()).collect()).len() >= 3)
    }
}

/// Junction resistance [MΩ] from the two area-resistances.
pub fn junction_resistance(g: &JunctionGeometry, ra: f64, ra_s: f64) -> f64 {
    if ra_s.is_infinite() {
        return ra / (g.w_top() * g.w_bot());
    }
    ra * ra_s / (g.w_bot() * ra_s + 2.0 * g.h() * ra) / g.w_top()
}

fn check_series(
    series: &[ResistanceRecord],
    fixed: fn(&JunctionGeometry) -> f64,
    varied: fn(&JunctionGeometry) -> f64,
) -> Result<()> {
    let Some(first) = series.first() else {
        return Err(Error::InsufficientData { needed: 3, got: 0 });
    };
    let w = fixed(&first.geometry);
    if series.iter().any(|r| fixed(&r.geometry) != w) {
        return Err(Error::Invalid(
            "series mixes electrode widths that should be constant".into(),
        ));
    }
    let n = distinct(series.iter().map(|r| varied(&r.geometry)).collect()).len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    Ok(())
}

/// RA from a constant-`w_top` series via `R = (RA/w_top)·(1/w_bot)`, fitted
/// through the origin.
pub fn fit_ra(series: &[ResistanceRecord]) -> Result<f64> {
    check_series(series, JunctionGeometry::w_top, JunctionGeometry::w_bot)?;
    let x: Vec<f64> = series.iter().map(|r| 1.0 / r.geometry.w_bot()).collect();
    let y: Vec<f64> = series.iter().map(|r| r.r).collect();
    let (slope, _) = fit_through_origin(&x, &y)?;
    Ok(slope * series[0].geometry.w_top())
}

fn sse<F: Fn(&JunctionGeometry) -> f64>(series: &[ResistanceRecord], model: F) -> f64 {
    series.iter().map(|r| (r.r - model(&r.geometry)).powi(2)).sum()
}

/// Minimizes `objective` over a positive parameter: log-grid scan over
/// `[1e-3, 1e9]`, then golden section between the neighbours of the best
/// grid point.
fn minimize_positive<F: Fn(f64) -> f64>(objective: F, what: &str) -> Result<f64> {
    let decades = (SCAN_HI / SCAN_LO).log10();
    let n = (decades * SCAN_PER_DECADE as f64).round() as usize;
    let grid: Vec<f64> = (0..=n)
        .map(|i| SCAN_LO * 10f64.powf(i as f64 / SCAN_PER_DECADE as f64))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&p| objective(p)).collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .unwrap_or(0);
    if best == 0 || best == grid.len() - 1 {
        return Err(Error::NoBracket(format!(
            "{what} residual is monotone over [{SCAN_LO}, {SCAN_HI}]"
        )));
    }
    let (x, _) = golden_min(&objective, grid[best - 1], grid[best + 1], 1e-12);
    Ok(x)
}

/// RA_S from a constant-`w_bot` series with RA known: one-parameter least
/// squares of the full parallel-conduction model.
pub fn fit_ras(series: &[ResistanceRecord], ra: f64) -> Result<f64> {
    check_series(series, JunctionGeometry::w_bot, JunctionGeometry::w_top)?;
    if !(ra > 0.0) {
        return Err(Error::Domain(format!("RA must be positive, got {ra}")));
    }
    minimize_positive(|ras| sse(series, |g| junction_resistance(g, ra, ras)), "RA_S")
}

/// RA from a constant-`w_top` series with RA_S known, using the full model.
pub fn refit_ra(series: &[ResistanceRecord], ra_s: f64) -> Result<f64> {
    check_series(series, JunctionGeometry::w_top, JunctionGeometry::w_bot)?;
    minimize_positive(|ra| sse(series, |g| junction_resistance(g, ra, ra_s)), "RA")
}

/// Indices of records where the sidewall is not negligible.
pub fn dominance_violations(series: &[ResistanceRecord], ra: f64, ra_s: f64) -> Vec<usize> {
    series
        .iter()
        .enumerate()
        .filter(|(_, r)| r.geometry.w_bot() * ra_s < DOMINANCE * 2.0 * r.geometry.h() * ra)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaResistances {
    /// Top area-resistance [MΩ·µm²].
    pub ra: f64,
    /// Sidewall area-resistance [MΩ·µm²].
    pub ra_s: f64,
    /// RA from the top-area-only fit before refinement.
    pub ra_initial: f64,
    pub ras_initial: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Records of the RA series for which the top-area-only fit is not valid.
    pub dominance_violations: usize,
    /// RMS relative residual over both series.
    pub rms_rel_residual: f64,
    pub w_top_series: f64,
    pub w_bot_series: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecomposeOptions {
    pub w_top_series: Option<f64>,
    pub w_bot_series: Option<f64>,
    pub max_iter: usize,
    pub rel_tol: f64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        Self {
            w_top_series: None,
            w_bot_series: None,
            max_iter: 200,
            rel_tol: 1e-7,
        }
    }
}

/// Staged RA / RA_S extraction with alternating full-model refinement.
pub fn decompose(ds: &ResistanceDataset, opts: &DecomposeOptions) -> Result<AreaResistances> {
    let w_top = opts
        .w_top_series
        .or_else(|| ds.default_ra_series())
        .ok_or(Error::InsufficientData { needed: 3, got: 0 })?;
    let w_bot = opts
        .w_bot_series
        .or_else(|| ds.default_ras_series())
        .ok_or(Error::InsufficientData { needed: 3, got: 0 })?;
    let ra_series = ds.constant_w_top(w_top);
    let ras_series = ds.constant_w_bot(w_bot);

    let ra_initial = fit_ra(&ra_series)?;
    let ras_initial = fit_ras(&ras_series, ra_initial)?;
    let (mut ra, mut ra_s) = (ra_initial, ras_initial);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let ra_next = refit_ra(&ra_series, ra_s)?;
        let ras_next = fit_ras(&ras_series, ra_next)?;
        let change = ((ra_next - ra) / ra).abs().max(((ras_next - ra_s) / ra_s).abs());
        ra = ra_next;
        ra_s = ras_next;
        if change < opts.rel_tol {
            converged = true;
            break;
        }
    }
    let rel: Vec<f64> = ra_series
        .iter()
        .chain(&ras_series)
        .map(|r| (r.r - junction_resistance(&r.geometry, ra, ra_s)) / r.r)
        .collect();
    let rms_rel_residual = (rel.iter().map(|x| x * x).sum::<f64>() / rel.len() as f64).sqrt();
    Ok(AreaResistances {
        ra,
        ra_s,
        ra_initial,
        ras_initial,
        iterations,
        converged,
        dominance_violations: dominance_violations(&ra_series, ra, ra_s).len(),
        rms_rel_residual,
        w_top_series: w_top,
        w_bot_series: w_bot,
    })
}
