//! Ramped-voltage breakdown: detection on ramp traces, Weibull statistics of
//! the breakdown fields, and the defect density implied by the extrinsic
//! failure fraction.
//!
//! Breakdown fields of a wafer plotted as `ln(-ln(1-P))` against E show two
//! regimes when weak spots are present: a shallow low-field tail of
//! defect-related failures and a steep intrinsic population. The transition
//! between them gives the critical field `E_crit` and the cumulative
//! failure fraction `P_k`; Poisson statistics of randomly placed defects
//! turn `P_k` into an areal density `D = -ln(1 - P_k) / A`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exec::Exec;
use crate::numeric::fit_line;
use crate::units;

pub const DEFAULT_JUMP_FACTOR: f64 = 10.0;
/// Current floor for jump detection [A].
pub const DEFAULT_FLOOR: f64 = 1e-9;
/// Ramp step [V].
pub const DEFAULT_STEP: f64 = 0.01;
/// Ramp rate [V/s].
pub const DEFAULT_RATE: f64 = 0.07;
/// Two-segment fit must cut the single-line SSE by at least this fraction.
pub const KNEE_MIN_IMPROVEMENT: f64 = 0.2;
pub const KNEE_MIN_SEGMENT: usize = 5;

const MIN_STEPS: usize = 10;
const MIN_WEIBULL: usize = 10;
const MIN_KNEE: usize = 20;
const STEP_TOL: f64 = 0.01;

/// A voltage ramp on one junction, fixed voltage increment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RampTrace {
    points: Vec<(f64, f64)>,
    /// Ramp rate [V/s].
    pub rate: f64,
    /// Voltage increment [V].
    pub step: f64,
    /// Junction area [µm²].
    pub area: f64,
    pub die: Option<(u32, u32)>,
}

impl RampTrace {
    pub fn new(points: Vec<(f64, f64)>, step: f64, rate: f64, area: f64, die: Option<(u32, u32)>) -> Result<Self> {
        if !(step > 0.0) || !(rate > 0.0) || !(area > 0.0) {
            return Err(Error::Invalid(format!(
                "step, rate and area must be positive ({step}, {rate}, {area})"
            )));
        }
        if points.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: points.len(),
            });
        }
        for (i, w) in points.windows(2).enumerate() {
            let d = w[1].0 - w[0].0;
            if !(d > 0.0) || (d - step).abs() > STEP_TOL * step {
                return Err(Error::Invalid(format!(
                    "ramp step {d} V at point {} deviates from {step} V",
                    i + 1
                )));
            }
        }
        if let Some(i) = points.iter().position(|p| !p.1.is_finite()) {
            return Err(Error::Invalid(format!("non-finite current at point {i}")));
        }
        Ok(Self {
            points,
            rate,
            step,
            area,
            die,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BreakdownRecord {
    /// Breakdown voltage [V]; a voltage of the ramp grid.
    pub v_bt: f64,
    /// Breakdown field [MV/cm], once an oxide thickness is supplied.
    pub field: Option<f64>,
    /// Index of the first post-breakdown step.
    pub index: usize,
    /// The current stays above the jump threshold for the rest of the ramp.
    pub hard: bool,
    pub die: Option<(u32, u32)>,
}

impl BreakdownRecord {
    /// Attaches `E = V_BT / t_ox` using the wafer-mean thickness [nm].
    pub fn with_field(mut self, t_ox: f64) -> Result<Self> {
        self.field = Some(units::field_strength(self.v_bt, t_ox)?);
        Ok(self)
    }
}

/// First step where `I[n] > jump_factor · max(I[n-1], floor)`.
pub fn detect_breakdown(trace: &RampTrace, jump_factor: f64, floor: f64) -> Result<BreakdownRecord> {
    let pts = trace.points();
    if pts.len() < MIN_STEPS {
        return Err(Error::InsufficientData {
            needed: MIN_STEPS,
            got: pts.len(),
        });
    }
    let n = (1..pts.len())
        .find(|&n| pts[n].1 > jump_factor * pts[n - 1].1.max(floor))
        .ok_or(Error::NoBreakdown)?;
    let threshold = jump_factor * pts[n - 1].1.max(floor);
    let hard = pts[n..].iter().all(|p| p.1 > threshold);
    Ok(BreakdownRecord {
        v_bt: pts[n].0,
        field: None,
        index: n,
        hard,
        die: trace.die,
    })
}

/// Runs [`detect_breakdown`] over many traces, in input order.
pub fn detect_all(traces: &[RampTrace], jump_factor: f64, floor: f64, exec: Exec) -> Vec<Result<BreakdownRecord>> {
    exec.map(traces, |t| detect_breakdown(t, jump_factor, floor))
}

/// `ln(-ln(1 - p))`.
pub fn weibull_ordinate(p: f64) -> f64 {
    (-(1.0 - p).ln()).ln()
}

/// Two-segment description of a Weibull plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knee {
    /// Lowest field of the intrinsic segment [MV/cm].
    pub e_crit: f64,
    /// Cumulative failure fraction at the end of the extrinsic segment.
    pub p_k: f64,
    /// Index (in sorted order) of the last extrinsic sample.
    pub split: usize,
    /// (slope, intercept) of the extrinsic and intrinsic lines in (E, y).
    pub extrinsic: (f64, f64),
    pub intrinsic: (f64, f64),
    pub sse_two: f64,
    pub sse_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullAnalysis {
    /// Breakdown fields, ascending [MV/cm].
    pub fields: Vec<f64>,
    /// Plotting positions `i/(n+1)`.
    pub positions: Vec<f64>,
    /// `ln(-ln(1 - P))`.
    pub ordinates: Vec<f64>,
    pub knee: Option<Knee>,
}

/// Sorts fields and assigns mean-rank plotting positions.
pub fn weibull_transform(e_values: &[f64]) -> Result<WeibullAnalysis> {
    if e_values.len() < MIN_WEIBULL {
        return Err(Error::InsufficientData {
            needed: MIN_WEIBULL,
            got: e_values.len(),
        });
    }
    if let Some(bad) = e_values.iter().find(|e| !e.is_finite()) {
        return Err(Error::Invalid(format!("non-finite field value {bad}")));
    }
    let mut fields = e_values.to_vec();
    fields.sort_by(f64::total_cmp);
    let n = fields.len() as f64;
    let positions: Vec<f64> = (1..=fields.len()).map(|i| i as f64 / (n + 1.0)).collect();
    let ordinates = positions.iter().map(|&p| weibull_ordinate(p)).collect();
    Ok(WeibullAnalysis {
        fields,
        positions,
        ordinates,
        knee: None,
    })
}

/// Locates the extrinsic/intrinsic transition.
///
/// Every split with at least five samples per side is tried; each side gets
/// its own least-squares line in (E, y) and the split minimizing the total
/// SSE wins, among splits where the intrinsic line is steeper than the
/// extrinsic one. Returns [`Error::NoKnee`] unless that beats a single line by
/// [`KNEE_MIN_IMPROVEMENT`].
pub fn find_transition(w: &WeibullAnalysis) -> Result<Knee> {
    let n = w.fields.len();
    if n < MIN_KNEE {
        return Err(Error::InsufficientData {
            needed: MIN_KNEE,
            got: n,
        });
    }
    let (x, y) = (&w.fields, &w.ordinates);
    let single = fit_line(x, y)?;
    let mut best: Option<Knee> = None;
    for j in (KNEE_MIN_SEGMENT - 1)..(n - KNEE_MIN_SEGMENT) {
        let (Ok(a), Ok(b)) = (fit_line(&x[..=j], &y[..=j]), fit_line(&x[j + 1..], &y[j + 1..])) else {
            continue;
        };
        if b.slope <= a.slope {
            continue;
        }
        let sse = a.sse + b.sse;
        if best.is_none_or(|k| sse < k.sse_two) {
            best = Some(Knee {
                e_crit: x[j + 1],
                p_k: w.positions[j],
                split: j,
                extrinsic: (a.slope, a.intercept),
                intrinsic: (b.slope, b.intercept),
                sse_two: sse,
                sse_one: single.sse,
            });
        }
    }
    match best {
        Some(k) if single.sse > 0.0 && k.sse_two <= (1.0 - KNEE_MIN_IMPROVEMENT) * single.sse => Ok(k),
        _ => Err(Error::NoKnee),
    }
}

/// Weibull analysis of breakdown fields including the transition, if any.
pub fn analyze_fields(e_values: &[f64]) -> Result<WeibullAnalysis> {
    let mut w = weibull_transform(e_values)?;
    w.knee = match find_transition(&w) {
        Ok(k) => Some(k),
        Err(Error::NoKnee) => None,
        Err(e) => return Err(e),
    };
    Ok(w)
}

/// Critical defect density [defects/cm²] from the transition probability and
/// the junction area [µm²].
pub fn critical_defect_density(p_k: f64, area: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p_k) {
        return Err(domain(format!("P_k must lie in [0, 1), got {p_k}")));
    }
    if !(area > 0.0) {
        return Err(domain(format!("area must be > 0, got {area}")));
    }
    Ok(-(1.0 - p_k).ln() / units::um2_to_cm2(area))
}
