//! Conduction-regime segmentation of I-V sweeps and extraction of the
//! tunnel coefficient, the space-charge power-law exponent and the
//! Fowler-Nordheim slope.
//!
//! Regimes are told apart by the local log-log slope `d ln I / d ln V`:
//! direct tunneling is ohmic (slope 1), Fowler-Nordheim emission has slope
//! `2 + B/V` with `B = b·t·Φ^(3/2)` and is affine in the coordinates
//! `(1/V, ln(I/V²))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{brent_root, fit_line, fit_through_origin, LineFit};
use crate::transport::{dt_alpha, IvCurve};
use crate::units::{self, CONSTANTS};

pub const DEFAULT_SLOPE_TOL: f64 = 0.1;
pub const DEFAULT_FN_R2_MIN: f64 = 0.995;
/// Step-ratio factor that marks a breakdown discontinuity in a sweep.
pub const DEFAULT_SWEEP_JUMP_FACTOR: f64 = 10.0;

const MIN_POINTS: usize = 8;
const MIN_WINDOW: usize = 4;
const SMOOTHING: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    DirectTunneling,
    Intermediate,
    FowlerNordheim,
    Breakdown,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentOptions {
    /// Half-width of the accepted band around slope 1 (DT) and, relatively,
    /// around `2 + B/V` (FN).
    pub slope_tol: f64,
    pub fn_r2_min: f64,
    pub jump_factor: f64,
}

impl Default for SegmentOptions {
    fn default() -> Self {
        Self {
            slope_tol: DEFAULT_SLOPE_TOL,
            fn_r2_min: DEFAULT_FN_R2_MIN,
            jump_factor: DEFAULT_SWEEP_JUMP_FACTOR,
        }
    }
}

/// Per-point regime labels for the positive-current samples of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSegmentation {
    /// Samples that entered the analysis (positive currents only).
    pub points: Vec<(f64, f64)>,
    pub labels: Vec<Regime>,
    /// Number of non-positive current samples dropped before analysis.
    pub dropped: usize,
    /// Smoothed local log-log slope per point.
    pub local_slope: Vec<f64>,
    pub dt_window: Option<(f64, f64)>,
    pub fn_onset: Option<f64>,
}

impl RegimeSegmentation {
    fn indices(&self, regime: Regime) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .enumerate()
            .filter(move |(_, &l)| l == regime)
            .map(|(i, _)| i)
    }

    pub fn points_in(&self, regime: Regime) -> Vec<(f64, f64)> {
        self.indices(regime).map(|i| self.points[i]).collect()
    }

    pub fn count(&self, regime: Regime) -> usize {
        self.indices(regime).count()
    }
}

/// Centered-difference log-log slopes, then a centered moving average.
pub fn local_log_slopes(points: &[(f64, f64)], window: usize) -> Vec<f64> {
    let n = points.len();
    let lv: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let li: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                _ if i == n - 1 => (n - 2, n - 1),
                _ => (i - 1, i + 1),
            };
            (li[b] - li[a]) / (lv[b] - lv[a])
        })
        .collect();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

/// First index whose step ratio jumps by more than `factor` over both the
/// previous current and the previous step ratio. Smoothly steepening curves
/// (Fowler-Nordheim) do not trigger it.
fn find_sweep_jump(points: &[(f64, f64)], factor: f64) -> Option<usize> {
    (2..points.len()).find(|&n| {
        let (i0, i1, i2) = (points[n - 2].1, points[n - 1].1, points[n].1);
        i2 > factor * i1 && i2 / i1 > factor * (i1 / i0)
    })
}

fn fn_coordinates(points: &[(f64, f64)]) -> (Vec<f64>, Vec<f64>) {
    points.iter().map(|&(v, i)| (1.0 / v, (i / (v * v)).ln())).unzip()
}

/// Segments a sweep; the direct-tunneling window may be absent.
pub fn classify_regimes(iv: &IvCurve, opts: &SegmentOptions) -> Result<RegimeSegmentation> {
    let points: Vec<(f64, f64)> = iv.points().iter().copied().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
    let dropped = iv.len() - points.len();
    if points.len() < MIN_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_POINTS,
            got: points.len(),
        });
    }
    if points.iter().all(|p| p.1 == points[0].1) {
        return Err(Error::Degenerate("all currents are equal".into()));
    }
    let n = points.len();
    let slopes = local_log_slopes(&points, SMOOTHING);
    let mut labels = vec![Regime::Intermediate; n];

    let pre_bd = find_sweep_jump(&points, opts.jump_factor).unwrap_or(n);
    for l in &mut labels[pre_bd..] {
        *l = Regime::Breakdown;
    }

    let dt_len = slopes[..pre_bd]
        .iter()
        .take_while(|s| (*s - 1.0).abs() <= opts.slope_tol)
        .count();
    let dt_window = if dt_len >= MIN_WINDOW {
        for l in &mut labels[..dt_len] {
            *l = Regime::DirectTunneling;
        }
        Some((points[0].0, points[dt_len - 1].0))
    } else {
        None
    };

    let search_from = if dt_window.is_some() { dt_len } else { 0 };
    let (x, y) = fn_coordinates(&points[..pre_bd]);
    let mut fn_start = None;
    for s in search_from..pre_bd.saturating_sub(MIN_WINDOW - 1) {
        let Ok(fit) = fit_line(&x[s..], &y[s..]) else { continue };
        if fit.slope >= 0.0 || fit.r2 < opts.fn_r2_min {
            continue;
        }
        let b = -fit.slope;
        let consistent = (s..pre_bd).all(|i| {
            let expect = 2.0 + b / points[i].0;
            ((slopes[i] - expect) / expect).abs() <= opts.slope_tol
        });
        if consistent {
            fn_start = Some(s);
            break;
        }
    }
    let fn_onset = fn_start.map(|s| {
        for l in &mut labels[s..pre_bd] {
            *l = Regime::FowlerNordheim;
        }
        points[s].0
    });

    Ok(RegimeSegmentation {
        points,
        labels,
        dropped,
        local_slope: slopes,
        dt_window,
        fn_onset,
    })
}

/// Segments a sweep into DT / intermediate / FN / breakdown regimes.
///
/// Fails with [`Error::NoDtWindow`] when fewer than four low-voltage points
/// are ohmic within `slope_tol`.
pub fn segment_regimes(iv: &IvCurve, slope_tol: f64, fn_r2_min: f64) -> Result<RegimeSegmentation> {
    let opts = SegmentOptions {
        slope_tol,
        fn_r2_min,
        ..SegmentOptions::default()
    };
    let seg = classify_regimes(iv, &opts)?;
    if seg.dt_window.is_none() {
        return Err(Error::NoDtWindow);
    }
    Ok(seg)
}

/// Result of a tunnel-coefficient extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KFit {
    /// Tunnel coefficient [1/nm].
    pub k: f64,
    /// Ohmic conductance of the DT window [A/V].
    pub conductance: f64,
    pub dt_points: usize,
}

/// Solves `G = α(β)·k·A·exp(-k·t)/t` for k on the branch `k > 1/t`.
pub fn k_from_conductance(g: f64, t_ox: f64, area: f64, beta: f64) -> Result<f64> {
    if !(t_ox > 0.0) || !(area > 0.0) || !(beta > 0.0) {
        return Err(Error::Domain(format!(
            "t_ox, area and beta must be positive ({t_ox}, {area}, {beta})"
        )));
    }
    if !(g > 0.0) {
        return Err(Error::NoRoot(format!("conductance must be positive, got {g}")));
    }
    let ln_pref = (dt_alpha(beta) * units::um2_to_m2(area) * units::per_nm_to_per_m(1.0) / units::nm_to_m(t_ox)).ln();
    let ln_g = g.ln();
    let h = |k: f64| ln_pref + k.ln() - k * t_ox - ln_g;
    let lo = 1.0 / t_ox;
    if h(lo) < 0.0 {
        return Err(Error::NoRoot(format!("conductance {g} A/V exceeds the branch maximum")));
    }
    let mut hi = 2.0 * lo;
    while h(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoRoot("no upper bracket below k = 1e6 /nm".into()));
        }
    }
    brent_root(h, lo, hi, 1e-10, 200)
}

/// Fits k from the direct-tunneling window of a sweep, given the wafer-mean
/// oxide thickness [nm], junction area [µm²] and shape factor.
pub fn fit_k_from_dt(iv: &IvCurve, t_ox: f64, area: f64, beta: f64) -> Result<KFit> {
    let seg = segment_regimes(iv, DEFAULT_SLOPE_TOL, DEFAULT_FN_R2_MIN)?;
    fit_k_from_segmentation(&seg, t_ox, area, beta)
}

pub fn fit_k_from_segmentation(seg: &RegimeSegmentation, t_ox: f64, area: f64, beta: f64) -> Result<KFit> {
    let dt = seg.points_in(Regime::DirectTunneling);
    if dt.len() < MIN_WINDOW {
        return Err(Error::NoDtWindow);
    }
    let (v, i): (Vec<f64>, Vec<f64>) = dt.iter().copied().unzip();
    let (g, _) = fit_through_origin(&v, &i)?;
    let k = k_from_conductance(g, t_ox, area, beta)?;
    Ok(KFit {
        k,
        conductance: g,
        dt_points: dt.len(),
    })
}

/// Least-squares slope of ln I against ln V over `window = (v_lo, v_hi)`.
pub fn fit_msclc_exponent(iv: &IvCurve, window: (f64, f64)) -> Result<f64> {
    let (lv, li): (Vec<f64>, Vec<f64>) = iv
        .points()
        .iter()
        .filter(|p| p.0 >= window.0 && p.0 <= window.1 && p.0 > 0.0 && p.1 > 0.0)
        .map(|p| (p.0.ln(), p.1.ln()))
        .unzip();
    if lv.len() < MIN_WINDOW {
        return Err(Error::InsufficientData {
            needed: MIN_WINDOW,
            got: lv.len(),
        });
    }
    Ok(fit_line(&lv, &li)?.slope)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FnFit {
    /// Slope of ln(I/V²) against 1/V [V]; equals `-b·t·Φ^(3/2)` under the model.
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n: usize,
}

/// Fowler-Nordheim plot fit over the FN window of a segmentation.
///
/// The curve argument is accepted for symmetry with the other extractors; the
/// segmentation already carries the samples it labelled.
pub fn fit_fn_slope(_iv: &IvCurve, seg: &RegimeSegmentation) -> Result<FnFit> {
    let pts = seg.points_in(Regime::FowlerNordheim);
    if pts.len() < MIN_WINDOW {
        return Err(Error::NoFnWindow);
    }
    let (x, y) = fn_coordinates(&pts);
    let LineFit {
        slope,
        intercept,
        r2,
        n,
        ..
    } = fit_line(&x, &y)?;
    Ok(FnFit {
        slope,
        intercept,
        r2,
        n,
    })
}

/// Barrier height [eV] implied by a Fowler-Nordheim slope and a thickness [nm].
///
/// Unreliable on real junctions: breakdown usually truncates the FN regime
/// before enough of it is visible.
pub fn barrier_from_fn_slope(slope: f64, t_ox: f64) -> Result<f64> {
    if !(slope < 0.0) || !(t_ox > 0.0) {
        return Err(Error::Domain(format!(
            "need slope < 0 and t_ox > 0, got {slope}, {t_ox}"
        )));
    }
    Ok((-slope / (CONSTANTS.b_fn * t_ox)).powf(2.0 / 3.0))
}
