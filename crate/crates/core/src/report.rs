//! End-to-end wafer analysis: capacitance → t_ox → k → RA/RA_S → breakdown,
//! and rendering of the resulting parameter table.
//!
//! The wafer-mean thickness from the capacitance stage feeds the I-V and
//! breakdown stages. Failures are collected per stage; a failed stage leaves
//! its columns null and the later stages run with whatever is available.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::breakdown::{self, DEFAULT_FLOOR, DEFAULT_JUMP_FACTOR};
use crate::capacitance::{
    dielectric_constant_from, fit_capacitance_per_area, oxide_thickness_from_ca, wafer_statistics, Cell, WaferMap,
};
use crate::dataset::DatasetFile;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::iv::{self, SegmentOptions, DEFAULT_FN_R2_MIN, DEFAULT_SLOPE_TOL, DEFAULT_SWEEP_JUMP_FACTOR};
use crate::numeric::{mean, sample_std};
use crate::resistance::{decompose, DecomposeOptions};
use crate::units;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReferenceCalibration {
    /// Label of the wafer whose thickness is known independently.
    pub label: String,
    /// Its oxide thickness [nm].
    pub t_ox: f64,
}

impl Default for ReferenceCalibration {
    fn default() -> Self {
        Self {
            label: "ref".into(),
            t_ox: 4.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Stages {
    pub cap: bool,
    pub iv: bool,
    pub res: bool,
    pub bkd: bool,
}

impl Default for Stages {
    fn default() -> Self {
        Self {
            cap: true,
            iv: true,
            res: true,
            bkd: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Relative permittivity; when absent it is calibrated on the reference wafer.
    pub eps_r: Option<f64>,
    pub reference: ReferenceCalibration,
    /// Oxide thickness [nm] to use when no capacitance data is analyzed.
    pub t_ox: Option<f64>,
    pub beta: f64,
    pub m_rel: f64,
    pub slope_tol: f64,
    pub fn_r2_min: f64,
    /// Current-jump factor for ramp breakdown detection.
    pub jump_factor: f64,
    /// Current floor for ramp breakdown detection [A].
    pub floor: f64,
    pub stages: Stages,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            eps_r: None,
            reference: ReferenceCalibration::default(),
            t_ox: None,
            beta: units::DEFAULT_BETA,
            m_rel: units::DEFAULT_M_REL,
            slope_tol: DEFAULT_SLOPE_TOL,
            fn_r2_min: DEFAULT_FN_R2_MIN,
            jump_factor: DEFAULT_JUMP_FACTOR,
            floor: DEFAULT_FLOOR,
            stages: Stages::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Invalid(m));
        if let Some(e) = self.eps_r {
            if !(e >= 1.0 && e.is_finite()) {
                return bad(format!("eps_r must be >= 1, got {e}"));
            }
        }
        if let Some(t) = self.t_ox {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("t_ox must be > 0, got {t}"));
            }
        }
        if !(self.reference.t_ox > 0.0) {
            return bad(format!("reference t_ox must be > 0, got {}", self.reference.t_ox));
        }
        if !(self.beta > 0.0) || !(self.m_rel > 0.0) {
            return bad("beta and m_rel must be > 0".into());
        }
        if !(self.slope_tol > 0.0) || !(0.0..=1.0).contains(&self.fn_r2_min) {
            return bad("slope_tol must be > 0 and fn_r2_min within [0, 1]".into());
        }
        if !(self.jump_factor > 1.0) || !(self.floor >= 0.0) {
            return bad("jump_factor must be > 1 and floor >= 0".into());
        }
        Ok(())
    }
}

/// A value with its unit; `None` renders as null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantity {
    pub value: Option<f64>,
    /// Standard error or standard deviation, see the field documentation.
    pub spread: Option<f64>,
    pub unit: String,
}

impl Quantity {
    fn null(unit: &str) -> Self {
        Self {
            value: None,
            spread: None,
            unit: unit.into(),
        }
    }

    fn set(&mut self, value: f64, spread: Option<f64>) {
        self.value = Some(value);
        self.spread = spread;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Cap,
    Iv,
    Res,
    Bkd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: Stage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSummary {
    /// [µm²]
    pub area: f64,
    /// [fF]
    pub mean: f64,
    pub rsd_pct: f64,
    pub yield_pct: f64,
    pub n_valid: usize,
    pub n_probed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub eps_r: Quantity,
    pub eps_r_source: Option<String>,
    pub cap_maps: Vec<MapSummary>,
    /// Zero-area offset of the C-A regression.
    pub cap_intercept: Quantity,
    pub iv_fitted: usize,
    pub iv_failed: usize,
    /// Median FN-plot slope over dies with an FN window.
    pub fn_slope: Quantity,
    pub fn_windows: usize,
    /// Barrier height implied by k for the configured β and m'.
    pub phi: Quantity,
    pub res_iterations: Option<usize>,
    pub res_converged: Option<bool>,
    pub res_dominance_violations: Option<usize>,
    pub res_rms_rel_residual: Option<f64>,
    /// RA from the top-area-only fit, before full-model refinement.
    pub ra_initial: Quantity,
    pub bkd_detected: usize,
    pub bkd_hard: usize,
    pub bkd_survivors: usize,
    /// Mean and standard deviation over every detected breakdown, including
    /// the extrinsic population.
    pub v_bt_all: Quantity,
    pub p_k: Quantity,
}

/// One row of the parameter table plus diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaferReport {
    pub label: String,
    pub etch: Quantity,
    /// Spread: standard error of the slope.
    pub ca: Quantity,
    pub t_ox: Quantity,
    /// Spread: standard deviation over dies.
    pub k: Quantity,
    pub ra: Quantity,
    pub ra_s: Quantity,
    /// Mean over the intrinsic population above the Weibull knee, or over
    /// every die when there is no knee. Spread: standard deviation.
    pub v_bt: Quantity,
    pub e_crit: Quantity,
    pub d_crit: Quantity,
    pub diagnostics: Diagnostics,
    pub errors: Vec<StageError>,
}

impl WaferReport {
    fn empty(label: &str, etch_s: Option<f64>) -> Self {
        let mut etch = Quantity::null("s");
        etch.value = etch_s;
        Self {
            label: label.into(),
            etch,
            ca: Quantity::null("fF/µm²"),
            t_ox: Quantity::null("nm"),
            k: Quantity::null("1/nm"),
            ra: Quantity::null("MΩ·µm²"),
            ra_s: Quantity::null("MΩ·µm²"),
            v_bt: Quantity::null("V"),
            e_crit: Quantity::null("MV/cm"),
            d_crit: Quantity::null("defects/cm²"),
            diagnostics: Diagnostics {
                eps_r: Quantity::null(""),
                eps_r_source: None,
                cap_maps: Vec::new(),
                cap_intercept: Quantity::null("fF"),
                iv_fitted: 0,
                iv_failed: 0,
                fn_slope: Quantity::null("V"),
                fn_windows: 0,
                phi: Quantity::null("eV"),
                res_iterations: None,
                res_converged: None,
                res_dominance_violations: None,
                res_rms_rel_residual: None,
                ra_initial: Quantity::null("MΩ·µm²"),
                bkd_detected: 0,
                bkd_hard: 0,
                bkd_survivors: 0,
                v_bt_all: Quantity::null("V"),
                p_k: Quantity::null(""),
            },
            errors: Vec::new(),
        }
    }

    pub fn has_errors(&self) -> bool {
        !self.errors.is_empty()
    }

    fn fail(&mut self, stage: Stage, e: impl ToString) {
        self.errors.push(StageError {
            stage,
            message: e.to_string(),
        });
    }
}

/// C/A [fF/µm²] of a dataset, the quantity the permittivity is calibrated on.
pub fn capacitance_per_area_of(d: &DatasetFile) -> Result<f64> {
    let points = d
        .capacitance_maps()?
        .iter()
        .filter_map(|m| wafer_statistics(m).ok().map(|s| (m.area, s.mean)))
        .collect::<Vec<_>>();
    Ok(fit_capacitance_per_area(&points)?.slope)
}

/// Relative permittivity from the reference wafer of a set, if present.
pub fn calibrate_eps_r(datasets: &[DatasetFile], reference: &ReferenceCalibration) -> Option<Result<f64>> {
    let d = datasets.iter().find(|d| d.wafer.label == reference.label)?;
    Some(capacitance_per_area_of(d).and_then(|ca| dielectric_constant_from(ca, reference.t_ox)))
}

/// Analyzes one wafer. Without an explicit `eps_r` the wafer must itself be
/// the configured reference.
pub fn analyze(d: &DatasetFile, config: &AnalysisConfig) -> WaferReport {
    let eps = resolve_eps(std::slice::from_ref(d), config);
    analyze_with(d, config, eps.as_ref(), Exec::default())
}

/// Analyzes several wafers; the permittivity is calibrated once on the
/// reference wafer when not given explicitly.
pub fn analyze_many(ds: &[DatasetFile], config: &AnalysisConfig, exec: Exec) -> Vec<WaferReport> {
    let eps = resolve_eps(ds, config);
    exec.map(ds, |d| analyze_with(d, config, eps.as_ref(), exec))
}

fn resolve_eps(ds: &[DatasetFile], config: &AnalysisConfig) -> Option<Result<(f64, String)>> {
    if let Some(e) = config.eps_r {
        return Some(Ok((e, "configured".into())));
    }
    let r = &config.reference;
    calibrate_eps_r(ds, r).map(|res| res.map(|e| (e, format!("calibrated on '{}' at {} nm", r.label, r.t_ox))))
}

fn analyze_with(
    d: &DatasetFile,
    config: &AnalysisConfig,
    eps: Option<&Result<(f64, String)>>,
    exec: Exec,
) -> WaferReport {
    let mut rep = WaferReport::empty(&d.wafer.label, d.wafer.etch_s);
    if let Err(e) = config.validate() {
        for stage in [Stage::Cap, Stage::Iv, Stage::Res, Stage::Bkd] {
            rep.fail(stage, &e);
        }
        return rep;
    }
    let s = config.stages;
    let mut t_ox = config.t_ox;
    if s.cap {
        match capacitance_stage(d, eps, &mut rep) {
            Ok(t) => t_ox = Some(t),
            Err(e) => rep.fail(Stage::Cap, e),
        }
    }
    if s.iv {
        if let Err(e) = iv_stage(d, config, t_ox, exec, &mut rep) {
            rep.fail(Stage::Iv, e);
        }
    }
    if s.res {
        if let Err(e) = resistance_stage(d, &mut rep) {
            rep.fail(Stage::Res, e);
        }
    }
    if s.bkd {
        if let Err(e) = breakdown_stage(d, config, t_ox, exec, &mut rep) {
            rep.fail(Stage::Bkd, e);
        }
    }
    rep
}

fn capacitance_stage(d: &DatasetFile, eps: Option<&Result<(f64, String)>>, rep: &mut WaferReport) -> Result<f64> {
    let maps = d.capacitance_maps()?;
    if maps.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut points = Vec::new();
    for m in &maps {
        if let Ok(st) = wafer_statistics(m) {
            rep.diagnostics.cap_maps.push(MapSummary {
                area: m.area,
                mean: st.mean,
                rsd_pct: st.rsd,
                yield_pct: st.yield_pct,
                n_valid: st.n_valid,
                n_probed: st.n_probed,
            });
            points.push((m.area, st.mean));
        }
    }
    let fit = fit_capacitance_per_area(&points)?;
    rep.ca.set(fit.slope, Some(fit.slope_stderr));
    rep.diagnostics.cap_intercept.set(fit.intercept, None);
    let (eps_r, source) = match eps {
        Some(Ok(e)) => e.clone(),
        Some(Err(e)) => return Err(Error::Invalid(format!("permittivity calibration failed: {e}"))),
        None => {
            return Err(Error::Invalid(
                "no permittivity: set eps_r or include the reference wafer".into(),
            ))
        }
    };
    rep.diagnostics.eps_r.set(eps_r, None);
    rep.diagnostics.eps_r_source = Some(source);
    let t = oxide_thickness_from_ca(fit.slope, eps_r)?;
    rep.t_ox.set(t, None);
    Ok(t)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn iv_stage(
    d: &DatasetFile,
    config: &AnalysisConfig,
    t_ox: Option<f64>,
    exec: Exec,
    rep: &mut WaferReport,
) -> Result<()> {
    let curves = d.iv_curves()?;
    if curves.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let t = t_ox.ok_or_else(|| Error::Invalid("no oxide thickness available for the k fit".into()))?;
    let opts = SegmentOptions {
        slope_tol: config.slope_tol,
        fn_r2_min: config.fn_r2_min,
        jump_factor: DEFAULT_SWEEP_JUMP_FACTOR,
    };
    let fits = exec.map(&curves, |c| {
        let seg = iv::classify_regimes(c, &opts)?;
        let k = iv::fit_k_from_segmentation(&seg, t, c.area, config.beta).map(|f| f.k);
        let fn_slope = iv::fit_fn_slope(c, &seg).ok().map(|f| f.slope);
        Ok::<_, Error>((k, fn_slope))
    });
    let mut ks = Vec::new();
    let mut slopes = Vec::new();
    let mut first_err = None;
    for f in fits {
        match f {
            Ok((Ok(k), s)) => {
                ks.push(k);
                slopes.extend(s);
            }
            Ok((Err(e), _)) | Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    rep.diagnostics.iv_fitted = ks.len();
    rep.diagnostics.iv_failed = curves.len() - ks.len();
    rep.diagnostics.fn_windows = slopes.len();
    if !slopes.is_empty() {
        rep.diagnostics.fn_slope.set(median(slopes), None);
    }
    if ks.is_empty() {
        return Err(first_err.unwrap_or(Error::NoDtWindow));
    }
    let sd = (ks.len() > 1).then(|| sample_std(&ks));
    let k = mean(&ks);
    rep.k.set(k, sd);
    if let Ok(phi) = units::barrier_height_from_k(k, config.beta, config.m_rel) {
        rep.diagnostics.phi.set(phi, None);
    }
    Ok(())
}

fn resistance_stage(d: &DatasetFile, rep: &mut WaferReport) -> Result<()> {
    let ds = d.resistance_dataset()?;
    if ds.records.is_empty() {
        return Err(Error::InsufficientData { needed: 3, got: 0 });
    }
    let r = decompose(&ds, &DecomposeOptions::default())?;
    rep.ra.set(r.ra, None);
    rep.ra_s.set(r.ra_s, None);
    let dg = &mut rep.diagnostics;
    dg.ra_initial.set(r.ra_initial, None);
    dg.res_iterations = Some(r.iterations);
    dg.res_converged = Some(r.converged);
    dg.res_dominance_violations = Some(r.dominance_violations);
    dg.res_rms_rel_residual = Some(r.rms_rel_residual);
    Ok(())
}

fn breakdown_stage(
    d: &DatasetFile,
    config: &AnalysisConfig,
    t_ox: Option<f64>,
    exec: Exec,
    rep: &mut WaferReport,
) -> Result<()> {
    let traces = d.ramp_traces()?;
    if traces.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let results = breakdown::detect_all(&traces, config.jump_factor, config.floor, exec);
    let mut v = Vec::new();
    for r in &results {
        match r {
            Ok(rec) => {
                v.push(rec.v_bt);
                rep.diagnostics.bkd_hard += usize::from(rec.hard);
            }
            Err(Error::NoBreakdown) => rep.diagnostics.bkd_survivors += 1,
            Err(e) => return Err(e.clone()),
        }
    }
    rep.diagnostics.bkd_detected = v.len();
    if v.is_empty() {
        return Err(Error::NoBreakdown);
    }
    v.sort_by(f64::total_cmp);
    let spread = |xs: &[f64]| (xs.len() > 1).then(|| sample_std(xs));
    rep.diagnostics.v_bt_all.set(mean(&v), spread(&v));
    rep.v_bt.set(mean(&v), spread(&v));

    let area = traces[0].area;
    if traces.iter().any(|t| t.area != area) {
        return Err(Error::Invalid("ramp traces mix junction areas".into()));
    }
    // The knee is scale-equivariant, so P_k does not need the thickness.
    let values = match t_ox {
        Some(t) => v
            .iter()
            .map(|&x| units::field_strength(x, t))
            .collect::<Result<Vec<_>>>()?,
        None => v.clone(),
    };
    let knee = breakdown::find_transition(&breakdown::weibull_transform(&values)?)?;
    let intrinsic = &v[knee.split + 1..];
    rep.v_bt.set(mean(intrinsic), spread(intrinsic));
    rep.diagnostics.p_k.set(knee.p_k, None);
    rep.d_crit
        .set(breakdown::critical_defect_density(knee.p_k, area)?, None);
    if t_ox.is_some() {
        rep.e_crit.set(knee.e_crit, None);
        Ok(())
    } else {
        Err(Error::Invalid(
            "no oxide thickness available: E_crit not computed".into(),
        ))
    }
}

/// Breakdown-voltage map [V]: ramped dies that broke are valid, ramped
/// survivors are invalid, unramped dies are not probed.
pub fn breakdown_map(d: &DatasetFile, jump_factor: f64, floor: f64) -> Result<Option<WaferMap<f64>>> {
    let Some(first) = d.ramps.first() else { return Ok(None) };
    let mut map = WaferMap::new(
        d.wafer.rows as usize,
        d.wafer.cols as usize,
        first.area,
        d.wafer.label.clone(),
    )?;
    for rec in &d.ramps {
        let (r, c) = (rec.row as usize, rec.col as usize);
        if r >= map.rows() || c >= map.cols() {
            return Err(Error::Invalid(format!(
                "ramp die ({r}, {c}) lies outside the wafer grid"
            )));
        }
        let cell = match breakdown::detect_breakdown(&rec.to_trace()?, jump_factor, floor) {
            Ok(b) => Cell::Valid(b.v_bt),
            Err(Error::NoBreakdown) => Cell::Invalid,
            Err(e) => return Err(e),
        };
        map.set(r, c, cell);
    }
    Ok(Some(map))
}

fn num(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{v:.6}"),
        None => "null".into(),
    }
}

fn quantity(q: &Quantity) -> String {
    let mut s = num(q.value);
    if let Some(sp) = q.spread {
        let _ = write!(s, " ± {sp:.6}");
    }
    if !q.unit.is_empty() {
        let _ = write!(s, " {}", q.unit);
    }
    s
}

/// Plain-text rendering; identical reports give identical bytes.
pub fn render_text(reports: &[WaferReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(out, "wafer {}", r.label);
        let rows: [(&str, &Quantity); 10] = [
            ("etch", &r.etch),
            ("C/A", &r.ca),
            ("t_ox", &r.t_ox),
            ("k", &r.k),
            ("RA", &r.ra),
            ("RA_S", &r.ra_s),
            ("V_BT", &r.v_bt),
            ("E_crit", &r.e_crit),
            ("D_crit", &r.d_crit),
            ("P_k", &r.diagnostics.p_k),
        ];
        for (name, q) in rows {
            let _ = writeln!(out, "  {name:<8} {}", quantity(q));
        }
        let dg = &r.diagnostics;
        let _ = writeln!(
            out,
            "  eps_r    {} ({})",
            num(dg.eps_r.value),
            dg.eps_r_source.as_deref().unwrap_or("none")
        );
        for m in &dg.cap_maps {
            let _ = writeln!(
                out,
                "  cap      area {} µm²: mean {:.6} fF, RSD {:.4} %, yield {:.2} % ({}/{})",
                m.area, m.mean, m.rsd_pct, m.yield_pct, m.n_valid, m.n_probed
            );
        }
        let _ = writeln!(out, "  C(0)     {}", quantity(&dg.cap_intercept));
        let _ = writeln!(
            out,
            "  iv       {} fitted, {} failed, {} FN windows",
            dg.iv_fitted, dg.iv_failed, dg.fn_windows
        );
        let _ = writeln!(out, "  FN slope {}", quantity(&dg.fn_slope));
        let _ = writeln!(out, "  phi      {}", quantity(&dg.phi));
        let _ = writeln!(
            out,
            "  res      initial RA {}, iterations {}, converged {}, dominance violations {}",
            quantity(&dg.ra_initial),
            dg.res_iterations.map_or("null".into(), |v| v.to_string()),
            dg.res_converged.map_or("null".into(), |v| v.to_string()),
            dg.res_dominance_violations.map_or("null".into(), |v| v.to_string()),
        );
        let _ = writeln!(
            out,
            "  bkd      {} detected ({} hard), {} survived the ramp",
            dg.bkd_detected, dg.bkd_hard, dg.bkd_survivors
        );
        let _ = writeln!(out, "  V_BT all {}", quantity(&dg.v_bt_all));
        if r.errors.is_empty() {
            let _ = writeln!(out, "  errors   none");
        }
        for e in &r.errors {
            let _ = writeln!(out, "  error    [{:?}] {}", e.stage, e.message);
        }
    }
    out
}

pub fn render_json(reports: &[WaferReport]) -> String {
    serde_json::to_string_pretty(reports).expect("report serializes") + "\n"
}
