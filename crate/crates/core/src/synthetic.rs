//! Seeded forward generator of complete wafer datasets.
//!
//! Every die of the circular wafer mask owns a ChaCha8 substream keyed by
//! its grid position (`stream = row·cols + col`), so the draws of one die do
//! not depend on how many other dies exist or on the order they are
//! generated in. The resistance series draws from a separate stream.
//!
//! Per die, in order: thickness jitter, dead-die flag, one capacitance noise
//! term per area, I-V noise, defect count and fields, intrinsic breakdown
//! field, ramp noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::breakdown::{RampTrace, DEFAULT_RATE, DEFAULT_STEP};
use crate::capacitance::{capacitance_per_area, dielectric_constant_from, Cell, WaferMap};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::geometry::{JunctionGeometry, DEFAULT_BOTTOM_HEIGHT_UM};
use crate::resistance::{junction_resistance, ResistanceDataset, ResistanceRecord};
use crate::transport::{
    composite_current, dt_area_resistance, dt_conductance, fn_scale_for_crossover, voltage_grid, IvCurve, OxideModel,
};
use crate::units;

const RESISTANCE_STREAM: u64 = u64::MAX;
/// Post-breakdown current multiplier planted in ramp traces.
pub const BREAKDOWN_JUMP: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThicknessField {
    /// Linear gradient along the columns: thickness change from the centre
    /// to the grid edge [%].
    pub linear_pct: f64,
    /// Radial bowl: thickness change from the centre to the grid edge [%].
    pub radial_pct: f64,
    /// Per-die Gaussian jitter [%].
    pub jitter_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub capacitance_pct: f64,
    pub current_pct: f64,
    pub resistance_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvSpec {
    /// Junction area of the I-V structure [µm²].
    pub area: f64,
    pub v_start: f64,
    pub v_stop: f64,
    pub points: usize,
    /// Voltage where Fowler-Nordheim current equals direct tunneling [V].
    pub fn_crossover: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AreaResistanceSource {
    /// Fixed values [MΩ·µm²].
    Explicit { ra: f64, ra_s: f64 },
    /// Both from direct tunneling; the sidewall uses its own tunnel coefficient.
    Tunneling { k_sidewall: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResistanceSpec {
    /// Electrode widths [µm]; every (w_top, w_bot) pair is generated.
    pub widths: Vec<f64>,
    /// Bottom-electrode height [µm].
    pub h: f64,
    pub source: AreaResistanceSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownSpec {
    /// Area of the ramped junction [µm²].
    pub area: f64,
    pub step: f64,
    pub rate: f64,
    pub v_max: f64,
    /// Steps recorded after breakdown.
    pub tail_steps: usize,
    /// Intrinsic breakdown field [MV/cm] and its spread [%].
    pub intrinsic_field: f64,
    pub intrinsic_sigma_pct: f64,
    /// Weak-spot density [defects/cm²].
    pub defect_density: f64,
    pub defect_field: f64,
    pub defect_sigma_pct: f64,
}

/// Ground-truth description of a wafer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaferSpec {
    pub label: String,
    /// Etch time [s]; absent for an unetched wafer.
    pub etch_s: Option<f64>,
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    /// Radius of the circular mask relative to the half-width of the grid.
    pub mask_radius: f64,
    /// Oxide model; `t_ox` is the nominal wafer thickness.
    pub model: OxideModel,
    pub thickness: ThicknessField,
    /// Capacitance test-structure areas [µm²].
    pub cap_areas: Vec<f64>,
    pub noise: NoiseSpec,
    /// Probability that a die is dead (all of its measurements invalid).
    pub failure_rate: f64,
    pub iv: IvSpec,
    pub resistance: ResistanceSpec,
    pub breakdown: BreakdownSpec,
}

/// Table of nominal process parameters per preset wafer:
/// (label, etch [s], t_ox [nm], k [1/nm], RA, RA_S [MΩ·µm²], V_BT [V], V_BT sd [V]).
type PresetRow = (&'static str, Option<f64>, f64, f64, f64, f64, f64, f64);

const PRESETS: [PresetRow; 4] = [
    ("ref", None, 4.4, 15.7, 11e3, 12e3, 2.18, 0.06),
    ("etch10", Some(10.0), 3.5, 17.8, 11.0, 3.1, 1.66, 0.07),
    ("etch20", Some(20.0), 3.3, 18.4, 2.9, 2.2, 1.56, 0.07),
    ("etch30", Some(30.0), 3.1, 19.3, 1.5, 1.7, 1.51, 0.07),
];

/// Relative permittivity giving 20 fF/µm² at 4.4 nm, shared by all presets.
pub fn preset_eps_r() -> f64 {
    dielectric_constant_from(20.0, 4.4).expect("positive inputs")
}
/// Expected defective fraction of a 25 µm² ramp junction in the presets.
pub const PRESET_DEFECTIVE_FRACTION: f64 = 0.13;

impl WaferSpec {
    pub fn preset_names() -> Vec<&'static str> {
        PRESETS.iter().map(|p| p.0).collect()
    }

    /// Wafers patterned on the reference and the three etched oxides.
    pub fn preset(name: &str) -> Result<Self> {
        let &(label, etch_s, t_ox, k, ra, ra_s, v_bt, v_sd) = PRESETS
            .iter()
            .find(|p| p.0 == name)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown preset '{name}'")))?;
        let mut model = OxideModel::from_k(t_ox, preset_eps_r(), k)?;
        model.fn_scale = fn_scale_for_crossover(1.0, &model)?;
        let area = 25.0;
        let intrinsic_field = units::field_strength(v_bt, t_ox)?;
        let spec = Self {
            label: label.into(),
            etch_s,
            seed: 1,
            rows: 14,
            cols: 14,
            mask_radius: 0.95,
            model,
            thickness: ThicknessField {
                linear_pct: 0.0,
                radial_pct: 1.0,
                jitter_pct: 1.0,
            },
            cap_areas: vec![1.0, 5.0, 25.0, 50.0, 100.0, 400.0, 1600.0],
            noise: NoiseSpec {
                capacitance_pct: 1.5,
                current_pct: 1.0,
                resistance_pct: 2.0,
            },
            failure_rate: 0.0,
            iv: IvSpec {
                area,
                v_start: 0.01,
                v_stop: 1.1,
                points: 110,
                fn_crossover: Some(1.0),
            },
            resistance: ResistanceSpec {
                widths: vec![0.35, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 40.0],
                h: DEFAULT_BOTTOM_HEIGHT_UM,
                source: AreaResistanceSource::Explicit { ra, ra_s },
            },
            breakdown: BreakdownSpec {
                area,
                step: DEFAULT_STEP,
                rate: DEFAULT_RATE,
                v_max: 4.0,
                tail_steps: 5,
                intrinsic_field,
                intrinsic_sigma_pct: 100.0 * v_sd / v_bt,
                defect_density: -(1.0 - PRESET_DEFECTIVE_FRACTION).ln() / units::um2_to_cm2(area),
                defect_field: 0.65 * intrinsic_field,
                defect_sigma_pct: 10.0,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidSpec(m));
        self.model.validate().map_err(|e| Error::InvalidSpec(e.to_string()))?;
        if self.rows == 0 || self.cols == 0 {
            return bad("grid must have at least one row and column".into());
        }
        if !(self.mask_radius > 0.0) {
            return bad(format!("mask radius must be > 0, got {}", self.mask_radius));
        }
        let t = &self.thickness;
        let sigmas = [
            ("thickness.linear_pct", t.linear_pct.abs()),
            ("thickness.radial_pct", t.radial_pct.abs()),
            ("thickness.jitter_pct", t.jitter_pct),
            ("noise.capacitance_pct", self.noise.capacitance_pct),
            ("noise.current_pct", self.noise.current_pct),
            ("noise.resistance_pct", self.noise.resistance_pct),
            ("breakdown.intrinsic_sigma_pct", self.breakdown.intrinsic_sigma_pct),
            ("breakdown.defect_sigma_pct", self.breakdown.defect_sigma_pct),
            ("breakdown.defect_density", self.breakdown.defect_density),
        ];
        if let Some((name, v)) = sigmas.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return bad(format!("{name} must be >= 0, got {v}"));
        }
        // The smooth field must stay positive over the whole mask.
        let reach = self.mask_radius.max(1.0);
        if t.linear_pct.abs() * reach + t.radial_pct.abs() * reach * reach >= 90.0 {
            return bad("thickness gradients must stay below 90% over the mask".into());
        }
        if !(0.0..1.0).contains(&self.failure_rate) {
            return bad(format!("failure_rate must lie in [0, 1), got {}", self.failure_rate));
        }
        if self.cap_areas.is_empty() || self.cap_areas.iter().any(|a| !(*a > 0.0)) {
            return bad("cap_areas must be non-empty and positive".into());
        }
        let iv = &self.iv;
        if !(iv.area > 0.0) || !(iv.v_start > 0.0) || !(iv.v_stop > iv.v_start) || iv.points < 2 {
            return bad("iv sweep needs area > 0, 0 < v_start < v_stop and at least 2 points".into());
        }
        if let Some(v) = iv.fn_crossover {
            if !(v > 0.0) {
                return bad(format!("fn_crossover must be > 0, got {v}"));
            }
        }
        let r = &self.resistance;
        if r.widths.iter().any(|w| !(*w > 0.0)) || !(r.h > 0.0) {
            return bad("resistance widths and h must be positive".into());
        }
        match r.source {
            AreaResistanceSource::Explicit { ra, ra_s } if !(ra > 0.0 && ra_s > 0.0) => {
                return bad("explicit RA and RA_S must be positive".into());
            }
            AreaResistanceSource::Tunneling { k_sidewall } if !(k_sidewall >= 0.0) => {
                return bad("k_sidewall must be >= 0".into());
            }
            _ => {}
        }
        let b = &self.breakdown;
        if !(b.area > 0.0 && b.step > 0.0 && b.rate > 0.0 && b.v_max > b.step && b.intrinsic_field > 0.0) {
            return bad("breakdown needs positive area, step, rate, intrinsic field and v_max > step".into());
        }
        if self.breakdown.defect_density > 0.0 && !(b.defect_field > 0.0) {
            return bad("defect_field must be > 0".into());
        }
        Ok(())
    }

    /// Dies inside the circular mask, row-major.
    pub fn dies(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let (x, y) = self.die_position(r, c);
                if x * x + y * y <= self.mask_radius * self.mask_radius {
                    out.push((r as u32, c as u32));
                }
            }
        }
        out
    }

    /// Die centre in units of the grid half-width, origin at the wafer centre.
    fn die_position(&self, r: usize, c: usize) -> (f64, f64) {
        let x = ((c as f64 + 0.5) / self.cols as f64 - 0.5) * 2.0;
        let y = ((r as f64 + 0.5) / self.rows as f64 - 0.5) * 2.0;
        (x, y)
    }

    /// Smooth thickness field before jitter [nm].
    pub fn nominal_thickness(&self, r: usize, c: usize) -> f64 {
        let (x, y) = self.die_position(r, c);
        let t = &self.thickness;
        self.model.t_ox * (1.0 + t.linear_pct / 100.0 * x + t.radial_pct / 100.0 * (x * x + y * y))
    }

    /// Top and sidewall area resistances [MΩ·µm²].
    pub fn area_resistances(&self) -> (f64, f64) {
        match self.resistance.source {
            AreaResistanceSource::Explicit { ra, ra_s } => (ra, ra_s),
            AreaResistanceSource::Tunneling { k_sidewall } => (
                dt_area_resistance(self.model.k, self.model.t_ox, self.model.beta),
                dt_area_resistance(k_sidewall, self.model.t_ox, self.model.beta),
            ),
        }
    }
}

/// Truncated-at-zero Gaussian draw of an intrinsic breakdown field [MV/cm].
pub fn intrinsic_breakdown_field_sample<R: Rng + ?Sized>(rng: &mut R, mean: f64, sigma_pct: f64) -> f64 {
    if sigma_pct == 0.0 {
        return mean;
    }
    truncated_normal(rng, mean, mean * sigma_pct / 100.0)
}

fn truncated_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        let v = mean + sd * z;
        if v > 0.0 {
            return v;
        }
    }
}

fn rel_noise<R: Rng + ?Sized>(rng: &mut R, pct: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    1.0 + pct / 100.0 * z
}

/// Ground truth for one die.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DieTruth {
    pub row: u32,
    pub col: u32,
    /// Local oxide thickness [nm].
    pub t_ox: f64,
    pub dead: bool,
    pub defects: u32,
    /// Breakdown field of the ramp junction [MV/cm].
    pub e_bd: f64,
    /// Breakdown voltage before quantization to the ramp grid [V].
    pub v_bt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub model: OxideModel,
    /// Mean over the live dies [nm].
    pub t_ox_mean: f64,
    /// `εr·ε0·mean(1/t)` over the live dies [fF/µm²].
    pub ca: f64,
    pub ra: f64,
    pub ra_s: f64,
    pub dies: Vec<DieTruth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub spec: WaferSpec,
    pub truth: GroundTruth,
    /// One map per capacitance area [fF].
    pub capacitance: Vec<WaferMap<f64>>,
    pub iv: Vec<IvCurve>,
    pub resistance: ResistanceDataset,
    pub ramps: Vec<RampTrace>,
}

struct DieOutput {
    truth: DieTruth,
    caps: Vec<Cell<f64>>,
    iv: Option<IvCurve>,
    ramp: Option<RampTrace>,
}

fn die_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn generate_die(spec: &WaferSpec, row: u32, col: u32, iv_grid: &[f64]) -> Result<DieOutput> {
    let mut rng = die_rng(spec.seed, row as u64 * spec.cols as u64 + col as u64);
    let nominal = spec.nominal_thickness(row as usize, col as usize);
    let jitter = spec.thickness.jitter_pct / 100.0 * nominal;
    let t_ox = if jitter > 0.0 {
        truncated_normal(&mut rng, nominal, jitter)
    } else {
        nominal
    };
    let dead = rng.random::<f64>() < spec.failure_rate;
    let model = OxideModel { t_ox, ..spec.model };

    let caps = spec
        .cap_areas
        .iter()
        .map(|&a| {
            let c = capacitance_per_area(model.eps_r, t_ox) * a;
            let noisy = c * rel_noise(&mut rng, spec.noise.capacitance_pct);
            if dead {
                Cell::Invalid
            } else {
                Cell::Valid(noisy)
            }
        })
        .collect();

    let iv_area = spec.iv.area;
    let iv_points: Vec<(f64, f64)> = iv_grid
        .iter()
        .map(|&v| {
            (
                v,
                composite_current(v, iv_area, &model) * rel_noise(&mut rng, spec.noise.current_pct),
            )
        })
        .collect();

    let b = &spec.breakdown;
    let lambda = b.defect_density * units::um2_to_cm2(b.area);
    let defects = if lambda > 0.0 {
        Poisson::new(lambda)
            .map_err(|e| Error::InvalidSpec(e.to_string()))?
            .sample(&mut rng) as u32
    } else {
        0
    };
    let mut e_bd = f64::INFINITY;
    for _ in 0..defects {
        e_bd = e_bd.min(truncated_normal(
            &mut rng,
            b.defect_field,
            b.defect_field * b.defect_sigma_pct / 100.0,
        ));
    }
    e_bd = e_bd.min(intrinsic_breakdown_field_sample(
        &mut rng,
        b.intrinsic_field,
        b.intrinsic_sigma_pct,
    ));
    let v_bt = units::mv_per_cm_to_v_per_nm(e_bd) * t_ox;

    let g = dt_conductance(b.area, model.k, t_ox, model.beta).amps;
    let mut ramp_points = Vec::new();
    let mut broken_at = None;
    for n in 1.. {
        let v = n as f64 * b.step;
        if v > b.v_max + 1e-9 * b.step || broken_at.is_some_and(|m| n >= m + b.tail_steps) {
            break;
        }
        if broken_at.is_none() && v >= v_bt - 1e-12 {
            broken_at = Some(n);
        }
        let jump = if broken_at.is_some() { BREAKDOWN_JUMP } else { 1.0 };
        ramp_points.push((v, g * v * jump * rel_noise(&mut rng, spec.noise.current_pct)));
    }

    let die = Some((row, col));
    let (iv, ramp) = if dead {
        (None, None)
    } else {
        (
            Some(IvCurve::new(iv_points, iv_area, die)?),
            Some(RampTrace::new(ramp_points, b.step, b.rate, b.area, die)?),
        )
    };
    Ok(DieOutput {
        truth: DieTruth {
            row,
            col,
            t_ox,
            dead,
            defects,
            e_bd,
            v_bt,
        },
        caps,
        iv,
        ramp,
    })
}

fn generate_resistance(spec: &WaferSpec, ra: f64, ra_s: f64) -> Result<ResistanceDataset> {
    let mut rng = die_rng(spec.seed, RESISTANCE_STREAM);
    let normal = Normal::new(0.0, spec.noise.resistance_pct / 100.0).map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut records = Vec::new();
    for &w_top in &spec.resistance.widths {
        for &w_bot in &spec.resistance.widths {
            let g = JunctionGeometry::new(w_top, w_bot, spec.resistance.h)?;
            let r = junction_resistance(&g, ra, ra_s) * (1.0 + normal.sample(&mut rng));
            records.push(ResistanceRecord::new(g, r)?);
        }
    }
    Ok(ResistanceDataset::new(records))
}

/// Generates every measurement of a wafer. Identical specs give identical
/// datasets regardless of `exec`.
pub fn generate_wafer(spec: &WaferSpec, exec: Exec) -> Result<SyntheticDataset> {
    spec.validate()?;
    let dies = spec.dies();
    let mut model = spec.model;
    if let Some(v) = spec.iv.fn_crossover {
        model.fn_scale = fn_scale_for_crossover(v, &model)?;
    }
    let spec_eff = WaferSpec { model, ..spec.clone() };
    let iv_grid = voltage_grid(spec.iv.v_start, spec.iv.v_stop, spec.iv.points);
    let outputs = exec
        .map(&dies, |&(r, c)| generate_die(&spec_eff, r, c, &iv_grid))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let mut capacitance = spec
        .cap_areas
        .iter()
        .map(|&a| WaferMap::new(spec.rows, spec.cols, a, spec.label.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut iv = Vec::new();
    let mut ramps = Vec::new();
    let mut truths = Vec::with_capacity(outputs.len());
    for out in outputs {
        let (r, c) = (out.truth.row as usize, out.truth.col as usize);
        for (map, cell) in capacitance.iter_mut().zip(out.caps) {
            map.set(r, c, cell);
        }
        iv.extend(out.iv);
        ramps.extend(out.ramp);
        truths.push(out.truth);
    }

    let live: Vec<f64> = truths.iter().filter(|d| !d.dead).map(|d| d.t_ox).collect();
    let n_live = live.len().max(1) as f64;
    let t_ox_mean = live.iter().sum::<f64>() / n_live;
    let inv_t = live.iter().map(|t| 1.0 / t).sum::<f64>() / n_live;
    let ca = capacitance_per_area(model.eps_r, 1.0) * inv_t;
    let (ra, ra_s) = spec.area_resistances();
    let resistance = generate_resistance(spec, ra, ra_s)?;
    Ok(SyntheticDataset {
        spec: spec.clone(),
        truth: GroundTruth {
            model,
            t_ox_mean,
            ca,
            ra,
            ra_s,
            dies: truths,
        },
        capacitance,
        iv,
        resistance,
        ramps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::breakdown::detect_breakdown;
    use crate::capacitance::wafer_statistics;
    use approx::assert_relative_eq;

    fn quiet(mut s: WaferSpec) -> WaferSpec {
        s.thickness = ThicknessField {
            linear_pct: 0.0,
            radial_pct: 0.0,
            jitter_pct: 0.0,
        };
        s.noise = NoiseSpec {
            capacitance_pct: 0.0,
            current_pct: 0.0,
            resistance_pct: 0.0,
        };
        s.breakdown.defect_density = 0.0;
        s
    }

    #[test]
    fn mask_has_140_dies() {
        let s = WaferSpec::preset("ref").unwrap();
        assert_eq!(s.dies().len(), 140);
    }

    #[test]
    fn presets_are_valid() {
        for name in WaferSpec::preset_names() {
            let s = WaferSpec::preset(name).unwrap();
            assert_eq!(s.label, name);
        }
        assert!(WaferSpec::preset("etch40").is_err());
        assert_relative_eq!(capacitance_per_area(preset_eps_r(), 4.4), 20.0, max_relative = 1e-12);
    }

    #[test]
    fn noiseless_wafer_is_uniform() {
        let d = generate_wafer(&quiet(WaferSpec::preset("ref").unwrap()), Exec::default()).unwrap();
        for map in &d.capacitance {
            let st = wafer_statistics(map).unwrap();
            assert_eq!(st.rsd, 0.0);
            assert_eq!(st.n_valid, 140);
            let exact = capacitance_per_area(preset_eps_r(), 4.4) * map.area;
            assert!(map.valid_values().iter().all(|c| (c - exact).abs() <= 1e-12 * exact));
        }
        assert_relative_eq!(d.truth.ca, 20.0, max_relative = 1e-12);
    }

    #[test]
    fn defect_free_ramps_break_near_intrinsic_voltage() {
        let mut s = quiet(WaferSpec::preset("ref").unwrap());
        s.thickness.jitter_pct = 2.0;
        s.breakdown.intrinsic_sigma_pct = 3.0;
        let d = generate_wafer(&s, Exec::default()).unwrap();
        for (ramp, truth) in d.ramps.iter().zip(&d.truth.dies) {
            let r = detect_breakdown(ramp, 10.0, 1e-9).unwrap();
            assert!(r.hard);
            let expect = truth.e_bd * truth.t_ox / 10.0;
            assert!(r.v_bt >= expect - 1e-9 && r.v_bt - expect < s.breakdown.step + 1e-9);
        }
    }

    #[test]
    fn defect_counts_follow_poisson_mean() {
        let mut s = WaferSpec::preset("ref").unwrap();
        s.rows = 60;
        s.cols = 60;
        s.breakdown.defect_density = 4e6;
        let d = generate_wafer(&s, Exec::default()).unwrap();
        let n = d.truth.dies.len() as f64;
        let lambda = 4e6 * units::um2_to_cm2(25.0);
        let mean = d.truth.dies.iter().map(|t| t.defects as f64).sum::<f64>() / n;
        assert!((mean - lambda).abs() < 3.0 * (lambda / n).sqrt(), "{mean} vs {lambda}");
    }

    #[test]
    fn generation_is_deterministic() {
        let s = WaferSpec::preset("etch20").unwrap().with_seed(42);
        let a = serde_json::to_string(&generate_wafer(&s, Exec::Sequential).unwrap()).unwrap();
        let b = serde_json::to_string(&generate_wafer(&s, Exec::Parallel).unwrap()).unwrap();
        let c = serde_json::to_string(&generate_wafer(&s, Exec::Sequential).unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        let other =
            serde_json::to_string(&generate_wafer(&s.clone().with_seed(43), Exec::Sequential).unwrap()).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn growing_the_grid_keeps_existing_dies() {
        let small = WaferSpec::preset("ref").unwrap();
        let mut big = small.clone();
        big.mask_radius = 1.4;
        let a = generate_wafer(&small, Exec::default()).unwrap();
        let b = generate_wafer(&big, Exec::default()).unwrap();
        assert!(b.truth.dies.len() > a.truth.dies.len());
        for t in &a.truth.dies {
            assert!(b.truth.dies.contains(t));
        }
    }

    #[test]
    fn dead_dies_are_invalid_everywhere() {
        let mut s = WaferSpec::preset("ref").unwrap();
        s.failure_rate = 0.2;
        let d = generate_wafer(&s, Exec::default()).unwrap();
        let dead: Vec<_> = d.truth.dies.iter().filter(|t| t.dead).collect();
        assert!(!dead.is_empty());
        for t in dead {
            for map in &d.capacitance {
                assert_eq!(*map.get(t.row as usize, t.col as usize), Cell::Invalid);
            }
            assert!(d.ramps.iter().all(|r| r.die != Some((t.row, t.col))));
        }
        assert_eq!(d.iv.len(), d.truth.dies.iter().filter(|t| !t.dead).count());
    }

    #[test]
    fn spec_validation() {
        let base = WaferSpec::preset("ref").unwrap();
        let mut s = base.clone();
        s.noise.current_pct = -1.0;
        assert!(matches!(s.validate(), Err(Error::InvalidSpec(_))));
        let mut s = base.clone();
        s.thickness.radial_pct = -95.0;
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.failure_rate = 1.0;
        assert!(s.validate().is_err());
        let mut s = base;
        s.breakdown.defect_density = f64::NAN;
        assert!(generate_wafer(&s, Exec::Sequential).is_err());
    }

    #[test]
    fn tunneling_resistance_source() {
        let mut s = WaferSpec::preset("ref").unwrap();
        s.resistance.source = AreaResistanceSource::Tunneling { k_sidewall: 15.0 };
        let (ra, ra_s) = s.area_resistances();
        assert_relative_eq!(ra, dt_area_resistance(15.7, 4.4, 1.0));
        assert!(ra_s < ra);
    }

    #[test]
    fn intrinsic_field_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert_eq!(intrinsic_breakdown_field_sample(&mut rng, 4.95, 0.0), 4.95);
        let n = 100_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| intrinsic_breakdown_field_sample(&mut rng, 4.95, 3.0))
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!((mean / 4.95 - 1.0).abs() < 0.005);
        let wide: Vec<f64> = (0..10_000)
            .map(|_| intrinsic_breakdown_field_sample(&mut rng, 1.0, 150.0))
            .collect();
        assert!(wide.iter().all(|&e| e > 0.0));
    }
}
