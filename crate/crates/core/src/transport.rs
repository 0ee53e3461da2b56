//! Forward current models for a metal/oxide/metal tunnel junction.
//!
//! Four conduction channels are modelled:
//!
//! ```text
//! direct tunneling   I = α·k·A·V·exp(-k·t)/t,   α = e / (8·β²·π²·ħ)
//! Mott-Gurney        I = 9/8 · A·µ·ε0·εr·V² / t³
//! power law (mSCLC)  I = p·V^m
//! Fowler-Nordheim    I = s·A·V²/(Φ·t²) · exp(-b·t·Φ^(3/2)/V)
//! ```
//!
//! The direct-tunneling prefactor is evaluated literally in SI (k in 1/m,
//! A in m², t in m) and the result is read as amperes. Dimensionally the
//! expression is a rate, not a current, but with the reference barrier it
//! reproduces measured area-resistances to within a factor of two, so it is
//! kept as is.
//!
//! The Fowler-Nordheim law is a proportionality; `fn_scale` absorbs the
//! missing constant and the expression is evaluated with A in µm², t in nm,
//! Φ in eV, V in volts.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::units::{self, CONSTANTS};

/// Exponent below which an exponential is flushed to zero.
pub const UNDERFLOW_EXPONENT: f64 = -700.0;

/// Oxide barrier parameters shared by all channels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OxideModel {
    /// Oxide thickness [nm].
    pub t_ox: f64,
    /// Relative permittivity.
    pub eps_r: f64,
    /// Tunnel coefficient [1/nm].
    pub k: f64,
    /// Barrier height [eV]; when absent it is derived from `k`, `beta` and `m_rel`.
    pub phi: Option<f64>,
    pub beta: f64,
    pub m_rel: f64,
    /// Electron mobility [cm²/(V·s)], needed only for Mott-Gurney.
    pub mu: Option<f64>,
    /// Fowler-Nordheim prefactor calibration.
    pub fn_scale: f64,
}

impl OxideModel {
    /// Model from a fitted tunnel coefficient, default β and m'.
    pub fn from_k(t_ox: f64, eps_r: f64, k: f64) -> Result<Self> {
        let m = Self {
            t_ox,
            eps_r,
            k,
            phi: None,
            beta: units::DEFAULT_BETA,
            m_rel: units::DEFAULT_M_REL,
            mu: None,
            fn_scale: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    /// Model from a barrier height; k follows from Φ, β and m'.
    pub fn from_barrier(t_ox: f64, eps_r: f64, phi: f64, beta: f64, m_rel: f64) -> Result<Self> {
        let k = units::tunnel_coefficient(phi, beta, m_rel)?;
        let m = Self {
            t_ox,
            eps_r,
            k,
            phi: Some(phi),
            beta,
            m_rel,
            mu: None,
            fn_scale: 1.0,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn with_mobility(mut self, mu: f64) -> Result<Self> {
        self.mu = Some(mu);
        self.validate()?;
        Ok(self)
    }

    pub fn with_fn_scale(mut self, s: f64) -> Result<Self> {
        self.fn_scale = s;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        if !(self.t_ox > 0.0 && self.t_ox.is_finite()) {
            return bad(format!("t_ox must be > 0 nm, got {}", self.t_ox));
        }
        if !(self.eps_r >= 1.0 && self.eps_r.is_finite()) {
            return bad(format!("eps_r must be >= 1, got {}", self.eps_r));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return bad(format!("k must be >= 0, got {}", self.k));
        }
        if !(self.beta > 0.0) || !(self.m_rel > 0.0) {
            return bad(format!(
                "beta and m_rel must be > 0, got {} and {}",
                self.beta, self.m_rel
            ));
        }
        if !(self.fn_scale >= 0.0 && self.fn_scale.is_finite()) {
            return bad(format!("fn_scale must be >= 0, got {}", self.fn_scale));
        }
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return bad(format!("mobility must be > 0, got {mu}"));
            }
        }
        if let Some(phi) = self.phi {
            let k = units::tunnel_coefficient(phi, self.beta, self.m_rel)?;
            let scale = k.abs().max(self.k.abs()).max(f64::MIN_POSITIVE);
            if (k - self.k).abs() / scale > 1e-9 {
                return bad(format!("k = {} inconsistent with phi = {phi} eV (expects {k})", self.k));
            }
        }
        Ok(())
    }

    /// Barrier height in eV, explicit or implied by `k`.
    pub fn barrier(&self) -> f64 {
        match self.phi {
            Some(phi) => phi,
            None => units::barrier_height_from_k(self.k, self.beta, self.m_rel).unwrap_or(f64::NAN),
        }
    }

    /// `b·t·Φ^(3/2)` [V]; the negative of the Fowler-Nordheim plot slope.
    pub fn fn_exponent_coefficient(&self) -> f64 {
        CONSTANTS.b_fn * self.t_ox * self.barrier().powf(1.5)
    }
}

/// A current evaluation that may have flushed an exponential to zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub amps: f64,
    pub underflow: bool,
}

/// `α = e / (8β²π²ħ)` in SI.
pub fn dt_alpha(beta: f64) -> f64 {
    CONSTANTS.e / (8.0 * beta * beta * std::f64::consts::PI.powi(2) * CONSTANTS.hbar)
}

/// Ohmic conductance [A/V] of the direct-tunneling channel for a junction area in µm².
pub fn dt_conductance(area: f64, k: f64, t_ox: f64, beta: f64) -> Evaluation {
    let kt = k * t_ox;
    if -kt < UNDERFLOW_EXPONENT {
        return Evaluation {
            amps: 0.0,
            underflow: true,
        };
    }
    let k_si = units::per_nm_to_per_m(k);
    let t_si = units::nm_to_m(t_ox);
    let g = dt_alpha(beta) * k_si * units::um2_to_m2(area) * (-kt).exp() / t_si;
    Evaluation {
        amps: g,
        underflow: false,
    }
}

/// Area-resistance [MΩ·µm²] implied by the direct-tunneling channel.
pub fn dt_area_resistance(k: f64, t_ox: f64, beta: f64) -> f64 {
    let g = dt_conductance(1.0, k, t_ox, beta).amps;
    // 1 µm² junction: R [Ω] · 1 µm² → MΩ·µm² is a factor 1e-6
    1e-6 / g
}

pub fn direct_tunneling(v: f64, area: f64, m: &OxideModel) -> Evaluation {
    let g = dt_conductance(area, m.k, m.t_ox, m.beta);
    Evaluation {
        amps: g.amps * v,
        underflow: g.underflow,
    }
}

/// Direct-tunneling current [A] at bias `v` [V] through `area` [µm²].
pub fn direct_tunneling_current(v: f64, area: f64, m: &OxideModel) -> f64 {
    direct_tunneling(v, area, m).amps
}

/// Coefficient `c` of `I = c·V²` for the Mott-Gurney law [A/V²].
pub fn mott_gurney_prefactor(area: f64, m: &OxideModel) -> Result<f64> {
    let mu =
        m.mu.ok_or_else(|| Error::Invalid("Mott-Gurney current needs an explicit mobility".into()))?;
    let t = units::nm_to_m(m.t_ox);
    Ok(9.0 / 8.0 * units::um2_to_m2(area) * units::mobility_cm2_to_m2(mu) * CONSTANTS.eps0 * m.eps_r / t.powi(3))
}

/// Trap-free space-charge-limited current [A].
pub fn mott_gurney_current(v: f64, area: f64, m: &OxideModel) -> Result<f64> {
    if !(v >= 0.0) {
        return Err(domain(format!("Mott-Gurney bias must be >= 0 V, got {v}")));
    }
    Ok(mott_gurney_prefactor(area, m)? * v * v)
}

/// `prefactor · v^m_exp` [A].
pub fn power_law_current(v: f64, prefactor: f64, m_exp: f64) -> f64 {
    prefactor * v.powf(m_exp)
}

pub fn fowler_nordheim(v: f64, area: f64, m: &OxideModel) -> Evaluation {
    if !(v > 0.0) || m.fn_scale == 0.0 {
        return Evaluation {
            amps: 0.0,
            underflow: false,
        };
    }
    let phi = m.barrier();
    let exponent = -m.fn_exponent_coefficient() / v;
    if exponent < UNDERFLOW_EXPONENT {
        return Evaluation {
            amps: 0.0,
            underflow: true,
        };
    }
    let amps = m.fn_scale * area * v * v / (phi * m.t_ox * m.t_ox) * exponent.exp();
    Evaluation { amps, underflow: false }
}

/// Fowler-Nordheim current [A]; zero for `v <= 0`.
pub fn fowler_nordheim_current(v: f64, area: f64, m: &OxideModel) -> f64 {
    fowler_nordheim(v, area, m).amps
}

/// `fn_scale` that makes the Fowler-Nordheim channel equal the
/// direct-tunneling channel at `v_cross`.
pub fn fn_scale_for_crossover(v_cross: f64, m: &OxideModel) -> Result<f64> {
    if !(v_cross > 0.0) {
        return Err(domain(format!("crossover voltage must be > 0, got {v_cross}")));
    }
    let unit = OxideModel { fn_scale: 1.0, ..*m };
    let b = unit.fn_exponent_coefficient();
    // log space: exp(-b/v) alone underflows for thick barriers
    let phi = unit.barrier();
    let g = dt_conductance(1.0, m.k, m.t_ox, m.beta);
    if g.underflow {
        return Err(Error::Invalid("direct-tunneling channel underflows".into()));
    }
    let ln_dt = (g.amps * v_cross).ln();
    let ln_fn = (v_cross * v_cross / (phi * m.t_ox * m.t_ox)).ln() - b / v_cross;
    let s = (ln_dt - ln_fn).exp();
    if !s.is_finite() {
        return Err(Error::Invalid(format!(
            "crossover at {v_cross} V needs an unrepresentable fn_scale"
        )));
    }
    Ok(s)
}

/// Parallel conduction through direct tunneling and Fowler-Nordheim emission.
pub fn composite_current(v: f64, area: f64, m: &OxideModel) -> f64 {
    direct_tunneling_current(v, area, m) + fowler_nordheim_current(v, area, m)
}

/// Analytic dI/dV of [`composite_current`] [A/V].
pub fn composite_conductance(v: f64, area: f64, m: &OxideModel) -> f64 {
    let g_dt = dt_conductance(area, m.k, m.t_ox, m.beta).amps;
    let fnc = fowler_nordheim_current(v, area, m);
    let g_fn = if v > 0.0 {
        fnc * (2.0 / v + m.fn_exponent_coefficient() / (v * v))
    } else {
        0.0
    };
    g_dt + g_fn
}

/// Analytic d ln I / d ln V of the Fowler-Nordheim channel.
pub fn fn_log_log_slope(v: f64, m: &OxideModel) -> f64 {
    2.0 + m.fn_exponent_coefficient() / v
}

/// An I-V sweep of one junction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IvCurve {
    points: Vec<(f64, f64)>,
    /// Junction area [µm²].
    pub area: f64,
    pub die: Option<(u32, u32)>,
}

impl IvCurve {
    /// `points` are (voltage [V], current [A]) with strictly increasing voltage.
    pub fn new(points: Vec<(f64, f64)>, area: f64, die: Option<(u32, u32)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: points.len(),
            });
        }
        for (i, w) in points.windows(2).enumerate() {
            if !(w[1].0 > w[0].0) {
                return Err(Error::Invalid(format!(
                    "voltages not strictly increasing at point {}: {} then {}",
                    i + 1,
                    w[0].0,
                    w[1].0
                )));
            }
        }
        if let Some(i) = points.iter().position(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::Invalid(format!("non-finite sample at point {i}")));
        }
        if !(area > 0.0) {
            return Err(Error::Invalid(format!("area must be > 0, got {area}")));
        }
        Ok(Self { points, area, die })
    }

    /// Samples `f` on the given voltages.
    pub fn sample<F: Fn(f64) -> f64>(voltages: &[f64], area: f64, f: F) -> Result<Self> {
        Self::new(voltages.iter().map(|&v| (v, f(v))).collect(), area, None)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn voltages(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn currents(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }

    /// Same curve with every current multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            points: self.points.iter().map(|&(v, i)| (v, i * factor)).collect(),
            area: self.area,
            die: self.die,
        }
    }
}

/// `n` evenly spaced voltages from `start` to `stop` inclusive.
pub fn voltage_grid(start: f64, stop: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    let step = (stop - start) / (n - 1) as f64;
    (0..n).map(|i| start + step * i as f64).collect()
}
