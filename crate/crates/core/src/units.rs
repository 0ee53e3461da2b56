//! Physical constants and unit conversions.
//!
//! Public operations take the units used in wafer-test reports (nm, µm², fF,
//! MΩ·µm², eV, MV/cm); formulas are evaluated in SI. Every factor between the
//! two lives in a named conversion below.

use crate::error::{domain, Result};

/// CODATA 2018 values, plus the Fowler-Nordheim coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Elementary charge [C].
    pub e: f64,
    /// Reduced Planck constant [J·s].
    pub hbar: f64,
    /// Electron rest mass [kg].
    pub m_e: f64,
    /// Vacuum permittivity [F/m].
    pub eps0: f64,
    /// Fowler-Nordheim exponent coefficient [eV^(-3/2)·V/nm].
    pub b_fn: f64,
}

pub const CONSTANTS: PhysicalConstants = PhysicalConstants {
    e: 1.602_176_634e-19,
    hbar: 1.054_571_817e-34,
    m_e: 9.109_383_701_5e-31,
    eps0: 8.854_187_812_8e-12,
    b_fn: 6.83,
};

/// Effective-mass ratio m'/m_e for AlOx.
pub const DEFAULT_M_REL: f64 = 0.75;
/// Barrier shape factor for a Gaussian-like barrier.
pub const DEFAULT_BETA: f64 = 1.0;

pub fn nm_to_m(x: f64) -> f64 {
    x * 1e-9
}

pub fn m_to_nm(x: f64) -> f64 {
    x * 1e9
}

pub fn per_nm_to_per_m(k: f64) -> f64 {
    k * 1e9
}

pub fn per_m_to_per_nm(k: f64) -> f64 {
    k * 1e-9
}

pub fn um2_to_m2(a: f64) -> f64 {
    a * 1e-12
}

pub fn m2_to_um2(a: f64) -> f64 {
    a * 1e12
}

pub fn um2_to_cm2(a: f64) -> f64 {
    a * 1e-8
}

pub fn cm2_to_um2(a: f64) -> f64 {
    a * 1e8
}

pub fn ev_to_j(x: f64) -> f64 {
    x * CONSTANTS.e
}

pub fn j_to_ev(x: f64) -> f64 {
    x / CONSTANTS.e
}

pub fn ff_to_f(c: f64) -> f64 {
    c * 1e-15
}

pub fn f_to_ff(c: f64) -> f64 {
    c * 1e15
}

/// fF/µm² → F/m².
pub fn ff_per_um2_to_si(ca: f64) -> f64 {
    ca * 1e-3
}

/// F/m² → fF/µm².
pub fn si_to_ff_per_um2(ca: f64) -> f64 {
    ca * 1e3
}

/// Ω·m² → MΩ·µm².
pub fn ohm_m2_to_mohm_um2(ra: f64) -> f64 {
    ra * 1e6
}

/// MΩ·µm² → Ω·m².
pub fn mohm_um2_to_ohm_m2(ra: f64) -> f64 {
    ra * 1e-6
}

/// V/nm → MV/cm.
pub fn v_per_nm_to_mv_per_cm(f: f64) -> f64 {
    f * 10.0
}

/// MV/cm → V/nm.
pub fn mv_per_cm_to_v_per_nm(f: f64) -> f64 {
    f / 10.0
}

/// cm²/(V·s) → m²/(V·s).
pub fn mobility_cm2_to_m2(mu: f64) -> f64 {
    mu * 1e-4
}

/// Tunnel coefficient `k = 2β·sqrt(2Φm')/ħ` in 1/nm, for a barrier height in eV.
pub fn tunnel_coefficient(phi_ev: f64, beta: f64, m_rel: f64) -> Result<f64> {
    if !(phi_ev >= 0.0) {
        return Err(domain(format!("barrier height must be >= 0 eV, got {phi_ev}")));
    }
    check_shape(beta, m_rel)?;
    let c = &CONSTANTS;
    let k_si = 2.0 * beta * (2.0 * ev_to_j(phi_ev) * m_rel * c.m_e).sqrt() / c.hbar;
    Ok(per_m_to_per_nm(k_si))
}

/// Inverse of [`tunnel_coefficient`]: barrier height in eV from k in 1/nm.
pub fn barrier_height_from_k(k_per_nm: f64, beta: f64, m_rel: f64) -> Result<f64> {
    if !(k_per_nm >= 0.0) {
        return Err(domain(format!("tunnel coefficient must be >= 0, got {k_per_nm}")));
    }
    check_shape(beta, m_rel)?;
    let c = &CONSTANTS;
    let root = per_nm_to_per_m(k_per_nm) * c.hbar / (2.0 * beta);
    Ok(j_to_ev(root * root / (2.0 * m_rel * c.m_e)))
}

/// Breakdown field in MV/cm from a voltage and an oxide thickness in nm.
pub fn field_strength(v_bt: f64, t_ox_nm: f64) -> Result<f64> {
    if !(t_ox_nm > 0.0) {
        return Err(domain(format!("oxide thickness must be > 0 nm, got {t_ox_nm}")));
    }
    Ok(v_per_nm_to_mv_per_cm(v_bt / t_ox_nm))
}

fn check_shape(beta: f64, m_rel: f64) -> Result<()> {
    if !(beta > 0.0) {
        return Err(domain(format!("shape factor must be > 0, got {beta}")));
    }
    if !(m_rel > 0.0) {
        return Err(domain(format!("effective-mass ratio must be > 0, got {m_rel}")));
    }
    Ok(())
}
