//! Wafer maps and plate-capacitor analysis: `C/A = εr·ε0 / t_ox`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numeric::{fit_line, mean, sample_std};
use crate::units::{self, CONSTANTS};

/// State of one die on a wafer map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Cell<T> {
    /// Outside the wafer or never probed.
    NotProbed,
    /// Probed but flagged short/open by the prober.
    Invalid,
    Valid(T),
}

impl<T> Cell<T> {
    pub fn value(&self) -> Option<&T> {
        match self {
            Cell::Valid(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_probed(&self) -> bool {
        !matches!(self, Cell::NotProbed)
    }
}

/// Die-indexed grid of one per-junction measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaferMap<T> {
    rows: usize,
    cols: usize,
    cells: Vec<Cell<T>>,
    /// Junction area of the measured structure [µm²].
    pub area: f64,
    pub label: String,
}

impl<T: Clone> WaferMap<T> {
    pub fn new(rows: usize, cols: usize, area: f64, label: impl Into<String>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Invalid(format!(
                "wafer map must be at least 1x1, got {rows}x{cols}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            cells: vec![Cell::NotProbed; rows * cols],
            area,
            label: label.into(),
        })
    }

    pub fn from_rows(rows: Vec<Vec<Cell<T>>>, area: f64, label: impl Into<String>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
            return Err(Error::Invalid(
                "wafer map rows must be non-empty and equally long".into(),
            ));
        }
        Ok(Self {
            rows: r,
            cols: c,
            cells: rows.into_iter().flatten().collect(),
            area,
            label: label.into(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> &Cell<T> {
        &self.cells[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, cell: Cell<T>) {
        self.cells[row * self.cols + col] = cell;
    }

    /// `(row, col, cell)` in row-major order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, &Cell<T>)> {
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, c)| (i / self.cols, i % self.cols, c))
    }

    pub fn valid_values(&self) -> Vec<T> {
        self.cells.iter().filter_map(|c| c.value().cloned()).collect()
    }

    pub fn probed_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_probed()).count()
    }

    pub fn valid_count(&self) -> usize {
        self.cells.iter().filter(|c| c.value().is_some()).count()
    }
}

/// Across-wafer summary of a scalar map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaferStats {
    pub mean: f64,
    /// Relative standard deviation [%], sample standard deviation over mean.
    pub rsd: f64,
    /// Functional fraction of probed dies [%].
    pub yield_pct: f64,
    pub n_valid: usize,
    pub n_probed: usize,
}

pub fn wafer_statistics(map: &WaferMap<f64>) -> Result<WaferStats> {
    let values = map.valid_values();
    if values.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: values.len(),
        });
    }
    let m = mean(&values);
    let sd = sample_std(&values);
    let n_probed = map.probed_count();
    Ok(WaferStats {
        mean: m,
        rsd: 100.0 * sd / m,
        yield_pct: 100.0 * values.len() as f64 / n_probed as f64,
        n_valid: values.len(),
        n_probed,
    })
}

/// Linear regression of mean capacitance on area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacitanceRegression {
    /// C/A [fF/µm²].
    pub slope: f64,
    pub slope_stderr: f64,
    /// Offset at zero area [fF]; reported, never subtracted.
    pub intercept: f64,
    /// (area [µm²], mean capacitance [fF]) per structure size.
    pub points: Vec<(f64, f64)>,
    pub residual_se: f64,
}

/// OLS of C on A over per-area wafer means.
pub fn fit_capacitance_per_area(points: &[(f64, f64)]) -> Result<CapacitanceRegression> {
    let mut areas: Vec<f64> = points.iter().map(|p| p.0).collect();
    areas.sort_by(f64::total_cmp);
    areas.dedup();
    match areas.len() {
        0 => return Err(Error::InsufficientData { needed: 3, got: 0 }),
        1 => return Err(Error::Degenerate("all areas are equal".into())),
        2 => return Err(Error::InsufficientData { needed: 3, got: 2 }),
        _ => {}
    }
    let (a, c): (Vec<f64>, Vec<f64>) = points.iter().copied().unzip();
    let fit = fit_line(&a, &c)?;
    Ok(CapacitanceRegression {
        slope: fit.slope,
        slope_stderr: fit.slope_stderr,
        intercept: fit.intercept,
        points: points.to_vec(),
        residual_se: fit.residual_se,
    })
}

/// (area, mean capacitance) from one map per structure size.
pub fn mean_points(maps: &[WaferMap<f64>]) -> Result<Vec<(f64, f64)>> {
    maps.iter().map(|m| Ok((m.area, wafer_statistics(m)?.mean))).collect()
}

/// Oxide thickness [nm] from C/A [fF/µm²].
pub fn oxide_thickness_from_ca(ca: f64, eps_r: f64) -> Result<f64> {
    if !(ca > 0.0) {
        return Err(domain(format!("C/A must be > 0, got {ca}")));
    }
    if !(eps_r >= 1.0) {
        return Err(domain(format!("eps_r must be >= 1, got {eps_r}")));
    }
    Ok(units::m_to_nm(eps_r * CONSTANTS.eps0 / units::ff_per_um2_to_si(ca)))
}

/// Relative permittivity from C/A [fF/µm²] and a known thickness [nm].
pub fn dielectric_constant_from(ca: f64, t_ox: f64) -> Result<f64> {
    if !(ca > 0.0) || !(t_ox > 0.0) {
        return Err(domain(format!("C/A and t_ox must be > 0, got {ca}, {t_ox}")));
    }
    Ok(units::ff_per_um2_to_si(ca) * units::nm_to_m(t_ox) / CONSTANTS.eps0)
}

/// C/A [fF/µm²] of a plate capacitor.
pub fn capacitance_per_area(eps_r: f64, t_ox: f64) -> f64 {
    units::si_to_ff_per_um2(eps_r * CONSTANTS.eps0 / units::nm_to_m(t_ox))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn map_of(values: &[Option<f64>], cols: usize) -> WaferMap<f64> {
        let rows = values
            .chunks(cols)
            .map(|ch| ch.iter().map(|v| v.map_or(Cell::Invalid, Cell::Valid)).collect())
            .collect();
        WaferMap::from_rows(rows, 50.0, "t").unwrap()
    }

    #[test]
    fn statistics_of_constant_map() {
        let m = map_of(&[Some(3.0); 6], 3);
        let s = wafer_statistics(&m).unwrap();
        assert_eq!((s.mean, s.rsd, s.yield_pct), (3.0, 0.0, 100.0));
    }

    #[test]
    fn yield_counts_invalid_dies() {
        let mut v = vec![Some(1.0); 140];
        v[5] = None;
        v[77] = None;
        let s = wafer_statistics(&map_of(&v, 14)).unwrap();
        assert!((s.yield_pct - 98.57).abs() < 0.01);
        assert!((s.yield_pct - 98.6).abs() < 0.05);
        assert_eq!(s.n_valid, 138);
    }

    #[test]
    fn not_probed_cells_do_not_count() {
        let mut m = WaferMap::new(2, 2, 1.0, "x").unwrap();
        m.set(0, 0, Cell::Valid(1.0));
        m.set(1, 1, Cell::Valid(3.0));
        let s = wafer_statistics(&m).unwrap();
        assert_eq!(s.n_probed, 2);
        assert_eq!(s.yield_pct, 100.0);
        assert_eq!(s.mean, 2.0);
        assert!(wafer_statistics(&WaferMap::<f64>::new(2, 2, 1.0, "x").unwrap()).is_err());
        assert!(WaferMap::<f64>::new(0, 2, 1.0, "x").is_err());
    }

    #[test]
    fn regression_exact_and_shifted() {
        let areas = [1.0, 25.0, 50.0, 100.0, 400.0, 1600.0];
        let pts: Vec<(f64, f64)> = areas.iter().map(|&a| (a, 20.0 * a)).collect();
        let r = fit_capacitance_per_area(&pts).unwrap();
        assert_relative_eq!(r.slope, 20.0, max_relative = 1e-9);
        assert!(r.intercept.abs() < 1e-9);
        let shifted: Vec<(f64, f64)> = pts.iter().map(|&(a, c)| (a, c + 5.0)).collect();
        let r = fit_capacitance_per_area(&shifted).unwrap();
        assert_relative_eq!(r.slope, 20.0, max_relative = 1e-9);
        assert_relative_eq!(r.intercept, 5.0, max_relative = 1e-9);
    }

    #[test]
    fn regression_needs_distinct_areas() {
        let same = [(5.0, 1.0), (5.0, 2.0), (5.0, 3.0)];
        assert!(matches!(fit_capacitance_per_area(&same), Err(Error::Degenerate(_))));
        let two = [(5.0, 1.0), (6.0, 2.0), (5.0, 3.0)];
        assert!(matches!(
            fit_capacitance_per_area(&two),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn thickness_and_permittivity() {
        // Oracle: 10 · 8.8541878128e-12 / 0.020 F/m² = 4.42709 nm
        assert_relative_eq!(
            oxide_thickness_from_ca(20.0, 10.0).unwrap(),
            4.427_093_906_4,
            max_relative = 1e-9
        );
        assert!((oxide_thickness_from_ca(29.0, 10.0).unwrap() - 3.05).abs() < 0.005);
        assert_relative_eq!(
            oxide_thickness_from_ca(20.0, 20.0).unwrap(),
            2.0 * oxide_thickness_from_ca(20.0, 10.0).unwrap(),
            max_relative = 1e-15
        );
        // Oracle: 0.020 · 4.4e-9 / 8.8541878128e-12
        assert_relative_eq!(
            dielectric_constant_from(20.0, 4.4).unwrap(),
            9.938_799_786,
            max_relative = 1e-9
        );
        let vacuum_ca = units::si_to_ff_per_um2(CONSTANTS.eps0 / 1e-9);
        assert_relative_eq!(
            dielectric_constant_from(vacuum_ca, 1.0).unwrap(),
            1.0,
            max_relative = 1e-14
        );
        assert!(oxide_thickness_from_ca(0.0, 10.0).is_err());
        assert!(oxide_thickness_from_ca(20.0, 0.5).is_err());
        assert!(dielectric_constant_from(-1.0, 4.4).is_err());
        assert!(dielectric_constant_from(20.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn plate_model_round_trip(ca in 0.1f64..500.0, eps in 1.0f64..50.0) {
            let t = oxide_thickness_from_ca(ca, eps).unwrap();
            prop_assert!((dielectric_constant_from(ca, t).unwrap() / eps - 1.0).abs() < 1e-12);
            prop_assert!((capacitance_per_area(eps, t) / ca - 1.0).abs() < 1e-12);
        }

        #[test]
        fn statistics_are_permutation_invariant(mut v in proptest::collection::vec(0.5f64..2.0, 4..60), seed in any::<u64>()) {
            let n = v.len();
            let a = wafer_statistics(&map_of(&v.iter().map(|&x| Some(x)).collect::<Vec<_>>(), n)).unwrap();
            // deterministic shuffle
            let mut s = seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                v.swap(i, (s >> 33) as usize % (i + 1));
            }
            let b = wafer_statistics(&map_of(&v.iter().map(|&x| Some(x)).collect::<Vec<_>>(), n)).unwrap();
            prop_assert!((a.mean - b.mean).abs() <= 1e-12 * a.mean);
            prop_assert!((a.rsd - b.rsd).abs() <= 1e-9 * a.rsd.max(1e-12));
        }
    }
}
