//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

#![allow(clippy::approx_constant)]

use std::process::ExitCode;
use std::time::{Duration, Instant};

use jjchar_core::breakdown::{self, critical_defect_density, DEFAULT_FLOOR, DEFAULT_JUMP_FACTOR};
use jjchar_core::capacitance::{capacitance_per_area, dielectric_constant_from, wafer_statistics};
use jjchar_core::dataset::{self, DatasetFile, Format};
use jjchar_core::geometry::JunctionGeometry;
use jjchar_core::iv::{self, SegmentOptions};
use jjchar_core::report::{analyze, analyze_many, AnalysisConfig, Stages};
use jjchar_core::resistance::junction_resistance;
use jjchar_core::synthetic::{generate_wafer, preset_eps_r, SyntheticDataset, WaferSpec};
use jjchar_core::transport::{self, IvCurve, OxideModel};
use jjchar_core::units::{field_strength, tunnel_coefficient};
use jjchar_core::Exec;

const PRESETS: [&str; 4] = ["ref", "etch10", "etch20", "etch30"];

/// Nominal (t_ox [nm], k [1/nm], RA [MΩ·µm²]) of the four process rows.
const ROWS: [(&str, f64, f64, f64); 4] = [
    ("ref", 4.4, 15.7, 11e3),
    ("etch10", 3.5, 17.8, 11.0),
    ("etch20", 3.3, 18.4, 2.9),
    ("etch30", 3.1, 19.3, 1.5),
];

struct Checks {
    items: Vec<(String, bool)>,
}

impl Checks {
    fn new() -> Self {
        Self { items: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.items.push((what.into(), ok));
    }

    fn passed(&self) -> bool {
        self.items.iter().all(|(_, ok)| *ok)
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a / b - 1.0).abs()
}

fn generate(spec: &WaferSpec) -> SyntheticDataset {
    generate_wafer(spec, Exec::default()).expect("valid spec")
}

fn preset(name: &str) -> WaferSpec {
    WaferSpec::preset(name).expect("known preset")
}

fn criterion_1(c: &mut Checks) {
    let k = tunnel_coefficient(3.14, 1.0, 0.75).unwrap();
    c.check(
        (k - 15.7).abs() <= 0.05,
        format!("k(3.14 eV, 1, 0.75) = {k:.6} 1/nm, want 15.7 ± 0.05"),
    );
    let eps = dielectric_constant_from(20.0, 4.4).unwrap();
    c.check(
        (eps - 9.94).abs() <= 0.01,
        format!("eps_r(20 fF/µm², 4.4 nm) = {eps:.6}, want 9.94 ± 0.01"),
    );
    let e = field_strength(2.18, 4.4).unwrap();
    let quoted = (e * 100.0).round() / 100.0;
    c.check(
        quoted == 4.95 && rel(quoted, 4.5) <= 0.10 + 1e-12,
        format!(
            "E(2.18 V, 4.4 nm) = {e:.6} MV/cm, quoted {quoted:.2}; {:.2} % from 4.5 at quoted precision, {:.2} % unrounded",
            100.0 * rel(quoted, 4.5),
            100.0 * rel(e, 4.5)
        ),
    );
}

fn criterion_2(c: &mut Checks) {
    for (label, t, k, ra) in ROWS {
        let implied = transport::dt_area_resistance(k, t, 1.0);
        let ratio = implied / ra;
        c.check(
            (0.5..=2.0).contains(&ratio),
            format!("{label}: implied RA {implied:.4} vs {ra} MΩ·µm² (ratio {ratio:.3})"),
        );
    }
}

fn noiseless(name: &str) -> WaferSpec {
    let mut s = preset(name);
    s.noise.capacitance_pct = 0.0;
    s.noise.current_pct = 0.0;
    s.noise.resistance_pct = 0.0;
    s.thickness.jitter_pct = 0.0;
    s
}

fn criterion_3(c: &mut Checks) {
    let config = AnalysisConfig {
        eps_r: Some(preset_eps_r()),
        stages: Stages {
            cap: true,
            iv: false,
            res: true,
            bkd: false,
        },
        ..Default::default()
    };
    for name in PRESETS {
        let spec = noiseless(name);
        let g = generate(&spec);
        let r = analyze(&DatasetFile::from_synthetic(&g), &config);
        let (ca, t) = (r.ca.value.unwrap_or(f64::NAN), r.t_ox.value.unwrap_or(f64::NAN));
        c.check(
            rel(ca, g.truth.ca) <= 1e-3 && rel(t, g.truth.t_ox_mean) <= 1e-3,
            format!(
                "{name}: C/A {ca:.5} vs {:.5}, t_ox {t:.5} vs {:.5} nm (0.1 %)",
                g.truth.ca, g.truth.t_ox_mean
            ),
        );
        let (ra0, ras0) = spec.area_resistances();
        let (ra, ras) = (r.ra.value.unwrap_or(f64::NAN), r.ra_s.value.unwrap_or(f64::NAN));
        c.check(
            rel(ra, ra0) <= 5e-3 && rel(ras, ras0) <= 5e-3,
            format!(
                "{name}: RA {ra:.5} vs {ra0}, RA_S {ras:.5} vs {ras0} MΩ·µm² (0.5 %, errors {:.2e} / {:.2e})",
                rel(ra, ra0),
                rel(ras, ras0)
            ),
        );

        let m = spec.model;
        let volts = transport::voltage_grid(spec.iv.v_start, spec.iv.v_stop, spec.iv.points);
        let curve = IvCurve::sample(&volts, spec.iv.area, |v| {
            transport::composite_current(v, spec.iv.area, &m)
        })
        .unwrap();
        let k = iv::fit_k_from_dt(&curve, m.t_ox, spec.iv.area, m.beta)
            .map(|f| f.k)
            .unwrap_or(f64::NAN);
        c.check(
            rel(k, m.k) <= 1e-3,
            format!("{name}: fit_k_from_dt {k:.6} vs {} 1/nm (0.1 %)", m.k),
        );

        let fn_curve = IvCurve::sample(&transport::voltage_grid(1.0, 3.0, 60), spec.iv.area, |v| {
            transport::fowler_nordheim_current(v, spec.iv.area, &m)
        })
        .unwrap();
        let want = -m.fn_exponent_coefficient();
        let slope = iv::classify_regimes(&fn_curve, &SegmentOptions::default())
            .and_then(|seg| iv::fit_fn_slope(&fn_curve, &seg))
            .map(|f| f.slope)
            .unwrap_or(f64::NAN);
        c.check(
            rel(slope, want) <= 1e-3,
            format!("{name}: FN slope {slope:.5} vs -b·t·Φ^1.5 = {want:.5} V (0.1 %)"),
        );
    }
    let volts = transport::voltage_grid(0.1, 2.0, 40);
    for m_exp in [1.0, 2.0, 2.5, 3.7] {
        let curve = IvCurve::sample(&volts, 25.0, |v| transport::power_law_current(v, 1e-6, m_exp)).unwrap();
        let got = iv::fit_msclc_exponent(&curve, (0.1, 2.0)).unwrap_or(f64::NAN);
        c.check(
            (got - m_exp).abs() <= 1e-6,
            format!("power-law exponent {got:.9} vs {m_exp} (1e-6)"),
        );
    }
}

fn criterion_4(c: &mut Checks) {
    const SEEDS: u64 = 100;
    const SIGMA_PCT: f64 = 2.3;
    const AREA: f64 = 50.0;
    let mut base = preset("ref");
    base.noise.capacitance_pct = SIGMA_PCT;
    base.noise.current_pct = 1.0;
    base.thickness.radial_pct = 0.0;
    base.thickness.linear_pct = 0.0;
    base.thickness.jitter_pct = 0.0;
    base.cap_areas = vec![AREA];
    let config = AnalysisConfig {
        eps_r: Some(preset_eps_r()),
        t_ox: Some(base.model.t_ox),
        stages: Stages {
            cap: false,
            iv: true,
            res: false,
            bkd: false,
        },
        ..Default::default()
    };
    let seeds: Vec<u64> = (0..SEEDS).collect();
    let outcomes = Exec::default().map(&seeds, |&seed| {
        let spec = base.clone().with_seed(seed);
        let g = generate_wafer(&spec, Exec::Sequential).expect("valid spec");
        let stats = wafer_statistics(&g.capacitance[0]).expect("live dies");
        let expected = capacitance_per_area(preset_eps_r(), spec.model.t_ox) * AREA;
        let r = analyze(&DatasetFile::from_synthetic(&g), &config);
        (
            rel(stats.mean, expected),
            (stats.rsd - SIGMA_PCT).abs(),
            r.k.value.unwrap_or(f64::NAN) - spec.model.k,
        )
    });
    let worst = |f: fn(&(f64, f64, f64)) -> f64| outcomes.iter().map(f).fold(0.0, |a: f64, b| a.max(b.abs()));
    let count = |f: &dyn Fn(&(f64, f64, f64)) -> bool| outcomes.iter().filter(|o| f(o)).count();

    let mean_ok = count(&|o| o.0 <= 5e-3);
    let mean_err: Vec<f64> = outcomes.iter().map(|o| o.0).collect();
    let ensemble = mean_err.iter().sum::<f64>() / SEEDS as f64;
    c.check(
        mean_ok == SEEDS as usize,
        format!(
            "mean C within 0.5 %: {mean_ok}/{SEEDS} seeds, worst {:.3} %, average |error| {:.3} %",
            100.0 * worst(|o| o.0),
            100.0 * ensemble
        ),
    );
    let rsd_ok = count(&|o| o.1 <= 0.5);
    c.check(
        rsd_ok == SEEDS as usize,
        format!(
            "RSD within 0.5 pp of {SIGMA_PCT} %: {rsd_ok}/{SEEDS} seeds, worst {:.3} pp",
            worst(|o| o.1)
        ),
    );
    let k_ok = count(&|o| o.2.abs() <= 0.1);
    c.check(
        k_ok == SEEDS as usize,
        format!(
            "k within ±0.1 1/nm at 1 % current noise: {k_ok}/{SEEDS} seeds, worst {:.4}",
            worst(|o| o.2)
        ),
    );
}

fn criterion_5(c: &mut Checks) {
    let spec = preset("ref");
    let g = generate(&spec);
    let live: Vec<_> = g.truth.dies.iter().filter(|d| !d.dead).collect();
    let defective = live.iter().filter(|d| d.defects > 0).count();
    let t = g.truth.t_ox_mean;
    let fields: Vec<f64> = breakdown::detect_all(&g.ramps, DEFAULT_JUMP_FACTOR, DEFAULT_FLOOR, Exec::default())
        .into_iter()
        .map(|r| field_strength(r.expect("every ramp breaks").v_bt, t).unwrap())
        .collect();
    let w = breakdown::analyze_fields(&fields).unwrap();
    match w.knee {
        Some(k) => {
            c.check(
                (k.p_k - 0.129).abs() <= 0.04,
                format!(
                    "bimodal wafer (n = {}, {defective} with defects): P_k = {:.4}, want 0.129 ± 0.04",
                    fields.len(),
                    k.p_k
                ),
            );
            c.check(
                (4.2..=5.0).contains(&k.e_crit),
                format!("E_crit = {:.4} MV/cm, want [4.2, 5.0]", k.e_crit),
            );
        }
        None => c.check(false, "bimodal wafer: no knee found"),
    }

    let mut single = spec.clone();
    single.breakdown.defect_density = 0.0;
    let g = generate(&single);
    let fields: Vec<f64> = breakdown::detect_all(&g.ramps, DEFAULT_JUMP_FACTOR, DEFAULT_FLOOR, Exec::default())
        .into_iter()
        .map(|r| field_strength(r.expect("every ramp breaks").v_bt, t).unwrap())
        .collect();
    let w = breakdown::analyze_fields(&fields).unwrap();
    c.check(
        w.knee.is_none(),
        format!(
            "single-population wafer (n = {}): knee = {:?}",
            fields.len(),
            w.knee.map(|k| k.p_k)
        ),
    );

    let d = critical_defect_density(0.129, 25.0).unwrap();
    c.check(
        rel(d, 5.53e5) <= 0.01,
        format!("D_crit(0.129, 25 µm²) = {d:.1} defects/cm², want 5.53e5 ± 1 %"),
    );
}

fn criterion_6(c: &mut Checks) {
    let ds: Vec<DatasetFile> = PRESETS
        .iter()
        .map(|n| DatasetFile::from_synthetic(&generate(&preset(n))))
        .collect();
    let reports = analyze_many(&ds, &AnalysisConfig::default(), Exec::default());
    let column = |name: &str, get: fn(&jjchar_core::report::WaferReport) -> Option<f64>, increasing: bool| {
        let v: Vec<f64> = reports.iter().map(|r| get(r).unwrap_or(f64::NAN)).collect();
        let ok = v.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
        let shown: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
        (
            ok,
            format!(
                "{name} {} : {}",
                if increasing { "increasing" } else { "decreasing" },
                shown.join(" → ")
            ),
        )
    };
    for (ok, line) in [
        column("C/A [fF/µm²]", |r| r.ca.value, true),
        column("t_ox [nm]", |r| r.t_ox.value, false),
        column("k [1/nm]", |r| r.k.value, true),
        column("V_BT [V]", |r| r.v_bt.value, false),
    ] {
        c.check(ok, line);
    }
    let errors: usize = reports.iter().map(|r| r.errors.len()).sum();
    c.check(errors == 0, format!("stage errors: {errors}"));
}

fn criterion_7(c: &mut Checks) {
    // Top-area limit of the junction resistance as the sidewall resistance grows.
    let g = JunctionGeometry::new(2.0, 10.0, 0.12).unwrap();
    let limit = 11e3 / (g.w_top() * g.w_bot());
    let errs: Vec<f64> = [1e4, 1e6, 1e8, 1e10]
        .iter()
        .map(|&s| rel(junction_resistance(&g, 11e3, 11e3 * s), limit))
        .collect();
    c.check(
        errs.windows(2).all(|w| w[1] < w[0]) && errs[3] < 1e-9,
        format!("R → RA/(w_top·w_bot) as RA_S grows: relative errors {errs:?}"),
    );

    let m = OxideModel::from_barrier(4.4, 10.0, 3.14, 1.0, 0.75)
        .unwrap()
        .with_mobility(1.0)
        .unwrap();
    let m = m
        .with_fn_scale(transport::fn_scale_for_crossover(1.0, &m).unwrap())
        .unwrap();
    let slope = |f: &dyn Fn(f64) -> f64, v: f64| {
        let h = 1e-5;
        (f(v * (1.0 + h)).ln() - f(v * (1.0 - h)).ln()) / ((1.0 + h).ln() - (1.0 - h).ln())
    };
    let mut worst: f64 = 0.0;
    for v in [0.05, 0.5, 1.5] {
        worst = worst.max((slope(&|x| transport::direct_tunneling_current(x, 25.0, &m), v) - 1.0).abs());
        worst = worst.max((slope(&|x| transport::mott_gurney_current(x, 25.0, &m).unwrap(), v) - 2.0).abs());
        worst = worst.max((slope(&|x| transport::power_law_current(x, 2.0, 3.7), v) - 3.7).abs());
    }
    c.check(
        worst < 1e-7,
        format!("log-log slopes 1, 2, m: worst deviation {worst:.1e}"),
    );

    let mut worst: f64 = 0.0;
    for v in [0.05, 0.3, 0.8, 1.2, 2.0] {
        let h = 1e-6 * v;
        let fd =
            (transport::composite_current(v + h, 25.0, &m) - transport::composite_current(v - h, 25.0, &m)) / (2.0 * h);
        worst = worst.max(rel(fd, transport::composite_conductance(v, 25.0, &m)));
    }
    c.check(
        worst < 1e-6,
        format!("dI/dV vs central difference: worst relative error {worst:.1e}"),
    );

    let spec = preset("etch20");
    let a = DatasetFile::from_synthetic(&generate_wafer(&spec, Exec::Sequential).unwrap()).to_json();
    let b = DatasetFile::from_synthetic(&generate_wafer(&spec, Exec::default()).unwrap()).to_json();
    let again = DatasetFile::from_synthetic(&generate_wafer(&spec, Exec::default()).unwrap()).to_json();
    c.check(
        a == b && b == again,
        format!("generate_wafer byte-identical under a fixed seed ({} bytes)", a.len()),
    );

    let original = DatasetFile::from_synthetic(&generate(&preset("ref")));
    let dir = tempfile::tempdir().unwrap();
    let mut exact = true;
    for format in [Format::Text, Format::Json] {
        let path = dir.path().join(format!("ref.{}", format.extension()));
        dataset::write_dataset(&original, &path, format).unwrap();
        exact &= dataset::ingest(&path, format).map(|d| d == original).unwrap_or(false);
    }
    for map in original.capacitance_maps().unwrap() {
        let path = dir.path().join(format!("cap_{}.csv", map.area));
        dataset::export_wafer_grid(&map, "capacitance", "fF", &path).unwrap();
        let (back, meta) = dataset::read_wafer_grid(&path).unwrap();
        exact &= meta.is_some() && back.iter().zip(map.iter()).all(|(x, y)| x.2.value() == y.2.value());
    }
    c.check(exact, "dataset text/JSON and wafer-grid round trips exact");
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn(&mut Checks), Duration);
    let criteria: [Criterion; 7] = [
        ("1 constant evaluation", criterion_1, Duration::from_secs(1)),
        ("2 DT self-consistency", criterion_2, Duration::from_secs(1)),
        ("3 noiseless oracle round trips", criterion_3, Duration::from_secs(10)),
        ("4 noisy statistical recovery", criterion_4, Duration::from_secs(120)),
        ("5 breakdown suite", criterion_5, Duration::from_secs(60)),
        ("6 trend reproduction", criterion_6, Duration::from_secs(60)),
        ("7 property suites", criterion_7, Duration::from_secs(60)),
    ];
    let mut all = true;
    for (name, run, budget) in criteria {
        let mut c = Checks::new();
        let start = Instant::now();
        run(&mut c);
        let elapsed = start.elapsed();
        c.check(
            elapsed < budget,
            format!("runtime {:.2} s (budget {} s)", elapsed.as_secs_f64(), budget.as_secs()),
        );
        let ok = c.passed();
        all &= ok;
        println!("criterion {name}: {}", if ok { "PASS" } else { "FAIL" });
        for (what, ok) in &c.items {
            println!("    [{}] {what}", if *ok { "ok" } else { "FAIL" });
        }
    }
    println!("acceptance: {}", if all { "PASS" } else { "FAIL" });
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
