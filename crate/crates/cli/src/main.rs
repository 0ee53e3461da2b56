//! `jjchar`: simulate, analyze and report tunnel-junction wafer data.

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jjchar_core::dataset::{self, DatasetFile, Format, IngestError};
use jjchar_core::report::{self, AnalysisConfig, Stages, WaferReport};
use jjchar_core::synthetic::{generate_wafer, WaferSpec};
use jjchar_core::Exec;

#[derive(Parser)]
#[command(
    name = "jjchar",
    version,
    about = "Wafer-scale characterization of Al/AlOx/Al tunnel junctions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic wafer dataset and its ground truth.
    Simulate(SimulateArgs),
    /// Run one analysis stage, or all of them, and print the report.
    Analyze {
        stage: StageArg,
        #[command(flatten)]
        common: AnalysisArgs,
    },
    /// Run the full pipeline and write the report plus wafer-map grids.
    Report {
        #[command(flatten)]
        common: AnalysisArgs,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in wafer: ref, etch10, etch20 or etch30.
    #[arg(long, conflicts_with = "spec", required_unless_present = "spec")]
    preset: Option<String>,
    /// Wafer spec file (TOML, or JSON with a .json extension).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct AnalysisArgs {
    /// Dataset files; the format follows the extension (.json or text).
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// TOML analysis configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    eps_r: Option<f64>,
    /// Oxide thickness [nm] used when no capacitance result is available.
    #[arg(long)]
    t_ox: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    m_rel: Option<f64>,
    #[arg(long)]
    jump_factor: Option<f64>,
    #[arg(long)]
    slope_tol: Option<f64>,
    #[arg(long)]
    fn_r2_min: Option<f64>,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    /// Output directory; `analyze` prints to stdout without it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    Cap,
    Iv,
    Res,
    Bkd,
    All,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Json => Format::Json,
        }
    }
}

enum Failure {
    Validation(String),
    Analysis(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Analysis(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Validation(m) | Failure::Analysis(m) | Failure::Io(m) => f.write_str(m),
        }
    }
}

impl From<IngestError> for Failure {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Io { .. } => Failure::Io(e.to_string()),
            IngestError::Invalid { .. } => Failure::Validation(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Failure + '_ {
    move |e| Failure::Io(format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a),
        Command::Analyze { stage, common } => analyze(stage, &common, false),
        Command::Report { common } => analyze(StageArg::All, &common, true),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn read_spec(path: &Path) -> Result<WaferSpec, Failure> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let parsed = if Format::from_path(path) == Format::Json {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn simulate(a: &SimulateArgs) -> Result<(), Failure> {
    let mut spec = match (&a.preset, &a.spec) {
        (Some(name), _) => WaferSpec::preset(name).map_err(|e| Failure::Validation(e.to_string()))?,
        (None, Some(path)) => read_spec(path)?,
        (None, None) => unreachable!("clap requires one of --preset and --spec"),
    };
    if let Some(seed) = a.seed {
        spec = spec.with_seed(seed);
    }
    let synthetic = generate_wafer(&spec, Exec::default()).map_err(|e| Failure::Validation(e.to_string()))?;
    std::fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let format = Format::from(a.format);
    let data_path = a.out.join(format!("{}.{}", spec.label, format.extension()));
    dataset::write_dataset(&DatasetFile::from_synthetic(&synthetic), &data_path, format)?;
    let truth = serde_json::json!({ "spec": synthetic.spec, "truth": synthetic.truth });
    let truth_path = a.out.join(format!("{}.truth.json", spec.label));
    let body = serde_json::to_string_pretty(&truth).expect("truth serializes") + "\n";
    dataset::write_atomic(&truth_path, body.as_bytes()).map_err(io_err(&truth_path))?;
    println!("{}", data_path.display());
    println!("{}", truth_path.display());
    Ok(())
}

fn config(a: &AnalysisArgs, stage: StageArg) -> Result<AnalysisConfig, Failure> {
    let mut c = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(io_err(path))?;
            toml::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?
        }
        None => AnalysisConfig::default(),
    };
    c.eps_r = a.eps_r.or(c.eps_r);
    c.t_ox = a.t_ox.or(c.t_ox);
    c.beta = a.beta.unwrap_or(c.beta);
    c.m_rel = a.m_rel.unwrap_or(c.m_rel);
    c.jump_factor = a.jump_factor.unwrap_or(c.jump_factor);
    c.slope_tol = a.slope_tol.unwrap_or(c.slope_tol);
    c.fn_r2_min = a.fn_r2_min.unwrap_or(c.fn_r2_min);
    // The I-V and breakdown stages take the thickness from the capacitance
    // stage unless it is given explicitly.
    let needs_cap = c.t_ox.is_none();
    c.stages = match stage {
        StageArg::All => c.stages,
        StageArg::Cap => Stages {
            cap: true,
            iv: false,
            res: false,
            bkd: false,
        },
        StageArg::Iv => Stages {
            cap: needs_cap,
            iv: true,
            res: false,
            bkd: false,
        },
        StageArg::Res => Stages {
            cap: false,
            iv: false,
            res: true,
            bkd: false,
        },
        StageArg::Bkd => Stages {
            cap: needs_cap,
            iv: false,
            res: false,
            bkd: true,
        },
    };
    c.validate().map_err(|e| Failure::Validation(e.to_string()))?;
    Ok(c)
}

fn render(reports: &[WaferReport], format: FormatArg) -> String {
    match format {
        FormatArg::Text => report::render_text(reports),
        FormatArg::Json => report::render_json(reports),
    }
}

fn analyze(stage: StageArg, a: &AnalysisArgs, grids: bool) -> Result<(), Failure> {
    let config = config(a, stage)?;
    let exec = Exec::default();
    let datasets = exec
        .map(&a.files, |p| dataset::ingest(p, Format::from_path(p)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let reports = report::analyze_many(&datasets, &config, exec);
    let body = render(&reports, a.format);
    let out = match (&a.out, grids) {
        (Some(dir), _) => Some(dir.clone()),
        (None, true) => Some(PathBuf::from(".")),
        (None, false) => None,
    };
    match &out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(io_err(dir))?;
            let ext = if a.format == FormatArg::Json { "json" } else { "txt" };
            let path = dir.join(format!("report.{ext}"));
            dataset::write_atomic(&path, body.as_bytes()).map_err(io_err(&path))?;
            println!("{}", path.display());
            if grids {
                for path in exec
                    .map(&datasets, |d| write_grids(d, &config, dir))
                    .into_iter()
                    .collect::<Result<Vec<_>, _>>()?
                    .concat()
                {
                    println!("{}", path.display());
                }
            }
        }
        None => print!("{body}"),
    }
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| {
            r.errors
                .iter()
                .map(move |e| format!("{}: {:?}: {}", r.label, e.stage, e.message))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Analysis(failed.join("; ")))
    }
}

fn write_grids(d: &DatasetFile, config: &AnalysisConfig, dir: &Path) -> Result<Vec<PathBuf>, Failure> {
    let label = &d.wafer.label;
    let mut written = Vec::new();
    let mut export = |map: &jjchar_core::capacitance::WaferMap<f64>, quantity: &str, unit: &str, name: String| {
        let path = dir.join(name);
        dataset::export_wafer_grid(map, quantity, unit, &path).map_err(io_err(&path))?;
        written.push(path);
        Ok::<_, Failure>(())
    };
    if let Ok(maps) = d.capacitance_maps() {
        for m in &maps {
            export(m, "capacitance", "fF", format!("{label}_cap_{}um2.csv", m.area))?;
        }
    }
    if let Ok(Some(map)) = report::breakdown_map(d, config.jump_factor, config.floor) {
        export(&map, "breakdown voltage", "V", format!("{label}_vbt.csv"))?;
    }
    Ok(written)
}
