use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nalgebra::Point3;

use quantvol::config::{parse_length, parse_phase, parse_spacing, ConfigError, RunConfig};
use quantvol::experiment::{
    compare_series, convergence_csv, fit_csv, fit_sweep, local_grid, plane_csv, read_csv_column,
    run_plane_map, run_spacing_convergence, run_sweep, sweep_csv, ExperimentError, LocalGrid, Plane,
    SweepParameter,
};
use quantvol::grid::GridError;
use quantvol::persist::{load_table, save_table};
use quantvol::tables::{build_correspondence, query_by_pixels, query_by_point, PixelTuple, TableError};
use quantvol::volume::{export_voxels, format_sig9, VoxelFormat};

#[derive(Parser)]
#[command(name = "quantvol", version, about = "Quantization uncertainty volumes of stereo rigs")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Grid spacing, e.g. "3/cm" or "0.5cm"
    #[arg(long, global = true)]
    spacing: Option<String>,
    /// Local region half-extent in pixel footprints
    #[arg(long, global = true)]
    margin: Option<f64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Draw a random lattice phase from this seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Lattice phase: "centered", "target" or "fx,fy,fz"
    #[arg(long, global = true)]
    phase: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Volume of the target's uncertainty region over a parameter sweep
    Sweep {
        /// baseline | focal | pixel | distance | spacing
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated values with units, e.g. "5m,10m,20m"
        #[arg(long)]
        values: Option<String>,
    },
    /// Volumes over a plane of target positions
    Plane {
        /// XY | XZ | YZ
        #[arg(long)]
        plane: Option<String>,
        #[arg(long)]
        step: Option<String>,
        #[arg(long)]
        extent: Option<String>,
    },
    /// Volumes across grid densities and baselines
    Converge,
    /// Build the full correspondence table around the target and save it
    Build {
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Look up a saved table by pixel tuple or by point
    Query {
        #[arg(long)]
        table: PathBuf,
        /// "uA,vA,uB,vB"
        #[arg(long, conflicts_with = "point", required_unless_present = "point")]
        pixels: Option<String>,
        /// "x,y,z" in meters
        #[arg(long)]
        point: Option<String>,
        /// Write the region's voxels (.csv or .ply)
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// RMSE and median symmetric accuracy of our series against a reference
    Compare {
        ours: PathBuf,
        reference: PathBuf,
        #[arg(long, default_value = "poly_vol_m3")]
        column: String,
    },
}

enum Failure {
    Config(String),
    Geometry(String),
    Resource(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Geometry(_) => 2,
            Failure::Resource(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Geometry(m) | Failure::Resource(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<GridError> for Failure {
    fn from(e: GridError) -> Self {
        match e {
            GridError::TooManyPoints { .. } => Failure::Resource(e.to_string()),
            GridError::TargetNotVisible(_) | GridError::NoBaseline => Failure::Geometry(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Grid(g) => g.into(),
            ExperimentError::TargetNotVisible(..)
            | ExperimentError::EmptyRegion(_)
            | ExperimentError::NotContained(_) => Failure::Geometry(e.to_string()),
            _ => Failure::Config(e.to_string()),
        }
    }
}

impl From<TableError> for Failure {
    fn from(e: TableError) -> Self {
        match e {
            TableError::NotFound(_) | TableError::OutsideRegion | TableError::NotCovered => {
                Failure::Geometry(e.to_string())
            }
            _ => Failure::Config(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let local = &mut cfg.scenario.local;
    if let Some(s) = &common.spacing {
        local.spacing = parse_spacing(s)
            .filter(|g| *g > 0.0)
            .ok_or_else(|| Failure::Config(format!("invalid --spacing {s:?}")))?;
    }
    if let Some(m) = common.margin {
        if !(m.is_finite() && m > 0.0) {
            return Err(Failure::Config(format!("--margin must be positive, got {m}")));
        }
        local.margin = m;
    }
    if let Some(p) = &common.phase {
        local.phase = parse_phase(p)?;
    }
    if let Some(seed) = common.seed {
        local.phase = LocalGrid::random_phase(seed);
    }
    if let Some(dir) = &common.out {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn parse_list(text: &str, parse: fn(&str) -> Option<f64>) -> Result<Vec<f64>, Failure> {
    text.split(',')
        .map(|t| parse(t).filter(|v| *v > 0.0).ok_or_else(|| Failure::Config(format!("invalid value {t:?}"))))
        .collect()
}

fn write_output(dir: &Path, name: &str, contents: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(e.to_string()))?;
    }
    let mut cfg = load_config(&cli.common)?;

    match cli.command {
        Command::Sweep { param, values } => {
            if let Some(p) = param {
                let parameter = SweepParameter::parse(&p).ok_or(ConfigError::UnknownParameter(p))?;
                if parameter != cfg.sweep.parameter {
                    cfg.sweep.parameter = parameter;
                    cfg.sweep.values = quantvol::config::default_sweep_values(parameter);
                }
            }
            if let Some(v) = values {
                let parse = if cfg.sweep.parameter == SweepParameter::Spacing { parse_spacing } else { parse_length };
                cfg.sweep.values = parse_list(&v, parse)?;
            }
            let rows = run_sweep(&cfg.scenario, cfg.sweep.parameter, &cfg.sweep.values);
            let mut first_error = None;
            for row in &rows {
                if let Err(e) = &row.outcome {
                    eprintln!("{} = {}: {e}", row.parameter.name(), format_sig9(row.value));
                    first_error.get_or_insert_with(|| e.clone());
                }
            }
            let name = cfg.sweep.parameter.name();
            write_output(&cfg.output_dir, &format!("sweep_{name}.csv"), &sweep_csv(&rows))?;
            match fit_sweep(&rows) {
                Ok((poly, cuboid)) => {
                    println!(
                        "polyhedron: V = {} * x^{} (R^2 {})",
                        format_sig9(poly.coefficient),
                        format_sig9(poly.exponent),
                        format_sig9(poly.r_squared)
                    );
                    println!(
                        "cuboid:     V = {} * x^{} (R^2 {})",
                        format_sig9(cuboid.coefficient),
                        format_sig9(cuboid.exponent),
                        format_sig9(cuboid.r_squared)
                    );
                    write_output(
                        &cfg.output_dir,
                        &format!("sweep_{name}_fit.csv"),
                        &fit_csv(cfg.sweep.parameter, &poly, &cuboid),
                    )?;
                }
                Err(e) => eprintln!("no power-law fit: {e}"),
            }
            match first_error {
                Some(e) if rows.iter().all(|r| r.outcome.is_err()) => Err(e.into()),
                _ => Ok(()),
            }
        }
        Command::Plane { plane, step, extent } => {
            if let Some(p) = plane {
                cfg.plane.plane = Plane::parse(&p).ok_or(ConfigError::UnknownPlane(p))?;
            }
            if let Some(s) = step {
                cfg.plane.step = parse_list(&s, parse_length)?[0];
            }
            if let Some(e) = extent {
                cfg.plane.half_extent = parse_list(&e, parse_length)?[0];
            }
            let cells = run_plane_map(&cfg.scenario, &cfg.plane)?;
            let missing = cells.iter().filter(|c| c.volumes.is_none()).count();
            if missing > 0 {
                eprintln!("{missing} of {} samples not measured (out of view)", cells.len());
            }
            let name = format!("plane_{:?}.csv", cfg.plane.plane);
            write_output(&cfg.output_dir, &name, &plane_csv(&cells))
        }
        Command::Converge => {
            let rows = run_spacing_convergence(&cfg.scenario, &cfg.converge.baselines, &cfg.converge.densities);
            for r in &rows {
                if let Err(e) = &r.outcome {
                    eprintln!("baseline {} m, density {}/m: {e}", format_sig9(r.baseline), format_sig9(r.density));
                }
            }
            write_output(&cfg.output_dir, "converge.csv", &convergence_csv(&rows))
        }
        Command::Build { table: table_out } => {
            let rig = cfg.scenario.rig.build().map_err(|e| Failure::Config(e.to_string()))?;
            let grid = local_grid(&rig, &cfg.scenario.target, &cfg.scenario.local)?;
            let (table, report) = build_correspondence(&rig, &grid);
            let path = table_path(&cfg, table_out);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent)?;
            }
            save_table(&table, &path).map_err(|e| Failure::Config(e.to_string()))?;
            println!(
                "grid points {}, jointly visible {}, pixel tuples {}, discarded {}",
                report.grid_points,
                report.jointly_visible,
                table.len(),
                report.discards.total()
            );
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Query { table, pixels, point, export } => {
            let table = load_table(&table).map_err(|e| Failure::Config(e.to_string()))?;
            let key = match (pixels, point) {
                (Some(p), _) => p.parse::<PixelTuple>()?,
                (None, Some(p)) => {
                    let coords = parse_list_signed(&p)?;
                    let key = query_by_point(&table, &Point3::new(coords[0], coords[1], coords[2]))?.clone();
                    println!("pixels {key}");
                    key
                }
                (None, None) => unreachable!("clap requires --pixels or --point"),
            };
            let region = query_by_pixels(&table, &key)?;
            let d = region.cuboid_dims();
            println!("points {}", region.point_count());
            println!("polyhedron_m3 {}", format_sig9(region.polyhedron_volume()));
            println!("cuboid_m3 {}", format_sig9(region.cuboid_volume()));
            println!("cuboid_dims_m {} {} {}", format_sig9(d.x), format_sig9(d.y), format_sig9(d.z));
            if let Some(path) = export {
                export_voxels(&region, &path, VoxelFormat::from_path(&path))?;
                println!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Compare { ours, reference, column } => {
            let read = |p: &Path| fs::read_to_string(p).map_err(Failure::from);
            let ours = read_csv_column(&read(&ours)?, &column)?;
            let reference = read_csv_column(&read(&reference)?, &column)?;
            let report = compare_series(&ours, &reference)?;
            println!("n {}", report.count);
            println!("rmse {}", format_sig9(report.rmse));
            println!("msa_percent {}", format_sig9(report.msa_percent));
            Ok(())
        }
    }
}

fn table_path(cfg: &RunConfig, table: Option<PathBuf>) -> PathBuf {
    table.unwrap_or_else(|| cfg.output_dir.join("table.qvt"))
}

fn parse_list_signed(text: &str) -> Result<Vec<f64>, Failure> {
    let values: Vec<f64> = text
        .split(',')
        .map(|t| parse_length(t).ok_or_else(|| Failure::Config(format!("invalid coordinate {t:?}"))))
        .collect::<Result<_, _>>()?;
    if values.len() != 3 {
        return Err(Failure::Config(format!("expected x,y,z, got {text:?}")));
    }
    Ok(values)
}
