//! Command line driver: potential checks, the 1D connection profile, mountain
//! pass search, multi-end planar states, spectral and interface diagnostics
//! of stored fields, and full continuation reports with gate verdicts.
//!
//! Exit codes: 0 on success, 2 for invalid input or configuration, 3 for
//! numerical failures, 4 when a finished report fails its gates.

use acmx_core::config::RunConfig;
use acmx_core::energy::{energy, Field};
use acmx_core::entire::{
    approximate_solution, boundary_residual_norm, make_line_config, minimal_gluing_radius,
    refine_entire,
};
use acmx_core::heteroclinic::solve_heteroclinic;
use acmx_core::minmax::{initial_path, mountain_pass};
use acmx_core::pipeline::{acceptance_gates, run_experiment};
use acmx_core::potential::{interface_constants, validate_potential, Potential};
use acmx_core::spectrum::morse_index;
use acmx_core::surface::build::planar_box;
use acmx_core::surface::operators::assemble_operators;
use acmx_core::surface::SurfaceMesh;
use acmx_core::varifold::{density_ratio, extract_level_set};
use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "acmx",
    version,
    about = "Allen-Cahn min-max experiments on surfaces"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the double-well hypotheses and report interface constants.
    PotentialCheck(PotentialCheckArgs),
    /// Solve the 1D connection profile and report its invariants.
    Heteroclinic(HeteroclinicArgs),
    /// Mountain pass at the first scheduled width of a configuration.
    Minmax(MinmaxArgs),
    /// Build and refine a multi-end planar state from a line configuration.
    Entire(EntireArgs),
    /// Morse index and low spectrum of a stored field.
    Index(IndexArgs),
    /// Extract a level set of a stored field as curves.
    Levelset(LevelsetArgs),
    /// Interface density profile about a vertex of a stored field.
    Density(DensityArgs),
    /// Run the full continuation and evaluate the report gates.
    Report(ReportArgs),
}

#[derive(Args)]
struct PotentialArgs {
    /// quartic, or polynomial with explicit coefficients
    #[arg(long, default_value = "quartic")]
    kind: String,
    /// Polynomial coefficients c0,c1,... (lowest degree first)
    #[arg(long, value_delimiter = ',')]
    coeffs: Vec<f64>,
    /// Well-neighborhood half-width for the hypothesis checks
    #[arg(long, default_value_t = 0.3)]
    alpha: f64,
    /// Convexity lower bound on the well neighborhoods
    #[arg(long, default_value_t = 0.4)]
    kappa: f64,
}

impl PotentialArgs {
    fn build(&self) -> Result<Potential> {
        match self.kind.as_str() {
            "quartic" => Ok(Potential::quartic()),
            "polynomial" => Ok(Potential::polynomial(
                "polynomial",
                self.coeffs.clone(),
                self.alpha,
                self.kappa,
            )?),
            other => Err(validation(format!(
                "unknown potential kind {other:?}, expected quartic or polynomial"
            ))),
        }
    }
}

#[derive(Args)]
struct PotentialCheckArgs {
    #[command(flatten)]
    potential: PotentialArgs,
    /// Sample count for the hypothesis grid
    #[arg(long, default_value_t = 2001)]
    grid: usize,
    /// Acceptance margin for the sampled hypotheses
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

#[derive(Args)]
struct HeteroclinicArgs {
    #[command(flatten)]
    potential: PotentialArgs,
    /// Half-width of the solve interval
    #[arg(long, default_value_t = 12.0)]
    half_width: f64,
    /// Grid step of the solve
    #[arg(long, default_value_t = 0.005)]
    step: f64,
    /// Write the sampled profile as CSV (s,value,derivative)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MinmaxArgs {
    /// Run configuration file
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct EntireArgs {
    /// Expected end count 2k; checked against the angle list
    #[arg(long)]
    ends: Option<usize>,
    /// End directions in radians, strictly increasing within one period
    #[arg(long, value_delimiter = ',', required = true)]
    angles: Vec<f64>,
    /// Signed line offsets, one per angle
    #[arg(long, value_delimiter = ',', required = true)]
    offsets: Vec<f64>,
    /// Box half-width (the state lives on [-L, L]^2); uses the quartic well
    #[arg(long = "box")]
    box_half_width: f64,
    /// Target grid spacing
    #[arg(long, default_value_t = 0.25)]
    h: f64,
    /// Newton residual tolerance
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Directory for the field artifact
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FieldArgs {
    /// Run configuration file (supplies surface, potential, spectrum options)
    #[arg(long)]
    config: PathBuf,
    /// Stored field CSV (vertex_id,value)
    #[arg(long)]
    field: PathBuf,
    /// Interface width the field was computed at
    #[arg(long)]
    epsilon: f64,
}

#[derive(Args)]
struct IndexArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// Write the resolved eigenfields as CSV
    #[arg(long)]
    eigenfields: Option<PathBuf>,
}

#[derive(Args)]
struct LevelsetArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// Level to extract
    #[arg(long, default_value_t = 0.0)]
    t: f64,
    /// Write the curves as CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DensityArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// Center vertex id
    #[arg(long, conflicts_with = "at")]
    center: Option<usize>,
    /// Center as x,y,z; the nearest mesh vertex is used
    #[arg(long, value_delimiter = ',', num_args = 3)]
    at: Option<Vec<f64>>,
    /// Ball radii, strictly increasing
    #[arg(long, value_delimiter = ',', required = true)]
    radii: Vec<f64>,
    /// Exponential weight of the almost-monotonicity diagnostic
    #[arg(long, default_value_t = 0.0)]
    m: f64,
    /// Write the profile as CSV
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run configuration file
    #[arg(long)]
    config: PathBuf,
    /// Override the configured output directory
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn validation(msg: String) -> anyhow::Error {
    acmx_core::Error::Validation(msg).into()
}

fn load_config(path: &PathBuf) -> Result<(RunConfig, String)> {
    let text = fs::read_to_string(path)
        .map_err(|e| validation(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = RunConfig::from_toml_str(&text)?;
    Ok((cfg, text))
}

/// Mesh for a stored field, sized by the same rule the continuation uses:
/// per-width for nested refinement families, smallest-width for grids.
fn mesh_for(cfg: &RunConfig, epsilon: f64) -> Result<SurfaceMesh> {
    let eps = if cfg.surface.supports_prolongation() {
        epsilon
    } else {
        *cfg.schedule.epsilons.last().expect("validated nonempty")
    };
    Ok(cfg.surface.build_mesh(eps)?)
}

fn read_field(cfg: &RunConfig, args: &FieldArgs) -> Result<(SurfaceMesh, Field)> {
    if !(args.epsilon > 0.0 && args.epsilon.is_finite()) {
        return Err(validation(format!(
            "epsilon must be positive, got {}",
            args.epsilon
        )));
    }
    let mesh = mesh_for(cfg, args.epsilon)?;
    let file = fs::File::open(&args.field)
        .map_err(|e| validation(format!("cannot open field {}: {e}", args.field.display())))?;
    let u = Field::read_csv(&mesh, args.epsilon, BufReader::new(file))?;
    Ok((mesh, u))
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn cmd_potential_check(args: &PotentialCheckArgs) -> Result<i32> {
    let p = args.potential.build()?;
    let report = validate_potential(&p, args.grid, args.tol)?;
    let constants = interface_constants(&p, 1e-9)?;
    print_json(&json!({
        "validation": report,
        "constants": constants,
    }))?;
    Ok(if report.pass { 0 } else { 2 })
}

fn cmd_heteroclinic(args: &HeteroclinicArgs) -> Result<i32> {
    let p = args.potential.build()?;
    let profile = solve_heteroclinic(&p, args.half_width, args.step)?;
    let sigma = profile.sigma_from_profile();
    if let Some(out) = &args.out {
        let mut w = BufWriter::new(fs::File::create(out)?);
        use std::io::Write;
        writeln!(w, "s,value,derivative")?;
        for i in 0..profile.grid().len() {
            writeln!(
                w,
                "{:.17e},{:.17e},{:.17e}",
                profile.grid()[i], profile.values()[i], profile.derivatives()[i]
            )?;
        }
    }
    print_json(&json!({
        "sigma": sigma,
        "tail_rate": profile.tail_rate(),
        "half_width": profile.half_width(),
        "step": profile.step(),
        "samples": profile.grid().len(),
        "profile_file": args.out.as_ref().map(|p| p.display().to_string()),
    }))?;
    Ok(0)
}

fn cmd_minmax(args: &MinmaxArgs) -> Result<i32> {
    let (cfg, _) = load_config(&args.config)?;
    let p = cfg.potential.build()?;
    let eps = cfg.schedule.epsilons[0];
    let mesh = mesh_for(&cfg, eps)?;
    let ops = assemble_operators(&mesh)?;
    let path = initial_path(&mesh, eps, cfg.minmax.nodes, cfg.minmax.seed)?;
    let result = mountain_pass(&path, &mesh, &ops, &p, &cfg.minmax.to_options())?;
    let total_energy = energy(&result.critical_point, &ops, &p)?;

    fs::create_dir_all(&cfg.output.dir)?;
    let field_file = PathBuf::from(&cfg.output.dir).join("minmax_field.csv");
    result
        .critical_point
        .write_csv(BufWriter::new(fs::File::create(&field_file)?))?;

    print_json(&json!({
        "epsilon": eps,
        "mesh_ref": mesh.ref_id(),
        "level": result.level,
        "energy": total_energy,
        "residual": result.residual,
        "iterations": result.iterations,
        "field_file": field_file.display().to_string(),
    }))?;
    Ok(0)
}

fn cmd_entire(args: &EntireArgs) -> Result<i32> {
    if let Some(ends) = args.ends {
        if ends != args.angles.len() {
            return Err(validation(format!(
                "--ends {} disagrees with {} angles",
                ends,
                args.angles.len()
            )));
        }
    }
    if !(args.h > 0.0 && args.h.is_finite()) {
        return Err(validation(format!("grid spacing must be positive, got {}", args.h)));
    }
    let cfg = make_line_config(&args.angles, &args.offsets)?;
    let p = Potential::quartic();
    let profile = solve_heteroclinic(&p, 12.0, 0.005)?;
    let r = minimal_gluing_radius(&cfg)?;
    let n = (2.0 * args.box_half_width / args.h).ceil() as usize;
    let mesh = planar_box(args.box_half_width, n)?;
    let ops = assemble_operators(&mesh)?;
    let u0 = approximate_solution(&cfg, &profile, r, &mesh)?;
    let (u, residual, iterations) = refine_entire(&u0, &mesh, &ops, &p, args.tol)?;
    let boundary_residual = boundary_residual_norm(&u, &mesh, &ops, &p)?;
    let total_energy = energy(&u, &ops, &p)?;

    fs::create_dir_all(&args.out_dir)?;
    let field_file = args.out_dir.join("entire_field.csv");
    u.write_csv(BufWriter::new(fs::File::create(&field_file)?))?;

    print_json(&json!({
        "k": cfg.k,
        "theta_lambda": cfg.theta_lambda,
        "balanced": cfg.balanced,
        "gluing_radius": r,
        "grid_n": n,
        "mesh_ref": mesh.ref_id(),
        "residual": residual,
        "iterations": iterations,
        "boundary_residual": boundary_residual,
        "energy": total_energy,
        "field_file": field_file.display().to_string(),
    }))?;
    Ok(0)
}

fn cmd_index(args: &IndexArgs) -> Result<i32> {
    let (cfg, _) = load_config(&args.field.config)?;
    let p = cfg.potential.build()?;
    let (mesh, u) = read_field(&cfg, &args.field)?;
    let ops = assemble_operators(&mesh)?;
    let summary = morse_index(
        &u,
        &mesh,
        &ops,
        &p,
        cfg.spectrum.modes,
        cfg.spectrum.zero_tol,
        cfg.spectrum.seed,
    )?;
    if let Some(out) = &args.eigenfields {
        summary.write_eigenfields_csv(BufWriter::new(fs::File::create(out)?))?;
    }
    print_json(&serde_json::to_value(&summary)?)?;
    Ok(0)
}

fn cmd_levelset(args: &LevelsetArgs) -> Result<i32> {
    let (cfg, _) = load_config(&args.field.config)?;
    let (mesh, u) = read_field(&cfg, &args.field)?;
    let curves = extract_level_set(&u, &mesh, args.t)?;
    if let Some(out) = &args.out {
        curves.write_csv(BufWriter::new(fs::File::create(out)?))?;
    }
    print_json(&json!({
        "level": curves.level,
        "polylines": curves.polylines.len(),
        "total_length": curves.total_length,
        "curves_file": args.out.as_ref().map(|p| p.display().to_string()),
    }))?;
    Ok(0)
}

fn cmd_density(args: &DensityArgs) -> Result<i32> {
    let (cfg, _) = load_config(&args.field.config)?;
    let p = cfg.potential.build()?;
    let (mesh, u) = read_field(&cfg, &args.field)?;
    let ops = assemble_operators(&mesh)?;
    let center = match (args.center, &args.at) {
        (Some(v), None) => v,
        (None, Some(xyz)) => {
            let mut best = (f64::INFINITY, 0);
            for v in 0..mesh.vertex_count() {
                let q = mesh.logical_position(v);
                let d = (q.x - xyz[0]).powi(2) + (q.y - xyz[1]).powi(2) + (q.z - xyz[2]).powi(2);
                if d < best.0 {
                    best = (d, v);
                }
            }
            best.1
        }
        _ => {
            return Err(validation(
                "give exactly one of --center or --at x,y,z".into(),
            ))
        }
    };
    let report = density_ratio(&u, &mesh, &ops, &p, center, &args.radii, args.m)?;
    if let Some(out) = &args.out {
        report.write_csv(BufWriter::new(fs::File::create(out)?))?;
    }
    let rows: Vec<serde_json::Value> = (0..report.radii.len())
        .map(|i| {
            json!({
                "r": report.radii[i],
                "mass": report.mass_in_ball[i],
                "ratio": report.ratio[i],
                "ratio_h0": report.ratio_h0[i],
                "monotonicity_ratio": report.monotonicity_ratio[i],
            })
        })
        .collect();
    print_json(&json!({
        "center": report.center,
        "center_position": [
            report.center_position.x,
            report.center_position.y,
            report.center_position.z
        ],
        "rows": rows,
    }))?;
    Ok(0)
}

fn cmd_report(args: &ReportArgs) -> Result<i32> {
    let (mut cfg, text) = load_config(&args.config)?;
    if let Some(dir) = &args.out_dir {
        cfg.output.dir = dir.display().to_string();
    }
    let report = run_experiment(&cfg, &text)?;
    let gates = acceptance_gates(&cfg, &report)?;
    let mut all_pass = true;
    for gate in &gates {
        let tag = if gate.pass { "PASS" } else { "FAIL" };
        println!("[{tag}] {}: {}", gate.name, gate.detail);
        all_pass &= gate.pass;
    }
    println!(
        "report: {}",
        PathBuf::from(&cfg.output.dir).join("report.json").display()
    );
    Ok(if all_pass { 0 } else { 4 })
}

fn run(cli: Cli) -> Result<i32> {
    match &cli.command {
        Command::PotentialCheck(args) => cmd_potential_check(args),
        Command::Heteroclinic(args) => cmd_heteroclinic(args),
        Command::Minmax(args) => cmd_minmax(args),
        Command::Entire(args) => cmd_entire(args),
        Command::Index(args) => cmd_index(args),
        Command::Levelset(args) => cmd_levelset(args),
        Command::Density(args) => cmd_density(args),
        Command::Report(args) => cmd_report(args),
    }
}

fn main() {
    env_logger::init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            match err.downcast_ref::<acmx_core::Error>() {
                Some(e) if e.is_validation() => 2,
                _ => 3,
            }
        }
    };
    std::process::exit(code);
}
