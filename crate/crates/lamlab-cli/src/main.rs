//! Command-line front end for the `lamlab` library.
//!
//! Every subcommand is a thin wrapper over a library entry point: sets go in
//! as JSON (a file named with `--input`, or stdin), results come out on
//! stdout as JSON or CSV, and diagnostics go to stderr. The `LAMLAB_LOG`
//! environment variable (`quiet`, `info`, `debug`) controls how chatty the
//! diagnostics are.

use std::io::Read as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::OnceLock;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use lamlab::construct::{build_general, select_params, select_params_with_alpha};
use lamlab::fem::{interpolate, make_mesh, write_vtk, Polygon};
use lamlab::harness::{emit_csv, run_case, sweep, CaseOptions, RateFit};
use lamlab::lamhull::coord::rat_to_json;
use lamlab::lamhull::{
    extract_witness, lamination_hull, lamination_level, staircase, BoxSet, Level,
};
use lamlab::{Error, Result};

#[derive(Clone, Copy, PartialEq, PartialOrd)]
enum Verbosity {
    Quiet,
    Info,
    Debug,
}

fn verbosity() -> Verbosity {
    static LEVEL: OnceLock<Verbosity> = OnceLock::new();
    *LEVEL.get_or_init(|| match std::env::var("LAMLAB_LOG").as_deref() {
        Ok("quiet") => Verbosity::Quiet,
        Ok("debug") => Verbosity::Debug,
        _ => Verbosity::Info,
    })
}

macro_rules! info {
    ($($t:tt)*) => { if verbosity() >= Verbosity::Info { eprintln!($($t)*); } };
}

macro_rules! debug {
    ($($t:tt)*) => { if verbosity() >= Verbosity::Debug { eprintln!($($t)*); } };
}

/// Lamination hulls of diagonal-matrix sets, certified level witnesses,
/// laminate fields, and finite-element deviation sweeps.
#[derive(Parser)]
#[command(name = "lamlab", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Apply i lamination steps to a set and print the result as JSON
    Hull(HullArgs),
    /// Print the lamination level of the zero matrix relative to a set
    Level(LevelArgs),
    /// Print the splitting tree certifying the level, with its leaf set
    Witness(WitnessArgs),
    /// Print the (n+1)-point staircase fixture of level exactly n as JSON
    Staircase(StaircaseArgs),
    /// Construct the laminate field for a set and write its mesh interpolant
    /// as a legacy-VTK file
    Build(BuildArgs),
    /// Run one mesh size end to end and print the case report as JSON
    Measure(MeasureArgs),
    /// Run a mesh-size sweep and print a convergence table
    Sweep(SweepArgs),
}

#[derive(Args)]
struct HullArgs {
    /// Number of lamination steps to apply
    #[arg(long)]
    i: u32,
    /// Set as JSON ("points" and/or "boxes"); reads stdin when omitted
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct LevelArgs {
    /// Give up after this many lamination steps
    #[arg(long, default_value_t = 12)]
    cap: u32,
    /// Set as JSON ("points" and/or "boxes"); reads stdin when omitted
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct WitnessArgs {
    /// Give up after this many lamination steps
    #[arg(long, default_value_t = 12)]
    cap: u32,
    /// Set as JSON ("points" and/or "boxes"); reads stdin when omitted
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
}

#[derive(Args)]
struct StaircaseArgs {
    /// Lamination level of the fixture (it has n + 1 points)
    #[arg(long)]
    n: u32,
}

/// Flags shared by the subcommands that run the construction pipeline.
#[derive(Args)]
struct PipelineArgs {
    /// Set as JSON ("points" and/or "boxes"); reads stdin when omitted
    #[arg(long, value_name = "FILE")]
    input: Option<PathBuf>,
    /// Domain: "x0,y0,x1,y1" for a rectangle, or an even list of at least
    /// six coordinates for a general polygon
    #[arg(long, value_name = "COORDS", default_value = "0,0,1,1", value_parser = parse_domain)]
    domain: Polygon,
    /// Cell-scale exponent in (0, 1]; defaults to 1/(1+L)
    #[arg(long)]
    alpha: Option<f64>,
    /// Strip counts, one per nesting stage; overrides the automatic choice
    /// and skips its growth validation
    #[arg(long, value_name = "K1,K2,...", value_delimiter = ',')]
    k: Option<Vec<u32>>,
    /// Give up after this many lamination steps
    #[arg(long, default_value_t = 12)]
    cap: u32,
    /// Per-entry tolerance when classifying mesh gradients
    #[arg(long, default_value_t = 1e-7)]
    tol: f64,
}

impl PipelineArgs {
    fn opts(&self) -> CaseOptions {
        CaseOptions {
            cap: self.cap,
            alpha: self.alpha,
            k_list: self.k.clone(),
            tol: self.tol,
        }
    }
}

#[derive(Args)]
struct BuildArgs {
    #[command(flatten)]
    pipe: PipelineArgs,
    /// Mesh size (a decimal like 0.03125, or a power like 2^-5)
    #[arg(long, value_parser = parse_h)]
    h: f64,
    /// Where to write the VTK file
    #[arg(long, value_name = "FILE", default_value = "field.vtk")]
    out: PathBuf,
}

#[derive(Args)]
struct MeasureArgs {
    #[command(flatten)]
    pipe: PipelineArgs,
    /// Mesh size (a decimal like 0.03125, or a power like 2^-5)
    #[arg(long, value_parser = parse_h)]
    h: f64,
    /// Zero the wall-clock column so repeated runs emit identical bytes
    #[arg(long)]
    stable: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    pipe: PipelineArgs,
    /// Mesh sizes, comma separated (decimals or powers like 2^-5)
    #[arg(long, value_name = "H1,H2,...", value_delimiter = ',', value_parser = parse_h, required = true)]
    h_list: Vec<f64>,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Zero the wall-clock column so repeated runs emit identical bytes
    #[arg(long)]
    stable: bool,
}

fn parse_h(s: &str) -> std::result::Result<f64, String> {
    let t = s.trim();
    let v = if let Some(exp) = t.strip_prefix("2^") {
        let e: i32 = exp
            .parse()
            .map_err(|_| format!("bad exponent in mesh size {t:?}"))?;
        2f64.powi(e)
    } else {
        t.parse::<f64>().map_err(|_| format!("{t:?} is not a mesh size"))?
    };
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("mesh size must be positive and finite, got {t:?}"))
    }
}

fn parse_domain(s: &str) -> std::result::Result<Polygon, String> {
    let vals: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|_| format!("bad coordinate {t:?}")))
        .collect::<std::result::Result<_, _>>()?;
    let poly = match vals.len() {
        4 => Polygon::rectangle(vals[0], vals[1], vals[2], vals[3]),
        n if n >= 6 && n % 2 == 0 => {
            Polygon::new(vals.chunks(2).map(|c| [c[0], c[1]]).collect())
        }
        n => {
            return Err(format!(
                "expected 4 rectangle coordinates or an even list of at least 6 polygon coordinates, got {n}"
            ))
        }
    };
    poly.map_err(|e| e.to_string())
}

fn load_set(path: Option<&Path>) -> Result<BoxSet> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)?,
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            buf
        }
    };
    BoxSet::from_json_str(&text)
}

fn cmd_hull(a: &HullArgs) -> Result<()> {
    let set = load_set(a.input.as_deref())?;
    println!("{}", lamination_hull(&set, a.i).to_json());
    Ok(())
}

fn cmd_level(a: &LevelArgs) -> Result<()> {
    let set = load_set(a.input.as_deref())?;
    match lamination_level(&set, a.cap) {
        Level::Finite(l) => {
            println!("L = {l}");
            Ok(())
        }
        Level::ExceedsCap => {
            println!("L > {}", a.cap);
            Err(Error::LevelExceedsCap { cap: a.cap })
        }
    }
}

fn cmd_witness(a: &WitnessArgs) -> Result<()> {
    let set = load_set(a.input.as_deref())?;
    let tree = extract_witness(&set, a.cap)?;
    tree.verify()?;
    let mut out = tree.to_json();
    out["sigma"] = Value::Array(
        tree.unique_leaves()
            .iter()
            .map(|m| json!([rat_to_json(&m.d1), rat_to_json(&m.d2)]))
            .collect(),
    );
    println!("{}", serde_json::to_string_pretty(&out).expect("JSON values serialize"));
    Ok(())
}

fn cmd_staircase(a: &StaircaseArgs) -> Result<()> {
    println!("{}", staircase(a.n)?.to_json());
    Ok(())
}

fn cmd_build(a: &BuildArgs) -> Result<()> {
    let set = load_set(a.pipe.input.as_deref())?;
    let tree = extract_witness(&set, a.pipe.cap)?;
    tree.verify()?;
    let mut params = match a.pipe.alpha {
        Some(al) => select_params_with_alpha(tree.level, a.h, &tree, al)?,
        None => select_params(tree.level, a.h, &tree)?,
    };
    if let Some(ks) = &a.pipe.k {
        params.k_list = ks.clone();
        params.growth = 0.0;
    }
    debug!("level {} with alpha = {}, k_list = {:?}", tree.level, params.alpha, params.k_list);
    let field = build_general(&tree, &params, a.h, &a.pipe.domain)?;
    let mesh = make_mesh(&a.pipe.domain, a.h)?;
    let u = interpolate(&field, &mesh);
    let sigma: Vec<_> = tree.unique_leaves().iter().map(|m| m.to_f64()).collect();
    write_vtk(&a.out, &u, &sigma, a.pipe.tol)?;
    info!("wrote {}", a.out.display());
    println!(
        "{}",
        json!({
            "path": a.out.display().to_string(),
            "h": mesh.h(),
            "L": tree.level,
            "alpha": params.alpha,
            "k_list": params.k_list,
            "n_vertices": mesh.n_vertices(),
            "n_triangles": mesh.n_triangles(),
        })
    );
    Ok(())
}

fn cmd_measure(a: &MeasureArgs) -> Result<()> {
    let set = load_set(a.pipe.input.as_deref())?;
    let mut rep = run_case(&set, &a.pipe.domain, a.h, &a.pipe.opts())?;
    if a.stable {
        rep.runtime_ms = 0;
    }
    debug!("E_h = {} against bound {}", rep.e_h, rep.bound);
    println!("{}", serde_json::to_string_pretty(&rep).expect("reports serialize"));
    Ok(())
}

fn fit_footer(fit: &RateFit) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    format!(
        "# slope={} intercept={} fit_c={} envelope_c={} target_rate={} excluded_zero={}\n",
        opt(fit.slope),
        opt(fit.intercept),
        opt(fit.fit_c),
        fit.envelope_c,
        fit.target_rate,
        fit.excluded_zero
    )
}

fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let set = load_set(a.pipe.input.as_deref())?;
    let out = sweep(&set, &a.pipe.domain, &a.h_list, &a.pipe.opts(), a.jobs)?;
    for (h, why) in &out.skipped {
        info!("skipped h = {h}: {why}");
    }
    let mut reports = out.reports;
    if a.stable {
        for r in &mut reports {
            r.runtime_ms = 0;
        }
    }
    for r in &reports {
        debug!("h = {}: E_h = {}, sup_grad = {}", r.h, r.e_h, r.sup_grad);
    }
    match a.format {
        Format::Csv => print!("{}{}", emit_csv(&reports, a.stable), fit_footer(&out.fit)),
        Format::Json => {
            let skipped: Vec<Value> = out
                .skipped
                .iter()
                .map(|(h, why)| json!({"h": h, "reason": why}))
                .collect();
            let doc = json!({
                "reports": reports,
                "fit": out.fit,
                "skipped": skipped,
            });
            println!("{}", serde_json::to_string_pretty(&doc).expect("JSON values serialize"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.cmd {
        Cmd::Hull(a) => cmd_hull(a),
        Cmd::Level(a) => cmd_level(a),
        Cmd::Witness(a) => cmd_witness(a),
        Cmd::Staircase(a) => cmd_staircase(a),
        Cmd::Build(a) => cmd_build(a),
        Cmd::Measure(a) => cmd_measure(a),
        Cmd::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
