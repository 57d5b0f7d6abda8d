use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use blochframe::diagnostics::{
    chern_planes, convergence_csv, convergence_study, default_lattice, regularity, spread,
    RegularityField, SpreadGeometry,
};
use blochframe::frames::{frame, obstruction_2d, FrameOptions, GaugeFrame, Method};
use blochframe::homotopy::{
    contract_columns_1d, contract_columns_2d, contract_log, contract_log_forced, winding_det,
    winding_report, Homotopy,
};
use blochframe::io::{
    emit_field, parse_eig, parse_mmn, provider_from_mmn, read_field, regularity_csv, FieldData,
    RunConfig,
};
use blochframe::models::toy_diag_loop;
use blochframe::{BlochModel, Error, KGrid, Lattice, ModelProvider, OverlapProvider, UnitaryField};

#[derive(Parser)]
#[command(
    name = "blochframe",
    version,
    about = "Smooth Bloch frames over the Brillouin torus"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Winding numbers of a unitary loop: a field file, a toy loop or a model's obstruction loop.
    Wind(Opts),
    /// Contract a loop or surface to the identity.
    Contract(Opts),
    /// Build a smooth frame (1d, 2d or 3d).
    Frame(Opts),
    /// Build a frame and write its finite-difference regularity field.
    Regularity(Opts),
    /// Chern numbers of the coordinate planes from plaquette fluxes.
    Chern(Opts),
    /// Build a frame and compute its Marzari-Vanderbilt spread.
    Spread(Opts),
    /// Regularity and spread over a sequence of grid sizes.
    Converge(Opts),
    /// Build a frame from Wannier90 MMN overlaps (and optional EIG energies).
    #[command(name = "ingest-w90")]
    IngestW90(Opts),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Wind(_) => "wind",
            Command::Contract(_) => "contract",
            Command::Frame(_) => "frame",
            Command::Regularity(_) => "regularity",
            Command::Chern(_) => "chern",
            Command::Spread(_) => "spread",
            Command::Converge(_) => "converge",
            Command::IngestW90(_) => "ingest-w90",
        }
    }

    fn opts(&self) -> &Opts {
        match self {
            Command::Wind(o)
            | Command::Contract(o)
            | Command::Frame(o)
            | Command::Regularity(o)
            | Command::Chern(o)
            | Command::Spread(o)
            | Command::Converge(o)
            | Command::IngestW90(o) => o,
        }
    }
}

/// Flags mirror the keys of the config file; flags win over the file.
#[derive(Args, Clone, Default)]
struct Opts {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// kane-mele, kane-mele-layered, haldane or two-level.
    #[arg(long)]
    model: Option<String>,
    #[arg(long = "lambda-nu", allow_hyphen_values = true)]
    lambda_nu: Option<String>,
    #[arg(long = "lambda-r", allow_hyphen_values = true)]
    lambda_r: Option<String>,
    #[arg(long = "t-z", allow_hyphen_values = true)]
    t_z: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    mass: Option<String>,
    /// Comma-separated windings of a diagonal toy loop, e.g. `1,-1`.
    #[arg(long, allow_hyphen_values = true)]
    windings: Option<String>,
    /// N, NxM or NxMxL.
    #[arg(long)]
    grid: Option<String>,
    /// Comma-separated grid sizes for `converge`.
    #[arg(long)]
    sizes: Option<String>,
    /// log, columns or log-forced.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long = "t-points")]
    t_points: Option<String>,
    /// Output directory (default: $BLOCHFRAME_OUT, else ./out).
    #[arg(long)]
    out: Option<String>,
    /// Field file holding a loop or surface.
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    mmn: Option<String>,
    #[arg(long)]
    eig: Option<String>,
    /// Occupied band window, 1-based inclusive, e.g. `1-4`.
    #[arg(long)]
    window: Option<String>,
    /// Accept MMN shift vectors without checking them against the grid.
    #[arg(long = "no-strict")]
    no_strict: bool,
    /// Reciprocal lattice vectors as d² comma-separated numbers, row by row.
    #[arg(long, allow_hyphen_values = true)]
    reciprocal: Option<String>,
    /// Extra `key=value` settings, e.g. `tol.branch-cut=1e-4`.
    #[arg(long = "set")]
    set: Vec<String>,
}

fn build_config(opts: &Opts) -> Result<RunConfig> {
    let mut cfg = match &opts.config {
        Some(p) => RunConfig::from_path(p).with_context(|| format!("reading {}", p.display()))?,
        None => RunConfig::default(),
    };
    let flags = [
        ("model", &opts.model),
        ("lambda-nu", &opts.lambda_nu),
        ("lambda-r", &opts.lambda_r),
        ("t-z", &opts.t_z),
        ("alpha", &opts.alpha),
        ("mass", &opts.mass),
        ("windings", &opts.windings),
        ("grid", &opts.grid),
        ("sizes", &opts.sizes),
        ("method", &opts.method),
        ("seed", &opts.seed),
        ("t-points", &opts.t_points),
        ("out", &opts.out),
        ("input", &opts.input),
        ("mmn", &opts.mmn),
        ("eig", &opts.eig),
        ("window", &opts.window),
        ("reciprocal", &opts.reciprocal),
    ];
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).with_context(|| format!("--{key}"))?;
        }
    }
    if opts.no_strict {
        cfg.strict = false;
    }
    for kv in &opts.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects key=value, got `{kv}`"))?;
        cfg.set(k, v).with_context(|| format!("--set {kv}"))?;
    }
    Ok(cfg)
}

struct Run {
    cfg: RunConfig,
    out: PathBuf,
    files: Vec<String>,
    results: serde_json::Map<String, Value>,
}

impl Run {
    fn record(&mut self, key: &str, value: Value) {
        self.results.insert(key.to_string(), value);
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path.display().to_string());
        Ok(())
    }

    fn emit(&mut self, name: &str, data: &FieldData) -> Result<()> {
        let path = self.out.join(name);
        emit_field(data, &path).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(path.display().to_string());
        Ok(())
    }

    fn options(&self) -> FrameOptions {
        FrameOptions {
            method: self.cfg.method,
            seed: self.cfg.seed,
            tol: self.cfg.tol.clone(),
        }
    }
}

/// The overlap source named by the configuration, plus the model when there is one.
fn load_provider(run: &mut Run) -> Result<(Box<dyn OverlapProvider>, Option<BlochModel>)> {
    let cfg = &run.cfg;
    if cfg.mmn.is_some() {
        let (p, info) = load_mmn(cfg)?;
        run.record("ingest", info);
        return Ok((Box::new(p), None));
    }
    let model = cfg.build_model()?;
    let grid = match &cfg.grid {
        Some(_) => cfg.grid()?,
        None => KGrid::new(&vec![64; model.dim()])?,
    };
    let p = ModelProvider::new(&model, &grid, &cfg.tol)?;
    run.record("min_gap", json!(p.min_gap()));
    Ok((Box::new(p), Some(model)))
}

fn load_mmn(cfg: &RunConfig) -> Result<(blochframe::io::MmnProvider, Value)> {
    let path = cfg.mmn.as_ref().ok_or_else(|| anyhow!("no --mmn given"))?;
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let data = parse_mmn(&text)?;
    let window = cfg.window()?;
    let grid = cfg.grid().context("ingested overlaps need --grid")?;
    let p = provider_from_mmn(&data, window, &grid, cfg.strict)?;
    let mut info = json!({
        "n_bands": data.n_bands,
        "n_kpts": data.n_kpts,
        "n_neighbors": data.n_neighbors,
        "window": [window.start + 1, window.end],
        "offsets": p.offsets(),
    });
    if let Some(eig_path) = &cfg.eig {
        let eig = parse_eig(
            &std::fs::read_to_string(eig_path)
                .with_context(|| format!("reading {}", eig_path.display()))?,
        )?;
        if eig.n_kpts() != data.n_kpts {
            bail!(
                "EIG file has {} k-points, MMN has {}",
                eig.n_kpts(),
                data.n_kpts
            );
        }
        info["gap_above_window"] = json!(eig.gap_above(window));
    }
    Ok((p, info))
}

/// A loop or surface: from `--input`, from `--windings`, or the model's obstruction loop.
fn load_field(run: &mut Run) -> Result<UnitaryField> {
    let cfg = &run.cfg;
    if let Some(path) = &cfg.input {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(read_field(&text)?.into_unitary_field()?);
    }
    if let Some(w) = &cfg.windings {
        let n = match &cfg.grid {
            Some(g) if g.len() == 1 => g[0],
            Some(_) => bail!("a toy loop needs a 1d --grid"),
            None => 256,
        };
        return Ok(toy_diag_loop(w, n)?);
    }
    let (p, _) = load_provider(run)?;
    if p.grid().dim() != 2 {
        bail!("the obstruction loop needs a 2d grid");
    }
    Ok(obstruction_2d(&*p, &run.cfg.tol)?)
}

fn frame_summary(f: &GaugeFrame) -> Value {
    json!({
        "unitarity_deviation": f.unitarity_deviation(),
        "periodicity_residual": f.periodicity_residual(),
        "meta": f.meta,
    })
}

fn regularity_summary(r: &RegularityField) -> Value {
    json!({ "max": r.max, "mean": r.mean })
}

fn homotopy_summary(h: &Homotopy, start: &UnitaryField) -> Value {
    json!({
        "t_points": h.t_points(),
        "endpoint_error": h.endpoint_error(),
        "start_error": h.start_error(start),
        "unitarity_deviation": h.unitarity_deviation(),
        "max_step": h.max_step(),
        "meta": h.meta,
    })
}

fn lattice_for(cfg: &RunConfig, model: Option<&BlochModel>, dim: usize) -> Result<Lattice> {
    if let Some(l) = cfg.lattice(dim)? {
        return Ok(l);
    }
    match model {
        Some(m) => Ok(default_lattice(m)),
        None => bail!("ingested overlaps need --reciprocal to measure spreads"),
    }
}

fn cmd_wind(run: &mut Run) -> Result<()> {
    let lp = load_field(run)?;
    if lp.grid().dim() != 1 {
        bail!("winding numbers need a loop (1d field)");
    }
    let tol = &run.cfg.tol;
    let det = winding_det(&lp, tol)?;
    let report = winding_report(&lp, tol)?;
    run.record(
        "winding",
        json!({
            "det": det.winding,
            "det_residual": det.residual,
            "per_eigenvalue": report.per_eigenvalue,
            "max_phase_step": report.max_phase_step,
        }),
    );
    run.emit(
        "loop.field",
        &FieldData::unitary(&lp, &json!({"source": "wind"}))?,
    )
}

fn cmd_contract(run: &mut Run) -> Result<()> {
    let field = load_field(run)?;
    let tol = run.cfg.tol.clone();
    let h = match (run.cfg.method, field.grid().dim()) {
        (Method::Columns, 1) => contract_columns_1d(&field, tol.t_points, run.cfg.seed, &tol)?,
        (Method::Columns, 2) => contract_columns_2d(&field, tol.t_points, run.cfg.seed, &tol)?,
        (Method::Log, 1) => contract_log(&field, tol.t_points, &tol)?,
        (Method::LogForced, _) => contract_log_forced(&field, tol.t_points, &tol)?,
        (m, d) => bail!("method {m} cannot contract a {d}d field"),
    };
    run.record("homotopy", homotopy_summary(&h, &field));
    run.emit("homotopy.field", &FieldData::homotopy(&h, &tol)?)
}

struct Built {
    frame: GaugeFrame,
    regularity: RegularityField,
    provider: Box<dyn OverlapProvider>,
    model: Option<BlochModel>,
}

fn build_frame(run: &mut Run) -> Result<Built> {
    let (p, model) = load_provider(run)?;
    let f = frame(&*p, &run.options())?;
    let r = regularity(&f, &*p)?;
    run.record("frame", frame_summary(&f));
    run.record("regularity", regularity_summary(&r));
    Ok(Built {
        frame: f,
        regularity: r,
        provider: p,
        model,
    })
}

fn cmd_frame(run: &mut Run) -> Result<()> {
    let Built {
        frame: f,
        regularity: r,
        ..
    } = build_frame(run)?;
    let data = FieldData::frame(&f, &run.cfg.tol)?;
    run.emit("frame.field", &data)?;
    run.write("regularity.csv", &regularity_csv(&r))
}

fn cmd_regularity(run: &mut Run) -> Result<()> {
    let r = build_frame(run)?.regularity;
    run.write("regularity.csv", &regularity_csv(&r))
}

fn cmd_chern(run: &mut Run) -> Result<()> {
    let (p, _) = load_provider(run)?;
    let planes = chern_planes(&*p, &run.cfg.tol)?;
    run.record("chern", json!(planes));
    Ok(())
}

fn cmd_spread(run: &mut Run) -> Result<()> {
    let Built {
        frame: f,
        provider: p,
        model,
        ..
    } = build_frame(run)?;
    let lattice = lattice_for(&run.cfg, model.as_ref(), p.grid().dim())?;
    let geom = SpreadGeometry::new(&lattice, p.grid(), &run.cfg.tol)?;
    let s = spread(&f, &*p, &geom)?;
    run.record("spread", json!(s));
    run.record("shells", json!(geom.shells));
    Ok(())
}

fn cmd_converge(run: &mut Run) -> Result<()> {
    let model = run.cfg.build_model()?;
    let lattice = lattice_for(&run.cfg, Some(&model), model.dim())?;
    let rows = convergence_study(&model, &run.options(), &run.cfg.sizes, &lattice);
    run.record("rows", json!(rows));
    run.write("convergence.csv", &convergence_csv(&rows))
}

fn cmd_ingest(run: &mut Run) -> Result<()> {
    if run.cfg.mmn.is_none() {
        bail!("ingest-w90 needs --mmn");
    }
    let Built {
        frame: f,
        regularity: r,
        provider: p,
        ..
    } = build_frame(run)?;
    if p.grid().dim() >= 2 {
        run.record("chern", json!(chern_planes(&*p, &run.cfg.tol)?));
    }
    if let Some(lattice) = run.cfg.lattice(p.grid().dim())? {
        let geom = SpreadGeometry::new(&lattice, p.grid(), &run.cfg.tol)?;
        run.record("spread", json!(spread(&f, &*p, &geom)?));
    }
    let data = FieldData::frame(&f, &run.cfg.tol)?;
    run.emit("frame.field", &data)?;
    run.write("regularity.csv", &regularity_csv(&r))
}

fn error_json(e: &anyhow::Error) -> (Value, u8) {
    match e.downcast_ref::<Error>() {
        Some(be) => {
            let mut v = json!({ "kind": be.kind(), "message": be.to_string() });
            match be {
                Error::ChernObstruction(list) => v["chern"] = json!(list),
                Error::WindingObstruction(w) | Error::EigenvalueWinding(w) => {
                    v["windings"] = json!(w)
                }
                _ => {}
            }
            (v, if be.is_obstruction() { 2 } else { 1 })
        }
        None => (json!({ "kind": "Other", "message": format!("{e:#}") }), 1),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let command = cli.command.name();
    let cfg = match build_config(cli.command.opts()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("blochframe {command}: {e:#}");
            return ExitCode::from(1);
        }
    };
    let out = cfg.out_dir();
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("blochframe {command}: cannot create {}: {e}", out.display());
        return ExitCode::from(1);
    }
    let mut run = Run {
        cfg,
        out,
        files: vec![],
        results: serde_json::Map::new(),
    };
    let result = match &cli.command {
        Command::Wind(_) => cmd_wind(&mut run),
        Command::Contract(_) => cmd_contract(&mut run),
        Command::Frame(_) => cmd_frame(&mut run),
        Command::Regularity(_) => cmd_regularity(&mut run),
        Command::Chern(_) => cmd_chern(&mut run),
        Command::Spread(_) => cmd_spread(&mut run),
        Command::Converge(_) => cmd_converge(&mut run),
        Command::IngestW90(_) => cmd_ingest(&mut run),
    };
    let (status, error, code) = match &result {
        Ok(()) => ("ok", Value::Null, 0),
        Err(e) => {
            let (v, code) = error_json(e);
            (if code == 2 { "obstruction" } else { "error" }, v, code)
        }
    };
    let summary_path = run.out.join("summary.json");
    run.files.push(summary_path.display().to_string());
    let summary = json!({
        "command": command,
        "status": status,
        "exit_code": code,
        "error": error,
        "results": run.results,
        "files": run.files,
        "config": run.cfg,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary is serializable");
    if let Err(e) = write_summary(&summary_path, &text) {
        eprintln!("blochframe {command}: {e:#}");
        return ExitCode::from(1);
    }
    println!("{text}");
    if let Err(e) = &result {
        eprintln!("blochframe {command}: {e:#}");
    }
    ExitCode::from(code)
}

fn write_summary(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, format!("{text}\n")).with_context(|| format!("writing {}", path.display()))
}
