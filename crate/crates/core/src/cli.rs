//! The `mmddi` command line.
//!
//! Every command prints one JSON summary line on stdout. Exit codes: 0 on
//! success, 1 for bad input, 2 when a numerical solve fails.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::json;

use crate::analysis::{export_scatter, rows_for};
use crate::ddcm::{solve_ddcm, state_columns, DdcmInit, DdcmOptions};
use crate::ddi::{default_nstates, identify, IdentifyOptions};
use crate::error::{Error, Result};
use crate::fem::{mesh_operators, point_coords};
use crate::forward::{generate_snapshots, BoundaryProgram, SnapshotSet};
use crate::lattice::{lattice_snapshots, BeamProps, LatticeCase, DEFAULT_SUPPORT_FACTOR};
use crate::mesh::{generate_mesh, GeometrySpec, Mesh};
use crate::phase_space::{MaterialDataset, MetricParams, ModelMode};

#[derive(Parser, Debug)]
#[command(name = "mmddi", version, about = "Data-driven identification and simulation of micromorphic materials")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CaseKind {
    Rectangle,
    Plate,
    Lshape,
    Notch,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthetic snapshots from the linear reference model.
    Generate {
        #[arg(long)]
        case: CaseKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Honeycomb lattice snapshots transferred to a continuum mesh.
    Lattice {
        #[arg(long)]
        case: CaseKind,
        /// Beam length (mm).
        #[arg(long = "L")]
        l: f64,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Identify a material dataset from a snapshot directory.
    Identify {
        #[arg(long)]
        snapshots: PathBuf,
        /// Defaults to about 100 mechanical states per material state.
        #[arg(long)]
        nstates: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        metric: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Model-free prediction of a new boundary value problem.
    Predict {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        case: CaseKind,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Scatter rows, slopes and R² of a dataset.
    Stats {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long = "ref-model")]
        ref_model: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Domain size and mesh resolution shared by the case-driven commands.
#[derive(Clone, Debug, Default, Deserialize)]
pub struct DomainConfig {
    /// Side length, or width of a rectangle.
    pub size: Option<f64>,
    /// Rectangle height; defaults to `size`.
    pub height: Option<f64>,
    pub notch_radius: Option<f64>,
    pub h: Option<f64>,
}

impl DomainConfig {
    pub fn spec(&self, case: CaseKind) -> Result<GeometrySpec> {
        let (size, h) = match case {
            CaseKind::Rectangle => (self.size.unwrap_or(10.0), self.h.unwrap_or(1.0)),
            CaseKind::Plate => (self.size.unwrap_or(10.0), self.h.unwrap_or(0.5)),
            CaseKind::Lshape | CaseKind::Notch => (self.size.unwrap_or(30.0), self.h.unwrap_or(1.0)),
        };
        if !(size > 0.0 && h > 0.0) {
            return Err(Error::InvalidInput("size and h must be positive".into()));
        }
        Ok(match case {
            CaseKind::Rectangle => GeometrySpec::rectangle(size, self.height.unwrap_or(size), h),
            CaseKind::Plate => GeometrySpec::plate_with_holes(size, h),
            CaseKind::Lshape => GeometrySpec::lshape(size, h),
            CaseKind::Notch => GeometrySpec::double_notch(size, self.notch_radius.unwrap_or(size / 5.0), h),
        })
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct GenerateConfig {
    #[serde(flatten)]
    pub domain: DomainConfig,
    pub moduli: MetricParams,
    #[serde(default = "full1")]
    pub mode: ModelMode,
    /// Defaults to tension to 1% of the height in 6 increments.
    pub program: Option<BoundaryProgram>,
}

fn full1() -> ModelMode {
    ModelMode::Full1
}

fn honeycomb_beam() -> BeamProps {
    BeamProps {
        e: 430.0,
        a: 0.2,
        i: 6.67e-4,
        l: 2.0,
    }
}

#[derive(Clone, Debug, Deserialize)]
pub struct LatticeConfig {
    #[serde(flatten)]
    pub domain: DomainConfig,
    /// Beam section at `beam.l`; rescaled to the requested length.
    #[serde(default = "honeycomb_beam")]
    pub beam: BeamProps,
    /// Defaults to clamped tension to 1 mm with a body couple of
    /// −0.0058 N/mm² in 10 increments.
    pub program: Option<BoundaryProgram>,
    pub support_factor: Option<f64>,
}

/// Identification settings read from `--metric`. A bare metric object is
/// accepted as well.
#[derive(Clone, Debug, Deserialize)]
pub struct IdentifyConfig {
    pub metric: MetricParams,
    pub mode: Option<ModelMode>,
    pub nstates: Option<usize>,
    pub seed: Option<u64>,
    pub max_outer: Option<usize>,
    #[serde(default)]
    pub polish: bool,
}

#[derive(Clone, Debug, Deserialize)]
pub struct PredictConfig {
    #[serde(flatten)]
    pub domain: DomainConfig,
    pub program: BoundaryProgram,
    /// Defaults to the dataset's metric.
    pub metric: Option<MetricParams>,
    #[serde(default)]
    pub seed: u64,
    pub max_iter: Option<usize>,
    #[serde(default)]
    pub init: DdcmInit,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn read_identify_config(path: &Path) -> Result<IdentifyConfig> {
    let value: serde_json::Value = read_json(path)?;
    let parsed = if value.get("metric").is_some() {
        serde_json::from_value(value)
    } else {
        serde_json::from_value(value).map(|metric| IdentifyConfig {
            metric,
            mode: None,
            nstates: None,
            seed: None,
            max_outer: None,
            polish: false,
        })
    };
    parsed.map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

/// Per-point stresses of one snapshot: point id, coordinates, components.
fn write_stress_csv(coords: &[[f64; 2]], stresses: &[[f64; 16]], mode: ModelMode, path: &Path) -> Result<()> {
    let slots: Vec<usize> = (0..4).chain(4..4 + mode.gam_len()).chain(8..8 + mode.zet_len()).collect();
    let cols = state_columns(mode);
    let mut out = String::from("point,x1,x2");
    for name in &cols[slots.len()..] {
        out.push(',');
        out.push_str(name);
    }
    out.push('\n');
    for (p, (x, s)) in coords.iter().zip(stresses).enumerate() {
        let _ = write!(out, "{p},{:e},{:e}", x[0], x[1]);
        for &k in &slots {
            let _ = write!(out, ",{:e}", s[k]);
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn default_program(spec: &GeometrySpec) -> BoundaryProgram {
    BoundaryProgram::tension(0.01 * spec.extent().1, 6)
}

fn generate(case: CaseKind, config: &Path, out: &Path) -> Result<serde_json::Value> {
    let cfg: GenerateConfig = read_json(config)?;
    let spec = cfg.domain.spec(case)?;
    let mesh = generate_mesh(&spec)?;
    let program = cfg.program.unwrap_or_else(|| default_program(&spec));
    let set = generate_snapshots(&mesh, &cfg.moduli, cfg.mode, &program)?;
    set.write_dir(out, &mesh)?;
    Ok(json!({
        "elements": mesh.n_elems(),
        "nodes": mesh.n_nodes(),
        "snapshots": set.len(),
        "out": out,
    }))
}

fn lattice(case: CaseKind, l: f64, config: &Path, out: &Path) -> Result<serde_json::Value> {
    if !(l > 0.0) {
        return Err(Error::InvalidInput("--L must be positive".into()));
    }
    if matches!(case, CaseKind::Rectangle | CaseKind::Plate) {
        return Err(Error::InvalidInput("lattice cases are lshape and notch".into()));
    }
    let cfg: LatticeConfig = read_json(config)?;
    let spec = cfg.domain.spec(case)?;
    let (_, height) = spec.extent();
    let program = cfg.program.unwrap_or_else(|| BoundaryProgram::clamped_tension(1.0, -0.0058, 10));
    let lcase = LatticeCase {
        domain: spec.clone(),
        beam: cfg.beam,
        // cell width √3 L over the height
        epsilon: 3f64.sqrt() * l / height,
        program,
        support_factor: cfg.support_factor.unwrap_or(DEFAULT_SUPPORT_FACTOR),
    };
    let mesh = generate_mesh(&spec)?;
    let run = lattice_snapshots(&lcase, &mesh)?;
    run.snapshots.write_dir(out, &mesh)?;
    let moduli = cfg.beam.moduli();
    std::fs::write(out.join("moduli.json"), serde_json::to_string_pretty(&moduli.params())?)?;
    Ok(json!({
        "joints": run.lattice.joints.len(),
        "beams": run.lattice.beams.len(),
        "beam_length": run.lattice.props.l,
        "elements": mesh.n_elems(),
        "snapshots": run.snapshots.len(),
        "moduli": moduli,
        "out": out,
    }))
}

fn identify_cmd(
    snapshots: &Path,
    nstates: Option<usize>,
    seed: u64,
    metric: &Path,
    out: &Path,
) -> Result<serde_json::Value> {
    let cfg = read_identify_config(metric)?;
    let (mesh, set): (Mesh, SnapshotSet) = SnapshotSet::read_dir(snapshots)?;
    let mode = cfg.mode.unwrap_or(set.mode);
    let total = mesh.n_points() * set.len();
    let nstates = nstates.or(cfg.nstates).unwrap_or_else(|| default_nstates(total));
    if nstates == 0 || nstates > total {
        return Err(Error::InvalidInput(format!(
            "nstates = {nstates} must be between 1 and the number of material points ({total})"
        )));
    }
    let mut opts = IdentifyOptions::new(nstates, cfg.seed.unwrap_or(seed));
    if let Some(m) = cfg.max_outer {
        opts.max_outer = m;
    }
    opts.polish = cfg.polish;
    let res = identify(&mesh, &set, &cfg.metric, mode, &opts)?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    res.dataset.write(out)?;
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("dataset");
    let dir = out.with_file_name(format!("{stem}_stresses"));
    std::fs::create_dir_all(&dir)?;
    let coords = point_coords(&mesh_operators(&mesh, mode)?);
    for (snap, stresses) in set.snapshots.iter().zip(&res.stresses) {
        write_stress_csv(&coords, stresses, mode, &dir.join(format!("snapshot_{}.csv", snap.alpha)))?;
    }
    Ok(json!({
        "nstates": nstates,
        "material_points": total,
        "outer_iterations": res.outer_iterations,
        "converged": res.converged,
        "objective": res.history.last(),
        "pseudo_strain": res.pseudo_strain,
        "dataset": out,
        "stresses": dir,
    }))
}

fn predict(dataset: Option<&Path>, case: CaseKind, config: &Path, out: &Path) -> Result<serde_json::Value> {
    let Some(dataset) = dataset else {
        return Err(Error::InvalidInput("predict needs --dataset".into()));
    };
    let ds = MaterialDataset::read(dataset).map_err(|e| Error::InvalidInput(format!("{}: {e}", dataset.display())))?;
    let cfg: PredictConfig = read_json(config)?;
    let spec = cfg.domain.spec(case)?;
    let mesh = generate_mesh(&spec)?;
    let metric = cfg.metric.unwrap_or(ds.metric);
    let opts = DdcmOptions {
        seed: cfg.seed,
        max_iter: cfg.max_iter.unwrap_or(crate::ddcm::DEFAULT_MAX_ITER),
        init: cfg.init,
        warm_start: None,
    };
    let sol = solve_ddcm(&mesh, &ds, &cfg.program, &metric, ds.mode, &opts)?;
    std::fs::create_dir_all(out)?;
    mesh.write(out.join("mesh.json"))?;
    std::fs::write(out.join("solution.json"), sol.to_json()?)?;
    sol.write_states_csv(out.join("states.csv"))?;
    Ok(json!({
        "elements": mesh.n_elems(),
        "iterations": sol.iterations,
        "converged": sol.converged,
        "distance": sol.distance,
        "out": out,
    }))
}

fn stats(dataset: &Path, ref_model: Option<&Path>, out: &Path) -> Result<serde_json::Value> {
    let ds = MaterialDataset::read(dataset).map_err(|e| Error::InvalidInput(format!("{}: {e}", dataset.display())))?;
    let reference = match ref_model {
        Some(p) => read_json(p)?,
        None => ds.metric,
    };
    let series = export_scatter(&ds.states, ds.mode, &rows_for(ds.mode), &reference, out)?;
    Ok(json!({
        "states": ds.len(),
        "rows": series,
        "out": out,
    }))
}

fn dispatch(cmd: Command) -> Result<(&'static str, serde_json::Value)> {
    Ok(match cmd {
        Command::Generate { case, config, out } => ("generate", generate(case, &config, &out)?),
        Command::Lattice { case, l, config, out } => ("lattice", lattice(case, l, &config, &out)?),
        Command::Identify {
            snapshots,
            nstates,
            seed,
            metric,
            out,
        } => ("identify", identify_cmd(&snapshots, nstates, seed, &metric, &out)?),
        Command::Predict {
            dataset,
            case,
            config,
            out,
        } => ("predict", predict(dataset.as_deref(), case, &config, &out)?),
        Command::Stats { dataset, ref_model, out } => ("stats", stats(&dataset, ref_model.as_deref(), &out)?),
    })
}

fn init_threads() -> std::result::Result<(), String> {
    let Ok(v) = std::env::var("MMDDI_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("MMDDI_THREADS must be a positive integer, got {v:?}"))?;
    // a second call in the same process keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `argv` (program name first), runs the command and returns the
/// exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        println!("{}", json!({"status": "error", "message": msg}));
        return 1;
    }
    match dispatch(cli.command) {
        Ok((command, mut summary)) => {
            summary["command"] = json!(command);
            summary["status"] = json!("ok");
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            println!("{}", json!({"status": "error", "message": e.to_string()}));
            if e.is_solver_failure() {
                2
            } else {
                1
            }
        }
    }
}
