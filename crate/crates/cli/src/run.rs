use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use fimsketch_core::{
    compare_designs, loss_landscape, write_trace_csv, DesignReport64, Landscape, Method, PotentialCoeffs,
    SourceSpec,
};

use crate::config::{ModeArg, ScenarioConfig};
use crate::experiment::{ArmSpec, FixedSourceModel, Model};
use crate::NumericalFailure;

/// Files written by one scenario run.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub reports: Vec<DesignReport64>,
    pub files: Vec<PathBuf>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn numerical<T>(r: fimsketch_core::Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        fimsketch_core::Error::Io(io) => anyhow::Error::new(io),
        other => anyhow::Error::new(NumericalFailure(other)),
    })
}

pub fn build_model(cfg: &ScenarioConfig) -> Result<Model> {
    let coeffs = cfg.coeffs()?;
    numerical(match cfg.mode {
        ModeArg::FixedSource => Model::fixed_source(cfg.nx, coeffs, cfg.gamma),
        ModeArg::SourceDesign => Model::source_design(cfg.nx, coeffs),
    })
}

pub fn arm_spec(cfg: &ScenarioConfig) -> ArmSpec {
    ArmSpec {
        sampler: cfg.sampler,
        init: cfg.init.into(),
        c: cfg.sensors(),
        iterations: cfg.iters,
        criterion: cfg.criterion.into(),
        seed: cfg.seed,
        eks: cfg.eks_params(),
        cbs: cfg.cbs_params(),
        init_sigma: cfg.init_sigma,
    }
}

/// Runs one scenario and writes its artifacts to `cfg.output`:
/// `density.csv` (fixed-source mode), `trajectory/step_NNN.csv`,
/// `trace.csv`, `report.csv`, loss landscapes for `landscape2d`, and
/// `manifest.toml`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let dir = cfg.output.clone();
    fs::create_dir_all(dir.join("trajectory")).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut files = Vec::new();
    let model = build_model(cfg)?;
    let mut reports = Vec::new();

    if let Model::FixedSource(m) = &model {
        let path = dir.join("density.csv");
        m.density.write_csv(create(&path)?)?;
        files.push(path);
        reports.push(model.report(&cfg.scenario, None, Method::Full, m.quasimatrix.len(), &m.full, cfg.seed));
    }

    let arm = numerical(model.run_arm(&cfg.scenario, &arm_spec(cfg)))?;
    for (k, e) in arm.trajectory.iter().enumerate() {
        let path = dir.join("trajectory").join(format!("step_{k:03}.csv"));
        e.write_csv(create(&path)?)?;
        files.push(path);
    }
    let trace_path = dir.join("trace.csv");
    write_trace_csv(&arm.outcome.trace[1..], create(&trace_path)?)?;
    files.push(trace_path);

    let mut final_report = arm.final_report.clone();
    final_report.trace = Some("trace.csv".into());
    reports.push(arm.initial_report.clone());
    reports.push(final_report);

    if cfg.is_landscape() {
        if let Model::FixedSource(m) = &model {
            files.extend(write_landscapes(cfg, m, &arm.trajectory[0], arm.trajectory.last().expect("final"), &dir)?);
        }
    }

    if let Some(bad) = reports.iter().find(|r| !r.is_finite()) {
        return Err(NumericalFailure(fimsketch_core::Error::InvalidParameter {
            name: "report",
            reason: format!("non-finite metrics in {}", bad.method_label()),
        })
        .into());
    }

    let table = compare_designs(reports);
    let report_path = dir.join("report.csv");
    table.write_csv(create(&report_path)?)?;
    files.push(report_path);

    let manifest_path = dir.join("manifest.toml");
    write_manifest(cfg, &manifest_path)?;
    files.push(manifest_path);
    log::info!("wrote {} files to {}", files.len(), dir.display());
    Ok(RunOutput {
        dir,
        reports: table.rows,
        files,
    })
}

fn write_landscapes(
    cfg: &ScenarioConfig,
    m: &FixedSourceModel,
    initial: &fimsketch_core::Ensemble64,
    last: &fimsketch_core::Ensemble64,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let grid = *m.problem.grid();
    let truth: PotentialCoeffs<f64> = cfg.coeffs()?;
    let source = SourceSpec::Constant(cfg.gamma);
    let window = cfg.landscape_window();
    let mut out = Vec::new();
    let all: Vec<usize> = (0..grid.num_inner()).collect();
    let full = numerical(loss_landscape(grid, &truth, &source, &all, None, &window))?;
    out.push(write_landscape(&full, &dir.join("loss_full.csv"))?);
    let sampler = cfg.sampler.to_string();
    for (name, e) in [("init", initial), (sampler.as_str(), last)] {
        let design = numerical(fimsketch_core::Design::reweighted_on(&m.quasimatrix, &m.density, e.particles()))?;
        let weights = numerical(design.data_weights())?;
        let sensors: Vec<usize> = e.particles().iter().map(|p| m.quasimatrix.locate(p)).collect();
        let l = numerical(loss_landscape(grid, &truth, &source, &sensors, Some(&weights), &window))?;
        out.push(write_landscape(&l, &dir.join(format!("loss_{name}.csv")))?);
    }
    Ok(out)
}

fn write_landscape(l: &Landscape<f64>, path: &Path) -> Result<PathBuf> {
    l.write_csv(create(path)?)?;
    Ok(path.to_path_buf())
}

fn write_manifest(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    let created = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let mut meta = toml::Table::new();
    meta.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    meta.insert("seed".into(), toml::Value::Integer(cfg.seed as i64));
    meta.insert("created_unix".into(), toml::Value::Integer(created as i64));
    let config: toml::Table = toml::from_str(&cfg.to_toml())?;
    let mut doc = toml::Table::new();
    doc.insert("meta".into(), meta.into());
    doc.insert("config".into(), config.into());
    let mut w = create(path)?;
    w.write_all(toml::to_string(&doc)?.as_bytes())?;
    Ok(())
}

/// Writes the optimal density of a fixed-source scenario as
/// `u_1,u_2,value` rows over the inner nodes.
pub fn emit_density(cfg: &ScenarioConfig, path: &Path) -> Result<()> {
    cfg.validate()?;
    if cfg.mode != ModeArg::FixedSource {
        return Err(crate::config::ConfigError::Invalid {
            key: "mode",
            reason: "the optimal density is only normalizable in fixed-source mode".into(),
        }
        .into());
    }
    let m = numerical(FixedSourceModel::new(cfg.nx, cfg.coeffs()?, cfg.gamma))?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    m.density.write_csv(create(path)?)?;
    Ok(())
}
