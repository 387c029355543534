use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::Result;
use fimsketch_core::{compare_designs, DesignReport64, InitKind, Method, Mode, PotentialCoeffs, Preset};
use rayon::prelude::*;

use crate::config::Sampler;
use crate::experiment::{ArmSpec, Model};
use crate::NumericalFailure;

/// Settings for the design comparison tables of the fixed-source and
/// source-design studies.
#[derive(Clone, Debug)]
pub struct TablesOptions {
    pub scenario: Preset,
    pub nx: usize,
    pub c: usize,
    pub gamma: f64,
    pub fixed_iterations: usize,
    pub source_iterations: usize,
    pub init_sigma: f64,
}

impl Default for TablesOptions {
    fn default() -> Self {
        Self {
            scenario: Preset::SystemC,
            nx: 30,
            c: 18,
            gamma: 1e4,
            fixed_iterations: 25,
            source_iterations: 60,
            init_sigma: 0.3,
        }
    }
}

/// Median and interquartile range of one method across seeds.
#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub scenario: String,
    pub mode: Mode,
    pub method: String,
    pub runs: usize,
    pub lambda_min: Option<(f64, f64)>,
    pub c_inv: (f64, f64),
}

pub const SUMMARY_HEADER: &str = "scenario,mode,method,runs,lambda_min_median,lambda_min_iqr,c_inv_median,c_inv_iqr";

#[derive(Clone, Debug)]
pub struct Tables {
    /// Per-seed rows: full data plus two initial distributions times four
    /// methods.
    pub fixed: Vec<DesignReport64>,
    /// Per-seed rows: two initial distributions times four methods.
    pub source: Vec<DesignReport64>,
    pub fixed_summary: Vec<SummaryRow>,
    pub source_summary: Vec<SummaryRow>,
}

impl Tables {
    pub fn summary(&self, mode: Mode, method: &str) -> Option<&SummaryRow> {
        let rows = match mode {
            Mode::FixedSource => &self.fixed_summary,
            Mode::SourceDesign => &self.source_summary,
        };
        rows.iter().find(|r| r.method == method)
    }

    /// Writes `fixed_source_runs.csv`, `fixed_source_summary.csv` and the
    /// source-design counterparts.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        for (name, runs, summary) in [
            ("fixed_source", &self.fixed, &self.fixed_summary),
            ("source_design", &self.source, &self.source_summary),
        ] {
            compare_designs(runs.clone()).write_csv(fs::File::create(dir.join(format!("{name}_runs.csv")))?)?;
            write_summary(summary, fs::File::create(dir.join(format!("{name}_summary.csv")))?)?;
        }
        Ok(())
    }
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        let (lm, li) = r
            .lambda_min
            .map(|(m, i)| (m.to_string(), i.to_string()))
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{lm},{li},{},{}",
            r.scenario, r.mode, r.method, r.runs, r.c_inv.0, r.c_inv.1
        )?;
    }
    Ok(())
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// `(median, q75 - q25)`.
pub fn median_iqr(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (quantile(&v, 0.5), quantile(&v, 0.75) - quantile(&v, 0.25))
}

pub fn summarize(reports: &[DesignReport64]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(String, Mode, Option<InitKind>, Method), Vec<&DesignReport64>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((r.scenario.clone(), r.mode, r.init, r.method))
            .or_default()
            .push(r);
    }
    groups
        .into_values()
        .map(|rs| {
            let lambdas: Option<Vec<f64>> = rs.iter().map(|r| r.lambda_min).collect();
            let cinvs: Vec<f64> = rs.iter().map(|r| r.c_inv).collect();
            SummaryRow {
                scenario: rs[0].scenario.clone(),
                mode: rs[0].mode,
                method: rs[0].method_label(),
                runs: rs.len(),
                lambda_min: lambdas.map(|l| median_iqr(&l)),
                c_inv: median_iqr(&cinvs),
            }
        })
        .collect()
}

const SAMPLERS: [Sampler; 3] = [Sampler::Eks, Sampler::Cbs, Sampler::Resample];
const INITS: [InitKind; 2] = [InitKind::Normal, InitKind::Uniform];

fn seed_rows(model: &Model, scenario: &str, opts: &TablesOptions, iterations: usize, seed: u64) -> Result<Vec<DesignReport64>> {
    let mut rows = Vec::new();
    if let Some(full) = model.full() {
        let n = (opts.nx - 1) * (opts.nx - 1);
        rows.push(model.report(scenario, None, Method::Full, n, full, seed));
    }
    for init in INITS {
        for (k, sampler) in SAMPLERS.into_iter().enumerate() {
            let mut arm = ArmSpec::new(sampler, init, opts.c, iterations, seed);
            arm.init_sigma = opts.init_sigma;
            let out = model.run_arm(scenario, &arm).map_err(NumericalFailure)?;
            if k == 0 {
                rows.push(out.initial_report);
            }
            rows.push(out.final_report);
        }
    }
    Ok(rows)
}

/// Runs every arm of both comparison tables for each seed (in parallel) and
/// summarizes them. Per-seed rows do not depend on how many seeds run.
pub fn reproduce_tables(seeds: &[u64], opts: &TablesOptions) -> Result<Tables> {
    let coeffs: PotentialCoeffs<f64> = opts.scenario.coeffs();
    let scenario = opts.scenario.name();
    let fixed_model = Model::fixed_source(opts.nx, coeffs.clone(), opts.gamma).map_err(NumericalFailure)?;
    let source_model = Model::source_design(opts.nx, coeffs).map_err(NumericalFailure)?;
    let run = |model: &Model, iterations: usize| -> Result<Vec<DesignReport64>> {
        let per_seed: Vec<Vec<DesignReport64>> = seeds
            .par_iter()
            .map(|&s| seed_rows(model, scenario, opts, iterations, s))
            .collect::<Result<_>>()?;
        Ok(per_seed.into_iter().flatten().collect())
    };
    let fixed = run(&fixed_model, opts.fixed_iterations)?;
    let source = run(&source_model, opts.source_iterations)?;
    Ok(Tables {
        fixed_summary: summarize(&fixed),
        source_summary: summarize(&source),
        fixed,
        source,
    })
}
