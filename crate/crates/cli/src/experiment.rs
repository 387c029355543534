use fimsketch_core::{
    design_fim, full_fim, greedy_iterate, CbsParams, CoordinateLaw, Criterion, DensityField64, Design, DesignBox,
    DesignReport64, EksParams, Ensemble64, Fim64, GreedyCriterion, GreedyOutcome, Grid, InitKind, Method, Mode,
    PotentialCoeffs, Proposal, Quasimatrix64, Result, RowSource, SchrodingerProblem64, SourceDesignRows64,
    SourceSpec, UpdateRule,
};

use crate::config::Sampler;

/// Evaluated forward model with everything the design arms share.
pub enum Model {
    FixedSource(FixedSourceModel),
    SourceDesign(SourceDesignRows64),
}

pub struct FixedSourceModel {
    pub problem: SchrodingerProblem64,
    pub quasimatrix: Quasimatrix64,
    pub full: Fim64,
    pub density: DensityField64,
}

impl FixedSourceModel {
    pub fn new(nx: usize, coeffs: PotentialCoeffs<f64>, gamma: f64) -> Result<Self> {
        let grid = Grid::new(nx)?;
        coeffs.check_admissible(&grid);
        let problem = SchrodingerProblem64::new(grid, coeffs, SourceSpec::Constant(gamma))?;
        let quasimatrix = problem.full_quasimatrix()?;
        let full = full_fim(&quasimatrix);
        let density = quasimatrix.optimal_density()?;
        Ok(Self {
            problem,
            quasimatrix,
            full,
            density,
        })
    }

    /// FIM of the design the particles induce, reweighted by the optimal
    /// density at the snapped nodes.
    pub fn ensemble_fim(&self, e: &Ensemble64) -> Result<Fim64> {
        let design = Design::reweighted_on(&self.quasimatrix, &self.density, e.particles())?;
        design_fim(&self.quasimatrix, &design)
    }
}

impl Model {
    pub fn fixed_source(nx: usize, coeffs: PotentialCoeffs<f64>, gamma: f64) -> Result<Self> {
        Ok(Model::FixedSource(FixedSourceModel::new(nx, coeffs, gamma)?))
    }

    pub fn source_design(nx: usize, coeffs: PotentialCoeffs<f64>) -> Result<Self> {
        let grid = Grid::new(nx)?;
        coeffs.check_admissible(&grid);
        Ok(Model::SourceDesign(SourceDesignRows64::new(grid, coeffs)?))
    }

    pub fn mode(&self) -> Mode {
        match self {
            Model::FixedSource(_) => Mode::FixedSource,
            Model::SourceDesign(_) => Mode::SourceDesign,
        }
    }

    pub fn bounds(&self) -> &DesignBox<f64> {
        match self {
            Model::FixedSource(m) => m.quasimatrix.bounds(),
            Model::SourceDesign(r) => r.bounds(),
        }
    }

    pub fn full(&self) -> Option<&Fim64> {
        match self {
            Model::FixedSource(m) => Some(&m.full),
            Model::SourceDesign(_) => None,
        }
    }

    /// Source-design mode weights every sensor equally: the normalizing
    /// constant of the optimal density over the continuous box is unknown.
    pub fn ensemble_fim(&self, e: &Ensemble64) -> Result<Fim64> {
        match self {
            Model::FixedSource(m) => m.ensemble_fim(e),
            Model::SourceDesign(r) => design_fim(r, &Design::unweighted(e.particles().to_vec())),
        }
    }

    /// Initial distribution. The normal law is centred in the sensor box;
    /// in source-design mode the source parameters start uniform.
    pub fn proposal(&self, init: InitKind, sigma: f64) -> Proposal<f64> {
        let b = self.bounds();
        match (init, self) {
            (InitKind::Uniform, _) => Proposal::uniform(b),
            (InitKind::Normal, Model::FixedSource(_)) => Proposal::normal(b, sigma),
            (InitKind::Normal, Model::SourceDesign(_)) => {
                let center = b.center();
                Proposal::Coordinates(
                    (0..b.dim())
                        .map(|l| {
                            if l < 2 {
                                CoordinateLaw::Normal {
                                    mean: center[l],
                                    sd: sigma,
                                }
                            } else {
                                CoordinateLaw::Uniform {
                                    lo: b.lower()[l],
                                    hi: b.upper()[l],
                                }
                            }
                        })
                        .collect(),
                )
            }
        }
    }

    fn apply(&self, rule: &UpdateRule<f64>, e: &Ensemble64) -> Result<Ensemble64> {
        match self {
            Model::FixedSource(m) => rule.apply(e, &m.quasimatrix),
            Model::SourceDesign(r) => rule.apply(e, r),
        }
    }

    pub fn report(
        &self,
        scenario: &str,
        init: Option<InitKind>,
        method: Method,
        c: usize,
        fim: &Fim64,
        seed: u64,
    ) -> DesignReport64 {
        let fixed = self.mode() == Mode::FixedSource;
        DesignReport64 {
            scenario: scenario.to_string(),
            mode: self.mode(),
            init,
            method,
            c,
            lambda_min: fixed.then_some(fim.lambda_min),
            c_inv: fim.c_inv,
            frob_dev: self.full().map(|f| fim.frobenius_deviation(f)),
            seed,
            trace: None,
        }
    }

    /// Runs one greedy-wrapped arm from its initial ensemble.
    pub fn run_arm(&self, scenario: &str, arm: &ArmSpec) -> Result<ArmOutcome> {
        let proposal = self.proposal(arm.init, arm.init_sigma);
        let initial = Ensemble64::sample(&proposal, arm.c, self.bounds(), arm.seed)?;
        let rule = match arm.sampler {
            Sampler::Eks => UpdateRule::Eks(arm.eks),
            Sampler::Cbs => UpdateRule::Cbs(arm.cbs),
            Sampler::Resample => UpdateRule::Resample(proposal),
        };
        let crit = GreedyCriterion::new(arm.criterion, |e: &Ensemble64| self.ensemble_fim(e), self.full().cloned());
        let mut trajectory = Vec::with_capacity(arm.iterations + 1);
        let outcome = greedy_iterate(
            initial,
            |e| {
                trajectory.push(e.clone());
                self.apply(&rule, e)
            },
            &crit,
            arm.iterations,
        )?;
        trajectory.push(outcome.ensemble.clone());
        let init_fim = (crit.evaluator)(&trajectory[0])?;
        let initial_report = self.report(scenario, Some(arm.init), Method::Initial, arm.c, &init_fim, arm.seed);
        let final_report = self.report(scenario, Some(arm.init), arm.sampler.method(), arm.c, &outcome.fim, arm.seed);
        Ok(ArmOutcome {
            initial_report,
            final_report,
            outcome,
            trajectory,
        })
    }
}

impl Sampler {
    pub fn method(&self) -> Method {
        match self {
            Sampler::Eks => Method::Eks,
            Sampler::Cbs => Method::Cbs,
            Sampler::Resample => Method::Greedy,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ArmSpec {
    pub sampler: Sampler,
    pub init: InitKind,
    pub c: usize,
    pub iterations: usize,
    pub criterion: Criterion,
    pub seed: u64,
    pub eks: EksParams<f64>,
    pub cbs: CbsParams<f64>,
    pub init_sigma: f64,
}

impl ArmSpec {
    pub fn new(sampler: Sampler, init: InitKind, c: usize, iterations: usize, seed: u64) -> Self {
        Self {
            sampler,
            init,
            c,
            iterations,
            criterion: Criterion::InverseConditionNumber,
            seed,
            eks: EksParams::default(),
            cbs: CbsParams::default(),
            init_sigma: 0.3,
        }
    }
}

pub struct ArmOutcome {
    pub initial_report: DesignReport64,
    pub final_report: DesignReport64,
    pub outcome: GreedyOutcome<f64>,
    /// Accepted ensemble before each proposal, then the final one.
    pub trajectory: Vec<Ensemble64>,
}
