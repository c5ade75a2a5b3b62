//! Seeded simulation grids over teachers and seeds.

use std::path::{Path, PathBuf};

use jedi_core::data::{gen_gaussian10d, gen_mixture2d, split_examples, Dataset, Gaussian10dSpec, Mixture2dSpec, DEFAULT_SPLIT};
use jedi_core::harmonic::{default_bandwidth, median_factor};
use jedi_core::model::{Concept, EtaSchedule, LearnerState, TeachingPool, DEFAULT_ETA0};
use jedi_core::rng::{stream_rng, Stream};
use jedi_core::target::{default_target_eta, train_target_concept, DEFAULT_L2, DEFAULT_TARGET_ITERS};
use jedi_core::teacher::{midpoint_example, run_teaching, TeacherKind, TeacherVariant, TeachingEnv, TeachingRun, DEFAULT_CONVERGENCE_TOL};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csvio::read_examples;
use crate::error::{Error, Result};
use crate::trace::{append_jsonl, write_trace};

/// The β values swept on the 10D set.
pub const BETA_SWEEP: [f64; 5] = [0.368, 0.5, 0.75, 0.875, 0.999];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Mixture2d(Mixture2dSpec),
    Gaussian10d(Gaussian10dSpec),
    /// A labeled table, split into teach and eval per seed.
    Csv { path: PathBuf, split: f64 },
}

impl DatasetSpec {
    pub fn csv(path: impl Into<PathBuf>) -> Self {
        DatasetSpec::Csv {
            path: path.into(),
            split: DEFAULT_SPLIT,
        }
    }

    pub fn load(&self, seed: u64) -> Result<Dataset> {
        Ok(match self {
            DatasetSpec::Mixture2d(s) => gen_mixture2d(s, seed)?,
            DatasetSpec::Gaussian10d(s) => gen_gaussian10d(s, seed)?,
            DatasetSpec::Csv { path, split } => {
                let (teach, eval) = split_examples(read_examples(path)?, *split, seed)?;
                Dataset {
                    teach: TeachingPool::new(teach)?,
                    eval,
                }
            }
        })
    }

    /// Learning-rate schedule paired with the dataset by default.
    pub fn default_schedule(&self) -> EtaSchedule {
        match self {
            DatasetSpec::Mixture2d(_) => EtaSchedule::Constant { eta0: DEFAULT_ETA0 },
            DatasetSpec::Gaussian10d(_) => EtaSchedule::Decay { eta0: DEFAULT_ETA0, c: 20.0 },
            DatasetSpec::Csv { .. } => EtaSchedule::Decay { eta0: DEFAULT_ETA0, c: 200.0 },
        }
    }
}

/// Per-dimension kernel width: `factor × std`, or the factor that puts the
/// median pairwise exponent at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Factor(f64),
    Median,
}

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::Factor(1.0)
    }
}

impl Bandwidth {
    pub fn sigma(&self, pool: &TeachingPool) -> Result<Vec<f64>> {
        let factor = match *self {
            Bandwidth::Factor(f) => f,
            Bandwidth::Median => median_factor(pool)?,
        };
        Ok(default_bandwidth(pool, factor)?)
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("median") {
            return Ok(Bandwidth::Median);
        }
        s.parse::<f64>()
            .ok()
            .filter(|f| *f > 0.0 && f.is_finite())
            .map(Bandwidth::Factor)
            .ok_or_else(|| Error::Validation(format!("bandwidth must be `median` or a positive number, got `{s}`")))
    }
}

/// One teacher in the grid. `beta` is the learner's decay rate and, for the
/// memory-aware variants, the rate the teacher assumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherSetup {
    pub name: String,
    pub variant: TeacherVariant,
    pub beta: f64,
}

impl TeacherSetup {
    pub fn new(variant: TeacherVariant, beta: f64) -> Self {
        let base = match variant {
            TeacherVariant::JediOmniscient | TeacherVariant::JediHarmonic => "jedi",
            TeacherVariant::ImtOmniscient | TeacherVariant::ImtHarmonic => "imt",
            TeacherVariant::Random => "rt",
            TeacherVariant::Sgd => "sgd",
        };
        TeacherSetup {
            name: format!("{base}-{beta}"),
            variant,
            beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: DatasetSpec,
    pub teachers: Vec<TeacherSetup>,
    pub seeds: Vec<u64>,
    pub schedule: EtaSchedule,
    pub max_iter: usize,
    pub noise_std: f64,
    pub l2: f64,
    pub bandwidth: Bandwidth,
    pub cold_start: usize,
    pub tolerance: f64,
}

impl ExperimentSpec {
    pub fn new(dataset: DatasetSpec, teachers: Vec<TeacherSetup>, seeds: Vec<u64>) -> Self {
        ExperimentSpec {
            schedule: dataset.default_schedule(),
            dataset,
            teachers,
            seeds,
            max_iter: 500,
            noise_std: 0.0,
            l2: DEFAULT_L2,
            bandwidth: Bandwidth::default(),
            cold_start: 1,
            tolerance: DEFAULT_CONVERGENCE_TOL,
        }
    }

    /// 2D mixture, omniscient JEDI (β = 0.5) against IMT and SGD, noiseless
    /// learners, constant η = 0.03.
    pub fn toy(seeds: Vec<u64>) -> Self {
        ExperimentSpec::new(
            DatasetSpec::Mixture2d(Mixture2dSpec::default()),
            vec![
                TeacherSetup::new(TeacherVariant::JediOmniscient, 0.5),
                TeacherSetup::new(TeacherVariant::ImtOmniscient, 0.0),
                TeacherSetup::new(TeacherVariant::Sgd, 0.0),
            ],
            seeds,
        )
    }

    /// 10D Gaussians, harmonic teachers over the β sweep plus IMT and random
    /// teaching, noisy learners, decayed η.
    pub fn gaussian10d(seeds: Vec<u64>) -> Self {
        let mut teachers = vec![
            TeacherSetup::new(TeacherVariant::Random, 0.0),
            TeacherSetup::new(TeacherVariant::ImtHarmonic, 0.0),
        ];
        teachers.extend(BETA_SWEEP.iter().map(|&b| TeacherSetup::new(TeacherVariant::JediHarmonic, b)));
        let mut spec = ExperimentSpec::new(DatasetSpec::Gaussian10d(Gaussian10dSpec::default()), teachers, seeds);
        spec.noise_std = 0.01;
        spec.bandwidth = Bandwidth::Median;
        spec
    }

    pub fn validate(&self) -> Result<()> {
        if self.teachers.is_empty() {
            return Err(Error::Validation("at least one teacher is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Validation("at least one seed is required".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Validation(format!("noise must be non-negative, got {}", self.noise_std)));
        }
        let mut names: Vec<&str> = self.teachers.iter().map(|t| t.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("teacher names must be distinct".into()));
        }
        for t in &self.teachers {
            self.kind(t).validate()?;
        }
        Ok(())
    }

    pub fn kind(&self, t: &TeacherSetup) -> TeacherKind {
        let mut k = TeacherKind::new(t.variant, t.beta, self.schedule, self.max_iter).with_cold_start(self.cold_start);
        k.tolerance = self.tolerance;
        k
    }
}

/// Everything shared by the teachers of one seed.
#[derive(Debug, Clone)]
pub struct SeedContext {
    pub seed: u64,
    pub dataset: Dataset,
    pub target: Concept,
    pub sigma: Vec<f64>,
    pub w0: Concept,
    pub first: usize,
}

impl SeedContext {
    pub fn build(spec: &ExperimentSpec, seed: u64) -> Result<Self> {
        let dataset = spec.dataset.load(seed)?;
        let pool = &dataset.teach;
        let target = train_target_concept(pool, default_target_eta(pool, spec.l2), DEFAULT_TARGET_ITERS, spec.l2)?;
        let sigma = spec.bandwidth.sigma(pool)?;
        let w0 = Concept::random(pool.dimension(), &mut stream_rng(seed, Stream::LearnerInit));
        let first = midpoint_example(pool);
        Ok(SeedContext {
            seed,
            dataset,
            target,
            sigma,
            w0,
            first,
        })
    }

    pub fn run(&self, spec: &ExperimentSpec, t: &TeacherSetup) -> Result<TeachingRun> {
        let env = TeachingEnv::new(&self.dataset.teach, &self.target, &self.sigma)?;
        let learner = LearnerState::new(self.w0.clone(), t.beta, spec.schedule, spec.noise_std)?;
        Ok(run_teaching(&spec.kind(t), learner, &env, self.seed, Some(self.first))?)
    }
}

/// Outcome of one (seed, teacher) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub teacher: String,
    pub variant: TeacherVariant,
    pub beta: f64,
    pub steps: usize,
    pub unique_count: usize,
    pub initial_dist_sq: f64,
    pub final_dist_sq: f64,
    pub eval_accuracy: f64,
}

/// Per-teacher aggregates over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherSummary {
    pub teacher: String,
    pub variant: TeacherVariant,
    pub beta: f64,
    pub runs: usize,
    pub median_unique: f64,
    pub median_final_dist_sq: f64,
    pub mean_eval_accuracy: f64,
    pub median_eval_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    /// Ordered by seed, then by teacher as listed in the spec.
    pub runs: Vec<RunRecord>,
    pub summary: Vec<TeacherSummary>,
}

impl ExperimentReport {
    pub fn summary_for(&self, teacher: &str) -> Option<&TeacherSummary> {
        self.summary.iter().find(|s| s.teacher == teacher)
    }

    pub fn runs_for<'a>(&'a self, teacher: &'a str) -> impl Iterator<Item = &'a RunRecord> + 'a {
        self.runs.iter().filter(move |r| r.teacher == teacher)
    }
}

/// A report plus the full run for each of its records.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub report: ExperimentReport,
    pub runs: Vec<TeachingRun>,
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Aggregate runs per teacher, in order of first appearance.
pub fn summarize(runs: &[RunRecord]) -> Vec<TeacherSummary> {
    let mut order: Vec<&RunRecord> = Vec::new();
    for r in runs {
        if order.iter().all(|o| o.teacher != r.teacher) {
            order.push(r);
        }
    }
    order
        .into_iter()
        .map(|t| {
            let rs: Vec<&RunRecord> = runs.iter().filter(|r| r.teacher == t.teacher).collect();
            let col = |f: fn(&RunRecord) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<f64>>();
            let acc = col(|r| r.eval_accuracy);
            TeacherSummary {
                teacher: t.teacher.clone(),
                variant: t.variant,
                beta: t.beta,
                runs: rs.len(),
                median_unique: median(&col(|r| r.unique_count as f64)),
                median_final_dist_sq: median(&col(|r| r.final_dist_sq)),
                mean_eval_accuracy: acc.iter().sum::<f64>() / acc.len() as f64,
                median_eval_accuracy: median(&acc),
            }
        })
        .collect()
}

/// Run every (seed, teacher) cell. Cells run in parallel and are merged in
/// spec order, so the report does not depend on scheduling.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Experiment> {
    spec.validate()?;
    let contexts: Vec<SeedContext> = spec.seeds.par_iter().map(|&s| SeedContext::build(spec, s)).collect::<Result<_>>()?;
    let cells: Vec<(&SeedContext, &TeacherSetup)> =
        contexts.iter().flat_map(|c| spec.teachers.iter().map(move |t| (c, t))).collect();
    let done: Vec<(RunRecord, TeachingRun)> = cells
        .par_iter()
        .map(|&(ctx, t)| {
            let run = ctx.run(spec, t)?;
            let record = RunRecord {
                seed: ctx.seed,
                teacher: t.name.clone(),
                variant: t.variant,
                beta: t.beta,
                steps: run.events.len(),
                unique_count: run.unique_count,
                initial_dist_sq: run.concept_trace[0],
                final_dist_sq: *run.concept_trace.last().unwrap_or(&f64::NAN),
                eval_accuracy: run.final_learner.w.accuracy(&ctx.dataset.eval),
            };
            Ok((record, run))
        })
        .collect::<Result<_>>()?;
    let (records, runs): (Vec<_>, Vec<_>) = done.into_iter().unzip();
    let summary = summarize(&records);
    Ok(Experiment {
        report: ExperimentReport {
            spec: spec.clone(),
            runs: records,
            summary,
        },
        runs,
    })
}

/// Manifest line describing one written trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    #[serde(flatten)]
    pub record: RunRecord,
    pub trace: String,
}

pub const MANIFEST: &str = "manifest.jsonl";
pub const REPORT: &str = "report.json";

pub fn trace_file_name(r: &RunRecord) -> String {
    format!("seed{}_{}.csv", r.seed, r.teacher)
}

/// Write `report.json`, `manifest.jsonl` and one trace CSV per run under `dir`.
pub fn write_experiment(dir: &Path, exp: &Experiment) -> Result<()> {
    let traces = dir.join("traces");
    std::fs::create_dir_all(&traces).map_err(|e| Error::io(&traces, e))?;
    let mut entries = Vec::with_capacity(exp.runs.len());
    for (r, run) in exp.report.runs.iter().zip(&exp.runs) {
        let name = trace_file_name(r);
        write_trace(&traces.join(&name), run)?;
        entries.push(ManifestEntry {
            record: r.clone(),
            trace: format!("traces/{name}"),
        });
    }
    let manifest = dir.join(MANIFEST);
    if manifest.exists() {
        std::fs::remove_file(&manifest).map_err(|e| Error::io(&manifest, e))?;
    }
    append_jsonl(&manifest, &entries)?;
    let report = dir.join(REPORT);
    let body = serde_json::to_string_pretty(&exp.report)?;
    std::fs::write(&report, body + "\n").map_err(|e| Error::io(&report, e))
}
