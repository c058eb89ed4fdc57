use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::mean_std;
use super::topology::{generate_problem, CoefficientSpec, TopologyConfig};
use super::HarnessError;
use crate::model::{CdcopInstance, IntervalDomain};
use crate::problem_file::write_problem;
use crate::rng::{derive_seed, tag};
use crate::solver::{Budget, DistributedSolver, SolverConfig, Variant};
use crate::trace::AnytimeTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum BudgetSpec {
    Iterations(u64),
    WallClockMs(u64),
}

impl From<BudgetSpec> for Budget {
    fn from(b: BudgetSpec) -> Self {
        match b {
            BudgetSpec::Iterations(k) => Budget::Iterations(k),
            BudgetSpec::WallClockMs(ms) => Budget::WallClock(Duration::from_millis(ms)),
        }
    }
}

fn default_domain() -> IntervalDomain {
    IntervalDomain::new(-10.0, 10.0).unwrap()
}

fn default_variants() -> Vec<Variant> {
    vec![Variant::AbcdE, Variant::AbcdC]
}

/// Every run of an experiment: instances × repeats × variants × `S` × `M`.
///
/// The topology seed is ignored; instance `k` uses a seed derived from
/// `base_seed` and `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub topology: TopologyConfig,
    #[serde(default)]
    pub coefficients: CoefficientSpec,
    #[serde(default = "default_domain")]
    pub domain: IntervalDomain,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    pub population_sizes: Vec<usize>,
    pub elite_sizes: Vec<usize>,
    pub instances: usize,
    pub repeats: usize,
    pub budget: BudgetSpec,
    pub base_seed: u64,
    /// Output directory; the CLI's `--out` takes precedence.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn read(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text).map_err(|e| HarnessError::Plan { path: path.display().to_string(), detail: e.to_string() })
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.instances < 1 {
            return bad("instances must be at least 1");
        }
        if self.repeats < 1 {
            return bad("repeats must be at least 1");
        }
        if self.variants.is_empty() || self.population_sizes.is_empty() || self.elite_sizes.is_empty() {
            return bad("variants, population_sizes and elite_sizes must be non-empty");
        }
        Ok(())
    }

    pub fn instance_seed(&self, instance: usize) -> u64 {
        derive_seed(self.base_seed, &[tag("instance"), instance as u64])
    }

    /// Depends only on the instance, repeat and variant, so adding variants
    /// or parameter values leaves existing runs unchanged.
    pub fn run_seed(&self, instance: usize, repeat: usize, variant: Variant) -> u64 {
        derive_seed(self.base_seed, &[instance as u64, repeat as u64, tag(variant.name())])
    }

    pub fn instance(&self, instance: usize) -> Result<CdcopInstance, HarnessError> {
        let topo = TopologyConfig { seed: self.instance_seed(instance), ..self.topology };
        generate_problem(&topo, self.coefficients, self.domain)
    }

    /// Header lines recorded in every output file.
    pub fn header(&self) -> Vec<String> {
        vec![
            format!("plan={}", serde_json::to_string(self).expect("plan serializes")),
            format!("coefficients=uniform[{}, {}]", self.coefficients.lo, self.coefficients.hi),
            format!("base_seed={}", self.base_seed),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub instance: usize,
    pub repeat: usize,
    pub variant: Variant,
    pub population_size: usize,
    pub elite_size: usize,
    pub seed: u64,
    pub final_utility: f64,
    pub trace: AnytimeTrace,
}

/// Final-utility statistics over the repeats of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub instance: usize,
    pub variant: Variant,
    pub population_size: usize,
    pub elite_size: usize,
    pub runs: usize,
    pub mean_final: f64,
    pub std_final: f64,
}

pub const AGGREGATE_HEADER: &str = "instance,variant,S,M,runs,mean_final,std_final";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    /// In plan order: instance, repeat, variant, `S`, `M`.
    pub runs: Vec<RunSummary>,
    pub aggregate: Vec<AggregateRow>,
}

impl ExperimentResult {
    pub fn aggregate_csv(&self) -> String {
        let mut out = String::new();
        for line in self.plan.header() {
            writeln!(out, "# {line}").unwrap();
        }
        writeln!(out, "{AGGREGATE_HEADER}").unwrap();
        for r in &self.aggregate {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                r.instance, r.variant, r.population_size, r.elite_size, r.runs, r.mean_final, r.std_final
            )
            .unwrap();
        }
        out
    }

    /// Mean final utility per instance for one configuration, by instance.
    pub fn instance_means(&self, variant: Variant, s: usize, m: usize) -> Vec<f64> {
        self.aggregate
            .iter()
            .filter(|r| r.variant == variant && r.population_size == s && r.elite_size == m)
            .map(|r| r.mean_final)
            .collect()
    }
}

fn trace_file_name(r: &RunSummary) -> String {
    format!("inst{:03}_rep{:02}_{}_S{}_M{}.csv", r.instance, r.repeat, r.variant, r.population_size, r.elite_size)
}

/// Runs every configuration of `plan` and, when `out` is given, writes the
/// instances, one trace per run and `aggregate.csv` there.
///
/// Runs execute in parallel; results and files do not depend on scheduling.
pub fn run_experiment(plan: &ExperimentPlan, out: Option<&Path>) -> Result<ExperimentResult, HarnessError> {
    plan.validate()?;
    let instances: Vec<Arc<CdcopInstance>> =
        (0..plan.instances).map(|k| plan.instance(k).map(Arc::new)).collect::<Result<_, _>>()?;

    let mut jobs = Vec::new();
    for instance in 0..plan.instances {
        for repeat in 0..plan.repeats {
            for &variant in &plan.variants {
                for &s in &plan.population_sizes {
                    for &m in &plan.elite_sizes {
                        jobs.push((instance, repeat, variant, s, m));
                    }
                }
            }
        }
    }
    let runs: Vec<RunSummary> = jobs
        .par_iter()
        .map(|&(instance, repeat, variant, s, m)| {
            let seed = plan.run_seed(instance, repeat, variant);
            let cfg = SolverConfig { budget: plan.budget.into(), ..SolverConfig::new(s, m, 1, seed) }.with_variant(variant);
            let outcome = DistributedSolver::new(instances[instance].clone(), cfg)?.run()?;
            Ok(RunSummary {
                instance,
                repeat,
                variant,
                population_size: s,
                elite_size: m,
                seed,
                final_utility: outcome.utility,
                trace: outcome.trace,
            })
        })
        .collect::<Result<_, HarnessError>>()?;

    let mut groups: BTreeMap<(usize, Variant, usize, usize), Vec<f64>> = BTreeMap::new();
    for r in &runs {
        groups.entry((r.instance, r.variant, r.population_size, r.elite_size)).or_default().push(r.final_utility);
    }
    let aggregate = groups
        .into_iter()
        .map(|((instance, variant, population_size, elite_size), finals)| {
            let (mean_final, std_final) = mean_std(&finals);
            AggregateRow { instance, variant, population_size, elite_size, runs: finals.len(), mean_final, std_final }
        })
        .collect();
    let result = ExperimentResult { plan: plan.clone(), runs, aggregate };
    if let Some(dir) = out {
        write_outputs(&result, &instances, dir)?;
    }
    Ok(result)
}

fn write_outputs(result: &ExperimentResult, instances: &[Arc<CdcopInstance>], dir: &Path) -> Result<(), HarnessError> {
    let plan = &result.plan;
    let traces = dir.join("traces");
    let problems = dir.join("instances");
    for d in [dir, &traces, &problems] {
        fs::create_dir_all(d).map_err(|e| HarnessError::io(d, e))?;
    }
    for (k, inst) in instances.iter().enumerate() {
        let topo = TopologyConfig { seed: plan.instance_seed(k), ..plan.topology };
        let mut header = plan.header();
        header.push(format!("instance={k} {topo}"));
        write_problem(&problems.join(format!("inst{k:03}.json")), inst, &header)?;
    }
    for r in &result.runs {
        let mut header = plan.header();
        header.push(format!(
            "instance={} repeat={} algo={} S={} M={} seed={}",
            r.instance, r.repeat, r.variant, r.population_size, r.elite_size, r.seed
        ));
        let path = traces.join(trace_file_name(r));
        r.trace.write_csv(&path, &header).map_err(|e| HarnessError::io(&path, e))?;
    }
    let path = dir.join("aggregate.csv");
    fs::write(&path, result.aggregate_csv()).map_err(|e| HarnessError::io(&path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    Iteration,
    PopulationSize,
    EliteSize,
}

impl FromStr for PlotAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iteration-vs-utility" => Ok(PlotAxis::Iteration),
            "S-vs-utility" => Ok(PlotAxis::PopulationSize),
            "M-vs-utility" => Ok(PlotAxis::EliteSize),
            other => Err(HarnessError::Config(format!(
                "unknown plot axis '{other}' (expected iteration-vs-utility, S-vs-utility or M-vs-utility)"
            ))),
        }
    }
}

impl PlotAxis {
    fn name(self) -> &'static str {
        match self {
            PlotAxis::Iteration => "iteration",
            PlotAxis::PopulationSize => "S",
            PlotAxis::EliteSize => "M",
        }
    }
}

/// Writes `x,mean_utility,std_utility` rows for one variant.
///
/// The iteration axis averages the global best at each iteration over every
/// run; the `S` and `M` axes average final utilities per parameter value.
pub fn emit_plot_data(result: &ExperimentResult, axis: PlotAxis, variant: Variant, out: &Path) -> Result<(), HarnessError> {
    let runs: Vec<&RunSummary> = result.runs.iter().filter(|r| r.variant == variant).collect();
    if runs.is_empty() {
        return Err(HarnessError::EmptyAggregate(format!("no {variant} runs")));
    }
    let mut points: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    for r in &runs {
        match axis {
            PlotAxis::Iteration => {
                for rec in &r.trace.records {
                    points.entry(rec.iteration).or_default().push(rec.gbest_utility);
                }
            }
            PlotAxis::PopulationSize => points.entry(r.population_size as u64).or_default().push(r.final_utility),
            PlotAxis::EliteSize => points.entry(r.elite_size as u64).or_default().push(r.final_utility),
        }
    }
    if points.is_empty() {
        return Err(HarnessError::EmptyAggregate(format!("no {} data for {variant}", axis.name())));
    }
    let mut text = String::new();
    for line in result.plan.header() {
        writeln!(text, "# {line}").unwrap();
    }
    writeln!(text, "# axis={} algo={variant}", axis.name()).unwrap();
    writeln!(text, "x,mean_utility,std_utility").unwrap();
    for (x, ys) in points {
        let (mean, std) = mean_std(&ys);
        writeln!(text, "{x},{mean},{std}").unwrap();
    }
    fs::write(out, text).map_err(|e| HarnessError::io(out, e))
}
