use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineChain, ClassicalTarget, IntermediateTarget, LogDensity};
use crate::cnn::CnnGibbs;
use crate::diagnostics::{
    classical_score, rhat_blocked, score_statistic, stationarity_onset, teacher_student_merge, MergeVerdict,
    TraceRecord, TraceSeries, TraceTable,
};
use crate::error::{Error, Result};
use crate::gibbs::{GibbsSweep, MlpGibbs};
use crate::harness::config::{DiagnosticsConfig, ExperimentConfig, Initialization, Posterior, SamplerConfig};
use crate::harness::data::build_dataset;
use crate::harness::init::initialize_chain;
use crate::model::{ChainState, Dataset, LayerSpec, Network, NoiseSchedule, PriorSpec, Targets};
use crate::rng::{mix, stream_key, RngStream};

const STREAM_DATA: u32 = 6;
const STREAM_INIT: u32 = 5;
const STREAM_BASELINE: u32 = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSummary {
    pub index: usize,
    pub init: String,
    pub trace_file: String,
    pub steps_completed: u64,
    /// The wall-clock cap stopped the chain early.
    pub truncated: bool,
    pub wall_seconds: f64,
    pub acceptance_rate: f64,
    pub final_observables: BTreeMap<String, f64>,
    /// Stationarity onset of the merge observable, if detected.
    pub stationarity_onset: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MergeSummary {
    pub chain: usize,
    pub init: String,
    pub verdict: Option<MergeVerdict>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhatBlock {
    pub time: f64,
    pub mean: f64,
    /// 25th, 50th, 75th and 95th percentiles over the recorded outputs.
    pub percentiles: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhatSummary {
    pub chains: Vec<usize>,
    pub blocks: Vec<RhatBlock>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub name: String,
    pub sampler: String,
    pub posterior: Posterior,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Observable used for merge and stationarity decisions.
    pub merge_observable: Option<String>,
    pub chains: Vec<ChainSummary>,
    pub merges: Vec<MergeSummary>,
    pub rhat_all: Option<RhatSummary>,
    pub rhat_uninformed: Option<RhatSummary>,
}

impl ExperimentSummary {
    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}

/// Observable bookkeeping shared by all chains.
struct Observer<'a> {
    net: &'a Network,
    data: &'a Dataset,
    noise: &'a NoiseSchedule,
    prior: &'a PriorSpec,
    cfg: &'a ExperimentConfig,
    columns: Vec<String>,
    outputs: usize,
    test_inputs: Option<DMatrix<f64>>,
}

impl<'a> Observer<'a> {
    fn new(
        net: &'a Network,
        data: &'a Dataset,
        noise: &'a NoiseSchedule,
        prior: &'a PriorSpec,
        cfg: &'a ExperimentConfig,
    ) -> Self {
        let mut columns = Vec::new();
        if data.teacher.is_some() && data.test.is_some() {
            columns.push("test_mse".to_string());
        }
        if let Some(Targets::Classes(_)) = data.test.as_ref().map(|t| &t.targets) {
            columns.push("test_error".to_string());
        }
        columns.push("score_u".to_string());
        columns.push("acceptance_rate".to_string());
        for (k, layer) in net.spec().layers.iter().enumerate() {
            if !matches!(layer, LayerSpec::Pool(_)) {
                columns.push(format!("sq_norm_w{}", k + 1));
            }
        }
        if cfg.posterior == Posterior::Intermediate {
            columns.push("residual_1".to_string());
        }
        let out_width = net.spec().output_width();
        let (outputs, test_inputs) = match &data.test {
            Some(test) if cfg.record_outputs > 0 => {
                let rows = cfg.record_outputs.div_ceil(out_width).min(test.len());
                let outputs = cfg.record_outputs.min(rows * out_width);
                (outputs, Some(test.inputs.rows(0, rows).into_owned()))
            }
            _ => (0, None),
        };
        columns.extend((0..outputs).map(|j| format!("out_{j}")));
        Self {
            net,
            data,
            noise,
            prior,
            cfg,
            columns,
            outputs,
            test_inputs,
        }
    }

    fn record(&self, state: &ChainState, acceptance: f64) -> Result<Vec<f64>> {
        let mut v = Vec::with_capacity(self.columns.len());
        let params = &state.params;
        if let (Some(teacher), Some(test)) = (&self.data.teacher, &self.data.test) {
            v.push(self.net.test_mse(params, &teacher.params, &test.inputs)?);
        }
        if let Some(test) = &self.data.test {
            if let Targets::Classes(labels) = &test.targets {
                v.push(self.net.test_error(params, &test.inputs, labels)?);
            }
        }
        let train = &self.data.train;
        let target = self.cfg.diagnostics.score_target;
        v.push(match self.cfg.posterior {
            Posterior::Intermediate => score_statistic(self.net, state, &train.inputs, self.noise, self.prior, target)?,
            Posterior::Classical => classical_score(
                self.net,
                params,
                &train.inputs,
                &train.targets,
                self.noise.output_delta(),
                self.prior,
                target,
            )?,
        });
        v.push(acceptance);
        for (k, layer) in self.net.spec().layers.iter().enumerate() {
            if !matches!(layer, LayerSpec::Pool(_)) {
                v.push(params.weights[k].norm_squared());
            }
        }
        if self.cfg.posterior == Posterior::Intermediate {
            let mean = self.net.layer_mean(0, &train.inputs, state);
            v.push((&state.z[0] - mean).norm_squared());
        }
        if let Some(x) = &self.test_inputs {
            let out = self.net.predict(params, x)?;
            // row-major over (test point, output coordinate)
            let flat = out.transpose();
            v.extend(flat.iter().take(self.outputs));
        }
        Ok(v)
    }
}

/// Resolved network, noise, prior and data for a config.
pub struct Prepared {
    pub net: Network,
    pub noise: NoiseSchedule,
    pub prior: PriorSpec,
    pub dataset: Dataset,
}

/// Build everything a run needs; the dataset depends only on `cfg.seed`.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    cfg.validate()?;
    let spec = cfg.network_spec()?;
    let net = Network::new(spec.clone())?;
    let noise = cfg.noise.schedule(&spec)?;
    let prior = cfg.prior.prior(&spec)?;
    let mut rng = RngStream::new(cfg.seed, stream_key(STREAM_DATA, 0));
    let dataset = build_dataset(cfg, &net, &noise, &prior, &mut rng)?;
    Ok(Prepared {
        net,
        noise,
        prior,
        dataset,
    })
}

fn chain_seed(seed: u64, index: usize) -> u64 {
    mix(seed ^ mix(index as u64 + 1))
}

/// File name of chain `index`'s trace.
pub fn trace_file_name(index: usize, init: &Initialization) -> String {
    format!("chain_{index:02}_{}.csv", init.label())
}

/// Run every chain of `cfg` concurrently, write one trace CSV per chain and
/// `summary.json` into `out_dir`, and return the summary.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentSummary> {
    let prep = prepare(cfg)?;
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("config.toml"), cfg.to_toml_string()?)?;
    let observer = Observer::new(&prep.net, &prep.dataset, &prep.noise, &prep.prior, cfg);

    let results: Vec<Result<(ChainSummary, TraceTable)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .init
            .iter()
            .enumerate()
            .map(|(i, init)| {
                let observer = &observer;
                let prep = &prep;
                scope.spawn(move || run_one(cfg, prep, observer, i, *init, out_dir))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::InvalidConfig("chain thread panicked".into())))
            })
            .collect()
    });
    let mut chains = Vec::new();
    let mut tables = Vec::new();
    for r in results {
        let (s, t) = r?;
        chains.push(s);
        tables.push(t);
    }

    let inits: Vec<String> = chains.iter().map(|c| c.init.clone()).collect();
    let analysis = analyze_traces(&tables, &inits, &cfg.diagnostics)?;
    for (c, onset) in chains.iter_mut().zip(&analysis.onsets) {
        c.stationarity_onset = *onset;
    }

    let summary = ExperimentSummary {
        name: cfg.name.clone(),
        sampler: cfg.sampler.name().to_string(),
        posterior: cfg.posterior,
        seed: cfg.seed,
        n_train: prep.dataset.n(),
        n_test: prep.dataset.test.as_ref().map_or(0, |t| t.len()),
        merge_observable: analysis.merge_observable,
        chains,
        merges: analysis.merges,
        rhat_all: analysis.rhat_all,
        rhat_uninformed: analysis.rhat_uninformed,
    };
    summary.save(&out_dir.join("summary.json"))?;
    Ok(summary)
}

enum Target<'a> {
    Classical(ClassicalTarget<'a>),
    Intermediate(IntermediateTarget<'a>),
}

impl Target<'_> {
    fn density(&self) -> &dyn LogDensity {
        match self {
            Target::Classical(t) => t,
            Target::Intermediate(t) => t,
        }
    }

    fn flatten(&self, state: &ChainState) -> Vec<f64> {
        match self {
            Target::Classical(t) => t.flatten(&state.params),
            Target::Intermediate(t) => t.flatten(state),
        }
    }

    fn write_back(&self, x: &[f64], state: &mut ChainState) {
        match self {
            Target::Classical(t) => state.params = t.params(x),
            Target::Intermediate(t) => *state = t.state(x),
        }
    }
}

fn run_one(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    observer: &Observer<'_>,
    index: usize,
    init: Initialization,
    out_dir: &Path,
) -> Result<(ChainSummary, TraceTable)> {
    let seed = chain_seed(cfg.seed, index);
    let mut init_rng = RngStream::new(seed, stream_key(STREAM_INIT, 0));
    let mut state = initialize_chain(init, &prep.dataset, &prep.net, &prep.noise, &prep.prior, &mut init_rng)?;
    let train = &prep.dataset.train;
    let labels = train.targets.classes().map(<[usize]>::to_vec);
    let mut table = TraceTable::new(observer.columns.clone());
    let clock = Instant::now();
    let push = |table: &mut TraceTable, t: u64, state: &ChainState, acc: f64| -> Result<()> {
        table.push(TraceRecord {
            sweep: t,
            wall_s: clock.elapsed().as_secs_f64(),
            values: observer.record(state, acc)?,
        })
    };
    let out_of_time = || cfg.max_seconds.is_some_and(|m| clock.elapsed().as_secs_f64() >= m);
    let mut steps = 0;
    let mut truncated = false;
    let acceptance;

    match cfg.sampler {
        SamplerConfig::Gibbs { schedule } => {
            let net = prep.net.clone();
            let (noise, prior) = (prep.noise.clone(), prep.prior.clone());
            let inputs = train.inputs.clone();
            let mut sampler: Box<dyn GibbsSweep> = if net.spec().dense_widths().is_ok() {
                Box::new(MlpGibbs::new(net, noise, prior, schedule, inputs, labels, seed)?)
            } else {
                Box::new(CnnGibbs::new(net, noise, prior, inputs, labels, seed)?)
            };
            push(&mut table, 0, &state, 1.0)?;
            for t in 1..=cfg.sweeps {
                sampler.sweep(&mut state)?;
                steps = t;
                let stop = out_of_time();
                if t % cfg.spacing == 0 || t == cfg.sweeps || stop {
                    push(&mut table, t, &state, 1.0)?;
                }
                if stop && t < cfg.sweeps {
                    truncated = true;
                    break;
                }
            }
            acceptance = 1.0;
        }
        SamplerConfig::Hmc { .. } | SamplerConfig::Mala { .. } => {
            let kind = cfg.sampler.baseline().expect("gradient sampler");
            let target = match cfg.posterior {
                Posterior::Classical => Target::Classical(ClassicalTarget::new(
                    &prep.net,
                    &train.inputs,
                    &train.targets,
                    prep.noise.output_delta(),
                    &prep.prior,
                )?),
                Posterior::Intermediate => Target::Intermediate(IntermediateTarget::new(
                    &prep.net,
                    &train.inputs,
                    &prep.noise,
                    &prep.prior,
                    train.targets.classes(),
                    state.clone(),
                )?),
            };
            let mut rng = RngStream::new(seed, stream_key(STREAM_BASELINE, 0));
            let mut chain = BaselineChain::new(kind, target.density(), target.flatten(&state))?;
            push(&mut table, 0, &state, f64::NAN)?;
            for t in 1..=cfg.sweeps {
                chain.step(target.density(), &mut rng);
                steps = t;
                let stop = out_of_time();
                if t % cfg.spacing == 0 || t == cfg.sweeps || stop {
                    target.write_back(chain.position(), &mut state);
                    push(&mut table, t, &state, chain.acceptance_rate())?;
                }
                if stop && t < cfg.sweeps {
                    truncated = true;
                    break;
                }
            }
            acceptance = chain.acceptance_rate();
        }
    }

    let file = trace_file_name(index, &init);
    table.save(&out_dir.join(&file))?;
    let final_observables = table
        .records
        .last()
        .map(|r| {
            table
                .columns
                .iter()
                .zip(&r.values)
                .filter(|(c, _)| !c.starts_with("out_"))
                .map(|(c, v)| (c.clone(), *v))
                .collect()
        })
        .unwrap_or_default();
    let summary = ChainSummary {
        index,
        init: init.label().to_string(),
        trace_file: file,
        steps_completed: steps,
        truncated,
        wall_seconds: clock.elapsed().as_secs_f64(),
        acceptance_rate: acceptance,
        final_observables,
        stationarity_onset: None,
    };
    Ok((summary, table))
}

/// Diagnostics computed from a set of chain traces.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceAnalysis {
    /// `test_mse` or `test_error`, whichever the traces carry.
    pub merge_observable: Option<String>,
    /// Stationarity onset of each chain on the log merge observable, with the
    /// initial record left out.
    pub onsets: Vec<Option<u64>>,
    /// Merge verdict of every chain against the informed one.
    pub merges: Vec<MergeSummary>,
    /// Blocked R̂ over the `out_` columns of all chains.
    pub rhat_all: Option<RhatSummary>,
    /// Same, leaving out the informed chain.
    pub rhat_uninformed: Option<RhatSummary>,
}

/// Stationarity onsets, teacher–student merges and blocked R̂ for a set of
/// traces. `inits` labels each chain; the one labelled `informed` (if any)
/// is the reference for the merge criterion.
pub fn analyze_traces(tables: &[TraceTable], inits: &[String], diag: &DiagnosticsConfig) -> Result<TraceAnalysis> {
    if tables.len() != inits.len() {
        return Err(Error::InvalidConfig(format!(
            "{} traces but {} labels",
            tables.len(),
            inits.len()
        )));
    }
    let rule = diag.rule();
    let merge_observable = ["test_mse", "test_error"]
        .into_iter()
        .find(|c| tables.iter().all(|t| t.column_index(c).is_some()));
    let mut onsets = vec![None; tables.len()];
    let mut merges = Vec::new();
    if let Some(col) = merge_observable {
        // The record at sweep 0 is the starting state, not a draw of the
        // chain; an informed start sits exactly on the teacher (zero error).
        let series: Vec<TraceSeries> = tables
            .iter()
            .map(|t| {
                t.series(col).map(|s| {
                    let skip = usize::from(s.sweeps().first() == Some(&0) && s.len() > 1);
                    s.slice(skip, s.len()).ln(diag.log_floor)
                })
            })
            .collect::<Result<_>>()?;
        for (o, s) in onsets.iter_mut().zip(&series) {
            *o = stationarity_onset(s, rule);
        }
        if let Some(inf) = inits.iter().position(|i| i == "informed") {
            for (i, init) in inits.iter().enumerate() {
                if i == inf {
                    continue;
                }
                let (verdict, error) = match teacher_student_merge(&series[inf], &series[i], rule) {
                    Ok(v) => (Some(v), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                merges.push(MergeSummary {
                    chain: i,
                    init: init.clone(),
                    verdict,
                    error,
                });
            }
        }
    }

    let has_outputs = tables.iter().all(|t| t.columns.iter().any(|c| c.starts_with("out_")));
    let rhat_for = |idx: Vec<usize>| -> Option<RhatSummary> {
        if idx.len() < 2 || !has_outputs {
            return None;
        }
        let series: Result<Vec<TraceSeries>> = idx.iter().map(|&i| tables[i].series_with_prefix("out_")).collect();
        let (blocks, error) = match series.and_then(|s| rhat_blocked(&s, diag.rhat_block)) {
            Ok(b) => (
                b.into_iter()
                    .map(|t| RhatBlock {
                        time: t.time,
                        mean: t.report.mean,
                        percentiles: t.report.percentiles,
                    })
                    .collect(),
                None,
            ),
            Err(e) => (Vec::new(), Some(e.to_string())),
        };
        Some(RhatSummary {
            chains: idx,
            blocks,
            error,
        })
    };
    Ok(TraceAnalysis {
        merge_observable: merge_observable.map(str::to_string),
        onsets,
        rhat_all: rhat_for((0..tables.len()).collect()),
        rhat_uninformed: rhat_for((0..tables.len()).filter(|&i| inits[i] != "informed").collect()),
        merges,
    })
}

/// Load every `chain_*.csv` trace in a directory, sorted by name.
pub fn load_traces(dir: &Path) -> Result<Vec<(PathBuf, TraceTable)>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|e| e == "csv")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("chain_"))
        })
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| TraceTable::load(&p).map(|t| (p, t)))
        .collect()
}
