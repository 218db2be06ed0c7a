//! End-to-end steps shared by the command line and the acceptance runs.

use std::ops::Range;
use std::sync::Arc;

use crate::classifier::{train_classifier, ClassifierOutcome};
use crate::config::RunConfig;
use serde::{Deserialize, Serialize};

use crate::ensemble::{assign_models, compare_frameworks, level_rmse, rmse, sample_levels, AssignmentTable, MitigationConfig, Pipeline};
use crate::entropy::{complexity_level, fit_thresholds, label_purity, stack_entropy, EntropyReport};
use crate::error::{Error, Result};
use crate::features::FeatureExtractor;
use crate::forecasters::{evaluate, train_forecaster, Architecture, Forecaster, ManifestRow};
use crate::imaging::ScalogramStack;
use crate::nn::TrainHistory;
use crate::signal::{generate_complexity_dataset, generate_segments, switching_layout, GeneratorConfig, TimeSeries};
use crate::sim::{deviation_rmse, run_formation, Scenario, SimConfig, SimRun};

/// Map `f` over `items` on up to `jobs` threads, preserving order.
pub fn par_map<T: Sync, U: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> Result<U> + Sync) -> Result<Vec<U>> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    let parts: Vec<Result<Vec<U>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items.chunks(chunk).map(|c| s.spawn(move || c.iter().map(f).collect())).collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub series: TimeSeries,
    /// Generator class per sample, 1-based.
    pub classes: Vec<u8>,
}

fn generator(cfg: &RunConfig, seed: u64) -> GeneratorConfig {
    GeneratorConfig { seed, fs: cfg.resolved_features().fs, ..cfg.generator.clone() }
}

pub fn generate(cfg: &RunConfig) -> Result<Dataset> {
    let (series, classes) = generate_complexity_dataset(&generator(cfg, cfg.seed))?;
    Ok(Dataset { series, classes })
}

/// Held-out series switching between the three waveform families.
pub fn test_series(cfg: &RunConfig) -> Result<Dataset> {
    let (series, classes) = generate_segments(&switching_layout(), &generator(cfg, cfg.seed.wrapping_add(1000)))?;
    Ok(Dataset { series, classes })
}

/// Training and validation ranges: the first `train_fraction` of every
/// partition trains, the remainder validates.
pub fn partition_splits(cfg: &RunConfig, n: usize) -> (Vec<Range<usize>>, Vec<Range<usize>>) {
    let parts = cfg.generator.partitions.max(1);
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for p in 0..parts {
        let (a, b) = (p * n / parts, (p + 1) * n / parts);
        let cut = a + ((b - a) as f64 * cfg.train_fraction).round() as usize;
        train.push(a..cut);
        val.push(cut..b);
    }
    (train, val)
}

#[derive(Debug, Clone)]
pub struct Labeled {
    pub stacks: Vec<ScalogramStack>,
    pub reports: Vec<EntropyReport>,
    /// Generator class at the middle of each stack.
    pub stack_classes: Vec<u8>,
    pub thresholds: Vec<f64>,
    pub levels: Vec<usize>,
    pub purity: f64,
}

pub fn label(cfg: &RunConfig, fx: &FeatureExtractor, data: &Dataset, jobs: usize) -> Result<Labeled> {
    let stacks = fx.stacks(data.series.samples())?;
    let mut reports = par_map(&stacks, jobs, |s| stack_entropy(s, &cfg.entropy))?;
    let stack_classes: Vec<u8> = stacks
        .iter()
        .map(|s| {
            let (a, b) = fx.stack_span(s.first_frame_index);
            data.classes[((a + b) / 2).min(data.classes.len() - 1)]
        })
        .collect();
    let en: Vec<f64> = reports.iter().map(|r| r.en).collect();
    let thresholds = fit_thresholds(&en, &stack_classes, cfg.levels())?;
    let levels = en.iter().map(|&e| complexity_level(e, &thresholds)).collect::<Result<Vec<_>>>()?;
    for (r, &l) in reports.iter_mut().zip(&levels) {
        r.level = Some(l);
    }
    let purity = label_purity(&en, &stack_classes, &thresholds)?;
    Ok(Labeled { stacks, reports, stack_classes, thresholds, levels, purity })
}

pub fn train_stage1(cfg: &RunConfig, stacks: &[ScalogramStack], levels: &[usize]) -> Result<ClassifierOutcome> {
    let training = crate::classifier::ClassifierTraining { seed: cfg.seed, ..cfg.classifier_training };
    train_classifier(stacks, levels, cfg.classifier.clone(), &training)
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub model: Forecaster,
    pub history: TrainHistory,
    pub train_rmse: f64,
    pub val_rmse: f64,
}

/// Train the five forecasters on the training ranges, then time each one.
pub fn train_bank(cfg: &RunConfig, data: &Dataset, jobs: usize) -> Result<Vec<TrainedModel>> {
    let y = data.series.samples();
    let (train, val) = partition_splits(cfg, y.len());
    let train_segs: Vec<&[f64]> = train.iter().map(|r| &y[r.clone()]).collect();
    let val_segs: Vec<&[f64]> = val.iter().map(|r| &y[r.clone()]).collect();
    let archs: Vec<(usize, Architecture)> = Architecture::ALL.iter().copied().enumerate().collect();
    let mut bank = par_map(&archs, jobs, |&(i, a)| {
        let training = crate::forecasters::ForecastTraining { seed: cfg.seed.wrapping_add(i as u64), ..cfg.forecast.training };
        let (mut model, history) = train_forecaster(cfg.forecast.spec(a), &train_segs, &training)?;
        let (p, t) = evaluate(&mut model, &train_segs)?;
        let train_rmse = rmse(&t, &p)?;
        let (p, t) = evaluate(&mut model, &val_segs)?;
        let val_rmse = rmse(&t, &p)?;
        Ok(TrainedModel { model, history, train_rmse, val_rmse })
    })?;
    let window = &y[..cfg.forecast.k];
    for m in &mut bank {
        m.model.benchmark_inference(window, cfg.forecast.bench_trials)?;
    }
    Ok(bank)
}

pub fn manifest_rows(bank: &[TrainedModel]) -> Vec<ManifestRow> {
    bank.iter()
        .enumerate()
        .map(|(i, m)| ManifestRow {
            model_id: i,
            architecture: m.model.spec().architecture,
            train_rmse: m.train_rmse,
            val_rmse: m.val_rmse,
            t_l_seconds: m.model.inference_time().unwrap_or(f64::NAN),
        })
        .collect()
}

/// Per-level validation RMSE and the resulting table.
pub fn assign(cfg: &RunConfig, fx: &FeatureExtractor, levels: &[usize], data: &Dataset, models: &mut [Forecaster]) -> Result<AssignmentTable> {
    let y = data.series.samples();
    let per_sample = sample_levels(y.len(), levels, fx);
    let (_, val) = partition_splits(cfg, y.len());
    let segs: Vec<(&[f64], &[usize])> = val.iter().map(|r| (&y[r.clone()], &per_sample[r.clone()])).collect();
    let table_rmse = level_rmse(models, &segs, cfg.levels())?;
    let times = models
        .iter()
        .map(|m| m.inference_time().ok_or(Error::MissingComponent("forecaster inference time")))
        .collect::<Result<Vec<_>>>()?;
    assign_models(&table_rmse, &times, cfg.ensemble.epsilon, &vec![cfg.ensemble.tau_c; cfg.levels()])
}

/// Every trained artifact of one configuration.
#[derive(Debug, Clone)]
pub struct Trained {
    pub features: Arc<FeatureExtractor>,
    pub data: Dataset,
    pub labeled: Labeled,
    pub stage1: ClassifierOutcome,
    pub bank: Vec<TrainedModel>,
    pub table: AssignmentTable,
}

impl Trained {
    pub fn pipeline(&self) -> Result<Pipeline> {
        Pipeline::new(
            Arc::clone(&self.features),
            self.stage1.model.clone(),
            self.table.clone(),
            self.bank.iter().map(|m| m.model.clone()).collect(),
        )
    }
}

pub fn train_all(cfg: &RunConfig, jobs: usize) -> Result<Trained> {
    cfg.validate()?;
    let features = Arc::new(FeatureExtractor::new(cfg.resolved_features())?);
    let data = generate(cfg)?;
    let labeled = label(cfg, &features, &data, jobs)?;
    let stage1 = train_stage1(cfg, &labeled.stacks, &labeled.levels)?;
    let mut bank = train_bank(cfg, &data, jobs)?;
    let mut models: Vec<Forecaster> = bank.iter().map(|m| m.model.clone()).collect();
    let table = assign(cfg, &features, &labeled.levels, &data, &mut models)?;
    for (b, m) in bank.iter_mut().zip(models) {
        b.model = m;
    }
    Ok(Trained { features, data, labeled, stage1, bank, table })
}

/// Default overlap grid of the sweep.
pub const OVERLAPS: [usize; 5] = [15, 30, 45, 54, 59];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapRow {
    pub overlap: usize,
    pub t_infr: f64,
    pub rmse: f64,
}

/// Classifier training stacks kept per overlap in the sweep.
pub const SWEEP_MAX_STACKS: usize = 2500;

/// Pipeline for another overlap: relabel, retrain the classifier on at most
/// `SWEEP_MAX_STACKS` evenly spaced stacks and reassign. The forecasters are
/// reused.
pub fn overlap_pipeline(cfg: &RunConfig, base: &Pipeline, data: &Dataset, overlap: usize, jobs: usize) -> Result<Pipeline> {
    if overlap == base.features.config().overlap {
        return Ok(base.clone());
    }
    let mut c = cfg.clone();
    c.features.overlap = overlap;
    c.validate()?;
    let fx = Arc::new(FeatureExtractor::new(c.resolved_features())?);
    let labeled = label(&c, &fx, data, jobs)?;
    let step = labeled.stacks.len().div_ceil(SWEEP_MAX_STACKS).max(1);
    let stacks: Vec<ScalogramStack> = labeled.stacks.iter().step_by(step).cloned().collect();
    let levels: Vec<usize> = labeled.levels.iter().step_by(step).copied().collect();
    let stage1 = train_stage1(&c, &stacks, &levels)?;
    let mut models = base.models.clone();
    let table = assign(&c, &fx, &labeled.levels, data, &mut models)?;
    Pipeline::new(fx, stage1.model, table, models)
}

/// Run the stacked framework on the test series with each pipeline. Timing
/// runs are interleaved `repeats` times and the fastest is kept.
pub fn sweep_overlap(pipes: &[Pipeline], test: &[f64], repeats: usize) -> Result<Vec<OverlapRow>> {
    let mut rows: Vec<OverlapRow> = pipes
        .iter()
        .map(|p| OverlapRow { overlap: p.features.config().overlap, t_infr: f64::INFINITY, rmse: f64::NAN })
        .collect();
    for _ in 0..repeats.max(1) {
        for (row, pipe) in rows.iter_mut().zip(pipes) {
            let report = compare_frameworks(pipe, test, &[])?;
            row.t_infr = row.t_infr.min(report.stacked_t_infr);
            row.rmse = report.stacked_rmse;
        }
    }
    Ok(rows)
}

pub fn write_overlap_csv<W: std::io::Write>(w: W, meta: &[(&str, String)], rows: &[OverlapRow]) -> Result<()> {
    crate::io::write_csv(
        w,
        meta,
        &["overlap", "t_infr_seconds", "rmse"],
        rows.iter().map(|r| vec![r.overlap.to_string(), r.t_infr.to_string(), r.rmse.to_string()]),
    )
}

/// Attack-free, attacked and mitigated runs of one scenario.
#[derive(Debug, Clone)]
pub struct ScenarioRuns {
    pub reference: SimRun,
    pub attacked: SimRun,
    pub mitigated: SimRun,
}

impl ScenarioRuns {
    /// Deviation of a robot from its attack-free path, without and with
    /// mitigation.
    pub fn deviation(&self, robot: usize) -> Result<(f64, f64)> {
        let r = self.reference.trajectory(robot);
        Ok((deviation_rmse(&self.attacked.trajectory(robot), &r)?, deviation_rmse(&self.mitigated.trajectory(robot), &r)?))
    }

    /// Distance from the attack-free position at the final step.
    pub fn final_offset(&self, run: &SimRun, robot: usize) -> f64 {
        let (a, b) = (run.trajectory(robot), self.reference.trajectory(robot));
        let (p, q) = (a[a.len() - 1], b[b.len() - 1]);
        (p[0] - q[0]).hypot(p[1] - q[1])
    }
}

pub fn run_scenario(sim: &SimConfig, scenario: Scenario, pipe: &Pipeline, mcfg: MitigationConfig) -> Result<ScenarioRuns> {
    let clean = SimConfig { scenario: None, ..sim.clone() };
    let hit = SimConfig { scenario: Some(scenario), ..sim.clone() };
    Ok(ScenarioRuns {
        reference: run_formation(&clean, None)?,
        attacked: run_formation(&hit, None)?,
        mitigated: run_formation(&hit, Some((pipe, mcfg)))?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<u32> = (0..17).collect();
        let a = par_map(&items, 1, |&x| Ok(x * x)).unwrap();
        let b = par_map(&items, 4, |&x| Ok(x * x)).unwrap();
        assert_eq!(a, b);
        assert!(par_map(&items, 3, |&x| if x == 9 { Err(Error::config("nine")) } else { Ok(x) }).is_err());
    }

    #[test]
    fn splits_cover_each_partition() {
        let cfg = RunConfig::desk();
        let (tr, va) = partition_splits(&cfg, 15_000);
        assert_eq!(tr, vec![0..3500, 5000..8500, 10_000..13_500]);
        assert_eq!(va, vec![3500..5000, 8500..10_000, 13_500..15_000]);
    }
}
