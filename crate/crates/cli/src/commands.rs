use std::sync::Arc;

use anyhow::{anyhow, Context, Result};
use fdimit::classifier::Classifier;
use fdimit::config::RunConfig;
use fdimit::ensemble::{compare_frameworks, write_records, AssignmentTable, CompareReport, Pipeline, AVERAGE_THREE};
use fdimit::entropy::{read_reports_csv, write_reports_csv};
use fdimit::features::FeatureExtractor;
use fdimit::forecasters::{read_manifest, write_manifest, BenchStats, Forecaster};
use fdimit::imaging::{read_stacks, write_stacks};
use fdimit::io::write_csv;
use fdimit::signal::TimeSeries;
use fdimit::sim::Scenario;
use fdimit::svg::{LineChart, Series};
use fdimit::workflow::{self, Dataset, OVERLAPS};
use log::info;

use crate::steps::forecaster_file;
use crate::workdir::{Workdir, CONFIG_FILE};

type Meta = Vec<(&'static str, String)>;

fn kv(k: impl Into<String>, v: impl ToString) -> (String, String) {
    (k.into(), v.to_string())
}

fn load_series(wd: &Workdir, rel: &str) -> Result<(TimeSeries, Option<Vec<u8>>)> {
    TimeSeries::read_csv(wd.open(rel)?).with_context(|| format!("reading {rel}"))
}

fn load_dataset(wd: &Workdir, rel: &str) -> Result<Dataset> {
    let (series, classes) = load_series(wd, rel)?;
    let classes = classes.ok_or_else(|| anyhow!("{rel} has no label column"))?;
    Ok(Dataset { series, classes })
}

fn load_levels(wd: &Workdir) -> Result<Vec<usize>> {
    let reports = read_reports_csv(wd.open("label/entropy.csv")?).context("reading label/entropy.csv")?;
    reports
        .iter()
        .enumerate()
        .map(|(i, r)| r.level.ok_or_else(|| anyhow!("stack {} in label/entropy.csv has no level", i + 1)))
        .collect()
}

fn load_models(wd: &Workdir, cfg: &RunConfig) -> Result<Vec<Forecaster>> {
    let mut rows = read_manifest(wd.open("models/manifest.csv")?).context("reading models/manifest.csv")?;
    rows.sort_by_key(|r| r.model_id);
    rows.iter()
        .map(|r| {
            let file = forecaster_file(r.model_id);
            let mut m = Forecaster::load(cfg.forecast.spec(r.architecture), wd.open(&file)?).with_context(|| format!("loading {file}"))?;
            m.set_inference_time(BenchStats { mean: r.t_l_seconds, variance: 0.0, trials: cfg.forecast.bench_trials });
            Ok(m)
        })
        .collect()
}

fn load_pipeline(wd: &Workdir, cfg: &RunConfig) -> Result<Pipeline> {
    let fx = Arc::new(FeatureExtractor::new(cfg.resolved_features())?);
    let classifier = Classifier::load(cfg.classifier.clone(), wd.open("models/classifier.bin")?).context("loading models/classifier.bin")?;
    let text = std::fs::read_to_string(wd.path("models/assignment.toml"))?;
    let table: AssignmentTable = toml::from_str(&text).context("parsing models/assignment.toml")?;
    Ok(Pipeline::new(fx, classifier, table, load_models(wd, cfg)?)?)
}

fn model_names(pipe: &Pipeline) -> Vec<String> {
    pipe.models.iter().map(|m| m.spec().architecture.to_string()).collect()
}

fn toml_header(meta: &Meta) -> String {
    meta.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}

pub fn gen_data(wd: &Workdir, cfg: &RunConfig) -> Result<()> {
    let meta = cfg.stamp();
    let data = workflow::generate(cfg)?;
    let test = workflow::test_series(cfg)?;
    wd.write_with("data/train.csv", |w| data.series.write_csv(w, Some(&data.classes), &meta))?;
    wd.write_with("data/test.csv", |w| test.series.write_csv(w, Some(&test.classes), &meta))?;
    wd.write_text(CONFIG_FILE, &(toml_header(&meta) + &cfg.to_toml()?))?;
    let sizes: Vec<String> = (1..=cfg.generator.partitions)
        .map(|c| data.classes.iter().filter(|&&l| l as usize == c).count().to_string())
        .collect();
    info!("gen-data: {} training samples ({}), {} test samples", data.series.len(), sizes.join("/"), test.series.len());
    wd.summarize(
        cfg,
        &[
            kv("gen_data.samples", data.series.len()),
            kv("gen_data.partition_sizes", sizes.join("/")),
            kv("gen_data.test_samples", test.series.len()),
        ],
    )
}

pub fn label(wd: &Workdir, cfg: &RunConfig, jobs: usize) -> Result<()> {
    let meta = cfg.stamp();
    let data = load_dataset(wd, "data/train.csv")?;
    let fx = FeatureExtractor::new(cfg.resolved_features())?;
    let lab = workflow::label(cfg, &fx, &data, jobs).context("labeling stacks")?;
    wd.write_with("label/entropy.csv", |w| write_reports_csv(w, &lab.reports, &meta))?;
    wd.write_with("label/thresholds.csv", |w| {
        write_csv(
            w,
            &meta,
            &["level", "tau_e"],
            lab.thresholds.iter().enumerate().map(|(i, t)| vec![(i + 1).to_string(), t.to_string()]),
        )
    })?;
    wd.write_with("label/stacks.bin", |w| write_stacks(w, &lab.stacks))?;
    let counts: Vec<String> = (1..=cfg.levels()).map(|l| lab.levels.iter().filter(|&&x| x == l).count().to_string()).collect();
    info!("label: {} stacks, levels {}, purity {:.1}%", lab.stacks.len(), counts.join("/"), 100.0 * lab.purity);
    let thresholds: Vec<String> = lab.thresholds.iter().map(|t| format!("{t:.6}")).collect();
    wd.summarize(
        cfg,
        &[
            kv("label.stacks", lab.stacks.len()),
            kv("label.level_counts", counts.join("/")),
            kv("label.thresholds", thresholds.join(",")),
            kv("label.purity_percent", format!("{:.2}", 100.0 * lab.purity)),
        ],
    )
}

pub fn train_classifier(wd: &Workdir, cfg: &RunConfig) -> Result<()> {
    let meta = cfg.stamp();
    let stacks = read_stacks(wd.open("label/stacks.bin")?).context("reading label/stacks.bin")?;
    let levels = load_levels(wd)?;
    if stacks.len() != levels.len() {
        return Err(anyhow!("{} stacks but {} labeled rows; rerun `fdimit label`", stacks.len(), levels.len()));
    }
    let out = workflow::train_stage1(cfg, &stacks, &levels)?;
    wd.write_with("models/classifier.bin", |w| out.model.save(w))?;
    wd.write_with("reports/classification.csv", |w| out.report.write_csv(w, &meta))?;
    wd.write_with("reports/classifier_loss.csv", |w| {
        write_csv(
            w,
            &meta,
            &["epoch", "loss"],
            out.history.epoch_losses.iter().enumerate().map(|(i, l)| vec![(i + 1).to_string(), l.to_string()]),
        )
    })?;
    info!("train-classifier: validation accuracy {:.2}% on {} stacks", out.report.accuracy, out.val_idx.len());
    wd.summarize(
        cfg,
        &[
            kv("classifier.validation_accuracy_percent", format!("{:.2}", out.report.accuracy)),
            kv("classifier.train_stacks", out.train_idx.len()),
            kv("classifier.validation_stacks", out.val_idx.len()),
        ],
    )
}

pub fn train_forecasters(wd: &Workdir, cfg: &RunConfig, jobs: usize) -> Result<()> {
    let meta = cfg.stamp();
    let data = load_dataset(wd, "data/train.csv")?;
    let bank = workflow::train_bank(cfg, &data, jobs)?;
    for (i, m) in bank.iter().enumerate() {
        wd.write_with(&forecaster_file(i), |w| m.model.save(w))?;
    }
    let rows = workflow::manifest_rows(&bank);
    wd.write_with("models/manifest.csv", |w| write_manifest(w, &meta, &rows))?;
    let mut summary = Vec::new();
    for r in &rows {
        info!("train-forecasters: {} val RMSE {:.4}, T_l {:.3e} s", r.architecture, r.val_rmse, r.t_l_seconds);
        summary.push(kv(format!("forecaster.{}.val_rmse", r.architecture), r.val_rmse));
        summary.push(kv(format!("forecaster.{}.t_l_seconds", r.architecture), r.t_l_seconds));
    }
    wd.summarize(cfg, &summary)
}

pub fn assign(wd: &Workdir, cfg: &RunConfig) -> Result<()> {
    let meta = cfg.stamp();
    let data = load_dataset(wd, "data/train.csv")?;
    let levels = load_levels(wd)?;
    let mut models = load_models(wd, cfg)?;
    let fx = FeatureExtractor::new(cfg.resolved_features())?;
    let table = workflow::assign(cfg, &fx, &levels, &data, &mut models)?;
    let names: Vec<String> = models.iter().map(|m| m.spec().architecture.to_string()).collect();
    wd.write_with("reports/assignment.csv", |w| table.write_csv(w, &meta, &names))?;
    let text = toml::to_string(&table).context("serializing the assignment table")?;
    wd.write_text("models/assignment.toml", &(toml_header(&meta) + &text))?;
    let chosen: Vec<String> = table.entries.iter().map(|e| names[e.model].clone()).collect();
    info!("assign: levels 1..={} -> {}", table.levels(), chosen.join(", "));
    wd.summarize(cfg, &[kv("assign.models", chosen.join(","))])
}

pub fn mitigate(wd: &Workdir, cfg: &RunConfig, scenario: u8) -> Result<()> {
    let meta = cfg.stamp();
    let pipe = load_pipeline(wd, cfg)?;
    let (sc, watched) = match scenario {
        1 => (Scenario::one(), 1),
        _ => (Scenario::two(), 2),
    };
    let runs = workflow::run_scenario(&cfg.sim, sc, &pipe, cfg.ensemble.mitigation)?;
    let dir = format!("runs/scenario{scenario}");
    for (name, run) in [("reference", &runs.reference), ("attacked", &runs.attacked), ("mitigated", &runs.mitigated)] {
        wd.write_with(&format!("{dir}/{name}.csv"), |w| run.write_csv(w, &meta))?;
    }
    let names = model_names(&pipe);
    if let Some([x, y]) = &runs.mitigated.records {
        wd.write_with(&format!("{dir}/records_x.csv"), |w| write_records(w, &meta, x, &names))?;
        wd.write_with(&format!("{dir}/records_y.csv"), |w| write_records(w, &meta, y, &names))?;
    }
    let path = |run: &fdimit::sim::SimRun| run.trajectory(watched).iter().map(|p| (p[0], p[1])).collect::<Vec<_>>();
    let mut chart = LineChart::new(format!("Scenario {scenario}: robot {watched} trajectory"), "x (m)", "y (m)")
        .with(Series::new("reference", path(&runs.reference)).dashed())
        .with(Series::new("uncompensated", path(&runs.attacked)))
        .with(Series::new("mitigated", path(&runs.mitigated)));
    chart.equal_axes = true;
    let stamp: String = meta.iter().map(|(k, v)| format!("{k}={v} ")).collect();
    wd.write_text(&format!("{dir}/trajectory.svg"), &format!("<!-- {} -->\n{}", stamp.trim_end(), chart.render()))?;

    let mut summary = Vec::new();
    for robot in 1..=runs.reference.robots {
        let (plain, fixed) = runs.deviation(robot)?;
        info!("mitigate: scenario {scenario} robot {robot} deviation {plain:.4} m unmitigated, {fixed:.4} m mitigated");
        let key = |s: &str| format!("mitigate.scenario{scenario}.robot{robot}.{s}");
        summary.push(kv(key("deviation_unmitigated_m"), plain));
        summary.push(kv(key("deviation_mitigated_m"), fixed));
        summary.push(kv(key("final_offset_unmitigated_m"), runs.final_offset(&runs.attacked, robot)));
        summary.push(kv(key("final_offset_mitigated_m"), runs.final_offset(&runs.mitigated, robot)));
    }
    wd.summarize(cfg, &summary)
}

fn test_samples(wd: &Workdir) -> Result<Vec<f64>> {
    Ok(load_series(wd, "data/test.csv")?.0.into_samples())
}

pub fn compare(wd: &Workdir, cfg: &RunConfig) -> Result<()> {
    let pipe = load_pipeline(wd, cfg)?;
    let report = compare_frameworks(&pipe, &test_samples(wd)?, &[])?;
    wd.write_with("reports/compare.csv", |w| report.write_csv(w, &cfg.stamp()))?;
    info!("compare: stacked RMSE {:.4} over {} forecasts", report.stacked_rmse, report.forecasts);
    let mut summary = vec![kv("compare.stacked_rmse", report.stacked_rmse), kv("compare.stacked_t_infr_seconds", report.stacked_t_infr)];
    for r in &report.models {
        info!("compare: {} RMSE {:.4}, Imp {:.2}%", r.name, r.rmse, r.imp);
        summary.push(kv(format!("compare.{}.rmse", r.name), r.rmse));
        summary.push(kv(format!("compare.{}.imp_percent", r.name), r.imp));
    }
    wd.summarize(cfg, &summary)
}

pub fn ablate_stage1(wd: &Workdir, cfg: &RunConfig) -> Result<()> {
    let pipe = load_pipeline(wd, cfg)?;
    let index = |a| pipe.models.iter().position(|m| m.spec().architecture == a).ok_or_else(|| anyhow!("no {a} forecaster in the bank"));
    let three = AVERAGE_THREE.iter().map(|&a| index(a)).collect::<Result<Vec<_>>>()?;
    let subsets = vec![three, (0..pipe.models.len()).collect()];
    let report = compare_frameworks(&pipe, &test_samples(wd)?, &subsets)?;
    let ablation = CompareReport { models: Vec::new(), ..report };
    wd.write_with("reports/ablate_stage1.csv", |w| ablation.write_csv(w, &cfg.stamp()))?;
    let mut summary = vec![kv("ablate_stage1.stacked_rmse", ablation.stacked_rmse)];
    for r in &ablation.averages {
        info!("ablate-stage1: {} RMSE {:.4} vs stacked {:.4}", r.name, r.rmse, ablation.stacked_rmse);
        summary.push(kv(format!("ablate_stage1.{}.rmse", r.name), r.rmse));
        summary.push(kv(format!("ablate_stage1.{}.imp_percent", r.name), r.imp));
    }
    wd.summarize(cfg, &summary)
}

pub fn sweep_overlap(wd: &Workdir, cfg: &RunConfig, jobs: usize, repeats: usize) -> Result<()> {
    let base = load_pipeline(wd, cfg)?;
    let data = load_dataset(wd, "data/train.csv")?;
    let pipes = OVERLAPS
        .iter()
        .map(|&l| {
            info!("sweep-overlap: preparing L={l}");
            workflow::overlap_pipeline(cfg, &base, &data, l, jobs).with_context(|| format!("overlap {l}"))
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = workflow::sweep_overlap(&pipes, &test_samples(wd)?, repeats)?;
    wd.write_with("reports/sweep_overlap.csv", |w| workflow::write_overlap_csv(w, &cfg.stamp(), &rows))?;
    let mut summary = Vec::new();
    for r in &rows {
        info!("sweep-overlap: L={} T_infr {:.3} ms, RMSE {:.4}", r.overlap, 1e3 * r.t_infr, r.rmse);
        summary.push(kv(format!("sweep_overlap.L{}.t_infr_seconds", r.overlap), r.t_infr));
        summary.push(kv(format!("sweep_overlap.L{}.rmse", r.overlap), r.rmse));
    }
    wd.summarize(cfg, &summary)
}
