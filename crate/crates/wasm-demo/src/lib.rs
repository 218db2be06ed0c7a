//! Browser bindings: framing arithmetic, stack entropy of generated
//! waveforms, and an attacked formation run rendered as SVG.

use fdimit::config::RunConfig;
use fdimit::entropy::stack_entropy;
use fdimit::features::FeatureExtractor;
use fdimit::signal::{frame_count, generate_segments, realized_frame_count, FrameConfig, GeneratorConfig, SignalKind};
use fdimit::sim::{deviation_rmse, run_formation, Scenario, SimConfig, SimRun};
use fdimit::svg::{LineChart, Series};
use wasm_bindgen::prelude::*;

fn js(e: fdimit::Error) -> String {
    e.to_string()
}

/// `[closed-form frames, enumerated frames, hop]`.
#[wasm_bindgen]
pub fn frame_counts(samples: usize, frame_len: usize, overlap: usize) -> Result<Vec<u32>, String> {
    let cfg = FrameConfig::new(frame_len, overlap).map_err(js)?;
    let closed = frame_count(samples, cfg).map_err(js)?;
    let realized = realized_frame_count(samples, cfg).map_err(js)?;
    Ok(vec![closed as u32, realized as u32, cfg.hop() as u32])
}

/// `kind`: 1 sinusoid, 2 square, 3 noise.
#[wasm_bindgen]
pub fn waveform(kind: u8, seed: u64, samples: usize) -> Result<Vec<f64>, String> {
    let kind = match kind {
        1 => SignalKind::Sinusoid,
        2 => SignalKind::Square,
        3 => SignalKind::Noise,
        k => return Err(format!("unknown waveform kind {k}")),
    };
    let cfg = GeneratorConfig { seed, total_samples: samples, partitions: 1, ..Default::default() };
    let (series, _) = generate_segments(&[(kind, samples)], &cfg).map_err(js)?;
    Ok(series.into_samples())
}

/// Normalized entropy of every `stride`-th stack of `values` under the desk
/// feature settings.
#[wasm_bindgen]
pub fn stack_entropies(values: &[f64], stride: usize) -> Result<Vec<f64>, String> {
    let cfg = RunConfig::desk();
    let fx = FeatureExtractor::new(cfg.resolved_features()).map_err(js)?;
    let stacks = fx.stacks(values).map_err(js)?;
    stacks
        .iter()
        .step_by(stride.max(1))
        .map(|s| stack_entropy(s, &cfg.entropy).map(|r| r.en).map_err(js))
        .collect()
}

fn runs(scenario: u8, seed: u64) -> Result<(SimRun, SimRun, usize), String> {
    let (sc, watched) = match scenario {
        1 => (Scenario::one(), 1),
        2 => (Scenario::two(), 2),
        s => return Err(format!("unknown scenario {s}")),
    };
    let clean = SimConfig { seed, ..SimConfig::default() };
    let hit = SimConfig { scenario: Some(sc), ..clean.clone() };
    Ok((run_formation(&clean, None).map_err(js)?, run_formation(&hit, None).map_err(js)?, watched))
}

/// Trajectory deviation of each robot from its attack-free path, m.
#[wasm_bindgen]
pub fn formation_deviation(scenario: u8, seed: u64) -> Result<Vec<f64>, String> {
    let (clean, hit, _) = runs(scenario, seed)?;
    (1..=clean.robots)
        .map(|r| deviation_rmse(&hit.trajectory(r), &clean.trajectory(r)).map_err(js))
        .collect()
}

/// Attack-free and attacked paths of the targeted robot, plus the attacked
/// paths of the others.
#[wasm_bindgen]
pub fn formation_svg(scenario: u8, seed: u64) -> Result<String, String> {
    let (clean, hit, watched) = runs(scenario, seed)?;
    let path = |run: &SimRun, r: usize| run.trajectory(r).iter().map(|p| (p[0], p[1])).collect::<Vec<_>>();
    let mut chart = LineChart::new(format!("Scenario {scenario}"), "x (m)", "y (m)")
        .with(Series::new(format!("robot {watched} attack-free"), path(&clean, watched)).dashed())
        .with(Series::new(format!("robot {watched} attacked"), path(&hit, watched)));
    for r in (1..=hit.robots).filter(|&r| r != watched) {
        chart = chart.with(Series::new(format!("robot {r} attacked"), path(&hit, r)));
    }
    chart.equal_axes = true;
    Ok(chart.render())
}
