//! Model assignment per complexity level, online selection, and attack
//! reconstruction and correction.

use std::collections::VecDeque;
use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, ConfidenceVector};
use crate::error::{Error, Result};
use crate::features::{FeatureExtractor, StackStream};
use crate::forecasters::{Architecture, Forecaster};
use crate::io::{fmt_opt, write_csv};
use crate::metrics::{timing_report, SegmentTiming, TimingReport};

/// `sqrt(sum (z - z')^2 / N)`.
pub fn rmse(z: &[f64], z_hat: &[f64]) -> Result<f64> {
    if z.len() != z_hat.len() {
        return Err(Error::shape(format!("rmse over {} vs {} values", z.len(), z_hat.len())));
    }
    if z.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let ss: f64 = z.iter().zip(z_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / z.len() as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub level: usize,
    pub model: usize,
    pub val_rmse: f64,
    pub t_l: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentTable {
    pub entries: Vec<AssignmentEntry>,
    pub epsilon: f64,
    pub conf_thresholds: Vec<f64>,
    /// Validation RMSE, `[level][model]`.
    pub rmse: Vec<Vec<f64>>,
    pub times: Vec<f64>,
}

impl AssignmentTable {
    pub fn levels(&self) -> usize {
        self.entries.len()
    }

    pub fn model_for(&self, level: usize) -> usize {
        self.entries[level - 1].model
    }

    pub fn write_csv<W: Write>(&self, w: W, meta: &[(&str, String)], names: &[String]) -> Result<()> {
        write_csv(
            w,
            meta,
            &["level", "model", "architecture", "valRMSE", "T_l_seconds", "score", "tau_c"],
            self.entries.iter().map(|e| {
                vec![
                    e.level.to_string(),
                    e.model.to_string(),
                    names.get(e.model).cloned().unwrap_or_default(),
                    e.val_rmse.to_string(),
                    e.t_l.to_string(),
                    e.score.to_string(),
                    self.conf_thresholds[e.level - 1].to_string(),
                ]
            }),
        )
    }
}

fn min_max(values: &[f64]) -> Vec<f64> {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    values.iter().map(|v| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 }).collect()
}

/// `argmin_l eps * RMSE_l + (1 - eps) * T_l` per level, both terms min-max
/// normalized across models. Ties go to the faster model, then the lower index.
pub fn assign_models(
    level_rmse: &[Vec<f64>],
    times: &[f64],
    epsilon: f64,
    conf_thresholds: &[f64],
) -> Result<AssignmentTable> {
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::config(format!("epsilon {epsilon} outside [0, 1]")));
    }
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::config("every model needs a measured inference time"));
    }
    if conf_thresholds.len() != level_rmse.len() || conf_thresholds.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
        return Err(Error::config("one confidence threshold in (0, 1) is needed per level"));
    }
    let nt = min_max(times);
    let mut entries = Vec::with_capacity(level_rmse.len());
    for (i, row) in level_rmse.iter().enumerate() {
        if row.is_empty() || row.iter().any(|v| v.is_nan()) {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if row.len() != times.len() {
            return Err(Error::shape(format!("level {} has {} RMSE values for {} models", i + 1, row.len(), times.len())));
        }
        let nr = min_max(row);
        let score = |l: usize| epsilon * nr[l] + (1.0 - epsilon) * nt[l];
        let mut best = 0;
        for l in 1..row.len() {
            let (s, b) = (score(l), score(best));
            if s < b || (s == b && times[l] < times[best]) {
                best = l;
            }
        }
        entries.push(AssignmentEntry { level: i + 1, model: best, val_rmse: row[best], t_l: times[best], score: score(best) });
    }
    Ok(AssignmentTable {
        entries,
        epsilon,
        conf_thresholds: conf_thresholds.to_vec(),
        rmse: level_rmse.to_vec(),
        times: times.to_vec(),
    })
}

/// Validation RMSE `[level][model]`. Each segment carries a level per sample
/// (0 = unlabeled); a forecast counts toward its target sample's level.
pub fn level_rmse(models: &mut [Forecaster], segments: &[(&[f64], &[usize])], r: usize) -> Result<Vec<Vec<f64>>> {
    let mut sq = vec![vec![0.0; models.len()]; r];
    let mut count = vec![0usize; r];
    for (mi, m) in models.iter_mut().enumerate() {
        let offset = m.spec().k + m.spec().q - 1;
        for &(series, levels) in segments {
            if levels.len() != series.len() {
                return Err(Error::shape("one level per sample is required"));
            }
            let preds = m.forecast_series(series)?;
            for (j, p) in preds.iter().enumerate() {
                let t = j + offset;
                let lv = levels[t];
                if lv == 0 {
                    continue;
                }
                if lv > r {
                    return Err(Error::LabelOutOfRange { label: lv, classes: r });
                }
                sq[lv - 1][mi] += (series[t] - p).powi(2);
                if mi == 0 {
                    count[lv - 1] += 1;
                }
            }
        }
    }
    if let Some(i) = count.iter().position(|&c| c == 0) {
        return Err(Error::config(format!("validation data has no samples at level {}", i + 1)));
    }
    Ok(sq.iter().zip(&count).map(|(row, &c)| row.iter().map(|s| (s / c as f64).sqrt()).collect()).collect())
}

/// Spread per-stack levels over samples: stack `s` completes at sample
/// `warmup - 1 + s * hop` and its level holds for the next `hop` samples.
/// Samples before the first completed stack get 0.
pub fn sample_levels(n: usize, stack_levels: &[usize], fx: &FeatureExtractor) -> Vec<usize> {
    let hop = fx.frame_config().hop();
    let first = fx.warmup_len();
    let mut out = vec![0; n];
    for (s, &lv) in stack_levels.iter().enumerate() {
        let start = first + s * hop;
        for v in out.iter_mut().skip(start).take(hop) {
            *v = lv;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selection {
    Single(usize),
    Average,
    /// Trend-line extension used while the history gate rejects.
    Coast,
}

impl Selection {
    pub fn label(&self, names: &[String]) -> String {
        match self {
            Selection::Single(m) => names.get(*m).cloned().unwrap_or_else(|| m.to_string()),
            Selection::Average => "average".into(),
            Selection::Coast => "coast".into(),
        }
    }
}

/// The assigned model of the predicted level when its confidence reaches the
/// level's threshold, else the average of all models.
pub fn select_model(conf: &ConfidenceVector, table: &AssignmentTable) -> Selection {
    if table.levels() == 1 {
        return Selection::Single(table.model_for(1));
    }
    let level = conf.predict_level();
    if conf.normalized[level - 1] >= table.conf_thresholds[level - 1] {
        Selection::Single(table.model_for(level))
    } else {
        Selection::Average
    }
}

/// Everything the online loop needs.
#[derive(Debug, Clone)]
pub struct Pipeline {
    pub features: Arc<FeatureExtractor>,
    pub classifier: Classifier,
    pub table: AssignmentTable,
    pub models: Vec<Forecaster>,
}

impl Pipeline {
    pub fn new(
        features: Arc<FeatureExtractor>,
        classifier: Classifier,
        table: AssignmentTable,
        models: Vec<Forecaster>,
    ) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::MissingComponent("forecasters"));
        }
        if table.levels() != classifier.config().classes {
            return Err(Error::config("classifier and assignment table disagree on the level count"));
        }
        if table.entries.iter().any(|e| e.model >= models.len()) {
            return Err(Error::MissingComponent("assigned forecaster"));
        }
        let (k, q) = (models[0].spec().k, models[0].spec().q);
        if models.iter().any(|m| m.spec().k != k || m.spec().q != q) {
            return Err(Error::config("all forecasters must share k and q"));
        }
        Ok(Self { features, classifier, table, models })
    }

    pub fn k(&self) -> usize {
        self.models[0].spec().k
    }

    pub fn q(&self) -> usize {
        self.models[0].spec().q
    }

    pub fn model_names(&self) -> Vec<String> {
        self.models.iter().map(|m| m.spec().architecture.to_string()).collect()
    }

    pub fn predict(&mut self, sel: Selection, window: &[f64]) -> Result<f64> {
        match sel {
            Selection::Single(m) => self.models[m].forecast(window),
            Selection::Average => {
                let mut sum = 0.0;
                for m in &mut self.models {
                    sum += m.forecast(window)?;
                }
                Ok(sum / self.models.len() as f64)
            }
            Selection::Coast => Ok(crate::forecasters::detrend(window, self.q()).1),
        }
    }
}

/// Which values fill the forecaster's lookback window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum HistorySource {
    /// The received samples.
    Received,
    /// The corrected samples.
    Corrected,
    /// The received sample when `|a_hat| <= threshold`, else the corrected one.
    Gated { threshold: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MitigationConfig {
    pub history: HistorySource,
    /// Zero `a_hat` when its magnitude is at most this value.
    pub dead_band: Option<f64>,
    /// While the gate rejects, extend the window's trend line instead of
    /// running the selected model.
    #[serde(default)]
    pub coast: bool,
}

impl Default for MitigationConfig {
    fn default() -> Self {
        Self { history: HistorySource::Corrected, dead_band: None, coast: false }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MitigationRecord {
    pub t: usize,
    pub y_true: Option<f64>,
    pub y_tilde: f64,
    pub y_hat: f64,
    pub a_hat: f64,
    pub y_breve: f64,
    pub level: Option<usize>,
    pub confidence: Option<f64>,
    /// `None` during warm-up pass-through.
    pub model: Option<Selection>,
}

pub fn write_records<W: Write>(
    w: W,
    meta: &[(&str, String)],
    records: &[MitigationRecord],
    names: &[String],
) -> Result<()> {
    write_csv(
        w,
        meta,
        &["t", "y_true", "y_tilde", "y_hat", "a_hat", "y_breve", "level", "confidence", "model"],
        records.iter().map(|r| {
            vec![
                r.t.to_string(),
                fmt_opt(r.y_true),
                r.y_tilde.to_string(),
                r.y_hat.to_string(),
                r.a_hat.to_string(),
                r.y_breve.to_string(),
                r.level.map(|l| l.to_string()).unwrap_or_default(),
                fmt_opt(r.confidence),
                r.model.map(|m| m.label(names)).unwrap_or_else(|| "passthrough".into()),
            ]
        }),
    )
}

/// Causal online loop. The classifier runs once per completed frame and its
/// selection holds until the next one; until the first stack exists the
/// average of all models is used.
#[derive(Debug)]
pub struct Mitigator {
    pipe: Pipeline,
    cfg: MitigationConfig,
    stream: StackStream<Arc<FeatureExtractor>>,
    history: VecDeque<f64>,
    selection: Selection,
    level: Option<usize>,
    confidence: Option<f64>,
    t: usize,
    timings: Vec<SegmentTiming>,
    frame_cost: Option<(f64, f64)>,
    forecast_time: (f64, usize),
    rejected: bool,
}

impl Mitigator {
    pub fn new(pipe: Pipeline, cfg: MitigationConfig) -> Result<Self> {
        match (cfg.history, cfg.dead_band) {
            (HistorySource::Gated { threshold }, _) if !(threshold >= 0.0) => {
                return Err(Error::config("history gate threshold must be non-negative"))
            }
            (_, Some(d)) if !(d >= 0.0) => return Err(Error::config("dead band must be non-negative")),
            _ => {}
        }
        let stream = StackStream::new(Arc::clone(&pipe.features));
        Ok(Self {
            pipe,
            cfg,
            stream,
            history: VecDeque::new(),
            selection: Selection::Average,
            level: None,
            confidence: None,
            t: 0,
            timings: Vec::new(),
            frame_cost: None,
            forecast_time: (0.0, 0),
            rejected: false,
        })
    }

    pub fn pipeline(&self) -> &Pipeline {
        &self.pipe
    }

    /// Samples consumed before the first correction.
    pub fn warmup(&self) -> usize {
        self.pipe.k() + self.pipe.q() - 1
    }

    fn close_segment(&mut self) {
        if let Some((t_f, t_c)) = self.frame_cost.take() {
            let (sum, n) = self.forecast_time;
            if n > 0 {
                self.timings.push(SegmentTiming { t_f, t_c, t_p: sum / n as f64 });
            }
        }
        self.forecast_time = (0.0, 0);
    }

    pub fn push(&mut self, y_tilde: f64, y_true: Option<f64>) -> Result<MitigationRecord> {
        if !y_tilde.is_finite() {
            return Err(Error::NonFinite("received sample".into()));
        }
        let start = Instant::now();
        let stack = self.stream.push(y_tilde)?;
        if let Some(stack) = stack {
            let t_f = start.elapsed().as_secs_f64();
            let c0 = Instant::now();
            let conf = self.pipe.classifier.classify(&stack)?;
            let t_c = c0.elapsed().as_secs_f64();
            self.close_segment();
            self.frame_cost = Some((t_f, t_c));
            self.selection = select_model(&conf, &self.pipe.table);
            self.level = Some(conf.predict_level());
            self.confidence = Some(conf.top());
        }
        let t = self.t;
        self.t += 1;
        let (k, q) = (self.pipe.k(), self.pipe.q());
        if self.history.len() < k + q - 1 {
            self.history.push_back(y_tilde);
            return Ok(MitigationRecord {
                t,
                y_true,
                y_tilde,
                y_hat: y_tilde,
                a_hat: 0.0,
                y_breve: y_tilde,
                level: self.level,
                confidence: self.confidence,
                model: None,
            });
        }
        let window: Vec<f64> = self.history.iter().take(k).copied().collect();
        let p0 = Instant::now();
        let used = if self.cfg.coast && self.rejected { Selection::Coast } else { self.selection };
        let y_hat = self.pipe.predict(used, &window)?;
        self.forecast_time.0 += p0.elapsed().as_secs_f64();
        self.forecast_time.1 += 1;
        let mut a_hat = y_tilde - y_hat;
        if matches!(self.cfg.dead_band, Some(d) if a_hat.abs() <= d) {
            a_hat = 0.0;
        }
        let y_breve = y_tilde - a_hat;
        let keep = match self.cfg.history {
            HistorySource::Received => y_tilde,
            HistorySource::Corrected => y_breve,
            HistorySource::Gated { threshold } => {
                self.rejected = (y_tilde - y_hat).abs() > threshold;
                if !self.rejected {
                    y_tilde
                } else {
                    y_breve
                }
            }
        };
        self.history.pop_front();
        self.history.push_back(keep);
        Ok(MitigationRecord {
            t,
            y_true,
            y_tilde,
            y_hat,
            a_hat,
            y_breve,
            level: self.level,
            confidence: self.confidence,
            model: Some(used),
        })
    }

    /// Per-frame timings collected so far.
    pub fn timings(&mut self) -> Vec<SegmentTiming> {
        let mut out = self.timings.clone();
        if let Some((t_f, t_c)) = self.frame_cost {
            let (sum, n) = self.forecast_time;
            if n > 0 {
                out.push(SegmentTiming { t_f, t_c, t_p: sum / n as f64 });
            }
        }
        out
    }

    pub fn timing_report(&mut self) -> Result<TimingReport> {
        let segs = self.timings();
        let fc = self.pipe.features.config();
        let usable: Vec<SegmentTiming> =
            segs.into_iter().skip(crate::metrics::TIMING_WARMUP).collect();
        timing_report(&usable, fc.frame_len, fc.overlap)
    }
}

/// Run a whole series through a fresh mitigator.
pub fn mitigate_stream(
    pipe: Pipeline,
    cfg: MitigationConfig,
    received: &[f64],
    truth: Option<&[f64]>,
) -> Result<(Vec<MitigationRecord>, Mitigator)> {
    if let Some(tr) = truth {
        if tr.len() != received.len() {
            return Err(Error::shape("truth and received series differ in length"));
        }
    }
    let mut m = Mitigator::new(pipe, cfg)?;
    let records = received
        .iter()
        .enumerate()
        .map(|(i, &y)| m.push(y, truth.map(|t| t[i])))
        .collect::<Result<Vec<_>>>()?;
    Ok((records, m))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameworkRow {
    pub name: String,
    pub rmse: f64,
    /// Improvement of the stacked framework over this row, percent.
    pub imp: f64,
    pub t_infr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub stacked_rmse: f64,
    pub stacked_t_infr: f64,
    pub models: Vec<FrameworkRow>,
    /// Averaging baselines over model subsets.
    pub averages: Vec<FrameworkRow>,
    pub forecasts: usize,
}

impl CompareReport {
    pub fn write_csv<W: Write>(&self, w: W, meta: &[(&str, String)]) -> Result<()> {
        let mut rows = vec![vec!["stacked".into(), self.stacked_rmse.to_string(), String::new(), self.stacked_t_infr.to_string()]];
        for r in self.models.iter().chain(&self.averages) {
            rows.push(vec![r.name.clone(), r.rmse.to_string(), r.imp.to_string(), r.t_infr.to_string()]);
        }
        write_csv(w, meta, &["framework", "rmse", "imp_percent", "t_infr_seconds"], rows)
    }

    pub fn average(&self, n: usize) -> Option<&FrameworkRow> {
        self.averages.iter().find(|r| r.name == format!("average-{n}"))
    }
}

/// `|R_stacked - R_l| / R_l * 100`.
pub fn improvement(stacked: f64, other: f64) -> f64 {
    (stacked - other).abs() / other * 100.0
}

/// Default averaging subset of three: the GRU, the conv-LSTM and the
/// separable stack.
pub const AVERAGE_THREE: [Architecture; 3] = [Architecture::Gru, Architecture::ConvLstm, Architecture::DeepB];

/// Stacked selection vs every single model and the averaging baselines on a
/// clean test series, all forecasting from received windows.
pub fn compare_frameworks(pipe: &Pipeline, test: &[f64], subsets: &[Vec<usize>]) -> Result<CompareReport> {
    let cfg = MitigationConfig { history: HistorySource::Received, ..Default::default() };
    let (records, mut mitigator) = mitigate_stream(pipe.clone(), cfg, test, Some(test))?;
    let warm = mitigator.warmup();
    let truth: Vec<f64> = test[warm..].to_vec();
    let stacked: Vec<f64> = records[warm..].iter().map(|r| r.y_hat).collect();
    let stacked_rmse = rmse(&truth, &stacked)?;
    let stacked_t_infr = mitigator.timing_report().map(|r| r.t_infr).unwrap_or(f64::NAN);
    let mut models = Vec::new();
    let mut preds = Vec::new();
    let mut local = pipe.models.clone();
    for m in &mut local {
        let p = m.forecast_series(test)?;
        let r = rmse(&truth, &p)?;
        let t_l = m.inference_time().unwrap_or(f64::NAN);
        models.push(FrameworkRow { name: m.spec().architecture.to_string(), rmse: r, imp: improvement(stacked_rmse, r), t_infr: t_l });
        preds.push(p);
    }
    let mut averages = Vec::new();
    for subset in subsets {
        if subset.is_empty() || subset.iter().any(|&i| i >= preds.len()) {
            return Err(Error::config(format!("invalid averaging subset {subset:?}")));
        }
        let avg: Vec<f64> = (0..truth.len())
            .map(|j| subset.iter().map(|&i| preds[i][j]).sum::<f64>() / subset.len() as f64)
            .collect();
        let r = rmse(&truth, &avg)?;
        let t: f64 = subset.iter().map(|&i| models[i].t_infr).sum();
        averages.push(FrameworkRow { name: format!("average-{}", subset.len()), rmse: r, imp: improvement(stacked_rmse, r), t_infr: t });
    }
    Ok(CompareReport { stacked_rmse, stacked_t_infr, models, averages, forecasts: truth.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_values() {
        assert_eq!(rmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((rmse(&[0.0, 0.0], &[3.0, 4.0]).unwrap() - 12.5f64.sqrt()).abs() < 1e-15);
        assert!(rmse(&[1.0], &[1.0, 2.0]).is_err());
        assert!(rmse(&[], &[]).is_err());
    }

    fn table(eps: f64) -> AssignmentTable {
        let levels = vec![vec![0.3, 0.2, 0.25], vec![0.5, 0.6, 0.4], vec![0.9, 0.9, 0.95]];
        assign_models(&levels, &[1e-4, 3e-4, 2e-4], eps, &[0.7; 3]).unwrap()
    }

    #[test]
    fn epsilon_limits() {
        let t = table(1.0);
        assert_eq!(t.entries.iter().map(|e| e.model).collect::<Vec<_>>(), vec![1, 2, 0]);
        let t = table(0.0);
        assert!(t.entries.iter().all(|e| e.model == 0));
        assert!(assign_models(&[vec![]], &[1.0], 0.5, &[0.7]).is_err());
        assert!(assign_models(&[vec![1.0]], &[1.0], 1.5, &[0.7]).is_err());
    }

    #[test]
    fn selection_by_confidence() {
        let t = table(1.0);
        let hi = ConfidenceVector::from_raw(vec![0.05, 0.9, 0.05]).unwrap();
        assert_eq!(select_model(&hi, &t), Selection::Single(2));
        let lo = ConfidenceVector::from_raw(vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(select_model(&lo, &t), Selection::Average);
        let one = assign_models(&[vec![0.2, 0.1]], &[1.0, 2.0], 1.0, &[0.7]).unwrap();
        assert_eq!(select_model(&ConfidenceVector::from_raw(vec![1.0]).unwrap(), &one), Selection::Single(1));
    }

    #[test]
    fn improvement_of_identical_rows_is_zero() {
        assert_eq!(improvement(0.3, 0.3), 0.0);
        assert!((improvement(0.287, 0.377) - 23.87).abs() < 0.01);
    }
}
