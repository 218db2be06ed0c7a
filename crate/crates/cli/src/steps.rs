//! Subcommand dependency graph and the artifacts each step leaves in the
//! work directory.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Step {
    GenData,
    Label,
    TrainClassifier,
    TrainForecasters,
    Assign,
    Mitigate,
    Compare,
    SweepOverlap,
    AblateStage1,
}

pub const FORECASTERS: usize = 5;

impl Step {
    pub const ALL: [Step; 9] = [
        Step::GenData,
        Step::Label,
        Step::TrainClassifier,
        Step::TrainForecasters,
        Step::Assign,
        Step::Mitigate,
        Step::Compare,
        Step::SweepOverlap,
        Step::AblateStage1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Step::GenData => "gen-data",
            Step::Label => "label",
            Step::TrainClassifier => "train-classifier",
            Step::TrainForecasters => "train-forecasters",
            Step::Assign => "assign",
            Step::Mitigate => "mitigate",
            Step::Compare => "compare",
            Step::SweepOverlap => "sweep-overlap",
            Step::AblateStage1 => "ablate-stage1",
        }
    }

    /// Steps whose artifacts this one reads.
    pub fn needs(self) -> &'static [Step] {
        use Step::*;
        match self {
            GenData => &[],
            Label => &[GenData],
            TrainClassifier => &[Label],
            TrainForecasters => &[GenData],
            Assign => &[Label, TrainForecasters],
            Mitigate => &[TrainClassifier, Assign],
            Compare | AblateStage1 => &[GenData, TrainClassifier, Assign],
            SweepOverlap => &[GenData, TrainClassifier, Assign],
        }
    }

    /// Files written by the step, relative to the work directory. The first
    /// entry carries the config stamp that later steps check.
    pub fn artifacts(self) -> Vec<String> {
        match self {
            Step::GenData => vec!["data/train.csv".into(), "data/test.csv".into()],
            Step::Label => vec!["label/entropy.csv".into(), "label/thresholds.csv".into(), "label/stacks.bin".into()],
            Step::TrainClassifier => vec!["reports/classification.csv".into(), "models/classifier.bin".into()],
            Step::TrainForecasters => {
                let mut v = vec!["models/manifest.csv".to_string()];
                v.extend((0..FORECASTERS).map(forecaster_file));
                v
            }
            Step::Assign => vec!["reports/assignment.csv".into(), "models/assignment.toml".into()],
            Step::Mitigate => vec![],
            Step::Compare => vec!["reports/compare.csv".into()],
            Step::SweepOverlap => vec!["reports/sweep_overlap.csv".into()],
            Step::AblateStage1 => vec!["reports/ablate_stage1.csv".into()],
        }
    }
}

pub fn forecaster_file(i: usize) -> String {
    format!("models/forecaster-{i}.bin")
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Topological order of every step, or the steps left on a cycle.
pub fn execution_order(steps: &[Step], needs: impl Fn(Step) -> Vec<Step>) -> Result<Vec<Step>, Vec<Step>> {
    let mut order = Vec::with_capacity(steps.len());
    let mut left: Vec<Step> = steps.to_vec();
    while !left.is_empty() {
        let ready: Vec<Step> = left.iter().copied().filter(|s| needs(*s).iter().all(|d| order.contains(d))).collect();
        if ready.is_empty() {
            return Err(left);
        }
        left.retain(|s| !ready.contains(s));
        order.extend(ready);
    }
    Ok(order)
}

pub fn validate_graph() -> Result<Vec<Step>, String> {
    execution_order(&Step::ALL, |s| s.needs().to_vec()).map_err(|cycle| {
        let names: Vec<&str> = cycle.iter().map(|s| s.name()).collect();
        format!("subcommand dependencies form a cycle through {}", names.join(", "))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_is_acyclic() {
        let order = validate_graph().unwrap();
        assert_eq!(order.len(), Step::ALL.len());
        for (i, s) in order.iter().enumerate() {
            for d in s.needs() {
                assert!(order[..i].contains(d), "{s} runs before {d}");
            }
        }
    }

    #[test]
    fn cycles_are_reported() {
        let needs = |s: Step| match s {
            Step::Label => vec![Step::Assign],
            Step::Assign => vec![Step::Label],
            _ => vec![],
        };
        let left = execution_order(&[Step::GenData, Step::Label, Step::Assign], needs).unwrap_err();
        assert_eq!(left, vec![Step::Label, Step::Assign]);
    }

    #[test]
    fn names_are_unique() {
        let mut names: Vec<&str> = Step::ALL.iter().map(|s| s.name()).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), Step::ALL.len());
    }
}
