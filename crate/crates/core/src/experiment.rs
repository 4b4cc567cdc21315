//! Multi-run harness: topology comparison, ablation table and
//! hyperparameter sweeps, all on fixed train/valid/test splits.

use std::fmt;
use std::fmt::Write as _;
use std::time::Instant;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::eval::{EvalReport, relaimp};
use crate::maskblock::Ablation;
use crate::model::{Model, ModelSpec, Topology};
use crate::train::{train, History, TrainConfig};

pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn new(data: &Dataset, seed: u64) -> Self {
        let (train, valid, test) = crate::data::split_dataset(data, seed);
        Splits { train, valid, test }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub label: String,
    pub spec: ModelSpec,
    pub test: EvalReport,
    pub history: History,
    pub param_count: usize,
    pub seconds: f64,
}

impl RunResult {
    pub fn summary(&self) -> String {
        format!(
            "{:<24} test_auc={:.4} logloss={:.4} best_epoch={} epochs={} params={} time={:.1}s",
            self.label,
            self.test.auc,
            self.test.logloss,
            self.history.best_epoch,
            self.history.epochs.len(),
            self.param_count,
            self.seconds
        )
    }
}

pub fn run_one(label: impl Into<String>, spec: &ModelSpec, cfg: &TrainConfig, splits: &Splits) -> Result<(Model, RunResult)> {
    let start = Instant::now();
    let mut model = Model::new(spec, splits.train.schema.clone())?;
    let history = train(&mut model, &splits.train, &splits.valid, cfg)?;
    let probs = model.predict_dataset(&splits.test)?;
    let test = EvalReport::compute(&probs, &splits.test.labels())?;
    let result = RunResult {
        label: label.into(),
        spec: spec.clone(),
        test,
        param_count: model.param_count(),
        history,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((model, result))
}

/// Trains each topology with the same widths, embedding size and training
/// budget, and attaches RelaImp against the DNN run when present.
pub fn compare_topologies(
    base: &ModelSpec,
    cfg: &TrainConfig,
    splits: &Splits,
    topologies: &[Topology],
) -> Result<Vec<RunResult>> {
    let mut out = Vec::new();
    for &t in topologies {
        let spec = base.clone().with_topology(t);
        let spec = match t {
            Topology::Dnn | Topology::Linear => ModelSpec {
                ablation: Ablation::none(),
                ..spec
            },
            _ => spec,
        };
        out.push(run_one(t.as_str(), &spec, cfg, splits)?.1);
    }
    attach_relaimp(&mut out, "dnn");
    Ok(out)
}

fn attach_relaimp(results: &mut [RunResult], baseline: &str) {
    let Some(base) = results.iter().find(|r| r.label == baseline).map(|r| r.test.auc) else {
        return;
    };
    for r in results.iter_mut() {
        if let Ok(v) = relaimp(r.test.auc, base) {
            r.test.relaimp = Some((baseline.to_owned(), v));
        }
    }
}

pub const ABLATION_ROWS: [(&str, &str); 4] = [
    ("full", ""),
    ("-w/o Mask", "no_mask"),
    ("-w/o LN", "no_ln"),
    ("-w/o FFN", "no_ffn"),
];

/// Test AUC of the full model and of each single-component removal, for
/// the serial and parallel topologies.
#[derive(Debug, Clone)]
pub struct AblationReport {
    /// `[row][0 = serial, 1 = parallel]`
    pub auc: [[f64; 2]; 4],
    pub runs: Vec<RunResult>,
}

pub fn ablation_study(base: &ModelSpec, cfg: &TrainConfig, splits: &Splits) -> Result<AblationReport> {
    let mut auc = [[0.0; 2]; 4];
    let mut runs = Vec::new();
    for (c, t) in [Topology::Serial, Topology::Parallel].into_iter().enumerate() {
        for (r, (name, flags)) in ABLATION_ROWS.iter().enumerate() {
            let spec = ModelSpec {
                topology: t,
                ablation: Ablation::parse(flags)?,
                ..base.clone()
            };
            let (_, res) = run_one(format!("{t} {name}"), &spec, cfg, splits)?;
            auc[r][c] = res.test.auc;
            runs.push(res);
        }
    }
    Ok(AblationReport { auc, runs })
}

impl AblationReport {
    pub fn to_delimited(&self) -> String {
        let mut s = String::from("variant,SerMaskNet,ParaMaskNet\n");
        for (r, (name, _)) in ABLATION_ROWS.iter().enumerate() {
            let _ = writeln!(s, "{name},{},{}", self.auc[r][0], self.auc[r][1]);
        }
        s
    }
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>11} {:>11}", "", "SerMaskNet", "ParaMaskNet")?;
        for (r, (name, _)) in ABLATION_ROWS.iter().enumerate() {
            writeln!(f, "{:<12} {:>11.4} {:>11.4}", name, self.auc[r][0], self.auc[r][1])?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Blocks,
    EmbeddingDim,
    ReductionRatio,
}

impl std::str::FromStr for SweepParam {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blocks" => Ok(SweepParam::Blocks),
            "embedding_dim" | "embedding-dim" => Ok(SweepParam::EmbeddingDim),
            "reduction_ratio" | "reduction-ratio" => Ok(SweepParam::ReductionRatio),
            other => Err(Error::Config(format!(
                "unknown sweep parameter {other:?} (expected blocks, embedding_dim or reduction_ratio)"
            ))),
        }
    }
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::Blocks => "blocks",
            SweepParam::EmbeddingDim => "embedding_dim",
            SweepParam::ReductionRatio => "reduction_ratio",
        }
    }

    pub fn apply(self, base: &ModelSpec, value: usize) -> ModelSpec {
        let mut spec = base.clone();
        match self {
            SweepParam::Blocks => {
                let w = base.block_widths.first().copied().unwrap_or(64);
                spec.block_widths = vec![w; value];
            }
            SweepParam::EmbeddingDim => spec.embedding_dim = value,
            SweepParam::ReductionRatio => spec.reduction_ratio = value,
        }
        spec
    }
}

pub fn sweep(
    param: SweepParam,
    values: &[usize],
    base: &ModelSpec,
    cfg: &TrainConfig,
    splits: &Splits,
) -> Result<Vec<RunResult>> {
    values
        .iter()
        .map(|&v| {
            let spec = param.apply(base, v);
            run_one(format!("{}={v}", param.as_str()), &spec, cfg, splits).map(|(_, r)| r)
        })
        .collect()
}

/// `label,test_auc,logloss,best_epoch,params` rows.
pub fn results_delimited(results: &[RunResult]) -> String {
    let mut s = String::from("label,test_auc,test_logloss,relaimp_pct,best_epoch,epochs,params,seconds\n");
    for r in results {
        let rel = r.test.relaimp.as_ref().map_or(String::new(), |(_, v)| format!("{v:.4}"));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{:.3}",
            r.label,
            r.test.auc,
            r.test.logloss,
            rel,
            r.history.best_epoch,
            r.history.epochs.len(),
            r.param_count,
            r.seconds
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticConfig};

    fn small() -> (Splits, ModelSpec, TrainConfig) {
        let d = gen_synthetic(&SyntheticConfig {
            fields: 3,
            vocab_per_field: 5,
            instances: 400,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let spec = ModelSpec {
            block_widths: vec![4, 4],
            top_widths: vec![4],
            embedding_dim: 2,
            ..ModelSpec::default()
        };
        let cfg = TrainConfig {
            batch_size: 64,
            learning_rate: 1e-2,
            max_epochs: 2,
            ..TrainConfig::default()
        };
        (Splits::new(&d, 1), spec, cfg)
    }

    #[test]
    fn ablation_report_has_table_shape() {
        let (splits, spec, cfg) = small();
        let r = ablation_study(&spec, &cfg, &splits).unwrap();
        assert_eq!(r.runs.len(), 8);
        let text = r.to_delimited();
        assert_eq!(text.lines().count(), 5);
        assert!(text.contains("-w/o Mask,") && text.contains("-w/o FFN,"));
        assert!(r.auc.iter().flatten().all(|a| (0.0..=1.0).contains(a)));
    }

    #[test]
    fn sweep_over_blocks_gives_one_result_each() {
        let (splits, spec, cfg) = small();
        let rs = sweep(SweepParam::Blocks, &[1, 3, 5], &spec, &cfg, &splits).unwrap();
        assert_eq!(rs.len(), 3);
        assert_eq!(rs[2].spec.blocks(), 5);
        assert_eq!(results_delimited(&rs).lines().count(), 4);
    }

    #[test]
    fn comparison_attaches_relaimp_to_dnn_baseline() {
        let (splits, spec, cfg) = small();
        let rs = compare_topologies(&spec, &cfg, &splits, &[Topology::Linear, Topology::Dnn]).unwrap();
        let dnn = rs.iter().find(|r| r.label == "dnn").unwrap();
        if dnn.test.auc > 0.5 {
            assert_eq!(dnn.test.relaimp.as_ref().unwrap().1, 0.0);
        }
    }
}
