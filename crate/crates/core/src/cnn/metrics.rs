//! Evaluation metrics: per-class and support-weighted precision/recall/F1,
//! accuracy, rank-statistic AUC, and subject-wise cross-validation with
//! micro-aggregated confusion counts.

use crate::dataset::{Fold, LabeledSample};
use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, RmsPropConfig, ShallowCnn, SnapshotEnsemble, TrainItem};

/// One scored prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub predicted: bool,
    pub label: bool,
    /// Ensemble mean probability.
    pub score: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Precision/recall/F1 in percent with class support.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Metrics layout: per-class rows, a support-weighted overall row, accuracy
/// in percent, and AUC (undefined when only one class is present).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: Confusion,
    pub negative: ClassMetrics,
    pub positive: ClassMetrics,
    pub overall: ClassMetrics,
    pub accuracy: f64,
    pub auc: Option<f64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_metrics(tp: u64, fp: u64, fn_: u64, support: u64) -> ClassMetrics {
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    ClassMetrics {
        precision: 100.0 * precision,
        recall: 100.0 * recall,
        f1: 100.0 * f1,
        support,
    }
}

/// Rank-statistic (Mann-Whitney) AUC with midranks for ties; `None` when a
/// class is missing.
pub fn auc_rank(scored: &[(f64, bool)]) -> Option<f64> {
    let n_pos = scored.iter().filter(|(_, y)| *y).count();
    let n_neg = scored.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].0.partial_cmp(&scored[b].0).expect("finite scores"));
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0usize;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scored[order[j + 1]].0 == scored[order[i]].0 {
            j += 1;
        }
        // Ranks are 1-based; tied scores share the midrank.
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if scored[idx].1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let n_pos_f = n_pos as f64;
    Some((rank_sum_pos - n_pos_f * (n_pos_f + 1.0) / 2.0) / (n_pos_f * n_neg as f64))
}

/// Build the full report from scored predictions.
pub fn report_from_predictions(predictions: &[Prediction]) -> Result<MetricsReport> {
    if predictions.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let mut confusion = Confusion::default();
    for p in predictions {
        match (p.predicted, p.label) {
            (true, true) => confusion.tp += 1,
            (true, false) => confusion.fp += 1,
            (false, false) => confusion.tn += 1,
            (false, true) => confusion.fn_ += 1,
        }
    }
    let support_pos = confusion.tp + confusion.fn_;
    let support_neg = confusion.tn + confusion.fp;
    let positive = class_metrics(confusion.tp, confusion.fp, confusion.fn_, support_pos);
    // For the negative class the roles swap: "negative predicted" hits are tn.
    let negative = class_metrics(confusion.tn, confusion.fn_, confusion.fp, support_neg);
    let total = confusion.total();
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        (f(&negative) * support_neg as f64 + f(&positive) * support_pos as f64) / total as f64
    };
    let overall = ClassMetrics {
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
        support: total,
    };
    let scored: Vec<(f64, bool)> = predictions.iter().map(|p| (p.score, p.label)).collect();
    Ok(MetricsReport {
        confusion,
        negative,
        positive,
        overall,
        accuracy: 100.0 * ratio(confusion.tp + confusion.tn, total),
        auc: auc_rank(&scored),
    })
}

/// Score every sample with the ensemble (majority vote for the label, mean
/// probability for AUC) and report.
pub fn evaluate<T: Real>(
    ensemble: &SnapshotEnsemble<T>,
    samples: &[&LabeledSample<T>],
) -> Result<MetricsReport> {
    if samples.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let predictions: Vec<Prediction> = samples
        .iter()
        .map(|s| Prediction {
            predicted: ensemble.predict_vote(s.image.pixels()),
            label: s.label,
            score: to_f64(ensemble.mean_probability(s.image.pixels())),
        })
        .collect();
    report_from_predictions(&predictions)
}

/// Cross-validation settings: the per-fold training configuration plus the
/// model geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossValidateConfig<T> {
    pub train: RmsPropConfig<T>,
    pub snapshot_every: usize,
    pub channels: (usize, usize, usize),
    /// Vote with the last n snapshots (trimmed to odd).
    pub vote_last: usize,
}

/// Train and evaluate once per fold; training sees originals plus augmented
/// copies, evaluation only originals (augmentation_index 0). Folds run in
/// parallel with per-fold seeds; confusion counts and scores are pooled over
/// all folds (micro-aggregation) in fold order.
pub fn cross_validate<T: Real>(
    samples: &[LabeledSample<T>],
    folds: &[Fold],
    cfg: &CrossValidateConfig<T>,
) -> Result<MetricsReport> {
    let per_fold: Vec<Result<Vec<Prediction>>> = folds
        .par_iter()
        .enumerate()
        .map(|(fold_idx, fold)| {
            run_fold(samples, fold, cfg, fold_idx).map_err(|e| Error::FoldFailed {
                fold: fold_idx,
                source: Box::new(e),
            })
        })
        .collect();
    let mut pooled = Vec::new();
    for result in per_fold {
        pooled.extend(result?);
    }
    report_from_predictions(&pooled)
}

fn run_fold<T: Real>(
    samples: &[LabeledSample<T>],
    fold: &Fold,
    cfg: &CrossValidateConfig<T>,
    fold_idx: usize,
) -> Result<Vec<Prediction>> {
    let train_items: Vec<TrainItem<T>> = fold
        .train
        .iter()
        .map(|&i| TrainItem::from_sample(&samples[i]))
        .collect();
    let test_samples: Vec<&LabeledSample<T>> = fold
        .test
        .iter()
        .map(|&i| &samples[i])
        .filter(|s| s.augmentation_index == 0)
        .collect();
    if train_items.is_empty() || test_samples.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    // Independent deterministic stream per fold.
    let fold_seed = crate::dataset::derive_record_seed(cfg.train.seed, "fold", fold_idx);
    let mut model = ShallowCnn::<T>::new(cfg.channels, fold_seed);
    let train_cfg = RmsPropConfig {
        seed: fold_seed,
        ..cfg.train
    };
    let run = train(&mut model, &train_items, &train_cfg, cfg.snapshot_every)?;
    let ensemble =
        SnapshotEnsemble::with_last_n_votes(run.ensemble.snapshots().to_vec(), cfg.vote_last)?;
    Ok(test_samples
        .iter()
        .map(|s| Prediction {
            predicted: ensemble.predict_vote(s.image.pixels()),
            label: s.label,
            score: to_f64(ensemble.mean_probability(s.image.pixels())),
        })
        .collect())
}
