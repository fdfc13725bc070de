//! Stratified cross-validation and the metrics that summarize it.
//!
//! Every fold retrains the whole pipeline (augmentation, transform, ridge
//! head) from a fold-derived seed on the training split only; each sample
//! is scored exactly once, by the one model that never saw it. Pooled
//! metrics (confusion, AUC) therefore describe genuinely held-out
//! predictions.
//!
//! AUC is computed two independent ways, by the tie-corrected rank formula
//! ([`auc_rank`]) and by a threshold sweep with trapezoids
//! ([`auc_trapezoid`]); the tests hold them to each other at 1e-12.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::pipeline::{classify, train_model, TrainConfig};
use crate::seed;
use crate::signal::LabeledDataset;
use crate::{Error, Result, NUM_CLASSES};

/// Which samples each fold holds out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    /// Test indices per fold; together a partition of `0..n`.
    pub folds: Vec<Vec<usize>>,
    pub n: usize,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn test_indices(&self, fold: usize) -> &[usize] {
        &self.folds[fold]
    }

    /// Complement of the fold's test set, ascending.
    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        let mut in_test = vec![false; self.n];
        for &i in &self.folds[fold] {
            in_test[i] = true;
        }
        (0..self.n).filter(|&i| !in_test[i]).collect()
    }
}

/// Split indices into `k` stratified folds.
///
/// Indices are shuffled within each class (seeded), then dealt round-robin
/// onto folds with a pointer that keeps rolling across classes. The rolling
/// pointer balances fold sizes to within one sample overall, not just per
/// class: 648 samples over 10 folds gives sizes of 64 and 65 only.
pub fn stratified_kfold(labels: &[i32], k: usize, seed: u64) -> Result<FoldPlan> {
    let n = labels.len();
    if k < 2 {
        return Err(Error::InvalidConfig(format!("need k >= 2 folds, got {k}")));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!(
            "cannot split {n} samples into {k} folds"
        )));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); NUM_CLASSES];
    for (i, &l) in labels.iter().enumerate() {
        if l < 0 || l as usize >= NUM_CLASSES {
            return Err(Error::InvalidData(format!("label {l} out of range")));
        }
        by_class[l as usize].push(i);
    }
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut pointer = 0usize;
    for (c, class_indices) in by_class.iter_mut().enumerate() {
        let mut rng = seed::rng_for(seed, 4, c as u64);
        class_indices.shuffle(&mut rng);
        for &i in class_indices.iter() {
            folds[pointer].push(i);
            pointer = (pointer + 1) % k;
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldPlan { folds, n })
}

/// One held-out prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    /// Index into the evaluated dataset.
    pub index: usize,
    pub fold: usize,
    pub true_label: i32,
    pub pred_label: i32,
    pub probs: Vec<f64>,
}

/// Everything a cross-validation run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub fold_sizes: Vec<usize>,
    pub fold_accuracy: Vec<f64>,
    pub fold_macro_f1: Vec<f64>,
    pub mean_accuracy: f64,
    /// Population standard deviation across folds.
    pub std_accuracy: f64,
    pub mean_macro_f1: f64,
    pub std_macro_f1: f64,
    pub pooled_accuracy: f64,
    pub pooled_macro_f1: f64,
    /// Rows = true class, columns = predicted class, summed over folds.
    pub confusion: Vec<Vec<u64>>,
    /// One-vs-rest AUC per class over the pooled held-out predictions;
    /// `None` when a class has no positives or no negatives.
    pub per_class_auc: Vec<Option<f64>>,
    /// Mean of the defined per-class AUCs.
    pub macro_auc: f64,
    pub per_sample: Vec<SampleOutcome>,
    pub class_names: Option<Vec<String>>,
    pub elapsed_s: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn pop_std(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

/// Accuracy from a confusion matrix.
pub fn accuracy_from_confusion(confusion: &[Vec<u64>]) -> f64 {
    let total: u64 = confusion.iter().flatten().sum();
    let hits: u64 = confusion.iter().enumerate().map(|(i, row)| row[i]).sum();
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Macro F1 over all classes; a class with no support and no
/// predictions contributes 0, not NaN.
pub fn macro_f1_from_confusion(confusion: &[Vec<u64>]) -> f64 {
    let k = confusion.len();
    let mut sum = 0.0;
    for c in 0..k {
        let tp = confusion[c][c] as f64;
        let fn_: f64 = (0..k)
            .filter(|&j| j != c)
            .map(|j| confusion[c][j] as f64)
            .sum();
        let fp: f64 = (0..k)
            .filter(|&i| i != c)
            .map(|i| confusion[i][c] as f64)
            .sum();
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        sum += f1;
    }
    sum / k as f64
}

/// AUC by the tie-corrected rank formula (Mann-Whitney U).
///
/// Returns `None` unless both positives and negatives are present.
pub fn auc_rank(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let n = scores.len();
    assert_eq!(n, truth.len());
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // Average ranks over tie groups, 1-based.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if truth[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// ROC curve points `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per
/// distinct score, ties collapsed.
pub fn roc_points(scores: &[f64], truth: &[bool]) -> Vec<(f64, f64)> {
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
    let mut pts = vec![(0.0, 0.0)];
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if truth[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        pts.push((fp as f64 / n_neg.max(1) as f64, tp as f64 / n_pos.max(1) as f64));
    }
    pts
}

/// AUC by explicit threshold sweep and trapezoidal integration. A second,
/// structurally different computation used to cross-check [`auc_rank`].
pub fn auc_trapezoid(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let pts = roc_points(scores, truth);
    let mut area = 0.0;
    for pair in pts.windows(2) {
        let (x0, y0) = pair[0];
        let (x1, y1) = pair[1];
        area += (x1 - x0) * (y0 + y1) / 2.0;
    }
    Some(area)
}

/// Per-class one-vs-rest AUC plus the macro average over defined classes.
pub fn roc_auc_ovr(outcomes: &[SampleOutcome]) -> (Vec<Option<f64>>, f64) {
    let mut per_class = Vec::with_capacity(NUM_CLASSES);
    for c in 0..NUM_CLASSES {
        let scores: Vec<f64> = outcomes.iter().map(|o| o.probs[c]).collect();
        let truth: Vec<bool> = outcomes.iter().map(|o| o.true_label as usize == c).collect();
        per_class.push(auc_rank(&scores, &truth));
    }
    let defined: Vec<f64> = per_class.iter().flatten().copied().collect();
    let macro_auc = if defined.is_empty() {
        f64::NAN
    } else {
        mean(&defined)
    };
    (per_class, macro_auc)
}

/// The training configuration a fold actually uses: transform and
/// augmentation seeds re-derived from the fold number so folds are
/// independent but reproducible.
pub fn fold_train_config(base: &TrainConfig, fold: usize) -> TrainConfig {
    let mut cfg = base.clone();
    cfg.seed = seed::derive(base.seed, 2, fold as u64);
    if let Some(aug) = &mut cfg.augment {
        aug.seed = seed::derive(aug.seed, 3, fold as u64);
    }
    cfg
}

/// Run stratified k-fold cross-validation of the full pipeline.
pub fn cross_validate(
    ds: &LabeledDataset,
    k: usize,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<EvalReport> {
    let started = Instant::now();
    let plan = stratified_kfold(&ds.labels, k, seed)?;

    struct FoldOut {
        outcomes: Vec<SampleOutcome>,
        accuracy: f64,
        macro_f1: f64,
    }

    let fold_results: Result<Vec<FoldOut>> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train_idx = plan.train_indices(f);
            let test_idx = plan.test_indices(f);
            let train_ds = ds.subset(&train_idx);
            let model = train_model(&train_ds, &fold_train_config(cfg, f))?;
            let mut confusion = vec![vec![0u64; NUM_CLASSES]; NUM_CLASSES];
            let mut outcomes = Vec::with_capacity(test_idx.len());
            for &i in test_idx {
                let pred = classify(&model, &ds.windows[i])?;
                confusion[ds.labels[i] as usize][pred.label as usize] += 1;
                outcomes.push(SampleOutcome {
                    index: i,
                    fold: f,
                    true_label: ds.labels[i],
                    pred_label: pred.label,
                    probs: pred.probs,
                });
            }
            Ok(FoldOut {
                accuracy: accuracy_from_confusion(&confusion),
                macro_f1: macro_f1_from_confusion(&confusion),
                outcomes,
            })
        })
        .collect();
    let fold_results = fold_results?;

    let fold_sizes: Vec<usize> = plan.folds.iter().map(|f| f.len()).collect();
    let fold_accuracy: Vec<f64> = fold_results.iter().map(|r| r.accuracy).collect();
    let fold_macro_f1: Vec<f64> = fold_results.iter().map(|r| r.macro_f1).collect();

    let mut per_sample: Vec<SampleOutcome> =
        fold_results.into_iter().flat_map(|r| r.outcomes).collect();
    per_sample.sort_by_key(|o| o.index);

    let mut confusion = vec![vec![0u64; NUM_CLASSES]; NUM_CLASSES];
    for o in &per_sample {
        confusion[o.true_label as usize][o.pred_label as usize] += 1;
    }
    let (per_class_auc, macro_auc) = roc_auc_ovr(&per_sample);

    Ok(EvalReport {
        k,
        seed,
        n_samples: ds.len(),
        fold_sizes,
        mean_accuracy: mean(&fold_accuracy),
        std_accuracy: pop_std(&fold_accuracy),
        mean_macro_f1: mean(&fold_macro_f1),
        std_macro_f1: pop_std(&fold_macro_f1),
        pooled_accuracy: accuracy_from_confusion(&confusion),
        pooled_macro_f1: macro_f1_from_confusion(&confusion),
        fold_accuracy,
        fold_macro_f1,
        confusion,
        per_class_auc,
        macro_auc,
        per_sample,
        class_names: ds.class_names.clone(),
        elapsed_s: started.elapsed().as_secs_f64(),
    })
}

/// Pretty-printed JSON report.
pub fn write_json<P: AsRef<Path>>(report: &EvalReport, path: P) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), report)
        .map_err(|e| Error::Runtime(format!("write report: {e}")))?;
    Ok(())
}

/// Per-fold CSV with mean/std/pooled footer rows.
pub fn write_csv<P: AsRef<Path>>(report: &EvalReport, path: P) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "fold,n_test,accuracy,macro_f1")?;
    for f in 0..report.k {
        writeln!(
            w,
            "{},{},{:.6},{:.6}",
            f, report.fold_sizes[f], report.fold_accuracy[f], report.fold_macro_f1[f]
        )?;
    }
    writeln!(
        w,
        "mean,,{:.6},{:.6}",
        report.mean_accuracy, report.mean_macro_f1
    )?;
    writeln!(w, "std,,{:.6},{:.6}", report.std_accuracy, report.std_macro_f1)?;
    writeln!(
        w,
        "pooled,{},{:.6},{:.6}",
        report.n_samples, report.pooled_accuracy, report.pooled_macro_f1
    )?;
    Ok(())
}

const SVG_PALETTE: [&str; NUM_CLASSES] = [
    "#4477aa", "#ee6677", "#228833", "#ccbb44", "#66ccee", "#aa3377", "#bbbbbb",
];

/// One-vs-rest ROC curves over the pooled held-out predictions, as a
/// standalone SVG.
pub fn write_roc_svg<P: AsRef<Path>>(report: &EvalReport, path: P) -> Result<()> {
    const W: f64 = 640.0;
    const H: f64 = 520.0;
    const ML: f64 = 60.0; // left margin
    const MT: f64 = 30.0;
    const PW: f64 = 420.0; // plot width
    const PH: f64 = 420.0;

    let sx = |fpr: f64| ML + fpr * PW;
    let sy = |tpr: f64| MT + (1.0 - tpr) * PH;

    let mut s = String::new();
    s.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" \
         viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    s.push_str(&format!(
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{PW}\" height=\"{PH}\" fill=\"white\" \
         stroke=\"#333\"/>\n"
    ));
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{:.2}</text>\n",
            sx(t),
            MT + PH + 18.0,
            t
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.2}</text>\n",
            ML - 8.0,
            sy(t) + 4.0,
            t
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">false positive rate</text>\n",
        ML + PW / 2.0,
        MT + PH + 40.0
    ));
    s.push_str(&format!(
        "<text x=\"16\" y=\"{:.1}\" transform=\"rotate(-90 16 {:.1})\" \
         text-anchor=\"middle\">true positive rate</text>\n",
        MT + PH / 2.0,
        MT + PH / 2.0
    ));
    s.push_str(&format!(
        "<line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"#999\" \
         stroke-dasharray=\"4 4\"/>\n",
        sx(0.0),
        sy(0.0),
        sx(1.0),
        sy(1.0)
    ));

    for c in 0..NUM_CLASSES {
        let scores: Vec<f64> = report.per_sample.iter().map(|o| o.probs[c]).collect();
        let truth: Vec<bool> = report
            .per_sample
            .iter()
            .map(|o| o.true_label as usize == c)
            .collect();
        if !truth.iter().any(|&t| t) || truth.iter().all(|&t| t) {
            continue;
        }
        let pts = roc_points(&scores, &truth);
        let path_pts: Vec<String> = pts
            .iter()
            .map(|&(fpr, tpr)| format!("{:.2},{:.2}", sx(fpr), sy(tpr)))
            .collect();
        s.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            SVG_PALETTE[c],
            path_pts.join(" ")
        ));
        let name = report
            .class_names
            .as_ref()
            .and_then(|n| n.get(c).cloned())
            .unwrap_or_else(|| format!("class {c}"));
        let auc_txt = report.per_class_auc[c]
            .map(|a| format!("{a:.4}"))
            .unwrap_or_else(|| "n/a".into());
        let ly = MT + 14.0 + c as f64 * 18.0;
        s.push_str(&format!(
            "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"12\" height=\"12\" fill=\"{}\"/>\n",
            ML + PW + 16.0,
            ly - 10.0,
            SVG_PALETTE[c]
        ));
        s.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\">{} ({})</text>\n",
            ML + PW + 34.0,
            ly,
            name,
            auc_txt
        ));
    }
    s.push_str(&format!(
        "<text x=\"{:.1}\" y=\"18\" text-anchor=\"middle\">one-vs-rest ROC, pooled over {} \
         folds (macro AUC {:.4})</text>\n",
        ML + PW / 2.0,
        report.k,
        report.macro_auc
    ));
    s.push_str("</svg>\n");
    std::fs::write(path, s)?;
    Ok(())
}
