//! Evaluation harness: stratified splitting, accuracy/confusion reports, and
//! the parameter sweeps (k, train fraction, epochs).
//!
//! Everything here is a deterministic function of (table, parameters, seed)
//! except the timing fields, which use the monotonic wall clock and are
//! excluded from reproducibility guarantees.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knn::{KnnError, KnnModel};
use crate::mlp::{self, round_ms, MlpError, MlpModel, TrainHyperparams, TrainingTrace};
use crate::rng::seeded;
use crate::zoning::{FeatureRow, FeatureTable};

/// Accuracy, confusion matrix (true class by predicted class), and timings
/// for one classifier evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall_accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub confusion: Vec<Vec<usize>>,
    pub n_train: usize,
    pub n_test: usize,
    pub elapsed_train: f64,
    pub elapsed_test: f64,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}

/// One sweep point: parameter value, accuracy, and seconds of work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub x: f64,
    pub accuracy: f64,
    pub seconds: f64,
}

/// Accuracy/time curve over an ascending parameter list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SweepCurve {
    pub points: Vec<SweepPoint>,
}

impl SweepCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,accuracy,seconds\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{:.3}", p.x, p.accuracy, p.seconds);
        }
        out
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("train fraction {0} must be strictly between 0 and 1")]
    BadFraction(f64),
    #[error("class {class_id} has {count} samples, stratified split needs at least 2")]
    ClassTooSmall { class_id: usize, count: usize },
    #[error("parameter list must be non-empty and strictly ascending")]
    BadParameterList,
    #[error(transparent)]
    Knn(#[from] KnnError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
}

/// Splits per class: shuffle the class's rows with a seeded generator, send
/// the first `floor(fraction * count)` (clamped to `1..=count-1`) to train
/// and the rest to test. Class proportions are therefore preserved.
pub fn stratified_split(
    table: &FeatureTable,
    train_fraction: f64,
    seed: u64,
) -> Result<(FeatureTable, FeatureTable), EvalError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::BadFraction(train_fraction));
    }
    let counts = table.class_counts();
    for (class_id, &count) in counts.iter().enumerate() {
        if count < 2 {
            return Err(EvalError::ClassTooSmall { class_id, count });
        }
    }

    let mut rng = seeded(seed);
    let mut train_rows: Vec<FeatureRow> = Vec::new();
    let mut test_rows: Vec<FeatureRow> = Vec::new();
    for class in &table.classes {
        let mut indices: Vec<usize> = table
            .rows
            .iter()
            .enumerate()
            .filter(|(_, row)| row.class_id == class.id)
            .map(|(i, _)| i)
            .collect();
        indices.shuffle(&mut rng);
        let count = indices.len();
        let n_train = ((train_fraction * count as f64).floor() as usize).clamp(1, count - 1);
        for &i in &indices[..n_train] {
            train_rows.push(table.rows[i].clone());
        }
        for &i in &indices[n_train..] {
            test_rows.push(table.rows[i].clone());
        }
    }

    let make = |rows: Vec<FeatureRow>| FeatureTable {
        grid: table.grid,
        classes: table.classes.clone(),
        rows,
    };
    Ok((make(train_rows), make(test_rows)))
}

/// Builds a report from parallel true/predicted class lists.
pub fn report_from_predictions(
    n_classes: usize,
    true_ids: &[usize],
    predicted_ids: &[usize],
    n_train: usize,
    elapsed_train: f64,
    elapsed_test: f64,
) -> EvalReport {
    assert_eq!(true_ids.len(), predicted_ids.len());
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in true_ids.iter().zip(predicted_ids) {
        confusion[t][p] += 1;
    }
    let n_test = true_ids.len();
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let per_class_accuracy = confusion
        .iter()
        .enumerate()
        .map(|(c, row)| {
            let total: usize = row.iter().sum();
            if total == 0 {
                0.0
            } else {
                confusion[c][c] as f64 / total as f64
            }
        })
        .collect();
    EvalReport {
        overall_accuracy: if n_test == 0 {
            0.0
        } else {
            correct as f64 / n_test as f64
        },
        per_class_accuracy,
        confusion,
        n_train,
        n_test,
        elapsed_train,
        elapsed_test,
    }
}

fn evaluate_knn_on_split(
    train: FeatureTable,
    test: &FeatureTable,
    k: usize,
) -> Result<EvalReport, EvalError> {
    let n_classes = train.classes.len();
    let n_train = train.rows.len();
    let fit_started = Instant::now();
    let model = KnnModel::fit(train)?;
    let elapsed_train = round_ms(fit_started.elapsed().as_secs_f64());

    let predict_started = Instant::now();
    let predicted = model.predict_batch(test, k)?;
    let elapsed_test = round_ms(predict_started.elapsed().as_secs_f64());

    let true_ids: Vec<usize> = test.rows.iter().map(|r| r.class_id).collect();
    Ok(report_from_predictions(
        n_classes,
        &true_ids,
        &predicted,
        n_train,
        elapsed_train,
        elapsed_test,
    ))
}

/// Split, fit, batch-predict, report.
pub fn evaluate_knn(
    table: &FeatureTable,
    k: usize,
    train_fraction: f64,
    seed: u64,
) -> Result<EvalReport, EvalError> {
    let (train, test) = stratified_split(table, train_fraction, seed)?;
    evaluate_knn_on_split(train, &test, k)
}

/// Split, init (weights seeded by `seed`), train, predict the test set.
pub fn evaluate_mlp(
    table: &FeatureTable,
    hp: &TrainHyperparams,
    train_fraction: f64,
    seed: u64,
) -> Result<(EvalReport, TrainingTrace, MlpModel), EvalError> {
    evaluate_mlp_with(table, hp, train_fraction, seed, |_, _, _| {})
}

/// [`evaluate_mlp`] with a per-epoch hook (epoch, model, record), useful for
/// progress reporting.
pub fn evaluate_mlp_with<F>(
    table: &FeatureTable,
    hp: &TrainHyperparams,
    train_fraction: f64,
    seed: u64,
    on_epoch: F,
) -> Result<(EvalReport, TrainingTrace, MlpModel), EvalError>
where
    F: FnMut(usize, &MlpModel, &mlp::EpochRecord),
{
    let (train, test) = stratified_split(table, train_fraction, seed)?;
    let n_classes = table.classes.len();
    let init = MlpModel::init(table.n_features(), hp.h1, hp.h2, n_classes, seed);

    let train_started = Instant::now();
    let (model, trace) = mlp::train_with(&init, &train, hp, on_epoch)?;
    let elapsed_train = round_ms(train_started.elapsed().as_secs_f64());

    let predict_started = Instant::now();
    let predicted: Result<Vec<usize>, MlpError> = test
        .rows
        .iter()
        .map(|r| model.predict(r.features.values()))
        .collect();
    let predicted = predicted?;
    let elapsed_test = round_ms(predict_started.elapsed().as_secs_f64());

    let true_ids: Vec<usize> = test.rows.iter().map(|r| r.class_id).collect();
    let report = report_from_predictions(
        n_classes,
        &true_ids,
        &predicted,
        train.rows.len(),
        elapsed_train,
        elapsed_test,
    );
    Ok((report, trace, model))
}

fn check_ascending<T: PartialOrd>(values: &[T]) -> Result<(), EvalError> {
    if values.is_empty() || values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::BadParameterList);
    }
    Ok(())
}

/// One KNN evaluation per `k`, all on the same split so the curve isolates
/// the effect of `k`.
pub fn sweep_k(
    table: &FeatureTable,
    ks: &[usize],
    train_fraction: f64,
    seed: u64,
) -> Result<SweepCurve, EvalError> {
    check_ascending(ks)?;
    let (train, test) = stratified_split(table, train_fraction, seed)?;
    let mut curve = SweepCurve::default();
    for &k in ks {
        let report = evaluate_knn_on_split(train.clone(), &test, k)?;
        curve.points.push(SweepPoint {
            x: k as f64,
            accuracy: report.overall_accuracy,
            seconds: report.elapsed_train + report.elapsed_test,
        });
    }
    Ok(curve)
}

/// The canonical train fractions evaluated by [`sweep_split`].
pub const DEFAULT_SPLIT_FRACTIONS: [f64; 10] =
    [0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80];

/// Evaluates KNN (k = 1) and the MLP at each train fraction, resplitting with
/// the same seed each time. KNN points record fit+predict seconds; MLP
/// points record training seconds.
pub fn sweep_split(
    table: &FeatureTable,
    fractions: &[f64],
    hp: &TrainHyperparams,
    seed: u64,
) -> Result<(SweepCurve, SweepCurve), EvalError> {
    check_ascending(fractions)?;
    let mut knn_curve = SweepCurve::default();
    let mut mlp_curve = SweepCurve::default();
    for &fraction in fractions {
        let knn_report = evaluate_knn(table, 1, fraction, seed)?;
        knn_curve.points.push(SweepPoint {
            x: fraction,
            accuracy: knn_report.overall_accuracy,
            seconds: knn_report.elapsed_train + knn_report.elapsed_test,
        });
        let (mlp_report, _, _) = evaluate_mlp(table, hp, fraction, seed)?;
        mlp_curve.points.push(SweepPoint {
            x: fraction,
            accuracy: mlp_report.overall_accuracy,
            seconds: mlp_report.elapsed_train,
        });
    }
    Ok((knn_curve, mlp_curve))
}

/// Trains once up to the largest listed epoch, snapshotting test accuracy at
/// each listed epoch along the same trajectory (no retraining; the
/// deterministic shuffle makes a snapshot identical to a shorter run).
/// Seconds are cumulative training time at the snapshot.
pub fn sweep_epochs(
    table: &FeatureTable,
    epoch_list: &[usize],
    hp: &TrainHyperparams,
    train_fraction: f64,
    seed: u64,
) -> Result<SweepCurve, EvalError> {
    check_ascending(epoch_list)?;
    if epoch_list[0] == 0 {
        return Err(EvalError::BadParameterList);
    }
    let (train, test) = stratified_split(table, train_fraction, seed)?;
    let n_classes = table.classes.len();
    let init = MlpModel::init(table.n_features(), hp.h1, hp.h2, n_classes, seed);
    let run = TrainHyperparams {
        epochs: *epoch_list.last().unwrap(),
        ..hp.clone()
    };

    let mut curve = SweepCurve::default();
    let mut error: Option<MlpError> = None;
    let started = Instant::now();
    let result = mlp::train_with(&init, &train, &run, |epoch, model, _| {
        if error.is_some() || !epoch_list.contains(&epoch) {
            return;
        }
        let mut correct = 0usize;
        for row in &test.rows {
            match model.predict(row.features.values()) {
                Ok(predicted) => {
                    if predicted == row.class_id {
                        correct += 1;
                    }
                }
                Err(e) => {
                    error = Some(e);
                    return;
                }
            }
        }
        curve.points.push(SweepPoint {
            x: epoch as f64,
            accuracy: correct as f64 / test.rows.len() as f64,
            seconds: round_ms(started.elapsed().as_secs_f64()),
        });
    });
    result?;
    if let Some(e) = error {
        return Err(e.into());
    }
    Ok(curve)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ClassInfo;
    use crate::zoning::{FeatureVector, GridSpec};
    use std::collections::BTreeSet;

    /// Table with `per_class` rows per class; features cluster tightly around
    /// a per-class corner so classifiers can separate them.
    fn clustered_table(n_classes: usize, per_class: usize, spread: f64) -> FeatureTable {
        let mut rows = Vec::new();
        for class_id in 0..n_classes {
            for s in 0..per_class {
                let values: Vec<f64> = (0..4)
                    .map(|d| {
                        let base = if (class_id >> d) & 1 == 1 { 0.8 } else { 0.2 };
                        let wiggle =
                            crate::rng::splitmix64((class_id * 1000 + s * 7 + d) as u64) % 100;
                        base + spread * (wiggle as f64 / 100.0 - 0.5)
                    })
                    .collect();
                rows.push(FeatureRow {
                    class_id,
                    sample_id: format!("c{class_id}s{s}"),
                    features: FeatureVector::new(values).unwrap(),
                });
            }
        }
        FeatureTable {
            grid: GridSpec::new(1, 4),
            classes: (0..n_classes)
                .map(|id| ClassInfo {
                    id,
                    name: format!("class_{id}"),
                })
                .collect(),
            rows,
        }
    }

    #[test]
    fn split_arithmetic_matches_floor_rule() {
        let table = clustered_table(3, 102, 0.1);
        let (train, test) = stratified_split(&table, 2.0 / 3.0, 1).unwrap();
        assert_eq!(train.class_counts(), vec![68, 68, 68]);
        assert_eq!(test.class_counts(), vec![34, 34, 34]);

        let table = clustered_table(2, 10, 0.1);
        let (train, test) = stratified_split(&table, 0.8, 1).unwrap();
        assert_eq!(train.class_counts(), vec![8, 8]);
        assert_eq!(test.class_counts(), vec![2, 2]);
    }

    #[test]
    fn split_is_a_partition() {
        let table = clustered_table(4, 13, 0.2);
        let (train, test) = stratified_split(&table, 0.61, 7).unwrap();
        let ids = |t: &FeatureTable| -> BTreeSet<(usize, String)> {
            t.rows
                .iter()
                .map(|r| (r.class_id, r.sample_id.clone()))
                .collect()
        };
        let train_ids = ids(&train);
        let test_ids = ids(&test);
        assert!(train_ids.is_disjoint(&test_ids));
        let mut all = train_ids;
        all.extend(test_ids);
        assert_eq!(all, ids(&table));
        assert_eq!(train.rows.len() + test.rows.len(), table.rows.len());
    }

    #[test]
    fn split_determinism_and_seed_sensitivity() {
        let table = clustered_table(3, 20, 0.2);
        let a = stratified_split(&table, 0.5, 42).unwrap();
        let b = stratified_split(&table, 0.5, 42).unwrap();
        assert_eq!(a, b);
        let c = stratified_split(&table, 0.5, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_degenerate_inputs() {
        let table = clustered_table(2, 10, 0.1);
        assert!(matches!(
            stratified_split(&table, 0.0, 1),
            Err(EvalError::BadFraction(_))
        ));
        assert!(matches!(
            stratified_split(&table, 1.0, 1),
            Err(EvalError::BadFraction(_))
        ));

        let mut tiny = clustered_table(2, 2, 0.1);
        tiny.rows.retain(|r| !(r.class_id == 1 && r.sample_id == "c1s1"));
        assert!(matches!(
            stratified_split(&tiny, 0.5, 1),
            Err(EvalError::ClassTooSmall { class_id: 1, count: 1 })
        ));
    }

    #[test]
    fn report_bookkeeping_against_oracle_classifiers() {
        let true_ids = [0usize, 0, 1, 1, 2, 2];
        let right = report_from_predictions(3, &true_ids, &true_ids, 10, 0.0, 0.0);
        assert_eq!(right.overall_accuracy, 1.0);
        assert_eq!(right.per_class_accuracy, vec![1.0, 1.0, 1.0]);
        let diag: usize = (0..3).map(|c| right.confusion[c][c]).sum();
        assert_eq!(diag, 6);

        let wrong: Vec<usize> = true_ids.iter().map(|&t| (t + 1) % 3).collect();
        let report = report_from_predictions(3, &true_ids, &wrong, 10, 0.0, 0.0);
        assert_eq!(report.overall_accuracy, 0.0);
        assert_eq!(report.per_class_accuracy, vec![0.0, 0.0, 0.0]);

        // Row sums equal per-class test counts.
        for (c, row) in report.confusion.iter().enumerate() {
            let row_sum: usize = row.iter().sum();
            assert_eq!(row_sum, true_ids.iter().filter(|&&t| t == c).count());
        }
        let total: usize = report.confusion.iter().flatten().sum();
        assert_eq!(total, report.n_test);
    }

    #[test]
    fn knn_self_test_is_perfect() {
        let table = clustered_table(3, 8, 0.15);
        let model = KnnModel::fit(table.clone()).unwrap();
        let predicted = model.predict_batch(&table, 1).unwrap();
        let true_ids: Vec<usize> = table.rows.iter().map(|r| r.class_id).collect();
        let report =
            report_from_predictions(3, &true_ids, &predicted, table.rows.len(), 0.0, 0.0);
        assert_eq!(report.overall_accuracy, 1.0);
    }

    #[test]
    fn evaluate_knn_matches_brute_force_on_toy_clusters() {
        let table = clustered_table(3, 8, 0.3);
        let report = evaluate_knn(&table, 3, 0.5, 11).unwrap();

        // Independent route: same split, per-query brute-force distances.
        let (train, test) = stratified_split(&table, 0.5, 11).unwrap();
        let mut correct = 0;
        for q in &test.rows {
            let mut best: Vec<(f64, usize, usize)> = train
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    let d: f64 = r
                        .features
                        .values()
                        .iter()
                        .zip(q.features.values())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum();
                    (d, i, r.class_id)
                })
                .collect();
            best.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
            let mut votes = std::collections::BTreeMap::new();
            for &(d, _, c) in &best[..3] {
                let e = votes.entry(c).or_insert((0usize, 0.0f64));
                e.0 += 1;
                e.1 += d.sqrt();
            }
            let (&winner, _) = votes
                .iter()
                .max_by(|(ca, (va, sa)), (cb, (vb, sb))| {
                    va.cmp(vb)
                        .then(sb.partial_cmp(sa).unwrap())
                        .then(cb.cmp(ca))
                })
                .unwrap();
            if winner == q.class_id {
                correct += 1;
            }
        }
        let expected = correct as f64 / test.rows.len() as f64;
        assert_eq!(report.overall_accuracy, expected);
        assert_eq!(report.n_test, test.rows.len());
    }

    #[test]
    fn evaluate_mlp_learns_separable_two_class_toy() {
        let table = clustered_table(2, 12, 0.2);
        let hp = TrainHyperparams {
            epochs: 300,
            shuffle_seed: 9,
            h1: 8,
            h2: 8,
            learning_rate: 1.0,
        };
        let (report, trace, model) = evaluate_mlp(&table, &hp, 0.5, 3).unwrap();
        assert_eq!(report.overall_accuracy, 1.0);
        assert_eq!(trace.records.len(), 300);
        assert_eq!(model.n_outputs(), 2);
    }

    #[test]
    fn evaluate_mlp_single_epoch_trace() {
        let table = clustered_table(2, 4, 0.1);
        let hp = TrainHyperparams {
            epochs: 1,
            ..TrainHyperparams::default()
        };
        let (_, trace, _) = evaluate_mlp(&table, &hp, 0.5, 1).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.records[0].epoch, 1);
    }

    #[test]
    fn sweep_k_singleton_equals_direct_evaluation() {
        let table = clustered_table(3, 10, 0.25);
        let curve = sweep_k(&table, &[1], 0.6, 5).unwrap();
        let report = evaluate_knn(&table, 1, 0.6, 5).unwrap();
        assert_eq!(curve.points.len(), 1);
        assert_eq!(curve.points[0].x, 1.0);
        assert_eq!(curve.points[0].accuracy, report.overall_accuracy);
    }

    #[test]
    fn sweep_k_shares_one_split() {
        let table = clustered_table(3, 12, 0.3);
        let curve = sweep_k(&table, &[1, 3, 5], 0.5, 2).unwrap();
        assert_eq!(curve.points.len(), 3);
        // Same split means k=1 here equals the direct evaluation with the
        // same seed, and x values echo the ks.
        let xs: Vec<f64> = curve.points.iter().map(|p| p.x).collect();
        assert_eq!(xs, vec![1.0, 3.0, 5.0]);
        assert!(matches!(
            sweep_k(&table, &[3, 1], 0.5, 2),
            Err(EvalError::BadParameterList)
        ));
        assert!(matches!(
            sweep_k(&table, &[], 0.5, 2),
            Err(EvalError::BadParameterList)
        ));
        let hp = TrainHyperparams { epochs: 2, h1: 2, h2: 2, ..TrainHyperparams::default() };
        assert!(matches!(
            sweep_epochs(&table, &[0, 2], &hp, 0.5, 2),
            Err(EvalError::BadParameterList)
        ));
    }

    #[test]
    fn sweep_split_produces_paired_curves() {
        let table = clustered_table(2, 12, 0.2);
        let hp = TrainHyperparams {
            epochs: 5,
            h1: 4,
            h2: 4,
            ..TrainHyperparams::default()
        };
        let (knn_curve, mlp_curve) = sweep_split(&table, &[0.5], &hp, 4).unwrap();
        assert_eq!(knn_curve.points.len(), 1);
        assert_eq!(mlp_curve.points.len(), 1);
        let direct = evaluate_knn(&table, 1, 0.5, 4).unwrap();
        assert_eq!(knn_curve.points[0].accuracy, direct.overall_accuracy);
    }

    #[test]
    fn epoch_sweep_snapshot_equals_shorter_run() {
        let table = clustered_table(2, 10, 0.25);
        let hp = TrainHyperparams {
            epochs: 999, // superseded by the sweep list
            shuffle_seed: 17,
            h1: 6,
            h2: 6,
            ..TrainHyperparams::default()
        };
        let curve = sweep_epochs(&table, &[3, 8], &hp, 0.5, 6).unwrap();
        assert_eq!(curve.points.len(), 2);

        let short = TrainHyperparams { epochs: 3, ..hp.clone() };
        let (report, _, _) = evaluate_mlp(&table, &short, 0.5, 6).unwrap();
        assert_eq!(curve.points[0].x, 3.0);
        assert_eq!(curve.points[0].accuracy, report.overall_accuracy);

        let long = TrainHyperparams { epochs: 8, ..hp.clone() };
        let (report8, _, _) = evaluate_mlp(&table, &long, 0.5, 6).unwrap();
        assert_eq!(curve.points[1].accuracy, report8.overall_accuracy);
    }

    #[test]
    fn curve_csv_format() {
        let curve = SweepCurve {
            points: vec![
                SweepPoint { x: 1.0, accuracy: 0.5, seconds: 0.25 },
                SweepPoint { x: 0.35, accuracy: 0.975, seconds: 1.0 },
            ],
        };
        assert_eq!(curve.to_csv(), "x,accuracy,seconds\n1,0.5,0.250\n0.35,0.975,1.000\n");
    }
}
