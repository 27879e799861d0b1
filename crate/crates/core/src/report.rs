//! Clinical-range diagnosis, subject-level aggregation and the evaluation
//! metrics (MAE, RMSE, accuracy, precision, recall, F1, sensitivity).

use serde::{Deserialize, Serialize};

use crate::analysis::ImageFeatures;
use crate::error::{Error, Result};
use crate::imaging::{BinaryMask, Point};

/// Why a feature value is absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NullReason {
    MissingScale,
    InsufficientClearCapillaries,
}

impl NullReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            NullReason::MissingScale => "MissingScale",
            NullReason::InsufficientClearCapillaries => "InsufficientClearCapillaries",
        }
    }
}

/// A value that may be null, never silently: the reason always rides along.
///
/// Serializes as `{"value": x}` or `{"value": null, "reason": "..."}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nullable<T> {
    Value(T),
    Null(NullReason),
}

impl<T> Nullable<T> {
    pub fn value(v: T) -> Self {
        Nullable::Value(v)
    }

    pub fn null(reason: NullReason) -> Self {
        Nullable::Null(reason)
    }

    pub fn as_option(&self) -> Option<&T> {
        match self {
            Nullable::Value(v) => Some(v),
            Nullable::Null(_) => None,
        }
    }

    pub fn reason(&self) -> Option<NullReason> {
        match self {
            Nullable::Value(_) => None,
            Nullable::Null(r) => Some(*r),
        }
    }
}

impl<T: Serialize> Serialize for Nullable<T> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        match self {
            Nullable::Value(v) => {
                let mut st = serializer.serialize_struct("Nullable", 1)?;
                st.serialize_field("value", v)?;
                st.end()
            }
            Nullable::Null(reason) => {
                let mut st = serializer.serialize_struct("Nullable", 2)?;
                st.serialize_field("value", &Option::<()>::None)?;
                st.serialize_field("reason", reason)?;
                st.end()
            }
        }
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for Nullable<T> {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Raw<T> {
            value: Option<T>,
            #[serde(default)]
            reason: Option<NullReason>,
        }
        let raw = Raw::<T>::deserialize(deserializer)?;
        match (raw.value, raw.reason) {
            (Some(v), _) => Ok(Nullable::Value(v)),
            (None, Some(r)) => Ok(Nullable::Null(r)),
            (None, None) => Err(serde::de::Error::custom("null value without a reason")),
        }
    }
}

/// Clinical normal ranges; boundaries are inclusive (a boundary value is
/// normal).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalRanges {
    pub crossing_portion_max: f64,
    pub tortuous_portion_max: f64,
    pub venous_um: [f64; 2],
    pub arterial_um: [f64; 2],
    pub apical_um: [f64; 2],
    pub length_um: [f64; 2],
}

impl Default for NormalRanges {
    fn default() -> Self {
        NormalRanges {
            crossing_portion_max: 0.3,
            tortuous_portion_max: 0.1,
            venous_um: [11.0, 17.0],
            arterial_um: [9.0, 13.0],
            apical_um: [12.0, 18.0],
            length_um: [150.0, 250.0],
        }
    }
}

impl NormalRanges {
    pub fn validate(&self) -> Result<()> {
        for (name, range) in [
            ("venous_um", self.venous_um),
            ("arterial_um", self.arterial_um),
            ("apical_um", self.apical_um),
            ("length_um", self.length_um),
        ] {
            if !(range[0] <= range[1]) {
                return Err(Error::InvalidParameter(format!(
                    "range {name} is empty: [{}, {}]",
                    range[0], range[1]
                )));
            }
        }
        if !(self.crossing_portion_max >= 0.0) || !(self.tortuous_portion_max >= 0.0) {
            return Err(Error::InvalidParameter(
                "portion maxima must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-feature normality flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "flag", content = "reason")]
pub enum FeatureFlag {
    Normal,
    Abnormal,
    Null(NullReason),
}

fn flag_range(value: &Nullable<f64>, lo: f64, hi: f64) -> FeatureFlag {
    match value {
        Nullable::Null(r) => FeatureFlag::Null(*r),
        Nullable::Value(v) => {
            if *v < lo || *v > hi {
                FeatureFlag::Abnormal
            } else {
                FeatureFlag::Normal
            }
        }
    }
}

/// Flags for every diagnosable feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiagnosisFlags {
    pub crossing_portion: FeatureFlag,
    pub tortuous_portion: FeatureFlag,
    pub venous_um: FeatureFlag,
    pub arterial_um: FeatureFlag,
    pub apical_um: FeatureFlag,
    pub length_um: FeatureFlag,
}

/// Flag each measured feature against its normal range. Boundary values are
/// normal; null inputs propagate their reason.
pub fn diagnose(features: &ImageFeatures, ranges: &NormalRanges) -> DiagnosisFlags {
    DiagnosisFlags {
        crossing_portion: flag_range(&features.crossing_portion, 0.0, ranges.crossing_portion_max),
        tortuous_portion: flag_range(&features.tortuous_portion, 0.0, ranges.tortuous_portion_max),
        venous_um: flag_range(&features.mean_venous_um, ranges.venous_um[0], ranges.venous_um[1]),
        arterial_um: flag_range(
            &features.mean_arterial_um,
            ranges.arterial_um[0],
            ranges.arterial_um[1],
        ),
        apical_um: flag_range(&features.mean_apical_um, ranges.apical_um[0], ranges.apical_um[1]),
        length_um: flag_range(&features.mean_length_um, ranges.length_um[0], ranges.length_um[1]),
    }
}

/// Mean absolute error and root mean square error.
pub fn regression_metrics(pred: &[f64], truth: &[f64]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "prediction and truth lengths differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("no value pairs to evaluate".into()));
    }
    let n = pred.len() as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        let d = p - t;
        abs += d.abs();
        sq += d * d;
    }
    Ok((abs / n, (sq / n).sqrt()))
}

/// MAE/RMSE with pairwise exclusion of null entries.
pub fn regression_metrics_nullable(
    pred: &[Option<f64>],
    truth: &[Option<f64>],
) -> Result<(f64, f64)> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "prediction and truth lengths differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut p = Vec::new();
    let mut t = Vec::new();
    for (a, b) in pred.iter().zip(truth) {
        if let (Some(a), Some(b)) = (a, b) {
            p.push(*a);
            t.push(*b);
        }
    }
    if p.is_empty() {
        return Err(Error::InvalidInput(
            "no non-null value pairs remain after exclusion".into(),
        ));
    }
    regression_metrics(&p, &t)
}

/// Per-class precision/recall/F1 with support.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Confusion-matrix classification metrics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    /// Sorted distinct labels; confusion rows/cols follow this order.
    pub classes: Vec<String>,
    /// confusion[truth][pred].
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
}

/// Standard confusion-matrix metrics; zero-denominator precision/recall are
/// defined as 0, and weighted averages use truth-class frequencies.
pub fn classification_metrics(pred: &[String], truth: &[String]) -> Result<ClassificationMetrics> {
    if pred.len() != truth.len() {
        return Err(Error::InvalidInput(format!(
            "prediction and truth lengths differ: {} vs {}",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("no labels to evaluate".into()));
    }
    let mut classes: Vec<String> = pred.iter().chain(truth).cloned().collect();
    classes.sort();
    classes.dedup();
    let index = |label: &String| classes.iter().position(|c| c == label).unwrap();

    let k = classes.len();
    let mut confusion = vec![vec![0usize; k]; k];
    for (p, t) in pred.iter().zip(truth) {
        confusion[index(t)][index(p)] += 1;
    }
    let total = pred.len() as f64;
    let trace: usize = (0..k).map(|i| confusion[i][i]).sum();
    let accuracy = trace as f64 / total;

    let mut per_class = Vec::with_capacity(k);
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for i in 0..k {
        let tp = confusion[i][i] as f64;
        let support: usize = confusion[i].iter().sum();
        let pred_count: f64 = (0..k).map(|t| confusion[t][i] as f64).sum();
        let precision = if pred_count > 0.0 { tp / pred_count } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let weight = support as f64 / total;
        wp += weight * precision;
        wr += weight * recall;
        wf += weight * f1;
        per_class.push(ClassMetrics {
            class: classes[i].clone(),
            precision,
            recall,
            f1,
            support,
        });
    }
    Ok(ClassificationMetrics {
        classes,
        confusion,
        accuracy,
        per_class,
        weighted_precision: wp,
        weighted_recall: wr,
        weighted_f1: wf,
    })
}

/// Detection sensitivity: greedy one-to-one matching of predictions to
/// truth points by increasing distance, within `radius`; matched truth over
/// total truth.
pub fn detection_sensitivity(pred: &[Point], truth: &[Point], radius: f64) -> Result<f64> {
    if truth.is_empty() {
        return Err(Error::InvalidInput("no truth points to evaluate".into()));
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let mut pairs = Vec::new();
    for (pi, p) in pred.iter().enumerate() {
        for (ti, t) in truth.iter().enumerate() {
            let d = p.distance_to(*t);
            if d <= radius {
                pairs.push((d, pi, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pred_used = vec![false; pred.len()];
    let mut truth_used = vec![false; truth.len()];
    let mut matched = 0usize;
    for (_, pi, ti) in pairs {
        if pred_used[pi] || truth_used[ti] {
            continue;
        }
        pred_used[pi] = true;
        truth_used[ti] = true;
        matched += 1;
    }
    Ok(matched as f64 / truth.len() as f64)
}

/// Pixel sensitivity TP/(TP+FN) of a predicted mask against truth.
pub fn pixel_sensitivity(pred: &BinaryMask, truth: &BinaryMask) -> Result<f64> {
    if pred.width() != truth.width() || pred.height() != truth.height() {
        return Err(Error::DimensionMismatch {
            expected_width: truth.width(),
            expected_height: truth.height(),
            actual_width: pred.width(),
            actual_height: pred.height(),
        });
    }
    let mut tp = 0usize;
    let mut fnn = 0usize;
    for (p, t) in pred.data().iter().zip(truth.data()) {
        if *t {
            if *p {
                tp += 1;
            } else {
                fnn += 1;
            }
        }
    }
    if tp + fnn == 0 {
        return Err(Error::InvalidInput("truth mask has no foreground".into()));
    }
    Ok(tp as f64 / (tp + fnn) as f64)
}

/// Subject-level report: per-image features, their mean, and flags.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SubjectReport {
    pub schema: String,
    pub subject: String,
    pub images: Vec<ImageFeatures>,
    pub features: ImageFeatures,
    pub flags: DiagnosisFlags,
}

pub const SUBJECT_REPORT_SCHEMA: &str = "anfc-report/1";

fn combine(values: Vec<&Nullable<f64>>) -> Nullable<f64> {
    let present: Vec<f64> = values.iter().filter_map(|v| v.as_option().copied()).collect();
    if present.is_empty() {
        let reason = values
            .iter()
            .filter_map(|v| v.reason())
            .next()
            .unwrap_or(NullReason::InsufficientClearCapillaries);
        Nullable::null(reason)
    } else {
        Nullable::value(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// Average per-image features into a subject report; subject-level values
/// are unweighted means over non-null image values, and a feature is null
/// only when every image is null for it (carrying the common reason).
pub fn build_subject_report(
    subject: &str,
    images: Vec<ImageFeatures>,
    ranges: &NormalRanges,
) -> Result<SubjectReport> {
    if images.is_empty() {
        return Err(Error::InvalidInput("subject report needs at least one image".into()));
    }
    macro_rules! field_mean {
        ($field:ident) => {
            combine(images.iter().map(|f| &f.$field).collect())
        };
    }
    let features = ImageFeatures {
        n_total: images.iter().map(|f| f.n_total).sum(),
        n_kept: images.iter().map(|f| f.n_kept).sum(),
        n_excluded: images.iter().map(|f| f.n_excluded).sum(),
        crossing_portion: field_mean!(crossing_portion),
        tortuous_portion: field_mean!(tortuous_portion),
        normal_portion: field_mean!(normal_portion),
        density_per_mm: field_mean!(density_per_mm),
        mean_apical_px: field_mean!(mean_apical_px),
        mean_arterial_px: field_mean!(mean_arterial_px),
        mean_venous_px: field_mean!(mean_venous_px),
        mean_length_px: field_mean!(mean_length_px),
        mean_apical_um: field_mean!(mean_apical_um),
        mean_arterial_um: field_mean!(mean_arterial_um),
        mean_venous_um: field_mean!(mean_venous_um),
        mean_length_um: field_mean!(mean_length_um),
    };
    let flags = diagnose(&features, ranges);
    Ok(SubjectReport {
        schema: SUBJECT_REPORT_SCHEMA.to_string(),
        subject: subject.to_string(),
        images,
        features,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features_with(venous_um: Nullable<f64>) -> ImageFeatures {
        ImageFeatures {
            n_total: 5,
            n_kept: 5,
            n_excluded: 0,
            crossing_portion: Nullable::value(0.2),
            tortuous_portion: Nullable::value(0.0),
            normal_portion: Nullable::value(0.8),
            density_per_mm: Nullable::value(9.0),
            mean_apical_px: Nullable::value(14.0),
            mean_arterial_px: Nullable::value(10.0),
            mean_venous_px: Nullable::value(13.0),
            mean_length_px: Nullable::value(200.0),
            mean_apical_um: Nullable::value(14.0),
            mean_arterial_um: Nullable::value(10.0),
            mean_venous_um: venous_um,
            mean_length_um: Nullable::value(200.0),
        }
    }

    #[test]
    fn diagnose_boundary_inclusive() {
        let ranges = NormalRanges::default();
        let f = features_with(Nullable::value(17.0));
        assert_eq!(diagnose(&f, &ranges).venous_um, FeatureFlag::Normal);
        let f = features_with(Nullable::value(17.01));
        assert_eq!(diagnose(&f, &ranges).venous_um, FeatureFlag::Abnormal);
        let f = features_with(Nullable::value(11.0));
        assert_eq!(diagnose(&f, &ranges).venous_um, FeatureFlag::Normal);
        let f = features_with(Nullable::value(10.99));
        assert_eq!(diagnose(&f, &ranges).venous_um, FeatureFlag::Abnormal);
    }

    #[test]
    fn diagnose_portion_boundary() {
        let ranges = NormalRanges::default();
        let mut f = features_with(Nullable::value(14.0));
        f.crossing_portion = Nullable::value(0.3);
        assert_eq!(diagnose(&f, &ranges).crossing_portion, FeatureFlag::Normal);
        f.crossing_portion = Nullable::value(0.35);
        assert_eq!(diagnose(&f, &ranges).crossing_portion, FeatureFlag::Abnormal);
    }

    #[test]
    fn diagnose_null_propagates_reason() {
        let ranges = NormalRanges::default();
        let f = features_with(Nullable::null(NullReason::MissingScale));
        assert_eq!(
            diagnose(&f, &ranges).venous_um,
            FeatureFlag::Null(NullReason::MissingScale)
        );
    }

    #[test]
    fn diagnose_monotone_outside() {
        let ranges = NormalRanges::default();
        for v in [17.01, 18.0, 25.0, 100.0] {
            let f = features_with(Nullable::value(v));
            assert_eq!(diagnose(&f, &ranges).venous_um, FeatureFlag::Abnormal);
        }
    }

    #[test]
    fn regression_basics() {
        assert_eq!(regression_metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (0.0, 0.0));
        let (mae, rmse) = regression_metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert!((mae - 1.0 / 3.0).abs() < 1e-12);
        assert!((rmse - 1.0 / 3.0_f64.sqrt()).abs() < 1e-12);
        assert!(regression_metrics(&[], &[]).is_err());
        assert!(regression_metrics(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn regression_nullable_pairwise() {
        let pred = vec![Some(1.0), None, Some(3.0)];
        let truth = vec![Some(1.0), Some(2.0), None];
        let (mae, _) = regression_metrics_nullable(&pred, &truth).unwrap();
        assert_eq!(mae, 0.0);
        assert!(regression_metrics_nullable(&[None], &[Some(1.0)]).is_err());
    }

    #[test]
    fn rmse_never_below_mae() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let n = rng.random_range(1..40);
            let pred: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let truth: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let (mae, rmse) = regression_metrics(&pred, &truth).unwrap();
            assert!(rmse >= mae - 1e-12);
        }
    }

    fn labels(raw: &[&str]) -> Vec<String> {
        raw.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn classification_perfect() {
        let m = classification_metrics(&labels(&["a", "b", "a"]), &labels(&["a", "b", "a"])).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert!(m.per_class.iter().all(|c| c.precision == 1.0 && c.recall == 1.0 && c.f1 == 1.0));
        assert_eq!(m.weighted_f1, 1.0);
    }

    #[test]
    fn classification_two_by_two() {
        let m = classification_metrics(
            &labels(&["A", "A", "B", "B"]),
            &labels(&["A", "B", "A", "B"]),
        )
        .unwrap();
        assert_eq!(m.accuracy, 0.5);
        for c in &m.per_class {
            assert_eq!(c.precision, 0.5);
            assert_eq!(c.recall, 0.5);
        }
    }

    #[test]
    fn classification_all_one_class_weighted_precision() {
        // 3:1 truth mix, constant prediction "x".
        let pred = labels(&["x", "x", "x", "x"]);
        let truth = labels(&["x", "x", "x", "y"]);
        let m = classification_metrics(&pred, &truth).unwrap();
        // Hand-built confusion: truth x -> pred x = 3; truth y -> pred x = 1.
        // precision(x) = 3/4, precision(y) = 0 (no predictions).
        // weighted precision = (3/4)*(3/4) + (1/4)*0 = 9/16.
        assert!((m.weighted_precision - 9.0 / 16.0).abs() < 1e-12);
        assert_eq!(m.accuracy, 0.75);
    }

    #[test]
    fn weighted_recall_equals_accuracy() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let names = ["n", "c", "t"];
        for _ in 0..30 {
            let n = rng.random_range(1..60);
            let pred: Vec<String> = (0..n).map(|_| names[rng.random_range(0..3)].to_string()).collect();
            let truth: Vec<String> = (0..n).map(|_| names[rng.random_range(0..3)].to_string()).collect();
            let m = classification_metrics(&pred, &truth).unwrap();
            assert!((m.weighted_recall - m.accuracy).abs() < 1e-12);
            let trace: usize = (0..m.classes.len()).map(|i| m.confusion[i][i]).sum();
            assert!((m.accuracy - trace as f64 / n as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn detection_sensitivity_cases() {
        let truth = vec![Point::new(10, 10), Point::new(50, 50), Point::new(90, 90)];
        assert_eq!(detection_sensitivity(&truth, &truth, 10.0).unwrap(), 1.0);
        assert_eq!(detection_sensitivity(&[], &truth, 10.0).unwrap(), 0.0);
        let pred = vec![Point::new(12, 10), Point::new(52, 48)];
        let s = detection_sensitivity(&pred, &truth, 10.0).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-12);
        assert!(detection_sensitivity(&pred, &[], 10.0).is_err());
    }

    #[test]
    fn pixel_sensitivity_cases() {
        let mut truth = BinaryMask::empty(10, 10);
        for c in 2..8 {
            truth.set(5, c, true);
        }
        assert_eq!(pixel_sensitivity(&truth, &truth).unwrap(), 1.0);
        let empty = BinaryMask::empty(10, 10);
        assert_eq!(pixel_sensitivity(&empty, &truth).unwrap(), 0.0);
        // Dilated prediction is a superset: no false negatives.
        let mut dilated = truth.clone();
        for c in 1..9 {
            dilated.set(4, c, true);
            dilated.set(5, c, true);
            dilated.set(6, c, true);
        }
        assert_eq!(pixel_sensitivity(&dilated, &truth).unwrap(), 1.0);
        assert!(pixel_sensitivity(&truth, &empty).is_err());
    }

    #[test]
    fn subject_report_single_image_passthrough() {
        let img = features_with(Nullable::value(14.0));
        let report = build_subject_report("s1", vec![img.clone()], &NormalRanges::default()).unwrap();
        assert_eq!(report.schema, "anfc-report/1");
        assert_eq!(report.features.mean_venous_um, img.mean_venous_um);
        assert_eq!(report.flags.venous_um, FeatureFlag::Normal);
    }

    #[test]
    fn subject_report_averages_and_flags() {
        let a = features_with(Nullable::value(12.0));
        let b = features_with(Nullable::value(16.0));
        let report = build_subject_report("s1", vec![a, b], &NormalRanges::default()).unwrap();
        assert_eq!(report.features.mean_venous_um, Nullable::value(14.0));
        assert_eq!(report.flags.venous_um, FeatureFlag::Normal);
    }

    #[test]
    fn subject_report_all_null_keeps_reason() {
        let a = features_with(Nullable::null(NullReason::MissingScale));
        let b = features_with(Nullable::null(NullReason::MissingScale));
        let report = build_subject_report("s1", vec![a, b], &NormalRanges::default()).unwrap();
        assert_eq!(
            report.features.mean_venous_um,
            Nullable::null(NullReason::MissingScale)
        );
        assert_eq!(
            report.flags.venous_um,
            FeatureFlag::Null(NullReason::MissingScale)
        );
    }

    #[test]
    fn nullable_serialization_shape() {
        let v: Nullable<f64> = Nullable::value(3.5);
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"value":3.5}"#);
        let n: Nullable<f64> = Nullable::null(NullReason::InsufficientClearCapillaries);
        assert_eq!(
            serde_json::to_string(&n).unwrap(),
            r#"{"value":null,"reason":"InsufficientClearCapillaries"}"#
        );
        let back: Nullable<f64> = serde_json::from_str(r#"{"value":null,"reason":"MissingScale"}"#).unwrap();
        assert_eq!(back, Nullable::null(NullReason::MissingScale));
    }
}
