//! End-to-end pipelines, stratified 3-fold assignment, cross-validation
//! scoring, and the four-transform comparison.
//!
//! A pipeline maps one grayscale image to one raw feature vector. The
//! evaluator fits the eigenspace and the classifier on training folds only,
//! so nothing about a test image can reach the trained model.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::classifier::{self, MlpError, MlpModel};
use crate::config::{ConfigError, PipelineConfig};
use crate::eigenspace::{self, EigenError, Eigenspace, FeatureVector};
use crate::imaging::{self, DatasetManifest, GrayImage, ImageError, ManifestEntry};
use crate::linefeat::{self, LineFeatError, MaskBank};
use crate::polar::{self, PolarError, PolarImage};
use crate::subseed;

const FOLD_STREAM: u64 = 11;
const MLP_STREAM: u64 = 23;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Polar(#[from] PolarError),
    #[error(transparent)]
    LineFeat(#[from] LineFeatError),
    #[error(transparent)]
    Eigen(#[from] EigenError),
    #[error(transparent)]
    Mlp(#[from] MlpError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("fold sizes sum to {got}, manifest has {expected} entries")]
    SizesMismatch { expected: usize, got: usize },
    #[error("subject {subject} has {count} images; stratified folds need at least 3")]
    StratificationImpossible { subject: usize, count: usize },
    #[error("manifest has no fold assignments; assign folds first")]
    MissingFolds,
    #[error("subject {subject} has no training image")]
    EmptyClassInTraining { subject: usize },
    #[error("this pipeline needs polar.fixed_side set to a concrete side")]
    FixedSideRequired,
}

/// The four image-to-feature preprocessings compared in the evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TransformVariant {
    Raw,
    LineSkeletal,
    Polar,
    PolarLineSkeletal,
}

impl TransformVariant {
    pub const ALL: [TransformVariant; 4] = [
        TransformVariant::Raw,
        TransformVariant::LineSkeletal,
        TransformVariant::Polar,
        TransformVariant::PolarLineSkeletal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TransformVariant::Raw => "raw",
            TransformVariant::LineSkeletal => "line_skeletal",
            TransformVariant::Polar => "polar",
            TransformVariant::PolarLineSkeletal => "polar_line_skeletal",
        }
    }

    pub fn parse(s: &str) -> Option<TransformVariant> {
        TransformVariant::ALL.into_iter().find(|v| v.name() == s)
    }
}

impl fmt::Display for TransformVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The configured mask bank: loaded from `linefeat.bank_path` when set,
/// otherwise the built-in bank.
pub fn resolve_mask_bank(cfg: &PipelineConfig) -> Result<MaskBank, LineFeatError> {
    match &cfg.bank_path {
        Some(p) => linefeat::load_mask_bank(p),
        None => Ok(linefeat::default_mask_bank()),
    }
}

/// The square 2-D stage output for `variant`, before flattening:
/// `raw` resizes to a square, the line variants run the mask bank, and the
/// polar variants start from the log-polar mapping. This is also what the
/// batch transform command writes out as images.
pub fn transform_image(
    img: &GrayImage,
    variant: TransformVariant,
    cfg: &PipelineConfig,
    bank: &MaskBank,
) -> Result<PolarImage, EvalError> {
    let cartesian_square = |img: &GrayImage| -> Result<PolarImage, EvalError> {
        let side = cfg.polar.fixed_side.ok_or(EvalError::FixedSideRequired)?;
        let resized = img.resize_nearest(side, side);
        Ok(PolarImage::new(side, resized.pixels().to_vec()))
    };
    let line = |img: &PolarImage| -> Result<PolarImage, EvalError> {
        let resp = linefeat::extract_line_image(img, bank)?;
        Ok(match cfg.binarize_at {
            Some(t) => linefeat::binarize(&resp, t),
            None => resp,
        })
    };
    match variant {
        TransformVariant::Raw => cartesian_square(img),
        TransformVariant::LineSkeletal => line(&cartesian_square(img)?),
        TransformVariant::Polar => Ok(polar::log_polar_transform(img, &cfg.polar)?),
        TransformVariant::PolarLineSkeletal => {
            line(&polar::log_polar_transform(img, &cfg.polar)?)
        }
    }
}

pub type ImagePipeline = Box<dyn Fn(&GrayImage) -> Result<FeatureVector, EvalError>>;

/// Composes the preprocessing for `variant`; every pipeline ends with a
/// flatten, so with a fixed polar side all four variants produce vectors of
/// the same length. Composition itself cannot fail; per-image errors surface
/// when the returned function runs.
pub fn make_pipeline(
    variant: TransformVariant,
    cfg: &PipelineConfig,
    bank: &MaskBank,
) -> ImagePipeline {
    let cfg = cfg.clone();
    let bank = bank.clone();
    Box::new(move |img| {
        let stage = transform_image(img, variant, &cfg, &bank)?;
        Ok(eigenspace::flatten(&stage))
    })
}

/// Near-equal 3-way split of `n`, larger parts first.
pub fn balanced_sizes(n: usize) -> (usize, usize, usize) {
    let base = n / 3;
    let rem = n % 3;
    (
        base + usize::from(rem > 0),
        base + usize::from(rem > 1),
        base,
    )
}

/// Stratified fold assignment with exact per-fold totals.
///
/// A manifest whose entries all carry folds already is returned unchanged,
/// so an explicit published split wins. Otherwise (a partial fold column is
/// reassigned from scratch) subjects are processed in id order, each
/// subject's images are shuffled by a stream of `seed`, and every image goes
/// to the fold where its subject's share is smallest relative to that fold's
/// size, ties toward the fold with the most capacity left. That spreads each
/// subject across all folds in proportion while landing the requested sizes
/// exactly.
pub fn assign_folds(
    manifest: &DatasetManifest,
    sizes: (usize, usize, usize),
    seed: u64,
) -> Result<DatasetManifest, EvalError> {
    if manifest.folds_assigned() {
        return Ok(manifest.clone());
    }
    let total = manifest.len();
    let want = [sizes.0, sizes.1, sizes.2];
    let got: usize = want.iter().sum();
    if got != total {
        return Err(EvalError::SizesMismatch {
            expected: total,
            got,
        });
    }
    let mut by_subject: Vec<Vec<usize>> = vec![Vec::new(); manifest.num_subjects()];
    for (i, e) in manifest.entries().iter().enumerate() {
        by_subject[e.subject_id].push(i);
    }
    for (subject, idxs) in by_subject.iter().enumerate() {
        if idxs.len() < 3 {
            return Err(EvalError::StratificationImpossible {
                subject,
                count: idxs.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, FOLD_STREAM));
    let mut remaining = want;
    let mut fold_of = vec![0u8; total];
    for idxs in &mut by_subject {
        idxs.shuffle(&mut rng);
        let mut mine = [0usize; 3];
        for &i in idxs.iter() {
            // Compare (mine + 1) / want across candidate folds without
            // division: cross-multiplied integer ratios stay exact.
            let mut best: Option<usize> = None;
            for f in 0..3 {
                if remaining[f] == 0 {
                    continue;
                }
                best = Some(match best {
                    None => f,
                    Some(b) => {
                        let lhs = (mine[f] + 1) * want[b];
                        let rhs = (mine[b] + 1) * want[f];
                        match lhs.cmp(&rhs).then(remaining[b].cmp(&remaining[f])) {
                            std::cmp::Ordering::Less => f,
                            _ => b,
                        }
                    }
                });
            }
            let f = best.expect("fold capacities sum to the entry count");
            mine[f] += 1;
            remaining[f] -= 1;
            fold_of[i] = f as u8;
        }
    }

    let entries = manifest
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| ManifestEntry {
            fold: Some(fold_of[i]),
            ..e.clone()
        })
        .collect();
    Ok(DatasetManifest::new(entries))
}

/// Accuracy of one fold arrangement. `hits[k]` counts test samples whose
/// true label ranked within the top k+1.
#[derive(Debug, Clone)]
pub struct FoldScore {
    pub test_fold: u8,
    pub n_test: usize,
    pub hits: [usize; 3],
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
}

impl FoldScore {
    fn from_hits(test_fold: u8, n_test: usize, hits: [usize; 3]) -> Self {
        assert!(n_test > 0, "scored fold cannot be empty");
        assert!(
            hits[0] <= hits[1] && hits[1] <= hits[2] && hits[2] <= n_test,
            "top-k hits must be non-decreasing"
        );
        let rate = |h: usize| h as f64 / n_test as f64;
        Self {
            test_fold,
            n_test,
            hits,
            top1: rate(hits[0]),
            top2: rate(hits[1]),
            top3: rate(hits[2]),
        }
    }
}

/// Wall-clock seconds spent in each pipeline stage, summed over folds.
#[derive(Debug, Clone, Default)]
pub struct StageTimings {
    pub preprocess_s: f64,
    pub eigen_s: f64,
    pub train_s: f64,
    pub score_s: f64,
}

/// Cross-validation result for one variant: per-fold and aggregate top-1/2/3
/// plus a top-1 confusion matrix (rows true subject, columns predicted).
#[derive(Debug, Clone)]
pub struct EvaluationReport {
    pub variant: TransformVariant,
    pub folds: Vec<FoldScore>,
    pub n_test: usize,
    pub hits: [usize; 3],
    pub top1: f64,
    pub top2: f64,
    pub top3: f64,
    pub confusion: Vec<Vec<usize>>,
    pub timing: StageTimings,
}

impl EvaluationReport {
    fn new(
        variant: TransformVariant,
        folds: Vec<FoldScore>,
        confusion: Vec<Vec<usize>>,
        timing: StageTimings,
    ) -> Self {
        assert_eq!(folds.len(), 3, "expected exactly three fold arrangements");
        let n_test: usize = folds.iter().map(|f| f.n_test).sum();
        let mut hits = [0usize; 3];
        for f in &folds {
            for (total, h) in hits.iter_mut().zip(f.hits) {
                *total += h;
            }
        }
        assert!(hits[0] <= hits[1] && hits[1] <= hits[2] && hits[2] <= n_test);
        let cells: usize = confusion.iter().map(|r| r.iter().sum::<usize>()).sum();
        assert_eq!(cells, n_test, "confusion counts must sum to the test total");
        assert!(confusion.iter().all(|r| r.len() == confusion.len()));
        let rate = |h: usize| h as f64 / n_test as f64;
        Self {
            variant,
            folds,
            n_test,
            hits,
            top1: rate(hits[0]),
            top2: rate(hits[1]),
            top3: rate(hits[2]),
            confusion,
            timing,
        }
    }

    fn csv_rows(&self, out: &mut String) {
        let mut folds: Vec<&FoldScore> = self.folds.iter().collect();
        folds.sort_by_key(|f| f.test_fold);
        for f in folds {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6},{}\n",
                self.variant, f.test_fold, f.top1, f.top2, f.top3, f.n_test
            ));
        }
        out.push_str(&format!(
            "{},aggregate,{:.6},{:.6},{:.6},{}\n",
            self.variant, self.top1, self.top2, self.top3, self.n_test
        ));
    }

    /// Accuracy rows: one per fold plus the sample-weighted aggregate.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        self.csv_rows(&mut out);
        out
    }

    /// Confusion counts as CSV, rows true subject, columns predicted.
    pub fn confusion_csv(&self) -> String {
        let c = self.confusion.len();
        let mut out = String::from("true_subject");
        for j in 0..c {
            out.push_str(&format!(",predicted_{j}"));
        }
        out.push('\n');
        for (i, row) in self.confusion.iter().enumerate() {
            out.push_str(&i.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    /// Short human-readable account of the run.
    pub fn summary(&self) -> String {
        let mut out = format!("variant {}\n", self.variant);
        let mut folds: Vec<&FoldScore> = self.folds.iter().collect();
        folds.sort_by_key(|f| f.test_fold);
        for f in folds {
            out.push_str(&format!(
                "  test fold {}: top1 {:.4}  top2 {:.4}  top3 {:.4}  ({} images)\n",
                f.test_fold, f.top1, f.top2, f.top3, f.n_test
            ));
        }
        out.push_str(&format!(
            "  aggregate:   top1 {:.4}  top2 {:.4}  top3 {:.4}  ({} images)\n",
            self.top1, self.top2, self.top3, self.n_test
        ));
        out.push_str(&format!(
            "  time: preprocess {:.2}s, eigenspace {:.2}s, training {:.2}s, scoring {:.2}s\n",
            self.timing.preprocess_s, self.timing.eigen_s, self.timing.train_s,
            self.timing.score_s
        ));
        out
    }
}

pub const CSV_HEADER: &str = "variant,fold,top1,top2,top3,n_test\n";

/// One comparison CSV from several reports, in the given order.
pub fn comparison_csv(reports: &[EvaluationReport]) -> String {
    let mut out = String::from(CSV_HEADER);
    for r in reports {
        r.csv_rows(&mut out);
    }
    out
}

/// What a fitting pass did: sample count, kept eigenspace width, classifier
/// epochs, and the last mean epoch loss.
#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub n_train: usize,
    pub k: usize,
    pub epochs: usize,
    pub final_loss: f64,
}

fn check_all_classes(labels: &[usize], num_classes: usize) -> Result<(), EvalError> {
    let mut seen = vec![false; num_classes];
    for &l in labels {
        seen[l] = true;
    }
    match seen.iter().position(|&b| !b) {
        Some(subject) => Err(EvalError::EmptyClassInTraining { subject }),
        None => Ok(()),
    }
}

/// Fits the eigenspace on the given raw feature vectors, projects them, and
/// trains a classifier. The requested eigenspace width is capped by the
/// snapshot rank bound (samples minus one) and by the vector dimension.
fn fit_features(
    features: &[FeatureVector],
    labels: &[usize],
    num_classes: usize,
    cfg: &PipelineConfig,
    mlp_seed: u64,
    timing: &mut StageTimings,
) -> Result<(Eigenspace, MlpModel, TrainSummary), EvalError> {
    assert_eq!(features.len(), labels.len());
    let n = features.len();
    let d = features.first().map_or(0, FeatureVector::len);
    let k = cfg.pca_k.min(n.saturating_sub(1)).min(d);

    let t = Instant::now();
    let es = eigenspace::fit_eigenspace(features, k)?;
    assert!(es.k() > 0, "training images are effectively identical");
    let mut samples = Vec::with_capacity(n);
    for (v, &label) in features.iter().zip(labels) {
        samples.push((eigenspace::project(&es, v)?, label));
    }
    timing.eigen_s += t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut model = classifier::init_model(cfg.mlp_config(es.k(), num_classes, mlp_seed));
    let history = classifier::train(&mut model, &samples)?;
    timing.train_s += t.elapsed().as_secs_f64();

    let summary = TrainSummary {
        n_train: n,
        k: es.k(),
        epochs: history.len(),
        final_loss: *history.last().expect("at least one epoch runs"),
    };
    Ok((es, model, summary))
}

fn load_features(
    entries: &[&ManifestEntry],
    base_dir: &Path,
    pipeline: &ImagePipeline,
) -> Result<Vec<FeatureVector>, EvalError> {
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let img = imaging::load_image(&base_dir.join(&e.path))?;
        out.push(pipeline(&img)?);
    }
    Ok(out)
}

/// Fits an eigenspace and classifier on the manifest's training entries:
/// all of them, or all outside `exclude_fold` when given. Image paths are
/// taken relative to `base_dir`. The model matches what cross-validation
/// trains for the same excluded fold, seed for seed.
pub fn train_model(
    manifest: &DatasetManifest,
    base_dir: &Path,
    cfg: &PipelineConfig,
    exclude_fold: Option<u8>,
) -> Result<(Eigenspace, MlpModel, TrainSummary), EvalError> {
    cfg.validate()?;
    let selected: Vec<&ManifestEntry> = manifest
        .entries()
        .iter()
        .filter(|e| exclude_fold.is_none_or(|f| e.fold != Some(f)))
        .collect();
    let labels: Vec<usize> = selected.iter().map(|e| e.subject_id).collect();
    check_all_classes(&labels, manifest.num_subjects())?;

    let bank = resolve_mask_bank(cfg)?;
    let pipeline = make_pipeline(cfg.variant, cfg, &bank);
    let features = load_features(&selected, base_dir, &pipeline)?;
    let mlp_seed = subseed(cfg.seed, MLP_STREAM + exclude_fold.map_or(3, u64::from));
    let mut timing = StageTimings::default();
    fit_features(
        &features,
        &labels,
        manifest.num_subjects(),
        cfg,
        mlp_seed,
        &mut timing,
    )
}

/// 3-fold cross-validation of one variant. The three arrangements run in the
/// order test fold 2, then 1, then 0; each fits its eigenspace and
/// classifier on the other two folds only. The aggregate is the
/// sample-weighted mean, so unequal folds count by size.
pub fn run_cross_validation(
    manifest: &DatasetManifest,
    base_dir: &Path,
    variant: TransformVariant,
    cfg: &PipelineConfig,
) -> Result<EvaluationReport, EvalError> {
    cfg.validate()?;
    if !manifest.folds_assigned() {
        return Err(EvalError::MissingFolds);
    }
    let num_classes = manifest.num_subjects();
    let bank = resolve_mask_bank(cfg)?;
    let pipeline = make_pipeline(variant, cfg, &bank);

    let mut timing = StageTimings::default();
    let t = Instant::now();
    let all: Vec<&ManifestEntry> = manifest.entries().iter().collect();
    let features = load_features(&all, base_dir, &pipeline)?;
    timing.preprocess_s = t.elapsed().as_secs_f64();

    let mut folds = Vec::with_capacity(3);
    let mut confusion = vec![vec![0usize; num_classes]; num_classes];
    for test_fold in [2u8, 1, 0] {
        let (mut train_f, mut train_l) = (Vec::new(), Vec::new());
        let (mut test_f, mut test_l) = (Vec::new(), Vec::new());
        for (e, feat) in manifest.entries().iter().zip(&features) {
            let fold = e.fold.expect("folds checked above");
            if fold == test_fold {
                test_f.push(feat.clone());
                test_l.push(e.subject_id);
            } else {
                train_f.push(feat.clone());
                train_l.push(e.subject_id);
            }
        }
        check_all_classes(&train_l, num_classes)?;
        assert!(!test_f.is_empty(), "test fold {test_fold} is empty");

        let mlp_seed = subseed(cfg.seed, MLP_STREAM + u64::from(test_fold));
        let (es, model, _) =
            fit_features(&train_f, &train_l, num_classes, cfg, mlp_seed, &mut timing)?;

        let t = Instant::now();
        let mut hits = [0usize; 3];
        for (feat, &label) in test_f.iter().zip(&test_l) {
            let projected = eigenspace::project(&es, feat)?;
            let pred = classifier::forward(&model, &projected)?;
            for (k, h) in hits.iter_mut().enumerate() {
                let upto = (k + 1).min(pred.ranking.len());
                if pred.ranking[..upto].contains(&label) {
                    *h += 1;
                }
            }
            confusion[label][pred.ranking[0]] += 1;
        }
        timing.score_s += t.elapsed().as_secs_f64();
        folds.push(FoldScore::from_hits(test_fold, test_f.len(), hits));
    }

    Ok(EvaluationReport::new(variant, folds, confusion, timing))
}

/// Runs cross-validation once per variant on the same folds and seeds, in
/// `TransformVariant::ALL` order.
pub fn compare_transforms(
    manifest: &DatasetManifest,
    base_dir: &Path,
    cfg: &PipelineConfig,
) -> Result<Vec<EvaluationReport>, EvalError> {
    let mut reports = Vec::with_capacity(TransformVariant::ALL.len());
    for variant in TransformVariant::ALL {
        reports.push(run_cross_validation(manifest, base_dir, variant, cfg)?);
    }
    Ok(reports)
}
