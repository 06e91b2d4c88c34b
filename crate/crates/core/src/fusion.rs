//! Temporal fusion: a 1x1 layer over the concatenated long-range, short-range
//! and current class maps, trained with softmax cross-entropy plus auxiliary
//! (deep) supervision on the warped maps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::grid::{Grid, LabelMap, ProbMap};
use crate::linear::{self, Batch, Linear, TrainLog, LOG_FLOOR};

/// Central-difference step used by [`gradient_check`].
pub const GRADIENT_CHECK_STEP: f64 = 1e-4;

/// Which warped branches feed the fusion layer and whether they are confidence-weighted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    Long,
    Short,
    LongConf,
    ShortConf,
    LongShort,
    LongShortConf,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::Long,
        Variant::Short,
        Variant::LongConf,
        Variant::ShortConf,
        Variant::LongShort,
        Variant::LongShortConf,
    ];

    pub fn uses_long(self) -> bool {
        matches!(
            self,
            Variant::Long | Variant::LongConf | Variant::LongShort | Variant::LongShortConf
        )
    }

    pub fn uses_short(self) -> bool {
        matches!(
            self,
            Variant::Short | Variant::ShortConf | Variant::LongShort | Variant::LongShortConf
        )
    }

    pub fn uses_confidence(self) -> bool {
        matches!(
            self,
            Variant::LongConf | Variant::ShortConf | Variant::LongShortConf
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Long => "l",
            Variant::Short => "s",
            Variant::LongConf => "l+c",
            Variant::ShortConf => "s+c",
            Variant::LongShort => "l+s",
            Variant::LongShortConf => "l+s+c",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| {
                invalid(format!(
                    "unknown variant {s:?}, expected one of l, s, l+c, s+c, l+s, l+s+c"
                ))
            })
    }
}

impl TryFrom<String> for Variant {
    type Error = crate::Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.as_str().to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub deep_supervision_weight: f64,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 500,
            deep_supervision_weight: 1.0,
            seed: 0,
            variant: Variant::LongShortConf,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(invalid("learning_rate must be a finite non-negative number"));
        }
        if self.epochs < 1 {
            return Err(invalid("epochs must be at least 1"));
        }
        if !(self.deep_supervision_weight.is_finite() && self.deep_supervision_weight >= 0.0) {
            return Err(invalid("deep_supervision_weight must be non-negative"));
        }
        Ok(())
    }
}

/// Fusion layer parameters: a `K x 3K` matrix and `K` biases. Input channels are
/// ordered (long block, short block, current block).
#[derive(Clone, Debug, PartialEq)]
pub struct FusionWeights(Linear);

impl FusionWeights {
    pub fn new(classes: usize, matrix: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if classes == 0 {
            return Err(invalid("fusion needs at least one class"));
        }
        if matrix.len() != classes * 3 * classes || bias.len() != classes {
            return Err(invalid(format!(
                "fusion weights for K={classes} need {} matrix and {classes} bias values, got {} and {}",
                3 * classes * classes,
                matrix.len(),
                bias.len()
            )));
        }
        let lin = Linear {
            classes,
            dim: 3 * classes,
            matrix,
            bias,
        };
        if !lin.is_finite() {
            return Err(invalid("fusion weights must be finite"));
        }
        Ok(Self(lin))
    }

    pub fn zeros(classes: usize) -> Self {
        Self(Linear::zeros(classes, 3 * classes))
    }

    /// Standard-normal initialization.
    pub fn gaussian(classes: usize, seed: u64) -> Self {
        Self(Linear::gaussian(classes, 3 * classes, 1.0, seed))
    }

    /// `[0 | 0 | tau * I]` with zero bias: copies the current frame's map.
    pub fn pass_through(classes: usize, tau: f64) -> Self {
        let mut lin = Linear::zeros(classes, 3 * classes);
        for c in 0..classes {
            lin.matrix[c * 3 * classes + 2 * classes + c] = tau;
        }
        Self(lin)
    }

    pub fn classes(&self) -> usize {
        self.0.classes
    }

    pub fn matrix(&self) -> &[f64] {
        &self.0.matrix
    }

    pub fn bias(&self) -> &[f64] {
        &self.0.bias
    }

    /// Weight from input channel `input` (0..3K) to output class `class`.
    pub fn weight(&self, class: usize, input: usize) -> f64 {
        self.0.matrix[class * self.0.dim + input]
    }
}

/// Inputs of one fusion evaluation: the current rough map and the optional
/// (possibly confidence-weighted) warped maps. Missing branches are zero-filled.
#[derive(Clone, Debug, PartialEq)]
pub struct FusionInput {
    rough: ProbMap,
    long: Option<Grid>,
    short: Option<Grid>,
}

impl FusionInput {
    pub fn new(rough: ProbMap, long: Option<Grid>, short: Option<Grid>) -> Result<Self> {
        for (name, branch) in [("long", &long), ("short", &short)] {
            if let Some(g) = branch {
                rough.grid().check_extent(g, name)?;
                if g.channels() != rough.classes() {
                    return Err(invalid(format!(
                        "{name} branch has {} classes, current map has {}",
                        g.channels(),
                        rough.classes()
                    )));
                }
                if g.data().iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(invalid(format!(
                        "{name} branch holds negative or non-finite scores"
                    )));
                }
            }
        }
        Ok(Self { rough, long, short })
    }

    pub fn rough(&self) -> &ProbMap {
        &self.rough
    }

    pub fn long(&self) -> Option<&Grid> {
        self.long.as_ref()
    }

    pub fn short(&self) -> Option<&Grid> {
        self.short.as_ref()
    }

    pub fn classes(&self) -> usize {
        self.rough.classes()
    }

    pub fn width(&self) -> usize {
        self.rough.width()
    }

    pub fn height(&self) -> usize {
        self.rough.height()
    }

    /// Concatenated `3K` input vector of pixel `i` (row-major index).
    fn features(&self, i: usize, out: &mut [f64]) {
        let k = self.classes();
        let mut block = |b: usize, src: Option<&Grid>| {
            let dst = &mut out[b * k..(b + 1) * k];
            match src {
                Some(g) => dst
                    .iter_mut()
                    .zip(&g.data()[i * k..(i + 1) * k])
                    .for_each(|(d, s)| *d = *s as f64),
                None => dst.fill(0.0),
            }
        };
        block(0, self.long.as_ref());
        block(1, self.short.as_ref());
        block(2, Some(self.rough.grid()));
    }

    fn append_to(&self, batch: &mut Batch, gt: &LabelMap) {
        let mut x = vec![0.0; 3 * self.classes()];
        for (i, &label) in gt.data().iter().enumerate() {
            self.features(i, &mut x);
            batch.push(&x, label as usize);
        }
    }
}

fn check_k(w: &FusionWeights, input: &FusionInput) -> Result<()> {
    if w.classes() != input.classes() {
        return Err(invalid(format!(
            "fusion weights expect K={}, input has K={}",
            w.classes(),
            input.classes()
        )));
    }
    Ok(())
}

fn check_gt(input: &FusionInput, gt: &LabelMap) -> Result<()> {
    if !gt.same_extent(input.width(), input.height()) {
        return Err(invalid("ground truth size does not match fusion input"));
    }
    gt.check_classes(input.classes())
}

/// Applies the fusion layer and a per-pixel softmax.
pub fn fuse_forward(w: &FusionWeights, input: &FusionInput) -> Result<ProbMap> {
    check_k(w, input)?;
    let k = input.classes();
    let n = input.width() * input.height();
    let mut x = vec![0.0; 3 * k];
    let mut p = vec![0.0; k];
    let mut data = Vec::with_capacity(n * k);
    for i in 0..n {
        input.features(i, &mut x);
        w.0.probabilities(&x, &mut p);
        data.extend(p.iter().map(|&v| v as f32));
    }
    // f32 rounding of a softmax output stays within the sum tolerance
    ProbMap::new(Grid::new(input.width(), input.height(), k, data)?)
}

/// Mean cross-entropy of `probs` against `gt`, renormalizing each pixel first.
fn mean_cross_entropy(probs: &Grid, gt: &LabelMap) -> f64 {
    let total: f64 = probs
        .pixels()
        .zip(gt.data())
        .map(|(p, &y)| {
            let sum: f64 = p.iter().map(|&v| v as f64).sum();
            let q = if sum > 0.0 {
                p[y as usize] as f64 / sum
            } else {
                1.0 / p.len() as f64
            };
            -q.max(LOG_FLOOR).ln()
        })
        .sum();
    total / gt.data().len() as f64
}

/// Cross-entropy of the fused map plus `deep_supervision_weight` times the
/// cross-entropy of every present auxiliary map.
pub fn fusion_loss(
    pred: &ProbMap,
    aux_long: Option<&Grid>,
    aux_short: Option<&Grid>,
    gt: &LabelMap,
    cfg: &TrainConfig,
) -> Result<f64> {
    if !gt.same_extent(pred.width(), pred.height()) {
        return Err(invalid("ground truth size does not match prediction"));
    }
    gt.check_classes(pred.classes())?;
    let mut loss = mean_cross_entropy(pred.grid(), gt);
    for aux in [aux_long, aux_short].into_iter().flatten() {
        pred.grid().check_extent(aux, "auxiliary map")?;
        if aux.channels() != pred.classes() {
            return Err(invalid("auxiliary map class count differs"));
        }
        loss += cfg.deep_supervision_weight * mean_cross_entropy(aux, gt);
    }
    Ok(loss)
}

/// Pooled training set: every pixel of every example.
struct FusionData {
    classes: usize,
    batch: Batch,
    /// Deep-supervision part of the loss, constant in the fusion weights.
    aux_loss: f64,
}

fn collect(dataset: &[(FusionInput, LabelMap)], cfg: &TrainConfig) -> Result<FusionData> {
    let Some((first, _)) = dataset.first() else {
        return Err(invalid("fusion training needs at least one example"));
    };
    let classes = first.classes();
    let mut batch = Batch::new(3 * classes);
    let mut aux_sum = 0.0;
    for (input, gt) in dataset {
        if input.classes() != classes {
            return Err(invalid("fusion examples disagree on the class count"));
        }
        check_gt(input, gt)?;
        input.append_to(&mut batch, gt);
        let n = gt.data().len() as f64;
        for aux in [input.long(), input.short()].into_iter().flatten() {
            aux_sum += n * mean_cross_entropy(aux, gt);
        }
    }
    let aux_loss = cfg.deep_supervision_weight * aux_sum / batch.len() as f64;
    Ok(FusionData {
        classes,
        batch,
        aux_loss,
    })
}

/// Total training loss of `w` over a dataset (fused term plus deep supervision).
pub fn dataset_loss(
    w: &FusionWeights,
    dataset: &[(FusionInput, LabelMap)],
    cfg: &TrainConfig,
) -> Result<f64> {
    let data = collect(dataset, cfg)?;
    if data.classes != w.classes() {
        return Err(invalid("fusion weights and dataset disagree on K"));
    }
    Ok(w.0.loss(&data.batch) + data.aux_loss)
}

/// Trains from the seeded standard-normal initialization and returns the
/// lowest-loss weights.
pub fn train_fusion(
    dataset: &[(FusionInput, LabelMap)],
    cfg: &TrainConfig,
) -> Result<FusionWeights> {
    Ok(train_fusion_logged(dataset, cfg)?.0)
}

pub fn train_fusion_logged(
    dataset: &[(FusionInput, LabelMap)],
    cfg: &TrainConfig,
) -> Result<(FusionWeights, TrainLog)> {
    let k = dataset
        .first()
        .map(|(input, _)| input.classes())
        .ok_or_else(|| invalid("fusion training needs at least one example"))?;
    fine_tune_fusion(FusionWeights::gaussian(k, cfg.seed), dataset, cfg)
}

/// Continues gradient descent from `init`.
pub fn fine_tune_fusion(
    init: FusionWeights,
    dataset: &[(FusionInput, LabelMap)],
    cfg: &TrainConfig,
) -> Result<(FusionWeights, TrainLog)> {
    cfg.validate()?;
    let data = collect(dataset, cfg)?;
    if data.classes != init.classes() {
        return Err(invalid("initial fusion weights and dataset disagree on K"));
    }
    let (w, log) = linear::descend(
        init.0,
        &data.batch,
        cfg.learning_rate,
        cfg.epochs,
        data.aux_loss,
    );
    Ok((FusionWeights(w), log))
}

/// Maximum relative error between the analytic gradient of the fusion loss
/// and central finite differences, over every weight and bias.
pub fn gradient_check(w: &FusionWeights, input: &FusionInput, gt: &LabelMap) -> Result<f64> {
    check_k(w, input)?;
    check_gt(input, gt)?;
    let mut batch = Batch::new(3 * input.classes());
    input.append_to(&mut batch, gt);
    Ok(linear::gradient_check(&w.0, &batch, GRADIENT_CHECK_STEP))
}

/// Analytic gradient of the fused cross-entropy, laid out as (matrix, bias).
pub fn loss_gradient(
    w: &FusionWeights,
    input: &FusionInput,
    gt: &LabelMap,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_k(w, input)?;
    check_gt(input, gt)?;
    let mut batch = Batch::new(3 * input.classes());
    input.append_to(&mut batch, gt);
    let (_, g) = w.0.loss_and_gradient(&batch);
    Ok((g.matrix, g.bias))
}

/// Position of an input channel block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Long,
    Short,
    Current,
}

impl Block {
    pub const ALL: [Block; 3] = [Block::Long, Block::Short, Block::Current];

    pub fn as_str(self) -> &'static str {
        match self {
            Block::Long => "long",
            Block::Short => "short",
            Block::Current => "current",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeightRow {
    pub class: usize,
    pub block: Block,
    /// Channel index within the block.
    pub input_index: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSummary {
    pub block: Block,
    /// Strongest input channel, ties to the lowest index.
    pub argmax: usize,
    pub max_weight: f64,
    /// Every weight in the block is equal.
    pub flat: bool,
}

/// Per-class view of the fusion weights, block by block.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightTable {
    pub classes: usize,
    pub rows: Vec<WeightRow>,
    /// `summaries[class][block]`.
    pub summaries: Vec<[BlockSummary; 3]>,
}

impl WeightTable {
    /// CSV with columns `class_name,block,input_index,weight`.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("class_name,block,input_index,weight\n");
        for r in &self.rows {
            let name = class_names
                .get(r.class)
                .cloned()
                .unwrap_or_else(|| format!("class{}", r.class));
            out.push_str(&format!(
                "{name},{},{},{:.6}\n",
                r.block.as_str(),
                r.input_index,
                r.weight
            ));
        }
        out
    }
}

pub fn export_weights(w: &FusionWeights) -> WeightTable {
    let k = w.classes();
    let mut rows = Vec::with_capacity(3 * k * k);
    let mut summaries = Vec::with_capacity(k);
    for class in 0..k {
        let summary = Block::ALL.map(|block| {
            let b = block as usize;
            let weights: Vec<f64> = (0..k).map(|i| w.weight(class, b * k + i)).collect();
            let mut argmax = 0;
            for (i, &v) in weights.iter().enumerate() {
                if v > weights[argmax] {
                    argmax = i;
                }
            }
            BlockSummary {
                block,
                argmax,
                max_weight: weights[argmax],
                flat: weights.iter().all(|&v| v == weights[0]),
            }
        });
        for block in Block::ALL {
            for i in 0..k {
                rows.push(WeightRow {
                    class,
                    block,
                    input_index: i,
                    weight: w.weight(class, block as usize * k + i),
                });
            }
        }
        summaries.push(summary);
    }
    WeightTable {
        classes: k,
        rows,
        summaries,
    }
}
