//! Sliding-window inference and staged training.
//!
//! For a frame `t` with enough history the window is `(t - l, t - s, t)`: the
//! two earlier rough maps are warped into frame `t` along estimated flow,
//! optionally weighted by flow confidence, and fused with the rough map of
//! `t`. Frames with `t < l` fall back to the rough map alone.

use serde::{Deserialize, Serialize};

use crate::confidence::{apply_confidence, reconstruction_residual, residual_to_confidence};
use crate::error::{invalid, Result};
use crate::flow::{estimate_flow, FlowConfig};
use crate::fusion::{
    fine_tune_fusion, fuse_forward, train_fusion_logged, FusionInput, FusionWeights, TrainConfig,
    Variant,
};
use crate::grid::{FlowField, Grid, Image, LabelMap, ProbMap};
use crate::linear::TrainLog;
use crate::parser::{parse_frame, train_parser_frames, ParserModel};

/// Ordered frames with one labeled frame, plus optional synthetic ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct VideoSequence {
    frames: Vec<Image>,
    labeled_index: usize,
    labeled: LabelMap,
    gt_labels: Option<Vec<LabelMap>>,
    gt_flows: Option<Vec<FlowField>>,
}

impl VideoSequence {
    pub fn new(frames: Vec<Image>, labeled_index: usize, labeled: LabelMap) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| invalid("a video needs at least one frame"))?;
        let (w, h) = (first.width(), first.height());
        if frames.iter().any(|f| f.width() != w || f.height() != h) {
            return Err(invalid("all frames of a video must share one size"));
        }
        if labeled_index >= frames.len() {
            return Err(invalid(format!(
                "labeled frame {labeled_index} outside {} frames",
                frames.len()
            )));
        }
        if !labeled.same_extent(w, h) {
            return Err(invalid("labeled frame annotation does not match the frame size"));
        }
        Ok(Self {
            frames,
            labeled_index,
            labeled,
            gt_labels: None,
            gt_flows: None,
        })
    }

    /// Attaches full per-frame labels and per-frame velocity fields.
    pub fn with_ground_truth(mut self, labels: Vec<LabelMap>, flows: Vec<FlowField>) -> Result<Self> {
        let (w, h) = (self.width(), self.height());
        if labels.len() != self.frames.len() || flows.len() != self.frames.len() {
            return Err(invalid("ground truth must cover every frame"));
        }
        if labels.iter().any(|l| !l.same_extent(w, h))
            || flows.iter().any(|f| f.width() != w || f.height() != h)
        {
            return Err(invalid("ground truth size does not match the frames"));
        }
        self.gt_labels = Some(labels);
        self.gt_flows = Some(flows);
        Ok(self)
    }

    pub fn frames(&self) -> &[Image] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn labeled_index(&self) -> usize {
        self.labeled_index
    }

    pub fn labeled(&self) -> &LabelMap {
        &self.labeled
    }

    pub fn gt_labels(&self) -> Option<&[LabelMap]> {
        self.gt_labels.as_deref()
    }

    pub fn gt_flows(&self) -> Option<&[FlowField]> {
        self.gt_flows.as_deref()
    }

    /// Ground-truth offset from frame `t` into frame `t - back`.
    pub fn gt_flow_back(&self, t: usize, back: usize) -> Option<FlowField> {
        self.gt_flows
            .as_ref()
            .map(|f| f[t].scaled(-(back as f32)))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Long-range offset `l` in frames.
    pub long_range: usize,
    /// Short-range offset `s` in frames.
    pub short_range: usize,
    pub variant: Variant,
    /// Class count; inferred from the labeled frames when absent.
    pub classes: Option<usize>,
    pub flow: FlowConfig,
    /// Fusion training.
    pub train: TrainConfig,
    pub parser: TrainConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::indoor()
    }
}

impl PipelineConfig {
    /// `l = 3`, `s = 1`.
    pub fn indoor() -> Self {
        Self {
            long_range: 3,
            short_range: 1,
            variant: Variant::LongShortConf,
            classes: None,
            flow: FlowConfig::default(),
            train: TrainConfig::default(),
            parser: TrainConfig {
                learning_rate: 0.5,
                epochs: 300,
                deep_supervision_weight: 0.0,
                seed: 0,
                variant: Variant::LongShortConf,
            },
        }
    }

    /// `l = 2`, `s = 1`, for lower frame rates and faster motion.
    pub fn outdoor() -> Self {
        Self {
            long_range: 2,
            ..Self::indoor()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "indoor" => Ok(Self::indoor()),
            "outdoor" => Ok(Self::outdoor()),
            other => Err(invalid(format!("unknown preset {other:?}"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.long_range > self.short_range && self.short_range >= 1) {
            return Err(invalid(format!(
                "need l > s >= 1, got l={} s={}",
                self.long_range, self.short_range
            )));
        }
        if let Some(k) = self.classes {
            if !(1..=256).contains(&k) {
                return Err(invalid("classes must lie in 1..=256"));
            }
        }
        self.flow.validate()?;
        self.train.validate()?;
        self.parser.validate()
    }

    pub fn fusion_config(&self) -> TrainConfig {
        TrainConfig {
            variant: self.variant,
            ..self.train
        }
    }
}

/// Frames feeding the parse of one target frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Window {
    Triplet {
        long: usize,
        short: usize,
        current: usize,
    },
    /// Not enough preceding frames: use the rough parse alone.
    Fallback,
}

pub fn select_triplet(t: usize, cfg: &PipelineConfig, frame_count: usize) -> Window {
    debug_assert!(t < frame_count);
    if t >= cfg.long_range {
        Window::Triplet {
            long: t - cfg.long_range,
            short: t - cfg.short_range,
            current: t,
        }
    } else {
        Window::Fallback
    }
}

/// Source of rough per-frame class maps.
pub trait FrameParser {
    fn classes(&self) -> usize;
    fn parse(&self, index: usize, frame: &Image) -> Result<ProbMap>;
}

impl FrameParser for ParserModel {
    fn classes(&self) -> usize {
        ParserModel::classes(self)
    }

    fn parse(&self, _index: usize, frame: &Image) -> Result<ProbMap> {
        Ok(parse_frame(self, frame))
    }
}

/// Rough maps supplied up front, indexed by frame.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecomputedMaps {
    classes: usize,
    maps: Vec<ProbMap>,
}

impl PrecomputedMaps {
    pub fn new(maps: Vec<ProbMap>) -> Result<Self> {
        let classes = maps
            .first()
            .map(ProbMap::classes)
            .ok_or_else(|| invalid("no rough maps given"))?;
        if maps.iter().any(|m| m.classes() != classes) {
            return Err(invalid("rough maps disagree on the class count"));
        }
        Ok(Self { classes, maps })
    }

    pub fn maps(&self) -> &[ProbMap] {
        &self.maps
    }
}

impl FrameParser for PrecomputedMaps {
    fn classes(&self) -> usize {
        self.classes
    }

    fn parse(&self, index: usize, frame: &Image) -> Result<ProbMap> {
        let m = self
            .maps
            .get(index)
            .ok_or_else(|| invalid(format!("no rough map for frame {index}")))?;
        if m.width() != frame.width() || m.height() != frame.height() {
            return Err(invalid(format!("rough map {index} does not match its frame")));
        }
        Ok(m.clone())
    }
}

/// Rough maps of one video, each computed at most once.
pub struct RoughCache<'a, P: FrameParser + ?Sized> {
    parser: &'a P,
    frames: &'a [Image],
    maps: Vec<Option<ProbMap>>,
    computed: usize,
    hits: usize,
}

impl<'a, P: FrameParser + ?Sized> RoughCache<'a, P> {
    pub fn new(parser: &'a P, frames: &'a [Image]) -> Self {
        Self {
            parser,
            frames,
            maps: vec![None; frames.len()],
            computed: 0,
            hits: 0,
        }
    }

    /// Makes sure frame `i` is parsed; returns whether it was already cached.
    pub fn ensure(&mut self, i: usize) -> Result<bool> {
        if self.maps[i].is_some() {
            self.hits += 1;
            return Ok(true);
        }
        let m = self.parser.parse(i, &self.frames[i])?;
        if m.classes() != self.parser.classes() {
            return Err(invalid("rough map class count differs from the parser's"));
        }
        self.maps[i] = Some(m);
        self.computed += 1;
        Ok(false)
    }

    pub fn get(&mut self, i: usize) -> Result<&ProbMap> {
        self.ensure(i)?;
        Ok(self.maps[i].as_ref().expect("just ensured"))
    }

    /// Read access to an already cached map.
    pub fn cached(&self, i: usize) -> Option<&ProbMap> {
        self.maps[i].as_ref()
    }

    pub fn computed(&self) -> usize {
        self.computed
    }

    pub fn hits(&self) -> usize {
        self.hits
    }
}

/// Per-frame inference record.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameDiagnostics {
    pub frame: usize,
    pub fallback: bool,
    pub long_confidence_mean: Option<f64>,
    pub short_confidence_mean: Option<f64>,
    /// Rough-map lookups for this frame answered from the cache.
    pub cache_hits: usize,
}

/// Warped, optionally confidence-weighted rough map of `source` in the
/// coordinates of `current`, with the mean confidence when used.
fn warped_branch(
    current: &Image,
    source: &Image,
    rough: &ProbMap,
    flow_cfg: &FlowConfig,
    use_confidence: bool,
) -> Result<(Grid, Option<f64>)> {
    let flow = estimate_flow(current, source, flow_cfg)?;
    let warped = rough.warp(&flow)?;
    if use_confidence {
        let conf = residual_to_confidence(&reconstruction_residual(current, source, &flow)?);
        Ok((apply_confidence(&warped, &conf)?, Some(conf.mean())))
    } else {
        Ok((warped.into_grid(), None))
    }
}

/// Builds the fusion input for target frame `t`, or `None` for fallback frames.
pub fn fusion_input_for<P: FrameParser + ?Sized>(
    frames: &[Image],
    t: usize,
    cache: &mut RoughCache<'_, P>,
    cfg: &PipelineConfig,
) -> Result<Option<(FusionInput, FrameDiagnostics)>> {
    let Window::Triplet {
        long,
        short,
        current,
    } = select_triplet(t, cfg, frames.len())
    else {
        return Ok(None);
    };
    let hits_before = cache.hits();
    let variant = cfg.variant;
    for i in [long, short, current] {
        cache.ensure(i)?;
    }
    let cached = |i: usize| cache.cached(i).expect("ensured above");
    let mut diag = FrameDiagnostics {
        frame: t,
        fallback: false,
        long_confidence_mean: None,
        short_confidence_mean: None,
        cache_hits: 0,
    };
    let long_branch = if variant.uses_long() {
        let (g, c) = warped_branch(
            &frames[current],
            &frames[long],
            cached(long),
            &cfg.flow,
            variant.uses_confidence(),
        )?;
        diag.long_confidence_mean = c;
        Some(g)
    } else {
        None
    };
    let short_branch = if variant.uses_short() {
        let (g, c) = warped_branch(
            &frames[current],
            &frames[short],
            cached(short),
            &cfg.flow,
            variant.uses_confidence(),
        )?;
        diag.short_confidence_mean = c;
        Some(g)
    } else {
        None
    };
    let input = FusionInput::new(cached(current).clone(), long_branch, short_branch)?;
    diag.cache_hits = cache.hits() - hits_before;
    Ok(Some((input, diag)))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParseOutput {
    pub labels: Vec<LabelMap>,
    pub diagnostics: Vec<FrameDiagnostics>,
    /// Number of rough maps computed (once per frame).
    pub rough_computed: usize,
    pub cache_hits: usize,
}

/// Parses every frame of a video with the trained parser and fusion layer.
pub fn parse_video(
    seq: &VideoSequence,
    parser: &ParserModel,
    fusion: &FusionWeights,
    cfg: &PipelineConfig,
) -> Result<ParseOutput> {
    parse_video_with(seq, parser, fusion, cfg)
}

/// As [`parse_video`], with any source of rough maps.
pub fn parse_video_with<P: FrameParser + ?Sized>(
    seq: &VideoSequence,
    parser: &P,
    fusion: &FusionWeights,
    cfg: &PipelineConfig,
) -> Result<ParseOutput> {
    cfg.validate()?;
    if parser.classes() != fusion.classes() {
        return Err(invalid(format!(
            "parser predicts {} classes, fusion expects {}",
            parser.classes(),
            fusion.classes()
        )));
    }
    if let Some(k) = cfg.classes {
        if k != fusion.classes() {
            return Err(invalid(format!(
                "config declares {k} classes, models use {}",
                fusion.classes()
            )));
        }
    }
    let frames = seq.frames();
    let mut cache = RoughCache::new(parser, frames);
    let mut labels = Vec::with_capacity(frames.len());
    let mut diagnostics = Vec::with_capacity(frames.len());
    for t in 0..frames.len() {
        match fusion_input_for(frames, t, &mut cache, cfg)? {
            Some((input, diag)) => {
                labels.push(fuse_forward(fusion, &input)?.argmax());
                diagnostics.push(diag);
            }
            None => {
                let was_cached = cache.ensure(t)?;
                labels.push(cache.cached(t).expect("ensured").argmax());
                diagnostics.push(FrameDiagnostics {
                    frame: t,
                    fallback: true,
                    long_confidence_mean: None,
                    short_confidence_mean: None,
                    cache_hits: usize::from(was_cached),
                });
            }
        }
    }
    Ok(ParseOutput {
        labels,
        diagnostics,
        rough_computed: cache.computed(),
        cache_hits: cache.hits(),
    })
}

/// Fusion training example for the labeled frame of each video that has
/// enough history; videos labeled too early are skipped.
pub fn fusion_examples(
    videos: &[(&VideoSequence, &dyn FrameParser)],
    cfg: &PipelineConfig,
) -> Result<Vec<(FusionInput, LabelMap)>> {
    let mut out = Vec::new();
    for (seq, parser) in videos {
        let t = seq.labeled_index();
        let mut cache = RoughCache::new(*parser, seq.frames());
        if let Some((input, _)) = fusion_input_for(seq.frames(), t, &mut cache, cfg)? {
            out.push((input, seq.labeled().clone()));
        }
    }
    Ok(out)
}

/// Losses recorded by the training stages.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineLog {
    pub parser: Option<TrainLog>,
    /// Fusion training from the Gaussian initialization.
    pub fusion: TrainLog,
    /// Fusion fine-tuning from the best stage-two weights.
    pub fine_tune: TrainLog,
}

/// Two fusion rounds: train from scratch, then fine-tune from the best weights.
pub fn train_fusion_stages(
    examples: &[(FusionInput, LabelMap)],
    cfg: &PipelineConfig,
) -> Result<(FusionWeights, TrainLog, TrainLog)> {
    if examples.is_empty() {
        return Err(invalid(format!(
            "no video has a labeled frame at index >= l = {}; lower l or label a later frame",
            cfg.long_range
        )));
    }
    let train = cfg.fusion_config();
    let (first, log_a) = train_fusion_logged(examples, &train)?;
    let (second, log_b) = fine_tune_fusion(first, examples, &train)?;
    Ok((second, log_a, log_b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedPipeline {
    pub parser: ParserModel,
    pub fusion: FusionWeights,
    pub log: PipelineLog,
}

fn infer_classes(videos: &[VideoSequence], cfg: &PipelineConfig) -> usize {
    cfg.classes.unwrap_or_else(|| {
        videos
            .iter()
            .map(|v| v.labeled().max_label() as usize + 1)
            .max()
            .unwrap_or(1)
            .max(2)
    })
}

/// Staged training: the flow configuration stays fixed throughout; the parser
/// is fit to the labeled frames; the fusion layer is trained on the labeled
/// frames' windows and then fine-tuned for a second round.
pub fn train_pipeline(videos: &[VideoSequence], cfg: &PipelineConfig) -> Result<TrainedPipeline> {
    cfg.validate()?;
    if videos.is_empty() {
        return Err(invalid("no training videos"));
    }
    let classes = infer_classes(videos, cfg);
    let labeled: Vec<(&Image, &LabelMap)> = videos
        .iter()
        .map(|v| (&v.frames()[v.labeled_index()], v.labeled()))
        .collect();
    let (parser, parser_log) = train_parser_frames(&labeled, classes, &cfg.parser)?;

    let usable: Vec<(&VideoSequence, &dyn FrameParser)> = videos
        .iter()
        .filter(|v| v.labeled_index() >= cfg.long_range)
        .map(|v| (v, &parser as &dyn FrameParser))
        .collect();
    let examples = fusion_examples(&usable, cfg)?;
    let (fusion, fusion_log, fine_tune_log) = train_fusion_stages(&examples, cfg)?;
    Ok(TrainedPipeline {
        parser,
        fusion,
        log: PipelineLog {
            parser: Some(parser_log),
            fusion: fusion_log,
            fine_tune: fine_tune_log,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplet_selection() {
        let cfg = PipelineConfig::indoor();
        assert_eq!(
            select_triplet(5, &cfg, 10),
            Window::Triplet {
                long: 2,
                short: 4,
                current: 5
            }
        );
        assert_eq!(select_triplet(2, &cfg, 10), Window::Fallback);
        assert_eq!(
            select_triplet(3, &cfg, 10),
            Window::Triplet {
                long: 0,
                short: 2,
                current: 3
            }
        );
        let out = PipelineConfig::outdoor();
        assert_eq!(
            select_triplet(2, &out, 10),
            Window::Triplet {
                long: 0,
                short: 1,
                current: 2
            }
        );
    }

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::indoor();
        cfg.short_range = 3;
        assert!(cfg.validate().is_err());
        cfg.short_range = 0;
        cfg.long_range = 2;
        assert!(cfg.validate().is_err());
        assert!(PipelineConfig::preset("outdoor").is_ok());
        assert!(PipelineConfig::preset("cloudy").is_err());
    }

    #[test]
    fn video_validation() {
        let a = Image::from_fn(4, 4, |_, _| [0.5; 3]).unwrap();
        let b = Image::from_fn(5, 4, |_, _| [0.5; 3]).unwrap();
        let l = LabelMap::filled(4, 4, 0).unwrap();
        assert!(VideoSequence::new(vec![], 0, l.clone()).is_err());
        assert!(VideoSequence::new(vec![a.clone(), b], 0, l.clone()).is_err());
        assert!(VideoSequence::new(vec![a.clone()], 1, l.clone()).is_err());
        assert!(VideoSequence::new(vec![a], 0, LabelMap::filled(3, 4, 0).unwrap()).is_err());
    }

    #[test]
    fn no_usable_fusion_example_is_an_error() {
        let a = Image::from_fn(16, 16, |x, y| [x as f32 / 16.0, y as f32 / 16.0, 0.3]).unwrap();
        let labels = LabelMap::new(16, 16, (0..256).map(|i| (i % 16 > 7) as u8).collect()).unwrap();
        let v = VideoSequence::new(vec![a; 4], 1, labels).unwrap();
        let mut cfg = PipelineConfig::indoor();
        cfg.train.epochs = 2;
        cfg.parser.epochs = 2;
        let err = train_pipeline(&[v], &cfg).unwrap_err();
        assert!(err.to_string().contains("lower l"));
    }
}
