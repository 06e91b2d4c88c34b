use labelprop::parser::train_parser_frames;
use labelprop::pipeline::{
    fusion_examples, parse_video_with, train_fusion_stages, PrecomputedMaps,
};
use labelprop::{
    corrupt_probmap, estimate_flow, export_weights, fuse_forward, generate, parse_frame,
    train_fusion, FlowConfig, FlowField, FrameParser, FusionInput, FusionWeights, Image, LabelMap,
    PipelineConfig, ProbMap, SynthConfig, TrainConfig, Variant, VideoSequence,
};

fn accuracy(pred: &LabelMap, gt: &LabelMap) -> f64 {
    let hits = pred
        .data()
        .iter()
        .zip(gt.data())
        .filter(|(a, b)| a == b)
        .count();
    hits as f64 / gt.data().len() as f64
}

fn noise_free(seed: u64, labeled_index: usize) -> SynthConfig {
    let mut cfg = SynthConfig::random(48, 48, 8, 3, 1, seed);
    cfg.noise_sigma = 0.0;
    cfg.labeled_index = Some(labeled_index);
    cfg
}

fn corrupted(seq: &VideoSequence, rate: f64, seed: u64) -> PrecomputedMaps {
    let maps = seq
        .gt_labels()
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, gt)| corrupt_probmap(gt, 3, rate, seed * 100 + i as u64).unwrap())
        .collect();
    PrecomputedMaps::new(maps).unwrap()
}

#[test]
fn one_hot_rough_maps_are_learned_as_pass_through() {
    let seq = generate(&SynthConfig::default()).unwrap();
    let data: Vec<(FusionInput, LabelMap)> = seq
        .gt_labels()
        .unwrap()
        .iter()
        .take(3)
        .map(|gt| {
            let rough = ProbMap::soft_one_hot(gt, 3, 1.0).unwrap();
            (FusionInput::new(rough, None, None).unwrap(), gt.clone())
        })
        .collect();
    let cfg = TrainConfig {
        variant: Variant::LongShortConf,
        ..TrainConfig::default()
    };
    let w = train_fusion(&data, &cfg).unwrap();
    for (input, gt) in &data {
        let acc = accuracy(&fuse_forward(&w, input).unwrap().argmax(), gt);
        assert!(acc >= 0.99, "training accuracy {acc}");
    }
}

#[test]
fn training_is_deterministic() {
    let seq = generate(&noise_free(5, 4)).unwrap();
    let rough = corrupted(&seq, 0.3, 5);
    let cfg = PipelineConfig {
        train: TrainConfig {
            epochs: 40,
            ..PipelineConfig::indoor().train
        },
        ..PipelineConfig::indoor()
    };
    let pairs: Vec<(&VideoSequence, &dyn FrameParser)> = vec![(&seq, &rough)];
    let examples = fusion_examples(&pairs, &cfg).unwrap();
    let a = train_fusion(&examples, &cfg.fusion_config()).unwrap();
    let b = train_fusion(&examples, &cfg.fusion_config()).unwrap();
    assert_eq!(a, b);
}

/// Three corrupted training videos; the fused maps should beat the corrupted
/// rough maps on the labeled frames they were trained on.
fn corrupted_fixture(
    variant: Variant,
) -> (
    Vec<VideoSequence>,
    Vec<PrecomputedMaps>,
    FusionWeights,
    PipelineConfig,
) {
    let videos: Vec<VideoSequence> = (0..3)
        .map(|i| generate(&noise_free(40 + i, 4 + i as usize)).unwrap())
        .collect();
    let roughs: Vec<PrecomputedMaps> = videos
        .iter()
        .enumerate()
        .map(|(i, v)| corrupted(v, 0.3, 40 + i as u64))
        .collect();
    let mut cfg = PipelineConfig {
        variant,
        ..PipelineConfig::indoor()
    };
    cfg.flow.subpixel_refine = false;
    cfg.train.learning_rate = 1.0;
    let pairs: Vec<(&VideoSequence, &dyn FrameParser)> = videos
        .iter()
        .zip(&roughs)
        .map(|(v, r)| (v, r as &dyn FrameParser))
        .collect();
    let examples = fusion_examples(&pairs, &cfg).unwrap();
    let (w, log_a, log_b) = train_fusion_stages(&examples, &cfg).unwrap();
    assert!(log_a.best_loss() <= log_a.initial_loss());
    assert!(log_b.best_loss() <= log_a.best_loss());
    (videos, roughs, w, cfg)
}

#[test]
fn trained_fusion_beats_the_corrupted_rough_maps() {
    for variant in [Variant::LongShort, Variant::LongShortConf] {
        let (videos, roughs, w, cfg) = corrupted_fixture(variant);
        let (mut fused, mut rough) = (0.0, 0.0);
        for (v, r) in videos.iter().zip(&roughs) {
            let t = v.labeled_index();
            let out = parse_video_with(v, r, &w, &cfg).unwrap();
            fused += accuracy(&out.labels[t], v.labeled());
            rough += accuracy(&r.maps()[t].argmax(), v.labeled());
        }
        assert!(fused > rough, "{variant}: fused {fused} vs rough {rough}");
    }
}

#[test]
fn trained_weights_favour_the_current_block() {
    let (_, _, w, _) = corrupted_fixture(Variant::LongShortConf);
    let table = export_weights(&w);
    let favoured = table
        .summaries
        .iter()
        .filter(|blocks| blocks[2].max_weight >= blocks[0].max_weight)
        .count();
    assert!(
        favoured * 2 > table.classes,
        "{favoured} of {}",
        table.classes
    );
}

#[test]
fn static_video_with_pass_through_reproduces_the_rough_parse() {
    let mut synth = SynthConfig {
        noise_sigma: 0.0,
        ..SynthConfig::default()
    };
    for s in &mut synth.sprites {
        s.velocity = [0.0, 0.0];
    }
    let seq = generate(&synth).unwrap();
    let rough = corrupted(&seq, 0.4, 9);
    let w = FusionWeights::pass_through(3, 50.0);
    for variant in [Variant::LongShortConf, Variant::Long, Variant::ShortConf] {
        let mut cfg = PipelineConfig {
            variant,
            ..PipelineConfig::indoor()
        };
        cfg.flow.subpixel_refine = false;
        let out = parse_video_with(&seq, &rough, &w, &cfg).unwrap();
        for (t, labels) in out.labels.iter().enumerate() {
            assert_eq!(labels, &rough.maps()[t].argmax(), "{variant} frame {t}");
        }
        for d in out.diagnostics.iter().filter(|d| !d.fallback) {
            if variant.uses_confidence() {
                assert_eq!(d.long_confidence_mean.unwrap_or(1.0), 1.0, "{d:?}");
                assert_eq!(d.short_confidence_mean.unwrap_or(1.0), 1.0, "{d:?}");
            }
        }
    }
}

#[test]
fn identical_frames_have_zero_integer_flow() {
    let seq = generate(&SynthConfig::default()).unwrap();
    let cfg = FlowConfig {
        subpixel_refine: false,
        ..FlowConfig::default()
    };
    let f = estimate_flow(&seq.frames()[2], &seq.frames()[2], &cfg).unwrap();
    assert_eq!(f, FlowField::zeros(64, 64).unwrap());
}

#[test]
fn ground_truth_flow_reconstructs_sprite_pixels() {
    for noise in [0.0f32, 0.01] {
        let mut synth = SynthConfig::random(48, 48, 5, 4, 2, 3);
        synth.noise_sigma = noise;
        let seq = generate(&synth).unwrap();
        let labels = seq.gt_labels().unwrap();
        for t in 1..seq.len() {
            let flow = seq.gt_flow_back(t, 1).unwrap();
            let warped = seq.frames()[t - 1].warp(&flow).unwrap();
            let (mut err, mut n) = (0.0f64, 0usize);
            for y in 0..48 {
                for x in 0..48 {
                    let label = labels[t].get(x, y);
                    let [dx, dy] = flow.at(x, y);
                    let (sx, sy) = (x as f32 + dx, y as f32 + dy);
                    if label == 0 || !(0.0..47.0).contains(&sx) || !(0.0..47.0).contains(&sy) {
                        continue;
                    }
                    // skip pixels that were hidden by another sprite one frame back
                    if labels[t - 1].get(sx as usize, sy as usize) != label {
                        continue;
                    }
                    let (a, b) = (seq.frames()[t].pixel(x, y), warped.pixel(x, y));
                    for c in 0..3 {
                        let d = (a[c] - b[c]).abs();
                        if noise == 0.0 {
                            assert!(d < 1e-6, "t {t} ({x},{y}) diff {d}");
                        }
                        err += d as f64;
                        n += 1;
                    }
                }
            }
            assert!(n > 0);
            assert!(err / n as f64 <= 3.0 * noise as f64 + 1e-6);
        }
    }
}

#[test]
fn pixels_of_one_sprite_share_one_flow_vector() {
    let synth = SynthConfig::random(48, 48, 4, 4, 2, 17);
    let seq = generate(&synth).unwrap();
    for (labels, flow) in seq.gt_labels().unwrap().iter().zip(seq.gt_flows().unwrap()) {
        let mut seen = std::collections::HashMap::new();
        for y in 0..48 {
            for x in 0..48 {
                let v = flow.at(x, y);
                let first = seen.entry(labels.get(x, y)).or_insert(v);
                assert_eq!(*first, v);
            }
        }
        assert_eq!(seen.get(&0).copied().unwrap_or([0.0, 0.0]), [0.0, 0.0]);
    }
}

#[test]
fn parser_is_invariant_to_affine_intensity_changes() {
    let seq = generate(&SynthConfig::default()).unwrap();
    let img = &seq.frames()[seq.labeled_index()];
    let dim = Image::from_fn(img.width(), img.height(), |x, y| {
        let p = img.pixel(x, y);
        [0.5 * p[0] + 0.2, 0.5 * p[1] + 0.2, 0.5 * p[2] + 0.2]
    })
    .unwrap();
    let cfg = TrainConfig {
        learning_rate: 0.5,
        epochs: 60,
        ..TrainConfig::default()
    };
    let (m1, log1) = train_parser_frames(&[(img, seq.labeled())], 3, &cfg).unwrap();
    let (m2, log2) = train_parser_frames(&[(&dim, seq.labeled())], 3, &cfg).unwrap();
    assert!((log1.best_loss() - log2.best_loss()).abs() < 1e-5);
    let (p1, p2) = (parse_frame(&m1, img), parse_frame(&m2, &dim));
    for p in p1.grid().pixels().chain(p2.grid().pixels()) {
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
    assert_eq!(p1.argmax(), p2.argmax());
}
