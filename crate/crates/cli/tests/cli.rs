use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use labelprop::io::{read_flo, read_fusion_weights, read_label_map, write_image, write_label_map};
use labelprop::{export_weights, FlowField, Image, LabelMap};
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn labelprop(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelprop"))
        .args(args.iter().map(|a| a.as_ref()))
        .output()
        .expect("binary runs")
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn synth_and_train(dir: &Path, config: &Path) -> (PathBuf, PathBuf, String) {
    let data = dir.join("data");
    let models = dir.join("models");
    ok(labelprop(&[
        &"synth",
        &"--config",
        &config,
        &"--out",
        &data,
    ]));
    let stdout = ok(labelprop(&[
        &"train",
        &"--manifest",
        &data.join("manifest.txt"),
        &"--config",
        &config,
        &"--out",
        &models,
    ]));
    (data, models, stdout)
}

#[test]
fn synth_writes_a_complete_dataset() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    ok(labelprop(&[
        &"synth",
        &"--config",
        &fixture("basic.toml"),
        &"--out",
        &data,
    ]));
    let manifest = fs::read_to_string(data.join("manifest.txt")).unwrap();
    assert_eq!(manifest.matches("video ").count(), 2);
    for kind in ["frames", "gt", "flow"] {
        assert_eq!(
            fs::read_dir(data.join(kind).join("video_001"))
                .unwrap()
                .count(),
            6
        );
    }
    assert!(data.join("labels/video_000/0004.png").is_file());
}

#[test]
fn invalid_sprite_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        "[synth]\nclasses = 3\n[[synth.sprites]]\nshape = \"rectangle\"\nclass = 7\nsize = [4, 4]\nvelocity = [0.0, 0.0]\ncolor = [1.0, 0.0, 0.0]\n",
    )
    .unwrap();
    let out = labelprop(&[&"synth", &"--config", &cfg, &"--out", &dir.path().join("d")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("sprite"));
}

#[test]
fn config_errors_name_the_line() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("typo.toml");
    fs::write(&cfg, "[synth]\nwidth = 16\nwidht = 3\n").unwrap();
    let out = labelprop(&[&"synth", &"--config", &cfg, &"--out", &dir.path().join("d")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn unknown_variant_is_rejected() {
    let out = labelprop(&[
        &"parse",
        &"--manifest",
        &"m",
        &"--models",
        &"x",
        &"--variant",
        &"l+x",
        &"--out",
        &"o",
    ]);
    assert_eq!(code(&out), 2);
}

#[test]
fn manifest_without_labeled_frame_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let manifest = dir.path().join("manifest.txt");
    fs::write(&manifest, "video a\nframe a/0000.png\n").unwrap();
    let out = labelprop(&[
        &"train",
        &"--manifest",
        &manifest,
        &"--out",
        &dir.path().join("m"),
    ]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("labeled"));
}

#[test]
fn static_fixture_trains_to_high_accuracy_and_logs_monotone_best_loss() {
    let dir = TempDir::new().unwrap();
    let (_, models, stdout) = synth_and_train(dir.path(), &fixture("static.toml"));
    let acc: f64 = stdout.rsplit(' ').next().unwrap().trim().parse().unwrap();
    assert!(acc >= 0.99, "{stdout}");

    let csv = fs::read_to_string(models.join("loss.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("stage,epoch,loss,best_so_far"));
    let mut last: Option<(String, f64)> = None;
    let mut stages = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let best: f64 = f[3].parse().unwrap();
        match &last {
            Some((stage, prev)) if stage == f[0] => assert!(best <= *prev, "{line}"),
            _ => stages.push(f[0].to_string()),
        }
        last = Some((f[0].to_string(), best));
    }
    assert_eq!(stages, ["parser", "fusion", "fine_tune"]);
}

#[test]
fn parse_flags_fallback_frames_and_rejects_class_mismatch() {
    let dir = TempDir::new().unwrap();
    let config = fixture("static.toml");
    let (data, models, _) = synth_and_train(dir.path(), &config);
    let manifest = data.join("manifest.txt");
    let out = dir.path().join("parsed");
    ok(labelprop(&[
        &"parse",
        &"--manifest",
        &manifest,
        &"--models",
        &models,
        &"--config",
        &config,
        &"--variant",
        &"l+s",
        &"--out",
        &out,
    ]));
    let diag = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let fallback: Vec<&str> = diag
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap())
        .collect();
    // indoor preset: l = 3, so frames 0..3 fall back
    assert_eq!(fallback, ["1", "1", "1", "0"]);
    assert!(out.join("overlay/video_000/0003.png").is_file());

    let k4 = dir.path().join("k4.toml");
    fs::write(&k4, "[pipeline]\nclasses = 4\n").unwrap();
    let res = labelprop(&[
        &"parse",
        &"--manifest",
        &manifest,
        &"--models",
        &models,
        &"--config",
        &k4,
        &"--out",
        &dir.path().join("p2"),
    ]);
    assert_eq!(code(&res), 2, "{}", String::from_utf8_lossy(&res.stderr));

    // perfect predictions score 1 everywhere
    let report = ok(labelprop(&[
        &"eval",
        &"--pred",
        &data.join("gt"),
        &"--gt",
        &data.join("gt"),
    ]));
    let row = report.lines().nth(1).unwrap();
    assert!(row.starts_with("svp,"));
    assert!(row.split(',').skip(1).all(|v| v == "1.0000"), "{report}");
}

#[test]
fn eval_rejects_mismatched_dimensions() {
    let dir = TempDir::new().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    write_label_map(&pred.join("a.png"), &LabelMap::filled(4, 4, 1).unwrap()).unwrap();
    write_label_map(&gt.join("a.pgm"), &LabelMap::filled(5, 4, 1).unwrap()).unwrap();
    let out = labelprop(&[&"eval", &"--pred", &pred, &"--gt", &gt]);
    assert_eq!(code(&out), 2);
}

#[test]
fn eval_matches_the_library_on_a_hand_counted_fixture() {
    let dir = TempDir::new().unwrap();
    let (pred, gt) = (dir.path().join("pred"), dir.path().join("gt"));
    fs::create_dir_all(&pred).unwrap();
    fs::create_dir_all(&gt).unwrap();
    write_label_map(
        &pred.join("f.png"),
        &LabelMap::new(2, 2, vec![0, 1, 1, 1]).unwrap(),
    )
    .unwrap();
    write_label_map(
        &gt.join("f.png"),
        &LabelMap::new(2, 2, vec![0, 0, 1, 1]).unwrap(),
    )
    .unwrap();
    let csv = dir.path().join("out/m.csv");
    ok(labelprop(&[
        &"eval",
        &"--pred",
        &pred,
        &"--gt",
        &gt,
        &"--method",
        &"fx",
        &"--out",
        &csv,
    ]));
    let text = fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(row[0], "fx");
    assert_eq!(col("accuracy"), "0.7500");
    assert_eq!((col("bk"), col("c1")), ("0.6667", "0.8000"));
}

#[test]
fn identical_images_give_zero_flow_and_full_confidence() {
    let dir = TempDir::new().unwrap();
    let img = Image::from_fn(24, 20, |x, y| {
        let v = labelprop::synth::value_noise(x as f32, y as f32, 4);
        [v, 1.0 - v, 0.5 * v]
    })
    .unwrap();
    let a = dir.path().join("a.png");
    write_image(&a, &img).unwrap();
    let flo = dir.path().join("f.flo");
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[flow]\nsubpixel_refine = false\n").unwrap();
    ok(labelprop(&[&"flow", &a, &a, &flo, &"--config", &cfg]));
    assert_eq!(read_flo(&flo).unwrap(), FlowField::zeros(24, 20).unwrap());

    let png = dir.path().join("c.png");
    let raw = dir.path().join("c.svpp");
    ok(labelprop(&[
        &"confidence",
        &a,
        &a,
        &flo,
        &png,
        &"--raw",
        &raw,
    ]));
    // an 8-bit gray PNG reads back as a label map of raw byte values
    let gray = read_label_map(&png).unwrap();
    assert!(gray.data().iter().all(|&v| v == 255));
    assert!(raw.is_file());
}

#[test]
fn export_matches_the_library_table() {
    let dir = TempDir::new().unwrap();
    let (_, models, _) = synth_and_train(dir.path(), &fixture("static.toml"));
    let csv = dir.path().join("w.csv");
    let model = models.join("fusion.svpw");
    ok(labelprop(&[&"export-weights", &model, &csv]));
    let expected = export_weights(&read_fusion_weights(&model).unwrap()).to_csv(&[
        "bk".into(),
        "c1".into(),
        "c2".into(),
    ]);
    assert_eq!(fs::read_to_string(csv).unwrap(), expected);
}

#[test]
fn unreadable_image_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.png");
    fs::write(&bad, b"not a png").unwrap();
    let out = labelprop(&[&"flow", &bad, &bad, &dir.path().join("o.flo")]);
    assert_eq!(code(&out), 3);
}
