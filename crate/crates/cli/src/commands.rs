use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use labelprop::dataset::{load_video, manifest_root, write_video};
use labelprop::io::{
    encode_svpp_grid, read_flo, read_fusion_weights, read_image, read_label_map,
    read_parser_model, write_confidence_png, write_flo, write_fusion_weights, write_label_map,
    write_parser_model, write_rgb8_png,
};
use labelprop::metrics::{report_table, table_header};
use labelprop::pipeline::parse_video_with;
use labelprop::render::overlay;
use labelprop::{
    compute_metrics, confusion, estimate_flow, generate, reconstruction_residual,
    residual_to_confidence, train_pipeline, LabelMap, Manifest, TrainLog, Variant, VideoSequence,
};

use crate::config::RunConfig;
use crate::CliError;

const PARSER_FILE: &str = "parser.svpm";
const FUSION_FILE: &str = "fusion.svpw";

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn load_manifest(path: &Path) -> Result<(Manifest, Vec<VideoSequence>), CliError> {
    let manifest = Manifest::read(path).map_err(CliError::at(path))?;
    let root = manifest_root(path);
    let videos = manifest
        .videos
        .iter()
        .map(|v| load_video(&root, v).map_err(CliError::at(path)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((manifest, videos))
}

pub fn synth(config: Option<&Path>, out: &Path) -> Result<(), CliError> {
    let cfg = RunConfig::load(config)?;
    cfg.synth
        .validate()
        .map_err(|e| CliError::usage(format!("[synth] {e}")))?;
    if cfg.dataset.videos == 0 {
        return Err(CliError::usage("[dataset] videos must be positive"));
    }
    create_dir(out)?;
    let mut manifest = Manifest::default();
    for i in 0..cfg.dataset.videos {
        let mut scfg = cfg.synth.clone();
        scfg.seed = scfg.seed.wrapping_add(i as u64);
        scfg.background_seed = scfg.background_seed.wrapping_add(i as u64);
        let seq = generate(&scfg)?;
        let name = format!("video_{i:03}");
        manifest.videos.push(write_video(out, &name, &seq)?);
    }
    write_text(&out.join("manifest.txt"), &manifest.to_text())?;
    println!(
        "wrote {} video(s) of {} frames to {}",
        cfg.dataset.videos,
        cfg.synth.frames,
        out.display()
    );
    Ok(())
}

fn loss_rows(csv: &mut String, stage: &str, log: &TrainLog) {
    let mut best = f64::INFINITY;
    for (epoch, &loss) in log.losses.iter().enumerate() {
        best = best.min(loss);
        writeln!(csv, "{stage},{epoch},{loss:.8},{best:.8}").unwrap();
    }
}

pub fn train(
    manifest: &Path,
    config: Option<&Path>,
    variant: Option<Variant>,
    out: &Path,
) -> Result<(), CliError> {
    let run = RunConfig::load(config)?;
    let mut cfg = run.pipeline()?;
    if let Some(v) = variant {
        cfg.variant = v;
    }
    let (_, videos) = load_manifest(manifest)?;
    let trained = train_pipeline(&videos, &cfg)?;
    create_dir(out)?;
    write_parser_model(&out.join(PARSER_FILE), &trained.parser)?;
    write_fusion_weights(&out.join(FUSION_FILE), &trained.fusion)?;

    let mut csv = String::from("stage,epoch,loss,best_so_far\n");
    if let Some(log) = &trained.log.parser {
        loss_rows(&mut csv, "parser", log);
    }
    loss_rows(&mut csv, "fusion", &trained.log.fusion);
    loss_rows(&mut csv, "fine_tune", &trained.log.fine_tune);
    write_text(&out.join("loss.csv"), &csv)?;

    let mut correct = 0usize;
    let mut total = 0usize;
    for v in &videos {
        let pred = labelprop::parse_frame(&trained.parser, &v.frames()[v.labeled_index()]).argmax();
        correct += pred
            .data()
            .iter()
            .zip(v.labeled().data())
            .filter(|(a, b)| a == b)
            .count();
        total += pred.data().len();
    }
    println!(
        "trained {} classes on {} video(s); parser accuracy on labeled frames {:.4}",
        trained.parser.classes(),
        videos.len(),
        correct as f64 / total as f64
    );
    Ok(())
}

pub fn parse(
    manifest: &Path,
    models: &Path,
    config: Option<&Path>,
    variant: Option<Variant>,
    out: &Path,
) -> Result<(), CliError> {
    let run = RunConfig::load(config)?;
    let mut cfg = run.pipeline()?;
    if let Some(v) = variant {
        cfg.variant = v;
    }
    let parser_path = models.join(PARSER_FILE);
    let fusion_path = models.join(FUSION_FILE);
    let parser = read_parser_model(&parser_path).map_err(CliError::at(&parser_path))?;
    let fusion = read_fusion_weights(&fusion_path).map_err(CliError::at(&fusion_path))?;
    let (manifest, videos) = load_manifest(manifest)?;

    let mut diag = String::from(
        "video,frame,fallback,long_confidence_mean,short_confidence_mean,cache_hits\n",
    );
    let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for (entry, seq) in manifest.videos.iter().zip(&videos) {
        let result = parse_video_with(seq, &parser, &fusion, &cfg)
            .map_err(|e| CliError::from_lib(e).prefixed(&entry.name))?;
        let label_dir = out.join("labels").join(&entry.name);
        let overlay_dir = out.join("overlay").join(&entry.name);
        create_dir(&label_dir)?;
        create_dir(&overlay_dir)?;
        for (t, labels) in result.labels.iter().enumerate() {
            let frame = &seq.frames()[t];
            write_label_map(&label_dir.join(format!("{t:04}.png")), labels)?;
            write_rgb8_png(
                &overlay_dir.join(format!("{t:04}.png")),
                frame.width(),
                frame.height(),
                &overlay(frame, labels)?,
            )?;
        }
        for d in &result.diagnostics {
            writeln!(
                diag,
                "{},{},{},{},{},{}",
                entry.name,
                d.frame,
                u8::from(d.fallback),
                opt(d.long_confidence_mean),
                opt(d.short_confidence_mean),
                d.cache_hits
            )
            .unwrap();
        }
    }
    write_text(&out.join("diagnostics.csv"), &diag)?;
    println!(
        "parsed {} video(s) with variant {} into {}",
        videos.len(),
        cfg.variant,
        out.display()
    );
    Ok(())
}

impl CliError {
    fn prefixed(mut self, what: &str) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

fn is_label_file(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("pgm"))
}

/// Label files under `dir`, as sorted paths relative to it.
fn label_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !dir.is_dir() {
        return Err(CliError::usage(format!("{} is not a directory", dir.display())));
    }
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(dir).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::data(e.to_string()))?;
        if entry.file_type().is_file() && is_label_file(entry.path()) {
            out.push(entry.path().strip_prefix(dir).unwrap().to_path_buf());
        }
    }
    Ok(out)
}

/// Ground-truth file for a prediction: same relative path, either extension.
fn gt_match(gt: &Path, rel: &Path) -> Option<PathBuf> {
    let same = gt.join(rel);
    if same.is_file() {
        return Some(same);
    }
    ["png", "pgm"]
        .iter()
        .map(|ext| gt.join(rel.with_extension(ext)))
        .find(|p| p.is_file())
}

pub struct EvalArgs<'a> {
    pub pred: &'a Path,
    pub gt: &'a Path,
    pub config: Option<&'a Path>,
    pub classes: Option<usize>,
    pub method: &'a str,
    pub exclude_background: bool,
    pub out: Option<&'a Path>,
}

pub fn eval(args: &EvalArgs<'_>) -> Result<(), CliError> {
    let run = RunConfig::load(args.config)?;
    let files = label_files(args.pred)?;
    if files.is_empty() {
        return Err(CliError::usage(format!(
            "no label maps under {}",
            args.pred.display()
        )));
    }
    let mut pairs: Vec<(LabelMap, LabelMap)> = Vec::with_capacity(files.len());
    for rel in &files {
        let pred_path = args.pred.join(rel);
        let gt_path = gt_match(args.gt, rel).ok_or_else(|| {
            CliError::data(format!("no ground truth for {}", rel.display()))
        })?;
        let pred = read_label_map(&pred_path).map_err(CliError::at(&pred_path))?;
        let gt = read_label_map(&gt_path).map_err(CliError::at(&gt_path))?;
        if !pred.same_extent(gt.width(), gt.height()) {
            return Err(CliError::usage(format!(
                "{}: prediction is {}x{}, ground truth is {}x{}",
                rel.display(),
                pred.width(),
                pred.height(),
                gt.width(),
                gt.height()
            )));
        }
        pairs.push((pred, gt));
    }
    let inferred = pairs
        .iter()
        .map(|(p, g)| p.max_label().max(g.max_label()) as usize + 1)
        .max()
        .unwrap_or(1)
        .max(2);
    let k = args.classes.or(run.pipeline.classes).unwrap_or(inferred);
    let mut opts = run.metrics_options();
    if args.exclude_background {
        opts.average_background = false;
    }
    let reports = pairs
        .iter()
        .zip(&files)
        .map(|((p, g), rel)| {
            confusion(p, g, k)
                .and_then(|c| compute_metrics(&c, &opts))
                .map_err(|e| CliError::from_lib(e).prefixed(&rel.display().to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let (_, row) = report_table(args.method, &reports, &opts)?;
    let csv = format!("{}\n{row}\n", table_header(&run.class_names(k)?));
    match args.out {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                create_dir(parent)?;
            }
            write_text(path, &csv)
        }
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

pub fn flow(a: &Path, b: &Path, out: &Path, config: Option<&Path>) -> Result<(), CliError> {
    let run = RunConfig::load(config)?;
    let img_a = read_image(a).map_err(CliError::at(a))?;
    let img_b = read_image(b).map_err(CliError::at(b))?;
    let field = estimate_flow(&img_a, &img_b, &run.flow)?;
    write_flo(out, &field)?;
    Ok(())
}

pub fn confidence(
    a: &Path,
    b: &Path,
    flow: &Path,
    out: &Path,
    raw: Option<&Path>,
) -> Result<(), CliError> {
    let img_a = read_image(a).map_err(CliError::at(a))?;
    let img_b = read_image(b).map_err(CliError::at(b))?;
    let field = read_flo(flow).map_err(CliError::at(flow))?;
    let conf = residual_to_confidence(&reconstruction_residual(&img_a, &img_b, &field)?);
    write_confidence_png(out, &conf)?;
    if let Some(raw) = raw {
        fs::write(raw, encode_svpp_grid(conf.grid()))?;
    }
    println!("mean confidence {:.6}", conf.mean());
    Ok(())
}

pub fn export_weights(model: &Path, out: &Path, config: Option<&Path>) -> Result<(), CliError> {
    let run = RunConfig::load(config)?;
    let w = read_fusion_weights(model).map_err(CliError::at(model))?;
    let table = labelprop::export_weights(&w);
    write_text(out, &table.to_csv(&run.class_names(w.classes())?))
}
