//! Plain-text dataset manifests.
//!
//! ```text
//! # one block per video; paths are relative to the manifest
//! video hall_01
//! frame frames/hall_01/0000.png
//! frame frames/hall_01/0001.png
//! labeled 1 labels/hall_01/0001.png
//! gt 0 gt/hall_01/0000.png
//! flow 0 flow/hall_01/0000.flo
//! ```
//!
//! `frame` lines list frames in order. `labeled` names the single annotated
//! frame. `gt` and `flow` lines are optional full ground truth written by the
//! synthetic generator; when present they must cover every frame.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{invalid, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VideoEntry {
    pub name: String,
    pub frames: Vec<PathBuf>,
    pub labeled_index: usize,
    pub label_path: PathBuf,
    pub gt_labels: Vec<PathBuf>,
    pub gt_flows: Vec<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Manifest {
    pub videos: Vec<VideoEntry>,
}

struct Partial {
    name: String,
    line: usize,
    frames: Vec<PathBuf>,
    labeled: Option<(usize, PathBuf)>,
    gt: Vec<(usize, PathBuf)>,
    flow: Vec<(usize, PathBuf)>,
}

fn indexed(list: Vec<(usize, PathBuf)>, n: usize, what: &str, video: &str) -> Result<Vec<PathBuf>> {
    if list.is_empty() {
        return Ok(Vec::new());
    }
    let mut slots: Vec<Option<PathBuf>> = vec![None; n];
    for (i, p) in list {
        match slots.get_mut(i) {
            Some(s @ None) => *s = Some(p),
            Some(Some(_)) => return Err(invalid(format!("video {video}: duplicate {what} {i}"))),
            None => return Err(invalid(format!("video {video}: {what} index {i} out of range"))),
        }
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(i, s)| s.ok_or_else(|| invalid(format!("video {video}: missing {what} {i}"))))
        .collect()
}

impl Partial {
    fn finish(self) -> Result<VideoEntry> {
        let name = self.name;
        if self.frames.is_empty() {
            return Err(invalid(format!("line {}: video {name} lists no frames", self.line)));
        }
        let (labeled_index, label_path) = self
            .labeled
            .ok_or_else(|| invalid(format!("line {}: video {name} has no labeled frame", self.line)))?;
        if labeled_index >= self.frames.len() {
            return Err(invalid(format!(
                "line {}: video {name}: labeled frame {labeled_index} outside {} frames",
                self.line,
                self.frames.len()
            )));
        }
        let n = self.frames.len();
        Ok(VideoEntry {
            gt_labels: indexed(self.gt, n, "gt", &name)?,
            gt_flows: indexed(self.flow, n, "flow", &name)?,
            name,
            frames: self.frames,
            labeled_index,
            label_path,
        })
    }
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut videos = Vec::new();
        let mut cur: Option<Partial> = None;
        for (no, raw) in text.lines().enumerate() {
            let line_no = no + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let err = |msg: &str| invalid(format!("line {line_no}: {msg}"));
            if key == "video" {
                if rest.is_empty() {
                    return Err(err("video needs a name"));
                }
                if let Some(p) = cur.take() {
                    videos.push(p.finish()?);
                }
                cur = Some(Partial {
                    name: rest.to_string(),
                    line: line_no,
                    frames: Vec::new(),
                    labeled: None,
                    gt: Vec::new(),
                    flow: Vec::new(),
                });
                continue;
            }
            let p = cur
                .as_mut()
                .ok_or_else(|| err("entries must follow a `video` line"))?;
            let indexed_path = || -> Result<(usize, PathBuf)> {
                let (i, path) = rest
                    .split_once(char::is_whitespace)
                    .ok_or_else(|| err("expected `<index> <path>`"))?;
                let i = i.parse().map_err(|_| err("bad frame index"))?;
                Ok((i, PathBuf::from(path.trim())))
            };
            match key {
                "frame" if !rest.is_empty() => p.frames.push(PathBuf::from(rest)),
                "frame" => return Err(err("frame needs a path")),
                "labeled" => {
                    if p.labeled.is_some() {
                        return Err(err("a video has exactly one labeled frame"));
                    }
                    p.labeled = Some(indexed_path()?);
                }
                "gt" => p.gt.push(indexed_path()?),
                "flow" => p.flow.push(indexed_path()?),
                other => return Err(err(&format!("unknown entry {other:?}"))),
            }
        }
        if let Some(p) = cur {
            videos.push(p.finish()?);
        }
        if videos.is_empty() {
            return Err(invalid("manifest lists no videos"));
        }
        Ok(Self { videos })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for v in &self.videos {
            writeln!(s, "video {}", v.name).unwrap();
            for f in &v.frames {
                writeln!(s, "frame {}", f.display()).unwrap();
            }
            writeln!(s, "labeled {} {}", v.labeled_index, v.label_path.display()).unwrap();
            for (i, p) in v.gt_labels.iter().enumerate() {
                writeln!(s, "gt {i} {}", p.display()).unwrap();
            }
            for (i, p) in v.gt_flows.iter().enumerate() {
                writeln!(s, "flow {i} {}", p.display()).unwrap();
            }
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// Directory that manifest-relative paths resolve against.
pub fn manifest_root(manifest_path: &Path) -> PathBuf {
    manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

#[cfg(feature = "png")]
mod disk {
    use std::fs;

    use super::*;
    use crate::grid::LabelMap;
    use crate::io::{read_flo, read_image, read_label_map, write_flo, write_image, write_label_map};
    use crate::pipeline::VideoSequence;

    /// Reads a video's frames and annotations; full ground truth is attached
    /// when the entry lists it.
    pub fn load_video(root: &Path, entry: &VideoEntry) -> Result<VideoSequence> {
        let frames = entry
            .frames
            .iter()
            .map(|p| read_image(&root.join(p)))
            .collect::<Result<Vec<_>>>()?;
        let labeled = read_label_map(&root.join(&entry.label_path))?;
        let seq = VideoSequence::new(frames, entry.labeled_index, labeled)
            .map_err(|e| invalid(format!("video {}: {e}", entry.name)))?;
        if entry.gt_labels.is_empty() || entry.gt_flows.is_empty() {
            return Ok(seq);
        }
        let labels = entry
            .gt_labels
            .iter()
            .map(|p| read_label_map(&root.join(p)))
            .collect::<Result<Vec<LabelMap>>>()?;
        let flows = entry
            .gt_flows
            .iter()
            .map(|p| read_flo(&root.join(p)))
            .collect::<Result<Vec<_>>>()?;
        seq.with_ground_truth(labels, flows)
    }

    /// Writes a video's files as `root/<kind>/<name>/NNNN.*` and returns its
    /// manifest entry. Grouping by kind first lets prediction and ground-truth
    /// trees be paired by relative path.
    pub fn write_video(root: &Path, name: &str, seq: &VideoSequence) -> Result<VideoEntry> {
        let dir = |kind: &str| -> Result<PathBuf> {
            let rel = Path::new(kind).join(name);
            fs::create_dir_all(root.join(&rel))?;
            Ok(rel)
        };
        let frames_dir = dir("frames")?;
        let labels_dir = dir("labels")?;
        let mut entry = VideoEntry {
            name: name.to_string(),
            frames: Vec::new(),
            labeled_index: seq.labeled_index(),
            label_path: labels_dir.join(format!("{:04}.png", seq.labeled_index())),
            gt_labels: Vec::new(),
            gt_flows: Vec::new(),
        };
        for (i, f) in seq.frames().iter().enumerate() {
            let p = frames_dir.join(format!("{i:04}.png"));
            write_image(&root.join(&p), f)?;
            entry.frames.push(p);
        }
        write_label_map(&root.join(&entry.label_path), seq.labeled())?;
        if let (Some(labels), Some(flows)) = (seq.gt_labels(), seq.gt_flows()) {
            let (gt_dir, flow_dir) = (dir("gt")?, dir("flow")?);
            for (i, (l, f)) in labels.iter().zip(flows).enumerate() {
                let lp = gt_dir.join(format!("{i:04}.png"));
                let fp = flow_dir.join(format!("{i:04}.flo"));
                write_label_map(&root.join(&lp), l)?;
                write_flo(&root.join(&fp), f)?;
                entry.gt_labels.push(lp);
                entry.gt_flows.push(fp);
            }
        }
        Ok(entry)
    }
}

#[cfg(feature = "png")]
pub use disk::{load_video, write_video};

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# sample
video a
frame a/0.png
frame a/1.png
labeled 1 a/l1.png

video b b
frame b/0.png
labeled 0 b/l0.pgm
gt 0 b/g0.png
flow 0 b/f0.flo
";

    #[test]
    fn parse_and_print() {
        let m = Manifest::parse(SAMPLE).unwrap();
        assert_eq!(m.videos.len(), 2);
        assert_eq!(m.videos[0].frames.len(), 2);
        assert_eq!(m.videos[0].labeled_index, 1);
        assert_eq!(m.videos[1].name, "b b");
        assert_eq!(m.videos[1].gt_flows, vec![PathBuf::from("b/f0.flo")]);
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
    }

    #[test]
    fn errors_name_the_line() {
        let e = Manifest::parse("frame x.png").unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
        let e = Manifest::parse("video a\nframe x.png\nbogus 1\n").unwrap_err().to_string();
        assert!(e.contains("line 3"), "{e}");
        let e = Manifest::parse("video a\nframe x.png\n").unwrap_err().to_string();
        assert!(e.contains("no labeled frame"), "{e}");
        assert!(Manifest::parse("video a\nframe x\nlabeled 1 l\n").is_err());
        assert!(Manifest::parse("video a\nframe x\nframe y\nlabeled 0 l\ngt 1 g\n").is_err());
        assert!(Manifest::parse("# nothing\n").is_err());
    }
}
