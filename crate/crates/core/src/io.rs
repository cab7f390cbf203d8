//! Mask-sequence files and atomic output writing.
//!
//! ```json
//! {"format_version": 1, "video": "v0", "height": 4, "width": 4,
//!  "objects": [{"id": "a", "frames": [{"t": 0, "counts": [0, 16]}]}]}
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::RleMask;
use crate::sequence::MaskSequence;

pub const FORMAT_VERSION: u32 = 1;

fn format_version() -> u32 {
    FORMAT_VERSION
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskFileRecord {
    #[serde(default = "format_version")]
    format_version: u32,
    video: String,
    height: usize,
    width: usize,
    objects: Vec<ObjectRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectRecord {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    width: Option<usize>,
    frames: Vec<FrameRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: usize,
    counts: Vec<u32>,
}

/// All mask sequences of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoMasks {
    pub video: String,
    pub height: usize,
    pub width: usize,
    pub sequences: Vec<MaskSequence>,
}

impl VideoMasks {
    pub fn new(video: impl Into<String>, height: usize, width: usize) -> Self {
        Self {
            video: video.into(),
            height,
            width,
            sequences: Vec::new(),
        }
    }

    pub fn find(&self, id: &str) -> Option<&MaskSequence> {
        self.sequences.iter().find(|s| s.object_id() == id)
    }

    /// Parses and validates a mask file. `path` is used for error context only.
    pub fn from_json_str(text: &str, path: &Path) -> Result<Self> {
        let record: MaskFileRecord = serde_json::from_str(text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        if record.format_version != FORMAT_VERSION {
            return Err(Error::data(
                path,
                "",
                format!("unsupported format_version {}", record.format_version),
            ));
        }
        if record.height == 0 || record.width == 0 {
            return Err(Error::data(
                path,
                "",
                format!(
                    "invalid video dimensions {}x{}",
                    record.height, record.width
                ),
            ));
        }
        let mut out = VideoMasks::new(record.video, record.height, record.width);
        for (oi, obj) in record.objects.into_iter().enumerate() {
            let (h, w) = (
                obj.height.unwrap_or(out.height),
                obj.width.unwrap_or(out.width),
            );
            if (h, w) != (out.height, out.width) {
                return Err(Error::data(
                    path,
                    &obj.id,
                    format!(
                        "inconsistent dimensions: object declares {h}x{w}, video is {}x{}",
                        out.height, out.width
                    ),
                ));
            }
            if out.find(&obj.id).is_some() {
                return Err(Error::data(path, &obj.id, "duplicate object id"));
            }
            let mut seq = MaskSequence::new(&obj.id, h, w)?;
            let mut last: Option<usize> = None;
            for (fi, frame) in obj.frames.into_iter().enumerate() {
                if last.is_some_and(|l| frame.t <= l) {
                    return Err(Error::data(
                        path,
                        &obj.id,
                        format!(
                            "objects[{oi}].frames[{fi}]: frame index {} is not increasing",
                            frame.t
                        ),
                    ));
                }
                last = Some(frame.t);
                let mask = RleMask::new(h, w, frame.counts).map_err(|e| {
                    Error::data(
                        path,
                        &obj.id,
                        format!("objects[{oi}].frames[{fi}] (t={}): {e}", frame.t),
                    )
                })?;
                seq.insert(frame.t, mask)?;
            }
            out.sequences.push(seq);
        }
        Ok(out)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, path)
    }

    /// Compact JSON with a trailing newline. Every stored frame is written,
    /// including explicitly empty ones.
    pub fn to_json_string(&self) -> String {
        let record = MaskFileRecord {
            format_version: FORMAT_VERSION,
            video: self.video.clone(),
            height: self.height,
            width: self.width,
            objects: self
                .sequences
                .iter()
                .map(|seq| ObjectRecord {
                    id: seq.object_id().to_string(),
                    height: None,
                    width: None,
                    frames: seq
                        .frames()
                        .map(|(t, m)| FrameRecord {
                            t,
                            counts: m.counts().to_vec(),
                        })
                        .collect(),
                })
                .collect(),
        };
        let mut s = serde_json::to_string(&record).expect("mask record serializes");
        s.push('\n');
        s
    }
}

/// Loads one mask file, or every `*.json` file in a directory. Results are
/// sorted by video name; a video name may appear only once.
pub fn load_mask_inputs(path: &Path) -> Result<Vec<(PathBuf, VideoMasks)>> {
    let files = if path.is_dir() {
        let mut files = Vec::new();
        let entries = std::fs::read_dir(path).map_err(|e| Error::io(path, e))?;
        for entry in entries {
            let p = entry.map_err(|e| Error::io(path, e))?.path();
            if p.is_file() && p.extension().is_some_and(|ext| ext == "json") {
                files.push(p);
            }
        }
        files.sort();
        files
    } else {
        vec![path.to_path_buf()]
    };
    let mut videos = Vec::with_capacity(files.len());
    for file in files {
        let v = VideoMasks::load(&file)?;
        videos.push((file, v));
    }
    videos.sort_by(|a, b| a.1.video.cmp(&b.1.video));
    for pair in videos.windows(2) {
        if pair[0].1.video == pair[1].1.video {
            return Err(Error::data(
                &pair[1].0,
                "",
                format!(
                    "video {:?} also defined in {}",
                    pair[1].1.video,
                    pair[0].0.display()
                ),
            ));
        }
    }
    Ok(videos)
}

/// Writes `contents` to a temporary file beside `path`, then renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(contents)
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Writes every `(path, contents)` pair atomically. Contents are fully
/// prepared before the first file is touched.
pub fn write_all_atomic(outputs: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    for (path, bytes) in outputs {
        write_atomic(path, bytes)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<VideoMasks> {
        VideoMasks::from_json_str(text, Path::new("test.json"))
    }

    #[test]
    fn minimal_file() {
        let v = parse(r#"{"video":"v","height":2,"width":2,"objects":[{"id":"a","frames":[{"t":0,"counts":[0,4]}]}]}"#)
            .unwrap();
        assert_eq!(v.sequences.len(), 1);
        assert_eq!(v.sequences[0].mask_at(0).area(), 4);
    }

    #[test]
    fn malformed_counts_name_object() {
        let err = parse(r#"{"video":"v","height":2,"width":2,"objects":[{"id":"cat","frames":[{"t":0,"counts":[1,2]}]}]}"#)
            .unwrap_err();
        let msg = err.to_string();
        assert!(
            msg.contains("test.json") && msg.contains("cat") && msg.contains("malformed rle"),
            "{msg}"
        );
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn inconsistent_object_dims() {
        let err = parse(
            r#"{"video":"v","height":2,"width":2,"objects":[
                {"id":"a","height":2,"width":2,"frames":[]},
                {"id":"b","height":3,"width":2,"frames":[]}]}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("inconsistent dimensions"), "{err}");
        assert!(err.to_string().contains("\"b\""), "{err}");
    }

    #[test]
    fn rejects_non_increasing_frames_and_bad_version() {
        let err = parse(r#"{"video":"v","height":1,"width":1,"objects":[{"id":"a","frames":[{"t":1,"counts":[1]},{"t":1,"counts":[1]}]}]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("not increasing"));
        let err = parse(r#"{"format_version":2,"video":"v","height":1,"width":1,"objects":[]}"#)
            .unwrap_err();
        assert!(err.to_string().contains("format_version"));
        assert!(matches!(parse("{not json"), Err(Error::Json { .. })));
    }

    #[test]
    fn serialize_then_parse() {
        let text = r#"{"format_version":1,"video":"v","height":2,"width":3,"objects":[{"id":"a","frames":[{"t":0,"counts":[1,2,3]},{"t":4,"counts":[6]}]}]}"#;
        let v = parse(text).unwrap();
        assert_eq!(v.to_json_string(), format!("{text}\n"));
        assert_eq!(parse(&v.to_json_string()).unwrap(), v);
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.json");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), b"two");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
