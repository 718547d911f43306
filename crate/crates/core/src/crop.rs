//! Detection-driven spatial cropping.
//!
//! Person boxes from every frame are merged into a single union box. The crop
//! is applied only when some frame holds more than one person; otherwise the
//! whole frame is kept. No temporal cropping is done.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Axis-aligned box in pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        BBox { x_min, y_min, x_max, y_max }
    }

    pub fn full_frame(height: usize, width: usize) -> Self {
        BBox::new(0.0, 0.0, width as f64, height as f64)
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min && self.y_min <= other.y_min && self.x_max >= other.x_max && self.y_max >= other.y_max
    }

    pub fn translate(&self, dx: f64, dy: f64) -> BBox {
        BBox::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    /// Integer pixel window `(x0, y0, x1, y1)`, half-open, rounded outward.
    pub fn pixel_window(&self) -> (usize, usize, usize, usize) {
        let x0 = self.x_min.floor().max(0.0) as usize;
        let y0 = self.y_min.floor().max(0.0) as usize;
        let x1 = (self.x_max.ceil() as usize).max(x0 + 1);
        let y1 = (self.y_max.ceil() as usize).max(y0 + 1);
        (x0, y0, x1, y1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSequence {
    frames: Vec<Vec<BBox>>,
    /// `(height, width)` in pixels.
    source_dims: (usize, usize),
}

impl DetectionSequence {
    /// Boxes are clamped to the frame.
    pub fn new(frames: Vec<Vec<BBox>>, source_dims: (usize, usize)) -> Result<Self> {
        let (h, w) = source_dims;
        let mut frames = frames;
        for (i, f) in frames.iter_mut().enumerate() {
            for b in f.iter_mut() {
                validate_box(b).map_err(|msg| Error::Detections { line: i + 1, msg })?;
                *b = clamp_box(b, h, w);
            }
        }
        Ok(DetectionSequence { frames, source_dims })
    }

    pub fn empty(frame_count: usize, source_dims: (usize, usize)) -> Self {
        DetectionSequence { frames: vec![Vec::new(); frame_count], source_dims }
    }

    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn frames(&self) -> &[Vec<BBox>] {
        &self.frames
    }

    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    pub fn to_jsonl(&self) -> String {
        let mut s = String::new();
        for (i, f) in self.frames.iter().enumerate() {
            let line = FrameLine { frame: i, boxes: f.iter().map(BBox::as_array).collect() };
            s.push_str(&serde_json::to_string(&line).expect("serializable"));
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CropDecision {
    pub applied: bool,
    #[serde(rename = "box")]
    pub box_: BBox,
    pub max_people: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameLine {
    frame: usize,
    boxes: Vec<[f64; 4]>,
}

fn validate_box(b: &BBox) -> std::result::Result<(), String> {
    if b.as_array().iter().any(|v| !v.is_finite()) {
        return Err(format!("non-finite box {:?}", b.as_array()));
    }
    if b.x_min > b.x_max || b.y_min > b.y_max {
        return Err(format!("malformed box {:?}: min exceeds max", b.as_array()));
    }
    Ok(())
}

fn clamp_box(b: &BBox, height: usize, width: usize) -> BBox {
    let (w, h) = (width as f64, height as f64);
    BBox::new(b.x_min.clamp(0.0, w), b.y_min.clamp(0.0, h), b.x_max.clamp(0.0, w), b.y_max.clamp(0.0, h))
}

/// Parse the JSON Lines detection stream: one `{"frame": i, "boxes": [[x0,y0,x1,y1], ...]}`
/// object per frame, indices `0..T` each exactly once, any order. Blank lines are skipped.
pub fn parse_detections(stream: impl BufRead, dims: (usize, usize)) -> Result<DetectionSequence> {
    let mut seen: Vec<(usize, usize, Vec<BBox>)> = Vec::new();
    for (i, line) in stream.lines().enumerate() {
        let lineno = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: FrameLine =
            serde_json::from_str(&line).map_err(|e| Error::Detections { line: lineno, msg: e.to_string() })?;
        let mut boxes = Vec::with_capacity(parsed.boxes.len());
        for b in parsed.boxes {
            let b = BBox::new(b[0], b[1], b[2], b[3]);
            validate_box(&b).map_err(|msg| Error::Detections { line: lineno, msg })?;
            boxes.push(clamp_box(&b, dims.0, dims.1));
        }
        seen.push((parsed.frame, lineno, boxes));
    }
    let count = seen.len();
    let mut frames: Vec<Option<Vec<BBox>>> = vec![None; count];
    for (frame, lineno, boxes) in seen {
        if frame >= count {
            return Err(Error::Detections {
                line: lineno,
                msg: format!("frame index {frame} out of range for {count} frames (missing index)"),
            });
        }
        if frames[frame].is_some() {
            return Err(Error::Detections { line: lineno, msg: format!("duplicate frame index {frame}") });
        }
        frames[frame] = Some(boxes);
    }
    Ok(DetectionSequence {
        frames: frames.into_iter().map(|f| f.expect("all indices filled")).collect(),
        source_dims: dims,
    })
}

/// Union of every box across all frames, applied when some frame holds more than one person.
pub fn compute_crop_box(d: &DetectionSequence) -> CropDecision {
    let (h, w) = d.source_dims;
    let mut union = BBox::new(f64::INFINITY, f64::INFINITY, 0.0, 0.0);
    let mut max_people = 0;
    for frame in &d.frames {
        for b in frame {
            union.x_min = union.x_min.min(b.x_min);
            union.y_min = union.y_min.min(b.y_min);
            union.x_max = union.x_max.max(b.x_max);
            union.y_max = union.y_max.max(b.y_max);
        }
        max_people = max_people.max(frame.len());
    }
    let applied = max_people > 1;
    CropDecision { applied, box_: if applied { union } else { BBox::full_frame(h, w) }, max_people }
}

/// Cut the crop window out of every frame of a `T×H×W×C` video.
pub fn apply_crop(x: &Tensor, c: &CropDecision) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(Error::dim("apply_crop", x.shape(), &[0, 0, 0, 0]));
    }
    if !c.applied {
        return Ok(x.clone());
    }
    let [t, h, w, ch] = [x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]];
    let b = &c.box_;
    let (x0, y0, x1, y1) = b.pixel_window();
    if b.x_min < 0.0 || b.y_min < 0.0 || x1 > w || y1 > h {
        return Err(Error::Bounds { box_: b.as_array(), height: h, width: w });
    }
    let (cw, chh) = (x1 - x0, y1 - y0);
    let src = x.data();
    let mut out = Vec::with_capacity(t * chh * cw * ch);
    for ti in 0..t {
        for yi in y0..y1 {
            let start = ((ti * h + yi) * w + x0) * ch;
            out.extend_from_slice(&src[start..start + cw * ch]);
        }
    }
    Tensor::new(&[t, chh, cw, ch], out, x.precision())
}

/// A borrowed view of one video frame (`H×W×C`, row-major).
pub struct FrameView<'a> {
    pub index: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: &'a [f64],
}

/// Source of person boxes for a frame. External detectors plug in here; they are
/// expected to drop low-confidence detections before returning.
pub trait DetectorAdapter {
    fn detect(&mut self, frame: &FrameView<'_>) -> Result<Vec<BBox>>;
}

/// Replays a recorded detection sequence.
pub struct FixtureDetector {
    seq: DetectionSequence,
}

impl FixtureDetector {
    pub fn new(seq: DetectionSequence) -> Self {
        FixtureDetector { seq }
    }
}

impl DetectorAdapter for FixtureDetector {
    fn detect(&mut self, frame: &FrameView<'_>) -> Result<Vec<BBox>> {
        self.seq.frames.get(frame.index).cloned().ok_or_else(|| Error::Detections {
            line: frame.index + 1,
            msg: "fixture has no entry for this frame".into(),
        })
    }
}

/// Run a detector over every frame of a `T×H×W×C` video.
pub fn run_detector(det: &mut dyn DetectorAdapter, video: &Tensor) -> Result<DetectionSequence> {
    if video.rank() != 4 {
        return Err(Error::dim("run_detector", video.shape(), &[0, 0, 0, 0]));
    }
    let [t, h, w, c] = [video.shape()[0], video.shape()[1], video.shape()[2], video.shape()[3]];
    let per = h * w * c;
    let mut frames = Vec::with_capacity(t);
    for i in 0..t {
        let view =
            FrameView { index: i, height: h, width: w, channels: c, pixels: &video.data()[i * per..(i + 1) * per] };
        frames.push(det.detect(&view)?);
    }
    DetectionSequence::new(frames, (h, w))
}
