//! Input files for driving the binary.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cuenet_core::io::encode_tensor;
use cuenet_core::{BBox, DetectionSequence, Tensor};

pub const TWO_PERSON: &str =
    "{\"frame\":0,\"boxes\":[[10,10,20,20],[50,60,70,80]]}\n{\"frame\":1,\"boxes\":[[5,15,12,18]]}\n";

pub fn cuenet() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_cuenet"));
    c.env_remove("CUENET_THREADS");
    c
}

pub fn run(args: &[&str]) -> Output {
    cuenet().args(args).output().expect("binary runs")
}

pub fn video(frames: usize, h: usize, w: usize, c: usize) -> Tensor {
    let data = (0..frames * h * w * c).map(|i| ((i * 29) % 97) as f64 / 97.0).collect();
    Tensor::from_f64(&[frames, h, w, c], data).unwrap()
}

pub fn write_video(dir: &Path, name: &str, t: &Tensor) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, encode_tensor(t)).unwrap();
    p
}

/// Two-person detections on every even frame, one person on odd frames.
pub fn write_detections(dir: &Path, frames: usize, h: usize, w: usize) -> PathBuf {
    let boxes = (0..frames)
        .map(|i| {
            if i % 2 == 0 {
                vec![BBox::new(2., 3., 17., 20.), BBox::new(20., 10., 37., 44.)]
            } else {
                vec![BBox::new(4., 4., 12., 30.)]
            }
        })
        .collect();
    let det = DetectionSequence::new(boxes, (h, w)).unwrap();
    let p = dir.join("det.jsonl");
    std::fs::write(&p, det.to_jsonl()).unwrap();
    p
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
