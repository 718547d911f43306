mod common;

use common::{ramp_video, rng};
use cuenet_core::exec::with_threads;
use cuenet_core::fusion::argmax;
use cuenet_core::global::global_uniblock_trace;
use cuenet_core::model::forward::prepare_input;
use cuenet_core::uniblock::local_uniblock_forward;
use cuenet_core::{
    classify, extract_class_token, forward, forward_traced, fuse, init_weights, model::backbone_forward, AttentionKind,
    BBox, DetectionSequence, ModelConfig, ModelParams, Precision, WeightContainer,
};

fn small(global: AttentionKind) -> ModelConfig {
    ModelConfig { frames: 4, height: 32, width: 32, dim: 16, heads: 2, global_attention: global, ..ModelConfig::desk() }
}

fn setup(cfg: &ModelConfig) -> (ModelParams, cuenet_core::Tensor, DetectionSequence) {
    let params = ModelParams::from_container(&init_weights(cfg).unwrap(), cfg).unwrap();
    let x = ramp_video(cfg.frames, 48, 40, cfg.channels);
    let mut r = rng(3);
    let det = common::random_detections(&mut r, cfg.frames, 48, 40, 3);
    (params, x, det)
}

#[test]
fn forward_equals_staged_composition() {
    for kind in AttentionKind::ALL {
        let cfg = small(kind);
        let (p, x, det) = setup(&cfg);
        let (_, input) = prepare_input(&x, &det, &cfg).unwrap();
        let mut v = backbone_forward(&input, &p.backbone).unwrap();
        for block in &p.local {
            v = local_uniblock_forward(&v, block).unwrap();
        }
        let g = global_uniblock_trace(&v, &p.global).unwrap();
        let z = fuse(&g.v6, &extract_class_token(&v), &p.fusion.beta).unwrap();
        let logits = classify(&z, &p.fusion).unwrap();
        let got = forward(&x, &det, &p, &cfg).unwrap();
        assert_eq!(got, logits, "{kind}");
        let trace = forward_traced(&x, &det, &p, &cfg).unwrap();
        assert_eq!(argmax(trace.logits.data()), argmax(logits.data()));
    }
}

#[test]
fn single_person_video_is_not_cropped() {
    let cfg = small(AttentionKind::Meaa);
    let (p, x, _) = setup(&cfg);
    let lone = DetectionSequence::new(vec![vec![BBox::new(3., 4., 20., 30.)]; cfg.frames], (48, 40)).unwrap();
    let none = DetectionSequence::empty(cfg.frames, (48, 40));
    assert_eq!(forward(&x, &lone, &p, &cfg).unwrap(), forward(&x, &none, &p, &cfg).unwrap());
}

#[test]
fn thread_count_does_not_change_logits() {
    let cfg = small(AttentionKind::SelfAttention);
    let (p, x, det) = setup(&cfg);
    let seq = forward(&x, &det, &p, &cfg).unwrap();
    for threads in [2, 4] {
        let par = with_threads(threads, || forward(&x, &det, &p, &cfg).unwrap());
        assert_eq!(par, seq);
    }
}

#[test]
fn weights_survive_a_file_round_trip() {
    let cfg = small(AttentionKind::EaaOriginal);
    let w = init_weights(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("w.cwc");
    w.save(&path).unwrap();
    let back = WeightContainer::load(&path).unwrap();
    assert_eq!(back, w);
    let again = dir.path().join("w2.cwc");
    back.save(&again).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), std::fs::read(&again).unwrap());
}

#[test]
fn single_precision_weights_widen_for_a_double_model() {
    let cfg = small(AttentionKind::Meaa);
    let single = ModelConfig { precision: Precision::Single, ..cfg.clone() };
    let w = init_weights(&single).unwrap().into_precision(Precision::Double).unwrap();
    assert!(w.widened());
    let p = ModelParams::from_container(&w, &cfg).unwrap();
    let (_, x, det) = setup(&cfg);
    let logits = forward(&x, &det, &p, &cfg).unwrap();
    assert!(logits.data().iter().all(|v| v.is_finite()));
    assert!(init_weights(&cfg).unwrap().into_precision(Precision::Single).is_err());
}

#[test]
fn single_precision_tracks_double() {
    let cfg = small(AttentionKind::Meaa);
    let (p, x, det) = setup(&cfg);
    let d = forward(&x, &det, &p, &cfg).unwrap();
    let scfg = ModelConfig { precision: Precision::Single, ..cfg.clone() };
    let sp = ModelParams::from_container(&init_weights(&scfg).unwrap(), &scfg).unwrap();
    let s = forward(&x, &det, &sp, &scfg).unwrap();
    assert!(s.data().iter().all(|v| *v == (*v as f32) as f64));
    assert!(d.max_abs_diff(&s) < 1e-3, "{:?} vs {:?}", d.data(), s.data());
}

#[test]
fn documented_shapes_at_minimal_geometry() {
    let cfg = ModelConfig { frames: 2, height: 16, width: 16, dim: 8, heads: 2, ..ModelConfig::desk() };
    let p = ModelParams::from_container(&init_weights(&cfg).unwrap(), &cfg).unwrap();
    let x = ramp_video(2, 16, 16, 3);
    let t = forward_traced(&x, &DetectionSequence::empty(2, (16, 16)), &p, &cfg).unwrap();
    assert_eq!(t.v0.shape(), [1, 2, 8]);
    assert_eq!(t.v3().shape(), [1, 2, 8]);
    assert_eq!(t.v5.shape(), [1, 8]);
    assert_eq!(t.logits.shape(), [2]);
}
