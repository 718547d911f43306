//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#[path = "../../core/tests/common/mod.rs"]
mod common;
mod fixtures;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{brute_union, meaa_loop_oracle, ramp_video, random_detections, random_meaa, rel_err, rng, uniform};
use cuenet_core::analysis::bench::{bench_attention, linear_fit};
use cuenet_core::analysis::flops::{count_flops, verify_flops};
use cuenet_core::analysis::gradcheck::{grad_suite, DEFAULT_EPS, DEFAULT_TOL};
use cuenet_core::analysis::memory::{estimate_memory, measure_memory};
use cuenet_core::{
    apply_crop, compute_crop_box, forward_traced, fuse, init_weights, meaa, AttentionKind, BBox, DetectionSequence,
    Liveness, ModelConfig, ModelParams, Precision,
};
use fixtures::{run, s, video, write_detections, write_video};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn meaa_oracle() -> Outcome {
    let start = Instant::now();
    let mut r = rng(100);
    let mut worst: f64 = 0.0;
    for i in 0..100 {
        let n = r.random_range(1..=64);
        let d = r.random_range(1..=64);
        let (q, x, p) = random_meaa(&mut r, n, d);
        let got = meaa(&q, &x, &p).map_err(|e| e.to_string())?;
        let err = rel_err(got.data(), &meaa_loop_oracle(&q, &x, &p));
        ensure(err <= 1e-12, format!("instance {i} (n={n}, d={d}): relative error {err:.3e}"))?;
        worst = worst.max(err);
    }
    let took = start.elapsed();
    ensure(took < Duration::from_secs(10), format!("took {took:?}"))?;
    Ok(format!("100 instances, worst relative error {worst:.2e}, {took:.2?}"))
}

fn gradients() -> Outcome {
    let reports = grad_suite(20, 0, DEFAULT_EPS, DEFAULT_TOL).map_err(|e| e.to_string())?;
    for r in &reports {
        for g in &r.groups {
            ensure(
                g.passed,
                format!("{}.{} instance {}: relative error {:.3e}", r.module, g.name, r.instance, g.rel_error),
            )?;
        }
    }
    let worst = reports.iter().map(|r| r.worst()).fold(0.0, f64::max);
    Ok(format!("{} checks over 3 modules, worst relative error {worst:.2e}", reports.len()))
}

fn flops_exact() -> Outcome {
    let mut runs = 0;
    for local in AttentionKind::ALL {
        for global in AttentionKind::ALL {
            let cfg = ModelConfig { local_attention: local, global_attention: global, ..ModelConfig::desk() };
            let v = verify_flops(&cfg).map_err(|e| e.to_string())?;
            ensure(v.passed(), format!("local {local}, global {global}: {:?}", v.mismatches))?;
            runs += 1;
        }
    }
    Ok(format!("desk preset, {runs} local/global kind pairs, every stage exact"))
}

fn flops_ordering() -> Outcome {
    let base = ModelConfig::desk();
    let total = |local, global| {
        count_flops(&ModelConfig { local_attention: local, global_attention: global, ..base.clone() }).total()
    };
    let sa_global = total(AttentionKind::SelfAttention, AttentionKind::SelfAttention);
    let meaa_global = total(AttentionKind::SelfAttention, AttentionKind::Meaa);
    let meaa_all = total(AttentionKind::Meaa, AttentionKind::Meaa);
    ensure(meaa_global < sa_global && meaa_all < meaa_global, format!("{meaa_all} / {meaa_global} / {sa_global}"))?;
    Ok(format!("MACs: meaa everywhere {meaa_all} < meaa global {meaa_global} < self-attention global {sa_global}"))
}

fn complexity_law() -> Outcome {
    let start = Instant::now();
    let sweep: Vec<usize> = (10..=15).map(|e| 1 << e).collect();
    let rows = bench_attention(AttentionKind::Meaa, &sweep, 64, 1, 15, 1, 0).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.median_ns).collect();
    let (_, _, r2) = linear_fit(&xs, &ys);

    let sa_sweep: Vec<usize> = (8..=12).map(|e| 1 << e).collect();
    let sa = bench_attention(AttentionKind::SelfAttention, &sa_sweep, 64, 1, 7, 1, 0).map_err(|e| e.to_string())?;
    let ratio = sa[sa.len() - 1].median_ns / sa[sa.len() - 2].median_ns;
    let took = start.elapsed();
    let detail = format!("meaa R² {r2:.4} over n=2^10..2^15, self-attention t(4096)/t(2048) {ratio:.2}, {took:.1?}");
    ensure(r2 >= 0.98, detail.clone())?;
    ensure(ratio >= 3.0, detail.clone())?;
    ensure(took < Duration::from_secs(300), detail.clone())?;
    Ok(detail)
}

fn memory_ordering() -> Outcome {
    for live in [Liveness::Retained, Liveness::ProduceConsume] {
        for d in [1usize, 2, 8, 64, 1024] {
            for n in 2..=4096 {
                let e = |k| {
                    estimate_memory(k, n, d, 1, Precision::Double, live).map(|m| m.elements).map_err(|e| e.to_string())
                };
                let (m, o) = (e(AttentionKind::Meaa)?, e(AttentionKind::EaaOriginal)?);
                ensure(m < o, format!("{live:?} n={n} d={d}: meaa {m} >= eaa {o}"))?;
            }
        }
    }
    let desk = ModelConfig::desk();
    let d = desk.dim;
    let mut checked = Vec::new();
    for n in [desk.spatial_tokens() + 1, desk.global_tokens(), 64, 256] {
        let m = measure_memory(AttentionKind::Meaa, n, d, desk.heads, Liveness::Retained, 1);
        let o = measure_memory(AttentionKind::EaaOriginal, n, d, desk.heads, Liveness::Retained, 1);
        let formula = (n * d + n - d - 1) as u64;
        ensure(o - m == formula, format!("n={n}: measured gap {} != {formula}", o - m))?;
        for (k, got) in [(AttentionKind::Meaa, m), (AttentionKind::EaaOriginal, o)] {
            let est = estimate_memory(k, n, d, desk.heads, Precision::Double, Liveness::Retained)
                .map_err(|e| e.to_string())?;
            ensure(est.elements == got, format!("{k} n={n}: estimate {} != measured {got}", est.elements))?;
        }
        checked.push(n);
    }
    Ok(format!("meaa < eaa for n in 2..=4096, gap nd+n-d-1 matches instrumented peaks at d={d}, n={checked:?}"))
}

fn crop_properties() -> Outcome {
    let mut r = rng(7);
    let mut applied = 0;
    for case in 0..1000 {
        let frames = r.random_range(1..=6);
        let (h, w) = (r.random_range(1..=50), r.random_range(1..=50));
        let people = r.random_range(0..=3);
        let det = random_detections(&mut r, frames, h, w, people);
        let c = compute_crop_box(&det);
        let crowded = det.frames().iter().any(|f| f.len() > 1);
        ensure(c.applied == crowded, format!("case {case}: applied={} but crowded={crowded}", c.applied))?;
        let all: Vec<&BBox> = det.frames().iter().flatten().collect();
        if crowded {
            applied += 1;
            ensure(all.iter().all(|b| c.box_.contains(b)), format!("case {case}: union misses a box"))?;
            let touched = all.iter().any(|b| b.x_min == c.box_.x_min)
                && all.iter().any(|b| b.y_min == c.box_.y_min)
                && all.iter().any(|b| b.x_max == c.box_.x_max)
                && all.iter().any(|b| b.y_max == c.box_.y_max);
            ensure(touched, format!("case {case}: union is not minimal"))?;
            ensure(Some(c.box_) == brute_union(det.frames()), format!("case {case}: differs from brute force"))?;
        } else {
            ensure(c.box_ == BBox::full_frame(h, w), format!("case {case}: identity branch changed the box"))?;
            let x = ramp_video(frames, h, w, 1);
            ensure(
                apply_crop(&x, &c).map_err(|e| e.to_string())? == x,
                format!("case {case}: identity branch changed pixels"),
            )?;
        }
        let shuffled: Vec<Vec<BBox>> = det.frames().iter().rev().map(|f| f.iter().rev().copied().collect()).collect();
        let again = compute_crop_box(&DetectionSequence::new(shuffled, (h, w)).map_err(|e| e.to_string())?);
        ensure(again == c, format!("case {case}: result depends on order"))?;
    }
    let fixture = DetectionSequence::new(
        vec![vec![BBox::new(10., 10., 20., 20.), BBox::new(50., 60., 70., 80.)], vec![BBox::new(5., 15., 12., 18.)]],
        (100, 100),
    )
    .map_err(|e| e.to_string())?;
    let c = compute_crop_box(&fixture);
    ensure(c.applied && c.box_ == BBox::new(5., 10., 70., 80.), format!("fixture gave {c:?}"))?;
    Ok(format!("1000 cases ({applied} cropped), fixture box (5,10,70,80)"))
}

fn infer_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let vp = write_video(dir.path(), "v.ctf", &video(8, 48, 40, 3));
    let det = write_detections(dir.path(), 8, 48, 40);
    let mut outputs = Vec::new();
    for threads in ["1", "1", "1", "2", "4"] {
        let o = run(&["infer", "--video", s(&vp), "--detections", s(&det), "--threads", threads]);
        ensure(o.status.success(), String::from_utf8_lossy(&o.stderr).to_string())?;
        outputs.push((threads, o.stdout));
    }
    for (t, out) in &outputs[1..] {
        ensure(out == &outputs[0].1, format!("output with --threads {t} differs"))?;
    }
    Ok("cuenet infer byte-identical over 3 runs and --threads 1, 2, 4".into())
}

fn shape_contract() -> Outcome {
    let mut r = rng(9);
    let minimal =
        ModelConfig { frames: 2, height: 16, width: 16, dim: 8, heads: 2, local_depth: 1, ..ModelConfig::desk() };
    let mut configs = vec![minimal];
    while configs.len() < 10 {
        let heads = [1, 2, 4][r.random_range(0..3)];
        let kinds = AttentionKind::ALL;
        configs.push(ModelConfig {
            frames: 2 * r.random_range(1..=3),
            height: 16 * r.random_range(1..=3),
            width: 16 * r.random_range(1..=3),
            channels: r.random_range(1..=3),
            dim: heads * r.random_range(1..=6),
            heads,
            local_depth: r.random_range(0..=2),
            lt_kernel: [1, 3, 5][r.random_range(0..3)],
            ffn_ratio: [1.0, 2.0, 4.0][r.random_range(0..3)],
            local_attention: kinds[r.random_range(0..3)],
            global_attention: kinds[r.random_range(0..3)],
            num_classes: r.random_range(2..=4),
            seed: r.random(),
            precision: Precision::Double,
        });
    }
    for (i, cfg) in configs.iter().enumerate() {
        let p = ModelParams::from_container(&init_weights(cfg).map_err(|e| e.to_string())?, cfg)
            .map_err(|e| e.to_string())?;
        let (h, w) = (cfg.height + 8, cfg.width + 4);
        let x = ramp_video(cfg.frames, h, w, cfg.channels);
        let det = random_detections(&mut r, cfg.frames, h, w, 2);
        let t = forward_traced(&x, &det, &p, cfg).map_err(|e| format!("config {i}: {e}"))?;
        let (tf, m, d) = (cfg.frames / 2, cfg.spatial_tokens() + 1, cfg.dim);
        let tokens = [tf, m, d];
        let mut checks: Vec<(&str, Vec<usize>, Vec<usize>)> = vec![
            ("input", t.input.shape().to_vec(), vec![cfg.frames, cfg.height, cfg.width, cfg.channels]),
            ("v0", t.v0.shape().to_vec(), tokens.to_vec()),
            ("v4", t.v4.shape().to_vec(), tokens.to_vec()),
            ("v5", t.v5.shape().to_vec(), vec![1, d]),
            ("v6", t.v6.shape().to_vec(), vec![1, d]),
            ("class_token", t.class_token.shape().to_vec(), vec![1, d]),
            ("z", t.z.shape().to_vec(), vec![1, d]),
            ("logits", t.logits.shape().to_vec(), vec![cfg.num_classes]),
        ];
        for l in &t.local {
            checks.push(("local", l.shape().to_vec(), tokens.to_vec()));
        }
        ensure(t.local.len() == cfg.local_depth, format!("config {i}: {} local outputs", t.local.len()))?;
        for (name, got, want) in checks {
            ensure(got == want, format!("config {i} {name}: {got:?} != {want:?}"))?;
        }
    }
    Ok("10 configs including T=2, H=W=16".into())
}

fn convexity() -> Outcome {
    let mut r = rng(13);
    for case in 0..1000 {
        let d = r.random_range(1..=32);
        let scale = [1e-3, 1.0, 1e3][case % 3];
        let v6 = uniform(&mut r, &[1, d], scale);
        let v3c = uniform(&mut r, &[1, d], scale);
        let beta = uniform(&mut r, &[1, d], 40.0);
        let z = fuse(&v6, &v3c, &beta).map_err(|e| e.to_string())?;
        for j in 0..d {
            let (a, b, zj) = (v6.data()[j], v3c.data()[j], z.data()[j]);
            ensure(a.min(b) <= zj && zj <= a.max(b), format!("case {case} entry {j}: {zj} outside [{a}, {b}]"))?;
        }
    }
    Ok("1000 triples, every entry between its endpoints".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("MEAA matches loop oracle", meaa_oracle),
        ("gradient suite", gradients),
        ("FLOPs exactness", flops_exact),
        ("FLOPs ordering", flops_ordering),
        ("complexity law", complexity_law),
        ("memory ordering and gap", memory_ordering),
        ("crop properties", crop_properties),
        ("end-to-end determinism", infer_determinism),
        ("shape contract", shape_contract),
        ("fusion convexity", convexity),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
