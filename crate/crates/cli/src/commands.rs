use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write as _};
use std::path::{Path, PathBuf};

use cuenet_core::analysis::bench::{bench_attention, linear_fit, rows_to_csv};
use cuenet_core::analysis::flops::{count_flops, verify_flops};
use cuenet_core::analysis::gradcheck::{grad_suite, suite_to_text};
use cuenet_core::analysis::memory::{estimate_memory, measure_memory};
use cuenet_core::exec::with_threads;
use cuenet_core::fusion::argmax;
use cuenet_core::io::{encode_tensor, load_tensor};
use cuenet_core::ops::softmax_rows;
use cuenet_core::{
    apply_crop, compute_crop_box, forward, init_weights, meaa, parse_detections, AttentionKind, BBox,
    DetectionSequence, Error, Liveness, MeaaParams, ModelConfig, ModelParams, Precision, Tensor, WeightContainer,
};
use serde_json::json;

use crate::{Cli, Command, KindArg, ModelArgs, PrecisionArg, Preset};

pub const LABELS: [&str; 2] = ["NonViolent", "Violent"];

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Config(String),
    Check(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
            CliError::Check(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Io(_) | Error::TensorFormat(_) | Error::Detections { .. } | Error::Container { .. } => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Config(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

impl From<KindArg> for AttentionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::SelfAttention => AttentionKind::SelfAttention,
            KindArg::Meaa => AttentionKind::Meaa,
            KindArg::Eaa => AttentionKind::EaaOriginal,
        }
    }
}

struct Globals {
    precision: Option<Precision>,
    seed: Option<u64>,
}

pub fn run(cli: Cli) -> Result<()> {
    let threads = cli.threads.max(1);
    let g = Globals {
        precision: cli.precision.map(|p| match p {
            PrecisionArg::F32 => Precision::Single,
            PrecisionArg::F64 => Precision::Double,
        }),
        seed: cli.seed,
    };
    with_threads(threads, move || dispatch(cli.command, &g, threads))
}

fn dispatch(cmd: Command, g: &Globals, threads: usize) -> Result<()> {
    match cmd {
        Command::Crop { video, detections, out, summary } => cmd_crop(&video, &detections, &out, summary.as_deref()),
        Command::Infer { video, detections, weights, model, out } => {
            let cfg = resolve_config(&model, g)?;
            cmd_infer(&video, detections.as_deref(), weights.as_deref(), &cfg, out.as_deref())
        }
        Command::Bench { kind, sweep, dim, heads, reps, min_r2, min_ratio, out } => {
            let rows = bench_attention(kind.into(), &sweep, dim, heads, reps, threads, g.seed.unwrap_or(0))
                .map_err(|e| CliError::Config(e.to_string()))?;
            emit(out.as_deref(), rows_to_csv(&rows).as_bytes())?;
            if let Some(r) = rows.iter().find(|r| !r.checksum.is_finite()) {
                return Err(CliError::Check(format!("non-finite output at n={}", r.n)));
            }
            let xs: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
            let ys: Vec<f64> = rows.iter().map(|r| r.median_ns).collect();
            if let Some(min) = min_r2 {
                let (_, _, r2) = linear_fit(&xs, &ys);
                if r2.is_nan() || r2 < min {
                    return Err(CliError::Check(format!("linear fit R² {r2:.4} below {min}")));
                }
            }
            if let Some(min) = min_ratio {
                if ys.len() < 2 {
                    return Err(CliError::Config("--min-ratio needs at least two sweep points".into()));
                }
                let ratio = ys[ys.len() - 1] / ys[ys.len() - 2];
                if ratio.is_nan() || ratio < min {
                    return Err(CliError::Check(format!("top-of-sweep time ratio {ratio:.3} below {min}")));
                }
            }
            Ok(())
        }
        Command::Flops { model, no_verify, out } => {
            let cfg = resolve_config(&model, g)?;
            let mut text = count_flops(&cfg).to_text();
            let mut failed = None;
            if !no_verify {
                let v = verify_flops(&cfg)?;
                text.push_str(&v.to_text());
                if !v.passed() {
                    failed = Some(v.mismatches.iter().map(|(s, _, _)| s.as_str()).collect::<Vec<_>>().join(", "));
                }
            }
            emit(out.as_deref(), text.as_bytes())?;
            match failed {
                Some(stages) => Err(CliError::Check(format!("analytic and measured counts differ at: {stages}"))),
                None => Ok(()),
            }
        }
        Command::Gradcheck { instances, eps, tol, out } => {
            let reports =
                grad_suite(instances, g.seed.unwrap_or(0), eps, tol).map_err(|e| CliError::Config(e.to_string()))?;
            emit(out.as_deref(), suite_to_text(&reports).as_bytes())?;
            let failing: Vec<String> = reports
                .iter()
                .flat_map(|r| {
                    r.groups
                        .iter()
                        .filter(|x| !x.passed)
                        .map(move |x| format!("{}.{} #{}", r.module, x.name, r.instance))
                })
                .collect();
            if failing.is_empty() {
                Ok(())
            } else {
                Err(CliError::Check(format!("gradient mismatch in {}", failing.join(", "))))
            }
        }
        Command::Selftest => selftest(),
        Command::InitWeights { model, out } => {
            let cfg = resolve_config(&model, g)?;
            write_atomic(&out, &init_weights(&cfg)?.to_bytes())
        }
    }
}

fn resolve_config(m: &ModelArgs, g: &Globals) -> Result<ModelConfig> {
    let mut cfg = match &m.config {
        Some(path) => {
            require(path)?;
            let text =
                std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            ModelConfig::parse(&text)?
        }
        None => match m.preset {
            Preset::Desk => ModelConfig::desk(),
            Preset::Paper => ModelConfig::paper(),
        },
    };
    if let Some(k) = m.attention {
        cfg.global_attention = k.into();
    }
    if let Some(k) = m.local_attention {
        cfg.local_attention = k.into();
    }
    if let Some(p) = g.precision {
        cfg.precision = p;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn require(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{}: no such file", path.display())))
    }
}

fn input_err(path: &Path) -> impl Fn(Error) -> CliError + '_ {
    move |e| match CliError::from(e) {
        CliError::Input(m) => CliError::Input(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn load_video(path: &Path) -> Result<Tensor> {
    require(path)?;
    let v = load_tensor(path).map_err(input_err(path))?;
    if v.rank() != 4 {
        return Err(CliError::Input(format!(
            "{}: expected a T×H×W×C tensor, got shape {:?}",
            path.display(),
            v.shape()
        )));
    }
    Ok(v)
}

fn load_detections(path: &Path, video: &Tensor) -> Result<DetectionSequence> {
    require(path)?;
    let f = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let det = parse_detections(BufReader::new(f), (video.shape()[1], video.shape()[2])).map_err(input_err(path))?;
    if det.frame_count() != video.shape()[0] {
        return Err(CliError::Input(format!(
            "{}: {} frames of detections for a {}-frame video",
            path.display(),
            det.frame_count(),
            video.shape()[0]
        )));
    }
    Ok(det)
}

fn cmd_crop(video: &Path, detections: &Path, out: &Path, summary: Option<&Path>) -> Result<()> {
    let x = load_video(video)?;
    let det = load_detections(detections, &x)?;
    let decision = compute_crop_box(&det);
    let cropped = apply_crop(&x, &decision)?;
    let mut text = serde_json::to_string_pretty(&decision).expect("serializable");
    text.push('\n');
    write_atomic(out, &encode_tensor(&cropped))?;
    emit(summary, text.as_bytes())
}

fn cmd_infer(
    video: &Path,
    detections: Option<&Path>,
    weights: Option<&Path>,
    cfg: &ModelConfig,
    out: Option<&Path>,
) -> Result<()> {
    let x = load_video(video)?;
    let det = match detections {
        Some(p) => load_detections(p, &x)?,
        None => DetectionSequence::empty(x.shape()[0], (x.shape()[1], x.shape()[2])),
    };
    let container = match weights {
        Some(p) => {
            require(p)?;
            WeightContainer::load(p)
                .map_err(input_err(p))?
                .into_precision(cfg.precision)
                .map_err(|e| CliError::Config(e.to_string()))?
        }
        None => init_weights(cfg)?,
    };
    let params = ModelParams::from_container(&container, cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let logits = forward(&x, &det, &params, cfg)?;
    let probs = softmax_rows(&logits.clone().reshape(&[1, logits.numel()])?)?;
    let idx = argmax(logits.data());
    let class = LABELS.get(idx).map(|s| s.to_string()).unwrap_or_else(|| format!("class_{idx}"));
    let doc = json!({
        "logits": logits.data(),
        "probabilities": probs.data(),
        "class": class,
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("serializable");
    text.push('\n');
    emit(out, text.as_bytes())
}

fn selftest() -> Result<()> {
    let mut failures = Vec::new();
    let mut check = |name: &str, ok: bool| {
        println!("{} {name}", if ok { "ok  " } else { "FAIL" });
        if !ok {
            failures.push(name.to_string());
        }
    };

    let one = |v: f64| Tensor::from_f64(&[1, 1], vec![v]).expect("shape");
    let p = MeaaParams {
        query: one(1.0),
        wq: one(1.0),
        wk: one(1.0),
        w_a: Tensor::from_f64(&[1], vec![1.0]).expect("shape"),
        w1: one(1.0),
        b1: Tensor::from_f64(&[1], vec![0.0]).expect("shape"),
        w2: one(1.0),
        b2: Tensor::from_f64(&[1], vec![0.0]).expect("shape"),
    };
    let v5 = meaa(&one(1.0), &one(1.0), &p)?;
    check("meaa unit-scale evaluation", v5.data() == [2.0]);

    let det = DetectionSequence::new(
        vec![vec![BBox::new(10., 10., 20., 20.), BBox::new(50., 60., 70., 80.)], vec![BBox::new(5., 15., 12., 18.)]],
        (100, 100),
    )?;
    let c = compute_crop_box(&det);
    check("two-person crop box", c.applied && c.box_ == BBox::new(5., 10., 70., 80.));

    let v = verify_flops(&ModelConfig::desk())?;
    check("desk flops match instrumented counts", v.passed());

    let reports = grad_suite(2, 0, 1e-5, 1e-4)?;
    check("gradient checks", reports.iter().all(|r| r.passed()));

    let (n, d) = (20, 64);
    let mem_ok = [AttentionKind::Meaa, AttentionKind::EaaOriginal].iter().all(|&k| {
        estimate_memory(k, n, d, 4, Precision::Double, Liveness::Retained)
            .map(|e| e.elements == measure_memory(k, n, d, 4, Liveness::Retained, 0))
            .unwrap_or(false)
    });
    check("memory estimates match instrumented peaks", mem_ok);

    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Check(failures.join(", ")))
    }
}

fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match path {
        Some(p) => write_atomic(p, bytes),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|e| CliError::Input(format!("stdout: {e}")))
        }
    }
}

/// Write through a temporary file in the destination directory, then rename.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let fail = |e: std::io::Error| CliError::Input(format!("{}: {e}", path.display()));
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(fail)?;
    tmp.write_all(bytes).and_then(|_| tmp.as_file().sync_all()).map_err(fail)?;
    tmp.persist(path).map_err(|e| fail(e.error))?;
    Ok(())
}
