//! Central-difference checks of the analytic gradients.
//!
//! Each parameter group is compared as a whole: the error is
//! `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`, and a group whose
//! gradients are both exactly zero passes trivially.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::attention::meaa::{meaa, meaa_grad, MeaaParams};
use crate::error::{Error, Result};
use crate::fusion::{classify, classify_grad, fuse, fuse_grad_beta, FusionParams};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradModule {
    Meaa,
    Fuse,
    Classify,
}

impl GradModule {
    pub const ALL: [GradModule; 3] = [GradModule::Meaa, GradModule::Fuse, GradModule::Classify];

    pub fn as_str(self) -> &'static str {
        match self {
            GradModule::Meaa => "meaa",
            GradModule::Fuse => "fuse",
            GradModule::Classify => "classify",
        }
    }
}

impl fmt::Display for GradModule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GradModule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        GradModule::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown gradient module `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub name: &'static str,
    pub rel_error: f64,
    pub passed: bool,
    /// Set when a non-finite value showed up.
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub module: GradModule,
    pub instance: u64,
    pub eps: f64,
    pub tol: f64,
    pub groups: Vec<GroupResult>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn worst(&self) -> f64 {
        self.groups.iter().map(|g| g.rel_error).fold(0.0, f64::max)
    }
}

/// `∂f/∂x_i ≈ (f(x + eps·e_i) − f(x − eps·e_i)) / 2eps` for every `i`.
pub fn central_differences(x: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + eps;
            let up = f(&probe);
            probe[i] = x[i] - eps;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * eps)
        })
        .collect()
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, b)| a - b));
    let scale = norm(&mut analytic.iter().copied()).max(norm(&mut numeric.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

fn compare(name: &'static str, analytic: &[f64], numeric: &[f64], tol: f64) -> GroupResult {
    if let Some(bad) = analytic.iter().chain(numeric).find(|v| !v.is_finite()) {
        return GroupResult {
            name,
            rel_error: f64::INFINITY,
            passed: false,
            diagnostic: Some(format!("non-finite gradient value {bad}")),
        };
    }
    let rel_error = relative_error(analytic, numeric);
    GroupResult { name, rel_error, passed: rel_error <= tol, diagnostic: None }
}

fn rt(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_f64(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("valid shape")
}

fn with_data(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::from_f64(t.shape(), data.to_vec()).expect("same shape")
}

fn objective(out: &Tensor, upstream: &Tensor) -> f64 {
    out.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum()
}

/// Random single-query attention instance: query, tokens, parameters, upstream.
pub fn meaa_instance(seed: u64, d: usize, n: usize) -> (Tensor, Tensor, MeaaParams, Tensor) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = MeaaParams {
        query: rt(&mut rng, &[1, d]),
        wq: rt(&mut rng, &[d, d]),
        wk: rt(&mut rng, &[d, d]),
        w_a: rt(&mut rng, &[d]),
        w1: rt(&mut rng, &[d, d]),
        b1: rt(&mut rng, &[d]),
        w2: rt(&mut rng, &[d, d]),
        b2: rt(&mut rng, &[d]),
    };
    let q = rt(&mut rng, &[1, d]);
    let x = rt(&mut rng, &[n, d]);
    let u = rt(&mut rng, &[1, d]);
    (q, x, p, u)
}

/// Check every gradient of the single-query attention at one instance.
pub fn check_meaa(q: &Tensor, x: &Tensor, p: &MeaaParams, u: &Tensor, eps: f64, tol: f64) -> Result<Vec<GroupResult>> {
    let g = meaa_grad(q, x, p, u)?;
    let eval =
        |q: &Tensor, x: &Tensor, p: &MeaaParams| -> f64 { meaa(q, x, p).map(|o| objective(&o, u)).unwrap_or(f64::NAN) };
    let mut out = Vec::new();
    let num = central_differences(q.data(), eps, |v| eval(&with_data(q, v), x, p));
    out.push(compare("q", g.query.data(), &num, tol));
    let num = central_differences(x.data(), eps, |v| eval(q, &with_data(x, v), p));
    out.push(compare("tokens", g.tokens.data(), &num, tol));

    type Field = fn(&mut MeaaParams) -> &mut Tensor;
    let fields: [(&'static str, Field, &Tensor); 7] = [
        ("wq", |p| &mut p.wq, &g.wq),
        ("wk", |p| &mut p.wk, &g.wk),
        ("w_a", |p| &mut p.w_a, &g.w_a),
        ("w1", |p| &mut p.w1, &g.w1),
        ("b1", |p| &mut p.b1, &g.b1),
        ("w2", |p| &mut p.w2, &g.w2),
        ("b2", |p| &mut p.b2, &g.b2),
    ];
    for (name, field, analytic) in fields {
        let mut work = p.clone();
        let base = field(&mut work).data().to_vec();
        let num = central_differences(&base, eps, |v| {
            let t = field(&mut work);
            *t = with_data(t, v);
            eval(q, x, &work)
        });
        out.push(compare(name, analytic.data(), &num, tol));
    }
    Ok(out)
}

/// Check the gate gradient of the fusion at one instance.
pub fn check_fuse(
    v6: &Tensor,
    v3c: &Tensor,
    beta: &Tensor,
    u: &Tensor,
    eps: f64,
    tol: f64,
) -> Result<Vec<GroupResult>> {
    let g = fuse_grad_beta(v6, v3c, beta, u)?;
    let num = central_differences(beta.data(), eps, |b| {
        fuse(v6, v3c, &with_data(beta, b)).map(|z| objective(&z, u)).unwrap_or(f64::NAN)
    });
    Ok(vec![compare("beta", g.data(), &num, tol)])
}

/// Check the projection and bias gradients of the classifier at one instance.
pub fn check_classify(z: &Tensor, p: &FusionParams, u: &Tensor, eps: f64, tol: f64) -> Result<Vec<GroupResult>> {
    let (dproj, dbias) = classify_grad(z, p, u)?;
    let eval = |p: &FusionParams| classify(z, p).map(|l| objective(&l, u)).unwrap_or(f64::NAN);
    let num =
        central_differences(p.proj.data(), eps, |v| eval(&FusionParams { proj: with_data(&p.proj, v), ..p.clone() }));
    let proj = compare("proj", dproj.data(), &num, tol);
    let num =
        central_differences(p.bias.data(), eps, |v| eval(&FusionParams { bias: with_data(&p.bias, v), ..p.clone() }));
    Ok(vec![proj, compare("bias", dbias.data(), &num, tol)])
}

/// One randomized check of `module`. The attention instance uses `d = 6`,
/// `n = 4`; the head uses `d = 6` and two classes.
pub fn grad_check(module: GradModule, instance: u64, eps: f64, tol: f64) -> Result<GradCheckReport> {
    if !(eps > 0.0 && tol > 0.0) {
        return Err(Error::param("grad_check", "eps and tol must be positive"));
    }
    let d = 6;
    let groups = match module {
        GradModule::Meaa => {
            let (q, x, p, u) = meaa_instance(instance, d, 4);
            check_meaa(&q, &x, &p, &u, eps, tol)?
        }
        GradModule::Fuse => {
            let mut rng = ChaCha8Rng::seed_from_u64(instance ^ 0xf05e);
            let (v6, v3c, beta, u) =
                (rt(&mut rng, &[1, d]), rt(&mut rng, &[1, d]), rt(&mut rng, &[1, d]), rt(&mut rng, &[1, d]));
            check_fuse(&v6, &v3c, &beta, &u, eps, tol)?
        }
        GradModule::Classify => {
            let mut rng = ChaCha8Rng::seed_from_u64(instance ^ 0xc1a5);
            let p = FusionParams { beta: rt(&mut rng, &[1, d]), proj: rt(&mut rng, &[d, 2]), bias: rt(&mut rng, &[2]) };
            let (z, u) = (rt(&mut rng, &[1, d]), rt(&mut rng, &[2]));
            check_classify(&z, &p, &u, eps, tol)?
        }
    };
    Ok(GradCheckReport { module, instance, eps, tol, groups })
}

/// `instances` checks of every module, seeds `seed..seed + instances`.
pub fn grad_suite(instances: u64, seed: u64, eps: f64, tol: f64) -> Result<Vec<GradCheckReport>> {
    let mut out = Vec::new();
    for module in GradModule::ALL {
        for i in 0..instances {
            out.push(grad_check(module, seed + i, eps, tol)?);
        }
    }
    Ok(out)
}

/// Plain-text summary: one line per module and group with the worst error.
pub fn suite_to_text(reports: &[GradCheckReport]) -> String {
    let mut s = String::from("# cuenet gradcheck report v1\nmodule,group,instances,worst_rel_error,status\n");
    for module in GradModule::ALL {
        let rs: Vec<&GradCheckReport> = reports.iter().filter(|r| r.module == module).collect();
        let Some(first) = rs.first() else { continue };
        for (gi, g) in first.groups.iter().enumerate() {
            let worst = rs.iter().map(|r| r.groups[gi].rel_error).fold(0.0, f64::max);
            let ok = rs.iter().all(|r| r.groups[gi].passed);
            let _ = writeln!(s, "{module},{},{},{worst:.3e},{}", g.name, rs.len(), if ok { "ok" } else { "FAIL" });
            for r in &rs {
                if let Some(diag) = &r.groups[gi].diagnostic {
                    let _ = writeln!(s, "# {module}.{} instance {}: {diag}", g.name, r.instance);
                }
            }
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn differences_of_a_quadratic_are_exact_enough() {
        let g = central_differences(&[1.0, -2.0], 1e-5, |v| v[0] * v[0] + 3.0 * v[1]);
        assert!((g[0] - 2.0).abs() < 1e-9 && (g[1] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn relative_error_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert!((relative_error(&[1.0, 0.0], &[0.0, 0.0]) - 1.0).abs() < 1e-15);
        assert!(relative_error(&[1.0, 2.0], &[1.0, 2.0 + 1e-9]) < 1e-9);
    }

    #[test]
    fn non_finite_is_a_diagnostic_failure() {
        let r = compare("x", &[f64::NAN], &[1.0], 1e-4);
        assert!(!r.passed && r.diagnostic.is_some());
    }

    #[test]
    fn fuse_beta_matches_to_1e6() {
        for i in 0..5 {
            let r = grad_check(GradModule::Fuse, i, DEFAULT_EPS, 1e-6).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }

    #[test]
    fn meaa_groups_pass_on_20_instances() {
        for i in 0..20 {
            let r = grad_check(GradModule::Meaa, i, DEFAULT_EPS, DEFAULT_TOL).unwrap();
            assert_eq!(r.groups.len(), 9);
            assert!(r.passed(), "instance {i}: {r:?}");
        }
    }

    #[test]
    fn zero_upstream_zero_everywhere() {
        let (q, x, p, u) = meaa_instance(3, 6, 4);
        let zero = Tensor::zeros(u.shape(), u.precision()).unwrap();
        for g in check_meaa(&q, &x, &p, &zero, DEFAULT_EPS, DEFAULT_TOL).unwrap() {
            assert_eq!(g.rel_error, 0.0, "{}", g.name);
        }
    }

    #[test]
    fn module_names_parse() {
        for m in GradModule::ALL {
            assert_eq!(m.as_str().parse::<GradModule>().unwrap(), m);
        }
        assert!("attention".parse::<GradModule>().is_err());
    }
}
