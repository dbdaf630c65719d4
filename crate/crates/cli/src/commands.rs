//! One function per command: job in, results out.

use crate::config::{Job, RouteChoice};
use crate::report::{direction_header, Baseline, Status, Table};
use cbplab_core::bodies::StarBody;
use cbplab_core::busemann_petty::{bp_construct, bp_verify, BpReport, BpVerdict, ConstructedPair};
use cbplab_core::embedding::{scan, Conclusion, EmbeddingVerdict};
use cbplab_core::fourier::{
    ft_auto, ft_derivative_route, ft_fractional_route, pairing_oracle, primary_route, FtSample, Route,
};
use cbplab_core::frames::{make_frame, GridSpec};
use cbplab_core::quadrature::{Estimate, Rule, RuleKind};
use cbplab_core::sections::{laplacian_at_zero, parallel_section, volume};
use cbplab_core::special::{ball_volume, complex_lq_volume, radial_ft_constant};
use cbplab_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub struct Outcome {
    pub status: Status,
    pub results: Vec<Value>,
    pub baselines: Vec<Baseline>,
}

/// Record for volume and section values.
#[derive(Serialize, Deserialize)]
pub struct ValueRecord {
    pub body: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub value: f64,
    pub stderr: f64,
    pub nodes: usize,
    pub seed: u64,
    /// Set when a finite-difference estimate was too noisy to trust.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub noisy: bool,
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("results serialize")
}

fn tol_for(rule: &Rule) -> f64 {
    if rule.kind == RuleKind::ProductGauss {
        1e-6
    } else {
        5e-3
    }
}

fn seed_of(rule: &Rule) -> u64 {
    if rule.kind == RuleKind::ProductGauss {
        0
    } else {
        rule.seed
    }
}

/// Unit vector from user input; the zero vector is rejected.
pub fn normalize(xi: &[f64]) -> Result<Vec<f64>> {
    let norm = xi.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::Domain("direction must be a nonzero finite vector".into()));
    }
    Ok(xi.iter().map(|x| x / norm).collect())
}

/// Volume closed forms for balls and complex ℓ_q balls, possibly scaled.
fn volume_oracle(spec: &str) -> Option<(String, f64)> {
    let body = StarBody::parse(spec).ok()?;
    if spec.starts_with("ball:") {
        return Some(("unit ball volume".into(), ball_volume(body.dim())));
    }
    if let Some(rest) = spec.strip_prefix("clq:") {
        let q = rest.split(',').find_map(|kv| kv.strip_prefix("q="))?.parse().ok()?;
        return Some(("complex lq ball volume".into(), complex_lq_volume(body.n(), q)));
    }
    None
}

fn is_ball(spec: &str) -> bool {
    spec.starts_with("ball:")
}

pub fn execute(job: &Job) -> Result<Outcome> {
    match job {
        Job::Volume { body, rule } => {
            let b = StarBody::parse(body)?;
            let est = volume(&b, rule)?;
            let mut baselines = Vec::new();
            if let Some((name, v)) = volume_oracle(body) {
                baselines.push(Baseline::new(&name, v, est.value, est.stderr, tol_for(rule)));
            }
            let rec = ValueRecord {
                body: b.spec(),
                xi: None,
                u: None,
                m: None,
                value: est.value,
                stderr: est.stderr,
                nodes: est.nodes,
                seed: seed_of(rule),
                noisy: false,
            };
            Ok(Outcome {
                status: Status::Ok,
                results: vec![to_value(&rec)],
                baselines,
            })
        }
        Job::Section {
            body,
            xi,
            u,
            m,
            step,
            rule,
        } => {
            let b = StarBody::parse(body)?;
            let frame = make_frame(xi)?;
            let (est, noisy) = if *m == 0 {
                (parallel_section(&b, &frame, *u, rule)?, false)
            } else {
                match laplacian_at_zero(&b, &frame, *m, *step, rule) {
                    Ok(e) => (e, false),
                    Err(Error::NoisyEstimate(e)) => (e, true),
                    Err(e) => return Err(e),
                }
            };
            let mut baselines = Vec::new();
            if is_ball(body) {
                // Sections of the unit ball: κ_{d-2}(1 − |u|²)^a with a = (d − 2)/2.
                let k = ball_volume(b.dim() - 2);
                let a = (b.dim() - 2) as f64 / 2.0;
                let r2 = u[0] * u[0] + u[1] * u[1];
                let exact = match m {
                    0 => Some(k * (1.0 - r2).max(0.0).powf(a)),
                    1 => Some(-4.0 * a * k),
                    2 => Some(32.0 * a * (a - 1.0) * k),
                    _ => None,
                };
                if let Some(v) = exact {
                    let tol = if *m == 0 { tol_for(rule) } else { 0.02 };
                    baselines.push(Baseline::new("unit ball section", v, est.value, est.stderr, tol));
                }
            }
            let rec = ValueRecord {
                body: b.spec(),
                xi: Some(xi.clone()),
                u: (*m == 0).then_some(*u),
                m: Some(*m),
                value: est.value,
                stderr: est.stderr,
                nodes: est.nodes,
                seed: seed_of(rule),
                noisy,
            };
            Ok(Outcome {
                status: if noisy { Status::Inconclusive } else { Status::Ok },
                results: vec![to_value(&rec)],
                baselines,
            })
        }
        Job::Ft {
            body,
            xi,
            p,
            route,
            sigma,
            rule,
        } => {
            let b = StarBody::parse(body)?;
            let sample = ft_sample(&b, xi, *p, *route, *sigma, rule)?;
            let mut baselines = Vec::new();
            if is_ball(body) {
                let d = b.dim();
                baselines.push(Baseline::new(
                    "radial transform constant",
                    radial_ft_constant(d, *p),
                    sample.value,
                    sample.stderr,
                    if sample.stderr == 0.0 { 1e-6 } else { 0.02 },
                ));
            }
            Ok(Outcome {
                status: if sample.inconclusive {
                    Status::Inconclusive
                } else {
                    Status::Ok
                },
                results: vec![to_value(&sample)],
                baselines,
            })
        }
        Job::Scan { body, p, grid, rules } => {
            let b = StarBody::parse(body)?;
            let g = grid.build()?;
            let verdicts: Vec<EmbeddingVerdict> = p.iter().map(|&p| scan(&b, p, &g, rules)).collect::<Result<_>>()?;
            let status = if verdicts.iter().any(|v| v.conclusion == Conclusion::Inconclusive) {
                Status::Inconclusive
            } else {
                Status::Ok
            };
            Ok(Outcome {
                status,
                results: verdicts.iter().map(to_value).collect(),
                baselines: Vec::new(),
            })
        }
        Job::BpVerify {
            k,
            l,
            grid,
            rules,
            pair,
        } => {
            let kb = StarBody::parse(k)?;
            let lb = StarBody::parse(l)?;
            let report = bp_verify(&kb, &lb, &grid.build()?, rules)?;
            let mut results = vec![to_value(&report)];
            if let Some(src) = pair {
                let matches = to_value(&report) == src.report;
                results.push(json!({ "pair_config_hash": src.config_hash, "matches_stored_report": matches }));
            }
            Ok(Outcome {
                status: bp_status(&report),
                results,
                baselines: Vec::new(),
            })
        }
        Job::BpConstruct { options } => {
            let pair = bp_construct(options)?;
            Ok(Outcome {
                status: bp_status(&pair.report),
                results: vec![to_value(&pair)],
                baselines: Vec::new(),
            })
        }
    }
}

fn bp_status(r: &BpReport) -> Status {
    if r.verdict == BpVerdict::NotDominated && r.flags.iter().any(|f| f == "tie") {
        Status::Inconclusive
    } else {
        Status::Ok
    }
}

fn ft_sample(b: &StarBody, xi: &[f64], p: f64, route: RouteChoice, sigma: f64, rule: &Rule) -> Result<FtSample> {
    let n = b.n();
    match route {
        RouteChoice::Auto => ft_auto(b, xi, p, rule),
        RouteChoice::Pairing => pairing_oracle(b, xi, p, sigma, rule),
        RouteChoice::Derivative => match primary_route(n, p) {
            Route::Derivative { m } => ft_derivative_route(b, xi, m, rule),
            _ => Err(Error::UnsupportedRoute(format!(
                "p = {p} is not 2n - 2m - 2 with m < n - 1 in dimension {}",
                2 * n
            ))),
        },
        RouteChoice::Fractional => {
            let q = 2.0 * n as f64 - p - 2.0;
            ft_fractional_route(b, xi, q, rule)
        }
    }
}

/// Pair stored in a construction report, or a bare pair.
pub fn load_pair(text: &str) -> Result<(String, ConstructedPair)> {
    let bad = |e: serde_json::Error| Error::Spec {
        token: "--pair".into(),
        reason: e.to_string(),
    };
    let v: Value = serde_json::from_str(text).map_err(bad)?;
    if let Some(results) = v.get("results").and_then(Value::as_array) {
        let hash = v
            .get("config_hash")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let first = results.first().cloned().ok_or_else(|| Error::Spec {
            token: "--pair".into(),
            reason: "report has no results".into(),
        })?;
        let pair: ConstructedPair = serde_json::from_value(first).map_err(bad)?;
        return Ok((hash, pair));
    }
    let pair: ConstructedPair = serde_json::from_value(v).map_err(bad)?;
    Ok((String::new(), pair))
}

fn fmt(x: f64) -> String {
    format!("{x:?}")
}

fn estimate_cells(e: &Estimate) -> [String; 2] {
    [fmt(e.value), fmt(e.stderr)]
}

/// Per-direction CSV projection of a report, where one exists.
pub fn table(job: &Job, results: &[Value]) -> Result<Option<Table>> {
    let decode = |e: serde_json::Error| Error::Domain(format!("report results do not decode: {e}"));
    let bp_table = |grid: &GridSpec, report: &BpReport| -> Result<Table> {
        let g = grid.build()?;
        let rows = g
            .points
            .iter()
            .zip(&report.dominance.gaps)
            .enumerate()
            .map(|(i, (x, gap))| {
                std::iter::once(i.to_string())
                    .chain(x.iter().map(|v| fmt(*v)))
                    .chain(estimate_cells(gap))
                    .collect()
            })
            .collect();
        Ok(Table {
            header: direction_header(g.dim, &["index"], &["gap", "stderr"]),
            rows,
        })
    };
    match job {
        Job::Scan { .. } => {
            let mut rows = Vec::new();
            let mut dim = 0;
            for r in results {
                let v: EmbeddingVerdict = serde_json::from_value(r.clone()).map_err(decode)?;
                dim = v.grid.dim;
                for (i, s) in v.samples.iter().enumerate() {
                    let mut row = vec![fmt(v.p), i.to_string()];
                    row.extend(s.xi.iter().map(|x| fmt(*x)));
                    row.extend([
                        fmt(s.value),
                        fmt(s.stderr),
                        to_value(&s.method).as_str().unwrap_or_default().to_string(),
                        s.inconclusive.to_string(),
                    ]);
                    rows.push(row);
                }
            }
            Ok(Some(Table {
                header: direction_header(dim, &["p", "index"], &["value", "stderr", "method", "inconclusive"]),
                rows,
            }))
        }
        Job::BpVerify { grid, .. } => {
            let r: BpReport = serde_json::from_value(results[0].clone()).map_err(decode)?;
            bp_table(grid, &r).map(Some)
        }
        Job::BpConstruct { options } => {
            let pair: ConstructedPair = serde_json::from_value(results[0].clone()).map_err(decode)?;
            bp_table(&options.grid, &pair.report).map(Some)
        }
        Job::Volume { .. } | Job::Section { .. } | Job::Ft { .. } => {
            let header = vec!["value".to_string(), "stderr".to_string(), "nodes".to_string()];
            let rows = results
                .iter()
                .map(|r| {
                    ["value", "stderr", "nodes"]
                        .iter()
                        .map(|k| r.get(*k).map(|v| v.to_string()).unwrap_or_default())
                        .collect()
                })
                .collect();
            Ok(Some(Table { header, rows }))
        }
    }
}
