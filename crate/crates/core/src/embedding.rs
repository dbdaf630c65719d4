//! Sign scans of (‖x‖^{-p})^∧ over direction grids deciding L_{-p} embedding.

use crate::bodies::StarBody;
use crate::error::{Error, Result};
use crate::fourier::{
    ft_derivative_route, ft_fractional_route, pairing_oracle, primary_route, FtSample, Route, DEFAULT_SIGMA,
};
use crate::frames::{DirectionGrid, Reduction};
use crate::quadrature::{Estimate, Rule};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conclusion {
    NonnegativeUpToTol,
    NegativityWitness,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RouteAgreement {
    pub primary: FtSample,
    pub confirm: FtSample,
    pub agree: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EmbeddingVerdict {
    pub body: String,
    pub p: f64,
    pub grid: GridRef,
    pub min_value: f64,
    pub min_stderr: f64,
    pub argmin: Vec<f64>,
    pub conclusion: Conclusion,
    pub agreement: RouteAgreement,
    pub samples: Vec<FtSample>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridRef {
    pub dim: usize,
    pub resolution: usize,
    pub reduction: Reduction,
    pub points: usize,
}

impl GridRef {
    fn of(grid: &DirectionGrid) -> Self {
        Self {
            dim: grid.dim,
            resolution: grid.resolution,
            reduction: grid.reduction,
            points: grid.len(),
        }
    }
}

/// Rules for the grid sweep and for the confirming pairing evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRules {
    pub sweep: Rule,
    pub confirm: Rule,
    pub sigma: f64,
    /// Relative slack added to the 5-stderr agreement test, for deterministic rules.
    pub rel_slack: f64,
}

impl ScanRules {
    pub fn new(sweep: Rule, confirm: Rule) -> Self {
        Self {
            sweep,
            confirm,
            sigma: DEFAULT_SIGMA,
            rel_slack: 2e-3,
        }
    }

    pub fn doubled(&self) -> Self {
        Self {
            sweep: self.sweep.doubled(),
            confirm: self.confirm.doubled(),
            ..self.clone()
        }
    }
}

/// Primary-route value at one direction; noisy finite differences are kept with their error.
pub fn ft_primary(body: &StarBody, xi: &[f64], p: f64, rule: &Rule) -> Result<FtSample> {
    let n = body.n();
    let sample = match primary_route(n, p) {
        Route::Derivative { m } => ft_derivative_route(body, xi, m, rule),
        Route::Fractional { q } => ft_fractional_route(body, xi, q, rule),
        Route::Pairing => {
            return Err(Error::UnsupportedRoute(format!(
                "exponent p = {p} is reachable only by the pairing oracle in dimension {}",
                2 * n
            )))
        }
    };
    match sample {
        Err(Error::NoisyEstimate(est)) => {
            let m = match primary_route(n, p) {
                Route::Derivative { m } => m,
                _ => unreachable!("only finite differences report noise"),
            };
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            let est = est.scale(sign * 4.0 * std::f64::consts::PI * (n - m - 1) as f64);
            Ok(FtSample {
                xi: xi.to_vec(),
                p,
                value: est.value,
                stderr: est.stderr,
                nodes: est.nodes,
                method: crate::fourier::FtMethod::Derivative,
                inconclusive: true,
            })
        }
        other => other,
    }
}

fn agree(a: &FtSample, b: &FtSample, slack: f64) -> bool {
    a.estimate().agrees(&b.estimate(), 5.0, slack)
}

/// Evaluates the transform over the grid, confirms the extremal value by the pairing oracle,
/// and issues a verdict.
pub fn scan(body: &StarBody, p: f64, grid: &DirectionGrid, rules: &ScanRules) -> Result<EmbeddingVerdict> {
    if grid.dim != body.dim() {
        return Err(Error::Domain(format!(
            "grid dimension {} does not match body dimension {}",
            grid.dim,
            body.dim()
        )));
    }
    if grid.is_empty() {
        return Err(Error::Domain("empty direction grid".into()));
    }
    let samples: Vec<FtSample> = grid
        .points
        .iter()
        .map(|xi| ft_primary(body, xi, p, &rules.sweep))
        .collect::<Result<_>>()?;
    let (imin, low) = samples
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .expect("nonempty grid");
    let confirm = pairing_oracle(body, &low.xi, p, rules.sigma, &rules.confirm)?;
    let agrees = agree(low, &confirm, rules.rel_slack);
    let all_nonneg = samples.iter().all(|s| s.value >= -3.0 * s.stderr);
    let negative = low.value < -3.0 * low.stderr && !low.inconclusive;
    let (conclusion, diagnostics) = if !agrees {
        (
            Conclusion::Inconclusive,
            Some(format!(
                "routes disagree at the minimum: {} ± {} by {:?} against {} ± {} by pairing",
                low.value, low.stderr, low.method, confirm.value, confirm.stderr
            )),
        )
    } else if negative && confirm.value < -3.0 * confirm.stderr {
        (Conclusion::NegativityWitness, None)
    } else if all_nonneg {
        (Conclusion::NonnegativeUpToTol, None)
    } else {
        (
            Conclusion::Inconclusive,
            Some("minimum is neither clearly negative nor within 3 stderr of zero".into()),
        )
    };
    Ok(EmbeddingVerdict {
        body: body.spec(),
        p,
        grid: GridRef::of(grid),
        min_value: low.value,
        min_stderr: low.stderr,
        argmin: grid.points[imin].clone(),
        conclusion,
        agreement: RouteAgreement {
            primary: low.clone(),
            confirm,
            agree: agrees,
        },
        samples,
        diagnostics,
    })
}

/// Scans every exponent; inconclusive entries are kept.
pub fn embedding_interval(
    body: &StarBody,
    p_list: &[f64],
    grid: &DirectionGrid,
    rules: &ScanRules,
) -> Result<Vec<(f64, EmbeddingVerdict)>> {
    p_list.iter().map(|&p| Ok((p, scan(body, p, grid, rules)?))).collect()
}

/// Minimum of the primary-route values with its error, for regression baselines.
pub fn witness_estimate(v: &EmbeddingVerdict) -> Estimate {
    v.agreement.primary.estimate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::make_grid;

    #[test]
    fn ball_is_nonnegative() {
        let b = StarBody::ball(6).unwrap();
        let grid = make_grid(6, 8, Reduction::Orbit, 0).unwrap();
        let rules = ScanRules::new(Rule::gauss(6), Rule::gauss(12));
        let v = scan(&b, 2.0, &grid, &rules).unwrap();
        assert_eq!(v.conclusion, Conclusion::NonnegativeUpToTol, "{:?}", v.diagnostics);
        assert!((v.min_value - 16.0 * std::f64::consts::PI.powi(3)).abs() < 0.01 * v.min_value);
    }

    #[test]
    fn unreachable_exponent_is_rejected() {
        let b = StarBody::ball(8).unwrap();
        let grid = make_grid(8, 8, Reduction::Orbit, 0).unwrap();
        let rules = ScanRules::new(Rule::qmc(1024, 0), Rule::qmc(1024, 0));
        assert!(matches!(scan(&b, 7.0, &grid, &rules), Err(Error::UnsupportedRoute(_))));
    }

    #[test]
    fn grid_dimension_must_match() {
        let b = StarBody::ball(6).unwrap();
        let grid = make_grid(4, 8, Reduction::Orbit, 0).unwrap();
        let rules = ScanRules::new(Rule::gauss(4), Rule::gauss(4));
        assert!(scan(&b, 2.0, &grid, &rules).is_err());
    }
}
