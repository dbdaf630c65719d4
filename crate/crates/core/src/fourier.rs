//! Fourier transforms of ‖x‖^{-p} on the sphere by three independent routes, calibrated
//! harmonic multipliers, and the Parseval and circle-integral identities.

use crate::bodies::StarBody;
use crate::error::{Error, Result};
use crate::frames::{check_unit, make_frame, norm2, DirectionGrid};
use crate::harmonics::HarmonicAtom;
use crate::quadrature::{fractional_radial_batched, gauss_gegenbauer, gauss_legendre, Estimate, Rule};
use crate::sections::{laplacian_at_zero, parallel_sections, section_volume};
use crate::special::{gamma_fn, gaussian_cosine_moment, recip_gamma, sphere_area};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Mutex, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FtMethod {
    Derivative,
    Fractional,
    Pairing,
    Multiplier,
}

/// (‖x‖^{-p})^∧(ξ) with its error estimate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtSample {
    pub xi: Vec<f64>,
    pub p: f64,
    pub value: f64,
    pub stderr: f64,
    pub nodes: usize,
    pub method: FtMethod,
    /// Set when the relative error is too large to trust the sign.
    #[serde(default)]
    pub inconclusive: bool,
}

impl FtSample {
    fn new(xi: &[f64], p: f64, est: &Estimate, method: FtMethod) -> Self {
        Self {
            xi: xi.to_vec(),
            p,
            value: est.value,
            stderr: est.stderr,
            nodes: est.nodes,
            method,
            inconclusive: false,
        }
    }

    pub fn estimate(&self) -> Estimate {
        Estimate {
            value: self.value,
            stderr: self.stderr,
            nodes: self.nodes,
            method: format!("{:?}", self.method).to_lowercase(),
        }
    }
}

fn require_invariant(body: &StarBody, route: &str) -> Result<()> {
    if !body.invariance().is_complex_rotation() {
        return Err(Error::UnsupportedRoute(format!(
            "the {route} route needs a body invariant under complex rotations"
        )));
    }
    Ok(())
}

/// (‖x‖^{-2n+2m+2})^∧(ξ) = (−1)^m·4π(n−m−1)·Δ^m A(0).
pub fn ft_derivative_route(body: &StarBody, xi: &[f64], m: usize, rule: &Rule) -> Result<FtSample> {
    require_invariant(body, "derivative")?;
    let n = body.n();
    if m + 1 >= n {
        return Err(Error::OutOfRange(format!(
            "derivative order m = {m} needs m < n - 1 = {}",
            n - 1
        )));
    }
    let frame = make_frame(xi)?;
    let est = if m == 0 {
        section_volume(body, &frame, rule)?
    } else {
        laplacian_at_zero(body, &frame, m, None, rule)?
    };
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    let c = sign * 4.0 * PI * (n - m - 1) as f64;
    let p = (2 * n - 2 * m - 2) as f64;
    Ok(FtSample::new(xi, p, &est.scale(c), FtMethod::Derivative))
}

/// (‖x‖^{-2n+q+2})^∧(ξ) from the fractional pairing of the parallel section function.
pub fn ft_fractional_route(body: &StarBody, xi: &[f64], q: f64, rule: &Rule) -> Result<FtSample> {
    require_invariant(body, "fractional")?;
    if !(q > 0.0 && q < 2.0) {
        return Err(Error::OutOfRange(format!(
            "fractional order q = {q} must lie in (0, 2); use the derivative route at the endpoints"
        )));
    }
    let frame = make_frame(xi)?;
    let n = body.n();
    let cutoff = body.r_max() * (1.0 + 1e-9);
    let mut batches = 0;
    let radial = fractional_radial_batched(
        |ts| {
            // A(u) only depends on |u|. A single batch is not even in t, and its odd part
            // would be amplified by the t^{-1-q} weight, so each batch averages ±t.
            let offsets: Vec<[f64; 2]> = ts.iter().flat_map(|&t| [[t, 0.0], [-t, 0.0]]).collect();
            let table = parallel_sections(body, &frame, &offsets, rule)?;
            batches = table.rows.len();
            Ok((0..ts.len())
                .map(|i| table.rows.iter().map(|r| 0.5 * (r[2 * i] + r[2 * i + 1])).collect())
                .collect())
        },
        rule_batches(rule, 2 * n - 2)?,
        q,
        cutoff,
        1e-6,
    )?;
    debug_assert_eq!(radial.len(), batches);
    let c = 2f64.powf(q + 1.0) * gamma_fn((q + 2.0) / 2.0) * (2.0 * n as f64 - q - 2.0);
    let per_batch: Vec<f64> = radial
        .iter()
        .map(|d| c * recip_gamma(-q / 2.0) * 2.0 * PI * d)
        .collect();
    let nodes = rule.on(2 * n - 2)?.node_count();
    let est = Estimate::from_batches(&per_batch, nodes, "fractional");
    let p = 2.0 * n as f64 - q - 2.0;
    Ok(FtSample::new(xi, p, &est, FtMethod::Fractional))
}

fn rule_batches(rule: &Rule, dim: usize) -> Result<usize> {
    Ok(rule.on(dim)?.batches())
}

/// Which single route evaluates exponent p in R^{2n}.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "route")]
pub enum Route {
    Derivative { m: usize },
    Fractional { q: f64 },
    Pairing,
}

pub fn primary_route(n: usize, p: f64) -> Route {
    let m = (2.0 * n as f64 - 2.0 - p) / 2.0;
    if m >= 0.0 && m == m.round() && (m as usize) + 1 < n {
        return Route::Derivative { m: m as usize };
    }
    let q = 2.0 * n as f64 - p - 2.0;
    if q > 0.0 && q < 2.0 {
        Route::Fractional { q }
    } else {
        Route::Pairing
    }
}

/// Evaluates (‖x‖^{-p})^∧(ξ) by the primary route for p, falling back to the pairing oracle.
pub fn ft_auto(body: &StarBody, xi: &[f64], p: f64, rule: &Rule) -> Result<FtSample> {
    match primary_route(body.n(), p) {
        Route::Derivative { m } if body.invariance().is_complex_rotation() => ft_derivative_route(body, xi, m, rule),
        Route::Fractional { q } if body.invariance().is_complex_rotation() => ft_fractional_route(body, xi, q, rule),
        _ => pairing_oracle(body, xi, p, DEFAULT_SIGMA, rule),
    }
}

pub const DEFAULT_SIGMA: f64 = 0.05;
const POLAR_GL: usize = 20;

/// Richardson weights over the widths {σ, σ/2}.
const TWO_LEVEL: [(f64, f64); 2] = [(-1.0 / 3.0, 1.0), (4.0 / 3.0, 0.5)];
/// Richardson weights over the widths {σ, σ/2, σ/4}.
const THREE_LEVEL: [(f64, f64); 3] = [(1.0 / 45.0, 1.0), (-20.0 / 45.0, 0.5), (64.0 / 45.0, 0.25)];

/// Polar abscissae (cos φ, sin φ) and weights of the Richardson-combined bump kernel
/// ∫_0^π h(φ)·sin^{d-2}φ·σ^{-a}J_a(t cos φ/σ) dφ.
struct PolarKernel {
    points: Vec<(f64, f64)>,
    weights: Vec<f64>,
}

fn polar_kernel(dim: usize, a: f64, sigma: f64, t: f64, levels: &[(f64, f64)]) -> PolarKernel {
    let (x, w) = &*gauss_legendre(POLAR_GL);
    let mut points = Vec::new();
    let mut weights = Vec::new();
    for &(coef, frac) in levels {
        let s = sigma * frac;
        let width = s / t;
        let mut breaks = vec![0.0];
        let mut b = 0.25 * width;
        while b < 0.5 * PI {
            breaks.push(b);
            b *= 2.0;
        }
        breaks.push(0.5 * PI);
        for side in [-1.0, 1.0] {
            for pair in breaks.windows(2) {
                let (lo, hi) = (pair[0], pair[1]);
                let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                for (xk, wk) in x.iter().zip(w) {
                    let phi = 0.5 * PI + side * (c + h * xk);
                    let (sn, cs) = phi.sin_cos();
                    let kern = s.powf(-a) * gaussian_cosine_moment(a, t * cs / s);
                    points.push((cs, sn));
                    weights.push(coef * h * wk * sn.powi(dim as i32 - 2) * kern);
                }
            }
        }
    }
    PolarKernel { points, weights }
}

/// Estimates the transform at ξ (any nonzero vector) of h(x/|x|)|x|^{-p}, where `line`
/// fills h(cos φ·ξ/|ξ| + sin φ·ω) for unit ω ⊥ ξ at the kernel's polar points.
fn pairing_core<F>(xi: &[f64], p: f64, sigma: f64, rule: &Rule, line: F) -> Result<Estimate>
where
    F: Fn(&[f64], &[f64], &[(f64, f64)], &mut [f64]) + Sync,
{
    let dim = xi.len();
    if dim < 4 || !dim.is_multiple_of(2) {
        return Err(Error::Domain(format!(
            "direction must have even dimension >= 4, got {dim}"
        )));
    }
    if !(p > 0.0 && p < dim as f64) {
        return Err(Error::OutOfRange(format!("exponent p = {p} must lie in (0, {dim})")));
    }
    if !(sigma > 0.0 && sigma <= 0.2) {
        return Err(Error::OutOfRange(format!(
            "bump width must lie in (0, 0.2], got {sigma}"
        )));
    }
    let t = norm2(xi);
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain("direction must be nonzero".into()));
    }
    let u: Vec<f64> = xi.iter().map(|v| v / t).collect();
    let frame = make_frame(&u)?;
    let mut basis = vec![frame.xi_perp.clone()];
    basis.extend(frame.basis.iter().cloned());
    let kernel = polar_kernel(dim, dim as f64 - p, sigma, t, &TWO_LEVEL);
    let sr = rule.on(dim - 1)?;
    let k = kernel.points.len();
    let table = sr.integrate_with(
        1,
        || (vec![0.0; dim], vec![0.0; k]),
        |(omega, vals), c, out| {
            omega.iter_mut().for_each(|v| *v = 0.0);
            for (ci, b) in c.iter().zip(&basis) {
                omega.iter_mut().zip(b).for_each(|(o, bi)| *o += ci * bi);
            }
            line(&u, omega, &kernel.points, vals);
            out[0] = crate::reduce::kahan_reduce(vals.iter().zip(&kernel.weights).map(|(h, w)| h * w));
        },
    )?;
    Ok(table.estimate(0))
}

/// (‖x‖^{-p})^∧(ξ) by pairing with an even Gaussian bump pair at ±ξ, extrapolated in the width.
pub fn pairing_oracle(body: &StarBody, xi: &[f64], p: f64, sigma: f64, rule: &Rule) -> Result<FtSample> {
    if xi.len() != body.dim() {
        return Err(Error::Domain("direction dimension does not match the body".into()));
    }
    let est = pairing_core(xi, p, sigma, rule, |u, omega, pts, out| {
        let mut span = body.span(&[u, omega]);
        for (o, &(c, s)) in out.iter_mut().zip(pts) {
            *o = span.eval(&[c, s]).powf(-p);
        }
    })?;
    let mut s = FtSample::new(xi, p, &est, FtMethod::Pairing);
    s.inconclusive = est.stderr > 0.1 * est.value.abs();
    Ok(s)
}

/// Transform at ξ of P(x/|x|)|x|^{-p} for a harmonic atom P.
pub fn pairing_oracle_atom(atom: &HarmonicAtom, xi: &[f64], p: f64, sigma: f64, rule: &Rule) -> Result<Estimate> {
    let j = atom.degree;
    // P restricted to a great circle is a trigonometric polynomial of degree j; sample it at
    // 2j + 1 equispaced angles and interpolate.
    let nodes = 2 * j + 1;
    let angles: Vec<f64> = (0..nodes).map(|i| 2.0 * PI * i as f64 / nodes as f64).collect();
    let interp = OnceLock::<Vec<f64>>::new();
    pairing_core(xi, p, sigma, rule, |u, omega, pts, out| {
        let weights = interp.get_or_init(|| {
            pts.iter()
                .flat_map(|&(c, s)| {
                    let phi = s.atan2(c);
                    angles
                        .iter()
                        .map(move |&a| dirichlet(phi - a, nodes))
                        .collect::<Vec<_>>()
                })
                .collect()
        });
        let mut x = vec![0.0; u.len()];
        let samples: Vec<f64> = angles
            .iter()
            .map(|a| {
                let (s, c) = a.sin_cos();
                x.iter_mut()
                    .zip(u.iter().zip(omega))
                    .for_each(|(xv, (uv, ov))| *xv = c * uv + s * ov);
                atom.eval(&x)
            })
            .collect();
        for (o, row) in out.iter_mut().zip(weights.chunks(nodes)) {
            *o = row.iter().zip(&samples).map(|(w, v)| w * v).sum();
        }
    })
}

/// Lagrange basis of trigonometric interpolation on an odd number of equispaced nodes.
fn dirichlet(x: f64, nodes: usize) -> f64 {
    let s = (0.5 * x).sin();
    if s.abs() < 1e-14 {
        return 1.0;
    }
    (0.5 * nodes as f64 * x).sin() / (nodes as f64 * s)
}

type MultiplierKey = (usize, u64, usize);

fn multiplier_cache() -> &'static Mutex<HashMap<MultiplierKey, f64>> {
    static CACHE: OnceLock<Mutex<HashMap<MultiplierKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(Default::default)
}

/// λ with (P_j(x/|x|)|x|^{-p})^∧ = λ·P_j(y/|y|)|y|^{-2n+p}, calibrated once by the bump pairing.
pub fn multiplier(j: usize, p: f64, n: usize) -> Result<f64> {
    let key = (j, p.to_bits(), n);
    if let Some(&v) = multiplier_cache().lock().expect("multiplier cache").get(&key) {
        return Ok(v);
    }
    let est = calibrate_multiplier(j, p, n)?;
    let rel = est.stderr / est.value.abs();
    if !(rel <= 0.05) {
        return Err(Error::Calibration { degree: j, rel });
    }
    let mut cache = multiplier_cache().lock().expect("multiplier cache");
    Ok(*cache.entry(key).or_insert(est.value))
}

/// Uncached multiplier. The pairing of a degree-j harmonic with the bump kernel reduces to one
/// polar integral against the normalized Gegenbauer polynomial (Funk–Hecke), so no atom or
/// direction needs to be sampled. The error is the gap between two- and three-width extrapolation.
pub fn calibrate_multiplier(j: usize, p: f64, n: usize) -> Result<Estimate> {
    if !j.is_multiple_of(2) || j > 8 {
        return Err(Error::OutOfRange(format!(
            "harmonic degree must be even and at most 8, got {j}"
        )));
    }
    if !(2..=8).contains(&n) {
        return Err(Error::Domain(format!("n must be in [2, 8], got {n}")));
    }
    let d = 2 * n;
    if !(p > 0.0 && p < d as f64) {
        return Err(Error::OutOfRange(format!("exponent p = {p} must lie in (0, {d})")));
    }
    let ratio = |levels: &[(f64, f64)]| {
        let k = polar_kernel(d, d as f64 - p, DEFAULT_SIGMA, 1.0, levels);
        let s: f64 = crate::reduce::kahan_reduce(
            k.points
                .iter()
                .zip(&k.weights)
                .map(|(&(c, _), w)| w * gegenbauer_normalized(j, (d as f64 - 2.0) / 2.0, c)),
        );
        s * sphere_area(d - 1)
    };
    let fine = ratio(&THREE_LEVEL);
    let coarse = ratio(&TWO_LEVEL);
    Ok(Estimate {
        value: fine,
        stderr: (fine - coarse).abs(),
        nodes: 0,
        method: "funk_hecke_pairing".into(),
    })
}

/// C_j^α(t)/C_j^α(1).
fn gegenbauer_normalized(j: usize, alpha: f64, t: f64) -> f64 {
    let run = |t: f64| {
        let (mut prev, mut cur) = (1.0, 2.0 * alpha * t);
        if j == 0 {
            return 1.0;
        }
        for k in 1..j {
            let kf = k as f64;
            let next = (2.0 * t * (kf + alpha) * cur - (kf + 2.0 * alpha - 1.0) * prev) / (kf + 1.0);
            prev = cur;
            cur = next;
        }
        cur
    };
    run(t) / run(1.0)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParsevalReport {
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub rel_gap: f64,
}

/// ∫_S (‖x‖_K^{-p})^∧(‖x‖_L^{-d+p})^∧ against (2π)^d ∫_S ‖θ‖_K^{-p}‖θ‖_L^{-d+p}.
pub fn parseval_check(k: &StarBody, l: &StarBody, p: f64, grid: &DirectionGrid, rule: &Rule) -> Result<ParsevalReport> {
    let d = k.dim();
    if l.dim() != d || grid.dim != d {
        return Err(Error::Domain("bodies and grid must share the dimension".into()));
    }
    let n = d / 2;
    for (e, body) in [(p, k), (d as f64 - p, l)] {
        if primary_route(n, e) == Route::Pairing {
            return Err(Error::UnsupportedRoute(format!(
                "exponent {e} is not reachable in dimension {d}"
            )));
        }
        require_invariant(body, "Parseval")?;
    }
    let area = sphere_area(d);
    let mut vals = Vec::with_capacity(grid.len());
    let mut var = 0.0;
    for (xi, w) in grid.points.iter().zip(&grid.weights) {
        let a = ft_auto(k, xi, p, rule)?;
        let b = ft_auto(l, xi, d as f64 - p, rule)?;
        vals.push(w * a.value * b.value);
        var += (w * (a.stderr * b.value.abs() + b.stderr * a.value.abs())).powi(2);
    }
    let lhs = Estimate {
        value: area * crate::reduce::kahan_reduce(vals),
        stderr: area * var.sqrt(),
        nodes: grid.len(),
        method: "direction_grid".into(),
    };
    let c = (2.0 * PI).powi(d as i32);
    let rhs = rule
        .on(d)?
        .integrate(|t| k.norm_unchecked(t).powf(-p) * l.norm_unchecked(t).powf(-(d as f64) + p))?;
    let rhs = rhs.scale(c);
    Ok(ParsevalReport {
        rel_gap: (lhs.value - rhs.value).abs() / rhs.value.abs(),
        lhs,
        rhs,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CircleIdentityReport {
    pub lhs: f64,
    pub rhs: f64,
    pub rel_gap: f64,
}

/// |v|^{-q-2} against Γ(−q/2)/(2Γ((−q−1)/2)√π)·∫_{S¹}|(v,u)|^{-q-2} du for q ∈ (−2, −1).
pub fn sph_identity_check(v: [f64; 2], q: f64, nodes: usize) -> Result<CircleIdentityReport> {
    if !(q > -2.0 && q < -1.0) {
        return Err(Error::OutOfRange(format!("q = {q} must lie in (-2, -1)")));
    }
    let r = v[0].hypot(v[1]);
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::Domain("v must be nonzero and finite".into()));
    }
    if nodes == 0 {
        return Err(Error::Domain("node count must be positive".into()));
    }
    let s = -q - 2.0;
    // (v, u(t)) vanishes at t = α ± π/2; on each arc between zeros substitute
    // t = z + π(1 + x)/2 and absorb the endpoint behaviour into (1 − x²)^s.
    let alpha = v[1].atan2(v[0]);
    let (x, w) = gauss_gegenbauer(nodes, s);
    let mut total = 0.0;
    for z in [alpha - 0.5 * PI, alpha + 0.5 * PI] {
        for (xk, wk) in x.iter().zip(&w) {
            let t = z + 0.5 * PI * (1.0 + xk);
            let inner = (v[0] * t.cos() + v[1] * t.sin()).abs();
            total += wk * 0.5 * PI * (inner / (1.0 - xk * xk)).powf(s);
        }
    }
    let factor = gamma_fn(-q / 2.0) / (2.0 * gamma_fn((-q - 1.0) / 2.0) * PI.sqrt());
    let lhs = r.powf(s);
    let rhs = factor * total;
    Ok(CircleIdentityReport {
        lhs,
        rhs,
        rel_gap: (lhs - rhs).abs() / lhs,
    })
}

/// Checks that ξ is a unit vector of even dimension.
pub fn check_direction(xi: &[f64]) -> Result<()> {
    if !xi.len().is_multiple_of(2) {
        return Err(Error::Domain("direction must have even dimension".into()));
    }
    check_unit(xi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::{build_invariant_harmonics, Family};
    use crate::special::{harmonic_ft_constant, radial_ft_constant};

    fn e1(d: usize) -> Vec<f64> {
        let mut x = vec![0.0; d];
        x[0] = 1.0;
        x
    }

    #[test]
    fn derivative_route_on_balls() {
        let b4 = StarBody::ball(4).unwrap();
        let s = ft_derivative_route(&b4, &e1(4), 0, &Rule::gauss(8)).unwrap();
        assert!((s.value - 4.0 * PI * PI).abs() < 1e-10);
        assert_eq!(s.p, 2.0);
        let b6 = StarBody::ball(6).unwrap();
        let s = ft_derivative_route(&b6, &e1(6), 1, &Rule::gauss(6)).unwrap();
        assert!(
            (s.value - 16.0 * PI.powi(3)).abs() < 1e-3 * 16.0 * PI.powi(3),
            "{}",
            s.value
        );
        assert!(ft_derivative_route(&b4, &e1(4), 1, &Rule::gauss(8)).is_err());
    }

    #[test]
    fn fractional_route_on_ball() {
        let b4 = StarBody::ball(4).unwrap();
        let s = ft_fractional_route(&b4, &e1(4), 1.0, &Rule::gauss(8)).unwrap();
        assert!((s.value - 4.0 * PI * PI).abs() < 1e-4 * 4.0 * PI * PI, "{}", s.value);
        assert!((s.p - 1.0).abs() < 1e-15);
        let b6 = StarBody::ball(6).unwrap();
        let s = ft_fractional_route(&b6, &e1(6), 1.0, &Rule::gauss(6)).unwrap();
        assert!(
            (s.value - 8.0 * PI.powi(3)).abs() < 1e-4 * 8.0 * PI.powi(3),
            "{}",
            s.value
        );
        assert!(ft_fractional_route(&b4, &e1(4), 2.0, &Rule::gauss(8)).is_err());
        assert!(ft_fractional_route(&b4, &e1(4), 0.0, &Rule::gauss(8)).is_err());
    }

    #[test]
    fn pairing_matches_radial_constants() {
        for (d, p, rule) in [
            (4, 2.0, Rule::gauss(12)),
            (4, 1.0, Rule::gauss(12)),
            (6, 3.0, Rule::gauss(12)),
        ] {
            let b = StarBody::ball(d).unwrap();
            let s = pairing_oracle(&b, &e1(d), p, DEFAULT_SIGMA, &rule).unwrap();
            let c = radial_ft_constant(d, p);
            assert!((s.value - c).abs() < 1e-4 * c, "d={d} p={p}: {} vs {c}", s.value);
        }
    }

    #[test]
    fn pairing_homogeneity() {
        let b = StarBody::ball(4).unwrap();
        let p = 1.5;
        let one = pairing_oracle(&b, &e1(4), p, DEFAULT_SIGMA, &Rule::gauss(8)).unwrap();
        let two = pairing_oracle(&b, &[2.0, 0.0, 0.0, 0.0], p, DEFAULT_SIGMA, &Rule::gauss(8)).unwrap();
        let expect = one.value * 2f64.powf(-4.0 + p);
        assert!((two.value - expect).abs() < 1e-4 * expect.abs());
    }

    #[test]
    fn atom_pairing_matches_harmonic_constants() {
        for j in [0, 2, 4] {
            let lambda = calibrate_multiplier(j, 2.0, 2).unwrap().value;
            let c = harmonic_ft_constant(j, 4, 2.0);
            assert!((lambda - c).abs() < 1e-6 * c.abs(), "j={j}: {lambda} vs {c}");
        }
    }

    #[test]
    fn calibrated_multipliers_in_dimension_eight() {
        for j in [0, 2, 4, 6, 8] {
            for p in [2.0, 6.0] {
                let est = calibrate_multiplier(j, p, 4).unwrap();
                let c = harmonic_ft_constant(j, 8, p);
                let rel = (est.value - c).abs() / c.abs();
                assert!(
                    rel < 1e-5,
                    "j={j} p={p}: {} vs {c} ({rel:e}, est {:e})",
                    est.value,
                    est.stderr
                );
            }
        }
    }

    #[test]
    fn sampled_atom_pairing_matches_calibration() {
        let set = build_invariant_harmonics(2, 4, Family::Diagonal).unwrap();
        let atom = set.of_degree(4).next().unwrap();
        let xi = crate::bodies::sphere_samples(4, 1, 3).remove(0);
        let est = pairing_oracle_atom(atom, &xi, 1.5, DEFAULT_SIGMA, &Rule::gauss(16)).unwrap();
        let lambda = calibrate_multiplier(4, 1.5, 2).unwrap().value;
        let expect = lambda * atom.eval(&xi);
        assert!(
            (est.value - expect).abs() < 1e-3 * lambda.abs(),
            "{} vs {expect}",
            est.value
        );
    }

    #[test]
    fn multiplier_is_cached_and_audited() {
        let a = multiplier(0, 2.0, 2).unwrap();
        assert!((a - 4.0 * PI * PI).abs() < 1e-4 * 4.0 * PI * PI);
        assert_eq!(multiplier(0, 2.0, 2).unwrap().to_bits(), a.to_bits());
        let l2 = multiplier(2, 2.0, 2).unwrap();
        assert!(l2 < 0.0);
    }

    #[test]
    fn circle_identity() {
        let r = sph_identity_check([1.0, 0.0], -1.5, 40).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-15);
        assert!(r.rel_gap < 1e-10, "{r:?}");
        let r = sph_identity_check([2.0, 0.0], -1.5, 40).unwrap();
        assert!((r.lhs - 2f64.powf(-0.5)).abs() < 1e-15);
        assert!(r.rel_gap < 1e-10);
        let r = sph_identity_check([1.0, 1.0], -1.2, 40).unwrap();
        assert!(r.rel_gap < 1e-8, "{r:?}");
        assert!(sph_identity_check([1.0, 0.0], -1.0, 40).is_err());
        assert!(sph_identity_check([0.0, 0.0], -1.5, 40).is_err());
    }

    #[test]
    fn routes() {
        assert_eq!(primary_route(4, 2.0), Route::Derivative { m: 2 });
        assert_eq!(primary_route(2, 2.0), Route::Derivative { m: 0 });
        assert_eq!(primary_route(2, 1.0), Route::Fractional { q: 1.0 });
        assert_eq!(primary_route(3, 4.0), Route::Derivative { m: 0 });
        assert_eq!(primary_route(4, 7.0), Route::Pairing);
    }

    #[test]
    fn parseval_for_balls() {
        let b = StarBody::ball(4).unwrap();
        let grid = crate::frames::make_grid(4, 8, crate::frames::Reduction::Orbit, 0).unwrap();
        let r = parseval_check(&b, &b, 2.0, &grid, &Rule::gauss(8)).unwrap();
        assert!(r.rel_gap < 1e-10, "{r:?}");
    }
}
