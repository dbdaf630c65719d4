//! Sphere and subsphere quadrature with batch error estimates, Gauss rules,
//! and the singular one-dimensional integral of the fractional pairing.

use crate::error::{spec_err, Error, Result};
use crate::frames::dot;
use crate::reduce::CompensatedSum;
use crate::spec::SpecString;
use crate::special::sphere_area;
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::{Arc, Mutex, OnceLock};

pub const BATCHES: usize = 32;
const CHUNK: usize = 1024;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub nodes: usize,
    pub method: String,
}

impl Estimate {
    pub fn exact(value: f64, method: &str) -> Self {
        Self {
            value,
            stderr: 0.0,
            nodes: 0,
            method: method.to_string(),
        }
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            value: self.value * c,
            stderr: self.stderr * c.abs(),
            ..self.clone()
        }
    }

    /// Mean and standard error of independent batch estimates.
    pub fn from_batches(values: &[f64], nodes: usize, method: &str) -> Self {
        let b = values.len();
        let mean = crate::reduce::kahan_reduce(values.iter().copied()) / b as f64;
        let stderr = if b > 1 {
            let var = crate::reduce::kahan_reduce(values.iter().map(|v| (v - mean) * (v - mean))) / (b - 1) as f64;
            (var / b as f64).sqrt()
        } else {
            0.0
        };
        Self {
            value: mean,
            stderr,
            nodes,
            method: method.to_string(),
        }
    }

    /// Whether |a − b| ≤ k·√(sa² + sb²) + tol·max(|a|, |b|).
    pub fn agrees(&self, other: &Estimate, k: f64, tol: f64) -> bool {
        let se = (self.stderr.powi(2) + other.stderr.powi(2)).sqrt();
        (self.value - other.value).abs() <= k * se + tol * self.value.abs().max(other.value.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    MonteCarlo,
    QuasiMonteCarlo,
    ProductGauss,
}

/// Dimension-free description of a sphere rule.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub kind: RuleKind,
    /// Node count for random rules, polynomial exactness level for Gauss rules.
    pub size: u64,
    pub seed: u64,
}

impl Rule {
    pub fn mc(n: u64, seed: u64) -> Self {
        Self {
            kind: RuleKind::MonteCarlo,
            size: n,
            seed,
        }
    }

    pub fn qmc(n: u64, seed: u64) -> Self {
        Self {
            kind: RuleKind::QuasiMonteCarlo,
            size: n,
            seed,
        }
    }

    pub fn gauss(level: u64) -> Self {
        Self {
            kind: RuleKind::ProductGauss,
            size: level,
            seed: 0,
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let sp = SpecString::parse(s)?;
        let rule = match sp.kind.as_str() {
            "mc" | "qmc" => {
                sp.only(&["n", "seed"])?;
                let n = sp.count("n")?.unwrap_or(1 << 16);
                let seed = sp.count("seed")?.unwrap_or(0);
                if sp.kind == "mc" {
                    Self::mc(n, seed)
                } else {
                    Self::qmc(n, seed)
                }
            }
            "gauss" => {
                sp.only(&["level"])?;
                Self::gauss(sp.count("level")?.unwrap_or(20))
            }
            other => return Err(spec_err(other, "rule kind must be mc, qmc or gauss")),
        };
        rule.validate()?;
        Ok(rule)
    }

    fn validate(&self) -> Result<()> {
        match self.kind {
            RuleKind::ProductGauss => {
                if self.size == 0 || self.size > 400 {
                    return Err(spec_err(
                        format!("level={}", self.size),
                        "gauss level must be in [1, 400]",
                    ));
                }
            }
            _ => {
                if self.size < BATCHES as u64 || self.size > 1 << 28 {
                    return Err(spec_err(format!("n={}", self.size), "node count must be in [32, 2^28]"));
                }
            }
        }
        Ok(())
    }

    pub fn canonical(&self) -> String {
        match self.kind {
            RuleKind::MonteCarlo => format!("mc:n={},seed={}", self.size, self.seed),
            RuleKind::QuasiMonteCarlo => format!("qmc:n={},seed={}", self.size, self.seed),
            RuleKind::ProductGauss => format!("gauss:level={}", self.size),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        self.kind == RuleKind::ProductGauss
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn with_size(&self, size: u64) -> Self {
        Self { size, ..self.clone() }
    }

    /// Same rule with twice as many nodes (one more level for Gauss).
    pub fn doubled(&self) -> Self {
        match self.kind {
            RuleKind::ProductGauss => self.with_size(self.size + 2),
            _ => self.with_size(self.size * 2),
        }
    }

    pub fn on(&self, dim: usize) -> Result<SphereRule> {
        SphereRule::new(dim, self.clone())
    }
}

/// A rule bound to S^{dim-1}.
#[derive(Clone, Debug)]
pub struct SphereRule {
    pub dim: usize,
    pub rule: Rule,
    gauss: Option<Arc<ProductGauss>>,
}

#[derive(Debug)]
struct ProductGauss {
    /// Per polar angle: (cos φ, sin φ, weight).
    polar: Vec<Vec<(f64, f64, f64)>>,
    azimuth: usize,
    total: usize,
}

/// Per-batch integral estimates for a vector-valued integrand.
#[derive(Clone, Debug)]
pub struct BatchTable {
    pub rows: Vec<Vec<f64>>,
    pub nodes: usize,
    pub method: String,
}

impl BatchTable {
    pub fn estimate(&self, col: usize) -> Estimate {
        self.combine(|r| r[col])
    }

    /// Applies `f` to every batch row and summarizes the results.
    pub fn combine(&self, f: impl Fn(&[f64]) -> f64) -> Estimate {
        let vals: Vec<f64> = self.rows.iter().map(|r| f(r)).collect();
        Estimate::from_batches(&vals, self.nodes, &self.method)
    }
}

impl SphereRule {
    pub fn new(dim: usize, rule: Rule) -> Result<Self> {
        rule.validate()?;
        if dim < 2 {
            return Err(Error::Domain(format!("sphere rules need dim >= 2, got {dim}")));
        }
        let gauss = match rule.kind {
            RuleKind::ProductGauss => {
                if dim > 6 {
                    return Err(spec_err(
                        rule.canonical(),
                        format!("product Gauss rules support dim <= 6, got {dim}"),
                    ));
                }
                Some(product_gauss(dim, rule.size as usize))
            }
            _ => None,
        };
        Ok(Self { dim, rule, gauss })
    }

    pub fn batches(&self) -> usize {
        if self.gauss.is_some() {
            1
        } else {
            BATCHES
        }
    }

    pub fn node_count(&self) -> usize {
        match &self.gauss {
            Some(g) => g.total,
            None => self.per_batch() * BATCHES,
        }
    }

    fn per_batch(&self) -> usize {
        (self.rule.size as usize).div_ceil(BATCHES)
    }

    fn method(&self) -> String {
        match self.rule.kind {
            RuleKind::MonteCarlo => "monte_carlo",
            RuleKind::QuasiMonteCarlo => "quasi_monte_carlo",
            RuleKind::ProductGauss => "product_gauss",
        }
        .to_string()
    }

    /// Integrates a k-vector of functions sharing the same nodes. `init` builds per-chunk
    /// scratch state; `f` writes the k integrand values at a node.
    pub fn integrate_with<S, I, F>(&self, k: usize, init: I, f: F) -> Result<BatchTable>
    where
        I: Fn() -> S + Sync,
        F: Fn(&mut S, &[f64], &mut [f64]) + Sync,
    {
        let per_batch = match &self.gauss {
            Some(g) => g.total,
            None => self.per_batch(),
        };
        let chunks = per_batch.div_ceil(CHUNK);
        let batches = self.batches();
        let area = sphere_area(self.dim);
        let items: Vec<(usize, usize)> = (0..batches).flat_map(|b| (0..chunks).map(move |c| (b, c))).collect();
        let partials: Vec<Result<Vec<CompensatedSum>>> = items
            .par_iter()
            .map(|&(b, c)| {
                let mut state = init();
                let mut sums = vec![CompensatedSum::new(); k];
                let mut x = vec![0.0; self.dim];
                let mut out = vec![0.0; k];
                let start = c * CHUNK;
                let end = ((c + 1) * CHUNK).min(per_batch);
                let mut nodes = NodeStream::new(self, b, start);
                for _ in start..end {
                    let w = nodes.next(&mut x);
                    f(&mut state, &x, &mut out);
                    for (s, v) in sums.iter_mut().zip(&out) {
                        if !v.is_finite() {
                            return Err(Error::PoisonedEstimate { node: x.clone() });
                        }
                        s.add(w * v);
                    }
                }
                Ok(sums)
            })
            .collect();
        let mut rows = vec![vec![CompensatedSum::new(); k]; batches];
        for (&(b, _), part) in items.iter().zip(partials) {
            let part = part?;
            for (acc, p) in rows[b].iter_mut().zip(&part) {
                acc.merge(p);
            }
        }
        let scale = if self.gauss.is_some() {
            1.0
        } else {
            area / per_batch as f64
        };
        Ok(BatchTable {
            rows: rows
                .into_iter()
                .map(|r| r.iter().map(|s| s.value() * scale).collect())
                .collect(),
            nodes: self.node_count(),
            method: self.method(),
        })
    }

    pub fn integrate_vec<F>(&self, k: usize, f: F) -> Result<BatchTable>
    where
        F: Fn(&[f64], &mut [f64]) + Sync,
    {
        self.integrate_with(k, || (), |_, x, out| f(x, out))
    }

    /// ∫_{S^{dim-1}} f.
    pub fn integrate<F>(&self, f: F) -> Result<Estimate>
    where
        F: Fn(&[f64]) -> f64 + Sync,
    {
        Ok(self.integrate_vec(1, |x, out| out[0] = f(x))?.estimate(0))
    }

    /// Weights of the rule summed exactly (the area for Gauss rules).
    pub fn weight_sum(&self) -> f64 {
        match &self.gauss {
            Some(g) => {
                let mut s = CompensatedSum::new();
                let mut stream = NodeStream::new(self, 0, 0);
                let mut x = vec![0.0; self.dim];
                for _ in 0..g.total {
                    s.add(stream.next(&mut x));
                }
                s.value()
            }
            None => sphere_area(self.dim),
        }
    }
}

/// ∫_{S^{2n-1}} f with a rule on the full sphere.
pub fn integrate_sphere<F>(rule: &SphereRule, f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    rule.integrate(f)
}

/// Integrates f over the unit sphere of span(basis) by mapping a rule on S^{m-1}.
pub fn integrate_subsphere<F>(rule: &Rule, basis: &[Vec<f64>], f: F) -> Result<Estimate>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    check_orthonormal(basis)?;
    let m = basis.len();
    let dim = basis[0].len();
    let sr = rule.on(m)?;
    sr.integrate_with(
        1,
        || vec![0.0; dim],
        |y, c, out| {
            y.iter_mut().for_each(|v| *v = 0.0);
            for (ci, b) in c.iter().zip(basis) {
                y.iter_mut().zip(b).for_each(|(v, bi)| *v += ci * bi);
            }
            out[0] = f(y);
        },
    )
    .map(|t| t.estimate(0))
}

pub fn check_orthonormal(basis: &[Vec<f64>]) -> Result<()> {
    if basis.is_empty() {
        return Err(Error::NonOrthonormal(f64::INFINITY));
    }
    let mut worst: f64 = 0.0;
    for i in 0..basis.len() {
        if basis[i].len() != basis[0].len() {
            return Err(Error::NonOrthonormal(f64::INFINITY));
        }
        for j in 0..=i {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot(&basis[i], &basis[j]) - target).abs());
        }
    }
    if worst > 1e-10 {
        return Err(Error::NonOrthonormal(worst));
    }
    Ok(())
}

struct NodeStream<'a> {
    rule: &'a SphereRule,
    index: usize,
    rng: Option<ChaCha8Rng>,
    shift: Vec<f64>,
    u: Vec<f64>,
}

fn normal() -> &'static Normal {
    static N: OnceLock<Normal> = OnceLock::new();
    N.get_or_init(Normal::standard)
}

impl<'a> NodeStream<'a> {
    fn new(rule: &'a SphereRule, batch: usize, start: usize) -> Self {
        let dim = rule.dim;
        let mut rng = None;
        let mut shift = Vec::new();
        match rule.rule.kind {
            RuleKind::MonteCarlo => {
                let mut r = ChaCha8Rng::seed_from_u64(rule.rule.seed);
                r.set_stream(((batch as u64) << 32) | (start / CHUNK) as u64);
                rng = Some(r);
            }
            RuleKind::QuasiMonteCarlo => {
                let mut r = ChaCha8Rng::seed_from_u64(rule.rule.seed ^ 0x9e37_79b9_7f4a_7c15);
                r.set_stream(batch as u64);
                shift = (0..dim).map(|_| r.random::<f64>()).collect();
            }
            RuleKind::ProductGauss => {}
        }
        Self {
            rule,
            index: start,
            rng,
            shift,
            u: vec![0.0; dim],
        }
    }

    /// Writes the next node and returns its weight (1 for random rules).
    fn next(&mut self, x: &mut [f64]) -> f64 {
        let i = self.index;
        self.index += 1;
        match self.rule.rule.kind {
            RuleKind::MonteCarlo => {
                let rng = self.rng.as_mut().expect("mc stream");
                loop {
                    for v in x.iter_mut() {
                        *v = rng.sample(StandardNormal);
                    }
                    let r = dot(x, x).sqrt();
                    if r > 1e-12 {
                        x.iter_mut().for_each(|v| *v /= r);
                        return 1.0;
                    }
                }
            }
            RuleKind::QuasiMonteCarlo => {
                halton(i as u64 + 1, &mut self.u);
                let n = normal();
                for ((v, u), s) in x.iter_mut().zip(&self.u).zip(&self.shift) {
                    *v = n.inverse_cdf((u + s).fract().clamp(1e-16, 1.0 - 1e-16));
                }
                let r = dot(x, x).sqrt();
                x.iter_mut().for_each(|v| *v /= r);
                1.0
            }
            RuleKind::ProductGauss => {
                let g = self.rule.gauss.as_ref().expect("gauss table");
                let mut rem = i;
                let az = rem % g.azimuth;
                rem /= g.azimuth;
                let mut w = 2.0 * std::f64::consts::PI / g.azimuth as f64;
                let mut prod = 1.0;
                for (k, table) in g.polar.iter().enumerate() {
                    let (c, s, wk) = table[rem % table.len()];
                    rem /= table.len();
                    x[k] = prod * c;
                    prod *= s;
                    w *= wk;
                }
                let psi = 2.0 * std::f64::consts::PI * (az as f64 + 0.5) / g.azimuth as f64;
                let d = x.len();
                x[d - 2] = prod * psi.cos();
                x[d - 1] = prod * psi.sin();
                w
            }
        }
    }
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Halton point with index i (i ≥ 1) in [0,1)^len.
pub fn halton(i: u64, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        let b = PRIMES[k % PRIMES.len()];
        let mut f = 1.0;
        let mut r = 0.0;
        let mut n = i;
        while n > 0 {
            f /= b as f64;
            r += f * (n % b) as f64;
            n /= b;
        }
        *o = r;
    }
}

fn product_gauss(dim: usize, level: usize) -> Arc<ProductGauss> {
    static CACHE: OnceLock<Mutex<std::collections::HashMap<(usize, usize), Arc<ProductGauss>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(g) = cache.lock().expect("gauss cache").get(&(dim, level)) {
        return g.clone();
    }
    let n_pol = (level + 1).div_ceil(2);
    let polar: Vec<Vec<(f64, f64, f64)>> = (1..=dim.saturating_sub(2))
        .map(|i| {
            // Weight sin^{dim-1-i} φ dφ = (1 − t²)^{(dim-2-i)/2} dt.
            let a = (dim - 2 - i) as f64 / 2.0;
            let (t, w) = gauss_gegenbauer(n_pol, a);
            t.into_iter()
                .zip(w)
                .map(|(t, w)| (t, (1.0 - t * t).max(0.0).sqrt(), w))
                .collect()
        })
        .collect();
    let azimuth = level + 1;
    let total = polar.iter().map(|p| p.len()).product::<usize>() * azimuth;
    let g = Arc::new(ProductGauss { polar, azimuth, total });
    cache.lock().expect("gauss cache").insert((dim, level), g.clone());
    g
}

/// Gauss rule for the weight (1 − t²)^a on [−1, 1], a > −1 (Golub–Welsch).
pub fn gauss_gegenbauer(n: usize, a: f64) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1 && a > -1.0);
    let mu0 =
        std::f64::consts::PI.sqrt() * statrs::function::gamma::gamma(a + 1.0) / statrs::function::gamma::gamma(a + 1.5);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let kf = k as f64;
        let beta = if k == 1 {
            1.0 / (2.0 * a + 3.0)
        } else {
            kf * (kf + 2.0 * a) / (4.0 * (kf + a) * (kf + a) - 1.0)
        };
        jac[(k, k - 1)] = beta.sqrt();
        jac[(k - 1, k)] = beta.sqrt();
    }
    let eig = SymmetricEigen::new(jac);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    // Symmetrize against round-off.
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let t = 0.5 * (pairs[j].0 - pairs[i].0);
        let w = 0.5 * (pairs[i].1 + pairs[j].1);
        pairs[i] = (-t, w);
        pairs[j] = (t, w);
    }
    if n % 2 == 1 {
        pairs[n / 2].0 = 0.0;
    }
    pairs.into_iter().unzip()
}

pub fn gauss_legendre(n: usize) -> Arc<(Vec<f64>, Vec<f64>)> {
    static CACHE: OnceLock<Mutex<std::collections::HashMap<usize, Arc<(Vec<f64>, Vec<f64>)>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let mut guard = cache.lock().expect("legendre cache");
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(gauss_gegenbauer(n, 0.0)))
        .clone()
}

// Gauss–Kronrod 7/15 abscissae and weights on [−1, 1].
const GK_X: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Panel {
    a: f64,
    b: f64,
    value: Vec<f64>,
    error: f64,
}

/// Kronrod abscissae on [a, b] with Kronrod and embedded Gauss weights.
fn gk_nodes(a: f64, b: f64) -> [(f64, f64, f64); 15] {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    std::array::from_fn(|i| {
        let (x, wk, wg) = if i < 7 {
            (-GK_X[i], GK_WK[i], if i % 2 == 1 { GK_WG[i / 2] } else { 0.0 })
        } else if i == 7 {
            (0.0, GK_WK[7], GK_WG[3])
        } else {
            let j = 14 - i;
            (GK_X[j], GK_WK[j], if j % 2 == 1 { GK_WG[j / 2] } else { 0.0 })
        };
        (c + h * x, h * wk, h * wg)
    })
}

/// ∫_0^∞ (g(t) − g(0)) / t^{1+q} dt for a vector of profiles vanishing beyond `cutoff`.
/// The [0, δ] piece uses an even quartic fit of g(t) − g(0), δ = cutoff·1e-3.
pub fn fractional_radial_vec<G: FnMut(f64, &mut [f64])>(mut g: G, k: usize, q: f64, cutoff: f64) -> Result<Vec<f64>> {
    fractional_radial_batched(
        |ts| {
            Ok(ts
                .iter()
                .map(|&t| {
                    let mut out = vec![0.0; k];
                    g(t, &mut out);
                    out
                })
                .collect())
        },
        k,
        q,
        cutoff,
        1e-9,
    )
}

/// As [`fractional_radial_vec`], but `g` receives every abscissa of a refinement round
/// at once and returns one k-vector per abscissa.
pub fn fractional_radial_batched<G>(mut g: G, k: usize, q: f64, cutoff: f64, rel_tol: f64) -> Result<Vec<f64>>
where
    G: FnMut(&[f64]) -> Result<Vec<Vec<f64>>>,
{
    if !(q > 0.0 && q < 2.0) {
        return Err(Error::OutOfRange(format!(
            "fractional order q = {q} must lie in (0, 2)"
        )));
    }
    if !(cutoff > 0.0 && cutoff.is_finite()) {
        return Err(Error::OutOfRange(format!("cutoff must be positive, got {cutoff}")));
    }
    const FIT: usize = 8;
    let delta = cutoff * 1e-2;
    let mut breaks = vec![delta];
    while breaks.last().expect("nonempty") * 2.0 < cutoff {
        let b = breaks.last().expect("nonempty") * 2.0;
        breaks.push(b);
    }
    breaks.push(cutoff);
    let mut pending: Vec<(f64, f64)> = breaks.windows(2).map(|w| (w[0], w[1])).collect();

    let mut first: Vec<f64> = vec![0.0];
    first.extend((1..=FIT).map(|i| delta * i as f64 / FIT as f64));
    let mut panels: Vec<Panel> = Vec::new();
    let mut g0 = Vec::new();
    let mut near = Vec::new();
    let weight = |t: f64| t.powf(-1.0 - q);
    loop {
        let mut ts = first.clone();
        let nodes: Vec<[(f64, f64, f64); 15]> = pending.iter().map(|&(a, b)| gk_nodes(a, b)).collect();
        ts.extend(nodes.iter().flat_map(|n| n.iter().map(|x| x.0)));
        let vals = g(&ts)?;
        if vals.len() != ts.len() || vals.iter().any(|v| v.len() != k) {
            return Err(Error::Domain("profile evaluator returned the wrong shape".into()));
        }
        let mut it = vals.into_iter();
        if !first.is_empty() {
            g0 = it.next().expect("origin value");
            let fit: Vec<Vec<f64>> = it.by_ref().take(FIT).collect();
            near = near_origin(&g0, &fit, delta, q);
            first.clear();
        }
        for (&(a, b), nd) in pending.iter().zip(&nodes) {
            let mut kron = vec![0.0; k];
            let mut gauss = vec![0.0; k];
            for &(t, wk, wg) in nd {
                let v = it.next().expect("panel value");
                let wt = weight(t);
                for m in 0..k {
                    let y = (v[m] - g0[m]) * wt;
                    kron[m] += wk * y;
                    gauss[m] += wg * y;
                }
            }
            let error = kron.iter().zip(&gauss).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            panels.push(Panel {
                a,
                b,
                value: kron,
                error,
            });
        }
        let total: Vec<f64> = (0..k)
            .map(|m| crate::reduce::kahan_reduce(panels.iter().map(|p| p.value[m])))
            .collect();
        let err: f64 = panels.iter().map(|p| p.error).sum();
        let scale = total
            .iter()
            .zip(&g0)
            .map(|(v, z)| v.abs().max(z.abs() * cutoff.powf(-q)))
            .fold(0.0, f64::max);
        let tol = rel_tol * scale.max(1e-300);
        if err <= tol || panels.len() >= 400 {
            return Ok((0..k)
                .map(|m| near[m] + total[m] - g0[m] * cutoff.powf(-q) / q)
                .collect());
        }
        // Split every panel carrying more than its share of the tolerance.
        let share = tol / panels.len() as f64;
        let (split, keep): (Vec<Panel>, Vec<Panel>) = panels.into_iter().partition(|p| p.error > share);
        panels = keep;
        pending = split
            .iter()
            .flat_map(|p| {
                let mid = 0.5 * (p.a + p.b);
                [(p.a, mid), (mid, p.b)]
            })
            .collect();
    }
}

/// ∫_0^δ (g(t) − g(0)) t^{-1-q} dt from a least-squares fit in s², s⁴, s⁶ with s = t/δ.
fn near_origin(g0: &[f64], fit: &[Vec<f64>], delta: f64, q: f64) -> Vec<f64> {
    const POWERS: [i32; 3] = [2, 4, 6];
    let n = fit.len();
    let a = DMatrix::from_fn(n, POWERS.len(), |i, k| ((i + 1) as f64 / n as f64).powi(POWERS[k]));
    let at = a.transpose();
    let gram = (&at * &a).cholesky().expect("fit design has full rank");
    // Row vector mapping samples to the integral of the fitted polynomial.
    let moments = DMatrix::from_fn(POWERS.len(), 1, |k, _| 1.0 / (POWERS[k] as f64 - q));
    let weights = at.transpose() * gram.solve(&moments);
    let scale = delta.powf(-q);
    (0..g0.len())
        .map(|m| scale * (0..n).map(|i| weights[i] * (fit[i][m] - g0[m])).sum::<f64>())
        .collect()
}

pub fn fractional_radial<G: FnMut(f64) -> f64>(mut g: G, q: f64, cutoff: f64) -> Result<f64> {
    Ok(fractional_radial_vec(|t, out: &mut [f64]| out[0] = g(t), 1, q, cutoff)?[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_integrals() {
        let r = Rule::gauss(10).on(4).unwrap();
        assert!((r.integrate(|_| 1.0).unwrap().value - 2.0 * PI * PI).abs() < 1e-12);
        let r = Rule::gauss(10).on(6).unwrap();
        assert!((r.integrate(|_| 1.0).unwrap().value - PI.powi(3)).abs() < 1e-11);
        for rule in [Rule::mc(4096, 3), Rule::qmc(4096, 3)] {
            let e = rule.on(4).unwrap().integrate(|_| 1.0).unwrap();
            assert!((e.value - 2.0 * PI * PI).abs() < 1e-12);
            assert_eq!(e.stderr, 0.0);
        }
    }

    #[test]
    fn gauss_weight_sum_is_area() {
        for d in 2..=6 {
            let r = Rule::gauss(7).on(d).unwrap();
            assert!((r.weight_sum() - sphere_area(d)).abs() < 1e-10 * sphere_area(d));
        }
    }

    #[test]
    fn second_moment() {
        let r = Rule::gauss(4).on(4).unwrap();
        let e = r.integrate(|x| x[0] * x[0]).unwrap();
        assert!((e.value - PI * PI / 2.0).abs() < 1e-12);
        let e = Rule::qmc(1 << 14, 1).on(4).unwrap().integrate(|x| x[0] * x[0]).unwrap();
        assert!((e.value - PI * PI / 2.0).abs() < 5.0 * e.stderr + 1e-3);
        assert!(e.stderr > 0.0);
    }

    #[test]
    fn gauss_exact_for_polynomials_up_to_level() {
        // ∫_{S^5} x_1^4 x_6^2 = |S^5|·3/(6·8·10).
        let r = Rule::gauss(6).on(6).unwrap();
        let e = r.integrate(|x| x[0].powi(4) * x[5].powi(2)).unwrap();
        let exact = PI.powi(3) * 3.0 / 480.0;
        assert!((e.value - exact).abs() < 1e-12, "{} vs {exact}", e.value);
    }

    #[test]
    fn deterministic_and_seeded() {
        let r = Rule::mc(1 << 12, 9).on(6).unwrap();
        let a = r.integrate(|x| x[0].powi(2) + x[3]).unwrap();
        let b = r.integrate(|x| x[0].powi(2) + x[3]).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
        let c = Rule::mc(1 << 12, 10)
            .on(6)
            .unwrap()
            .integrate(|x| x[0].powi(2) + x[3])
            .unwrap();
        assert_ne!(a.value, c.value);
    }

    #[test]
    fn mc_stderr_scaling() {
        let f = |x: &[f64]| x[0].powi(2) + 0.5 * x[1];
        let mut prev = None;
        for n in [1u64 << 12, 1 << 13, 1 << 14, 1 << 15] {
            let e = Rule::mc(n, 5).on(4).unwrap().integrate(f).unwrap();
            if let Some(p) = prev {
                let ratio = e.stderr / p;
                assert!((0.5..=0.95).contains(&ratio), "ratio {ratio}");
            }
            prev = Some(e.stderr);
        }
    }

    #[test]
    fn poisoned_node_reported() {
        let r = Rule::mc(256, 1).on(4).unwrap();
        let err = r.integrate(|x| if x[0] > 0.9 { f64::NAN } else { 1.0 });
        match err {
            Err(Error::PoisonedEstimate { node }) => assert!(node[0] > 0.9),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn subsphere_examples() {
        let basis = vec![vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]];
        let e = integrate_subsphere(&Rule::gauss(4), &basis, |_| 1.0).unwrap();
        assert!((e.value - 2.0 * PI).abs() < 1e-12);
        let bad = vec![vec![1.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0]];
        assert!(matches!(
            integrate_subsphere(&Rule::gauss(4), &bad, |_| 1.0),
            Err(Error::NonOrthonormal(_))
        ));
    }

    #[test]
    fn gegenbauer_nodes() {
        let (t, w) = gauss_gegenbauer(5, 0.0);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        let m4: f64 = t.iter().zip(&w).map(|(t, w)| w * t.powi(4)).sum();
        assert!((m4 - 0.4).abs() < 1e-14);
        // Chebyshev weight (1 − t²)^{-1/2}.
        let (t, w) = gauss_gegenbauer(4, -0.5);
        assert!((w.iter().sum::<f64>() - PI).abs() < 1e-13);
        let m2: f64 = t.iter().zip(&w).map(|(t, w)| w * t * t).sum();
        assert!((m2 - PI / 2.0).abs() < 1e-13);
    }

    #[test]
    fn fractional_examples() {
        let v = fractional_radial(|t| if t <= 1.0 { PI * (1.0 - t * t) } else { 0.0 }, 1.0, 1.0).unwrap();
        assert!((v + 2.0 * PI).abs() < 1e-6, "{v}");
        let v = fractional_radial(|t| if t < 2.0 { 3.0 } else { 0.0 }, 1.0, 2.0).unwrap();
        assert!((v + 1.5).abs() < 1e-10, "{v}");
        let v = fractional_radial(|t| if t < 2.0 { 3.0 } else { 0.0 }, 0.5, 2.0).unwrap();
        assert!((v + 3.0 * 2f64.powf(-0.5) / 0.5).abs() < 1e-10);
        assert!(fractional_radial(|_| 1.0, 2.0, 1.0).is_err());
        assert!(fractional_radial(|_| 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn fractional_matches_closed_form_for_smooth_profile() {
        // g(t) = e^{-t²} cut at 8: ∫(e^{-t²} − 1)/t^{1+q} = Γ(−q/2)/2.
        for q in [0.3, 1.0, 1.7] {
            let v = fractional_radial(|t| if t < 8.0 { (-t * t).exp() } else { 0.0 }, q, 8.0).unwrap();
            let exact = statrs::function::gamma::gamma(-q / 2.0) / 2.0;
            assert!((v - exact).abs() < 1e-7 * exact.abs(), "q={q}: {v} vs {exact}");
        }
    }

    #[test]
    fn rule_specs() {
        assert_eq!(Rule::parse("mc:n=4e6,seed=1").unwrap(), Rule::mc(4_000_000, 1));
        assert_eq!(Rule::parse("qmc:n=2^20").unwrap(), Rule::qmc(1 << 20, 0));
        assert_eq!(Rule::parse("gauss:level=40").unwrap(), Rule::gauss(40));
        assert!(Rule::parse("gauss:level=40").unwrap().on(8).is_err());
        assert!(Rule::parse("mc:n=1.5").is_err());
        assert!(Rule::parse("sobol:n=8").is_err());
        let r = Rule::parse("qmc:n=1000,seed=4").unwrap();
        assert_eq!(Rule::parse(&r.canonical()).unwrap(), r);
    }
}
