//! Origin-symmetric star bodies in R^{2n} given by their Minkowski functionals.

use crate::error::{spec_err, Error, Result};
use crate::frames::{check_unit, dot, norm2};
use crate::harmonics::{atom_by_id, HarmonicAtom};
use crate::quadrature::halton;
use crate::spec::{fmt_f64, split_top_level, SpecString};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceClass {
    General,
    /// Invariant under R_θ for every θ.
    ComplexRotation,
    /// Invariant under rotating each coordinate pair separately.
    IndependentRotation,
}

impl InvarianceClass {
    pub fn is_complex_rotation(self) -> bool {
        self != InvarianceClass::General
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Smoothness {
    Nonsmooth,
    C2,
    CInfinity,
}

#[derive(Debug)]
enum Kind {
    Ball,
    ComplexLq {
        n: usize,
        q: f64,
    },
    Scaled {
        base: StarBody,
        factor: f64,
    },
    Mollified {
        base: StarBody,
        width: f64,
        seed: u64,
        maps: Vec<DMatrix<f64>>,
    },
    Perturbed {
        base: StarBody,
        eps: f64,
        exponent: f64,
        bump: Bump,
    },
}

/// A star body with certified radius bounds r_min ≤ ρ ≤ r_max on the unit sphere.
#[derive(Clone, Debug)]
pub struct StarBody {
    kind: Arc<Kind>,
    dim: usize,
    invariance: InvarianceClass,
    smoothness: Smoothness,
    r_min: f64,
    r_max: f64,
}

/// Mollifier defaults.
pub const MOLLIFY_COUNT: usize = 16;
pub const MOLLIFY_SEED: u64 = 0;

impl StarBody {
    pub fn ball(dim: usize) -> Result<Self> {
        if dim < 4 || !dim.is_multiple_of(2) || dim > 16 {
            return Err(Error::Domain(format!(
                "ball dimension must be even in [4, 16], got {dim}"
            )));
        }
        Ok(Self {
            kind: Arc::new(Kind::Ball),
            dim,
            invariance: InvarianceClass::IndependentRotation,
            smoothness: Smoothness::CInfinity,
            r_min: 1.0,
            r_max: 1.0,
        })
    }

    /// Unit ball of the complex ℓ_q^n norm.
    pub fn complex_lq(n: usize, q: f64) -> Result<Self> {
        if !(2..=8).contains(&n) {
            return Err(Error::Domain(format!("n must be in [2, 8], got {n}")));
        }
        if !(q >= 1.0 && q.is_finite() && q <= 64.0) {
            return Err(Error::Domain(format!("q must be in [1, 64], got {q}")));
        }
        let smoothness = if q == 2.0 || (q.fract() == 0.0 && (q as i64) % 2 == 0) {
            Smoothness::CInfinity
        } else if q > 2.0 {
            Smoothness::C2
        } else {
            Smoothness::Nonsmooth
        };
        let e = (n as f64).powf(0.5 - 1.0 / q);
        let (r_min, r_max) = if q >= 2.0 { (1.0, e) } else { (e, 1.0) };
        Ok(Self {
            kind: Arc::new(Kind::ComplexLq { n, q }),
            dim: 2 * n,
            invariance: InvarianceClass::IndependentRotation,
            smoothness,
            r_min,
            r_max,
        })
    }

    /// The dilate factor·K.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::Domain(format!("scale factor must be positive, got {factor}")));
        }
        Ok(Self {
            kind: Arc::new(Kind::Scaled {
                base: self.clone(),
                factor,
            }),
            dim: self.dim,
            invariance: self.invariance,
            smoothness: self.smoothness,
            r_min: self.r_min * factor,
            r_max: self.r_max * factor,
        })
    }

    pub fn mollify(&self, width: f64) -> Result<Self> {
        self.mollify_with(width, MOLLIFY_COUNT, MOLLIFY_SEED)
    }

    /// Averages the norm over `count` unitary maps exp-close to the identity
    /// (Cayley transforms of ±width·S for random skew-Hermitian S).
    pub fn mollify_with(&self, width: f64, count: usize, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&width) {
            return Err(Error::Domain(format!(
                "mollifier width must lie in [0, 1), got {width}"
            )));
        }
        if count < 2 || !count.is_multiple_of(2) || count > 256 {
            return Err(Error::Domain(format!(
                "mollifier count must be even in [2, 256], got {count}"
            )));
        }
        let n = self.dim / 2;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut maps = Vec::with_capacity(count);
        for _ in 0..count / 2 {
            let g = DMatrix::<Complex64>::from_fn(n, n, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            let mut s = (&g - g.adjoint()) * Complex64::new(0.5, 0.0);
            let fro = s.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
            s /= Complex64::new(fro, 0.0);
            for sign in [1.0, -1.0] {
                let a = &s * Complex64::new(sign * width / 2.0, 0.0);
                let id = DMatrix::<Complex64>::identity(n, n);
                let lhs = (&id - &a)
                    .try_inverse()
                    .expect("Cayley transform of skew-Hermitian is invertible");
                let u = lhs * (&id + &a);
                maps.push(realify(&u));
            }
        }
        Ok(Self {
            kind: Arc::new(Kind::Mollified {
                base: self.clone(),
                width,
                seed,
                maps,
            }),
            dim: self.dim,
            invariance: match self.invariance {
                InvarianceClass::General => InvarianceClass::General,
                _ => InvarianceClass::ComplexRotation,
            },
            smoothness: self.smoothness,
            r_min: self.r_min,
            r_max: self.r_max,
        })
    }

    /// ‖x‖_K^{-s} = ‖x‖_base^{-s} − ε·g(x/|x|)·|x|^{-s}.
    pub fn perturb(&self, eps: f64, exponent: f64, bump: Bump) -> Result<Self> {
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::Domain(format!("exponent must be positive, got {exponent}")));
        }
        if !eps.is_finite() {
            return Err(Error::Domain("perturbation amplitude must be finite".into()));
        }
        if bump.n != self.dim / 2 {
            return Err(Error::Domain("bump dimension does not match the base body".into()));
        }
        let min_power = sampled_min_power(self, eps, exponent, &bump);
        if !(min_power > 0.0) {
            return Err(Error::Domain(format!(
                "perturbed radial power is not positive on the sphere (min {min_power:e})"
            )));
        }
        let b = eps.abs() * bump.sup_bound();
        let lo_cert = self.r_min.powf(exponent) - b;
        let r_min = if lo_cert > 0.0 {
            lo_cert.powf(1.0 / exponent) / 1.05
        } else {
            min_power.powf(1.0 / exponent) / 1.05
        };
        let r_max = (self.r_max.powf(exponent) + b).powf(1.0 / exponent) * 1.05;
        let invariance = match self.invariance {
            InvarianceClass::General => InvarianceClass::General,
            _ if bump.torus_invariant() => self.invariance,
            _ => InvarianceClass::ComplexRotation,
        };
        Ok(Self {
            kind: Arc::new(Kind::Perturbed {
                base: self.clone(),
                eps,
                exponent,
                bump,
            }),
            dim: self.dim,
            invariance,
            smoothness: self.smoothness,
            r_min,
            r_max,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.dim / 2
    }

    pub fn invariance(&self) -> InvarianceClass {
        self.invariance
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    pub fn r_min(&self) -> f64 {
        self.r_min
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// ‖x‖_K without input checks.
    pub fn norm_unchecked(&self, x: &[f64]) -> f64 {
        match &*self.kind {
            Kind::Ball => norm2(x),
            Kind::ComplexLq { q, .. } => {
                let mut s = 0.0;
                for c in x.chunks_exact(2) {
                    s += pow_half_q(c[0] * c[0] + c[1] * c[1], *q);
                }
                root_q(s, *q)
            }
            Kind::Scaled { base, factor } => base.norm_unchecked(x) / factor,
            Kind::Mollified { base, maps, .. } => {
                let mut y = vec![0.0; x.len()];
                let mut acc = 0.0;
                for m in maps {
                    matvec(m, x, &mut y);
                    acc += base.norm_unchecked(&y);
                }
                acc / maps.len() as f64
            }
            Kind::Perturbed {
                base,
                eps,
                exponent,
                bump,
            } => {
                let r = norm2(x);
                let v = base.norm_unchecked(x).powf(-exponent) - eps * bump.eval_direction(x) * r.powf(-exponent);
                if v > 0.0 {
                    v.powf(-1.0 / exponent)
                } else {
                    f64::NAN
                }
            }
        }
    }

    /// ‖x‖_K.
    pub fn norm(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(Error::Domain(format!(
                "expected a vector of length {}, got {}",
                self.dim,
                x.len()
            )));
        }
        if x.iter().all(|v| *v == 0.0) {
            return Err(Error::Domain("norm of the zero vector".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite input".into()));
        }
        Ok(self.norm_unchecked(x))
    }

    /// ρ(θ) = 1/‖θ‖ for unit θ.
    pub fn radial(&self, theta: &[f64]) -> Result<f64> {
        check_unit(theta)?;
        Ok(1.0 / self.norm(theta)?)
    }

    /// Evaluator of c ↦ ‖Σ c_i v_i‖ over a span of at most four vectors.
    pub fn span(&self, vecs: &[&[f64]]) -> Span<'_> {
        assert!(!vecs.is_empty() && vecs.len() <= MAX_SPAN);
        match &*self.kind {
            Kind::Ball => {
                let mut g = [0.0; GRAM];
                gram(vecs, |i, j| dot(vecs[i], vecs[j]), &mut g);
                Span::Quadratic { g, k: vecs.len() }
            }
            Kind::ComplexLq { n, q } => {
                let blocks = (0..*n)
                    .map(|b| {
                        let mut g = [0.0; GRAM];
                        gram(
                            vecs,
                            |i, j| vecs[i][2 * b] * vecs[j][2 * b] + vecs[i][2 * b + 1] * vecs[j][2 * b + 1],
                            &mut g,
                        );
                        g
                    })
                    .collect();
                Span::Blocks {
                    blocks,
                    k: vecs.len(),
                    q: *q,
                }
            }
            Kind::Scaled { base, factor } => Span::Scaled {
                inner: Box::new(base.span(vecs)),
                inv: 1.0 / factor,
            },
            Kind::Mollified { base, maps, .. } => {
                let d = self.dim;
                let mut ys = vec![vec![0.0; d]; vecs.len()];
                Span::Average(
                    maps.iter()
                        .map(|m| {
                            for (y, v) in ys.iter_mut().zip(vecs) {
                                matvec(m, v, y);
                            }
                            let refs: Vec<&[f64]> = ys.iter().map(|y| y.as_slice()).collect();
                            base.span(&refs)
                        })
                        .collect(),
                )
            }
            Kind::Perturbed {
                base,
                eps,
                exponent,
                bump,
            } => Span::Perturbed {
                base: Box::new(base.span(vecs)),
                vecs: vecs.iter().map(|v| v.to_vec()).collect(),
                buf: vec![0.0; self.dim],
                eps: *eps,
                exponent: *exponent,
                bump,
            },
        }
    }

    /// Canonical spec string; parses back to an identical body.
    pub fn spec(&self) -> String {
        match &*self.kind {
            Kind::Ball => format!("ball:dim={}", self.dim),
            Kind::ComplexLq { n, q } => format!("clq:n={n},q={}", fmt_f64(*q)),
            Kind::Scaled { base, factor } => {
                format!("scale:base=[{}],factor={}", base.spec(), fmt_f64(*factor))
            }
            Kind::Mollified {
                base,
                width,
                seed,
                maps,
            } => format!(
                "mollify:base=[{}],width={},count={},seed={seed}",
                base.spec(),
                fmt_f64(*width),
                maps.len()
            ),
            Kind::Perturbed {
                base,
                eps,
                exponent,
                bump,
            } => format!(
                "perturb:base=[{}],eps={},bump=[{}],exponent={}",
                base.spec(),
                fmt_f64(*eps),
                bump.spec(),
                fmt_f64(*exponent)
            ),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        parse_depth(s, 0)
    }

    /// Base body of a perturbation, if this is one.
    pub fn perturbation_parts(&self) -> Option<(&StarBody, f64, f64, &Bump)> {
        match &*self.kind {
            Kind::Perturbed {
                base,
                eps,
                exponent,
                bump,
            } => Some((base, *eps, *exponent, bump)),
            _ => None,
        }
    }
}

fn parse_depth(s: &str, depth: usize) -> Result<StarBody> {
    if depth > 8 {
        return Err(spec_err(s, "body specs nest too deeply"));
    }
    let sp = SpecString::parse(s)?;
    let body = match sp.kind.as_str() {
        "ball" => {
            sp.only(&["dim"])?;
            let dim = sp
                .count("dim")?
                .ok_or_else(|| spec_err("ball:dim", "missing required key"))?;
            StarBody::ball(dim as usize)
        }
        "clq" => {
            sp.only(&["n", "q"])?;
            let n = sp
                .count("n")?
                .ok_or_else(|| spec_err("clq:n", "missing required key"))?;
            StarBody::complex_lq(n as usize, sp.require_number("q")?)
        }
        "scale" => {
            sp.only(&["base", "factor"])?;
            parse_depth(sp.require("base")?, depth + 1)?.scaled(sp.require_number("factor")?)
        }
        "mollify" => {
            sp.only(&["base", "width", "count", "seed"])?;
            let base = parse_depth(sp.require("base")?, depth + 1)?;
            base.mollify_with(
                sp.require_number("width")?,
                sp.count("count")?.unwrap_or(MOLLIFY_COUNT as u64) as usize,
                sp.count("seed")?.unwrap_or(MOLLIFY_SEED),
            )
        }
        "perturb" => {
            sp.only(&["base", "eps", "bump", "exponent"])?;
            let base = parse_depth(sp.require("base")?, depth + 1)?;
            let bump = Bump::parse(sp.require("bump")?, base.n())?;
            let exponent = sp.number("exponent")?.unwrap_or((base.dim() - 2) as f64);
            base.perturb(sp.require_number("eps")?, exponent, bump)
        }
        other => {
            return Err(spec_err(
                other,
                "body kind must be ball, clq, scale, mollify or perturb",
            ))
        }
    };
    body.map_err(|e| match e {
        Error::Domain(msg) => spec_err(s, msg),
        e => e,
    })
}

fn realify(u: &DMatrix<Complex64>) -> DMatrix<f64> {
    let n = u.nrows();
    let mut r = DMatrix::<f64>::zeros(2 * n, 2 * n);
    for j in 0..n {
        for k in 0..n {
            let c = u[(j, k)];
            r[(2 * j, 2 * k)] = c.re;
            r[(2 * j, 2 * k + 1)] = -c.im;
            r[(2 * j + 1, 2 * k)] = c.im;
            r[(2 * j + 1, 2 * k + 1)] = c.re;
        }
    }
    r
}

#[inline]
fn matvec(m: &DMatrix<f64>, x: &[f64], y: &mut [f64]) {
    let d = x.len();
    for (i, yi) in y.iter_mut().enumerate() {
        let mut s = 0.0;
        for k in 0..d {
            s += m[(i, k)] * x[k];
        }
        *yi = s;
    }
}

#[inline]
fn pow_half_q(m: f64, q: f64) -> f64 {
    if q == 4.0 {
        m * m
    } else if q == 2.0 {
        m
    } else {
        m.powf(q / 2.0)
    }
}

#[inline]
fn root_q(s: f64, q: f64) -> f64 {
    if q == 4.0 {
        s.sqrt().sqrt()
    } else if q == 2.0 {
        s.sqrt()
    } else {
        s.powf(1.0 / q)
    }
}

const MAX_SPAN: usize = 4;
const GRAM: usize = MAX_SPAN * (MAX_SPAN + 1) / 2;

/// Upper-triangular Gram entries, off-diagonal ones doubled.
fn gram(vecs: &[&[f64]], f: impl Fn(usize, usize) -> f64, out: &mut [f64; GRAM]) {
    let mut idx = 0;
    for i in 0..vecs.len() {
        for j in i..vecs.len() {
            out[idx] = if i == j { f(i, j) } else { 2.0 * f(i, j) };
            idx += 1;
        }
    }
}

#[inline]
fn quad_form(g: &[f64; GRAM], k: usize, c: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut idx = 0;
    for i in 0..k {
        for j in i..k {
            acc += g[idx] * c[i] * c[j];
            idx += 1;
        }
    }
    acc.max(0.0)
}

/// Span evaluator returned by [`StarBody::span`].
pub enum Span<'a> {
    Quadratic {
        g: [f64; GRAM],
        k: usize,
    },
    Blocks {
        blocks: Vec<[f64; GRAM]>,
        k: usize,
        q: f64,
    },
    Scaled {
        inner: Box<Span<'a>>,
        inv: f64,
    },
    Average(Vec<Span<'a>>),
    Perturbed {
        base: Box<Span<'a>>,
        vecs: Vec<Vec<f64>>,
        buf: Vec<f64>,
        eps: f64,
        exponent: f64,
        bump: &'a Bump,
    },
}

impl Span<'_> {
    /// ‖Σ c_i v_i‖.
    pub fn eval(&mut self, c: &[f64]) -> f64 {
        match self {
            Span::Quadratic { g, k } => quad_form(g, *k, c).sqrt(),
            Span::Blocks { blocks, k, q } => {
                let mut acc = 0.0;
                for g in blocks.iter() {
                    acc += pow_half_q(quad_form(g, *k, c), *q);
                }
                root_q(acc, *q)
            }
            Span::Scaled { inner, inv } => inner.eval(c) * *inv,
            Span::Average(parts) => {
                let k = parts.len() as f64;
                parts.iter_mut().map(|p| p.eval(c)).sum::<f64>() / k
            }
            Span::Perturbed {
                base,
                vecs,
                buf,
                eps,
                exponent,
                bump,
            } => {
                let nb = base.eval(c);
                buf.iter_mut().for_each(|v| *v = 0.0);
                for (ci, v) in c.iter().zip(vecs.iter()) {
                    buf.iter_mut().zip(v).for_each(|(o, x)| *o += ci * x);
                }
                let r = norm2(buf);
                let v = nb.powf(-*exponent) - *eps * bump.eval_direction(buf) * r.powf(-*exponent);
                if v > 0.0 {
                    v.powf(-1.0 / *exponent)
                } else {
                    f64::NAN
                }
            }
        }
    }
}

/// Linear combination of invariant harmonic atoms, used as a perturbation bump.
#[derive(Clone, Debug)]
pub struct Bump {
    pub n: usize,
    pub terms: Vec<(String, f64)>,
    compiled: Vec<CompiledDegree>,
}

#[derive(Clone, Debug)]
enum CompiledDegree {
    /// Σ c·Π m_j^{α_j} at the given degree.
    Diagonal {
        degree: usize,
        terms: Vec<(Vec<u8>, f64)>,
    },
    General {
        degree: usize,
        atom: HarmonicAtom,
    },
}

impl Bump {
    pub fn new(n: usize, terms: Vec<(String, f64)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(spec_err("bump", "empty bump"));
        }
        let mut diag: std::collections::BTreeMap<usize, std::collections::BTreeMap<Vec<u8>, f64>> = Default::default();
        let mut compiled = Vec::new();
        for (id, c) in &terms {
            if !c.is_finite() {
                return Err(spec_err(id.as_str(), "non-finite coefficient"));
            }
            let atom = atom_by_id(n, id)?;
            let is_diag = atom.poly.terms.keys().all(|(a, b)| a == b);
            if is_diag {
                let slot = diag.entry(atom.degree).or_default();
                for ((a, _), v) in &atom.poly.terms {
                    *slot.entry(a.clone()).or_insert(0.0) += c * v.re;
                }
            } else {
                let mut scaled = atom.clone();
                scaled.poly = scaled.poly.scale(Complex64::new(*c, 0.0));
                compiled.push(CompiledDegree::General {
                    degree: atom.degree,
                    atom: scaled,
                });
            }
        }
        for (degree, t) in diag {
            compiled.push(CompiledDegree::Diagonal {
                degree,
                terms: t.into_iter().collect(),
            });
        }
        Ok(Self { n, terms, compiled })
    }

    pub fn single(n: usize, id: &str) -> Result<Self> {
        Self::new(n, vec![(id.to_string(), 1.0)])
    }

    /// `id` or `id:coef;id:coef;...`.
    pub fn parse(s: &str, n: usize) -> Result<Self> {
        let mut terms = Vec::new();
        for part in split_top_level(s, ';')? {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (id, coef) = match part.split_once(':') {
                Some((id, c)) => (id.trim(), crate::spec::parse_number(c)?),
                None => (part, 1.0),
            };
            terms.push((id.to_string(), coef));
        }
        Self::new(n, terms)
    }

    pub fn spec(&self) -> String {
        self.terms
            .iter()
            .map(|(id, c)| format!("{id}:{}", fmt_f64(*c)))
            .collect::<Vec<_>>()
            .join(";")
    }

    /// g(x/|x|).
    pub fn eval_direction(&self, x: &[f64]) -> f64 {
        let r2 = dot(x, x);
        let mut m = [0.0f64; 16];
        for (j, c) in x.chunks_exact(2).enumerate() {
            m[j] = (c[0] * c[0] + c[1] * c[1]) / r2;
        }
        let mut acc = 0.0;
        for c in &self.compiled {
            match c {
                CompiledDegree::Diagonal { terms, .. } => {
                    for (a, v) in terms {
                        let mut t = *v;
                        for (j, &e) in a.iter().enumerate() {
                            if e > 0 {
                                t *= m[j].powi(e as i32);
                            }
                        }
                        acc += t;
                    }
                }
                CompiledDegree::General { degree, atom } => {
                    acc += atom.poly.eval(x) / r2.powi(*degree as i32 / 2);
                }
            }
        }
        acc
    }

    /// Certified bound on sup |g| over the sphere (|z^α z̄^β| ≤ 1 there).
    pub fn sup_bound(&self) -> f64 {
        self.compiled
            .iter()
            .map(|c| match c {
                CompiledDegree::Diagonal { terms, .. } => terms.iter().map(|(_, v)| v.abs()).sum(),
                CompiledDegree::General { atom, .. } => atom.poly.max_abs_coefficient_sum(),
            })
            .sum()
    }

    fn torus_invariant(&self) -> bool {
        self.compiled
            .iter()
            .all(|c| matches!(c, CompiledDegree::Diagonal { .. }))
    }

    pub fn max_degree(&self) -> usize {
        self.compiled
            .iter()
            .map(|c| match c {
                CompiledDegree::Diagonal { degree, .. } | CompiledDegree::General { degree, .. } => *degree,
            })
            .max()
            .unwrap_or(0)
    }
}

/// Deterministic quasi-uniform unit vectors (Halton mapped through the normal quantile).
pub fn sphere_samples(dim: usize, count: usize, offset: u64) -> Vec<Vec<f64>> {
    let normal = Normal::standard();
    let mut u = vec![0.0; dim];
    (0..count)
        .map(|i| {
            halton(offset + i as u64 + 1, &mut u);
            let mut x: Vec<f64> = u
                .iter()
                .map(|&v| normal.inverse_cdf(v.clamp(1e-16, 1.0 - 1e-16)))
                .collect();
            let r = norm2(&x);
            x.iter_mut().for_each(|v| *v /= r);
            x
        })
        .collect()
}

fn sampled_min_power(base: &StarBody, eps: f64, exponent: f64, bump: &Bump) -> f64 {
    sphere_samples(base.dim(), 20_000, 7)
        .par_iter()
        .map(|t| base.norm_unchecked(t).powf(-exponent) - eps * bump.eval_direction(t))
        .reduce(|| f64::INFINITY, f64::min)
}

/// Sup-distance between radial functions over `count` quasi-uniform directions.
pub fn radial_distance(a: &StarBody, b: &StarBody, count: usize) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Domain("bodies live in different dimensions".into()));
    }
    Ok(sphere_samples(a.dim(), count, 0)
        .par_iter()
        .map(|t| (1.0 / a.norm_unchecked(t) - 1.0 / b.norm_unchecked(t)).abs())
        .reduce(|| 0.0, f64::max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub samples: usize,
    pub violations: usize,
    pub worst_gap: f64,
}

/// Midpoint test on random boundary pairs at several separations. A probe, not a proof.
pub fn convexity_probe(body: &StarBody, samples: usize, seed: u64) -> ConvexityReport {
    const SPREAD: [f64; 4] = [f64::INFINITY, 0.3, 0.1, 0.03];
    const TOL: f64 = 1e-10;
    let chunk = 4096;
    let chunks = samples.div_ceil(chunk);
    let dim = body.dim();
    let parts: Vec<(usize, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut viol = 0;
            let mut worst = f64::NEG_INFINITY;
            let mut x = vec![0.0; dim];
            let mut y = vec![0.0; dim];
            let mut mid = vec![0.0; dim];
            for i in c * chunk..((c + 1) * chunk).min(samples) {
                x.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                let spread = SPREAD[i % SPREAD.len()];
                if spread.is_infinite() {
                    y.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
                } else {
                    let r = norm2(&x);
                    for (yv, xv) in y.iter_mut().zip(&x) {
                        let e: f64 = rng.sample(StandardNormal);
                        *yv = xv / r + spread * e / (dim as f64).sqrt();
                    }
                }
                let nx = body.norm_unchecked(&x);
                let ny = body.norm_unchecked(&y);
                for k in 0..dim {
                    mid[k] = 0.5 * (x[k] / nx + y[k] / ny);
                }
                if mid.iter().all(|v| v.abs() < 1e-300) {
                    continue;
                }
                let gap = body.norm_unchecked(&mid) - 1.0;
                if !(gap <= TOL) {
                    viol += 1;
                }
                if gap > worst || gap.is_nan() {
                    worst = if gap.is_nan() { f64::INFINITY } else { gap };
                }
            }
            (viol, worst)
        })
        .collect();
    ConvexityReport {
        samples,
        violations: parts.iter().map(|p| p.0).sum(),
        worst_gap: parts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Span evaluation next to direct evaluation, for consistency checks.
#[doc(hidden)]
pub fn span_consistency(body: &StarBody, vecs: &[&[f64]], c: &[f64]) -> (f64, f64) {
    let mut direct = vec![0.0; body.dim()];
    for (ci, v) in c.iter().zip(vecs) {
        direct.iter_mut().zip(v.iter()).for_each(|(o, x)| *o += ci * x);
    }
    (body.span(vecs).eval(c), body.norm_unchecked(&direct))
}

/// Real 2n×2n matrices of the mollifier, for invariance checks.
#[doc(hidden)]
pub fn mollifier_maps(body: &StarBody) -> Option<Vec<DMatrix<f64>>> {
    match &*body.kind {
        Kind::Mollified { maps, .. } => Some(maps.clone()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::rotate;
    use proptest::prelude::*;

    fn bodies() -> Vec<StarBody> {
        let clq = StarBody::complex_lq(3, 4.0).unwrap();
        vec![
            StarBody::ball(6).unwrap(),
            clq.clone(),
            StarBody::complex_lq(3, 1.5).unwrap(),
            clq.scaled(0.7).unwrap(),
            clq.mollify(0.1).unwrap(),
            clq.mollify(0.05)
                .unwrap()
                .perturb(0.02, 4.0, Bump::single(3, "s4_0").unwrap())
                .unwrap(),
        ]
    }

    #[test]
    fn norm_examples() {
        let b = StarBody::ball(4).unwrap();
        assert_eq!(b.norm(&[1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        let c = StarBody::complex_lq(2, 4.0).unwrap();
        assert!((c.norm(&[1.0, 0.0, 1.0, 0.0]).unwrap() - 2f64.powf(0.25)).abs() < 1e-15);
        for t in [0.0f64, 0.4, 2.0, 5.5] {
            assert!((c.norm(&[t.cos(), t.sin(), 0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        }
        assert!(c.norm(&[0.0; 4]).is_err());
        assert!(c.norm(&[1.0; 6]).is_err());
    }

    #[test]
    fn radial_examples() {
        let s = 0.5f64.sqrt();
        let c = StarBody::complex_lq(2, 4.0).unwrap();
        assert!((c.radial(&[s, 0.0, s, 0.0]).unwrap() - 2f64.powf(0.25)).abs() < 1e-14);
        assert!(c.radial(&[1.0, 1.0, 0.0, 0.0]).is_err());
        let b = StarBody::ball(6).unwrap();
        assert_eq!(b.radial(&[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]).unwrap(), 1.0);
        let p = c.perturb(0.0, 2.0, Bump::single(2, "s4_0").unwrap()).unwrap();
        let t = [0.6, 0.0, 0.0, 0.8];
        assert!((p.radial(&t).unwrap() - c.radial(&t).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn mollified_ball_is_ball() {
        let m = StarBody::ball(8).unwrap().mollify(0.3).unwrap();
        for t in sphere_samples(8, 200, 3) {
            assert!((m.norm(&t).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn mollifier_maps_are_unitary() {
        let m = StarBody::complex_lq(3, 4.0).unwrap().mollify(0.2).unwrap();
        for q in mollifier_maps(&m).unwrap() {
            let e = (q.transpose() * &q - DMatrix::<f64>::identity(6, 6)).abs().max();
            assert!(e < 1e-13);
        }
    }

    #[test]
    fn mollification_converges() {
        let base = StarBody::complex_lq(3, 4.0).unwrap();
        let widths = [0.4, 0.2, 0.1, 0.05];
        let d: Vec<f64> = widths
            .iter()
            .map(|&w| radial_distance(&base.mollify(w).unwrap(), &base, 4000).unwrap())
            .collect();
        for w in d.windows(2) {
            assert!(w[1] <= w[0], "{d:?}");
        }
        assert!(d[3] < d[1]);
    }

    #[test]
    fn convexity_examples() {
        assert_eq!(convexity_probe(&StarBody::ball(8).unwrap(), 100_000, 1).violations, 0);
        assert_eq!(
            convexity_probe(&StarBody::complex_lq(4, 4.0).unwrap(), 100_000, 1).violations,
            0
        );
        // ρ⁶ = h with h ranging over [0.5, 729]: the radial function triples at the peak.
        let atom = crate::harmonics::atom_by_id(4, "s8_0").unwrap();
        let c0 = crate::harmonics::atom_by_id(4, "const")
            .unwrap()
            .eval(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let samples = sphere_samples(8, 20_000, 11);
        let (pmin, pmax) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| {
            let g = atom.eval(t);
            (a.min(g), b.max(g))
        });
        let slope = 728.5 / (pmax - pmin);
        let bump = Bump::new(
            4,
            vec![("const".into(), (0.5 + slope * pmin) / c0), ("s8_0".into(), -slope)],
        )
        .unwrap();
        let k = StarBody::ball(8).unwrap().perturb(1.0, 6.0, bump).unwrap();
        let peak = samples.iter().map(|t| k.radial(t).unwrap()).fold(0.0, f64::max);
        assert!(peak > 2.9, "{peak}");
        assert!(convexity_probe(&k, 100_000, 2).violations > 0);
    }

    #[test]
    fn spec_roundtrip() {
        for b in bodies() {
            let s = b.spec();
            let again = StarBody::parse(&s).unwrap();
            assert_eq!(again.spec(), s);
            for t in sphere_samples(6, 50, 1) {
                assert_eq!(again.norm(&t).unwrap().to_bits(), b.norm(&t).unwrap().to_bits());
            }
        }
        assert!(StarBody::parse("clq:n=4,q=4").is_ok());
        assert!(StarBody::parse("mollify:base=clq:n=4,q=4,width=0.05").is_err());
        assert!(StarBody::parse("mollify:base=[clq:n=4,q=4],width=0.05").is_ok());
        assert!(StarBody::parse("perturb:base=[ball:dim=8],eps=0.01,bump=s4_0,exponent=6").is_ok());
        let e = StarBody::parse("ball:dim=5").unwrap_err().to_string();
        assert!(e.contains("ball:dim=5"), "{e}");
        assert!(StarBody::parse("cube:dim=4").is_err());
    }

    #[test]
    fn radius_bounds_hold() {
        for b in bodies() {
            for t in sphere_samples(6, 2000, 5) {
                let r = b.radial(&t).unwrap();
                assert!(
                    r >= b.r_min() * (1.0 - 1e-12) && r <= b.r_max() * (1.0 + 1e-12),
                    "{}",
                    b.spec()
                );
            }
        }
    }

    proptest! {
        #[test]
        fn homogeneous_and_even(x in proptest::collection::vec(-1.0f64..1.0, 6), k in 0usize..4) {
            prop_assume!(norm2(&x) > 1e-3);
            let lambda = [-3.0, -1.0, 0.5, 2.0][k];
            for b in bodies() {
                let nx = b.norm(&x).unwrap();
                let y: Vec<f64> = x.iter().map(|v| lambda * v).collect();
                prop_assert!((b.norm(&y).unwrap() - lambda.abs() * nx).abs() <= 1e-10 * nx);
            }
        }

        #[test]
        fn rotation_invariant(x in proptest::collection::vec(-1.0f64..1.0, 6), t in 0.0f64..6.3) {
            prop_assume!(norm2(&x) > 1e-3);
            for b in bodies() {
                prop_assert!(b.invariance().is_complex_rotation());
                let nx = b.norm(&x).unwrap();
                let ny = b.norm(&rotate(&x, t).unwrap()).unwrap();
                prop_assert!((nx - ny).abs() <= 1e-10 * nx);
            }
        }

        #[test]
        fn radial_inverts_norm(x in proptest::collection::vec(-1.0f64..1.0, 6)) {
            prop_assume!(norm2(&x) > 1e-3);
            let r = norm2(&x);
            let t: Vec<f64> = x.iter().map(|v| v / r).collect();
            for b in bodies() {
                let rho = b.radial(&t).unwrap();
                let p: Vec<f64> = t.iter().map(|v| v * rho).collect();
                prop_assert!((b.norm(&p).unwrap() - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn span_matches_direct(a in proptest::collection::vec(-1.0f64..1.0, 6), b in proptest::collection::vec(-1.0f64..1.0, 6), c in proptest::collection::vec(-1.0f64..1.0, 6), s in -2.0f64..2.0, t in -2.0f64..2.0, r in -2.0f64..2.0) {
            let x: Vec<f64> = (0..6).map(|i| s * a[i] + t * b[i] + r * c[i]).collect();
            prop_assume!(norm2(&x) > 1e-3);
            for body in bodies() {
                let (l, d) = span_consistency(&body, &[&a, &b, &c], &[s, t, r]);
                prop_assert!((l - d).abs() <= 1e-12 * d.max(1.0), "{} {} {}", body.spec(), l, d);
            }
        }
    }
}
