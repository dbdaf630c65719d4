//! R_θ-invariant spherical harmonics on R^{2n} written as polynomials in z and z̄,
//! with z_j = x_{2j} + i·x_{2j+1}.

use crate::error::{spec_err, Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, OnceLock};

type Exps = Vec<u8>;

/// Σ c_{αβ} z^α z̄^β.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ZPoly {
    pub n: usize,
    pub terms: BTreeMap<(Exps, Exps), Complex64>,
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// ∫_{S^{2n-1}} |z^μ|² dσ = 2π^n μ! / (n − 1 + |μ|)!.
fn sphere_moment(mu: &[u32]) -> f64 {
    let n = mu.len() as u32;
    let total: u32 = mu.iter().sum();
    let num: f64 = mu.iter().map(|&m| factorial(m)).product();
    2.0 * std::f64::consts::PI.powi(n as i32) * num / factorial(n - 1 + total)
}

impl ZPoly {
    pub fn zero(n: usize) -> Self {
        Self {
            n,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        let mut p = Self::zero(n);
        p.add_term(vec![0; n], vec![0; n], Complex64::new(c, 0.0));
        p
    }

    pub fn monomial(alpha: Exps, beta: Exps) -> Self {
        let mut p = Self::zero(alpha.len());
        p.add_term(alpha, beta, Complex64::new(1.0, 0.0));
        p
    }

    fn add_term(&mut self, a: Exps, b: Exps, c: Complex64) {
        let e = self.terms.entry((a, b)).or_insert(Complex64::new(0.0, 0.0));
        *e += c;
    }

    fn prune(mut self) -> Self {
        self.terms.retain(|_, c| c.norm() > 1e-300);
        self
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            n: self.n,
            terms: self.terms.iter().map(|(k, v)| (k.clone(), v * c)).collect(),
        }
    }

    pub fn add(&self, other: &ZPoly) -> Self {
        let mut out = self.clone();
        for (k, v) in &other.terms {
            out.add_term(k.0.clone(), k.1.clone(), *v);
        }
        out.prune()
    }

    pub fn mul(&self, other: &ZPoly) -> Self {
        let mut out = Self::zero(self.n);
        for ((a1, b1), c1) in &self.terms {
            for ((a2, b2), c2) in &other.terms {
                let a: Exps = a1.iter().zip(a2).map(|(x, y)| x + y).collect();
                let b: Exps = b1.iter().zip(b2).map(|(x, y)| x + y).collect();
                out.add_term(a, b, c1 * c2);
            }
        }
        out.prune()
    }

    /// Complex conjugate polynomial.
    pub fn conj(&self) -> Self {
        Self {
            n: self.n,
            terms: self
                .terms
                .iter()
                .map(|((a, b), c)| ((b.clone(), a.clone()), c.conj()))
                .collect(),
        }
    }

    /// Multiplies by |x|^{2k} = (Σ z_j z̄_j)^k.
    pub fn lift(&self, k: usize) -> Self {
        let mut r2 = Self::zero(self.n);
        for j in 0..self.n {
            let mut e = vec![0; self.n];
            e[j] = 1;
            r2.add_term(e.clone(), e, Complex64::new(1.0, 0.0));
        }
        let mut out = self.clone();
        for _ in 0..k {
            out = out.mul(&r2);
        }
        out
    }

    /// Total degree in x (both z and z̄), if homogeneous.
    pub fn degree(&self) -> Option<usize> {
        let mut deg = None;
        for (a, b) in self.terms.keys() {
            let d: usize = a.iter().chain(b).map(|&e| e as usize).sum();
            match deg {
                None => deg = Some(d),
                Some(x) if x != d => return None,
                _ => {}
            }
        }
        deg.or(Some(0))
    }

    /// Laplacian in x: Δ = 4 Σ ∂²/∂z_j∂z̄_j.
    pub fn laplacian(&self) -> Self {
        let mut out = Self::zero(self.n);
        for ((a, b), c) in &self.terms {
            for j in 0..self.n {
                if a[j] > 0 && b[j] > 0 {
                    let mut a2 = a.clone();
                    let mut b2 = b.clone();
                    a2[j] -= 1;
                    b2[j] -= 1;
                    out.add_term(a2, b2, c * (4.0 * a[j] as f64 * b[j] as f64));
                }
            }
        }
        out.prune()
    }

    /// ∫_{S^{2n-1}} P·conj(Q).
    pub fn inner(&self, other: &ZPoly) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut mu = vec![0u32; self.n];
        for ((a, b), c1) in &self.terms {
            for ((g, d), c2) in &other.terms {
                // z^a z̄^b · z̄^g z^d is nonzero on average iff a + d = b + g.
                let mut ok = true;
                for j in 0..self.n {
                    let lhs = a[j] as u32 + d[j] as u32;
                    if lhs != b[j] as u32 + g[j] as u32 {
                        ok = false;
                        break;
                    }
                    mu[j] = lhs;
                }
                if ok {
                    acc += c1 * c2.conj() * sphere_moment(&mu);
                }
            }
        }
        acc
    }

    pub fn max_abs_coefficient_sum(&self) -> f64 {
        self.terms.values().map(|c| c.norm()).sum()
    }

    /// Real part of P(x).
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = self.n;
        debug_assert_eq!(x.len(), 2 * n);
        let max_e = self
            .terms
            .keys()
            .flat_map(|(a, b)| a.iter().chain(b))
            .copied()
            .max()
            .unwrap_or(0) as usize;
        let mut zp = vec![Complex64::new(1.0, 0.0); n * (max_e + 1)];
        let mut zbp = zp.clone();
        for j in 0..n {
            let z = Complex64::new(x[2 * j], x[2 * j + 1]);
            for e in 1..=max_e {
                zp[j * (max_e + 1) + e] = zp[j * (max_e + 1) + e - 1] * z;
                zbp[j * (max_e + 1) + e] = zbp[j * (max_e + 1) + e - 1] * z.conj();
            }
        }
        let mut acc = Complex64::new(0.0, 0.0);
        for ((a, b), c) in &self.terms {
            let mut t = *c;
            for j in 0..n {
                t *= zp[j * (max_e + 1) + a[j] as usize] * zbp[j * (max_e + 1) + b[j] as usize];
            }
            acc += t;
        }
        acc.re
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// All R_θ-invariant harmonics.
    Full,
    /// Harmonics that are polynomials in the squared moduli |z_j|².
    Diagonal,
    /// Diagonal harmonics symmetric under permutations of the coordinates.
    SymmetricDiagonal,
}

impl Family {
    fn tag(self) -> char {
        match self {
            Family::Full => 'h',
            Family::Diagonal => 'd',
            Family::SymmetricDiagonal => 's',
        }
    }
}

#[derive(Clone, Debug)]
pub struct HarmonicAtom {
    pub id: String,
    pub degree: usize,
    pub poly: ZPoly,
}

impl HarmonicAtom {
    /// Value at a unit vector.
    pub fn eval(&self, theta: &[f64]) -> f64 {
        self.poly.eval(theta)
    }

    /// Value of P(x/|x|).
    pub fn eval_direction(&self, x: &[f64]) -> f64 {
        let r = crate::frames::norm2(x);
        self.poly.eval(x) / r.powi(self.degree as i32)
    }
}

#[derive(Clone, Debug)]
pub struct HarmonicSet {
    pub n: usize,
    pub family: Family,
    pub max_degree: usize,
    pub atoms: Vec<HarmonicAtom>,
    /// Candidates dropped for rank loss.
    pub dropped: usize,
}

impl HarmonicSet {
    pub fn get(&self, id: &str) -> Option<&HarmonicAtom> {
        self.atoms.iter().find(|a| a.id == id)
    }

    pub fn of_degree(&self, j: usize) -> impl Iterator<Item = &HarmonicAtom> {
        self.atoms.iter().filter(move |a| a.degree == j)
    }
}

fn compositions(n: usize, k: usize) -> Vec<Exps> {
    if n == 1 {
        return vec![vec![k as u8]];
    }
    let mut out = Vec::new();
    for first in (0..=k).rev() {
        for mut rest in compositions(n - 1, k - first) {
            rest.insert(0, first as u8);
            out.push(rest);
        }
    }
    out
}

fn partitions(n: usize, k: usize, max: usize) -> Vec<Exps> {
    if k == 0 {
        return vec![vec![0; n]];
    }
    if n == 0 {
        return vec![];
    }
    let mut out = Vec::new();
    for first in (1..=k.min(max)).rev() {
        for mut rest in partitions(n - 1, k - first, first) {
            rest.insert(0, first as u8);
            out.push(rest);
        }
    }
    out
}

/// Torus weight α − β.
fn weight_of(a: &[u8], b: &[u8]) -> Vec<i32> {
    a.iter().zip(b).map(|(x, y)| *x as i32 - *y as i32).collect()
}

/// Candidate polynomials at half-degree k, grouped into mutually orthogonal blocks.
fn candidates(n: usize, k: usize, family: Family) -> Vec<(Vec<i32>, Vec<ZPoly>)> {
    match family {
        Family::SymmetricDiagonal => {
            let polys = partitions(n, k, k)
                .into_iter()
                .map(|lambda| {
                    let mut p = ZPoly::zero(n);
                    let mut seen = std::collections::BTreeSet::new();
                    for perm in compositions(n, k) {
                        let mut s = perm.clone();
                        s.sort_unstable_by(|a, b| b.cmp(a));
                        if s == lambda && seen.insert(perm.clone()) {
                            p.add_term(perm.clone(), perm, Complex64::new(1.0, 0.0));
                        }
                    }
                    p
                })
                .collect();
            vec![(vec![0; n], polys)]
        }
        Family::Diagonal => vec![(
            vec![0; n],
            compositions(n, k)
                .into_iter()
                .map(|a| ZPoly::monomial(a.clone(), a))
                .collect(),
        )],
        Family::Full => {
            let mut blocks: BTreeMap<Vec<i32>, Vec<ZPoly>> = BTreeMap::new();
            let comps = compositions(n, k);
            for a in &comps {
                for b in &comps {
                    let w = weight_of(a, b);
                    // Keep weight 0 and one representative of each ±w pair.
                    if w.iter().find(|&&x| x != 0).is_none_or(|&x| x > 0) {
                        blocks.entry(w).or_default().push(ZPoly::monomial(a.clone(), b.clone()));
                    }
                }
            }
            blocks.into_iter().rev().collect()
        }
    }
}

/// Builds orthonormal R_θ-invariant harmonic atoms of even degree ≤ max_degree.
pub fn build_invariant_harmonics(n: usize, max_degree: usize, family: Family) -> Result<Arc<HarmonicSet>> {
    if !max_degree.is_multiple_of(2) || max_degree > 8 {
        return Err(Error::OutOfRange(format!(
            "harmonic degree must be even and at most 8, got {max_degree}"
        )));
    }
    if !(2..=8).contains(&n) {
        return Err(Error::OutOfRange(format!(
            "complex dimension must be in [2, 8], got {n}"
        )));
    }
    static CACHE: OnceLock<Mutex<BTreeMap<(usize, usize, Family), Arc<HarmonicSet>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(s) = cache.lock().expect("harmonic cache").get(&(n, max_degree, family)) {
        return Ok(s.clone());
    }
    // Complex orthonormal polynomials per (weight, half-degree).
    let mut lower: BTreeMap<Vec<i32>, Vec<(usize, ZPoly)>> = BTreeMap::new();
    let mut atoms = vec![HarmonicAtom {
        id: "const".into(),
        degree: 0,
        poly: ZPoly::constant(n, 1.0 / crate::special::sphere_area(2 * n).sqrt()),
    }];
    lower.entry(vec![0; n]).or_default().push((0, atoms[0].poly.clone()));
    let mut dropped = 0;
    for k in 1..=max_degree / 2 {
        let mut index = 0;
        for (w, cands) in candidates(n, k, family) {
            let mut accepted: Vec<ZPoly> = Vec::new();
            for cand in cands {
                let base_norm = cand.inner(&cand).re.sqrt();
                let mut p = cand;
                for _ in 0..2 {
                    for (deg, q) in lower.get(&w).map(|v| v.as_slice()).unwrap_or(&[]) {
                        let c = p.inner(q);
                        p = p.add(&q.lift(k - deg).scale(-c));
                    }
                    for q in &accepted {
                        let c = p.inner(q);
                        p = p.add(&q.scale(-c));
                    }
                }
                let r = p.inner(&p).re.sqrt();
                if r <= 1e-9 * base_norm {
                    dropped += 1;
                    continue;
                }
                accepted.push(p.scale(Complex64::new(1.0 / r, 0.0)));
            }
            let is_zero_weight = w.iter().all(|&x| x == 0);
            for p in &accepted {
                if is_zero_weight {
                    atoms.push(HarmonicAtom {
                        id: format!("{}{}_{}", family.tag(), 2 * k, index),
                        degree: 2 * k,
                        poly: p.clone(),
                    });
                    index += 1;
                } else {
                    let s = std::f64::consts::FRAC_1_SQRT_2;
                    let re = p.add(&p.conj()).scale(Complex64::new(s, 0.0));
                    let im = p
                        .add(&p.conj().scale(Complex64::new(-1.0, 0.0)))
                        .scale(Complex64::new(0.0, -s));
                    for poly in [re, im] {
                        atoms.push(HarmonicAtom {
                            id: format!("{}{}_{}", family.tag(), 2 * k, index),
                            degree: 2 * k,
                            poly,
                        });
                        index += 1;
                    }
                }
            }
            let entry = lower.entry(w.clone()).or_default();
            entry.extend(accepted.iter().map(|p| (k, p.clone())));
            if !is_zero_weight {
                let neg: Vec<i32> = w.iter().map(|x| -x).collect();
                lower
                    .entry(neg)
                    .or_default()
                    .extend(accepted.iter().map(|p| (k, p.conj())));
            }
        }
    }
    let set = Arc::new(HarmonicSet {
        n,
        family,
        max_degree,
        atoms,
        dropped,
    });
    cache
        .lock()
        .expect("harmonic cache")
        .insert((n, max_degree, family), set.clone());
    Ok(set)
}

/// Looks up an atom by id (`const`, `h4_2`, `d2_0`, `s8_1`).
pub fn atom_by_id(n: usize, id: &str) -> Result<HarmonicAtom> {
    let family = match id.chars().next() {
        _ if id == "const" => Family::SymmetricDiagonal,
        Some('h') => Family::Full,
        Some('d') => Family::Diagonal,
        Some('s') => Family::SymmetricDiagonal,
        _ => return Err(spec_err(id, "unknown harmonic atom")),
    };
    let degree: usize = if id == "const" {
        0
    } else {
        id[1..]
            .split('_')
            .next()
            .and_then(|d| d.parse().ok())
            .ok_or_else(|| spec_err(id, "unknown harmonic atom"))?
    };
    if degree > 8 || !degree.is_multiple_of(2) {
        return Err(spec_err(id, "atom degree must be even and at most 8"));
    }
    let set = build_invariant_harmonics(n, degree, family).map_err(|e| spec_err(id, e.to_string()))?;
    set.get(id)
        .cloned()
        .ok_or_else(|| spec_err(id, "no such harmonic atom"))
}
