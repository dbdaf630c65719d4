//! Complex structure on R^{2n}: the rotation R_θ, the partner direction ξ^⊥,
//! orthonormal frames of H_ξ, and direction grids.

use crate::error::{spec_err, Error, Result};
use crate::quadrature::halton;
use crate::spec::SpecString;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

pub(crate) const UNIT_TOL: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn check_unit(x: &[f64]) -> Result<()> {
    let r = norm2(x);
    if (r - 1.0).abs() > UNIT_TOL {
        return Err(Error::Domain(format!("expected a unit vector, got |x| = {r}")));
    }
    Ok(())
}

fn check_even(x: &[f64]) -> Result<()> {
    if x.is_empty() || !x.len().is_multiple_of(2) {
        return Err(Error::Domain(format!("expected an even dimension, got {}", x.len())));
    }
    Ok(())
}

/// Applies R_θ to every coordinate pair.
pub fn rotate(x: &[f64], theta: f64) -> Result<Vec<f64>> {
    check_even(x)?;
    let (s, c) = theta.sin_cos();
    let mut out = vec![0.0; x.len()];
    for j in 0..x.len() / 2 {
        let (a, b) = (x[2 * j], x[2 * j + 1]);
        out[2 * j] = c * a - s * b;
        out[2 * j + 1] = s * a + c * b;
    }
    Ok(out)
}

/// (−x_{12}, x_{11}, ..., −x_{n2}, x_{n1}).
pub fn perp(x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for j in 0..x.len() / 2 {
        out[2 * j] = -x[2 * j + 1];
        out[2 * j + 1] = x[2 * j];
    }
    out
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ComplexFrame {
    pub xi: Vec<f64>,
    pub xi_perp: Vec<f64>,
    /// Orthonormal basis of H_ξ, in pairs (v, v^⊥).
    pub basis: Vec<Vec<f64>>,
}

impl ComplexFrame {
    pub fn dim(&self) -> usize {
        self.xi.len()
    }

    /// u₁ξ + u₂ξ^⊥.
    pub fn offset_point(&self, u: [f64; 2]) -> Vec<f64> {
        self.xi
            .iter()
            .zip(&self.xi_perp)
            .map(|(a, b)| u[0] * a + u[1] * b)
            .collect()
    }

    /// Σ c_k basis_k.
    pub fn embed(&self, coords: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (c, v) in coords.iter().zip(&self.basis) {
            for (o, x) in out.iter_mut().zip(v) {
                *o += c * x;
            }
        }
    }
}

pub fn make_frame(xi: &[f64]) -> Result<ComplexFrame> {
    check_even(xi)?;
    check_unit(xi)?;
    let dim = xi.len();
    let xi_perp = perp(xi);
    let mut set: Vec<Vec<f64>> = vec![xi.to_vec(), xi_perp.clone()];
    let mut basis = Vec::with_capacity(dim - 2);
    while basis.len() < dim - 2 {
        // Seed with the coordinate vector that keeps the largest residual.
        let mut best: Option<(f64, Vec<f64>)> = None;
        for k in 0..dim {
            let mut v = vec![0.0; dim];
            v[k] = 1.0;
            for _ in 0..2 {
                for e in &set {
                    let c = dot(&v, e);
                    v.iter_mut().zip(e).for_each(|(x, y)| *x -= c * y);
                }
            }
            let r = norm2(&v);
            if best.as_ref().is_none_or(|(b, _)| r > *b) {
                best = Some((r, v));
            }
        }
        let (r, mut v) = best.expect("dimension is positive");
        v.iter_mut().for_each(|x| *x /= r);
        let w = perp(&v);
        set.push(v.clone());
        set.push(w.clone());
        basis.push(v);
        basis.push(w);
    }
    Ok(ComplexFrame {
        xi: xi.to_vec(),
        xi_perp,
        basis,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Quasi-uniform points on the full sphere.
    None,
    /// One point per torus orbit: (r_1, 0, ..., r_n, 0) on a lattice of the moduli simplex.
    Torus,
    /// Torus orbits further reduced by permutations of the moduli (sorted descending).
    Orbit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub res: usize,
    pub reduce: Reduction,
    pub seed: u64,
}

impl GridSpec {
    pub fn parse(s: &str) -> Result<Self> {
        let sp = SpecString::parse(s)?;
        if sp.kind != "grid" {
            return Err(spec_err(&sp.kind, "expected `grid`"));
        }
        sp.only(&["dim", "res", "reduce", "seed"])?;
        let dim = sp
            .count("dim")?
            .ok_or_else(|| spec_err("grid:dim", "missing required key"))? as usize;
        let res = sp.count("res")?.unwrap_or(16) as usize;
        let reduce = match sp.get("reduce").unwrap_or("orbit") {
            "orbit" => Reduction::Orbit,
            "torus" => Reduction::Torus,
            "none" => Reduction::None,
            other => return Err(spec_err(other, "reduce must be orbit, torus or none")),
        };
        let seed = sp.count("seed")?.unwrap_or(0);
        let g = Self { dim, res, reduce, seed };
        g.validate()?;
        Ok(g)
    }

    fn validate(&self) -> Result<()> {
        if self.dim < 4 || !self.dim.is_multiple_of(2) || self.dim > 16 {
            return Err(spec_err(format!("dim={}", self.dim), "dim must be even and in [4, 16]"));
        }
        if self.res < 8 {
            return Err(spec_err(format!("res={}", self.res), "res must be at least 8"));
        }
        let limit = match self.reduce {
            Reduction::None => 1 << 22,
            _ => 4096,
        };
        if self.res > limit {
            return Err(spec_err(format!("res={}", self.res), "res too large"));
        }
        Ok(())
    }

    pub fn canonical(&self) -> String {
        let r = match self.reduce {
            Reduction::None => "none",
            Reduction::Torus => "torus",
            Reduction::Orbit => "orbit",
        };
        format!("grid:dim={},res={},reduce={r},seed={}", self.dim, self.res, self.seed)
    }

    pub fn build(&self) -> Result<DirectionGrid> {
        make_grid(self.dim, self.res, self.reduce, self.seed)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DirectionGrid {
    pub dim: usize,
    pub resolution: usize,
    pub reduction: Reduction,
    pub points: Vec<Vec<f64>>,
    /// Quadrature weights summing to 1; multiply by |S^{dim-1}| to integrate.
    pub weights: Vec<f64>,
    /// Number of lattice points each representative stands for.
    pub multiplicity: Vec<usize>,
}

impl DirectionGrid {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Squared moduli |z_j|² of a point.
    pub fn moduli(x: &[f64]) -> Vec<f64> {
        x.chunks(2).map(|c| c[0] * c[0] + c[1] * c[1]).collect()
    }
}

pub fn make_grid(dim: usize, resolution: usize, reduction: Reduction, seed: u64) -> Result<DirectionGrid> {
    GridSpec {
        dim,
        res: resolution,
        reduce: reduction,
        seed,
    }
    .validate()?;
    match reduction {
        Reduction::None => Ok(quasi_uniform_grid(dim, resolution, seed)),
        Reduction::Torus | Reduction::Orbit => Ok(simplex_grid(dim / 2, resolution, reduction == Reduction::Orbit)),
    }
}

fn quasi_uniform_grid(dim: usize, count: usize, seed: u64) -> DirectionGrid {
    let normal = Normal::standard();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    let mut u = vec![0.0; dim];
    let points: Vec<Vec<f64>> = (0..count)
        .map(|i| {
            halton(i as u64 + 1, &mut u);
            let mut x: Vec<f64> = u
                .iter()
                .zip(&shift)
                .map(|(a, s)| normal.inverse_cdf(((a + s).fract()).clamp(1e-16, 1.0 - 1e-16)))
                .collect();
            let r = norm2(&x);
            x.iter_mut().for_each(|v| *v /= r);
            x
        })
        .collect();
    DirectionGrid {
        dim,
        resolution: count,
        reduction: Reduction::None,
        weights: vec![1.0 / count as f64; count],
        multiplicity: vec![1; count],
        points,
    }
}

/// Lattice {i/R : i ∈ Z^n_{≥0}, Σi = R} on the moduli simplex with weights from the
/// Freudenthal triangulation (exact for functions affine in the squared moduli).
fn simplex_grid(n: usize, r: usize, sorted: bool) -> DirectionGrid {
    let weights = freudenthal_weights(n, r);
    let mut reps: Vec<(Vec<usize>, f64, usize)> = Vec::new();
    let mut index: std::collections::HashMap<Vec<usize>, usize> = Default::default();
    for (comp, w) in weights {
        let key = if sorted {
            let mut c = comp.clone();
            c.sort_unstable_by(|a, b| b.cmp(a));
            c
        } else {
            comp
        };
        match index.get(&key) {
            Some(&k) => {
                reps[k].1 += w;
                reps[k].2 += 1;
            }
            None => {
                index.insert(key.clone(), reps.len());
                reps.push((key, w, 1));
            }
        }
    }
    reps.sort_by(|a, b| a.0.cmp(&b.0));
    let mut points = Vec::with_capacity(reps.len());
    let mut ws = Vec::with_capacity(reps.len());
    let mut mult = Vec::with_capacity(reps.len());
    for (comp, w, m) in reps {
        let mut x = vec![0.0; 2 * n];
        for (j, &c) in comp.iter().enumerate() {
            x[2 * j] = (c as f64 / r as f64).sqrt();
        }
        let s = norm2(&x);
        x.iter_mut().for_each(|v| *v /= s);
        points.push(x);
        ws.push(w);
        mult.push(m);
    }
    DirectionGrid {
        dim: 2 * n,
        resolution: r,
        reduction: if sorted { Reduction::Orbit } else { Reduction::Torus },
        points,
        weights: ws,
        multiplicity: mult,
    }
}

fn freudenthal_weights(n: usize, r: usize) -> Vec<(Vec<usize>, f64)> {
    // Partial sums y_k = i_1 + ... + i_k turn the simplex into 0 ≤ y_1 ≤ ... ≤ y_{n-1} ≤ R,
    // which is a union of Freudenthal simplices of the unit cube lattice.
    let m = n - 1;
    let mut counts: std::collections::BTreeMap<Vec<usize>, usize> = Default::default();
    if m == 0 {
        return vec![(vec![r], 1.0)];
    }
    let perms = permutations(m);
    let mut base = vec![0usize; m];
    let mut total = 0usize;
    loop {
        for perm in &perms {
            let mut v = base.clone();
            let mut verts = vec![v.clone()];
            for &k in perm {
                v[k] += 1;
                verts.push(v.clone());
            }
            if verts.iter().all(|y| ordered(y, r)) {
                total += 1;
                for y in verts {
                    *counts.entry(y).or_insert(0) += 1;
                }
            }
        }
        // Advance the cube index.
        let mut k = 0;
        loop {
            if k == m {
                let scale = 1.0 / (n as f64 * total as f64);
                return counts
                    .into_iter()
                    .map(|(y, c)| (composition(&y, r), c as f64 * scale))
                    .collect();
            }
            base[k] += 1;
            if base[k] < r {
                break;
            }
            base[k] = 0;
            k += 1;
        }
    }
}

fn ordered(y: &[usize], r: usize) -> bool {
    y.windows(2).all(|w| w[0] <= w[1]) && y.last().is_none_or(|&l| l <= r)
}

fn composition(y: &[usize], r: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(y.len() + 1);
    let mut prev = 0;
    for &v in y {
        out.push(v - prev);
        prev = v;
    }
    out.push(r - prev);
    out
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(v: Vec<f64>) -> Vec<f64> {
        let r = norm2(&v);
        v.into_iter().map(|x| x / r).collect()
    }

    #[test]
    fn partner_direction() {
        let f = make_frame(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.xi_perp, vec![0.0, 1.0, 0.0, 0.0]);
        for b in &f.basis {
            assert!(b[0].abs() < 1e-15 && b[1].abs() < 1e-15);
        }
        let f = make_frame(&[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert_eq!(f.xi_perp, vec![-1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(make_frame(&[1.0, 1.0, 0.0, 0.0]).is_err());
        assert!(rotate(&[1.0, 0.0, 0.0], 0.3).is_err());
    }

    #[test]
    fn rotation_examples() {
        let y = rotate(&[1.0, 0.0, 0.0, 0.0], std::f64::consts::FRAC_PI_2).unwrap();
        assert!((y[1] - 1.0).abs() < 1e-15 && y[0].abs() < 1e-15);
        let y = rotate(&[1.0, 0.0, 1.0, 0.0], std::f64::consts::PI).unwrap();
        assert!((y[0] + 1.0).abs() < 1e-15 && (y[2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn small_grids() {
        let g = make_grid(4, 8, Reduction::Torus, 0).unwrap();
        assert_eq!(g.len(), 9);
        for p in &g.points {
            assert!(p[1] == 0.0 && p[3] == 0.0 && p[0] >= 0.0 && p[2] >= 0.0);
        }
        let g = make_grid(8, 12, Reduction::Orbit, 0).unwrap();
        assert_eq!(g.len(), 34);
        assert_eq!(g.multiplicity.iter().sum::<usize>(), 455);
        for p in &g.points {
            assert!((norm2(p) - 1.0).abs() < 1e-12);
            let m = DirectionGrid::moduli(p);
            assert!(m.windows(2).all(|w| w[0] >= w[1] - 1e-15));
        }
    }

    #[test]
    fn simplex_weights_integrate_affine() {
        // E[m_1] = 1/n and E[1] = 1 under the uniform simplex measure.
        for n in 2..=4 {
            let g = make_grid(2 * n, 10, Reduction::Torus, 0).unwrap();
            let total: f64 = g.weights.iter().sum();
            let first: f64 = g.points.iter().zip(&g.weights).map(|(p, w)| w * p[0] * p[0]).sum();
            assert!((total - 1.0).abs() < 1e-13);
            assert!((first - 1.0 / n as f64).abs() < 1e-13);
        }
    }

    #[test]
    fn grid_spec_roundtrip() {
        let g = GridSpec::parse("grid:dim=8,res=16,reduce=orbit,seed=7").unwrap();
        assert_eq!(GridSpec::parse(&g.canonical()).unwrap().canonical(), g.canonical());
        assert!(GridSpec::parse("grid:dim=8,res=4").is_err());
        assert!(GridSpec::parse("grid:dim=7").is_err());
        assert!(GridSpec::parse("grid:dim=8,colour=red").is_err());
    }

    proptest! {
        #[test]
        fn frame_is_orthonormal(v in proptest::collection::vec(-1.0f64..1.0, 8)) {
            prop_assume!(norm2(&v) > 1e-3);
            let xi = unit(v);
            let f = make_frame(&xi).unwrap();
            let mut all = vec![f.xi.clone(), f.xi_perp.clone()];
            all.extend(f.basis.iter().cloned());
            for i in 0..all.len() {
                for j in 0..all.len() {
                    let target = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((dot(&all[i], &all[j]) - target).abs() < 1e-12);
                }
            }
            let r = rotate(&xi, std::f64::consts::FRAC_PI_2).unwrap();
            for (a, b) in r.iter().zip(&f.xi_perp) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }

        #[test]
        fn rotation_group_law(v in proptest::collection::vec(-2.0f64..2.0, 6), a in -7.0f64..7.0, b in -7.0f64..7.0) {
            let once = rotate(&rotate(&v, a).unwrap(), b).unwrap();
            let both = rotate(&v, a + b).unwrap();
            for (x, y) in once.iter().zip(&both) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((norm2(&once) - norm2(&v)).abs() < 1e-12);
            let zero = rotate(&v, 0.0).unwrap();
            prop_assert_eq!(zero, v.clone());
        }

        #[test]
        fn rotated_xi_stays_in_complex_line(v in proptest::collection::vec(-1.0f64..1.0, 8), t in 0.0f64..6.3) {
            prop_assume!(norm2(&v) > 1e-3);
            let xi = unit(v);
            let f = make_frame(&xi).unwrap();
            let y = rotate(&xi, t).unwrap();
            let a = dot(&y, &f.xi);
            let b = dot(&y, &f.xi_perp);
            let dev: f64 = y.iter().zip(f.xi.iter().zip(&f.xi_perp)).map(|(yi, (x, p))| (yi - a * x - b * p).abs()).fold(0.0, f64::max);
            prop_assert!(dev < 1e-12);
        }
    }
}
