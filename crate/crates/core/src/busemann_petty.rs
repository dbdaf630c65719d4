//! Section-dominance comparison of two bodies, the polar-formula Hölder chain, and the
//! perturbation that turns a negative transform into dominated sections with larger volume.

use crate::bodies::{convexity_probe, Bump, ConvexityReport, StarBody};
use crate::embedding::{scan, Conclusion, EmbeddingVerdict, GridRef, ScanRules};
use crate::error::{Error, Result};
use crate::fourier::multiplier;
use crate::frames::{make_frame, DirectionGrid, GridSpec};
use crate::harmonics::{atom_by_id, build_invariant_harmonics, Family, ZPoly};
use crate::quadrature::{Estimate, Rule};
use crate::sections::section_table;
use crate::special::sphere_area;
use nalgebra::{Matrix2, SymmetricEigen, Vector2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BpVerdict {
    Consistent,
    Violation,
    NotDominated,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dominance {
    pub max_gap: f64,
    pub max_gap_stderr: f64,
    pub argmax: Vec<f64>,
    /// A_K(0) − A_L(0) at every grid direction, on shared nodes.
    pub gaps: Vec<Estimate>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Volumes {
    pub k: Estimate,
    pub l: Estimate,
    /// Vol(K) − Vol(L) on shared nodes.
    pub diff: Estimate,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BpReport {
    pub k: String,
    pub l: String,
    pub grid: GridRef,
    pub dominance: Dominance,
    pub volumes: Volumes,
    pub verdict: BpVerdict,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BpRules {
    /// Rule for the central sections on S^{2n-3}.
    pub sections: Rule,
    /// Rule for the volumes on S^{2n-1}.
    pub volume: Rule,
    /// Absolute slack allowed on a gap before it counts as positive.
    pub tol: f64,
}

impl BpRules {
    pub fn new(sections: Rule, volume: Rule) -> Self {
        Self {
            sections,
            volume,
            tol: 0.0,
        }
    }

    pub fn doubled(&self) -> Self {
        Self {
            sections: self.sections.doubled(),
            volume: self.volume.doubled(),
            tol: self.tol,
        }
    }
}

/// Compares central sections of K and L over the grid and their volumes.
pub fn bp_verify(k: &StarBody, l: &StarBody, grid: &DirectionGrid, rules: &BpRules) -> Result<BpReport> {
    for b in [k, l] {
        if !b.invariance().is_complex_rotation() {
            return Err(Error::UnsupportedRoute(
                "section comparison needs bodies invariant under complex rotations".into(),
            ));
        }
    }
    if k.dim() != l.dim() || grid.dim != k.dim() {
        return Err(Error::Domain("bodies and grid must share the dimension".into()));
    }
    if grid.is_empty() {
        return Err(Error::Domain("empty direction grid".into()));
    }
    let mut gaps = Vec::with_capacity(grid.len());
    for xi in &grid.points {
        let frame = make_frame(xi)?;
        let t = section_table(&[k, l], &frame, &rules.sections)?;
        gaps.push(t.combine(|r| r[0] - r[1]));
    }
    let d = k.dim();
    let vt = rules.volume.on(d)?.integrate_vec(2, |t, out| {
        out[0] = k.norm_unchecked(t).powi(-(d as i32)) / d as f64;
        out[1] = l.norm_unchecked(t).powi(-(d as i32)) / d as f64;
    })?;
    let volumes = Volumes {
        k: vt.estimate(0),
        l: vt.estimate(1),
        diff: vt.combine(|r| r[0] - r[1]),
    };
    let (imax, top) = gaps
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.value.total_cmp(&b.1.value))
        .expect("nonempty grid");
    let mut flags = Vec::new();
    let above = gaps.iter().any(|g| g.value > 3.0 * g.stderr + rules.tol);
    let tie = gaps.iter().any(|g| g.stderr > 0.0 && g.value.abs() <= 3.0 * g.stderr);
    let verdict = if above {
        BpVerdict::NotDominated
    } else if tie {
        flags.push("tie".to_string());
        BpVerdict::NotDominated
    } else if volumes.diff.value > 3.0 * volumes.diff.stderr && volumes.diff.value > rules.tol {
        BpVerdict::Violation
    } else {
        BpVerdict::Consistent
    };
    Ok(BpReport {
        k: k.spec(),
        l: l.spec(),
        grid: GridRef {
            dim: grid.dim,
            resolution: grid.resolution,
            reduction: grid.reduction,
            points: grid.len(),
        },
        dominance: Dominance {
            max_gap: top.value,
            max_gap_stderr: top.stderr,
            argmax: grid.points[imax].clone(),
            gaps,
        },
        volumes,
        verdict,
        flags,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HolderReport {
    /// ∫‖θ‖_K^{-2n} = 2n·Vol(K).
    pub k_power: Estimate,
    /// ∫‖θ‖_L^{-2n+2}‖θ‖_K^{-2}.
    pub mixed: Estimate,
    /// (2n·Vol L)^{(n-1)/n}(2n·Vol K)^{1/n}.
    pub bound: Estimate,
    /// mixed − k_power.
    pub first_slack: Estimate,
    /// bound − mixed.
    pub second_slack: Estimate,
    pub ok: bool,
}

/// 2n·Vol(K) ≤ ∫‖θ‖_L^{-2n+2}‖θ‖_K^{-2} ≤ (2n·Vol L)^{(n-1)/n}(2n·Vol K)^{1/n}, with slacks.
pub fn holder_chain_check(k: &StarBody, l: &StarBody, rule: &Rule) -> Result<HolderReport> {
    if k.dim() != l.dim() {
        return Err(Error::Domain("bodies live in different dimensions".into()));
    }
    let d = k.dim();
    let n = (d / 2) as f64;
    let t = rule.on(d)?.integrate_vec(3, |x, out| {
        let nk = k.norm_unchecked(x);
        let nl = l.norm_unchecked(x);
        out[0] = nk.powi(-(d as i32));
        out[1] = nl.powi(-(d as i32) + 2) * nk.powi(-2);
        out[2] = nl.powi(-(d as i32));
    })?;
    let bound = |r: &[f64]| r[2].powf((n - 1.0) / n) * r[0].powf(1.0 / n);
    let first = t.combine(|r| r[1] - r[0]);
    let second = t.combine(|r| bound(r) - r[1]);
    let slack_ok = |e: &Estimate, scale: f64| e.value >= -3.0 * e.stderr - 1e-12 * scale;
    let scale = t.estimate(0).value.abs();
    Ok(HolderReport {
        k_power: t.estimate(0),
        mixed: t.estimate(1),
        bound: t.combine(bound),
        ok: slack_ok(&first, scale) && slack_ok(&second, scale),
        first_slack: first,
        second_slack: second,
    })
}

/// ε search: start value, halvings, and the convexity probe size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsPolicy {
    /// Overrides 0.5·r_min(L)^{2n-2}/sup|g|.
    pub initial: Option<f64>,
    pub max_halvings: usize,
    pub convexity_samples: usize,
    pub convexity_seed: u64,
}

impl Default for EpsPolicy {
    fn default() -> Self {
        Self {
            initial: None,
            max_halvings: 8,
            convexity_samples: 100_000,
            convexity_seed: 11,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructOptions {
    pub n: usize,
    pub q_body: f64,
    pub mollifier_width: f64,
    pub grid: GridSpec,
    pub scan: ScanRules,
    pub verify: BpRules,
    pub eps: EpsPolicy,
}

impl ConstructOptions {
    /// Defaults sized for a single workstation core.
    pub fn new(n: usize, q_body: f64) -> Result<Self> {
        let dim = 2 * n;
        let sweep = Rule::qmc(1 << 12, 1);
        Ok(Self {
            n,
            q_body,
            mollifier_width: 0.1,
            grid: GridSpec::parse(&format!("grid:dim={dim},res=12,reduce=orbit,seed=0"))?,
            scan: ScanRules::new(sweep, Rule::qmc(1 << 13, 2)),
            // g is a polynomial, so product Gauss rules make the section gaps exact.
            verify: BpRules::new(
                if 2 * n - 2 <= 6 {
                    Rule::gauss(12)
                } else {
                    Rule::qmc(1 << 14, 3)
                },
                Rule::qmc(1 << 16, 4),
            ),
            eps: EpsPolicy::default(),
        })
    }
}

/// f = (c₀ + c₁·s4_0)² + η on the sphere.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BumpDesign {
    pub atoms: Vec<String>,
    pub coefficients: Vec<f64>,
    pub eta: f64,
    /// Smallest Rayleigh quotient ∫p²·T/∫p² over the grid.
    pub rayleigh: f64,
    /// ∫ f·T over the grid, T the transform of ‖x‖_L^{-2}.
    pub pairing: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpsAttempt {
    pub eps: f64,
    pub outcome: String,
}

/// Everything needed to replay a constructed pair.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConstructedPair {
    pub options: ConstructOptions,
    pub k: String,
    pub l: String,
    pub design: BumpDesign,
    /// g as `id:coef;...`.
    pub bump: String,
    pub eps: f64,
    pub eps_trace: Vec<EpsAttempt>,
    pub scan_min: f64,
    pub scan_min_stderr: f64,
    pub scan_argmin: Vec<f64>,
    pub convexity: ConvexityReport,
    pub report: BpReport,
}

/// Builds K from L = mollified complex ℓ_q ball so that sections of K are smaller while
/// Vol(K) > Vol(L), and checks the outcome with [`bp_verify`].
pub fn bp_construct(opts: &ConstructOptions) -> Result<ConstructedPair> {
    let n = opts.n;
    let l = StarBody::complex_lq(n, opts.q_body)?.mollify(opts.mollifier_width)?;
    let grid = opts.grid.build()?;
    if grid.dim != 2 * n {
        return Err(Error::Domain("grid dimension must be 2n".into()));
    }
    if n < 3 {
        return Err(Error::ConstructionImpossible(format!(
            "no negativity region: in dimension {} the transform of ‖x‖^-2 is a multiple of section volumes",
            2 * n
        )));
    }
    let verdict = scan(&l, 2.0, &grid, &opts.scan)?;
    if verdict.conclusion != Conclusion::NegativityWitness {
        return Err(Error::ConstructionImpossible(format!(
            "no negativity region: scan at p = 2 concluded {:?} (minimum {} ± {})",
            verdict.conclusion, verdict.min_value, verdict.min_stderr
        )));
    }
    let design = design_bump(n, &grid, &verdict)?;
    let (bump, bump_spec) = transform_bump(n, &design)?;
    let s = (2 * n - 2) as f64;
    let mut eps = match opts.eps.initial {
        Some(e) => e,
        None => 0.5 * l.r_min().powf(s) / sampled_sup(&bump, 2 * n).min(bump.sup_bound()),
    };
    let mut trace = Vec::new();
    for _ in 0..=opts.eps.max_halvings {
        match attempt(&l, &bump, eps, s, &grid, opts) {
            Ok((k, convexity, report)) if report.verdict == BpVerdict::Violation => {
                trace.push(EpsAttempt {
                    eps,
                    outcome: "violation".into(),
                });
                return Ok(ConstructedPair {
                    options: opts.clone(),
                    k: k.spec(),
                    l: l.spec(),
                    design,
                    bump: bump_spec,
                    eps,
                    eps_trace: trace,
                    scan_min: verdict.min_value,
                    scan_min_stderr: verdict.min_stderr,
                    scan_argmin: verdict.argmin.clone(),
                    convexity,
                    report,
                });
            }
            Ok((_, _, report)) => trace.push(EpsAttempt {
                eps,
                outcome: format!("{:?} {:?}", report.verdict, report.flags),
            }),
            Err(e) => trace.push(EpsAttempt {
                eps,
                outcome: e.to_string(),
            }),
        }
        eps *= 0.5;
    }
    Err(Error::ConstructionFailed(format!(
        "f coefficients {:?} (eta {}), epsilon trace {}",
        design.coefficients,
        design.eta,
        trace
            .iter()
            .map(|a| format!("{:e}: {}", a.eps, a.outcome))
            .collect::<Vec<_>>()
            .join("; ")
    )))
}

/// max |g| over quasi-uniform directions, padded by 10%.
fn sampled_sup(bump: &Bump, dim: usize) -> f64 {
    1.1 * crate::bodies::sphere_samples(dim, 20_000, 5)
        .iter()
        .map(|t| bump.eval_direction(t).abs())
        .fold(0.0, f64::max)
}

fn attempt(
    l: &StarBody,
    bump: &Bump,
    eps: f64,
    s: f64,
    grid: &DirectionGrid,
    opts: &ConstructOptions,
) -> Result<(StarBody, ConvexityReport, BpReport)> {
    let k = l.perturb(eps, s, bump.clone())?;
    let convexity = convexity_probe(&k, opts.eps.convexity_samples, opts.eps.convexity_seed);
    if convexity.violations > 0 {
        return Err(Error::ConstructionFailed(format!(
            "convexity probe found {} violations (worst {:e})",
            convexity.violations, convexity.worst_gap
        )));
    }
    let report = bp_verify(&k, l, grid, &opts.verify)?;
    Ok((k, convexity, report))
}

/// Picks p = c₀ + c₁·s4_0 minimizing ∫p²T/∫p² over the grid and sets f = p² + η with
/// η = |λ_min|∫p²/(4∫T), so ∫fT = (3/4)·λ_min∫p² < 0 and f ≥ η > 0.
fn design_bump(n: usize, grid: &DirectionGrid, verdict: &EmbeddingVerdict) -> Result<BumpDesign> {
    let ids = ["const", "s4_0"];
    let atoms = ids.iter().map(|id| atom_by_id(n, id)).collect::<Result<Vec<_>>>()?;
    let area = sphere_area(2 * n);
    let mut a = Matrix2::<f64>::zeros();
    let mut b = Matrix2::<f64>::zeros();
    let mut total = 0.0;
    for ((xi, w), s) in grid.points.iter().zip(&grid.weights).zip(&verdict.samples) {
        let phi = Vector2::new(atoms[0].eval(xi), atoms[1].eval(xi));
        let outer = phi * phi.transpose() * (w * area);
        a += outer * s.value;
        b += outer;
        total += w * area * s.value;
    }
    let chol = b
        .cholesky()
        .ok_or_else(|| Error::ConstructionFailed("degenerate bump basis on the grid".into()))?;
    let linv = chol
        .l()
        .try_inverse()
        .ok_or_else(|| Error::ConstructionFailed("degenerate bump basis on the grid".into()))?;
    let m = linv * a * linv.transpose();
    let eig = SymmetricEigen::new(m);
    let imin = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
    let lmin = eig.eigenvalues[imin];
    if !(lmin < 0.0) {
        return Err(Error::ConstructionImpossible(format!(
            "no combination of the bump basis pairs negatively with the transform (λ_min = {lmin})"
        )));
    }
    if !(total > 0.0) {
        return Err(Error::ConstructionFailed(format!(
            "transform integrates to {total} over the sphere"
        )));
    }
    let y = eig.eigenvectors.column(imin).into_owned();
    let c = linv.transpose() * y;
    let c = if c[0] < 0.0 { -c } else { c };
    let p2 = (c.transpose() * b * c)[(0, 0)];
    let eta = 0.25 * lmin.abs() * p2 / total;
    let pairing = (c.transpose() * a * c)[(0, 0)] + eta * total;
    Ok(BumpDesign {
        atoms: ids.iter().map(|s| s.to_string()).collect(),
        coefficients: vec![c[0], c[1]],
        eta,
        rayleigh: lmin,
        pairing,
    })
}

/// g = Σ_k λ(k, 2)·⟨f, P_k⟩·P_k over the permutation-symmetric invariant harmonics.
fn transform_bump(n: usize, design: &BumpDesign) -> Result<(Bump, String)> {
    let mut p = ZPoly::zero(n);
    for (id, c) in design.atoms.iter().zip(&design.coefficients) {
        p = p.add(&atom_by_id(n, id)?.poly.scale(Complex64::new(*c, 0.0)));
    }
    let f = p.mul(&p).add(&ZPoly::constant(n, design.eta));
    let set = build_invariant_harmonics(n, 8, Family::SymmetricDiagonal)?;
    let mut terms = Vec::new();
    for atom in &set.atoms {
        let coef = f.inner(&atom.poly).re;
        if coef.abs() < 1e-14 {
            continue;
        }
        terms.push((atom.id.clone(), multiplier(atom.degree, 2.0, n)? * coef));
    }
    let bump = Bump::new(n, terms)?;
    let spec = bump.spec();
    Ok((bump, spec))
}

/// Rebuilds the pair from its specs and verifies it again with the given rules.
pub fn replay(pair: &ConstructedPair, rules: &BpRules) -> Result<BpReport> {
    let k = StarBody::parse(&pair.k)?;
    let l = StarBody::parse(&pair.l)?;
    let grid = pair.options.grid.build()?;
    bp_verify(&k, &l, &grid, rules)
}
