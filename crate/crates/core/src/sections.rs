//! Volumes, central and parallel complex-hyperplane sections, and Laplacians of the
//! parallel section function at the origin.

use crate::bodies::{Smoothness, StarBody};
use crate::error::{Error, Result};
use crate::frames::{norm2, ComplexFrame};
use crate::quadrature::{BatchTable, Estimate, Rule};
use serde::{Deserialize, Serialize};

/// (1/d)·∫_{S^{d-1}} ρ^d.
pub fn volume(body: &StarBody, rule: &Rule) -> Result<Estimate> {
    Ok(volume_table(body, rule)?.estimate(0))
}

pub(crate) fn volume_table(body: &StarBody, rule: &Rule) -> Result<BatchTable> {
    let d = body.dim();
    let sr = rule.on(d)?;
    sr.integrate_vec(1, |t, out| {
        out[0] = body.norm_unchecked(t).powi(-(d as i32)) / d as f64;
    })
}

/// Vol_{2n-2}(K ∩ H_ξ) = (1/(2n−2))·∫_{S^{2n-3}} ρ^{2n-2} over the section sphere.
pub fn section_volume(body: &StarBody, frame: &ComplexFrame, rule: &Rule) -> Result<Estimate> {
    Ok(section_table(&[body], frame, rule)?.estimate(0))
}

/// Central section volumes of several bodies on shared nodes.
pub(crate) fn section_table(bodies: &[&StarBody], frame: &ComplexFrame, rule: &Rule) -> Result<BatchTable> {
    check_frame(bodies[0], frame)?;
    let m = frame.basis.len();
    let sr = rule.on(m)?;
    let dim = frame.dim();
    sr.integrate_with(
        bodies.len(),
        || vec![0.0; dim],
        |y, c, out| {
            frame.embed(c, y);
            for (o, b) in out.iter_mut().zip(bodies) {
                *o = b.norm_unchecked(y).powi(-(m as i32)) / m as f64;
            }
        },
    )
}

fn check_frame(body: &StarBody, frame: &ComplexFrame) -> Result<()> {
    if frame.dim() != body.dim() {
        return Err(Error::Domain(format!(
            "frame dimension {} does not match body dimension {}",
            frame.dim(),
            body.dim()
        )));
    }
    Ok(())
}

/// Where rays of one offset start.
enum Origin {
    /// The offset point u₁ξ + u₂ξ^⊥ lies inside the body.
    Offset([f64; 2]),
    /// The offset point is outside but the slice is not empty; rays start here.
    Shifted(Vec<f64>),
    Empty,
}

const PROBES: usize = 64;

fn locate_origin(body: &StarBody, frame: &ComplexFrame, u: [f64; 2]) -> Origin {
    let p = frame.offset_point(u);
    let pn = norm2(&p);
    if pn == 0.0 || body.norm_unchecked(&p) < 1.0 {
        return Origin::Offset(u);
    }
    if pn >= body.r_max() * (1.0 + 1e-12) {
        return Origin::Empty;
    }
    // Minimize ‖p + r v‖ along probe rays in the slice (convex in r).
    let m = frame.basis.len();
    let dirs = crate::bodies::sphere_samples(m, PROBES, 101);
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut v = vec![0.0; frame.dim()];
    let hi = body.r_max() + pn;
    for c in &dirs {
        frame.embed(c, &mut v);
        let mut span = body.span(&[&p, &v]);
        let (r, val) = golden_min(|r| span.eval(&[1.0, r]), 0.0, hi);
        if val < 1.0 && best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, p.iter().zip(&v).map(|(a, b)| a + r * b).collect()));
        }
    }
    match best {
        Some((_, q)) => Origin::Shifted(q),
        None => Origin::Empty,
    }
}

fn golden_min(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..60 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc < fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Solves f(r) = 0 for increasing f with f(0) < 0 by the Illinois method.
fn ray_root(mut f: impl FnMut(f64) -> f64, hi: f64, direction: impl Fn() -> Vec<f64>) -> Result<f64> {
    let (mut a, mut fa) = (0.0, f(0.0));
    let (mut b, mut fb) = (hi, f(hi));
    let mut grow = 0;
    while !(fb >= 0.0) {
        if grow > 60 || fb.is_nan() {
            return Err(Error::RootBracket {
                direction: direction(),
                lo: 0.0,
                hi: b,
            });
        }
        a = b;
        fa = fb;
        b *= 2.0;
        fb = f(b);
        grow += 1;
    }
    if !(fa < 0.0) {
        return Err(Error::RootBracket {
            direction: direction(),
            lo: a,
            hi: b,
        });
    }
    let mut side = 0i8;
    for _ in 0..200 {
        let c = (a * fb - b * fa) / (fb - fa);
        let fc = f(c);
        if fc == 0.0 || (b - a).abs() < 1e-13 * (1.0 + c.abs()) {
            return Ok(c);
        }
        if fc > 0.0 {
            b = c;
            fb = fc;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        } else {
            a = c;
            fa = fc;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        }
        if (b - a).abs() < 1e-12 * (1.0 + b.abs()) {
            return Ok(0.5 * (a + b));
        }
    }
    Ok(0.5 * (a + b))
}

/// Parallel section volumes A(u) at several offsets, all on the same quadrature nodes.
pub fn parallel_sections(
    body: &StarBody,
    frame: &ComplexFrame,
    offsets: &[[f64; 2]],
    rule: &Rule,
) -> Result<BatchTable> {
    check_frame(body, frame)?;
    let m = frame.basis.len();
    let dim = frame.dim();
    let origins: Vec<Origin> = offsets.iter().map(|&u| locate_origin(body, frame, u)).collect();
    let sr = rule.on(m)?;
    let hi_base = body.r_max() * (1.0 + 1e-9);
    let failure = std::sync::Mutex::new(None);
    let table = sr.integrate_with(
        offsets.len(),
        || vec![0.0; dim],
        |v, c, out| {
            frame.embed(c, v);
            let mut span = body.span(&[&frame.xi, &frame.xi_perp, v]);
            for (o, origin) in out.iter_mut().zip(&origins) {
                let r = match origin {
                    Origin::Empty => {
                        *o = 0.0;
                        continue;
                    }
                    Origin::Offset(u) if u[0] == 0.0 && u[1] == 0.0 => Ok(1.0 / span.eval(&[0.0, 0.0, 1.0])),
                    Origin::Offset(u) => {
                        let pn = u[0].hypot(u[1]);
                        ray_root(|r| span.eval(&[u[0], u[1], r]) - 1.0, hi_base + pn, || v.to_vec())
                    }
                    Origin::Shifted(q) => {
                        let mut s2 = body.span(&[q, v]);
                        ray_root(|r| s2.eval(&[1.0, r]) - 1.0, hi_base + norm2(q), || v.to_vec())
                    }
                };
                match r {
                    Ok(r) => *o = r.powi(m as i32) / m as f64,
                    Err(e) => {
                        let mut f = failure.lock().expect("failure slot");
                        if f.is_none() {
                            *f = Some(e);
                        }
                        *o = 0.0;
                    }
                }
            }
        },
    )?;
    if let Some(e) = failure.into_inner().expect("failure slot") {
        return Err(e);
    }
    Ok(table)
}

/// A(u) = Vol_{2n-2}(K ∩ (H_ξ + u₁ξ + u₂ξ^⊥)).
pub fn parallel_section(body: &StarBody, frame: &ComplexFrame, u: [f64; 2], rule: &Rule) -> Result<Estimate> {
    if !(u[0].is_finite() && u[1].is_finite()) {
        return Err(Error::Domain("offset must be finite".into()));
    }
    Ok(parallel_sections(body, frame, &[u], rule)?.estimate(0))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SectionProfile {
    pub body: String,
    pub xi: Vec<f64>,
    pub offsets: Vec<[f64; 2]>,
    pub values: Vec<Estimate>,
    pub fd_step: Option<f64>,
}

pub fn section_profile(
    body: &StarBody,
    frame: &ComplexFrame,
    offsets: &[[f64; 2]],
    rule: &Rule,
) -> Result<SectionProfile> {
    let t = parallel_sections(body, frame, offsets, rule)?;
    Ok(SectionProfile {
        body: body.spec(),
        xi: frame.xi.clone(),
        offsets: offsets.to_vec(),
        values: (0..offsets.len()).map(|i| t.estimate(i)).collect(),
        fd_step: None,
    })
}

/// Default finite-difference step for Δ^m A(0).
pub fn default_step(body: &StarBody, m: usize) -> f64 {
    if m == 1 {
        0.05 * body.r_min()
    } else {
        0.1 * body.r_min()
    }
}

fn stencil(m: usize, h: f64) -> Vec<([f64; 2], f64)> {
    let mut s = Vec::new();
    match m {
        1 => {
            s.push(([0.0, 0.0], -4.0 / (h * h)));
            for u in [[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]] {
                s.push((u, 1.0 / (h * h)));
            }
        }
        _ => {
            let h4 = h.powi(4);
            s.push(([0.0, 0.0], 20.0 / h4));
            for u in [[h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]] {
                s.push((u, -8.0 / h4));
            }
            for u in [[h, h], [h, -h], [-h, h], [-h, -h]] {
                s.push((u, 2.0 / h4));
            }
            for u in [[2.0 * h, 0.0], [-2.0 * h, 0.0], [0.0, 2.0 * h], [0.0, -2.0 * h]] {
                s.push((u, 1.0 / h4));
            }
        }
    }
    s
}

/// Richardson-extrapolated stencil (4·D(h/2) − D(h))/3 as offsets and weights.
pub(crate) fn laplacian_weights(m: usize, h: f64) -> Vec<([f64; 2], f64)> {
    let mut out: Vec<([f64; 2], f64)> = Vec::new();
    for (scale, step) in [(-1.0 / 3.0, h), (4.0 / 3.0, h / 2.0)] {
        for (u, w) in stencil(m, step) {
            match out.iter_mut().find(|(v, _)| *v == u) {
                Some(e) => e.1 += scale * w,
                None => out.push((u, scale * w)),
            }
        }
    }
    out
}

fn check_laplacian_pre(body: &StarBody, m: usize) -> Result<()> {
    if body.smoothness() < Smoothness::C2 {
        return Err(Error::Domain(
            "Laplacian of the section function needs a C2 body".into(),
        ));
    }
    let n = body.n();
    if !(m == 1 || m == 2) || m > n - 1 {
        return Err(Error::OutOfRange(format!(
            "order m = {m} needs m in {{1, 2}} and m <= n - 1 = {}",
            n - 1
        )));
    }
    Ok(())
}

/// Δ^m A(0) per batch, before the noise check.
pub(crate) fn laplacian_table(
    body: &StarBody,
    frame: &ComplexFrame,
    m: usize,
    h: Option<f64>,
    rule: &Rule,
) -> Result<Estimate> {
    check_laplacian_pre(body, m)?;
    let h = h.unwrap_or_else(|| default_step(body, m));
    if !(h > 0.0) {
        return Err(Error::Domain(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let weights = laplacian_weights(m, h);
    let offsets: Vec<[f64; 2]> = weights.iter().map(|w| w.0).collect();
    let table = parallel_sections(body, frame, &offsets, rule)?;
    Ok(table.combine(|row| crate::reduce::kahan_reduce(row.iter().zip(&weights).map(|(a, (_, w))| a * w))))
}

/// Δ^m A(0) by central differences with Richardson extrapolation and shared nodes.
pub fn laplacian_at_zero(
    body: &StarBody,
    frame: &ComplexFrame,
    m: usize,
    h: Option<f64>,
    rule: &Rule,
) -> Result<Estimate> {
    let est = laplacian_table(body, frame, m, h, rule)?;
    if est.stderr > 0.25 * est.value.abs() {
        return Err(Error::NoisyEstimate(est));
    }
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frames::make_frame;
    use crate::special::ball_volume;
    use std::f64::consts::PI;

    fn e1(d: usize) -> Vec<f64> {
        let mut x = vec![0.0; d];
        x[0] = 1.0;
        x
    }

    #[test]
    fn ball_volumes() {
        for d in [4, 6] {
            let v = volume(&StarBody::ball(d).unwrap(), &Rule::gauss(4)).unwrap();
            assert!((v.value - ball_volume(d)).abs() < 1e-12);
        }
        let v = volume(&StarBody::ball(8).unwrap(), &Rule::mc(4096, 1)).unwrap();
        assert!((v.value - ball_volume(8)).abs() < 1e-12);
    }

    #[test]
    fn ball_sections() {
        let b = StarBody::ball(4).unwrap();
        let f = make_frame(&e1(4)).unwrap();
        let rule = Rule::gauss(8);
        assert!((section_volume(&b, &f, &rule).unwrap().value - PI).abs() < 1e-12);
        let a = parallel_section(&b, &f, [0.3, 0.4], &rule).unwrap();
        assert!((a.value - 0.75 * PI).abs() < 1e-10, "{}", a.value);
        assert_eq!(parallel_section(&b, &f, [1.0, 0.2], &rule).unwrap().value, 0.0);
        let b6 = StarBody::ball(6).unwrap();
        let f6 = make_frame(&e1(6)).unwrap();
        assert!((section_volume(&b6, &f6, &rule).unwrap().value - PI * PI / 2.0).abs() < 1e-12);
        let b8 = StarBody::ball(8).unwrap();
        let f8 = make_frame(&e1(8)).unwrap();
        let a = parallel_section(&b8, &f8, [0.0, 0.0], &Rule::qmc(1024, 0)).unwrap();
        assert!((a.value - PI.powi(3) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn ball_laplacians() {
        let rule = Rule::gauss(6);
        let b6 = StarBody::ball(6).unwrap();
        let d = laplacian_at_zero(&b6, &make_frame(&e1(6)).unwrap(), 1, None, &rule).unwrap();
        assert!((d.value + 4.0 * PI * PI).abs() < 1e-4 * 4.0 * PI * PI, "{}", d.value);
        let b8 = StarBody::ball(8).unwrap();
        let d = laplacian_at_zero(&b8, &make_frame(&e1(8)).unwrap(), 2, None, &Rule::qmc(256, 0)).unwrap();
        assert!(
            (d.value - 32.0 * PI.powi(3)).abs() < 1e-3 * 32.0 * PI.powi(3),
            "{}",
            d.value
        );
    }

    #[test]
    fn laplacian_preconditions() {
        let f = make_frame(&e1(6)).unwrap();
        let b = StarBody::ball(6).unwrap();
        assert!(laplacian_at_zero(&b, &f, 3, None, &Rule::gauss(4)).is_err());
        assert!(laplacian_at_zero(&b, &f, 0, None, &Rule::gauss(4)).is_err());
        let rough = StarBody::complex_lq(3, 1.5).unwrap();
        assert!(laplacian_at_zero(&rough, &f, 1, None, &Rule::gauss(4)).is_err());
    }

    #[test]
    fn richardson_weights_sum_to_zero() {
        for m in [1, 2] {
            let w = laplacian_weights(m, 0.1);
            let s: f64 = w.iter().map(|x| x.1).sum();
            assert!(s.abs() < 1e-6, "{s}");
        }
    }

    #[test]
    fn outside_offset_with_nonempty_slice() {
        // ξ is not a critical direction of the l4 body, so slices just past the boundary
        // point along ξ still meet the body.
        let k = StarBody::complex_lq(2, 4.0).unwrap();
        let xi = vec![0.3f64.cos(), 0.0, 0.3f64.sin(), 0.0];
        let f = make_frame(&xi).unwrap();
        let u = [1.06, 0.0];
        let p = f.offset_point(u);
        assert!(k.norm(&p).unwrap() > 1.0);
        let a = parallel_section(&k, &f, u, &Rule::gauss(64)).unwrap();
        assert!(a.value > 0.0, "{}", a.value);
        let inside = parallel_section(&k, &f, [1.0, 0.0], &Rule::gauss(64)).unwrap();
        assert!(inside.value > a.value);
    }
}
