//! Gamma-function constants and the confluent hypergeometric kernel.

use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

pub use statrs::function::gamma::gamma as gamma_fn;

/// Surface area of the unit sphere S^{d-1} in R^d.
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Volume of the unit ball in R^d.
pub fn ball_volume(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    PI.powf(h) / gamma(h + 1.0)
}

/// 1/Γ(x), zero at the poles.
pub fn recip_gamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.round() {
        0.0
    } else {
        1.0 / gamma(x)
    }
}

/// Constant c with (|x|^{-p})^ = c |y|^{-d+p} in R^d, 0 < p < d.
pub fn radial_ft_constant(d: usize, p: f64) -> f64 {
    let d = d as f64;
    2f64.powf(d - p) * PI.powf(d / 2.0) * gamma((d - p) / 2.0) / gamma(p / 2.0)
}

/// Multiplier of a degree-j harmonic: (P(x)|x|^{-j-p})^ = λ P(y)|y|^{-j-d+p}.
/// Only used to audit calibrated values.
pub fn harmonic_ft_constant(j: usize, d: usize, p: f64) -> f64 {
    let sign = if (j / 2).is_multiple_of(2) { 1.0 } else { -1.0 };
    let (j, d) = (j as f64, d as f64);
    let log = (d - p) * 2f64.ln() + d / 2.0 * PI.ln() + ln_gamma((j + d - p) / 2.0) - ln_gamma((j + p) / 2.0);
    sign * log.exp()
}

/// Volume of the unit ball of the complex ℓ_q^n norm (a 2n-dimensional body).
pub fn complex_lq_volume(n: usize, q: f64) -> f64 {
    let n_f = n as f64;
    PI.powf(n_f) * gamma(1.0 + 2.0 / q).powf(n_f) / gamma(1.0 + 2.0 * n_f / q)
}

/// e^{-z} M(1/2 - α, 1/2, z) for z ≥ 0, i.e. M(α, 1/2, -z) by Kummer's transform.
pub fn kummer_decay(alpha: f64, z: f64) -> f64 {
    if z < 40.0 {
        let a = 0.5 - alpha;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 0.0;
        loop {
            term *= (a + k) * z / ((0.5 + k) * (k + 1.0));
            sum += term;
            k += 1.0;
            if term == 0.0 || (term.abs() < 1e-17 * sum.abs() && k > z) {
                break;
            }
            if k > 4000.0 {
                break;
            }
        }
        (-z).exp() * sum
    } else {
        let lead = recip_gamma(0.5 - alpha);
        if lead == 0.0 {
            // Terminating series: the value is e^{-z} times a polynomial.
            return kummer_terminating(alpha, z);
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut best = f64::INFINITY;
        for s in 0..200 {
            let s = s as f64;
            term *= (alpha + s) * (alpha + 0.5 + s) / ((s + 1.0) * z);
            if term.abs() > best {
                break;
            }
            best = term.abs();
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        PI.sqrt() * lead * z.powf(-alpha) * sum
    }
}

fn kummer_terminating(alpha: f64, z: f64) -> f64 {
    let a = 0.5 - alpha;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    while a + k < 0.0 {
        term *= (a + k) * z / ((0.5 + k) * (k + 1.0));
        sum += term;
        k += 1.0;
    }
    (-z).exp() * sum
}

/// Radial profile of the Gaussian bump pairing:
/// ∫_0^∞ s^{a-1} e^{-s²/2} cos(s t) ds = 2^{a/2-1} Γ(a/2) M(a/2, 1/2, -t²/2).
pub fn gaussian_cosine_moment(a: f64, t: f64) -> f64 {
    2f64.powf(a / 2.0 - 1.0) * gamma(a / 2.0) * kummer_decay(a / 2.0, t * t / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moment_by_quadrature(a: f64, t: f64) -> f64 {
        // Composite Simpson on [0, 14].
        let n = 200_000;
        let h = 14.0 / n as f64;
        let f = |s: f64| {
            if s == 0.0 {
                if a == 1.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                s.powf(a - 1.0) * (-s * s / 2.0).exp() * (s * t).cos()
            }
        };
        let mut acc = f(0.0) + f(14.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(i as f64 * h);
        }
        acc * h / 3.0
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((sphere_area(6) - PI.powi(3)).abs() < 1e-12);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-12);
        assert!((ball_volume(6) - PI.powi(3) / 6.0).abs() < 1e-12);
    }

    #[test]
    fn lq_volume_dirichlet() {
        assert!((complex_lq_volume(4, 4.0) - PI.powi(6) / 32.0).abs() < 1e-10);
        assert!((complex_lq_volume(3, 2.0) - ball_volume(6)).abs() < 1e-12);
    }

    #[test]
    fn classical_constants() {
        assert!((radial_ft_constant(4, 2.0) - 4.0 * PI * PI).abs() < 1e-9);
        assert!((radial_ft_constant(6, 2.0) - 16.0 * PI.powi(3)).abs() < 1e-9);
        assert!((radial_ft_constant(8, 2.0) - 128.0 * PI.powi(4)).abs() < 1e-7);
        assert!((radial_ft_constant(8, 6.0) - 2.0 * PI.powi(4)).abs() < 1e-9);
        assert!((radial_ft_constant(6, 3.0) - 8.0 * PI.powi(3)).abs() < 1e-9);
        assert!((harmonic_ft_constant(0, 8, 2.0) - radial_ft_constant(8, 2.0)).abs() < 1e-7);
        assert!(harmonic_ft_constant(2, 8, 2.0) < 0.0);
    }

    #[test]
    fn parseval_gamma_identity() {
        for d in [4usize, 6, 8] {
            for p in [1.0, 2.0, 3.0] {
                let prod = radial_ft_constant(d, p) * radial_ft_constant(d, d as f64 - p);
                let target = (2.0 * PI).powi(d as i32);
                assert!((prod / target - 1.0).abs() < 1e-12, "d={d} p={p}");
            }
        }
    }

    #[test]
    fn moment_matches_quadrature() {
        for &a in &[1.5, 2.0, 3.0, 4.0, 6.0, 7.5] {
            for &t in &[0.0, 0.3, 1.0, 2.5, 6.0, 9.5] {
                let exact = gaussian_cosine_moment(a, t);
                let quad = moment_by_quadrature(a, t);
                assert!(
                    (exact - quad).abs() < 1e-7 * (1.0 + quad.abs()),
                    "a={a} t={t}: {exact} vs {quad}"
                );
            }
        }
    }

    #[test]
    fn kummer_branches_join() {
        for &alpha in &[0.75, 1.0, 1.5, 2.0, 2.75, 3.0] {
            let below = kummer_decay(alpha, 40.0 - 1e-9);
            let above = kummer_decay(alpha, 40.0 + 1e-9);
            assert!(
                (below - above).abs() <= 1e-7 * below.abs().max(1e-300),
                "alpha={alpha}: {below} vs {above}"
            );
        }
    }
}
