//! Periodic heat kernel on the torus, the heat semigroup and the Duhamel
//! gradient-convolution operator.
//!
//! The kernel depends only on `d = x - y` and factorizes into 1D theta
//! sums, which both representations exploit:
//! `g = (2pi)^-2 th(d1) th(d2)` with `th(d) = sum_m exp(-t m^2) cos(m d)`, and
//! `g = (4 pi t)^-1 h(d1) h(d2)` with `h(d) = sum_m exp(-(d + 2 pi m)^2 / 4t)`.

use std::f64::consts::{PI, TAU};
use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use once_cell::sync::Lazy;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectral::{lp_norm, to_grid, SpectralField, VectorSpectralField};
use crate::stats::{linear_fit, log_space};

pub type Point = [f64; 2];

/// Time at or below which the combined evaluator uses images.
pub const IMAGE_REGIME_MAX_T: f64 = 0.5;

/// Evaluation time and truncation radii of the two series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelEvalSpec {
    t: f64,
    image_radius: usize,
    fourier_cutoff: usize,
}

impl KernelEvalSpec {
    pub fn new(t: f64, image_radius: usize, fourier_cutoff: usize) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::constraint("t", t, "t > 0", "heat kernel is singular at t = 0"));
        }
        if image_radius < 1 {
            return Err(Error::constraint("image_radius", image_radius, "R >= 1", "image sum"));
        }
        if fourier_cutoff < 1 {
            return Err(Error::constraint("fourier_cutoff", fourier_cutoff, "M >= 1", "Fourier sum"));
        }
        Ok(Self {
            t,
            image_radius,
            fourier_cutoff,
        })
    }

    /// `R = 3` and the smallest `M >= 20` with `exp(-t M^2) < 1e-13`.
    pub fn for_time(t: f64) -> Result<Self> {
        let m = if t > 0.0 { (30.0 / t).sqrt().ceil() as usize } else { 1 };
        Self::new(t, 3, m.max(20))
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn image_radius(&self) -> usize {
        self.image_radius
    }

    pub fn fourier_cutoff(&self) -> usize {
        self.fourier_cutoff
    }
}

fn wrap(d: f64) -> f64 {
    d - TAU * (d / TAU).round()
}

fn theta_fourier(t: f64, m_max: usize, d: f64) -> f64 {
    let mut s = 1.0;
    for m in 1..=m_max {
        let m = m as f64;
        s += 2.0 * (-t * m * m).exp() * (m * d).cos();
    }
    s
}

/// Image sum `h(d)` and its derivative `h'(d)`.
fn theta_images(t: f64, radius: usize, d: f64) -> (f64, f64) {
    let mut h = (-d * d / (4.0 * t)).exp();
    let mut dh = -d / (2.0 * t) * h;
    // +m and -m images are summed pairwise so the odd part cancels exactly at d = 0.
    for m in 1..=radius {
        let (up, um) = (d + TAU * m as f64, d - TAU * m as f64);
        let (ep, em) = ((-up * up / (4.0 * t)).exp(), (-um * um / (4.0 * t)).exp());
        h += ep + em;
        dh -= (up * ep + um * em) / (2.0 * t);
    }
    (h, dh)
}

/// Truncated Fourier series of `g(t, x, y)`.
pub fn eval_fourier(spec: &KernelEvalSpec, x: Point, y: Point) -> f64 {
    let (d1, d2) = (x[0] - y[0], x[1] - y[1]);
    theta_fourier(spec.t, spec.fourier_cutoff, d1) * theta_fourier(spec.t, spec.fourier_cutoff, d2)
        / (TAU * TAU)
}

/// Truncated image sum of `g(t, x, y)`; the displacement is wrapped to `[-pi, pi]`.
pub fn eval_images(spec: &KernelEvalSpec, x: Point, y: Point) -> f64 {
    let (d1, d2) = (wrap(x[0] - y[0]), wrap(x[1] - y[1]));
    theta_images(spec.t, spec.image_radius, d1).0 * theta_images(spec.t, spec.image_radius, d2).0
        / (4.0 * PI * spec.t)
}

/// `grad_y g(t, x, y)` from the image representation.
pub fn eval_grad(spec: &KernelEvalSpec, x: Point, y: Point) -> [f64; 2] {
    let (d1, d2) = (wrap(x[0] - y[0]), wrap(x[1] - y[1]));
    let (h1, dh1) = theta_images(spec.t, spec.image_radius, d1);
    let (h2, dh2) = theta_images(spec.t, spec.image_radius, d2);
    let c = 4.0 * PI * spec.t;
    [-dh1 * h2 / c, -h1 * dh2 / c]
}

/// Images for small times, Fourier otherwise.
pub fn eval(spec: &KernelEvalSpec, x: Point, y: Point) -> f64 {
    if spec.t <= IMAGE_REGIME_MAX_T {
        eval_images(spec, x, y)
    } else {
        eval_fourier(spec, x, y)
    }
}

/// `S(t) f`: multiplies `coeff(k)` by `exp(-|k|^2 t)`.
pub fn semigroup_apply(t: f64, f: &SpectralField) -> Result<SpectralField> {
    if !(t >= 0.0) {
        return Err(Error::constraint("t", t, "t >= 0", "heat semigroup"));
    }
    Ok(f.map_symbol(|k| (-(k.norm_sq() as f64) * t).exp()))
}

/// `(1 - exp(-lambda dt)) / lambda`, the exact integral of `exp(-lambda s)` over `[0, dt]`.
pub fn duhamel_weight(lambda: f64, dt: f64) -> f64 {
    if lambda == 0.0 {
        dt
    } else {
        -(-lambda * dt).exp_m1() / lambda
    }
}

/// `-div phi` as a spectral field.
pub fn neg_divergence(phi: &VectorSpectralField) -> SpectralField {
    &phi.u1.map_imag_symbol(|k| -(k.k1 as f64)) + &phi.u2.map_imag_symbol(|k| -(k.k2 as f64))
}

/// Duhamel gradient convolution `(J phi)(t)` for `phi` sampled at the left
/// endpoints of `phi.len()` equal slices of `[0, t]`.
pub fn apply_j(phi: &[VectorSpectralField], t: f64) -> Result<SpectralField> {
    if phi.is_empty() {
        return Err(Error::Invalid("apply_j needs at least one time slice".into()));
    }
    if !(t > 0.0) {
        return Err(Error::constraint("t", t, "t > 0", "Duhamel integral"));
    }
    let dt = t / phi.len() as f64;
    let mut acc = SpectralField::zeros(phi[0].u1.cutoff());
    for slice in phi {
        let forced = neg_divergence(slice).map_symbol(|k| duhamel_weight(k.norm_sq() as f64, dt));
        acc = &semigroup_apply(dt, &acc)? + &forced;
    }
    Ok(acc)
}

/// Ratio `||J phi(t)||_p / int_0^t (t-s)^(-1/2) ||phi(s)||_p ds` on an `n` grid.
pub fn smoothing_ratio(phi: &[VectorSpectralField], t: f64, n: usize, p: f64) -> Result<f64> {
    let j = apply_j(phi, t)?;
    let num = lp_norm(&to_grid(&j, n)?, p)?;
    let dt = t / phi.len() as f64;
    let mut den = 0.0;
    for (i, slice) in phi.iter().enumerate() {
        let g1 = to_grid(&slice.u1, n)?;
        let g2 = to_grid(&slice.u2, n)?;
        let mag: Vec<f64> = g1.values().iter().zip(g2.values()).map(|(a, b)| a.hypot(*b)).collect();
        let norm = lp_norm(&crate::spectral::GridField::new(n, mag)?, p)?;
        let w = 2.0 * ((t - i as f64 * dt).sqrt() - (t - (i + 1) as f64 * dt).max(0.0).sqrt());
        den += w * norm;
    }
    Ok(num / den)
}

/// Largest admissible exponent for the kernel (`gradient = false`) or gradient integral.
pub fn max_admissible_beta(gradient: bool) -> f64 {
    if gradient {
        4.0 / 3.0
    } else {
        2.0
    }
}

/// Power-law exponent of `s` in the integral bound.
pub fn target_slope(beta: f64, gradient: bool) -> f64 {
    if gradient {
        1.0 - 1.5 * beta
    } else {
        1.0 - beta
    }
}

static RADIAL_RULE: Lazy<GaussLegendre> =
    Lazy::new(|| GaussLegendre::new(NonZeroUsize::new(16).expect("nonzero")));
static ANGULAR_RULE: Lazy<GaussLegendre> =
    Lazy::new(|| GaussLegendre::new(NonZeroUsize::new(32).expect("nonzero")));

/// `int_D |g(s,x,y)|^beta dy` (or `|grad_y g|^beta`) at a fixed `x`.
///
/// Polar Gauss-Legendre quadrature centred on the singular point: the
/// fundamental square around `x` is split into eight triangles, and radial
/// panels are graded geometrically from `2^-12 sqrt(s)` outwards.
pub fn kernel_lp_integral_at(beta: f64, s: f64, gradient: bool, x: Point) -> Result<f64> {
    let max = max_admissible_beta(gradient);
    if !(beta > 0.0 && beta < max) {
        return Err(Error::constraint(
            "beta",
            beta,
            if gradient { "0 < beta < 4/3" } else { "0 < beta < 2" },
            "the kernel integral estimate diverges outside this range",
        ));
    }
    let spec = KernelEvalSpec::for_time(s)?;
    let integrand = |r: f64, theta: f64| -> f64 {
        let y = [x[0] + r * theta.cos(), x[1] + r * theta.sin()];
        let v = if gradient {
            let g = eval_grad(&spec, x, y);
            g[0].hypot(g[1])
        } else {
            eval_images(&spec, x, y).abs()
        };
        v.powf(beta) * r
    };
    let r0 = 2f64.powi(-12) * s.sqrt();
    let mut total = 0.0;
    for side in 0..4 {
        let phi = side as f64 * PI / 2.0;
        for (lo, hi) in [(phi - PI / 4.0, phi), (phi, phi + PI / 4.0)] {
            total += ANGULAR_RULE.integrate(lo, hi, |theta| {
                let rmax = PI / (theta - phi).cos();
                let mut acc = RADIAL_RULE.integrate(0.0, r0.min(rmax), |r| integrand(r, theta));
                let mut a = r0;
                while a < rmax {
                    let b = (2.0 * a).min(rmax);
                    acc += RADIAL_RULE.integrate(a, b, |r| integrand(r, theta));
                    a = b;
                }
                acc
            });
        }
    }
    Ok(total)
}

/// [`kernel_lp_integral_at`] at the reference point `x = (pi, pi)`.
pub fn kernel_lp_integral(beta: f64, s: f64, gradient: bool) -> Result<f64> {
    kernel_lp_integral_at(beta, s, gradient, [PI, PI])
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelEstimateRow {
    pub beta: f64,
    pub s: f64,
    pub integral: f64,
    pub fitted_slope: f64,
    pub target_slope: f64,
    pub pass: bool,
}

/// Log-log fit of the kernel integral over `s`.
#[derive(Debug, Clone)]
pub struct KernelEstimateFit {
    pub beta: f64,
    pub gradient: bool,
    pub rows: Vec<KernelEstimateRow>,
    pub fitted_slope: f64,
    pub target_slope: f64,
    /// `exp(intercept)`: the fitted constant in `integral ~ C s^slope`.
    pub fitted_constant: f64,
    /// Largest spread of the integral across the probe points `xs`.
    pub x_spread: f64,
}

/// Evaluates the integral on `s_count` log-spaced times in `[s_min, s_max]`
/// and at each probe point in `xs`, then fits the slope.
pub fn kernel_estimate_sweep(
    beta: f64,
    gradient: bool,
    s_min: f64,
    s_max: f64,
    s_count: usize,
    xs: &[Point],
    slope_tol: f64,
) -> Result<KernelEstimateFit> {
    let s_values = log_space(s_min, s_max, s_count);
    let per_s: Vec<(f64, f64)> = s_values
        .par_iter()
        .map(|&s| -> Result<(f64, f64)> {
            let main = kernel_lp_integral(beta, s, gradient)?;
            let mut spread: f64 = 0.0;
            for &x in xs {
                spread = spread.max((kernel_lp_integral_at(beta, s, gradient, x)? - main).abs());
            }
            Ok((main, spread))
        })
        .collect::<Result<_>>()?;
    let lx: Vec<f64> = s_values.iter().map(|s| s.ln()).collect();
    let ly: Vec<f64> = per_s.iter().map(|(v, _)| v.ln()).collect();
    let (slope, intercept) = linear_fit(&lx, &ly);
    let target = target_slope(beta, gradient);
    let pass = (slope - target).abs() <= slope_tol;
    let rows = s_values
        .iter()
        .zip(&per_s)
        .map(|(&s, &(integral, _))| KernelEstimateRow {
            beta,
            s,
            integral,
            fitted_slope: slope,
            target_slope: target,
            pass,
        })
        .collect();
    Ok(KernelEstimateFit {
        beta,
        gradient,
        rows,
        fitted_slope: slope,
        target_slope: target,
        fitted_constant: intercept.exp(),
        x_spread: per_s.iter().map(|(_, d)| *d).fold(0.0, f64::max),
    })
}
