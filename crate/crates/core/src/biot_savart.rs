//! Velocity from vorticity, the quadratic flux `q = v xi` and its truncations.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::spectral::{
    from_grid, lp_norm, to_grid, GridField, SpectralField, VectorSpectralField, WaveVector,
};

/// `v(k) = -i k_perp xi(k) / |k|^2`, built as `v = grad_perp psi` from the
/// stream function `psi(k) = -xi(k) / |k|^2`.
pub fn velocity(xi: &SpectralField) -> VectorSpectralField {
    let psi = stream_function(xi);
    VectorSpectralField {
        u1: psi.map_imag_symbol(|k| -(k.k2 as f64)),
        u2: psi.map_imag_symbol(|k| k.k1 as f64),
    }
}

pub fn stream_function(xi: &SpectralField) -> SpectralField {
    xi.map_symbol(|k| -1.0 / k.norm_sq() as f64)
}

/// Integer numerator of `k . m(k)` for the velocity multiplier `m(k) = -i k_perp / |k|^2`.
///
/// Identically zero; the floating-point divergence of a velocity is zero up
/// to one rounding per coefficient.
pub fn velocity_symbol_divergence(k: WaveVector) -> i64 {
    let perp = k.perp();
    k.k1 * perp.k1 + k.k2 * perp.k2
}

/// Truncation level `N` and the Lebesgue index `p` of the norm it is applied to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationSpec {
    level: f64,
    p: f64,
}

impl TruncationSpec {
    pub fn new(level: f64, p: f64) -> Result<Self> {
        if !(level >= 1.0) {
            return Err(Error::constraint("truncation_level", level, "N >= 1", "norm cutoff"));
        }
        if !(p > 2.0) || !p.is_finite() {
            return Err(Error::constraint("p", p, "p > 2", "Lipschitz truncation of the flux"));
        }
        Ok(Self { level, p })
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// C1 cutoff: 1 below `N`, 0 from `N + 1`, cubic smoothstep in between.
    pub fn theta(&self, s: f64) -> Result<f64> {
        check_norm(s)?;
        let u = s - self.level;
        Ok(if u < 0.0 {
            1.0
        } else if u >= 1.0 {
            0.0
        } else {
            1.0 - 3.0 * u * u + 2.0 * u * u * u
        })
    }

    pub fn theta_prime(&self, s: f64) -> Result<f64> {
        check_norm(s)?;
        let u = s - self.level;
        Ok(if (0.0..1.0).contains(&u) { -6.0 * u + 6.0 * u * u } else { 0.0 })
    }
}

fn check_norm(s: f64) -> Result<()> {
    if s >= 0.0 {
        Ok(())
    } else {
        Err(Error::constraint("s", s, "s >= 0", "cutoff argument is a norm"))
    }
}

/// Smallest even grid on which products of two band-`cutoff` fields project
/// onto the band without aliasing.
pub fn product_grid(cutoff: usize) -> usize {
    let n = 3 * cutoff + 1;
    (n + n % 2).max(2 * cutoff + 2)
}

/// Band-limited projection of `u w` for a vector field `u` and scalar `w`.
pub fn project_product(u: &VectorSpectralField, w: &SpectralField) -> Result<VectorSpectralField> {
    let wg = to_grid(w, product_grid(w.cutoff()))?;
    project_product_on(u, &wg, w.cutoff())
}

/// As [`project_product`] with `w` already sampled on the product grid.
fn project_product_on(u: &VectorSpectralField, wg: &GridField, cutoff: usize) -> Result<VectorSpectralField> {
    let n = wg.n();
    let mul = |c: &SpectralField| -> Result<SpectralField> {
        let cg = to_grid(c, n)?;
        let prod: Vec<f64> = cg.values().iter().zip(wg.values()).map(|(a, b)| a * b).collect();
        from_grid(&GridField::new(n, prod)?, cutoff)
    };
    Ok(VectorSpectralField {
        u1: mul(&u.u1)?,
        u2: mul(&u.u2)?,
    })
}

/// `q(xi) = v(xi) xi`, projected onto the band of `xi`.
pub fn flux(xi: &SpectralField) -> Result<VectorSpectralField> {
    project_product(&velocity(xi), xi)
}

/// Pointwise magnitude `|u|` of a vector field on an `n` grid.
pub fn magnitude_grid(u: &VectorSpectralField, n: usize) -> Result<GridField> {
    let a = to_grid(&u.u1, n)?;
    let b = to_grid(&u.u2, n)?;
    GridField::new(n, a.values().iter().zip(b.values()).map(|(x, y)| x.hypot(*y)).collect())
}

/// `L^p` norm of a vector field, `(int |u|^p)^(1/p)`.
pub fn vector_lp_norm(u: &VectorSpectralField, n: usize, p: f64) -> Result<f64> {
    lp_norm(&magnitude_grid(u, n)?, p)
}

/// Flux with its truncation factors, all evaluated at one state.
#[derive(Debug, Clone)]
pub struct TruncatedFlux {
    pub flux: VectorSpectralField,
    pub norm: f64,
    pub theta: f64,
    pub theta_prime: f64,
}

impl TruncatedFlux {
    /// `q_N = theta q`.
    pub fn truncated(&self) -> VectorSpectralField {
        scale_vector(&self.flux, self.theta)
    }

    /// `q~_N = theta' q`.
    pub fn tilde(&self) -> VectorSpectralField {
        scale_vector(&self.flux, self.theta_prime)
    }
}

pub fn scale_vector(u: &VectorSpectralField, s: f64) -> VectorSpectralField {
    VectorSpectralField {
        u1: &u.u1 * s,
        u2: &u.u2 * s,
    }
}

/// Computes `q(xi)` together with `Theta_N` and `Theta_N'` of `||xi||_{L^p}`,
/// the norm taken by quadrature on an `n` grid.
///
/// The product is skipped when `Theta_N` and `Theta_N'` both vanish.
pub fn truncated_flux(xi: &SpectralField, spec: &TruncationSpec, n: usize) -> Result<TruncatedFlux> {
    let nq = product_grid(xi.cutoff());
    let xq = to_grid(xi, nq)?;
    let norm = if n == nq {
        lp_norm(&xq, spec.p())?
    } else {
        lp_norm(&to_grid(xi, n)?, spec.p())?
    };
    let theta = spec.theta(norm)?;
    let theta_prime = spec.theta_prime(norm)?;
    let flux = if theta == 0.0 && theta_prime == 0.0 {
        let z = SpectralField::zeros(xi.cutoff());
        VectorSpectralField { u1: z.clone(), u2: z }
    } else {
        project_product_on(&velocity(xi), &xq, xi.cutoff())?
    };
    Ok(TruncatedFlux {
        flux,
        norm,
        theta,
        theta_prime,
    })
}

/// `q_N(xi)`.
pub fn q_truncated(xi: &SpectralField, spec: &TruncationSpec, n: usize) -> Result<VectorSpectralField> {
    Ok(truncated_flux(xi, spec, n)?.truncated())
}

/// `q~_N(xi)`.
pub fn q_tilde(xi: &SpectralField, spec: &TruncationSpec, n: usize) -> Result<VectorSpectralField> {
    Ok(truncated_flux(xi, spec, n)?.tilde())
}

/// Outcome of a random search for the Lipschitz constant of `q_N`.
#[derive(Debug, Clone)]
pub struct LipschitzReport {
    pub max_ratio: f64,
    /// `max_ratio / (N + 1)^2`.
    pub scaled_constant: f64,
    pub trials: usize,
    pub skipped: usize,
}

/// Largest observed `||q_N(a) - q_N(b)||_p / ||a - b||_p` over random pairs.
///
/// Norms of `a` sweep `[0, 2(N + 1)]`; `b` is either a small perturbation of
/// `a` or an independent field, alternating by trial.
pub fn lipschitz_probe(
    spec: &TruncationSpec,
    cutoff: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    if trials < 1 {
        return Err(Error::constraint("trials", trials, "trials >= 1", "Monte Carlo probe"));
    }
    let p = spec.p();
    let top = 2.0 * (spec.level() + 1.0);
    let ratios: Vec<Option<f64>> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<Option<f64>> {
            let s = derive_seed(seed, i as u64);
            let unit = |seed: u64| -> Result<SpectralField> {
                let f = SpectralField::random(cutoff, cutoff, 1.5, 1.0, seed);
                let norm = lp_norm(&to_grid(&f, n)?, p)?;
                Ok(&f * (1.0 / norm))
            };
            let frac = (derive_seed(s, 7) >> 11) as f64 / (1u64 << 53) as f64;
            let a = &unit(derive_seed(s, 1))? * (frac * top);
            let b = if i % 2 == 0 {
                let eps = 10f64.powf(-1.0 - 3.0 * frac);
                &a + &(&unit(derive_seed(s, 2))? * eps)
            } else {
                let frac_b = (derive_seed(s, 8) >> 11) as f64 / (1u64 << 53) as f64;
                &unit(derive_seed(s, 2))? * (frac_b * top)
            };
            let diff = &a - &b;
            let den = lp_norm(&to_grid(&diff, n)?, p)?;
            if den == 0.0 {
                return Ok(None);
            }
            let qa = q_truncated(&a, spec, n)?;
            let qb = q_truncated(&b, spec, n)?;
            let dq = VectorSpectralField {
                u1: &qa.u1 - &qb.u1,
                u2: &qa.u2 - &qb.u2,
            };
            Ok(Some(vector_lp_norm(&dq, n, p)? / den))
        })
        .collect::<Result<_>>()?;
    let skipped = ratios.iter().filter(|r| r.is_none()).count();
    let max_ratio = ratios.into_iter().flatten().fold(0.0, f64::max);
    Ok(LipschitzReport {
        max_ratio,
        scaled_constant: max_ratio / (spec.level() + 1.0).powi(2),
        trials,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::SIN_COEFF;

    #[test]
    fn theta_examples() {
        let s = TruncationSpec::new(4.0, 6.0).unwrap();
        assert_eq!(s.theta(2.0).unwrap(), 1.0);
        assert_eq!(s.theta(6.0).unwrap(), 0.0);
        assert_eq!(s.theta(4.5).unwrap(), 0.5);
        assert_eq!(s.theta_prime(4.5).unwrap(), -1.5);
        assert_eq!(s.theta_prime(3.0).unwrap(), 0.0);
        assert!(s.theta(-0.1).is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(TruncationSpec::new(0.5, 6.0).is_err());
        assert!(TruncationSpec::new(2.0, 2.0).is_err());
        assert!(TruncationSpec::new(2.0, 2.5).is_ok());
    }

    #[test]
    fn product_grid_sizes() {
        assert_eq!(product_grid(21), 64);
        assert_eq!(product_grid(10), 32);
        assert_eq!(product_grid(1), 4);
        assert_eq!(product_grid(0), 2);
    }

    #[test]
    fn sine_velocity_and_flux() {
        let xi = SpectralField::from_modes(4, &[(WaveVector::new(1, 0), SIN_COEFF)]);
        let v = velocity(&xi);
        assert_eq!(v.u1.energy(), 0.0);
        let k = WaveVector::new(1, 0);
        assert!((v.u2.get(k).re + std::f64::consts::PI).abs() < 1e-15);
        let q = flux(&xi).unwrap();
        let g = to_grid(&q.u2, 16).unwrap();
        let exact = GridField::from_fn(16, |x, _| -x.sin() * x.cos());
        for (a, b) in g.values().iter().zip(exact.values()) {
            assert!((a - b).abs() < 1e-14);
        }
        let div = q.divergence();
        assert!(div.energy() < 1e-28);
    }

    #[test]
    fn zero_inputs() {
        let z = SpectralField::zeros(5);
        assert_eq!(velocity(&z).u1.energy(), 0.0);
        let q = flux(&z).unwrap();
        assert_eq!(q.u1.energy() + q.u2.energy(), 0.0);
    }
}
