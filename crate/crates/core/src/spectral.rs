//! Fourier representation of zero-mean real fields on the torus `[0, 2pi)^2`.
//!
//! Coefficients are taken against the orthonormal basis
//! `e_k(x) = exp(i k.x) / (2 pi)`, so `coeff(k) = <f, e_k>`.

use std::f64::consts::{PI, TAU};
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::fft2;
use crate::rng::ModeStream;

/// Lattice index of a Fourier mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WaveVector {
    pub k1: i64,
    pub k2: i64,
}

impl WaveVector {
    pub const fn new(k1: i64, k2: i64) -> Self {
        Self { k1, k2 }
    }

    pub fn norm_sq(self) -> i64 {
        self.k1 * self.k1 + self.k2 * self.k2
    }

    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// `(-k2, k1)`.
    pub fn perp(self) -> Self {
        Self::new(-self.k2, self.k1)
    }

    pub fn is_zero(self) -> bool {
        self.k1 == 0 && self.k2 == 0
    }

    /// Representative half-lattice: `k1 > 0`, or `k1 == 0` and `k2 > 0`.
    pub fn is_positive_half(self) -> bool {
        self.k1 > 0 || (self.k1 == 0 && self.k2 > 0)
    }

    pub fn max_abs(self) -> i64 {
        self.k1.abs().max(self.k2.abs())
    }
}

impl Neg for WaveVector {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.k1, -self.k2)
    }
}

/// Modes of the half lattice with `max(|k1|, |k2|) <= cutoff`, in a fixed order.
pub fn half_lattice(cutoff: usize) -> Vec<WaveVector> {
    let k = cutoff as i64;
    let mut out = Vec::new();
    for k1 in 0..=k {
        for k2 in -k..=k {
            let w = WaveVector::new(k1, k2);
            if w.is_positive_half() {
                out.push(w);
            }
        }
    }
    out
}

/// Zero-mean Hermitian coefficient array on the square `|k_i| <= cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    cutoff: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(cutoff: usize) -> Self {
        let side = 2 * cutoff + 1;
        Self {
            cutoff,
            coeffs: vec![Complex64::default(); side * side],
        }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    fn side(&self) -> usize {
        2 * self.cutoff + 1
    }

    fn index(&self, k: WaveVector) -> Option<usize> {
        let c = self.cutoff as i64;
        if k.k1.abs() > c || k.k2.abs() > c {
            return None;
        }
        Some(((k.k1 + c) as usize) * self.side() + (k.k2 + c) as usize)
    }

    fn wave_at(&self, idx: usize) -> WaveVector {
        let c = self.cutoff as i64;
        let side = self.side();
        WaveVector::new((idx / side) as i64 - c, (idx % side) as i64 - c)
    }

    /// Coefficient at `k`; zero outside the stored square.
    pub fn get(&self, k: WaveVector) -> Complex64 {
        self.index(k).map_or(Complex64::default(), |i| self.coeffs[i])
    }

    /// Sets `coeff(k) = c` and `coeff(-k) = conj(c)`.
    ///
    /// Panics when `k` is zero or outside the stored square.
    pub fn set_pair(&mut self, k: WaveVector, c: Complex64) {
        assert!(!k.is_zero(), "the mean mode carries no data");
        let i = self.index(k).expect("wave vector outside cutoff");
        let j = self.index(-k).expect("wave vector outside cutoff");
        self.coeffs[i] = c;
        self.coeffs[j] = c.conj();
    }

    /// Builds a field from explicit `(k, coeff)` pairs; `-k` gets the conjugate.
    pub fn from_modes(cutoff: usize, modes: &[(WaveVector, Complex64)]) -> Self {
        let mut f = Self::zeros(cutoff);
        for &(k, c) in modes {
            f.set_pair(k, c);
        }
        f
    }

    /// All stored `(k, coeff)` pairs, including the mean slot.
    pub fn modes(&self) -> impl Iterator<Item = (WaveVector, Complex64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, &c)| (self.wave_at(i), c))
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    /// Multiplies each coefficient by a real symbol `m(k)`; the mean stays zero.
    pub fn map_symbol(&self, mut m: impl FnMut(WaveVector) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..out.coeffs.len() {
            let k = out.wave_at(i);
            out.coeffs[i] = if k.is_zero() {
                Complex64::default()
            } else {
                out.coeffs[i] * m(k)
            };
        }
        out
    }

    /// Multiplies by an odd imaginary symbol `i m(k)` with `m(-k) = -m(k)`.
    pub fn map_imag_symbol(&self, mut m: impl FnMut(WaveVector) -> f64) -> Self {
        let mut out = self.clone();
        for i in 0..out.coeffs.len() {
            let k = out.wave_at(i);
            out.coeffs[i] *= Complex64::new(0.0, m(k));
        }
        out
    }

    /// Copy with the stored square changed to `cutoff` (truncating or zero-padding).
    pub fn with_cutoff(&self, cutoff: usize) -> Self {
        let mut out = Self::zeros(cutoff);
        for i in 0..out.coeffs.len() {
            out.coeffs[i] = self.get(out.wave_at(i));
        }
        out
    }

    /// Zeroes modes with `max(|k1|, |k2|) > band`.
    pub fn band_limit(&self, band: usize) -> Self {
        let mut out = self.clone();
        for i in 0..out.coeffs.len() {
            if out.wave_at(i).max_abs() > band as i64 {
                out.coeffs[i] = Complex64::default();
            }
        }
        out
    }

    /// Largest violation of `coeff(-k) = conj(coeff(k))` or of the zero mean.
    pub fn hermitian_defect(&self) -> f64 {
        let mut d = self.get(WaveVector::new(0, 0)).norm();
        for (k, c) in self.modes() {
            d = d.max((self.get(-k) - c.conj()).norm());
        }
        d
    }

    /// Restores exact symmetry by averaging each pair and clearing the mean.
    pub fn symmetrize(&mut self) {
        for i in 0..self.coeffs.len() {
            let k = self.wave_at(i);
            if k.is_zero() {
                self.coeffs[i] = Complex64::default();
            } else if k.is_positive_half() {
                let j = self.index(-k).expect("square is symmetric");
                let avg = 0.5 * (self.coeffs[i] + self.coeffs[j].conj());
                self.coeffs[i] = avg;
                self.coeffs[j] = avg.conj();
            }
        }
    }

    /// `sum_k |coeff(k)|^2`, the squared L2 norm by Parseval.
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Real inner product `sum_k coeff_a(k) conj(coeff_b(k))`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.modes()
            .map(|(k, c)| (c * other.get(k).conj()).re)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let c = self.cutoff.max(other.cutoff);
        let (a, b) = (self.with_cutoff(c), other.with_cutoff(c));
        a.coeffs
            .iter()
            .zip(&b.coeffs)
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// Pointwise value by direct synthesis.
    pub fn eval_at(&self, x: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for (k, c) in self.modes() {
            if c.norm_sqr() == 0.0 {
                continue;
            }
            let phase = k.k1 as f64 * x[0] + k.k2 as f64 * x[1];
            s += (c * Complex64::from_polar(1.0, phase)).re;
        }
        s / TAU
    }

    /// Random field with `coeff(k) ~ amplitude |k|^(-decay) (g1 + i g2)` on the
    /// band `max|k_i| <= band`, keyed by `seed` so the draw is independent of `cutoff`.
    pub fn random(cutoff: usize, band: usize, decay: f64, amplitude: f64, seed: u64) -> Self {
        let mut f = Self::zeros(cutoff);
        for k in half_lattice(band.min(cutoff)) {
            let (a, b) = ModeStream::new(seed, k.k1, k.k2).normal_pair();
            let s = amplitude * k.norm().powf(-decay);
            f.set_pair(k, Complex64::new(a * s, b * s));
        }
        f
    }

    /// Writes rows `k1,k2,re,im` for every nonzero wave vector in the square.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["k1", "k2", "re", "im"])?;
        for (k, c) in self.modes().filter(|(k, _)| !k.is_zero()) {
            wr.serialize((k.k1, k.k2, c.re, c.im))?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Reads the format of [`SpectralField::write_csv`]; missing modes are zero.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let mut rows = Vec::new();
        let mut cutoff = 0usize;
        for rec in rd.deserialize() {
            let (k1, k2, re, im): (i64, i64, f64, f64) = rec?;
            if !(re.is_finite() && im.is_finite()) {
                return Err(Error::NonFinite { what: "spectral CSV" });
            }
            cutoff = cutoff.max(k1.unsigned_abs() as usize).max(k2.unsigned_abs() as usize);
            rows.push((WaveVector::new(k1, k2), Complex64::new(re, im)));
        }
        let mut f = Self::zeros(cutoff);
        for (k, c) in rows {
            if k.is_zero() {
                if c.norm() != 0.0 {
                    return Err(Error::Invalid("nonzero mean mode".into()));
                }
                continue;
            }
            let i = f.index(k).expect("cutoff covers all rows");
            f.coeffs[i] = c;
        }
        let scale = f.coeffs.iter().map(|c| c.norm()).fold(1.0, f64::max);
        if f.hermitian_defect() > 1e-12 * scale {
            return Err(Error::Invalid("coefficients are not Hermitian-symmetric".into()));
        }
        Ok(f)
    }
}

impl Add<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn add(self, rhs: &SpectralField) -> SpectralField {
        zip_with(self, rhs, |a, b| a + b)
    }
}

impl Sub<&SpectralField> for &SpectralField {
    type Output = SpectralField;
    fn sub(self, rhs: &SpectralField) -> SpectralField {
        zip_with(self, rhs, |a, b| a - b)
    }
}

impl Mul<f64> for &SpectralField {
    type Output = SpectralField;
    fn mul(self, s: f64) -> SpectralField {
        SpectralField {
            cutoff: self.cutoff,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }
}

fn zip_with(
    a: &SpectralField,
    b: &SpectralField,
    f: impl Fn(Complex64, Complex64) -> Complex64,
) -> SpectralField {
    if a.cutoff == b.cutoff {
        SpectralField {
            cutoff: a.cutoff,
            coeffs: a.coeffs.iter().zip(&b.coeffs).map(|(&x, &y)| f(x, y)).collect(),
        }
    } else {
        let c = a.cutoff.max(b.cutoff);
        zip_with(&a.with_cutoff(c), &b.with_cutoff(c), f)
    }
}

/// Real Fourier multiplier tabulated on the square `|k_i| <= cutoff`.
#[derive(Debug, Clone, PartialEq)]
pub struct Multiplier {
    cutoff: usize,
    values: Vec<f64>,
}

impl Multiplier {
    /// Tabulates `m(k)`; the mean slot is set to zero.
    pub fn new(cutoff: usize, mut m: impl FnMut(WaveVector) -> f64) -> Self {
        let proto = SpectralField::zeros(cutoff);
        let values = (0..proto.coeffs.len())
            .map(|i| {
                let k = proto.wave_at(i);
                if k.is_zero() {
                    0.0
                } else {
                    m(k)
                }
            })
            .collect();
        Self { cutoff, values }
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn get(&self, k: WaveVector) -> f64 {
        let c = self.cutoff as i64;
        if k.k1.abs() > c || k.k2.abs() > c {
            return 0.0;
        }
        self.values[((k.k1 + c) as usize) * (2 * self.cutoff + 1) + (k.k2 + c) as usize]
    }

    pub fn apply(&self, f: &SpectralField) -> SpectralField {
        assert_eq!(f.cutoff, self.cutoff, "multiplier and field cutoffs differ");
        SpectralField {
            cutoff: self.cutoff,
            coeffs: f.coeffs.iter().zip(&self.values).map(|(c, m)| c * m).collect(),
        }
    }

    /// `self(k) a(k) + other(k) b(k)` in one pass.
    pub fn combine(&self, a: &SpectralField, other: &Multiplier, b: &SpectralField) -> SpectralField {
        assert!(a.cutoff == self.cutoff && b.cutoff == self.cutoff && other.cutoff == self.cutoff);
        SpectralField {
            cutoff: self.cutoff,
            coeffs: (0..a.coeffs.len())
                .map(|i| a.coeffs[i] * self.values[i] + b.coeffs[i] * other.values[i])
                .collect(),
        }
    }
}

/// Pair of scalar spectral fields, e.g. a velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSpectralField {
    pub u1: SpectralField,
    pub u2: SpectralField,
}

impl VectorSpectralField {
    /// `i (k1 u1 + k2 u2)`.
    pub fn divergence(&self) -> SpectralField {
        &self.u1.map_imag_symbol(|k| k.k1 as f64) + &self.u2.map_imag_symbol(|k| k.k2 as f64)
    }

    /// `i (k1 u2 - k2 u1)`, the scalar curl.
    pub fn curl(&self) -> SpectralField {
        &self.u2.map_imag_symbol(|k| k.k1 as f64) - &self.u1.map_imag_symbol(|k| k.k2 as f64)
    }

    /// Largest `|k1 u1(k) + k2 u2(k)|` over stored modes.
    pub fn divergence_defect(&self) -> f64 {
        self.u1
            .modes()
            .map(|(k, a)| (a * k.k1 as f64 + self.u2.get(k) * k.k2 as f64).norm())
            .fold(0.0, f64::max)
    }
}

/// `(i k1 f, i k2 f)`.
pub fn gradient(f: &SpectralField) -> VectorSpectralField {
    VectorSpectralField {
        u1: f.map_imag_symbol(|k| k.k1 as f64),
        u2: f.map_imag_symbol(|k| k.k2 as f64),
    }
}

/// Real samples on the uniform grid `x_ab = (2 pi a / n, 2 pi b / n)`, row-major in `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    n: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Invalid(format!(
                "grid of side {n} needs {} values, got {}",
                n * n,
                values.len()
            )));
        }
        Ok(Self { n, values })
    }

    /// Samples `f(x1, x2)` at the grid nodes.
    pub fn from_fn(n: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let h = TAU / n as f64;
        let values = (0..n * n)
            .map(|i| f((i / n) as f64 * h, (i % n) as f64 * h))
            .collect();
        Self { n, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.n as f64
    }

    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Writes the header `n=<n>` followed by `n` comma-separated rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "n={}", self.n)?;
        let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        for row in self.values.chunks(self.n) {
            wr.serialize(row)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut br = BufReader::new(r);
        let mut header = String::new();
        br.read_line(&mut header)?;
        let n: usize = header
            .trim()
            .strip_prefix("n=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Invalid(format!("bad grid header {:?}", header.trim())))?;
        let mut rd = csv::ReaderBuilder::new().has_headers(false).from_reader(br);
        let mut values = Vec::with_capacity(n * n);
        for rec in rd.deserialize() {
            let row: Vec<f64> = rec?;
            if row.len() != n {
                return Err(Error::Invalid(format!("grid row has {} values, expected {n}", row.len())));
            }
            values.extend(row);
        }
        Self::new(n, values)
    }
}

/// Synthesis `sum_k coeff(k) e_k(x)` on the `n x n` grid.
pub fn to_grid(f: &SpectralField, n: usize) -> Result<GridField> {
    if n < 2 * f.cutoff + 2 {
        return Err(Error::Aliasing { n, cutoff: f.cutoff });
    }
    let mut buf = vec![Complex64::default(); n * n];
    let ni = n as i64;
    for (k, c) in f.modes() {
        let a = k.k1.rem_euclid(ni) as usize;
        let b = k.k2.rem_euclid(ni) as usize;
        buf[a * n + b] = c;
    }
    fft2(&mut buf, n, true);
    let values = buf.iter().map(|z| z.re / TAU).collect();
    Ok(GridField { n, values })
}

/// Analysis onto modes `|k_i| <= cutoff`, with the mean removed and symmetry enforced.
pub fn from_grid(g: &GridField, cutoff: usize) -> Result<SpectralField> {
    let n = g.n;
    if 2 * cutoff + 2 > n {
        return Err(Error::Aliasing { n, cutoff });
    }
    if !g.values.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite { what: "grid samples" });
    }
    let mut buf: Vec<Complex64> = g.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft2(&mut buf, n, false);
    let scale = TAU / (n * n) as f64;
    let mut f = SpectralField::zeros(cutoff);
    let ni = n as i64;
    for i in 0..f.coeffs.len() {
        let k = f.wave_at(i);
        let a = k.k1.rem_euclid(ni) as usize;
        let b = k.k2.rem_euclid(ni) as usize;
        f.coeffs[i] = buf[a * n + b] * scale;
    }
    f.symmetrize();
    Ok(f)
}

/// `A^b f`: multiplies `coeff(k)` by `|k|^(2b)`.
pub fn apply_a_power(f: &SpectralField, b: f64) -> SpectralField {
    f.map_symbol(|k| (k.norm_sq() as f64).powf(b))
}

/// Grid quadrature of `(integral |g|^p)^(1/p)`.
pub fn lp_norm(g: &GridField, p: f64) -> Result<f64> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::constraint("p", p, "p >= 1", "L^p norm"));
    }
    let h2 = g.spacing() * g.spacing();
    let sum: f64 = if p.fract() == 0.0 && p <= 64.0 {
        let e = p as i32;
        g.values.iter().map(|v| v.abs().powi(e)).sum()
    } else {
        g.values.iter().map(|v| v.abs().powf(p)).sum()
    };
    Ok((h2 * sum).powf(1.0 / p))
}

/// Two-thirds rule: zeroes modes with `max(|k1|, |k2|) > floor(2K/3)`.
pub fn dealias(f: &SpectralField) -> SpectralField {
    f.band_limit(2 * f.cutoff / 3)
}

/// Coefficient of `sin(x1)` at `k = (1, 0)`, handy for tests and examples.
pub const SIN_COEFF: Complex64 = Complex64::new(0.0, -PI);

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sin_x1(cutoff: usize) -> SpectralField {
        SpectralField::from_modes(cutoff, &[(WaveVector::new(1, 0), SIN_COEFF)])
    }

    #[test]
    fn synthesis_of_sine_and_cosine() {
        let g = to_grid(&sin_x1(4), 16).unwrap();
        let exact = GridField::from_fn(16, |x, _| x.sin());
        for (a, b) in g.values().iter().zip(exact.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
        let f = SpectralField::from_modes(4, &[(WaveVector::new(0, 1), Complex64::new(PI, 0.0))]);
        let g = to_grid(&f, 16).unwrap();
        let exact = GridField::from_fn(16, |_, y| y.cos());
        for (a, b) in g.values().iter().zip(exact.values()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_field_gives_zero_grid() {
        let g = to_grid(&SpectralField::zeros(5), 12).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn aliasing_rejected() {
        assert!(matches!(
            to_grid(&SpectralField::zeros(5), 11),
            Err(Error::Aliasing { n: 11, cutoff: 5 })
        ));
        let g = GridField::from_fn(8, |_, _| 0.0);
        assert!(from_grid(&g, 4).is_err());
        assert!(from_grid(&g, 3).is_ok());
    }

    #[test]
    fn analysis_of_sine() {
        let g = GridField::from_fn(16, |x, _| x.sin());
        let f = from_grid(&g, 4).unwrap();
        for (k, c) in f.modes() {
            if k == WaveVector::new(1, 0) {
                assert_abs_diff_eq!(c.im, -PI, epsilon = 1e-13);
                assert_abs_diff_eq!(c.re, 0.0, epsilon = 1e-13);
            } else if k == WaveVector::new(-1, 0) {
                assert_abs_diff_eq!(c.im, PI, epsilon = 1e-13);
            } else {
                assert!(c.norm() < 1e-13, "{k:?} -> {c}");
            }
        }
    }

    #[test]
    fn constant_grid_has_no_modes() {
        let f = from_grid(&GridField::from_fn(8, |_, _| 3.5), 3).unwrap();
        assert_eq!(f.energy(), 0.0);
    }

    #[test]
    fn non_finite_grid_rejected() {
        let mut v = vec![0.0; 64];
        v[5] = f64::NAN;
        let g = GridField::new(8, v).unwrap();
        assert!(matches!(from_grid(&g, 3), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn laplacian_power_on_single_mode() {
        let c = Complex64::new(0.3, -1.1);
        let f = SpectralField::from_modes(3, &[(WaveVector::new(1, 2), c)]);
        let g = apply_a_power(&f, 1.0);
        assert_abs_diff_eq!((g.get(WaveVector::new(1, 2)) - 5.0 * c).norm(), 0.0, epsilon = 1e-15);
        assert_eq!(apply_a_power(&f, 0.0), f);
    }

    #[test]
    fn lp_norm_examples() {
        let one = GridField::from_fn(32, |_, _| 1.0);
        assert_abs_diff_eq!(lp_norm(&one, 2.0).unwrap(), TAU, epsilon = 1e-13);
        let s = GridField::from_fn(32, |x, _| x.sin());
        assert_abs_diff_eq!(lp_norm(&s, 2.0).unwrap(), (2.0 * PI * PI).sqrt(), epsilon = 1e-13);
        assert_abs_diff_eq!(lp_norm(&s, 2.0).unwrap(), 4.4429, epsilon = 1e-4);
        assert!(lp_norm(&s, 0.5).is_err());
        assert!(lp_norm(&s, f64::NAN).is_err());
    }

    #[test]
    fn lp_norm_integer_and_fractional_paths_agree() {
        let g = to_grid(&SpectralField::random(6, 6, 1.0, 1.0, 3), 16).unwrap();
        let a = lp_norm(&g, 4.0).unwrap();
        let sum: f64 = g.values().iter().map(|v| v.abs().powf(4.0)).sum();
        let b = (g.spacing().powi(2) * sum).powf(0.25);
        assert_abs_diff_eq!(a, b, epsilon = 1e-12 * b);
    }

    #[test]
    fn dealias_band() {
        let f = SpectralField::from_modes(
            9,
            &[
                (WaveVector::new(7, 0), Complex64::new(1.0, 0.0)),
                (WaveVector::new(6, 1), Complex64::new(0.0, 2.0)),
            ],
        );
        let d = dealias(&f);
        assert_eq!(d.get(WaveVector::new(7, 0)), Complex64::default());
        assert_eq!(d.get(WaveVector::new(-7, 0)), Complex64::default());
        assert_eq!(d.get(WaveVector::new(6, 1)), Complex64::new(0.0, 2.0));
        assert_eq!(dealias(&SpectralField::zeros(9)), SpectralField::zeros(9));
    }

    #[test]
    fn random_field_is_hermitian_and_cutoff_independent() {
        let a = SpectralField::random(8, 5, 1.5, 1.0, 42);
        let b = SpectralField::random(12, 5, 1.5, 1.0, 42);
        assert_eq!(a.hermitian_defect(), 0.0);
        assert_eq!(a.max_abs_diff(&b), 0.0);
        assert!(a.energy() > 0.0);
    }

    #[test]
    fn eval_at_matches_grid() {
        let f = SpectralField::random(5, 5, 1.0, 1.0, 9);
        let g = to_grid(&f, 12).unwrap();
        let h = g.spacing();
        assert_abs_diff_eq!(f.eval_at([3.0 * h, 7.0 * h]), g.at(3, 7), epsilon = 1e-13);
    }

    #[test]
    fn csv_round_trips() {
        let f = SpectralField::random(4, 4, 1.0, 1.0, 5);
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"k1,k2,re,im\n"));
        assert_eq!(SpectralField::read_csv(&buf[..]).unwrap(), f);

        let g = to_grid(&f, 10).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert!(buf.starts_with(b"n=10\n"));
        assert_eq!(GridField::read_csv(&buf[..]).unwrap(), g);
    }

    #[test]
    fn non_hermitian_csv_rejected() {
        let text = "k1,k2,re,im\n1,0,1.0,0.0\n-1,0,2.0,0.0\n";
        assert!(SpectralField::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn vector_calculus_identities() {
        let f = SpectralField::random(6, 6, 1.0, 1.0, 1);
        let grad = gradient(&f);
        assert!(grad.curl().energy() < 1e-24);
        let div = grad.divergence();
        let lap = apply_a_power(&f, 1.0);
        assert!((&div + &lap).max_abs_diff(&SpectralField::zeros(6)) < 1e-12);
    }
}
