//! Null and alternative densities of the test statistic.
//!
//! The null `f0` is Gaussian. The alternative `f1` is estimated once from all
//! observed z-values by predictive recursion: the alternative is modelled as
//! a Gaussian location mixture `f1(z) = ∫ φσ(z − θ) g(θ) dθ`, and the mixing
//! density `g` together with the alternative mass π1 are updated one
//! observation at a time with a decaying weight sequence. Several passes over
//! independently shuffled data are averaged to remove the order dependence.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Values returned by [`GridDensity::eval`] never drop below this.
pub const DENSITY_FLOOR: f64 = 1e-10;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Gaussian density at `z`.
pub fn null_pdf(z: f64, loc: f64, scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::Domain(format!("scale must be positive, got {scale}")));
    }
    Ok(gauss(z, loc, scale))
}

#[inline]
fn gauss(z: f64, loc: f64, scale: f64) -> f64 {
    let u = (z - loc) / scale;
    INV_SQRT_2PI / scale * (-0.5 * u * u).exp()
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// Location/scale of the Gaussian null.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NullSpec {
    pub loc: f64,
    pub scale: f64,
}

impl Default for NullSpec {
    fn default() -> Self {
        NullSpec { loc: 0.0, scale: 1.0 }
    }
}

impl NullSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.loc.is_finite() || !self.scale.is_finite() {
            return Err(Error::Domain(format!("invalid null spec {self:?}")));
        }
        Ok(())
    }

    pub fn pdf(&self, z: f64) -> f64 {
        gauss(z, self.loc, self.scale)
    }
}

/// A density tabulated on a uniform grid `lo, lo + step, ..., hi`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridDensityRepr")]
pub struct GridDensity {
    lo: f64,
    hi: f64,
    step: f64,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct GridDensityRepr {
    lo: f64,
    hi: f64,
    step: f64,
    values: Vec<f64>,
}

impl TryFrom<GridDensityRepr> for GridDensity {
    type Error = Error;

    fn try_from(r: GridDensityRepr) -> Result<Self> {
        let d = GridDensity::new(r.lo, r.step, r.values)?;
        if (d.hi - r.hi).abs() > 1e-9 * r.step {
            return Err(Error::Validation(format!(
                "grid endpoint {} inconsistent with lo/step/len (expected {})",
                r.hi, d.hi
            )));
        }
        Ok(d)
    }
}

impl GridDensity {
    /// Builds a density, checking non-negativity and unit mass (±1e-3).
    pub fn new(lo: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        let d = Self::unchecked(lo, step, values)?;
        let mass = d.integral();
        if (mass - 1.0).abs() > 1e-3 {
            return Err(Error::Validation(format!(
                "grid density integrates to {mass}, not 1"
            )));
        }
        Ok(d)
    }

    /// Rescales `values` to unit trapezoid mass.
    pub fn normalized(lo: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        let mut d = Self::unchecked(lo, step, values)?;
        let mass = d.integral();
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::Numeric(format!("cannot normalize density of mass {mass}")));
        }
        d.values.iter_mut().for_each(|v| *v /= mass);
        Ok(d)
    }

    fn unchecked(lo: f64, step: f64, values: Vec<f64>) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() || !lo.is_finite() {
            return Err(Error::Validation(format!("bad grid lo={lo}, step={step}")));
        }
        if values.len() < 2 {
            return Err(Error::Validation("grid needs at least two points".into()));
        }
        if values.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Validation("grid density values must be finite and >= 0".into()));
        }
        let hi = lo + step * (values.len() - 1) as f64;
        Ok(GridDensity { lo, hi, step, values })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn grid_point(&self, i: usize) -> f64 {
        self.lo + self.step * i as f64
    }

    /// Trapezoid integral over `[lo, hi]`.
    pub fn integral(&self) -> f64 {
        let inner: f64 = self.values.iter().sum();
        let ends = 0.5 * (self.values[0] + self.values[self.values.len() - 1]);
        (inner - ends) * self.step
    }

    /// Linear interpolation, floored at [`DENSITY_FLOOR`].
    pub fn eval(&self, z: f64) -> f64 {
        self.eval_with_floor(z, DENSITY_FLOOR)
    }

    pub fn eval_with_floor(&self, z: f64, floor: f64) -> f64 {
        if !(z >= self.lo && z <= self.hi) {
            return floor;
        }
        let pos = (z - self.lo) / self.step;
        let last = self.values.len() - 1;
        let i = (pos.floor() as usize).min(last);
        let v = if i == last {
            self.values[last]
        } else {
            let t = pos - i as f64;
            self.values[i] * (1.0 - t) + self.values[i + 1] * t
        };
        v.max(floor)
    }

    /// Grid point holding the largest value (first on ties).
    pub fn argmax(&self) -> f64 {
        let (i, _) = self
            .values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) });
        self.grid_point(i)
    }

    /// Writes `grid_point,value` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        wtr.write_record(["grid_point", "value"])?;
        for (i, v) in self.values.iter().enumerate() {
            wtr.write_record([
                crate::data::fmt_f64(self.grid_point(i)),
                crate::data::fmt_f64(*v),
            ])?;
        }
        wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

/// Free-function form of [`GridDensity::eval`].
pub fn eval_density(d: &GridDensity, z: f64) -> f64 {
    d.eval(z)
}

/// Predictive-recursion settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrConfig {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    /// Weights follow `w_t = (t + 1)^(-decay)` for the t-th observation (t ≥ 1).
    pub decay: f64,
    pub passes: usize,
    pub init_pi1: f64,
}

impl Default for PrConfig {
    fn default() -> Self {
        PrConfig {
            lo: -10.0,
            hi: 10.0,
            step: 0.01,
            decay: 0.67,
            passes: 10,
            init_pi1: 0.1,
        }
    }
}

impl PrConfig {
    fn grid_len(&self) -> Result<usize> {
        if !(self.step > 0.0) || !(self.hi > self.lo) {
            return Err(Error::Domain(format!(
                "bad predictive-recursion grid [{}, {}] step {}",
                self.lo, self.hi, self.step
            )));
        }
        let cells = (self.hi - self.lo) / self.step;
        let rounded = cells.round();
        if (cells - rounded).abs() > 1e-6 {
            return Err(Error::Domain(format!(
                "grid step {} does not divide [{}, {}]",
                self.step, self.lo, self.hi
            )));
        }
        Ok(rounded as usize + 1)
    }
}

/// Output of [`estimate_alternative`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeEstimate {
    pub f1: GridDensity,
    pub pi1: f64,
}

/// Estimates the alternative density and its mixing mass from `z`.
pub fn estimate_alternative(
    z: &[f64],
    null: &NullSpec,
    cfg: &PrConfig,
    seed: u64,
) -> Result<AlternativeEstimate> {
    if z.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "predictive recursion needs at least 10 observations, got {}",
            z.len()
        )));
    }
    null.validate()?;
    if !(cfg.init_pi1 > 0.0 && cfg.init_pi1 < 1.0) || cfg.passes == 0 || !(cfg.decay > 0.5 && cfg.decay <= 1.0) {
        return Err(Error::Domain(format!("invalid predictive-recursion config {cfg:?}")));
    }
    let len = cfg.grid_len()?;
    if let Some(&bad) = z.iter().find(|&&v| !(v >= cfg.lo && v <= cfg.hi)) {
        return Err(Error::Domain(format!(
            "z = {bad} lies outside the grid [{}, {}]",
            cfg.lo, cfg.hi
        )));
    }

    let f0: Vec<f64> = z.iter().map(|&v| null.pdf(v)).collect();
    let kernel = GaussKernel::new(cfg.lo, cfg.step, len, null.scale);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut k = vec![0.0; len];
    let mut mix = vec![0.0; len];
    let mut mix_sum = vec![0.0; len];
    let mut pi_sum = 0.0;

    for _ in 0..cfg.passes {
        order.shuffle(&mut rng);
        mix.fill(1.0 / len as f64);
        let mut pi1 = cfg.init_pi1;
        for (t, &i) in order.iter().enumerate() {
            let w = ((t + 2) as f64).powf(-cfg.decay);
            kernel.fill_row(z[i], &mut k);
            let m1: f64 = mix.iter().zip(&k).map(|(p, kj)| p * kj).sum();
            let m = (1.0 - pi1) * f0[i] + pi1 * m1;
            if !(m > 0.0) {
                continue;
            }
            let next_pi = (1.0 - w) * pi1 + w * pi1 * m1 / m;
            let keep = (1.0 - w) * pi1 / next_pi;
            let gain = w * pi1 / (m * next_pi);
            for (p, kj) in mix.iter_mut().zip(&k) {
                *p *= keep + gain * kj;
            }
            pi1 = next_pi;
        }
        for (s, p) in mix_sum.iter_mut().zip(&mix) {
            *s += p;
        }
        pi_sum += pi1;
    }
    let passes = cfg.passes as f64;
    mix_sum.iter_mut().for_each(|p| *p /= passes);

    // f1 on the same grid: discrete convolution of the mixing masses with
    // the Gaussian kernel, indexed by grid offset.
    let offsets: Vec<f64> = (0..len)
        .map(|o| gauss(o as f64 * cfg.step, 0.0, null.scale))
        .collect();
    let values: Vec<f64> = (0..len)
        .map(|i| {
            mix_sum
                .iter()
                .enumerate()
                .map(|(j, p)| p * offsets[i.abs_diff(j)])
                .sum()
        })
        .collect();
    let f1 = GridDensity::normalized(cfg.lo, cfg.step, values)?;
    Ok(AlternativeEstimate {
        f1,
        pi1: (pi_sum / passes).clamp(0.0, 1.0),
    })
}

/// Evaluates `φσ(z − θj)` over a uniform θ-grid with a multiplicative
/// recurrence instead of one `exp` per grid point.
struct GaussKernel {
    lo: f64,
    step: f64,
    len: usize,
    scale: f64,
    /// `exp(-d²)` with `d = step / scale`.
    decay: f64,
}

impl GaussKernel {
    fn new(lo: f64, step: f64, len: usize, scale: f64) -> Self {
        let d = step / scale;
        GaussKernel {
            lo,
            step,
            len,
            scale,
            decay: (-d * d).exp(),
        }
    }

    fn fill_row(&self, z: f64, out: &mut [f64]) {
        let d = self.step / self.scale;
        let norm = INV_SQRT_2PI / self.scale;
        let start = (((z - self.lo) / self.step).round().max(0.0) as usize).min(self.len - 1);
        let u0 = (z - (self.lo + self.step * start as f64)) / self.scale;
        let v0 = norm * (-0.5 * u0 * u0).exp();
        out[start] = v0;

        // Moving up the grid u decreases by d: ratio exp(u·d − d²/2).
        let mut v = v0;
        let mut r = (u0 * d - 0.5 * d * d).exp();
        for slot in &mut out[start + 1..] {
            v *= r;
            r *= self.decay;
            *slot = v;
        }
        let mut v = v0;
        let mut r = (-u0 * d - 0.5 * d * d).exp();
        for slot in out[..start].iter_mut().rev() {
            v *= r;
            r *= self.decay;
            *slot = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn null_pdf_values() {
        assert!((null_pdf(0.0, 0.0, 1.0).unwrap() - 0.398942).abs() < 1e-6);
        assert!((null_pdf(1.0, 1.0, 2.0).unwrap() - 0.199471).abs() < 1e-6);
        // exp(-1.96²/2)/√(2π) evaluated independently
        let expected = (-1.96f64 * 1.96 / 2.0).exp() / (2.0 * PI).sqrt();
        assert!((null_pdf(1.96, 0.0, 1.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.058441).abs() < 1e-6);
        assert!(matches!(null_pdf(0.0, 0.0, 0.0), Err(Error::Domain(_))));
        assert!(matches!(null_pdf(0.0, 0.0, -1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn null_pdf_unit_mass() {
        for &(loc, scale) in &[(0.0, 1.0), (1.5, 0.3), (-2.0, 4.0)] {
            let lo = loc - 10.0 * scale;
            let n = 200_000;
            let h = 20.0 * scale / n as f64;
            let mut s = 0.0;
            for i in 0..=n {
                let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                s += w * null_pdf(lo + h * i as f64, loc, scale).unwrap();
            }
            assert!((s * h - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn eval_interpolates_and_floors() {
        let h = 1.0 / 1.8;
        let d = GridDensity::new(0.0, h, vec![0.2, 0.4, 0.6, 0.6, 0.2]).unwrap();
        assert_eq!(d.eval(h), 0.4);
        assert!((d.eval(0.5 * h) - 0.3).abs() < 1e-15);
        assert_eq!(d.eval(d.hi() + 1.0), DENSITY_FLOOR);
        assert_eq!(d.eval(-0.1), DENSITY_FLOOR);
        assert_eq!(d.eval(d.hi()), 0.2);
        assert_eq!(eval_density(&d, 2.0 * h), 0.6);
    }

    #[test]
    fn eval_floor_inside_grid() {
        let d = GridDensity::new(0.0, 1.0, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(d.eval(0.0), DENSITY_FLOOR);
    }

    #[test]
    fn grid_density_rejects_bad_mass() {
        assert!(GridDensity::new(0.0, 1.0, vec![1.0, 1.0, 1.0]).is_err());
        assert!(GridDensity::new(0.0, 1.0, vec![0.5, -0.1, 0.5]).is_err());
        assert!(GridDensity::new(0.0, 0.0, vec![0.5, 0.5]).is_err());
    }

    #[test]
    fn kernel_recurrence_matches_direct_evaluation() {
        let cfg = PrConfig::default();
        let len = cfg.grid_len().unwrap();
        assert_eq!(len, 2001);
        for &scale in &[1.0, 0.7, 2.5] {
            let kern = GaussKernel::new(cfg.lo, cfg.step, len, scale);
            let mut row = vec![0.0; len];
            for &z in &[-9.99, -3.217, 0.0, 0.004, 2.5, 7.77, 10.0] {
                kern.fill_row(z, &mut row);
                for (j, &v) in row.iter().enumerate() {
                    let direct = gauss(z, cfg.lo + cfg.step * j as f64, scale);
                    assert!(
                        (v - direct).abs() <= 1e-9 * direct + 1e-300,
                        "z={z} j={j} {v} vs {direct}"
                    );
                }
            }
        }
    }

    fn draws(seed: u64, n: usize, mix: f64, alt_mean: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let null = Normal::new(0.0, 1.0).unwrap();
        let alt = Normal::new(alt_mean, 1.0).unwrap();
        (0..n)
            .map(|_| {
                if rand::Rng::random::<f64>(&mut rng) < mix {
                    alt.sample(&mut rng)
                } else {
                    null.sample(&mut rng)
                }
            })
            .collect()
    }

    #[test]
    fn pure_null_has_small_alternative_mass() {
        let z = draws(11, 5000, 0.0, 0.0);
        let est = estimate_alternative(&z, &NullSpec::default(), &PrConfig::default(), 3).unwrap();
        assert!(est.pi1 < 0.1, "pi1 = {}", est.pi1);
        assert!((est.f1.integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn half_alternative_mode_located() {
        let z = draws(5, 5000, 0.5, 3.0);
        let est = estimate_alternative(&z, &NullSpec::default(), &PrConfig::default(), 9).unwrap();
        let mode = est.f1.argmax();
        assert!((mode - 3.0).abs() <= 0.5, "mode = {mode}");
        assert!((est.pi1 - 0.5).abs() < 0.15, "pi1 = {}", est.pi1);
    }

    #[test]
    fn deterministic_given_seed() {
        let z = draws(1, 300, 0.2, 2.5);
        let cfg = PrConfig { passes: 3, ..PrConfig::default() };
        let a = estimate_alternative(&z, &NullSpec::default(), &cfg, 42).unwrap();
        let b = estimate_alternative(&z, &NullSpec::default(), &cfg, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_observations() {
        let z = vec![0.0; 9];
        assert!(matches!(
            estimate_alternative(&z, &NullSpec::default(), &PrConfig::default(), 0),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn out_of_grid_z_rejected() {
        let mut z = vec![0.0; 20];
        z[3] = 12.0;
        assert!(matches!(
            estimate_alternative(&z, &NullSpec::default(), &PrConfig::default(), 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn csv_round_trip_of_values() {
        let d = GridDensity::new(-1.0, 0.5, vec![0.0, 0.5, 1.0, 0.5, 0.0]).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("grid_point,value\n-1.0,0.0\n-0.5,0.5\n"));
    }

    #[test]
    fn serde_validates() {
        let d = GridDensity::new(-1.0, 0.5, vec![0.0, 0.5, 1.0, 0.5, 0.0]).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        let back: GridDensity = serde_json::from_str(&json).unwrap();
        assert_eq!(back, d);
        let bad = json.replace("1.0,0.5,0.0]", "9.0,0.5,0.0]");
        assert!(serde_json::from_str::<GridDensity>(&bad).is_err());
    }
}
