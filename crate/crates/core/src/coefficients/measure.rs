use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::quadrature::GaussLegendre;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    #[default]
    Negative,
    Positive,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Negative => -1.0,
            Side::Positive => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub mass: f64,
}

/// Absolutely-continuous (or sampler-only) component of the intensity measure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContinuousPart {
    /// `mass / mean * exp(-|u| / mean)` on one half-line.
    Exponential {
        mass: f64,
        mean: f64,
        #[serde(default)]
        side: Side,
    },
    /// Uniform density of total `mass` on `[low, high]`.
    Uniform { mass: f64, low: f64, high: f64 },
    /// `scale * |u|^(-1-alpha)` on `0 < |u| <= radius`, `0 < alpha < 1`:
    /// infinite total mass, finite first absolute moment.
    PowerLaw {
        scale: f64,
        alpha: f64,
        radius: f64,
        #[serde(default)]
        side: Side,
    },
    /// No density: marks resampled from a stored sample, integrals by Monte Carlo.
    Empirical { mass: f64, samples: Vec<f64> },
}

impl ContinuousPart {
    /// Whether the part puts mass on `u >= 0`.
    pub fn charges_nonnegative(&self) -> bool {
        match self {
            ContinuousPart::Exponential { side, .. } | ContinuousPart::PowerLaw { side, .. } => *side == Side::Positive,
            ContinuousPart::Uniform { high, .. } => *high >= 0.0,
            ContinuousPart::Empirical { samples, .. } => samples.iter().any(|&u| u >= 0.0),
        }
    }
}

/// Integral over the mark space with a Monte Carlo standard error (zero when the
/// integral is computed by exact summation or deterministic quadrature).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Integral {
    pub value: f64,
    pub stderr: f64,
}

/// The intensity measure `mu` on the real mark space: atoms plus at most one
/// continuous part, with small marks `|u| < truncation` of infinite-mass parts dropped.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct IntensityMeasure {
    #[serde(default)]
    pub atoms: Vec<Atom>,
    #[serde(default)]
    pub continuous: Option<ContinuousPart>,
    #[serde(default)]
    pub truncation: f64,
}

const EXP_CUTOFF: f64 = 50.0;

impl IntensityMeasure {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn atom(location: f64, mass: f64) -> Self {
        Self {
            atoms: vec![Atom { location, mass }],
            ..Self::default()
        }
    }

    pub fn exponential_claims(rate: f64, mean: f64) -> Self {
        Self {
            continuous: Some(ContinuousPart::Exponential {
                mass: rate,
                mean,
                side: Side::Negative,
            }),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Measure(m.to_string()));
        for a in &self.atoms {
            if !(a.mass.is_finite() && a.mass >= 0.0 && a.location.is_finite()) {
                return bad("atoms need finite location and nonnegative finite mass");
            }
        }
        if !(self.truncation.is_finite() && self.truncation >= 0.0) {
            return bad("truncation must be finite and nonnegative");
        }
        match &self.continuous {
            None => {}
            Some(ContinuousPart::Exponential { mass, mean, .. }) => {
                if !(*mass >= 0.0 && mass.is_finite() && *mean > 0.0 && mean.is_finite()) {
                    return bad("exponential part needs mass >= 0 and mean > 0");
                }
            }
            Some(ContinuousPart::Uniform { mass, low, high }) => {
                if !(*mass >= 0.0 && mass.is_finite() && low < high && low.is_finite() && high.is_finite()) {
                    return bad("uniform part needs mass >= 0 and low < high");
                }
            }
            Some(ContinuousPart::PowerLaw { scale, alpha, radius, .. }) => {
                if !(*scale >= 0.0 && scale.is_finite() && *alpha > 0.0 && *alpha < 1.0 && *radius > 0.0) {
                    return bad("power-law part needs scale >= 0, 0 < alpha < 1, radius > 0");
                }
            }
            Some(ContinuousPart::Empirical { mass, samples }) => {
                if !(*mass >= 0.0 && mass.is_finite()) || samples.is_empty() || samples.iter().any(|s| !s.is_finite()) {
                    return bad("empirical part needs mass >= 0 and a nonempty finite sample");
                }
            }
        }
        Ok(())
    }

    fn continuous_mass(&self) -> Result<f64> {
        Ok(match &self.continuous {
            None => 0.0,
            Some(ContinuousPart::Exponential { mass, .. })
            | Some(ContinuousPart::Uniform { mass, .. })
            | Some(ContinuousPart::Empirical { mass, .. }) => *mass,
            Some(ContinuousPart::PowerLaw { scale, alpha, radius, .. }) => {
                let eta = self.truncation;
                if eta <= 0.0 && *scale > 0.0 {
                    return Err(Error::Measure(
                        "power-law part has infinite mass; set a positive truncation".into(),
                    ));
                }
                if eta >= *radius {
                    0.0
                } else {
                    scale / alpha * (eta.powf(-alpha) - radius.powf(-alpha))
                }
            }
        })
    }

    /// Total mass after truncation; an error when it is not finite.
    pub fn truncated_mass(&self) -> Result<f64> {
        self.validate()?;
        let atoms: f64 = self.atoms.iter().map(|a| a.mass).sum();
        let total = atoms + self.continuous_mass()?;
        if !total.is_finite() {
            return Err(Error::Measure("truncated mass is not finite".into()));
        }
        Ok(total)
    }

    /// `∫_{|u| < eta} |u| mu(du)` over the dropped small marks.
    pub fn dropped_abs_mass(&self) -> f64 {
        match &self.continuous {
            Some(ContinuousPart::PowerLaw { scale, alpha, radius, .. }) => {
                let eta = self.truncation.min(*radius);
                scale * eta.powf(1.0 - alpha) / (1.0 - alpha)
            }
            _ => 0.0,
        }
    }

    /// Stable hash of the measure description.
    pub fn spec_hash(&self) -> String {
        let json = serde_json::to_string(self).expect("measure serializes");
        let digest = Sha256::digest(json.as_bytes());
        hex::encode(&digest[..8])
    }

    /// Draw one mark from the normalized truncated measure.
    pub fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        let total = self.truncated_mass()?;
        if total <= 0.0 {
            return Err(Error::Measure("cannot sample from a zero measure".into()));
        }
        let mut pick = rng.random::<f64>() * total;
        for a in &self.atoms {
            if pick < a.mass {
                return Ok(a.location);
            }
            pick -= a.mass;
        }
        let part = match &self.continuous {
            Some(p) => p,
            // rounding left us past the last atom
            None => return Ok(self.atoms.iter().rev().find(|a| a.mass > 0.0).map(|a| a.location).unwrap_or(0.0)),
        };
        let v: f64 = rng.random();
        Ok(match part {
            ContinuousPart::Exponential { mean, side, .. } => side.sign() * (-mean * (1.0 - v).ln()),
            ContinuousPart::Uniform { low, high, .. } => low + (high - low) * v,
            ContinuousPart::PowerLaw { alpha, radius, side, .. } => {
                let lo = self.truncation.powf(-alpha);
                let hi = radius.powf(-alpha);
                side.sign() * (lo - v * (lo - hi)).powf(-1.0 / alpha)
            }
            ContinuousPart::Empirical { samples, .. } => {
                let i = ((v * samples.len() as f64) as usize).min(samples.len() - 1);
                samples[i]
            }
        })
    }

    /// `∫ phi(u) mu(du)` over the truncated measure: atoms summed exactly,
    /// densities by composite Gauss–Legendre, sampler-only parts by Monte Carlo.
    pub fn integrate<F: Fn(f64) -> f64>(&self, phi: F) -> Result<Integral> {
        self.validate()?;
        let mut value = 0.0;
        for a in &self.atoms {
            if a.mass > 0.0 {
                value += a.mass * phi(a.location);
            }
        }
        let gl = GaussLegendre::new(8);
        let mut stderr = 0.0;
        match &self.continuous {
            None => {}
            Some(ContinuousPart::Exponential { mass, mean, side }) => {
                if *mass > 0.0 {
                    let s = side.sign() * mean;
                    value += mass * gl.integrate(0.0, EXP_CUTOFF, 400, |t| phi(s * t) * (-t).exp());
                }
            }
            Some(ContinuousPart::Uniform { mass, low, high }) => {
                if *mass > 0.0 {
                    value += mass / (high - low) * gl.integrate(*low, *high, 64, &phi);
                }
            }
            Some(ContinuousPart::PowerLaw { scale, alpha, radius, side }) => {
                let eta = self.truncation;
                if eta <= 0.0 && *scale > 0.0 {
                    return Err(Error::Measure(
                        "power-law part has infinite mass; set a positive truncation".into(),
                    ));
                }
                if *scale > 0.0 && eta < *radius {
                    let sg = side.sign();
                    value += scale
                        * gl.integrate(eta.ln(), radius.ln(), 200, |w| {
                            let v = w.exp();
                            phi(sg * v) * v.powf(-alpha)
                        });
                }
            }
            Some(ContinuousPart::Empirical { mass, samples }) => {
                let vals: Vec<f64> = samples.iter().map(|&s| phi(s)).collect();
                let (m, se) = crate::stats::mean_stderr(&vals);
                value += mass * m;
                stderr = mass * se;
            }
        }
        Ok(Integral { value, stderr })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn atoms_integrate_exactly() {
        let m = IntensityMeasure::atom(-1.0, 2.0);
        assert_eq!(m.truncated_mass().unwrap(), 2.0);
        assert_eq!(m.integrate(|u| u).unwrap().value, -2.0);
    }

    #[test]
    fn exponential_moments_by_quadrature() {
        let m = IntensityMeasure::exponential_claims(3.0, 0.5);
        let first = m.integrate(|u| u).unwrap().value;
        let second = m.integrate(|u| u * u).unwrap().value;
        assert!((first + 1.5).abs() < 1e-10);
        assert!((second - 3.0 * 2.0 * 0.25).abs() < 1e-10);
    }

    #[test]
    fn power_law_needs_truncation() {
        let mut m = IntensityMeasure {
            continuous: Some(ContinuousPart::PowerLaw { scale: 1.0, alpha: 0.5, radius: 1.0, side: Side::Negative }),
            ..Default::default()
        };
        assert!(matches!(m.truncated_mass(), Err(Error::Measure(_))));
        m.truncation = 0.01;
        // c/alpha (eta^-a - r^-a) = 2 (10 - 1)
        assert!((m.truncated_mass().unwrap() - 18.0).abs() < 1e-12);
        // c eta^(1-a)/(1-a) = 2 * 0.1
        assert!((m.dropped_abs_mass() - 0.2).abs() < 1e-12);
        // quadrature of the retained mass matches the closed form
        let q = m.integrate(|_| 1.0).unwrap().value;
        assert!((q - 18.0).abs() < 1e-8);
    }

    #[test]
    fn empirical_part_reports_stderr() {
        let m = IntensityMeasure {
            continuous: Some(ContinuousPart::Empirical { mass: 1.0, samples: vec![-1.0, -2.0, -3.0] }),
            ..Default::default()
        };
        let i = m.integrate(|u| u).unwrap();
        assert!((i.value + 2.0).abs() < 1e-12);
        assert!(i.stderr > 0.0);
    }

    #[test]
    fn power_law_samples_stay_in_support() {
        let m = IntensityMeasure {
            continuous: Some(ContinuousPart::PowerLaw { scale: 1.0, alpha: 0.5, radius: 1.0, side: Side::Positive }),
            truncation: 0.05,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let u = m.sample_mark(&mut rng).unwrap();
            assert!((0.05..=1.0).contains(&u));
        }
    }

    #[test]
    fn spec_hash_distinguishes_measures() {
        assert_ne!(IntensityMeasure::atom(-1.0, 1.0).spec_hash(), IntensityMeasure::atom(-1.0, 2.0).spec_hash());
        assert_eq!(IntensityMeasure::zero().spec_hash(), IntensityMeasure::zero().spec_hash());
    }
}
