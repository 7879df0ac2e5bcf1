//! Seeded realizations of the driving noise: a Brownian path on a
//! jump-adapted grid plus the points of the Poisson random measure.

mod dump;
mod rng;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

pub use rng::{derive_seed, substream, Stream};

use crate::coefficients::IntensityMeasure;
use crate::error::{Error, Result};

/// One point of the Poisson random measure: time, mark, and the uniform
/// auxiliary coordinate used for thinning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jump {
    pub time: f64,
    pub mark: f64,
    pub aux: f64,
}

/// A realization of `(B, N)` on `[0, horizon]`.
///
/// `brownian[i]` is `B` at `grid[i]`; increments are differences of stored
/// values, so aggregating fine cells back to coarse ones is exact.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisePath {
    pub horizon: f64,
    pub grid: Vec<f64>,
    pub brownian: Vec<f64>,
    /// Grid indices of the uniform base lattice.
    pub base: Vec<usize>,
    pub jumps: Vec<Jump>,
    /// Grid index of each jump time.
    pub jump_index: Vec<usize>,
    pub seed: u64,
    pub spec_hash: String,
    /// Auxiliaries are uniform on `[0, aux_budget]`; the candidate intensity is
    /// `aux_budget` times the measure.
    pub aux_budget: f64,
    /// `∫_{|u|<eta} |u| mu(du)` of the marks dropped by truncation.
    pub dropped_abs_mass: f64,
    /// `(factor, seed)` of each refinement applied since sampling.
    pub refinements: Vec<(u32, u64)>,
}

/// Sample the noise with unit auxiliary budget.
pub fn sample_noise(measure: &IntensityMeasure, horizon: f64, step: f64, seed: u64) -> Result<NoisePath> {
    sample_noise_with_budget(measure, horizon, step, seed, 1.0)
}

/// Sample the noise with candidate intensity `budget * mu` and auxiliaries
/// uniform on `[0, budget]`.
pub fn sample_noise_with_budget(
    measure: &IntensityMeasure,
    horizon: f64,
    step: f64,
    seed: u64,
    budget: f64,
) -> Result<NoisePath> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Input(format!("horizon must be positive, got {horizon}")));
    }
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Input(format!("step must be positive, got {step}")));
    }
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Input(format!("auxiliary budget must be positive, got {budget}")));
    }
    let mass = measure.truncated_mass()?;

    let cells = ((horizon / step) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    let lattice: Vec<f64> = (0..=cells).map(|i| horizon * i as f64 / cells as f64).collect();
    let mut brng = substream(seed, Stream::Brownian);
    let mut lattice_b = Vec::with_capacity(cells + 1);
    lattice_b.push(0.0);
    for i in 0..cells {
        let z: f64 = StandardNormal.sample(&mut brng);
        lattice_b.push(lattice_b[i] + (lattice[i + 1] - lattice[i]).sqrt() * z);
    }

    let intensity = mass * horizon * budget;
    let count = if intensity > 0.0 {
        let poisson = Poisson::new(intensity).map_err(|e| Error::Measure(e.to_string()))?;
        poisson.sample(&mut substream(seed, Stream::JumpCount)) as usize
    } else {
        0
    };
    let mut trng = substream(seed, Stream::JumpTimes);
    let mut times: Vec<f64> = (0..count).map(|_| horizon * (1.0 - trng.random::<f64>())).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let mut mrng = substream(seed, Stream::Marks);
    let mut arng = substream(seed, Stream::Auxiliaries);
    let mut jumps = Vec::with_capacity(times.len());
    for &time in &times {
        jumps.push(Jump {
            time,
            mark: measure.sample_mark(&mut mrng)?,
            aux: budget * arng.random::<f64>(),
        });
    }

    // merge jump times into the lattice, bridging B at each inserted time
    let mut bridge = substream(seed, Stream::Bridge);
    let mut grid = Vec::with_capacity(lattice.len() + jumps.len());
    let mut brownian = Vec::with_capacity(lattice.len() + jumps.len());
    let mut base = Vec::with_capacity(lattice.len());
    let mut jump_index = Vec::with_capacity(jumps.len());
    grid.push(lattice[0]);
    brownian.push(0.0);
    base.push(0);
    let mut next = 0usize;
    for i in 0..cells {
        let (t_right, b_right) = (lattice[i + 1], lattice_b[i + 1]);
        while next < jumps.len() && jumps[next].time < t_right {
            let s = jumps[next].time;
            let (t_left, b_left) = (grid[grid.len() - 1], brownian[brownian.len() - 1]);
            let value = bridge_value(&mut bridge, t_left, b_left, s, t_right, b_right);
            grid.push(s);
            brownian.push(value);
            jump_index.push(grid.len() - 1);
            next += 1;
        }
        grid.push(t_right);
        brownian.push(b_right);
        base.push(grid.len() - 1);
        while next < jumps.len() && jumps[next].time == t_right {
            jump_index.push(grid.len() - 1);
            next += 1;
        }
    }

    Ok(NoisePath {
        horizon,
        grid,
        brownian,
        base,
        jumps,
        jump_index,
        seed,
        spec_hash: measure.spec_hash(),
        aux_budget: budget,
        dropped_abs_mass: measure.dropped_abs_mass(),
        refinements: Vec::new(),
    })
}

/// Draw `B_s` given `B_a` at `a` and `B_b` at `b`, `a < s < b`.
fn bridge_value<R: Rng + ?Sized>(rng: &mut R, a: f64, ba: f64, s: f64, b: f64, bb: f64) -> f64 {
    let width = b - a;
    let mean = ba + (s - a) / width * (bb - ba);
    let var = (s - a) * (b - s) / width;
    let z: f64 = StandardNormal.sample(rng);
    mean + var.max(0.0).sqrt() * z
}

impl NoisePath {
    pub fn cells(&self) -> usize {
        self.grid.len() - 1
    }

    /// Brownian increment over cell `i`.
    #[inline]
    pub fn increment(&self, i: usize) -> f64 {
        self.brownian[i + 1] - self.brownian[i]
    }

    pub fn increments(&self) -> Vec<f64> {
        (0..self.cells()).map(|i| self.increment(i)).collect()
    }

    /// Increments aggregated over the cells of the uniform base lattice.
    pub fn base_increments(&self) -> Vec<f64> {
        self.base.windows(2).map(|w| self.brownian[w[1]] - self.brownian[w[0]]).collect()
    }

    /// Split every cell into `factor` equal sub-cells, filling in Brownian
    /// bridge values drawn from `seed2`. Existing grid values are kept, so
    /// coarse increments are reproduced exactly. Jumps are unchanged.
    pub fn refine(&self, factor: u32, seed2: u64) -> Result<NoisePath> {
        if factor < 2 {
            return Err(Error::Input(format!("refinement factor must be at least 2, got {factor}")));
        }
        let k = factor as usize;
        let mut rng = substream(seed2, Stream::Refine);
        let mut grid = Vec::with_capacity(self.cells() * k + 1);
        let mut brownian = Vec::with_capacity(self.cells() * k + 1);
        grid.push(self.grid[0]);
        brownian.push(self.brownian[0]);
        for i in 0..self.cells() {
            let (t0, t1) = (self.grid[i], self.grid[i + 1]);
            let b1 = self.brownian[i + 1];
            let width = t1 - t0;
            for j in 1..k {
                let s = t0 + width * j as f64 / k as f64;
                let (ta, ba) = (grid[grid.len() - 1], brownian[brownian.len() - 1]);
                let v = bridge_value(&mut rng, ta, ba, s, t1, b1);
                grid.push(s);
                brownian.push(v);
            }
            grid.push(t1);
            brownian.push(b1);
        }
        let mut refinements = self.refinements.clone();
        refinements.push((factor, seed2));
        Ok(NoisePath {
            grid,
            brownian,
            base: self.base.iter().map(|&i| i * k).collect(),
            jump_index: self.jump_index.iter().map(|&i| i * k).collect(),
            refinements,
            ..self.clone()
        })
    }

    /// Restriction to `(t0, t1]`, re-anchored so the slice starts at time 0
    /// with `B = 0`. Both ends must be grid points; a jump at `t1` belongs to
    /// this slice, a jump at `t0` does not.
    pub fn replay_slice(&self, t0: f64, t1: f64) -> Result<NoisePath> {
        if !(0.0 <= t0 && t0 < t1 && t1 <= self.horizon) {
            return Err(Error::Input(format!(
                "slice ({t0}, {t1}] is not inside (0, {}]",
                self.horizon
            )));
        }
        let find = |t: f64| {
            self.grid
                .binary_search_by(|g| g.total_cmp(&t))
                .map_err(|_| Error::Input(format!("slice endpoint {t} is not a grid point")))
        };
        let (i0, i1) = (find(t0)?, find(t1)?);
        let b0 = self.brownian[i0];
        let grid = self.grid[i0..=i1].iter().map(|t| t - t0).collect();
        let brownian = self.brownian[i0..=i1].iter().map(|b| b - b0).collect();
        let base = self.base.iter().filter(|&&i| i >= i0 && i <= i1).map(|&i| i - i0).collect();
        let mut jumps = Vec::new();
        let mut jump_index = Vec::new();
        for (j, &ix) in self.jumps.iter().zip(&self.jump_index) {
            if ix > i0 && ix <= i1 {
                jumps.push(Jump { time: j.time - t0, ..*j });
                jump_index.push(ix - i0);
            }
        }
        Ok(NoisePath {
            horizon: t1 - t0,
            grid,
            brownian,
            base,
            jumps,
            jump_index,
            ..self.clone()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{ContinuousPart, Side};

    fn claims() -> IntensityMeasure {
        IntensityMeasure::atom(-1.0, 2.0)
    }

    #[test]
    fn zero_measure_gives_uniform_grid() {
        let n = sample_noise(&IntensityMeasure::zero(), 1.0, 0.1, 3).unwrap();
        assert!(n.jumps.is_empty());
        assert_eq!(n.grid.len(), 11);
        assert_eq!(n.base, (0..11).collect::<Vec<_>>());
        assert_eq!(n.grid[10], 1.0);
    }

    #[test]
    fn same_seed_same_path() {
        let a = sample_noise(&claims(), 1.0, 0.01, 11).unwrap();
        let b = sample_noise(&claims(), 1.0, 0.01, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_noise(&claims(), 1.0, 0.01, 12).unwrap();
        assert_ne!(a.brownian, c.brownian);
    }

    #[test]
    fn jumps_are_grid_points_in_order() {
        for seed in 0..50 {
            let n = sample_noise(&claims(), 2.0, 0.05, seed).unwrap();
            assert!(n.grid.windows(2).all(|w| w[0] < w[1]));
            assert!(n.jumps.windows(2).all(|w| w[0].time < w[1].time));
            for (j, &ix) in n.jumps.iter().zip(&n.jump_index) {
                assert!(j.time > 0.0 && j.time <= 2.0);
                assert_eq!(n.grid[ix], j.time);
                assert_eq!(j.mark, -1.0);
                assert!((0.0..=1.0).contains(&j.aux));
            }
        }
    }

    #[test]
    fn brownian_independent_of_jump_sampler() {
        let other = IntensityMeasure {
            continuous: Some(ContinuousPart::Exponential { mass: 5.0, mean: 0.3, side: Side::Negative }),
            ..Default::default()
        };
        let a = sample_noise(&IntensityMeasure::zero(), 1.0, 0.01, 99).unwrap();
        let b = sample_noise(&other, 1.0, 0.01, 99).unwrap();
        assert!(!b.jumps.is_empty());
        assert_eq!(a.base_increments(), b.base_increments());
    }

    #[test]
    fn mean_jump_count_matches_poisson_mean() {
        let m = claims();
        let n = 10_000;
        let counts: Vec<f64> = (0..n as u64)
            .map(|s| sample_noise(&m, 1.0, 0.5, s).unwrap().jumps.len() as f64)
            .collect();
        let (mean, se) = crate::stats::mean_stderr(&counts);
        // lambda T = 2
        assert!((mean - 2.0).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn budget_scales_intensity_and_aux_range() {
        let m = claims();
        let counts: Vec<f64> = (0..4000u64)
            .map(|s| sample_noise_with_budget(&m, 1.0, 0.5, s, 4.0).unwrap().jumps.len() as f64)
            .collect();
        let (mean, se) = crate::stats::mean_stderr(&counts);
        assert!((mean - 8.0).abs() < 3.0 * se);
        let n = sample_noise_with_budget(&m, 1.0, 0.5, 5, 4.0).unwrap();
        assert!(n.jumps.iter().all(|j| (0.0..=4.0).contains(&j.aux)));
    }

    #[test]
    fn infinite_mass_is_a_measure_error() {
        let m = IntensityMeasure {
            continuous: Some(ContinuousPart::PowerLaw { scale: 1.0, alpha: 0.5, radius: 1.0, side: Side::Negative }),
            ..Default::default()
        };
        assert!(matches!(sample_noise(&m, 1.0, 0.1, 0), Err(Error::Measure(_))));
        let n = sample_noise(&IntensityMeasure { truncation: 0.01, ..m }, 1.0, 0.1, 0).unwrap();
        assert!(n.dropped_abs_mass > 0.0);
    }

    #[test]
    fn bad_inputs_rejected() {
        let m = IntensityMeasure::zero();
        assert!(sample_noise(&m, 0.0, 0.1, 0).is_err());
        assert!(sample_noise(&m, 1.0, -0.1, 0).is_err());
    }

    #[test]
    fn refine_preserves_coarse_values_and_jumps() {
        let n = sample_noise(&claims(), 1.0, 0.01, 5).unwrap();
        let f = n.refine(4, 77).unwrap();
        assert_eq!(f.grid.len(), 4 * n.cells() + 1);
        for i in 0..n.grid.len() {
            assert_eq!(f.grid[4 * i], n.grid[i]);
            assert_eq!(f.brownian[4 * i], n.brownian[i]);
        }
        let agg: Vec<f64> = (0..n.cells()).map(|i| f.brownian[4 * i + 4] - f.brownian[4 * i]).collect();
        assert_eq!(agg, n.increments());
        assert_eq!(f.jumps, n.jumps);
        for &ix in &f.jump_index {
            assert!(f.jumps.iter().any(|j| j.time == f.grid[ix]));
        }
        assert_eq!(f.base_increments(), n.base_increments());
        assert!(n.refine(1, 0).is_err());
    }

    #[test]
    fn refined_sub_increment_variance() {
        // midpoint split of a cell of width w: each half has conditional
        // variance w/4 around half the increment and unconditional variance w/2
        let w = 0.1;
        let m = IntensityMeasure::zero();
        let first_halves: Vec<f64> = (0..10_000u64)
            .map(|s| {
                let n = sample_noise(&m, w, w, s).unwrap().refine(2, s + 1_000_000).unwrap();
                n.increment(0)
            })
            .collect();
        let (mean, _) = crate::stats::mean_stderr(&first_halves);
        let sq: Vec<f64> = first_halves.iter().map(|x| (x - mean) * (x - mean)).collect();
        let (var, var_se) = crate::stats::mean_stderr(&sq);
        assert!((var - w / 2.0).abs() < 3.0 * var_se, "var {var} se {var_se}");
    }

    #[test]
    fn slices_cover_and_reanchor() {
        let n = sample_noise(&claims(), 1.0, 0.01, 21).unwrap();
        assert_eq!(n.replay_slice(0.0, 1.0).unwrap(), n);
        let cut = n.grid[37];
        let left = n.replay_slice(0.0, cut).unwrap();
        let right = n.replay_slice(cut, 1.0).unwrap();
        let mut joined = left.increments();
        joined.extend(right.increments());
        for (a, b) in joined.iter().zip(n.increments()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(left.jumps.len() + right.jumps.len(), n.jumps.len());
        assert_eq!(right.grid[0], 0.0);
        assert_eq!(right.brownian[0], 0.0);
        assert!(n.replay_slice(0.5, 0.2).is_err());
        assert!(n.replay_slice(0.0, 0.123_456_7).is_err());
    }

    #[test]
    fn slicing_at_a_jump_keeps_it_in_the_slice_that_ends_there() {
        let (n, s) = (0..)
            .map(|seed| sample_noise(&claims(), 1.0, 0.01, seed).unwrap())
            .find_map(|n| n.jumps.first().map(|j| j.time).map(|s| (n.clone(), s)))
            .unwrap();
        let left = n.replay_slice(0.0, s).unwrap();
        let right = n.replay_slice(s, 1.0).unwrap();
        assert_eq!(left.jumps.last().unwrap().time, s);
        assert!(right.jumps.iter().all(|j| j.time > 0.0));
    }
}
