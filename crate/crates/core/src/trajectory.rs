//! Quantum-jump (Monte-Carlo wave-function) unraveling of the master
//! equation.
//!
//! Between jumps the unnormalized state follows `ψ̇ = −i H_eff ψ` with
//! fixed-step RK4. A jump happens when `‖ψ‖²` falls to a uniform random
//! threshold; the crossing time is located by bisection inside the step and
//! the channel is drawn with weights `‖L_k ψ‖²`.

use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{FockSpace, SparseComplexMatrix};
use crate::model::{self, ModelParams};
use crate::steady_state::{G2Result, DEFAULT_G2_FLOOR};

type C64 = Complex64;

/// Largest accepted integration step.
pub const MAX_DT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    space: FockSpace,
    amplitudes: Vec<C64>,
}

impl PureState {
    pub fn new(space: &FockSpace, amplitudes: Vec<C64>) -> Result<Self> {
        if amplitudes.len() != space.total_dim() {
            return Err(Error::DimensionMismatch(format!(
                "{} amplitudes for a space of dimension {}",
                amplitudes.len(),
                space.total_dim()
            )));
        }
        let mut s = Self {
            space: space.clone(),
            amplitudes,
        };
        let n = s.norm_sqr();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidParameter(
                "state has zero or non-finite norm".into(),
            ));
        }
        s.normalize();
        Ok(s)
    }

    pub fn vacuum(space: &FockSpace) -> Self {
        Self::fock(space, &vec![0; space.num_modes()]).expect("vacuum is always in the space")
    }

    pub fn fock(space: &FockSpace, occupations: &[usize]) -> Result<Self> {
        let mut amplitudes = vec![C64::new(0.0, 0.0); space.total_dim()];
        amplitudes[space.index_of(occupations)?] = C64::new(1.0, 0.0);
        Ok(Self {
            space: space.clone(),
            amplitudes,
        })
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.amplitudes)
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        self.amplitudes.iter_mut().for_each(|z| *z /= n);
    }

    /// `⟨ψ|O|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn expectation(&self, op: &SparseComplexMatrix) -> Result<C64> {
        if op.nrows() != self.dim() || op.ncols() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}x{}, state has dimension {}",
                op.nrows(),
                op.ncols(),
                self.dim()
            )));
        }
        Ok(op.quadratic_form(&self.amplitudes) / self.norm_sqr())
    }
}

fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    /// Index into [`model::decay_channels`].
    pub channel: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `photon_numbers[k][m]`: conditional `⟨n_m⟩` at `times[k]`.
    pub photon_numbers: Vec<Vec<f64>>,
    pub jumps: Vec<Jump>,
    pub seed: u64,
    pub dt: f64,
}

impl TrajectoryRecord {
    /// Columns `t, n_a1, n_a2[, n_b1, n_b2]`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let modes = self.photon_numbers.first().map_or(0, |r| r.len());
        let mut header = vec!["t".to_string()];
        header.extend(
            model::Mode::ALL[..modes]
                .iter()
                .map(|m| format!("n_{}", m.name())),
        );
        w.write_record(&header)?;
        for (t, row) in self.times.iter().zip(&self.photon_numbers) {
            let mut rec = vec![format!("{t:.16e}")];
            rec.extend(row.iter().map(|v| format!("{v:.16e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    pub dt: f64,
    /// Sampling interval, rounded to a whole number of steps.
    pub sample_dt: f64,
    /// Bisection steps used to locate a jump inside one step.
    pub bisections: usize,
}

impl Default for TrajectoryOptions {
    fn default() -> Self {
        Self {
            dt: MAX_DT,
            sample_dt: 0.1,
            bisections: 30,
        }
    }
}

impl TrajectoryOptions {
    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!(
                "dt must lie in (0, {MAX_DT}], got {}",
                self.dt
            )));
        }
        if !(self.sample_dt >= self.dt) {
            return Err(Error::InvalidParameter(
                "sample_dt must be at least dt".into(),
            ));
        }
        Ok(())
    }

    fn sample_every(&self) -> usize {
        (self.sample_dt / self.dt).round().max(1.0) as usize
    }
}

/// Precomputed operators for one parameter set.
pub struct Unraveling {
    space: FockSpace,
    /// `−i H_eff`.
    generator: SparseComplexMatrix,
    jumps: Vec<SparseComplexMatrix>,
    numbers: Vec<Vec<f64>>,
}

impl Unraveling {
    pub fn new(params: &ModelParams, space: &FockSpace) -> Result<Self> {
        params.validate()?;
        let h = model::hamiltonian(params, space)?;
        let jumps = model::jump_operators(params, space)?;
        let h_eff = model::effective_hamiltonian(&h, &jumps)?;
        let numbers = (0..space.num_modes())
            .map(|m| {
                (0..space.total_dim())
                    .map(|i| space.occupation(i, m) as f64)
                    .collect()
            })
            .collect();
        Ok(Self {
            space: space.clone(),
            generator: h_eff.scale(C64::new(0.0, -1.0)),
            jumps,
            numbers,
        })
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    fn rk4(&self, psi: &[C64], h: f64, out: &mut [C64], work: &mut [Vec<C64>; 2]) {
        let n = psi.len();
        let g = &self.generator;
        let [k, tmp] = work;
        // out accumulates ψ + h/6 (k1 + 2k2 + 2k3 + k4).
        g.mul_vec_into(psi, k);
        for i in 0..n {
            out[i] = psi[i] + k[i] * (h / 6.0);
            tmp[i] = psi[i] + k[i] * (0.5 * h);
        }
        g.mul_vec_into(tmp, k);
        for i in 0..n {
            out[i] += k[i] * (h / 3.0);
            tmp[i] = psi[i] + k[i] * (0.5 * h);
        }
        g.mul_vec_into(tmp, k);
        for i in 0..n {
            out[i] += k[i] * (h / 3.0);
            tmp[i] = psi[i] + k[i] * h;
        }
        g.mul_vec_into(tmp, k);
        for i in 0..n {
            out[i] += k[i] * (h / 6.0);
        }
    }

    fn mode_numbers(&self, psi: &[C64], norm: f64) -> Vec<f64> {
        self.numbers
            .iter()
            .map(|n| {
                n.iter()
                    .zip(psi)
                    .map(|(k, z)| k * z.norm_sqr())
                    .sum::<f64>()
                    / norm
            })
            .collect()
    }

    /// Run one trajectory from `psi0`, calling `on_sample(t, ψ, ‖ψ‖²)` at
    /// `t = 0` and every `sample_dt`.
    pub fn run<F>(
        &self,
        psi0: &PureState,
        t_final: f64,
        opts: &TrajectoryOptions,
        seed: u64,
        mut on_sample: F,
    ) -> Result<Vec<Jump>>
    where
        F: FnMut(f64, &[C64], f64),
    {
        opts.validate()?;
        if !(t_final > 0.0) || !t_final.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "t_final must be positive, got {t_final}"
            )));
        }
        if psi0.dim() != self.space.total_dim() {
            return Err(Error::DimensionMismatch(
                "initial state does not match the space".into(),
            ));
        }
        let n = psi0.dim();
        let zero = C64::new(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut psi: Vec<C64> = psi0.amplitudes().to_vec();
        let p0 = norm_sqr(&psi);
        psi.iter_mut().for_each(|z| *z /= p0.sqrt());
        let mut threshold: f64 = 1.0 - rng.random::<f64>();
        let mut next = vec![zero; n];
        let mut trial = vec![zero; n];
        let mut work = [vec![zero; n], vec![zero; n]];
        let mut jumps = Vec::new();
        let n_steps = (t_final / opts.dt).round().max(1.0) as usize;
        let every = opts.sample_every();
        on_sample(0.0, &psi, 1.0);
        let mut norm = 1.0;

        for step in 0..n_steps {
            let t0 = step as f64 * opts.dt;
            let mut elapsed = 0.0;
            loop {
                let h = opts.dt - elapsed;
                self.rk4(&psi, h, &mut next, &mut work);
                let new_norm = norm_sqr(&next);
                if !new_norm.is_finite() || new_norm > norm * (1.0 + 1e-10) {
                    return Err(Error::TrajectoryBlowUp {
                        time: t0 + elapsed,
                        reason: format!(
                            "norm grew from {norm:e} to {new_norm:e}; dt is too large for this truncation"
                        ),
                    });
                }
                if new_norm > threshold {
                    std::mem::swap(&mut psi, &mut next);
                    norm = new_norm;
                    break;
                }
                // The threshold is crossed inside this sub-step.
                let (mut lo, mut hi) = (0.0, h);
                for _ in 0..opts.bisections {
                    let mid = 0.5 * (lo + hi);
                    self.rk4(&psi, mid, &mut trial, &mut work);
                    if norm_sqr(&trial) > threshold {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let tau = hi;
                self.rk4(&psi, tau, &mut trial, &mut work);
                let channel = self.pick_channel(&trial, &mut rng, &mut next);
                let jumped = self.jumps[channel].mul_vec(&trial)?;
                let jn = norm_sqr(&jumped).sqrt();
                if !(jn > 0.0) {
                    return Err(Error::TrajectoryBlowUp {
                        time: t0 + elapsed + tau,
                        reason: "jump annihilated the state".into(),
                    });
                }
                psi.iter_mut().zip(&jumped).for_each(|(p, j)| *p = j / jn);
                norm = 1.0;
                threshold = 1.0 - rng.random::<f64>();
                elapsed += tau;
                jumps.push(Jump {
                    time: t0 + elapsed,
                    channel,
                });
                if opts.dt - elapsed <= 1e-15 * opts.dt {
                    break;
                }
            }
            let done = step + 1;
            if done % every == 0 || done == n_steps {
                on_sample(done as f64 * opts.dt, &psi, norm);
            }
        }
        Ok(jumps)
    }

    fn pick_channel(&self, psi: &[C64], rng: &mut ChaCha8Rng, scratch: &mut [C64]) -> usize {
        let weights: Vec<f64> = self
            .jumps
            .iter()
            .map(|l| {
                l.mul_vec_into(psi, scratch);
                norm_sqr(scratch)
            })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        for (k, w) in weights.iter().enumerate() {
            if u < *w {
                return k;
            }
            u -= w;
        }
        weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
    }

    /// Trajectory record with photon numbers of every mode.
    pub fn record(
        &self,
        psi0: &PureState,
        t_final: f64,
        opts: &TrajectoryOptions,
        seed: u64,
    ) -> Result<TrajectoryRecord> {
        let mut times = Vec::new();
        let mut photon_numbers = Vec::new();
        let jumps = self.run(psi0, t_final, opts, seed, |t, psi, norm| {
            times.push(t);
            photon_numbers.push(self.mode_numbers(psi, norm));
        })?;
        Ok(TrajectoryRecord {
            times,
            photon_numbers,
            jumps,
            seed,
            dt: opts.dt,
        })
    }
}

/// One trajectory from the vacuum, sampled every 0.1.
pub fn evolve_trajectory(
    params: &ModelParams,
    space: &FockSpace,
    t_final: f64,
    dt: f64,
    seed: u64,
) -> Result<TrajectoryRecord> {
    let opts = TrajectoryOptions {
        dt,
        ..TrajectoryOptions::default()
    };
    Unraveling::new(params, space)?.record(&PureState::vacuum(space), t_final, &opts, seed)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateOptions {
    pub t_transient: f64,
    pub t_average: f64,
    pub n_trajectories: usize,
    pub seed: u64,
    pub trajectory: TrajectoryOptions,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            t_transient: 20.0,
            t_average: 100.0,
            n_trajectories: 200,
            seed: 0,
            trajectory: TrajectoryOptions::default(),
        }
    }
}

/// Averaging windows shorter than this (in units of `1/κ₁`) trigger a warning.
pub const MIN_RECOMMENDED_AVERAGE: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
}

/// Per-trajectory time averages of several real observables.
#[derive(Debug, Clone)]
pub struct TrajectoryAverages {
    /// `values[k][j]`: average of observable `j` along trajectory `k`.
    pub values: Vec<Vec<f64>>,
    pub jumps: usize,
}

impl TrajectoryAverages {
    pub fn estimate(&self, j: usize) -> Estimate {
        let n = self.values.len() as f64;
        let mean = self.values.iter().map(|v| v[j]).sum::<f64>() / n;
        if self.values.len() < 2 {
            return Estimate {
                mean,
                std_error: f64::INFINITY,
            };
        }
        let var = self
            .values
            .iter()
            .map(|v| (v[j] - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0);
        Estimate {
            mean,
            std_error: (var / n).sqrt(),
        }
    }

    fn covariance(&self, i: usize, j: usize) -> f64 {
        let n = self.values.len() as f64;
        let mi = self.estimate(i).mean;
        let mj = self.estimate(j).mean;
        self.values
            .iter()
            .map(|v| (v[i] - mi) * (v[j] - mj))
            .sum::<f64>()
            / (n - 1.0)
    }

    /// g₂ from observables `(numerator, n_A, n_B)` with a delta-method error.
    pub fn g2(&self, numerator: usize, a: usize, b: usize) -> Result<G2Result> {
        let (nm, am, bm) = (
            self.estimate(numerator).mean,
            self.estimate(a).mean,
            self.estimate(b).mean,
        );
        let mut g = G2Result::from_moments(nm, am, bm, DEFAULT_G2_FLOOR)?;
        if self.values.len() >= 2 {
            let n = self.values.len() as f64;
            let idx = [numerator, a, b];
            // Gradient of N/(AB) in (N, A, B).
            let grad = [1.0 / (am * bm), -nm / (am * am * bm), -nm / (am * bm * bm)];
            let mut var = 0.0;
            for (p, &ip) in idx.iter().enumerate() {
                for (q, &iq) in idx.iter().enumerate() {
                    var += grad[p] * grad[q] * self.covariance(ip, iq);
                }
            }
            g.statistical_error = (var.max(0.0) / n).sqrt();
        }
        Ok(g)
    }
}

/// Run `n_trajectories` trajectories from the vacuum (sub-seeds
/// `seed ^ k`) and time-average every operator after `t_transient`.
pub fn trajectory_averages(
    params: &ModelParams,
    space: &FockSpace,
    ops: &[SparseComplexMatrix],
    opts: &EstimateOptions,
) -> Result<TrajectoryAverages> {
    if opts.n_trajectories == 0 {
        return Err(Error::InvalidParameter(
            "need at least one trajectory".into(),
        ));
    }
    if !(opts.t_transient >= 0.0) || !(opts.t_average > 0.0) {
        return Err(Error::InvalidParameter(
            "need t_transient ≥ 0 and t_average > 0".into(),
        ));
    }
    if opts.t_average < MIN_RECOMMENDED_AVERAGE {
        log::warn!(
            "averaging window {} is shorter than the recommended {MIN_RECOMMENDED_AVERAGE}",
            opts.t_average
        );
    }
    let dim = space.total_dim();
    for op in ops {
        if op.nrows() != dim || op.ncols() != dim {
            return Err(Error::DimensionMismatch(
                "observable does not match the space".into(),
            ));
        }
    }
    let unraveling = Unraveling::new(params, space)?;
    let psi0 = PureState::vacuum(space);
    let t_final = opts.t_transient + opts.t_average;
    let cutoff = opts.t_transient - 1e-9 * opts.trajectory.dt;
    let per_trajectory: Vec<Result<(Vec<f64>, usize)>> = (0..opts.n_trajectories)
        .into_par_iter()
        .map(|k| {
            let mut sums = vec![0.0; ops.len()];
            let mut count = 0usize;
            let jumps = unraveling.run(
                &psi0,
                t_final,
                &opts.trajectory,
                opts.seed ^ k as u64,
                |t, psi, norm| {
                    if t >= cutoff {
                        for (s, op) in sums.iter_mut().zip(ops) {
                            *s += op.quadratic_form(psi).re / norm;
                        }
                        count += 1;
                    }
                },
            )?;
            Ok((
                sums.into_iter().map(|s| s / count as f64).collect(),
                jumps.len(),
            ))
        })
        .collect();
    let mut values = Vec::with_capacity(opts.n_trajectories);
    let mut jumps = 0;
    for r in per_trajectory {
        let (v, j) = r?;
        values.push(v);
        jumps += j;
    }
    Ok(TrajectoryAverages { values, jumps })
}

/// Time-and-ensemble averages of `ops` with standard errors over
/// trajectories.
pub fn estimate_observables(
    params: &ModelParams,
    space: &FockSpace,
    ops: &[SparseComplexMatrix],
    opts: &EstimateOptions,
) -> Result<Vec<Estimate>> {
    let avg = trajectory_averages(params, space, ops, opts)?;
    Ok((0..ops.len()).map(|j| avg.estimate(j)).collect())
}

/// Trajectory estimate of photon numbers and equal-time g₂ for mode pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryCorrelations {
    pub photon_numbers: Vec<Estimate>,
    pub g2: Vec<G2Result>,
    pub jumps: usize,
}

pub fn estimate_correlations(
    params: &ModelParams,
    space: &FockSpace,
    pairs: &[(usize, usize)],
    opts: &EstimateOptions,
) -> Result<TrajectoryCorrelations> {
    let modes = space.num_modes();
    let mut ops = (0..modes)
        .map(|m| space.number(m))
        .collect::<Result<Vec<_>>>()?;
    for &(a, b) in pairs {
        if a >= modes || b >= modes {
            return Err(Error::InvalidMode {
                mode: a.max(b),
                modes,
            });
        }
        let na = space.number(a)?;
        let op = if a == b {
            // a†a†aa = n(n − 1)
            na.matmul(&na)?.sub(&na)?
        } else {
            na.matmul(&space.number(b)?)?
        };
        ops.push(op);
    }
    let avg = trajectory_averages(params, space, &ops, opts)?;
    let g2 = pairs
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| avg.g2(modes + k, a, b))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrajectoryCorrelations {
        photon_numbers: (0..modes).map(|m| avg.estimate(m)).collect(),
        g2,
        jumps: avg.jumps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vacuum_without_drive_never_jumps() {
        let space = FockSpace::new(&[3, 2]).unwrap();
        let p = ModelParams {
            chi: 1.0,
            ..ModelParams::default()
        };
        let rec = evolve_trajectory(&p, &space, 10.0, 0.01, 5).unwrap();
        assert!(rec.jumps.is_empty());
        assert_eq!(rec.times.len(), 101);
        assert!(rec
            .photon_numbers
            .iter()
            .all(|r| r.iter().all(|&n| n == 0.0)));
    }

    #[test]
    fn single_photon_waiting_time_is_exponential() {
        let space = FockSpace::new(&[2, 2]).unwrap();
        let p = ModelParams::default();
        let u = Unraveling::new(&p, &space).unwrap();
        let psi0 = PureState::fock(&space, &[1, 0]).unwrap();
        let opts = TrajectoryOptions::default();
        let n = 10_000;
        let times: Vec<f64> = (0..n)
            .map(|k| {
                let jumps = u.run(&psi0, 12.0, &opts, k as u64, |_, _, _| {}).unwrap();
                jumps.first().map_or(f64::INFINITY, |j| j.time)
            })
            .collect();
        // Rate 2κ₁ = 2: mean 1/2, P(T > t) = exp(−2t).
        let finite: Vec<f64> = times.iter().copied().filter(|t| t.is_finite()).collect();
        assert!(finite.len() >= n - 2);
        let mean = finite.iter().sum::<f64>() / finite.len() as f64;
        assert!(
            (mean - 0.5).abs() < 3.0 * 0.5 / (n as f64).sqrt(),
            "mean {mean}"
        );
        for t in [0.1, 0.5, 1.0, 2.0] {
            let frac = times.iter().filter(|&&x| x > t).count() as f64 / n as f64;
            let want = (-2.0 * t).exp();
            let sigma = (want * (1.0 - want) / n as f64).sqrt();
            assert!(
                (frac - want).abs() < 3.0 * sigma + 1e-3,
                "t = {t}: {frac} vs {want}"
            );
        }
    }

    #[test]
    fn identical_seeds_reproduce_jumps() {
        let space = FockSpace::new(&[4, 3]).unwrap();
        let p = ModelParams::identical(0.5, 1.0, 0.5, 0.5, 1.0);
        let a = evolve_trajectory(&p, &space, 20.0, 0.01, 42).unwrap();
        let b = evolve_trajectory(&p, &space, 20.0, 0.01, 42).unwrap();
        let c = evolve_trajectory(&p, &space, 20.0, 0.01, 43).unwrap();
        assert_eq!(a.jumps, b.jumps);
        assert_eq!(a.photon_numbers, b.photon_numbers);
        assert!(!a.jumps.is_empty());
        assert_ne!(a.jumps, c.jumps);
        assert!(a.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn identity_observable_is_exact() {
        let space = FockSpace::new(&[3, 2]).unwrap();
        let p = ModelParams::identical(0.5, 1.0, 0.5, 0.5, 1.0);
        let opts = EstimateOptions {
            t_transient: 1.0,
            t_average: 5.0,
            n_trajectories: 8,
            ..EstimateOptions::default()
        };
        let est = estimate_observables(&p, &space, &[space.identity()], &opts).unwrap();
        assert!((est[0].mean - 1.0).abs() < 1e-12);
        assert!(est[0].std_error < 1e-12);
    }

    #[test]
    fn oversized_step_is_rejected() {
        let space = FockSpace::new(&[3, 2]).unwrap();
        assert!(evolve_trajectory(&ModelParams::default(), &space, 1.0, 0.05, 0).is_err());
        assert!(evolve_trajectory(&ModelParams::default(), &space, -1.0, 0.01, 0).is_err());
    }

    #[test]
    fn csv_columns_follow_modes() {
        let space = FockSpace::new(&[2, 2, 2, 2]).unwrap();
        let p = ModelParams {
            drive: 0.3,
            ..ModelParams::default()
        };
        let rec = evolve_trajectory(&p, &space, 0.2, 0.01, 1).unwrap();
        let mut buf = Vec::new();
        rec.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,n_a1,n_a2,n_b1,n_b2\n"));
        assert_eq!(text.lines().count(), 4);
    }
}
