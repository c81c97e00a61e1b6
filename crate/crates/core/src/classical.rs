//! Coherent-state (mean-field) equations of motion for one or two cavities.
//!
//! ```text
//! α̇₁ = E − (κ₁ + iΔ₁ᵃ)α₁ + χα₁*α₂ − iV₁β₁
//! α̇₂ =   − (κ₂ + iΔ₂)α₂ − (χ/2)α₁² − iV₂β₂
//! ```
//! and the same for `β` with `Δ₁ᵇ` and the roles of `α`, `β` swapped. A
//! single cavity drops `β` and the hopping terms.
//!
//! Newton and linear-stability work use the real embedding
//! `(Re α₁, Im α₁, Re α₂, Im α₂, Re β₁, …)`, since the flow is not
//! complex-analytic.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mode, ModelParams};
use crate::steady_state::G2Result;

type C64 = Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassicalState {
    pub alpha1: C64,
    pub alpha2: C64,
    pub beta1: C64,
    pub beta2: C64,
}

impl ClassicalState {
    pub fn new(alpha1: C64, alpha2: C64, beta1: C64, beta2: C64) -> Self {
        Self {
            alpha1,
            alpha2,
            beta1,
            beta2,
        }
    }

    pub fn amplitude(&self, mode: Mode) -> C64 {
        match mode {
            Mode::A1 => self.alpha1,
            Mode::A2 => self.alpha2,
            Mode::B1 => self.beta1,
            Mode::B2 => self.beta2,
        }
    }

    pub fn photon_number(&self, mode: Mode) -> f64 {
        self.amplitude(mode).norm_sqr()
    }

    pub fn to_real(&self) -> [f64; 8] {
        [
            self.alpha1.re,
            self.alpha1.im,
            self.alpha2.re,
            self.alpha2.im,
            self.beta1.re,
            self.beta1.im,
            self.beta2.re,
            self.beta2.im,
        ]
    }

    pub fn from_real(x: &[f64; 8]) -> Self {
        Self {
            alpha1: C64::new(x[0], x[1]),
            alpha2: C64::new(x[2], x[3]),
            beta1: C64::new(x[4], x[5]),
            beta2: C64::new(x[6], x[7]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.to_real().iter().all(|v| v.is_finite())
    }

    /// Exchange the two cavities.
    pub fn swapped(&self) -> Self {
        Self::new(self.beta1, self.beta2, self.alpha1, self.alpha2)
    }
}

/// `α̃ = cα`, `β̃ = cβ`.
pub fn scale_state(state: &ClassicalState, c: f64) -> Result<ClassicalState> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale factor must be finite and nonzero, got {c}"
        )));
    }
    Ok(ClassicalState::new(
        state.alpha1 * c,
        state.alpha2 * c,
        state.beta1 * c,
        state.beta2 * c,
    ))
}

/// `Ẽ = cE`, `χ̃ = χ/c`; everything else unchanged.
pub fn scale_params(params: &ModelParams, c: f64) -> Result<ModelParams> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale factor must be finite and nonzero, got {c}"
        )));
    }
    Ok(ModelParams {
        drive: params.drive * c,
        chi: params.chi / c,
        ..*params
    })
}

/// Right-hand side of the amplitude equations. With `two_cavity == false`
/// the β derivatives are zero and the hopping terms are dropped.
pub fn rhs(params: &ModelParams, state: &ClassicalState, two_cavity: bool) -> ClassicalState {
    let p = params;
    let i = C64::i();
    let e = C64::new(p.drive, 0.0);
    let (a1, a2, b1, b2) = (state.alpha1, state.alpha2, state.beta1, state.beta2);
    let (v1, v2) = if two_cavity { (p.v1, p.v2) } else { (0.0, 0.0) };
    let da1 = e - C64::new(p.kappa1, p.delta1a) * a1 + p.chi * a1.conj() * a2 - i * v1 * b1;
    let da2 = -C64::new(p.kappa2, p.delta2) * a2 - 0.5 * p.chi * a1 * a1 - i * v2 * b2;
    if !two_cavity {
        return ClassicalState::new(da1, da2, C64::default(), C64::default());
    }
    let db1 = e - C64::new(p.kappa1, p.delta1b) * b1 + p.chi * b1.conj() * b2 - i * v1 * a1;
    let db2 = -C64::new(p.kappa2, p.delta2) * b2 - 0.5 * p.chi * b1 * b1 - i * v2 * a2;
    ClassicalState::new(da1, da2, db1, db2)
}

fn rhs_real(params: &ModelParams, x: &[f64; 8], two_cavity: bool) -> [f64; 8] {
    rhs(params, &ClassicalState::from_real(x), two_cavity).to_real()
}

fn active_len(two_cavity: bool) -> usize {
    if two_cavity {
        8
    } else {
        4
    }
}

/// Analytic Jacobian of the real-embedded flow, 4×4 for one cavity and
/// 8×8 for two.
pub fn jacobian(params: &ModelParams, state: &ClassicalState, two_cavity: bool) -> DMatrix<f64> {
    let p = params;
    let i = C64::i();
    let n = active_len(two_cavity);
    let mut jac = DMatrix::<f64>::zeros(n, n);
    // df_r = A dz_c + B dz_c*
    let mut put = |r: usize, c: usize, a: C64, b: C64| {
        let s = a + b;
        let d = a - b;
        jac[(2 * r, 2 * c)] += s.re;
        jac[(2 * r, 2 * c + 1)] += -d.im;
        jac[(2 * r + 1, 2 * c)] += s.im;
        jac[(2 * r + 1, 2 * c + 1)] += d.re;
    };
    let zero = C64::default();
    let cavities: &[(usize, usize, f64, C64, C64)] = &[
        (0, 1, p.delta1a, state.alpha1, state.alpha2),
        (2, 3, p.delta1b, state.beta1, state.beta2),
    ];
    for &(f, s, d1, z1, z2) in &cavities[..if two_cavity { 2 } else { 1 }] {
        put(f, f, -C64::new(p.kappa1, d1), p.chi * z2);
        put(f, s, p.chi * z1.conj(), zero);
        put(s, s, -C64::new(p.kappa2, p.delta2), zero);
        put(s, f, -p.chi * z1, zero);
    }
    if two_cavity {
        put(0, 2, -i * p.v1, zero);
        put(2, 0, -i * p.v1, zero);
        put(1, 3, -i * p.v2, zero);
        put(3, 1, -i * p.v2, zero);
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
        }
    }
}

impl Tolerances {
    /// Absolute tolerance multiplied by `c`, e.g. for a state scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            rtol: self.rtol,
            atol: self.atol * c.abs(),
        }
    }

    pub fn halved(&self) -> Self {
        Self {
            rtol: 0.5 * self.rtol,
            atol: 0.5 * self.atol,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub tolerances: Tolerances,
    /// Spacing of the stored samples.
    pub sample_dt: f64,
    pub max_steps: usize,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        Self {
            tolerances: Tolerances::default(),
            sample_dt: 0.01,
            max_steps: 50_000_000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassicalPath {
    pub two_cavity: bool,
    pub times: Vec<f64>,
    pub states: Vec<ClassicalState>,
    pub steps: usize,
    pub rejected_steps: usize,
}

impl ClassicalPath {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> Option<&ClassicalState> {
        self.states.last()
    }

    pub fn photon_numbers(&self, mode: Mode) -> Vec<f64> {
        self.states.iter().map(|s| s.photon_number(mode)).collect()
    }

    fn modes(&self) -> &'static [Mode] {
        if self.two_cavity {
            &Mode::ALL
        } else {
            &Mode::ALL[..2]
        }
    }

    /// `t, re_a1, im_a1, …, n_a1, …` with full round-trip precision.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        for m in self.modes() {
            header.push(format!("re_{}", m.name()));
            header.push(format!("im_{}", m.name()));
        }
        for m in self.modes() {
            header.push(format!("n_{}", m.name()));
        }
        w.write_record(&header)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let mut row = vec![format!("{t:.16e}")];
            for &m in self.modes() {
                let z = s.amplitude(m);
                row.push(format!("{:.16e}", z.re));
                row.push(format!("{:.16e}", z.im));
            }
            for &m in self.modes() {
                row.push(format!("{:.16e}", s.photon_number(m)));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

type V8 = [f64; 8];

fn lin(y: &V8, terms: &[(f64, &V8)], h: f64) -> V8 {
    let mut out = *y;
    for (c, k) in terms {
        if *c != 0.0 {
            for j in 0..8 {
                out[j] += h * c * k[j];
            }
        }
    }
    out
}

/// Adaptive Dormand–Prince 5(4) integration from `t = 0` with samples every
/// `opts.sample_dt` (dense output) up to and including `t_final`.
pub fn integrate(
    params: &ModelParams,
    two_cavity: bool,
    state0: &ClassicalState,
    t_final: f64,
    opts: &IntegrateOptions,
) -> Result<ClassicalPath> {
    if !(t_final > 0.0) || !t_final.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "t_final must be positive, got {t_final}"
        )));
    }
    if !(opts.sample_dt > 0.0) {
        return Err(Error::InvalidParameter("sample_dt must be positive".into()));
    }
    if !state0.is_finite() {
        return Err(Error::InvalidParameter(
            "initial state is not finite".into(),
        ));
    }
    let n = active_len(two_cavity);
    let tol = opts.tolerances;
    let f = |x: &V8| rhs_real(params, x, two_cavity);
    let n_samples = (t_final / opts.sample_dt + 1e-9).floor() as usize;
    let mut sample_times: Vec<f64> = (0..=n_samples).map(|k| k as f64 * opts.sample_dt).collect();
    if t_final - sample_times[n_samples] > 1e-9 * opts.sample_dt {
        sample_times.push(t_final);
    }

    let mut y = state0.to_real();
    let mut k1 = f(&y);
    let mut t = 0.0;
    let mut times = Vec::with_capacity(sample_times.len());
    let mut states = Vec::with_capacity(sample_times.len());
    times.push(0.0);
    states.push(*state0);
    let mut next_sample = 1;

    let err_norm = |e: &V8, y0: &V8, y1: &V8| {
        let mut s = 0.0;
        for j in 0..n {
            let sc = tol.atol + tol.rtol * y0[j].abs().max(y1[j].abs());
            s += (e[j] / sc).powi(2);
        }
        (s / n as f64).sqrt()
    };

    // Initial step from the usual two-evaluation heuristic.
    let mut h = {
        let d0 = err_norm(&y, &[0.0; 8], &y);
        let d1 = err_norm(&k1, &[0.0; 8], &y);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        };
        let y1 = lin(&y, &[(1.0, &k1)], h0);
        let k2 = f(&y1);
        let diff: V8 = std::array::from_fn(|j| k2[j] - k1[j]);
        let d2 = err_norm(&diff, &[0.0; 8], &y) / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(0.2)
        };
        (100.0 * h0).min(h1).min(t_final)
    };

    let mut steps = 0;
    let mut rejected = 0;
    let mut last_rejected = false;
    while t < t_final {
        if steps + rejected >= opts.max_steps {
            return Err(Error::IntegrationFailure {
                time: t,
                reason: format!("exceeded {} steps", opts.max_steps),
            });
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(Error::IntegrationFailure {
                time: t,
                reason: format!(
                    "step size underflow (h = {h:e}); the solution is likely diverging"
                ),
            });
        }
        let h_step = h.min(t_final - t);
        let k2 = f(&lin(&y, &[(A21, &k1)], h_step));
        let k3 = f(&lin(&y, &[(A31, &k1), (A32, &k2)], h_step));
        let k4 = f(&lin(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h_step));
        let k5 = f(&lin(
            &y,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
            h_step,
        ));
        let k6 = f(&lin(
            &y,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            h_step,
        ));
        let y_new = lin(
            &y,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            h_step,
        );
        let k7 = f(&y_new);
        let err: V8 = std::array::from_fn(|j| {
            h_step * (E1 * k1[j] + E3 * k3[j] + E4 * k4[j] + E5 * k5[j] + E6 * k6[j] + E7 * k7[j])
        });
        let en = err_norm(&err, &y, &y_new);
        if !en.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            rejected += 1;
            h = 0.2 * h_step;
            last_rejected = true;
            continue;
        }
        if en <= 1.0 {
            let t_new = if h_step == t_final - t {
                t_final
            } else {
                t + h_step
            };
            // Dense output coefficients.
            while next_sample < sample_times.len() && sample_times[next_sample] <= t_new {
                let ts = sample_times[next_sample];
                let theta = (ts - t) / h_step;
                let th1 = 1.0 - theta;
                let ys: V8 = std::array::from_fn(|j| {
                    let dy = y_new[j] - y[j];
                    let bspl = h_step * k1[j] - dy;
                    let r4 = dy - h_step * k7[j] - bspl;
                    let r5 = h_step
                        * (D1 * k1[j]
                            + D3 * k3[j]
                            + D4 * k4[j]
                            + D5 * k5[j]
                            + D6 * k6[j]
                            + D7 * k7[j]);
                    y[j] + theta * (dy + th1 * (bspl + theta * (r4 + th1 * r5)))
                });
                times.push(ts);
                states.push(ClassicalState::from_real(&ys));
                next_sample += 1;
            }
            y = y_new;
            k1 = k7;
            t = t_new;
            steps += 1;
            let mut fac = 0.9 * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = h_step * fac;
            last_rejected = false;
        } else {
            rejected += 1;
            h = h_step * (0.9 * en.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
    // Guarantee the final state is the integrator's endpoint exactly.
    if let Some(last) = states.last_mut() {
        if *times.last().unwrap() == t_final {
            *last = ClassicalState::from_real(&y);
        }
    }
    Ok(ClassicalPath {
        two_cavity,
        times,
        states,
        steps,
        rejected_steps: rejected,
    })
}

/// Additive complex white noise `σ dW` on every amplitude equation, with
/// `E|dW|² = dt`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseOptions {
    pub sigma: f64,
    pub dt: f64,
    pub sample_dt: f64,
    pub seed: u64,
}

/// Stochastic Heun integration of the noisy amplitude equations.
pub fn integrate_noisy(
    params: &ModelParams,
    two_cavity: bool,
    state0: &ClassicalState,
    t_final: f64,
    opts: &NoiseOptions,
) -> Result<ClassicalPath> {
    if !(t_final > 0.0) || !(opts.dt > 0.0) || !(opts.sample_dt >= opts.dt) || !(opts.sigma >= 0.0)
    {
        return Err(Error::InvalidParameter(
            "need t_final > 0, dt > 0, sample_dt ≥ dt and σ ≥ 0".into(),
        ));
    }
    let n = active_len(two_cavity);
    let f = |x: &V8| rhs_real(params, x, two_cavity);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n_steps = (t_final / opts.dt).round() as usize;
    let every = (opts.sample_dt / opts.dt).round().max(1.0) as usize;
    let amp = opts.sigma * (0.5 * opts.dt).sqrt();
    let mut y = state0.to_real();
    let mut times = vec![0.0];
    let mut states = vec![*state0];
    for step in 1..=n_steps {
        let mut dw = [0.0; 8];
        for v in dw.iter_mut().take(n) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *v = amp * z;
        }
        let k1 = f(&y);
        let pred: V8 = std::array::from_fn(|j| y[j] + opts.dt * k1[j] + dw[j]);
        let k2 = f(&pred);
        y = std::array::from_fn(|j| y[j] + 0.5 * opts.dt * (k1[j] + k2[j]) + dw[j]);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::IntegrationFailure {
                time: step as f64 * opts.dt,
                reason: "noisy path diverged".into(),
            });
        }
        if step % every == 0 || step == n_steps {
            times.push(step as f64 * opts.dt);
            states.push(ClassicalState::from_real(&y));
        }
    }
    Ok(ClassicalPath {
        two_cavity,
        times,
        states,
        steps: n_steps,
        rejected_steps: 0,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Target `max |rhs|`.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            max_iterations: 100,
        }
    }
}

fn residual_inf(params: &ModelParams, x: &V8, two_cavity: bool) -> f64 {
    rhs_real(params, x, two_cavity)
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Damped Newton iteration on the real-embedded `rhs = 0`.
pub fn find_fixed_point(
    params: &ModelParams,
    two_cavity: bool,
    guess: &ClassicalState,
) -> Result<ClassicalState> {
    find_fixed_point_with(params, two_cavity, guess, &NewtonOptions::default())
}

pub fn find_fixed_point_with(
    params: &ModelParams,
    two_cavity: bool,
    guess: &ClassicalState,
    opts: &NewtonOptions,
) -> Result<ClassicalState> {
    if !guess.is_finite() {
        return Err(Error::InvalidParameter(
            "fixed-point guess is not finite".into(),
        ));
    }
    let n = active_len(two_cavity);
    let mut x = guess.to_real();
    if !two_cavity {
        x[4..].iter_mut().for_each(|v| *v = 0.0);
    }
    let mut res = residual_inf(params, &x, two_cavity);
    for _ in 0..opts.max_iterations {
        if res <= opts.tolerance {
            return Ok(ClassicalState::from_real(&x));
        }
        let jac = jacobian(params, &ClassicalState::from_real(&x), two_cavity);
        let fx = rhs_real(params, &x, two_cavity);
        let b = DVector::from_iterator(n, fx[..n].iter().map(|v| -v));
        let dx = jac.lu().solve(&b).ok_or(Error::NewtonFailure {
            iterations: 0,
            residual: res,
        })?;
        let mut lambda = 1.0;
        loop {
            let mut trial = x;
            for j in 0..n {
                trial[j] += lambda * dx[j];
            }
            let r = residual_inf(params, &trial, two_cavity);
            if r < res || lambda < 1e-4 {
                x = trial;
                res = r;
                break;
            }
            lambda *= 0.5;
        }
    }
    if res <= opts.tolerance {
        return Ok(ClassicalState::from_real(&x));
    }
    Err(Error::NewtonFailure {
        iterations: opts.max_iterations,
        residual: res,
    })
}

/// Eigenvalue of the Jacobian with the largest real part (ties broken by
/// the larger imaginary part).
pub fn leading_eigenvalue(params: &ModelParams, state: &ClassicalState, two_cavity: bool) -> C64 {
    jacobian(params, state, two_cavity)
        .complex_eigenvalues()
        .iter()
        .copied()
        .max_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)))
        .unwrap_or_default()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopfOptions {
    /// Absolute tolerance on `E_c`.
    pub tolerance: f64,
    /// Drive step of the fixed-point continuation.
    pub continuation_step: f64,
    pub newton: NewtonOptions,
}

impl Default for HopfOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            continuation_step: 0.05,
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HopfResult {
    pub critical_drive: f64,
    pub fixed_point: ClassicalState,
    /// Leading Jacobian eigenvalue at `E_c`; its imaginary part is the
    /// frequency of the nascent limit cycle.
    pub eigenvalue: C64,
    pub bisections: usize,
}

/// Follow the fixed-point branch from the vacuum at `E = 0` up to `drive`,
/// starting from `from` (a known fixed point at `from_drive`) if given.
fn continue_branch(
    params: &ModelParams,
    two_cavity: bool,
    from: Option<(f64, ClassicalState)>,
    drive: f64,
    opts: &HopfOptions,
) -> Result<ClassicalState> {
    let (mut e, mut x) = from.unwrap_or((0.0, ClassicalState::default()));
    let steps = ((drive - e).abs() / opts.continuation_step).ceil().max(1.0) as usize;
    let de = (drive - e) / steps as f64;
    let mut prev = x;
    for k in 1..=steps {
        let target = if k == steps { drive } else { e + de };
        // Linear predictor from the last two branch points.
        let guess = if k > 1 {
            ClassicalState::from_real(&std::array::from_fn(|j| {
                2.0 * x.to_real()[j] - prev.to_real()[j]
            }))
        } else {
            x
        };
        let p = ModelParams {
            drive: target,
            ..*params
        };
        let next = find_fixed_point_with(&p, two_cavity, &guess, &opts.newton)
            .or_else(|_| find_fixed_point_with(&p, two_cavity, &x, &opts.newton))?;
        prev = x;
        x = next;
        e = target;
    }
    Ok(x)
}

/// Drive at which the fixed point continued from the vacuum loses
/// stability, by bisection on the leading real part inside `bracket`.
pub fn hopf_threshold(
    params: &ModelParams,
    two_cavity: bool,
    bracket: (f64, f64),
    opts: &HopfOptions,
) -> Result<HopfResult> {
    let (lo, hi) = bracket;
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidBracket(format!(
            "need 0 ≤ lo < hi, got [{lo}, {hi}]"
        )));
    }
    let at = |e: f64, fp: ClassicalState| {
        let p = ModelParams {
            drive: e,
            ..*params
        };
        leading_eigenvalue(&p, &fp, two_cavity)
    };
    let mut x_lo = continue_branch(params, two_cavity, None, lo, opts)?;
    let x_hi = continue_branch(params, two_cavity, Some((lo, x_lo)), hi, opts)?;
    let mut f_lo = at(lo, x_lo).re;
    let mut f_hi = at(hi, x_hi).re;
    if !(f_lo < 0.0 && f_hi > 0.0) {
        return Err(Error::InvalidBracket(format!(
            "leading real part is {f_lo:e} at E = {lo} and {f_hi:e} at E = {hi}; \
             need stable below and unstable above"
        )));
    }
    let (mut a, mut b) = (lo, hi);
    let mut bisections = 0;
    while b - a > opts.tolerance {
        let mid = 0.5 * (a + b);
        let x_mid = continue_branch(params, two_cavity, Some((a, x_lo)), mid, opts)?;
        let f_mid = at(mid, x_mid).re;
        if f_mid < 0.0 {
            a = mid;
            x_lo = x_mid;
            f_lo = f_mid;
        } else {
            b = mid;
            f_hi = f_mid;
        }
        bisections += 1;
    }
    // Secant refinement inside the final bracket.
    let ec = (a - f_lo * (b - a) / (f_hi - f_lo)).clamp(a, b);
    let fp = continue_branch(params, two_cavity, Some((a, x_lo)), ec, opts)?;
    let ev = at(ec, fp);
    Ok(HopfResult {
        critical_drive: ec,
        fixed_point: fp,
        eigenvalue: C64::new(ev.re, ev.im.abs()),
        bisections,
    })
}

/// Transient cutoff used when none is given: 80% of the path or 500,
/// whichever is smaller.
pub fn default_transient(t_final: f64) -> f64 {
    (0.8 * t_final).min(500.0)
}

/// Times at which `x` crosses `level` upward, linearly interpolated.
fn upward_crossings(times: &[f64], x: &[f64], level: f64) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..x.len() {
        let (a, b) = (x[k - 1] - level, x[k] - level);
        if a < 0.0 && b >= 0.0 {
            let s = a / (a - b);
            out.push(times[k - 1] + s * (times[k] - times[k - 1]));
        }
    }
    out
}

/// Trapezoid integral of the piecewise-linear interpolant of `y` over
/// `[t0, t1]`.
fn integrate_window(times: &[f64], y: &[f64], t0: f64, t1: f64) -> f64 {
    let mut total = 0.0;
    for k in 1..times.len() {
        let (ta, tb) = (times[k - 1], times[k]);
        let lo = ta.max(t0);
        let hi = tb.min(t1);
        if hi <= lo {
            continue;
        }
        let interp = |t: f64| y[k - 1] + (y[k] - y[k - 1]) * (t - ta) / (tb - ta);
        total += 0.5 * (hi - lo) * (interp(lo) + interp(hi));
    }
    total
}

/// Averaging window chosen for a classical g₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AveragingWindow {
    pub start: f64,
    pub end: f64,
    /// Whole oscillation periods inside the window (0 for a plain tail).
    pub periods: usize,
}

/// Window after `t_transient`: whole periods of `|α_A|²` when it oscillates,
/// else the full tail.
pub fn averaging_window(
    path: &ClassicalPath,
    t_transient: f64,
    mode: Mode,
) -> Result<AveragingWindow> {
    let start_idx = path.times.partition_point(|&t| t < t_transient);
    if path.len() < start_idx + 2 {
        return Err(Error::InvalidParameter(format!(
            "path ends before the transient cutoff {t_transient}"
        )));
    }
    let times = &path.times[start_idx..];
    let x: Vec<f64> = path.states[start_idx..]
        .iter()
        .map(|s| s.photon_number(mode))
        .collect();
    let tail = AveragingWindow {
        start: times[0],
        end: *times.last().unwrap(),
        periods: 0,
    };
    let mean = integrate_window(times, &x, tail.start, tail.end) / (tail.end - tail.start);
    let (min, max) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if max - min <= 1e-9 * mean.abs().max(1e-300) {
        return Ok(tail);
    }
    let crossings = upward_crossings(times, &x, mean);
    if crossings.len() < 3 {
        return Ok(tail);
    }
    Ok(AveragingWindow {
        start: crossings[0],
        end: *crossings.last().unwrap(),
        periods: crossings.len() - 1,
    })
}

/// `⟨|A|²|B|²⟩_t / (⟨|A|²⟩_t ⟨|B|²⟩_t)` over the window of
/// [`averaging_window`] for mode `A`.
pub fn classical_g2(
    path: &ClassicalPath,
    t_transient: f64,
    pair: (Mode, Mode),
) -> Result<G2Result> {
    for m in [pair.0, pair.1] {
        if !path.two_cavity && matches!(m, Mode::B1 | Mode::B2) {
            return Err(Error::InvalidMode {
                mode: m.index(),
                modes: 2,
            });
        }
    }
    let w = averaging_window(path, t_transient, pair.0)?;
    if w.periods > 0 && w.periods < 20 {
        log::warn!("classical g2 averaged over only {} periods", w.periods);
    }
    let a = path.photon_numbers(pair.0);
    let b = path.photon_numbers(pair.1);
    let ab: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
    let len = w.end - w.start;
    let mean = |y: &[f64]| integrate_window(&path.times, y, w.start, w.end) / len;
    G2Result::from_moments(
        mean(&ab),
        mean(&a),
        mean(&b),
        crate::steady_state::DEFAULT_G2_FLOOR,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyncClass {
    InPhase,
    AntiPhase,
    Unlocked,
}

impl SyncClass {
    pub fn name(self) -> &'static str {
        match self {
            SyncClass::InPhase => "in_phase",
            SyncClass::AntiPhase => "anti_phase",
            SyncClass::Unlocked => "unlocked",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyncReport {
    pub class: SyncClass,
    /// Dominant angular frequencies of `|α₁|²` and `|β₁|²`.
    pub frequency_a: f64,
    pub frequency_b: f64,
    /// Frequency resolution of the tail DFT.
    pub resolution: f64,
    pub g2: f64,
}

/// Dead band around `g₂ = 1` inside which a locked pair is inconclusive.
pub const SYNC_DEAD_BAND: f64 = 0.01;

/// Peak DFT bin (excluding DC) of a Hann-windowed, mean-removed signal.
fn dominant_bin(x: &[f64]) -> usize {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<C64> = x
        .iter()
        .enumerate()
        .map(|(k, v)| {
            let w = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos();
            C64::new((v - mean) * w, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    (1..n / 2)
        .max_by(|&a, &b| buf[a].norm_sqr().total_cmp(&buf[b].norm_sqr()))
        .unwrap_or(0)
}

/// In-phase / anti-phase / unlocked classification of a two-cavity path.
pub fn classify_synchronization(path: &ClassicalPath, t_transient: f64) -> Result<SyncReport> {
    if !path.two_cavity {
        return Err(Error::InvalidParameter(
            "synchronization needs a two-cavity path".into(),
        ));
    }
    let start = path.times.partition_point(|&t| t < t_transient);
    let times = &path.times[start..];
    if times.len() < 16 {
        return Err(Error::Inconclusive("tail too short for a spectrum".into()));
    }
    let span = times[times.len() - 1] - times[0];
    let dt = span / (times.len() - 1) as f64;
    if times
        .windows(2)
        .any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt)
    {
        return Err(Error::InvalidParameter(
            "synchronization needs uniform sampling".into(),
        ));
    }
    let a: Vec<f64> = path.states[start..]
        .iter()
        .map(|s| s.photon_number(Mode::A1))
        .collect();
    let b: Vec<f64> = path.states[start..]
        .iter()
        .map(|s| s.photon_number(Mode::B1))
        .collect();
    let flat = |x: &[f64]| {
        let (lo, hi) = x
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                (l.min(v), h.max(v))
            });
        hi - lo <= 1e-6 * hi.abs().max(1e-12)
    };
    if flat(&a) || flat(&b) {
        return Err(Error::Inconclusive(
            "no oscillation in the tail (fixed point)".into(),
        ));
    }
    let n = a.len();
    let resolution = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    let (ka, kb) = (dominant_bin(&a), dominant_bin(&b));
    let g2 = classical_g2(path, t_transient, (Mode::A1, Mode::B1))?.value;
    let class = if ka.abs_diff(kb) >= 2 {
        SyncClass::Unlocked
    } else if g2 > 1.0 + SYNC_DEAD_BAND {
        SyncClass::InPhase
    } else if g2 < 1.0 - SYNC_DEAD_BAND {
        SyncClass::AntiPhase
    } else {
        return Err(Error::Inconclusive(format!(
            "frequencies lock but g2 = {g2:.6} lies inside the ±{SYNC_DEAD_BAND} dead band"
        )));
    };
    Ok(SyncReport {
        class,
        frequency_a: ka as f64 * resolution,
        frequency_b: kb as f64 * resolution,
        resolution,
        g2,
    })
}

/// Start for limit-cycle runs: the fixed point with `α₁` nudged by `1e-3`.
pub fn perturbed_fixed_point(params: &ModelParams, two_cavity: bool) -> Result<ClassicalState> {
    let fp = continue_branch(
        params,
        two_cavity,
        None,
        params.drive,
        &HopfOptions::default(),
    )?;
    Ok(ClassicalState {
        alpha1: fp.alpha1 + 1e-3,
        ..fp
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn one_cavity(drive: f64) -> ModelParams {
        ModelParams::identical(drive, 0.8, 0.5, 0.5, 1.0)
    }

    #[test]
    fn drive_only_at_origin() {
        let p = ModelParams {
            drive: 1.0,
            chi: 0.8,
            ..ModelParams::default()
        };
        let d = rhs(&p, &ClassicalState::default(), true);
        assert_eq!(
            d,
            ClassicalState::new(c(1.0, 0.0), c(0.0, 0.0), c(1.0, 0.0), c(0.0, 0.0))
        );
    }

    #[test]
    fn linear_fixed_point_is_stationary() {
        let p = ModelParams {
            drive: 1.3,
            delta1a: 0.7,
            ..ModelParams::default()
        };
        let a = c(1.3, 0.0) / c(1.0, 0.7);
        let d = rhs(
            &p,
            &ClassicalState::new(a, c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)),
            false,
        );
        assert!(d.alpha1.norm() < 1e-15 && d.alpha2.norm() == 0.0);
        let fp = find_fixed_point(&p, false, &ClassicalState::default()).unwrap();
        assert!((fp.alpha1 - a).norm() < 1e-12);
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let p = ModelParams {
            drive: 2.0,
            chi: 0.9,
            kappa2: 0.5,
            delta1a: 0.4,
            delta1b: -0.3,
            delta2: 1.1,
            v1: 0.2,
            v2: 0.15,
            ..ModelParams::default()
        };
        let s = ClassicalState::new(c(0.7, -0.2), c(-0.4, 0.9), c(1.1, 0.3), c(0.2, -0.6));
        for two in [false, true] {
            let n = active_len(two);
            let jac = jacobian(&p, &s, two);
            let x = s.to_real();
            let h = 1e-6;
            for j in 0..n {
                let mut xp = x;
                let mut xm = x;
                xp[j] += h;
                xm[j] -= h;
                let fp = rhs_real(&p, &xp, two);
                let fm = rhs_real(&p, &xm, two);
                for i in 0..n {
                    let fd = (fp[i] - fm[i]) / (2.0 * h);
                    assert!(
                        (fd - jac[(i, j)]).abs() < 1e-6 * (1.0 + fd.abs()),
                        "({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn linear_jacobian_spectrum() {
        let p = ModelParams {
            drive: 1.0,
            kappa2: 0.5,
            delta1a: 0.5,
            delta2: 1.0,
            ..ModelParams::default()
        };
        let mut ev: Vec<C64> = jacobian(&p, &ClassicalState::default(), false)
            .complex_eigenvalues()
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        let want = [c(-1.0, -0.5), c(-1.0, 0.5), c(-0.5, -1.0), c(-0.5, 1.0)];
        let mut want = want.to_vec();
        want.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        for (a, b) in ev.iter().zip(&want) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn integrator_matches_linear_solution() {
        let p = ModelParams {
            drive: 1.0,
            delta1a: 0.5,
            ..ModelParams::default()
        };
        let path = integrate(
            &p,
            false,
            &ClassicalState::default(),
            5.0,
            &IntegrateOptions::default(),
        )
        .unwrap();
        let z = c(1.0, 0.5);
        for (t, s) in path.times.iter().zip(&path.states) {
            let exact = (1.0 - (-z * t).exp()) / z;
            assert!((s.alpha1 - exact).norm() < 1e-8, "t = {t}");
        }
        assert_eq!(path.times.len(), 501);
        assert!(path.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn rhs_agrees_with_short_time_flow() {
        let p = one_cavity(3.0);
        let s = ClassicalState::new(c(0.3, 0.1), c(-0.2, 0.4), C64::default(), C64::default());
        let dt = 1e-4;
        let opts = IntegrateOptions {
            sample_dt: dt,
            ..IntegrateOptions::default()
        };
        let path = integrate(&p, false, &s, dt, &opts).unwrap();
        let d = rhs(&p, &s, false);
        let fd = (path.last().unwrap().alpha1 - s.alpha1) / dt;
        assert!((fd - d.alpha1).norm() < 10.0 * dt);
    }

    #[test]
    fn stable_run_has_unit_g2() {
        let p = one_cavity(1.0);
        let path = integrate(
            &p,
            false,
            &ClassicalState::default(),
            200.0,
            &IntegrateOptions::default(),
        )
        .unwrap();
        let g = classical_g2(&path, 150.0, (Mode::A1, Mode::A2)).unwrap();
        assert!((g.value - 1.0).abs() < 1e-6);
    }

    #[test]
    fn g2_of_constant_path_is_one() {
        let s = ClassicalState::new(c(0.3, 0.2), c(0.5, -1.0), c(0.0, 0.0), c(0.0, 0.0));
        let path = ClassicalPath {
            two_cavity: false,
            times: (0..100).map(|k| k as f64 * 0.1).collect(),
            states: vec![s; 100],
            steps: 0,
            rejected_steps: 0,
        };
        let g = classical_g2(&path, 1.0, (Mode::A1, Mode::A2)).unwrap();
        assert!((g.value - 1.0).abs() < 1e-14);
    }

    #[test]
    fn g2_of_antiphase_cosines() {
        let w = 1.7;
        let times: Vec<f64> = (0..20_000).map(|k| k as f64 * 0.005).collect();
        let states = times
            .iter()
            .map(|&t| {
                let x = (1.0 + (w * t).cos()).sqrt();
                let y = (1.0 - (w * t).cos()).sqrt();
                ClassicalState::new(c(x, 0.0), c(y, 0.0), C64::default(), C64::default())
            })
            .collect();
        let path = ClassicalPath {
            two_cavity: false,
            times,
            states,
            steps: 0,
            rejected_steps: 0,
        };
        let g = classical_g2(&path, 3.3, (Mode::A1, Mode::A2)).unwrap();
        assert!((g.value - 0.5).abs() < 1e-5, "{}", g.value);
    }

    #[test]
    fn scale_identities() {
        let p = one_cavity(2.0);
        assert_eq!(scale_params(&p, 1.0).unwrap(), p);
        let q = scale_params(&p, 4.0).unwrap();
        assert_eq!(q.drive * q.chi, p.drive * p.chi);
        assert!(scale_params(&p, 0.0).is_err());
        assert!(scale_state(&ClassicalState::default(), 0.0).is_err());
    }

    #[test]
    fn newton_reports_failure() {
        let p = one_cavity(3.0);
        let opts = NewtonOptions {
            tolerance: 1e-12,
            max_iterations: 0,
        };
        let guess = ClassicalState::new(c(5.0, 5.0), c(1.0, 0.0), C64::default(), C64::default());
        assert!(matches!(
            find_fixed_point_with(&p, false, &guess, &opts),
            Err(Error::NewtonFailure { .. })
        ));
    }

    #[test]
    fn hopf_threshold_crossing() {
        let p = one_cavity(0.0);
        let h = hopf_threshold(&p, false, (1.0, 8.0), &HopfOptions::default()).unwrap();
        assert!(h.critical_drive > 1.0 && h.critical_drive < 8.0);
        assert!(h.eigenvalue.re.abs() < 1e-8, "{}", h.eigenvalue);
        assert!(h.eigenvalue.im > 0.0);
        let above = one_cavity(h.critical_drive + 0.01);
        let fp = find_fixed_point(&above, false, &h.fixed_point).unwrap();
        let unstable: Vec<C64> = jacobian(&above, &fp, false)
            .complex_eigenvalues()
            .iter()
            .copied()
            .filter(|z| z.re > 0.0)
            .collect();
        assert_eq!(unstable.len(), 2);
        assert!((unstable[0].im + unstable[1].im).abs() < 1e-10 && unstable[0].im != 0.0);
    }

    #[test]
    fn bad_bracket_is_reported() {
        let p = one_cavity(0.0);
        assert!(matches!(
            hopf_threshold(&p, false, (0.5, 1.0), &HopfOptions::default()),
            Err(Error::InvalidBracket(_))
        ));
        assert!(hopf_threshold(&p, false, (2.0, 1.0), &HopfOptions::default()).is_err());
    }

    #[test]
    fn noisy_path_is_reproducible() {
        let p = one_cavity(2.0);
        let opts = NoiseOptions {
            sigma: 0.1,
            dt: 0.01,
            sample_dt: 0.1,
            seed: 9,
        };
        let a = integrate_noisy(&p, false, &ClassicalState::default(), 5.0, &opts).unwrap();
        let b = integrate_noisy(&p, false, &ClassicalState::default(), 5.0, &opts).unwrap();
        assert_eq!(a.states, b.states);
        assert_eq!(a.times.len(), 51);
        let quiet = NoiseOptions { sigma: 0.0, ..opts };
        let q = integrate_noisy(&p, false, &ClassicalState::default(), 5.0, &quiet).unwrap();
        let exact = integrate(
            &p,
            false,
            &ClassicalState::default(),
            5.0,
            &IntegrateOptions::default(),
        )
        .unwrap();
        assert!((q.last().unwrap().alpha1 - exact.last().unwrap().alpha1).norm() < 1e-4);
    }

    #[test]
    fn csv_has_expected_columns() {
        let p = one_cavity(1.0);
        let opts = IntegrateOptions {
            sample_dt: 0.5,
            ..IntegrateOptions::default()
        };
        let path = integrate(&p, false, &ClassicalState::default(), 1.0, &opts).unwrap();
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,re_a1,im_a1,re_a2,im_a2,n_a1,n_a2");
        assert_eq!(lines.len(), 4);
    }
}
