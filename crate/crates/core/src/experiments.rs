//! Parameter sweeps over every backend, with reproducible per-point seeds
//! and lossless CSV persistence.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classical::{self, HopfOptions, IntegrateOptions, SyncClass, Tolerances};
use crate::error::{Error, Result};
use crate::fock::FockSpace;
use crate::model::{Mode, ModelParams};
use crate::oracles;
use crate::steady_state::{self, SolveMethod, SolveOptions, DEFAULT_TAIL_TOLERANCE};
use crate::trajectory::{self, EstimateOptions, TrajectoryOptions};

/// Drive used to stand in for `E → 0`.
pub const QUANTUM_LIMIT_DRIVE: f64 = 0.01;
/// Nonlinearity used to stand in for `χ → ∞`.
pub const QUANTUM_LIMIT_CHI: f64 = 100.0;
pub const QUANTUM_LIMIT_DIMS: [usize; 4] = [3, 2, 3, 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    TransitionScan,
    PhaseDiagram,
    DetuningScan,
    Generic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    /// Steady state when it fits the budget, trajectories otherwise.
    Auto,
    SteadyState,
    Trajectory,
    Classical,
    Oracle,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Auto => "auto",
            Backend::SteadyState => "steady_state",
            Backend::Trajectory => "trajectory",
            Backend::Classical => "classical",
            Backend::Oracle => "oracle",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [
            Backend::Auto,
            Backend::SteadyState,
            Backend::Trajectory,
            Backend::Classical,
            Backend::Oracle,
        ]
        .into_iter()
        .find(|b| b.name() == s)
    }
}

/// Grid values of one axis: an explicit list or an inclusive linear range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values(Vec<f64>),
    Range {
        start: f64,
        stop: f64,
        points: usize,
    },
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Grid::Values(v) => v.clone(),
            Grid::Range {
                start,
                stop,
                points,
            } => match points {
                0 => vec![],
                1 => vec![*start],
                n => (0..*n)
                    .map(|k| start + (stop - start) * k as f64 / (*n - 1) as f64)
                    .collect(),
            },
        }
    }
}

/// Axis names: any [`ModelParams`] field, or the derived `delta1` (both
/// fundamental detunings), `delta` (mismatch at fixed mean) and
/// `delta1_mean`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub name: String,
    pub grid: Grid,
}

pub const AXIS_NAMES: [&str; 11] = [
    "drive",
    "chi",
    "kappa2",
    "delta1a",
    "delta1b",
    "delta2",
    "v1",
    "v2",
    "delta1",
    "delta",
    "delta1_mean",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Constraint {
    /// `χ = product / E`.
    FixedProduct { product: f64 },
    /// `E = E_c + offset`, with `E_c` from the classical Hopf threshold.
    DriveAboveThreshold { offset: f64, bracket: (f64, f64) },
    /// `Δ₁ᵃ = mean + δ/2`, `Δ₁ᵇ = mean − δ/2`.
    FixedMeanDetuning { mean: f64 },
}

/// Solver budget deciding which quantum backend `Auto` uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budget {
    /// Largest `D²` solved by sparse LU.
    pub lu_max_liouvillian: usize,
    /// Largest `D²` solved at all (GMRES above the LU limit).
    pub steady_max_liouvillian: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            lu_max_liouvillian: 16_384,
            steady_max_liouvillian: 110_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointSettings {
    pub two_cavity: bool,
    /// Fixed truncation; chosen per point when absent.
    pub dims: Option<Vec<usize>>,
    /// Top-level population allowed when choosing dims automatically.
    pub auto_tail_tolerance: f64,
    /// Top-level population above which a row is flagged.
    pub tail_tolerance: f64,
    pub budget: Budget,
    pub trajectories: usize,
    pub t_transient: f64,
    pub t_average: f64,
    pub dt: f64,
    pub classical_t_final: f64,
    /// Defaults to [`classical::default_transient`].
    pub classical_t_transient: Option<f64>,
    pub classical_sample_dt: f64,
    /// Quantum phase diagrams: direct-solve every k-th point (0 = none).
    pub cross_check_every: usize,
}

impl Default for PointSettings {
    fn default() -> Self {
        Self {
            two_cavity: true,
            dims: None,
            auto_tail_tolerance: 1e-4,
            tail_tolerance: DEFAULT_TAIL_TOLERANCE,
            budget: Budget::default(),
            trajectories: 48,
            t_transient: 20.0,
            t_average: 100.0,
            dt: trajectory::MAX_DT,
            classical_t_final: 1000.0,
            classical_t_transient: None,
            classical_sample_dt: 0.01,
            cross_check_every: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub kind: SweepKind,
    pub base: ModelParams,
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
    pub backend: Backend,
    #[serde(default)]
    pub settings: PointSettings,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.axes.is_empty() {
            return Err(Error::InvalidParameter(
                "a sweep needs at least one axis".into(),
            ));
        }
        for a in &self.axes {
            if !AXIS_NAMES.contains(&a.name.as_str()) {
                return Err(Error::InvalidParameter(format!(
                    "unknown axis {:?}; expected one of {AXIS_NAMES:?}",
                    a.name
                )));
            }
            let v = a.grid.values();
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "axis {:?} has an empty or non-finite grid",
                    a.name
                )));
            }
        }
        let has_delta = self.axes.iter().any(|a| a.name == "delta");
        let has_mean = self
            .constraints
            .iter()
            .any(|c| matches!(c, Constraint::FixedMeanDetuning { .. }));
        if has_delta && !has_mean && !self.axes.iter().any(|a| a.name == "delta1_mean") {
            return Err(Error::InvalidParameter(
                "a delta axis needs a fixed_mean_detuning constraint or a delta1_mean axis".into(),
            ));
        }
        if self.settings.dims.is_some()
            && self.settings.dims.as_ref().unwrap().len() != self.modes()
        {
            return Err(Error::InvalidParameter(format!(
                "settings.dims must list {} modes",
                self.modes()
            )));
        }
        Ok(())
    }

    fn modes(&self) -> usize {
        if self.settings.two_cavity {
            4
        } else {
            2
        }
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("spec serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    /// Number of grid points (product of axis lengths).
    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.grid.values().len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Axis values of point `index`, last axis fastest.
    fn coordinates(&self, index: usize) -> Vec<(String, f64)> {
        let grids: Vec<Vec<f64>> = self.axes.iter().map(|a| a.grid.values()).collect();
        let mut rem = index;
        let mut out = vec![(String::new(), 0.0); grids.len()];
        for k in (0..grids.len()).rev() {
            let n = grids[k].len();
            out[k] = (self.axes[k].name.clone(), grids[k][rem % n]);
            rem /= n;
        }
        out
    }

    /// Parameters of point `index` before any threshold constraint.
    fn resolve_static(&self, index: usize) -> Result<ModelParams> {
        let mut p = self.base;
        let coords = self.coordinates(index);
        let mut delta = None;
        let mut mean = None;
        for (name, v) in &coords {
            match name.as_str() {
                "drive" => p.drive = *v,
                "chi" => p.chi = *v,
                "kappa2" => p.kappa2 = *v,
                "delta1a" => p.delta1a = *v,
                "delta1b" => p.delta1b = *v,
                "delta2" => p.delta2 = *v,
                "v1" => p.v1 = *v,
                "v2" => p.v2 = *v,
                "delta1" => {
                    p.delta1a = *v;
                    p.delta1b = *v;
                }
                "delta" => delta = Some(*v),
                "delta1_mean" => mean = Some(*v),
                other => return Err(Error::InvalidParameter(format!("unknown axis {other:?}"))),
            }
        }
        for c in &self.constraints {
            match c {
                Constraint::FixedMeanDetuning { mean: m } => {
                    mean = mean.or(Some(*m));
                }
                Constraint::FixedProduct { product } => {
                    if !(p.drive > 0.0) {
                        return Err(Error::InvalidParameter(
                            "fixed product needs a positive drive".into(),
                        ));
                    }
                    p.chi = product / p.drive;
                }
                Constraint::DriveAboveThreshold { .. } => {}
            }
        }
        if delta.is_some() || mean.is_some() {
            let m = mean.unwrap_or_else(|| p.delta1_mean());
            let d = delta.unwrap_or_else(|| p.delta1_diff());
            p.delta1a = m + 0.5 * d;
            p.delta1b = m - 0.5 * d;
        }
        Ok(p)
    }
}

/// Seed for point `index`: first eight bytes of `sha256(hash ‖ index)`.
pub fn point_seed(spec_hash: &str, index: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(spec_hash.as_bytes());
    h.update((index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub index: usize,
    pub params: ModelParams,
    pub backend: Backend,
    pub dims: Vec<usize>,
    /// Modes of the reported g₂, e.g. `a1:b1`.
    pub pair: String,
    pub g2: f64,
    pub g2_err: f64,
    /// Weak-drive closed form at the same detunings (NaN for classical rows).
    pub oracle_g2: f64,
    /// `⟨n⟩` of a1, a2, b1, b2 (NaN where absent).
    pub photon_numbers: [f64; 4],
    pub critical_drive: f64,
    pub sync: Option<SyncClass>,
    pub truncation_suspect: bool,
    pub unconverged: bool,
    pub seed: u64,
    pub error: Option<String>,
}

impl SweepRow {
    fn empty(
        index: usize,
        params: ModelParams,
        backend: Backend,
        seed: u64,
        two_cavity: bool,
    ) -> Self {
        Self {
            index,
            params,
            backend,
            dims: vec![],
            pair: if two_cavity { "a1:b1" } else { "a1:a2" }.to_string(),
            g2: f64::NAN,
            g2_err: f64::NAN,
            oracle_g2: f64::NAN,
            photon_numbers: [f64::NAN; 4],
            critical_drive: f64::NAN,
            sync: None,
            truncation_suspect: false,
            unconverged: false,
            seed,
            error: None,
        }
    }

    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub spec_hash: String,
    pub version: String,
    pub wall_time_s: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }
}

fn pair_modes(two_cavity: bool) -> (Mode, Mode) {
    if two_cavity {
        (Mode::A1, Mode::B1)
    } else {
        (Mode::A1, Mode::A2)
    }
}

fn oracle_value(p: &ModelParams, two_cavity: bool) -> Result<f64> {
    if two_cavity {
        Ok(oracles::g2_cross_quantum_limit(
            p.delta1a, p.delta1b, p.kappa1, p.v1,
        ))
    } else {
        oracles::g2_single_cavity_quantum(p.chi, p.kappa1, p.kappa2, p.delta1a, p.delta2)
    }
}

/// Smallest per-cavity truncation `[n1, n2]` whose single-cavity steady
/// state (at the larger fundamental detuning magnitude, no hopping) has
/// top-level populations below `tolerance`.
pub fn auto_dims(params: &ModelParams, two_cavity: bool, tolerance: f64) -> Result<Vec<usize>> {
    let mut worst = [2usize, 2];
    let detunings: &[f64] = if two_cavity {
        &[params.delta1a, params.delta1b]
    } else {
        &[params.delta1a]
    };
    for &d in detunings {
        let single = ModelParams {
            delta1a: d,
            delta1b: d,
            v1: 0.0,
            v2: 0.0,
            ..*params
        };
        let mut n1 = 3usize;
        loop {
            let n2 = n1.div_ceil(2).max(2);
            let space = FockSpace::new(&[n1, n2])?;
            let rho = steady_state::steady_state(&single, &space)?;
            if rho.max_top_level_population() <= tolerance {
                worst[0] = worst[0].max(n1);
                worst[1] = worst[1].max(n2);
                break;
            }
            n1 += 1;
            if n1 > 64 {
                return Err(Error::NotConverged {
                    iterations: n1,
                    residual: rho.max_top_level_population(),
                });
            }
        }
    }
    Ok(if two_cavity {
        vec![worst[0], worst[1], worst[0], worst[1]]
    } else {
        worst.to_vec()
    })
}

fn quantum_point(
    p: &ModelParams,
    settings: &PointSettings,
    backend: Backend,
    row: &mut SweepRow,
) -> Result<()> {
    let two = settings.two_cavity;
    let dims = match &settings.dims {
        Some(d) => d.clone(),
        None => auto_dims(p, two, settings.auto_tail_tolerance)?,
    };
    let space = FockSpace::new(&dims)?;
    let d = space.total_dim();
    let liouvillian_dim = d.checked_mul(d).ok_or(Error::DimensionOverflow {
        dim: d,
        cap: usize::MAX,
    })?;
    let backend = match backend {
        Backend::Auto if liouvillian_dim <= settings.budget.steady_max_liouvillian => {
            Backend::SteadyState
        }
        Backend::Auto => Backend::Trajectory,
        b => b,
    };
    row.backend = backend;
    row.dims = dims.clone();
    row.oracle_g2 = oracle_value(p, two).unwrap_or(f64::NAN);
    let (ma, mb) = pair_modes(two);
    match backend {
        Backend::SteadyState => {
            let opts = SolveOptions {
                method: if liouvillian_dim <= settings.budget.lu_max_liouvillian {
                    SolveMethod::Direct
                } else {
                    SolveMethod::Iterative
                },
                ..SolveOptions::default()
            };
            let rho = steady_state::steady_state_with(p, &space, &opts)?;
            for m in 0..space.num_modes() {
                row.photon_numbers[m] = rho.population(m)?;
            }
            row.truncation_suspect = rho.truncation_suspect(settings.tail_tolerance);
            let g = rho.g2(ma.index(), mb.index())?;
            row.g2 = g.value;
            row.g2_err = 0.0;
        }
        Backend::Trajectory => {
            let opts = EstimateOptions {
                t_transient: settings.t_transient,
                t_average: settings.t_average,
                n_trajectories: settings.trajectories,
                seed: row.seed,
                trajectory: TrajectoryOptions {
                    dt: settings.dt,
                    ..TrajectoryOptions::default()
                },
            };
            let c =
                trajectory::estimate_correlations(p, &space, &[(ma.index(), mb.index())], &opts)?;
            for (m, e) in c.photon_numbers.iter().enumerate() {
                row.photon_numbers[m] = e.mean;
            }
            row.g2 = c.g2[0].value;
            row.g2_err = c.g2[0].statistical_error;
            row.unconverged =
                !(row.g2_err.is_finite()) || row.g2_err > 0.1 * (row.g2 - 1.0).abs().max(0.01);
            // The trajectory backend has no density matrix; flag from the
            // single-cavity check used to pick the dims.
            row.truncation_suspect =
                settings.dims.is_none() && settings.auto_tail_tolerance > settings.tail_tolerance;
        }
        _ => unreachable!("quantum_point called with {backend:?}"),
    }
    Ok(())
}

fn classical_point(
    p: &mut ModelParams,
    settings: &PointSettings,
    row: &mut SweepRow,
) -> Result<()> {
    let two = settings.two_cavity;
    let s0 = classical::perturbed_fixed_point(p, two)?;
    let opts = IntegrateOptions {
        tolerances: Tolerances::default(),
        sample_dt: settings.classical_sample_dt,
        ..IntegrateOptions::default()
    };
    let path = classical::integrate(p, two, &s0, settings.classical_t_final, &opts)?;
    let tt = settings
        .classical_t_transient
        .unwrap_or_else(|| classical::default_transient(settings.classical_t_final));
    let g = classical::classical_g2(&path, tt, pair_modes(two))?;
    row.g2 = g.value;
    row.g2_err = 0.0;
    let start = path.times.partition_point(|&t| t < tt);
    let modes = if two { 4 } else { 2 };
    for (m, mode) in Mode::ALL[..modes].iter().enumerate() {
        let tail = &path.states[start..];
        row.photon_numbers[m] =
            tail.iter().map(|s| s.photon_number(*mode)).sum::<f64>() / tail.len() as f64;
    }
    if two {
        match classical::classify_synchronization(&path, tt) {
            Ok(r) => row.sync = Some(r.class),
            Err(Error::Inconclusive(_)) => row.sync = None,
            Err(e) => return Err(e),
        }
    }
    Ok(())
}

fn run_point(spec: &SweepSpec, index: usize, seed: u64) -> SweepRow {
    let settings = &spec.settings;
    let two = settings.two_cavity;
    let mut params = match spec.resolve_static(index) {
        Ok(p) => p,
        Err(e) => {
            let mut r = SweepRow::empty(index, spec.base, spec.backend, seed, two);
            r.error = Some(e.to_string());
            return r;
        }
    };
    let mut row = SweepRow::empty(index, params, spec.backend, seed, two);
    let outcome = (|| -> Result<()> {
        for c in &spec.constraints {
            if let Constraint::DriveAboveThreshold { offset, bracket } = c {
                let h = classical::hopf_threshold(&params, two, *bracket, &HopfOptions::default())?;
                row.critical_drive = h.critical_drive;
                params.drive = h.critical_drive + offset;
            }
        }
        params.validate()?;
        row.params = params;
        match spec.backend {
            Backend::Classical => classical_point(&mut params, settings, &mut row),
            Backend::Oracle => {
                row.g2 = oracle_value(&params, two)?;
                row.oracle_g2 = row.g2;
                row.g2_err = 0.0;
                if spec.kind == SweepKind::PhaseDiagram
                    && settings.cross_check_every > 0
                    && index.is_multiple_of(settings.cross_check_every)
                {
                    let limit = ModelParams {
                        drive: QUANTUM_LIMIT_DRIVE,
                        chi: QUANTUM_LIMIT_CHI,
                        ..params
                    };
                    let check = PointSettings {
                        dims: Some(settings.dims.clone().unwrap_or_else(|| {
                            if two {
                                QUANTUM_LIMIT_DIMS.to_vec()
                            } else {
                                QUANTUM_LIMIT_DIMS[..2].to_vec()
                            }
                        })),
                        ..settings.clone()
                    };
                    row.params = limit;
                    quantum_point(&limit, &check, Backend::SteadyState, &mut row)?;
                }
                Ok(())
            }
            b => quantum_point(&params, settings, b, &mut row),
        }
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    row
}

/// Evaluate every grid point (in parallel) and return rows in grid order.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let start = Instant::now();
    let hash = spec.hash();
    let mut rows: Vec<SweepRow> = (0..spec.len())
        .into_par_iter()
        .map(|i| run_point(spec, i, point_seed(&hash, i)))
        .collect();
    rows.sort_by_key(|r| r.index);
    Ok(SweepResult {
        spec: spec.clone(),
        spec_hash: hash,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_s: start.elapsed().as_secs_f64(),
        rows,
    })
}

/// Fixed-`Eχ` scan over the drive.
pub fn run_transition_scan(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.kind != SweepKind::TransitionScan {
        return Err(Error::InvalidParameter(
            "spec is not a transition scan".into(),
        ));
    }
    if !spec
        .constraints
        .iter()
        .any(|c| matches!(c, Constraint::FixedProduct { .. }))
    {
        return Err(Error::InvalidParameter(
            "a transition scan needs a fixed_product constraint".into(),
        ));
    }
    if !spec.axes.iter().any(|a| a.name == "drive") {
        return Err(Error::InvalidParameter(
            "a transition scan needs a drive axis".into(),
        ));
    }
    run_sweep(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagramMode {
    Classical,
    Quantum,
}

/// `(Δ₁, Δ₂)` diagram for identical cavities. Classical mode runs at
/// `E_c + offset` and records the synchronization class; quantum mode
/// evaluates the closed form and direct-solves every
/// `cross_check_every`-th point in the quantum limit.
pub fn run_phase_diagram(spec: &SweepSpec, mode: DiagramMode) -> Result<SweepResult> {
    if spec.kind != SweepKind::PhaseDiagram {
        return Err(Error::InvalidParameter(
            "spec is not a phase diagram".into(),
        ));
    }
    let names: Vec<&str> = spec.axes.iter().map(|a| a.name.as_str()).collect();
    if names != ["delta1", "delta2"] {
        return Err(Error::InvalidParameter(
            "a phase diagram needs axes [delta1, delta2]".into(),
        ));
    }
    if spec.base.delta1a != spec.base.delta1b {
        return Err(Error::InvalidParameter(
            "a phase diagram needs identical cavities".into(),
        ));
    }
    let wanted = match mode {
        DiagramMode::Classical => Backend::Classical,
        DiagramMode::Quantum => Backend::Oracle,
    };
    if spec.backend != wanted {
        return Err(Error::InvalidParameter(format!(
            "{mode:?} phase diagrams use the {} backend",
            wanted.name()
        )));
    }
    if mode == DiagramMode::Classical
        && !spec
            .constraints
            .iter()
            .any(|c| matches!(c, Constraint::DriveAboveThreshold { .. }))
    {
        return Err(Error::InvalidParameter(
            "a classical phase diagram needs a drive_above_threshold constraint".into(),
        ));
    }
    run_sweep(spec)
}

/// Scan over the mismatch `δ` at fixed mean fundamental detuning.
pub fn run_detuning_scan(spec: &SweepSpec) -> Result<SweepResult> {
    if spec.kind != SweepKind::DetuningScan {
        return Err(Error::InvalidParameter(
            "spec is not a detuning scan".into(),
        ));
    }
    if !spec.axes.iter().any(|a| a.name == "delta") {
        return Err(Error::InvalidParameter(
            "a detuning scan needs a delta axis".into(),
        ));
    }
    run_sweep(spec)
}

/// Dispatch on `spec.kind`.
pub fn run(spec: &SweepSpec) -> Result<SweepResult> {
    match spec.kind {
        SweepKind::TransitionScan => run_transition_scan(spec),
        SweepKind::PhaseDiagram => {
            let mode = if spec.backend == Backend::Classical {
                DiagramMode::Classical
            } else {
                DiagramMode::Quantum
            };
            run_phase_diagram(spec, mode)
        }
        SweepKind::DetuningScan => run_detuning_scan(spec),
        SweepKind::Generic => run_sweep(spec),
    }
}

/// CSV column schema shared by every backend.
pub const CSV_COLUMNS: [&str; 27] = [
    "index",
    "drive",
    "chi",
    "kappa1",
    "kappa2",
    "delta1a",
    "delta1b",
    "delta2",
    "v1",
    "v2",
    "backend",
    "dims",
    "pair",
    "g2",
    "g2_err",
    "oracle_g2",
    "n_a1",
    "n_a2",
    "n_b1",
    "n_b2",
    "critical_drive",
    "sync",
    "truncation_suspect",
    "unconverged",
    "seed",
    "failed",
    "error",
];

pub const CSV_FILE: &str = "sweep.csv";
pub const SIDECAR_FILE: &str = "sweep.json";

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| Error::Format(format!("bad number {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse::<usize>()
        .map_err(|_| Error::Format(format!("bad integer {s:?}")))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(Error::Format(format!("bad boolean {s:?}"))),
    }
}

/// Write the rows as CSV (fixed schema, no timing data).
pub fn write_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in rows {
        let p = &r.params;
        let mut rec = vec![r.index.to_string()];
        rec.extend(
            [
                p.drive, p.chi, p.kappa1, p.kappa2, p.delta1a, p.delta1b, p.delta2, p.v1, p.v2,
            ]
            .iter()
            .map(|&x| fmt(x)),
        );
        rec.push(r.backend.name().to_string());
        rec.push(
            r.dims
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x"),
        );
        rec.push(r.pair.clone());
        rec.extend([r.g2, r.g2_err, r.oracle_g2].iter().map(|&x| fmt(x)));
        rec.extend(r.photon_numbers.iter().map(|&x| fmt(x)));
        rec.push(fmt(r.critical_drive));
        rec.push(r.sync.map_or(String::new(), |s| s.name().to_string()));
        rec.push(r.truncation_suspect.to_string());
        rec.push(r.unconverged.to_string());
        rec.push(r.seed.to_string());
        rec.push(r.failed().to_string());
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<SweepRow>> {
    let mut rd = csv::Reader::from_reader(input);
    let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
    if header != CSV_COLUMNS {
        let missing: Vec<&str> = CSV_COLUMNS
            .iter()
            .copied()
            .filter(|c| !header.iter().any(|h| h == c))
            .collect();
        return Err(Error::Format(format!(
            "unexpected CSV header; missing columns: {missing:?}"
        )));
    }
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let f = |k: usize| parse_f64(&rec[k]);
        let params = ModelParams {
            drive: f(1)?,
            chi: f(2)?,
            kappa1: f(3)?,
            kappa2: f(4)?,
            delta1a: f(5)?,
            delta1b: f(6)?,
            delta2: f(7)?,
            v1: f(8)?,
            v2: f(9)?,
        };
        let backend = Backend::from_name(&rec[10])
            .ok_or_else(|| Error::Format(format!("unknown backend {:?}", &rec[10])))?;
        let dims = if rec[11].is_empty() {
            vec![]
        } else {
            rec[11]
                .split('x')
                .map(parse_usize)
                .collect::<Result<Vec<_>>>()?
        };
        let sync = match &rec[21] {
            "" => None,
            "in_phase" => Some(SyncClass::InPhase),
            "anti_phase" => Some(SyncClass::AntiPhase),
            "unlocked" => Some(SyncClass::Unlocked),
            s => return Err(Error::Format(format!("unknown sync class {s:?}"))),
        };
        let failed = parse_bool(&rec[25])?;
        rows.push(SweepRow {
            index: parse_usize(&rec[0])?,
            params,
            backend,
            dims,
            pair: rec[12].to_string(),
            g2: f(13)?,
            g2_err: f(14)?,
            oracle_g2: f(15)?,
            photon_numbers: [f(16)?, f(17)?, f(18)?, f(19)?],
            critical_drive: f(20)?,
            sync,
            truncation_suspect: parse_bool(&rec[22])?,
            unconverged: parse_bool(&rec[23])?,
            seed: rec[24]
                .parse()
                .map_err(|_| Error::Format(format!("bad seed {:?}", &rec[24])))?,
            error: failed.then(|| rec[26].to_string()),
        });
    }
    Ok(rows)
}

/// Metadata written next to the CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: SweepSpec,
    pub spec_hash: String,
    pub version: String,
    pub wall_time_s: f64,
    pub seeds: Vec<u64>,
    pub columns: Vec<String>,
    pub failures: usize,
}

/// Write `sweep.csv` and `sweep.json` into `dir` (created if needed).
pub fn persist(result: &SweepResult, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let csv_path = dir.join(CSV_FILE);
    let json_path = dir.join(SIDECAR_FILE);
    write_csv(&result.rows, fs::File::create(&csv_path)?)?;
    let sidecar = Sidecar {
        spec: result.spec.clone(),
        spec_hash: result.spec_hash.clone(),
        version: result.version.clone(),
        wall_time_s: result.wall_time_s,
        seeds: result.rows.iter().map(|r| r.seed).collect(),
        columns: CSV_COLUMNS.iter().map(|s| s.to_string()).collect(),
        failures: result.failures(),
    };
    fs::write(&json_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok((csv_path, json_path))
}

/// Read a persisted sweep back, checking the stored hash against the spec.
pub fn load(dir: &Path) -> Result<SweepResult> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(dir.join(SIDECAR_FILE))?)?;
    let recomputed = sidecar.spec.hash();
    if recomputed != sidecar.spec_hash {
        return Err(Error::Format(format!(
            "sidecar hash {} does not match the spec ({recomputed})",
            sidecar.spec_hash
        )));
    }
    let rows = read_csv(fs::File::open(dir.join(CSV_FILE))?)?;
    Ok(SweepResult {
        spec: sidecar.spec,
        spec_hash: sidecar.spec_hash,
        version: sidecar.version,
        wall_time_s: sidecar.wall_time_s,
        rows,
    })
}

/// Transition-scan spec for identical cavities at fixed `Eχ`.
pub fn transition_spec(
    drives: Vec<f64>,
    product: f64,
    delta1: f64,
    delta2: f64,
    v1: f64,
) -> SweepSpec {
    SweepSpec {
        kind: SweepKind::TransitionScan,
        base: ModelParams::identical(drives[0], product / drives[0], 0.5, delta1, delta2)
            .with_coupling(v1, 0.0),
        axes: vec![Axis {
            name: "drive".into(),
            grid: Grid::Values(drives),
        }],
        constraints: vec![Constraint::FixedProduct { product }],
        backend: Backend::Auto,
        settings: PointSettings::default(),
    }
}
