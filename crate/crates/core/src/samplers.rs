//! Forward noising, DDPM reverse samplers with every guidance mode, and
//! coupled (paired) sampling.
//!
//! The reverse update for `n = N, ..., 2` is
//! `Y_{n-1} = (Y_n + beta_n s(Y_n)) / sqrt(1 - beta_n) + sqrt(beta_n) Z_n`,
//! with `s` the effective score evaluated at model time `alpha_bar_n`.
//! Samplers stop at `Y_1`.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{ClassPair, Model};
use crate::reward::Reweighting;
use crate::rng::{CounterRng, StreamKey};
use crate::schedule::Schedule;

/// Iterates beyond this magnitude abort the chain.
pub const BLOWUP_BOUND: f64 = 1e6;

/// Child index reserved for the initial draw `Y_N`.
const INIT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GuidanceMode {
    None,
    Conditional,
    ClassifierGuidance,
    Cfg,
    RewardImprove,
    CostReduce,
}

impl GuidanceMode {
    pub fn name(self) -> &'static str {
        match self {
            GuidanceMode::None => "none",
            GuidanceMode::Conditional => "conditional",
            GuidanceMode::ClassifierGuidance => "classifier_guidance",
            GuidanceMode::Cfg => "cfg",
            GuidanceMode::RewardImprove => "reward_improve",
            GuidanceMode::CostReduce => "cost_reduce",
        }
    }
}

impl fmt::Display for GuidanceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Score sources and scale defining the effective drift.
///
/// `base` is the model sampled at `w = 0`: the data model for `None`,
/// `RewardImprove` and `CostReduce`, the conditional model for the
/// class-guided modes. `secondary` is the unconditional model (class modes)
/// or the reweighted model (reward/cost modes).
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceConfig {
    mode: GuidanceMode,
    w: f64,
    base: Model,
    secondary: Option<Model>,
    // base and secondary are point clouds over the same atoms
    shared_atoms: bool,
}

fn shares_atoms(rw: &Reweighting) -> bool {
    matches!((&rw.original, &rw.reweighted), (Model::Cloud(a), Model::Cloud(b)) if a.same_atoms(b))
}

fn check_w(w: f64) -> Result<()> {
    if w >= 0.0 && w.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGuidance(format!("guidance scale must be finite and >= 0, got {w}")))
    }
}

impl GuidanceConfig {
    pub fn unguided(model: Model) -> Self {
        Self {
            mode: GuidanceMode::None,
            w: 0.0,
            base: model,
            secondary: None,
            shared_atoms: false,
        }
    }

    pub fn conditional(pair: &ClassPair) -> Self {
        Self {
            mode: GuidanceMode::Conditional,
            w: 0.0,
            base: pair.conditional.clone().into(),
            secondary: None,
            shared_atoms: false,
        }
    }

    /// `s(x|c) + w * grad log p(c|x)`, the classifier gradient taken as
    /// `s(x|c) - s(x)`.
    pub fn classifier_guidance(pair: &ClassPair, w: f64) -> Result<Self> {
        check_w(w)?;
        Ok(Self {
            mode: GuidanceMode::ClassifierGuidance,
            w,
            base: pair.conditional.clone().into(),
            secondary: Some(pair.unconditional.clone().into()),
            shared_atoms: false,
        })
    }

    /// `(1 + w) s(x|c) - w s(x)`.
    pub fn cfg(pair: &ClassPair, w: f64) -> Result<Self> {
        check_w(w)?;
        Ok(Self {
            mode: GuidanceMode::Cfg,
            w,
            base: pair.conditional.clone().into(),
            secondary: Some(pair.unconditional.clone().into()),
            shared_atoms: false,
        })
    }

    /// `(1 - w) s(x) + w s_rw(x)`.
    pub fn reward_improve(rw: &Reweighting, w: f64) -> Result<Self> {
        check_w(w)?;
        Ok(Self {
            mode: GuidanceMode::RewardImprove,
            w,
            base: rw.original.clone(),
            secondary: Some(rw.reweighted.clone()),
            shared_atoms: shares_atoms(rw),
        })
    }

    /// `(1 + w) s(x) - w s_J(x)`.
    pub fn cost_reduce(rw: &Reweighting, w: f64) -> Result<Self> {
        check_w(w)?;
        Ok(Self {
            mode: GuidanceMode::CostReduce,
            w,
            base: rw.original.clone(),
            secondary: Some(rw.reweighted.clone()),
            shared_atoms: shares_atoms(rw),
        })
    }

    pub fn mode(&self) -> GuidanceMode {
        self.mode
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn base(&self) -> &Model {
        &self.base
    }

    pub fn secondary(&self) -> Option<&Model> {
        self.secondary.as_ref()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Same sources, different scale.
    pub fn with_w(&self, w: f64) -> Result<Self> {
        check_w(w)?;
        if self.secondary.is_none() && w != 0.0 {
            return Err(Error::InvalidGuidance(format!("mode {} takes no guidance scale", self.mode)));
        }
        Ok(Self { w, ..self.clone() })
    }

    /// The `w = 0` sampler of this configuration.
    pub fn base_config(&self) -> Self {
        Self {
            mode: match self.mode {
                GuidanceMode::ClassifierGuidance | GuidanceMode::Cfg | GuidanceMode::Conditional => {
                    GuidanceMode::Conditional
                }
                _ => GuidanceMode::None,
            },
            w: 0.0,
            base: self.base.clone(),
            secondary: None,
            shared_atoms: false,
        }
    }

    pub fn describe(&self) -> String {
        format!("mode={},w={}", self.mode, self.w)
    }

    /// Effective score at model time `t`. `scratch` must have length `dim`.
    #[inline]
    pub fn score_into(&self, t: f64, x: &[f64], out: &mut [f64], scratch: &mut [f64]) -> Result<()> {
        if self.shared_atoms && self.w != 0.0 {
            if let (Model::Cloud(a), Some(Model::Cloud(b))) = (&self.base, &self.secondary) {
                if a.paired_scores_into(b, t, x, out, scratch)? {
                    self.combine(out, scratch);
                    return Ok(());
                }
            }
        }
        self.base.noisy_score_into(t, x, out)?;
        let sec = match &self.secondary {
            Some(m) if self.w != 0.0 => m,
            // w = 0 never touches the secondary model, so trajectories match
            // the base sampler bit for bit
            _ => return Ok(()),
        };
        sec.noisy_score_into(t, x, scratch)?;
        self.combine(out, scratch);
        Ok(())
    }

    #[inline]
    fn combine(&self, out: &mut [f64], scratch: &[f64]) {
        let w = self.w;
        match self.mode {
            GuidanceMode::Cfg => out.iter_mut().zip(scratch.iter()).for_each(|(o, &u)| *o = (1.0 + w) * *o - w * u),
            GuidanceMode::ClassifierGuidance => {
                out.iter_mut().zip(scratch.iter()).for_each(|(o, &u)| *o += w * (*o - u))
            }
            GuidanceMode::RewardImprove => {
                out.iter_mut().zip(scratch.iter()).for_each(|(o, &r)| *o = (1.0 - w) * *o + w * r)
            }
            GuidanceMode::CostReduce => {
                out.iter_mut().zip(scratch.iter()).for_each(|(o, &j)| *o = (1.0 + w) * *o - w * j)
            }
            GuidanceMode::None | GuidanceMode::Conditional => {}
        }
    }

    /// Effective score plugged into the step-`n` update.
    pub fn effective_score(&self, schedule: &Schedule, n: usize, x: &[f64]) -> Result<Vec<f64>> {
        let t = schedule.alpha_bar(n)?;
        self.check_dim(x.len())?;
        let mut out = vec![0.0; x.len()];
        let mut scratch = vec![0.0; x.len()];
        self.score_into(t, x, &mut out, &mut scratch)?;
        Ok(out)
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: d,
            });
        }
        Ok(())
    }
}

/// Supplies `Z_n` for each reverse step.
pub trait NoiseSource {
    /// Standard normal vector used by the transition `n -> n - 1`.
    fn step_noise(&mut self, n: usize, out: &mut [f64]);
}

/// Independent per-step streams `key.child(n)`.
#[derive(Debug, Clone, Copy)]
pub struct KeyedNoise(pub StreamKey);

impl NoiseSource for KeyedNoise {
    #[inline]
    fn step_noise(&mut self, n: usize, out: &mut [f64]) {
        self.0.child(n as u64).rng().fill_normal(out);
    }
}

/// Draws `Y_N ~ N(0, I)` from the trial's reserved init stream.
pub fn initial_draw(trial: StreamKey, out: &mut [f64]) {
    trial.child(INIT_STREAM).rng().fill_normal(out);
}

/// Core DDPM loop: transitions `n = from_n, ..., to_n + 1`, leaving
/// `Y_to_n` in `y`.
///
/// `y` holds `lanes = y.len() / d` independent states that share the step
/// noise. `drift(lane, n, t, y, out)` writes the score used at step `n` (model
/// time `t = alpha_bar_n`).
pub fn integrate_lanes<D, Z>(
    schedule: &Schedule,
    from_n: usize,
    to_n: usize,
    d: usize,
    y: &mut [f64],
    noise: &mut Z,
    mut drift: D,
) -> Result<()>
where
    D: FnMut(usize, usize, f64, &[f64], &mut [f64]) -> Result<()>,
    Z: NoiseSource + ?Sized,
{
    if from_n > schedule.n_steps() || to_n == 0 || to_n > from_n {
        return Err(Error::IndexOutOfRange {
            index: if to_n == 0 || to_n > from_n { to_n } else { from_n },
            n_steps: schedule.n_steps(),
        });
    }
    if d == 0 || y.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: y.len(),
        });
    }
    let mut s = vec![0.0; d];
    let mut z = vec![0.0; d];
    for n in (to_n + 1..=from_n).rev() {
        let beta = schedule.b(n);
        let t = schedule.ab(n);
        noise.step_noise(n, &mut z);
        let inv = 1.0 / (1.0 - beta).sqrt();
        let sb = beta.sqrt();
        for (lane, yl) in y.chunks_exact_mut(d).enumerate() {
            drift(lane, n, t, yl, &mut s)?;
            for i in 0..d {
                let v = (yl[i] + beta * s[i]) * inv + sb * z[i];
                if !(v.abs() <= BLOWUP_BOUND) {
                    return Err(Error::NonFinite { step: n - 1, value: v });
                }
                yl[i] = v;
            }
        }
    }
    Ok(())
}

/// Single-state DDPM loop from `from_n` down to `Y_1`.
pub fn integrate<D, Z>(schedule: &Schedule, from_n: usize, y: &mut [f64], noise: &mut Z, mut drift: D) -> Result<()>
where
    D: FnMut(usize, f64, &[f64], &mut [f64]) -> Result<()>,
    Z: NoiseSource + ?Sized,
{
    let d = y.len();
    integrate_lanes(schedule, from_n, 1, d, y, noise, |_, n, t, x, out| drift(n, t, x, out))
}

/// Runs a configured sampler from `from_n` (state `y` is `Y_from_n`).
pub fn run_chain<Z: NoiseSource + ?Sized>(
    cfg: &GuidanceConfig,
    schedule: &Schedule,
    from_n: usize,
    y: &mut [f64],
    noise: &mut Z,
) -> Result<()> {
    cfg.check_dim(y.len())?;
    let mut scratch = vec![0.0; y.len()];
    integrate(schedule, from_n, y, noise, |_, t, x, out| cfg.score_into(t, x, out, &mut scratch))
}

/// One exact draw of `sqrt(t) X0 + sqrt(1 - t) Z`.
pub fn forward_sample(model: &Model, t: f64, rng: &mut CounterRng) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::DegenerateTime {
            t,
            reason: "time argument must lie in [0, 1]",
        });
    }
    let d = model.dim();
    let mut x = vec![0.0; d];
    model.sample_clean(rng, &mut x);
    if t < 1.0 {
        let mut z = vec![0.0; d];
        rng.fill_normal(&mut z);
        let (a, b) = (t.sqrt(), (1.0 - t).sqrt());
        x.iter_mut().zip(&z).for_each(|(xi, zi)| *xi = a * *xi + b * zi);
    }
    Ok(x)
}

/// Reverse sampler for one trial. Noise comes from `key.child(n)`; `Y_N` is
/// `init` or a draw from `key`'s init stream.
pub fn reverse_sample(cfg: &GuidanceConfig, schedule: &Schedule, key: StreamKey, init: Option<&[f64]>) -> Result<Vec<f64>> {
    let mut y = vec![0.0; cfg.dim()];
    match init {
        Some(v) => {
            cfg.check_dim(v.len())?;
            y.copy_from_slice(v)
        }
        None => initial_draw(key, &mut y),
    }
    run_chain(cfg, schedule, schedule.n_steps(), &mut y, &mut KeyedNoise(key))?;
    Ok(y)
}

/// Same sampler on the schedule refined `k` times (`k = 1` is the base run).
pub fn fine_reference_sample(
    cfg: &GuidanceConfig,
    k: usize,
    base: &Schedule,
    key: StreamKey,
    init: Option<&[f64]>,
) -> Result<Vec<f64>> {
    let fine = base.refined(k)?;
    reverse_sample(cfg, &fine, key, init)
}

/// Row-major collection of `d`-vectors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Samples {
    dim: usize,
    data: Vec<f64>,
}

impl Samples {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len(),
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = Vec<f64>>) -> Result<Self> {
        let mut s = Self::new(dim);
        for r in rows {
            s.push(&r)?;
        }
        Ok(s)
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Values of coordinate `axis` across rows.
    pub fn column(&self, axis: usize) -> Vec<f64> {
        self.rows().map(|r| r[axis]).collect()
    }
}

/// How `Y_N` is chosen in paired runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Init {
    #[default]
    Gaussian,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PairOptions {
    pub init: Init,
    /// Gives the two arms distinct per-step noise (initialization stays shared).
    pub decouple_noise: bool,
}

/// Coupled guided/unguided endpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedBatch {
    pub guided: Samples,
    pub unguided: Samples,
    /// Per-trial stream key value; trial `i` used `root(master).child(i)`.
    pub seeds: Vec<u64>,
    pub master_seed: u64,
    pub schedule_id: String,
    pub config: String,
    pub w: f64,
}

impl PairedBatch {
    pub fn len(&self) -> usize {
        self.guided.len()
    }

    pub fn is_empty(&self) -> bool {
        self.guided.is_empty()
    }
}

/// Keys for trial `i`: `(init/trial key, guided noise key, unguided noise key)`.
pub fn trial_keys(master_seed: u64, trial: u64, decouple: bool) -> (StreamKey, StreamKey, StreamKey) {
    let k = StreamKey::root(master_seed).child(trial);
    (k, k.child(decouple as u64), k.child(0))
}

/// Runs both arms per trial with shared `Y_N` and (unless decoupled) shared
/// step noise. Deterministic for any thread count.
pub fn paired_sample(
    guided: &GuidanceConfig,
    unguided: &GuidanceConfig,
    schedule: &Schedule,
    trials: usize,
    master_seed: u64,
    opts: &PairOptions,
) -> Result<PairedBatch> {
    if guided.dim() != unguided.dim() {
        return Err(Error::DimensionMismatch {
            expected: guided.dim(),
            got: unguided.dim(),
        });
    }
    if let Init::Fixed(v) = &opts.init {
        guided.check_dim(v.len())?;
    }
    let d = guided.dim();
    let rows: Vec<(Vec<f64>, Vec<f64>, u64)> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (tk, gk, uk) = trial_keys(master_seed, i, opts.decouple_noise);
            let mut y0 = vec![0.0; d];
            match &opts.init {
                Init::Gaussian => initial_draw(tk, &mut y0),
                Init::Fixed(v) => y0.copy_from_slice(v),
            }
            let mut yg = y0.clone();
            run_chain(guided, schedule, schedule.n_steps(), &mut yg, &mut KeyedNoise(gk)).map_err(|e| e.in_trial(i))?;
            let mut yu = y0;
            run_chain(unguided, schedule, schedule.n_steps(), &mut yu, &mut KeyedNoise(uk)).map_err(|e| e.in_trial(i))?;
            Ok((yg, yu, tk.value()))
        })
        .collect::<Result<_>>()?;
    let mut g = Samples::new(d);
    let mut u = Samples::new(d);
    let mut seeds = Vec::with_capacity(trials);
    for (a, b, s) in rows {
        g.data.extend(a);
        u.data.extend(b);
        seeds.push(s);
    }
    Ok(PairedBatch {
        guided: g,
        unguided: u,
        seeds,
        master_seed,
        schedule_id: schedule.id(),
        config: format!("guided[{}] unguided[{}]", guided.describe(), unguided.describe()),
        w: guided.w(),
    })
}

/// Endpoints of one arm of a paired run, trial by trial. Two calls with the
/// same arguments except `guided` reproduce [`paired_sample`] exactly.
pub fn sample_arm(
    cfg: &GuidanceConfig,
    schedule: &Schedule,
    trials: usize,
    master_seed: u64,
    opts: &PairOptions,
    guided: bool,
) -> Result<Samples> {
    if let Init::Fixed(v) = &opts.init {
        cfg.check_dim(v.len())?;
    }
    let d = cfg.dim();
    let rows: Vec<Vec<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let (tk, gk, uk) = trial_keys(master_seed, i, opts.decouple_noise);
            let mut y = vec![0.0; d];
            match &opts.init {
                Init::Gaussian => initial_draw(tk, &mut y),
                Init::Fixed(v) => y.copy_from_slice(v),
            }
            let key = if guided { gk } else { uk };
            run_chain(cfg, schedule, schedule.n_steps(), &mut y, &mut KeyedNoise(key)).map_err(|e| e.in_trial(i))?;
            Ok(y)
        })
        .collect::<Result<_>>()?;
    Ok(Samples {
        dim: d,
        data: rows.into_iter().flatten().collect(),
    })
}

impl PairedBatch {
    /// Assembles a batch from arms produced by [`sample_arm`].
    pub fn from_arms(
        guided: Samples,
        unguided: Samples,
        guided_cfg: &GuidanceConfig,
        unguided_cfg: &GuidanceConfig,
        schedule: &Schedule,
        master_seed: u64,
    ) -> Result<Self> {
        if guided.len() != unguided.len() || guided.dim() != unguided.dim() {
            return Err(Error::DimensionMismatch {
                expected: guided.len(),
                got: unguided.len(),
            });
        }
        let seeds = (0..guided.len() as u64)
            .map(|i| StreamKey::root(master_seed).child(i).value())
            .collect();
        Ok(Self {
            guided,
            unguided,
            seeds,
            master_seed,
            schedule_id: schedule.id(),
            config: format!("guided[{}] unguided[{}]", guided_cfg.describe(), unguided_cfg.describe()),
            w: guided_cfg.w(),
        })
    }
}

/// Every iterate `Y_N, ..., Y_1` of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub trial: u64,
    /// `(n, alpha_bar_n, Y_n)` in sampling order.
    pub states: Vec<(usize, f64, Vec<f64>)>,
}

/// Re-runs trial `trial` of a paired configuration and records its path.
pub fn record_trajectory(
    cfg: &GuidanceConfig,
    schedule: &Schedule,
    master_seed: u64,
    trial: u64,
    arm_guided: bool,
    opts: &PairOptions,
) -> Result<Trajectory> {
    let (tk, gk, uk) = trial_keys(master_seed, trial, opts.decouple_noise);
    let d = cfg.dim();
    let mut y = vec![0.0; d];
    match &opts.init {
        Init::Gaussian => initial_draw(tk, &mut y),
        Init::Fixed(v) => {
            cfg.check_dim(v.len())?;
            y.copy_from_slice(v)
        }
    }
    let mut states = Vec::with_capacity(schedule.n_steps());
    let mut scratch = vec![0.0; d];
    let key = if arm_guided { gk } else { uk };
    integrate(schedule, schedule.n_steps(), &mut y, &mut KeyedNoise(key), |n, t, x, out| {
        states.push((n, t, x.to_vec()));
        cfg.score_into(t, x, out, &mut scratch)
    })?;
    states.push((1, schedule.ab(1), y));
    Ok(Trajectory { trial, states })
}

/// Brownian path in `u = -ln(alpha_bar)` shared by several schedules, so that
/// chains on different grids see the same driving noise.
///
/// The transition `n -> n - 1` of a schedule uses
/// `Z_n = (W(u_n) - W(u_{n-1})) / sqrt(u_n - u_{n-1})`, which is exactly
/// standard normal for every schedule.
#[derive(Debug, Clone)]
pub struct SharedGrid {
    u: Vec<f64>,
    /// For each schedule, the grid index of `u_n` at position `n - 1`.
    index: Vec<Vec<usize>>,
}

impl SharedGrid {
    pub fn new(schedules: &[&Schedule]) -> Self {
        let mut u: Vec<f64> = schedules
            .iter()
            .flat_map(|s| s.alpha_bars().iter().map(|a| -a.ln()))
            .collect();
        u.sort_by(f64::total_cmp);
        u.dedup();
        let index = schedules
            .iter()
            .map(|s| {
                s.alpha_bars()
                    .iter()
                    .map(|a| u.partition_point(|&v| v < -a.ln()))
                    .collect()
            })
            .collect();
        Self { u, index }
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    /// Samples `W` (dimension `d`) on the grid into `path`, row-major.
    pub fn sample_path(&self, key: StreamKey, d: usize, path: &mut Vec<f64>) {
        path.clear();
        path.resize(self.u.len() * d, 0.0);
        let mut rng = key.rng();
        let mut z = vec![0.0; d];
        for j in 1..self.u.len() {
            let sd = (self.u[j] - self.u[j - 1]).sqrt();
            rng.fill_normal(&mut z);
            for i in 0..d {
                path[j * d + i] = path[(j - 1) * d + i] + sd * z[i];
            }
        }
    }

    /// Noise source reading schedule `which`'s increments off `path`.
    pub fn noise<'a>(&'a self, which: usize, path: &'a [f64], d: usize) -> PathNoise<'a> {
        PathNoise {
            grid: self,
            index: &self.index[which],
            path,
            d,
        }
    }
}

pub struct PathNoise<'a> {
    grid: &'a SharedGrid,
    index: &'a [usize],
    path: &'a [f64],
    d: usize,
}

impl NoiseSource for PathNoise<'_> {
    #[inline]
    fn step_noise(&mut self, n: usize, out: &mut [f64]) {
        let hi = self.index[n - 1];
        let lo = self.index[n - 2];
        let inv = 1.0 / (self.grid.u[hi] - self.grid.u[lo]).sqrt();
        let d = self.d;
        for i in 0..d {
            out[i] = (self.path[hi * d + i] - self.path[lo * d + i]) * inv;
        }
    }
}
