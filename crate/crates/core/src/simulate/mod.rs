//! Monte-Carlo simulation of jump diffusions.
//!
//! The mode chain is sampled exactly and the state is integrated by
//! Euler–Maruyama on a fixed grid `t_k = k·dt`, with the grid step split at
//! every jump instant so that the drift always uses the mode active on the
//! sub-interval. Ensembles run in parallel over fixed chunks of paths whose
//! partial statistics are merged in chunk order, so results are bit-identical
//! for a given `(seed, n_paths, dt)` whatever the thread count.

mod ctmc;
mod dynkin;
mod rng;

pub use ctmc::{estimate_generator, sample_ctmc, sample_discrete, GeneratorEstimate, ModePath};
pub use dynkin::{validate_dynkin, DynkinReport};
pub use rng::{fill_normals, PathStreams};

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{stationary_distribution, ClosedLoop, GainSet, Generator, PemAdm};

/// A path is abandoned once `‖x‖` exceeds this.
pub const DIVERGENCE_NORM: f64 = 1e9;
const CHUNK: usize = 32;

/// A switched stochastic system the integrator can step.
///
/// One step over `[t, t + h)` in mode `mode` first asks for the measured
/// output and control (`signals`) and then advances the state (`advance`).
/// `xi` holds `noise_dim` fresh standard normals for the step.
pub trait JumpSystem: Sync {
    fn generator(&self) -> &Generator;
    fn state_dim(&self) -> usize;
    fn noise_dim(&self) -> usize;
    fn output_dim(&self) -> usize {
        0
    }
    fn input_dim(&self) -> usize {
        0
    }
    #[allow(clippy::too_many_arguments)]
    fn signals(
        &self,
        _t: f64,
        _h: f64,
        _mode: usize,
        _x: &[f64],
        _xi: &[f64],
        _y: &mut [f64],
        _u: &mut [f64],
    ) {
    }
    #[allow(clippy::too_many_arguments)]
    fn advance(
        &self,
        t: f64,
        h: f64,
        mode: usize,
        x: &mut [f64],
        u: &[f64],
        xi: &[f64],
        scratch: &mut [f64],
    );
    /// Names of extra scalar series recorded alongside the state.
    fn observable_names(&self) -> Vec<String> {
        Vec::new()
    }
    fn observe(&self, _t: f64, _x: &[f64], _out: &mut [f64]) {}
    /// Failure predicate checked at every grid time.
    fn collided(&self, _t: f64, _x: &[f64]) -> bool {
        false
    }
}

/// `out += scale · M v` for column-major `M`.
fn gemv_add(out: &mut [f64], m: &DMatrix<f64>, v: &[f64], scale: f64) {
    for (c, &vc) in v.iter().enumerate() {
        let s = vc * scale;
        if s == 0.0 {
            continue;
        }
        for (o, &mrc) in out.iter_mut().zip(m.column(c).iter()) {
            *o += mrc * s;
        }
    }
}

/// `dx = A_cl(r) x dt + W(r) dw`.
impl JumpSystem for ClosedLoop {
    fn generator(&self) -> &Generator {
        &self.generator
    }
    fn state_dim(&self) -> usize {
        ClosedLoop::state_dim(self)
    }
    fn noise_dim(&self) -> usize {
        ClosedLoop::noise_dim(self)
    }
    fn advance(
        &self,
        _t: f64,
        h: f64,
        mode: usize,
        x: &mut [f64],
        _u: &[f64],
        xi: &[f64],
        scratch: &mut [f64],
    ) {
        scratch.fill(0.0);
        gemv_add(scratch, &self.a_cl[mode], x, h);
        gemv_add(scratch, &self.w[mode], xi, h.sqrt());
        for (xv, d) in x.iter_mut().zip(scratch.iter()) {
            *xv += d;
        }
    }
}

/// Control law acting on the sampled measurement.
pub trait Controller: Sync {
    fn control(&self, t: f64, mode: usize, y: &[f64], u: &mut [f64]);
}

impl Controller for GainSet {
    fn control(&self, _t: f64, mode: usize, y: &[f64], u: &mut [f64]) {
        u.fill(0.0);
        gemv_add(u, &self.gains[mode], y, 1.0);
    }
}

/// Open-loop model plus controller. Over a step of length `h` the sampled
/// output is `y = C x + D ξ/√h`, the control `u` is held and
/// `x ← x + (A x + B u + e(t)) h` with an optional exogenous drift `e`.
/// For a linear gain this is the closed-loop Euler–Maruyama step exactly.
/// Time-dependent drift added to the state derivative.
pub type Exogenous<'a> = &'a (dyn Fn(f64, &mut [f64]) + Sync);

pub struct FeedbackLoop<'a, C: Controller> {
    pub model: &'a PemAdm,
    pub controller: C,
    pub exogenous: Option<Exogenous<'a>>,
}

impl<C: Controller> JumpSystem for FeedbackLoop<'_, C> {
    fn generator(&self) -> &Generator {
        &self.model.generator
    }
    fn state_dim(&self) -> usize {
        self.model.state_dim
    }
    fn noise_dim(&self) -> usize {
        self.model.output_dim
    }
    fn output_dim(&self) -> usize {
        self.model.output_dim
    }
    fn input_dim(&self) -> usize {
        self.model.input_dim
    }
    fn signals(
        &self,
        t: f64,
        h: f64,
        mode: usize,
        x: &[f64],
        xi: &[f64],
        y: &mut [f64],
        u: &mut [f64],
    ) {
        let m = &self.model.modes[mode];
        y.fill(0.0);
        gemv_add(y, &m.c, x, 1.0);
        gemv_add(y, &m.d, xi, 1.0 / h.sqrt());
        self.controller.control(t, mode, y, u);
    }
    fn advance(
        &self,
        t: f64,
        h: f64,
        mode: usize,
        x: &mut [f64],
        u: &[f64],
        _xi: &[f64],
        scratch: &mut [f64],
    ) {
        let m = &self.model.modes[mode];
        scratch.fill(0.0);
        gemv_add(scratch, &m.a, x, 1.0);
        gemv_add(scratch, &m.b, u, 1.0);
        if let Some(e) = self.exogenous {
            e(t, scratch);
        }
        for (xv, d) in x.iter_mut().zip(scratch.iter()) {
            *xv += d * h;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub seed: u64,
    pub record_stride: usize,
    /// Fixed initial mode; `None` draws it from the stationary distribution.
    pub initial_mode: Option<usize>,
    /// Window `[t0, t1]` for per-path time-averaged `xᵀx`.
    pub tail_window: Option<[f64; 2]>,
    /// Number of leading paths returned in full.
    pub keep_paths: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            horizon: 10.0,
            n_paths: 500,
            seed: 1,
            record_stride: 10,
            initial_mode: None,
            tail_window: None,
            keep_paths: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidOption(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return bad(format!("horizon must be positive, got {}", self.horizon));
        }
        if self.dt > self.horizon {
            return bad(format!(
                "dt ({}) exceeds horizon ({})",
                self.dt, self.horizon
            ));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if let Some([t0, t1]) = self.tail_window {
            if !(0.0 <= t0 && t0 <= t1 && t1 <= self.horizon + 0.5 * self.dt) {
                return bad(format!(
                    "tail window [{t0}, {t1}] must lie inside [0, horizon]"
                ));
            }
        }
        Ok(())
    }

    /// Grid steps; the horizon is rounded to the nearest grid point.
    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round().max(1.0) as usize
    }

    pub fn n_records(&self) -> usize {
        self.n_steps() / self.record_stride + 1
    }

    pub fn record_times(&self) -> Vec<f64> {
        (0..self.n_records())
            .map(|k| (k * self.record_stride) as f64 * self.dt)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialMode {
    Fixed(usize),
    Distribution(Vec<f64>),
}

impl InitialMode {
    pub fn resolve(gen: &Generator, fixed: Option<usize>) -> Result<Self> {
        match fixed {
            Some(m) if m < gen.n_modes() => Ok(InitialMode::Fixed(m)),
            Some(m) => Err(Error::InvalidOption(format!(
                "initial mode {} outside 1..={}",
                m + 1,
                gen.n_modes()
            ))),
            None => Ok(InitialMode::Distribution(stationary_distribution(gen)?)),
        }
    }
}

/// One recorded instant of a path.
#[derive(Debug, Clone, Copy)]
pub struct RecordView<'a> {
    pub index: usize,
    pub t: f64,
    pub mode: usize,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub u: &'a [f64],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathOutcome {
    pub mode_path: ModePath,
    pub diverged_at: Option<f64>,
    pub collided_at: Option<f64>,
}

/// Integrate one path, calling `visit` at every recorded grid time. The
/// measurement and control reported at a record are those applied over the
/// step that starts there; at the final time they are sampled with `h = dt`.
pub fn simulate_path<S: JumpSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    init: &InitialMode,
    cfg: &SimConfig,
    streams: &mut PathStreams,
    mut visit: impl FnMut(&RecordView),
) -> PathOutcome {
    let n_steps = cfg.n_steps();
    let dt = cfg.dt;
    let horizon = n_steps as f64 * dt;
    let r0 = match init {
        InitialMode::Fixed(m) => *m,
        InitialMode::Distribution(p) => sample_discrete(p, &mut streams.modes),
    };
    let mode_path = sample_ctmc(sys.generator(), r0, horizon, &mut streams.modes);
    let mut x = x0.to_vec();
    let mut scratch = vec![0.0; x.len()];
    let mut xi = vec![0.0; sys.noise_dim()];
    let mut y = vec![0.0; sys.output_dim()];
    let mut u = vec![0.0; sys.input_dim()];
    let mut next_jump = 0;
    let mut mode = r0;
    let mut diverged_at = None;
    let mut collided_at = if sys.collided(0.0, &x) {
        Some(0.0)
    } else {
        None
    };

    for k in 0..n_steps {
        let t_start = k as f64 * dt;
        let t_end = (k + 1) as f64 * dt;
        let mut cur = t_start;
        let mut first = true;
        while cur < t_end {
            while next_jump < mode_path.jump_times.len() && mode_path.jump_times[next_jump] <= cur {
                next_jump += 1;
                mode = mode_path.modes[next_jump];
            }
            let seg_end = match mode_path.jump_times.get(next_jump) {
                Some(&tj) if tj < t_end => tj,
                _ => t_end,
            };
            let h = seg_end - cur;
            fill_normals(&mut streams.noise, &mut xi);
            sys.signals(cur, h, mode, &x, &xi, &mut y, &mut u);
            if first && k % cfg.record_stride == 0 {
                visit(&RecordView {
                    index: k / cfg.record_stride,
                    t: t_start,
                    mode,
                    x: &x,
                    y: &y,
                    u: &u,
                });
            }
            first = false;
            sys.advance(cur, h, mode, &mut x, &u, &xi, &mut scratch);
            cur = seg_end;
        }
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        if !(norm2 <= DIVERGENCE_NORM * DIVERGENCE_NORM) {
            diverged_at = Some(t_end);
            break;
        }
        if collided_at.is_none() && sys.collided(t_end, &x) {
            collided_at = Some(t_end);
        }
    }
    if diverged_at.is_none() && n_steps.is_multiple_of(cfg.record_stride) {
        while next_jump < mode_path.jump_times.len() && mode_path.jump_times[next_jump] <= horizon {
            next_jump += 1;
            mode = mode_path.modes[next_jump];
        }
        fill_normals(&mut streams.noise, &mut xi);
        sys.signals(horizon, dt, mode, &x, &xi, &mut y, &mut u);
        visit(&RecordView {
            index: n_steps / cfg.record_stride,
            t: horizon,
            mode,
            x: &x,
            y: &y,
            u: &u,
        });
    }
    PathOutcome {
        mode_path,
        diverged_at,
        collided_at,
    }
}

/// A fully recorded path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectorySample {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub modes: Vec<usize>,
    /// Empty vectors for systems without a measurement model.
    pub measurements: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
    pub observables: Vec<Vec<f64>>,
    pub mode_path: ModePath,
    pub diverged_at: Option<f64>,
    pub collided_at: Option<f64>,
}

/// Integrate path number `path` of the ensemble described by `cfg`.
pub fn integrate_path<S: JumpSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    cfg: &SimConfig,
    path: u64,
) -> Result<TrajectorySample> {
    cfg.validate()?;
    check_x0(sys, x0)?;
    let init = InitialMode::resolve(sys.generator(), cfg.initial_mode)?;
    Ok(record_path(sys, x0, &init, cfg, path))
}

fn record_path<S: JumpSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    init: &InitialMode,
    cfg: &SimConfig,
    path: u64,
) -> TrajectorySample {
    let mut streams = PathStreams::new(cfg.seed, path);
    let n_obs = sys.observable_names().len();
    let mut s = TrajectorySample {
        times: vec![],
        states: vec![],
        modes: vec![],
        measurements: vec![],
        controls: vec![],
        observables: vec![],
        mode_path: ModePath {
            jump_times: vec![],
            modes: vec![],
            horizon: 0.0,
        },
        diverged_at: None,
        collided_at: None,
    };
    let out = simulate_path(sys, x0, init, cfg, &mut streams, |r| {
        s.times.push(r.t);
        s.states.push(r.x.to_vec());
        s.modes.push(r.mode);
        s.measurements.push(r.y.to_vec());
        s.controls.push(r.u.to_vec());
        let mut o = vec![0.0; n_obs];
        sys.observe(r.t, r.x, &mut o);
        s.observables.push(o);
    });
    s.mode_path = out.mode_path;
    s.diverged_at = out.diverged_at;
    s.collided_at = out.collided_at;
    s
}

fn check_x0<S: JumpSystem + ?Sized>(sys: &S, x0: &[f64]) -> Result<()> {
    if x0.len() != sys.state_dim() {
        return Err(Error::InvalidOption(format!(
            "initial state has {} entries, state dimension is {}",
            x0.len(),
            sys.state_dim()
        )));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidOption("initial state is not finite".into()));
    }
    Ok(())
}

/// Per-path summary kept for every path of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSummary {
    pub n_jumps: usize,
    pub initial_mode: usize,
    pub diverged_at: Option<f64>,
    pub collided_at: Option<f64>,
    /// Time average of `xᵀx` over the tail window, if one was requested.
    pub tail_mean_sq: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailStats {
    pub window: [f64; 2],
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean_state: Vec<Vec<f64>>,
    pub std_state: Vec<Vec<f64>>,
    pub mean_sq: Vec<f64>,
    pub stderr_mean_sq: Vec<f64>,
    pub mean_control: Vec<Vec<f64>>,
    pub std_control: Vec<Vec<f64>>,
    pub observable_names: Vec<String>,
    pub mean_observables: Vec<Vec<f64>>,
    pub std_observables: Vec<Vec<f64>>,
    /// Fraction of moment-statistics paths in each mode.
    pub mode_fraction: Vec<Vec<f64>>,
    pub n_paths: usize,
    /// Paths entering the moment statistics (divergent ones excluded).
    pub n_valid: usize,
    pub collision_fraction: f64,
    pub divergence_fraction: f64,
    pub tail: Option<TailStats>,
    pub paths: Vec<PathSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ensemble {
    pub stats: EnsembleStats,
    pub samples: Vec<TrajectorySample>,
}

/// Running mean and centered sum of squares, merged pairwise.
#[derive(Debug, Clone)]
struct Moments {
    count: f64,
    mean: Vec<f64>,
    m2: Vec<f64>,
    mode_counts: Vec<f64>,
    tail: (f64, f64, f64),
}

impl Moments {
    fn new(len: usize, n_mode_cells: usize) -> Self {
        Moments {
            count: 0.0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
            mode_counts: vec![0.0; n_mode_cells],
            tail: (0.0, 0.0, 0.0),
        }
    }

    #[cfg(test)]
    fn add(&mut self, row: &[f64]) {
        self.count += 1.0;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(row) {
            let d = v - *m;
            *m += d / self.count;
            *s += d * (v - *m);
        }
    }

    fn add_tail(&mut self, v: f64) {
        let (n, mean, m2) = &mut self.tail;
        *n += 1.0;
        let d = v - *mean;
        *mean += d / *n;
        *m2 += d * (v - *mean);
    }

    fn merge(&mut self, other: &Moments) {
        let (na, nb) = (self.count, other.count);
        let n = na + nb;
        if nb > 0.0 {
            for i in 0..self.mean.len() {
                let d = other.mean[i] - self.mean[i];
                self.mean[i] += d * nb / n;
                self.m2[i] += other.m2[i] + d * d * na * nb / n;
            }
            self.count = n;
        }
        for (a, b) in self.mode_counts.iter_mut().zip(&other.mode_counts) {
            *a += b;
        }
        let (na, ma, sa) = self.tail;
        let (nb, mb, sb) = other.tail;
        if nb > 0.0 {
            let n = na + nb;
            let d = mb - ma;
            self.tail = (n, ma + d * nb / n, sa + sb + d * d * na * nb / n);
        }
    }

    fn std(&self, i: usize) -> f64 {
        if self.count > 1.0 {
            (self.m2[i] / (self.count - 1.0)).max(0.0).sqrt()
        } else {
            0.0
        }
    }
}

struct ChunkOut {
    moments: Moments,
    summaries: Vec<PathSummary>,
    samples: Vec<TrajectorySample>,
}

/// Run `cfg.n_paths` independent paths and reduce their statistics.
pub fn run_ensemble<S: JumpSystem + ?Sized>(
    sys: &S,
    x0: &[f64],
    cfg: &SimConfig,
) -> Result<Ensemble> {
    cfg.validate()?;
    check_x0(sys, x0)?;
    let init = InitialMode::resolve(sys.generator(), cfg.initial_mode)?;
    let n = sys.state_dim();
    let m = sys.input_dim();
    let names = sys.observable_names();
    let e = names.len();
    let n_modes = sys.generator().n_modes();
    let n_rec = cfg.n_records();
    let times = cfg.record_times();
    // Row layout per record: x (n), u (m), observables (e), xᵀx.
    let width = n + m + e + 1;

    let n_chunks = cfg.n_paths.div_ceil(CHUNK);
    let chunks: Vec<ChunkOut> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut moments = Moments::new(n_rec * width, n_rec * n_modes);
            let mut summaries = Vec::new();
            let mut samples = Vec::new();
            let mut buf = vec![0.0; n_rec * width];
            let mut modes = vec![0usize; n_rec];
            let mut obs = vec![0.0; e];
            let lo = c * CHUNK;
            let hi = ((c + 1) * CHUNK).min(cfg.n_paths);
            for path in lo..hi {
                if path < cfg.keep_paths {
                    samples.push(record_path(sys, x0, &init, cfg, path as u64));
                }
                let mut streams = PathStreams::new(cfg.seed, path as u64);
                let mut recorded = 0;
                let out = simulate_path(sys, x0, &init, cfg, &mut streams, |r| {
                    let row = &mut buf[r.index * width..(r.index + 1) * width];
                    row[..n].copy_from_slice(r.x);
                    row[n..n + m].copy_from_slice(r.u);
                    sys.observe(r.t, r.x, &mut obs);
                    row[n + m..n + m + e].copy_from_slice(&obs);
                    row[width - 1] = r.x.iter().map(|v| v * v).sum();
                    modes[r.index] = r.mode;
                    recorded += 1;
                });
                let mut tail_mean_sq = None;
                if out.diverged_at.is_none() && recorded == n_rec {
                    for k in 0..n_rec {
                        moments.add_row_at(k, width, &buf[k * width..(k + 1) * width]);
                        moments.mode_counts[k * n_modes + modes[k]] += 1.0;
                    }
                    moments.count += 1.0;
                    if let Some([t0, t1]) = cfg.tail_window {
                        let (sum, cnt) = times
                            .iter()
                            .enumerate()
                            .filter(|(_, &t)| t >= t0 - 1e-12 && t <= t1 + 1e-12)
                            .fold((0.0, 0.0), |(s, c), (k, _)| {
                                (s + buf[k * width + width - 1], c + 1.0)
                            });
                        if cnt > 0.0 {
                            let v = sum / cnt;
                            moments.add_tail(v);
                            tail_mean_sq = Some(v);
                        }
                    }
                }
                summaries.push(PathSummary {
                    n_jumps: out.mode_path.n_jumps(),
                    initial_mode: out.mode_path.modes[0],
                    diverged_at: out.diverged_at,
                    collided_at: out.collided_at,
                    tail_mean_sq,
                });
            }
            ChunkOut {
                moments,
                summaries,
                samples,
            }
        })
        .collect();

    let mut total = Moments::new(n_rec * width, n_rec * n_modes);
    let mut paths = Vec::with_capacity(cfg.n_paths);
    let mut samples = Vec::new();
    for ch in chunks {
        total.merge(&ch.moments);
        paths.extend(ch.summaries);
        samples.extend(ch.samples);
    }

    let n_valid = total.count as usize;
    let n_div = paths.iter().filter(|p| p.diverged_at.is_some()).count();
    let n_col = paths.iter().filter(|p| p.collided_at.is_some()).count();
    if n_div > 0 {
        warn!(
            "{n_div} of {} paths diverged and were excluded from moment statistics",
            cfg.n_paths
        );
    }
    let cnt = total.count;
    let slice = |k: usize, a: usize, b: usize, f: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (a..b).map(|j| f(k * width + j)).collect()
    };
    let mean = |i: usize| if cnt > 0.0 { total.mean[i] } else { f64::NAN };
    let std = |i: usize| if cnt > 0.0 { total.std(i) } else { f64::NAN };
    let stats = EnsembleStats {
        mean_state: (0..n_rec).map(|k| slice(k, 0, n, &mean)).collect(),
        std_state: (0..n_rec).map(|k| slice(k, 0, n, &std)).collect(),
        mean_control: (0..n_rec).map(|k| slice(k, n, n + m, &mean)).collect(),
        std_control: (0..n_rec).map(|k| slice(k, n, n + m, &std)).collect(),
        mean_observables: (0..n_rec)
            .map(|k| slice(k, n + m, n + m + e, &mean))
            .collect(),
        std_observables: (0..n_rec)
            .map(|k| slice(k, n + m, n + m + e, &std))
            .collect(),
        mean_sq: (0..n_rec).map(|k| mean(k * width + width - 1)).collect(),
        stderr_mean_sq: (0..n_rec)
            .map(|k| std(k * width + width - 1) / cnt.max(1.0).sqrt())
            .collect(),
        mode_fraction: (0..n_rec)
            .map(|k| {
                (0..n_modes)
                    .map(|j| total.mode_counts[k * n_modes + j] / cnt.max(1.0))
                    .collect()
            })
            .collect(),
        observable_names: names,
        n_paths: cfg.n_paths,
        n_valid,
        collision_fraction: n_col as f64 / cfg.n_paths as f64,
        divergence_fraction: n_div as f64 / cfg.n_paths as f64,
        tail: cfg.tail_window.filter(|_| total.tail.0 > 0.0).map(|w| {
            let (tn, tm, ts) = total.tail;
            let sd = if tn > 1.0 {
                (ts / (tn - 1.0)).sqrt()
            } else {
                0.0
            };
            TailStats {
                window: w,
                mean: tm,
                stderr: sd / tn.sqrt(),
            }
        }),
        times,
        paths,
    };
    Ok(Ensemble { stats, samples })
}

impl Moments {
    /// Welford update of one record row; `count` is bumped by the caller
    /// once per path, so use the prospective count here.
    fn add_row_at(&mut self, k: usize, width: usize, row: &[f64]) {
        let n = self.count + 1.0;
        let base = k * width;
        for (j, &v) in row.iter().enumerate() {
            let m = &mut self.mean[base + j];
            let d = v - *m;
            *m += d / n;
            self.m2[base + j] += d * (v - *m);
        }
    }
}

/// Run `f` for paths `0..n_paths` in parallel, returning results in path order.
pub fn map_paths<T: Send>(n_paths: usize, f: impl Fn(u64) -> T + Sync + Send) -> Vec<T> {
    (0..n_paths as u64).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ou_cfg(n_paths: usize) -> SimConfig {
        SimConfig {
            dt: 1e-2,
            horizon: 1.0,
            n_paths,
            seed: 5,
            record_stride: 5,
            ..Default::default()
        }
    }

    #[test]
    fn single_path_ensemble_has_zero_spread() {
        let cl = ClosedLoop::scalar(-1.0, 1.0);
        let ens = run_ensemble(&cl, &[1.0], &ou_cfg(1)).unwrap();
        let path = integrate_path(&cl, &[1.0], &ou_cfg(1), 0).unwrap();
        assert_eq!(ens.stats.times, path.times);
        for (k, s) in path.states.iter().enumerate() {
            assert_eq!(ens.stats.mean_state[k][0], s[0]);
            assert_eq!(ens.stats.std_state[k][0], 0.0);
            assert_eq!(ens.stats.mean_sq[k], s[0] * s[0]);
        }
    }

    #[test]
    fn ensemble_is_deterministic() {
        let cl = ClosedLoop::scalar(-1.0, 1.0);
        let a = run_ensemble(&cl, &[1.0], &ou_cfg(100)).unwrap();
        let b = run_ensemble(&cl, &[1.0], &ou_cfg(100)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn record_grid() {
        let cfg = ou_cfg(1);
        assert_eq!(cfg.n_steps(), 100);
        assert_eq!(cfg.n_records(), 21);
        let t = cfg.record_times();
        assert_eq!(t[0], 0.0);
        assert!((t[20] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ou_cfg(1);
        cfg.dt = 2.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ou_cfg(0);
        assert!(cfg.validate().is_err());
        cfg.n_paths = 1;
        cfg.tail_window = Some([0.5, 2.0]);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn unstable_path_flags_divergence() {
        let cl = ClosedLoop::scalar(50.0, 0.0);
        let cfg = SimConfig {
            dt: 1e-2,
            horizon: 10.0,
            n_paths: 3,
            record_stride: 1,
            ..Default::default()
        };
        let ens = run_ensemble(&cl, &[1.0], &cfg).unwrap();
        assert_eq!(ens.stats.divergence_fraction, 1.0);
        assert_eq!(ens.stats.n_valid, 0);
        assert!(ens.stats.paths[0].diverged_at.unwrap() < 1.0);
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let rows: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, (i * i) as f64 * 0.5]).collect();
        let mut all = Moments::new(2, 0);
        rows.iter().for_each(|r| all.add(r));
        let mut a = Moments::new(2, 0);
        let mut b = Moments::new(2, 0);
        rows[..3].iter().for_each(|r| a.add(r));
        rows[3..].iter().for_each(|r| b.add(r));
        a.merge(&b);
        for i in 0..2 {
            assert!((a.mean[i] - all.mean[i]).abs() < 1e-12);
            assert!((a.std(i) - all.std(i)).abs() < 1e-12);
        }
    }
}
