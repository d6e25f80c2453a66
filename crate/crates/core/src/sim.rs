//! Monte Carlo estimates of the index of dispersion.
//!
//! The chain is simulated through its jump chain: in state `i` it holds for
//! an `Exp(lambda_i + mu_i)` time, then moves up with probability
//! `lambda_i / (lambda_i + mu_i)`. The move is counted with probability
//! `q+_i` or `q-_i` of the state it leaves. Every transition draws exactly
//! one thinning uniform, even when the probability is 0 or 1, so runs that
//! differ only in `q` see the same path.
//!
//! Random streams are ChaCha8 keyed by the seed with one stream per
//! replication (cycle group), so results do not depend on thread count.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BDModel;
use crate::oracle::renewal_reward_index;
use crate::stationary::stationary_distribution;

/// Cycle groups behind the regenerative standard error.
pub const JACKKNIFE_GROUPS: usize = 50;
pub const MIN_CYCLES: u64 = 100;
pub const MIN_BATCHES: usize = 10;
/// Fraction of the horizon always discarded by batch means.
pub const WARMUP_FRACTION: f64 = 0.05;
/// Expected regeneration cycles the batch-means warmup covers at least.
pub const WARMUP_CYCLES: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMethod {
    Regenerative { cycles: u64 },
    BatchMeans { horizon: f64, batch_count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Zero,
    /// `Q(0)` drawn from the stationary distribution.
    Stationary,
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub seed: u64,
    pub method: SimMethod,
    pub initial_state: InitialState,
}

impl SimConfig {
    pub fn regenerative(seed: u64, cycles: u64) -> Self {
        Self {
            seed,
            method: SimMethod::Regenerative { cycles },
            initial_state: InitialState::Zero,
        }
    }

    pub fn batch_means(seed: u64, horizon: f64, batch_count: usize) -> Self {
        Self {
            seed,
            method: SimMethod::BatchMeans { horizon, batch_count },
            initial_state: InitialState::Zero,
        }
    }

    pub fn with_initial_state(mut self, initial_state: InitialState) -> Self {
        self.initial_state = initial_state;
        self
    }

    pub fn validate(&self, model: &BDModel) -> Result<()> {
        match self.method {
            SimMethod::Regenerative { cycles } if cycles < MIN_CYCLES => {
                return Err(Error::InvalidConfig(format!(
                    "need at least {MIN_CYCLES} cycles, got {cycles}"
                )));
            }
            SimMethod::BatchMeans { horizon, .. } if !(horizon > 0.0 && horizon.is_finite()) => {
                return Err(Error::InvalidConfig(format!(
                    "horizon must be positive and finite, got {horizon}"
                )));
            }
            SimMethod::BatchMeans { batch_count, .. } if batch_count < MIN_BATCHES => {
                return Err(Error::InvalidConfig(format!(
                    "need at least {MIN_BATCHES} batches, got {batch_count}"
                )));
            }
            _ => {}
        }
        if let InitialState::Fixed(i) = self.initial_state {
            if i > model.j() {
                return Err(Error::InvalidConfig(format!(
                    "initial state {i} outside 0..={}",
                    model.j()
                )));
            }
        }
        Ok(())
    }
}

/// Sample means of the cycle quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMoments {
    pub x: f64,
    pub y: f64,
    pub x2: f64,
    pub xy: f64,
    pub y2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchDiagnostics {
    /// Discarded initial time.
    pub warmup: f64,
    pub batch_length: f64,
    /// Lag-1 autocorrelation of the batch counts; large values mean the
    /// batches are too short for the variance estimate.
    pub lag1_autocorrelation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimEstimate {
    pub d_hat: f64,
    pub std_err: f64,
    pub mean_rate_hat: f64,
    pub rate_std_err: f64,
    pub cycles_or_batches: u64,
    /// Regenerative runs only.
    pub raw_moments: Option<RawMoments>,
    /// Batch-means runs only.
    pub diagnostics: Option<BatchDiagnostics>,
    pub seed: u64,
}

struct Jump {
    holding: f64,
    birth: bool,
    counted: bool,
}

struct Path<'a> {
    lambda: &'a [f64],
    q_plus: &'a [f64],
    q_minus: &'a [f64],
    total: Vec<f64>,
    state: usize,
    rng: ChaCha8Rng,
}

impl<'a> Path<'a> {
    fn new(model: &'a BDModel, seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self {
            lambda: model.lambda(),
            q_plus: model.q_plus(),
            q_minus: model.q_minus(),
            total: (0..=model.j()).map(|i| model.total_rate(i)).collect(),
            state: 0,
            rng,
        }
    }

    fn start(&mut self, initial: InitialState, pi: Option<&[f64]>) -> Result<()> {
        self.state = match initial {
            InitialState::Zero => 0,
            InitialState::Fixed(i) => i,
            InitialState::Stationary => {
                let pi = pi.expect("stationary start needs pi");
                let dist = WeightedIndex::new(pi).map_err(|e| Error::InvalidConfig(e.to_string()))?;
                dist.sample(&mut self.rng)
            }
        };
        Ok(())
    }

    fn step(&mut self) -> Jump {
        let i = self.state;
        let r = self.total[i];
        let holding = self.rng.sample::<f64, _>(Exp1) / r;
        let birth = self.rng.random::<f64>() * r < self.lambda[i];
        let u = self.rng.random::<f64>();
        let counted = u < if birth { self.q_plus[i] } else { self.q_minus[i] };
        self.state = if birth { i + 1 } else { i - 1 };
        Jump {
            holding,
            birth,
            counted,
        }
    }

    /// Runs until the chain sits in state 0.
    fn settle(&mut self) {
        while self.state != 0 {
            self.step();
        }
    }

    /// One regeneration cycle from state 0: the idle period, the exit, and
    /// the busy period back to 0. Returns `(X, Y)`.
    fn cycle(&mut self, mut tally: Option<&mut CycleRecord>) -> (f64, u64) {
        debug_assert_eq!(self.state, 0);
        let (mut x, mut y) = (0.0, 0u64);
        loop {
            let from = self.state;
            let jump = self.step();
            x += jump.holding;
            y += jump.counted as u64;
            if let Some(t) = tally.as_deref_mut() {
                if jump.birth {
                    t.births[from] += 1;
                } else {
                    t.deaths[from] += 1;
                }
            }
            if self.state == 0 {
                return (x, y);
            }
        }
    }
}

/// One simulated cycle with its transition counts by state of origin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CycleRecord {
    pub x: f64,
    pub y: u64,
    pub births: Vec<u64>,
    pub deaths: Vec<u64>,
}

/// `n` consecutive cycles of one stream, with per-state transition counts.
pub fn sample_cycles(model: &BDModel, seed: u64, n: usize) -> Vec<CycleRecord> {
    let mut path = Path::new(model, seed, 0);
    let states = model.j() + 1;
    (0..n)
        .map(|_| {
            let mut rec = CycleRecord {
                x: 0.0,
                y: 0,
                births: vec![0; states],
                deaths: vec![0; states],
            };
            let (x, y) = path.cycle(Some(&mut rec));
            rec.x = x;
            rec.y = y;
            rec
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    n: f64,
    x: f64,
    y: f64,
    xx: f64,
    xy: f64,
    yy: f64,
}

impl Sums {
    fn push(&mut self, x: f64, y: f64) {
        self.n += 1.0;
        self.x += x;
        self.y += y;
        self.xx += x * x;
        self.xy += x * y;
        self.yy += y * y;
    }

    fn minus(&self, o: &Sums) -> Sums {
        Sums {
            n: self.n - o.n,
            x: self.x - o.x,
            y: self.y - o.y,
            xx: self.xx - o.xx,
            xy: self.xy - o.xy,
            yy: self.yy - o.yy,
        }
    }

    fn plus(&self, o: &Sums) -> Sums {
        Sums {
            n: self.n + o.n,
            x: self.x + o.x,
            y: self.y + o.y,
            xx: self.xx + o.xx,
            xy: self.xy + o.xy,
            yy: self.yy + o.yy,
        }
    }

    fn moments(&self) -> RawMoments {
        RawMoments {
            x: self.x / self.n,
            y: self.y / self.n,
            x2: self.xx / self.n,
            xy: self.xy / self.n,
            y2: self.yy / self.n,
        }
    }

    fn index(&self) -> f64 {
        let m = self.moments();
        renewal_reward_index(m.x, m.y, m.x2, m.xy, m.y2)
    }

    fn rate(&self) -> f64 {
        self.y / self.x
    }
}

/// Jackknife standard error from leave-one-out estimates.
fn jackknife(loo: &[f64]) -> f64 {
    let g = loo.len() as f64;
    let mean = loo.iter().sum::<f64>() / g;
    ((g - 1.0) / g * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
}

fn stationary_pi(model: &BDModel, initial: InitialState) -> Result<Option<Vec<f64>>> {
    Ok(match initial {
        InitialState::Stationary => Some(stationary_distribution(model)?.pi),
        _ => None,
    })
}

/// Regenerative estimate: cycles between exits from state 0, split into
/// [`JACKKNIFE_GROUPS`] independent streams.
pub fn simulate_cycles(model: &BDModel, config: &SimConfig) -> Result<SimEstimate> {
    config.validate(model)?;
    let SimMethod::Regenerative { cycles } = config.method else {
        return Err(Error::InvalidConfig(
            "simulate_cycles needs the regenerative method".into(),
        ));
    };
    let pi = stationary_pi(model, config.initial_state)?;
    let groups = JACKKNIFE_GROUPS as u64;
    let per_group = |g: u64| cycles / groups + u64::from(g < cycles % groups);

    let sums: Vec<Sums> = (0..groups)
        .into_par_iter()
        .map(|g| -> Result<Sums> {
            let mut path = Path::new(model, config.seed, g);
            path.start(config.initial_state, pi.as_deref())?;
            path.settle();
            let mut s = Sums::default();
            for _ in 0..per_group(g) {
                let (x, y) = path.cycle(None);
                s.push(x, y as f64);
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;

    let total = sums.iter().fold(Sums::default(), |a, b| a.plus(b));
    let loo_d: Vec<f64> = sums.iter().map(|s| total.minus(s).index()).collect();
    let loo_rate: Vec<f64> = sums.iter().map(|s| total.minus(s).rate()).collect();
    Ok(SimEstimate {
        d_hat: total.index(),
        std_err: jackknife(&loo_d),
        mean_rate_hat: total.rate(),
        rate_std_err: jackknife(&loo_rate),
        cycles_or_batches: cycles,
        raw_moments: Some(total.moments()),
        diagnostics: None,
        seed: config.seed,
    })
}

/// Warmup and equal batch windows of a batch-means run.
struct Windows {
    warmup: f64,
    horizon: f64,
    length: f64,
    count: usize,
}

impl Windows {
    fn new(model: &BDModel, horizon: f64, count: usize) -> Result<Self> {
        let pi0 = stationary_distribution(model)?.pi[0];
        let mean_cycle = 1.0 / (pi0 * model.lambda()[0]);
        let warmup = (WARMUP_FRACTION * horizon).max(WARMUP_CYCLES * mean_cycle);
        if warmup >= horizon {
            return Err(Error::InvalidConfig(format!(
                "horizon {horizon} does not exceed the warmup {warmup}"
            )));
        }
        Ok(Self {
            warmup,
            horizon,
            length: (horizon - warmup) / count as f64,
            count,
        })
    }

    fn batch_of(&self, t: f64) -> usize {
        (((t - self.warmup) / self.length) as usize).min(self.count - 1)
    }
}

fn lag1_autocorrelation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var: f64 = v.iter().map(|a| (a - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    v.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / var
}

fn sample_variance(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Batch-means estimate from one long path.
pub fn simulate_batches(model: &BDModel, config: &SimConfig) -> Result<SimEstimate> {
    config.validate(model)?;
    let SimMethod::BatchMeans { horizon, batch_count } = config.method else {
        return Err(Error::InvalidConfig(
            "simulate_batches needs the batch-means method".into(),
        ));
    };
    let win = Windows::new(model, horizon, batch_count)?;
    let pi = stationary_pi(model, config.initial_state)?;
    let mut path = Path::new(model, config.seed, 0);
    path.start(config.initial_state, pi.as_deref())?;

    let mut counts = vec![0.0; batch_count];
    let mut t = 0.0;
    loop {
        let jump = path.step();
        t += jump.holding;
        if t >= win.horizon {
            break;
        }
        if jump.counted && t >= win.warmup {
            counts[win.batch_of(t)] += 1.0;
        }
    }

    let (mean, var) = sample_variance(&counts);
    let d_hat = var / mean;
    // Batch counts over long windows are close to normal, so the sample
    // variance has relative standard error sqrt(2 / (B - 1)); a jackknife
    // over the batches comes out noticeably too small at B = 100.
    let std_err = d_hat * (2.0 / (batch_count as f64 - 1.0)).sqrt();
    let rate_std_err = (var / batch_count as f64).sqrt() / win.length;
    Ok(SimEstimate {
        d_hat,
        std_err,
        mean_rate_hat: mean / win.length,
        rate_std_err,
        cycles_or_batches: batch_count as u64,
        raw_moments: None,
        diagnostics: Some(BatchDiagnostics {
            warmup: win.warmup,
            batch_length: win.length,
            lag1_autocorrelation: lag1_autocorrelation(&counts),
        }),
        seed: config.seed,
    })
}

/// Dispatches on the configured method.
pub fn simulate(model: &BDModel, config: &SimConfig) -> Result<SimEstimate> {
    match config.method {
        SimMethod::Regenerative { .. } => simulate_cycles(model, config),
        SimMethod::BatchMeans { .. } => simulate_batches(model, config),
    }
}

/// Long-run fraction of time in each state, with batch-means standard
/// errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OccupancyEstimate {
    pub fraction: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Occupancy over the batch windows of a batch-means configuration.
pub fn estimate_occupancy(model: &BDModel, config: &SimConfig) -> Result<OccupancyEstimate> {
    config.validate(model)?;
    let SimMethod::BatchMeans { horizon, batch_count } = config.method else {
        return Err(Error::InvalidConfig("occupancy needs the batch-means method".into()));
    };
    let win = Windows::new(model, horizon, batch_count)?;
    let pi = stationary_pi(model, config.initial_state)?;
    let mut path = Path::new(model, config.seed, 0);
    path.start(config.initial_state, pi.as_deref())?;

    let states = model.j() + 1;
    let mut time = vec![vec![0.0; states]; batch_count];
    let mut t = 0.0;
    while t < win.horizon {
        let state = path.state;
        let end = (t + path.step().holding).min(win.horizon);
        // Spread [t, end) over the windows it overlaps.
        let mut a = t.max(win.warmup);
        while a < end {
            let b = win.batch_of(a);
            let window_end = if b + 1 == batch_count {
                win.horizon
            } else {
                win.warmup + (b + 1) as f64 * win.length
            };
            let stop = end.min(window_end);
            time[b][state] += stop - a;
            a = stop;
        }
        t = end;
    }

    let per_batch: Vec<Vec<f64>> = time
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            row.iter().map(|v| v / total).collect()
        })
        .collect();
    let n = batch_count as f64;
    let (fraction, std_err) = (0..states)
        .map(|s| {
            let col: Vec<f64> = per_batch.iter().map(|row| row[s]).collect();
            let (mean, var) = sample_variance(&col);
            (mean, (var / n).sqrt())
        })
        .unzip();
    Ok(OccupancyEstimate { fraction, std_err })
}
