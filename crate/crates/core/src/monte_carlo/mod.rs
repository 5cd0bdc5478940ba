//! Path-level simulation of the constrained game: Poisson signal streams,
//! embedded-chain diffusion sampling, payoff estimation, the two-colour
//! coupling check, and the saddle-point deviation battery.
//!
//! The diffusion is advanced only signal-to-signal using exact transitions,
//! so there is no time-discretization bias anywhere. Randomness comes from
//! counter-based per-path substreams (see [`rng`]), and accumulation is
//! chunked deterministically, so every estimate is bit-identical for any
//! worker count given the seed.

mod ks;
pub(crate) mod rng;
pub(crate) mod stats;

pub use ks::{kolmogorov_q, two_sample_ks};

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng as _;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ConstraintMode, GameSpec, Interval, IntervalUnion, Player, StoppingSets,
};
use rng::{exp_gap, PathStreams};
use stats::{accumulate, accumulate_moments, Moments};

/// Default horizon cap, in units of `1/r`: discounting makes the tail beyond
/// `20/r` contribute at most `e^{-20}` of the payoff scale.
pub const DEFAULT_CAP_OVER_R: f64 = 20.0;

const COUPLING_MAX_EVENTS: u32 = 4096;

/// Role of a signal stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalRole {
    /// One stream shared by both players (the common constraint).
    CommonBoth,
    /// The sup player's private stream.
    SupOnly,
    /// The inf player's private stream.
    InfOnly,
    /// Both private streams merged into one rate-`2 lambda` stream whose
    /// events carry independent fair colour marks.
    MergedTwoColor,
}

/// Who may act on a signal event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventOwner {
    Both,
    Sup,
    Inf,
}

/// One signal event.
#[derive(Debug, Clone, Copy)]
pub struct SignalEvent {
    pub time: f64,
    pub owner: EventOwner,
}

/// A reproducible Poisson signal stream; `rate` is the per-player rate
/// `lambda` regardless of role.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SignalStream {
    pub rate: f64,
    pub role: SignalRole,
    pub seed: u64,
}

impl SignalStream {
    pub fn new(rate: f64, role: SignalRole, seed: u64) -> Result<Self> {
        if !(rate > 0.0) {
            return Err(Error::InvalidParameters(format!(
                "signal rate must be positive, got {rate}"
            )));
        }
        Ok(Self { rate, role, seed })
    }

    /// Infinite event iterator for one path substream.
    pub fn events(&self, path: u64) -> SignalEvents {
        let base = rng::base_rng(self.seed);
        let streams = PathStreams::new(&base, path);
        SignalEvents {
            role: self.role,
            rate: self.rate,
            t: 0.0,
            gaps: match self.role {
                SignalRole::InfOnly => streams.secondary_gaps,
                _ => streams.primary_gaps,
            },
            colors: streams.colors,
        }
    }
}

pub struct SignalEvents {
    role: SignalRole,
    rate: f64,
    t: f64,
    gaps: ChaCha8Rng,
    colors: ChaCha8Rng,
}

impl Iterator for SignalEvents {
    type Item = SignalEvent;

    fn next(&mut self) -> Option<SignalEvent> {
        let (gap_rate, owner) = match self.role {
            SignalRole::CommonBoth => (self.rate, EventOwner::Both),
            SignalRole::SupOnly => (self.rate, EventOwner::Sup),
            SignalRole::InfOnly => (self.rate, EventOwner::Inf),
            SignalRole::MergedTwoColor => {
                let owner = if self.colors.gen::<bool>() {
                    EventOwner::Sup
                } else {
                    EventOwner::Inf
                };
                (2.0 * self.rate, owner)
            }
        };
        self.t += exp_gap(&mut self.gaps, gap_rate);
        Some(SignalEvent {
            time: self.t,
            owner,
        })
    }
}

/// Stop at the first own-role signal (counted from `start_index`) at which
/// the diffusion lies in `set`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HittingStrategy {
    pub player: Player,
    pub set: IntervalUnion,
    pub start_index: u32,
}

impl HittingStrategy {
    pub fn new(player: Player, set: IntervalUnion, start_index: u32) -> Result<Self> {
        if start_index == 0 {
            return Err(Error::InvalidParameters(
                "start_index counts signals from 1".into(),
            ));
        }
        Ok(Self {
            player,
            set,
            start_index,
        })
    }

    pub fn from_sets(sets: &StoppingSets) -> (Self, Self) {
        (
            Self {
                player: Player::Sup,
                set: sets.sup_set.clone(),
                start_index: 1,
            },
            Self {
                player: Player::Inf,
                set: sets.inf_set.clone(),
                start_index: 1,
            },
        )
    }
}

/// Monte Carlo estimate with its a priori horizon-truncation bias bound.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SimulationEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub seed: u64,
    pub horizon_cap: f64,
    pub truncation_bias: f64,
}

/// The embedded chain: diffusion states at successive signal events, up to a
/// horizon cap. Which stream produces the events depends on the kind.
enum ChainKind {
    /// One common stream of the game's rate.
    Single,
    /// Two private streams merged by event time.
    TwoStreams,
    /// One rate-`2 lambda` stream with fair colour marks.
    Merged,
}

struct ChainIter<'a> {
    game: &'a GameSpec,
    kind: ChainKind,
    streams: PathStreams,
    cap: f64,
    t: f64,
    x: f64,
    next_sup: f64,
    next_inf: f64,
}

impl<'a> ChainIter<'a> {
    fn new(game: &'a GameSpec, kind: ChainKind, base: &ChaCha8Rng, path: u64, x0: f64, cap: f64) -> Self {
        let mut streams = PathStreams::new(base, path);
        let (next_sup, next_inf) = if matches!(kind, ChainKind::TwoStreams) {
            (
                exp_gap(&mut streams.primary_gaps, game.signal_rate),
                exp_gap(&mut streams.secondary_gaps, game.signal_rate),
            )
        } else {
            (0.0, 0.0)
        };
        Self {
            game,
            kind,
            streams,
            cap,
            t: 0.0,
            x: x0,
            next_sup,
            next_inf,
        }
    }
}

impl Iterator for ChainIter<'_> {
    type Item = (f64, f64, EventOwner); // (time, state, owner)

    fn next(&mut self) -> Option<Self::Item> {
        let lambda = self.game.signal_rate;
        let (t_next, owner) = match self.kind {
            ChainKind::Single => (
                self.t + exp_gap(&mut self.streams.primary_gaps, lambda),
                EventOwner::Both,
            ),
            ChainKind::Merged => {
                let owner = if self.streams.colors.gen::<bool>() {
                    EventOwner::Sup
                } else {
                    EventOwner::Inf
                };
                (
                    self.t + exp_gap(&mut self.streams.primary_gaps, 2.0 * lambda),
                    owner,
                )
            }
            ChainKind::TwoStreams => {
                // exact ties have probability zero; resolve toward sup
                if self.next_sup <= self.next_inf {
                    (self.next_sup, EventOwner::Sup)
                } else {
                    (self.next_inf, EventOwner::Inf)
                }
            }
        };
        if t_next > self.cap {
            return None;
        }
        let z = self.streams.standard_normal();
        self.x = self.game.diffusion.transition(self.x, t_next - self.t, z);
        self.t = t_next;
        if let ChainKind::TwoStreams = self.kind {
            match owner {
                EventOwner::Sup => {
                    self.next_sup = self.t + exp_gap(&mut self.streams.primary_gaps, lambda)
                }
                EventOwner::Inf => {
                    self.next_inf = self.t + exp_gap(&mut self.streams.secondary_gaps, lambda)
                }
                EventOwner::Both => unreachable!(),
            }
        }
        Some((self.t, self.x, owner))
    }
}

/// Discounted payoff of one path for a strategy pair, walking the chain. The
/// sup player takes precedence on shared events.
fn payoff_on_chain<I: Iterator<Item = (f64, f64, EventOwner)>>(
    game: &GameSpec,
    chain: I,
    sup: &HittingStrategy,
    inf: &HittingStrategy,
) -> f64 {
    let mut n_sup = 0u32;
    let mut n_inf = 0u32;
    for (t, x, owner) in chain {
        let sup_turn = matches!(owner, EventOwner::Both | EventOwner::Sup);
        let inf_turn = matches!(owner, EventOwner::Both | EventOwner::Inf);
        if sup_turn {
            n_sup += 1;
            if n_sup >= sup.start_index && sup.set.contains(x) {
                return (-game.discount * t).exp() * game.lower.eval_clamped(x);
            }
        }
        if inf_turn {
            n_inf += 1;
            if n_inf >= inf.start_index && inf.set.contains(x) {
                return (-game.discount * t).exp() * game.upper.eval_clamped(x);
            }
        }
    }
    0.0 // horizon cap reached; terminal payoff is zero
}

fn chain_kind_for(mode: ConstraintMode) -> ChainKind {
    match mode {
        ConstraintMode::Common => ChainKind::Single,
        ConstraintMode::Independent => ChainKind::TwoStreams,
    }
}

/// A priori bound on what discarding paths beyond the cap can cost.
fn truncation_bias(game: &GameSpec, cap: f64) -> f64 {
    let scale = game.lower.sup_value().max(game.upper.sup_value());
    (-game.discount * cap).exp() * scale
}

/// Estimate the expected game payoff for a strategy pair by simulation.
pub fn simulate_game(
    game: &GameSpec,
    x0: f64,
    sup: &HittingStrategy,
    inf: &HittingStrategy,
    n_paths: u64,
    horizon_cap: f64,
    seed: u64,
) -> Result<SimulationEstimate> {
    if sup.player != Player::Sup {
        return Err(Error::RoleMismatch {
            expected: Player::Sup,
            got: sup.player,
        });
    }
    if inf.player != Player::Inf {
        return Err(Error::RoleMismatch {
            expected: Player::Inf,
            got: inf.player,
        });
    }
    if !(horizon_cap > 0.0) || !horizon_cap.is_finite() {
        return Err(Error::InvalidParameters(format!(
            "horizon cap must be positive and finite, got {horizon_cap}"
        )));
    }
    if !game.diffusion.contains(x0) {
        let (lo, hi) = game.diffusion.state_space();
        return Err(Error::OutOfDomain { x: x0, lo, hi });
    }
    let base = rng::base_rng(seed);
    let m = accumulate_moments(n_paths, |path| {
        let chain = ChainIter::new(game, chain_kind_for(game.mode), &base, path, x0, horizon_cap);
        payoff_on_chain(game, chain, sup, inf)
    });
    Ok(SimulationEstimate {
        mean: m.mean(),
        stderr: m.stderr(),
        n_paths,
        seed,
        horizon_cap,
        truncation_bias: truncation_bias(game, horizon_cap),
    })
}

/// Outcome of the two-colour thinning comparison: two-sample KS statistics
/// and p-values for the stopped-time and stopped-state marginals.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub time_statistic: f64,
    pub time_p_value: f64,
    pub state_statistic: f64,
    pub state_p_value: f64,
    pub n_kept: [usize; 2],
    pub n_censored: [u64; 2],
}

enum ThinningRule {
    /// Discard every inf-coloured mark; stop at the first remaining mark in
    /// either set.
    DiscardAllInf,
    /// Discard inf marks inside the sup set and sup marks outside it; stop
    /// at the first remaining mark that fires.
    Faithful,
    /// Like `Faithful` but also discards sup marks inside the sup set; only
    /// used as a negative control for the test harness.
    Corrupted,
}

fn coupling_arm(
    game: &GameSpec,
    x0: f64,
    sup_set: &IntervalUnion,
    inf_set: &IntervalUnion,
    n_samples: u64,
    seed: u64,
    path_offset: u64,
    rule: ThinningRule,
) -> (Vec<f64>, Vec<f64>, u64) {
    let base = rng::base_rng(seed);
    type Acc = (Vec<f64>, Vec<f64>, u64);
    accumulate(
        n_samples,
        || (Vec::new(), Vec::new(), 0u64),
        |acc: &mut Acc, i| {
            let chain = ChainIter::new(
                game,
                ChainKind::Merged,
                &base,
                path_offset + i,
                x0,
                f64::INFINITY,
            );
            let mut stopped = None;
            for (k, (t, x, owner)) in chain.enumerate() {
                if k as u32 >= COUPLING_MAX_EVENTS {
                    break;
                }
                let is_sup = matches!(owner, EventOwner::Sup);
                let fires = match rule {
                    ThinningRule::DiscardAllInf => {
                        is_sup && (sup_set.contains(x) || inf_set.contains(x))
                    }
                    ThinningRule::Faithful => {
                        (is_sup && sup_set.contains(x)) || (!is_sup && inf_set.contains(x))
                    }
                    ThinningRule::Corrupted => !is_sup && inf_set.contains(x),
                };
                if fires {
                    stopped = Some((t, x));
                    break;
                }
            }
            match stopped {
                Some((t, x)) => {
                    acc.0.push(t);
                    acc.1.push(x);
                }
                None => acc.2 += 1,
            }
        },
        |mut a: Acc, b: Acc| {
            a.0.extend(b.0);
            a.1.extend(b.1);
            a.2 += b.2;
            a
        },
    )
}

fn coupling_compare(
    game: &GameSpec,
    x0: f64,
    sup_set: &IntervalUnion,
    inf_set: &IntervalUnion,
    n_samples: u64,
    seed: u64,
    second_arm: ThinningRule,
) -> Result<CouplingReport> {
    if let Some(witness) = sup_set.intersection_witness(inf_set) {
        return Err(Error::OverlappingSets { witness });
    }
    if n_samples < 10_000 {
        return Err(Error::InvalidParameters(format!(
            "need at least 10^4 samples per arm for the asymptotic KS p-value, got {n_samples}"
        )));
    }
    if !game.diffusion.contains(x0) {
        let (lo, hi) = game.diffusion.state_space();
        return Err(Error::OutOfDomain { x: x0, lo, hi });
    }
    let (t1, x1, c1) = coupling_arm(
        game,
        x0,
        sup_set,
        inf_set,
        n_samples,
        seed,
        0,
        ThinningRule::DiscardAllInf,
    );
    let (t2, x2, c2) = coupling_arm(
        game,
        x0,
        sup_set,
        inf_set,
        n_samples,
        seed,
        n_samples,
        second_arm,
    );
    let n_kept = [t1.len(), t2.len()];
    let (time_statistic, time_p_value) = two_sample_ks(t1, t2);
    let (state_statistic, state_p_value) = two_sample_ks(x1, x2);
    Ok(CouplingReport {
        time_statistic,
        time_p_value,
        state_statistic,
        state_p_value,
        n_kept,
        n_censored: [c1, c2],
    })
}

/// Statistically check the thinning identity: with disjoint stopping sets,
/// discarding all inf-coloured marks and discarding (inf marks inside the
/// sup set, sup marks outside it) from a merged rate-`2 lambda` stream give
/// the same law for the stopped time and stopped state.
pub fn coupling_check(
    game: &GameSpec,
    x0: f64,
    sup_set: &IntervalUnion,
    inf_set: &IntervalUnion,
    n_samples: u64,
    seed: u64,
) -> Result<CouplingReport> {
    coupling_compare(
        game,
        x0,
        sup_set,
        inf_set,
        n_samples,
        seed,
        ThinningRule::Faithful,
    )
}

/// Negative control for the harness: corrupt the second thinning so the laws
/// genuinely differ; the KS p-values should collapse.
pub fn coupling_negative_control(
    game: &GameSpec,
    x0: f64,
    sup_set: &IntervalUnion,
    inf_set: &IntervalUnion,
    n_samples: u64,
    seed: u64,
) -> Result<CouplingReport> {
    coupling_compare(
        game,
        x0,
        sup_set,
        inf_set,
        n_samples,
        seed,
        ThinningRule::Corrupted,
    )
}

/// One structured perturbation of a stopping set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "amount", rename_all = "lowercase")]
pub enum DeviationOp {
    /// Translate every interval.
    Shift(f64),
    /// Move both endpoints of every interval outward.
    Grow(f64),
    /// Move both endpoints inward, dropping intervals that vanish.
    Shrink(f64),
}

impl DeviationOp {
    /// Signed magnitude for flat reports: shifts keep their sign, grow is
    /// positive, shrink negative.
    pub fn signed_amount(&self) -> f64 {
        match self {
            DeviationOp::Shift(s) => *s,
            DeviationOp::Grow(m) => *m,
            DeviationOp::Shrink(m) => -*m,
        }
    }
}

/// Apply a deviation op to an interval union, coalescing any overlaps the
/// perturbation creates.
pub fn apply_deviation(set: &IntervalUnion, op: DeviationOp) -> IntervalUnion {
    let mut moved: Vec<Interval> = Vec::new();
    for iv in set.intervals() {
        let (lo, hi) = match op {
            DeviationOp::Shift(s) => (iv.lo + s, iv.hi + s),
            DeviationOp::Grow(m) => (iv.lo - m, iv.hi + m),
            DeviationOp::Shrink(m) => (iv.lo + m, iv.hi - m),
        };
        if lo <= hi {
            moved.push(Interval::closed(lo, hi).expect("lo <= hi"));
        }
    }
    moved.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
    let mut merged: Vec<Interval> = Vec::new();
    for iv in moved {
        match merged.last_mut() {
            Some(last) if iv.lo <= last.hi => last.hi = last.hi.max(iv.hi),
            _ => merged.push(iv),
        }
    }
    IntervalUnion::new(merged).expect("coalesced intervals are disjoint")
}

/// The deterministic perturbation schedule: shift +-0.1k, grow 0.1k,
/// shrink 0.1k, with k growing every four entries.
pub fn deviation_schedule(count: u32) -> Vec<DeviationOp> {
    (0..count)
        .map(|i| {
            let m = 0.1 * (i / 4 + 1) as f64;
            match i % 4 {
                0 => DeviationOp::Shift(m),
                1 => DeviationOp::Shift(-m),
                2 => DeviationOp::Grow(m),
                _ => DeviationOp::Shrink(m),
            }
        })
        .collect()
}

/// One arm of the deviation battery.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationArm {
    pub id: u32,
    pub player: Player,
    pub op: DeviationOp,
    pub mean: f64,
    pub stderr: f64,
    /// Mean and standard error of the per-path payoff difference against the
    /// candidate saddle, under common random numbers.
    pub diff_mean: f64,
    pub diff_stderr: f64,
    pub violates_saddle: bool,
}

/// Results of the unilateral-deviation battery around a candidate saddle.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationReport {
    pub baseline: SimulationEstimate,
    pub arms: Vec<DeviationArm>,
    pub violations: usize,
}

impl DeviationReport {
    /// CSV with columns `deviationId,player,shift,mean,stderr`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::InvalidParameters(format!("cannot create {path:?}: {e}")))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            writeln!(w, "deviationId,player,shift,mean,stderr")?;
            for arm in &self.arms {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    arm.id,
                    match arm.player {
                        Player::Sup => "sup",
                        Player::Inf => "inf",
                    },
                    arm.op.signed_amount(),
                    arm.mean,
                    arm.stderr
                )?;
            }
            w.flush()
        })()
        .map_err(|e| Error::InvalidParameters(format!("cannot write {path:?}: {e}")))
    }
}

struct BatteryAcc {
    base: Moments,
    arm: Vec<Moments>,
    diff: Vec<Moments>,
}

/// Probe a candidate saddle `(sup_set, inf_set)` with `deviations` structured
/// unilateral deviations per player, all arms sharing each path's random
/// numbers.
///
/// A sup arm violates the saddle when its payoff improves on the baseline by
/// more than three standard errors of the paired difference; an inf arm when
/// it lowers the payoff by more than the same margin.
pub fn saddle_deviation_battery(
    game: &GameSpec,
    x0: f64,
    sets: &StoppingSets,
    deviations: u32,
    n_paths: u64,
    seed: u64,
) -> Result<DeviationReport> {
    if !game.diffusion.contains(x0) {
        let (lo, hi) = game.diffusion.state_space();
        return Err(Error::OutOfDomain { x: x0, lo, hi });
    }
    let cap = DEFAULT_CAP_OVER_R / game.discount;
    let (sup0, inf0) = HittingStrategy::from_sets(sets);

    let mut arms: Vec<(Player, DeviationOp, HittingStrategy, HittingStrategy)> = Vec::new();
    for op in deviation_schedule(deviations) {
        let mut sup = sup0.clone();
        sup.set = apply_deviation(&sets.sup_set, op);
        arms.push((Player::Sup, op, sup, inf0.clone()));
    }
    for op in deviation_schedule(deviations) {
        let mut inf = inf0.clone();
        inf.set = apply_deviation(&sets.inf_set, op);
        arms.push((Player::Inf, op, sup0.clone(), inf));
    }

    let base_rng = rng::base_rng(seed);
    let n_arms = arms.len();
    let acc = accumulate(
        n_paths,
        || BatteryAcc {
            base: Moments::default(),
            arm: vec![Moments::default(); n_arms],
            diff: vec![Moments::default(); n_arms],
        },
        |acc, path| {
            let chain: Vec<(f64, f64, EventOwner)> = ChainIter::new(
                game,
                chain_kind_for(game.mode),
                &base_rng,
                path,
                x0,
                cap,
            )
            .collect();
            let base_payoff = payoff_on_chain(game, chain.iter().copied(), &sup0, &inf0);
            acc.base.add(base_payoff);
            for (k, (_, _, sup, inf)) in arms.iter().enumerate() {
                let p = payoff_on_chain(game, chain.iter().copied(), sup, inf);
                acc.arm[k].add(p);
                acc.diff[k].add(p - base_payoff);
            }
        },
        |mut a, b| {
            a.base = a.base.merge(b.base);
            for k in 0..n_arms {
                a.arm[k] = a.arm[k].merge(b.arm[k]);
                a.diff[k] = a.diff[k].merge(b.diff[k]);
            }
            a
        },
    );

    let baseline = SimulationEstimate {
        mean: acc.base.mean(),
        stderr: acc.base.stderr(),
        n_paths,
        seed,
        horizon_cap: cap,
        truncation_bias: truncation_bias(game, cap),
    };
    let mut out_arms = Vec::with_capacity(n_arms);
    let mut violations = 0;
    for (k, (player, op, _, _)) in arms.iter().enumerate() {
        let diff_mean = acc.diff[k].mean();
        let diff_stderr = acc.diff[k].stderr();
        let violates = match player {
            Player::Sup => diff_mean > 3.0 * diff_stderr,
            Player::Inf => diff_mean < -3.0 * diff_stderr,
        };
        if violates {
            violations += 1;
        }
        out_arms.push(DeviationArm {
            id: k as u32,
            player: *player,
            op: *op,
            mean: acc.arm[k].mean(),
            stderr: acc.arm[k].stderr(),
            diff_mean,
            diff_stderr,
            violates_saddle: violates,
        });
    }
    Ok(DeviationReport {
        baseline,
        arms: out_arms,
        violations,
    })
}
