//! Domain types shared by every other module: diffusions, piecewise payoff
//! functions, game specifications and stopping sets.
//!
//! All types here are immutable after construction and safe to share across
//! threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Supported one-dimensional diffusions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiffusionKind {
    BrownianMotion,
    GeometricBm,
    OrnsteinUhlenbeck,
}

/// A regular linear diffusion `dX = b(X) dt + s(X) dW` with constant
/// parameters:
///
/// * Brownian motion: `b(x) = mu`, `s(x) = sigma`, state space all of R.
/// * Geometric BM: `b(x) = mu x`, `s(x) = sigma x`, state space (0, inf).
/// * Ornstein-Uhlenbeck: `b(x) = -mu x`, `s(x) = sigma` (mean reversion
///   toward zero at rate `mu`), state space all of R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSpec {
    pub kind: DiffusionKind,
    pub mu: f64,
    pub sigma: f64,
}

impl DiffusionSpec {
    pub fn new(kind: DiffusionKind, mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !mu.is_finite() {
            return Err(Error::InvalidParameters(format!(
                "diffusion needs finite mu and sigma > 0, got mu={mu}, sigma={sigma}"
            )));
        }
        Ok(Self { kind, mu, sigma })
    }

    pub fn brownian(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(DiffusionKind::BrownianMotion, mu, sigma)
    }

    pub fn standard_brownian() -> Self {
        Self {
            kind: DiffusionKind::BrownianMotion,
            mu: 0.0,
            sigma: 1.0,
        }
    }

    pub fn geometric(mu: f64, sigma: f64) -> Result<Self> {
        Self::new(DiffusionKind::GeometricBm, mu, sigma)
    }

    pub fn ornstein_uhlenbeck(rate: f64, sigma: f64) -> Result<Self> {
        Self::new(DiffusionKind::OrnsteinUhlenbeck, rate, sigma)
    }

    /// Open interval (lo, hi) on which the diffusion lives.
    pub fn state_space(&self) -> (f64, f64) {
        match self.kind {
            DiffusionKind::BrownianMotion | DiffusionKind::OrnsteinUhlenbeck => {
                (f64::NEG_INFINITY, f64::INFINITY)
            }
            DiffusionKind::GeometricBm => (0.0, f64::INFINITY),
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.state_space();
        x.is_finite() && x > lo && x < hi
    }

    /// Drift coefficient b(x) of the generator `L f = s(x)^2/2 f'' + b(x) f'`.
    pub fn drift_at(&self, x: f64) -> f64 {
        match self.kind {
            DiffusionKind::BrownianMotion => self.mu,
            DiffusionKind::GeometricBm => self.mu * x,
            DiffusionKind::OrnsteinUhlenbeck => -self.mu * x,
        }
    }

    /// Squared diffusion coefficient s(x)^2.
    pub fn variance_at(&self, x: f64) -> f64 {
        match self.kind {
            DiffusionKind::BrownianMotion | DiffusionKind::OrnsteinUhlenbeck => {
                self.sigma * self.sigma
            }
            DiffusionKind::GeometricBm => self.sigma * self.sigma * x * x,
        }
    }

    /// Exact transition over a time step `dt` driven by a standard normal
    /// draw `z`. No Euler sub-stepping anywhere: the law of the returned
    /// state is exactly that of `X_{t+dt}` given `X_t = x`.
    pub fn transition(&self, x: f64, dt: f64, z: f64) -> f64 {
        debug_assert!(dt >= 0.0);
        match self.kind {
            DiffusionKind::BrownianMotion => x + self.mu * dt + self.sigma * dt.sqrt() * z,
            DiffusionKind::GeometricBm => {
                let m = (self.mu - 0.5 * self.sigma * self.sigma) * dt;
                x * (m + self.sigma * dt.sqrt() * z).exp()
            }
            DiffusionKind::OrnsteinUhlenbeck => {
                let k = self.mu;
                let mean = x * (-k * dt).exp();
                let var = if k.abs() < 1e-12 {
                    self.sigma * self.sigma * dt
                } else {
                    self.sigma * self.sigma * (1.0 - (-2.0 * k * dt).exp()) / (2.0 * k)
                };
                mean + var.sqrt() * z
            }
        }
    }
}

/// One cell of a piecewise payoff description.
#[derive(Debug, Clone, PartialEq)]
pub enum Piece {
    Constant(f64),
    /// `slope * x + intercept`
    Affine { slope: f64, intercept: f64 },
    /// `max(slope * x + intercept, 0)`
    PositivePartAffine { slope: f64, intercept: f64 },
    /// Linear interpolation through `(knots[i], values[i])`, flat beyond the
    /// first/last knot.
    Tabulated { knots: Vec<f64>, values: Vec<f64> },
}

impl Piece {
    fn eval(&self, x: f64) -> f64 {
        match self {
            Piece::Constant(c) => *c,
            Piece::Affine { slope, intercept } => slope * x + intercept,
            Piece::PositivePartAffine { slope, intercept } => (slope * x + intercept).max(0.0),
            Piece::Tabulated { knots, values } => {
                if x <= knots[0] {
                    return values[0];
                }
                if x >= knots[knots.len() - 1] {
                    return values[values.len() - 1];
                }
                let j = knots.partition_point(|k| *k <= x) - 1;
                let w = (x - knots[j]) / (knots[j + 1] - knots[j]);
                values[j] * (1.0 - w) + values[j + 1] * w
            }
        }
    }

    /// Lower bound of the piece over the closure of the cell [lo, hi].
    fn min_on(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Piece::Constant(c) => *c,
            Piece::Affine { slope, intercept } => {
                let at = |e: f64, toward_neg: bool| {
                    if e.is_finite() {
                        slope * e + intercept
                    } else if *slope == 0.0 {
                        *intercept
                    } else if (*slope > 0.0) == toward_neg {
                        f64::NEG_INFINITY
                    } else {
                        f64::INFINITY
                    }
                };
                at(lo, true).min(at(hi, false))
            }
            Piece::PositivePartAffine { .. } => 0.0,
            Piece::Tabulated { values, .. } => values.iter().cloned().fold(f64::INFINITY, f64::min),
        }
    }

    fn max_on(&self, lo: f64, hi: f64) -> f64 {
        match self {
            Piece::Constant(c) => *c,
            Piece::Affine { slope, intercept } | Piece::PositivePartAffine { slope, intercept } => {
                let at = |e: f64, toward_neg: bool| {
                    if e.is_finite() {
                        slope * e + intercept
                    } else if *slope == 0.0 {
                        *intercept
                    } else if (*slope > 0.0) == toward_neg {
                        f64::NEG_INFINITY
                    } else {
                        f64::INFINITY
                    }
                };
                at(lo, true).max(at(hi, false))
            }
            Piece::Tabulated { values, .. } => {
                values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            }
        }
    }
}

/// A non-negative payoff function given piecewise over an open domain.
///
/// `breakpoints` are the interior cut points; `pieces` has exactly one more
/// entry than `breakpoints`. Evaluation at a breakpoint uses the right-hand
/// cell, i.e. cell `i` covers `[b_{i-1}, b_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FunctionSpec {
    domain: (f64, f64),
    breakpoints: Vec<f64>,
    pieces: Vec<Piece>,
}

impl FunctionSpec {
    pub fn new(domain: (f64, f64), breakpoints: Vec<f64>, pieces: Vec<Piece>) -> Result<Self> {
        if !(domain.0 < domain.1) {
            return Err(Error::BadFunctionSpec(format!(
                "domain ({}, {}) is empty",
                domain.0, domain.1
            )));
        }
        if pieces.len() != breakpoints.len() + 1 {
            return Err(Error::BadFunctionSpec(format!(
                "{} breakpoints need {} pieces, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                pieces.len()
            )));
        }
        for w in breakpoints.windows(2) {
            if !(w[0] < w[1]) {
                return Err(Error::BadFunctionSpec(format!(
                    "breakpoints not strictly increasing at {} >= {}",
                    w[0], w[1]
                )));
            }
        }
        if let (Some(first), Some(last)) = (breakpoints.first(), breakpoints.last()) {
            if !(*first > domain.0 && *last < domain.1) {
                return Err(Error::BadFunctionSpec(
                    "breakpoints must lie strictly inside the domain".into(),
                ));
            }
        }
        let spec = Self {
            domain,
            breakpoints,
            pieces,
        };
        for (lo, hi, piece) in spec.cells() {
            if let Piece::Tabulated { knots, values } = piece {
                if knots.len() < 2 || knots.len() != values.len() {
                    return Err(Error::BadFunctionSpec(
                        "tabulated piece needs >= 2 knots and matching values".into(),
                    ));
                }
                if knots.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::BadFunctionSpec(
                        "tabulated knots must be strictly increasing".into(),
                    ));
                }
            }
            if piece.min_on(lo, hi) < -1e-9 {
                return Err(Error::BadFunctionSpec(format!(
                    "payoff must be non-negative, piece on [{lo}, {hi}) dips below zero"
                )));
            }
        }
        Ok(spec)
    }

    /// Constant function on the whole real line.
    pub fn constant(c: f64) -> Result<Self> {
        Self::new(
            (f64::NEG_INFINITY, f64::INFINITY),
            vec![],
            vec![Piece::Constant(c)],
        )
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    /// Iterate cells as (lo, hi, piece); cell bounds may be infinite.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, &Piece)> {
        let bounds: Vec<f64> = std::iter::once(self.domain.0)
            .chain(self.breakpoints.iter().cloned())
            .chain(std::iter::once(self.domain.1))
            .collect();
        self.pieces
            .iter()
            .enumerate()
            .map(move |(i, p)| (bounds[i], bounds[i + 1], p))
    }

    /// Evaluate at `x`; right-continuous at breakpoints.
    pub fn eval(&self, x: f64) -> Result<f64> {
        if !x.is_finite() || x <= self.domain.0 && self.domain.0.is_finite()
            || x >= self.domain.1 && self.domain.1.is_finite()
        {
            return Err(Error::OutOfDomain {
                x,
                lo: self.domain.0,
                hi: self.domain.1,
            });
        }
        Ok(self.eval_inner(x))
    }

    /// Evaluate with `x` clamped into the domain. Used on simulated paths,
    /// which stay inside the state space almost surely; the clamp only guards
    /// against representability at a finite boundary.
    pub(crate) fn eval_clamped(&self, x: f64) -> f64 {
        let mut y = x;
        if self.domain.0.is_finite() && y < self.domain.0 {
            y = self.domain.0;
        }
        if self.domain.1.is_finite() && y > self.domain.1 {
            y = self.domain.1;
        }
        self.eval_inner(y)
    }

    fn eval_inner(&self, x: f64) -> f64 {
        let i = self.breakpoints.partition_point(|b| *b <= x);
        self.pieces[i].eval(x)
    }

    /// Supremum over the domain; may be `f64::INFINITY` for unbounded pieces.
    pub fn sup_value(&self) -> f64 {
        self.cells()
            .map(|(lo, hi, p)| p.max_on(lo, hi))
            .fold(0.0, f64::max)
    }
}

/// Which stopping-signal regime the game uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstraintMode {
    /// Both players share one Poisson signal process.
    Common,
    /// Each player has a private Poisson process of the same rate.
    Independent,
}

/// The two players of the zero-sum game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Player {
    Sup,
    Inf,
}

/// Full description of a constrained Dynkin game.
///
/// The payoff when neither player ever stops is hard-wired to zero; a game
/// with any other terminal payoff is rejected at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "repr::GameSpecRepr", into = "repr::GameSpecRepr")]
pub struct GameSpec {
    pub diffusion: DiffusionSpec,
    pub lower: FunctionSpec,
    pub upper: FunctionSpec,
    pub discount: f64,
    pub signal_rate: f64,
    pub mode: ConstraintMode,
}

impl GameSpec {
    pub fn new(
        diffusion: DiffusionSpec,
        lower: FunctionSpec,
        upper: FunctionSpec,
        discount: f64,
        signal_rate: f64,
        mode: ConstraintMode,
    ) -> Result<Self> {
        Self::with_terminal_payoff(diffusion, lower, upper, discount, signal_rate, mode, 0.0)
    }

    /// As [`GameSpec::new`] but with an explicit terminal payoff, which must
    /// be zero. Kept as a loud guard: games with a nonzero payoff on
    /// `{tau = sigma = infinity}` are outside what this toolkit computes.
    pub fn with_terminal_payoff(
        diffusion: DiffusionSpec,
        lower: FunctionSpec,
        upper: FunctionSpec,
        discount: f64,
        signal_rate: f64,
        mode: ConstraintMode,
        terminal_payoff: f64,
    ) -> Result<Self> {
        if terminal_payoff != 0.0 {
            return Err(Error::NonzeroTerminalPayoff {
                value: terminal_payoff,
            });
        }
        if !(discount > 0.0) || !discount.is_finite() {
            return Err(Error::InvalidParameters(format!(
                "discount must be positive, got {discount}"
            )));
        }
        if !(signal_rate > 0.0) || !signal_rate.is_finite() {
            return Err(Error::InvalidParameters(format!(
                "signal rate must be positive, got {signal_rate}"
            )));
        }
        let ss = diffusion.state_space();
        for (name, f) in [("lower", &lower), ("upper", &upper)] {
            let d = f.domain();
            if d.0 > ss.0 || d.1 < ss.1 {
                return Err(Error::InvalidParameters(format!(
                    "{name} payoff domain ({}, {}) does not cover the state space ({}, {})",
                    d.0, d.1, ss.0, ss.1
                )));
            }
        }
        Ok(Self {
            diffusion,
            lower,
            upper,
            discount,
            signal_rate,
            mode,
        })
    }

    /// Payoff when neither player stops. Fixed at zero.
    pub fn terminal_payoff(&self) -> f64 {
        0.0
    }

    /// Same game under the other constraint regime.
    pub fn with_mode(&self, mode: ConstraintMode) -> Self {
        let mut g = self.clone();
        g.mode = mode;
        g
    }
}

/// Payoff convention on a tie `tau = sigma < infinity`: the sup player takes
/// precedence and the game pays the lower payoff.
pub fn payoff_on_tie(l_val: f64, _u_val: f64) -> f64 {
    l_val
}

/// An interval with explicit open/closed endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    pub closed_lo: bool,
    pub closed_hi: bool,
}

impl Interval {
    pub fn new(lo: f64, hi: f64, closed_lo: bool, closed_hi: bool) -> Result<Self> {
        let ok = lo < hi || (lo == hi && closed_lo && closed_hi);
        if !ok || lo.is_nan() || hi.is_nan() {
            return Err(Error::InvalidParameters(format!(
                "empty or malformed interval [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            lo,
            hi,
            closed_lo,
            closed_hi,
        })
    }

    pub fn closed(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, true, true)
    }

    pub fn contains(&self, x: f64) -> bool {
        let left = if self.closed_lo { x >= self.lo } else { x > self.lo };
        let right = if self.closed_hi { x <= self.hi } else { x < self.hi };
        left && right
    }

    fn overlaps(&self, other: &Interval) -> Option<f64> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo < hi {
            return Some(0.5 * (lo + hi));
        }
        if lo == hi && self.contains(lo) && other.contains(lo) {
            return Some(lo);
        }
        None
    }
}

/// A sorted union of pairwise disjoint intervals.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IntervalUnion(Vec<Interval>);

impl IntervalUnion {
    pub fn new(mut intervals: Vec<Interval>) -> Result<Self> {
        intervals.sort_by(|a, b| a.lo.partial_cmp(&b.lo).unwrap());
        for w in intervals.windows(2) {
            if let Some(witness) = w[0].overlaps(&w[1]) {
                return Err(Error::OverlappingSets { witness });
            }
        }
        Ok(Self(intervals))
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.0
    }

    pub fn contains(&self, x: f64) -> bool {
        self.0.iter().any(|iv| iv.contains(x))
    }

    /// Midpoint of some overlap with `other`, if the unions intersect.
    pub fn intersection_witness(&self, other: &IntervalUnion) -> Option<f64> {
        for a in &self.0 {
            for b in &other.0 {
                if let Some(w) = a.overlaps(b) {
                    return Some(w);
                }
            }
        }
        None
    }

    /// Endpoint pairs `[lo, hi]`, dropping the open/closed flags.
    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.0.iter().map(|iv| [iv.lo, iv.hi]).collect()
    }

    pub fn from_closed_pairs(pairs: &[[f64; 2]]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|p| Interval::closed(p[0], p[1]))
                .collect::<Result<Vec<_>>>()?,
        )
    }
}

/// Stopping sets for the two players: the sup player stops on `sup_set`, the
/// inf player on `inf_set`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoppingSets {
    pub sup_set: IntervalUnion,
    pub inf_set: IntervalUnion,
}

impl StoppingSets {
    pub fn new(sup_set: IntervalUnion, inf_set: IntervalUnion) -> Self {
        Self { sup_set, inf_set }
    }

    pub fn disjoint(&self) -> bool {
        self.sup_set.intersection_witness(&self.inf_set).is_none()
    }
}

mod repr {
    //! JSON wire formats.
    //!
    //! A game serializes as
    //! `{diffusion: {kind, mu, sigma}, lower: [...], upper: [...], r, lambda, mode}`
    //! where each payoff is a list of cells
    //! `{cell: [lo, hi], kind: "const"|"affine"|"pospart"|"table", params: [...]}`,
    //! cells tile the domain in order, and `null` bounds stand for the
    //! infinite endpoints. Table params hold the knots followed by the values.

    use serde::{Deserialize, Serialize};

    use super::{ConstraintMode, DiffusionSpec, FunctionSpec, GameSpec, Piece};
    use crate::error::Error;

    #[derive(Serialize, Deserialize)]
    pub(super) struct PieceRepr {
        cell: [Option<f64>; 2],
        kind: String,
        params: Vec<f64>,
    }

    #[derive(Serialize, Deserialize)]
    pub(super) struct GameSpecRepr {
        diffusion: DiffusionSpec,
        lower: Vec<PieceRepr>,
        upper: Vec<PieceRepr>,
        r: f64,
        lambda: f64,
        mode: ConstraintMode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m_infinity: Option<f64>,
    }

    fn bound_to_json(b: f64) -> Option<f64> {
        b.is_finite().then_some(b)
    }

    fn bound_from_json(b: Option<f64>, low_side: bool) -> f64 {
        b.unwrap_or(if low_side {
            f64::NEG_INFINITY
        } else {
            f64::INFINITY
        })
    }

    pub(super) fn function_to_repr(f: &FunctionSpec) -> Vec<PieceRepr> {
        f.cells()
            .map(|(lo, hi, piece)| {
                let (kind, params) = match piece {
                    Piece::Constant(c) => ("const", vec![*c]),
                    Piece::Affine { slope, intercept } => ("affine", vec![*slope, *intercept]),
                    Piece::PositivePartAffine { slope, intercept } => {
                        ("pospart", vec![*slope, *intercept])
                    }
                    Piece::Tabulated { knots, values } => {
                        let mut p = knots.clone();
                        p.extend_from_slice(values);
                        ("table", p)
                    }
                };
                PieceRepr {
                    cell: [bound_to_json(lo), bound_to_json(hi)],
                    kind: kind.to_string(),
                    params,
                }
            })
            .collect()
    }

    pub(super) fn function_from_repr(cells: Vec<PieceRepr>) -> Result<FunctionSpec, Error> {
        if cells.is_empty() {
            return Err(Error::BadFunctionSpec("payoff needs at least one cell".into()));
        }
        let mut breakpoints = Vec::new();
        let mut pieces = Vec::new();
        let lo = bound_from_json(cells[0].cell[0], true);
        let hi = bound_from_json(cells[cells.len() - 1].cell[1], false);
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                let b = bound_from_json(c.cell[0], true);
                let prev_hi = bound_from_json(cells[i - 1].cell[1], false);
                if b != prev_hi || !b.is_finite() {
                    return Err(Error::BadFunctionSpec(format!(
                        "cells must tile the domain; cell {i} starts at {b} but the previous ends at {prev_hi}"
                    )));
                }
                breakpoints.push(b);
            }
            let piece = match (c.kind.as_str(), c.params.as_slice()) {
                ("const", [v]) => Piece::Constant(*v),
                ("affine", [a, b]) => Piece::Affine {
                    slope: *a,
                    intercept: *b,
                },
                ("pospart", [a, b]) => Piece::PositivePartAffine {
                    slope: *a,
                    intercept: *b,
                },
                ("table", params) if params.len() >= 4 && params.len() % 2 == 0 => {
                    let (knots, values) = params.split_at(params.len() / 2);
                    Piece::Tabulated {
                        knots: knots.to_vec(),
                        values: values.to_vec(),
                    }
                }
                (kind, params) => {
                    return Err(Error::BadFunctionSpec(format!(
                        "unknown piece kind {kind:?} or bad params (len {})",
                        params.len()
                    )))
                }
            };
            pieces.push(piece);
        }
        FunctionSpec::new((lo, hi), breakpoints, pieces)
    }

    impl TryFrom<GameSpecRepr> for GameSpec {
        type Error = Error;

        fn try_from(r: GameSpecRepr) -> Result<Self, Error> {
            GameSpec::with_terminal_payoff(
                r.diffusion,
                function_from_repr(r.lower)?,
                function_from_repr(r.upper)?,
                r.r,
                r.lambda,
                r.mode,
                r.m_infinity.unwrap_or(0.0),
            )
        }
    }

    impl From<GameSpec> for GameSpecRepr {
        fn from(g: GameSpec) -> Self {
            GameSpecRepr {
                diffusion: g.diffusion,
                lower: function_to_repr(&g.lower),
                upper: function_to_repr(&g.upper),
                r: g.discount,
                lambda: g.signal_rate,
                mode: g.mode,
                m_infinity: None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn indicator_unit() -> FunctionSpec {
        // 1 on [-1, 1) under the right-continuity convention, 0 elsewhere
        FunctionSpec::new(
            (f64::NEG_INFINITY, f64::INFINITY),
            vec![-1.0, 1.0],
            vec![
                Piece::Constant(0.0),
                Piece::Constant(1.0),
                Piece::Constant(0.0),
            ],
        )
        .unwrap()
    }

    #[test]
    fn indicator_payoff_values() {
        let l = indicator_unit();
        assert_eq!(l.eval(0.0).unwrap(), 1.0);
        assert_eq!(l.eval(-1.0).unwrap(), 1.0); // right-hand cell at a breakpoint
        assert_eq!(l.eval(1.0).unwrap(), 0.0);
        assert_eq!(l.eval(2.0).unwrap(), 0.0);
        assert_eq!(l.eval(-3.0).unwrap(), 0.0);
    }

    #[test]
    fn call_payoff_kink_is_zero() {
        let strike = 2.5;
        let f = FunctionSpec::new(
            (0.0, f64::INFINITY),
            vec![],
            vec![Piece::PositivePartAffine {
                slope: 1.0,
                intercept: -strike,
            }],
        )
        .unwrap();
        assert_eq!(f.eval(strike).unwrap(), 0.0);
        assert_eq!(f.eval(3.5).unwrap(), 1.0);
        assert_eq!(f.eval(1.0).unwrap(), 0.0);
    }

    #[test]
    fn eval_rejects_points_outside_the_domain() {
        let f = FunctionSpec::new(
            (0.0, f64::INFINITY),
            vec![],
            vec![Piece::Constant(1.0)],
        )
        .unwrap();
        assert!(matches!(f.eval(0.0), Err(Error::OutOfDomain { .. })));
        assert!(matches!(f.eval(-1.0), Err(Error::OutOfDomain { .. })));
        assert!(f.eval(1e-12).is_ok());
    }

    #[test]
    fn negative_payoffs_are_rejected() {
        let err = FunctionSpec::new(
            (f64::NEG_INFINITY, f64::INFINITY),
            vec![],
            vec![Piece::Constant(-0.1)],
        );
        assert!(err.is_err());
        // affine sloping to -inf over an unbounded cell
        let err = FunctionSpec::new(
            (f64::NEG_INFINITY, f64::INFINITY),
            vec![],
            vec![Piece::Affine {
                slope: 1.0,
                intercept: 0.0,
            }],
        );
        assert!(err.is_err());
    }

    #[test]
    fn tie_pays_the_sup_player() {
        assert_eq!(payoff_on_tie(1.0, 0.5), 1.0);
        assert_eq!(payoff_on_tie(0.0, 7.0), 0.0);
        assert_eq!(payoff_on_tie(0.3, 0.3), 0.3);
    }

    #[test]
    fn nonzero_terminal_payoff_is_rejected() {
        let l = indicator_unit();
        let u = FunctionSpec::constant(1.0).unwrap();
        let err = GameSpec::with_terminal_payoff(
            DiffusionSpec::standard_brownian(),
            l,
            u,
            1.0,
            1.0,
            ConstraintMode::Common,
            0.25,
        );
        assert!(matches!(err, Err(Error::NonzeroTerminalPayoff { .. })));
    }

    #[test]
    fn payoff_domain_must_cover_the_state_space() {
        let narrow = FunctionSpec::new((0.0, f64::INFINITY), vec![], vec![Piece::Constant(1.0)])
            .unwrap();
        let wide = FunctionSpec::constant(1.0).unwrap();
        let err = GameSpec::new(
            DiffusionSpec::standard_brownian(),
            narrow,
            wide,
            1.0,
            1.0,
            ConstraintMode::Common,
        );
        assert!(err.is_err());
    }

    #[test]
    fn game_spec_json_round_trip() {
        let l = indicator_unit();
        let u = FunctionSpec::new(
            (f64::NEG_INFINITY, f64::INFINITY),
            vec![-1.0, 1.0],
            vec![
                Piece::Constant(0.1),
                Piece::Constant(0.5),
                Piece::Constant(0.1),
            ],
        )
        .unwrap();
        let game = GameSpec::new(
            DiffusionSpec::standard_brownian(),
            l,
            u,
            1.0,
            1.0,
            ConstraintMode::Common,
        )
        .unwrap();
        let json = serde_json::to_string(&game).unwrap();
        assert!(json.contains("\"lambda\":1.0"));
        assert!(json.contains("\"kind\":\"const\""));
        let back: GameSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, game);
    }

    #[test]
    fn json_rejects_nonzero_terminal_and_bad_tiling() {
        let json = r#"{
            "diffusion": {"kind": "brownian_motion", "mu": 0.0, "sigma": 1.0},
            "lower": [{"cell": [null, null], "kind": "const", "params": [0.0]}],
            "upper": [{"cell": [null, null], "kind": "const", "params": [1.0]}],
            "r": 1.0, "lambda": 1.0, "mode": "common", "m_infinity": 0.5
        }"#;
        assert!(serde_json::from_str::<GameSpec>(json).is_err());

        let gap = r#"{
            "diffusion": {"kind": "brownian_motion", "mu": 0.0, "sigma": 1.0},
            "lower": [
                {"cell": [null, -1.0], "kind": "const", "params": [0.0]},
                {"cell": [0.0, null], "kind": "const", "params": [1.0]}
            ],
            "upper": [{"cell": [null, null], "kind": "const", "params": [1.0]}],
            "r": 1.0, "lambda": 1.0, "mode": "common"
        }"#;
        assert!(serde_json::from_str::<GameSpec>(gap).is_err());
    }

    #[test]
    fn interval_union_rejects_overlap_and_sorts() {
        let a = Interval::closed(0.0, 1.0).unwrap();
        let b = Interval::new(1.0, 2.0, false, true).unwrap();
        let u = IntervalUnion::new(vec![b, a]).unwrap(); // touching at an open end is fine
        assert_eq!(u.intervals()[0].lo, 0.0);
        assert!(u.contains(1.0));
        assert!(u.contains(1.5));
        assert!(!u.contains(2.5));

        let c = Interval::closed(1.0, 3.0).unwrap();
        let a = Interval::closed(0.0, 1.0).unwrap();
        assert!(IntervalUnion::new(vec![a, c]).is_err());
    }

    #[test]
    fn exact_transitions_hit_their_means() {
        let bm = DiffusionSpec::brownian(0.3, 2.0).unwrap();
        assert_eq!(bm.transition(1.0, 4.0, 0.0), 1.0 + 0.3 * 4.0);

        let gbm = DiffusionSpec::geometric(0.05, 0.4).unwrap();
        let x = gbm.transition(2.0, 1.0, 0.0);
        assert!((x - 2.0 * ((0.05 - 0.08_f64) * 1.0).exp()).abs() < 1e-12);
        assert!(gbm.transition(1e-3, 10.0, -8.0) > 0.0); // stays in (0, inf)

        let ou = DiffusionSpec::ornstein_uhlenbeck(0.7, 1.0).unwrap();
        assert!((ou.transition(3.0, 2.0, 0.0) - 3.0 * (-1.4_f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn tabulated_piece_interpolates_linearly() {
        let f = FunctionSpec::new(
            (f64::NEG_INFINITY, f64::INFINITY),
            vec![],
            vec![Piece::Tabulated {
                knots: vec![0.0, 1.0, 2.0],
                values: vec![0.0, 2.0, 1.0],
            }],
        )
        .unwrap();
        assert_eq!(f.eval(0.5).unwrap(), 1.0);
        assert_eq!(f.eval(1.5).unwrap(), 1.5);
        assert_eq!(f.eval(-5.0).unwrap(), 0.0); // flat beyond the knots
        assert_eq!(f.eval(9.0).unwrap(), 1.0);
    }
}
