//! Grid-based fixed-point solver for the game value under either constraint
//! regime.
//!
//! The stationary equations are
//!
//! ```text
//! common:      L v - (lambda + r) v + lambda max(l, min(v, u))            = 0
//! independent: L v - (2 lambda + r) v + lambda max(l, v) + lambda min(v, u) = 0
//! ```
//!
//! Both are solved by value iteration on the discrete resolvent: with
//! `rate = lambda + r` (resp. `2 lambda + r`), iterate
//! `v <- (rate I - L_h)^{-1} g(v)` from `v = 0`. The driver is 1-Lipschitz
//! and monotone, the discrete resolvent has sup-norm `1/rate`, so the map
//! contracts at `lambda/(lambda+r)` (resp. `2 lambda/(2 lambda + r)`) and the
//! iterates increase monotonically.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    ConstraintMode, DiffusionSpec, FunctionSpec, GameSpec, Interval, IntervalUnion, StoppingSets,
};

mod tridiag {
    use crate::error::{Error, Result};

    /// Thomas recurrence for a tridiagonal system. `sub[j]`, `diag[j]`,
    /// `sup[j]` are the entries of row `j` (sub[0] and sup[n-1] unused).
    pub fn solve(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
        let n = diag.len();
        debug_assert!(sub.len() == n && sup.len() == n && rhs.len() == n);
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut pivot = diag[0];
        if pivot.abs() < f64::MIN_POSITIVE {
            return Err(Error::SingularSystem { row: 0 });
        }
        c[0] = sup[0] / pivot;
        x[0] = rhs[0] / pivot;
        for j in 1..n {
            pivot = diag[j] - sub[j] * c[j - 1];
            if pivot.abs() < f64::MIN_POSITIVE {
                return Err(Error::SingularSystem { row: j });
            }
            c[j] = sup[j] / pivot;
            x[j] = (rhs[j] - sub[j] * x[j - 1]) / pivot;
        }
        for j in (0..n - 1).rev() {
            x[j] -= c[j] * x[j + 1];
        }
        Ok(x)
    }
}

/// How the truncated computational domain is closed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    /// `w' = -+ kappa w` at the two ends with `kappa = sqrt(2 rate)/sigma`,
    /// matching the exponential tails of Brownian-type solutions.
    RobinDecay,
    /// `w = 0` at both ends; the fallback for diffusions whose natural scale
    /// is not exponential (geometric BM near zero).
    DirichletZero,
}

/// Discretization parameters for one solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub domain_lo: f64,
    pub domain_hi: f64,
    pub step: f64,
    pub max_iterations: u32,
    pub tolerance: f64,
    pub boundary: BoundaryKind,
}

impl GridConfig {
    pub fn new(domain_lo: f64, domain_hi: f64, step: f64) -> Self {
        Self {
            domain_lo,
            domain_hi,
            step,
            max_iterations: 500,
            tolerance: 1e-10,
            boundary: BoundaryKind::RobinDecay,
        }
    }

    pub fn with_boundary(mut self, boundary: BoundaryKind) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: u32) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.domain_lo < self.domain_hi) || !self.domain_lo.is_finite() {
            return Err(Error::GridConfig(format!(
                "domain ({}, {}) is not a finite interval",
                self.domain_lo, self.domain_hi
            )));
        }
        if !(self.step > 0.0) {
            return Err(Error::GridConfig(format!("step must be positive, got {}", self.step)));
        }
        let cells = (self.domain_hi - self.domain_lo) / self.step;
        if (cells - cells.round()).abs() > 1e-6 || cells.round() < 10.0 {
            return Err(Error::GridConfig(format!(
                "(hi - lo)/step must be an integer >= 10, got {cells}"
            )));
        }
        if self.max_iterations == 0 || !(self.tolerance > 0.0) {
            return Err(Error::GridConfig(
                "need max_iterations >= 1 and tolerance > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        ((self.domain_hi - self.domain_lo) / self.step).round() as usize + 1
    }

    pub fn node(&self, j: usize) -> f64 {
        self.domain_lo + self.step * j as f64
    }
}

/// A value function sampled on a uniform grid, evaluated elsewhere by linear
/// interpolation (clamped to the edge values outside the domain).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
    pub mode: ConstraintMode,
    pub values: Vec<f64>,
}

impl ValueGrid {
    pub fn n_nodes(&self) -> usize {
        self.values.len()
    }

    pub fn node(&self, j: usize) -> f64 {
        self.lo + self.step * j as f64
    }

    pub fn eval(&self, x: f64) -> f64 {
        let n = self.values.len();
        let t = (x - self.lo) / self.step;
        if t <= 0.0 {
            return self.values[0];
        }
        if t >= (n - 1) as f64 {
            return self.values[n - 1];
        }
        let j = t.floor() as usize;
        let w = t - j as f64;
        self.values[j] * (1.0 - w) + self.values[j + 1] * w
    }

    /// Sup-norm distance to another grid over nodes in `[lo, hi]`.
    pub fn sup_distance_to<F: Fn(f64) -> f64>(&self, reference: F, lo: f64, hi: f64) -> f64 {
        let mut worst = 0.0_f64;
        for (j, v) in self.values.iter().enumerate() {
            let x = self.node(j);
            if x >= lo && x <= hi {
                worst = worst.max((v - reference(x)).abs());
            }
        }
        worst
    }
}

/// Converged value plus the stopping sets read off it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SolutionRepr", into = "SolutionRepr")]
pub struct GameSolution {
    pub value: ValueGrid,
    pub sets: StoppingSets,
    pub iterations: u32,
    pub final_change: f64,
}

#[derive(Serialize, Deserialize)]
struct GridRepr {
    lo: f64,
    hi: f64,
    h: f64,
}

#[derive(Serialize, Deserialize)]
struct SolutionRepr {
    mode: ConstraintMode,
    grid: GridRepr,
    values: Vec<f64>,
    #[serde(rename = "A")]
    sup_set: Vec<[f64; 2]>,
    #[serde(rename = "B")]
    inf_set: Vec<[f64; 2]>,
    iterations: u32,
    #[serde(rename = "finalChange")]
    final_change: f64,
}

impl TryFrom<SolutionRepr> for GameSolution {
    type Error = Error;

    fn try_from(r: SolutionRepr) -> Result<Self> {
        Ok(GameSolution {
            value: ValueGrid {
                lo: r.grid.lo,
                hi: r.grid.hi,
                step: r.grid.h,
                mode: r.mode,
                values: r.values,
            },
            // endpoint open/closed flags are not part of the wire format;
            // round-tripped sets come back closed
            sets: StoppingSets::new(
                IntervalUnion::from_closed_pairs(&r.sup_set)?,
                IntervalUnion::from_closed_pairs(&r.inf_set)?,
            ),
            iterations: r.iterations,
            final_change: r.final_change,
        })
    }
}

impl From<GameSolution> for SolutionRepr {
    fn from(s: GameSolution) -> Self {
        SolutionRepr {
            mode: s.value.mode,
            grid: GridRepr {
                lo: s.value.lo,
                hi: s.value.hi,
                h: s.value.step,
            },
            values: s.value.values,
            sup_set: s.sets.sup_set.to_pairs(),
            inf_set: s.sets.inf_set.to_pairs(),
            iterations: s.iterations,
            final_change: s.final_change,
        }
    }
}

impl GameSolution {
    /// CSV export with columns `x,v,l,u,inA,inB`.
    pub fn write_csv(&self, l: &FunctionSpec, u: &FunctionSpec, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)
            .map_err(|e| Error::InvalidParameters(format!("cannot create {path:?}: {e}")))?;
        let mut w = BufWriter::new(file);
        (|| -> std::io::Result<()> {
            writeln!(w, "x,v,l,u,inA,inB")?;
            for (j, v) in self.value.values.iter().enumerate() {
                let x = self.value.node(j);
                writeln!(
                    w,
                    "{x},{v},{},{},{},{}",
                    l.eval_clamped(x),
                    u.eval_clamped(x),
                    self.sets.sup_set.contains(x) as u8,
                    self.sets.inf_set.contains(x) as u8,
                )?;
            }
            w.flush()
        })()
        .map_err(|e| Error::InvalidParameters(format!("cannot write {path:?}: {e}")))
    }
}

fn assemble_rows(
    diffusion: &DiffusionSpec,
    rate: f64,
    cfg: &GridConfig,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let n = cfg.n_nodes();
    let h = cfg.step;
    let mut sub = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut sup = vec![0.0; n];
    for j in 0..n {
        let x = cfg.node(j);
        let a = 0.5 * diffusion.variance_at(x);
        let b = diffusion.drift_at(x);
        // upwind the first-order term when the cell Peclet number exceeds 2,
        // keeping the M-matrix structure the maximum principle relies on
        if b.abs() * h > 2.0 * a {
            if b > 0.0 {
                sub[j] = -a / (h * h);
                diag[j] = rate + 2.0 * a / (h * h) + b / h;
                sup[j] = -a / (h * h) - b / h;
            } else {
                sub[j] = -a / (h * h) + b / h;
                diag[j] = rate + 2.0 * a / (h * h) - b / h;
                sup[j] = -a / (h * h);
            }
        } else {
            sub[j] = -a / (h * h) + b / (2.0 * h);
            diag[j] = rate + 2.0 * a / (h * h);
            sup[j] = -a / (h * h) - b / (2.0 * h);
        }
    }
    match cfg.boundary {
        BoundaryKind::DirichletZero => {
            diag[0] = 1.0;
            sup[0] = 0.0;
            diag[n - 1] = 1.0;
            sub[n - 1] = 0.0;
        }
        BoundaryKind::RobinDecay => {
            // ghost-node elimination of w' = +-kappa w
            let h2 = h * h;
            let x0 = cfg.node(0);
            let a0 = 0.5 * diffusion.variance_at(x0);
            let b0 = diffusion.drift_at(x0);
            let k0 = (2.0 * rate).sqrt() / diffusion.variance_at(x0).sqrt();
            diag[0] = rate + 2.0 * a0 / h2 + 2.0 * a0 * k0 / h - b0 * k0;
            sup[0] = -2.0 * a0 / h2;
            sub[0] = 0.0;
            let xn = cfg.node(n - 1);
            let an = 0.5 * diffusion.variance_at(xn);
            let bn = diffusion.drift_at(xn);
            let kn = (2.0 * rate).sqrt() / diffusion.variance_at(xn).sqrt();
            diag[n - 1] = rate + 2.0 * an / h2 + 2.0 * an * kn / h + bn * kn;
            sub[n - 1] = -2.0 * an / h2;
            sup[n - 1] = 0.0;
        }
    }
    (sub, diag, sup)
}

/// Apply the discrete resolvent: solve `(rate I - L_h) w = g` on the grid
/// with the configured boundary closure.
///
/// The discretization is an M-matrix, so the discrete maximum principle
/// holds: `w >= 0` whenever `g >= 0`, and `sup w <= sup g / rate`.
pub fn resolvent_apply(
    diffusion: &DiffusionSpec,
    rate: f64,
    g: &[f64],
    cfg: &GridConfig,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    if !(rate > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "resolvent rate must be positive, got {rate}"
        )));
    }
    if g.len() != cfg.n_nodes() {
        return Err(Error::GridConfig(format!(
            "grid function has {} nodes, expected {}",
            g.len(),
            cfg.n_nodes()
        )));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameters(
            "grid function must be finite at every node".into(),
        ));
    }
    let (sub, diag, sup) = assemble_rows(diffusion, rate, cfg);
    let mut rhs = g.to_vec();
    if cfg.boundary == BoundaryKind::DirichletZero {
        rhs[0] = 0.0;
        let n = rhs.len();
        rhs[n - 1] = 0.0;
    }
    tridiag::solve(&sub, &diag, &sup, &rhs)
}

fn payoff_values(f: &FunctionSpec, cfg: &GridConfig) -> Result<Vec<f64>> {
    (0..cfg.n_nodes()).map(|j| f.eval(cfg.node(j))).collect()
}

struct FixedPoint {
    values: Vec<f64>,
    iterations: u32,
    final_change: f64,
}

fn iterate<D: Fn(&[f64], usize) -> f64>(
    game: &GameSpec,
    cfg: &GridConfig,
    rate: f64,
    driver: D,
) -> Result<FixedPoint> {
    cfg.validate()?;
    let n = cfg.n_nodes();
    let mut v = vec![0.0; n];
    let mut g = vec![0.0; n];
    let (sub, diag, sup) = assemble_rows(&game.diffusion, rate, cfg);
    for iter in 1..=cfg.max_iterations {
        for j in 0..n {
            g[j] = driver(&v, j);
        }
        if cfg.boundary == BoundaryKind::DirichletZero {
            g[0] = 0.0;
            g[n - 1] = 0.0;
        }
        let w = tridiag::solve(&sub, &diag, &sup, &g)?;
        let change = w
            .iter()
            .zip(v.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        v = w;
        if change <= cfg.tolerance {
            return Ok(FixedPoint {
                values: v,
                iterations: iter,
                final_change: change,
            });
        }
        if iter == cfg.max_iterations {
            return Err(Error::NonConvergence {
                iterations: iter,
                last_change: change,
            });
        }
    }
    unreachable!("loop either converges or errors")
}

/// Solve the common-constraint game on the grid.
pub fn solve_common(game: &GameSpec, cfg: &GridConfig) -> Result<GameSolution> {
    if game.mode != ConstraintMode::Common {
        return Err(Error::ModeMismatch {
            expected: ConstraintMode::Common,
            got: game.mode,
        });
    }
    let l = payoff_values(&game.lower, cfg)?;
    let u = payoff_values(&game.upper, cfg)?;
    let lambda = game.signal_rate;
    let fp = iterate(game, cfg, lambda + game.discount, |v, j| {
        lambda * l[j].max(v[j].min(u[j]))
    })?;
    let value = ValueGrid {
        lo: cfg.domain_lo,
        hi: cfg.domain_hi,
        step: cfg.step,
        mode: ConstraintMode::Common,
        values: fp.values,
    };
    let sets = extract_sets(&value, &game.lower, &game.upper, ConstraintMode::Common)?;
    Ok(GameSolution {
        value,
        sets,
        iterations: fp.iterations,
        final_change: fp.final_change,
    })
}

/// Solve the independent-constraint game on the grid.
pub fn solve_independent(game: &GameSpec, cfg: &GridConfig) -> Result<GameSolution> {
    if game.mode != ConstraintMode::Independent {
        return Err(Error::ModeMismatch {
            expected: ConstraintMode::Independent,
            got: game.mode,
        });
    }
    let l = payoff_values(&game.lower, cfg)?;
    let u = payoff_values(&game.upper, cfg)?;
    let lambda = game.signal_rate;
    let fp = iterate(game, cfg, 2.0 * lambda + game.discount, |v, j| {
        lambda * l[j].max(v[j]) + lambda * v[j].min(u[j])
    })?;
    let value = ValueGrid {
        lo: cfg.domain_lo,
        hi: cfg.domain_hi,
        step: cfg.step,
        mode: ConstraintMode::Independent,
        values: fp.values,
    };
    let sets = extract_sets(&value, &game.lower, &game.upper, ConstraintMode::Independent)?;
    Ok(GameSolution {
        value,
        sets,
        iterations: fp.iterations,
        final_change: fp.final_change,
    })
}

/// Solve in whichever mode the game specifies.
pub fn solve(game: &GameSpec, cfg: &GridConfig) -> Result<GameSolution> {
    match game.mode {
        ConstraintMode::Common => solve_common(game, cfg),
        ConstraintMode::Independent => solve_independent(game, cfg),
    }
}

/// Equality tolerance for the node classifications below. The open/closed
/// distinctions of the continuum sets cannot be resolved sharper than the
/// grid, so extracted intervals carry closed endpoints snapped to the
/// midpoint between the last node of one classification and the first of the
/// next.
pub const SET_EQUALITY_TOL: f64 = 1e-9;

/// Read the stopping sets off a converged grid.
///
/// The sup player's set is `{v < l}` plus, under the common constraint only,
/// the preemption branch `{v > l > u}`; the inf player's set is `{v >= u}`
/// (strict comparisons for the former, weak for the latter, both up to
/// [`SET_EQUALITY_TOL`]).
pub fn extract_sets(
    value: &ValueGrid,
    l: &FunctionSpec,
    u: &FunctionSpec,
    mode: ConstraintMode,
) -> Result<StoppingSets> {
    let n = value.n_nodes();
    let mut in_sup = vec![false; n];
    let mut in_inf = vec![false; n];
    for j in 0..n {
        let x = value.node(j);
        let v = value.values[j];
        let lv = l.eval(x)?;
        let uv = u.eval(x)?;
        let stop_low = v < lv - SET_EQUALITY_TOL;
        let preempt = v > lv + SET_EQUALITY_TOL && lv > uv + SET_EQUALITY_TOL;
        in_sup[j] = match mode {
            ConstraintMode::Common => stop_low || preempt,
            ConstraintMode::Independent => stop_low,
        };
        in_inf[j] = v >= uv - SET_EQUALITY_TOL;
    }
    Ok(StoppingSets::new(
        nodes_to_intervals(value, &in_sup)?,
        nodes_to_intervals(value, &in_inf)?,
    ))
}

fn nodes_to_intervals(grid: &ValueGrid, flags: &[bool]) -> Result<IntervalUnion> {
    let n = flags.len();
    let mut intervals = Vec::new();
    let mut start: Option<usize> = None;
    for j in 0..=n {
        let on = j < n && flags[j];
        match (start, on) {
            (None, true) => start = Some(j),
            (Some(s), false) => {
                // midpoint-snapped endpoints are open: the adjacent node is
                // excluded, and two unions abutting at the same midpoint
                // (the continuum's adjacent-but-disjoint sets) stay disjoint
                let (lo, closed_lo) = if s == 0 {
                    (grid.node(0), true)
                } else {
                    (0.5 * (grid.node(s - 1) + grid.node(s)), false)
                };
                let (hi, closed_hi) = if j == n {
                    (grid.node(n - 1), true)
                } else {
                    (0.5 * (grid.node(j - 1) + grid.node(j)), false)
                };
                intervals.push(Interval::new(lo, hi, closed_lo, closed_hi)?);
                start = None;
            }
            _ => {}
        }
    }
    IntervalUnion::new(intervals)
}
