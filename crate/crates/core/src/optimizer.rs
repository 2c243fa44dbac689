//! Per-cell primal-dual projected gradient over the resource simplex.
//!
//! Maximises `F(x) = Σ_s ln(f_s(x_s) + 1)` subject to `Σ_s x_s ≤ 1`,
//! `x ∈ [0, 1]^S`, where `f_s` is the learned per-slice satisfaction. The
//! solver runs `P` perturbed starts around a warm start, each iterating
//!
//! ```text
//! x_s ← clamp(x_s + δx · (f'_s / (f_s + 1) − λ), 0, 1)
//! λ   ← max(0, λ − δλ · (1 − Σ_s x_s))
//! ```
//!
//! with geometrically decaying steps, then repairs each final iterate onto
//! the simplex and keeps the start with the highest surrogate utility.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{equal_shares, normalize_to_simplex, validate_partition, PartitionVector};
use crate::error::{Error, Result};
use crate::estimator::EstimatorModel;

/// Per-slice objective terms `f_s` and their derivatives in `x_s`.
pub trait SliceObjective: Sync {
    fn num_slices(&self) -> usize;

    /// `(f_s(x), ∂f_s/∂x)`.
    fn value_and_grad(&self, slice: usize, x: f64) -> Result<(f64, f64)>;

    fn value(&self, slice: usize, x: f64) -> Result<f64> {
        Ok(self.value_and_grad(slice, x)?.0)
    }
}

/// The trained estimator evaluated against one cell's observations.
#[derive(Debug, Clone, Copy)]
pub struct EstimatorObjective<'a> {
    model: &'a EstimatorModel,
    observations: &'a [Vec<f64>],
}

impl<'a> EstimatorObjective<'a> {
    pub fn new(model: &'a EstimatorModel, observations: &'a [Vec<f64>]) -> Result<Self> {
        let expected = 2 * model.history_len() + 2;
        if let Some(z) = observations.iter().find(|z| z.len() != expected) {
            return Err(Error::Dimension {
                expected,
                actual: z.len(),
            });
        }
        Ok(EstimatorObjective {
            model,
            observations,
        })
    }
}

impl SliceObjective for EstimatorObjective<'_> {
    fn num_slices(&self) -> usize {
        self.observations.len()
    }

    fn value_and_grad(&self, slice: usize, x: f64) -> Result<(f64, f64)> {
        self.model.forward_and_grad(x, &self.observations[slice])
    }

    fn value(&self, slice: usize, x: f64) -> Result<f64> {
        self.model.forward(x, &self.observations[slice])
    }
}

/// Objective built from a closure, for analytic surrogates.
pub struct FnObjective<F> {
    slices: usize,
    f: F,
}

impl<F> FnObjective<F>
where
    F: Fn(usize, f64) -> (f64, f64) + Sync,
{
    pub fn new(slices: usize, f: F) -> Self {
        FnObjective { slices, f }
    }
}

impl<F> SliceObjective for FnObjective<F>
where
    F: Fn(usize, f64) -> (f64, f64) + Sync,
{
    fn num_slices(&self) -> usize {
        self.slices
    }

    fn value_and_grad(&self, slice: usize, x: f64) -> Result<(f64, f64)> {
        Ok((self.f)(slice, x))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    /// Number of perturbed start points P.
    pub starts: usize,
    /// Mean of the per-coordinate start perturbation.
    pub noise_mean: f64,
    /// Variance of the per-coordinate start perturbation.
    pub noise_variance: f64,
    pub step_x: f64,
    pub step_lambda: f64,
    /// Per-iteration multiplicative step decay.
    pub decay: f64,
    pub max_iterations: usize,
    /// Stop once `‖x⁽ⁱ⁾ − x⁽ⁱ⁻¹⁾‖₂` falls below this.
    pub tolerance: f64,
    pub initial_lambda: f64,
    pub seed: u64,
    /// Keep per-iteration rows in the result.
    pub record_trace: bool,
    /// Reassign budget left idle at termination, including share a slice
    /// holds beyond its prediction's saturation, when that raises the
    /// surrogate utility.
    pub fill_slack: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            starts: 5,
            noise_mean: 0.0,
            noise_variance: 0.05,
            step_x: 0.05,
            step_lambda: 0.1,
            decay: 0.99,
            max_iterations: 500,
            tolerance: 1e-4,
            initial_lambda: 0.0,
            seed: 0,
            record_trace: false,
            fill_slack: true,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        let ok = self.starts >= 1
            && self.step_x > 0.0
            && self.step_lambda > 0.0
            && self.decay > 0.0
            && self.decay <= 1.0
            && self.tolerance > 0.0
            && self.max_iterations >= 1
            && self.initial_lambda >= 0.0
            && self.noise_variance >= 0.0
            && self.noise_mean.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid solver parameters: {self:?}")))
        }
    }
}

/// Largest drop in a slice's prediction accepted when trimming its share.
const TRIM_TOLERANCE: f64 = 1e-3;

/// Smallest share in `[0, x]` whose prediction stays within
/// [`TRIM_TOLERANCE`] of `f(x)`, by bisection.
fn trim_share(obj: &impl SliceObjective, slice: usize, x: f64) -> Result<f64> {
    let target = obj.value(slice, x)? - TRIM_TOLERANCE;
    if obj.value(slice, 0.0)? >= target {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, x);
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if obj.value(slice, mid)? >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Terminal reuse of unallocated budget. Starting from `x` and from `x` with
/// every share trimmed, the slack `1 − Σx` is handed out proportionally or
/// wholly to one slice. Returns the best candidate if it beats `utility`.
fn reclaim_slack(obj: &impl SliceObjective, x: &[f64], utility: f64) -> Result<Option<(Vec<f64>, f64)>> {
    let trimmed = x
        .iter()
        .enumerate()
        .map(|(s, &v)| trim_share(obj, s, v))
        .collect::<Result<Vec<_>>>()?;
    let mut best = None;
    let mut best_u = utility;
    for base in [x.to_vec(), trimmed] {
        let sum: f64 = base.iter().sum();
        if sum >= 1.0 {
            continue;
        }
        let slack = 1.0 - sum;
        let mut candidates = Vec::with_capacity(base.len() + 1);
        if sum > 0.0 {
            candidates.push(base.iter().map(|v| (v / sum).min(1.0)).collect::<Vec<_>>());
        }
        for s in 0..base.len() {
            let mut c = base.clone();
            c[s] = (c[s] + slack).min(1.0);
            candidates.push(c);
        }
        for c in candidates {
            let c = normalize_to_simplex(&c)?.into_inner();
            let u = surrogate_utility(obj, &c)?;
            if u > best_u {
                best_u = u;
                best = Some(c);
            }
        }
    }
    Ok(best.map(|c| (c, best_u)))
}

/// One row of the optional convergence trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub start: usize,
    pub iteration: usize,
    pub share_sum: f64,
    pub lambda: f64,
    pub utility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartTrace {
    pub initial: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub final_partition: Vec<f64>,
    pub final_utility: f64,
    pub lambda_initial: f64,
    pub lambda_final: f64,
    pub lambda_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub partition: PartitionVector,
    pub utility: f64,
    pub best_start: usize,
    pub starts: Vec<StartTrace>,
    pub trace: Vec<TraceRow>,
}

impl SolveResult {
    pub fn mean_iterations(&self) -> f64 {
        self.starts.iter().map(|s| s.iterations as f64).sum::<f64>() / self.starts.len() as f64
    }
}

fn check_len(obj: &impl SliceObjective, x: &[f64]) -> Result<()> {
    if x.len() != obj.num_slices() {
        return Err(Error::Dimension {
            expected: obj.num_slices(),
            actual: x.len(),
        });
    }
    Ok(())
}

/// `Σ_s ln(f_s(x_s) + 1)`.
pub fn surrogate_utility(obj: &impl SliceObjective, x: &[f64]) -> Result<f64> {
    check_len(obj, x)?;
    let mut total = 0.0;
    for (s, &xs) in x.iter().enumerate() {
        total += obj.value(s, xs)?.ln_1p();
    }
    Ok(total)
}

/// `F(x) + λ (1 − Σ_s x_s)`.
pub fn lagrangian_value(obj: &impl SliceObjective, x: &[f64], lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("multiplier must be nonnegative, got {lambda}")));
    }
    let sum: f64 = x.iter().sum();
    Ok(surrogate_utility(obj, x)? + lambda * (1.0 - sum))
}

/// One projected primal ascent step followed by a projected dual descent
/// step. Returns `(x', λ', F(x))`, the utility at the pre-step point.
pub fn primal_dual_step(
    obj: &impl SliceObjective,
    x: &[f64],
    lambda: f64,
    step_x: f64,
    step_lambda: f64,
) -> Result<(Vec<f64>, f64, f64)> {
    check_len(obj, x)?;
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!("multiplier must be nonnegative, got {lambda}")));
    }
    let mut next = Vec::with_capacity(x.len());
    let mut utility = 0.0;
    for (s, &xs) in x.iter().enumerate() {
        let (f, df) = obj.value_and_grad(s, xs)?;
        utility += f.ln_1p();
        let partial = df / (f + 1.0) - lambda;
        next.push((xs + step_x * partial).clamp(0.0, 1.0));
    }
    let slack = 1.0 - next.iter().sum::<f64>();
    let lambda_next = (lambda - step_lambda * slack).max(0.0);
    Ok((next, lambda_next, utility))
}

/// Equal split over `num_slices` slices.
pub fn default_action(num_slices: usize) -> Result<PartitionVector> {
    if num_slices == 0 {
        return Err(Error::InvalidArgument("at least one slice is required".into()));
    }
    Ok(equal_shares(num_slices))
}

fn perturbed_starts(x_init: &[f64], params: &SolverParams) -> Result<Vec<Vec<f64>>> {
    let normal = Normal::new(params.noise_mean, params.noise_variance.sqrt())
        .map_err(|e| Error::Config(format!("start noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    (0..params.starts)
        .map(|_| {
            let raw: Vec<f64> = x_init
                .iter()
                .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
                .collect();
            Ok(normalize_to_simplex(&raw)?.into_inner())
        })
        .collect()
}

fn run_start(
    obj: &impl SliceObjective,
    start: usize,
    initial: Vec<f64>,
    params: &SolverParams,
) -> std::result::Result<(StartTrace, Vec<TraceRow>), (usize, Error)> {
    let mut x = initial.clone();
    let mut lambda = params.initial_lambda;
    let (mut dx, mut dl) = (params.step_x, params.step_lambda);
    let mut lambda_max = lambda;
    let mut rows = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < params.max_iterations {
        let (next, lambda_next, utility) =
            primal_dual_step(obj, &x, lambda, dx, dl).map_err(|e| (iterations, e))?;
        if params.record_trace {
            rows.push(TraceRow {
                start,
                iteration: iterations,
                share_sum: x.iter().sum(),
                lambda,
                utility,
            });
        }
        let moved = x
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        x = next;
        lambda = lambda_next;
        lambda_max = lambda_max.max(lambda);
        dx *= params.decay;
        dl *= params.decay;
        iterations += 1;
        if moved < params.tolerance {
            converged = true;
            break;
        }
    }
    let mut repaired = normalize_to_simplex(&x).map_err(|e| (iterations, e))?.into_inner();
    let mut final_utility = surrogate_utility(obj, &repaired).map_err(|e| (iterations, e))?;
    if params.fill_slack {
        if let Some((x, u)) = reclaim_slack(obj, &repaired, final_utility).map_err(|e| (iterations, e))? {
            repaired = x;
            final_utility = u;
        }
    }
    Ok((
        StartTrace {
            initial,
            iterations,
            converged,
            final_partition: repaired,
            final_utility,
            lambda_initial: params.initial_lambda,
            lambda_final: lambda,
            lambda_max,
        },
        rows,
    ))
}

/// Multi-start primal-dual search from `x_init` (the previous slot's
/// solution, or [`default_action`] on the first slot).
pub fn solve_cell(
    obj: &impl SliceObjective,
    x_init: &[f64],
    params: &SolverParams,
    cell_id: u32,
) -> Result<SolveResult> {
    params.validate()?;
    check_len(obj, x_init)?;
    if x_init.is_empty() {
        return Err(Error::Empty("slice set"));
    }
    validate_partition(x_init)?;

    let starts = perturbed_starts(x_init, params)?;
    let outcomes: Vec<_> = starts
        .into_par_iter()
        .enumerate()
        .map(|(p, init)| run_start(obj, p, init, params))
        .collect();

    let mut traces = Vec::with_capacity(outcomes.len());
    let mut rows = Vec::new();
    for (start, out) in outcomes.into_iter().enumerate() {
        let (t, r) = out.map_err(|(iteration, e)| Error::Solver {
            cell: cell_id,
            start,
            iteration,
            source: Box::new(e),
        })?;
        traces.push(t);
        rows.extend(r);
    }
    // strict comparison keeps the lowest index on ties
    let mut best = 0;
    for (i, t) in traces.iter().enumerate().skip(1) {
        if t.final_utility > traces[best].final_utility {
            best = i;
        }
    }
    let partition = PartitionVector::new(traces[best].final_partition.clone())?;
    Ok(SolveResult {
        partition,
        utility: traces[best].final_utility,
        best_start: best,
        starts: traces,
        trace: rows,
    })
}

/// Writes the convergence trace as CSV (`start,iteration,share_sum,lambda,utility`).
pub fn write_trace_csv<W: std::io::Write>(writer: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    if rows.is_empty() {
        w.write_record(["start", "iteration", "share_sum", "lambda", "utility"])?;
    }
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<trace csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn constant(n: usize, v: f64) -> FnObjective<impl Fn(usize, f64) -> (f64, f64) + Sync> {
        FnObjective::new(n, move |_, _| (v, 0.0))
    }

    #[test]
    fn utility_examples() {
        assert_abs_diff_eq!(
            surrogate_utility(&constant(4, 1.0), &[0.25; 4]).unwrap(),
            4.0 * 2f64.ln(),
            epsilon = 1e-15
        );
        assert_eq!(surrogate_utility(&constant(3, 0.0), &[0.1; 3]).unwrap(), 0.0);
        assert_abs_diff_eq!(
            surrogate_utility(&constant(1, 0.5), &[0.3]).unwrap(),
            1.5f64.ln(),
            epsilon = 1e-15
        );
        assert!(surrogate_utility(&constant(2, 0.5), &[0.3]).is_err());
    }

    #[test]
    fn lagrangian_examples() {
        let obj = FnObjective::new(2, |_, x: f64| (x, 1.0));
        let u = surrogate_utility(&obj, &[0.4, 0.6]).unwrap();
        assert_eq!(lagrangian_value(&obj, &[0.4, 0.6], 3.0).unwrap(), u);
        let u = surrogate_utility(&obj, &[0.5, 0.3]).unwrap();
        assert_eq!(lagrangian_value(&obj, &[0.5, 0.3], 0.0).unwrap(), u);
        assert_abs_diff_eq!(
            lagrangian_value(&obj, &[0.5, 0.3], 2.0).unwrap(),
            u + 0.4,
            epsilon = 1e-12
        );
        assert!(lagrangian_value(&obj, &[0.5, 0.3], -1.0).is_err());
    }

    #[test]
    fn fixed_point_with_zero_gradient() {
        let (x, l, _) = primal_dual_step(&constant(3, 0.3), &[0.2, 0.3, 0.1], 0.0, 0.5, 0.5).unwrap();
        assert_eq!(x, vec![0.2, 0.3, 0.1]);
        assert_eq!(l, 0.0);
    }

    #[test]
    fn large_multiplier_hits_floor() {
        let obj = FnObjective::new(2, |_, _| (0.5, 0.2));
        let (x, l, _) = primal_dual_step(&obj, &[0.3, 0.6], 100.0, 0.1, 0.1).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);
        assert_abs_diff_eq!(l, 100.0 - 0.1, epsilon = 1e-12);
    }

    #[test]
    fn hand_computed_single_slice_step() {
        // f(x) = 1 - exp(-2x)
        let obj = FnObjective::new(1, |_, x: f64| (1.0 - (-2.0 * x).exp(), 2.0 * (-2.0 * x).exp()));
        let (x, l, u) = primal_dual_step(&obj, &[0.3], 0.4, 0.05, 0.1).unwrap();
        let f = 1.0 - (-0.6f64).exp();
        let df = 2.0 * (-0.6f64).exp();
        let x1 = 0.3 + 0.05 * (df / (f + 1.0) - 0.4);
        assert_abs_diff_eq!(x[0], x1, epsilon = 1e-12);
        assert_abs_diff_eq!(l, (0.4 - 0.1 * (1.0 - x1)).max(0.0), epsilon = 1e-12);
        assert_abs_diff_eq!(u, f.ln_1p(), epsilon = 1e-12);
    }

    #[test]
    fn default_action_examples() {
        assert_eq!(default_action(4).unwrap().shares(), &[0.25; 4]);
        assert_eq!(default_action(1).unwrap().shares(), &[1.0]);
        assert_abs_diff_eq!(default_action(3).unwrap().sum(), 1.0, epsilon = 1e-12);
        assert!(default_action(0).is_err());
    }

    fn saturating() -> FnObjective<impl Fn(usize, f64) -> (f64, f64) + Sync> {
        let k = [3.0, 6.0, 1.5];
        FnObjective::new(3, move |s, x: f64| {
            let e = (-k[s] * x).exp();
            (1.0 - e, k[s] * e)
        })
    }

    #[test]
    fn solution_is_feasible_and_best_of_starts() {
        let params = SolverParams {
            seed: 17,
            record_trace: true,
            ..SolverParams::default()
        };
        let r = solve_cell(&saturating(), &[0.2, 0.2, 0.2], &params, 0).unwrap();
        assert!(r.partition.validate().is_ok());
        assert_eq!(r.starts.len(), 5);
        let max = r.starts.iter().map(|s| s.final_utility).fold(f64::MIN, f64::max);
        assert_eq!(r.utility, max);
        assert!(r.starts.iter().all(|s| s.lambda_final >= 0.0));
        assert!(r.trace.iter().all(|row| row.lambda >= 0.0));
        assert!(!r.trace.is_empty());
    }

    #[test]
    fn solve_is_deterministic() {
        let params = SolverParams {
            seed: 99,
            ..SolverParams::default()
        };
        let a = solve_cell(&saturating(), &[0.5, 0.2, 0.1], &params, 0).unwrap();
        let b = solve_cell(&saturating(), &[0.5, 0.2, 0.1], &params, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn symmetric_slices_split_evenly() {
        let obj = FnObjective::new(2, |_, x: f64| {
            let e = (-4.0 * x).exp();
            (1.0 - e, 4.0 * e)
        });
        let r = solve_cell(&obj, &[0.5, 0.5], &SolverParams::default(), 0).unwrap();
        assert!((r.partition[0] - r.partition[1]).abs() <= 0.02, "{:?}", r.partition);
    }

    #[test]
    fn saturated_share_is_handed_to_a_stalled_slice() {
        // Slice 0 saturates past 0.2; slice 1 sits on a flat 0.1 until 0.7.
        let step = |x: f64, at: f64, lo: f64| {
            let s = 1.0 / (1.0 + (-(x - at) * 200.0).exp());
            (lo + (1.0 - lo) * s, (1.0 - lo) * 200.0 * s * (1.0 - s))
        };
        let obj = FnObjective::new(2, move |s, x: f64| if s == 0 { step(x, 0.15, 0.0) } else { step(x, 0.7, 0.1) });
        let params = SolverParams {
            noise_variance: 1e-6,
            ..SolverParams::default()
        };
        let stalled = SolverParams {
            fill_slack: false,
            ..params.clone()
        };
        let a = solve_cell(&obj, &[0.5, 0.5], &stalled, 0).unwrap();
        let b = solve_cell(&obj, &[0.5, 0.5], &params, 0).unwrap();
        assert!(a.utility < 1.0);
        assert!(b.utility > 2.0 * 2f64.ln() - 0.01, "{:?}", b.partition);
        assert!(validate_partition(b.partition.shares()).is_ok());
    }

    #[test]
    fn slack_is_filled_without_losing_utility() {
        // Flat once x > 0.1: the search stalls below the budget.
        let obj = FnObjective::new(2, |_, x: f64| {
            let e = (-60.0 * x).exp();
            (1.0 - e, 60.0 * e)
        });
        let params = SolverParams {
            noise_variance: 1e-6,
            ..SolverParams::default()
        };
        let stalled = SolverParams {
            fill_slack: false,
            ..params.clone()
        };
        let a = solve_cell(&obj, &[0.3, 0.3], &stalled, 0).unwrap();
        let b = solve_cell(&obj, &[0.3, 0.3], &params, 0).unwrap();
        assert!(a.partition.sum() < 0.99);
        assert_abs_diff_eq!(b.partition.sum(), 1.0, epsilon = 1e-9);
        assert!(b.utility >= a.utility);
    }

    #[test]
    fn rejects_infeasible_warm_start() {
        assert!(solve_cell(&saturating(), &[0.6, 0.6, 0.0], &SolverParams::default(), 0).is_err());
        assert!(solve_cell(&saturating(), &[0.5, 0.5], &SolverParams::default(), 0).is_err());
    }

    #[test]
    fn objective_errors_carry_context() {
        let obj = FnObjective::new(2, |_, _| (f64::NAN, 0.0));
        struct Failing;
        impl SliceObjective for Failing {
            fn num_slices(&self) -> usize {
                2
            }
            fn value_and_grad(&self, _: usize, _: f64) -> Result<(f64, f64)> {
                Err(Error::NonFiniteInput)
            }
        }
        let _ = obj;
        match solve_cell(&Failing, &[0.5, 0.5], &SolverParams::default(), 7) {
            Err(Error::Solver { cell: 7, start: 0, iteration: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trace_csv_header() {
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &[TraceRow { start: 0, iteration: 1, share_sum: 0.5, lambda: 1.0, utility: 0.2 }]).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("start,iteration,share_sum,lambda,utility\n"));
    }
}
