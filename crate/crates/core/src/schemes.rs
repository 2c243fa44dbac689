//! Allocation schemes: the primal-dual optimizer, the grid oracle and the
//! traffic-proportional and equal-split baselines, plus the uniform
//! exploration policy used while collecting training data.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::domain::{equal_shares, PartitionVector, SliceSpec};
use crate::error::{Error, Result};
use crate::estimator::EstimatorModel;
use crate::optimizer::{default_action, solve_cell, EstimatorObjective, SliceObjective, SolveResult, SolverParams};

/// Default cap on the number of grid points the oracle may enumerate.
pub const DEFAULT_GRID_CAP: u64 = 2_000_000;

/// Everything a scheme may look at when partitioning one cell for one slot.
#[derive(Debug, Clone, Copy)]
pub struct CellContext<'a> {
    pub cell_id: u32,
    pub slot: u64,
    pub slices: &'a [SliceSpec],
    /// Observation `z` per active slice.
    pub observations: &'a [Vec<f64>],
    /// Ground-truth offered load per active slice for this slot.
    pub demands: &'a [f64],
    /// This cell's partition in the previous slot, if any.
    pub previous: Option<&'a PartitionVector>,
}

#[derive(Debug, Clone)]
pub struct Allocation {
    pub partition: PartitionVector,
    pub solve: Option<SolveResult>,
}

impl From<PartitionVector> for Allocation {
    fn from(partition: PartitionVector) -> Self {
        Allocation {
            partition,
            solve: None,
        }
    }
}

pub trait Scheme: Send + Sync {
    fn name(&self) -> &str;

    fn allocate(&self, ctx: &CellContext<'_>) -> Result<Allocation>;
}

/// `x_s = d_s / Σ d`; all-zero demand falls back to an equal split.
pub fn traffic_proportional(demands: &[f64]) -> Result<PartitionVector> {
    if demands.is_empty() {
        return Err(Error::Empty("demand vector"));
    }
    if let Some(d) = demands.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::InvalidArgument(format!("demand must be nonnegative, got {d}")));
    }
    let total: f64 = demands.iter().sum();
    if total == 0.0 {
        return Ok(equal_shares(demands.len()));
    }
    Ok(crate::domain::normalize_to_simplex(
        &demands.iter().map(|d| d / total).collect::<Vec<_>>(),
    )?)
}

pub fn equal_split(num_slices: usize) -> Result<PartitionVector> {
    default_action(num_slices)
}

/// Number of grid points with coordinates in `{0, 1/m, …, 1}` over `slices`
/// dimensions and sum at most 1, i.e. `C(m + slices, slices)`.
pub fn grid_size(divisions: u64, slices: usize) -> u64 {
    let mut acc: u128 = 1;
    for i in 1..=slices as u128 {
        acc = acc * (u128::from(divisions) + i) / i;
        if acc > u128::from(u64::MAX) {
            return u64::MAX;
        }
    }
    acc as u64
}

fn grid_divisions(grid_step: f64) -> Result<u64> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::InvalidArgument(format!("grid step must lie in (0, 1], got {grid_step}")));
    }
    let m = (1.0 / grid_step).round();
    if (m * grid_step - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("grid step {grid_step} does not divide 1")));
    }
    Ok(m as u64)
}

/// Every grid point of the feasible set in lexicographic order.
pub fn enumerate_grid(slices: usize, grid_step: f64) -> Result<Vec<Vec<f64>>> {
    let m = grid_divisions(grid_step)?;
    let mut out = Vec::new();
    let mut idx = vec![0u64; slices];
    fn rec(pos: usize, left: u64, m: u64, idx: &mut Vec<u64>, out: &mut Vec<Vec<f64>>) {
        if pos == idx.len() {
            out.push(idx.iter().map(|&k| k as f64 / m as f64).collect());
            return;
        }
        for k in 0..=left {
            idx[pos] = k;
            rec(pos + 1, left - k, m, idx, out);
        }
    }
    rec(0, m, m, &mut idx, &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOptimum {
    pub partition: PartitionVector,
    pub utility: f64,
    pub points: u64,
}

/// Exhaustive search of the surrogate utility over the grid; ties keep the
/// lexicographically first point.
pub fn oracle_grid(obj: &impl SliceObjective, grid_step: f64, cap: u64) -> Result<GridOptimum> {
    let slices = obj.num_slices();
    if slices == 0 {
        return Err(Error::Empty("slice set"));
    }
    let m = grid_divisions(grid_step)?;
    let points = grid_size(m, slices);
    if points > cap {
        return Err(Error::GridBudget { points, cap });
    }
    // The objective is separable, so each slice needs only m + 1 evaluations.
    let mut table = vec![vec![0.0; m as usize + 1]; slices];
    for (s, row) in table.iter_mut().enumerate() {
        for (k, v) in row.iter_mut().enumerate() {
            *v = obj.value(s, k as f64 / m as f64)?.ln_1p();
        }
    }

    struct Search<'a> {
        table: &'a [Vec<f64>],
        idx: Vec<usize>,
        best: Vec<usize>,
        best_value: f64,
    }
    impl Search<'_> {
        fn rec(&mut self, pos: usize, left: usize) {
            if pos == self.idx.len() {
                let v: f64 = self.idx.iter().enumerate().map(|(s, &k)| self.table[s][k]).sum();
                if v > self.best_value {
                    self.best_value = v;
                    self.best.clone_from(&self.idx);
                }
                return;
            }
            for k in 0..=left {
                self.idx[pos] = k;
                self.rec(pos + 1, left - k);
            }
        }
    }
    let mut search = Search {
        table: &table,
        idx: vec![0; slices],
        best: vec![0; slices],
        best_value: f64::NEG_INFINITY,
    };
    search.rec(0, m as usize);
    let shares: Vec<f64> = search.best.iter().map(|&k| k as f64 / m as f64).collect();
    Ok(GridOptimum {
        partition: PartitionVector::new(shares)?,
        utility: search.best_value,
        points,
    })
}

/// Derives an independent stream seed for (slot, cell).
pub(crate) fn slot_seed(seed: u64, slot: u64, cell: u32) -> u64 {
    let mut z = seed
        .wrapping_add(slot.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(u64::from(cell).wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Warm-started multi-start primal-dual optimizer over the estimator.
pub struct Idla {
    model: Arc<EstimatorModel>,
    params: SolverParams,
}

impl Idla {
    pub fn new(model: Arc<EstimatorModel>, params: SolverParams) -> Result<Self> {
        params.validate()?;
        Ok(Idla { model, params })
    }
}

impl Scheme for Idla {
    fn name(&self) -> &str {
        "idla"
    }

    fn allocate(&self, ctx: &CellContext<'_>) -> Result<Allocation> {
        let obj = EstimatorObjective::new(&self.model, ctx.observations)?;
        let init = match ctx.previous {
            Some(p) if p.len() == ctx.slices.len() => p.clone(),
            _ => default_action(ctx.slices.len())?,
        };
        let params = SolverParams {
            seed: slot_seed(self.params.seed, ctx.slot, ctx.cell_id),
            ..self.params.clone()
        };
        let solve = solve_cell(&obj, init.shares(), &params, ctx.cell_id)?;
        Ok(Allocation {
            partition: solve.partition.clone(),
            solve: Some(solve),
        })
    }
}

pub struct Oracle {
    model: Arc<EstimatorModel>,
    grid_step: f64,
    cap: u64,
}

impl Oracle {
    pub fn new(model: Arc<EstimatorModel>, grid_step: f64, cap: u64) -> Result<Self> {
        grid_divisions(grid_step)?;
        Ok(Oracle {
            model,
            grid_step,
            cap,
        })
    }
}

impl Scheme for Oracle {
    fn name(&self) -> &str {
        "oracle"
    }

    fn allocate(&self, ctx: &CellContext<'_>) -> Result<Allocation> {
        let obj = EstimatorObjective::new(&self.model, ctx.observations)?;
        Ok(oracle_grid(&obj, self.grid_step, self.cap)?.partition.into())
    }
}

/// Proportional to the true offered load of the slot.
pub struct Traffic;

impl Scheme for Traffic {
    fn name(&self) -> &str {
        "traffic"
    }

    fn allocate(&self, ctx: &CellContext<'_>) -> Result<Allocation> {
        Ok(traffic_proportional(ctx.demands)?.into())
    }
}

pub struct EqualSplit;

impl Scheme for EqualSplit {
    fn name(&self) -> &str {
        "equal"
    }

    fn allocate(&self, ctx: &CellContext<'_>) -> Result<Allocation> {
        Ok(equal_split(ctx.slices.len())?.into())
    }
}

/// Uniform draws over the simplex face `Σ x = 1` (flat Dirichlet).
pub struct Exploration {
    seed: u64,
}

impl Exploration {
    pub fn new(seed: u64) -> Self {
        Exploration { seed }
    }
}

impl Scheme for Exploration {
    fn name(&self) -> &str {
        "exploration"
    }

    fn allocate(&self, ctx: &CellContext<'_>) -> Result<Allocation> {
        let mut rng = ChaCha8Rng::seed_from_u64(slot_seed(self.seed, ctx.slot, ctx.cell_id));
        let draws: Vec<f64> = (0..ctx.slices.len()).map(|_| Exp1.sample(&mut rng)).collect();
        let total: f64 = draws.iter().sum();
        let raw: Vec<f64> = draws.iter().map(|d| d / total).collect();
        Ok(crate::domain::normalize_to_simplex(&raw)?.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    Idla,
    Traffic,
    Oracle,
    Equal,
}

impl SchemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::Idla => "idla",
            SchemeKind::Traffic => "traffic",
            SchemeKind::Oracle => "oracle",
            SchemeKind::Equal => "equal",
        }
    }
}

impl std::str::FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "idla" => Ok(SchemeKind::Idla),
            "traffic" => Ok(SchemeKind::Traffic),
            "oracle" => Ok(SchemeKind::Oracle),
            "equal" => Ok(SchemeKind::Equal),
            other => Err(Error::Config(format!("unknown scheme `{other}`"))),
        }
    }
}
