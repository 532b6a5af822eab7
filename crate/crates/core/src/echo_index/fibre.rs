use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contraction::Region;
use crate::dynamics::{euclidean, DrivenSystem, State};
use crate::error::{Error, Result};
use crate::input::InputSequence;
use crate::rng::{self, streams};

/// Starting set for a pullback approximation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FibreGrid {
    Grid { region: Region, per_axis: usize },
    Cloud { region: Region, count: usize, seed: u64 },
}

impl FibreGrid {
    /// 33 points per axis up to two dimensions, a 1000-point cloud beyond.
    pub fn default_for(n: usize, bound: f64) -> Self {
        let region = Region::full(n, bound);
        if n <= 2 {
            FibreGrid::Grid { region, per_axis: 33 }
        } else {
            FibreGrid::Cloud { region, count: 1000, seed: 0 }
        }
    }

    pub fn region(&self) -> &Region {
        match self {
            FibreGrid::Grid { region, .. } | FibreGrid::Cloud { region, .. } => region,
        }
    }

    pub fn points(&self) -> Result<Vec<State>> {
        match self {
            FibreGrid::Grid { region, per_axis } => region.grid(&vec![*per_axis; region.dim()]),
            FibreGrid::Cloud { region, count, seed } => {
                if *count == 0 {
                    return Err(Error::invalid("fibre cloud needs at least one point"));
                }
                let mut r = rng::substream(*seed, streams::FIBRE_CLOUD);
                Ok((0..*count)
                    .map(|_| {
                        State::from(
                            region.lo().iter().zip(region.hi()).map(|(l, h)| rng::uniform(&mut r, *l, *h)).collect::<Vec<_>>(),
                        )
                    })
                    .collect())
            }
        }
    }
}

/// Image at time `time` of a starting set placed at `time - depth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PullbackFibre {
    pub time: i64,
    pub depth: usize,
    pub points: Vec<State>,
    /// Diameter after each step; entry 0 is the starting set.
    pub diameter_trace: Vec<f64>,
}

impl PullbackFibre {
    pub fn diameter(&self) -> f64 {
        *self.diameter_trace.last().expect("trace holds the starting diameter")
    }
}

/// Largest pairwise Euclidean distance; zero for fewer than two points.
pub fn point_set_diameter(points: &[State]) -> f64 {
    (0..points.len())
        .into_par_iter()
        .map(|i| {
            points[i + 1..]
                .iter()
                .map(|q| euclidean(points[i].as_slice(), q.as_slice()))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Evolves the starting set from `n - depth` to `n` under `input` and
/// records how its diameter shrinks.
pub fn pullback_fibre<S: DrivenSystem + ?Sized>(
    sys: &S,
    input: &InputSequence,
    n: i64,
    depth: usize,
    grid: &FibreGrid,
) -> Result<PullbackFibre> {
    if grid.region().dim() != sys.state_dim() {
        return Err(Error::DimensionMismatch { what: "fibre region", expected: sys.state_dim(), got: grid.region().dim() });
    }
    if input.dim() != sys.input_dim() {
        return Err(Error::DimensionMismatch { what: "input sequence", expected: sys.input_dim(), got: input.dim() });
    }
    let start = n - depth as i64;
    if depth > 0 {
        input.require(start + 1, n)?;
    }
    let mut points = grid.points()?;
    let mut diameter_trace = Vec::with_capacity(depth + 1);
    diameter_trace.push(point_set_diameter(&points));
    for k in start + 1..=n {
        let u = input.value_unchecked(k);
        points = points.into_par_iter().map(|x| State(sys.apply(u, &x.0))).collect();
        diameter_trace.push(point_set_diameter(&points));
    }
    Ok(PullbackFibre { time: n, depth, points, diameter_trace })
}
