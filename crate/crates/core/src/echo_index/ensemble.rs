use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, orbit_from, DrivenSystem, State, Trajectory};
use crate::error::{Error, Result};
use crate::input::InputSequence;
use crate::rng::{self, streams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialConditions {
    /// `count` points uniform in `[-L, L]^N`; point `i` comes from its own
    /// substream, so a larger count extends a smaller one.
    Sampled { count: usize, seed: u64 },
    Explicit(Vec<State>),
}

pub fn sample_initial_conditions(dim: usize, bound: f64, count: usize, seed: u64) -> Vec<State> {
    (0..count)
        .map(|i| {
            let mut r = rng::substream(seed, streams::INITIAL_CONDITION_BASE + i as u64);
            State::from((0..dim).map(|_| rng::uniform(&mut r, -bound, bound)).collect::<Vec<_>>())
        })
        .collect()
}

/// Initial conditions evolved under one input. Only the last `horizon`
/// states (times `transient + 1 ..= transient + horizon`) are kept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRun {
    pub initial_conditions: Vec<State>,
    pub transient: usize,
    pub horizon: usize,
    pub trajectories: Vec<Trajectory>,
}

impl EnsembleRun {
    /// Rows `ic_id,k,x_1,...,x_N`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let n = self.initial_conditions.first().map_or(0, State::dim);
        let mut header = vec!["ic_id".to_string(), "k".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        out.write_record(&header)?;
        for (id, t) in self.trajectories.iter().enumerate() {
            for (j, s) in t.states.iter().enumerate() {
                let mut rec = vec![id.to_string(), (t.anchor + j as i64).to_string()];
                rec.extend(s.as_slice().iter().map(|v| format!("{v:?}")));
                out.write_record(&rec)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Evolves every initial condition from time 0 through `transient + horizon`
/// steps of `input`. Members run in parallel; results are gathered in
/// initial-condition order.
pub fn run_ensemble<S: DrivenSystem + ?Sized>(
    sys: &S,
    input: &InputSequence,
    ics: &InitialConditions,
    transient: usize,
    horizon: usize,
) -> Result<EnsembleRun> {
    if horizon == 0 {
        return Err(Error::invalid("ensemble horizon must be positive"));
    }
    let initial_conditions = match ics {
        InitialConditions::Sampled { count, seed } => {
            sample_initial_conditions(sys.state_dim(), sys.bound(), *count, *seed)
        }
        InitialConditions::Explicit(v) => v.clone(),
    };
    if initial_conditions.is_empty() {
        return Err(Error::invalid("ensemble needs at least one initial condition"));
    }
    input.require(1, (transient + horizon) as i64)?;
    let trajectories = initial_conditions
        .par_iter()
        .map(|x0| {
            let x = evolve(sys, input, 0, x0, transient)?;
            let mut t = orbit_from(sys, input, transient as i64, &x, horizon)?;
            t.states.remove(0);
            t.anchor += 1;
            Ok(t)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleRun { initial_conditions, transient, horizon, trajectories })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::input::{gen_two_symbol, Window};
    use crate::systems;

    #[test]
    fn single_and_duplicate_members() {
        let (u1, u2) = systems::switching_inputs();
        let u = gen_two_symbol(&u1, &u2, 0.5, Window::new(1, 100), 0).unwrap();
        let p = systems::switching_2d();
        let one = run_ensemble(&p, &u, &InitialConditions::Sampled { count: 1, seed: 4 }, 10, 20).unwrap();
        assert_eq!(one.trajectories.len(), 1);
        assert_eq!(one.trajectories[0].len(), 20);
        assert_eq!(one.trajectories[0].anchor, 11);
        let x = State::from(vec![0.2, -0.3]);
        let two = run_ensemble(&p, &u, &InitialConditions::Explicit(vec![x.clone(), x]), 5, 30).unwrap();
        assert_eq!(two.trajectories[0], two.trajectories[1]);
    }

    #[test]
    fn sampling_prefix_stable_and_bounded() {
        let a = sample_initial_conditions(3, 1.0, 10, 9);
        let b = sample_initial_conditions(3, 1.0, 25, 9);
        assert_eq!(a[..], b[..10]);
        assert!(b.iter().all(|s| s.norm_inf() <= 1.0));
    }

    #[test]
    fn window_checked() {
        let u = gen_two_symbol(&[1.0], &[-1.0], 0.5, Window::new(1, 50), 0).unwrap();
        let p = systems::scalar_bistable(0.1);
        let r = run_ensemble(&p, &u, &InitialConditions::Sampled { count: 2, seed: 0 }, 40, 11);
        assert!(matches!(r, Err(Error::WindowExhausted { .. })));
    }

    #[test]
    fn csv_layout() {
        let u = gen_two_symbol(&[1.0], &[-1.0], 0.5, Window::new(1, 10), 0).unwrap();
        let p = systems::scalar_bistable(0.1);
        let run = run_ensemble(&p, &u, &InitialConditions::Sampled { count: 2, seed: 0 }, 3, 2).unwrap();
        let mut buf = Vec::new();
        run.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "ic_id,k,x_1");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0,4,"));
        assert!(lines[4].starts_with("1,5,"));
    }
}
