//! Reservoir with output feedback trained to hold a binary context set by
//! pulses; with pulses removed it keeps two stable responses.

use anyhow::Result;
use echodex_core::echo_index::{estimate_echo_index, IndexProtocol};
use echodex_core::training::{train_context_task, ContextTaskConfig};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::output::{num, Check, OutputDir};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    pub task: ContextTaskConfig,
    pub protocol: IndexProtocol,
    pub min_accuracy: f64,
    pub min_pca_variance: f64,
    pub expected_index: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            task: ContextTaskConfig::default(),
            protocol: IndexProtocol { ic_count: 100, ..Default::default() },
            min_accuracy: 0.95,
            min_pca_variance: 0.9,
            expected_index: 2,
        }
    }
}

impl Settings {
    /// Reduced reservoir and run lengths.
    pub fn small() -> Self {
        Settings { task: ContextTaskConfig::small(), ..Default::default() }
    }
}

pub fn run(s: &Settings, seed: u64, out: &mut OutputDir) -> Result<Vec<Check>> {
    let mut task = s.task.clone();
    task.reservoir.seed = seed;
    task.input_seed = seed;
    let o = train_context_task(&task)?;
    let pulse_free = o.task.network_input_without_pulses();
    let protocol = IndexProtocol { seed, ..s.protocol.clone() };
    let report = estimate_echo_index(&o.model.params, &pulse_free, &protocol)?;

    let checks = vec![
        Check::new(
            "context_accuracy",
            o.accuracy >= s.min_accuracy,
            format!("{} (minimum {})", o.accuracy, s.min_accuracy),
        ),
        Check::new(
            "pca_two_components",
            o.pca.cumulative_variance >= s.min_pca_variance,
            format!("{} (minimum {})", o.pca.cumulative_variance, s.min_pca_variance),
        ),
        Check::new(
            "pulse_free_index",
            report.index.definite() == Some(s.expected_index),
            format!("index {} notes {:?}", report.index, report.notes),
        ),
    ];

    out.write_json("model.json", &o.model)?;
    let start = task.train_len as i64;
    let rows: Vec<Vec<String>> = (0..task.test_len)
        .map(|i| {
            let k = start + 1 + i as i64;
            let t = o.task.targets.value(k).expect("test window inside the task");
            let pulse = o.task.pulses.value(k).expect("test window inside the task");
            vec![
                k.to_string(),
                num(o.closed_loop.outputs[(i, 0)]),
                num(o.closed_loop.outputs[(i, 1)]),
                num(t[0]),
                num(t[1]),
                num(pulse[0]),
                num(pulse[1]),
            ]
        })
        .collect();
    out.write_table("closed_loop.csv", &["k", "z_1", "z_2", "target_1", "target_2", "pulse_on", "pulse_off"], &rows)?;
    let rows: Vec<Vec<String>> = (0..o.pca.projections.nrows())
        .map(|i| vec![(start + 1 + i as i64).to_string(), num(o.pca.projections[(i, 0)]), num(o.pca.projections[(i, 1)])])
        .collect();
    out.write_table("pca.csv", &["k", "pc_1", "pc_2"], &rows)?;
    out.write_json("index.json", &report)?;
    out.write_json(
        "summary.json",
        &json!({
            "accuracy": o.accuracy,
            "pca_explained": o.pca.explained,
            "pca_cumulative_variance": o.pca.cumulative_variance,
            "train_nrmse": o.model.train_error,
            "test_nrmse": o.model.test_error,
            "pulse_free_index": report.index,
            "clusters": report.clusters.iter().map(|c| c.members.len()).collect::<Vec<_>>(),
            "checks": checks,
        }),
    )?;
    Ok(checks)
}
