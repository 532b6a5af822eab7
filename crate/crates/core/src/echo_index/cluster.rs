use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::ensemble::{run_ensemble, EnsembleRun, InitialConditions};
use crate::dynamics::{euclidean, DrivenSystem, State};
use crate::error::{Error, Result};
use crate::input::InputSequence;

/// Shortest tail accepted by the clustering.
pub const MIN_WINDOW: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EchoIndex {
    Definite(usize),
    Indefinite,
}

impl EchoIndex {
    pub fn definite(self) -> Option<usize> {
        match self {
            EchoIndex::Definite(n) => Some(n),
            EchoIndex::Indefinite => None,
        }
    }
}

impl fmt::Display for EchoIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EchoIndex::Definite(n) => write!(f, "{n}"),
            EchoIndex::Indefinite => f.write_str("indefinite"),
        }
    }
}

// A number when definite, the string "indefinite" otherwise.
impl Serialize for EchoIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            EchoIndex::Definite(n) => s.serialize_u64(*n as u64),
            EchoIndex::Indefinite => s.serialize_str("indefinite"),
        }
    }
}

impl<'de> Deserialize<'de> for EchoIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            N(usize),
            S(String),
        }
        match Repr::deserialize(d)? {
            Repr::N(0) => Err(serde::de::Error::custom("echo index must be positive")),
            Repr::N(n) => Ok(EchoIndex::Definite(n)),
            Repr::S(s) if s == "indefinite" => Ok(EchoIndex::Indefinite),
            Repr::S(s) => Err(serde::de::Error::custom(format!("unknown echo index {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    /// Initial-condition ids, ascending.
    pub members: Vec<usize>,
    /// Lowest member id.
    pub representative: usize,
    pub final_state: State,
    /// Representative's states over the clustering window.
    #[serde(skip)]
    pub tail: Vec<State>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowDiagnostic {
    /// Offsets into the clustering window, half-open.
    pub start: usize,
    pub end: usize,
    pub clusters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscalationLevel {
    pub transient: usize,
    pub ic_count: usize,
    pub index: EchoIndex,
    pub min_separation: Option<f64>,
    pub max_diameter: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftCheck {
    pub shift: i64,
    pub index: EchoIndex,
    pub agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EchoIndexReport {
    pub index: EchoIndex,
    pub cluster_tol: f64,
    pub window: usize,
    pub clusters: Vec<ClusterSummary>,
    /// Smallest distance between members of different clusters over the
    /// window; `None` with a single cluster.
    pub min_separation: Option<f64>,
    /// Largest distance inside one cluster at the final step.
    pub max_diameter: f64,
    /// Cluster counts over three equal subwindows.
    pub diagnostics: Vec<WindowDiagnostic>,
    /// Fraction of initial conditions not involved in an ambiguous pair.
    pub coverage: f64,
    pub notes: Vec<String>,
    pub escalation: Vec<EscalationLevel>,
    pub shift_check: Option<ShiftCheck>,
    /// Whether the index repeated across two consecutive escalation levels.
    pub stable: bool,
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind((0..n).collect())
    }
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }
    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Lower root wins so labels follow initial-condition order.
        if ra < rb {
            self.0[rb] = ra;
        } else {
            self.0[ra] = rb;
        }
    }
    /// Groups of indices, each ascending, ordered by smallest member.
    fn groups(&mut self) -> Vec<Vec<usize>> {
        let n = self.0.len();
        let mut by_root: Vec<Vec<usize>> = vec![Vec::new(); n];
        for i in 0..n {
            let r = self.find(i);
            by_root[r].push(i);
        }
        by_root.into_iter().filter(|g| !g.is_empty()).collect()
    }
}

/// Pairwise (max, min) distance over `tails[..][range]`, upper triangle,
/// row-major.
fn pair_extremes(tails: &[&[State]], range: std::ops::Range<usize>) -> Vec<(usize, usize, f64, f64)> {
    let n = tails.len();
    (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let range = range.clone();
            (i + 1..n).map(move |j| {
                let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
                for k in range.clone() {
                    let d = euclidean(tails[i][k].as_slice(), tails[j][k].as_slice());
                    hi = hi.max(d);
                    lo = lo.min(d);
                }
                (i, j, hi, lo)
            })
        })
        .collect()
}

fn count_clusters(n: usize, pairs: &[(usize, usize, f64, f64)], tol: f64) -> usize {
    let mut uf = UnionFind::new(n);
    for &(i, j, hi, _) in pairs {
        if hi <= tol {
            uf.union(i, j);
        }
    }
    uf.groups().len()
}

/// Single-linkage clustering of the last `window` states of each trajectory
/// under the max-over-window Euclidean distance.
pub fn cluster_asymptotics(run: &EnsembleRun, cluster_tol: f64, window: usize) -> Result<EchoIndexReport> {
    if window < MIN_WINDOW {
        return Err(Error::invalid(format!("clustering window {window} shorter than {MIN_WINDOW} steps")));
    }
    if window > run.horizon {
        return Err(Error::invalid(format!("clustering window {window} exceeds horizon {}", run.horizon)));
    }
    if !(cluster_tol > 0.0 && cluster_tol.is_finite()) {
        return Err(Error::invalid(format!("cluster tolerance must be positive, got {cluster_tol}")));
    }
    let n = run.trajectories.len();
    let tails: Vec<&[State]> = run.trajectories.iter().map(|t| &t.states[t.len() - window..]).collect();

    let pairs = pair_extremes(&tails, 0..window);
    let mut uf = UnionFind::new(n);
    for &(i, j, hi, _) in &pairs {
        if hi <= cluster_tol {
            uf.union(i, j);
        }
    }
    let groups = uf.groups();
    let mut label = vec![0; n];
    for (c, g) in groups.iter().enumerate() {
        for &i in g {
            label[i] = c;
        }
    }

    let (lo_band, hi_band) = (cluster_tol / 4.0, 4.0 * cluster_tol);
    let mut ambiguous = vec![false; n];
    let mut min_separation: Option<f64> = None;
    let mut max_diameter = 0.0f64;
    for &(i, j, hi, lo) in &pairs {
        if (lo_band..=hi_band).contains(&hi) {
            ambiguous[i] = true;
            ambiguous[j] = true;
        }
        if label[i] == label[j] {
            max_diameter = max_diameter.max(tails[i][window - 1].distance(&tails[j][window - 1]));
        } else {
            min_separation = Some(min_separation.map_or(lo, |m| m.min(lo)));
        }
    }

    let third = window / 3;
    let diagnostics: Vec<WindowDiagnostic> = (0..3)
        .map(|w| {
            let start = window - (3 - w) * third;
            let end = start + third;
            let p = pair_extremes(&tails, start..end);
            WindowDiagnostic { start, end, clusters: count_clusters(n, &p, cluster_tol) }
        })
        .collect();

    let mut notes = Vec::new();
    let n_amb = ambiguous.iter().filter(|&&a| a).count();
    if n_amb > 0 {
        notes.push(format!("{n_amb} trajectories have a pairwise distance inside [{lo_band:e}, {hi_band:e}]"));
    }
    if diagnostics.iter().any(|d| d.clusters != groups.len()) {
        notes.push("cluster count changes across subwindows".to_string());
    }
    if min_separation.is_some_and(|s| s <= cluster_tol) {
        notes.push("clusters approach each other within the tolerance".to_string());
    }
    if max_diameter >= cluster_tol {
        notes.push("a cluster is wider than the tolerance at the final step".to_string());
    }
    let index = if notes.is_empty() { EchoIndex::Definite(groups.len()) } else { EchoIndex::Indefinite };

    let clusters = groups
        .into_iter()
        .map(|members| {
            let representative = members[0];
            ClusterSummary {
                final_state: tails[representative][window - 1].clone(),
                tail: tails[representative].to_vec(),
                representative,
                members,
            }
        })
        .collect();

    Ok(EchoIndexReport {
        index,
        cluster_tol,
        window,
        clusters,
        min_separation,
        max_diameter,
        diagnostics,
        coverage: 1.0 - n_amb as f64 / n as f64,
        notes,
        escalation: Vec::new(),
        shift_check: None,
        stable: false,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexProtocol {
    pub ic_count: usize,
    pub seed: u64,
    pub transient: usize,
    pub window: usize,
    pub cluster_tol: f64,
    /// Extra levels after the first; each doubles the transient and adds
    /// half again as many initial conditions.
    pub max_escalations: usize,
    /// Shift `m` for the spot check at `sigma^m(u)`; zero disables it.
    pub shift: i64,
}

impl Default for IndexProtocol {
    fn default() -> Self {
        IndexProtocol {
            ic_count: 30,
            seed: 0,
            transient: 200,
            window: 60,
            cluster_tol: 1e-3,
            max_escalations: 3,
            shift: 25,
        }
    }
}

impl IndexProtocol {
    fn level(&self, l: usize) -> (usize, usize) {
        let mut ics = self.ic_count;
        for _ in 0..l {
            ics += ics.div_ceil(2);
        }
        (self.transient << l, ics)
    }

    fn covered(&self, input: &InputSequence, l: usize, shift: i64) -> bool {
        let (t, _) = self.level(l);
        input.first() <= 1 + shift && input.last() >= (t + self.window) as i64 + shift
    }
}

fn run_level<S: DrivenSystem + ?Sized>(
    sys: &S,
    input: &InputSequence,
    p: &IndexProtocol,
    l: usize,
) -> Result<EchoIndexReport> {
    let (transient, ic_count) = p.level(l);
    let run = run_ensemble(sys, input, &InitialConditions::Sampled { count: ic_count, seed: p.seed }, transient, p.window)?;
    cluster_asymptotics(&run, p.cluster_tol, p.window)
}

/// Echo index under escalating transients and ensemble sizes, stopping once
/// two consecutive levels agree on a definite index, followed by a spot
/// check on a shifted copy of the input.
pub fn estimate_echo_index<S: DrivenSystem + ?Sized>(
    sys: &S,
    input: &InputSequence,
    protocol: &IndexProtocol,
) -> Result<EchoIndexReport> {
    if protocol.ic_count == 0 {
        return Err(Error::invalid("protocol needs at least one initial condition"));
    }
    let mut levels = Vec::new();
    let mut notes = Vec::new();
    let mut last: Option<EchoIndexReport> = None;
    let mut stable = false;
    let mut final_level = 0;
    for l in 0..=protocol.max_escalations {
        if l > 0 && !protocol.covered(input, l, 0) {
            notes.push(format!("input window too short for escalation level {l}"));
            break;
        }
        let rep = run_level(sys, input, protocol, l)?;
        let (transient, ic_count) = protocol.level(l);
        levels.push(EscalationLevel {
            transient,
            ic_count,
            index: rep.index,
            min_separation: rep.min_separation,
            max_diameter: rep.max_diameter,
        });
        final_level = l;
        let agree = last.as_ref().is_some_and(|p| p.index == rep.index && rep.index.definite().is_some());
        last = Some(rep);
        if agree {
            stable = true;
            break;
        }
    }
    let mut report = last.expect("level 0 always runs");
    if !stable {
        notes.push("index did not repeat across two consecutive escalation levels".to_string());
    }

    let m = protocol.shift;
    if m != 0 {
        let chosen = [m, -m].into_iter().find(|&s| protocol.covered(input, final_level, s));
        match chosen {
            Some(s) => {
                let shifted = run_level(sys, &input.shift(s), protocol, final_level)?;
                let agrees = shifted.index == report.index;
                if !agrees {
                    notes.push(format!("index {} at shift {s} differs", shifted.index));
                }
                report.shift_check = Some(ShiftCheck { shift: s, index: shifted.index, agrees });
            }
            None => notes.push(format!("input window too short for a shift check at +-{m}")),
        }
    }
    report.notes.extend(notes);
    report.escalation = levels;
    report.stable = stable;
    Ok(report)
}
