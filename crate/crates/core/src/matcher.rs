//! Server-side asset–operator matching.
//!
//! Sessions are visited in order of their start time. Sessions that start
//! within one advertisement interval of each other form one activation event
//! and are assigned jointly by exhaustive search over injective maps from
//! free wearables to sessions, minimizing the summed distance. A wearable
//! stays bound to its session until the session stops, and every assignment
//! carries a trust level derived from the distance gap to the nearest
//! competing wearable.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::edge::{DistanceReport, DEFAULT_ADV_INTERVAL};
use crate::error::{Error, Result};

/// Minimum distance gap (m) to the runner-up for a `Sure` assignment.
pub const DEFAULT_MARGIN: f64 = 0.75;
/// Number of concurrent wearables or tags the system is sized for.
pub const SOFT_ACTOR_LIMIT: usize = 15;
/// Per-event size bound for [`brute_force_solve`].
pub const BRUTE_FORCE_LIMIT: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trust {
    Sure,
    Unsure,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Trust threshold in meters; the gap must strictly exceed it.
    pub margin_m: f64,
    /// Activations whose start times lie within this many seconds of the
    /// first activation of an event are searched jointly.
    pub window_s: f64,
}

impl Default for MatchConfig {
    fn default() -> Self {
        MatchConfig {
            margin_m: DEFAULT_MARGIN,
            window_s: DEFAULT_ADV_INTERVAL,
        }
    }
}

/// Margin to the closest competitor and the resulting trust level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrustLevel {
    pub trust: Trust,
    pub margin: f64,
}

/// Classifies an assignment: `Sure` iff every other wearable's distance
/// differs from the assigned one by more than `margin_m`.
pub fn trust_classify(assigned_distance: f64, others: &[f64], margin_m: f64) -> TrustLevel {
    let margin = others
        .iter()
        .map(|o| (assigned_distance - o).abs())
        .fold(f64::INFINITY, f64::min);
    let trust = if margin > margin_m { Trust::Sure } else { Trust::Unsure };
    TrustLevel { trust, margin }
}

mod inf_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Assignment of one tag session. `margin_m` is `null` in JSON when there is
/// no competing wearable (or nothing was assigned).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    #[serde(rename = "tag")]
    pub tag_id: String,
    #[serde(rename = "start_s")]
    pub start: f64,
    #[serde(rename = "stop_s")]
    pub stop: f64,
    #[serde(rename = "wearable")]
    pub assigned: Option<String>,
    pub trust: Trust,
    #[serde(rename = "margin_m", with = "inf_as_null")]
    pub margin: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
struct SessionRow {
    tag: String,
    start: f64,
    stop: f64,
    /// Distance per wearable index; `INFINITY` when no report exists.
    distance: Vec<f64>,
}

/// Session boundary, for inspection of the event timeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Boundary {
    pub ts: f64,
    pub tag: String,
    pub starts: bool,
}

#[derive(Debug, Clone)]
pub struct MatchProblem {
    pub wearables: BTreeSet<String>,
    pub tags: BTreeSet<String>,
    pub reports: Vec<DistanceReport>,
    sessions: Vec<SessionRow>,
}

impl MatchProblem {
    /// Builds the problem; the wearable and tag sets are read off the reports.
    pub fn from_reports(reports: Vec<DistanceReport>) -> Result<Self> {
        Self::new(BTreeSet::new(), reports)
    }

    /// Like [`from_reports`](Self::from_reports) with additional known
    /// wearables that may have heard nothing.
    pub fn new(extra_wearables: BTreeSet<String>, reports: Vec<DistanceReport>) -> Result<Self> {
        let mut wearables = extra_wearables;
        let mut tags = BTreeSet::new();
        for r in &reports {
            if !(r.distance.is_finite() && r.distance > 0.0) {
                return Err(Error::domain(format!(
                    "report {}/{} has invalid distance {}",
                    r.wearable_id, r.tag_id, r.distance
                )));
            }
            if !(r.start.is_finite() && r.stop.is_finite() && r.stop >= r.start) {
                return Err(Error::domain(format!(
                    "report {}/{} has invalid session [{}, {}]",
                    r.wearable_id, r.tag_id, r.start, r.stop
                )));
            }
            wearables.insert(r.wearable_id.clone());
            tags.insert(r.tag_id.clone());
        }
        if wearables.len() > SOFT_ACTOR_LIMIT || tags.len() > SOFT_ACTOR_LIMIT {
            log::warn!(
                "{} wearables / {} tags exceed the sized-for limit of {SOFT_ACTOR_LIMIT}",
                wearables.len(),
                tags.len()
            );
        }

        let index: BTreeMap<&str, usize> = wearables.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        let mut rows: Vec<SessionRow> = Vec::new();
        let mut slot: BTreeMap<(String, u64, u64), usize> = BTreeMap::new();
        for r in &reports {
            let key = (r.tag_id.clone(), r.start.to_bits(), r.stop.to_bits());
            let row = *slot.entry(key).or_insert_with(|| {
                rows.push(SessionRow {
                    tag: r.tag_id.clone(),
                    start: r.start,
                    stop: r.stop,
                    distance: vec![f64::INFINITY; wearables.len()],
                });
                rows.len() - 1
            });
            let cell = &mut rows[row].distance[index[r.wearable_id.as_str()]];
            if cell.is_finite() {
                return Err(Error::domain(format!(
                    "duplicate report for wearable {} tag {} session [{}, {}]",
                    r.wearable_id, r.tag_id, r.start, r.stop
                )));
            }
            *cell = r.distance;
        }
        rows.sort_by(|a, b| {
            a.start
                .total_cmp(&b.start)
                .then_with(|| a.tag.cmp(&b.tag))
                .then_with(|| a.stop.total_cmp(&b.stop))
        });

        Ok(MatchProblem {
            wearables,
            tags,
            reports,
            sessions: rows,
        })
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }

    /// Session starts and stops in time order (stops before starts on ties).
    pub fn boundaries(&self) -> Vec<Boundary> {
        let mut out: Vec<Boundary> = self
            .sessions
            .iter()
            .flat_map(|s| {
                [
                    Boundary { ts: s.start, tag: s.tag.clone(), starts: true },
                    Boundary { ts: s.stop, tag: s.tag.clone(), starts: false },
                ]
            })
            .collect();
        out.sort_by(|a, b| a.ts.total_cmp(&b.ts).then(a.starts.cmp(&b.starts)));
        out
    }
}

/// One activation event and the cost of its assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    /// Start of the earliest session in the event.
    pub start_s: f64,
    /// Indices into [`Solution::results`].
    pub sessions: Vec<usize>,
    /// Sum of assigned distances.
    pub cost: f64,
    pub unassigned: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub results: Vec<MatchResult>,
    pub events: Vec<EventRecord>,
}

/// Candidate distances for one event: `cand[s][w]` is `Some(d)` when
/// wearable `w` is free for session `s` and reported distance `d`.
type Candidates = Vec<Vec<Option<f64>>>;
type Assignment = Vec<Option<usize>>;

/// Objective of a (partial) assignment, compared lexicographically: cover as
/// many sessions as possible, then minimize summed distance.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Score {
    unassigned: usize,
    cost: f64,
}

impl Score {
    fn better_than(&self, other: &Score) -> bool {
        self.unassigned < other.unassigned || (self.unassigned == other.unassigned && self.cost < other.cost)
    }
}

/// Exhaustive search with branch-and-bound. Branches are explored with
/// wearables in id order and "unassigned" last, and only strictly better
/// solutions replace the incumbent, so ties resolve to the smallest ids.
fn branch_and_bound(cand: &Candidates, n_wearables: usize) -> Assignment {
    struct Search<'a> {
        cand: &'a Candidates,
        /// Per session: minimum candidate distance, if any.
        floor: Vec<Option<f64>>,
        used: Vec<bool>,
        current: Assignment,
        best: Option<(Score, Assignment)>,
    }

    impl Search<'_> {
        fn bound(&self, k: usize, score: Score) -> Score {
            let mut lb = score;
            for f in &self.floor[k..] {
                match f {
                    Some(d) => lb.cost += d,
                    None => lb.unassigned += 1,
                }
            }
            lb
        }

        fn visit(&mut self, k: usize, score: Score) {
            if let Some((best, _)) = &self.best {
                if !self.bound(k, score).better_than(best) {
                    return;
                }
            }
            if k == self.cand.len() {
                self.best = Some((score, self.current.clone()));
                return;
            }
            for w in 0..self.used.len() {
                if let (Some(d), false) = (self.cand[k][w], self.used[w]) {
                    self.used[w] = true;
                    self.current[k] = Some(w);
                    self.visit(k + 1, Score { unassigned: score.unassigned, cost: score.cost + d });
                    self.used[w] = false;
                }
            }
            self.current[k] = None;
            self.visit(k + 1, Score { unassigned: score.unassigned + 1, cost: score.cost });
        }
    }

    let floor = cand
        .iter()
        .map(|row| row.iter().flatten().copied().reduce(f64::min))
        .collect();
    let mut search = Search {
        cand,
        floor,
        used: vec![false; n_wearables],
        current: vec![None; cand.len()],
        best: None,
    };
    search.visit(0, Score { unassigned: 0, cost: 0.0 });
    search.best.map(|(_, a)| a).unwrap_or_default()
}

/// Plain enumeration of every injective partial assignment, used as an
/// independent check on [`branch_and_bound`].
fn enumerate_all(cand: &Candidates, n_wearables: usize) -> Assignment {
    fn rec(
        cand: &Candidates,
        k: usize,
        used: &mut [bool],
        current: &mut Assignment,
        best: &mut Option<(usize, f64, Assignment)>,
    ) {
        if k == cand.len() {
            let unassigned = current.iter().filter(|a| a.is_none()).count();
            let cost = current
                .iter()
                .enumerate()
                .filter_map(|(s, a)| a.map(|w| cand[s][w].unwrap()))
                .fold(0.0, |acc, d| acc + d);
            let improves = match best {
                None => true,
                Some((bu, bc, _)) => unassigned < *bu || (unassigned == *bu && cost < *bc),
            };
            if improves {
                *best = Some((unassigned, cost, current.clone()));
            }
            return;
        }
        for w in 0..used.len() {
            if cand[k][w].is_some() && !used[w] {
                used[w] = true;
                current[k] = Some(w);
                rec(cand, k + 1, used, current, best);
                used[w] = false;
            }
        }
        current[k] = None;
        rec(cand, k + 1, used, current, best);
    }

    let mut best = None;
    rec(cand, 0, &mut vec![false; n_wearables], &mut vec![None; cand.len()], &mut best);
    best.map(|(_, _, a)| a).unwrap_or_default()
}

fn run_events<F>(problem: &MatchProblem, config: &MatchConfig, mut search: F) -> Result<Solution>
where
    F: FnMut(&Candidates, usize) -> Result<Assignment>,
{
    let wearables: Vec<&String> = problem.wearables.iter().collect();
    let sessions = &problem.sessions;
    // stop time of the latest session each wearable is bound to
    let mut busy_until: Vec<Option<f64>> = vec![None; wearables.len()];
    let mut results: Vec<MatchResult> = Vec::with_capacity(sessions.len());
    let mut events = Vec::new();

    let mut i = 0;
    while i < sessions.len() {
        let anchor = sessions[i].start;
        let mut j = i;
        while j < sessions.len() && sessions[j].start - anchor <= config.window_s {
            j += 1;
        }
        let group = &sessions[i..j];

        let cand: Candidates = group
            .iter()
            .map(|s| {
                s.distance
                    .iter()
                    .zip(&busy_until)
                    .map(|(&d, busy)| {
                        let free = busy.is_none_or(|stop| stop <= s.start);
                        (free && d.is_finite()).then_some(d)
                    })
                    .collect()
            })
            .collect();
        let assignment = search(&cand, wearables.len())?;

        let mut record = EventRecord {
            start_s: anchor,
            sessions: Vec::with_capacity(group.len()),
            cost: 0.0,
            unassigned: 0,
        };
        for (s, slot) in group.iter().zip(&assignment) {
            record.sessions.push(results.len());
            match *slot {
                Some(w) => {
                    let d = s.distance[w];
                    record.cost += d;
                    busy_until[w] = Some(busy_until[w].map_or(s.stop, |b| b.max(s.stop)));
                    let others: Vec<f64> = s
                        .distance
                        .iter()
                        .enumerate()
                        .filter(|&(k, o)| k != w && o.is_finite())
                        .map(|(_, &o)| o)
                        .collect();
                    let level = trust_classify(d, &others, config.margin_m);
                    results.push(MatchResult {
                        tag_id: s.tag.clone(),
                        start: s.start,
                        stop: s.stop,
                        assigned: Some(wearables[w].clone()),
                        trust: level.trust,
                        margin: level.margin,
                        diagnostic: None,
                    });
                }
                None => {
                    record.unassigned += 1;
                    results.push(MatchResult {
                        tag_id: s.tag.clone(),
                        start: s.start,
                        stop: s.stop,
                        assigned: None,
                        trust: Trust::Unsure,
                        margin: f64::INFINITY,
                        diagnostic: Some("no free wearable with a finite-distance report".into()),
                    });
                }
            }
        }
        events.push(record);
        i = j;
    }
    Ok(Solution { results, events })
}

/// Solves the matching and returns per-event costs alongside the results.
pub fn solve_detailed(problem: &MatchProblem, config: &MatchConfig) -> Result<Solution> {
    run_events(problem, config, |cand, n| Ok(branch_and_bound(cand, n)))
}

pub fn solve(problem: &MatchProblem, config: &MatchConfig) -> Result<Vec<MatchResult>> {
    Ok(solve_detailed(problem, config)?.results)
}

/// Reference solver enumerating every assignment per event. Limited to
/// [`BRUTE_FORCE_LIMIT`] wearables and simultaneous sessions.
pub fn brute_force_solve(problem: &MatchProblem, config: &MatchConfig) -> Result<Solution> {
    if problem.wearables.len() > BRUTE_FORCE_LIMIT {
        return Err(Error::SizeLimit(format!(
            "{} wearables > {BRUTE_FORCE_LIMIT}",
            problem.wearables.len()
        )));
    }
    run_events(problem, config, |cand, n| {
        if cand.len() > BRUTE_FORCE_LIMIT {
            return Err(Error::SizeLimit(format!(
                "{} simultaneous sessions > {BRUTE_FORCE_LIMIT}",
                cand.len()
            )));
        }
        Ok(enumerate_all(cand, n))
    })
}

/// True operator of one tag session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub tag: String,
    pub start_s: f64,
    pub stop_s: f64,
    pub wearable: String,
}

/// Outcome counts split by correctness and trust.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub correct_sure: u64,
    pub correct_unsure: u64,
    pub wrong_sure: u64,
    pub wrong_unsure: u64,
}

impl Confusion {
    pub fn total(&self) -> u64 {
        self.correct_sure + self.correct_unsure + self.wrong_sure + self.wrong_unsure
    }

    pub fn correct(&self) -> u64 {
        self.correct_sure + self.correct_unsure
    }

    pub fn sure(&self) -> u64 {
        self.correct_sure + self.wrong_sure
    }

    pub fn add(&mut self, correct: bool, trust: Trust) {
        match (correct, trust) {
            (true, Trust::Sure) => self.correct_sure += 1,
            (true, Trust::Unsure) => self.correct_unsure += 1,
            (false, Trust::Sure) => self.wrong_sure += 1,
            (false, Trust::Unsure) => self.wrong_unsure += 1,
        }
    }

    pub fn merge(&mut self, other: &Confusion) {
        self.correct_sure += other.correct_sure;
        self.correct_unsure += other.correct_unsure;
        self.wrong_sure += other.wrong_sure;
        self.wrong_unsure += other.wrong_unsure;
    }
}

/// An unreduced count ratio; `percent` is rounded half-up to one decimal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
    pub percent: Option<f64>,
}

impl Ratio {
    pub fn new(num: u64, den: u64) -> Self {
        let percent = (den > 0).then(|| {
            let tenths = (2000 * num as u128 + den as u128) / (2 * den as u128);
            tenths as f64 / 10.0
        });
        Ratio { num, den, percent }
    }

    pub fn value(&self) -> Option<f64> {
        (self.den > 0).then(|| self.num as f64 / self.den as f64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub confusion: Confusion,
    pub total: u64,
    /// Correct matches over all matches.
    pub accuracy: Ratio,
    /// Sure matches among the correct ones.
    pub recall: Ratio,
    /// Correct matches among the sure ones.
    pub precision: Ratio,
}

impl EvalReport {
    pub fn from_confusion(confusion: Confusion) -> Self {
        EvalReport {
            confusion,
            total: confusion.total(),
            accuracy: Ratio::new(confusion.correct(), confusion.total()),
            recall: Ratio::new(confusion.correct_sure, confusion.correct()),
            precision: Ratio::new(confusion.correct_sure, confusion.sure()),
        }
    }
}

/// Scores `results` against ground truth. A result is matched to the truth
/// record of the same tag whose interval contains the result's session; the
/// edge can only observe a subset of the true active period.
pub fn evaluate(results: &[MatchResult], truth: &[TruthRecord]) -> Result<EvalReport> {
    const EPS: f64 = 1e-6;
    let mut by_tag: BTreeMap<&str, Vec<&TruthRecord>> = BTreeMap::new();
    for t in truth {
        by_tag.entry(t.tag.as_str()).or_default().push(t);
    }
    let mut confusion = Confusion::default();
    for r in results {
        let record = by_tag
            .get(r.tag_id.as_str())
            .and_then(|recs| {
                recs.iter()
                    .find(|t| t.start_s - EPS <= r.start && r.stop <= t.stop_s + EPS)
            })
            .ok_or_else(|| Error::MissingTruth {
                tag: r.tag_id.clone(),
                start_s: r.start,
                stop_s: r.stop,
            })?;
        let correct = r.assigned.as_deref() == Some(record.wearable.as_str());
        confusion.add(correct, r.trust);
    }
    Ok(EvalReport::from_confusion(confusion))
}
