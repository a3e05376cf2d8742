#![allow(dead_code)]

use std::collections::BTreeMap;

use assetmatch::matcher::{MatchResult, Solution};
use assetmatch::DistanceReport;
use rand::Rng;

pub fn report(w: &str, t: &str, start: f64, stop: f64, d: f64) -> DistanceReport {
    DistanceReport {
        wearable_id: w.into(),
        tag_id: t.into(),
        start,
        stop,
        distance: d,
        n_obs: 1,
    }
}

/// Random matching instance: up to `max_wearables` wearables and a few
/// activation events of up to `max_tags` simultaneous sessions each. Some
/// wearables miss some sessions. Distances are on a 5 cm grid so exact ties
/// occur.
pub fn random_instance<R: Rng>(rng: &mut R, max_wearables: usize, max_tags: usize) -> Vec<DistanceReport> {
    let n_w = rng.random_range(1..=max_wearables);
    let n_events = rng.random_range(1..=3);
    let mut reports = Vec::new();
    let mut tag_free_at: BTreeMap<usize, f64> = BTreeMap::new();
    let mut t = 0.0;
    for _ in 0..n_events {
        let n_tags = rng.random_range(1..=max_tags);
        for _ in 0..n_tags {
            // pick a tag id that is not active at t
            let tag = (0..)
                .find(|k| tag_free_at.get(k).is_none_or(|&f| f < t))
                .unwrap();
            let start = t + rng.random_range(0..=2) as f64 * 3.0;
            let stop = start + rng.random_range(0..=12) as f64 * 7.0;
            tag_free_at.insert(tag, stop + 21.0);
            for w in 0..n_w {
                if rng.random::<f64>() < 0.85 {
                    let d = rng.random_range(2..=120) as f64 * 0.05;
                    reports.push(report(&format!("W{w}"), &format!("T{tag}"), start, stop, d));
                }
            }
        }
        t += rng.random_range(1..=10) as f64 * 7.0;
    }
    reports
}

/// Each wearable's assigned sessions never overlap in time (touching allowed).
pub fn exclusive(results: &[MatchResult]) -> bool {
    let mut by_w: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for r in results {
        if let Some(w) = &r.assigned {
            by_w.entry(w).or_default().push((r.start, r.stop));
        }
    }
    by_w.values_mut().all(|spans| {
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        spans.windows(2).all(|p| p[0].1 <= p[1].0)
    })
}

/// One result per (tag, session), i.e. the assignment is constant within a session.
pub fn continuous(results: &[MatchResult]) -> bool {
    let mut seen = std::collections::BTreeSet::new();
    results
        .iter()
        .all(|r| seen.insert((r.tag_id.clone(), r.start.to_bits(), r.stop.to_bits())))
}

pub fn event_costs(s: &Solution) -> Vec<(usize, f64)> {
    s.events.iter().map(|e| (e.unassigned, e.cost)).collect()
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}
