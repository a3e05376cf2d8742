//! Wearable-side processing: split tag activity into sessions, run one filter
//! per (wearable, session) and emit the final distance of each.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::ekf::{self, EkfParams, EkfState};
use crate::error::{Error, Result};

/// Gap (s) above which two active periods of a tag are separate sessions:
/// three missed advertisements at the 7 s interval.
pub const DEFAULT_SESSION_GAP: f64 = 21.0;
pub const DEFAULT_ADV_INTERVAL: f64 = 7.0;

/// Plausible BLE RSSI range in dB.
pub const RSSI_RANGE: (f64, f64) = (-127.0, 20.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Activity {
    #[serde(rename = "usage")]
    Usage,
    #[serde(rename = "transport")]
    Transportation,
    #[serde(rename = "inactive")]
    Inactive,
}

impl std::str::FromStr for Activity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "usage" => Ok(Activity::Usage),
            "transport" => Ok(Activity::Transportation),
            "inactive" => Ok(Activity::Inactive),
            other => Err(Error::Config(format!("unknown activity class {other:?}"))),
        }
    }
}

/// Activity classes that count as "in use" for session segmentation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActiveClasses(BTreeSet<Activity>);

impl Default for ActiveClasses {
    fn default() -> Self {
        ActiveClasses([Activity::Usage].into_iter().collect())
    }
}

impl ActiveClasses {
    pub fn new(classes: impl IntoIterator<Item = Activity>) -> Self {
        ActiveClasses(classes.into_iter().collect())
    }

    /// Parses a comma-separated list such as `usage,transport`.
    pub fn parse(list: &str) -> Result<Self> {
        let classes = list
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(str::parse)
            .collect::<Result<BTreeSet<_>>>()?;
        Ok(ActiveClasses(classes))
    }

    pub fn contains(&self, a: Activity) -> bool {
        self.0.contains(&a)
    }
}

/// One received advertisement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Advertisement {
    pub ts: f64,
    #[serde(rename = "wearable")]
    pub wearable_id: String,
    #[serde(rename = "tag")]
    pub tag_id: String,
    #[serde(rename = "rssi_db")]
    pub rssi: f64,
    pub activity: Activity,
}

impl Advertisement {
    pub fn is_well_formed(&self) -> bool {
        self.ts.is_finite()
            && self.rssi.is_finite()
            && (RSSI_RANGE.0..=RSSI_RANGE.1).contains(&self.rssi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub tag_id: String,
    pub start: f64,
    pub stop: f64,
}

/// Final per-session estimate a wearable sends to the server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    #[serde(rename = "wearable")]
    pub wearable_id: String,
    #[serde(rename = "tag")]
    pub tag_id: String,
    #[serde(rename = "start_s")]
    pub start: f64,
    #[serde(rename = "stop_s")]
    pub stop: f64,
    #[serde(rename = "distance_m")]
    pub distance: f64,
    pub n_obs: usize,
}

/// One filter output, kept only when trajectories are requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub wearable: String,
    pub tag: String,
    pub session_start_s: f64,
    pub ts: f64,
    pub rssi_db: f64,
    pub x_hat_m: f64,
    pub p_m2: f64,
}

#[derive(Debug, Clone)]
pub struct EdgeConfig {
    pub ekf: EkfParams,
    pub gap_s: f64,
    pub active: ActiveClasses,
    pub record_trajectory: bool,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        EdgeConfig {
            ekf: EkfParams::default(),
            gap_s: DEFAULT_SESSION_GAP,
            active: ActiveClasses::default(),
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct EdgeOutput {
    pub reports: Vec<DistanceReport>,
    pub sessions: Vec<Session>,
    /// Records dropped for non-finite or implausible values.
    pub skipped: usize,
    pub trajectory: Vec<TrajectoryPoint>,
}

/// Splits one tag's time-sorted advertisements into active sessions.
///
/// Only advertisements whose activity is in `active` participate. A gap of
/// exactly `gap_s` keeps the session together; anything longer splits it.
pub fn segment_sessions(ads: &[Advertisement], gap_s: f64, active: &ActiveClasses) -> Result<Vec<Session>> {
    if let Some(first) = ads.first() {
        if let Some(other) = ads.iter().find(|a| a.tag_id != first.tag_id) {
            return Err(Error::domain(format!(
                "segment_sessions expects one tag, got {} and {}",
                first.tag_id, other.tag_id
            )));
        }
    }
    if let Some(i) = (1..ads.len()).find(|&i| ads[i].ts < ads[i - 1].ts) {
        return Err(Error::Unsorted { index: i });
    }

    let mut sessions: Vec<Session> = Vec::new();
    for ad in ads.iter().filter(|a| active.contains(a.activity)) {
        match sessions.last_mut() {
            Some(cur) if ad.ts - cur.stop <= gap_s => cur.stop = ad.ts,
            _ => sessions.push(Session {
                tag_id: ad.tag_id.clone(),
                start: ad.ts,
                stop: ad.ts,
            }),
        }
    }
    Ok(sessions)
}

/// Runs the wearable pipeline over a mixed advertisement log.
///
/// Sessions come from the union of every wearable's receptions of a tag; each
/// wearable that heard the tag inside a session gets a fresh filter and one
/// report. Reports are ordered by (start, tag, wearable).
pub fn run_edge(ads: &[Advertisement], config: &EdgeConfig) -> Result<EdgeOutput> {
    config.ekf.validate()?;
    let mut out = EdgeOutput::default();

    let mut by_tag: BTreeMap<&str, Vec<&Advertisement>> = BTreeMap::new();
    for ad in ads {
        if !ad.is_well_formed() {
            out.skipped += 1;
            continue;
        }
        if config.active.contains(ad.activity) {
            by_tag.entry(ad.tag_id.as_str()).or_default().push(ad);
        }
    }

    for (tag, mut tag_ads) in by_tag {
        // stable: equal timestamps keep input order
        tag_ads.sort_by(|a, b| a.ts.total_cmp(&b.ts));
        let owned: Vec<Advertisement> = tag_ads.iter().map(|a| (*a).clone()).collect();
        let sessions = segment_sessions(&owned, config.gap_s, &config.active)?;

        let mut cursor = 0;
        for session in sessions {
            let mut per_wearable: BTreeMap<&str, Vec<&Advertisement>> = BTreeMap::new();
            while cursor < tag_ads.len() && tag_ads[cursor].ts <= session.stop {
                let ad = tag_ads[cursor];
                per_wearable.entry(ad.wearable_id.as_str()).or_default().push(ad);
                cursor += 1;
            }
            for (wearable, obs) in per_wearable {
                let mut state: Option<EkfState> = None;
                for ad in &obs {
                    let next = ekf::step(state, ad.rssi, ad.ts, &config.ekf)?;
                    if config.record_trajectory {
                        out.trajectory.push(TrajectoryPoint {
                            wearable: wearable.to_string(),
                            tag: tag.to_string(),
                            session_start_s: session.start,
                            ts: ad.ts,
                            rssi_db: ad.rssi,
                            x_hat_m: next.x_hat,
                            p_m2: next.p,
                        });
                    }
                    state = Some(next);
                }
                let state = state.expect("per-wearable group is never empty");
                out.reports.push(DistanceReport {
                    wearable_id: wearable.to_string(),
                    tag_id: tag.to_string(),
                    start: session.start,
                    stop: session.stop,
                    distance: state.x_hat,
                    n_obs: obs.len(),
                });
            }
            out.sessions.push(session);
        }
    }

    out.reports.sort_by(|a, b| {
        a.start
            .total_cmp(&b.start)
            .then_with(|| a.tag_id.cmp(&b.tag_id))
            .then_with(|| a.wearable_id.cmp(&b.wearable_id))
    });
    out.sessions
        .sort_by(|a, b| a.start.total_cmp(&b.start).then_with(|| a.tag_id.cmp(&b.tag_id)));
    Ok(out)
}

/// Thins a stream recorded at `source_interval` down to `target_interval`.
///
/// Each advertisement gets a per-tag slot index from its time offset to the
/// tag's first advertisement; slot `i` is kept when `i % k == phase` with
/// `k = target / source`. The `k` phases partition the input.
pub fn downsample(
    ads: &[Advertisement],
    source_interval: f64,
    target_interval: f64,
    phase: usize,
) -> Result<Vec<Advertisement>> {
    let k = downsample_ratio(source_interval, target_interval)?;
    if phase >= k {
        return Err(Error::domain(format!("phase {phase} outside [0, {k})")));
    }
    let mut first_ts: BTreeMap<&str, f64> = BTreeMap::new();
    for ad in ads {
        let e = first_ts.entry(ad.tag_id.as_str()).or_insert(ad.ts);
        if ad.ts < *e {
            *e = ad.ts;
        }
    }
    Ok(ads
        .iter()
        .filter(|ad| {
            let slot = ((ad.ts - first_ts[ad.tag_id.as_str()]) / source_interval).round() as u64;
            slot % k as u64 == phase as u64
        })
        .cloned()
        .collect())
}

/// Integer ratio `target / source`, or an error when it is not whole.
pub fn downsample_ratio(source_interval: f64, target_interval: f64) -> Result<usize> {
    if !(source_interval.is_finite() && source_interval > 0.0 && target_interval.is_finite()) {
        return Err(Error::domain("intervals must be finite and > 0"));
    }
    let ratio = target_interval / source_interval;
    let k = ratio.round();
    if k < 1.0 || (ratio - k).abs() > 1e-9 * ratio.max(1.0) {
        return Err(Error::domain(format!(
            "target interval {target_interval} s is not a positive multiple of {source_interval} s"
        )));
    }
    Ok(k as usize)
}

pub fn read_advertisements_jsonl<R: BufRead>(reader: R, source: &str) -> Result<Vec<Advertisement>> {
    crate::io::read_jsonl(reader, source)
}

/// Reads the CSV form of the advertisement log (same column names as JSONL).
pub fn read_advertisements_csv<R: std::io::Read>(reader: R, source: &str) -> Result<Vec<Advertisement>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    rdr.deserialize::<Advertisement>()
        .enumerate()
        .map(|(idx, rec)| {
            rec.map_err(|e| Error::Schema {
                path: source.to_string(),
                line: idx + 2,
                msg: e.to_string(),
            })
        })
        .collect()
}

pub fn write_reports_jsonl<W: Write>(w: W, reports: &[DistanceReport]) -> Result<()> {
    crate::io::write_jsonl(w, reports)
}
