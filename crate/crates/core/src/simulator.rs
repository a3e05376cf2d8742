//! Synthetic advertisement streams with ground truth.
//!
//! Workers carry wearables, tools carry tags. Both move along piecewise-linear
//! traces in the plane. While a tool's schedule is active it advertises at a
//! fixed interval; every worker receives each advertisement with independent
//! Gaussian dB noise on top of the path-loss prediction, or misses it with
//! `drop_prob`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::edge::{Activity, Advertisement, DEFAULT_ADV_INTERVAL};
use crate::error::{Error, Result};
use crate::matcher::TruthRecord;
use crate::pathloss::PathLossModel;

/// RSSI noise of the measurement campaign (dB).
pub const DEFAULT_NOISE_STD: f64 = 6.99;
/// Distance between a worker and the tool in their hands (m).
pub const OPERATING_DISTANCE: f64 = 0.3;
/// Distances below this are floored before evaluating the path-loss model.
pub const MIN_DISTANCE: f64 = 0.05;
/// Duration of the tool swap scenario (s).
pub const SWAP_DURATION: f64 = 360.0;
/// Pause between the sessions around a swap, in advertisement intervals.
/// Four 7 s intervals leave a 28 s gap, above the 21 s session split.
pub const SWAP_PAUSE_INTERVALS: f64 = 4.0;
/// Relative speed bound (m/s) used for generated random walks.
pub const DEFAULT_V_MAX: f64 = 0.7;

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub t: f64,
    pub pos: Point,
}

/// Motion of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TraceSpec {
    Static { pos: Point },
    /// Piecewise-linear path; position is held constant outside the knots.
    Path { knots: Vec<Knot> },
    /// Bounded random walk resolved from the scenario seed. Each leg lasts
    /// `step_s` and moves at a uniform random speed up to `max_speed_mps`;
    /// legs that would leave the disc of `radius_m` around `start` head back
    /// toward it.
    RandomWalk {
        start: Point,
        max_speed_mps: f64,
        step_s: f64,
        radius_m: f64,
    },
}

/// Resolved piecewise-linear trace with strictly increasing knot times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    knots: Vec<Knot>,
}

impl Trace {
    pub fn new(knots: Vec<Knot>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::Config("trace needs at least one knot".into()));
        }
        for w in knots.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::Config(format!(
                    "trace knot times must increase strictly ({} then {})",
                    w[0].t, w[1].t
                )));
            }
        }
        if knots.iter().any(|k| !(k.t.is_finite() && k.pos.iter().all(|c| c.is_finite()))) {
            return Err(Error::Config("trace contains non-finite values".into()));
        }
        Ok(Trace { knots })
    }

    pub fn fixed(pos: Point) -> Self {
        Trace {
            knots: vec![Knot { t: 0.0, pos }],
        }
    }

    pub fn knots(&self) -> &[Knot] {
        &self.knots
    }

    pub fn position(&self, t: f64) -> Point {
        let k = &self.knots;
        if t <= k[0].t {
            return k[0].pos;
        }
        let last = k[k.len() - 1];
        if t >= last.t {
            return last.pos;
        }
        let i = k.partition_point(|kn| kn.t <= t);
        let (a, b) = (k[i - 1], k[i]);
        let f = (t - a.t) / (b.t - a.t);
        [a.pos[0] + f * (b.pos[0] - a.pos[0]), a.pos[1] + f * (b.pos[1] - a.pos[1])]
    }

    /// Largest speed between consecutive knots (m/s).
    pub fn max_speed(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| dist(w[0].pos, w[1].pos) / (w[1].t - w[0].t))
            .fold(0.0, f64::max)
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl TraceSpec {
    fn resolve<R: Rng>(&self, duration: f64, rng: &mut R) -> Result<Trace> {
        match self {
            TraceSpec::Static { pos } => Ok(Trace::fixed(*pos)),
            TraceSpec::Path { knots } => Trace::new(knots.clone()),
            TraceSpec::RandomWalk {
                start,
                max_speed_mps,
                step_s,
                radius_m,
            } => {
                if !(*step_s > 0.0 && *max_speed_mps >= 0.0 && *radius_m >= 0.0) {
                    return Err(Error::Config("random walk needs step_s > 0, speed and radius >= 0".into()));
                }
                let mut knots = vec![Knot { t: 0.0, pos: *start }];
                let mut t = 0.0;
                let mut pos = *start;
                while t < duration {
                    let speed = rng.random::<f64>() * max_speed_mps;
                    let mut heading = rng.random::<f64>() * std::f64::consts::TAU;
                    let step = speed * step_s;
                    let probe = [pos[0] + step * heading.cos(), pos[1] + step * heading.sin()];
                    if dist(probe, *start) > *radius_m {
                        heading = (start[1] - pos[1]).atan2(start[0] - pos[0]);
                    }
                    pos = [pos[0] + step * heading.cos(), pos[1] + step * heading.sin()];
                    t += step_s;
                    knots.push(Knot { t, pos });
                }
                Trace::new(knots)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkerSpec {
    pub id: String,
    pub trace: TraceSpec,
}

/// One active period of a tool and who operates it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveWindow {
    pub start_s: f64,
    pub stop_s: f64,
    pub operator: String,
    #[serde(default = "usage")]
    pub activity: Activity,
}

fn usage() -> Activity {
    Activity::Usage
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub id: String,
    pub trace: TraceSpec,
    pub schedule: Vec<ActiveWindow>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub workers: Vec<WorkerSpec>,
    pub tools: Vec<ToolSpec>,
    #[serde(rename = "adv_interval_s", default = "default_adv_interval")]
    pub adv_interval: f64,
    #[serde(rename = "noise_std_db", default = "default_noise_std")]
    pub noise_std: f64,
    #[serde(default)]
    pub model: PathLossModel,
    #[serde(rename = "duration_s")]
    pub duration: f64,
    #[serde(default)]
    pub drop_prob: f64,
}

fn default_adv_interval() -> f64 {
    DEFAULT_ADV_INTERVAL
}

fn default_noise_std() -> f64 {
    DEFAULT_NOISE_STD
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.adv_interval.is_finite() && self.adv_interval > 0.0) {
            return Err(Error::Config(format!("adv_interval must be > 0, got {}", self.adv_interval)));
        }
        if !(self.noise_std.is_finite() && self.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        if !(0.0..1.0).contains(&self.drop_prob) {
            return Err(Error::Config(format!("drop_prob must be in [0, 1), got {}", self.drop_prob)));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::Config(format!("duration must be >= 0, got {}", self.duration)));
        }
        self.model.validate()?;
        let mut ids = std::collections::BTreeSet::new();
        for id in self.workers.iter().map(|w| &w.id).chain(self.tools.iter().map(|t| &t.id)) {
            if !ids.insert(id) {
                return Err(Error::Config(format!("duplicate device id {id:?}")));
            }
        }
        for tool in &self.tools {
            for w in &tool.schedule {
                if !(w.start_s.is_finite() && w.stop_s >= w.start_s) {
                    return Err(Error::Config(format!(
                        "tool {}: bad window [{}, {}]",
                        tool.id, w.start_s, w.stop_s
                    )));
                }
                if !self.workers.iter().any(|wk| wk.id == w.operator) {
                    return Err(Error::Config(format!(
                        "tool {}: unknown operator {:?}",
                        tool.id, w.operator
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_noise_std(mut self, noise_std: f64) -> Self {
        self.noise_std = noise_std;
        self
    }
}

/// True distance between a worker and a tool at one advertisement instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueDistance {
    pub ts: f64,
    pub wearable: String,
    pub tag: String,
    pub distance_m: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruth {
    /// True operator per tool session, spanning its first to last
    /// advertisement.
    pub sessions: Vec<TruthRecord>,
    pub distances: Vec<TrueDistance>,
}

impl GroundTruth {
    /// True distance at exactly `ts`, if an advertisement was sent then.
    pub fn distance_at(&self, wearable: &str, tag: &str, ts: f64) -> Option<f64> {
        self.distances
            .iter()
            .find(|d| d.ts == ts && d.wearable == wearable && d.tag == tag)
            .map(|d| d.distance_m)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Simulation {
    pub ads: Vec<Advertisement>,
    pub truth: GroundTruth,
    /// Number of instants where a zero distance was floored.
    pub floored: usize,
}

/// Per-reception RSSI perturbation in dB.
pub trait NoiseModel {
    fn sample(&mut self, rng: &mut ChaCha8Rng) -> f64;
}

/// I.i.d. zero-mean Gaussian noise in dB.
#[derive(Debug, Clone, Copy)]
pub struct GaussianNoise {
    normal: Normal<f64>,
}

impl GaussianNoise {
    pub fn new(std_db: f64) -> Result<Self> {
        Normal::new(0.0, std_db)
            .map(|normal| GaussianNoise { normal })
            .map_err(|e| Error::Config(format!("noise std {std_db}: {e}")))
    }
}

impl NoiseModel for GaussianNoise {
    fn sample(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        self.normal.sample(rng)
    }
}

pub fn generate(config: &ScenarioConfig) -> Result<Simulation> {
    let mut noise = GaussianNoise::new(config.noise_std)?;
    generate_with_noise(config, &mut noise)
}

/// [`generate`] with a caller-supplied noise model. Output is deterministic
/// in `config.seed` for deterministic noise models.
pub fn generate_with_noise(config: &ScenarioConfig, noise: &mut dyn NoiseModel) -> Result<Simulation> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let workers: Vec<(&str, Trace)> = config
        .workers
        .iter()
        .map(|w| Ok((w.id.as_str(), w.trace.resolve(config.duration, &mut rng)?)))
        .collect::<Result<_>>()?;
    let mut sim = Simulation::default();

    for tool in &config.tools {
        let tool_trace = tool.trace.resolve(config.duration, &mut rng)?;
        let mut windows: Vec<&ActiveWindow> = tool.schedule.iter().collect();
        windows.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for window in windows {
            let instants = advertisement_instants(window, config.adv_interval, config.duration);
            let (Some(&first), Some(&last)) = (instants.first(), instants.last()) else {
                continue;
            };
            sim.truth.sessions.push(TruthRecord {
                tag: tool.id.clone(),
                start_s: first,
                stop_s: last,
                wearable: window.operator.clone(),
            });
            for &ts in &instants {
                let tool_pos = tool_trace.position(ts);
                for (wid, trace) in &workers {
                    let mut d = dist(trace.position(ts), tool_pos);
                    if d < MIN_DISTANCE {
                        log::warn!("{wid}-{} at t={ts}: distance {d:.3} m floored to {MIN_DISTANCE} m", tool.id);
                        sim.floored += 1;
                        d = MIN_DISTANCE;
                    }
                    let eps = noise.sample(&mut rng);
                    let dropped = rng.random::<f64>() < config.drop_prob;
                    sim.truth.distances.push(TrueDistance {
                        ts,
                        wearable: wid.to_string(),
                        tag: tool.id.clone(),
                        distance_m: d,
                    });
                    if !dropped {
                        sim.ads.push(Advertisement {
                            ts,
                            wearable_id: wid.to_string(),
                            tag_id: tool.id.clone(),
                            rssi: config.model.rssi_at(d) + eps,
                            activity: window.activity,
                        });
                    }
                }
            }
        }
    }

    let order: BTreeMap<&str, usize> = config
        .tools
        .iter()
        .map(|t| t.id.as_str())
        .chain(config.workers.iter().map(|w| w.id.as_str()))
        .enumerate()
        .map(|(i, id)| (id, i))
        .collect();
    let rank = |s: &str| order[s];
    sim.ads.sort_by(|a, b| {
        a.ts.total_cmp(&b.ts)
            .then_with(|| rank(&a.tag_id).cmp(&rank(&b.tag_id)))
            .then_with(|| rank(&a.wearable_id).cmp(&rank(&b.wearable_id)))
    });
    sim.truth.distances.sort_by(|a, b| {
        a.ts.total_cmp(&b.ts)
            .then_with(|| rank(&a.tag).cmp(&rank(&b.tag)))
            .then_with(|| rank(&a.wearable).cmp(&rank(&b.wearable)))
    });
    sim.truth
        .sessions
        .sort_by(|a, b| a.start_s.total_cmp(&b.start_s).then_with(|| rank(&a.tag).cmp(&rank(&b.tag))));
    Ok(sim)
}

/// Advertisement times of a window: `start + k·interval` up to `stop`,
/// clipped to `[0, duration)`.
fn advertisement_instants(window: &ActiveWindow, interval: f64, duration: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let t = window.start_s + k as f64 * interval;
        if t > window.stop_s || t >= duration {
            break;
        }
        if t >= 0.0 {
            out.push(t);
        }
        k += 1;
    }
    out
}

fn worker_id(i: usize) -> String {
    format!("W{}", i + 1)
}

fn tool_id(i: usize) -> String {
    format!("T{}", i + 1)
}

fn bystander_id(i: usize) -> String {
    format!("B{}", i + 1)
}

fn worker_pos(i: usize, spacing: f64) -> Point {
    [i as f64 * spacing, 0.0]
}

fn tool_pos(i: usize, spacing: f64) -> Point {
    [i as f64 * spacing, OPERATING_DISTANCE]
}

/// Workers in a row `spacing` apart, each operating their own tool for the
/// whole `duration`; bystanders continue the row without tools.
pub fn scenario_static(n_workers: usize, spacing: f64, duration: f64, bystanders: usize) -> ScenarioConfig {
    let mut workers: Vec<WorkerSpec> = (0..n_workers)
        .map(|i| WorkerSpec {
            id: worker_id(i),
            trace: TraceSpec::Static { pos: worker_pos(i, spacing) },
        })
        .collect();
    workers.extend((0..bystanders).map(|b| WorkerSpec {
        id: bystander_id(b),
        trace: TraceSpec::Static {
            pos: worker_pos(n_workers + b, spacing),
        },
    }));
    let tools = (0..n_workers)
        .map(|i| ToolSpec {
            id: tool_id(i),
            trace: TraceSpec::Static { pos: tool_pos(i, spacing) },
            schedule: vec![ActiveWindow {
                start_s: 0.0,
                stop_s: duration,
                operator: worker_id(i),
                activity: Activity::Usage,
            }],
        })
        .collect();
    ScenarioConfig {
        seed: 0,
        workers,
        tools,
        adv_interval: DEFAULT_ADV_INTERVAL,
        noise_std: DEFAULT_NOISE_STD,
        model: PathLossModel::default(),
        duration,
        drop_prob: 0.0,
    }
}

/// Static row of workers who pass the tools on cyclically at each swap time.
///
/// Segment `s` gives tool `j` to worker `(j + s) mod n`. Tools go quiet for
/// [`SWAP_PAUSE_INTERVALS`] advertisement intervals after each swap time
/// while they are carried to the next operator, so sessions split.
pub fn scenario_swap(n_workers: usize, spacing: f64, swap_times: &[f64]) -> Result<ScenarioConfig> {
    if n_workers < 2 {
        return Err(Error::Config(format!("swap scenario needs >= 2 workers, got {n_workers}")));
    }
    let pause = SWAP_PAUSE_INTERVALS * DEFAULT_ADV_INTERVAL;
    let mut prev = 0.0;
    for &t in swap_times {
        if !(t > 0.0 && t < SWAP_DURATION) {
            return Err(Error::Config(format!("swap time {t} s outside (0, {SWAP_DURATION}) s")));
        }
        if t + pause >= SWAP_DURATION {
            return Err(Error::Config(format!("swap at {t} s leaves no time for the next session")));
        }
        if t <= prev {
            return Err(Error::Config(format!(
                "swap times must be increasing and leave room for the pause, got {t} after {prev}"
            )));
        }
        prev = t + pause;
    }

    let mut cfg = scenario_static(n_workers, spacing, SWAP_DURATION, 0);
    let mut bounds = vec![0.0];
    for &t in swap_times {
        bounds.push(t);
        bounds.push(t + pause);
    }
    bounds.push(SWAP_DURATION);

    for (j, tool) in cfg.tools.iter_mut().enumerate() {
        let operator = |s: usize| (j + s) % n_workers;
        tool.schedule = bounds
            .chunks(2)
            .enumerate()
            .map(|(s, span)| ActiveWindow {
                start_s: span[0],
                stop_s: span[1],
                operator: worker_id(operator(s)),
                activity: Activity::Usage,
            })
            .collect();
        let mut knots = Vec::new();
        for (s, span) in bounds.chunks(2).enumerate() {
            let pos = tool_pos(operator(s), spacing);
            knots.push(Knot { t: span[0], pos });
            if span[1] > span[0] {
                knots.push(Knot { t: span[1], pos });
            }
        }
        tool.trace = TraceSpec::Path { knots };
    }
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathloss::{residual_variance, RangeSample};

    #[test]
    fn noiseless_static_rssi_is_reference() {
        let mut cfg = scenario_static(1, 1.0, 70.0, 0).with_noise_std(0.0);
        cfg.tools[0].trace = TraceSpec::Static { pos: [1.0, 0.0] };
        let sim = generate(&cfg).unwrap();
        assert_eq!(sim.ads.len(), 10);
        assert!(sim.ads.iter().all(|a| (a.rssi - -45.6).abs() < 1e-12));
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = scenario_static(3, 2.0, 120.0, 1).with_seed(9);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        assert_ne!(generate(&cfg).unwrap().ads, generate(&cfg.clone().with_seed(10)).unwrap().ads);
    }

    #[test]
    fn residual_variance_matches_injected_noise() {
        // 55,097 receptions spread over distances in [0.1, 6] m
        let mut cfg = scenario_static(1, 1.0, 7.0 * 55_097.0, 0).with_seed(3);
        cfg.workers[0].trace = TraceSpec::Static { pos: [0.0, 0.0] };
        cfg.tools[0].trace = TraceSpec::Path {
            knots: vec![
                Knot { t: 0.0, pos: [0.1, 0.0] },
                Knot { t: cfg.duration, pos: [6.0, 0.0] },
            ],
        };
        let sim = generate(&cfg).unwrap();
        assert_eq!(sim.ads.len(), 55_097);
        let samples: Vec<RangeSample> = sim
            .ads
            .iter()
            .zip(&sim.truth.distances)
            .map(|(a, d)| RangeSample::new(d.distance_m, a.rssi).unwrap())
            .collect();
        let var = residual_variance(&cfg.model, &samples).unwrap();
        assert!((var - 48.92).abs() < 2.0, "{var}");
        assert!((var.sqrt() / 6.99 - 1.0).abs() < 0.03);
    }

    #[test]
    fn static_layout() {
        let cfg = scenario_static(3, 2.0, 360.0, 0);
        assert_eq!(cfg.workers.len(), 3);
        assert_eq!(cfg.tools.len(), 3);
        let sim = generate(&cfg).unwrap();
        assert_eq!(sim.truth.sessions.len(), 3);
        let d = sim.truth.distance_at("W2", "T2", 0.0).unwrap();
        assert!((d - OPERATING_DISTANCE).abs() < 1e-12);
        let d = sim.truth.distance_at("W1", "T2", 0.0).unwrap();
        assert!((d - 2.0f64.hypot(0.3)).abs() < 1e-12);
    }

    #[test]
    fn bystander_placement() {
        let cfg = scenario_static(1, 0.5, 180.0, 1);
        assert_eq!(cfg.workers[1].id, "B1");
        assert_eq!(cfg.workers[1].trace, TraceSpec::Static { pos: [0.5, 0.0] });
        assert_eq!(cfg.tools.len(), 1);
    }

    #[test]
    fn zero_duration_is_empty() {
        let sim = generate(&scenario_static(1, 1.0, 0.0, 0)).unwrap();
        assert!(sim.ads.is_empty());
        assert!(sim.truth.sessions.is_empty());
    }

    #[test]
    fn schedule_fidelity() {
        let mut cfg = scenario_static(1, 1.0, 100.0, 0);
        cfg.tools[0].schedule[0].start_s = 3.0;
        cfg.tools[0].schedule[0].stop_s = 40.0;
        let sim = generate(&cfg).unwrap();
        let ts: Vec<f64> = sim.ads.iter().map(|a| a.ts).collect();
        assert_eq!(ts, vec![3.0, 10.0, 17.0, 24.0, 31.0, 38.0]);
    }

    #[test]
    fn drops_follow_probability() {
        let mut cfg = scenario_static(2, 1.0, 7000.0, 0).with_seed(5);
        cfg.drop_prob = 0.5;
        let sim = generate(&cfg).unwrap();
        let expected = 2.0 * 2.0 * 1000.0 * 0.5;
        assert!((sim.ads.len() as f64 - expected).abs() < 150.0, "{}", sim.ads.len());
    }

    #[test]
    fn swap_rotates_operators() {
        let cfg = scenario_swap(3, 2.0, &[120.0, 240.0]).unwrap();
        let sim = generate(&cfg).unwrap();
        for tool in ["T1", "T2", "T3"] {
            let ops: Vec<&str> = sim
                .truth
                .sessions
                .iter()
                .filter(|s| s.tag == tool)
                .map(|s| s.wearable.as_str())
                .collect();
            assert_eq!(ops.len(), 3);
        }
        let t1: Vec<_> = sim.truth.sessions.iter().filter(|s| s.tag == "T1").collect();
        assert_eq!(t1.iter().map(|s| s.wearable.as_str()).collect::<Vec<_>>(), ["W1", "W2", "W3"]);
        assert_eq!((t1[1].start_s, t1[1].stop_s), (148.0, 239.0));
        // the tool sits with its new operator once it advertises again
        let d = sim.truth.distance_at("W2", "T1", 148.0).unwrap();
        assert!((d - OPERATING_DISTANCE).abs() < 1e-12);
        let tool = &cfg.tools[2];
        let trace = tool.trace.resolve(cfg.duration, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert!(trace.max_speed() < DEFAULT_V_MAX);
    }

    #[test]
    fn swap_without_swaps_is_static() {
        let cfg = scenario_swap(2, 2.0, &[]).unwrap();
        let sim = generate(&cfg).unwrap();
        assert_eq!(sim.truth.sessions.len(), 2);
        assert_eq!(sim.truth.sessions[0].wearable, "W1");
    }

    #[test]
    fn swap_errors() {
        assert!(scenario_swap(1, 2.0, &[]).is_err());
        assert!(scenario_swap(3, 2.0, &[400.0]).is_err());
        assert!(scenario_swap(3, 2.0, &[120.0, 130.0]).is_err());
    }

    #[test]
    fn zero_distance_is_floored() {
        let mut cfg = scenario_static(1, 1.0, 14.0, 0).with_noise_std(0.0);
        cfg.tools[0].trace = TraceSpec::Static { pos: [0.0, 0.0] };
        let sim = generate(&cfg).unwrap();
        assert_eq!(sim.floored, 2);
        assert!((sim.ads[0].rssi - cfg.model.forward(MIN_DISTANCE).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn random_walk_respects_speed_and_radius() {
        let spec = TraceSpec::RandomWalk {
            start: [1.0, 1.0],
            max_speed_mps: 0.7,
            step_s: 1.0,
            radius_m: 2.0,
        };
        let trace = spec.resolve(600.0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(trace.max_speed() <= 0.7 + 1e-12);
        assert!(trace.knots().iter().all(|k| dist(k.pos, [1.0, 1.0]) <= 2.0 + 0.7 + 1e-9));
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = scenario_swap(3, 2.0, &[120.0, 240.0]).unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        let minimal: ScenarioConfig = serde_json::from_str(
            r#"{"seed":1,"workers":[{"id":"W1","trace":{"kind":"static","pos":[0,0]}}],"tools":[],"duration_s":10}"#,
        )
        .unwrap();
        assert_eq!(minimal.adv_interval, 7.0);
        assert_eq!(minimal.noise_std, 6.99);
    }
}
