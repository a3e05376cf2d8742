//! Scalar extended Kalman filter over the wearable–tag distance.
//!
//! The state is a single distance with a no-motion process model: the
//! estimate is carried over unchanged and relative movement enters as
//! Gaussian process noise. Observations are RSSI values related to the state
//! through the path-loss model.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::pathloss::PathLossModel;

/// Default process noise, `0.7² / χ²₁(0.05)` rounded to four places (m²/s²).
pub const DEFAULT_Q: f64 = 0.1275;
/// Measurement noise variance used on the device (dB²).
pub const DEFAULT_R: f64 = 43.53;
/// Residual variance of the raw measurement campaign (dB²).
pub const CAMPAIGN_R: f64 = 48.92;
/// Maximum relative operator–asset speed (m/s) assumed 95 % of the time.
pub const DEFAULT_V_MAX: f64 = 0.7;
/// Upper-tail probability paired with [`DEFAULT_V_MAX`].
pub const DEFAULT_TAIL: f64 = 0.05;
pub const DEFAULT_D_MIN: f64 = 0.5;
pub const DEFAULT_D_MAX: f64 = 20.0;
pub const DEFAULT_P0: f64 = 4.0;
/// Post-update lower bound on the estimate; keeps the Jacobian finite.
pub const X_FLOOR: f64 = 0.01;

/// Process noise variance from a speed bound: `v_max² / χ²₁,c` where `χ²₁,c`
/// is the point above which a 1-dof chi-squared has upper-tail area `c`.
pub fn process_noise_from_speed(v_max: f64, tail: f64) -> Result<f64> {
    if !(v_max.is_finite() && v_max > 0.0) {
        return Err(Error::domain(format!("v_max must be > 0, got {v_max}")));
    }
    if !(tail > 0.0 && tail < 1.0) {
        return Err(Error::domain(format!("tail probability must be in (0, 1), got {tail}")));
    }
    let chi2 = ChiSquared::new(1.0).map_err(|e| Error::domain(e.to_string()))?;
    Ok(v_max * v_max / chi2.inverse_cdf(1.0 - tail))
}

/// How process noise scales with the time between observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DtMode {
    /// `p + q·Δt²`: `q` read as a velocity variance.
    DtSquared,
    /// `p + q·Δt`: `q` read as a random-walk diffusion rate.
    #[default]
    DtLinear,
}

impl DtMode {
    fn growth(self, q: f64, dt: f64) -> f64 {
        match self {
            DtMode::DtSquared => q * dt * dt,
            DtMode::DtLinear => q * dt,
        }
    }
}

impl std::str::FromStr for DtMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dt_squared" => Ok(DtMode::DtSquared),
            "dt_linear" => Ok(DtMode::DtLinear),
            other => Err(Error::Config(format!("unknown dt mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfParams {
    #[serde(flatten)]
    pub model: PathLossModel,
    /// Process noise (m²/s²).
    pub q: f64,
    /// Measurement noise variance (dB²).
    pub r: f64,
    #[serde(rename = "d_min_m")]
    pub d_min: f64,
    #[serde(rename = "d_max_m")]
    pub d_max: f64,
    /// Initial state covariance (m²).
    pub p0: f64,
    #[serde(default)]
    pub dt_mode: DtMode,
}

impl Default for EkfParams {
    fn default() -> Self {
        EkfParams {
            model: PathLossModel::default(),
            q: DEFAULT_Q,
            r: DEFAULT_R,
            d_min: DEFAULT_D_MIN,
            d_max: DEFAULT_D_MAX,
            p0: DEFAULT_P0,
            dt_mode: DtMode::default(),
        }
    }
}

impl EkfParams {
    /// Default parameters with `q` derived from a speed bound instead of the
    /// rounded constant.
    pub fn with_speed_bound(v_max: f64, tail: f64) -> Result<Self> {
        Ok(EkfParams {
            q: process_noise_from_speed(v_max, tail)?,
            ..EkfParams::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be finite and > 0, got {v}")))
            }
        };
        positive("q", self.q)?;
        positive("r", self.r)?;
        positive("p0", self.p0)?;
        positive("d_min", self.d_min)?;
        if !(self.d_max.is_finite() && self.d_max > self.d_min) {
            return Err(Error::Config(format!(
                "need d_min < d_max, got [{}, {}]",
                self.d_min, self.d_max
            )));
        }
        Ok(())
    }
}

/// Filter state for one (wearable, tag) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState {
    /// Estimated distance (m).
    pub x_hat: f64,
    /// State covariance (m²).
    pub p: f64,
    /// Timestamp of the last processed observation (s).
    pub last_ts: f64,
}

/// `dh/dx` of the path-loss model at `x_hat`, in dB per meter.
pub fn jacobian(model: &PathLossModel, x_hat: f64) -> Result<f64> {
    if !(x_hat.is_finite() && x_hat > 0.0) {
        return Err(Error::domain(format!("jacobian needs x > 0, got {x_hat}")));
    }
    Ok(-10.0 * model.n / (std::f64::consts::LN_10 * x_hat))
}

impl EkfState {
    /// Initializes from the first RSSI, clamping the model inverse to
    /// `[d_min, d_max]` so an outlier cannot seed an absurd distance.
    pub fn init(params: &EkfParams, first_rssi: f64, ts: f64) -> Result<Self> {
        if !ts.is_finite() {
            return Err(Error::domain("timestamp must be finite"));
        }
        let raw = params.model.inverse(first_rssi)?;
        Ok(EkfState {
            x_hat: raw.clamp(params.d_min, params.d_max),
            p: params.p0,
            last_ts: ts,
        })
    }

    pub fn predict(&self, ts: f64, params: &EkfParams) -> Result<Self> {
        if !ts.is_finite() {
            return Err(Error::domain("timestamp must be finite"));
        }
        if ts < self.last_ts {
            return Err(Error::OutOfOrder { last: self.last_ts, ts });
        }
        let dt = ts - self.last_ts;
        Ok(EkfState {
            x_hat: self.x_hat,
            p: self.p + params.dt_mode.growth(params.q, dt),
            last_ts: ts,
        })
    }

    pub fn update(&self, rssi: f64, params: &EkfParams) -> Result<Self> {
        if !rssi.is_finite() {
            return Err(Error::domain(format!("rssi must be finite, got {rssi}")));
        }
        let h = jacobian(&params.model, self.x_hat)?;
        let innovation = rssi - params.model.rssi_at(self.x_hat);
        let s = h * self.p * h + params.r;
        let gain = self.p * h / s;
        // 1 - K·H = r / S, which stays in (0, 1] without cancellation.
        let shrink = params.r / s;
        Ok(EkfState {
            x_hat: (self.x_hat + gain * innovation).max(X_FLOOR),
            p: shrink * self.p,
            last_ts: self.last_ts,
        })
    }
}

/// Initializes on the first observation, otherwise predicts to `ts` and
/// updates with `rssi`.
pub fn step(state: Option<EkfState>, rssi: f64, ts: f64, params: &EkfParams) -> Result<EkfState> {
    match state {
        None => EkfState::init(params, rssi, ts),
        Some(s) => s.predict(ts, params)?.update(rssi, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> EkfParams {
        EkfParams::default()
    }

    #[test]
    fn derived_q_matches_rounded_constant() {
        let q = process_noise_from_speed(DEFAULT_V_MAX, DEFAULT_TAIL).unwrap();
        assert!((q - DEFAULT_Q).abs() < 1e-3, "{q}");
        assert!(process_noise_from_speed(0.0, 0.05).is_err());
        assert!(process_noise_from_speed(0.7, 1.0).is_err());
    }

    #[test]
    fn init_examples() {
        let p = params();
        assert!((EkfState::init(&p, -45.6, 0.0).unwrap().x_hat - 1.0).abs() < 1e-12);
        assert_eq!(EkfState::init(&p, -80.0, 0.0).unwrap().x_hat, 20.0);
        assert_eq!(EkfState::init(&p, -30.0, 0.0).unwrap().x_hat, 0.5);
        let s = EkfState::init(&p, -50.0, 3.0).unwrap();
        assert_eq!((s.p, s.last_ts), (DEFAULT_P0, 3.0));
        assert!(EkfState::init(&p, f64::NAN, 0.0).is_err());
    }

    #[test]
    fn predict_examples() {
        let p = EkfParams { dt_mode: DtMode::DtSquared, ..params() };
        let s = EkfState { x_hat: 1.0, p: 1.0, last_ts: 0.0 };
        assert_eq!(s.predict(0.0, &p).unwrap(), s);
        assert!((s.predict(7.0, &p).unwrap().p - 7.2475).abs() < 1e-12);
        let s2 = EkfState { x_hat: 1.0, p: 2.0, last_ts: 0.0 };
        assert!((s2.predict(14.0, &p).unwrap().p - 26.99).abs() < 1e-12);

        let lin = EkfParams { dt_mode: DtMode::DtLinear, ..params() };
        assert!((s.predict(7.0, &lin).unwrap().p - 1.8925).abs() < 1e-12);
        assert!(matches!(
            s.predict(7.0, &p).unwrap().predict(6.0, &p),
            Err(Error::OutOfOrder { .. })
        ));
    }

    #[test]
    fn jacobian_examples() {
        let m = PathLossModel::default();
        assert!((jacobian(&m, 1.0).unwrap() - -4.391).abs() < 1e-3);
        assert!((jacobian(&m, 2.0).unwrap() - -2.196).abs() < 1e-3);
        let unit = PathLossModel::new(1.0, 1.0, 0.0).unwrap();
        let x = 10.0 / std::f64::consts::LN_10;
        assert!((jacobian(&unit, x).unwrap() + 1.0).abs() < 1e-12);
        assert!(jacobian(&m, 0.0).is_err());
    }

    #[test]
    fn update_zero_innovation_keeps_estimate() {
        let p = params();
        let s = EkfState { x_hat: 2.0, p: 1.5, last_ts: 0.0 };
        let u = s.update(p.model.forward(2.0).unwrap(), &p).unwrap();
        assert_eq!(u.x_hat, 2.0);
        assert!(u.p > 0.0 && u.p < s.p);
    }

    #[test]
    fn update_hand_evaluated() {
        // H = -4.3907, S = 43.53 + 19.279 = 62.809, K = -0.069906,
        // x' = 1 - 0.069906 * 3 = 0.79028
        let p = params();
        let s = EkfState { x_hat: 1.0, p: 1.0, last_ts: 0.0 };
        let u = s.update(-45.6 + 3.0, &p).unwrap();
        assert!((u.x_hat - 0.7903).abs() < 1e-3, "{}", u.x_hat);
        let expected_p = 43.53 / (43.53 + 4.390_702_f64.powi(2));
        assert!((u.p - expected_p).abs() < 1e-5);
    }

    #[test]
    fn update_floors_estimate() {
        let p = params();
        let s = EkfState { x_hat: 0.05, p: 50.0, last_ts: 0.0 };
        let u = s.update(0.0, &p).unwrap();
        assert_eq!(u.x_hat, X_FLOOR);
    }

    #[test]
    fn step_composes() {
        let p = params();
        let s = step(None, -45.6, 0.0, &p).unwrap();
        assert!((s.x_hat - 1.0).abs() < 1e-12);
        let s = step(Some(s), -45.6, 7.0, &p).unwrap();
        assert_eq!(s.last_ts, 7.0);
        assert!(matches!(step(Some(s), -45.6, 1.0, &p), Err(Error::OutOfOrder { .. })));
    }

    #[test]
    fn constant_rssi_converges_monotonically() {
        let p = params();
        let rssi = -52.0;
        let target = p.model.inverse(rssi).unwrap();
        let mut s = step(None, -40.0, 0.0, &p).unwrap();
        let mut prev = f64::INFINITY;
        for k in 1..60 {
            s = step(Some(s), rssi, 7.0 * k as f64, &p).unwrap();
            let gap = (s.x_hat - target).abs();
            assert!(gap <= prev + 1e-12, "step {k}: {gap} > {prev}");
            prev = gap;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn params_json_layout() {
        let v = serde_json::to_value(params()).unwrap();
        assert_eq!(
            v,
            serde_json::json!({
                "n": 1.011, "x0_m": 1.0, "rssi0_db": -45.6, "q": 0.1275, "r": 43.53,
                "d_min_m": 0.5, "d_max_m": 20.0, "p0": 4.0, "dt_mode": "dt_linear"
            })
        );
        let sq: EkfParams = serde_json::from_value(serde_json::json!({
            "n": 1.0, "x0_m": 1.0, "rssi0_db": -40.0, "q": 0.1, "r": 40.0,
            "d_min_m": 0.5, "d_max_m": 20.0, "p0": 4.0, "dt_mode": "dt_squared"
        }))
        .unwrap();
        assert_eq!(sq.dt_mode, DtMode::DtSquared);
        assert!(EkfParams { d_min: 30.0, ..params() }.validate().is_err());
    }
}
