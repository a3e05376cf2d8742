//! Log-distance path-loss model.
//!
//! Expected RSSI at distance `x` is `rssi0 - 10 n log10(x / x0)`. The model is
//! fitted by ordinary least squares in dB space, where it is linear in the
//! regressor `u = -10 log10(x / x0)`.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fitted path-loss parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    /// Path-loss exponent.
    pub n: f64,
    /// Reference distance in meters.
    #[serde(rename = "x0_m")]
    pub x0: f64,
    /// RSSI at the reference distance in dB.
    #[serde(rename = "rssi0_db")]
    pub rssi0: f64,
}

impl Default for PathLossModel {
    /// Fit over the 55,097-sample measurement campaign (x0 = 1 m).
    fn default() -> Self {
        PathLossModel {
            n: 1.011,
            x0: 1.0,
            rssi0: -45.6,
        }
    }
}

impl PathLossModel {
    pub fn new(n: f64, x0: f64, rssi0: f64) -> Result<Self> {
        let model = PathLossModel { n, x0, rssi0 };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n.is_finite() && self.n > 0.0) {
            return Err(Error::domain(format!("path-loss exponent must be > 0, got {}", self.n)));
        }
        if !(self.x0.is_finite() && self.x0 > 0.0) {
            return Err(Error::domain(format!("reference distance must be > 0, got {}", self.x0)));
        }
        if !self.rssi0.is_finite() {
            return Err(Error::domain("reference RSSI must be finite"));
        }
        Ok(())
    }

    /// Expected RSSI (dB) at `distance` meters.
    pub fn forward(&self, distance: f64) -> Result<f64> {
        if !(distance.is_finite() && distance > 0.0) {
            return Err(Error::domain(format!("distance must be finite and > 0, got {distance}")));
        }
        Ok(self.rssi_at(distance))
    }

    /// Unchecked [`forward`](Self::forward); callers guarantee `distance > 0`.
    #[inline]
    pub(crate) fn rssi_at(&self, distance: f64) -> f64 {
        self.rssi0 - 10.0 * self.n * (distance / self.x0).log10()
    }

    /// Distance (m) at which the model predicts `rssi`.
    pub fn inverse(&self, rssi: f64) -> Result<f64> {
        if !rssi.is_finite() {
            return Err(Error::domain(format!("rssi must be finite, got {rssi}")));
        }
        Ok(self.x0 * 10f64.powf((self.rssi0 - rssi) / (10.0 * self.n)))
    }
}

/// One ranging measurement: RSSI observed at a known distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeSample {
    #[serde(rename = "distance_m")]
    pub distance: f64,
    #[serde(rename = "rssi_db")]
    pub rssi: f64,
}

impl RangeSample {
    pub fn new(distance: f64, rssi: f64) -> Result<Self> {
        let s = RangeSample { distance, rssi };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<()> {
        if !(self.distance.is_finite() && self.distance > 0.0) {
            return Err(Error::domain(format!("sample distance must be > 0, got {}", self.distance)));
        }
        if !self.rssi.is_finite() {
            return Err(Error::domain("sample rssi must be finite"));
        }
        Ok(())
    }
}

/// Least-squares fit of `(n, rssi0)` with the reference distance held at `x0`.
pub fn fit(samples: &[RangeSample], x0: f64) -> Result<PathLossModel> {
    if samples.is_empty() {
        return Err(Error::domain("cannot fit a model to zero samples"));
    }
    if !(x0.is_finite() && x0 > 0.0) {
        return Err(Error::domain(format!("reference distance must be > 0, got {x0}")));
    }
    for s in samples {
        s.validate()?;
    }
    let first = samples[0].distance;
    if samples.iter().all(|s| s.distance == first) {
        return Err(Error::DegenerateFit(format!(
            "all {} samples share the distance {first} m",
            samples.len()
        )));
    }

    let count = samples.len() as f64;
    let regressor = |s: &RangeSample| -10.0 * (s.distance / x0).log10();
    let u_mean = samples.iter().map(regressor).sum::<f64>() / count;
    let r_mean = samples.iter().map(|s| s.rssi).sum::<f64>() / count;

    let (mut sxx, mut sxy) = (0.0, 0.0);
    for s in samples {
        let du = regressor(s) - u_mean;
        sxx += du * du;
        sxy += du * (s.rssi - r_mean);
    }
    if sxx <= 0.0 {
        return Err(Error::DegenerateFit("regressor has zero spread".into()));
    }
    let n = sxy / sxx;
    let rssi0 = r_mean - n * u_mean;
    if !(n > 0.0) {
        return Err(Error::DegenerateFit(format!(
            "fitted exponent {n} is not positive; RSSI does not decay with distance"
        )));
    }
    PathLossModel::new(n, x0, rssi0)
}

/// Mean squared residual of `samples` against `model` (population variance).
pub fn residual_variance(model: &PathLossModel, samples: &[RangeSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("residual variance of zero samples"));
    }
    let mut acc = 0.0;
    for s in samples {
        let e = s.rssi - model.forward(s.distance)?;
        acc += e * e;
    }
    Ok(acc / samples.len() as f64)
}

/// Reads `distance_m,rssi_db` CSV.
pub fn read_samples_csv<R: Read>(reader: R, source: &str) -> Result<Vec<RangeSample>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut out = Vec::new();
    for (idx, rec) in rdr.deserialize::<RangeSample>().enumerate() {
        // header is line 1
        let line = idx + 2;
        let sample = rec.map_err(|e| Error::Schema {
            path: source.to_string(),
            line,
            msg: e.to_string(),
        })?;
        sample.validate().map_err(|e| Error::Schema {
            path: source.to_string(),
            line,
            msg: e.to_string(),
        })?;
        out.push(sample);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fitted() -> PathLossModel {
        PathLossModel::default()
    }

    #[test]
    fn forward_reference_point() {
        assert_eq!(fitted().forward(1.0).unwrap(), -45.6);
    }

    #[test]
    fn forward_clamp_thresholds() {
        assert!((fitted().forward(20.0).unwrap() - -58.75).abs() < 0.01);
        assert!((fitted().forward(0.5).unwrap() - -42.56).abs() < 0.01);
    }

    #[test]
    fn forward_rejects_bad_distance() {
        for d in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(fitted().forward(d), Err(Error::Domain(_))), "{d}");
        }
    }

    #[test]
    fn inverse_examples() {
        let m = fitted();
        assert!((m.inverse(-45.6).unwrap() - 1.0).abs() < 1e-12);
        // -58.75 dB is forward(20 m) = -58.7534 rounded; the rounding alone
        // moves the inverse by 1.6 cm
        assert!((m.inverse(-58.75).unwrap() - 19.98446).abs() < 1e-4);
        assert!((m.inverse(m.forward(20.0).unwrap()).unwrap() - 20.0).abs() < 1e-9);
        // 10^((-45.6 + 35.49) / 10.11) = 10^-1
        assert!((m.inverse(-35.49).unwrap() - 0.1).abs() < 0.01);
        assert!(m.inverse(f64::NAN).is_err());
    }

    #[test]
    fn fit_recovers_noiseless_model() {
        let m = fitted();
        let samples: Vec<_> = [0.5, 1.0, 2.0, 4.0]
            .iter()
            .map(|&d| RangeSample::new(d, m.forward(d).unwrap()).unwrap())
            .collect();
        let f = fit(&samples, 1.0).unwrap();
        assert!((f.n - 1.011).abs() < 1e-9);
        assert!((f.rssi0 - -45.6).abs() < 1e-9);
        assert_eq!(f.x0, 1.0);
        assert!(residual_variance(&f, &samples).unwrap() < 1e-18);
    }

    #[test]
    fn fit_two_points_by_hand() {
        let samples = [
            RangeSample::new(1.0, -45.6).unwrap(),
            RangeSample::new(10.0, -55.71).unwrap(),
        ];
        let f = fit(&samples, 1.0).unwrap();
        assert!((f.n - 1.011).abs() < 1e-6);
        assert!((f.rssi0 - -45.6).abs() < 1e-6);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(fit(&[], 1.0), Err(Error::Domain(_))));
        let same = [RangeSample::new(2.0, -50.0).unwrap(), RangeSample::new(2.0, -52.0).unwrap()];
        assert!(matches!(fit(&same, 1.0), Err(Error::DegenerateFit(_))));
        let rising = [RangeSample::new(1.0, -60.0).unwrap(), RangeSample::new(2.0, -50.0).unwrap()];
        assert!(matches!(fit(&rising, 1.0), Err(Error::DegenerateFit(_))));
    }

    #[test]
    fn residual_variance_single_sample() {
        let s = [RangeSample::new(1.0, -43.6).unwrap()];
        assert!((residual_variance(&fitted(), &s).unwrap() - 4.0).abs() < 1e-12);
        assert!(residual_variance(&fitted(), &[]).is_err());
    }

    #[test]
    fn model_json_field_names() {
        let v = serde_json::to_value(fitted()).unwrap();
        assert_eq!(v, serde_json::json!({"n": 1.011, "x0_m": 1.0, "rssi0_db": -45.6}));
    }

    #[test]
    fn csv_reports_line_numbers() {
        let data = "distance_m,rssi_db\n1.0,-45\n2.0,-48.5\n-1,-50\n";
        let err = read_samples_csv(data.as_bytes(), "s.csv").unwrap_err();
        assert!(matches!(err, Error::Schema { line: 4, .. }), "{err}");
        let ok = read_samples_csv("distance_m,rssi_db\n1.0,-45\n".as_bytes(), "s.csv").unwrap();
        assert_eq!(ok, vec![RangeSample { distance: 1.0, rssi: -45.0 }]);
    }
}
