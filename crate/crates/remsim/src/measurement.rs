//! Geo-tagged drive-test records.

use serde::{Deserialize, Serialize};

use crate::geom::Point;

/// Link direction of a transmission or measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[serde(rename = "ul")]
    Uplink,
    #[serde(rename = "dl")]
    Downlink,
}

impl Direction {
    pub fn as_str(&self) -> &'static str {
        match self {
            Direction::Uplink => "ul",
            Direction::Downlink => "dl",
        }
    }
}

impl std::str::FromStr for Direction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ul" | "uplink" => Ok(Direction::Uplink),
            "dl" | "downlink" => Ok(Direction::Downlink),
            other => Err(format!("unknown direction {other:?}, expected ul or dl")),
        }
    }
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One geo-tagged drive-test record: position, network-context features and
/// the observed end-to-end data rate.
///
/// CQI and TA are integer indicators on the air interface but are kept as
/// `f64` here so that grid-aggregated (fractional) values can flow through
/// the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSample {
    /// Position in the local planar frame, meters.
    pub position: Point,
    /// Capture time, seconds.
    pub timestamp: f64,
    /// Reference signal received power, dBm.
    pub rsrp: f64,
    /// Reference signal received quality, dB.
    pub rsrq: f64,
    /// Signal-to-interference-plus-noise ratio, dB.
    pub sinr: f64,
    /// Channel quality indicator, 0..=15.
    pub cqi: f64,
    /// Timing advance index, >= 0.
    pub ta: f64,
    /// Vehicle speed, m/s, >= 0.
    pub velocity: f64,
    /// Serving cell identifier.
    pub cell_id: u32,
    /// Transmitted payload, bytes, > 0.
    pub payload_size: u64,
    /// Observed end-to-end data rate, MBit/s, >= 0.
    pub data_rate: f64,
    pub direction: Direction,
}

impl MeasurementSample {
    /// Checks the domain invariants; returns the first violation found.
    pub fn validate(&self) -> Result<(), String> {
        if !self.position.is_finite() {
            return Err("non-finite position".into());
        }
        for (name, v) in [
            ("t", self.timestamp),
            ("rsrp", self.rsrp),
            ("rsrq", self.rsrq),
            ("sinr", self.sinr),
            ("cqi", self.cqi),
            ("ta", self.ta),
            ("velocity", self.velocity),
            ("data_rate", self.data_rate),
        ] {
            if !v.is_finite() {
                return Err(format!("non-finite {name}"));
            }
        }
        if !(0.0..=15.0).contains(&self.cqi) {
            return Err(format!("cqi {} outside [0, 15]", self.cqi));
        }
        if self.ta < 0.0 {
            return Err(format!("negative ta {}", self.ta));
        }
        if self.velocity < 0.0 {
            return Err(format!("negative velocity {}", self.velocity));
        }
        if self.data_rate < 0.0 {
            return Err(format!("negative data_rate {}", self.data_rate));
        }
        if self.payload_size == 0 {
            return Err("payload_size must be > 0".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> MeasurementSample {
        MeasurementSample {
            position: Point::new(10.0, 10.0),
            timestamp: 0.0,
            rsrp: -90.0,
            rsrq: -10.0,
            sinr: 12.0,
            cqi: 9.0,
            ta: 3.0,
            velocity: 13.0,
            cell_id: 101,
            payload_size: 500_000,
            data_rate: 8.5,
            direction: Direction::Uplink,
        }
    }

    #[test]
    fn valid_sample_passes() {
        assert!(sample().validate().is_ok());
    }

    #[test]
    fn invariant_violations_detected() {
        let mut s = sample();
        s.cqi = 16.0;
        assert!(s.validate().is_err());

        let mut s = sample();
        s.payload_size = 0;
        assert!(s.validate().is_err());

        let mut s = sample();
        s.position.x = f64::NAN;
        assert!(s.validate().is_err());

        let mut s = sample();
        s.data_rate = -1.0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn direction_round_trips_through_str() {
        assert_eq!("ul".parse::<Direction>().unwrap(), Direction::Uplink);
        assert_eq!("dl".parse::<Direction>().unwrap(), Direction::Downlink);
        assert!("sideways".parse::<Direction>().is_err());
    }
}
