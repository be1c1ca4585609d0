use serde::{Deserialize, Serialize};

use crate::data::trajectory::TrajectoryPoint;
use crate::error::{Error, Result};

/// Axis-aligned latitude/longitude box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BBox {
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self> {
        let b = BBox { lat_min, lat_max, lon_min, lon_max };
        b.validate()?;
        Ok(b)
    }

    /// Tight box around `points`; fails when the points have zero extent on an axis.
    pub fn around<'a, I>(points: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a TrajectoryPoint>,
    {
        let mut b = BBox {
            lat_min: f64::INFINITY,
            lat_max: f64::NEG_INFINITY,
            lon_min: f64::INFINITY,
            lon_max: f64::NEG_INFINITY,
        };
        for p in points {
            b.lat_min = b.lat_min.min(p.lat);
            b.lat_max = b.lat_max.max(p.lat);
            b.lon_min = b.lon_min.min(p.lon);
            b.lon_max = b.lon_max.max(p.lon);
        }
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |lo: f64, hi: f64| lo.is_finite() && hi.is_finite() && hi > lo;
        if !ok(self.lat_min, self.lat_max) || !ok(self.lon_min, self.lon_max) {
            return Err(Error::invalid(format!("bounding box needs positive extent on both axes: {self:?}")));
        }
        Ok(())
    }

    pub fn lat_extent(&self) -> f64 {
        self.lat_max - self.lat_min
    }

    pub fn lon_extent(&self) -> f64 {
        self.lon_max - self.lon_min
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.lat_min..=self.lat_max).contains(&lat) && (self.lon_min..=self.lon_max).contains(&lon)
    }
}

/// Per-axis min-max map from degrees to the unit square, `(lat, lon)` order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    bbox: BBox,
}

impl Normalizer {
    pub fn new(bbox: BBox) -> Result<Self> {
        bbox.validate()?;
        Ok(Normalizer { bbox })
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn normalize(&self, lat: f64, lon: f64) -> [f64; 2] {
        [(lat - self.bbox.lat_min) / self.bbox.lat_extent(), (lon - self.bbox.lon_min) / self.bbox.lon_extent()]
    }

    pub fn denormalize(&self, p: [f64; 2]) -> (f64, f64) {
        (self.bbox.lat_min + p[0] * self.bbox.lat_extent(), self.bbox.lon_min + p[1] * self.bbox.lon_extent())
    }

    /// Degrees per normalized unit on each axis; converts normalized errors to degrees.
    pub fn scale(&self) -> [f64; 2] {
        [self.bbox.lat_extent(), self.bbox.lon_extent()]
    }
}

pub fn normalize(points: &[TrajectoryPoint], normalizer: &Normalizer) -> Vec<[f64; 2]> {
    points.iter().map(|p| normalizer.normalize(p.lat, p.lon)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corners_and_midpoint() {
        let n = Normalizer::new(BBox::new(0.0, 10.0, 0.0, 20.0).unwrap()).unwrap();
        assert_eq!(n.normalize(0.0, 0.0), [0.0, 0.0]);
        assert_eq!(n.normalize(10.0, 20.0), [1.0, 1.0]);
        assert_eq!(n.normalize(5.0, 5.0), [0.5, 0.25]);
    }

    #[test]
    fn zero_extent_rejected() {
        assert!(BBox::new(1.0, 1.0, 0.0, 2.0).is_err());
        let p = TrajectoryPoint { vehicle_id: "a".into(), timestamp: 0, lat: 1.0, lon: 2.0 };
        assert!(BBox::around([&p, &p]).is_err());
    }

    #[test]
    fn inverse_recovers_degrees() {
        let n = Normalizer::new(BBox::new(39.4, 41.1, 115.4, 117.6).unwrap()).unwrap();
        for (lat, lon) in [(39.9, 116.4), (41.1, 115.4), (40.000001, 117.0)] {
            let (a, b) = n.denormalize(n.normalize(lat, lon));
            assert!((a - lat).abs() < 1e-9 && (b - lon).abs() < 1e-9);
        }
    }
}
