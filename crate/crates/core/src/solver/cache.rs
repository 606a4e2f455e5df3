use std::collections::HashMap;

use crate::estimators::PointSamples;
use crate::oracle::{DesignPoint, PointKey};

/// Draws at every point visited in one run, keyed by exact coordinates and
/// kept in first-visit order.
#[derive(Default)]
pub struct PointCache {
    index: HashMap<PointKey, usize>,
    points: Vec<PointSamples>,
}

impl PointCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn slot(&mut self, x: &[f64]) -> usize {
        let key = DesignPoint::new(x.to_vec()).key();
        if let Some(&i) = self.index.get(&key) {
            return i;
        }
        self.points.push(PointSamples::new(x.to_vec()));
        self.index.insert(key, self.points.len() - 1);
        self.points.len() - 1
    }

    pub fn get_mut(&mut self, x: &[f64]) -> &mut PointSamples {
        let i = self.slot(x);
        &mut self.points[i]
    }

    pub fn get(&self, x: &[f64]) -> Option<&PointSamples> {
        let key = DesignPoint::new(x.to_vec()).key();
        self.index.get(&key).map(|&i| &self.points[i])
    }

    /// Points with at least one HF draw inside the closed ball.
    pub fn hf_points_within(&self, center: &[f64], radius: f64) -> Vec<DesignPoint> {
        self.points
            .iter()
            .filter(|p| p.n_hf() > 0)
            .map(|p| DesignPoint::new(p.x().to_vec()))
            .filter(|p| p.distance(center) <= radius * (1.0 + 1e-12))
            .collect()
    }
}
