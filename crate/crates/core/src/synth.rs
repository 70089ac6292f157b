//! Seeded moving-box ground truth.
//!
//! Each object gets a fixed size, a fixed row and a horizontal velocity of
//! at least `min_speed` pixels per frame. Positions wrap around the frame
//! width, so every object moves at least `min_speed` pixels between any two
//! consecutive frames. With perfect-replay detectors this makes stale
//! (filled) detections lose overlap quickly, which is what lets frame drops
//! show up in mAP.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detector::BBox;
use crate::error::{Error, Result};
use crate::eval::GroundTruthSet;
use crate::ingest::DEFAULT_CLASS_LABEL;

#[derive(Debug, Clone, PartialEq)]
pub struct MovingBoxes {
    pub frames: usize,
    pub objects: usize,
    pub width: f64,
    pub height: f64,
    /// Pixels per frame.
    pub min_speed: f64,
    pub max_speed: f64,
    pub min_size: f64,
    pub max_size: f64,
    /// Objects are assigned classes round-robin.
    pub classes: Vec<String>,
    pub seed: u64,
}

impl MovingBoxes {
    pub fn new(frames: usize, objects: usize, seed: u64) -> Self {
        MovingBoxes {
            frames,
            objects,
            width: 640.0,
            height: 480.0,
            min_speed: 3.0,
            max_speed: 8.0,
            min_size: 30.0,
            max_size: 60.0,
            classes: vec![DEFAULT_CLASS_LABEL.to_string()],
            seed,
        }
    }

    pub fn with_classes<S: Into<String>>(mut self, classes: impl IntoIterator<Item = S>) -> Self {
        self.classes = classes.into_iter().map(Into::into).collect();
        self
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("moving boxes: {msg}")));
        if self.frames == 0 || self.objects == 0 {
            return bad("frames and objects must be at least 1");
        }
        if self.classes.is_empty() {
            return bad("at least one class is required");
        }
        if !(self.min_size > 0.0 && self.min_size <= self.max_size) {
            return bad("need 0 < min_size <= max_size");
        }
        if !(self.min_speed > 0.0 && self.min_speed <= self.max_speed) {
            return bad("need 0 < min_speed <= max_speed");
        }
        // wrapping must not land a box back where it was
        if self.width < 2.0 * self.max_size + 2.0 * self.max_speed
            || self.height < 2.0 * self.max_size
        {
            return bad("frame too small for the box sizes and speeds");
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<GroundTruthSet> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut gt = GroundTruthSet::new();
        for obj in 0..self.objects {
            let w = rng.random_range(self.min_size..=self.max_size);
            let h = rng.random_range(self.min_size..=self.max_size) * 1.5;
            let h = h.min(self.height);
            let y = rng.random_range(0.0..=(self.height - h));
            let x0 = rng.random_range(0.0..(self.width - w));
            let speed = rng.random_range(self.min_speed..=self.max_speed);
            let vx = if rng.random::<bool>() { speed } else { -speed };
            let label = &self.classes[obj % self.classes.len()];
            let track = self.width - w;
            for t in 0..self.frames {
                let x = (x0 + vx * t as f64).rem_euclid(track);
                gt.insert(t, BBox { x, y, w, h }, label.as_str())?;
            }
        }
        Ok(gt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_frame_annotated_and_boxes_move() {
        let spec = MovingBoxes::new(320, 5, 3).with_classes(["car", "pedestrian"]);
        let gt = spec.generate().unwrap();
        assert_eq!(gt.annotated_frames(), 320);
        assert_eq!(gt.total_boxes(), 1600);
        assert_eq!(gt.classes().len(), 2);
        for t in 1..320 {
            for (a, b) in gt.frame(t - 1).iter().zip(gt.frame(t)) {
                assert!((a.bbox.x - b.bbox.x).abs() >= 3.0 - 1e-9);
                assert!(b.bbox.x >= 0.0 && b.bbox.x + b.bbox.w <= 640.0);
            }
        }
    }

    #[test]
    fn seeded() {
        assert_eq!(
            MovingBoxes::new(10, 3, 1).generate().unwrap(),
            MovingBoxes::new(10, 3, 1).generate().unwrap()
        );
        assert_ne!(
            MovingBoxes::new(10, 3, 1).generate().unwrap(),
            MovingBoxes::new(10, 3, 2).generate().unwrap()
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(MovingBoxes::new(0, 3, 1).generate().is_err());
        let mut s = MovingBoxes::new(10, 3, 1);
        s.width = 50.0;
        assert!(s.generate().is_err());
        assert!(MovingBoxes::new(10, 3, 1)
            .with_classes(Vec::<String>::new())
            .generate()
            .is_err());
    }
}
