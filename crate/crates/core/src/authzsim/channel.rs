//! Acoustic channel: straight-line propagation at the speed of sound, reachable
//! only between the same or adjacent cells, with independent packet loss.

use rand::Rng;

use crate::geocell::{encode, neighbors, GeoPoint};

use super::scenario::SimError;

pub const SOUND_SPEED_MPS: f64 = 1500.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transmission {
    OutOfRange,
    Lost,
    /// One-way delay in seconds.
    Delivered(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    sound_speed_mps: f64,
    loss_prob: f64,
}

impl ChannelModel {
    pub fn new(sound_speed_mps: f64, loss_prob: f64) -> Result<Self, SimError> {
        if !(0.0..1.0).contains(&loss_prob) {
            return Err(SimError::Spec(format!("loss_prob {loss_prob} outside [0, 1)")));
        }
        if !(sound_speed_mps.is_finite() && sound_speed_mps > 0.0) {
            return Err(SimError::Spec(format!(
                "sound speed {sound_speed_mps} must be positive"
            )));
        }
        Ok(Self {
            sound_speed_mps,
            loss_prob,
        })
    }

    pub fn lossless() -> Self {
        Self {
            sound_speed_mps: SOUND_SPEED_MPS,
            loss_prob: 0.0,
        }
    }

    pub fn loss_prob(&self) -> f64 {
        self.loss_prob
    }

    pub fn in_range(&self, a: &GeoPoint, b: &GeoPoint) -> bool {
        let (ca, cb) = (encode(a), encode(b));
        ca == cb || neighbors(&ca).contains(&cb)
    }

    pub fn delay_s(&self, a: &GeoPoint, b: &GeoPoint) -> f64 {
        a.distance_m(b) / self.sound_speed_mps
    }

    pub fn transmit<R: Rng + ?Sized>(&self, from: &GeoPoint, to: &GeoPoint, rng: &mut R) -> Transmission {
        if !self.in_range(from, to) {
            return Transmission::OutOfRange;
        }
        if self.loss_prob > 0.0 && rng.gen_bool(self.loss_prob) {
            return Transmission::Lost;
        }
        Transmission::Delivered(self.delay_s(from, to))
    }

    /// One-way delay across the diagonal of an equatorial cell, the widest a
    /// cell gets.
    pub fn worst_same_cell_delay_s(&self) -> f64 {
        let sw = GeoPoint::new(0.0, 0.0).expect("valid");
        let ne = GeoPoint::new(0.05, 0.05).expect("valid");
        self.delay_s(&sw, &ne)
    }
}
