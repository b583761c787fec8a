//! 1-D vertical grasp plant: a two-contact friction grip on an object whose
//! only degree of freedom is sliding down between the fingers.

use serde::{Deserialize, Serialize};

pub const GRAVITY: f64 = 9.81;

/// Plant state plus the physical constants it evolves under. Positions are
/// meters relative to the gripper (negative = the object has sagged),
/// velocities are meters per second downward.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub object_mass_kg: f64,
    pub load_mass_kg: f64,
    /// Contact friction coefficient; two contacts share the grip normal.
    pub mu: f64,
    /// Actuator opening, percent of range.
    pub grip_percent: f64,
    /// Normal force per contact produced by one percent of grip.
    pub newtons_per_percent: f64,
    pub y_pos_m: f64,
    pub y_vel_mps: f64,
    pub slipping: bool,
    /// True while the object rests on a surface; gravity cannot pull a
    /// supported object through it.
    pub supported: bool,
}

impl PlantState {
    pub fn new(object_mass_kg: f64, mu: f64, newtons_per_percent: f64) -> Self {
        PlantState {
            object_mass_kg,
            load_mass_kg: 0.0,
            mu,
            grip_percent: 0.0,
            newtons_per_percent,
            y_pos_m: 0.0,
            y_vel_mps: 0.0,
            slipping: false,
            supported: true,
        }
    }

    pub fn total_mass(&self) -> f64 {
        self.object_mass_kg + self.load_mass_kg
    }

    /// Friction the two contacts can oppose gravity with, newtons.
    pub fn friction_capacity(&self) -> f64 {
        2.0 * self.mu * self.grip_percent * self.newtons_per_percent
    }

    /// Semi-implicit step under gravity `g` (possibly scaled to model
    /// dynamic manipulation). The held object stays put while friction
    /// capacity covers the weight; otherwise it accelerates downward with
    /// the friction deficit. Velocity is nonzero exactly while slipping.
    pub fn step(&mut self, dt_s: f64, g: f64) {
        let m = self.total_mass();
        if self.supported || m * g <= self.friction_capacity() {
            self.y_vel_mps = 0.0;
            self.slipping = false;
            return;
        }
        let a = g - self.friction_capacity() / m;
        self.y_vel_mps += a * dt_s;
        self.y_pos_m -= self.y_vel_mps * dt_s;
        self.slipping = true;
    }

    /// Drops an extra mass onto the held object. The inelastic impact
    /// transfers momentum scaled by `efficiency` (contacts absorb the rest),
    /// so the object acquires an immediate downward velocity.
    pub fn drop_load(&mut self, mass_kg: f64, impact_mps: f64, efficiency: f64) {
        let m_before = self.total_mass();
        let m_after = m_before + mass_kg;
        let momentum = m_before * self.y_vel_mps + efficiency * mass_kg * impact_mps;
        self.load_mass_kg += mass_kg;
        self.y_vel_mps = momentum / m_after;
        self.slipping = self.y_vel_mps != 0.0;
    }
}
