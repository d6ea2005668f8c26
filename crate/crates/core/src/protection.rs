//! Under-frequency load shedding.
//!
//! Each load bus carries one relay. The relay maps the locally measured
//! frequency to a target shed level and commits the target only after it
//! has persisted for the trigger delay. Levels are absolute fractions of the
//! bus's expected load, so moving from 5% to 15% sheds another 10%.
//!
//! Frequency bands (deviation below `f0`):
//!
//! ```text
//!   shed:    > 1.0 → 5%   ≥ 1.2 → 15%   ≥ 1.4 → 25%   ≥ 1.6 → 35%   ≥ 1.8 → 45%   ≥ 2.0 → 50%
//!   restore: ≤ 0.75 → at most 15%   ≤ 0.5 → at most 5%   ≤ 0.25 → 0%
//! ```
//!
//! Between `f0 − 1.0` and `f0 − 0.75` the committed level holds.

use serde::{Deserialize, Serialize};

use crate::grid::BusId;

/// Accumulated-time comparisons tolerate float drift of summed steps.
const TIMER_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Step {
    /// Frequency deviation below nominal, Hz (positive).
    pub below_hz: f64,
    /// Shed fraction of expected load.
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UflsScheme {
    pub enabled: bool,
    /// Trigger delay, s. Applies to shedding and restoration alike.
    pub delay_s: f64,
    /// Shedding staircase, shallowest first.
    pub shed_steps: Vec<Step>,
    /// Restoration thresholds, deepest first: at or above `f0 − below_hz`
    /// the shed level may fall to `level`.
    pub restore_steps: Vec<Step>,
}

impl Default for UflsScheme {
    fn default() -> Self {
        let s = |below_hz, level| Step { below_hz, level };
        Self {
            enabled: true,
            delay_s: 0.15,
            shed_steps: vec![
                s(1.0, 0.05),
                s(1.2, 0.15),
                s(1.4, 0.25),
                s(1.6, 0.35),
                s(1.8, 0.45),
                s(2.0, 0.50),
            ],
            restore_steps: vec![s(0.75, 0.15), s(0.5, 0.05), s(0.25, 0.0)],
        }
    }
}

impl UflsScheme {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.delay_s >= 0.0) {
            return Err(format!("UFLS delay must be >= 0, got {}", self.delay_s));
        }
        if self.shed_steps.is_empty() {
            return Err("UFLS needs at least one shed step".into());
        }
        for w in self.shed_steps.windows(2) {
            if !(w[1].below_hz > w[0].below_hz && w[1].level > w[0].level) {
                return Err("UFLS shed steps must deepen monotonically".into());
            }
        }
        for w in self.restore_steps.windows(2) {
            if !(w[1].below_hz < w[0].below_hz && w[1].level < w[0].level) {
                return Err("UFLS restore steps must be ordered deepest first".into());
            }
        }
        if let Some(r) = self.restore_steps.first() {
            if r.below_hz > self.shed_steps[0].below_hz {
                return Err("restoration band overlaps the shedding band".into());
            }
        }
        if self
            .shed_steps
            .iter()
            .chain(&self.restore_steps)
            .any(|s| !(0.0..=1.0).contains(&s.level) || !(s.below_hz >= 0.0))
        {
            return Err("UFLS levels must lie in [0, 1] with non-negative offsets".into());
        }
        Ok(())
    }

    /// All levels a relay can commit, ascending and including zero.
    pub fn levels(&self) -> Vec<f64> {
        let mut v: Vec<f64> = std::iter::once(0.0)
            .chain(self.shed_steps.iter().map(|s| s.level))
            .chain(self.restore_steps.iter().map(|s| s.level))
            .collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn max_level(&self) -> f64 {
        self.shed_steps.last().map_or(0.0, |s| s.level)
    }

    /// Whether `f` lies in the shedding band (strictly below the first step).
    pub fn in_shed_band(&self, f: f64, f0: f64) -> bool {
        f < f0 - self.shed_steps[0].below_hz
    }
}

/// Staircase target for `f` in the shedding band; zero above it. Exact
/// boundaries resolve to the deeper step.
pub fn shed_level_for_frequency(scheme: &UflsScheme, f: f64, f0: f64) -> f64 {
    if !scheme.in_shed_band(f, f0) {
        return 0.0;
    }
    scheme
        .shed_steps
        .iter()
        .skip(1)
        .filter(|s| f <= f0 - s.below_hz)
        .map(|s| s.level)
        .next_back()
        .unwrap_or(scheme.shed_steps[0].level)
}

/// Restoration target: the shed level allowed at `f`, never above `current`.
/// Below the deepest restoration threshold the current level holds.
pub fn restoration_level_for_frequency(scheme: &UflsScheme, f: f64, f0: f64, current: f64) -> f64 {
    scheme
        .restore_steps
        .iter()
        .filter(|s| f >= f0 - s.below_hz)
        .map(|s| s.level)
        .next_back()
        .map_or(current, |allowed| allowed.min(current))
}

/// Target level for the relay given its committed level.
pub fn target_level(scheme: &UflsScheme, f: f64, f0: f64, current: f64) -> f64 {
    if scheme.in_shed_band(f, f0) {
        shed_level_for_frequency(scheme, f, f0).max(current)
    } else {
        restoration_level_for_frequency(scheme, f, f0, current)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UflsRelayState {
    pub bus: BusId,
    /// Committed shed fraction.
    pub level: f64,
    /// Pending target and how long it has persisted, s.
    pub candidate: Option<(f64, f64)>,
}

impl UflsRelayState {
    pub fn new(bus: BusId) -> Self {
        Self {
            bus,
            level: 0.0,
            candidate: None,
        }
    }
}

/// Advance a relay by `dt` with frequency `f` measured over the step.
///
/// The target must hold for `delay_s` of accumulated time before it is
/// committed; a different target restarts the timer.
pub fn ufls_step(
    r: &UflsRelayState,
    scheme: &UflsScheme,
    f: f64,
    f0: f64,
    dt: f64,
) -> UflsRelayState {
    let mut n = *r;
    if !scheme.enabled {
        n.candidate = None;
        return n;
    }
    let target = target_level(scheme, f, f0, r.level);
    if target == r.level {
        n.candidate = None;
        return n;
    }
    let held = match r.candidate {
        Some((c, t)) if c == target => t + dt,
        _ => dt,
    };
    if held + TIMER_EPS >= scheme.delay_s {
        n.level = target;
        n.candidate = None;
    } else {
        n.candidate = Some((target, held));
    }
    n
}

/// Low-pass filtered derivative of a bus angle, reported in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyEstimator {
    pub f0: f64,
    pub tau: f64,
    prev_angle: Option<f64>,
    /// Filtered angle rate, rad/s.
    rate: f64,
}

impl FrequencyEstimator {
    pub const DEFAULT_TAU: f64 = 0.05;

    pub fn new(f0: f64, tau: f64) -> Self {
        Self {
            f0,
            tau,
            prev_angle: None,
            rate: 0.0,
        }
    }

    pub fn frequency(&self) -> f64 {
        self.f0 + self.rate / std::f64::consts::TAU
    }
}

/// Register a change of the bus angle that takes no time, such as the
/// network response to a switching event. The filtered rate takes the
/// impulse of the angle step in full, independent of the step size. With a
/// zero time constant the jump is left for the next sample instead.
pub fn estimator_angle_jump(e: &mut FrequencyEstimator, theta: f64) {
    if e.tau <= 0.0 {
        return;
    }
    if let Some(prev) = e.prev_angle {
        e.rate += (theta - prev) / e.tau;
    }
    e.prev_angle = Some(theta);
}

/// Feed the angle sampled `dt` after the previous one; returns the estimate.
pub fn estimate_bus_frequency(e: &mut FrequencyEstimator, theta: f64, dt: f64) -> f64 {
    if let Some(prev) = e.prev_angle {
        let raw = (theta - prev) / dt;
        e.rate = crate::machine::lag_step(e.rate, raw, e.tau, dt);
    }
    e.prev_angle = Some(theta);
    e.frequency()
}
