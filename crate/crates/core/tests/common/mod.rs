//! Reference implementations shared by the test targets.
#![allow(dead_code)]

use freqsim::grid::BusId;
use freqsim::protection::{ufls_step, UflsRelayState, UflsScheme};
use freqsim::sim::Trajectory;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const F0: f64 = 60.0;

/// Table-driven relay: thresholds written out by hand and an integer
/// step counter for the delay.
pub struct OracleRelay {
    pub level: f64,
    pending: Option<f64>,
    count: usize,
    needed: usize,
}

const SHED: [(f64, f64); 5] = [
    (2.0, 0.50),
    (1.8, 0.45),
    (1.6, 0.35),
    (1.4, 0.25),
    (1.2, 0.15),
];
const RESTORE: [(f64, f64); 3] = [(0.25, 0.0), (0.5, 0.05), (0.75, 0.15)];

impl OracleRelay {
    pub fn new(delay_s: f64, dt: f64) -> Self {
        Self {
            level: 0.0,
            pending: None,
            count: 0,
            needed: ((delay_s / dt) - 1e-6).ceil().max(1.0) as usize,
        }
    }

    pub fn target(&self, f: f64) -> f64 {
        if f < F0 - 1.0 {
            let stair = SHED
                .iter()
                .find(|(d, _)| f <= F0 - d)
                .map_or(0.05, |&(_, l)| l);
            return stair.max(self.level);
        }
        for (d, l) in RESTORE {
            if f >= F0 - d {
                return self.level.min(l);
            }
        }
        self.level
    }

    pub fn step(&mut self, f: f64) {
        let t = self.target(f);
        if t == self.level {
            self.pending = None;
            self.count = 0;
            return;
        }
        if self.pending == Some(t) {
            self.count += 1;
        } else {
            self.pending = Some(t);
            self.count = 1;
        }
        if self.count >= self.needed {
            self.level = t;
            self.pending = None;
            self.count = 0;
        }
    }
}

/// Frequencies of interest: every threshold, exactly and nudged either way.
fn boundary_values() -> Vec<f64> {
    let mut v = Vec::new();
    for d in [0.0, 0.25, 0.5, 0.75, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.5] {
        let f: f64 = F0 - d;
        v.extend([f, f + 1e-9, f - 1e-9, f.next_up(), f.next_down()]);
    }
    v
}

/// Piecewise-constant frequency trace sampled every step.
pub fn random_trace(seed: u64, len: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = boundary_values();
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let f = if rng.random_bool(0.6) {
            edges[rng.random_range(0..edges.len())]
        } else {
            rng.random_range(F0 - 2.6..F0 + 0.2)
        };
        let hold = rng.random_range(1..40);
        out.extend(std::iter::repeat_n(f, hold.min(len - out.len())));
    }
    out
}

/// Run the relay and the oracle side by side over `trace` and check the
/// structural invariants.
pub fn check_trace(scheme: &UflsScheme, trace: &[f64], dt: f64) -> Result<(), String> {
    let levels = scheme.levels();
    let mut relay = UflsRelayState::new(BusId(1));
    let mut oracle = OracleRelay::new(scheme.delay_s, dt);
    let mut agree_run = 0usize;
    for (k, &f) in trace.iter().enumerate() {
        let before = relay.level;
        let target = oracle.target(f);
        relay = ufls_step(&relay, scheme, f, F0, dt);
        oracle.step(f);
        if relay.level != oracle.level {
            return Err(format!(
                "step {k} f={f}: relay {} oracle {}",
                relay.level, oracle.level
            ));
        }
        if !levels.contains(&relay.level) {
            return Err(format!("step {k}: level {} off the staircase", relay.level));
        }
        agree_run = if target != before { agree_run + 1 } else { 0 };
        if relay.level != before {
            if agree_run < oracle.needed {
                return Err(format!("step {k}: committed after {agree_run} steps"));
            }
            let dead = (F0 - 1.0..F0 - 0.75).contains(&f);
            if dead {
                return Err(format!("step {k}: level changed in the dead band"));
            }
            if relay.level > before && f >= F0 - 1.0 {
                return Err(format!("step {k}: shed above the shedding band"));
            }
            if relay.level < before && f < F0 - 0.75 {
                return Err(format!("step {k}: restored below the restoration band"));
            }
            agree_run = 0;
        }
    }
    Ok(())
}

/// Trajectory with per-bus rectangular shedding pulses.
///
/// Each pulse is `(bus, start, end, fraction)` in sample indices, active on
/// `start..end`.
pub fn pulse_trajectory(
    h: f64,
    n: usize,
    expected: &[f64],
    pulses: &[(usize, usize, usize, f64)],
) -> Trajectory {
    let buses = (1..=expected.len() as u32).map(BusId).collect();
    let mut e = vec![expected.to_vec(); n];
    let mut s = vec![expected.to_vec(); n];
    let mut l = vec![vec![0.0; expected.len()]; n];
    for k in 0..n {
        for &(b, start, end, frac) in pulses {
            if (start..end).contains(&k) {
                l[k][b] = frac;
                s[k][b] = expected[b] * (1.0 - frac);
            }
        }
        e[k] = expected.to_vec();
    }
    Trajectory::from_load_channels(h, buses, e, s, l)
}

/// Three buses in one area: a steam unit and two hydro units, all at 5%
/// droop and zero damping, feeding one load.
pub fn single_area_model(load_mw: f64) -> freqsim::grid::GridModel {
    use freqsim::grid::{BusSpec, GeneratorKind, GeneratorSpec, GridModel, LineSpec};
    use freqsim::machine::{HydroParams, SteamParams};
    let gen = |name: &str, kind, rating_mva| GeneratorSpec {
        name: name.into(),
        kind,
        rating_mva,
        inertia_h: 5.0,
        damping: 0.0,
        coupling_x: 0.3,
        steam: SteamParams::default(),
        hydro: HydroParams::default(),
    };
    let bus = |id, generator, load_mw| BusSpec {
        id: BusId(id),
        generator,
        wind_mw: None,
        load_mw,
        dispatched: false,
    };
    let buses = vec![
        bus(
            1,
            Some(gen("S", GeneratorKind::Thermal, 600.0)),
            Some(load_mw),
        ),
        bus(2, Some(gen("H1", GeneratorKind::Hydro, 400.0)), None),
        bus(3, Some(gen("H2", GeneratorKind::Hydro, 300.0)), None),
    ];
    let line = |a, b| LineSpec {
        from: BusId(a),
        to: BusId(b),
        susceptance: 20.0,
    };
    GridModel::new(
        buses,
        vec![line(1, 2), line(2, 3), line(1, 3)],
        100.0,
        F0,
        BusId(1),
    )
    .unwrap()
}
