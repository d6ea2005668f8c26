//! Per-generator dynamics: classical swing equation plus steam and hydro
//! speed-governing systems.
//!
//! All quantities are per unit on the machine base. Speed deviations are
//! per unit of synchronous speed, so `Δω = −0.01` is 0.6 Hz below 60 Hz.
//! Step functions are pure: they take a state by reference and return the
//! advanced state, which keeps scenario replay deterministic.

use serde::{Deserialize, Serialize};

/// Exact response of `τ ẋ = u − x` over `dt` with `u` held constant.
#[inline]
pub fn lag_step(x: f64, u: f64, tau: f64, dt: f64) -> f64 {
    if tau <= 0.0 {
        return u;
    }
    x + (u - x) * -(-dt / tau).exp_m1()
}

// ---------------------------------------------------------------------------
// Steam

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SteamParams {
    /// Speed governor gain, reciprocal of the droop.
    pub k_g: f64,
    /// Speed relay time constant, s.
    pub t_sr: f64,
    /// Servomotor time constant, s.
    pub t_sm: f64,
    /// Valve opening and closing rate limits, p.u./s.
    pub valve_rate_open: f64,
    pub valve_rate_close: f64,
    pub valve_max: f64,
    pub valve_min: f64,
    /// Steam chest, reheater and crossover time constants, s.
    pub t_ch: f64,
    pub t_rh: f64,
    pub t_co: f64,
    /// Power fractions of the HP, IP and two LP sections.
    pub f_hp: f64,
    pub f_ip: f64,
    pub f_lpa: f64,
    pub f_lpb: f64,
}

impl Default for SteamParams {
    fn default() -> Self {
        Self {
            k_g: 20.0,
            t_sr: 0.001,
            t_sm: 0.15,
            valve_rate_open: 0.1,
            valve_rate_close: -0.1,
            valve_max: 4.496,
            valve_min: 0.0,
            t_ch: 0.3,
            t_rh: 7.0,
            t_co: 0.5,
            f_hp: 0.3,
            f_ip: 0.3,
            f_lpa: 0.2,
            f_lpb: 0.2,
        }
    }
}

impl SteamParams {
    pub fn validate(&self) -> Result<(), String> {
        let fsum = self.f_hp + self.f_ip + self.f_lpa + self.f_lpb;
        if (fsum - 1.0).abs() > 1e-9 {
            return Err(format!("steam stage fractions sum to {fsum}, expected 1"));
        }
        if [self.f_hp, self.f_ip, self.f_lpa, self.f_lpb]
            .iter()
            .any(|f| *f < 0.0)
        {
            return Err("steam stage fractions must be non-negative".into());
        }
        if !(self.k_g > 0.0) {
            return Err(format!("steam k_g must be positive, got {}", self.k_g));
        }
        if [self.t_sr, self.t_sm, self.t_ch, self.t_rh, self.t_co]
            .iter()
            .any(|t| !(*t > 0.0))
        {
            return Err("steam time constants must be positive".into());
        }
        if !(self.valve_rate_open > 0.0 && self.valve_rate_close < 0.0) {
            return Err("steam valve rate limits must straddle zero".into());
        }
        if !(self.valve_max > self.valve_min) {
            return Err("steam valve_max must exceed valve_min".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteamGovState {
    /// Load reference (valve position at zero speed deviation).
    pub load_ref: f64,
    /// Governor output before the speed relay, p.u. valve demand.
    pub demand: f64,
    /// Speed relay output.
    pub relay: f64,
    /// Valve position `C_v`.
    pub valve: f64,
    pub chest: f64,
    pub reheat: f64,
    pub crossover: f64,
}

impl SteamGovState {
    /// Steady state delivering `pm` with zero speed deviation.
    pub fn at_power(pm: f64) -> Self {
        Self {
            load_ref: pm,
            demand: pm,
            relay: pm,
            valve: pm,
            chest: pm,
            reheat: pm,
            crossover: pm,
        }
    }

    pub fn mechanical_power(&self, p: &SteamParams) -> f64 {
        p.f_hp * self.chest + p.f_ip * self.reheat + (p.f_lpa + p.f_lpb) * self.crossover
    }
}

/// Speed governor, speed relay and rate-limited servomotor.
pub fn steam_governor_step(s: &SteamGovState, p: &SteamParams, dw: f64, dt: f64) -> SteamGovState {
    let mut n = *s;
    // Speed reference is constant: the governor acts on −Δω only.
    n.demand = s.load_ref + p.k_g * (0.0 - dw);
    n.relay = lag_step(s.relay, n.demand, p.t_sr, dt);
    let free = lag_step(s.valve, n.relay, p.t_sm, dt) - s.valve;
    let moved = free.clamp(p.valve_rate_close * dt, p.valve_rate_open * dt);
    n.valve = (s.valve + moved).clamp(p.valve_min, p.valve_max);
    n
}

/// Advance the chest → reheater → crossover cascade with the valve held, and
/// return the new state with its mechanical power.
pub fn steam_turbine_step(s: &SteamGovState, p: &SteamParams, dt: f64) -> (SteamGovState, f64) {
    steam_cascade(s, p, s.valve, dt)
}

/// As [`steam_turbine_step`], with the valve moving from `valve_start` to
/// `s.valve` over the step. The cascade sees the step average.
pub fn steam_turbine_ramp_step(
    s: &SteamGovState,
    p: &SteamParams,
    valve_start: f64,
    dt: f64,
) -> (SteamGovState, f64) {
    steam_cascade(s, p, 0.5 * (valve_start + s.valve), dt)
}

fn steam_cascade(s: &SteamGovState, p: &SteamParams, valve: f64, dt: f64) -> (SteamGovState, f64) {
    let a = [
        [-1.0 / p.t_ch, 0.0, 0.0],
        [1.0 / p.t_rh, -1.0 / p.t_rh, 0.0],
        [0.0, 1.0 / p.t_co, -1.0 / p.t_co],
    ];
    let b = [1.0 / p.t_ch, 0.0, 0.0];
    let (phi, gamma) = discretize3(&a, &b, dt);
    let x = [s.chest, s.reheat, s.crossover];
    let mut y = [0.0; 3];
    for i in 0..3 {
        y[i] = phi[i][0] * x[0] + phi[i][1] * x[1] + phi[i][2] * x[2] + gamma[i] * valve;
    }
    let n = SteamGovState {
        chest: y[0],
        reheat: y[1],
        crossover: y[2],
        ..*s
    };
    let pm = n.mechanical_power(p);
    (n, pm)
}

/// Zero-order-hold discretization of `ẋ = A x + b u` via the exponential of
/// the augmented 4×4 matrix (scaling and squaring on a Taylor series).
fn discretize3(a: &[[f64; 3]; 3], b: &[f64; 3], dt: f64) -> ([[f64; 3]; 3], [f64; 3]) {
    let mut m = [[0.0; 4]; 4];
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[i][j] * dt;
        }
        m[i][3] = b[i] * dt;
    }
    let norm = m
        .iter()
        .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max);
    let mut squarings = 0;
    let mut scale = 1.0;
    while norm * scale > 0.25 {
        scale *= 0.5;
        squarings += 1;
    }
    for row in &mut m {
        for v in row.iter_mut() {
            *v *= scale;
        }
    }
    let mut e = identity4();
    let mut term = identity4();
    for k in 1..=18 {
        term = matmul4(&term, &m);
        let inv = 1.0 / k as f64;
        for row in &mut term {
            for v in row.iter_mut() {
                *v *= inv;
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                e[i][j] += term[i][j];
            }
        }
    }
    for _ in 0..squarings {
        e = matmul4(&e, &e);
    }
    let mut phi = [[0.0; 3]; 3];
    let mut gamma = [0.0; 3];
    for i in 0..3 {
        phi[i].copy_from_slice(&e[i][..3]);
        gamma[i] = e[i][3];
    }
    (phi, gamma)
}

fn identity4() -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

fn matmul4(x: &[[f64; 4]; 4], y: &[[f64; 4]; 4]) -> [[f64; 4]; 4] {
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for k in 0..4 {
            let xik = x[i][k];
            if xik == 0.0 {
                continue;
            }
            for j in 0..4 {
                out[i][j] += xik * y[k][j];
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Hydro

/// Signal fed back through the permanent droop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DroopFeedback {
    ElectricalPower,
    Gate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HydroParams {
    /// Permanent droop.
    pub r_p: f64,
    pub k_p: f64,
    pub k_i: f64,
    pub k_d: f64,
    /// Derivative filter time constant, s.
    pub t_d: f64,
    /// Servomotor gain and time constant.
    pub k_a: f64,
    pub t_a: f64,
    pub gate_min: f64,
    pub gate_max: f64,
    /// Gate velocity limits, p.u./s. `None` disables the limit.
    pub gate_rate_open: Option<f64>,
    pub gate_rate_close: Option<f64>,
    /// Water starting time, s.
    pub t_w: f64,
    /// No-load flow, p.u.
    pub q_nl: f64,
    /// Turbine gain; defaults to `1 / (1 − q_nl)` so rated gate gives 1 p.u.
    pub a_t: Option<f64>,
    /// Gate openings below this are treated as this value in the turbine.
    pub gate_floor: f64,
    pub droop_feedback: DroopFeedback,
}

impl Default for HydroParams {
    fn default() -> Self {
        Self {
            r_p: 0.05,
            k_p: 1.163,
            k_i: 0.105,
            k_d: 0.0,
            t_d: 0.01,
            k_a: 3.33,
            t_a: 0.07,
            gate_min: 0.0,
            gate_max: 1.0,
            gate_rate_open: Some(0.1),
            gate_rate_close: Some(-0.1),
            t_w: 1.0,
            q_nl: 0.08,
            a_t: None,
            gate_floor: 1e-3,
            droop_feedback: DroopFeedback::ElectricalPower,
        }
    }
}

impl HydroParams {
    pub fn turbine_gain(&self) -> f64 {
        self.a_t.unwrap_or(1.0 / (1.0 - self.q_nl))
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.r_p > 0.0) {
            return Err(format!("hydro r_p must be positive, got {}", self.r_p));
        }
        if [self.t_d, self.k_a, self.t_a, self.t_w, self.gate_floor]
            .iter()
            .any(|v| !(*v > 0.0))
        {
            return Err("hydro t_d, k_a, t_a, t_w and gate_floor must be positive".into());
        }
        if self.k_p < 0.0 || self.k_i < 0.0 || self.k_d < 0.0 {
            return Err("hydro PID gains must be non-negative".into());
        }
        if !(0.0 <= self.gate_min && self.gate_min < self.gate_max && self.gate_max <= 1.0) {
            return Err("hydro gate limits must satisfy 0 <= min < max <= 1".into());
        }
        if !(0.0..1.0).contains(&self.q_nl) {
            return Err(format!("hydro q_nl must lie in [0, 1), got {}", self.q_nl));
        }
        if matches!(self.gate_rate_open, Some(r) if !(r > 0.0))
            || matches!(self.gate_rate_close, Some(r) if !(r < 0.0))
        {
            return Err("hydro gate rate limits must straddle zero".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HydroGovState {
    /// Electrical power at the operating point, p.u.
    pub pe_ref: f64,
    /// Gate at the operating point.
    pub gate_ref: f64,
    /// PID integrator, which also carries the gate bias.
    pub integrator: f64,
    /// Derivative filter state.
    pub deriv_filter: f64,
    /// Last PID output (gate command).
    pub command: f64,
    /// Servomotor velocity state.
    pub servo_velocity: f64,
    /// Gate position `G`.
    pub gate: f64,
    /// Turbine water flow `q`, p.u.
    pub flow: f64,
}

impl HydroGovState {
    /// Steady state delivering `pm` with unit head.
    pub fn at_power(p: &HydroParams, pm: f64) -> Self {
        let gate = (pm / p.turbine_gain() + p.q_nl).clamp(p.gate_min, p.gate_max);
        Self {
            pe_ref: pm,
            gate_ref: gate,
            integrator: gate,
            deriv_filter: 0.0,
            command: gate,
            servo_velocity: 0.0,
            gate,
            flow: gate,
        }
    }

    pub fn head(&self, p: &HydroParams) -> f64 {
        let g = self.gate.max(p.gate_floor);
        (self.flow / g).powi(2)
    }

    pub fn mechanical_power(&self, p: &HydroParams) -> f64 {
        (p.turbine_gain() * self.head(p) * (self.flow - p.q_nl)).max(0.0)
    }
}

/// PID speed governor with permanent droop and a gate servomotor.
///
/// `dpe` is the electrical power deviation from the operating point; it is
/// ignored when the droop taps the gate position instead.
pub fn hydro_governor_step(
    s: &HydroGovState,
    p: &HydroParams,
    dw: f64,
    dpe: f64,
    dt: f64,
) -> HydroGovState {
    let feedback = match p.droop_feedback {
        DroopFeedback::ElectricalPower => dpe,
        DroopFeedback::Gate => s.gate - s.gate_ref,
    };
    let err = -dw - p.r_p * feedback;

    let mut n = *s;
    n.deriv_filter = lag_step(s.deriv_filter, err, p.t_d, dt);
    let derivative = p.k_d * (err - n.deriv_filter) / p.t_d;
    // Clamping the integrator to the gate range is the anti-windup.
    n.integrator = (s.integrator + p.k_i * err * dt).clamp(p.gate_min, p.gate_max);
    n.command = n.integrator + p.k_p * err + derivative;

    // The servo sees the PID output at mid-step.
    let u = 0.5 * (s.integrator + n.integrator) + p.k_p * err + derivative;
    let rate = |v: f64, g: f64| -> f64 {
        let mut r = v;
        if let Some(hi) = p.gate_rate_open {
            r = r.min(hi);
        }
        if let Some(lo) = p.gate_rate_close {
            r = r.max(lo);
        }
        if (g >= p.gate_max && r > 0.0) || (g <= p.gate_min && r < 0.0) {
            0.0
        } else {
            r
        }
    };
    let f = |v: f64, g: f64| -> (f64, f64) { ((p.k_a * (u - g) - v) / p.t_a, rate(v, g)) };
    let (v0, g0) = (s.servo_velocity, s.gate);
    let k1 = f(v0, g0);
    let k2 = f(v0 + 0.5 * dt * k1.0, g0 + 0.5 * dt * k1.1);
    let k3 = f(v0 + 0.5 * dt * k2.0, g0 + 0.5 * dt * k2.1);
    let k4 = f(v0 + dt * k3.0, g0 + dt * k3.1);
    n.servo_velocity = v0 + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
    let dg = dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
    let dg = match (p.gate_rate_close, p.gate_rate_open) {
        (Some(lo), Some(hi)) => dg.clamp(lo * dt, hi * dt),
        (Some(lo), None) => dg.max(lo * dt),
        (None, Some(hi)) => dg.min(hi * dt),
        (None, None) => dg,
    };
    n.gate = (g0 + dg).clamp(p.gate_min, p.gate_max);
    n
}

/// Nonlinear penstock and turbine: `dq/dt = (1 − h)/T_w`, `h = (q/G)²`,
/// `P_m = A_t h (q − q_nl)`, gate held over the step.
pub fn hydro_turbine_step(s: &HydroGovState, p: &HydroParams, dt: f64) -> (HydroGovState, f64) {
    hydro_turbine_ramp_step(s, p, s.gate, dt)
}

/// As [`hydro_turbine_step`], with the gate moving linearly from
/// `gate_start` to `s.gate` over the step.
pub fn hydro_turbine_ramp_step(
    s: &HydroGovState,
    p: &HydroParams,
    gate_start: f64,
    dt: f64,
) -> (HydroGovState, f64) {
    if s.gate < p.gate_floor {
        log::debug!(
            "hydro gate {} below floor {}, using floor",
            s.gate,
            p.gate_floor
        );
    }
    let gate_at = |frac: f64| (gate_start + (s.gate - gate_start) * frac).max(p.gate_floor);
    let f = |q: f64, g: f64| (1.0 - (q / g).powi(2)) / p.t_w;
    let (g0, g_mid, g1) = (gate_at(0.0), gate_at(0.5), gate_at(1.0));
    let q0 = s.flow;
    let k1 = f(q0, g0);
    let k2 = f(q0 + 0.5 * dt * k1, g_mid);
    let k3 = f(q0 + 0.5 * dt * k2, g_mid);
    let k4 = f(q0 + dt * k3, g1);
    let mut n = *s;
    n.flow = (q0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)).max(0.0);
    let pm = n.mechanical_power(p);
    (n, pm)
}

// ---------------------------------------------------------------------------
// Swing

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwingParams {
    /// Inertia constant, s.
    pub h: f64,
    /// Damping, p.u.
    pub d: f64,
    /// Synchronous speed, rad/s.
    pub omega_s: f64,
}

/// `(dδ/dt, dΔω/dt)` of the classical swing equation.
#[inline]
pub fn swing_derivative(dw: f64, pm: f64, pe: f64, sp: &SwingParams) -> (f64, f64) {
    (sp.omega_s * dw, (pm - pe - sp.d * dw) / (2.0 * sp.h))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GovernorState {
    Steam(SteamGovState),
    Hydro(HydroGovState),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineState {
    /// Rotor angle, rad.
    pub delta: f64,
    /// Speed deviation, p.u.
    pub dw: f64,
    /// Mechanical power, p.u. on machine base.
    pub pm: f64,
    pub governor: GovernorState,
    pub online: bool,
}

impl MachineState {
    /// Advance governor and turbine one step and update `pm`. Offline
    /// machines keep a frozen governor and zero power.
    pub fn advance_governor(&mut self, steam: &SteamParams, hydro: &HydroParams, pe: f64, dt: f64) {
        if !self.online {
            self.pm = 0.0;
            return;
        }
        match &mut self.governor {
            GovernorState::Steam(s) => {
                let g = steam_governor_step(s, steam, self.dw, dt);
                let (t, pm) = steam_turbine_ramp_step(&g, steam, s.valve, dt);
                *s = t;
                self.pm = pm;
            }
            GovernorState::Hydro(s) => {
                let g = hydro_governor_step(s, hydro, self.dw, pe - s.pe_ref, dt);
                let (t, pm) = hydro_turbine_ramp_step(&g, hydro, s.gate, dt);
                *s = t;
                self.pm = pm;
            }
        }
    }
}

/// RK4 step of one machine against a constant electrical power.
pub fn swing_step(m: &MachineState, pm: f64, pe: f64, sp: &SwingParams, dt: f64) -> MachineState {
    if !m.online {
        return MachineState { pm: 0.0, ..*m };
    }
    let k1 = swing_derivative(m.dw, pm, pe, sp);
    let k2 = swing_derivative(m.dw + 0.5 * dt * k1.1, pm, pe, sp);
    let k3 = swing_derivative(m.dw + 0.5 * dt * k2.1, pm, pe, sp);
    let k4 = swing_derivative(m.dw + dt * k3.1, pm, pe, sp);
    MachineState {
        delta: m.delta + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        dw: m.dw + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        pm,
        ..*m
    }
}
