//! Fixed-step time-domain engine.
//!
//! Each step of length `dt` runs, in order:
//!
//! 1. read wind, load and battery values for the current second (held over
//!    the second);
//! 2. scale loads by the committed UFLS levels;
//! 3. solve the coupled network for bus angles at the current rotor angles;
//! 4. take each machine's electrical power from the solve;
//! 5. advance governors and turbines, then the swing equations (RK4 with the
//!    network re-solved at every stage);
//! 6. update bus frequency estimators and relays from the new angles.
//!
//! Angle jumps caused by switching between steps reach the estimators and
//! relays at step 3, before time advances.

use serde::Serialize;

use crate::grid::{BusId, CoupledNetwork, GeneratorKind, GeneratorSpec, GridError, GridModel};
use crate::machine::{
    swing_derivative, GovernorState, HydroGovState, MachineState, SteamGovState, SwingParams,
};
use crate::protection::{
    estimate_bus_frequency, estimator_angle_jump, ufls_step, FrequencyEstimator, UflsRelayState,
};
use crate::scenario::{build_profiles, Scenario, ScenarioError, ScenarioProfiles};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("islanding at t = {time_s} s: {source}")]
    Islanding { time_s: f64, source: GridError },
    #[error("initial dispatch infeasible: {0}")]
    Dispatch(String),
}

/// Entry of the run log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RunEvent {
    Trip {
        time_s: f64,
        generator: String,
    },
    TripIgnored {
        time_s: f64,
        generator: String,
    },
    Relay {
        time_s: f64,
        bus: BusId,
        old_level: f64,
        new_level: f64,
    },
}

impl RunEvent {
    pub fn time_s(&self) -> f64 {
        match self {
            Self::Trip { time_s, .. }
            | Self::TripIgnored { time_s, .. }
            | Self::Relay { time_s, .. } => *time_s,
        }
    }
}

/// Outcome of [`Simulation::apply_contingency`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripOutcome {
    Tripped,
    AlreadyOffline,
}

/// One recorded sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sample {
    pub time_s: f64,
    /// Inertia-weighted mean frequency of online machines, Hz.
    pub coi_hz: f64,
    /// Estimated frequency per bus, Hz.
    pub bus_hz: Vec<f64>,
    pub gen_delta: Vec<f64>,
    pub gen_dw: Vec<f64>,
    pub gen_pm_mw: Vec<f64>,
    pub gen_pe_mw: Vec<f64>,
    /// Unshed load per load bus, MW.
    pub expected_mw: Vec<f64>,
    /// Load actually served per load bus, MW.
    pub served_mw: Vec<f64>,
    pub shed_level: Vec<f64>,
    pub wind_mw: Vec<f64>,
    pub battery_mw: Vec<f64>,
}

/// Uniformly sampled run record.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub interval_s: f64,
    pub bus_ids: Vec<BusId>,
    pub gen_names: Vec<String>,
    pub load_buses: Vec<BusId>,
    pub wind_buses: Vec<BusId>,
    pub battery_buses: Vec<BusId>,
    pub samples: Vec<Sample>,
}

impl Trajectory {
    /// Trajectory carrying only load channels, for post-processing tests
    /// and externally produced traces.
    pub fn from_load_channels(
        interval_s: f64,
        load_buses: Vec<BusId>,
        expected_mw: Vec<Vec<f64>>,
        served_mw: Vec<Vec<f64>>,
        shed_level: Vec<Vec<f64>>,
    ) -> Self {
        let samples = expected_mw
            .into_iter()
            .zip(served_mw)
            .zip(shed_level)
            .enumerate()
            .map(|(k, ((e, s), l))| Sample {
                time_s: k as f64 * interval_s,
                expected_mw: e,
                served_mw: s,
                shed_level: l,
                ..Sample::default()
            })
            .collect();
        Self {
            interval_s,
            load_buses,
            samples,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples `[from, to]` inclusive of both ends.
    pub fn slice(&self, from: usize, to: usize) -> Self {
        Self {
            samples: self.samples[from..=to].to_vec(),
            ..self.clone_meta()
        }
    }

    fn clone_meta(&self) -> Self {
        Self {
            interval_s: self.interval_s,
            bus_ids: self.bus_ids.clone(),
            gen_names: self.gen_names.clone(),
            load_buses: self.load_buses.clone(),
            wind_buses: self.wind_buses.clone(),
            battery_buses: self.battery_buses.clone(),
            samples: Vec::new(),
        }
    }

    pub fn bus_column(&self, id: BusId) -> Option<usize> {
        self.bus_ids.iter().position(|&b| b == id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub steps: usize,
    /// Largest nodal balance residual of any network solve, p.u.
    pub max_nodal_residual: f64,
    /// Largest `|Σ P_e + Σ P_bus|` of any solve, p.u.
    pub max_balance_residual: f64,
    /// Minimum centre-of-inertia frequency over all steps, Hz.
    pub coi_nadir_hz: f64,
    pub coi_nadir_time_s: f64,
    /// Largest |Δω| of any machine over all steps, p.u.
    pub max_abs_dw: f64,
    /// Digest of the wind and load realizations.
    pub profile_digest: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scenario: String,
    pub trajectory: Trajectory,
    pub events: Vec<RunEvent>,
    pub stats: RunStats,
}

/// Static data of one machine slot.
#[derive(Debug, Clone)]
struct Slot {
    spec: GeneratorSpec,
    bus: usize,
    swing: SwingParams,
    /// Machine base over system base.
    scale: f64,
    coupling_b: f64,
}

#[derive(Debug, Clone)]
pub struct SystemState {
    pub machines: Vec<MachineState>,
    pub relays: Vec<UflsRelayState>,
    pub estimators: Vec<FrequencyEstimator>,
    pub bus_angles: Vec<f64>,
    /// Electrical power per machine, p.u. on system base.
    pub pe: Vec<f64>,
    pub step: usize,
}

pub struct Simulation<'a> {
    model: &'a GridModel,
    scenario: &'a Scenario,
    profiles: ScenarioProfiles,
    slots: Vec<Slot>,
    network: CoupledNetwork,
    /// Bus index per relay / load series.
    load_bus_idx: Vec<usize>,
    wind_bus_idx: Vec<usize>,
    battery_bus_idx: Vec<usize>,
    pub state: SystemState,
    events: Vec<RunEvent>,
    stats: RunStats,
    // scratch
    injections: Vec<f64>,
    theta: Vec<f64>,
    pe_buf: Vec<f64>,
    delta_buf: Vec<f64>,
}

impl<'a> Simulation<'a> {
    pub fn new(model: &'a GridModel, scenario: &'a Scenario) -> Result<Self, SimError> {
        scenario.validate(model)?;
        let profiles = build_profiles(model, scenario)?;
        let omega_s = std::f64::consts::TAU * model.f0;

        let slots: Vec<Slot> = model
            .generators()
            .map(|(bus, g)| Slot {
                spec: g.clone(),
                bus,
                swing: SwingParams {
                    h: g.inertia_h,
                    d: g.damping,
                    omega_s,
                },
                scale: g.rating_mva / model.base_mva,
                coupling_b: g.coupling_susceptance(model.base_mva),
            })
            .collect();

        // Operating point: generation covers forecast load minus forecast
        // wind, shared in proportion to rating.
        let net_demand = model.load_total_mw() - model.wind_total_mw();
        let total_rating: f64 = slots.iter().map(|s| s.spec.rating_mva).sum();
        if !(net_demand >= 0.0) || net_demand > total_rating {
            return Err(SimError::Dispatch(format!(
                "net demand {net_demand} MW outside [0, {total_rating}] MW"
            )));
        }
        let pm0: Vec<f64> = slots
            .iter()
            .map(|s| net_demand / total_rating * s.spec.rating_mva / s.spec.rating_mva)
            .collect();

        // Bus angles from a slack-free solve of the coupled network with
        // machine angles chosen so that each delivers its set-point:
        // first a DC flow with generation at terminal buses, then offset δ.
        let mut forecast_inj = vec![0.0; model.buses.len()];
        for (i, b) in model.buses.iter().enumerate() {
            forecast_inj[i] =
                (b.wind_mw.unwrap_or(0.0) - b.load_mw.unwrap_or(0.0)) / model.base_mva;
        }
        let mut dc_inj = forecast_inj.clone();
        for (s, p) in slots.iter().zip(&pm0) {
            dc_inj[s.bus] += p * s.scale;
        }
        let b =
            crate::grid::build_susceptance_matrix(model).map_err(|source| SimError::Islanding {
                time_s: 0.0,
                source,
            })?;
        let dc_mw: Vec<f64> = dc_inj.iter().map(|p| p * model.base_mva).collect();
        let flow = crate::grid::solve_dc_flow(&b, model.base_mva, &dc_mw).map_err(|source| {
            SimError::Islanding {
                time_s: 0.0,
                source,
            }
        })?;

        let machines: Vec<MachineState> = slots
            .iter()
            .zip(&pm0)
            .map(|(s, &pm)| {
                let governor = match s.spec.kind {
                    GeneratorKind::Thermal => GovernorState::Steam(SteamGovState::at_power(pm)),
                    GeneratorKind::Hydro => {
                        GovernorState::Hydro(HydroGovState::at_power(&s.spec.hydro, pm))
                    }
                };
                MachineState {
                    delta: flow.angles[s.bus] + pm * s.scale / s.coupling_b,
                    dw: 0.0,
                    pm,
                    governor,
                    online: true,
                }
            })
            .collect();

        let network = Self::build_network(model, &slots, &machines).map_err(|source| {
            SimError::Islanding {
                time_s: 0.0,
                source,
            }
        })?;

        let load_bus_idx: Vec<usize> = profiles
            .load
            .iter()
            .map(|s| model.bus_index(s.bus).expect("profile bus exists"))
            .collect();
        let wind_bus_idx = profiles
            .wind
            .iter()
            .map(|s| model.bus_index(s.bus).expect("profile bus exists"))
            .collect();
        let battery_bus_idx = profiles
            .battery
            .iter()
            .map(|(id, _)| model.bus_index(*id).expect("battery bus exists"))
            .collect();
        let relays = profiles
            .load
            .iter()
            .map(|s| UflsRelayState::new(s.bus))
            .collect();
        let estimators =
            vec![FrequencyEstimator::new(model.f0, scenario.estimator_tau_s); model.buses.len()];

        let n_bus = model.buses.len();
        let n_gen = slots.len();
        let mut sim = Self {
            model,
            scenario,
            stats: RunStats {
                steps: 0,
                max_nodal_residual: 0.0,
                max_balance_residual: 0.0,
                coi_nadir_hz: model.f0,
                coi_nadir_time_s: 0.0,
                max_abs_dw: 0.0,
                profile_digest: profiles.digest.clone(),
            },
            profiles,
            slots,
            network,
            load_bus_idx,
            wind_bus_idx,
            battery_bus_idx,
            state: SystemState {
                machines,
                relays,
                estimators,
                bus_angles: vec![0.0; n_bus],
                pe: vec![0.0; n_gen],
                step: 0,
            },
            events: Vec::new(),
            injections: vec![0.0; n_bus],
            theta: Vec::with_capacity(n_bus),
            pe_buf: Vec::with_capacity(n_gen),
            delta_buf: vec![0.0; n_gen],
        };
        sim.fill_injections(0);
        sim.solve_current();
        let angles = sim.state.bus_angles.clone();
        for (e, &a) in sim.state.estimators.iter_mut().zip(&angles) {
            estimate_bus_frequency(e, a, scenario.dt_s);
        }
        Ok(sim)
    }

    fn build_network(
        model: &GridModel,
        slots: &[Slot],
        machines: &[MachineState],
    ) -> Result<CoupledNetwork, GridError> {
        let list: Vec<(usize, f64, bool)> = slots
            .iter()
            .zip(machines)
            .map(|(s, m)| (s.bus, s.coupling_b, m.online))
            .collect();
        CoupledNetwork::new(model, &list)
    }

    pub fn time_s(&self) -> f64 {
        self.state.step as f64 * self.scenario.dt_s
    }

    pub fn events(&self) -> &[RunEvent] {
        &self.events
    }

    pub fn stats(&self) -> &RunStats {
        &self.stats
    }

    pub fn profiles(&self) -> &ScenarioProfiles {
        &self.profiles
    }

    fn second_index(&self, step: usize) -> usize {
        let t = step as f64 * self.scenario.dt_s;
        (t + 1e-9).floor() as usize
    }

    /// Net bus injections (p.u.) in effect during `step`.
    fn fill_injections(&mut self, step: usize) {
        let k = self.second_index(step);
        let base = self.model.base_mva;
        self.injections.iter_mut().for_each(|p| *p = 0.0);
        for (s, &i) in self.profiles.wind.iter().zip(&self.wind_bus_idx) {
            self.injections[i] += s.at(k as f64) / base;
        }
        for ((s, &i), r) in self
            .profiles
            .load
            .iter()
            .zip(&self.load_bus_idx)
            .zip(&self.state.relays)
        {
            self.injections[i] -= s.at(k as f64) * (1.0 - r.level) / base;
        }
        for ((_, b), &i) in self.profiles.battery.iter().zip(&self.battery_bus_idx) {
            let kk = k.min(b.realized_mw.len() - 1);
            self.injections[i] += b.realized_mw[kk] / base;
        }
    }

    /// Net bus injections in MW (wind − served load + battery) during
    /// second `k` at the current relay levels, in model bus order.
    pub fn net_injections_mw(&mut self, k: usize) -> Vec<f64> {
        let steps_per_s = (1.0 / self.scenario.dt_s).round() as usize;
        self.fill_injections(k * steps_per_s);
        self.injections
            .iter()
            .map(|p| p * self.model.base_mva)
            .collect()
    }

    /// Solve the network at the current machine angles and store θ and P_e.
    fn solve_current(&mut self) {
        for (d, m) in self.delta_buf.iter_mut().zip(&self.state.machines) {
            *d = m.delta;
        }
        self.network
            .solve_angles(&self.delta_buf, &self.injections, &mut self.theta);
        self.network
            .machine_power(&self.delta_buf, &self.theta, &mut self.pe_buf);
        self.check_residuals();
        self.state.bus_angles.clone_from(&self.theta);
        self.state.pe.clone_from(&self.pe_buf);
    }

    fn check_residuals(&mut self) {
        let nodal = self
            .network
            .balance_residual(&self.delta_buf, &self.injections, &self.theta);
        let balance = (self.pe_buf.iter().sum::<f64>() + self.injections.iter().sum::<f64>()).abs();
        self.stats.max_nodal_residual = self.stats.max_nodal_residual.max(nodal);
        self.stats.max_balance_residual = self.stats.max_balance_residual.max(balance);
    }

    /// Electrical power per machine (machine base) at trial angles.
    fn machine_pe_at(&mut self, delta: &[f64]) -> Vec<f64> {
        self.network
            .solve_angles(delta, &self.injections, &mut self.theta);
        self.network
            .machine_power(delta, &self.theta, &mut self.pe_buf);
        self.delta_buf.copy_from_slice(delta);
        self.check_residuals();
        self.pe_buf
            .iter()
            .zip(&self.slots)
            .map(|(p, s)| p / s.scale)
            .collect()
    }

    /// Trip a generator. Tripping an offline unit logs a warning and does
    /// nothing else.
    pub fn apply_contingency(&mut self, generator: &str) -> Result<TripOutcome, SimError> {
        let time_s = self.time_s();
        let Some(k) = self.slots.iter().position(|s| s.spec.name == generator) else {
            return Err(SimError::Scenario(ScenarioError::Invalid {
                name: self.scenario.name.clone(),
                message: format!("unknown generator {generator}"),
            }));
        };
        if !self.state.machines[k].online {
            log::warn!("{generator} is already offline at t = {time_s} s; trip ignored");
            self.events.push(RunEvent::TripIgnored {
                time_s,
                generator: generator.to_string(),
            });
            return Ok(TripOutcome::AlreadyOffline);
        }
        let m = &mut self.state.machines[k];
        m.online = false;
        m.pm = 0.0;
        self.network = Self::build_network(self.model, &self.slots, &self.state.machines)
            .map_err(|source| SimError::Islanding { time_s, source })?;
        self.events.push(RunEvent::Trip {
            time_s,
            generator: generator.to_string(),
        });
        Ok(TripOutcome::Tripped)
    }

    fn online_connected_mva(&self) -> f64 {
        self.slots
            .iter()
            .zip(&self.state.machines)
            .filter(|(_, m)| m.online)
            .map(|(s, _)| s.spec.rating_mva)
            .sum()
    }

    /// Total rating of online machines, MVA.
    pub fn connected_rating_mva(&self) -> f64 {
        self.online_connected_mva()
    }

    /// Advance the system by one step.
    pub fn step(&mut self) -> Result<(), SimError> {
        let dt = self.scenario.dt_s;
        let step = self.state.step;

        // Inputs for this step and the network at the step start.
        // Switching since the last sample moves the angles instantly; the
        // estimators and relays see that instant before time advances.
        self.fill_injections(step);
        self.solve_current();
        for (e, &a) in self.state.estimators.iter_mut().zip(&self.state.bus_angles) {
            estimator_angle_jump(e, a);
        }
        self.update_relays(0.0);

        // Governors and turbines, then the swing equations. The governor
        // inputs are first held at their step-start values, then at the
        // average of start and predicted end values, and the swing is redone.
        let start = self.state.machines.clone();
        let pm_start: Vec<f64> = start.iter().map(|m| m.pm).collect();
        let pe_start = self.machine_base(&self.state.pe);
        let d0: Vec<f64> = start.iter().map(|m| m.delta).collect();
        let w0: Vec<f64> = start.iter().map(|m| m.dw).collect();

        let pm_end = self.advance_governors(&start, &w0, &pe_start);
        let (d1, w1) = self.swing_rk4(&d0, &w0, &pm_start, &pm_end);
        let pe_end = self.machine_pe_at(&d1);
        let w_mid: Vec<f64> = w0.iter().zip(&w1).map(|(a, b)| 0.5 * (a + b)).collect();
        let pe_mid: Vec<f64> = pe_start
            .iter()
            .zip(&pe_end)
            .map(|(a, b)| 0.5 * (a + b))
            .collect();
        let pm_end = self.advance_governors(&start, &w_mid, &pe_mid);
        let (d1, w1) = self.swing_rk4(&d0, &w0, &pm_start, &pm_end);
        for (i, m) in self.state.machines.iter_mut().enumerate() {
            if m.online {
                m.delta = d1[i];
                m.dw = w1[i];
            }
        }
        self.state.step += 1;

        // Frequency estimators and relays at the step end.
        self.solve_current();
        for (e, &a) in self.state.estimators.iter_mut().zip(&self.state.bus_angles) {
            estimate_bus_frequency(e, a, dt);
        }
        self.update_relays(dt);

        let coi = self.coi_hz();
        if coi < self.stats.coi_nadir_hz {
            self.stats.coi_nadir_hz = coi;
            self.stats.coi_nadir_time_s = self.time_s();
        }
        for m in &self.state.machines {
            if m.online {
                self.stats.max_abs_dw = self.stats.max_abs_dw.max(m.dw.abs());
            }
        }
        self.stats.steps += 1;
        Ok(())
    }

    fn machine_base(&self, pe_system: &[f64]) -> Vec<f64> {
        pe_system
            .iter()
            .zip(&self.slots)
            .map(|(p, s)| p / s.scale)
            .collect()
    }

    /// Advance every governor from `start` over one step with inputs `dw`
    /// and `pe` held, store the new governor states and return `P_m`.
    fn advance_governors(&mut self, start: &[MachineState], dw: &[f64], pe: &[f64]) -> Vec<f64> {
        let dt = self.scenario.dt_s;
        for (k, slot) in self.slots.iter().enumerate() {
            let mut m = MachineState {
                dw: dw[k],
                ..start[k]
            };
            m.advance_governor(&slot.spec.steam, &slot.spec.hydro, pe[k], dt);
            let target = &mut self.state.machines[k];
            target.governor = m.governor;
            target.pm = m.pm;
        }
        self.state.machines.iter().map(|m| m.pm).collect()
    }

    /// RK4 over all swing equations with the network solved at every stage
    /// and `P_m` interpolated linearly across the step.
    fn swing_rk4(
        &mut self,
        d0: &[f64],
        w0: &[f64],
        pm_start: &[f64],
        pm_end: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let dt = self.scenario.dt_s;
        let n = self.slots.len();
        let online: Vec<bool> = self.state.machines.iter().map(|m| m.online).collect();
        let swing: Vec<SwingParams> = self.slots.iter().map(|s| s.swing).collect();
        let deriv = |pe: &[f64], w: &[f64], frac: f64| -> Vec<(f64, f64)> {
            (0..n)
                .map(|k| {
                    if online[k] {
                        let pm = pm_start[k] + (pm_end[k] - pm_start[k]) * frac;
                        swing_derivative(w[k], pm, pe[k], &swing[k])
                    } else {
                        (0.0, 0.0)
                    }
                })
                .collect()
        };
        let stage = |c: f64, k: &[(f64, f64)]| -> (Vec<f64>, Vec<f64>) {
            (
                (0..n).map(|i| d0[i] + c * dt * k[i].0).collect(),
                (0..n).map(|i| w0[i] + c * dt * k[i].1).collect(),
            )
        };
        let pe1 = self.machine_pe_at(d0);
        let k1 = deriv(&pe1, w0, 0.0);
        let (d2, w2) = stage(0.5, &k1);
        let k2 = deriv(&self.machine_pe_at(&d2), &w2, 0.5);
        let (d3, w3) = stage(0.5, &k2);
        let k3 = deriv(&self.machine_pe_at(&d3), &w3, 0.5);
        let (d4, w4) = stage(1.0, &k3);
        let k4 = deriv(&self.machine_pe_at(&d4), &w4, 1.0);
        let comb = |i: usize, f: fn(&(f64, f64)) -> f64| {
            dt / 6.0 * (f(&k1[i]) + 2.0 * f(&k2[i]) + 2.0 * f(&k3[i]) + f(&k4[i]))
        };
        (
            (0..n).map(|i| d0[i] + comb(i, |k| k.0)).collect(),
            (0..n).map(|i| w0[i] + comb(i, |k| k.1)).collect(),
        )
    }

    /// Advance every relay by `dt` on the current frequency estimates.
    fn update_relays(&mut self, dt: f64) {
        let time_s = self.time_s();
        for (r, &i) in self.state.relays.iter_mut().zip(&self.load_bus_idx) {
            let f = self.state.estimators[i].frequency();
            let next = ufls_step(r, &self.scenario.ufls, f, self.model.f0, dt);
            if next.level != r.level {
                self.events.push(RunEvent::Relay {
                    time_s,
                    bus: r.bus,
                    old_level: r.level,
                    new_level: next.level,
                });
            }
            *r = next;
        }
    }

    /// Centre-of-inertia frequency of online machines, Hz.
    pub fn coi_hz(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for (s, m) in self.slots.iter().zip(&self.state.machines) {
            if m.online {
                let w = s.swing.h * s.spec.rating_mva;
                num += w * m.dw;
                den += w;
            }
        }
        self.model.f0 * (1.0 + if den > 0.0 { num / den } else { 0.0 })
    }

    fn sample(&self) -> Sample {
        let k = self.second_index(self.state.step);
        let base = self.model.base_mva;
        let expected: Vec<f64> = self.profiles.load.iter().map(|s| s.at(k as f64)).collect();
        let served = expected
            .iter()
            .zip(&self.state.relays)
            .map(|(e, r)| e * (1.0 - r.level))
            .collect();
        Sample {
            time_s: self.time_s(),
            coi_hz: self.coi_hz(),
            bus_hz: self
                .state
                .estimators
                .iter()
                .map(|e| e.frequency())
                .collect(),
            gen_delta: self.state.machines.iter().map(|m| m.delta).collect(),
            gen_dw: self.state.machines.iter().map(|m| m.dw).collect(),
            gen_pm_mw: self
                .state
                .machines
                .iter()
                .zip(&self.slots)
                .map(|(m, s)| {
                    if m.online {
                        m.pm * s.spec.rating_mva
                    } else {
                        0.0
                    }
                })
                .collect(),
            gen_pe_mw: self.state.pe.iter().map(|p| p * base).collect(),
            expected_mw: expected,
            served_mw: served,
            shed_level: self.state.relays.iter().map(|r| r.level).collect(),
            wind_mw: self.profiles.wind.iter().map(|s| s.at(k as f64)).collect(),
            battery_mw: self
                .profiles
                .battery
                .iter()
                .map(|(_, b)| b.realized_mw[k.min(b.realized_mw.len() - 1)])
                .collect(),
        }
    }

    fn empty_trajectory(&self) -> Trajectory {
        Trajectory {
            interval_s: self.scenario.record_every() as f64 * self.scenario.dt_s,
            bus_ids: self.model.buses.iter().map(|b| b.id).collect(),
            gen_names: self.slots.iter().map(|s| s.spec.name.clone()).collect(),
            load_buses: self.profiles.load.iter().map(|s| s.bus).collect(),
            wind_buses: self.profiles.wind.iter().map(|s| s.bus).collect(),
            battery_buses: self.profiles.battery.iter().map(|(b, _)| *b).collect(),
            samples: Vec::new(),
        }
    }

    /// Run to the end of the scenario, applying its events.
    pub fn run(mut self) -> Result<ScenarioResult, SimError> {
        let dt = self.scenario.dt_s;
        let steps = self.scenario.steps();
        let every = self.scenario.record_every();
        let mut schedule: Vec<(usize, String)> = self
            .scenario
            .events
            .iter()
            .map(|e| ((e.time_s / dt).round() as usize, e.generator.clone()))
            .collect();
        schedule.sort();
        let mut next_event = 0;
        let mut traj = self.empty_trajectory();
        traj.samples.reserve(steps / every + 1);
        traj.samples.push(self.sample());
        while self.state.step < steps {
            while next_event < schedule.len() && schedule[next_event].0 <= self.state.step {
                let name = schedule[next_event].1.clone();
                self.apply_contingency(&name)?;
                next_event += 1;
            }
            self.step()?;
            if self.state.step.is_multiple_of(every) {
                traj.samples.push(self.sample());
            }
        }
        Ok(ScenarioResult {
            scenario: self.scenario.name.clone(),
            trajectory: traj,
            events: self.events,
            stats: self.stats,
        })
    }
}

/// Build and run a scenario.
pub fn run_scenario(model: &GridModel, scenario: &Scenario) -> Result<ScenarioResult, SimError> {
    Simulation::new(model, scenario)?.run()
}
