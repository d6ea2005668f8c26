//! Static network description and quasi-static DC power flow.
//!
//! A [`GridModel`] is loaded from a TOML document, validated once and then
//! treated as immutable. Two network solves are built on top of it:
//!
//! * [`build_susceptance_matrix`] / [`solve_dc_flow`]: the classic DC flow
//!   with the slack row and column removed, used to initialize operating
//!   points.
//! * [`CoupledNetwork`]: the structure-preserving network used while
//!   stepping, where every online machine is tied to its terminal bus through
//!   a coupling reactance and no slack is needed.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::machine::{HydroParams, SteamParams};
use crate::sparse::{EnvelopeCholesky, SparseSym};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Thermal,
    Hydro,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub name: String,
    pub kind: GeneratorKind,
    pub rating_mva: f64,
    /// Inertia constant on machine base, s.
    pub inertia_h: f64,
    /// Damping on machine base, p.u. power per p.u. speed.
    pub damping: f64,
    /// Coupling reactance to the terminal bus, p.u. on machine base.
    pub coupling_x: f64,
    pub steam: SteamParams,
    pub hydro: HydroParams,
}

impl GeneratorSpec {
    /// Coupling susceptance on the system base.
    pub fn coupling_susceptance(&self, base_mva: f64) -> f64 {
        self.rating_mva / (self.coupling_x * base_mva)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusSpec {
    pub id: BusId,
    pub generator: Option<GeneratorSpec>,
    /// Wind farm rating, MW. Also the forecast used by the dispatch plan.
    pub wind_mw: Option<f64>,
    /// Load forecast, MW.
    pub load_mw: Option<f64>,
    pub dispatched: bool,
}

impl BusSpec {
    pub fn is_stochastic(&self) -> bool {
        self.wind_mw.is_some() || self.load_mw.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSpec {
    pub from: BusId,
    pub to: BusId,
    /// Series susceptance, p.u. on the system base.
    pub susceptance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    pub buses: Vec<BusSpec>,
    pub lines: Vec<LineSpec>,
    pub base_mva: f64,
    pub f0: f64,
    pub slack_bus: BusId,
    index: HashMap<BusId, usize>,
}

#[derive(Debug, thiserror::Error)]
pub enum GridError {
    #[error("failed to read grid config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse grid config: {0}")]
    Parse(String),
    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),
    #[error("line {line} has dangling endpoint: bus {bus} does not exist")]
    DanglingEndpoint { line: usize, bus: BusId },
    #[error("line {line} ({from}-{to}) must set exactly one of `x` or `b`")]
    LineImpedance { line: usize, from: BusId, to: BusId },
    #[error("line {line} ({from}-{to}) has non-positive susceptance {value}")]
    NonPositiveSusceptance {
        line: usize,
        from: BusId,
        to: BusId,
        value: f64,
    },
    #[error("bus {bus}: {field} must be strictly positive, got {value}")]
    NonPositive {
        bus: BusId,
        field: &'static str,
        value: f64,
    },
    #[error("network is disconnected: buses {unreachable:?} are not reachable from bus {root}")]
    Disconnected {
        root: BusId,
        unreachable: Vec<BusId>,
    },
    #[error("bus {0} is flagged dispatched but has no load or wind")]
    DispatchedWithoutStochastic(BusId),
    #[error("wind ratings sum to {actual} MW, config declares {expected} MW")]
    WindTotalMismatch { expected: f64, actual: f64 },
    #[error("slack bus {0} does not exist")]
    UnknownSlack(BusId),
    #[error("duplicate generator name {0}")]
    DuplicateGenerator(String),
    #[error("{0}")]
    Invalid(String),
    #[error("network is islanded: reduced susceptance matrix is singular at {0}")]
    Islanded(BusId),
}

// ---------------------------------------------------------------------------
// Config document

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    #[serde(default = "default_base_mva")]
    base_mva: f64,
    #[serde(default = "default_f0")]
    f0: f64,
    slack_bus: u32,
    wind_total_mw: Option<f64>,
    #[serde(default)]
    machine_defaults: RawMachineDefaults,
    #[serde(rename = "bus", default)]
    buses: Vec<RawBus>,
    #[serde(rename = "line", default)]
    lines: Vec<RawLine>,
}

fn default_base_mva() -> f64 {
    100.0
}

fn default_f0() -> f64 {
    60.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMachineDefaults {
    #[serde(default = "default_h_thermal")]
    inertia_h_thermal: f64,
    #[serde(default = "default_h_hydro")]
    inertia_h_hydro: f64,
    #[serde(default = "default_damping")]
    damping: f64,
    #[serde(default = "default_coupling_x")]
    coupling_x: f64,
    #[serde(default)]
    steam: SteamParams,
    #[serde(default)]
    hydro: HydroParams,
}

impl Default for RawMachineDefaults {
    fn default() -> Self {
        Self {
            inertia_h_thermal: default_h_thermal(),
            inertia_h_hydro: default_h_hydro(),
            damping: default_damping(),
            coupling_x: default_coupling_x(),
            steam: SteamParams::default(),
            hydro: HydroParams::default(),
        }
    }
}

fn default_h_thermal() -> f64 {
    5.0
}
fn default_h_hydro() -> f64 {
    3.5
}
fn default_damping() -> f64 {
    1.0
}
fn default_coupling_x() -> f64 {
    0.3
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBus {
    id: u32,
    wind_mw: Option<f64>,
    load_mw: Option<f64>,
    #[serde(default)]
    dispatched: bool,
    generator: Option<RawGenerator>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGenerator {
    name: String,
    kind: GeneratorKind,
    rating_mva: f64,
    inertia_h: Option<f64>,
    damping: Option<f64>,
    coupling_x: Option<f64>,
    steam: Option<SteamParams>,
    hydro: Option<HydroParams>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    from: u32,
    to: u32,
    x: Option<f64>,
    b: Option<f64>,
}

/// Parse and validate a grid config document.
pub fn load_grid_config(document: &str) -> Result<GridModel, GridError> {
    let raw: RawGrid = toml::from_str(document).map_err(|e| GridError::Parse(e.to_string()))?;
    let defaults = &raw.machine_defaults;

    let mut buses = Vec::with_capacity(raw.buses.len());
    for b in raw.buses {
        let generator = b.generator.map(|g| {
            let inertia_h = g.inertia_h.unwrap_or(match g.kind {
                GeneratorKind::Thermal => defaults.inertia_h_thermal,
                GeneratorKind::Hydro => defaults.inertia_h_hydro,
            });
            GeneratorSpec {
                name: g.name,
                kind: g.kind,
                rating_mva: g.rating_mva,
                inertia_h,
                damping: g.damping.unwrap_or(defaults.damping),
                coupling_x: g.coupling_x.unwrap_or(defaults.coupling_x),
                steam: g.steam.unwrap_or_else(|| defaults.steam.clone()),
                hydro: g.hydro.unwrap_or_else(|| defaults.hydro.clone()),
            }
        });
        buses.push(BusSpec {
            id: BusId(b.id),
            generator,
            wind_mw: b.wind_mw,
            load_mw: b.load_mw,
            dispatched: b.dispatched,
        });
    }

    let mut lines = Vec::with_capacity(raw.lines.len());
    for (k, l) in raw.lines.into_iter().enumerate() {
        let (from, to) = (BusId(l.from), BusId(l.to));
        let susceptance = match (l.x, l.b) {
            (Some(x), None) => 1.0 / x,
            (None, Some(b)) => b,
            _ => return Err(GridError::LineImpedance { line: k, from, to }),
        };
        lines.push(LineSpec {
            from,
            to,
            susceptance,
        });
    }

    let model = GridModel::new(buses, lines, raw.base_mva, raw.f0, BusId(raw.slack_bus))?;
    if let Some(expected) = raw.wind_total_mw {
        let actual = model.wind_total_mw();
        if (actual - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(GridError::WindTotalMismatch { expected, actual });
        }
    }
    Ok(model)
}

pub fn load_grid_file(path: impl AsRef<Path>) -> Result<GridModel, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io {
        path: path.display().to_string(),
        source,
    })?;
    load_grid_config(&text)
}

/// Default dataset: the 39-bus New England system with the generation mix and
/// wind farms of the dispatched-bus study.
pub const IEEE39_CONFIG: &str = include_str!("../../../configs/ieee39.toml");

impl GridModel {
    pub fn new(
        buses: Vec<BusSpec>,
        lines: Vec<LineSpec>,
        base_mva: f64,
        f0: f64,
        slack_bus: BusId,
    ) -> Result<Self, GridError> {
        if !(base_mva > 0.0) || !(f0 > 0.0) {
            return Err(GridError::Invalid(format!(
                "base_mva and f0 must be positive (got {base_mva}, {f0})"
            )));
        }
        let mut index = HashMap::with_capacity(buses.len());
        for (k, b) in buses.iter().enumerate() {
            if index.insert(b.id, k).is_some() {
                return Err(GridError::DuplicateBus(b.id));
            }
        }
        let model = Self {
            buses,
            lines,
            base_mva,
            f0,
            slack_bus,
            index,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn ieee39() -> Self {
        load_grid_config(IEEE39_CONFIG).expect("bundled 39-bus config is valid")
    }

    fn validate(&self) -> Result<(), GridError> {
        if !self.index.contains_key(&self.slack_bus) {
            return Err(GridError::UnknownSlack(self.slack_bus));
        }
        let mut names = std::collections::HashSet::new();
        for b in &self.buses {
            let positive = |field: &'static str, v: Option<f64>| match v {
                Some(value) if !(value > 0.0) => Err(GridError::NonPositive {
                    bus: b.id,
                    field,
                    value,
                }),
                _ => Ok(()),
            };
            positive("wind_mw", b.wind_mw)?;
            positive("load_mw", b.load_mw)?;
            if let Some(g) = &b.generator {
                positive("rating_mva", Some(g.rating_mva))?;
                positive("inertia_h", Some(g.inertia_h))?;
                positive("coupling_x", Some(g.coupling_x))?;
                if g.damping < 0.0 {
                    return Err(GridError::NonPositive {
                        bus: b.id,
                        field: "damping",
                        value: g.damping,
                    });
                }
                g.steam.validate().map_err(GridError::Invalid)?;
                g.hydro.validate().map_err(GridError::Invalid)?;
                if !names.insert(g.name.clone()) {
                    return Err(GridError::DuplicateGenerator(g.name.clone()));
                }
            }
            if b.dispatched && !b.is_stochastic() {
                return Err(GridError::DispatchedWithoutStochastic(b.id));
            }
        }
        for (k, l) in self.lines.iter().enumerate() {
            for bus in [l.from, l.to] {
                if !self.index.contains_key(&bus) {
                    return Err(GridError::DanglingEndpoint { line: k, bus });
                }
            }
            if !(l.susceptance > 0.0) {
                return Err(GridError::NonPositiveSusceptance {
                    line: k,
                    from: l.from,
                    to: l.to,
                    value: l.susceptance,
                });
            }
        }
        let unreachable = self.unreachable_from(self.slack_bus, &[]);
        if !unreachable.is_empty() {
            return Err(GridError::Disconnected {
                root: self.slack_bus,
                unreachable,
            });
        }
        Ok(())
    }

    /// Buses not reachable from `root` when `removed_lines` are out of service.
    pub fn unreachable_from(&self, root: BusId, removed_lines: &[usize]) -> Vec<BusId> {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for (k, l) in self.lines.iter().enumerate() {
            if removed_lines.contains(&k) {
                continue;
            }
            let (i, j) = (self.index[&l.from], self.index[&l.to]);
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; n];
        let start = self.index[&root];
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        let mut out: Vec<BusId> = (0..n)
            .filter(|&i| !seen[i])
            .map(|i| self.buses[i].id)
            .collect();
        out.sort();
        out
    }

    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn bus(&self, id: BusId) -> Option<&BusSpec> {
        self.bus_index(id).map(|i| &self.buses[i])
    }

    pub fn generators(&self) -> impl Iterator<Item = (usize, &GeneratorSpec)> {
        self.buses
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.generator.as_ref().map(|g| (i, g)))
    }

    pub fn generator_by_name(&self, name: &str) -> Option<(usize, &GeneratorSpec)> {
        self.generators().find(|(_, g)| g.name == name)
    }

    pub fn wind_total_mw(&self) -> f64 {
        self.buses.iter().filter_map(|b| b.wind_mw).sum()
    }

    pub fn load_total_mw(&self) -> f64 {
        self.buses.iter().filter_map(|b| b.load_mw).sum()
    }

    pub fn bus_labels(&self) -> Vec<String> {
        self.buses.iter().map(|b| b.id.to_string()).collect()
    }
}

// ---------------------------------------------------------------------------
// DC power flow

/// Full nodal susceptance (Laplacian) matrix and its slack-reduced factor.
#[derive(Debug, Clone)]
pub struct SusceptanceMatrix {
    pub full: SparseSym,
    pub reduced: SparseSym,
    slack_index: usize,
    factor: EnvelopeCholesky,
}

impl SusceptanceMatrix {
    pub fn slack_index(&self) -> usize {
        self.slack_index
    }
}

fn laplacian_triplets(model: &GridModel) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(3 * model.lines.len());
    for l in &model.lines {
        let i = model.index[&l.from];
        let j = model.index[&l.to];
        t.push((i, i, l.susceptance));
        t.push((j, j, l.susceptance));
        if i != j {
            t.push((i.max(j), i.min(j), -l.susceptance));
        } else {
            // A self-loop carries no flow.
            t.push((i, i, -2.0 * l.susceptance));
        }
    }
    t
}

pub fn build_susceptance_matrix(model: &GridModel) -> Result<SusceptanceMatrix, GridError> {
    let n = model.buses.len();
    let full = SparseSym::from_triplets(n, &laplacian_triplets(model));
    let slack_index = model.index[&model.slack_bus];
    let reduced = full.without_index(slack_index);
    let factor = EnvelopeCholesky::factor(&reduced).map_err(|e| {
        let bus = if e.index >= slack_index {
            e.index + 1
        } else {
            e.index
        };
        GridError::Islanded(model.buses[bus].id)
    })?;
    Ok(SusceptanceMatrix {
        full,
        reduced,
        slack_index,
        factor,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DcFlow {
    /// Bus angles in model bus order, radians; slack angle is zero.
    pub angles: Vec<f64>,
    /// Injection absorbed at the slack bus, p.u.
    pub slack_absorption: f64,
}

/// Solve `B θ = P` for per-bus net injections given in MW.
///
/// The slack bus injection is whatever balances the rest; it is returned as
/// `slack_absorption`.
pub fn solve_dc_flow(
    b: &SusceptanceMatrix,
    base_mva: f64,
    injections_mw: &[f64],
) -> Result<DcFlow, GridError> {
    let n = b.full.dim();
    if injections_mw.len() != n {
        return Err(GridError::Invalid(format!(
            "expected {n} injections, got {}",
            injections_mw.len()
        )));
    }
    let s = b.slack_index;
    let rhs: Vec<f64> = injections_mw
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != s)
        .map(|(_, p)| p / base_mva)
        .collect();
    let reduced_angles = b.factor.solve(&rhs);
    let mut angles = Vec::with_capacity(n);
    angles.extend_from_slice(&reduced_angles[..s]);
    angles.push(0.0);
    angles.extend_from_slice(&reduced_angles[s..]);
    let slack_absorption = b.full.row(s).map(|(j, v)| v * angles[j]).sum();
    Ok(DcFlow {
        angles,
        slack_absorption,
    })
}

/// Flow on a line from `from` to `to`, p.u.
pub fn line_flow(model: &GridModel, line: &LineSpec, angles: &[f64]) -> f64 {
    let i = model.index[&line.from];
    let j = model.index[&line.to];
    line.susceptance * (angles[i] - angles[j])
}

// ---------------------------------------------------------------------------
// Structure-preserving network

/// Network with machines attached through coupling reactances.
///
/// Given machine internal angles `δ` and bus net injections `P`, bus angles
/// solve `(B_lines + diag(b_c)) θ = P + b_c ∘ δ` and each machine delivers
/// `P_e = b_c (δ − θ_bus)`. Every island needs at least one online machine.
#[derive(Debug, Clone)]
pub struct CoupledNetwork {
    matrix: SparseSym,
    factor: EnvelopeCholesky,
    /// (bus index, coupling susceptance on system base) per machine slot;
    /// `None` when the machine is offline.
    couplings: Vec<Option<(usize, f64)>>,
}

impl CoupledNetwork {
    /// `machines` lists `(bus index, coupling susceptance, online)`.
    pub fn new(model: &GridModel, machines: &[(usize, f64, bool)]) -> Result<Self, GridError> {
        let n = model.buses.len();
        let mut t = laplacian_triplets(model);
        let mut couplings = Vec::with_capacity(machines.len());
        for &(bus, bc, online) in machines {
            if online {
                t.push((bus, bus, bc));
                couplings.push(Some((bus, bc)));
            } else {
                couplings.push(None);
            }
        }
        let matrix = SparseSym::from_triplets(n, &t);
        let factor = EnvelopeCholesky::factor(&matrix)
            .map_err(|e| GridError::Islanded(model.buses[e.index].id))?;
        Ok(Self {
            matrix,
            factor,
            couplings,
        })
    }

    pub fn matrix(&self) -> &SparseSym {
        &self.matrix
    }

    /// Bus angles for machine angles `delta` and bus injections (p.u.).
    pub fn solve_angles(&self, delta: &[f64], injections_pu: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(injections_pu);
        for (slot, c) in self.couplings.iter().enumerate() {
            if let Some((bus, bc)) = *c {
                out[bus] += bc * delta[slot];
            }
        }
        self.factor.solve_in_place(out);
    }

    /// Electrical power per machine slot, p.u. on system base.
    pub fn machine_power(&self, delta: &[f64], angles: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(self.couplings.iter().enumerate().map(|(slot, c)| match *c {
            Some((bus, bc)) => bc * (delta[slot] - angles[bus]),
            None => 0.0,
        }));
    }

    /// Max-norm residual of the nodal balance `B_lines θ − P − P_e`.
    pub fn balance_residual(&self, delta: &[f64], injections_pu: &[f64], angles: &[f64]) -> f64 {
        let mut r = self.matrix.mul_vec(angles);
        for (i, p) in injections_pu.iter().enumerate() {
            r[i] -= p;
        }
        for (slot, c) in self.couplings.iter().enumerate() {
            if let Some((bus, bc)) = *c {
                r[bus] -= bc * delta[slot];
            }
        }
        r.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Split a total among generators proportionally to their ratings.
pub fn proportional_dispatch(ratings: &BTreeMap<usize, f64>, total: f64) -> BTreeMap<usize, f64> {
    let sum: f64 = ratings.values().sum();
    ratings
        .iter()
        .map(|(&k, &r)| (k, total * r / sum))
        .collect()
}
