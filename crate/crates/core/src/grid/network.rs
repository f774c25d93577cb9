use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GridError;

/// Complex impedance in per-unit, serialized as `{ "r": .., "x": .. }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Impedance {
    pub r: f64,
    pub x: f64,
}

impl Impedance {
    pub fn new(r: f64, x: f64) -> Self {
        Self { r, x }
    }

    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.r, self.x)
    }
}

/// Complex admittance in per-unit, serialized as `{ "g": .., "b": .. }`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Admittance {
    pub g: f64,
    pub b: f64,
}

impl Admittance {
    pub fn to_complex(self) -> Complex64 {
        Complex64::new(self.g, self.b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_setpoint: Option<f64>,
    #[serde(default)]
    pub shunt_admittance: Admittance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub z1: Impedance,
    /// Zero-sequence impedance; three times `z1` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<Impedance>,
    #[serde(default = "default_true")]
    pub in_service: bool,
}

fn default_true() -> bool {
    true
}

impl Branch {
    pub fn z1(&self) -> Complex64 {
        self.z1.to_complex()
    }

    pub fn z0(&self) -> Complex64 {
        self.z0.map(Impedance::to_complex).unwrap_or(self.z1() * 3.0)
    }
}

/// Classical machine data, all reactances per-unit on the system base.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: usize,
    pub p_set: f64,
    pub xd_prime: f64,
    pub inertia_h: f64,
    pub damping_d: f64,
    /// Negative-sequence reactance; `xd_prime` when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x2: Option<f64>,
    /// Zero-sequence reactance. A machine without one has no zero-sequence
    /// path to ground.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
}

impl Generator {
    pub fn x2(&self) -> f64 {
        self.x2.unwrap_or(self.xd_prime)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Load {
    pub bus: usize,
    pub p: f64,
    pub q: f64,
}

/// A per-unit network model. Immutable once validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkModel {
    pub base_mva: f64,
    #[serde(rename = "base_freq_hz")]
    pub base_freq: f64,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub generators: Vec<Generator>,
    #[serde(default)]
    pub loads: Vec<Load>,
}

/// The reference 23-bus network shipped with the crate.
pub const REF23_JSON: &str = include_str!("../../data/ref23.json");

impl NetworkModel {
    pub fn from_json(text: &str) -> Result<Self, GridError> {
        let net: NetworkModel =
            serde_json::from_str(text).map_err(|e| GridError::Parse(e.to_string()))?;
        net.validate()?;
        Ok(net)
    }

    pub fn load(path: &Path) -> Result<Self, GridError> {
        let text = std::fs::read_to_string(path).map_err(|e| GridError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn ref23() -> Self {
        Self::from_json(REF23_JSON).expect("shipped ref23 network is valid")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("network serializes");
        hex::encode(Sha256::digest(canonical))
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    /// Zero-based matrix index of a bus id.
    pub fn index_of(&self, bus: usize) -> usize {
        bus - 1
    }

    pub fn slack_index(&self) -> usize {
        self.buses
            .iter()
            .position(|b| b.kind == BusKind::Slack)
            .expect("validated network has a slack bus")
    }

    pub fn generator_at(&self, bus: usize) -> Option<&Generator> {
        self.generators.iter().find(|g| g.bus == bus)
    }

    /// Per-bus load (P, Q), summed over all loads at the bus.
    pub fn bus_loads(&self) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(0.0, 0.0); self.n_buses()];
        for l in &self.loads {
            out[self.index_of(l.bus)] += Complex64::new(l.p, l.q);
        }
        out
    }

    /// Scheduled complex injection per bus: generation `p_set` minus load.
    /// The slack entry is carried but ignored by the solver.
    pub fn scheduled_injections(&self) -> Vec<Complex64> {
        let mut s: Vec<Complex64> = self.bus_loads().into_iter().map(|l| -l).collect();
        for g in &self.generators {
            s[self.index_of(g.bus)] += Complex64::new(g.p_set, 0.0);
        }
        s
    }

    /// Ids of branches incident to `bus`, in file order.
    pub fn incident_branches(&self, bus: usize) -> Vec<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.from_bus == bus || b.to_bus == bus)
            .map(|(k, _)| k)
            .collect()
    }

    /// Connectivity of in-service branches, optionally ignoring one branch.
    pub fn is_connected_without(&self, skip: Option<usize>) -> bool {
        let n = self.n_buses();
        if n == 0 {
            return false;
        }
        let mut adj = vec![Vec::new(); n];
        for (k, b) in self.branches.iter().enumerate() {
            if !b.in_service || Some(k) == skip {
                continue;
            }
            let (i, j) = (self.index_of(b.from_bus), self.index_of(b.to_bus));
            adj[i].push(j);
            adj[j].push(i);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(i) = queue.pop_front() {
            for &j in &adj[i] {
                if !seen[j] {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        let bad = |msg: String| Err(GridError::Invalid(msg));
        if !(self.base_mva > 0.0) {
            return bad(format!("base_mva must be positive, got {}", self.base_mva));
        }
        if !(self.base_freq > 0.0) {
            return bad(format!("base_freq_hz must be positive, got {}", self.base_freq));
        }
        if self.buses.is_empty() {
            return bad("network has no buses".into());
        }
        for (k, b) in self.buses.iter().enumerate() {
            if b.id != k + 1 {
                return bad(format!(
                    "bus ids must be unique and contiguous from 1; position {} holds id {}",
                    k + 1,
                    b.id
                ));
            }
            match (b.kind, b.v_setpoint) {
                (BusKind::Pq, _) => {}
                (_, None) => return bad(format!("bus {} needs a v_setpoint", b.id)),
                (_, Some(v)) if !(0.9..=1.1).contains(&v) => {
                    return bad(format!("bus {} v_setpoint {} outside [0.9, 1.1]", b.id, v))
                }
                _ => {}
            }
        }
        let slack = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slack != 1 {
            return bad(format!("expected exactly one slack bus, found {slack}"));
        }
        let n = self.n_buses();
        let exists = |id: usize| id >= 1 && id <= n;
        for (k, br) in self.branches.iter().enumerate() {
            if !exists(br.from_bus) || !exists(br.to_bus) {
                return bad(format!("branch {k} references a missing bus"));
            }
            if br.from_bus == br.to_bus {
                return bad(format!("branch {k} is a self-loop on bus {}", br.from_bus));
            }
            if br.z1().norm() == 0.0 || br.z0().norm() == 0.0 {
                return Err(GridError::SingularNetwork(format!(
                    "branch {k} has zero impedance"
                )));
            }
        }
        let mut gen_buses = BTreeSet::new();
        for g in &self.generators {
            if !exists(g.bus) {
                return bad(format!("generator references missing bus {}", g.bus));
            }
            if !gen_buses.insert(g.bus) {
                return bad(format!("more than one generator at bus {}", g.bus));
            }
            if !(g.inertia_h > 0.0) || !(g.xd_prime > 0.0) || !(g.damping_d >= 0.0) {
                return bad(format!("generator at bus {} has invalid machine data", g.bus));
            }
            if g.x2.is_some_and(|x| !(x > 0.0)) || g.x0.is_some_and(|x| !(x > 0.0)) {
                return bad(format!("generator at bus {} has a non-positive sequence reactance", g.bus));
            }
        }
        for b in &self.buses {
            if b.kind != BusKind::Pq && !gen_buses.contains(&b.id) {
                return bad(format!("{:?} bus {} has no generator", b.kind, b.id));
            }
        }
        for l in &self.loads {
            if !exists(l.bus) {
                return bad(format!("load references missing bus {}", l.bus));
            }
            if !(l.p >= 0.0) {
                return bad(format!("load at bus {} has negative p", l.bus));
            }
        }
        if !self.is_connected_without(None) {
            return bad("branch graph is not connected".into());
        }
        Ok(())
    }
}
