//! Road network model for a two-level terminal loop: nodes, directed links,
//! zones attached to links, flow sensors, and the cost machinery (general
//! link cost and the BPR volume-delay function) used by routing and
//! assignment.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct LinkId(pub u32);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct ZoneId(pub u32);

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SensorId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "link {}", self.0)
    }
}

impl fmt::Display for ZoneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "zone {}", self.0)
    }
}

impl fmt::Display for SensorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sensor {}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Junction,
    ZoneConnector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
}

/// Directed road segment. `travel_time` and `flow` are the current loaded
/// state; a freshly built or reset link sits at free flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub from: NodeId,
    pub to: NodeId,
    /// Meters, > 0.
    pub length: f64,
    /// Vehicles per hour, > 0.
    pub capacity: f64,
    /// Seconds at zero flow, > 0.
    pub free_flow_time: f64,
    /// Tolls, parking fees and similar, ≥ 0.
    pub financial_cost: f64,
    #[serde(default = "default_nan")]
    pub travel_time: f64,
    #[serde(default)]
    pub flow: f64,
}

fn default_nan() -> f64 {
    f64::NAN
}

impl Link {
    /// Recomputes `travel_time` from the current flow via the volume-delay
    /// function and returns it.
    pub fn update_travel_time(&mut self, vdf: &VdfParams) -> Result<f64, NetworkError> {
        let t = bpr_travel_time(self, vdf, self.flow)?;
        self.travel_time = t;
        Ok(t)
    }
}

/// The seven zone classes of the terminal area: entrances and exits on each
/// level, a curbside per level, and parking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneClass {
    UpperEntrance,
    UpperExit,
    LowerEntrance,
    LowerExit,
    UpperCurbside,
    LowerCurbside,
    Parking,
}

impl ZoneClass {
    pub const ALL: [ZoneClass; 7] = [
        ZoneClass::UpperEntrance,
        ZoneClass::UpperExit,
        ZoneClass::LowerEntrance,
        ZoneClass::LowerExit,
        ZoneClass::UpperCurbside,
        ZoneClass::LowerCurbside,
        ZoneClass::Parking,
    ];

    pub fn is_entrance(self) -> bool {
        matches!(self, ZoneClass::UpperEntrance | ZoneClass::LowerEntrance)
    }

    pub fn is_exit(self) -> bool {
        matches!(self, ZoneClass::UpperExit | ZoneClass::LowerExit)
    }

    pub fn is_curbside(self) -> bool {
        matches!(self, ZoneClass::UpperCurbside | ZoneClass::LowerCurbside)
    }

    pub fn is_interior(self) -> bool {
        self.is_curbside() || self == ZoneClass::Parking
    }

    /// Whether demand from a zone of class `origin` to a distinct zone of
    /// class `dest` is structurally possible.
    ///
    /// Rules, in terms of vehicle movements through the terminal:
    /// - nothing departs from an exit, and nothing arrives at an entrance;
    /// - entrances never feed exits directly (every trip serves the curb or
    ///   parking first);
    /// - curbside and parking zones do not exchange demand with each other;
    /// - each curbside is reached from its own level's entrances and leaves
    ///   through its own level's exits;
    /// - parking is reachable from both levels and exits to both.
    pub fn demand_allowed(origin: ZoneClass, dest: ZoneClass) -> bool {
        use ZoneClass::*;
        matches!(
            (origin, dest),
            (UpperEntrance, UpperCurbside)
                | (UpperEntrance, Parking)
                | (LowerEntrance, LowerCurbside)
                | (LowerEntrance, Parking)
                | (UpperCurbside, UpperExit)
                | (LowerCurbside, LowerExit)
                | (Parking, UpperExit)
                | (Parking, LowerExit)
        )
    }
}

impl fmt::Display for ZoneClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ZoneClass::UpperEntrance => "upper_entrance",
            ZoneClass::UpperExit => "upper_exit",
            ZoneClass::LowerEntrance => "lower_entrance",
            ZoneClass::LowerExit => "lower_exit",
            ZoneClass::UpperCurbside => "upper_curbside",
            ZoneClass::LowerCurbside => "lower_curbside",
            ZoneClass::Parking => "parking",
        };
        f.write_str(s)
    }
}

/// Demand zone. Vehicles enter and leave the zone only via `attach_links`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: ZoneId,
    pub class: ZoneClass,
    pub attach_links: Vec<LinkId>,
}

/// Flow measurement point bound to one link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub id: SensorId,
    pub link: LinkId,
}

/// Weights of the general link cost: travel time, length, financial cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub travel_time: f64,
    pub length: f64,
    pub financial: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            travel_time: 1.0,
            length: 0.0,
            financial: 0.0,
        }
    }
}

/// BPR volume-delay parameters: t = t0 · (1 + coefficient · (v/c)^exponent).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VdfParams {
    pub coefficient: f64,
    pub exponent: f64,
}

impl Default for VdfParams {
    fn default() -> Self {
        VdfParams {
            coefficient: 0.15,
            exponent: 4.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("duplicate {0}")]
    DuplicateNode(NodeId),
    #[error("duplicate {0}")]
    DuplicateLink(LinkId),
    #[error("duplicate {0}")]
    DuplicateZone(ZoneId),
    #[error("duplicate {0}")]
    DuplicateSensor(SensorId),
    #[error("{what} of {link} must be {bound}, got {value}")]
    InvalidLinkAttribute {
        link: LinkId,
        what: &'static str,
        bound: &'static str,
        value: f64,
    },
    #[error("{link} references missing {node}")]
    DanglingLinkEndpoint { link: LinkId, node: NodeId },
    #[error("{zone} references missing {link}")]
    DanglingAttachLink { zone: ZoneId, link: LinkId },
    #[error("{zone} has no attach links")]
    ZoneWithoutAttachLinks { zone: ZoneId },
    #[error("zone ids must be dense 0..{expected}, found {found}")]
    ZoneIdsNotDense { expected: usize, found: ZoneId },
    #[error("{sensor} references missing {link}")]
    DanglingSensorLink { sensor: SensorId, link: LinkId },
    #[error("sensor ids must be dense 0..{expected}, found {found}")]
    SensorIdsNotDense { expected: usize, found: SensorId },
    #[error("network is not weakly connected: {0} is unreachable")]
    Disconnected(NodeId),
    #[error("no route from {origin} to {dest}, demand between them is possible")]
    MissingRoute { origin: ZoneId, dest: ZoneId },
    #[error("non-finite cost on {link}")]
    NonFiniteCost { link: LinkId },
    #[error("negative cost weight {what}: {value}")]
    NegativeCostWeight { what: &'static str, value: f64 },
    #[error("volume-delay {what} must be positive, got {value}")]
    InvalidVdf { what: &'static str, value: f64 },
    #[error("unknown {0}")]
    UnknownLink(LinkId),
    #[error("unknown {0}")]
    UnknownZone(ZoneId),
    #[error("cannot read network file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse network file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// The full network: topology, zones, sensors, and cost configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NetworkFile", into = "NetworkFile")]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    links: Vec<Link>,
    zones: Vec<Zone>,
    sensors: Vec<Sensor>,
    pub cost_weights: CostWeights,
    pub vdf: VdfParams,
    node_index: HashMap<NodeId, usize>,
    link_index: HashMap<LinkId, usize>,
}

/// On-disk shape of a network document.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct NetworkFile {
    cost_weights: CostWeights,
    vdf: VdfParams,
    nodes: Vec<Node>,
    links: Vec<Link>,
    zones: Vec<Zone>,
    sensors: Vec<Sensor>,
}

impl TryFrom<NetworkFile> for RoadNetwork {
    type Error = NetworkError;

    fn try_from(f: NetworkFile) -> Result<Self, NetworkError> {
        RoadNetwork::new(f.nodes, f.links, f.zones, f.sensors, f.cost_weights, f.vdf)
    }
}

impl From<RoadNetwork> for NetworkFile {
    fn from(n: RoadNetwork) -> NetworkFile {
        NetworkFile {
            cost_weights: n.cost_weights,
            vdf: n.vdf,
            nodes: n.nodes,
            links: n.links,
            zones: n.zones,
            sensors: n.sensors,
        }
    }
}

impl RoadNetwork {
    /// Builds and validates a network. Links with NaN `travel_time` (absent
    /// in the file) start at free flow.
    pub fn new(
        nodes: Vec<Node>,
        mut links: Vec<Link>,
        mut zones: Vec<Zone>,
        mut sensors: Vec<Sensor>,
        cost_weights: CostWeights,
        vdf: VdfParams,
    ) -> Result<Self, NetworkError> {
        for link in &mut links {
            if link.travel_time.is_nan() {
                link.travel_time = link.free_flow_time;
            }
        }
        zones.sort_by_key(|z| z.id);
        sensors.sort_by_key(|s| s.id);
        let mut net = RoadNetwork {
            nodes,
            links,
            zones,
            sensors,
            cost_weights,
            vdf,
            node_index: HashMap::new(),
            link_index: HashMap::new(),
        };
        net.nodes.sort_by_key(|n| n.id);
        net.links.sort_by_key(|l| l.id);
        net.node_index = net.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        net.link_index = net.links.iter().enumerate().map(|(i, l)| (l.id, i)).collect();
        net.validate()?;
        Ok(net)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn zones(&self) -> &[Zone] {
        &self.zones
    }

    pub fn sensors(&self) -> &[Sensor] {
        &self.sensors
    }

    pub fn link(&self, id: LinkId) -> Option<&Link> {
        self.link_index.get(&id).map(|&i| &self.links[i])
    }

    pub fn link_mut(&mut self, id: LinkId) -> Option<&mut Link> {
        match self.link_index.get(&id) {
            Some(&i) => Some(&mut self.links[i]),
            None => None,
        }
    }

    /// Mutable access to the link slice in id order. In-crate only: callers
    /// must not touch ids or endpoints, which the indices depend on.
    pub(crate) fn links_mut(&mut self) -> &mut [Link] {
        &mut self.links
    }

    /// Position of `id` in `links()`.
    pub fn link_pos(&self, id: LinkId) -> Option<usize> {
        self.link_index.get(&id).copied()
    }

    pub fn zone(&self, id: ZoneId) -> Option<&Zone> {
        self.zones.get(id.0 as usize)
    }

    pub fn zone_count(&self) -> usize {
        self.zones.len()
    }

    /// Resets every link to free flow with zero load.
    pub fn reset_flows(&mut self) {
        for link in &mut self.links {
            link.flow = 0.0;
            link.travel_time = link.free_flow_time;
        }
    }

    /// General cost of one link under this network's weights.
    pub fn general_cost(&self, link: &Link) -> Result<f64, NetworkError> {
        general_cost(link, &self.cost_weights)
    }

    /// Checks every structural invariant. `new` and the file loader call
    /// this; it is public so mutated networks can be re-checked.
    pub fn validate(&self) -> Result<(), NetworkError> {
        let mut seen_nodes = BTreeSet::new();
        for n in &self.nodes {
            if !seen_nodes.insert(n.id) {
                return Err(NetworkError::DuplicateNode(n.id));
            }
        }
        let mut seen_links = BTreeSet::new();
        for l in &self.links {
            if !seen_links.insert(l.id) {
                return Err(NetworkError::DuplicateLink(l.id));
            }
            for (what, value, strict) in [
                ("length", l.length, true),
                ("capacity", l.capacity, true),
                ("free_flow_time", l.free_flow_time, true),
                ("financial_cost", l.financial_cost, false),
                ("travel_time", l.travel_time, true),
            ] {
                let ok = value.is_finite() && if strict { value > 0.0 } else { value >= 0.0 };
                if !ok {
                    return Err(NetworkError::InvalidLinkAttribute {
                        link: l.id,
                        what,
                        bound: if strict { "finite and > 0" } else { "finite and >= 0" },
                        value,
                    });
                }
            }
            if !(l.flow.is_finite() && l.flow >= 0.0) {
                return Err(NetworkError::InvalidLinkAttribute {
                    link: l.id,
                    what: "flow",
                    bound: "finite and >= 0",
                    value: l.flow,
                });
            }
            for node in [l.from, l.to] {
                if !self.node_index.contains_key(&node) {
                    return Err(NetworkError::DanglingLinkEndpoint { link: l.id, node });
                }
            }
        }
        for (what, value) in [
            ("travel_time", self.cost_weights.travel_time),
            ("length", self.cost_weights.length),
            ("financial", self.cost_weights.financial),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(NetworkError::NegativeCostWeight { what, value });
            }
        }
        for (what, value) in [
            ("coefficient", self.vdf.coefficient),
            ("exponent", self.vdf.exponent),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(NetworkError::InvalidVdf { what, value });
            }
        }
        let mut seen_zones = BTreeSet::new();
        for (pos, z) in self.zones.iter().enumerate() {
            if !seen_zones.insert(z.id) {
                return Err(NetworkError::DuplicateZone(z.id));
            }
            if z.id.0 as usize != pos {
                return Err(NetworkError::ZoneIdsNotDense {
                    expected: self.zones.len(),
                    found: z.id,
                });
            }
            if z.attach_links.is_empty() {
                return Err(NetworkError::ZoneWithoutAttachLinks { zone: z.id });
            }
            for &l in &z.attach_links {
                if !self.link_index.contains_key(&l) {
                    return Err(NetworkError::DanglingAttachLink { zone: z.id, link: l });
                }
            }
        }
        let mut seen_sensors = BTreeSet::new();
        for (pos, s) in self.sensors.iter().enumerate() {
            if !seen_sensors.insert(s.id) {
                return Err(NetworkError::DuplicateSensor(s.id));
            }
            if s.id.0 as usize != pos {
                return Err(NetworkError::SensorIdsNotDense {
                    expected: self.sensors.len(),
                    found: s.id,
                });
            }
            if !self.link_index.contains_key(&s.link) {
                return Err(NetworkError::DanglingSensorLink {
                    sensor: s.id,
                    link: s.link,
                });
            }
        }
        self.check_weak_connectivity()?;
        self.check_zone_reachability()?;
        Ok(())
    }

    fn check_weak_connectivity(&self) -> Result<(), NetworkError> {
        if self.nodes.is_empty() {
            return Ok(());
        }
        let mut adj: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        for l in &self.links {
            adj.entry(l.from).or_default().push(l.to);
            adj.entry(l.to).or_default().push(l.from);
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![self.nodes[0].id];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            if let Some(next) = adj.get(&n) {
                stack.extend(next.iter().copied());
            }
        }
        for n in &self.nodes {
            if !seen.contains(&n.id) {
                return Err(NetworkError::Disconnected(n.id));
            }
        }
        Ok(())
    }

    /// Every zone pair that can carry demand must have at least one route.
    fn check_zone_reachability(&self) -> Result<(), NetworkError> {
        for origin in &self.zones {
            for dest in &self.zones {
                if origin.id == dest.id
                    || !ZoneClass::demand_allowed(origin.class, dest.class)
                {
                    continue;
                }
                if self.shortest_path(origin.id, dest.id)?.is_none() {
                    return Err(NetworkError::MissingRoute {
                        origin: origin.id,
                        dest: dest.id,
                    });
                }
            }
        }
        Ok(())
    }

    /// Minimum-general-cost route from `origin` to `dest`, as the sequence
    /// of traversed links. The route starts on one of the origin's attach
    /// links and ends on one of the destination's. Among equal-cost optima
    /// the lexicographically smallest link-id sequence wins, so the result
    /// is a pure function of the network state.
    pub fn shortest_path(
        &self,
        origin: ZoneId,
        dest: ZoneId,
    ) -> Result<Option<Vec<LinkId>>, NetworkError> {
        let origin = self.zone(origin).ok_or(NetworkError::UnknownZone(origin))?;
        let dest = self.zone(dest).ok_or(NetworkError::UnknownZone(dest))?;
        self.shortest_path_zones(origin, dest)
    }

    fn shortest_path_zones(
        &self,
        origin: &Zone,
        dest: &Zone,
    ) -> Result<Option<Vec<LinkId>>, NetworkError> {
        use std::cmp::Reverse;
        use std::collections::BinaryHeap;

        // Dijkstra over links: a state is "just traversed this link".
        let cost_of = |idx: usize| self.general_cost(&self.links[idx]);
        let mut out_links: HashMap<NodeId, Vec<usize>> = HashMap::new();
        for (i, l) in self.links.iter().enumerate() {
            out_links.entry(l.from).or_default().push(i);
        }

        let mut best: HashMap<usize, (f64, Vec<LinkId>)> = HashMap::new();
        let mut heap: BinaryHeap<Reverse<PathState>> = BinaryHeap::new();
        let mut starts: Vec<LinkId> = origin.attach_links.clone();
        starts.sort_unstable();
        for id in starts {
            let idx = self.link_pos(id).expect("attach links validated");
            let c = cost_of(idx)?;
            heap.push(Reverse(PathState {
                cost: c,
                path: vec![id],
                link: idx,
            }));
        }

        while let Some(Reverse(state)) = heap.pop() {
            if best.contains_key(&state.link) {
                continue;
            }
            let to = self.links[state.link].to;
            best.insert(state.link, (state.cost, state.path.clone()));
            if let Some(next) = out_links.get(&to) {
                for &n in next {
                    if best.contains_key(&n) || state.path.contains(&self.links[n].id) {
                        continue;
                    }
                    let c = state.cost + cost_of(n)?;
                    let mut path = state.path.clone();
                    path.push(self.links[n].id);
                    heap.push(Reverse(PathState {
                        cost: c,
                        path,
                        link: n,
                    }));
                }
            }
        }

        let mut winner: Option<(f64, Vec<LinkId>)> = None;
        let mut ends: Vec<LinkId> = dest.attach_links.clone();
        ends.sort_unstable();
        for id in ends {
            let idx = self.link_pos(id).expect("attach links validated");
            if let Some((cost, path)) = best.get(&idx) {
                let better = match &winner {
                    None => true,
                    Some((wc, wp)) => cost < wc || (cost == wc && path < wp),
                };
                if better {
                    winner = Some((*cost, path.clone()));
                }
            }
        }
        Ok(winner.map(|(_, p)| p))
    }
}

/// Heap ordering: cost ascending, then link-id sequence ascending.
#[derive(Debug, PartialEq)]
struct PathState {
    cost: f64,
    path: Vec<LinkId>,
    link: usize,
}

impl Eq for PathState {}

impl PartialOrd for PathState {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for PathState {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.cost
            .partial_cmp(&other.cost)
            .expect("path costs are finite")
            .then_with(|| self.path.cmp(&other.path))
    }
}

/// General cost of a link: weighted sum of travel time, length, and
/// financial cost.
pub fn general_cost(link: &Link, weights: &CostWeights) -> Result<f64, NetworkError> {
    let c = weights.travel_time * link.travel_time
        + weights.length * link.length
        + weights.financial * link.financial_cost;
    if !c.is_finite() {
        return Err(NetworkError::NonFiniteCost { link: link.id });
    }
    Ok(c)
}

/// BPR volume-delay: congested travel time of `link` at volume `flow`.
pub fn bpr_travel_time(link: &Link, vdf: &VdfParams, flow: f64) -> Result<f64, NetworkError> {
    if !(link.capacity.is_finite() && link.capacity > 0.0) {
        return Err(NetworkError::InvalidLinkAttribute {
            link: link.id,
            what: "capacity",
            bound: "finite and > 0",
            value: link.capacity,
        });
    }
    if !(flow.is_finite() && flow >= 0.0) {
        return Err(NetworkError::InvalidLinkAttribute {
            link: link.id,
            what: "flow",
            bound: "finite and >= 0",
            value: flow,
        });
    }
    let ratio = flow / link.capacity;
    Ok(link.free_flow_time * (1.0 + vdf.coefficient * ratio.powf(vdf.exponent)))
}

/// Reads a network document, validating every invariant.
pub fn load_network(path: &Path) -> Result<RoadNetwork, NetworkError> {
    let text = std::fs::read_to_string(path)?;
    let net: RoadNetwork = serde_json::from_str(&text)?;
    Ok(net)
}

/// Writes a network document; `load_network` reproduces it field for field.
pub fn save_network(net: &RoadNetwork, path: &Path) -> Result<(), NetworkError> {
    let text = serde_json::to_string_pretty(net).map_err(NetworkError::Parse)?;
    std::fs::write(path, text)?;
    Ok(())
}
