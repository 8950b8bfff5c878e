//! Road-network mobility: graph loading, shortest-path routing and a
//! bounded-acceleration vehicle model.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::Point;

/// Maximum acceleration of the vehicle model, m/s^2.
pub const A_MAX: f64 = 2.5;
/// Comfortable deceleration used to brake into the route end, m/s^2.
pub const DECEL: f64 = 4.0;
/// Default mobility clock step, seconds.
pub const DEFAULT_DT: f64 = 0.1;
/// Distance below which the route end counts as reached, meters.
const ARRIVAL_SNAP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub length: f64,
    pub speed_limit: f64,
    pub bidir: bool,
}

#[derive(Debug, Error)]
pub enum MobilityError {
    #[error("cannot read network file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse network file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid road network: {0}")]
    InvalidNetwork(String),
    #[error("unknown node {0}")]
    UnknownNode(u32),
    #[error("no route from node {from} to node {to}")]
    NoRoute { from: u32, to: u32 },
    #[error("invalid route: {0}")]
    InvalidRoute(String),
    #[error("time step must be > 0, got {0}")]
    InvalidTimeStep(f64),
}

/// Directed-capable road graph. Edges are one-way unless flagged
/// bidirectional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "NetworkJson", into = "NetworkJson")]
pub struct RoadNetwork {
    nodes: BTreeMap<u32, Point>,
    edges: BTreeMap<u32, Edge>,
}

impl RoadNetwork {
    pub fn new(
        nodes: impl IntoIterator<Item = (u32, Point)>,
        edges: impl IntoIterator<Item = Edge>,
    ) -> Result<RoadNetwork, MobilityError> {
        let mut node_map = BTreeMap::new();
        for (id, p) in nodes {
            if !p.is_finite() {
                return Err(MobilityError::InvalidNetwork(format!(
                    "node {id} has a non-finite position"
                )));
            }
            if node_map.insert(id, p).is_some() {
                return Err(MobilityError::InvalidNetwork(format!("duplicate node id {id}")));
            }
        }
        let mut edge_map = BTreeMap::new();
        for e in edges {
            for endpoint in [e.from, e.to] {
                if !node_map.contains_key(&endpoint) {
                    return Err(MobilityError::InvalidNetwork(format!(
                        "edge {} references missing node {endpoint}",
                        e.id
                    )));
                }
            }
            let euclid = node_map[&e.from].distance(&node_map[&e.to]);
            if !e.length.is_finite() || e.length <= 0.0 || e.length < euclid - 1e-6 {
                return Err(MobilityError::InvalidNetwork(format!(
                    "edge {} length {} shorter than node distance {euclid}",
                    e.id, e.length
                )));
            }
            if !e.speed_limit.is_finite() || e.speed_limit <= 0.0 {
                return Err(MobilityError::InvalidNetwork(format!(
                    "edge {} speed limit {} must be > 0",
                    e.id, e.speed_limit
                )));
            }
            if edge_map.insert(e.id, e).is_some() {
                return Err(MobilityError::InvalidNetwork(format!("duplicate edge id {}", e.id)));
            }
        }
        Ok(RoadNetwork { nodes: node_map, edges: edge_map })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RoadNetwork, MobilityError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn node(&self, id: u32) -> Option<Point> {
        self.nodes.get(&id).copied()
    }

    pub fn edge(&self, id: u32) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = (u32, Point)> + '_ {
        self.nodes.iter().map(|(id, p)| (*id, *p))
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.values()
    }

    pub fn max_speed_limit(&self) -> f64 {
        self.edges.values().map(|e| e.speed_limit).fold(0.0, f64::max)
    }

    pub fn route_length(&self, route: &[u32]) -> Result<f64, MobilityError> {
        route
            .iter()
            .map(|id| {
                self.edge(*id)
                    .map(|e| e.length)
                    .ok_or_else(|| MobilityError::InvalidRoute(format!("unknown edge {id}")))
            })
            .sum()
    }

    /// Minimum-length route between two nodes as a sequence of edge ids.
    /// Among equally short routes the one choosing the smallest edge id at
    /// every junction wins, which makes the result deterministic.
    pub fn shortest_path(&self, from: u32, to: u32) -> Result<Vec<u32>, MobilityError> {
        for id in [from, to] {
            if !self.nodes.contains_key(&id) {
                return Err(MobilityError::UnknownNode(id));
            }
        }
        if from == to {
            return Ok(Vec::new());
        }

        let forward = self.distances(from, false);
        let total = *forward.get(&to).ok_or(MobilityError::NoRoute { from, to })?;
        let backward = self.distances(to, true);

        // Walk from the start, always taking the smallest edge id that still
        // lies on some minimum-length route (its endpoints' distance sums
        // match the optimum).
        let mut route = Vec::new();
        let mut at = from;
        while at != to {
            let next = self
                .outgoing(at, false)
                .filter(|(_, v, len)| {
                    let (Some(df), Some(db)) = (forward.get(&at), backward.get(v)) else {
                        return false;
                    };
                    (df + len + db - total).abs() <= 1e-6
                })
                .min_by_key(|(id, _, _)| *id)
                .expect("an on-route edge exists while the target is unreached");
            route.push(next.0);
            at = next.1;
        }
        Ok(route)
    }

    fn outgoing(&self, node: u32, reversed: bool) -> impl Iterator<Item = (u32, u32, f64)> + '_ {
        self.edges.values().filter_map(move |e| {
            let (tail, head) = if reversed { (e.to, e.from) } else { (e.from, e.to) };
            if tail == node {
                Some((e.id, head, e.length))
            } else if e.bidir && head == node {
                Some((e.id, tail, e.length))
            } else {
                None
            }
        })
    }

    fn distances(&self, source: u32, reversed: bool) -> HashMap<u32, f64> {
        #[derive(PartialEq)]
        struct Entry {
            dist: f64,
            node: u32,
        }
        impl Eq for Entry {}
        impl Ord for Entry {
            fn cmp(&self, other: &Self) -> std::cmp::Ordering {
                self.dist.total_cmp(&other.dist).then(self.node.cmp(&other.node))
            }
        }
        impl PartialOrd for Entry {
            fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
                Some(self.cmp(other))
            }
        }

        let mut dist: HashMap<u32, f64> = HashMap::new();
        let mut heap = BinaryHeap::new();
        dist.insert(source, 0.0);
        heap.push(Reverse(Entry { dist: 0.0, node: source }));
        while let Some(Reverse(Entry { dist: d, node })) = heap.pop() {
            if d > dist[&node] {
                continue;
            }
            for (_, next, len) in self.outgoing(node, reversed) {
                let candidate = d + len;
                if dist.get(&next).map_or(true, |known| candidate < *known) {
                    dist.insert(next, candidate);
                    heap.push(Reverse(Entry { dist: candidate, node: next }));
                }
            }
        }
        dist
    }
}

#[derive(Serialize, Deserialize)]
struct NodeJson {
    id: u32,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct NetworkJson {
    nodes: Vec<NodeJson>,
    edges: Vec<Edge>,
}

impl From<RoadNetwork> for NetworkJson {
    fn from(n: RoadNetwork) -> Self {
        NetworkJson {
            nodes: n.nodes.iter().map(|(id, p)| NodeJson { id: *id, x: p.x, y: p.y }).collect(),
            edges: n.edges.values().copied().collect(),
        }
    }
}

impl TryFrom<NetworkJson> for RoadNetwork {
    type Error = MobilityError;

    fn try_from(json: NetworkJson) -> Result<Self, Self::Error> {
        RoadNetwork::new(
            json.nodes.into_iter().map(|n| (n.id, Point::new(n.x, n.y))),
            json.edges,
        )
    }
}

/// Kinematic state of the single simulated vehicle.
///
/// `route` holds the edge ids still ahead of the current one. A vehicle with
/// no current edge is stationary and stepping it is a no-op.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleState {
    pub position: Point,
    pub velocity: f64,
    pub current_edge: Option<u32>,
    pub edge_offset: f64,
    pub route: VecDeque<u32>,
    entry_node: u32,
}

impl VehicleState {
    pub fn stationary(position: Point) -> VehicleState {
        VehicleState {
            position,
            velocity: 0.0,
            current_edge: None,
            edge_offset: 0.0,
            route: VecDeque::new(),
            entry_node: 0,
        }
    }

    /// Places a vehicle at rest on the first edge of `route`, entering from
    /// `start_node`. An empty route yields a stationary vehicle at the node.
    pub fn start_of_route(
        network: &RoadNetwork,
        start_node: u32,
        route: &[u32],
    ) -> Result<VehicleState, MobilityError> {
        let start = network.node(start_node).ok_or(MobilityError::UnknownNode(start_node))?;
        // Check the whole chain connects before committing to it.
        let mut at = start_node;
        for id in route {
            let edge = network
                .edge(*id)
                .ok_or_else(|| MobilityError::InvalidRoute(format!("unknown edge {id}")))?;
            at = exit_node(edge, at).ok_or_else(|| {
                MobilityError::InvalidRoute(format!("edge {id} does not continue from node {at}"))
            })?;
        }
        let mut route: VecDeque<u32> = route.iter().copied().collect();
        let current_edge = route.pop_front();
        Ok(VehicleState {
            position: start,
            velocity: 0.0,
            current_edge,
            edge_offset: 0.0,
            route,
            entry_node: start_node,
        })
    }

    /// Routes from `from` to `to` and places the vehicle at the start.
    pub fn on_trip(
        network: &RoadNetwork,
        from: u32,
        to: u32,
    ) -> Result<VehicleState, MobilityError> {
        let route = network.shortest_path(from, to)?;
        VehicleState::start_of_route(network, from, &route)
    }

    pub fn arrived(&self) -> bool {
        self.current_edge.is_none() || (self.route.is_empty() && self.velocity == 0.0)
    }
}

fn exit_node(edge: &Edge, entry: u32) -> Option<u32> {
    if edge.from == entry {
        Some(edge.to)
    } else if edge.bidir && edge.to == entry {
        Some(edge.from)
    } else {
        None
    }
}

/// Advances the vehicle by `dt` seconds.
///
/// The velocity relaxes toward the lesser of the edge speed limit and the
/// braking envelope for the route end, with acceleration bounded by
/// [`A_MAX`] and deceleration by [`DECEL`]. The position then advances by
/// the new velocity times `dt`, rolling over edge boundaries; reaching the
/// final edge end stops the vehicle for good.
pub fn step(
    mut state: VehicleState,
    network: &RoadNetwork,
    dt: f64,
) -> Result<VehicleState, MobilityError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(MobilityError::InvalidTimeStep(dt));
    }
    let Some(edge_id) = state.current_edge else {
        return Ok(state);
    };
    let edge = *network
        .edge(edge_id)
        .ok_or_else(|| MobilityError::InvalidRoute(format!("unknown edge {edge_id}")))?;

    if state.route.is_empty() && state.edge_offset >= edge.length {
        state.velocity = 0.0;
        return Ok(state);
    }

    let remaining = (edge.length - state.edge_offset)
        + network.route_length(state.route.make_contiguous())?;
    // Safe speed for this step: the v solving v^2 = 2*DECEL*(remaining -
    // v*dt), so that after advancing v*dt the vehicle can still stop at the
    // route end with bounded deceleration.
    let safe = -DECEL * dt + (DECEL * DECEL * dt * dt + 2.0 * DECEL * remaining).sqrt();
    let target = edge.speed_limit.min(safe);
    state.velocity = if state.velocity < target {
        (state.velocity + A_MAX * dt).min(target)
    } else {
        (state.velocity - DECEL * dt).max(target)
    };

    let mut advance = state.velocity * dt;
    let mut edge = edge;
    loop {
        let to_edge_end = edge.length - state.edge_offset;
        if advance < to_edge_end - ARRIVAL_SNAP {
            state.edge_offset += advance;
            break;
        }
        advance = (advance - to_edge_end).max(0.0);
        let exit = exit_node(&edge, state.entry_node)
            .ok_or_else(|| MobilityError::InvalidRoute(format!("broken chain at edge {}", edge.id)))?;
        match state.route.pop_front() {
            Some(next_id) => {
                edge = *network
                    .edge(next_id)
                    .ok_or_else(|| MobilityError::InvalidRoute(format!("unknown edge {next_id}")))?;
                state.current_edge = Some(next_id);
                state.entry_node = exit;
                state.edge_offset = 0.0;
                state.velocity = state.velocity.min(edge.speed_limit);
            }
            None => {
                state.edge_offset = edge.length;
                state.velocity = 0.0;
                break;
            }
        }
    }

    let entry = network.node(state.entry_node).ok_or(MobilityError::UnknownNode(state.entry_node))?;
    let exit_id = exit_node(&edge, state.entry_node)
        .ok_or_else(|| MobilityError::InvalidRoute(format!("broken chain at edge {}", edge.id)))?;
    let exit = network.node(exit_id).ok_or(MobilityError::UnknownNode(exit_id))?;
    state.position = entry.lerp(&exit, state.edge_offset / edge.length);
    Ok(state)
}

/// One sampled instant of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub position: Point,
    pub velocity: f64,
}

/// Samples positions on the fixed grid t = 0, dt, 2 dt, ... up to
/// `duration`, stepping the vehicle in between. Yields floor(duration/dt)+1
/// entries.
pub fn sample_trajectory(
    state0: VehicleState,
    network: &RoadNetwork,
    dt: f64,
    duration: f64,
) -> Result<Vec<TrajectoryPoint>, MobilityError> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(MobilityError::InvalidTimeStep(dt));
    }
    let ticks = (duration / dt).floor() as usize;
    let mut samples = Vec::with_capacity(ticks + 1);
    let mut state = state0;
    samples.push(TrajectoryPoint { t: 0.0, position: state.position, velocity: state.velocity });
    for k in 1..=ticks {
        state = step(state, network, dt)?;
        samples.push(TrajectoryPoint {
            t: k as f64 * dt,
            position: state.position,
            velocity: state.velocity,
        });
    }
    Ok(samples)
}
