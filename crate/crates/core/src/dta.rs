//! Iterative traffic assignment: route discovery by repeated shortest-path
//! search, cost-power logit route choice, incremental route sets, and
//! volume-delay feedback smoothed by the method of successive averages.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::network::{bpr_travel_time, general_cost, LinkId, RoadNetwork, ZoneId};
use crate::odgen::ODMatrix;

/// Route costs are clamped to this floor before the logit transform, which
/// is undefined at zero cost (all-zero cost weights are a legal, if
/// degenerate, configuration).
pub const MIN_ROUTE_COST: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DtaError {
    #[error("route choice needs at least one route")]
    EmptyRouteSet,
    #[error("route cost must be positive and finite, got {0}")]
    NonPositiveCost(f64),
    #[error("logit sensitivity must be finite and >= 0, got {0}")]
    InvalidSensitivity(f64),
    #[error("demand matrix covers {od} zones, network has {net}")]
    ZoneCountMismatch { od: usize, net: usize },
    #[error("no route from {origin} to {dest} but demand is {demand}")]
    NoRoute {
        origin: ZoneId,
        dest: ZoneId,
        demand: f64,
    },
    #[error("route set for {origin}->{dest}: {msg}")]
    InvalidRouteSet {
        origin: ZoneId,
        dest: ZoneId,
        msg: String,
    },
    #[error("dta parameter {what} must be {bound}, got {value}")]
    InvalidParam {
        what: &'static str,
        bound: &'static str,
        value: f64,
    },
    #[error("sensor-flows file: {0}")]
    FlowFile(String),
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Assignment loop parameters. Cost weights live on the network itself.
#[derive(Debug, Clone, Copy)]
pub struct DtaParams {
    /// Logit cost sensitivity η ≥ 0; higher concentrates flow on cheap routes.
    pub sensitivity: f64,
    /// Iteration cap N.
    pub max_iterations: u32,
    /// Convergence threshold on the max relative change of link travel
    /// time and financial cost between consecutive iterations.
    pub convergence_epsilon: f64,
}

impl Default for DtaParams {
    fn default() -> Self {
        DtaParams {
            sensitivity: 1.0,
            max_iterations: 20,
            convergence_epsilon: 0.01,
        }
    }
}

impl DtaParams {
    fn validate(&self) -> Result<(), DtaError> {
        if !(self.sensitivity.is_finite() && self.sensitivity >= 0.0) {
            return Err(DtaError::InvalidSensitivity(self.sensitivity));
        }
        if self.max_iterations == 0 {
            return Err(DtaError::InvalidParam {
                what: "max_iterations",
                bound: ">= 1",
                value: 0.0,
            });
        }
        if !(self.convergence_epsilon.is_finite() && self.convergence_epsilon > 0.0) {
            return Err(DtaError::InvalidParam {
                what: "convergence_epsilon",
                bound: "> 0",
                value: self.convergence_epsilon,
            });
        }
        Ok(())
    }
}

/// Routes known for one OD pair, with their current costs and choice
/// probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct RouteSet {
    pub origin: ZoneId,
    pub dest: ZoneId,
    pub routes: Vec<Vec<LinkId>>,
    pub costs: Vec<f64>,
    pub probabilities: Vec<f64>,
}

/// Final state of one assignment run. `link_flows` and `link_travel_times`
/// are aligned with `RoadNetwork::links()`; `sensor_flows` with
/// `RoadNetwork::sensors()`.
#[derive(Debug, Clone)]
pub struct AssignmentResult {
    pub sensor_flows: Vec<f64>,
    pub link_flows: Vec<f64>,
    pub link_travel_times: Vec<f64>,
    pub route_sets: Vec<RouteSet>,
    pub iterations_run: u32,
    pub converged: bool,
}

/// Per-iteration record: route counts per OD pair and the convergence
/// measure (max relative change of link travel time; defined from the
/// second iteration on).
#[derive(Debug, Clone, Default)]
pub struct DtaTrace {
    pub route_counts: Vec<Vec<usize>>,
    pub max_rel_change: Vec<f64>,
}

/// Probability of each route under the cost-power logit model:
/// p_j = C_j^(−η) / Σ_i C_i^(−η), computed in log space for stability.
pub fn logit_split(costs: &[f64], sensitivity: f64) -> Result<Vec<f64>, DtaError> {
    if costs.is_empty() {
        return Err(DtaError::EmptyRouteSet);
    }
    if !(sensitivity.is_finite() && sensitivity >= 0.0) {
        return Err(DtaError::InvalidSensitivity(sensitivity));
    }
    let mut logw = Vec::with_capacity(costs.len());
    for &c in costs {
        if !(c.is_finite() && c > 0.0) {
            return Err(DtaError::NonPositiveCost(c));
        }
        logw.push(-sensitivity * c.ln());
    }
    let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logw.iter().map(|&w| (w - m).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Assigns every OD pair's demand over its routes by the stored
/// probabilities and accumulates per-link flow (aligned with
/// `net.links()`).
pub fn load_demand(
    net: &RoadNetwork,
    od: &ODMatrix,
    route_sets: &[RouteSet],
) -> Result<Vec<f64>, DtaError> {
    if od.zone_count() != net.zone_count() {
        return Err(DtaError::ZoneCountMismatch {
            od: od.zone_count(),
            net: net.zone_count(),
        });
    }
    let by_pair: BTreeMap<(ZoneId, ZoneId), &RouteSet> = route_sets
        .iter()
        .map(|rs| ((rs.origin, rs.dest), rs))
        .collect();
    let mut flows = vec![0.0; net.links().len()];
    for (origin, dest, demand) in od.positive_entries() {
        let rs = by_pair.get(&(origin, dest)).copied().ok_or(DtaError::NoRoute {
            origin,
            dest,
            demand,
        })?;
        if rs.routes.is_empty() {
            return Err(DtaError::NoRoute {
                origin,
                dest,
                demand,
            });
        }
        if rs.probabilities.len() != rs.routes.len() {
            return Err(DtaError::InvalidRouteSet {
                origin,
                dest,
                msg: format!(
                    "{} probabilities for {} routes",
                    rs.probabilities.len(),
                    rs.routes.len()
                ),
            });
        }
        for (route, &p) in rs.routes.iter().zip(&rs.probabilities) {
            let assigned = demand * p;
            for &link in route {
                let idx = net
                    .link_pos(link)
                    .ok_or_else(|| DtaError::InvalidRouteSet {
                        origin,
                        dest,
                        msg: format!("route references unknown {link}"),
                    })?;
                flows[idx] += assigned;
            }
        }
    }
    Ok(flows)
}

/// Flow at each sensor, by dense sensor id.
pub fn extract_sensor_flows(net: &RoadNetwork, link_flows: &[f64]) -> Vec<f64> {
    assert_eq!(link_flows.len(), net.links().len(), "flows align with links");
    net.sensors()
        .iter()
        .map(|s| link_flows[net.link_pos(s.link).expect("sensor links validated")])
        .collect()
}

/// Runs the assignment loop on one hourly demand matrix. Deterministic:
/// pairs are processed in zone order and the shortest-path tie-break is
/// lexicographic.
pub fn run_dta(
    net: &RoadNetwork,
    od: &ODMatrix,
    params: &DtaParams,
) -> Result<AssignmentResult, DtaError> {
    run_dta_with_initial_routes(net, od, params, &[])
}

pub fn run_dta_traced(
    net: &RoadNetwork,
    od: &ODMatrix,
    params: &DtaParams,
) -> Result<(AssignmentResult, DtaTrace), DtaError> {
    run_inner(net, od, params, &[], true)
}

/// Same loop, but route sets start from the given routes instead of empty.
/// Useful for equilibrium studies where the route universe is known up
/// front; each seeded route must run attach-to-attach for its pair.
pub fn run_dta_with_initial_routes(
    net: &RoadNetwork,
    od: &ODMatrix,
    params: &DtaParams,
    initial_routes: &[(ZoneId, ZoneId, Vec<Vec<LinkId>>)],
) -> Result<AssignmentResult, DtaError> {
    run_inner(net, od, params, initial_routes, false).map(|(r, _)| r)
}

fn run_inner(
    net: &RoadNetwork,
    od: &ODMatrix,
    params: &DtaParams,
    initial_routes: &[(ZoneId, ZoneId, Vec<Vec<LinkId>>)],
    traced: bool,
) -> Result<(AssignmentResult, DtaTrace), DtaError> {
    params.validate()?;
    if od.zone_count() != net.zone_count() {
        return Err(DtaError::ZoneCountMismatch {
            od: od.zone_count(),
            net: net.zone_count(),
        });
    }

    let pairs = od.positive_entries();
    let mut route_sets: Vec<RouteSet> = pairs
        .iter()
        .map(|&(origin, dest, _)| RouteSet {
            origin,
            dest,
            routes: Vec::new(),
            costs: Vec::new(),
            probabilities: Vec::new(),
        })
        .collect();
    for (origin, dest, routes) in initial_routes {
        let rs = route_sets
            .iter_mut()
            .find(|rs| rs.origin == *origin && rs.dest == *dest)
            .ok_or_else(|| DtaError::InvalidRouteSet {
                origin: *origin,
                dest: *dest,
                msg: "seeded pair carries no demand".into(),
            })?;
        for route in routes {
            validate_route(net, *origin, *dest, route)?;
            if !rs.routes.contains(route) {
                rs.routes.push(route.clone());
            }
        }
    }

    // Working copy carries the evolving travel times so path search sees
    // current congestion.
    let mut work = net.clone();
    work.reset_flows();

    let mut link_flows = vec![0.0; net.links().len()];
    let mut prev_times: Vec<f64> = work.links().iter().map(|l| l.travel_time).collect();
    let mut trace = DtaTrace::default();
    let mut converged = false;
    let mut iterations_run = 0;

    for k in 1..=params.max_iterations {
        // Route discovery: current least-cost path per pair, skipped when
        // already known.
        for rs in route_sets.iter_mut() {
            let found = work
                .shortest_path(rs.origin, rs.dest)?
                .ok_or(DtaError::NoRoute {
                    origin: rs.origin,
                    dest: rs.dest,
                    demand: od.demand(rs.origin, rs.dest),
                })?;
            if !rs.routes.contains(&found) {
                rs.routes.push(found);
            }
        }

        // Route costs under current link state, then choice probabilities.
        for rs in route_sets.iter_mut() {
            rs.costs.clear();
            for route in &rs.routes {
                let mut cost = 0.0;
                for &link in route {
                    let l = work.link(link).expect("routes validated");
                    cost += general_cost(l, &work.cost_weights)?;
                }
                rs.costs.push(cost.max(MIN_ROUTE_COST));
            }
            rs.probabilities = logit_split(&rs.costs, params.sensitivity)?;
        }

        link_flows = load_demand(&work, od, &route_sets)?;

        // Volume-delay response, averaged into the running travel times
        // with weight 1/k.
        let w = 1.0 / k as f64;
        let mut max_rel = 0.0f64;
        for (idx, link) in work.links_mut().iter_mut().enumerate() {
            let inst = bpr_travel_time(link, &net.vdf, link_flows[idx])?;
            let blended = (1.0 - w) * prev_times[idx] + w * inst;
            link.travel_time = blended;
            link.flow = link_flows[idx];
            let rel = (blended - prev_times[idx]).abs() / prev_times[idx];
            max_rel = max_rel.max(rel);
            // Financial cost is static during assignment, so its relative
            // change never moves the measure.
        }

        iterations_run = k;
        if traced {
            trace
                .route_counts
                .push(route_sets.iter().map(|rs| rs.routes.len()).collect());
            if k >= 2 {
                trace.max_rel_change.push(max_rel);
            }
        }
        for (prev, link) in prev_times.iter_mut().zip(work.links()) {
            *prev = link.travel_time;
        }
        if k >= 2 && max_rel < params.convergence_epsilon {
            converged = true;
            break;
        }
    }

    let sensor_flows = extract_sensor_flows(&work, &link_flows);
    let link_travel_times = work.links().iter().map(|l| l.travel_time).collect();
    Ok((
        AssignmentResult {
            sensor_flows,
            link_flows,
            link_travel_times,
            route_sets,
            iterations_run,
            converged,
        },
        trace,
    ))
}

/// One assigned hour as stored in a sensor-flows file.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyFlows {
    pub hour: u32,
    /// Flow per sensor, by dense sensor id.
    pub flows: Vec<f64>,
    pub iterations_run: u32,
    pub converged: bool,
}

/// Writes per-hour sensor flows with the assignment settings recorded in
/// the header. One block per hour: a tagged line with the hour's
/// convergence state, then one `sensor flow` row per sensor.
pub fn save_sensor_flows(
    records: &[HourlyFlows],
    params: &DtaParams,
    sensor_count: usize,
    path: &std::path::Path,
) -> Result<(), DtaError> {
    use std::io::Write;
    let mut out = Vec::new();
    let pairs = [
        ("sensors", sensor_count.to_string()),
        ("eta", params.sensitivity.to_string()),
        ("max_iterations", params.max_iterations.to_string()),
        ("convergence_epsilon", params.convergence_epsilon.to_string()),
    ];
    writeln!(out, "{}", crate::textio::format_kv_header("sensor-flows", &pairs))
        ?;
    for rec in records {
        if rec.flows.len() != sensor_count {
            return Err(DtaError::FlowFile(format!(
                "hour {} has {} flows, header says {sensor_count}",
                rec.hour,
                rec.flows.len()
            )));
        }
        let pairs = [
            ("index", rec.hour.to_string()),
            ("iterations", rec.iterations_run.to_string()),
            ("converged", rec.converged.to_string()),
        ];
        writeln!(out, "{}", crate::textio::format_kv_header("hour", &pairs))
            ?;
        for (sensor, flow) in rec.flows.iter().enumerate() {
            writeln!(out, "{sensor} {flow}")?;
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_sensor_flows(path: &std::path::Path) -> Result<Vec<HourlyFlows>, DtaError> {
    use std::io::BufRead;
    let fail = |line: usize, msg: String| DtaError::FlowFile(format!("{path:?}, line {line}: {msg}"));
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines().enumerate();
    let header = match lines.next() {
        Some((_, Ok(l))) => l,
        Some((_, Err(e))) => return Err(DtaError::Io(e)),
        None => return Err(fail(1, "empty file".into())),
    };
    let fields = crate::textio::kv_header(&header, "sensor-flows")
        .ok_or_else(|| fail(1, "expected a sensor-flows header".into()))?;
    let sensor_count: usize = fields
        .get("sensors")
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| fail(1, "header needs a numeric `sensors`".into()))?;

    let mut records: Vec<HourlyFlows> = Vec::new();
    let mut current: Option<HourlyFlows> = None;
    let mut finish = |cur: Option<HourlyFlows>, line: usize| -> Result<(), DtaError> {
        if let Some(rec) = cur {
            if rec.flows.len() != sensor_count {
                return Err(fail(
                    line,
                    format!(
                        "hour {} has {} flows, header says {sensor_count}",
                        rec.hour,
                        rec.flows.len()
                    ),
                ));
            }
            if records.iter().any(|r| r.hour == rec.hour) {
                return Err(fail(line, format!("duplicate hour {}", rec.hour)));
            }
            records.push(rec);
        }
        Ok(())
    };
    let mut last_line = 1;
    for (idx, line) in lines {
        let lineno = idx + 1;
        last_line = lineno;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(block) = crate::textio::kv_header(trimmed, "hour") {
            finish(current.take(), lineno)?;
            let hour = block
                .get("index")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fail(lineno, "hour block needs a numeric `index`".into()))?;
            let iterations_run = block
                .get("iterations")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fail(lineno, "hour block needs numeric `iterations`".into()))?;
            let converged = block
                .get("converged")
                .and_then(|v| v.parse().ok())
                .ok_or_else(|| fail(lineno, "hour block needs boolean `converged`".into()))?;
            current = Some(HourlyFlows {
                hour,
                flows: Vec::with_capacity(sensor_count),
                iterations_run,
                converged,
            });
            continue;
        }
        let rec = current
            .as_mut()
            .ok_or_else(|| fail(lineno, "flow row before any hour block".into()))?;
        let mut parts = trimmed.split_whitespace();
        let sensor: usize = parts
            .next()
            .unwrap()
            .parse()
            .map_err(|e| fail(lineno, format!("bad sensor id: {e}")))?;
        let flow: f64 = parts
            .next()
            .ok_or_else(|| fail(lineno, "expected `sensor flow`".into()))?
            .parse()
            .map_err(|e| fail(lineno, format!("bad flow: {e}")))?;
        if parts.next().is_some() {
            return Err(fail(lineno, "expected exactly two columns".into()));
        }
        if sensor != rec.flows.len() {
            return Err(fail(
                lineno,
                format!("sensor ids must be dense and ordered; expected {}", rec.flows.len()),
            ));
        }
        if !(flow.is_finite() && flow >= 0.0) {
            return Err(fail(lineno, format!("flow must be finite and >= 0, got {flow}")));
        }
        rec.flows.push(flow);
    }
    finish(current.take(), last_line)?;
    records.sort_by_key(|r| r.hour);
    Ok(records)
}

fn validate_route(
    net: &RoadNetwork,
    origin: ZoneId,
    dest: ZoneId,
    route: &[LinkId],
) -> Result<(), DtaError> {
    let fail = |msg: String| DtaError::InvalidRouteSet { origin, dest, msg };
    if route.is_empty() {
        return Err(fail("route is empty".into()));
    }
    for window in route.windows(2) {
        let a = net
            .link(window[0])
            .ok_or_else(|| fail(format!("unknown {}", window[0])))?;
        let b = net
            .link(window[1])
            .ok_or_else(|| fail(format!("unknown {}", window[1])))?;
        if a.to != b.from {
            return Err(fail(format!("{} does not continue {}", window[1], window[0])));
        }
    }
    let first = route[0];
    let last = *route.last().expect("nonempty");
    net.link(last).ok_or_else(|| fail(format!("unknown {last}")))?;
    let origin_zone = net
        .zone(origin)
        .ok_or_else(|| fail(format!("unknown {origin}")))?;
    let dest_zone = net.zone(dest).ok_or_else(|| fail(format!("unknown {dest}")))?;
    if !origin_zone.attach_links.contains(&first) {
        return Err(fail(format!("{first} is not an attach link of {origin}")));
    }
    if !dest_zone.attach_links.contains(&last) {
        return Err(fail(format!("{last} is not an attach link of {dest}")));
    }
    let mut seen = std::collections::BTreeSet::new();
    for &l in route {
        if !seen.insert(l) {
            return Err(fail(format!("{l} repeats within the route")));
        }
    }
    Ok(())
}
