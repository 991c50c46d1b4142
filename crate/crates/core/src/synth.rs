//! Synthetic network builders: a 7-zone demo loop (one zone per class) and
//! a full-scale 32-zone two-level terminal with 35 sensors.
//!
//! Demo layout, one level shown (the lower level mirrors it):
//!
//! ```text
//!   entrance ──e0──> (j) ──e1──> [curb] ──e2──> (j) ──e3──> exit
//!                     │                          ^
//!                     e8                         e9
//!                     └────────> [parking] ──────┘
//! ```
//!
//! Parking is shared by both levels; the levels touch nowhere else.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::network::{
    CostWeights, Link, LinkId, Node, NodeId, NodeKind, RoadNetwork, Sensor, SensorId, VdfParams,
    Zone, ZoneClass, ZoneId,
};

/// Free-flow speed used to derive a link's free-flow time from its length
/// when generating networks.
pub const DEFAULT_SPEED_MPS: f64 = 13.9;

fn make_link(id: u32, from: u32, to: u32, length: f64, capacity: f64, fee: f64, speed: f64) -> Link {
    let t0 = length / speed;
    Link {
        id: LinkId(id),
        from: NodeId(from),
        to: NodeId(to),
        length,
        capacity,
        free_flow_time: t0,
        financial_cost: fee,
        travel_time: t0,
        flow: 0.0,
    }
}

/// Seven-zone demo network: one zone of every class, 12 links, 8 sensors.
pub fn demo_network() -> RoadNetwork {
    demo_network_with_speed(DEFAULT_SPEED_MPS)
}

pub fn demo_network_with_speed(speed: f64) -> RoadNetwork {
    let junction = |id| Node {
        id: NodeId(id),
        kind: NodeKind::Junction,
    };
    let connector = |id| Node {
        id: NodeId(id),
        kind: NodeKind::ZoneConnector,
    };
    let nodes = vec![
        connector(0), // upper entrance
        junction(1),
        connector(2), // upper curb
        junction(3),
        connector(4), // upper exit
        connector(5), // lower entrance
        junction(6),
        connector(7), // lower curb
        junction(8),
        connector(9),  // lower exit
        connector(10), // parking
    ];
    let links = vec![
        make_link(0, 0, 1, 200.0, 1800.0, 0.0, speed), // upper entrance gateway
        make_link(1, 1, 2, 300.0, 1800.0, 0.0, speed), // approach to upper curb
        make_link(2, 2, 3, 150.0, 1200.0, 0.0, speed), // upper curb departure
        make_link(3, 3, 4, 200.0, 1800.0, 0.0, speed), // upper exit gateway
        make_link(4, 5, 6, 200.0, 1800.0, 0.0, speed), // lower entrance gateway
        make_link(5, 6, 7, 300.0, 1800.0, 0.0, speed), // approach to lower curb
        make_link(6, 7, 8, 150.0, 1200.0, 0.0, speed), // lower curb departure
        make_link(7, 8, 9, 200.0, 1800.0, 0.0, speed), // lower exit gateway
        make_link(8, 1, 10, 250.0, 900.0, 5.0, speed), // parking entry, upper
        make_link(9, 10, 3, 250.0, 900.0, 0.0, speed), // parking exit to upper
        make_link(10, 6, 10, 250.0, 900.0, 5.0, speed), // parking entry, lower
        make_link(11, 10, 8, 250.0, 900.0, 0.0, speed), // parking exit to lower
    ];
    let zone = |id, class, attach: Vec<u32>| Zone {
        id: ZoneId(id),
        class,
        attach_links: attach.into_iter().map(LinkId).collect(),
    };
    let zones = vec![
        zone(0, ZoneClass::UpperEntrance, vec![0]),
        zone(1, ZoneClass::UpperExit, vec![3]),
        zone(2, ZoneClass::LowerEntrance, vec![4]),
        zone(3, ZoneClass::LowerExit, vec![7]),
        zone(4, ZoneClass::UpperCurbside, vec![1, 2]),
        zone(5, ZoneClass::LowerCurbside, vec![5, 6]),
        zone(6, ZoneClass::Parking, vec![8, 9, 10, 11]),
    ];
    let sensors = [0u32, 3, 4, 7, 8, 9, 10, 11]
        .iter()
        .enumerate()
        .map(|(i, &l)| Sensor {
            id: SensorId(i as u32),
            link: LinkId(l),
        })
        .collect();
    RoadNetwork::new(
        nodes,
        links,
        zones,
        sensors,
        CostWeights::default(),
        VdfParams::default(),
    )
    .expect("demo network is valid by construction")
}

/// Zone-class sizes of the full-scale network. The resulting demand matrix
/// has exactly 161 structurally free entries out of 32 × 32.
pub const FULL_SCALE_CLASS_COUNTS: [(ZoneClass, usize); 7] = [
    (ZoneClass::UpperEntrance, 6),
    (ZoneClass::UpperExit, 6),
    (ZoneClass::LowerEntrance, 6),
    (ZoneClass::LowerExit, 5),
    (ZoneClass::UpperCurbside, 2),
    (ZoneClass::LowerCurbside, 2),
    (ZoneClass::Parking, 5),
];

pub fn full_scale_network(seed: u64) -> RoadNetwork {
    full_scale_network_with_speed(seed, DEFAULT_SPEED_MPS)
}

/// Full-scale synthetic terminal: 32 zones across two 12-segment ring
/// roads joined by 5 parking structures, 35 sensors.
pub fn full_scale_network_with_speed(seed: u64, speed: f64) -> RoadNetwork {
    const RING: u32 = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    let mut next_node = 0u32;
    let mut next_link = 0u32;
    let mut node = |nodes: &mut Vec<Node>, kind| {
        let id = next_node;
        next_node += 1;
        nodes.push(Node {
            id: NodeId(id),
            kind,
        });
        id
    };
    // Ring segment lengths get a little deterministic jitter so no two
    // parallel arcs tie exactly.
    let mut jitter = move || rng.random_range(-20.0..20.0f64);

    // Level rings: upper nodes come first, then lower.
    let mut ring_nodes = [[0u32; RING as usize]; 2];
    for level in 0..2 {
        for slot in 0..RING as usize {
            ring_nodes[level][slot] = node(&mut nodes, NodeKind::Junction);
        }
    }
    let mut ring_links = [[0u32; RING as usize]; 2];
    for level in 0..2 {
        for slot in 0..RING as usize {
            let from = ring_nodes[level][slot];
            let to = ring_nodes[level][(slot + 1) % RING as usize];
            let id = next_link;
            next_link += 1;
            links.push(make_link(id, from, to, 220.0 + jitter(), 3600.0, 0.0, speed));
            ring_links[level][slot] = id;
        }
    }
    // One shortcut chord per level, competing with a five-segment arc.
    for level in 0..2 {
        let id = next_link;
        next_link += 1;
        links.push(make_link(
            id,
            ring_nodes[level][1],
            ring_nodes[level][6],
            700.0 + jitter(),
            1400.0,
            0.0,
            speed,
        ));
    }

    let mut zones: Vec<Zone> = Vec::new();
    let mut zone_id = 0u32;
    let mut push_zone = |zones: &mut Vec<Zone>, class, attach: Vec<u32>| {
        zones.push(Zone {
            id: ZoneId(zone_id),
            class,
            attach_links: attach.into_iter().map(LinkId).collect(),
        });
        zone_id += 1;
    };

    let mut sensor_links: Vec<u32> = Vec::new();

    // Entrances feed even ring slots, exits drain odd slots.
    let mut boundary = |level: usize,
                        count: usize,
                        entrance: bool,
                        nodes: &mut Vec<Node>,
                        links: &mut Vec<Link>,
                        zones: &mut Vec<Zone>,
                        sensor_links: &mut Vec<u32>| {
        let class = match (level, entrance) {
            (0, true) => ZoneClass::UpperEntrance,
            (0, false) => ZoneClass::UpperExit,
            (1, true) => ZoneClass::LowerEntrance,
            (1, false) => ZoneClass::LowerExit,
            _ => unreachable!(),
        };
        for k in 0..count {
            let connector = node(nodes, NodeKind::ZoneConnector);
            let slot = if entrance { 2 * k } else { 2 * k + 1 } % RING as usize;
            let ring = ring_nodes[level][slot];
            let (from, to) = if entrance {
                (connector, ring)
            } else {
                (ring, connector)
            };
            let id = next_link;
            next_link += 1;
            links.push(make_link(id, from, to, 180.0, 1800.0, 0.0, speed));
            push_zone(zones, class, vec![id]);
            sensor_links.push(id);
        }
    };
    boundary(0, 6, true, &mut nodes, &mut links, &mut zones, &mut sensor_links);
    boundary(0, 6, false, &mut nodes, &mut links, &mut zones, &mut sensor_links);
    boundary(1, 6, true, &mut nodes, &mut links, &mut zones, &mut sensor_links);
    boundary(1, 5, false, &mut nodes, &mut links, &mut zones, &mut sensor_links);

    // Curbsides: two ring segments per level act as curb zones, attached to
    // the arriving and departing ring links.
    for (level, class) in [(0, ZoneClass::UpperCurbside), (1, ZoneClass::LowerCurbside)] {
        for slot in [3usize, 9] {
            let arrive = ring_links[level][(slot + RING as usize - 1) % RING as usize];
            let depart = ring_links[level][slot];
            push_zone(&mut zones, class, vec![arrive, depart]);
        }
    }

    // Parking structures: one hub node each, entry and exit ramps on both
    // levels. The first two structures also get sensors on the upper exit
    // ramp so the sensor total lands on 35.
    for s in 0..5usize {
        let hub = node(&mut nodes, NodeKind::ZoneConnector);
        let u_in = ring_nodes[0][(2 * s + 1) % RING as usize];
        let u_out = ring_nodes[0][(2 * s + 2) % RING as usize];
        let l_in = ring_nodes[1][(2 * s + 1) % RING as usize];
        let l_out = ring_nodes[1][(2 * s + 2) % RING as usize];
        let mut ramp = |from: u32, to: u32, fee: f64, links: &mut Vec<Link>| {
            let id = next_link;
            next_link += 1;
            links.push(make_link(id, from, to, 260.0, 1200.0, fee, speed));
            id
        };
        let entry_u = ramp(u_in, hub, 8.0, &mut links);
        let exit_u = ramp(hub, u_out, 0.0, &mut links);
        let entry_l = ramp(l_in, hub, 8.0, &mut links);
        let exit_l = ramp(hub, l_out, 0.0, &mut links);
        push_zone(
            &mut zones,
            ZoneClass::Parking,
            vec![entry_u, exit_u, entry_l, exit_l],
        );
        sensor_links.push(entry_u);
        sensor_links.push(entry_l);
        if s < 2 {
            sensor_links.push(exit_u);
        }
    }

    let sensors = sensor_links
        .into_iter()
        .enumerate()
        .map(|(i, l)| Sensor {
            id: SensorId(i as u32),
            link: LinkId(l),
        })
        .collect();

    RoadNetwork::new(
        nodes,
        links,
        zones,
        sensors,
        CostWeights::default(),
        VdfParams::default(),
    )
    .expect("full-scale network is valid by construction")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn demo_is_valid() {
        let net = demo_network();
        net.validate().unwrap();
        assert_eq!(net.zone_count(), 7);
        assert_eq!(net.sensors().len(), 8);
    }

    #[test]
    fn full_scale_has_32_zones_and_35_sensors() {
        let net = full_scale_network(0);
        net.validate().unwrap();
        assert_eq!(net.zone_count(), 32);
        assert_eq!(net.sensors().len(), 35);
        for (class, count) in FULL_SCALE_CLASS_COUNTS {
            assert_eq!(
                net.zones().iter().filter(|z| z.class == class).count(),
                count,
                "{class}"
            );
        }
    }

    #[test]
    fn generators_are_deterministic_per_seed() {
        let a = full_scale_network(9);
        let b = full_scale_network(9);
        assert_eq!(a.links(), b.links());
        let c = full_scale_network(10);
        assert_ne!(a.links(), c.links());
    }

    #[test]
    fn demo_free_pairs_are_routable() {
        let net = demo_network();
        // Spot-check a route on each level and through parking.
        let p = net
            .shortest_path(crate::network::ZoneId(0), crate::network::ZoneId(4))
            .unwrap()
            .unwrap();
        assert_eq!(p, vec![LinkId(0), LinkId(1)]);
        let p = net
            .shortest_path(crate::network::ZoneId(6), crate::network::ZoneId(3))
            .unwrap()
            .unwrap();
        assert_eq!(p, vec![LinkId(11), LinkId(7)]);
    }
}
