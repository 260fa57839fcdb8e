//! The emulated network: nodes, delay/datarate channels and forwarding.
//!
//! Packets move between nodes as `PacketArrival` events. A router looks up the
//! packet's destination in its static forwarding table and schedules the
//! arrival at the next hop after the node's processing delay plus the
//! channel's transit time. An echo responder answers packets addressed to it.
//! Routes that point at an external interface produce `EmitExternal` events,
//! which hand the packet to that interface's emission sink.

mod sink;
mod topology;

use std::time::Duration;

use crate::capture::Packet;
use crate::frame::{ProbeHeader, Truncated};
use crate::kernel::{Event, EventKind, FutureEventSet, Kernel, KernelError};
use crate::time::SimTime;

pub use sink::{Emission, EmissionSink, RecordingSink, SinkTarget, UdpSink};
pub use topology::{
    build_topology, preset_definition, Channel, ChannelDef, ChannelId, ExtId, External,
    ExternalDef, Ingress, Node, NodeDef, NodeId, NodeKind, Route, RouteDef, Topology,
    TopologyDef, TopologyError, EMULATED_LINK_DATARATE, EMULATED_LINK_DELAY, PRESETS,
    PRESET_EMULATED_LINK, PRESET_LOCAL_HOST, PROBER_ADDRESS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelParams {
    /// One-way propagation delay.
    pub delay: Duration,
    /// Bits per second, always positive.
    pub datarate: u64,
}

/// Propagation delay plus serialization time of `size` bytes, rounded to the
/// nearest nanosecond.
pub fn transit_time(size: usize, ch: &ChannelParams) -> Duration {
    let bits = 8 * size as u128;
    let rate = ch.datarate.max(1) as u128;
    let ser = (bits * 1_000_000_000 + rate / 2) / rate;
    ch.delay + Duration::from_nanos(u64::try_from(ser).unwrap_or(u64::MAX))
}

/// Builds the reply to a framed echo request: same payload, endpoints swapped.
pub fn echo_respond(packet: &Packet) -> Result<Packet, Truncated> {
    ProbeHeader::decode(&packet.payload)?;
    let mut reply = packet.clone();
    std::mem::swap(&mut reply.src, &mut reply.dst);
    Ok(reply)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scheduled {
    pub due: SimTime,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct NetStats {
    pub injected: u64,
    pub emitted: u64,
    pub routing_dropped: u64,
    pub malformed_dropped: u64,
}

pub struct Network {
    topo: Topology,
    stats: NetStats,
    probe_size: usize,
}

impl Network {
    pub fn new(topo: Topology) -> Self {
        Self {
            topo,
            stats: NetStats::default(),
            probe_size: 64,
        }
    }

    pub fn with_probe_size(mut self, size: usize) -> Self {
        self.probe_size = size;
        self
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    /// Packets currently travelling inside the model. Arrivals still tagged
    /// with an external ingress have not been counted as injected yet.
    pub fn in_flight(fes: &FutureEventSet) -> u64 {
        fes.iter()
            .filter(|e| match &e.kind {
                EventKind::PacketArrival { ingress, .. } => !matches!(ingress, Ingress::External(_)),
                EventKind::PacketDeparture { .. } | EventKind::EmitExternal { .. } => true,
                EventKind::TimerFire(_) | EventKind::ProbeSend(_) => false,
            })
            .count() as u64
    }

    pub fn on_arrival(
        &mut self,
        node: NodeId,
        ingress: Ingress,
        mut packet: Packet,
        now: SimTime,
    ) -> Vec<Scheduled> {
        if let Ingress::External(x) = ingress {
            let ext = self.topo.external(x);
            packet.src = ext.peer.clone();
            packet.dst = ext.inject_dst.clone();
            self.stats.injected += 1;
        }
        let n = self.topo.node(node);
        match n.kind {
            NodeKind::Router => self.forward(node, packet, now),
            NodeKind::Host => match (ingress, n.external) {
                (Ingress::Channel(_), Some(sink)) => vec![Scheduled {
                    due: now + self.topo.processing_delay,
                    kind: EventKind::EmitExternal { packet, sink },
                }],
                _ => self.forward(node, packet, now),
            },
            NodeKind::EchoResponder if packet.dst == n.address => match echo_respond(&packet) {
                Ok(reply) => self.forward(node, reply, now),
                Err(_) => {
                    self.stats.malformed_dropped += 1;
                    vec![]
                }
            },
            NodeKind::EchoResponder => self.forward(node, packet, now),
        }
    }

    pub fn on_departure(&mut self, channel: ChannelId, packet: Packet, now: SimTime) -> Scheduled {
        let ch = self.topo.channel(channel);
        Scheduled {
            due: now + transit_time(packet.size(), &ch.params),
            kind: EventKind::PacketArrival {
                packet,
                node: ch.to,
                ingress: Ingress::Channel(channel),
            },
        }
    }

    /// Originates a framed probe on the first external interface as though it
    /// had just been captured there. Used by the non-real-time run mode.
    pub fn on_probe(&mut self, probe: u64, now: SimTime) -> Vec<Scheduled> {
        let Some(ext) = self.topo.externals.first() else {
            self.stats.routing_dropped += 1;
            return vec![];
        };
        let node = ext.node;
        let payload = ProbeHeader {
            seq: probe,
            sent_ns: now.0,
        }
        .encode(self.probe_size);
        let packet = Packet::captured(payload, crate::time::WallTime(now.0), probe, ExtId(0));
        self.on_arrival(node, Ingress::External(ExtId(0)), packet, now)
    }

    fn forward(&mut self, node: NodeId, packet: Packet, now: SimTime) -> Vec<Scheduled> {
        let n = self.topo.node(node);
        let ready = now + self.topo.processing_delay;
        match n.routes.get(&packet.dst) {
            Some(Route::Channel(c)) => {
                let ch = self.topo.channel(*c);
                vec![Scheduled {
                    due: ready + transit_time(packet.size(), &ch.params),
                    kind: EventKind::PacketArrival {
                        node: ch.to,
                        ingress: Ingress::Channel(*c),
                        packet,
                    },
                }]
            }
            Some(Route::External(sink)) => vec![Scheduled {
                due: ready,
                kind: EventKind::EmitExternal { packet, sink: *sink },
            }],
            None => {
                self.stats.routing_dropped += 1;
                vec![]
            }
        }
    }

    /// Handles one dispatched event, scheduling its consequences. Emissions
    /// are passed to `emit`; timer events are ignored here.
    pub fn dispatch(
        &mut self,
        kernel: &mut Kernel,
        event: Event,
        emit: &mut dyn FnMut(ExtId, Packet),
    ) -> Result<(), KernelError> {
        let now = event.due;
        let next = match event.kind {
            EventKind::PacketArrival {
                packet,
                node,
                ingress,
            } => self.on_arrival(node, ingress, packet, now),
            EventKind::PacketDeparture { packet, channel } => {
                vec![self.on_departure(channel, packet, now)]
            }
            EventKind::EmitExternal { packet, sink } => {
                self.stats.emitted += 1;
                emit(sink, packet);
                vec![]
            }
            EventKind::ProbeSend(id) => self.on_probe(id, now),
            EventKind::TimerFire(_) => vec![],
        };
        for s in next {
            kernel.schedule(s.due, s.kind)?;
        }
        Ok(())
    }
}

/// Sum of per-hop transit times along a chain of channels.
pub fn path_transit(size: usize, chain: &[ChannelParams]) -> Duration {
    chain.iter().map(|c| transit_time(size, c)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::time::WallTime;
    use proptest::prelude::*;

    const GBPS: u64 = 1_000_000_000;

    fn link(ms: u64) -> ChannelParams {
        ChannelParams {
            delay: Duration::from_millis(ms),
            datarate: GBPS,
        }
    }

    fn preset(name: &str) -> Network {
        Network::new(
            build_topology(&TopologyDef {
                preset: Some(name.into()),
                ..Default::default()
            })
            .unwrap(),
        )
    }

    #[test]
    fn transit_examples() {
        assert_eq!(transit_time(100, &link(10)), Duration::from_nanos(10_000_800));
        assert_eq!(transit_time(1500, &link(0)), Duration::from_nanos(12_000));
        let both = transit_time(100, &link(10)) * 2;
        assert_eq!(both, Duration::from_nanos(20_001_600));
    }

    #[test]
    fn transit_rounds_to_nearest() {
        // 8 bits at 3 bps = 2.666..s
        let ch = ChannelParams {
            delay: Duration::ZERO,
            datarate: 3,
        };
        assert_eq!(transit_time(1, &ch), Duration::from_nanos(2_666_666_667));
    }

    #[test]
    fn router_forwards_after_transit() {
        let mut net = preset(PRESET_EMULATED_LINK);
        let a = net.topology().node_by_name("router-a").unwrap();
        let b = net.topology().node_by_name("router-b").unwrap();
        let p = Packet::captured(ProbeHeader { seq: 1, sent_ns: 0 }.encode(100), WallTime(0), 0, ExtId(0));
        let t = SimTime::from_millis(3);
        let out = net.on_arrival(a, Ingress::External(ExtId(0)), p, t);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].due, t + Duration::from_nanos(10_000_800));
        assert!(matches!(&out[0].kind, EventKind::PacketArrival { node, .. } if *node == b));
    }

    #[test]
    fn unroutable_is_counted() {
        let mut net = preset(PRESET_EMULATED_LINK);
        let a = net.topology().node_by_name("router-a").unwrap();
        let mut p = Packet::captured(vec![0; 20], WallTime(0), 0, ExtId(0));
        p.dst = "10.9.9.9".into();
        let out = net.on_arrival(a, Ingress::Channel(ChannelId(1)), p, SimTime::ZERO);
        assert!(out.is_empty());
        assert_eq!(net.stats().routing_dropped, 1);
    }

    #[test]
    fn echo_swaps_endpoints() {
        let mut p = Packet::captured(ProbeHeader { seq: 7, sent_ns: 1234 }.encode(40), WallTime(0), 0, ExtId(0));
        p.src = "a".into();
        p.dst = "b".into();
        let r = echo_respond(&p).unwrap();
        assert_eq!((r.src.as_str(), r.dst.as_str()), ("b", "a"));
        assert_eq!(r.payload, p.payload);
        assert_eq!(ProbeHeader::decode(&r.payload).unwrap(), ProbeHeader { seq: 7, sent_ns: 1234 });
    }

    #[test]
    fn malformed_echo_is_counted() {
        let mut net = preset(PRESET_LOCAL_HOST);
        let p = Packet::captured(vec![0; 10], WallTime(0), 0, ExtId(0));
        let out = net.on_arrival(NodeId(0), Ingress::External(ExtId(0)), p, SimTime::ZERO);
        assert!(out.is_empty());
        assert_eq!(net.stats().malformed_dropped, 1);
    }

    #[test]
    fn host_emits_channel_traffic() {
        let def = TopologyDef {
            nodes: vec![
                NodeDef { name: "h".into(), kind: NodeKind::Host, address: None },
                NodeDef { name: "r".into(), kind: NodeKind::Router, address: None },
            ],
            channels: vec![ChannelDef { from: "r".into(), to: "h".into(), delay: Duration::ZERO, datarate: GBPS }],
            externals: vec![ExternalDef { name: "x".into(), node: "h".into(), inject_dst: "r".into(), peer: "p".into() }],
            ..Default::default()
        };
        let mut net = Network::new(build_topology(&def).unwrap());
        let p = Packet::captured(vec![0; 20], WallTime(0), 0, ExtId(0));
        let out = net.on_arrival(NodeId(0), Ingress::Channel(ChannelId(0)), p, SimTime(5));
        assert_eq!(out.len(), 1);
        assert!(matches!(out[0].kind, EventKind::EmitExternal { sink: ExtId(0), .. }));
    }

    // Hand-built event chain for one 64-byte probe over the emulated link:
    // ext0 -> router-a -> router-b -> echo -> router-b -> router-a -> ext0.
    fn chain_oracle(size: usize, processing: u64) -> u64 {
        let link = 10_000_000 + (size as u64 * 8); // 1 Gbps: 1 ns per bit
        let stub = size as u64 * 8;
        // five node visits, each adds the processing delay
        2 * link + 2 * stub + 5 * processing
    }

    fn run_probe(processing: Duration, size: usize, inject_at: SimTime) -> Vec<(SimTime, Packet)> {
        let mut def = TopologyDef {
            preset: Some(PRESET_EMULATED_LINK.into()),
            ..Default::default()
        };
        def.processing_delay = processing;
        let mut net = Network::new(build_topology(&def).unwrap()).with_probe_size(size);
        let mut kernel = Kernel::new();
        kernel.schedule(inject_at, EventKind::ProbeSend(9)).unwrap();
        let mut out = Vec::new();
        kernel
            .run_until(SimTime::from_millis(1000), |k, ev| {
                let now = ev.due;
                net.dispatch(k, ev, &mut |_, p| out.push((now, p)))
            })
            .unwrap();
        assert_eq!(net.stats().injected, 1);
        assert_eq!(net.stats().emitted, 1);
        out
    }

    #[test]
    fn full_ping_path_matches_hand_chain() {
        let t0 = SimTime::from_millis(2);
        let out = run_probe(Duration::ZERO, 64, t0);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].0.0 - t0.0, chain_oracle(64, 0));
        assert_eq!(chain_oracle(64, 0), 20_002_048);
        let out = run_probe(Duration::from_micros(3), 64, t0);
        assert_eq!(out[0].0.0 - t0.0, chain_oracle(64, 3_000));
        let h = ProbeHeader::decode(&out[0].1.payload).unwrap();
        assert_eq!(h, ProbeHeader { seq: 9, sent_ns: t0.0 });
        assert_eq!(out[0].1.dst, PROBER_ADDRESS);
    }

    #[test]
    fn departure_chain_across_two_links() {
        // router-a -> router-b departure at 0, then router-b forwards to router-a
        let mut net = preset(PRESET_EMULATED_LINK);
        let mut kernel = Kernel::new();
        let mut p = Packet::captured(vec![0; 100], WallTime(0), 0, ExtId(0));
        p.dst = PROBER_ADDRESS.into();
        kernel
            .schedule(SimTime::ZERO, EventKind::PacketDeparture { packet: p, channel: ChannelId(0) })
            .unwrap();
        let mut arrivals = Vec::new();
        while let Ok(ev) = kernel.pop_next() {
            if let EventKind::PacketArrival { .. } = ev.kind {
                arrivals.push(ev.due.0);
            }
            if matches!(ev.kind, EventKind::EmitExternal { .. }) {
                break;
            }
            net.dispatch(&mut kernel, ev, &mut |_, _| {}).unwrap();
        }
        assert_eq!(arrivals, vec![10_000_800, 20_001_600]);
    }

    #[test]
    fn conservation_with_random_traffic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut net = preset(PRESET_EMULATED_LINK);
        let mut kernel = Kernel::new();
        let dsts = ["10.2.2.2", "prober", "nowhere"];
        for i in 0..500u64 {
            let size = rng.random_range(0..120);
            let mut p = Packet::captured(vec![0; size], WallTime(0), i, ExtId(0));
            p.dst = dsts[rng.random_range(0..3)].into();
            let at = SimTime(rng.random_range(0..50_000_000));
            if rng.random_bool(0.5) {
                kernel.schedule(at, EventKind::PacketArrival { packet: p, node: NodeId(0), ingress: Ingress::External(ExtId(0)) }).unwrap();
            } else {
                kernel.schedule(at, EventKind::ProbeSend(i)).unwrap();
            }
        }
        let mut external_pending = 500u64;
        while let Ok(ev) = kernel.pop_next() {
            let external = matches!(ev.kind, EventKind::PacketArrival { ingress: Ingress::External(_), .. } | EventKind::ProbeSend(_));
            net.dispatch(&mut kernel, ev, &mut |_, _| {}).unwrap();
            if external {
                external_pending -= 1;
            }
            let s = net.stats();
            assert_eq!(
                s.injected,
                s.emitted + Network::in_flight(kernel.fes()) + s.routing_dropped + s.malformed_dropped
            );
        }
        assert_eq!(external_pending, 0);
        assert_eq!(net.stats().injected, 500);
    }

    proptest! {
        #[test]
        fn transit_monotone(size in 0usize..100_000, extra in 0usize..1000, d in 0u64..1_000_000_000, dd in 0u64..1_000_000, rate in 1u64..100_000_000_000) {
            let a = ChannelParams { delay: Duration::from_nanos(d), datarate: rate };
            let b = ChannelParams { delay: Duration::from_nanos(d + dd), datarate: rate };
            prop_assert!(transit_time(size + extra, &a) >= transit_time(size, &a));
            prop_assert!(transit_time(size, &b) >= transit_time(size, &a));
        }

        #[test]
        fn echo_preserves_framing(seq: u64, ts: u64, size in 16usize..512) {
            let mut p = Packet::captured(ProbeHeader { seq, sent_ns: ts }.encode(size), WallTime(0), 0, ExtId(0));
            p.src = "s".into();
            p.dst = "d".into();
            let r = echo_respond(&p).unwrap();
            prop_assert_eq!(&r.payload, &p.payload);
            prop_assert_eq!(ProbeHeader::decode(&r.payload).unwrap(), ProbeHeader { seq, sent_ns: ts });
            prop_assert_eq!(echo_respond(&r).unwrap(), p);
        }
    }
}
