use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::ChannelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId(pub usize);

/// An external interface: one capture source paired with one emission sink.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExtId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ingress {
    External(ExtId),
    Channel(ChannelId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Host,
    Router,
    EchoResponder,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeDef {
    pub name: String,
    pub kind: NodeKind,
    /// Defaults to the node name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub address: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDef {
    pub from: String,
    pub to: String,
    #[serde(with = "humantime_serde")]
    pub delay: Duration,
    /// Bits per second.
    pub datarate: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalDef {
    pub name: String,
    pub node: String,
    /// Destination address stamped on packets captured on this interface.
    pub inject_dst: String,
    /// Source address stamped on captured packets; replies routed to it leave
    /// through this interface.
    pub peer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteDef {
    pub node: String,
    pub dest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_hop: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<String>,
}

/// Declarative topology, either a named preset or an inline graph.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDef {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, with = "humantime_serde")]
    pub processing_delay: Duration,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub nodes: Vec<NodeDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub channels: Vec<ChannelDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub externals: Vec<ExternalDef>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub routes: Vec<RouteDef>,
}

pub const PRESET_LOCAL_HOST: &str = "local-host";
pub const PRESET_EMULATED_LINK: &str = "emulated-link";
pub const PRESETS: [&str; 2] = [PRESET_LOCAL_HOST, PRESET_EMULATED_LINK];

pub const EMULATED_LINK_DELAY: Duration = Duration::from_millis(10);
pub const EMULATED_LINK_DATARATE: u64 = 1_000_000_000;
pub const PROBER_ADDRESS: &str = "prober";

fn node(name: &str, kind: NodeKind, address: Option<&str>) -> NodeDef {
    NodeDef {
        name: name.into(),
        kind,
        address: address.map(Into::into),
    }
}

fn channel(from: &str, to: &str, delay: Duration, datarate: u64) -> ChannelDef {
    ChannelDef {
        from: from.into(),
        to: to.into(),
        delay,
        datarate,
    }
}

fn hop(node: &str, dest: &str, next_hop: &str) -> RouteDef {
    RouteDef {
        node: node.into(),
        dest: dest.into(),
        next_hop: Some(next_hop.into()),
        external: None,
    }
}

fn out(node: &str, dest: &str, ext: &str) -> RouteDef {
    RouteDef {
        node: node.into(),
        dest: dest.into(),
        next_hop: None,
        external: Some(ext.into()),
    }
}

/// Inline definition of a built-in preset.
///
/// `local-host`: one echo-responding host at 10.1.1.1 behind external
/// interface `ext0`.
///
/// `emulated-link`: `router-a` (external interface `ext0`) and `router-b`
/// joined by 10 ms / 1 Gbps channels in each direction, and an echo endpoint
/// at 10.2.2.2 hanging off `router-b` through zero-delay 1 Gbps stub channels.
pub fn preset_definition(name: &str) -> Option<TopologyDef> {
    let def = match name {
        PRESET_LOCAL_HOST => TopologyDef {
            preset: None,
            processing_delay: Duration::ZERO,
            nodes: vec![node("host", NodeKind::EchoResponder, Some("10.1.1.1"))],
            channels: vec![],
            externals: vec![ExternalDef {
                name: "ext0".into(),
                node: "host".into(),
                inject_dst: "10.1.1.1".into(),
                peer: PROBER_ADDRESS.into(),
            }],
            routes: vec![out("host", PROBER_ADDRESS, "ext0")],
        },
        PRESET_EMULATED_LINK => {
            let (d, r) = (EMULATED_LINK_DELAY, EMULATED_LINK_DATARATE);
            TopologyDef {
                preset: None,
                processing_delay: Duration::ZERO,
                nodes: vec![
                    node("router-a", NodeKind::Router, None),
                    node("router-b", NodeKind::Router, None),
                    node("echo", NodeKind::EchoResponder, Some("10.2.2.2")),
                ],
                channels: vec![
                    channel("router-a", "router-b", d, r),
                    channel("router-b", "router-a", d, r),
                    channel("router-b", "echo", Duration::ZERO, r),
                    channel("echo", "router-b", Duration::ZERO, r),
                ],
                externals: vec![ExternalDef {
                    name: "ext0".into(),
                    node: "router-a".into(),
                    inject_dst: "10.2.2.2".into(),
                    peer: PROBER_ADDRESS.into(),
                }],
                routes: vec![
                    hop("router-a", "10.2.2.2", "router-b"),
                    out("router-a", PROBER_ADDRESS, "ext0"),
                    hop("router-b", "10.2.2.2", "echo"),
                    hop("router-b", PROBER_ADDRESS, "router-a"),
                    hop("echo", PROBER_ADDRESS, "router-b"),
                ],
            }
        }
        _ => return None,
    };
    Some(def)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Channel(ChannelId),
    External(ExtId),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub kind: NodeKind,
    pub address: String,
    pub routes: BTreeMap<String, Route>,
    pub external: Option<ExtId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub from: NodeId,
    pub to: NodeId,
    pub params: ChannelParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct External {
    pub name: String,
    pub node: NodeId,
    pub inject_dst: String,
    pub peer: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub nodes: Vec<Node>,
    pub channels: Vec<Channel>,
    pub externals: Vec<External>,
    pub processing_delay: Duration,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct TopologyError {
    pub violations: Vec<String>,
}

impl fmt::Display for TopologyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid topology: {}", self.violations.join("; "))
    }
}

impl Topology {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn channel(&self, id: ChannelId) -> &Channel {
        &self.channels[id.0]
    }

    pub fn external(&self, id: ExtId) -> &External {
        &self.externals[id.0]
    }

    pub fn node_by_name(&self, name: &str) -> Option<NodeId> {
        self.nodes.iter().position(|n| n.name == name).map(NodeId)
    }

    /// Node that receives packets captured on each external interface.
    pub fn ingress_nodes(&self) -> Vec<NodeId> {
        self.externals.iter().map(|x| x.node).collect()
    }
}

/// Resolves presets and validates every reference, reporting all problems at
/// once.
pub fn build_topology(def: &TopologyDef) -> Result<Topology, TopologyError> {
    let mut violations = Vec::new();
    let resolved;
    let def = match &def.preset {
        Some(name) => {
            if !def.nodes.is_empty()
                || !def.channels.is_empty()
                || !def.externals.is_empty()
                || !def.routes.is_empty()
            {
                violations.push(format!(
                    "preset `{name}` cannot be combined with inline nodes, channels, externals or routes"
                ));
            }
            match preset_definition(name) {
                Some(mut p) => {
                    p.processing_delay = def.processing_delay;
                    resolved = p;
                    &resolved
                }
                None => {
                    violations.push(format!(
                        "unknown preset `{name}` (expected one of: {})",
                        PRESETS.join(", ")
                    ));
                    return Err(TopologyError { violations });
                }
            }
        }
        None => def,
    };

    if def.nodes.is_empty() {
        violations.push("topology has no nodes".into());
    }
    let mut names = BTreeMap::new();
    for (i, n) in def.nodes.iter().enumerate() {
        if names.insert(n.name.as_str(), NodeId(i)).is_some() {
            violations.push(format!("duplicate node name `{}`", n.name));
        }
    }
    let lookup = |name: &str, what: &str, violations: &mut Vec<String>| {
        let id = names.get(name).copied();
        if id.is_none() {
            violations.push(format!("{what} references unknown node `{name}`"));
        }
        id
    };

    let mut channels = Vec::new();
    for (i, c) in def.channels.iter().enumerate() {
        let from = lookup(&c.from, &format!("channel {i}"), &mut violations);
        let to = lookup(&c.to, &format!("channel {i}"), &mut violations);
        if c.datarate == 0 {
            violations.push(format!("channel {i} ({} -> {}): datarate must be positive", c.from, c.to));
        }
        if let (Some(from), Some(to)) = (from, to) {
            channels.push(Channel {
                from,
                to,
                params: ChannelParams {
                    delay: c.delay,
                    datarate: c.datarate.max(1),
                },
            });
        }
    }

    let mut externals = Vec::new();
    let mut ext_names = BTreeMap::new();
    for (i, x) in def.externals.iter().enumerate() {
        if ext_names.insert(x.name.as_str(), ExtId(i)).is_some() {
            violations.push(format!("duplicate external interface `{}`", x.name));
        }
        if let Some(node) = lookup(&x.node, &format!("external `{}`", x.name), &mut violations) {
            externals.push(External {
                name: x.name.clone(),
                node,
                inject_dst: x.inject_dst.clone(),
                peer: x.peer.clone(),
            });
        }
    }
    let mut bound = BTreeSet::new();
    for x in &externals {
        if !bound.insert(x.node) {
            violations.push(format!(
                "node `{}` has more than one external interface",
                def.nodes[x.node.0].name
            ));
        }
    }

    let mut nodes: Vec<Node> = def
        .nodes
        .iter()
        .map(|n| Node {
            name: n.name.clone(),
            kind: n.kind,
            address: n.address.clone().unwrap_or_else(|| n.name.clone()),
            routes: BTreeMap::new(),
            external: None,
        })
        .collect();
    for (i, x) in externals.iter().enumerate() {
        nodes[x.node.0].external = Some(ExtId(i));
    }

    for (i, r) in def.routes.iter().enumerate() {
        let what = format!("route {i} ({} -> {})", r.node, r.dest);
        let Some(node) = lookup(&r.node, &what, &mut violations) else {
            continue;
        };
        let route = match (&r.next_hop, &r.external) {
            (Some(hop), None) => {
                let Some(to) = lookup(hop, &what, &mut violations) else {
                    continue;
                };
                match channels.iter().position(|c| c.from == node && c.to == to) {
                    Some(c) => Route::Channel(ChannelId(c)),
                    None => {
                        violations.push(format!("{what}: no channel from `{}` to `{hop}`", r.node));
                        continue;
                    }
                }
            }
            (None, Some(ext)) => match ext_names.get(ext.as_str()) {
                Some(&x) => Route::External(x),
                None => {
                    violations.push(format!("{what}: unknown external interface `{ext}`"));
                    continue;
                }
            },
            _ => {
                violations.push(format!("{what}: exactly one of next_hop or external is required"));
                continue;
            }
        };
        if nodes[node.0].routes.insert(r.dest.clone(), route).is_some() {
            violations.push(format!("{what}: duplicate route"));
        }
    }

    if !violations.is_empty() {
        return Err(TopologyError { violations });
    }
    Ok(Topology {
        nodes,
        channels,
        externals,
        processing_delay: def.processing_delay,
    })
}
