//! `.scn` scenario files: `[section]` headers, `key = value` lines and `#`
//! comments. Timeline lines read `event = <tick> <KIND> key=value ...`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::identity::Role;
use crate::nodes::{Channel, ClassificationLabel};

pub const DEFAULT_JOIN_TIMEOUT: u64 = 10;
pub const DEFAULT_MAX_RETRIES: u32 = 3;
pub const DEFAULT_SUITE_BITS: u32 = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    PackageUpdate,
    NetJoin,
    Compromise,
    Rollover,
    Sync,
    ManualTransfer,
    AlgorithmUpdate,
}

impl EventKind {
    pub const ALL: [EventKind; 7] = [
        EventKind::PackageUpdate,
        EventKind::NetJoin,
        EventKind::Compromise,
        EventKind::Rollover,
        EventKind::Sync,
        EventKind::ManualTransfer,
        EventKind::AlgorithmUpdate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EventKind::PackageUpdate => "PACKAGE_UPDATE",
            EventKind::NetJoin => "NET_JOIN",
            EventKind::Compromise => "COMPROMISE",
            EventKind::Rollover => "ROLLOVER",
            EventKind::Sync => "SYNC",
            EventKind::ManualTransfer => "MANUAL_TRANSFER",
            EventKind::AlgorithmUpdate => "ALGORITHM_UPDATE",
        }
    }

    /// Accepted parameters; required ones first.
    fn params(self) -> (&'static [&'static str], &'static [&'static str]) {
        match self {
            EventKind::PackageUpdate => (&["to"], &["via", "name"]),
            EventKind::NetJoin => (&["net", "joiner"], &[]),
            EventKind::Compromise => (&["net"], &[]),
            EventKind::Rollover => (&["net"], &["via"]),
            EventKind::Sync => (&["a", "b"], &["write"]),
            EventKind::ManualTransfer => (&["to"], &["content", "net", "name"]),
            EventKind::AlgorithmUpdate => (&[], &["to", "via", "suite_id"]),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown event kind `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSpec {
    pub id: String,
    pub role: Role,
    pub clearance: ClassificationLabel,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetSpec {
    pub id: String,
    pub lead: String,
    /// Devices that may join late.
    pub members: Vec<String>,
    /// Devices filled with the net key before the mission, besides the lead.
    pub preload: Vec<String>,
    /// Number of independent OSM shares combined into the net key.
    pub shares: usize,
    pub standby: bool,
}

impl NetSpec {
    pub fn holders(&self) -> impl Iterator<Item = &String> {
        std::iter::once(&self.lead)
            .chain(&self.preload)
            .chain(&self.members)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    pub loss: f64,
    pub latency: u64,
}

impl ChannelModel {
    pub fn default_for(c: Channel) -> Self {
        ChannelModel {
            loss: 0.0,
            latency: if c == Channel::Manual { 10 } else { 1 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimelineEvent {
    pub tick: u64,
    pub kind: EventKind,
    pub params: BTreeMap<String, String>,
}

impl TimelineEvent {
    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.get(key).map(String::as_str)
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.param(key)
            .map(|v| {
                v.split(',')
                    .filter(|s| !s.is_empty())
                    .map(str::to_string)
                    .collect()
            })
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: Option<u64>,
    pub suite_bits: u32,
    pub join_timeout: u64,
    pub max_retries: u32,
    pub nodes: Vec<NodeSpec>,
    /// `(parent, child)` edges of the KDMS tree.
    pub kdms_edges: Vec<(String, String)>,
    pub nets: Vec<NetSpec>,
    pub channels: BTreeMap<Channel, ChannelModel>,
    pub timeline: Vec<TimelineEvent>,
}

impl ScenarioConfig {
    pub fn node(&self, id: &str) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn net(&self, id: &str) -> Option<&NetSpec> {
        self.nets.iter().find(|n| n.id == id)
    }

    pub fn ids_with_role(&self, role: Role) -> impl Iterator<Item = &str> {
        self.nodes
            .iter()
            .filter(move |n| n.role == role)
            .map(|n| n.id.as_str())
    }

    pub fn channel(&self, c: Channel) -> ChannelModel {
        self.channels
            .get(&c)
            .copied()
            .unwrap_or(ChannelModel::default_for(c))
    }

    /// Canonical text. Parsing it yields an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s += "[scenario]\n";
        s += &format!("name = {}\n", self.name);
        if let Some(seed) = self.seed {
            s += &format!("seed = {seed}\n");
        }
        s += &format!("suite_bits = {}\n", self.suite_bits);
        s += &format!("join_timeout = {}\n", self.join_timeout);
        s += &format!("max_retries = {}\n", self.max_retries);
        s += "\n[nodes]\n";
        for n in &self.nodes {
            s += &format!("{} = {} {}\n", n.id, n.role, n.clearance);
        }
        if !self.kdms_edges.is_empty() {
            s += "\n[kdms]\n";
            let mut by_parent: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
            let mut order = Vec::new();
            for (p, c) in &self.kdms_edges {
                if !by_parent.contains_key(p.as_str()) {
                    order.push(p.as_str());
                }
                by_parent.entry(p).or_default().push(c);
            }
            for p in order {
                s += &format!("{p} = {}\n", by_parent[p].join(" "));
            }
        }
        if !self.nets.is_empty() {
            s += "\n[nets]\n";
            for n in &self.nets {
                s += &format!(
                    "{} = lead={} members={} preload={} shares={} standby={}\n",
                    n.id,
                    n.lead,
                    n.members.join(","),
                    n.preload.join(","),
                    n.shares,
                    if n.standby { "yes" } else { "no" }
                );
            }
        }
        if !self.channels.is_empty() {
            s += "\n[channels]\n";
            for (c, m) in &self.channels {
                s += &format!("{} = loss={} latency={}\n", c.name(), m.loss, m.latency);
            }
        }
        s += "\n[timeline]\n";
        for e in &self.timeline {
            s += &format!("event = {} {}", e.tick, e.kind);
            for (k, v) in &e.params {
                s += &format!(" {k}={v}");
            }
            s += "\n";
        }
        s
    }
}

fn split_kv(text: &str) -> Option<(&str, &str)> {
    let (k, v) = text.split_once('=')?;
    Some((k.trim(), v.trim()))
}

fn parse_pairs(words: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for w in words.split_whitespace() {
        let (k, v) = w
            .split_once('=')
            .ok_or_else(|| format!("expected key=value, found `{w}`"))?;
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(format!("parameter `{k}` given twice"));
        }
    }
    Ok(out)
}

fn csv(v: Option<&String>) -> Vec<String> {
    v.map(|s| {
        s.split(',')
            .filter(|x| !x.is_empty())
            .map(str::to_string)
            .collect()
    })
    .unwrap_or_default()
}

/// Line-numbered references checked once every section is read.
struct Refs {
    edges: Vec<(usize, String, String)>,
    nets: Vec<(usize, NetSpec)>,
    events: Vec<(usize, TimelineEvent)>,
}

/// Parses and validates scenario text. Every problem found is reported,
/// each with its line number.
pub fn validate_config(text: &str) -> Result<ScenarioConfig, Vec<ConfigError>> {
    let mut errors = Vec::new();
    let mut err = |line: usize, message: String| errors.push(ConfigError { line, message });
    let mut cfg = ScenarioConfig {
        name: "scenario".into(),
        seed: None,
        suite_bits: DEFAULT_SUITE_BITS,
        join_timeout: DEFAULT_JOIN_TIMEOUT,
        max_retries: DEFAULT_MAX_RETRIES,
        nodes: Vec::new(),
        kdms_edges: Vec::new(),
        nets: Vec::new(),
        channels: BTreeMap::new(),
        timeline: Vec::new(),
    };
    let mut refs = Refs {
        edges: Vec::new(),
        nets: Vec::new(),
        events: Vec::new(),
    };
    let mut section = String::new();
    let mut node_lines = BTreeMap::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(name) = content.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_string();
            if !["scenario", "nodes", "kdms", "nets", "channels", "timeline"]
                .contains(&section.as_str())
            {
                err(line, format!("unknown section [{section}]"));
            }
            continue;
        }
        let Some((key, value)) = split_kv(content) else {
            err(line, format!("expected `key = value`, found `{content}`"));
            continue;
        };
        match section.as_str() {
            "scenario" => {
                let num = |v: &str| {
                    v.parse::<u64>()
                        .map_err(|_| format!("`{key}` must be a non-negative integer"))
                };
                let r = match key {
                    "name" => {
                        cfg.name = value.to_string();
                        Ok(())
                    }
                    "seed" => num(value).map(|v| cfg.seed = Some(v)),
                    "suite_bits" => num(value).and_then(|v| match v {
                        32 | 512 => {
                            cfg.suite_bits = v as u32;
                            Ok(())
                        }
                        _ => Err("suite_bits must be 32 or 512".into()),
                    }),
                    "join_timeout" => num(value).and_then(|v| {
                        if v == 0 {
                            Err("join_timeout must be positive".into())
                        } else {
                            cfg.join_timeout = v;
                            Ok(())
                        }
                    }),
                    "max_retries" => num(value).map(|v| cfg.max_retries = v as u32),
                    _ => Err(format!("unknown scenario key `{key}`")),
                };
                if let Err(m) = r {
                    err(line, m);
                }
            }
            "nodes" => {
                let mut words = value.split_whitespace();
                let role = words.next().map(str::parse::<Role>);
                let clearance = words.next().map(str::parse::<ClassificationLabel>);
                match (role, clearance, words.next()) {
                    (Some(Ok(role)), c, None) => {
                        let clearance = match c {
                            None => Ok(ClassificationLabel::NATO_SECRET),
                            Some(r) => r,
                        };
                        match clearance {
                            Ok(clearance) => {
                                if node_lines.insert(key.to_string(), line).is_some() {
                                    err(line, format!("node `{key}` defined twice"));
                                } else {
                                    cfg.nodes.push(NodeSpec {
                                        id: key.to_string(),
                                        role,
                                        clearance,
                                    });
                                }
                            }
                            Err(e) => err(line, format!("node `{key}`: {e}")),
                        }
                    }
                    (Some(Err(e)), _, _) => err(line, format!("node `{key}`: {e}")),
                    _ => err(line, format!("node `{key}`: expected `ROLE [CLEARANCE]`")),
                }
            }
            "kdms" => {
                let children: Vec<_> = value.split_whitespace().collect();
                if children.is_empty() {
                    err(line, format!("kdms node `{key}` lists no children"));
                }
                for c in children {
                    refs.edges.push((line, key.to_string(), c.to_string()));
                }
            }
            "nets" => match parse_pairs(value) {
                Ok(p) => {
                    for k in p.keys() {
                        if !["lead", "members", "preload", "shares", "standby"]
                            .contains(&k.as_str())
                        {
                            err(line, format!("net `{key}`: unknown field `{k}`"));
                        }
                    }
                    let shares = match p.get("shares").map(|s| s.parse::<usize>()) {
                        None => 1,
                        Some(Ok(n)) if n >= 1 => n,
                        _ => {
                            err(
                                line,
                                format!("net `{key}`: shares must be a positive integer"),
                            );
                            1
                        }
                    };
                    let standby = match p.get("standby").map(String::as_str) {
                        None | Some("yes") => true,
                        Some("no") => false,
                        Some(o) => {
                            err(
                                line,
                                format!("net `{key}`: standby must be yes or no, found `{o}`"),
                            );
                            true
                        }
                    };
                    match p.get("lead") {
                        Some(lead) => refs.nets.push((
                            line,
                            NetSpec {
                                id: key.to_string(),
                                lead: lead.clone(),
                                members: csv(p.get("members")),
                                preload: csv(p.get("preload")),
                                shares,
                                standby,
                            },
                        )),
                        None => err(line, format!("net `{key}` needs a lead")),
                    }
                }
                Err(m) => err(line, format!("net `{key}`: {m}")),
            },
            "channels" => {
                let channel = match key.parse::<Channel>() {
                    Ok(c) => c,
                    Err(m) => {
                        err(line, m);
                        continue;
                    }
                };
                let mut model = ChannelModel::default_for(channel);
                match parse_pairs(value) {
                    Ok(p) => {
                        for (k, v) in p {
                            match k.as_str() {
                                "loss" => match v.parse::<f64>() {
                                    Ok(l) if (0.0..=1.0).contains(&l) => model.loss = l,
                                    _ => err(line, format!("channel {channel}: loss must lie in [0, 1], found `{v}`")),
                                },
                                "latency" => match v.parse::<u64>() {
                                    Ok(l) => model.latency = l,
                                    _ => err(line, format!("channel {channel}: latency must be an integer")),
                                },
                                _ => err(line, format!("channel {channel}: unknown field `{k}`")),
                            }
                        }
                    }
                    Err(m) => err(line, format!("channel {channel}: {m}")),
                }
                if channel == Channel::Manual && model.loss != 0.0 {
                    err(
                        line,
                        "manual transfer is lossless; MANUAL loss must be 0".into(),
                    );
                }
                if cfg.channels.insert(channel, model).is_some() {
                    err(line, format!("channel {channel} configured twice"));
                }
            }
            "timeline" => {
                if key != "event" {
                    err(
                        line,
                        format!("timeline lines start with `event =`, found `{key}`"),
                    );
                    continue;
                }
                let mut words = value.splitn(3, char::is_whitespace);
                let tick = words.next().and_then(|t| t.parse::<u64>().ok());
                let kind = words.next().map(str::parse::<EventKind>);
                let params = parse_pairs(words.next().unwrap_or(""));
                match (tick, kind, params) {
                    (None, _, _) => err(line, "event needs a tick".into()),
                    (_, None, _) => err(line, "event needs a kind".into()),
                    (_, Some(Err(m)), _) => err(line, m),
                    (_, _, Err(m)) => err(line, m),
                    (Some(tick), Some(Ok(kind)), Ok(params)) => refs
                        .events
                        .push((line, TimelineEvent { tick, kind, params })),
                }
            }
            _ => err(line, "line outside any section".into()),
        }
    }

    check_references(&mut cfg, refs, &node_lines, &mut err);
    if errors.is_empty() {
        Ok(cfg)
    } else {
        errors.sort_by_key(|e| e.line);
        Err(errors)
    }
}

fn check_references(
    cfg: &mut ScenarioConfig,
    refs: Refs,
    node_lines: &BTreeMap<String, usize>,
    err: &mut impl FnMut(usize, String),
) {
    let roles: BTreeMap<String, Role> = cfg.nodes.iter().map(|n| (n.id.clone(), n.role)).collect();
    let role_of = |id: &str| roles.get(id).copied();
    let rsms: Vec<_> = cfg.ids_with_role(Role::Rsms).collect();
    if rsms.len() != 1 {
        let line = rsms
            .get(1)
            .and_then(|id| node_lines.get(*id))
            .copied()
            .unwrap_or(0);
        err(
            line,
            format!("exactly one RSMS node required, found {}", rsms.len()),
        );
    }
    for n in &cfg.nodes {
        if n.role == Role::Operator {
            err(
                node_lines[&n.id],
                format!("node `{}`: operators are not network nodes", n.id),
            );
        }
    }

    let mut children = BTreeSet::new();
    for (line, p, c) in &refs.edges {
        for id in [p, c] {
            if role_of(id).is_none() {
                err(*line, format!("kdms edge names undefined node `{id}`"));
            }
        }
        if role_of(p).is_some_and(|r| r != Role::Kdms) {
            err(*line, format!("kdms parent `{p}` is not a KDMS node"));
        }
        if role_of(c).is_some_and(|r| !matches!(r, Role::Kdms | Role::Device)) {
            err(
                *line,
                format!("kdms child `{c}` must be a KDMS node or device"),
            );
        }
        if !children.insert(c.clone()) {
            err(*line, format!("`{c}` has more than one kdms parent"));
        }
        cfg.kdms_edges.push((p.clone(), c.clone()));
    }
    if !cfg.kdms_edges.is_empty() {
        let edges: Vec<(&str, &str)> = cfg
            .kdms_edges
            .iter()
            .map(|(p, c)| (p.as_str(), c.as_str()))
            .collect();
        if let Err(e) = crate::nodes::KdmsTree::from_edges(&edges) {
            err(refs.edges[0].0, format!("kdms {e}"));
        }
    }

    let is_device = |id: &str| role_of(id) == Some(Role::Device);
    let mut net_ids = BTreeSet::new();
    for (line, net) in refs.nets {
        if !net_ids.insert(net.id.clone()) {
            err(line, format!("net `{}` defined twice", net.id));
        }
        let mut seen = BTreeSet::new();
        for d in net.holders() {
            if !is_device(d) {
                err(
                    line,
                    format!("net `{}`: `{d}` is not a defined device", net.id),
                );
            }
            if !seen.insert(d.clone()) {
                err(line, format!("net `{}`: `{d}` listed twice", net.id));
            }
        }
        cfg.nets.push(net);
    }

    let mut last_tick = 0;
    for (line, e) in refs.events {
        if e.tick < last_tick {
            err(
                line,
                format!("tick {} comes after tick {last_tick}", e.tick),
            );
        }
        last_tick = last_tick.max(e.tick);
        let (required, optional) = e.kind.params();
        for r in required {
            if !e.params.contains_key(*r) {
                err(line, format!("{} needs `{r}`", e.kind));
            }
        }
        for k in e.params.keys() {
            if !required.contains(&k.as_str()) && !optional.contains(&k.as_str()) {
                err(line, format!("{} does not take `{k}`", e.kind));
            }
        }
        for d in e.list("to") {
            if !is_device(&d) {
                err(line, format!("`{d}` is not a defined device"));
            }
        }
        if let Some(v) = e.param("via") {
            let ok = matches!(v, "direct" | "kdms") || role_of(v) == Some(Role::Rnms);
            if !ok {
                err(
                    line,
                    format!("via `{v}` must be direct, kdms or an RNMS node"),
                );
            }
            if v == "kdms" && cfg.kdms_edges.is_empty() {
                err(line, "via kdms needs a [kdms] topology".into());
            }
        }
        if let Some(net) = e.param("net") {
            match cfg.nets.iter().find(|n| n.id == net) {
                None => err(line, format!("unknown net `{net}`")),
                Some(n) => {
                    if let Some(j) = e.param("joiner") {
                        if !n.holders().skip(1).any(|m| m == j) {
                            err(line, format!("`{j}` is not a member of net `{net}`"));
                        }
                    }
                }
            }
        }
        for k in ["a", "b"] {
            if let Some(id) = e.param(k) {
                if role_of(id) != Some(Role::Rnms) {
                    err(line, format!("`{id}` is not a defined RNMS node"));
                }
            }
        }
        if e.kind == EventKind::Sync && e.param("a") == e.param("b") {
            err(line, "SYNC needs two distinct peers".into());
        }
        if let Some(w) = e.param("write") {
            if !w.contains(':') {
                err(line, format!("write `{w}` must be key:value"));
            }
        }
        if let Some(c) = e.param("content") {
            match c {
                "waveform" => {}
                "standby" if e.param("net").is_some() => {}
                "standby" => err(line, "standby content needs `net`".into()),
                _ => err(line, format!("content `{c}` must be waveform or standby")),
            }
        }
        if let Some(s) = e.param("suite_id") {
            if !s.parse::<u16>().is_ok_and(|v| v > 1) {
                err(line, format!("suite_id `{s}` must be an integer above 1"));
            }
        }
        cfg.timeline.push(e);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
[scenario]
name = sample
seed = 3

[nodes]
rsms = RSMS
rnms-1 = RNMS
k0 = KDMS
lead = DEVICE
d2 = DEVICE NATO_SECRET/NATO

[kdms]
k0 = lead d2

[nets]
net-a = lead=lead members=d2 shares=2

[channels]
y = loss=0.25 latency=2

[timeline]
event = 1 NET_JOIN net=net-a joiner=d2
event = 4 PACKAGE_UPDATE to=lead,d2 via=kdms
";

    #[test]
    fn sample_parses_and_round_trips() {
        let cfg = validate_config(SAMPLE).unwrap();
        assert_eq!(cfg.nodes.len(), 5);
        assert_eq!(cfg.channel(Channel::Y).loss, 0.25);
        assert_eq!(cfg.channel(Channel::Manual).latency, 10);
        assert_eq!(validate_config(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn errors_are_aggregated_with_lines() {
        let bad = SAMPLE
            .replace("k0 = lead d2", "k0 = lead ghost")
            .replace("event = 4", "event = 0")
            .replace("loss=0.25", "loss=1.5");
        let errs = validate_config(&bad).unwrap_err();
        let text: Vec<String> = errs.iter().map(ToString::to_string).collect();
        assert!(
            text.iter()
                .any(|e| e.starts_with("line 13:") && e.contains("`ghost`")),
            "{text:?}"
        );
        assert!(
            text.iter()
                .any(|e| e.starts_with("line 19:") && e.contains("loss")),
            "{text:?}"
        );
        assert!(
            text.iter()
                .any(|e| e.starts_with("line 23:") && e.contains("comes after")),
            "{text:?}"
        );
    }

    #[test]
    fn unknown_names_are_reported() {
        let errs = validate_config("[nodes]\nrsms = RSMS\n[timeline]\nevent = 1 NET_JOIN net=nope joiner=x\nevent = 2 LAUNCH\n")
            .unwrap_err();
        assert!(errs
            .iter()
            .any(|e| e.line == 4 && e.message.contains("unknown net")));
        assert!(errs
            .iter()
            .any(|e| e.line == 5 && e.message.contains("LAUNCH")));
    }
}
