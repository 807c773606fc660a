//! Key distribution tree. KDMS nodes relay sealed parcels and never hold
//! anything they could open.

use std::collections::{BTreeMap, BTreeSet};

use super::NodeError;

#[derive(Debug, Clone, PartialEq, Eq, Default)]
struct KdmsNode {
    parent: Option<String>,
    children: Vec<String>,
    received: Vec<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KdmsTree {
    nodes: BTreeMap<String, KdmsNode>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeliveryTrace {
    /// `(from, to)` for every relay step, in forwarding order.
    pub hops: Vec<(String, String)>,
    pub delivered_to: Vec<String>,
}

impl KdmsTree {
    /// Builds a tree from `(parent, child)` edges and checks it.
    pub fn from_edges(edges: &[(&str, &str)]) -> Result<Self, NodeError> {
        let mut t = KdmsTree::default();
        for (p, c) in edges {
            t.nodes.entry(p.to_string()).or_default();
            let child = t.nodes.entry(c.to_string()).or_default();
            if let Some(old) = &child.parent {
                return Err(NodeError::Topology(format!(
                    "{c} has parents {old} and {p}"
                )));
            }
            child.parent = Some(p.to_string());
            t.nodes
                .get_mut(*p)
                .expect("inserted")
                .children
                .push(c.to_string());
        }
        t.validate_topology()?;
        Ok(t)
    }

    pub fn root(&self) -> Option<&str> {
        self.nodes
            .iter()
            .find(|(_, n)| n.parent.is_none())
            .map(|(id, _)| id.as_str())
    }

    pub fn leaves(&self) -> Vec<&str> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.children.is_empty())
            .map(|(id, _)| id.as_str())
            .collect()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.nodes.contains_key(id)
    }

    /// Parcels that reached `id`.
    pub fn received(&self, id: &str) -> &[Vec<u8>] {
        self.nodes.get(id).map_or(&[], |n| n.received.as_slice())
    }

    /// One root, parent and child links agree, no cycles, and every node
    /// reachable from the root.
    pub fn validate_topology(&self) -> Result<(), NodeError> {
        let roots: Vec<_> = self
            .nodes
            .iter()
            .filter(|(_, n)| n.parent.is_none())
            .collect();
        let [(root, _)] = roots.as_slice() else {
            return Err(NodeError::Topology(format!("{} roots", roots.len())));
        };
        for (id, n) in &self.nodes {
            for c in &n.children {
                let child = self
                    .nodes
                    .get(c)
                    .ok_or_else(|| NodeError::Topology(format!("{id} lists missing child {c}")))?;
                if child.parent.as_deref() != Some(id.as_str()) {
                    return Err(NodeError::Topology(format!(
                        "{c} does not point back to {id}"
                    )));
                }
            }
        }
        let mut seen = BTreeSet::new();
        let mut stack = vec![root.as_str()];
        while let Some(id) = stack.pop() {
            if !seen.insert(id) {
                return Err(NodeError::Topology(format!("cycle through {id}")));
            }
            stack.extend(self.nodes[id].children.iter().map(String::as_str));
        }
        if seen.len() != self.nodes.len() {
            return Err(NodeError::Topology("unreachable nodes".into()));
        }
        Ok(())
    }

    fn path_down(&self, from: &str, to: &str) -> Result<Vec<String>, NodeError> {
        if !self.contains(to) {
            return Err(NodeError::UnknownNode(to.to_string()));
        }
        let mut path = vec![to.to_string()];
        let mut cur = to;
        while cur != from {
            cur = self.nodes[cur]
                .parent
                .as_deref()
                .ok_or_else(|| NodeError::NotDescendant {
                    from: from.to_string(),
                    to: to.to_string(),
                })?;
            path.push(cur.to_string());
        }
        path.reverse();
        Ok(path)
    }
}

/// Relays `parcel` from `at` down to each target. Shared path segments are
/// traversed once.
pub fn kdms_forward(
    tree: &mut KdmsTree,
    parcel: &[u8],
    at: &str,
    targets: &[&str],
) -> Result<DeliveryTrace, NodeError> {
    if !tree.contains(at) {
        return Err(NodeError::UnknownNode(at.to_string()));
    }
    let paths = targets
        .iter()
        .map(|t| tree.path_down(at, t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut hops = Vec::new();
    let mut walked = BTreeSet::new();
    for path in &paths {
        for w in path.windows(2) {
            if walked.insert((w[0].clone(), w[1].clone())) {
                hops.push((w[0].clone(), w[1].clone()));
            }
        }
    }
    let mut delivered_to = Vec::new();
    for t in targets {
        if !delivered_to.iter().any(|d| d == t) {
            tree.nodes
                .get_mut(*t)
                .expect("path found")
                .received
                .push(parcel.to_vec());
            delivered_to.push(t.to_string());
        }
    }
    Ok(DeliveryTrace { hops, delivered_to })
}
