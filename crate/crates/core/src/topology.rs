//! Network graph, data-center placement and candidate-path computation.
//!
//! The graph is directed. Node and link identifiers are the ones given in the
//! topology document; internally every algorithm works on dense indices.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Bundled Euro28 topology document.
pub const EURO28_TOML: &str = include_str!("../data/euro28.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LinkId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for LinkId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum TopologyError {
    #[error("malformed topology document: {0}")]
    Malformed(String),
    #[error("link {link} references unknown node {node}")]
    UnknownNode { link: LinkId, node: NodeId },
    #[error("link {0} has non-positive length {1} km")]
    NonPositiveLength(LinkId, f64),
    #[error("duplicate {kind} id {id}")]
    Duplicate { kind: &'static str, id: u32 },
    #[error("unknown node {0}")]
    NoSuchNode(NodeId),
    #[error("unknown link {0}")]
    NoSuchLink(LinkId),
    #[error("source and destination must differ (both {0})")]
    SameEndpoints(NodeId),
    #[error("k must be at least 1")]
    ZeroK,
    #[error("need at least 2 data centers, got {0}")]
    TooFewDcs(usize),
    #[error("no working data center reachable from node {0}")]
    NoDcReachable(NodeId),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub population_weight: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Link {
    pub id: LinkId,
    pub src: NodeId,
    pub dst: NodeId,
    pub length_km: f64,
}

#[derive(Deserialize)]
struct TopologyDocument {
    #[serde(default)]
    #[allow(dead_code)]
    format_version: Option<u32>,
    #[serde(default)]
    nodes: Vec<Node>,
    #[serde(default)]
    links: Vec<Link>,
}

/// A loopless route through the topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePath {
    pub links: Vec<LinkId>,
    pub length_km: f64,
}

impl CandidatePath {
    pub fn hops(&self) -> usize {
        self.links.len()
    }
}

/// Immutable directed graph with km-weighted links and a data-center set.
#[derive(Debug, Clone)]
pub struct Topology {
    nodes: Vec<Node>,
    links: Vec<Link>,
    node_index: HashMap<NodeId, usize>,
    link_index: HashMap<LinkId, usize>,
    // outgoing link indices per node index, sorted by link id
    out_links: Vec<Vec<usize>>,
    in_links: Vec<Vec<usize>>,
    dc_nodes: BTreeSet<NodeId>,
}

impl Topology {
    /// Parses and validates a TOML topology document. Data centers are left
    /// empty; call [`Topology::with_dcs`] or [`Topology::with_default_dcs`].
    pub fn from_toml_str(doc: &str) -> Result<Self, TopologyError> {
        let parsed: TopologyDocument = toml::from_str(doc).map_err(|e| TopologyError::Malformed(e.to_string()))?;
        Self::new(parsed.nodes, parsed.links)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, TopologyError> {
        let path = path.as_ref();
        let doc = std::fs::read_to_string(path)
            .map_err(|source| TopologyError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&doc)
    }

    pub fn euro28() -> Self {
        Self::from_toml_str(EURO28_TOML).expect("bundled euro28 document is valid")
    }

    pub fn new(nodes: Vec<Node>, links: Vec<Link>) -> Result<Self, TopologyError> {
        if nodes.is_empty() {
            return Err(TopologyError::Malformed("no nodes".into()));
        }
        let mut node_index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if !(n.population_weight.is_finite() && n.population_weight >= 0.0) {
                return Err(TopologyError::Malformed(format!(
                    "node {} has invalid population_weight {}",
                    n.id, n.population_weight
                )));
            }
            if node_index.insert(n.id, i).is_some() {
                return Err(TopologyError::Duplicate { kind: "node", id: n.id.0 });
            }
        }
        let mut link_index = HashMap::with_capacity(links.len());
        let mut out_links = vec![Vec::new(); nodes.len()];
        let mut in_links = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            let src = *node_index.get(&l.src).ok_or(TopologyError::UnknownNode { link: l.id, node: l.src })?;
            let dst = *node_index.get(&l.dst).ok_or(TopologyError::UnknownNode { link: l.id, node: l.dst })?;
            if !(l.length_km.is_finite() && l.length_km > 0.0) {
                return Err(TopologyError::NonPositiveLength(l.id, l.length_km));
            }
            if l.src == l.dst {
                return Err(TopologyError::SameEndpoints(l.src));
            }
            if link_index.insert(l.id, i).is_some() {
                return Err(TopologyError::Duplicate { kind: "link", id: l.id.0 });
            }
            out_links[src].push(i);
            in_links[dst].push(i);
        }
        for adj in out_links.iter_mut().chain(in_links.iter_mut()) {
            adj.sort_by_key(|&i| links[i].id);
        }
        Ok(Self { nodes, links, node_index, link_index, out_links, in_links, dc_nodes: BTreeSet::new() })
    }

    /// Places data centers at the given nodes.
    pub fn with_dcs(mut self, dcs: impl IntoIterator<Item = NodeId>) -> Result<Self, TopologyError> {
        let set: BTreeSet<NodeId> = dcs.into_iter().collect();
        for n in &set {
            if !self.node_index.contains_key(n) {
                return Err(TopologyError::NoSuchNode(*n));
            }
        }
        if set.len() < 2 {
            return Err(TopologyError::TooFewDcs(set.len()));
        }
        self.dc_nodes = set;
        Ok(self)
    }

    /// Places `r` data centers at the highest-degree nodes (in + out degree),
    /// ties broken by lowest node id.
    pub fn with_default_dcs(self, r: usize) -> Result<Self, TopologyError> {
        let mut ranked: Vec<(usize, NodeId)> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (self.out_links[i].len() + self.in_links[i].len(), n.id))
            .collect();
        ranked.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        let chosen: Vec<NodeId> = ranked.into_iter().take(r).map(|(_, id)| id).collect();
        self.with_dcs(chosen)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn dc_nodes(&self) -> &BTreeSet<NodeId> {
        &self.dc_nodes
    }

    pub fn is_dc(&self, n: NodeId) -> bool {
        self.dc_nodes.contains(&n)
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, TopologyError> {
        self.node_index.get(&id).map(|&i| &self.nodes[i]).ok_or(TopologyError::NoSuchNode(id))
    }

    pub fn link(&self, id: LinkId) -> Result<&Link, TopologyError> {
        self.link_position(id).map(|i| &self.links[i])
    }

    /// Dense index of a link, stable for the lifetime of the topology.
    pub fn link_position(&self, id: LinkId) -> Result<usize, TopologyError> {
        self.link_index.get(&id).copied().ok_or(TopologyError::NoSuchLink(id))
    }

    pub fn node_position(&self, id: NodeId) -> Result<usize, TopologyError> {
        self.node_index.get(&id).copied().ok_or(TopologyError::NoSuchNode(id))
    }

    pub fn path_length(&self, links: &[LinkId]) -> Result<f64, TopologyError> {
        links.iter().map(|&l| self.link(l).map(|l| l.length_km)).sum()
    }

    /// Shortest km distances from `src` to every node, skipping failed links.
    /// Unreachable nodes get `f64::INFINITY`.
    pub fn distances_from(&self, src: NodeId, failed: &BTreeSet<LinkId>) -> Result<Vec<f64>, TopologyError> {
        let s = self.node_position(src)?;
        Ok(self.dijkstra(s, failed, Direction::Forward))
    }

    fn dijkstra(&self, root: usize, failed: &BTreeSet<LinkId>, dir: Direction) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[root] = 0.0;
        heap.push(HeapItem { cost: 0.0, node: root });
        while let Some(HeapItem { cost, node }) = heap.pop() {
            if cost > dist[node] {
                continue;
            }
            let adj = match dir {
                Direction::Forward => &self.out_links[node],
                Direction::Reverse => &self.in_links[node],
            };
            for &li in adj {
                let link = &self.links[li];
                if failed.contains(&link.id) {
                    continue;
                }
                let next = match dir {
                    Direction::Forward => self.node_index[&link.dst],
                    Direction::Reverse => self.node_index[&link.src],
                };
                let nc = cost + link.length_km;
                if nc < dist[next] {
                    dist[next] = nc;
                    heap.push(HeapItem { cost: nc, node: next });
                }
            }
        }
        dist
    }

    /// True when every node can reach every other node over surviving links.
    pub fn is_strongly_connected(&self, failed: &BTreeSet<LinkId>) -> bool {
        let fwd = self.dijkstra(0, failed, Direction::Forward);
        let rev = self.dijkstra(0, failed, Direction::Reverse);
        fwd.iter().chain(rev.iter()).all(|d| d.is_finite())
    }

    /// Up to `k` loopless paths from `s` to `d` avoiding `failed`, ordered by
    /// km length and then by the lexicographic sequence of link ids.
    ///
    /// Best-first search over partial paths keyed by (length so far plus the
    /// exact remaining distance, link-id sequence). The key never decreases
    /// along an extension, so complete paths pop out in the required order.
    pub fn k_shortest_paths(
        &self,
        s: NodeId,
        d: NodeId,
        k: usize,
        failed: &BTreeSet<LinkId>,
    ) -> Result<Vec<CandidatePath>, TopologyError> {
        if s == d {
            return Err(TopologyError::SameEndpoints(s));
        }
        if k == 0 {
            return Err(TopologyError::ZeroK);
        }
        let si = self.node_position(s)?;
        let di = self.node_position(d)?;
        let to_target = self.dijkstra(di, failed, Direction::Reverse);
        if !to_target[si].is_finite() {
            return Ok(Vec::new());
        }

        let mut arena: Vec<Partial> = vec![Partial { node: si, parent: None, g: 0.0 }];
        let mut heap = BinaryHeap::new();
        heap.push(Frontier { f: to_target[si], ids: Vec::new(), slot: 0 });
        let mut out = Vec::with_capacity(k);
        let mut on_path = vec![false; self.nodes.len()];

        while let Some(Frontier { ids, slot, .. }) = heap.pop() {
            let cur = arena[slot];
            if cur.node == di {
                out.push(CandidatePath { links: ids, length_km: cur.g });
                if out.len() == k {
                    break;
                }
                continue;
            }
            // mark nodes on this partial path
            let mut walk = Some(slot);
            while let Some(w) = walk {
                on_path[arena[w].node] = true;
                walk = arena[w].parent;
            }
            for &li in &self.out_links[cur.node] {
                let link = &self.links[li];
                if failed.contains(&link.id) {
                    continue;
                }
                let next = self.node_index[&link.dst];
                if on_path[next] || !to_target[next].is_finite() {
                    continue;
                }
                let g = cur.g + link.length_km;
                let mut child_ids = ids.clone();
                child_ids.push(link.id);
                arena.push(Partial { node: next, parent: Some(slot), g });
                heap.push(Frontier { f: g + to_target[next], ids: child_ids, slot: arena.len() - 1 });
            }
            let mut walk = Some(slot);
            while let Some(w) = walk {
                on_path[arena[w].node] = false;
                walk = arena[w].parent;
            }
        }
        Ok(out)
    }

    /// The data center closest (shortest km distance over surviving links) to
    /// `client`. Ties go to the lowest node id.
    pub fn nearest_dc(&self, client: NodeId, failed: &BTreeSet<LinkId>) -> Result<NodeId, TopologyError> {
        self.nearest_dc_with_distance(client, failed).map(|(n, _)| n)
    }

    pub fn nearest_dc_with_distance(
        &self,
        client: NodeId,
        failed: &BTreeSet<LinkId>,
    ) -> Result<(NodeId, f64), TopologyError> {
        let dist = self.distances_from(client, failed)?;
        let mut best: Option<(NodeId, f64)> = None;
        for &dc in &self.dc_nodes {
            let dd = dist[self.node_index[&dc]];
            if !dd.is_finite() {
                continue;
            }
            // dc_nodes iterates in ascending id order, so strict < keeps the lowest id on ties
            if best.is_none_or(|(_, b)| dd < b) {
                best = Some((dc, dd));
            }
        }
        best.ok_or(TopologyError::NoDcReachable(client))
    }
}

#[derive(Clone, Copy)]
enum Direction {
    Forward,
    Reverse,
}

#[derive(Clone, Copy)]
struct Partial {
    node: usize,
    parent: Option<usize>,
    g: f64,
}

struct Frontier {
    f: f64,
    ids: Vec<LinkId>,
    slot: usize,
}

impl PartialEq for Frontier {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Frontier {}
impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Frontier {
    // reversed: BinaryHeap is a max-heap
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.ids.cmp(&self.ids))
    }
}

#[derive(PartialEq)]
struct HeapItem {
    cost: f64,
    node: usize,
}
impl Eq for HeapItem {}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.cost.total_cmp(&self.cost).then_with(|| other.node.cmp(&self.node))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn node(id: u32) -> Node {
        Node { id: NodeId(id), name: format!("n{id}"), population_weight: 1.0 }
    }

    pub(crate) fn link(id: u32, src: u32, dst: u32, km: f64) -> Link {
        Link { id: LinkId(id), src: NodeId(src), dst: NodeId(dst), length_km: km }
    }

    fn triangle() -> Topology {
        // A=0, B=1, C=2
        Topology::new(vec![node(0), node(1), node(2)], vec![link(0, 0, 1, 1.0), link(1, 1, 2, 1.0), link(2, 0, 2, 3.0)])
            .unwrap()
    }

    #[test]
    fn euro28_shape() {
        let t = Topology::euro28();
        assert_eq!(t.node_count(), 28);
        assert_eq!(t.link_count(), 82);
        assert!(t.links().iter().all(|l| l.length_km > 0.0));
        assert!(t.is_strongly_connected(&BTreeSet::new()));
    }

    #[test]
    fn euro28_survives_any_single_failure() {
        let t = Topology::euro28();
        for l in t.links() {
            let failed = BTreeSet::from([l.id]);
            assert!(t.is_strongly_connected(&failed), "link {} is a bridge", l.id);
        }
    }

    #[test]
    fn minimal_document() {
        let doc = r#"
            [[nodes]]
            id = 0
            name = "A"
            population_weight = 1.0
            [[nodes]]
            id = 1
            name = "B"
            population_weight = 2.0
            [[links]]
            id = 0
            src = 0
            dst = 1
            length_km = 100.0
        "#;
        let t = Topology::from_toml_str(doc).unwrap();
        assert_eq!(t.link_count(), 1);
    }

    #[test]
    fn dangling_endpoint_rejected() {
        let doc = r#"
            [[nodes]]
            id = 0
            name = "A"
            population_weight = 1.0
            [[links]]
            id = 0
            src = 0
            dst = 2
            length_km = 10.0
        "#;
        assert!(matches!(Topology::from_toml_str(doc), Err(TopologyError::UnknownNode { node: NodeId(2), .. })));
    }

    #[test]
    fn non_positive_length_rejected() {
        let r = Topology::new(vec![node(0), node(1)], vec![link(0, 0, 1, 0.0)]);
        assert!(matches!(r, Err(TopologyError::NonPositiveLength(..))));
        let r = Topology::new(vec![node(0), node(1)], vec![link(0, 0, 1, -3.0)]);
        assert!(matches!(r, Err(TopologyError::NonPositiveLength(..))));
    }

    #[test]
    fn malformed_document_rejected() {
        assert!(matches!(Topology::from_toml_str("nodes = 3"), Err(TopologyError::Malformed(_))));
    }

    #[test]
    fn triangle_two_paths() {
        let t = triangle();
        let paths = t.k_shortest_paths(NodeId(0), NodeId(2), 2, &BTreeSet::new()).unwrap();
        assert_eq!(paths.len(), 2);
        assert_eq!(paths[0].links, vec![LinkId(0), LinkId(1)]);
        assert_eq!(paths[0].length_km, 2.0);
        assert_eq!(paths[1].links, vec![LinkId(2)]);
        assert_eq!(paths[1].length_km, 3.0);
    }

    #[test]
    fn same_endpoints_is_error() {
        let t = triangle();
        assert!(matches!(
            t.k_shortest_paths(NodeId(0), NodeId(0), 1, &BTreeSet::new()),
            Err(TopologyError::SameEndpoints(_))
        ));
    }

    #[test]
    fn k_larger_than_available() {
        let t = Topology::new(vec![node(0), node(1)], vec![link(0, 0, 1, 5.0)]).unwrap();
        let paths = t.k_shortest_paths(NodeId(0), NodeId(1), 5, &BTreeSet::new()).unwrap();
        assert_eq!(paths.len(), 1);
    }

    #[test]
    fn disconnected_gives_empty() {
        let t = triangle();
        let failed = BTreeSet::from([LinkId(1), LinkId(2)]);
        assert!(t.k_shortest_paths(NodeId(0), NodeId(2), 3, &failed).unwrap().is_empty());
    }

    fn dc_star() -> Topology {
        // client 0; DC-a = 1 at 5 km, DC-b = 2 at 7 km; alternate route to 1 via 2
        Topology::new(vec![node(0), node(1), node(2)], vec![link(0, 0, 1, 5.0), link(1, 0, 2, 7.0), link(2, 2, 1, 4.0)])
            .unwrap()
            .with_dcs([NodeId(1), NodeId(2)])
            .unwrap()
    }

    #[test]
    fn nearest_dc_strict_minimum() {
        let t = dc_star();
        assert_eq!(t.nearest_dc(NodeId(0), &BTreeSet::new()).unwrap(), NodeId(1));
    }

    #[test]
    fn nearest_dc_after_failure() {
        let t = dc_star();
        // every path to DC-a now goes 0->2->1 (11 km), DC-b is 7 km
        let failed = BTreeSet::from([LinkId(0)]);
        assert_eq!(t.nearest_dc(NodeId(0), &failed).unwrap(), NodeId(2));
    }

    #[test]
    fn nearest_dc_unreachable() {
        let t = dc_star();
        let failed = BTreeSet::from([LinkId(0), LinkId(1)]);
        assert!(matches!(t.nearest_dc(NodeId(0), &failed), Err(TopologyError::NoDcReachable(NodeId(0)))));
    }

    #[test]
    fn nearest_dc_tie_goes_to_lowest_id() {
        let t = Topology::new(vec![node(0), node(3), node(5)], vec![link(0, 0, 5, 4.0), link(1, 0, 3, 4.0)])
            .unwrap()
            .with_dcs([NodeId(3), NodeId(5)])
            .unwrap();
        assert_eq!(t.nearest_dc(NodeId(0), &BTreeSet::new()).unwrap(), NodeId(3));
    }

    #[test]
    fn default_dcs_pick_highest_degree() {
        let t = Topology::euro28().with_default_dcs(7).unwrap();
        assert_eq!(t.dc_nodes().len(), 7);
        let too_few = Topology::euro28().with_default_dcs(1);
        assert!(matches!(too_few, Err(TopologyError::TooFewDcs(1))));
    }
}
