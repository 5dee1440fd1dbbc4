//! Sparse binary network with O(1) toggling and O(1) uniform edge draws.
//!
//! Edges live in a dense `edges` array; a dyad-to-slot map lets a removal
//! swap the last edge into the vacated slot. Per-vertex neighbor lists give
//! degrees and the local structure change statistics need.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::Rng;
use rustc_hash::FxHashMap;

use crate::attrs::VertexAttributes;
use crate::error::{ErgmError, Result};

/// A dyad in canonical form: `(min, max)` when undirected, `(tail, head)`
/// when directed. Vertices are 0-based.
pub type Dyad = (usize, usize);

#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    directed: bool,
    bipartite: usize,
    /// All neighbors when undirected; out-neighbors when directed.
    out_nbrs: Vec<Vec<u32>>,
    /// In-neighbors; unused when undirected.
    in_nbrs: Vec<Vec<u32>>,
    edges: Vec<(u32, u32)>,
    slot: FxHashMap<u64, usize>,
    attrs: VertexAttributes,
}

impl PartialEq for Network {
    /// Structural equality: same vertex set, flags, attributes and edge set,
    /// regardless of internal edge order.
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n
            && self.directed == other.directed
            && self.bipartite == other.bipartite
            && self.attrs == other.attrs
            && self.edges.len() == other.edges.len()
            && self.edges.iter().all(|&(i, j)| other.has_edge(i as usize, j as usize))
    }
}

impl Network {
    /// Creates an empty network. `bipartite` is the number of first-mode
    /// vertices (0 for a unipartite network).
    pub fn new(n: usize, directed: bool, bipartite: usize) -> Result<Self> {
        if n == 0 {
            return Err(ErgmError::InvalidNetwork("network needs at least one vertex".into()));
        }
        if n > u32::MAX as usize {
            return Err(ErgmError::InvalidNetwork(format!("{n} vertices is too many")));
        }
        if bipartite >= n {
            return Err(ErgmError::InvalidNetwork(format!(
                "bipartite boundary {bipartite} must be below n = {n}"
            )));
        }
        if bipartite > 0 && directed {
            return Err(ErgmError::InvalidNetwork("bipartite networks must be undirected".into()));
        }
        Ok(Network {
            n,
            directed,
            bipartite,
            out_nbrs: vec![Vec::new(); n],
            in_nbrs: if directed { vec![Vec::new(); n] } else { Vec::new() },
            edges: Vec::new(),
            slot: FxHashMap::default(),
            attrs: VertexAttributes::new(n),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Number of first-mode vertices, 0 when unipartite.
    pub fn bipartite(&self) -> usize {
        self.bipartite
    }

    pub fn attributes(&self) -> &VertexAttributes {
        &self.attrs
    }

    pub fn attributes_mut(&mut self) -> &mut VertexAttributes {
        &mut self.attrs
    }

    pub fn set_attributes(&mut self, attrs: VertexAttributes) -> Result<()> {
        if attrs.n() != self.n {
            return Err(ErgmError::Attribute(format!(
                "attributes describe {} vertices, network has {}",
                attrs.n(),
                self.n
            )));
        }
        self.attrs = attrs;
        Ok(())
    }

    /// Number of dyads that may host an edge.
    pub fn dyad_count(&self) -> u64 {
        let n = self.n as u64;
        if self.bipartite > 0 {
            let b = self.bipartite as u64;
            b * (n - b)
        } else if self.directed {
            n * (n - 1)
        } else {
            n * (n - 1) / 2
        }
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Validates a vertex pair and returns it in canonical form.
    pub fn canonical(&self, i: usize, j: usize) -> Result<Dyad> {
        for v in [i, j] {
            if v >= self.n {
                return Err(ErgmError::VertexOutOfRange { vertex: v, n: self.n });
            }
        }
        if i == j {
            return Err(ErgmError::SelfLoop(i));
        }
        if self.bipartite > 0 && ((i < self.bipartite) == (j < self.bipartite)) {
            return Err(ErgmError::SameModeDyad(i, j));
        }
        Ok(if self.directed || i < j { (i, j) } else { (j, i) })
    }

    #[inline]
    fn key(&self, i: usize, j: usize) -> u64 {
        let (a, b) = if self.directed || i < j { (i, j) } else { (j, i) };
        (a as u64) << 32 | b as u64
    }

    #[inline]
    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        i != j && self.slot.contains_key(&self.key(i, j))
    }

    /// Flips the state of dyad `(i, j)`; returns whether the edge is now present.
    pub fn toggle(&mut self, i: usize, j: usize) -> Result<bool> {
        let (i, j) = self.canonical(i, j)?;
        Ok(self.toggle_unchecked(i, j))
    }

    /// Toggle for a dyad already known to be valid.
    pub fn toggle_unchecked(&mut self, i: usize, j: usize) -> bool {
        let key = self.key(i, j);
        if let Some(slot) = self.slot.remove(&key) {
            let last = self.edges.len() - 1;
            self.edges.swap_remove(slot);
            if slot != last {
                let (a, b) = self.edges[slot];
                let moved = self.key(a as usize, b as usize);
                self.slot.insert(moved, slot);
            }
            remove_value(&mut self.out_nbrs[i], j as u32);
            if self.directed {
                remove_value(&mut self.in_nbrs[j], i as u32);
            } else {
                remove_value(&mut self.out_nbrs[j], i as u32);
            }
            false
        } else {
            let (a, b) = if self.directed || i < j { (i, j) } else { (j, i) };
            self.slot.insert(key, self.edges.len());
            self.edges.push((a as u32, b as u32));
            self.out_nbrs[i].push(j as u32);
            if self.directed {
                self.in_nbrs[j].push(i as u32);
            } else {
                self.out_nbrs[j].push(i as u32);
            }
            true
        }
    }

    /// Adds an edge; errors if it is already present.
    pub fn add_edge(&mut self, i: usize, j: usize) -> Result<()> {
        let (i, j) = self.canonical(i, j)?;
        if self.has_edge(i, j) {
            return Err(ErgmError::InvalidNetwork(format!("duplicate edge ({}, {})", i + 1, j + 1)));
        }
        self.toggle_unchecked(i, j);
        Ok(())
    }

    /// Removes every edge.
    pub fn clear_edges(&mut self) {
        self.edges.clear();
        self.slot.clear();
        self.out_nbrs.iter_mut().for_each(Vec::clear);
        self.in_nbrs.iter_mut().for_each(Vec::clear);
    }

    /// Neighbors of `v` ignoring direction is only meaningful when undirected;
    /// for directed networks this returns out-neighbors.
    #[inline]
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.out_nbrs[v]
    }

    #[inline]
    pub fn out_neighbors(&self, v: usize) -> &[u32] {
        &self.out_nbrs[v]
    }

    #[inline]
    pub fn in_neighbors(&self, v: usize) -> &[u32] {
        if self.directed {
            &self.in_nbrs[v]
        } else {
            &self.out_nbrs[v]
        }
    }

    #[inline]
    pub fn out_degree(&self, v: usize) -> usize {
        self.out_nbrs[v].len()
    }

    #[inline]
    pub fn in_degree(&self, v: usize) -> usize {
        self.in_neighbors(v).len()
    }

    /// Total degree (in + out when directed).
    #[inline]
    pub fn degree(&self, v: usize) -> usize {
        if self.directed {
            self.out_nbrs[v].len() + self.in_nbrs[v].len()
        } else {
            self.out_nbrs[v].len()
        }
    }

    /// Current edges in canonical form, in internal order.
    pub fn edges(&self) -> impl Iterator<Item = Dyad> + '_ {
        self.edges.iter().map(|&(a, b)| (a as usize, b as usize))
    }

    /// Edges sorted lexicographically.
    pub fn sorted_edges(&self) -> Vec<Dyad> {
        let mut e: Vec<Dyad> = self.edges().collect();
        e.sort_unstable();
        e
    }

    /// Edge at a given position of the internal index.
    pub fn edge_at(&self, slot: usize) -> Dyad {
        let (a, b) = self.edges[slot];
        (a as usize, b as usize)
    }

    /// Draws a current edge uniformly at random.
    pub fn random_edge<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Dyad> {
        if self.edges.is_empty() {
            return Err(ErgmError::EmptyNetwork);
        }
        Ok(self.edge_at(rng.random_range(0..self.edges.len())))
    }

    /// Draws a free dyad uniformly at random.
    pub fn random_dyad<R: Rng + ?Sized>(&self, rng: &mut R) -> Dyad {
        if self.bipartite > 0 {
            let i = rng.random_range(0..self.bipartite);
            let j = rng.random_range(self.bipartite..self.n);
            return (i, j);
        }
        let i = rng.random_range(0..self.n);
        let mut j = rng.random_range(0..self.n - 1);
        if j >= i {
            j += 1;
        }
        if self.directed || i < j {
            (i, j)
        } else {
            (j, i)
        }
    }

    /// Every free dyad in canonical form, lexicographic order.
    pub fn dyads(&self) -> impl Iterator<Item = Dyad> + '_ {
        let n = self.n;
        let b = self.bipartite;
        let directed = self.directed;
        (0..n).flat_map(move |i| {
            let range = if b > 0 {
                if i < b {
                    b..n
                } else {
                    n..n
                }
            } else if directed {
                0..n
            } else {
                i + 1..n
            };
            range.filter(move |&j| j != i).map(move |j| (i, j))
        })
    }

    /// Renders the network in the text edge-list format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "%n {}", self.n);
        let _ = writeln!(s, "%directed {}", self.directed as u8);
        let _ = writeln!(s, "%bipartite {}", self.bipartite);
        for (i, j) in self.sorted_edges() {
            let _ = writeln!(s, "{} {}", i + 1, j + 1);
        }
        s
    }

    /// Parses the text edge-list format. `source` names the input in errors.
    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let mut n = None;
        let mut directed = false;
        let mut bipartite = 0usize;
        let mut net: Option<Network> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let fmt = |msg: String| ErgmError::Format { path: source.to_string(), line, msg };
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(rest) = trimmed.strip_prefix('%') {
                if net.is_some() {
                    return Err(fmt("header line after the first edge".into()));
                }
                let mut parts = rest.split_whitespace();
                let key = parts.next().unwrap_or("");
                let value: usize = parts
                    .next()
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| fmt(format!("malformed header '{trimmed}'")))?;
                match key {
                    "n" => n = Some(value),
                    "directed" if value <= 1 => directed = value == 1,
                    "bipartite" => bipartite = value,
                    _ => return Err(fmt(format!("malformed header '{trimmed}'"))),
                }
                continue;
            }
            if net.is_none() {
                let count = n.ok_or_else(|| fmt("missing '%n' header".into()))?;
                net = Some(Network::new(count, directed, bipartite).map_err(|e| fmt(e.to_string()))?);
            }
            let g = net.as_mut().unwrap();
            let ids: Vec<usize> = trimmed
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| fmt(format!("malformed edge line '{trimmed}'")))?;
            if ids.len() != 2 {
                return Err(fmt(format!("expected 'tail head', got '{trimmed}'")));
            }
            let (t, h) = (ids[0], ids[1]);
            if t == 0 || h == 0 || t > g.n || h > g.n {
                return Err(fmt(format!("vertex id out of range in '{trimmed}'")));
            }
            g.add_edge(t - 1, h - 1).map_err(|e| fmt(e.to_string()))?;
        }
        match net {
            Some(g) => Ok(g),
            None => {
                let count = n.ok_or_else(|| ErgmError::Format {
                    path: source.to_string(),
                    line: 0,
                    msg: "missing '%n' header".into(),
                })?;
                Network::new(count, directed, bipartite)
            }
        }
    }

    /// Reads a network file, and optionally an attribute CSV.
    pub fn read(path: &Path, attrs: Option<&Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let mut net = Network::from_text(&text, &path.display().to_string())?;
        if let Some(a) = attrs {
            net.attrs = VertexAttributes::read_csv(a, net.n)?;
        }
        Ok(net)
    }

    /// Writes the network file, and optionally the attribute CSV.
    pub fn write(&self, path: &Path, attrs: Option<&Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        if let Some(a) = attrs {
            self.attrs.write_csv(a)?;
        }
        Ok(())
    }
}

#[inline]
fn remove_value(v: &mut Vec<u32>, x: u32) {
    if let Some(pos) = v.iter().position(|&y| y == x) {
        v.swap_remove(pos);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn consistent(net: &Network) {
        let mut deg_sum = 0;
        for v in 0..net.n() {
            deg_sum += net.out_degree(v);
            for &u in net.out_neighbors(v) {
                assert!(net.has_edge(v, u as usize));
            }
        }
        if net.is_directed() {
            assert_eq!(deg_sum, net.edge_count());
        } else {
            assert_eq!(deg_sum, 2 * net.edge_count());
        }
        for (slot, (i, j)) in net.edges().enumerate() {
            assert_eq!(net.slot[&net.key(i, j)], slot);
            assert_ne!(i, j);
            if net.bipartite() > 0 {
                assert!(i < net.bipartite() && j >= net.bipartite());
            }
        }
    }

    #[test]
    fn free_dyad_counts() {
        assert_eq!(Network::new(10, false, 0).unwrap().dyad_count(), 45);
        assert_eq!(Network::new(4, true, 0).unwrap().dyad_count(), 12);
        assert_eq!(Network::new(5, false, 2).unwrap().dyad_count(), 6);
        for (n, d, b) in [(10, false, 0), (4, true, 0), (5, false, 2)] {
            let g = Network::new(n, d, b).unwrap();
            assert_eq!(g.dyads().count() as u64, g.dyad_count());
        }
    }

    #[test]
    fn invalid_construction() {
        assert!(Network::new(0, false, 0).is_err());
        assert!(Network::new(5, false, 5).is_err());
        assert!(Network::new(5, true, 2).is_err());
    }

    #[test]
    fn toggle_is_an_involution() {
        let mut g = Network::new(5, false, 0).unwrap();
        assert!(g.toggle(1, 3).unwrap());
        assert_eq!(g.edge_count(), 1);
        assert!(g.has_edge(3, 1));
        assert!(!g.toggle(3, 1).unwrap());
        assert_eq!(g.edge_count(), 0);
        assert!(matches!(g.toggle(2, 2), Err(ErgmError::SelfLoop(2))));
    }

    #[test]
    fn bipartite_rejects_same_mode() {
        let mut g = Network::new(5, false, 2).unwrap();
        assert!(matches!(g.toggle(0, 1), Err(ErgmError::SameModeDyad(..))));
        assert!(matches!(g.toggle(3, 4), Err(ErgmError::SameModeDyad(..))));
        assert!(g.toggle(4, 1).unwrap());
        assert_eq!(g.edge_at(0), (1, 4));
    }

    #[test]
    fn random_toggles_replayed_in_reverse_restore_empty() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for directed in [false, true] {
            let mut g = Network::new(30, directed, 0).unwrap();
            let seq: Vec<Dyad> = (0..10_000).map(|_| g.random_dyad(&mut rng)).collect();
            for &(i, j) in &seq {
                g.toggle(i, j).unwrap();
            }
            consistent(&g);
            for &(i, j) in seq.iter().rev() {
                g.toggle(i, j).unwrap();
            }
            assert_eq!(g.edge_count(), 0);
            consistent(&g);
        }
    }

    #[test]
    fn random_edge_single_and_removed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut g = Network::new(6, false, 0).unwrap();
        assert!(matches!(g.random_edge(&mut rng), Err(ErgmError::EmptyNetwork)));
        g.toggle(2, 4).unwrap();
        for _ in 0..100 {
            assert_eq!(g.random_edge(&mut rng).unwrap(), (2, 4));
        }
        g.toggle(0, 1).unwrap();
        g.toggle(2, 4).unwrap();
        for _ in 0..100 {
            assert_eq!(g.random_edge(&mut rng).unwrap(), (0, 1));
        }
    }

    #[test]
    fn random_edge_is_uniform() {
        // 3 edges, 3e5 draws, each count within 4 sigma of n/3.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut g = Network::new(6, false, 0).unwrap();
        for (i, j) in [(0, 1), (2, 3), (4, 5)] {
            g.toggle(i, j).unwrap();
        }
        let draws = 300_000usize;
        let mut counts = FxHashMap::default();
        for _ in 0..draws {
            *counts.entry(g.random_edge(&mut rng).unwrap()).or_insert(0usize) += 1;
        }
        let p = 1.0 / 3.0;
        let sigma = (draws as f64 * p * (1.0 - p)).sqrt();
        for c in counts.values() {
            assert!((*c as f64 - draws as f64 * p).abs() < 4.0 * sigma);
        }
    }

    #[test]
    fn text_round_trip_and_errors() {
        let g = Network::new(10, false, 0).unwrap();
        assert_eq!(Network::from_text(&g.to_text(), "t").unwrap(), g);

        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut h = Network::new(40, true, 0).unwrap();
        while h.edge_count() < 100 {
            let (i, j) = h.random_dyad(&mut rng);
            if !h.has_edge(i, j) {
                h.toggle(i, j).unwrap();
            }
        }
        let back = Network::from_text(&h.to_text(), "t").unwrap();
        assert_eq!(back.sorted_edges(), h.sorted_edges());

        let bad = "%n 5\n%directed 0\n%bipartite 0\n3 3\n";
        assert!(matches!(Network::from_text(bad, "t"), Err(ErgmError::Format { line: 4, .. })));
        let dup = "%n 5\n2 3\n3 2\n";
        assert!(Network::from_text(dup, "t").is_err());
        let range = "%n 5\n2 6\n";
        assert!(Network::from_text(range, "t").is_err());
        let header = "%n x\n";
        assert!(Network::from_text(header, "t").is_err());
    }

    #[test]
    fn file_round_trip_with_attributes() {
        let dir = tempfile::tempdir().unwrap();
        let mut g = Network::new(4, false, 0).unwrap();
        g.toggle(0, 3).unwrap();
        g.attributes_mut().insert_categorical("sex", &["M", "F", "M", "F"]).unwrap();
        let (np, ap) = (dir.path().join("g.net"), dir.path().join("g.csv"));
        g.write(&np, Some(&ap)).unwrap();
        assert_eq!(Network::read(&np, Some(&ap)).unwrap(), g);
    }
}
