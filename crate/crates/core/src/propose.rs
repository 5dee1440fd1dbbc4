//! Metropolis–Hastings proposals: uniform dyad, TNT, and BDStratTNT.
//!
//! Every proposal reports `log_q_ratio = log q(y | y') − log q(y' | y)` for
//! the toggle y → y'. Uniform and TNT handle `bd`/`blocks` by returning no
//! proposal for an infeasible toggle (the step is then a rejection).
//! BDStratTNT never names an infeasible toggle.
//!
//! BDStratTNT state. Vertices are grouped into types (strat level × blocks
//! level × bipartite mode). A stratum is a pair of strat levels; it owns the
//! unblocked type pairs that map to it. A dyad is proposable iff it is an
//! edge, or its endpoints are both below their degree caps ("unsaturated").
//! For stratum s with E_s edges, U_s unsaturated pairs and F_s edges whose
//! endpoints are both unsaturated, the proposable count is
//! D_s = E_s + U_s − F_s. A stratum is drawn with probability w_s / W over
//! strata with D_s > 0; inside it, with E_s > 0, an edge is drawn with
//! probability 1/2 and otherwise a proposable dyad uniformly. So
//!
//! q(d | y) = (w_s / W) · (1/(2 E_s)·[d ∈ E] + 1/(2 D_s))    (E_s > 0)
//! q(d | y) = (w_s / W) / D_s                                 (E_s = 0)
//!
//! The reverse probability is evaluated on the counts after the toggle,
//! which can change through saturation of either endpoint.

use rand::Rng;
use rustc_hash::FxHashMap;

use crate::error::{ErgmError, Result};
use crate::formula::{CapSpec, ConstraintSpec, LevelPairs, StratWeights};
use crate::network::Network;

/// A proposed toggle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub i: usize,
    pub j: usize,
    pub log_q_ratio: f64,
}

/// Which proposal family to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Uniform,
    Tnt,
    BdStrat,
    /// BDStratTNT when the constraints call for it, otherwise TNT.
    Auto,
}

impl std::str::FromStr for Method {
    type Err = ErgmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(Method::Uniform),
            "tnt" => Ok(Method::Tnt),
            "bdstrat" | "bdstrattnt" => Ok(Method::BdStrat),
            "auto" => Ok(Method::Auto),
            _ => Err(ErgmError::InvalidArgument(format!("unknown proposal '{s}'"))),
        }
    }
}

// ---------------------------------------------------------------------------
// Constraints

/// Resolved `bd` caps and `blocks` pairs for one network.
#[derive(Debug, Clone)]
pub struct Constraints {
    directed: bool,
    /// Out-degree caps (degree caps when undirected).
    cap_out: Option<Vec<u32>>,
    /// In-degree caps; directed only.
    cap_in: Option<Vec<u32>>,
    block_codes: Vec<usize>,
    forbidden: Option<Vec<Vec<bool>>>,
}

fn resolve_cap(cap: &CapSpec, attr: Option<&str>, net: &Network) -> Result<Vec<u32>> {
    let n = net.n();
    match cap {
        CapSpec::Scalar(c) => Ok(vec![*c; n]),
        CapSpec::PerVertex(v) => {
            if v.len() != n {
                return Err(ErgmError::InvalidArgument(format!("bd: {} per-vertex caps for {n} vertices", v.len())));
            }
            Ok(v.clone())
        }
        CapSpec::PerLevel(v) => {
            let a = attr.ok_or_else(|| ErgmError::InvalidArgument("bd: per-level caps need attr".into()))?;
            let (levels, codes) = net.attributes().cross_classify(&[a.to_string()])?;
            if v.len() != levels.len() {
                return Err(ErgmError::InvalidArgument(format!(
                    "bd: {} caps given for {} levels of '{a}'",
                    v.len(),
                    levels.len()
                )));
            }
            Ok(codes.iter().map(|&c| v[c]).collect())
        }
    }
}

impl Constraints {
    pub fn none(net: &Network) -> Self {
        Constraints {
            directed: net.is_directed(),
            cap_out: None,
            cap_in: None,
            block_codes: vec![0; net.n()],
            forbidden: None,
        }
    }

    pub fn from_spec(spec: &ConstraintSpec, net: &Network) -> Result<Self> {
        let mut c = Constraints::none(net);
        if let Some(bd) = &spec.bd {
            let attr = bd.attr.as_deref();
            let out = bd.maxout.as_ref().map(|x| resolve_cap(x, attr, net)).transpose()?;
            let inn = bd.maxin.as_ref().map(|x| resolve_cap(x, attr, net)).transpose()?;
            if net.is_directed() {
                c.cap_out = out;
                c.cap_in = inn;
            } else {
                // One degree per vertex: the tighter of the two caps applies.
                c.cap_out = match (out, inn) {
                    (Some(a), Some(b)) => Some(a.iter().zip(&b).map(|(x, y)| *x.min(y)).collect()),
                    (a, b) => a.or(b),
                };
            }
        }
        if let Some(b) = &spec.blocks {
            let (levels, codes) = net.attributes().cross_classify(std::slice::from_ref(&b.attr))?;
            let k = levels.len();
            let m = match &b.levels2 {
                LevelPairs::Diag => (0..k).map(|a| (0..k).map(|b| a == b).collect()).collect(),
                LevelPairs::Matrix(m) => {
                    if m.len() != k {
                        return Err(ErgmError::InvalidArgument(format!(
                            "blocks: levels2 is {}x{}, '{}' has {k} levels",
                            m.len(),
                            m.len(),
                            b.attr
                        )));
                    }
                    if !net.is_directed() && (0..k).any(|a| (0..k).any(|b| m[a][b] != m[b][a])) {
                        return Err(ErgmError::InvalidArgument("blocks: levels2 must be symmetric for undirected networks".into()));
                    }
                    m.clone()
                }
            };
            c.block_codes = codes;
            c.forbidden = Some(m);
        }
        Ok(c)
    }

    pub fn is_empty(&self) -> bool {
        self.cap_out.is_none() && self.cap_in.is_none() && self.forbidden.is_none()
    }

    /// Whether the dyad's state is fixed by `blocks`.
    #[inline]
    pub fn blocked(&self, i: usize, j: usize) -> bool {
        match &self.forbidden {
            Some(m) => m[self.block_codes[i]][self.block_codes[j]],
            None => false,
        }
    }

    pub fn cap_out(&self, v: usize) -> u32 {
        self.cap_out.as_ref().map_or(u32::MAX, |c| c[v])
    }

    pub fn cap_in(&self, v: usize) -> u32 {
        self.cap_in.as_ref().map_or(u32::MAX, |c| c[v])
    }

    /// Whether toggling (i, j) keeps the network inside the constrained space.
    pub fn allows_toggle(&self, net: &Network, i: usize, j: usize) -> bool {
        if self.blocked(i, j) {
            return false;
        }
        if net.has_edge(i, j) {
            return true;
        }
        if self.directed {
            (net.out_degree(i) as u64) < self.cap_out(i) as u64 && (net.in_degree(j) as u64) < self.cap_in(j) as u64
        } else {
            (net.degree(i) as u64) < self.cap_out(i) as u64 && (net.degree(j) as u64) < self.cap_out(j) as u64
        }
    }

    /// Errors if the network violates a cap or contains a blocked edge.
    pub fn check(&self, net: &Network) -> Result<()> {
        for (i, j) in net.edges() {
            if self.blocked(i, j) {
                return Err(ErgmError::ConstraintViolation(format!("edge ({}, {}) is blocked", i + 1, j + 1)));
            }
        }
        for v in 0..net.n() {
            let (dout, din) = if self.directed { (net.out_degree(v), net.in_degree(v)) } else { (net.degree(v), 0) };
            if dout as u64 > self.cap_out(v) as u64 {
                return Err(ErgmError::ConstraintViolation(format!(
                    "vertex {} has degree {dout} above its cap {}",
                    v + 1,
                    self.cap_out(v)
                )));
            }
            if din as u64 > self.cap_in(v) as u64 {
                return Err(ErgmError::ConstraintViolation(format!(
                    "vertex {} has in-degree {din} above its cap {}",
                    v + 1,
                    self.cap_in(v)
                )));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Uniform and TNT

/// Uniform over all free dyads; symmetric.
pub fn uniform_propose<R: Rng + ?Sized>(net: &Network, rng: &mut R) -> Proposal {
    let (i, j) = net.random_dyad(rng);
    Proposal { i, j, log_q_ratio: 0.0 }
}

/// Probability that TNT proposes dyad `d` given `e` edges among `n_dyads`.
pub fn tnt_q(is_edge: bool, e: usize, n_dyads: u64) -> f64 {
    let n = n_dyads as f64;
    if e == 0 {
        1.0 / n
    } else if is_edge {
        0.5 / e as f64 + 0.5 / n
    } else {
        0.5 / n
    }
}

/// Tie/no-tie proposal: with probability 1/2 an existing edge, otherwise a
/// uniform dyad. With no edges, always a uniform dyad.
pub fn tnt_propose<R: Rng + ?Sized>(net: &Network, rng: &mut R) -> Proposal {
    let e = net.edge_count();
    let (i, j) = if e > 0 && rng.random::<bool>() {
        net.edge_at(rng.random_range(0..e))
    } else {
        net.random_dyad(rng)
    };
    let is_edge = net.has_edge(i, j);
    let n = net.dyad_count();
    let fwd = tnt_q(is_edge, e, n);
    let e2 = if is_edge { e - 1 } else { e + 1 };
    let rev = tnt_q(!is_edge, e2, n);
    Proposal { i, j, log_q_ratio: rev.ln() - fwd.ln() }
}

// ---------------------------------------------------------------------------
// BDStratTNT

/// Vertex set with O(1) insert, remove and uniform draw.
#[derive(Debug, Clone, Default, PartialEq)]
struct IndexedSet {
    items: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
struct Membership {
    /// Position of each vertex inside its type's set, or `u32::MAX`.
    pos: Vec<u32>,
}

impl Membership {
    fn insert(&mut self, set: &mut IndexedSet, v: usize) {
        debug_assert_eq!(self.pos[v], u32::MAX);
        self.pos[v] = set.items.len() as u32;
        set.items.push(v as u32);
    }

    fn remove(&mut self, set: &mut IndexedSet, v: usize) {
        let p = self.pos[v] as usize;
        let last = *set.items.last().unwrap();
        set.items.swap_remove(p);
        if last as usize != v {
            self.pos[last as usize] = p as u32;
        }
        self.pos[v] = u32::MAX;
    }
}

#[derive(Debug, Clone)]
struct Stratum {
    /// Strat levels (a, b) of the canonical endpoints.
    levels: (usize, usize),
    weight: f64,
    type_pairs: Vec<(usize, usize)>,
    edges: Vec<(u32, u32)>,
    u: u64,
    f: u64,
}

impl Stratum {
    fn d(&self) -> u64 {
        self.edges.len() as u64 + self.u - self.f
    }
}

/// Saturation flip of one endpoint caused by a toggle.
#[derive(Debug, Clone, Copy)]
struct Flip {
    v: usize,
    /// true: out side (or the only side when undirected); false: in side.
    out: bool,
    /// true if the vertex becomes unsaturated.
    to_unsat: bool,
}

/// Count changes caused by toggling one dyad.
#[derive(Debug, Clone, Default)]
struct Change {
    i: usize,
    j: usize,
    s: usize,
    adding: bool,
    flips: Vec<Flip>,
    /// F deltas per stratum.
    df: Vec<(usize, i64)>,
}

/// Per-type unsaturated counts after a hypothetical change.
struct TypeDelta {
    entries: [(usize, i64, i64, i64); 2],
    len: usize,
}

impl TypeDelta {
    fn get(&self, t: usize) -> (i64, i64, i64) {
        let mut acc = (0, 0, 0);
        for e in &self.entries[..self.len] {
            if e.0 == t {
                acc.0 += e.1;
                acc.1 += e.2;
                acc.2 += e.3;
            }
        }
        acc
    }
}

/// Per-stratum view for diagnostics and tests.
#[derive(Debug, Clone, PartialEq)]
pub struct StratumInfo {
    pub levels: (usize, usize),
    pub weight: f64,
    pub edges: u64,
    pub unsaturated_pairs: u64,
    pub proposable: u64,
}

#[derive(Debug, Clone)]
pub struct BdStratState {
    directed: bool,
    bipartite: bool,
    n: usize,
    cons: Constraints,
    n_levels: usize,
    level_names: Vec<String>,
    vtype: Vec<usize>,
    type_level: Vec<usize>,
    strata: Vec<Stratum>,
    /// Stratum index per (a, b) level key; `usize::MAX` when untracked.
    stratum_of: Vec<usize>,
    type_strata: Vec<Vec<usize>>,
    deg_out: Vec<u32>,
    deg_in: Vec<u32>,
    uo: Vec<IndexedSet>,
    ui: Vec<IndexedSet>,
    mo: Membership,
    mi: Membership,
    /// Vertices unsaturated on both sides, per type (directed only).
    ub: Vec<u64>,
    /// Position of each tracked edge inside its stratum's edge list.
    eslot: FxHashMap<u64, u32>,
    active: Vec<usize>,
    cum: Vec<f64>,
    total_w: f64,
    pending: Option<Change>,
}

impl BdStratState {
    /// Builds the state for `net` under `spec`. The network must satisfy the
    /// constraints.
    pub fn new(net: &Network, spec: &ConstraintSpec) -> Result<Self> {
        let cons = Constraints::from_spec(spec, net)?;
        cons.check(net)?;
        let n = net.n();
        let directed = net.is_directed();
        let bip = net.bipartite();
        let attrs = net.attributes();
        let strat_attrs = spec.strat.as_ref().map(|s| s.attrs.clone()).unwrap_or_default();
        let (level_names, levels) = attrs.cross_classify(&strat_attrs)?;
        let nl = level_names.len();
        let nb = cons.forbidden.as_ref().map_or(1, |m| m.len());
        let nm = if bip > 0 { 2 } else { 1 };
        let mode = |v: usize| usize::from(bip > 0 && v >= bip);
        let vtype: Vec<usize> = (0..n).map(|v| (levels[v] * nb + cons.block_codes[v]) * nm + mode(v)).collect();
        let nt = nl * nb * nm;
        let type_level: Vec<usize> = (0..nt).map(|t| t / (nb * nm)).collect();
        let type_block = |t: usize| (t / nm) % nb;
        let type_mode = |t: usize| t % nm;
        let mut type_size = vec![0u64; nt];
        for &t in &vtype {
            type_size[t] += 1;
        }

        // Raw level-pair weights.
        let key = |a: usize, b: usize| a * nl + b;
        let canon_levels = |a: usize, b: usize| if directed || bip > 0 || a <= b { (a, b) } else { (b, a) };
        let mut raw_w = vec![0.0f64; nl * nl];
        let weights = spec.strat.as_ref().map(|s| s.weights.clone()).unwrap_or(StratWeights::Uniform);
        match &weights {
            StratWeights::Uniform => raw_w.iter_mut().for_each(|w| *w = 1.0),
            StratWeights::Pmat(m) => {
                if m.len() != nl {
                    return Err(ErgmError::InvalidArgument(format!(
                        "strat: pmat is {}x{} but there are {nl} strat levels",
                        m.len(),
                        m.len()
                    )));
                }
                for a in 0..nl {
                    for b in 0..nl {
                        if directed || bip > 0 {
                            raw_w[key(a, b)] = m[a][b];
                        } else if a <= b {
                            raw_w[key(a, b)] = if a == b { 2.0 * m[a][a] } else { m[a][b] + m[b][a] };
                        }
                    }
                }
            }
            StratWeights::Empirical => {
                if net.edge_count() == 0 {
                    log::warn!("strat: empirical weights requested on an empty network; using uniform weights");
                    raw_w.iter_mut().for_each(|w| *w = 1.0);
                } else {
                    for (i, j) in net.edges() {
                        let (a, b) = canon_levels(levels[i], levels[j]);
                        raw_w[key(a, b)] += 1.0;
                    }
                }
            }
        }

        // Strata and their type pairs.
        let mut strata = Vec::new();
        let mut stratum_of = vec![usize::MAX; nl * nl];
        let mut type_strata = vec![Vec::new(); nt];
        let blocked = |t: usize, u: usize| cons.forbidden.as_ref().is_some_and(|m| m[type_block(t)][type_block(u)]);
        for a in 0..nl {
            for b in 0..nl {
                let (ca, cb) = canon_levels(a, b);
                if (ca, cb) != (a, b) || raw_w[key(a, b)] <= 0.0 {
                    continue;
                }
                let mut pairs = Vec::new();
                for t in 0..nt {
                    for u in 0..nt {
                        if type_level[t] != a || type_level[u] != b {
                            continue;
                        }
                        if bip > 0 && !(type_mode(t) == 0 && type_mode(u) == 1) {
                            continue;
                        }
                        if !directed && bip == 0 && a == b && u < t {
                            continue;
                        }
                        if blocked(t, u) {
                            continue;
                        }
                        let size = if t == u && !directed { type_size[t] * type_size[t].saturating_sub(1) / 2 } else if t == u { type_size[t] * type_size[t].saturating_sub(1) } else { type_size[t] * type_size[u] };
                        if size == 0 {
                            continue;
                        }
                        pairs.push((t, u));
                    }
                }
                if pairs.is_empty() {
                    continue;
                }
                let idx = strata.len();
                for &(t, u) in &pairs {
                    for x in [t, u] {
                        if !type_strata[x].contains(&idx) {
                            type_strata[x].push(idx);
                        }
                    }
                }
                stratum_of[key(a, b)] = idx;
                strata.push(Stratum { levels: (a, b), weight: raw_w[key(a, b)], type_pairs: pairs, edges: Vec::new(), u: 0, f: 0 });
            }
        }
        if strata.is_empty() {
            return Err(ErgmError::InvalidArgument("strat: every stratum has zero weight".into()));
        }

        let mut st = BdStratState {
            directed,
            bipartite: bip > 0,
            n,
            cons,
            n_levels: nl,
            level_names,
            vtype,
            type_level,
            strata,
            stratum_of,
            type_strata,
            deg_out: vec![0; n],
            deg_in: vec![0; n],
            uo: vec![IndexedSet::default(); nt],
            ui: vec![IndexedSet::default(); nt],
            mo: Membership { pos: vec![u32::MAX; n] },
            mi: Membership { pos: vec![u32::MAX; n] },
            ub: vec![0; nt],
            eslot: FxHashMap::default(),
            active: Vec::new(),
            cum: Vec::new(),
            total_w: 0.0,
            pending: None,
        };
        for v in 0..n {
            if directed {
                st.deg_out[v] = net.out_degree(v) as u32;
                st.deg_in[v] = net.in_degree(v) as u32;
            } else {
                st.deg_out[v] = net.degree(v) as u32;
            }
            let t = st.vtype[v];
            let so = st.unsat_out(v);
            if so {
                st.mo.insert(&mut st.uo[t], v);
            }
            if directed {
                let si = st.unsat_in(v);
                if si {
                    st.mi.insert(&mut st.ui[t], v);
                }
                if so && si {
                    st.ub[t] += 1;
                }
            }
        }
        for (i, j) in net.edges() {
            let s = st.stratum_index(i, j);
            if s == usize::MAX {
                continue;
            }
            let k = st.ekey(i, j);
            st.eslot.insert(k, st.strata[s].edges.len() as u32);
            st.strata[s].edges.push((i as u32, j as u32));
            if st.edge_unsat(i, j) {
                st.strata[s].f += 1;
            }
        }
        for s in 0..st.strata.len() {
            st.strata[s].u = st.pair_count(s, None);
        }
        st.rebuild_active();
        Ok(st)
    }

    fn ekey(&self, i: usize, j: usize) -> u64 {
        i as u64 * self.n as u64 + j as u64
    }

    #[inline]
    fn unsat_out(&self, v: usize) -> bool {
        self.deg_out[v] < self.cons.cap_out(v)
    }

    #[inline]
    fn unsat_in(&self, v: usize) -> bool {
        if self.directed {
            self.deg_in[v] < self.cons.cap_in(v)
        } else {
            self.unsat_out(v)
        }
    }

    /// Both endpoints of (i, j) unsaturated on the relevant sides.
    #[inline]
    fn edge_unsat(&self, i: usize, j: usize) -> bool {
        self.unsat_out(i) && self.unsat_in(j)
    }

    fn stratum_index(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.type_level[self.vtype[i]], self.type_level[self.vtype[j]]);
        let (a, b) = if self.directed || self.bipartite || a <= b { (a, b) } else { (b, a) };
        self.stratum_of[a * self.n_levels + b]
    }

    /// Unsaturated pair count of stratum `s`, optionally under a hypothetical type delta.
    fn pair_count(&self, s: usize, d: Option<&TypeDelta>) -> u64 {
        let get = |t: usize| -> (i64, i64, i64) {
            let base = (self.uo[t].items.len() as i64, self.ui[t].items.len() as i64, self.ub[t] as i64);
            match d {
                Some(d) => {
                    let x = d.get(t);
                    (base.0 + x.0, base.1 + x.1, base.2 + x.2)
                }
                None => base,
            }
        };
        let mut total = 0i64;
        for &(t, u) in &self.strata[s].type_pairs {
            let (ot, _, bt) = get(t);
            let (ou, iu, _) = get(u);
            total += if !self.directed {
                if t == u {
                    ot * (ot - 1) / 2
                } else {
                    ot * ou
                }
            } else if t == u {
                ot * iu - bt
            } else {
                ot * iu
            };
        }
        total as u64
    }

    fn rebuild_active(&mut self) {
        self.active.clear();
        self.cum.clear();
        let mut acc = 0.0;
        for (s, st) in self.strata.iter().enumerate() {
            if st.d() > 0 {
                acc += st.weight;
                self.active.push(s);
                self.cum.push(acc);
            }
        }
        self.total_w = acc;
    }

    /// Probability of proposing dyad (i, j) (known proposable, in stratum s)
    /// given stratum counts.
    fn q(&self, w: f64, total_w: f64, e: u64, d: u64, is_edge: bool) -> f64 {
        let pi = w / total_w;
        if e == 0 {
            pi / d as f64
        } else {
            pi * (if is_edge { 0.5 / e as f64 } else { 0.0 } + 0.5 / d as f64)
        }
    }

    /// Computes the count changes a toggle of (i, j) would cause.
    fn change_for(&self, net: &Network, i: usize, j: usize) -> Change {
        let adding = !net.has_edge(i, j);
        let s = self.stratum_index(i, j);
        let mut ch = Change { i, j, s, adding, flips: Vec::new(), df: Vec::new() };
        let step: i64 = if adding { 1 } else { -1 };
        let new_out_i = self.deg_out[i] as i64 + step;
        let new_in_j = if self.directed { self.deg_in[j] as i64 } else { self.deg_out[j] as i64 } + step;
        let was_i = self.unsat_out(i);
        let was_j = self.unsat_in(j);
        let now_i = new_out_i < self.cons.cap_out(i) as i64;
        let now_j = if self.directed { new_in_j < self.cons.cap_in(j) as i64 } else { new_in_j < self.cons.cap_out(j) as i64 };
        let add_df = |ch: &mut Change, r: usize, dv: i64| {
            if r == usize::MAX {
                return;
            }
            match ch.df.iter_mut().find(|x| x.0 == r) {
                Some(x) => x.1 += dv,
                None => ch.df.push((r, dv)),
            }
        };
        // The toggled edge itself.
        if !adding && was_i && was_j {
            add_df(&mut ch, s, -1);
        }
        if adding && now_i && now_j {
            add_df(&mut ch, s, 1);
        }
        // Other edges at a vertex whose saturation flips.
        if was_i != now_i {
            ch.flips.push(Flip { v: i, out: true, to_unsat: now_i });
            let dv = if now_i { 1 } else { -1 };
            for &k in net.out_neighbors(i) {
                let k = k as usize;
                if k == j {
                    continue;
                }
                // Edge (i, k): head k on the in side. When undirected, k's
                // status is unaffected since k ∉ {i, j}.
                if self.unsat_in(k) {
                    add_df(&mut ch, self.stratum_index_canon(i, k), dv);
                }
            }
        }
        if was_j != now_j {
            ch.flips.push(Flip { v: j, out: !self.directed, to_unsat: now_j });
            let dv = if now_j { 1 } else { -1 };
            for &k in net.in_neighbors(j) {
                let k = k as usize;
                if k == i {
                    continue;
                }
                if self.unsat_out(k) {
                    add_df(&mut ch, self.stratum_index_canon(k, j), dv);
                }
            }
        }
        ch
    }

    /// Stratum of an existing edge given in (tail, head) or either order when undirected.
    fn stratum_index_canon(&self, a: usize, b: usize) -> usize {
        if self.directed {
            self.stratum_index(a, b)
        } else {
            self.stratum_index(a.min(b), a.max(b))
        }
    }

    fn type_delta(&self, ch: &Change) -> TypeDelta {
        let mut td = TypeDelta { entries: [(0, 0, 0, 0); 2], len: 0 };
        for f in &ch.flips {
            let t = self.vtype[f.v];
            let sign = if f.to_unsat { 1 } else { -1 };
            let (mut dout, mut din, mut db) = (0, 0, 0);
            if f.out {
                dout = sign;
            } else {
                din = sign;
            }
            if self.directed {
                let (o_before, i_before) = (self.unsat_out(f.v), self.unsat_in(f.v));
                let (o_after, i_after) = if f.out { (f.to_unsat, i_before) } else { (o_before, f.to_unsat) };
                db = (o_after && i_after) as i64 - (o_before && i_before) as i64;
            }
            td.entries[td.len] = (t, dout, din, db);
            td.len += 1;
        }
        td
    }

    /// Strata whose counts a change touches.
    fn touched(&self, ch: &Change) -> Vec<usize> {
        let mut out = vec![ch.s];
        for f in &ch.flips {
            for &r in &self.type_strata[self.vtype[f.v]] {
                if !out.contains(&r) {
                    out.push(r);
                }
            }
        }
        for &(r, _) in &ch.df {
            if !out.contains(&r) {
                out.push(r);
            }
        }
        out
    }

    fn new_counts(&self, ch: &Change, td: &TypeDelta, r: usize) -> (u64, u64, u64) {
        let st = &self.strata[r];
        let e = st.edges.len() as i64 + if r == ch.s { if ch.adding { 1 } else { -1 } } else { 0 };
        let u = if ch.flips.iter().any(|f| self.type_strata[self.vtype[f.v]].contains(&r)) {
            self.pair_count(r, Some(td)) as i64
        } else {
            st.u as i64
        };
        let f = st.f as i64 + ch.df.iter().filter(|x| x.0 == r).map(|x| x.1).sum::<i64>();
        (e as u64, u as u64, f as u64)
    }

    /// Draws a proposable dyad and its log proposal ratio.
    pub fn propose<R: Rng + ?Sized>(&mut self, net: &Network, rng: &mut R) -> Result<Proposal> {
        if self.active.is_empty() {
            return Err(ErgmError::FrozenState);
        }
        let x = rng.random::<f64>() * self.total_w;
        let k = self.cum.partition_point(|&c| c <= x).min(self.active.len() - 1);
        let s = self.active[k];
        let st = &self.strata[s];
        let e = st.edges.len() as u64;
        let (i, j) = if e > 0 && rng.random::<bool>() {
            let (a, b) = st.edges[rng.random_range(0..st.edges.len())];
            (a as usize, b as usize)
        } else {
            self.draw_proposable(s, net, rng)
        };
        let is_edge = net.has_edge(i, j);
        let fwd = self.q(st.weight, self.total_w, e, st.d(), is_edge);

        let ch = self.change_for(net, i, j);
        let td = self.type_delta(&ch);
        let mut w2 = self.total_w;
        let mut e2 = 0;
        let mut d2 = 0;
        for r in self.touched(&ch) {
            let (ne, nu, nf) = self.new_counts(&ch, &td, r);
            let nd = ne + nu - nf;
            let was = self.strata[r].d() > 0;
            if was != (nd > 0) {
                w2 += if nd > 0 { self.strata[r].weight } else { -self.strata[r].weight };
            }
            if r == s {
                e2 = ne;
                d2 = nd;
            }
        }
        let rev = self.q(self.strata[s].weight, w2, e2, d2, !is_edge);
        debug_assert!(rev > 0.0 && fwd > 0.0);
        self.pending = Some(ch);
        Ok(Proposal { i, j, log_q_ratio: rev.ln() - fwd.ln() })
    }

    /// Uniform draw from the proposable dyads of stratum `s`: the multiset
    /// of unsaturated pairs plus edges, redrawing unsaturated pairs that are edges.
    fn draw_proposable<R: Rng + ?Sized>(&self, s: usize, net: &Network, rng: &mut R) -> (usize, usize) {
        let st = &self.strata[s];
        let e = st.edges.len() as u64;
        loop {
            let x = rng.random_range(0..st.u + e);
            if x >= st.u {
                let (a, b) = st.edges[(x - st.u) as usize];
                return (a as usize, b as usize);
            }
            let (i, j) = self.draw_unsat_pair(s, x, rng);
            if !net.has_edge(i, j) {
                return (i, j);
            }
        }
    }

    /// The x-th unsaturated pair's type pair, then uniform endpoints within it.
    fn draw_unsat_pair<R: Rng + ?Sized>(&self, s: usize, mut x: u64, rng: &mut R) -> (usize, usize) {
        for &(t, u) in &self.strata[s].type_pairs {
            let c = self.pair_count_tp(t, u);
            if x >= c {
                x -= c;
                continue;
            }
            loop {
                let (i, j) = if !self.directed && t == u {
                    let set = &self.uo[t].items;
                    let a = rng.random_range(0..set.len());
                    let mut b = rng.random_range(0..set.len() - 1);
                    if b >= a {
                        b += 1;
                    }
                    (set[a] as usize, set[b] as usize)
                } else {
                    let tails = &self.uo[t].items;
                    let heads = if self.directed { &self.ui[u].items } else { &self.uo[u].items };
                    (tails[rng.random_range(0..tails.len())] as usize, heads[rng.random_range(0..heads.len())] as usize)
                };
                if i == j {
                    continue;
                }
                return if self.directed { (i, j) } else { (i.min(j), i.max(j)) };
            }
        }
        unreachable!("pair index beyond stratum count")
    }

    fn pair_count_tp(&self, t: usize, u: usize) -> u64 {
        let ot = self.uo[t].items.len() as u64;
        if !self.directed {
            if t == u {
                ot * ot.saturating_sub(1) / 2
            } else {
                ot * self.uo[u].items.len() as u64
            }
        } else {
            let iu = self.ui[u].items.len() as u64;
            if t == u {
                ot * iu - self.ub[t]
            } else {
                ot * iu
            }
        }
    }

    /// Updates the state after the toggle of (i, j) has been applied to `net`.
    pub fn commit(&mut self, net: &Network, i: usize, j: usize) {
        let ch = match self.pending.take() {
            Some(ch) if ch.i == i && ch.j == j => ch,
            _ => {
                let mut before = net.clone();
                before.toggle_unchecked(i, j);
                self.change_for(&before, i, j)
            }
        };
        let td = self.type_delta(&ch);
        let touched = self.touched(&ch);
        let mut new_u = Vec::with_capacity(touched.len());
        for &r in &touched {
            new_u.push(self.new_counts(&ch, &td, r).1);
        }
        // Degrees and unsaturated sets.
        let step: i64 = if ch.adding { 1 } else { -1 };
        let before_b: Vec<bool> = ch.flips.iter().map(|f| self.unsat_out(f.v) && self.unsat_in(f.v)).collect();
        self.deg_out[i] = (self.deg_out[i] as i64 + step) as u32;
        if self.directed {
            self.deg_in[j] = (self.deg_in[j] as i64 + step) as u32;
        } else {
            self.deg_out[j] = (self.deg_out[j] as i64 + step) as u32;
        }
        for (f, &bb) in ch.flips.iter().zip(&before_b) {
            let t = self.vtype[f.v];
            if f.out {
                if f.to_unsat {
                    self.mo.insert(&mut self.uo[t], f.v);
                } else {
                    self.mo.remove(&mut self.uo[t], f.v);
                }
            } else if f.to_unsat {
                self.mi.insert(&mut self.ui[t], f.v);
            } else {
                self.mi.remove(&mut self.ui[t], f.v);
            }
            if self.directed {
                let ba = self.unsat_out(f.v) && self.unsat_in(f.v);
                self.ub[t] = (self.ub[t] as i64 + ba as i64 - bb as i64) as u64;
            }
        }
        // Edge list of the toggled dyad's stratum.
        let s = ch.s;
        let k = self.ekey(i, j);
        if ch.adding {
            self.eslot.insert(k, self.strata[s].edges.len() as u32);
            self.strata[s].edges.push((i as u32, j as u32));
        } else {
            let p = self.eslot.remove(&k).expect("edge tracked") as usize;
            let edges = &mut self.strata[s].edges;
            edges.swap_remove(p);
            if p < edges.len() {
                let (a, b) = edges[p];
                let kk = a as u64 * self.n as u64 + b as u64;
                self.eslot.insert(kk, p as u32);
            }
        }
        for &(r, dv) in &ch.df {
            self.strata[r].f = (self.strata[r].f as i64 + dv) as u64;
        }
        let mut changed = false;
        for (&r, &u) in touched.iter().zip(&new_u) {
            let was = self.strata[r].d() > 0;
            self.strata[r].u = u;
            changed |= was != (self.strata[r].d() > 0);
        }
        if changed {
            self.rebuild_active();
        }
        debug_assert_eq!(net.has_edge(i, j), ch.adding);
    }

    pub fn constraints(&self) -> &Constraints {
        &self.cons
    }

    pub fn level_names(&self) -> &[String] {
        &self.level_names
    }

    pub fn strata(&self) -> Vec<StratumInfo> {
        self.strata
            .iter()
            .map(|s| StratumInfo {
                levels: s.levels,
                weight: s.weight,
                edges: s.edges.len() as u64,
                unsaturated_pairs: s.u,
                proposable: s.d(),
            })
            .collect()
    }

    /// Whether (i, j) can currently be proposed.
    pub fn is_proposable(&self, net: &Network, i: usize, j: usize) -> bool {
        let s = self.stratum_index(i, j);
        if s == usize::MAX || self.strata[s].weight <= 0.0 || self.cons.blocked(i, j) {
            return false;
        }
        net.has_edge(i, j) || (self.unsat_out(i) && self.unsat_in(j))
    }

    /// Exact probability that the next call to `propose` names (i, j).
    pub fn proposal_prob(&self, net: &Network, i: usize, j: usize) -> f64 {
        if !self.is_proposable(net, i, j) {
            return 0.0;
        }
        let s = self.stratum_index(i, j);
        let st = &self.strata[s];
        self.q(st.weight, self.total_w, st.edges.len() as u64, st.d(), net.has_edge(i, j))
    }

    /// Compares the incremental state with one rebuilt from scratch.
    pub fn verify(&self, net: &Network, spec: &ConstraintSpec) -> std::result::Result<(), String> {
        let fresh = BdStratState::new(net, spec).map_err(|e| e.to_string())?;
        if fresh.strata() != self.strata() {
            return Err(format!("strata differ:\n{:?}\n{:?}", self.strata(), fresh.strata()));
        }
        if fresh.deg_out != self.deg_out || fresh.deg_in != self.deg_in || fresh.ub != self.ub {
            return Err("degree or saturation counters differ".into());
        }
        for t in 0..self.uo.len() {
            let mut a = self.uo[t].items.clone();
            let mut b = fresh.uo[t].items.clone();
            a.sort_unstable();
            b.sort_unstable();
            if a != b {
                return Err(format!("unsaturated set of type {t} differs"));
            }
        }
        if (fresh.total_w - self.total_w).abs() > 1e-9 * fresh.total_w.max(1.0) {
            return Err("total weight differs".into());
        }
        Ok(())
    }
}

/// A proposal distribution together with the state it keeps between steps.
#[derive(Debug, Clone)]
pub enum ProposalState {
    Uniform(Constraints),
    Tnt(Constraints),
    BdStrat(Box<BdStratState>),
}

impl ProposalState {
    /// Builds the proposal for `net`. Constraints are checked against the
    /// initial network.
    pub fn new(method: Method, net: &Network, spec: &ConstraintSpec) -> Result<Self> {
        let method = match method {
            Method::Auto if spec.wants_bdstrat() => Method::BdStrat,
            Method::Auto => Method::Tnt,
            m => m,
        };
        if net.dyad_count() == 0 {
            return Err(ErgmError::InvalidNetwork("network has no free dyads".into()));
        }
        Ok(match method {
            Method::Uniform | Method::Tnt => {
                let c = Constraints::from_spec(spec, net)?;
                c.check(net)?;
                if method == Method::Uniform {
                    ProposalState::Uniform(c)
                } else {
                    ProposalState::Tnt(c)
                }
            }
            _ => ProposalState::BdStrat(Box::new(BdStratState::new(net, spec)?)),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProposalState::Uniform(_) => "uniform",
            ProposalState::Tnt(_) => "tnt",
            ProposalState::BdStrat(_) => "bdstrat",
        }
    }

    pub fn constraints(&self) -> &Constraints {
        match self {
            ProposalState::Uniform(c) | ProposalState::Tnt(c) => c,
            ProposalState::BdStrat(b) => b.constraints(),
        }
    }

    /// Draws a toggle. `None` means the drawn toggle leaves the constrained
    /// space and the step must be rejected.
    pub fn propose<R: Rng + ?Sized>(&mut self, net: &Network, rng: &mut R) -> Result<Option<Proposal>> {
        match self {
            ProposalState::Uniform(c) => {
                let p = uniform_propose(net, rng);
                Ok((c.is_empty() || c.allows_toggle(net, p.i, p.j)).then_some(p))
            }
            ProposalState::Tnt(c) => {
                let p = tnt_propose(net, rng);
                Ok((c.is_empty() || c.allows_toggle(net, p.i, p.j)).then_some(p))
            }
            ProposalState::BdStrat(b) => b.propose(net, rng).map(Some),
        }
    }

    /// Records an accepted toggle that has been applied to `net`.
    pub fn commit(&mut self, net: &Network, i: usize, j: usize) {
        if let ProposalState::BdStrat(b) = self {
            b.commit(net, i, j);
        }
    }
}
