//! Term catalog: summary statistics g(y) and change statistics.
//!
//! Change statistics are defined as g(y with (i,j)) − g(y without (i,j)),
//! so they do not depend on the current state of the dyad itself. Degree
//! based terms use total degree on directed networks.

use crate::error::{ErgmError, Result};
use crate::formula::{ModelSpec, OffsetSpec, TermSpec, Value};
use crate::network::Network;

/// Term names known to the parser, with the named arguments each accepts.
const CATALOG: &[(&str, &[&str])] = &[
    ("edges", &[]),
    ("triangle", &[]),
    ("nodematch", &["attr", "diff"]),
    ("nodefactor", &["attr", "levels"]),
    ("nodecov", &["attr"]),
    ("absdiff", &["attr"]),
    ("concurrent", &[]),
    ("degree", &["d"]),
    ("gwdegree", &["decay", "fixed", "fix"]),
    ("gwesp", &["decay", "fixed", "fix"]),
];

fn term_err(t: &TermSpec, msg: impl std::fmt::Display) -> ErgmError {
    ErgmError::Parse { pos: 1, msg: format!("{}: {msg}", t.name) }
}

/// Checks a term's name and argument types without a network.
pub fn validate_term(t: &TermSpec) -> Result<()> {
    let Some((_, allowed)) = CATALOG.iter().find(|(n, _)| *n == t.name) else {
        return Err(ErgmError::Parse { pos: 1, msg: format!("unknown term '{}'", t.name) });
    };
    let npos = t.args.iter().filter(|a| a.name.is_none()).count();
    if npos > allowed.len() {
        return Err(term_err(t, format!("takes at most {} arguments", allowed.len())));
    }
    for a in &t.args {
        if let Some(n) = &a.name {
            if !allowed.contains(&n.as_str()) {
                return Err(term_err(t, format!("unknown argument '{n}'")));
            }
        }
    }
    match t.name.as_str() {
        "nodematch" | "nodefactor" | "nodecov" | "absdiff" => {
            if t.arg("attr", 0).and_then(Value::as_str).is_none() {
                return Err(term_err(t, "attr must be an attribute name"));
            }
            if t.name == "nodematch" {
                if let Some(v) = t.arg("diff", 1) {
                    v.as_bool().ok_or_else(|| term_err(t, "diff must be a boolean"))?;
                }
            }
            if t.name == "nodefactor" {
                if let Some(v) = t.arg("levels", 1) {
                    let ls = v.as_int_list().ok_or_else(|| term_err(t, "levels must be integers"))?;
                    if ls.is_empty() || ls.contains(&0) {
                        return Err(term_err(t, "levels must be non-zero 1-based indices"));
                    }
                    if ls.iter().any(|&l| l > 0) && ls.iter().any(|&l| l < 0) {
                        return Err(term_err(t, "levels cannot mix retained and excluded indices"));
                    }
                }
            }
        }
        "degree" => {
            let ks = t
                .arg("d", 0)
                .and_then(Value::as_int_list)
                .ok_or_else(|| term_err(t, "needs one or more integer degrees"))?;
            if ks.is_empty() || ks.iter().any(|&k| k < 0) {
                return Err(term_err(t, "degrees must be non-negative"));
            }
        }
        "gwdegree" | "gwesp" => {
            let decay = t
                .arg("decay", 0)
                .and_then(Value::as_f64)
                .ok_or_else(|| term_err(t, "decay must be a number"))?;
            if !(decay.is_finite() && decay > 0.0) {
                return Err(term_err(t, "decay must be positive"));
            }
            let fixed = t.args.iter().find(|a| matches!(a.name.as_deref(), Some("fixed" | "fix")));
            let fixed = match fixed {
                Some(a) => a.value.as_bool().ok_or_else(|| term_err(t, "fixed must be a boolean"))?,
                None => match t.arg("", 1) {
                    Some(v) => v.as_bool().ok_or_else(|| term_err(t, "fixed must be a boolean"))?,
                    None => true,
                },
            };
            if !fixed {
                return Err(term_err(t, "only fixed decay is supported"));
            }
        }
        _ => {}
    }
    Ok(())
}

#[derive(Debug, Clone)]
enum Kind {
    Edges,
    Triangle,
    /// `slot[level]` is the statistic offset for a matching edge on that level.
    NodeMatch { codes: Vec<usize>, slot: Vec<Option<usize>> },
    NodeFactor { codes: Vec<usize>, slot: Vec<Option<usize>> },
    NodeCov { x: Vec<f64> },
    AbsDiff { x: Vec<f64> },
    Concurrent,
    Degree { ks: Vec<usize> },
    GwDegree { r: f64, alpha: f64 },
    Gwesp { r: f64, alpha: f64 },
}

#[derive(Debug, Clone)]
struct BoundTerm {
    kind: Kind,
    start: usize,
    dim: usize,
}

/// A model formula resolved against a network's attributes.
#[derive(Debug, Clone)]
pub struct BoundModel {
    spec: ModelSpec,
    terms: Vec<BoundTerm>,
    names: Vec<String>,
    offset_mask: Vec<bool>,
    offset_coefs: Vec<f64>,
    directed: bool,
}

fn attr_name(t: &TermSpec) -> String {
    t.arg("attr", 0).and_then(Value::as_str).unwrap_or_default().to_string()
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

impl BoundModel {
    pub fn bind(spec: &ModelSpec, net: &Network) -> Result<BoundModel> {
        let attrs = net.attributes();
        let mut terms = Vec::new();
        let mut names = Vec::new();
        let mut offset_mask = Vec::new();
        for t in &spec.terms {
            validate_term(t)?;
            let start = names.len();
            let mut add = |kind: Kind, tnames: Vec<String>| -> BoundTerm {
                let dim = tnames.len();
                names.extend(tnames);
                BoundTerm { kind, start, dim }
            };
            let bt = match t.name.as_str() {
                "edges" => add(Kind::Edges, vec!["edges".into()]),
                "triangle" => add(Kind::Triangle, vec!["triangle".into()]),
                "concurrent" => add(Kind::Concurrent, vec!["concurrent".into()]),
                "nodematch" => {
                    let a = attr_name(t);
                    let (levels, codes) = attrs.cross_classify(std::slice::from_ref(&a))?;
                    let diff = t.arg("diff", 1).and_then(Value::as_bool).unwrap_or(false);
                    if diff {
                        let slot = (0..levels.len()).map(Some).collect();
                        let tn = levels.iter().map(|l| format!("nodematch.{a}.{l}")).collect();
                        add(Kind::NodeMatch { codes, slot }, tn)
                    } else {
                        add(Kind::NodeMatch { codes, slot: vec![Some(0); levels.len()] }, vec![format!("nodematch.{a}")])
                    }
                }
                "nodefactor" => {
                    let a = attr_name(t);
                    let (levels, codes) = attrs.cross_classify(std::slice::from_ref(&a))?;
                    let nl = levels.len() as i64;
                    let keep: Vec<bool> = match t.arg("levels", 1).and_then(Value::as_int_list) {
                        None => (0..nl).map(|l| l != 0).collect(),
                        Some(ls) => {
                            if let Some(&bad) = ls.iter().find(|l| l.abs() > nl) {
                                return Err(ErgmError::Attribute(format!(
                                    "nodefactor: level index {bad} out of range for '{a}' with {nl} levels"
                                )));
                            }
                            if ls[0] < 0 {
                                (0..nl).map(|l| !ls.contains(&-(l + 1))).collect()
                            } else {
                                (0..nl).map(|l| ls.contains(&(l + 1))).collect()
                            }
                        }
                    };
                    let mut slot = vec![None; levels.len()];
                    let mut tn = Vec::new();
                    for (l, name) in levels.iter().enumerate() {
                        if keep[l] {
                            slot[l] = Some(tn.len());
                            tn.push(format!("nodefactor.{a}.{name}"));
                        }
                    }
                    if tn.is_empty() {
                        return Err(ErgmError::Attribute(format!("nodefactor: no levels of '{a}' retained")));
                    }
                    add(Kind::NodeFactor { codes, slot }, tn)
                }
                "nodecov" => {
                    let a = attr_name(t);
                    let x = attrs.numeric(&a)?.to_vec();
                    add(Kind::NodeCov { x }, vec![format!("nodecov.{a}")])
                }
                "absdiff" => {
                    let a = attr_name(t);
                    let x = attrs.numeric(&a)?.to_vec();
                    add(Kind::AbsDiff { x }, vec![format!("absdiff.{a}")])
                }
                "degree" => {
                    let ks: Vec<usize> =
                        t.arg("d", 0).and_then(Value::as_int_list).unwrap().into_iter().map(|k| k as usize).collect();
                    let tn = ks.iter().map(|k| format!("degree{k}")).collect();
                    add(Kind::Degree { ks }, tn)
                }
                "gwdegree" => {
                    let alpha = t.arg("decay", 0).and_then(Value::as_f64).unwrap();
                    let r = 1.0 - (-alpha).exp();
                    add(Kind::GwDegree { r, alpha }, vec![format!("gwdeg.fixed.{}", fmt_num(alpha))])
                }
                "gwesp" => {
                    if net.is_directed() {
                        return Err(ErgmError::InvalidArgument("gwesp is defined for undirected networks only".into()));
                    }
                    let alpha = t.arg("decay", 0).and_then(Value::as_f64).unwrap();
                    let r = 1.0 - (-alpha).exp();
                    add(Kind::Gwesp { r, alpha }, vec![format!("gwesp.fixed.{}", fmt_num(alpha))])
                }
                other => return Err(ErgmError::Parse { pos: 1, msg: format!("unknown term '{other}'") }),
            };
            let dim = bt.dim;
            let mask = match &t.offset {
                OffsetSpec::None => vec![false; dim],
                OffsetSpec::All => vec![true; dim],
                OffsetSpec::Mask(m) => {
                    if m.len() != dim {
                        return Err(ErgmError::InvalidArgument(format!(
                            "offset mask for {} has {} entries, term has {dim} statistics",
                            t.name,
                            m.len()
                        )));
                    }
                    m.clone()
                }
                OffsetSpec::Indices(ix) => {
                    let mut m = vec![false; dim];
                    for &k in ix {
                        if k == 0 || k > dim {
                            return Err(ErgmError::InvalidArgument(format!(
                                "offset index {k} out of range for {} with {dim} statistics",
                                t.name
                            )));
                        }
                        m[k - 1] = true;
                    }
                    m
                }
            };
            offset_mask.extend(mask);
            terms.push(bt);
        }
        let p = names.len();
        Ok(BoundModel {
            spec: spec.clone(),
            terms,
            names,
            offset_coefs: vec![0.0; p],
            offset_mask,
            directed: net.is_directed(),
        })
    }

    /// Parses and binds in one go.
    pub fn from_formula(text: &str, net: &Network) -> Result<BoundModel> {
        BoundModel::bind(&crate::formula::parse_model_formula(text)?, net)
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Total statistic dimension.
    pub fn p(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn offset_mask(&self) -> &[bool] {
        &self.offset_mask
    }

    pub fn has_offsets(&self) -> bool {
        self.offset_mask.iter().any(|&b| b)
    }

    /// Indices of the non-offset statistics.
    pub fn free_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&k| !self.offset_mask[k]).collect()
    }

    pub fn n_free(&self) -> usize {
        self.offset_mask.iter().filter(|&&b| !b).count()
    }

    /// Fixed coefficients of the offset statistics, length p (entries at
    /// non-offset positions are ignored).
    pub fn offset_coefs(&self) -> &[f64] {
        &self.offset_coefs
    }

    /// Sets the offset coefficients, given one value per offset statistic
    /// in order. Values may be ±∞.
    pub fn set_offset_coefs(&mut self, values: &[f64]) -> Result<()> {
        let k = self.p() - self.n_free();
        if values.len() != k {
            return Err(ErgmError::InvalidArgument(format!(
                "{} offset coefficients given, model has {k} offset statistics",
                values.len()
            )));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(ErgmError::InvalidArgument("offset coefficient is NaN".into()));
        }
        let mut it = values.iter();
        for (c, &m) in self.offset_coefs.iter_mut().zip(&self.offset_mask) {
            *c = if m { *it.next().unwrap() } else { 0.0 };
        }
        Ok(())
    }

    /// Assembles a full coefficient vector from the free coefficients.
    pub fn full_coefs(&self, free: &[f64]) -> Vec<f64> {
        let mut it = free.iter();
        (0..self.p())
            .map(|k| if self.offset_mask[k] { self.offset_coefs[k] } else { *it.next().unwrap() })
            .collect()
    }

    /// Extracts the free coordinates of a length-p vector.
    pub fn free_part(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.offset_mask).filter(|(_, &m)| !m).map(|(x, _)| *x).collect()
    }

    /// Number of terms and, per term, its statistic range.
    pub fn term_ranges(&self) -> Vec<std::ops::Range<usize>> {
        self.terms.iter().map(|t| t.start..t.start + t.dim).collect()
    }

    /// Whether each term's change statistic depends only on the dyad.
    pub fn term_dyad_independent(&self) -> Vec<bool> {
        self.terms
            .iter()
            .map(|t| {
                matches!(
                    t.kind,
                    Kind::Edges | Kind::NodeMatch { .. } | Kind::NodeFactor { .. } | Kind::NodeCov { .. } | Kind::AbsDiff { .. }
                )
            })
            .collect()
    }

    pub fn is_dyad_independent(&self) -> bool {
        self.term_dyad_independent().iter().all(|&b| b)
    }

    /// Per-statistic flag: the statistic only takes integer values.
    pub fn integer_stats(&self) -> Vec<bool> {
        let mut out = vec![true; self.p()];
        for t in &self.terms {
            if matches!(t.kind, Kind::NodeCov { .. } | Kind::AbsDiff { .. } | Kind::GwDegree { .. } | Kind::Gwesp { .. }) {
                out[t.start..t.start + t.dim].iter_mut().for_each(|b| *b = false);
            }
        }
        out
    }

    /// Full statistic vector g(y).
    pub fn summary_stats(&self, net: &Network) -> Vec<f64> {
        debug_assert_eq!(net.is_directed(), self.directed);
        let mut out = vec![0.0; self.p()];
        for t in &self.terms {
            let o = &mut out[t.start..t.start + t.dim];
            match &t.kind {
                Kind::Edges => o[0] = net.edge_count() as f64,
                Kind::Triangle => {
                    let mut c = 0usize;
                    for (a, b) in net.edges() {
                        c += common_out_in(net, a, b);
                    }
                    o[0] = if net.is_directed() { c as f64 } else { (c / 3) as f64 };
                }
                Kind::NodeMatch { codes, slot } => {
                    for (a, b) in net.edges() {
                        if codes[a] == codes[b] {
                            if let Some(s) = slot[codes[a]] {
                                o[s] += 1.0;
                            }
                        }
                    }
                }
                Kind::NodeFactor { codes, slot } => {
                    for (a, b) in net.edges() {
                        for v in [a, b] {
                            if let Some(s) = slot[codes[v]] {
                                o[s] += 1.0;
                            }
                        }
                    }
                }
                Kind::NodeCov { x } => o[0] = neumaier(net.edges().map(|(a, b)| x[a] + x[b])),
                Kind::AbsDiff { x } => o[0] = neumaier(net.edges().map(|(a, b)| (x[a] - x[b]).abs())),
                Kind::Concurrent => o[0] = (0..net.n()).filter(|&v| net.degree(v) >= 2).count() as f64,
                Kind::Degree { ks } => {
                    for v in 0..net.n() {
                        let d = net.degree(v);
                        for (s, &k) in ks.iter().enumerate() {
                            if d == k {
                                o[s] += 1.0;
                            }
                        }
                    }
                }
                Kind::GwDegree { r, alpha } => {
                    let ea = alpha.exp();
                    o[0] = neumaier((0..net.n()).map(|v| ea * (1.0 - r.powi(net.degree(v) as i32))));
                }
                Kind::Gwesp { r, alpha } => {
                    let ea = alpha.exp();
                    o[0] = neumaier(net.edges().map(|(a, b)| ea * (1.0 - r.powi(common_undirected(net, a, b) as i32))));
                }
            }
        }
        out
    }

    /// Writes Δ_{ij} g(y) into `out` (length p).
    pub fn change_stats_into(&self, net: &Network, i: usize, j: usize, out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        let yij = net.has_edge(i, j) as usize;
        for t in &self.terms {
            let o = &mut out[t.start..t.start + t.dim];
            match &t.kind {
                Kind::Edges => o[0] = 1.0,
                Kind::Triangle => {
                    o[0] = if net.is_directed() {
                        (common_sorted(net.out_neighbors(i), net.in_neighbors(j), net, Dir::OutIn(i, j))
                            + common_sorted(net.out_neighbors(i), net.out_neighbors(j), net, Dir::OutOut(i, j))
                            + common_sorted(net.in_neighbors(i), net.in_neighbors(j), net, Dir::InIn(i, j)))
                            as f64
                    } else {
                        common_undirected(net, i, j) as f64
                    }
                }
                Kind::NodeMatch { codes, slot } => {
                    if codes[i] == codes[j] {
                        if let Some(s) = slot[codes[i]] {
                            o[s] = 1.0;
                        }
                    }
                }
                Kind::NodeFactor { codes, slot } => {
                    for v in [i, j] {
                        if let Some(s) = slot[codes[v]] {
                            o[s] += 1.0;
                        }
                    }
                }
                Kind::NodeCov { x } => o[0] = x[i] + x[j],
                Kind::AbsDiff { x } => o[0] = (x[i] - x[j]).abs(),
                Kind::Concurrent => {
                    o[0] = [i, j].iter().filter(|&&v| net.degree(v) - yij == 1).count() as f64;
                }
                Kind::Degree { ks } => {
                    for v in [i, j] {
                        let d = net.degree(v) - yij;
                        for (s, &k) in ks.iter().enumerate() {
                            if d + 1 == k {
                                o[s] += 1.0;
                            } else if d == k {
                                o[s] -= 1.0;
                            }
                        }
                    }
                }
                Kind::GwDegree { r, .. } => {
                    o[0] = r.powi((net.degree(i) - yij) as i32) + r.powi((net.degree(j) - yij) as i32);
                }
                Kind::Gwesp { r, alpha } => {
                    let (a, b) = if net.degree(i) <= net.degree(j) { (i, j) } else { (j, i) };
                    let mut sp = 0;
                    let mut acc = 0.0;
                    for &k in net.neighbors(a) {
                        let k = k as usize;
                        if k != b && net.has_edge(k, b) {
                            sp += 1;
                            let sik = common_undirected(net, i, k) - yij;
                            let sjk = common_undirected(net, j, k) - yij;
                            acc += r.powi(sik as i32) + r.powi(sjk as i32);
                        }
                    }
                    o[0] = alpha.exp() * (1.0 - r.powi(sp)) + acc;
                }
            }
        }
    }

    pub fn change_stats(&self, net: &Network, i: usize, j: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.p()];
        self.change_stats_into(net, i, j, &mut out);
        out
    }
}

/// `current ± delta` depending on whether the toggle added the edge.
pub fn apply_toggle_stats(current: &mut [f64], delta: &[f64], adding: bool) {
    let s = if adding { 1.0 } else { -1.0 };
    for (c, d) in current.iter_mut().zip(delta) {
        *c += s * d;
    }
}

/// Compensated (Neumaier) summation.
pub(crate) fn neumaier(it: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for x in it {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Clone, Copy)]
enum Dir {
    OutIn(usize, usize),
    OutOut(usize, usize),
    InIn(usize, usize),
}

/// |A ∩ B| for neighbor lists, where membership in the second list is
/// checked through the edge map.
fn common_sorted(a: &[u32], b: &[u32], net: &Network, dir: Dir) -> usize {
    let use_a = a.len() <= b.len();
    let (small, _) = if use_a { (a, b) } else { (b, a) };
    small
        .iter()
        .filter(|&&k| {
            let k = k as usize;
            // k ranges over the smaller list; test membership in the other.
            match (dir, use_a) {
                (Dir::OutIn(_, j), true) => k != j && net.has_edge(k, j),
                (Dir::OutIn(i, _), false) => k != i && net.has_edge(i, k),
                (Dir::OutOut(_, j), true) => k != j && net.has_edge(j, k),
                (Dir::OutOut(i, _), false) => k != i && net.has_edge(i, k),
                (Dir::InIn(_, j), true) => k != j && net.has_edge(k, j),
                (Dir::InIn(i, _), false) => k != i && net.has_edge(k, i),
            }
        })
        .count()
}

/// Undirected common-neighbor count of `i` and `j`.
fn common_undirected(net: &Network, i: usize, j: usize) -> usize {
    let (a, b) = if net.degree(i) <= net.degree(j) { (i, j) } else { (j, i) };
    net.neighbors(a).iter().filter(|&&k| k as usize != b && net.has_edge(k as usize, b)).count()
}

/// For an edge (a, b): directed, the number of k with a→k→b; undirected,
/// the number of common neighbors.
fn common_out_in(net: &Network, a: usize, b: usize) -> usize {
    if net.is_directed() {
        net.out_neighbors(a).iter().filter(|&&k| k as usize != b && net.has_edge(k as usize, b)).count()
    } else {
        common_undirected(net, a, b)
    }
}
