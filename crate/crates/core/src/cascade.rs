//! Cascade data model: records parsed from the line grammar, windowed
//! cascade graphs, incremental-popularity labels and the global social
//! graph that is the union of all observed diffusion pairs.
//!
//! Line grammar (one cascade per line, tab separated):
//!
//! ```text
//! msg_id \t root_user \t publish_time \t final_size \t path( path)*
//! path := user(/user)*:elapsed
//! ```
//!
//! Each path names the chain of users from the root to the retweeter; the
//! retweeter is the last user and its source is the one before it.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::error::{Error, Result};

/// A user identifier as it appears in the data files.
///
/// Ordering is numeric for all-digit ids (so `"2" < "10"`), and puts
/// numeric ids before any non-numeric ones, which are ordered as strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct UserId(String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        UserId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn numeric(&self) -> Option<u128> {
        if self.0.is_empty() || !self.0.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        self.0.parse().ok()
    }
}

impl Ord for UserId {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self.numeric(), other.numeric()) {
            (Some(a), Some(b)) => a.cmp(&b).then_with(|| self.0.cmp(&other.0)),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => self.0.cmp(&other.0),
        }
    }
}

impl PartialOrd for UserId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId(s.to_string())
    }
}

/// One adoption: `retweeter` picked the message up from `source` after
/// `elapsed` time units. The root event has no source and elapsed 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeEvent {
    pub retweeter: UserId,
    pub source: Option<UserId>,
    pub elapsed: u64,
}

impl CascadeEvent {
    pub fn is_root(&self) -> bool {
        self.source.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeRecord {
    pub message_id: String,
    pub root_user: UserId,
    pub publish_time: i64,
    /// Root first, then retweets sorted by elapsed (stable w.r.t. input order).
    pub events: Vec<CascadeEvent>,
    /// Number of retweets (root excluded) at the label horizon.
    pub final_size: u64,
}

impl CascadeRecord {
    /// Retweets (root excluded) observed strictly before `window`.
    pub fn observed_count(&self, window: u64) -> u64 {
        self.events
            .iter()
            .filter(|e| !e.is_root() && e.elapsed < window)
            .count() as u64
    }

    /// Copy of the record keeping only events inside `[0, window)`.
    pub fn truncated(&self, window: u64) -> CascadeRecord {
        CascadeRecord {
            events: self
                .events
                .iter()
                .filter(|e| e.is_root() || e.elapsed < window)
                .cloned()
                .collect(),
            ..self.clone()
        }
    }

    /// Canonical line form. Paths are rebuilt by following sources back to
    /// the root; a source that has no event of its own is hung off the root.
    pub fn to_line(&self) -> String {
        let by_user: BTreeMap<&UserId, &CascadeEvent> =
            self.events.iter().map(|e| (&e.retweeter, e)).collect();
        let mut out = String::new();
        out.push_str(&self.message_id);
        out.push('\t');
        out.push_str(self.root_user.as_str());
        out.push('\t');
        out.push_str(&self.publish_time.to_string());
        out.push('\t');
        out.push_str(&self.final_size.to_string());
        out.push('\t');
        for (i, event) in self.events.iter().enumerate() {
            if i > 0 {
                out.push(' ');
            }
            let mut chain: Vec<&UserId> = alloc::vec![&event.retweeter];
            let mut cursor = event.source.as_ref();
            while let Some(user) = cursor {
                if chain.contains(&user) {
                    break;
                }
                chain.push(user);
                cursor = by_user.get(user).and_then(|e| e.source.as_ref());
            }
            if *chain.last().expect("chain is never empty") != &self.root_user {
                chain.push(&self.root_user);
            }
            for (j, user) in chain.iter().rev().enumerate() {
                if j > 0 {
                    out.push('/');
                }
                out.push_str(user.as_str());
            }
            out.push(':');
            out.push_str(&event.elapsed.to_string());
        }
        out
    }
}

fn parse_err(line: usize, field: &'static str, reason: impl Into<String>) -> Error {
    Error::Parse {
        line,
        field,
        reason: reason.into(),
    }
}

/// Parses one line of a cascade file. `line_no` is only used in errors.
pub fn parse_cascade_line(line: &str, line_no: usize) -> Result<CascadeRecord> {
    let line = line.trim_end_matches(['\r', '\n']);
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 5 {
        return Err(parse_err(
            line_no,
            "fields",
            alloc::format!("expected 5 tab-separated fields, found {}", fields.len()),
        ));
    }
    let message_id = fields[0].trim();
    if message_id.is_empty() {
        return Err(parse_err(line_no, "msg_id", "empty"));
    }
    let root_user = fields[1].trim();
    if root_user.is_empty() {
        return Err(parse_err(line_no, "root_user", "empty"));
    }
    let root_user = UserId::from(root_user);
    let publish_time: i64 = fields[2]
        .trim()
        .parse()
        .map_err(|_| parse_err(line_no, "publish_time", alloc::format!("not an integer: {:?}", fields[2])))?;
    let final_size: u64 = fields[3]
        .trim()
        .parse()
        .map_err(|_| parse_err(line_no, "final_size", alloc::format!("not a non-negative integer: {:?}", fields[3])))?;

    let mut retweets: Vec<CascadeEvent> = Vec::new();
    let mut earliest: BTreeMap<UserId, usize> = BTreeMap::new();
    for path in fields[4].split_whitespace() {
        let (users, time) = path
            .rsplit_once(':')
            .ok_or_else(|| parse_err(line_no, "path", alloc::format!("missing ':time' in {path:?}")))?;
        let elapsed: u64 = time
            .parse()
            .map_err(|_| parse_err(line_no, "time", alloc::format!("not a non-negative integer: {time:?}")))?;
        let users: Vec<&str> = users.split('/').collect();
        if users.iter().any(|u| u.is_empty()) {
            return Err(parse_err(line_no, "path", alloc::format!("empty user in {path:?}")));
        }
        if users[0] != root_user.as_str() {
            return Err(parse_err(
                line_no,
                "path",
                alloc::format!("{path:?} does not start at root user {root_user}"),
            ));
        }
        let retweeter = UserId::from(users[users.len() - 1]);
        if retweeter == root_user {
            continue;
        }
        let source = UserId::from(users[users.len() - 2]);
        match earliest.get(&retweeter) {
            Some(&idx) if retweets[idx].elapsed <= elapsed => {}
            Some(&idx) => {
                retweets[idx] = CascadeEvent {
                    retweeter,
                    source: Some(source),
                    elapsed,
                };
            }
            None => {
                earliest.insert(retweeter.clone(), retweets.len());
                retweets.push(CascadeEvent {
                    retweeter,
                    source: Some(source),
                    elapsed,
                });
            }
        }
    }
    retweets.sort_by_key(|e| e.elapsed);

    let mut events = Vec::with_capacity(retweets.len() + 1);
    events.push(CascadeEvent {
        retweeter: root_user.clone(),
        source: None,
        elapsed: 0,
    });
    events.extend(retweets);
    Ok(CascadeRecord {
        message_id: message_id.to_string(),
        root_user,
        publish_time,
        events,
        final_size,
    })
}

/// Directed diffusion edge between local node indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CascadeEdge {
    pub source: usize,
    pub target: usize,
    pub elapsed: u64,
}

/// The observed part of one cascade. Nodes are indexed in activation
/// order, so node 0 is always the root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CascadeGraph {
    users: Vec<UserId>,
    activation: Vec<u64>,
    edges: Vec<CascadeEdge>,
    children: Vec<Vec<usize>>,
    window: u64,
}

impl CascadeGraph {
    pub fn node_count(&self) -> usize {
        self.users.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn window(&self) -> u64 {
        self.window
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn user(&self, node: usize) -> &UserId {
        &self.users[node]
    }

    pub fn node_of(&self, user: &UserId) -> Option<usize> {
        self.users.iter().position(|u| u == user)
    }

    pub fn activation(&self, node: usize) -> u64 {
        self.activation[node]
    }

    /// First recorded source of `node`; `None` for the root.
    pub fn parent(&self, node: usize) -> Option<usize> {
        self.edges.iter().find(|e| e.target == node).map(|e| e.source)
    }

    pub fn out_neighbors(&self, node: usize) -> &[usize] {
        &self.children[node]
    }

    pub fn out_degree(&self, node: usize) -> usize {
        self.children[node].len()
    }

    /// Edges in the order they were observed.
    pub fn edges(&self) -> &[CascadeEdge] {
        &self.edges
    }

    /// Builds a graph directly from `(source, target)` local-index edges.
    /// Node 0 is the root. Edges may form any DAG over the nodes, which
    /// makes this handy for tests and small worked examples.
    pub fn from_edges(users: Vec<UserId>, activation: Vec<u64>, edges: &[(usize, usize)], window: u64) -> Result<Self> {
        let n = users.len();
        if n == 0 {
            return Err(Error::EmptyGraph);
        }
        if activation.len() != n {
            return Err(Error::Invalid("activation length differs from node count".into()));
        }
        let mut children = alloc::vec![Vec::new(); n];
        let mut list = Vec::with_capacity(edges.len());
        for &(s, t) in edges {
            if s >= n || t >= n || s == t || children[s].contains(&t) {
                return Err(Error::Invalid(alloc::format!("bad edge {s}->{t}")));
            }
            children[s].push(t);
            list.push(CascadeEdge {
                source: s,
                target: t,
                elapsed: activation[t],
            });
        }
        Ok(CascadeGraph {
            users,
            activation,
            edges: list,
            children,
            window,
        })
    }
}

/// Observed cascade graph: exactly the events with `elapsed < window`.
///
/// A retweet whose source is not among the observed nodes is attached to
/// the root, which keeps every node reachable from the root.
pub fn build_cascade_graph(record: &CascadeRecord, window: u64) -> CascadeGraph {
    let mut users = Vec::new();
    let mut activation = Vec::new();
    let mut edges = Vec::new();
    let mut index: BTreeMap<&UserId, usize> = BTreeMap::new();
    for event in &record.events {
        if !event.is_root() && event.elapsed >= window {
            continue;
        }
        let node = users.len();
        let elapsed = if event.is_root() { 0 } else { event.elapsed };
        if let Some(src) = &event.source {
            edges.push(CascadeEdge {
                source: index.get(src).copied().unwrap_or(0),
                target: node,
                elapsed,
            });
        }
        index.insert(&event.retweeter, node);
        users.push(event.retweeter.clone());
        activation.push(elapsed);
    }
    let mut children = alloc::vec![Vec::new(); users.len()];
    for e in &edges {
        children[e.source].push(e.target);
    }
    CascadeGraph {
        users,
        activation,
        edges,
        children,
        window,
    }
}

/// Incremental popularity: retweets still to come after the window.
/// Clamped at 0 (with a warning) for records whose final size is smaller
/// than what was already observed.
pub fn compute_label(record: &CascadeRecord, window: u64) -> u64 {
    let observed = record.observed_count(window);
    if observed > record.final_size {
        log::warn!(
            "cascade {}: final_size {} below observed count {}; label clamped to 0",
            record.message_id,
            record.final_size,
            observed
        );
        0
    } else {
        record.final_size - observed
    }
}

/// Undirected union of all diffusion pairs, nodes indexed by sorted user id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GlobalSocialGraph {
    users: Vec<UserId>,
    adjacency: Vec<Vec<usize>>,
}

impl GlobalSocialGraph {
    pub fn node_count(&self) -> usize {
        self.users.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn users(&self) -> &[UserId] {
        &self.users
    }

    pub fn index_of(&self, user: &UserId) -> Option<usize> {
        self.users.binary_search(user).ok()
    }

    /// Sorted neighbor indices.
    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adjacency[a].binary_search(&b).is_ok()
    }

    /// Each undirected edge once, as `(a, b)` with `a < b`, in index order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(a, ns)| ns.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
            .collect()
    }

    /// Rebuilds a graph from its user table and [`Self::edge_list`].
    /// Users must be strictly increasing.
    pub fn from_parts(users: Vec<UserId>, edges: &[(usize, usize)]) -> Result<Self> {
        if users.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid("user table is not strictly sorted".into()));
        }
        let n = users.len();
        if let Some(&(a, b)) = edges.iter().find(|&&(a, b)| a >= n || b >= n || a == b) {
            return Err(Error::Invalid(alloc::format!("bad social edge {a}-{b}")));
        }
        let mut g = Self::from_index_edges(n, edges);
        g.users = users;
        Ok(g)
    }

    /// Builds a graph from dense-index edges over `n` anonymous users named
    /// `0..n`. Handy for tests and oracles.
    pub fn from_index_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let users: Vec<UserId> = (0..n).map(|i| UserId::new(i.to_string())).collect();
        let mut adjacency = alloc::vec![Vec::new(); n];
        for &(a, b) in edges {
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        GlobalSocialGraph { users, adjacency }
    }
}

/// Union graph over every `(source, retweeter)` pair of the given records.
pub fn build_global_graph<'a>(records: impl IntoIterator<Item = &'a CascadeRecord>) -> GlobalSocialGraph {
    let mut pairs: Vec<(&UserId, &UserId)> = Vec::new();
    let mut users: Vec<&UserId> = Vec::new();
    for record in records {
        for event in &record.events {
            users.push(&event.retweeter);
            if let Some(src) = &event.source {
                users.push(src);
                pairs.push((src, &event.retweeter));
            }
        }
    }
    users.sort();
    users.dedup();
    let users: Vec<UserId> = users.into_iter().cloned().collect();
    let lookup = |u: &UserId| users.binary_search(u).expect("user was collected above");
    let mut adjacency = alloc::vec![Vec::new(); users.len()];
    for (s, t) in pairs {
        let (a, b) = (lookup(s), lookup(t));
        if a != b {
            adjacency[a].push(b);
            adjacency[b].push(a);
        }
    }
    for list in &mut adjacency {
        list.sort_unstable();
        list.dedup();
    }
    GlobalSocialGraph { users, adjacency }
}
