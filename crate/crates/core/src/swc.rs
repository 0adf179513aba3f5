//! SWC skeleton trees: parsing, validation, writing and the queries used by
//! the connectivity metric.
//!
//! A record is seven whitespace separated fields:
//! `id type x y z radius parent`, with `parent = -1` marking a root.
//! Coordinates and radii are micrometers. Several roots are allowed, so the
//! container is a forest.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwcError {
    #[error("line {line}: malformed SWC record: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("{}duplicate node id {id}", at_line(*line))]
    DuplicateId { id: u64, line: Option<usize> },
    #[error("{}node {id} refers to missing parent {parent}", at_line(*line))]
    DanglingParent {
        id: u64,
        parent: u64,
        line: Option<usize>,
    },
    #[error("{}node {id} is its own ancestor", at_line(*line))]
    CycleDetected { id: u64, line: Option<usize> },
    #[error("bounding box has zero extent")]
    DegenerateBox,
}

fn at_line(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwcNode {
    pub id: u64,
    pub type_code: i32,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub radius: f64,
    /// `None` for a root (written as `-1`).
    pub parent: Option<u64>,
}

impl SwcNode {
    pub fn new(id: u64, pos: [f64; 3], radius: f64, parent: Option<u64>) -> Self {
        Self {
            id,
            type_code: 0,
            x: pos[0],
            y: pos[1],
            z: pos[2],
            radius,
            parent,
        }
    }

    /// Position as `[x, y, z]` in micrometers.
    pub fn pos(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// A validated set of SWC nodes whose parent links form a forest.
///
/// Equality compares nodes only; comment lines are carried as metadata.
#[derive(Debug, Clone, Default)]
pub struct SwcForest {
    nodes: Vec<SwcNode>,
    index: HashMap<u64, usize>,
    children: BTreeMap<u64, Vec<u64>>,
    /// Comment lines without the leading `#`, emitted first on write.
    pub header: Vec<String>,
}

impl PartialEq for SwcForest {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
    }
}

impl SwcForest {
    pub fn new(nodes: Vec<SwcNode>) -> Result<Self, SwcError> {
        Self::build(nodes, None)
    }

    pub fn empty() -> Self {
        Self::default()
    }

    fn build(nodes: Vec<SwcNode>, lines: Option<&[usize]>) -> Result<Self, SwcError> {
        let line_of = |i: usize| lines.map(|l| l[i]);
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, n) in nodes.iter().enumerate() {
            if index.insert(n.id, i).is_some() {
                return Err(SwcError::DuplicateId {
                    id: n.id,
                    line: line_of(i),
                });
            }
        }
        let mut children: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for (i, n) in nodes.iter().enumerate() {
            if let Some(p) = n.parent {
                if !index.contains_key(&p) {
                    return Err(SwcError::DanglingParent {
                        id: n.id,
                        parent: p,
                        line: line_of(i),
                    });
                }
                children.entry(p).or_default().push(n.id);
            }
        }

        // Walk parent chains; 0 = unvisited, 1 = on current chain, 2 = known to reach a root.
        let mut state = vec![0u8; nodes.len()];
        let mut chain = Vec::new();
        for start in 0..nodes.len() {
            let mut cur = start;
            chain.clear();
            loop {
                match state[cur] {
                    2 => break,
                    1 => {
                        return Err(SwcError::CycleDetected {
                            id: nodes[cur].id,
                            line: line_of(cur),
                        })
                    }
                    _ => {}
                }
                state[cur] = 1;
                chain.push(cur);
                match nodes[cur].parent {
                    Some(p) => cur = index[&p],
                    None => break,
                }
            }
            for &c in &chain {
                state[c] = 2;
            }
        }

        Ok(Self {
            nodes,
            index,
            children,
            header: Vec::new(),
        })
    }

    pub fn with_header(mut self, header: Vec<String>) -> Self {
        self.header = header;
        self
    }

    /// Nodes in their original order.
    pub fn nodes(&self) -> &[SwcNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: u64) -> Option<&SwcNode> {
        self.index.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn children(&self, id: u64) -> &[u64] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn roots(&self) -> impl Iterator<Item = &SwcNode> {
        self.nodes.iter().filter(|n| n.parent.is_none())
    }

    /// Number of parent links.
    pub fn edge_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.parent.is_some()).count()
    }

    /// Nodes ordered so that every parent precedes its children. Input order
    /// is kept wherever it already satisfies that.
    pub fn topological_order(&self) -> Vec<&SwcNode> {
        let mut emitted = vec![false; self.nodes.len()];
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut pending = Vec::new();
        for start in 0..self.nodes.len() {
            let mut cur = start;
            while !emitted[cur] {
                pending.push(cur);
                match self.nodes[cur].parent {
                    Some(p) => cur = self.index[&p],
                    None => break,
                }
            }
            while let Some(i) = pending.pop() {
                if !emitted[i] {
                    emitted[i] = true;
                    out.push(&self.nodes[i]);
                }
            }
        }
        out
    }
}

/// Parses SWC text. Comment lines become the forest header.
pub fn parse_swc(text: &[u8]) -> Result<SwcForest, SwcError> {
    let text = String::from_utf8_lossy(text);
    let mut nodes = Vec::new();
    let mut lines = Vec::new();
    let mut header = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            header.push(comment.strip_prefix(' ').unwrap_or(comment).to_string());
            continue;
        }
        nodes.push(parse_record(line, lineno)?);
        lines.push(lineno);
    }
    Ok(SwcForest::build(nodes, Some(&lines))?.with_header(header))
}

fn parse_record(line: &str, lineno: usize) -> Result<SwcNode, SwcError> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    let bad = |reason: String| SwcError::MalformedLine {
        line: lineno,
        reason,
    };
    if fields.len() != 7 {
        return Err(bad(format!("expected 7 fields, found {}", fields.len())));
    }
    let id: u64 = fields[0]
        .parse()
        .map_err(|_| bad(format!("invalid id {:?}", fields[0])))?;
    if id == 0 {
        return Err(bad("node id must be positive".into()));
    }
    let type_code: i32 = fields[1]
        .parse()
        .map_err(|_| bad(format!("invalid type {:?}", fields[1])))?;
    let mut reals = [0.0f64; 4];
    for (k, slot) in reals.iter_mut().enumerate() {
        let s = fields[2 + k];
        *slot = s
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| bad(format!("invalid number {s:?}")))?;
    }
    if reals[3] < 0.0 {
        return Err(bad(format!("negative radius {}", reals[3])));
    }
    let parent: i64 = fields[6]
        .parse()
        .map_err(|_| bad(format!("invalid parent {:?}", fields[6])))?;
    let parent = match parent {
        -1 => None,
        p if p >= 1 => Some(p as u64),
        p => return Err(bad(format!("invalid parent {p}"))),
    };
    Ok(SwcNode {
        id,
        type_code,
        x: reals[0],
        y: reals[1],
        z: reals[2],
        radius: reals[3],
        parent,
    })
}

/// Writes SWC text, header first, parents before children. Reals use the
/// shortest representation that parses back to the same value.
pub fn write_swc(forest: &SwcForest) -> String {
    let mut out = String::new();
    if forest.header.is_empty() {
        out.push_str("# neurite-recon SWC\n");
    }
    for h in &forest.header {
        let _ = writeln!(out, "# {h}");
    }
    for n in forest.topological_order() {
        let parent = n.parent.map(|p| p as i64).unwrap_or(-1);
        let _ = writeln!(
            out,
            "{} {} {:?} {:?} {:?} {:?} {}",
            n.id, n.type_code, n.x, n.y, n.z, n.radius, parent
        );
    }
    out
}

/// Axis-aligned box in micrometers, `[x, y, z]` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Aabb {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Self {
        Self { min, max }
    }

    /// Smallest box containing every node of the given forests.
    pub fn enclosing<'a>(forests: impl IntoIterator<Item = &'a SwcForest>) -> Option<Self> {
        let mut b: Option<Aabb> = None;
        for f in forests {
            for n in f.nodes() {
                let p = n.pos();
                let bb = b.get_or_insert(Aabb::new(p, p));
                for k in 0..3 {
                    bb.min[k] = bb.min[k].min(p[k]);
                    bb.max[k] = bb.max[k].max(p[k]);
                }
            }
        }
        b
    }

    fn is_degenerate(&self) -> bool {
        (0..3).any(|k| !(self.max[k] > self.min[k]))
    }

    fn near_face(&self, p: [f64; 3], margin: f64) -> bool {
        (0..3).any(|k| p[k] - self.min[k] <= margin || self.max[k] - p[k] <= margin)
    }
}

/// Terminal nodes: leaves, roots with at most one child, and nodes within
/// `margin` of a box face. Sorted by id.
pub fn terminals(forest: &SwcForest, bbox: &Aabb, margin: f64) -> Result<Vec<u64>, SwcError> {
    if bbox.is_degenerate() {
        return Err(SwcError::DegenerateBox);
    }
    let mut ids: Vec<u64> = forest
        .nodes()
        .iter()
        .filter(|n| {
            let nc = forest.children(n.id).len();
            nc == 0 || (n.parent.is_none() && nc <= 1) || bbox.near_face(n.pos(), margin)
        })
        .map(|n| n.id)
        .collect();
    ids.sort_unstable();
    Ok(ids)
}

/// One group of node ids per tree, in order of the roots' file position.
/// Ids inside a group are ascending.
pub fn forest_components(forest: &SwcForest) -> Vec<Vec<u64>> {
    let mut groups = Vec::new();
    let mut stack = Vec::new();
    for root in forest.roots() {
        let mut group = Vec::new();
        stack.push(root.id);
        while let Some(id) = stack.pop() {
            group.push(id);
            stack.extend_from_slice(forest.children(id));
        }
        group.sort_unstable();
        groups.push(group);
    }
    groups
}

/// Map from node id to the index of its group in [`forest_components`].
pub fn component_of(forest: &SwcForest) -> HashMap<u64, usize> {
    forest_components(forest)
        .into_iter()
        .enumerate()
        .flat_map(|(c, g)| g.into_iter().map(move |id| (id, c)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(ids: std::ops::RangeInclusive<u64>, x0: f64) -> Vec<SwcNode> {
        let start = *ids.start();
        ids.map(|id| {
            let parent = (id > start).then(|| id - 1);
            SwcNode::new(id, [x0, (id - start) as f64, 5.0], 1.0, parent)
        })
        .collect()
    }

    #[test]
    fn minimal_root_record() {
        let f = parse_swc(b"1 0 0.0 0.0 0.0 1.0 -1").unwrap();
        assert_eq!(f.len(), 1);
        let n = f.nodes()[0];
        assert_eq!(n.parent, None);
        assert_eq!(n.pos(), [0.0; 3]);
        assert_eq!(n.radius, 1.0);
    }

    #[test]
    fn two_cycle_is_rejected() {
        let err = parse_swc(b"1 0 0 0 0 1 2\n2 0 1 0 0 1 1").unwrap_err();
        assert!(matches!(err, SwcError::CycleDetected { .. }), "{err}");
    }

    #[test]
    fn self_parent_is_a_cycle() {
        let err = parse_swc(b"1 0 0 0 0 1 1").unwrap_err();
        assert!(matches!(err, SwcError::CycleDetected { id: 1, .. }));
    }

    #[test]
    fn error_paths_name_the_line() {
        let err = parse_swc(b"# c\n1 0 0 0 0 1 -1\n2 0 0 0 1 -1").unwrap_err();
        assert_eq!(
            err,
            SwcError::MalformedLine {
                line: 3,
                reason: "expected 7 fields, found 6".into()
            }
        );
        let err = parse_swc(b"1 0 0 0 0 1 -1\n1 0 0 0 0 1 -1").unwrap_err();
        assert_eq!(err, SwcError::DuplicateId { id: 1, line: Some(2) });
        let err = parse_swc(b"1 0 0 0 0 1 -1\n2 0 0 0 0 1 7").unwrap_err();
        assert_eq!(
            err,
            SwcError::DanglingParent {
                id: 2,
                parent: 7,
                line: Some(2)
            }
        );
        assert!(matches!(
            parse_swc(b"1 0 0 zero 0 1 -1"),
            Err(SwcError::MalformedLine { line: 1, .. })
        ));
        assert!(matches!(
            parse_swc(b"1 0 0 0 0 1 -3"),
            Err(SwcError::MalformedLine { .. })
        ));
    }

    #[test]
    fn forward_parent_references_resolve() {
        let f = parse_swc(b"2 3 1 0 0 1 1\n\n1 1 0 0 0 2 -1\n").unwrap();
        assert_eq!(f.children(1), &[2]);
        let text = write_swc(&f);
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert!(data[0].starts_with("1 "));
        assert!(data[1].starts_with("2 "));
    }

    #[test]
    fn empty_forest_writes_header_only() {
        let text = write_swc(&SwcForest::empty());
        assert!(text.lines().all(|l| l.starts_with('#')));
        assert_eq!(text.lines().count(), 1);
    }

    #[test]
    fn single_node_writes_one_record() {
        let f = SwcForest::new(vec![SwcNode::new(1, [0.5, 1.25, -3.0], 2.0, None)]).unwrap();
        let text = write_swc(&f);
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data, vec!["1 0 0.5 1.25 -3.0 2.0 -1"]);
    }

    #[test]
    fn header_is_preserved() {
        let f = SwcForest::new(vec![SwcNode::new(1, [0.0; 3], 1.0, None)])
            .unwrap()
            .with_header(vec!["tool: x".into(), "epsilon = 1".into()]);
        let g = parse_swc(write_swc(&f).as_bytes()).unwrap();
        assert_eq!(g.header, f.header);
    }

    #[test]
    fn single_node_is_terminal() {
        let f = SwcForest::new(vec![SwcNode::new(4, [5.0; 3], 1.0, None)]).unwrap();
        let b = Aabb::new([0.0; 3], [10.0; 3]);
        assert_eq!(terminals(&f, &b, 0.0).unwrap(), vec![4]);
    }

    #[test]
    fn straight_interior_path_has_two_terminals() {
        let f = SwcForest::new(path(1..=10, 5.0)).unwrap();
        let b = Aabb::new([-20.0; 3], [20.0; 3]);
        assert_eq!(terminals(&f, &b, 1.0).unwrap(), vec![1, 10]);
    }

    #[test]
    fn y_tree_with_tip_on_boundary() {
        // stem 1-2-3 along y, branch point 3, arms 4-5 and 6-7; tip 7 sits on x = 0.
        let nodes = vec![
            SwcNode::new(1, [5.0, 1.0, 5.0], 1.0, None),
            SwcNode::new(2, [5.0, 2.0, 5.0], 1.0, Some(1)),
            SwcNode::new(3, [5.0, 3.0, 5.0], 1.0, Some(2)),
            SwcNode::new(4, [6.0, 4.0, 5.0], 1.0, Some(3)),
            SwcNode::new(5, [7.0, 5.0, 5.0], 1.0, Some(4)),
            SwcNode::new(6, [3.0, 4.0, 5.0], 1.0, Some(3)),
            SwcNode::new(7, [0.0, 5.0, 5.0], 1.0, Some(6)),
        ];
        let f = SwcForest::new(nodes).unwrap();
        let b = Aabb::new([0.0, -10.0, 0.0], [10.0, 10.0, 10.0]);
        // Hand enumeration: leaves 5, 7; root 1 has one child; 7 is also within 1 of x = 0.
        // Node 6 at x = 3 is 3 away from the face, so not a terminal.
        assert_eq!(terminals(&f, &b, 1.0).unwrap(), vec![1, 5, 7]);
    }

    #[test]
    fn degenerate_box() {
        let f = SwcForest::new(path(1..=2, 0.0)).unwrap();
        let b = Aabb::new([0.0; 3], [1.0, 0.0, 1.0]);
        assert_eq!(terminals(&f, &b, 1.0), Err(SwcError::DegenerateBox));
    }

    #[test]
    fn components_of_two_disjoint_trees() {
        let mut nodes = path(1..=2, 0.0);
        nodes.extend(path(3..=4, 4.0));
        let f = SwcForest::new(nodes).unwrap();
        assert_eq!(forest_components(&f), vec![vec![1, 2], vec![3, 4]]);
        let one = SwcForest::new(path(1..=5, 0.0)).unwrap();
        assert_eq!(forest_components(&one).len(), 1);
    }
}
