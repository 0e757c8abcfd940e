//! Spanning-tree gauge fixing, fundamental cycles and holonomy.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::atlas::Edge;
use crate::error::{Error, Result};
use crate::linalg::distance_from_identity;
use crate::stats;
use crate::transport::EdgeTransport;

/// Orthogonal defects on canonical edges `(a, b)`, `a < b`; the stored
/// matrix maps chart `a` to chart `b` and reverse traversal uses its
/// transpose.
#[derive(Debug, Clone, Default)]
pub struct DefectGraph {
    edges: Vec<Edge>,
    defects: Vec<DMatrix<f64>>,
}

impl DefectGraph {
    /// Accepts either orientation; `(b, a, g)` is stored as `(a, b, gᵀ)`.
    pub fn new(entries: Vec<(Edge, DMatrix<f64>)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((a, b), g) in entries {
            if a == b {
                return Err(Error::GraphStructure(format!("self-loop at {a}")));
            }
            let (key, g) = if a < b { ((a, b), g) } else { ((b, a), g.transpose()) };
            if map.insert(key, g).is_some() {
                return Err(Error::GraphStructure(format!("duplicate edge {key:?}")));
            }
        }
        let (edges, defects) = map.into_iter().unzip();
        Ok(DefectGraph { edges, defects })
    }

    /// Defect graph of the given transports, leaving out edges with a
    /// degenerate proxy.
    pub fn from_transports<'a>(records: impl IntoIterator<Item = &'a EdgeTransport>) -> Self {
        let entries = records
            .into_iter()
            .filter(|r| !r.proxy_degenerate)
            .map(|r| (r.edge, r.g.clone()))
            .collect();
        Self::new(entries).expect("transport records are keyed by distinct canonical edges")
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Defect for traversing `from → to`.
    pub fn defect(&self, from: usize, to: usize) -> Option<DMatrix<f64>> {
        let key = (from.min(to), from.max(to));
        let i = self.edges.binary_search(&key).ok()?;
        Some(if from < to { self.defects[i].clone() } else { self.defects[i].transpose() })
    }

    /// Applies the gauge `g_ba ↦ W_b g_ba W_aᵀ`; `gauges` is indexed by vertex.
    pub fn regauged(&self, gauges: &[DMatrix<f64>]) -> Self {
        let defects = self
            .edges
            .iter()
            .zip(&self.defects)
            .map(|(&(a, b), g)| &gauges[b] * g * gauges[a].transpose())
            .collect();
        DefectGraph { edges: self.edges.clone(), defects }
    }
}

fn adjacency(edges: &[Edge]) -> BTreeMap<usize, Vec<usize>> {
    let mut adj: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    for list in adj.values_mut() {
        list.sort_unstable();
    }
    adj
}

/// Vertices of the largest connected component among edge-incident
/// vertices (the component with the lowest vertex wins ties), sorted.
pub fn largest_component(edges: &[Edge]) -> Vec<usize> {
    let adj = adjacency(edges);
    let mut seen = BTreeSet::new();
    let mut best: Vec<usize> = Vec::new();
    for &start in adj.keys() {
        if seen.contains(&start) {
            continue;
        }
        let mut comp = Vec::new();
        let mut queue = VecDeque::from([start]);
        seen.insert(start);
        while let Some(x) = queue.pop_front() {
            comp.push(x);
            for &y in &adj[&x] {
                if seen.insert(y) {
                    queue.push_back(y);
                }
            }
        }
        if comp.len() > best.len() {
            comp.sort_unstable();
            best = comp;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    pub root: usize,
    /// Vertices in BFS visiting order.
    pub order: Vec<usize>,
    pub parent: BTreeMap<usize, usize>,
    pub depth: BTreeMap<usize, usize>,
    pub tree_edges: Vec<Edge>,
    pub chords: Vec<Edge>,
}

impl SpanningTree {
    pub fn contains(&self, v: usize) -> bool {
        self.depth.contains_key(&v)
    }
}

/// BFS tree of a connected edge set from its lowest vertex, neighbours in
/// ascending order. Every edge not in the tree is a chord.
pub fn bfs_tree(edges: &[Edge]) -> Option<SpanningTree> {
    let adj = adjacency(edges);
    let root = *adj.keys().next()?;
    let mut parent = BTreeMap::new();
    let mut depth = BTreeMap::from([(root, 0)]);
    let mut order = Vec::new();
    let mut queue = VecDeque::from([root]);
    while let Some(x) = queue.pop_front() {
        order.push(x);
        for &y in &adj[&x] {
            if !depth.contains_key(&y) {
                depth.insert(y, depth[&x] + 1);
                parent.insert(y, x);
                queue.push_back(y);
            }
        }
    }
    let mut tree_edges: Vec<Edge> = parent.iter().map(|(&c, &p)| (c.min(p), c.max(p))).collect();
    tree_edges.sort_unstable();
    let chords = edges
        .iter()
        .copied()
        .filter(|e| tree_edges.binary_search(e).is_err() && depth.contains_key(&e.0))
        .collect();
    Some(SpanningTree { root, order, parent, depth, tree_edges, chords })
}

/// `U_root = I`, `U_v = U_parent · g(v → parent)` in BFS order.
pub fn spanning_tree_gauge(graph: &DefectGraph, tree: &SpanningTree, k: usize) -> Result<BTreeMap<usize, DMatrix<f64>>> {
    let mut gauges = BTreeMap::new();
    gauges.insert(tree.root, DMatrix::identity(k, k));
    for &v in tree.order.iter().skip(1) {
        let p = tree.parent[&v];
        let g = graph
            .defect(v, p)
            .ok_or_else(|| Error::GraphStructure(format!("tree edge ({v},{p}) has no defect")))?;
        let u = &gauges[&p] * g;
        gauges.insert(v, u);
    }
    Ok(gauges)
}

/// Loop `a → (tree path) → b`, closed by the chord step `b → a`, where
/// `a < b` are the chord endpoints. Returned as the vertex sequence
/// `[a, …, b]`; the closing step is implicit.
pub fn fundamental_cycle(tree: &SpanningTree, chord: Edge) -> Result<Vec<usize>> {
    let (a, b) = (chord.0.min(chord.1), chord.0.max(chord.1));
    for v in [a, b] {
        if !tree.contains(v) {
            return Err(Error::GraphStructure(format!("chord endpoint {v} is not in the tree")));
        }
    }
    let (mut x, mut y) = (a, b);
    let mut up = Vec::new();
    let mut down = Vec::new();
    while tree.depth[&x] > tree.depth[&y] {
        up.push(x);
        x = tree.parent[&x];
    }
    while tree.depth[&y] > tree.depth[&x] {
        down.push(y);
        y = tree.parent[&y];
    }
    while x != y {
        up.push(x);
        down.push(y);
        x = tree.parent[&x];
        y = tree.parent[&y];
    }
    up.push(x);
    up.extend(down.into_iter().rev());
    Ok(up)
}

/// `h = g(c_{L−1} → c_0) ⋯ g(c_1 → c_2) g(c_0 → c_1)` and
/// `D_hol = ‖h − I‖_F / √(2k)` for the closed loop `c_0 → … → c_{L−1} → c_0`.
pub fn holonomy(lp: &[usize], graph: &DefectGraph, k: usize) -> Result<(DMatrix<f64>, f64)> {
    let mut h = DMatrix::identity(k, k);
    let n = lp.len();
    if n >= 2 {
        for i in 0..n {
            let (x, y) = (lp[i], lp[(i + 1) % n]);
            let g = graph
                .defect(x, y)
                .ok_or_else(|| Error::GraphStructure(format!("loop step {x}→{y} has no defect")))?;
            h = g * h;
        }
    }
    let d = distance_from_identity(&h) / libm::sqrt(2.0 * k as f64);
    Ok((h, d))
}

#[derive(Debug, Clone)]
pub struct GaugeReport {
    pub k: usize,
    pub lcc_vertices: Vec<usize>,
    pub lcc_edges: Vec<Edge>,
    pub tree: Option<SpanningTree>,
    pub vertex_gauges: BTreeMap<usize, DMatrix<f64>>,
    /// Parallel to `tree.tree_edges`.
    pub tree_residuals: Vec<f64>,
    /// The remaining vectors are parallel to `tree.chords`.
    pub chord_residuals: Vec<f64>,
    pub cycles: Vec<Vec<usize>>,
    pub holonomies: Vec<DMatrix<f64>>,
    pub holonomy_defects: Vec<f64>,
    pub d_hol: Vec<f64>,
}

impl GaugeReport {
    pub fn chords(&self) -> &[Edge] {
        self.tree.as_ref().map(|t| t.chords.as_slice()).unwrap_or(&[])
    }

    pub fn tree_edges(&self) -> &[Edge] {
        self.tree.as_ref().map(|t| t.tree_edges.as_slice()).unwrap_or(&[])
    }
}

fn residual(graph: &DefectGraph, gauges: &BTreeMap<usize, DMatrix<f64>>, (a, b): Edge) -> f64 {
    let g = graph.defect(a, b).expect("edge present");
    distance_from_identity(&(&gauges[&b] * g * gauges[&a].transpose()))
}

/// Gauge fixing on the largest connected component. An empty graph yields
/// an empty report.
pub fn gauge_fix(graph: &DefectGraph, k: usize) -> Result<GaugeReport> {
    let lcc = largest_component(graph.edges());
    let members: BTreeSet<usize> = lcc.iter().copied().collect();
    let lcc_edges: Vec<Edge> = graph.edges().iter().copied().filter(|e| members.contains(&e.0)).collect();
    let mut report = GaugeReport {
        k,
        lcc_vertices: lcc,
        lcc_edges,
        tree: None,
        vertex_gauges: BTreeMap::new(),
        tree_residuals: Vec::new(),
        chord_residuals: Vec::new(),
        cycles: Vec::new(),
        holonomies: Vec::new(),
        holonomy_defects: Vec::new(),
        d_hol: Vec::new(),
    };
    let Some(tree) = bfs_tree(&report.lcc_edges) else {
        return Ok(report);
    };
    let gauges = spanning_tree_gauge(graph, &tree, k)?;
    report.tree_residuals = tree.tree_edges.iter().map(|&e| residual(graph, &gauges, e)).collect();
    for &chord in &tree.chords {
        report.chord_residuals.push(residual(graph, &gauges, chord));
        let cycle = fundamental_cycle(&tree, chord)?;
        let (h, d) = holonomy(&cycle, graph, k)?;
        report.holonomy_defects.push(distance_from_identity(&h));
        report.holonomies.push(h);
        report.d_hol.push(d);
        report.cycles.push(cycle);
    }
    report.vertex_gauges = gauges;
    report.tree = Some(tree);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaugeSummary {
    pub lcc_size: usize,
    pub lcc_edges: usize,
    pub n_chords: usize,
    pub tree_residual_mean: Option<f64>,
    pub tree_residual_max: Option<f64>,
    pub chord_residual_mean: Option<f64>,
    pub chord_residual_max: Option<f64>,
    pub holonomy_mean: Option<f64>,
    pub holonomy_max: Option<f64>,
    pub gap_mean: Option<f64>,
    pub gap_max: Option<f64>,
    pub d_hol_mean: Option<f64>,
    pub d_hol_median: Option<f64>,
    pub d_hol_max: Option<f64>,
}

fn max_of(xs: &[f64]) -> Option<f64> {
    xs.iter().copied().reduce(f64::max)
}

pub fn gauge_identity_check(report: &GaugeReport) -> GaugeSummary {
    let gaps: Vec<f64> = report
        .chord_residuals
        .iter()
        .zip(&report.holonomy_defects)
        .map(|(c, h)| (c - h).abs())
        .collect();
    GaugeSummary {
        lcc_size: report.lcc_vertices.len(),
        lcc_edges: report.lcc_edges.len(),
        n_chords: report.chords().len(),
        tree_residual_mean: stats::mean(&report.tree_residuals),
        tree_residual_max: max_of(&report.tree_residuals),
        chord_residual_mean: stats::mean(&report.chord_residuals),
        chord_residual_max: max_of(&report.chord_residuals),
        holonomy_mean: stats::mean(&report.holonomy_defects),
        holonomy_max: max_of(&report.holonomy_defects),
        gap_mean: stats::mean(&gaps),
        gap_max: max_of(&gaps),
        d_hol_mean: stats::mean(&report.d_hol),
        d_hol_median: stats::median(&report.d_hol),
        d_hol_max: max_of(&report.d_hol),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceRow {
    pub s_min: f64,
    pub retained_edges: usize,
    pub lcc_edges: usize,
    pub lcc_size: usize,
    pub n_chords: usize,
    pub d_hol_mean: Option<f64>,
    pub d_hol_max: Option<f64>,
}

/// One gauge fix per threshold on the transports with `σ_min ≥ s_min`.
pub fn persistence_sweep(transports: &[EdgeTransport], thresholds: &[f64], k: usize) -> Result<Vec<PersistenceRow>> {
    if thresholds.windows(2).any(|w| w[0] > w[1]) || thresholds.iter().any(|t| !(*t >= 0.0)) {
        return Err(Error::Config("persistence thresholds must be non-negative and ascending".into()));
    }
    thresholds
        .iter()
        .map(|&s| {
            let kept = crate::transport::persistence_filter(transports, s);
            let graph = DefectGraph::from_transports(kept.iter().copied());
            let report = gauge_fix(&graph, k)?;
            let summary = gauge_identity_check(&report);
            Ok(PersistenceRow {
                s_min: s,
                retained_edges: kept.len(),
                lcc_edges: summary.lcc_edges,
                lcc_size: summary.lcc_size,
                n_chords: summary.n_chords,
                d_hol_mean: summary.d_hol_mean,
                d_hol_max: summary.d_hol_max,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius, haar_orthogonal, rotation2};
    use crate::seed::rng_from;
    use alloc::vec;

    #[test]
    fn path_graph_tree_residuals_vanish() {
        let mut rng = rng_from(1, &[]);
        let g = DefectGraph::new(vec![((0, 1), haar_orthogonal(3, &mut rng)), ((1, 2), haar_orthogonal(3, &mut rng))]).unwrap();
        let r = gauge_fix(&g, 3).unwrap();
        assert!(r.tree_residuals.iter().all(|&x| x <= 1e-12));
        assert!(r.chords().is_empty());
    }

    #[test]
    fn identity_defects_give_identity_gauges() {
        let id = DMatrix::identity(2, 2);
        let g = DefectGraph::new(vec![((0, 1), id.clone()), ((1, 2), id.clone()), ((0, 2), id.clone())]).unwrap();
        let r = gauge_fix(&g, 2).unwrap();
        assert!(r.vertex_gauges.values().all(|u| frobenius(&(u - &id)) == 0.0));
        assert_eq!(r.d_hol, vec![0.0]);
    }

    #[test]
    fn triangle_chord_matches_rotation_sum() {
        let (t1, t2, t3) = (0.3, -1.1, 0.5);
        // loop 0 → 1 → 2 → 0 with each step rotating by its angle
        let g = DefectGraph::new(vec![((0, 1), rotation2(t1)), ((1, 2), rotation2(t2)), ((2, 0), rotation2(t3))]).unwrap();
        let r = gauge_fix(&g, 2).unwrap();
        assert_eq!(r.chords(), &[(1, 2)]);
        assert_eq!(r.cycles[0], vec![1, 0, 2]);
        let expected = distance_from_identity(&rotation2(t1 + t2 + t3));
        assert!((r.chord_residuals[0] - expected).abs() < 1e-12);
        assert!((r.holonomy_defects[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn quarter_turn_loop_has_unit_defect() {
        let g = DefectGraph::new(vec![((0, 1), rotation2(core::f64::consts::FRAC_PI_2)), ((1, 2), DMatrix::identity(2, 2)), ((0, 2), DMatrix::identity(2, 2))]).unwrap();
        let (h, d) = holonomy(&[0, 1, 2], &g, 2).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        let (hr, dr) = holonomy(&[2, 1, 0], &g, 2).unwrap();
        assert!(frobenius(&(hr - h.transpose())) < 1e-12);
        assert!((dr - d).abs() < 1e-12);
        assert!(matches!(holonomy(&[0, 3, 2], &g, 2), Err(Error::GraphStructure(_))));
    }

    #[test]
    fn triangle_loop_shape() {
        let tree = bfs_tree(&[(0, 1), (0, 2), (1, 2)]).unwrap();
        assert_eq!(fundamental_cycle(&tree, (1, 2)).unwrap(), vec![1, 0, 2]);
        assert!(matches!(fundamental_cycle(&tree, (1, 9)), Err(Error::GraphStructure(_))));
    }

    #[test]
    fn largest_component_and_empty_graph() {
        assert_eq!(largest_component(&[(0, 1), (5, 6), (6, 7)]), vec![5, 6, 7]);
        assert_eq!(largest_component(&[(0, 1), (5, 6)]), vec![0, 1]);
        let r = gauge_fix(&DefectGraph::default(), 2).unwrap();
        assert!(r.lcc_vertices.is_empty() && r.d_hol.is_empty());
        let s = gauge_identity_check(&r);
        assert_eq!(s.d_hol_mean, None);
    }

    #[test]
    fn reversed_orientation_is_canonicalized() {
        let r = rotation2(0.4);
        let g = DefectGraph::new(vec![((3, 1), r.clone())]).unwrap();
        assert!(frobenius(&(g.defect(3, 1).unwrap() - &r)) < 1e-15);
        let fwd_back = g.defect(1, 3).unwrap() * g.defect(3, 1).unwrap();
        assert!(distance_from_identity(&fwd_back) < 1e-12);
        assert!(DefectGraph::new(vec![((1, 3), r.clone()), ((3, 1), r)]).is_err());
    }
}
