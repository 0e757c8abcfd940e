//! Stage orchestration: ingest → atlas → transport → gauge → shear →
//! jamming → bootstrap → null, with per-stage outputs and `report.json`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::{anyhow, bail, Context, Result};
use gaugeatlas::atlas::{self, Atlas, AtlasParams};
use gaugeatlas::gauge::{self, DefectGraph, GaugeReport, GaugeSummary, PersistenceRow};
use gaugeatlas::jamming::{self, ChartJamming, JammingParams, JammingSummary};
use gaugeatlas::seed::derive_seed;
use gaugeatlas::stability::{self, BootstrapParams, EdgeSample};
use gaugeatlas::stats::{self, Summary};
use gaugeatlas::transport::{self, EdgeTransport, SLACK_REPORT_FLOOR};
use gaugeatlas::SampleMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::ingest::{self, Dataset};
use crate::output::*;
use crate::persist;

pub const REPORT_SCHEMA: &str = "gaugeatlas.run-report/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Atlas,
    Transport,
    Gauge,
    Shear,
    Jamming,
    Bootstrap,
    Null,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Atlas => "atlas",
            Stage::Transport => "transport",
            Stage::Gauge => "gauge",
            Stage::Shear => "shear",
            Stage::Jamming => "jamming",
            Stage::Bootstrap => "bootstrap",
            Stage::Null => "null",
        }
    }

    fn requires(self) -> &'static [Stage] {
        match self {
            Stage::Atlas | Stage::Jamming => &[Stage::Atlas],
            Stage::Transport | Stage::Shear => &[Stage::Atlas, Stage::Transport],
            Stage::Gauge => &[Stage::Atlas, Stage::Transport],
            Stage::Bootstrap | Stage::Null => &[Stage::Atlas, Stage::Transport, Stage::Gauge],
        }
    }
}

/// The requested stages plus everything they depend on, in run order.
pub fn closure(stages: &[Stage]) -> Vec<Stage> {
    let mut all: Vec<Stage> = stages.iter().flat_map(|s| s.requires().iter().copied().chain([*s])).collect();
    all.sort();
    all.dedup();
    all
}

/// Stages of a full run as selected by the config flags.
pub fn full_run(cfg: &RunConfig) -> Vec<Stage> {
    let mut s = vec![Stage::Atlas, Stage::Transport, Stage::Gauge, Stage::Shear];
    if cfg.jamming.enabled {
        s.push(Stage::Jamming);
    }
    if cfg.bootstrap.enabled {
        s.push(Stage::Bootstrap);
    }
    if cfg.flags.null_random_bases {
        s.push(Stage::Null);
    }
    s
}

/// Content digest of the loaded matrices (f64, little-endian).
pub fn dataset_digest(ds: &Dataset) -> String {
    let mut bytes = ingest::encode_matrix(&ds.activations, ingest::Dtype::F64);
    if let Some(g) = &ds.gradients {
        bytes.extend(ingest::encode_matrix(g, ingest::Dtype::F64));
    }
    sha256_hex(&bytes)
}

/// Cache of atlas skeletons (clusters, graph and chart bases without
/// overlap sets), keyed by the dataset digest and the atlas settings.
#[derive(Debug, Default)]
pub struct AtlasCache {
    dir: Option<PathBuf>,
    mem: Mutex<BTreeMap<String, Arc<Atlas>>>,
    builds: Mutex<usize>,
}

impl AtlasCache {
    pub fn in_memory() -> Self {
        AtlasCache::default()
    }

    pub fn on_disk(dir: &Path) -> Self {
        AtlasCache { dir: Some(dir.to_path_buf()), ..AtlasCache::default() }
    }

    /// Number of skeletons built (not loaded) so far.
    pub fn builds(&self) -> usize {
        *self.builds.lock().unwrap()
    }

    pub fn key(digest: &str, cfg: &RunConfig) -> String {
        let v = json!({
            "dataset": digest,
            "n_charts": cfg.n_charts,
            "k": cfg.k,
            "knn_degree": cfg.knn_degree,
            "max_iter": cfg.kmeans_max_iter,
            "center_charts": cfg.flags.center_charts,
            "seed": cfg.seeds.atlas,
        });
        sha256_hex(v.to_string().as_bytes())[..24].to_string()
    }

    pub fn skeleton(&self, digest: &str, data: &SampleMatrix, cfg: &RunConfig) -> Result<Arc<Atlas>> {
        let key = Self::key(digest, cfg);
        if let Some(a) = self.mem.lock().unwrap().get(&key) {
            return Ok(a.clone());
        }
        let dir = self.dir.as_ref().map(|d| d.join(format!("atlas-{key}")));
        let loaded = match &dir {
            Some(d) if d.join("atlas.json").exists() => Some(persist::load_atlas(d)?.0),
            _ => None,
        };
        let atlas = match loaded {
            Some(a) => a,
            None => {
                let a = build_skeleton(data, cfg)?;
                *self.builds.lock().unwrap() += 1;
                if let Some(d) = &dir {
                    persist::save_atlas(d, &a, cfg.seeds.downstream)?;
                }
                a
            }
        };
        let atlas = Arc::new(atlas);
        self.mem.lock().unwrap().insert(key, atlas.clone());
        Ok(atlas)
    }
}

pub fn atlas_params(cfg: &RunConfig) -> AtlasParams {
    AtlasParams {
        n_charts: cfg.n_charts,
        k: cfg.k,
        knn_degree: cfg.knn_degree,
        min_overlap: cfg.min_overlap,
        max_overlap: cfg.max_overlap,
        max_iter: cfg.kmeans_max_iter,
        center_charts: cfg.flags.center_charts,
        seed: cfg.seeds.atlas,
    }
}

/// Clusters, graph and chart bases; overlap sets are left empty.
pub fn build_skeleton(data: &SampleMatrix, cfg: &RunConfig) -> Result<Atlas> {
    let params = atlas_params(cfg);
    atlas::validate_params(&params, data.rows(), data.cols())?;
    let km = atlas::kmeans(data, params.n_charts, params.seed, params.max_iter)?;
    let graph = atlas::knn_graph(&km.centroids, params.knn_degree)?;
    let members = atlas::chart_members(&km.assignments, params.n_charts);
    let charts = members.par_iter().map(|m| atlas::fit_chart(data, m, params.k, params.center_charts)).collect();
    let edge_populations = atlas::overlap_populations(data, &km.centroids, &graph).iter().map(|(_, v)| v.len()).collect();
    Ok(Atlas {
        params,
        centroids: km.centroids,
        assignments: km.assignments,
        graph,
        charts,
        edge_populations,
        overlaps: Vec::new(),
        kmeans_iterations: km.iterations,
        kmeans_converged: km.converged,
    })
}

/// Overlap sets for the configured bounds; subsampling draws from the
/// downstream seed.
pub fn attach_overlaps(skeleton: &Atlas, data: &SampleMatrix, cfg: &RunConfig) -> Atlas {
    let mut a = skeleton.clone();
    a.params.min_overlap = cfg.min_overlap;
    a.params.max_overlap = cfg.max_overlap;
    a.overlaps = atlas::overlap_populations(data, &a.centroids, &a.graph)
        .into_iter()
        .filter_map(|(e, idx)| atlas::finalize_overlap(e, idx, cfg.min_overlap, cfg.max_overlap, cfg.seeds.downstream))
        .collect();
    a
}

/// Per-edge transports in canonical edge order.
pub fn estimate_transports(data: &SampleMatrix, atlas: &Atlas, lambda: f64) -> Result<Vec<EdgeTransport>> {
    let out: Vec<Option<EdgeTransport>> = atlas
        .overlaps
        .par_iter()
        .map(|o| transport::estimate_edge(data, atlas, o, lambda))
        .collect::<gaugeatlas::Result<_>>()?;
    Ok(out.into_iter().flatten().collect())
}

pub fn gauge_at(transports: &[EdgeTransport], s_min: f64, k: usize) -> Result<GaugeReport> {
    let kept = transport::persistence_filter(transports, s_min);
    Ok(gauge::gauge_fix(&DefectGraph::from_transports(kept), k)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShearSummary {
    pub n_edges: usize,
    pub proxy_degenerate: usize,
    pub d_shear: Option<Summary>,
    /// Edges with `λ_min(Σ̂) ≥ 1e-6` and a positive bound.
    pub n_slack_edges: usize,
    pub slack: Option<Summary>,
    pub bound_violations: usize,
}

pub fn shear_summary(transports: &[EdgeTransport]) -> ShearSummary {
    let live: Vec<&EdgeTransport> = transports.iter().filter(|t| !t.proxy_degenerate).collect();
    let d: Vec<f64> = live.iter().map(|t| t.shear.d_shear).collect();
    let slack: Vec<f64> = live
        .iter()
        .filter(|t| t.shear.lambda_min_sigma >= SLACK_REPORT_FLOOR && t.shear.lb_hat > 0.0)
        .map(|t| t.shear.slack)
        .collect();
    let violations = live.iter().filter(|t| t.shear.lb_hat > 1e-9 && t.shear.slack < 1.0 - 1e-9).count();
    ShearSummary {
        n_edges: transports.len(),
        proxy_degenerate: transports.len() - live.len(),
        d_shear: Summary::of(&d),
        n_slack_edges: slack.len(),
        slack: Summary::of(&slack),
        bound_violations: violations,
    }
}

pub fn jamming_params(cfg: &RunConfig) -> JammingParams {
    JammingParams {
        m: cfg.jamming.m,
        alpha: cfg.jamming.alpha,
        grad_samples: cfg.jamming.grad_samples_per_chart,
        damping_rel: cfg.tau_damping,
        max_outer: cfg.jamming.max_outer,
        max_passes: cfg.jamming.max_passes,
        center: cfg.flags.center_charts,
    }
}

/// Usable charts, largest first, limited to `n_charts_analyzed`; returned
/// in ascending chart order.
pub fn select_charts(atlas: &Atlas, limit: usize) -> Vec<usize> {
    let mut c: Vec<usize> = (0..atlas.n_charts()).filter(|&i| atlas.charts[i].usable()).collect();
    c.sort_by(|&a, &b| atlas.charts[b].size.cmp(&atlas.charts[a].size).then(a.cmp(&b)));
    if limit > 0 {
        c.truncate(limit);
    }
    c.sort_unstable();
    c
}

pub fn run_jamming(data: &Dataset, atlas: &Atlas, cfg: &RunConfig) -> Result<Vec<ChartJamming>> {
    let grads = data
        .gradients
        .as_ref()
        .ok_or_else(|| anyhow!("the dataset has no gradients; jamming needs a gradients_path in the manifest"))?;
    let members = atlas::chart_members(&atlas.assignments, atlas.n_charts());
    let params = jamming_params(cfg);
    select_charts(atlas, cfg.jamming.n_charts_analyzed)
        .par_iter()
        .map(|&c| {
            let x = data.activations.select_rows(&members[c]);
            let g = grads.select_rows(&members[c]);
            jamming::analyze_chart(c, &x, &g, &params, cfg.seeds.downstream).with_context(|| format!("chart {c}"))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct BootstrapOutcome {
    pub rows: Vec<BootstrapRow>,
    pub replicates: Vec<ReplicateRow>,
    /// Per n_boot: replicate-cycle pairs dropped for unusable edges.
    pub dropped: Vec<(usize, usize)>,
}

fn boot_row(subsystem: String, metric: String, values: &[f64]) -> BootstrapRow {
    let s = Summary::of(values);
    BootstrapRow {
        subsystem,
        metric,
        n_samples: values.len(),
        mean: s.map(|s| s.mean),
        std: s.map(|s| s.std),
        q05: s.map(|s| s.q05),
        q50: s.map(|s| s.q50),
        q95: s.map(|s| s.q95),
    }
}

pub fn run_bootstrap(data: &SampleMatrix, atlas: &Atlas, transports: &[EdgeTransport], report: &GaugeReport, cfg: &RunConfig) -> BootstrapOutcome {
    let s0 = cfg.s_min[0];
    let samples: Vec<EdgeSample> = transports
        .iter()
        .filter(|t| t.sigma_min >= s0 && !t.proxy_degenerate)
        .filter_map(|t| EdgeSample::from_atlas(data, atlas, t.edge))
        .filter(|s| !s.is_empty())
        .collect();
    let lookup = |e: atlas::Edge| samples.binary_search_by(|s| s.edge.cmp(&e)).ok().map(|i| &samples[i]);
    let mut out = BootstrapOutcome { rows: Vec::new(), replicates: Vec::new(), dropped: Vec::new() };
    for &n_boot in &cfg.bootstrap.n_boot {
        let params = BootstrapParams {
            n_boot,
            replicates: cfg.bootstrap.replicates,
            lambda: cfg.ridge_lambda,
            seed: derive_seed(cfg.seeds.downstream, &[0x626f_6f74, n_boot as u64]),
            cap_to_overlap: cfg.bootstrap.cap_to_overlap,
        };
        let metric = |m: &str| format!("{m} n_boot={n_boot}");
        let shear: Vec<Vec<f64>> = samples.par_iter().map(|s| stability::bootstrap_edge_shear(s, &params)).collect();
        let pooled: Vec<f64> = shear.iter().flatten().copied().collect();
        out.rows.push(boot_row("shear/global".into(), metric("d_shear"), &pooled));
        for (s, vals) in samples.iter().zip(&shear) {
            out.rows.push(boot_row(format!("shear/edge {}-{}", s.edge.0, s.edge.1), metric("d_shear"), vals));
            for (b, &v) in vals.iter().enumerate() {
                out.replicates.push(ReplicateRow { target: "shear", unit: format!("{}-{}", s.edge.0, s.edge.1), n_boot, replicate: b, value: v });
            }
        }
        let cycles: Vec<stability::CycleBootstrap> = report
            .cycles
            .par_iter()
            .enumerate()
            .map(|(id, cyc)| stability::bootstrap_cycle(cyc, id, &lookup, &params, report.k))
            .collect();
        let pooled: Vec<f64> = cycles.iter().flat_map(|c| c.values.iter().copied()).collect();
        out.rows.push(boot_row("holonomy/global".into(), metric("d_hol"), &pooled));
        for (chord, cb) in report.chords().iter().zip(&cycles) {
            out.rows.push(boot_row(format!("holonomy/loop {}-{}", chord.0, chord.1), metric("d_hol"), &cb.values));
            for (b, &v) in cb.values.iter().enumerate() {
                out.replicates.push(ReplicateRow { target: "holonomy", unit: format!("{}-{}", chord.0, chord.1), n_boot, replicate: b, value: v });
            }
        }
        out.dropped.push((n_boot, cycles.iter().map(|c| c.dropped).sum()));
    }
    out
}

#[derive(Debug, Clone)]
pub struct NullOutcome {
    pub rows: Vec<NullRow>,
    pub learned_shear_median: Option<f64>,
    pub null_shear_median: Option<f64>,
}

fn shear_values(t: &[EdgeTransport]) -> Vec<f64> {
    t.iter().filter(|t| !t.proxy_degenerate).map(|t| t.shear.d_shear).collect()
}

pub fn run_null(data: &SampleMatrix, atlas: &Atlas, learned: &[EdgeTransport], learned_gauge: &GaugeReport, cfg: &RunConfig) -> Result<NullOutcome> {
    let null_atlas = stability::null_random_bases(atlas, cfg.seeds.downstream);
    let null_t = estimate_transports(data, &null_atlas, cfg.ridge_lambda)?;
    let null_g = gauge_at(&null_t, cfg.s_min[0], cfg.k)?;
    let (ls, ns) = (shear_values(learned), shear_values(&null_t));
    let count = |n: usize| Some(n as f64);
    let rows = vec![
        NullRow { metric: "usable_edges", learned: count(learned.len()), null: count(null_t.len()) },
        NullRow { metric: "d_shear_median", learned: stats::median(&ls), null: stats::median(&ns) },
        NullRow { metric: "d_shear_mean", learned: stats::mean(&ls), null: stats::mean(&ns) },
        NullRow { metric: "n_chords", learned: count(learned_gauge.d_hol.len()), null: count(null_g.d_hol.len()) },
        NullRow { metric: "d_hol_mean", learned: stats::mean(&learned_gauge.d_hol), null: stats::mean(&null_g.d_hol) },
        NullRow { metric: "d_hol_median", learned: stats::median(&learned_gauge.d_hol), null: stats::median(&null_g.d_hol) },
        NullRow {
            metric: "d_hol_max",
            learned: learned_gauge.d_hol.iter().copied().reduce(f64::max),
            null: null_g.d_hol.iter().copied().reduce(f64::max),
        },
    ];
    Ok(NullOutcome { learned_shear_median: stats::median(&ls), null_shear_median: stats::median(&ns), rows })
}

/// Everything a run computed, for callers that want numbers rather than
/// files.
#[derive(Debug, Default)]
pub struct Outcome {
    pub atlas: Option<Atlas>,
    pub transports: Vec<EdgeTransport>,
    pub gauge: Option<GaugeReport>,
    pub gauge_summary: Option<GaugeSummary>,
    pub persistence: Vec<PersistenceRow>,
    pub shear: Option<ShearSummary>,
    pub jamming: Option<(Vec<ChartJamming>, JammingSummary)>,
    pub bootstrap: Option<BootstrapOutcome>,
    pub null: Option<NullOutcome>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub schema: &'static str,
    pub command: String,
    pub config: RunConfig,
    pub dataset: Value,
    pub stages: Vec<Stage>,
    pub summary: BTreeMap<&'static str, Value>,
    pub outputs: Vec<OutputFile>,
}

fn opt_summary(s: &Option<Summary>) -> Value {
    match s {
        Some(s) => json!({
            "n": s.n, "mean": s.mean, "std": s.std, "min": s.min,
            "q05": s.q05, "q50": s.q50, "q95": s.q95, "max": s.max,
        }),
        None => Value::Null,
    }
}

fn gauge_json(s: &GaugeSummary) -> Value {
    json!({
        "lcc_size": s.lcc_size,
        "lcc_edges": s.lcc_edges,
        "n_chords": s.n_chords,
        "tree_residual_mean": s.tree_residual_mean,
        "tree_residual_max": s.tree_residual_max,
        "chord_residual_mean": s.chord_residual_mean,
        "chord_residual_max": s.chord_residual_max,
        "holonomy_mean": s.holonomy_mean,
        "holonomy_max": s.holonomy_max,
        "identity_gap_mean": s.gap_mean,
        "identity_gap_max": s.gap_max,
        "d_hol_mean": s.d_hol_mean,
        "d_hol_median": s.d_hol_median,
        "d_hol_max": s.d_hol_max,
    })
}

fn persistence_rows(rows: &[PersistenceRow]) -> Vec<PersistenceCsvRow> {
    rows.iter()
        .map(|r| PersistenceCsvRow {
            s_min: r.s_min,
            retained_edges: r.retained_edges,
            lcc_edges: r.lcc_edges,
            lcc_size: r.lcc_size,
            n_chords: r.n_chords,
            d_hol_mean: r.d_hol_mean,
            d_hol_max: r.d_hol_max,
        })
        .collect()
}

fn jamming_rows(charts: &[ChartJamming]) -> Vec<JammingRow> {
    charts
        .iter()
        .map(|c| JammingRow {
            chart: c.chart,
            n_grad: c.n_grad,
            m: c.m,
            alpha: c.alpha,
            r: c.certificate.r,
            k_active: c.k_active,
            r_eff: c.r_eff,
            j_index: c.j_index,
            subset_size: c.certificate.subset.len(),
            tau_star: c.certificate.tau_star,
            lb: c.certificate.lb,
            energy_a: c.certificate.energy_a,
            energy_full: c.certificate.energy_full,
            slack: c.certificate.slack,
            certified: c.certificate.certified(),
        })
        .collect()
}

fn transport_rows(t: &[EdgeTransport]) -> Vec<TransportRow> {
    t.iter()
        .map(|t| TransportRow {
            u: t.edge.0,
            v: t.edge.1,
            n_overlap: t.n_overlap,
            sigma_min: t.sigma_min,
            d_shear: t.shear.d_shear,
            delta_hat: t.shear.delta_hat,
            lambda_min_sigma: t.shear.lambda_min_sigma,
            lb_hat: t.shear.lb_hat,
            slack: t.shear.slack,
            proxy_degenerate: t.proxy_degenerate,
        })
        .collect()
}

/// Loads the dataset named by `cfg`, resolving it against `config_dir`.
pub fn load_inputs(cfg: &RunConfig, config_dir: &Path) -> Result<Dataset> {
    let path = cfg.dataset_path(config_dir);
    ingest::load_dataset(&path).with_context(|| format!("ingest stage: loading {}", path.display()))
}

fn stage_err(stage: Stage) -> impl Fn(anyhow::Error) -> anyhow::Error {
    move |e| e.context(format!("{} stage failed", stage.name()))
}

/// Runs `stages` (plus dependencies), writes per-stage outputs and
/// `report.json` into `out_dir`.
pub fn run_stages(
    command: &str,
    cfg: &RunConfig,
    data: &Dataset,
    stages: &[Stage],
    out_dir: &Path,
    cache: &AtlasCache,
) -> Result<(RunReport, Outcome)> {
    cfg.validate()?;
    let stages = closure(stages);
    if stages.contains(&Stage::Jamming) && data.gradients.is_none() {
        return Err(anyhow!("the dataset has no gradients; jamming needs a gradients_path in the manifest"))
            .map_err(stage_err(Stage::Jamming));
    }
    let mut out = Outputs::new(out_dir)?;
    let mut outcome = Outcome::default();
    let mut summary: BTreeMap<&'static str, Value> = BTreeMap::new();
    let x = &data.activations;
    let digest = dataset_digest(data);

    for &stage in &stages {
        let res: Result<()> = (|| {
            match stage {
                Stage::Atlas => {
                    let skel = cache.skeleton(&digest, x, cfg)?;
                    let a = attach_overlaps(&skel, x, cfg);
                    for f in persist::save_atlas(&out.dir.join("atlas"), &a, cfg.seeds.downstream)? {
                        out.record_existing(&format!("atlas/{f}"))?;
                    }
                    let charts: Vec<ChartRow> = a
                        .charts
                        .iter()
                        .enumerate()
                        .map(|(i, c)| ChartRow { chart: i, size: c.size, usable: c.usable() })
                        .collect();
                    out.write_csv("charts.csv", &charts, &CHART_COLUMNS)?;
                    let edges: Vec<EdgeRow> = a
                        .graph
                        .iter()
                        .zip(&a.edge_populations)
                        .map(|(&e, &p)| {
                            let o = a.overlap(e);
                            EdgeRow { u: e.0, v: e.1, population: p, usable: o.is_some(), n_overlap: o.map_or(0, |o| o.indices.len()) }
                        })
                        .collect();
                    out.write_csv("edges.csv", &edges, &EDGE_COLUMNS)?;
                    summary.insert(
                        "atlas",
                        json!({
                            "n_charts": a.n_charts(),
                            "usable_charts": a.charts.iter().filter(|c| c.usable()).count(),
                            "graph_edges": a.graph.len(),
                            "usable_edges": a.overlaps.len(),
                            "kmeans_iterations": a.kmeans_iterations,
                            "kmeans_converged": a.kmeans_converged,
                        }),
                    );
                    outcome.atlas = Some(a);
                }
                Stage::Transport => {
                    let a = outcome.atlas.as_ref().expect("atlas stage ran");
                    let t = estimate_transports(x, a, cfg.ridge_lambda)?;
                    let rows = transport_rows(&t);
                    out.write_csv("transport.csv", &rows, &TRANSPORT_COLUMNS)?;
                    out.write_json("transport.json", &rows)?;
                    let sig: Vec<f64> = t.iter().map(|t| t.sigma_min).collect();
                    summary.insert(
                        "transport",
                        json!({
                            "edges": t.len(),
                            "proxy_degenerate": t.iter().filter(|t| t.proxy_degenerate).count(),
                            "sigma_min": opt_summary(&Summary::of(&sig)),
                            "ridge_lambda": cfg.ridge_lambda,
                        }),
                    );
                    outcome.transports = t;
                }
                Stage::Gauge => {
                    let t = &outcome.transports;
                    let report = gauge_at(t, cfg.s_min[0], cfg.k)?;
                    let s = gauge::gauge_identity_check(&report);
                    let rows: Vec<GaugeRow> = report
                        .chords()
                        .iter()
                        .enumerate()
                        .map(|(i, c)| GaugeRow {
                            chord_u: c.0,
                            chord_v: c.1,
                            cycle_len: report.cycles[i].len(),
                            chord_residual: report.chord_residuals[i],
                            holonomy_defect: report.holonomy_defects[i],
                            d_hol: report.d_hol[i],
                        })
                        .collect();
                    out.write_csv("gauge.csv", &rows, &GAUGE_COLUMNS)?;
                    let tree: Vec<TreeRow> = report
                        .tree_edges()
                        .iter()
                        .zip(&report.tree_residuals)
                        .map(|(e, r)| TreeRow { u: e.0, v: e.1, tree_residual: *r })
                        .collect();
                    out.write_csv("tree.csv", &tree, &TREE_COLUMNS)?;
                    let pers = gauge::persistence_sweep(t, &cfg.s_min, cfg.k)?;
                    out.write_csv("persistence.csv", &persistence_rows(&pers), &PERSISTENCE_COLUMNS)?;
                    let gj = gauge_json(&s);
                    out.write_json("gauge_summary.json", &json!({ "s_min": cfg.s_min[0], "summary": gj }))?;
                    summary.insert("gauge", json!({ "s_min": cfg.s_min[0], "summary": gj }));
                    summary.insert("persistence", serde_json::to_value(persistence_rows(&pers))?);
                    outcome.gauge_summary = Some(s);
                    outcome.gauge = Some(report);
                    outcome.persistence = pers;
                }
                Stage::Shear => {
                    let s = shear_summary(&outcome.transports);
                    let v = json!({
                        "edges": s.n_edges,
                        "proxy_degenerate": s.proxy_degenerate,
                        "d_shear": opt_summary(&s.d_shear),
                        "slack_edges": s.n_slack_edges,
                        "slack": opt_summary(&s.slack),
                        "bound_violations": s.bound_violations,
                    });
                    out.write_json("shear_summary.json", &v)?;
                    summary.insert("shear", v);
                    if s.bound_violations > 0 {
                        bail!("{} edges violate the shearing lower bound", s.bound_violations);
                    }
                    outcome.shear = Some(s);
                }
                Stage::Jamming => {
                    let a = outcome.atlas.as_ref().expect("atlas stage ran");
                    let charts = run_jamming(data, a, cfg)?;
                    let js = jamming::summarize(&charts);
                    out.write_csv("jamming.csv", &jamming_rows(&charts), &JAMMING_COLUMNS)?;
                    let v = json!({
                        "charts_analyzed": js.n_charts,
                        "certified": js.n_certified,
                        "cert_rate": js.cert_rate,
                        "slack_median": js.slack_median,
                        "slack_min": js.slack_min,
                        "corr_j_energy_full": js.corr_j_energy_full,
                        "corr_j_energy_subset": js.corr_j_energy_a,
                        "m": cfg.jamming.m,
                        "alpha": cfg.jamming.alpha,
                    });
                    out.write_json("jamming_summary.json", &v)?;
                    summary.insert("jamming", v);
                    outcome.jamming = Some((charts, js));
                }
                Stage::Bootstrap => {
                    let a = outcome.atlas.as_ref().expect("atlas stage ran");
                    let g = outcome.gauge.as_ref().expect("gauge stage ran");
                    let b = run_bootstrap(x, a, &outcome.transports, g, cfg);
                    out.write_csv("bootstrap.csv", &b.rows, &BOOTSTRAP_COLUMNS)?;
                    out.write_csv("bootstrap_replicates.csv", &b.replicates, &REPLICATE_COLUMNS)?;
                    let global: Vec<&BootstrapRow> = b.rows.iter().filter(|r| r.subsystem.ends_with("/global")).collect();
                    summary.insert(
                        "bootstrap",
                        json!({
                            "replicates": cfg.bootstrap.replicates,
                            "global": serde_json::to_value(&global)?,
                            "dropped_cycle_replicates": b.dropped.iter().map(|(n, d)| json!({"n_boot": n, "dropped": d})).collect::<Vec<_>>(),
                        }),
                    );
                    outcome.bootstrap = Some(b);
                }
                Stage::Null => {
                    let a = outcome.atlas.as_ref().expect("atlas stage ran");
                    let g = outcome.gauge.as_ref().expect("gauge stage ran");
                    let n = run_null(x, a, &outcome.transports, g, cfg)?;
                    out.write_csv("null.csv", &n.rows, &NULL_COLUMNS)?;
                    summary.insert("null", serde_json::to_value(&n.rows)?);
                    outcome.null = Some(n);
                }
            }
            Ok(())
        })();
        res.map_err(stage_err(stage))?;
    }

    let m = &data.manifest;
    let report = RunReport {
        schema: REPORT_SCHEMA,
        command: command.to_string(),
        config: cfg.clone(),
        dataset: json!({
            "manifest": cfg.dataset,
            "n_samples": m.n_samples,
            "dim": m.dim,
            "dtype": m.dtype,
            "has_gradients": data.gradients.is_some(),
            "source": m.source,
            "sha256": digest,
        }),
        stages: stages.clone(),
        summary,
        outputs: out.sorted(),
    };
    out.write_json("report.json", &report)?;
    Ok((report, outcome))
}

/// Convenience wrapper: load the dataset, then [`run_stages`].
pub fn run_pipeline(command: &str, cfg: &RunConfig, config_dir: &Path, stages: &[Stage], out_dir: &Path, cache: &AtlasCache) -> Result<(RunReport, Outcome)> {
    let data = load_inputs(cfg, config_dir)?;
    run_stages(command, cfg, &data, stages, out_dir, cache)
}
