//! Experiment dispatch: configuration in, CSV tables and a summary out.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use owlab::almostdiag::{ad_compose_check, ad_opnorm_estimate, canonical_ad_matrix, sharp_ad_experiment, ADParams};
use owlab::lpfilters::{build_lp_pair, decay_profile, partition_check, FrequencyGrid};
use owlab::operators::{averaging_norm_oracle, averaging_norm_rhs, normal_sup_experiment, p22_experiment, sparse_ratio_experiment};
use owlab::seqspace::{read_sequence, seq_norm, DyadicSequence, NormFamily, NormSource, PreparedNorms, SpaceKind, SpaceParams};
use owlab::traceext::{trace_norm_check, trace_source_params, TraceOffset};
use owlab::weights::{
    ap_constant_estimate, doubling_dimension_estimate, local_ap, make_bmo_block_weight, rhi_index_estimate, with_ancestors,
    PiecewiseGrid, QuadRule,
};
use owlab::{DyadicCube, Error, GridWindow, Quadrature, TargetSpace, WeightModel};
use rayon::prelude::*;
use thiserror::Error as ThisError;

use crate::config::{Config, ConfigError};
use crate::output::{emit_csv, Cell, OutputError};

pub const DEFAULT_SEED: u64 = 0xA9;

pub const EXPERIMENTS: [&str; 13] = [
    "ap-estimate",
    "rhi-estimate",
    "doubling",
    "seq-norm",
    "ad-opnorm",
    "ad-compose",
    "sharp-ad",
    "p22",
    "normal-sup",
    "avg-norm",
    "sparse",
    "trace-check",
    "lp-filters",
];

#[derive(Debug, ThisError)]
pub enum RunError {
    #[error("unknown experiment `{0}`; expected one of: {list}", list = EXPERIMENTS.join(", "))]
    UnknownExperiment(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("numerical flag: {0}")]
    Numerical(String),
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Precondition(_) => 2,
            RunError::Numerical(_) => 3,
            _ => 1,
        }
    }
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Precondition(_) | Error::Misaligned(_) | Error::Aliasing { .. } => RunError::Precondition(msg),
            Error::NonFinite(_) | Error::QuadratureOverflow { .. } | Error::NearSingular { .. } | Error::NotConverged { .. } => {
                RunError::Numerical(msg)
            }
            _ => RunError::Invalid(msg),
        }
    }
}

/// A resolved run: experiment name, parsed configuration, seed and output directory.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub config: Config,
    pub seed: u64,
    pub out: PathBuf,
}

/// One CSV table.
#[derive(Clone, Debug)]
pub struct Table {
    pub file: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

/// Everything an experiment produced. `flags` are numerical warnings that turn
/// a completed run into exit status 3.
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub summary: Vec<(String, Cell)>,
    pub flags: Vec<String>,
}

impl Report {
    fn table(&mut self, file: &str, header: &[&'static str], rows: Vec<Vec<Cell>>) {
        self.tables.push(Table { file: file.into(), header: header.to_vec(), rows });
    }

    fn put(&mut self, key: &str, v: impl Into<Cell>) {
        self.summary.push((key.into(), v.into()));
    }
}

/// Runs the experiment, writes `<out>/<name>.csv` (plus any extra tables) and
/// `<out>/<name>_summary.csv`, and reports numerical flags as an error.
pub fn run_experiment(run: &ExperimentConfig) -> Result<Report, RunError> {
    let report = compute(&run.experiment, &run.config, run.seed)?;
    write_report(&run.experiment, run.seed, &report, &run.out)?;
    if !report.flags.is_empty() {
        return Err(RunError::Numerical(report.flags.join("; ")));
    }
    Ok(report)
}

pub fn write_report(name: &str, seed: u64, report: &Report, out: &Path) -> Result<(), RunError> {
    std::fs::create_dir_all(out)
        .map_err(|source| OutputError::Io { path: out.display().to_string(), source })?;
    for t in &report.tables {
        emit_csv(&t.rows, &t.header, &out.join(&t.file))?;
    }
    let mut rows: Vec<Vec<Cell>> = vec![vec!["experiment".into(), name.into()], vec!["seed".into(), Cell::Int(seed as i64)]];
    rows.extend(report.summary.iter().map(|(k, v)| vec![Cell::Text(k.clone()), v.clone()]));
    rows.push(vec!["flags".into(), Cell::Text(report.flags.join("; "))]);
    emit_csv(&rows, &["key", "value"], &out.join(format!("{name}_summary.csv")))?;
    Ok(())
}

/// Runs the computation only.
pub fn compute(name: &str, cfg: &Config, seed: u64) -> Result<Report, RunError> {
    match name {
        "ap-estimate" => ap_estimate(cfg),
        "rhi-estimate" => rhi_estimate(cfg),
        "doubling" => doubling(cfg),
        "seq-norm" => seq_norm_run(cfg, seed),
        "ad-opnorm" => ad_opnorm(cfg, seed),
        "ad-compose" => ad_compose(cfg),
        "sharp-ad" => sharp_ad(cfg),
        "p22" => p22(cfg),
        "normal-sup" => normal_sup(cfg, seed),
        "avg-norm" => avg_norm(cfg, seed),
        "sparse" => sparse(cfg, seed),
        "trace-check" => trace_check(cfg, seed),
        "lp-filters" => lp_filters(cfg),
        other => Err(RunError::UnknownExperiment(other.into())),
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> RunError {
    RunError::Config(ConfigError::Invalid { key: key.into(), reason: reason.into() })
}

/// `weight.kind` is one of `identity`, `diagonal-power`, `bmo-log`, `piecewise-constant`.
pub fn weight_from(cfg: &Config) -> Result<WeightModel, RunError> {
    let kind: String = cfg.require("weight.kind")?;
    let n: usize = cfg.get("weight.n", 1)?;
    let u: f64 = cfg.get("weight.u", 2.0)?;
    if n == 0 {
        return Err(invalid("weight.n", "must be positive"));
    }
    let centers = |m: usize| -> Result<Vec<Vec<f64>>, RunError> {
        let flat: Vec<f64> = cfg.require_list("weight.centers")?;
        if flat.len() != n * m {
            return Err(invalid("weight.centers", format!("expected {} numbers (n·m), got {}", n * m, flat.len())));
        }
        Ok(flat.chunks(n).map(<[f64]>::to_vec).collect())
    };
    Ok(match kind.as_str() {
        "identity" => {
            let m: usize = cfg.get("weight.m", 1)?;
            WeightModel::identity(n, TargetSpace::new(m, u)?)
        }
        "diagonal-power" => {
            let exps: Vec<f64> = cfg.require_list("weight.exponents")?;
            WeightModel::diagonal_power(n, u, centers(exps.len())?, exps)?
        }
        "bmo-log" => {
            let m: usize = cfg.get("weight.m", 1)?;
            make_bmo_block_weight(WeightModel::diagonal_log(n, u, centers(m)?)?)
        }
        "piecewise-constant" => {
            let cells: Vec<usize> = cfg.require_list("weight.cells")?;
            if cells.len() != n {
                return Err(invalid("weight.cells", format!("expected {n} cell counts")));
            }
            let lo = cfg.get_list("weight.lo", vec![0.0; n])?;
            let hi = cfg.get_list("weight.hi", vec![1.0; n])?;
            let m: usize = cfg.get("weight.m", 1)?;
            let flat: Vec<f64> = cfg.require_list("weight.matrices")?;
            if m == 0 || flat.len() % (m * m) != 0 {
                return Err(invalid("weight.matrices", format!("length must be a multiple of m² = {}", m * m)));
            }
            let mats = flat.chunks(m * m).map(<[f64]>::to_vec).collect();
            WeightModel::piecewise_constant(u, PiecewiseGrid { lo, hi, cells, mats })?
        }
        other => return Err(invalid("weight.kind", format!("unknown kind `{other}`"))),
    })
}

pub fn window_from(cfg: &Config, n: usize, jmax_default: i32) -> Result<GridWindow, RunError> {
    let j0: i32 = cfg.get("window.jmin", 0)?;
    let j1: i32 = cfg.get("window.jmax", jmax_default)?;
    window_levels(cfg, n, j0, j1)
}

fn window_levels(cfg: &Config, n: usize, j0: i32, j1: i32) -> Result<GridWindow, RunError> {
    let lo: Vec<f64> = cfg.get_list("window.lo", vec![0.0; n])?;
    let hi: Vec<f64> = cfg.get_list("window.hi", vec![1.0; n])?;
    if lo.len() != n || hi.len() != n {
        return Err(invalid("window.lo", format!("window box needs {n} coordinates per corner")));
    }
    Ok(GridWindow::new(n, j0, j1, &lo, &hi)?)
}

pub fn quad_from(cfg: &Config) -> Result<Quadrature, RunError> {
    let nodes: usize = cfg.get("quad.nodes", 64)?;
    let rule = match cfg.get("quad.rule", "midpoint".to_string())?.as_str() {
        "midpoint" => QuadRule::Midpoint,
        "tanh-sinh" => QuadRule::TanhSinh,
        other => return Err(invalid("quad.rule", format!("unknown rule `{other}`"))),
    };
    let q = Quadrature::new(nodes, rule)?;
    Ok(if cfg.get("quad.closed_form", true)? { q } else { q.sampled_only() })
}

pub fn space_from(cfg: &Config, n: usize) -> Result<SpaceParams, RunError> {
    let kind = match cfg.get("space.kind", "besov".to_string())?.as_str() {
        "besov" => SpaceKind::Besov,
        "tl" => SpaceKind::TriebelLizorkin,
        other => return Err(invalid("space.kind", format!("expected besov or tl, got `{other}`"))),
    };
    let s = cfg.get("space.s", 0.0)?;
    let p = cfg.get("space.p", 2.0)?;
    let q = cfg.get("space.q", 2.0)?;
    Ok(SpaceParams::new(n, s, p, q, kind)?)
}

fn ad_params(cfg: &Config, key: &str, default: [f64; 3]) -> Result<ADParams, RunError> {
    let v: Vec<f64> = cfg.get_list(key, default.to_vec())?;
    if v.len() != 3 {
        return Err(invalid(key, "expected three numbers D, E, F"));
    }
    Ok(ADParams::new(v[0], v[1], v[2])?)
}

fn offset_text(q: &DyadicCube) -> String {
    q.offset.iter().map(i64::to_string).collect::<Vec<_>>().join(" ")
}

fn rel_diff(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn ap_estimate(cfg: &Config) -> Result<Report, RunError> {
    let v = weight_from(cfg)?;
    let p: f64 = cfg.get("ap.p", 2.0)?;
    let window = window_from(cfg, v.n, 4)?;
    let quad = quad_from(cfg)?;
    let est = ap_constant_estimate(&v, p, &window, &quad)?;
    let cubes = with_ancestors(&window, 3);
    let locals: Vec<(f64, bool)> = cubes.par_iter().map(|q| local_ap(&v, q, p, &quad)).collect::<Result<_, _>>()?;
    let rows = cubes
        .iter()
        .zip(&locals)
        .map(|(q, (val, ok))| vec![Cell::Int(q.level as i64), offset_text(q).into(), (*val).into(), (*ok).into()])
        .collect();
    let mut r = Report::default();
    r.table("ap-estimate.csv", &["level", "offset", "local_ap", "converged"], rows);
    r.put("ap_constant", est.value);
    r.put("worst_cube", est.worst.to_string());
    r.put("cubes", est.cubes);
    if !est.converged {
        r.flags.push("dual-norm optimizer did not converge on some cube".into());
    }
    Ok(r)
}

fn rhi_estimate(cfg: &Config) -> Result<Report, RunError> {
    let v = weight_from(cfg)?;
    let p: f64 = cfg.get("rhi.p", 2.0)?;
    let window = window_from(cfg, v.n, 4)?;
    let quad = quad_from(cfg)?;
    let grid: Vec<f64> = cfg.get_list("rhi.eps_grid", (0..=40).map(|i| i as f64 * 0.05).collect())?;
    let threshold: f64 = cfg.get("rhi.threshold", 2.0)?;
    let est = rhi_index_estimate(&v, p, &window, &grid, threshold, &quad)?;
    let mut rows: Vec<Vec<Cell>> = est.eps_ratios.iter().map(|(e, w)| vec!["primal".into(), (*e).into(), (*w).into()]).collect();
    rows.extend(est.eta_ratios.iter().map(|(e, w)| vec!["dual".into(), (*e).into(), (*w).into()]));
    let mut r = Report::default();
    r.table("rhi-estimate.csv", &["side", "eps", "worst_ratio"], rows);
    r.put("eps", est.eps);
    r.put("eta", est.eta);
    r.put("degenerate", est.degenerate);
    if est.degenerate {
        r.flags.push("no positive eps on the grid keeps the ratio under the threshold".into());
    }
    Ok(r)
}

fn doubling(cfg: &Config) -> Result<Report, RunError> {
    let v = weight_from(cfg)?;
    let p: f64 = cfg.get("doubling.p", 2.0)?;
    let window = window_from(cfg, v.n, 6)?;
    let quad = quad_from(cfg)?;
    let est = doubling_dimension_estimate(&v, p, &window, &quad)?;
    let mut r = Report::default();
    r.table("doubling.csv", &["beta", "residual"], vec![vec![est.beta.into(), est.residual.into()]]);
    r.put("beta", est.beta);
    r.put("residual", est.residual);
    Ok(r)
}

/// Family-based norm (`ρ_Q = ρ_{Ł^p(Q,V)}`) against direct integration of `‖V(x) t_Q‖`.
fn seq_norm_run(cfg: &Config, seed: u64) -> Result<Report, RunError> {
    let v = weight_from(cfg)?;
    let quad = quad_from(cfg)?;
    let params = space_from(cfg, v.n)?;
    let family = NormFamily::weighted(v.clone(), params.p, quad.clone());
    let seqs: Vec<DyadicSequence> = match cfg.raw("seq.input") {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| invalid("seq.input", format!("{path}: {e}")))?;
            vec![read_sequence(&text)?]
        }
        None => {
            let window = Arc::new(window_from(cfg, v.n, 5)?);
            let samples: u64 = cfg.get("seq.samples", 4)?;
            (0..samples).map(|i| DyadicSequence::random(window.clone(), v.m(), seed.wrapping_add(i))).collect()
        }
    };
    let rows: Vec<Vec<Cell>> = seqs
        .par_iter()
        .enumerate()
        .map(|(i, t)| {
            let a = seq_norm(t, &params, NormSource::Family(&family))?;
            let b = seq_norm(t, &params, NormSource::Pointwise { weight: &v, quad: &quad })?;
            Ok(vec![i.into(), a.into(), b.into(), rel_diff(a, b).into()])
        })
        .collect::<Result<_, Error>>()?;
    let worst = rows.iter().map(|r| if let Cell::Num(x) = r[3] { x } else { 0.0 }).fold(0.0, f64::max);
    let mut r = Report::default();
    r.table("seq-norm.csv", &["sample", "family_norm", "pointwise_norm", "rel_diff"], rows);
    r.put("max_rel_diff", worst);
    Ok(r)
}

fn ad_opnorm(cfg: &Config, seed: u64) -> Result<Report, RunError> {
    let params = ad_params(cfg, "ad.def", [4.0, 3.0, 3.0])?;
    let (family, n, m) = if cfg.contains("weight.kind") {
        let v = weight_from(cfg)?;
        let (n, m) = (v.n, v.m());
        let p: f64 = cfg.get("space.p", 2.0)?;
        (NormFamily::weighted(v, p, quad_from(cfg)?), n, m)
    } else {
        (NormFamily::euclidean(), cfg.get("ad.n", 1)?, cfg.get("ad.m", 1)?)
    };
    let space = space_from(cfg, n)?;
    let j0: i32 = cfg.get("window.jmin", 0)?;
    let levels: Vec<i32> = cfg.get_list("ad.jmax", vec![3, 4, 5])?;
    let mut rows = Vec::new();
    for &j1 in &levels {
        let window = Arc::new(window_levels(cfg, n, j0, j1)?);
        let b = canonical_ad_matrix(params, window.clone());
        let norms = PreparedNorms::new(&family, window.clone())?;
        let est = ad_opnorm_estimate(&b, &space, &norms, m, seed)?;
        rows.push(vec![Cell::Int(j1 as i64), window.len().into(), est.value.into(), est.probe.into()]);
    }
    let growth = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) => match (&a[2], &b[2]) {
            (Cell::Num(x), Cell::Num(y)) => y / x,
            _ => f64::NAN,
        },
        _ => f64::NAN,
    };
    let mut r = Report::default();
    r.table("ad-opnorm.csv", &["j_max", "cubes", "opnorm", "probe"], rows);
    r.put("growth", growth);
    Ok(r)
}

fn ad_compose(cfg: &Config) -> Result<Report, RunError> {
    let p1 = ad_params(cfg, "compose.first", [1.5, 1.2, 1.1])?;
    let p2 = ad_params(cfg, "compose.second", [8.0, 8.0, 8.0])?;
    let j0: i32 = cfg.get("window.jmin", 0)?;
    let levels: Vec<i32> = cfg.get_list("compose.jmax", vec![4, 5, 6])?;
    let mut rows = Vec::new();
    let mut worst = Vec::new();
    for &j1 in &levels {
        let window = GridWindow::unit(1, j0, j1)?;
        let rep = ad_compose_check(&p1, &p2, &window)?;
        worst.push(rep.worst);
        rows.push(vec![
            Cell::Int(j1 as i64),
            rep.worst.into(),
            rep.worst_pair.0.to_string().into(),
            rep.worst_pair.1.to_string().into(),
            rep.combined.d.into(),
            rep.combined.e.into(),
            rep.combined.f.into(),
        ]);
    }
    let mut r = Report::default();
    r.table("ad-compose.csv", &["j_max", "worst_ratio", "row_cube", "col_cube", "d", "e", "f"], rows);
    if let (Some(a), Some(b)) = (worst.first(), worst.last()) {
        r.put("growth", b / a);
    }
    Ok(r)
}

fn sharp_ad(cfg: &Config) -> Result<Report, RunError> {
    let p: f64 = cfg.get("sharp.p", 2.0)?;
    let beta: f64 = cfg.get("sharp.beta", 1.8)?;
    let ms: Vec<u32> = cfg.get_list("sharp.m", (3..=9).collect())?;
    let res = sharp_ad_experiment(p, beta, &ms)?;
    let rows = res
        .rows
        .iter()
        .map(|row| {
            vec![row.m.into(), row.lhs.into(), row.norm.into(), row.lhs.log2().into(), (row.m as f64 * row.lhs).log2().into()]
        })
        .collect();
    let mut r = Report::default();
    r.table("sharp-ad.csv", &["M", "lhs", "norm", "log2_lhs", "log2_m_lhs"], rows);
    r.put("slope", res.slope);
    r.put("raw_slope", res.raw_slope);
    Ok(r)
}

fn p22(cfg: &Config) -> Result<Report, RunError> {
    let p: f64 = cfg.get("p22.p", 2.0)?;
    let eps: f64 = cfg.get("p22.eps", 0.05)?;
    let ns: Vec<u32> = cfg.get_list("p22.n", (4..=11).collect())?;
    let grid: usize = cfg.get("p22.grid", 4096)?;
    let res = p22_experiment(p, eps, &ns, grid)?;
    let rows = res
        .rows
        .iter()
        .map(|row| vec![row.n.into(), row.lhs.into(), row.rhs.into(), row.lhs.log2().into(), row.rhs.log2().into()])
        .collect();
    let mut r = Report::default();
    r.table("p22.csv", &["N", "lhs", "rhs", "log2_lhs", "log2_rhs"], rows);
    r.put("lhs_slope", res.lhs_slope);
    r.put("rhs_slope", res.rhs_slope);
    Ok(r)
}

fn normal_sup(cfg: &Config, seed: u64) -> Result<Report, RunError> {
    let p: f64 = cfg.get("normal.p", 2.0)?;
    let js: Vec<u32> = cfg.get_list("normal.j", (2..=10).map(|k| 1u32 << k).collect())?;
    let samples: usize = cfg.get("normal.samples", 100_000)?;
    let rows = normal_sup_experiment(p, &js, samples, seed)?;
    let table = rows.iter().map(|row| vec![row.j.into(), row.s.into(), row.stderr.into()]).collect();
    let mut r = Report::default();
    r.table("normal-sup.csv", &["J", "S", "stderr"], table);
    if let (Some(a), Some(b)) = (rows.first(), rows.last()) {
        r.put("ratio_last_first", b.s / a.s);
    }
    Ok(r)
}

fn avg_norm(cfg: &Config, seed: u64) -> Result<Report, RunError> {
    let v = weight_from(cfg)?;
    let p: f64 = cfg.get("avg.p", 2.0)?;
    let quad = quad_from(cfg)?;
    let level: i32 = cfg.get("avg.level", 0)?;
    let offset: Vec<i64> = cfg.get_list("avg.offset", vec![0; v.n])?;
    if offset.len() != v.n {
        return Err(invalid("avg.offset", format!("expected {} integers", v.n)));
    }
    let q = DyadicCube::new(level, offset);
    let cells: usize = cfg.get("avg.cells", 1024)?;
    let rhs = averaging_norm_rhs(&v, p, &q, &quad)?;
    let mut r = Report::default();
    let mut row = vec![q.to_string().into(), rhs.value.into()];
    if v.n == 1 && v.m() == 1 {
        let oracle = averaging_norm_oracle(&v, p, &q, cells, &quad, seed)?;
        row.extend([oracle.value.into(), rel_diff(rhs.value, oracle.value).into()]);
        if !oracle.converged {
            r.flags.push("oracle coordinate ascent did not converge".into());
        }
    } else {
        row.extend([f64::NAN.into(), f64::NAN.into()]);
    }
    if !rhs.converged {
        r.flags.push("dual-norm optimizer did not converge".into());
    }
    r.put("avg_norm", rhs.value);
    r.table("avg-norm.csv", &["cube", "closed_form", "oracle", "rel_diff"], vec![row]);
    Ok(r)
}

fn sparse(cfg: &Config, seed: u64) -> Result<Report, RunError> {
    let v = weight_from(cfg)?;
    let p: f64 = cfg.get("sparse.p", 2.0)?;
    let depths: Vec<u32> = cfg.get_list("sparse.depths", vec![1, 2, 3])?;
    let samples: usize = cfg.get("sparse.samples", 8)?;
    let quad = quad_from(cfg)?;
    let rows = sparse_ratio_experiment(&v, p, &depths, samples, seed, &quad)?;
    let worst = rows.iter().map(|x| x.max_ratio).fold(0.0, f64::max);
    let table = rows.iter().map(|x| vec![x.depth.into(), x.members.into(), x.max_ratio.into()]).collect();
    let mut r = Report::default();
    r.table("sparse.csv", &["depth", "members", "max_ratio"], table);
    r.put("max_ratio", worst);
    Ok(r)
}

/// Lifts random sequences on `R^{n-1}` into slab `k` of `R^n` and compares norms.
/// Cube norms are Euclidean, or `ρ_{Ł^p(Q,V)}` pulled back to the slab when a weight on `R^n` is given.
fn trace_check(cfg: &Config, seed: u64) -> Result<Report, RunError> {
    let weight = if cfg.contains("weight.kind") { Some(weight_from(cfg)?) } else { None };
    let n: usize = match &weight {
        Some(v) => v.n,
        None => cfg.get("trace.n", 2)?,
    };
    let m: usize = match &weight {
        Some(v) => v.m(),
        None => cfg.get("trace.m", 1)?,
    };
    let target = space_from(cfg, n)?;
    let source = trace_source_params(&target)?;
    let ks: Vec<i64> = cfg.get_list("trace.k", (-2..=2).collect())?;
    let samples: u64 = cfg.get("trace.samples", 4)?;
    let window = Arc::new(window_from(cfg, n - 1, 4)?);
    let quad = quad_from(cfg)?;
    let mut rows = Vec::new();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for &k in &ks {
        let (d, rho) = match &weight {
            Some(v) => {
                let rho = NormFamily::weighted(v.clone(), target.p, quad.clone());
                (NormFamily::pullback(rho.clone(), k), rho)
            }
            None => (NormFamily::euclidean(), NormFamily::euclidean()),
        };
        for i in 0..samples {
            let u = DyadicSequence::random(window.clone(), m, seed.wrapping_add(i));
            let rep = trace_norm_check(&u, TraceOffset(k), &target, &source, &d, &rho)?;
            lo = lo.min(rep.ratio);
            hi = hi.max(rep.ratio);
            rows.push(vec![
                Cell::Int(k),
                Cell::Int(i as i64),
                rep.lifted.into(),
                rep.source.into(),
                rep.ratio.into(),
                rep.transfer_min.into(),
                rep.transfer_max.into(),
            ]);
        }
    }
    let mut r = Report::default();
    r.table("trace-check.csv", &["k", "sample", "lifted", "source", "ratio", "transfer_min", "transfer_max"], rows);
    r.put("ratio_min", lo);
    r.put("ratio_max", hi);
    Ok(r)
}

fn lp_filters(cfg: &Config) -> Result<Report, RunError> {
    let alpha: f64 = cfg.get("lp.alpha", 5.0 / 3.0)?;
    let beta: f64 = cfg.get("lp.beta", 2.0)?;
    let grid = FrequencyGrid::new(cfg.get("lp.nodes", 1 << 14)?, cfg.get("lp.cutoff", 64.0)?)?;
    let m: f64 = cfg.get("lp.m", 5.0)?;
    let level: i32 = cfg.get("lp.level", 0)?;
    let max_gap: u32 = cfg.get("lp.max_gap", 3)?;
    let pair = build_lp_pair(alpha, beta, grid)?;
    let dev = partition_check(&pair);
    let prof = decay_profile(&pair, level, max_gap, m)?;
    let mut r = Report::default();
    r.table(
        "lp-filters.csv",
        &["gap", "profile"],
        prof.points.iter().map(|(g, v)| vec![(*g).into(), (*v).into()]).collect(),
    );
    r.table(
        "lp-filters_filters.csv",
        &["xi", "phi_hat", "psi_hat"],
        pair.rows().iter().map(|x| vec![x[0].into(), x[1].into(), x[2].into()]).collect(),
    );
    r.put("partition_deviation", dev);
    r.put("decay_slope", prof.slope);
    Ok(r)
}
