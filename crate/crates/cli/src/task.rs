//! Task execution, oracle verification and CSV output.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use dualtree::emst::EmstConfig;
use dualtree::kde::{kde, normalize, KdeConfig};
use dualtree::oracle::{brute_kde, brute_knn, brute_range, kruskal_mst};
use dualtree::{
    emst, knn_search, range_search, BoundMode, Dataset, EmstResult, KnnConfig, NeighborResults, RangeConfig,
    RangeResults, TraversalKind, TraversalStats, TreeConfig, TreeKind,
};

use crate::config::{RunArgs, RunConfig, TaskConfig};
use crate::error::CliError;

/// What a task produced.
enum Output {
    Neighbors(NeighborResults<f64>),
    Range(RangeResults<f64>),
    Emst(EmstResult<f64>),
    /// Unnormalized kernel sums.
    Kde(Vec<f64>),
}

pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => {
            Box::new(BufWriter::new(File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn execute(config: &RunConfig, query: &Dataset, reference: &Dataset) -> Result<(Output, TraversalStats), CliError> {
    let (tree, traversal, workers) = (config.tree, config.traversal, config.workers);
    Ok(match config.task {
        TaskConfig::Neighbors { k, mode, bound, exclude_self } => {
            let knn = KnnConfig { k, mode, tree, traversal, bound, exclude_self, workers };
            let (res, stats) = knn_search(query, reference, &knn)?;
            (Output::Neighbors(res), stats)
        }
        TaskConfig::Range { spec } => {
            let range = RangeConfig { spec, tree, traversal, workers, ..RangeConfig::new(spec) };
            let (res, stats) = range_search(query, reference, &range)?;
            (Output::Range(res), stats)
        }
        TaskConfig::Emst => {
            let res = emst(reference, &EmstConfig { tree, traversal })?;
            let stats = res.stats;
            (Output::Emst(res), stats)
        }
        TaskConfig::Kde { kernel, epsilon, .. } => {
            let density = KdeConfig { tree, traversal, workers, ..KdeConfig::new(kernel, epsilon) };
            let (res, stats) = kde(query, reference, &density)?;
            (Output::Kde(res), stats)
        }
    })
}

/// Mismatches against the matching oracle, one line each.
fn verify(config: &RunConfig, query: &Dataset, reference: &Dataset, output: &Output) -> Result<Vec<String>, CliError> {
    let mut diffs = Vec::new();
    match (config.task, output) {
        (TaskConfig::Neighbors { k, mode, exclude_self, .. }, Output::Neighbors(got)) => {
            let expected = brute_knn(query, reference, k, mode, exclude_self)?;
            for q in 0..query.len() {
                if got.distances(q) != expected.distances(q) {
                    diffs.push(format!(
                        "query {q}: distances {:?}, expected {:?}",
                        got.distances(q),
                        expected.distances(q)
                    ));
                }
            }
        }
        (TaskConfig::Range { spec }, Output::Range(got)) => {
            let expected = brute_range(query, reference, &spec)?;
            for q in 0..query.len() {
                let (a, b) = (got.neighbors(q), expected.neighbors(q));
                if a != b {
                    let missing: Vec<usize> = b.iter().filter(|r| !a.contains(r)).copied().collect();
                    let extra: Vec<usize> = a.iter().filter(|r| !b.contains(r)).copied().collect();
                    diffs.push(format!("query {q}: missing {missing:?}, extra {extra:?}"));
                }
            }
        }
        (TaskConfig::Emst, Output::Emst(got)) => {
            let (_, weight) = kruskal_mst(reference);
            if (got.total_weight - weight).abs() > 1e-9 * weight {
                diffs.push(format!("total weight {:.16e}, expected {weight:.16e}", got.total_weight));
            }
        }
        (TaskConfig::Kde { kernel, epsilon, .. }, Output::Kde(got)) => {
            let expected = brute_kde(query, reference, &kernel)?;
            for (q, (a, b)) in got.iter().zip(&expected).enumerate() {
                let err = (a - b).abs();
                let allowed = if epsilon == 0.0 { 1e-12 * b.abs() } else { epsilon };
                if err > allowed {
                    diffs.push(format!("query {q}: density {a:.16e}, exact {b:.16e}, error {err:.3e} > {allowed:.3e}"));
                }
            }
        }
        _ => unreachable!("output always matches its task"),
    }
    Ok(diffs)
}

fn write_output(
    out: &mut dyn Write,
    output: Output,
    config: &RunConfig,
    dim: usize,
    references: usize,
) -> io::Result<()> {
    match output {
        Output::Neighbors(res) => {
            for q in 0..res.len() {
                write!(out, "{q}")?;
                for (r, d) in res.neighbors(q).iter().zip(res.distances(q)) {
                    write!(out, ",{r},{d:.16e}")?;
                }
                writeln!(out)?;
            }
        }
        Output::Range(res) => {
            for q in 0..res.len() {
                for (r, d) in res.neighbors(q).iter().zip(res.distances(q)) {
                    writeln!(out, "{q},{r},{d:.16e}")?;
                }
            }
        }
        Output::Emst(res) => {
            for e in &res.edges {
                writeln!(out, "{},{},{:.16e}", e.u, e.v, e.weight)?;
            }
            writeln!(out, "# total_weight={:.16e}", res.total_weight)?;
        }
        Output::Kde(mut densities) => {
            if let TaskConfig::Kde { kernel, normalize: true, .. } = config.task {
                normalize(&mut densities, &kernel, dim, references);
            }
            for (q, f) in densities.iter().enumerate() {
                writeln!(out, "{q},{f:.16e}")?;
            }
        }
    }
    out.flush()
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let config = args.validate()?;
    let (query, reference) = args.data.load()?;
    let (output, stats) = execute(&config, &query, &reference)?;
    if args.stats {
        eprintln!("{stats}");
    }
    let diffs = if args.verify { verify(&config, &query, &reference, &output)? } else { Vec::new() };
    let mut out = open_output(args.output.as_deref())?;
    write_output(&mut out, output, &config, reference.dim(), reference.len())?;
    if !diffs.is_empty() {
        for d in diffs.iter().take(20) {
            eprintln!("mismatch: {d}");
        }
        return Err(CliError::Verify(format!("{} mismatches against brute force", diffs.len())));
    }
    Ok(())
}

/// One row of the bench table.
struct Row {
    tree: TreeKind,
    traversal: TraversalKind,
    bound: Option<BoundMode>,
    stats: TraversalStats,
    seconds: f64,
}

pub fn bench(args: &RunArgs, repeat: usize) -> Result<(), CliError> {
    if repeat == 0 {
        return Err(CliError::Usage("--repeat must be at least 1".into()));
    }
    let base = args.validate()?;
    let (query, reference) = args.data.load()?;

    let mut variants: Vec<RunConfig> = Vec::new();
    match base.task {
        TaskConfig::Neighbors { k, mode, exclude_self, .. } => {
            for bound in BoundMode::ALL {
                variants
                    .push(RunConfig { task: TaskConfig::Neighbors { k, mode, bound, exclude_self }, ..base.clone() });
            }
        }
        _ => {
            for kind in [TreeKind::KdTree, TreeKind::CoverTree] {
                let tree = TreeConfig { kind, ..base.tree };
                for traversal in TraversalKind::ALL {
                    if traversal == TraversalKind::DualDepthFirstParallel && matches!(base.task, TaskConfig::Emst) {
                        continue;
                    }
                    variants.push(RunConfig { tree, traversal, ..base.clone() });
                }
            }
        }
    }

    let mut rows = Vec::new();
    for config in &variants {
        let mut best = f64::INFINITY;
        let mut stats = TraversalStats::default();
        for _ in 0..repeat {
            let start = Instant::now();
            let (_, s) = execute(config, &query, &reference)?;
            best = best.min(start.elapsed().as_secs_f64());
            stats = s;
        }
        let bound = match config.task {
            TaskConfig::Neighbors { bound, .. } => Some(bound),
            _ => None,
        };
        rows.push(Row { tree: config.tree.kind, traversal: config.traversal, bound, stats, seconds: best });
    }

    let mut out = open_output(args.output.as_deref())?;
    writeln!(out, "tree,traversal,bound,base_cases,scores,prunes,seconds")?;
    for r in rows {
        let bound = r.bound.map_or(String::from("-"), |b| b.to_string());
        writeln!(
            out,
            "{},{},{},{},{},{},{:.6}",
            r.tree, r.traversal, bound, r.stats.base_cases, r.stats.scores, r.stats.prunes, r.seconds
        )?;
    }
    out.flush()?;
    Ok(())
}
