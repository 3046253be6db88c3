//! Command-line flags and their validation into a [`RunConfig`].

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use dualtree::generate::{gaussian_clusters, uniform};
use dualtree::{
    load_dataset, BoundMode, Dataset, Kernel, NeighborMode, RangeSpec, TraversalKind, TreeConfig, TreeKind,
};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Knn,
    Kfn,
    Range,
    Emst,
    Kde,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KernelName {
    Gaussian,
    Epanechnikov,
}

/// Where the datasets come from.
#[derive(Args, Debug, Clone)]
pub struct DataArgs {
    /// Reference set CSV.
    #[arg(long, conflicts_with = "generate")]
    pub reference: Option<PathBuf>,
    /// Query set CSV; the reference set when absent.
    #[arg(long)]
    pub query: Option<PathBuf>,
    /// Use a random reference set of N points in D dimensions instead of a file.
    #[arg(long, num_args = 2, value_names = ["N", "D"])]
    pub generate: Option<Vec<usize>>,
    /// Seed for --generate.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Make --generate draw Gaussian clusters.
    #[arg(long)]
    pub clusters: Option<usize>,
}

/// Flags shared by `run` and `bench`.
#[derive(Args, Debug, Clone)]
pub struct RunArgs {
    #[arg(long, value_enum)]
    pub task: Task,
    #[command(flatten)]
    pub data: DataArgs,
    /// Output CSV; standard output when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Tree kind: kd or cover.
    #[arg(long, default_value = "kd")]
    pub tree: TreeKind,
    /// Traversal: dual-dfs, dual-bfs, single or dual-dfs-parallel.
    #[arg(long, default_value = "dual-dfs")]
    pub traversal: TraversalKind,
    /// Neighbor bound: combined, b1 or b2.
    #[arg(long)]
    pub bound: Option<BoundMode>,
    /// Neighbors per query (knn, kfn).
    #[arg(long)]
    pub k: Option<usize>,
    /// Smallest distance matched (range); defaults to 0.
    #[arg(long)]
    pub range_min: Option<f64>,
    /// Largest distance matched (range); may be `inf`.
    #[arg(long)]
    pub range_max: Option<f64>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelName>,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Absolute error allowed per query density (kde); 0 is exact.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Divide kernel sums by the reference count and the kernel integral.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value_t = dualtree::spacetree::DEFAULT_LEAF_SIZE)]
    pub leaf_size: usize,
    /// Threads for dual-dfs-parallel.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Leave each query point out of its own neighbor list (self-queries only).
    #[arg(long)]
    pub exclude_self: bool,
    /// Compare against brute force; exit 3 on any mismatch.
    #[arg(long)]
    pub verify: bool,
    /// Print traversal statistics to standard error.
    #[arg(long)]
    pub stats: bool,
}

/// The task with its validated parameters.
#[derive(Clone, Copy, Debug)]
pub enum TaskConfig {
    Neighbors { k: usize, mode: NeighborMode, bound: BoundMode, exclude_self: bool },
    Range { spec: RangeSpec<f64> },
    Emst,
    Kde { kernel: Kernel<f64>, epsilon: f64, normalize: bool },
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub task: TaskConfig,
    pub tree: TreeConfig,
    pub traversal: TraversalKind,
    pub workers: usize,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

/// Rejects `flag` when it was given for a task that does not use it.
fn unused<T>(value: &Option<T>, flag: &str, task: Task) -> Result<(), CliError> {
    match value {
        Some(_) => Err(usage(format!("{flag} does not apply to --task {}", task_name(task)))),
        None => Ok(()),
    }
}

pub fn task_name(task: Task) -> &'static str {
    match task {
        Task::Knn => "knn",
        Task::Kfn => "kfn",
        Task::Range => "range",
        Task::Emst => "emst",
        Task::Kde => "kde",
    }
}

pub fn tree_config(kind: TreeKind, leaf_size: usize) -> Result<TreeConfig, CliError> {
    if leaf_size == 0 {
        return Err(usage("--leaf-size must be at least 1"));
    }
    Ok(match kind {
        TreeKind::KdTree => TreeConfig::kd(leaf_size),
        TreeKind::CoverTree => TreeConfig::cover(),
    })
}

impl RunArgs {
    /// Checks every flag against the task before any data is read.
    pub fn validate(&self) -> Result<RunConfig, CliError> {
        let task = self.task;
        let neighbor = matches!(task, Task::Knn | Task::Kfn);
        if !neighbor {
            unused(&self.k, "--k", task)?;
            unused(&self.bound, "--bound", task)?;
            if self.exclude_self {
                return Err(usage(format!("--exclude-self does not apply to --task {}", task_name(task))));
            }
        }
        if task != Task::Range {
            unused(&self.range_min, "--range-min", task)?;
            unused(&self.range_max, "--range-max", task)?;
        }
        if task != Task::Kde {
            unused(&self.kernel, "--kernel", task)?;
            unused(&self.bandwidth, "--bandwidth", task)?;
            unused(&self.epsilon, "--epsilon", task)?;
            if self.normalize {
                return Err(usage(format!("--normalize does not apply to --task {}", task_name(task))));
            }
        }
        if self.workers == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        if self.workers > 1 && self.traversal != TraversalKind::DualDepthFirstParallel {
            return Err(usage("--workers above 1 needs --traversal dual-dfs-parallel"));
        }

        let task = match task {
            Task::Knn | Task::Kfn => {
                let k = self.k.ok_or_else(|| usage(format!("--task {} needs --k", task_name(task))))?;
                let mode = if task == Task::Knn { NeighborMode::Nearest } else { NeighborMode::Furthest };
                TaskConfig::Neighbors {
                    k,
                    mode,
                    bound: self.bound.unwrap_or(BoundMode::Combined),
                    exclude_self: self.exclude_self,
                }
            }
            Task::Range => {
                let max = self.range_max.ok_or_else(|| usage("--task range needs --range-max"))?;
                TaskConfig::Range { spec: RangeSpec::new(self.range_min.unwrap_or(0.0), max)? }
            }
            Task::Emst => {
                if self.data.query.is_some() {
                    return Err(usage("--task emst takes a single dataset; drop --query"));
                }
                if self.traversal == TraversalKind::DualDepthFirstParallel {
                    return Err(usage("--task emst cannot use --traversal dual-dfs-parallel"));
                }
                TaskConfig::Emst
            }
            Task::Kde => {
                let h = self.bandwidth.ok_or_else(|| usage("--task kde needs --bandwidth"))?;
                let epsilon = self.epsilon.ok_or_else(|| usage("--task kde needs --epsilon"))?;
                if epsilon.is_nan() || epsilon < 0.0 || !epsilon.is_finite() {
                    return Err(usage(format!("--epsilon must be a finite value >= 0, got {epsilon}")));
                }
                let kernel = match self.kernel.unwrap_or(KernelName::Gaussian) {
                    KernelName::Gaussian => Kernel::gaussian(h)?,
                    KernelName::Epanechnikov => Kernel::epanechnikov(h)?,
                };
                TaskConfig::Kde { kernel, epsilon, normalize: self.normalize }
            }
        };
        self.data.check()?;
        Ok(RunConfig {
            task,
            tree: tree_config(self.tree, self.leaf_size)?,
            traversal: self.traversal,
            workers: self.workers,
        })
    }
}

pub fn generate_dataset(
    n: usize,
    d: usize,
    seed: u64,
    clusters: Option<usize>,
    spread: f64,
) -> Result<Dataset, CliError> {
    if n == 0 || d == 0 {
        return Err(usage("generated datasets need at least one point and one dimension"));
    }
    Ok(match clusters {
        Some(c) => gaussian_clusters(n, d, c, spread, seed)?,
        None => uniform(n, d, seed)?,
    })
}

fn read_csv(path: &Path) -> Result<Dataset, CliError> {
    let file = File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    load_dataset(BufReader::new(file)).map_err(|e| match e {
        dualtree::Error::Usage(m) => CliError::Usage(m),
        other => CliError::Input(format!("{}: {other}", path.display())),
    })
}

impl DataArgs {
    fn check(&self) -> Result<(), CliError> {
        match (&self.reference, &self.generate) {
            (None, None) => Err(usage("give --reference or --generate N D")),
            _ => Ok(()),
        }
    }

    fn reference(&self) -> Result<Dataset, CliError> {
        self.check()?;
        match (&self.reference, &self.generate) {
            (Some(path), _) => read_csv(path),
            (None, Some(nd)) => generate_dataset(nd[0], nd[1], self.seed, self.clusters, 0.05),
            (None, None) => unreachable!("checked above"),
        }
    }

    /// `(query, reference)`; the query set is the reference set unless
    /// `--query` names a file.
    pub fn load(&self) -> Result<(Dataset, Dataset), CliError> {
        let reference = self.reference()?;
        let query = match &self.query {
            Some(path) => read_csv(path)?,
            None => reference.clone(),
        };
        if query.dim() != reference.dim() {
            return Err(CliError::Input(format!(
                "query points have {} coordinates but reference points have {}",
                query.dim(),
                reference.dim()
            )));
        }
        Ok((query, reference))
    }

    /// The reference set alone, for commands over one dataset.
    pub fn load_single(&self) -> Result<Dataset, CliError> {
        if self.query.is_some() {
            return Err(usage("this command takes a single dataset; drop --query"));
        }
        self.reference()
    }
}
