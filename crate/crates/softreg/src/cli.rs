//! Command-line surface: synth, train, predict, eval, grid, diag.
//!
//! Every command is deterministic given its --seed; --workers sets the
//! per-expert thread count (results do not depend on it).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::data::{
    generate_synthetic, load_partition, parse_dense, parse_sparse, read_partition_file,
    to_dataset, DenseLabels, PartitionSpec, RawTable, SourceFormat, SyntheticKind,
};
use crate::diag::run_suite;
use crate::error::{Error, Result};
use crate::geometry::{geometry_counts, GeometryKind};
use crate::gibbs;
use crate::model::{Dataset, HyperParams, Variant};
use crate::modelfile::ModelFile;

pub const DATA_DIR_ENV: &str = "SOFTREG_DATA_DIR";

#[derive(Parser)]
#[command(name = "softreg", version, about = "Softplus regression trainer and tools")]
pub struct Cli {
    /// Worker threads for per-expert parallelism; 1 is fully serial.
    /// Results are identical for every setting.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Generate a synthetic 2-D dataset (circle, xor, doublemoon).
    Synth(SynthArgs),
    /// Fit a model by Gibbs sampling.
    Train(TrainArgs),
    /// Write per-row probabilities (and hard labels) for a dataset.
    Predict(PredictArgs),
    /// Report error rate, confusion counts, and predictive likelihood.
    Eval(EvalArgs),
    /// Export a 2-D probability/geometry grid.
    Grid(GridArgs),
    /// Run a sampler self-test suite (pg, crt, trpois, duality).
    Diag(DiagArgs),
}

/// Shared dataset flags. Paths that do not exist as given are retried
/// under $SOFTREG_DATA_DIR.
#[derive(Args)]
pub struct DataArgs {
    /// Feature file (dense delimited text or sparse "label idx:val").
    #[arg(long)]
    pub data: PathBuf,
    /// Input format: auto, dense, or sparse.
    #[arg(long, default_value = "auto")]
    pub format: String,
    /// Separate label file; dense input defaults to labels in the last column.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Widen the sparse feature count (use the max index of a train/test pair).
    #[arg(long)]
    pub v_override: Option<usize>,
    /// Partition file: one line of 1-based training indices per partition.
    #[arg(long)]
    pub partitions: Option<PathBuf>,
    /// Which partition line to use (1-based).
    #[arg(long, default_value_t = 1)]
    pub partition: usize,
    /// Feature scaling: auto (on for dense, off for sparse), on, off.
    #[arg(long, default_value = "auto")]
    pub standardize: String,
}

fn resolve(path: &Path) -> PathBuf {
    if path.exists() {
        return path.to_path_buf();
    }
    if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
        let joined = Path::new(&dir).join(path);
        if joined.exists() {
            return joined;
        }
    }
    path.to_path_buf()
}

fn sniff_sparse(path: &Path) -> Result<bool> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        return Ok(line.split_whitespace().skip(1).any(|t| t.contains(':')));
    }
    Ok(false)
}

impl DataArgs {
    pub fn load_table(&self) -> Result<RawTable> {
        let path = resolve(&self.data);
        let sparse = match self.format.as_str() {
            "sparse" => true,
            "dense" => false,
            "auto" => sniff_sparse(&path)?,
            other => {
                return Err(Error::Parameter(format!(
                    "unknown format '{other}' (auto|dense|sparse)"
                )))
            }
        };
        if sparse {
            parse_sparse(&path, self.v_override)
        } else {
            let labels = match &self.labels {
                Some(p) => DenseLabels::File(resolve(p)),
                None => DenseLabels::LastColumn,
            };
            parse_dense(&path, labels)
        }
    }

    fn standardize_flag(&self, t: &RawTable) -> Result<bool> {
        match self.standardize.as_str() {
            "on" => Ok(true),
            "off" => Ok(false),
            "auto" => Ok(t.source != SourceFormat::Sparse),
            other => Err(Error::Parameter(format!(
                "unknown standardize mode '{other}' (auto|on|off)"
            ))),
        }
    }

    fn partition_spec(&self, t: &RawTable) -> Result<Option<PartitionSpec>> {
        let Some(pfile) = &self.partitions else {
            return Ok(None);
        };
        let specs = read_partition_file(&resolve(pfile), t.n())?;
        if self.partition == 0 || self.partition > specs.len() {
            return Err(Error::Data(format!(
                "partition {} requested, file has {}",
                self.partition,
                specs.len()
            )));
        }
        Ok(Some(specs[self.partition - 1].clone()))
    }

    /// Training view: (train, test) under the chosen partition, or the
    /// whole table as train with an empty test side.
    pub fn load_train_test(&self) -> Result<(Dataset, Dataset)> {
        let t = self.load_table()?;
        let std_on = self.standardize_flag(&t)?;
        match self.partition_spec(&t)? {
            Some(spec) => load_partition(&t, &spec, std_on),
            None => {
                let train = to_dataset(&t, std_on)?;
                let test = Dataset::empty(train.dim(), train.standardization().map(|s| s.to_vec()))?;
                Ok((train, test))
            }
        }
    }

    /// Scoring view: raw (unstandardized) rows plus labels, the test side
    /// when a partition is given, else every row. Models standardize
    /// internally with their stored parameters.
    pub fn load_score_rows(&self) -> Result<(Vec<Vec<f64>>, Vec<u8>)> {
        let t = self.load_table()?;
        let idx: Vec<usize> = match self.partition_spec(&t)? {
            Some(spec) => {
                if spec.test_idx.is_empty() {
                    return Err(Error::Data("partition has an empty test side".into()));
                }
                spec.test_idx
            }
            None => (0..t.n()).collect(),
        };
        let rows = idx.iter().map(|&i| t.row(i).to_vec()).collect();
        let labels = idx.iter().map(|&i| t.labels()[i]).collect();
        Ok((rows, labels))
    }
}

#[derive(Args)]
pub struct SynthArgs {
    /// circle, xor, or doublemoon.
    pub kind: String,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Output directory for features.csv and labels.csv.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "ss")]
    pub variant: String,
    #[arg(long = "Kmax", default_value_t = 20)]
    pub k_max: usize,
    #[arg(long = "T", default_value_t = 1)]
    pub t_depth: usize,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub burn: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// asis, flipped, or both (both fits once per label coding and fuses).
    #[arg(long, default_value = "asis")]
    pub orientation: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the per-iteration trace here (.flipped appended for the pair).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Decision threshold; probabilities above it get label 1, ties label 0.
    #[arg(long, default_value_t = 0.5)]
    pub p0: f64,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub p0: f64,
}

#[derive(Args)]
pub struct GridArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = -4.0, allow_negative_numbers = true)]
    pub min: f64,
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub max: f64,
    /// Points per axis.
    #[arg(long, default_value_t = 100)]
    pub resolution: usize,
    #[arg(long, default_value_t = 0.5)]
    pub p0: f64,
    /// Override the geometry diagnostic: sum, stack, or ss.
    #[arg(long)]
    pub geometry: Option<String>,
}

#[derive(Args)]
pub struct DiagArgs {
    /// pg, crt, trpois, or duality.
    pub suite: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

pub fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let kind: SyntheticKind = args.kind.parse()?;
    let t = generate_synthetic(kind, args.seed);
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let fpath = args.out.join("features.csv");
    let lpath = args.out.join("labels.csv");
    let mut feats = String::new();
    let mut labs = String::new();
    for i in 0..t.n() {
        let row: Vec<String> = t.row(i).iter().map(|v| v.to_string()).collect();
        feats.push_str(&row.join(","));
        feats.push('\n');
        labs.push_str(if t.labels()[i] == 1 { "1\n" } else { "0\n" });
    }
    fs::write(&fpath, feats).map_err(|e| Error::io(&fpath, e))?;
    fs::write(&lpath, labs).map_err(|e| Error::io(&lpath, e))?;
    println!(
        "wrote {} rows ({} positive) to {}",
        t.n(),
        t.labels().iter().filter(|&&l| l == 1).count(),
        args.out.display()
    );
    Ok(())
}

fn run_one(
    d: &Dataset,
    hp: &HyperParams,
    variant: Variant,
    tag: &str,
    trace_path: Option<&Path>,
) -> Result<crate::model::FittedModel> {
    let started = Instant::now();
    let (model, trace) = gibbs::run(d, hp, variant)?;
    if let Some(tp) = trace_path {
        fs::write(tp, trace.to_text()).map_err(|e| Error::io(tp, e))?;
    }
    println!(
        "{tag}: log_lik {:.4}, {} active experts, {:.1}s",
        model.log_lik,
        model.experts.len(),
        started.elapsed().as_secs_f64()
    );
    Ok(model)
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let variant: Variant = args.variant.parse()?;
    let hp = HyperParams {
        k_max: args.k_max,
        t_depth: args.t_depth,
        n_iter: args.iters,
        burn_frac: args.burn,
        seed: args.seed,
        ..HyperParams::default()
    };
    let (train, _test) = args.data.load_train_test()?;
    let trace_main = args.trace.as_deref();
    let trace_flipped = args.trace.as_ref().map(|p| {
        let mut s = p.as_os_str().to_os_string();
        s.push(".flipped");
        PathBuf::from(s)
    });
    let mf = match args.orientation.as_str() {
        "asis" => {
            let m = run_one(&train, &hp, variant, "asis", trace_main)?;
            ModelFile::single(m, hp.clone(), args.trace.as_ref().map(|p| p.display().to_string()))
        }
        "flipped" => {
            let m = run_one(&train.flipped(), &hp, variant, "flipped", trace_main)?;
            ModelFile::single(m, hp.clone(), args.trace.as_ref().map(|p| p.display().to_string()))
        }
        "both" => {
            let m1 = run_one(&train, &hp, variant, "asis", trace_main)?;
            let m2 = run_one(
                &train.flipped(),
                &hp,
                variant,
                "flipped",
                trace_flipped.as_deref(),
            )?;
            ModelFile::fused(
                m1,
                m2,
                hp.clone(),
                args.trace.as_ref().map(|p| p.display().to_string()),
            )?
        }
        other => {
            return Err(Error::Parameter(format!(
                "unknown orientation '{other}' (asis|flipped|both)"
            )))
        }
    };
    mf.save(&args.out)?;
    println!("wrote model to {}", args.out.display());
    Ok(())
}

fn check_width(mf: &ModelFile, rows: &[Vec<f64>]) -> Result<()> {
    if let Some(row) = rows.first() {
        if row.len() != mf.n_features() {
            return Err(Error::Dimension(format!(
                "model expects V={} features, data has {}",
                mf.n_features(),
                row.len()
            )));
        }
    }
    Ok(())
}

pub fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let mf = ModelFile::load(&resolve(&args.model))?;
    let predictor = mf.predictor()?;
    let (rows, _) = args.data.load_score_rows()?;
    check_width(&mf, &rows)?;
    let mut out = String::from("# prob label\n");
    for row in &rows {
        let p = predictor.prob_raw(row)?;
        let lab = if p > args.p0 { 1 } else { 0 };
        out.push_str(&format!("{p} {lab}\n"));
    }
    fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;
    println!("wrote {} predictions to {}", rows.len(), args.out.display());
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let mf = ModelFile::load(&resolve(&args.model))?;
    let predictor = mf.predictor()?;
    let (rows, labels) = args.data.load_score_rows()?;
    check_width(&mf, &rows)?;
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    let mut ll = 0.0;
    for (row, &y) in rows.iter().zip(&labels) {
        let p = predictor.prob_raw(row)?;
        let pred = if p > args.p0 { 1 } else { 0 };
        match (pred, y) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            (0, 0) => tn += 1,
            _ => unreachable!(),
        }
        let p_true = if y == 1 { p } else { 1.0 - p };
        ll += p_true.max(1e-15).ln();
    }
    let n = rows.len();
    let err = 100.0 * (fp + fn_) as f64 / n as f64;
    println!("n {n}");
    println!("error_pct {err:.2}");
    println!("confusion tp={tp} fp={fp} fn={fn_} tn={tn}");
    println!("mean_pred_loglik {:.6}", ll / n as f64);
    Ok(())
}

pub fn cmd_grid(args: &GridArgs) -> Result<()> {
    let mf = ModelFile::load(&resolve(&args.model))?;
    if mf.n_features() != 2 {
        return Err(Error::Dimension(format!(
            "grid export needs a 2-feature model, this one has V={}",
            mf.n_features()
        )));
    }
    if args.resolution < 2 || !(args.max > args.min) {
        return Err(Error::Parameter("need resolution >= 2 and max > min".into()));
    }
    let predictor = mf.predictor()?;
    let primary = mf.primary();
    let kind = match &args.geometry {
        Some(s) => Some(s.parse::<GeometryKind>()?),
        None => None,
    };
    let res = args.resolution;
    let coord = |j: usize| args.min + (args.max - args.min) * j as f64 / (res - 1) as f64;
    let mut raws = Vec::with_capacity(res * res);
    for jy in 0..res {
        for jx in 0..res {
            raws.push(vec![coord(jx), coord(jy)]);
        }
    }
    let augmented: Vec<Vec<f64>> = raws
        .iter()
        .map(|r| primary.augment_raw(r))
        .collect::<Result<_>>()?;
    let report = geometry_counts(
        primary,
        augmented.iter().map(|r| r.as_slice()),
        args.p0,
        kind,
    )?;
    let mut out = format!("# x1 x2 prob {}\n", report.kind);
    for (raw, count) in raws.iter().zip(&report.counts) {
        let p = predictor.prob_raw(raw)?;
        out.push_str(&format!("{} {} {p} {count}\n", raw[0], raw[1]));
    }
    fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;
    println!("wrote {} grid rows to {}", raws.len(), args.out.display());
    Ok(())
}

pub fn cmd_diag(args: &DiagArgs) -> Result<()> {
    let report = run_suite(&args.suite, args.seed)?;
    for line in &report.lines {
        println!("{line}");
    }
    if report.passed {
        println!("suite {} passed", report.suite);
        Ok(())
    } else {
        Err(Error::Numerical(format!("suite {} failed", report.suite)))
    }
}

pub fn dispatch(cmd: &Cmd) -> Result<()> {
    match cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Train(a) => cmd_train(a),
        Cmd::Predict(a) => cmd_predict(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Grid(a) => cmd_grid(a),
        Cmd::Diag(a) => cmd_diag(a),
    }
}
