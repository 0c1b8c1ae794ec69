//! Command-line entry points.
//!
//! Every subcommand reads lesions from an annotation CSV (volume paths
//! relative to the CSV) and writes its results to files. Ground-truth masks
//! are looked up as `gt_<lesion_id>.raw` next to the CSV unless `--gt-dir`
//! says otherwise.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::grabcut::GrabCutParams;
use crate::imaging::MaskVolume;
use crate::learner::{LearnerModel, TrainOptions};
use crate::metrics::{self, MetricRecord, Scope};
use crate::phantom::{generate_suite, write_dataset};
use crate::wsss::{
    grabcut_3de, offset_dice, predict_slab, probability_volume, segment_recist_slice,
    segment_volume, wsss_train, Dataset, Lesion, SliceMethod, WsssConfig,
};

#[derive(Debug, Parser)]
#[command(name = "wsss", version, about = "Lesion segmentation from RECIST diameters")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads for per-lesion work.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: u64,
    /// Log more to standard error (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic phantom dataset with annotations and ground truth.
    PhantomGen {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Prefix of the generated lesion ids.
        #[arg(long, default_value = "les_")]
        prefix: String,
    },
    /// Segment the annotated slice of every lesion.
    SegmentSlice {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = Method::GrabcutR)]
        method: Method,
        /// Directory receiving one `<lesion_id>.raw` mask per lesion.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a slice-propagated model.
    Train {
        #[command(flatten)]
        input: Input,
        /// Odd number of slices around the annotated one used for training.
        #[arg(long, default_value_t = 5)]
        k_slices: usize,
        /// Epochs per stage.
        #[arg(long, default_value_t = TrainOptions::default().epochs)]
        epochs: usize,
        /// Model file to write.
        #[arg(long)]
        out: PathBuf,
        /// Also write every stage's model and generated labels here.
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
    },
    /// Segment whole lesions slice by slice with a trained model.
    SegmentVolume {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        model: PathBuf,
        /// Refine each slice with GrabCut instead of thresholding at 0.5.
        #[arg(long)]
        refine: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// GrabCut on every slice reached by diameter propagation.
    #[command(name = "grabcut-3de")]
    Grabcut3de {
        #[command(flatten)]
        input: Input,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare predicted masks with ground truth and write a metrics CSV.
    Evaluate {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        gt: GroundTruth,
        /// Directory holding `<lesion_id>.raw` predicted masks.
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = ScopeArg::Volume)]
        scope: ScopeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Voxel precision-recall curve of a model's probabilities.
    PrCurve {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        gt: GroundTruth,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 101)]
        thresholds: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mean per-slice DICE as a function of the offset from the annotated
    /// slice, for GrabCut-3DE and each given model.
    OffsetCurve {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        gt: GroundTruth,
        /// Model files; may be repeated.
        #[arg(long)]
        model: Vec<PathBuf>,
        /// Refine model predictions with GrabCut instead of thresholding.
        #[arg(long)]
        refine: bool,
        #[arg(long, default_value_t = 4)]
        max_offset: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Input {
    /// Annotation CSV.
    #[arg(long)]
    annotation: PathBuf,
}

#[derive(Debug, Args)]
struct GroundTruth {
    /// Directory of `gt_<lesion_id>.raw` masks; defaults to the CSV's.
    #[arg(long)]
    gt_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    GrabcutR,
    RecistD,
    Grabcut,
    #[value(name = "grabcut-i")]
    GrabcutI,
}

impl From<Method> for SliceMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::GrabcutR => SliceMethod::GrabCutR,
            Method::RecistD => SliceMethod::RecistD,
            Method::Grabcut => SliceMethod::GrabCut,
            Method::GrabcutI => SliceMethod::GrabCutInner,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ScopeArg {
    Slice,
    Volume,
    Both,
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Returns the process exit code: 0 on success, 2 on usage errors, 1 on
/// runtime errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
    log::set_max_level(level);

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs as usize)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(&cli)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    let p = GrabCutParams::default();
    match &cli.command {
        Command::PhantomGen { n, out, prefix } => {
            if *n == 0 {
                return Err(Error::InvalidParam("--n must be at least 1".into()));
            }
            let phantoms = generate_suite(*n, cli.seed, prefix)?;
            write_dataset(out, &phantoms)?;
            log::info!("wrote {n} phantoms to {}", out.display());
        }
        Command::SegmentSlice { input, method, out } => {
            let data = load(input, None)?;
            create_dir(out)?;
            for l in &data.lesions {
                let (rect, mask) = segment_recist_slice(l, (*method).into(), &p)?;
                let mut v = MaskVolume::zeros(l.volume.dims());
                v.paste(&rect, l.recist.slice_index, &mask.labels);
                v.save(&mask_path(out, &l.id))?;
            }
        }
        Command::Train {
            input,
            k_slices,
            epochs,
            out,
            checkpoint_dir,
        } => {
            let cfg = WsssConfig {
                k_slices: *k_slices,
                train: TrainOptions {
                    epochs: *epochs,
                    ..TrainOptions::default()
                },
                seed: cli.seed,
                ..WsssConfig::default()
            };
            cfg.validate()?;
            create_parent(out)?;
            let data = load(input, None)?;
            let outcome = wsss_train(&data, &cfg, checkpoint_dir.as_deref())?;
            outcome.model.save(out)?;
        }
        Command::SegmentVolume {
            input,
            model,
            refine,
            out,
        } => {
            let m = LearnerModel::load(model)?;
            let data = load(input, None)?;
            create_dir(out)?;
            for_each_lesion(&data, |l| {
                segment_volume(&m, &l.volume, &l.recist, &p, *refine)?.save(&mask_path(out, &l.id))
            })?;
        }
        Command::Grabcut3de { input, out } => {
            let data = load(input, None)?;
            create_dir(out)?;
            for_each_lesion(&data, |l| {
                grabcut_3de(&l.volume, &l.recist, &p)?.save(&mask_path(out, &l.id))
            })?;
        }
        Command::Evaluate {
            input,
            gt,
            pred_dir,
            scope,
            out,
        } => {
            require_dir(pred_dir)?;
            create_parent(out)?;
            let data = load(input, Some(gt))?;
            let mut records = Vec::new();
            for l in &data.lesions {
                let gt = ground_truth(l)?;
                let pred = MaskVolume::load(&mask_path(pred_dir, &l.id), l.volume.dims())?;
                let z = l.recist.slice_index;
                if matches!(scope, ScopeArg::Slice | ScopeArg::Both) {
                    records.push(MetricRecord::compute(&l.id, Scope::Slice, pred.slice(z), gt.slice(z))?);
                }
                if matches!(scope, ScopeArg::Volume | ScopeArg::Both) {
                    records.push(MetricRecord::compute(&l.id, Scope::Volume, &pred.data, &gt.data)?);
                }
            }
            metrics::write_metrics_csv(out, &records)?;
            let agg = metrics::aggregate(&records)?;
            log::info!(
                "mean DICE {:.4} +- {:.4}, precision {:.4}, recall {:.4}",
                agg.dice.mean,
                agg.dice.std,
                agg.precision.mean,
                agg.recall.mean
            );
        }
        Command::PrCurve {
            input,
            gt,
            model,
            thresholds,
            out,
        } => {
            let m = LearnerModel::load(model)?;
            create_parent(out)?;
            let data = load(input, Some(gt))?;
            let mut prob = Vec::new();
            let mut truth = Vec::new();
            for l in &data.lesions {
                prob.extend(probability_volume(&m, &l.volume, &l.recist)?);
                truth.extend_from_slice(&ground_truth(l)?.data);
            }
            metrics::write_pr_csv(out, &metrics::pr_curve(&prob, &truth, *thresholds)?)?;
        }
        Command::OffsetCurve {
            input,
            gt,
            model,
            refine,
            max_offset,
            out,
        } => {
            let models = model
                .iter()
                .map(|path| Ok((path.display().to_string(), LearnerModel::load(path)?)))
                .collect::<Result<Vec<_>>>()?;
            create_parent(out)?;
            let data = load(input, Some(gt))?;
            let rows = offset_curve(&data, &models, *refine, *max_offset, &p)?;
            write_offset_csv(out, &rows)?;
        }
    }
    Ok(())
}

/// One row of the offset curve.
struct OffsetRow {
    offset: i64,
    method: String,
    mean_dice: f64,
    n: usize,
}

fn offset_curve(
    data: &Dataset,
    models: &[(String, LearnerModel)],
    refine: bool,
    max_offset: usize,
    p: &GrabCutParams,
) -> Result<Vec<OffsetRow>> {
    let offsets: Vec<i64> = (-(max_offset as i64)..=max_offset as i64).collect();
    let mut methods: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    let mut collect = |name: String, predict: &dyn Fn(&Lesion) -> Result<MaskVolume>| -> Result<()> {
        let mut per = vec![Vec::new(); offsets.len()];
        for l in &data.lesions {
            let pred = predict(l)?;
            for (o, d) in offset_dice(&pred, ground_truth(l)?, &l.recist, &offsets)? {
                per[(o + max_offset as i64) as usize].push(d);
            }
        }
        methods.push((name, per));
        Ok(())
    };
    collect("grabcut-3de".into(), &|l| grabcut_3de(&l.volume, &l.recist, p))?;
    for (name, m) in models {
        let refine = refine.then_some(p);
        collect(name.clone(), &|l| predict_slab(m, &l.volume, &l.recist, max_offset, refine))?;
    }
    let mut rows = Vec::new();
    for (name, per) in methods {
        for (k, d) in per.iter().enumerate() {
            if d.is_empty() {
                continue;
            }
            rows.push(OffsetRow {
                offset: offsets[k],
                method: name.clone(),
                mean_dice: d.iter().sum::<f64>() / d.len() as f64,
                n: d.len(),
            });
        }
    }
    Ok(rows)
}

fn write_offset_csv(path: &Path, rows: &[OffsetRow]) -> Result<()> {
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["offset", "method", "mean_dice", "n"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.offset.to_string(),
            r.method.clone(),
            format!("{:.6}", r.mean_dice),
            r.n.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn load(input: &Input, gt: Option<&GroundTruth>) -> Result<Dataset> {
    if !input.annotation.is_file() {
        return Err(Error::io(
            &input.annotation,
            std::io::Error::new(std::io::ErrorKind::NotFound, "annotation file not found"),
        ));
    }
    let gt_dir = gt.map(|g| {
        g.gt_dir.clone().unwrap_or_else(|| {
            input
                .annotation
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default()
        })
    });
    if let Some(d) = &gt_dir {
        require_dir(d)?;
    }
    Dataset::load(&input.annotation, gt_dir.as_deref())
}

fn ground_truth(l: &Lesion) -> Result<&MaskVolume> {
    l.gt.as_ref().ok_or(Error::Empty("ground truth"))
}

/// Runs `f` on every lesion in parallel; the first error wins.
fn for_each_lesion<F>(data: &Dataset, f: F) -> Result<()>
where
    F: Fn(&Lesion) -> Result<()> + Sync + Send,
{
    use rayon::prelude::*;
    data.lesions.par_iter().try_for_each(f)
}

fn mask_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.raw"))
}

fn require_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "directory not found"),
        ))
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn create_parent(file: &Path) -> Result<()> {
    match file.parent() {
        Some(d) if !d.as_os_str().is_empty() => create_dir(d),
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(run(["wsss"]), 2);
        assert_eq!(run(["wsss", "no-such-command"]), 2);
        assert_eq!(run(["wsss", "segment-slice", "--out", "x"]), 2);
        assert_eq!(run(["wsss", "train", "--annotation", "a.csv", "--out", "m", "--bogus"]), 2);
        assert_eq!(run(["wsss", "--jobs", "0", "phantom-gen", "--n", "1", "--out", "x"]), 2);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(run(["wsss", "--help"]), 0);
    }

    #[test]
    fn missing_input_is_a_runtime_error() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("none.csv");
        let out = dir.path().join("out");
        let code = run([
            "wsss".as_ref(),
            "grabcut-3de".as_ref(),
            "--annotation".as_ref(),
            missing.as_os_str(),
            "--out".as_ref(),
            out.as_os_str(),
        ]);
        assert_eq!(code, 1);
    }
}
