//! The `wattgan` command-line tool.
//!
//! Every command reads the same [`RunConfig`]; outputs are partitioned per
//! building so concurrent workers never write the same file.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{write_atomic, Checkpoint};
use crate::config::{RunConfig, CONFIG_ENV};
use crate::detect::{detect_segment, SegmentDetection};
use crate::error::{Error, Result};
use crate::evalr::{aggregate, match_events, MatchConfig, MatchResult};
use crate::series::{
    drop_missing, load_lead_csv, normalize, segmentize, synth_series, windows, write_lead_csv, Segment,
    TIMESTAMP_FORMAT,
};
use crate::train::train;

#[derive(Debug, Parser)]
#[command(name = "wattgan", version, about = "WGAN-based anomaly detection for hourly energy series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Experiment config (JSON). Defaults apply when omitted.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    /// Override a config value, e.g. `--set train.epochs=10`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Write a synthetic LEAD-schema dataset.
    Synth,
    /// Clean, segment and normalize every building.
    Preprocess,
    /// Train one model per building on its anomaly-free segments.
    Train,
    /// Score and localize anomalies in every test segment.
    Detect,
    /// Compare detections with labels.
    Eval,
}

pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::Synth => cmd_synth(&cfg),
        Command::Preprocess => cmd_preprocess(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Detect => cmd_detect(&cfg),
        Command::Eval => cmd_eval(&cfg).map(|_| ()),
    }
}

/// One building after preprocessing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreparedSeries {
    pub building_id: String,
    pub timestamps: Vec<String>,
    pub readings: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl PreparedSeries {
    pub fn train_segments(&self) -> impl Iterator<Item = &Segment> {
        self.segments.iter().filter(|s| !s.has_anomaly())
    }

    /// `(segment index, segment)` for every held-out segment.
    pub fn test_segments(&self) -> impl Iterator<Item = (usize, &Segment)> {
        self.segments.iter().enumerate().filter(|(_, s)| s.has_anomaly())
    }

    pub fn ground_truth(&self) -> Vec<u64> {
        self.test_segments()
            .flat_map(|(_, s)| s.anomaly_indices())
            .map(|i| i as u64)
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentSummary {
    pub segment_index: usize,
    pub origin: usize,
    pub length: usize,
    pub critical_points: Vec<usize>,
    pub predicted: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub building_id: String,
    pub segments: Vec<SegmentSummary>,
    /// Predicted anomaly positions in the cleaned series.
    pub predicted: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub building_id: String,
    pub r_t: u64,
    #[serde(flatten)]
    pub result: MatchResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRecord {
    pub r_t: u64,
    pub buildings: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub records: Vec<MetricRecord>,
    pub aggregate: Vec<AggregateRecord>,
}

fn file_stem(building_id: &str) -> String {
    building_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn segments_dir(cfg: &RunConfig) -> PathBuf {
    cfg.paths.work_dir.join("segments")
}

fn detections_dir(cfg: &RunConfig, building_id: &str) -> PathBuf {
    cfg.paths.reports_dir.join("detections").join(file_stem(building_id))
}

pub fn checkpoint_path(cfg: &RunConfig, building_id: &str) -> PathBuf {
    cfg.paths.models_dir.join(format!("{}.ckpt", file_stem(building_id)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    write_atomic(path, text.as_bytes())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn pool(cfg: &RunConfig) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))
}

pub fn cmd_synth(cfg: &RunConfig) -> Result<()> {
    if cfg.synth.is_empty() {
        return Err(Error::Config("synth: no profiles configured".into()));
    }
    let series = cfg
        .synth
        .iter()
        .map(synth_series)
        .collect::<Result<Vec<_>>>()?;
    if let Some(dir) = cfg.paths.data.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_lead_csv(&cfg.paths.data, &series)?;
    for (profile, s) in cfg.synth.iter().zip(&series) {
        println!("{}: {} readings", s.building_id, s.len());
        for inj in &profile.injections {
            println!(
                "  {:?} at {} for {} h (magnitude {})",
                inj.kind, inj.start, inj.duration, inj.magnitude
            );
        }
    }
    println!("wrote {}", cfg.paths.data.display());
    Ok(())
}

pub fn cmd_preprocess(cfg: &RunConfig) -> Result<()> {
    let raw = load_lead_csv(&cfg.paths.data)?;
    let mut prepared = Vec::with_capacity(raw.len());
    for series in &raw {
        let clean = drop_missing(series)?;
        let segments = segmentize(&clean, cfg.preprocess.n_segments)?
            .iter()
            .map(normalize)
            .collect::<Result<Vec<_>>>()?;
        if let Some(short) = segments.iter().find(|s| s.len() < cfg.preprocess.w) {
            return Err(Error::InvalidArgument(format!(
                "{}: segment of length {} is shorter than the window",
                clean.building_id,
                short.len()
            )));
        }
        prepared.push(PreparedSeries {
            building_id: clean.building_id.clone(),
            timestamps: clean
                .timestamps
                .iter()
                .map(|t| t.format(TIMESTAMP_FORMAT).to_string())
                .collect(),
            readings: clean.readings.clone(),
            segments,
        });
    }
    let dir = segments_dir(cfg);
    for p in &prepared {
        let n_test = p.test_segments().count();
        write_json(&dir.join(format!("{}.json", file_stem(&p.building_id))), p)?;
        println!(
            "{}: {} segments ({} train, {} test)",
            p.building_id,
            p.segments.len(),
            p.segments.len() - n_test,
            n_test
        );
    }
    Ok(())
}

pub fn load_prepared(cfg: &RunConfig) -> Result<Vec<PreparedSeries>> {
    let dir = segments_dir(cfg);
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::io(&dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::NoTrainingData(format!(
            "no preprocessed series in {}",
            dir.display()
        )));
    }
    paths.iter().map(|p| read_json(p)).collect()
}

pub fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let prepared = load_prepared(cfg)?;
    pool(cfg)?.install(|| {
        prepared.par_iter().try_for_each(|p| {
            let data = p
                .train_segments()
                .map(|s| windows(s, cfg.preprocess.w))
                .collect::<Result<Vec<_>>>()?;
            if data.is_empty() {
                return Err(Error::NoTrainingData(format!(
                    "{}: every segment contains an anomaly",
                    p.building_id
                )));
            }
            let out = train(&data, &cfg.train)?;
            let ckpt = Checkpoint::new(&p.building_id, &cfg.train, out.generator, out.critic);
            let path = checkpoint_path(cfg, &p.building_id);
            ckpt.save(&path)?;
            let report = cfg
                .paths
                .reports_dir
                .join(format!("{}_train.csv", file_stem(&p.building_id)));
            write_atomic(&report, out.report.to_csv().as_bytes())?;
            println!(
                "{}: {} critic / {} generator updates -> {}",
                p.building_id,
                out.report.critic_updates,
                out.report.generator_updates,
                path.display()
            );
            Ok(())
        })
    })
}

/// Per-timestamp report rows for one segment.
pub fn detection_csv(p: &PreparedSeries, segment: &Segment, det: &SegmentDetection) -> String {
    let mut out = String::from("timestamp,raw_reading,scaled_kde,predicted_flag,true_label\n");
    let mut flagged = vec![false; segment.len()];
    for &i in &det.predicted {
        flagged[i] = true;
    }
    for (i, flag) in flagged.iter().enumerate() {
        let g = segment.origin + i;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.timestamps[g],
            p.readings[g],
            det.kde_curve[i],
            u8::from(*flag),
            u8::from(segment.labels[i])
        ));
    }
    out
}

pub fn cmd_detect(cfg: &RunConfig) -> Result<()> {
    let prepared = load_prepared(cfg)?;
    let dcfg = cfg.detection();
    pool(cfg)?.install(|| {
        prepared.par_iter().try_for_each(|p| {
            let ckpt = Checkpoint::load(checkpoint_path(cfg, &p.building_id))?;
            if ckpt.building_id != p.building_id {
                return Err(Error::Version(format!(
                    "checkpoint belongs to {}, not {}",
                    ckpt.building_id, p.building_id
                )));
            }
            let dir = detections_dir(cfg, &p.building_id);
            let mut summary = DetectionSummary {
                building_id: p.building_id.clone(),
                segments: Vec::new(),
                predicted: Vec::new(),
            };
            for (idx, segment) in p.test_segments() {
                let det = detect_segment(segment, &ckpt.generator, &cfg.invert, &cfg.sdtw, &cfg.score, &dcfg)?;
                write_atomic(
                    &dir.join(format!("segment_{idx:03}.csv")),
                    detection_csv(p, segment, &det).as_bytes(),
                )?;
                write_atomic(
                    &dir.join(format!("scores_{idx:03}.csv")),
                    det.scores.to_csv(idx).as_bytes(),
                )?;
                let shift = |v: &[usize]| v.iter().map(|i| i + segment.origin).collect::<Vec<_>>();
                summary
                    .predicted
                    .extend(shift(&det.predicted).into_iter().map(|i| i as u64));
                summary.segments.push(SegmentSummary {
                    segment_index: idx,
                    origin: segment.origin,
                    length: segment.len(),
                    critical_points: shift(&det.critical_points),
                    predicted: shift(&det.predicted),
                });
            }
            write_json(&dir.join("summary.json"), &summary)?;
            println!(
                "{}: {} test segments, {} predicted points",
                p.building_id,
                summary.segments.len(),
                summary.predicted.len()
            );
            Ok(())
        })
    })
}

pub fn cmd_eval(cfg: &RunConfig) -> Result<Metrics> {
    let prepared = load_prepared(cfg)?;
    let det_root = cfg.paths.reports_dir.join("detections");
    let known: Vec<String> = prepared.iter().map(|p| file_stem(&p.building_id)).collect();
    if let Ok(entries) = fs::read_dir(&det_root) {
        for e in entries.flatten() {
            let name = e.file_name().to_string_lossy().to_string();
            if !known.contains(&name) {
                return Err(Error::Format(format!(
                    "detections for unknown building `{name}`"
                )));
            }
        }
    }

    let mut records = Vec::new();
    for p in &prepared {
        let path = detections_dir(cfg, &p.building_id).join("summary.json");
        let summary: DetectionSummary = read_json(&path)?;
        if summary.building_id != p.building_id {
            return Err(Error::Format(format!(
                "{} holds detections for {}",
                path.display(),
                summary.building_id
            )));
        }
        let gt = p.ground_truth();
        for &r_t in &cfg.eval.tolerances {
            records.push(MetricRecord {
                building_id: p.building_id.clone(),
                r_t,
                result: match_events(&gt, &summary.predicted, &MatchConfig { r_t }),
            });
        }
    }

    let mut agg = Vec::new();
    for &r_t in &cfg.eval.tolerances {
        let results: Vec<MatchResult> = records
            .iter()
            .filter(|r| r.r_t == r_t)
            .map(|r| r.result)
            .collect();
        let s = aggregate(&results)?;
        agg.push(AggregateRecord {
            r_t,
            buildings: results.len(),
            precision: s.precision,
            recall: s.recall,
            f1: s.f1,
        });
    }
    let metrics = Metrics {
        records,
        aggregate: agg,
    };
    let out = cfg.paths.reports_dir.join("metrics.json");
    write_json(&out, &metrics)?;
    for a in &metrics.aggregate {
        println!(
            "r_t={:>3}  recall {:.3}  precision {:.3}  f1 {:.3}  ({} buildings)",
            a.r_t, a.recall, a.precision, a.f1, a.buildings
        );
    }
    println!("wrote {}", out.display());
    Ok(metrics)
}
