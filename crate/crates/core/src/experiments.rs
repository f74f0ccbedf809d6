//! Sampling benchmark and ablation harness behind the command-line tools.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::geometry::{covering_radius, fps, ClusterFps, PointCloud};
use crate::lmir::Estimator;
use crate::model::{train, Classifier, MetricsRecord, ModelConfig, TrainConfig};
use crate::shuffle::ShuffleSpec;

/// `n` points uniform in the cube `[-1, 1]³`.
pub fn uniform_cloud(n: usize, seed: u64) -> Result<PointCloud> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    PointCloud::new(
        (0..n)
            .map(|_| {
                [
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]
            })
            .collect(),
    )
}

/// One summary line of the sampling benchmark. A skipped entry has no timing.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub n_in: usize,
    pub n_out: usize,
    pub clusters: usize,
    pub threads: usize,
    pub median_ms: Option<f64>,
    pub covering_radius: Option<f64>,
    /// SHA-256 of the selected indices, identical across repetitions.
    pub indices_sha256: Option<String>,
    pub note: Option<String>,
}

pub const BENCH_HEADER: &str = "method,n_in,n_out,clusters,threads,median_ms,covering_radius";
/// The timing-free view of a benchmark run, reproducible byte for byte.
pub const BENCH_METRICS_HEADER: &str = "method,n_in,n_out,clusters,threads,covering_radius,indices_sha256";

fn opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(|x| x.to_string()).unwrap_or_default()
}

impl BenchRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.method,
            self.n_in,
            self.n_out,
            self.clusters,
            self.threads,
            self.median_ms.map(|v| format!("{v:.3}")).unwrap_or_default(),
            opt(&self.covering_radius)
        )
    }

    pub fn metrics_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.method,
            self.n_in,
            self.n_out,
            self.clusters,
            self.threads,
            opt(&self.covering_radius),
            opt(&self.indices_sha256)
        )
    }
}

fn digest(indices: &[usize]) -> String {
    let mut h = Sha256::new();
    for &i in indices {
        h.update((i as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchSettings {
    pub sizes: Vec<(usize, usize)>,
    pub clusters: usize,
    pub repetitions: usize,
    pub threads: usize,
    pub seed: u64,
}

/// Times plain and clustered farthest-point sampling on the same seeded
/// uniform cloud per size. Entries that cannot run become `skipped` rows.
pub fn bench_sampling(s: &BenchSettings, mut on_row: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    if s.repetitions == 0 {
        return Err(Error::Config("benchmark needs at least one repetition".into()));
    }
    let mut rows = Vec::new();
    for &(n_in, n_out) in &s.sizes {
        let skip = |method: &str, why: String| BenchRow {
            method: method.to_string(),
            n_in,
            n_out,
            clusters: s.clusters,
            threads: s.threads,
            median_ms: None,
            covering_radius: None,
            indices_sha256: None,
            note: Some(why),
        };
        if n_in == 0 || n_out == 0 || n_out > n_in {
            let row = skip("skipped", format!("cannot draw {n_out} of {n_in} points"));
            on_row(&row);
            rows.push(row);
            continue;
        }
        let cloud = uniform_cloud(n_in, s.seed)?;
        let sampler = ClusterFps::new(s.clusters, s.seed).with_workers(s.threads);
        let methods: [(&str, usize, Box<dyn Fn() -> Result<Vec<usize>>>); 2] = [
            ("fps", 1, Box::new(|| Ok(fps(&cloud, n_out, 0)?.indices))),
            ("cluster_fps", s.threads, Box::new(|| Ok(sampler.sample(&cloud, n_out)?.indices))),
        ];
        for (name, threads, run) in methods {
            let mut times = Vec::with_capacity(s.repetitions);
            let mut result = None;
            let mut failure = None;
            for _ in 0..s.repetitions {
                let t = Instant::now();
                match run() {
                    Ok(idx) => {
                        times.push(t.elapsed().as_secs_f64() * 1e3);
                        result = Some(idx);
                    }
                    Err(e) => {
                        failure = Some(e);
                        break;
                    }
                }
            }
            let row = match (failure, result) {
                (Some(e), _) => BenchRow {
                    threads,
                    ..skip(&format!("skipped:{name}"), e.to_string())
                },
                (None, Some(idx)) => BenchRow {
                    method: name.to_string(),
                    n_in,
                    n_out,
                    clusters: if name == "fps" { 1 } else { s.clusters },
                    threads,
                    median_ms: Some(median(times)),
                    covering_radius: Some(covering_radius(&cloud, &idx)?),
                    indices_sha256: Some(digest(&idx)),
                    note: None,
                },
                (None, None) => unreachable!("at least one repetition ran"),
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// One arm of the ablation: which parts of the shuffled-layer regularization are on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Arm {
    /// Identity shuffles, cross-entropy only.
    NoNefl,
    /// Shuffles, cross-entropy only.
    Her,
    /// Shuffles plus the regularizer with the DIM pair roles.
    HerDim,
    /// Shuffles plus the regularizer with exchanged pair roles.
    HerLmir,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::NoNefl, Arm::Her, Arm::HerDim, Arm::HerLmir];

    pub fn name(self) -> &'static str {
        match self {
            Arm::NoNefl => "no_nefl",
            Arm::Her => "her",
            Arm::HerDim => "her_dim",
            Arm::HerLmir => "her_lmir",
        }
    }

    /// `base` with this arm's shuffles, weight and estimator. The regularized
    /// arms keep `base.lambda`, or 0.1 when it is 0.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut cfg = base.clone();
        let lambda = if base.lambda != 0.0 { base.lambda } else { 0.1 };
        match self {
            Arm::NoNefl => {
                cfg.shuffle = ShuffleSpec::identity();
                cfg.lambda = 0.0;
            }
            Arm::Her => cfg.lambda = 0.0,
            Arm::HerDim => {
                cfg.lambda = lambda;
                cfg.estimator = Estimator::Dim;
            }
            Arm::HerLmir => {
                cfg.lambda = lambda;
                cfg.estimator = Estimator::Lmir;
            }
        }
        cfg
    }
}

impl std::str::FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown ablation arm `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AblationRow {
    pub arm: Arm,
    pub seed: u64,
    pub final_record: MetricsRecord,
}

pub const ABLATION_HEADER: &str = "arm,seed,epochs,test_oa,test_macc,final_lmir";

impl AblationRow {
    pub fn csv_row(&self) -> String {
        let r = &self.final_record;
        format!(
            "{},{},{},{},{},{}",
            self.arm.name(),
            self.seed,
            r.epoch,
            r.test.overall_accuracy,
            r.test.mean_class_accuracy,
            opt(&r.lmir)
        )
    }
}

/// Mean final accuracies of one arm.
#[derive(Clone, Debug, PartialEq)]
pub struct ArmSummary {
    pub arm: Arm,
    pub runs: usize,
    pub mean_oa: f64,
    pub mean_macc: f64,
}

pub const SUMMARY_HEADER: &str = "arm,runs,mean_test_oa,mean_test_macc,delta_oa_vs_previous";

pub fn summarize(rows: &[AblationRow]) -> Vec<ArmSummary> {
    let mut out: Vec<ArmSummary> = Vec::new();
    for r in rows {
        let s = match out.iter_mut().find(|s| s.arm == r.arm) {
            Some(s) => s,
            None => {
                out.push(ArmSummary {
                    arm: r.arm,
                    runs: 0,
                    mean_oa: 0.0,
                    mean_macc: 0.0,
                });
                out.last_mut().expect("just pushed")
            }
        };
        s.runs += 1;
        s.mean_oa += r.final_record.test.overall_accuracy;
        s.mean_macc += r.final_record.test.mean_class_accuracy;
    }
    for s in &mut out {
        s.mean_oa /= s.runs as f64;
        s.mean_macc /= s.runs as f64;
    }
    out
}

/// Summary table with each arm's accuracy change against the arm listed before it.
pub fn summary_csv(summary: &[ArmSummary]) -> String {
    let mut out = format!("{SUMMARY_HEADER}\n");
    for (i, s) in summary.iter().enumerate() {
        let delta = if i == 0 { String::new() } else { (s.mean_oa - summary[i - 1].mean_oa).to_string() };
        out.push_str(&format!("{},{},{},{},{}\n", s.arm.name(), s.runs, s.mean_oa, s.mean_macc, delta));
    }
    out
}

/// Trains every arm once per seed `base_seed .. base_seed + seeds` on the same data.
/// Seed `s` initializes the model and drives the training streams.
pub fn ablate(
    base: &ModelConfig,
    train_cfg: &TrainConfig,
    arms: &[Arm],
    seeds: usize,
    base_seed: u64,
    train_set: &Dataset,
    test_set: &Dataset,
    mut on_row: impl FnMut(&AblationRow),
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(arms.len() * seeds);
    for s in 0..seeds as u64 {
        let seed = base_seed + s;
        for &arm in arms {
            let mut model = Classifier::new(arm.apply(base), train_set.feature_dim(), seed)?;
            let cfg = TrainConfig {
                seed,
                ..train_cfg.clone()
            };
            let outcome = train(&mut model, train_set, test_set, &cfg, |_| Ok(()))?;
            let final_record = outcome
                .records
                .last()
                .cloned()
                .ok_or_else(|| Error::Config("ablation runs need at least one epoch".into()))?;
            let row = AblationRow { arm, seed, final_record };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}
