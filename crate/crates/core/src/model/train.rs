use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::classifier::Classifier;
use super::objective::{total_loss, LmirHead};
use super::Phase;
use crate::data::{augment_with, Dataset};
use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::numerics::{adam_step, cosine_anneal_lr, AdamState, Graph, Tape};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub min_learning_rate: f64,
    /// Epochs per cosine period.
    pub t_max: u64,
    /// Master seed for data order, augmentation, dropout and discriminator init.
    pub seed: u64,
    pub augment: bool,
    pub jitter: f64,
    /// Largest fraction of a training cloud's points dropped per sample; the kept
    /// count is uniform between the floor it leaves and the full cloud.
    pub point_dropout: f64,
    /// Stop after the first epoch whose test accuracy reaches this.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 24,
            learning_rate: 1e-3,
            min_learning_rate: 0.0,
            t_max: 32,
            seed: 0,
            augment: true,
            jitter: crate::data::AUGMENT_JITTER,
            point_dropout: 0.75,
            target_accuracy: None,
        }
    }
}

/// Accuracy and confusion counts of one evaluation pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub overall_accuracy: f64,
    /// Mean recall over the classes present in the evaluated data.
    pub mean_class_accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn from_predictions(labels: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::EmptyInput("evaluation set"));
        }
        if labels.len() != predicted.len() {
            return Err(Error::Contract(format!(
                "{} labels against {} predictions",
                labels.len(),
                predicted.len()
            )));
        }
        let mut confusion = vec![vec![0usize; classes]; classes];
        for (&t, &p) in labels.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::Label {
                    label: t.max(p),
                    classes,
                });
            }
            confusion[t][p] += 1;
        }
        let correct: usize = (0..classes).map(|c| confusion[c][c]).sum();
        let mut recall_sum = 0.0;
        let mut present = 0;
        for (c, row) in confusion.iter().enumerate() {
            let support: usize = row.iter().sum();
            if support > 0 {
                recall_sum += row[c] as f64 / support as f64;
                present += 1;
            }
        }
        Ok(Evaluation {
            overall_accuracy: correct as f64 / labels.len() as f64,
            mean_class_accuracy: recall_sum / present as f64,
            confusion,
        })
    }

    /// `true_class,<class names…>` header, then one row of counts per true class.
    pub fn confusion_csv(&self, class_names: &[String]) -> String {
        let mut out = String::from("true_class");
        for n in class_names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (name, row) in class_names.iter().zip(&self.confusion) {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

/// One epoch of training followed by a test pass.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub cross_entropy: f64,
    /// Mean layer-averaged estimate over the epoch's batches; `None` without the regularizer.
    pub lmir: Option<f64>,
    pub learning_rate: f64,
    pub test: Evaluation,
}

pub const METRICS_HEADER: &str = "epoch,train_loss,cross_entropy,lmir,lr,test_oa,test_macc";

impl MetricsRecord {
    /// A row under [`METRICS_HEADER`]; an absent estimate is an empty field.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.epoch,
            self.train_loss,
            self.cross_entropy,
            self.lmir.map(|v| v.to_string()).unwrap_or_default(),
            self.learning_rate,
            self.test.overall_accuracy,
            self.test.mean_class_accuracy
        )
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub records: Vec<MetricsRecord>,
    pub head: Option<LmirHead>,
    pub adam: AdamState,
    pub head_adam: Option<AdamState>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Minibatch Adam on `CE − λ · estimate`, with the learning rate annealed per
/// epoch. Calls `on_epoch` after every epoch's test pass.
pub fn train(
    model: &mut Classifier,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&MetricsRecord) -> Result<()>,
) -> Result<TrainOutcome> {
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if test_set.is_empty() {
        return Err(Error::Config("test set is empty".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be at least 1".into()));
    }
    let classes = model.config().classes;
    if train_set.classes() != classes || test_set.classes() != classes {
        return Err(Error::Config(format!(
            "model has {classes} classes but the data has {}",
            train_set.classes()
        )));
    }
    let lambda = model.config().lambda;
    let mut head = (lambda != 0.0).then(|| LmirHead::new(model, stream(cfg.seed, 4).random()));
    let mut adam = AdamState::new(&model.params().store);
    let mut head_adam = head.as_ref().map(|h| AdamState::new(&h.store));
    let mut order_rng = stream(cfg.seed, 1);
    let mut augment_rng = stream(cfg.seed, 2);
    let mut dropout_rng = stream(cfg.seed, 3);
    let eval_seed = stream(cfg.seed, 5).random();
    let mut dropout_points_rng = stream(cfg.seed, 6);
    let floor_points = model.config().min_points();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cosine_anneal_lr(epoch as u64, cfg.learning_rate, cfg.t_max, cfg.min_learning_rate);
        order.shuffle(&mut order_rng);
        let (mut loss_sum, mut ce_sum, mut mi_sum, mut mi_batches) = (0.0, 0.0, 0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let clouds: Vec<PointCloud> = batch
                .iter()
                .map(|&i| {
                    let c = &train_set.clouds()[i];
                    let c = if cfg.augment {
                        augment_with(c, cfg.jitter, &mut augment_rng)
                    } else {
                        c.clone()
                    };
                    drop_points(c, cfg.point_dropout, floor_points, &mut dropout_points_rng)
                })
                .collect::<Result<_>>()?;
            let refs: Vec<&PointCloud> = clouds.iter().collect();
            let labels: Vec<usize> = clouds.iter().map(|c| c.label().expect("dataset clouds are labelled")).collect();

            let mut tape = Tape::new();
            let mut phase = Phase::Train {
                rng: &mut dropout_rng,
                pairs: head.is_some(),
            };
            let out = model.forward(&mut tape, &refs, &mut phase)?;
            let parts = total_loss(&mut tape, &out.logits, &labels, &out.pairs, head.as_ref(), lambda)?;
            let loss = tape.value(&parts.total).item();
            if !loss.is_finite() {
                return Err(Error::Contract(format!("loss became {loss} in epoch {epoch}")));
            }
            let grads = tape.backward(parts.total)?;
            let model_grads = grads.for_store(&model.params().store);
            adam_step(&mut model.params_mut().store, &model_grads, &mut adam, lr)?;
            if let (Some(h), Some(st)) = (head.as_mut(), head_adam.as_mut()) {
                let g = grads.for_store(&h.store);
                adam_step(&mut h.store, &g, st, lr)?;
            }

            let w = batch.len() as f64;
            loss_sum += loss * w;
            ce_sum += parts.cross_entropy * w;
            if let Some(mi) = parts.mutual_information {
                mi_sum += mi * w;
                mi_batches += batch.len();
            }
        }
        let n = train_set.len() as f64;
        let test = evaluate(model, test_set, None, eval_seed)?;
        let record = MetricsRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / n,
            cross_entropy: ce_sum / n,
            lmir: (mi_batches > 0).then(|| mi_sum / mi_batches as f64),
            learning_rate: lr,
            test,
        };
        on_epoch(&record)?;
        let done = cfg.target_accuracy.is_some_and(|t| record.test.overall_accuracy >= t);
        records.push(record);
        if done {
            break;
        }
    }
    Ok(TrainOutcome {
        records,
        head,
        adam,
        head_adam,
    })
}

fn drop_points(cloud: PointCloud, rate: f64, floor: usize, rng: &mut impl Rng) -> Result<PointCloud> {
    let n = cloud.len();
    let low = (((1.0 - rate) * n as f64).ceil() as usize).max(floor);
    if rate == 0.0 || low >= n {
        return Ok(cloud);
    }
    let keep = rng.random_range(low..=n);
    subsample(&cloud, keep, rng)
}

/// `budget` points drawn uniformly without replacement, kept in their original order.
pub fn subsample(cloud: &PointCloud, budget: usize, rng: &mut impl Rng) -> Result<PointCloud> {
    if budget == 0 || budget > cloud.len() {
        return Err(Error::Cardinality(format!(
            "cannot keep {budget} of {} points",
            cloud.len()
        )));
    }
    if budget == cloud.len() {
        return Ok(cloud.clone());
    }
    let mut idx = rand::seq::index::sample(rng, cloud.len(), budget).into_vec();
    idx.sort_unstable();
    cloud.subset(&idx)
}

/// Inference over `data`, optionally on a seeded random subset of `budget` points per cloud.
pub fn evaluate(model: &Classifier, data: &Dataset, budget: Option<usize>, seed: u64) -> Result<Evaluation> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation set"));
    }
    let predicted = match budget {
        None => model.predict(data.clouds())?,
        Some(b) => {
            if b < model.config().min_points() {
                return Err(Error::Cardinality(format!(
                    "a budget of {b} points is below the {} the model samples",
                    model.config().min_points()
                )));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let reduced = data
                .clouds()
                .iter()
                .map(|c| subsample(c, b, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            model.predict(&reduced)?
        }
    };
    Evaluation::from_predictions(&data.labels(), &predicted, data.classes())
}
