//! Training loop with fixed-interval weight snapshots and majority-vote
//! ensembling over an odd subset of them.

use crate::dataset::LabeledSample;
use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{GradBuffer, RmsProp, RmsPropConfig, ShallowCnn};

/// One training example: a pixel field and its binary label.
#[derive(Debug, Clone, Copy)]
pub struct TrainItem<'a, T> {
    pub pixels: &'a Array2<T>,
    pub label: bool,
}

impl<'a, T: Real> TrainItem<'a, T> {
    pub fn from_sample(sample: &'a LabeledSample<T>) -> Self {
        Self {
            pixels: sample.image.pixels(),
            label: sample.label,
        }
    }
}

/// Model parameters captured at the end of an epoch.
#[derive(Debug, Clone)]
pub struct Snapshot<T> {
    pub epoch: usize,
    pub model: ShallowCnn<T>,
}

/// Ordered weight snapshots plus the odd-size subset of epochs that votes at
/// inference time.
#[derive(Debug, Clone)]
pub struct SnapshotEnsemble<T> {
    snapshots: Vec<Snapshot<T>>,
    vote_epochs: Vec<usize>,
}

impl<T: Real> SnapshotEnsemble<T> {
    pub fn new(snapshots: Vec<Snapshot<T>>, vote_epochs: Vec<usize>) -> Result<Self> {
        if vote_epochs.is_empty() || vote_epochs.len() % 2 == 0 {
            return Err(Error::EvenVoteSet(vote_epochs.len()));
        }
        for &epoch in &vote_epochs {
            if !snapshots.iter().any(|s| s.epoch == epoch) {
                return Err(Error::MissingVoteEpoch(epoch));
            }
        }
        Ok(Self {
            snapshots,
            vote_epochs,
        })
    }

    /// Vote with the last `n` snapshots (or all of them if fewer), trimmed to
    /// an odd count by dropping the earliest.
    pub fn with_last_n_votes(snapshots: Vec<Snapshot<T>>, n: usize) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::EvenVoteSet(0));
        }
        let mut take = n.min(snapshots.len()).max(1);
        if take % 2 == 0 {
            take -= 1;
        }
        let vote_epochs = snapshots[snapshots.len() - take..]
            .iter()
            .map(|s| s.epoch)
            .collect();
        Self::new(snapshots, vote_epochs)
    }

    pub fn snapshots(&self) -> &[Snapshot<T>] {
        &self.snapshots
    }

    pub fn vote_epochs(&self) -> &[usize] {
        &self.vote_epochs
    }

    pub fn snapshot_epochs(&self) -> Vec<usize> {
        self.snapshots.iter().map(|s| s.epoch).collect()
    }

    fn voters(&self) -> impl Iterator<Item = &ShallowCnn<T>> {
        self.vote_epochs.iter().map(move |e| {
            &self
                .snapshots
                .iter()
                .find(|s| s.epoch == *e)
                .expect("vote epoch checked at construction")
                .model
        })
    }

    /// Majority of per-snapshot thresholded predictions (p >= 0.5 counts as
    /// positive); the odd vote count rules out ties.
    pub fn predict_vote(&self, pixels: &Array2<T>) -> bool {
        let half = T::one() / (T::one() + T::one());
        let positives = self
            .voters()
            .filter(|m| m.forward_pixels(pixels) >= half)
            .count();
        2 * positives > self.vote_epochs.len()
    }

    /// Mean probability across the voting snapshots; the score used for AUC.
    pub fn mean_probability(&self, pixels: &Array2<T>) -> T {
        let sum = self
            .voters()
            .map(|m| m.forward_pixels(pixels))
            .fold(T::zero(), |a, p| a + p);
        sum / T::from_usize(self.vote_epochs.len()).expect("small count")
    }
}

/// A finished training run: the snapshot ensemble plus per-epoch mean losses.
#[derive(Debug, Clone)]
pub struct TrainRun<T> {
    pub ensemble: SnapshotEnsemble<T>,
    pub epoch_losses: Vec<f64>,
}

/// Train in place with RMSProp on binary cross-entropy; shuffling is seeded,
/// gradients are batch means, and a snapshot is captured at the end of every
/// `snapshot_every`-th epoch. Non-finite loss aborts with the offending
/// epoch. The returned ensemble votes with the last three snapshots.
pub fn train<T: Real>(
    model: &mut ShallowCnn<T>,
    items: &[TrainItem<T>],
    cfg: &RmsPropConfig<T>,
    snapshot_every: usize,
) -> Result<TrainRun<T>> {
    cfg.validate()?;
    if items.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    if snapshot_every == 0 {
        return Err(Error::InvalidConfig("snapshot_every must be >= 1".into()));
    }
    let mut optimizer = RmsProp::new(*cfg, model)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..items.len()).collect();
    let mut grads = GradBuffer::zeros_like(model);
    let mut snapshots = Vec::new();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            grads.zero();
            for &i in batch {
                let (_, loss) = model.forward_backward(items[i].pixels, items[i].label, &mut grads);
                loss_sum += to_f64(loss);
            }
            grads.scale(T::one() / T::from_usize(batch.len()).expect("batch fits"));
            optimizer.step(model, &grads);
        }
        let mean_loss = loss_sum / items.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        epoch_losses.push(mean_loss);
        if epoch % snapshot_every == 0 {
            snapshots.push(Snapshot {
                epoch,
                model: model.clone(),
            });
        }
    }
    if snapshots.is_empty() {
        // Fewer epochs than the snapshot interval: keep the final state.
        snapshots.push(Snapshot {
            epoch: cfg.epochs,
            model: model.clone(),
        });
    }
    let ensemble = SnapshotEnsemble::with_last_n_votes(snapshots, 3)?;
    Ok(TrainRun {
        ensemble,
        epoch_losses,
    })
}
