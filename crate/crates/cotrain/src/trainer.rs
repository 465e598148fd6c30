//! The joint training iteration, multi-view epoch schedules, hyperparameter
//! warmup, cosine learning rate, supervised pretraining, and evaluation.
//!
//! One iteration trains one pair of views on one bundle: generate FGSM
//! examples for each view over its supervised-plus-unlabeled batch, build a
//! single graph holding the supervised, agreement, and view-difference
//! terms, run one joint backward, and apply one SGD step per view. All
//! three loss values are computed every iteration regardless of their λ
//! weights, so ablation runs (λ = 0) still record the full diagnostics.
//!
//! An epoch runs `ceil(|D| / (n_views/2 · batch_size))` iterations. In the
//! `real` schedule every iteration draws a fresh random pairing of views
//! onto bundles; in the `fake` schedule the pairing is fixed, which makes
//! the run decompose into independent dual-view trainings.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::adversarial::fgsm;
use crate::data::{mix_seed, Batch, Dataset, StreamBundle};
use crate::error::{Error, Result};
use crate::losses::{
    cot_loss_graph, dif_loss_graph, one_hot, sup_loss_graph, total_loss_graph, LossBreakdown,
};
use crate::metrics::{agreement_rate, transfer_matrix, EvalContext, MetricsRecord};
use crate::model::{sgd_step, OptimizerState, ViewModel};
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Training hyperparameters. One instance serves any even number of views;
/// nothing here is retuned per view count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub lambda_cot_max: f64,
    pub lambda_dif_max: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub fgsm_epsilon: f64,
    pub n_views: usize,
}

impl Default for HyperParams {
    /// Desk-scale defaults: the large-scale recipe with the epoch budget
    /// scaled down to small synthetic datasets.
    fn default() -> Self {
        Self {
            lambda_cot_max: 10.0,
            lambda_dif_max: 0.5,
            warmup_epochs: 40,
            total_epochs: 300,
            lr0: 0.05,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 100,
            fgsm_epsilon: 0.02,
            n_views: 2,
        }
    }
}

impl HyperParams {
    /// The published SVHN-style recipe: 80-epoch warmup over 600 epochs,
    /// λ_cot = 10, λ_dif = 0.5, lr 0.05, batch 100.
    pub fn svhn_like() -> Self {
        Self {
            warmup_epochs: 80,
            total_epochs: 600,
            ..Self::default()
        }
    }

    /// CIFAR-10-style recipe; shares every constant with `svhn_like`.
    pub fn cifar10_like() -> Self {
        Self::svhn_like()
    }

    /// Validates ranges; error messages name the offending field.
    pub fn validate(&self) -> Result<()> {
        if self.n_views < 2 || !self.n_views.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "n_views must be an even number >= 2, got {}",
                self.n_views
            )));
        }
        if self.warmup_epochs > self.total_epochs {
            return Err(Error::Config(format!(
                "warmup_epochs ({}) must be <= total_epochs ({})",
                self.warmup_epochs, self.total_epochs
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        for (name, v) in [
            ("lambda_cot_max", self.lambda_cot_max),
            ("lambda_dif_max", self.lambda_dif_max),
            ("lr0", self.lr0),
            ("momentum", self.momentum),
            ("weight_decay", self.weight_decay),
            ("fgsm_epsilon", self.fgsm_epsilon),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// λ warmup: `λ_max · exp(−5 (1 − T/warmup)²)` for epochs up to the warmup
/// horizon, `λ_max` afterwards. Continuous and nondecreasing in `T`.
pub fn warmup_lambda(epoch: usize, lambda_max: f64, warmup_epochs: usize) -> f64 {
    if epoch >= warmup_epochs {
        lambda_max
    } else {
        let ratio = epoch as f64 / warmup_epochs as f64;
        lambda_max * (-5.0 * (1.0 - ratio) * (1.0 - ratio)).exp()
    }
}

/// Cosine learning rate `lr0·(1 + cos((T−1)·π/total))` for epochs
/// `1..=total`; strictly decreasing and positive on that range.
pub fn cosine_lr(epoch: usize, lr0: f64, total_epochs: usize) -> Result<f64> {
    if epoch < 1 || epoch > total_epochs {
        return Err(Error::Config(format!(
            "cosine_lr epoch {epoch} outside [1, {total_epochs}]"
        )));
    }
    let phase = (epoch - 1) as f64 * std::f64::consts::PI / total_epochs as f64;
    Ok(lr0 * (1.0 + phase.cos()))
}

/// `real`: draw a fresh random view pairing every iteration.
/// `fake`: keep the construction-order pairing fixed throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    Real,
    Fake,
}

/// Mutable training-run state: counters plus the RNG that draws pairings.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub epoch: usize,
    pub iteration: u64,
    rng: StdRng,
}

impl TrainState {
    pub fn new(seed: u64) -> Self {
        Self {
            epoch: 0,
            iteration: 0,
            rng: StdRng::seed_from_u64(seed),
        }
    }

    /// A fresh uniformly shuffled index list; consecutive entries pair up.
    /// Each unordered pair is canonicalized (low index first) so that the
    /// realized pairing is a plain matching.
    pub fn draw_pairing(&mut self, n_views: usize) -> Vec<usize> {
        let mut l: Vec<usize> = (0..n_views).collect();
        l.shuffle(&mut self.rng);
        for pair in l.chunks_mut(2) {
            pair.sort_unstable();
        }
        l
    }
}

/// Per-iteration knobs shared by every pair training in an epoch.
#[derive(Debug, Clone, Copy)]
pub struct IterationSettings {
    pub lambda_cot: f64,
    pub lambda_dif: f64,
    pub lr: f64,
    pub fgsm_epsilon: f64,
    pub feature_range: (f64, f64),
}

/// Per-epoch schedule values, normally derived from `warmup_lambda` and
/// `cosine_lr` by the run driver (modes mask the λ values there).
#[derive(Debug, Clone, Copy)]
pub struct EpochSettings {
    pub lr: f64,
    pub lambda_cot: f64,
    pub lambda_dif: f64,
}

fn concat_batch(batch: &Batch) -> Tensor {
    match (&batch.x_s, &batch.x_u) {
        (Some(s), Some(u)) => s.vstack(u).expect("pool dims match"),
        (Some(s), None) => s.clone(),
        (None, Some(u)) => u.clone(),
        (None, None) => unreachable!("batch_size >= 1"),
    }
}

fn fgsm_labels(batch: &Batch) -> Vec<Option<usize>> {
    let mut labels: Vec<Option<usize>> = batch.y_s.iter().map(|&y| Some(y)).collect();
    labels.extend(std::iter::repeat_n(None, batch.unlabeled_count()));
    labels
}

/// One joint training step for a pair of views on one batch pair.
///
/// Follows the per-iteration recipe exactly: FGSM examples for each view
/// over its supervised-plus-unlabeled rows, supervised cross entropy
/// normalized by the supervised count, agreement loss on the shared
/// unlabeled rows, view-difference loss over all rows with detached clean
/// targets, one backward, one SGD step per view. Returns the realized loss
/// values (unweighted) plus the λ-weighted total.
pub fn train_iteration(
    view_a: &mut ViewModel,
    opt_a: &mut OptimizerState,
    view_b: &mut ViewModel,
    opt_b: &mut OptimizerState,
    batch_a: &Batch,
    batch_b: &Batch,
    settings: &IterationSettings,
) -> Result<LossBreakdown> {
    if batch_a.supervised_count() != batch_b.supervised_count()
        || batch_a.unlabeled_count() != batch_b.unlabeled_count()
    {
        return Err(Error::Shape(
            "train_iteration: the two batches of a bundle must have equal part sizes".into(),
        ));
    }
    let b_s = batch_a.supervised_count();
    let b_u = batch_a.unlabeled_count();
    let classes = view_a.num_classes();

    let x_a = concat_batch(batch_a);
    let x_b = concat_batch(batch_b);
    let adv_a = fgsm(
        view_a,
        &x_a,
        &fgsm_labels(batch_a),
        settings.fgsm_epsilon,
        settings.feature_range,
    )?;
    let adv_b = fgsm(
        view_b,
        &x_b,
        &fgsm_labels(batch_b),
        settings.fgsm_epsilon,
        settings.feature_range,
    )?;

    let mut tape = Tape::new();
    let xa = tape.leaf(x_a);
    let ha = view_a.forward_on(&mut tape, xa)?;
    let xb = tape.leaf(x_b);
    let hb = view_b.forward_on(&mut tape, xb)?;
    let ga = tape.leaf(adv_a.x_adv);
    let hb_on_ga = view_b.forward_on(&mut tape, ga)?;
    let gb = tape.leaf(adv_b.x_adv);
    let ha_on_gb = view_a.forward_on(&mut tape, gb)?;

    let sup = if b_s > 0 {
        let pa_s = tape.slice_rows(ha.probs, 0, b_s)?;
        let pb_s = tape.slice_rows(hb.probs, 0, b_s)?;
        let ya = tape.leaf(one_hot(&batch_a.y_s, classes)?);
        let yb = tape.leaf(one_hot(&batch_b.y_s, classes)?);
        sup_loss_graph(&mut tape, ya, pa_s, yb, pb_s)?
    } else {
        tape.weighted_sum(Vec::new())
    };
    let cot = if b_u > 0 {
        let pa_u = tape.slice_rows(ha.probs, b_s, b_u)?;
        let pb_u = tape.slice_rows(hb.probs, b_s, b_u)?;
        cot_loss_graph(&mut tape, pa_u, pb_u)?
    } else {
        tape.weighted_sum(Vec::new())
    };
    let dif = dif_loss_graph(
        &mut tape,
        ha.probs,
        ha_on_gb.probs,
        hb.probs,
        hb_on_ga.probs,
    )?;
    let total = total_loss_graph(
        &mut tape,
        sup,
        cot,
        dif,
        settings.lambda_cot,
        settings.lambda_dif,
    )?;

    tape.backward(total)?;
    view_a.accumulate_grads(&tape, &ha)?;
    view_a.accumulate_grads(&tape, &ha_on_gb)?;
    view_b.accumulate_grads(&tape, &hb)?;
    view_b.accumulate_grads(&tape, &hb_on_ga)?;
    sgd_step(view_a, opt_a, settings.lr)?;
    sgd_step(view_b, opt_b, settings.lr)?;

    Ok(LossBreakdown {
        l_sup: tape.scalar(sup),
        l_cot: tape.scalar(cot),
        l_dif: tape.scalar(dif),
        total: tape.scalar(total),
    })
}

/// Iterations per epoch: `ceil(|D| / (n_bundles · batch_size))`.
pub fn iterations_per_epoch(data_len: usize, n_bundles: usize, batch_size: usize) -> usize {
    let per_iter = n_bundles * batch_size;
    data_len.div_ceil(per_iter)
}

/// Borrows each pair of views/optimizers named by `pairing` and trains it
/// on its bundle's batches. With `parallel` the pairs run on scoped
/// threads; results are reduced in bundle order either way, so the two
/// modes are bit-identical.
fn run_pairs(
    views: &mut [ViewModel],
    opts: &mut [OptimizerState],
    pairing: &[usize],
    batches: Vec<(Batch, Batch)>,
    settings: &IterationSettings,
    parallel: bool,
) -> Result<Vec<LossBreakdown>> {
    type PairWork<'a> = (
        &'a mut ViewModel,
        &'a mut OptimizerState,
        &'a mut ViewModel,
        &'a mut OptimizerState,
        Batch,
        Batch,
    );
    let mut view_slots: Vec<Option<&mut ViewModel>> = views.iter_mut().map(Some).collect();
    let mut opt_slots: Vec<Option<&mut OptimizerState>> = opts.iter_mut().map(Some).collect();
    let mut work: Vec<PairWork> = Vec::with_capacity(batches.len());
    for (i, (ba, bb)) in batches.into_iter().enumerate() {
        let a = pairing[2 * i];
        let b = pairing[2 * i + 1];
        work.push((
            view_slots[a].take().expect("pairing is a permutation"),
            opt_slots[a].take().expect("pairing is a permutation"),
            view_slots[b].take().expect("pairing is a permutation"),
            opt_slots[b].take().expect("pairing is a permutation"),
            ba,
            bb,
        ));
    }
    if parallel && work.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = work
                .into_iter()
                .map(|(va, oa, vb, ob, ba, bb)| {
                    scope.spawn(move || train_iteration(va, oa, vb, ob, &ba, &bb, settings))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("pair training panicked"))
                .collect()
        })
    } else {
        work.into_iter()
            .map(|(va, oa, vb, ob, ba, bb)| train_iteration(va, oa, vb, ob, &ba, &bb, settings))
            .collect()
    }
}

/// Runs one epoch over all bundles and returns the epoch's diagnostics.
///
/// Losses in the record are means over every pair training of the epoch;
/// error rates, agreement, and the transfer matrix are measured on the
/// evaluation context after the epoch's updates. A non-finite loss aborts
/// with a divergence error naming the epoch and iteration.
#[allow(clippy::too_many_arguments)]
pub fn train_epoch(
    views: &mut [ViewModel],
    opts: &mut [OptimizerState],
    bundles: &mut [StreamBundle],
    schedule: ScheduleMode,
    hp: &HyperParams,
    epoch: usize,
    settings: &EpochSettings,
    state: &mut TrainState,
    eval: &EvalContext,
    parallel: bool,
) -> Result<MetricsRecord> {
    let n = views.len();
    if n != hp.n_views || n != 2 * bundles.len() || opts.len() != n {
        return Err(Error::Config(format!(
            "expected n_views={} views with {} bundles, got {} views, {} optimizers, {} bundles",
            hp.n_views,
            hp.n_views / 2,
            n,
            opts.len(),
            bundles.len()
        )));
    }
    let iters = iterations_per_epoch(bundles[0].data_len(), bundles.len(), hp.batch_size);
    let iter_settings = IterationSettings {
        lambda_cot: settings.lambda_cot,
        lambda_dif: settings.lambda_dif,
        lr: settings.lr,
        fgsm_epsilon: hp.fgsm_epsilon,
        feature_range: eval.feature_range,
    };

    let mut sums = LossSums::default();
    for t in 0..iters {
        let pairing = match schedule {
            ScheduleMode::Real => state.draw_pairing(n),
            ScheduleMode::Fake => (0..n).collect(),
        };
        let batches: Vec<(Batch, Batch)> = bundles.iter_mut().map(|b| b.next_pair()).collect();
        let breakdowns = run_pairs(views, opts, &pairing, batches, &iter_settings, parallel)?;
        for bd in &breakdowns {
            if !bd.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    iteration: t + 1,
                });
            }
            sums.add(bd);
        }
        state.iteration += 1;
    }
    state.epoch = epoch;

    let (per_view_err, mean_err) = evaluate(views, &eval.test)?;
    let agreement = agreement_rate(views, &eval.test.features)?;
    let transfer = transfer_matrix(views, &eval.probe, eval.epsilon, eval.feature_range)?;
    Ok(MetricsRecord {
        epoch,
        per_view_err,
        mean_err,
        l_sup: sums.mean_sup(),
        l_cot: sums.mean_cot(),
        l_dif: sums.mean_dif(),
        agreement,
        transfer,
        lr: settings.lr,
        lambda_cot: settings.lambda_cot,
        lambda_dif: settings.lambda_dif,
    })
}

#[derive(Default)]
struct LossSums {
    sup: f64,
    cot: f64,
    dif: f64,
    count: usize,
}

impl LossSums {
    fn add(&mut self, bd: &LossBreakdown) {
        self.sup += bd.l_sup;
        self.cot += bd.l_cot;
        self.dif += bd.l_dif;
        self.count += 1;
    }
    fn mean_sup(&self) -> f64 {
        self.sup / self.count.max(1) as f64
    }
    fn mean_cot(&self) -> f64 {
        self.cot / self.count.max(1) as f64
    }
    fn mean_dif(&self) -> f64 {
        self.dif / self.count.max(1) as f64
    }
}

const PRETRAIN_SALT: u64 = 0x8000_0000_0000_0000;

/// Trains each view independently on the labeled pool only, each with its
/// own shuffling order, for `epochs` epochs under a cosine learning rate.
/// Epochs shuffle the pool and walk it in chunks of at most `batch_size`,
/// so every labeled row is visited exactly once per epoch.
pub fn pretrain(
    views: &mut [ViewModel],
    opts: &mut [OptimizerState],
    labeled: &Dataset,
    epochs: usize,
    hp: &HyperParams,
    seed: u64,
) -> Result<()> {
    if epochs == 0 {
        return Ok(());
    }
    let labels = labeled.labels_dense()?;
    for (i, (view, opt)) in views.iter_mut().zip(opts.iter_mut()).enumerate() {
        let mut rng = StdRng::seed_from_u64(mix_seed(seed, PRETRAIN_SALT | i as u64));
        let mut order: Vec<usize> = (0..labeled.len()).collect();
        for t in 1..=epochs {
            let lr = cosine_lr(t, hp.lr0, epochs)?;
            order.shuffle(&mut rng);
            for chunk in order.chunks(hp.batch_size) {
                supervised_step(view, opt, labeled, &labels, chunk, lr)?;
            }
        }
    }
    Ok(())
}

/// One supervised SGD step on the given rows: mean cross entropy.
fn supervised_step(
    view: &mut ViewModel,
    opt: &mut OptimizerState,
    data: &Dataset,
    labels: &[usize],
    rows: &[usize],
    lr: f64,
) -> Result<()> {
    let x_rows: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| data.features.row(r).to_vec())
        .collect();
    let y: Vec<usize> = rows.iter().map(|&r| labels[r]).collect();
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::from_rows(&x_rows)?);
    let h = view.forward_on(&mut tape, x)?;
    let target = tape.leaf(one_hot(&y, view.num_classes())?);
    let ce = tape.cross_entropy_sum(target, h.probs)?;
    let loss = tape.weighted_sum(vec![(ce, 1.0 / rows.len() as f64)]);
    tape.backward(loss)?;
    view.accumulate_grads(&tape, &h)?;
    sgd_step(view, opt, lr)
}

/// Per-view argmax error rates on a fully labeled test set, plus their
/// unweighted mean. No probability averaging across views.
pub fn evaluate(views: &[ViewModel], test: &Dataset) -> Result<(Vec<f64>, f64)> {
    if !test.fully_labeled() {
        return Err(Error::Config(
            "evaluate requires a fully labeled test set".into(),
        ));
    }
    let labels = test.labels_dense()?;
    let mut errs = Vec::with_capacity(views.len());
    for v in views {
        let preds = v.forward(&test.features)?.argmax_rows();
        let wrong = preds.iter().zip(&labels).filter(|(p, l)| p != l).count();
        errs.push(wrong as f64 / labels.len() as f64);
    }
    let mean = errs.iter().sum::<f64>() / errs.len() as f64;
    Ok((errs, mean))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_bundles, split, two_moons, SplitSpec};
    use crate::model::init_view;

    const E: f64 = std::f64::consts::E;

    #[test]
    fn warmup_matches_closed_forms() {
        assert_eq!(warmup_lambda(80, 10.0, 80), 10.0);
        assert!((warmup_lambda(0, 10.0, 80) - 10.0 * E.powf(-5.0)).abs() < 1e-9);
        assert!((warmup_lambda(40, 10.0, 80) - 10.0 * E.powf(-1.25)).abs() < 1e-9);
        assert_eq!(warmup_lambda(200, 10.0, 80), 10.0);
        // Degenerate warmup horizon: λ_max immediately.
        assert_eq!(warmup_lambda(0, 3.0, 0), 3.0);
    }

    #[test]
    fn warmup_is_continuous_and_nondecreasing() {
        let mut prev = warmup_lambda(0, 10.0, 80);
        for t in 1..=80 {
            let v = warmup_lambda(t, 10.0, 80);
            assert!(v >= prev, "decreased at {t}");
            prev = v;
        }
        assert!((warmup_lambda(79, 10.0, 80) - 10.0).abs() < 0.01);
    }

    #[test]
    fn cosine_lr_matches_closed_forms() {
        assert_eq!(cosine_lr(1, 0.05, 600).unwrap(), 0.1);
        assert!((cosine_lr(301, 0.05, 600).unwrap() - 0.05).abs() < 1e-12);
        let tail = cosine_lr(600, 0.05, 600).unwrap();
        assert!((tail - 6.854e-7).abs() < 1e-9);
        assert!(matches!(cosine_lr(0, 0.05, 600), Err(Error::Config(_))));
        assert!(matches!(cosine_lr(601, 0.05, 600), Err(Error::Config(_))));
    }

    #[test]
    fn cosine_lr_is_strictly_decreasing_and_positive() {
        let mut prev = f64::INFINITY;
        for t in 1..=600 {
            let v = cosine_lr(t, 0.05, 600).unwrap();
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
    }

    #[test]
    fn hyperparams_validation() {
        let mut hp = HyperParams::default();
        assert!(hp.validate().is_ok());
        hp.n_views = 3;
        assert!(hp.validate().is_err());
        hp.n_views = 2;
        hp.warmup_epochs = hp.total_epochs + 1;
        assert!(hp.validate().is_err());
    }

    fn settings(lambda_cot: f64, lambda_dif: f64, lr: f64) -> IterationSettings {
        IterationSettings {
            lambda_cot,
            lambda_dif,
            lr,
            fgsm_epsilon: 0.02,
            feature_range: (0.0, 1.0),
        }
    }

    fn small_setup(
        n_views: usize,
        batch: usize,
        seed: u64,
    ) -> (Vec<ViewModel>, Vec<OptimizerState>, Vec<StreamBundle>) {
        let data = two_moons(200, 0.1, seed).unwrap();
        let s = split(
            &data,
            &SplitSpec {
                n_labeled: 20,
                seed: 5,
            },
        )
        .unwrap();
        let views: Vec<ViewModel> = (0..n_views)
            .map(|i| init_view(&[2, 6, 2], 100 + i as u64).unwrap())
            .collect();
        let opts: Vec<OptimizerState> = views
            .iter()
            .map(|v| OptimizerState::new(v, 0.9, 1e-4))
            .collect();
        let bundles = make_bundles(&s.labeled, s.unlabeled.as_ref(), n_views, batch, seed).unwrap();
        (views, opts, bundles)
    }

    #[test]
    fn breakdown_fields_are_finite_nonnegative_and_combine_linearly() {
        let (mut views, mut opts, mut bundles) = small_setup(2, 32, 1);
        let (ba, bb) = bundles[0].next_pair();
        let (va, vb) = {
            let (l, r) = views.split_at_mut(1);
            (&mut l[0], &mut r[0])
        };
        let (oa, ob) = {
            let (l, r) = opts.split_at_mut(1);
            (&mut l[0], &mut r[0])
        };
        let s = settings(10.0, 0.5, 0.05);
        let bd = train_iteration(va, oa, vb, ob, &ba, &bb, &s).unwrap();
        assert!(bd.is_finite());
        assert!(bd.l_sup >= 0.0 && bd.l_cot >= -1e-12 && bd.l_dif >= 0.0);
        let combined = bd.l_sup + 10.0 * bd.l_cot + 0.5 * bd.l_dif;
        assert!((bd.total - combined).abs() < 1e-12);
    }

    #[test]
    fn lambda_zero_iteration_equals_two_independent_supervised_steps() {
        let (mut views, mut opts, mut bundles) = small_setup(2, 25, 2);
        let oracle_views = views.clone();
        let oracle_opts = opts.clone();
        let (ba, bb) = bundles[0].next_pair();

        let (va, vb) = {
            let (l, r) = views.split_at_mut(1);
            (&mut l[0], &mut r[0])
        };
        let (oa, ob) = {
            let (l, r) = opts.split_at_mut(1);
            (&mut l[0], &mut r[0])
        };
        let s = settings(0.0, 0.0, 0.05);
        train_iteration(va, oa, vb, ob, &ba, &bb, &s).unwrap();

        // Oracle: plain supervised steps, one per view, written out
        // independently of train_iteration.
        let step = |view: &mut ViewModel, opt: &mut OptimizerState, batch: &Batch| {
            let x = batch.x_s.clone().unwrap();
            let mut tape = Tape::new();
            let xn = tape.leaf(x);
            let h = view.forward_on(&mut tape, xn).unwrap();
            let y = tape.leaf(one_hot(&batch.y_s, 2).unwrap());
            let ce = tape.cross_entropy_sum(y, h.probs).unwrap();
            let loss = tape.weighted_sum(vec![(ce, 1.0 / batch.supervised_count() as f64)]);
            tape.backward(loss).unwrap();
            view.accumulate_grads(&tape, &h).unwrap();
            sgd_step(view, opt, 0.05).unwrap();
        };
        let mut ov = oracle_views;
        let mut oo = oracle_opts;
        step(&mut ov[0], &mut oo[0], &ba);
        step(&mut ov[1], &mut oo[1], &bb);

        assert!(
            views[0].params_bits_eq(&ov[0]),
            "view a diverged from the supervised oracle"
        );
        assert!(
            views[1].params_bits_eq(&ov[1]),
            "view b diverged from the supervised oracle"
        );
    }

    #[test]
    fn identical_views_and_batches_stay_identical_without_dif() {
        let (mut views, mut opts, mut bundles) = small_setup(2, 20, 3);
        views[1] = views[0].clone();
        opts[1] = opts[0].clone();
        let (ba, _) = bundles[0].next_pair();
        let bb = ba.clone();
        let (va, vb) = {
            let (l, r) = views.split_at_mut(1);
            (&mut l[0], &mut r[0])
        };
        let (oa, ob) = {
            let (l, r) = opts.split_at_mut(1);
            (&mut l[0], &mut r[0])
        };
        let s = settings(10.0, 0.0, 0.05);
        train_iteration(va, oa, vb, ob, &ba, &bb, &s).unwrap();
        assert!(views[0].params_bits_eq(&views[1]));
    }

    fn eval_ctx(seed: u64) -> EvalContext {
        let test = two_moons(150, 0.1, 900 + seed).unwrap();
        EvalContext::new(test, 0, 0.02).unwrap()
    }

    #[test]
    fn dual_view_epoch_equals_manual_iteration_loop() {
        let (mut views, mut opts, mut bundles) = small_setup(2, 32, 7);
        let mut manual_views = views.clone();
        let mut manual_opts = opts.clone();
        let mut manual_bundles = bundles.clone();

        let hp = HyperParams {
            n_views: 2,
            batch_size: 32,
            ..HyperParams::default()
        };
        let es = EpochSettings {
            lr: 0.05,
            lambda_cot: 2.0,
            lambda_dif: 0.25,
        };
        let mut state = TrainState::new(11);
        let eval = eval_ctx(7);
        train_epoch(
            &mut views,
            &mut opts,
            &mut bundles,
            ScheduleMode::Real,
            &hp,
            1,
            &es,
            &mut state,
            &eval,
            false,
        )
        .unwrap();

        let iters = iterations_per_epoch(manual_bundles[0].data_len(), 1, 32);
        let s = settings(2.0, 0.25, 0.05);
        for _ in 0..iters {
            let (ba, bb) = manual_bundles[0].next_pair();
            let (va, vb) = {
                let (l, r) = manual_views.split_at_mut(1);
                (&mut l[0], &mut r[0])
            };
            let (oa, ob) = {
                let (l, r) = manual_opts.split_at_mut(1);
                (&mut l[0], &mut r[0])
            };
            train_iteration(va, oa, vb, ob, &ba, &bb, &s).unwrap();
        }
        assert!(views[0].params_bits_eq(&manual_views[0]));
        assert!(views[1].params_bits_eq(&manual_views[1]));
    }

    #[test]
    fn fake_schedule_decomposes_into_independent_dual_trainings() {
        let (mut views, mut opts, mut bundles) = small_setup(4, 16, 9);
        let mut iso_views = [views[0].clone(), views[1].clone()];
        let mut iso_opts = [opts[0].clone(), opts[1].clone()];
        let mut iso_bundle = [bundles[0].clone()];

        let hp = HyperParams {
            n_views: 4,
            batch_size: 16,
            ..HyperParams::default()
        };
        let es = EpochSettings {
            lr: 0.03,
            lambda_cot: 1.0,
            lambda_dif: 0.1,
        };
        let mut state = TrainState::new(21);
        let eval = eval_ctx(9);
        train_epoch(
            &mut views,
            &mut opts,
            &mut bundles,
            ScheduleMode::Fake,
            &hp,
            1,
            &es,
            &mut state,
            &eval,
            false,
        )
        .unwrap();

        // Views 0 and 1 only ever touch bundle 0; replaying that pair alone
        // for the same number of iterations must give identical parameters.
        let iters = iterations_per_epoch(iso_bundle[0].data_len(), 2, 16);
        let s = settings(1.0, 0.1, 0.03);
        for _ in 0..iters {
            let (ba, bb) = iso_bundle[0].next_pair();
            let (va, vb) = {
                let (l, r) = iso_views.split_at_mut(1);
                (&mut l[0], &mut r[0])
            };
            let (oa, ob) = {
                let (l, r) = iso_opts.split_at_mut(1);
                (&mut l[0], &mut r[0])
            };
            train_iteration(va, oa, vb, ob, &ba, &bb, &s).unwrap();
        }
        assert!(views[0].params_bits_eq(&iso_views[0]));
        assert!(views[1].params_bits_eq(&iso_views[1]));
    }

    #[test]
    fn parallel_pairs_match_sequential_bit_for_bit() {
        let (mut views, mut opts, mut bundles) = small_setup(4, 16, 13);
        let mut p_views = views.clone();
        let mut p_opts = opts.clone();
        let mut p_bundles = bundles.clone();

        let hp = HyperParams {
            n_views: 4,
            batch_size: 16,
            ..HyperParams::default()
        };
        let es = EpochSettings {
            lr: 0.05,
            lambda_cot: 3.0,
            lambda_dif: 0.2,
        };
        let eval = eval_ctx(13);
        let mut state_a = TrainState::new(5);
        let mut state_b = TrainState::new(5);
        let rec_a = train_epoch(
            &mut views,
            &mut opts,
            &mut bundles,
            ScheduleMode::Real,
            &hp,
            1,
            &es,
            &mut state_a,
            &eval,
            false,
        )
        .unwrap();
        let rec_b = train_epoch(
            &mut p_views,
            &mut p_opts,
            &mut p_bundles,
            ScheduleMode::Real,
            &hp,
            1,
            &es,
            &mut state_b,
            &eval,
            true,
        )
        .unwrap();
        for i in 0..4 {
            assert!(views[i].params_bits_eq(&p_views[i]), "view {i} differs");
        }
        assert_eq!(rec_a, rec_b);
    }

    #[test]
    fn pairing_is_reproducible_and_canonical() {
        let mut a = TrainState::new(3);
        let mut b = TrainState::new(3);
        for _ in 0..50 {
            let pa = a.draw_pairing(6);
            let pb = b.draw_pairing(6);
            assert_eq!(pa, pb);
            for pair in pa.chunks(2) {
                assert!(pair[0] < pair[1]);
            }
            let mut sorted = pa.clone();
            sorted.sort_unstable();
            assert_eq!(sorted, (0..6).collect::<Vec<_>>());
        }
    }

    #[test]
    fn pretrain_zero_epochs_is_a_no_op() {
        let (mut views, mut opts, _) = small_setup(2, 16, 4);
        let snapshot = views.clone();
        let s = two_moons(100, 0.1, 3).unwrap();
        pretrain(&mut views, &mut opts, &s, 0, &HyperParams::default(), 9).unwrap();
        assert!(views[0].params_bits_eq(&snapshot[0]));
        assert!(views[1].params_bits_eq(&snapshot[1]));
    }

    #[test]
    fn pretrain_orders_differ_across_views() {
        let data = two_moons(120, 0.1, 8).unwrap();
        // Same initialization, different data orders: parameters split.
        let mut views = vec![
            init_view(&[2, 6, 2], 42).unwrap(),
            init_view(&[2, 6, 2], 42).unwrap(),
        ];
        let mut opts: Vec<OptimizerState> = views
            .iter()
            .map(|v| OptimizerState::new(v, 0.9, 1e-4))
            .collect();
        let hp = HyperParams {
            batch_size: 16,
            ..HyperParams::default()
        };
        pretrain(&mut views, &mut opts, &data, 3, &hp, 77).unwrap();
        assert!(!views[0].params_bits_eq(&views[1]));
    }

    #[test]
    fn evaluate_constant_and_perfect_classifiers() {
        let test = two_moons(100, 0.05, 17).unwrap();
        let mut constant = init_view(&[2, 2], 0).unwrap();
        for l in constant.layers_mut() {
            l.weight.data_mut().fill(0.0);
            l.bias.data_mut().fill(0.0);
        }
        let class1 = test.labels.iter().filter(|l| **l == Some(1)).count();
        let (errs, _) = evaluate(&[constant], &test).unwrap();
        assert_eq!(errs[0], class1 as f64 / 100.0);

        // Mean is unweighted.
        let a = init_view(&[2, 4, 2], 1).unwrap();
        let b = init_view(&[2, 4, 2], 2).unwrap();
        let (errs, mean) = evaluate(&[a, b], &test).unwrap();
        assert!((mean - (errs[0] + errs[1]) / 2.0).abs() < 1e-15);

        let unlabeled = Dataset::new(
            test.features.clone(),
            vec![None; 100],
            2,
            test.feature_range,
        )
        .unwrap();
        assert!(matches!(
            evaluate(&[init_view(&[2, 2], 0).unwrap()], &unlabeled),
            Err(Error::Config(_))
        ));
    }
}
