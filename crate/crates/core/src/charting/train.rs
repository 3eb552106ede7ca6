use ndarray::{s, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::embedding::ChartEmbedding;
use super::losses::{exp_loss, margin_loss, reconstruction_loss, semi_supervised_loss, siamese_loss, ExpNormalization};
use super::triplets::{curriculum_schedule, TripletSampler};
use super::ChartError;
use crate::nn::{chain, Adam, AdamConfig, Mlp, MlpGrads, Mode, DEFAULT_BN_MOMENTUM, DEFAULT_HIDDEN};
use crate::preprocess::FeatureSet;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    #[default]
    Margin,
    Exp,
    SemiMargin,
}

/// Threshold interpolated linearly from `start` (first epoch) to `end` (last epoch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub start: f64,
    pub end: f64,
}

impl Schedule {
    pub fn constant(v: f64) -> Self {
        Self { start: v, end: v }
    }
}

/// Position-labeled samples for semi-supervised training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnchorSpec {
    /// Known positions, spread regularly over the trace.
    pub count: usize,
    /// Samples within this many seconds of a known position share its label.
    pub window: f64,
    /// Share of each batch's anchors drawn from the labeled set.
    pub fraction: f64,
}

impl Default for AnchorSpec {
    fn default() -> Self {
        Self { count: 0, window: 0.5, fraction: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub margin: f64,
    pub epochs: usize,
    pub batches_per_epoch: usize,
    /// Triplets per batch; also pairs per batch (Siamese) and rows per batch (autoencoder).
    pub triplets_per_batch: usize,
    /// Close-sample bound T_c in seconds.
    pub t_close: Schedule,
    /// Far-sample bound T_f in seconds; `None` means unbounded.
    pub t_far: Option<Schedule>,
    pub alpha: f64,
    pub anchors: AnchorSpec,
    pub latent_dim: usize,
    /// `[2, latent_dim]` map from latent to position; defaults to the first two coordinates.
    pub projection: Option<Vec<Vec<f64>>>,
    pub hidden: Vec<usize>,
    pub adam: AdamConfig,
    pub bn_momentum: f64,
    pub exp_normalization: ExpNormalization,
    pub embed_chunk: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Margin,
            margin: 1.0,
            epochs: 100,
            batches_per_epoch: 1000,
            triplets_per_batch: 2000,
            t_close: Schedule::constant(0.2),
            t_far: Some(Schedule::constant(2400.0)),
            alpha: 0.0,
            anchors: AnchorSpec::default(),
            latent_dim: 2,
            projection: None,
            hidden: DEFAULT_HIDDEN.to_vec(),
            adam: AdamConfig::default(),
            bn_momentum: DEFAULT_BN_MOMENTUM,
            exp_normalization: ExpNormalization::ScaledLogSum,
            embed_chunk: 4096,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ChartError> {
        let bad = |m: String| Err(ChartError::InvalidConfig(m));
        if !(self.margin >= 0.0) {
            return bad(format!("margin must be nonnegative, got {}", self.margin));
        }
        if !(self.alpha >= 0.0) {
            return bad(format!("alpha must be nonnegative, got {}", self.alpha));
        }
        if self.epochs == 0 || self.batches_per_epoch == 0 || self.triplets_per_batch < 2 {
            return bad("epochs and batches must be positive, batches need at least 2 rows".into());
        }
        if self.latent_dim == 0 || self.hidden.contains(&0) {
            return bad("layer widths must be positive".into());
        }
        if self.embed_chunk == 0 {
            return bad("embed_chunk must be positive".into());
        }
        if self.loss == LossKind::SemiMargin {
            if self.latent_dim < 2 && self.projection.is_none() {
                return bad("semi-supervised training with the default projection needs latent_dim >= 2".into());
            }
            if self.alpha > 0.0 && self.anchors.count == 0 {
                return bad("alpha > 0 needs anchors.count > 0".into());
            }
            if !(self.anchors.window >= 0.0) || !(0.0..=1.0).contains(&self.anchors.fraction) {
                return bad("anchor window must be >= 0 and fraction in [0, 1]".into());
            }
        }
        self.projection_matrix().map(|_| ())
    }

    pub fn projection_matrix(&self) -> Result<Array2<f64>, ChartError> {
        let d = self.latent_dim;
        match &self.projection {
            None => Ok(Array2::from_shape_fn((2, d), |(a, k)| if a == k { 1.0 } else { 0.0 })),
            Some(rows) => {
                if rows.len() != 2 || rows.iter().any(|r| r.len() != d) {
                    return Err(ChartError::InvalidConfig(format!("projection must be 2 x {d}")));
                }
                Ok(Array2::from_shape_fn((2, d), |(a, k)| rows[a][k]))
            }
        }
    }

    /// Per-epoch `(T_c, T_f)`.
    pub fn thresholds(&self) -> Result<Vec<(f64, f64)>, ChartError> {
        let far = self.t_far.unwrap_or(Schedule::constant(f64::INFINITY));
        curriculum_schedule((self.t_close.start, far.start), (self.t_close.end, far.end), self.epochs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub t_close: f64,
    pub t_far: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedChart<T> {
    pub model: Mlp<T>,
    pub embedding: ChartEmbedding,
    pub history: Vec<EpochStats>,
    /// Labeled rows and their positions (semi-supervised runs only).
    pub labeled: Vec<(usize, [f64; 2])>,
}

#[derive(Debug, Clone)]
pub struct TrainedAutoencoder<T> {
    pub encoder: Mlp<T>,
    pub decoder: Mlp<T>,
    pub embedding: ChartEmbedding,
    pub history: Vec<EpochStats>,
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn check_features<T: Scalar>(features: &FeatureSet<T>) -> Result<(), ChartError> {
    if features.is_empty() {
        return Err(ChartError::InvalidConfig("empty feature set".into()));
    }
    if let Some(bad) = features.features.iter().position(|v| !v.is_finite()) {
        return Err(ChartError::NonFinite(format!("feature entry {bad}")));
    }
    Ok(())
}

fn finite_loss(value: f64, epoch: usize) -> Result<f64, ChartError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(ChartError::NonFinite(format!("loss became {value} in epoch {epoch}")))
    }
}

fn apply<T: Scalar>(model: &mut Mlp<T>, adam: &mut Adam<T>, grads: &MlpGrads<T>) -> Result<(), ChartError> {
    adam.step(&mut model.params_mut(), &grads.slices())?;
    model.steps += 1;
    Ok(())
}

/// Labeled anchor centers at regular time spacing, each labeling every row within `window` seconds.
pub fn labeled_rows(timestamps: &[f64], positions: &[[f64; 2]], spec: &AnchorSpec) -> Vec<(usize, [f64; 2])> {
    let n = timestamps.len();
    if spec.count == 0 || n == 0 {
        return Vec::new();
    }
    let (t0, t1) = (timestamps[0], timestamps[n - 1]);
    let mut out = Vec::new();
    for a in 0..spec.count {
        let target = t0 + (a as f64 + 0.5) * (t1 - t0) / spec.count as f64;
        let c = timestamps.partition_point(|&t| t < target).min(n - 1);
        let c = if c > 0 && (timestamps[c - 1] - target).abs() <= (timestamps[c] - target).abs() { c - 1 } else { c };
        let tc = timestamps[c];
        let lo = timestamps.partition_point(|&t| t < tc - spec.window);
        let hi = timestamps.partition_point(|&t| t <= tc + spec.window);
        out.extend((lo..hi).map(|r| (r, positions[c])));
    }
    out.sort_by_key(|&(r, _)| r);
    out.dedup_by_key(|&mut (r, _)| r);
    out
}

fn new_embedding<T: Scalar>(features: &FeatureSet<T>, coords: Array2<T>, method: &str, seed: u64) -> ChartEmbedding {
    let mut provenance = std::collections::BTreeMap::new();
    provenance.insert("method".to_string(), method.to_string());
    provenance.insert("seed".to_string(), seed.to_string());
    ChartEmbedding {
        coords: coords.mapv(|v| v.wide()),
        indices: features.source_indices.clone(),
        timestamps: features.timestamps.clone(),
        positions: features.positions.clone(),
        provenance,
    }
}

/// Eval-mode embedding of every feature row.
pub fn embed<T: Scalar>(model: &Mlp<T>, features: &FeatureSet<T>, chunk: usize) -> Result<ChartEmbedding, ChartError> {
    let coords = model.predict_chunked(&features.features.view(), chunk)?;
    let out = new_embedding(features, coords, "embed", 0);
    if !out.is_finite() {
        return Err(ChartError::NonFinite("embedding has non-finite coordinates".into()));
    }
    Ok(out)
}

/// Trains the triplet network and embeds the whole feature set.
pub fn train_chart<T: Scalar>(features: &FeatureSet<T>, config: &TrainConfig) -> Result<TrainedChart<T>, ChartError> {
    config.validate()?;
    check_features(features)?;
    let thresholds = config.thresholds()?;
    let ts = &features.timestamps;
    let b = config.triplets_per_batch;
    let widths = chain(features.dim(), &config.hidden, config.latent_dim);
    let mut model = Mlp::<T>::new(&widths, config.bn_momentum, config.seed)?;
    let mut adam = Adam::new(config.adam);

    let semi = config.loss == LossKind::SemiMargin;
    let labeled = if semi { labeled_rows(ts, &features.positions, &config.anchors) } else { Vec::new() };
    let pool: Vec<usize> = labeled.iter().map(|&(r, _)| r).collect();
    let projection = config.projection_matrix()?;
    let forced = if semi && config.alpha > 0.0 { ((config.anchors.fraction * b as f64).ceil() as usize).max(1) } else { 0 };

    let mut history = Vec::with_capacity(config.epochs);
    for (epoch, &(t_close, t_far)) in thresholds.iter().enumerate() {
        let sampler = TripletSampler::new(ts, t_close, t_far)?;
        let mut rng = epoch_rng(config.seed, epoch);
        let mut total = 0.0;
        for _ in 0..config.batches_per_epoch {
            let batch = sampler.draw_with_anchors(b, &pool, forced, &mut rng);
            debug_assert_eq!(batch.audit(ts), Ok(()));
            let rows: Vec<usize> = batch.anchors.iter().chain(&batch.close).chain(&batch.far).copied().collect();
            let x = features.features.select(Axis(0), &rows);
            let (y, cache) = model.forward(&x.view())?;
            let (ya, yc, yf) = (y.slice(s![..b, ..]), y.slice(s![b..2 * b, ..]), y.slice(s![2 * b.., ..]));
            let mut grad = Array2::zeros(y.raw_dim());
            let value = match config.loss {
                LossKind::Margin => {
                    let l = margin_loss(&ya, &yc, &yf, config.margin);
                    stack_grads(&mut grad, b, &l.grad_anchor, &l.grad_close, &l.grad_far);
                    l.value
                }
                LossKind::Exp => {
                    let l = exp_loss(&ya, &yc, &yf, config.exp_normalization);
                    stack_grads(&mut grad, b, &l.grad_anchor, &l.grad_close, &l.grad_far);
                    l.value
                }
                LossKind::SemiMargin => {
                    let n_lab = if pool.is_empty() { 0 } else { forced.min(b) };
                    let lab = ya.slice(s![..n_lab, ..]);
                    let pos = Array2::from_shape_fn((n_lab, 2), |(r, k)| {
                        let row = batch.anchors[r];
                        labeled[pool.binary_search(&row).expect("forced anchors come from the pool")].1[k]
                    });
                    let l = semi_supervised_loss(&ya, &yc, &yf, &lab, &pos.view(), &projection.view(), config.alpha, config.margin)?;
                    stack_grads(&mut grad, b, &l.triplet.grad_anchor, &l.triplet.grad_close, &l.triplet.grad_far);
                    let mut head = grad.slice_mut(s![..n_lab, ..]);
                    head += &l.grad_labeled;
                    l.value
                }
            };
            total += finite_loss(value, epoch)?;
            let grads = model.backward(&cache, &grad.view(), false)?;
            apply(&mut model, &mut adam, &grads)?;
        }
        history.push(EpochStats { epoch, mean_loss: total / config.batches_per_epoch as f64, t_close, t_far });
    }

    model.recalibrate(&features.features.view())?;
    model.mode = Mode::Eval;
    let coords = model.predict_chunked(&features.features.view(), config.embed_chunk)?;
    let method = match config.loss {
        LossKind::Margin => "triplet-margin",
        LossKind::Exp => "triplet-exp",
        LossKind::SemiMargin => "triplet-semi",
    };
    let embedding = new_embedding(features, coords, method, config.seed);
    if !embedding.is_finite() {
        return Err(ChartError::NonFinite("embedding has non-finite coordinates".into()));
    }
    Ok(TrainedChart { model, embedding, history, labeled })
}

fn stack_grads<T: Scalar>(grad: &mut Array2<T>, b: usize, ga: &Array2<T>, gc: &Array2<T>, gf: &Array2<T>) {
    grad.slice_mut(s![..b, ..]).assign(ga);
    grad.slice_mut(s![b..2 * b, ..]).assign(gc);
    grad.slice_mut(s![2 * b.., ..]).assign(gf);
}

/// Siamese network on uniformly drawn pairs of distinct rows.
pub fn train_siamese<T: Scalar>(features: &FeatureSet<T>, config: &TrainConfig) -> Result<TrainedChart<T>, ChartError> {
    config.validate()?;
    check_features(features)?;
    let n = features.len();
    if n < 2 {
        return Err(ChartError::InvalidConfig("Siamese training needs at least 2 rows".into()));
    }
    let b = config.triplets_per_batch;
    let widths = chain(features.dim(), &config.hidden, config.latent_dim);
    let mut model = Mlp::<T>::new(&widths, config.bn_momentum, config.seed)?;
    let mut adam = Adam::new(config.adam);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = epoch_rng(config.seed, epoch);
        let mut total = 0.0;
        for _ in 0..config.batches_per_epoch {
            let mut rows = Vec::with_capacity(2 * b);
            let mut second = Vec::with_capacity(b);
            for _ in 0..b {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                rows.push(i);
                second.push(j);
            }
            rows.extend(second);
            let x = features.features.select(Axis(0), &rows);
            let (y, cache) = model.forward(&x.view())?;
            let l = siamese_loss(&x.slice(s![..b, ..]), &x.slice(s![b.., ..]), &y.slice(s![..b, ..]), &y.slice(s![b.., ..]));
            total += finite_loss(l.value, epoch)?;
            let mut grad = Array2::zeros(y.raw_dim());
            grad.slice_mut(s![..b, ..]).assign(&l.grad_first);
            grad.slice_mut(s![b.., ..]).assign(&l.grad_second);
            let grads = model.backward(&cache, &grad.view(), false)?;
            apply(&mut model, &mut adam, &grads)?;
        }
        history.push(EpochStats { epoch, mean_loss: total / config.batches_per_epoch as f64, t_close: f64::NAN, t_far: f64::NAN });
    }
    model.recalibrate(&features.features.view())?;
    model.mode = Mode::Eval;
    let coords = model.predict_chunked(&features.features.view(), config.embed_chunk)?;
    let embedding = new_embedding(features, coords, "siamese", config.seed);
    if !embedding.is_finite() {
        return Err(ChartError::NonFinite("embedding has non-finite coordinates".into()));
    }
    Ok(TrainedChart { model, embedding, history, labeled: Vec::new() })
}

/// Mirrored encoder/decoder pair trained on reconstruction error.
pub fn train_autoencoder<T: Scalar>(features: &FeatureSet<T>, config: &TrainConfig) -> Result<TrainedAutoencoder<T>, ChartError> {
    config.validate()?;
    check_features(features)?;
    let n = features.len();
    let b = config.triplets_per_batch.min(n);
    if b < 2 {
        return Err(ChartError::InvalidConfig("autoencoder training needs at least 2 rows".into()));
    }
    let enc_widths = chain(features.dim(), &config.hidden, config.latent_dim);
    let mut dec_hidden = config.hidden.clone();
    dec_hidden.reverse();
    let dec_widths = chain(config.latent_dim, &dec_hidden, features.dim());
    let mut encoder = Mlp::<T>::new(&enc_widths, config.bn_momentum, config.seed)?;
    let mut decoder = Mlp::<T>::new(&dec_widths, config.bn_momentum, config.seed ^ 0xdec0_de00)?;
    let mut adam_enc = Adam::new(config.adam);
    let mut adam_dec = Adam::new(config.adam);
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut rng = epoch_rng(config.seed, epoch);
        let mut total = 0.0;
        for _ in 0..config.batches_per_epoch {
            let rows: Vec<usize> = (0..b).map(|_| rng.random_range(0..n)).collect();
            let x = features.features.select(Axis(0), &rows);
            let (z, enc_cache) = encoder.forward(&x.view())?;
            let (x_hat, dec_cache) = decoder.forward(&z.view())?;
            let (value, grad) = reconstruction_loss(&x.view(), &x_hat.view());
            total += finite_loss(value, epoch)?;
            let dec_grads = decoder.backward(&dec_cache, &grad.view(), true)?;
            let dz = dec_grads.input.clone().expect("input gradient requested");
            let enc_grads = encoder.backward(&enc_cache, &dz.view(), false)?;
            apply(&mut decoder, &mut adam_dec, &dec_grads)?;
            apply(&mut encoder, &mut adam_enc, &enc_grads)?;
        }
        history.push(EpochStats { epoch, mean_loss: total / config.batches_per_epoch as f64, t_close: f64::NAN, t_far: f64::NAN });
    }
    encoder.recalibrate(&features.features.view())?;
    encoder.mode = Mode::Eval;
    decoder.recalibrate(&encoder.predict(&features.features.view())?.view())?;
    decoder.mode = Mode::Eval;
    let coords = encoder.predict_chunked(&features.features.view(), config.embed_chunk)?;
    let embedding = new_embedding(features, coords, "autoencoder", config.seed);
    if !embedding.is_finite() {
        return Err(ChartError::NonFinite("embedding has non-finite coordinates".into()));
    }
    Ok(TrainedAutoencoder { encoder, decoder, embedding, history })
}

/// Mean reconstruction error of `decoder(encoder(x))` in eval mode.
pub fn reconstruction_error<T: Scalar>(encoder: &Mlp<T>, decoder: &Mlp<T>, x: &ArrayView2<T>) -> Result<f64, ChartError> {
    let z = encoder.predict(x)?;
    let x_hat = decoder.predict(&z.view())?;
    Ok(reconstruction_loss(x, &x_hat.view()).0)
}
