//! Triplet-margin fine-tuning with cosine distance, and checkpoint weight
//! deltas.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::dataset::Triplet;
use crate::encoder::{cosine_distance, dot, EncoderError, EncoderParams, Embedding, Forward, TENSOR_NAMES};
use crate::tokenizer::{TokenId, TokenizerModel};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid train config: {0}")]
    BadConfig(String),
    #[error("parameter shapes differ: {0}")]
    ShapeMismatch(String),
    #[error("triplet {index}: {source}")]
    Encoder {
        index: usize,
        #[source]
        source: EncoderError,
    },
}

pub type Result<T> = std::result::Result<T, TrainError>;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub margin_alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            margin_alpha: 0.2,
            learning_rate: 1e-3,
            epochs: 10,
            batch_size: 32,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.to_string()));
        if self.margin_alpha.is_nan() || self.margin_alpha < 0.0 {
            return bad("margin_alpha must be >= 0");
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return bad("learning_rate must be > 0");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("adam betas must be in [0,1)");
        }
        if self.adam_eps.is_nan() || self.adam_eps <= 0.0 {
            return bad("adam_eps must be > 0");
        }
        Ok(())
    }

    /// Applies one `key=value` override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse().map_err(|_| TrainError::BadConfig(format!("{key}: cannot parse {v:?}")))
        }
        match key {
            "margin_alpha" | "alpha" => self.margin_alpha = num(key, value)?,
            "learning_rate" | "lr" => self.learning_rate = num(key, value)?,
            "epochs" => self.epochs = num(key, value)?,
            "batch_size" => self.batch_size = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            "adam_beta1" => self.adam_beta1 = num(key, value)?,
            "adam_beta2" => self.adam_beta2 = num(key, value)?,
            "adam_eps" => self.adam_eps = num(key, value)?,
            _ => return Err(TrainError::BadConfig(format!("unknown key {key}"))),
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        format!(
            "margin_alpha={}\nlearning_rate={}\nepochs={}\nbatch_size={}\nseed={}\nadam_beta1={}\nadam_beta2={}\nadam_eps={}\n",
            self.margin_alpha,
            self.learning_rate,
            self.epochs,
            self.batch_size,
            self.seed,
            self.adam_beta1,
            self.adam_beta2,
            self.adam_eps
        )
    }
}

/// `max(0, d(a,p) - d(a,n) + alpha)` with cosine distance.
pub fn triplet_loss(ea: &Embedding, ep: &Embedding, en: &Embedding, alpha: f64) -> f64 {
    (cosine_distance(ea, ep) - cosine_distance(ea, en) + alpha).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedTriplet {
    pub anchor: Vec<TokenId>,
    pub positive: Vec<TokenId>,
    pub negative: Vec<TokenId>,
}

impl TokenizedTriplet {
    pub fn new(t: &Triplet, tok: &TokenizerModel) -> Self {
        TokenizedTriplet {
            anchor: tok.tokenize(&t.anchor),
            positive: tok.tokenize(&t.positive),
            negative: tok.tokenize(&t.negative),
        }
    }
}

pub fn tokenize_triplets(triplets: &[Triplet], tok: &TokenizerModel) -> Vec<TokenizedTriplet> {
    triplets.iter().map(|t| TokenizedTriplet::new(t, tok)).collect()
}

/// Backpropagates `upstream` (gradient w.r.t. the normalized output) through
/// one encoder pass, adding `scale`-weighted gradients into `grads`.
fn backprop(
    params: &EncoderParams,
    ids: &[TokenId],
    fwd: &Forward,
    upstream: &[f64],
    scale: f64,
    grads: &mut EncoderParams,
) {
    let d = params.dims.d;
    let h = params.dims.h;
    let e = &fwd.out;
    let proj = dot(e, upstream);
    let dv: Vec<f64> = e
        .iter()
        .zip(upstream)
        .map(|(ei, gi)| scale * (gi - ei * proj) / fwd.norm)
        .collect();

    for (g, x) in grads.b2.iter_mut().zip(&dv) {
        *g += x;
    }
    let mut dpre = vec![0.0; h];
    for j in 0..h {
        let row = &params.w2[j * d..(j + 1) * d];
        let grow = &mut grads.w2[j * d..(j + 1) * d];
        let uj = fwd.u[j];
        let mut du = 0.0;
        for k in 0..d {
            grow[k] += uj * dv[k];
            du += row[k] * dv[k];
        }
        dpre[j] = du * (1.0 - uj * uj);
    }
    for (g, x) in grads.b1.iter_mut().zip(&dpre) {
        *g += x;
    }
    let mut dz = dv;
    for i in 0..d {
        let row = &params.w1[i * h..(i + 1) * h];
        let grow = &mut grads.w1[i * h..(i + 1) * h];
        let zi = fwd.z[i];
        let mut acc = 0.0;
        for j in 0..h {
            grow[j] += zi * dpre[j];
            acc += row[j] * dpre[j];
        }
        dz[i] += acc;
    }
    let inv = 1.0 / ids.len() as f64;
    for &id in ids {
        let row = &mut grads.emb[id as usize * d..(id as usize + 1) * d];
        for (g, x) in row.iter_mut().zip(&dz) {
            *g += x * inv;
        }
    }
}

/// Adds `scale * dL/dθ` for one triplet into `grads` and returns the loss.
fn accumulate(
    params: &EncoderParams,
    t: &TokenizedTriplet,
    alpha: f64,
    scale: f64,
    grads: &mut EncoderParams,
) -> std::result::Result<f64, EncoderError> {
    let fa = params.forward(&t.anchor)?;
    let fp = params.forward(&t.positive)?;
    let fnn = params.forward(&t.negative)?;
    let (ea, ep, en) = (Embedding(fa.out.clone()), Embedding(fp.out.clone()), Embedding(fnn.out.clone()));
    let loss = triplet_loss(&ea, &ep, &en, alpha);
    if loss > 0.0 {
        // L = a·n - a·p + alpha
        let ga: Vec<f64> = en.0.iter().zip(&ep.0).map(|(n, p)| n - p).collect();
        let gp: Vec<f64> = ea.0.iter().map(|a| -a).collect();
        backprop(params, &t.anchor, &fa, &ga, scale, grads);
        backprop(params, &t.positive, &fp, &gp, scale, grads);
        backprop(params, &t.negative, &fnn, &ea.0, scale, grads);
    }
    Ok(loss)
}

/// Loss and full parameter gradient for a single triplet. Gradients are
/// exactly zero when the margin is satisfied.
pub fn loss_and_grad(
    params: &EncoderParams,
    t: &TokenizedTriplet,
    alpha: f64,
) -> std::result::Result<(f64, EncoderParams), EncoderError> {
    let mut grads = EncoderParams::zeros(params.dims);
    let loss = accumulate(params, t, alpha, 1.0, &mut grads)?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub active_fraction: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,mean_loss,active_fraction,train_acc\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{}\n", e.epoch, e.mean_loss, e.active_fraction, e.train_accuracy));
        }
        s
    }
}

struct Adam {
    m: EncoderParams,
    v: EncoderParams,
    step: i32,
}

impl Adam {
    fn new(like: &EncoderParams) -> Self {
        Adam { m: EncoderParams::zeros(like.dims), v: EncoderParams::zeros(like.dims), step: 0 }
    }

    fn update(&mut self, params: &mut EncoderParams, grads: &EncoderParams, cfg: &TrainConfig) {
        self.step += 1;
        let (b1, b2) = (cfg.adam_beta1, cfg.adam_beta2);
        let c1 = 1.0 - b1.powi(self.step);
        let c2 = 1.0 - b2.powi(self.step);
        let lr = cfg.learning_rate;
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + cfg.adam_eps);
            }
        }
    }
}

/// Fraction of triplets with `d(a,p) < d(a,n)`; ties are failures.
pub(crate) fn tokenized_accuracy(params: &EncoderParams, data: &[TokenizedTriplet]) -> Result<f64> {
    let mut hits = 0usize;
    for (index, t) in data.iter().enumerate() {
        let enc = |ids: &[TokenId]| params.embed(ids).map_err(|source| TrainError::Encoder { index, source });
        let (a, p, n) = (enc(&t.anchor)?, enc(&t.positive)?, enc(&t.negative)?);
        if cosine_distance(&a, &p) < cosine_distance(&a, &n) {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

pub fn train(
    params: &EncoderParams,
    dataset: &[Triplet],
    tok: &TokenizerModel,
    cfg: &TrainConfig,
) -> Result<(EncoderParams, TrainHistory)> {
    train_tokenized(params, &tokenize_triplets(dataset, tok), cfg)
}

/// Mini-batch Adam over all five tensors. Batches are drawn from a seeded
/// per-epoch shuffle; within a batch, gradients accumulate in ascending
/// dataset index order so results are bit-reproducible.
pub fn train_tokenized(
    params: &EncoderParams,
    data: &[TokenizedTriplet],
    cfg: &TrainConfig,
) -> Result<(EncoderParams, TrainHistory)> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut params = params.clone();
    let mut history = TrainHistory::default();
    let mut adam = Adam::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grads = EncoderParams::zeros(params.dims);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut active = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            let mut idx = batch.to_vec();
            idx.sort_unstable();
            grads.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            let scale = 1.0 / idx.len() as f64;
            for &i in &idx {
                let loss = accumulate(&params, &data[i], cfg.margin_alpha, scale, &mut grads)
                    .map_err(|source| TrainError::Encoder { index: i, source })?;
                loss_sum += loss;
                if loss > 0.0 {
                    active += 1;
                }
            }
            adam.update(&mut params, &grads, cfg);
        }
        let n = data.len() as f64;
        history.epochs.push(EpochStats {
            epoch: epoch + 1,
            mean_loss: loss_sum / n,
            active_fraction: active as f64 / n,
            train_accuracy: tokenized_accuracy(&params, data)?,
        });
    }
    Ok((params, history))
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightDelta {
    pub tensor_name: String,
    pub l2: f64,
}

/// Per-tensor `‖fine − base‖₂`, sorted descending, and their mean (summed in
/// the returned order).
pub fn weight_deltas(base: &EncoderParams, fine: &EncoderParams) -> Result<(Vec<WeightDelta>, f64)> {
    if base.dims != fine.dims {
        return Err(TrainError::ShapeMismatch(format!("{:?} vs {:?}", base.dims, fine.dims)));
    }
    let mut deltas: Vec<WeightDelta> = TENSOR_NAMES
        .iter()
        .zip(base.tensors().iter().zip(fine.tensors()))
        .map(|(name, (b, f))| WeightDelta {
            tensor_name: name.to_string(),
            l2: b.iter().zip(f.iter()).map(|(x, y)| (y - x) * (y - x)).sum::<f64>().sqrt(),
        })
        .collect();
    deltas.sort_by(|a, b| b.l2.total_cmp(&a.l2));
    let mean = deltas.iter().map(|d| d.l2).sum::<f64>() / deltas.len() as f64;
    Ok((deltas, mean))
}

pub fn weight_deltas_csv(deltas: &[WeightDelta], mean: f64) -> String {
    let mut s = String::from("tensor_name,l2\n");
    for d in deltas {
        s.push_str(&format!("{},{}\n", d.tensor_name, d.l2));
    }
    s.push_str(&format!("MEAN,{mean}\n"));
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_params, Dims};

    fn e(v: &[f64]) -> Embedding {
        Embedding(v.to_vec())
    }

    #[test]
    fn loss_examples() {
        assert_eq!(triplet_loss(&e(&[1., 0.]), &e(&[1., 0.]), &e(&[0., 1.]), 0.2), 0.0);
        assert!((triplet_loss(&e(&[1., 0.]), &e(&[0., 1.]), &e(&[1., 0.]), 0.2) - 1.2).abs() < 1e-12);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(triplet_loss(&e(&[1., 0.]), &e(&[s, s]), &e(&[s, s]), 0.37), 0.37);
    }

    #[test]
    fn flat_region_has_zero_gradient() {
        let mut p = init_params(Dims::new(6, 3, 4), 1).unwrap();
        // anchor and positive share the same row; negative is orthogonal
        p.emb.fill(0.0);
        p.emb[0] = 1.0; // id 0 -> e1
        p.emb[3 + 1] = 1.0; // id 1 -> e2
        let t = TokenizedTriplet { anchor: vec![0], positive: vec![0], negative: vec![1] };
        let (loss, g) = loss_and_grad(&p, &t, 0.2).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.tensors().iter().all(|t| t.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn loss_matches_forward_embeddings() {
        let p = init_params(Dims::new(10, 4, 3), 5).unwrap();
        let t = TokenizedTriplet { anchor: vec![1, 2], positive: vec![3], negative: vec![4, 5, 5] };
        let (loss, _) = loss_and_grad(&p, &t, 0.3).unwrap();
        let direct = triplet_loss(
            &p.embed(&t.anchor).unwrap(),
            &p.embed(&t.positive).unwrap(),
            &p.embed(&t.negative).unwrap(),
            0.3,
        );
        assert_eq!(loss, direct);
    }

    #[test]
    fn zero_epochs_is_identity() {
        let p = init_params(Dims::new(10, 4, 3), 5).unwrap();
        let data = vec![TokenizedTriplet { anchor: vec![1], positive: vec![2], negative: vec![3] }];
        let cfg = TrainConfig { epochs: 0, ..Default::default() };
        let (out, hist) = train_tokenized(&p, &data, &cfg).unwrap();
        assert_eq!(out, p);
        assert!(hist.epochs.is_empty());
    }

    #[test]
    fn empty_dataset_rejected() {
        let p = init_params(Dims::new(10, 4, 3), 5).unwrap();
        assert!(matches!(
            train_tokenized(&p, &[], &TrainConfig::default()),
            Err(TrainError::EmptyDataset)
        ));
    }

    #[test]
    fn config_overrides() {
        let mut c = TrainConfig::default();
        c.set("lr", "0.05").unwrap();
        c.set("epochs", "7").unwrap();
        assert_eq!(c.learning_rate, 0.05);
        assert_eq!(c.epochs, 7);
        assert!(c.set("bogus", "1").is_err());
        assert!(c.set("epochs", "x").is_err());
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn delta_examples() {
        let dims = Dims::new(3, 2, 2);
        let base = EncoderParams::zeros(dims);
        let (d0, m0) = weight_deltas(&base, &base).unwrap();
        assert!(d0.iter().all(|d| d.l2 == 0.0));
        assert_eq!(m0, 0.0);

        let mut fine = base.clone();
        fine.emb[0] = 3.0;
        fine.emb[1] = 4.0;
        let (d, m) = weight_deltas(&base, &fine).unwrap();
        assert_eq!(d[0].tensor_name, "emb");
        assert_eq!(d[0].l2, 5.0);
        assert_eq!(m, 1.0);
        let csv = weight_deltas_csv(&d, m);
        assert!(csv.starts_with("tensor_name,l2\nemb,5\n"));
        assert!(csv.ends_with("MEAN,1\n"));

        let other = EncoderParams::zeros(Dims::new(4, 2, 2));
        assert!(matches!(weight_deltas(&base, &other), Err(TrainError::ShapeMismatch(_))));
    }
}
