use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::params::*;
use super::tensor::{
    cross_entropy, gelu, gelu_grad, gemm, layer_norm, layer_norm_backward, linear, linear_backward, softmax_rows,
    NormCache,
};
use super::{Batch, Model, ModelError, Params, Targets, Tensor};

const MASK_BIAS: f64 = -1e9;

/// Softmax weights of one head for one sequence of a batch. `matrix[i][j]`
/// is how much query position `i` draws from key position `j`; padded keys
/// get exactly zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionRecord {
    pub sequence: usize,
    pub layer: usize,
    pub head: usize,
    pub matrix: Vec<Vec<f64>>,
}

struct LayerCache {
    input: Vec<f64>,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    probs: Vec<f64>,
    probs_mask: Option<Vec<f64>>,
    ctx: Vec<f64>,
    attn_mask: Option<Vec<f64>>,
    ln1: NormCache,
    h1: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
    ffn_mask: Option<Vec<f64>>,
    ln2: NormCache,
}

struct Forward {
    hidden: Vec<f64>,
    emb_norm: NormCache,
    emb_mask: Option<Vec<f64>>,
    layers: Vec<LayerCache>,
}

fn dropout_mask(n: usize, p: f64, rng: Option<&mut ChaCha8Rng>) -> Option<Vec<f64>> {
    let rng = rng?;
    if p == 0.0 {
        return None;
    }
    let keep = 1.0 / (1.0 - p);
    Some((0..n).map(|_| if rng.random::<f64>() < p { 0.0 } else { keep }).collect())
}

fn apply_mask(x: &mut [f64], mask: &Option<Vec<f64>>) {
    if let Some(m) = mask {
        x.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
    }
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

/// Copies the `dh` columns of head `h` for the `l` rows of sequence `s`.
fn gather_head(x: &[f64], s: usize, h: usize, l: usize, d: usize, dh: usize, out: &mut [f64]) {
    for i in 0..l {
        let src = (s * l + i) * d + h * dh;
        out[i * dh..(i + 1) * dh].copy_from_slice(&x[src..src + dh]);
    }
}

fn scatter_head(x: &mut [f64], s: usize, h: usize, l: usize, d: usize, dh: usize, src: &[f64]) {
    for i in 0..l {
        let dst = (s * l + i) * d + h * dh;
        x[dst..dst + dh].copy_from_slice(&src[i * dh..(i + 1) * dh]);
    }
}

impl Model {
    fn check_batch(&self, batch: &Batch) -> Result<(), ModelError> {
        let n = batch.size * batch.len;
        if batch.size == 0 || batch.len == 0 {
            return Err(ModelError::ShapeMismatch("empty batch".into()));
        }
        if batch.ids.len() != n || batch.mask.len() != n {
            return Err(ModelError::ShapeMismatch(format!(
                "expected {n} ids and mask entries, found {} and {}",
                batch.ids.len(),
                batch.mask.len()
            )));
        }
        if batch.len > self.config.max_positions {
            return Err(ModelError::ShapeMismatch(format!(
                "sequence length {} exceeds {} positions",
                batch.len, self.config.max_positions
            )));
        }
        if let Some(&bad) = batch.ids.iter().find(|&&i| i as usize >= self.config.vocab_size) {
            return Err(ModelError::ShapeMismatch(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    /// Which key positions may be attended to. A row with no real token
    /// falls back to its first position.
    fn key_mask(batch: &Batch) -> Vec<bool> {
        let mut ok: Vec<bool> = batch.mask.iter().map(|&m| m == 1).collect();
        for row in ok.chunks_exact_mut(batch.len) {
            if !row.iter().any(|&x| x) {
                row[0] = true;
            }
        }
        ok
    }

    fn run(
        &self,
        batch: &Batch,
        mut rng: Option<&mut ChaCha8Rng>,
        mut capture: Option<&mut Vec<AttentionRecord>>,
    ) -> Result<Forward, ModelError> {
        self.check_batch(batch)?;
        let cfg = &self.config;
        let p = &self.params;
        let (b, l, d) = (batch.size, batch.len, cfg.d_model);
        let (nh, dh) = (cfg.n_heads, cfg.head_dim());
        let n = b * l;
        let key_ok = Model::key_mask(batch);
        let scale = 1.0 / (dh as f64).sqrt();

        let tok = &p.at(EMBED).data;
        let pos = &p.at(POSITION).data;
        let mut x0 = vec![0.0; n * d];
        for (row, &id) in batch.ids.iter().enumerate() {
            let t = id as usize * d;
            let q = (row % l) * d;
            for j in 0..d {
                x0[row * d + j] = tok[t + j] + pos[q + j];
            }
        }
        let (mut h, emb_norm) = layer_norm(&x0, d, p.at(EMBED_LN_G), p.at(EMBED_LN_B), cfg.layer_norm_eps);
        let emb_mask = dropout_mask(n * d, cfg.dropout, rng.as_deref_mut());
        apply_mask(&mut h, &emb_mask);

        let mut layers = Vec::with_capacity(cfg.n_layers);
        let mut qh = vec![0.0; l * dh];
        let mut kh = vec![0.0; l * dh];
        let mut vh = vec![0.0; l * dh];
        let mut ch = vec![0.0; l * dh];
        for layer in 0..cfg.n_layers {
            let w = |which| p.layer(layer, which);
            let q = linear(&h, n, w(WQ), w(BQ));
            let k = linear(&h, n, w(WK), w(BK));
            let v = linear(&h, n, w(WV), w(BV));
            let mut probs = vec![0.0; b * nh * l * l];
            let probs_mask = dropout_mask(probs.len(), cfg.dropout, rng.as_deref_mut());
            let mut ctx = vec![0.0; n * d];
            for s in 0..b {
                for hh in 0..nh {
                    gather_head(&q, s, hh, l, d, dh, &mut qh);
                    gather_head(&k, s, hh, l, d, dh, &mut kh);
                    gather_head(&v, s, hh, l, d, dh, &mut vh);
                    let off = (s * nh + hh) * l * l;
                    let scores = &mut probs[off..off + l * l];
                    gemm(false, true, l, l, dh, scale, &qh, &kh, 0.0, scores);
                    for row in scores.chunks_exact_mut(l) {
                        for (j, x) in row.iter_mut().enumerate() {
                            if !key_ok[s * l + j] {
                                *x += MASK_BIAS;
                            }
                        }
                    }
                    softmax_rows(scores, l);
                    if let Some(records) = capture.as_deref_mut() {
                        records.push(AttentionRecord {
                            sequence: s,
                            layer,
                            head: hh,
                            matrix: scores.chunks_exact(l).map(<[f64]>::to_vec).collect(),
                        });
                    }
                    match &probs_mask {
                        Some(m) => {
                            let dropped: Vec<f64> =
                                scores.iter().zip(&m[off..off + l * l]).map(|(a, b)| a * b).collect();
                            gemm(false, false, l, dh, l, 1.0, &dropped, &vh, 0.0, &mut ch);
                        }
                        None => gemm(false, false, l, dh, l, 1.0, scores, &vh, 0.0, &mut ch),
                    }
                    scatter_head(&mut ctx, s, hh, l, d, dh, &ch);
                }
            }
            let mut attn = linear(&ctx, n, w(WO), w(BO));
            let attn_mask = dropout_mask(n * d, cfg.dropout, rng.as_deref_mut());
            apply_mask(&mut attn, &attn_mask);
            add_into(&mut attn, &h);
            let (h1, ln1) = layer_norm(&attn, d, w(LN1_G), w(LN1_B), cfg.layer_norm_eps);
            let pre = linear(&h1, n, w(W1), w(B1));
            let act: Vec<f64> = pre.iter().map(|&x| gelu(x)).collect();
            let mut ffn = linear(&act, n, w(W2), w(B2));
            let ffn_mask = dropout_mask(n * d, cfg.dropout, rng.as_deref_mut());
            apply_mask(&mut ffn, &ffn_mask);
            add_into(&mut ffn, &h1);
            let (h2, ln2) = layer_norm(&ffn, d, w(LN2_G), w(LN2_B), cfg.layer_norm_eps);
            layers.push(LayerCache {
                input: std::mem::replace(&mut h, h2),
                q,
                k,
                v,
                probs,
                probs_mask,
                ctx,
                attn_mask,
                ln1,
                h1,
                pre,
                act,
                ffn_mask,
                ln2,
            });
        }
        Ok(Forward {
            hidden: h,
            emb_norm,
            emb_mask,
            layers,
        })
    }

    fn backward(&self, batch: &Batch, fwd: &Forward, mut dh: Vec<f64>, grads: &mut Params) {
        let cfg = &self.config;
        let p = &self.params;
        let (b, l, d) = (batch.size, batch.len, cfg.d_model);
        let (nh, dh_) = (cfg.n_heads, cfg.head_dim());
        let n = b * l;
        let scale = 1.0 / (dh_ as f64).sqrt();
        let mut qh = vec![0.0; l * dh_];
        let mut kh = vec![0.0; l * dh_];
        let mut vh = vec![0.0; l * dh_];
        let mut dch = vec![0.0; l * dh_];
        let mut dqh = vec![0.0; l * dh_];
        let mut dkh = vec![0.0; l * dh_];
        let mut dvh = vec![0.0; l * dh_];
        let mut pd = vec![0.0; l * l];
        let mut dp = vec![0.0; l * l];

        for layer in (0..cfg.n_layers).rev() {
            let c = &fwd.layers[layer];
            let w = |which| p.layer(layer, which);
            let idx = |which| p.layer_index(layer, which);

            let (dg, db) = grads.pair_mut(idx(LN2_G));
            let ds2 = layer_norm_backward(&dh, d, &c.ln2, w(LN2_G), dg, db);
            let mut dh1 = ds2.clone();
            let mut dffn = ds2;
            apply_mask(&mut dffn, &c.ffn_mask);
            let (dw, db) = grads.pair_mut(idx(W2));
            let mut dpre = linear_backward(&c.act, n, w(W2), &dffn, dw, db);
            dpre.iter_mut().zip(&c.pre).for_each(|(g, &x)| *g *= gelu_grad(x));
            let (dw, db) = grads.pair_mut(idx(W1));
            add_into(&mut dh1, &linear_backward(&c.h1, n, w(W1), &dpre, dw, db));

            let (dg, db) = grads.pair_mut(idx(LN1_G));
            let ds1 = layer_norm_backward(&dh1, d, &c.ln1, w(LN1_G), dg, db);
            let mut dinput = ds1.clone();
            let mut dattn = ds1;
            apply_mask(&mut dattn, &c.attn_mask);
            let (dw, db) = grads.pair_mut(idx(WO));
            let dctx = linear_backward(&c.ctx, n, w(WO), &dattn, dw, db);

            let mut dq = vec![0.0; n * d];
            let mut dk = vec![0.0; n * d];
            let mut dv = vec![0.0; n * d];
            for s in 0..b {
                for hh in 0..nh {
                    gather_head(&c.q, s, hh, l, d, dh_, &mut qh);
                    gather_head(&c.k, s, hh, l, d, dh_, &mut kh);
                    gather_head(&c.v, s, hh, l, d, dh_, &mut vh);
                    gather_head(&dctx, s, hh, l, d, dh_, &mut dch);
                    let off = (s * nh + hh) * l * l;
                    let probs = &c.probs[off..off + l * l];
                    let pmask = c.probs_mask.as_ref().map(|m| &m[off..off + l * l]);
                    match pmask {
                        Some(m) => pd.iter_mut().zip(probs.iter().zip(m)).for_each(|(o, (a, b))| *o = a * b),
                        None => pd.copy_from_slice(probs),
                    }
                    gemm(false, true, l, l, dh_, 1.0, &dch, &vh, 0.0, &mut dp);
                    gemm(true, false, l, dh_, l, 1.0, &pd, &dch, 0.0, &mut dvh);
                    if let Some(m) = pmask {
                        dp.iter_mut().zip(m).for_each(|(g, b)| *g *= b);
                    }
                    for (dpr, pr) in dp.chunks_exact_mut(l).zip(probs.chunks_exact(l)) {
                        let dot: f64 = dpr.iter().zip(pr).map(|(a, b)| a * b).sum();
                        dpr.iter_mut().zip(pr).for_each(|(g, &pv)| *g = pv * (*g - dot));
                    }
                    gemm(false, false, l, dh_, l, scale, &dp, &kh, 0.0, &mut dqh);
                    gemm(true, false, l, dh_, l, scale, &dp, &qh, 0.0, &mut dkh);
                    scatter_head(&mut dq, s, hh, l, d, dh_, &dqh);
                    scatter_head(&mut dk, s, hh, l, d, dh_, &dkh);
                    scatter_head(&mut dv, s, hh, l, d, dh_, &dvh);
                }
            }
            for (wi, dy) in [(WQ, &dq), (WK, &dk), (WV, &dv)] {
                let (dw, db) = grads.pair_mut(idx(wi));
                add_into(&mut dinput, &linear_backward(&c.input, n, w(wi), dy, dw, db));
            }
            dh = dinput;
        }

        apply_mask(&mut dh, &fwd.emb_mask);
        let (dg, db) = grads.pair_mut(EMBED_LN_G);
        let dx0 = layer_norm_backward(&dh, d, &fwd.emb_norm, p.at(EMBED_LN_G), dg, db);
        let (dtok, dpos) = grads.pair_mut(EMBED);
        for (row, &id) in batch.ids.iter().enumerate() {
            let t = id as usize * d;
            let q = (row % l) * d;
            for j in 0..d {
                let g = dx0[row * d + j];
                dtok.data[t + j] += g;
                dpos.data[q + j] += g;
            }
        }
    }

    /// MLM loss over labelled positions. With `grads`, accumulates head
    /// gradients and returns the gradient with respect to the hidden states.
    fn mlm_loss(
        &self,
        hidden: &[f64],
        labels: &[Option<u32>],
        grads: Option<&mut Params>,
    ) -> Result<(f64, Option<Vec<f64>>), ModelError> {
        let d = self.config.d_model;
        let v = self.config.vocab_size;
        if labels.len() * d != hidden.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "{} labels for {} positions",
                labels.len(),
                hidden.len() / d
            )));
        }
        let rows: Vec<usize> = labels.iter().enumerate().filter_map(|(i, l)| l.map(|_| i)).collect();
        if rows.is_empty() {
            return Err(ModelError::AllPositionsIgnored);
        }
        let mut targets = Vec::with_capacity(rows.len());
        for &r in &rows {
            let t = labels[r].expect("selected") as usize;
            if t >= v {
                return Err(ModelError::ShapeMismatch(format!("label {t} outside vocabulary of {v}")));
            }
            targets.push(t);
        }
        let m = rows.len();
        let mut hsel = Vec::with_capacity(m * d);
        for &r in &rows {
            hsel.extend_from_slice(&hidden[r * d..(r + 1) * d]);
        }
        let p = &self.params;
        let t1 = linear(&hsel, m, p.mlm(MLM_DENSE_W), p.mlm(MLM_DENSE_B));
        let t2: Vec<f64> = t1.iter().map(|&x| gelu(x)).collect();
        let (t3, norm) = layer_norm(&t2, d, p.mlm(MLM_LN_G), p.mlm(MLM_LN_B), self.config.layer_norm_eps);
        let logits = linear(&t3, m, p.mlm(MLM_DECODER_W), p.mlm(MLM_DECODER_B));
        let (loss, dlogits) = cross_entropy(&logits, v, &targets);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteValue("loss".into()));
        }
        let Some(grads) = grads else {
            return Ok((loss, None));
        };
        let (dw, db) = grads.pair_mut(p.mlm_index(MLM_DECODER_W));
        let dt3 = linear_backward(&t3, m, p.mlm(MLM_DECODER_W), &dlogits, dw, db);
        let (dg, db) = grads.pair_mut(p.mlm_index(MLM_LN_G));
        let mut dt1 = layer_norm_backward(&dt3, d, &norm, p.mlm(MLM_LN_G), dg, db);
        dt1.iter_mut().zip(&t1).for_each(|(g, &x)| *g *= gelu_grad(x));
        let (dw, db) = grads.pair_mut(p.mlm_index(MLM_DENSE_W));
        let dsel = linear_backward(&hsel, m, p.mlm(MLM_DENSE_W), &dt1, dw, db);
        let mut dh = vec![0.0; hidden.len()];
        for (k, &r) in rows.iter().enumerate() {
            dh[r * d..(r + 1) * d].copy_from_slice(&dsel[k * d..(k + 1) * d]);
        }
        Ok((loss, Some(dh)))
    }

    fn bos_rows(&self, hidden: &[f64], batch: &Batch) -> Vec<f64> {
        let d = self.config.d_model;
        (0..batch.size)
            .flat_map(|s| hidden[s * batch.len * d..(s * batch.len + 1) * d].iter().copied())
            .collect()
    }

    fn classify_loss(
        &self,
        hidden: &[f64],
        batch: &Batch,
        labels: &[bool],
        grads: Option<&mut Params>,
    ) -> Result<(f64, Option<Vec<f64>>), ModelError> {
        if labels.len() != batch.size {
            return Err(ModelError::ShapeMismatch(format!(
                "{} labels for {} sequences",
                labels.len(),
                batch.size
            )));
        }
        let d = self.config.d_model;
        let p = &self.params;
        let pooled = self.bos_rows(hidden, batch);
        let logits = linear(&pooled, batch.size, p.cls(CLS_W), p.cls(CLS_B));
        let targets: Vec<usize> = labels.iter().map(|&y| usize::from(y)).collect();
        let (loss, dlogits) = cross_entropy(&logits, 2, &targets);
        if !loss.is_finite() {
            return Err(ModelError::NonFiniteValue("loss".into()));
        }
        let Some(grads) = grads else {
            return Ok((loss, None));
        };
        let (dw, db) = grads.pair_mut(p.cls_index(CLS_W));
        let dpooled = linear_backward(&pooled, batch.size, p.cls(CLS_W), &dlogits, dw, db);
        let mut dh = vec![0.0; hidden.len()];
        for s in 0..batch.size {
            let r = s * batch.len;
            dh[r * d..(r + 1) * d].copy_from_slice(&dpooled[s * d..(s + 1) * d]);
        }
        Ok((loss, Some(dh)))
    }

    /// Final hidden states, `size × len × d_model`.
    pub fn encode(&self, batch: &Batch) -> Result<Tensor, ModelError> {
        let f = self.run(batch, None, None)?;
        Ok(Tensor::from_vec(&[batch.size, batch.len, self.config.d_model], f.hidden))
    }

    /// MLM logits at every position, `size × len × vocab_size`.
    pub fn forward_mlm(&self, batch: &Batch) -> Result<Tensor, ModelError> {
        let f = self.run(batch, None, None)?;
        let p = &self.params;
        let n = batch.size * batch.len;
        let t1 = linear(&f.hidden, n, p.mlm(MLM_DENSE_W), p.mlm(MLM_DENSE_B));
        let t2: Vec<f64> = t1.into_iter().map(gelu).collect();
        let (t3, _) = layer_norm(
            &t2,
            self.config.d_model,
            p.mlm(MLM_LN_G),
            p.mlm(MLM_LN_B),
            self.config.layer_norm_eps,
        );
        let logits = linear(&t3, n, p.mlm(MLM_DECODER_W), p.mlm(MLM_DECODER_B));
        Ok(Tensor::from_vec(&[batch.size, batch.len, self.config.vocab_size], logits))
    }

    /// Two-class logits from the first position of each sequence.
    pub fn forward_classify(&self, batch: &Batch) -> Result<Tensor, ModelError> {
        let f = self.run(batch, None, None)?;
        let pooled = self.bos_rows(&f.hidden, batch);
        let p = &self.params;
        let logits = linear(&pooled, batch.size, p.cls(CLS_W), p.cls(CLS_B));
        Ok(Tensor::from_vec(&[batch.size, 2], logits))
    }

    /// Probability of the positive class for each sequence.
    pub fn predict_positive(&self, batch: &Batch) -> Result<Vec<f64>, ModelError> {
        let logits = self.forward_classify(batch)?;
        Ok(logits
            .data
            .chunks_exact(2)
            .map(|z| 1.0 / (1.0 + (z[0] - z[1]).exp()))
            .collect())
    }

    /// Attention weights of every layer and head for every sequence, in
    /// sequence, layer, head order.
    pub fn attention(&self, batch: &Batch) -> Result<Vec<AttentionRecord>, ModelError> {
        let mut records = Vec::new();
        self.run(batch, None, Some(&mut records))?;
        records.sort_by_key(|r| (r.sequence, r.layer, r.head));
        Ok(records)
    }

    /// Mean loss without dropout.
    pub fn loss(&self, batch: &Batch, targets: &Targets) -> Result<f64, ModelError> {
        let f = self.run(batch, None, None)?;
        let (loss, _) = match targets {
            Targets::Mlm(labels) => self.mlm_loss(&f.hidden, labels, None)?,
            Targets::Classify(labels) => self.classify_loss(&f.hidden, batch, labels, None)?,
        };
        Ok(loss)
    }

    /// Mean loss and its gradient for every parameter. Dropout is active
    /// exactly when `rng` is given.
    pub fn loss_and_grads(
        &self,
        batch: &Batch,
        targets: &Targets,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Params), ModelError> {
        let f = self.run(batch, rng, None)?;
        let mut grads = Params::zeros(&self.config);
        let (loss, dh) = match targets {
            Targets::Mlm(labels) => self.mlm_loss(&f.hidden, labels, Some(&mut grads))?,
            Targets::Classify(labels) => self.classify_loss(&f.hidden, batch, labels, Some(&mut grads))?,
        };
        self.backward(batch, &f, dh.expect("gradient requested"), &mut grads);
        if let Some(name) = grads.first_non_finite() {
            return Err(ModelError::NonFiniteValue(format!("gradient of {name}")));
        }
        Ok((loss, grads))
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;

    use super::*;
    use crate::model::ModelConfig;

    fn tiny_model(seed: u64, std: f64) -> Model {
        let mut cfg = ModelConfig::tiny(11);
        cfg.init_std = std;
        Model::new(cfg, seed).unwrap()
    }

    fn batch() -> Batch {
        Batch::from_rows(
            &[vec![2, 5, 7, 9, 3, 0], vec![2, 6, 4, 3, 0, 0]],
            &[vec![1, 1, 1, 1, 1, 0], vec![1, 1, 1, 1, 0, 0]],
        )
        .unwrap()
    }

    #[test]
    fn output_shapes() {
        let m = tiny_model(0, 0.02);
        let b = batch();
        assert_eq!(m.encode(&b).unwrap().shape, [2, 6, 8]);
        assert_eq!(m.forward_mlm(&b).unwrap().shape, [2, 6, 11]);
        assert_eq!(m.forward_classify(&b).unwrap().shape, [2, 2]);
        let att = m.attention(&b).unwrap();
        assert_eq!(att.len(), 2 * 2 * 2);
        assert_eq!(att[0].matrix.len(), 6);
    }

    #[test]
    fn rejects_bad_batches() {
        let m = tiny_model(0, 0.02);
        let too_long = Batch::from_rows(&[vec![2; 17]], &[vec![1; 17]]).unwrap();
        assert!(matches!(m.encode(&too_long), Err(ModelError::ShapeMismatch(_))));
        let oov = Batch::from_rows(&[vec![2, 11]], &[vec![1, 1]]).unwrap();
        assert!(matches!(m.encode(&oov), Err(ModelError::ShapeMismatch(_))));
        let none = Targets::Mlm(vec![None; 12]);
        assert!(matches!(m.loss(&batch(), &none), Err(ModelError::AllPositionsIgnored)));
    }

    #[test]
    fn attention_rows_are_distributions_over_real_keys() {
        let m = tiny_model(4, 0.5);
        let b = batch();
        for r in m.attention(&b).unwrap() {
            let real = b.real_len(r.sequence);
            for row in &r.matrix {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                assert!(row[real..].iter().all(|&x| x == 0.0));
            }
        }
    }

    #[test]
    fn all_pad_row_attends_to_first_position() {
        let m = tiny_model(4, 0.5);
        let b = Batch::from_rows(&[vec![0, 0, 0]], &[vec![0, 0, 0]]).unwrap();
        for r in m.attention(&b).unwrap() {
            for row in &r.matrix {
                assert_eq!(row, &[1.0, 0.0, 0.0]);
            }
        }
        assert!(m.encode(&b).unwrap().is_finite());
    }

    #[test]
    fn padding_does_not_change_real_outputs() {
        let m = tiny_model(9, 0.5);
        let short = Batch::from_rows(&[vec![2, 5, 8, 3]], &[vec![1, 1, 1, 1]]).unwrap();
        let long = Batch::from_rows(&[vec![2, 5, 8, 3, 0, 0, 0]], &[vec![1, 1, 1, 1, 0, 0, 0]]).unwrap();
        let a = m.encode(&short).unwrap();
        let b = m.encode(&long).unwrap();
        for (x, y) in a.data.iter().zip(&b.data[..a.len()]) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_head_weights_give_uniform_loss() {
        let mut m = tiny_model(0, 0.02);
        for name in ["mlm.decoder.weight", "mlm.decoder.bias"] {
            m.params.get_mut(name).unwrap().data.fill(0.0);
        }
        let labels = Targets::Mlm(vec![None, Some(5), None, Some(9), None, None, None, Some(6), None, None, None, None]);
        assert!((m.loss(&batch(), &labels).unwrap() - 11f64.ln()).abs() < 1e-12);
        m.zero_classifier();
        let cls = Targets::Classify(vec![true, false]);
        assert!((m.loss(&batch(), &cls).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    /// Straight-line single-layer forward for one sequence, written without
    /// any of the batched helpers.
    fn reference_hidden(m: &Model, ids: &[u32]) -> Vec<Vec<f64>> {
        let cfg = &m.config;
        let p = &m.params;
        let d = cfg.d_model;
        let dh = cfg.head_dim();
        let get = |name: &str| p.get(name).unwrap().clone();
        let norm = |x: &[f64], g: &Tensor, b: &Tensor| -> Vec<f64> {
            let mu = x.iter().sum::<f64>() / x.len() as f64;
            let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / x.len() as f64;
            x.iter()
                .enumerate()
                .map(|(j, v)| (v - mu) / (var + cfg.layer_norm_eps).sqrt() * g.data[j] + b.data[j])
                .collect()
        };
        let affine = |x: &[f64], w: &Tensor, b: &Tensor| -> Vec<f64> {
            (0..w.shape[1])
                .map(|o| b.data[o] + (0..w.shape[0]).map(|i| x[i] * w.at(&[i, o])).sum::<f64>())
                .collect()
        };
        let tok = get("embed.token");
        let pos = get("embed.position");
        let mut h: Vec<Vec<f64>> = ids
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let x: Vec<f64> = (0..d).map(|j| tok.at(&[t as usize, j]) + pos.at(&[i, j])).collect();
                norm(&x, &get("embed.norm.gamma"), &get("embed.norm.beta"))
            })
            .collect();
        let pre = "layer0.";
        let g = |s: &str| get(&format!("{pre}{s}"));
        let q: Vec<Vec<f64>> = h.iter().map(|x| affine(x, &g("attn.q.weight"), &g("attn.q.bias"))).collect();
        let k: Vec<Vec<f64>> = h.iter().map(|x| affine(x, &g("attn.k.weight"), &g("attn.k.bias"))).collect();
        let v: Vec<Vec<f64>> = h.iter().map(|x| affine(x, &g("attn.v.weight"), &g("attn.v.bias"))).collect();
        let n = ids.len();
        let mut ctx = vec![vec![0.0; d]; n];
        for head in 0..cfg.n_heads {
            let cols = head * dh..(head + 1) * dh;
            for i in 0..n {
                let s: Vec<f64> = (0..n)
                    .map(|j| cols.clone().map(|c| q[i][c] * k[j][c]).sum::<f64>() / (dh as f64).sqrt())
                    .collect();
                let mx = s.iter().cloned().fold(f64::MIN, f64::max);
                let e: Vec<f64> = s.iter().map(|x| (x - mx).exp()).collect();
                let z: f64 = e.iter().sum();
                for c in cols.clone() {
                    ctx[i][c] = (0..n).map(|j| e[j] / z * v[j][c]).sum();
                }
            }
        }
        for i in 0..n {
            let a = affine(&ctx[i], &g("attn.out.weight"), &g("attn.out.bias"));
            let s1: Vec<f64> = a.iter().zip(&h[i]).map(|(x, y)| x + y).collect();
            let h1 = norm(&s1, &g("attn.norm.gamma"), &g("attn.norm.beta"));
            let f: Vec<f64> = affine(&h1, &g("ffn.in.weight"), &g("ffn.in.bias")).into_iter().map(gelu).collect();
            let f = affine(&f, &g("ffn.out.weight"), &g("ffn.out.bias"));
            let s2: Vec<f64> = f.iter().zip(&h1).map(|(x, y)| x + y).collect();
            h[i] = norm(&s2, &g("ffn.norm.gamma"), &g("ffn.norm.beta"));
        }
        h
    }

    #[test]
    fn matches_straight_line_reference() {
        let mut cfg = ModelConfig::tiny(11);
        cfg.n_layers = 1;
        cfg.init_std = 0.4;
        let m = Model::new(cfg, 21).unwrap();
        let ids = [2u32, 7, 3];
        let want = reference_hidden(&m, &ids);
        let got = m.encode(&Batch::from_rows(&[ids.to_vec()], &[vec![1; 3]]).unwrap()).unwrap();
        for (i, row) in want.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                assert!((got.at(&[0, i, j]) - x).abs() < 1e-10);
            }
        }
    }

    fn check_gradients(m: &mut Model, b: &Batch, targets: &Targets) {
        let (_, grads) = m.loss_and_grads(b, targets, None).unwrap();
        let h = 1e-5;
        let mut worst: f64 = 0.0;
        for t in 0..m.params.len() {
            let len = m.params.at(t).len();
            // Probe a spread of entries in every tensor.
            let step = (len / 7).max(1);
            for i in (0..len).step_by(step) {
                let orig = m.params.at(t).data[i];
                m.params.at_mut(t).data[i] = orig + h;
                let up = m.loss(b, targets).unwrap();
                m.params.at_mut(t).data[i] = orig - h;
                let down = m.loss(b, targets).unwrap();
                m.params.at_mut(t).data[i] = orig;
                let fd = (up - down) / (2.0 * h);
                let an = grads.at(t).data[i];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                worst = worst.max(err);
                assert!(err <= 1e-5, "{} [{i}]: analytic {an} numeric {fd}", m.params.names()[t]);
            }
        }
        assert!(worst.is_finite());
    }

    #[test]
    fn mlm_gradients_match_finite_differences() {
        let mut m = tiny_model(3, 0.3);
        let labels = Targets::Mlm(vec![None, Some(5), Some(7), None, None, None, None, Some(6), Some(4), None, None, None]);
        check_gradients(&mut m, &batch(), &labels);
    }

    #[test]
    fn classifier_gradients_match_finite_differences() {
        let mut m = tiny_model(5, 0.3);
        check_gradients(&mut m, &batch(), &Targets::Classify(vec![true, false]));
    }

    #[test]
    fn unreachable_parameters_get_exactly_zero_gradient() {
        let m = tiny_model(2, 0.3);
        let (_, g) = m.loss_and_grads(&batch(), &Targets::Classify(vec![true, false]), None).unwrap();
        for (name, t) in g.names().iter().zip(g.tensors()) {
            if name.starts_with("mlm.") {
                assert!(t.data.iter().all(|&x| x == 0.0), "{name}");
            }
        }
        // Token 10 never appears in the batch.
        assert!(g.get("embed.token").unwrap().data[10 * 8..].iter().all(|&x| x == 0.0));
        let labels = Targets::Mlm(vec![Some(5); 12]);
        let (_, g) = m.loss_and_grads(&batch(), &labels, None).unwrap();
        assert!(g.get("classifier.weight").unwrap().data.iter().all(|&x| x == 0.0));
        assert!(g.get("classifier.bias").unwrap().data.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn zero_classifier_gives_equal_logits() {
        let mut m = tiny_model(8, 0.5);
        m.zero_classifier();
        let logits = m.forward_classify(&batch()).unwrap();
        for row in logits.data.chunks_exact(2) {
            assert_eq!(row[0], row[1]);
        }
        for p in m.predict_positive(&batch()).unwrap() {
            assert_eq!(p, 0.5);
        }
    }

    #[test]
    fn dropout_is_seeded_and_off_at_inference() {
        let mut cfg = ModelConfig::tiny(11);
        cfg.dropout = 0.3;
        let m = Model::new(cfg, 1).unwrap();
        let t = Targets::Classify(vec![true, false]);
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            m.loss_and_grads(&batch(), &t, Some(&mut rng)).unwrap().0
        };
        assert_eq!(run(1), run(1));
        assert_ne!(run(1), run(2));
        assert_eq!(m.loss(&batch(), &t).unwrap(), m.loss_and_grads(&batch(), &t, None).unwrap().0);
    }
}
