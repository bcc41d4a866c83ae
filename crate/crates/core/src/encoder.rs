//! Object-centric token-fusion frame encoder.
//!
//! Each frame becomes one global token plus one token per detected region.
//! Region tokens get a learned spatial embedding of `(x1, y1, x2, y2, conf)`,
//! every token gets a learned identity embedding, a post-norm transformer
//! encoder mixes the token set, and the mean output token is projected to the
//! final embedding. There are no positional encodings, so the output does not
//! depend on region order.
//!
//! All tokens of a video are stacked into one matrix; row-wise layers run on
//! the whole stack and attention runs per frame block, so frames never mix.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{self, LayerNormCache};
use crate::params::{glorot_uniform, scaled_uniform, BlockId, ParamStore};
use crate::tensor::Tensor2;

/// Number of identity codes: global, left hand, right hand, object.
pub const NUM_IDENTITIES: usize = 4;
/// Width of the spatial descriptor `(x1, y1, x2, y2, confidence)`.
pub const SPATIAL_DIM: usize = 5;

const EMBED_INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Identity {
    Global = 0,
    LeftHand = 1,
    RightHand = 2,
    Object = 3,
}

impl Identity {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Identity::Global),
            1 => Ok(Identity::LeftHand),
            2 => Ok(Identity::RightHand),
            3 => Ok(Identity::Object),
            _ => Err(Error::Config(format!("identity code {code} out of range"))),
        }
    }
}

/// One detected hand or object region of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionToken {
    /// Normalized `(x1, y1, x2, y2)`.
    pub bbox: [f64; 4],
    pub confidence: f64,
    pub feature: Vec<f64>,
    pub identity: Identity,
}

impl RegionToken {
    fn spatial(&self) -> [f64; SPATIAL_DIM] {
        let [x1, y1, x2, y2] = self.bbox;
        [x1, y1, x2, y2, self.confidence]
    }
}

/// Precomputed inputs for one frame: a global feature and its regions.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub global: Vec<f64>,
    pub regions: Vec<RegionToken>,
}

impl FrameFeatures {
    pub fn global_only(global: Vec<f64>) -> Self {
        Self {
            global,
            regions: Vec::new(),
        }
    }

    /// Mean region confidence, 0 without regions.
    pub fn mean_confidence(&self) -> f64 {
        if self.regions.is_empty() {
            return 0.0;
        }
        self.regions.iter().map(|r| r.confidence).sum::<f64>() / self.regions.len() as f64
    }

    pub fn validate(&self, max_regions: usize) -> Result<()> {
        if self.regions.len() > max_regions {
            return Err(Error::Config(format!(
                "{} regions exceed the limit of {max_regions}",
                self.regions.len()
            )));
        }
        if !self.global.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite global feature".into()));
        }
        for (k, r) in self.regions.iter().enumerate() {
            let [x1, y1, x2, y2] = r.bbox;
            if !(x1 <= x2 && y1 <= y2) {
                return Err(Error::Config(format!("region {k} has an inverted box")));
            }
            if !(0.0..=1.0).contains(&r.confidence) {
                return Err(Error::Config(format!(
                    "region {k} confidence {} outside [0, 1]",
                    r.confidence
                )));
            }
            if !r.feature.iter().chain(&r.bbox).all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("region {k} has non-finite values")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderConfig {
    pub global_dim: usize,
    pub region_dim: usize,
    pub hidden_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub max_regions: usize,
    pub embed_dim: usize,
    /// Ignore region tokens entirely (global-token-only ablation).
    pub global_only: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            global_dim: 16,
            region_dim: 8,
            hidden_dim: 32,
            layers: 1,
            heads: 2,
            max_regions: 4,
            embed_dim: 128,
            global_only: false,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("global_dim", self.global_dim),
            ("region_dim", self.region_dim),
            ("hidden_dim", self.hidden_dim),
            ("layers", self.layers),
            ("heads", self.heads),
            ("embed_dim", self.embed_dim),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden_dim {} is not divisible by heads {}",
                self.hidden_dim, self.heads
            )));
        }
        Ok(())
    }

    fn head_dim(&self) -> usize {
        self.hidden_dim / self.heads
    }
}

#[derive(Debug, Clone)]
struct LayerIds {
    wq: BlockId,
    bq: BlockId,
    wk: BlockId,
    wv: BlockId,
    bv: BlockId,
    wo: BlockId,
    bo: BlockId,
    ln1_g: BlockId,
    ln1_b: BlockId,
    w1: BlockId,
    b1: BlockId,
    w2: BlockId,
    b2: BlockId,
    ln2_g: BlockId,
    ln2_b: BlockId,
}

#[derive(Debug, Clone)]
struct Layout {
    project_g_w: BlockId,
    project_g_b: BlockId,
    project_l_w: BlockId,
    project_l_b: BlockId,
    spatial_w: BlockId,
    identity: BlockId,
    layers: Vec<LayerIds>,
    head_w: BlockId,
    head_b: BlockId,
}

/// Encoder weights plus their gradient buffers.
#[derive(Debug, Clone)]
pub struct Encoder {
    cfg: EncoderConfig,
    pub params: ParamStore,
    ids: Layout,
}

impl Encoder {
    /// Fresh encoder with weights drawn from a generator seeded by `seed`.
    pub fn new(cfg: EncoderConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = ParamStore::new();
        let dh = cfg.hidden_dim;
        let ff = 4 * dh;
        let bias = |n: usize| Tensor2::zeros(1, n);

        let project_g_w = p.register("project_g.w", glorot_uniform(cfg.global_dim, dh, &mut rng))?;
        let project_g_b = p.register("project_g.b", bias(dh))?;
        let project_l_w = p.register("project_l.w", glorot_uniform(cfg.region_dim, dh, &mut rng))?;
        let project_l_b = p.register("project_l.b", bias(dh))?;
        let spatial_w = p.register(
            "spatial.w",
            scaled_uniform(SPATIAL_DIM, dh, EMBED_INIT_STD, &mut rng),
        )?;
        let identity = p.register(
            "identity",
            scaled_uniform(NUM_IDENTITIES, dh, EMBED_INIT_STD, &mut rng),
        )?;
        let mut layers = Vec::with_capacity(cfg.layers);
        for l in 0..cfg.layers {
            let name = |s: &str| format!("layer{l}.{s}");
            layers.push(LayerIds {
                wq: p.register(name("attn.wq"), glorot_uniform(dh, dh, &mut rng))?,
                bq: p.register(name("attn.bq"), bias(dh))?,
                wk: p.register(name("attn.wk"), glorot_uniform(dh, dh, &mut rng))?,
                wv: p.register(name("attn.wv"), glorot_uniform(dh, dh, &mut rng))?,
                bv: p.register(name("attn.bv"), bias(dh))?,
                wo: p.register(name("attn.wo"), glorot_uniform(dh, dh, &mut rng))?,
                bo: p.register(name("attn.bo"), bias(dh))?,
                ln1_g: p.register(name("ln1.gamma"), Tensor2::filled(1, dh, 1.0))?,
                ln1_b: p.register(name("ln1.beta"), bias(dh))?,
                w1: p.register(name("ffn.w1"), glorot_uniform(dh, ff, &mut rng))?,
                b1: p.register(name("ffn.b1"), bias(ff))?,
                w2: p.register(name("ffn.w2"), glorot_uniform(ff, dh, &mut rng))?,
                b2: p.register(name("ffn.b2"), bias(dh))?,
                ln2_g: p.register(name("ln2.gamma"), Tensor2::filled(1, dh, 1.0))?,
                ln2_b: p.register(name("ln2.beta"), bias(dh))?,
            });
        }
        let head_w = p.register("head.w", glorot_uniform(dh, cfg.embed_dim, &mut rng))?;
        let head_b = p.register("head.b", bias(cfg.embed_dim))?;
        Ok(Self {
            cfg,
            params: p,
            ids: Layout {
                project_g_w,
                project_g_b,
                project_l_w,
                project_l_b,
                spatial_w,
                identity,
                layers,
                head_w,
                head_b,
            },
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    pub fn num_params(&self) -> usize {
        self.params.num_params()
    }

    fn check_frame(&self, f: &FrameFeatures) -> Result<()> {
        if f.global.len() != self.cfg.global_dim {
            return Err(Error::dim(format!(
                "global feature has {} values, encoder expects {}",
                f.global.len(),
                self.cfg.global_dim
            )));
        }
        if self.cfg.global_only {
            return Ok(());
        }
        if f.regions.len() > self.cfg.max_regions {
            return Err(Error::dim(format!(
                "{} regions exceed the encoder limit of {}",
                f.regions.len(),
                self.cfg.max_regions
            )));
        }
        for r in &f.regions {
            if r.feature.len() != self.cfg.region_dim {
                return Err(Error::dim(format!(
                    "region feature has {} values, encoder expects {}",
                    r.feature.len(),
                    self.cfg.region_dim
                )));
            }
        }
        Ok(())
    }

    pub fn encode_frame(&self, frame: &FrameFeatures) -> Result<Vec<f64>> {
        let out = self.encode_video(std::slice::from_ref(frame))?;
        Ok(out.into_vec())
    }

    /// `T×embed_dim` embeddings, one row per frame.
    pub fn encode_video(&self, frames: &[FrameFeatures]) -> Result<Tensor2> {
        Ok(self.forward(frames)?.0)
    }

    /// Accumulates `∂L/∂θ` into `self.params` given `upstream = ∂L/∂X`.
    pub fn backward(&mut self, frames: &[FrameFeatures], upstream: &Tensor2) -> Result<()> {
        let (_, cache) = self.forward(frames)?;
        self.backward_cached(&cache, upstream)
    }

    /// Forward pass that keeps the intermediates for [`Encoder::backward_cached`].
    pub fn forward(&self, frames: &[FrameFeatures]) -> Result<(Tensor2, VideoCache)> {
        if frames.is_empty() {
            return Err(Error::Degenerate("cannot encode an empty frame list".into()));
        }
        for f in frames {
            self.check_frame(f)?;
        }
        let p = &self.params;
        let ids = &self.ids;
        let dh = self.cfg.hidden_dim;

        let mut blocks = Vec::with_capacity(frames.len());
        let mut globals = Tensor2::zeros(frames.len(), self.cfg.global_dim);
        let mut region_feats = Vec::new();
        let mut region_spatial = Vec::new();
        let mut codes = Vec::new();
        let mut region_rows = Vec::new();
        let mut start = 0;
        for (t, f) in frames.iter().enumerate() {
            globals.row_mut(t).copy_from_slice(&f.global);
            codes.push(Identity::Global.code() as usize);
            let regions: &[RegionToken] = if self.cfg.global_only { &[] } else { &f.regions };
            for (k, r) in regions.iter().enumerate() {
                region_feats.extend_from_slice(&r.feature);
                region_spatial.extend_from_slice(&r.spatial());
                codes.push(r.identity.code() as usize);
                region_rows.push(start + 1 + k);
            }
            let n = 1 + regions.len();
            blocks.push((start, n));
            start += n;
        }
        let total_tokens = start;
        let n_regions = region_rows.len();
        let region_feats = Tensor2::from_vec(n_regions, self.cfg.region_dim, region_feats)?;
        let region_spatial = Tensor2::from_vec(n_regions, SPATIAL_DIM, region_spatial)?;

        let g_tok = nn::linear(&globals, p.value(ids.project_g_w), p.value(ids.project_g_b))?;
        let mut r_tok = nn::linear(&region_feats, p.value(ids.project_l_w), p.value(ids.project_l_b))?;
        r_tok.add_assign(&region_spatial.matmul(p.value(ids.spatial_w))?)?;

        let ident = p.value(ids.identity);
        let mut z = Tensor2::zeros(total_tokens, dh);
        for (t, &(s, _)) in blocks.iter().enumerate() {
            z.row_mut(s).copy_from_slice(g_tok.row(t));
        }
        for (k, &row) in region_rows.iter().enumerate() {
            z.row_mut(row).copy_from_slice(r_tok.row(k));
        }
        for (row, &code) in codes.iter().enumerate() {
            for (v, e) in z.row_mut(row).iter_mut().zip(ident.row(code)) {
                *v += e;
            }
        }

        let mut layer_caches = Vec::with_capacity(ids.layers.len());
        for lid in &ids.layers {
            let (out, cache) = self.layer_forward(lid, z, &blocks)?;
            layer_caches.push(cache);
            z = out;
        }

        let mut pooled = Tensor2::zeros(frames.len(), dh);
        for (t, &(s, n)) in blocks.iter().enumerate() {
            let inv = 1.0 / n as f64;
            let dst = pooled.row_mut(t);
            for r in s..s + n {
                for (d, v) in dst.iter_mut().zip(z.row(r)) {
                    *d += v;
                }
            }
            dst.iter_mut().for_each(|d| *d *= inv);
        }
        let out = nn::linear(&pooled, p.value(ids.head_w), p.value(ids.head_b))?;
        if !out.is_finite() {
            return Err(Error::Numeric("encoder produced non-finite embeddings".into()));
        }
        Ok((
            out,
            VideoCache {
                blocks,
                globals,
                region_feats,
                region_spatial,
                region_rows,
                codes,
                layers: layer_caches,
                pooled,
            },
        ))
    }

    fn layer_forward(
        &self,
        lid: &LayerIds,
        z: Tensor2,
        blocks: &[(usize, usize)],
    ) -> Result<(Tensor2, LayerCache)> {
        let p = &self.params;
        let q = nn::linear(&z, p.value(lid.wq), p.value(lid.bq))?;
        // no key bias: it shifts every score in a row equally and cancels in the softmax
        let k = z.matmul(p.value(lid.wk))?;
        let v = nn::linear(&z, p.value(lid.wv), p.value(lid.bv))?;

        let heads = self.cfg.heads;
        let dk = self.cfg.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        let mut concat = Tensor2::zeros(z.rows(), z.cols());
        let mut probs = Vec::with_capacity(blocks.len() * heads);
        for &(s, n) in blocks {
            for h in 0..heads {
                let c0 = h * dk;
                let mut att = Tensor2::zeros(n, n);
                for i in 0..n {
                    let qi = &q.row(s + i)[c0..c0 + dk];
                    for j in 0..n {
                        let kj = &k.row(s + j)[c0..c0 + dk];
                        att[(i, j)] = crate::tensor::dot(qi, kj) * scale;
                    }
                }
                let att = nn::softmax_rows(&att);
                for i in 0..n {
                    let dst = &mut concat.row_mut(s + i)[c0..c0 + dk];
                    for j in 0..n {
                        let w = att[(i, j)];
                        for (d, vv) in dst.iter_mut().zip(&v.row(s + j)[c0..c0 + dk]) {
                            *d += w * vv;
                        }
                    }
                }
                probs.push(att);
            }
        }
        let attn = nn::linear(&concat, p.value(lid.wo), p.value(lid.bo))?;
        let res1 = z.add(&attn)?;
        let (h1, ln1) = nn::layer_norm(&res1, p.value(lid.ln1_g), p.value(lid.ln1_b));
        let f_pre = nn::linear(&h1, p.value(lid.w1), p.value(lid.b1))?;
        let f_act = nn::relu(&f_pre);
        let f_out = nn::linear(&f_act, p.value(lid.w2), p.value(lid.b2))?;
        let res2 = h1.add(&f_out)?;
        let (out, ln2) = nn::layer_norm(&res2, p.value(lid.ln2_g), p.value(lid.ln2_b));
        Ok((
            out,
            LayerCache {
                z,
                q,
                k,
                v,
                probs,
                concat,
                ln1,
                h1,
                f_pre,
                f_act,
                ln2,
            },
        ))
    }

    /// Backward pass through a cached forward; gradients accumulate.
    pub fn backward_cached(&mut self, cache: &VideoCache, upstream: &Tensor2) -> Result<()> {
        let frames = cache.blocks.len();
        if upstream.shape() != (frames, self.cfg.embed_dim) {
            return Err(Error::dim(format!(
                "upstream gradient is {}x{}, expected {}x{}",
                upstream.rows(),
                upstream.cols(),
                frames,
                self.cfg.embed_dim
            )));
        }
        let ids = self.ids.clone();
        let head = nn::linear_backward(&cache.pooled, self.params.value(ids.head_w), upstream)?;
        self.params.accumulate(ids.head_w, &head.dw)?;
        self.params.accumulate(ids.head_b, &head.db)?;

        let total_tokens: usize = cache.blocks.iter().map(|b| b.1).sum();
        let mut dz = Tensor2::zeros(total_tokens, self.cfg.hidden_dim);
        for (t, &(s, n)) in cache.blocks.iter().enumerate() {
            let inv = 1.0 / n as f64;
            for r in s..s + n {
                for (d, g) in dz.row_mut(r).iter_mut().zip(head.dx.row(t)) {
                    *d = g * inv;
                }
            }
        }

        for (lid, lc) in ids.layers.iter().zip(&cache.layers).rev() {
            dz = self.layer_backward(lid, lc, &cache.blocks, &dz)?;
        }

        // token construction
        for (row, &code) in cache.codes.iter().enumerate() {
            self.params.accumulate_row(ids.identity, code, dz.row(row));
        }
        let d_global = dz.select_rows(&cache.blocks.iter().map(|b| b.0).collect::<Vec<_>>());
        let g = nn::linear_backward(&cache.globals, self.params.value(ids.project_g_w), &d_global)?;
        self.params.accumulate(ids.project_g_w, &g.dw)?;
        self.params.accumulate(ids.project_g_b, &g.db)?;
        if !cache.region_rows.is_empty() {
            let d_region = dz.select_rows(&cache.region_rows);
            let l = nn::linear_backward(&cache.region_feats, self.params.value(ids.project_l_w), &d_region)?;
            self.params.accumulate(ids.project_l_w, &l.dw)?;
            self.params.accumulate(ids.project_l_b, &l.db)?;
            self.params
                .accumulate(ids.spatial_w, &cache.region_spatial.t_matmul(&d_region)?)?;
        }
        Ok(())
    }

    fn layer_backward(
        &mut self,
        lid: &LayerIds,
        lc: &LayerCache,
        blocks: &[(usize, usize)],
        d_out: &Tensor2,
    ) -> Result<Tensor2> {
        let ln2 = nn::layer_norm_backward(&lc.ln2, self.params.value(lid.ln2_g), d_out);
        self.params.accumulate(lid.ln2_g, &ln2.dgamma)?;
        self.params.accumulate(lid.ln2_b, &ln2.dbeta)?;
        let d_res2 = ln2.dx;

        let ffn2 = nn::linear_backward(&lc.f_act, self.params.value(lid.w2), &d_res2)?;
        self.params.accumulate(lid.w2, &ffn2.dw)?;
        self.params.accumulate(lid.b2, &ffn2.db)?;
        let d_pre = nn::relu_backward(&lc.f_pre, &ffn2.dx);
        let ffn1 = nn::linear_backward(&lc.h1, self.params.value(lid.w1), &d_pre)?;
        self.params.accumulate(lid.w1, &ffn1.dw)?;
        self.params.accumulate(lid.b1, &ffn1.db)?;
        let mut d_h1 = d_res2;
        d_h1.add_assign(&ffn1.dx)?;

        let ln1 = nn::layer_norm_backward(&lc.ln1, self.params.value(lid.ln1_g), &d_h1);
        self.params.accumulate(lid.ln1_g, &ln1.dgamma)?;
        self.params.accumulate(lid.ln1_b, &ln1.dbeta)?;
        let d_res1 = ln1.dx;

        let wo = nn::linear_backward(&lc.concat, self.params.value(lid.wo), &d_res1)?;
        self.params.accumulate(lid.wo, &wo.dw)?;
        self.params.accumulate(lid.bo, &wo.db)?;
        let d_concat = wo.dx;

        let heads = self.cfg.heads;
        let dk = self.cfg.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        let (rows, cols) = lc.q.shape();
        let mut dq = Tensor2::zeros(rows, cols);
        let mut dk_t = Tensor2::zeros(rows, cols);
        let mut dv = Tensor2::zeros(rows, cols);
        for (b, &(s, n)) in blocks.iter().enumerate() {
            for h in 0..heads {
                let c0 = h * dk;
                let prob = &lc.probs[b * heads + h];
                // dP = dO · Vᵀ ; dV = Pᵀ · dO
                let mut d_prob = Tensor2::zeros(n, n);
                for i in 0..n {
                    let go = &d_concat.row(s + i)[c0..c0 + dk];
                    for j in 0..n {
                        d_prob[(i, j)] = crate::tensor::dot(go, &lc.v.row(s + j)[c0..c0 + dk]);
                        let w = prob[(i, j)];
                        for (d, g) in dv.row_mut(s + j)[c0..c0 + dk].iter_mut().zip(go) {
                            *d += w * g;
                        }
                    }
                }
                let d_att = nn::softmax_rows_backward(prob, &d_prob);
                for i in 0..n {
                    for j in 0..n {
                        let g = d_att[(i, j)] * scale;
                        if g == 0.0 {
                            continue;
                        }
                        for c in c0..c0 + dk {
                            dq[(s + i, c)] += g * lc.k[(s + j, c)];
                            dk_t[(s + j, c)] += g * lc.q[(s + i, c)];
                        }
                    }
                }
            }
        }

        let mut dz = d_res1;
        for (d, w, b) in [(&dq, lid.wq, Some(lid.bq)), (&dk_t, lid.wk, None), (&dv, lid.wv, Some(lid.bv))] {
            let g = nn::linear_backward(&lc.z, self.params.value(w), d)?;
            self.params.accumulate(w, &g.dw)?;
            if let Some(b) = b {
                self.params.accumulate(b, &g.db)?;
            }
            dz.add_assign(&g.dx)?;
        }
        Ok(dz)
    }
}

struct LayerCache {
    z: Tensor2,
    q: Tensor2,
    k: Tensor2,
    v: Tensor2,
    probs: Vec<Tensor2>,
    concat: Tensor2,
    ln1: LayerNormCache,
    h1: Tensor2,
    f_pre: Tensor2,
    f_act: Tensor2,
    ln2: LayerNormCache,
}

/// Intermediates of [`Encoder::forward`] over one video.
pub struct VideoCache {
    /// `(first token row, token count)` per frame.
    blocks: Vec<(usize, usize)>,
    globals: Tensor2,
    region_feats: Tensor2,
    region_spatial: Tensor2,
    region_rows: Vec<usize>,
    codes: Vec<usize>,
    layers: Vec<LayerCache>,
    pooled: Tensor2,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::backprop_check;
    use rand::Rng;

    fn tiny_cfg() -> EncoderConfig {
        EncoderConfig {
            global_dim: 6,
            region_dim: 4,
            hidden_dim: 8,
            layers: 1,
            heads: 2,
            max_regions: 4,
            embed_dim: 5,
            global_only: false,
        }
    }

    fn frame(rng: &mut ChaCha8Rng, cfg: &EncoderConfig, regions: usize) -> FrameFeatures {
        let ids = [Identity::LeftHand, Identity::RightHand, Identity::Object, Identity::Object];
        FrameFeatures {
            global: (0..cfg.global_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            regions: (0..regions)
                .map(|k| {
                    let x1: f64 = rng.random_range(0.0..0.5);
                    let y1: f64 = rng.random_range(0.0..0.5);
                    RegionToken {
                        bbox: [x1, y1, x1 + 0.3, y1 + 0.2],
                        confidence: rng.random_range(0.0..1.0),
                        feature: (0..cfg.region_dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
                        identity: ids[k % 4],
                    }
                })
                .collect(),
        }
    }

    // Perturbs norm gains away from 1 so the check exercises them.
    fn jitter(enc: &mut Encoder, rng: &mut ChaCha8Rng) {
        for b in enc.params.blocks_mut() {
            for v in b.value.data_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
        }
    }

    #[test]
    fn zero_regions_well_defined() {
        let cfg = tiny_cfg();
        let enc = Encoder::new(cfg.clone(), 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let out = enc.encode_frame(&frame(&mut rng, &cfg, 0)).unwrap();
        assert_eq!(out.len(), 5);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn region_order_does_not_matter() {
        let cfg = tiny_cfg();
        let enc = Encoder::new(cfg.clone(), 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = frame(&mut rng, &cfg, 4);
        let mut g = f.clone();
        g.regions.swap(2, 3);
        g.regions.swap(0, 3);
        let a = enc.encode_frame(&f).unwrap();
        let b = enc.encode_frame(&g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn deterministic() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let f = frame(&mut rng, &cfg, 3);
        let a = Encoder::new(cfg.clone(), 7).unwrap().encode_frame(&f).unwrap();
        let b = Encoder::new(cfg, 7).unwrap().encode_frame(&f).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn per_frame_locality() {
        let cfg = tiny_cfg();
        let enc = Encoder::new(cfg.clone(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let clip_a: Vec<_> = (0..3).map(|k| frame(&mut rng, &cfg, k)).collect();
        let clip_b: Vec<_> = (0..2).map(|k| frame(&mut rng, &cfg, k + 2)).collect();
        let ea = enc.encode_video(&clip_a).unwrap();
        let eb = enc.encode_video(&clip_b).unwrap();
        let both: Vec<_> = clip_a.iter().chain(&clip_b).cloned().collect();
        assert_eq!(enc.encode_video(&both).unwrap(), ea.concat_rows(&eb).unwrap());

        let mut edited = clip_a.clone();
        edited[1] = frame(&mut rng, &cfg, 4);
        let ee = enc.encode_video(&edited).unwrap();
        assert_eq!(ee.row(0), ea.row(0));
        assert_eq!(ee.row(2), ea.row(2));
        assert_ne!(ee.row(1), ea.row(1));
    }

    #[test]
    fn dimension_errors() {
        let cfg = tiny_cfg();
        let mut enc = Encoder::new(cfg.clone(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut f = frame(&mut rng, &cfg, 2);
        f.global.push(0.0);
        assert!(matches!(enc.encode_frame(&f), Err(Error::Dimension(_))));
        let f = frame(&mut rng, &cfg, 2);
        assert!(matches!(
            enc.backward(&[f], &Tensor2::zeros(2, 5)),
            Err(Error::Dimension(_))
        ));
        assert!(enc.encode_video(&[]).is_err());
    }

    #[test]
    fn zero_upstream_zero_gradients() {
        let cfg = tiny_cfg();
        let mut enc = Encoder::new(cfg.clone(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let frames: Vec<_> = (0..3).map(|k| frame(&mut rng, &cfg, k + 1)).collect();
        enc.backward(&frames, &Tensor2::zeros(3, 5)).unwrap();
        assert!(enc.params.flat_grads().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn head_gradient_is_outer_product() {
        let cfg = tiny_cfg();
        let mut enc = Encoder::new(cfg.clone(), 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let frames = vec![frame(&mut rng, &cfg, 2)];
        let up = Tensor2::from_rows(&[[0.5, -1.0, 0.25, 2.0, 0.0]]).unwrap();
        let (_, cache) = enc.forward(&frames).unwrap();
        let pooled = cache.pooled.clone();
        enc.backward_cached(&cache, &up).unwrap();
        let id = enc.params.id("head.w").unwrap();
        assert_eq!(enc.params.grad(id), &pooled.t_matmul(&up).unwrap());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = tiny_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut enc = Encoder::new(cfg.clone(), 5).unwrap();
        jitter(&mut enc, &mut rng);
        let frames: Vec<_> = (0..3).map(|k| frame(&mut rng, &cfg, [0, 2, 4][k])).collect();
        let probe: Vec<f64> = (0..3 * 5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probe = Tensor2::from_vec(3, 5, probe).unwrap();
        let cfg_frames = frames.clone();
        let mut store = enc.params.clone();
        let err = backprop_check(
            &mut store,
            |p| {
                enc.params = p.clone();
                enc.params.zero_grad();
                let (out, cache) = enc.forward(&cfg_frames)?;
                enc.backward_cached(&cache, &probe)?;
                for (dst, src) in p.blocks_mut().iter_mut().zip(enc.params.blocks()) {
                    dst.grad = src.grad.clone();
                }
                Ok(out.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum())
            },
            1e-5,
            usize::MAX,
            &mut rng,
        )
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn global_only_ignores_regions() {
        let cfg = EncoderConfig {
            global_only: true,
            ..tiny_cfg()
        };
        let enc = Encoder::new(cfg.clone(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = frame(&mut rng, &cfg, 3);
        let g = FrameFeatures::global_only(f.global.clone());
        assert_eq!(enc.encode_frame(&f).unwrap(), enc.encode_frame(&g).unwrap());
    }
}
