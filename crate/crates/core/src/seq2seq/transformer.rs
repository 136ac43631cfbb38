use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Error, Result};
use crate::tensor::{xavier_uniform, zeros_param, Bound, ParamMap, Rng64, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub dropout: f64,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            n_heads: 8,
            d_ff: 256,
            dropout: 0.05,
            encoder_layers: 2,
            decoder_layers: 2,
        }
    }
}

/// Fixed sinusoidal table `[w × d]`: `sin(pos / 10000^(2i/d))` on even
/// columns, the matching cosine on odd ones.
pub fn positional_encoding(w: usize, d: usize) -> Vec<f64> {
    let mut p = vec![0.0; w * d];
    for pos in 0..w {
        for i in 0..d {
            let pair = (i / 2 * 2) as f64;
            let angle = pos as f64 / 10000f64.powf(pair / d as f64);
            p[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    p
}

/// Lower-triangular `w × w` mask: query `i` sees keys `j <= i`.
pub fn causal_mask(w: usize) -> Vec<bool> {
    (0..w * w).map(|x| x % w <= x / w).collect()
}

/// Dropout settings for one forward pass.
pub struct Mode<'a> {
    pub training: bool,
    pub rng: &'a mut Rng64,
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} must be a positive multiple of n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_ff == 0 {
            return Err(Error::Config("d_ff must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} not in [0, 1)", self.dropout)));
        }
        Ok(())
    }

    pub fn d_k(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn init<R: Rng + ?Sized>(&self, rng: &mut R, params: &mut ParamMap) -> Result<()> {
        self.validate()?;
        let d = self.d_model;
        let mut linear = |params: &mut ParamMap, name: &str, fi: usize, fo: usize| {
            params.insert(format!("{name}.weight"), xavier_uniform(rng, &[fi, fo], fi, fo));
            params.insert(format!("{name}.bias"), zeros_param(&[fo]));
        };
        let norm = |params: &mut ParamMap, name: &str| {
            let gain = Tensor::param(&[d], vec![1.0; d]).expect("shape");
            params.insert(format!("{name}.gain"), gain);
            params.insert(format!("{name}.bias"), zeros_param(&[d]));
        };
        for l in 0..self.encoder_layers {
            for p in ["q", "k", "v", "o"] {
                linear(params, &format!("enc{l}.attn.{p}"), d, d);
            }
            linear(params, &format!("enc{l}.ff1"), d, self.d_ff);
            linear(params, &format!("enc{l}.ff2"), self.d_ff, d);
            norm(params, &format!("enc{l}.ln1"));
            norm(params, &format!("enc{l}.ln2"));
        }
        linear(params, "dec.embed", 1, d);
        for l in 0..self.decoder_layers {
            for block in ["self", "cross"] {
                for p in ["q", "k", "v", "o"] {
                    linear(params, &format!("dec{l}.{block}.{p}"), d, d);
                }
            }
            linear(params, &format!("dec{l}.ff1"), d, self.d_ff);
            linear(params, &format!("dec{l}.ff2"), self.d_ff, d);
            for n in ["ln1", "ln2", "ln3"] {
                norm(params, &format!("dec{l}.{n}"));
            }
        }
        linear(params, "head", d, 1);
        Ok(())
    }

    fn linear(&self, tape: &mut Tape, b: &Bound, name: &str, x: Var) -> Result<Var> {
        let y = tape.matmul(x, b.get(&format!("{name}.weight"))?)?;
        tape.add(y, b.get(&format!("{name}.bias"))?)
    }

    fn norm(&self, tape: &mut Tape, b: &Bound, name: &str, x: Var) -> Result<Var> {
        tape.layer_norm(x, b.get(&format!("{name}.gain"))?, b.get(&format!("{name}.bias"))?)
    }

    /// Multi-head scaled dot-product attention of `q_src: [B, Lq, d]` over
    /// `kv_src: [B, Lk, d]`. Returns the projected output and the attention
    /// weights `[B, heads, Lq, Lk]`.
    pub fn attention(
        &self,
        tape: &mut Tape,
        b: &Bound,
        name: &str,
        q_src: Var,
        kv_src: Var,
        mask: Option<&[bool]>,
        mode: &mut Mode<'_>,
    ) -> Result<(Var, Var)> {
        let (sq, sk) = (tape.shape(q_src).to_vec(), tape.shape(kv_src).to_vec());
        if sq.len() != 3 || sk.len() != 3 || sq[0] != sk[0] {
            return Err(contract(format!("attention inputs {sq:?} and {sk:?}")));
        }
        if sq[2] != self.d_model || sk[2] != self.d_model {
            return Err(contract(format!(
                "attention expects width {}, got {} and {}",
                self.d_model, sq[2], sk[2]
            )));
        }
        if sk[1] == 0 {
            return Err(contract("attention over an empty key sequence"));
        }
        let (bsz, lq, lk, h, dk) = (sq[0], sq[1], sk[1], self.n_heads, self.d_k());
        let split = |tape: &mut Tape, x: Var, len: usize| -> Result<Var> {
            let x = tape.reshape(x, &[bsz, len, h, dk])?;
            tape.permute(x, &[0, 2, 1, 3])
        };
        let q = self.linear(tape, b, &format!("{name}.q"), q_src)?;
        let k = self.linear(tape, b, &format!("{name}.k"), kv_src)?;
        let v = self.linear(tape, b, &format!("{name}.v"), kv_src)?;
        let (q, k, v) = (split(tape, q, lq)?, split(tape, k, lk)?, split(tape, v, lk)?);
        let scores = tape.matmul_nt(q, k)?;
        let scores = tape.scale(scores, 1.0 / (dk as f64).sqrt());
        let attn = match mask {
            Some(m) => tape.masked_softmax(scores, m)?,
            None => tape.softmax(scores, 3)?,
        };
        let dropped = tape.dropout(attn, self.dropout, mode.rng, mode.training)?;
        let ctx = tape.matmul(dropped, v)?;
        let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
        let ctx = tape.reshape(ctx, &[bsz, lq, self.d_model])?;
        let out = self.linear(tape, b, &format!("{name}.o"), ctx)?;
        Ok((out, attn))
    }

    fn feed_forward(&self, tape: &mut Tape, b: &Bound, prefix: &str, x: Var, mode: &mut Mode<'_>) -> Result<Var> {
        let hdn = self.linear(tape, b, &format!("{prefix}.ff1"), x)?;
        let hdn = tape.relu(hdn);
        let hdn = tape.dropout(hdn, self.dropout, mode.rng, mode.training)?;
        self.linear(tape, b, &format!("{prefix}.ff2"), hdn)
    }

    /// `z: [B, w, d_model]` (positional encoding not yet added). Returns the
    /// encoder output and each layer's attention weights.
    pub fn encode(&self, tape: &mut Tape, b: &Bound, z: Var, mode: &mut Mode<'_>) -> Result<(Var, Vec<Var>)> {
        let x = self.add_positions(tape, z)?;
        let mut x = x;
        let mut maps = Vec::new();
        for l in 0..self.encoder_layers {
            let (a, attn) = self.attention(tape, b, &format!("enc{l}.attn"), x, x, None, mode)?;
            maps.push(attn);
            let r = tape.add(x, a)?;
            x = self.norm(tape, b, &format!("enc{l}.ln1"), r)?;
            let f = self.feed_forward(tape, b, &format!("enc{l}"), x, mode)?;
            let r = tape.add(x, f)?;
            x = self.norm(tape, b, &format!("enc{l}.ln2"), r)?;
        }
        Ok((x, maps))
    }

    /// `y_in: [B, w]` differenced target history; `z_enc: [B, w_enc, d]`.
    /// Returns decoder states `[B, w, d]` plus self- and cross-attention
    /// weights per layer.
    pub fn decode(
        &self,
        tape: &mut Tape,
        b: &Bound,
        y_in: Var,
        z_enc: Var,
        mode: &mut Mode<'_>,
    ) -> Result<(Var, Vec<Var>, Vec<Var>)> {
        let (bsz, w) = match tape.shape(y_in) {
            [bsz, w] => (*bsz, *w),
            s => return Err(contract(format!("decoder input must be [B, w], got {s:?}"))),
        };
        if w == 0 {
            return Err(contract("empty decoder input"));
        }
        let se = tape.shape(z_enc).to_vec();
        if se.len() != 3 || se[0] != bsz || se[1] == 0 {
            return Err(contract(format!("encoder output {se:?} unusable for batch {bsz}")));
        }
        let y = tape.reshape(y_in, &[bsz, w, 1])?;
        let y = self.linear(tape, b, "dec.embed", y)?;
        let mut x = self.add_positions(tape, y)?;
        let mask = causal_mask(w);
        let (mut selfs, mut crosses) = (Vec::new(), Vec::new());
        for l in 0..self.decoder_layers {
            let (a, attn) = self.attention(tape, b, &format!("dec{l}.self"), x, x, Some(&mask), mode)?;
            selfs.push(attn);
            let r = tape.add(x, a)?;
            x = self.norm(tape, b, &format!("dec{l}.ln1"), r)?;
            let (c, attn) = self.attention(tape, b, &format!("dec{l}.cross"), x, z_enc, None, mode)?;
            crosses.push(attn);
            let r = tape.add(x, c)?;
            x = self.norm(tape, b, &format!("dec{l}.ln2"), r)?;
            let f = self.feed_forward(tape, b, &format!("dec{l}"), x, mode)?;
            let r = tape.add(x, f)?;
            x = self.norm(tape, b, &format!("dec{l}.ln3"), r)?;
        }
        Ok((x, selfs, crosses))
    }

    /// Projects the last `h` decoder positions to one value each: `[B, h]`.
    pub fn head(&self, tape: &mut Tape, b: &Bound, z_dec: Var, h: usize) -> Result<Var> {
        let s = tape.shape(z_dec).to_vec();
        if s.len() != 3 || h == 0 || s[1] < h {
            return Err(contract(format!("head needs at least {h} decoder positions, got {s:?}")));
        }
        let last = tape.slice(z_dec, 1, s[1] - h, h)?;
        let out = self.linear(tape, b, "head", last)?;
        tape.reshape(out, &[s[0], h])
    }

    fn add_positions(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let s = tape.shape(x).to_vec();
        if s.len() != 3 || s[2] != self.d_model {
            return Err(contract(format!(
                "sequence must be [B, w, {}], got {s:?}",
                self.d_model
            )));
        }
        let p = tape.constant(&s[1..], positional_encoding(s[1], s[2]))?;
        tape.add(x, p)
    }
}
