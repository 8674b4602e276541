use deftan_numerics::{
    BoundParams, Graph, MhsaParams, Mode, ParamId, ParamStore, Real, Tensor, Var,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, SubBlock, TFfwKind};
use crate::audio::Waveform;
use crate::error::{Error, Result};
use crate::stft::{self, apply_mask_op, istft_op, ComplexMask};

const PRELU_INIT: f64 = 0.25;
/// Down-conv weights start this much smaller than the default init so the
/// untrained mask is close to `1 + 0j`.
const DOWN_INIT_SCALE: f64 = 0.01;

#[derive(Clone, Copy, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Copy, Debug)]
struct Affine {
    weight: ParamId,
    bias: ParamId,
}

/// Conv2D -> LN over channels -> PReLU (or ReLU when `alpha` is absent).
#[derive(Clone, Debug)]
struct ConvUnit {
    conv: Affine,
    norm: Norm,
    alpha: Option<ParamId>,
}

#[derive(Clone, Copy, Debug)]
struct Attn {
    wq: ParamId,
    bq: ParamId,
    wk: ParamId,
    bk: ParamId,
    wv: ParamId,
    bv: ParamId,
    wo: ParamId,
    bo: ParamId,
}

#[derive(Clone, Debug)]
struct FTrans {
    attn: Attn,
    norm1: Norm,
    lin1: Affine,
    ffw_norm1: Norm,
    lin2: Affine,
    ffw_norm2: Norm,
    norm2: Norm,
}

#[derive(Clone, Debug)]
struct SdcLayer {
    weight: ParamId,
    dilation: usize,
    norm: Norm,
    alpha: Option<ParamId>,
}

#[derive(Clone, Debug)]
struct RecurrentDir {
    w_ih: ParamId,
    b_ih: ParamId,
    w_hh: ParamId,
    b_hh: Option<ParamId>,
}

#[derive(Clone, Debug)]
enum TFfw {
    Sdc(Vec<SdcLayer>),
    Rnn([RecurrentDir; 2]),
    Gru([RecurrentDir; 2]),
}

#[derive(Clone, Debug)]
struct TConf {
    attn: Attn,
    norm1: Norm,
    lin1: Affine,
    alpha1: Option<ParamId>,
    ffw: TFfw,
    lin2: Affine,
    ffw_norm: Norm,
    norm2: Norm,
}

#[derive(Clone, Debug)]
struct Block {
    dense: Option<Vec<ConvUnit>>,
    ftrans: Option<FTrans>,
    tconf: Option<TConf>,
}

#[derive(Clone, Debug)]
struct Layout {
    up: ConvUnit,
    blocks: Vec<Block>,
    down: Affine,
}

struct Init<'a, T: Real> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<T: Real> Init<'_, T> {
    fn uniform(&mut self, name: String, shape: &[usize], bound: f64) -> Result<ParamId> {
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| T::lit(rng.gen_range(-bound..=bound)));
        Ok(self.store.add(name, t)?)
    }

    fn constant(&mut self, name: String, shape: &[usize], v: f64) -> Result<ParamId> {
        Ok(self.store.add(name, Tensor::full(shape, T::lit(v)))?)
    }

    fn affine(&mut self, prefix: &str, shape: &[usize], fan_in: usize) -> Result<Affine> {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Ok(Affine {
            weight: self.uniform(format!("{prefix}.weight"), shape, bound)?,
            bias: self.uniform(format!("{prefix}.bias"), &shape[..1], bound)?,
        })
    }

    fn norm(&mut self, prefix: &str, n: usize) -> Result<Norm> {
        Ok(Norm {
            gamma: self.constant(format!("{prefix}.gamma"), &[n], 1.0)?,
            beta: self.constant(format!("{prefix}.beta"), &[n], 0.0)?,
        })
    }

    fn prelu(&mut self, cfg: &ModelConfig, prefix: &str, n: usize) -> Result<Option<ParamId>> {
        if cfg.prelu_to_relu {
            return Ok(None);
        }
        Ok(Some(self.constant(format!("{prefix}.alpha"), &[n], PRELU_INIT)?))
    }

    fn conv_unit(&mut self, cfg: &ModelConfig, prefix: &str, cin: usize) -> Result<ConvUnit> {
        let (c, k) = (cfg.channels, cfg.dense_kernel);
        Ok(ConvUnit {
            conv: self.affine(&format!("{prefix}.conv"), &[c, cin, k, k], cin * k * k)?,
            norm: self.norm(&format!("{prefix}.norm"), c)?,
            alpha: self.prelu(cfg, &format!("{prefix}.prelu"), c)?,
        })
    }

    fn attn(&mut self, prefix: &str, e: usize) -> Result<Attn> {
        let mut proj = |n: &str| self.affine(&format!("{prefix}.{n}"), &[e, e], e);
        let (q, k, v, o) = (proj("q")?, proj("k")?, proj("v")?, proj("out")?);
        Ok(Attn {
            wq: q.weight,
            bq: q.bias,
            wk: k.weight,
            bk: k.bias,
            wv: v.weight,
            bv: v.bias,
            wo: o.weight,
            bo: o.bias,
        })
    }

    fn recurrent(&mut self, prefix: &str, width: usize, gated: bool) -> Result<RecurrentDir> {
        let hidden = width / 2;
        let rows = if gated { 3 * hidden } else { hidden };
        let bound = 1.0 / (hidden as f64).sqrt();
        Ok(RecurrentDir {
            w_ih: self.uniform(format!("{prefix}.w_ih"), &[rows, width], bound)?,
            b_ih: self.uniform(format!("{prefix}.b_ih"), &[rows], bound)?,
            w_hh: self.uniform(format!("{prefix}.w_hh"), &[rows, hidden], bound)?,
            b_hh: if gated {
                Some(self.uniform(format!("{prefix}.b_hh"), &[rows], bound)?)
            } else {
                None
            },
        })
    }
}

/// The DeFT-AN mask estimator with its parameters.
#[derive(Clone, Debug)]
pub struct DeftAn<T: Real> {
    cfg: ModelConfig,
    layout: Layout,
    pub params: ParamStore<T>,
}

impl<T: Real> DeftAn<T> {
    /// Builds the network with seeded random weights.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamStore::new();
        let mut init = Init {
            store: &mut params,
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let c = cfg.channels;
        let up = init.conv_unit(&cfg, "up", 2 * cfg.mics)?;
        let mut blocks = Vec::with_capacity(cfg.blocks);
        let active = cfg.active_sub_blocks();
        for b in 0..cfg.blocks {
            let mut block = Block {
                dense: None,
                ftrans: None,
                tconf: None,
            };
            for &sub in &active {
                match sub {
                    SubBlock::Dense => {
                        let layers = cfg
                            .dense_input_channels()
                            .into_iter()
                            .enumerate()
                            .map(|(i, cin)| {
                                init.conv_unit(&cfg, &format!("blocks.{b}.dense.layers.{i}"), cin)
                            })
                            .collect::<Result<_>>()?;
                        block.dense = Some(layers);
                    }
                    SubBlock::Freq => {
                        let p = format!("blocks.{b}.ftrans");
                        let e = cfg.f_ffw_expansion * c;
                        block.ftrans = Some(FTrans {
                            attn: init.attn(&format!("{p}.attn"), c)?,
                            norm1: init.norm(&format!("{p}.norm1"), c)?,
                            lin1: init.affine(&format!("{p}.ffw.lin1"), &[e, c], c)?,
                            ffw_norm1: init.norm(&format!("{p}.ffw.norm1"), e)?,
                            lin2: init.affine(&format!("{p}.ffw.lin2"), &[c, e], e)?,
                            ffw_norm2: init.norm(&format!("{p}.ffw.norm2"), c)?,
                            norm2: init.norm(&format!("{p}.norm2"), c)?,
                        });
                    }
                    SubBlock::Time => {
                        let p = format!("blocks.{b}.tconf");
                        let w = cfg.t_ffw_width * c;
                        let attn = init.attn(&format!("{p}.attn"), c)?;
                        let norm1 = init.norm(&format!("{p}.norm1"), c)?;
                        let lin1 = init.affine(&format!("{p}.ffw.lin1"), &[w, c], c)?;
                        let alpha1 = init.prelu(&cfg, &format!("{p}.ffw.prelu"), w)?;
                        let ffw = match cfg.t_ffw_kind {
                            TFfwKind::Sdc => TFfw::Sdc(
                                cfg.dilations()
                                    .into_iter()
                                    .enumerate()
                                    .map(|(i, dilation)| {
                                        let q = format!("{p}.ffw.sdc.{i}");
                                        let k = cfg.sdc_kernel;
                                        Ok(SdcLayer {
                                            weight: init.uniform(
                                                format!("{q}.weight"),
                                                &[w, k],
                                                1.0 / (k as f64).sqrt(),
                                            )?,
                                            dilation,
                                            norm: init.norm(&format!("{q}.norm"), w)?,
                                            alpha: init.prelu(&cfg, &format!("{q}.prelu"), w)?,
                                        })
                                    })
                                    .collect::<Result<_>>()?,
                            ),
                            TFfwKind::Rnn => TFfw::Rnn([
                                init.recurrent(&format!("{p}.ffw.rnn.fwd"), w, false)?,
                                init.recurrent(&format!("{p}.ffw.rnn.bwd"), w, false)?,
                            ]),
                            TFfwKind::Gru => TFfw::Gru([
                                init.recurrent(&format!("{p}.ffw.gru.fwd"), w, true)?,
                                init.recurrent(&format!("{p}.ffw.gru.bwd"), w, true)?,
                            ]),
                        };
                        block.tconf = Some(TConf {
                            attn,
                            norm1,
                            lin1,
                            alpha1,
                            ffw,
                            lin2: init.affine(&format!("{p}.ffw.lin2"), &[c, w], w)?,
                            ffw_norm: init.norm(&format!("{p}.ffw.norm"), c)?,
                            norm2: init.norm(&format!("{p}.norm2"), c)?,
                        });
                    }
                }
            }
            blocks.push(block);
        }
        let k = cfg.dense_kernel;
        let fan_in = c * k * k;
        let bound = DOWN_INIT_SCALE / (fan_in as f64).sqrt();
        let down = Affine {
            weight: init.uniform("down.conv.weight".into(), &[2, c, k, k], bound)?,
            bias: init.store.add("down.conv.bias", Tensor::new(&[2], vec![T::one(), T::zero()])?)?,
        };
        Ok(Self {
            cfg,
            layout: Layout { up, blocks, down },
            params,
        })
    }

    /// Reassembles a network from stored parameters, checking that names and
    /// shapes match what `cfg` builds.
    pub fn from_params(cfg: ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let fresh = Self::new(cfg, 0)?;
        if fresh.params.len() != params.len() {
            return Err(Error::Config(format!(
                "config builds {} parameters, store has {}",
                fresh.params.len(),
                params.len()
            )));
        }
        for (a, b) in fresh.params.iter().zip(params.iter()) {
            if a.name != b.name || a.tensor.shape() != b.tensor.shape() {
                return Err(Error::Config(format!(
                    "parameter mismatch: expected {} {:?}, found {} {:?}",
                    a.name,
                    a.tensor.shape(),
                    b.name,
                    b.tensor.shape()
                )));
            }
        }
        Ok(Self {
            cfg: fresh.cfg,
            layout: fresh.layout,
            params,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    /// Same network at another precision.
    pub fn cast<U: Real>(&self) -> DeftAn<U> {
        DeftAn {
            cfg: self.cfg.clone(),
            layout: self.layout.clone(),
            params: self.params.cast(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    fn act(&self, g: &mut Graph<T>, p: &BoundParams, x: Var, alpha: Option<ParamId>, axis: usize) -> Result<Var> {
        Ok(match alpha {
            Some(a) => g.prelu(x, p.var(a), axis)?,
            None => g.relu(x)?,
        })
    }

    fn norm(&self, g: &mut Graph<T>, p: &BoundParams, x: Var, n: Norm, axis: usize) -> Result<Var> {
        Ok(g.layer_norm(x, axis..axis + 1, p.var(n.gamma), p.var(n.beta))?)
    }

    fn conv_unit(&self, g: &mut Graph<T>, p: &BoundParams, x: Var, u: &ConvUnit) -> Result<Var> {
        let y = g.conv2d(x, p.var(u.conv.weight), Some(p.var(u.conv.bias)))?;
        let y = self.norm(g, p, y, u.norm, 0)?;
        self.act(g, p, y, u.alpha, 0)
    }

    fn linear(&self, g: &mut Graph<T>, p: &BoundParams, x: Var, a: Affine) -> Result<Var> {
        Ok(g.linear(x, p.var(a.weight), Some(p.var(a.bias)))?)
    }

    fn mhsa(&self, g: &mut Graph<T>, p: &BoundParams, x: Var, a: &Attn) -> Result<Var> {
        let mp = MhsaParams {
            wq: p.var(a.wq),
            bq: p.var(a.bq),
            wk: p.var(a.wk),
            bk: p.var(a.bk),
            wv: p.var(a.wv),
            bv: p.var(a.bv),
            wo: p.var(a.wo),
            bo: p.var(a.bo),
        };
        Ok(g.mhsa(x, &mp, self.cfg.heads, self.cfg.dropout)?)
    }

    /// Attention sub-layer: `LN(x + dropout(MHSA(x)))` over the last axis.
    fn attention_residual(&self, g: &mut Graph<T>, p: &BoundParams, x: Var, a: &Attn, n: Norm) -> Result<Var> {
        let att = self.mhsa(g, p, x, a)?;
        let att = g.dropout(att, self.cfg.dropout)?;
        let sum = g.add(x, att)?;
        self.norm(g, p, sum, n, 2)
    }

    fn check_features(&self, g: &Graph<T>, x: Var, op: &str) -> Result<()> {
        let s = g.shape(x);
        if s.len() != 3 || s[0] != self.cfg.channels {
            return Err(Error::Config(format!(
                "{op} expects ({}, F, T) features, got {s:?}",
                self.cfg.channels
            )));
        }
        Ok(())
    }

    /// `(2M, F, T)` stacked spectrum to `(C, F, T)` features.
    pub fn up_conv(&self, g: &mut Graph<T>, p: &BoundParams, y: Var) -> Result<Var> {
        let s = g.shape(y);
        if s.len() != 3 || s[0] != 2 * self.cfg.mics {
            return Err(Error::Config(format!(
                "up-conv expects {} input channels (2 x {} mics), got shape {s:?}",
                2 * self.cfg.mics,
                self.cfg.mics
            )));
        }
        self.conv_unit(g, p, y, &self.layout.up)
    }

    pub fn dense_block(&self, g: &mut Graph<T>, p: &BoundParams, block: usize, x: Var) -> Result<Var> {
        self.check_features(g, x, "dense block")?;
        let layers = self.layout.blocks[block]
            .dense
            .as_ref()
            .ok_or_else(|| Error::Config(format!("block {block} has no dense sub-block")))?;
        let expected = self.cfg.dense_input_channels();
        let mut feats = vec![x];
        let mut out = x;
        for (k, unit) in layers.iter().enumerate() {
            let input = if feats.len() == 1 { x } else { g.concat(&feats, 0)? };
            debug_assert_eq!(g.shape(input)[0], expected[k]);
            out = self.conv_unit(g, p, input, unit)?;
            feats.push(out);
        }
        Ok(out)
    }

    pub fn f_transformer(&self, g: &mut Graph<T>, p: &BoundParams, block: usize, x: Var) -> Result<Var> {
        self.check_features(g, x, "F-transformer")?;
        let ft = self.layout.blocks[block]
            .ftrans
            .as_ref()
            .ok_or_else(|| Error::Config(format!("block {block} has no F-transformer")))?;
        // (C, F, T) -> (T, F, C): time is the batch, frequency the sequence
        let xt = g.permute(x, &[2, 1, 0])?;
        let x1 = self.attention_residual(g, p, xt, &ft.attn, ft.norm1)?;
        let h = self.linear(g, p, x1, ft.lin1)?;
        let h = self.norm(g, p, h, ft.ffw_norm1, 2)?;
        let h = if self.cfg.gelu_to_relu { g.relu(h)? } else { g.gelu(h)? };
        let h = self.linear(g, p, h, ft.lin2)?;
        let h = self.norm(g, p, h, ft.ffw_norm2, 2)?;
        let h = g.dropout(h, self.cfg.dropout)?;
        let sum = g.add(x1, h)?;
        let x2 = self.norm(g, p, sum, ft.norm2, 2)?;
        Ok(g.permute(x2, &[2, 1, 0])?)
    }

    pub fn t_conformer(&self, g: &mut Graph<T>, p: &BoundParams, block: usize, x: Var) -> Result<Var> {
        self.check_features(g, x, "T-conformer")?;
        let tc = self.layout.blocks[block]
            .tconf
            .as_ref()
            .ok_or_else(|| Error::Config(format!("block {block} has no T-conformer")))?;
        // (C, F, T) -> (F, T, C): frequency is the batch, time the sequence
        let xt = g.permute(x, &[1, 2, 0])?;
        let x1 = self.attention_residual(g, p, xt, &tc.attn, tc.norm1)?;
        let h = self.linear(g, p, x1, tc.lin1)?;
        let h = self.act(g, p, h, tc.alpha1, 2)?;
        let h = match &tc.ffw {
            TFfw::Sdc(_) => {
                let hc = g.permute(h, &[0, 2, 1])?;
                let hc = self.sdc_stack(g, p, block, hc)?;
                g.permute(hc, &[0, 2, 1])?
            }
            TFfw::Rnn(dirs) => self.bidirectional(g, p, h, dirs, false)?,
            TFfw::Gru(dirs) => self.bidirectional(g, p, h, dirs, true)?,
        };
        let h = self.linear(g, p, h, tc.lin2)?;
        let h = self.norm(g, p, h, tc.ffw_norm, 2)?;
        let h = g.dropout(h, self.cfg.dropout)?;
        let sum = g.add(x1, h)?;
        let x2 = self.norm(g, p, sum, tc.norm2, 2)?;
        Ok(g.permute(x2, &[2, 0, 1])?)
    }

    /// The dilated conv stack of block `block` on `(B, width, T)` input:
    /// per layer DD-Conv -> LN over channels -> PReLU.
    pub fn sdc_stack(&self, g: &mut Graph<T>, p: &BoundParams, block: usize, x: Var) -> Result<Var> {
        let layers = match self.layout.blocks[block].tconf.as_ref().map(|t| &t.ffw) {
            Some(TFfw::Sdc(layers)) => layers,
            _ => return Err(Error::Config(format!("block {block} has no SDC stack"))),
        };
        let mut h = x;
        for l in layers {
            h = g.dd_conv1d(h, p.var(l.weight), l.dilation)?;
            h = self.norm(g, p, h, l.norm, 1)?;
            h = self.act(g, p, h, l.alpha, 1)?;
        }
        Ok(h)
    }

    /// Bidirectional recurrence over axis 1 of `(B, T, W)`; each direction
    /// has `W / 2` hidden units and the outputs are concatenated.
    fn bidirectional(
        &self,
        g: &mut Graph<T>,
        p: &BoundParams,
        x: Var,
        dirs: &[RecurrentDir; 2],
        gated: bool,
    ) -> Result<Var> {
        let s = g.shape(x).to_vec();
        let (batch, steps, width) = (s[0], s[1], s[2]);
        let hidden = width / 2;
        let mut outs = Vec::with_capacity(2);
        for (d, dir) in dirs.iter().enumerate() {
            let xp = g.linear(x, p.var(dir.w_ih), Some(p.var(dir.b_ih)))?;
            let mut h = g.constant(Tensor::zeros(&[batch, 1, hidden]));
            let mut hs = vec![h; steps];
            for i in 0..steps {
                let t = if d == 0 { i } else { steps - 1 - i };
                let xt = g.slice_axis(xp, 1, t, 1)?;
                let bias = dir.b_hh.map(|b| p.var(b));
                let hh = g.linear(h, p.var(dir.w_hh), bias)?;
                h = if gated {
                    let (xr, xz, xn) = (
                        g.slice_axis(xt, 2, 0, hidden)?,
                        g.slice_axis(xt, 2, hidden, hidden)?,
                        g.slice_axis(xt, 2, 2 * hidden, hidden)?,
                    );
                    let (hr, hz, hn) = (
                        g.slice_axis(hh, 2, 0, hidden)?,
                        g.slice_axis(hh, 2, hidden, hidden)?,
                        g.slice_axis(hh, 2, 2 * hidden, hidden)?,
                    );
                    let r = g.add(xr, hr)?;
                    let r = g.sigmoid(r)?;
                    let z = g.add(xz, hz)?;
                    let z = g.sigmoid(z)?;
                    let rn = g.mul(r, hn)?;
                    let n = g.add(xn, rn)?;
                    let n = g.tanh(n)?;
                    let diff = g.sub(h, n)?;
                    let zd = g.mul(z, diff)?;
                    g.add(n, zd)?
                } else {
                    let a = g.add(xt, hh)?;
                    g.tanh(a)?
                };
                hs[t] = h;
            }
            outs.push(g.concat(&hs, 1)?);
        }
        Ok(g.concat(&outs, 2)?)
    }

    /// One DeFT-A block in the configured order, skipping an ablated
    /// sub-block.
    pub fn deft_a_block(&self, g: &mut Graph<T>, p: &BoundParams, block: usize, x: Var) -> Result<Var> {
        let mut h = x;
        for sub in self.cfg.active_sub_blocks() {
            h = match sub {
                SubBlock::Dense => self.dense_block(g, p, block, h)?,
                SubBlock::Freq => self.f_transformer(g, p, block, h)?,
                SubBlock::Time => self.t_conformer(g, p, block, h)?,
            };
        }
        Ok(h)
    }

    /// `(C, F, T)` features to a `(2, F, T)` mask (real plane, imaginary plane).
    pub fn down_conv(&self, g: &mut Graph<T>, p: &BoundParams, x: Var) -> Result<Var> {
        self.check_features(g, x, "down-conv")?;
        let d = self.layout.down;
        Ok(g.conv2d(x, p.var(d.weight), Some(p.var(d.bias)))?)
    }

    /// Mask for a stacked `(2M, F, T)` spectrum.
    pub fn mask(&self, g: &mut Graph<T>, p: &BoundParams, y: Var) -> Result<Var> {
        let mut h = self.up_conv(g, p, y)?;
        for b in 0..self.cfg.blocks {
            h = self.deft_a_block(g, p, b, h)?;
        }
        self.down_conv(g, p, h)
    }

    /// Places the STFT of `noisy` on the graph and runs the network.
    pub fn enhance_graph(&self, g: &mut Graph<T>, p: &BoundParams, noisy: &Waveform) -> Result<Enhanced> {
        if noisy.num_channels() != self.cfg.mics {
            return Err(Error::Config(format!(
                "input has {} channels, model expects {} mics",
                noisy.num_channels(),
                self.cfg.mics
            )));
        }
        let cfg = self.cfg.stft();
        let spec = stft::stft::<T>(noisy, cfg)?;
        let y = g.constant(spec.stack_ri());
        let reference = g.constant(spec.channel(0).to_graph_layout().reshape(&[
            2,
            spec.bins(),
            spec.frames(),
        ])?);
        let mask = self.mask(g, p, y)?;
        let est = apply_mask_op(g, mask, reference)?;
        let est = g.reshape(est, &[2, 1, spec.bins(), spec.frames()])?;
        let wave = istft_op(g, est, cfg, noisy.len())?;
        Ok(Enhanced { wave, mask })
    }

    /// Runs the network without recording gradients. In `Mode::Train`
    /// dropout masks are drawn from `seed`.
    pub fn forward(&self, noisy: &Waveform, mode: Mode, seed: u64) -> Result<(Waveform, ComplexMask<T>)> {
        let mut g = Graph::with_mode(mode, seed).without_recording();
        let p = self.params.bind(&mut g);
        let out = self.enhance_graph(&mut g, &p, noisy)?;
        let samples = g.data(out.wave).iter().map(|v| v.to_f64_lossy()).collect();
        let mask = ComplexMask::from_stacked(g.value(out.mask))?;
        Ok((Waveform::mono(samples)?, mask))
    }

    /// Eval-mode enhancement of the reference channel.
    pub fn enhance(&self, noisy: &Waveform) -> Result<Waveform> {
        Ok(self.forward(noisy, Mode::Eval, 0)?.0)
    }
}

/// Graph handles produced by [`DeftAn::enhance_graph`].
#[derive(Clone, Copy, Debug)]
pub struct Enhanced {
    /// Estimated reference-channel waveform, `(1, N)`.
    pub wave: Var,
    /// Complex mask, `(2, F, T)`.
    pub mask: Var,
}
