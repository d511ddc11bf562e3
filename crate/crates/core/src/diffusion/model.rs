//! Toy denoiser with an inpainting branch and a control branch.
//!
//! The base network is a stem convolution, `n` residual feature layers and a
//! head convolution. Layers `1..=n/2` form the encoder, layer `n/2 + 1` the
//! middle block and the remaining layers the decoder; decoder layer `k`
//! also receives the encoder feature `n + 1 − k` as a skip connection.
//! Every base layer is conditioned on the timestep and, where enabled, on
//! the token embedding.
//!
//! * The inpainting branch is a clone of the base without token
//!   conditioning. It reads `[z_t, z_masked, m]` and its `i`-th feature is
//!   added to base feature `i` for every layer through a zero convolution,
//!   scaled by `w_I`.
//! * The control branch clones the encoder and reads `[z_t, E_cond, C_cond]`.
//!   Its `i`-th feature is added to base feature `n/2 + i` (middle and
//!   decoder only), scaled by `w_C`.
//!
//! Zero convolutions start with all-zero weights and biases, so a freshly
//! built model reproduces the base output bit for bit.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Grads, Graph, Var};
use super::params::{Group, ParamId, ParamStore};
use super::tensor::Tensor;
use super::tokens::{vocab_size, TokenCondition};
use super::DiffusionError;

/// Edge (1) + color (3) planes.
pub const CONDITION_CHANNELS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UNetSpec {
    /// Number of feature-tap layers `n`; even and at least 2.
    pub n_layers: usize,
    /// Feature channels of every layer.
    pub width: usize,
    pub latent_channels: usize,
    pub time_dim: usize,
    /// Token conditioning per base layer, length `n`.
    pub token_layers: Vec<bool>,
}

impl UNetSpec {
    pub fn new(n_layers: usize, width: usize, latent_channels: usize) -> Self {
        Self {
            n_layers,
            width,
            latent_channels,
            time_dim: 16,
            token_layers: vec![true; n_layers],
        }
    }

    pub fn validate(&self) -> Result<(), DiffusionError> {
        if self.n_layers < 2 || self.n_layers % 2 != 0 {
            return Err(DiffusionError::Config(format!(
                "n_layers must be even and >= 2, got {}",
                self.n_layers
            )));
        }
        if self.token_layers.len() != self.n_layers {
            return Err(DiffusionError::Config("token_layers must have n_layers entries".into()));
        }
        if self.width == 0 || self.latent_channels == 0 || self.time_dim < 2 || self.time_dim % 2 != 0 {
            return Err(DiffusionError::Config("width, latent_channels and an even time_dim are required".into()));
        }
        Ok(())
    }

    /// `⌊n/2⌋`, the last encoder layer.
    pub fn half(&self) -> usize {
        self.n_layers / 2
    }

    /// Number of control features, `n − ⌊n/2⌋`.
    pub fn control_layers(&self) -> usize {
        self.n_layers - self.half()
    }

    /// 1-based base layer receiving control feature `i` (also 1-based).
    pub fn control_target(&self, i: usize) -> usize {
        self.half() + i
    }
}

#[derive(Debug, Clone)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Dense {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone)]
struct Layer {
    conv: Conv,
    time: Dense,
    token: Option<Dense>,
}

#[derive(Debug, Clone)]
struct Net {
    time: Dense,
    stem: Conv,
    token_table: Option<ParamId>,
    layers: Vec<Layer>,
    head: Option<Conv>,
    skips: bool,
}

/// Inputs of the inpainting branch besides `z_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct InpaintInput {
    /// Latent of the masked image.
    pub z_masked: Tensor,
    /// Editing mask at latent resolution, `[1, h, w]`.
    pub mask: Tensor,
}

/// One denoiser evaluation. Branches run only when their input is present.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseInput<'a> {
    pub z_t: &'a Tensor,
    pub t: f64,
    pub tokens: &'a TokenCondition,
    pub inpaint: Option<&'a InpaintInput>,
    /// Condition planes `[E_cond, C_cond]` at latent resolution, `[4, h, w]`.
    pub control: Option<&'a Tensor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub noise_pred: Tensor,
    /// Base features `F_1..F_n` after injection.
    pub features: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct DualBranchModel {
    spec: UNetSpec,
    num_train_steps: usize,
    params: ParamStore,
    base: Net,
    inpaint: Net,
    control: Net,
    inpaint_zero: Vec<Conv>,
    control_zero: Vec<Conv>,
    pub w_inpaint: f64,
    pub w_control: f64,
}

fn he(shape: &[usize], fan_in: usize, gain: f64, rng: &mut impl Rng) -> Tensor {
    Tensor::randn(shape, gain / (fan_in as f64).sqrt(), rng)
}

/// Sinusoidal embedding of a continuous timestep.
pub fn timestep_embedding(t: f64, dim: usize) -> Tensor {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for i in 0..half {
        let freq = (-(10000f64.ln()) * i as f64 / half as f64).exp();
        out[i] = (t * freq).sin();
        out[half + i] = (t * freq).cos();
    }
    Tensor::new(vec![dim], out)
}

struct NetBuilder<'a, R: Rng> {
    store: &'a mut ParamStore,
    rng: &'a mut R,
    group: Group,
    prefix: &'static str,
}

impl<R: Rng> NetBuilder<'_, R> {
    fn add(&mut self, name: &str, t: Tensor) -> ParamId {
        self.store.add(format!("{}.{name}", self.prefix), self.group, t)
    }

    fn conv(&mut self, name: &str, co: usize, ci: usize, k: usize, gain: f64) -> Conv {
        let w = he(&[co, ci, k, k], ci * k * k, gain, self.rng);
        Conv {
            w: self.add(&format!("{name}.w"), w),
            b: self.add(&format!("{name}.b"), Tensor::zeros(&[co])),
        }
    }

    fn zero_conv(&mut self, name: &str, c: usize) -> Conv {
        Conv {
            w: self.add(&format!("{name}.w"), Tensor::zeros(&[c, c, 1, 1])),
            b: self.add(&format!("{name}.b"), Tensor::zeros(&[c])),
        }
    }

    fn dense(&mut self, name: &str, m: usize, n: usize, gain: f64) -> Dense {
        let w = he(&[m, n], n, gain, self.rng);
        Dense {
            w: self.add(&format!("{name}.w"), w),
            b: self.add(&format!("{name}.b"), Tensor::zeros(&[m])),
        }
    }

    fn net(&mut self, spec: &UNetSpec, in_channels: usize, layers: usize, tokens: bool, head: bool, skips: bool) -> Net {
        let c = spec.width;
        let time = self.dense("time", c, spec.time_dim, 1.0);
        let stem = self.conv("stem", c, in_channels, 3, 1.0);
        let token_table = (tokens && spec.token_layers.iter().any(|&b| b))
            .then(|| {
                let table = Tensor::randn(&[vocab_size(), c], 1.0, self.rng);
                self.add("token_table", table)
            });
        let layers = (0..layers)
            .map(|i| Layer {
                conv: self.conv(&format!("layer{}.conv", i + 1), c, c, 3, 0.5),
                time: self.dense(&format!("layer{}.time", i + 1), c, c, 0.5),
                token: (tokens && spec.token_layers[i]).then(|| self.dense(&format!("layer{}.token", i + 1), c, c, 0.5)),
            })
            .collect();
        let head = head.then(|| self.conv("head", spec.latent_channels, c, 3, 0.5));
        Net {
            time,
            stem,
            token_table,
            layers,
            head,
            skips,
        }
    }
}

fn check_chw(t: &Tensor, c: usize, hw: (usize, usize), what: &str) -> Result<(), DiffusionError> {
    if t.shape.len() != 3 || t.shape[0] != c || (t.shape[1], t.shape[2]) != hw {
        return Err(DiffusionError::Shape(format!(
            "{what}: expected [{c}, {}, {}], got {:?}",
            hw.0, hw.1, t.shape
        )));
    }
    Ok(())
}

impl DualBranchModel {
    /// Random base, branches cloned from it, zero convolutions at zero.
    pub fn new(spec: UNetSpec, num_train_steps: usize, rng: &mut impl Rng) -> Result<Self, DiffusionError> {
        spec.validate()?;
        let mut params = ParamStore::default();
        let lc = spec.latent_channels;
        let mut b = NetBuilder {
            store: &mut params,
            rng,
            group: Group::Base,
            prefix: "base",
        };
        let base = b.net(&spec, lc, spec.n_layers, true, true, true);
        b.group = Group::Inpaint;
        b.prefix = "inpaint";
        let inpaint = b.net(&spec, 2 * lc + 1, spec.n_layers, false, false, true);
        b.group = Group::InpaintZero;
        b.prefix = "inpaint_zero";
        let inpaint_zero = (0..spec.n_layers).map(|i| b.zero_conv(&format!("z{}", i + 1), spec.width)).collect();
        b.group = Group::Control;
        b.prefix = "control";
        let control = b.net(&spec, lc + CONDITION_CHANNELS, spec.control_layers(), false, false, false);
        b.group = Group::ControlZero;
        b.prefix = "control_zero";
        let control_zero = (0..spec.control_layers())
            .map(|i| b.zero_conv(&format!("z{}", i + 1), spec.width))
            .collect();
        let mut model = Self {
            spec,
            num_train_steps,
            params,
            base,
            inpaint,
            control,
            inpaint_zero,
            control_zero,
            w_inpaint: 1.0,
            w_control: 0.5,
        };
        model.clone_branches_from_base();
        Ok(model)
    }

    pub fn spec(&self) -> &UNetSpec {
        &self.spec
    }

    pub fn num_train_steps(&self) -> usize {
        self.num_train_steps
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Copies base weights into both branches (the extra input channels of
    /// the branch stems keep their own initialization) and zeroes every
    /// zero convolution.
    pub fn clone_branches_from_base(&mut self) {
        let copy = |p: &mut ParamStore, from: ParamId, to: ParamId| {
            let v = p.get(from).clone();
            *p.get_mut(to) = v;
        };
        let lc = self.spec.latent_channels;
        for branch in [&self.inpaint, &self.control] {
            copy(&mut self.params, self.base.time.w, branch.time.w);
            copy(&mut self.params, self.base.time.b, branch.time.b);
            copy(&mut self.params, self.base.stem.b, branch.stem.b);
            let base_stem = self.params.get(self.base.stem.w).clone();
            let stem = self.params.get_mut(branch.stem.w);
            let (co, ci_branch, k) = (stem.shape[0], stem.shape[1], stem.shape[2]);
            for o in 0..co {
                for i in 0..lc {
                    for kk in 0..k * k {
                        stem.data[(o * ci_branch + i) * k * k + kk] = base_stem.data[(o * lc + i) * k * k + kk];
                    }
                }
            }
            for (dst, src) in branch.layers.iter().zip(&self.base.layers) {
                copy(&mut self.params, src.conv.w, dst.conv.w);
                copy(&mut self.params, src.conv.b, dst.conv.b);
                copy(&mut self.params, src.time.w, dst.time.w);
                copy(&mut self.params, src.time.b, dst.time.b);
            }
        }
        for z in self.inpaint_zero.iter().chain(&self.control_zero) {
            for id in [z.w, z.b] {
                self.params.get_mut(id).data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    /// Parameter ids of the zero convolutions of the inpaint and control branches.
    pub fn zero_conv_params(&self) -> (Vec<ParamId>, Vec<ParamId>) {
        let ids = |v: &[Conv]| v.iter().flat_map(|c| [c.w, c.b]).collect();
        (ids(&self.inpaint_zero), ids(&self.control_zero))
    }

    fn check_input(&self, input: &DenoiseInput) -> Result<(usize, usize), DiffusionError> {
        let t = input.t;
        if !t.is_finite() || t < 0.0 || t > (self.num_train_steps - 1) as f64 {
            return Err(DiffusionError::TimestepOutOfRange {
                t,
                max: self.num_train_steps - 1,
            });
        }
        if input.z_t.shape.len() != 3 {
            return Err(DiffusionError::Shape(format!("z_t must be CHW, got {:?}", input.z_t.shape)));
        }
        let hw = (input.z_t.shape[1], input.z_t.shape[2]);
        check_chw(input.z_t, self.spec.latent_channels, hw, "z_t")?;
        if let Some(ip) = input.inpaint {
            check_chw(&ip.z_masked, self.spec.latent_channels, hw, "z_masked")?;
            check_chw(&ip.mask, 1, hw, "mask")?;
        }
        if let Some(c) = input.control {
            check_chw(c, CONDITION_CHANNELS, hw, "condition")?;
        }
        if let Some(&bad) = input.tokens.ids().iter().find(|&&id| id >= vocab_size()) {
            return Err(DiffusionError::Shape(format!("token id {bad} outside vocabulary")));
        }
        Ok(hw)
    }

    fn param(&self, g: &mut Graph, id: ParamId, trainable: &dyn Fn(Group) -> bool) -> Var {
        g.param(&self.params, id, trainable(self.params.group(id)))
    }

    fn conv(&self, g: &mut Graph, c: &Conv, x: Var, tr: &dyn Fn(Group) -> bool) -> Var {
        let w = self.param(g, c.w, tr);
        let b = self.param(g, c.b, tr);
        g.conv2d(x, w, b)
    }

    fn dense(&self, g: &mut Graph, d: &Dense, x: Var, tr: &dyn Fn(Group) -> bool) -> Var {
        let w = self.param(g, d.w, tr);
        let b = self.param(g, d.b, tr);
        g.linear(x, w, b)
    }

    /// Runs one network and returns its per-layer features. `inject` may
    /// modify each feature (1-based layer index) before it is consumed.
    fn run_net(
        &self,
        g: &mut Graph,
        net: &Net,
        input: Var,
        t: f64,
        tokens: Option<&TokenCondition>,
        tr: &dyn Fn(Group) -> bool,
        inject: &mut dyn FnMut(&mut Graph, usize, Var) -> Var,
    ) -> Vec<Var> {
        let temb_in = g.input(timestep_embedding(t, self.spec.time_dim));
        let temb = self.dense(g, &net.time, temb_in, tr);
        let temb = g.silu(temb);
        let tok = match (net.token_table, tokens) {
            (Some(table), Some(tokens)) => {
                let tv = self.param(g, table, tr);
                Some(g.embed_mean(tv, tokens.ids()))
            }
            _ => None,
        };
        let stem = self.conv(g, &net.stem, input, tr);
        let n = net.layers.len();
        let mut feats: Vec<Var> = Vec::with_capacity(n);
        for (idx, layer) in net.layers.iter().enumerate() {
            let k = idx + 1;
            let mut x_in = if k == 1 { stem } else { feats[k - 2] };
            if net.skips && k > n / 2 + 1 {
                x_in = g.add(x_in, feats[n - k]);
            }
            let mut pre = self.conv(g, &layer.conv, x_in, tr);
            let tb = self.dense(g, &layer.time, temb, tr);
            pre = g.add_channel_bias(pre, tb);
            if let (Some(tok_proj), Some(tok)) = (&layer.token, tok) {
                let kb = self.dense(g, tok_proj, tok, tr);
                pre = g.add_channel_bias(pre, kb);
            }
            let act = g.silu(pre);
            let f = g.add(x_in, act);
            let f = inject(g, k, f);
            feats.push(f);
        }
        feats
    }

    /// Builds the full evaluation on `g`; returns `(noise_pred, base features)`.
    pub(crate) fn build(
        &self,
        g: &mut Graph,
        input: &DenoiseInput,
        tr: &dyn Fn(Group) -> bool,
    ) -> Result<(Var, Vec<Var>), DiffusionError> {
        self.check_input(input)?;
        let z = g.input(input.z_t.clone());

        let inpaint_feats = match input.inpaint {
            Some(ip) => {
                let zm = g.input(ip.z_masked.clone());
                let m = g.input(ip.mask.clone());
                let x = g.concat(&[z, zm, m]);
                Some(self.run_net(g, &self.inpaint, x, input.t, None, tr, &mut |_, _, f| f))
            }
            None => None,
        };
        let control_feats = match input.control {
            Some(cond) => {
                let c = g.input(cond.clone());
                let x = g.concat(&[z, c]);
                Some(self.run_net(g, &self.control, x, input.t, None, tr, &mut |_, _, f| f))
            }
            None => None,
        };

        let half = self.spec.half();
        let (w_i, w_c) = (self.w_inpaint, self.w_control);
        let mut inject = |g: &mut Graph, k: usize, mut f: Var| -> Var {
            if let Some(feats) = &inpaint_feats {
                let zc = self.conv(g, &self.inpaint_zero[k - 1], feats[k - 1], tr);
                let s = g.scale(zc, w_i);
                f = g.add(f, s);
            }
            if let Some(feats) = &control_feats {
                if k > half {
                    let i = k - half;
                    let zc = self.conv(g, &self.control_zero[i - 1], feats[i - 1], tr);
                    let s = g.scale(zc, w_c);
                    f = g.add(f, s);
                }
            }
            f
        };
        let feats = self.run_net(g, &self.base, z, input.t, Some(input.tokens), tr, &mut inject);
        let head = self.base.head.as_ref().expect("base has a head");
        let last = *feats.last().expect("n >= 2");
        let out = self.conv(g, head, last, tr);
        Ok((out, feats))
    }

    fn evaluate(&self, input: &DenoiseInput) -> Result<ForwardOutput, DiffusionError> {
        let mut g = Graph::new();
        let (out, feats) = self.build(&mut g, input, &|_| false)?;
        Ok(ForwardOutput {
            noise_pred: g.value(out).clone(),
            features: feats.iter().map(|&f| g.value(f).clone()).collect(),
        })
    }

    /// Base network only: `F(z_t, τ, t; Θ)`.
    pub fn forward_base(&self, z_t: &Tensor, tokens: &TokenCondition, t: f64) -> Result<ForwardOutput, DiffusionError> {
        self.evaluate(&DenoiseInput {
            z_t,
            t,
            tokens,
            inpaint: None,
            control: None,
        })
    }

    /// Base network with inpainting features added to every layer.
    pub fn inject_inpaint(
        &self,
        z_t: &Tensor,
        inpaint: &InpaintInput,
        tokens: &TokenCondition,
        t: f64,
    ) -> Result<ForwardOutput, DiffusionError> {
        self.evaluate(&DenoiseInput {
            z_t,
            t,
            tokens,
            inpaint: Some(inpaint),
            control: None,
        })
    }

    /// Base network with control features added to the middle and decoder layers.
    pub fn inject_control(
        &self,
        z_t: &Tensor,
        cond: &Tensor,
        tokens: &TokenCondition,
        t: f64,
    ) -> Result<ForwardOutput, DiffusionError> {
        self.evaluate(&DenoiseInput {
            z_t,
            t,
            tokens,
            inpaint: None,
            control: Some(cond),
        })
    }

    /// Whatever combination of branches `input` supplies.
    pub fn forward(&self, input: &DenoiseInput) -> Result<ForwardOutput, DiffusionError> {
        self.evaluate(input)
    }

    /// Mean squared error against `target_noise` and gradients for every
    /// parameter whose group `trainable` accepts.
    pub fn loss_and_grads(
        &self,
        input: &DenoiseInput,
        target_noise: &Tensor,
        trainable: &dyn Fn(Group) -> bool,
    ) -> Result<(f64, Grads), DiffusionError> {
        let mut g = Graph::new();
        let (out, _) = self.build(&mut g, input, trainable)?;
        let pred = g.value(out);
        if pred.shape != target_noise.shape {
            return Err(DiffusionError::Shape("noise target shape".into()));
        }
        let n = pred.len() as f64;
        let loss = pred.mean_squared_error(target_noise);
        let seed = Tensor::new(
            pred.shape.clone(),
            pred.data.iter().zip(&target_noise.data).map(|(p, e)| 2.0 * (p - e) / n).collect(),
        );
        let grads = g.backward(out, seed, self.params.len());
        Ok((loss, grads))
    }

    pub(crate) fn from_parts(
        spec: UNetSpec,
        num_train_steps: usize,
        stored: ParamStore,
        w_inpaint: f64,
        w_control: f64,
    ) -> Result<Self, DiffusionError> {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        let mut model = Self::new(spec, num_train_steps, &mut rng)?;
        if model.params.len() != stored.len() {
            return Err(DiffusionError::Checkpoint("parameter count mismatch".into()));
        }
        for id in model.params.ids().collect::<Vec<_>>() {
            let other = stored.find(model.params.name(id)).ok_or_else(|| {
                DiffusionError::Checkpoint(format!("missing parameter {}", model.params.name(id)))
            })?;
            if stored.get(other).shape != model.params.get(id).shape {
                return Err(DiffusionError::Checkpoint(format!("shape mismatch for {}", model.params.name(id))));
            }
            *model.params.get_mut(id) = stored.get(other).clone();
        }
        model.w_inpaint = w_inpaint;
        model.w_control = w_control;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small(n: usize) -> DualBranchModel {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        DualBranchModel::new(UNetSpec::new(n, 6, 5), 1000, &mut rng).unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(UNetSpec::new(3, 4, 4).validate().is_err());
        assert!(UNetSpec::new(0, 4, 4).validate().is_err());
        assert!(UNetSpec::new(4, 4, 4).validate().is_ok());
    }

    #[test]
    fn control_target_index() {
        let spec = UNetSpec::new(12, 4, 4);
        assert_eq!(spec.control_target(1), 7);
        assert_eq!(spec.control_layers(), 6);
    }

    #[test]
    fn feature_count_and_timestep_range() {
        let m = small(4);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z = Tensor::randn(&[5, 4, 4], 1.0, &mut rng);
        let tok = TokenCondition::empty();
        assert_eq!(m.forward_base(&z, &tok, 10.0).unwrap().features.len(), 4);
        assert!(matches!(
            m.forward_base(&z, &tok, 1000.0),
            Err(DiffusionError::TimestepOutOfRange { .. })
        ));
        assert!(m.forward_base(&z, &tok, -0.5).is_err());
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = small(4);
        let z = Tensor::zeros(&[5, 4, 4]);
        let bad = InpaintInput {
            z_masked: Tensor::zeros(&[5, 4, 4]),
            mask: Tensor::zeros(&[2, 4, 4]),
        };
        let tok = TokenCondition::empty();
        assert!(matches!(m.inject_inpaint(&z, &bad, &tok, 1.0), Err(DiffusionError::Shape(_))));
        assert!(m.inject_control(&z, &Tensor::zeros(&[3, 4, 4]), &tok, 1.0).is_err());
    }

    #[test]
    fn branches_start_as_clones_with_zero_convs() {
        let m = small(4);
        let p = m.params();
        let base_conv = p.get(p.find("base.layer1.conv.w").unwrap());
        assert_eq!(p.get(p.find("inpaint.layer1.conv.w").unwrap()), base_conv);
        assert_eq!(p.get(p.find("control.layer1.conv.w").unwrap()), base_conv);
        let (zi, zc) = m.zero_conv_params();
        assert!(zi.iter().chain(&zc).all(|&id| p.get(id).data.iter().all(|&v| v == 0.0)));
        assert!(p.find("inpaint.token_table").is_none());
    }
}
