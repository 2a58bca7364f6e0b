//! U-Net backbone: `depth` stride-2 convolutions down, `depth` nearest
//! upsample + convolution steps up with concatenated skips, and a 1×1 linear
//! head producing two channels (raw mean, raw pre-std).
//!
//! Every convolution input (including the head's) passes through its own
//! FiLM layer when FiLM is enabled.

use matrixmultiply::dgemm;
use rand::Rng as _;

use super::config::ModelConfig;
use super::layers::{film_backward, ConvGeom, Upsample};
use super::params::{ParamGroup, ParameterSet};
use crate::rng::Rng;

pub(crate) const OUT_CHANNELS: usize = 2;

#[derive(Clone, Copy, Debug)]
struct Slots {
    weight: usize,
    bias: usize,
    gamma: Option<usize>,
    beta: Option<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct UNet {
    pub n_in: usize,
    pub channels: usize,
    /// Grid nodes at each resolution level (level 0 = full grid).
    pub n_at: Vec<usize>,
    /// `down[l]`: level `l` → level `l + 1`.
    down: Vec<ConvGeom>,
    /// `up[l]`: convolution at level `l` applied after upsampling from `l + 1`.
    up: Vec<ConvGeom>,
    upsample: Vec<Upsample>,
    down_slots: Vec<Slots>,
    up_slots: Vec<Slots>,
    head: Slots,
}

/// Activations retained for the backward pass.
pub(crate) struct Cache {
    down_in: Vec<Vec<f64>>,
    /// Conv inputs after FiLM.
    down_conv_in: Vec<Vec<f64>>,
    /// Post-ReLU outputs `h` at levels 1..=depth (index `l` holds level `l + 1`).
    down_out: Vec<Vec<f64>>,
    up_in: Vec<Vec<f64>>,
    /// Upsampled conv inputs.
    up_fine: Vec<Vec<f64>>,
    /// Post-ReLU outputs `o` at level `l`.
    up_out: Vec<Vec<f64>>,
    head_in: Vec<f64>,
}

impl UNet {
    pub fn new(cfg: &ModelConfig, grid_shape: &[usize]) -> (Self, ParameterSet) {
        let depth = cfg.unet_depth;
        let c = cfg.unet_channels;
        let n_in = cfg.n_input_channels();
        let k = cfg.kernel_size;
        let shapes: Vec<Vec<usize>> = (0..=depth)
            .map(|l| grid_shape.iter().map(|n| n >> l).collect())
            .collect();
        let down: Vec<ConvGeom> = (0..depth)
            .map(|l| ConvGeom::new(&shapes[l], 2, k, if l == 0 { n_in } else { c }, c))
            .collect();
        let up_cin = |l: usize| if l == depth - 1 { c } else { 2 * c };
        let up: Vec<ConvGeom> = (0..depth).map(|l| ConvGeom::new(&shapes[l], 1, k, up_cin(l), c)).collect();
        let upsample = (0..depth).map(|l| Upsample::new(&shapes[l + 1])).collect();

        let mut specs = Vec::new();
        let mut push = |name: String, group, shape: Vec<usize>| {
            specs.push((name, group, shape));
            specs.len() - 1
        };
        let mut down_slots = Vec::new();
        for (l, g) in down.iter().enumerate() {
            let weight = push(format!("down{l}.weight"), ParamGroup::Backbone, vec![c, g.cin, g.taps]);
            let bias = push(format!("down{l}.bias"), ParamGroup::Backbone, vec![c]);
            down_slots.push(Slots { weight, bias, gamma: None, beta: None });
        }
        let mut up_slots = vec![Slots { weight: 0, bias: 0, gamma: None, beta: None }; depth];
        for l in (0..depth).rev() {
            let g = &up[l];
            up_slots[l].weight = push(format!("up{l}.weight"), ParamGroup::Backbone, vec![c, g.cin, g.taps]);
            up_slots[l].bias = push(format!("up{l}.bias"), ParamGroup::Backbone, vec![c]);
        }
        let mut head = Slots {
            weight: push("head.weight".into(), ParamGroup::Backbone, vec![OUT_CHANNELS, c]),
            bias: push("head.bias".into(), ParamGroup::Backbone, vec![OUT_CHANNELS]),
            gamma: None,
            beta: None,
        };
        if cfg.film_enabled {
            for (l, g) in down.iter().enumerate() {
                down_slots[l].gamma = Some(push(format!("film.down{l}.gamma"), ParamGroup::Film, vec![g.cin]));
                down_slots[l].beta = Some(push(format!("film.down{l}.beta"), ParamGroup::Film, vec![g.cin]));
            }
            for l in (0..depth).rev() {
                let cin = up[l].cin;
                up_slots[l].gamma = Some(push(format!("film.up{l}.gamma"), ParamGroup::Film, vec![cin]));
                up_slots[l].beta = Some(push(format!("film.up{l}.beta"), ParamGroup::Film, vec![cin]));
            }
            head.gamma = Some(push("film.head.gamma".into(), ParamGroup::Film, vec![c]));
            head.beta = Some(push("film.head.beta".into(), ParamGroup::Film, vec![c]));
        }
        let params = ParameterSet::from_specs(specs);
        let net = UNet {
            n_in,
            channels: c,
            n_at: shapes.iter().map(|s| s.iter().product()).collect(),
            down,
            up,
            upsample,
            down_slots,
            up_slots,
            head,
        };
        let mut params = params;
        net.reset_film(&mut params);
        (net, params)
    }

    pub fn depth(&self) -> usize {
        self.down.len()
    }

    /// Fan-in-scaled uniform weights, zero biases, identity FiLM.
    pub fn init_params(&self, params: &mut ParameterSet, rng: &mut Rng) {
        let convs = self.down.iter().zip(&self.down_slots).chain(self.up.iter().zip(&self.up_slots));
        let mut plan: Vec<(usize, usize, f64)> = convs
            .map(|(g, s)| (s.weight, s.bias, (6.0 / (g.cin * g.taps) as f64).sqrt()))
            .collect();
        plan.push((self.head.weight, self.head.bias, (3.0 / self.channels as f64).sqrt()));
        plan.sort_by_key(|p| p.0);
        for (w, b, bound) in plan {
            let range = params.specs()[w].range();
            for v in &mut params.values_mut()[range] {
                *v = rng.random_range(-bound..bound);
            }
            let range = params.specs()[b].range();
            params.values_mut()[range].fill(0.0);
        }
        self.reset_film(params);
    }

    pub fn reset_film(&self, params: &mut ParameterSet) {
        let slots = self.down_slots.iter().chain(&self.up_slots).chain(std::iter::once(&self.head));
        for s in slots {
            if let (Some(g), Some(b)) = (s.gamma, s.beta) {
                let r = params.specs()[g].range();
                params.values_mut()[r].fill(1.0);
                let r = params.specs()[b].range();
                params.values_mut()[r].fill(0.0);
            }
        }
    }

    /// Receptive-field radius of the backbone in full-resolution grid nodes
    /// (per axis): an input node farther than this from an output node
    /// cannot influence it.
    pub fn receptive_field_radius(&self, kernel_size: usize) -> usize {
        let half = kernel_size / 2;
        let depth = self.depth();
        // h at level l+1 reads level-l nodes within ±half, i.e. ±half·2^l full-res nodes
        let mut r_down = vec![0usize; depth + 1];
        for l in 0..depth {
            r_down[l + 1] = r_down[l] + half * (1 << l);
        }
        // nearest upsampling from level l+1 shifts by at most 2^l nodes
        let mut r = r_down[depth];
        for l in (0..depth).rev() {
            let input = if l == depth - 1 { r } else { r.max(r_down[l + 1]) };
            r = input + (half + 1) * (1 << l);
        }
        r
    }

    fn apply_film(params: &ParameterSet, slots: &Slots, x: &[f64]) -> Option<Vec<f64>> {
        let (g, b) = (slots.gamma?, slots.beta?);
        let (gamma, beta) = (params.slot(g), params.slot(b));
        let n = x.len() / gamma.len();
        let mut out = Vec::with_capacity(x.len());
        for (c, chunk) in x.chunks_exact(n).enumerate() {
            out.extend(chunk.iter().map(|v| gamma[c] * v + beta[c]));
        }
        Some(out)
    }

    /// Returns the `[2, n_nodes]` head output.
    pub fn forward(&self, params: &ParameterSet, input: &[f64]) -> (Vec<f64>, Cache) {
        let depth = self.depth();
        let mut cache = Cache {
            down_in: Vec::with_capacity(depth),
            down_conv_in: Vec::with_capacity(depth),
            down_out: Vec::with_capacity(depth),
            up_in: vec![Vec::new(); depth],
            up_fine: vec![Vec::new(); depth],
            up_out: vec![Vec::new(); depth],
            head_in: Vec::new(),
        };
        let mut x = input.to_vec();
        for l in 0..depth {
            let s = &self.down_slots[l];
            let g = &self.down[l];
            let a = Self::apply_film(params, s, &x);
            let mut h = g.forward(params.slot(s.weight), params.slot(s.bias), a.as_deref().unwrap_or(&x));
            relu(&mut h);
            cache.down_conv_in.push(a.unwrap_or_default());
            cache.down_in.push(std::mem::replace(&mut x, h.clone()));
            cache.down_out.push(h);
        }
        for l in (0..depth).rev() {
            let u = if l == depth - 1 {
                cache.down_out[l].clone()
            } else {
                let mut u = cache.up_out[l + 1].clone();
                u.extend_from_slice(&cache.down_out[l]);
                u
            };
            let s = &self.up_slots[l];
            let g = &self.up[l];
            let a = Self::apply_film(params, s, &u);
            let fine = self.upsample[l].forward(a.as_deref().unwrap_or(&u), g.cin);
            let mut o = g.forward(params.slot(s.weight), params.slot(s.bias), &fine);
            relu(&mut o);
            cache.up_in[l] = u;
            cache.up_fine[l] = fine;
            cache.up_out[l] = o;
        }
        let o0 = &cache.up_out[0];
        let a = Self::apply_film(params, &self.head, o0);
        let a = a.as_deref().unwrap_or(o0);
        let n = self.n_at[0];
        let mut out = vec![0.0; OUT_CHANNELS * n];
        let bias = params.slot(self.head.bias);
        for (ch, row) in out.chunks_exact_mut(n).enumerate() {
            row.fill(bias[ch]);
        }
        unsafe {
            dgemm(
                OUT_CHANNELS, self.channels, n, 1.0,
                params.slot(self.head.weight).as_ptr(), self.channels as isize, 1,
                a.as_ptr(), n as isize, 1,
                1.0,
                out.as_mut_ptr(), n as isize, 1,
            );
        }
        cache.head_in = o0.clone();
        (out, cache)
    }

    /// Accumulates parameter gradients into `grad` (aligned with `params`).
    pub fn backward(&self, params: &ParameterSet, cache: &Cache, d_out: &[f64], grad: &mut [f64]) {
        let depth = self.depth();
        let n = self.n_at[0];
        let c = self.channels;
        let specs = params.specs();

        // head
        let head_a = Self::apply_film(params, &self.head, &cache.head_in);
        let head_a = head_a.as_deref().unwrap_or(&cache.head_in);
        {
            let (w_range, b_range) = (specs[self.head.weight].range(), specs[self.head.bias].range());
            for (ch, row) in d_out.chunks_exact(n).enumerate() {
                grad[b_range.start + ch] += row.iter().sum::<f64>();
            }
            unsafe {
                dgemm(
                    OUT_CHANNELS, n, c, 1.0,
                    d_out.as_ptr(), n as isize, 1,
                    head_a.as_ptr(), 1, n as isize,
                    1.0,
                    grad[w_range].as_mut_ptr(), c as isize, 1,
                );
            }
        }
        let mut d_a = vec![0.0; c * n];
        unsafe {
            dgemm(
                c, OUT_CHANNELS, n, 1.0,
                params.slot(self.head.weight).as_ptr(), 1, c as isize,
                d_out.as_ptr(), n as isize, 1,
                0.0,
                d_a.as_mut_ptr(), n as isize, 1,
            );
        }
        let mut d_o = self.film_grad(params, &self.head, &cache.head_in, d_a, grad);

        // up path, finest level first
        let mut d_h: Vec<Vec<f64>> = cache.down_out.iter().map(|h| vec![0.0; h.len()]).collect();
        for l in 0..depth {
            relu_backward(&mut d_o, &cache.up_out[l]);
            let s = &self.up_slots[l];
            let g = &self.up[l];
            let (wr, br) = (specs[s.weight].range(), specs[s.bias].range());
            let (gw, gb) = split_two(grad, wr, br);
            let d_fine = g
                .backward(params.slot(s.weight), &cache.up_fine[l], &d_o, gw, gb, true)
                .expect("input gradient requested");
            let d_a = self.upsample[l].backward(&d_fine, g.cin);
            let d_u = self.film_grad(params, s, &cache.up_in[l], d_a, grad);
            let m = self.n_at[l + 1];
            if l == depth - 1 {
                add_into(&mut d_h[l], &d_u);
                d_o = Vec::new();
            } else {
                add_into(&mut d_h[l], &d_u[c * m..]);
                d_o = d_u[..c * m].to_vec();
            }
        }

        // down path, coarsest level first
        for l in (0..depth).rev() {
            let mut d = std::mem::take(&mut d_h[l]);
            relu_backward(&mut d, &cache.down_out[l]);
            let s = &self.down_slots[l];
            let g = &self.down[l];
            let (wr, br) = (specs[s.weight].range(), specs[s.bias].range());
            let (gw, gb) = split_two(grad, wr, br);
            let need_input = l > 0 || s.gamma.is_some();
            let conv_in = if s.gamma.is_some() { &cache.down_conv_in[l] } else { &cache.down_in[l] };
            if let Some(d_a) = g.backward(params.slot(s.weight), conv_in, &d, gw, gb, need_input) {
                let d_x = self.film_grad(params, s, &cache.down_in[l], d_a, grad);
                if l > 0 {
                    add_into(&mut d_h[l - 1], &d_x);
                }
            }
        }
    }

    /// FiLM backward when the site exists; identity pass-through otherwise.
    fn film_grad(&self, params: &ParameterSet, s: &Slots, input: &[f64], d_a: Vec<f64>, grad: &mut [f64]) -> Vec<f64> {
        match (s.gamma, s.beta) {
            (Some(g), Some(b)) => {
                let specs = params.specs();
                let (gr, br) = (specs[g].range(), specs[b].range());
                let (dg, db) = split_two(grad, gr, br);
                film_backward(input, params.slot(g), &d_a, dg, db)
            }
            _ => d_a,
        }
    }
}

fn relu(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

fn relu_backward(d: &mut [f64], out: &[f64]) {
    for (g, &o) in d.iter_mut().zip(out) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

/// Two disjoint mutable sub-slices of `grad`.
fn split_two(
    grad: &mut [f64],
    a: std::ops::Range<usize>,
    b: std::ops::Range<usize>,
) -> (&mut [f64], &mut [f64]) {
    assert!(a.end <= b.start || b.end <= a.start, "overlapping parameter ranges");
    if a.start < b.start {
        let (lo, hi) = grad.split_at_mut(b.start);
        (&mut lo[a], &mut hi[..b.end - b.start])
    } else {
        let (lo, hi) = grad.split_at_mut(a.start);
        let len = a.end - a.start;
        (&mut hi[..len], &mut lo[b])
    }
}
