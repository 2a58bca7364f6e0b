use crate::error::{Error, Result};
use crate::kv::{fmt_f64, KvFile};

/// Architecture of a ConvCNP. Coordinates are model (normalised) coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Data domain the grid must cover, per axis.
    pub domain_lo: Vec<f64>,
    pub domain_hi: Vec<f64>,
    /// Extra grid extent added on every side of the data domain.
    pub margin: f64,
    /// Internal grid points per unit.
    pub ppu: usize,
    pub encoder_lengthscale: f64,
    pub decoder_lengthscale: f64,
    pub unet_depth: usize,
    pub unet_channels: usize,
    pub kernel_size: usize,
    pub n_context_sets: usize,
    pub n_aux_channels: usize,
    pub film_enabled: bool,
    pub min_sigma: f64,
}

impl ModelConfig {
    /// 1D GP model: raw domain [−2.5, 2.5] at 64 points per raw unit. With the
    /// [−2, 2] → [0, 1] coordinate normaliser this is 256 points per model unit.
    pub fn desk_1d() -> Self {
        let ppu = 256;
        ModelConfig {
            input_dim: 1,
            domain_lo: vec![0.0],
            domain_hi: vec![1.0],
            margin: 0.125,
            ppu,
            encoder_lengthscale: 1.0 / ppu as f64,
            decoder_lengthscale: 1.0 / ppu as f64,
            unet_depth: 4,
            unet_channels: 32,
            kernel_size: 5,
            n_context_sets: 1,
            n_aux_channels: 0,
            film_enabled: true,
            min_sigma: 1e-3,
        }
    }

    /// 2D station model on the unit square with static aux field and coordinates.
    pub fn desk_2d() -> Self {
        let ppu = 128;
        ModelConfig {
            input_dim: 2,
            domain_lo: vec![0.0, 0.0],
            domain_hi: vec![1.0, 1.0],
            margin: 0.125,
            ppu,
            encoder_lengthscale: 1.0 / ppu as f64,
            decoder_lengthscale: 1.0 / ppu as f64,
            unet_depth: 4,
            unet_channels: 32,
            kernel_size: 5,
            n_context_sets: 1,
            n_aux_channels: 3,
            film_enabled: true,
            min_sigma: 1e-3,
        }
    }

    /// A cheaper 2D model that fits a single CPU core's budget.
    pub fn compact_2d() -> Self {
        let ppu = 32;
        ModelConfig {
            ppu,
            encoder_lengthscale: 1.0 / ppu as f64,
            decoder_lengthscale: 1.0 / ppu as f64,
            unet_depth: 3,
            unet_channels: 16,
            ..Self::desk_2d()
        }
    }

    /// Full-size temperature model: 6 levels of 96 channels at 200 points per
    /// unit. Eight gridded auxiliary inputs give ten input channels.
    pub fn full() -> Self {
        let ppu = 200;
        ModelConfig {
            ppu,
            encoder_lengthscale: 1.0 / ppu as f64,
            decoder_lengthscale: 1.0 / ppu as f64,
            unet_depth: 6,
            unet_channels: 96,
            n_aux_channels: 8,
            ..Self::desk_2d()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk_1d" => Ok(Self::desk_1d()),
            "desk_2d" => Ok(Self::desk_2d()),
            "compact_2d" => Ok(Self::compact_2d()),
            "full" => Ok(Self::full()),
            other => Err(Error::config(format!("unknown model preset `{other}`"))),
        }
    }

    pub fn n_input_channels(&self) -> usize {
        2 * self.n_context_sets + self.n_aux_channels
    }

    pub fn grid_spacing(&self) -> f64 {
        1.0 / self.ppu as f64
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::config(m.to_string()));
        if !(1..=2).contains(&self.input_dim) {
            return fail("input_dim must be 1 or 2");
        }
        if self.domain_lo.len() != self.input_dim || self.domain_hi.len() != self.input_dim {
            return fail("domain bounds must have input_dim entries");
        }
        if self.domain_lo.iter().zip(&self.domain_hi).any(|(l, h)| !(h > l)) {
            return fail("empty model domain");
        }
        if self.ppu == 0 || self.unet_depth == 0 || self.unet_channels == 0 || self.n_context_sets == 0 {
            return fail("ppu, unet_depth, unet_channels and n_context_sets must be positive");
        }
        if self.kernel_size % 2 == 0 {
            return fail("kernel_size must be odd");
        }
        if !(self.encoder_lengthscale > 0.0 && self.decoder_lengthscale > 0.0 && self.min_sigma > 0.0) {
            return fail("lengthscales and min_sigma must be positive");
        }
        if !(self.margin >= 0.0) {
            return fail("margin must be non-negative");
        }
        Ok(())
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::new();
        kv.set("input_dim", self.input_dim);
        kv.set_list("domain_lo", &self.domain_lo.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>());
        kv.set_list("domain_hi", &self.domain_hi.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>());
        kv.set("margin", fmt_f64(self.margin));
        kv.set("ppu", self.ppu);
        kv.set("encoder_lengthscale", fmt_f64(self.encoder_lengthscale));
        kv.set("decoder_lengthscale", fmt_f64(self.decoder_lengthscale));
        kv.set("unet_depth", self.unet_depth);
        kv.set("unet_channels", self.unet_channels);
        kv.set("kernel_size", self.kernel_size);
        kv.set("n_context_sets", self.n_context_sets);
        kv.set("n_aux_channels", self.n_aux_channels);
        kv.set("film_enabled", self.film_enabled);
        kv.set("min_sigma", fmt_f64(self.min_sigma));
        kv
    }

    /// Reads a config; a `preset` key supplies defaults that other keys override.
    /// Lengthscales default to `1/ppu` when not given.
    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        let base = match kv.raw("preset") {
            Some(name) => Self::preset(name)?,
            None => Self {
                input_dim: kv.get("input_dim")?,
                ..Self::desk_1d()
            },
        };
        let ppu = kv.get_or("ppu", base.ppu)?;
        let default_ls = if kv.contains("ppu") { 1.0 / ppu as f64 } else { base.encoder_lengthscale };
        let cfg = ModelConfig {
            input_dim: kv.get_or("input_dim", base.input_dim)?,
            domain_lo: kv.get_list_or("domain_lo", base.domain_lo.clone())?,
            domain_hi: kv.get_list_or("domain_hi", base.domain_hi.clone())?,
            margin: kv.get_or("margin", base.margin)?,
            ppu,
            encoder_lengthscale: kv.get_or("encoder_lengthscale", default_ls)?,
            decoder_lengthscale: kv.get_or(
                "decoder_lengthscale",
                if kv.contains("ppu") { 1.0 / ppu as f64 } else { base.decoder_lengthscale },
            )?,
            unet_depth: kv.get_or("unet_depth", base.unet_depth)?,
            unet_channels: kv.get_or("unet_channels", base.unet_channels)?,
            kernel_size: kv.get_or("kernel_size", base.kernel_size)?,
            n_context_sets: kv.get_or("n_context_sets", base.n_context_sets)?,
            n_aux_channels: kv.get_or("n_aux_channels", base.n_aux_channels)?,
            film_enabled: kv.get_or("film_enabled", base.film_enabled)?,
            min_sigma: kv.get_or("min_sigma", base.min_sigma)?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
