use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Activation;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Char,
    Word,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Char => "char",
            ModelKind::Word => "word",
        }
    }

    pub fn parse(s: &str) -> Option<ModelKind> {
        match s {
            "char" => Some(ModelKind::Char),
            "word" => Some(ModelKind::Word),
            _ => None,
        }
    }
}

/// Architecture hyperparameters for both model kinds.
///
/// For `Char`, `query_len`/`ad_len` are character lengths and
/// `input_channels` is the alphabet size. For `Word` they are word lengths
/// and the embedding dimension, and `subnet_filters`/`lead_activation` are
/// unused.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub query_len: usize,
    pub ad_len: usize,
    pub input_channels: usize,
    pub subnet_filters: usize,
    pub lead_activation: Activation,
    pub cross_filters: usize,
    pub cross_activation: Activation,
    pub cross_pool: usize,
    pub final_filters: [usize; 2],
    pub final_pools: [usize; 2],
    pub dense: [usize; 2],
    pub seed: u64,
}

/// Every intermediate shape implied by a config.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Shapes {
    /// Rows and channels of the query representation entering the cross operator.
    pub query: (usize, usize),
    pub ad: (usize, usize),
    /// Rows and channels of the cross product.
    pub cross_product: (usize, usize),
    pub cross_conv: (usize, usize),
    pub cross_pooled: (usize, usize),
    pub stage_outputs: [(usize, usize); 2],
    pub flatten: usize,
}

/// Rows consumed by a subnet: one lead conv and two conv blocks.
pub const SUBNET_SHRINK: usize = 10;
/// Rows consumed by a conv block.
pub const BLOCK_SHRINK: usize = 4;

impl ModelConfig {
    /// Full-size character model: 35/140 characters, 64/128 filters.
    pub fn char_default() -> Self {
        ModelConfig {
            kind: ModelKind::Char,
            query_len: 35,
            ad_len: 140,
            input_channels: 47,
            subnet_filters: 64,
            lead_activation: Activation::Identity,
            cross_filters: 128,
            cross_activation: Activation::Relu,
            cross_pool: 4,
            final_filters: [128, 128],
            final_pools: [2, 2],
            dense: [512, 256],
            seed: 1,
        }
    }

    /// Full-size word model: 7 query words, 40 ad words, 50-d vectors.
    pub fn word_default() -> Self {
        ModelConfig {
            kind: ModelKind::Word,
            query_len: 7,
            ad_len: 40,
            input_channels: 50,
            subnet_filters: 0,
            lead_activation: Activation::Identity,
            cross_filters: 128,
            cross_activation: Activation::Relu,
            cross_pool: 2,
            final_filters: [128, 128],
            final_pools: [2, 2],
            dense: [512, 256],
            seed: 1,
        }
    }

    /// Desk-scale character model: same input lengths and stage structure,
    /// narrow layers, and a wider cross pool so the later stages see fewer
    /// rows.
    pub fn char_desk() -> Self {
        ModelConfig {
            subnet_filters: 8,
            cross_filters: 16,
            cross_pool: 8,
            final_filters: [16, 16],
            dense: [32, 16],
            ..Self::char_default()
        }
    }

    pub fn word_desk() -> Self {
        ModelConfig {
            input_channels: 16,
            cross_filters: 16,
            final_filters: [16, 16],
            dense: [32, 16],
            ..Self::word_default()
        }
    }

    /// Smallest character config that exercises every stage; used for
    /// gradient checks.
    pub fn char_toy() -> Self {
        ModelConfig {
            kind: ModelKind::Char,
            query_len: 13,
            ad_len: 16,
            input_channels: 4,
            subnet_filters: 2,
            lead_activation: Activation::Identity,
            cross_filters: 2,
            cross_activation: Activation::Relu,
            cross_pool: 1,
            final_filters: [2, 2],
            final_pools: [2, 2],
            dense: [3, 2],
            seed: 7,
        }
    }

    pub fn word_toy() -> Self {
        ModelConfig {
            kind: ModelKind::Word,
            query_len: 5,
            ad_len: 7,
            input_channels: 3,
            subnet_filters: 0,
            cross_pool: 2,
            ..Self::char_toy()
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Char => Self::char_default(),
            ModelKind::Word => Self::word_default(),
        }
    }

    pub fn desk_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::Char => Self::char_desk(),
            ModelKind::Word => Self::word_desk(),
        }
    }

    /// Checks every count and derived shape, listing all problems at once.
    pub fn validate(&self) -> Result<Shapes> {
        let mut errs = Vec::new();
        let mut positive = |name: &str, v: usize| {
            if v == 0 {
                errs.push(format!("{name} must be at least 1"));
            }
        };
        positive("query_len", self.query_len);
        positive("ad_len", self.ad_len);
        positive("input_channels", self.input_channels);
        positive("cross_filters", self.cross_filters);
        positive("cross_pool", self.cross_pool);
        positive("final_filters[0]", self.final_filters[0]);
        positive("final_filters[1]", self.final_filters[1]);
        positive("final_pools[0]", self.final_pools[0]);
        positive("final_pools[1]", self.final_pools[1]);
        positive("dense[0]", self.dense[0]);
        positive("dense[1]", self.dense[1]);
        match self.kind {
            ModelKind::Char => positive("subnet_filters", self.subnet_filters),
            ModelKind::Word => {
                if self.cross_pool != 2 || self.final_pools != [2, 2] {
                    errs.push("word models use pool size 2 everywhere".into());
                }
            }
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let shapes = self.shapes();
        match shapes {
            Some(s) => Ok(s),
            None => Err(Error::Config(vec![format!(
                "input lengths {}/{} are too short for the configured stages",
                self.query_len, self.ad_len
            )])),
        }
    }

    fn shapes(&self) -> Option<Shapes> {
        let (query, ad) = match self.kind {
            ModelKind::Char => {
                let k = self.query_len.checked_sub(SUBNET_SHRINK).filter(|&k| k >= 1)?;
                let m = self.ad_len.checked_sub(SUBNET_SHRINK).filter(|&m| m >= 1)?;
                ((k, self.subnet_filters), (m, self.subnet_filters))
            }
            ModelKind::Word => ((self.query_len, self.input_channels), (self.ad_len, self.input_channels)),
        };
        let cross_product = (query.0 * ad.0, query.1 + ad.1);
        let conv_rows = cross_product.0.checked_sub(2).filter(|&n| n >= 1)?;
        let pooled = conv_rows / self.cross_pool;
        let mut rows = pooled;
        let mut stage_outputs = [(0, 0); 2];
        for s in 0..2 {
            rows = rows.checked_sub(BLOCK_SHRINK).filter(|&n| n >= 1)? / self.final_pools[s];
            if rows == 0 {
                return None;
            }
            stage_outputs[s] = (rows, self.final_filters[s]);
        }
        Some(Shapes {
            query,
            ad,
            cross_product,
            cross_conv: (conv_rows, self.cross_filters),
            cross_pooled: (pooled, self.cross_filters),
            stage_outputs,
            flatten: rows * self.final_filters[1],
        })
    }

    pub fn query_input_shape(&self) -> (usize, usize) {
        (self.query_len, self.input_channels)
    }

    pub fn ad_input_shape(&self) -> (usize, usize) {
        (self.ad_len, self.input_channels)
    }
}

/// Learnable scalar count, computed in closed form from the config.
pub fn count_parameters(config: &ModelConfig) -> Result<usize> {
    let shapes = config.validate()?;
    let conv = |c: usize, f: usize| 3 * c * f + f;
    let bn = |c: usize| 2 * c;
    let block = |c: usize, f: usize| conv(c, f) + bn(f) + conv(f, f) + bn(f);
    let dense = |i: usize, o: usize| i * o + o;

    let mut total = 0;
    if config.kind == ModelKind::Char {
        let s = config.subnet_filters;
        let subnet = conv(config.input_channels, s) + 2 * block(s, s);
        total += 2 * subnet;
    }
    total += conv(shapes.cross_product.1, config.cross_filters);
    total += block(config.cross_filters, config.final_filters[0]);
    total += block(config.final_filters[0], config.final_filters[1]);
    total += dense(shapes.flatten, config.dense[0]);
    total += dense(config.dense[0], config.dense[1]);
    total += dense(config.dense[1], 1);
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_lengths_give_expected_shapes() {
        let s = ModelConfig::char_default().validate().unwrap();
        assert_eq!(s.query, (25, 64));
        assert_eq!(s.ad, (130, 64));
        assert_eq!(s.cross_product, (3250, 128));
        let w = ModelConfig::word_default().validate().unwrap();
        assert_eq!(w.cross_product, (280, 100));
        assert_eq!(w.cross_conv.0, 278);
    }

    #[test]
    fn rejects_short_inputs_and_zero_counts() {
        let mut c = ModelConfig::char_desk();
        c.query_len = 6;
        c.ad_len = 8;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ModelConfig::char_desk();
        c.cross_filters = 0;
        c.dense = [0, 3];
        match c.validate() {
            Err(Error::Config(errs)) => assert_eq!(errs.len(), 2),
            other => panic!("{other:?}"),
        }
        let mut w = ModelConfig::word_desk();
        w.final_pools = [2, 3];
        assert!(w.validate().is_err());
    }

    #[test]
    fn single_conv_count() {
        // 2 filters over 3 channels: 2*9 weights + 2 biases.
        let conv = |c: usize, f: usize| 3 * c * f + f;
        assert_eq!(conv(3, 2), 20);
    }
}
