use serde::{Deserialize, Serialize};

use super::graph::{Graph, Network};
use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 7;
pub const INPUT_CHANNELS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DcnConfig {
    pub growth_rate: usize,
    pub layers_per_block: [usize; 4],
    /// Channel reduction of transition layers.
    pub compression: f64,
    pub input_size: usize,
    pub num_classes: usize,
    pub dropout_rate: f64,
    pub stem_channels: usize,
    /// Bottleneck 1×1 convs emit `bottleneck_factor · growth_rate` channels.
    pub bottleneck_factor: usize,
    /// Downsampling transitions between blocks.
    pub transitions: bool,
}

impl DcnConfig {
    pub fn new(layers_per_block: [usize; 4]) -> Self {
        Self {
            growth_rate: 12,
            layers_per_block,
            compression: 0.5,
            input_size: crate::saliency::DEFAULT_STACK_SIZE,
            num_classes: NUM_CLASSES,
            dropout_rate: 0.2,
            stem_channels: 24,
            bottleneck_factor: 4,
            transitions: true,
        }
    }

    /// Tiny variant used by tests and quick runs: 32×32 inputs.
    pub fn desk(layers_per_block: [usize; 4]) -> Self {
        Self {
            growth_rate: 4,
            input_size: 32,
            stem_channels: 8,
            ..Self::new(layers_per_block)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers_per_block.contains(&0) {
            return Err(Error::invalid("every dense block needs at least one layer"));
        }
        if self.num_classes != NUM_CLASSES {
            return Err(Error::invalid(format!("num_classes must be {NUM_CLASSES}, got {}", self.num_classes)));
        }
        if self.growth_rate == 0 || self.stem_channels == 0 || self.bottleneck_factor == 0 {
            return Err(Error::invalid("growth rate, stem width and bottleneck factor must be positive"));
        }
        if !(self.compression > 0.0 && self.compression <= 1.0) {
            return Err(Error::invalid(format!("compression {} outside (0, 1]", self.compression)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::invalid(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }
}

/// Densely connected sub-network; parameter names start with `prefix`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dcn {
    pub config: DcnConfig,
    pub prefix: String,
}

impl Dcn {
    /// Validates the config and runs shape inference, so an input that
    /// shrinks below 1×1 is rejected here.
    pub fn new(config: DcnConfig, prefix: &str) -> Result<Self> {
        config.validate()?;
        let dcn = Self {
            config,
            prefix: prefix.to_string(),
        };
        dcn.shape_graph()?;
        Ok(dcn)
    }

    fn dense_layer<G: Graph>(&self, g: &mut G, name: &str, x: G::Node) -> Result<G::Node> {
        let c = &self.config;
        let y = g.conv(&format!("{name}.conv1"), x, c.bottleneck_factor * c.growth_rate, 1, 1, 0)?;
        let y = g.batch_norm(&format!("{name}.bn1"), y)?;
        let y = g.relu(y)?;
        let y = g.conv(&format!("{name}.conv2"), y, c.growth_rate, 3, 1, 1)?;
        let y = g.batch_norm(&format!("{name}.bn2"), y)?;
        let y = g.relu(y)?;
        g.dropout(y, c.dropout_rate)
    }
}

impl Network for Dcn {
    fn name(&self) -> &str {
        if self.prefix.is_empty() {
            "dcn"
        } else {
            self.prefix.trim_end_matches('.')
        }
    }

    fn input_size(&self) -> usize {
        self.config.input_size
    }

    fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    fn build<G: Graph>(&self, g: &mut G, x: G::Node) -> Result<(G::Node, G::Node)> {
        let c = &self.config;
        let p = &self.prefix;
        let y = g.conv(&format!("{p}stem.conv"), x, c.stem_channels, 7, 2, 3)?;
        let y = g.batch_norm(&format!("{p}stem.bn"), y)?;
        let y = g.relu(y)?;
        let mut y = g.avg_pool(&format!("{p}stem.pool"), y, 3, 2, 1)?;
        for (b, &layers) in c.layers_per_block.iter().enumerate() {
            let mut features = vec![y];
            for l in 0..layers {
                let input = g.concat(&features)?;
                let out = self.dense_layer(g, &format!("{p}block{b}.layer{l}"), input)?;
                features.push(out);
            }
            y = g.concat(&features)?;
            if c.transitions && b + 1 < c.layers_per_block.len() {
                let name = format!("{p}transition{b}");
                let reduced = ((g.channels(y) as f64 * c.compression).floor() as usize).max(1);
                let t = g.conv(&format!("{name}.conv"), y, reduced, 1, 1, 0)?;
                let t = g.batch_norm(&format!("{name}.bn"), t)?;
                let t = g.relu(t)?;
                y = g.avg_pool(&format!("{name}.pool"), t, 2, 2, 0)?;
            }
        }
        let pooled = g.global_pool(&format!("{p}pool"), y)?;
        let logits = g.linear(&format!("{p}fc"), pooled, c.num_classes)?;
        Ok((y, logits))
    }
}
