use serde::{Deserialize, Serialize};

use super::dcn::NUM_CLASSES;
use super::graph::{Graph, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentConfig {
    pub widths: [usize; 3],
    pub stem_channels: usize,
    pub input_size: usize,
    pub num_classes: usize,
}

impl Default for StudentConfig {
    fn default() -> Self {
        Self {
            widths: [16, 32, 64],
            stem_channels: 16,
            input_size: crate::saliency::DEFAULT_STACK_SIZE,
            num_classes: NUM_CLASSES,
        }
    }
}

impl StudentConfig {
    pub fn desk() -> Self {
        Self {
            input_size: 32,
            ..Self::default()
        }
    }
}

/// Small residual network: stem, three residual layers, pool, linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Student {
    pub config: StudentConfig,
    pub prefix: String,
}

impl Student {
    pub fn new(config: StudentConfig, prefix: &str) -> Result<Self> {
        if config.widths.contains(&0) || config.stem_channels == 0 {
            return Err(Error::invalid("student widths must be positive"));
        }
        if config.num_classes != NUM_CLASSES {
            return Err(Error::invalid(format!("num_classes must be {NUM_CLASSES}, got {}", config.num_classes)));
        }
        let s = Self {
            config,
            prefix: prefix.to_string(),
        };
        s.shape_graph()?;
        Ok(s)
    }

    fn residual<G: Graph>(&self, g: &mut G, name: &str, x: G::Node, width: usize, stride: usize) -> Result<G::Node> {
        let y = g.conv(&format!("{name}.conv1"), x, width, 3, stride, 1)?;
        let y = g.batch_norm(&format!("{name}.bn1"), y)?;
        let y = g.relu(y)?;
        let y = g.conv(&format!("{name}.conv2"), y, width, 3, 1, 1)?;
        let y = g.batch_norm(&format!("{name}.bn2"), y)?;
        let skip = if g.channels(x) != width || stride != 1 {
            let s = g.conv(&format!("{name}.proj"), x, width, 1, stride, 0)?;
            g.batch_norm(&format!("{name}.proj_bn"), s)?
        } else {
            x
        };
        let y = g.add(y, skip)?;
        g.relu(y)
    }
}

impl Network for Student {
    fn name(&self) -> &str {
        "student"
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
        let y = g.conv(&format!("{p}stem.conv"), x, c.stem_channels, 3, 2, 1)?;
        let y = g.batch_norm(&format!("{p}stem.bn"), y)?;
        let y = g.relu(y)?;
        let mut y = g.avg_pool(&format!("{p}stem.pool"), y, 2, 2, 0)?;
        for (i, (&width, stride)) in c.widths.iter().zip([1, 2, 2]).enumerate() {
            y = self.residual(g, &format!("{p}res{i}"), y, width, stride)?;
        }
        let pooled = g.global_pool(&format!("{p}pool"), y)?;
        let logits = g.linear(&format!("{p}fc"), pooled, c.num_classes)?;
        Ok((y, logits))
    }
}
