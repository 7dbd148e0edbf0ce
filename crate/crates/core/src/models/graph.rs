//! Architecture backends: the same network description runs on the tape or
//! through symbolic shape inference.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{window_output, Float, Mode, ParamRole, ParamStore, Tape, Tensor, Var};

/// Operations a network description may use. Shapes exclude the batch axis.
pub trait Graph {
    type Node: Copy;

    fn conv(&mut self, name: &str, x: Self::Node, out: usize, kernel: usize, stride: usize, pad: usize)
        -> Result<Self::Node>;
    fn batch_norm(&mut self, name: &str, x: Self::Node) -> Result<Self::Node>;
    fn relu(&mut self, x: Self::Node) -> Result<Self::Node>;
    fn dropout(&mut self, x: Self::Node, rate: f64) -> Result<Self::Node>;
    fn avg_pool(&mut self, name: &str, x: Self::Node, kernel: usize, stride: usize, pad: usize)
        -> Result<Self::Node>;
    fn global_pool(&mut self, name: &str, x: Self::Node) -> Result<Self::Node>;
    fn concat(&mut self, xs: &[Self::Node]) -> Result<Self::Node>;
    fn linear(&mut self, name: &str, x: Self::Node, out: usize) -> Result<Self::Node>;
    fn add(&mut self, a: Self::Node, b: Self::Node) -> Result<Self::Node>;
    fn channels(&self, x: Self::Node) -> usize;
}

/// Executes a description on a tape, reading parameters from a store.
pub struct TapeGraph<'a, T: Float> {
    pub tape: &'a mut Tape<T>,
    pub store: &'a ParamStore<T>,
}

impl<T: Float> TapeGraph<'_, T> {
    fn weight(&mut self, name: &str, expected: &[usize]) -> Result<Var> {
        let v = self.tape.param(self.store, name)?;
        if self.tape.value(v).shape != expected {
            return Err(Error::shape(format!(
                "parameter `{name}` has shape {:?}, layer expects {expected:?}",
                self.tape.value(v).shape
            )));
        }
        Ok(v)
    }
}

impl<T: Float> Graph for TapeGraph<'_, T> {
    type Node = Var;

    fn conv(&mut self, name: &str, x: Var, out: usize, kernel: usize, stride: usize, pad: usize) -> Result<Var> {
        let c = self.channels(x);
        let w = self.weight(&format!("{name}.weight"), &[out, c, kernel, kernel])?;
        self.tape.conv2d(x, w, stride, pad)
    }

    fn batch_norm(&mut self, name: &str, x: Var) -> Result<Var> {
        self.tape.batch_norm_named(self.store, name, x)
    }

    fn relu(&mut self, x: Var) -> Result<Var> {
        Ok(self.tape.relu(x))
    }

    fn dropout(&mut self, x: Var, rate: f64) -> Result<Var> {
        self.tape.dropout(x, rate)
    }

    fn avg_pool(&mut self, _name: &str, x: Var, kernel: usize, stride: usize, pad: usize) -> Result<Var> {
        self.tape.avg_pool2d(x, kernel, stride, pad)
    }

    fn global_pool(&mut self, _name: &str, x: Var) -> Result<Var> {
        self.tape.global_avg_pool(x)
    }

    fn concat(&mut self, xs: &[Var]) -> Result<Var> {
        self.tape.concat_channels(xs)
    }

    fn linear(&mut self, name: &str, x: Var, out: usize) -> Result<Var> {
        let d = self.channels(x);
        let w = self.weight(&format!("{name}.weight"), &[out, d])?;
        let b = self.weight(&format!("{name}.bias"), &[out])?;
        self.tape.linear(x, w, b)
    }

    fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.tape.add(a, b)
    }

    fn channels(&self, x: Var) -> usize {
        self.tape.value(x).shape.get(1).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParamSpec {
    pub name: String,
    pub role: ParamRole,
    pub shape: Vec<usize>,
}

impl ParamSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
}

/// One row of an architecture summary; `output` excludes the batch axis and
/// `macs` is per sample.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerRow {
    pub name: String,
    pub kind: String,
    pub output: Vec<usize>,
    pub params: usize,
    pub macs: u64,
}

/// Symbolic shape inference; collects parameter specs and per-layer costs.
#[derive(Debug, Default)]
pub struct ShapeGraph {
    shapes: Vec<Vec<usize>>,
    pub params: Vec<ParamSpec>,
    pub rows: Vec<LayerRow>,
}

impl ShapeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn input(&mut self, shape: &[usize]) -> usize {
        self.shapes.push(shape.to_vec());
        self.shapes.len() - 1
    }

    pub fn shape(&self, x: usize) -> &[usize] {
        &self.shapes[x]
    }

    fn node(&mut self, shape: Vec<usize>) -> usize {
        self.shapes.push(shape);
        self.shapes.len() - 1
    }

    fn param(&mut self, name: String, role: ParamRole, shape: Vec<usize>) -> usize {
        let n = shape.iter().product();
        self.params.push(ParamSpec { name, role, shape });
        n
    }

    fn row(&mut self, name: &str, kind: &str, x: usize, params: usize, macs: u64) {
        self.rows.push(LayerRow {
            name: name.to_string(),
            kind: kind.to_string(),
            output: self.shapes[x].clone(),
            params,
            macs,
        });
    }

    fn spatial(&self, x: usize, what: &str) -> Result<(usize, usize, usize)> {
        match self.shapes[x][..] {
            [c, h, w] => Ok((c, h, w)),
            _ => Err(Error::shape(format!("{what} needs a C×H×W input, got {:?}", self.shapes[x]))),
        }
    }

    fn fit(size: usize, kernel: usize, stride: usize, pad: usize, what: &str) -> Result<usize> {
        window_output(size, kernel, stride, pad)
            .filter(|&o| o >= 1)
            .ok_or_else(|| Error::shape(format!("{what}: window {kernel} (stride {stride}) does not fit extent {size}")))
    }

    /// Trainable parameter count (running statistics excluded).
    pub fn trainable_params(&self) -> usize {
        self.params.iter().filter(|p| p.role.trainable()).map(ParamSpec::numel).sum()
    }

    pub fn total_macs(&self) -> u64 {
        self.rows.iter().map(|r| r.macs).sum()
    }
}

impl Graph for ShapeGraph {
    type Node = usize;

    fn conv(&mut self, name: &str, x: usize, out: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
        let (c, h, w) = self.spatial(x, name)?;
        let oh = Self::fit(h, kernel, stride, pad, name)?;
        let ow = Self::fit(w, kernel, stride, pad, name)?;
        let p = self.param(format!("{name}.weight"), ParamRole::ConvWeight, vec![out, c, kernel, kernel]);
        let y = self.node(vec![out, oh, ow]);
        self.row(name, "conv", y, p, (out * oh * ow * c * kernel * kernel) as u64);
        Ok(y)
    }

    fn batch_norm(&mut self, name: &str, x: usize) -> Result<usize> {
        let c = self.shapes[x][0];
        let mut p = self.param(format!("{name}.scale"), ParamRole::BnScale, vec![c]);
        p += self.param(format!("{name}.shift"), ParamRole::BnShift, vec![c]);
        self.param(format!("{name}.running_mean"), ParamRole::RunningMean, vec![c]);
        self.param(format!("{name}.running_var"), ParamRole::RunningVar, vec![c]);
        let y = self.node(self.shapes[x].clone());
        let n: usize = self.shapes[x].iter().product();
        self.row(name, "batch_norm", y, p, n as u64);
        Ok(y)
    }

    fn relu(&mut self, x: usize) -> Result<usize> {
        Ok(x)
    }

    fn dropout(&mut self, x: usize, rate: f64) -> Result<usize> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
        }
        Ok(x)
    }

    fn avg_pool(&mut self, name: &str, x: usize, kernel: usize, stride: usize, pad: usize) -> Result<usize> {
        let (c, h, w) = self.spatial(x, name)?;
        let oh = Self::fit(h, kernel, stride, pad, name)?;
        let ow = Self::fit(w, kernel, stride, pad, name)?;
        let y = self.node(vec![c, oh, ow]);
        self.row(name, "avg_pool", y, 0, (c * oh * ow * kernel * kernel) as u64);
        Ok(y)
    }

    fn global_pool(&mut self, name: &str, x: usize) -> Result<usize> {
        let (c, h, w) = self.spatial(x, name)?;
        let y = self.node(vec![c]);
        self.row(name, "global_pool", y, 0, (c * h * w) as u64);
        Ok(y)
    }

    fn concat(&mut self, xs: &[usize]) -> Result<usize> {
        let first = *xs.first().ok_or_else(|| Error::shape("concat of zero tensors"))?;
        if xs.len() == 1 {
            return Ok(first);
        }
        let tail = self.shapes[first][1..].to_vec();
        let mut c = 0;
        for &x in xs {
            if self.shapes[x][1..] != tail[..] {
                return Err(Error::shape(format!("concat mismatch: {:?}", self.shapes[x])));
            }
            c += self.shapes[x][0];
        }
        let mut shape = vec![c];
        shape.extend(tail);
        Ok(self.node(shape))
    }

    fn linear(&mut self, name: &str, x: usize, out: usize) -> Result<usize> {
        let &[d] = &self.shapes[x][..] else {
            return Err(Error::shape(format!("{name} needs a flat input, got {:?}", self.shapes[x])));
        };
        let mut p = self.param(format!("{name}.weight"), ParamRole::LinearWeight, vec![out, d]);
        p += self.param(format!("{name}.bias"), ParamRole::Bias, vec![out]);
        let y = self.node(vec![out]);
        self.row(name, "linear", y, p, (out * d) as u64);
        Ok(y)
    }

    fn add(&mut self, a: usize, b: usize) -> Result<usize> {
        if self.shapes[a] != self.shapes[b] {
            return Err(Error::shape(format!("add: {:?} vs {:?}", self.shapes[a], self.shapes[b])));
        }
        Ok(self.node(self.shapes[a].clone()))
    }

    fn channels(&self, x: usize) -> usize {
        self.shapes[x][0]
    }
}

/// Shape, parameter and cost report for one network.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub name: String,
    pub input: Vec<usize>,
    pub output: Vec<usize>,
    pub final_features: Vec<usize>,
    pub rows: Vec<LayerRow>,
    pub params: usize,
    pub macs: u64,
}

impl ModelSummary {
    /// Floating-point operations per sample, counting a MAC as two.
    pub fn flops(&self) -> u64 {
        2 * self.macs
    }
}

impl fmt::Display for ModelSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} (input {:?})", self.name, self.input)?;
        writeln!(f, "{:<40} {:<12} {:<16} {:>10} {:>14}", "layer", "kind", "output", "params", "MACs")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<40} {:<12} {:<16} {:>10} {:>14}",
                r.name,
                r.kind,
                format!("{:?}", r.output),
                r.params,
                r.macs
            )?;
        }
        writeln!(f, "final feature map: {:?}", self.final_features)?;
        writeln!(f, "trainable parameters: {}", self.params)?;
        write!(f, "MFLOPs per sample: {:.3}", self.flops() as f64 / 1e6)
    }
}

/// A network expressed once against [`Graph`].
pub trait Network {
    fn name(&self) -> &str;
    fn input_size(&self) -> usize;
    fn num_classes(&self) -> usize;

    /// Build the network; returns `(final feature map, logits)`.
    fn build<G: Graph>(&self, g: &mut G, x: G::Node) -> Result<(G::Node, G::Node)>;

    fn input_shape(&self) -> [usize; 3] {
        [3, self.input_size(), self.input_size()]
    }

    fn shape_graph(&self) -> Result<(ShapeGraph, usize, usize)> {
        let mut g = ShapeGraph::new();
        let x = g.input(&self.input_shape());
        let (features, logits) = self.build(&mut g, x)?;
        Ok((g, features, logits))
    }

    fn describe(&self) -> Result<ModelSummary> {
        let (g, features, logits) = self.shape_graph()?;
        Ok(ModelSummary {
            name: self.name().to_string(),
            input: self.input_shape().to_vec(),
            output: g.shape(logits).to_vec(),
            final_features: g.shape(features).to_vec(),
            params: g.trainable_params(),
            macs: g.total_macs(),
            rows: g.rows,
        })
    }

    fn param_specs(&self) -> Result<Vec<ParamSpec>> {
        Ok(self.shape_graph()?.0.params)
    }

    /// Register every parameter with neutral values: zeros, except batch-norm
    /// scales and running variances, which start at one.
    fn register<T: Float>(&self, store: &mut ParamStore<T>) -> Result<()> {
        for p in self.param_specs()? {
            let value = match p.role {
                ParamRole::BnScale | ParamRole::RunningVar => Tensor::full(&p.shape, T::one()),
                _ => Tensor::zeros(&p.shape),
            };
            store.register(&p.name, p.role, value)?;
        }
        Ok(())
    }

    /// Logits for an `N×3×H×W` batch already on the tape.
    fn forward<T: Float>(&self, tape: &mut Tape<T>, store: &ParamStore<T>, x: Var) -> Result<Var> {
        let (_, c, h, w) = tape.value(x).dims4()?;
        let s = self.input_size();
        if [c, h, w] != [3, s, s] {
            return Err(Error::shape(format!(
                "{} expects inputs of 3×{s}×{s}, got {:?}",
                self.name(),
                tape.value(x).shape
            )));
        }
        let mut g = TapeGraph { tape, store };
        Ok(self.build(&mut g, x)?.1)
    }

    /// Eval-mode logits for a batch given as a tensor.
    fn predict<T: Float>(&self, store: &ParamStore<T>, batch: Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new(Mode::Eval, 0);
        let x = tape.input(batch);
        let y = self.forward(&mut tape, store, x)?;
        Ok(tape.value(y).detached())
    }
}
