use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::layers::{Aux, Conv2d, Dense, Layer, Param, KERNEL};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed::{self, stream};

/// Number of conv+pool feature modules.
pub const N_MODULES: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub input_hw: (usize, usize),
    pub convs_per_module: Vec<usize>,
    pub filters_per_module: Vec<usize>,
    pub dense_units: Vec<usize>,
    pub n_labels: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            input_hw: (64, 64),
            convs_per_module: vec![2, 2, 3, 3, 4],
            filters_per_module: vec![8, 16, 32, 32, 64],
            dense_units: vec![32],
            n_labels: 3,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.convs_per_module.len() != N_MODULES {
            return Err(Error::param("convs_per_module", format!("need {N_MODULES} entries, got {}", self.convs_per_module.len())));
        }
        if self.filters_per_module.len() != N_MODULES {
            return Err(Error::param("filters_per_module", format!("need {N_MODULES} entries, got {}", self.filters_per_module.len())));
        }
        if self.convs_per_module.contains(&0) {
            return Err(Error::param("convs_per_module", "every module needs at least one conv"));
        }
        if self.filters_per_module.contains(&0) {
            return Err(Error::param("filters_per_module", "filter counts must be positive"));
        }
        if self.dense_units.contains(&0) {
            return Err(Error::param("dense_units", "hidden widths must be positive"));
        }
        if self.n_labels == 0 {
            return Err(Error::param("n_labels", "need at least one label"));
        }
        Ok(())
    }

    /// Parameters after the last feature module when the head pools globally
    /// (`gap = true`) or flattens the final feature map instead.
    pub fn head_param_count(&self, gap: bool) -> usize {
        let (h, w) = self.input_hw;
        let spatial = (h >> N_MODULES) * (w >> N_MODULES);
        let channels = *self.filters_per_module.last().unwrap_or(&1);
        let mut fan_in = if gap { channels } else { channels * spatial };
        let mut total = 0;
        for &units in self.dense_units.iter().chain(std::iter::once(&self.n_labels)) {
            total += fan_in * units + units;
            fan_in = units;
        }
        total
    }
}

/// Forward trace: every activation (input first) and per-layer extras.
#[derive(Debug, Clone)]
struct Trace {
    acts: Vec<Tensor>,
    aux: Vec<Aux>,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    layers: Vec<Layer>,
    trace: Option<Trace>,
}

/// Builds the network with He-normal weights and zero biases.
pub fn build_model(config: &ModelConfig, seed: u64) -> Result<Model> {
    config.validate()?;
    let mut rng = seed::derived_rng(seed, stream::INIT, 0);
    let mut he = |fan_in: usize, n: usize| -> Vec<f64> {
        let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
        (0..n).map(|_| normal.sample(&mut rng)).collect()
    };

    let mut layers = Vec::new();
    let mut channels = 1;
    for (&convs, &filters) in config.convs_per_module.iter().zip(&config.filters_per_module) {
        for _ in 0..convs {
            let fan_in = channels * KERNEL * KERNEL;
            layers.push(Layer::Conv(Conv2d {
                in_channels: channels,
                out_channels: filters,
                weight: Param::new(vec![filters, channels, KERNEL, KERNEL], he(fan_in, filters * fan_in)),
                bias: Param::new(vec![filters], vec![0.0; filters]),
            }));
            layers.push(Layer::Relu);
            channels = filters;
        }
        layers.push(Layer::MaxPool);
    }
    layers.push(Layer::GlobalAvgPool);
    let mut features = channels;
    for &units in &config.dense_units {
        layers.push(Layer::Dense(dense(features, units, he(features, units * features))));
        layers.push(Layer::Relu);
        features = units;
    }
    layers.push(Layer::Dense(dense(features, config.n_labels, he(features, config.n_labels * features))));
    layers.push(Layer::Sigmoid);

    let model = Model { config: config.clone(), layers, trace: None };
    model.check_chain()?;
    Ok(model)
}

fn dense(in_features: usize, out_features: usize, weight: Vec<f64>) -> Dense {
    Dense {
        in_features,
        out_features,
        weight: Param::new(vec![out_features, in_features], weight),
        bias: Param::new(vec![out_features], vec![0.0; out_features]),
    }
}

impl Model {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    /// Rebuilds a model from a config and its parameter arrays in layer order.
    pub fn from_parts(config: &ModelConfig, params: Vec<Vec<f64>>) -> Result<Model> {
        let mut model = build_model(config, 0)?;
        let slots = model.params_mut();
        if slots.len() != params.len() {
            return Err(Error::shape(format!("{} parameter tensors", slots.len()), format!("{}", params.len())));
        }
        for (i, (slot, values)) in slots.into_iter().zip(params).enumerate() {
            if slot.len() != values.len() {
                return Err(Error::shape(format!("parameter {i} with {} values", slot.len()), format!("{}", values.len())));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::param("params", format!("parameter {i} holds non-finite values")));
            }
            slot.value = values;
        }
        Ok(model)
    }

    /// Walks the layer stack on a batch of one and reports the first layer
    /// whose input shape it cannot accept.
    pub fn check_chain(&self) -> Result<()> {
        let (h, w) = self.config.input_hw;
        let mut dims = vec![1, 1, h, w];
        for (index, layer) in self.layers.iter().enumerate() {
            dims = layer.output_dims(&dims).map_err(|reason| Error::ShapeChain { index, kind: layer.kind(), reason })?;
        }
        if dims != [1, self.config.n_labels] {
            return Err(Error::ShapeChain {
                index: self.layers.len() - 1,
                kind: self.layers.last().map_or("none", Layer::kind),
                reason: format!("network ends in {dims:?}, expected [N, {}]", self.config.n_labels),
            });
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn n_params(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    fn input_tensor(&self, batch: &Tensor) -> Result<Tensor> {
        let (h, w) = self.config.input_hw;
        let n = match batch.dims() {
            [n, bh, bw] if (*bh, *bw) == (h, w) => *n,
            [n, 1, bh, bw] if (*bh, *bw) == (h, w) => *n,
            other => return Err(Error::shape(format!("[N, {h}, {w}]"), format!("{other:?}"))),
        };
        if n == 0 {
            return Err(Error::param("batch", "batch is empty"));
        }
        Tensor::new(vec![n, 1, h, w], batch.data().to_vec())
    }

    /// Probabilities `[N, n_labels]`; keeps the activations for [`Model::backward`].
    pub fn forward(&mut self, batch: &Tensor) -> Result<Tensor> {
        let x = self.input_tensor(batch)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.layers.len());
        acts.push(x);
        for layer in &self.layers {
            let (y, a) = layer.forward(acts.last().expect("non-empty"));
            acts.push(y);
            aux.push(a);
        }
        let out = acts.last().expect("non-empty").clone();
        self.trace = Some(Trace { acts, aux });
        Ok(out)
    }

    /// Read-only forward pass; safe to call concurrently.
    pub fn infer(&self, batch: &Tensor) -> Result<Tensor> {
        let mut x = self.input_tensor(batch)?;
        for layer in &self.layers {
            x = layer.forward(&x).0;
        }
        Ok(x)
    }

    /// Backprop from `dL/dprobs`. Gradients accumulate into the params.
    pub fn backward(&mut self, grad_probs: &Tensor) -> Result<()> {
        let top = self.layers.len();
        self.backward_from(top, grad_probs)
    }

    /// Backprop from `dL/dlogits`, skipping the sigmoid (its derivative is
    /// folded into the cross-entropy gradient).
    pub fn backward_logits(&mut self, grad_logits: &Tensor) -> Result<()> {
        let top = self.layers.len() - 1;
        self.backward_from(top, grad_logits)
    }

    fn backward_from(&mut self, top: usize, grad: &Tensor) -> Result<()> {
        let trace = self.trace.take().ok_or_else(|| Error::param("backward", "no forward trace; call forward first"))?;
        let expected = trace.acts[top].dims();
        if grad.dims() != expected {
            let err = Error::shape(format!("{expected:?}"), format!("{:?}", grad.dims()));
            self.trace = Some(trace);
            return Err(err);
        }
        let mut g = grad.clone();
        for i in (0..top).rev() {
            let next = self.layers[i].backward(&trace.acts[i], &trace.acts[i + 1], &trace.aux[i], &g, i > 0);
            match next {
                Some(t) => g = t,
                None => break,
            }
        }
        self.trace = Some(trace);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_chain_ends_at_two_by_two() {
        let model = build_model(&ModelConfig::default(), 1).unwrap();
        let mut dims = vec![1, 1, 64, 64];
        for layer in model.layers() {
            if matches!(layer, Layer::GlobalAvgPool) {
                assert_eq!(&dims[2..], &[2, 2]);
            }
            dims = layer.output_dims(&dims).unwrap();
        }
        assert_eq!(dims, vec![1, 3]);
    }

    #[test]
    fn bad_input_size_names_the_pool_layer() {
        let cfg = ModelConfig { input_hw: (40, 64), ..ModelConfig::default() };
        match build_model(&cfg, 0) {
            Err(Error::ShapeChain { kind, .. }) => assert_eq!(kind, "max_pool"),
            other => panic!("expected shape-chain error, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_weights() {
        let a = build_model(&ModelConfig::default(), 9).unwrap();
        let b = build_model(&ModelConfig::default(), 9).unwrap();
        let c = build_model(&ModelConfig::default(), 10).unwrap();
        assert_eq!(a.params(), b.params());
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn zero_final_layer_gives_one_half() {
        let mut model = build_model(&ModelConfig::default(), 3).unwrap();
        if let Some(Layer::Dense(d)) = model.layers_mut().iter_mut().rev().find(|l| matches!(l, Layer::Dense(_))) {
            d.weight.value.fill(0.0);
        }
        let x = Tensor::new(vec![2, 64, 64], (0..2 * 64 * 64).map(|i| (i % 7) as f64 / 7.0).collect()).unwrap();
        let y = model.infer(&x).unwrap();
        assert!(y.data().iter().all(|&p| p == 0.5));
    }

    #[test]
    fn gap_head_is_smaller_than_flatten_head() {
        let cfg = ModelConfig::default();
        assert!(cfg.head_param_count(true) < cfg.head_param_count(false));
    }
}
