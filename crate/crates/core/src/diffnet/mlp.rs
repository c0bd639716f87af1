use rand::Rng;

use super::graph::{selu, Gradients, Graph, Var};
use super::tensor::{gemm, Tensor};
use super::DiffError;

/// Hidden widths used when none are configured.
pub const DEFAULT_HIDDEN: [usize; 2] = [512, 512];
/// Output width used when none is configured.
pub const DEFAULT_LATENT_DIM: usize = 256;

/// Fully connected layer, `y = x · W + b` with `W` stored `[in × out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn input_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[1]
    }
}

/// Feedforward encoder: SELU on hidden layers, identity on the output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Graph handles for every parameter of an [`Mlp`] recorded on a [`Graph`],
/// in `[w0, b0, w1, b1, ...]` order.
#[derive(Clone, Debug)]
pub struct ParamVars(Vec<Var>);

impl ParamVars {
    /// Pulls the adjoints out of `grads` in parameter order.
    pub fn collect(&self, grads: &Gradients) -> Vec<Tensor> {
        self.0.iter().map(|&v| grads.wrt(v)).collect()
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

impl Mlp {
    /// Seeded LeCun-uniform initialisation (`U(±√(3/fan_in))`, unit variance
    /// under SELU) with zero biases.
    pub fn new<R: Rng + ?Sized>(
        input_dim: usize,
        hidden: &[usize],
        latent_dim: usize,
        rng: &mut R,
    ) -> Result<Self, DiffError> {
        if input_dim == 0 || latent_dim == 0 || hidden.contains(&0) {
            return Err(DiffError::Shape(format!(
                "layer widths must be positive: input {input_dim}, hidden {hidden:?}, latent {latent_dim}"
            )));
        }
        let mut dims = vec![input_dim];
        dims.extend_from_slice(hidden);
        dims.push(latent_dim);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (3.0 / fan_in as f64).sqrt();
                let weight = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..=limit))
                    .collect();
                Dense {
                    weight: Tensor::from_parts(vec![fan_in, fan_out], weight),
                    bias: Tensor::zeros(vec![fan_out]),
                }
            })
            .collect();
        Ok(Self { layers })
    }

    /// Assembles a network from explicit layers, checking that widths chain.
    pub fn from_layers(layers: Vec<Dense>) -> Result<Self, DiffError> {
        if layers.is_empty() {
            return Err(DiffError::Shape("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            let (r, c) = l.weight.require_matrix("layer weight")?;
            if l.bias.shape() != [c] {
                return Err(DiffError::Shape(format!(
                    "layer {i}: bias shape {:?} vs {c} outputs",
                    l.bias.shape()
                )));
            }
            if r == 0 || c == 0 {
                return Err(DiffError::Shape(format!(
                    "layer {i} has an empty dimension"
                )));
            }
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].output_dim() != w[1].input_dim() {
                return Err(DiffError::Shape(format!(
                    "layer {i} outputs {} but layer {} expects {}",
                    w[0].output_dim(),
                    i + 1,
                    w[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    /// `(in, out)` per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        self.layers
            .iter()
            .map(|l| (l.input_dim(), l.output_dim()))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn params(&self) -> Vec<&Tensor> {
        self.layers
            .iter()
            .flat_map(|l| [&l.weight, &l.bias])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weight, &mut l.bias])
            .collect()
    }

    pub fn same_architecture(&self, other: &Mlp) -> bool {
        self.layer_dims() == other.layer_dims()
    }

    fn check_input(&self, batch: &Tensor) -> Result<(usize, usize), DiffError> {
        let (rows, cols) = batch.require_matrix("network input")?;
        if cols != self.input_dim() {
            return Err(DiffError::Shape(format!(
                "network expects width {}, batch has width {cols}",
                self.input_dim()
            )));
        }
        Ok((rows, cols))
    }

    /// Plain inference, `[B × obs_dim] → [B × latent_dim]`, without recording.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor, DiffError> {
        let (rows, _) = self.check_input(batch)?;
        let mut current = batch.data().to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (k, n) = (layer.input_dim(), layer.output_dim());
            let mut out = vec![0.0; rows * n];
            gemm(
                rows,
                k,
                n,
                &current,
                false,
                layer.weight.data(),
                false,
                &mut out,
            );
            for row in out.chunks_exact_mut(n) {
                row.iter_mut()
                    .zip(layer.bias.data())
                    .for_each(|(o, b)| *o += b);
                if i != last {
                    row.iter_mut().for_each(|o| *o = selu(*o));
                }
            }
            current = out;
        }
        let out = Tensor::from_parts(vec![rows, self.latent_dim()], current);
        if !out.is_finite() {
            return Err(DiffError::NonFinite("network output".into()));
        }
        Ok(out)
    }

    /// Records the forward pass on `graph`, registering every parameter as a
    /// trainable leaf. Returns the output node and the parameter handles.
    pub fn record(&self, graph: &mut Graph, input: Var) -> Result<(Var, ParamVars), DiffError> {
        self.check_input(graph.value(input)?)?;
        let mut vars = Vec::with_capacity(2 * self.layers.len());
        let mut h = input;
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let w = graph.param(layer.weight.clone())?;
            let b = graph.param(layer.bias.clone())?;
            vars.push(w);
            vars.push(b);
            let z = graph.matmul(h, w)?;
            h = graph.add_bias(z, b)?;
            if i != last {
                h = graph.selu(h)?;
            }
        }
        Ok((h, ParamVars(vars)))
    }

    /// Squared Euclidean norm of the flattened parameter difference.
    pub fn distance_sq(&self, other: &Mlp) -> Result<f64, DiffError> {
        if !self.same_architecture(other) {
            return Err(DiffError::Shape("architecture mismatch".into()));
        }
        Ok(self
            .params()
            .iter()
            .zip(other.params())
            .flat_map(|(a, b)| a.data().iter().zip(b.data()))
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }
}

/// Moves every target parameter toward the online network:
/// `target ← (1 − β)·target + β·online`, for `0 < β ≤ 1`.
pub fn polyak_update(target: &mut Mlp, online: &Mlp, beta: f64) -> Result<(), DiffError> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(DiffError::Usage(format!(
            "polyak beta {beta} outside (0, 1]"
        )));
    }
    if !target.same_architecture(online) {
        return Err(DiffError::Shape(format!(
            "polyak: target {:?} vs online {:?}",
            target.layer_dims(),
            online.layer_dims()
        )));
    }
    for (t, o) in target.params_mut().into_iter().zip(online.params()) {
        for (tv, ov) in t.data_mut().iter_mut().zip(o.data()) {
            *tv = (1.0 - beta) * *tv + beta * ov;
        }
    }
    Ok(())
}
