//! A small dense network with hand-written backpropagation.
//!
//! The model is a multi-layer perceptron with ReLU hidden activations and an
//! identity final layer feeding softmax cross-entropy. Forward passes accept
//! an optional adapter stack; each adapted layer computes (W + B*A)x + b with
//! the low-rank term applied in factored form. Gradients are produced for the
//! base parameters and, when adapters are attached, for the adapter factors.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::adapter::AdapterStack;
use crate::densemath::{l1_distance, Matrix, Vector};
use crate::error::{Error, Result};
use crate::io::{atomic_write, parse_f64, ParseCursor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "relu" => Some(Activation::Relu),
            "identity" => Some(Activation::Identity),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// out_dim x in_dim.
    pub weight: Matrix,
    pub bias: Vector,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layers: Vec<DenseLayer>,
    spec: Vec<LayerSpec>,
}

/// Builds the layer chain input -> hidden^n -> classes with ReLU activations
/// on hidden layers and identity on the output layer.
pub fn mlp_spec(input_dim: usize, hidden_dim: usize, hidden_layers: usize, classes: usize) -> Vec<LayerSpec> {
    let mut spec = Vec::new();
    let mut prev = input_dim;
    for _ in 0..hidden_layers {
        spec.push(LayerSpec { in_dim: prev, out_dim: hidden_dim, activation: Activation::Relu });
        prev = hidden_dim;
    }
    spec.push(LayerSpec { in_dim: prev, out_dim: classes, activation: Activation::Identity });
    spec
}

impl ModelParams {
    pub fn init(spec: Vec<LayerSpec>, rng: &mut ChaCha8Rng) -> Result<Self> {
        validate_spec(&spec)?;
        let layers = spec
            .iter()
            .map(|l| {
                let scale = (2.0 / l.in_dim as f64).sqrt();
                DenseLayer {
                    weight: Matrix::from_fn(l.out_dim, l.in_dim, |_, _| {
                        rng.random_range(-1.0..1.0) * scale
                    }),
                    bias: Vector::zeros(l.out_dim),
                }
            })
            .collect();
        Ok(Self { layers, spec })
    }

    pub fn from_layers(spec: Vec<LayerSpec>, layers: Vec<DenseLayer>) -> Result<Self> {
        validate_spec(&spec)?;
        if spec.len() != layers.len() {
            return Err(Error::Shape("spec and layer count differ".into()));
        }
        for (i, (s, l)) in spec.iter().zip(&layers).enumerate() {
            if l.weight.rows() != s.out_dim || l.weight.cols() != s.in_dim || l.bias.len() != s.out_dim {
                return Err(Error::Shape(format!("layer {i} does not match its spec")));
            }
        }
        Ok(Self { layers, spec })
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, i: usize) -> &DenseLayer {
        &self.layers[i]
    }

    pub fn layer_mut(&mut self, i: usize) -> &mut DenseLayer {
        &mut self.layers[i]
    }

    pub fn spec(&self) -> &[LayerSpec] {
        &self.spec
    }

    pub fn input_dim(&self) -> usize {
        self.spec[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.last().unwrap().out_dim
    }

    pub fn param_count(&self) -> usize {
        self.spec.iter().map(|l| l.out_dim * l.in_dim + l.out_dim).sum()
    }

    /// Order-sensitive hash over the exact f64 bits of every parameter.
    /// Used to assert that base weights are never mutated during adaptation.
    pub fn bit_hash(&self) -> u64 {
        let mut h = 0xcbf29ce484222325u64;
        let mut mix = |v: f64| {
            h ^= v.to_bits();
            h = h.wrapping_mul(0x100000001b3);
        };
        for layer in &self.layers {
            for &v in layer.weight.as_slice() {
                mix(v);
            }
            for &v in layer.bias.as_slice() {
                mix(v);
            }
        }
        h
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        writeln!(out, "model-checkpoint v1").unwrap();
        writeln!(out, "layers {}", self.layers.len()).unwrap();
        for (i, (s, l)) in self.spec.iter().zip(&self.layers).enumerate() {
            writeln!(out, "layer {i} {} {} {}", s.in_dim, s.out_dim, s.activation.name()).unwrap();
            for r in 0..l.weight.rows() {
                let row: Vec<String> = l.weight.row(r).iter().map(|v| format!("{v}")).collect();
                writeln!(out, "w {}", row.join(" ")).unwrap();
            }
            let b: Vec<String> = l.bias.as_slice().iter().map(|v| format!("{v}")).collect();
            writeln!(out, "b {}", b.join(" ")).unwrap();
        }
        atomic_write(path, out.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cur = ParseCursor::new(&text);
        cur.expect_line("model-checkpoint v1")?;
        let n: usize = cur.field_after("layers")?;
        let mut spec = Vec::with_capacity(n);
        let mut layers = Vec::with_capacity(n);
        for i in 0..n {
            let header = cur.next_line()?;
            let parts: Vec<&str> = header.split_whitespace().collect();
            if parts.len() != 5 || parts[0] != "layer" {
                return Err(cur.error(format!("expected layer header, got {header:?}")));
            }
            let idx: usize = cur.parse_field(parts[1])?;
            if idx != i {
                return Err(cur.error(format!("layer index {idx}, expected {i}")));
            }
            let in_dim: usize = cur.parse_field(parts[2])?;
            let out_dim: usize = cur.parse_field(parts[3])?;
            let activation = Activation::from_name(parts[4])
                .ok_or_else(|| cur.error(format!("unknown activation {:?}", parts[4])))?;
            let mut wdata = Vec::with_capacity(out_dim * in_dim);
            for _ in 0..out_dim {
                let line = cur.next_line()?;
                let rest = line
                    .strip_prefix("w ")
                    .ok_or_else(|| cur.error("expected weight row".into()))?;
                for tok in rest.split_whitespace() {
                    wdata.push(parse_f64(tok).map_err(|m| cur.error(m))?);
                }
            }
            let line = cur.next_line()?;
            let rest = line
                .strip_prefix("b ")
                .ok_or_else(|| cur.error("expected bias row".into()))?;
            let mut bdata = Vec::with_capacity(out_dim);
            for tok in rest.split_whitespace() {
                bdata.push(parse_f64(tok).map_err(|m| cur.error(m))?);
            }
            spec.push(LayerSpec { in_dim, out_dim, activation });
            layers.push(DenseLayer {
                weight: Matrix::new(out_dim, in_dim, wdata)
                    .map_err(|e| cur.error(e.to_string()))?,
                bias: Vector::new(bdata).map_err(|e| cur.error(e.to_string()))?,
            });
        }
        Self::from_layers(spec, layers)
    }
}

fn validate_spec(spec: &[LayerSpec]) -> Result<()> {
    if spec.is_empty() {
        return Err(Error::Input("model needs at least one layer".into()));
    }
    for l in spec {
        if l.in_dim == 0 || l.out_dim == 0 {
            return Err(Error::Input("layer dims must be positive".into()));
        }
    }
    for w in spec.windows(2) {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::Shape(format!(
                "layer chain broken: out {} feeds in {}",
                w[0].out_dim, w[1].in_dim
            )));
        }
    }
    if spec.last().unwrap().activation != Activation::Identity {
        return Err(Error::Input("final layer activation must be identity".into()));
    }
    Ok(())
}

/// Per-layer gradient of the base parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub dweight: Matrix,
    pub dbias: Vector,
}

/// Gradient with respect to one attached adapter's factors.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorGrad {
    pub layer_index: usize,
    /// rank x in_dim, same shape as the adapter's A.
    pub d_a: Matrix,
    /// out_dim x rank, same shape as the adapter's B.
    pub d_b: Matrix,
}

/// Gradient of the loss. The base part mirrors `ModelParams` exactly; the
/// factor part holds one block per attached adapter and is empty when the
/// forward pass ran without adapters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGrad>,
    pub factors: Vec<FactorGrad>,
}

impl GradientSet {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            layers: params
                .spec
                .iter()
                .map(|s| LayerGrad {
                    dweight: Matrix::zeros(s.out_dim, s.in_dim),
                    dbias: Vector::zeros(s.out_dim),
                })
                .collect(),
            factors: Vec::new(),
        }
    }

    pub fn same_base_shape(&self, other: &GradientSet) -> bool {
        self.layers.len() == other.layers.len()
            && self.layers.iter().zip(&other.layers).all(|(a, b)| {
                a.dweight.rows() == b.dweight.rows()
                    && a.dweight.cols() == b.dweight.cols()
                    && a.dbias.len() == b.dbias.len()
            })
    }

    /// Base-part difference self - other. Factor blocks are dropped; reattach
    /// them with `with_factors` against the stack of interest.
    pub fn sub_base(&self, other: &GradientSet) -> Result<GradientSet> {
        if !self.same_base_shape(other) {
            return Err(Error::Shape("gradient sets have different base shapes".into()));
        }
        Ok(GradientSet {
            layers: self
                .layers
                .iter()
                .zip(&other.layers)
                .map(|(a, b)| LayerGrad {
                    dweight: a.dweight.sub(&b.dweight).unwrap(),
                    dbias: a.dbias.sub(&b.dbias).unwrap(),
                })
                .collect(),
            factors: Vec::new(),
        })
    }

    /// In-place base accumulation: self += alpha * other (base part only).
    pub fn add_scaled_base(&mut self, alpha: f64, other: &GradientSet) -> Result<()> {
        if !self.same_base_shape(other) {
            return Err(Error::Shape("gradient sets have different base shapes".into()));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.dweight.as_mut_slice().iter_mut().zip(b.dweight.as_slice()) {
                *x += alpha * y;
            }
            for (x, y) in a.dbias.as_mut_slice().iter_mut().zip(b.dbias.as_slice()) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for l in &mut self.layers {
            for x in l.dweight.as_mut_slice() {
                *x *= alpha;
            }
            for x in l.dbias.as_mut_slice() {
                *x *= alpha;
            }
        }
        for f in &mut self.factors {
            for x in f.d_a.as_mut_slice() {
                *x *= alpha;
            }
            for x in f.d_b.as_mut_slice() {
                *x *= alpha;
            }
        }
    }

    /// Derives factor blocks from the base weight gradients through the
    /// stack's chain rule: dA = B^T dW, dB = dW A^T. Existing factor blocks
    /// are replaced; the base part is untouched.
    pub fn with_factors(&self, stack: &AdapterStack) -> Result<GradientSet> {
        let mut out = self.clone();
        out.factors = stack
            .iter()
            .map(|ad| {
                let l = ad.layer_index;
                if l >= self.layers.len() {
                    return Err(Error::Shape(format!(
                        "adapter layer {l} out of range for {}-layer gradient",
                        self.layers.len()
                    )));
                }
                let dw = &self.layers[l].dweight;
                if ad.b.rows() != dw.rows() || ad.a.cols() != dw.cols() {
                    return Err(Error::Shape(format!(
                        "adapter at layer {l} does not match gradient block {}x{}",
                        dw.rows(),
                        dw.cols()
                    )));
                }
                Ok(FactorGrad {
                    layer_index: l,
                    d_a: crate::densemath::matmul(&ad.b.transpose(), dw)?,
                    d_b: crate::densemath::matmul(dw, &ad.a.transpose())?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(out)
    }

    /// L1 norm over every coordinate, base and factor blocks together.
    pub fn l1_total(&self) -> f64 {
        let base: f64 = self
            .layers
            .iter()
            .map(|l| l.dweight.l1_sum() + crate::densemath::l1_norm(&l.dbias))
            .sum();
        let fac: f64 = self.factors.iter().map(|f| f.d_a.l1_sum() + f.d_b.l1_sum()).sum();
        base + fac
    }
}

/// Flattens the base gradient into a single vector: for each layer, the
/// weight block in row-major order followed by the bias. Length equals the
/// model's total base parameter count.
pub fn flatten_grads(g: &GradientSet) -> Vector {
    let mut data = Vec::new();
    for l in &g.layers {
        data.extend_from_slice(l.dweight.as_slice());
        data.extend_from_slice(l.dbias.as_slice());
    }
    Vector::new(data).expect("gradient entries are finite")
}

/// Inverse of `flatten_grads` for a given model shape.
pub fn unflatten_grads(params: &ModelParams, v: &Vector) -> Result<GradientSet> {
    if v.len() != params.param_count() {
        return Err(Error::Shape(format!(
            "flat gradient length {} vs parameter count {}",
            v.len(),
            params.param_count()
        )));
    }
    let mut g = GradientSet::zeros_like(params);
    let mut off = 0;
    for (l, s) in g.layers.iter_mut().zip(params.spec()) {
        let wlen = s.out_dim * s.in_dim;
        l.dweight = Matrix::new(s.out_dim, s.in_dim, v.as_slice()[off..off + wlen].to_vec())?;
        off += wlen;
        l.dbias = Vector::new(v.as_slice()[off..off + s.out_dim].to_vec())?;
        off += s.out_dim;
    }
    Ok(g)
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// activations[0] is the input; activations[i+1] is layer i's output.
    pub activations: Vec<Vector>,
    /// pre_activations[i] is layer i's value before the activation.
    pub pre_activations: Vec<Vector>,
}

/// Forward pass. With adapters, each adapted layer computes
/// (W + B*A)x + b, applying the low-rank term as B*(A*x).
pub fn forward(
    params: &ModelParams,
    adapters: Option<&AdapterStack>,
    x: &Vector,
) -> Result<(Vector, ForwardCache)> {
    if x.len() != params.input_dim() {
        return Err(Error::Shape(format!(
            "input length {} vs model input dim {}",
            x.len(),
            params.input_dim()
        )));
    }
    if let Some(stack) = adapters {
        stack.check_compatible(params)?;
    }
    let mut activations = vec![x.clone()];
    let mut pre_activations = Vec::with_capacity(params.num_layers());
    let mut cur = x.clone();
    for (i, (layer, spec)) in params.layers.iter().zip(&params.spec).enumerate() {
        let mut z = layer.weight.matvec(&cur)?;
        if let Some(ad) = adapters.and_then(|s| s.adapter_at(i)) {
            let ax = ad.a.matvec(&cur)?;
            let bax = ad.b.matvec(&ax)?;
            z = crate::densemath::saxpy(1.0, &bax, &z)?;
        }
        z = crate::densemath::saxpy(1.0, &layer.bias, &z)?;
        let a = Vector::new(z.as_slice().iter().map(|&v| spec.activation.apply(v)).collect())?;
        pre_activations.push(z);
        activations.push(a.clone());
        cur = a;
    }
    let logits = activations.last().unwrap().clone();
    Ok((logits, ForwardCache { activations, pre_activations }))
}

/// Softmax cross-entropy loss for one labeled example, with gradients for
/// all base parameters and, when adapters are attached, the adapter factors.
pub fn loss_and_grad(
    params: &ModelParams,
    adapters: Option<&AdapterStack>,
    x: &Vector,
    y: usize,
) -> Result<(f64, GradientSet)> {
    let classes = params.output_dim();
    if y >= classes {
        return Err(Error::Input(format!("label {y} out of range for {classes} classes")));
    }
    let (logits, cache) = forward(params, adapters, x)?;
    let max = logits.as_slice().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = logits.as_slice().iter().map(|v| (v - max).exp()).sum();
    let log_sum = max + sum_exp.ln();
    let loss = log_sum - logits.get(y);

    // dL/dlogits = softmax - onehot
    let mut dz = Vector::new(
        logits.as_slice().iter().map(|v| ((v - max).exp()) / sum_exp).collect(),
    )?;
    dz.set(y, dz.get(y) - 1.0);

    let mut g = GradientSet::zeros_like(params);
    for i in (0..params.num_layers()).rev() {
        let input = &cache.activations[i];
        g.layers[i].dweight = Matrix::outer(&dz, input);
        g.layers[i].dbias = dz.clone();
        if i > 0 {
            // Effective weight is W + B*A for adapted layers.
            let mut da_prev = params.layers[i].weight.transpose().matvec(&dz)?;
            if let Some(ad) = adapters.and_then(|s| s.adapter_at(i)) {
                let btd = ad.b.transpose().matvec(&dz)?;
                let atb = ad.a.transpose().matvec(&btd)?;
                da_prev = crate::densemath::saxpy(1.0, &atb, &da_prev)?;
            }
            let pre = &cache.pre_activations[i - 1];
            let act = params.spec[i - 1].activation;
            dz = Vector::new(
                da_prev
                    .as_slice()
                    .iter()
                    .zip(pre.as_slice())
                    .map(|(d, z)| d * act.derivative(*z))
                    .collect(),
            )?;
        }
    }
    if let Some(stack) = adapters {
        g = g.with_factors(stack)?;
    }
    Ok((loss, g))
}

/// Mean loss and mean gradient over a batch.
pub fn loss_and_grad_batch(
    params: &ModelParams,
    adapters: Option<&AdapterStack>,
    batch: &[(Vector, usize)],
) -> Result<(f64, GradientSet)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let mut total_loss = 0.0;
    let mut acc: Option<GradientSet> = None;
    for (x, y) in batch {
        let (loss, g) = loss_and_grad(params, adapters, x, *y)?;
        total_loss += loss;
        match &mut acc {
            None => acc = Some(g),
            Some(a) => {
                a.add_scaled_base(1.0, &g)?;
                for (fa, fg) in a.factors.iter_mut().zip(&g.factors) {
                    for (x, y) in fa.d_a.as_mut_slice().iter_mut().zip(fg.d_a.as_slice()) {
                        *x += y;
                    }
                    for (x, y) in fa.d_b.as_mut_slice().iter_mut().zip(fg.d_b.as_slice()) {
                        *x += y;
                    }
                }
            }
        }
    }
    let mut g = acc.unwrap();
    let inv = 1.0 / batch.len() as f64;
    g.scale(inv);
    Ok((total_loss * inv, g))
}

/// Classification accuracy of the (optionally adapted) model on a test set.
pub fn accuracy(params: &ModelParams, adapters: Option<&AdapterStack>, data: &[(Vector, usize)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("empty evaluation set".into()));
    }
    let correct: usize = crate::parallel::par_map(data, |(x, y)| {
        let (logits, _) = forward(params, adapters, x).expect("shapes validated");
        let pred = logits
            .as_slice()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
            .map(|(i, _)| i)
            .unwrap();
        usize::from(pred == *y)
    })
    .into_iter()
    .sum();
    Ok(correct as f64 / data.len() as f64)
}

/// Mean base gradient over an entire dataset at the given configuration,
/// flattened to the model's parameter vector. This is the per-task gradient
/// signature the similarity tree is built on.
pub fn gradient_signature(
    params: &ModelParams,
    adapters: Option<&AdapterStack>,
    data: &[(Vector, usize)],
) -> Result<Vector> {
    let (_, g) = loss_and_grad_batch(params, adapters, data)?;
    Ok(flatten_grads(&g))
}

/// L1 distance between two flattened gradients.
pub fn signature_distance(a: &Vector, b: &Vector) -> Result<f64> {
    l1_distance(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{AdapterStack, LoraAdapter};
    use rand::Rng;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_params(seed: u64) -> ModelParams {
        let spec = mlp_spec(3, 4, 1, 3);
        ModelParams::init(spec, &mut rng(seed)).unwrap()
    }

    #[test]
    fn identity_layer_passes_input_through() {
        let spec = vec![LayerSpec { in_dim: 2, out_dim: 2, activation: Activation::Identity }];
        let layers = vec![DenseLayer { weight: Matrix::identity(2), bias: Vector::zeros(2) }];
        let params = ModelParams::from_layers(spec, layers).unwrap();
        let x = Vector::new(vec![1.0, 2.0]).unwrap();
        let (logits, _) = forward(&params, None, &x).unwrap();
        assert_eq!(logits.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let params = small_params(7);
        let x = Vector::new(vec![0.3, -0.2, 0.9]).unwrap();
        let (a, _) = forward(&params, None, &x).unwrap();
        let (b, _) = forward(&params, None, &x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_b_adapter_is_identity_bitwise() {
        let params = small_params(11);
        let ad = LoraAdapter::new(0, 3, 4, 2, &mut rng(5)).unwrap();
        let stack = AdapterStack::from_adapters(vec![ad]).unwrap();
        let x = Vector::new(vec![0.5, -1.0, 0.25]).unwrap();
        let (base, _) = forward(&params, None, &x).unwrap();
        let (adapted, _) = forward(&params, Some(&stack), &x).unwrap();
        assert_eq!(base, adapted);
    }

    #[test]
    fn merged_dense_forward_matches_factored() {
        let params = small_params(13);
        let mut ad = LoraAdapter::new(0, 3, 4, 2, &mut rng(6)).unwrap();
        // Make B nonzero so the adapter actually does something.
        for v in ad.b.as_mut_slice() {
            *v = 0.3;
        }
        let stack = AdapterStack::from_adapters(vec![ad.clone()]).unwrap();
        let x = Vector::new(vec![0.4, 0.1, -0.7]).unwrap();
        let (factored, _) = forward(&params, Some(&stack), &x).unwrap();

        let mut dense = params.clone();
        let merged = dense.layer(0).weight.add(&ad.effect().unwrap()).unwrap();
        dense.layer_mut(0).weight = merged;
        let (explicit, _) = forward(&dense, None, &x).unwrap();
        for (a, b) in factored.as_slice().iter().zip(explicit.as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_logits_loss_is_ln_k() {
        let spec = vec![LayerSpec { in_dim: 2, out_dim: 4, activation: Activation::Identity }];
        let layers = vec![DenseLayer { weight: Matrix::zeros(4, 2), bias: Vector::zeros(4) }];
        let params = ModelParams::from_layers(spec, layers).unwrap();
        let x = Vector::new(vec![1.0, -1.0]).unwrap();
        let (loss, _) = loss_and_grad(&params, None, &x, 2).unwrap();
        assert!((loss - (4.0f64).ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_label_is_input_error() {
        let params = small_params(17);
        let x = Vector::new(vec![0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            loss_and_grad(&params, None, &x, 9),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn duplicated_pair_doubles_summed_gradient() {
        let params = small_params(19);
        let x = Vector::new(vec![0.2, 0.4, -0.6]).unwrap();
        let (_, g1) = loss_and_grad(&params, None, &x, 1).unwrap();
        let mut summed = GradientSet::zeros_like(&params);
        summed.add_scaled_base(1.0, &g1).unwrap();
        summed.add_scaled_base(1.0, &g1).unwrap();
        let flat_double = flatten_grads(&summed);
        let flat_single = flatten_grads(&g1);
        for (d, s) in flat_double.as_slice().iter().zip(flat_single.as_slice()) {
            assert!((d - 2.0 * s).abs() < 1e-15);
        }
    }

    /// Central finite differences over every base parameter of a 2-layer net
    /// plus sampled adapter factor entries.
    #[test]
    fn gradient_matches_finite_differences() {
        let spec = mlp_spec(3, 5, 1, 3);
        let mut params = ModelParams::init(spec, &mut rng(23)).unwrap();
        let mut ad = LoraAdapter::new(1, 5, 3, 2, &mut rng(24)).unwrap();
        for v in ad.b.as_mut_slice() {
            *v = 0.2;
        }
        let stack = AdapterStack::from_adapters(vec![ad.clone()]).unwrap();
        let x = Vector::new(vec![0.7, -0.3, 0.5]).unwrap();
        let y = 2;
        let (_, g) = loss_and_grad(&params, Some(&stack), &x, y).unwrap();

        let h = 1e-5;
        let rel = |analytic: f64, numeric: f64| (analytic - numeric).abs() / (numeric.abs() + 1e-8);

        // Base weights of layer 0 (probe all of them).
        for r in 0..params.layer(0).weight.rows() {
            for c in 0..params.layer(0).weight.cols() {
                let orig = params.layer(0).weight.get(r, c);
                params.layer_mut(0).weight.set(r, c, orig + h);
                let (lp, _) = loss_and_grad(&params, Some(&stack), &x, y).unwrap();
                params.layer_mut(0).weight.set(r, c, orig - h);
                let (lm, _) = loss_and_grad(&params, Some(&stack), &x, y).unwrap();
                params.layer_mut(0).weight.set(r, c, orig);
                let numeric = (lp - lm) / (2.0 * h);
                assert!(
                    rel(g.layers[0].dweight.get(r, c), numeric) < 1e-4,
                    "weight ({r},{c})"
                );
            }
        }
        // Adapter factor entries.
        for r in 0..ad.a.rows() {
            for c in 0..ad.a.cols() {
                let orig = ad.a.get(r, c);
                let mut plus = ad.clone();
                plus.a.set(r, c, orig + h);
                let sp = AdapterStack::from_adapters(vec![plus]).unwrap();
                let (lp, _) = loss_and_grad(&params, Some(&sp), &x, y).unwrap();
                let mut minus = ad.clone();
                minus.a.set(r, c, orig - h);
                let sm = AdapterStack::from_adapters(vec![minus]).unwrap();
                let (lm, _) = loss_and_grad(&params, Some(&sm), &x, y).unwrap();
                let numeric = (lp - lm) / (2.0 * h);
                let analytic = g.factors[0].d_a.get(r, c);
                assert!(rel(analytic, numeric) < 1e-4, "A ({r},{c})");
            }
        }
    }

    #[test]
    fn flatten_round_trip_and_layer_sum() {
        let params = small_params(29);
        let x = Vector::new(vec![0.1, 0.9, -0.4]).unwrap();
        let (_, ga) = loss_and_grad(&params, None, &x, 0).unwrap();
        let (_, gb) = loss_and_grad(&params, None, &x, 1).unwrap();

        let zero = GradientSet::zeros_like(&params);
        assert_eq!(flatten_grads(&zero), Vector::zeros(params.param_count()));

        let flat = flatten_grads(&ga);
        let back = unflatten_grads(&params, &flat).unwrap();
        assert_eq!(back.layers, ga.layers);

        // Flat L1 distance equals the sum of per-layer L1 distances.
        let diff = ga.sub_base(&gb).unwrap();
        let flat_l1 = crate::densemath::l1_norm(&flatten_grads(&diff));
        let per_layer: f64 = ga
            .layers
            .iter()
            .zip(&gb.layers)
            .map(|(a, b)| {
                a.dweight.sub(&b.dweight).unwrap().l1_sum()
                    + crate::densemath::l1_norm(&a.dbias.sub(&b.dbias).unwrap())
            })
            .sum();
        assert!((flat_l1 - per_layer).abs() < 1e-12);
    }

    #[test]
    fn sgd_reduces_loss_on_separable_toy() {
        let spec = mlp_spec(2, 8, 1, 2);
        let mut params = ModelParams::init(spec, &mut rng(31)).unwrap();
        let data: Vec<(Vector, usize)> = (0..20)
            .map(|i| {
                let side = i % 2;
                let offset = if side == 0 { -1.0 } else { 1.0 };
                let jitter = (i as f64) * 0.01;
                (Vector::new(vec![offset + jitter, offset - jitter]).unwrap(), side)
            })
            .collect();
        let (initial, _) = loss_and_grad_batch(&params, None, &data).unwrap();
        for _ in 0..50 {
            let (_, g) = loss_and_grad_batch(&params, None, &data).unwrap();
            for (i, lg) in g.layers.iter().enumerate() {
                let w = params.layer(i).weight.sub(&lg.dweight.scale(0.5)).unwrap();
                let b = params.layer(i).bias.sub(&lg.dbias.scale(0.5)).unwrap();
                params.layer_mut(i).weight = w;
                params.layer_mut(i).bias = b;
            }
        }
        let (fin, _) = loss_and_grad_batch(&params, None, &data).unwrap();
        assert!(fin < initial, "loss {initial} -> {fin}");
    }

    #[test]
    fn checkpoint_round_trip_is_lossless() {
        let params = small_params(37);
        let dir = std::env::temp_dir().join(format!("treelora-model-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("model.ckpt");
        params.save(&path).unwrap();
        let loaded = ModelParams::load(&path).unwrap();
        assert_eq!(params, loaded);
        assert_eq!(params.bit_hash(), loaded.bit_hash());
        std::fs::remove_dir_all(&dir).ok();
    }
}
