//! Minimal dense feed-forward networks: rectified hidden layers, linear
//! output, exact reverse-mode gradients, and SGD/Adam updates.
//!
//! Parameters are plain values; updates consume and return them, which
//! keeps evaluation trivially shareable across threads.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One dense layer: `w` is row-major `out x in`, `b` has length `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

/// Layered dense-network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    dims: Vec<usize>,
    layers: Vec<Layer>,
}

/// Gradients, shaped exactly like the parameters they refer to.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<Layer>,
}

impl MlpGrads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        MlpGrads {
            layers: params
                .layers
                .iter()
                .map(|l| Layer {
                    w: vec![0.0; l.w.len()],
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.w.iter_mut().zip(&b.w) {
                *x += y;
            }
            for (x, y) in a.b.iter_mut().zip(&b.b) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in self.layers.iter_mut() {
            for x in l.w.iter_mut() {
                *x *= factor;
            }
            for x in l.b.iter_mut() {
                *x *= factor;
            }
        }
    }
}

impl MlpParams {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_len(&self) -> usize {
        self.dims[0]
    }

    pub fn output_len(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.len() + l.b.len()).sum()
    }
}

/// Layer sizes for a head reading a state of dims `(m, k)` and scoring
/// every mode decision, with `n_hidden` hidden layers of width `omega`.
pub fn head_dims(m: usize, k: usize, omega: usize, n_hidden: usize) -> Vec<usize> {
    let mut dims = Vec::with_capacity(n_hidden + 2);
    dims.push(crate::env::state_len(m, k));
    dims.extend(std::iter::repeat(omega).take(n_hidden));
    dims.push(1usize << m);
    dims
}

/// Initializes weights uniformly in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
/// and biases to zero. Deterministic for a fixed RNG state.
pub fn init_mlp<R: Rng>(dims: &[usize], rng: &mut R) -> Result<MlpParams> {
    if dims.len() < 2 {
        return Err(Error::contract("a network needs at least two layer sizes"));
    }
    if dims.iter().any(|d| *d == 0) {
        return Err(Error::contract("layer sizes must be nonzero"));
    }
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for win in dims.windows(2) {
        let (n_in, n_out) = (win[0], win[1]);
        let scale = 1.0 / (n_in as f64).sqrt();
        let w = (0..n_in * n_out)
            .map(|_| rng.gen_range(-scale..scale))
            .collect();
        layers.push(Layer {
            w,
            b: vec![0.0; n_out],
        });
    }
    Ok(MlpParams {
        dims: dims.to_vec(),
        layers,
    })
}

/// Pre-activations and activations recorded by a forward pass, consumed
/// by [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input; `acts[l + 1]` is layer `l`'s output.
    acts: Vec<Vec<f64>>,
    preacts: Vec<Vec<f64>>,
}

/// Affine + rectifier chain; the last layer is linear.
pub fn forward(params: &MlpParams, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
    if x.len() != params.input_len() {
        return Err(Error::contract(format!(
            "input length {} != expected {}",
            x.len(),
            params.input_len()
        )));
    }
    let n_layers = params.layers.len();
    let mut acts = Vec::with_capacity(n_layers + 1);
    let mut preacts = Vec::with_capacity(n_layers);
    acts.push(x.to_vec());
    for (l, layer) in params.layers.iter().enumerate() {
        let n_in = params.dims[l];
        let n_out = params.dims[l + 1];
        let input = &acts[l];
        let mut z = layer.b.clone();
        for (o, zo) in z.iter_mut().enumerate() {
            let row = &layer.w[o * n_in..(o + 1) * n_in];
            let mut acc = 0.0;
            for (w, xi) in row.iter().zip(input.iter()) {
                acc += w * xi;
            }
            *zo += acc;
        }
        preacts.push(z.clone());
        if l + 1 == n_layers {
            acts.push(z);
        } else {
            acts.push(z.into_iter().map(|v| v.max(0.0)).collect());
        }
        let _ = n_out;
    }
    Ok((acts.last().unwrap().clone(), ForwardCache { acts, preacts }))
}

/// Output of the network without keeping a cache.
pub fn infer(params: &MlpParams, x: &[f64]) -> Result<Vec<f64>> {
    forward(params, x).map(|(y, _)| y)
}

/// Exact gradients of `y . dy` with respect to every parameter, given the
/// cache of the matching forward pass.
pub fn backward(params: &MlpParams, cache: &ForwardCache, dy: &[f64]) -> MlpGrads {
    let mut grads = MlpGrads::zeros_like(params);
    backward_accumulate(params, cache, dy, &mut grads);
    grads
}

/// Adds the gradients of `y . dy` into an existing accumulator; batch
/// loops use this to avoid reallocating per sample.
pub fn backward_accumulate(
    params: &MlpParams,
    cache: &ForwardCache,
    dy: &[f64],
    grads: &mut MlpGrads,
) {
    let n_layers = params.layers.len();
    debug_assert_eq!(dy.len(), params.output_len());
    let mut delta = dy.to_vec();
    for l in (0..n_layers).rev() {
        let n_in = params.dims[l];
        let n_out = params.dims[l + 1];
        if l + 1 != n_layers {
            // Rectifier derivative on this layer's pre-activations.
            for (d, z) in delta.iter_mut().zip(&cache.preacts[l]) {
                if *z <= 0.0 {
                    *d = 0.0;
                }
            }
        }
        let input = &cache.acts[l];
        let g = &mut grads.layers[l];
        for o in 0..n_out {
            let d = delta[o];
            g.b[o] += d;
            if d != 0.0 {
                let row = &mut g.w[o * n_in..(o + 1) * n_in];
                for (gw, xi) in row.iter_mut().zip(input.iter()) {
                    *gw += d * xi;
                }
            }
        }
        if l > 0 {
            let layer = &params.layers[l];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                if *d != 0.0 {
                    let row = &layer.w[o * n_in..(o + 1) * n_in];
                    for (p, w) in prev.iter_mut().zip(row.iter()) {
                        *p += d * w;
                    }
                }
            }
            delta = prev;
        }
    }
}

/// Update rule selector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum OptMethod {
    Sgd,
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptMethod {
    pub fn adam() -> Self {
        OptMethod::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Optimizer state: moment accumulators shaped like the parameters, a
/// step counter, and the hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptState {
    pub method: OptMethod,
    pub lr: f64,
    pub step: u64,
    pub m: Vec<Layer>,
    pub v: Vec<Layer>,
}

impl OptState {
    pub fn new(method: OptMethod, lr: f64, params: &MlpParams) -> Self {
        let zeros: Vec<Layer> = params
            .layers
            .iter()
            .map(|l| Layer {
                w: vec![0.0; l.w.len()],
                b: vec![0.0; l.b.len()],
            })
            .collect();
        OptState {
            method,
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn sgd(lr: f64, params: &MlpParams) -> Self {
        Self::new(OptMethod::Sgd, lr, params)
    }

    pub fn adam(lr: f64, params: &MlpParams) -> Self {
        Self::new(OptMethod::adam(), lr, params)
    }
}

/// Applies one optimizer step, returning the updated parameters and
/// state. SGD is the literal `p <- p - lr * g`; Adam applies
/// bias-corrected first/second moments.
pub fn opt_step(mut params: MlpParams, grads: &MlpGrads, mut opt: OptState) -> (MlpParams, OptState) {
    opt.step += 1;
    match opt.method {
        OptMethod::Sgd => {
            for (layer, g) in params.layers.iter_mut().zip(&grads.layers) {
                for (p, gw) in layer.w.iter_mut().zip(&g.w) {
                    *p -= opt.lr * gw;
                }
                for (p, gb) in layer.b.iter_mut().zip(&g.b) {
                    *p -= opt.lr * gb;
                }
            }
        }
        OptMethod::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            let t = opt.step as i32;
            let corr1 = 1.0 - beta1.powi(t);
            let corr2 = 1.0 - beta2.powi(t);
            for (((layer, g), m), v) in params
                .layers
                .iter_mut()
                .zip(&grads.layers)
                .zip(opt.m.iter_mut())
                .zip(opt.v.iter_mut())
            {
                for i in 0..layer.w.len() {
                    m.w[i] = beta1 * m.w[i] + (1.0 - beta1) * g.w[i];
                    v.w[i] = beta2 * v.w[i] + (1.0 - beta2) * g.w[i] * g.w[i];
                    layer.w[i] -= opt.lr * (m.w[i] / corr1) / ((v.w[i] / corr2).sqrt() + epsilon);
                }
                for i in 0..layer.b.len() {
                    m.b[i] = beta1 * m.b[i] + (1.0 - beta1) * g.b[i];
                    v.b[i] = beta2 * v.b[i] + (1.0 - beta2) * g.b[i] * g.b[i];
                    layer.b[i] -= opt.lr * (m.b[i] / corr1) / ((v.b[i] / corr2).sqrt() + epsilon);
                }
            }
        }
    }
    (params, opt)
}

/// On-disk network snapshot. Weights are stored as nested rows; floats
/// survive the JSON round trip bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub dims: Vec<usize>,
    pub layers: Vec<CheckpointLayer>,
    pub opt: OptState,
    pub rng: ChaCha8Rng,
    pub config_hash: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointLayer {
    pub w: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Checkpoint {
    pub fn capture(params: &MlpParams, opt: &OptState, rng: &ChaCha8Rng, config_hash: u64) -> Self {
        let layers = params
            .layers
            .iter()
            .enumerate()
            .map(|(l, layer)| {
                let n_in = params.dims[l];
                CheckpointLayer {
                    w: layer.w.chunks(n_in).map(|row| row.to_vec()).collect(),
                    b: layer.b.clone(),
                }
            })
            .collect();
        Checkpoint {
            dims: params.dims.clone(),
            layers,
            opt: opt.clone(),
            rng: rng.clone(),
            config_hash,
        }
    }

    pub fn restore(&self) -> Result<(MlpParams, OptState)> {
        if self.dims.len() < 2 || self.layers.len() != self.dims.len() - 1 {
            return Err(Error::contract("checkpoint layer count disagrees with dims"));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, cl) in self.layers.iter().enumerate() {
            let (n_in, n_out) = (self.dims[l], self.dims[l + 1]);
            if cl.w.len() != n_out || cl.w.iter().any(|row| row.len() != n_in) || cl.b.len() != n_out
            {
                return Err(Error::contract("checkpoint layer shape mismatch"));
            }
            layers.push(Layer {
                w: cl.w.concat(),
                b: cl.b.clone(),
            });
        }
        Ok((
            MlpParams {
                dims: self.dims.clone(),
                layers,
            },
            self.opt.clone(),
        ))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// FNV-1a over a byte string; used to stamp configs into checkpoints.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf29ce484222325u64;
    for b in bytes {
        hash ^= *b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn head_geometry_matches_full_size_setup() {
        // Ten stations, four mobiles, width 512: state 94 in, 1024 out.
        assert_eq!(
            head_dims(10, 4, 512, 4),
            vec![94, 512, 512, 512, 512, 1024]
        );
    }

    #[test]
    fn init_shapes_and_determinism() {
        let p = init_mlp(&[2, 1], &mut rng(0)).unwrap();
        assert_eq!(p.layers().len(), 1);
        assert_eq!(p.layers()[0].w.len(), 2);
        assert_eq!(p.layers()[0].b, vec![0.0]);

        let a = init_mlp(&[3, 5, 2], &mut rng(9)).unwrap();
        let b = init_mlp(&[3, 5, 2], &mut rng(9)).unwrap();
        assert_eq!(a, b);

        assert!(init_mlp(&[4], &mut rng(0)).is_err());
        assert!(init_mlp(&[4, 0, 2], &mut rng(0)).is_err());
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut p = init_mlp(&[3, 4, 2], &mut rng(1)).unwrap();
        for l in p.layers_mut() {
            l.w.iter_mut().for_each(|w| *w = 0.0);
        }
        let (y, _) = forward(&p, &[1.0, -2.0, 3.0]).unwrap();
        assert_eq!(y, vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer_passes_input_through() {
        let mut p = init_mlp(&[2, 2], &mut rng(2)).unwrap();
        p.layers_mut()[0].w = vec![1.0, 0.0, 0.0, 1.0];
        p.layers_mut()[0].b = vec![0.0, 0.0];
        let (y, _) = forward(&p, &[0.7, -1.3]).unwrap();
        assert_eq!(y, vec![0.7, -1.3]);
    }

    #[test]
    fn hand_computed_single_hidden_unit() {
        // y = w2 * relu(w1 * x + b1) + b2 with w1=2, b1=-1, w2=3, b2=0.5.
        let mut p = init_mlp(&[1, 1, 1], &mut rng(3)).unwrap();
        p.layers_mut()[0].w = vec![2.0];
        p.layers_mut()[0].b = vec![-1.0];
        p.layers_mut()[1].w = vec![3.0];
        p.layers_mut()[1].b = vec![0.5];
        let (y, _) = forward(&p, &[2.0]).unwrap();
        assert!((y[0] - (3.0 * (2.0 * 2.0 - 1.0) + 0.5)).abs() < 1e-15);
        // Rectifier clamps the negative pre-activation.
        let (y, _) = forward(&p, &[0.0]).unwrap();
        assert!((y[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let p = init_mlp(&[3, 2], &mut rng(4)).unwrap();
        assert!(forward(&p, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_dy_gives_zero_grads() {
        let p = init_mlp(&[3, 4, 2], &mut rng(5)).unwrap();
        let (_, cache) = forward(&p, &[0.3, -0.7, 1.1]).unwrap();
        let g = backward(&p, &cache, &[0.0, 0.0]);
        assert!(g.layers.iter().all(|l| l.w.iter().all(|w| *w == 0.0)));
        assert!(g.layers.iter().all(|l| l.b.iter().all(|b| *b == 0.0)));
    }

    #[test]
    fn scalar_linear_gradient_is_input_times_dy() {
        let mut p = init_mlp(&[1, 1], &mut rng(6)).unwrap();
        p.layers_mut()[0].w = vec![0.4];
        let (_, cache) = forward(&p, &[2.5]).unwrap();
        let g = backward(&p, &cache, &[1.5]);
        assert!((g.layers[0].w[0] - 2.5 * 1.5).abs() < 1e-15);
        assert!((g.layers[0].b[0] - 1.5).abs() < 1e-15);
    }

    /// Central-difference oracle for d(y . dy)/d(param).
    fn numeric_grad(p: &MlpParams, x: &[f64], dy: &[f64], layer: usize, bias: bool, idx: usize) -> f64 {
        let h = 1e-5;
        let eval = |params: &MlpParams| -> f64 {
            let (y, _) = forward(params, x).unwrap();
            y.iter().zip(dy).map(|(a, b)| a * b).sum()
        };
        let mut plus = p.clone();
        let mut minus = p.clone();
        if bias {
            plus.layers_mut()[layer].b[idx] += h;
            minus.layers_mut()[layer].b[idx] -= h;
        } else {
            plus.layers_mut()[layer].w[idx] += h;
            minus.layers_mut()[layer].w[idx] -= h;
        }
        (eval(&plus) - eval(&minus)) / (2.0 * h)
    }

    #[test]
    fn backprop_matches_central_differences() {
        let mut r = rng(7);
        let p = init_mlp(&[4, 8, 8, 3], &mut r).unwrap();
        let x: Vec<f64> = (0..4).map(|_| r.gen_range(-1.0..1.0)).collect();
        let dy: Vec<f64> = (0..3).map(|_| r.gen_range(-1.0..1.0)).collect();
        let (_, cache) = forward(&p, &x).unwrap();
        let g = backward(&p, &cache, &dy);
        let mut worst = 0.0f64;
        for (l, layer) in g.layers.iter().enumerate() {
            for (i, gw) in layer.w.iter().enumerate() {
                let num = numeric_grad(&p, &x, &dy, l, false, i);
                let denom = gw.abs().max(num.abs()).max(1e-8);
                worst = worst.max((gw - num).abs() / denom);
            }
            for (i, gb) in layer.b.iter().enumerate() {
                let num = numeric_grad(&p, &x, &dy, l, true, i);
                let denom = gb.abs().max(num.abs()).max(1e-8);
                worst = worst.max((gb - num).abs() / denom);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn sgd_applies_literal_update() {
        let mut p = init_mlp(&[1, 1], &mut rng(8)).unwrap();
        p.layers_mut()[0].w = vec![1.0];
        let opt = OptState::sgd(0.1, &p);
        let mut g = MlpGrads::zeros_like(&p);
        g.layers[0].w[0] = 2.0;
        let (p2, opt2) = opt_step(p, &g, opt);
        assert!((p2.layers()[0].w[0] - 0.8).abs() < 1e-15);
        assert_eq!(opt2.step, 1);
    }

    #[test]
    fn adam_descends_on_a_quadratic() {
        // f(w) = w^2 starting from w = 1. Momentum overshoots zero around
        // step 11, so per-step monotonicity cannot hold; the magnitude
        // shrinks monotonically up to the overshoot and ends far below
        // the start.
        let mut p = init_mlp(&[1, 1], &mut rng(9)).unwrap();
        p.layers_mut()[0].w = vec![1.0];
        let mut opt = OptState::adam(0.1, &p);
        let mut prev = 1.0f64;
        for step in 0..100 {
            let w = p.layers()[0].w[0];
            let mut g = MlpGrads::zeros_like(&p);
            g.layers[0].w[0] = 2.0 * w;
            let (np, nopt) = opt_step(p, &g, opt);
            p = np;
            opt = nopt;
            let now = p.layers()[0].w[0].abs();
            if step < 10 {
                assert!(now < prev, "step {step}: |w| did not shrink: {now} >= {prev}");
            }
            prev = now;
        }
        let final_w = p.layers()[0].w[0].abs();
        assert!(final_w < 0.05, "final |w| = {final_w}");
    }

    #[test]
    fn zero_grads_leave_params_but_advance_the_counter() {
        let p = init_mlp(&[2, 3, 1], &mut rng(10)).unwrap();
        let before = p.clone();
        let g = MlpGrads::zeros_like(&p);
        let (p2, opt2) = opt_step(p, &g, OptState::adam(0.01, &before));
        assert_eq!(p2, before);
        assert_eq!(opt2.step, 1);
        let (p3, opt3) = opt_step(p2, &g, OptState::sgd(0.5, &before));
        assert_eq!(p3, before);
        assert_eq!(opt3.step, 1);
    }

    #[test]
    fn forward_backward_are_bitwise_stable() {
        let mut r = rng(11);
        let p = init_mlp(&[5, 7, 2], &mut r).unwrap();
        let x: Vec<f64> = (0..5).map(|_| r.gen_range(-1.0..1.0)).collect();
        let (y1, c1) = forward(&p, &x).unwrap();
        let (y2, c2) = forward(&p, &x).unwrap();
        assert_eq!(y1, y2);
        let g1 = backward(&p, &c1, &[1.0, -1.0]);
        let g2 = backward(&p, &c2, &[1.0, -1.0]);
        for (a, b) in g1.layers.iter().zip(&g2.layers) {
            assert_eq!(a.w, b.w);
            assert_eq!(a.b, b.b);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let mut r = rng(12);
        let p = init_mlp(&[4, 6, 3], &mut r).unwrap();
        let opt = OptState::adam(0.003, &p);
        let ck = Checkpoint::capture(&p, &opt, &r, fnv1a(b"cfg"));
        let js = serde_json::to_string(&ck).unwrap();
        let back: Checkpoint = serde_json::from_str(&js).unwrap();
        let (p2, opt2) = back.restore().unwrap();
        assert_eq!(p, p2);
        assert_eq!(opt, opt2);
        assert_eq!(back.config_hash, ck.config_hash);
        assert_eq!(back.rng, r);
    }
}
