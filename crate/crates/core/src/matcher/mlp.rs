//! Fully connected layers with hand-written backpropagation and Adam.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::rng::PuzzleRng;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out x in`, row-major.
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
        }
    }

    /// Uniform fan-in initialization, `U(-b, b)` with `b = sqrt(gain / fan_in)`
    /// (`gain = 6` before a ReLU, `3` otherwise); zero bias.
    pub fn init(input: usize, output: usize, relu: bool, rng: &mut PuzzleRng) -> Self {
        let gain = if relu { 6.0 } else { 3.0 };
        let bound = (gain / input.max(1) as f64).sqrt();
        Self {
            weight: Array2::from_shape_fn((output, input), |_| rng.uniform(-bound, bound)),
            bias: Array1::zeros(output),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Rows of `x` are samples.
    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight.t()) + &self.bias
    }
}

/// Stack of dense layers with ReLU between layers and, optionally, after the
/// last one.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub relu_last: bool,
}

/// Per-layer activations kept for the backward pass.
#[derive(Debug)]
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    pre_activations: Vec<Array2<f64>>,
}

#[derive(Clone, Debug)]
pub struct MlpGrads {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn init(widths: &[usize], relu_last: bool, rng: &mut PuzzleRng) -> Self {
        assert!(widths.len() >= 2, "an MLP needs at least one layer");
        let count = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::init(w[0], w[1], i + 1 < count || relu_last, rng))
            .collect();
        Self { layers, relu_last }
    }

    pub fn zeros(widths: &[usize], relu_last: bool) -> Self {
        Self {
            layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
            relu_last,
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].input_dim()];
        w.extend(self.layers.iter().map(Dense::output_dim));
        w
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    fn activates(&self, layer: usize) -> bool {
        layer + 1 < self.layers.len() || self.relu_last
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.forward(a.view());
            if self.activates(i) {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        a
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> (Array2<f64>, MlpCache) {
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre_activations: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = layer.forward(a.view());
            cache.inputs.push(a);
            a = if self.activates(i) {
                z.mapv(|v| v.max(0.0))
            } else {
                z.clone()
            };
            cache.pre_activations.push(z);
        }
        (a, cache)
    }

    /// Returns parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, upstream: Array2<f64>) -> (MlpGrads, Array2<f64>) {
        let mut grads: Vec<Dense> = Vec::with_capacity(self.layers.len());
        let mut g = upstream;
        for i in (0..self.layers.len()).rev() {
            if self.activates(i) {
                ndarray::Zip::from(&mut g)
                    .and(&cache.pre_activations[i])
                    .for_each(|gv, &z| {
                        if z <= 0.0 {
                            *gv = 0.0
                        }
                    });
            }
            let weight = g.t().dot(&cache.inputs[i]);
            let bias = g.sum_axis(Axis(0));
            g = g.dot(&self.layers[i].weight);
            grads.push(Dense { weight, bias });
        }
        grads.reverse();
        (MlpGrads { layers: grads }, g)
    }

    pub fn params(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

impl MlpGrads {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Self {
            layers: mlp
                .layers
                .iter()
                .map(|l| Dense::zeros(l.input_dim(), l.output_dim()))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight += &b.weight;
            a.bias += &b.bias;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient tensor count");
        if self.first.is_empty() {
            self.first = grads.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let (m, v) = (&mut self.first[k], &mut self.second[k]);
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(n: usize, d: usize, seed: u64) -> Array2<f64> {
        let mut rng = PuzzleRng::new(seed);
        Array2::from_shape_fn((n, d), |_| rng.uniform(-1.0, 1.0))
    }

    #[test]
    fn widths_and_shapes() {
        let mut rng = PuzzleRng::new(1);
        let mlp = Mlp::init(&[12, 8, 5], false, &mut rng);
        assert_eq!(mlp.widths(), vec![12, 8, 5]);
        assert_eq!(mlp.forward(random(3, 12, 2).view()).dim(), (3, 5));
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = PuzzleRng::new(3);
        let mlp = Mlp::init(&[6, 7, 4], true, &mut rng);
        let x = random(5, 6, 4);
        let w = random(5, 4, 5);
        let loss = |m: &Mlp, x: &Array2<f64>| (m.forward(x.view()) * &w).sum();
        let (_, cache) = mlp.forward_cached(x.view());
        let (grads, dx) = mlp.backward(&cache, w.clone());
        let h = 1e-6;
        for (li, layer) in mlp.layers.iter().enumerate() {
            for idx in ndarray::indices(layer.weight.dim()) {
                let mut plus = mlp.clone();
                plus.layers[li].weight[idx] += h;
                let mut minus = mlp.clone();
                minus.layers[li].weight[idx] -= h;
                let fd = (loss(&plus, &x) - loss(&minus, &x)) / (2.0 * h);
                assert!((fd - grads.layers[li].weight[idx]).abs() < 1e-6);
            }
        }
        for idx in ndarray::indices(x.dim()) {
            let mut plus = x.clone();
            plus[idx] += h;
            let mut minus = x.clone();
            minus[idx] -= h;
            let fd = (loss(&mlp, &plus) - loss(&mlp, &minus)) / (2.0 * h);
            assert!((fd - dx[idx]).abs() < 1e-6);
        }
    }

    #[test]
    fn adam_zero_learning_rate_is_noop() {
        let mut rng = PuzzleRng::new(6);
        let mut mlp = Mlp::init(&[3, 2], false, &mut rng);
        let before = mlp.clone();
        let grads = MlpGrads {
            layers: vec![Dense {
                weight: Array2::ones((2, 3)),
                bias: Array1::ones(2),
            }],
        };
        let mut adam = Adam::new(0.0);
        adam.step(mlp.params_mut(), grads.slices());
        assert_eq!(mlp, before);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut x = [3.0, -2.0];
        let mut adam = Adam::new(0.1);
        for _ in 0..500 {
            let g: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
            adam.step(vec![&mut x[..]], vec![&g[..]]);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2));
    }
}
