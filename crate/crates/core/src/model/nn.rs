//! Dense layers and MLPs over row-batched activations, with exact backward.

use nalgebra::{DMatrix, DVector};

/// `y = x·W + b`, with `W` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: DMatrix::zeros(fan_in, fan_out),
            bias: DVector::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.nrows()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.ncols()
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = x * &self.weight;
        for (c, mut col) in y.column_iter_mut().enumerate() {
            col.add_scalar_mut(self.bias[c]);
        }
        y
    }

    /// Accumulates parameter gradients into `grad` and returns `∂L/∂x`.
    fn backward(&self, x: &DMatrix<f64>, dy: &DMatrix<f64>, grad: &mut Dense) -> DMatrix<f64> {
        grad.weight += x.transpose() * dy;
        for (c, col) in dy.column_iter().enumerate() {
            grad.bias[c] += col.sum();
        }
        dy * self.weight.transpose()
    }
}

/// Dense layers with ReLU between them; `relu_last` also rectifies the output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub relu_last: bool,
}

/// Inputs to every layer plus the final pre-activation.
#[derive(Debug, Clone)]
pub(crate) struct MlpCache {
    inputs: Vec<DMatrix<f64>>,
    last_pre: Option<DMatrix<f64>>,
    /// Smallest |pre-activation| over rectified units.
    pub(crate) margin: f64,
}

impl Mlp {
    pub fn in_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self.layers.iter().map(|l| Dense::zeros(l.fan_in(), l.fan_out())).collect(),
            relu_last: self.relu_last,
        }
    }

    pub fn forward(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        self.forward_cached(x.clone()).0
    }

    pub(crate) fn forward_cached(&self, x: DMatrix<f64>) -> (DMatrix<f64>, MlpCache) {
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut h = x;
        let last = self.layers.len() - 1;
        let mut last_pre = None;
        let mut margin = f64::INFINITY;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(&h);
            inputs.push(h);
            if i < last || self.relu_last {
                margin = y.iter().fold(margin, |m, v| m.min(v.abs()));
                if i == last {
                    last_pre = Some(y.clone());
                }
                y.apply(|v| *v = v.max(0.0));
            }
            h = y;
        }
        (
            h,
            MlpCache {
                inputs,
                last_pre,
                margin,
            },
        )
    }

    /// Accumulates into `grad` and returns `∂L/∂input`.
    pub(crate) fn backward(&self, cache: &MlpCache, dy: DMatrix<f64>, grad: &mut Mlp) -> DMatrix<f64> {
        let mut d = dy;
        if self.relu_last {
            let pre = cache.last_pre.as_ref().expect("cached pre-activation");
            relu_mask(&mut d, pre);
        }
        for i in (0..self.layers.len()).rev() {
            d = self.layers[i].backward(&cache.inputs[i], &d, &mut grad.layers[i]);
            if i > 0 {
                // input to layer i is relu(pre_{i-1}); positive iff pre > 0
                relu_mask(&mut d, &cache.inputs[i]);
            }
        }
        d
    }
}

impl MlpCache {
    /// Feeds the on/off state of every rectified unit into `h`.
    pub(crate) fn hash_pattern(&self, h: &mut impl std::hash::Hasher) {
        for act in self.inputs.iter().skip(1).chain(self.last_pre.iter()) {
            for v in act.iter() {
                h.write_u8((*v > 0.0) as u8);
            }
        }
    }
}

/// Zeroes gradient entries where the activation was not positive.
fn relu_mask(d: &mut DMatrix<f64>, act: &DMatrix<f64>) {
    d.zip_apply(act, |g, a| {
        if a <= 0.0 {
            *g = 0.0;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_quadratic_gradient_is_closed_form() {
        // L = ½‖xW + b − y‖²  ⇒  ∂L/∂W = xᵀ(r), ∂L/∂b = Σ rows of r
        let layer = Dense {
            weight: DMatrix::from_row_slice(2, 2, &[0.5, -1.0, 2.0, 0.25]),
            bias: DVector::from_vec(vec![0.1, -0.2]),
        };
        let mlp = Mlp {
            layers: vec![layer.clone()],
            relu_last: false,
        };
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, -2.0]);
        let y = DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 1.0, 0.0, -1.0, 2.0]);
        let (out, cache) = mlp.forward_cached(x.clone());
        let r = &out - &y;
        let mut grad = mlp.zeros_like();
        let dx = mlp.backward(&cache, r.clone(), &mut grad);
        let dw = x.transpose() * &r;
        assert!((grad.layers[0].weight.clone() - dw).abs().max() < 1e-12);
        let db: Vec<f64> = r.column_iter().map(|c| c.sum()).collect();
        assert!((grad.layers[0].bias[0] - db[0]).abs() < 1e-12);
        assert!((grad.layers[0].bias[1] - db[1]).abs() < 1e-12);
        assert!((dx - &r * layer.weight.transpose()).abs().max() < 1e-12);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let mlp = Mlp {
            layers: vec![
                Dense {
                    weight: DMatrix::from_element(3, 4, 0.3),
                    bias: DVector::from_element(4, 0.1),
                },
                Dense {
                    weight: DMatrix::from_element(4, 2, -0.2),
                    bias: DVector::zeros(2),
                },
            ],
            relu_last: true,
        };
        let x = DMatrix::from_element(5, 3, 1.0);
        let (out, cache) = mlp.forward_cached(x);
        let mut grad = mlp.zeros_like();
        mlp.backward(&cache, DMatrix::zeros(out.nrows(), out.ncols()), &mut grad);
        assert_eq!(grad, mlp.zeros_like());
    }
}
