//! Shared two-stage neighborhood network: per-neighbor MLP, max-pool over the
//! neighborhood, concatenation with the point's own embedding, second MLP.

use nalgebra::DMatrix;

use super::nn::{Mlp, MlpCache};

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodNet {
    pub stage1: Mlp,
    pub stage2: Mlp,
}

#[derive(Debug, Clone)]
pub(crate) struct BlockCache {
    n: usize,
    k: usize,
    stage1: MlpCache,
    stage2: MlpCache,
    /// Row of the stage-1 output that won the max for each `(point, channel)`.
    argmax: Vec<usize>,
    /// Distance to the nearest kink: ReLU pre-activation or max-pool runner-up.
    pub(crate) margin: f64,
}

impl BlockCache {
    pub(crate) fn hash_pattern(&self, h: &mut impl std::hash::Hasher) {
        self.stage1.hash_pattern(h);
        for &a in &self.argmax {
            h.write_usize(a);
        }
        self.stage2.hash_pattern(h);
    }
}

impl NeighborhoodNet {
    pub fn in_dim(&self) -> usize {
        self.stage1.in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.stage2.out_dim()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            stage1: self.stage1.zeros_like(),
            stage2: self.stage2.zeros_like(),
        }
    }

    /// `neigh` holds `n·k` rows (point-major), `own` holds `n` rows.
    pub(crate) fn forward(
        &self,
        neigh: &DMatrix<f64>,
        own: &DMatrix<f64>,
        k: usize,
    ) -> (DMatrix<f64>, BlockCache) {
        let n = own.nrows();
        debug_assert_eq!(neigh.nrows(), n * k);
        let din = own.ncols();
        let mut stacked = DMatrix::zeros(n * k + n, din);
        stacked.rows_mut(0, n * k).copy_from(neigh);
        stacked.rows_mut(n * k, n).copy_from(own);
        let (h, c1) = self.stage1.forward_cached(stacked);
        let width = h.ncols();

        let mut concat = DMatrix::zeros(n, 2 * width);
        let mut argmax = vec![0; n * width];
        let mut margin = c1.margin;
        for c in 0..width {
            let col = h.column(c);
            for i in 0..n {
                let mut best = i * k;
                let mut second = f64::NEG_INFINITY;
                for r in i * k + 1..(i + 1) * k {
                    if col[r] > col[best] {
                        second = col[best];
                        best = r;
                    } else {
                        second = second.max(col[r]);
                    }
                }
                // ties among rectified zeros carry no gradient either way
                if col[best] > 0.0 {
                    margin = margin.min(col[best] - second);
                }
                argmax[i * width + c] = best;
                concat[(i, c)] = col[best];
                concat[(i, width + c)] = col[n * k + i];
            }
        }
        let (out, c2) = self.stage2.forward_cached(concat);
        let cache = BlockCache {
            n,
            k,
            margin: margin.min(c2.margin),
            stage1: c1,
            stage2: c2,
            argmax,
        };
        (out, cache)
    }

    /// Returns `(∂L/∂neigh, ∂L/∂own)`.
    pub(crate) fn backward(
        &self,
        cache: &BlockCache,
        dy: DMatrix<f64>,
        grad: &mut NeighborhoodNet,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let (n, k) = (cache.n, cache.k);
        let dconcat = self.stage2.backward(&cache.stage2, dy, &mut grad.stage2);
        let width = dconcat.ncols() / 2;
        let mut dh = DMatrix::zeros(n * k + n, width);
        for c in 0..width {
            for i in 0..n {
                dh[(cache.argmax[i * width + c], c)] += dconcat[(i, c)];
                dh[(n * k + i, c)] += dconcat[(i, width + c)];
            }
        }
        let dstacked = self.stage1.backward(&cache.stage1, dh, &mut grad.stage1);
        let dneigh = dstacked.rows(0, n * k).into_owned();
        let down = dstacked.rows(n * k, n).into_owned();
        (dneigh, down)
    }
}
