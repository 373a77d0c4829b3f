//! Graph-convolution layer in non-batched and batched forms.
//!
//! The layer computes, per item `b`:
//!
//! ```text
//! Y[b] = sum_ch A[b][ch] * (X[b] * W[ch] + bias[ch])
//! ```
//!
//! where `A[b][ch]` is a square sparse adjacency matrix with unit self-loops,
//! `X[b]` the node features, and `W[ch]` a per-channel weight matrix.
//!
//! The non-batched form issues one MatMul, one Add, and one SpMM per
//! `(item, channel)` pair plus one element-wise accumulation per item. The
//! batched form reshapes the features to one stacked `(nodes * batchsize) x
//! n_X` matrix (a metadata-only view when the features are already stacked),
//! runs one MatMul, one Add, and one batched SpMM per channel, and one final
//! accumulation: launch counts drop from `3 * batchsize * channel +
//! batchsize` to `3 * channel + 1`.

use crate::dense::{DenseMatrix, DenseView};
use crate::engine::{batched_spmm, Algorithm, BatchedSpmmRequest, DenseInput, LaunchCounter};
use crate::error::{Error, Result};
use crate::planner::{plan_batch, LaunchPlan, Layout, PlanInput};
use crate::scalar::Scalar;
use crate::sparse::{coo_to_csr, CsrMatrix, SparseBatch, SparseTensorMatrix};

/// Node features for a batch: one matrix per item, or the items stacked on
/// top of each other as one `(nodes * batchsize) x n_X` matrix.
#[derive(Debug, Clone)]
pub enum Features<T: Scalar> {
    PerItem(Vec<DenseMatrix<T>>),
    Stacked(DenseMatrix<T>),
}

/// Validated inputs of one graph-convolution layer call.
#[derive(Debug, Clone)]
pub struct GraphConvInputs<T: Scalar> {
    /// `adjacency[b][ch]`, each square with side equal to the node count.
    adjacency: Vec<Vec<SparseTensorMatrix<T>>>,
    features: Features<T>,
    /// `weights[ch]`, each `n_X x n_W`.
    weights: Vec<DenseMatrix<T>>,
    /// `bias[ch]`, each of length `n_W`.
    bias: Vec<Vec<T>>,
    nodes: usize,
    feature_cols: usize,
}

impl<T: Scalar> GraphConvInputs<T> {
    pub fn new(
        adjacency: Vec<Vec<SparseTensorMatrix<T>>>,
        features: Features<T>,
        weights: Vec<DenseMatrix<T>>,
        bias: Vec<Vec<T>>,
    ) -> Result<Self> {
        let batchsize = adjacency.len();
        if batchsize == 0 {
            return Err(Error::shape("adjacency batch must be nonempty"));
        }
        let channel = adjacency[0].len();
        if channel == 0 {
            return Err(Error::shape("at least one channel required"));
        }
        if adjacency.iter().any(|per_ch| per_ch.len() != channel) {
            return Err(Error::shape("every item must have the same channel count"));
        }
        let nodes = adjacency[0][0].rows();
        for per_ch in &adjacency {
            for a in per_ch {
                if a.rows() != nodes || a.cols() != nodes {
                    return Err(Error::shape(format!(
                        "adjacency must be square {nodes}x{nodes}, got {}x{}",
                        a.rows(),
                        a.cols()
                    )));
                }
            }
        }
        let feature_cols = match &features {
            Features::PerItem(parts) => {
                if parts.len() != batchsize {
                    return Err(Error::shape(format!(
                        "{} feature matrices for {batchsize} items",
                        parts.len()
                    )));
                }
                let n_x = parts[0].cols();
                for x in parts {
                    if x.rows() != nodes || x.cols() != n_x {
                        return Err(Error::shape("features must all be nodes x n_X"));
                    }
                }
                n_x
            }
            Features::Stacked(m) => {
                if m.rows() != nodes * batchsize {
                    return Err(Error::shape(format!(
                        "stacked features have {} rows, expected nodes * batchsize = {}",
                        m.rows(),
                        nodes * batchsize
                    )));
                }
                m.cols()
            }
        };
        if weights.len() != channel || bias.len() != channel {
            return Err(Error::shape(
                "weights and bias must have one entry per channel",
            ));
        }
        let n_w = weights[0].cols();
        for w in &weights {
            if w.rows() != feature_cols || w.cols() != n_w {
                return Err(Error::shape("weights must all be n_X x n_W"));
            }
        }
        if bias.iter().any(|b| b.len() != n_w) {
            return Err(Error::shape("bias vectors must have length n_W"));
        }
        Ok(Self {
            adjacency,
            features,
            weights,
            bias,
            nodes,
            feature_cols,
        })
    }

    pub fn batchsize(&self) -> usize {
        self.adjacency.len()
    }

    pub fn channels(&self) -> usize {
        self.adjacency[0].len()
    }

    pub fn nodes(&self) -> usize {
        self.nodes
    }

    pub fn feature_cols(&self) -> usize {
        self.feature_cols
    }

    pub fn output_cols(&self) -> usize {
        self.weights[0].cols()
    }

    pub fn features(&self) -> &Features<T> {
        &self.features
    }

    pub fn weights(&self) -> &[DenseMatrix<T>] {
        &self.weights
    }

    pub fn bias(&self) -> &[Vec<T>] {
        &self.bias
    }

    pub fn adjacency(&self) -> &[Vec<SparseTensorMatrix<T>>] {
        &self.adjacency
    }

    /// Item `b`'s feature matrix. For stacked features this is a borrowed
    /// row window into the shared buffer; no elements are copied.
    pub fn feature_view(&self, b: usize) -> DenseView<'_, T> {
        match &self.features {
            Features::PerItem(parts) => parts[b].view(),
            Features::Stacked(m) => m.row_view(b * self.nodes..(b + 1) * self.nodes),
        }
    }

    fn spmm_plan(&self) -> Result<LaunchPlan> {
        let input = PlanInput::new(
            Layout::SparseTensor,
            vec![self.nodes; self.batchsize()],
            self.output_cols(),
        )?
        .with_element_bytes(std::mem::size_of::<T>())?;
        Ok(plan_batch(&input))
    }
}

/// Per-parameter gradients of one layer call.
#[derive(Debug, Clone)]
pub struct GraphConvGradients<T: Scalar> {
    /// `d loss / d X[b]`, per item.
    pub features: Vec<DenseMatrix<T>>,
    /// `d loss / d W[ch]`, per channel.
    pub weights: Vec<DenseMatrix<T>>,
    /// `d loss / d bias[ch]`, per channel.
    pub bias: Vec<Vec<T>>,
}

/// Non-batched forward pass: loops items and channels, one kernel-equivalent
/// launch per MatMul, Add, and SpMM, plus one accumulation per item.
pub fn graph_convolution_naive<T: Scalar>(
    inputs: &GraphConvInputs<T>,
    counter: &mut LaunchCounter,
) -> Result<Vec<DenseMatrix<T>>> {
    let n_w = inputs.output_cols();
    let mut outputs = Vec::with_capacity(inputs.batchsize());
    for b in 0..inputs.batchsize() {
        let x = inputs.feature_view(b);
        let mut per_channel = Vec::with_capacity(inputs.channels());
        for ch in 0..inputs.channels() {
            let u = x.matmul(&inputs.weights[ch])?;
            counter.record_launches(1); // MatMul
            let biased = u.add_bias(&inputs.bias[ch])?;
            counter.record_launches(1); // Add
            let c = crate::kernels::spmm_baseline(&inputs.adjacency[b][ch], &biased)?;
            counter.record_launches(1); // SpMM
            per_channel.push(c);
        }
        let mut y = DenseMatrix::zeros(inputs.nodes, n_w);
        for c in &per_channel {
            y.add_assign(c)?;
        }
        counter.record_launches(1); // element-wise accumulation
        outputs.push(y);
    }
    Ok(outputs)
}

/// Batched forward pass: one MatMul, one Add, and one batched SpMM per
/// channel over the whole mini-batch, plus one final accumulation. Returns
/// the stacked `(nodes * batchsize) x n_W` output.
pub fn graph_convolution_batched<T: Scalar>(
    inputs: &GraphConvInputs<T>,
    counter: &mut LaunchCounter,
) -> Result<DenseMatrix<T>> {
    let batchsize = inputs.batchsize();
    let nodes = inputs.nodes;
    let n_w = inputs.output_cols();

    // Reshape to the stacked layout. When the features already live in one
    // buffer this is a borrowed view; per-item features are stacked once.
    let owned_stack: Option<DenseMatrix<T>> = match &inputs.features {
        Features::Stacked(_) => None,
        Features::PerItem(parts) => {
            let refs: Vec<&DenseMatrix<T>> = parts.iter().collect();
            Some(DenseMatrix::stack_rows(&refs)?)
        }
    };
    let xr: DenseView<'_, T> = match (&inputs.features, &owned_stack) {
        (Features::Stacked(m), _) => m.view(),
        (_, Some(stack)) => stack.view(),
        _ => unreachable!(),
    };

    let plan = inputs.spmm_plan()?;
    let mut per_channel: Vec<DenseMatrix<T>> = Vec::with_capacity(inputs.channels());
    for ch in 0..inputs.channels() {
        let u = xr.matmul(&inputs.weights[ch])?;
        counter.record_launches(1); // MatMul over the whole stack
        let biased = u.add_bias(&inputs.bias[ch])?;
        counter.record_launches(1); // Add over the whole stack

        // Gathering the per-channel adjacency list is pointer accumulation.
        let a_list: Vec<&SparseTensorMatrix<T>> =
            inputs.adjacency.iter().map(|per_ch| &per_ch[ch]).collect();
        let req = BatchedSpmmRequest {
            batch: SparseBatch::from_sparse_tensor(a_list, n_w)?,
            dense: DenseInput::Stacked(&biased),
            algorithm: Algorithm::SwaSt,
        };
        let items = batched_spmm(&req, &plan, counter)?;
        let refs: Vec<&DenseMatrix<T>> = items.iter().collect();
        per_channel.push(DenseMatrix::stack_rows(&refs)?);
    }

    let mut y = DenseMatrix::zeros(nodes * batchsize, n_w);
    for c in &per_channel {
        y.add_assign(c)?;
    }
    counter.record_launches(1); // element-wise accumulation
    Ok(y)
}

/// Splits a stacked layer output back into per-item matrices.
pub fn unstack<T: Scalar>(stacked: &DenseMatrix<T>, items: usize) -> Result<Vec<DenseMatrix<T>>> {
    if items == 0 || !stacked.rows().is_multiple_of(items) {
        return Err(Error::shape(format!(
            "cannot split {} rows into {items} items",
            stacked.rows()
        )));
    }
    let rows = stacked.rows() / items;
    Ok((0..items)
        .map(|b| stacked.row_view(b * rows..(b + 1) * rows).to_owned_matrix())
        .collect())
}

/// Backward pass. With `G[b][ch] = A[b][ch]^T * grad_Y[b]` (computed with one
/// batched transpose-SpMM per channel):
///
/// ```text
/// grad_W[ch]  = sum_b X[b]^T * G[b][ch]
/// grad_X[b]   = sum_ch G[b][ch] * W[ch]^T
/// grad_bias[ch] = column sums of sum_b G[b][ch]
/// ```
pub fn graph_convolution_backward<T: Scalar>(
    inputs: &GraphConvInputs<T>,
    grad_y: &[DenseMatrix<T>],
    counter: &mut LaunchCounter,
) -> Result<GraphConvGradients<T>> {
    let batchsize = inputs.batchsize();
    let nodes = inputs.nodes;
    let n_w = inputs.output_cols();
    if grad_y.len() != batchsize {
        return Err(Error::shape(format!(
            "{} gradient matrices for {batchsize} items",
            grad_y.len()
        )));
    }
    for g in grad_y {
        if g.rows() != nodes || g.cols() != n_w {
            return Err(Error::shape("grad_Y items must be nodes x n_W"));
        }
    }

    let csr_plan = plan_batch(
        &PlanInput::new(Layout::Csr, vec![nodes; batchsize], n_w)?
            .with_element_bytes(std::mem::size_of::<T>())?,
    );

    let mut grad_x: Vec<DenseMatrix<T>> = (0..batchsize)
        .map(|_| DenseMatrix::zeros(nodes, inputs.feature_cols))
        .collect();
    let mut grad_w = Vec::with_capacity(inputs.channels());
    let mut grad_bias = Vec::with_capacity(inputs.channels());

    for ch in 0..inputs.channels() {
        // Transposed CSR per item, built once per call.
        let transposed: Vec<CsrMatrix<T>> = inputs
            .adjacency
            .iter()
            .map(|per_ch| coo_to_csr(&per_ch[ch].transpose()))
            .collect();
        let req = BatchedSpmmRequest {
            batch: SparseBatch::from_csr(transposed.iter().collect(), n_w)?,
            dense: DenseInput::PerItem(grad_y.iter().collect()),
            algorithm: Algorithm::SwaCsr,
        };
        let grad_b = batched_spmm(&req, &csr_plan, counter)?;

        let mut w_acc = DenseMatrix::zeros(inputs.feature_cols, n_w);
        let mut bias_acc = DenseMatrix::zeros(nodes, n_w);
        for (b, g) in grad_b.iter().enumerate() {
            w_acc.add_assign(&inputs.feature_view(b).tr_matmul(g)?)?;
            bias_acc.add_assign(g)?;
            grad_x[b].add_assign(&g.matmul_tr(&inputs.weights[ch])?)?;
        }
        grad_w.push(w_acc);
        grad_bias.push(bias_acc.column_sums());
    }

    Ok(GraphConvGradients {
        features: grad_x,
        weights: grad_w,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::max_rel_error;
    use crate::sparse::random_adjacency;

    fn small_inputs(
        batchsize: usize,
        channel: usize,
        nodes: usize,
        n_x: usize,
        n_w: usize,
        seed: u64,
    ) -> GraphConvInputs<f32> {
        let adjacency = (0..batchsize)
            .map(|b| {
                (0..channel)
                    .map(|ch| {
                        random_adjacency(
                            nodes,
                            (nodes - 1).min(2),
                            seed + (b * channel + ch) as u64,
                        )
                        .unwrap()
                    })
                    .collect()
            })
            .collect();
        let features = Features::PerItem(
            (0..batchsize)
                .map(|b| DenseMatrix::random(nodes, n_x, seed + 1000 + b as u64))
                .collect(),
        );
        let weights = (0..channel)
            .map(|ch| DenseMatrix::random(n_x, n_w, seed + 2000 + ch as u64))
            .collect();
        let bias = (0..channel)
            .map(|ch| {
                DenseMatrix::<f32>::random(1, n_w, seed + 3000 + ch as u64)
                    .row(0)
                    .to_vec()
            })
            .collect();
        GraphConvInputs::new(adjacency, features, weights, bias).unwrap()
    }

    #[test]
    fn identity_adjacency_single_channel_is_xw() {
        let nodes = 4;
        let a = vec![vec![SparseTensorMatrix::<f32>::identity(nodes)]];
        let x = DenseMatrix::random(nodes, 3, 1);
        let w = DenseMatrix::random(3, 5, 2);
        let inputs = GraphConvInputs::new(
            a,
            Features::PerItem(vec![x.clone()]),
            vec![w.clone()],
            vec![vec![0.0; 5]],
        )
        .unwrap();
        let mut counter = LaunchCounter::new();
        let y = graph_convolution_naive(&inputs, &mut counter).unwrap();
        let expected = x.matmul(&w).unwrap();
        assert!(max_rel_error(&y[0], &expected) <= 1e-6);
    }

    #[test]
    fn identity_adjacency_identity_weights_adds_bias() {
        let nodes = 3;
        let a = vec![vec![SparseTensorMatrix::<f32>::identity(nodes)]];
        let x = DenseMatrix::random(nodes, 3, 4);
        let bias = vec![0.5f32, -1.0, 2.0];
        let inputs = GraphConvInputs::new(
            a,
            Features::PerItem(vec![x.clone()]),
            vec![DenseMatrix::identity(3)],
            vec![bias.clone()],
        )
        .unwrap();
        let mut counter = LaunchCounter::new();
        let y = graph_convolution_naive(&inputs, &mut counter).unwrap();
        let expected = x.add_bias(&bias).unwrap();
        assert!(max_rel_error(&y[0], &expected) <= 1e-6);
    }

    #[test]
    fn naive_launch_count_identity() {
        let inputs = small_inputs(50, 4, 6, 3, 4, 9);
        let mut counter = LaunchCounter::new();
        graph_convolution_naive(&inputs, &mut counter).unwrap();
        assert_eq!(counter.logical_launches(), 50 * 4 * 3 + 50);
    }

    #[test]
    fn batched_launch_count_identity() {
        let inputs = small_inputs(50, 4, 6, 3, 4, 10);
        let mut counter = LaunchCounter::new();
        graph_convolution_batched(&inputs, &mut counter).unwrap();
        assert_eq!(counter.logical_launches(), 4 * 3 + 1);
    }

    #[test]
    fn batched_matches_naive() {
        let inputs = small_inputs(50, 2, 50, 8, 64, 11);
        let mut c1 = LaunchCounter::new();
        let mut c2 = LaunchCounter::new();
        let naive = graph_convolution_naive(&inputs, &mut c1).unwrap();
        let stacked = graph_convolution_batched(&inputs, &mut c2).unwrap();
        let batched = unstack(&stacked, inputs.batchsize()).unwrap();
        for (n, b) in naive.iter().zip(&batched) {
            assert!(max_rel_error(n, b) <= 1e-5);
        }
    }

    #[test]
    fn batchsize_one_matches_naive() {
        let inputs = small_inputs(1, 2, 5, 3, 8, 12);
        let mut c1 = LaunchCounter::new();
        let mut c2 = LaunchCounter::new();
        let naive = graph_convolution_naive(&inputs, &mut c1).unwrap();
        let batched = unstack(&graph_convolution_batched(&inputs, &mut c2).unwrap(), 1).unwrap();
        assert!(max_rel_error(&naive[0], &batched[0]) <= 1e-5);
        assert_eq!(c2.logical_launches(), 2 * 3 + 1);
    }

    #[test]
    fn stacked_feature_views_are_metadata_only() {
        let nodes = 4;
        let batch = 3;
        let stacked = DenseMatrix::<f32>::random(nodes * batch, 5, 20);
        let base = stacked.as_slice().as_ptr();
        let adjacency = (0..batch)
            .map(|b| vec![random_adjacency(nodes, 1, b as u64).unwrap()])
            .collect();
        let inputs = GraphConvInputs::new(
            adjacency,
            Features::Stacked(stacked),
            vec![DenseMatrix::random(5, 2, 21)],
            vec![vec![0.0; 2]],
        )
        .unwrap();
        for b in 0..batch {
            let view = inputs.feature_view(b);
            let expect = unsafe { base.add(b * nodes * 5) };
            assert!(std::ptr::eq(view.as_slice().as_ptr(), expect));
        }
    }

    #[test]
    fn zero_grad_gives_zero_gradients() {
        let inputs = small_inputs(2, 2, 4, 3, 5, 30);
        let grad_y = vec![DenseMatrix::zeros(4, 5); 2];
        let mut counter = LaunchCounter::new();
        let grads = graph_convolution_backward(&inputs, &grad_y, &mut counter).unwrap();
        assert!(grads
            .features
            .iter()
            .all(|g| g.as_slice().iter().all(|&x| x == 0.0)));
        assert!(grads
            .weights
            .iter()
            .all(|g| g.as_slice().iter().all(|&x| x == 0.0)));
        assert!(grads.bias.iter().all(|b| b.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn identity_adjacency_grad_w_is_xt_grad() {
        let nodes = 4;
        let batch = 2;
        let adjacency = (0..batch)
            .map(|_| vec![SparseTensorMatrix::<f32>::identity(nodes)])
            .collect();
        let xs: Vec<DenseMatrix<f32>> = (0..batch)
            .map(|b| DenseMatrix::random(nodes, 3, 40 + b as u64))
            .collect();
        let inputs = GraphConvInputs::new(
            adjacency,
            Features::PerItem(xs.clone()),
            vec![DenseMatrix::random(3, 5, 50)],
            vec![vec![0.0; 5]],
        )
        .unwrap();
        let grad_y: Vec<DenseMatrix<f32>> = (0..batch)
            .map(|b| DenseMatrix::random(nodes, 5, 60 + b as u64))
            .collect();
        let mut counter = LaunchCounter::new();
        let grads = graph_convolution_backward(&inputs, &grad_y, &mut counter).unwrap();
        let mut expected = DenseMatrix::zeros(3, 5);
        for (x, g) in xs.iter().zip(&grad_y) {
            expected.add_assign(&x.tr_matmul(g).unwrap()).unwrap();
        }
        assert!(max_rel_error(&grads.weights[0], &expected) <= 1e-5);
    }
}
