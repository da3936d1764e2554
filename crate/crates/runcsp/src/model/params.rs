use crate::csp::ConstraintLanguage;
use crate::model::ModelConfig;
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Slice boundaries of the four LSTM gates inside the fused kernels, in
/// order: input, forget, candidate, output.
pub(crate) const GATES: usize = 4;

/// All trainable weights of one network.
///
/// Message matrices follow row convention: a batch of stacked state pairs
/// (rows of width 2k) is multiplied on the right. Asymmetric relations use a
/// 2k x 2k matrix whose output splits into the two messages; symmetric
/// relations use a 2k x k matrix applied to both endpoint orders.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters<S> {
    pub message: Vec<Tensor<S>>,
    /// k x 4k kernel applied to the pooled incoming messages.
    pub lstm_input: Tensor<S>,
    /// k x 4k kernel applied to the previous short-term state.
    pub lstm_recurrent: Tensor<S>,
    /// 1 x 4k bias.
    pub lstm_bias: Tensor<S>,
    /// d x k readout, or 1 x k when the sigmoid readout is active.
    pub readout: Tensor<S>,
    pub bn_scale: Tensor<S>,
    pub bn_shift: Tensor<S>,
}

impl<S: Scalar> Parameters<S> {
    /// Fresh parameters: message matrices and the LSTM input kernel are
    /// Glorot-uniform, the recurrent kernel is orthogonal per gate, biases
    /// are zero except the forget gate's (1.0), the readout is
    /// Glorot-uniform, and batch norm starts as the identity.
    pub fn init(config: &ModelConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = config.state_size;
        let language = &config.language;

        let message = language
            .relations()
            .iter()
            .map(|rel| {
                let out = if rel.symmetric() { k } else { 2 * k };
                glorot_uniform(&mut rng, 2 * k, out)
            })
            .collect();

        let lstm_input = glorot_uniform(&mut rng, k, GATES * k);
        let mut lstm_recurrent = Tensor::zeros(k, GATES * k);
        for gate in 0..GATES {
            let block = random_orthogonal(&mut rng, k);
            for r in 0..k {
                lstm_recurrent.row_mut(r)[gate * k..(gate + 1) * k].copy_from_slice(block.row(r));
            }
        }
        let mut lstm_bias = Tensor::zeros(1, GATES * k);
        for c in k..2 * k {
            lstm_bias.set(0, c, S::one());
        }

        let readout_rows = if config.sigmoid_readout {
            1
        } else {
            language.domain_size()
        };
        let readout = glorot_uniform(&mut rng, readout_rows, k);

        Parameters {
            message,
            lstm_input,
            lstm_recurrent,
            lstm_bias,
            readout,
            bn_scale: Tensor::full(1, k, S::one()),
            bn_shift: Tensor::zeros(1, k),
        }
    }

    /// Flat view of every trainable tensor, in a stable order shared with
    /// the optimizer and the gradient slots.
    pub fn tensors(&self) -> Vec<&Tensor<S>> {
        let mut out: Vec<&Tensor<S>> = self.message.iter().collect();
        out.push(&self.lstm_input);
        out.push(&self.lstm_recurrent);
        out.push(&self.lstm_bias);
        out.push(&self.readout);
        out.push(&self.bn_scale);
        out.push(&self.bn_shift);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<S>> {
        let mut out: Vec<&mut Tensor<S>> = self.message.iter_mut().collect();
        out.push(&mut self.lstm_input);
        out.push(&mut self.lstm_recurrent);
        out.push(&mut self.lstm_bias);
        out.push(&mut self.readout);
        out.push(&mut self.bn_scale);
        out.push(&mut self.bn_shift);
        out
    }

    pub fn num_tensors(&self) -> usize {
        self.message.len() + 6
    }

    pub fn num_entries(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn state_size(&self) -> usize {
        self.lstm_input.rows()
    }

    /// Whether the shapes fit the given configuration.
    pub fn matches(&self, config: &ModelConfig) -> bool {
        let k = config.state_size;
        let language: &ConstraintLanguage = &config.language;
        if self.message.len() != language.relations().len() {
            return false;
        }
        for (rel, m) in language.relations().iter().zip(&self.message) {
            let expect = if rel.symmetric() { (2 * k, k) } else { (2 * k, 2 * k) };
            if m.shape() != expect {
                return false;
            }
        }
        let readout_rows = if config.sigmoid_readout {
            1
        } else {
            language.domain_size()
        };
        self.lstm_input.shape() == (k, GATES * k)
            && self.lstm_recurrent.shape() == (k, GATES * k)
            && self.lstm_bias.shape() == (1, GATES * k)
            && self.readout.shape() == (readout_rows, k)
            && self.bn_scale.shape() == (1, k)
            && self.bn_shift.shape() == (1, k)
    }
}

/// Uniform Glorot: entries from U(-b, b) with b = sqrt(6 / (fan_in + fan_out)),
/// fans taken from the matrix shape.
fn glorot_uniform<S: Scalar>(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<S> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let (lo, hi) = (S::cast(-bound), S::cast(bound));
    let data = (0..rows * cols).map(|_| S::uniform(rng, lo, hi)).collect();
    Tensor::from_vec(rows, cols, data)
}

/// Random orthogonal matrix: QR of a standard normal matrix, with the sign
/// of R's diagonal folded into Q.
fn random_orthogonal<S: Scalar>(rng: &mut ChaCha8Rng, n: usize) -> Tensor<S> {
    let data: Vec<S> = (0..n * n).map(|_| S::standard_normal(rng)).collect();
    let a = Tensor::from_vec(n, n, data);
    let (q, r) = householder_qr(&a);
    let mut out = q;
    for c in 0..n {
        if r.get(c, c) < S::zero() {
            for row in 0..n {
                let v = out.get(row, c);
                out.set(row, c, -v);
            }
        }
    }
    out
}

/// Householder QR of a square matrix. Returns (Q, R) with A = Q R.
fn householder_qr<S: Scalar>(a: &Tensor<S>) -> (Tensor<S>, Tensor<S>) {
    let n = a.rows();
    assert_eq!(a.cols(), n, "QR helper expects a square matrix");
    let mut r = a.clone();
    let mut q = Tensor::zeros(n, n);
    for i in 0..n {
        q.set(i, i, S::one());
    }

    for j in 0..n {
        // Reflector for column j below the diagonal.
        let mut norm = S::zero();
        for i in j..n {
            norm += r.get(i, j) * r.get(i, j);
        }
        let norm = norm.sqrt();
        if norm == S::zero() {
            continue;
        }
        let alpha = if r.get(j, j) > S::zero() { -norm } else { norm };
        let mut v = vec![S::zero(); n - j];
        for i in j..n {
            v[i - j] = r.get(i, j);
        }
        v[0] = v[0] - alpha;
        let vnorm_sq: S = v.iter().map(|&x| x * x).sum();
        if vnorm_sq == S::zero() {
            continue;
        }
        let two = S::cast(2.0);

        // R <- (I - 2 v v^T / v^T v) R on the trailing block.
        for c in j..n {
            let mut dot = S::zero();
            for i in j..n {
                dot += v[i - j] * r.get(i, c);
            }
            let scale = two * dot / vnorm_sq;
            for i in j..n {
                let val = r.get(i, c) - scale * v[i - j];
                r.set(i, c, val);
            }
        }
        // Q <- Q (I - 2 v v^T / v^T v).
        for row in 0..n {
            let mut dot = S::zero();
            for i in j..n {
                dot += q.get(row, i) * v[i - j];
            }
            let scale = two * dot / vnorm_sq;
            for i in j..n {
                let val = q.get(row, i) - scale * v[i - j];
                q.set(row, i, val);
            }
        }
    }
    (q, r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csp::Problem;

    fn config(problem: Problem, k: usize) -> ModelConfig {
        let mut cfg = ModelConfig::new(problem.language());
        cfg.state_size = k;
        cfg
    }

    #[test]
    fn forget_gate_bias_is_one() {
        for seed in [0u64, 1, 99] {
            let cfg = config(Problem::MaxCut, 16);
            let params = Parameters::<f64>::init(&cfg, seed);
            let k = 16;
            for c in 0..GATES * k {
                let expected = if (k..2 * k).contains(&c) { 1.0 } else { 0.0 };
                assert_eq!(params.lstm_bias.get(0, c), expected);
            }
        }
    }

    #[test]
    fn init_is_deterministic() {
        let cfg = config(Problem::ThreeCol, 8);
        let a = Parameters::<f64>::init(&cfg, 1234);
        let b = Parameters::<f64>::init(&cfg, 1234);
        assert_eq!(a, b);
        let c = Parameters::<f64>::init(&cfg, 1235);
        assert_ne!(a, c);
    }

    #[test]
    fn glorot_bound_respected() {
        let cfg = config(Problem::Max2Sat, 32);
        let params = Parameters::<f64>::init(&cfg, 5);
        let k = 32;
        // Asymmetric message matrix is 2k x 2k: bound sqrt(6 / 4k).
        let bound = (6.0 / (4 * k) as f64).sqrt();
        let m = &params.message[crate::csp::REL_2SAT_FIRST_NEGATED];
        assert_eq!(m.shape(), (2 * k, 2 * k));
        assert!(m.iter().all(|v| v.abs() <= bound));
        // Some mass should sit near the bound; all-zeros would be a bug.
        assert!(m.iter().any(|v| v.abs() > bound * 0.5));
    }

    #[test]
    fn symmetric_relations_get_narrow_matrices() {
        let cfg = config(Problem::Max2Sat, 8);
        let params = Parameters::<f64>::init(&cfg, 0);
        assert_eq!(params.message[crate::csp::REL_2SAT_BOTH_NEGATED].shape(), (16, 8));
        assert_eq!(params.message[crate::csp::REL_2SAT_FIRST_NEGATED].shape(), (16, 16));
        assert_eq!(params.message[crate::csp::REL_2SAT_NONE_NEGATED].shape(), (16, 8));
    }

    #[test]
    fn recurrent_kernel_blocks_are_orthogonal() {
        let cfg = config(Problem::MaxCut, 24);
        let params = Parameters::<f64>::init(&cfg, 77);
        let k = 24;
        for gate in 0..GATES {
            let mut block = Tensor::zeros(k, k);
            for r in 0..k {
                block
                    .row_mut(r)
                    .copy_from_slice(&params.lstm_recurrent.row(r)[gate * k..(gate + 1) * k]);
            }
            let gram = block.transpose().matmul(&block);
            for i in 0..k {
                for j in 0..k {
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (gram.get(i, j) - expected).abs() < 1e-10,
                        "gate {gate} gram ({i},{j}) = {}",
                        gram.get(i, j)
                    );
                }
            }
        }
    }

    #[test]
    fn qr_reconstructs_input() {
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 12;
        let data: Vec<f64> = (0..n * n).map(|_| f64::standard_normal(&mut rng)).collect();
        let a = Tensor::from_vec(n, n, data);
        let (q, r) = householder_qr(&a);
        let qr = q.matmul(&r);
        for i in 0..n {
            for j in 0..n {
                assert!((qr.get(i, j) - a.get(i, j)).abs() < 1e-10);
                // R is upper triangular.
                if i > j {
                    assert!(r.get(i, j).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn readout_shape_follows_config() {
        let sigmoid_cfg = config(Problem::MaxCut, 8);
        assert!(sigmoid_cfg.sigmoid_readout);
        let p = Parameters::<f64>::init(&sigmoid_cfg, 0);
        assert_eq!(p.readout.shape(), (1, 8));

        let softmax_cfg = config(Problem::ThreeCol, 8);
        assert!(!softmax_cfg.sigmoid_readout);
        let p = Parameters::<f64>::init(&softmax_cfg, 0);
        assert_eq!(p.readout.shape(), (3, 8));
        assert!(p.matches(&softmax_cfg));
    }
}
