//! Reference implementation of the shared query-attention relational encoder.
//!
//! Per-image features `N_I × L_V × D_V` are fused along the sequence axis.
//! Relational queries `c0` attend over the fused features to give a
//! cross-image representation `c`, which is added to the global queries
//! `q0`. The enriched queries, followed by optional instruction tokens, then
//! attend over each image separately; the first `L_I` outputs per image are
//! projected into the language model width `D`.
//!
//! Each attention module is a single multi-head cross-attention block with
//! key/value maps `D_V → D_I` and an output projection; there is no
//! feed-forward sublayer, normalization or positional encoding. Arithmetic is
//! `f64` throughout.

pub mod tensor;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use tensor::{read_tensors, write_tensor, write_tensors, Tensor, TensorError};

pub type Matrix = DMatrix<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SquareError {
    #[error("{what}: expected {expected:?}, got {got:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("feature stack needs at least one image")]
    NoImages,
    #[error("head count {heads} must be positive and divide {width}")]
    Heads { heads: usize, width: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("mixing matrix is configured for {expected} images, stack has {got}")]
    ImageCount { expected: usize, got: usize },
    #[error("parameter file: {0}")]
    Params(String),
}

fn expect_shape(what: &'static str, m: &Matrix, expected: (usize, usize)) -> Result<(), SquareError> {
    if m.shape() != expected {
        return Err(SquareError::Shape {
            what,
            expected,
            got: m.shape(),
        });
    }
    Ok(())
}

fn expect_finite(what: &'static str, m: &Matrix) -> Result<(), SquareError> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(SquareError::NonFinite(what))
    }
}

/// Per-image visual features, each `L_V × D_V`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    images: Vec<Matrix>,
}

impl FeatureStack {
    pub fn new(images: Vec<Matrix>) -> Result<Self, SquareError> {
        let first = images.first().ok_or(SquareError::NoImages)?;
        let shape = first.shape();
        for m in &images {
            expect_shape("image features", m, shape)?;
            expect_finite("image features", m)?;
        }
        Ok(Self { images })
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    /// `(L_V, D_V)`
    pub fn feature_shape(&self) -> (usize, usize) {
        self.images[0].shape()
    }

    pub fn images(&self) -> &[Matrix] {
        &self.images
    }

    pub fn into_images(self) -> Vec<Matrix> {
        self.images
    }

    /// Reorders images so that output image `i` is input image `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            images: order.iter().map(|&i| self.images[i].clone()).collect(),
        }
    }
}

/// Learnable query sets: global `q0`, relational `c0` (both `L_I × D_I`) and
/// instruction tokens `L_Q × D_I`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryBank {
    pub q0: Matrix,
    pub c0: Matrix,
    pub instruction: Matrix,
}

impl QueryBank {
    pub fn new(q0: Matrix, c0: Matrix, instruction: Option<Matrix>) -> Result<Self, SquareError> {
        expect_shape("relational queries", &c0, q0.shape())?;
        let instruction = instruction.unwrap_or_else(|| Matrix::zeros(0, q0.ncols()));
        if instruction.ncols() != q0.ncols() {
            return Err(SquareError::Shape {
                what: "instruction tokens",
                expected: (instruction.nrows(), q0.ncols()),
                got: instruction.shape(),
            });
        }
        for (what, m) in [("global queries", &q0), ("relational queries", &c0), ("instruction tokens", &instruction)] {
            expect_finite(what, m)?;
        }
        Ok(Self { q0, c0, instruction })
    }

    pub fn num_queries(&self) -> usize {
        self.q0.nrows()
    }

    pub fn query_dim(&self) -> usize {
        self.q0.ncols()
    }
}

/// One cross-attention block. Row-vector convention: `Q = X·W_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `D_I × D_I`
    pub w_q: Matrix,
    /// `D_V × D_I`
    pub w_k: Matrix,
    /// `D_V × D_I`
    pub w_v: Matrix,
    /// `D_I × D_I`
    pub w_o: Matrix,
    pub heads: usize,
}

impl AttentionParams {
    pub fn new(w_q: Matrix, w_k: Matrix, w_v: Matrix, w_o: Matrix, heads: usize) -> Result<Self, SquareError> {
        let d_i = w_q.nrows();
        expect_shape("query projection", &w_q, (d_i, d_i))?;
        let d_v = w_k.nrows();
        expect_shape("key projection", &w_k, (d_v, d_i))?;
        expect_shape("value projection", &w_v, (d_v, d_i))?;
        expect_shape("output projection", &w_o, (d_i, d_i))?;
        if heads == 0 || d_i % heads != 0 {
            return Err(SquareError::Heads { heads, width: d_i });
        }
        for (what, m) in [("w_q", &w_q), ("w_k", &w_k), ("w_v", &w_v), ("w_o", &w_o)] {
            expect_finite(what, m)?;
        }
        Ok(Self {
            w_q,
            w_k,
            w_v,
            w_o,
            heads,
        })
    }

    pub fn query_dim(&self) -> usize {
        self.w_q.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.w_k.nrows()
    }

    /// Random block with entries uniform in `±1/sqrt(fan_in)`.
    pub fn random(d_v: usize, d_i: usize, heads: usize, rng: &mut impl Rng) -> Result<Self, SquareError> {
        Self::new(
            random_matrix(d_i, d_i, rng),
            random_matrix(d_v, d_i, rng),
            random_matrix(d_v, d_i, rng),
            random_matrix(d_i, d_i, rng),
            heads,
        )
    }
}

/// Linear map `D_I → D` with bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmProjection {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl LlmProjection {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self, SquareError> {
        if bias.len() != weight.ncols() {
            return Err(SquareError::Shape {
                what: "projection bias",
                expected: (1, weight.ncols()),
                got: (1, bias.len()),
            });
        }
        expect_finite("projection", &weight)?;
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(SquareError::NonFinite("projection bias"));
        }
        Ok(Self { weight, bias })
    }

    pub fn apply(&self, x: &Matrix) -> Result<Matrix, SquareError> {
        if x.ncols() != self.weight.nrows() {
            return Err(SquareError::Shape {
                what: "projection input",
                expected: (x.nrows(), self.weight.nrows()),
                got: x.shape(),
            });
        }
        let mut out = x * &self.weight;
        for mut row in out.row_iter_mut() {
            for (v, b) in row.iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        Ok(out)
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    let scale = 1.0 / (rows.max(1) as f64).sqrt();
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

/// Concatenates the per-image features along the sequence axis, image 1 first.
pub fn fuse_features(fs: &FeatureStack) -> Matrix {
    let (l_v, d_v) = fs.feature_shape();
    let mut out = Matrix::zeros(fs.num_images() * l_v, d_v);
    for (j, m) in fs.images.iter().enumerate() {
        out.view_mut((j * l_v, 0), (l_v, d_v)).copy_from(m);
    }
    out
}

/// Row-wise softmax with max subtraction.
fn softmax_rows(m: &mut Matrix) {
    for mut row in m.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
}

/// Attention output together with the per-head weight matrices (`M × N`).
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionOutput {
    pub output: Matrix,
    pub weights: Vec<Matrix>,
}

pub fn cross_attention(queries: &Matrix, keys_values: &Matrix, params: &AttentionParams) -> Result<Matrix, SquareError> {
    cross_attention_weights(queries, keys_values, params).map(|o| o.output)
}

/// Multi-head scaled dot-product cross-attention:
/// `softmax(Q_h K_hᵀ / sqrt(d_h)) V_h` per head, concatenated, then `· W_o`.
pub fn cross_attention_weights(
    queries: &Matrix,
    keys_values: &Matrix,
    params: &AttentionParams,
) -> Result<AttentionOutput, SquareError> {
    let d_i = params.query_dim();
    let d_v = params.feature_dim();
    if queries.ncols() != d_i {
        return Err(SquareError::Shape {
            what: "attention queries",
            expected: (queries.nrows(), d_i),
            got: queries.shape(),
        });
    }
    if keys_values.ncols() != d_v || keys_values.nrows() == 0 {
        return Err(SquareError::Shape {
            what: "attention keys/values",
            expected: (keys_values.nrows().max(1), d_v),
            got: keys_values.shape(),
        });
    }
    let q = queries * &params.w_q;
    let k = keys_values * &params.w_k;
    let v = keys_values * &params.w_v;
    let d_h = d_i / params.heads;
    let scale = 1.0 / (d_h as f64).sqrt();
    let mut concat = Matrix::zeros(queries.nrows(), d_i);
    let mut weights = Vec::with_capacity(params.heads);
    for h in 0..params.heads {
        let cols = h * d_h;
        let qh = q.columns(cols, d_h);
        let kh = k.columns(cols, d_h);
        let vh = v.columns(cols, d_h);
        let mut scores = (qh * kh.transpose()) * scale;
        softmax_rows(&mut scores);
        concat.columns_mut(cols, d_h).copy_from(&(&scores * vh));
        weights.push(scores);
    }
    Ok(AttentionOutput {
        output: concat * &params.w_o,
        weights,
    })
}

/// All parameters of the encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct SquareEncoder {
    pub queries: QueryBank,
    pub relational: AttentionParams,
    pub global: AttentionParams,
    pub projection: LlmProjection,
}

/// Dimensions for [`SquareEncoder::random`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SquareDims {
    pub feature_dim: usize,
    pub num_queries: usize,
    pub query_dim: usize,
    pub instruction_len: usize,
    pub llm_dim: usize,
    pub heads: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SquareOutput {
    /// Cross-image relational representation `c`, `L_I × D_I`.
    pub relational: Matrix,
    /// One `L_I × D` matrix per image, in image order.
    pub per_image: Vec<Matrix>,
}

impl SquareEncoder {
    pub fn new(
        queries: QueryBank,
        relational: AttentionParams,
        global: AttentionParams,
        projection: LlmProjection,
    ) -> Result<Self, SquareError> {
        let d_i = queries.query_dim();
        for (what, p) in [("relational attention", &relational), ("global attention", &global)] {
            if p.query_dim() != d_i {
                return Err(SquareError::Shape {
                    what,
                    expected: (d_i, d_i),
                    got: p.w_q.shape(),
                });
            }
        }
        if relational.feature_dim() != global.feature_dim() {
            return Err(SquareError::Shape {
                what: "global key projection",
                expected: relational.w_k.shape(),
                got: global.w_k.shape(),
            });
        }
        if projection.weight.nrows() != d_i {
            return Err(SquareError::Shape {
                what: "projection",
                expected: (d_i, projection.weight.ncols()),
                got: projection.weight.shape(),
            });
        }
        Ok(Self {
            queries,
            relational,
            global,
            projection,
        })
    }

    pub fn random(dims: SquareDims, seed: u64) -> Result<Self, SquareError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d_i = dims.query_dim;
        let queries = QueryBank::new(
            random_matrix(dims.num_queries, d_i, &mut rng),
            random_matrix(dims.num_queries, d_i, &mut rng),
            Some(random_matrix(dims.instruction_len, d_i, &mut rng)),
        )?;
        let relational = AttentionParams::random(dims.feature_dim, d_i, dims.heads, &mut rng)?;
        let global = AttentionParams::random(dims.feature_dim, d_i, dims.heads, &mut rng)?;
        let weight = random_matrix(d_i, dims.llm_dim, &mut rng);
        let bias = (0..dims.llm_dim).map(|_| rng.random_range(-0.1..0.1)).collect();
        Self::new(queries, relational, global, LlmProjection::new(weight, bias)?)
    }

    /// `c = C(c0, fused, fused)`
    pub fn relational_representation(&self, fs: &FeatureStack) -> Result<Matrix, SquareError> {
        cross_attention(&self.queries.c0, &fuse_features(fs), &self.relational)
    }

    /// Runs global attention per image with `enriched ⊕ instruction` as the
    /// query sequence, keeps the first `L_I` rows and projects them.
    pub fn global_pass(&self, fs: &FeatureStack, enriched: &Matrix) -> Result<Vec<Matrix>, SquareError> {
        let l_i = self.queries.num_queries();
        expect_shape("enriched queries", enriched, self.queries.q0.shape())?;
        let instr = &self.queries.instruction;
        let mut seq = Matrix::zeros(l_i + instr.nrows(), enriched.ncols());
        seq.rows_mut(0, l_i).copy_from(enriched);
        seq.rows_mut(l_i, instr.nrows()).copy_from(instr);
        fs.images
            .iter()
            .map(|img| {
                let out = cross_attention(&seq, img, &self.global)?;
                self.projection.apply(&out.rows(0, l_i).into_owned())
            })
            .collect()
    }

    pub fn forward(&self, fs: &FeatureStack) -> Result<SquareOutput, SquareError> {
        if fs.feature_shape().1 != self.relational.feature_dim() {
            return Err(SquareError::Shape {
                what: "image features",
                expected: (fs.feature_shape().0, self.relational.feature_dim()),
                got: fs.feature_shape(),
            });
        }
        let c = self.relational_representation(fs)?;
        let enriched = &c + &self.queries.q0;
        let per_image = self.global_pass(fs, &enriched)?;
        Ok(SquareOutput {
            relational: c,
            per_image,
        })
    }

    /// Parameters in file order: q0, c0, instruction, relational (w_q, w_k,
    /// w_v, w_o), global (w_q, w_k, w_v, w_o), projection weight, bias.
    pub fn to_tensors(&self) -> Vec<Tensor> {
        let mut out = vec![
            Tensor::from_matrix(&self.queries.q0),
            Tensor::from_matrix(&self.queries.c0),
            Tensor::from_matrix(&self.queries.instruction),
        ];
        for p in [&self.relational, &self.global] {
            out.extend([&p.w_q, &p.w_k, &p.w_v, &p.w_o].map(Tensor::from_matrix));
        }
        out.push(Tensor::from_matrix(&self.projection.weight));
        out.push(Tensor::from_vector(&self.projection.bias));
        out
    }

    pub fn from_tensors(tensors: &[Tensor], heads: usize) -> Result<Self, SquareError> {
        if tensors.len() != 13 {
            return Err(SquareError::Params(format!("expected 13 tensors, got {}", tensors.len())));
        }
        let m = |i: usize| tensors[i].to_matrix().map_err(|e| SquareError::Params(e.to_string()));
        let queries = QueryBank::new(m(0)?, m(1)?, Some(m(2)?))?;
        let relational = AttentionParams::new(m(3)?, m(4)?, m(5)?, m(6)?, heads)?;
        let global = AttentionParams::new(m(7)?, m(8)?, m(9)?, m(10)?, heads)?;
        let bias = tensors[12].to_vector().map_err(|e| SquareError::Params(e.to_string()))?;
        Self::new(queries, relational, global, LlmProjection::new(m(11)?, bias)?)
    }
}

/// Free-function form of [`SquareEncoder::forward`].
pub fn square_forward(
    fs: &FeatureStack,
    qb: &QueryBank,
    params_c: &AttentionParams,
    params_q: &AttentionParams,
    proj: &LlmProjection,
) -> Result<SquareOutput, SquareError> {
    SquareEncoder::new(qb.clone(), params_c.clone(), params_q.clone(), proj.clone())?.forward(fs)
}

/// Replaces every image's features with the element-wise mean over images.
///
/// Each element's values are summed in sorted order, so the result does not
/// depend on image order; elements equal across images are kept exactly.
pub fn pooling_baseline(fs: &FeatureStack) -> FeatureStack {
    let (l_v, d_v) = fs.feature_shape();
    let n = fs.num_images();
    let mut vals = Vec::with_capacity(n);
    let mean = Matrix::from_fn(l_v, d_v, |r, c| {
        vals.clear();
        vals.extend(fs.images.iter().map(|m| m[(r, c)]));
        vals.sort_by(f64::total_cmp);
        if vals[0] == vals[n - 1] {
            vals[0]
        } else {
            vals.iter().sum::<f64>() / n as f64
        }
    });
    FeatureStack {
        images: vec![mean; n],
    }
}

/// For every sequence position, concatenates the images' feature rows along
/// the hidden axis, multiplies by `mix` and splits the result back.
pub fn projection_baseline(fs: &FeatureStack, mix: &Matrix) -> Result<FeatureStack, SquareError> {
    let (l_v, d_v) = fs.feature_shape();
    let n = fs.num_images();
    let width = n * d_v;
    if mix.nrows() != mix.ncols() || mix.nrows() % d_v != 0 {
        return Err(SquareError::Shape {
            what: "mixing matrix",
            expected: (width, width),
            got: mix.shape(),
        });
    }
    if mix.nrows() != width {
        return Err(SquareError::ImageCount {
            expected: mix.nrows() / d_v,
            got: n,
        });
    }
    let mut wide = Matrix::zeros(l_v, width);
    for (j, m) in fs.images.iter().enumerate() {
        wide.columns_mut(j * d_v, d_v).copy_from(m);
    }
    let mixed = wide * mix;
    Ok(FeatureStack {
        images: (0..n).map(|j| mixed.columns(j * d_v, d_v).into_owned()).collect(),
    })
}
