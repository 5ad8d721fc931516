//! Dense row-major matrices and a reverse-mode tape with exactly the
//! operations the relational GNN needs.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::math::{canonical_sum, exp, ln, sigmoid, softplus, tanh, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Real>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Real>) -> Result<Self, TensorError> {
        if data.len() != rows * cols {
            return Err(TensorError::Shape {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn scalar(v: Real) -> Self {
        Mat {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[Real] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [Real] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Real {
        self.data[r * self.cols + c]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn add_assign(&mut self, other: &Mat) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TensorError {
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("smooth maximum needs a positive alpha, got {0}")]
    NonPositiveAlpha(Real),
    #[error("index {0} out of range")]
    Index(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NodeId(u32);

#[derive(Clone, Debug)]
enum Op {
    Input,
    Param(usize),
    Linear {
        x: NodeId,
        w: NodeId,
        b: NodeId,
    },
    Mish(NodeId),
    Gather {
        x: NodeId,
        index: Arc<[u32]>,
    },
    Pick {
        sources: Vec<NodeId>,
        picks: Arc<[Pick]>,
    },
    ConcatCols(NodeId, NodeId),
    SmoothMax {
        x: NodeId,
        segments: Arc<Segments>,
        alpha: Real,
    },
    SumRows(NodeId),
    Mse {
        pred: NodeId,
        target: Real,
    },
}

/// Row `row` of source `source`, columns `col..col + width` of a pick.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Pick {
    pub source: u32,
    pub row: u32,
    pub col: u32,
}

/// Segment `i` spans rows `offsets[i]..offsets[i + 1]` of the input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Segments {
    pub offsets: Vec<u32>,
}

impl Segments {
    pub fn len(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self, i: usize) -> core::ops::Range<usize> {
        self.offsets[i] as usize..self.offsets[i + 1] as usize
    }
}

struct Node {
    value: Mat,
    op: Op,
}

/// Records operations in topological order.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of every parameter node touched by a backward pass.
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    pub fn of(&self, node: NodeId) -> Option<&Mat> {
        self.grads[node.0 as usize].as_ref()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    fn push(&mut self, value: Mat, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() as u32 - 1)
    }

    pub fn value(&self, n: NodeId) -> &Mat {
        &self.nodes[n.0 as usize].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn input(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Input)
    }

    /// A parameter leaf; `index` identifies it in [`Tape::param_grads`].
    pub fn param(&mut self, index: usize, value: Mat) -> NodeId {
        self.push(value, Op::Param(index))
    }

    /// `x Wᵀ + b` applied to every row of `x` (`W` is `out × in`, `b` is `1 × out`).
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols != wv.cols {
            return Err(TensorError::Shape {
                op: "linear",
                left: xv.shape(),
                right: wv.shape(),
            });
        }
        if bv.rows != 1 || bv.cols != wv.rows {
            return Err(TensorError::Shape {
                op: "linear bias",
                left: wv.shape(),
                right: bv.shape(),
            });
        }
        let (n, out, inp) = (xv.rows, wv.rows, wv.cols);
        let mut y = Mat::zeros(n, out);
        for r in 0..n {
            let xr = xv.row(r);
            let yr = &mut y.data[r * out..(r + 1) * out];
            for o in 0..out {
                let wr = &wv.data[o * inp..(o + 1) * inp];
                let mut acc = 0.0;
                for i in 0..inp {
                    acc += wr[i] * xr[i];
                }
                yr[o] = acc + bv.data[o];
            }
        }
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    /// Elementwise `x · tanh(softplus(x))`.
    pub fn mish(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let data = xv.data.iter().map(|&v| v * tanh(softplus(v))).collect();
        let y = Mat {
            rows: xv.rows,
            cols: xv.cols,
            data,
        };
        self.push(y, Op::Mish(x))
    }

    /// Row `r` of the result concatenates rows `index[r·m .. r·m + m]` of `x`.
    pub fn gather_concat(
        &mut self,
        x: NodeId,
        index: Arc<[u32]>,
        m: usize,
    ) -> Result<NodeId, TensorError> {
        let xv = self.value(x);
        if m == 0 || index.len() % m != 0 {
            return Err(TensorError::Shape {
                op: "gather_concat",
                left: (index.len(), 1),
                right: (m, 1),
            });
        }
        if let Some(&bad) = index.iter().find(|&&i| i as usize >= xv.rows) {
            return Err(TensorError::Index(bad as usize));
        }
        let k = xv.cols;
        let rows = index.len() / m;
        let mut y = Mat::zeros(rows, m * k);
        for (slot, &i) in index.iter().enumerate() {
            y.data[slot * k..(slot + 1) * k].copy_from_slice(xv.row(i as usize));
        }
        Ok(self.push(y, Op::Gather { x, index }))
    }

    /// Copies `width`-wide column blocks out of several sources, one per row.
    pub fn pick(
        &mut self,
        sources: Vec<NodeId>,
        picks: Arc<[Pick]>,
        width: usize,
    ) -> Result<NodeId, TensorError> {
        let mut y = Mat::zeros(picks.len(), width);
        for (r, p) in picks.iter().enumerate() {
            let src = sources
                .get(p.source as usize)
                .ok_or(TensorError::Index(p.source as usize))?;
            let sv = self.value(*src);
            let (row, col) = (p.row as usize, p.col as usize);
            if row >= sv.rows || col + width > sv.cols {
                return Err(TensorError::Index(row));
            }
            y.row_mut(r).copy_from_slice(&sv.row(row)[col..col + width]);
        }
        Ok(self.push(y, Op::Pick { sources, picks }))
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId, TensorError> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rows != bv.rows {
            return Err(TensorError::Shape {
                op: "concat_cols",
                left: av.shape(),
                right: bv.shape(),
            });
        }
        let cols = av.cols + bv.cols;
        let mut y = Mat::zeros(av.rows, cols);
        for r in 0..av.rows {
            let yr = y.row_mut(r);
            yr[..av.cols].copy_from_slice(av.row(r));
            yr[av.cols..].copy_from_slice(bv.row(r));
        }
        Ok(self.push(y, Op::ConcatCols(a, b)))
    }

    /// Per segment and column: `(1/α) ln Σ exp(α x)`, shifted by the maximum.
    /// Empty segments give zero. Sums run in canonical order, so the result
    /// does not depend on the order of rows within a segment.
    pub fn smooth_max(
        &mut self,
        x: NodeId,
        segments: Arc<Segments>,
        alpha: Real,
    ) -> Result<NodeId, TensorError> {
        if !(alpha > 0.0) {
            return Err(TensorError::NonPositiveAlpha(alpha));
        }
        let xv = self.value(x);
        if segments.offsets.last().copied().unwrap_or(0) as usize > xv.rows {
            return Err(TensorError::Index(xv.rows));
        }
        let k = xv.cols;
        let mut y = Mat::zeros(segments.len(), k);
        let mut buf: Vec<Real> = Vec::new();
        for s in 0..segments.len() {
            let range = segments.range(s);
            if range.is_empty() {
                continue;
            }
            for c in 0..k {
                let m = range
                    .clone()
                    .map(|r| xv.get(r, c))
                    .fold(Real::NEG_INFINITY, Real::max);
                buf.clear();
                buf.extend(range.clone().map(|r| exp(alpha * (xv.get(r, c) - m))));
                y.data[s * k + c] = m + ln(canonical_sum(&mut buf)) / alpha;
            }
        }
        Ok(self.push(y, Op::SmoothMax { x, segments, alpha }))
    }

    /// Column sums (canonical order), as a `1 × cols` row.
    pub fn sum_rows(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut y = Mat::zeros(1, xv.cols);
        let mut buf = Vec::with_capacity(xv.rows);
        for c in 0..xv.cols {
            buf.clear();
            buf.extend((0..xv.rows).map(|r| xv.get(r, c)));
            y.data[c] = canonical_sum(&mut buf);
        }
        self.push(y, Op::SumRows(x))
    }

    /// `(pred − target)²` for a `1 × 1` prediction.
    pub fn mse(&mut self, pred: NodeId, target: Real) -> Result<NodeId, TensorError> {
        let pv = self.value(pred);
        if pv.shape() != (1, 1) {
            return Err(TensorError::Shape {
                op: "mse",
                left: pv.shape(),
                right: (1, 1),
            });
        }
        let d = pv.data[0] - target;
        Ok(self.push(Mat::scalar(d * d), Op::Mse { pred, target }))
    }

    /// Backpropagates from a `1 × 1` node with seed gradient 1.
    pub fn backward(&self, root: NodeId) -> Gradients {
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        let rv = self.value(root);
        grads[root.0 as usize] = Some(Mat {
            rows: rv.rows,
            cols: rv.cols,
            data: vec![1.0; rv.data.len()],
        });
        for i in (0..=root.0 as usize).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n, out, inp) = (xv.rows, wv.rows, wv.cols);
                    let mut gx = Mat::zeros(n, inp);
                    let mut gw = Mat::zeros(out, inp);
                    let mut gb = Mat::zeros(1, out);
                    for r in 0..n {
                        let gr = g.row(r);
                        let xr = xv.row(r);
                        let gxr = &mut gx.data[r * inp..(r + 1) * inp];
                        for o in 0..out {
                            let go = gr[o];
                            if go == 0.0 {
                                continue;
                            }
                            gb.data[o] += go;
                            let wr = &wv.data[o * inp..(o + 1) * inp];
                            let gwr = &mut gw.data[o * inp..(o + 1) * inp];
                            for j in 0..inp {
                                gxr[j] += go * wr[j];
                                gwr[j] += go * xr[j];
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *w, gw);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Mish(x) => {
                    let xv = self.value(*x);
                    let data = xv
                        .data
                        .iter()
                        .zip(&g.data)
                        .map(|(&v, &gv)| {
                            let t = tanh(softplus(v));
                            gv * (t + v * (1.0 - t * t) * sigmoid(v))
                        })
                        .collect();
                    accumulate(
                        &mut grads,
                        *x,
                        Mat {
                            rows: xv.rows,
                            cols: xv.cols,
                            data,
                        },
                    );
                }
                Op::Gather { x, index, .. } => {
                    let xv = self.value(*x);
                    let k = xv.cols;
                    let mut gx = Mat::zeros(xv.rows, k);
                    for (slot, &src) in index.iter().enumerate() {
                        let dst = gx.row_mut(src as usize);
                        for (d, v) in dst.iter_mut().zip(&g.data[slot * k..(slot + 1) * k]) {
                            *d += v;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Pick { sources, picks } => {
                    let width = node.value.cols;
                    let mut gs: Vec<Mat> = sources
                        .iter()
                        .map(|s| {
                            let v = self.value(*s);
                            Mat::zeros(v.rows, v.cols)
                        })
                        .collect();
                    for (r, p) in picks.iter().enumerate() {
                        let dst = &mut gs[p.source as usize];
                        let (row, col) = (p.row as usize, p.col as usize);
                        let dr = &mut dst.row_mut(row)[col..col + width];
                        for (d, v) in dr.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    for (s, gm) in sources.iter().zip(gs) {
                        accumulate(&mut grads, *s, gm);
                    }
                }
                Op::ConcatCols(a, b) => {
                    let ac = self.value(*a).cols;
                    let bc = self.value(*b).cols;
                    let mut ga = Mat::zeros(g.rows, ac);
                    let mut gb = Mat::zeros(g.rows, bc);
                    for r in 0..g.rows {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ac]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ac..]);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::SmoothMax { x, segments, alpha } => {
                    let xv = self.value(*x);
                    let k = xv.cols;
                    let mut gx = Mat::zeros(xv.rows, k);
                    for s in 0..segments.len() {
                        for r in segments.range(s) {
                            for c in 0..k {
                                // softmax weight exp(α (x − y))
                                let w = exp(alpha * (xv.get(r, c) - node.value.get(s, c)));
                                gx.data[r * k + c] += g.get(s, c) * w;
                            }
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::SumRows(x) => {
                    let xv = self.value(*x);
                    let mut gx = Mat::zeros(xv.rows, xv.cols);
                    for r in 0..xv.rows {
                        gx.row_mut(r).copy_from_slice(&g.data);
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::Mse { pred, target } => {
                    let p = self.value(*pred).data[0];
                    accumulate(
                        &mut grads,
                        *pred,
                        Mat::scalar(g.data[0] * 2.0 * (p - target)),
                    );
                }
            }
            if matches!(node.op, Op::Param(_) | Op::Input) {
                grads[i] = Some(g);
            }
        }
        Gradients { grads }
    }

    /// Gradient for each parameter index in `0..count` (zero if untouched).
    pub fn param_grads(&self, grads: &Gradients, count: usize) -> Vec<Option<Mat>> {
        let mut out: Vec<Option<Mat>> = (0..count).map(|_| None).collect();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(p), Some(g)) = (&node.op, &grads.grads[i]) {
                match &mut out[*p] {
                    Some(acc) => acc.add_assign(g),
                    slot => *slot = Some(g.clone()),
                }
            }
        }
        out
    }
}

fn accumulate(grads: &mut [Option<Mat>], node: NodeId, g: Mat) {
    match &mut grads[node.0 as usize] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Mat {
        Mat::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
        .unwrap()
    }

    fn rel_err(a: Real, b: Real) -> Real {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    /// Central differences of a scalar function of one input matrix.
    fn numeric_grad(x: &Mat, f: &dyn Fn(&Mat) -> Real, h: Real) -> Mat {
        let mut g = Mat::zeros(x.rows, x.cols);
        for i in 0..x.data.len() {
            let mut p = x.clone();
            p.data[i] += h;
            let mut m = x.clone();
            m.data[i] -= h;
            g.data[i] = (f(&p) - f(&m)) / (2.0 * h);
        }
        g
    }

    #[test]
    fn linear_identity_and_bias_gradient() {
        let mut t = Tape::new();
        let x = t.input(Mat::from_vec(1, 3, vec![1.0, -2.0, 0.5]).unwrap());
        let mut eye = Mat::zeros(3, 3);
        for i in 0..3 {
            eye.data[i * 3 + i] = 1.0;
        }
        let w = t.param(0, eye);
        let b = t.param(1, Mat::zeros(1, 3));
        let y = t.linear(x, w, b).unwrap();
        assert_eq!(t.value(y).data, vec![1.0, -2.0, 0.5]);
        let s = t.sum_rows(y);
        // reduce the 1×3 row to a scalar through a ones-weight linear map
        let ones = t.param(2, Mat::from_vec(1, 3, vec![1.0; 3]).unwrap());
        let zero = t.param(3, Mat::zeros(1, 1));
        let total = t.linear(s, ones, zero).unwrap();
        let g = t.backward(total);
        let pg = t.param_grads(&g, 4);
        assert_eq!(pg[1].as_ref().unwrap().data, vec![1.0; 3]);
    }

    /// Scalar head: `mse(linear(sum_rows(y), v, 0), 0)` with fixed random `v`.
    fn head(t: &mut Tape, y: NodeId, v: &Mat) -> NodeId {
        let s = t.sum_rows(y);
        let vn = t.input(v.clone());
        let z = t.input(Mat::zeros(1, 1));
        let out = t.linear(s, vn, z).unwrap();
        t.mse(out, 0.3).unwrap()
    }

    fn check_op(
        build: &dyn Fn(&mut Tape, NodeId) -> NodeId,
        x: &Mat,
        out_cols: usize,
        seed: u64,
        tol: Real,
    ) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = random(1, out_cols, &mut rng);
        let f = |m: &Mat| {
            let mut t = Tape::new();
            let xn = t.param(0, m.clone());
            let y = build(&mut t, xn);
            let l = head(&mut t, y, &v);
            t.value(l).data[0]
        };
        let mut t = Tape::new();
        let xn = t.param(0, x.clone());
        let y = build(&mut t, xn);
        let l = head(&mut t, y, &v);
        let g = t.backward(l);
        let analytic = t.param_grads(&g, 1)[0].clone().unwrap();
        let numeric = numeric_grad(x, &f, 1e-5);
        for (a, n) in analytic.data.iter().zip(&numeric.data) {
            assert!(
                rel_err(*a, *n) <= tol || (a - n).abs() < 1e-9,
                "analytic {a} numeric {n}"
            );
        }
    }

    #[test]
    fn linear_gradients_match_finite_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let w = random(4, 3, &mut rng);
        let b = random(1, 4, &mut rng);
        let x = random(2, 3, &mut rng);
        let (w2, b2) = (w.clone(), b.clone());
        check_op(
            &move |t, xn| {
                let wn = t.input(w2.clone());
                let bn = t.input(b2.clone());
                t.linear(xn, wn, bn).unwrap()
            },
            &x,
            4,
            2,
            1e-6,
        );
        let x2 = x.clone();
        check_op(
            &move |t, wn| {
                let xn = t.input(x2.clone());
                let bn = t.input(b.clone());
                t.linear(xn, wn, bn).unwrap()
            },
            &w,
            4,
            3,
            1e-6,
        );
    }

    #[test]
    fn mish_values_and_gradients() {
        let mut t = Tape::new();
        let x = t.input(Mat::from_vec(1, 2, vec![0.0, 20.0]).unwrap());
        let y = t.mish(x);
        assert_eq!(t.value(y).data[0], 0.0);
        assert!((t.value(y).data[1] - 20.0).abs() < 1e-6);
        let x = Mat::from_vec(1, 4, vec![-3.0, -0.5, 0.7, 4.0]).unwrap();
        check_op(&|t, xn| t.mish(xn), &x, 4, 4, 1e-6);
    }

    #[test]
    fn smooth_max_bounds_and_gradients() {
        let mut t = Tape::new();
        let x = t.input(Mat::from_vec(2, 1, vec![0.0, 1.0]).unwrap());
        let one = t
            .smooth_max(
                x,
                Arc::new(Segments {
                    offsets: vec![0, 1, 2, 2],
                }),
                12.0,
            )
            .unwrap();
        assert_eq!(t.value(one).data, vec![0.0, 1.0, 0.0]);
        let both = t
            .smooth_max(
                x,
                Arc::new(Segments {
                    offsets: vec![0, 2],
                }),
                12.0,
            )
            .unwrap();
        let v = t.value(both).data[0];
        assert!((1.0..=1.0 + core::f64::consts::LN_2 as Real / 12.0).contains(&v));
        assert!(t
            .smooth_max(
                x,
                Arc::new(Segments {
                    offsets: vec![0, 2]
                }),
                0.0
            )
            .is_err());

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let x = random(5, 3, &mut rng);
        let seg = Arc::new(Segments {
            offsets: vec![0, 2, 2, 5],
        });
        check_op(
            &move |t, xn| t.smooth_max(xn, seg.clone(), 3.0).unwrap(),
            &x,
            3,
            6,
            1e-6,
        );
    }

    #[test]
    fn gather_pick_concat_gradients() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x = random(3, 2, &mut rng);
        let index: Arc<[u32]> = Arc::from(vec![0u32, 2, 2, 1, 0, 0]);
        let picks: Arc<[Pick]> = Arc::from(vec![
            Pick {
                source: 0,
                row: 1,
                col: 2,
            },
            Pick {
                source: 0,
                row: 0,
                col: 0,
            },
            Pick {
                source: 1,
                row: 2,
                col: 0,
            },
        ]);
        check_op(
            &move |t, xn| {
                let g = t.gather_concat(xn, index.clone(), 2).unwrap();
                let p = t.pick(vec![g, xn], picks.clone(), 2).unwrap();
                let c = t.concat_cols(p, p).unwrap();
                t.mish(c)
            },
            &x,
            4,
            8,
            1e-6,
        );
    }

    #[test]
    fn mse_value_and_gradient() {
        let mut t = Tape::new();
        let p = t.param(0, Mat::scalar(3.0));
        let l = t.mse(p, 1.0).unwrap();
        assert_eq!(t.value(l).data[0], 4.0);
        let g = t.backward(l);
        assert_eq!(t.param_grads(&g, 1)[0].as_ref().unwrap().data[0], 4.0);
        let mut t = Tape::new();
        let p = t.param(0, Mat::scalar(2.0));
        let l = t.mse(p, 2.0).unwrap();
        assert_eq!(t.value(l).data[0], 0.0);
        // random case
        let x = Mat::scalar(0.37);
        let f = |m: &Mat| (m.data[0] - 1.3) * (m.data[0] - 1.3);
        let n = numeric_grad(&x, &f, 1e-5).data[0];
        let mut t = Tape::new();
        let p = t.param(0, x);
        let l = t.mse(p, 1.3).unwrap();
        let a = t.param_grads(&t.backward(l), 1)[0].as_ref().unwrap().data[0];
        assert!(rel_err(a, n) <= 1e-8);
    }

    #[test]
    fn backward_is_deterministic() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let x = random(4, 3, &mut rng);
        let run = || {
            let mut t = Tape::new();
            let xn = t.param(0, x.clone());
            let m = t.mish(xn);
            let s = t
                .smooth_max(
                    m,
                    Arc::new(Segments {
                        offsets: vec![0, 4],
                    }),
                    12.0,
                )
                .unwrap();
            let v = t.input(Mat::from_vec(1, 3, vec![0.1, 0.2, 0.3]).unwrap());
            let z = t.input(Mat::zeros(1, 1));
            let o = t.linear(s, v, z).unwrap();
            let l = t.mse(o, 1.0).unwrap();
            t.param_grads(&t.backward(l), 1)[0].clone().unwrap().data
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    proptest! {
        #[test]
        fn smooth_max_within_lse_bounds(rows in proptest::collection::vec(-5.0f64..5.0, 1..12), alpha in 0.5f64..20.0) {
            let n = rows.len();
            let mut t = Tape::new();
            let x = t.input(Mat::from_vec(n, 1, rows.iter().map(|&v| v as Real).collect()).unwrap());
            let y = t.smooth_max(x, Arc::new(Segments { offsets: vec![0, n as u32] }), alpha as Real).unwrap();
            let v = t.value(y).data[0];
            let max = rows.iter().cloned().fold(f64::NEG_INFINITY, f64::max) as Real;
            let slack = 1e-9;
            prop_assert!(v >= max - slack);
            prop_assert!(v <= max + crate::math::ln(n as Real) / alpha as Real + slack);
        }

        #[test]
        fn smooth_max_is_permutation_invariant(rows in proptest::collection::vec(-5.0f64..5.0, 1..10), seed in 0u64..1000) {
            use rand::seq::SliceRandom;
            let n = rows.len();
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let eval = |r: &[f64]| {
                let mut t = Tape::new();
                let x = t.input(Mat::from_vec(n, 1, r.iter().map(|&v| v as Real).collect()).unwrap());
                let y = t.smooth_max(x, Arc::new(Segments { offsets: vec![0, n as u32] }), 12.0).unwrap();
                t.value(y).data[0]
            };
            prop_assert_eq!(eval(&rows).to_bits(), eval(&shuffled).to_bits());
        }
    }
}
