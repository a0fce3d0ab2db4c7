use std::borrow::Cow;

use rand::Rng;

use super::tape::{accumulate, Op, Tape, Var};
use super::{Result, TensorError};

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;

/// `c = a·b` for row-major `a: m×k`, `b: k×n`, with `a` and `b` read
/// through the given (row, column) strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_strides: (isize, isize), b: &[f64], b_strides: (isize, isize)) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return out;
    }
    // SAFETY: the strides address exactly the m×k and k×n elements of the
    // slices, whose lengths the callers have checked, and `out` is m×n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0,
            a_strides.1,
            b.as_ptr(),
            b_strides.0,
            b_strides.1,
            0.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    out
}

fn matmul_kernel(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert!(a.len() == m * k && b.len() == k * n);
    gemm(m, k, n, a, (k as isize, 1), b, (n as isize, 1))
}

/// `g · bᵀ` for `g: m×n`, `b: k×n`.
fn matmul_nt(g: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert!(g.len() == m * n && b.len() == k * n);
    gemm(m, n, k, g, (n as isize, 1), b, (1, n as isize))
}

/// `aᵀ · g` for `a: m×k`, `g: m×n`.
fn matmul_tn(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert!(a.len() == m * k && g.len() == m * n);
    gemm(k, m, n, a, (1, k as isize), g, (n as isize, 1))
}

fn transpose_kernel(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    match shape {
        [r, c] => (*r, *c),
        [n] => (1, *n),
        _ => (shape[0], shape[1..].iter().product()),
    }
}

impl<'p> Tape<'p> {
    fn shape_error(&self, op: &'static str, a: Var, b: Var) -> TensorError {
        TensorError::Shape {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    fn matrix(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            other => Err(TensorError::Shape {
                op,
                left: other.to_vec(),
                right: vec![0, 0],
            }),
        }
    }

    fn push_owned(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, inputs: &[Var]) -> Var {
        let rg = self.needs_grad(inputs);
        self.push(shape, Cow::Owned(value), op, rg)
    }

    /// Matrix product of `a: m×k` and `b: k×n`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        let (m, k) = self.matrix("matmul", a)?;
        let (k2, n) = self.matrix("matmul", b)?;
        if k != k2 {
            return Err(self.shape_error("matmul", a, b));
        }
        let out = matmul_kernel(self.data(a), self.data(b), m, k, n);
        Ok(self.push_owned(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let (r, c) = self.matrix("transpose", a)?;
        let out = transpose_kernel(self.data(a), r, c);
        Ok(self.push_owned(vec![c, r], out, Op::Transpose(a), &[a]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_error("add", a, b));
        }
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x + y).collect();
        Ok(self.push_owned(self.shape(a).to_vec(), out, Op::Add(a, b), &[a, b]))
    }

    /// Adds the vector `b: n` to every row of `x: m×n`.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        self.check(x)?;
        self.check(b)?;
        let (_, n) = self.matrix("add_row", x)?;
        if self.shape(b) != [n] {
            return Err(self.shape_error("add_row", x, b));
        }
        let bias = self.data(b);
        let out = self
            .data(x)
            .chunks(n)
            .flat_map(|row| row.iter().zip(bias).map(|(v, c)| v + c))
            .collect();
        Ok(self.push_owned(self.shape(x).to_vec(), out, Op::AddRow(x, b), &[x, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_error("mul", a, b));
        }
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).collect();
        Ok(self.push_owned(self.shape(a).to_vec(), out, Op::Mul(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.check(a)?;
        let out = self.data(a).iter().map(|x| x * c).collect();
        Ok(self.push_owned(self.shape(a).to_vec(), out, Op::Scale(a, c), &[a]))
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let out = self
            .data(a)
            .iter()
            .map(|&x| 0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh()))
            .collect();
        Ok(self.push_owned(self.shape(a).to_vec(), out, Op::Gelu(a), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s = self.data(a).iter().sum();
        Ok(self.push_owned(vec![1], vec![s], Op::Sum(a), &[a]))
    }

    /// Inner product of two equal-length tensors, returned as a 1-element tensor.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        if self.shape(a) != self.shape(b) {
            return Err(self.shape_error("dot", a, b));
        }
        let s = self.data(a).iter().zip(self.data(b)).map(|(x, y)| x * y).sum();
        Ok(self.push_owned(vec![1], vec![s], Op::Dot(a, b), &[a, b]))
    }

    /// Row-wise softmax of `x: m×n`.
    ///
    /// `mask` is either `m·n` entries (one per element) or `n` entries shared
    /// by every row. Masked-out entries are exactly zero in the output; a row
    /// without any unmasked entry is an error.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        self.check(x)?;
        let (m, n) = dims2(self.shape(x));
        let keep = |i: usize, j: usize| -> bool {
            match mask {
                None => true,
                Some(mk) if mk.len() == n => mk[j],
                Some(mk) => mk[i * n + j],
            }
        };
        if let Some(mk) = mask {
            if mk.len() != n && mk.len() != m * n {
                return Err(TensorError::Shape {
                    op: "softmax_rows",
                    left: self.shape(x).to_vec(),
                    right: vec![mk.len()],
                });
            }
        }
        let data = self.data(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &data[i * n..(i + 1) * n];
            let max = (0..n)
                .filter(|&j| keep(i, j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::EmptyRow {
                    op: "softmax_rows",
                    row: i,
                });
            }
            let out_row = &mut out[i * n..(i + 1) * n];
            let mut total = 0.0;
            for j in 0..n {
                if keep(i, j) {
                    let e = (row[j] - max).exp();
                    out_row[j] = e;
                    total += e;
                }
            }
            for v in out_row.iter_mut() {
                *v /= total;
            }
        }
        Ok(self.push_owned(vec![m, n], out, Op::SoftmaxRows(x), &[x]))
    }

    /// Per-row normalization with population variance, followed by `γ·x̂ + β`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        self.check(x)?;
        self.check(gamma)?;
        self.check(beta)?;
        let (m, d) = dims2(self.shape(x));
        if d < 2 {
            return Err(TensorError::Parameter {
                op: "layer_norm",
                message: format!("feature dimension must be >= 2, got {d}"),
            });
        }
        if eps.is_nan() || eps <= 0.0 {
            return Err(TensorError::Parameter {
                op: "layer_norm",
                message: format!("eps must be positive, got {eps}"),
            });
        }
        if self.shape(gamma) != [d] {
            return Err(self.shape_error("layer_norm", x, gamma));
        }
        if self.shape(beta) != [d] {
            return Err(self.shape_error("layer_norm", x, beta));
        }
        let data = self.data(x);
        let (g, b) = (self.data(gamma), self.data(beta));
        let mut xhat = vec![0.0; m * d];
        let mut inv_std = vec![0.0; m];
        let mut out = vec![0.0; m * d];
        for i in 0..m {
            let row = &data[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let s = 1.0 / (var + eps).sqrt();
            inv_std[i] = s;
            for j in 0..d {
                let h = (row[j] - mean) * s;
                xhat[i * d + j] = h;
                out[i * d + j] = g[j] * h + b[j];
            }
        }
        let op = Op::LayerNorm {
            x,
            gamma,
            beta,
            xhat,
            inv_std,
        };
        Ok(self.push_owned(self.shape(x).to_vec(), out, op, &[x, gamma, beta]))
    }

    /// Inverted dropout. In eval mode, or with `p == 0`, returns `x` itself.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        p: f64,
        training: bool,
        rng: &mut R,
    ) -> Result<Var> {
        self.check(x)?;
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Parameter {
                op: "dropout",
                message: format!("probability must be in [0, 1), got {p}"),
            });
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let keep_scale = 1.0 / (1.0 - p);
        let factors: Vec<f64> = (0..self.data(x).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep_scale })
            .collect();
        let out = self.data(x).iter().zip(&factors).map(|(v, f)| v * f).collect();
        Ok(self.push_owned(self.shape(x).to_vec(), out, Op::Dropout { x, factors }, &[x]))
    }

    /// Mean of the rows of `x: l×d` whose mask entry is true.
    pub fn mean_pool_masked(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        self.check(x)?;
        let (l, d) = self.matrix("mean_pool_masked", x)?;
        if mask.len() != l {
            return Err(TensorError::Shape {
                op: "mean_pool_masked",
                left: vec![l, d],
                right: vec![mask.len()],
            });
        }
        let rows: Vec<usize> = (0..l).filter(|&i| mask[i]).collect();
        if rows.is_empty() {
            return Err(TensorError::EmptyRow {
                op: "mean_pool_masked",
                row: 0,
            });
        }
        let data = self.data(x);
        let mut out = vec![0.0; d];
        for &r in &rows {
            for (o, v) in out.iter_mut().zip(&data[r * d..(r + 1) * d]) {
                *o += v;
            }
        }
        let count = rows.len() as f64;
        out.iter_mut().for_each(|v| *v /= count);
        Ok(self.push_owned(vec![d], out, Op::MeanPoolRows { x, rows }, &[x]))
    }

    /// `-log softmax(logits)[gold]` with max-subtraction.
    pub fn cross_entropy(&mut self, logits: Var, gold: usize) -> Result<Var> {
        self.check(logits)?;
        let data = self.data(logits);
        let n = data.len();
        if gold >= n {
            return Err(TensorError::Index {
                op: "cross_entropy",
                index: gold,
                size: n,
            });
        }
        let max = data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = data.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        let loss = total.ln() - (data[gold] - max);
        let probs = exps.into_iter().map(|e| e / total).collect();
        let op = Op::CrossEntropy {
            logits,
            gold,
            probs,
        };
        Ok(self.push_owned(vec![1], vec![loss], op, &[logits]))
    }

    /// Selects rows of `table: r×d` by index, producing `idx.len()×d`.
    pub fn gather_rows(&mut self, table: Var, idx: &[usize]) -> Result<Var> {
        self.check(table)?;
        let (r, d) = self.matrix("gather_rows", table)?;
        if let Some(&bad) = idx.iter().find(|&&i| i >= r) {
            return Err(TensorError::Index {
                op: "gather_rows",
                index: bad,
                size: r,
            });
        }
        if idx.is_empty() {
            return Err(TensorError::Parameter {
                op: "gather_rows",
                message: "no rows selected".into(),
            });
        }
        let data = self.data(table);
        let out = idx
            .iter()
            .flat_map(|&i| data[i * d..(i + 1) * d].iter().copied())
            .collect();
        let op = Op::GatherRows {
            table,
            idx: idx.to_vec(),
        };
        Ok(self.push_owned(vec![idx.len(), d], out, op, &[table]))
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts.first().ok_or(TensorError::Parameter {
            op: "concat_cols",
            message: "nothing to concatenate".into(),
        })?;
        let (m, _) = self.matrix("concat_cols", first)?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            self.check(p)?;
            let (r, c) = self.matrix("concat_cols", p)?;
            if r != m {
                return Err(self.shape_error("concat_cols", first, p));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.data(p)[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push_owned(vec![m, total], out, Op::ConcatCols(parts.to_vec()), parts))
    }

    /// Flattens and concatenates tensors into one vector.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(TensorError::Parameter {
                op: "concat",
                message: "nothing to concatenate".into(),
            });
        }
        let mut out = Vec::new();
        for &p in parts {
            self.check(p)?;
            out.extend_from_slice(self.data(p));
        }
        Ok(self.push_owned(vec![out.len()], out, Op::Concat(parts.to_vec()), parts))
    }

    pub(crate) fn backward_node(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let wants = |v: &Var| self.nodes[v.0].requires_grad;
        match &self.nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = dims2(self.shape(*a));
                let n = self.shape(*b)[1];
                if wants(a) {
                    accumulate(grads, *a, matmul_nt(g, self.data(*b), m, k, n));
                }
                if wants(b) {
                    accumulate(grads, *b, matmul_tn(self.data(*a), g, m, k, n));
                }
            }
            Op::Transpose(a) => {
                let (r, c) = dims2(self.shape(*a));
                accumulate(grads, *a, transpose_kernel(g, c, r));
            }
            Op::Add(a, b) => {
                if wants(a) {
                    accumulate(grads, *a, g.to_vec());
                }
                if wants(b) {
                    accumulate(grads, *b, g.to_vec());
                }
            }
            Op::AddRow(x, b) => {
                if wants(x) {
                    accumulate(grads, *x, g.to_vec());
                }
                if wants(b) {
                    let n = self.shape(*b)[0];
                    let mut db = vec![0.0; n];
                    for row in g.chunks(n) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(grads, *b, db);
                }
            }
            Op::Mul(a, b) => {
                if wants(a) {
                    let d = g.iter().zip(self.data(*b)).map(|(x, y)| x * y).collect();
                    accumulate(grads, *a, d);
                }
                if wants(b) {
                    let d = g.iter().zip(self.data(*a)).map(|(x, y)| x * y).collect();
                    accumulate(grads, *b, d);
                }
            }
            Op::Scale(a, c) => accumulate(grads, *a, g.iter().map(|v| v * c).collect()),
            Op::Gelu(a) => {
                let d = self
                    .data(*a)
                    .iter()
                    .zip(g)
                    .map(|(&x, gv)| {
                        let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
                        let dt = (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x);
                        gv * (0.5 * (1.0 + t) + 0.5 * x * dt)
                    })
                    .collect();
                accumulate(grads, *a, d);
            }
            Op::Sum(a) => accumulate(grads, *a, vec![g[0]; self.data(*a).len()]),
            Op::Dot(a, b) => {
                if wants(a) {
                    accumulate(grads, *a, self.data(*b).iter().map(|v| v * g[0]).collect());
                }
                if wants(b) {
                    accumulate(grads, *b, self.data(*a).iter().map(|v| v * g[0]).collect());
                }
            }
            Op::SoftmaxRows(x) => {
                let y = &self.nodes[i].value;
                let (m, n) = dims2(&self.nodes[i].shape);
                let mut dx = vec![0.0; m * n];
                for r in 0..m {
                    let yr = &y[r * n..(r + 1) * n];
                    let gr = &g[r * n..(r + 1) * n];
                    let inner: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        dx[r * n + j] = yr[j] * (gr[j] - inner);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            } => {
                let (m, d) = dims2(self.shape(*x));
                let gam = self.data(*gamma);
                if wants(gamma) {
                    let mut dg = vec![0.0; d];
                    for (k, (gv, h)) in g.iter().zip(xhat).enumerate() {
                        dg[k % d] += gv * h;
                    }
                    accumulate(grads, *gamma, dg);
                }
                if wants(beta) {
                    let mut db = vec![0.0; d];
                    for (k, gv) in g.iter().enumerate() {
                        db[k % d] += gv;
                    }
                    accumulate(grads, *beta, db);
                }
                if wants(x) {
                    let mut dx = vec![0.0; m * d];
                    for r in 0..m {
                        let gr = &g[r * d..(r + 1) * d];
                        let hr = &xhat[r * d..(r + 1) * d];
                        let dh: Vec<f64> = gr.iter().zip(gam).map(|(a, b)| a * b).collect();
                        let mean_dh = dh.iter().sum::<f64>() / d as f64;
                        let mean_dh_h =
                            dh.iter().zip(hr).map(|(a, b)| a * b).sum::<f64>() / d as f64;
                        for j in 0..d {
                            dx[r * d + j] = inv_std[r] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                    accumulate(grads, *x, dx);
                }
            }
            Op::Dropout { x, factors } => {
                accumulate(grads, *x, g.iter().zip(factors).map(|(a, f)| a * f).collect());
            }
            Op::MeanPoolRows { x, rows } => {
                let (l, d) = dims2(self.shape(*x));
                let mut dx = vec![0.0; l * d];
                let inv = 1.0 / rows.len() as f64;
                for &r in rows {
                    for (o, gv) in dx[r * d..(r + 1) * d].iter_mut().zip(g) {
                        *o = gv * inv;
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::CrossEntropy {
                logits,
                gold,
                probs,
            } => {
                let mut d: Vec<f64> = probs.iter().map(|p| p * g[0]).collect();
                d[*gold] -= g[0];
                accumulate(grads, *logits, d);
            }
            Op::GatherRows { table, idx } => {
                let (r, d) = dims2(self.shape(*table));
                let mut dt = vec![0.0; r * d];
                for (k, &row) in idx.iter().enumerate() {
                    for (o, gv) in dt[row * d..(row + 1) * d].iter_mut().zip(&g[k * d..(k + 1) * d]) {
                        *o += gv;
                    }
                }
                accumulate(grads, *table, dt);
            }
            Op::ConcatCols(parts) => {
                let (m, total) = dims2(&self.nodes[i].shape);
                let mut offset = 0;
                for p in parts {
                    let w = self.shape(*p)[1];
                    if wants(p) {
                        let mut d = Vec::with_capacity(m * w);
                        for r in 0..m {
                            d.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                        }
                        accumulate(grads, *p, d);
                    }
                    offset += w;
                }
            }
            Op::Concat(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.data(*p).len();
                    if wants(p) {
                        accumulate(grads, *p, g[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::Tensor;
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mat(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut t = Tape::new();
        let i = t.constant(Tensor::identity(2));
        let m = t.constant(mat(&[&[1.5, -2.0], &[0.25, 7.0]]));
        let out = t.matmul(i, m).unwrap();
        assert_eq!(t.data(out), &[1.5, -2.0, 0.25, 7.0]);
    }

    #[test]
    fn matmul_hand_evaluated() {
        // 1*5+2*7=19, 1*6+2*8=22, 3*5+4*7=43, 3*6+4*8=50
        let mut t = Tape::new();
        let a = t.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let b = t.constant(mat(&[&[5.0, 6.0], &[7.0, 8.0]]));
        let out = t.matmul(a, b).unwrap();
        assert_eq!(t.data(out), &[19.0, 22.0, 43.0, 50.0]);
    }

    #[test]
    fn matmul_zero_annihilates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut t = Tape::new();
        let z = t.constant(Tensor::zeros(&[3, 4]));
        let r = t.constant(Tensor::randn(&[4, 2], 1.0, &mut rng));
        let out = t.matmul(z, r).unwrap();
        assert_eq!(t.shape(out), &[3, 2]);
        assert!(t.data(out).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3] vs [2, 3]"), "{msg}");
    }

    #[test]
    fn softmax_examples() {
        let mut t = Tape::new();
        let x = t.constant(mat(&[&[0.0, 0.0, 0.0]]));
        let y = t.softmax_rows(x, None).unwrap();
        for v in t.data(y) {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }

        let x = t.constant(mat(&[&[0.0, 3f64.ln()]]));
        let y = t.softmax_rows(x, None).unwrap();
        assert!((t.data(y)[0] - 0.25).abs() < 1e-15);
        assert!((t.data(y)[1] - 0.75).abs() < 1e-15);

        let x = t.constant(mat(&[&[5.0, 5.0]]));
        let y = t.softmax_rows(x, Some(&[true, false])).unwrap();
        assert_eq!(t.data(y), &[1.0, 0.0]);
    }

    #[test]
    fn softmax_fully_masked_row_is_error() {
        let mut t = Tape::new();
        let x = t.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let err = t
            .softmax_rows(x, Some(&[true, true, false, false]))
            .unwrap_err();
        assert_eq!(
            err,
            TensorError::EmptyRow {
                op: "softmax_rows",
                row: 1
            }
        );
    }

    #[test]
    fn layer_norm_examples() {
        let mut t = Tape::new();
        let ones = t.constant(Tensor::filled(&[4], 1.0));
        let zeros = t.constant(Tensor::zeros(&[4]));
        let x = t.constant(mat(&[&[5.0, 5.0, 5.0, 5.0]]));
        let y = t.layer_norm(x, ones, zeros, 1e-5).unwrap();
        assert!(t.data(y).iter().all(|&v| v == 0.0));

        let g1 = t.constant(Tensor::filled(&[2], 1.0));
        let b0 = t.constant(Tensor::zeros(&[2]));
        let x = t.constant(mat(&[&[1.0, -1.0]]));
        let y = t.layer_norm(x, g1, b0, 1e-300).unwrap();
        assert!((t.data(y)[0] - 1.0).abs() < 1e-12);
        assert!((t.data(y)[1] + 1.0).abs() < 1e-12);

        let g2 = t.constant(Tensor::filled(&[2], 2.0));
        let b1 = t.constant(Tensor::filled(&[2], 1.0));
        let y = t.layer_norm(x, g2, b1, 1e-300).unwrap();
        assert!((t.data(y)[0] - 3.0).abs() < 1e-12);
        assert!((t.data(y)[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_rejects_bad_parameters() {
        let mut t = Tape::new();
        let g = t.constant(Tensor::filled(&[1], 1.0));
        let x = t.constant(mat(&[&[1.0]]));
        assert!(t.layer_norm(x, g, g, 1e-5).is_err());
        let g = t.constant(Tensor::filled(&[2], 1.0));
        let x = t.constant(mat(&[&[1.0, 2.0]]));
        assert!(t.layer_norm(x, g, g, 0.0).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut t = Tape::new();
        let x = t.constant(Tensor::randn(&[4, 4], 1.0, &mut rng));
        assert_eq!(t.dropout(x, 0.0, true, &mut rng).unwrap(), x);
        assert_eq!(t.dropout(x, 0.9, false, &mut rng).unwrap(), x);
        assert!(t.dropout(x, 1.0, true, &mut rng).is_err());

        let a = t.dropout(x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let b = t.dropout(x, 0.5, true, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert_eq!(t.data(a), t.data(b));
        for (o, i) in t.data(a).iter().zip(t.data(x)) {
            assert!(*o == 0.0 || (*o - 2.0 * i).abs() < 1e-15);
        }
    }

    #[test]
    fn mean_pool_examples() {
        let mut t = Tape::new();
        let x = t.constant(mat(&[&[1.0, 2.0], &[3.0, 4.0]]));
        let y = t.mean_pool_masked(x, &[true, true]).unwrap();
        assert_eq!(t.data(y), &[2.0, 3.0]);
        let x = t.constant(mat(&[&[1.0, 2.0], &[9.0, 9.0]]));
        let y = t.mean_pool_masked(x, &[true, false]).unwrap();
        assert_eq!(t.data(y), &[1.0, 2.0]);
        assert!(t.mean_pool_masked(x, &[false, false]).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let mut t = Tape::new();
        let l = t.constant(Tensor::vector(vec![0.3; 5]));
        let loss = t.cross_entropy(l, 2).unwrap();
        assert!((t.scalar(loss) - 5f64.ln()).abs() < 1e-12);

        let l = t.constant(Tensor::vector(vec![40.0, 0.0, 0.0, 0.0, 0.0]));
        let loss = t.cross_entropy(l, 0).unwrap();
        assert!(t.scalar(loss) < 1e-9);

        // ln(1 + e^-1)
        let l = t.constant(Tensor::vector(vec![1.0, 2.0]));
        let loss = t.cross_entropy(l, 1).unwrap();
        assert!((t.scalar(loss) - (1.0 + (-1f64).exp()).ln()).abs() < 1e-12);
        assert!((t.scalar(loss) - 0.31326).abs() < 1e-5);

        assert!(matches!(
            t.cross_entropy(l, 2),
            Err(TensorError::Index { index: 2, size: 2, .. })
        ));
    }

    #[test]
    fn square_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0), true);
        let y = t.mul(x, x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0]);
        assert_eq!(t.backward(y).unwrap_err(), TensorError::BackwardTwice);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(&[2, 2]), true);
        assert!(matches!(
            t.backward(x),
            Err(TensorError::NonScalarLoss(_))
        ));
    }

    #[test]
    fn reset_allows_second_backward() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(2.0), true);
        let y = t.mul(x, x).unwrap();
        t.backward(y).unwrap();
        t.reset();
        let x = t.leaf(Tensor::scalar(2.0), true);
        let y = t.scale(x, 5.0).unwrap();
        assert_eq!(t.backward(y).unwrap().get(x).unwrap().data(), &[5.0]);
    }

    #[test]
    fn shared_param_accumulates() {
        let p = Tensor::scalar(1.5);
        let mut t = Tape::new();
        let a = t.param(0, &p);
        let b = t.param(0, &p);
        assert_eq!(a, b);
        let y = t.mul(a, b).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[3.0]);
    }
}
