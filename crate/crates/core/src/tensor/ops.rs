//! Differentiable operations. Each constructor computes its forward value
//! eagerly and attaches a closure yielding the parents' gradient
//! contributions for the reverse sweep.

use super::{ParentGrads, Tensor};
use crate::error::{Error, Result};
use crate::fft;

fn shape_err(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: format!("[{}, {}]", a.rows(), a.cols()),
        rhs: format!("[{}, {}]", b.rows(), b.cols()),
    }
}

impl Tensor {
    /// Matrix product `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.cols() != rhs.rows() {
            return Err(shape_err("matmul", self, rhs));
        }
        let (m, k, n) = (self.rows(), self.cols(), rhs.cols());
        let a = self.data();
        let b = rhs.data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for kk in 0..k {
                let av = a[i * k + kk];
                if av == 0.0 {
                    continue;
                }
                let brow = &b[kk * n..(kk + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for j in 0..n {
                    orow[j] += av * brow[j];
                }
            }
        }
        let (lhs_c, rhs_c) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            m,
            n,
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |_node, g| {
                let mut grads: ParentGrads = Vec::new();
                if lhs_c.requires_grad() {
                    // dA[i, kk] = sum_j g[i, j] * B[kk, j]
                    let mut da = vec![0.0; m * k];
                    let b = rhs_c.data();
                    for i in 0..m {
                        for j in 0..n {
                            let gv = g[i * n + j];
                            if gv == 0.0 {
                                continue;
                            }
                            for kk in 0..k {
                                da[i * k + kk] += gv * b[kk * n + j];
                            }
                        }
                    }
                    grads.push((lhs_c.id(), da));
                }
                if rhs_c.requires_grad() {
                    // dB[kk, j] = sum_i A[i, kk] * g[i, j]
                    let mut db = vec![0.0; k * n];
                    let a = lhs_c.data();
                    for i in 0..m {
                        for kk in 0..k {
                            let av = a[i * k + kk];
                            if av == 0.0 {
                                continue;
                            }
                            for j in 0..n {
                                db[kk * n + j] += av * g[i * n + j];
                            }
                        }
                    }
                    grads.push((rhs_c.id(), db));
                }
                grads
            }),
        ))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.shape() != rhs.shape() {
            return Err(shape_err("add", self, rhs));
        }
        let out = self.data().iter().zip(rhs.data()).map(|(a, b)| a + b).collect();
        let (l, r) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            self.rows(),
            self.cols(),
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |_node, g| {
                let mut grads: ParentGrads = Vec::new();
                if l.requires_grad() {
                    grads.push((l.id(), g.to_vec()));
                }
                if r.requires_grad() {
                    grads.push((r.id(), g.to_vec()));
                }
                grads
            }),
        ))
    }

    /// Elementwise difference.
    pub fn sub(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.shape() != rhs.shape() {
            return Err(shape_err("sub", self, rhs));
        }
        let out = self.data().iter().zip(rhs.data()).map(|(a, b)| a - b).collect();
        let (l, r) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            self.rows(),
            self.cols(),
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |_node, g| {
                let mut grads: ParentGrads = Vec::new();
                if l.requires_grad() {
                    grads.push((l.id(), g.to_vec()));
                }
                if r.requires_grad() {
                    grads.push((r.id(), g.iter().map(|v| -v).collect()));
                }
                grads
            }),
        ))
    }

    /// Elementwise (Hadamard) product of two same-shape tensors.
    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.shape() != rhs.shape() {
            return Err(shape_err("mul", self, rhs));
        }
        let out = self.data().iter().zip(rhs.data()).map(|(a, b)| a * b).collect();
        let (l, r) = (self.clone(), rhs.clone());
        Ok(Tensor::from_op(
            self.rows(),
            self.cols(),
            out,
            vec![self.clone(), rhs.clone()],
            Box::new(move |_node, g| {
                let mut grads: ParentGrads = Vec::new();
                if l.requires_grad() {
                    grads.push((l.id(), g.iter().zip(r.data()).map(|(gv, b)| gv * b).collect()));
                }
                if r.requires_grad() {
                    grads.push((r.id(), g.iter().zip(l.data()).map(|(gv, a)| gv * a).collect()));
                }
                grads
            }),
        ))
    }

    /// Elementwise `a * x + b` with scalar constants.
    pub fn affine(&self, a: f64, b: f64) -> Result<Tensor> {
        let out = self.data().iter().map(|v| a * v + b).collect();
        let x = self.clone();
        Ok(Tensor::from_op(
            self.rows(),
            self.cols(),
            out,
            vec![self.clone()],
            Box::new(move |_node, g| {
                if x.requires_grad() {
                    vec![(x.id(), g.iter().map(|gv| a * gv).collect())]
                } else {
                    Vec::new()
                }
            }),
        ))
    }

    /// Elementwise scale by a constant.
    pub fn scale(&self, a: f64) -> Result<Tensor> {
        self.affine(a, 0.0)
    }

    /// Elementwise max(x, 0). The subgradient at exactly zero is taken as 0.
    pub fn relu(&self) -> Result<Tensor> {
        let out = self.data().iter().map(|v| v.max(0.0)).collect();
        let x = self.clone();
        Ok(Tensor::from_op(
            self.rows(),
            self.cols(),
            out,
            vec![self.clone()],
            Box::new(move |_node, g| {
                if x.requires_grad() {
                    let dx = g
                        .iter()
                        .zip(x.data())
                        .map(|(gv, v)| if *v > 0.0 { *gv } else { 0.0 })
                        .collect();
                    vec![(x.id(), dx)]
                } else {
                    Vec::new()
                }
            }),
        ))
    }

    /// Clamp into `[lo, hi]`; gradient passes only strictly inside the band.
    pub fn clamp(&self, lo: f64, hi: f64) -> Result<Tensor> {
        if !(lo < hi) {
            return Err(Error::InvalidArgument {
                op: "clamp",
                reason: format!("empty interval [{lo}, {hi}]"),
            });
        }
        let out = self.data().iter().map(|v| v.clamp(lo, hi)).collect();
        let x = self.clone();
        Ok(Tensor::from_op(
            self.rows(),
            self.cols(),
            out,
            vec![self.clone()],
            Box::new(move |_node, g| {
                if x.requires_grad() {
                    let dx = g
                        .iter()
                        .zip(x.data())
                        .map(|(gv, v)| if *v > lo && *v < hi { *gv } else { 0.0 })
                        .collect();
                    vec![(x.id(), dx)]
                } else {
                    Vec::new()
                }
            }),
        ))
    }

    /// Elementwise natural log. Inputs must be positive.
    pub fn ln(&self) -> Result<Tensor> {
        if let Some(v) = self.data().iter().find(|v| **v <= 0.0) {
            return Err(Error::InvalidArgument {
                op: "ln",
                reason: format!("non-positive input {v}"),
            });
        }
        let out = self.data().iter().map(|v| v.ln()).collect();
        let x = self.clone();
        Ok(Tensor::from_op(
            self.rows(),
            self.cols(),
            out,
            vec![self.clone()],
            Box::new(move |_node, g| {
                if x.requires_grad() {
                    vec![(x.id(), g.iter().zip(x.data()).map(|(gv, v)| gv / v).collect())]
                } else {
                    Vec::new()
                }
            }),
        ))
    }

    /// Add a `[1, c]` row vector to every row.
    pub fn add_row(&self, bias: &Tensor) -> Result<Tensor> {
        if bias.rows() != 1 || bias.cols() != self.cols() {
            return Err(shape_err("add_row", self, bias));
        }
        let (r, c) = (self.rows(), self.cols());
        let mut out = self.data().to_vec();
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] += bias.data()[j];
            }
        }
        let (x, b) = (self.clone(), bias.clone());
        Ok(Tensor::from_op(
            r,
            c,
            out,
            vec![self.clone(), bias.clone()],
            Box::new(move |_node, g| {
                let mut grads: ParentGrads = Vec::new();
                if x.requires_grad() {
                    grads.push((x.id(), g.to_vec()));
                }
                if b.requires_grad() {
                    let mut db = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            db[j] += g[i * c + j];
                        }
                    }
                    grads.push((b.id(), db));
                }
                grads
            }),
        ))
    }

    /// Multiply every row elementwise by a `[1, c]` row vector.
    pub fn mul_row(&self, scale: &Tensor) -> Result<Tensor> {
        if scale.rows() != 1 || scale.cols() != self.cols() {
            return Err(shape_err("mul_row", self, scale));
        }
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[i * c + j] = self.data()[i * c + j] * scale.data()[j];
            }
        }
        let (x, s) = (self.clone(), scale.clone());
        Ok(Tensor::from_op(
            r,
            c,
            out,
            vec![self.clone(), scale.clone()],
            Box::new(move |_node, g| {
                let mut grads: ParentGrads = Vec::new();
                if x.requires_grad() {
                    let mut dx = vec![0.0; r * c];
                    for i in 0..r {
                        for j in 0..c {
                            dx[i * c + j] = g[i * c + j] * s.data()[j];
                        }
                    }
                    grads.push((x.id(), dx));
                }
                if s.requires_grad() {
                    let mut ds = vec![0.0; c];
                    for i in 0..r {
                        for j in 0..c {
                            ds[j] += g[i * c + j] * x.data()[i * c + j];
                        }
                    }
                    grads.push((s.id(), ds));
                }
                grads
            }),
        ))
    }

    /// Multiply every element by a `[1, 1]` tensor.
    pub fn mul_scalar(&self, s: &Tensor) -> Result<Tensor> {
        if s.rows() != 1 || s.cols() != 1 {
            return Err(shape_err("mul_scalar", self, s));
        }
        let sv = s.data()[0];
        let out = self.data().iter().map(|v| v * sv).collect();
        let (x, sc) = (self.clone(), s.clone());
        Ok(Tensor::from_op(
            self.rows(),
            self.cols(),
            out,
            vec![self.clone(), s.clone()],
            Box::new(move |_node, g| {
                let mut grads: ParentGrads = Vec::new();
                if x.requires_grad() {
                    let sv = sc.data()[0];
                    grads.push((x.id(), g.iter().map(|gv| gv * sv).collect()));
                }
                if sc.requires_grad() {
                    let ds: f64 = g.iter().zip(x.data()).map(|(gv, v)| gv * v).sum();
                    grads.push((sc.id(), vec![ds]));
                }
                grads
            }),
        ))
    }

    /// Softmax along `axis` (0 = down each column, 1 = across each row),
    /// stabilized by the per-slice maximum.
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        if axis > 1 {
            return Err(Error::InvalidArgument {
                op: "softmax",
                reason: format!("axis {axis} out of range"),
            });
        }
        let (r, c) = (self.rows(), self.cols());
        let x = self.data();
        let mut out = vec![0.0; r * c];
        let (slices, slice_len, outer_stride, inner_stride) = if axis == 1 {
            (r, c, c, 1)
        } else {
            (c, r, 1, c)
        };
        for s in 0..slices {
            let idx = |k: usize| s * outer_stride + k * inner_stride;
            let mut max = f64::NEG_INFINITY;
            for k in 0..slice_len {
                max = max.max(x[idx(k)]);
            }
            let mut denom = 0.0;
            for k in 0..slice_len {
                let e = (x[idx(k)] - max).exp();
                out[idx(k)] = e;
                denom += e;
            }
            for k in 0..slice_len {
                out[idx(k)] /= denom;
            }
        }
        let xc = self.clone();
        Ok(Tensor::from_op(
            r,
            c,
            out,
            vec![self.clone()],
            Box::new(move |node, g| {
                if !xc.requires_grad() {
                    return Vec::new();
                }
                let y = &node.data;
                let mut dx = vec![0.0; r * c];
                for s in 0..slices {
                    let idx = |k: usize| s * outer_stride + k * inner_stride;
                    let mut dot = 0.0;
                    for k in 0..slice_len {
                        dot += g[idx(k)] * y[idx(k)];
                    }
                    for k in 0..slice_len {
                        dx[idx(k)] = y[idx(k)] * (g[idx(k)] - dot);
                    }
                }
                vec![(xc.id(), dx)]
            }),
        ))
    }

    /// Normalize each row to zero mean and unit variance (biased variance,
    /// stabilized by `eps`). Any learned affine is applied by the caller.
    pub fn layer_norm_rows(&self, eps: f64) -> Result<Tensor> {
        if eps <= 0.0 {
            return Err(Error::InvalidArgument {
                op: "layer_norm_rows",
                reason: format!("eps must be positive, got {eps}"),
            });
        }
        let (r, c) = (self.rows(), self.cols());
        let x = self.data();
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let row = &x[i * c..(i + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            for j in 0..c {
                out[i * c + j] = (row[j] - mean) * inv;
            }
        }
        let xc = self.clone();
        Ok(Tensor::from_op(
            r,
            c,
            out,
            vec![self.clone()],
            Box::new(move |node, g| {
                if !xc.requires_grad() {
                    return Vec::new();
                }
                let x = xc.data();
                let y = &node.data;
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    let row = &x[i * c..(i + 1) * c];
                    let mean = row.iter().sum::<f64>() / c as f64;
                    let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
                    let inv = 1.0 / (var + eps).sqrt();
                    let gr = &g[i * c..(i + 1) * c];
                    let yr = &y[i * c..(i + 1) * c];
                    let g_mean = gr.iter().sum::<f64>() / c as f64;
                    let gy_mean = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                    for j in 0..c {
                        dx[i * c + j] = inv * (gr[j] - g_mean - yr[j] * gy_mean);
                    }
                }
                vec![(xc.id(), dx)]
            }),
        ))
    }

    /// Concatenate along `axis` (0 = stack rows, 1 = widen columns).
    pub fn concat(axis: usize, parts: &[Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::InvalidArgument {
                op: "concat",
                reason: "no tensors given".into(),
            });
        }
        if axis > 1 {
            return Err(Error::InvalidArgument {
                op: "concat",
                reason: format!("axis {axis} out of range"),
            });
        }
        let (r0, c0) = (parts[0].rows(), parts[0].cols());
        for p in &parts[1..] {
            let ok = if axis == 0 { p.cols() == c0 } else { p.rows() == r0 };
            if !ok {
                return Err(shape_err("concat", &parts[0], p));
            }
        }
        let (rows, cols, out) = if axis == 0 {
            let rows: usize = parts.iter().map(|p| p.rows()).sum();
            let mut out = Vec::with_capacity(rows * c0);
            for p in parts {
                out.extend_from_slice(p.data());
            }
            (rows, c0, out)
        } else {
            let cols: usize = parts.iter().map(|p| p.cols()).sum();
            let mut out = vec![0.0; r0 * cols];
            let mut offset = 0;
            for p in parts {
                let pc = p.cols();
                for i in 0..r0 {
                    out[i * cols + offset..i * cols + offset + pc]
                        .copy_from_slice(&p.data()[i * pc..(i + 1) * pc]);
                }
                offset += pc;
            }
            (r0, cols, out)
        };
        let owned: Vec<Tensor> = parts.to_vec();
        Ok(Tensor::from_op(
            rows,
            cols,
            out,
            owned.clone(),
            Box::new(move |_node, g| {
                let mut grads: ParentGrads = Vec::new();
                if axis == 0 {
                    let mut start = 0;
                    for p in &owned {
                        let len = p.rows() * p.cols();
                        if p.requires_grad() {
                            grads.push((p.id(), g[start..start + len].to_vec()));
                        }
                        start += len;
                    }
                } else {
                    let mut offset = 0;
                    for p in &owned {
                        let pc = p.cols();
                        if p.requires_grad() {
                            let mut dp = vec![0.0; rows * pc];
                            for i in 0..rows {
                                dp[i * pc..(i + 1) * pc].copy_from_slice(
                                    &g[i * cols + offset..i * cols + offset + pc],
                                );
                            }
                            grads.push((p.id(), dp));
                        }
                        offset += pc;
                    }
                }
                grads
            }),
        ))
    }

    /// Contiguous sub-block along `axis`, starting at `start`, `len` wide.
    pub fn slice(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis > 1 {
            return Err(Error::InvalidArgument {
                op: "slice",
                reason: format!("axis {axis} out of range"),
            });
        }
        let bound = if axis == 0 { self.rows() } else { self.cols() };
        if len == 0 || start + len > bound {
            return Err(Error::InvalidArgument {
                op: "slice",
                reason: format!("range {start}..{} exceeds extent {bound}", start + len),
            });
        }
        let (r, c) = (self.rows(), self.cols());
        let (out_r, out_c) = if axis == 0 { (len, c) } else { (r, len) };
        let mut out = vec![0.0; out_r * out_c];
        if axis == 0 {
            out.copy_from_slice(&self.data()[start * c..(start + len) * c]);
        } else {
            for i in 0..r {
                out[i * len..(i + 1) * len]
                    .copy_from_slice(&self.data()[i * c + start..i * c + start + len]);
            }
        }
        let x = self.clone();
        Ok(Tensor::from_op(
            out_r,
            out_c,
            out,
            vec![self.clone()],
            Box::new(move |_node, g| {
                if !x.requires_grad() {
                    return Vec::new();
                }
                let mut dx = vec![0.0; r * c];
                if axis == 0 {
                    dx[start * c..(start + len) * c].copy_from_slice(g);
                } else {
                    for i in 0..r {
                        dx[i * c + start..i * c + start + len]
                            .copy_from_slice(&g[i * len..(i + 1) * len]);
                    }
                }
                vec![(x.id(), dx)]
            }),
        ))
    }

    /// Select rows by index (repeats allowed); the adjoint scatter-adds.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        if indices.is_empty() {
            return Err(Error::InvalidArgument {
                op: "gather_rows",
                reason: "no indices given".into(),
            });
        }
        let (r, c) = (self.rows(), self.cols());
        if let Some(bad) = indices.iter().find(|i| **i >= r) {
            return Err(Error::InvalidArgument {
                op: "gather_rows",
                reason: format!("index {bad} out of range for {r} rows"),
            });
        }
        let mut out = Vec::with_capacity(indices.len() * c);
        for &i in indices {
            out.extend_from_slice(&self.data()[i * c..(i + 1) * c]);
        }
        let x = self.clone();
        let idx: Vec<usize> = indices.to_vec();
        Ok(Tensor::from_op(
            indices.len(),
            c,
            out,
            vec![self.clone()],
            Box::new(move |_node, g| {
                if !x.requires_grad() {
                    return Vec::new();
                }
                let mut dx = vec![0.0; r * c];
                for (k, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        dx[i * c + j] += g[k * c + j];
                    }
                }
                vec![(x.id(), dx)]
            }),
        ))
    }

    /// Circular shift along the row axis: `out[i] = x[(i + delta) mod rows]`,
    /// so rows pushed past the front reappear at the back. The adjoint is the
    /// inverse roll.
    pub fn roll_rows(&self, delta: usize) -> Result<Tensor> {
        let (r, c) = (self.rows(), self.cols());
        let d = delta % r;
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let src = (i + d) % r;
            out[i * c..(i + 1) * c].copy_from_slice(&self.data()[src * c..(src + 1) * c]);
        }
        let x = self.clone();
        Ok(Tensor::from_op(
            r,
            c,
            out,
            vec![self.clone()],
            Box::new(move |_node, g| {
                if !x.requires_grad() {
                    return Vec::new();
                }
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    let src = (i + d) % r;
                    for j in 0..c {
                        dx[src * c + j] += g[i * c + j];
                    }
                }
                vec![(x.id(), dx)]
            }),
        ))
    }

    pub fn transpose(&self) -> Result<Tensor> {
        let (r, c) = (self.rows(), self.cols());
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data()[i * c + j];
            }
        }
        let x = self.clone();
        Ok(Tensor::from_op(
            c,
            r,
            out,
            vec![self.clone()],
            Box::new(move |_node, g| {
                if !x.requires_grad() {
                    return Vec::new();
                }
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        dx[i * c + j] = g[j * r + i];
                    }
                }
                vec![(x.id(), dx)]
            }),
        ))
    }

    /// Sum along `axis`: 0 collapses rows into `[1, c]`, 1 collapses columns
    /// into `[r, 1]`.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce_axis(axis, false)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor> {
        self.reduce_axis(axis, true)
    }

    fn reduce_axis(&self, axis: usize, mean: bool) -> Result<Tensor> {
        if axis > 1 {
            return Err(Error::InvalidArgument {
                op: "reduce_axis",
                reason: format!("axis {axis} out of range"),
            });
        }
        let (r, c) = (self.rows(), self.cols());
        let n = if axis == 0 { r } else { c } as f64;
        let scale = if mean { 1.0 / n } else { 1.0 };
        let (out_r, out_c) = if axis == 0 { (1, c) } else { (r, 1) };
        let mut out = vec![0.0; out_r * out_c];
        for i in 0..r {
            for j in 0..c {
                let o = if axis == 0 { j } else { i };
                out[o] += self.data()[i * c + j] * scale;
            }
        }
        let x = self.clone();
        Ok(Tensor::from_op(
            out_r,
            out_c,
            out,
            vec![self.clone()],
            Box::new(move |_node, g| {
                if !x.requires_grad() {
                    return Vec::new();
                }
                let mut dx = vec![0.0; r * c];
                for i in 0..r {
                    for j in 0..c {
                        let o = if axis == 0 { j } else { i };
                        dx[i * c + j] = g[o] * scale;
                    }
                }
                vec![(x.id(), dx)]
            }),
        ))
    }

    /// Sum of every element, as a `[1, 1]` tensor.
    pub fn sum_all(&self) -> Result<Tensor> {
        let total: f64 = self.data().iter().sum();
        let (r, c) = (self.rows(), self.cols());
        let x = self.clone();
        Ok(Tensor::from_op(
            1,
            1,
            vec![total],
            vec![self.clone()],
            Box::new(move |_node, g| {
                if x.requires_grad() {
                    vec![(x.id(), vec![g[0]; r * c])]
                } else {
                    Vec::new()
                }
            }),
        ))
    }

    /// Tile a `[1, c]` row `n` times.
    pub fn repeat_rows(&self, n: usize) -> Result<Tensor> {
        if self.rows() != 1 {
            return Err(Error::InvalidArgument {
                op: "repeat_rows",
                reason: format!("expected a single row, got {} rows", self.rows()),
            });
        }
        if n == 0 {
            return Err(Error::InvalidArgument {
                op: "repeat_rows",
                reason: "zero repetitions".into(),
            });
        }
        let c = self.cols();
        let mut out = Vec::with_capacity(n * c);
        for _ in 0..n {
            out.extend_from_slice(self.data());
        }
        let x = self.clone();
        Ok(Tensor::from_op(
            n,
            c,
            out,
            vec![self.clone()],
            Box::new(move |_node, g| {
                if !x.requires_grad() {
                    return Vec::new();
                }
                let mut dx = vec![0.0; c];
                for i in 0..n {
                    for j in 0..c {
                        dx[j] += g[i * c + j];
                    }
                }
                vec![(x.id(), dx)]
            }),
        ))
    }

    /// Circular auto/cross-correlation scores over all delays, computed in
    /// the frequency domain. For `[L, m]` inputs the result is `[L, 1]` with
    ///
    /// `score[d] = (1/L) * sum_ch sum_i q[i, ch] * k[(i - d) mod L, ch]`.
    ///
    /// Both directions of the gradient are themselves circular correlations
    /// and run through the same transform.
    pub fn correlation_scores(&self, k: &Tensor) -> Result<Tensor> {
        if self.shape() != k.shape() {
            return Err(shape_err("correlation_scores", self, k));
        }
        let (l, m) = (self.rows(), self.cols());
        let q_spec = fft::rfft(self.data(), l, m)?;
        let k_spec = fft::rfft(k.data(), l, m)?;
        let cross = fft::conj_product_sum(&q_spec, &k_spec)?;
        let mut scores = fft::irfft(&cross, l)?;
        let inv_l = 1.0 / l as f64;
        for s in scores.iter_mut() {
            *s *= inv_l;
        }
        let (qc, kc) = (self.clone(), k.clone());
        Ok(Tensor::from_op(
            l,
            1,
            scores,
            vec![self.clone(), k.clone()],
            Box::new(move |_node, g| {
                let mut grads: ParentGrads = Vec::new();
                let inv_l = 1.0 / l as f64;
                let g_spec = fft::rfft(g, l, 1).expect("gradient buffer matches score length");
                if qc.requires_grad() {
                    // dq[i, ch] = (1/L) * sum_d g[d] * k[(i - d) mod L, ch]:
                    // a circular convolution, i.e. irfft(ghat * khat).
                    let k_spec = fft::rfft(kc.data(), l, m).expect("parent shape is fixed");
                    let prod = fft::broadcast_product(&g_spec, &k_spec, false)
                        .expect("spectra share length");
                    let mut dq = fft::irfft(&prod, l).expect("length preserved");
                    for v in dq.iter_mut() {
                        *v *= inv_l;
                    }
                    grads.push((qc.id(), dq));
                }
                if kc.requires_grad() {
                    // dk[j, ch] = (1/L) * sum_d g[d] * q[(j + d) mod L, ch]:
                    // correlation against q, i.e. irfft(conj(ghat) * qhat).
                    let q_spec = fft::rfft(qc.data(), l, m).expect("parent shape is fixed");
                    let prod = fft::broadcast_product(&g_spec, &q_spec, true)
                        .expect("spectra share length");
                    let mut dk = fft::irfft(&prod, l).expect("length preserved");
                    for v in dk.iter_mut() {
                        *v *= inv_l;
                    }
                    grads.push((kc.id(), dk));
                }
                grads
            }),
        ))
    }
}
