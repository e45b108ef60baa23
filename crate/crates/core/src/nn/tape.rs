//! The differentiation tape: forward ops append entries, `backward` walks
//! them in reverse and accumulates parameter gradients by name.

use indexmap::IndexMap;

use super::tensor::{matmul, matmul_a_bt_into, matmul_at_b_into, Tensor};
use super::NnError;

/// Gradients keyed by parameter name, in first-use order.
pub type GradMap = IndexMap<String, Tensor>;

/// Handle to one tape entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Leaf {
        param: Option<String>,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    Relu {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    Sub {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        c: f64,
    },
    ConcatCols {
        xs: Vec<Var>,
    },
    RowwiseMax {
        xs: Vec<Var>,
        /// Winning operand per output element; ties go to the first.
        winner: Vec<u32>,
    },
    GatherRows {
        x: Var,
        rows: Vec<usize>,
    },
    SegmentMax {
        x: Var,
        /// Winning input row per (segment, column).
        winner: Vec<u32>,
    },
    SoftmaxCrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        /// Per-row weight over the weight total, precomputed at forward.
        row_weight: Vec<f64>,
        probs: Tensor,
    },
}

struct Entry {
    value: Tensor,
    op: Op,
}

/// A single-use forward tape.
#[derive(Default)]
pub struct Tape {
    entries: Vec<Entry>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The forward value of a variable.
    pub fn value(&self, v: Var) -> &Tensor {
        &self.entries[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.entries.push(Entry { value, op });
        Var(self.entries.len() - 1)
    }

    /// A constant input; no gradient flows into it.
    pub fn input(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf { param: None })
    }

    /// A named parameter leaf; its gradient lands in the [`GradMap`].
    pub fn param(&mut self, name: &str, value: &Tensor) -> Var {
        self.push(
            value.clone(),
            Op::Leaf {
                param: Some(name.to_string()),
            },
        )
    }

    /// `x [n,i] * w [i,o] + b [o]`, bias broadcast over rows.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, NnError> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.cols() != wv.rows() || bv.shape() != [wv.cols()] {
            return Err(NnError::ShapeMismatch(format!(
                "linear: x {:?}, w {:?}, b {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let mut y = matmul(xv, wv);
        let o = y.cols();
        for r in 0..y.rows() {
            let row = &mut y.data_mut()[r * o..(r + 1) * o];
            for (val, &bias) in row.iter_mut().zip(bv.data()) {
                *val += bias;
            }
        }
        Ok(self.push(y, Op::Linear { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|&v| v.max(0.0)).collect(),
        );
        self.push(y, Op::Relu { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NnError::ShapeMismatch(format!(
                "add: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let y = Tensor::new(
            self.value(a).shape().to_vec(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x + y)
                .collect(),
        );
        Ok(self.push(y, Op::Add { a, b }))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(NnError::ShapeMismatch(format!(
                "sub: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let y = Tensor::new(
            self.value(a).shape().to_vec(),
            self.value(a)
                .data()
                .iter()
                .zip(self.value(b).data())
                .map(|(x, y)| x - y)
                .collect(),
        );
        Ok(self.push(y, Op::Sub { a, b }))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let y = Tensor::new(
            self.value(x).shape().to_vec(),
            self.value(x).data().iter().map(|&v| v * c).collect(),
        );
        self.push(y, Op::Scale { x, c })
    }

    /// Concatenates rank-2 tensors with equal row counts along columns.
    pub fn concat_cols(&mut self, xs: &[Var]) -> Result<Var, NnError> {
        if xs.is_empty() {
            return Err(NnError::ShapeMismatch("concat_cols of nothing".into()));
        }
        let n = self.value(xs[0]).rows();
        for &x in xs {
            if self.value(x).rows() != n {
                return Err(NnError::ShapeMismatch(format!(
                    "concat_cols: {} rows vs {} rows",
                    self.value(x).rows(),
                    n
                )));
            }
        }
        let total: usize = xs.iter().map(|&x| self.value(x).cols()).sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &x in xs {
                data.extend_from_slice(self.value(x).row(r));
            }
        }
        Ok(self.push(Tensor::matrix(n, total, data), Op::ConcatCols { xs: xs.to_vec() }))
    }

    /// Elementwise maximum across same-shape tensors; on ties the gradient
    /// routes to the first operand that attains the maximum.
    pub fn rowwise_max(&mut self, xs: &[Var]) -> Result<Var, NnError> {
        if xs.is_empty() {
            return Err(NnError::ShapeMismatch("rowwise_max of nothing".into()));
        }
        let shape = self.value(xs[0]).shape().to_vec();
        for &x in xs {
            if self.value(x).shape() != shape {
                return Err(NnError::ShapeMismatch(format!(
                    "rowwise_max: {:?} vs {:?}",
                    self.value(x).shape(),
                    shape
                )));
            }
        }
        let numel = self.value(xs[0]).numel();
        let mut data = self.value(xs[0]).data().to_vec();
        let mut winner = vec![0u32; numel];
        for (which, &x) in xs.iter().enumerate().skip(1) {
            for (e, &v) in self.value(x).data().iter().enumerate() {
                if v > data[e] {
                    data[e] = v;
                    winner[e] = which as u32;
                }
            }
        }
        Ok(self.push(
            Tensor::new(shape, data),
            Op::RowwiseMax {
                xs: xs.to_vec(),
                winner,
            },
        ))
    }

    /// Row gather: output row `r` is input row `rows[r]`.
    pub fn gather_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, NnError> {
        let xv = self.value(x);
        let w = xv.cols();
        for &r in rows {
            if r >= xv.rows() {
                return Err(NnError::ShapeMismatch(format!(
                    "gather_rows: row {r} of {}",
                    xv.rows()
                )));
            }
        }
        let mut data = Vec::with_capacity(rows.len() * w);
        for &r in rows {
            data.extend_from_slice(xv.row(r));
        }
        Ok(self.push(
            Tensor::matrix(rows.len(), w, data),
            Op::GatherRows {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    /// Per-segment column maximum. `segments[r]` assigns input row `r` to an
    /// output row; every segment must receive at least one input row. Ties
    /// route the gradient to the earliest contributing row.
    pub fn segment_max(
        &mut self,
        x: Var,
        segments: &[usize],
        n_segments: usize,
    ) -> Result<Var, NnError> {
        let xv = self.value(x);
        if segments.len() != xv.rows() {
            return Err(NnError::ShapeMismatch(format!(
                "segment_max: {} assignments for {} rows",
                segments.len(),
                xv.rows()
            )));
        }
        let w = xv.cols();
        let mut data = vec![f64::NEG_INFINITY; n_segments * w];
        let mut winner = vec![u32::MAX; n_segments * w];
        for (r, &seg) in segments.iter().enumerate() {
            if seg >= n_segments {
                return Err(NnError::ShapeMismatch(format!(
                    "segment_max: segment {seg} of {n_segments}"
                )));
            }
            let row = xv.row(r);
            let out = seg * w;
            for (c, &v) in row.iter().enumerate() {
                if v > data[out + c] {
                    data[out + c] = v;
                    winner[out + c] = r as u32;
                }
            }
        }
        if let Some(missing) = winner.chunks(w.max(1)).position(|chunk| {
            chunk.iter().any(|&r| r == u32::MAX)
        }) {
            return Err(NnError::EmptySegment(missing));
        }
        Ok(self.push(
            Tensor::matrix(n_segments, w, data),
            Op::SegmentMax { x, winner },
        ))
    }

    /// Mean softmax cross-entropy over rows, optionally weighted by class;
    /// with weights the mean is normalized by the weight total.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        class_weights: Option<&[f64]>,
    ) -> Result<Var, NnError> {
        let z = self.value(logits);
        let (n, c) = (z.rows(), z.cols());
        if targets.len() != n {
            return Err(NnError::ShapeMismatch(format!(
                "cross entropy: {} targets for {} rows",
                targets.len(),
                n
            )));
        }
        if n == 0 {
            return Err(NnError::ShapeMismatch("cross entropy of no rows".into()));
        }
        if let Some(w) = class_weights {
            if w.len() != c {
                return Err(NnError::ShapeMismatch(format!(
                    "cross entropy: {} class weights for {c} classes",
                    w.len()
                )));
            }
        }
        for (row, &t) in targets.iter().enumerate() {
            if t >= c {
                return Err(NnError::InvalidTarget {
                    row,
                    target: t,
                    n_classes: c,
                });
            }
        }
        let mut probs = Tensor::zeros(&[n, c]);
        let mut weight_total = 0.0;
        let mut raw_w = vec![0.0; n];
        let mut loss = 0.0;
        for r in 0..n {
            let row = z.row(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for &v in row {
                denom += (v - m).exp();
            }
            let log_denom = denom.ln();
            let prow = &mut probs.data_mut()[r * c..(r + 1) * c];
            for (p, &v) in prow.iter_mut().zip(row) {
                *p = (v - m).exp() / denom;
            }
            let w = class_weights.map_or(1.0, |cw| cw[targets[r]]);
            raw_w[r] = w;
            weight_total += w;
            loss += w * (log_denom - (row[targets[r]] - m));
        }
        if weight_total <= 0.0 {
            return Err(NnError::ShapeMismatch(
                "cross entropy: class weights sum to zero over the batch".into(),
            ));
        }
        loss /= weight_total;
        let row_weight: Vec<f64> = raw_w.iter().map(|&w| w / weight_total).collect();
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                row_weight,
                probs,
            },
        ))
    }

    /// Reverse pass from a scalar loss. Returns parameter gradients by
    /// name; parameters the loss never touched are absent.
    pub fn backward(&self, loss: Var) -> Result<GradMap, NnError> {
        if self.value(loss).numel() != 1 {
            return Err(NnError::ShapeMismatch(format!(
                "backward from non-scalar {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.entries.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(
            self.value(loss).shape().to_vec(),
            vec![1.0],
        ));

        for idx in (0..self.entries.len()).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let entry = &self.entries[idx];
            match &entry.op {
                Op::Leaf { .. } => {
                    grads[idx] = Some(g);
                }
                Op::Linear { x, w, b } => {
                    {
                        let slot = Self::slot(&mut grads, *x, self.value(*x).shape());
                        matmul_a_bt_into(&g, self.value(*w), slot);
                    }
                    {
                        let slot = Self::slot(&mut grads, *w, self.value(*w).shape());
                        matmul_at_b_into(self.value(*x), &g, slot);
                    }
                    let slot = Self::slot(&mut grads, *b, self.value(*b).shape());
                    for r in 0..g.rows() {
                        for (acc, &gv) in slot.data_mut().iter_mut().zip(g.row(r)) {
                            *acc += gv;
                        }
                    }
                }
                Op::Relu { x } => {
                    let xv = self.value(*x);
                    let slot = Self::slot(&mut grads, *x, xv.shape());
                    for ((acc, &gv), &v) in
                        slot.data_mut().iter_mut().zip(g.data()).zip(xv.data())
                    {
                        if v > 0.0 {
                            *acc += gv;
                        }
                    }
                }
                Op::Add { a, b } => {
                    for &p in [a, b] {
                        let slot = Self::slot(&mut grads, p, self.value(p).shape());
                        for (acc, &gv) in slot.data_mut().iter_mut().zip(g.data()) {
                            *acc += gv;
                        }
                    }
                }
                Op::Sub { a, b } => {
                    {
                        let slot = Self::slot(&mut grads, *a, self.value(*a).shape());
                        for (acc, &gv) in slot.data_mut().iter_mut().zip(g.data()) {
                            *acc += gv;
                        }
                    }
                    let slot = Self::slot(&mut grads, *b, self.value(*b).shape());
                    for (acc, &gv) in slot.data_mut().iter_mut().zip(g.data()) {
                        *acc -= gv;
                    }
                }
                Op::Scale { x, c } => {
                    let slot = Self::slot(&mut grads, *x, self.value(*x).shape());
                    for (acc, &gv) in slot.data_mut().iter_mut().zip(g.data()) {
                        *acc += c * gv;
                    }
                }
                Op::ConcatCols { xs } => {
                    let n = g.rows();
                    let mut offset = 0;
                    for &x in xs {
                        let w = self.value(x).cols();
                        let slot = Self::slot(&mut grads, x, self.value(x).shape());
                        for r in 0..n {
                            let src = &g.row(r)[offset..offset + w];
                            let dst = &mut slot.data_mut()[r * w..(r + 1) * w];
                            for (acc, &gv) in dst.iter_mut().zip(src) {
                                *acc += gv;
                            }
                        }
                        offset += w;
                    }
                }
                Op::RowwiseMax { xs, winner } => {
                    for (which, &x) in xs.iter().enumerate() {
                        let slot = Self::slot(&mut grads, x, self.value(x).shape());
                        for (e, (&win, &gv)) in winner.iter().zip(g.data()).enumerate() {
                            if win as usize == which {
                                slot.data_mut()[e] += gv;
                            }
                        }
                    }
                }
                Op::GatherRows { x, rows } => {
                    let w = g.cols();
                    let slot = Self::slot(&mut grads, *x, self.value(*x).shape());
                    for (out_r, &src_r) in rows.iter().enumerate() {
                        let dst = &mut slot.data_mut()[src_r * w..(src_r + 1) * w];
                        for (acc, &gv) in dst.iter_mut().zip(g.row(out_r)) {
                            *acc += gv;
                        }
                    }
                }
                Op::SegmentMax { x, winner } => {
                    let w = g.cols();
                    let slot = Self::slot(&mut grads, *x, self.value(*x).shape());
                    for (e, (&win, &gv)) in winner.iter().zip(g.data()).enumerate() {
                        let c = e % w;
                        slot.data_mut()[win as usize * w + c] += gv;
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    targets,
                    row_weight,
                    probs,
                } => {
                    let upstream = g.item();
                    let c = probs.cols();
                    let slot = Self::slot(&mut grads, *logits, probs.shape());
                    for (r, (&t, &w)) in targets.iter().zip(row_weight).enumerate() {
                        let prow = probs.row(r);
                        let dst = &mut slot.data_mut()[r * c..(r + 1) * c];
                        for (k, (acc, &p)) in dst.iter_mut().zip(prow).enumerate() {
                            let indicator = if k == t { 1.0 } else { 0.0 };
                            *acc += upstream * w * (p - indicator);
                        }
                    }
                }
            }
        }

        let mut out = GradMap::new();
        for (idx, entry) in self.entries.iter().enumerate() {
            if let Op::Leaf { param: Some(name) } = &entry.op {
                if let Some(g) = grads[idx].take() {
                    match out.entry(name.clone()) {
                        indexmap::map::Entry::Occupied(mut e) => {
                            let acc = e.get_mut();
                            for (a, &b) in acc.data_mut().iter_mut().zip(g.data()) {
                                *a += b;
                            }
                        }
                        indexmap::map::Entry::Vacant(e) => {
                            e.insert(g);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn slot<'g>(grads: &'g mut [Option<Tensor>], v: Var, shape: &[usize]) -> &'g mut Tensor {
        grads[v.0].get_or_insert_with(|| Tensor::zeros(shape))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn uniform_binary_logits_lose_ln_two() {
        let mut tape = Tape::new();
        let z = tape.input(Tensor::matrix(1, 2, vec![0.0, 0.0]));
        let loss = tape.softmax_cross_entropy(z, &[0], None).unwrap();
        assert_abs_diff_eq!(tape.value(loss).item(), 2f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn cross_entropy_grad_rows_sum_to_zero() {
        let mut tape = Tape::new();
        let w = Tensor::matrix(2, 3, vec![0.3, -0.2, 0.5, 0.1, 0.9, -0.4]);
        let wv = tape.param("w", &w);
        let x = tape.input(Tensor::matrix(2, 2, vec![1.0, 0.5, -0.7, 0.2]));
        let b = tape.param("b", &Tensor::vector(vec![0.0, 0.1, -0.1]));
        let z = tape.linear(x, wv, b).unwrap();
        let loss = tape.softmax_cross_entropy(z, &[2, 0], None).unwrap();
        let grads = tape.backward(loss).unwrap();
        // d loss / d b sums softmax-minus-onehot over rows; each row sums to
        // zero, so the bias gradient does too.
        let gb = &grads["b"];
        assert_abs_diff_eq!(gb.data().iter().sum::<f64>(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn invalid_target_is_rejected() {
        let mut tape = Tape::new();
        let z = tape.input(Tensor::matrix(1, 2, vec![0.0, 0.0]));
        let err = tape.softmax_cross_entropy(z, &[5], None).unwrap_err();
        assert_eq!(
            err,
            NnError::InvalidTarget {
                row: 0,
                target: 5,
                n_classes: 2
            }
        );
    }

    #[test]
    fn rowwise_max_ties_route_to_first_operand() {
        let mut tape = Tape::new();
        let a = tape.param("a", &Tensor::matrix(1, 2, vec![1.0, 5.0]));
        let b = tape.param("b", &Tensor::matrix(1, 2, vec![1.0, 7.0]));
        let m = tape.rowwise_max(&[a, b]).unwrap();
        assert_eq!(tape.value(m).data(), &[1.0, 7.0]);
        let s = tape.segment_sum_for_test(m);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads["a"].data(), &[1.0, 0.0]);
        assert_eq!(grads["b"].data(), &[0.0, 1.0]);
    }

    #[test]
    fn gather_rows_accumulates_on_scatter() {
        let mut tape = Tape::new();
        let x = tape.param("x", &Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]));
        let g = tape.gather_rows(x, &[0, 0, 1]).unwrap();
        assert_eq!(tape.value(g).rows(), 3);
        let s = tape.segment_sum_for_test(g);
        let grads = tape.backward(s).unwrap();
        // Row 0 was gathered twice.
        assert_eq!(grads["x"].data(), &[2.0, 2.0, 1.0, 1.0]);
    }

    #[test]
    fn segment_max_requires_full_coverage() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::matrix(2, 1, vec![1.0, 2.0]));
        let err = tape.segment_max(x, &[0, 0], 2).unwrap_err();
        assert_eq!(err, NnError::EmptySegment(1));
    }

    #[test]
    fn segment_max_picks_per_column_winners() {
        let mut tape = Tape::new();
        let x = tape.param(
            "x",
            &Tensor::matrix(3, 2, vec![1.0, 9.0, 5.0, 2.0, 7.0, 7.0]),
        );
        let m = tape.segment_max(x, &[0, 0, 1], 2).unwrap();
        assert_eq!(tape.value(m).data(), &[5.0, 9.0, 7.0, 7.0]);
        let s = tape.segment_sum_for_test(m);
        let grads = tape.backward(s).unwrap();
        assert_eq!(grads["x"].data(), &[0.0, 1.0, 1.0, 0.0, 1.0, 1.0]);
    }

    impl Tape {
        /// Test-only scalar reduction: sums all elements via cross entropy
        /// free. Implemented with linear against a ones weight.
        fn segment_sum_for_test(&mut self, x: Var) -> Var {
            let cols = self.value(x).cols();
            let rows = self.value(x).rows();
            let w = self.input(Tensor::matrix(cols, 1, vec![1.0; cols]));
            let b = self.input(Tensor::vector(vec![0.0]));
            let col = self.linear(x, w, b).unwrap();
            let ones = self.input(Tensor::matrix(1, rows, vec![1.0; rows]));
            let zb = self.input(Tensor::vector(vec![0.0]));
            self.linear(ones, col, zb).unwrap()
        }
    }
}
