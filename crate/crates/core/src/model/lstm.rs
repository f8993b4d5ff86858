//! Single LSTM layer: cell step, sequence unroll and backpropagation
//! through time.
//!
//! Packed gate layout (rows of `w`, `u` and entries of `b`), each block `H`
//! wide: input `i`, forget `f`, cell candidate `g`, output `o`.
//!
//! ```text
//! i = σ(W_i x + U_i h + b_i)      f = σ(W_f x + U_f h + b_f)
//! g = tanh(W_g x + U_g h + b_g)   o = σ(W_o x + U_o h + b_o)
//! c' = f ⊙ c + i ⊙ g              h' = o ⊙ tanh(c')
//! ```

use crate::error::{Error, Result};
use crate::linalg::{sigmoid, sigmoid_deriv, tanh_deriv, xavier_init, Matrix, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayer {
    /// Input weights, `4H × D`.
    pub w: Matrix,
    /// Recurrent weights, `4H × H`.
    pub u: Matrix,
    /// Biases, length `4H`.
    pub b: Vec<f64>,
}

impl LstmLayer {
    /// Xavier weights, zero biases except the forget block set to 1.
    pub fn init(rng: &mut Rng, input_dim: usize, hidden: usize) -> Self {
        let w = xavier_init(rng, input_dim, 4 * hidden);
        let u = xavier_init(rng, hidden, 4 * hidden);
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].iter_mut().for_each(|v| *v = 1.0);
        Self { w, u, b }
    }

    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w: Matrix::zeros(4 * hidden, input_dim),
            u: Matrix::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }
}

/// Activated gate values and the cell nonlinearity for one step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCache {
    /// `[i | f | g | o]`, post-activation.
    pub gates: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    layer: &LstmLayer,
) -> Result<(Vec<f64>, Vec<f64>, CellCache)> {
    let hd = layer.hidden();
    if x.len() != layer.input_dim() {
        return Err(Error::shape("lstm_cell_forward x", x.len(), layer.input_dim()));
    }
    if h_prev.len() != hd || c_prev.len() != hd {
        return Err(Error::shape(
            "lstm_cell_forward state",
            format!("h {} / c {}", h_prev.len(), c_prev.len()),
            hd,
        ));
    }
    let mut gates = layer.b.clone();
    layer.w.matvec_add_into(x, &mut gates);
    layer.u.matvec_add_into(h_prev, &mut gates);
    let mut c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    let mut tanh_c = vec![0.0; hd];
    activate(&mut gates, c_prev, &mut c, &mut h, &mut tanh_c);
    Ok((
        h,
        c,
        CellCache {
            gates,
            c_prev: c_prev.to_vec(),
            tanh_c,
        },
    ))
}

#[inline]
fn activate(gates: &mut [f64], c_prev: &[f64], c: &mut [f64], h: &mut [f64], tanh_c: &mut [f64]) {
    let hd = c.len();
    let (ifg, o) = gates.split_at_mut(3 * hd);
    let (i, fg) = ifg.split_at_mut(hd);
    let (f, g) = fg.split_at_mut(hd);
    for k in 0..hd {
        i[k] = sigmoid(i[k]);
        f[k] = sigmoid(f[k]);
        g[k] = g[k].tanh();
        o[k] = sigmoid(o[k]);
        c[k] = f[k] * c_prev[k] + i[k] * g[k];
        tanh_c[k] = c[k].tanh();
        h[k] = o[k] * tanh_c[k];
    }
}

/// Everything BPTT needs from one layer's unrolled forward pass.
///
/// `h` and `c` have `T + 1` rows; row 0 is the zero initial state and row
/// `t + 1` is the state after step `t`.
#[derive(Debug, Clone)]
pub struct LayerTrace {
    pub gates: Matrix,
    pub h: Matrix,
    pub c: Matrix,
    pub tanh_c: Matrix,
}

impl LayerTrace {
    pub fn steps(&self) -> usize {
        self.gates.rows()
    }

    /// Hidden-state sequence `h_1 .. h_T` as a `T × H` matrix.
    pub fn outputs(&self) -> Matrix {
        let hd = self.h.cols();
        Matrix::from_vec(self.steps(), hd, self.h.data()[hd..].to_vec()).unwrap()
    }

    pub fn final_hidden(&self) -> &[f64] {
        self.h.row(self.steps())
    }
}

/// Runs the first `steps` rows of `inputs` through the layer from a zero
/// state.
pub(crate) fn layer_forward(layer: &LstmLayer, inputs: &Matrix, steps: usize) -> LayerTrace {
    let hd = layer.hidden();
    let mut gates = Matrix::zeros(steps, 4 * hd);
    let mut h = Matrix::zeros(steps + 1, hd);
    let mut c = Matrix::zeros(steps + 1, hd);
    let mut tanh_c = Matrix::zeros(steps, hd);
    let mut h_next = vec![0.0; hd];
    let mut c_next = vec![0.0; hd];
    for t in 0..steps {
        let g = gates.row_mut(t);
        g.copy_from_slice(&layer.b);
        layer.w.matvec_add_into(inputs.row(t), g);
        layer.u.matvec_add_into(h.row(t), g);
        activate(g, c.row(t), &mut c_next, &mut h_next, tanh_c.row_mut(t));
        h.row_mut(t + 1).copy_from_slice(&h_next);
        c.row_mut(t + 1).copy_from_slice(&c_next);
    }
    LayerTrace {
        gates,
        h,
        c,
        tanh_c,
    }
}

/// BPTT through one layer.
///
/// `dh_out` holds the loss gradient arriving at each step's hidden output
/// from outside the recurrence (`T × H`). Parameter gradients are
/// accumulated into `grad`. When `want_dx` is set the gradient w.r.t. the
/// layer inputs is returned (`T × D`).
pub(crate) fn layer_backward(
    layer: &LstmLayer,
    inputs: &Matrix,
    trace: &LayerTrace,
    dh_out: &Matrix,
    grad: &mut LstmLayer,
    want_dx: bool,
) -> Option<Matrix> {
    let hd = layer.hidden();
    let steps = trace.steps();
    let mut dx = want_dx.then(|| Matrix::zeros(steps, layer.input_dim()));
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let mut da = vec![0.0; 4 * hd];

    for t in (0..steps).rev() {
        let gates = trace.gates.row(t);
        let (i, rest) = gates.split_at(hd);
        let (f, rest) = rest.split_at(hd);
        let (g, o) = rest.split_at(hd);
        let tc = trace.tanh_c.row(t);
        let c_prev = trace.c.row(t);
        let up = dh_out.row(t);

        for k in 0..hd {
            let dh = dh_next[k] + up[k];
            let d_o = dh * tc[k];
            let dc = dc_next[k] + dh * o[k] * tanh_deriv(tc[k]);
            let di = dc * g[k];
            let dg = dc * i[k];
            let df = dc * c_prev[k];
            dc_next[k] = dc * f[k];
            da[k] = di * sigmoid_deriv(i[k]);
            da[hd + k] = df * sigmoid_deriv(f[k]);
            da[2 * hd + k] = dg * tanh_deriv(g[k]);
            da[3 * hd + k] = d_o * sigmoid_deriv(o[k]);
        }

        grad.w.add_outer(&da, inputs.row(t));
        grad.u.add_outer(&da, trace.h.row(t));
        for (gb, d) in grad.b.iter_mut().zip(&da) {
            *gb += d;
        }

        dh_next.iter_mut().for_each(|v| *v = 0.0);
        layer.u.matvec_t_add_into(&da, &mut dh_next);
        if let Some(dx) = dx.as_mut() {
            layer.w.matvec_t_add_into(&da, dx.row_mut(t));
        }
    }
    dx
}
