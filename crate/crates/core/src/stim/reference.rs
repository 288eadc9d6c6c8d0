//! Dense vector LSTM, kept as a documented baseline for the convolutional
//! cell. Input-to-hidden matrices `U`, hidden-to-hidden matrices `W`.

use crate::error::{shape_err, Result};

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err!(
                "{}×{} matrix needs {} values, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            ));
        }
        Ok(Self { rows, cols, data })
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

/// Parameters of one gate: `U x + W h + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct GateParams {
    pub u: Matrix,
    pub w: Matrix,
    pub b: Vec<f64>,
}

impl GateParams {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            u: Matrix::zeros(hidden, inputs),
            w: Matrix::zeros(hidden, hidden),
            b: vec![0.0; hidden],
        }
    }

    fn pre_activation(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let ux = self.u.apply(x);
        let wh = self.w.apply(h);
        ux.iter().zip(&wh).zip(&self.b).map(|((a, b), c)| a + b + c).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceLstm {
    pub forget: GateParams,
    pub input: GateParams,
    pub cell: GateParams,
    pub output: GateParams,
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

impl ReferenceLstm {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        Self {
            forget: GateParams::zeros(inputs, hidden),
            input: GateParams::zeros(inputs, hidden),
            cell: GateParams::zeros(inputs, hidden),
            output: GateParams::zeros(inputs, hidden),
        }
    }

    pub fn inputs(&self) -> usize {
        self.forget.u.cols
    }

    pub fn hidden(&self) -> usize {
        self.forget.u.rows
    }

    /// One step; returns `(h_t, C_t)`.
    pub fn step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let (n, m) = (self.inputs(), self.hidden());
        let gates = [&self.forget, &self.input, &self.cell, &self.output];
        let consistent = gates
            .iter()
            .all(|g| g.u.rows == m && g.u.cols == n && g.w.rows == m && g.w.cols == m && g.b.len() == m);
        if !consistent {
            return Err(shape_err!("gate parameter dimensions are inconsistent"));
        }
        if x.len() != n || h_prev.len() != m || c_prev.len() != m {
            return Err(shape_err!(
                "expected x of {} and state of {}, got {}, {}, {}",
                n,
                m,
                x.len(),
                h_prev.len(),
                c_prev.len()
            ));
        }
        let f: Vec<f64> = self.forget.pre_activation(x, h_prev).into_iter().map(sigmoid).collect();
        let i: Vec<f64> = self.input.pre_activation(x, h_prev).into_iter().map(sigmoid).collect();
        let c_tilde: Vec<f64> = self.cell.pre_activation(x, h_prev).into_iter().map(f64::tanh).collect();
        let c: Vec<f64> = (0..m).map(|k| f[k] * c_prev[k] + i[k] * c_tilde[k]).collect();
        let o: Vec<f64> = self.output.pre_activation(x, h_prev).into_iter().map(sigmoid).collect();
        let h: Vec<f64> = (0..m).map(|k| o[k] * c[k].tanh()).collect();
        Ok((h, c))
    }
}
