use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{dimension, Result};
use crate::matrix::Matrix;
use crate::telemetry::WindowedDataset;

/// Input/output geometry of a window predictor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    /// Rows per input window.
    pub seq_len: usize,
    /// Rows per output.
    pub horizon: usize,
    /// Columns per row.
    pub features: usize,
}

impl ModelShape {
    pub fn input_len(&self) -> usize {
        self.seq_len * self.features
    }

    pub fn output_len(&self) -> usize {
        self.horizon * self.features
    }

    /// Fails unless windows of `data` match this shape.
    pub fn check(&self, data: &WindowedDataset) -> Result<()> {
        if data.seq_len() != self.seq_len
            || data.target_rows() != self.horizon
            || data.dim() != self.features
        {
            return Err(dimension(format!(
                "model expects {}x{} -> {}x{}, data has {}x{} -> {}x{}",
                self.seq_len,
                self.features,
                self.horizon,
                self.features,
                data.seq_len(),
                data.dim(),
                data.target_rows(),
                data.dim()
            )));
        }
        Ok(())
    }
}

/// Anything mapping an `L×D` window to an `h×D` prediction.
///
/// Windows and outputs are row-major flat slices.
pub trait Predictor {
    fn shape(&self) -> ModelShape;

    /// Writes the prediction for `input` into `out`. Both lengths are
    /// guaranteed by the caller to match [`Predictor::shape`].
    fn predict_into(&self, input: &[f64], out: &mut [f64]);

    fn predict(&self, window: &Matrix) -> Result<Matrix> {
        let shape = self.shape();
        if window.rows() != shape.seq_len || window.cols() != shape.features {
            return Err(dimension(format!(
                "window is {}x{}, model expects {}x{}",
                window.rows(),
                window.cols(),
                shape.seq_len,
                shape.features
            )));
        }
        let mut out = vec![0.0; shape.output_len()];
        self.predict_into(window.as_slice(), &mut out);
        Matrix::from_vec(shape.horizon, shape.features, out)
    }
}

impl<P: Predictor + ?Sized> Predictor for &P {
    fn shape(&self) -> ModelShape {
        (**self).shape()
    }

    fn predict_into(&self, input: &[f64], out: &mut [f64]) {
        (**self).predict_into(input, out)
    }
}

/// Repeats the last observed row for every output row.
#[derive(Debug, Clone, Copy)]
pub struct Persistence {
    pub shape: ModelShape,
}

impl Predictor for Persistence {
    fn shape(&self) -> ModelShape {
        self.shape
    }

    fn predict_into(&self, input: &[f64], out: &mut [f64]) {
        let d = self.shape.features;
        let last = &input[input.len() - d..];
        for row in out.chunks_exact_mut(d) {
            row.copy_from_slice(last);
        }
    }
}

/// Echoes its input; a perfect reconstruction model.
#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub seq_len: usize,
    pub features: usize,
}

impl Predictor for Identity {
    fn shape(&self) -> ModelShape {
        ModelShape {
            seq_len: self.seq_len,
            horizon: self.seq_len,
            features: self.features,
        }
    }

    fn predict_into(&self, input: &[f64], out: &mut [f64]) {
        out.copy_from_slice(input);
    }
}

/// Runs the predictor over every window of `data`.
pub fn predict_all<P: Predictor + ?Sized>(predictor: &P, data: &WindowedDataset) -> Result<Vec<Vec<f64>>> {
    let shape = predictor.shape();
    shape.check(data)?;
    Ok((0..data.len())
        .map(|i| {
            let mut out = vec![0.0; shape.output_len()];
            predictor.predict_into(data.input(i), &mut out);
            out
        })
        .collect())
}
