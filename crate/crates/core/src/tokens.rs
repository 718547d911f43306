use crate::error::{Error, Result};
use crate::tensor::{Precision, Tensor};

/// Spatio-temporal grid extents of a token field.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridDims {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub dim: usize,
}

impl GridDims {
    pub fn spatial(&self) -> usize {
        self.height * self.width
    }

    /// Tokens per frame, class token included.
    pub fn tokens_per_frame(&self) -> usize {
        self.spatial() + 1
    }

    pub fn total_tokens(&self) -> usize {
        self.frames * self.tokens_per_frame()
    }
}

/// Tokens laid out `frames × (1 + H·W) × dim`; index 0 of every frame is its
/// class token, followed by the spatial tokens in row-major `(h, w)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenField {
    data: Tensor,
    grid: GridDims,
}

impl TokenField {
    pub fn new(data: Tensor, grid: GridDims) -> Result<Self> {
        let want = [grid.frames, grid.tokens_per_frame(), grid.dim];
        if data.shape() != want {
            return Err(Error::dim("TokenField", data.shape(), &want));
        }
        Ok(TokenField { data, grid })
    }

    /// Assemble from a `T×H×W×d` grid and one class token row per frame.
    pub fn from_grid(grid_tokens: &Tensor, class_tokens: &[f64]) -> Result<Self> {
        if grid_tokens.rank() != 4 {
            return Err(Error::dim("TokenField::from_grid", grid_tokens.shape(), &[0, 0, 0, 0]));
        }
        let s = grid_tokens.shape();
        let grid = GridDims { frames: s[0], height: s[1], width: s[2], dim: s[3] };
        if class_tokens.len() != grid.frames * grid.dim {
            return Err(Error::dim("TokenField::from_grid", &[grid.frames, grid.dim], &[class_tokens.len()]));
        }
        let d = grid.dim;
        let per = grid.spatial() * d;
        let mut data = Vec::with_capacity(grid.total_tokens() * d);
        for t in 0..grid.frames {
            data.extend_from_slice(&class_tokens[t * d..(t + 1) * d]);
            data.extend_from_slice(&grid_tokens.data()[t * per..(t + 1) * per]);
        }
        let tensor = Tensor::new(&[grid.frames, grid.tokens_per_frame(), d], data, grid_tokens.precision())?;
        Ok(TokenField { data: tensor, grid })
    }

    pub fn grid(&self) -> GridDims {
        self.grid
    }

    pub fn tensor(&self) -> &Tensor {
        &self.data
    }

    pub fn data(&self) -> &[f64] {
        self.data.data()
    }

    pub fn precision(&self) -> Precision {
        self.data.precision()
    }

    pub fn shape(&self) -> &[usize] {
        self.data.shape()
    }

    /// Same grid, new values (quantized to this field's precision).
    pub(crate) fn with_data(&self, data: Vec<f64>) -> TokenField {
        TokenField { data: self.data.like(self.data.shape(), data), grid: self.grid }
    }

    /// Spatial tokens as a `T×H×W×d` grid, class tokens dropped.
    pub fn spatial_grid(&self) -> Vec<f64> {
        let d = self.grid.dim;
        let per = self.grid.tokens_per_frame() * d;
        let mut out = Vec::with_capacity(self.grid.frames * self.grid.spatial() * d);
        for frame in self.data().chunks(per) {
            out.extend_from_slice(&frame[d..]);
        }
        out
    }

    /// Class token of frame `t`.
    pub fn class_token(&self, t: usize) -> &[f64] {
        let d = self.grid.dim;
        let off = t * self.grid.tokens_per_frame() * d;
        &self.data()[off..off + d]
    }

    /// Tokens of frame `t`, `(1 + H·W) × d`.
    pub fn frame(&self, t: usize) -> &[f64] {
        let per = self.grid.tokens_per_frame() * self.grid.dim;
        &self.data()[t * per..(t + 1) * per]
    }
}

/// Re-interleave a spatial grid with per-frame class token rows.
pub(crate) fn interleave(grid: &GridDims, class_rows: &[f64], spatial: &[f64]) -> Vec<f64> {
    let d = grid.dim;
    let per = grid.spatial() * d;
    let mut out = Vec::with_capacity(grid.total_tokens() * d);
    for t in 0..grid.frames {
        out.extend_from_slice(&class_rows[t * d..(t + 1) * d]);
        out.extend_from_slice(&spatial[t * per..(t + 1) * per]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_round_trip() {
        let g = Tensor::from_fn(&[2, 2, 3, 4], Precision::Double, |i| {
            (i[0] * 100 + i[1] * 10 + i[2]) as f64 + i[3] as f64 * 0.1
        })
        .unwrap();
        let cls: Vec<f64> = (0..8).map(|v| -(v as f64)).collect();
        let f = TokenField::from_grid(&g, &cls).unwrap();
        assert_eq!(f.shape(), &[2, 7, 4]);
        assert_eq!(f.spatial_grid(), g.data());
        assert_eq!(f.class_token(1), &cls[4..8]);
        assert_eq!(interleave(&f.grid(), &cls, &f.spatial_grid()), f.data());
    }
}
