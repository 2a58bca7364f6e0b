//! Dimension-generic convolution, nearest upsampling and FiLM, each with
//! a hand-written backward pass. Feature maps are channel-major:
//! `data[c * n_positions + p]`.

use matrixmultiply::dgemm;

use crate::data::increment;
use crate::error::{Error, Result};

const OUTSIDE: u32 = u32::MAX;
const IM2COL_MAX_ELEMS: usize = 1 << 18;

/// Gather table for a "same"-padded convolution with odd kernel size.
#[derive(Clone, Debug)]
pub(crate) struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub in_n: usize,
    pub out_n: usize,
    pub taps: usize,
    /// `[tap][out position]` → flat input index, or `OUTSIDE` for zero padding.
    table: Vec<u32>,
    /// Small layers run as one GEMM over the unrolled input; large ones
    /// tap by tap so the working set stays cache-sized.
    pub unroll: bool,
}

impl ConvGeom {
    pub fn new(in_shape: &[usize], stride: usize, kernel: usize, cin: usize, cout: usize) -> Self {
        let dim = in_shape.len();
        let out_shape: Vec<usize> = in_shape.iter().map(|&n| n / stride).collect();
        let in_n: usize = in_shape.iter().product();
        let out_n: usize = out_shape.iter().product();
        let taps = kernel.pow(dim as u32);
        let pad = (kernel / 2) as isize;
        let mut table = vec![OUTSIDE; taps * out_n];
        let kshape = vec![kernel; dim];
        let mut tap_idx = vec![0usize; dim];
        for tap in 0..taps {
            let mut out_idx = vec![0usize; dim];
            for p in 0..out_n {
                let mut flat = 0usize;
                let mut inside = true;
                for d in 0..dim {
                    let i = (out_idx[d] * stride) as isize + tap_idx[d] as isize - pad;
                    if i < 0 || i >= in_shape[d] as isize {
                        inside = false;
                        break;
                    }
                    flat = flat * in_shape[d] + i as usize;
                }
                if inside {
                    table[tap * out_n + p] = flat as u32;
                }
                increment(&mut out_idx, &out_shape);
            }
            increment(&mut tap_idx, &kshape);
        }
        ConvGeom {
            cin,
            cout,
            in_n,
            out_n,
            taps,
            table,
            unroll: cin * taps * out_n <= IM2COL_MAX_ELEMS,
        }
    }

    /// Input rows shifted for one kernel tap: `[cin, out_n]`, zero outside.
    fn gather_tap(&self, input: &[f64], tap: usize, buf: &mut [f64]) {
        let idx = &self.table[tap * self.out_n..][..self.out_n];
        for c in 0..self.cin {
            let x = &input[c * self.in_n..(c + 1) * self.in_n];
            let row = &mut buf[c * self.out_n..][..self.out_n];
            for (dst, &i) in row.iter_mut().zip(idx) {
                *dst = if i == OUTSIDE { 0.0 } else { x[i as usize] };
            }
        }
    }

    /// Unrolls `input` into a `[cin·taps, out_n]` matrix.
    fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let mut cols = vec![0.0; self.cin * self.taps * self.out_n];
        for c in 0..self.cin {
            let x = &input[c * self.in_n..(c + 1) * self.in_n];
            for tap in 0..self.taps {
                let row = &mut cols[(c * self.taps + tap) * self.out_n..][..self.out_n];
                let idx = &self.table[tap * self.out_n..][..self.out_n];
                for (dst, &i) in row.iter_mut().zip(idx) {
                    if i != OUTSIDE {
                        *dst = x[i as usize];
                    }
                }
            }
        }
        cols
    }

    /// `out = Σ_tap W[:, :, tap] · shift_tap(input) + b`, shape `[cout, out_n]`.
    /// Weights are laid out `[cout, cin, taps]`.
    pub fn forward(&self, weight: &[f64], bias: &[f64], input: &[f64]) -> Vec<f64> {
        let n = self.out_n;
        let wrow = (self.cin * self.taps) as isize;
        let mut out = vec![0.0; self.cout * n];
        for (o, row) in out.chunks_exact_mut(n).enumerate() {
            row.fill(bias[o]);
        }
        if self.unroll {
            let cols = self.im2col(input);
            unsafe {
                dgemm(
                    self.cout, wrow as usize, n, 1.0,
                    weight.as_ptr(), wrow, 1,
                    cols.as_ptr(), n as isize, 1,
                    1.0,
                    out.as_mut_ptr(), n as isize, 1,
                );
            }
            return out;
        }
        let mut shifted = vec![0.0; self.cin * n];
        for tap in 0..self.taps {
            self.gather_tap(input, tap, &mut shifted);
            unsafe {
                dgemm(
                    self.cout, self.cin, n, 1.0,
                    weight.as_ptr().add(tap), wrow, self.taps as isize,
                    shifted.as_ptr(), n as isize, 1,
                    1.0,
                    out.as_mut_ptr(), n as isize, 1,
                );
            }
        }
        out
    }

    /// Accumulates weight and bias gradients; returns the input gradient if asked.
    pub fn backward(
        &self,
        weight: &[f64],
        input: &[f64],
        d_out: &[f64],
        d_weight: &mut [f64],
        d_bias: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let n = self.out_n;
        let wrow = (self.cin * self.taps) as isize;
        for (o, row) in d_out.chunks_exact(n).enumerate() {
            d_bias[o] += row.iter().sum::<f64>();
        }
        if self.unroll {
            return self.backward_unrolled(weight, input, d_out, d_weight, want_input_grad);
        }
        let mut shifted = vec![0.0; self.cin * n];
        let mut d_in = want_input_grad.then(|| vec![0.0; self.cin * self.in_n]);
        for tap in 0..self.taps {
            self.gather_tap(input, tap, &mut shifted);
            unsafe {
                // dW[:, :, tap] += dOut · shiftedᵀ
                dgemm(
                    self.cout, n, self.cin, 1.0,
                    d_out.as_ptr(), n as isize, 1,
                    shifted.as_ptr(), 1, n as isize,
                    1.0,
                    d_weight.as_mut_ptr().add(tap), wrow, self.taps as isize,
                );
            }
            let Some(d_in) = d_in.as_mut() else { continue };
            unsafe {
                // dShifted = W[:, :, tap]ᵀ · dOut, reusing the gather buffer
                dgemm(
                    self.cin, self.cout, n, 1.0,
                    weight.as_ptr().add(tap), self.taps as isize, wrow,
                    d_out.as_ptr(), n as isize, 1,
                    0.0,
                    shifted.as_mut_ptr(), n as isize, 1,
                );
            }
            let idx = &self.table[tap * n..][..n];
            for c in 0..self.cin {
                let dx = &mut d_in[c * self.in_n..(c + 1) * self.in_n];
                for (&g, &i) in shifted[c * n..][..n].iter().zip(idx) {
                    if i != OUTSIDE {
                        dx[i as usize] += g;
                    }
                }
            }
        }
        d_in
    }

    fn backward_unrolled(
        &self,
        weight: &[f64],
        input: &[f64],
        d_out: &[f64],
        d_weight: &mut [f64],
        want_input_grad: bool,
    ) -> Option<Vec<f64>> {
        let k = self.cin * self.taps;
        let n = self.out_n;
        let cols = self.im2col(input);
        unsafe {
            // dW += dOut · colsᵀ
            dgemm(
                self.cout, n, k, 1.0,
                d_out.as_ptr(), n as isize, 1,
                cols.as_ptr(), 1, n as isize,
                1.0,
                d_weight.as_mut_ptr(), k as isize, 1,
            );
        }
        if !want_input_grad {
            return None;
        }
        let mut d_cols = cols;
        unsafe {
            // dCols = Wᵀ · dOut
            dgemm(
                k, self.cout, n, 1.0,
                weight.as_ptr(), 1, k as isize,
                d_out.as_ptr(), n as isize, 1,
                0.0,
                d_cols.as_mut_ptr(), n as isize, 1,
            );
        }
        let mut d_in = vec![0.0; self.cin * self.in_n];
        for c in 0..self.cin {
            let dx = &mut d_in[c * self.in_n..(c + 1) * self.in_n];
            for tap in 0..self.taps {
                let row = &d_cols[(c * self.taps + tap) * n..][..n];
                let idx = &self.table[tap * n..][..n];
                for (&g, &i) in row.iter().zip(idx) {
                    if i != OUTSIDE {
                        dx[i as usize] += g;
                    }
                }
            }
        }
        Some(d_in)
    }
}

/// Nearest-neighbour ×2 upsampling along every axis.
#[derive(Clone, Debug)]
pub(crate) struct Upsample {
    pub coarse_n: usize,
    /// Fine position → coarse parent.
    parent: Vec<u32>,
}

impl Upsample {
    pub fn new(coarse_shape: &[usize]) -> Self {
        let dim = coarse_shape.len();
        let fine_shape: Vec<usize> = coarse_shape.iter().map(|n| n * 2).collect();
        let fine_n: usize = fine_shape.iter().product();
        let mut parent = Vec::with_capacity(fine_n);
        let mut idx = vec![0usize; dim];
        for _ in 0..fine_n {
            let mut flat = 0;
            for d in 0..dim {
                flat = flat * coarse_shape[d] + idx[d] / 2;
            }
            parent.push(flat as u32);
            increment(&mut idx, &fine_shape);
        }
        Upsample {
            coarse_n: coarse_shape.iter().product(),
            parent,
        }
    }

    pub fn fine_n(&self) -> usize {
        self.parent.len()
    }

    pub fn forward(&self, x: &[f64], channels: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(channels * self.fine_n());
        for c in 0..channels {
            let xc = &x[c * self.coarse_n..(c + 1) * self.coarse_n];
            out.extend(self.parent.iter().map(|&p| xc[p as usize]));
        }
        out
    }

    pub fn backward(&self, d_fine: &[f64], channels: usize) -> Vec<f64> {
        let mut d = vec![0.0; channels * self.coarse_n];
        let fine_n = self.fine_n();
        for c in 0..channels {
            let dc = &mut d[c * self.coarse_n..(c + 1) * self.coarse_n];
            for (&p, &g) in self.parent.iter().zip(&d_fine[c * fine_n..(c + 1) * fine_n]) {
                dc[p as usize] += g;
            }
        }
        d
    }
}

/// Feature-wise affine modulation: map `i` becomes `γ_i · map_i + β_i`.
pub fn film(maps: &[f64], gamma: &[f64], beta: &[f64]) -> Result<Vec<f64>> {
    if gamma.len() != beta.len() || gamma.is_empty() || maps.len() % gamma.len() != 0 {
        return Err(Error::Shape(format!(
            "FiLM with {} scales and {} shifts over {} values",
            gamma.len(),
            beta.len(),
            maps.len()
        )));
    }
    let n = maps.len() / gamma.len();
    Ok(maps
        .chunks_exact(n)
        .zip(gamma.iter().zip(beta))
        .flat_map(|(m, (&g, &b))| m.iter().map(move |&x| g * x + b))
        .collect())
}

/// Returns the gradient w.r.t. the FiLM input; accumulates γ/β gradients.
pub(crate) fn film_backward(
    maps: &[f64],
    gamma: &[f64],
    d_out: &[f64],
    d_gamma: &mut [f64],
    d_beta: &mut [f64],
) -> Vec<f64> {
    let n = maps.len() / gamma.len();
    let mut d_in = Vec::with_capacity(maps.len());
    for c in 0..gamma.len() {
        let (m, g) = (&maps[c * n..(c + 1) * n], &d_out[c * n..(c + 1) * n]);
        d_gamma[c] += m.iter().zip(g).map(|(x, y)| x * y).sum::<f64>();
        d_beta[c] += g.iter().sum::<f64>();
        d_in.extend(g.iter().map(|y| gamma[c] * y));
    }
    d_in
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn film_examples() {
        let maps = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(film(&maps, &[1.0], &[0.0]).unwrap(), maps.to_vec());
        assert_eq!(film(&maps, &[2.0], &[-1.0]).unwrap(), vec![1.0, 3.0, 5.0, 7.0]);
        assert_eq!(film(&maps, &[0.0, 0.0], &[5.0, 5.0]).unwrap(), vec![5.0; 4]);
        assert!(film(&maps, &[1.0, 1.0], &[0.0]).is_err());
        assert!(film(&maps, &[1.0, 1.0, 1.0], &[0.0, 0.0, 0.0]).is_err());
    }

    /// Direct-loop reference convolution.
    fn naive_conv1d(x: &[f64], n: usize, cin: usize, w: &[f64], b: &[f64], cout: usize, stride: usize) -> Vec<f64> {
        let m = n / stride;
        let mut out = vec![0.0; cout * m];
        for o in 0..cout {
            for p in 0..m {
                let mut s = b[o];
                for c in 0..cin {
                    for t in 0..5 {
                        let i = (p * stride + t) as isize - 2;
                        if i >= 0 && (i as usize) < n {
                            s += w[(o * cin + c) * 5 + t] * x[c * n + i as usize];
                        }
                    }
                }
                out[o * m + p] = s;
            }
        }
        out
    }

    #[test]
    fn both_gemm_layouts_match_direct_loops() {
        let (n, cin, cout) = (12, 3, 2);
        let x: Vec<f64> = (0..n * cin).map(|i| (i as f64 * 0.37).sin()).collect();
        let w: Vec<f64> = (0..cout * cin * 5).map(|i| (i as f64 * 0.11).cos()).collect();
        let b = [0.3, -0.2];
        for stride in [1, 2] {
            for unroll in [true, false] {
                let mut g = ConvGeom::new(&[n], stride, 5, cin, cout);
                g.unroll = unroll;
                let out = g.forward(&w, &b, &x);
                let reference = naive_conv1d(&x, n, cin, &w, &b, cout, stride);
                for (a, r) in out.iter().zip(&reference) {
                    assert!((a - r).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn both_gemm_layouts_agree_on_gradients() {
        let shape = [6, 4];
        let (cin, cout) = (3, 2);
        let n_in = 24;
        let x: Vec<f64> = (0..n_in * cin).map(|i| (i as f64 * 0.29).sin()).collect();
        let w: Vec<f64> = (0..cout * cin * 9).map(|i| (i as f64 * 0.13).cos()).collect();
        let mut results = Vec::new();
        for unroll in [true, false] {
            let mut g = ConvGeom::new(&shape, 2, 3, cin, cout);
            g.unroll = unroll;
            let d_out: Vec<f64> = (0..cout * g.out_n).map(|i| (i as f64 * 0.7).cos()).collect();
            let mut dw = vec![0.0; w.len()];
            let mut db = vec![0.0; cout];
            let dx = g.backward(&w, &x, &d_out, &mut dw, &mut db, true).unwrap();
            results.push((dw, db, dx));
        }
        for (a, b) in [(&results[0].0, &results[1].0), (&results[0].1, &results[1].1), (&results[0].2, &results[1].2)] {
            for (p, q) in a.iter().zip(b.iter()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn upsample_2d_copies_parents() {
        let up = Upsample::new(&[1, 2]);
        assert_eq!(up.forward(&[1.0, 2.0], 1), vec![1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0]);
        assert_eq!(up.backward(&[1.0; 8], 1), vec![4.0, 4.0]);
    }
}
