//! Strided 2D convolution primitives over `[channel][row][col]` buffers.
//!
//! Both layer kinds relate a "small" grid index `a` and a kernel offset `k` to
//! a "big" grid index `a * stride + k - pad`. A convolution reads the big grid
//! (its input) into the small one (its output); a transposed convolution does
//! the reverse.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Geometry {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub small: usize,
    pub big: usize,
}

impl Geometry {
    /// Range of small indices `a` with `0 <= a*stride + k - pad < big`.
    #[inline]
    fn valid(&self, k: usize) -> (usize, usize) {
        let s = self.stride as isize;
        let off = k as isize - self.pad as isize;
        // a*s + off >= 0  ->  a >= ceil(-off / s)
        let lo = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
        // a*s + off <= big - 1
        let hi_num = self.big as isize - 1 - off;
        if hi_num < 0 {
            return (0, 0);
        }
        let hi = (hi_num / s + 1).min(self.small as isize);
        if lo >= hi {
            (0, 0)
        } else {
            (lo as usize, hi as usize)
        }
    }
}

/// `small[a] += w * big[a*s + k - p]` over one 2D plane pair and one kernel tap.
#[inline]
fn gather(g: &Geometry, small: &mut [f64], big: &[f64], w: f64, ky: usize, kx: usize) {
    let (y0, y1) = g.valid(ky);
    let (x0, x1) = g.valid(kx);
    for ay in y0..y1 {
        let by = ay * g.stride + ky - g.pad;
        let srow = &mut small[ay * g.small..(ay + 1) * g.small];
        let brow = &big[by * g.big..(by + 1) * g.big];
        for ax in x0..x1 {
            srow[ax] += w * brow[ax * g.stride + kx - g.pad];
        }
    }
}

/// `big[a*s + k - p] += w * small[a]`.
#[inline]
fn scatter(g: &Geometry, big: &mut [f64], small: &[f64], w: f64, ky: usize, kx: usize) {
    let (y0, y1) = g.valid(ky);
    let (x0, x1) = g.valid(kx);
    for ay in y0..y1 {
        let by = ay * g.stride + ky - g.pad;
        let srow = &small[ay * g.small..(ay + 1) * g.small];
        let brow = &mut big[by * g.big..(by + 1) * g.big];
        for ax in x0..x1 {
            brow[ax * g.stride + kx - g.pad] += w * srow[ax];
        }
    }
}

/// `Σ_a small[a] * big[a*s + k - p]`.
#[inline]
fn correlate(g: &Geometry, small: &[f64], big: &[f64], ky: usize, kx: usize) -> f64 {
    let (y0, y1) = g.valid(ky);
    let (x0, x1) = g.valid(kx);
    let mut acc = 0.0;
    for ay in y0..y1 {
        let by = ay * g.stride + ky - g.pad;
        let srow = &small[ay * g.small..(ay + 1) * g.small];
        let brow = &big[by * g.big..(by + 1) * g.big];
        for ax in x0..x1 {
            acc += srow[ax] * brow[ax * g.stride + kx - g.pad];
        }
    }
    acc
}

/// Which side of the geometry is the layer input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Kind {
    /// Input on the big grid, output on the small grid; weights `[out][in][ky][kx]`.
    Conv,
    /// Input on the small grid, output on the big grid; weights `[in][out][ky][kx]`.
    Transposed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Layer {
    pub kind: Kind,
    pub cin: usize,
    pub cout: usize,
    pub geom: Geometry,
    pub relu: bool,
}

impl Layer {
    pub fn in_size(&self) -> usize {
        match self.kind {
            Kind::Conv => self.geom.big,
            Kind::Transposed => self.geom.small,
        }
    }

    pub fn out_size(&self) -> usize {
        match self.kind {
            Kind::Conv => self.geom.small,
            Kind::Transposed => self.geom.big,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.cin * self.cout * self.geom.kernel * self.geom.kernel
    }

    pub fn param_len(&self) -> usize {
        self.weight_len() + self.cout
    }

    pub fn fan_in(&self) -> usize {
        self.cin * self.geom.kernel * self.geom.kernel
    }

    #[inline]
    fn widx(&self, ci: usize, co: usize, ky: usize, kx: usize) -> usize {
        let k = self.geom.kernel;
        match self.kind {
            Kind::Conv => ((co * self.cin + ci) * k + ky) * k + kx,
            Kind::Transposed => ((ci * self.cout + co) * k + ky) * k + kx,
        }
    }

    /// Pre-activation output for `input`; `params` holds weights then biases.
    pub fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        let (wts, bias) = params.split_at(self.weight_len());
        let ip = self.in_size() * self.in_size();
        let op = self.out_size() * self.out_size();
        let mut out = vec![0.0; self.cout * op];
        let k = self.geom.kernel;
        for co in 0..self.cout {
            let oplane = &mut out[co * op..(co + 1) * op];
            oplane.iter_mut().for_each(|v| *v = bias[co]);
            for ci in 0..self.cin {
                let iplane = &input[ci * ip..(ci + 1) * ip];
                for ky in 0..k {
                    for kx in 0..k {
                        let w = wts[self.widx(ci, co, ky, kx)];
                        if w == 0.0 {
                            continue;
                        }
                        match self.kind {
                            Kind::Conv => gather(&self.geom, oplane, iplane, w, ky, kx),
                            Kind::Transposed => scatter(&self.geom, oplane, iplane, w, ky, kx),
                        }
                    }
                }
            }
        }
        out
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(
        &self,
        params: &[f64],
        input: &[f64],
        d_out: &[f64],
        grad: &mut [f64],
        need_input: bool,
    ) -> Vec<f64> {
        let (wts, _) = params.split_at(self.weight_len());
        let (gw, gb) = grad.split_at_mut(self.weight_len());
        let ip = self.in_size() * self.in_size();
        let op = self.out_size() * self.out_size();
        let mut d_in = if need_input { vec![0.0; self.cin * ip] } else { Vec::new() };
        let k = self.geom.kernel;
        for co in 0..self.cout {
            let dplane = &d_out[co * op..(co + 1) * op];
            gb[co] += dplane.iter().sum::<f64>();
            for ci in 0..self.cin {
                let iplane = &input[ci * ip..(ci + 1) * ip];
                for ky in 0..k {
                    for kx in 0..k {
                        let idx = self.widx(ci, co, ky, kx);
                        match self.kind {
                            Kind::Conv => {
                                gw[idx] += correlate(&self.geom, dplane, iplane, ky, kx);
                                if need_input {
                                    let diplane = &mut d_in[ci * ip..(ci + 1) * ip];
                                    scatter(&self.geom, diplane, dplane, wts[idx], ky, kx);
                                }
                            }
                            Kind::Transposed => {
                                gw[idx] += correlate(&self.geom, iplane, dplane, ky, kx);
                                if need_input {
                                    let diplane = &mut d_in[ci * ip..(ci + 1) * ip];
                                    gather(&self.geom, diplane, dplane, wts[idx], ky, kx);
                                }
                            }
                        }
                    }
                }
            }
        }
        d_in
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn direct_conv(input: &[f64], w: &[f64], n: usize, k: usize, s: usize, p: usize, out: usize) -> Vec<f64> {
        let mut o = vec![0.0; out * out];
        for oy in 0..out {
            for ox in 0..out {
                for ky in 0..k {
                    for kx in 0..k {
                        let iy = (oy * s + ky) as isize - p as isize;
                        let ix = (ox * s + kx) as isize - p as isize;
                        if iy >= 0 && ix >= 0 && (iy as usize) < n && (ix as usize) < n {
                            o[oy * out + ox] += w[ky * k + kx] * input[iy as usize * n + ix as usize];
                        }
                    }
                }
            }
        }
        o
    }

    #[test]
    fn conv_matches_direct_loops() {
        let n = 14;
        let input: Vec<f64> = (0..n * n).map(|i| ((i * 31) % 17) as f64 - 8.0).collect();
        let w: Vec<f64> = (0..25).map(|i| ((i * 7) % 5) as f64 * 0.1 - 0.2).collect();
        let layer = Layer {
            kind: Kind::Conv,
            cin: 1,
            cout: 1,
            geom: Geometry { kernel: 5, stride: 2, pad: 2, small: 7, big: 14 },
            relu: false,
        };
        let mut params = w.clone();
        params.push(0.0);
        let got = layer.forward(&params, &input);
        assert_eq!(got, direct_conv(&input, &w, 14, 5, 2, 2, 7));
    }

    // A transposed convolution is the adjoint of the convolution with the
    // same geometry: <conv(x), y> = <x, convT(y)>.
    #[test]
    fn transposed_is_adjoint() {
        let geom = Geometry { kernel: 5, stride: 2, pad: 2, small: 4, big: 7 };
        let conv = Layer { kind: Kind::Conv, cin: 2, cout: 3, geom, relu: false };
        let tconv = Layer { kind: Kind::Transposed, cin: 3, cout: 2, geom, relu: false };
        let wlen = conv.weight_len();
        let w: Vec<f64> = (0..wlen).map(|i| ((i * 13) % 11) as f64 * 0.05 - 0.25).collect();
        let x: Vec<f64> = (0..2 * 49).map(|i| ((i * 7) % 9) as f64 - 4.0).collect();
        let y: Vec<f64> = (0..3 * 16).map(|i| ((i * 5) % 7) as f64 - 3.0).collect();
        let mut cp = w.clone();
        cp.extend([0.0; 3]);
        let mut tp = w.clone();
        tp.extend([0.0; 2]);
        let cx = conv.forward(&cp, &x);
        let ty = tconv.forward(&tp, &y);
        let lhs: f64 = cx.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&ty).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9);
    }
}
