//! Convolution and dense kernels on flat `C×S×S` buffers.

/// Dot product with four independent accumulators so the loop vectorises.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (y, x) in y.iter_mut().zip(x) {
        *y += alpha * x;
    }
}

/// Patch matrix: row `p` holds the `cin·k·k` inputs under output cell `p`
/// in weight order `(channel, ky, kx)`, zero outside the board.
fn im2col(input: &[f64], cin: usize, size: usize, k: usize) -> Vec<f64> {
    let area = size * size;
    let pad = (k / 2) as isize;
    let width = cin * k * k;
    let mut cols = vec![0.0; area * width];
    for y in 0..size {
        for x in 0..size {
            let row = &mut cols[(y * size + x) * width..(y * size + x + 1) * width];
            for ky in 0..k {
                let sy = y as isize + ky as isize - pad;
                if sy < 0 || sy >= size as isize {
                    continue;
                }
                for kx in 0..k {
                    let sx = x as isize + kx as isize - pad;
                    if sx < 0 || sx >= size as isize {
                        continue;
                    }
                    let src = sy as usize * size + sx as usize;
                    for i in 0..cin {
                        row[(i * k + ky) * k + kx] = input[i * area + src];
                    }
                }
            }
        }
    }
    cols
}

/// Scatters patch-matrix gradients back onto the input planes.
fn col2im(dcols: &[f64], cin: usize, size: usize, k: usize, dinput: &mut [f64]) {
    let area = size * size;
    let pad = (k / 2) as isize;
    let width = cin * k * k;
    for y in 0..size {
        for x in 0..size {
            let row = &dcols[(y * size + x) * width..(y * size + x + 1) * width];
            for ky in 0..k {
                let sy = y as isize + ky as isize - pad;
                if sy < 0 || sy >= size as isize {
                    continue;
                }
                for kx in 0..k {
                    let sx = x as isize + kx as isize - pad;
                    if sx < 0 || sx >= size as isize {
                        continue;
                    }
                    let dst = sy as usize * size + sx as usize;
                    for i in 0..cin {
                        dinput[i * area + dst] += row[(i * k + ky) * k + kx];
                    }
                }
            }
        }
    }
}

/// Same-padded `k×k` convolution (k odd). `out` is overwritten.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_forward(
    input: &[f64],
    cin: usize,
    cout: usize,
    size: usize,
    k: usize,
    weights: &[f64],
    bias: &[f64],
    out: &mut [f64],
) {
    let area = size * size;
    let width = cin * k * k;
    let cols = im2col(input, cin, size, k);
    for o in 0..cout {
        let w = &weights[o * width..(o + 1) * width];
        let plane = &mut out[o * area..(o + 1) * area];
        for (p, v) in plane.iter_mut().enumerate() {
            *v = bias[o] + dot(w, &cols[p * width..(p + 1) * width]);
        }
    }
}

/// Accumulates weight/bias gradients and, when requested, the input gradient.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward(
    input: &[f64],
    cin: usize,
    cout: usize,
    size: usize,
    k: usize,
    weights: &[f64],
    dout: &[f64],
    dweights: &mut [f64],
    dbias: &mut [f64],
    dinput: Option<&mut [f64]>,
) {
    let area = size * size;
    let width = cin * k * k;
    let cols = im2col(input, cin, size, k);
    let mut dcols = dinput.as_ref().map(|_| vec![0.0; area * width]);
    for o in 0..cout {
        let g = &dout[o * area..(o + 1) * area];
        dbias[o] += g.iter().sum::<f64>();
        let w = &weights[o * width..(o + 1) * width];
        let dw = &mut dweights[o * width..(o + 1) * width];
        for (p, &gp) in g.iter().enumerate() {
            if gp == 0.0 {
                continue;
            }
            axpy(gp, &cols[p * width..(p + 1) * width], dw);
            if let Some(dc) = dcols.as_mut() {
                axpy(gp, w, &mut dc[p * width..(p + 1) * width]);
            }
        }
    }
    if let (Some(dc), Some(din)) = (dcols, dinput) {
        col2im(&dc, cin, size, k, din);
    }
}

/// `out = W x + b` with `W` stored `(out, in)` row-major.
pub(crate) fn dense_forward(x: &[f64], weights: &[f64], bias: &[f64], out: &mut [f64]) {
    let n_in = x.len();
    for (o, y) in out.iter_mut().enumerate() {
        let row = &weights[o * n_in..(o + 1) * n_in];
        *y = bias[o] + dot(row, x);
    }
}

pub(crate) fn dense_backward(
    x: &[f64],
    weights: &[f64],
    dout: &[f64],
    dweights: &mut [f64],
    dbias: &mut [f64],
    mut dx: Option<&mut [f64]>,
) {
    let n_in = x.len();
    for (o, &g) in dout.iter().enumerate() {
        dbias[o] += g;
        if g == 0.0 {
            continue;
        }
        axpy(g, x, &mut dweights[o * n_in..(o + 1) * n_in]);
        if let Some(dx) = dx.as_deref_mut() {
            axpy(g, &weights[o * n_in..(o + 1) * n_in], dx);
        }
    }
}

#[inline]
pub(crate) fn relu_in_place(x: &mut [f64]) {
    for v in x.iter_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Zeroes gradient entries whose forward ReLU output was clipped.
#[inline]
pub(crate) fn relu_backward(output: &[f64], grad: &mut [f64]) {
    for (g, &y) in grad.iter_mut().zip(output) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
}
