//! Minimal dense linear algebra for the predictor: a row-major matrix,
//! the few products the net needs, and spectral norm by power iteration.

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |x| x.len());
        assert!(rows.iter().all(|x| x.len() == c), "ragged rows");
        Matrix {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// y = W x
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols, "matvec dimension");
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// y = Wᵀ x
    pub fn matvec_t(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.rows, "matvec_t dimension");
        let mut out = vec![0.0; self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.row(i)) {
                *o += xi * w;
            }
        }
        out
    }

    /// self += scale · y xᵀ (rank-one update, used for weight gradients).
    pub fn add_outer(&mut self, y: &[f64], x: &[f64], scale: f64) {
        assert_eq!(y.len(), self.rows, "outer rows");
        assert_eq!(x.len(), self.cols, "outer cols");
        for (i, &yi) in y.iter().enumerate() {
            let s = scale * yi;
            if s == 0.0 {
                continue;
            }
            for (w, xv) in self.row_mut(i).iter_mut().zip(x) {
                *w += s * xv;
            }
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Largest singular value by power iteration with a deterministic start
/// vector, plus the final left/right singular vector estimates (u, v). The
/// gradient of the spectral norm with respect to the matrix is u vᵀ. A zero
/// matrix yields (0, zero vectors).
pub fn spectral_norm_uv(m: &Matrix) -> (f64, Vec<f64>, Vec<f64>) {
    assert!(m.rows > 0 && m.cols > 0, "spectral norm of empty matrix");
    let mut v: Vec<f64> = (0..m.cols).map(|i| 1.0 + 0.01 * i as f64).collect();
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);
    let mut u = vec![0.0; m.rows];
    let mut sigma = 0.0f64;
    // The vector estimates converge like (σ2/σ1)^k, so nearly-degenerate
    // top singular values need many more steps than well-separated ones;
    // the cap covers relative gaps down to ~2%.
    for _ in 0..1000 {
        let wv = m.matvec(&v);
        let nu = norm(&wv);
        if nu == 0.0 {
            // v is in the null space; the deterministic start makes this
            // mean the matrix is (numerically) zero along our probe.
            return (0.0, vec![0.0; m.rows], vec![0.0; m.cols]);
        }
        u = wv.iter().map(|x| x / nu).collect();
        let wu = m.matvec_t(&u);
        let ns = norm(&wu);
        if ns == 0.0 {
            return (0.0, vec![0.0; m.rows], vec![0.0; m.cols]);
        }
        let prev_v = std::mem::replace(&mut v, wu.iter().map(|x| x / ns).collect());
        let new_sigma = ns;
        // Stop two orders below the 1e-7 accuracy target (the geometric
        // tail past the last step can exceed the step itself), and only
        // once the singular vectors have settled too — the value converges
        // quadratically faster than the vectors, and the gradient u vT
        // needs the vectors.
        let v_moved = v
            .iter()
            .zip(&prev_v)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if (new_sigma - sigma).abs() <= 1e-9 * new_sigma.max(1.0) && v_moved <= 1e-9 {
            return (new_sigma, u, v);
        }
        sigma = new_sigma;
    }
    (sigma, u, v)
}

/// Largest singular value of a matrix.
pub fn spectral_norm(m: &Matrix) -> f64 {
    spectral_norm_uv(m).0
}

/// Numerically stable ln(1 + eˣ).
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
