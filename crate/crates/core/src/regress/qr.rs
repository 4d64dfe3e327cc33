//! Householder QR with optional column pivoting, and minimum-norm
//! least-squares solves built on it. Matrices are column-major.

/// Generates a reflector `H = I - tau v vᵀ` with `v[0] = 1` that maps `x`
/// onto `beta e₁`. On return `x[0] = beta` and `x[1..]` holds `v[1..]`.
fn make_reflector(x: &mut [f64]) -> f64 {
    let alpha = x[0];
    let tail = x[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if tail == 0.0 {
        return 0.0;
    }
    let beta = -alpha.signum() * alpha.hypot(tail);
    let beta = if beta == 0.0 { tail } else { beta };
    let scale = 1.0 / (alpha - beta);
    for v in &mut x[1..] {
        *v *= scale;
    }
    x[0] = beta;
    (beta - alpha) / beta
}

/// Applies `I - tau v vᵀ` to `y`, where `v = [1, tail...]`.
fn apply_reflector(tail: &[f64], tau: f64, y: &mut [f64]) {
    if tau == 0.0 {
        return;
    }
    let mut w = y[0];
    for (v, yi) in tail.iter().zip(&y[1..]) {
        w += v * yi;
    }
    w *= tau;
    y[0] -= w;
    for (v, yi) in tail.iter().zip(&mut y[1..]) {
        *yi -= w * v;
    }
}

pub(crate) struct Qr {
    rows: usize,
    cols: usize,
    /// R in the upper triangle, reflector tails below the diagonal.
    a: Vec<f64>,
    tau: Vec<f64>,
    /// Column `i` of the factored matrix is original column `perm[i]`.
    perm: Vec<usize>,
}

impl Qr {
    pub(crate) fn factor(rows: usize, cols: usize, mut a: Vec<f64>, pivot: bool) -> Self {
        debug_assert_eq!(a.len(), rows * cols);
        let steps = rows.min(cols);
        let mut tau = vec![0.0; steps];
        let mut perm: Vec<usize> = (0..cols).collect();
        for k in 0..steps {
            if pivot {
                let norm = |c: usize, a: &[f64]| a[c * rows + k..(c + 1) * rows].iter().map(|v| v * v).sum::<f64>();
                let mut best = k;
                let mut best_norm = norm(k, &a);
                for c in k + 1..cols {
                    let nc = norm(c, &a);
                    if nc > best_norm {
                        best = c;
                        best_norm = nc;
                    }
                }
                if best != k {
                    for r in 0..rows {
                        a.swap(k * rows + r, best * rows + r);
                    }
                    perm.swap(k, best);
                }
            }
            let (head, rest) = a.split_at_mut((k + 1) * rows);
            let col = &mut head[k * rows + k..];
            tau[k] = make_reflector(col);
            let tail = &col[1..];
            for c in 0..cols - k - 1 {
                apply_reflector(tail, tau[k], &mut rest[c * rows + k..(c + 1) * rows]);
            }
        }
        Self {
            rows,
            cols,
            a,
            tau,
            perm,
        }
    }

    pub(crate) fn r(&self, i: usize, j: usize) -> f64 {
        self.a[j * self.rows + i]
    }

    /// Numerical rank: leading diagonal entries of R above
    /// `max(rows, cols) · ε · |R₀₀|`.
    pub(crate) fn rank(&self) -> usize {
        let steps = self.tau.len();
        if steps == 0 {
            return 0;
        }
        let top = self.r(0, 0).abs();
        if top == 0.0 {
            return 0;
        }
        let tol = self.rows.max(self.cols) as f64 * f64::EPSILON * top;
        (0..steps).take_while(|&i| self.r(i, i).abs() > tol).count()
    }

    /// Overwrites `y` (length `rows`) with `Qᵀ y`.
    pub(crate) fn apply_qt(&self, y: &mut [f64]) {
        for (k, &t) in self.tau.iter().enumerate() {
            let tail = &self.a[k * self.rows + k + 1..(k + 1) * self.rows];
            apply_reflector(tail, t, &mut y[k..]);
        }
    }

    /// Overwrites `z` (length `rows`) with `Q z`.
    pub(crate) fn apply_q(&self, z: &mut [f64]) {
        for (k, &t) in self.tau.iter().enumerate().rev() {
            let tail = &self.a[k * self.rows + k + 1..(k + 1) * self.rows];
            apply_reflector(tail, t, &mut z[k..]);
        }
    }

    /// Solves `R[..n, ..n] x = b` by back substitution.
    pub(crate) fn solve_upper(&self, n: usize, b: &mut [f64]) {
        for i in (0..n).rev() {
            let mut s = b[i];
            for j in i + 1..n {
                s -= self.r(i, j) * b[j];
            }
            b[i] = s / self.r(i, i);
        }
    }

    /// Solves `R[..n, ..n]ᵀ x = b` by forward substitution.
    pub(crate) fn solve_upper_transposed(&self, n: usize, b: &mut [f64]) {
        for i in 0..n {
            let mut s = b[i];
            for j in 0..i {
                s -= self.r(j, i) * b[j];
            }
            b[i] = s / self.r(i, i);
        }
    }

    pub(crate) fn perm(&self) -> &[usize] {
        &self.perm
    }
}

/// Minimum-norm least-squares solution of `A x ≈ y` for column-major `A`
/// (`rows × cols`). Returns the solution and the numerical rank.
///
/// Rank-deficient systems go through a complete orthogonal decomposition:
/// the leading `rank` rows of R are re-factored from the right so the
/// trailing null-space components are zero.
pub(crate) fn min_norm_lstsq(rows: usize, cols: usize, a: Vec<f64>, y: &[f64]) -> (Vec<f64>, usize) {
    let qr = Qr::factor(rows, cols, a, true);
    let rank = qr.rank();
    let mut qty = y.to_vec();
    qr.apply_qt(&mut qty);
    let mut z = vec![0.0; cols];
    if rank == cols {
        z.copy_from_slice(&qty[..cols]);
        qr.solve_upper(cols, &mut z);
    } else if rank > 0 {
        // Tᵀ = Q₂R₂ with T = R[..rank, ..], so T = R₂ᵀQ₂ᵀ.
        let mut t = vec![0.0; cols * rank];
        for i in 0..rank {
            for j in i..cols {
                t[i * cols + j] = qr.r(i, j);
            }
        }
        let inner = Qr::factor(cols, rank, t, false);
        let mut w = qty[..rank].to_vec();
        inner.solve_upper_transposed(rank, &mut w);
        z[..rank].copy_from_slice(&w);
        inner.apply_q(&mut z);
    }
    let mut x = vec![0.0; cols];
    for (i, &p) in qr.perm().iter().enumerate() {
        x[p] = z[i];
    }
    (x, rank)
}
