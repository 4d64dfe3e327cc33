//! Normal-equations route: a centered Gram matrix accumulated once and
//! sliced per regression, solved by pivoted Cholesky.

use rayon::prelude::*;

use super::{dot, qr::Qr, LinearModel, Regularization};
use crate::error::{Error, Result};

/// Rows per accumulation block. Fixed so results do not depend on the
/// worker count.
pub const GRAM_BLOCK_ROWS: usize = 512;

/// Centered cross-product matrix of a set of columns.
#[derive(Debug, Clone)]
pub struct GramSystem {
    rows: usize,
    dim: usize,
    means: Vec<f64>,
    /// Full symmetric `dim × dim`, row-major.
    gram: Vec<f64>,
}

impl GramSystem {
    /// Accumulates `Σ (xᵢ - μ)(xᵢ - μ)ᵀ` over `rows` rows of width `dim`, where
    /// `fill_row(r, out)` writes row `r`. With `center == false`, μ = 0.
    pub fn accumulate<F>(rows: usize, dim: usize, center: bool, fill_row: F) -> Self
    where
        F: Fn(usize, &mut [f64]) + Sync,
    {
        let blocks: Vec<(usize, usize)> = (0..rows)
            .step_by(GRAM_BLOCK_ROWS)
            .map(|s| (s, (s + GRAM_BLOCK_ROWS).min(rows)))
            .collect();

        let means = if center && rows > 0 {
            let partials: Vec<Vec<f64>> = blocks
                .par_iter()
                .map(|&(s, e)| {
                    let mut buf = vec![0.0; dim];
                    let mut acc = vec![0.0; dim];
                    for r in s..e {
                        fill_row(r, &mut buf);
                        for (a, b) in acc.iter_mut().zip(&buf) {
                            *a += b;
                        }
                    }
                    acc
                })
                .collect();
            let mut sums = vec![0.0; dim];
            for p in partials {
                for (a, b) in sums.iter_mut().zip(p) {
                    *a += b;
                }
            }
            sums.into_iter().map(|s| s / rows as f64).collect()
        } else {
            vec![0.0; dim]
        };

        let mut gram = vec![0.0; dim * dim];
        let mut block = Vec::new();
        for &(s, e) in &blocks {
            let len = e - s;
            // column-major block: column c occupies block[c*len..(c+1)*len]
            block.clear();
            block.resize(dim * len, 0.0);
            let mut rowbuf = vec![0.0; dim];
            for (i, r) in (s..e).enumerate() {
                fill_row(r, &mut rowbuf);
                for c in 0..dim {
                    block[c * len + i] = rowbuf[c] - means[c];
                }
            }
            let block = &block;
            gram.par_chunks_mut(dim).enumerate().for_each(|(a, grow)| {
                let ca = &block[a * len..(a + 1) * len];
                for (b, g) in grow[..=a].iter_mut().enumerate() {
                    *g += dot(ca, &block[b * len..(b + 1) * len]);
                }
            });
        }
        for a in 0..dim {
            for b in a + 1..dim {
                gram[a * dim + b] = gram[b * dim + a];
            }
        }
        Self {
            rows,
            dim,
            means,
            gram,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.gram[a * self.dim + b]
    }

    /// Regresses column `target` on the columns in `predictors` (in that
    /// order). The intercept absorbs the column means.
    pub fn solve(&self, predictors: &[usize], target: usize, reg: Regularization) -> Result<LinearModel> {
        let lambda = reg.validated_lambda()?;
        if self.rows == 0 {
            return Err(Error::InvalidInput("regression needs at least one row".into()));
        }
        let d = predictors.len();
        let mut g = vec![0.0; d * d];
        for (i, &pi) in predictors.iter().enumerate() {
            for (j, &pj) in predictors.iter().enumerate() {
                g[i * d + j] = self.get(pi, pj);
            }
            g[i * d + i] += lambda;
        }
        let c: Vec<f64> = predictors.iter().map(|&p| self.get(p, target)).collect();
        let (coefficients, rank) = min_norm_psd_solve(d, g, &c, self.rows);
        let intercept = self.means[target]
            - predictors
                .iter()
                .zip(&coefficients)
                .map(|(&p, b)| self.means[p] * b)
                .sum::<f64>();
        if !intercept.is_finite() || coefficients.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("normal-equations solve produced non-finite coefficients".into()));
        }
        Ok(LinearModel {
            coefficients,
            intercept,
            regularization: reg,
            rank,
        })
    }
}

/// Minimum-norm solution of `G x = c` for symmetric positive semi-definite
/// `G` (row-major, consumed). Pivoted Cholesky stops once the largest
/// remaining pivot is at most `max(rows, d) · ε · max diag(G)`.
pub(crate) fn min_norm_psd_solve(d: usize, mut g: Vec<f64>, c: &[f64], rows: usize) -> (Vec<f64>, usize) {
    let maxdiag = (0..d).map(|i| g[i * d + i]).fold(0.0_f64, f64::max);
    let mut perm: Vec<usize> = (0..d).collect();
    if !(maxdiag > 0.0) {
        return (vec![0.0; d], 0);
    }
    let tol = rows.max(d) as f64 * f64::EPSILON * maxdiag;
    let mut rank = d;
    let mut col = vec![0.0; d];
    for k in 0..d {
        let q = (k..d)
            .max_by(|&i, &j| g[i * d + i].total_cmp(&g[j * d + j]))
            .unwrap_or(k);
        if !(g[q * d + q] > tol) {
            rank = k;
            break;
        }
        if q != k {
            symmetric_swap_lower(&mut g, d, k, q);
            perm.swap(k, q);
        }
        let lkk = g[k * d + k].sqrt();
        g[k * d + k] = lkk;
        for i in k + 1..d {
            g[i * d + k] /= lkk;
            col[i] = g[i * d + k];
        }
        for i in k + 1..d {
            let li = col[i];
            if li == 0.0 {
                continue;
            }
            let row = &mut g[i * d + k + 1..=i * d + i];
            for (gij, lj) in row.iter_mut().zip(&col[k + 1..=i]) {
                *gij -= li * lj;
            }
        }
    }

    let cp: Vec<f64> = perm.iter().map(|&p| c[p]).collect();
    let mut z = vec![0.0; d];
    if rank == d {
        // L y = cp, then Lᵀ z = y
        for i in 0..d {
            let mut s = cp[i];
            for j in 0..i {
                s -= g[i * d + j] * z[j];
            }
            z[i] = s / g[i * d + i];
        }
        for i in (0..d).rev() {
            let mut s = z[i];
            for j in i + 1..d {
                s -= g[j * d + i] * z[j];
            }
            z[i] = s / g[i * d + i];
        }
    } else if rank > 0 {
        // G ≈ L Lᵀ with L (d × rank). With L = QR, G⁺ = Q R⁻ᵀ R⁻¹ Qᵀ.
        let mut l = vec![0.0; d * rank];
        for j in 0..rank {
            for i in j..d {
                l[j * d + i] = g[i * d + j];
            }
        }
        let qr = Qr::factor(d, rank, l, false);
        let mut u = cp;
        qr.apply_qt(&mut u);
        let mut t = u[..rank].to_vec();
        qr.solve_upper(rank, &mut t);
        qr.solve_upper_transposed(rank, &mut t);
        z[..rank].copy_from_slice(&t);
        qr.apply_q(&mut z);
    }
    let mut x = vec![0.0; d];
    for (i, &p) in perm.iter().enumerate() {
        x[p] = z[i];
    }
    (x, rank)
}

/// Swaps indices `k < q` of a symmetric matrix whose lower triangle is live.
fn symmetric_swap_lower(g: &mut [f64], d: usize, k: usize, q: usize) {
    g.swap(k * d + k, q * d + q);
    for j in 0..k {
        g.swap(k * d + j, q * d + j);
    }
    for i in k + 1..q {
        g.swap(i * d + k, q * d + i);
    }
    for i in q + 1..d {
        g.swap(i * d + k, i * d + q);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_spd_system() {
        // G = [[4,2],[2,3]], c = [2, 1] → x = [0.5, 0]
        let (x, rank) = min_norm_psd_solve(2, vec![4.0, 2.0, 2.0, 3.0], &[2.0, 1.0], 2);
        assert_eq!(rank, 2);
        assert!((x[0] - 0.5).abs() < 1e-14 && x[1].abs() < 1e-14);
    }

    #[test]
    fn pivoting_swaps_correctly() {
        // diag increasing forces swaps at every step
        let g = vec![1.0, 0.5, 0.2, 0.5, 4.0, 1.0, 0.2, 1.0, 9.0];
        let c = [1.0, 2.0, 3.0];
        let (x, rank) = min_norm_psd_solve(3, g.clone(), &c, 3);
        assert_eq!(rank, 3);
        for i in 0..3 {
            let r: f64 = (0..3).map(|j| g[i * 3 + j] * x[j]).sum();
            assert!((r - c[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_gram_min_norm() {
        // G = vvᵀ with v = [1, 1]; c = 2v → min-norm x = [1, 1]
        let (x, rank) = min_norm_psd_solve(2, vec![1.0, 1.0, 1.0, 1.0], &[2.0, 2.0], 2);
        assert_eq!(rank, 1);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gram_block_boundaries_do_not_matter_for_values() {
        let rows = GRAM_BLOCK_ROWS * 2 + 17;
        let fill = |r: usize, out: &mut [f64]| {
            out[0] = (r as f64 * 0.37).sin();
            out[1] = (r as f64 * 0.11).cos() + 2.0;
        };
        let gs = GramSystem::accumulate(rows, 2, true, fill);
        let mut naive = [0.0; 3];
        let mut mu = [0.0; 2];
        let mut buf = [0.0; 2];
        for r in 0..rows {
            fill(r, &mut buf);
            mu[0] += buf[0] / rows as f64;
            mu[1] += buf[1] / rows as f64;
        }
        for r in 0..rows {
            fill(r, &mut buf);
            let (a, b) = (buf[0] - mu[0], buf[1] - mu[1]);
            naive[0] += a * a;
            naive[1] += a * b;
            naive[2] += b * b;
        }
        assert!((gs.get(0, 0) - naive[0]).abs() < 1e-9);
        assert!((gs.get(0, 1) - naive[1]).abs() < 1e-9);
        assert!((gs.get(1, 0) - naive[1]).abs() < 1e-9);
        assert!((gs.get(1, 1) - naive[2]).abs() < 1e-9);
    }
}
